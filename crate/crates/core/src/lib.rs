//! Population-based meta learning.
//!
//! Genomes carry a population *ratio* instead of a head count. Selection
//! ranks the whole population, so lineages whose descendants keep doing well
//! hold on to their share, even if no single member is the current best.
//! Over time that pressure shapes the mutation parameters themselves. The
//! crate provides the generation engine, three worlds (numeric, square
//! lattice, planar arm) and the statistics used to evaluate trends.

pub mod engine;
pub mod numeric;
pub mod policy;
pub mod reacher;
pub mod rng;
pub mod squares;
pub mod stats;

pub use engine::{
    allocate_offspring, apply_decay, rank_fitness, run, step_generation, EngineConfig, EngineError, Genome, MetricsRow,
    PopulationState, Strategy, World,
};
