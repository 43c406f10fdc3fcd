//! The generation loop: reproduce, evaluate, rank, decay, cull.
//!
//! Each genome carries a population *ratio* rather than a head count. One
//! generation works like this:
//!
//! 1. The world hook fires (landscape shuffle, goal resampling).
//! 2. Every living genome gets `floor(ratio · C)` mutated children. Each child
//!    starts with a copy of its parent's ratio.
//! 3. The whole census (parents and newborns) is evaluated.
//! 4. Ratios are decayed by `(1 − D) · rank` and renormalized. Then the
//!    lowest-ranked genomes are removed until every survivor holds at least
//!    `cutoff` of the total mass.
//!
//! Under `single_genome`, step 4 keeps only the fittest genome. Under
//! `random_drift`, every rank is 1.

use crate::rng::{stream, Purpose};
use crate::stats::{average_ranks, lineage_entropy};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("invalid engine config: {field}: {message}")]
    InvalidConfig { field: &'static str, message: String },
    #[error("genome {id} produced non-finite fitness {value}")]
    NonFiniteFitness { id: u64, value: f64 },
    #[error("fitness at position {index} is not rankable: {value}")]
    Unrankable { index: usize, value: f64 },
    #[error("population is empty")]
    EmptyPopulation,
}

/// Which genomes persist from one generation to the next.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Rank-weighted ratios with extinction below the cutoff.
    PopulationBased,
    /// Greedy: only the fittest genome survives.
    SingleGenome,
    /// Every genome is ranked equal; lineages drift neutrally.
    RandomDrift,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::PopulationBased => "population_based",
            Strategy::SingleGenome => "single_genome",
            Strategy::RandomDrift => "random_drift",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    /// Fraction of population mass removed each generation before rank weighting.
    pub decay: f64,
    /// Offspring budget per generation.
    pub offspring: usize,
    /// Ratio below which a lineage goes extinct.
    pub extinction_cutoff: f64,
    pub strategy: Strategy,
    pub generations: u64,
    pub master_seed: u64,
}

impl EngineConfig {
    /// Defaults: `D = 0.25`, cutoff `1/C`.
    pub fn new(strategy: Strategy, offspring: usize, generations: u64, master_seed: u64) -> Self {
        EngineConfig {
            decay: 0.25,
            offspring,
            extinction_cutoff: 1.0 / offspring.max(1) as f64,
            strategy,
            generations,
            master_seed,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if !(0.0..1.0).contains(&self.decay) {
            return Err(EngineError::InvalidConfig {
                field: "decay",
                message: format!("{} is outside [0, 1)", self.decay),
            });
        }
        if self.offspring == 0 {
            return Err(EngineError::InvalidConfig { field: "offspring", message: "must be at least 1".into() });
        }
        if !(self.extinction_cutoff > 0.0 && self.extinction_cutoff < 1.0) {
            return Err(EngineError::InvalidConfig {
                field: "extinction_cutoff",
                message: format!("{} is outside (0, 1)", self.extinction_cutoff),
            });
        }
        Ok(())
    }
}

/// A fitness landscape plus the mutation operator for its genome type.
pub trait World: Sync {
    type Params: Clone + Send + Sync;

    /// Called once per generation before evaluation. Returns `true` when the
    /// landscape changed, which invalidates cached fitness values.
    fn begin_generation(&mut self, generation: u64, rng: &mut ChaCha8Rng) -> bool;

    fn fitness(&self, params: &Self::Params) -> f64;

    fn mutate(&self, params: &Self::Params, rng: &mut ChaCha8Rng) -> Self::Params;

    /// Names of the world-specific metrics columns.
    fn observable_columns(&self) -> Vec<String>;

    /// World-specific metrics over the evaluated census. `weights` sum to one.
    fn observables(&self, census: &[&Self::Params], weights: &[f64], fitness: &[f64]) -> Vec<f64>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Genome<P> {
    pub id: u64,
    pub parent_id: Option<u64>,
    pub birth_generation: u64,
    /// Share of the total population mass.
    pub population: f64,
    pub params: P,
    /// Fitness under the current landscape; `None` when not yet evaluated or stale.
    pub fitness: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PopulationState<P> {
    pub genomes: Vec<Genome<P>>,
    pub generation: u64,
    /// Next unused genome id.
    pub next_id: u64,
}

impl<P> PopulationState<P> {
    /// One genome with id 0 holding the whole population.
    pub fn singleton(params: P) -> Self {
        PopulationState {
            genomes: vec![Genome {
                id: 0,
                parent_id: None,
                birth_generation: 0,
                population: 1.0,
                params,
                fitness: None,
            }],
            generation: 0,
            next_id: 1,
        }
    }

    /// Builds a state from existing genomes, renormalizing their ratios.
    pub fn from_genomes(mut genomes: Vec<Genome<P>>, generation: u64) -> Result<Self, EngineError> {
        if genomes.is_empty() {
            return Err(EngineError::EmptyPopulation);
        }
        let total: f64 = genomes.iter().map(|g| g.population).sum();
        for g in &mut genomes {
            g.population /= total;
        }
        let next_id = genomes.iter().map(|g| g.id).max().unwrap_or(0) + 1;
        Ok(PopulationState { genomes, generation, next_id })
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.genomes.iter().map(|g| g.population).collect()
    }
}

/// Per-generation record. Fitness statistics and observables describe the
/// evaluated census (survivors of the previous generation plus newborns);
/// `num_genomes` and `lineage_entropy` describe the survivors.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub generation: u64,
    pub num_genomes: usize,
    pub census_size: usize,
    pub offspring: usize,
    pub weighted_mean_fitness: f64,
    pub max_fitness: f64,
    pub lineage_entropy: f64,
    pub observables: Vec<f64>,
}

/// Fractional ranks in (0, 1]: the best fitness maps to 1 and ties share the
/// mean of the ranks they span. `-inf` is accepted and ranks last; NaN and
/// `+inf` are rejected.
pub fn rank_fitness(fitness: &[f64]) -> Result<Vec<f64>, EngineError> {
    if fitness.is_empty() {
        return Err(EngineError::EmptyPopulation);
    }
    if let Some((index, &value)) = fitness.iter().enumerate().find(|(_, f)| f.is_nan() || **f == f64::INFINITY) {
        return Err(EngineError::Unrankable { index, value });
    }
    let n = fitness.len() as f64;
    Ok(average_ranks(fitness).into_iter().map(|r| r / n).collect())
}

/// Multiplies each ratio by `(1 − decay) · rank`, then removes genomes in
/// order of increasing rank (ties: smaller decayed ratio first, then larger
/// tie key) until every survivor's renormalized ratio is at least `cutoff`.
/// Returns `(index, new ratio)` for the survivors in input order. The
/// top-ranked genome always survives.
pub fn apply_decay(ratios: &[f64], ranks: &[f64], decay: f64, cutoff: f64, tie_keys: &[u64]) -> Vec<(usize, f64)> {
    assert_eq!(ratios.len(), ranks.len());
    assert_eq!(ratios.len(), tie_keys.len());
    let decayed: Vec<f64> = ratios.iter().zip(ranks).map(|(p, r)| p * (1.0 - decay) * r).collect();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        ranks[b]
            .total_cmp(&ranks[a])
            .then(decayed[b].total_cmp(&decayed[a]))
            .then(tie_keys[a].cmp(&tie_keys[b]))
            .then(a.cmp(&b))
    });

    // min/sum over a growing prefix is non-increasing, so the survivors are
    // the longest prefix that still satisfies the cutoff.
    let (mut keep, mut kept_sum) = (0, 0.0);
    let (mut sum, mut min) = (0.0, f64::INFINITY);
    for (k, &i) in order.iter().enumerate() {
        sum += decayed[i];
        min = f64::min(min, decayed[i]);
        if k == 0 || min / sum >= cutoff {
            keep = k + 1;
            kept_sum = sum;
        } else {
            break;
        }
    }
    let mut survivors: Vec<(usize, f64)> = order[..keep].iter().map(|&i| (i, decayed[i] / kept_sum)).collect();
    survivors.sort_by_key(|&(i, _)| i);
    survivors
}

/// `floor(ratio · C)` children per genome. A 1e-9 guard absorbs rounding in
/// ratios that should be exact multiples of `1/C`.
pub fn allocate_offspring(ratios: &[f64], offspring: usize) -> Vec<usize> {
    ratios.iter().map(|p| (p * offspring as f64 + 1e-9).floor().max(0.0) as usize).collect()
}

fn cmp_fitness_then_id(a: (f64, u64), b: (f64, u64)) -> Ordering {
    a.0.total_cmp(&b.0).then(b.1.cmp(&a.1))
}

/// Advances the population by one generation.
pub fn step_generation<W: World>(
    state: &mut PopulationState<W::Params>,
    world: &mut W,
    cfg: &EngineConfig,
) -> Result<MetricsRow, EngineError> {
    if state.genomes.is_empty() {
        return Err(EngineError::EmptyPopulation);
    }
    let generation = state.generation;
    let seed = cfg.master_seed;

    let mut hook_rng = stream(seed, Purpose::WorldHook, generation, 0);
    if world.begin_generation(generation, &mut hook_rng) {
        state.genomes.iter_mut().for_each(|g| g.fitness = None);
    }

    // Reproduce.
    let counts = allocate_offspring(&state.ratios(), cfg.offspring);
    let mut next_id = state.next_id;
    let mut plan = Vec::with_capacity(counts.iter().sum());
    for (parent, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            plan.push((parent, next_id));
            next_id += 1;
        }
    }
    let world_ref: &W = world;
    let parents = &state.genomes;
    let children: Vec<Genome<W::Params>> = plan
        .par_iter()
        .map(|&(p, id)| {
            let parent = &parents[p];
            let mut rng = stream(seed, Purpose::Mutation, generation, id);
            Genome {
                id,
                parent_id: Some(parent.id),
                birth_generation: generation,
                population: parent.population,
                params: world_ref.mutate(&parent.params, &mut rng),
                fitness: None,
            }
        })
        .collect();
    let offspring = children.len();

    // Evaluate the census.
    let mut census: Vec<Genome<W::Params>> = state.genomes.clone();
    census.extend(children);
    census.par_iter_mut().filter(|g| g.fitness.is_none()).for_each(|g| {
        g.fitness = Some(world_ref.fitness(&g.params));
    });
    let fitness: Vec<f64> = census.iter().map(|g| g.fitness.unwrap_or(f64::NAN)).collect();
    if let Some((g, &value)) = census.iter().zip(&fitness).find(|(_, f)| f.is_nan() || **f == f64::INFINITY) {
        return Err(EngineError::NonFiniteFitness { id: g.id, value });
    }

    let total: f64 = census.iter().map(|g| g.population).sum();
    let weights: Vec<f64> = census.iter().map(|g| g.population / total).collect();
    let weighted_mean_fitness = if fitness.contains(&f64::NEG_INFINITY) {
        f64::NEG_INFINITY
    } else {
        fitness.iter().zip(&weights).map(|(f, w)| f * w).sum()
    };
    let max_fitness = fitness.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let params: Vec<&W::Params> = census.iter().map(|g| &g.params).collect();
    let observables = world_ref.observables(&params, &weights, &fitness);

    // Select.
    let survivors: Vec<(usize, f64)> = match cfg.strategy {
        Strategy::SingleGenome => {
            let best = (0..census.len())
                .max_by(|&a, &b| cmp_fitness_then_id((fitness[a], census[a].id), (fitness[b], census[b].id)))
                .expect("census is non-empty");
            vec![(best, 1.0)]
        }
        Strategy::PopulationBased | Strategy::RandomDrift => {
            let ranks = match cfg.strategy {
                Strategy::PopulationBased => rank_fitness(&fitness)?,
                _ => vec![1.0; census.len()],
            };
            let tie_keys: Vec<u64> =
                census.iter().map(|g| stream(seed, Purpose::TieBreak, generation, g.id).random::<u64>()).collect();
            apply_decay(&weights, &ranks, cfg.decay, cfg.extinction_cutoff, &tie_keys)
        }
    };
    let census_size = census.len();
    let mut slots: Vec<Option<Genome<W::Params>>> = census.into_iter().map(Some).collect();
    state.genomes = survivors
        .iter()
        .map(|&(i, ratio)| {
            let mut g = slots[i].take().expect("survivor indices are unique");
            g.population = ratio;
            g
        })
        .collect();
    state.next_id = next_id;
    state.generation += 1;

    Ok(MetricsRow {
        generation,
        num_genomes: state.genomes.len(),
        census_size,
        offspring,
        weighted_mean_fitness,
        max_fitness,
        lineage_entropy: lineage_entropy(&state.ratios()),
        observables,
    })
}

/// Runs `cfg.generations` generations, calling `on_row` after each one.
pub fn run<W: World>(
    cfg: &EngineConfig,
    world: &mut W,
    state: &mut PopulationState<W::Params>,
    mut on_row: impl FnMut(&MetricsRow),
) -> Result<Vec<MetricsRow>, EngineError> {
    cfg.validate()?;
    let mut history = Vec::with_capacity(cfg.generations as usize);
    for _ in 0..cfg.generations {
        let row = step_generation(state, world, cfg)?;
        on_row(&row);
        history.push(row);
    }
    Ok(history)
}
