//! Seeded runs, transfers and their on-disk artifacts.

use crate::checkpoint::{write_atomic, AnyCheckpoint, Checkpoint, CheckpointError};
use crate::config::{ConfigError, ReacherWorldConfig, RunConfig, SquareMode, SquaresConfig, WorldConfig};
use crate::metrics::MetricsLog;
use pbml_core::numeric::{NumericGenome, NumericWorld};
use pbml_core::policy::ModularPolicyNet;
use pbml_core::reacher::{sample_goal, GoalMode, ReacherWorld, ACTION_DIM, OBS_DIM};
use pbml_core::rng::{stream, Purpose};
use pbml_core::squares::{LatticeError, SquareLandscape, SquareWorld};
use pbml_core::{EngineConfig, EngineError, MetricsRow, PopulationState, World};
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.json";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot transfer a {from} checkpoint into a {to} world")]
    Incompatible { from: String, to: String },
    #[error("world construction failed: {0}")]
    World(#[from] LatticeError),
    #[error("world construction failed: {0}")]
    Policy(#[from] pbml_core::policy::PolicyError),
    #[error("run failed: {0}")]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot build thread pool: {0}")]
    Threads(#[from] rayon::ThreadPoolBuildError),
}

impl HarnessError {
    /// Process exit code: 1 for problems with the inputs, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Incompatible { .. } => 1,
            _ => 2,
        }
    }
}

/// The outcome of one seeded run held in memory.
#[derive(Clone, Debug)]
pub struct Simulation {
    pub log: MetricsLog,
    pub checkpoint: AnyCheckpoint,
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    match threads {
        Some(n) => Ok(rayon::ThreadPoolBuilder::new().num_threads(n).build()?.install(f)),
        None => Ok(f()),
    }
}

fn evolve<W: World + Send>(
    world: &mut W,
    state: &mut PopulationState<W::Params>,
    engine: &EngineConfig,
    threads: Option<usize>,
) -> Result<Vec<MetricsRow>, HarnessError> {
    Ok(with_threads(threads, || pbml_core::run(engine, world, state, |_| {}))??)
}

pub fn build_square_world(s: &SquaresConfig, seed: u64) -> Result<SquareWorld, HarnessError> {
    let landscape = match s.mode {
        SquareMode::Standard => {
            SquareLandscape::build(s.spacing, s.half_width, s.bounds, &mut stream(seed, Purpose::WorldInit, 0, 0))?
        }
        SquareMode::Hard => SquareLandscape::build_hard(
            s.spacing,
            s.half_width,
            s.bounds,
            s.r_outer,
            s.high_probability,
            &mut stream(seed, Purpose::HardLandscape, 0, 0),
        )?,
    };
    Ok(SquareWorld { landscape, shuffle_period: s.shuffle_period, sigma_r: s.sigma_r })
}

pub fn build_reacher_world(r: &ReacherWorldConfig, seed: u64) -> ReacherWorld {
    let purpose = if r.goal_mode == GoalMode::HeldOut { Purpose::HeldOutGoal } else { Purpose::WorldInit };
    let goal = sample_goal(&r.arm, &mut stream(seed, purpose, 0, 0));
    ReacherWorld { arm: r.arm, scales: r.mutation, goal_mode: r.goal_mode, goal_period: r.goal_period, goal }
}

fn finish<W: World + Clone>(
    kind: &str,
    method: &str,
    engine: &EngineConfig,
    world: &W,
    state: &PopulationState<W::Params>,
    rows: Vec<MetricsRow>,
) -> (MetricsLog, Checkpoint<W, W::Params>) {
    let log = MetricsLog {
        method: method.to_string(),
        strategy: engine.strategy.name().to_string(),
        seed: engine.master_seed,
        world_columns: world.observable_columns(),
        rows,
    };
    (log, Checkpoint::capture(kind, engine.strategy, method, engine.master_seed, world, state))
}

/// Runs one seed of a resolved config from its initial genome.
pub fn simulate(cfg: &RunConfig, seed: u64) -> Result<Simulation, HarnessError> {
    let engine = cfg.engine_config(seed);
    let method = cfg.method();
    let (log, checkpoint) = match &cfg.world {
        WorldConfig::Numeric {} => {
            let mut world = NumericWorld;
            let mut state = PopulationState::singleton(NumericGenome::initial());
            let rows = evolve(&mut world, &mut state, &engine, cfg.threads)?;
            let (log, ck) = finish("numeric", method, &engine, &world, &state, rows);
            (log, AnyCheckpoint::Numeric(ck))
        }
        WorldConfig::Squares(s) => {
            let mut world = build_square_world(s, seed)?;
            let mut state = PopulationState::singleton(world.start_genome());
            let rows = evolve(&mut world, &mut state, &engine, cfg.threads)?;
            let (log, ck) = finish("squares", method, &engine, &world, &state, rows);
            (log, AnyCheckpoint::Squares(ck))
        }
        WorldConfig::Reacher(r) => {
            let mut world = build_reacher_world(r, seed);
            let net =
                ModularPolicyNet::init(&mut stream(seed, Purpose::GenomeInit, 0, 0), OBS_DIM, r.hidden, ACTION_DIM)?;
            let mut state = PopulationState::singleton(net);
            let rows = evolve(&mut world, &mut state, &engine, cfg.threads)?;
            let (log, ck) = finish("reacher", method, &engine, &world, &state, rows);
            (log, AnyCheckpoint::Reacher(ck))
        }
    };
    Ok(Simulation { log, checkpoint })
}

/// Continues evolution of a checkpointed population in a new world.
///
/// The generation counter restarts at 0. The strategy and method label come
/// from the checkpoint; the offspring budget, decay and cutoff come from
/// `target`. Supported pairs are squares → hard squares and reacher → reacher.
pub fn transfer(ck: &AnyCheckpoint, target: &RunConfig, generations: u64) -> Result<Simulation, HarnessError> {
    let incompatible = || HarnessError::Incompatible {
        from: ck.world_kind().to_string(),
        to: match &target.world {
            WorldConfig::Squares(s) if s.mode == SquareMode::Standard => "standard squares".to_string(),
            w => w.kind().to_string(),
        },
    };
    let engine_for = |seed, strategy| EngineConfig { strategy, generations, ..target.engine_config(seed) };
    let (log, checkpoint) = match (ck, &target.world) {
        (AnyCheckpoint::Squares(c), WorldConfig::Squares(s)) if s.mode == SquareMode::Hard => {
            let engine = engine_for(c.master_seed, c.strategy);
            let mut world = build_square_world(s, c.master_seed)?;
            let mut state = c.population(target.reset_ratios)?;
            state.generation = 0;
            if s.reset_positions {
                let start = world.start_genome();
                for g in &mut state.genomes {
                    g.params.x = start.x;
                    g.params.y = start.y;
                }
            }
            let rows = evolve(&mut world, &mut state, &engine, target.threads)?;
            let (log, ck) = finish("squares", &c.method, &engine, &world, &state, rows);
            (log, AnyCheckpoint::Squares(ck))
        }
        (AnyCheckpoint::Reacher(c), WorldConfig::Reacher(r)) => {
            let engine = engine_for(c.master_seed, c.strategy);
            let mut world = build_reacher_world(r, c.master_seed);
            let mut state = c.population(target.reset_ratios)?;
            state.generation = 0;
            let rows = evolve(&mut world, &mut state, &engine, target.threads)?;
            let (log, ck) = finish("reacher", &c.method, &engine, &world, &state, rows);
            (log, AnyCheckpoint::Reacher(ck))
        }
        _ => return Err(incompatible()),
    };
    Ok(Simulation { log, checkpoint })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.to_path_buf(), source }
}

fn write_outputs(dir: &Path, sim: &Simulation) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let metrics = dir.join(METRICS_FILE);
    write_atomic(&metrics, &sim.log.to_csv()).map_err(io_err(&metrics))?;
    sim.checkpoint.save(&dir.join(CHECKPOINT_FILE))?;
    Ok(dir.to_path_buf())
}

fn write_resolved(dir: &Path, cfg: &RunConfig) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(RESOLVED_CONFIG_FILE);
    write_atomic(&path, cfg.to_pretty_json().as_bytes()).map_err(io_err(&path))
}

pub fn seed_dir(root: &Path, seed: u64) -> PathBuf {
    root.join(format!("seed_{seed}"))
}

/// Runs every seed (shifted by `seed_offset`) and writes, per seed,
/// `seed_<s>/metrics.csv` and `seed_<s>/checkpoint.json` under the output
/// directory, plus `resolved_config.json`. Returns the per-seed directories.
pub fn run_experiment(cfg: &RunConfig, seed_offset: u64) -> Result<Vec<PathBuf>, HarnessError> {
    let out = cfg.output_path();
    write_resolved(&out, cfg)?;
    cfg.seeds
        .iter()
        .map(|&s| {
            let seed = s.wrapping_add(seed_offset);
            let sim = simulate(cfg, seed)?;
            write_outputs(&seed_dir(&out, seed), &sim)
        })
        .collect()
}

/// Loads a checkpoint, transfers it and writes the outputs under the
/// target's output directory, in the checkpoint seed's subdirectory.
pub fn run_transfer(checkpoint: &Path, target: &RunConfig, generations: u64) -> Result<PathBuf, HarnessError> {
    let ck = AnyCheckpoint::load(checkpoint)?;
    let sim = transfer(&ck, target, generations)?;
    let out = target.output_path();
    let mut resolved = target.clone();
    resolved.engine.generations = Some(generations);
    write_resolved(&out, &resolved)?;
    write_outputs(&seed_dir(&out, sim.log.seed), &sim)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> RunConfig {
        RunConfig::from_json(text, Path::new("inline")).unwrap()
    }

    #[test]
    fn numeric_run_shape() {
        let c = cfg(r#"{"world": {"kind": "numeric"}, "engine": {"offspring": 50, "generations": 30}}"#);
        let sim = simulate(&c, 4).unwrap();
        assert_eq!(sim.log.rows.len(), 30);
        assert_eq!(sim.log.world_columns, vec!["weighted_mean_X", "weighted_mean_R", "max_X"]);
        let AnyCheckpoint::Numeric(ck) = &sim.checkpoint else { panic!("wrong kind") };
        assert_eq!(ck.generation, 30);
        assert_eq!(ck.master_seed, 4);
    }

    #[test]
    fn numeric_checkpoint_cannot_enter_hard_squares() {
        let c = cfg(r#"{"world": {"kind": "numeric"}, "engine": {"offspring": 10, "generations": 2}}"#);
        let sim = simulate(&c, 0).unwrap();
        let hard = cfg(r#"{"world": {"kind": "squares", "mode": "hard", "shuffle_period": null}}"#);
        let err = transfer(&sim.checkpoint, &hard, 5).unwrap_err();
        assert!(matches!(err, HarnessError::Incompatible { .. }));
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn squares_need_hard_target() {
        let c = cfg(r#"{"world": {"kind": "squares"}, "engine": {"offspring": 20, "generations": 3}}"#);
        let sim = simulate(&c, 0).unwrap();
        assert!(matches!(transfer(&sim.checkpoint, &c, 3), Err(HarnessError::Incompatible { .. })));
    }

    #[test]
    fn square_transfer_restarts_generations_and_resets_positions() {
        let c = cfg(r#"{"world": {"kind": "squares"}, "engine": {"offspring": 50, "generations": 20}}"#);
        let sim = simulate(&c, 2).unwrap();
        let hard = cfg(
            r#"{"world": {"kind": "squares", "mode": "hard", "shuffle_period": null}, "engine": {"offspring": 50}}"#,
        );
        let out = transfer(&sim.checkpoint, &hard, 0).unwrap();
        assert!(out.log.rows.is_empty());
        let AnyCheckpoint::Squares(ck) = &out.checkpoint else { panic!("wrong kind") };
        assert_eq!(ck.generation, 0);
        let start = build_square_world(
            match &hard.world {
                WorldConfig::Squares(s) => s,
                _ => unreachable!(),
            },
            2,
        )
        .unwrap()
        .start_genome();
        assert!(ck.genomes.iter().all(|g| g.params.x == start.x && g.params.y == start.y));
    }
}
