//! JSON checkpoints of a population and its world, written atomically.

use pbml_core::numeric::{NumericGenome, NumericWorld};
use pbml_core::policy::ModularPolicyNet;
use pbml_core::reacher::ReacherWorld;
use pbml_core::squares::{SquareGenome, SquareWorld};
use pbml_core::{EngineError, Genome, PopulationState, Strategy};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint i/o on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed checkpoint: {0}")]
    Format(#[from] serde_json::Error),
    #[error("checkpoint holds no genomes")]
    Empty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenomeEntry<P> {
    pub id: u64,
    pub parent_id: Option<u64>,
    pub birth_generation: u64,
    pub population: f64,
    #[serde(flatten)]
    pub params: P,
}

/// `world_kind`, run identity, the world (landscape or goal) and every living genome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<W, P> {
    pub world_kind: String,
    pub generation: u64,
    pub strategy: Strategy,
    pub method: String,
    pub master_seed: u64,
    pub next_id: u64,
    pub world: W,
    pub genomes: Vec<GenomeEntry<P>>,
}

impl<W: Clone, P: Clone> Checkpoint<W, P> {
    pub fn capture(
        world_kind: &str,
        strategy: Strategy,
        method: &str,
        master_seed: u64,
        world: &W,
        state: &PopulationState<P>,
    ) -> Self {
        Checkpoint {
            world_kind: world_kind.to_string(),
            generation: state.generation,
            strategy,
            method: method.to_string(),
            master_seed,
            next_id: state.next_id,
            world: world.clone(),
            genomes: state
                .genomes
                .iter()
                .map(|g| GenomeEntry {
                    id: g.id,
                    parent_id: g.parent_id,
                    birth_generation: g.birth_generation,
                    population: g.population,
                    params: g.params.clone(),
                })
                .collect(),
        }
    }

    /// Population with ratios renormalized (or reset to equal shares).
    pub fn population(&self, reset_ratios: bool) -> Result<PopulationState<P>, CheckpointError> {
        let genomes: Vec<Genome<P>> = self
            .genomes
            .iter()
            .map(|e| Genome {
                id: e.id,
                parent_id: e.parent_id,
                birth_generation: e.birth_generation,
                population: if reset_ratios { 1.0 } else { e.population },
                params: e.params.clone(),
                fitness: None,
            })
            .collect();
        let mut state = PopulationState::from_genomes(genomes, self.generation).map_err(|e| match e {
            EngineError::EmptyPopulation => CheckpointError::Empty,
            other => unreachable!("unexpected {other}"),
        })?;
        state.next_id = state.next_id.max(self.next_id);
        Ok(state)
    }
}

pub type NumericCheckpoint = Checkpoint<NumericWorld, NumericGenome>;
pub type SquaresCheckpoint = Checkpoint<SquareWorld, SquareGenome>;
pub type ReacherCheckpoint = Checkpoint<ReacherWorld, ModularPolicyNet>;

/// A checkpoint of any world kind.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyCheckpoint {
    Numeric(NumericCheckpoint),
    Squares(SquaresCheckpoint),
    Reacher(ReacherCheckpoint),
}

#[derive(Deserialize)]
struct KindProbe {
    world_kind: String,
}

impl AnyCheckpoint {
    pub fn world_kind(&self) -> &str {
        match self {
            AnyCheckpoint::Numeric(c) => &c.world_kind,
            AnyCheckpoint::Squares(c) => &c.world_kind,
            AnyCheckpoint::Reacher(c) => &c.world_kind,
        }
    }

    pub fn to_json(&self) -> String {
        let text = match self {
            AnyCheckpoint::Numeric(c) => serde_json::to_string(c),
            AnyCheckpoint::Squares(c) => serde_json::to_string(c),
            AnyCheckpoint::Reacher(c) => serde_json::to_string(c),
        };
        text.expect("checkpoint serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, CheckpointError> {
        let probe: KindProbe = serde_json::from_str(text)?;
        let ck = match probe.world_kind.as_str() {
            "numeric" => AnyCheckpoint::Numeric(serde_json::from_str(text)?),
            "squares" => AnyCheckpoint::Squares(serde_json::from_str(text)?),
            "reacher" => AnyCheckpoint::Reacher(serde_json::from_str(text)?),
            other => {
                return Err(CheckpointError::Format(serde::de::Error::custom(format!("unknown world_kind {other:?}"))))
            }
        };
        Ok(ck)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        write_atomic(path, self.to_json().as_bytes())
            .map_err(|source| CheckpointError::Io { path: path.display().to_string(), source })
    }
}

/// Writes to a sibling temporary file, syncs it, then renames it over the
/// target, so readers see either the old file or the complete new one.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}
