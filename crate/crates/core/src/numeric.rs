//! Numeric fitness world: fitness is the coordinate `x`, and the genome also
//! carries `r`, a log-scale gene that sets its own mutation radius `1.05^r`.
//! Fitness never looks at `r`, so any trend in `r` comes from selection on
//! descendants alone.

use crate::engine::World;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Base of the self-parametrized mutation scale.
pub const RADIUS_BASE: f64 = 1.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NumericGenome {
    pub x: f64,
    pub r: f64,
}

impl NumericGenome {
    /// The starting genome: origin, unit mutation radius.
    pub fn initial() -> Self {
        NumericGenome { x: 0.0, r: 0.0 }
    }

    pub fn fitness(&self) -> f64 {
        self.x
    }

    /// Child from explicit standard-normal draws `(n1, n2)`.
    pub fn mutate_with(&self, n1: f64, n2: f64) -> Self {
        NumericGenome { x: self.x + n1 * RADIUS_BASE.powf(self.r), r: self.r + n2 }
    }

    pub fn mutate(&self, rng: &mut ChaCha8Rng) -> Self {
        let n1: f64 = StandardNormal.sample(rng);
        let n2: f64 = StandardNormal.sample(rng);
        self.mutate_with(n1, n2)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NumericWorld;

impl World for NumericWorld {
    type Params = NumericGenome;

    fn begin_generation(&mut self, _generation: u64, _rng: &mut ChaCha8Rng) -> bool {
        false
    }

    fn fitness(&self, g: &NumericGenome) -> f64 {
        g.fitness()
    }

    fn mutate(&self, g: &NumericGenome, rng: &mut ChaCha8Rng) -> NumericGenome {
        g.mutate(rng)
    }

    fn observable_columns(&self) -> Vec<String> {
        vec!["weighted_mean_X".into(), "weighted_mean_R".into(), "max_X".into()]
    }

    fn observables(&self, census: &[&NumericGenome], weights: &[f64], _fitness: &[f64]) -> Vec<f64> {
        let mean_x = census.iter().zip(weights).map(|(g, w)| g.x * w).sum();
        let mean_r = census.iter().zip(weights).map(|(g, w)| g.r * w).sum();
        let max_x = census.iter().map(|g| g.x).fold(f64::NEG_INFINITY, f64::max);
        vec![mean_x, mean_r, max_x]
    }
}
