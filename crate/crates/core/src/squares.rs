//! Square fitness world: a triangular lattice of small squares on a 256×256
//! plane, each holding a fitness value; everything between squares scores 0.
//!
//! A genome is a position plus 16 logits. Their softmax is the probability of
//! jumping `k` units (k = 0..15) in a uniformly random direction when
//! reproducing. Periodic value shuffles reward genomes that learn to keep some
//! children in place and send others to the neighboring squares.

use crate::engine::World;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

pub const RADIUS_BINS: usize = 16;
pub const LOW_VALUE: f64 = 0.3;
pub const HIGH_VALUE: f64 = 1.0;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("spacing {spacing} must exceed twice the half-width {half_width}")]
    TooTight { spacing: f64, half_width: f64 },
    #[error("squares overlap between rows at spacing {0}")]
    RowOverlap(f64),
    #[error("lattice has only {0} squares, need at least 7")]
    TooFew(usize),
    #[error("landscape has {got} values but geometry has {expected} squares")]
    ValueCount { expected: usize, got: usize },
    #[error("invalid parameter: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq)]
struct Row {
    start: usize,
    len: usize,
    x0: f64,
    y: f64,
}

/// The lattice geometry plus one value per square.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LandscapeRecord", into = "LandscapeRecord")]
pub struct SquareLandscape {
    spacing: f64,
    half_width: f64,
    bounds: f64,
    rows: Vec<Row>,
    centers: Vec<(f64, f64)>,
    values: Vec<f64>,
}

/// Serialized form: geometry parameters and `(center x, center y, half-width, value)` per square.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LandscapeRecord {
    spacing: f64,
    half_width: f64,
    bounds: f64,
    squares: Vec<(f64, f64, f64, f64)>,
}

impl From<SquareLandscape> for LandscapeRecord {
    fn from(l: SquareLandscape) -> Self {
        LandscapeRecord {
            spacing: l.spacing,
            half_width: l.half_width,
            bounds: l.bounds,
            squares: l.centers.iter().zip(&l.values).map(|(&(x, y), &v)| (x, y, l.half_width, v)).collect(),
        }
    }
}

impl TryFrom<LandscapeRecord> for SquareLandscape {
    type Error = LatticeError;
    fn try_from(r: LandscapeRecord) -> Result<Self, LatticeError> {
        let mut land = SquareLandscape::geometry(r.spacing, r.half_width, r.bounds)?;
        if r.squares.len() != land.centers.len() {
            return Err(LatticeError::ValueCount { expected: land.centers.len(), got: r.squares.len() });
        }
        land.values = r.squares.iter().map(|s| s.3).collect();
        Ok(land)
    }
}

impl SquareLandscape {
    fn geometry(spacing: f64, half_width: f64, bounds: f64) -> Result<Self, LatticeError> {
        if !(spacing.is_finite() && half_width > 0.0 && bounds > 0.0 && bounds.is_finite()) {
            return Err(LatticeError::Invalid(format!("spacing {spacing}, half-width {half_width}, bounds {bounds}")));
        }
        if spacing <= 2.0 * half_width {
            return Err(LatticeError::TooTight { spacing, half_width });
        }
        let pitch = spacing * 3f64.sqrt() / 2.0;
        if pitch <= 2.0 * half_width && spacing / 2.0 <= 2.0 * half_width {
            return Err(LatticeError::RowOverlap(spacing));
        }
        let mut rows = Vec::new();
        let mut centers = Vec::new();
        let limit = bounds - half_width;
        let mut j = 0usize;
        loop {
            let y = half_width + j as f64 * pitch;
            if y > limit {
                break;
            }
            let x0 = half_width + if j % 2 == 1 { spacing / 2.0 } else { 0.0 };
            let len = if x0 <= limit { ((limit - x0) / spacing).floor() as usize + 1 } else { 0 };
            rows.push(Row { start: centers.len(), len, x0, y });
            centers.extend((0..len).map(|i| (x0 + i as f64 * spacing, y)));
            j += 1;
        }
        if centers.len() < 7 {
            return Err(LatticeError::TooFew(centers.len()));
        }
        let values = vec![0.0; centers.len()];
        Ok(SquareLandscape { spacing, half_width, bounds, rows, centers, values })
    }

    /// Triangular lattice with each value uniform in [0.3, 1.0].
    pub fn build(spacing: f64, half_width: f64, bounds: f64, rng: &mut ChaCha8Rng) -> Result<Self, LatticeError> {
        let mut land = Self::geometry(spacing, half_width, bounds)?;
        for v in &mut land.values {
            *v = rng.random_range(LOW_VALUE..=HIGH_VALUE);
        }
        Ok(land)
    }

    /// Same geometry, but only squares farther than `r_outer` from the
    /// center may be high (1.0, with probability `high_probability`); all
    /// others are 0.3.
    pub fn build_hard(
        spacing: f64,
        half_width: f64,
        bounds: f64,
        r_outer: f64,
        high_probability: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, LatticeError> {
        let mut land = Self::geometry(spacing, half_width, bounds)?;
        let c = bounds / 2.0;
        for (v, &(x, y)) in land.values.iter_mut().zip(&land.centers) {
            let outer = (x - c).hypot(y - c) > r_outer;
            *v = if outer && rng.random::<f64>() < high_probability { HIGH_VALUE } else { LOW_VALUE };
        }
        Ok(land)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[(f64, f64)] {
        &self.centers
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn set_values(&mut self, values: Vec<f64>) -> Result<(), LatticeError> {
        if values.len() != self.len() {
            return Err(LatticeError::ValueCount { expected: self.len(), got: values.len() });
        }
        self.values = values;
        Ok(())
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn bounds(&self) -> f64 {
        self.bounds
    }

    /// Index of the square containing `(x, y)`, if any.
    pub fn square_at(&self, x: f64, y: f64) -> Option<usize> {
        if !(x >= 0.0 && y >= 0.0 && x <= self.bounds && y <= self.bounds) {
            return None;
        }
        let pitch = self.spacing * 3f64.sqrt() / 2.0;
        let j0 = ((y - self.half_width) / pitch).round() as i64;
        for j in j0 - 1..=j0 + 1 {
            let Some(row) = usize::try_from(j).ok().and_then(|j| self.rows.get(j)) else {
                continue;
            };
            let i = ((x - row.x0) / self.spacing).round();
            if i < 0.0 || i >= row.len as f64 {
                continue;
            }
            let cx = row.x0 + i * self.spacing;
            if (x - cx).abs() <= self.half_width && (y - row.y).abs() <= self.half_width {
                return Some(row.start + i as usize);
            }
        }
        None
    }

    /// Value of the square containing the point, 0 between squares and out of bounds.
    pub fn fitness_at(&self, x: f64, y: f64) -> f64 {
        self.square_at(x, y).map_or(0.0, |i| self.values[i])
    }

    /// Index of the square whose center is nearest the point (lowest index on ties).
    pub fn nearest(&self, x: f64, y: f64) -> usize {
        let d = |i: usize| (self.centers[i].0 - x).hypot(self.centers[i].1 - y);
        (0..self.len()).min_by(|&a, &b| d(a).total_cmp(&d(b))).expect("lattice is non-empty")
    }

    /// Uniform random permutation of the values across squares.
    pub fn shuffle(&mut self, rng: &mut ChaCha8Rng) {
        self.values.shuffle(rng);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquareGenome {
    pub x: f64,
    pub y: f64,
    /// Radius logits; softmax gives the probability of a jump of k units.
    pub logits: [f64; RADIUS_BINS],
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

impl SquareGenome {
    pub fn radius_probabilities(&self) -> Vec<f64> {
        softmax(&self.logits)
    }

    /// Radius index whose cumulative probability first exceeds `u ∈ [0, 1)`.
    pub fn radius_for(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (k, p) in self.radius_probabilities().iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        RADIUS_BINS - 1
    }

    /// Child at `k` units in direction `theta`, with the given logit noise added.
    pub fn child(&self, k: usize, theta: f64, logit_noise: &[f64; RADIUS_BINS]) -> Self {
        let d = k as f64;
        let mut logits = self.logits;
        logits.iter_mut().zip(logit_noise).for_each(|(l, n)| *l += n);
        SquareGenome { x: self.x + d * theta.cos(), y: self.y + d * theta.sin(), logits }
    }

    pub fn mutate(&self, sigma_r: f64, rng: &mut ChaCha8Rng) -> Self {
        let k = self.radius_for(rng.random::<f64>());
        let theta = rng.random::<f64>() * 2.0 * PI;
        let mut noise = [0.0; RADIUS_BINS];
        for n in &mut noise {
            let z: f64 = StandardNormal.sample(rng);
            *n = sigma_r * z;
        }
        self.child(k, theta, &noise)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SquareWorld {
    pub landscape: SquareLandscape,
    /// Generations between value shuffles; `None` keeps the landscape static.
    pub shuffle_period: Option<u64>,
    /// Standard deviation of the per-logit mutation noise.
    pub sigma_r: f64,
}

impl SquareWorld {
    /// Genome on the square nearest the center of the plane, uniform radius distribution.
    pub fn start_genome(&self) -> SquareGenome {
        let c = self.landscape.bounds() / 2.0;
        let (x, y) = self.landscape.centers()[self.landscape.nearest(c, c)];
        SquareGenome { x, y, logits: [0.0; RADIUS_BINS] }
    }
}

impl World for SquareWorld {
    type Params = SquareGenome;

    fn begin_generation(&mut self, generation: u64, rng: &mut ChaCha8Rng) -> bool {
        match self.shuffle_period {
            Some(p) if p > 0 && generation.is_multiple_of(p) => {
                self.landscape.shuffle(rng);
                true
            }
            _ => false,
        }
    }

    fn fitness(&self, g: &SquareGenome) -> f64 {
        self.landscape.fitness_at(g.x, g.y)
    }

    fn mutate(&self, g: &SquareGenome, rng: &mut ChaCha8Rng) -> SquareGenome {
        g.mutate(self.sigma_r, rng)
    }

    fn observable_columns(&self) -> Vec<String> {
        (0..RADIUS_BINS).map(|k| format!("p{k}")).collect()
    }

    fn observables(&self, census: &[&SquareGenome], weights: &[f64], _fitness: &[f64]) -> Vec<f64> {
        let mut mass = vec![0.0; RADIUS_BINS];
        for (g, w) in census.iter().zip(weights) {
            for (m, p) in mass.iter_mut().zip(g.radius_probabilities()) {
                *m += w * p;
            }
        }
        mass
    }
}
