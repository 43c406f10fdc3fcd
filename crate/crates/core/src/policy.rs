//! Modular policy network.
//!
//! The network has four layers:
//!
//! ```text
//! obs ─ affine ─ tanh ─┬ module 0 ┬─ tanh ─┬ module 3 ┬─ tanh ─ affine ─ tanh ─ action
//!                      ├ module 1 ┤        ├ module 4 ┤
//!                      └ module 2 ┘        └ module 5 ┘
//!                     softmax(gate)       softmax(gate)
//! ```
//!
//! Each middle module has its own pair of log-scale mutation radii: one for
//! its weights and one for its biases. That gives 12 radii in total, and lets
//! evolution decide which parts of the network stay stable and which explore.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MODULES_PER_LAYER: usize = 3;
pub const MIDDLE_MODULES: usize = 2 * MODULES_PER_LAYER;
pub const RADII: usize = 2 * MIDDLE_MODULES;
/// Base of the per-module mutation scale `σ_base · 1.05^radius`.
pub const RADIUS_BASE: f64 = 1.05;

#[derive(Debug, Error, PartialEq)]
pub enum PolicyError {
    #[error("observation has {got} entries, network expects {expected}")]
    ObservationSize { expected: usize, got: usize },
    #[error("flat parameter vector has {got} entries, expected {expected}")]
    ParamCount { expected: usize, got: usize },
    #[error("dimensions must be positive")]
    ZeroDimension,
}

/// Mutation noise scales.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MutationScales {
    /// Noise stdev for layers 1 and 4 and the gates; base scale for modules.
    pub sigma_base: f64,
    /// Noise stdev applied to the radii themselves.
    pub sigma_meta: f64,
}

impl Default for MutationScales {
    fn default() -> Self {
        MutationScales { sigma_base: 0.02, sigma_meta: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Affine {
    /// Row-major `out × in`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Affine {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Affine { weights: vec![0.0; inputs * outputs], biases: vec![0.0; outputs] }
    }

    fn random(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let scale = 1.0 / (inputs as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * scale
            })
            .collect();
        Affine { weights, biases: vec![0.0; outputs] }
    }

    fn apply(&self, input: &[f64], out: &mut [f64]) {
        let n = input.len();
        for (o, (row, b)) in out.iter_mut().zip(self.weights.chunks_exact(n).zip(&self.biases)) {
            *o = b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FlatNet", into = "FlatNet")]
pub struct ModularPolicyNet {
    pub obs_dim: usize,
    pub hidden: usize,
    pub action_dim: usize,
    pub input: Affine,
    /// Modules 0..3 form layer 2, modules 3..6 form layer 3.
    pub modules: Vec<Affine>,
    /// Gate logits for layers 2 and 3.
    pub gates: [[f64; MODULES_PER_LAYER]; 2],
    pub output: Affine,
    /// `radii[2m]` scales module m's weight noise, `radii[2m + 1]` its bias noise.
    pub radii: [f64; RADII],
}

/// Checkpoint layout: dimensions, then all parameters flattened layer-major
/// (row-major weights followed by biases, gate logits after each middle
/// layer's modules), then the radii.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FlatNet {
    obs_dim: usize,
    hidden: usize,
    action_dim: usize,
    params: Vec<f64>,
    radii: [f64; RADII],
}

impl From<ModularPolicyNet> for FlatNet {
    fn from(net: ModularPolicyNet) -> Self {
        FlatNet {
            obs_dim: net.obs_dim,
            hidden: net.hidden,
            action_dim: net.action_dim,
            params: net.flat_params(),
            radii: net.radii,
        }
    }
}

impl TryFrom<FlatNet> for ModularPolicyNet {
    type Error = PolicyError;
    fn try_from(f: FlatNet) -> Result<Self, PolicyError> {
        let mut net = ModularPolicyNet::zeros(f.obs_dim, f.hidden, f.action_dim)?;
        net.set_flat_params(&f.params)?;
        net.radii = f.radii;
        Ok(net)
    }
}

fn softmax3(g: &[f64; MODULES_PER_LAYER]) -> [f64; MODULES_PER_LAYER] {
    let max = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = g.map(|v| (v - max).exp());
    let total: f64 = e.iter().sum();
    e.map(|v| v / total)
}

impl ModularPolicyNet {
    pub fn zeros(obs_dim: usize, hidden: usize, action_dim: usize) -> Result<Self, PolicyError> {
        if obs_dim == 0 || hidden == 0 || action_dim == 0 {
            return Err(PolicyError::ZeroDimension);
        }
        Ok(ModularPolicyNet {
            obs_dim,
            hidden,
            action_dim,
            input: Affine::zeros(obs_dim, hidden),
            modules: (0..MIDDLE_MODULES).map(|_| Affine::zeros(hidden, hidden)).collect(),
            gates: [[0.0; MODULES_PER_LAYER]; 2],
            output: Affine::zeros(hidden, action_dim),
            radii: [0.0; RADII],
        })
    }

    /// Weights ~ N(0, 1/fan_in), biases, gates and radii zero.
    pub fn init(rng: &mut ChaCha8Rng, obs_dim: usize, hidden: usize, action_dim: usize) -> Result<Self, PolicyError> {
        let mut net = Self::zeros(obs_dim, hidden, action_dim)?;
        net.input = Affine::random(obs_dim, hidden, rng);
        for m in &mut net.modules {
            *m = Affine::random(hidden, hidden, rng);
        }
        net.output = Affine::random(hidden, action_dim, rng);
        Ok(net)
    }

    pub fn param_count(&self) -> usize {
        let h = self.hidden;
        (self.obs_dim + 1) * h + MIDDLE_MODULES * (h + 1) * h + 2 * MODULES_PER_LAYER + (h + 1) * self.action_dim
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        let push = |out: &mut Vec<f64>, a: &Affine| {
            out.extend_from_slice(&a.weights);
            out.extend_from_slice(&a.biases);
        };
        push(&mut out, &self.input);
        for layer in 0..2 {
            for m in &self.modules[layer * MODULES_PER_LAYER..(layer + 1) * MODULES_PER_LAYER] {
                push(&mut out, m);
            }
            out.extend_from_slice(&self.gates[layer]);
        }
        out.extend_from_slice(&self.output.weights);
        out.extend_from_slice(&self.output.biases);
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<(), PolicyError> {
        if flat.len() != self.param_count() {
            return Err(PolicyError::ParamCount { expected: self.param_count(), got: flat.len() });
        }
        let mut rest = flat;
        let mut take = |dst: &mut [f64]| {
            let (head, tail) = rest.split_at(dst.len());
            dst.copy_from_slice(head);
            rest = tail;
        };
        take(&mut self.input.weights);
        take(&mut self.input.biases);
        for layer in 0..2 {
            for m in &mut self.modules[layer * MODULES_PER_LAYER..(layer + 1) * MODULES_PER_LAYER] {
                take(&mut m.weights);
                take(&mut m.biases);
            }
            take(&mut self.gates[layer]);
        }
        take(&mut self.output.weights);
        take(&mut self.output.biases);
        Ok(())
    }

    pub fn gate_weights(&self, layer: usize) -> [f64; MODULES_PER_LAYER] {
        softmax3(&self.gates[layer])
    }

    /// Folds each gated middle layer into one affine map. Because
    /// `Σ w_k (W_k h + b_k) = (Σ w_k W_k) h + Σ w_k b_k`, a rollout can
    /// evaluate one matrix per layer instead of three.
    pub fn compile(&self) -> CompiledPolicy {
        let fold = |layer: usize| {
            let w = self.gate_weights(layer);
            let mut out = Affine::zeros(self.hidden, self.hidden);
            for (k, m) in self.modules[layer * MODULES_PER_LAYER..(layer + 1) * MODULES_PER_LAYER].iter().enumerate() {
                out.weights.iter_mut().zip(&m.weights).for_each(|(o, v)| *o += w[k] * v);
                out.biases.iter_mut().zip(&m.biases).for_each(|(o, v)| *o += w[k] * v);
            }
            out
        };
        CompiledPolicy {
            obs_dim: self.obs_dim,
            layers: [self.input.clone(), fold(0), fold(1), self.output.clone()],
            scratch: [vec![0.0; self.hidden], vec![0.0; self.hidden]],
        }
    }

    /// Reference forward pass that evaluates every module separately.
    pub fn forward(&self, obs: &[f64]) -> Result<Vec<f64>, PolicyError> {
        if obs.len() != self.obs_dim {
            return Err(PolicyError::ObservationSize { expected: self.obs_dim, got: obs.len() });
        }
        let h = self.hidden;
        let mut x = vec![0.0; h];
        self.input.apply(obs, &mut x);
        x.iter_mut().for_each(|v| *v = v.tanh());
        let mut module_out = vec![0.0; h];
        for layer in 0..2 {
            let w = self.gate_weights(layer);
            let mut acc = vec![0.0; h];
            for (k, m) in self.modules[layer * MODULES_PER_LAYER..(layer + 1) * MODULES_PER_LAYER].iter().enumerate() {
                m.apply(&x, &mut module_out);
                acc.iter_mut().zip(&module_out).for_each(|(a, o)| *a += w[k] * o);
            }
            x = acc.into_iter().map(f64::tanh).collect();
        }
        let mut action = vec![0.0; self.action_dim];
        self.output.apply(&x, &mut action);
        Ok(action.into_iter().map(f64::tanh).collect())
    }

    /// Child network with Gaussian noise on every parameter. Middle modules
    /// use `σ_base · 1.05^radius` from the parent's radii.
    pub fn mutate(&self, scales: &MutationScales, rng: &mut ChaCha8Rng) -> Self {
        let mut child = self.clone();
        let mut perturb = |values: &mut [f64], sigma: f64| {
            for v in values {
                let z: f64 = StandardNormal.sample(rng);
                *v += sigma * z;
            }
        };
        let base = scales.sigma_base;
        perturb(&mut child.input.weights, base);
        perturb(&mut child.input.biases, base);
        for (m, module) in child.modules.iter_mut().enumerate() {
            perturb(&mut module.weights, base * RADIUS_BASE.powf(self.radii[2 * m]));
            perturb(&mut module.biases, base * RADIUS_BASE.powf(self.radii[2 * m + 1]));
        }
        for gates in &mut child.gates {
            perturb(gates, base);
        }
        perturb(&mut child.output.weights, base);
        perturb(&mut child.output.biases, base);
        perturb(&mut child.radii, scales.sigma_meta);
        child
    }
}

/// A network with the gated layers pre-folded, plus scratch buffers.
#[derive(Clone, Debug)]
pub struct CompiledPolicy {
    obs_dim: usize,
    layers: [Affine; 4],
    scratch: [Vec<f64>; 2],
}

impl CompiledPolicy {
    pub fn act(&mut self, obs: &[f64], action: &mut [f64]) -> Result<(), PolicyError> {
        if obs.len() != self.obs_dim {
            return Err(PolicyError::ObservationSize { expected: self.obs_dim, got: obs.len() });
        }
        let [a, b] = &mut self.scratch;
        self.layers[0].apply(obs, a);
        a.iter_mut().for_each(|v| *v = v.tanh());
        self.layers[1].apply(a, b);
        b.iter_mut().for_each(|v| *v = v.tanh());
        self.layers[2].apply(b, a);
        a.iter_mut().for_each(|v| *v = v.tanh());
        self.layers[3].apply(a, action);
        action.iter_mut().for_each(|v| *v = v.tanh());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use approx::assert_abs_diff_eq;

    fn net() -> ModularPolicyNet {
        ModularPolicyNet::init(&mut stream(5, Purpose::GenomeInit, 0, 0), 10, 32, 2).unwrap()
    }

    #[test]
    fn init_gates_are_uniform() {
        let n = net();
        for layer in 0..2 {
            for w in n.gate_weights(layer) {
                assert_abs_diff_eq!(w, 1.0 / 3.0, epsilon = 1e-15);
            }
        }
        assert_eq!(n.radii, [0.0; RADII]);
    }

    #[test]
    fn init_is_seed_deterministic() {
        assert_eq!(net(), net());
    }

    #[test]
    fn zero_network_outputs_zero() {
        let n = ModularPolicyNet::zeros(10, 8, 2).unwrap();
        assert_eq!(n.forward(&[0.3; 10]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn observation_size_checked() {
        assert_eq!(net().forward(&[0.0; 3]), Err(PolicyError::ObservationSize { expected: 10, got: 3 }));
        assert!(net().compile().act(&[0.0; 3], &mut [0.0; 2]).is_err());
    }

    #[test]
    fn compiled_matches_reference() {
        let mut n = net();
        n.gates = [[0.3, -1.0, 2.0], [0.0, 0.5, -0.5]];
        let obs: Vec<f64> = (0..10).map(|i| (i as f64 * 0.37).sin()).collect();
        let reference = n.forward(&obs).unwrap();
        let mut fast = [0.0; 2];
        n.compile().act(&obs, &mut fast).unwrap();
        for (a, b) in reference.iter().zip(fast) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn saturated_gate_selects_one_module() {
        let mut n = net();
        n.gates[0] = [800.0, 0.0, 0.0];
        let mut only = n.clone();
        // silence modules 1 and 2 entirely; module 0 alone must give the same output
        for m in &mut only.modules[1..3] {
            m.weights.iter_mut().for_each(|w| *w = 0.0);
        }
        let obs = [0.5; 10];
        assert_eq!(n.forward(&obs).unwrap(), only.forward(&obs).unwrap());
    }

    #[test]
    fn flat_round_trip() {
        let n = net();
        let flat = n.flat_params();
        assert_eq!(flat.len(), n.param_count());
        let mut m = ModularPolicyNet::zeros(10, 32, 2).unwrap();
        m.set_flat_params(&flat).unwrap();
        m.radii = n.radii;
        assert_eq!(m, n);
        assert!(m.set_flat_params(&flat[1..]).is_err());
    }

    #[test]
    fn mutation_leaves_parent_untouched() {
        let n = net();
        let copy = n.clone();
        let child = n.mutate(&MutationScales::default(), &mut stream(1, Purpose::Mutation, 0, 1));
        assert_eq!(n, copy);
        assert_ne!(child, n);
    }
}
