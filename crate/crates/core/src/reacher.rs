//! Two-link planar arm that must hold its fingertip on a goal point.
//!
//! Each joint is an independent damped integrator driven by a torque in
//! [−1, 1]. A policy network reads a 10-entry observation and outputs the two
//! torques. Fitness is the negated sum of fingertip-to-goal distances over a
//! fixed number of frames. The goal is resampled periodically, so a lineage is
//! rewarded for adapting quickly rather than for memorizing one target.

use crate::engine::World;
use crate::policy::{ModularPolicyNet, MutationScales};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const OBS_DIM: usize = 10;
pub const ACTION_DIM: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReacherConfig {
    pub link1: f64,
    pub link2: f64,
    pub damping: f64,
    pub inertia: f64,
    pub dt: f64,
    pub frames: usize,
    pub torque_bound: f64,
}

impl Default for ReacherConfig {
    fn default() -> Self {
        ReacherConfig { link1: 0.5, link2: 0.5, damping: 0.1, inertia: 1.0, dt: 0.05, frames: 50, torque_bound: 1.0 }
    }
}

impl ReacherConfig {
    pub fn reach(&self) -> f64 {
        self.link1 + self.link2
    }

    pub fn validate(&self) -> Result<(), String> {
        let positive = [
            ("link1", self.link1),
            ("link2", self.link2),
            ("damping", self.damping),
            ("inertia", self.inertia),
            ("dt", self.dt),
            ("torque_bound", self.torque_bound),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive, got {v}"));
            }
        }
        if self.frames == 0 {
            return Err("frames must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ArmState {
    pub theta: [f64; 2],
    pub omega: [f64; 2],
}

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w <= -PI {
        w + 2.0 * PI
    } else {
        w
    }
}

impl ArmState {
    /// One explicit Euler step: `ω ← ω + dt·(τ − bω)/I`, then `θ ← θ + ω·dt`.
    #[allow(clippy::needless_range_loop)]
    pub fn step(&self, torque: [f64; 2], cfg: &ReacherConfig) -> ArmState {
        let mut next = *self;
        for i in 0..2 {
            let tau = torque[i].clamp(-cfg.torque_bound, cfg.torque_bound);
            next.omega[i] = self.omega[i] + cfg.dt * (tau - cfg.damping * self.omega[i]) / cfg.inertia;
            next.theta[i] = wrap_angle(self.theta[i] + next.omega[i] * cfg.dt);
        }
        next
    }

    /// Fingertip from forward kinematics; the second angle is relative to the first link.
    pub fn tip(&self, cfg: &ReacherConfig) -> (f64, f64) {
        let (t1, t12) = (self.theta[0], self.theta[0] + self.theta[1]);
        (cfg.link1 * t1.cos() + cfg.link2 * t12.cos(), cfg.link1 * t1.sin() + cfg.link2 * t12.sin())
    }

    pub fn observe(&self, goal: (f64, f64), cfg: &ReacherConfig) -> [f64; OBS_DIM] {
        let (tx, ty) = self.tip(cfg);
        [
            self.theta[0].cos(),
            self.theta[0].sin(),
            self.theta[1].cos(),
            self.theta[1].sin(),
            self.omega[0],
            self.omega[1],
            goal.0,
            goal.1,
            tx - goal.0,
            ty - goal.1,
        ]
    }
}

/// Uniform over the annulus `0.2·reach ≤ ‖p‖ ≤ 0.9·reach`.
pub fn sample_goal(cfg: &ReacherConfig, rng: &mut ChaCha8Rng) -> (f64, f64) {
    let (lo, hi) = (0.2 * cfg.reach(), 0.9 * cfg.reach());
    let u: f64 = rng.random();
    let r = (lo * lo + u * (hi * hi - lo * lo)).sqrt();
    let a = rng.random::<f64>() * 2.0 * PI;
    (r * a.cos(), r * a.sin())
}

/// Negated summed fingertip distance over one episode from rest. Any
/// non-finite value yields `-inf`.
pub fn rollout(net: &ModularPolicyNet, goal: (f64, f64), cfg: &ReacherConfig) -> f64 {
    let mut policy = net.compile();
    let mut state = ArmState::default();
    let mut action = [0.0; ACTION_DIM];
    let mut total = 0.0;
    for _ in 0..cfg.frames {
        let obs = state.observe(goal, cfg);
        if policy.act(&obs, &mut action).is_err() || action.iter().any(|a| !a.is_finite()) {
            return f64::NEG_INFINITY;
        }
        state = state.step(action, cfg);
        let (tx, ty) = state.tip(cfg);
        total += (tx - goal.0).hypot(ty - goal.1);
    }
    if total.is_finite() {
        -total
    } else {
        f64::NEG_INFINITY
    }
}

/// When the goal changes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoalMode {
    /// Resampled every `goal_period` generations.
    Periodic,
    /// Drawn once and never changed.
    Static,
    /// A single goal from the held-out stream, shared by transfer and
    /// from-scratch runs of the same seed.
    HeldOut,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReacherWorld {
    pub arm: ReacherConfig,
    pub scales: MutationScales,
    pub goal_mode: GoalMode,
    pub goal_period: u64,
    pub goal: (f64, f64),
}

impl World for ReacherWorld {
    type Params = ModularPolicyNet;

    fn begin_generation(&mut self, generation: u64, rng: &mut ChaCha8Rng) -> bool {
        if self.goal_mode == GoalMode::Periodic && self.goal_period > 0 && generation.is_multiple_of(self.goal_period) {
            self.goal = sample_goal(&self.arm, rng);
            return true;
        }
        false
    }

    fn fitness(&self, net: &ModularPolicyNet) -> f64 {
        rollout(net, self.goal, &self.arm)
    }

    fn mutate(&self, net: &ModularPolicyNet, rng: &mut ChaCha8Rng) -> ModularPolicyNet {
        net.mutate(&self.scales, rng)
    }

    fn observable_columns(&self) -> Vec<String> {
        vec!["goal_x".into(), "goal_y".into()]
    }

    fn observables(&self, _: &[&ModularPolicyNet], _: &[f64], _: &[f64]) -> Vec<f64> {
        vec![self.goal.0, self.goal.1]
    }
}
