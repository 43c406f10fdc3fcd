//! Experiment configuration: JSON in, fully resolved JSON echoed out.

use pbml_core::policy::MutationScales;
use pbml_core::reacher::{GoalMode, ReacherConfig};
use pbml_core::squares::SquareLandscape;
use pbml_core::{EngineConfig, Strategy};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Environment variable that overrides the root directory for outputs.
pub const OUTPUT_ROOT_ENV: &str = "PBML_OUTPUT_ROOT";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config {path}: {source}")]
    Syntax { path: PathBuf, source: serde_json::Error },
    #[error("invalid config: {field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), message: message.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SquareMode {
    Standard,
    Hard,
}

fn d_spacing() -> f64 {
    9.5
}
fn d_half_width() -> f64 {
    1.5
}
fn d_bounds() -> f64 {
    256.0
}
fn d_shuffle() -> Option<u64> {
    Some(10)
}
fn d_sigma_r() -> f64 {
    0.1
}
fn d_r_outer() -> f64 {
    25.0
}
fn d_high_probability() -> f64 {
    0.1
}
fn d_true() -> bool {
    true
}
fn d_hidden() -> usize {
    32
}
fn d_goal_period() -> u64 {
    50
}
fn d_goal_mode() -> GoalMode {
    GoalMode::Periodic
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SquaresConfig {
    #[serde(default = "d_spacing")]
    pub spacing: f64,
    #[serde(default = "d_half_width")]
    pub half_width: f64,
    #[serde(default = "d_bounds")]
    pub bounds: f64,
    /// Generations between value shuffles; `null` for a static landscape.
    #[serde(default = "d_shuffle")]
    pub shuffle_period: Option<u64>,
    #[serde(default = "d_sigma_r")]
    pub sigma_r: f64,
    #[serde(default = "standard_mode")]
    pub mode: SquareMode,
    /// Hard mode: squares within this distance of the center are always low.
    #[serde(default = "d_r_outer")]
    pub r_outer: f64,
    /// Hard mode: chance that an outer square is high.
    #[serde(default = "d_high_probability")]
    pub high_probability: f64,
    /// Transfer: move every genome to the start square before evolving.
    #[serde(default = "d_true")]
    pub reset_positions: bool,
}

fn standard_mode() -> SquareMode {
    SquareMode::Standard
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReacherWorldConfig {
    #[serde(default)]
    pub arm: ReacherConfig,
    #[serde(default = "d_hidden")]
    pub hidden: usize,
    #[serde(default)]
    pub mutation: MutationScales,
    #[serde(default = "d_goal_mode")]
    pub goal_mode: GoalMode,
    #[serde(default = "d_goal_period")]
    pub goal_period: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorldConfig {
    Numeric {},
    Squares(SquaresConfig),
    Reacher(ReacherWorldConfig),
}

impl WorldConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            WorldConfig::Numeric {} => "numeric",
            WorldConfig::Squares(_) => "squares",
            WorldConfig::Reacher(_) => "reacher",
        }
    }

    fn default_offspring(&self) -> usize {
        match self {
            WorldConfig::Reacher(_) => 200,
            _ => 1000,
        }
    }

    fn default_generations(&self) -> u64 {
        match self {
            WorldConfig::Numeric {} => 500,
            _ => 1000,
        }
    }
}

fn d_strategy() -> Strategy {
    Strategy::PopulationBased
}
fn d_decay() -> f64 {
    0.25
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineSettings {
    #[serde(default = "d_strategy")]
    pub strategy: Strategy,
    #[serde(default = "d_decay")]
    pub decay: f64,
    /// Defaults to 1000 (200 for the reacher world).
    #[serde(default)]
    pub offspring: Option<usize>,
    /// Defaults to `1 / offspring`.
    #[serde(default)]
    pub extinction_cutoff: Option<f64>,
    /// Defaults to 500 for the numeric world, 1000 otherwise.
    #[serde(default)]
    pub generations: Option<u64>,
}

impl Default for EngineSettings {
    fn default() -> Self {
        EngineSettings {
            strategy: d_strategy(),
            decay: d_decay(),
            offspring: None,
            extinction_cutoff: None,
            generations: None,
        }
    }
}

fn d_seeds() -> Vec<u64> {
    vec![0]
}
fn d_output_dir() -> String {
    "runs".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub world: WorldConfig,
    #[serde(default)]
    pub engine: EngineSettings,
    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    /// Relative paths are resolved against the output root.
    #[serde(default = "d_output_dir")]
    pub output_dir: String,
    /// Method name written to metrics; defaults to the strategy name.
    #[serde(default)]
    pub label: Option<String>,
    /// Evaluation threads; `null` uses every available core.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Transfer: give every loaded genome an equal ratio instead of
    /// renormalizing the checkpoint's ratios.
    #[serde(default)]
    pub reset_ratios: bool,
}

impl RunConfig {
    pub fn from_json(text: &str, path: &Path) -> Result<Self, ConfigError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|source| ConfigError::Syntax { path: path.to_path_buf(), source })?;
        cfg.resolve()
    }

    /// Reads, validates and fills defaults.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text, path)
    }

    /// Fills world-dependent defaults and validates every field.
    pub fn resolve(mut self) -> Result<Self, ConfigError> {
        let e = &mut self.engine;
        let offspring = *e.offspring.get_or_insert(self.world.default_offspring());
        if offspring == 0 {
            return Err(invalid("engine.offspring", "must be at least 1"));
        }
        e.extinction_cutoff.get_or_insert(1.0 / offspring as f64);
        e.generations.get_or_insert(self.world.default_generations());
        self.label.get_or_insert_with(|| self.engine.strategy.name().to_string());
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.engine_config(0).validate().map_err(|err| match err {
            pbml_core::EngineError::InvalidConfig { field, message } => invalid(&format!("engine.{field}"), message),
            other => invalid("engine", other.to_string()),
        })?;
        if self.seeds.is_empty() {
            return Err(invalid("seeds", "must list at least one seed"));
        }
        let mut seen = HashSet::new();
        if let Some(dup) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return Err(invalid("seeds", format!("seed {dup} is listed twice")));
        }
        if self.output_dir.trim().is_empty() {
            return Err(invalid("output_dir", "must not be empty"));
        }
        if self.threads == Some(0) {
            return Err(invalid("threads", "must be at least 1"));
        }
        if self.label.as_deref().is_some_and(|l| l.is_empty() || l.contains([',', '"', '\n'])) {
            return Err(invalid("label", "must be non-empty plain text"));
        }
        match &self.world {
            WorldConfig::Numeric {} => {}
            WorldConfig::Squares(s) => {
                let mut probe = pbml_core::rng::stream(0, pbml_core::rng::Purpose::WorldInit, 0, 0);
                SquareLandscape::build(s.spacing, s.half_width, s.bounds, &mut probe)
                    .map_err(|e| invalid("world.spacing", e.to_string()))?;
                if !(s.sigma_r >= 0.0 && s.sigma_r.is_finite()) {
                    return Err(invalid("world.sigma_r", "must be a finite non-negative number"));
                }
                if s.shuffle_period == Some(0) {
                    return Err(invalid("world.shuffle_period", "must be positive or null"));
                }
                if !(0.0..=1.0).contains(&s.high_probability) {
                    return Err(invalid("world.high_probability", "must lie in [0, 1]"));
                }
                if s.r_outer.is_nan() || s.r_outer < 0.0 {
                    return Err(invalid("world.r_outer", "must be non-negative"));
                }
                if s.mode == SquareMode::Hard && s.shuffle_period.is_some() {
                    return Err(invalid("world.shuffle_period", "hard mode keeps its landscape fixed; use null"));
                }
            }
            WorldConfig::Reacher(r) => {
                r.arm.validate().map_err(|m| invalid("world.arm", m))?;
                if r.hidden == 0 {
                    return Err(invalid("world.hidden", "must be positive"));
                }
                let m = r.mutation;
                if !(m.sigma_base >= 0.0 && m.sigma_base.is_finite() && m.sigma_meta >= 0.0 && m.sigma_meta.is_finite())
                {
                    return Err(invalid("world.mutation", "noise scales must be finite and non-negative"));
                }
                if r.goal_period == 0 {
                    return Err(invalid("world.goal_period", "must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Engine parameters for one seed (valid only after `resolve`).
    pub fn engine_config(&self, master_seed: u64) -> EngineConfig {
        let offspring = self.engine.offspring.unwrap_or(1000);
        EngineConfig {
            decay: self.engine.decay,
            offspring,
            extinction_cutoff: self.engine.extinction_cutoff.unwrap_or(1.0 / offspring.max(1) as f64),
            strategy: self.engine.strategy,
            generations: self.engine.generations.unwrap_or(0),
            master_seed,
        }
    }

    pub fn method(&self) -> &str {
        self.label.as_deref().unwrap_or(self.engine.strategy.name())
    }

    /// Output directory, honoring the output-root environment override.
    pub fn output_path(&self) -> PathBuf {
        output_root().join(&self.output_dir)
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

pub fn output_root() -> PathBuf {
    std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("."))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        RunConfig::from_json(text, Path::new("test.json"))
    }

    #[test]
    fn minimal_numeric_defaults() {
        let cfg = parse(r#"{"world": {"kind": "numeric"}}"#).unwrap();
        let e = cfg.engine_config(0);
        assert_eq!(e.decay, 0.25);
        assert_eq!(e.offspring, 1000);
        assert_eq!(e.extinction_cutoff, 0.001);
        assert_eq!(e.generations, 500);
        assert_eq!(e.strategy, Strategy::PopulationBased);
        assert_eq!(cfg.method(), "population_based");
    }

    #[test]
    fn reacher_defaults() {
        let cfg = parse(r#"{"world": {"kind": "reacher"}}"#).unwrap();
        assert_eq!(cfg.engine_config(0).offspring, 200);
        assert_eq!(cfg.engine_config(0).extinction_cutoff, 0.005);
        let WorldConfig::Reacher(r) = &cfg.world else { panic!() };
        assert_eq!(r.hidden, 32);
        assert_eq!(r.arm.frames, 50);
        assert_eq!(r.goal_period, 50);
        assert_eq!(r.mutation, MutationScales { sigma_base: 0.02, sigma_meta: 0.5 });
    }

    #[test]
    fn decay_out_of_range_rejected() {
        let err = parse(r#"{"world": {"kind": "numeric"}, "engine": {"decay": 1.5}}"#).unwrap_err();
        assert!(matches!(&err, ConfigError::Invalid { field, .. } if field == "engine.decay"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = parse(r#"{"world": {"kind": "numeric"}, "mutaton_rate": 3}"#).unwrap_err();
        assert!(err.to_string().contains("mutaton_rate"), "{err}");
        let err = parse(r#"{"world": {"kind": "squares", "spacin": 3}}"#).unwrap_err();
        assert!(err.to_string().contains("spacin"), "{err}");
        let err = parse(r#"{"world": {"kind": "numeric"}, "engine": {"decay_ratio": 0.1}}"#).unwrap_err();
        assert!(err.to_string().contains("decay_ratio"), "{err}");
    }

    #[test]
    fn duplicate_seeds_rejected() {
        let err = parse(r#"{"world": {"kind": "numeric"}, "seeds": [1, 2, 1]}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref field, .. } if field == "seeds"));
        assert!(parse(r#"{"world": {"kind": "numeric"}, "seeds": []}"#).is_err());
    }

    #[test]
    fn hard_mode_cannot_shuffle() {
        assert!(parse(r#"{"world": {"kind": "squares", "mode": "hard"}}"#).is_err());
        assert!(parse(r#"{"world": {"kind": "squares", "mode": "hard", "shuffle_period": null}}"#).is_ok());
    }

    #[test]
    fn bad_lattice_rejected() {
        let err = parse(r#"{"world": {"kind": "squares", "spacing": 2.0}}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { ref field, .. } if field == "world.spacing"));
    }

    #[test]
    fn resolved_config_reparses_identically() {
        let cfg = parse(r#"{"world": {"kind": "squares", "shuffle_period": null}, "label": "static"}"#).unwrap();
        let echoed = parse(&cfg.to_pretty_json()).unwrap();
        assert_eq!(echoed, cfg);
        assert!(cfg.to_pretty_json().contains("\"extinction_cutoff\": 0.001"));
    }

    #[test]
    fn malformed_syntax_reported() {
        assert!(matches!(parse("{\"world\": "), Err(ConfigError::Syntax { .. })));
    }
}
