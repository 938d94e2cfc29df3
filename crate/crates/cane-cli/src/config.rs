//! Experiment configuration files (TOML).
//!
//! A config names the scenario, the players, the traces, which allocators to
//! compare, and every numeric knob. Relative paths inside a config resolve
//! against the config file's directory. See `configs/` in the repository for
//! complete scenario files.

use std::fmt;
use std::path::{Path, PathBuf};

use cane_core::abr::{AbrConfig, BitrateLadder};
use cane_core::controller::{ControllerConfig, SolverConfig};
use cane_core::qoe::QoeParams;
use cane_core::sim::{EstimationNoise, PlayerSpec};
use cane_core::trace::{PredictorConfig, PredictorKind};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone)]
pub struct ConfigError {
    /// Dotted field path, e.g. `players[2].eta`.
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config error at {}: {}", self.path, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn err(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError { path: path.into(), message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AllocatorKind {
    /// No shaping; players contend for the link.
    Pure,
    /// Equal split every step.
    Uniform,
    /// The model-predictive allocator.
    Cane,
}

impl AllocatorKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AllocatorKind::Pure => "pure",
            AllocatorKind::Uniform => "uniform",
            AllocatorKind::Cane => "cane",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub scenario: String,
    pub seed: u64,
    pub allocators: Vec<AllocatorKind>,
    pub out_dir: String,
    #[serde(default = "default_delta_t")]
    pub delta_t_s: f64,
    /// Steps per session; omitted means the full trace.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

fn default_delta_t() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TracesSection {
    /// Directory of `*.txt` traces, loaded in sorted order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Explicit trace files, used in the order given.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QoeSection {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSection {
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSection {
    pub levels_kbps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    pub t_p: usize,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default = "default_step_size")]
    pub step_size_init: f64,
    #[serde(default = "default_fd_epsilon")]
    pub fd_epsilon: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_max_iters() -> usize {
    200
}
fn default_restarts() -> usize {
    3
}
fn default_step_size() -> f64 {
    1e6
}
fn default_fd_epsilon() -> f64 {
    1.0
}
fn default_tol() -> f64 {
    1e-6
}

impl Default for ControllerSection {
    fn default() -> Self {
        ControllerSection {
            t_p: 4,
            max_iters: default_max_iters(),
            restarts: default_restarts(),
            step_size_init: default_step_size(),
            fd_epsilon: default_fd_epsilon(),
            tol: default_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub bitrate_fraction: f64,
    pub buffer_fraction: f64,
}

/// Offline-stage knobs for `cane fit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default = "default_depth")]
    pub t_b: usize,
    #[serde(default = "default_depth")]
    pub t_w: usize,
    #[serde(default = "default_degree")]
    pub degree: usize,
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_depth() -> usize {
    3
}
fn default_degree() -> usize {
    5
}
fn default_ridge() -> f64 {
    1e-6
}
fn default_train_fraction() -> f64 {
    0.8
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            t_b: default_depth(),
            t_w: default_depth(),
            degree: default_degree(),
            ridge: default_ridge(),
            train_fraction: default_train_fraction(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayerSection {
    pub id: String,
    pub abr: AbrConfig,
    pub theta: f64,
    pub eta: f64,
    pub max_buffer_s: f64,
    pub initial_buffer_s: f64,
    pub initial_bitrate_kbps: f64,
    /// Surrogate model file; required when the cane allocator is selected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub traces: TracesSection,
    pub qoe: QoeSection,
    pub objective: ObjectiveSection,
    pub ladder: LadderSection,
    #[serde(default)]
    pub controller: ControllerSection,
    /// Capacity predictor; omitted means the oracle.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictor: Option<PredictorKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseSection>,
    #[serde(default)]
    pub fit: FitSection,
    pub players: Vec<PlayerSection>,
}

impl ExperimentConfig {
    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| err("<root>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| err(path.display().to_string(), e.to_string()))?;
        Self::from_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.players.len() < 2 {
            return Err(err("players", "need at least two players for fairness metrics"));
        }
        if self.experiment.allocators.is_empty() {
            return Err(err("experiment.allocators", "select at least one allocator"));
        }
        if !(self.experiment.delta_t_s > 0.0) {
            return Err(err("experiment.delta_t_s", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.objective.gamma) {
            return Err(err("objective.gamma", "must be in [0, 1]"));
        }
        if self.qoe.alpha < 0.0 || self.qoe.beta < 0.0 || !(self.qoe.lambda > 0.0) {
            return Err(err("qoe", "need alpha >= 0, beta >= 0, lambda > 0"));
        }
        let ladder = BitrateLadder::new(self.ladder.levels_kbps.clone())
            .map_err(|e| err("ladder.levels_kbps", e.to_string()))?;
        if self.traces.dir.is_none() && self.traces.files.is_empty() {
            return Err(err("traces", "set either dir or files"));
        }
        if let Some(noise) = &self.noise {
            if !(0.0..=0.5).contains(&noise.bitrate_fraction)
                || !(0.0..=0.5).contains(&noise.buffer_fraction)
            {
                return Err(err("noise", "fractions must be in [0, 0.5]"));
            }
        }
        if let Some(kind) = &self.predictor {
            PredictorConfig { kind: kind.clone(), rng_seed: 0 }
                .validate()
                .map_err(|e| err("predictor", e.to_string()))?;
        }
        if self.controller.t_p < 1 {
            return Err(err("controller.t_p", "must be >= 1"));
        }
        if !(0.0 < self.fit.train_fraction && self.fit.train_fraction < 1.0) {
            return Err(err("fit.train_fraction", "must be in (0, 1)"));
        }
        if self.fit.degree < 1 {
            return Err(err("fit.degree", "must be >= 1"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, p) in self.players.iter().enumerate() {
            let at = |field: &str| format!("players[{i}].{field}");
            if p.id.is_empty() || !seen.insert(p.id.clone()) {
                return Err(err(at("id"), "ids must be non-empty and unique"));
            }
            if !(p.theta > 0.0) {
                return Err(err(at("theta"), "must be positive"));
            }
            if !(p.eta > 0.0 && p.eta <= 1.0) {
                return Err(err(at("eta"), "must be in (0, 1]"));
            }
            if !(p.max_buffer_s > 0.0) {
                return Err(err(at("max_buffer_s"), "must be positive"));
            }
            if !(0.0..=p.max_buffer_s).contains(&p.initial_buffer_s) {
                return Err(err(at("initial_buffer_s"), "must be in [0, max_buffer_s]"));
            }
            if !ladder.contains(p.initial_bitrate_kbps) {
                return Err(err(at("initial_bitrate_kbps"), "must be a ladder level"));
            }
            p.abr.validate().map_err(|e| err(at("abr"), e.to_string()))?;
            if self.experiment.allocators.contains(&AllocatorKind::Cane) && p.model.is_none() {
                return Err(err(at("model"), "required when the cane allocator is selected"));
            }
        }
        Ok(())
    }

    pub fn ladder(&self) -> BitrateLadder {
        BitrateLadder::new(self.ladder.levels_kbps.clone()).expect("validated")
    }

    pub fn qoe_params(&self) -> QoeParams {
        QoeParams { alpha: self.qoe.alpha, beta: self.qoe.beta, lambda: self.qoe.lambda }
    }

    pub fn player_specs(&self) -> Vec<PlayerSpec> {
        self.players
            .iter()
            .map(|p| PlayerSpec {
                id: p.id.clone(),
                abr: p.abr.clone(),
                theta: p.theta,
                eta: p.eta,
                max_buffer_s: p.max_buffer_s,
                initial_buffer_s: p.initial_buffer_s,
                initial_bitrate_kbps: p.initial_bitrate_kbps,
            })
            .collect()
    }

    pub fn etas(&self) -> Vec<f64> {
        self.players.iter().map(|p| p.eta).collect()
    }

    pub fn controller_config(&self, seed: u64) -> ControllerConfig {
        ControllerConfig {
            t_p: self.controller.t_p,
            gamma: self.objective.gamma,
            solver: SolverConfig {
                max_iters: self.controller.max_iters,
                step_size_init: self.controller.step_size_init,
                fd_epsilon: self.controller.fd_epsilon,
                tol: self.controller.tol,
                restarts: self.controller.restarts,
                seed,
            },
        }
    }

    pub fn predictor_config(&self, rng_seed: u64) -> PredictorConfig {
        PredictorConfig {
            kind: self.predictor.clone().unwrap_or(PredictorKind::Oracle),
            rng_seed,
        }
    }

    pub fn estimation_noise(&self, seed: u64) -> Option<EstimationNoise> {
        self.noise.as_ref().map(|n| EstimationNoise {
            bitrate_fraction: n.bitrate_fraction,
            buffer_fraction: n.buffer_fraction,
            seed,
        })
    }

    /// Trace file paths in deterministic order, resolved against `base`.
    pub fn trace_paths(&self, base: &Path) -> Result<Vec<PathBuf>, ConfigError> {
        let mut out = Vec::new();
        if let Some(dir) = &self.traces.dir {
            let dir = base.join(dir);
            let entries = std::fs::read_dir(&dir)
                .map_err(|e| err("traces.dir", format!("{}: {e}", dir.display())))?;
            let mut files: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().map(|x| x == "txt").unwrap_or(false))
                .collect();
            files.sort();
            out.extend(files);
        }
        for f in &self.traces.files {
            out.push(base.join(f));
        }
        if out.is_empty() {
            return Err(err("traces", "no trace files found"));
        }
        Ok(out)
    }

    /// `(player index, resolved model path)` pairs for players that name one.
    pub fn model_paths(&self, base: &Path) -> Vec<(usize, PathBuf)> {
        self.players
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.model.as_ref().map(|m| (i, base.join(m))))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EXAMPLE: &str = r#"
[experiment]
scenario = "test"
seed = 42
allocators = ["pure", "uniform", "cane"]
out_dir = "out/test"
delta_t_s = 1.0
steps = 320

[traces]
dir = "fixtures/traces"

[qoe]
alpha = 0.1
beta = 0.1
lambda = 0.5

[objective]
gamma = 0.75

[ladder]
levels_kbps = [300.0, 750.0, 1200.0, 1850.0, 2850.0, 4300.0]

[controller]
t_p = 4
max_iters = 60
restarts = 2

[predictor]
kind = "oracle"

[fit]
t_b = 3
t_w = 3
degree = 5
ridge = 1e-6

[[players]]
id = "bba"
theta = 2.1e-3
eta = 1.0
max_buffer_s = 30.0
initial_buffer_s = 10.0
initial_bitrate_kbps = 750.0
model = "models/bba.json"

[players.abr]
kind = "bba"
reservoir_s = 5.0
cushion_s = 20.0

[[players]]
id = "bola"
theta = 2.1e-3
eta = 1.0
max_buffer_s = 30.0
initial_buffer_s = 10.0
initial_bitrate_kbps = 750.0
model = "models/bola.json"

[players.abr]
kind = "bola"
v = 0.93
gp = 5.0
"#;

    #[test]
    fn parses_and_validates() {
        let cfg = ExperimentConfig::from_str(EXAMPLE).unwrap();
        assert_eq!(cfg.players.len(), 2);
        assert_eq!(cfg.experiment.allocators.len(), 3);
        assert_eq!(cfg.controller.t_p, 4);
        assert!(matches!(
            cfg.players[0].abr,
            AbrConfig::Bba { reservoir_s, cushion_s } if reservoir_s == 5.0 && cushion_s == 20.0
        ));
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = ExperimentConfig::from_str(EXAMPLE).unwrap();
        let text = cfg.to_toml();
        let again = ExperimentConfig::from_str(&text).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn rejects_bad_eta_with_field_path() {
        let bad = EXAMPLE.replace("eta = 1.0", "eta = 1.5");
        let e = ExperimentConfig::from_str(&bad).unwrap_err();
        assert_eq!(e.path, "players[0].eta");
    }

    #[test]
    fn cane_requires_model_paths() {
        let bad = EXAMPLE.replace("model = \"models/bba.json\"\n", "");
        let e = ExperimentConfig::from_str(&bad).unwrap_err();
        assert!(e.path.ends_with(".model"), "{}", e.path);
    }

    #[test]
    fn off_ladder_initial_bitrate_is_rejected() {
        let bad = EXAMPLE.replace("initial_bitrate_kbps = 750.0", "initial_bitrate_kbps = 800.0");
        let e = ExperimentConfig::from_str(&bad).unwrap_err();
        assert!(e.path.ends_with("initial_bitrate_kbps"));
    }
}
