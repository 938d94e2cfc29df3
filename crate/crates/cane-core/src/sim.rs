//! Discrete-time multiplayer session engine.
//!
//! Each step: the allocator splits the link capacity, every player observes
//! its share and picks a bitrate through its adaptation algorithm, buffers
//! advance through the fluid recursion, and a log row is appended. Estimation
//! noise, when enabled, perturbs only what the allocator sees; the plant
//! itself always evolves on true state.

use alloc::string::String;
use alloc::vec::Vec;

use crate::abr::{AbrConfig, AbrContext, AbrInstance, AbrObservation, BitrateLadder};
use crate::qoe::{self, ObjectiveConfig, QoeParams};
use crate::rng::Rng;
use crate::trace::{predict_horizon, BandwidthTrace, PredictorConfig};

/// Rolling window length kept per player; covers model history depths up to 15.
pub const HISTORY_CAP: usize = 16;

/// Static per-player parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PlayerSpec {
    pub id: String,
    pub abr: AbrConfig,
    /// Screen parameter of the quality curve.
    pub theta: f64,
    /// Importance weight in (0, 1]; smaller is more important.
    pub eta: f64,
    pub max_buffer_s: f64,
    pub initial_buffer_s: f64,
    pub initial_bitrate_kbps: f64,
}

impl PlayerSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.theta > 0.0) {
            return Err(SimError::BadConfig("theta must be positive"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(SimError::BadConfig("eta must be in (0, 1]"));
        }
        if !(self.max_buffer_s > 0.0) {
            return Err(SimError::BadConfig("max_buffer_s must be positive"));
        }
        if !(0.0..=self.max_buffer_s).contains(&self.initial_buffer_s) {
            return Err(SimError::BadConfig("initial_buffer_s must be in [0, max_buffer_s]"));
        }
        self.abr.validate().map_err(|_| SimError::BadConfig("invalid abr parameters"))?;
        Ok(())
    }
}

/// Evolving per-player state. Histories are fixed-capacity windows padded
/// with the initial values at session start, newest entry last.
#[derive(Debug, Clone, PartialEq)]
pub struct PlayerState {
    pub buffer_s: f64,
    pub last_bitrate_kbps: f64,
    /// `[b(t-H+1) .. b(t)]`; the final entry is the current buffer.
    pub buffer_window: Vec<f64>,
    /// `[w(t-H) .. w(t-1)]`; allocations of past steps only.
    pub bandwidth_window: Vec<f64>,
}

impl PlayerState {
    pub fn new(spec: &PlayerSpec) -> Self {
        PlayerState {
            buffer_s: spec.initial_buffer_s,
            last_bitrate_kbps: spec.initial_bitrate_kbps,
            buffer_window: alloc::vec![spec.initial_buffer_s; HISTORY_CAP],
            bandwidth_window: alloc::vec![0.0; HISTORY_CAP],
        }
    }

    fn advance(&mut self, next_buffer_s: f64, allocation_kbps: f64, bitrate_kbps: f64) {
        self.buffer_window.rotate_left(1);
        *self.buffer_window.last_mut().unwrap() = next_buffer_s;
        self.bandwidth_window.rotate_left(1);
        *self.bandwidth_window.last_mut().unwrap() = allocation_kbps;
        self.buffer_s = next_buffer_s;
        self.last_bitrate_kbps = bitrate_kbps;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    ZeroBitrate,
    BadConfig(&'static str),
    Allocator { step: usize, message: String },
}

impl core::fmt::Display for SimError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SimError::ZeroBitrate => write!(f, "bitrate must be positive"),
            SimError::BadConfig(what) => write!(f, "bad session config: {what}"),
            SimError::Allocator { step, message } => {
                write!(f, "allocator failed at step {step}: {message}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SimError {}

/// Buffer recursion: `b' = clip(b + (w/r - 1) * dt, 0, b_max)`. The buffer
/// is unchanged when download rate equals the playback bitrate.
pub fn buffer_step(
    buffer_s: f64,
    allocation_kbps: f64,
    bitrate_kbps: f64,
    delta_t_s: f64,
    max_buffer_s: f64,
) -> Result<f64, SimError> {
    if !(bitrate_kbps > 0.0) {
        return Err(SimError::ZeroBitrate);
    }
    Ok(buffer_step_raw(buffer_s, allocation_kbps, bitrate_kbps, delta_t_s, max_buffer_s))
}

#[inline]
pub(crate) fn buffer_step_raw(
    buffer_s: f64,
    allocation_kbps: f64,
    bitrate_kbps: f64,
    delta_t_s: f64,
    max_buffer_s: f64,
) -> f64 {
    (buffer_s + (allocation_kbps / bitrate_kbps - 1.0) * delta_t_s).clamp(0.0, max_buffer_s)
}

/// Bandwidth split under no shaping: players with room in their buffer share
/// the capacity equally; saturated players sit out and their share is
/// redistributed. All-saturated steps allocate nothing.
pub fn contention_share(active: &[bool], capacity_kbps: f64) -> Vec<f64> {
    let n_active = active.iter().filter(|&&a| a).count();
    if n_active == 0 {
        return alloc::vec![0.0; active.len()];
    }
    let share = capacity_kbps / n_active as f64;
    active.iter().map(|&a| if a { share } else { 0.0 }).collect()
}

/// What an allocator may see about one player at one step. Observed fields
/// carry estimation noise when it is enabled; `buffer_full` reflects the true
/// plant state (an unshaped link physically stops serving a full buffer).
#[derive(Debug, Clone)]
pub struct PlayerView {
    pub observed_buffer_s: f64,
    pub observed_last_bitrate_kbps: f64,
    /// Observed counterpart of [`PlayerState::buffer_window`].
    pub observed_buffer_window: Vec<f64>,
    /// Past allocations; the allocator made these, so they are exact.
    pub bandwidth_window: Vec<f64>,
    pub buffer_full: bool,
    pub max_buffer_s: f64,
    pub theta: f64,
    pub eta: f64,
}

/// Everything an allocator gets to decide one step's split.
#[derive(Debug)]
pub struct AllocationContext<'a> {
    pub step: usize,
    pub capacity_kbps: f64,
    /// Predicted capacities `W(t..=t+horizon)`.
    pub capacity_horizon: &'a [f64],
    pub views: &'a [PlayerView],
    pub qoe: &'a QoeParams,
    pub gamma: f64,
    pub delta_t_s: f64,
}

/// Per-step bandwidth allocation policy.
pub trait Allocator {
    /// Look-ahead steps of capacity prediction the policy wants.
    fn horizon(&self) -> usize {
        0
    }

    /// Returns one allocation per player, in view order.
    fn allocate(&mut self, ctx: &AllocationContext<'_>) -> Result<Vec<f64>, String>;
}

/// Pure client-side baseline: no shaping, just contention for the link.
#[derive(Debug, Default)]
pub struct NullAllocator;

impl Allocator for NullAllocator {
    fn allocate(&mut self, ctx: &AllocationContext<'_>) -> Result<Vec<f64>, String> {
        let active: Vec<bool> = ctx.views.iter().map(|v| !v.buffer_full).collect();
        Ok(contention_share(&active, ctx.capacity_kbps))
    }
}

/// Multiplicative uniform estimation errors on what the allocator observes.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EstimationNoise {
    pub bitrate_fraction: f64,
    pub buffer_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SessionConfig {
    pub delta_t_s: f64,
    /// Steps to simulate; defaults to the trace length.
    pub steps: Option<usize>,
    pub ladder: BitrateLadder,
    pub predictor: PredictorConfig,
    pub noise: Option<EstimationNoise>,
}

impl SessionConfig {
    pub fn new(ladder: BitrateLadder) -> Self {
        SessionConfig {
            delta_t_s: 1.0,
            steps: None,
            ladder,
            predictor: PredictorConfig::default(),
            noise: None,
        }
    }
}

/// One `(step, player)` log row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub player: usize,
    pub allocation_kbps: f64,
    pub bitrate_kbps: f64,
    pub buffer_s: f64,
    pub qoe: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionSummary {
    pub per_player_mean_qoe: Vec<f64>,
    pub social_welfare: f64,
    pub pairwise_unfairness: f64,
    pub jain_unfairness: f64,
    pub weighted_sum_index: f64,
}

/// Recomputes summary metrics from per-player mean QoE. Fairness terms are
/// defined as zero for single-player sessions.
pub fn summarize(per_player_mean_qoe: &[f64], etas: &[f64], gamma: f64) -> SessionSummary {
    let welfare = qoe::social_welfare(per_player_mean_qoe).unwrap_or(0.0);
    let pairwise = if per_player_mean_qoe.len() >= 2 {
        qoe::pairwise_unfairness(per_player_mean_qoe, etas).unwrap_or(0.0)
    } else {
        0.0
    };
    let jain = if per_player_mean_qoe.len() >= 2 {
        qoe::jain_unfairness(per_player_mean_qoe)
    } else {
        0.0
    };
    SessionSummary {
        per_player_mean_qoe: per_player_mean_qoe.to_vec(),
        social_welfare: welfare,
        pairwise_unfairness: pairwise,
        jain_unfairness: jain,
        weighted_sum_index: qoe::weighted_objective(gamma, welfare, pairwise),
    }
}

/// Complete record of one simulated session.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionLog {
    pub trace_name: String,
    pub player_ids: Vec<String>,
    pub steps: usize,
    pub delta_t_s: f64,
    /// Link capacity per step.
    pub capacities_kbps: Vec<f64>,
    /// Rows in `(step, player)` order, `steps * players` of them.
    pub rows: Vec<StepRecord>,
    pub summary: SessionSummary,
}

impl SessionLog {
    /// Mean allocation received by one player over the session.
    pub fn mean_allocation(&self, player: usize) -> f64 {
        let total: f64 = self
            .rows
            .iter()
            .filter(|r| r.player == player)
            .map(|r| r.allocation_kbps)
            .sum();
        total / self.steps as f64
    }
}

/// Runs one session: the trace must already sit on the `delta_t_s` grid.
pub fn run_session(
    specs: &[PlayerSpec],
    trace: &BandwidthTrace,
    allocator: &mut dyn Allocator,
    qoe_params: &QoeParams,
    objective: &ObjectiveConfig,
    session: &SessionConfig,
) -> Result<SessionLog, SimError> {
    if specs.is_empty() {
        return Err(SimError::BadConfig("need at least one player"));
    }
    for spec in specs {
        spec.validate()?;
        if !session.ladder.contains(spec.initial_bitrate_kbps) {
            return Err(SimError::BadConfig("initial bitrate must be a ladder level"));
        }
    }
    if objective.etas.len() != specs.len() {
        return Err(SimError::BadConfig("objective etas must match player count"));
    }
    if !trace.is_gridded(session.delta_t_s) {
        return Err(SimError::BadConfig("trace must be resampled to the step grid"));
    }
    qoe_params.validate().map_err(|_| SimError::BadConfig("invalid qoe params"))?;
    session
        .predictor
        .validate()
        .map_err(|_| SimError::BadConfig("invalid predictor config"))?;
    if let Some(noise) = &session.noise {
        if !(0.0..=0.5).contains(&noise.bitrate_fraction)
            || !(0.0..=0.5).contains(&noise.buffer_fraction)
        {
            return Err(SimError::BadConfig("noise fractions must be in [0, 0.5]"));
        }
    }

    let n = specs.len();
    let steps = session.steps.unwrap_or_else(|| trace.len());
    let dt = session.delta_t_s;
    let horizon = allocator.horizon();

    let mut states: Vec<PlayerState> = specs.iter().map(PlayerState::new).collect();
    let mut abrs: Vec<AbrInstance> =
        specs.iter().map(|s| AbrInstance::new(s.abr.clone())).collect();
    let mut noise_rng = session.noise.as_ref().map(|z| Rng::substream(z.seed, 0x6e6f_6973));

    let mut rows = Vec::with_capacity(steps * n);
    let mut capacities = Vec::with_capacity(steps);
    let mut qoe_totals = alloc::vec![0.0; n];

    for t in 0..steps {
        let capacity = trace.capacity_at(t);
        capacities.push(capacity);
        let capacity_horizon = predict_horizon(trace, &session.predictor, t, horizon);

        let views: Vec<PlayerView> = specs
            .iter()
            .zip(states.iter())
            .map(|(spec, state)| {
                let buffer_full = state.buffer_s >= spec.max_buffer_s - 1e-9;
                let (obs_bitrate, obs_window) = match (&session.noise, noise_rng.as_mut()) {
                    (Some(z), Some(rng)) => {
                        let fb = z.buffer_fraction;
                        let fr = z.bitrate_fraction;
                        let bitrate =
                            state.last_bitrate_kbps * rng.uniform(1.0 - fr, 1.0 + fr);
                        let window: Vec<f64> = state
                            .buffer_window
                            .iter()
                            .map(|&b| b * rng.uniform(1.0 - fb, 1.0 + fb))
                            .collect();
                        (bitrate, window)
                    }
                    _ => (state.last_bitrate_kbps, state.buffer_window.clone()),
                };
                PlayerView {
                    observed_buffer_s: *obs_window.last().unwrap(),
                    observed_last_bitrate_kbps: obs_bitrate,
                    observed_buffer_window: obs_window,
                    bandwidth_window: state.bandwidth_window.clone(),
                    buffer_full,
                    max_buffer_s: spec.max_buffer_s,
                    theta: spec.theta,
                    eta: spec.eta,
                }
            })
            .collect();

        let ctx = AllocationContext {
            step: t,
            capacity_kbps: capacity,
            capacity_horizon: &capacity_horizon,
            views: &views,
            qoe: qoe_params,
            gamma: objective.gamma,
            delta_t_s: dt,
        };
        let allocations = allocator
            .allocate(&ctx)
            .map_err(|message| SimError::Allocator { step: t, message })?;
        if allocations.len() != n {
            return Err(SimError::Allocator {
                step: t,
                message: String::from("allocation count does not match player count"),
            });
        }

        for i in 0..n {
            let spec = &specs[i];
            let state = &mut states[i];
            let allocation = allocations[i];
            // A full buffer cannot absorb more video: the player pauses its
            // download for the step and its share goes unused.
            let effective = if views[i].buffer_full { 0.0 } else { allocation };
            let obs = AbrObservation {
                buffer_s: state.buffer_s,
                last_bitrate_kbps: state.last_bitrate_kbps,
                measured_throughput_kbps: effective,
                step_index: t,
            };
            let abr_ctx = AbrContext {
                ladder: &session.ladder,
                qoe: qoe_params,
                theta: spec.theta,
                max_buffer_s: spec.max_buffer_s,
                delta_t_s: dt,
            };
            let bitrate = abrs[i].decide(&abr_ctx, &obs);
            let u = qoe::instant_qoe(
                qoe_params,
                spec.theta,
                bitrate,
                state.last_bitrate_kbps,
                state.buffer_s,
            );
            rows.push(StepRecord {
                step: t,
                player: i,
                allocation_kbps: allocation,
                bitrate_kbps: bitrate,
                buffer_s: state.buffer_s,
                qoe: u,
            });
            qoe_totals[i] += u;

            let next_buffer =
                buffer_step_raw(state.buffer_s, effective, bitrate, dt, spec.max_buffer_s);
            state.advance(next_buffer, allocation, bitrate);
        }
    }

    let per_player_mean: Vec<f64> = qoe_totals.iter().map(|&s| s / steps as f64).collect();
    let summary = summarize(&per_player_mean, &objective.etas, objective.gamma);
    Ok(SessionLog {
        trace_name: trace.name.clone(),
        player_ids: specs.iter().map(|s| s.id.clone()).collect(),
        steps,
        delta_t_s: dt,
        capacities_kbps: capacities,
        rows,
        summary,
    })
}
