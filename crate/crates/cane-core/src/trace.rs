//! Bottleneck-bandwidth traces: construction, resampling, synthesis, and
//! horizon prediction.
//!
//! A trace is an ordered series of `(time_s, capacity_kbps)` samples with
//! strictly increasing times and strictly positive capacities. The simulator
//! consumes traces resampled onto a fixed step grid.

use alloc::string::String;
use alloc::vec::Vec;

use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BandwidthTrace {
    pub name: String,
    /// `(time_s, capacity_kbps)` pairs, times strictly increasing.
    pub samples: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceError {
    EmptyTrace,
    /// 1-based index of the offending sample.
    NonMonotoneTime(usize),
    NonPositiveCapacity(usize),
    InvalidParams(&'static str),
}

impl core::fmt::Display for TraceError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TraceError::EmptyTrace => write!(f, "trace has no samples"),
            TraceError::NonMonotoneTime(i) => {
                write!(f, "sample {i}: time not strictly increasing")
            }
            TraceError::NonPositiveCapacity(i) => {
                write!(f, "sample {i}: capacity must be positive")
            }
            TraceError::InvalidParams(what) => write!(f, "invalid parameters: {what}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TraceError {}

impl BandwidthTrace {
    /// Builds a trace, enforcing ordering and positivity.
    pub fn new(name: impl Into<String>, samples: Vec<(f64, f64)>) -> Result<Self, TraceError> {
        if samples.is_empty() {
            return Err(TraceError::EmptyTrace);
        }
        let mut prev = f64::NEG_INFINITY;
        for (i, &(t, c)) in samples.iter().enumerate() {
            if !(t > prev) || t < 0.0 {
                return Err(TraceError::NonMonotoneTime(i + 1));
            }
            if !(c > 0.0) {
                return Err(TraceError::NonPositiveCapacity(i + 1));
            }
            prev = t;
        }
        Ok(BandwidthTrace { name: name.into(), samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.last().map(|&(t, _)| t).unwrap_or(0.0)
    }

    /// Capacity at a step index, repeating the last value past the end.
    pub fn capacity_at(&self, step: usize) -> f64 {
        let idx = step.min(self.samples.len() - 1);
        self.samples[idx].1
    }

    /// True when samples sit exactly on the `{0, dt, 2dt, ...}` grid.
    pub fn is_gridded(&self, delta_t_s: f64) -> bool {
        self.samples
            .iter()
            .enumerate()
            .all(|(i, &(t, _))| (t - i as f64 * delta_t_s).abs() < 1e-9)
    }
}

/// Zero-order-hold resampling onto the grid `{0, dt, 2dt, ..., <= last time}`.
///
/// Each grid point takes the capacity of the most recent sample at or before
/// it; grid points before the first sample take the first sample's value.
pub fn resample(trace: &BandwidthTrace, delta_t_s: f64) -> Result<BandwidthTrace, TraceError> {
    if trace.is_empty() {
        return Err(TraceError::EmptyTrace);
    }
    if !(delta_t_s > 0.0) {
        return Err(TraceError::InvalidParams("delta_t must be positive"));
    }
    let last_t = trace.duration_s();
    let steps = (last_t / delta_t_s + 1e-9) as usize;
    let mut out = Vec::with_capacity(steps + 1);
    let mut src = 0;
    for k in 0..=steps {
        let t = k as f64 * delta_t_s;
        while src + 1 < trace.samples.len() && trace.samples[src + 1].0 <= t + 1e-9 {
            src += 1;
        }
        out.push((t, trace.samples[src].1));
    }
    BandwidthTrace::new(trace.name.clone(), out)
}

/// Synthetic trace kinds used as fixtures and defaults.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum SynthKind {
    Constant {
        level_kbps: f64,
    },
    Step {
        from_kbps: f64,
        to_kbps: f64,
        at_s: f64,
    },
    /// Multiplicative random walk in log-capacity, clamped to
    /// `[floor_kbps, max_kbps]`.
    RandomWalk {
        floor_kbps: f64,
        max_kbps: f64,
        sigma: f64,
    },
}

/// Generates a trace of `duration_s / delta_t_s` samples. Deterministic for a
/// given seed; capacities are clamped to stay positive.
pub fn synth_trace(
    name: impl Into<String>,
    kind: &SynthKind,
    duration_s: f64,
    delta_t_s: f64,
    seed: u64,
) -> Result<BandwidthTrace, TraceError> {
    if !(duration_s > 0.0) || !(delta_t_s > 0.0) {
        return Err(TraceError::InvalidParams("duration and delta_t must be positive"));
    }
    let steps = (duration_s / delta_t_s + 1e-9) as usize;
    if steps == 0 {
        return Err(TraceError::InvalidParams("duration shorter than one step"));
    }
    let mut samples = Vec::with_capacity(steps);
    match *kind {
        SynthKind::Constant { level_kbps } => {
            if !(level_kbps > 0.0) {
                return Err(TraceError::InvalidParams("constant level must be positive"));
            }
            for k in 0..steps {
                samples.push((k as f64 * delta_t_s, level_kbps));
            }
        }
        SynthKind::Step { from_kbps, to_kbps, at_s } => {
            if !(from_kbps > 0.0) || !(to_kbps > 0.0) {
                return Err(TraceError::InvalidParams("step levels must be positive"));
            }
            for k in 0..steps {
                let t = k as f64 * delta_t_s;
                let c = if t < at_s { from_kbps } else { to_kbps };
                samples.push((t, c));
            }
        }
        SynthKind::RandomWalk { floor_kbps, max_kbps, sigma } => {
            if !(floor_kbps > 0.0) || !(max_kbps > floor_kbps) || !(sigma > 0.0) {
                return Err(TraceError::InvalidParams("need 0 < floor < max and sigma > 0"));
            }
            let mut rng = Rng::new(seed);
            let (lo, hi) = (crate::math::ln(floor_kbps), crate::math::ln(max_kbps));
            let mut log_level = rng.uniform(lo, hi);
            for k in 0..steps {
                samples.push((k as f64 * delta_t_s, crate::math::exp(log_level)));
                log_level += rng.uniform(-sigma, sigma);
                log_level = log_level.clamp(lo, hi);
            }
        }
    }
    BandwidthTrace::new(name, samples)
}

/// How the allocator predicts link capacity over its look-ahead window.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum PredictorKind {
    /// True future capacities straight from the trace.
    Oracle,
    /// Oracle values, each scaled by an independent uniform factor in
    /// `[1 - noise_fraction, 1 + noise_fraction]`. Capped at 0.5 so predicted
    /// capacity stays positive.
    NoisyOracle { noise_fraction: f64 },
    /// Harmonic mean of the most recent observed capacities, held flat over
    /// the window.
    HarmonicMean { history_len: usize },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PredictorConfig {
    pub kind: PredictorKind,
    pub rng_seed: u64,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig { kind: PredictorKind::Oracle, rng_seed: 0 }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<(), TraceError> {
        match self.kind {
            PredictorKind::NoisyOracle { noise_fraction } => {
                if !(0.0..=0.5).contains(&noise_fraction) {
                    return Err(TraceError::InvalidParams("noise_fraction must be in [0, 0.5]"));
                }
            }
            PredictorKind::HarmonicMean { history_len } => {
                if history_len == 0 {
                    return Err(TraceError::InvalidParams("history_len must be positive"));
                }
            }
            PredictorKind::Oracle => {}
        }
        Ok(())
    }
}

/// Predicts `horizon + 1` capacities `W(t..=t+horizon)` for a gridded trace.
///
/// Windows that run past the end of the trace repeat the final capacity.
/// Noise draws are keyed on `(rng_seed, t)`, so the same call always returns
/// the same values.
pub fn predict_horizon(
    trace: &BandwidthTrace,
    cfg: &PredictorConfig,
    t: usize,
    horizon: usize,
) -> Vec<f64> {
    let n = horizon + 1;
    let mut out = Vec::with_capacity(n);
    match cfg.kind {
        PredictorKind::Oracle => {
            for k in 0..n {
                out.push(trace.capacity_at(t + k));
            }
        }
        PredictorKind::NoisyOracle { noise_fraction } => {
            let mut rng = Rng::substream(cfg.rng_seed, t as u64);
            for k in 0..n {
                let factor = rng.uniform(1.0 - noise_fraction, 1.0 + noise_fraction);
                out.push(trace.capacity_at(t + k) * factor);
            }
        }
        PredictorKind::HarmonicMean { history_len } => {
            // Uses capacities strictly before t; at t = 0 falls back to W(0).
            let (lo, hi) = (t.saturating_sub(history_len), t);
            let mut inv_sum = 0.0;
            let mut count = 0usize;
            for k in lo..hi {
                inv_sum += 1.0 / trace.capacity_at(k);
                count += 1;
            }
            let estimate = if count == 0 {
                trace.capacity_at(0)
            } else {
                count as f64 / inv_sum
            };
            out.extend(core::iter::repeat(estimate).take(n));
        }
    }
    out
}
