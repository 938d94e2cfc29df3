//! Quality-of-experience kernels and the multiplayer objective.
//!
//! Video quality follows a saturating exponential of the bitrate; per-step
//! QoE combines quality, a quality-change penalty, and an exponential
//! low-buffer penalty. Session- and horizon-level metrics aggregate per-player
//! QoE into an efficiency term (mean), a pairwise importance-weighted
//! unfairness term, and a single weighted objective where lower is better.

use alloc::vec::Vec;

use crate::math;

/// Per-step QoE weights.
///
/// `alpha` scales the quality-change penalty, `beta` the low-buffer penalty,
/// and `lambda` (1/seconds) sets how fast the buffer penalty decays as the
/// buffer grows.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QoeParams {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
}

impl Default for QoeParams {
    fn default() -> Self {
        QoeParams {
            alpha: 0.1,
            beta: 0.1,
            lambda: 0.5,
        }
    }
}

impl QoeParams {
    pub fn validate(&self) -> Result<(), QoeError> {
        if !(self.alpha >= 0.0) || !(self.beta >= 0.0) {
            return Err(QoeError::InvalidParams);
        }
        if !(self.lambda > 0.0) {
            return Err(QoeError::InvalidParams);
        }
        Ok(())
    }
}

/// Tradeoff between efficiency and fairness, plus per-player importance
/// weights. A smaller `eta` marks a more important player: at the fairness
/// optimum the weighted averages `eta_i * U_i` equalize, so a smaller weight
/// means a larger QoE share.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ObjectiveConfig {
    pub gamma: f64,
    pub etas: Vec<f64>,
}

impl ObjectiveConfig {
    pub fn new(gamma: f64, etas: Vec<f64>) -> Result<Self, QoeError> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(QoeError::InvalidParams);
        }
        if etas.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(QoeError::InvalidParams);
        }
        Ok(ObjectiveConfig { gamma, etas })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QoeError {
    EmptyList,
    /// Horizon length 0 would divide by zero in the horizon average.
    ZeroHorizon,
    LengthMismatch,
    TooFewPlayers,
    InvalidParams,
}

impl core::fmt::Display for QoeError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            QoeError::EmptyList => write!(f, "empty value list"),
            QoeError::ZeroHorizon => write!(f, "horizon average needs at least two samples"),
            QoeError::LengthMismatch => write!(f, "value and weight lists differ in length"),
            QoeError::TooFewPlayers => write!(f, "pairwise unfairness needs at least two players"),
            QoeError::InvalidParams => write!(f, "parameter outside its valid range"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for QoeError {}

/// Video quality `1 - exp(-theta * r)` in [0, 1]; monotone and concave in the
/// bitrate. `theta` captures screen size/resolution: a larger value saturates
/// at lower bitrates.
#[inline]
pub fn video_quality(theta: f64, r_kbps: f64) -> f64 {
    debug_assert!(theta > 0.0 && r_kbps >= 0.0);
    1.0 - math::exp(-theta * r_kbps)
}

/// Rebuffer-risk penalty `exp(-lambda * b)` in (0, 1]; equals 1 at an empty
/// buffer and decays as the buffer fills.
#[inline]
pub fn buffer_penalty(lambda: f64, buffer_s: f64) -> f64 {
    debug_assert!(lambda > 0.0 && buffer_s >= 0.0);
    math::exp(-lambda * buffer_s)
}

/// Per-step QoE: quality minus the weighted quality-change and low-buffer
/// penalties. Bounded in [-alpha-beta, 1].
#[inline]
pub fn instant_qoe(params: &QoeParams, theta: f64, r_now: f64, r_prev: f64, buffer_s: f64) -> f64 {
    let v_now = video_quality(theta, r_now);
    let v_prev = video_quality(theta, r_prev);
    v_now - params.alpha * math::abs(v_now - v_prev) - params.beta * buffer_penalty(params.lambda, buffer_s)
}

/// Horizon average of per-step QoE values.
///
/// Takes the full window of `n` samples but divides by `n - 1` (the horizon
/// length), so the result can exceed the per-step range by a factor of
/// `n / (n - 1)`. All horizon comparisons in this crate use the same
/// convention, so the scale cancels.
pub fn average_qoe(instants: &[f64]) -> Result<f64, QoeError> {
    if instants.is_empty() {
        return Err(QoeError::EmptyList);
    }
    if instants.len() < 2 {
        return Err(QoeError::ZeroHorizon);
    }
    let horizon = (instants.len() - 1) as f64;
    Ok(instants.iter().sum::<f64>() / horizon)
}

/// Efficiency objective: the mean QoE across players.
pub fn social_welfare(per_player: &[f64]) -> Result<f64, QoeError> {
    if per_player.is_empty() {
        return Err(QoeError::EmptyList);
    }
    Ok(per_player.iter().sum::<f64>() / per_player.len() as f64)
}

/// Importance-weighted pairwise unfairness: the sum over unordered player
/// pairs of `|eta_i U_i - eta_j U_j| / N`. Zero exactly when all weighted
/// values coincide.
pub fn pairwise_unfairness(per_player: &[f64], etas: &[f64]) -> Result<f64, QoeError> {
    if per_player.len() != etas.len() {
        return Err(QoeError::LengthMismatch);
    }
    let n = per_player.len();
    if n < 2 {
        return Err(QoeError::TooFewPlayers);
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += math::abs(etas[i] * per_player[i] - etas[j] * per_player[j]);
        }
    }
    Ok(total / n as f64)
}

/// Combined objective `-(1 - gamma) * J_e + gamma * J_f`; lower is better.
#[inline]
pub fn weighted_objective(gamma: f64, efficiency: f64, unfairness: f64) -> f64 {
    -(1.0 - gamma) * efficiency + gamma * unfairness
}

/// Jain-style unfairness `1 - (sum U)^2 / (N * sum U^2)` in [0, 1 - 1/N].
/// All-zero input is defined as perfectly fair (0).
pub fn jain_unfairness(per_player: &[f64]) -> f64 {
    let n = per_player.len() as f64;
    let sum: f64 = per_player.iter().sum();
    let sum_sq: f64 = per_player.iter().map(|u| u * u).sum();
    if sum_sq == 0.0 {
        return 0.0;
    }
    1.0 - (sum * sum) / (n * sum_sq)
}
