//! Client-side adaptation algorithms.
//!
//! Four interchangeable deciders sit behind [`AbrInstance::decide`]: a
//! buffer-based linear map (BBA-style), a BOLA-style utility maximizer, a
//! short-horizon lookahead client that tracks its own throughput estimate,
//! and a scripted replay player. Each decision maps an observation of
//! (buffer, previous bitrate, measured throughput) to a ladder level; ties
//! always break toward the lower bitrate.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use crate::math;
use crate::qoe::{self, QoeParams};
use crate::sim::buffer_step_raw;

/// The discrete set of available bitrates, strictly increasing, in kbps.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BitrateLadder {
    pub levels_kbps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AbrError {
    InvalidLadder,
    InvalidParams(&'static str),
}

impl core::fmt::Display for AbrError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            AbrError::InvalidLadder => {
                write!(f, "ladder must have >= 2 strictly increasing positive levels")
            }
            AbrError::InvalidParams(what) => write!(f, "invalid parameters: {what}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for AbrError {}

impl BitrateLadder {
    pub fn new(levels_kbps: Vec<f64>) -> Result<Self, AbrError> {
        if levels_kbps.len() < 2 {
            return Err(AbrError::InvalidLadder);
        }
        let increasing = levels_kbps.windows(2).all(|w| w[0] < w[1]);
        if !increasing || !(levels_kbps[0] > 0.0) {
            return Err(AbrError::InvalidLadder);
        }
        Ok(BitrateLadder { levels_kbps })
    }

    /// Six-level test ladder spanning the usual 0.1-12 Mbps trace range.
    pub fn default_six() -> Self {
        BitrateLadder { levels_kbps: alloc::vec![300.0, 750.0, 1200.0, 1850.0, 2850.0, 4300.0] }
    }

    pub fn min(&self) -> f64 {
        self.levels_kbps[0]
    }

    pub fn max(&self) -> f64 {
        *self.levels_kbps.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.levels_kbps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels_kbps.is_empty()
    }

    /// Index of the level nearest to `value`; equidistant values take the
    /// lower level.
    pub fn nearest_index(&self, value: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &l) in self.levels_kbps.iter().enumerate() {
            let d = math::abs(l - value);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn nearest(&self, value: f64) -> f64 {
        self.levels_kbps[self.nearest_index(value)]
    }

    /// Largest level at or below `rate`; the lowest level when none fits.
    pub fn floor_snap(&self, rate: f64) -> f64 {
        let mut out = self.min();
        for &l in &self.levels_kbps {
            if l <= rate {
                out = l;
            }
        }
        out
    }

    pub fn contains(&self, value: f64) -> bool {
        self.levels_kbps.iter().any(|&l| math::abs(l - value) < 1e-9)
    }
}

/// What a client can see when it decides its next bitrate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbrObservation {
    pub buffer_s: f64,
    pub last_bitrate_kbps: f64,
    /// Goodput the client measured over the current step, kbps.
    pub measured_throughput_kbps: f64,
    pub step_index: usize,
}

/// Algorithm selection plus per-algorithm parameters.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum AbrConfig {
    /// Piecewise-linear buffer-to-rate map: lowest level at or below the
    /// reservoir, highest at or above the cushion, linear in between with a
    /// snap to the nearest level at or below the interpolated rate.
    Bba { reservoir_s: f64, cushion_s: f64 },
    /// Utility maximizer: picks `argmax_m (v * (u_m + gp) - buffer) / S_m`
    /// with `u_m = ln(S_m / S_min)` over per-step segment sizes `S_m`.
    Bola { v: f64, gp: f64 },
    /// Exhaustive lookahead over bitrate sequences whose levels sit at or
    /// below a harmonic-mean throughput estimate, scored by summed QoE with
    /// the buffer recursion applied.
    ClientMpc { search_depth: usize, throughput_window: usize },
    /// Replays a fixed bitrate script (snapped to the ladder), repeating the
    /// final entry once the script runs out.
    Scripted { script_kbps: Vec<f64> },
}

impl AbrConfig {
    /// BBA tuned to ramp early: a short reservoir and low cushion make it
    /// grab high rungs on a small buffer.
    pub fn aggressive_bba() -> Self {
        AbrConfig::Bba { reservoir_s: 2.0, cushion_s: 10.0 }
    }

    pub fn validate(&self) -> Result<(), AbrError> {
        match self {
            AbrConfig::Bba { reservoir_s, cushion_s } => {
                if !(*reservoir_s >= 0.0) || !(cushion_s > reservoir_s) {
                    return Err(AbrError::InvalidParams("need 0 <= reservoir < cushion"));
                }
            }
            AbrConfig::Bola { v, gp } => {
                if !(*v > 0.0) || !(*gp > 0.0) {
                    return Err(AbrError::InvalidParams("v and gp must be positive"));
                }
            }
            AbrConfig::ClientMpc { search_depth, throughput_window } => {
                if *search_depth == 0 || *throughput_window == 0 {
                    return Err(AbrError::InvalidParams(
                        "search_depth and throughput_window must be positive",
                    ));
                }
            }
            AbrConfig::Scripted { script_kbps } => {
                if script_kbps.is_empty() {
                    return Err(AbrError::InvalidParams("script must not be empty"));
                }
            }
        }
        Ok(())
    }

    /// Stable identifier used to tag datasets and model files.
    pub fn id(&self) -> &'static str {
        match self {
            AbrConfig::Bba { .. } => "bba",
            AbrConfig::Bola { .. } => "bola",
            AbrConfig::ClientMpc { .. } => "client_mpc",
            AbrConfig::Scripted { .. } => "scripted",
        }
    }
}

impl Default for AbrConfig {
    fn default() -> Self {
        AbrConfig::Bba { reservoir_s: 5.0, cushion_s: 20.0 }
    }
}

/// Session-level constants a decider may consult.
#[derive(Debug, Clone, Copy)]
pub struct AbrContext<'a> {
    pub ladder: &'a BitrateLadder,
    pub qoe: &'a QoeParams,
    pub theta: f64,
    pub max_buffer_s: f64,
    pub delta_t_s: f64,
}

/// One player's decider: configuration plus private history.
#[derive(Debug, Clone)]
pub struct AbrInstance {
    pub config: AbrConfig,
    throughput_history: VecDeque<f64>,
}

impl AbrInstance {
    pub fn new(config: AbrConfig) -> Self {
        AbrInstance { config, throughput_history: VecDeque::new() }
    }

    /// Picks the next bitrate. Always returns a ladder level; deterministic
    /// given the configuration and the observation sequence seen so far.
    pub fn decide(&mut self, ctx: &AbrContext<'_>, obs: &AbrObservation) -> f64 {
        match &self.config {
            AbrConfig::Bba { reservoir_s, cushion_s } => {
                bba_decide(*reservoir_s, *cushion_s, ctx.ladder, obs.buffer_s)
            }
            AbrConfig::Bola { v, gp } => bola_decide(*v, *gp, ctx.ladder, obs.buffer_s),
            AbrConfig::ClientMpc { search_depth, throughput_window } => {
                // Paused (zero-goodput) steps carry no rate signal; skip them.
                if obs.measured_throughput_kbps > 0.0 {
                    self.throughput_history.push_back(obs.measured_throughput_kbps);
                    while self.throughput_history.len() > *throughput_window {
                        self.throughput_history.pop_front();
                    }
                }
                let estimate = harmonic_mean(self.throughput_history.iter().copied())
                    .unwrap_or(ctx.ladder.min());
                mpc_client_decide(
                    ctx,
                    *search_depth,
                    estimate,
                    obs.buffer_s,
                    obs.last_bitrate_kbps,
                )
            }
            AbrConfig::Scripted { script_kbps } => {
                let idx = obs.step_index.min(script_kbps.len() - 1);
                ctx.ladder.nearest(script_kbps[idx])
            }
        }
    }
}

fn harmonic_mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut inv_sum = 0.0;
    let mut count = 0usize;
    for v in values {
        inv_sum += 1.0 / v;
        count += 1;
    }
    if count == 0 {
        None
    } else {
        Some(count as f64 / inv_sum)
    }
}

/// Buffer-based decision: lowest level at `buffer <= reservoir`, highest at
/// `buffer >= cushion`, else the nearest level at or below a linear
/// interpolation between the ladder extremes.
pub fn bba_decide(reservoir_s: f64, cushion_s: f64, ladder: &BitrateLadder, buffer_s: f64) -> f64 {
    if buffer_s <= reservoir_s {
        return ladder.min();
    }
    if buffer_s >= cushion_s {
        return ladder.max();
    }
    let frac = (buffer_s - reservoir_s) / (cushion_s - reservoir_s);
    let rate = ladder.min() + frac * (ladder.max() - ladder.min());
    ladder.floor_snap(rate)
}

/// BOLA-style decision over per-step segment sizes `S_m` proportional to the
/// bitrate. The score's common scale cancels in the argmax, so capacities in
/// kbps work directly.
pub fn bola_decide(v: f64, gp: f64, ladder: &BitrateLadder, buffer_s: f64) -> f64 {
    let s_min = ladder.min();
    let mut best = ladder.min();
    let mut best_score = f64::NEG_INFINITY;
    for &level in &ladder.levels_kbps {
        let utility = math::ln(level / s_min);
        let score = (v * (utility + gp) - buffer_s) / level;
        if score > best_score {
            best_score = score;
            best = level;
        }
    }
    best
}

/// Lookahead decision: enumerates bitrate sequences of length `depth` drawn
/// from the levels at or below the throughput estimate (falling back to the
/// lowest level when the estimate is under the ladder), simulates the buffer
/// recursion at constant download rate `estimate`, and applies the first step
/// of the QoE-maximizing sequence.
pub fn mpc_client_decide(
    ctx: &AbrContext<'_>,
    depth: usize,
    throughput_estimate_kbps: f64,
    buffer_s: f64,
    last_bitrate_kbps: f64,
) -> f64 {
    let candidates: Vec<f64> = {
        let mut c: Vec<f64> = ctx
            .ladder
            .levels_kbps
            .iter()
            .copied()
            .filter(|&l| l <= throughput_estimate_kbps)
            .collect();
        if c.is_empty() {
            c.push(ctx.ladder.min());
        }
        c
    };
    if candidates.len() == 1 {
        return candidates[0];
    }

    // Odometer enumeration in ascending lexicographic order; strict
    // improvement keeps the lowest-bitrate plan on ties.
    let mut choice = alloc::vec![0usize; depth];
    let mut best_first = candidates[0];
    let mut best_score = f64::NEG_INFINITY;
    loop {
        let mut score = 0.0;
        let mut b = buffer_s;
        let mut r_prev = last_bitrate_kbps;
        for &c in &choice {
            let r = candidates[c];
            score += qoe::instant_qoe(ctx.qoe, ctx.theta, r, r_prev, b);
            b = buffer_step_raw(b, throughput_estimate_kbps, r, ctx.delta_t_s, ctx.max_buffer_s);
            r_prev = r;
        }
        if score > best_score {
            best_score = score;
            best_first = candidates[choice[0]];
        }
        // advance odometer
        let mut pos = depth;
        loop {
            if pos == 0 {
                return best_first;
            }
            pos -= 1;
            choice[pos] += 1;
            if choice[pos] < candidates.len() {
                break;
            }
            choice[pos] = 0;
        }
    }
}


#[cfg(test)]
mod prop_tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn decide_always_returns_ladder_level(
            buffer in 0.0f64..30.0,
            throughput in 1.0f64..12000.0,
            last_idx in 0usize..6,
            which in 0usize..4,
            step in 0usize..320,
        ) {
            let ladder = BitrateLadder::default_six();
            let qoe = QoeParams::default();
            let ctx = AbrContext {
                ladder: &ladder,
                qoe: &qoe,
                theta: 2.1e-3,
                max_buffer_s: 30.0,
                delta_t_s: 1.0,
            };
            let config = match which {
                0 => AbrConfig::Bba { reservoir_s: 5.0, cushion_s: 20.0 },
                1 => AbrConfig::Bola { v: 0.93, gp: 5.0 },
                2 => AbrConfig::ClientMpc { search_depth: 3, throughput_window: 5 },
                _ => AbrConfig::Scripted { script_kbps: alloc::vec![500.0, 2000.0, 9000.0] },
            };
            let mut abr = AbrInstance::new(config);
            let obs = AbrObservation {
                buffer_s: buffer,
                last_bitrate_kbps: ladder.levels_kbps[last_idx],
                measured_throughput_kbps: throughput,
                step_index: step,
            };
            let r = abr.decide(&ctx, &obs);
            prop_assert!(ladder.contains(r));
        }
    }
}
