//! Receding-horizon bandwidth allocation.
//!
//! Each step the allocator rolls candidate per-player allocation plans
//! through the fitted client surrogates and the buffer recursion, scores the
//! predicted horizon QoE with the weighted efficiency/fairness objective, and
//! descends with projected finite-difference gradients on the per-step
//! simplex `{w >= 0, sum w = W(k)}`. Only the first step of the winning plan
//! is applied; the rest warm-starts the next solve.
//!
//! The uniform split is always evaluated as a candidate, so the returned
//! plan never scores worse than uniform shaping under the model.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::math;
use crate::model::{predict_bitrate, FitError, PolyModel};
use crate::qoe::QoeParams;
use crate::rng::Rng;
use crate::sim::{buffer_step_raw, AllocationContext, Allocator};

/// Longest supported model history depth inside the rollout.
const MAX_DEPTH: usize = 16;
/// Longest supported look-ahead window (steps).
const MAX_HORIZON: usize = 32;
const MAX_BACKTRACKS: usize = 40;

/// Candidate allocation: `horizon` steps by `players` entries, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationPlan {
    horizon: usize,
    players: usize,
    w: Vec<f64>,
}

impl AllocationPlan {
    pub fn zeros(horizon: usize, players: usize) -> Self {
        AllocationPlan { horizon, players, w: alloc::vec![0.0; horizon * players] }
    }

    /// Equal split of each step's capacity, with the last entry absorbing
    /// rounding so every row sums exactly to `W(k)`.
    pub fn uniform(capacities: &[f64], players: usize) -> Self {
        let mut plan = AllocationPlan::zeros(capacities.len(), players);
        for (k, &cap) in capacities.iter().enumerate() {
            plan.row_mut(k).copy_from_slice(&uniform_split(players, cap));
        }
        plan
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn players(&self) -> usize {
        self.players
    }

    pub fn get(&self, step: usize, player: usize) -> f64 {
        self.w[step * self.players + player]
    }

    pub fn set(&mut self, step: usize, player: usize, value: f64) {
        self.w[step * self.players + player] = value;
    }

    pub fn row(&self, step: usize) -> &[f64] {
        &self.w[step * self.players..(step + 1) * self.players]
    }

    pub fn row_mut(&mut self, step: usize) -> &mut [f64] {
        &mut self.w[step * self.players..(step + 1) * self.players]
    }

    /// Copies one player's allocation column into `out`.
    pub fn column_into(&self, player: usize, out: &mut [f64]) {
        for k in 0..self.horizon {
            out[k] = self.get(k, player);
        }
    }

    /// Drops the first step and repeats the final one; the usual warm start
    /// for the next receding-horizon solve.
    pub fn shifted(&self) -> Self {
        let mut out = self.clone();
        for k in 0..self.horizon.saturating_sub(1) {
            let (dst, src) = (k, k + 1);
            for i in 0..self.players {
                let v = self.get(src, i);
                out.set(dst, i, v);
            }
        }
        out
    }

    /// Max feasibility violation against per-step capacities.
    pub fn feasibility_error(&self, capacities: &[f64]) -> f64 {
        let mut worst = 0.0f64;
        for k in 0..self.horizon {
            let row = self.row(k);
            let sum: f64 = row.iter().sum();
            worst = worst.max(math::abs(sum - capacities[k]));
            for &v in row {
                worst = worst.max((-v).max(0.0));
            }
        }
        worst
    }
}

/// Exact equal split: every entry is `w / n` except the last, which absorbs
/// rounding so the sum equals `w` exactly.
pub fn uniform_split(n: usize, w: f64) -> Vec<f64> {
    debug_assert!(n >= 1);
    let share = w / n as f64;
    let mut out = alloc::vec![share; n];
    out[n - 1] = w - share * (n - 1) as f64;
    out
}

/// Descent-budget knobs.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolverConfig {
    pub max_iters: usize,
    pub step_size_init: f64,
    pub fd_epsilon: f64,
    pub tol: f64,
    /// Initial points per solve: the uniform split, the warm start when one
    /// exists, then seeded random feasible plans up to this count.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 200,
            step_size_init: 1e6,
            fd_epsilon: 1.0,
            tol: 1e-6,
            restarts: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ControllerConfig {
    /// Look-ahead horizon length; the plan spans `t_p + 1` steps.
    pub t_p: usize,
    pub gamma: f64,
    pub solver: SolverConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig { t_p: 4, gamma: 0.75, solver: SolverConfig::default() }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        if self.t_p < 1 {
            return Err(SolveError::BadInput("t_p must be >= 1"));
        }
        if self.t_p + 1 > MAX_HORIZON {
            return Err(SolveError::BadInput("horizon too long"));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(SolveError::BadInput("gamma must be in [0, 1]"));
        }
        if !(self.solver.tol > 0.0) || !(self.solver.fd_epsilon > 0.0) {
            return Err(SolveError::BadInput("tol and fd_epsilon must be positive"));
        }
        if self.solver.restarts < 1 {
            return Err(SolveError::BadInput("restarts must be >= 1"));
        }
        Ok(())
    }
}

/// What the controller knows about one player at solve time: observed state
/// windows (newest last), the previous bitrate, and scoring parameters.
#[derive(Debug, Clone, Copy)]
pub struct RolloutState<'a> {
    /// Observed buffers ending at the current one; needs `>= t_b + 1` entries.
    pub buffer_window: &'a [f64],
    /// Past allocations, newest last; needs `>= t_w` entries.
    pub bandwidth_window: &'a [f64],
    pub last_bitrate_kbps: f64,
    pub max_buffer_s: f64,
    pub theta: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveError {
    BadInput(&'static str),
    /// Player count does not match the model count.
    ModelMismatch,
    /// Even the uniform plan could not be evaluated.
    Model(FitError),
}

impl core::fmt::Display for SolveError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SolveError::BadInput(what) => write!(f, "bad solver input: {what}"),
            SolveError::ModelMismatch => write!(f, "one model per player required"),
            SolveError::Model(e) => write!(f, "model evaluation failed: {e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SolveError {}

impl From<FitError> for SolveError {
    fn from(e: FitError) -> Self {
        SolveError::Model(e)
    }
}

/// Euclidean projection of each plan row onto `{w >= 0, sum w = W(k)}`.
pub fn project_feasible(raw: &AllocationPlan, capacities: &[f64]) -> AllocationPlan {
    debug_assert_eq!(raw.horizon(), capacities.len());
    let mut out = raw.clone();
    for k in 0..out.horizon() {
        project_row(out.row_mut(k), capacities[k]);
    }
    out
}

/// Sort-based simplex projection (largest prefix whose water level stays
/// below its smallest member).
pub fn project_row(row: &mut [f64], total: f64) {
    let n = row.len();
    if n == 1 {
        row[0] = total.max(0.0);
        return;
    }
    let mut sorted: Vec<f64> = row.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    let mut rho = 0;
    for (i, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - total) / (i + 1) as f64;
        if u - candidate > 0.0 {
            rho = i + 1;
            theta = candidate;
        }
    }
    if rho == 0 {
        // all mass at the largest entry; only reachable with degenerate input
        let share = total / n as f64;
        row.fill(share);
        return;
    }
    for v in row.iter_mut() {
        *v = (*v - theta).max(0.0);
    }
}

/// Simulates one player's column through its surrogate and the buffer
/// recursion, returning the horizon-averaged QoE.
fn rollout_player(
    model: &PolyModel,
    state: &RolloutState<'_>,
    column: &[f64],
    qoe: &QoeParams,
    delta_t_s: f64,
) -> Result<f64, FitError> {
    let t_b = model.t_b;
    let t_w = model.t_w;
    if state.buffer_window.len() < t_b + 1 || state.bandwidth_window.len() < t_w {
        return Err(FitError::HistoryLengthMismatch);
    }
    let h = column.len();
    debug_assert!(h >= 2 && h <= MAX_HORIZON && t_b < MAX_DEPTH && t_w < MAX_DEPTH);

    // rolling windows, newest last
    let mut buffers = [0.0f64; MAX_DEPTH];
    let bw = &state.buffer_window[state.buffer_window.len() - (t_b + 1)..];
    buffers[..t_b + 1].copy_from_slice(bw);
    let mut bandwidths = [0.0f64; MAX_DEPTH + 1];
    if t_w > 0 {
        let ww = &state.bandwidth_window[state.bandwidth_window.len() - t_w..];
        bandwidths[..t_w].copy_from_slice(ww);
    }

    let mut r_prev = state.last_bitrate_kbps;
    let mut qoe_sum = 0.0;
    for &w_k in column {
        bandwidths[t_w] = w_k;
        let bitrate = predict_bitrate(
            model,
            &buffers[..t_b + 1],
            &bandwidths[..t_w + 1],
            r_prev,
            false,
        )?;
        let buffer_now = buffers[t_b];
        qoe_sum += crate::qoe::instant_qoe(qoe, state.theta, bitrate, r_prev, buffer_now);
        let next = buffer_step_raw(buffer_now, w_k, bitrate, delta_t_s, state.max_buffer_s);
        buffers.copy_within(1..t_b + 1, 0);
        buffers[t_b] = next;
        bandwidths.copy_within(1..t_w + 1, 0);
        r_prev = bitrate;
    }
    Ok(qoe_sum / (h - 1) as f64)
}

/// Combines per-player horizon QoE into the weighted objective.
fn combine(per_player: &[f64], etas: &[f64], gamma: f64) -> f64 {
    let n = per_player.len();
    let mean = per_player.iter().sum::<f64>() / n as f64;
    let mut unfairness = 0.0;
    if n >= 2 {
        for i in 0..n {
            for j in (i + 1)..n {
                unfairness += math::abs(etas[i] * per_player[i] - etas[j] * per_player[j]);
            }
        }
        unfairness /= n as f64;
    }
    crate::qoe::weighted_objective(gamma, mean, unfairness)
}

/// Scores a full plan: per-player rollouts through the surrogates, then the
/// weighted efficiency/fairness objective. Pure in its inputs.
pub fn rollout_objective(
    plan: &AllocationPlan,
    states: &[RolloutState<'_>],
    models: &[PolyModel],
    qoe: &QoeParams,
    gamma: f64,
    delta_t_s: f64,
) -> Result<f64, SolveError> {
    let per_player = rollout_all(plan, states, models, qoe, delta_t_s)?;
    let etas: Vec<f64> = states.iter().map(|s| s.eta).collect();
    Ok(combine(&per_player, &etas, gamma))
}

fn rollout_all(
    plan: &AllocationPlan,
    states: &[RolloutState<'_>],
    models: &[PolyModel],
    qoe: &QoeParams,
    delta_t_s: f64,
) -> Result<Vec<f64>, SolveError> {
    if states.len() != models.len() || states.len() != plan.players() {
        return Err(SolveError::ModelMismatch);
    }
    let mut column = [0.0f64; MAX_HORIZON];
    let mut out = Vec::with_capacity(states.len());
    for (i, (state, model)) in states.iter().zip(models.iter()).enumerate() {
        plan.column_into(i, &mut column[..plan.horizon()]);
        out.push(rollout_player(model, state, &column[..plan.horizon()], qoe, delta_t_s)?);
    }
    Ok(out)
}

/// Per-solve record: objective reached, the uniform plan's objective, and the
/// accepted objective values of each descent run (each non-increasing).
#[derive(Debug, Clone, PartialEq)]
pub struct SolveDiag {
    pub j_best: f64,
    pub j_uniform: f64,
    pub iterations: usize,
    pub descent: Vec<Vec<f64>>,
}

/// Multi-start projected gradient descent over the plan.
///
/// Initial points: the uniform split, the warm start when provided, then
/// seeded random feasible plans up to `restarts`. The best final plan wins;
/// ties keep the earlier candidate, so fully symmetric instances return the
/// uniform split itself. `max_iters == 0` degenerates to the uniform split.
#[allow(clippy::too_many_arguments)]
pub fn solve_allocation(
    cfg: &ControllerConfig,
    states: &[RolloutState<'_>],
    models: &[PolyModel],
    capacity_horizon: &[f64],
    qoe: &QoeParams,
    delta_t_s: f64,
    warm: Option<&AllocationPlan>,
    rng: &mut Rng,
) -> Result<(AllocationPlan, SolveDiag), SolveError> {
    cfg.validate()?;
    let h = cfg.t_p + 1;
    let n = states.len();
    if n == 0 {
        return Err(SolveError::BadInput("no players"));
    }
    if capacity_horizon.len() != h {
        return Err(SolveError::BadInput("capacity horizon length must be t_p + 1"));
    }
    if capacity_horizon.iter().any(|&w| !(w > 0.0)) {
        return Err(SolveError::BadInput("capacities must be positive"));
    }
    let etas: Vec<f64> = states.iter().map(|s| s.eta).collect();

    let uniform = AllocationPlan::uniform(capacity_horizon, n);
    let per_player = rollout_all(&uniform, states, models, qoe, delta_t_s)?;
    let j_uniform = combine(&per_player, &etas, cfg.gamma);

    if cfg.solver.max_iters == 0 {
        let diag = SolveDiag {
            j_best: j_uniform,
            j_uniform,
            iterations: 0,
            descent: Vec::new(),
        };
        return Ok((uniform, diag));
    }

    let mut starts: Vec<AllocationPlan> = Vec::with_capacity(cfg.solver.restarts);
    starts.push(uniform.clone());
    if let Some(w) = warm {
        if w.horizon() == h && w.players() == n && starts.len() < cfg.solver.restarts.max(2) {
            starts.push(project_feasible(w, capacity_horizon));
        }
    }
    while starts.len() < cfg.solver.restarts {
        starts.push(random_feasible(capacity_horizon, n, rng));
    }

    let mut best_plan = uniform;
    let mut best_j = j_uniform;
    let mut iterations = 0usize;
    let mut descent = Vec::with_capacity(starts.len());
    for start in &starts {
        let (plan, j, trace, iters) =
            descend(cfg, start, states, models, capacity_horizon, qoe, delta_t_s, &etas)?;
        iterations += iters;
        descent.push(trace);
        if j < best_j {
            best_j = j;
            best_plan = plan;
        }
    }

    // squeeze out projection rounding so row sums match capacity exactly
    for k in 0..h {
        let row = best_plan.row_mut(k);
        let sum: f64 = row.iter().sum();
        let drift = sum - capacity_horizon[k];
        if drift != 0.0 {
            let argmax = (0..row.len())
                .max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap())
                .unwrap();
            row[argmax] = (row[argmax] - drift).max(0.0);
        }
    }

    let diag = SolveDiag { j_best: best_j, j_uniform, iterations, descent };
    Ok((best_plan, diag))
}

fn random_feasible(capacities: &[f64], players: usize, rng: &mut Rng) -> AllocationPlan {
    let mut plan = AllocationPlan::zeros(capacities.len(), players);
    for (k, &cap) in capacities.iter().enumerate() {
        let row = plan.row_mut(k);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = -math::ln(1.0 - rng.next_f64());
            sum += *v;
        }
        for v in row.iter_mut() {
            *v *= cap / sum;
        }
    }
    plan
}

/// One projected-gradient run with backtracking. Per-entry finite differences
/// touch only the owning player's rollout, so a full gradient costs
/// `2 * h * n` single-player rollouts instead of `2 * h * n` full objectives.
#[allow(clippy::too_many_arguments)]
fn descend(
    cfg: &ControllerConfig,
    start: &AllocationPlan,
    states: &[RolloutState<'_>],
    models: &[PolyModel],
    capacities: &[f64],
    qoe: &QoeParams,
    dt: f64,
    etas: &[f64],
) -> Result<(AllocationPlan, f64, Vec<f64>, usize), SolveError> {
    let h = start.horizon();
    let n = start.players();
    let eps = cfg.solver.fd_epsilon;

    let mut x = project_feasible(start, capacities);
    let mut per_player = rollout_all(&x, states, models, qoe, dt)?;
    let mut jx = combine(&per_player, etas, cfg.gamma);
    let mut trace = alloc::vec![jx];
    let mut step = cfg.solver.step_size_init;
    let mut gradient = AllocationPlan::zeros(h, n);
    let mut column = [0.0f64; MAX_HORIZON];
    let mut iters = 0usize;

    for _ in 0..cfg.solver.max_iters {
        iters += 1;
        // finite-difference gradient, exploiting per-player separability
        let mut scratch = per_player.clone();
        for i in 0..n {
            x.column_into(i, &mut column[..h]);
            for k in 0..h {
                let held = column[k];
                column[k] = held + eps;
                let up = rollout_player(&models[i], &states[i], &column[..h], qoe, dt)?;
                column[k] = held - eps;
                let down = rollout_player(&models[i], &states[i], &column[..h], qoe, dt)?;
                column[k] = held;
                scratch[i] = up;
                let j_up = combine(&scratch, etas, cfg.gamma);
                scratch[i] = down;
                let j_down = combine(&scratch, etas, cfg.gamma);
                scratch[i] = per_player[i];
                gradient.set(k, i, (j_up - j_down) / (2.0 * eps));
            }
        }

        // backtracking projected step
        let mut trial_step = step;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let mut candidate = x.clone();
            for k in 0..h {
                for i in 0..n {
                    let v = candidate.get(k, i) - trial_step * gradient.get(k, i);
                    candidate.set(k, i, v);
                }
                project_row(candidate.row_mut(k), capacities[k]);
            }
            let cand_players = rollout_all(&candidate, states, models, qoe, dt)?;
            let jc = combine(&cand_players, etas, cfg.gamma);
            if jc < jx {
                let improvement = jx - jc;
                x = candidate;
                per_player = cand_players;
                jx = jc;
                trace.push(jx);
                step = trial_step * 2.0;
                accepted = true;
                if improvement < cfg.solver.tol {
                    return Ok((x, jx, trace, iters));
                }
                break;
            }
            trial_step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    Ok((x, jx, trace, iters))
}

// ---------------------------------------------------------------------------
// Allocators
// ---------------------------------------------------------------------------

/// Uniform traffic shaping: every player gets `W / N` each step.
#[derive(Debug, Default)]
pub struct UniformAllocator;

impl Allocator for UniformAllocator {
    fn allocate(&mut self, ctx: &AllocationContext<'_>) -> Result<Vec<f64>, String> {
        Ok(uniform_split(ctx.views.len(), ctx.capacity_kbps))
    }
}

/// The model-predictive allocator: re-solves the horizon plan every step from
/// a shifted warm start and applies the first step.
#[derive(Debug)]
pub struct CaneAllocator {
    pub cfg: ControllerConfig,
    models: Vec<PolyModel>,
    warm: Option<AllocationPlan>,
    rng: Rng,
    diags: Vec<SolveDiag>,
}

impl CaneAllocator {
    pub fn new(cfg: ControllerConfig, models: Vec<PolyModel>) -> Self {
        let rng = Rng::substream(cfg.solver.seed, 0x636e_6531);
        CaneAllocator { cfg, models, warm: None, rng, diags: Vec::new() }
    }

    /// Clears warm start and diagnostics and re-seeds; call between sessions.
    pub fn reset(&mut self) {
        self.warm = None;
        self.diags.clear();
        self.rng = Rng::substream(self.cfg.solver.seed, 0x636e_6531);
    }

    /// Per-step solve records accumulated since the last reset.
    pub fn diags(&self) -> &[SolveDiag] {
        &self.diags
    }

    pub fn take_diags(&mut self) -> Vec<SolveDiag> {
        core::mem::take(&mut self.diags)
    }
}

impl Allocator for CaneAllocator {
    fn horizon(&self) -> usize {
        self.cfg.t_p
    }

    fn allocate(&mut self, ctx: &AllocationContext<'_>) -> Result<Vec<f64>, String> {
        if ctx.views.len() != self.models.len() {
            return Err("player count does not match model count".to_string());
        }
        let states: Vec<RolloutState<'_>> = ctx
            .views
            .iter()
            .map(|v| RolloutState {
                buffer_window: &v.observed_buffer_window,
                bandwidth_window: &v.bandwidth_window,
                last_bitrate_kbps: v.observed_last_bitrate_kbps,
                max_buffer_s: v.max_buffer_s,
                theta: v.theta,
                eta: v.eta,
            })
            .collect();
        let mut cfg = self.cfg.clone();
        cfg.gamma = ctx.gamma;
        let warm = self.warm.as_ref().map(|p| p.shifted());
        let (plan, diag) = solve_allocation(
            &cfg,
            &states,
            &self.models,
            ctx.capacity_horizon,
            ctx.qoe,
            ctx.delta_t_s,
            warm.as_ref(),
            &mut self.rng,
        )
        .map_err(|e| e.to_string())?;
        let first = plan.row(0).to_vec();
        self.warm = Some(plan);
        self.diags.push(diag);
        Ok(first)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abr::BitrateLadder;
    use crate::model::MonomialBasis;

    /// Model that always predicts `value`, with single-entry histories.
    fn constant_model(value: f64, ladder: &BitrateLadder) -> PolyModel {
        let size = MonomialBasis::new(3, 1).unwrap().size();
        let mut coeffs = alloc::vec![0.0; size];
        coeffs[0] = value;
        PolyModel::new("const", 0, 0, 1, ladder.clone(), alloc::vec![(0.0, 1.0); 3], coeffs)
            .unwrap()
    }

    /// Model predicting `base + slope * w(t)` (degree-1 on 3 inputs).
    /// Basis order over (b, w, r_prev): 1, r_prev, w, b.
    fn linear_w_model(base: f64, slope: f64, ladder: &BitrateLadder) -> PolyModel {
        let size = MonomialBasis::new(3, 1).unwrap().size();
        let mut coeffs = alloc::vec![0.0; size];
        coeffs[0] = base;
        coeffs[2] = slope;
        PolyModel::new("lin", 0, 0, 1, ladder.clone(), alloc::vec![(0.0, 1.0); 3], coeffs)
            .unwrap()
    }

    fn state<'a>(buffer: &'a [f64], bandwidth: &'a [f64], eta: f64) -> RolloutState<'a> {
        RolloutState {
            buffer_window: buffer,
            bandwidth_window: bandwidth,
            last_bitrate_kbps: 1200.0,
            max_buffer_s: 30.0,
            theta: 2.1e-3,
            eta,
        }
    }

    #[test]
    fn linear_model_basis_order_is_as_documented() {
        let ladder = BitrateLadder::default_six();
        let model = linear_w_model(100.0, 0.5, &ladder);
        let got = predict_bitrate(&model, &[10.0], &[2000.0], 750.0, false).unwrap();
        assert_eq!(got, 1100.0);
    }

    #[test]
    fn projection_examples() {
        let mut row = [3.0, 2.0, 1.0];
        project_row(&mut row, 3.0);
        assert_eq!(row, [2.0, 1.0, 0.0]);

        let mut feasible = [2.0, 1.0, 1.0];
        project_row(&mut feasible, 4.0);
        assert_eq!(feasible, [2.0, 1.0, 1.0]);

        let mut negative = [-1.0, -1.0];
        project_row(&mut negative, 4.0);
        assert_eq!(negative, [2.0, 2.0]);
    }

    #[test]
    fn projection_matches_bisection_oracle() {
        let mut rng = Rng::new(31);
        for _ in 0..1000 {
            let n = 2 + rng.below(6);
            let total = rng.uniform(100.0, 12000.0);
            let mut row: Vec<f64> = (0..n).map(|_| rng.uniform(-5000.0, 12000.0)).collect();
            let original = row.clone();
            project_row(&mut row, total);

            // independent oracle: bisection on the water level
            let (mut lo, mut hi) = (-20000.0, 20000.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let sum: f64 = original.iter().map(|&v| (v - mid).max(0.0)).sum();
                if sum > total {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let theta = 0.5 * (lo + hi);
            for (got, &raw) in row.iter().zip(original.iter()) {
                assert!((got - (raw - theta).max(0.0)).abs() < 1e-9);
            }
            let sum: f64 = row.iter().sum();
            assert!((sum - total).abs() < 1e-9 * total.max(1.0));
        }
    }

    #[test]
    fn uniform_split_sums_exactly() {
        assert_eq!(uniform_split(4, 4000.0), alloc::vec![1000.0; 4]);
        assert_eq!(uniform_split(1, 777.0), alloc::vec![777.0]);
        let thirds = uniform_split(3, 1000.0);
        assert_eq!(thirds.iter().sum::<f64>(), 1000.0);
        assert!((thirds[0] - 1000.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn symmetric_players_score_zero_unfairness() {
        let ladder = BitrateLadder::default_six();
        let models = [constant_model(1200.0, &ladder), constant_model(1200.0, &ladder)];
        let buffer = [10.0, 10.0, 10.0];
        let bandwidth = [1000.0, 1000.0];
        let states = [state(&buffer, &bandwidth, 1.0), state(&buffer, &bandwidth, 1.0)];
        let plan = AllocationPlan::uniform(&[4000.0; 5], 2);
        let j = rollout_objective(&plan, &states, &models, &QoeParams::default(), 1.0, 1.0)
            .unwrap();
        assert!(j.abs() < 1e-12, "J = {j}");
    }

    #[test]
    fn single_player_objective_matches_hand_rollout() {
        let ladder = BitrateLadder::default_six();
        let models = [constant_model(1200.0, &ladder)];
        let buffer = [8.0];
        let bandwidth = [1500.0];
        let states = [state(&buffer, &bandwidth, 1.0)];
        let plan = AllocationPlan::uniform(&[2000.0; 5], 1);
        let qoe = QoeParams::default();
        let j = rollout_objective(&plan, &states, &models, &qoe, 0.0, 1.0).unwrap();

        // independent composition of the same recursion
        let mut b = 8.0;
        let mut r_prev = 1200.0;
        let mut total = 0.0;
        for _ in 0..5 {
            let r = 1200.0f64;
            total += crate::qoe::instant_qoe(&qoe, 2.1e-3, r, r_prev, b);
            b = (b + (2000.0 / r - 1.0)).clamp(0.0, 30.0);
            r_prev = r;
        }
        let expect = -(total / 4.0);
        assert!((j - expect).abs() < 1e-12, "J = {j}, expect {expect}");
    }

    #[test]
    fn doubling_etas_doubles_the_fairness_term() {
        let ladder = BitrateLadder::default_six();
        let models = [
            linear_w_model(300.0, 0.6, &ladder),
            constant_model(2850.0, &ladder),
        ];
        let buffer = [10.0];
        let bandwidth = [1000.0];
        let states_half =
            [state(&buffer, &bandwidth, 0.5), state(&buffer, &bandwidth, 0.5)];
        let states_full =
            [state(&buffer, &bandwidth, 1.0), state(&buffer, &bandwidth, 1.0)];
        let mut plan = AllocationPlan::uniform(&[3000.0; 5], 2);
        plan.set(0, 0, 2000.0);
        plan.set(0, 1, 1000.0);
        let qoe = QoeParams::default();
        let j_half =
            rollout_objective(&plan, &states_half, &models, &qoe, 1.0, 1.0).unwrap();
        let j_full =
            rollout_objective(&plan, &states_full, &models, &qoe, 1.0, 1.0).unwrap();
        assert!((j_full - 2.0 * j_half).abs() < 1e-12);
    }

    fn toy_cfg(max_iters: usize, restarts: usize) -> ControllerConfig {
        ControllerConfig {
            t_p: 1,
            gamma: 0.75,
            solver: SolverConfig {
                max_iters,
                restarts,
                seed: 9,
                ..SolverConfig::default()
            },
        }
    }

    #[test]
    fn zero_iterations_returns_uniform_split() {
        let ladder = BitrateLadder::default_six();
        let models = [
            linear_w_model(300.0, 0.5, &ladder),
            linear_w_model(300.0, 0.8, &ladder),
        ];
        let buffer = [10.0];
        let bandwidth = [1000.0];
        let states = [state(&buffer, &bandwidth, 1.0), state(&buffer, &bandwidth, 1.0)];
        let mut rng = Rng::new(1);
        let (plan, diag) = solve_allocation(
            &toy_cfg(0, 3),
            &states,
            &models,
            &[4000.0, 4000.0],
            &QoeParams::default(),
            1.0,
            None,
            &mut rng,
        )
        .unwrap();
        assert_eq!(plan.row(0), &[2000.0, 2000.0]);
        assert_eq!(plan.row(1), &[2000.0, 2000.0]);
        assert_eq!(diag.j_best, diag.j_uniform);
    }

    #[test]
    fn symmetric_instance_returns_equal_split() {
        let ladder = BitrateLadder::default_six();
        let models = [
            linear_w_model(300.0, 0.7, &ladder),
            linear_w_model(300.0, 0.7, &ladder),
        ];
        let buffer = [10.0];
        let bandwidth = [1000.0];
        let states = [state(&buffer, &bandwidth, 1.0), state(&buffer, &bandwidth, 1.0)];
        let mut cfg = toy_cfg(100, 3);
        cfg.gamma = 1.0;
        let mut rng = Rng::new(2);
        let (plan, diag) = solve_allocation(
            &cfg,
            &states,
            &models,
            &[4000.0, 4000.0],
            &QoeParams::default(),
            1.0,
            None,
            &mut rng,
        )
        .unwrap();
        for k in 0..2 {
            assert!((plan.get(k, 0) - plan.get(k, 1)).abs() < 1.0);
        }
        assert!(diag.j_best <= diag.j_uniform + 1e-6);
    }

    #[test]
    fn descent_is_monotone_and_beats_uniform() {
        let ladder = BitrateLadder::default_six();
        let models = [
            linear_w_model(200.0, 0.9, &ladder),
            constant_model(4300.0, &ladder),
        ];
        let buffer = [4.0];
        let bandwidth = [800.0];
        let states = [state(&buffer, &bandwidth, 1.0), state(&buffer, &bandwidth, 1.0)];
        let mut rng = Rng::new(3);
        let (plan, diag) = solve_allocation(
            &toy_cfg(150, 3),
            &states,
            &models,
            &[4000.0, 4000.0],
            &QoeParams::default(),
            1.0,
            None,
            &mut rng,
        )
        .unwrap();
        assert!(diag.j_best <= diag.j_uniform + 1e-9);
        for run in &diag.descent {
            for pair in run.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-15);
            }
        }
        assert!(plan.feasibility_error(&[4000.0, 4000.0]) < 1e-6);
    }

    #[test]
    fn quality_pinned_player_donates_bandwidth() {
        // player 1's model ignores its allocation; fairness shifts bandwidth
        // toward player 0, whose predicted bitrate tracks w.
        let ladder = BitrateLadder::default_six();
        let models = [
            linear_w_model(100.0, 0.9, &ladder),
            constant_model(4300.0, &ladder),
        ];
        let buffer = [10.0];
        let bandwidth = [1000.0];
        let states = [state(&buffer, &bandwidth, 1.0), state(&buffer, &bandwidth, 1.0)];
        let mut cfg = toy_cfg(200, 3);
        cfg.gamma = 1.0;
        let mut rng = Rng::new(4);
        let (plan, diag) = solve_allocation(
            &cfg,
            &states,
            &models,
            &[4000.0, 4000.0],
            &QoeParams::default(),
            1.0,
            None,
            &mut rng,
        )
        .unwrap();
        assert!(
            plan.get(0, 0) > 2500.0,
            "expected a strong shift toward the responsive player, got {}",
            plan.get(0, 0)
        );

        // brute-force grid oracle at 50 kbps
        let mut best = f64::INFINITY;
        let grid = (0..=80).map(|i| i as f64 * 50.0);
        for w0 in grid.clone() {
            for w1 in grid.clone() {
                let mut p = AllocationPlan::zeros(2, 2);
                p.set(0, 0, w0);
                p.set(0, 1, 4000.0 - w0);
                p.set(1, 0, w1);
                p.set(1, 1, 4000.0 - w1);
                let j = rollout_objective(&p, &states, &models, &QoeParams::default(), 1.0, 1.0)
                    .unwrap();
                best = best.min(j);
            }
        }
        assert!(
            diag.j_best <= best + 1e-3,
            "solver {} vs grid oracle {best}",
            diag.j_best
        );
    }

    #[test]
    fn player_permutation_permutes_the_plan() {
        let ladder = BitrateLadder::default_six();
        let model_a = linear_w_model(250.0, 0.8, &ladder);
        let model_b = constant_model(2850.0, &ladder);
        let buffer_a = [4.0];
        let buffer_b = [18.0];
        let bandwidth = [900.0];
        let qoe = QoeParams::default();
        // single start keeps the algorithm permutation-equivariant
        let cfg = toy_cfg(120, 1);
        let mut rng = Rng::new(5);
        let states_ab = [state(&buffer_a, &bandwidth, 1.0), state(&buffer_b, &bandwidth, 0.9)];
        let (plan_ab, _) = solve_allocation(
            &cfg,
            &states_ab,
            &[model_a.clone(), model_b.clone()],
            &[4000.0, 4000.0],
            &qoe,
            1.0,
            None,
            &mut rng,
        )
        .unwrap();
        let states_ba = [state(&buffer_b, &bandwidth, 0.9), state(&buffer_a, &bandwidth, 1.0)];
        let (plan_ba, _) = solve_allocation(
            &cfg,
            &states_ba,
            &[model_b, model_a],
            &[4000.0, 4000.0],
            &qoe,
            1.0,
            None,
            &mut rng,
        )
        .unwrap();
        for k in 0..2 {
            assert!((plan_ab.get(k, 0) - plan_ba.get(k, 1)).abs() < 1e-6);
            assert!((plan_ab.get(k, 1) - plan_ba.get(k, 0)).abs() < 1e-6);
        }
    }

    #[test]
    fn warm_started_allocator_reaches_a_fixed_point() {
        use crate::sim::{AllocationContext, Allocator, PlayerView};

        let ladder = BitrateLadder::default_six();
        let models = alloc::vec![
            linear_w_model(300.0, 0.6, &ladder),
            linear_w_model(300.0, 0.9, &ladder),
        ];
        let cfg = ControllerConfig {
            t_p: 2,
            gamma: 0.75,
            solver: SolverConfig { max_iters: 80, restarts: 2, seed: 6, ..Default::default() },
        };
        let mut allocator = CaneAllocator::new(cfg, models);
        let view = |buffer: f64| PlayerView {
            observed_buffer_s: buffer,
            observed_last_bitrate_kbps: 1200.0,
            observed_buffer_window: alloc::vec![buffer; 4],
            bandwidth_window: alloc::vec![2000.0; 4],
            buffer_full: false,
            max_buffer_s: 30.0,
            theta: 2.1e-3,
            eta: 1.0,
        };
        let views = [view(6.0), view(14.0)];
        let qoe = QoeParams::default();
        // frozen controller inputs: re-solving from the shifted warm start
        // must settle on the same allocation
        let mut last = Vec::new();
        let mut prev = Vec::new();
        for step in 0..10 {
            let ctx = AllocationContext {
                step,
                capacity_kbps: 4000.0,
                capacity_horizon: &[4000.0, 4000.0, 4000.0],
                views: &views,
                qoe: &qoe,
                gamma: 0.75,
                delta_t_s: 1.0,
            };
            prev = last;
            last = allocator.allocate(&ctx).unwrap();
            let sum: f64 = last.iter().sum();
            assert!((sum - 4000.0).abs() <= 1e-6);
        }
        for (a, b) in last.iter().zip(prev.iter()) {
            assert!((a - b).abs() < 1.0, "allocations still moving: {a} vs {b}");
        }
        for diag in allocator.diags() {
            assert!(diag.j_best <= diag.j_uniform + 1e-6);
        }
    }
}
