//! Polynomial surrogates of client adaptation behavior.
//!
//! The offline stage drives one client at a time over training traces,
//! collects `(buffer history, bandwidth history, previous bitrate) -> bitrate`
//! rows, and fits a total-degree polynomial by ridge-regularized least
//! squares. Inputs are affinely scaled into `[-1, 1]` before monomial
//! expansion so high-degree terms stay inside double range; the scaling is
//! part of the model, so prediction is self-contained.

use alloc::string::String;
use alloc::vec::Vec;

use crate::abr::BitrateLadder;
use crate::math;
use crate::qoe::{ObjectiveConfig, QoeParams};
use crate::sim::{run_session, AllocationContext, Allocator, PlayerSpec, SessionConfig};
use crate::trace::BandwidthTrace;

/// Hands every player the whole link as available bandwidth; only meaningful
/// for the single-player data-collection sessions.
struct FullLinkAllocator;

impl Allocator for FullLinkAllocator {
    fn allocate(&mut self, ctx: &AllocationContext<'_>) -> Result<Vec<f64>, alloc::string::String> {
        Ok(alloc::vec![ctx.capacity_kbps; ctx.views.len()])
    }
}

/// Hard cap keeping the stack-allocated power table small.
const MAX_POWER_TABLE: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub enum FitError {
    InsufficientTraces,
    /// Fewer training rows than coefficients with no ridge to regularize.
    InsufficientRows { rows: usize, coefficients: usize },
    SingularSystem,
    DimensionMismatch,
    HistoryLengthMismatch,
    EmptyTestSplit,
    InvalidParams(&'static str),
}

impl core::fmt::Display for FitError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FitError::InsufficientTraces => write!(f, "need at least two traces for a split"),
            FitError::InsufficientRows { rows, coefficients } => {
                write!(f, "{rows} training rows cannot pin {coefficients} coefficients at ridge 0")
            }
            FitError::SingularSystem => write!(f, "normal equations are singular"),
            FitError::DimensionMismatch => write!(f, "row width does not match model inputs"),
            FitError::HistoryLengthMismatch => {
                write!(f, "history lengths do not match the model depths")
            }
            FitError::EmptyTestSplit => write!(f, "test split is empty"),
            FitError::InvalidParams(what) => write!(f, "invalid parameters: {what}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for FitError {}

// ---------------------------------------------------------------------------
// Monomial basis
// ---------------------------------------------------------------------------

/// All monomials of total degree <= `degree` over `n_inputs` variables, in a
/// fixed enumeration: exponent vectors in ascending lexicographic order
/// (constant term first). Coefficient vectors align to this order.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialBasis {
    pub n_inputs: usize,
    pub degree: usize,
    /// `offsets[m]..offsets[m+1]` indexes `terms` for monomial `m`.
    offsets: Vec<u32>,
    /// Sparse `(input index, exponent)` factors.
    terms: Vec<(u8, u8)>,
}

impl MonomialBasis {
    pub fn new(n_inputs: usize, degree: usize) -> Result<Self, FitError> {
        if n_inputs == 0 || degree == 0 {
            return Err(FitError::InvalidParams("need n_inputs >= 1 and degree >= 1"));
        }
        if n_inputs > u8::MAX as usize || degree > u8::MAX as usize {
            return Err(FitError::InvalidParams("basis dimensions too large"));
        }
        if n_inputs * (degree + 1) > MAX_POWER_TABLE {
            return Err(FitError::InvalidParams("basis power table too large"));
        }
        let mut offsets = Vec::new();
        let mut terms = Vec::new();
        let mut exps = alloc::vec![0u8; n_inputs];
        offsets.push(0);
        enumerate(&mut exps, 0, degree as u8, &mut |e| {
            for (i, &p) in e.iter().enumerate() {
                if p > 0 {
                    terms.push((i as u8, p));
                }
            }
            offsets.push(terms.len() as u32);
        });
        Ok(MonomialBasis { n_inputs, degree, offsets, terms })
    }

    /// Number of monomials, `C(n_inputs + degree, degree)`.
    pub fn size(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Evaluates every monomial at `x` into `out`.
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_inputs);
        debug_assert_eq!(out.len(), self.size());
        let mut powers = [0.0f64; MAX_POWER_TABLE];
        let stride = self.degree + 1;
        for (i, &xi) in x.iter().enumerate() {
            let mut p = 1.0;
            for e in 0..=self.degree {
                powers[i * stride + e] = p;
                p *= xi;
            }
        }
        for m in 0..self.size() {
            let lo = self.offsets[m] as usize;
            let hi = self.offsets[m + 1] as usize;
            let mut v = 1.0;
            for &(idx, exp) in &self.terms[lo..hi] {
                v *= powers[idx as usize * stride + exp as usize];
            }
            out[m] = v;
        }
    }
}

fn enumerate(exps: &mut [u8], at: usize, remaining: u8, emit: &mut impl FnMut(&[u8])) {
    if at == exps.len() {
        emit(exps);
        return;
    }
    for e in 0..=remaining {
        exps[at] = e;
        enumerate(exps, at + 1, remaining - e, emit);
    }
    exps[at] = 0;
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// One observation of a client's decision.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    /// `t_b + 1` buffers ending at the decision step.
    pub buffer_history: Vec<f64>,
    /// `t_w + 1` allocations ending at the decision step.
    pub bandwidth_history: Vec<f64>,
    pub prev_bitrate: f64,
    pub target_bitrate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbrDataset {
    pub source_abr: String,
    pub split: Split,
    pub t_b: usize,
    pub t_w: usize,
    pub rows: Vec<DatasetRow>,
}

impl AbrDataset {
    pub fn n_inputs(&self) -> usize {
        self.t_b + self.t_w + 3
    }

    fn write_inputs(&self, row: &DatasetRow, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&row.buffer_history);
        out.extend_from_slice(&row.bandwidth_history);
        out.push(row.prev_bitrate);
    }
}

/// Train/test datasets split by session (80/20 by default), never by row:
/// rows within a session are autocorrelated, so a by-row split would leak.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPair {
    pub train: AbrDataset,
    pub test: AbrDataset,
}

impl DatasetPair {
    pub fn total_rows(&self) -> usize {
        self.train.rows.len() + self.test.rows.len()
    }
}

/// Extracts decision rows from one single-player session over `trace`.
///
/// The logged bandwidth input is the bandwidth *available* to the player each
/// step (the whole link for a lone player), matching what an allocator knows
/// about the players it shapes; pauses on a full buffer still happen in the
/// plant but do not zero the availability column. The first
/// `max(t_b, t_w) + 1` steps are dropped as warm-up.
pub fn generate_rows(
    spec: &PlayerSpec,
    trace: &BandwidthTrace,
    qoe: &QoeParams,
    session: &SessionConfig,
    t_b: usize,
    t_w: usize,
) -> Result<Vec<DatasetRow>, FitError> {
    let objective = ObjectiveConfig::new(0.0, alloc::vec![spec.eta])
        .map_err(|_| FitError::InvalidParams("bad eta"))?;
    let mut allocator = FullLinkAllocator;
    let log = run_session(
        core::slice::from_ref(spec),
        trace,
        &mut allocator,
        qoe,
        &objective,
        session,
    )
    .map_err(|_| FitError::InvalidParams("session failed"))?;

    let warmup = t_b.max(t_w) + 1;
    let mut rows = Vec::new();
    for t in warmup..log.steps {
        let buffer_history: Vec<f64> =
            (t - t_b..=t).map(|k| log.rows[k].buffer_s).collect();
        let bandwidth_history: Vec<f64> =
            (t - t_w..=t).map(|k| log.rows[k].allocation_kbps).collect();
        rows.push(DatasetRow {
            buffer_history,
            bandwidth_history,
            prev_bitrate: log.rows[t - 1].bitrate_kbps,
            target_bitrate: log.rows[t].bitrate_kbps,
        });
    }
    Ok(rows)
}

/// Runs one session per trace and splits by session into train/test.
pub fn generate_dataset(
    spec: &PlayerSpec,
    traces: &[BandwidthTrace],
    qoe: &QoeParams,
    session: &SessionConfig,
    t_b: usize,
    t_w: usize,
    train_fraction: f64,
) -> Result<DatasetPair, FitError> {
    if traces.len() < 2 {
        return Err(FitError::InsufficientTraces);
    }
    if !(0.0 < train_fraction && train_fraction < 1.0) {
        return Err(FitError::InvalidParams("train_fraction must be in (0, 1)"));
    }
    let n_train = ((traces.len() as f64 * train_fraction) as usize)
        .clamp(1, traces.len() - 1);
    let mut train_rows = Vec::new();
    let mut test_rows = Vec::new();
    for (i, trace) in traces.iter().enumerate() {
        let rows = generate_rows(spec, trace, qoe, session, t_b, t_w)?;
        if i < n_train {
            train_rows.extend(rows);
        } else {
            test_rows.extend(rows);
        }
    }
    let id = String::from(spec.abr.id());
    Ok(DatasetPair {
        train: AbrDataset {
            source_abr: id.clone(),
            split: Split::Train,
            t_b,
            t_w,
            rows: train_rows,
        },
        test: AbrDataset { source_abr: id, split: Split::Test, t_b, t_w, rows: test_rows },
    })
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Fitted polynomial surrogate of one client's decision rule.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyModel {
    pub abr_id: String,
    pub t_b: usize,
    pub t_w: usize,
    pub degree: usize,
    pub ladder: BitrateLadder,
    /// Per-input `(offset, half_range)` mapping raw inputs toward `[-1, 1]`.
    pub scaling: Vec<(f64, f64)>,
    /// Aligned to the [`MonomialBasis`] enumeration.
    pub coefficients: Vec<f64>,
    basis: MonomialBasis,
}

impl PolyModel {
    pub fn new(
        abr_id: impl Into<String>,
        t_b: usize,
        t_w: usize,
        degree: usize,
        ladder: BitrateLadder,
        scaling: Vec<(f64, f64)>,
        coefficients: Vec<f64>,
    ) -> Result<Self, FitError> {
        let n_inputs = t_b + t_w + 3;
        let basis = MonomialBasis::new(n_inputs, degree)?;
        if scaling.len() != n_inputs {
            return Err(FitError::DimensionMismatch);
        }
        if coefficients.len() != basis.size() {
            return Err(FitError::DimensionMismatch);
        }
        if scaling.iter().any(|&(_, half)| !(half > 0.0)) {
            return Err(FitError::InvalidParams("scaling half-ranges must be positive"));
        }
        Ok(PolyModel {
            abr_id: abr_id.into(),
            t_b,
            t_w,
            degree,
            ladder,
            scaling,
            coefficients,
            basis,
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.t_b + self.t_w + 3
    }

    fn eval_raw(&self, inputs: &[f64]) -> f64 {
        debug_assert_eq!(inputs.len(), self.n_inputs());
        let mut scaled = [0.0f64; MAX_POWER_TABLE];
        for (i, &x) in inputs.iter().enumerate() {
            let (offset, half) = self.scaling[i];
            scaled[i] = (x - offset) / half;
        }
        let n = self.basis.size();
        let mut acc = 0.0;
        // identical to basis.eval followed by a dot product, fused
        let mut powers = [0.0f64; MAX_POWER_TABLE];
        let stride = self.degree + 1;
        for i in 0..self.n_inputs() {
            let mut p = 1.0;
            for e in 0..=self.degree {
                powers[i * stride + e] = p;
                p *= scaled[i];
            }
        }
        for m in 0..n {
            let lo = self.basis.offsets[m] as usize;
            let hi = self.basis.offsets[m + 1] as usize;
            let mut v = self.coefficients[m];
            if v == 0.0 {
                continue;
            }
            for &(idx, exp) in &self.basis.terms[lo..hi] {
                v *= powers[idx as usize * stride + exp as usize];
            }
            acc += v;
        }
        acc
    }
}

/// Predicts the next bitrate from histories ending at the decision step.
///
/// With `quantize` off the raw polynomial output is clamped to the ladder
/// range (the continuous relaxation the optimizer differentiates through);
/// with it on the output snaps to the nearest level, ties toward the lower.
pub fn predict_bitrate(
    model: &PolyModel,
    buffer_history: &[f64],
    bandwidth_history: &[f64],
    prev_bitrate: f64,
    quantize: bool,
) -> Result<f64, FitError> {
    if buffer_history.len() != model.t_b + 1 || bandwidth_history.len() != model.t_w + 1 {
        return Err(FitError::HistoryLengthMismatch);
    }
    let mut inputs = [0.0f64; MAX_POWER_TABLE];
    let n = model.n_inputs();
    inputs[..buffer_history.len()].copy_from_slice(buffer_history);
    inputs[buffer_history.len()..n - 1].copy_from_slice(bandwidth_history);
    inputs[n - 1] = prev_bitrate;
    let raw = model.eval_raw(&inputs[..n]);
    let clamped = raw.clamp(model.ladder.min(), model.ladder.max());
    Ok(if quantize { model.ladder.nearest(clamped) } else { clamped })
}

/// Fits a surrogate to the training split by minimizing squared error plus
/// `ridge * ||c||^2` over the monomial basis, via the normal equations and a
/// Cholesky solve with one round of iterative refinement.
pub fn fit_poly_model(
    train: &AbrDataset,
    degree: usize,
    ridge: f64,
    ladder: &BitrateLadder,
) -> Result<PolyModel, FitError> {
    if !(ridge >= 0.0) {
        return Err(FitError::InvalidParams("ridge must be non-negative"));
    }
    let n_inputs = train.n_inputs();
    let basis = MonomialBasis::new(n_inputs, degree)?;
    let p = basis.size();
    let rows = train.rows.len();
    if rows == 0 {
        return Err(FitError::InsufficientRows { rows: 0, coefficients: p });
    }
    if rows < p && ridge == 0.0 {
        return Err(FitError::InsufficientRows { rows, coefficients: p });
    }
    for row in &train.rows {
        if row.buffer_history.len() != train.t_b + 1
            || row.bandwidth_history.len() != train.t_w + 1
        {
            return Err(FitError::DimensionMismatch);
        }
    }

    // scaling from training ranges
    let mut mins = alloc::vec![f64::INFINITY; n_inputs];
    let mut maxs = alloc::vec![f64::NEG_INFINITY; n_inputs];
    let mut raw = Vec::with_capacity(n_inputs);
    for row in &train.rows {
        train.write_inputs(row, &mut raw);
        for (i, &x) in raw.iter().enumerate() {
            mins[i] = mins[i].min(x);
            maxs[i] = maxs[i].max(x);
        }
    }
    let scaling: Vec<(f64, f64)> = mins
        .iter()
        .zip(maxs.iter())
        .map(|(&lo, &hi)| {
            let half = (hi - lo) / 2.0;
            ((lo + hi) / 2.0, if half > 0.0 { half } else { 1.0 })
        })
        .collect();

    // accumulate normal equations G = X^T X (upper triangle), rhs = X^T y
    let mut gram = alloc::vec![0.0f64; p * p];
    let mut rhs = alloc::vec![0.0f64; p];
    let mut scaled = alloc::vec![0.0f64; n_inputs];
    let mut mono = alloc::vec![0.0f64; p];
    for row in &train.rows {
        train.write_inputs(row, &mut raw);
        for i in 0..n_inputs {
            let (offset, half) = scaling[i];
            scaled[i] = (raw[i] - offset) / half;
        }
        basis.eval(&scaled, &mut mono);
        let y = row.target_bitrate;
        for i in 0..p {
            let mi = mono[i];
            rhs[i] += mi * y;
            let gi = &mut gram[i * p + i..(i + 1) * p];
            let mj = &mono[i..];
            for (g, &m) in gi.iter_mut().zip(mj.iter()) {
                *g += mi * m;
            }
        }
    }
    // mirror to the lower triangle
    for i in 0..p {
        for j in (i + 1)..p {
            gram[j * p + i] = gram[i * p + j];
        }
    }

    let coefficients = solve_spd(&gram, &rhs, ridge, p)?;
    PolyModel::new(
        train.source_abr.clone(),
        train.t_b,
        train.t_w,
        degree,
        ladder.clone(),
        scaling,
        coefficients,
    )
}

/// Solves `(G + ridge I) x = b` by Cholesky with one refinement pass.
fn solve_spd(gram: &[f64], rhs: &[f64], ridge: f64, p: usize) -> Result<Vec<f64>, FitError> {
    let mut chol = alloc::vec![0.0f64; p * p];
    chol.copy_from_slice(gram);
    for i in 0..p {
        chol[i * p + i] += ridge;
    }
    // in-place lower Cholesky
    for k in 0..p {
        let mut d = chol[k * p + k];
        for j in 0..k {
            let l = chol[k * p + j];
            d -= l * l;
        }
        if !(d > 0.0) {
            return Err(FitError::SingularSystem);
        }
        let d = math::sqrt(d);
        chol[k * p + k] = d;
        for i in (k + 1)..p {
            let mut v = chol[i * p + k];
            let (row_i, row_k) = (i * p, k * p);
            for j in 0..k {
                v -= chol[row_i + j] * chol[row_k + j];
            }
            chol[i * p + k] = v / d;
        }
    }
    let solve = |b: &[f64]| -> Vec<f64> {
        let mut y = alloc::vec![0.0f64; p];
        for i in 0..p {
            let mut v = b[i];
            for j in 0..i {
                v -= chol[i * p + j] * y[j];
            }
            y[i] = v / chol[i * p + i];
        }
        let mut x = alloc::vec![0.0f64; p];
        for i in (0..p).rev() {
            let mut v = y[i];
            for j in (i + 1)..p {
                v -= chol[j * p + i] * x[j];
            }
            x[i] = v / chol[i * p + i];
        }
        x
    };
    let mut x = solve(rhs);
    // one refinement step sharpens ill-conditioned systems
    let mut residual = alloc::vec![0.0f64; p];
    for i in 0..p {
        let mut v = rhs[i] - ridge * x[i];
        let row = &gram[i * p..(i + 1) * p];
        for j in 0..p {
            v -= row[j] * x[j];
        }
        residual[i] = v;
    }
    let dx = solve(&residual);
    for i in 0..p {
        x[i] += dx[i];
    }
    Ok(x)
}

/// Fraction of test rows whose quantized prediction lands on the same ladder
/// rung as the true bitrate.
pub fn evaluate_accuracy(model: &PolyModel, test: &AbrDataset) -> Result<f64, FitError> {
    if test.rows.is_empty() {
        return Err(FitError::EmptyTestSplit);
    }
    let mut hits = 0usize;
    for row in &test.rows {
        let predicted = predict_bitrate(
            model,
            &row.buffer_history,
            &row.bandwidth_history,
            row.prev_bitrate,
            true,
        )?;
        if model.ladder.nearest_index(predicted) == model.ladder.nearest_index(row.target_bitrate)
        {
            hits += 1;
        }
    }
    Ok(hits as f64 / test.rows.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abr::AbrConfig;
    use crate::qoe::QoeParams;
    use crate::rng::Rng;
    use crate::trace::{synth_trace, SynthKind};

    fn template(abr: AbrConfig) -> PlayerSpec {
        PlayerSpec {
            id: String::from("p"),
            abr,
            theta: 2.1e-3,
            eta: 1.0,
            max_buffer_s: 30.0,
            initial_buffer_s: 10.0,
            initial_bitrate_kbps: 750.0,
        }
    }

    fn random_walk_traces(n: usize, seed: u64) -> Vec<BandwidthTrace> {
        (0..n)
            .map(|i| {
                synth_trace(
                    alloc::format!("rw{i}"),
                    &SynthKind::RandomWalk {
                        floor_kbps: 100.0,
                        max_kbps: 12000.0,
                        sigma: 0.25,
                    },
                    320.0,
                    1.0,
                    seed + i as u64,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn basis_counts_match_binomials() {
        assert_eq!(MonomialBasis::new(9, 5).unwrap().size(), 2002);
        assert_eq!(MonomialBasis::new(5, 2).unwrap().size(), 21);
        assert_eq!(MonomialBasis::new(3, 5).unwrap().size(), 56);
    }

    #[test]
    fn basis_constant_term_first() {
        let basis = MonomialBasis::new(3, 2).unwrap();
        let mut out = alloc::vec![0.0; basis.size()];
        basis.eval(&[2.0, 3.0, 5.0], &mut out);
        assert_eq!(out[0], 1.0);
        // last exponent vector in lexicographic order is x0^2
        assert_eq!(*out.last().unwrap(), 4.0);
        // the full set contains every product of total degree <= 2
        let mut sorted = out.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for want in [1.0, 2.0, 3.0, 5.0, 4.0, 6.0, 10.0, 9.0, 15.0, 25.0] {
            assert!(sorted.binary_search_by(|x| x.partial_cmp(&want).unwrap()).is_ok());
        }
    }

    #[test]
    fn dataset_row_count_and_determinism() {
        let traces = random_walk_traces(10, 100);
        let spec = template(AbrConfig::default());
        let session = SessionConfig::new(BitrateLadder::default_six());
        let qoe = QoeParams::default();
        let a = generate_dataset(&spec, &traces, &qoe, &session, 3, 3, 0.8).unwrap();
        assert_eq!(a.total_rows(), 10 * (320 - 4));
        assert_eq!(a.train.rows.len(), 8 * 316);
        assert_eq!(a.test.rows.len(), 2 * 316);
        let b = generate_dataset(&spec, &traces, &qoe, &session, 3, 3, 0.8).unwrap();
        assert_eq!(a, b);
        assert!(generate_dataset(&spec, &traces[..1], &qoe, &session, 3, 3, 0.8).is_err());
    }

    #[test]
    fn scripted_constant_yields_constant_targets() {
        let traces = random_walk_traces(2, 7);
        let spec = template(AbrConfig::Scripted { script_kbps: alloc::vec![1200.0] });
        let session = SessionConfig::new(BitrateLadder::default_six());
        let pair =
            generate_dataset(&spec, &traces, &QoeParams::default(), &session, 3, 3, 0.8).unwrap();
        assert!(pair.train.rows.iter().all(|r| r.target_bitrate == 1200.0));
        assert!(pair.test.rows.iter().all(|r| r.target_bitrate == 1200.0));
    }

    /// Builds a dataset whose rows are random and whose target is an
    /// arbitrary function of the raw inputs.
    fn synthetic_dataset(
        n_rows: usize,
        t_b: usize,
        t_w: usize,
        seed: u64,
        target: impl Fn(&[f64]) -> f64,
    ) -> AbrDataset {
        let mut rng = Rng::new(seed);
        let mut rows = Vec::with_capacity(n_rows);
        let mut inputs = Vec::new();
        for _ in 0..n_rows {
            let buffer_history: Vec<f64> = (0..=t_b).map(|_| rng.uniform(0.0, 30.0)).collect();
            let bandwidth_history: Vec<f64> =
                (0..=t_w).map(|_| rng.uniform(100.0, 12000.0)).collect();
            let prev_bitrate = rng.uniform(300.0, 4300.0);
            inputs.clear();
            inputs.extend_from_slice(&buffer_history);
            inputs.extend_from_slice(&bandwidth_history);
            inputs.push(prev_bitrate);
            rows.push(DatasetRow {
                buffer_history,
                bandwidth_history,
                prev_bitrate,
                target_bitrate: target(&inputs),
            });
        }
        AbrDataset { source_abr: String::from("synth"), split: Split::Train, t_b, t_w, rows }
    }

    #[test]
    fn linear_target_recovers_raw_coefficients() {
        // target depends only on the current buffer: r = 2 b(t) + 500
        let t_b = 3;
        let data = synthetic_dataset(500, t_b, 3, 42, |x| 2.0 * x[t_b] + 500.0);
        let model = fit_poly_model(&data, 1, 0.0, &BitrateLadder::default_six()).unwrap();
        // degree-1 basis order: constant, then x_{n-1} down to x_0 is NOT
        // guaranteed; recover raw-space slopes through the scaling instead.
        let n = data.n_inputs();
        let basis = MonomialBasis::new(n, 1).unwrap();
        let mut intercept = 0.0;
        let mut slopes = alloc::vec![0.0; n];
        // coefficient m multiplies a single scaled input (or 1); identify it
        for m in 0..basis.size() {
            let lo = basis.offsets[m] as usize;
            let hi = basis.offsets[m + 1] as usize;
            let c = model.coefficients[m];
            if lo == hi {
                intercept += c;
            } else {
                let (idx, _) = basis.terms[lo];
                let (offset, half) = model.scaling[idx as usize];
                slopes[idx as usize] += c / half;
                intercept -= c * offset / half;
            }
        }
        assert!((slopes[t_b] - 2.0).abs() < 1e-6, "slope {}", slopes[t_b]);
        assert!((intercept - 500.0).abs() < 1e-6, "intercept {intercept}");
        for (i, &s) in slopes.iter().enumerate() {
            if i != t_b {
                assert!(s.abs() < 1e-6, "slope {i} = {s}");
            }
        }
    }

    #[test]
    fn constant_target_predicts_constant() {
        let data = synthetic_dataset(200, 1, 1, 9, |_| 1200.0);
        let model = fit_poly_model(&data, 2, 0.0, &BitrateLadder::default_six()).unwrap();
        let mut rng = Rng::new(17);
        for _ in 0..50 {
            let b = [rng.uniform(0.0, 30.0), rng.uniform(0.0, 30.0)];
            let w = [rng.uniform(100.0, 12000.0), rng.uniform(100.0, 12000.0)];
            let got = predict_bitrate(&model, &b, &w, rng.uniform(300.0, 4300.0), false).unwrap();
            assert!((got - 1200.0).abs() < 1e-6);
            let q = predict_bitrate(&model, &b, &w, 1200.0, true).unwrap();
            assert_eq!(q, 1200.0);
        }
    }

    #[test]
    fn predict_clamps_and_snaps() {
        // constant polynomial 5000 with identity scaling
        let ladder = BitrateLadder::default_six();
        let basis_size = MonomialBasis::new(3, 1).unwrap().size();
        let mut coeffs = alloc::vec![0.0; basis_size];
        coeffs[0] = 5000.0;
        let model = PolyModel::new(
            "t",
            0,
            0,
            1,
            ladder,
            alloc::vec![(0.0, 1.0); 3],
            coeffs.clone(),
        )
        .unwrap();
        assert_eq!(predict_bitrate(&model, &[5.0], &[1000.0], 750.0, false).unwrap(), 4300.0);

        let two_level = BitrateLadder::new(alloc::vec![1200.0, 1850.0]).unwrap();
        coeffs[0] = 1500.0;
        let model =
            PolyModel::new("t", 0, 0, 1, two_level, alloc::vec![(0.0, 1.0); 3], coeffs).unwrap();
        assert_eq!(predict_bitrate(&model, &[5.0], &[1000.0], 750.0, true).unwrap(), 1200.0);
    }

    #[test]
    fn predict_validates_history_lengths() {
        let basis_size = MonomialBasis::new(5, 1).unwrap().size();
        let model = PolyModel::new(
            "t",
            1,
            1,
            1,
            BitrateLadder::default_six(),
            alloc::vec![(0.0, 1.0); 5],
            alloc::vec![0.0; basis_size],
        )
        .unwrap();
        assert_eq!(
            predict_bitrate(&model, &[5.0], &[1000.0, 900.0], 750.0, false),
            Err(FitError::HistoryLengthMismatch)
        );
    }

    #[test]
    fn polynomial_targets_are_identifiable() {
        // target is itself a degree-2 polynomial of the scaled inputs
        let mut rng = Rng::new(5);
        for trial in 0..5u64 {
            let truth: Vec<f64> = (0..21).map(|_| rng.uniform(-2.0, 2.0)).collect();
            let truth_basis = MonomialBasis::new(5, 2).unwrap();
            let target = |x: &[f64]| {
                // evaluate on inputs scaled the way the fit will see them
                let scaled: Vec<f64> = [
                    (x[0] - 15.0) / 15.0,
                    (x[1] - 15.0) / 15.0,
                    (x[2] - 6050.0) / 5950.0,
                    (x[3] - 6050.0) / 5950.0,
                    (x[4] - 2300.0) / 2000.0,
                ]
                .to_vec();
                let mut out = alloc::vec![0.0; truth_basis.size()];
                truth_basis.eval(&scaled, &mut out);
                out.iter().zip(truth.iter()).map(|(m, c)| m * c).sum::<f64>() * 1000.0
            };
            let train = synthetic_dataset(400, 1, 1, 100 + trial, &target);
            let test = synthetic_dataset(100, 1, 1, 900 + trial, &target);
            let model = fit_poly_model(&train, 2, 0.0, &BitrateLadder::default_six()).unwrap();
            for row in &test.rows {
                let mut x = row.buffer_history.clone();
                x.extend_from_slice(&row.bandwidth_history);
                x.push(row.prev_bitrate);
                let want = target(&x);
                // compare unclamped polynomial output
                let mut inputs = [0.0f64; MAX_POWER_TABLE];
                inputs[..5].copy_from_slice(&x);
                let got = model.eval_raw(&inputs[..5]);
                let denom = want.abs().max(1.0);
                assert!(
                    ((got - want) / denom).abs() < 1e-6,
                    "trial {trial}: got {got} want {want}"
                );
            }
        }
    }

    #[test]
    fn ridge_shrinks_coefficient_norm_monotonically() {
        let data = synthetic_dataset(300, 1, 1, 77, |x| 0.3 * x[0] * x[0] + 0.1 * x[4] + 200.0);
        let mut prev = f64::INFINITY;
        for ridge in [0.0, 1e-6, 1e-3, 1.0, 1e3] {
            let model = fit_poly_model(&data, 3, ridge, &BitrateLadder::default_six()).unwrap();
            let norm: f64 =
                model.coefficients.iter().map(|c| c * c).sum::<f64>();
            assert!(norm <= prev * (1.0 + 1e-9), "ridge {ridge}: {norm} > {prev}");
            prev = norm;
        }
    }

    #[test]
    fn accuracy_trivial_cases() {
        let ladder = BitrateLadder::new(alloc::vec![1000.0, 2000.0]).unwrap();
        // dataset: half 1000, half 2000
        let mut rows = Vec::new();
        for i in 0..40 {
            let target = if i % 2 == 0 { 1000.0 } else { 2000.0 };
            rows.push(DatasetRow {
                buffer_history: alloc::vec![10.0],
                bandwidth_history: alloc::vec![1500.0],
                prev_bitrate: 1000.0,
                target_bitrate: target,
            });
        }
        let test =
            AbrDataset { source_abr: String::from("x"), split: Split::Test, t_b: 0, t_w: 0, rows };
        // constant model pinned at 1000 -> half right
        let basis_size = MonomialBasis::new(3, 1).unwrap().size();
        let mut coeffs = alloc::vec![0.0; basis_size];
        coeffs[0] = 1000.0;
        let model =
            PolyModel::new("x", 0, 0, 1, ladder, alloc::vec![(0.0, 1.0); 3], coeffs).unwrap();
        assert_eq!(evaluate_accuracy(&model, &test).unwrap(), 0.5);

        // permutation invariance
        let mut shuffled = test.clone();
        shuffled.rows.reverse();
        assert_eq!(
            evaluate_accuracy(&model, &test).unwrap(),
            evaluate_accuracy(&model, &shuffled).unwrap()
        );

        let empty = AbrDataset {
            source_abr: String::from("x"),
            split: Split::Test,
            t_b: 0,
            t_w: 0,
            rows: Vec::new(),
        };
        assert_eq!(evaluate_accuracy(&model, &empty), Err(FitError::EmptyTestSplit));
    }
}
