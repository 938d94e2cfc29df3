//! Experiment orchestration: scenario runs over trace pools, paired seeding
//! across allocators, CSV/CDF emission, summary tables, and parameter sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use cane_core::controller::{CaneAllocator, SolveDiag, UniformAllocator};
use cane_core::model::PolyModel;
use cane_core::qoe::ObjectiveConfig;
use cane_core::rng::splitmix64;
use cane_core::sim::{
    run_session, AllocationContext, Allocator, NullAllocator, SessionConfig, SessionLog,
    HISTORY_CAP,
};
use cane_core::trace::{resample, BandwidthTrace};
use rayon::prelude::*;

use crate::config::{AllocatorKind, ExperimentConfig};
use crate::model_io;
use crate::trace_io::{self, fmt_f64};

/// Wraps an allocator and records wall time per call.
pub struct TimedAllocator<A> {
    inner: A,
    pub solve_times_us: Vec<u64>,
}

impl<A: Allocator> TimedAllocator<A> {
    pub fn new(inner: A) -> Self {
        TimedAllocator { inner, solve_times_us: Vec::new() }
    }
}

impl<A: Allocator> Allocator for TimedAllocator<A> {
    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    fn allocate(&mut self, ctx: &AllocationContext<'_>) -> Result<Vec<f64>, String> {
        let start = Instant::now();
        let out = self.inner.allocate(ctx);
        self.solve_times_us.push(start.elapsed().as_micros() as u64);
        out
    }
}

/// One `(trace, allocator)` session outcome.
#[derive(Debug, Clone)]
pub struct SessionResult {
    pub trace_name: String,
    pub allocator: AllocatorKind,
    pub log: SessionLog,
    pub solve_times_us: Vec<u64>,
    pub diags: Vec<SolveDiag>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub results: Vec<SessionResult>,
    pub summary: SummaryTable,
}

/// Per-allocator medians/maxima over traces, plus paired gains of the cane
/// allocator over each baseline.
#[derive(Debug, Clone, Default)]
pub struct SummaryTable {
    /// `(allocator, metric) -> (median, max)` over traces.
    pub stats: BTreeMap<(AllocatorKind, &'static str), (f64, f64)>,
    /// `(metric, baseline) -> (median gain %, max gain %)`, positive = cane
    /// better. Welfare gains are `(cane - base) / |base|`; unfairness and
    /// weighted-sum gains are `(base - cane) / |base|`.
    pub gains: BTreeMap<(&'static str, AllocatorKind), (f64, f64)>,
}

pub const METRICS: [&str; 4] =
    ["social_welfare", "pairwise_unfairness", "jain_unfairness", "weighted_sum_index"];

fn metric_value(log: &SessionLog, metric: &str) -> f64 {
    match metric {
        "social_welfare" => log.summary.social_welfare,
        "pairwise_unfairness" => log.summary.pairwise_unfairness,
        "jain_unfairness" => log.summary.jain_unfairness,
        "weighted_sum_index" => log.summary.weighted_sum_index,
        _ => unreachable!("unknown metric"),
    }
}

/// `true` when larger values of the metric are better.
fn higher_is_better(metric: &str) -> bool {
    metric == "social_welfare"
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Derives the per-trace seeds shared by every allocator (paired comparison).
fn trace_seed(master: u64, trace_idx: usize, purpose: u64) -> u64 {
    let mut s = master ^ (trace_idx as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let _ = splitmix64(&mut s);
    s ^= purpose.wrapping_mul(0xa076_1d64_78bd_642f);
    splitmix64(&mut s)
}

/// Loads every trace named by the config, resampled onto the step grid.
pub fn load_traces(cfg: &ExperimentConfig, base: &Path) -> Result<Vec<BandwidthTrace>> {
    let paths = cfg.trace_paths(base).map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let mut out = Vec::with_capacity(paths.len());
    for p in &paths {
        let t = trace_io::load_trace(p)
            .with_context(|| format!("loading trace {}", p.display()))?;
        out.push(
            resample(&t, cfg.experiment.delta_t_s)
                .map_err(|e| anyhow::anyhow!("resampling {}: {e}", p.display()))?,
        );
    }
    Ok(out)
}

/// Loads every referenced model file, keyed by player index.
pub fn load_models(cfg: &ExperimentConfig, base: &Path) -> Result<Vec<Option<PolyModel>>> {
    let mut out: Vec<Option<PolyModel>> = vec![None; cfg.players.len()];
    for (i, path) in cfg.model_paths(base) {
        let model = model_io::load_model(&path)
            .map_err(|e| anyhow::anyhow!("players[{i}].model ({}): {e}", path.display()))?;
        if model.ladder != cfg.ladder() {
            bail!("players[{i}].model: ladder differs from the experiment ladder");
        }
        if model.t_b + 1 > HISTORY_CAP || model.t_w + 1 > HISTORY_CAP {
            bail!("players[{i}].model: history depth exceeds supported window");
        }
        out[i] = Some(model);
    }
    Ok(out)
}

fn run_one(
    cfg: &ExperimentConfig,
    trace_idx: usize,
    trace: &BandwidthTrace,
    allocator_kind: AllocatorKind,
    models: &[Option<PolyModel>],
) -> Result<SessionResult> {
    let master = cfg.experiment.seed;
    let specs = cfg.player_specs();
    let objective = ObjectiveConfig::new(cfg.objective.gamma, cfg.etas())
        .map_err(|e| anyhow::anyhow!("objective: {e}"))?;
    let session = SessionConfig {
        delta_t_s: cfg.experiment.delta_t_s,
        steps: cfg.experiment.steps,
        ladder: cfg.ladder(),
        predictor: cfg.predictor_config(trace_seed(master, trace_idx, 1)),
        noise: cfg.estimation_noise(trace_seed(master, trace_idx, 2)),
    };
    let qoe = cfg.qoe_params();

    let (log, solve_times_us, diags) = match allocator_kind {
        AllocatorKind::Pure => {
            let mut alloc = TimedAllocator::new(NullAllocator);
            let log = run_session(&specs, trace, &mut alloc, &qoe, &objective, &session)?;
            (log, alloc.solve_times_us, Vec::new())
        }
        AllocatorKind::Uniform => {
            let mut alloc = TimedAllocator::new(UniformAllocator);
            let log = run_session(&specs, trace, &mut alloc, &qoe, &objective, &session)?;
            (log, alloc.solve_times_us, Vec::new())
        }
        AllocatorKind::Cane => {
            let player_models: Vec<PolyModel> = models
                .iter()
                .map(|m| m.clone().context("cane needs a model per player"))
                .collect::<Result<_>>()?;
            let controller = cfg.controller_config(trace_seed(master, trace_idx, 3));
            let mut alloc = TimedAllocator::new(CaneAllocator::new(controller, player_models));
            let log = run_session(&specs, trace, &mut alloc, &qoe, &objective, &session)?;
            let diags = alloc.inner.take_diags();
            (log, alloc.solve_times_us, diags)
        }
    };
    Ok(SessionResult {
        trace_name: trace.name.clone(),
        allocator: allocator_kind,
        log,
        solve_times_us,
        diags,
    })
}

/// Runs the full `traces x allocators` grid (in parallel) without touching
/// the filesystem. Results come back in deterministic job order.
pub fn run_sessions(cfg: &ExperimentConfig, base: &Path) -> Result<Vec<SessionResult>> {
    cfg.validate().map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let traces = load_traces(cfg, base)?;
    let models = if cfg.experiment.allocators.contains(&AllocatorKind::Cane) {
        load_models(cfg, base)?
    } else {
        vec![None; cfg.players.len()]
    };

    let jobs: Vec<(usize, AllocatorKind)> = (0..traces.len())
        .flat_map(|t| cfg.experiment.allocators.iter().map(move |&a| (t, a)))
        .collect();
    jobs.par_iter()
        .map(|&(trace_idx, kind)| run_one(cfg, trace_idx, &traces[trace_idx], kind, &models))
        .collect()
}

pub fn build_summary(cfg: &ExperimentConfig, results: &[SessionResult]) -> SummaryTable {
    let mut table = SummaryTable::default();
    let mut by_alloc: BTreeMap<AllocatorKind, Vec<&SessionResult>> = BTreeMap::new();
    for r in results {
        by_alloc.entry(r.allocator).or_default().push(r);
    }
    for (&alloc, sessions) in &by_alloc {
        for metric in METRICS {
            let values: Vec<f64> =
                sessions.iter().map(|s| metric_value(&s.log, metric)).collect();
            let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            table.stats.insert((alloc, metric), (median(&values), max));
        }
    }
    // paired per-trace gains of cane over each baseline
    if let Some(cane_sessions) = by_alloc.get(&AllocatorKind::Cane) {
        let cane_by_trace: BTreeMap<&str, &SessionResult> =
            cane_sessions.iter().map(|s| (s.trace_name.as_str(), *s)).collect();
        for (&base_kind, base_sessions) in &by_alloc {
            if base_kind == AllocatorKind::Cane {
                continue;
            }
            for metric in METRICS {
                let mut gains = Vec::new();
                for base in base_sessions {
                    let Some(cane) = cane_by_trace.get(base.trace_name.as_str()) else {
                        continue;
                    };
                    let b = metric_value(&base.log, metric);
                    let c = metric_value(&cane.log, metric);
                    let denom = b.abs().max(1e-12);
                    let gain = if higher_is_better(metric) {
                        (c - b) / denom * 100.0
                    } else {
                        (b - c) / denom * 100.0
                    };
                    gains.push(gain);
                }
                if !gains.is_empty() {
                    let max = gains.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    table.gains.insert((metric, base_kind), (median(&gains), max));
                }
            }
        }
    }
    let _ = cfg;
    table
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

/// Session CSV: `step,player_id,allocation_kbps,bitrate_kbps,buffer_s,qoe`.
pub fn emit_session_csv(log: &SessionLog, path: &Path) -> Result<()> {
    let mut out = String::from("step,player_id,allocation_kbps,bitrate_kbps,buffer_s,qoe\n");
    for row in &log.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.step,
            log.player_ids[row.player],
            fmt_f64(row.allocation_kbps),
            fmt_f64(row.bitrate_kbps),
            fmt_f64(row.buffer_s),
            fmt_f64(row.qoe),
        );
    }
    fs::write(path, out)?;
    Ok(())
}

/// Empirical CDF: sorted values with cumulative fractions, one pair per line.
/// Empty input produces a header-only file (with a warning on stderr).
pub fn emit_cdf(values: &[f64], path: &Path) -> Result<()> {
    let mut out = String::from("value,cum_fraction\n");
    if values.is_empty() {
        eprintln!("warning: empty value list for {}", path.display());
    } else {
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = sorted.len() as f64;
        for (i, v) in sorted.iter().enumerate() {
            let _ = writeln!(out, "{},{:.4}", fmt_f64(*v), (i + 1) as f64 / n);
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn emit_summary_csv(table: &SummaryTable, path: &Path) -> Result<()> {
    let mut out = String::from("allocator,metric,median,max\n");
    for (&(alloc, metric), &(med, max)) in &table.stats {
        let _ = writeln!(out, "{},{},{},{}", alloc.as_str(), metric, fmt_f64(med), fmt_f64(max));
    }
    fs::write(path, out)?;
    Ok(())
}

fn emit_gains_csv(table: &SummaryTable, path: &Path) -> Result<()> {
    let mut out = String::from("metric,baseline,median_gain_pct,max_gain_pct\n");
    for (&(metric, base), &(med, max)) in &table.gains {
        let _ = writeln!(out, "{},{},{},{}", metric, base.as_str(), fmt_f64(med), fmt_f64(max));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Runs the whole experiment and writes session CSVs, CDF files, and the
/// summary/gain tables into `out_dir`. Returns everything in memory too.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    base: &Path,
    out_dir: &Path,
) -> Result<ExperimentOutput> {
    let results = run_sessions(cfg, base)?;
    let summary = build_summary(cfg, &results);
    fs::create_dir_all(out_dir)
        .with_context(|| format!("creating {}", out_dir.display()))?;

    for r in &results {
        let file = out_dir.join(format!("session_{}_{}.csv", r.trace_name, r.allocator.as_str()));
        emit_session_csv(&r.log, &file)?;
    }
    for &alloc in &cfg.experiment.allocators {
        let sessions: Vec<&SessionResult> =
            results.iter().filter(|r| r.allocator == alloc).collect();
        for metric in METRICS {
            let values: Vec<f64> =
                sessions.iter().map(|s| metric_value(&s.log, metric)).collect();
            emit_cdf(&values, &out_dir.join(format!("cdf_{}_{}.csv", metric, alloc.as_str())))?;
        }
        // pooled per-player session-mean QoE
        let qoe_values: Vec<f64> = sessions
            .iter()
            .flat_map(|s| s.log.summary.per_player_mean_qoe.iter().copied())
            .collect();
        emit_cdf(&qoe_values, &out_dir.join(format!("cdf_player_qoe_{}.csv", alloc.as_str())))?;
    }
    emit_summary_csv(&summary, &out_dir.join("summary.csv"))?;
    emit_gains_csv(&summary, &out_dir.join("gains.csv"))?;

    Ok(ExperimentOutput { results, summary })
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Gamma,
    TP,
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gamma" => Ok(SweepParam::Gamma),
            "t_p" | "tp" => Ok(SweepParam::TP),
            other => bail!("unknown sweep parameter {other:?} (expected gamma or t_p)"),
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParam::Gamma => "gamma",
            SweepParam::TP => "t_p",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: f64,
    /// Median weighted-sum index per allocator.
    pub median_wsi: BTreeMap<AllocatorKind, f64>,
    /// Mean per-step solve time of the cane allocator, milliseconds.
    pub cane_mean_solve_ms: f64,
}

/// One full experiment per value, shared seeds; every run lands in its own
/// subdirectory of `out_dir`.
pub fn sweep(
    cfg: &ExperimentConfig,
    base: &Path,
    out_dir: &Path,
    param: SweepParam,
    values: &[f64],
) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    let mut rows = Vec::with_capacity(values.len());
    for &value in values {
        let mut run_cfg = cfg.clone();
        match param {
            SweepParam::Gamma => {
                if !(0.0..=1.0).contains(&value) {
                    bail!("gamma value {value} outside [0, 1]");
                }
                run_cfg.objective.gamma = value;
            }
            SweepParam::TP => {
                let t_p = value as usize;
                if t_p < 1 || (t_p as f64 - value).abs() > 1e-9 {
                    bail!("t_p value {value} must be a positive integer");
                }
                run_cfg.controller.t_p = t_p;
            }
        }
        let sub = out_dir.join(format!("sweep_{}_{}", param.as_str(), fmt_f64(value)));
        let output = run_experiment(&run_cfg, base, &sub)?;

        let mut median_wsi = BTreeMap::new();
        for &alloc in &run_cfg.experiment.allocators {
            let values: Vec<f64> = output
                .results
                .iter()
                .filter(|r| r.allocator == alloc)
                .map(|r| r.log.summary.weighted_sum_index)
                .collect();
            median_wsi.insert(alloc, median(&values));
        }
        let cane_times: Vec<u64> = output
            .results
            .iter()
            .filter(|r| r.allocator == AllocatorKind::Cane)
            .flat_map(|r| r.solve_times_us.iter().copied())
            .collect();
        let cane_mean_solve_ms = if cane_times.is_empty() {
            0.0
        } else {
            cane_times.iter().sum::<u64>() as f64 / cane_times.len() as f64 / 1000.0
        };
        rows.push(SweepRow { value, median_wsi, cane_mean_solve_ms });
    }

    // deterministic table; timing goes to its own file since it varies by host
    let mut table = String::from("value");
    for &alloc in &cfg.experiment.allocators {
        let _ = write!(table, ",{}_median_wsi", alloc.as_str());
    }
    table.push('\n');
    for row in &rows {
        let _ = write!(table, "{}", fmt_f64(row.value));
        for &alloc in &cfg.experiment.allocators {
            let _ = write!(table, ",{}", fmt_f64(row.median_wsi[&alloc]));
        }
        table.push('\n');
    }
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("sweep.csv"), table)?;

    let mut timing = String::from("value,cane_mean_solve_ms\n");
    for row in &rows {
        let _ = writeln!(timing, "{},{:.3}", fmt_f64(row.value), row.cane_mean_solve_ms);
    }
    fs::write(out_dir.join("sweep_timing.csv"), timing)?;

    Ok(rows)
}

// ---------------------------------------------------------------------------
// Offline fitting
// ---------------------------------------------------------------------------

/// Fits one surrogate per player that names a model file and writes it there.
/// Returns `(player id, held-out category accuracy)` per fitted model.
pub fn run_fit(cfg: &ExperimentConfig, base: &Path) -> Result<Vec<(String, f64)>> {
    use cane_core::model::{evaluate_accuracy, fit_poly_model, generate_dataset};

    cfg.validate().map_err(|e| anyhow::anyhow!(e.to_string()))?;
    let traces = load_traces(cfg, base)?;
    if traces.len() < 2 {
        bail!("fitting needs at least two traces for a train/test split");
    }
    let ladder = cfg.ladder();
    let qoe = cfg.qoe_params();

    // one fit per distinct model path, in player order
    let mut jobs: Vec<(usize, PathBuf)> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, path) in cfg.model_paths(base) {
        if seen.insert(path.clone()) {
            jobs.push((i, path));
        }
    }
    if jobs.is_empty() {
        bail!("no players name a model file; nothing to fit");
    }

    let specs = cfg.player_specs();
    let outputs: Vec<(String, f64, PathBuf, PolyModel)> = jobs
        .par_iter()
        .map(|(i, path)| {
            let spec = &specs[*i];
            let session = SessionConfig {
                delta_t_s: cfg.experiment.delta_t_s,
                steps: cfg.experiment.steps,
                ladder: ladder.clone(),
                predictor: cfg.predictor_config(trace_seed(cfg.experiment.seed, *i, 4)),
                noise: None,
            };
            let pair = generate_dataset(
                spec,
                &traces,
                &qoe,
                &session,
                cfg.fit.t_b,
                cfg.fit.t_w,
                cfg.fit.train_fraction,
            )
            .map_err(|e| anyhow::anyhow!("dataset for {}: {e}", spec.id))?;
            let model = fit_poly_model(&pair.train, cfg.fit.degree, cfg.fit.ridge, &ladder)
                .map_err(|e| anyhow::anyhow!("fit for {}: {e}", spec.id))?;
            let accuracy = evaluate_accuracy(&model, &pair.test)
                .map_err(|e| anyhow::anyhow!("accuracy for {}: {e}", spec.id))?;
            Ok((spec.id.clone(), accuracy, path.clone(), model))
        })
        .collect::<Result<_>>()?;

    let mut report = Vec::new();
    for (id, accuracy, path, model) in outputs {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        model_io::save_model(&model, &path)
            .map_err(|e| anyhow::anyhow!("saving {}: {e}", path.display()))?;
        report.push((id, accuracy));
    }
    Ok(report)
}
