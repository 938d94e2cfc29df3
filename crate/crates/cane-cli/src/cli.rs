//! The `cane` command-line tool.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cane_core::trace::{synth_trace, BandwidthTrace, SynthKind};
use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::experiment::{self, SweepParam};
use crate::trace_io;

#[derive(Parser)]
#[command(name = "cane", about = "Multiplayer ABR streaming simulator and bandwidth allocator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonRunArgs {
    /// Experiment config file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `experiment.out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; defaults to the config's `experiment.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Fit black-box client models from single-player training sessions.
    Fit(CommonRunArgs),
    /// Run the configured scenario across traces and allocators.
    Run(CommonRunArgs),
    /// Re-run the scenario over a range of one parameter.
    Sweep {
        #[command(flatten)]
        common: CommonRunArgs,
        /// Parameter to vary: `gamma` or `t_p`.
        #[arg(long)]
        param: String,
        /// Comma-separated values, e.g. `0,0.25,0.5,0.75,1`.
        #[arg(long)]
        values: String,
    },
    /// Trace utilities.
    Trace {
        #[command(subcommand)]
        command: TraceCommand,
    },
}

#[derive(Subcommand)]
enum TraceCommand {
    /// Convert a delimited text file into the two-column trace format.
    Convert {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// 0-based column holding time stamps.
        #[arg(long, default_value_t = 0)]
        time_col: usize,
        /// 0-based column holding capacities.
        #[arg(long, default_value_t = 1)]
        cap_col: usize,
        /// Unit of the time column: s or ms.
        #[arg(long, default_value = "s")]
        time_unit: String,
        /// Unit of the capacity column: kbps, bps, mbps, or byteps.
        #[arg(long, default_value = "kbps")]
        cap_unit: String,
        /// Resample onto this grid after conversion (seconds).
        #[arg(long)]
        delta_t: Option<f64>,
    },
    /// Generate synthetic traces.
    Synth {
        /// `constant`, `step`, or `random_walk`.
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 320.0)]
        duration: f64,
        #[arg(long, default_value_t = 1.0)]
        delta_t: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of traces to generate (seeds increment).
        #[arg(long, default_value_t = 1)]
        count: usize,
        /// Output file (count = 1) or directory.
        #[arg(long)]
        out: PathBuf,
        /// File-name prefix for generated traces; defaults to the kind.
        #[arg(long)]
        name_prefix: Option<String>,
        #[arg(long, default_value_t = 4000.0)]
        level: f64,
        #[arg(long, default_value_t = 4000.0)]
        from: f64,
        #[arg(long, default_value_t = 1000.0)]
        to: f64,
        #[arg(long, default_value_t = 160.0)]
        at: f64,
        #[arg(long, default_value_t = 100.0)]
        floor: f64,
        #[arg(long, default_value_t = 12000.0)]
        max: f64,
        #[arg(long, default_value_t = 0.25)]
        sigma: f64,
    },
}

/// Runs the CLI; returns the process exit code.
pub fn run() -> i32 {
    match main_inner() {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn main_inner() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Fit(common) => {
            let (cfg, base) = load_config(&common)?;
            install_pool(common.workers, || {
                let report = experiment::run_fit(&cfg, &base)?;
                for (id, accuracy) in report {
                    println!("fitted {id}: held-out category accuracy {:.1}%", accuracy * 100.0);
                }
                Ok(())
            })
        }
        Command::Run(common) => {
            let (cfg, base) = load_config(&common)?;
            let out = out_dir(&common, &cfg, &base);
            install_pool(common.workers, || {
                let output = experiment::run_experiment(&cfg, &base, &out)?;
                println!("wrote {} sessions to {}", output.results.len(), out.display());
                for (&(alloc, metric), &(med, max)) in &output.summary.stats {
                    println!("{:<8} {:<22} median {:>12.6} max {:>12.6}", alloc.as_str(), metric, med, max);
                }
                for (&(metric, base_kind), &(med, max)) in &output.summary.gains {
                    println!(
                        "cane vs {:<8} {:<22} median gain {:>8.2}% (up to {:.2}%)",
                        base_kind.as_str(),
                        metric,
                        med,
                        max
                    );
                }
                Ok(())
            })
        }
        Command::Sweep { common, param, values } => {
            let (cfg, base) = load_config(&common)?;
            let out = out_dir(&common, &cfg, &base);
            let param = SweepParam::parse(&param)?;
            let values: Vec<f64> = values
                .split(',')
                .map(|v| v.trim().parse::<f64>().context("parsing sweep values"))
                .collect::<Result<_>>()?;
            install_pool(common.workers, || {
                let rows = experiment::sweep(&cfg, &base, &out, param, &values)?;
                for row in &rows {
                    print!("{} = {:<6}", param.as_str(), row.value);
                    for (alloc, wsi) in &row.median_wsi {
                        print!("  {} wsi {:>10.6}", alloc.as_str(), wsi);
                    }
                    println!("  cane solve {:.2} ms/step", row.cane_mean_solve_ms);
                }
                Ok(())
            })
        }
        Command::Trace { command } => trace_command(command),
    }
}

fn load_config(common: &CommonRunArgs) -> Result<(ExperimentConfig, PathBuf)> {
    let mut cfg = ExperimentConfig::load(&common.config)
        .map_err(|e| anyhow::anyhow!(e.to_string()))?;
    if let Some(seed) = common.seed {
        cfg.experiment.seed = seed;
    }
    let base = common
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_else(|| PathBuf::from("."));
    Ok((cfg, base))
}

fn out_dir(common: &CommonRunArgs, cfg: &ExperimentConfig, base: &Path) -> PathBuf {
    common.out.clone().unwrap_or_else(|| base.join(&cfg.experiment.out_dir))
}

fn install_pool(workers: usize, f: impl FnOnce() -> Result<()> + Send) -> Result<()> {
    if workers == 0 {
        f()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .context("building worker pool")?;
        pool.install(f)
    }
}

fn trace_command(command: TraceCommand) -> Result<()> {
    match command {
        TraceCommand::Convert {
            input,
            output,
            time_col,
            cap_col,
            time_unit,
            cap_unit,
            delta_t,
        } => {
            let time_scale = match time_unit.as_str() {
                "s" => 1.0,
                "ms" => 1e-3,
                other => bail!("unknown time unit {other:?}"),
            };
            let cap_scale = match cap_unit.as_str() {
                "kbps" => 1.0,
                "bps" => 1e-3,
                "mbps" => 1e3,
                "byteps" => 8e-3,
                other => bail!("unknown capacity unit {other:?}"),
            };
            let text = std::fs::read_to_string(&input)
                .with_context(|| format!("reading {}", input.display()))?;
            let mut samples = Vec::new();
            for (idx, line) in text.lines().enumerate() {
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('#') {
                    continue;
                }
                let fields: Vec<&str> =
                    trimmed.split(|c: char| c == ',' || c.is_whitespace())
                        .filter(|f| !f.is_empty())
                        .collect();
                let (Some(t), Some(c)) = (fields.get(time_col), fields.get(cap_col)) else {
                    bail!("line {}: missing columns", idx + 1);
                };
                let t: f64 = t.parse().with_context(|| format!("line {}: bad time", idx + 1))?;
                let c: f64 =
                    c.parse().with_context(|| format!("line {}: bad capacity", idx + 1))?;
                samples.push((t * time_scale, c * cap_scale));
            }
            let name = output.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
            let mut trace = BandwidthTrace::new(name, samples)
                .map_err(|e| anyhow::anyhow!("converted data invalid: {e}"))?;
            if let Some(dt) = delta_t {
                trace = cane_core::trace::resample(&trace, dt)
                    .map_err(|e| anyhow::anyhow!("resampling: {e}"))?;
            }
            trace_io::save_trace(&trace, &output)
                .map_err(|e| anyhow::anyhow!("writing {}: {e}", output.display()))?;
            println!("wrote {} samples to {}", trace.len(), output.display());
            Ok(())
        }
        TraceCommand::Synth {
            kind,
            duration,
            delta_t,
            seed,
            count,
            out,
            name_prefix,
            level,
            from,
            to,
            at,
            floor,
            max,
            sigma,
        } => {
            let synth_kind = match kind.as_str() {
                "constant" => SynthKind::Constant { level_kbps: level },
                "step" => SynthKind::Step { from_kbps: from, to_kbps: to, at_s: at },
                "random_walk" => {
                    SynthKind::RandomWalk { floor_kbps: floor, max_kbps: max, sigma }
                }
                other => bail!("unknown trace kind {other:?}"),
            };
            let prefix = name_prefix.unwrap_or_else(|| kind.clone());
            if count == 1 && out.extension().is_some() {
                let name = out.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
                let trace = synth_trace(name, &synth_kind, duration, delta_t, seed)
                    .map_err(|e| anyhow::anyhow!("{e}"))?;
                trace_io::save_trace(&trace, &out)
                    .map_err(|e| anyhow::anyhow!("writing {}: {e}", out.display()))?;
                println!("wrote {}", out.display());
            } else {
                std::fs::create_dir_all(&out)?;
                for i in 0..count {
                    let name = format!("{}_{:02}", prefix, i);
                    let trace = synth_trace(&name, &synth_kind, duration, delta_t, seed + i as u64)
                        .map_err(|e| anyhow::anyhow!("{e}"))?;
                    let path = out.join(format!("{name}.txt"));
                    trace_io::save_trace(&trace, &path)
                        .map_err(|e| anyhow::anyhow!("writing {}: {e}", path.display()))?;
                }
                println!("wrote {count} traces to {}", out.display());
            }
            Ok(())
        }
    }
}
