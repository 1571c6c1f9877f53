//! Command-line front end: simulation runs, spectral reports on corpora,
//! bundle design, market planning and corpus replay. Outputs are CSV or
//! JSON files meant for external plotting.
//!
//! Exit codes: 0 on success, 2 on usage errors (usage text on stderr), 1 on
//! runtime errors, reported as a single line `E_<KIND>: <message>`.

pub mod config;

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bundlelearn::corpus::{
    export_trajectory, load_corpus, replay_with, CorpusError, ExportFormat, ReplayOptions, ReplayReport, SplitFilter,
    TrajectoryTable, SCHEMA_VERSION,
};
use bundlelearn::design::{companion_good, joint_increase_region, orthogonal_bundle, shifted_orthogonal, two_good_orthogonal, Objective};
use bundlelearn::estimator::estimation_error;
use bundlelearn::market::{plan_complete_info, plan_incomplete_info, PricingPlan};
use bundlelearn::simulator::{convergence_diagnostics, run};
use bundlelearn::{LearnError, StrategyKind};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use config::{load_config, parse_config, ConfigError, RunConfig};

/// Directory for outputs when `--out` is not given.
pub const OUT_DIR_ENV: &str = "BUNDLELEARN_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "bundlelearn", version, about = "Preference learning from bundled consumption")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a learning scenario and write its per-step trajectory.
    Simulate(SimulateArgs),
    /// Centrality report for the information matrix of a replayed corpus.
    Spectral(SpectralArgs),
    /// No-learning bundles, companion goods and joint-increase ratios.
    Design(ConfigArgs),
    /// Two-period pricing plan and stationary bundle.
    Market(ConfigArgs),
    /// Replay a corpus through the estimator and export coefficient paths.
    Replay(ReplayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl From<Format> for ExportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ExportFormat::Csv,
            Format::Json => ExportFormat::Json,
        }
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `[strategy].kind`.
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Overrides `[noise].seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run this many consecutive seeds in parallel and write one summary row
    /// per seed instead of a trajectory.
    #[arg(long)]
    pub sweep: Option<u64>,
}

#[derive(Args, Debug)]
pub struct CorpusArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub min_appearances: usize,
    /// Add pair dummies for co-occurring entities.
    #[arg(long)]
    pub interactions: bool,
    /// Split filter `AT:BEFORE:AFTER` on record order.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<SplitFilter>,
}

#[derive(Args, Debug)]
pub struct SpectralArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long, alias = "out")]
    pub report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Args, Debug)]
pub struct ConfigArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_split(s: &str) -> Result<SplitFilter, String> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err("expected AT:BEFORE:AFTER".into());
    }
    Ok(SplitFilter {
        at: parts[0].parse().map_err(|_| format!("bad order {:?}", parts[0]))?,
        min_before: parts[1].parse().map_err(|_| format!("bad count {:?}", parts[1]))?,
        min_after: parts[2].parse().map_err(|_| format!("bad count {:?}", parts[2]))?,
    })
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Corpus(#[from] CorpusError),
    #[error("{0}")]
    Model(#[from] LearnError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "E_CONFIG",
            CliError::Corpus(CorpusError::SinkWriteFailure(_)) => "E_OUTPUT",
            CliError::Corpus(CorpusError::NeverFullRank { .. }) => "E_RANK",
            CliError::Corpus(CorpusError::Learn(_)) => "E_MODEL",
            CliError::Corpus(_) => "E_CORPUS",
            CliError::Model(_) => "E_MODEL",
            CliError::Io { .. } => "E_IO",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Destination for a command's output: an explicit path, a file in
/// `$BUNDLELEARN_OUT_DIR`, or stdout.
fn sink<'a>(out: Option<&Path>, default_name: &str, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>, CliError> {
    let path = out
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(|d| PathBuf::from(d).join(default_name)));
    match path {
        Some(p) => {
            let f = File::create(&p).map_err(io_err(&p))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(stdout)),
    }
}

/// Format from the flag, else from the output extension, else CSV.
fn pick_format(flag: Option<Format>, out: Option<&Path>) -> Format {
    flag.unwrap_or_else(|| match out.and_then(|p| p.extension()).and_then(|e| e.to_str()) {
        Some("json") => Format::Json,
        _ => Format::Csv,
    })
}

fn write_json<T: Serialize>(value: &T, mut w: Box<dyn Write + '_>) -> Result<(), CliError> {
    let out = |e: std::io::Error| CliError::Corpus(CorpusError::SinkWriteFailure(e));
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| out(e.into()))?;
    w.write_all(b"\n").map_err(out)?;
    w.flush().map_err(out)
}

#[derive(Serialize)]
struct SweepRow {
    seed: u64,
    final_mse: f64,
    bound_ratio: f64,
    sigma2_zero: bool,
    lambda_min_divergent: bool,
    drift_stop: Option<usize>,
}

fn simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(io_err(&args.config))?;
    let mut cfg = parse_config(&text, args.strategy.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.scenario.noise.seed = seed;
    }
    let format = pick_format(args.format, args.out.as_deref());
    if let Some(count) = args.sweep {
        let base = cfg.scenario.noise.seed;
        let rows: Vec<SweepRow> = (0..count)
            .into_par_iter()
            .map(|k| {
                let mut sc = cfg.scenario.clone();
                sc.noise.seed = base.wrapping_add(k);
                let tr = run(&sc, &cfg.strategy)?;
                let d = convergence_diagnostics(&tr)?;
                Ok(SweepRow {
                    seed: sc.noise.seed,
                    final_mse: d.final_mse,
                    bound_ratio: d.bound_ratio,
                    sigma2_zero: d.sigma2_zero,
                    lambda_min_divergent: d.lambda_min_divergent,
                    drift_stop: d.drift_stop,
                })
            })
            .collect::<Result<_, LearnError>>()?;
        let ext = if format == Format::Json { "json" } else { "csv" };
        let w = sink(args.out.as_deref(), &format!("sweep.{ext}"), stdout)?;
        return match format {
            Format::Json => write_json(
                &serde_json::json!({ "schema_version": SCHEMA_VERSION, "rows": rows }),
                w,
            ),
            Format::Csv => {
                let out = |e: std::io::Error| CliError::Corpus(CorpusError::SinkWriteFailure(e));
                let mut w = w;
                writeln!(w, "seed,final_mse,bound_ratio,sigma2_zero,lambda_min_divergent,drift_stop").map_err(out)?;
                for r in &rows {
                    let stop = r.drift_stop.map(|s| s.to_string()).unwrap_or_default();
                    writeln!(
                        w,
                        "{},{},{},{},{},{}",
                        r.seed, r.final_mse, r.bound_ratio, r.sigma2_zero, r.lambda_min_divergent, stop
                    )
                    .map_err(out)?;
                }
                w.flush().map_err(out)
            }
        };
    }
    let tr = run(&cfg.scenario, &cfg.strategy)?;
    let ext = if format == Format::Json { "json" } else { "csv" };
    let w = sink(args.out.as_deref(), &format!("trajectory.{ext}"), stdout)?;
    export_trajectory(&TrajectoryTable::from(&tr), w, format.into())?;
    Ok(())
}

fn replay_corpus(args: &CorpusArgs) -> Result<ReplayReport<f64>, CliError> {
    let f = File::open(&args.corpus).map_err(io_err(&args.corpus))?;
    let records = load_corpus(f)?;
    let opts = ReplayOptions {
        min_appearances: args.min_appearances,
        interactions: args.interactions,
        split: args.split,
        ..ReplayOptions::default()
    };
    Ok(replay_with(&records, &opts)?)
}

#[derive(Serialize)]
struct RankedColumn<'a> {
    label: &'a str,
    popularity: f64,
    correlation: f64,
}

fn spectral(args: &SpectralArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let rep = replay_corpus(&args.corpus)?;
    let labels = |idx: &[usize]| idx.iter().map(|&k| rep.column_labels[k].as_str()).collect::<Vec<_>>();
    let c = &rep.centralities;
    let ranking: Vec<RankedColumn> = c
        .ranking
        .iter()
        .map(|e| RankedColumn {
            label: &rep.column_labels[e.good],
            popularity: e.popularity,
            correlation: e.correlation,
        })
        .collect();
    let dropped: Vec<&str> = rep.reductions.dropped.iter().map(|&k| rep.original_labels[k].as_str()).collect();
    let doc = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "columns": rep.column_labels,
        "full_rank_time": rep.full_rank_time,
        "kappa": c.kappa,
        "ranking": ranking,
        "correlation_sides": {
            "positive": labels(&c.partition.side_positive),
            "negative": labels(&c.partition.side_negative),
            "zero": labels(&c.partition.zero_entries),
        },
        "dropped": dropped,
    });
    write_json(&doc, sink(args.report.as_deref(), "centrality.json", stdout)?)
}

fn replay_cmd(args: &ReplayArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let rep = replay_corpus(&args.corpus)?;
    let format = pick_format(args.format, args.out.as_deref());
    let ext = if format == Format::Json { "json" } else { "csv" };
    let w = sink(args.out.as_deref(), &format!("replay.{ext}"), stdout)?;
    export_trajectory(&TrajectoryTable::from(&rep), w, format.into())?;
    Ok(())
}

#[derive(Serialize)]
struct Companion {
    target: usize,
    raise_with: usize,
    lower_with: usize,
}

fn design(args: &ConfigArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(io_err(&args.config))?;
    let cfg = parse_config(&text, None)?;
    let state = cfg.state()?;
    let cov = state.require_cov()?;
    let (delta, mse) = estimation_error(&state, &cfg.scenario.beta_true)?;
    let n = delta.len();
    let orth = match orthogonal_bundle(&delta, None) {
        Ok(x) => Some(x),
        Err(LearnError::ZeroBias | LearnError::NoOrthogonalDirection) => None,
        Err(e) => return Err(e.into()),
    };
    let gap = cfg.scenario.alpha_hat - cfg.scenario.alpha;
    let shifted = match (&orth, gap != 0.0) {
        (Some(z), true) => Some(shifted_orthogonal(&delta, gap, z)?),
        _ => None,
    };
    let companions = (0..n)
        .map(|t| {
            Ok(Companion {
                target: t,
                raise_with: companion_good(cov, &delta, t, Objective::Raise)?,
                lower_with: companion_good(cov, &delta, t, Objective::Lower)?,
            })
        })
        .collect::<Result<Vec<_>, LearnError>>()?;
    let pair = match cfg.strategy.kind {
        StrategyKind::TwoGoodTargeted { i, j, .. } => {
            let region = joint_increase_region(cov, i, j)?;
            let ratio = two_good_orthogonal(delta[i], delta[j]).ok();
            Some(serde_json::json!({
                "i": i,
                "j": j,
                "no_learning_ratio": ratio,
                "joint_increase": {
                    "lower": region.lower,
                    "upper": if region.upper.is_finite() { Some(region.upper) } else { None },
                    "nonempty": region.nonempty,
                },
            }))
        }
        _ => None,
    };
    let doc = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "error": delta,
        "squared_error": mse,
        "orthogonal_bundle": orth,
        "shifted_orthogonal_bundle": shifted,
        "companions": companions,
        "pair": pair,
    });
    write_json(&doc, sink(args.out.as_deref(), "design.json", stdout)?)
}

fn market(args: &ConfigArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(io_err(&args.config))?;
    let cfg = parse_config(&text, None)?;
    let state = cfg.state()?;
    let plan: PricingPlan<f64> = plan_complete_info(&cfg.scenario.beta_true, state.estimate(), &state, &cfg.market)?;
    let stationary = match &cfg.prior {
        Some(p) => Some(plan_incomplete_info(&state, p, &cfg.market)?),
        None => None,
    };
    let doc = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "complete_information": plan,
        "stationary_bundle": stationary,
        "stance": cfg.prior.map(|p| p.stance),
    });
    write_json(&doc, sink(args.out.as_deref(), "market.json", stdout)?)
}

pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    match &cli.command {
        Command::Simulate(a) => simulate(a, stdout),
        Command::Spectral(a) => spectral(a, stdout),
        Command::Design(a) => design(a, stdout),
        Command::Market(a) => market(a, stdout),
        Command::Replay(a) => replay_cmd(a, stdout),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with<I, S>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                2
            } else {
                let _ = write!(stdout, "{text}");
                0
            };
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let line = e.to_string().replace('\n', " ");
            let _ = writeln!(stderr, "{}: {line}", e.code());
            1
        }
    }
}
