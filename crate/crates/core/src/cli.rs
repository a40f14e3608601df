//! `matchalign` command line: simulate -> fit -> align -> diagnose, plus the
//! matcher oracle check.
//!
//! Exit codes: 0 success, 2 invalid arguments, 3 input-format error,
//! 4 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::align::{match_align, AlignConfig, MatchConfig, MatchOrder};
use crate::diagnostics::{self, MIN_ESS_LENGTH};
use crate::error::{Error, Result};
use crate::factor_model::{self, GeneratorConfig, SamplerConfig, Scenario};
use crate::io;
use crate::matrix::{Chain, Matrix};
use crate::oracle::{self, OracleCheckConfig};
use crate::parallel::with_threads;
use crate::pivot::{PivotConfig, PivotStatistic, DEFAULT_INFINITE_FRACTION, RANK_TOLERANCE};
use crate::report::{AlignRunReport, ChainShape, DiagnoseRunReport, UnalignedRecord, REPORT_SCHEMA_VERSION};
use crate::varimax::VarimaxConfig;

pub const EXIT_INVALID_ARGS: u8 = 2;
pub const EXIT_FORMAT: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

/// Environment variable giving the worker count; `--threads` wins over it.
pub const THREADS_ENV: &str = "MATCHALIGN_THREADS";

#[derive(Debug, Parser)]
#[command(name = "matchalign", version, about = "Resolve rotation, label and sign switching in posterior samples of factor loadings")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic factor-model dataset with its ground truth.
    Simulate(SimulateArgs),
    /// Run the Gibbs sampler on a dataset and write the loadings chain.
    Fit(FitArgs),
    /// Varimax, pick the pivot and align every sample of a chain.
    Align(AlignArgs),
    /// Covariance discrepancy, ESS and trace export for raw and/or aligned chains.
    Diagnose(DiagnoseArgs),
    /// Compare the greedy matcher against the exact matchers on seeded instances.
    OracleCheck(OracleCheckArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScenarioArg {
    Independent,
    Sparse,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long)]
    pub p: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = ScenarioArg::Independent)]
    pub scenario: ScenarioArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Off-block loading standard deviation for the sparse scenario.
    #[arg(long, default_value_t = 0.01)]
    pub off_block_sd: f64,
    /// Output prefix: writes <out>.csv and the <out>_truth chain (T = 1).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset CSV (header row, one observation per line).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 11_000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1_000)]
    pub burn_in: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1.0)]
    pub prior_loading_variance: f64,
    #[arg(long, default_value_t = 0.5)]
    pub prior_residual_shape: f64,
    #[arg(long, default_value_t = 0.5)]
    pub prior_residual_rate: f64,
    /// Output chain name (writes <out>.json and <out>.bin).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OrderArg {
    Norm,
    Natural,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PivotStatisticArg {
    Auto,
    Condition,
    SigmaMax,
}

#[derive(Debug, Args)]
pub struct ThreadArgs {
    /// Worker threads (0 = one per core).
    #[arg(long, env = THREADS_ENV, default_value_t = 0)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Input chain name.
    #[arg(long)]
    pub chain: PathBuf,
    #[arg(long, value_enum, default_value_t = OrderArg::Norm)]
    pub order: OrderArg,
    #[arg(long, value_enum, default_value_t = PivotStatisticArg::Auto)]
    pub pivot_statistic: PivotStatisticArg,
    /// Fraction of rank-deficient samples above which `auto` pivots on the
    /// largest singular value.
    #[arg(long, default_value_t = DEFAULT_INFINITE_FRACTION)]
    pub infinite_fraction: f64,
    /// Kaiser row normalization inside Varimax.
    #[arg(long)]
    pub normalize: bool,
    #[arg(long, default_value_t = 1000)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    #[command(flatten)]
    pub threads: ThreadArgs,
    /// Output chain name for the aligned samples.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON report path.
    #[arg(long)]
    pub report: PathBuf,
    /// Leave wall-clock timings out of the report so it is byte-reproducible.
    #[arg(long)]
    pub omit_timing: bool,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Chain before alignment.
    #[arg(long)]
    pub raw: Option<PathBuf>,
    /// Chain after alignment.
    #[arg(long)]
    pub aligned: Option<PathBuf>,
    /// Entries to export, 1-based: "i,j;i,j".
    #[arg(long)]
    pub traces: Option<String>,
    #[command(flatten)]
    pub threads: ThreadArgs,
    /// Output prefix: <out>.json plus <out>_raw_traces.csv / <out>_aligned_traces.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct OracleCheckArgs {
    #[arg(long, default_value_t = 12)]
    pub p: usize,
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 0.01)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip the exhaustive matcher (required for k > 8).
    #[arg(long)]
    pub no_brute_force: bool,
    #[arg(long, value_enum, default_value_t = OrderArg::Norm)]
    pub order: OrderArg,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub omit_timing: bool,
}

fn match_config(order: OrderArg) -> MatchConfig {
    MatchConfig {
        order: match order {
            OrderArg::Norm => MatchOrder::ByDescendingNorm,
            OrderArg::Natural => MatchOrder::NaturalColumnOrder,
        },
    }
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> u8 {
    match e.root() {
        Error::InvalidInput(_) | Error::BruteForceCap { .. } => EXIT_INVALID_ARGS,
        Error::Numeric(_) => EXIT_NUMERIC,
        Error::Dimension(_) | Error::NonFinite { .. } | Error::Format { .. } | Error::Io { .. } => EXIT_FORMAT,
        Error::Sample { .. } => unreachable!("root() unwraps sample errors"),
    }
}

fn with_suffix(base: &Path, suffix: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(suffix);
    s.into()
}

fn shape(c: &Chain) -> ChainShape {
    ChainShape {
        p: c.p(),
        k: c.k(),
        t: c.len(),
    }
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| (0..m.cols()).map(|j| m[(i, j)]).collect()).collect()
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let scenario = match args.scenario {
        ScenarioArg::Independent => Scenario::Independent,
        ScenarioArg::Sparse => Scenario::Sparse,
    };
    let cfg = GeneratorConfig {
        off_block_sd: args.off_block_sd,
        ..GeneratorConfig::new(args.n, args.p, args.k, scenario, args.seed)
    };
    let ds = factor_model::generate(&cfg)?;
    let csv = with_suffix(&args.out, ".csv");
    io::write_dataset(&csv, &ds.data)?;
    let truth = Chain::new(vec![ds.true_loadings.clone()], Some(vec![ds.true_residual_variances.clone()]))?;
    let provenance = format!("simulate scenario={scenario:?} n={} seed={}", args.n, args.seed);
    let (json, _) = io::write_chain(&with_suffix(&args.out, "_truth"), &truth, Some(provenance))?;
    log::info!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

pub fn fit(args: &FitArgs) -> Result<()> {
    let cfg = SamplerConfig {
        iterations: args.iterations,
        burn_in: args.burn_in,
        prior_loading_variance: args.prior_loading_variance,
        prior_residual_shape: args.prior_residual_shape,
        prior_residual_rate: args.prior_residual_rate,
        seed: args.seed,
    };
    cfg.validate()?;
    let x = io::read_dataset(&args.data)?;
    let start = Instant::now();
    let chain = factor_model::gibbs_sample(&x, &cfg, args.k)?;
    log::info!("sampled {} iterations in {:.1}s", cfg.iterations, start.elapsed().as_secs_f64());
    let provenance = format!(
        "fit k={} iterations={} burn_in={} seed={}",
        args.k, cfg.iterations, cfg.burn_in, cfg.seed
    );
    io::write_chain(&args.out, &chain, Some(provenance))?;
    Ok(())
}

pub fn align(args: &AlignArgs) -> Result<()> {
    let cfg = AlignConfig {
        varimax: VarimaxConfig {
            max_iterations: args.max_iterations,
            tolerance: args.tolerance,
            normalize: args.normalize,
        },
        pivot: PivotConfig {
            force_statistic: match args.pivot_statistic {
                PivotStatisticArg::Auto => None,
                PivotStatisticArg::Condition => Some(PivotStatistic::ConditionNumber),
                PivotStatisticArg::SigmaMax => Some(PivotStatistic::LargestSingularValue),
            },
            infinite_fraction: args.infinite_fraction,
            rank_tolerance: RANK_TOLERANCE,
        },
        matching: match_config(args.order),
    };
    cfg.varimax.validate()?;
    if !(0.0..=1.0).contains(&args.infinite_fraction) {
        return Err(Error::InvalidInput(format!(
            "--infinite-fraction must lie in [0, 1], got {}",
            args.infinite_fraction
        )));
    }
    let (raw, manifest) = io::read_chain(&args.chain)?;
    with_threads(args.threads.threads, || -> Result<()> {
        let start = Instant::now();
        let out = match_align(&raw, &cfg)?;
        let elapsed = start.elapsed().as_secs_f64();
        io::write_chain(&args.out, &out.aligned, manifest.seed_provenance.clone())?;

        let timing = (!args.omit_timing).then_some(elapsed);
        let diagnostics = if raw.len() >= MIN_ESS_LENGTH {
            Some(diagnostics::diagnostics_report(&raw, &out.aligned, timing)?)
        } else {
            None
        };
        let unaligned = UnalignedRecord {
            covariance_discrepancy: diagnostics::covariance_discrepancy(&raw, &raw)?,
            mean_ess_ratio: if raw.len() >= MIN_ESS_LENGTH {
                Some(diagnostics::mean_ess_ratio(&raw)?)
            } else {
                None
            },
        };
        let report = AlignRunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            chain: shape(&raw),
            config: cfg,
            varimax: (&out.varimax).into(),
            alignment: (&out.report).into(),
            diagnostics,
            unaligned,
        };
        io::write_json(&args.report, &report)
    })
}

pub fn diagnose(args: &DiagnoseArgs) -> Result<()> {
    if args.raw.is_none() && args.aligned.is_none() {
        return Err(Error::InvalidInput("give --raw, --aligned or both".into()));
    }
    let raw = args.raw.as_deref().map(io::read_chain).transpose()?.map(|(c, _)| c);
    let aligned = args.aligned.as_deref().map(io::read_chain).transpose()?.map(|(c, _)| c);
    let entries = args.traces.as_deref().map(io::parse_entry_list).transpose()?.unwrap_or_default();
    let reference = raw.as_ref().or(aligned.as_ref()).expect("one chain given");

    with_threads(args.threads.threads, || -> Result<()> {
        let ess = |c: &Chain| -> Result<Option<(f64, Vec<Vec<f64>>)>> {
            if c.len() < MIN_ESS_LENGTH {
                return Ok(None);
            }
            let m = diagnostics::per_entry_ess(c)?;
            let t = c.len() as f64;
            let ratio = m.as_slice().iter().map(|e| e / t).sum::<f64>() / m.as_slice().len() as f64;
            Ok(Some((ratio, rows_of(&m))))
        };
        let covariance_discrepancy = aligned
            .as_ref()
            .map(|a| diagnostics::covariance_discrepancy(raw.as_ref().unwrap_or(a), a))
            .transpose()?;
        let covariance_discrepancy_unaligned = raw.as_ref().map(|r| diagnostics::covariance_discrepancy(r, r)).transpose()?;
        let ess_aligned = aligned.as_ref().map(ess).transpose()?.flatten();
        let ess_raw = raw.as_ref().map(ess).transpose()?.flatten();

        let mut trace_files = Vec::new();
        if !entries.is_empty() {
            for (label, chain) in [("raw", &raw), ("aligned", &aligned)] {
                if let Some(c) = chain {
                    let table = diagnostics::export_traces(c, &entries)?;
                    let path = with_suffix(&args.out, &format!("_{label}_traces.csv"));
                    io::write_traces(&path, &table)?;
                    trace_files.push(path.display().to_string());
                }
            }
        }
        let report = DiagnoseRunReport {
            schema_version: REPORT_SCHEMA_VERSION,
            chain: shape(reference),
            covariance_discrepancy,
            covariance_discrepancy_unaligned,
            mean_ess_ratio_aligned: ess_aligned.as_ref().map(|e| e.0),
            mean_ess_ratio_raw: ess_raw.as_ref().map(|e| e.0),
            per_entry_ess_aligned: ess_aligned.map(|e| e.1),
            per_entry_ess_raw: ess_raw.map(|e| e.1),
            trace_files,
        };
        io::write_json(&with_suffix(&args.out, ".json"), &report)
    })
}

pub fn oracle_check(args: &OracleCheckArgs) -> Result<()> {
    let cfg = OracleCheckConfig {
        p: args.p,
        k: args.k,
        trials: args.trials,
        noise: args.noise,
        seed: args.seed,
        brute_force: !args.no_brute_force,
        matching: match_config(args.order),
    };
    let report = oracle::oracle_check(&cfg, !args.omit_timing)?;
    match &args.out {
        Some(path) => io::write_json(path, &report),
        None => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(())
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Fit(a) => fit(a),
        Command::Align(a) => align(a),
        Command::Diagnose(a) => diagnose(a),
        Command::OracleCheck(a) => oracle_check(a),
    }
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INVALID_ARGS } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
