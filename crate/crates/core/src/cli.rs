//! Command-line front end: parameter sweeps, simulations and CSV output.
//!
//! Every command computes all rows before touching the output path, then
//! writes through a temporary file in the same directory and renames it, so a
//! failed run never leaves a partial file behind.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fading::FadingParams;
use crate::fsmc::{fsmc_capacity, Fsmc};
use crate::gauss_capacity::{capacity_full_csit, capacity_no_csit, CapacitySolver, SolverConfig};
use crate::simulate::{simulate_capacity, validate_fading};

pub const DEFAULT_POWER: f64 = 1.0;
pub const DEFAULT_QUAD_NODES: usize = 96;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_SAMPLES: usize = 1_000_000;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_LAG: usize = 1;

#[derive(Debug, Parser)]
#[command(name = "fbcap", version, about = "Capacity of channels with periodic state feedback")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Capacity of correlated Rayleigh fading over an (alpha, T) grid.
    CapacityGaussian {
        #[command(flatten)]
        fading: FadingArgs,
        #[command(flatten)]
        periods: PeriodArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Capacity of a finite-state Markov channel for each period.
    CapacityFsmc {
        /// Model file (JSON).
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        periods: PeriodArgs,
        /// Blahut–Arimoto stopping gap in bits.
        #[arg(long)]
        tol: Option<f64>,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Monte Carlo rate of the optimal policy next to its analytic value.
    Simulate {
        #[command(flatten)]
        fading: FadingArgs,
        #[command(flatten)]
        periods: PeriodArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[command(flatten)]
        io: IoArgs,
    },
    /// Marginal and lagged-pair distribution checks of the fading sampler.
    ValidateFading {
        #[command(flatten)]
        fading: FadingArgs,
        /// Lag between the paired samples.
        #[arg(long)]
        lag: Option<usize>,
        #[command(flatten)]
        sampling: SamplingArgs,
        #[command(flatten)]
        io: IoArgs,
    },
}

#[derive(Debug, Args)]
pub struct FadingArgs {
    /// Correlation coefficient of the fading process; repeatable.
    #[arg(long = "alpha")]
    pub alphas: Vec<f64>,
    /// Average power constraint.
    #[arg(long)]
    pub power: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PeriodArgs {
    /// Feedback period; repeatable.
    #[arg(long = "period")]
    pub periods: Vec<usize>,
    /// Inclusive period range `lo..hi`.
    #[arg(long)]
    pub period_range: Option<PeriodRange>,
}

#[derive(Debug, Args)]
pub struct SolverArgs {
    /// Quadrature order.
    #[arg(long)]
    pub quad_nodes: Option<usize>,
    /// Solver tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SamplingArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Path length.
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct IoArgs {
    /// CSV destination; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// JSON file with defaults for any of the above; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Inclusive range of feedback periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeriodRange {
    pub lo: usize,
    pub hi: usize,
}

impl FromStr for PeriodRange {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (lo, hi) = s.split_once("..").ok_or_else(|| format!("expected lo..hi, got {s:?}"))?;
        let hi = hi.strip_prefix('=').unwrap_or(hi);
        let lo: usize = lo.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
        let hi: usize = hi.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
        if lo == 0 || hi < lo {
            return Err(format!("need 1 <= lo <= hi, got {lo}..{hi}"));
        }
        Ok(Self { lo, hi })
    }
}

/// Optional settings read from `--config`; flags override each field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub alphas: Option<Vec<f64>>,
    pub periods: Option<Vec<usize>>,
    pub power: Option<f64>,
    pub quad_nodes: Option<usize>,
    pub tol: Option<f64>,
    pub output_path: Option<PathBuf>,
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub model_path: Option<PathBuf>,
    pub lag: Option<usize>,
}

impl ConfigFile {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Usage(format!("config {}: {e}", path.display())))
    }

    /// Field-wise `self` where set, else `base`.
    pub fn over(self, base: ConfigFile) -> ConfigFile {
        ConfigFile {
            alphas: self.alphas.or(base.alphas),
            periods: self.periods.or(base.periods),
            power: self.power.or(base.power),
            quad_nodes: self.quad_nodes.or(base.quad_nodes),
            tol: self.tol.or(base.tol),
            output_path: self.output_path.or(base.output_path),
            seed: self.seed.or(base.seed),
            samples: self.samples.or(base.samples),
            model_path: self.model_path.or(base.model_path),
            lag: self.lag.or(base.lag),
        }
    }
}

/// Resolved sweep settings. `alphas` and `periods` are sorted and free of
/// duplicates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepConfig {
    pub alphas: Vec<f64>,
    pub periods: Vec<usize>,
    pub power: f64,
    pub quad_nodes: usize,
    pub tol: f64,
    pub output_path: Option<PathBuf>,
    pub seed: u64,
    pub samples: usize,
    pub model_path: Option<PathBuf>,
    pub lag: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            alphas: Vec::new(),
            periods: Vec::new(),
            power: DEFAULT_POWER,
            quad_nodes: DEFAULT_QUAD_NODES,
            tol: DEFAULT_TOL,
            output_path: None,
            seed: DEFAULT_SEED,
            samples: DEFAULT_SAMPLES,
            model_path: None,
            lag: DEFAULT_LAG,
        }
    }
}

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

impl SweepConfig {
    pub fn from_file(file: ConfigFile) -> Result<Self> {
        let d = Self::default();
        let mut alphas = file.alphas.unwrap_or_default();
        alphas.sort_by(f64::total_cmp);
        alphas.dedup();
        let mut periods = file.periods.unwrap_or_default();
        periods.sort_unstable();
        periods.dedup();
        let cfg = Self {
            alphas,
            periods,
            power: file.power.unwrap_or(d.power),
            quad_nodes: file.quad_nodes.unwrap_or(d.quad_nodes),
            tol: file.tol.unwrap_or(d.tol),
            output_path: file.output_path,
            seed: file.seed.unwrap_or(d.seed),
            samples: file.samples.unwrap_or(d.samples),
            model_path: file.model_path,
            lag: file.lag.unwrap_or(d.lag),
        };
        cfg.check_ranges()?;
        Ok(cfg)
    }

    fn check_ranges(&self) -> Result<()> {
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(usage(format!("alphas: {a} is outside [0, 1]")));
        }
        if self.periods.first() == Some(&0) {
            return Err(usage("periods: must be at least 1"));
        }
        if !(self.power > 0.0 && self.power.is_finite()) {
            return Err(usage(format!("power: must be positive and finite, got {}", self.power)));
        }
        if !(8..=512).contains(&self.quad_nodes) {
            return Err(usage(format!("quad_nodes: {} is outside [8, 512]", self.quad_nodes)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(usage(format!("tol: must be positive, got {}", self.tol)));
        }
        if self.samples == 0 {
            return Err(usage("samples: must be positive"));
        }
        if self.lag == 0 {
            return Err(usage("lag: must be at least 1"));
        }
        Ok(())
    }

    fn require_alphas(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(usage("alphas: at least one --alpha is required"));
        }
        Ok(())
    }

    fn require_periods(&self) -> Result<()> {
        if self.periods.is_empty() {
            return Err(usage("periods: at least one --period or a --period-range is required"));
        }
        Ok(())
    }

    fn solver(&self) -> Result<CapacitySolver> {
        CapacitySolver::new(SolverConfig {
            quad_nodes: self.quad_nodes,
            tol: self.tol,
            ..SolverConfig::default()
        })
    }
}

/// `printf("%.12g")`: 12 significant digits, trailing zeros dropped.
pub fn format_g12(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-5..12).contains(&exp) {
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mantissa}e{sign}{:02}", exp.abs());
    }
    let fixed = format!("{x:.*}", (11 - exp) as usize);
    if fixed.contains('.') {
        fixed.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        fixed
    }
}

pub trait CsvRow {
    const HEADER: &'static str;
    fn fields(&self) -> Vec<String>;
}

pub fn render_csv<R: CsvRow>(rows: &[R]) -> String {
    let mut out = String::from(R::HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.fields().join(","));
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianRow {
    pub alpha: f64,
    pub period: usize,
    pub power: f64,
    pub capacity_bits: f64,
    pub no_csit_bits: f64,
    pub full_csit_bits: f64,
    pub lambda: f64,
}

impl CsvRow for GaussianRow {
    const HEADER: &'static str = "alpha,T,power,capacity_bits,no_csit_bits,full_csit_bits,lambda";

    fn fields(&self) -> Vec<String> {
        vec![
            format_g12(self.alpha),
            self.period.to_string(),
            format_g12(self.power),
            format_g12(self.capacity_bits),
            format_g12(self.no_csit_bits),
            format_g12(self.full_csit_bits),
            format_g12(self.lambda),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FsmcRow {
    pub period: usize,
    pub capacity_bits: f64,
}

impl CsvRow for FsmcRow {
    const HEADER: &'static str = "T,capacity_bits";

    fn fields(&self) -> Vec<String> {
        vec![self.period.to_string(), format_g12(self.capacity_bits)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimRow {
    pub alpha: f64,
    pub period: usize,
    pub power: f64,
    pub analytic_bits: f64,
    pub empirical_bits: f64,
    pub std_error: f64,
    pub achieved_power: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl CsvRow for SimRow {
    const HEADER: &'static str = "alpha,T,power,analytic_bits,empirical_bits,std_error,achieved_power,n_samples,seed";

    fn fields(&self) -> Vec<String> {
        vec![
            format_g12(self.alpha),
            self.period.to_string(),
            format_g12(self.power),
            format_g12(self.analytic_bits),
            format_g12(self.empirical_bits),
            format_g12(self.std_error),
            format_g12(self.achieved_power),
            self.n_samples.to_string(),
            self.seed.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRow {
    pub alpha: f64,
    pub lag: usize,
    pub power: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub ks_statistic: f64,
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    pub max_multinomial_z: f64,
    pub max_batch_z: f64,
    pub empirical_bits: f64,
    pub std_error: f64,
}

impl CsvRow for ValidationRow {
    const HEADER: &'static str = "alpha,lag,power,n_samples,seed,ks_statistic,chi_square,degrees_of_freedom,\
max_multinomial_z,max_batch_z,empirical_bits,std_error";

    fn fields(&self) -> Vec<String> {
        vec![
            format_g12(self.alpha),
            self.lag.to_string(),
            format_g12(self.power),
            self.n_samples.to_string(),
            self.seed.to_string(),
            format_g12(self.ks_statistic),
            format_g12(self.chi_square),
            self.degrees_of_freedom.to_string(),
            format_g12(self.max_multinomial_z),
            format_g12(self.max_batch_z),
            format_g12(self.empirical_bits),
            format_g12(self.std_error),
        ]
    }
}

/// Optimal input laws of every solved period, written next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FsmcReport {
    pub states: Vec<String>,
    pub input_alphabet: Vec<String>,
    pub periods: Vec<FsmcPeriodReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FsmcPeriodReport {
    #[serde(rename = "T")]
    pub period: usize,
    pub capacity_bits: f64,
    pub per_subchannel: Vec<f64>,
    /// `input_laws[t - 1][v][x] = q_t(x | v)`.
    pub input_laws: Vec<Vec<Vec<f64>>>,
}

/// One row per `(alpha, T)`, sorted. Each alpha is swept over ascending `T`
/// with the multiplier of the previous period as the starting guess; alphas
/// run in parallel.
pub fn cmd_capacity_gaussian(cfg: &SweepConfig) -> Result<Vec<GaussianRow>> {
    cfg.require_alphas()?;
    cfg.require_periods()?;
    let solver = cfg.solver()?;
    let no_csit = capacity_no_csit(cfg.power)?;
    let full_csit = capacity_full_csit(cfg.power)?;
    let groups: Vec<Vec<GaussianRow>> = cfg
        .alphas
        .par_iter()
        .map(|&alpha| {
            let params = FadingParams::new(alpha, cfg.power)?;
            let mut guess = None;
            cfg.periods
                .iter()
                .map(|&period| {
                    let r = solver.capacity_from(&params, period, guess)?;
                    guess = r.policy.lambda();
                    Ok(GaussianRow {
                        alpha,
                        period,
                        power: cfg.power,
                        capacity_bits: r.capacity_bits,
                        no_csit_bits: no_csit,
                        full_csit_bits: full_csit,
                        lambda: r.policy.lambda().unwrap_or(f64::NAN),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(groups.into_iter().flatten().collect())
}

pub fn cmd_capacity_fsmc(cfg: &SweepConfig) -> Result<(Vec<FsmcRow>, FsmcReport)> {
    cfg.require_periods()?;
    let path = cfg
        .model_path
        .as_deref()
        .ok_or_else(|| usage("model_path: --model is required"))?;
    let fsmc = Fsmc::from_path(path)?;
    let results = cfg
        .periods
        .iter()
        .map(|&t| fsmc_capacity(&fsmc, t, cfg.tol).map(|r| (t, r)))
        .collect::<Result<Vec<_>>>()?;
    let rows = results
        .iter()
        .map(|(t, r)| FsmcRow {
            period: *t,
            capacity_bits: r.capacity_bits,
        })
        .collect();
    let report = FsmcReport {
        states: fsmc.states().to_vec(),
        input_alphabet: fsmc.input_alphabet().to_vec(),
        periods: results
            .into_iter()
            .map(|(t, r)| FsmcPeriodReport {
                period: t,
                capacity_bits: r.capacity_bits,
                per_subchannel: r.per_subchannel,
                input_laws: r.input_laws,
            })
            .collect(),
    };
    Ok((rows, report))
}

/// Every cell reuses the base seed (common random numbers across cells) and
/// simulates the largest multiple of `T` not above `samples`.
pub fn cmd_simulate(cfg: &SweepConfig) -> Result<Vec<SimRow>> {
    cfg.require_alphas()?;
    cfg.require_periods()?;
    if let Some(&t) = cfg.periods.iter().find(|&&t| t > cfg.samples) {
        return Err(usage(format!("samples: {} is smaller than the period {t}", cfg.samples)));
    }
    let solver = cfg.solver()?;
    let cells: Vec<(f64, usize)> =
        cfg.alphas.iter().flat_map(|&a| cfg.periods.iter().map(move |&t| (a, t))).collect();
    cells
        .par_iter()
        .map(|&(alpha, period)| {
            let params = FadingParams::new(alpha, cfg.power)?;
            let n = cfg.samples - cfg.samples % period;
            let (result, report) = simulate_capacity(&solver, &params, period, n, cfg.seed)?;
            Ok(SimRow {
                alpha,
                period,
                power: cfg.power,
                analytic_bits: result.capacity_bits,
                empirical_bits: report.empirical_rate_bits,
                std_error: report.std_error,
                achieved_power: report.achieved_power,
                n_samples: n,
                seed: cfg.seed,
            })
        })
        .collect()
}

pub fn cmd_validate_fading(cfg: &SweepConfig) -> Result<Vec<ValidationRow>> {
    cfg.require_alphas()?;
    cfg.alphas
        .par_iter()
        .map(|&alpha| {
            let params = FadingParams::new(alpha, cfg.power)?;
            let r = validate_fading(&params, cfg.lag, cfg.samples, cfg.seed)?;
            let s = r.strata.as_ref().expect("validate_fading fills the strata report");
            Ok(ValidationRow {
                alpha,
                lag: cfg.lag,
                power: cfg.power,
                n_samples: r.n_samples,
                seed: cfg.seed,
                ks_statistic: r.ks_statistic.unwrap_or(f64::NAN),
                chi_square: s.chi_square,
                degrees_of_freedom: s.degrees_of_freedom,
                max_multinomial_z: s.max_multinomial_z,
                max_batch_z: s.max_batch_z,
                empirical_bits: r.empirical_rate_bits,
                std_error: r.std_error,
            })
        })
        .collect()
}

/// Writes `contents` to `path` via a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let located = |e: io::Error| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(located)?;
    tmp.write_all(contents).map_err(located)?;
    tmp.as_file().sync_all().map_err(located)?;
    tmp.persist(path).map_err(|e| located(e.error))?;
    Ok(())
}

/// Sidecar location for the FSMC input laws: `<output stem>.laws.json`.
pub fn laws_path(output: &Path) -> PathBuf {
    output.with_extension("laws.json")
}

fn emit(output: Option<&Path>, csv: &str) -> Result<()> {
    match output {
        Some(path) => write_atomic(path, csv.as_bytes()),
        None => {
            let mut out = io::stdout().lock();
            out.write_all(csv.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn periods_of(args: &PeriodArgs) -> Option<Vec<usize>> {
    let mut periods = args.periods.clone();
    if let Some(r) = args.period_range {
        periods.extend(r.lo..=r.hi);
    }
    (!periods.is_empty()).then_some(periods)
}

fn alphas_of(args: &FadingArgs) -> Option<Vec<f64>> {
    (!args.alphas.is_empty()).then(|| args.alphas.clone())
}

fn resolve(flags: ConfigFile, config: Option<&Path>) -> Result<SweepConfig> {
    let base = match config {
        Some(path) => ConfigFile::from_path(path)?,
        None => ConfigFile::default(),
    };
    SweepConfig::from_file(flags.over(base))
}

/// Resolves the configuration of a parsed command line.
pub fn sweep_config(command: &Command) -> Result<SweepConfig> {
    match command {
        Command::CapacityGaussian { fading, periods, solver, io } => resolve(
            ConfigFile {
                alphas: alphas_of(fading),
                periods: periods_of(periods),
                power: fading.power,
                quad_nodes: solver.quad_nodes,
                tol: solver.tol,
                output_path: io.output.clone(),
                ..ConfigFile::default()
            },
            io.config.as_deref(),
        ),
        Command::CapacityFsmc { model, periods, tol, io } => resolve(
            ConfigFile {
                periods: periods_of(periods),
                tol: *tol,
                output_path: io.output.clone(),
                model_path: model.clone(),
                ..ConfigFile::default()
            },
            io.config.as_deref(),
        ),
        Command::Simulate { fading, periods, solver, sampling, io } => resolve(
            ConfigFile {
                alphas: alphas_of(fading),
                periods: periods_of(periods),
                power: fading.power,
                quad_nodes: solver.quad_nodes,
                tol: solver.tol,
                output_path: io.output.clone(),
                seed: sampling.seed,
                samples: sampling.samples,
                ..ConfigFile::default()
            },
            io.config.as_deref(),
        ),
        Command::ValidateFading { fading, lag, sampling, io } => resolve(
            ConfigFile {
                alphas: alphas_of(fading),
                power: fading.power,
                output_path: io.output.clone(),
                seed: sampling.seed,
                samples: sampling.samples,
                lag: *lag,
                ..ConfigFile::default()
            },
            io.config.as_deref(),
        ),
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = sweep_config(&cli.command)?;
    let output = cfg.output_path.as_deref();
    match cli.command {
        Command::CapacityGaussian { .. } => emit(output, &render_csv(&cmd_capacity_gaussian(&cfg)?)),
        Command::CapacityFsmc { .. } => {
            let (rows, report) = cmd_capacity_fsmc(&cfg)?;
            let csv = render_csv(&rows);
            if let Some(path) = output {
                let json = serde_json::to_string_pretty(&report).map_err(|e| Error::Io(e.into()))?;
                write_atomic(&laws_path(path), json.as_bytes())?;
            }
            emit(output, &csv)
        }
        Command::Simulate { .. } => emit(output, &render_csv(&cmd_simulate(&cfg)?)),
        Command::ValidateFading { .. } => emit(output, &render_csv(&cmd_validate_fading(&cfg)?)),
    }
}

/// Process exit status: 2 usage or configuration, 3 model validation,
/// 4 numerical failure, 5 I/O.
pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Usage(_) | Error::Config(_) | Error::Domain(_) => 2,
        Error::Model(_) => 3,
        Error::Convergence { .. } | Error::Numerical(_) => 4,
        Error::Io(_) => 5,
    }
}
