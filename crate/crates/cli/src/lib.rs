//! Command-line front end for `elcpd`.

pub mod error;
pub mod input;
pub mod report;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use elcpd::scan::bootstrap_from_observed;
use elcpd::{
    binary_segment, empirical_critval_study, gen_ar_change, gumbel_quantile, power_study, raw_threshold, trimmed_scan,
    NoiseModel, PowerStudyConfig, ScanOptions, SegmentOptions, SolverSettings, TimeSeries, DEFAULT_BURN_IN,
};

pub use error::CliError;
use input::{read_column, ColumnSel, InputDigest};
use report::{CritvalEntry, CritvalTable, ReportBody, RunReport, SimulatedSeries, SCHEMA_VERSION};

/// Seed used when `--seed` is not given, so casual runs are reproducible.
pub const DEFAULT_SEED: u64 = 20_240_501;

const EXIT_CODES: &str = "\
Exit codes:
  0  success (including 'no change detected')
  1  internal error
  2  usage error or invalid request
  3  input file unreadable
  4  non-numeric value in the selected column
  5  missing value without --drop-missing
  6  numerical failure (degenerate segment, solver failure, bootstrap failure)
  7  invalid study config";

#[derive(Debug, Parser)]
#[command(name = "elcpd", version, about = "Empirical-likelihood change-point detection for AR(p) series")]
#[command(after_help = EXIT_CODES)]
pub struct Cli {
    /// Worker threads for scans and simulations. Results do not depend on it.
    #[arg(long, global = true, env = "ELCPD_JOBS")]
    pub jobs: Option<usize>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Sigma2 {
    Shared,
    Separate,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// CSV file, comma separated, optional header row.
    pub csv: PathBuf,

    /// Column by 0-based index or header name.
    #[arg(long, default_value = "0")]
    pub column: ColumnSel,

    /// Remove rows with missing values. This breaks the time structure of
    /// an AR series; use with care.
    #[arg(long)]
    pub drop_missing: bool,

    /// Subtract the sample mean first. The model has no intercept.
    #[arg(long)]
    pub demean: bool,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// AR order.
    #[arg(short = 'p', long = "order", default_value_t = 1)]
    pub order: usize,

    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,

    /// Innovation variance under the alternative.
    #[arg(long, value_enum, default_value_t = Sigma2::Shared)]
    pub sigma2: Sigma2,

    /// Same as `--sigma2 shared`.
    #[arg(long, conflicts_with = "sigma2")]
    pub shared_sigma2: bool,

    /// Calibration dimension; defaults to the AR order.
    #[arg(long)]
    pub r: Option<usize>,

    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test a series for a single change in its AR coefficients.
    Detect {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Trim widths `A,B`: splits run from A to n − B.
        #[arg(long, value_parser = parse_trim)]
        trim: Option<(usize, usize)>,
        /// Residual-bootstrap p-value with this many replicates (at least 99).
        #[arg(long, value_name = "B")]
        bootstrap: Option<usize>,
        /// Write the scan profile as CSV with columns k,stat.
        #[arg(long, value_name = "FILE")]
        profile_out: Option<PathBuf>,
    },
    /// Locate multiple changes by binary segmentation. Short series calibrate
    /// poorly; prefer `detect --bootstrap` below a few hundred points.
    Segment {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Intervals shorter than this are not tested.
        #[arg(long, default_value_t = 50)]
        min_len: usize,
        /// Test depth d at level alpha / 2^d.
        #[arg(long)]
        depth_adjust: bool,
    },
    /// Gumbel critical values, plus raw thresholds for Z_n* when --n is given.
    Critval {
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.10")]
        alpha: Vec<f64>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 1)]
        r: usize,
    },
    /// Monte Carlo power table from a study config.
    Power {
        config: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's replicate count.
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Simulate an AR series with one coefficient change, written as CSV.
    Simulate {
        #[arg(long)]
        n: usize,
        /// Last index under the pre-change coefficients.
        #[arg(long)]
        k: usize,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "0.1")]
        phi_pre: Vec<f64>,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "0.5")]
        phi_post: Vec<f64>,
        #[arg(long, default_value = "gaussian")]
        noise: NoiseModel,
        #[arg(long, default_value_t = DEFAULT_BURN_IN)]
        burn_in: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Empirical quantiles of the normalized statistic under no change.
    EmpiricalCritval {
        #[arg(long)]
        n: usize,
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "0.3")]
        phi: Vec<f64>,
        #[arg(long, default_value = "gaussian")]
        noise: NoiseModel,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.01,0.05,0.10")]
        alpha: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

fn parse_trim(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected A,B")?;
    let a = a.trim().parse().map_err(|_| format!("bad trim width '{a}'"))?;
    let b = b.trim().parse().map_err(|_| format!("bad trim width '{b}'"))?;
    Ok((a, b))
}

/// What a finished command prints.
#[derive(Debug)]
pub struct Output {
    pub report: RunReport,
    /// Printed instead of the text report (CSV on stdout).
    pub raw_stdout: Option<String>,
}

impl Output {
    pub fn render(&self, format: Format) -> String {
        match (format, &self.raw_stdout) {
            (Format::Json, _) => self.report.to_json() + "\n",
            (Format::Text, Some(raw)) => raw.clone(),
            (Format::Text, None) => self.report.to_text(),
        }
    }
}

fn configure_jobs(jobs: Option<usize>) -> Result<bool, CliError> {
    let jobs = match jobs {
        Some(0) => return Err(CliError::Usage("--jobs must be at least 1".into())),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    if jobs > 1 {
        // A second build in the same process fails harmlessly.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    Ok(jobs > 1)
}

fn settings_for(model: &ModelArgs) -> SolverSettings {
    SolverSettings {
        shared_sigma2: model.shared_sigma2 || model.sigma2 == Sigma2::Shared,
        seed: model.seed,
        ..Default::default()
    }
}

fn load(data: &DataArgs) -> Result<(TimeSeries, InputDigest, Vec<String>), CliError> {
    let col = read_column(&data.csv, &data.column, data.drop_missing)?;
    let mut warnings = Vec::new();
    if col.dropped > 0 {
        warnings.push(format!(
            "dropped {} rows with missing values; the AR time structure is broken at each gap",
            col.dropped
        ));
    }
    let mut values = col.values;
    if data.demean {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        values.iter_mut().for_each(|v| *v -= mean);
    }
    let digest = InputDigest {
        path: data.csv.display().to_string(),
        column: col.column,
        rows: col.rows,
        dropped: col.dropped,
        demeaned: data.demean,
    };
    Ok((TimeSeries::new(values)?, digest, warnings))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn check_alpha(alpha: f64) -> Result<(), CliError> {
    gumbel_quantile(alpha).map(|_| ()).map_err(|e| CliError::Usage(e.to_string()))
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Result<(Output, Format), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = Cli::try_parse_from(&args).map_err(|e| CliError::Usage(e.to_string()))?;
    let echo = args.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let format = cli.format;
    Ok((execute(cli, echo)?, format))
}

pub fn execute(cli: Cli, command: Vec<String>) -> Result<Output, CliError> {
    let started = Instant::now();
    let parallel = configure_jobs(cli.jobs)?;
    let mut input = None;
    let mut seed = None;
    let mut warnings = Vec::new();
    let mut raw_stdout = None;

    let result = match cli.command {
        Command::Detect { data, model, trim, bootstrap, profile_out } => {
            check_alpha(model.alpha)?;
            let (series, digest, w) = load(&data)?;
            input = Some(digest);
            warnings = w;
            seed = Some(model.seed);
            let settings = settings_for(&model);
            let options = ScanOptions { alpha: model.alpha, trim, r: model.r, parallel, ..Default::default() };
            let scan = trimmed_scan(&series, model.order, &options, &settings)?;
            let bootstrap = bootstrap
                .map(|b| bootstrap_from_observed(&series, model.order, scan.z_star, b, model.seed, &options, &settings))
                .transpose()?;
            if let Some(path) = profile_out {
                let mut csv = String::from("k,stat\n");
                for pt in &scan.profile {
                    let _ = writeln!(csv, "{},{}", pt.k, pt.stat);
                }
                write_file(&path, &csv)?;
            }
            ReportBody::Detect { scan, bootstrap }
        }
        Command::Segment { data, model, min_len, depth_adjust } => {
            check_alpha(model.alpha)?;
            let (series, digest, w) = load(&data)?;
            input = Some(digest);
            warnings = w;
            seed = Some(model.seed);
            let settings = settings_for(&model);
            let options = SegmentOptions {
                alpha: model.alpha,
                min_len,
                depth_adjust,
                scan: ScanOptions { r: model.r, parallel, ..Default::default() },
            };
            ReportBody::Segment { segmentation: binary_segment(&series, model.order, &options, &settings)? }
        }
        Command::Critval { alpha, n, r } => {
            let rows = alpha
                .iter()
                .map(|&a| {
                    let t_alpha = gumbel_quantile(a)?;
                    let raw = n.map(|n| raw_threshold(a, n, r)).transpose()?;
                    Ok(CritvalEntry { alpha: a, t_alpha, raw_threshold: raw })
                })
                .collect::<Result<Vec<_>, elcpd::ElError>>()
                .map_err(|e| CliError::Usage(e.to_string()))?;
            ReportBody::Critval { table: CritvalTable { n, r, rows } }
        }
        Command::Power { config, out, seed: seed_override, reps } => {
            let text =
                std::fs::read_to_string(&config).map_err(|source| CliError::Io { path: config.clone(), source })?;
            let mut cfg = PowerStudyConfig::parse(&text).map_err(|e| CliError::Config(e.to_string()))?;
            if let Some(s) = seed_override {
                cfg.seed = s;
            }
            if let Some(r) = reps {
                cfg.reps = r;
            }
            cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
            seed = Some(cfg.seed);
            let table = power_study(&cfg, parallel, &SolverSettings::default())?;
            let flagged = table.cells.iter().filter(|c| c.flagged).count();
            if flagged > 0 {
                warnings.push(format!("{flagged} cells lost more than 5% of their replicates to solver failures"));
            }
            match out {
                Some(path) => write_file(&path, &table.to_csv())?,
                None => raw_stdout = Some(table.to_csv()),
            }
            ReportBody::Power { table }
        }
        Command::Simulate { n, k, phi_pre, phi_post, noise, burn_in, seed: s, out } => {
            let series = gen_ar_change(n, k, &phi_pre, &phi_post, noise, burn_in, s)?;
            seed = Some(s);
            let mut csv = String::from("x\n");
            for v in series.values() {
                let _ = writeln!(csv, "{v}");
            }
            match &out {
                Some(path) => write_file(path, &csv)?,
                None => raw_stdout = Some(csv),
            }
            let out = out.map(|p| p.display().to_string());
            ReportBody::Simulate { series: SimulatedSeries { n, k, phi_pre, phi_post, noise, burn_in, out } }
        }
        Command::EmpiricalCritval { n, phi, noise, reps, alpha, seed: s } => {
            seed = Some(s);
            let study = empirical_critval_study(n, &phi, noise, reps, &alpha, s, parallel, &SolverSettings::default())?;
            ReportBody::EmpiricalCritval { study }
        }
    };

    let report = RunReport {
        schema_version: SCHEMA_VERSION,
        version: env!("CARGO_PKG_VERSION").to_string(),
        command,
        input,
        seed,
        elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
        result,
        warnings,
    };
    Ok(Output { report, raw_stdout })
}
