//! Flag definitions and the flat key=value config file.
//!
//! Every option can come from the command line or from `--config FILE`;
//! flags win. Config keys are the long flag names (`input`, `method`,
//! `nu-init`, ...).

use std::collections::HashMap;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::formats::InputFormat;
use crate::CliError;

#[derive(Parser)]
#[command(
    name = "leecarter",
    version,
    about = "Lee-Carter mortality model estimation with SVD/PPCA, Poisson GLM, and robust t-PPCA estimators"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Fit (a, b, k) with one estimator and write a.csv/b.csv/k.csv
    Fit(FitArgs),
    /// Residual or deviance bootstrap: standard errors and percentile CIs
    Bootstrap(BootstrapArgs),
    /// Score years with the scaled-Mahalanobis/F rule under a t-PPCA fit.
    /// Diagnostic only: log-mortality panels are not truly multivariate t,
    /// so treat flags as hints, not verdicts.
    Detect(DetectArgs),
    /// Slide an injected pandemic window across the panel and score the
    /// drift of each estimator against its outlier-free reference fit
    Simulate(SimulateArgs),
}

#[derive(Args)]
pub struct CommonArgs {
    /// Input: csv_long file, or directory with Deaths_1x1.txt and
    /// Exposures_1x1.txt for hmd_txt
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Input format: csv_long or hmd_txt
    #[arg(long)]
    pub format: Option<String>,
    /// Age window LO:HI, inclusive (e.g. 0:100)
    #[arg(long)]
    pub ages: Option<String>,
    /// Year window LO:HI, inclusive (e.g. 1970:2019)
    #[arg(long)]
    pub years: Option<String>,
    /// Output directory (created if absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// RNG seed for bootstrap/simulation reproducibility
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (default: machine parallelism)
    #[arg(long)]
    pub threads: Option<usize>,
    /// Floor applied to central rates before taking logs
    #[arg(long)]
    pub rate_floor: Option<f64>,
    /// Flat key=value config file mirroring the flags; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Estimator: svd, ppca, poisson_glm, or tppca
    #[arg(long)]
    pub method: Option<String>,
    /// Relative log-likelihood convergence tolerance (GLM and t-PPCA)
    #[arg(long)]
    pub tol: Option<f64>,
    /// Iteration cap (GLM and t-PPCA)
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Initial degrees of freedom for t-PPCA
    #[arg(long, allow_hyphen_values = true)]
    pub nu_init: Option<f64>,
    /// Freeze ν at nu-init instead of line-searching it each cycle
    #[arg(long)]
    pub freeze_nu: bool,
}

#[derive(Args)]
pub struct BootstrapArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Estimator to bootstrap: svd, tppca (residual-vector scheme) or
    /// poisson_glm (deviance scheme)
    #[arg(long)]
    pub estimator: Option<String>,
    /// Number of replications
    #[arg(long = "B")]
    pub replications: Option<usize>,
    /// Two-sided confidence level for the percentile intervals
    #[arg(long)]
    pub ci_level: Option<f64>,
}

#[derive(Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Quantile level of the F threshold, in (0,1)
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: Option<f64>,
    /// t-PPCA convergence tolerance
    #[arg(long)]
    pub tol: Option<f64>,
    /// t-PPCA iteration cap
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Initial degrees of freedom for the t-PPCA fit
    #[arg(long, allow_hyphen_values = true)]
    pub nu_init: Option<f64>,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Length of the injected outlier window in years
    #[arg(long)]
    pub duration: Option<usize>,
    /// Pandemic table CSV (age_low,age_high,deaths); default: bundled
    /// U.S. 2020 Covid-19 deaths
    #[arg(long)]
    pub pandemic: Option<PathBuf>,
    /// Comma-separated estimators to score (svd,poisson_glm,tppca)
    #[arg(long)]
    pub estimators: Option<String>,
    /// Year whose observed deaths shape the within-group redistribution
    /// (default: last base year)
    #[arg(long)]
    pub reference_year: Option<i32>,
}

/// The flat config file, parsed into a key → value map.
pub struct ConfigMap {
    map: HashMap<String, String>,
}

impl ConfigMap {
    pub fn empty() -> Self {
        ConfigMap {
            map: HashMap::new(),
        }
    }

    pub fn load(path: &PathBuf) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let mut map = HashMap::new();
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "config line {}: expected `key = value`",
                    idx + 1
                )));
            };
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(ConfigMap { map })
    }

    /// Flag value if set, else the config entry, else None.
    pub fn resolve<T: Clone + FromStr>(
        &self,
        flag: Option<T>,
        key: &str,
    ) -> Result<Option<T>, CliError> {
        if let Some(v) = flag {
            return Ok(Some(v));
        }
        match self.map.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("config key `{key}`: bad value {raw:?}"))),
        }
    }
}

/// Resolved shared settings.
pub struct Common {
    pub input: PathBuf,
    pub format: InputFormat,
    pub ages: Option<(u32, u32)>,
    pub years: Option<(i32, i32)>,
    pub out: PathBuf,
    pub seed: u64,
    pub threads: usize,
    pub rate_floor: f64,
}

fn parse_range<T: FromStr + Copy>(s: &str, what: &str) -> Result<(T, T), CliError> {
    let err = || CliError::Usage(format!("{what} must look like LO:HI, got {s:?}"));
    let (lo, hi) = s.split_once(':').ok_or_else(err)?;
    Ok((
        lo.trim().parse().map_err(|_| err())?,
        hi.trim().parse().map_err(|_| err())?,
    ))
}

impl CommonArgs {
    pub fn resolve(self) -> Result<(Common, ConfigMap), CliError> {
        let cfg = match &self.config {
            Some(path) => ConfigMap::load(path)?,
            None => ConfigMap::empty(),
        };
        let input = cfg
            .resolve(self.input, "input")?
            .ok_or_else(|| CliError::Usage("missing --input".into()))?;
        let format_str: Option<String> = cfg.resolve(self.format, "format")?;
        let format = match format_str.as_deref() {
            None => InputFormat::CsvLong,
            Some(s) => InputFormat::parse(s)
                .ok_or_else(|| CliError::Usage(format!("unknown format {s:?}")))?,
        };
        let ages = cfg
            .resolve(self.ages, "ages")?
            .map(|s: String| parse_range::<u32>(&s, "--ages"))
            .transpose()?;
        let years = cfg
            .resolve(self.years, "years")?
            .map(|s: String| parse_range::<i32>(&s, "--years"))
            .transpose()?;
        let out = cfg
            .resolve(self.out, "out")?
            .ok_or_else(|| CliError::Usage("missing --out".into()))?;
        let seed = cfg.resolve(self.seed, "seed")?.unwrap_or(0);
        let threads = cfg
            .resolve(self.threads, "threads")?
            .unwrap_or_else(crate::parallel::default_threads);
        if threads == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        let rate_floor = cfg
            .resolve(self.rate_floor, "rate-floor")?
            .unwrap_or(leecarter::dataset::DEFAULT_RATE_FLOOR);
        if !(rate_floor > 0.0) {
            return Err(CliError::Usage("--rate-floor must be positive".into()));
        }
        Ok((
            Common {
                input,
                format,
                ages,
                years,
                out,
                seed,
                threads,
                rate_floor,
            },
            cfg,
        ))
    }
}
