//! Hypothetical-pandemic experiment grid: slide an injected outlier window
//! across a clean panel, refit every estimator, and score the drift of
//! `(a, b, k)` against the outlier-free reference fits with percentage
//! error metrics.

use alloc::vec::Vec;

use crate::dataset::{inject_pandemic, redistribute_group_deaths, MortalityDataset, PandemicTable};
use crate::fmath;
use crate::gaussian::Method;
use crate::pipeline::{fit_method, FitOptions};
use crate::{Error, Result};

/// A percentage-error value together with how many reference entries were
/// excluded for being exactly zero.
#[derive(Debug, Clone, Copy)]
pub struct PercentageError {
    pub value: f64,
    pub excluded: usize,
}

fn percentage_terms<'a>(
    est: &'a [f64],
    reference: &'a [f64],
) -> Result<impl Iterator<Item = f64> + 'a> {
    if est.len() != reference.len() {
        return Err(Error::DimensionMismatch("estimate vs reference length"));
    }
    Ok(reference
        .iter()
        .zip(est)
        .filter(|(&r, _)| r != 0.0)
        .map(|(&r, &e)| (r - e) / r))
}

/// Mean absolute percentage error against `reference`; entries with a
/// reference value of exactly zero are skipped and counted.
pub fn mape(est: &[f64], reference: &[f64]) -> Result<PercentageError> {
    let terms: Vec<f64> = percentage_terms(est, reference)?.collect();
    let excluded = reference.len() - terms.len();
    if terms.is_empty() {
        return Err(Error::Degenerate("all reference entries are zero"));
    }
    let value = terms.iter().map(|&d| fmath::abs(d)).sum::<f64>() / terms.len() as f64;
    Ok(PercentageError { value, excluded })
}

/// Root mean square percentage error; same exclusion rule as [`mape`].
pub fn rmspe(est: &[f64], reference: &[f64]) -> Result<PercentageError> {
    let terms: Vec<f64> = percentage_terms(est, reference)?.collect();
    let excluded = reference.len() - terms.len();
    if terms.is_empty() {
        return Err(Error::Degenerate("all reference entries are zero"));
    }
    let value = fmath::sqrt(terms.iter().map(|&d| d * d).sum::<f64>() / terms.len() as f64);
    Ok(PercentageError { value, excluded })
}

/// Grid configuration: which panel years form the base period, how long
/// the injected outlier lasts, what to inject, and which estimators run.
#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    /// Inclusive calendar-year bounds of the base period.
    pub base_years: (i32, i32),
    /// Length of the injected outlier window in years.
    pub outlier_duration: usize,
    pub pandemic: PandemicTable,
    pub estimators: Vec<Method>,
    /// Recorded in outputs for reproducibility; the grid itself is
    /// deterministic.
    pub seed: u64,
    /// Year whose observed deaths shape the within-group redistribution;
    /// defaults to the last base year.
    pub reference_year: Option<i32>,
}

/// Scores of one estimator in one experiment.
#[derive(Debug, Clone)]
pub struct MethodScores {
    pub method: Method,
    pub a_mape: f64,
    pub a_rmspe: f64,
    pub b_mape: f64,
    pub b_rmspe: f64,
    /// k metrics run over the base years excluding the outlier window.
    pub k_mape: f64,
    pub k_rmspe: f64,
    /// Reference entries skipped for being exactly zero, across all blocks.
    pub excluded: usize,
    /// The refit failed; metric fields are NaN and the row is dropped from
    /// aggregates.
    pub failed: bool,
}

/// One experiment: a single placement of the outlier window.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    /// Inclusive start/end calendar years of the injected window.
    pub outlier_window: (i32, i32),
    pub scores: Vec<MethodScores>,
}

/// Mean/s.d. of one metric for one estimator across the grid.
#[derive(Debug, Clone)]
pub struct AggregateRow {
    pub method: Method,
    pub metric: &'static str,
    pub mean: f64,
    pub sd: f64,
    /// Experiments that contributed (failures excluded).
    pub experiments: usize,
}

#[derive(Debug, Clone)]
pub struct GridOutput {
    pub experiments: Vec<ExperimentResult>,
    pub aggregates: Vec<AggregateRow>,
}

/// Precomputed grid state; `run_window` calls are independent, so drivers
/// may execute them in any order or in parallel.
pub struct GridPlan {
    base: MortalityDataset,
    per_age_deaths: Vec<f64>,
    windows: Vec<(i32, i32)>,
    references: Vec<(Method, ReferenceFit)>,
    opts: FitOptions,
}

struct ReferenceFit {
    a: Vec<f64>,
    b: Vec<f64>,
    k: Vec<f64>,
}

impl GridPlan {
    pub fn new(ds: &MortalityDataset, cfg: &ScenarioConfig) -> Result<Self> {
        if cfg.estimators.is_empty() {
            return Err(Error::InvalidArgument("no estimators requested"));
        }
        if cfg.outlier_duration == 0 {
            return Err(Error::InvalidArgument("outlier duration must be positive"));
        }
        let base = ds.window(None, Some(cfg.base_years))?;
        let n_years = base.n_years();
        if cfg.outlier_duration > n_years {
            return Err(Error::InvalidArgument(
                "outlier duration exceeds the base period",
            ));
        }

        let ref_year = cfg.reference_year.unwrap_or(cfg.base_years.1);
        let ref_idx = base
            .year_index(ref_year)
            .ok_or(Error::YearOutsidePanel(ref_year))?;
        let reference_deaths = base.deaths().col(ref_idx).to_vec();
        let per_age_deaths =
            redistribute_group_deaths(&cfg.pandemic, base.ages(), &reference_deaths)?;

        let windows: Vec<(i32, i32)> = (0..=(n_years - cfg.outlier_duration))
            .map(|offset| {
                let start = cfg.base_years.0 + offset as i32;
                (start, start + cfg.outlier_duration as i32 - 1)
            })
            .collect();

        let opts = FitOptions::default();
        let references = cfg
            .estimators
            .iter()
            .map(|&method| {
                let outcome = fit_method(&base, method, &opts)?;
                Ok((
                    method,
                    ReferenceFit {
                        a: outcome.fit.a,
                        b: outcome.fit.b,
                        k: outcome.fit.k,
                    },
                ))
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(GridPlan {
            base,
            per_age_deaths,
            windows,
            references,
            opts,
        })
    }

    pub fn windows(&self) -> &[(i32, i32)] {
        &self.windows
    }

    /// Total pandemic deaths injected per year (after redistribution).
    pub fn injected_total(&self) -> f64 {
        self.per_age_deaths.iter().sum()
    }

    /// Run one experiment of the grid.
    pub fn run_window(&self, idx: usize) -> Result<ExperimentResult> {
        let window = self.windows[idx];
        let years: Vec<i32> = (window.0..=window.1).collect();
        let injected = inject_pandemic(&self.base, &self.per_age_deaths, &years)?;

        let keep: Vec<usize> = self
            .base
            .years()
            .iter()
            .enumerate()
            .filter(|(_, &y)| y < window.0 || y > window.1)
            .map(|(i, _)| i)
            .collect();

        let scores = self
            .references
            .iter()
            .map(|(method, reference)| {
                match fit_method(&injected, *method, &self.opts) {
                    Ok(outcome) => score_fit(*method, &outcome.fit.a, &outcome.fit.b, &outcome.fit.k, reference, &keep),
                    Err(_) => MethodScores {
                        method: *method,
                        a_mape: f64::NAN,
                        a_rmspe: f64::NAN,
                        b_mape: f64::NAN,
                        b_rmspe: f64::NAN,
                        k_mape: f64::NAN,
                        k_rmspe: f64::NAN,
                        excluded: 0,
                        failed: true,
                    },
                }
            })
            .collect();

        Ok(ExperimentResult {
            outlier_window: window,
            scores,
        })
    }

    /// Sample mean and s.d. of every metric across the experiments.
    pub fn aggregate(&self, experiments: &[ExperimentResult]) -> Vec<AggregateRow> {
        let metrics: [(&'static str, fn(&MethodScores) -> f64); 6] = [
            ("mape_a", |s| s.a_mape),
            ("rmspe_a", |s| s.a_rmspe),
            ("mape_b", |s| s.b_mape),
            ("rmspe_b", |s| s.b_rmspe),
            ("mape_k", |s| s.k_mape),
            ("rmspe_k", |s| s.k_rmspe),
        ];
        let mut rows = Vec::new();
        for (method, _) in &self.references {
            for (name, extract) in &metrics {
                let values: Vec<f64> = experiments
                    .iter()
                    .flat_map(|e| e.scores.iter())
                    .filter(|s| s.method == *method && !s.failed)
                    .map(extract)
                    .collect();
                let m = values.len();
                let mean = if m == 0 {
                    f64::NAN
                } else {
                    values.iter().sum::<f64>() / m as f64
                };
                let sd = if m < 2 {
                    0.0
                } else {
                    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
                    fmath::sqrt(ss / (m as f64 - 1.0))
                };
                rows.push(AggregateRow {
                    method: *method,
                    metric: name,
                    mean,
                    sd,
                    experiments: m,
                });
            }
        }
        rows
    }
}

fn score_fit(
    method: Method,
    a: &[f64],
    b: &[f64],
    k: &[f64],
    reference: &ReferenceFit,
    keep: &[usize],
) -> MethodScores {
    let k_est: Vec<f64> = keep.iter().map(|&i| k[i]).collect();
    let k_ref: Vec<f64> = keep.iter().map(|&i| reference.k[i]).collect();
    let pairs = [
        (mape(a, &reference.a), rmspe(a, &reference.a)),
        (mape(b, &reference.b), rmspe(b, &reference.b)),
        (mape(&k_est, &k_ref), rmspe(&k_est, &k_ref)),
    ];
    let mut vals = [f64::NAN; 6];
    let mut excluded = 0;
    let mut failed = false;
    for (i, (m, r)) in pairs.iter().enumerate() {
        match (m, r) {
            (Ok(m), Ok(r)) => {
                vals[2 * i] = m.value;
                vals[2 * i + 1] = r.value;
                excluded += m.excluded;
            }
            _ => failed = true,
        }
    }
    MethodScores {
        method,
        a_mape: vals[0],
        a_rmspe: vals[1],
        b_mape: vals[2],
        b_rmspe: vals[3],
        k_mape: vals[4],
        k_rmspe: vals[5],
        excluded,
        failed,
    }
}

/// Sequential grid driver.
pub fn run_grid(ds: &MortalityDataset, cfg: &ScenarioConfig) -> Result<GridOutput> {
    let plan = GridPlan::new(ds, cfg)?;
    let experiments: Vec<ExperimentResult> = (0..plan.windows().len())
        .map(|i| plan.run_window(i))
        .collect::<Result<Vec<_>>>()?;
    let aggregates = plan.aggregate(&experiments);
    Ok(GridOutput {
        experiments,
        aggregates,
    })
}
