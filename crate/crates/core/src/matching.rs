//! Second-stage re-estimation of the time index by matching observed total
//! deaths, and the scaled-Mahalanobis/F outlier rule.

use alloc::vec::Vec;

use crate::dataset::MortalityDataset;
use crate::fmath;
use crate::matrix::Mat;
use crate::numerics::{f_quantile, solve_root, Bracket};
use crate::tppca::TppcaParams;
use crate::{Error, Result};

/// Initial search interval for the matched time index; mortality indices
/// are O(10) in practice, and `solve_root` expands geometrically before
/// giving up.
const KT_BRACKET: (f64, f64) = (-50.0, 50.0);

/// Solve `Σ_x N[x,t] · exp(a_x + b_x k) = Σ_x D[x,t]` for `k` in one year.
///
/// With every `b_x > 0` the left side is strictly increasing in `k` and the
/// root is unique. Zero total deaths has no finite root (the left side
/// stays positive) and is reported as a failure once bracket expansion
/// caps out.
pub fn match_kt(a: &[f64], b: &[f64], ds: &MortalityDataset, year: i32) -> Result<f64> {
    let t = ds.year_index(year).ok_or(Error::YearOutsidePanel(year))?;
    match_kt_index(a, b, ds, t).map_err(|e| match e {
        Error::NoSignChange => Error::YearFailure {
            year,
            source: "no finite root for death matching (bracket cap reached)",
        },
        other => other,
    })
}

fn match_kt_index(a: &[f64], b: &[f64], ds: &MortalityDataset, t: usize) -> Result<f64> {
    let p = ds.n_ages();
    if a.len() != p || b.len() != p {
        return Err(Error::DimensionMismatch("a/b vs dataset ages"));
    }
    let d_total = ds.total_deaths(t);
    let exposures = ds.exposures().col(t);
    let fitted_minus_observed = |k: f64| -> f64 {
        let mut s = 0.0;
        for x in 0..p {
            s += exposures[x] * fmath::exp((a[x] + b[x] * k).clamp(-700.0, 700.0));
        }
        s - d_total
    };
    solve_root(
        fitted_minus_observed,
        Bracket::new(KT_BRACKET.0, KT_BRACKET.1).with_tol(1e-12),
    )
}

/// Death-number matching for every year. The matched vector is reported
/// as-is, without re-centering: matching and `Σ k = 0` cannot generally
/// hold at once and the centering constraint belongs to the estimation
/// stage.
pub fn match_all(a: &[f64], b: &[f64], ds: &MortalityDataset) -> Result<Vec<f64>> {
    ds.years()
        .iter()
        .map(|&year| match_kt(a, b, ds, year))
        .collect()
}

/// Per-year outlier classification under the fitted t-PPCA scale matrix.
#[derive(Debug, Clone)]
pub struct OutlierReport {
    /// Scaled squared Mahalanobis distance `D²/p` per year.
    pub scores: Vec<f64>,
    /// `F_{p,ν}` quantile at `alpha`.
    pub threshold: f64,
    /// `flags[t] = scores[t] > threshold` (strict).
    pub flags: Vec<bool>,
    pub alpha: f64,
}

impl OutlierReport {
    /// Apply the strict-inequality rule to precomputed scores.
    pub fn from_scores(scores: Vec<f64>, threshold: f64, alpha: f64) -> Self {
        let flags = scores.iter().map(|&s| s > threshold).collect();
        OutlierReport {
            scores,
            threshold,
            flags,
            alpha,
        }
    }
}

/// Score every year column by `D²/p` and flag those beyond the
/// `F_{p,ν}(alpha)` quantile.
///
/// `params` must be the fitted t-PPCA parameters *before* `b` is
/// normalized: normalization rescales the scale matrix and would distort
/// the distances. The underlying F fact assumes the data really are
/// multivariate t, which log-mortality panels only approximate; treat the
/// flags as a diagnostic, not a verdict.
pub fn detect_outliers(params: &TppcaParams, y: &Mat, alpha: f64) -> Result<OutlierReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument("alpha must be in (0, 1)"));
    }
    params.validate()?;
    if y.rows() != params.a.len() {
        return Err(Error::DimensionMismatch("params vs data rows"));
    }
    let p = y.rows() as f64;
    let threshold = f_quantile(alpha, p, params.nu)?;
    let scores: Vec<f64> = (0..y.cols())
        .map(|t| params.mahalanobis_sq(y.col(t)) / p)
        .collect();
    Ok(OutlierReport::from_scores(scores, threshold, alpha))
}
