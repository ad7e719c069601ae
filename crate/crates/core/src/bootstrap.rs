//! Nonparametric residual bootstraps for parameter uncertainty.
//!
//! Two schemes, matching how each estimator is fitted:
//!
//! - residual-vector resampling for SVD and t-PPCA: whole year-vectors of
//!   log-rate fitting errors are drawn with replacement, preserving
//!   cross-age dependence, pseudo-deaths are rebuilt from the exposures,
//!   and `(a, b)` are re-estimated and `k` re-matched per replication;
//! - cellwise deviance resampling for the Poisson GLM, where each
//!   resampled deviance residual is inverted numerically to a pseudo
//!   death count before refitting.
//!
//! Every replication draws from a counter-based substream keyed by
//! `(seed, replication index)`, so results are bitwise identical no matter
//! how replications are scheduled; the sequential drivers here and any
//! parallel driver built on [`ResidualPlan::replicate`] /
//! [`DeviancePlan::replicate`] agree exactly.

use alloc::vec::Vec;

use crate::dataset::{log_rates, MortalityDataset};
use crate::fmath;
use crate::gaussian::{fit_svd, normalize, LeeCarterFit};
use crate::matching::match_all;
use crate::matrix::Mat;
use crate::numerics::{solve_root, Bracket};
use crate::poisson::{
    deviance_residuals, fit_poisson_glm, fit_poisson_glm_from, signed_deviance, GlmConfig, GlmInit,
};
use crate::rng::SplitMix64;
use crate::tppca::{e_step, fit_tppca, TppcaConfig};
use crate::{Error, Result};

/// Resampling scheme selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BootstrapMethod {
    /// Year-vector residual resampling (SVD, t-PPCA).
    ResidualVector,
    /// Cellwise deviance resampling with numeric inversion (Poisson GLM).
    Deviance,
}

/// Estimators served by the residual-vector scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualEstimator {
    Svd,
    Tppca,
}

#[derive(Debug, Clone, Copy)]
pub struct BootstrapConfig {
    /// Number of replications B.
    pub replications: usize,
    pub seed: u64,
    pub method: BootstrapMethod,
    /// Two-sided confidence level for the percentile intervals.
    pub ci_level: f64,
}

impl BootstrapConfig {
    pub fn residual(replications: usize, seed: u64) -> Self {
        BootstrapConfig {
            replications,
            seed,
            method: BootstrapMethod::ResidualVector,
            ci_level: 0.95,
        }
    }

    pub fn deviance(replications: usize, seed: u64) -> Self {
        BootstrapConfig {
            replications,
            seed,
            method: BootstrapMethod::Deviance,
            ci_level: 0.95,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidArgument("need at least one replication"));
        }
        if !(self.ci_level > 0.0 && self.ci_level < 1.0) {
            return Err(Error::InvalidArgument("ci_level must be in (0, 1)"));
        }
        Ok(())
    }
}

/// One replication's re-estimated parameter set.
#[derive(Debug, Clone)]
pub struct Replicate {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub k: Vec<f64>,
}

/// Which parameter block a summary row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamBlock {
    A,
    B,
    K,
}

impl ParamBlock {
    pub fn as_str(&self) -> &'static str {
        match self {
            ParamBlock::A => "a",
            ParamBlock::B => "b",
            ParamBlock::K => "k",
        }
    }
}

/// Summary row for a single scalar parameter.
#[derive(Debug, Clone)]
pub struct ParamSummary {
    pub block: ParamBlock,
    /// Age for a/b rows, calendar year for k rows.
    pub label: i64,
    pub point: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone)]
pub struct BootstrapSummary {
    pub parameters: Vec<ParamSummary>,
    /// Replications that produced a usable refit.
    pub b_effective: usize,
    pub ci_level: f64,
}

/// Nearest-rank empirical quantile on an ascending-sorted slice. A 1e-9
/// slack absorbs representation error in `q * m` so ranks at exact
/// multiples are stable.
fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let m = sorted.len() as f64;
    let rank = fmath::ceil(q * m - 1e-9).max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

fn summarize_component(values: &mut [f64], ci_level: f64) -> (f64, f64, f64) {
    let m = values.len();
    let mean = values.iter().sum::<f64>() / m as f64;
    let se = if m < 2 {
        0.0
    } else {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        fmath::sqrt(ss / (m as f64 - 1.0))
    };
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(core::cmp::Ordering::Equal));
    let lo_q = 0.5 * (1.0 - ci_level);
    let ci_lo = sorted_quantile(values, lo_q);
    let ci_hi = sorted_quantile(values, 1.0 - lo_q);
    (se, ci_lo, ci_hi)
}

/// Reduce replicates (in index order; failures already dropped) to the
/// summary table. Order-independent because replicates were collected by
/// index before this runs.
pub fn summarize(
    point: &Replicate,
    replicates: &[Replicate],
    ages: &[u32],
    years: &[i32],
    ci_level: f64,
) -> Result<BootstrapSummary> {
    if replicates.is_empty() {
        return Err(Error::AllReplicationsFailed);
    }
    let p = point.a.len();
    let n = point.k.len();
    if ages.len() != p || years.len() != n {
        return Err(Error::DimensionMismatch("labels vs point estimate"));
    }
    for r in replicates {
        if r.a.len() != p || r.b.len() != p || r.k.len() != n {
            return Err(Error::DimensionMismatch("replicate vs point estimate"));
        }
    }
    let mut parameters = Vec::with_capacity(2 * p + n);
    let mut scratch = Vec::with_capacity(replicates.len());

    let mut push = |block: ParamBlock, label: i64, pt: f64, extract: &dyn Fn(&Replicate) -> f64| {
        scratch.clear();
        scratch.extend(replicates.iter().map(extract));
        let (se, ci_lo, ci_hi) = summarize_component(&mut scratch, ci_level);
        parameters.push(ParamSummary {
            block,
            label,
            point: pt,
            se,
            ci_lo,
            ci_hi,
        });
    };

    for x in 0..p {
        push(ParamBlock::A, ages[x] as i64, point.a[x], &|r| r.a[x]);
    }
    for x in 0..p {
        push(ParamBlock::B, ages[x] as i64, point.b[x], &|r| r.b[x]);
    }
    for t in 0..n {
        push(ParamBlock::K, years[t] as i64, point.k[t], &|r| r.k[t]);
    }

    Ok(BootstrapSummary {
        parameters,
        b_effective: replicates.len(),
        ci_level,
    })
}

/// Precomputed state for residual-vector replications.
pub struct ResidualPlan {
    ds: MortalityDataset,
    estimator: ResidualEstimator,
    cfg: BootstrapConfig,
    tppca_cfg: TppcaConfig,
    fitted: Mat,
    residuals: Vec<Vec<f64>>,
    point: Replicate,
}

impl ResidualPlan {
    pub fn new(
        ds: &MortalityDataset,
        estimator: ResidualEstimator,
        cfg: BootstrapConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if cfg.method != BootstrapMethod::ResidualVector {
            return Err(Error::InvalidArgument(
                "residual bootstrap requires the residual_vector method",
            ));
        }
        let tppca_cfg = TppcaConfig::default();
        let y = log_rates(ds);
        let (a, b, score_k) = estimate_ab(&y, estimator, &tppca_cfg)?;
        let p = ds.n_ages();
        let n = ds.n_years();
        // Estimation-stage fitted values; a + b·k is invariant to the
        // normalization applied inside estimate_ab.
        let fitted = Mat::from_fn(p, n, |x, t| a[x] + b[x] * score_k[t]);
        let residuals: Vec<Vec<f64>> = (0..n)
            .map(|t| {
                (0..p)
                    .map(|x| y.get(x, t) - fitted.get(x, t))
                    .collect()
            })
            .collect();
        let k = match_all(&a, &b, ds)?;
        let point = Replicate { a, b, k };
        Ok(ResidualPlan {
            ds: ds.clone(),
            estimator,
            cfg,
            tppca_cfg,
            fitted,
            residuals,
            point,
        })
    }

    pub fn replications(&self) -> usize {
        self.cfg.replications
    }

    pub fn point(&self) -> &Replicate {
        &self.point
    }

    /// The year-vector indices drawn for replication `rep`; exposed so the
    /// multiset-resampling property can be asserted from outside.
    pub fn resampled_indices(&self, rep: usize) -> Vec<usize> {
        let mut rng = SplitMix64::substream(self.cfg.seed, rep as u64);
        let n = self.ds.n_years();
        (0..n).map(|_| rng.next_index(n)).collect()
    }

    /// Run one replication. Fit failures surface as errors; drivers record
    /// them and continue.
    pub fn replicate(&self, rep: usize) -> Result<Replicate> {
        let idx = self.resampled_indices(rep);
        let p = self.ds.n_ages();
        let n = self.ds.n_years();
        let pseudo_y = Mat::from_fn(p, n, |x, t| {
            self.fitted.get(x, t) + self.residuals[idx[t]][x]
        });
        // Pseudo-deaths recomputed from the exposures, so death matching
        // sees data consistent with the resampled rates.
        let pseudo_deaths = Mat::from_fn(p, n, |x, t| {
            self.ds.exposures().get(x, t) * fmath::exp(pseudo_y.get(x, t))
        });
        let pseudo_ds = self.ds.with_deaths(pseudo_deaths)?;
        let (a, b, _) = estimate_ab(&pseudo_y, self.estimator, &self.tppca_cfg)?;
        let k = match_all(&a, &b, &pseudo_ds)?;
        Ok(Replicate { a, b, k })
    }

    pub fn summarize(&self, replicates: &[Replicate]) -> Result<BootstrapSummary> {
        summarize(
            &self.point,
            replicates,
            self.ds.ages(),
            self.ds.years(),
            self.cfg.ci_level,
        )
    }
}

/// Normalized `(a, b)` plus the estimation-stage score vector for the
/// fitted matrix.
fn estimate_ab(
    y: &Mat,
    estimator: ResidualEstimator,
    tppca_cfg: &TppcaConfig,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    match estimator {
        ResidualEstimator::Svd => {
            let fit = fit_svd(y)?;
            Ok((fit.a, fit.b, fit.k))
        }
        ResidualEstimator::Tppca => {
            let (params, _) = fit_tppca(y, tppca_cfg)?;
            let exps = e_step(&params, y);
            let norm = normalize(&params.b, &exps.k)?;
            let mut a = params.a;
            for x in 0..a.len() {
                a[x] += norm.b[x] * norm.k_mean;
            }
            Ok((a, norm.b, norm.k))
        }
    }
}

/// Residual-vector bootstrap, sequential driver.
pub fn residual_bootstrap(
    ds: &MortalityDataset,
    estimator: ResidualEstimator,
    cfg: BootstrapConfig,
) -> Result<BootstrapSummary> {
    let plan = ResidualPlan::new(ds, estimator, cfg)?;
    let replicates: Vec<Replicate> = (0..plan.replications())
        .filter_map(|i| plan.replicate(i).ok())
        .collect();
    plan.summarize(&replicates)
}

/// Invert a signed Poisson deviance residual back to a death count:
/// solve `signed_deviance(d, dhat) = r` for `d >= 0`.
///
/// The signed deviance is strictly increasing in `d` from `−√(2 dhat)` at
/// `d = 0`, so residuals below that floor have no valid preimage.
pub fn invert_deviance(r: f64, dhat: f64) -> Result<f64> {
    if !(dhat > 0.0) {
        return Err(Error::InvalidArgument("dhat must be positive"));
    }
    if r == 0.0 {
        return Ok(dhat);
    }
    let floor = -fmath::sqrt(2.0 * dhat);
    if r < floor {
        return Err(Error::Degenerate("deviance below the d = 0 floor"));
    }
    if r == floor {
        return Ok(0.0);
    }
    let g = |d: f64| signed_deviance(d, dhat) - r;
    let (lo, hi) = if r < 0.0 {
        (0.0, dhat)
    } else {
        // Expand upward until the deviance exceeds r.
        let mut hi = dhat * 2.0;
        for _ in 0..200 {
            if signed_deviance(hi, dhat) >= r {
                break;
            }
            hi *= 2.0;
        }
        (dhat, hi)
    };
    let tol = 1e-12 * dhat.max(1.0);
    let mut d = solve_root(
        g,
        Bracket {
            lo,
            hi,
            tol,
            max_iter: 300,
        },
    )?;
    // Newton polish drives the round-trip error to float noise.
    for _ in 0..4 {
        let dev = signed_deviance(d, dhat);
        let err = dev - r;
        if fmath::abs(err) < 1e-12 {
            break;
        }
        if d <= 0.0 || dev == 0.0 {
            break;
        }
        let slope = fmath::ln(d / dhat) / dev;
        if slope == 0.0 || !slope.is_finite() {
            break;
        }
        let next = d - err / slope;
        if next > 0.0 && next.is_finite() {
            d = next;
        } else {
            break;
        }
    }
    Ok(d.max(0.0))
}

/// Precomputed state for deviance replications.
pub struct DeviancePlan {
    ds: MortalityDataset,
    cfg: BootstrapConfig,
    glm_cfg: GlmConfig,
    base: LeeCarterFit,
    dhat: Mat,
    /// Cellwise residual pool, column-major over the panel.
    pool: Vec<f64>,
}

/// Redraws allowed when a resampled residual has no valid preimage for a
/// cell.
const INVERSION_RETRY_CAP: usize = 100;

impl DeviancePlan {
    pub fn new(ds: &MortalityDataset, cfg: BootstrapConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.method != BootstrapMethod::Deviance {
            return Err(Error::InvalidArgument(
                "deviance bootstrap requires the deviance method",
            ));
        }
        let glm_cfg = GlmConfig::default();
        let base = fit_poisson_glm(ds, &glm_cfg)?;
        let p = ds.n_ages();
        let n = ds.n_years();
        let dhat = Mat::from_fn(p, n, |x, t| {
            ds.exposures().get(x, t) * fmath::exp(base.a[x] + base.b[x] * base.k[t])
        });
        let pool = deviance_residuals(&base, ds).as_slice().to_vec();
        Ok(DeviancePlan {
            ds: ds.clone(),
            cfg,
            glm_cfg,
            base,
            dhat,
            pool,
        })
    }

    pub fn replications(&self) -> usize {
        self.cfg.replications
    }

    pub fn point(&self) -> Replicate {
        Replicate {
            a: self.base.a.clone(),
            b: self.base.b.clone(),
            k: self.base.k.clone(),
        }
    }

    pub fn replicate(&self, rep: usize) -> Result<Replicate> {
        let mut rng = SplitMix64::substream(self.cfg.seed, rep as u64);
        let p = self.ds.n_ages();
        let n = self.ds.n_years();
        let mut pseudo = Mat::zeros(p, n);
        for t in 0..n {
            for x in 0..p {
                let dhat = self.dhat.get(x, t);
                let mut accepted = None;
                for _ in 0..INVERSION_RETRY_CAP {
                    let r = self.pool[rng.next_index(self.pool.len())];
                    if let Ok(d) = invert_deviance(r, dhat) {
                        accepted = Some(d);
                        break;
                    }
                }
                let d = accepted.ok_or(Error::MaxIterExceeded(
                    "deviance inversion retries for a cell",
                ))?;
                pseudo.set(x, t, d);
            }
        }
        let pseudo_ds = self.ds.with_deaths(pseudo)?;
        let fit = fit_poisson_glm_from(&pseudo_ds, &self.glm_cfg, &GlmInit::Warm(self.base.clone()))?;
        Ok(Replicate {
            a: fit.a,
            b: fit.b,
            k: fit.k,
        })
    }

    pub fn summarize(&self, replicates: &[Replicate]) -> Result<BootstrapSummary> {
        summarize(
            &self.point(),
            replicates,
            self.ds.ages(),
            self.ds.years(),
            self.cfg.ci_level,
        )
    }
}

/// Deviance bootstrap for the Poisson GLM, sequential driver.
pub fn deviance_bootstrap(ds: &MortalityDataset, cfg: BootstrapConfig) -> Result<BootstrapSummary> {
    let plan = DeviancePlan::new(ds, cfg)?;
    let replicates: Vec<Replicate> = (0..plan.replications())
        .filter_map(|i| plan.replicate(i).ok())
        .collect();
    plan.summarize(&replicates)
}
