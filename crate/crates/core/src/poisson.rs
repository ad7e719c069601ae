//! Poisson bilinear GLM estimation of the Lee-Carter parameters.
//!
//! Deaths are modeled as `D[x,t] ~ Poisson(N[x,t] · exp(a_x + b_x k_t))`
//! and the log-likelihood (dropping the `log D!` constant) is maximized by
//! cyclic one-dimensional updates in the order a → k → b, the modified
//! IRLS scheme of Goodman. The `a` block has a closed-form coordinate
//! maximum; `k` and `b` take Newton steps with step-halving damping so
//! every cycle is an ascent. `b` is renormalized and `k` recentered each
//! cycle to pin the bilinear invariances down.

use alloc::vec;
use alloc::vec::Vec;

use crate::dataset::MortalityDataset;
use crate::fmath;
use crate::gaussian::{fit_svd, normalize, LeeCarterFit, Method};
use crate::matrix::Mat;
use crate::{Error, Result};

/// Linear predictors are clipped here before exponentiation.
const ETA_CLIP: f64 = 700.0;

/// Controls for the cyclic IRLS loop.
#[derive(Debug, Clone, Copy)]
pub struct GlmConfig {
    pub max_iter: usize,
    /// Relative log-likelihood change declaring convergence.
    pub tol: f64,
    /// Initial Newton step scaling in (0, 1]; halved further on ascent
    /// failures.
    pub step_damping: f64,
    /// Absolute bound required of every block score residual at exit.
    pub score_tol: f64,
}

impl Default for GlmConfig {
    fn default() -> Self {
        GlmConfig {
            max_iter: 10_000,
            tol: 1e-10,
            step_damping: 1.0,
            score_tol: 1e-6,
        }
    }
}

impl GlmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("glm tol must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("glm max_iter must be positive"));
        }
        if !(self.step_damping > 0.0 && self.step_damping <= 1.0) {
            return Err(Error::InvalidArgument("step_damping must be in (0, 1]"));
        }
        Ok(())
    }
}

/// Starting point for the IRLS cycle.
#[derive(Debug, Clone)]
pub enum GlmInit {
    /// `a = 0`, `b = 1/p`, `k = 0`.
    Zeros,
    /// Closed-form SVD estimate on the log rates.
    Svd,
    /// Warm start from an existing fit (e.g. a bootstrap original).
    Warm(LeeCarterFit),
}

#[inline]
fn clipped_exp(eta: f64) -> f64 {
    fmath::exp(eta.clamp(-ETA_CLIP, ETA_CLIP))
}

/// Poisson log-likelihood `Σ D·η − N·exp(η)` with `η = a + b k`, constant
/// dropped. Linear predictors are clipped to ±700 before exponentiation.
pub fn poisson_loglik(fit: &LeeCarterFit, ds: &MortalityDataset) -> f64 {
    poisson_loglik_flagged(fit, ds).0
}

/// As [`poisson_loglik`], also reporting whether the clip engaged.
pub fn poisson_loglik_flagged(fit: &LeeCarterFit, ds: &MortalityDataset) -> (f64, bool) {
    let p = ds.n_ages();
    let n = ds.n_years();
    assert_eq!(fit.a.len(), p, "fit/dataset age dimension mismatch");
    assert_eq!(fit.k.len(), n, "fit/dataset year dimension mismatch");
    let mut ll = 0.0;
    let mut clipped = false;
    for t in 0..n {
        let d = ds.deaths().col(t);
        let nn = ds.exposures().col(t);
        let kt = fit.k[t];
        for x in 0..p {
            let eta = fit.a[x] + fit.b[x] * kt;
            if fmath::abs(eta) > ETA_CLIP {
                clipped = true;
            }
            let eta_c = eta.clamp(-ETA_CLIP, ETA_CLIP);
            ll += d[x] * eta_c - nn[x] * fmath::exp(eta_c);
        }
    }
    (ll, clipped)
}

struct GlmState {
    a: Vec<f64>,
    b: Vec<f64>,
    k: Vec<f64>,
    /// Fitted deaths, kept in sync with (a, b, k).
    dhat: Mat,
}

impl GlmState {
    fn refresh_dhat(&mut self, ds: &MortalityDataset) {
        let p = self.a.len();
        for t in 0..self.k.len() {
            let kt = self.k[t];
            let ex = ds.exposures().col(t);
            let col = self.dhat.col_mut(t);
            for x in 0..p {
                col[x] = ex[x] * clipped_exp(self.a[x] + self.b[x] * kt);
            }
        }
    }

    fn loglik(&self, ds: &MortalityDataset) -> f64 {
        let p = self.a.len();
        let mut ll = 0.0;
        for t in 0..self.k.len() {
            let d = ds.deaths().col(t);
            let nn = ds.exposures().col(t);
            for x in 0..p {
                let eta = (self.a[x] + self.b[x] * self.k[t]).clamp(-ETA_CLIP, ETA_CLIP);
                ll += d[x] * eta - nn[x] * fmath::exp(eta);
            }
        }
        ll
    }
}

fn init_state(ds: &MortalityDataset, init: &GlmInit) -> Result<GlmState> {
    let p = ds.n_ages();
    let n = ds.n_years();
    let (a, b, k) = match init {
        GlmInit::Zeros => (vec![0.0; p], vec![1.0 / p as f64; p], vec![0.0; n]),
        GlmInit::Svd => {
            let y = crate::dataset::log_rates(ds);
            let fit = fit_svd(&y)?;
            (fit.a, fit.b, fit.k)
        }
        GlmInit::Warm(fit) => {
            if fit.a.len() != p || fit.k.len() != n {
                return Err(Error::DimensionMismatch("warm start vs dataset"));
            }
            (fit.a.clone(), fit.b.clone(), fit.k.clone())
        }
    };
    let mut state = GlmState {
        a,
        b,
        k,
        dhat: Mat::zeros(p, n),
    };
    state.refresh_dhat(ds);
    Ok(state)
}

/// One-dimensional objective for year `t` as a function of `k_t`.
fn year_objective(ds: &MortalityDataset, a: &[f64], b: &[f64], t: usize, kt: f64) -> f64 {
    let d = ds.deaths().col(t);
    let nn = ds.exposures().col(t);
    let mut g = 0.0;
    for x in 0..a.len() {
        let eta = (a[x] + b[x] * kt).clamp(-ETA_CLIP, ETA_CLIP);
        g += d[x] * eta - nn[x] * fmath::exp(eta);
    }
    g
}

/// One-dimensional objective for age `x` as a function of `b_x`.
fn age_objective(ds: &MortalityDataset, a: &[f64], k: &[f64], x: usize, bx: f64) -> f64 {
    let mut g = 0.0;
    for t in 0..k.len() {
        let eta = (a[x] + bx * k[t]).clamp(-ETA_CLIP, ETA_CLIP);
        g += ds.deaths().get(x, t) * eta - ds.exposures().get(x, t) * fmath::exp(eta);
    }
    g
}

/// Newton step with step-halving on a concave 1-D objective. Returns the
/// accepted new point (the old point if no damped step improves).
fn damped_newton_step(
    objective: impl Fn(f64) -> f64,
    grad: f64,
    hess: f64,
    current: f64,
    damping: f64,
) -> f64 {
    if !(hess < 0.0) || grad == 0.0 {
        return current;
    }
    let full = -grad / hess;
    let base = objective(current);
    let mut scale = damping;
    for _ in 0..50 {
        let cand = current + scale * full;
        if objective(cand) >= base {
            return cand;
        }
        scale *= 0.5;
    }
    current
}

/// Sup-norm of the three score blocks at the current state.
fn max_score_residual(ds: &MortalityDataset, st: &GlmState) -> f64 {
    let p = st.a.len();
    let n = st.k.len();
    let mut worst = 0.0f64;
    for x in 0..p {
        let mut sa = 0.0;
        let mut sb = 0.0;
        for t in 0..n {
            let r = ds.deaths().get(x, t) - st.dhat.get(x, t);
            sa += r;
            sb += r * st.k[t];
        }
        worst = worst.max(fmath::abs(sa)).max(fmath::abs(sb));
    }
    for t in 0..n {
        let d = ds.deaths().col(t);
        let dh = st.dhat.col(t);
        let mut sk = 0.0;
        for x in 0..p {
            sk += (d[x] - dh[x]) * st.b[x];
        }
        worst = worst.max(fmath::abs(sk));
    }
    worst
}

/// Fit the Poisson bilinear GLM by cyclic coordinate updates, starting from
/// the SVD estimate.
pub fn fit_poisson_glm(ds: &MortalityDataset, cfg: &GlmConfig) -> Result<LeeCarterFit> {
    fit_poisson_glm_from(ds, cfg, &GlmInit::Svd)
}

/// Fit from an explicit starting point.
pub fn fit_poisson_glm_from(
    ds: &MortalityDataset,
    cfg: &GlmConfig,
    init: &GlmInit,
) -> Result<LeeCarterFit> {
    cfg.validate()?;
    let n = ds.n_years();

    // An all-zero death column sends k_t to −∞; fail it up front.
    for t in 0..n {
        if ds.total_deaths(t) <= 0.0 {
            return Err(Error::YearFailure {
                year: ds.years()[t],
                source: "all-zero death column leaves k unbounded",
            });
        }
    }

    let mut st = init_state(ds, init)?;
    let mut ll_prev = st.loglik(ds);
    let mut converged = false;

    for _cycle in 0..cfg.max_iter {
        cycle(ds, &mut st, cfg)?;
        let ll = st.loglik(ds);
        let rel = fmath::abs(ll - ll_prev) / fmath::abs(ll_prev).max(1.0);
        ll_prev = ll;
        if rel < cfg.tol && max_score_residual(ds, &st) < cfg.score_tol {
            converged = true;
            break;
        }
    }

    if !converged {
        return Err(Error::NoConvergence {
            iterations: cfg.max_iter,
        });
    }

    Ok(LeeCarterFit {
        a: st.a,
        b: st.b,
        k: st.k,
        method: Method::PoissonGlm,
        sigma2: None,
        nu: None,
        degenerate: false,
    })
}

/// One full a → k → b cycle plus renormalization; every block is an ascent.
fn cycle(ds: &MortalityDataset, st: &mut GlmState, cfg: &GlmConfig) -> Result<()> {
    let p = st.a.len();
    let n = st.k.len();

    // a block: exact coordinate maximum a_x = log(Σ_t D / Σ_t N e^{b k}).
    for x in 0..p {
        let mut dsum = 0.0;
        let mut wsum = 0.0;
        for t in 0..n {
            dsum += ds.deaths().get(x, t);
            wsum += ds.exposures().get(x, t) * clipped_exp(st.b[x] * st.k[t]);
        }
        if dsum > 0.0 && wsum > 0.0 {
            st.a[x] = fmath::ln(dsum / wsum);
        }
    }
    st.refresh_dhat(ds);

    // k block: damped Newton per year.
    for t in 0..n {
        let mut grad = 0.0;
        let mut hess = 0.0;
        let d = ds.deaths().col(t);
        let dh = st.dhat.col(t);
        for x in 0..p {
            grad += (d[x] - dh[x]) * st.b[x];
            hess -= dh[x] * st.b[x] * st.b[x];
        }
        let obj = |kt: f64| year_objective(ds, &st.a, &st.b, t, kt);
        st.k[t] = damped_newton_step(obj, grad, hess, st.k[t], cfg.step_damping);
    }
    st.refresh_dhat(ds);

    // b block: damped Newton per age.
    for x in 0..p {
        let mut grad = 0.0;
        let mut hess = 0.0;
        for t in 0..n {
            let r = ds.deaths().get(x, t) - st.dhat.get(x, t);
            grad += r * st.k[t];
            hess -= st.dhat.get(x, t) * st.k[t] * st.k[t];
        }
        let obj = |bx: f64| age_objective(ds, &st.a, &st.k, x, bx);
        st.b[x] = damped_newton_step(obj, grad, hess, st.b[x], cfg.step_damping);
    }

    // Identification: Σb = 1, Σk = 0, level folded into a. These
    // reparameterizations leave every fitted value unchanged.
    let norm = normalize(&st.b, &st.k)?;
    for x in 0..p {
        st.a[x] += norm.b[x] * norm.k_mean;
    }
    st.b = norm.b;
    st.k = norm.k;
    st.refresh_dhat(ds);
    Ok(())
}

/// Signed Poisson deviance residuals
/// `r = sign(D − D̂) √(2[D log(D/D̂) − (D − D̂)])`, with the `D = 0` limit
/// `r = −√(2 D̂)`.
pub fn deviance_residuals(fit: &LeeCarterFit, ds: &MortalityDataset) -> Mat {
    let p = ds.n_ages();
    let n = ds.n_years();
    Mat::from_fn(p, n, |x, t| {
        let d = ds.deaths().get(x, t);
        let dhat = ds.exposures().get(x, t) * clipped_exp(fit.a[x] + fit.b[x] * fit.k[t]);
        signed_deviance(d, dhat)
    })
}

/// The signed deviance of one cell; exposed for the bootstrap inversion.
pub fn signed_deviance(d: f64, dhat: f64) -> f64 {
    if d == dhat {
        return 0.0;
    }
    let inner = if d <= 0.0 {
        dhat
    } else {
        d * fmath::ln(d / dhat) - (d - dhat)
    };
    let mag = fmath::sqrt((2.0 * inner).max(0.0));
    if d >= dhat {
        mag
    } else {
        -mag
    }
}
