//! Multivariate t-PPCA estimation of the Lee-Carter parameters by an
//! expectation conditional maximization (ECM) loop.
//!
//! Year columns are modeled as i.i.d. multivariate t with location `a`,
//! scale matrix `b bᵀ + σ² I`, and `ν` degrees of freedom. The scale
//! mixture view (`y | k, u ~ N(a + b k, σ²I/u)`, `k | u ~ N(0, 1/u)`,
//! `u ~ Gamma(ν/2, ν/2)`) gives a closed-form E-step; outlier years draw
//! small posterior weights `⟨u_t⟩` and barely move the M-step, which is
//! where the robustness of the estimator comes from.
//!
//! All Mahalanobis forms use the rank-one Woodbury identity; no dense
//! `p × p` inverse is ever formed.

use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;
use crate::gaussian::fit_ppca_closed_form;
use crate::matrix::{dot, Mat};
use crate::numerics::{digamma_unchecked, log_gamma_unchecked, solve_root, Bracket};
use crate::{Error, Result};

/// Lower bound kept under σ² so near-rank-one data cannot collapse the
/// noise term.
pub const SIGMA2_FLOOR: f64 = 1e-12;

/// Search interval for the degrees-of-freedom line search.
pub const NU_MIN: f64 = 0.5;
pub const NU_MAX: f64 = 1e6;

/// Parameters of the multivariate t-PPCA marginal.
///
/// `b` is unnormalized while the EM runs; apply
/// [`crate::gaussian::normalize`] for Lee-Carter reporting.
#[derive(Debug, Clone)]
pub struct TppcaParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub sigma2: f64,
    pub nu: f64,
}

impl TppcaParams {
    pub fn validate(&self) -> Result<()> {
        if self.a.len() != self.b.len() {
            return Err(Error::DimensionMismatch("a vs b length"));
        }
        if !(self.sigma2 > 0.0) {
            return Err(Error::InvalidArgument("sigma2 must be positive"));
        }
        if !(self.nu > 0.0) {
            return Err(Error::InvalidArgument("nu must be positive"));
        }
        Ok(())
    }

    /// Squared Mahalanobis distance of one observation under the rank-one
    /// scale matrix: `δ = [rᵀr − (bᵀr)²/(σ² + bᵀb)] / σ²`.
    pub fn mahalanobis_sq(&self, yt: &[f64]) -> f64 {
        let bb = dot(&self.b, &self.b);
        let denom = self.sigma2 + bb;
        let mut rr = 0.0;
        let mut br = 0.0;
        for (x, &y) in yt.iter().enumerate() {
            let r = y - self.a[x];
            rr += r * r;
            br += self.b[x] * r;
        }
        ((rr - br * br / denom) / self.sigma2).max(0.0)
    }
}

/// Per-year posterior expectations of the latent scale `u` and score `k`.
#[derive(Debug, Clone)]
pub struct PosteriorExpectations {
    pub u: Vec<f64>,
    pub log_u: Vec<f64>,
    pub k: Vec<f64>,
    pub uk: Vec<f64>,
    pub uk2: Vec<f64>,
}

/// Convergence record of one EM run.
#[derive(Debug, Clone)]
pub struct EmTrace {
    /// Marginal log-likelihood after each EM cycle, preceded by its value
    /// at the initialization. Nondecreasing up to float slack.
    pub loglik_history: Vec<f64>,
    /// EM cycles actually performed.
    pub iterations: usize,
    pub converged: bool,
}

/// Controls for [`fit_tppca`].
#[derive(Debug, Clone, Copy)]
pub struct TppcaConfig {
    /// Relative log-likelihood change declaring convergence.
    pub tol: f64,
    pub max_iter: usize,
    pub nu_init: f64,
    /// When false, ν stays frozen at `nu_init` (Gaussian-limit runs).
    pub update_nu: bool,
}

impl Default for TppcaConfig {
    fn default() -> Self {
        TppcaConfig {
            tol: 1e-10,
            max_iter: 5000,
            nu_init: 3.0,
            update_nu: true,
        }
    }
}

/// Marginal log-likelihood of the year columns under the multivariate t
/// density with the rank-one scale matrix.
pub fn t_loglik(params: &TppcaParams, y: &Mat) -> Result<f64> {
    params.validate()?;
    if y.rows() != params.a.len() {
        return Err(Error::DimensionMismatch("params vs data rows"));
    }
    let p = y.rows() as f64;
    let nu = params.nu;
    let bb = dot(&params.b, &params.b);
    // log|Σ| for Σ = b bᵀ + σ² I via the matrix determinant lemma.
    let log_det = (p - 1.0) * fmath::ln(params.sigma2) + fmath::ln(params.sigma2 + bb);
    let log_norm = log_gamma_unchecked(0.5 * (nu + p))
        - log_gamma_unchecked(0.5 * nu)
        - 0.5 * p * fmath::ln(nu * core::f64::consts::PI)
        - 0.5 * log_det;
    let mut ll = 0.0;
    for t in 0..y.cols() {
        let delta = params.mahalanobis_sq(y.col(t));
        ll += log_norm - 0.5 * (nu + p) * fmath::ln(1.0 + delta / nu);
    }
    Ok(ll)
}

/// Closed-form posterior expectations for every year column.
///
/// `params` must be valid (see [`TppcaParams::validate`]); all five
/// vectors are analytic in the Mahalanobis distance, so no failure modes
/// exist beyond invalid parameters.
pub fn e_step(params: &TppcaParams, y: &Mat) -> PosteriorExpectations {
    debug_assert!(params.validate().is_ok());
    let p = y.rows() as f64;
    let n = y.cols();
    let nu = params.nu;
    let bb = dot(&params.b, &params.b);
    let denom = params.sigma2 + bb;
    let psi_half = digamma_unchecked(0.5 * (nu + p));

    let mut out = PosteriorExpectations {
        u: Vec::with_capacity(n),
        log_u: Vec::with_capacity(n),
        k: Vec::with_capacity(n),
        uk: Vec::with_capacity(n),
        uk2: Vec::with_capacity(n),
    };
    for t in 0..n {
        let yt = y.col(t);
        let mut br = 0.0;
        for (x, &yv) in yt.iter().enumerate() {
            br += params.b[x] * (yv - params.a[x]);
        }
        let delta = params.mahalanobis_sq(yt);
        let u = (nu + p) / (nu + delta);
        let log_u = psi_half - fmath::ln(0.5 * (nu + delta));
        let k = br / denom;
        let uk = u * k;
        let uk2 = params.sigma2 / denom + u * k * k;
        out.u.push(u);
        out.log_u.push(log_u);
        out.k.push(k);
        out.uk.push(uk);
        out.uk2.push(uk2);
    }
    out
}

/// Conditional M-step: updates `(a, b, σ²)` in that order, each using the
/// blocks already updated (ECM); `ν` is left untouched for [`update_nu`].
pub fn m_step(exp: &PosteriorExpectations, y: &Mat, prev: &TppcaParams) -> Result<TppcaParams> {
    let p = y.rows();
    let n = y.cols();
    if exp.u.len() != n {
        return Err(Error::DimensionMismatch("expectations vs data columns"));
    }
    let u_sum: f64 = exp.u.iter().sum();
    if !(u_sum > 0.0) {
        return Err(Error::Degenerate("posterior weights sum to zero"));
    }

    // a: weighted mean with the outlier weights applied to the whole
    // centered term, Σ_t ⟨u_t⟩ (y_t − b ⟨k_t⟩) / Σ_t ⟨u_t⟩.
    let mut a = vec![0.0; p];
    for t in 0..n {
        let yt = y.col(t);
        for x in 0..p {
            a[x] += exp.u[t] * yt[x] - prev.b[x] * exp.uk[t];
        }
    }
    for v in &mut a {
        *v /= u_sum;
    }

    // b: weighted least-squares slope against the posterior scores.
    let uk2_sum: f64 = exp.uk2.iter().sum();
    if !(uk2_sum > 0.0) {
        return Err(Error::Degenerate("all posterior second moments zero"));
    }
    let mut b = vec![0.0; p];
    for t in 0..n {
        let yt = y.col(t);
        for x in 0..p {
            b[x] += (yt[x] - a[x]) * exp.uk[t];
        }
    }
    for v in &mut b {
        *v /= uk2_sum;
    }

    // σ²: exact conditional maximizer given the fresh a and b.
    let bb = dot(&b, &b);
    let mut acc = 0.0;
    for t in 0..n {
        let yt = y.col(t);
        let mut rr = 0.0;
        let mut br = 0.0;
        for x in 0..p {
            let r = yt[x] - a[x];
            rr += r * r;
            br += b[x] * r;
        }
        acc += exp.u[t] * rr - 2.0 * exp.uk[t] * br + bb * exp.uk2[t];
    }
    let sigma2 = (acc / (n as f64 * p as f64)).max(SIGMA2_FLOOR);

    Ok(TppcaParams {
        a,
        b,
        sigma2,
        nu: prev.nu,
    })
}

/// Result of the degrees-of-freedom line search.
#[derive(Debug, Clone, Copy)]
pub struct NuUpdate {
    pub nu: f64,
    /// Set when the equation has no root below [`NU_MAX`] and the cap was
    /// returned (the fit is effectively Gaussian).
    pub at_gaussian_cap: bool,
}

/// Profile score for ν: `1 + log(ν/2) − ψ(ν/2) + c`, strictly decreasing.
fn nu_equation(nu: f64, c: f64) -> f64 {
    1.0 + fmath::ln(0.5 * nu) - digamma_unchecked(0.5 * nu) + c
}

/// Solve the ν stationarity condition
/// `1 + log(ν/2) − ψ(ν/2) + mean(⟨log u⟩ − ⟨u⟩) = 0` on `[NU_MIN, NU_MAX]`.
///
/// The left side is strictly decreasing, so endpoint signs decide
/// clamping: no root above `NU_MIN` returns the lower cap, no root below
/// `NU_MAX` returns the cap with the Gaussian-limit flag set.
pub fn update_nu(exp: &PosteriorExpectations, bracket: Bracket) -> Result<NuUpdate> {
    if exp.u.is_empty() {
        return Err(Error::InvalidArgument("empty expectations"));
    }
    let n = exp.u.len() as f64;
    let c = exp
        .log_u
        .iter()
        .zip(&exp.u)
        .map(|(&lu, &u)| lu - u)
        .sum::<f64>()
        / n;
    update_nu_from_mean(c, bracket)
}

pub(crate) fn update_nu_from_mean(c: f64, bracket: Bracket) -> Result<NuUpdate> {
    bracket.validate()?;
    let lo = bracket.lo.max(NU_MIN);
    let hi = bracket.hi.min(NU_MAX);
    if nu_equation(hi, c) >= 0.0 {
        // Still positive at the cap: root (if any) is beyond it.
        return Ok(NuUpdate {
            nu: hi,
            at_gaussian_cap: true,
        });
    }
    if nu_equation(lo, c) <= 0.0 {
        return Ok(NuUpdate {
            nu: lo,
            at_gaussian_cap: false,
        });
    }
    let nu = solve_root(|v| nu_equation(v, c), Bracket { lo, hi, ..bracket })?;
    Ok(NuUpdate {
        nu,
        at_gaussian_cap: false,
    })
}

fn default_nu_bracket() -> Bracket {
    Bracket {
        lo: NU_MIN,
        hi: NU_MAX,
        tol: 1e-10,
        max_iter: 200,
    }
}

/// Fit the t-PPCA model: Gaussian-PPCA closed form to initialize, then
/// E-step / M-step / ν line-search cycles until the relative change of the
/// marginal log-likelihood drops below `cfg.tol`.
///
/// The returned `b` is unnormalized; callers apply
/// [`crate::gaussian::normalize`] for Lee-Carter reporting. Non-convergence
/// is reported through the trace, not as an error.
pub fn fit_tppca(y: &Mat, cfg: &TppcaConfig) -> Result<(TppcaParams, EmTrace)> {
    if !(cfg.nu_init > 0.0) {
        return Err(Error::InvalidArgument("nu_init must be positive"));
    }
    if cfg.tol < 0.0 || cfg.tol.is_nan() {
        return Err(Error::InvalidArgument("tol must be nonnegative"));
    }
    if y.cols() < 2 {
        return Err(Error::Degenerate("need at least 2 years"));
    }

    let init = fit_ppca_closed_form(y)?;
    let mut params = TppcaParams {
        a: init.a,
        b: init.b_unnormalized,
        sigma2: init.sigma2.max(SIGMA2_FLOOR),
        nu: cfg.nu_init,
    };

    let mut ll_prev = t_loglik(&params, y)?;
    let mut history = Vec::with_capacity(cfg.max_iter.min(1024) + 1);
    history.push(ll_prev);

    let mut iterations = 0usize;
    let mut converged = false;
    // Seeded so a tolerance of +∞ converges before the first cycle and
    // returns the initialization untouched.
    let mut last_rel = f64::MAX;

    for _ in 0..cfg.max_iter {
        if last_rel < cfg.tol {
            converged = true;
            break;
        }
        let exps = e_step(&params, y);
        params = m_step(&exps, y, &params)?;
        if cfg.update_nu {
            params.nu = update_nu(&exps, default_nu_bracket())?.nu;
        }
        let ll = t_loglik(&params, y)?;
        history.push(ll);
        last_rel = fmath::abs(ll - ll_prev) / fmath::abs(ll_prev).max(1.0);
        ll_prev = ll;
        iterations += 1;
    }
    if !converged && last_rel < cfg.tol {
        converged = true;
    }

    Ok((
        params,
        EmTrace {
            loglik_history: history,
            iterations,
            converged,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::normalize;
    use crate::matrix::sym_eigen;
    use crate::rng::SplitMix64;

    fn sample_params(p: usize) -> TppcaParams {
        TppcaParams {
            a: (0..p).map(|x| -4.0 + 0.1 * x as f64).collect(),
            b: (0..p).map(|x| 0.3 + 0.05 * x as f64).collect(),
            sigma2: 0.04,
            // ν/2 integer so the hierarchy sampler can draw Gamma exactly.
            nu: 6.0,
        }
    }

    /// Draw n columns from the scale-mixture hierarchy.
    fn sample_hierarchy(params: &TppcaParams, n: usize, rng: &mut SplitMix64) -> Mat {
        let p = params.a.len();
        let half_nu = params.nu / 2.0;
        assert!(
            (half_nu - half_nu.round()).abs() < 1e-12,
            "test sampler needs integer ν/2"
        );
        let shape = half_nu.round() as usize;
        Mat::from_fn_cols(p, n, |_, rng_col: &mut SplitMix64| {
            // u ~ Gamma(ν/2, ν/2) with integer shape: sum of exponentials.
            let mut u = 0.0;
            for _ in 0..shape {
                u += -rng_col.next_f64().max(1e-300).ln() / half_nu;
            }
            let k = rng_col.next_normal() / u.sqrt();
            (0..p)
                .map(|x| {
                    params.a[x]
                        + params.b[x] * k
                        + params.sigma2.sqrt() / u.sqrt() * rng_col.next_normal()
                })
                .collect()
        }, rng)
    }

    impl Mat {
        /// Test helper: build columns from a closure with RNG access.
        fn from_fn_cols(
            p: usize,
            n: usize,
            f: impl Fn(usize, &mut SplitMix64) -> alloc::vec::Vec<f64>,
            rng: &mut SplitMix64,
        ) -> Mat {
            let mut data = alloc::vec::Vec::with_capacity(p * n);
            for t in 0..n {
                let col = f(t, rng);
                assert_eq!(col.len(), p);
                data.extend_from_slice(&col);
            }
            Mat::from_col_major(p, n, data)
        }
    }

    #[test]
    fn cauchy_density_at_center() {
        // p = 1, b = 0, σ² = 1, ν = 1 is standard Cauchy; at y = a the
        // density is 1/π.
        let params = TppcaParams {
            a: vec![0.0],
            b: vec![0.0],
            sigma2: 1.0,
            nu: 1.0,
        };
        let y = Mat::from_col_major(1, 1, vec![0.0]);
        let ll = t_loglik(&params, &y).unwrap();
        assert!((ll - (1.0 / core::f64::consts::PI).ln()).abs() < 1e-12);
    }

    #[test]
    fn determinant_identity_against_eigen_oracle() {
        // |b bᵀ + σ² I| from the lemma vs the product of eigenvalues of the
        // densely assembled matrix.
        let mut rng = SplitMix64::new(41);
        let p = 4;
        let b: Vec<f64> = (0..p).map(|_| rng.next_normal()).collect();
        let sigma2 = 0.7;
        let mut dense = vec![0.0; p * p];
        for i in 0..p {
            for j in 0..p {
                dense[i * p + j] = b[i] * b[j] + if i == j { sigma2 } else { 0.0 };
            }
        }
        let eig = sym_eigen(&dense, p);
        let det_dense: f64 = eig.values.iter().product();
        let bb = dot(&b, &b);
        let det_lemma = sigma2.powi(p as i32 - 1) * (sigma2 + bb);
        assert!((det_dense - det_lemma).abs() / det_lemma < 1e-10);
    }

    #[test]
    fn loglik_gaussian_limit() {
        // ν = 10⁶ must agree with the Gaussian log-likelihood to 1e-3 per
        // observation.
        let params = TppcaParams {
            a: vec![-1.0, 0.5, 2.0],
            b: vec![0.4, -0.2, 0.9],
            sigma2: 0.3,
            nu: 1e6,
        };
        let mut rng = SplitMix64::new(5);
        let y = Mat::from_fn(3, 20, |_, _| rng.next_normal());
        let ll_t = t_loglik(&params, &y).unwrap();
        // Gaussian counterpart with the same scale matrix.
        let p = 3.0;
        let bb = dot(&params.b, &params.b);
        let log_det = (p - 1.0) * params.sigma2.ln() + (params.sigma2 + bb).ln();
        let mut ll_g = 0.0;
        for t in 0..y.cols() {
            let delta = params.mahalanobis_sq(y.col(t));
            ll_g += -0.5 * p * (2.0 * core::f64::consts::PI).ln() - 0.5 * log_det - 0.5 * delta;
        }
        assert!((ll_t - ll_g).abs() / (y.cols() as f64) < 1e-3);
    }

    #[test]
    fn t_loglik_validates_params() {
        let y = Mat::from_col_major(1, 1, vec![0.0]);
        let bad = TppcaParams {
            a: vec![0.0],
            b: vec![0.0],
            sigma2: 0.0,
            nu: 1.0,
        };
        assert!(t_loglik(&bad, &y).is_err());
        let bad_nu = TppcaParams {
            sigma2: 1.0,
            nu: -1.0,
            ..bad
        };
        assert!(t_loglik(&bad_nu, &y).is_err());
    }

    #[test]
    fn e_step_at_center_p1() {
        // δ = 0, p = 1, ν = 2 → ⟨u⟩ = 3/2, ⟨k⟩ = ⟨uk⟩ = 0.
        let params = TppcaParams {
            a: vec![1.5],
            b: vec![0.8],
            sigma2: 0.2,
            nu: 2.0,
        };
        let y = Mat::from_col_major(1, 1, vec![1.5]);
        let e = e_step(&params, &y);
        assert!((e.u[0] - 1.5).abs() < 1e-14);
        assert_eq!(e.k[0], 0.0);
        assert_eq!(e.uk[0], 0.0);
        // ⟨uk²⟩ = σ²/(bᵀb + σ²) at the center.
        assert!((e.uk2[0] - 0.2 / (0.64 + 0.2)).abs() < 1e-14);
    }

    #[test]
    fn e_step_gaussian_limit_weights() {
        let mut params = sample_params(4);
        params.nu = 1e6;
        let mut rng = SplitMix64::new(6);
        let y = Mat::from_fn(4, 30, |x, _| params.a[x] + 0.5 * rng.next_normal());
        let e = e_step(&params, &y);
        for &u in &e.u {
            assert!((u - 1.0).abs() < 1e-4, "weight {u} not at Gaussian limit");
        }
    }

    #[test]
    fn e_step_uk_identity_exact() {
        let params = sample_params(3);
        let mut rng = SplitMix64::new(7);
        let y = Mat::from_fn(3, 25, |_, _| rng.next_normal());
        let e = e_step(&params, &y);
        for t in 0..25 {
            assert_eq!(e.uk[t], e.u[t] * e.k[t]);
            assert!(e.u[t] > 0.0);
            assert!(e.uk2[t] >= 0.0);
        }
    }

    #[test]
    fn m_step_reduces_to_gaussian_update_with_unit_weights() {
        let p = 3;
        let n = 10;
        let prev = sample_params(p);
        let mut rng = SplitMix64::new(8);
        let y = Mat::from_fn(p, n, |_, _| rng.next_normal());
        let mut e = e_step(&prev, &y);
        for t in 0..n {
            e.u[t] = 1.0;
            e.uk[t] = e.k[t];
            e.uk2[t] = prev.sigma2 / (dot(&prev.b, &prev.b) + prev.sigma2) + e.k[t] * e.k[t];
        }
        let updated = m_step(&e, &y, &prev).unwrap();
        // ã = (Σ y_t − b Σ⟨k⟩)/n.
        let ksum: f64 = e.k.iter().sum();
        for x in 0..p {
            let mut ysum = 0.0;
            for t in 0..n {
                ysum += y.get(x, t);
            }
            let expect = (ysum - prev.b[x] * ksum) / n as f64;
            assert!((updated.a[x] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn m_step_deweights_extreme_observation() {
        // One observation with ⟨u⟩ ≈ 0 must be excluded with its exact
        // weight ratio.
        let p = 2;
        let prev = sample_params(p);
        let y = Mat::from_col_major(p, 3, vec![1.0, 2.0, 3.0, 4.0, 1e6, 1e6]);
        let mut e = e_step(&prev, &y);
        e.u = vec![1.0, 1.0, 1e-12];
        e.k = vec![0.5, -0.5, 100.0];
        e.uk = vec![0.5, -0.5, 1e-10];
        e.uk2 = vec![0.3, 0.3, 1e-8];
        let updated = m_step(&e, &y, &prev).unwrap();
        let u_sum: f64 = e.u.iter().sum();
        for x in 0..p {
            let mut num = 0.0;
            for t in 0..3 {
                num += e.u[t] * y.get(x, t) - prev.b[x] * e.uk[t];
            }
            assert!((updated.a[x] - num / u_sum).abs() < 1e-10 * num.abs().max(1.0));
        }
    }

    #[test]
    fn m_step_sigma2_matches_grid_search() {
        // σ̃² must sit at the argmax of the expected complete log-likelihood
        // profile in σ², located here by golden-section refinement.
        let p = 4;
        let n = 12;
        let prev = sample_params(p);
        let mut rng = SplitMix64::new(9);
        let y = Mat::from_fn(p, n, |x, _| prev.a[x] + rng.next_normal());
        let e = e_step(&prev, &y);
        let updated = m_step(&e, &y, &prev).unwrap();

        let profile = |sigma2: f64| -> f64 {
            // Terms of ⟨L_c⟩ depending on σ², with a = ã and b = b̃.
            let bb = dot(&updated.b, &updated.b);
            let mut acc = 0.0;
            for t in 0..n {
                let yt = y.col(t);
                let mut rr = 0.0;
                let mut br = 0.0;
                for x in 0..p {
                    let r = yt[x] - updated.a[x];
                    rr += r * r;
                    br += updated.b[x] * r;
                }
                acc += -(p as f64 / 2.0) * sigma2.ln()
                    - (e.u[t] * rr - 2.0 * e.uk[t] * br + bb * e.uk2[t]) / (2.0 * sigma2);
            }
            acc
        };
        // Golden-section search over a wide bracket.
        let (mut lo, mut hi) = (1e-6, 10.0);
        let phi = 0.618_033_988_749_894_9;
        for _ in 0..200 {
            let m1 = hi - phi * (hi - lo);
            let m2 = lo + phi * (hi - lo);
            if profile(m1) < profile(m2) {
                lo = m1;
            } else {
                hi = m2;
            }
        }
        let grid_max = 0.5 * (lo + hi);
        assert!(
            (updated.sigma2 - grid_max).abs() < 1e-6,
            "analytic {} vs grid {}",
            updated.sigma2,
            grid_max
        );
    }

    #[test]
    fn nu_root_at_two() {
        // c = ψ(1) − 1 makes ν = 2 the exact root.
        let c = digamma_unchecked(1.0) - 1.0;
        let out = update_nu_from_mean(c, default_nu_bracket()).unwrap();
        assert!(!out.at_gaussian_cap);
        assert!((out.nu - 2.0).abs() < 1e-8, "nu = {}", out.nu);
    }

    #[test]
    fn nu_equation_monotone_decreasing() {
        let c = digamma_unchecked(1.0) - 1.0;
        let mut nu = NU_MIN;
        let mut prev = f64::INFINITY;
        while nu <= 1e4 {
            let g = nu_equation(nu, c);
            assert!(g < prev, "not decreasing at nu = {nu}");
            prev = g;
            nu *= 1.5;
        }
    }

    #[test]
    fn nu_caps_for_nonnegative_mean() {
        // c ≥ 0 is impossible for valid expectations (Jensen); synthetic
        // values must hit the Gaussian cap with the flag raised.
        let out = update_nu_from_mean(0.0, default_nu_bracket()).unwrap();
        assert!(out.at_gaussian_cap);
        assert_eq!(out.nu, NU_MAX);
    }

    #[test]
    fn nu_small_for_very_negative_mean() {
        let out = update_nu_from_mean(-10.0, default_nu_bracket()).unwrap();
        assert!(!out.at_gaussian_cap);
        assert!(out.nu < 1.0, "nu = {}", out.nu);
        assert!(out.nu >= NU_MIN);
    }

    #[test]
    fn fit_infinite_tol_returns_initialization() {
        let mut rng = SplitMix64::new(10);
        let y = Mat::from_fn(4, 9, |_, _| rng.next_normal());
        let cfg = TppcaConfig {
            tol: f64::INFINITY,
            ..TppcaConfig::default()
        };
        let (params, trace) = fit_tppca(&y, &cfg).unwrap();
        assert_eq!(trace.iterations, 0);
        assert!(trace.converged);
        let init = fit_ppca_closed_form(&y).unwrap();
        for x in 0..4 {
            assert_eq!(params.a[x], init.a[x]);
            assert_eq!(params.b[x], init.b_unnormalized[x]);
        }
        assert_eq!(params.nu, 3.0);
    }

    #[test]
    fn fit_monotone_loglik_and_convergence() {
        let true_params = sample_params(5);
        let mut rng = SplitMix64::new(11);
        let y = sample_hierarchy(&true_params, 120, &mut rng);
        let (params, trace) = fit_tppca(&y, &TppcaConfig::default()).unwrap();
        assert!(trace.converged, "EM did not converge");
        for w in trace.loglik_history.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "log-likelihood decreased: {w:?}");
        }
        assert!(params.sigma2 > 0.0);
        assert!(params.nu > 0.0);
    }

    #[test]
    fn fit_gaussian_data_recovers_closed_form_axis() {
        // Gaussian data: the t fit's axis must line up with the PPCA axis
        // and ν must drift large.
        let p = 10;
        let n = 200;
        let mut rng = SplitMix64::new(12);
        let b: Vec<f64> = (0..p).map(|x| 0.2 + 0.1 * (x as f64)).collect();
        let y = Mat::from_fn_cols(p, n, |_, r: &mut SplitMix64| {
            let k = r.next_normal();
            (0..p)
                .map(|x| -3.0 + b[x] * k + 0.1 * r.next_normal())
                .collect()
        }, &mut rng);
        // ν has no finite maximizer on Gaussian data, so the EM crawls
        // toward the cap and need not converge; the axis and a large ν are
        // the contract here.
        let (params, _trace) = fit_tppca(&y, &TppcaConfig::default()).unwrap();
        assert!(params.nu > 50.0, "nu = {}", params.nu);
        let ppca = fit_ppca_closed_form(&y).unwrap();
        let nt = normalize(&params.b, &vec![0.0; n]).unwrap();
        let ng = normalize(&ppca.b_unnormalized, &vec![0.0; n]).unwrap();
        let cos = dot(&nt.b, &ng.b) / (dot(&nt.b, &nt.b).sqrt() * dot(&ng.b, &ng.b).sqrt());
        assert!(1.0 - cos.abs() < 1e-2, "cosine distance {}", 1.0 - cos);
    }

    #[test]
    fn fit_resists_gross_outlier_columns() {
        // Three wrecked columns: the t fit must stay near the clean axis
        // while the SVD axis is dragged away.
        let p = 8;
        let n = 60;
        let mut rng = SplitMix64::new(13);
        let b: Vec<f64> = (0..p).map(|x| 0.5 + 0.2 * (x as f64)).collect();
        let clean = Mat::from_fn_cols(p, n, |_, r: &mut SplitMix64| {
            let k = 2.0 * r.next_normal();
            (0..p)
                .map(|x| -2.0 + b[x] * k + 0.05 * r.next_normal())
                .collect()
        }, &mut rng);
        let mut dirty = clean.clone();
        for t in [5usize, 20, 40] {
            let col = dirty.col_mut(t);
            for (x, v) in col.iter_mut().enumerate() {
                // Outlier pattern deliberately misaligned with b.
                *v += if x % 2 == 0 { 6.0 } else { -6.0 };
            }
        }
        let cos_to = |num: &[f64], den: &[f64]| -> f64 {
            dot(num, den) / (dot(num, num).sqrt() * dot(den, den).sqrt())
        };

        let (clean_fit, _) = fit_tppca(&clean, &TppcaConfig::default()).unwrap();
        let (dirty_fit, _) = fit_tppca(&dirty, &TppcaConfig::default()).unwrap();
        let t_dist = 1.0 - cos_to(&dirty_fit.b, &clean_fit.b).abs();
        assert!(t_dist < 0.05, "t-PPCA axis moved by {t_dist}");

        let svd_clean = crate::gaussian::fit_svd(&clean).unwrap();
        let svd_dirty = crate::gaussian::fit_svd(&dirty).unwrap();
        let svd_dist = 1.0 - cos_to(&svd_dirty.b, &svd_clean.b).abs();
        assert!(
            t_dist < svd_dist,
            "t-PPCA ({t_dist}) should beat SVD ({svd_dist})"
        );
    }

    #[test]
    fn fit_gaussian_frozen_nu_matches_closed_form() {
        let p = 6;
        let n = 150;
        let mut rng = SplitMix64::new(14);
        let b: Vec<f64> = (0..p).map(|x| 0.3 + 0.15 * (x as f64)).collect();
        let y = Mat::from_fn_cols(p, n, |_, r: &mut SplitMix64| {
            let k = r.next_normal();
            (0..p)
                .map(|x| 1.0 + b[x] * k + 0.2 * r.next_normal())
                .collect()
        }, &mut rng);
        let cfg = TppcaConfig {
            nu_init: 1e6,
            update_nu: false,
            ..TppcaConfig::default()
        };
        let (params, trace) = fit_tppca(&y, &cfg).unwrap();
        assert!(trace.converged);
        let ppca = fit_ppca_closed_form(&y).unwrap();
        let nt = normalize(&params.b, &vec![0.0; n]).unwrap();
        let ng = normalize(&ppca.b_unnormalized, &vec![0.0; n]).unwrap();
        let rel = |got: &[f64], want: &[f64]| -> f64 {
            let num: f64 = got
                .iter()
                .zip(want)
                .map(|(g, w)| (g - w) * (g - w))
                .sum::<f64>()
                .sqrt();
            let den: f64 = want.iter().map(|w| w * w).sum::<f64>().sqrt();
            num / den
        };
        assert!(rel(&params.a, &ppca.a) < 1e-6, "a deviates");
        assert!(rel(&nt.b, &ng.b) < 1e-6, "b deviates by {}", rel(&nt.b, &ng.b));
    }

    #[test]
    fn fit_permutation_invariance() {
        let true_params = sample_params(4);
        let mut rng = SplitMix64::new(15);
        let y = sample_hierarchy(&true_params, 40, &mut rng);
        let perm: Vec<usize> = (0..40).rev().collect();
        let yp = Mat::from_fn(4, 40, |x, t| y.get(x, perm[t]));

        let e = e_step(&true_params, &y);
        let ep = e_step(&true_params, &yp);
        for t in 0..40 {
            assert!((e.u[perm[t]] - ep.u[t]).abs() < 1e-14);
            assert!((e.k[perm[t]] - ep.k[t]).abs() < 1e-14);
        }

        let (f1, _) = fit_tppca(&y, &TppcaConfig::default()).unwrap();
        let (f2, _) = fit_tppca(&yp, &TppcaConfig::default()).unwrap();
        for x in 0..4 {
            assert!((f1.a[x] - f2.a[x]).abs() < 1e-9);
            assert!((f1.b[x] - f2.b[x]).abs() < 1e-9);
        }
        assert!((f1.sigma2 - f2.sigma2).abs() < 1e-12);
        assert!((f1.nu - f2.nu).abs() < 1e-6 * f1.nu);
    }

    #[test]
    fn scale_mixture_reproduces_marginal_moments() {
        // Monte-Carlo check that the hierarchy sampler and the marginal
        // agree on mean and scale: Cov = ν/(ν−2) · Σ for ν > 2.
        let params = TppcaParams {
            a: vec![1.0, -2.0],
            b: vec![0.6, 0.3],
            sigma2: 0.25,
            nu: 6.0,
        };
        let n = 200_000;
        let mut rng = SplitMix64::new(16);
        let y = sample_hierarchy(&params, n, &mut rng);
        let mean = y.row_means();
        assert!((mean[0] - 1.0).abs() < 0.02);
        assert!((mean[1] + 2.0).abs() < 0.02);
        let factor = params.nu / (params.nu - 2.0);
        let mut c00 = 0.0;
        let mut c01 = 0.0;
        for t in 0..n {
            let col = y.col(t);
            c00 += (col[0] - mean[0]) * (col[0] - mean[0]);
            c01 += (col[0] - mean[0]) * (col[1] - mean[1]);
        }
        c00 /= n as f64;
        c01 /= n as f64;
        let want00 = factor * (params.b[0] * params.b[0] + params.sigma2);
        let want01 = factor * (params.b[0] * params.b[1]);
        assert!((c00 - want00).abs() < 0.05 * want00, "c00 {c00} vs {want00}");
        assert!((c01 - want01).abs() < 0.1 * want01.abs(), "c01 {c01} vs {want01}");
    }
}
