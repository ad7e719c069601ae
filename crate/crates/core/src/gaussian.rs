//! Closed-form Gaussian estimators for the Lee-Carter decomposition: the
//! classic SVD/PCA solution and the equivalent probabilistic-PCA maximum
//! likelihood (latent dimension 1), plus the shared normalization
//! convention `Σ_x b_x = 1`, `Σ_t k_t = 0`.

use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;
use crate::matrix::{column_covariance, dot, sum, sym_eigen, Mat};
use crate::{Error, Result};

/// Which estimator produced a [`LeeCarterFit`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Svd,
    Ppca,
    PoissonGlm,
    Tppca,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Svd => "svd",
            Method::Ppca => "ppca",
            Method::PoissonGlm => "poisson_glm",
            Method::Tppca => "tppca",
        }
    }
}

/// An estimated Lee-Carter decomposition.
#[derive(Debug, Clone)]
pub struct LeeCarterFit {
    /// Age-specific log-rate level.
    pub a: Vec<f64>,
    /// Age-specific sensitivity, normalized to sum 1.
    pub b: Vec<f64>,
    /// Time index per year. For SVD/PPCA this is the principal score until
    /// second-stage matching replaces it.
    pub k: Vec<f64>,
    pub method: Method,
    /// Residual variance (PPCA/t-PPCA only).
    pub sigma2: Option<f64>,
    /// Degrees of freedom (t-PPCA only).
    pub nu: Option<f64>,
    /// Set when the zero-variance fallback (uniform b, zero k) was taken.
    pub degenerate: bool,
}

/// Closed-form Gaussian PPCA solution at latent dimension 1.
#[derive(Debug, Clone)]
pub struct GaussianPPCAFit {
    /// Sample mean of the year columns.
    pub a: Vec<f64>,
    /// Principal axis scaled by `sqrt(λ1 − σ²)`; not yet sum-normalized.
    pub b_unnormalized: Vec<f64>,
    /// Mean of the trailing eigenvalues.
    pub sigma2: f64,
    /// Full covariance spectrum, nonincreasing.
    pub eigenvalues: Vec<f64>,
}

/// Smallest spectrum scale treated as nonzero variance.
const SPECTRUM_TINY: f64 = 1e-300;

fn leading_axis(y: &Mat) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if y.rows() < 2 {
        return Err(Error::Degenerate("need at least 2 ages"));
    }
    if y.cols() < 2 {
        return Err(Error::Degenerate("need at least 2 years"));
    }
    if !y.is_finite() {
        return Err(Error::InvalidArgument("non-finite log rates"));
    }
    let (s, mean) = column_covariance(y);
    let eig = sym_eigen(&s, y.rows());
    let mut u = eig.vectors[0].clone();
    fix_sign(&mut u);
    Ok((mean, u, eig.values))
}

/// Resolve the sign ambiguity of the principal axis: prefer `Σ u > 0`
/// (mortality sensitivities are empirically positive-sum); fall back to
/// making the largest-magnitude component positive when the sum is ~0.
fn fix_sign(u: &mut [f64]) {
    let s = sum(u);
    if fmath::abs(s) > 1e-14 {
        if s < 0.0 {
            for v in u.iter_mut() {
                *v = -*v;
            }
        }
        return;
    }
    let mut idx = 0;
    let mut best = 0.0;
    for (i, &v) in u.iter().enumerate() {
        if fmath::abs(v) > best {
            best = fmath::abs(v);
            idx = i;
        }
    }
    if u[idx] < 0.0 {
        for v in u.iter_mut() {
            *v = -*v;
        }
    }
}

/// Least-squares (SVD/PCA) Lee-Carter estimate from a log-rate matrix.
///
/// `a` is the row mean, `b = u / Σu` for the first principal axis `u`, and
/// `k_t = (Σu) · uᵀ(y_t − a)` is the scaled principal score, which sums to
/// zero by construction. Constant-in-time data takes the documented
/// fallback: uniform `b`, zero `k`, and `degenerate = true`.
pub fn fit_svd(y: &Mat) -> Result<LeeCarterFit> {
    let (a, u, values) = leading_axis(y)?;
    let p = y.rows();
    let n = y.cols();

    if values[0] <= SPECTRUM_TINY {
        // Zero-variance panel: no preferred direction.
        return Ok(LeeCarterFit {
            a,
            b: vec![1.0 / p as f64; p],
            k: vec![0.0; n],
            method: Method::Svd,
            sigma2: None,
            nu: None,
            degenerate: true,
        });
    }

    let usum = sum(&u);
    if fmath::abs(usum) <= 1e-14 {
        return Err(Error::Degenerate("principal axis sums to zero"));
    }
    let b: Vec<f64> = u.iter().map(|&v| v / usum).collect();
    let mut k = Vec::with_capacity(n);
    let mut centered = vec![0.0; p];
    for t in 0..n {
        let col = y.col(t);
        for x in 0..p {
            centered[x] = col[x] - a[x];
        }
        k.push(usum * dot(&u, &centered));
    }
    Ok(LeeCarterFit {
        a,
        b,
        k,
        method: Method::Svd,
        sigma2: None,
        nu: None,
        degenerate: false,
    })
}

/// Closed-form Gaussian PPCA MLE at latent dimension 1.
///
/// Eigendecomposes the population covariance `S` of the year columns and
/// returns the sample mean, `σ² = mean(λ_2..λ_p)`, and the scaled axis
/// `u_1 √(λ_1 − σ²)`.
pub fn fit_ppca_closed_form(y: &Mat) -> Result<GaussianPPCAFit> {
    let (a, u, values) = leading_axis(y)?;
    let p = y.rows();
    let sigma2 = values[1..].iter().sum::<f64>() / (p as f64 - 1.0);
    let excess = values[0] - sigma2;
    if excess < -1e-12 * fmath::abs(values[0]).max(1.0) {
        // Impossible for a real spectrum; guards against solver failure.
        return Err(Error::Degenerate("leading eigenvalue below noise floor"));
    }
    let scale = fmath::sqrt(excess.max(0.0));
    let b_unnormalized: Vec<f64> = u.iter().map(|&v| v * scale).collect();
    Ok(GaussianPPCAFit {
        a,
        b_unnormalized,
        sigma2,
        eigenvalues: values,
    })
}

/// A sum-normalized `(b, k)` pair plus the mean removed from `k`.
///
/// The caller folds the shift into the level: `a_x += b_x * k_mean`
/// preserves every fitted value `a_x + b_x k_t`.
#[derive(Debug, Clone)]
pub struct Normalized {
    pub b: Vec<f64>,
    /// Centered time index, `Σ k = 0`.
    pub k: Vec<f64>,
    /// Mean removed from the rescaled `k`.
    pub k_mean: f64,
}

/// Impose the Lee-Carter identification constraints on a raw `(b, k)` pair:
/// `b = b_raw / Σ b_raw`, `k = (Σ b_raw) · k_raw` centered to mean zero.
/// The product `b_x k_t` is invariant up to the centering shift.
pub fn normalize(b_raw: &[f64], k_raw: &[f64]) -> Result<Normalized> {
    let s = sum(b_raw);
    if fmath::abs(s) < 1e-300 || !s.is_finite() {
        return Err(Error::Degenerate("b sums to zero; cannot normalize"));
    }
    let b: Vec<f64> = b_raw.iter().map(|&v| v / s).collect();
    let mut k: Vec<f64> = k_raw.iter().map(|&v| v * s).collect();
    let k_mean = if k.is_empty() { 0.0 } else { sum(&k) / k.len() as f64 };
    for v in &mut k {
        *v -= k_mean;
    }
    Ok(Normalized { b, k, k_mean })
}
