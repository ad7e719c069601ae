//! Special functions and scalar root finding used by the EM algorithm and
//! the outlier rule: log-gamma, digamma, the regularized incomplete beta,
//! F-distribution quantiles, and a bracketed Brent solver.

use crate::fmath;
use crate::{Error, Result};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_74;

// Lanczos approximation, g = 7, 9 coefficients (Godfrey's set).
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::InvalidArgument("log_gamma requires x > 0"));
    }
    Ok(log_gamma_unchecked(x))
}

pub(crate) fn log_gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // Shift into the accurate range: log Γ(x) = log Γ(x+1) − log x.
        return log_gamma_unchecked(x + 1.0) - fmath::ln(x);
    }
    let z = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (z + 0.5) * fmath::ln(t) - t + fmath::ln(acc)
}

/// Digamma function ψ(x) = d/dx log Γ(x) for `x > 0`.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::InvalidArgument("digamma requires x > 0"));
    }
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(x: f64) -> f64 {
    let mut x = x;
    let mut result = 0.0;
    // Recurrence ψ(x) = ψ(x+1) − 1/x until the asymptotic series is accurate.
    while x < 10.0 {
        result -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // ln x − 1/(2x) − Σ B_{2k}/(2k x^{2k}), truncated after x^{-10}.
    result += fmath::ln(x) - 0.5 * inv;
    result -= inv2
        * (1.0 / 12.0
            - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))));
    result
}

/// Regularized incomplete beta function I_x(a, b) for a, b > 0, x ∈ [0, 1].
///
/// Continued-fraction evaluation (Lentz), with the symmetry relation to keep
/// the fraction in its fast-converging region.
pub fn inc_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(Error::InvalidArgument("inc_beta requires a, b > 0"));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidArgument("inc_beta requires x in [0, 1]"));
    }
    Ok(inc_beta_unchecked(a, b, x))
}

fn inc_beta_unchecked(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    if x > (a + 1.0) / (a + b + 2.0) {
        return 1.0 - inc_beta_unchecked(b, a, 1.0 - x);
    }
    let ln_front = log_gamma_unchecked(a + b)
        - log_gamma_unchecked(a)
        - log_gamma_unchecked(b)
        + a * fmath::ln(x)
        + b * fmath::ln(1.0 - x);
    fmath::exp(ln_front) * beta_cf(a, b, x) / a
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-16;
    const TINY: f64 = 1e-30;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;

    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if fmath::abs(d) < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;

    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if fmath::abs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if fmath::abs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if fmath::abs(d) < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if fmath::abs(c) < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;

        if fmath::abs(del - 1.0) < EPS {
            break;
        }
    }
    h
}

/// CDF of the F-distribution with degrees of freedom `(d1, d2)` at `q >= 0`.
pub fn f_cdf(q: f64, d1: f64, d2: f64) -> Result<f64> {
    if !(d1 > 0.0) || !(d2 > 0.0) {
        return Err(Error::InvalidArgument("f_cdf requires d1, d2 > 0"));
    }
    if q <= 0.0 {
        return Ok(0.0);
    }
    let x = d1 * q / (d1 * q + d2);
    inc_beta(0.5 * d1, 0.5 * d2, x)
}

/// α-quantile of the F-distribution with degrees of freedom `(d1, d2)`.
///
/// Inverts the regularized incomplete beta by bisection; the returned `q`
/// satisfies `|CDF(q) − alpha| <= 1e-8`.
pub fn f_quantile(alpha: f64, d1: f64, d2: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument("alpha must be in (0, 1)"));
    }
    if !(d1 > 0.0) || !(d2 > 0.0) {
        return Err(Error::InvalidArgument("f_quantile requires d1, d2 > 0"));
    }
    let a = 0.5 * d1;
    let b = 0.5 * d2;
    // Bisect on the beta variable z in (0,1), then map back to q.
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if inc_beta_unchecked(a, b, mid) < alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-16 {
            break;
        }
    }
    let z = 0.5 * (lo + hi);
    if z >= 1.0 {
        return Err(Error::Degenerate("f_quantile overflow"));
    }
    Ok(d2 * z / (d1 * (1.0 - z)))
}

/// A root-finding interval with solver controls.
#[derive(Debug, Clone, Copy)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    /// Absolute tolerance on the abscissa.
    pub tol: f64,
    pub max_iter: usize,
}

impl Bracket {
    pub fn new(lo: f64, hi: f64) -> Self {
        Bracket {
            lo,
            hi,
            tol: 1e-12,
            max_iter: 200,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo < self.hi) {
            return Err(Error::InvalidArgument("bracket requires lo < hi"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("bracket requires tol > 0"));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("bracket requires max_iter > 0"));
        }
        Ok(())
    }
}

/// Doublings allowed when the initial bracket does not straddle a root.
const EXPANSION_CAP: usize = 60;

/// Find a root of `f` inside (an expansion of) `bracket` by Brent's method.
///
/// If `f(lo)` and `f(hi)` have the same sign the bracket is grown
/// geometrically about its midpoint (factor 2, up to 60 doublings) until
/// a sign change appears.
pub fn solve_root(f: impl Fn(f64) -> f64, bracket: Bracket) -> Result<f64> {
    bracket.validate()?;
    let (mut lo, mut hi) = (bracket.lo, bracket.hi);
    let (mut flo, mut fhi) = (f(lo), f(hi));

    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }

    if flo * fhi > 0.0 {
        let mid = 0.5 * (lo + hi);
        let mut half = 0.5 * (hi - lo);
        let mut found = false;
        for _ in 0..EXPANSION_CAP {
            half *= 2.0;
            lo = mid - half;
            hi = mid + half;
            flo = f(lo);
            fhi = f(hi);
            if flo == 0.0 {
                return Ok(lo);
            }
            if fhi == 0.0 {
                return Ok(hi);
            }
            if flo * fhi < 0.0 {
                found = true;
                break;
            }
        }
        if !found {
            return Err(Error::NoSignChange);
        }
    }

    brent(f, lo, hi, flo, fhi, bracket.tol, bracket.max_iter)
}

/// Brent's method on a bracketing interval (Numerical Recipes form).
fn brent(
    f: impl Fn(f64) -> f64,
    x1: f64,
    x2: f64,
    f1: f64,
    f2: f64,
    tol: f64,
    max_iter: usize,
) -> Result<f64> {
    let eps = f64::EPSILON;
    let (mut a, mut b, mut c) = (x1, x2, x2);
    let (mut fa, mut fb, mut fc) = (f1, f2, f2);
    let (mut d, mut e) = (0.0f64, 0.0f64);

    for _ in 0..max_iter {
        if (fb > 0.0 && fc > 0.0) || (fb < 0.0 && fc < 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fmath::abs(fc) < fmath::abs(fb) {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * eps * fmath::abs(b) + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if fmath::abs(xm) <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if fmath::abs(e) >= tol1 && fmath::abs(fa) > fmath::abs(fb) {
            // Inverse quadratic interpolation.
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                q = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0));
                q = (q - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = fmath::abs(p);
            let min1 = 3.0 * xm * q - fmath::abs(tol1 * q);
            let min2 = fmath::abs(e * q);
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        if fmath::abs(d) > tol1 {
            b += d;
        } else {
            b += if xm > 0.0 { tol1 } else { -tol1 };
        }
        fb = f(b);
    }
    Err(Error::MaxIterExceeded("brent root solver"))
}
