//! Shared oracles and data builders for the acceptance suite.
//!
//! Everything here is deliberately independent of the library's own
//! computational paths: the quadrature oracle integrates the joint latent
//! posterior numerically, and the samplers draw from the generative
//! hierarchy with integer-χ² constructions.

use leecarter::dataset::MortalityDataset;
use leecarter::matrix::Mat;
use leecarter::rng::SplitMix64;

/// Adaptive Simpson over a vector-valued integrand, componentwise error
/// control with an absolute tolerance.
///
/// The domain is pre-split into `strata` segments and each segment must
/// refine at least `min_depth` levels before its error estimate is
/// trusted; narrow bumps inside a wide domain cannot alias their way past
/// the acceptance test.
pub fn adaptive_simpson<const M: usize>(
    f: &dyn Fn(f64) -> [f64; M],
    a: f64,
    b: f64,
    tol: f64,
    max_depth: usize,
    strata: usize,
    min_depth: usize,
) -> [f64; M] {
    fn add<const M: usize>(x: [f64; M], y: [f64; M]) -> [f64; M] {
        let mut out = [0.0; M];
        for i in 0..M {
            out[i] = x[i] + y[i];
        }
        out
    }
    fn simpson<const M: usize>(fa: [f64; M], fm: [f64; M], fb: [f64; M], h: f64) -> [f64; M] {
        let mut out = [0.0; M];
        for i in 0..M {
            out[i] = h / 6.0 * (fa[i] + 4.0 * fm[i] + fb[i]);
        }
        out
    }
    #[allow(clippy::too_many_arguments)]
    fn rec<const M: usize>(
        f: &dyn Fn(f64) -> [f64; M],
        a: f64,
        b: f64,
        fa: [f64; M],
        fm: [f64; M],
        fb: [f64; M],
        whole: [f64; M],
        tol: f64,
        depth: usize,
        min_depth: usize,
    ) -> [f64; M] {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let mut worst = 0.0f64;
        for i in 0..M {
            worst = worst.max((left[i] + right[i] - whole[i]).abs());
        }
        if depth == 0 || (min_depth == 0 && worst <= 15.0 * tol) {
            let mut out = [0.0; M];
            for i in 0..M {
                out[i] = left[i] + right[i] + (left[i] + right[i] - whole[i]) / 15.0;
            }
            return out;
        }
        let next_min = min_depth.saturating_sub(1);
        let l = rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, next_min);
        let r = rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, next_min);
        add(l, r)
    }

    let strata = strata.max(1);
    let seg_tol = tol / strata as f64;
    let width = (b - a) / strata as f64;
    let mut total = [0.0; M];
    for s in 0..strata {
        let sa = a + s as f64 * width;
        let sb = sa + width;
        let fa = f(sa);
        let fb = f(sb);
        let m = 0.5 * (sa + sb);
        let fm = f(m);
        let whole = simpson(fa, fm, fb, sb - sa);
        let part = rec(f, sa, sb, fa, fm, fb, whole, seg_tol, max_depth, min_depth);
        total = add(total, part);
    }
    total
}

/// The five posterior expectations ⟨u⟩, ⟨log u⟩, ⟨k⟩, ⟨uk⟩, ⟨uk²⟩ for one
/// observation, by 2-D adaptive quadrature over the joint posterior of
/// (k, u). Integrates in (k, v = log u) with the density assembled from
/// the three hierarchy factors directly.
pub struct OracleMoments {
    pub u: f64,
    pub log_u: f64,
    pub k: f64,
    pub uk: f64,
    pub uk2: f64,
}

pub fn posterior_moments_quadrature(
    a: &[f64],
    b: &[f64],
    sigma2: f64,
    nu: f64,
    y: &[f64],
) -> OracleMoments {
    let p = a.len() as f64;
    let rr: f64 = y
        .iter()
        .zip(a)
        .map(|(&yv, &av)| (yv - av) * (yv - av))
        .sum();
    let br: f64 = y
        .iter()
        .zip(a)
        .zip(b)
        .map(|((&yv, &av), &bv)| bv * (yv - av))
        .sum();
    let bb: f64 = b.iter().map(|&v| v * v).sum();

    // log of the joint density kernel in (k, v = log u); constants in
    // (k, v) dropped. The u-power collects p/2 (likelihood), 1/2 (score
    // prior), ν/2 − 1 (gamma prior), +1 (Jacobian of v = log u).
    let quad = |k: f64| rr - 2.0 * br * k + bb * k * k;
    let log_w = |k: f64, v: f64| -> f64 {
        let u = v.exp();
        0.5 * (p + 1.0 + nu) * v - u * (quad(k) / (2.0 * sigma2) + 0.5 * k * k + 0.5 * nu)
    };

    // Centering for numeric scaling: the Gaussian-limit posterior center.
    let denom = bb + sigma2;
    let k_hat = br / denom;
    let delta = (rr - br * br / denom) / sigma2;
    let u_hat = (nu + p) / (nu + delta);
    let v_hat = u_hat.ln();
    let log_w_ref = log_w(k_hat, v_hat);

    // Gaussian-limit posterior scale for k, inflated for the t widening.
    let s_k = (sigma2 / denom).sqrt() * ((nu + delta) / (nu + p)).sqrt() + 1e-12;
    // v window: the u-conditional mass sits within a few units of v̂ near
    // the k center and drifts down by ~2 log|k/s| far out, still well
    // inside this window wherever the k tail is non-negligible.
    let v_lo = v_hat - 40.0;
    let v_hi = v_hat + 10.0;

    let inner = |k: f64| -> [f64; 6] {
        let g = |v: f64| -> [f64; 6] {
            let w = (log_w(k, v) - log_w_ref).exp();
            let u = v.exp();
            [w, w * u, w * v, w * k, w * u * k, w * u * k * k]
        };
        adaptive_simpson(&g, v_lo, v_hi, 1e-11, 40, 6, 2)
    };
    // Compactify the heavy-tailed k axis: k = k̂ + s·tan(θ). The extra
    // sec²θ factor keeps every moment integrable up to θ = ±π/2, where the
    // integrand vanishes for ν + p > 1.
    let outer = |theta: f64| -> [f64; 6] {
        let c = theta.cos();
        if c.abs() < 1e-14 {
            return [0.0; 6];
        }
        let k = k_hat + s_k * theta.tan();
        let jac = s_k / (c * c);
        let mut vals = inner(k);
        for v in &mut vals {
            *v *= jac;
        }
        vals
    };
    let half_pi = core::f64::consts::FRAC_PI_2;
    let totals = adaptive_simpson(&outer, -half_pi + 1e-12, half_pi - 1e-12, 1e-11, 40, 12, 3);

    let z = totals[0];
    OracleMoments {
        u: totals[1] / z,
        log_u: totals[2] / z,
        k: totals[3] / z,
        uk: totals[4] / z,
        uk2: totals[5] / z,
    }
}

/// Draw `n` columns of the t-PPCA marginal t_ν(a, bbᵀ + σ²I) through the
/// χ² construction (ν must be a positive integer).
pub fn sample_t_columns(
    a: &[f64],
    b: &[f64],
    sigma2: f64,
    nu: usize,
    n: usize,
    rng: &mut SplitMix64,
) -> Mat {
    let p = a.len();
    let sigma = sigma2.sqrt();
    let mut data = Vec::with_capacity(p * n);
    for _ in 0..n {
        let g0 = rng.next_normal();
        let mut chi2 = 0.0;
        for _ in 0..nu {
            let z = rng.next_normal();
            chi2 += z * z;
        }
        let scale = (nu as f64 / chi2).sqrt();
        for x in 0..p {
            let z = b[x] * g0 + sigma * rng.next_normal();
            data.push(a[x] + z * scale);
        }
    }
    Mat::from_col_major(p, n, data)
}

/// Lee-Carter shaped panel with U.S.-like magnitudes: 101 single ages,
/// calendar years 1970-2019, log-rate noise on top of an exact bilinear
/// structure, deaths regenerated from the exposures.
pub fn us_like_panel(seed: u64, noise_sd: f64) -> MortalityDataset {
    let p = 101usize;
    let n = 50usize;
    let mut rng = SplitMix64::new(seed);

    // Infant dip plus Gompertz rise.
    let a: Vec<f64> = (0..p)
        .map(|x| {
            let x = x as f64;
            (2e-4 * (1.0 + 90.0 * (-x / 1.5).exp()) + 6e-5 * (0.09 * x).exp()).ln()
        })
        .collect();
    // Sensitivity declining with age, normalized to sum 1.
    let mut b: Vec<f64> = (0..p).map(|x| 0.5 + (-(x as f64) / 30.0).exp()).collect();
    let bsum: f64 = b.iter().sum();
    for v in &mut b {
        *v /= bsum;
    }
    // Downward mortality trend with mild wiggle.
    let mut k: Vec<f64> = (0..n)
        .map(|t| 25.0 - 50.0 * t as f64 / (n as f64 - 1.0) + rng.next_normal())
        .collect();
    let km: f64 = k.iter().sum::<f64>() / n as f64;
    for v in &mut k {
        *v -= km;
    }

    // Age-shaped population of a few million per single age.
    let exposures = Mat::from_fn(p, n, |x, _| {
        4.0e6 * (-((x as f64) / 55.0).powf(2.5)).exp()
    });
    let deaths = Mat::from_fn(p, n, |x, t| {
        let y = a[x] + b[x] * k[t] + noise_sd * rng.next_normal();
        exposures.get(x, t) * y.exp()
    });
    MortalityDataset::new(
        (0..p as u32).collect(),
        (1970..1970 + n as i32).collect(),
        deaths,
        exposures,
    )
    .unwrap()
}

/// Cosine distance between two direction vectors (sign-free).
pub fn cosine_distance(x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let nx: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    1.0 - (dot / (nx * ny)).abs()
}

/// Norm-relative error ‖got − want‖ / ‖want‖.
pub fn rel_norm_err(got: &[f64], want: &[f64]) -> f64 {
    let num: f64 = got
        .iter()
        .zip(want)
        .map(|(g, w)| (g - w) * (g - w))
        .sum::<f64>()
        .sqrt();
    let den: f64 = want.iter().map(|w| w * w).sum::<f64>().sqrt();
    num / den
}
