//! Property tests for the algebraic invariants the modules promise.

use leecarter::bootstrap::invert_deviance;
use leecarter::dataset::{
    inject_pandemic, redistribute_group_deaths, AgeGroup, MortalityDataset, PandemicTable,
};
use leecarter::gaussian::normalize;
use leecarter::matrix::Mat;
use leecarter::numerics::{digamma, f_cdf, f_quantile, solve_root, Bracket};
use leecarter::poisson::signed_deviance;
use proptest::prelude::*;

fn small_ds(p: usize, n: usize) -> MortalityDataset {
    let deaths = Mat::from_fn(p, n, |x, t| 1.0 + (x + t) as f64);
    let exposures = Mat::from_fn(p, n, |_, _| 100.0);
    MortalityDataset::new(
        (0..p as u32).collect(),
        (2000..2000 + n as i32).collect(),
        deaths,
        exposures,
    )
    .unwrap()
}

proptest! {
    #[test]
    fn inject_pandemic_is_additive(
        v in proptest::collection::vec(0.0f64..50.0, 4),
        w in proptest::collection::vec(0.0f64..50.0, 4),
    ) {
        let ds = small_ds(4, 3);
        let years = [2001];
        let sum: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a + b).collect();
        let seq = inject_pandemic(&inject_pandemic(&ds, &v, &years).unwrap(), &w, &years).unwrap();
        let joint = inject_pandemic(&ds, &sum, &years).unwrap();
        for t in 0..3 {
            for x in 0..4 {
                prop_assert!((seq.deaths().get(x, t) - joint.deaths().get(x, t)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn redistribute_preserves_totals(
        weights in proptest::collection::vec(0.01f64..100.0, 6),
        d1 in 0.0f64..1e5,
        d2 in 0.0f64..1e5,
    ) {
        let table = PandemicTable::new(vec![
            AgeGroup { age_low: 0, age_high: 2, deaths: d1 },
            AgeGroup { age_low: 3, age_high: 5, deaths: d2 },
        ]).unwrap();
        let ages: Vec<u32> = (0..6).collect();
        let out = redistribute_group_deaths(&table, &ages, &weights).unwrap();
        let total: f64 = out.iter().sum();
        let want = d1 + d2;
        prop_assert!((total - want).abs() <= 1e-9 * want.max(1.0));
        // Group-local totals hold too.
        let g1: f64 = out[..3].iter().sum();
        prop_assert!((g1 - d1).abs() <= 1e-9 * d1.max(1.0));
    }

    #[test]
    fn normalize_keeps_products_and_constraints(
        b_raw in proptest::collection::vec(0.05f64..5.0, 5),
        k_raw in proptest::collection::vec(-10.0f64..10.0, 7),
    ) {
        let norm = normalize(&b_raw, &k_raw).unwrap();
        let bsum: f64 = norm.b.iter().sum();
        prop_assert!((bsum - 1.0).abs() < 1e-12);
        let ksum: f64 = norm.k.iter().sum();
        prop_assert!(ksum.abs() < 1e-9);
        // b_x (k_t + k_mean) reproduces the raw product.
        for x in 0..5 {
            for t in 0..7 {
                let raw = b_raw[x] * k_raw[t];
                let recon = norm.b[x] * (norm.k[t] + norm.k_mean);
                prop_assert!((raw - recon).abs() < 1e-9 * raw.abs().max(1.0));
            }
        }
    }

    #[test]
    fn deviance_inversion_round_trips(
        d in 0.0f64..500.0,
        dhat in 0.1f64..400.0,
    ) {
        let r = signed_deviance(d, dhat);
        let back = invert_deviance(r, dhat).unwrap();
        let r2 = signed_deviance(back, dhat);
        prop_assert!((r2 - r).abs() < 1e-8, "r {} vs {}", r, r2);
    }

    #[test]
    fn digamma_recurrence_random(x in 0.01f64..500.0) {
        let lhs = digamma(x + 1.0).unwrap() - digamma(x).unwrap();
        prop_assert!((lhs - 1.0 / x).abs() < 1e-9);
    }

    #[test]
    fn f_quantile_inverts_cdf(
        alpha in 0.01f64..0.99,
        d1 in 1.0f64..100.0,
        d2 in 1.0f64..100.0,
    ) {
        let q = f_quantile(alpha, d1, d2).unwrap();
        let c = f_cdf(q, d1, d2).unwrap();
        prop_assert!((c - alpha).abs() < 1e-8);
    }

    #[test]
    fn solve_root_finds_planted_roots(r in -50.0f64..50.0) {
        // Strictly increasing with a single root at r.
        let f = move |x: f64| (x - r) * (1.0 + (x - r) * (x - r));
        let x = solve_root(f, Bracket::new(-1.0, 1.0)).unwrap();
        prop_assert!((x - r).abs() < 1e-7, "root {} vs {}", x, r);
    }
}
