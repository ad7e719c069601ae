//! Mortality panels: rectangular age × year grids of deaths and exposures,
//! log-rate derivation, and hypothetical-pandemic death injection.
//!
//! Datasets are immutable after construction; every operation here is pure
//! and returns a new value, so panels can be shared freely across workers.

use alloc::vec::Vec;

use crate::fmath;
use crate::matrix::Mat;
use crate::{Error, Result};

/// Floor applied to central rates before taking logs, so zero-death cells
/// stay finite without perturbing realistic rates.
pub const DEFAULT_RATE_FLOOR: f64 = 1e-8;

/// A rectangular mortality panel: deaths and exposures over ages × years.
#[derive(Debug, Clone)]
pub struct MortalityDataset {
    ages: Vec<u32>,
    years: Vec<i32>,
    deaths: Mat,
    exposures: Mat,
    rate_floor: f64,
}

impl MortalityDataset {
    /// Validates and assembles a panel. `deaths` and `exposures` are
    /// `|ages| × |years|`, ages indexing rows and years indexing columns.
    pub fn new(ages: Vec<u32>, years: Vec<i32>, deaths: Mat, exposures: Mat) -> Result<Self> {
        Self::with_rate_floor(ages, years, deaths, exposures, DEFAULT_RATE_FLOOR)
    }

    pub fn with_rate_floor(
        ages: Vec<u32>,
        years: Vec<i32>,
        deaths: Mat,
        exposures: Mat,
        rate_floor: f64,
    ) -> Result<Self> {
        if ages.is_empty() || years.is_empty() {
            return Err(Error::InvalidArgument("empty age or year axis"));
        }
        if !(rate_floor > 0.0) {
            return Err(Error::InvalidArgument("rate_floor must be positive"));
        }
        if !ages.windows(2).all(|w| w[1] == w[0] + 1) {
            return Err(Error::InvalidArgument("ages must increase with unit step"));
        }
        if !years.windows(2).all(|w| w[1] == w[0] + 1) {
            return Err(Error::InvalidArgument("years must increase with unit step"));
        }
        if deaths.rows() != ages.len() || deaths.cols() != years.len() {
            return Err(Error::DimensionMismatch("deaths matrix vs age/year axes"));
        }
        if exposures.rows() != ages.len() || exposures.cols() != years.len() {
            return Err(Error::DimensionMismatch("exposures matrix vs age/year axes"));
        }
        for (t, &year) in years.iter().enumerate() {
            for (x, &age) in ages.iter().enumerate() {
                let n = exposures.get(x, t);
                if !(n > 0.0) || !n.is_finite() {
                    return Err(Error::NonPositiveExposure { age, year });
                }
                let d = deaths.get(x, t);
                if !(d >= 0.0) || !d.is_finite() {
                    return Err(Error::NegativeDeaths { age, year });
                }
            }
        }
        Ok(MortalityDataset {
            ages,
            years,
            deaths,
            exposures,
            rate_floor,
        })
    }

    pub fn ages(&self) -> &[u32] {
        &self.ages
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn deaths(&self) -> &Mat {
        &self.deaths
    }

    pub fn exposures(&self) -> &Mat {
        &self.exposures
    }

    pub fn rate_floor(&self) -> f64 {
        self.rate_floor
    }

    pub fn n_ages(&self) -> usize {
        self.ages.len()
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn year_index(&self, year: i32) -> Option<usize> {
        if year < self.years[0] || year > *self.years.last().unwrap() {
            None
        } else {
            Some((year - self.years[0]) as usize)
        }
    }

    pub fn age_index(&self, age: u32) -> Option<usize> {
        if age < self.ages[0] || age > *self.ages.last().unwrap() {
            None
        } else {
            Some((age - self.ages[0]) as usize)
        }
    }

    /// Observed total deaths in the column for `year`.
    pub fn total_deaths(&self, year_idx: usize) -> f64 {
        self.deaths.col(year_idx).iter().sum()
    }

    /// Restrict the panel to an age and/or year window (inclusive bounds).
    pub fn window(&self, ages: Option<(u32, u32)>, years: Option<(i32, i32)>) -> Result<Self> {
        let (alo, ahi) = ages.unwrap_or((self.ages[0], *self.ages.last().unwrap()));
        let (ylo, yhi) = years.unwrap_or((self.years[0], *self.years.last().unwrap()));
        let ai = self.age_index(alo).ok_or(Error::AgeOutsidePanel(alo))?;
        let aj = self.age_index(ahi).ok_or(Error::AgeOutsidePanel(ahi))?;
        let ti = self.year_index(ylo).ok_or(Error::YearOutsidePanel(ylo))?;
        let tj = self.year_index(yhi).ok_or(Error::YearOutsidePanel(yhi))?;
        if ai > aj || ti > tj {
            return Err(Error::InvalidArgument("window bounds reversed"));
        }
        let sub = |m: &Mat| {
            Mat::from_fn(aj - ai + 1, tj - ti + 1, |r, c| m.get(ai + r, ti + c))
        };
        MortalityDataset::with_rate_floor(
            self.ages[ai..=aj].to_vec(),
            self.years[ti..=tj].to_vec(),
            sub(&self.deaths),
            sub(&self.exposures),
            self.rate_floor,
        )
    }

    /// New panel with the given deaths matrix and everything else shared.
    /// Used by the bootstrap to build pseudo-datasets.
    pub fn with_deaths(&self, deaths: Mat) -> Result<Self> {
        MortalityDataset::with_rate_floor(
            self.ages.clone(),
            self.years.clone(),
            deaths,
            self.exposures.clone(),
            self.rate_floor,
        )
    }
}

/// Log central rates `y[x,t] = log(max(D/N, rate_floor))`.
pub fn log_rates(ds: &MortalityDataset) -> Mat {
    let floor = ds.rate_floor();
    Mat::from_fn(ds.n_ages(), ds.n_years(), |x, t| {
        let m = ds.deaths().get(x, t) / ds.exposures().get(x, t);
        fmath::ln(m.max(floor))
    })
}

/// Pandemic deaths by coarse age group, e.g. the published 2020 U.S.
/// Covid-19 counts ("<1", "1-4", ..., "85+").
#[derive(Debug, Clone)]
pub struct PandemicTable {
    groups: Vec<AgeGroup>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgeGroup {
    pub age_low: u32,
    pub age_high: u32,
    pub deaths: f64,
}

impl PandemicTable {
    pub fn new(groups: Vec<AgeGroup>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::InvalidArgument("pandemic table has no groups"));
        }
        for g in &groups {
            if g.age_low > g.age_high {
                return Err(Error::InvalidArgument("age group bounds reversed"));
            }
            if !(g.deaths >= 0.0) || !g.deaths.is_finite() {
                return Err(Error::InvalidArgument("group deaths must be nonnegative"));
            }
        }
        let mut sorted = groups.clone();
        sorted.sort_by_key(|g| g.age_low);
        for w in sorted.windows(2) {
            if w[1].age_low <= w[0].age_high {
                return Err(Error::InvalidArgument("age groups overlap"));
            }
        }
        Ok(PandemicTable { groups: sorted })
    }

    pub fn groups(&self) -> &[AgeGroup] {
        &self.groups
    }

    pub fn total_deaths(&self) -> f64 {
        self.groups.iter().map(|g| g.deaths).sum()
    }
}

/// Split each group's deaths across its single ages, proportional to a
/// per-age reference vector (e.g. a year's observed all-cause deaths).
///
/// `ages` names the panel's age axis and `reference` is aligned with it.
/// The output sums to the table total exactly up to rounding in the
/// floating sums; no integer rounding is applied.
pub fn redistribute_group_deaths(
    table: &PandemicTable,
    ages: &[u32],
    reference: &[f64],
) -> Result<Vec<f64>> {
    if ages.len() != reference.len() {
        return Err(Error::DimensionMismatch("reference vector vs age axis"));
    }
    if reference.iter().any(|&r| !(r >= 0.0)) {
        return Err(Error::InvalidArgument("reference must be nonnegative"));
    }
    let mut out = alloc::vec![0.0; ages.len()];
    let age_index = |a: u32| -> Result<usize> {
        ages.iter()
            .position(|&x| x == a)
            .ok_or(Error::AgeOutsidePanel(a))
    };
    for g in table.groups() {
        let lo = age_index(g.age_low)?;
        let hi = age_index(g.age_high)?;
        let weight_sum: f64 = reference[lo..=hi].iter().sum();
        if !(weight_sum > 0.0) {
            return Err(Error::Degenerate("all-zero reference within a group"));
        }
        for x in lo..=hi {
            out[x] += g.deaths * reference[x] / weight_sum;
        }
    }
    Ok(out)
}

/// Add `per_age_deaths` to the deaths column of every year in `years`.
/// Exposures are unchanged.
pub fn inject_pandemic(
    ds: &MortalityDataset,
    per_age_deaths: &[f64],
    years: &[i32],
) -> Result<MortalityDataset> {
    if per_age_deaths.len() != ds.n_ages() {
        return Err(Error::DimensionMismatch("per-age deaths vs age axis"));
    }
    let mut deaths = ds.deaths().clone();
    for &year in years {
        let t = ds
            .year_index(year)
            .ok_or(Error::YearOutsidePanel(year))?;
        let col = deaths.col_mut(t);
        for (x, d) in per_age_deaths.iter().enumerate() {
            col[x] += d;
        }
    }
    ds.with_deaths(deaths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn small_ds() -> MortalityDataset {
        // 2 ages × 2 years.
        let deaths = Mat::from_col_major(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let exposures = Mat::from_col_major(2, 2, vec![10.0, 20.0, 30.0, 40.0]);
        MortalityDataset::new(vec![0, 1], vec![2000, 2001], deaths, exposures).unwrap()
    }

    #[test]
    fn construction_validates() {
        let d = Mat::from_col_major(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let n = Mat::from_col_major(2, 2, vec![10.0, 20.0, 30.0, 40.0]);
        assert!(MortalityDataset::new(vec![0, 2], vec![2000, 2001], d.clone(), n.clone()).is_err());
        assert!(MortalityDataset::new(vec![0, 1], vec![2000, 2002], d.clone(), n.clone()).is_err());
        let bad_n = Mat::from_col_major(2, 2, vec![10.0, 0.0, 30.0, 40.0]);
        assert_eq!(
            MortalityDataset::new(vec![0, 1], vec![2000, 2001], d.clone(), bad_n).unwrap_err(),
            Error::NonPositiveExposure { age: 1, year: 2000 }
        );
        let bad_d = Mat::from_col_major(2, 2, vec![1.0, 2.0, -3.0, 4.0]);
        assert!(MortalityDataset::new(vec![0, 1], vec![2000, 2001], bad_d, n).is_err());
    }

    #[test]
    fn log_rates_basic() {
        let deaths = Mat::from_col_major(1, 3, vec![1.0, 0.0, 2.0]);
        let exposures = Mat::from_col_major(1, 3, vec![1.0, 100.0, 1000.0]);
        let ds =
            MortalityDataset::new(vec![50], vec![2000, 2001, 2002], deaths, exposures).unwrap();
        let y = log_rates(&ds);
        // D=1, N=1 → 0.
        assert_eq!(y.get(0, 0), 0.0);
        // D=0 → floor engages.
        assert!((y.get(0, 1) - (1e-8f64).ln()).abs() < 1e-12);
        // D=2, N=1000 → log(0.002), frozen from direct evaluation.
        assert!((y.get(0, 2) - (-6.214_608_098_422_191)).abs() < 1e-12);
    }

    #[test]
    fn log_rates_monotone_in_deaths() {
        let n = 1000.0;
        let floor_rate = DEFAULT_RATE_FLOOR;
        let mut prev = f64::NEG_INFINITY;
        for d in [0.1, 1.0, 5.0, 50.0, 500.0] {
            let m: f64 = d / n;
            assert!(m > floor_rate);
            let y = m.ln();
            assert!(y > prev);
            prev = y;
        }
    }

    #[test]
    fn redistribute_single_age_group_is_identity() {
        let table = PandemicTable::new(vec![AgeGroup {
            age_low: 0,
            age_high: 0,
            deaths: 52.0,
        }])
        .unwrap();
        let ages = vec![0, 1, 2];
        let out = redistribute_group_deaths(&table, &ages, &[10.0, 5.0, 5.0]).unwrap();
        assert_eq!(out, vec![52.0, 0.0, 0.0]);
    }

    #[test]
    fn redistribute_uniform_reference_splits_evenly() {
        let table = PandemicTable::new(vec![AgeGroup {
            age_low: 1,
            age_high: 4,
            deaths: 25.0,
        }])
        .unwrap();
        let ages: Vec<u32> = (0..6).collect();
        let reference = vec![1.0; 6];
        let out = redistribute_group_deaths(&table, &ages, &reference).unwrap();
        for x in 1..=4 {
            assert!((out[x] - 6.25).abs() < 1e-12);
        }
        assert_eq!(out[0], 0.0);
        assert_eq!(out[5], 0.0);
    }

    #[test]
    fn redistribute_preserves_group_totals() {
        let table = PandemicTable::new(vec![
            AgeGroup {
                age_low: 0,
                age_high: 2,
                deaths: 100.0,
            },
            AgeGroup {
                age_low: 3,
                age_high: 5,
                deaths: 7.5,
            },
        ])
        .unwrap();
        let ages: Vec<u32> = (0..6).collect();
        let reference = vec![0.3, 12.0, 7.0, 1.0, 0.0, 99.0];
        let out = redistribute_group_deaths(&table, &ages, &reference).unwrap();
        let total: f64 = out.iter().sum();
        assert!(((total - 107.5) / 107.5).abs() < 1e-9);
    }

    #[test]
    fn redistribute_rejects_zero_reference_group() {
        let table = PandemicTable::new(vec![AgeGroup {
            age_low: 0,
            age_high: 1,
            deaths: 10.0,
        }])
        .unwrap();
        let err = redistribute_group_deaths(&table, &[0, 1], &[0.0, 0.0]).unwrap_err();
        assert_eq!(err, Error::Degenerate("all-zero reference within a group"));
    }

    #[test]
    fn redistribute_rejects_out_of_range_group() {
        let table = PandemicTable::new(vec![AgeGroup {
            age_low: 5,
            age_high: 9,
            deaths: 10.0,
        }])
        .unwrap();
        assert!(redistribute_group_deaths(&table, &[0, 1, 2], &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn pandemic_table_rejects_overlap() {
        assert!(PandemicTable::new(vec![
            AgeGroup {
                age_low: 0,
                age_high: 4,
                deaths: 1.0
            },
            AgeGroup {
                age_low: 4,
                age_high: 9,
                deaths: 1.0
            },
        ])
        .is_err());
    }

    #[test]
    fn inject_empty_years_is_identity() {
        let ds = small_ds();
        let out = inject_pandemic(&ds, &[10.0, 10.0], &[]).unwrap();
        assert_eq!(out.deaths(), ds.deaths());
    }

    #[test]
    fn inject_zero_deaths_is_identity() {
        let ds = small_ds();
        let out = inject_pandemic(&ds, &[0.0, 0.0], &[2000, 2001]).unwrap();
        assert_eq!(out.deaths(), ds.deaths());
    }

    #[test]
    fn inject_modifies_only_selected_years() {
        let ds = small_ds();
        let out = inject_pandemic(&ds, &[1.0, 2.0], &[2001]).unwrap();
        assert_eq!(out.deaths().col(0), ds.deaths().col(0));
        assert_eq!(out.deaths().col(1), &[4.0, 6.0][..]);
        assert_eq!(out.exposures(), ds.exposures());
    }

    #[test]
    fn inject_is_additive() {
        let ds = small_ds();
        let v = [1.0, 2.0];
        let w = [0.5, 0.25];
        let vw = [1.5, 2.25];
        let a = inject_pandemic(&inject_pandemic(&ds, &v, &[2000]).unwrap(), &w, &[2000]).unwrap();
        let b = inject_pandemic(&ds, &vw, &[2000]).unwrap();
        assert_eq!(a.deaths(), b.deaths());
    }

    #[test]
    fn inject_rejects_unknown_year() {
        let ds = small_ds();
        assert_eq!(
            inject_pandemic(&ds, &[1.0, 1.0], &[1999]).unwrap_err(),
            Error::YearOutsidePanel(1999)
        );
    }

    #[test]
    fn window_selects_subpanel() {
        let deaths = Mat::from_fn(3, 4, |r, c| (r * 10 + c) as f64);
        let exposures = Mat::from_fn(3, 4, |_, _| 1.0);
        let ds = MortalityDataset::new(
            vec![60, 61, 62],
            vec![1990, 1991, 1992, 1993],
            deaths,
            exposures,
        )
        .unwrap();
        let w = ds.window(Some((61, 62)), Some((1991, 1992))).unwrap();
        assert_eq!(w.ages(), &[61, 62]);
        assert_eq!(w.years(), &[1991, 1992]);
        assert_eq!(w.deaths().get(0, 0), 11.0);
        assert_eq!(w.deaths().get(1, 1), 22.0);
    }
}
