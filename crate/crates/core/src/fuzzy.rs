//! Empirical LR fuzzy numbers built from simulated outcomes.
//!
//! The α-cut of the opinion is the central quantile interval
//! `[q(α/2), q(1 − α/2)]` of the sample, so the core is the median and the
//! support spans the sample minimum to maximum.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_GRID_SIZE: usize = 101;

/// Sample quantile by linear interpolation between order statistics
/// (Hyndman–Fan type 7). `sorted` must be ascending and non-empty.
pub fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    sorted[lo] + (h - lo as f64) * (sorted[lo + 1] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaCut {
    pub alpha: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Fuzzy number stored as nested α-cuts on an increasing grid from 0 to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalFuzzyNumber {
    cuts: Vec<AlphaCut>,
}

impl EmpiricalFuzzyNumber {
    /// Assemble from explicit cuts, checking the grid and nestedness.
    pub fn from_cuts(cuts: Vec<AlphaCut>) -> Result<Self> {
        if cuts.len() < 2 || cuts[0].alpha != 0.0 || cuts[cuts.len() - 1].alpha != 1.0 {
            return Err(Error::DomainError(
                "α grid must run from 0 to 1 with at least two points".into(),
            ));
        }
        for w in cuts.windows(2) {
            if !(w[1].alpha > w[0].alpha) {
                return Err(Error::DomainError(
                    "α grid must be strictly increasing".into(),
                ));
            }
            if w[1].lower < w[0].lower || w[1].upper > w[0].upper {
                return Err(Error::DomainError(format!(
                    "cuts at α={} and α={} are not nested",
                    w[0].alpha, w[1].alpha
                )));
            }
        }
        if cuts.iter().any(|c| !(c.lower <= c.upper)) {
            return Err(Error::DomainError("empty α-cut".into()));
        }
        Ok(EmpiricalFuzzyNumber { cuts })
    }

    pub fn cuts(&self) -> &[AlphaCut] {
        &self.cuts
    }

    pub fn alpha_grid(&self) -> Vec<f64> {
        self.cuts.iter().map(|c| c.alpha).collect()
    }

    /// `[a₂, a₃]`.
    pub fn core(&self) -> (f64, f64) {
        let c = self.cuts[self.cuts.len() - 1];
        (c.lower, c.upper)
    }

    /// `[a₁, a₄]`.
    pub fn support(&self) -> (f64, f64) {
        (self.cuts[0].lower, self.cuts[0].upper)
    }

    /// α-cut by linear interpolation between neighbouring grid levels.
    pub fn alpha_cut(&self, alpha: f64) -> Result<(f64, f64)> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::DomainError(format!("α = {alpha} outside [0, 1]")));
        }
        let i = self.cuts.partition_point(|c| c.alpha <= alpha);
        if i == self.cuts.len() {
            return Ok(self.core());
        }
        let (a, b) = (self.cuts[i - 1], self.cuts[i]);
        let w = (alpha - a.alpha) / (b.alpha - a.alpha);
        Ok((
            a.lower + w * (b.lower - a.lower),
            a.upper + w * (b.upper - a.upper),
        ))
    }

    /// `sup{α : x ∈ cut(α)}` with piecewise-linear cut endpoints.
    pub fn membership(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi || x.is_nan() {
            return 0.0;
        }
        self.left_branch(x).min(self.right_branch(x))
    }

    /// `sup{α : lower(α) ≤ x}` for x within the support.
    fn left_branch(&self, x: f64) -> f64 {
        let i = self.cuts.partition_point(|c| c.lower <= x);
        // lower is non-decreasing, so cuts[..i] all satisfy lower ≤ x
        if i == self.cuts.len() {
            return 1.0;
        }
        let (a, b) = (self.cuts[i - 1], self.cuts[i]);
        a.alpha + (x - a.lower) / (b.lower - a.lower) * (b.alpha - a.alpha)
    }

    fn right_branch(&self, x: f64) -> f64 {
        let i = self.cuts.partition_point(|c| c.upper >= x);
        if i == self.cuts.len() {
            return 1.0;
        }
        let (a, b) = (self.cuts[i - 1], self.cuts[i]);
        a.alpha + (a.upper - x) / (a.upper - b.upper) * (b.alpha - a.alpha)
    }

    /// CSV with header `alpha,lower,upper`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for c in &self.cuts {
            wtr.serialize(c)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Fuzzy opinion over simulated outcomes on a uniform α grid of `grid_size`
/// points.
pub fn build_fuzzy_opinion(values: &[f64], grid_size: usize) -> Result<EmpiricalFuzzyNumber> {
    if values.len() < 2 {
        return Err(Error::SampleTooSmall {
            needed: 2,
            got: values.len(),
        });
    }
    if grid_size < 2 {
        return Err(Error::DomainError(format!(
            "α grid needs at least 2 points, got {grid_size}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::DomainError("non-finite simulated value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let last = (grid_size - 1) as f64;
    let cuts = (0..grid_size)
        .map(|i| {
            let alpha = i as f64 / last;
            // keep the two orders symmetric: p and 1 − p from the same index
            let p = (i as f64 / last) / 2.0;
            let lower = quantile_type7(&sorted, p);
            let upper = quantile_type7(&sorted, 1.0 - p);
            AlphaCut {
                alpha,
                lower,
                upper,
            }
        })
        .collect();
    Ok(EmpiricalFuzzyNumber { cuts })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedKey;
    use crate::severity::SeverityModel;
    use proptest::prelude::*;

    fn one_to_five() -> EmpiricalFuzzyNumber {
        build_fuzzy_opinion(&[4.0, 1.0, 5.0, 3.0, 2.0], 101).unwrap()
    }

    #[test]
    fn small_sample_cuts() {
        let f = one_to_five();
        assert_eq!(f.core(), (3.0, 3.0));
        assert_eq!(f.support(), (1.0, 5.0));
        // type 7 at orders 0.25 / 0.75: h = 4p → 1 and 3 → values 2 and 4
        assert_eq!(f.alpha_cut(0.5).unwrap(), (2.0, 4.0));
    }

    #[test]
    fn constant_sample_is_crisp() {
        let f = build_fuzzy_opinion(&[7.5; 10], 11).unwrap();
        assert!(f.cuts().iter().all(|c| c.lower == 7.5 && c.upper == 7.5));
        assert_eq!(f.membership(7.5), 1.0);
        assert_eq!(f.membership(7.6), 0.0);
    }

    #[test]
    fn build_errors() {
        assert!(matches!(
            build_fuzzy_opinion(&[1.0], 11),
            Err(Error::SampleTooSmall { .. })
        ));
        assert!(build_fuzzy_opinion(&[1.0, 2.0], 1).is_err());
    }

    #[test]
    fn alpha_cut_interpolation() {
        let f = EmpiricalFuzzyNumber::from_cuts(vec![
            AlphaCut {
                alpha: 0.0,
                lower: 0.0,
                upper: 10.0,
            },
            AlphaCut {
                alpha: 0.5,
                lower: 2.0,
                upper: 8.0,
            },
            AlphaCut {
                alpha: 1.0,
                lower: 5.0,
                upper: 5.0,
            },
        ])
        .unwrap();
        assert_eq!(f.alpha_cut(0.25).unwrap(), (1.0, 9.0));
        assert_eq!(f.alpha_cut(0.5).unwrap(), (2.0, 8.0));
        assert_eq!(f.alpha_cut(1.0).unwrap(), (5.0, 5.0));
        assert!(f.alpha_cut(1.01).is_err());
        assert!(f.alpha_cut(-0.01).is_err());
    }

    #[test]
    fn membership_examples() {
        let f = one_to_five();
        assert_eq!(f.membership(3.0), 1.0);
        assert_eq!(f.membership(0.5), 0.0);
        assert_eq!(f.membership(5.5), 0.0);
        let (lo, _) = f.alpha_cut(0.5).unwrap();
        assert!((f.membership(lo) - 0.5).abs() <= 0.01);
        // left branch increases, right branch decreases
        let xs: Vec<f64> = (0..=100).map(|i| 1.0 + 0.04 * i as f64).collect();
        let mu: Vec<f64> = xs.iter().map(|&x| f.membership(x)).collect();
        for w in mu[..50].windows(2) {
            assert!(w[1] >= w[0]);
        }
        for w in mu[50..].windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn from_cuts_rejects_non_nested() {
        let bad = vec![
            AlphaCut {
                alpha: 0.0,
                lower: 1.0,
                upper: 2.0,
            },
            AlphaCut {
                alpha: 1.0,
                lower: 0.0,
                upper: 2.0,
            },
        ];
        assert!(EmpiricalFuzzyNumber::from_cuts(bad).is_err());
    }

    #[test]
    fn csv_export() {
        let mut buf = Vec::new();
        build_fuzzy_opinion(&[1.0, 2.0, 3.0], 3)
            .unwrap()
            .write_csv(&mut buf)
            .unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "alpha,lower,upper\n0.0,1.0,3.0\n0.5,1.5,2.5\n1.0,2.0,2.0\n"
        );
    }

    #[test]
    fn converges_to_true_quantiles() {
        let m = SeverityModel::lognormal(0.0, 0.25).unwrap();
        let xs = m.sample(100_000, &mut SeedKey::new(12).stream(0));
        let f = build_fuzzy_opinion(&xs, 21).unwrap();
        for c in f.cuts().iter().filter(|c| c.alpha > 0.0) {
            let lo = m.quantile(c.alpha / 2.0).unwrap();
            let hi = m.quantile(1.0 - c.alpha / 2.0).unwrap();
            assert!((c.lower - lo).abs() / lo < 0.01, "{c:?}");
            assert!((c.upper - hi).abs() / hi < 0.01, "{c:?}");
        }
    }

    proptest! {
        #[test]
        fn nested_with_membership_consistency(values in prop::collection::vec(-1e6f64..1e6, 2..80), grid in 2usize..60) {
            let f = build_fuzzy_opinion(&values, grid).unwrap();
            for w in f.cuts().windows(2) {
                prop_assert!(w[1].lower >= w[0].lower && w[1].upper <= w[0].upper);
            }
            prop_assert!(f.cuts().iter().all(|c| c.lower <= c.upper));
            let step = 1.0 / (grid - 1) as f64;
            for c in f.cuts() {
                prop_assert!(f.membership(c.lower) >= c.alpha - step - 1e-12);
                prop_assert!(f.membership(c.upper) >= c.alpha - step - 1e-12);
            }
        }
    }
}
