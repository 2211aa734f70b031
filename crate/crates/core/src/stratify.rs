//! Strata construction on a scalar post-stratification factor.
//!
//! The root-cumulative rule places cuts so that every stratum holds an equal
//! share of the integral of the square root of a kernel density estimate.
//! Quantile and class rules are provided for comparison.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Number of points in the density grid.
pub const GRID_POINTS: usize = 512;
/// Grid padding beyond the sample range, in bandwidths.
pub const GRID_PADDING: f64 = 3.0;
/// Upper limit on the number of classes accepted by [`class_boundaries`].
pub const MAX_CLASSES: usize = 50;

// exp(-0.5 u^2) below this is dropped; reached near |u| = 9.3.
const KERNEL_CUTOFF: f64 = 1e-19;

/// Gaussian kernel density estimate evaluated on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

impl KdeModel {
    pub fn spacing(&self) -> f64 {
        self.grid[1] - self.grid[0]
    }

    /// Trapezoidal integral of the density over the grid.
    pub fn mass(&self) -> f64 {
        trapezoid_cumulative(&self.grid, &self.density)
            .last()
            .copied()
            .unwrap_or(0.0)
    }
}

/// Sample standard deviation (`n - 1` denominator).
pub(crate) fn sample_sd(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// Linear-interpolation quantile of sorted data (`h = (n - 1) p`).
pub(crate) fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Silverman's rule: `0.9 min(sd, IQR / 1.34) n^(-1/5)`, using the standard
/// deviation alone when the IQR is zero.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let sorted = sorted_copy(values);
    let sd = sample_sd(values);
    let iqr = sorted_quantile(&sorted, 0.75) - sorted_quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (values.len() as f64).powf(-0.2)
}

fn trapezoid_cumulative(grid: &[f64], f: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(grid.len());
    let mut acc = 0.0;
    out.push(acc);
    for j in 1..grid.len() {
        acc += 0.5 * (f[j] + f[j - 1]) * (grid[j] - grid[j - 1]);
        out.push(acc);
    }
    out
}

/// Fits a Gaussian KDE with Silverman bandwidth on a [`GRID_POINTS`]-point
/// grid spanning `[min - 3h, max + 3h]`.
pub fn kde_fit(values: &[f64]) -> Result<KdeModel> {
    if values.len() < 2 {
        return Err(Error::DegenerateSample);
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi.is_nan() || lo.is_nan() || hi <= lo {
        return Err(Error::DegenerateSample);
    }
    let h = silverman_bandwidth(values);
    if h.is_nan() || h <= 0.0 {
        return Err(Error::DegenerateSample);
    }
    let start = lo - GRID_PADDING * h;
    let step = (hi - lo + 2.0 * GRID_PADDING * h) / (GRID_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..GRID_POINTS).map(|j| start + j as f64 * step).collect();

    let mut acc = vec![0.0; GRID_POINTS];
    let delta = step / h;
    let c = (-delta * delta).exp();
    for &x in values {
        // Walk outward from the nearest grid point. Along a uniform grid,
        // consecutive kernel values have ratios that themselves shrink by a
        // constant factor, so each step costs two multiplications.
        let j0 = (((x - start) / step).round() as usize).min(GRID_POINTS - 1);
        let u0 = (grid[j0] - x) / h;
        let k0 = (-0.5 * u0 * u0).exp();
        acc[j0] += k0;

        let (mut k, mut r) = (k0, (-u0 * delta - 0.5 * delta * delta).exp());
        for slot in acc.iter_mut().skip(j0 + 1) {
            k *= r;
            r *= c;
            if k < KERNEL_CUTOFF {
                break;
            }
            *slot += k;
        }
        let (mut k, mut r) = (k0, (u0 * delta - 0.5 * delta * delta).exp());
        for slot in acc[..j0].iter_mut().rev() {
            k *= r;
            r *= c;
            if k < KERNEL_CUTOFF {
                break;
            }
            *slot += k;
        }
    }
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * PI).sqrt());
    let density = acc.into_iter().map(|s| s * norm).collect();
    Ok(KdeModel {
        grid,
        density,
        bandwidth: h,
    })
}

/// Strictly increasing cut points `c_0 = -inf < c_1 < ... < c_K = +inf`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrataBoundaries {
    cuts: Vec<f64>,
}

impl StrataBoundaries {
    /// Builds boundaries from interior cuts, which must be finite and
    /// strictly increasing.
    pub fn from_interior(interior: &[f64]) -> Result<Self> {
        if interior.iter().any(|c| !c.is_finite()) || interior.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::TooFewDistinctValues {
                strata: interior.len() + 1,
            });
        }
        let mut cuts = Vec::with_capacity(interior.len() + 2);
        cuts.push(f64::NEG_INFINITY);
        cuts.extend_from_slice(interior);
        cuts.push(f64::INFINITY);
        Ok(StrataBoundaries { cuts })
    }

    pub fn single() -> Self {
        StrataBoundaries {
            cuts: vec![f64::NEG_INFINITY, f64::INFINITY],
        }
    }

    /// Number of strata.
    pub fn k(&self) -> usize {
        self.cuts.len() - 1
    }

    /// All cuts including the infinite ends.
    pub fn cuts(&self) -> &[f64] {
        &self.cuts
    }

    pub fn interior(&self) -> &[f64] {
        &self.cuts[1..self.cuts.len() - 1]
    }

    /// Zero-based stratum of a value: `k` such that `value` lies in
    /// `(c_k, c_{k+1}]`.
    pub fn locate(&self, value: f64) -> usize {
        self.interior().partition_point(|&c| c < value)
    }

    /// Merges stratum `k` with stratum `k + 1` by dropping the cut between them.
    pub fn merge_with_next(&mut self, k: usize) {
        assert!(k + 1 < self.k(), "no stratum after {k}");
        self.cuts.remove(k + 1);
    }
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        Err(Error::InvalidStrataCount(k))
    } else {
        Ok(())
    }
}

/// Cuts that split the integral of `sqrt(density)` into `k` equal parts.
pub fn root_cum_boundaries(kde: &KdeModel, k: usize) -> Result<StrataBoundaries> {
    check_k(k)?;
    let root: Vec<f64> = kde.density.iter().map(|d| d.sqrt()).collect();
    let cum = trapezoid_cumulative(&kde.grid, &root);
    let total = cum[cum.len() - 1];
    let mut interior = Vec::with_capacity(k - 1);
    for i in 1..k {
        let target = total * i as f64 / k as f64;
        let j = cum.partition_point(|&r| r < target).clamp(1, cum.len() - 1);
        let (r0, r1) = (cum[j - 1], cum[j]);
        let frac = if r1 > r0 {
            (target - r0) / (r1 - r0)
        } else {
            0.0
        };
        interior.push(kde.grid[j - 1] + frac * (kde.grid[j] - kde.grid[j - 1]));
    }
    StrataBoundaries::from_interior(&interior)
}

/// Cuts at the `i / k` empirical quantiles, `i = 1..k-1`.
pub fn quantile_boundaries(values: &[f64], k: usize) -> Result<StrataBoundaries> {
    check_k(k)?;
    if k == 1 {
        return Ok(StrataBoundaries::single());
    }
    if values.is_empty() {
        return Err(Error::TooFewDistinctValues { strata: k });
    }
    let sorted = sorted_copy(values);
    let interior: Vec<f64> = (1..k)
        .map(|i| sorted_quantile(&sorted, i as f64 / k as f64))
        .collect();
    StrataBoundaries::from_interior(&interior)
        .map_err(|_| Error::TooFewDistinctValues { strata: k })
}

/// One stratum per distinct value, cut at midpoints between neighbours.
pub fn class_boundaries(values: &[f64]) -> Result<StrataBoundaries> {
    let mut distinct = sorted_copy(values);
    distinct.dedup();
    if distinct.len() > MAX_CLASSES {
        return Err(Error::TooManyClasses {
            count: distinct.len(),
            limit: MAX_CLASSES,
        });
    }
    let interior: Vec<f64> = distinct.windows(2).map(|p| 0.5 * (p[0] + p[1])).collect();
    StrataBoundaries::from_interior(&interior)
}

/// Zero-based stratum labels with per-stratum arm counts.
#[derive(Debug, Clone, PartialEq)]
pub struct StrataAssignment {
    pub labels: Vec<usize>,
    /// `[n_k0, n_k1]` for each stratum.
    pub counts: Vec<[usize; 2]>,
}

impl StrataAssignment {
    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn n(&self, k: usize) -> usize {
        self.counts[k][0] + self.counts[k][1]
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Labels each unit by the interval `(c_{k-1}, c_k]` containing its factor.
pub fn assign(boundaries: &StrataBoundaries, psf: &[f64], w: &[u8]) -> StrataAssignment {
    debug_assert_eq!(psf.len(), w.len());
    let mut counts = vec![[0usize; 2]; boundaries.k()];
    let labels = psf
        .iter()
        .zip(w)
        .map(|(&v, &t)| {
            let k = boundaries.locate(v);
            counts[k][t as usize] += 1;
            k
        })
        .collect();
    StrataAssignment { labels, counts }
}


#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_sample(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    /// Direct kernel sum at every grid point.
    fn direct_density(values: &[f64], grid: &[f64], h: f64) -> Vec<f64> {
        grid.iter()
            .map(|&g| {
                values
                    .iter()
                    .map(|&x| (-0.5 * ((g - x) / h).powi(2)).exp())
                    .sum::<f64>()
                    / (values.len() as f64 * h * (2.0 * PI).sqrt())
            })
            .collect()
    }

    #[test]
    fn kde_matches_direct_evaluation() {
        for (n, seed) in [(50, 1), (400, 2), (1000, 3)] {
            let v = normal_sample(n, seed);
            let kde = kde_fit(&v).unwrap();
            let direct = direct_density(&v, &kde.grid, kde.bandwidth);
            let peak = direct.iter().cloned().fold(0.0, f64::max);
            for (a, b) in kde.density.iter().zip(&direct) {
                assert!((a - b).abs() <= 1e-12 * peak, "{a} vs {b}");
            }
        }
        let toy = fixtures::toy_classes();
        let kde = kde_fit(&toy).unwrap();
        let direct = direct_density(&toy, &kde.grid, kde.bandwidth);
        for (a, b) in kde.density.iter().zip(&direct) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn kde_standard_normal_peak() {
        let v = normal_sample(1000, 11);
        let kde = kde_fit(&v).unwrap();
        let j = (0..GRID_POINTS)
            .min_by(|&a, &b| kde.grid[a].abs().total_cmp(&kde.grid[b].abs()))
            .unwrap();
        let analytic = 1.0 / (2.0 * PI).sqrt();
        assert!(
            (kde.density[j] - analytic).abs() < 0.05,
            "{}",
            kde.density[j]
        );
        assert!((kde.mass() - 1.0).abs() < 1e-3);
        assert_eq!(kde.grid.len(), GRID_POINTS);
    }

    #[test]
    fn kde_rejects_constant_sample() {
        assert_eq!(kde_fit(&[5.0; 10]), Err(Error::DegenerateSample));
        assert_eq!(kde_fit(&[5.0]), Err(Error::DegenerateSample));
    }

    #[test]
    fn silverman_falls_back_to_sd_without_iqr() {
        // More than half the mass on one value gives a zero IQR.
        let v = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 2.0, 3.0];
        let h = silverman_bandwidth(&v);
        assert!((h - 0.9 * sample_sd(&v) * 10f64.powf(-0.2)).abs() < 1e-15);
    }

    #[test]
    fn single_stratum() {
        let kde = kde_fit(&normal_sample(100, 4)).unwrap();
        let b = root_cum_boundaries(&kde, 1).unwrap();
        assert_eq!(b.cuts(), &[f64::NEG_INFINITY, f64::INFINITY]);
        assert_eq!(
            root_cum_boundaries(&kde, 0),
            Err(Error::InvalidStrataCount(0))
        );
    }

    #[test]
    fn symmetric_density_splits_at_median() {
        // Symmetric sample: the density is symmetric about 0.
        let half = normal_sample(300, 5);
        let v: Vec<f64> = half.iter().flat_map(|&x| [x, -x]).collect();
        let kde = kde_fit(&v).unwrap();
        let b = root_cum_boundaries(&kde, 2).unwrap();
        assert!(
            b.interior()[0].abs() <= kde.spacing(),
            "{}",
            b.interior()[0]
        );

        // Independent check: Simpson integration of sqrt(f) up to the cut
        // recovers half the total.
        let f = |x: f64| direct_density(&v, &[x], kde.bandwidth)[0].sqrt();
        let simpson = |a: f64, b: f64, n: usize| {
            let h = (b - a) / n as f64;
            (0..=n)
                .map(|i| {
                    let wgt = if i == 0 || i == n {
                        1.0
                    } else if i % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    wgt * f(a + i as f64 * h)
                })
                .sum::<f64>()
                * h
                / 3.0
        };
        let (g0, g1) = (kde.grid[0], kde.grid[GRID_POINTS - 1]);
        let left = simpson(g0, b.interior()[0], 2000);
        let total = simpson(g0, g1, 4000);
        assert!((left / total - 0.5).abs() < 1e-3);
    }

    #[test]
    fn toy_classes_split_cleanly() {
        let v = fixtures::toy_classes();
        let kde = kde_fit(&v).unwrap();
        let b = root_cum_boundaries(&kde, 5).unwrap();
        let w = vec![0u8; v.len()];
        let a = assign(&b, &v, &w);
        let n: Vec<usize> = (0..5).map(|k| a.n(k)).collect();
        assert_eq!(n, vec![30, 80, 20, 40, 30]);
        // Each stratum holds exactly one class.
        for k in 0..5 {
            let vals: Vec<f64> = v
                .iter()
                .zip(&a.labels)
                .filter(|(_, &l)| l == k)
                .map(|(x, _)| *x)
                .collect();
            assert!(vals.iter().all(|&x| x == vals[0]));
        }
        // Equal-quantile cuts collide on this sample.
        assert_eq!(
            quantile_boundaries(&v, 5),
            Err(Error::TooFewDistinctValues { strata: 5 })
        );
    }

    #[test]
    fn quantile_examples() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let b = quantile_boundaries(&v, 4).unwrap();
        let want = [25.75, 50.5, 75.25];
        for (a, b) in b.interior().iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(quantile_boundaries(&v, 1).unwrap().k(), 1);
        assert_eq!(
            quantile_boundaries(&[3.0; 20], 3),
            Err(Error::TooFewDistinctValues { strata: 3 })
        );
    }

    #[test]
    fn class_examples() {
        let s = 2f64.sqrt();
        let v = [-s, 0.0, s, 0.0, -s, s, s];
        let b = class_boundaries(&v).unwrap();
        assert_eq!(b.k(), 3);
        assert!((b.interior()[0] + s / 2.0).abs() < 1e-15);
        assert!((b.interior()[1] - s / 2.0).abs() < 1e-15);
        assert_eq!(class_boundaries(&[4.0, 4.0]).unwrap().k(), 1);
        let many: Vec<f64> = (0..200).map(f64::from).collect();
        assert_eq!(
            class_boundaries(&many),
            Err(Error::TooManyClasses {
                count: 200,
                limit: MAX_CLASSES
            })
        );
    }

    #[test]
    fn assign_uses_right_closed_intervals() {
        let b = StrataBoundaries::from_interior(&[0.0]).unwrap();
        let a = assign(&b, &[-1.0, 0.0, 1.0], &[0, 1, 1]);
        assert_eq!(a.labels, vec![0, 0, 1]);
        assert_eq!(a.counts, vec![[1, 1], [0, 1]]);
        let one = assign(&StrataBoundaries::single(), &[3.0, -7.0, 1e300], &[0, 1, 0]);
        assert_eq!(one.labels, vec![0, 0, 0]);
        assert_eq!(one.n(0), 3);
    }

    #[test]
    fn merge_drops_cut() {
        let mut b = StrataBoundaries::from_interior(&[1.0, 2.0, 3.0]).unwrap();
        b.merge_with_next(1);
        assert_eq!(b.interior(), &[1.0, 3.0]);
        assert!(StrataBoundaries::from_interior(&[1.0, 1.0]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn assign_partitions_units(
                psf in proptest::collection::vec(-10.0f64..10.0, 1..80),
                mut cuts in proptest::collection::vec(-10.0f64..10.0, 0..6),
            ) {
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
                let b = StrataBoundaries::from_interior(&cuts).unwrap();
                let w: Vec<u8> = (0..psf.len()).map(|i| (i % 2) as u8).collect();
                let a = assign(&b, &psf, &w);
                prop_assert_eq!((0..a.k()).map(|k| a.n(k)).sum::<usize>(), psf.len());
                for (v, &l) in psf.iter().zip(&a.labels) {
                    prop_assert!(b.cuts()[l] < *v && *v <= b.cuts()[l + 1]);
                }
            }

            #[test]
            fn root_cum_cuts_monotone_and_nested(seed in 0u64..1000, n in 20usize..300, k in 1usize..7) {
                let v = normal_sample(n, seed);
                let kde = kde_fit(&v).unwrap();
                let b = root_cum_boundaries(&kde, k).unwrap();
                prop_assert_eq!(b.k(), k);
                for c in b.interior() {
                    prop_assert!(*c >= kde.grid[0] && *c <= kde.grid[GRID_POINTS - 1]);
                }
                let fine = root_cum_boundaries(&kde, 2 * k).unwrap();
                for (i, c) in b.interior().iter().enumerate() {
                    let partner = fine.interior()[2 * (i + 1) - 1];
                    prop_assert!((c - partner).abs() <= kde.spacing());
                }
            }

            #[test]
            fn kde_mass_is_one(seed in 0u64..1000, n in 2usize..500) {
                let v = normal_sample(n, seed);
                let kde = kde_fit(&v).unwrap();
                prop_assert!((kde.mass() - 1.0).abs() < 1e-3);
                prop_assert!(kde.density.iter().all(|d| *d >= 0.0));
            }

            #[test]
            fn quantile_strata_are_balanced(seed in 0u64..1000, n in 10usize..400, k in 1usize..8) {
                let v = normal_sample(n, seed);
                let b = quantile_boundaries(&v, k).unwrap();
                let a = assign(&b, &v, &vec![0; n]);
                for s in 0..k {
                    prop_assert!(a.n(s) + 1 >= n / k && a.n(s) <= n.div_ceil(k) + 1);
                }
            }
        }
    }
}
