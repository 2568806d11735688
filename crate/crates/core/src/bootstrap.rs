//! Empirical and Gaussian-multiplier bootstrap for the max statistic
//! `M_n = max_j |n^{-1/2} Σ_i X_ij|`, quantiles, simultaneous confidence
//! intervals and the test of a zero mean vector.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, CholeskyFactor};
use crate::sampling::GaussianSampler;
use crate::seed::{derive_seed, rng_from_seed, Rng};
use crate::vectors::{sample_covariance, SampleMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum BootstrapMethod {
    Empirical,
    Multiplier,
}

/// Sorted bootstrap replicates of the max statistic and the selected quantile.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BootstrapSummary {
    pub method: BootstrapMethod,
    #[cfg_attr(feature = "serde", serde(rename = "B"))]
    pub b: usize,
    pub max_stats: Vec<f64>,
    pub alpha: f64,
    pub q_hat: f64,
}

impl BootstrapSummary {
    /// Sorts `max_stats` and selects `q̂_{1-α}`.
    pub fn new(method: BootstrapMethod, mut max_stats: Vec<f64>, alpha: f64) -> Result<Self> {
        if max_stats.iter().any(|v| v.is_nan()) {
            return Err(Error::invalid("max_stats", "contains NaN"));
        }
        max_stats.sort_by(f64::total_cmp);
        let q_hat = bootstrap_quantile(&max_stats, alpha)?;
        Ok(Self {
            method,
            b: max_stats.len(),
            max_stats,
            alpha,
            q_hat,
        })
    }

    /// Same replicates at another level.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        Ok(Self {
            alpha,
            q_hat: bootstrap_quantile(&self.max_stats, alpha)?,
            ..self.clone()
        })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid("alpha", format!("{alpha} not in (0, 1)")))
    }
}

/// `inf{t : #{b : M*_b ≤ t} / B ≥ 1 - α}` over ascending `sorted`.
///
/// The infimum is attained at an order statistic; the search runs over
/// order statistics with the same floating-point predicate, so ties and
/// rounding of `(1 - α) B` cannot shift it.
pub fn bootstrap_quantile(sorted: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if sorted.is_empty() {
        return Err(Error::invalid("max_stats", "no replicates"));
    }
    let b = sorted.len() as f64;
    let level = 1.0 - alpha;
    let covered = |i: usize| {
        let v = sorted[i];
        let count = sorted.partition_point(|&x| x <= v);
        count as f64 / b >= level
    };
    // `covered` is monotone in the index and true at the last one
    let (mut lo, mut hi) = (0, sorted.len() - 1);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if covered(mid) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(sorted[lo])
}

/// `max_j |n^{-1/2} Σ_i X_ij|`.
pub fn max_statistic(x: &SampleMatrix) -> f64 {
    max_statistic_centered(x, &vec![0.0; x.p()]).unwrap_or(0.0)
}

/// `max_j |n^{-1/2} Σ_i (X_ij - μ_j)| = √n max_j |X̄_j - μ_j|`.
pub fn max_statistic_centered(x: &SampleMatrix, mu: &[f64]) -> Result<f64> {
    if mu.len() != x.p() {
        return Err(Error::DimensionMismatch {
            expected: x.p(),
            found: mu.len(),
        });
    }
    let root = libm::sqrt(x.n() as f64);
    let mut sums = vec![0.0; x.p()];
    for i in 0..x.n() {
        sums.iter_mut().zip(x.row(i)).for_each(|(s, v)| *s += v);
    }
    Ok(sums
        .iter()
        .zip(mu)
        .map(|(s, m)| ((s - x.n() as f64 * m) / root).abs())
        .fold(0.0, f64::max))
}

/// Generator of replicate `b`.
pub fn replicate_rng(seed: u64, b: usize) -> Rng {
    rng_from_seed(derive_seed(seed, b as u64))
}

/// One empirical-bootstrap replicate: draw `n` rows with replacement and
/// return `max_j |n^{-1/2} Σ_i (X*_ij - X̄_j)|`. `sums` is scratch of length `p`.
#[inline]
pub fn empirical_replicate(
    x: &SampleMatrix,
    means: &[f64],
    rng: &mut Rng,
    sums: &mut [f64],
) -> f64 {
    let n = x.n();
    sums.iter_mut().for_each(|s| *s = 0.0);
    for _ in 0..n {
        let i = rng.random_range(0..n);
        sums.iter_mut().zip(x.row(i)).for_each(|(s, v)| *s += v);
    }
    let root = libm::sqrt(n as f64);
    sums.iter()
        .zip(means)
        .map(|(s, m)| ((s - n as f64 * m) / root).abs())
        .fold(0.0, f64::max)
}

/// One multiplier replicate: `max_j |Z_j|` for `Z ~ N(0, Σ̂)`, which has the
/// law of `n^{-1/2} Σ_i X^⋆_i` for i.i.d. `X^⋆_i ~ N(0, Σ̂)`.
#[inline]
pub fn multiplier_replicate(
    factor: &CholeskyFactor,
    rng: &mut Rng,
    z: &mut [f64],
    out: &mut [f64],
) -> f64 {
    GaussianSampler::standard_into(rng, z);
    factor.lower.lower_mul_vec_into(z, out);
    out.iter().fold(0.0, |m, v| m.max(v.abs()))
}

fn check_b(b: usize) -> Result<()> {
    if b == 0 {
        return Err(Error::invalid("B", "must be at least 1"));
    }
    Ok(())
}

/// Empirical bootstrap with `b` replicates; replicate `i` uses
/// [`replicate_rng`]`(seed, i)`.
pub fn empirical_resample(
    x: &SampleMatrix,
    b: usize,
    seed: u64,
    alpha: f64,
) -> Result<BootstrapSummary> {
    check_b(b)?;
    check_alpha(alpha)?;
    let means = x.column_means();
    let mut sums = vec![0.0; x.p()];
    let stats = (0..b)
        .map(|i| empirical_replicate(x, &means, &mut replicate_rng(seed, i), &mut sums))
        .collect();
    BootstrapSummary::new(BootstrapMethod::Empirical, stats, alpha)
}

/// Cholesky factor of `Σ̂` (jittered when singular).
pub fn multiplier_factor(x: &SampleMatrix) -> Result<CholeskyFactor> {
    cholesky_lower(&sample_covariance(x))
}

/// Gaussian-multiplier bootstrap with `b` replicates.
pub fn multiplier_sample(
    x: &SampleMatrix,
    b: usize,
    seed: u64,
    alpha: f64,
) -> Result<BootstrapSummary> {
    check_b(b)?;
    check_alpha(alpha)?;
    let factor = multiplier_factor(x)?;
    let p = x.p();
    let (mut z, mut out) = (vec![0.0; p], vec![0.0; p]);
    let stats = (0..b)
        .map(|i| multiplier_replicate(&factor, &mut replicate_rng(seed, i), &mut z, &mut out))
        .collect();
    BootstrapSummary::new(BootstrapMethod::Multiplier, stats, alpha)
}

/// Dispatches on `method`.
pub fn bootstrap(
    x: &SampleMatrix,
    method: BootstrapMethod,
    b: usize,
    seed: u64,
    alpha: f64,
) -> Result<BootstrapSummary> {
    match method {
        BootstrapMethod::Empirical => empirical_resample(x, b, seed, alpha),
        BootstrapMethod::Multiplier => multiplier_sample(x, b, seed, alpha),
    }
}

/// `I_j = [X̄_j - q̂/√n, X̄_j + q̂/√n]`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SimultaneousIntervals {
    pub centers: Vec<f64>,
    pub half_width: f64,
    pub alpha: f64,
}

impl SimultaneousIntervals {
    pub fn lower(&self, j: usize) -> f64 {
        self.centers[j] - self.half_width
    }

    pub fn upper(&self, j: usize) -> f64 {
        self.centers[j] + self.half_width
    }

    /// Whether every `μ_j` lies in `I_j`.
    pub fn covers(&self, mu: &[f64]) -> bool {
        mu.iter()
            .enumerate()
            .all(|(j, &m)| self.lower(j) <= m && m <= self.upper(j))
    }
}

pub fn simultaneous_cis(x: &SampleMatrix, summary: &BootstrapSummary) -> SimultaneousIntervals {
    SimultaneousIntervals {
        centers: x.column_means(),
        half_width: summary.q_hat / libm::sqrt(x.n() as f64),
        alpha: summary.alpha,
    }
}

/// Rejects `μ = 0` when some interval excludes zero.
pub fn mean_test(x: &SampleMatrix, summary: &BootstrapSummary) -> bool {
    !simultaneous_cis(x, summary).covers(&vec![0.0; x.p()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::special::norm_quantile;
    use crate::vectors::{sample_population, CorrelationModel, EntryLaw, PopulationSpec};

    fn sm(rows: &[&[f64]]) -> SampleMatrix {
        SampleMatrix::from_matrix(Matrix::from_rows(rows).unwrap()).unwrap()
    }

    #[test]
    fn max_statistic_examples() {
        assert_eq!(max_statistic(&sm(&[&[0.0, 0.0], &[0.0, 0.0]])), 0.0);
        assert_eq!(max_statistic(&sm(&[&[3.0, -4.0]])), 4.0);
        let x = sm(&[&[1.0, -1.0], &[1.0, -2.0], &[0.0, -3.0], &[0.0, 0.0]]);
        assert_eq!(max_statistic(&x), 3.0);
    }

    #[test]
    fn quantile_examples() {
        let s: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        assert_eq!(bootstrap_quantile(&s, 0.1).unwrap(), 9.0);
        assert_eq!(bootstrap_quantile(&[2.5; 7], 0.37).unwrap(), 2.5);
        for a in [0.01, 0.5, 0.99] {
            assert_eq!(bootstrap_quantile(&[4.0], a).unwrap(), 4.0);
        }
        assert!(bootstrap_quantile(&s, 0.0).is_err());
        assert!(bootstrap_quantile(&[], 0.1).is_err());
    }

    #[test]
    fn degenerate_resamples() {
        let one = sm(&[&[1.5, -2.0]]);
        let e = empirical_resample(&one, 50, 3, 0.1).unwrap();
        assert!(e.max_stats.iter().all(|&v| v == 0.0));
        assert_eq!(e.q_hat, 0.0);
        let same = sm(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]);
        assert!(empirical_resample(&same, 20, 1, 0.1)
            .unwrap()
            .max_stats
            .iter()
            .all(|&v| v == 0.0));
        assert!(multiplier_sample(&same, 20, 1, 0.1)
            .unwrap()
            .max_stats
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn resamples_are_deterministic() {
        let spec =
            PopulationSpec::new(3, EntryLaw::Rademacher, CorrelationModel::Ar1(0.5), 2).unwrap();
        let x = sample_population(&spec, 40, 2).unwrap();
        for method in [BootstrapMethod::Empirical, BootstrapMethod::Multiplier] {
            let a = bootstrap(&x, method, 100, 9, 0.1).unwrap();
            let b = bootstrap(&x, method, 100, 9, 0.1).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn multiplier_quantiles_of_known_covariance() {
        // data whose covariance (divisor n) is exactly the identity
        let x = sm(&[&[1.0, 1.0], &[-1.0, 1.0], &[1.0, -1.0], &[-1.0, -1.0]]);
        let s = multiplier_sample(&x, 200_000, 5, 0.1).unwrap();
        // (2Φ(t) - 1)² = 0.9
        let t = norm_quantile(0.5 * (1.0 + libm::sqrt(0.9)));
        assert!((t - 1.949).abs() < 1e-3);
        assert!((s.q_hat - t).abs() < 0.015, "{}", s.q_hat);

        let x1 = sm(&[&[1.0], &[-1.0]]);
        let s = multiplier_sample(&x1, 200_000, 6, 0.1).unwrap();
        assert!((s.q_hat - 1.644_853_6).abs() < 0.015, "{}", s.q_hat);
    }

    #[test]
    fn interval_examples() {
        let x = sm(&[&[0.0], &[1.0], &[0.0], &[1.0]]);
        let s = BootstrapSummary::new(BootstrapMethod::Empirical, vec![1.0], 0.1).unwrap();
        let ci = simultaneous_cis(&x, &s);
        assert_eq!((ci.lower(0), ci.upper(0)), (0.0, 1.0));
        let zero = BootstrapSummary::new(BootstrapMethod::Empirical, vec![0.0], 0.1).unwrap();
        let ci = simultaneous_cis(&x, &zero);
        assert_eq!((ci.lower(0), ci.upper(0)), (0.5, 0.5));
    }

    #[test]
    fn mean_test_examples() {
        let zeros = sm(&[&[0.0, 0.0], &[0.0, 0.0]]);
        let s = multiplier_sample(&zeros, 10, 1, 0.1).unwrap();
        assert!(!mean_test(&zeros, &s));
        let tens = sm(&[&[10.0, 10.0], &[10.0, 10.0]]);
        let tiny = BootstrapSummary::new(BootstrapMethod::Multiplier, vec![1e-3], 0.1).unwrap();
        assert!(mean_test(&tens, &tiny));
    }
}
