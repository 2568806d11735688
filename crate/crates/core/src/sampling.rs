//! Samplers for normalized partial sums `n^{-1/2} (X_1 + ... + X_m)` and for
//! general Gaussian vectors.
//!
//! Because rows are `L ξ_i`, a partial sum equals `L` applied to the
//! coordinatewise sums of the entries. Gaussian and two-point entry laws have
//! exact laws for those sums (scaled normal, affine binomial), so a sum over
//! `m` rows costs `p` draws rather than `m p`.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Binomial, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, CholeskyFactor, Matrix};
use crate::seed::Rng;
use crate::special::{binomial_pmf, norm_quantile};
use crate::vectors::{EntryLaw, PopulationSpec};

/// Uniform draw strictly inside `(0, 1)`.
#[inline]
pub fn open_unit(rng: &mut Rng) -> f64 {
    ((rng.random::<u64>() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone)]
enum EntrySum {
    Gaussian,
    TwoPoint {
        hi: f64,
        lo: f64,
        binomial: Binomial,
        /// cumulative distribution of the success count, for quantile coupling
        cdf: Vec<f64>,
    },
    Generic,
}

/// Draws `S_{1:m} = n^{-1/2} Σ_{i ≤ m} X_i` for a population.
#[derive(Debug, Clone)]
pub struct SumSampler {
    law: EntryLaw,
    factor: CholeskyFactor,
    p: usize,
    terms: usize,
    scale: f64,
    kind: EntrySum,
}

impl SumSampler {
    /// `terms` rows, normalized by `sqrt(normalizer)`.
    pub fn new(spec: &PopulationSpec, terms: usize, normalizer: usize) -> Result<Self> {
        spec.validate()?;
        Self::with_factor(spec.law, spec.mixing()?, terms, normalizer)
    }

    pub fn with_factor(
        law: EntryLaw,
        factor: CholeskyFactor,
        terms: usize,
        normalizer: usize,
    ) -> Result<Self> {
        if normalizer == 0 {
            return Err(Error::invalid("normalizer", "must be positive"));
        }
        let kind = match law.two_point_support() {
            Some((hi, lo, pi)) => {
                let m = terms as u64;
                let binomial = Binomial::new(m, pi)
                    .map_err(|_| Error::invalid("pi", "invalid binomial parameters"))?;
                let mut acc = 0.0;
                let cdf = (0..=m)
                    .map(|k| {
                        acc += binomial_pmf(m, k, pi);
                        acc
                    })
                    .collect();
                EntrySum::TwoPoint {
                    hi,
                    lo,
                    binomial,
                    cdf,
                }
            }
            None if law == EntryLaw::StandardNormal => EntrySum::Gaussian,
            None => EntrySum::Generic,
        };
        Ok(Self {
            law,
            p: factor.lower.rows(),
            factor,
            terms,
            scale: 1.0 / libm::sqrt(normalizer as f64),
            kind,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    /// Whether [`Self::sample_coupled_into`] produces a genuine quantile coupling.
    pub fn supports_coupling(&self) -> bool {
        !matches!(self.kind, EntrySum::Generic)
    }

    #[inline]
    fn two_point_value(&self, k: u64, hi: f64, lo: f64) -> f64 {
        let m = self.terms as u64;
        k as f64 * hi + (m - k) as f64 * lo
    }

    /// Raw (unmixed, unnormalized) coordinate sums of the entries.
    #[inline]
    pub fn entry_sums_into(&self, rng: &mut Rng, raw: &mut [f64]) {
        let m = self.terms;
        match &self.kind {
            EntrySum::Gaussian => {
                let s = libm::sqrt(m as f64);
                for v in raw.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *v = s * z;
                }
            }
            EntrySum::TwoPoint {
                hi, lo, binomial, ..
            } => {
                for v in raw.iter_mut() {
                    let k = if m == 0 { 0 } else { binomial.sample(rng) };
                    *v = self.two_point_value(k, *hi, *lo);
                }
            }
            EntrySum::Generic => {
                for v in raw.iter_mut() {
                    *v = (0..m).map(|_| self.law.sample(rng)).sum();
                }
            }
        }
    }

    /// One draw of the normalized, mixed partial sum.
    #[inline]
    pub fn sample_into(&self, rng: &mut Rng, raw: &mut [f64], out: &mut [f64]) {
        self.entry_sums_into(rng, raw);
        raw.iter_mut().for_each(|v| *v *= self.scale);
        self.factor.lower.lower_mul_vec_into(raw, out);
    }

    /// Joint draw of this partial sum and its Gaussian counterpart (same
    /// correlation, same number of terms) through a shared uniform per
    /// coordinate. Each marginal is exact; only the dependence between the
    /// two outputs is chosen, which lowers the variance of probability
    /// differences. Laws without a tractable sum CDF fall back to
    /// independent draws.
    #[inline]
    pub fn sample_coupled_into(
        &self,
        rng: &mut Rng,
        raw_x: &mut [f64],
        raw_y: &mut [f64],
        out_x: &mut [f64],
        out_y: &mut [f64],
    ) {
        let root_m = libm::sqrt(self.terms as f64);
        match &self.kind {
            EntrySum::Gaussian => {
                for v in raw_x.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *v = root_m * z;
                }
                raw_y.copy_from_slice(raw_x);
            }
            EntrySum::TwoPoint { hi, lo, cdf, .. } => {
                let m = self.terms;
                for (vx, vy) in raw_x.iter_mut().zip(raw_y.iter_mut()) {
                    let u = open_unit(rng);
                    let k = cdf.partition_point(|&c| c < u).min(m) as u64;
                    *vx = self.two_point_value(k, *hi, *lo);
                    *vy = root_m * norm_quantile(u);
                }
            }
            EntrySum::Generic => {
                self.entry_sums_into(rng, raw_x);
                for v in raw_y.iter_mut() {
                    let z: f64 = StandardNormal.sample(rng);
                    *v = root_m * z;
                }
            }
        }
        raw_x.iter_mut().for_each(|v| *v *= self.scale);
        raw_y.iter_mut().for_each(|v| *v *= self.scale);
        self.factor.lower.lower_mul_vec_into(raw_x, out_x);
        self.factor.lower.lower_mul_vec_into(raw_y, out_y);
    }
}

/// Sampler for `N(0, Σ)` through a (possibly jittered) Cholesky factor.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    factor: CholeskyFactor,
}

impl GaussianSampler {
    pub fn new(cov: &Matrix) -> Result<Self> {
        Ok(Self {
            factor: cholesky_lower(cov)?,
        })
    }

    pub fn p(&self) -> usize {
        self.factor.lower.rows()
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    #[inline]
    pub fn standard_into(rng: &mut Rng, z: &mut [f64]) {
        for v in z.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
    }

    /// `out = L z`, for caller-provided standard normal `z`.
    #[inline]
    pub fn transform_into(&self, z: &[f64], out: &mut [f64]) {
        self.factor.lower.lower_mul_vec_into(z, out);
    }

    #[inline]
    pub fn sample_into(&self, rng: &mut Rng, z: &mut [f64], out: &mut [f64]) {
        Self::standard_into(rng, z);
        self.transform_into(z, out);
    }

    pub fn sample(&self, rng: &mut Rng) -> Vec<f64> {
        let p = self.p();
        let mut z = vec![0.0; p];
        let mut out = vec![0.0; p];
        self.sample_into(rng, &mut z, &mut out);
        out
    }
}
