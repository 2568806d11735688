//! Lindeberg interpolation between a sum of `X` rows and its Gaussian
//! counterpart: hybrid sums, per-step differences `δ_k`, their Taylor
//! decomposition under Gaussian smoothing, and an exact one-dimensional
//! oracle for two-point laws.
//!
//! With `S_{a:b}(Z) = n^{-1/2}(Z_a + ... + Z_b)`, the `k`-th step compares
//! `S_{1:k-1}(X) + X_k/√n + S_{k+1:n}(Y)` and `S_{1:k-1}(X) + Y_k/√n + S_{k+1:n}(Y)`.
//! Summing the steps over `k` telescopes to the difference between the full
//! `X` sum and the full `Y` sum.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::distance::PairedCounts;
use crate::error::{Error, Result};
use crate::geometry::Hyperrectangle;
use crate::linalg::{cholesky_lower, min_eigenvalue, CholeskyFactor, Matrix};
use crate::sampling::{GaussianSampler, SumSampler};
use crate::seed::{batch_plan, stream_rng, Rng, BATCH_SIZE};
use crate::smoothing::SmoothedIndicator;
use crate::special::{binomial_pmf, norm_cdf};
use crate::vectors::{EntryLaw, PopulationSpec};

/// Largest `k` accepted by the enumeration oracle.
pub const ORACLE_MAX_K: usize = 20;

/// Smoothing scale of step `k`: `ε_k = sqrt((n - k)/n) · sqrt(ρ)`.
pub fn epsilon_k(n: usize, k: usize, rho: f64) -> Result<f64> {
    if k == 0 || k >= n {
        return Err(Error::invalid(
            "k",
            format!("{k} not in 1..={}", n.saturating_sub(1)),
        ));
    }
    if !(rho > 0.0) {
        return Err(Error::invalid("rho", format!("{rho} must be positive")));
    }
    Ok(libm::sqrt((n - k) as f64 / n as f64) * libm::sqrt(rho))
}

/// Step `k` of an `n`-term interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InterpolationPoint {
    pub n: usize,
    pub k: usize,
}

impl InterpolationPoint {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n {
            return Err(Error::invalid("k", format!("{k} not in 1..={n}")));
        }
        Ok(Self { n, k })
    }

    /// Rows taken from `X` before the swapped one.
    pub fn head_terms(&self) -> usize {
        self.k - 1
    }

    /// Rows taken from `Y` after the swapped one.
    pub fn tail_terms(&self) -> usize {
        self.n - self.k
    }

    /// Variance factor `(n - k)/n` of the Gaussian tail.
    pub fn tail_variance(&self) -> f64 {
        self.tail_terms() as f64 / self.n as f64
    }
}

/// The two halves of a step: `δ_k^X(A)` and `δ_k^Y(A)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ExactDelta {
    pub delta_x: f64,
    pub delta_y: f64,
}

impl ExactDelta {
    pub fn difference(&self) -> f64 {
        self.delta_x - self.delta_y
    }
}

/// Two-point law support `(hi, lo, P(hi))`, or an error for other laws.
fn two_point(law: EntryLaw) -> Result<(f64, f64, f64)> {
    law.validate()?;
    law.two_point_support()
        .ok_or_else(|| Error::invalid("law", format!("{law:?} is not a two-point law")))
}

/// `E G_σ(S_{1:m}(X))` where `G_σ(u) = P(u + σ ζ ≤ t)`, summed over the
/// number of `hi` outcomes among `m` draws. At `σ = 0` the step compares the
/// raw sum against `t √n`.
fn smoothed_cdf(hi: f64, lo: f64, pi: f64, m: usize, n: usize, sigma: f64, t: f64) -> f64 {
    let root_n = libm::sqrt(n as f64);
    let mut total = 0.0;
    for j in 0..=m {
        let raw = j as f64 * hi + (m - j) as f64 * lo;
        let g = if sigma > 0.0 {
            norm_cdf((t - raw / root_n) / sigma)
        } else if raw <= t * root_n {
            1.0
        } else {
            0.0
        };
        total += binomial_pmf(m as u64, j as u64, pi) * g;
    }
    total
}

/// Exact `δ_k^X` and `δ_k^Y` for `p = 1`, a two-point `X` law and the corner
/// set `(-∞, t]`, by summing over the `hi`/`lo` patterns of `X_1, ..., X_k`
/// against the exact normal CDF of the Gaussian tail.
pub fn exact_delta_k_p1(law: EntryLaw, n: usize, k: usize, t: f64) -> Result<ExactDelta> {
    let point = InterpolationPoint::new(n, k)?;
    if k > ORACLE_MAX_K {
        return Err(Error::OracleTooLarge {
            k,
            limit: ORACLE_MAX_K,
        });
    }
    let (hi, lo, pi) = two_point(law)?;
    if t == f64::INFINITY {
        return Ok(ExactDelta {
            delta_x: 0.0,
            delta_y: 0.0,
        });
    }
    let sigma_k = libm::sqrt(point.tail_variance());
    let sigma_prev = libm::sqrt((n - k + 1) as f64 / n as f64);
    let base = smoothed_cdf(hi, lo, pi, k - 1, n, sigma_k, t);
    let with_x = smoothed_cdf(hi, lo, pi, k, n, sigma_k, t);
    let with_y = smoothed_cdf(hi, lo, pi, k - 1, n, sigma_prev, t);
    Ok(ExactDelta {
        delta_x: with_x - base,
        delta_y: with_y - base,
    })
}

/// `(Σ_k δ_k, P(S_n(X) ≤ t) - Φ(t))` for a two-point law at `p = 1`, both
/// exact. The two agree when the interpolation telescopes.
pub fn exact_telescoping_p1(law: EntryLaw, n: usize, t: f64) -> Result<(f64, f64)> {
    if n == 0 || n > ORACLE_MAX_K {
        return Err(Error::OracleTooLarge {
            k: n,
            limit: ORACLE_MAX_K,
        });
    }
    let (hi, lo, pi) = two_point(law)?;
    let mut sum = 0.0;
    for k in 1..=n {
        sum += exact_delta_k_p1(law, n, k, t)?.difference();
    }
    let direct = if law == EntryLaw::Rademacher {
        crate::distance::binomial_clt_oracle(n as u64, t)? - norm_cdf(t)
    } else {
        smoothed_cdf(hi, lo, pi, n, n, 0.0, t) - norm_cdf(t)
    };
    Ok((sum, direct))
}

/// First-order, second-order and remainder terms of
/// `φ(s + v/√n) - φ(s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TaylorTerms {
    pub l: f64,
    pub q: f64,
    pub r: f64,
    pub delta_phi: f64,
}

/// Largest dimension accepted by [`taylor_terms`].
pub const TAYLOR_MAX_P: usize = 16;

/// `L = ⟨∇φ(s), v/√n⟩`, `Q = ½⟨∇²φ(s), v vᵀ/n⟩`, and `R` the exact residual
/// `φ(s + v/√n) - φ(s) - L - Q`.
pub fn taylor_terms(si: &SmoothedIndicator, s: &[f64], v: &[f64], n: usize) -> Result<TaylorTerms> {
    let p = si.dim();
    if p > TAYLOR_MAX_P {
        return Err(Error::TensorTooLarge {
            order: 2,
            p,
            limit: TAYLOR_MAX_P,
        });
    }
    if v.len() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: v.len(),
        });
    }
    if n == 0 {
        return Err(Error::invalid("n", "must be positive"));
    }
    let scale = 1.0 / libm::sqrt(n as f64);
    let w: Vec<f64> = v.iter().map(|x| x * scale).collect();
    let grad = si.grad(s)?;
    let hess = si.hess(s)?;
    let l: f64 = grad.entries.iter().zip(&w).map(|(g, x)| g * x).sum();
    let mut q = 0.0;
    for i in 0..p {
        let row = &hess.entries[i * p..(i + 1) * p];
        q += w[i] * row.iter().zip(&w).map(|(h, x)| h * x).sum::<f64>();
    }
    q *= 0.5;
    let moved: Vec<f64> = s.iter().zip(&w).map(|(a, b)| a + b).collect();
    let delta_phi = si.phi(&moved)? - si.phi(s)?;
    Ok(TaylorTerms {
        l,
        q,
        r: delta_phi - l - q,
        delta_phi,
    })
}

/// Coupled draws of the hybrid sums of one interpolation step.
#[derive(Debug, Clone)]
pub struct HybridSampler {
    point: InterpolationPoint,
    head: SumSampler,
    tail: SumSampler,
    row_x: SumSampler,
    row_y: SumSampler,
}

impl HybridSampler {
    pub fn new(
        spec_x: &PopulationSpec,
        spec_y: &PopulationSpec,
        n: usize,
        k: usize,
    ) -> Result<Self> {
        let point = InterpolationPoint::new(n, k)?;
        if spec_x.p != spec_y.p {
            return Err(Error::DimensionMismatch {
                expected: spec_x.p,
                found: spec_y.p,
            });
        }
        Ok(Self {
            point,
            head: SumSampler::new(spec_x, point.head_terms(), n)?,
            tail: SumSampler::new(spec_y, point.tail_terms(), n)?,
            row_x: SumSampler::new(spec_x, 1, n)?,
            row_y: SumSampler::new(spec_y, 1, n)?,
        })
    }

    pub fn point(&self) -> InterpolationPoint {
        self.point
    }

    pub fn p(&self) -> usize {
        self.head.p()
    }

    /// Writes `S_{1:k-1}(X) + X_k/√n + S_{k+1:n}(Y)` and the same with `Y_k`.
    pub fn sample_into(
        &self,
        rng: &mut Rng,
        buf: &mut HybridBuffers,
        with_x: &mut [f64],
        with_y: &mut [f64],
    ) {
        self.head.sample_into(rng, &mut buf.raw, &mut buf.a);
        self.tail.sample_into(rng, &mut buf.raw, &mut buf.b);
        self.row_x.sample_into(rng, &mut buf.raw, &mut buf.c);
        self.row_y.sample_into(rng, &mut buf.raw, &mut buf.d);
        for j in 0..self.p() {
            let base = buf.a[j] + buf.b[j];
            with_x[j] = base + buf.c[j];
            with_y[j] = base + buf.d[j];
        }
    }
}

/// Scratch space for [`HybridSampler::sample_into`].
#[derive(Debug, Clone)]
pub struct HybridBuffers {
    raw: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
}

impl HybridBuffers {
    pub fn new(p: usize) -> Self {
        Self {
            raw: vec![0.0; p],
            a: vec![0.0; p],
            b: vec![0.0; p],
            c: vec![0.0; p],
            d: vec![0.0; p],
        }
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// Minimum budget for the `δ_k` estimators.
pub const MIN_DELTA_BUDGET: usize = 10_000;

/// Adds `draws` coupled draws of `1{· ∈ A}` under `X_k` and `Y_k` to `counts`.
pub fn delta_k_batch(
    sampler: &HybridSampler,
    rect: &Hyperrectangle,
    rng: &mut Rng,
    draws: usize,
    counts: &mut PairedCounts,
) {
    let p = sampler.p();
    let mut buf = HybridBuffers::new(p);
    let (mut x, mut y) = (vec![0.0; p], vec![0.0; p]);
    for _ in 0..draws {
        sampler.sample_into(rng, &mut buf, &mut x, &mut y);
        counts.record(&[rect.holds(&x)], &[rect.holds(&y)]);
    }
}

/// `δ_k^X(A) - δ_k^Y(A)` by Monte Carlo. The shared head and tail make the
/// two `S_{1:k-1}(X) + S_{k+1:n}(Y)` probabilities cancel draw by draw, so
/// only the paired indicator difference remains.
pub fn delta_k_estimate(
    spec_x: &PopulationSpec,
    spec_y: &PopulationSpec,
    n: usize,
    k: usize,
    rect: &Hyperrectangle,
    budget: usize,
    seed: u64,
) -> Result<Estimate> {
    if budget < MIN_DELTA_BUDGET {
        return Err(Error::invalid(
            "budget",
            format!("{budget} < {MIN_DELTA_BUDGET}"),
        ));
    }
    let sampler = HybridSampler::new(spec_x, spec_y, n, k)?;
    check_rect(rect, sampler.p())?;
    let mut counts = PairedCounts::new(1);
    for (stream, draws) in batch_plan(budget, BATCH_SIZE) {
        let mut rng = stream_rng(seed, stream);
        let mut part = PairedCounts::new(1);
        delta_k_batch(&sampler, rect, &mut rng, draws, &mut part);
        counts.merge(&part);
    }
    paired_estimate(&counts)
}

/// Signed paired difference of a one-member [`PairedCounts`].
pub fn paired_estimate(counts: &PairedCounts) -> Result<Estimate> {
    let est = counts.estimate()?;
    let b = counts.draws as f64;
    Ok(Estimate {
        value: (counts.n10[0] as f64 - counts.n01[0] as f64) / b,
        std_error: est.per_rectangle[0].std_error,
    })
}

fn check_rect(rect: &Hyperrectangle, p: usize) -> Result<()> {
    if rect.dim() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: rect.dim(),
        });
    }
    Ok(())
}

/// Running sums of a scalar statistic.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.count as f64
    }

    /// Standard error of the mean (unbiased variance).
    pub fn std_error(&self) -> f64 {
        let n = self.count as f64;
        if self.count < 2 {
            return 0.0;
        }
        let mean = self.mean();
        let var = ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        libm::sqrt(var / n)
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            value: self.mean(),
            std_error: self.std_error(),
        }
    }
}

/// Per-draw `X_k` minus `Y_k` differences of the Taylor terms and of the
/// smoothed step itself.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TaylorMoments {
    pub l: Moments,
    pub q: Moments,
    pub r: Moments,
    pub lq: Moments,
    pub delta: Moments,
}

impl TaylorMoments {
    pub fn merge(&mut self, other: &TaylorMoments) {
        self.l.merge(&other.l);
        self.q.merge(&other.q);
        self.r.merge(&other.r);
        self.lq.merge(&other.lq);
        self.delta.merge(&other.delta);
    }
}

/// The smoothed form of one step: with `ρ` the smallest eigenvalue of the
/// correlation `R`, the Gaussian tail splits as `ε_k ζ + sqrt((n-k)/n) W`
/// with `W ~ N(0, R - ρ I)`, so `δ_k^X(A)` is the mean change of
/// `φ_{ε_k}(·, A - sqrt((n-k)/n) W)` when `X_k/√n` is added.
#[derive(Debug, Clone)]
pub struct SmoothedStep {
    point: InterpolationPoint,
    si: SmoothedIndicator,
    head: SumSampler,
    row: CholeskyFactor,
    w_factor: CholeskyFactor,
    law: EntryLaw,
    w_scale: f64,
}

impl SmoothedStep {
    pub fn new(spec_x: &PopulationSpec, n: usize, k: usize, rect: &Hyperrectangle) -> Result<Self> {
        let point = InterpolationPoint::new(n, k)?;
        check_rect(rect, spec_x.p)?;
        let corr = spec_x.correlation()?;
        let rho = min_eigenvalue(&corr)?;
        if !(rho > 0.0) {
            return Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: rho,
            });
        }
        let eps = epsilon_k(n, k, rho)?;
        let mut rest = corr.clone();
        for j in 0..spec_x.p {
            rest[(j, j)] -= rho;
        }
        Ok(Self {
            point,
            si: SmoothedIndicator::new(rect.clone(), eps)?,
            head: SumSampler::new(spec_x, point.head_terms(), n)?,
            row: spec_x.mixing()?,
            w_factor: cholesky_lower(&rest)?,
            law: spec_x.law,
            w_scale: libm::sqrt(point.tail_variance()),
        })
    }

    pub fn point(&self) -> InterpolationPoint {
        self.point
    }

    pub fn indicator(&self) -> &SmoothedIndicator {
        &self.si
    }

    /// Adds `draws` draws of the Taylor-term differences.
    pub fn batch(&self, rng: &mut Rng, draws: usize, acc: &mut TaylorMoments) -> Result<()> {
        let p = self.si.dim();
        let mut raw = vec![0.0; p];
        let mut s = vec![0.0; p];
        let mut w = vec![0.0; p];
        let mut xk = vec![0.0; p];
        let mut yk = vec![0.0; p];
        for _ in 0..draws {
            self.head.sample_into(rng, &mut raw, &mut s);
            GaussianSampler::standard_into(rng, &mut raw);
            self.w_factor.lower.lower_mul_vec_into(&raw, &mut w);
            s.iter_mut()
                .zip(&w)
                .for_each(|(a, b)| *a += self.w_scale * b);
            raw.iter_mut().for_each(|v| *v = self.law.sample(rng));
            self.row.lower.lower_mul_vec_into(&raw, &mut xk);
            GaussianSampler::standard_into(rng, &mut raw);
            self.row.lower.lower_mul_vec_into(&raw, &mut yk);
            let tx = taylor_terms(&self.si, &s, &xk, self.point.n)?;
            let ty = taylor_terms(&self.si, &s, &yk, self.point.n)?;
            acc.l.push(tx.l - ty.l);
            acc.q.push(tx.q - ty.q);
            acc.r.push(tx.r - ty.r);
            acc.lq.push(tx.l - ty.l + tx.q - ty.q);
            acc.delta.push(tx.delta_phi - ty.delta_phi);
        }
        Ok(())
    }
}

/// Outcome of a moment-matching run at one step.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MomentMatchingReport {
    pub k: usize,
    pub n: usize,
    pub delta_hat: f64,
    pub std_err: f64,
    #[cfg_attr(feature = "serde", serde(rename = "L_diff"))]
    pub l_diff: Estimate,
    #[cfg_attr(feature = "serde", serde(rename = "Q_diff"))]
    pub q_diff: Estimate,
    #[cfg_attr(feature = "serde", serde(rename = "R_diff"))]
    pub r_diff: Estimate,
    /// `δ̂ - R̂`, which equals the mean of the `L + Q` differences.
    pub delta_minus_r: Estimate,
    pub pass: bool,
}

/// Number of standard errors a consistent-with-zero difference may reach.
pub const MATCHING_SIGMAS: f64 = 4.0;

fn within(e: &Estimate) -> bool {
    e.value.abs() <= MATCHING_SIGMAS * e.std_error || e.value == 0.0
}

impl MomentMatchingReport {
    pub fn from_moments(point: InterpolationPoint, m: &TaylorMoments) -> Self {
        let l_diff = m.l.estimate();
        let q_diff = m.q.estimate();
        let delta_minus_r = m.lq.estimate();
        let delta = m.delta.estimate();
        Self {
            k: point.k,
            n: point.n,
            delta_hat: delta.value,
            std_err: delta.std_error,
            l_diff,
            q_diff,
            r_diff: m.r.estimate(),
            delta_minus_r,
            pass: within(&l_diff) && within(&q_diff) && within(&delta_minus_r),
        }
    }
}

/// Checks that the first- and second-order terms of `δ_k^X - δ_k^Y` vanish
/// in expectation, leaving the remainder.
pub fn moment_matching_check(
    spec_x: &PopulationSpec,
    n: usize,
    k: usize,
    rect: &Hyperrectangle,
    budget: usize,
    seed: u64,
) -> Result<MomentMatchingReport> {
    let step = SmoothedStep::new(spec_x, n, k, rect)?;
    let mut acc = TaylorMoments::default();
    for (stream, draws) in batch_plan(budget, BATCH_SIZE) {
        let mut rng = stream_rng(seed, stream);
        let mut part = TaylorMoments::default();
        step.batch(&mut rng, draws, &mut part)?;
        acc.merge(&part);
    }
    Ok(MomentMatchingReport::from_moments(step.point(), &acc))
}

/// Per-step and direct paired counts along one coupled path
/// `Z_0 = S_{1:n}(Y), ..., Z_n = S_{1:n}(X)`, where `Z_k` swaps the first
/// `k` rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TelescopeCounts {
    pub steps: Vec<PairedCounts>,
    pub direct: PairedCounts,
}

impl TelescopeCounts {
    pub fn new(n: usize) -> Self {
        Self {
            steps: (0..n).map(|_| PairedCounts::new(1)).collect(),
            direct: PairedCounts::new(1),
        }
    }

    pub fn merge(&mut self, other: &TelescopeCounts) {
        for (a, b) in self.steps.iter_mut().zip(&other.steps) {
            a.merge(b);
        }
        self.direct.merge(&other.direct);
    }
}

/// Adds `draws` coupled interpolation paths to `acc`.
pub fn telescope_batch(
    spec_x: &PopulationSpec,
    factor: &CholeskyFactor,
    n: usize,
    rect: &Hyperrectangle,
    rng: &mut Rng,
    draws: usize,
    acc: &mut TelescopeCounts,
) {
    let p = spec_x.p;
    let scale = 1.0 / libm::sqrt(n as f64);
    let mut raw = vec![0.0; p];
    let mut xs = vec![0.0; n * p];
    let mut ys = vec![0.0; n * p];
    let mut z = vec![0.0; p];
    for _ in 0..draws {
        z.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            raw.iter_mut().for_each(|v| *v = spec_x.law.sample(rng));
            factor
                .lower
                .lower_mul_vec_into(&raw, &mut xs[i * p..(i + 1) * p]);
            GaussianSampler::standard_into(rng, &mut raw);
            let y = &mut ys[i * p..(i + 1) * p];
            factor.lower.lower_mul_vec_into(&raw, y);
            z.iter_mut()
                .zip(y.iter())
                .for_each(|(a, b)| *a += b * scale);
        }
        let start = rect.holds(&z);
        let mut prev = start;
        for k in 0..n {
            for j in 0..p {
                z[j] += (xs[k * p + j] - ys[k * p + j]) * scale;
            }
            let now = rect.holds(&z);
            acc.steps[k].record(&[now], &[prev]);
            prev = now;
        }
        acc.direct.record(&[prev], &[start]);
    }
}

/// Telescoping of the step differences against the direct difference.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TelescopingReport {
    pub n: usize,
    pub deltas: Vec<Estimate>,
    pub sum_of_deltas: f64,
    pub direct: Estimate,
    pub combined_std_error: f64,
    pub pass: bool,
}

impl TelescopingReport {
    pub fn from_counts(n: usize, counts: &TelescopeCounts) -> Result<Self> {
        let deltas = counts
            .steps
            .iter()
            .map(paired_estimate)
            .collect::<Result<Vec<_>>>()?;
        let sum_of_deltas = deltas.iter().map(|d| d.value).sum();
        let direct = paired_estimate(&counts.direct)?;
        let combined_std_error = libm::sqrt(
            deltas
                .iter()
                .map(|d| d.std_error * d.std_error)
                .sum::<f64>()
                + direct.std_error * direct.std_error,
        );
        let gap: f64 = sum_of_deltas - direct.value;
        Ok(Self {
            n,
            deltas,
            sum_of_deltas,
            direct,
            combined_std_error,
            pass: gap.abs() <= MATCHING_SIGMAS * combined_std_error + 1e-12,
        })
    }
}

/// Largest `n` accepted by [`telescoping_check`].
pub const TELESCOPE_MAX_N: usize = 64;

/// Σ_k (δ_k^X - δ_k^Y) against `P(S_n(X) ∈ A) - P(S_n(Y) ∈ A)`.
pub fn telescoping_check(
    spec_x: &PopulationSpec,
    n: usize,
    rect: &Hyperrectangle,
    budget: usize,
    seed: u64,
) -> Result<TelescopingReport> {
    if n == 0 || n > TELESCOPE_MAX_N {
        return Err(Error::invalid(
            "n",
            format!("{n} not in 1..={TELESCOPE_MAX_N}"),
        ));
    }
    check_rect(rect, spec_x.p)?;
    let factor = spec_x.mixing()?;
    let mut acc = TelescopeCounts::new(n);
    for (stream, draws) in batch_plan(budget, BATCH_SIZE) {
        let mut rng = stream_rng(seed, stream);
        let mut part = TelescopeCounts::new(n);
        telescope_batch(spec_x, &factor, n, rect, &mut rng, draws, &mut part);
        acc.merge(&part);
    }
    TelescopingReport::from_counts(n, &acc)
}

/// Covariance of `ε_k ζ + sqrt((n-k)/n) W` next to that of `S_{k+1:n}(Y)`;
/// both equal `R (n-k)/n`.
pub fn tail_decomposition_covariances(
    corr: &Matrix,
    n: usize,
    k: usize,
) -> Result<(Matrix, Matrix)> {
    let point = InterpolationPoint::new(n, k)?;
    let rho = min_eigenvalue(corr)?;
    let eps = epsilon_k(n, k, rho)?;
    let c = point.tail_variance();
    let mut split = corr.clone();
    for i in 0..corr.rows() {
        for j in 0..corr.cols() {
            let w = corr[(i, j)] - if i == j { rho } else { 0.0 };
            split[(i, j)] = c * w + if i == j { eps * eps } else { 0.0 };
        }
    }
    let mut direct = corr.clone();
    direct.scale(c);
    Ok((split, direct))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use crate::vectors::CorrelationModel;
    use rand::Rng as _;

    const INF: f64 = f64::INFINITY;

    #[test]
    fn epsilon_examples() {
        assert!((epsilon_k(4, 2, 1.0).unwrap() - libm::sqrt(0.5)).abs() < 1e-15);
        assert!((epsilon_k(4, 2, 0.64).unwrap() - 0.8 * libm::sqrt(0.5)).abs() < 1e-15);
        let n = 1_000_000;
        assert!((epsilon_k(n, n - 1, 1.0).unwrap() - libm::sqrt(1.0 / n as f64)).abs() < 1e-15);
        assert!(epsilon_k(4, 4, 1.0).is_err());
        assert!(epsilon_k(4, 0, 1.0).is_err());
        let mut prev = INF;
        for k in 1..10 {
            let e = epsilon_k(10, k, 0.3).unwrap();
            assert!(e < prev);
            prev = e;
        }
    }

    #[test]
    fn exact_delta_examples() {
        let d = exact_delta_k_p1(EntryLaw::Rademacher, 2, 1, 0.0).unwrap();
        assert!(d.delta_x.abs() < 1e-15);
        let hand = 0.5 * (norm_cdf(1.0) + norm_cdf(-1.0)) - 0.5;
        assert!((d.delta_x - hand).abs() < 1e-15);
        let asym = exact_delta_k_p1(EntryLaw::TwoPointAsymmetric(0.2), 2, 1, 0.0).unwrap();
        assert!(asym.delta_x.abs() > 1e-3);
        let far = exact_delta_k_p1(EntryLaw::Rademacher, 5, 3, INF).unwrap();
        assert_eq!(far.difference(), 0.0);
        assert!(matches!(
            exact_delta_k_p1(EntryLaw::Rademacher, 30, 21, 0.0),
            Err(Error::OracleTooLarge { .. })
        ));
        assert!(exact_delta_k_p1(EntryLaw::StandardNormal, 3, 1, 0.0).is_err());
    }

    #[test]
    fn symmetric_laws_have_zero_x_step_at_origin() {
        for n in 2..=12 {
            for k in 1..=n {
                let d = exact_delta_k_p1(EntryLaw::Rademacher, n, k, 0.0).unwrap();
                if k < n {
                    assert!(d.delta_x.abs() < 1e-14, "n={n} k={k} {}", d.delta_x);
                }
            }
        }
    }

    /// Brute force over all `2^k` sign vectors, independent of the count sum.
    fn brute_delta_x(n: usize, k: usize, t: f64) -> f64 {
        let root = libm::sqrt(n as f64);
        let sigma = libm::sqrt((n - k) as f64 / n as f64);
        let g = |raw: i64| {
            let u = raw as f64 / root;
            if sigma > 0.0 {
                norm_cdf((t - u) / sigma)
            } else if (raw as f64) <= t * root {
                1.0
            } else {
                0.0
            }
        };
        let mut total = 0.0;
        for mask in 0u32..(1 << k) {
            let signs: Vec<i64> = (0..k)
                .map(|i| if mask >> i & 1 == 1 { 1 } else { -1 })
                .collect();
            let head: i64 = signs[..k - 1].iter().sum();
            total += g(head + signs[k - 1]) - g(head);
        }
        total / (1u64 << k) as f64
    }

    #[test]
    fn count_sum_matches_sign_enumeration() {
        for n in [3, 6, 9] {
            for k in 1..=n {
                for t in [-0.7, 0.0, 0.45] {
                    let a = exact_delta_k_p1(EntryLaw::Rademacher, n, k, t)
                        .unwrap()
                        .delta_x;
                    assert!((a - brute_delta_x(n, k, t)).abs() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn telescoping_examples() {
        let (sum, direct) = exact_telescoping_p1(EntryLaw::Rademacher, 1, 0.4).unwrap();
        assert!((sum - direct).abs() < 1e-15);
        let (sum, direct) = exact_telescoping_p1(EntryLaw::Rademacher, 8, 0.3).unwrap();
        assert!((sum - direct).abs() < 1e-12);
        assert!(direct.abs() > 1e-3);
    }

    #[test]
    fn taylor_examples() {
        let si = SmoothedIndicator::new(Hyperrectangle::closed(vec![0.0], vec![INF]).unwrap(), 1.0)
            .unwrap();
        let t = taylor_terms(&si, &[0.3], &[0.0], 5).unwrap();
        assert_eq!((t.l, t.q, t.r), (0.0, 0.0, 0.0));

        let t = taylor_terms(&si, &[0.5], &[1.0], 4).unwrap();
        // closed forms: φ(s) = Φ(s), φ' = density, φ'' = -s density
        let dens = crate::special::norm_pdf(0.5);
        assert!((t.l - dens * 0.5).abs() < 1e-15);
        assert!((t.q - 0.5 * (-0.5 * dens) * 0.25).abs() < 1e-15);
        let change = norm_cdf(1.0) - norm_cdf(0.5);
        assert!((t.l + t.q + t.r - change).abs() < 1e-12);

        let deep = SmoothedIndicator::new(Hyperrectangle::cube(2, 40.0).unwrap(), 1.0).unwrap();
        let t = taylor_terms(&deep, &[0.0, 0.0], &[0.1, -0.2], 9).unwrap();
        assert!(t.l.abs() < 1e-15 && t.q.abs() < 1e-15 && t.r.abs() < 1e-15);
    }

    #[test]
    fn delta_estimate_examples() {
        let gauss = PopulationSpec::new(2, EntryLaw::StandardNormal, CorrelationModel::Ar1(0.4), 1)
            .unwrap();
        let rect = Hyperrectangle::cube(2, 0.8).unwrap();
        let e = delta_k_estimate(&gauss, &gauss, 6, 3, &rect, 40_000, 3).unwrap();
        assert!(e.value.abs() <= 3.0 * e.std_error, "{e:?}");

        let full = Hyperrectangle::full(2);
        let e = delta_k_estimate(&gauss, &gauss, 6, 3, &full, 10_000, 3).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.std_error, 0.0);

        let rad =
            PopulationSpec::new(1, EntryLaw::Rademacher, CorrelationModel::Identity, 1).unwrap();
        let rect = Hyperrectangle::corner(&[0.0]).unwrap();
        let e =
            delta_k_estimate(&rad, &rad.gaussian_counterpart(), 3, 2, &rect, 200_000, 11).unwrap();
        let exact = exact_delta_k_p1(EntryLaw::Rademacher, 3, 2, 0.0)
            .unwrap()
            .difference();
        assert!(
            (e.value - exact).abs() <= 3.0 * e.std_error,
            "{e:?} vs {exact}"
        );
        assert!(delta_k_estimate(&rad, &rad, 3, 2, &rect, 10, 0).is_err());
    }

    #[test]
    fn moment_matching_examples() {
        let gauss = PopulationSpec::new(2, EntryLaw::StandardNormal, CorrelationModel::Ar1(0.3), 5)
            .unwrap();
        let rect = Hyperrectangle::cube(2, 1.0).unwrap();
        let rep = moment_matching_check(&gauss, 5, 2, &rect, 20_000, 1).unwrap();
        assert!(rep.pass, "{rep:?}");

        let rad =
            PopulationSpec::new(1, EntryLaw::Rademacher, CorrelationModel::Identity, 5).unwrap();
        let corner = Hyperrectangle::corner(&[0.2]).unwrap();
        let rep = moment_matching_check(&rad, 4, 2, &corner, 100_000, 2).unwrap();
        assert!(rep.pass, "{rep:?}");
        let exact = exact_delta_k_p1(EntryLaw::Rademacher, 4, 2, 0.2)
            .unwrap()
            .difference();
        assert!(
            (rep.delta_hat - exact).abs() <= 4.0 * rep.std_err + 1e-12,
            "{rep:?} {exact}"
        );

        let rep = moment_matching_check(&rad, 4, 2, &Hyperrectangle::full(1), 10_000, 2).unwrap();
        assert_eq!(rep.delta_hat, 0.0);
        assert_eq!(rep.l_diff.value, 0.0);
        assert_eq!(rep.r_diff.value, 0.0);
    }

    #[test]
    fn telescoping_mc() {
        let rad = PopulationSpec::new(
            2,
            EntryLaw::Rademacher,
            CorrelationModel::Equicorrelated(0.3),
            5,
        )
        .unwrap();
        let rect = Hyperrectangle::corner(&[0.1, 0.4]).unwrap();
        let rep = telescoping_check(&rad, 6, &rect, 20_000, 4).unwrap();
        assert!(rep.pass, "{rep:?}");
        assert_eq!(rep.deltas.len(), 6);
        let one = telescoping_check(&rad, 1, &rect, 10_000, 4).unwrap();
        assert_eq!(one.sum_of_deltas, one.direct.value);
    }

    #[test]
    fn tail_decomposition_matches() {
        let corr = crate::vectors::build_correlation(&CorrelationModel::Ar1(0.6), 4).unwrap();
        let (a, b) = tail_decomposition_covariances(&corr, 10, 3).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() < 1e-14);
        }
        let mut rng = rng_from_seed(0);
        let _ = rng.random::<u8>();
    }
}
