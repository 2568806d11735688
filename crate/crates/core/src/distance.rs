//! Rectangle probabilities and Kolmogorov-type distances over finite
//! rectangle families.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geometry::{FaceDistances, Hyperrectangle, RectangleFamily};
use crate::linalg::{cholesky_lower, Matrix};
use crate::lindeberg::Moments;
use crate::sampling::GaussianSampler;
use crate::seed::{batch_plan, stream_rng, BATCH_SIZE};
use crate::special::{half_binomial_pmf, norm_cdf, norm_interval};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ProbMethod {
    MonteCarlo,
    ExactProduct,
    ExactBinomial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RectProbEstimate {
    pub value: f64,
    pub mc_std_error: f64,
    pub method: ProbMethod,
}

impl RectProbEstimate {
    pub fn exact(value: f64, method: ProbMethod) -> Self {
        Self {
            value: value.clamp(0.0, 1.0),
            mc_std_error: 0.0,
            method,
        }
    }

    /// Binomial proportion `hits / total` with its standard error.
    pub fn from_counts(hits: u64, total: u64) -> Self {
        let p = hits as f64 / total as f64;
        Self {
            value: p,
            mc_std_error: libm::sqrt(p * (1.0 - p) / total as f64),
            method: ProbMethod::MonteCarlo,
        }
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Fraction of the rows of `points` that fall in `rect`.
pub fn empirical_rect_prob(points: &Matrix, rect: &Hyperrectangle) -> Result<RectProbEstimate> {
    check_dim(rect.dim(), points.cols())?;
    if points.rows() == 0 {
        return Err(Error::invalid("points", "empty point cloud"));
    }
    let hits = (0..points.rows())
        .filter(|&i| rect.holds(points.row(i)))
        .count();
    Ok(RectProbEstimate::from_counts(
        hits as u64,
        points.rows() as u64,
    ))
}

/// `P(Y ∈ A)` as a product of one-dimensional probabilities when `Σ` is
/// diagonal; `None` otherwise. Closedness is irrelevant for continuous laws.
pub fn gaussian_rect_prob_exact(
    sigma: &Matrix,
    rect: &Hyperrectangle,
) -> Result<Option<RectProbEstimate>> {
    check_dim(rect.dim(), sigma.rows())?;
    if !is_diagonal(sigma) {
        return Ok(None);
    }
    let mut prob = 1.0;
    for j in 0..rect.dim() {
        let var = sigma[(j, j)];
        let (a, b) = (rect.lower()[j], rect.upper()[j]);
        prob *= if var > 0.0 {
            let sd = libm::sqrt(var);
            norm_interval(a / sd, b / sd)
        } else {
            // point mass at zero
            let lo_ok = if rect.lower_closed()[j] {
                0.0 >= a
            } else {
                0.0 > a
            };
            let hi_ok = if rect.upper_closed()[j] {
                0.0 <= b
            } else {
                0.0 < b
            };
            if lo_ok && hi_ok {
                1.0
            } else {
                0.0
            }
        };
    }
    Ok(Some(RectProbEstimate::exact(
        prob,
        ProbMethod::ExactProduct,
    )))
}

pub fn is_diagonal(m: &Matrix) -> bool {
    (0..m.rows()).all(|i| (0..m.cols()).all(|j| i == j || m[(i, j)] == 0.0))
}

/// `P(Y ∈ A)` for `Y ~ N(0, Σ)`: exact product for diagonal `Σ`, otherwise
/// Monte Carlo with `budget` draws in antithetic pairs `(z, -z)`.
pub fn gaussian_rect_prob(
    sigma: &Matrix,
    rect: &Hyperrectangle,
    budget: usize,
    seed: u64,
) -> Result<RectProbEstimate> {
    if let Some(exact) = gaussian_rect_prob_exact(sigma, rect)? {
        return Ok(exact);
    }
    if budget < 4 {
        return Err(Error::invalid("budget", format!("{budget} < 4")));
    }
    let factor = cholesky_lower(sigma)?;
    let p = rect.dim();
    let (mut z, mut x) = (vec![0.0; p], vec![0.0; p]);
    let mut acc = Moments::default();
    for (stream, pairs) in batch_plan(budget / 2, BATCH_SIZE) {
        let mut rng = stream_rng(seed, stream);
        let mut part = Moments::default();
        for _ in 0..pairs {
            GaussianSampler::standard_into(&mut rng, &mut z);
            factor.lower.lower_mul_vec_into(&z, &mut x);
            let a = rect.holds(&x) as u8 as f64;
            x.iter_mut().for_each(|v| *v = -*v);
            let b = rect.holds(&x) as u8 as f64;
            part.push(0.5 * (a + b));
        }
        acc.merge(&part);
    }
    Ok(RectProbEstimate {
        value: acc.mean(),
        mc_std_error: acc.std_error(),
        method: ProbMethod::MonteCarlo,
    })
}

/// Whether the raw Rademacher sum `2k - n` satisfies `raw ≤ t √n` (or `<`).
#[inline]
fn raw_below(n: u64, k: u64, t: f64, strict: bool) -> bool {
    let raw = 2.0 * k as f64 - n as f64;
    let bound = t * libm::sqrt(n as f64);
    if strict {
        raw < bound
    } else {
        raw <= bound
    }
}

fn rademacher_cdf(n: u64, t: f64, strict: bool) -> f64 {
    if t == f64::INFINITY {
        return 1.0;
    }
    if t == f64::NEG_INFINITY {
        return 0.0;
    }
    let mut total = 0.0;
    for k in 0..=n {
        if !raw_below(n, k, t, strict) {
            break;
        }
        total += half_binomial_pmf(n, k);
    }
    total.min(1.0)
}

/// `P(S_n ≤ t)` for `S_n = n^{-1/2} Σ ε_i` with Rademacher `ε_i`, from the
/// binomial law of the number of positive signs.
pub fn binomial_clt_oracle(n: u64, t: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    Ok(rademacher_cdf(n, t, false))
}

/// `P(S_n < t)`, the left limit of [`binomial_clt_oracle`].
pub fn binomial_clt_oracle_strict(n: u64, t: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    Ok(rademacher_cdf(n, t, true))
}

/// `P(S_n ∈ I)` for a one-dimensional rectangle `I`.
pub fn rademacher_interval_prob(n: u64, rect: &Hyperrectangle) -> Result<f64> {
    check_dim(1, rect.dim())?;
    let (a, b) = (rect.lower()[0], rect.upper()[0]);
    let upper = if rect.upper_closed()[0] {
        binomial_clt_oracle(n, b)?
    } else {
        binomial_clt_oracle_strict(n, b)?
    };
    let below = if a == f64::NEG_INFINITY {
        0.0
    } else if rect.lower_closed()[0] {
        binomial_clt_oracle_strict(n, a)?
    } else {
        binomial_clt_oracle(n, a)?
    };
    Ok((upper - below).max(0.0))
}

/// Exact `sup_t |P(S_n ≤ t) - Φ(t)|` over all one-sided corner sets, with
/// the maximizing threshold. The supremum sits at a lattice atom, approached
/// either at the atom or from its left.
pub fn rademacher_kolmogorov_exact(n: u64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::invalid("n", "must be at least 1"));
    }
    let root = libm::sqrt(n as f64);
    let mut below = 0.0;
    let mut best = (0.0, 0.0);
    for k in 0..=n {
        let t = (2.0 * k as f64 - n as f64) / root;
        let phi = norm_cdf(t);
        let left = (below - phi).abs();
        below += half_binomial_pmf(n, k);
        let at = (below.min(1.0) - phi).abs();
        let d = left.max(at);
        if d > best.0 {
            best = (d, t);
        }
    }
    Ok(best)
}

/// A law whose rectangle probabilities can be read off.
#[derive(Debug, Clone, Copy)]
pub enum LawSource<'a> {
    /// Empirical law of the rows.
    Cloud(&'a Matrix),
    /// `N(0, Σ)`; exact for diagonal `Σ`, Monte Carlo otherwise.
    Gaussian {
        sigma: &'a Matrix,
        budget: usize,
        seed: u64,
    },
    /// Law of the normalized Rademacher sum `S_n` at `p = 1`.
    RademacherSum { n: u64 },
}

impl LawSource<'_> {
    fn dim(&self) -> usize {
        match self {
            LawSource::Cloud(m) => m.cols(),
            LawSource::Gaussian { sigma, .. } => sigma.rows(),
            LawSource::RademacherSum { .. } => 1,
        }
    }

    fn family_probs(&self, family: &RectangleFamily) -> Result<Vec<RectProbEstimate>> {
        match *self {
            LawSource::Cloud(m) => {
                if m.rows() == 0 {
                    return Err(Error::invalid("points", "empty point cloud"));
                }
                let eval = FamilyEvaluator::new(family);
                let mut counts = vec![0u64; family.len()];
                let mut hits = vec![false; family.len()];
                for i in 0..m.rows() {
                    eval.evaluate(m.row(i), &mut hits);
                    for (c, &h) in counts.iter_mut().zip(&hits) {
                        *c += h as u64;
                    }
                }
                Ok(counts
                    .into_iter()
                    .map(|c| RectProbEstimate::from_counts(c, m.rows() as u64))
                    .collect())
            }
            LawSource::Gaussian {
                sigma,
                budget,
                seed,
            } => family
                .members
                .iter()
                .map(|r| gaussian_rect_prob(sigma, r, budget, seed))
                .collect(),
            LawSource::RademacherSum { n } => family
                .members
                .iter()
                .map(|r| {
                    rademacher_interval_prob(n, r)
                        .map(|v| RectProbEstimate::exact(v, ProbMethod::ExactBinomial))
                })
                .collect(),
        }
    }
}

/// One member's contribution to a distance estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RectDistance {
    pub rect_id: usize,
    pub p_hat_p: f64,
    pub p_hat_q: f64,
    pub abs_diff: f64,
    pub std_error: f64,
}

/// Maximum of `|P(A) - Q(A)|` over a finite family.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DistanceEstimate {
    pub value: f64,
    pub argmax: usize,
    /// Standard error of the difference at the maximizing member.
    pub mc_std_error: f64,
    pub per_rectangle: Vec<RectDistance>,
}

impl DistanceEstimate {
    /// Builds the estimate from per-member entries, taking the first maximum.
    pub fn from_members(per_rectangle: Vec<RectDistance>) -> Result<Self> {
        if per_rectangle.is_empty() {
            return Err(Error::EmptyFamily);
        }
        let mut argmax = 0;
        for (i, r) in per_rectangle.iter().enumerate() {
            if r.abs_diff > per_rectangle[argmax].abs_diff {
                argmax = i;
            }
        }
        Ok(Self {
            value: per_rectangle[argmax].abs_diff,
            argmax,
            mc_std_error: per_rectangle[argmax].std_error,
            per_rectangle,
        })
    }
}

/// `max_{A ∈ family} |P(A) - Q(A)|`, with independent standard errors.
pub fn kolmogorov_sup(
    p_law: LawSource<'_>,
    q_law: LawSource<'_>,
    family: &RectangleFamily,
) -> Result<DistanceEstimate> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    check_dim(family.p, p_law.dim())?;
    check_dim(family.p, q_law.dim())?;
    let pp = p_law.family_probs(family)?;
    let qq = q_law.family_probs(family)?;
    let members = pp
        .iter()
        .zip(&qq)
        .enumerate()
        .map(|(rect_id, (a, b))| RectDistance {
            rect_id,
            p_hat_p: a.value,
            p_hat_q: b.value,
            abs_diff: (a.value - b.value).abs(),
            std_error: libm::sqrt(
                a.mc_std_error * a.mc_std_error + b.mc_std_error * b.mc_std_error,
            ),
        })
        .collect();
    DistanceEstimate::from_members(members)
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    /// Closed `[-t, t]^p`: membership is `max |x_j| ≤ t`.
    Cube(f64),
    /// Closed `{x ≤ c 1}`: membership is `max x_j ≤ c`.
    DiagonalCorner(f64),
    Generic,
}

/// Family membership with shortcuts for symmetric cubes and diagonal corner
/// sets, which need only `max |x_j|` or `max x_j`.
#[derive(Debug, Clone)]
pub struct FamilyEvaluator<'a> {
    family: &'a RectangleFamily,
    shapes: Vec<Shape>,
}

impl<'a> FamilyEvaluator<'a> {
    pub fn new(family: &'a RectangleFamily) -> Self {
        let shapes = family.members.iter().map(classify).collect();
        Self { family, shapes }
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    /// Writes membership of `x` in each member into `hits`.
    #[inline]
    pub fn evaluate(&self, x: &[f64], hits: &mut [bool]) {
        let mut max_abs = 0.0f64;
        let mut max = f64::NEG_INFINITY;
        for &v in x {
            max_abs = max_abs.max(v.abs());
            max = max.max(v);
        }
        for ((shape, rect), h) in self.shapes.iter().zip(&self.family.members).zip(hits) {
            *h = match *shape {
                Shape::Cube(t) => max_abs <= t,
                Shape::DiagonalCorner(c) => max <= c,
                Shape::Generic => rect.holds(x),
            };
        }
    }
}

impl FamilyEvaluator<'_> {
    /// Writes the face distances of `x` to each member into `out`.
    #[inline]
    pub fn face_distances_into(&self, x: &[f64], out: &mut [FaceDistances]) {
        let mut max_abs = 0.0f64;
        let mut max = f64::NEG_INFINITY;
        for &v in x {
            max_abs = max_abs.max(v.abs());
            max = max.max(v);
        }
        for ((shape, rect), o) in self.shapes.iter().zip(&self.family.members).zip(out) {
            *o = match *shape {
                Shape::Cube(t) => FaceDistances {
                    outside: (max_abs - t).max(0.0),
                    inner_closed: t - max_abs,
                    inner_open: f64::INFINITY,
                },
                Shape::DiagonalCorner(c) if c.is_finite() => FaceDistances {
                    outside: (max - c).max(0.0),
                    inner_closed: c - max,
                    inner_open: f64::INFINITY,
                },
                _ => rect.face_distances(x),
            };
        }
    }
}

fn classify(rect: &Hyperrectangle) -> Shape {
    let p = rect.dim();
    let all_closed = |flags: &[bool], bounds: &[f64]| {
        flags.iter().zip(bounds).all(|(&c, b)| c || b.is_infinite())
    };
    let up = rect.upper();
    let lo = rect.lower();
    if !all_closed(rect.upper_closed(), up) || !all_closed(rect.lower_closed(), lo) {
        return Shape::Generic;
    }
    let c = up[0];
    if !(0..p).all(|j| up[j] == c) {
        return Shape::Generic;
    }
    if c.is_finite() && c >= 0.0 && (0..p).all(|j| lo[j] == -c) {
        return Shape::Cube(c);
    }
    if (0..p).all(|j| lo[j] == f64::NEG_INFINITY) {
        return Shape::DiagonalCorner(c);
    }
    Shape::Generic
}

/// Paired hit counts for two coupled laws over a family: `n10` counts draws
/// in `A` under the first law only, `n01` under the second only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairedCounts {
    pub draws: u64,
    pub hits_p: Vec<u64>,
    pub hits_q: Vec<u64>,
    pub n10: Vec<u64>,
    pub n01: Vec<u64>,
}

impl PairedCounts {
    pub fn new(members: usize) -> Self {
        Self {
            draws: 0,
            hits_p: vec![0; members],
            hits_q: vec![0; members],
            n10: vec![0; members],
            n01: vec![0; members],
        }
    }

    #[inline]
    pub fn record(&mut self, hp: &[bool], hq: &[bool]) {
        self.draws += 1;
        for i in 0..hp.len() {
            let (a, b) = (hp[i], hq[i]);
            self.hits_p[i] += a as u64;
            self.hits_q[i] += b as u64;
            self.n10[i] += (a && !b) as u64;
            self.n01[i] += (!a && b) as u64;
        }
    }

    /// Adds another batch's counts.
    pub fn merge(&mut self, other: &PairedCounts) {
        self.draws += other.draws;
        for i in 0..self.hits_p.len() {
            self.hits_p[i] += other.hits_p[i];
            self.hits_q[i] += other.hits_q[i];
            self.n10[i] += other.n10[i];
            self.n01[i] += other.n01[i];
        }
    }

    /// Distance with paired standard errors: the per-draw difference
    /// `1{X ∈ A} - 1{Y ∈ A}` takes values in `{-1, 0, 1}`.
    pub fn estimate(&self) -> Result<DistanceEstimate> {
        if self.draws == 0 {
            return Err(Error::invalid("draws", "no draws recorded"));
        }
        let b = self.draws as f64;
        let members = (0..self.hits_p.len())
            .map(|i| {
                let diff = (self.n10[i] as f64 - self.n01[i] as f64) / b;
                let second = (self.n10[i] + self.n01[i]) as f64 / b;
                let var = (second - diff * diff).max(0.0);
                RectDistance {
                    rect_id: i,
                    p_hat_p: self.hits_p[i] as f64 / b,
                    p_hat_q: self.hits_q[i] as f64 / b,
                    abs_diff: diff.abs(),
                    std_error: libm::sqrt(var / b),
                }
            })
            .collect();
        DistanceEstimate::from_members(members)
    }
}
