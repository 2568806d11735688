//! Correlation models, entry laws and population sampling, plus the
//! covariance and Orlicz-norm quantities the approximation bounds are
//! stated in.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{LN_2, SQRT_2};

use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{cholesky_lower, CholeskyFactor, Matrix};
use crate::seed::{rng_from_seed, Rng};
use crate::special::norm_cdf;

const SQRT_3: f64 = 1.732_050_807_568_877_2;

/// Correlation structure of the population.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum CorrelationModel {
    Identity,
    /// Constant off-diagonal correlation `rho` in `[0, 1)`.
    Equicorrelated(f64),
    /// `R_ij = phi^|i-j|` with `phi` in `(-1, 1)`.
    Ar1(f64),
    /// User-supplied correlation matrix.
    Explicit(Matrix),
}

impl CorrelationModel {
    fn validate(&self, p: usize) -> Result<()> {
        match self {
            CorrelationModel::Identity => Ok(()),
            CorrelationModel::Equicorrelated(rho) => {
                if !(0.0..1.0).contains(rho) {
                    return Err(Error::invalid("rho", format!("{rho} not in [0, 1)")));
                }
                Ok(())
            }
            CorrelationModel::Ar1(phi) => {
                if !(phi.abs() < 1.0) {
                    return Err(Error::invalid("phi", format!("{phi} not in (-1, 1)")));
                }
                Ok(())
            }
            CorrelationModel::Explicit(m) => {
                if m.rows() != p || m.cols() != p {
                    return Err(Error::DimensionMismatch {
                        expected: p,
                        found: if m.rows() != p { m.rows() } else { m.cols() },
                    });
                }
                Ok(())
            }
        }
    }
}

/// Law of the i.i.d. entries before mixing; every variant has mean 0 and variance 1.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum EntryLaw {
    StandardNormal,
    Rademacher,
    /// Laplace with scale `1/sqrt(2)`.
    ScaledLaplace,
    /// Uniform on `[-sqrt(3), sqrt(3)]`.
    ScaledUniform,
    /// Two-point law taking the positive value with probability `pi`.
    TwoPointAsymmetric(f64),
}

impl EntryLaw {
    pub fn validate(&self) -> Result<()> {
        if let EntryLaw::TwoPointAsymmetric(pi) = self {
            if !(*pi > 0.0 && *pi < 1.0) {
                return Err(Error::invalid("pi", format!("{pi} not in (0, 1)")));
            }
        }
        Ok(())
    }

    /// Support points `(high, low)` and `P(high)` of a two-point law.
    /// Rademacher is the symmetric case.
    pub fn two_point_support(&self) -> Option<(f64, f64, f64)> {
        match *self {
            EntryLaw::Rademacher => Some((1.0, -1.0, 0.5)),
            EntryLaw::TwoPointAsymmetric(pi) => Some((
                libm::sqrt((1.0 - pi) / pi),
                -libm::sqrt(pi / (1.0 - pi)),
                pi,
            )),
            _ => None,
        }
    }

    #[inline]
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        match *self {
            EntryLaw::StandardNormal => StandardNormal.sample(rng),
            EntryLaw::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            EntryLaw::ScaledLaplace => {
                let e: f64 = Exp1.sample(rng);
                let mag = e * core::f64::consts::FRAC_1_SQRT_2;
                if rng.random::<bool>() {
                    mag
                } else {
                    -mag
                }
            }
            EntryLaw::ScaledUniform => rng.random_range(-SQRT_3..SQRT_3),
            EntryLaw::TwoPointAsymmetric(pi) => {
                let (hi, lo, _) = self.two_point_support().unwrap_or((0.0, 0.0, pi));
                if rng.random::<f64>() < pi {
                    hi
                } else {
                    lo
                }
            }
        }
    }

    /// `E exp(|U|^q / t^q)`, exact where the law allows it.
    fn orlicz_expectation_exact(&self, q: u32, t: f64) -> Option<f64> {
        match (*self, q) {
            (EntryLaw::StandardNormal, 2) => {
                let a = 1.0 - 2.0 / (t * t);
                Some(if a <= 0.0 {
                    f64::INFINITY
                } else {
                    1.0 / libm::sqrt(a)
                })
            }
            (EntryLaw::StandardNormal, 1) => {
                let c = 1.0 / t;
                Some(2.0 * libm::exp(0.5 * c * c) * norm_cdf(c))
            }
            (EntryLaw::ScaledLaplace, 1) => {
                let rate = SQRT_2;
                Some(if 1.0 / t >= rate {
                    f64::INFINITY
                } else {
                    rate / (rate - 1.0 / t)
                })
            }
            (EntryLaw::ScaledLaplace, _) => Some(f64::INFINITY),
            (EntryLaw::ScaledUniform, 1) => Some((t / SQRT_3) * libm::expm1(SQRT_3 / t)),
            (EntryLaw::Rademacher, _) | (EntryLaw::TwoPointAsymmetric(_), _) => {
                let (hi, lo, pi) = self.two_point_support()?;
                let f = |x: f64| libm::exp(libm::pow(x.abs() / t, q as f64));
                Some(pi * f(hi) + (1.0 - pi) * f(lo))
            }
            _ => None,
        }
    }

    /// Log density of `|U|` on `[0, upper)` for the continuous laws.
    fn ln_abs_density(&self, u: f64) -> f64 {
        match *self {
            EntryLaw::StandardNormal => libm::log(2.0 * crate::special::INV_SQRT_2PI) - 0.5 * u * u,
            EntryLaw::ScaledLaplace => libm::log(SQRT_2) - SQRT_2 * u,
            EntryLaw::ScaledUniform if u <= SQRT_3 => -libm::log(SQRT_3),
            _ => f64::NEG_INFINITY,
        }
    }

    fn orlicz_expectation_quadrature(&self, q: u32, t: f64) -> f64 {
        if self.two_point_support().is_some() {
            return self.orlicz_expectation_exact(q, t).unwrap_or(f64::INFINITY);
        }
        let qf = q as f64;
        let f = |u: f64| libm::exp(self.ln_abs_density(u) + libm::pow(u / t, qf));
        let upper = match self {
            EntryLaw::ScaledUniform => SQRT_3,
            _ => {
                // walk out until the integrand is negligible; give up if it never decays
                let mut u: f64 = 1.0;
                loop {
                    let v = f(u);
                    if v.is_finite() && v < 1e-22 && f(2.0 * u) < v {
                        break u;
                    }
                    if u > 1e4 || !v.is_finite() {
                        return f64::INFINITY;
                    }
                    u *= 1.25;
                }
            }
        };
        adaptive_simpson(&f, 0.0, upper, 1e-12)
    }
}

/// Adaptive Simpson quadrature on a finite interval.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    // split into panels so narrow peaks are not missed
    let panels = 64;
    let h = (b - a) / panels as f64;
    (0..panels)
        .map(|i| {
            let lo = a + h * i as f64;
            let hi = lo + h;
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            rec(f, lo, hi, fa, fm, fb, whole, tol / panels as f64, 40)
        })
        .sum()
}

/// Solves `g(t) = 2` for a decreasing `g`, returning `∞` when no finite root exists.
fn solve_orlicz<G: Fn(f64) -> f64>(g: G) -> f64 {
    let mut hi = 1.0;
    let mut guard = 0;
    while g(hi) > 2.0 {
        hi *= 2.0;
        guard += 1;
        if guard > 60 {
            return f64::INFINITY;
        }
    }
    let mut lo = hi;
    guard = 0;
    while g(lo) <= 2.0 {
        lo *= 0.5;
        guard += 1;
        if guard > 200 {
            return lo;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 2.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn check_q(q: u32) -> Result<()> {
    if q == 1 || q == 2 {
        Ok(())
    } else {
        Err(Error::invalid("q", format!("{q} not in {{1, 2}}")))
    }
}

/// The ψ_q-Orlicz norm `inf{t > 0 : E exp(|U|^q / t^q) <= 2}` of an entry law.
///
/// Closed forms are used where they exist; otherwise the root is bracketed
/// and bisected on the exact expectation. Returns `f64::INFINITY` when the
/// expectation diverges for every `t` (e.g. Laplace entries with `q = 2`).
pub fn orlicz_norm(law: EntryLaw, q: u32) -> Result<f64> {
    check_q(q)?;
    law.validate()?;
    Ok(match (law, q) {
        (EntryLaw::Rademacher, _) => libm::pow(1.0 / LN_2, 1.0 / q as f64),
        (EntryLaw::StandardNormal, 2) => libm::sqrt(8.0 / 3.0),
        (EntryLaw::ScaledLaplace, 1) => SQRT_2,
        (EntryLaw::ScaledLaplace, 2) => f64::INFINITY,
        (EntryLaw::ScaledUniform, 2) => {
            // no elementary form (erfi); fall back to quadrature
            solve_orlicz(|t| law.orlicz_expectation_quadrature(q, t))
        }
        _ => solve_orlicz(|t| law.orlicz_expectation_exact(q, t).unwrap_or(f64::INFINITY)),
    })
}

/// Same quantity as [`orlicz_norm`], computed by numerical quadrature of
/// the moment-generating integral for continuous laws.
pub fn orlicz_norm_quadrature(law: EntryLaw, q: u32) -> Result<f64> {
    check_q(q)?;
    law.validate()?;
    if law == EntryLaw::ScaledLaplace && q == 2 {
        return Ok(f64::INFINITY);
    }
    Ok(solve_orlicz(|t| law.orlicz_expectation_quadrature(q, t)))
}

/// Orlicz norm of the empirical law of `values`.
pub fn empirical_orlicz_norm(values: &[f64], q: u32) -> Result<f64> {
    check_q(q)?;
    if values.is_empty() {
        return Err(Error::invalid("values", "empty sample"));
    }
    let qf = q as f64;
    let n = values.len() as f64;
    Ok(solve_orlicz(|t| {
        values
            .iter()
            .map(|v| libm::exp(libm::pow(v.abs() / t, qf)))
            .sum::<f64>()
            / n
    }))
}

/// Complete recipe for an i.i.d. population: rows are `L ξ` where `ξ` has
/// i.i.d. `law` entries and `L` is the Cholesky factor of the correlation model.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PopulationSpec {
    pub p: usize,
    pub law: EntryLaw,
    pub model: CorrelationModel,
    pub seed: u64,
}

impl PopulationSpec {
    pub fn new(p: usize, law: EntryLaw, model: CorrelationModel, seed: u64) -> Result<Self> {
        let spec = Self {
            p,
            law,
            model,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::invalid("p", "must be positive"));
        }
        self.law.validate()?;
        self.model.validate(self.p)
    }

    pub fn correlation(&self) -> Result<Matrix> {
        build_correlation(&self.model, self.p)
    }

    pub fn mixing(&self) -> Result<CholeskyFactor> {
        cholesky_lower(&self.correlation()?)
    }

    /// The Gaussian population with the same correlation model.
    pub fn gaussian_counterpart(&self) -> Self {
        Self {
            law: EntryLaw::StandardNormal,
            ..self.clone()
        }
    }
}

/// `n × p` block of observations together with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: Matrix,
    spec: Option<PopulationSpec>,
    seed: u64,
}

impl SampleMatrix {
    /// Wraps externally obtained data (no population recipe attached).
    pub fn from_matrix(data: Matrix) -> Result<Self> {
        if data.rows() == 0 || data.cols() == 0 {
            return Err(Error::invalid(
                "data",
                "need at least one row and one column",
            ));
        }
        Ok(Self {
            data,
            spec: None,
            seed: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.data.rows()
    }

    pub fn p(&self) -> usize {
        self.data.cols()
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn spec(&self) -> Option<&PopulationSpec> {
        self.spec.as_ref()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.data.row(i)
    }

    pub fn column_means(&self) -> Vec<f64> {
        column_means(&self.data)
    }

    pub fn into_matrix(self) -> Matrix {
        self.data
    }
}

pub(crate) fn column_means(m: &Matrix) -> Vec<f64> {
    let mut mean = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (acc, v) in mean.iter_mut().zip(m.row(i)) {
            *acc += v;
        }
    }
    let n = m.rows() as f64;
    mean.iter_mut().for_each(|v| *v /= n);
    mean
}

/// Materializes the `p × p` correlation matrix of a model.
pub fn build_correlation(model: &CorrelationModel, p: usize) -> Result<Matrix> {
    if p == 0 {
        return Err(Error::invalid("p", "must be positive"));
    }
    model.validate(p)?;
    let m = match model {
        CorrelationModel::Identity => Matrix::identity(p),
        CorrelationModel::Equicorrelated(rho) => {
            let mut m = Matrix::zeros(p, p);
            for i in 0..p {
                for j in 0..p {
                    m[(i, j)] = if i == j { 1.0 } else { *rho };
                }
            }
            m
        }
        CorrelationModel::Ar1(phi) => {
            let mut m = Matrix::zeros(p, p);
            for i in 0..p {
                m[(i, i)] = 1.0;
                let mut v = 1.0;
                for j in (i + 1)..p {
                    v *= phi;
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
            }
            m
        }
        CorrelationModel::Explicit(m) => {
            for i in 0..p {
                if m[(i, i)] != 1.0 {
                    return Err(Error::invalid(
                        "matrix",
                        format!("diagonal entry {i} is {} (expected 1)", m[(i, i)]),
                    ));
                }
            }
            if !m.is_symmetric() {
                return Err(Error::NotSymmetric {
                    asymmetry: m.asymmetry(),
                });
            }
            let lambda = crate::linalg::min_eigenvalue(m)?;
            if lambda < -crate::linalg::PSD_TOLERANCE {
                return Err(Error::NotPositiveSemidefinite {
                    min_eigenvalue: lambda,
                });
            }
            m.clone()
        }
    };
    Ok(m)
}

pub use crate::linalg::min_eigenvalue;

/// Draws `n` i.i.d. rows from the population; deterministic in `(spec, n, seed)`.
pub fn sample_population(spec: &PopulationSpec, n: usize, seed: u64) -> Result<SampleMatrix> {
    if n == 0 {
        return Err(Error::invalid("n", "must be positive"));
    }
    spec.validate()?;
    let factor = spec.mixing()?;
    let p = spec.p;
    let mut rng = rng_from_seed(seed);
    let mut data = Matrix::zeros(n, p);
    let mut xi = vec![0.0; p];
    for i in 0..n {
        xi.iter_mut().for_each(|v| *v = spec.law.sample(&mut rng));
        factor.lower.lower_mul_vec_into(&xi, data.row_mut(i));
    }
    Ok(SampleMatrix {
        data,
        spec: Some(spec.clone()),
        seed,
    })
}

/// Sample covariance with divisor `n`.
pub fn sample_covariance(x: &SampleMatrix) -> Matrix {
    covariance_of(x.data())
}

pub(crate) fn covariance_of(m: &Matrix) -> Matrix {
    let p = m.cols();
    let mean = column_means(m);
    let mut cov = Matrix::zeros(p, p);
    let mut centered = vec![0.0; p];
    for i in 0..m.rows() {
        for ((c, v), mu) in centered.iter_mut().zip(m.row(i)).zip(&mean) {
            *c = v - mu;
        }
        for a in 0..p {
            let ca = centered[a];
            let row = cov.row_mut(a);
            for b in a..p {
                row[b] += ca * centered[b];
            }
        }
    }
    let n = m.rows() as f64;
    for a in 0..p {
        for b in a..p {
            let v = cov[(a, b)] / n;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    cov
}

/// `max_ij |ΣX_ij - ΣY_ij| / sqrt(ΣY_ii ΣY_jj)`: the entrywise sup-norm of the
/// covariance difference after standardizing by the diagonal of `ΣY`.
pub fn delta_infinity(sigma_x: &Matrix, sigma_y: &Matrix) -> Result<f64> {
    let p = sigma_y.rows();
    if !sigma_y.is_square() || sigma_x.rows() != p || sigma_x.cols() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: sigma_x.rows(),
        });
    }
    let scale: Vec<f64> = sigma_y
        .diag()
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            if d > 0.0 {
                Ok(1.0 / libm::sqrt(d))
            } else {
                Err(Error::NonPositiveDiagonal { index: i })
            }
        })
        .collect::<Result<_>>()?;
    let mut worst: f64 = 0.0;
    for i in 0..p {
        for j in 0..p {
            let d = (sigma_x[(i, j)] - sigma_y[(i, j)]) * scale[i] * scale[j];
            worst = worst.max(d.abs());
        }
    }
    Ok(worst)
}
