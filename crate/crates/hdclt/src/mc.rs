//! Parallel Monte Carlo estimators: Gaussian rectangle probabilities,
//! coupled distance estimates, anti-concentration and coupling checks, and
//! the interpolation-step estimators.

use hdclt_core::distance::{
    gaussian_rect_prob_exact, is_diagonal, FamilyEvaluator, PairedCounts, ProbMethod,
};
use hdclt_core::fit::{fit_loglog_slope, RatePoint};
use hdclt_core::geometry::{FaceDistances, Hyperrectangle, RectangleFamily};
use hdclt_core::linalg::{cholesky_lower, Matrix};
use hdclt_core::lindeberg::{
    delta_k_batch, paired_estimate, telescope_batch, Estimate, HybridSampler, MomentMatchingReport,
    Moments, SmoothedStep, TaylorMoments, TelescopeCounts, TelescopingReport, MIN_DELTA_BUDGET,
    TELESCOPE_MAX_N,
};
use hdclt_core::sampling::{GaussianSampler, SumSampler};
use hdclt_core::{DistanceEstimate, Error, PopulationSpec, RectProbEstimate, Result};
use serde::{Deserialize, Serialize};

use crate::parallel::par_batches;

/// How a partial sum is paired with its Gaussian counterpart.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CouplingMode {
    /// Shared uniforms through both coordinate-sum quantile functions.
    #[default]
    Quantile,
    /// Independent draws.
    Independent,
}

/// `P(Y ∈ A)` for `Y ~ N(0, Σ)`: exact product when `Σ` is diagonal,
/// otherwise antithetic Monte Carlo over `budget` draws.
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
    let m = par_batches(
        budget / 2,
        seed,
        Moments::default,
        |rng, draws, acc| {
            let (mut z, mut x) = (vec![0.0; p], vec![0.0; p]);
            for _ in 0..draws {
                GaussianSampler::standard_into(rng, &mut z);
                factor.lower.lower_mul_vec_into(&z, &mut x);
                let a = rect.holds(&x) as u8 as f64;
                x.iter_mut().for_each(|v| *v = -*v);
                let b = rect.holds(&x) as u8 as f64;
                acc.push(0.5 * (a + b));
            }
            Ok(())
        },
        |a, b| a.merge(b),
    )?;
    Ok(RectProbEstimate {
        value: m.mean(),
        mc_std_error: m.std_error(),
        method: ProbMethod::MonteCarlo,
    })
}

fn check_family(family: &RectangleFamily, p: usize) -> Result<()> {
    if family.is_empty() {
        return Err(Error::EmptyFamily);
    }
    if family.p != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: family.p,
        });
    }
    Ok(())
}

/// Distance over `family` between `S_n(X)` and its Gaussian counterpart
/// `N(0, R)`, with paired standard errors.
pub fn clt_distance(
    spec: &PopulationSpec,
    n: usize,
    family: &RectangleFamily,
    budget: usize,
    seed: u64,
    coupling: CouplingMode,
) -> Result<DistanceEstimate> {
    check_family(family, spec.p)?;
    if n == 0 || budget == 0 {
        return Err(Error::invalid("n", "n and budget must be positive"));
    }
    let x_sampler = SumSampler::new(spec, n, n)?;
    let y_sampler = SumSampler::new(&spec.gaussian_counterpart(), n, n)?;
    let coupled = coupling == CouplingMode::Quantile && x_sampler.supports_coupling();
    let eval = FamilyEvaluator::new(family);
    let members = family.len();
    let p = spec.p;
    let counts = par_batches(
        budget,
        seed,
        || PairedCounts::new(members),
        |rng, draws, acc| {
            let (mut rx, mut ry) = (vec![0.0; p], vec![0.0; p]);
            let (mut x, mut y) = (vec![0.0; p], vec![0.0; p]);
            let (mut hx, mut hy) = (vec![false; members], vec![false; members]);
            for _ in 0..draws {
                if coupled {
                    x_sampler.sample_coupled_into(rng, &mut rx, &mut ry, &mut x, &mut y);
                } else {
                    x_sampler.sample_into(rng, &mut rx, &mut x);
                    y_sampler.sample_into(rng, &mut ry, &mut y);
                }
                eval.evaluate(&x, &mut hx);
                eval.evaluate(&y, &mut hy);
                acc.record(&hx, &hy);
            }
            Ok(())
        },
        |a, b| a.merge(b),
    )?;
    counts.estimate()
}

/// Distance over `family` between `N(0, Σ_Y)` and `N(0, Σ_Z)`, both driven
/// by the same standard normal draws.
pub fn gaussian_pair_distance(
    sigma_y: &Matrix,
    sigma_z: &Matrix,
    family: &RectangleFamily,
    budget: usize,
    seed: u64,
) -> Result<DistanceEstimate> {
    let p = sigma_y.rows();
    check_family(family, p)?;
    if sigma_z.rows() != p {
        return Err(Error::DimensionMismatch {
            expected: p,
            found: sigma_z.rows(),
        });
    }
    let ly = cholesky_lower(sigma_y)?;
    let lz = cholesky_lower(sigma_z)?;
    let eval = FamilyEvaluator::new(family);
    let members = family.len();
    let counts = par_batches(
        budget,
        seed,
        || PairedCounts::new(members),
        |rng, draws, acc| {
            let (mut z, mut y, mut w) = (vec![0.0; p], vec![0.0; p], vec![0.0; p]);
            let (mut hy, mut hz) = (vec![false; members], vec![false; members]);
            for _ in 0..draws {
                GaussianSampler::standard_into(rng, &mut z);
                ly.lower.lower_mul_vec_into(&z, &mut y);
                lz.lower.lower_mul_vec_into(&z, &mut w);
                eval.evaluate(&y, &mut hy);
                eval.evaluate(&w, &mut hz);
                acc.record(&hy, &hz);
            }
            Ok(())
        },
        |a, b| a.merge(b),
    )?;
    counts.estimate()
}

/// Boundary-layer probabilities `P(ξ ∈ ∂A(t))` for `ξ ~ N(0, Σ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NazarovReport {
    pub p: usize,
    /// `min_j sqrt(Σ_jj)`.
    pub varsigma: f64,
    pub t_grid: Vec<f64>,
    pub method: ProbMethod,
    /// Member whose boundary mass, summed over the grid, is largest.
    pub tracked_member: usize,
    /// Its boundary probability at each `t`.
    pub boundary_probs: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// `max_{A, t} P̂(∂A(t)) / (t sqrt(log p) / ς)`, with `log p` floored at 1.
    pub max_ratio: f64,
    pub t_exponent: f64,
    pub t_exponent_std_error: f64,
    pub pass: bool,
}

/// Largest admissible normalized boundary mass.
pub const NAZAROV_RATIO_LIMIT: f64 = 10.0;
/// Admissible window for the fitted exponent of `t`.
pub const NAZAROV_EXPONENT_WINDOW: (f64, f64) = (0.9, 1.1);
/// Default grid of layer half-widths.
pub const NAZAROV_T_GRID: [f64; 4] = [0.01, 0.02, 0.04, 0.08];

/// Estimates `P(ξ ∈ ∂A(t))` over a family and grid, then checks the
/// normalized mass against [`NAZAROV_RATIO_LIMIT`] and the linear scaling in
/// `t` against [`NAZAROV_EXPONENT_WINDOW`].
pub fn nazarov_check(
    sigma: &Matrix,
    family: &RectangleFamily,
    t_grid: &[f64],
    budget: usize,
    seed: u64,
) -> Result<NazarovReport> {
    let p = sigma.rows();
    check_family(family, p)?;
    if t_grid.len() < 3 || t_grid.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::invalid("t_grid", "need at least 3 positive widths"));
    }
    let min_var = sigma.diag().into_iter().fold(f64::INFINITY, f64::min);
    if !(min_var > 0.0) {
        return Err(Error::NonPositiveDiagonal {
            index: sigma.diag().iter().position(|&v| !(v > 0.0)).unwrap_or(0),
        });
    }
    let varsigma = min_var.sqrt();
    let members = family.len();
    let nt = t_grid.len();
    // probs[m * nt + i], errors likewise
    let (probs, errors, method) = if is_diagonal(sigma) {
        let mut probs = vec![0.0; members * nt];
        for (m, rect) in family.members.iter().enumerate() {
            for (i, &t) in t_grid.iter().enumerate() {
                let outer =
                    gaussian_rect_prob_exact(sigma, &rect.enlarge(t)?)?.map_or(0.0, |e| e.value);
                let inner = match rect.shrink(t)? {
                    Some(r) => gaussian_rect_prob_exact(sigma, &r)?.map_or(0.0, |e| e.value),
                    None => 0.0,
                };
                probs[m * nt + i] = (outer - inner).max(0.0);
            }
        }
        (probs, vec![0.0; members * nt], ProbMethod::ExactProduct)
    } else {
        let factor = cholesky_lower(sigma)?;
        let eval = FamilyEvaluator::new(family);
        let counts = par_batches(
            budget,
            seed,
            || (0u64, vec![0u64; members * nt]),
            |rng, draws, acc| {
                let (mut z, mut x) = (vec![0.0; p], vec![0.0; p]);
                let blank = FaceDistances {
                    outside: 0.0,
                    inner_closed: 0.0,
                    inner_open: 0.0,
                };
                let mut faces = vec![blank; members];
                for _ in 0..draws {
                    GaussianSampler::standard_into(rng, &mut z);
                    factor.lower.lower_mul_vec_into(&z, &mut x);
                    eval.face_distances_into(&x, &mut faces);
                    for (m, f) in faces.iter().enumerate() {
                        for (i, &t) in t_grid.iter().enumerate() {
                            acc.1[m * nt + i] += f.in_boundary(t) as u64;
                        }
                    }
                }
                acc.0 += draws as u64;
                Ok(())
            },
            |a, b| {
                a.0 += b.0;
                a.1.iter_mut().zip(&b.1).for_each(|(x, y)| *x += y);
            },
        )?;
        let total = counts.0 as f64;
        let probs: Vec<f64> = counts.1.iter().map(|&c| c as f64 / total).collect();
        let errors = probs
            .iter()
            .map(|q| (q * (1.0 - q) / total).sqrt())
            .collect();
        (probs, errors, ProbMethod::MonteCarlo)
    };
    let log_factor = (p as f64).ln().max(1.0).sqrt();
    let mut max_ratio: f64 = 0.0;
    for m in 0..members {
        for (i, &t) in t_grid.iter().enumerate() {
            max_ratio = max_ratio.max(probs[m * nt + i] / (t * log_factor / varsigma));
        }
    }
    let mass = |m: usize| probs[m * nt..(m + 1) * nt].iter().sum::<f64>();
    let tracked = (0..members).fold(0, |best, m| if mass(m) > mass(best) { m } else { best });
    let boundary_probs = probs[tracked * nt..(tracked + 1) * nt].to_vec();
    let std_errors = errors[tracked * nt..(tracked + 1) * nt].to_vec();
    let points: Vec<RatePoint> = t_grid
        .iter()
        .zip(boundary_probs.iter().zip(&std_errors))
        .map(|(&t, (&d, &se))| RatePoint {
            n: t,
            distance: d,
            std_error: se,
        })
        .collect();
    let fit = fit_loglog_slope(&points)?;
    let (lo, hi) = NAZAROV_EXPONENT_WINDOW;
    Ok(NazarovReport {
        p,
        varsigma,
        t_grid: t_grid.to_vec(),
        method,
        tracked_member: tracked,
        boundary_probs,
        std_errors,
        max_ratio,
        t_exponent: fit.slope,
        t_exponent_std_error: fit.slope_std_error,
        pass: max_ratio <= NAZAROV_RATIO_LIMIT && (lo..=hi).contains(&fit.slope),
    })
}

/// Pointwise check of
/// `1{ζ ∈ A} - 1{ξ ∈ A} ≤ 1{ξ ∈ ∂A(t)} + 1{‖ζ - ξ‖∞ ≥ t}`
/// for coupled `ζ = S_n(X)` and Gaussian `ξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingReport {
    pub draws: u64,
    pub pairs: usize,
    pub violations: u64,
    /// Outcomes with `ζ ∈ A`, `ξ ∉ A`, where the inequality has content.
    pub active: u64,
    pub pass: bool,
}

pub fn coupling_check(
    spec: &PopulationSpec,
    n: usize,
    pairs: &[(Hyperrectangle, f64)],
    budget: usize,
    seed: u64,
) -> Result<CouplingReport> {
    if pairs.iter().any(|(r, t)| r.dim() != spec.p || !(*t >= 0.0)) {
        return Err(Error::invalid(
            "pairs",
            "dimension mismatch or negative width",
        ));
    }
    let sampler = SumSampler::new(spec, n, n)?;
    let p = spec.p;
    let (draws, violations, active) = par_batches(
        budget,
        seed,
        || (0u64, 0u64, 0u64),
        |rng, count, acc| {
            let (mut rx, mut ry) = (vec![0.0; p], vec![0.0; p]);
            let (mut zeta, mut xi) = (vec![0.0; p], vec![0.0; p]);
            for _ in 0..count {
                sampler.sample_coupled_into(rng, &mut rx, &mut ry, &mut zeta, &mut xi);
                let gap = zeta
                    .iter()
                    .zip(&xi)
                    .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                for (rect, t) in pairs {
                    let lhs = rect.holds(&zeta) as i32 - rect.holds(&xi) as i32;
                    let rhs = rect.face_distances(&xi).in_boundary(*t) as i32 + (gap >= *t) as i32;
                    acc.1 += (lhs > rhs) as u64;
                    acc.2 += (lhs == 1) as u64;
                }
            }
            acc.0 += count as u64;
            Ok(())
        },
        |a, b| {
            a.0 += b.0;
            a.1 += b.1;
            a.2 += b.2;
        },
    )?;
    Ok(CouplingReport {
        draws,
        pairs: pairs.len(),
        violations,
        active,
        pass: violations == 0,
    })
}

/// Parallel form of [`hdclt_core::lindeberg::delta_k_estimate`]; identical output.
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
    if rect.dim() != sampler.p() {
        return Err(Error::DimensionMismatch {
            expected: sampler.p(),
            found: rect.dim(),
        });
    }
    let counts = par_batches(
        budget,
        seed,
        || PairedCounts::new(1),
        |rng, draws, acc| {
            delta_k_batch(&sampler, rect, rng, draws, acc);
            Ok(())
        },
        |a, b| a.merge(b),
    )?;
    paired_estimate(&counts)
}

/// Parallel form of [`hdclt_core::lindeberg::moment_matching_check`]; identical output.
pub fn moment_matching_check(
    spec_x: &PopulationSpec,
    n: usize,
    k: usize,
    rect: &Hyperrectangle,
    budget: usize,
    seed: u64,
) -> Result<MomentMatchingReport> {
    let step = SmoothedStep::new(spec_x, n, k, rect)?;
    let acc = par_batches(
        budget,
        seed,
        TaylorMoments::default,
        |rng, draws, acc| step.batch(rng, draws, acc),
        |a, b| a.merge(b),
    )?;
    Ok(MomentMatchingReport::from_moments(step.point(), &acc))
}

/// Parallel form of [`hdclt_core::lindeberg::telescoping_check`]; identical output.
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
    if rect.dim() != spec_x.p {
        return Err(Error::DimensionMismatch {
            expected: spec_x.p,
            found: rect.dim(),
        });
    }
    let factor = spec_x.mixing()?;
    let acc = par_batches(
        budget,
        seed,
        || TelescopeCounts::new(n),
        |rng, draws, acc| {
            telescope_batch(spec_x, &factor, n, rect, rng, draws, acc);
            Ok(())
        },
        |a, b| a.merge(b),
    )?;
    TelescopingReport::from_counts(n, &acc)
}
