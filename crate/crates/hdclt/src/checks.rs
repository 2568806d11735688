//! Self-check suites over the smoothing calculus, rectangle geometry,
//! interpolation identities and bootstrap contracts.
//!
//! Every check is a deterministic function of its scale and seed.

use hdclt_core::bootstrap::{
    bootstrap_quantile, max_statistic, max_statistic_centered, mean_test, multiplier_sample,
    simultaneous_cis, BootstrapMethod, BootstrapSummary,
};
use hdclt_core::geometry::{make_family, FamilyKind, Hyperrectangle};
use hdclt_core::linalg::Matrix;
use hdclt_core::lindeberg::{exact_telescoping_p1, taylor_terms};
use hdclt_core::seed::{derive_seed, rng_from_seed, Rng};
use hdclt_core::smoothing::{far_field_bound_check, scaling_check, SmoothedIndicator};
use hdclt_core::special::norm_cdf;
use hdclt_core::vectors::{
    build_correlation, sample_population, CorrelationModel, EntryLaw, SampleMatrix,
};
use hdclt_core::{fit_loglog_slope, PopulationSpec, RatePoint};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::mc::{coupling_check, moment_matching_check, nazarov_check, NAZAROV_T_GRID};
use crate::parallel::par_indexed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Smoothing,
    Geometry,
    Lindeberg,
    Bootstrap,
    All,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Smoothing => "smoothing",
            Suite::Geometry => "geometry",
            Suite::Lindeberg => "lindeberg",
            Suite::Bootstrap => "bootstrap",
            Suite::All => "all",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub id: String,
    pub pass: bool,
    pub detail: Value,
}

impl CheckOutcome {
    fn new(id: impl Into<String>, pass: bool, detail: Value) -> Self {
        Self {
            id: id.into(),
            pass,
            detail,
        }
    }

    fn from_result(id: impl Into<String>, r: hdclt_core::Result<(bool, Value)>) -> Self {
        match r {
            Ok((pass, detail)) => Self::new(id, pass, detail),
            Err(e) => Self::new(id, false, json!({ "error": e.to_string() })),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub pass: bool,
    pub failed: Vec<String>,
    pub checks: Vec<CheckOutcome>,
}

/// Probe counts and budgets of every check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckScale {
    pub fd_probes: usize,
    pub fd_dims: Vec<usize>,
    pub dilation_probes: usize,
    pub far_field_points: usize,
    pub growth_probes: usize,
    pub boundary_probes: usize,
    pub coupling_draws: usize,
    pub coupling_pairs: usize,
    pub nazarov_dims: Vec<usize>,
    pub nazarov_budget: usize,
    pub taylor_probes: usize,
    pub telescoping_max_n: usize,
    pub telescoping_t_points: usize,
    pub matching_configs: usize,
    pub matching_budget: usize,
    pub quantile_summaries: usize,
    pub ci_probes: usize,
    pub multiplier_b: usize,
}

impl CheckScale {
    /// Sizes used by `hdclt check`.
    pub fn quick() -> Self {
        Self {
            fd_probes: 500,
            fd_dims: vec![1, 2, 4, 8],
            dilation_probes: 500,
            far_field_points: 1000,
            growth_probes: 1000,
            boundary_probes: 10_000,
            coupling_draws: 20_000,
            coupling_pairs: 50,
            nazarov_dims: vec![1, 4, 16],
            nazarov_budget: 200_000,
            taylor_probes: 2_000,
            telescoping_max_n: 12,
            telescoping_t_points: 21,
            matching_configs: 8,
            matching_budget: 40_000,
            quantile_summaries: 2_000,
            ci_probes: 1_000,
            multiplier_b: 5_000,
        }
    }

    /// Sizes of the acceptance suite.
    pub fn full() -> Self {
        Self {
            fd_probes: 10_000,
            fd_dims: vec![1, 2, 4, 8],
            dilation_probes: 10_000,
            far_field_points: 1000,
            growth_probes: 10_000,
            boundary_probes: 10_000,
            coupling_draws: 100_000,
            coupling_pairs: 50,
            nazarov_dims: vec![1, 4, 16, 64],
            nazarov_budget: 1_000_000,
            taylor_probes: 10_000,
            telescoping_max_n: 12,
            telescoping_t_points: 21,
            matching_configs: 20,
            matching_budget: 200_000,
            quantile_summaries: 10_000,
            ci_probes: 1_000,
            multiplier_b: 20_000,
        }
    }
}

/// Runs one suite (or all of them) at `scale`.
pub fn run_suite(suite: Suite, scale: &CheckScale, seed: u64) -> SuiteReport {
    let mut checks = Vec::new();
    let wanted = |s: Suite| suite == Suite::All || suite == s;
    if wanted(Suite::Smoothing) {
        checks.extend(smoothing_checks(scale, derive_seed(seed, 1)));
    }
    if wanted(Suite::Geometry) {
        checks.extend(geometry_checks(scale, derive_seed(seed, 2)));
    }
    if wanted(Suite::Lindeberg) {
        checks.extend(lindeberg_checks(scale, derive_seed(seed, 3)));
    }
    if wanted(Suite::Bootstrap) {
        checks.extend(bootstrap_checks(scale, derive_seed(seed, 4)));
    }
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.pass)
        .map(|c| c.id.clone())
        .collect();
    SuiteReport {
        suite,
        pass: failed.is_empty(),
        failed,
        checks,
    }
}

pub fn smoothing_checks(scale: &CheckScale, seed: u64) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    for (i, &p) in scale.fd_dims.iter().enumerate() {
        out.push(CheckOutcome::from_result(
            format!("smoothing.finite_difference.p{p}"),
            finite_difference_check(p, scale.fd_probes, derive_seed(seed, i as u64)),
        ));
    }
    out.push(CheckOutcome::from_result(
        "smoothing.dilation",
        dilation_check(scale.dilation_probes, derive_seed(seed, 100)),
    ));
    out.push(CheckOutcome::from_result(
        "smoothing.far_field",
        far_field_sweep(scale.far_field_points, derive_seed(seed, 101)),
    ));
    for r in 1..=3 {
        out.push(CheckOutcome::from_result(
            format!("smoothing.growth.order{r}"),
            growth_check(r, scale.growth_probes, derive_seed(seed, 110 + r as u64)),
        ));
    }
    out.push(CheckOutcome::from_result(
        "smoothing.sharp_limit",
        sharp_limit_check(1000, derive_seed(seed, 120)),
    ));
    out
}

pub fn geometry_checks(scale: &CheckScale, seed: u64) -> Vec<CheckOutcome> {
    vec![
        CheckOutcome::from_result(
            "geometry.boundary",
            boundary_check(scale.boundary_probes, derive_seed(seed, 0)),
        ),
        CheckOutcome::from_result(
            "geometry.coupling",
            coupling_sweep(
                scale.coupling_pairs,
                scale.coupling_draws,
                derive_seed(seed, 1),
            ),
        ),
        CheckOutcome::from_result(
            "geometry.nazarov",
            nazarov_sweep(
                &scale.nazarov_dims,
                scale.nazarov_budget,
                derive_seed(seed, 2),
            ),
        ),
    ]
}

pub fn lindeberg_checks(scale: &CheckScale, seed: u64) -> Vec<CheckOutcome> {
    vec![
        CheckOutcome::from_result(
            "lindeberg.taylor_residual",
            taylor_residual_check(scale.taylor_probes, derive_seed(seed, 0)),
        ),
        CheckOutcome::from_result(
            "lindeberg.telescoping",
            telescoping_oracle_check(scale.telescoping_max_n, scale.telescoping_t_points),
        ),
        CheckOutcome::from_result(
            "lindeberg.moment_matching",
            moment_matching_sweep(
                scale.matching_configs,
                scale.matching_budget,
                derive_seed(seed, 1),
            ),
        ),
    ]
}

pub fn bootstrap_checks(scale: &CheckScale, seed: u64) -> Vec<CheckOutcome> {
    vec![
        CheckOutcome::from_result(
            "bootstrap.quantile_contract",
            quantile_contract_check(scale.quantile_summaries, derive_seed(seed, 0)),
        ),
        CheckOutcome::from_result(
            "bootstrap.interval_identity",
            interval_identity_check(scale.ci_probes, derive_seed(seed, 1)),
        ),
        CheckOutcome::from_result(
            "bootstrap.multiplier_law",
            multiplier_law_check(scale.multiplier_b, derive_seed(seed, 2)),
        ),
    ]
}

/// Random rectangle with endpoints in `[-2, 2]`, widths at least 0.2 and
/// each endpoint infinite with probability `inf_frac`.
pub fn random_rect(p: usize, rng: &mut Rng, inf_frac: f64) -> Hyperrectangle {
    let mut lo = Vec::with_capacity(p);
    let mut hi = Vec::with_capacity(p);
    for _ in 0..p {
        let a: f64 = rng.random_range(-2.0..1.8);
        let b = a + rng.random_range(0.2..3.0);
        lo.push(if rng.random::<f64>() < inf_frac {
            f64::NEG_INFINITY
        } else {
            a
        });
        hi.push(if rng.random::<f64>() < inf_frac {
            f64::INFINITY
        } else {
            b
        });
    }
    Hyperrectangle::closed(lo, hi).expect("ordered endpoints")
}

fn random_point(p: usize, rng: &mut Rng, half: f64) -> Vec<f64> {
    (0..p).map(|_| rng.random_range(-half..half)).collect()
}

/// Relative tolerance of the finite-difference comparison.
pub const FD_RTOL: f64 = 1e-4;
/// Absolute floor of the finite-difference comparison.
pub const FD_ATOL: f64 = 1e-10;

/// Worst `|fd - exact| / (FD_RTOL |exact| + FD_ATOL)` over all entries of
/// the order `1..=3` tensors at `s`, using a five-point central stencil with
/// step `1e-4 ε` on the next lower order.
pub fn finite_difference_ratio(si: &SmoothedIndicator, s: &[f64]) -> hdclt_core::Result<f64> {
    let p = si.dim();
    let h = 1e-4 * si.eps();
    let lower = |x: &[f64], order: usize| -> hdclt_core::Result<Vec<f64>> {
        if order == 0 {
            Ok(vec![si.phi(x)?])
        } else {
            Ok(si.derivative(x, order)?.entries)
        }
    };
    let mut worst: f64 = 0.0;
    let mut x = s.to_vec();
    for order in 1..=3 {
        let exact = si.derivative(s, order)?.entries;
        for l in 0..p {
            let mut at = |d: f64| -> hdclt_core::Result<Vec<f64>> {
                x[l] = s[l] + d;
                let v = lower(&x, order - 1);
                x[l] = s[l];
                v
            };
            let (m2, m1, p1, p2) = (at(-2.0 * h)?, at(-h)?, at(h)?, at(2.0 * h)?);
            for base in 0..m1.len() {
                let fd = (m2[base] - 8.0 * m1[base] + 8.0 * p1[base] - p2[base]) / (12.0 * h);
                let a = exact[base * p + l];
                worst = worst.max((fd - a).abs() / (FD_RTOL * a.abs() + FD_ATOL));
            }
        }
    }
    Ok(worst)
}

fn fd_probe(p: usize, rng: &mut Rng) -> (SmoothedIndicator, Vec<f64>) {
    let rect = random_rect(p, rng, 0.15);
    let eps = rng.random_range(0.25..1.0);
    let s = random_point(p, rng, 3.0);
    (SmoothedIndicator::new(rect, eps).expect("positive eps"), s)
}

pub fn finite_difference_check(
    p: usize,
    probes: usize,
    seed: u64,
) -> hdclt_core::Result<(bool, Value)> {
    let ratios = par_indexed(probes, |i| {
        let mut rng = rng_from_seed(derive_seed(seed, i as u64));
        let (si, s) = fd_probe(p, &mut rng);
        finite_difference_ratio(&si, &s)
    })?;
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    let failures = ratios.iter().filter(|&&r| r > 1.0).count();
    Ok((
        failures == 0,
        json!({ "p": p, "probes": probes, "worst_ratio": worst, "failures": failures }),
    ))
}

/// Relative tolerance of the dilation identity.
pub const DILATION_RTOL: f64 = 1e-10;

pub fn dilation_check(probes: usize, seed: u64) -> hdclt_core::Result<(bool, Value)> {
    let errs = par_indexed(probes, |i| {
        let mut rng = rng_from_seed(derive_seed(seed, i as u64));
        let p = [1, 2, 3, 4][i % 4];
        let order = 1 + (i / 4) % 3;
        let rect = random_rect(p, &mut rng, 0.15);
        let eps = rng.random_range(-3.0f64..1.0).exp();
        let s = random_point(p, &mut rng, 3.0);
        let (left, right) = scaling_check(&rect, &s, eps, order)?;
        let scale = left.max_abs().max(right.max_abs());
        let diff = left
            .entries
            .iter()
            .zip(&right.entries)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        // subnormal entries carry no significant digits
        Ok(diff / (DILATION_RTOL * scale + f64::MIN_POSITIVE))
    })?;
    let worst = errs.iter().copied().fold(0.0, f64::max);
    Ok((
        worst <= 1.0,
        json!({ "probes": probes, "worst_ratio": worst, "rtol": DILATION_RTOL }),
    ))
}

pub fn far_field_sweep(min_points: usize, seed: u64) -> hdclt_core::Result<(bool, Value)> {
    let mut configs = Vec::new();
    for p in [1usize, 2, 4, 8, 16] {
        for n in [10usize, 100] {
            for eps in [0.25, 1.0] {
                configs.push((p, n, eps));
            }
        }
    }
    let reports = par_indexed(configs.len(), |i| {
        let (p, n, eps) = configs[i];
        far_field_bound_check(
            p,
            n,
            eps,
            min_points,
            &mut rng_from_seed(derive_seed(seed, i as u64)),
        )
    })?;
    let pass = reports.iter().all(|r| r.pass);
    let worst_constant = reports
        .iter()
        .map(|r| r.fitted_constant)
        .fold(0.0, f64::max);
    Ok((
        pass,
        json!({ "configs": reports, "worst_fitted_constant": worst_constant }),
    ))
}

/// Largest `‖∇^r φ_1‖₁` found over random probes plus symmetric cubes
/// centred at the origin.
fn sup_l1(p: usize, order: usize, probes: usize, seed: u64) -> hdclt_core::Result<f64> {
    let random = par_indexed(probes, |i| {
        let mut rng = rng_from_seed(derive_seed(seed, i as u64));
        let rect = if i % 2 == 0 {
            random_rect(p, &mut rng, 0.5)
        } else {
            Hyperrectangle::cube(p, rng.random_range(0.5..5.0))?
        };
        let s = random_point(p, &mut rng, if i % 2 == 0 { 3.0 } else { 0.5 });
        SmoothedIndicator::new(rect, 1.0)?.derivative_l1(&s, order)
    })?;
    let mut best = random.into_iter().fold(0.0, f64::max);
    let origin = vec![0.0; p];
    for k in 0..=90 {
        let a = 0.5 + 0.05 * k as f64;
        let si = SmoothedIndicator::new(Hyperrectangle::cube(p, a)?, 1.0)?;
        best = best.max(si.derivative_l1(&origin, order)?);
    }
    Ok(best)
}

pub const GROWTH_DIMS: [usize; 6] = [2, 4, 8, 16, 32, 64];

/// Fits the exponent of `log p` in the sup of `‖∇^r φ_1‖₁` and requires it
/// to lie in `[0, r/2 + 0.25]`.
pub fn growth_check(order: usize, probes: usize, seed: u64) -> hdclt_core::Result<(bool, Value)> {
    let mut points = Vec::new();
    for (i, &p) in GROWTH_DIMS.iter().enumerate() {
        let sup = sup_l1(p, order, probes, derive_seed(seed, i as u64))?;
        points.push(RatePoint {
            n: (p as f64).ln(),
            distance: sup,
            std_error: 0.0,
        });
    }
    let fit = fit_loglog_slope(&points)?;
    let upper = order as f64 / 2.0 + 0.25;
    let pass = (0.0..=upper).contains(&fit.slope);
    Ok((
        pass,
        json!({
            "order": order,
            "dims": GROWTH_DIMS,
            "sup_l1": points.iter().map(|p| p.distance).collect::<Vec<_>>(),
            "exponent": fit.slope,
            "window": [0.0, upper],
        }),
    ))
}

/// `φ_ε(s) → 1{s ∈ A}` monotonically along `ε ∈ {1e-1, 1e-2, 1e-3}` for
/// points off the faces.
pub fn sharp_limit_check(probes: usize, seed: u64) -> hdclt_core::Result<(bool, Value)> {
    let mut rng = rng_from_seed(seed);
    let mut violations = 0usize;
    let mut checked = 0usize;
    for _ in 0..probes {
        let p = rng.random_range(1..=4);
        let rect = random_rect(p, &mut rng, 0.15);
        let s = random_point(p, &mut rng, 3.0);
        if rect.face_distances(&s).inner_closed.abs() < 0.05 {
            continue;
        }
        checked += 1;
        let target = rect.holds(&s) as u8 as f64;
        let mut last = f64::INFINITY;
        for eps in [1e-1, 1e-2, 1e-3] {
            let gap = (SmoothedIndicator::new(rect.clone(), eps)?.phi(&s)? - target).abs();
            if gap > last {
                violations += 1;
            }
            last = gap;
        }
        if last > 1e-12 {
            violations += 1;
        }
    }
    Ok((
        violations == 0,
        json!({ "checked": checked, "violations": violations }),
    ))
}

/// Rectangle on a quarter-unit lattice, so faces, points and widths collide.
fn lattice_rect(p: usize, rng: &mut Rng) -> Hyperrectangle {
    let mut lo = Vec::with_capacity(p);
    let mut hi = Vec::with_capacity(p);
    let (mut lc, mut uc) = (Vec::with_capacity(p), Vec::with_capacity(p));
    for _ in 0..p {
        let a = rng.random_range(-8i32..=4) as f64 * 0.25;
        let b = a + rng.random_range(0i32..=8) as f64 * 0.25;
        let inf_lo = rng.random::<f64>() < 0.15;
        let inf_hi = rng.random::<f64>() < 0.15;
        lo.push(if inf_lo { f64::NEG_INFINITY } else { a });
        hi.push(if inf_hi { f64::INFINITY } else { b });
        let closed_lo = inf_lo || a == b || rng.random::<bool>();
        let closed_hi = inf_hi || a == b || rng.random::<bool>();
        lc.push(closed_lo && !inf_lo);
        uc.push(closed_hi && !inf_hi);
    }
    Hyperrectangle::with_closedness(lo, hi, lc, uc).expect("ordered endpoints")
}

/// `∂A(t)` by coordinatewise distances, written out independently of the
/// rectangle operations.
fn brute_in_boundary(rect: &Hyperrectangle, x: &[f64], t: f64) -> bool {
    let mut enlarged = true;
    let mut shrunk = true;
    for j in 0..x.len() {
        let (a, b) = (rect.lower()[j], rect.upper()[j]);
        let d = if x[j] < a {
            a - x[j]
        } else if x[j] > b {
            x[j] - b
        } else {
            0.0
        };
        enlarged &= d <= t;
        let lo_ok = if a.is_finite() {
            if rect.lower_closed()[j] {
                x[j] - t >= a
            } else {
                x[j] - t > a
            }
        } else {
            true
        };
        let hi_ok = if b.is_finite() {
            if rect.upper_closed()[j] {
                x[j] + t <= b
            } else {
                x[j] + t < b
            }
        } else {
            true
        };
        shrunk &= lo_ok && hi_ok;
    }
    enlarged && !shrunk
}

pub fn boundary_check(probes: usize, seed: u64) -> hdclt_core::Result<(bool, Value)> {
    let mut rng = rng_from_seed(seed);
    let (mut brute, mut composed, mut nesting) = (0usize, 0usize, 0usize);
    for _ in 0..probes {
        let p = rng.random_range(1..=5);
        let rect = lattice_rect(p, &mut rng);
        let x: Vec<f64> = (0..p)
            .map(|_| rng.random_range(-12i32..=12) as f64 * 0.25)
            .collect();
        let t = rng.random_range(0i32..=4) as f64 * 0.25;
        let got = rect.in_boundary(&x, t)?;
        brute += (got != brute_in_boundary(&rect, &x, t)) as usize;
        let big = rect.enlarge(t)?;
        let small = rect.shrink(t)?;
        let in_small = match &small {
            Some(r) => r.contains(&x)?,
            None => false,
        };
        composed += (got != (big.contains(&x)? && !in_small)) as usize;
        let inside = rect.contains(&x)?;
        let wider = rect.enlarge(t + 0.25)?.contains(&x)?;
        nesting += ((in_small && !inside)
            || (inside && !big.contains(&x)?)
            || (big.contains(&x)? && !wider)) as usize;
    }
    Ok((
        brute + composed + nesting == 0,
        json!({
            "probes": probes,
            "brute_force_mismatches": brute,
            "composition_mismatches": composed,
            "nesting_violations": nesting,
        }),
    ))
}

/// Coupling inequality on a Rademacher spec at `p = 4`.
pub fn coupling_sweep(pairs: usize, draws: usize, seed: u64) -> hdclt_core::Result<(bool, Value)> {
    let spec = PopulationSpec::new(
        4,
        EntryLaw::Rademacher,
        CorrelationModel::Equicorrelated(0.3),
        0,
    )?;
    let mut rng = rng_from_seed(derive_seed(seed, 0));
    let widths = [0.02, 0.05, 0.1, 0.2, 0.4];
    let list: Vec<(Hyperrectangle, f64)> = (0..pairs)
        .map(|i| (random_rect(4, &mut rng, 0.2), widths[i % widths.len()]))
        .collect();
    let report = coupling_check(&spec, 16, &list, draws, derive_seed(seed, 1))?;
    Ok((
        report.pass,
        serde_json::to_value(&report).expect("serializes"),
    ))
}

/// Family used by the anti-concentration sweep at dimension `p`.
pub fn nazarov_family_kind(p: usize) -> FamilyKind {
    FamilyKind::Union(vec![
        FamilyKind::MaxSymmetric(vec![0.5, 1.0, 2.0]),
        FamilyKind::corner_diagonal(&[0.0, 1.0], p),
    ])
}

/// Covariance of the anti-concentration sweep: `I_1` at `p = 1`, otherwise
/// equicorrelated 0.3 with variances alternating 1 and 2.
pub fn nazarov_sigma(p: usize) -> hdclt_core::Result<Matrix> {
    let r = if p == 1 {
        Matrix::identity(1)
    } else {
        build_correlation(&CorrelationModel::Equicorrelated(0.3), p)?
    };
    let d: Vec<f64> = (0..p)
        .map(|j| if j % 2 == 0 { 1.0 } else { 2.0f64.sqrt() })
        .collect();
    let mut s = Matrix::zeros(p, p);
    for i in 0..p {
        for j in 0..p {
            s.row_mut(i)[j] = d[i] * r.row(i)[j] * d[j];
        }
    }
    Ok(s)
}

pub fn nazarov_sweep(
    dims: &[usize],
    budget: usize,
    seed: u64,
) -> hdclt_core::Result<(bool, Value)> {
    let mut reports = Vec::new();
    for (i, &p) in dims.iter().enumerate() {
        let family = make_family(nazarov_family_kind(p), p)?;
        reports.push(nazarov_check(
            &nazarov_sigma(p)?,
            &family,
            &NAZAROV_T_GRID,
            budget,
            derive_seed(seed, i as u64),
        )?);
    }
    let pass = reports.iter().all(|r| r.pass);
    Ok((pass, json!({ "budget": budget, "reports": reports })))
}

/// Tolerance of the exact identities.
pub const IDENTITY_TOL: f64 = 1e-12;

pub fn taylor_residual_check(probes: usize, seed: u64) -> hdclt_core::Result<(bool, Value)> {
    let errs = par_indexed(probes, |i| {
        let mut rng = rng_from_seed(derive_seed(seed, i as u64));
        let p = rng.random_range(1..=6);
        let (si, s) = fd_probe(p, &mut rng);
        let v = random_point(p, &mut rng, 2.0);
        let n = rng.random_range(1..=64usize);
        let terms = taylor_terms(&si, &s, &v, n)?;
        let moved: Vec<f64> = s
            .iter()
            .zip(&v)
            .map(|(a, b)| a + b / (n as f64).sqrt())
            .collect();
        let direct = si.phi(&moved)? - si.phi(&s)?;
        Ok((terms.l + terms.q + terms.r - direct).abs())
    })?;
    let worst = errs.iter().copied().fold(0.0, f64::max);
    Ok((
        worst <= IDENTITY_TOL,
        json!({ "probes": probes, "worst_abs_error": worst }),
    ))
}

pub fn telescoping_oracle_check(
    max_n: usize,
    t_points: usize,
) -> hdclt_core::Result<(bool, Value)> {
    let laws = [EntryLaw::Rademacher, EntryLaw::TwoPointAsymmetric(0.3)];
    let ts = hdclt_core::geometry::linspace(-3.0, 3.0, t_points);
    let mut worst: f64 = 0.0;
    let mut cases = 0usize;
    for law in laws {
        for n in 1..=max_n {
            for &t in &ts {
                let (sum, direct) = exact_telescoping_p1(law, n, t)?;
                worst = worst.max((sum - direct).abs());
                cases += 1;
            }
        }
    }
    Ok((
        worst <= IDENTITY_TOL,
        json!({ "cases": cases, "max_n": max_n, "worst_abs_error": worst }),
    ))
}

/// Sweep over entry laws, steps and rectangles; the first- and second-order
/// differences must vanish within the stated number of standard errors.
pub fn moment_matching_sweep(
    configs: usize,
    budget: usize,
    seed: u64,
) -> hdclt_core::Result<(bool, Value)> {
    let laws = [
        EntryLaw::Rademacher,
        EntryLaw::ScaledUniform,
        EntryLaw::ScaledLaplace,
        EntryLaw::TwoPointAsymmetric(0.2),
    ];
    let models = [
        CorrelationModel::Identity,
        CorrelationModel::Equicorrelated(0.4),
    ];
    let steps = [(4usize, 1usize), (8, 4), (16, 8), (16, 15), (32, 5)];
    let mut reports = Vec::new();
    for c in 0..configs {
        let mut rng = rng_from_seed(derive_seed(seed, c as u64));
        let p = 1 + c % 3;
        let spec = PopulationSpec::new(p, laws[c % laws.len()], models[(c / 4) % 2].clone(), 0)?;
        let (n, k) = steps[c % steps.len()];
        let rect = random_rect(p, &mut rng, 0.2);
        reports.push(moment_matching_check(
            &spec,
            n,
            k,
            &rect,
            budget,
            derive_seed(seed, 1000 + c as u64),
        )?);
    }
    let pass = reports.iter().all(|r| r.pass);
    Ok((pass, json!({ "budget": budget, "reports": reports })))
}

/// Smallest stored value whose empirical CDF reaches `1 - alpha`, by a
/// linear scan.
fn quantile_by_scan(values: &[f64], alpha: f64) -> f64 {
    let b = values.len() as f64;
    let mut candidates = values.to_vec();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();
    for v in candidates {
        let count = values.iter().filter(|&&x| x <= v).count();
        if count as f64 / b >= 1.0 - alpha {
            return v;
        }
    }
    f64::NAN
}

pub fn quantile_contract_check(summaries: usize, seed: u64) -> hdclt_core::Result<(bool, Value)> {
    let mut rng = rng_from_seed(seed);
    let mut violations = 0usize;
    for _ in 0..summaries {
        let b = rng.random_range(1..=200usize);
        let levels = rng.random_range(1..=12u32);
        let values: Vec<f64> = (0..b)
            .map(|_| rng.random_range(0..levels) as f64 * 0.5)
            .collect();
        let alpha = match rng.random_range(0..4) {
            0 => rng.random_range(1..b.max(2)) as f64 / b as f64,
            _ => rng.random_range(0.001..0.999),
        };
        let alpha = alpha.clamp(1e-9, 1.0 - 1e-9);
        let summary = BootstrapSummary::new(BootstrapMethod::Empirical, values.clone(), alpha)?;
        let expected = quantile_by_scan(&values, alpha);
        let q = bootstrap_quantile(&summary.max_stats, alpha)?;
        violations += (q != expected || summary.q_hat != q) as usize;
    }
    Ok((
        violations == 0,
        json!({ "summaries": summaries, "violations": violations }),
    ))
}

/// Coverage event against the max-statistic event, and the mean test
/// against `M_n > q̂`, on random data and means.
pub fn interval_identity_check(probes: usize, seed: u64) -> hdclt_core::Result<(bool, Value)> {
    let mut rng = rng_from_seed(seed);
    let (mut cover_mismatch, mut test_mismatch) = (0usize, 0usize);
    for i in 0..probes {
        let p = rng.random_range(1..=6);
        let n = rng.random_range(2..=40);
        let data: Vec<f64> = (0..n * p).map(|_| rng.random_range(-1.0..1.5)).collect();
        let x = SampleMatrix::from_matrix(Matrix::from_row_major(n, p, data)?)?;
        let summary = multiplier_sample(
            &x,
            200,
            derive_seed(seed, i as u64),
            rng.random_range(0.01..0.5),
        )?;
        let cis = simultaneous_cis(&x, &summary);
        let mu: Vec<f64> = cis
            .centers
            .iter()
            .map(|c| c + rng.random_range(-2.0..2.0) * cis.half_width.max(1e-3))
            .collect();
        let by_stat = max_statistic_centered(&x, &mu)? <= summary.q_hat;
        cover_mismatch += (cis.covers(&mu) != by_stat) as usize;
        test_mismatch += (mean_test(&x, &summary) != (max_statistic(&x) > summary.q_hat)) as usize;
    }
    Ok((
        cover_mismatch + test_mismatch == 0,
        json!({ "probes": probes, "coverage_mismatches": cover_mismatch, "test_mismatches": test_mismatch }),
    ))
}

/// One-sample Kolmogorov-Smirnov test at the 1% level of multiplier
/// replicates at `p = 1` against the folded normal with scale `σ̂`.
pub fn multiplier_law_check(b: usize, seed: u64) -> hdclt_core::Result<(bool, Value)> {
    let spec = PopulationSpec::new(1, EntryLaw::StandardNormal, CorrelationModel::Identity, 0)?;
    let x = sample_population(&spec, 50, derive_seed(seed, 0))?;
    let sigma = hdclt_core::sample_covariance(&x).row(0)[0].sqrt();
    let summary = multiplier_sample(&x, b, derive_seed(seed, 1), 0.1)?;
    let folded = |t: f64| 2.0 * norm_cdf(t / sigma) - 1.0;
    let bf = b as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in summary.max_stats.iter().enumerate() {
        let f = folded(v);
        d = d
            .max((f - i as f64 / bf).abs())
            .max(((i + 1) as f64 / bf - f).abs());
    }
    let statistic = d * bf.sqrt();
    // asymptotic 1% critical value of sqrt(B) D
    let critical = 1.628;
    Ok((
        statistic <= critical,
        json!({ "B": b, "sigma_hat": sigma, "ks_statistic": statistic, "critical": critical }),
    ))
}
