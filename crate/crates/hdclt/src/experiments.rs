//! Experiment configuration and drivers: CLT and bootstrap rate curves,
//! Gaussian comparison, coverage, and the check suites as experiments.

use std::path::{Path, PathBuf};

use hdclt_core::bootstrap::{
    empirical_replicate, multiplier_factor, multiplier_replicate, replicate_rng, BootstrapMethod,
};
use hdclt_core::distance::{kolmogorov_sup, rademacher_kolmogorov_exact, LawSource};
use hdclt_core::fit::{fit_loglog_slope, RateFit, RatePoint};
use hdclt_core::geometry::{
    default_family_kind, linspace, make_family, FamilyKind, RectangleFamily,
};
use hdclt_core::linalg::{min_eigenvalue, Matrix};
use hdclt_core::sampling::SumSampler;
use hdclt_core::seed::derive_seed;
use hdclt_core::special::bivariate_orthant;
use hdclt_core::vectors::{sample_population, EntryLaw};
use hdclt_core::{DistanceEstimate, PopulationSpec};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::checks::{run_suite, CheckScale, Suite, SuiteReport};
use crate::coverage::{coverage_experiment, rep_seeds, CoverageReport, MIN_REPS};
use crate::error::{AppError, AppResult};
use crate::io::{distance_to_csv, series_to_csv, write_atomic, write_json, SeriesRow, SpecFile};
use crate::mc::{clt_distance, gaussian_pair_distance, CouplingMode};
use crate::parallel::{par_batches, par_indexed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    CltRate,
    BootstrapRate,
    GaussianCompare,
    Coverage,
    SmoothingChecks,
    LindebergChecks,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::CltRate => "clt_rate",
            ExperimentKind::BootstrapRate => "bootstrap_rate",
            ExperimentKind::GaussianCompare => "gaussian_compare",
            ExperimentKind::Coverage => "coverage",
            ExperimentKind::SmoothingChecks => "smoothing_checks",
            ExperimentKind::LindebergChecks => "lindeberg_checks",
        }
    }
}

/// Rectangle family recipe. Random families draw their endpoints from a
/// stream of the master seed.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyConfig {
    /// Corner grid for `p ≤ 2`, random rectangles plus cubes otherwise.
    #[default]
    Default,
    /// Every one-sided set `(-∞, t]` at `p = 1`, evaluated exactly for
    /// Rademacher entries and on an 801-point grid over `[-4, 4]` otherwise.
    AllCorners,
    CornerGrid {
        lo: f64,
        hi: f64,
        count: usize,
    },
    CornerDiagonal {
        lo: f64,
        hi: f64,
        count: usize,
    },
    MaxSymmetric {
        t: Vec<f64>,
    },
    Random {
        count: usize,
        lo: f64,
        hi: f64,
        #[serde(default = "default_infinite_fraction")]
        infinite_fraction: f64,
    },
    Union {
        members: Vec<FamilyConfig>,
    },
}

fn default_infinite_fraction() -> f64 {
    0.1
}

/// Largest family the drivers will materialize.
pub const MAX_FAMILY_SIZE: usize = 1_000_000;
const FAMILY_STREAM: u64 = 0xfa;

impl FamilyConfig {
    pub fn to_kind(&self, p: usize, seed: u64) -> AppResult<FamilyKind> {
        let family_seed = derive_seed(seed, FAMILY_STREAM);
        Ok(match self {
            FamilyConfig::Default => default_family_kind(p, family_seed),
            FamilyConfig::AllCorners => {
                if p != 1 {
                    return Err(AppError::validation("family: all_corners requires p = 1"));
                }
                FamilyKind::corner_grid(&linspace(-4.0, 4.0, 801), 1)
            }
            FamilyConfig::CornerGrid { lo, hi, count } => {
                let size = (*count as f64).powi(p as i32);
                if *count == 0 || size > MAX_FAMILY_SIZE as f64 {
                    return Err(AppError::validation(format!(
                        "family: corner_grid with {count}^{p} members is outside 1..={MAX_FAMILY_SIZE}"
                    )));
                }
                FamilyKind::corner_grid(&linspace(*lo, *hi, *count), p)
            }
            FamilyConfig::CornerDiagonal { lo, hi, count } => {
                FamilyKind::corner_diagonal(&linspace(*lo, *hi, *count), p)
            }
            FamilyConfig::MaxSymmetric { t } => FamilyKind::MaxSymmetric(t.clone()),
            FamilyConfig::Random {
                count,
                lo,
                hi,
                infinite_fraction,
            } => FamilyKind::Random {
                count: *count,
                seed: family_seed,
                range: (*lo, *hi),
                infinite_fraction: *infinite_fraction,
            },
            FamilyConfig::Union { members } => FamilyKind::Union(
                members
                    .iter()
                    .enumerate()
                    .map(|(i, m)| m.to_kind(p, derive_seed(seed, i as u64)))
                    .collect::<AppResult<_>>()?,
            ),
        })
    }

    pub fn build(&self, p: usize, seed: u64) -> AppResult<RectangleFamily> {
        make_family(self.to_kind(p, seed)?, p)
            .map_err(|e| AppError::validation(format!("family: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Budgets {
    /// Monte Carlo draws per grid point.
    #[serde(default = "default_mc")]
    pub mc: usize,
    /// Bootstrap replicates per dataset.
    #[serde(rename = "B", default = "default_b")]
    pub b: usize,
    /// Datasets per coverage estimate.
    #[serde(default = "default_reps")]
    pub reps: usize,
    /// Datasets per bootstrap-rate point.
    #[serde(default = "default_data_reps")]
    pub data_reps: usize,
}

fn default_mc() -> usize {
    200_000
}
fn default_b() -> usize {
    2000
}
fn default_reps() -> usize {
    2000
}
fn default_data_reps() -> usize {
    50
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            mc: default_mc(),
            b: default_b(),
            reps: default_reps(),
            data_reps: default_data_reps(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScaleName {
    #[default]
    Quick,
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub csv: PathBuf,
    pub json: PathBuf,
    /// Per-rectangle table of every distance estimate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distances: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub spec: SpecFile,
    #[serde(default)]
    pub n_grid: Vec<usize>,
    #[serde(default)]
    pub family: FamilyConfig,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub coupling: CouplingMode,
    #[serde(default = "default_methods")]
    pub methods: Vec<BootstrapMethod>,
    /// Perturbation sizes of the Gaussian comparison.
    #[serde(default)]
    pub delta_grid: Vec<f64>,
    /// Bootstrap rate only: run the multiplier bootstrap with the population
    /// correlation in place of `Σ̂`.
    #[serde(default)]
    pub true_covariance: bool,
    #[serde(default)]
    pub check_scale: ScaleName,
    #[serde(default)]
    pub seed: u64,
    pub output: OutputConfig,
}

fn default_alpha() -> f64 {
    0.1
}

fn default_methods() -> Vec<BootstrapMethod> {
    vec![BootstrapMethod::Empirical, BootstrapMethod::Multiplier]
}

fn strictly_increasing<T: PartialOrd>(v: &[T]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> AppResult<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| AppError::validation(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Checks cross-field constraints and returns the population spec.
    pub fn validate(&self) -> AppResult<PopulationSpec> {
        let spec = self.spec.to_spec()?;
        let needs_n = matches!(
            self.experiment,
            ExperimentKind::CltRate | ExperimentKind::BootstrapRate | ExperimentKind::Coverage
        );
        if needs_n && self.n_grid.is_empty() {
            return Err(AppError::validation("n_grid: must not be empty"));
        }
        if !strictly_increasing(&self.n_grid) {
            return Err(AppError::validation("n_grid: must be strictly increasing"));
        }
        let min_n = if needs_n && self.experiment != ExperimentKind::CltRate {
            2
        } else {
            1
        };
        if self.n_grid.first().is_some_and(|&n| n < min_n) {
            return Err(AppError::validation(format!(
                "n_grid: entries must be at least {min_n}"
            )));
        }
        let b = &self.budgets;
        if b.mc == 0 || b.b == 0 || b.reps == 0 || b.data_reps == 0 {
            return Err(AppError::validation("budgets: must be positive"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(AppError::validation("alpha: must lie in (0, 1)"));
        }
        if self.methods.is_empty() {
            return Err(AppError::validation("methods: must not be empty"));
        }
        match self.experiment {
            ExperimentKind::GaussianCompare => {
                if self.delta_grid.is_empty() {
                    return Err(AppError::validation("delta_grid: must not be empty"));
                }
                if !strictly_increasing(&self.delta_grid)
                    || self.delta_grid.iter().any(|d| !(*d >= 0.0))
                {
                    return Err(AppError::validation(
                        "delta_grid: must be nonnegative and strictly increasing",
                    ));
                }
                if spec.p < 2 {
                    return Err(AppError::validation(
                        "spec.p: gaussian_compare needs p >= 2",
                    ));
                }
            }
            ExperimentKind::Coverage if b.reps < MIN_REPS => {
                return Err(AppError::validation(format!(
                    "budgets.reps: must be at least {MIN_REPS}"
                )));
            }
            _ => {}
        }
        if !matches!(
            self.experiment,
            ExperimentKind::SmoothingChecks | ExperimentKind::LindebergChecks
        ) {
            self.family.build(spec.p, self.seed)?;
        }
        Ok(spec)
    }
}

/// Everything an experiment produces.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub rows: Vec<SeriesRow>,
    pub summary: Value,
    /// Labelled distance estimates for the per-rectangle table.
    pub distances: Vec<(String, DistanceEstimate)>,
    /// False when a check-suite experiment found failures.
    pub pass: bool,
}

/// Fit over the usable points, or the reason there is none.
pub fn fit_or_reason(points: &[RatePoint]) -> (Option<RateFit>, Option<String>) {
    match fit_loglog_slope(points) {
        Ok(fit) => (Some(fit), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

fn series_rows(experiment: &str, p: usize, method: &str, points: &[RatePoint]) -> Vec<SeriesRow> {
    (0..points.len())
        .map(|i| SeriesRow {
            experiment: experiment.to_string(),
            n: points[i].n,
            p,
            method: method.to_string(),
            distance: points[i].distance,
            std_error: points[i].std_error,
            slope_so_far: fit_loglog_slope(&points[..=i]).ok().map(|f| f.slope),
        })
        .collect()
}

pub fn run_experiment(cfg: &ExperimentConfig) -> AppResult<ExperimentOutput> {
    let spec = cfg.validate()?;
    match cfg.experiment {
        ExperimentKind::CltRate => run_clt_rate(cfg, &spec),
        ExperimentKind::BootstrapRate => run_bootstrap_rate(cfg, &spec),
        ExperimentKind::GaussianCompare => run_gaussian_compare(cfg, &spec),
        ExperimentKind::Coverage => run_coverage(cfg, &spec),
        ExperimentKind::SmoothingChecks => Ok(run_checks(cfg, Suite::Smoothing)),
        ExperimentKind::LindebergChecks => Ok(run_checks(cfg, Suite::Lindeberg)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CltRateSummary {
    pub experiment: ExperimentKind,
    pub p: usize,
    pub method: String,
    pub family_size: Option<usize>,
    pub points: Vec<RatePoint>,
    /// Maximizing member (or threshold, for the exact corner path) per `n`.
    pub argmax: Vec<f64>,
    pub fit: Option<RateFit>,
    pub no_fit_reason: Option<String>,
}

/// Distance between `S_n(X)` and its Gaussian counterpart along `n_grid`.
///
/// At `p = 1` with Rademacher entries every probability is exact; with
/// [`FamilyConfig::AllCorners`] the supremum runs over every threshold.
pub fn run_clt_rate(cfg: &ExperimentConfig, spec: &PopulationSpec) -> AppResult<ExperimentOutput> {
    let exact = spec.p == 1 && spec.law == EntryLaw::Rademacher;
    let all_corners = exact && cfg.family == FamilyConfig::AllCorners;
    let family = if all_corners {
        None
    } else {
        Some(cfg.family.build(spec.p, cfg.seed)?)
    };
    let method = if exact {
        "exact".to_string()
    } else {
        format!("mc_{}", coupling_name(cfg.coupling))
    };
    let unit = Matrix::identity(1);
    let mut points = Vec::new();
    let mut argmax = Vec::new();
    let mut distances = Vec::new();
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let (value, se, arg) = if all_corners {
            let (d, t) = rademacher_kolmogorov_exact(n as u64)?;
            (d, 0.0, t)
        } else {
            let family = family.as_ref().expect("finite family");
            let est = if exact {
                let gauss = LawSource::Gaussian {
                    sigma: &unit,
                    budget: 0,
                    seed: 0,
                };
                kolmogorov_sup(LawSource::RademacherSum { n: n as u64 }, gauss, family)?
            } else {
                clt_distance(
                    spec,
                    n,
                    family,
                    cfg.budgets.mc,
                    derive_seed(cfg.seed, i as u64),
                    cfg.coupling,
                )?
            };
            let out = (est.value, est.mc_std_error, est.argmax as f64);
            distances.push((format!("n={n}"), est));
            out
        };
        points.push(RatePoint {
            n: n as f64,
            distance: value,
            std_error: se,
        });
        argmax.push(arg);
    }
    let (fit, no_fit_reason) = fit_or_reason(&points);
    let rows = series_rows(cfg.experiment.name(), spec.p, &method, &points);
    let summary = CltRateSummary {
        experiment: cfg.experiment,
        p: spec.p,
        method,
        family_size: family.as_ref().map(|f| f.len()),
        points,
        argmax,
        fit,
        no_fit_reason,
    };
    Ok(ExperimentOutput {
        rows,
        summary: serde_json::to_value(summary).expect("serializes"),
        distances,
        pass: true,
    })
}

fn coupling_name(c: CouplingMode) -> &'static str {
    match c {
        CouplingMode::Quantile => "quantile",
        CouplingMode::Independent => "independent",
    }
}

/// `sup_t |F(t) - G(t)|` between the empirical CDFs of two sorted samples.
pub fn two_sample_ks(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRatePoint {
    pub n: usize,
    /// Mean over data realizations of the bootstrap-vs-truth distance.
    pub distance: f64,
    /// Standard error across realizations; it carries both layers.
    pub between_std_error: f64,
    /// Scale `sqrt(1/B + 1/M)` of the resampling-layer fluctuation of one
    /// distance, absent when the reference is coupled to the replicates.
    pub resampling_scale: Option<f64>,
    pub reference_draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRateMethod {
    pub method: BootstrapMethod,
    pub coupled_reference: bool,
    pub points: Vec<BootstrapRatePoint>,
    pub fit: Option<RateFit>,
    pub no_fit_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRateSummary {
    pub experiment: ExperimentKind,
    pub p: usize,
    #[serde(rename = "B")]
    pub b: usize,
    pub data_reps: usize,
    pub true_covariance: bool,
    pub methods: Vec<BootstrapRateMethod>,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Sorted draws of `max_j |S_n(X)_j|`.
fn reference_max_stats(
    spec: &PopulationSpec,
    n: usize,
    draws: usize,
    seed: u64,
) -> AppResult<Vec<f64>> {
    let sampler = SumSampler::new(spec, n, n)?;
    let p = spec.p;
    let mut out = par_batches(
        draws,
        seed,
        Vec::new,
        |rng, count, acc: &mut Vec<f64>| {
            let (mut raw, mut x) = (vec![0.0; p], vec![0.0; p]);
            for _ in 0..count {
                sampler.sample_into(rng, &mut raw, &mut x);
                acc.push(max_abs(&x));
            }
            Ok(())
        },
        |a, b| a.extend_from_slice(b),
    )?;
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// Kolmogorov distance between the conditional law of the bootstrap max
/// statistic and the law of `M_n`, averaged over data realizations.
///
/// The distance runs over all symmetric cubes `[-t, t]^p`. For Gaussian
/// entries the multiplier replicates and the reference draws share their
/// standard normal vectors, so only the `Σ̂` error remains; otherwise the
/// reference is an independent sample of `budgets.mc` draws.
pub fn run_bootstrap_rate(
    cfg: &ExperimentConfig,
    spec: &PopulationSpec,
) -> AppResult<ExperimentOutput> {
    let p = spec.p;
    let b = cfg.budgets.b;
    let reps = cfg.budgets.data_reps;
    let gaussian = spec.law == EntryLaw::StandardNormal;
    let true_factor = spec.mixing()?;
    let mut per_method: Vec<Vec<BootstrapRatePoint>> = vec![Vec::new(); cfg.methods.len()];
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let seed_n = derive_seed(cfg.seed, i as u64);
        let needs_reference = cfg
            .methods
            .iter()
            .any(|&m| !(gaussian && m == BootstrapMethod::Multiplier));
        let reference = if needs_reference {
            reference_max_stats(spec, n, cfg.budgets.mc, derive_seed(seed_n, u64::MAX))?
        } else {
            Vec::new()
        };
        let dists: Vec<Vec<f64>> = par_indexed(reps, |r| {
            let (data_seed, boot_seed) = rep_seeds(seed_n, r);
            let x = sample_population(spec, n, data_seed)?;
            let (mut z, mut out, mut zref) = (vec![0.0; p], vec![0.0; p], vec![0.0; p]);
            cfg.methods
                .iter()
                .map(|&m| {
                    let mut stats: Vec<f64>;
                    match m {
                        BootstrapMethod::Multiplier => {
                            let factor = if cfg.true_covariance {
                                true_factor.clone()
                            } else {
                                multiplier_factor(&x)?
                            };
                            stats = (0..b)
                                .map(|k| {
                                    multiplier_replicate(
                                        &factor,
                                        &mut replicate_rng(boot_seed, k),
                                        &mut z,
                                        &mut out,
                                    )
                                })
                                .collect();
                            if gaussian {
                                let mut coupled: Vec<f64> = (0..b)
                                    .map(|k| {
                                        multiplier_replicate(
                                            &true_factor,
                                            &mut replicate_rng(boot_seed, k),
                                            &mut zref,
                                            &mut out,
                                        )
                                    })
                                    .collect();
                                stats.sort_by(f64::total_cmp);
                                coupled.sort_by(f64::total_cmp);
                                return Ok(two_sample_ks(&stats, &coupled));
                            }
                        }
                        BootstrapMethod::Empirical => {
                            let means = x.column_means();
                            stats = (0..b)
                                .map(|k| {
                                    empirical_replicate(
                                        &x,
                                        &means,
                                        &mut replicate_rng(boot_seed, k),
                                        &mut z,
                                    )
                                })
                                .collect();
                        }
                    }
                    stats.sort_by(f64::total_cmp);
                    Ok(two_sample_ks(&stats, &reference))
                })
                .collect()
        })?;
        for (mi, &m) in cfg.methods.iter().enumerate() {
            let vals: Vec<f64> = dists.iter().map(|d| d[mi]).collect();
            let mean = vals.iter().sum::<f64>() / reps as f64;
            let var = if reps > 1 {
                vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64
            } else {
                0.0
            };
            let coupled = gaussian && m == BootstrapMethod::Multiplier;
            per_method[mi].push(BootstrapRatePoint {
                n,
                distance: mean,
                between_std_error: (var / reps as f64).sqrt(),
                resampling_scale: (!coupled)
                    .then(|| (1.0 / b as f64 + 1.0 / reference.len() as f64).sqrt()),
                reference_draws: if coupled { b } else { reference.len() },
            });
        }
    }
    let mut rows = Vec::new();
    let mut methods = Vec::new();
    for (mi, &m) in cfg.methods.iter().enumerate() {
        let points: Vec<RatePoint> = per_method[mi]
            .iter()
            .map(|q| RatePoint {
                n: q.n as f64,
                distance: q.distance,
                std_error: q.between_std_error,
            })
            .collect();
        rows.extend(series_rows(
            cfg.experiment.name(),
            p,
            method_name(m),
            &points,
        ));
        let (fit, no_fit_reason) = fit_or_reason(&points);
        methods.push(BootstrapRateMethod {
            method: m,
            coupled_reference: gaussian && m == BootstrapMethod::Multiplier,
            points: per_method[mi].clone(),
            fit,
            no_fit_reason,
        });
    }
    let summary = BootstrapRateSummary {
        experiment: cfg.experiment,
        p,
        b,
        data_reps: reps,
        true_covariance: cfg.true_covariance,
        methods,
    };
    Ok(ExperimentOutput {
        rows,
        summary: serde_json::to_value(summary).expect("serializes"),
        distances: Vec::new(),
        pass: true,
    })
}

pub fn method_name(m: BootstrapMethod) -> &'static str {
    match m {
        BootstrapMethod::Empirical => "empirical",
        BootstrapMethod::Multiplier => "multiplier",
    }
}

/// Admissible window of the fitted exponent of `Δ'`.
pub const COMPARE_EXPONENT_WINDOW: (f64, f64) = (0.8, 1.2);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianCompareSummary {
    pub experiment: ExperimentKind,
    pub p: usize,
    pub method: String,
    /// Points as `(Δ', distance, std_error)`.
    pub points: Vec<RatePoint>,
    /// Grid values whose perturbed covariance is not positive semidefinite.
    pub dropped: Vec<f64>,
    pub fit: Option<RateFit>,
    pub no_fit_reason: Option<String>,
    pub pass: bool,
}

/// `Σ^Y + Δ' E`, with `E` the all-ones matrix off the diagonal.
pub fn perturbed(sigma: &Matrix, delta: f64) -> Matrix {
    let p = sigma.rows();
    let mut out = sigma.clone();
    for i in 0..p {
        for j in 0..p {
            if i != j {
                out.row_mut(i)[j] += delta;
            }
        }
    }
    out
}

/// Distance between `N(0, Σ^Y)` and `N(0, Σ^Y + Δ' E)` across `delta_grid`
/// and the fitted exponent of `Δ'`.
///
/// At `p = 2` the distance is read off the orthant `{x ≤ 0}` through the
/// arcsine identity; otherwise both laws are sampled from shared normals.
pub fn run_gaussian_compare(
    cfg: &ExperimentConfig,
    spec: &PopulationSpec,
) -> AppResult<ExperimentOutput> {
    let p = spec.p;
    let sigma_y = spec.correlation()?;
    let oracle = p == 2;
    let family = if oracle {
        None
    } else {
        Some(cfg.family.build(p, cfg.seed)?)
    };
    let method = if oracle {
        "orthant_oracle"
    } else {
        "mc_shared_normals"
    };
    let mut points = Vec::new();
    let mut dropped = Vec::new();
    let mut distances = Vec::new();
    for (i, &delta) in cfg.delta_grid.iter().enumerate() {
        let sigma_z = perturbed(&sigma_y, delta);
        if min_eigenvalue(&sigma_z)? < 0.0 {
            dropped.push(delta);
            continue;
        }
        let (d, se) = if oracle {
            let rho = sigma_y.row(0)[1];
            (
                (bivariate_orthant(rho + delta) - bivariate_orthant(rho)).abs(),
                0.0,
            )
        } else {
            let family = family.as_ref().expect("finite family");
            let est = gaussian_pair_distance(
                &sigma_y,
                &sigma_z,
                family,
                cfg.budgets.mc,
                derive_seed(cfg.seed, i as u64),
            )?;
            let out = (est.value, est.mc_std_error);
            distances.push((format!("delta={delta}"), est));
            out
        };
        points.push(RatePoint {
            n: delta,
            distance: d,
            std_error: se,
        });
    }
    let (fit, no_fit_reason) = fit_or_reason(&points);
    let (lo, hi) = COMPARE_EXPONENT_WINDOW;
    let pass = fit.as_ref().is_some_and(|f| (lo..=hi).contains(&f.slope));
    let rows = series_rows(cfg.experiment.name(), p, method, &points);
    let summary = GaussianCompareSummary {
        experiment: cfg.experiment,
        p,
        method: method.to_string(),
        points,
        dropped,
        fit,
        no_fit_reason,
        pass,
    };
    Ok(ExperimentOutput {
        rows,
        summary: serde_json::to_value(summary).expect("serializes"),
        distances,
        pass: true,
    })
}

/// Coverage of the simultaneous intervals at every `n`; the series records
/// `|coverage - (1 - α)|` with its binomial standard error.
pub fn run_coverage(cfg: &ExperimentConfig, spec: &PopulationSpec) -> AppResult<ExperimentOutput> {
    let mut reports: Vec<CoverageReport> = Vec::new();
    let mut rows = Vec::new();
    for (i, &n) in cfg.n_grid.iter().enumerate() {
        let report = coverage_experiment(
            spec,
            n,
            cfg.alpha,
            cfg.budgets.b,
            cfg.budgets.reps,
            derive_seed(cfg.seed, i as u64),
            &cfg.methods,
        )?;
        for m in &report.methods {
            rows.push(SeriesRow {
                experiment: cfg.experiment.name().to_string(),
                n: n as f64,
                p: spec.p,
                method: method_name(m.method).to_string(),
                distance: m.error.abs(),
                std_error: m.std_error,
                slope_so_far: None,
            });
        }
        reports.push(report);
    }
    Ok(ExperimentOutput {
        rows,
        summary: json!({ "experiment": cfg.experiment, "reports": reports }),
        distances: Vec::new(),
        pass: true,
    })
}

fn run_checks(cfg: &ExperimentConfig, suite: Suite) -> ExperimentOutput {
    let scale = match cfg.check_scale {
        ScaleName::Quick => CheckScale::quick(),
        ScaleName::Full => CheckScale::full(),
    };
    let report: SuiteReport = run_suite(suite, &scale, cfg.seed);
    ExperimentOutput {
        rows: Vec::new(),
        pass: report.pass,
        summary: json!({ "experiment": cfg.experiment, "report": report }),
        distances: Vec::new(),
    }
}

/// Resolves a configured output path against `base`.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

/// Writes the series CSV, the JSON summary and, when configured, the
/// per-rectangle distance table. Returns the written paths.
pub fn write_outputs(
    cfg: &ExperimentConfig,
    base: &Path,
    out: &ExperimentOutput,
) -> AppResult<Vec<PathBuf>> {
    let csv_path = resolve(base, &cfg.output.csv);
    let json_path = resolve(base, &cfg.output.json);
    write_atomic(&csv_path, series_to_csv(&out.rows).as_bytes())?;
    write_json(&json_path, &out.summary)?;
    let mut written = vec![csv_path, json_path];
    if let Some(d) = &cfg.output.distances {
        let path = resolve(base, d);
        let mut text = String::new();
        for (k, (label, est)) in out.distances.iter().enumerate() {
            let table = distance_to_csv(label, est);
            // keep a single header line
            let body = if k == 0 {
                table.as_str()
            } else {
                table.split_once('\n').map_or("", |x| x.1)
            };
            text.push_str(body);
        }
        write_atomic(&path, text.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
