//! Monte Carlo coverage of the simultaneous bootstrap intervals.

use hdclt_core::bootstrap::{bootstrap, simultaneous_cis, BootstrapMethod};
use hdclt_core::seed::derive_seed;
use hdclt_core::vectors::sample_population;
use hdclt_core::{Error, PopulationSpec, Result};
use serde::{Deserialize, Serialize};

use crate::parallel::par_indexed;

/// Smallest accepted number of data realizations.
pub const MIN_REPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCoverage {
    pub method: BootstrapMethod,
    pub covered: usize,
    pub coverage: f64,
    /// Binomial standard error `sqrt(c (1 - c) / reps)`.
    pub std_error: f64,
    /// `coverage - (1 - alpha)`.
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub n: usize,
    pub p: usize,
    pub alpha: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub reps: usize,
    pub methods: Vec<MethodCoverage>,
}

/// Data seed and bootstrap seed of realization `rep`.
pub fn rep_seeds(seed: u64, rep: usize) -> (u64, u64) {
    (
        derive_seed(seed, 2 * rep as u64),
        derive_seed(seed, 2 * rep as u64 + 1),
    )
}

/// Fraction of `reps` datasets of size `n` whose simultaneous intervals
/// cover the true mean `0`, for each method. Every method sees the same
/// datasets and bootstrap seeds.
pub fn coverage_experiment(
    spec: &PopulationSpec,
    n: usize,
    alpha: f64,
    b: usize,
    reps: usize,
    seed: u64,
    methods: &[BootstrapMethod],
) -> Result<CoverageReport> {
    if reps < MIN_REPS {
        return Err(Error::invalid("reps", format!("{reps} < {MIN_REPS}")));
    }
    if methods.is_empty() {
        return Err(Error::invalid("methods", "empty"));
    }
    let zero = vec![0.0; spec.p];
    let hits: Vec<Vec<bool>> = par_indexed(reps, |rep| {
        let (data_seed, boot_seed) = rep_seeds(seed, rep);
        let x = sample_population(spec, n, data_seed)?;
        methods
            .iter()
            .map(|&m| {
                Ok(simultaneous_cis(&x, &bootstrap(&x, m, b, boot_seed, alpha)?).covers(&zero))
            })
            .collect()
    })?;
    let methods = methods
        .iter()
        .enumerate()
        .map(|(i, &method)| {
            let covered = hits.iter().filter(|h| h[i]).count();
            let c = covered as f64 / reps as f64;
            MethodCoverage {
                method,
                covered,
                coverage: c,
                std_error: (c * (1.0 - c) / reps as f64).sqrt(),
                error: c - (1.0 - alpha),
            }
        })
        .collect();
    Ok(CoverageReport {
        n,
        p: spec.p,
        alpha,
        b,
        reps,
        methods,
    })
}
