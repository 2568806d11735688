//! Core numerics for high-dimensional central limit and bootstrap
//! experiments over hyperrectangles.
//!
//! The crate is `no_std` with `alloc`; parallel Monte Carlo, file formats and
//! the command line live in the `hdclt` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod bootstrap;
pub mod distance;
pub mod error;
pub mod fit;
pub mod geometry;
pub mod linalg;
pub mod lindeberg;
pub mod sampling;
pub mod seed;
pub mod smoothing;
pub mod special;
pub mod vectors;

pub use bootstrap::{BootstrapMethod, BootstrapSummary, SimultaneousIntervals};
pub use distance::{DistanceEstimate, ProbMethod, RectProbEstimate};
pub use error::{Error, Result};
pub use fit::{fit_loglog_slope, RateFit, RatePoint};
pub use geometry::{make_family, FamilyKind, Hyperrectangle, RectangleFamily};
pub use linalg::{cholesky_lower, CholeskyFactor, Matrix};
pub use lindeberg::{epsilon_k, InterpolationPoint};
pub use seed::{derive_seed, rng_from_seed, stream_rng, Rng};
pub use smoothing::{l1_norm, DerivTensor, SmoothedIndicator};
pub use vectors::{
    sample_covariance, sample_population, CorrelationModel, EntryLaw, PopulationSpec, SampleMatrix,
};
