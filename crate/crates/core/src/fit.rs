//! Log-log slope fitting for rate curves.

use alloc::vec::Vec;

use crate::error::{Error, Result};

/// One measured point of a rate curve.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RatePoint {
    pub n: f64,
    pub distance: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FitWeighting {
    /// Unweighted, used when some usable point is exact.
    Ordinary,
    /// Weights `(d / se)²`, the inverse relative variances.
    InverseRelativeVariance,
}

/// Fitted `log d = intercept + slope · log n`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateFit {
    pub points: Vec<RatePoint>,
    /// Points at or below the noise floor `d ≤ 2 se` (or `d ≤ 0`).
    pub excluded: Vec<RatePoint>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_std_error: f64,
    pub weighting: FitWeighting,
}

/// Minimum number of usable points.
pub const MIN_FIT_POINTS: usize = 3;

/// Whether a point is too close to zero to carry slope information.
pub fn below_noise_floor(p: &RatePoint) -> bool {
    !(p.distance > 0.0) || p.distance <= 2.0 * p.std_error
}

/// Weighted least squares on `(log n, log d)`.
///
/// The slope standard error is `sqrt((X'WX)^{-1}_{11})`, inflated by the
/// reduced chi-square when the scatter exceeds the stated errors. For the
/// unweighted fit it is the usual residual-based error.
pub fn fit_loglog_slope(points: &[RatePoint]) -> Result<RateFit> {
    let (usable, excluded): (Vec<RatePoint>, Vec<RatePoint>) = points
        .iter()
        .partition(|p| !below_noise_floor(p) && p.n > 0.0);
    if usable.len() < MIN_FIT_POINTS {
        return Err(Error::NoiseFloor {
            usable: usable.len(),
        });
    }
    let weighting = if usable.iter().any(|p| p.std_error == 0.0) {
        FitWeighting::Ordinary
    } else {
        FitWeighting::InverseRelativeVariance
    };
    let xs: Vec<f64> = usable.iter().map(|p| libm::log(p.n)).collect();
    let ys: Vec<f64> = usable.iter().map(|p| libm::log(p.distance)).collect();
    let ws: Vec<f64> = usable
        .iter()
        .map(|p| match weighting {
            FitWeighting::Ordinary => 1.0,
            FitWeighting::InverseRelativeVariance => {
                let r = p.distance / p.std_error;
                r * r
            }
        })
        .collect();
    let sw: f64 = ws.iter().sum();
    let xbar = ws.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ybar = ws.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..xs.len() {
        let dx = xs[i] - xbar;
        sxx += ws[i] * dx * dx;
        sxy += ws[i] * dx * (ys[i] - ybar);
    }
    if !(sxx > 0.0) {
        return Err(Error::invalid("points", "all usable points share one n"));
    }
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let dof = (xs.len() - 2) as f64;
    let chi2: f64 = (0..xs.len())
        .map(|i| {
            let r = ys[i] - intercept - slope * xs[i];
            ws[i] * r * r
        })
        .sum();
    let var = match weighting {
        FitWeighting::Ordinary => chi2 / dof / sxx,
        FitWeighting::InverseRelativeVariance => (chi2 / dof).max(1.0) / sxx,
    };
    Ok(RateFit {
        points: points.to_vec(),
        excluded,
        slope,
        intercept,
        slope_std_error: libm::sqrt(var),
        weighting,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    fn exact(c: f64, power: f64) -> Vec<RatePoint> {
        (2..=12)
            .map(|k| {
                let n = (1u64 << k) as f64;
                RatePoint {
                    n,
                    distance: c * libm::pow(n, power),
                    std_error: 0.0,
                }
            })
            .collect()
    }

    #[test]
    fn exact_power_laws() {
        let f = fit_loglog_slope(&exact(1.0, -0.5)).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert_eq!(f.weighting, FitWeighting::Ordinary);
        let f = fit_loglog_slope(&exact(3.7, -1.0)).unwrap();
        assert!((f.slope + 1.0).abs() < 1e-12);
        assert!((f.intercept - libm::log(3.7)).abs() < 1e-10);
    }

    #[test]
    fn noise_floor_points_are_excluded() {
        let mut pts = exact(1.0, -0.5);
        for p in pts.iter_mut() {
            p.std_error = 0.01 * p.distance;
        }
        pts.push(RatePoint {
            n: 10_000.0,
            distance: 0.001,
            std_error: 0.001,
        });
        let f = fit_loglog_slope(&pts).unwrap();
        assert_eq!(f.excluded.len(), 1);
        assert!((f.slope + 0.5).abs() < 1e-9);
        let flat: Vec<RatePoint> = (1..6)
            .map(|k| RatePoint {
                n: k as f64,
                distance: 0.01,
                std_error: 0.01,
            })
            .collect();
        assert!(matches!(
            fit_loglog_slope(&flat),
            Err(Error::NoiseFloor { usable: 0 })
        ));
    }

    #[test]
    fn noisy_power_law_calibration() {
        // relative noise of known size; the 2-se interval should cover
        let mut covered = 0;
        for seed in 0..100 {
            let mut rng = rng_from_seed(seed);
            let pts: Vec<RatePoint> = (2..=12)
                .map(|k| {
                    let n = (1u64 << k) as f64;
                    let d = 0.4 * libm::pow(n, -0.5);
                    let rel = 0.05;
                    let z: f64 = StandardNormal.sample(&mut rng);
                    RatePoint {
                        n,
                        distance: d * (1.0 + rel * z),
                        std_error: d * rel,
                    }
                })
                .collect();
            let f = fit_loglog_slope(&pts).unwrap();
            if (f.slope + 0.5).abs() <= 2.0 * f.slope_std_error {
                covered += 1;
            }
        }
        assert!(covered >= 90, "{covered}");
    }
}
