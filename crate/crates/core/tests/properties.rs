use hdclt_core::bootstrap::{
    bootstrap_quantile, empirical_resample, max_statistic, max_statistic_centered, mean_test,
    simultaneous_cis,
};
use hdclt_core::distance::{binomial_clt_oracle, rademacher_kolmogorov_exact};
use hdclt_core::linalg::Matrix;
use hdclt_core::lindeberg::{exact_telescoping_p1, taylor_terms};
use hdclt_core::seed::derive_seed;
use hdclt_core::smoothing::{l1_norm, scaling_check, SmoothedIndicator};
use hdclt_core::special::norm_cdf;
use hdclt_core::vectors::{
    sample_population, CorrelationModel, EntryLaw, PopulationSpec, SampleMatrix,
};
use hdclt_core::{fit_loglog_slope, Hyperrectangle, RatePoint};
use proptest::prelude::*;

fn endpoint() -> impl Strategy<Value = Option<f64>> {
    prop_oneof![1 => Just(None), 6 => (-12i32..=12).prop_map(|k| Some(k as f64 * 0.25))]
}

/// Rectangles on a quarter-unit lattice with random closedness, so that
/// points and widths land exactly on faces.
fn rect(p: usize) -> impl Strategy<Value = Hyperrectangle> {
    proptest::collection::vec((endpoint(), endpoint(), any::<bool>(), any::<bool>()), p).prop_map(
        |coords| {
            let mut lo = Vec::new();
            let mut hi = Vec::new();
            let mut lc = Vec::new();
            let mut uc = Vec::new();
            for (a, b, ca, cb) in coords {
                let (a, b) = match (a, b) {
                    (Some(a), Some(b)) if a > b => (Some(b), Some(a)),
                    other => other,
                };
                let degenerate = a.is_some() && a == b;
                lo.push(a.unwrap_or(f64::NEG_INFINITY));
                hi.push(b.unwrap_or(f64::INFINITY));
                lc.push(a.is_some() && (ca || degenerate));
                uc.push(b.is_some() && (cb || degenerate));
            }
            Hyperrectangle::with_closedness(lo, hi, lc, uc).unwrap()
        },
    )
}

fn closed_rect(p: usize) -> impl Strategy<Value = Hyperrectangle> {
    rect(p).prop_map(|r| Hyperrectangle::closed(r.lower().to_vec(), r.upper().to_vec()).unwrap())
}

fn lattice_point(p: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec((-16i32..=16).prop_map(|k| k as f64 * 0.25), p)
}

fn width() -> impl Strategy<Value = f64> {
    (0i32..=8).prop_map(|k| k as f64 * 0.25)
}

fn point(p: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-4.0f64..4.0, p)
}

fn case() -> impl Strategy<Value = (Hyperrectangle, Vec<f64>)> {
    (1usize..=4).prop_flat_map(|p| (rect(p), lattice_point(p)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn shrink_inside_set_inside_enlarge((a, x) in case(), t in width()) {
        let inside = a.contains(&x).unwrap();
        if let Some(s) = a.shrink(t).unwrap() {
            prop_assert!(!s.contains(&x).unwrap() || inside);
        }
        prop_assert!(!inside || a.enlarge(t).unwrap().contains(&x).unwrap());
    }

    #[test]
    fn enlargements_are_nested((a, x) in case(), s in width(), extra in width()) {
        let small = a.enlarge(s).unwrap().contains(&x).unwrap();
        let big = a.enlarge(s + extra).unwrap().contains(&x).unwrap();
        prop_assert!(!small || big);
    }

    #[test]
    fn enlarged_shrink_stays_inside_closed_sets(
        (a, x) in (1usize..=4).prop_flat_map(|p| (closed_rect(p), lattice_point(p))),
        t in width(),
    ) {
        if let Some(s) = a.shrink(t).unwrap() {
            if s.enlarge(t).unwrap().contains(&x).unwrap() {
                prop_assert!(a.contains(&x).unwrap());
            }
        }
    }

    #[test]
    fn boundary_is_enlarged_minus_shrunk((a, x) in case(), t in width()) {
        let shrunk = a.shrink(t).unwrap().map_or(false, |s| s.contains(&x).unwrap());
        let expected = a.enlarge(t).unwrap().contains(&x).unwrap() && !shrunk;
        prop_assert_eq!(a.in_boundary(&x, t).unwrap(), expected);
    }

    #[test]
    fn phi_is_a_probability_and_monotone_in_the_set(
        (a, s) in (1usize..=4).prop_flat_map(|p| (rect(p), point(p))),
        t in width(),
        eps in 0.05f64..2.0,
    ) {
        let outer = SmoothedIndicator::new(a.clone(), eps).unwrap().phi(&s).unwrap();
        prop_assert!((0.0..=1.0).contains(&outer));
        if let Some(inner) = a.shrink(t).unwrap() {
            let v = SmoothedIndicator::new(inner, eps).unwrap().phi(&s).unwrap();
            prop_assert!(v <= outer + 1e-15);
        }
    }

    #[test]
    fn derivative_tensors_are_symmetric(
        (a, s) in (1usize..=4).prop_flat_map(|p| (rect(p), point(p))),
        eps in 0.1f64..2.0,
    ) {
        let si = SmoothedIndicator::new(a, eps).unwrap();
        let p = si.dim();
        let h = si.hess(&s).unwrap();
        let t = si.third(&s).unwrap();
        for i in 0..p {
            for j in 0..p {
                prop_assert_eq!(h.get(&[i, j]), h.get(&[j, i]));
                for k in 0..p {
                    let v = t.get(&[i, j, k]);
                    for perm in [[i, k, j], [j, i, k], [j, k, i], [k, i, j], [k, j, i]] {
                        prop_assert_eq!(v, t.get(&perm));
                    }
                }
            }
        }
    }

    #[test]
    fn fast_l1_matches_dense_l1(
        (a, s) in (1usize..=5).prop_flat_map(|p| (rect(p), point(p))),
        eps in 0.1f64..2.0,
        order in 1usize..=3,
    ) {
        let si = SmoothedIndicator::new(a, eps).unwrap();
        let dense = l1_norm(&si.derivative(&s, order).unwrap());
        let fast = si.derivative_l1(&s, order).unwrap();
        prop_assert!((dense - fast).abs() <= 1e-12 * dense.max(1e-300) + 1e-300);
    }

    #[test]
    fn dilation_identity(
        (a, s) in (1usize..=3).prop_flat_map(|p| (rect(p), point(p))),
        eps in 0.1f64..3.0,
        order in 1usize..=3,
    ) {
        let (left, right) = scaling_check(&a, &s, eps, order).unwrap();
        let scale = left.max_abs().max(right.max_abs());
        for (l, r) in left.entries.iter().zip(&right.entries) {
            prop_assert!((l - r).abs() <= 1e-10 * scale + f64::MIN_POSITIVE);
        }
    }

    #[test]
    fn taylor_terms_add_up(
        (a, s, v) in (1usize..=4).prop_flat_map(|p| (rect(p), point(p), point(p))),
        eps in 0.1f64..2.0,
        n in 1usize..100,
    ) {
        let si = SmoothedIndicator::new(a, eps).unwrap();
        let t = taylor_terms(&si, &s, &v, n).unwrap();
        let moved: Vec<f64> = s.iter().zip(&v).map(|(x, y)| x + y / (n as f64).sqrt()).collect();
        let direct = si.phi(&moved).unwrap() - si.phi(&s).unwrap();
        prop_assert!((t.l + t.q + t.r - direct).abs() <= 1e-12);
    }

    #[test]
    fn telescoping_is_exact(n in 1usize..=12, t in -3.0f64..3.0, pi in 0.1f64..0.9) {
        for law in [EntryLaw::Rademacher, EntryLaw::TwoPointAsymmetric(pi)] {
            let (sum, direct) = exact_telescoping_p1(law, n, t).unwrap();
            prop_assert!((sum - direct).abs() <= 1e-12);
        }
    }

    #[test]
    fn quantile_is_the_smallest_covering_value(
        values in proptest::collection::vec((0u8..10).prop_map(|v| v as f64), 1..120),
        alpha in 0.001f64..0.999,
    ) {
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let q = bootstrap_quantile(&sorted, alpha).unwrap();
        let b = sorted.len() as f64;
        let frac = |v: f64| sorted.iter().filter(|&&x| x <= v).count() as f64 / b;
        prop_assert!(frac(q) >= 1.0 - alpha);
        for &v in sorted.iter().filter(|&&v| v < q) {
            prop_assert!(frac(v) < 1.0 - alpha);
        }
    }

    #[test]
    fn quantile_is_nonincreasing_in_alpha(
        values in proptest::collection::vec(0.0f64..5.0, 1..80),
        a in 0.001f64..0.999,
        b in 0.001f64..0.999,
    ) {
        let mut sorted = values;
        sorted.sort_by(f64::total_cmp);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(bootstrap_quantile(&sorted, hi).unwrap() <= bootstrap_quantile(&sorted, lo).unwrap());
    }

    #[test]
    fn coverage_event_is_the_max_statistic_event(
        data in proptest::collection::vec(-2.0f64..2.0, 12),
        shift in proptest::collection::vec(-0.6f64..0.6, 3),
        seed in any::<u64>(),
    ) {
        let x = SampleMatrix::from_matrix(Matrix::from_row_major(4, 3, data).unwrap()).unwrap();
        let summary = empirical_resample(&x, 50, seed, 0.2).unwrap();
        let cis = simultaneous_cis(&x, &summary);
        let mu: Vec<f64> = cis.centers.iter().zip(&shift).map(|(c, d)| c + d).collect();
        prop_assert_eq!(cis.covers(&mu), max_statistic_centered(&x, &mu).unwrap() <= summary.q_hat);
        prop_assert_eq!(mean_test(&x, &summary), max_statistic(&x) > summary.q_hat);
    }

    #[test]
    fn uniform_rescaling_leaves_the_coverage_event_unchanged(
        data in proptest::collection::vec(-2.0f64..2.0, 30),
        mu in proptest::collection::vec(-0.5f64..0.5, 3),
        k in -4i32..4,
        seed in any::<u64>(),
    ) {
        let c = 2f64.powi(k);
        let x = SampleMatrix::from_matrix(Matrix::from_row_major(10, 3, data.clone()).unwrap()).unwrap();
        let scaled: Vec<f64> = data.iter().map(|v| v * c).collect();
        let xs = SampleMatrix::from_matrix(Matrix::from_row_major(10, 3, scaled).unwrap()).unwrap();
        let mus: Vec<f64> = mu.iter().map(|v| v * c).collect();
        let e1 = max_statistic_centered(&x, &mu).unwrap() <= empirical_resample(&x, 100, seed, 0.1).unwrap().q_hat;
        let e2 = max_statistic_centered(&xs, &mus).unwrap() <= empirical_resample(&xs, 100, seed, 0.1).unwrap().q_hat;
        prop_assert_eq!(e1, e2);
    }

    #[test]
    fn exact_power_laws_are_recovered(slope in -2.0f64..-0.1, c in 0.1f64..10.0) {
        let points: Vec<RatePoint> = [4.0, 16.0, 64.0, 256.0, 1024.0]
            .iter()
            .map(|&n: &f64| RatePoint { n, distance: c * n.powf(slope), std_error: 0.0 })
            .collect();
        let fit = fit_loglog_slope(&points).unwrap();
        prop_assert!((fit.slope - slope).abs() < 1e-10);
        prop_assert!((fit.intercept - c.ln()).abs() < 1e-9);
    }

    #[test]
    fn sampling_is_a_function_of_the_seed(seed in any::<u64>(), n in 1usize..20) {
        let spec = PopulationSpec::new(3, EntryLaw::ScaledLaplace, CorrelationModel::Ar1(0.5), 0).unwrap();
        let a = sample_population(&spec, n, seed).unwrap();
        let b = sample_population(&spec, n, seed).unwrap();
        prop_assert_eq!(a.data(), b.data());
        prop_assert_ne!(derive_seed(seed, 0), derive_seed(seed, 1));
    }
}

#[test]
fn single_sign_distance_is_phi_of_one_minus_half() {
    let (d, t) = rademacher_kolmogorov_exact(1).unwrap();
    assert!((d - (norm_cdf(1.0) - 0.5)).abs() < 1e-12, "{d}");
    assert_eq!(t, 1.0);
    assert!((d - 0.341_344_746_068_542_9).abs() < 1e-9);
}

#[test]
fn binomial_oracle_is_a_cdf() {
    for n in [1u64, 2, 7, 30] {
        let mut last = 0.0;
        for k in -40..=40 {
            let v = binomial_clt_oracle(n, k as f64 * 0.2).unwrap();
            assert!(v >= last && v <= 1.0 + 1e-15);
            last = v;
        }
        assert!((last - 1.0).abs() < 1e-12);
    }
}
