//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use hdclt::checks::{
    coupling_sweep, dilation_check, far_field_sweep, finite_difference_check,
    moment_matching_sweep, nazarov_sweep, quantile_contract_check, taylor_residual_check,
    telescoping_oracle_check,
};
use hdclt::experiments::{
    run_experiment, Budgets, ExperimentConfig, ExperimentKind, ExperimentOutput, FamilyConfig,
    OutputConfig, ScaleName,
};
use hdclt::io::{
    distance_to_csv, series_to_csv, LawName, LawParams, ModelName, ModelParams, SpecFile,
};
use hdclt::mc::CouplingMode;
use hdclt::parallel::with_pool;
use hdclt_core::bootstrap::BootstrapMethod;
use hdclt_core::distance::rademacher_kolmogorov_exact;
use serde_json::Value;

/// `Φ(1) - 1/2`.
const D1: f64 = 0.341_344_746_068_542_9;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn spec(p: usize, law: LawName, model: ModelName, rho: Option<f64>) -> SpecFile {
    SpecFile {
        p,
        law,
        law_params: LawParams::default(),
        model,
        model_params: ModelParams {
            rho,
            ..Default::default()
        },
        seed: 0,
    }
}

fn config(experiment: ExperimentKind, spec: SpecFile, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        experiment,
        spec,
        n_grid: Vec::new(),
        family: FamilyConfig::Default,
        budgets: Budgets::default(),
        alpha: 0.1,
        coupling: CouplingMode::Quantile,
        methods: vec![BootstrapMethod::Empirical, BootstrapMethod::Multiplier],
        delta_grid: Vec::new(),
        true_covariance: false,
        check_scale: ScaleName::Quick,
        seed,
        output: OutputConfig {
            csv: "series.csv".into(),
            json: "summary.json".into(),
            distances: None,
        },
    }
}

fn run(cfg: &ExperimentConfig) -> ExperimentOutput {
    run_experiment(cfg).unwrap_or_else(|e| panic!("{:?}: {e}", cfg.experiment))
}

fn checks(results: Vec<(&str, hdclt_core::Result<(bool, Value)>)>) -> Verdict {
    let mut failed = Vec::new();
    for (name, r) in results {
        match r {
            Ok((true, _)) => {}
            Ok((false, detail)) => failed.push(format!("{name}: {detail}")),
            Err(e) => failed.push(format!("{name}: error {e}")),
        }
    }
    if failed.is_empty() {
        verdict(true, "all checks hold")
    } else {
        verdict(false, failed.join("; "))
    }
}

fn fit_slope(summary: &Value) -> Option<(f64, f64)> {
    let fit = summary.get("fit")?;
    Some((fit["slope"].as_f64()?, fit["slope_std_error"].as_f64()?))
}

fn powers_of_two(lo: usize, hi: usize) -> Vec<usize> {
    std::iter::successors(Some(lo), |&n| Some(n * 2))
        .take_while(|&n| n <= hi)
        .collect()
}

fn exact_berry_esseen() -> Verdict {
    let (d1, _) = rademacher_kolmogorov_exact(1).unwrap();
    let mut cfg = config(
        ExperimentKind::CltRate,
        spec(1, LawName::Rademacher, ModelName::Identity, None),
        1,
    );
    cfg.family = FamilyConfig::AllCorners;
    cfg.n_grid = powers_of_two(4, 4096);
    let out = run(&cfg);
    let Some((slope, se)) = fit_slope(&out.summary) else {
        return verdict(false, "no fit");
    };
    let pass = (d1 - D1).abs() <= 1e-9 && (-0.55..=-0.45).contains(&slope);
    verdict(
        pass,
        format!(
            "D_1 = {d1:.12} (|err| {:.1e}), slope {slope:.4} ± {se:.4}",
            (d1 - D1).abs()
        ),
    )
}

fn smoothing_calculus() -> Verdict {
    let mut results: Vec<(&str, _)> = [1usize, 2, 4, 8]
        .iter()
        .map(|&p| {
            (
                "finite_difference",
                finite_difference_check(p, 10_000, 20 + p as u64),
            )
        })
        .collect();
    results.push(("dilation", dilation_check(10_000, 21)));
    results.push(("far_field", far_field_sweep(1000, 22)));
    checks(results)
}

fn lindeberg_identities() -> Verdict {
    checks(vec![
        ("taylor_residual", taylor_residual_check(10_000, 30)),
        ("telescoping", telescoping_oracle_check(12, 21)),
        ("moment_matching", moment_matching_sweep(20, 200_000, 31)),
    ])
}

fn coupling_inequality() -> Verdict {
    checks(vec![("coupling", coupling_sweep(50, 100_000, 40))])
}

fn nazarov() -> Verdict {
    let result = nazarov_sweep(&[1, 4, 16, 64], 1_000_000, 50);
    let summary = match &result {
        Ok((_, detail)) => detail["reports"]
            .as_array()
            .map(|rs| {
                rs.iter()
                    .map(|r| {
                        format!(
                            "p={} exp {:.3} ratio {:.3}",
                            r["p"],
                            r["t_exponent"].as_f64().unwrap_or(f64::NAN),
                            r["max_ratio"].as_f64().unwrap_or(f64::NAN)
                        )
                    })
                    .collect::<Vec<_>>()
                    .join(", ")
            })
            .unwrap_or_default(),
        Err(_) => String::new(),
    };
    let v = checks(vec![("nazarov", result)]);
    if v.pass {
        verdict(true, summary)
    } else {
        v
    }
}

fn gaussian_comparison() -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for (p, budget) in [(2usize, 0usize), (8, 2_000_000)] {
        let mut cfg = config(
            ExperimentKind::GaussianCompare,
            spec(
                p,
                LawName::StandardNormal,
                ModelName::Equicorrelated,
                Some(0.3),
            ),
            60 + p as u64,
        );
        cfg.delta_grid = vec![0.01, 0.02, 0.04, 0.08, 0.16];
        if budget > 0 {
            cfg.budgets.mc = budget;
        }
        let out = run(&cfg);
        let ok = out.summary["pass"].as_bool() == Some(true);
        pass &= ok;
        match fit_slope(&out.summary) {
            Some((slope, se)) => parts.push(format!("p={p} exponent {slope:.4} ± {se:.4}")),
            None => parts.push(format!("p={p} no fit: {}", out.summary["no_fit_reason"])),
        }
    }
    verdict(pass, parts.join(", "))
}

fn clt_rate() -> Verdict {
    let mut cfg = config(
        ExperimentKind::CltRate,
        spec(8, LawName::Rademacher, ModelName::Equicorrelated, Some(0.3)),
        70,
    );
    cfg.n_grid = powers_of_two(16, 4096);
    cfg.budgets.mc = 2_000_000;
    let out = run(&cfg);
    match fit_slope(&out.summary) {
        Some((slope, se)) => verdict(
            (-0.65..=-0.35).contains(&slope),
            format!("slope {slope:.4}, slope_std_error {se:.4}"),
        ),
        None => verdict(false, format!("no fit: {}", out.summary["no_fit_reason"])),
    }
}

fn bootstrap_coverage() -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for (law, seed) in [(LawName::StandardNormal, 80), (LawName::Rademacher, 81)] {
        let mut cfg = config(
            ExperimentKind::Coverage,
            spec(50, law, ModelName::Equicorrelated, Some(0.3)),
            seed,
        );
        cfg.n_grid = vec![500];
        cfg.budgets.b = 2000;
        cfg.budgets.reps = 2000;
        let out = run(&cfg);
        for m in out.summary["reports"][0]["methods"]
            .as_array()
            .expect("methods")
        {
            let c = m["coverage"].as_f64().expect("coverage");
            let ok = (c - 0.9).abs() <= 0.03;
            pass &= ok;
            parts.push(format!(
                "{law:?}/{} {c:.4}",
                m["method"].as_str().unwrap_or("?")
            ));
        }
    }
    verdict(pass, parts.join(", "))
}

fn quantile_contract() -> Verdict {
    checks(vec![(
        "quantile_contract",
        quantile_contract_check(10_000, 90),
    )])
}

fn serialized(out: &ExperimentOutput) -> (String, String, String) {
    let distances: String = out
        .distances
        .iter()
        .map(|(label, est)| distance_to_csv(label, est))
        .collect();
    (
        series_to_csv(&out.rows),
        serde_json::to_string(&out.summary).expect("serializes"),
        distances,
    )
}

fn determinism() -> Verdict {
    let small = |kind, s: SpecFile| {
        let mut cfg = config(kind, s, 100);
        cfg.n_grid = vec![8, 32];
        cfg.budgets = Budgets {
            mc: 20_000,
            b: 200,
            reps: 100,
            data_reps: 4,
        };
        cfg
    };
    let rad3 = || spec(3, LawName::Rademacher, ModelName::Equicorrelated, Some(0.3));
    let mut configs = vec![
        small(ExperimentKind::CltRate, rad3()),
        small(ExperimentKind::BootstrapRate, rad3()),
        small(
            ExperimentKind::BootstrapRate,
            spec(3, LawName::StandardNormal, ModelName::Ar1, None),
        ),
        small(ExperimentKind::Coverage, rad3()),
        small(ExperimentKind::SmoothingChecks, rad3()),
        small(ExperimentKind::LindebergChecks, rad3()),
    ];
    configs[2].spec.model_params.phi = Some(0.5);
    for p in [2, 4] {
        let mut cfg = small(
            ExperimentKind::GaussianCompare,
            spec(
                p,
                LawName::StandardNormal,
                ModelName::Equicorrelated,
                Some(0.3),
            ),
        );
        cfg.delta_grid = vec![0.02, 0.04, 0.08];
        configs.push(cfg);
    }
    let mut mismatched = Vec::new();
    for cfg in &configs {
        let one = with_pool(Some(1), || serialized(&run(cfg))).expect("pool");
        let four = with_pool(Some(4), || serialized(&run(cfg))).expect("pool");
        if one != four {
            mismatched.push(format!("{:?} p={}", cfg.experiment, cfg.spec.p));
        }
    }
    if mismatched.is_empty() {
        verdict(
            true,
            format!("{} configs identical at 1 and 4 threads", configs.len()),
        )
    } else {
        verdict(false, format!("differs: {}", mismatched.join(", ")))
    }
}

type Criterion = (&'static str, Option<Duration>, fn() -> Verdict);

fn main() -> ExitCode {
    let minutes = |m: u64| Some(Duration::from_secs(60 * m));
    let criteria: [Criterion; 10] = [
        (
            "exact p=1 Berry-Esseen path",
            Some(Duration::from_secs(10)),
            exact_berry_esseen,
        ),
        ("smoothing calculus", minutes(1), smoothing_calculus),
        ("Lindeberg identities", minutes(5), lindeberg_identities),
        (
            "coupling inequality",
            Some(Duration::from_secs(30)),
            coupling_inequality,
        ),
        ("Nazarov boundary mass", minutes(2), nazarov),
        ("Gaussian comparison", minutes(10), gaussian_comparison),
        ("CLT rate p=8", minutes(30), clt_rate),
        ("bootstrap coverage", minutes(30), bootstrap_coverage),
        (
            "quantile contract",
            Some(Duration::from_secs(10)),
            quantile_contract,
        ),
        ("determinism across threads", None, determinism),
    ];
    let filter: Option<String> = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failures = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let label = format!("criterion {}", i + 1);
        if filter
            .as_ref()
            .is_some_and(|f| !label.ends_with(&format!(" {f}")) && !name.contains(f.as_str()))
        {
            continue;
        }
        let start = Instant::now();
        let v = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            verdict(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let pass = v.pass && in_time;
        let budget = limit.map_or(String::new(), |l| {
            format!(" / limit {:.0}s", l.as_secs_f64())
        });
        println!(
            "{label} [{name}]: {} ({:.1}s{budget}) {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            v.detail
        );
        failures += usize::from(!pass);
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
