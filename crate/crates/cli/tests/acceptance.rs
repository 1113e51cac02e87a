//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs under `cargo test`; the lines are printed uncaptured.

use std::path::Path;
use std::time::Instant;

use epiwalk::ballwalk::chain_rng;
use epiwalk::{
    compute_cut_level, cut, decide, default_sample_count, error_bound, fit_transform,
    isotropy_report, sample_from_point, AdaptiveConfig, AffineMap, AnalyticBody, DVector,
    EpochState, FunctionKind, LiftedPoint, NoiseModel, NoisyOracle, Phase, QueryLedger, SampleSet,
    TestFunction, WalkConfig, DEFAULT_ALPHA,
};
use epiwalk_cli::commands::{cmd_run, cmd_sweep, grid_chi_square, SweepParam};
use epiwalk_cli::config::RunConfig;
use epiwalk_cli::output::{log_log_slope, read_trace, strip_timing};
use rand::Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn noiseless_config(seed: u64) -> RunConfig {
    RunConfig {
        func: "quadratic".into(),
        dim: 2,
        sigma: 0.0,
        eps: 0.01,
        seed,
        ..Default::default()
    }
}

/// Noiseless quadratic, n = 2, eps = 0.01 over seeds 0..10. Returns the
/// per-epoch survivor fractions for criterion 2 as well.
fn criterion_1(dir: &Path) -> (Verdict, Vec<f64>) {
    let mut hits = 0;
    let mut max_epochs = 0;
    let mut slowest = 0.0f64;
    let mut fractions = Vec::new();
    for seed in 0..10 {
        let started = Instant::now();
        let out = cmd_run(&noiseless_config(seed), &dir.join(format!("c1-{seed}"))).unwrap();
        slowest = slowest.max(started.elapsed().as_secs_f64());
        let r = out.result;
        if r.final_subopt <= 0.01 && !r.truncated {
            hits += 1;
        }
        max_epochs = max_epochs.max(r.epochs_run);
        fractions.extend(r.trace.iter().map(|e| e.survivor_fraction()));
    }
    let pass = hits >= 9 && max_epochs <= 40 && slowest < 120.0;
    (
        verdict(
            pass,
            format!(
                "{hits}/10 runs with f(x_hat) - f* <= 0.01, max epochs {max_epochs} (<= 40), slowest run {slowest:.2} s (< 120 s)"
            ),
        ),
        fractions,
    )
}

fn criterion_2(run_fractions: &[f64]) -> Verdict {
    // Exact uniform triangle, cut at the sample mean height.
    let body = AnalyticBody::Triangle2d;
    let mut rng = chain_rng(2, 0, 0);
    let points: Vec<_> = (0..1000).map(|_| body.sample_exact(&mut rng)).collect();
    let state = EpochState {
        t: 0,
        ceiling: 0.5,
        transform: AffineMap::identity(2),
        retained: SampleSet::new(points, AffineMap::identity(2)),
    };
    let level = compute_cut_level(&state);
    let frac = cut(&state, level).unwrap().retained.len() as f64 / 1000.0;
    let exact_ok = (frac - 4.0 / 9.0).abs() <= 0.05;

    let in_band = run_fractions
        .iter()
        .filter(|&&f| (1.0 / 3.0..=0.75).contains(&f))
        .count();
    let share = in_band as f64 / run_fractions.len().max(1) as f64;
    verdict(
        exact_ok && share >= 0.9 && !run_fractions.is_empty(),
        format!(
            "triangle survivor fraction {frac:.4} (4/9 +- 0.05); {in_band}/{} run epochs in [1/3, 3/4] ({:.1}% >= 90%)",
            run_fractions.len(),
            100.0 * share
        ),
    )
}

fn criterion_3() -> Verdict {
    const TRIALS: usize = 100_000;
    let f = TestFunction::new(FunctionKind::Quadratic, 1).unwrap();
    let oracle = NoisyOracle::new(f.clone(), NoiseModel::gaussian(1.0).unwrap());
    let x = vec![0.3];
    let mut failures = Vec::new();
    let mut worst_margin = f64::NEG_INFINITY;
    let mut worst_cost_ratio = 0.0f64;
    for (ci, &c) in [2.0, 3.0, 4.0].iter().enumerate() {
        // The band is far below every tested gap, so no test gives up.
        let cfg = AdaptiveConfig::new(c, 1.0, 1e-3).unwrap();
        for (di, &delta) in [0.05, 0.1, 0.2, 0.5].iter().enumerate() {
            for sign in [1.0, -1.0] {
                let p = LiftedPoint::new(x.clone(), f.evaluate(&x) + sign * delta);
                let mut rng = chain_rng(3, (ci * 8 + di * 2) as u64 + (sign > 0.0) as u64, 0);
                let mut ledger = QueryLedger::new();
                let mut wrong = 0usize;
                for _ in 0..TRIALS {
                    let d =
                        decide(&p, &cfg, &oracle, Phase::Sample, &mut ledger, &mut rng).unwrap();
                    if d.verdict.accepts() != (sign > 0.0) {
                        wrong += 1;
                    }
                }
                let rate = wrong as f64 / TRIALS as f64;
                let bound = error_bound(delta, &cfg);
                let se = (bound * (1.0 - bound) / TRIALS as f64).sqrt();
                let mean_cost = ledger.total() as f64 / TRIALS as f64;
                let cap = 8.0 * c * c / (delta * delta);
                worst_margin = worst_margin.max(rate - bound - 3.0 * se);
                worst_cost_ratio = worst_cost_ratio.max(mean_cost / cap);
                if rate > bound + 3.0 * se || mean_cost > cap {
                    failures.push(format!(
                        "C={c} delta={}: rate {rate:.5} bound {bound:.5}, cost {mean_cost:.0} cap {cap:.0}",
                        sign * delta
                    ));
                }
            }
        }
    }
    let detail = if failures.is_empty() {
        format!(
            "24 cells x 1e5 trials; max(rate - bound - 3 SE) = {worst_margin:.5} (<= 0), max cost/cap = {worst_cost_ratio:.3} (<= 1)"
        )
    } else {
        failures.join("; ")
    };
    verdict(failures.is_empty(), detail)
}

/// Exact uniform draw from `{x in [-1/2, 1/2]^n, |x|^2 <= y <= n/4}`.
fn epigraph_point<R: Rng>(n: usize, rng: &mut R) -> DVector<f64> {
    let ceiling = n as f64 / 4.0;
    loop {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..=0.5)).collect();
        let y = rng.random_range(0.0..=ceiling);
        if x.iter().map(|v| v * v).sum::<f64>() <= y {
            let mut z = x;
            z.push(y);
            return DVector::from_vec(z);
        }
    }
}

fn criterion_4() -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for n in [2usize, 3] {
        let count = default_sample_count(n, DEFAULT_ALPHA);
        let mut good = 0;
        let mut worst = 0.0f64;
        for seed in 0..10 {
            let mut rng = chain_rng(40 + n as u64, seed, 0);
            let fit: Vec<_> = (0..count).map(|_| epigraph_point(n, &mut rng)).collect();
            let held: Vec<_> = (0..20_000).map(|_| epigraph_point(n, &mut rng)).collect();
            let map = fit_transform(&fit).unwrap().map;
            let report = isotropy_report(&held, &map).unwrap();
            worst = worst.max(report.theta_hat);
            if report.min_eig >= 0.5 && report.max_eig <= 1.5 {
                good += 1;
            }
        }
        pass &= good >= 9;
        parts.push(format!(
            "n={n}: {good}/10 spectra in [0.5, 1.5] with {count} fit samples (worst theta {worst:.3})"
        ));
    }
    verdict(pass, parts.join("; "))
}

fn criterion_5() -> Verdict {
    let body = AnalyticBody::Box { dim: 2 };
    let cfg = WalkConfig::for_dimension(2, 5);
    let out = sample_from_point(
        DVector::zeros(2),
        AffineMap::identity(2),
        100_000,
        &cfg,
        10,
        &body,
        0,
        None,
    )
    .unwrap();
    let points = &out.samples.points;
    let stat = grid_chi_square(points, 4);
    let p_value = 1.0 - ChiSquared::new(15.0).unwrap().cdf(stat);

    // Output j continues chain j mod n_chains: lag 1 within a chain is lag
    // n_chains in output order.
    let lag = cfg.n_chains;
    let mut worst_ac = 0.0f64;
    for coord in 0..2 {
        let xs: Vec<f64> = points.iter().map(|p| p[coord]).collect();
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
        let cov: f64 = xs
            .iter()
            .zip(&xs[lag..])
            .map(|(a, b)| (a - mean) * (b - mean))
            .sum();
        worst_ac = worst_ac.max((cov / var).abs());
    }
    verdict(
        p_value > 0.01 && worst_ac < 0.2,
        format!(
            "chi-square {stat:.2} on 15 df, p = {p_value:.4} (> 0.01); within-chain lag-1 autocorrelation {worst_ac:.4} (< 0.2) at {} steps/sample",
            cfg.steps_per_sample
        ),
    )
}

fn criterion_6(dir: &Path) -> Verdict {
    let base = RunConfig {
        func: "quadratic".into(),
        dim: 2,
        sigma: 0.1,
        eps: 0.05,
        query_budget: 10_000_000,
        ..Default::default()
    };
    let mut hits = 0;
    let mut worst_queries = 0u64;
    for seed in 0..10 {
        let cfg = RunConfig {
            seed,
            ..base.clone()
        };
        let r = cmd_run(&cfg, &dir.join(format!("c6-{seed}")))
            .unwrap()
            .result;
        worst_queries = worst_queries.max(r.total_queries);
        if r.final_subopt <= 0.05 && !r.truncated {
            hits += 1;
        }
    }

    let sweep = cmd_sweep(
        &RunConfig {
            seed: 100,
            ..base.clone()
        },
        SweepParam::Eps,
        &[0.2, 0.1, 0.05],
        10,
        &dir.join("c6-sweep"),
    )
    .unwrap();
    let points: Vec<(f64, f64)> = sweep
        .rows
        .iter()
        .filter_map(|r| Some((1.0 / r.value, r.total_queries? as f64)))
        .collect();
    let slope = log_log_slope(&points).unwrap_or(f64::NAN);
    let slope_ok = sweep.exit_code == 0 && (1.5..=2.5).contains(&slope);
    verdict(
        hits >= 8 && slope_ok,
        format!(
            "{hits}/10 runs converged with f(x_hat) - f* <= 0.05 under 1e7 queries (max {worst_queries}); log-log slope of queries vs 1/eps = {slope:.2} (in [1.5, 2.5])"
        ),
    )
}

fn stripped_result(dir: &Path) -> serde_json::Value {
    let text = std::fs::read_to_string(dir.join("result.json")).unwrap();
    strip_timing(serde_json::from_str(&text).unwrap())
}

fn criterion_7(dir: &Path) -> Verdict {
    let mut mismatches = Vec::new();
    for (label, sigma, eps) in [("noiseless", 0.0, 0.01), ("noisy", 0.1, 0.1)] {
        let cfg = RunConfig {
            sigma,
            eps,
            seed: 7,
            ..Default::default()
        };
        let a = dir.join(format!("c7-{label}-a"));
        let b = dir.join(format!("c7-{label}-b"));
        let s = dir.join(format!("c7-{label}-seq"));
        cmd_run(&cfg, &a).unwrap();
        cmd_run(&cfg, &b).unwrap();
        cmd_run(
            &RunConfig {
                parallel: false,
                ..cfg.clone()
            },
            &s,
        )
        .unwrap();
        let (va, vb, mut vs) = (
            stripped_result(&a),
            stripped_result(&b),
            stripped_result(&s),
        );
        if va != vb {
            mismatches.push(format!("{label}: repeated parallel runs differ"));
        }
        // The scheduling flag itself is echoed; everything else must match.
        vs["config_echo"]["config"]["parallel"] = serde_json::Value::Bool(true);
        if va != vs {
            mismatches.push(format!("{label}: sequential and parallel runs differ"));
        }
        let strip_wall = |p: &Path| {
            read_trace(&p.join("trace.csv"))
                .unwrap()
                .into_iter()
                .map(|mut r| {
                    r.wall_ms = 0.0;
                    r
                })
                .collect::<Vec<_>>()
        };
        if strip_wall(&a) != strip_wall(&s) {
            mismatches.push(format!("{label}: traces differ"));
        }
    }
    let pass = mismatches.is_empty();
    let detail = if pass {
        "result.json identical without timing fields across repeated, parallel and sequential runs (noiseless and noisy)".to_string()
    } else {
        mismatches.join("; ")
    };
    verdict(pass, detail)
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let (v1, fractions) = criterion_1(dir.path());
    let results = [
        ("1 noiseless convergence", v1),
        ("2 volume shrinkage", criterion_2(&fractions)),
        ("3 adaptive calibration", criterion_3()),
        ("4 isotropy", criterion_4()),
        ("5 sampler uniformity", criterion_5()),
        (
            "6 noisy end-to-end and eps-scaling",
            criterion_6(dir.path()),
        ),
        ("7 determinism", criterion_7(dir.path())),
    ];

    println!();
    let mut failed = 0;
    for (name, v) in &results {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {name}: {tag}: {}", v.detail);
        failed += usize::from(!v.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
