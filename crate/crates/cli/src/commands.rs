use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use epiwalk::ballwalk::{chain_rng, default_steps_per_sample};
use epiwalk::{
    decide, error_bound, optimize, sample_from_point, AdaptiveConfig, AffineMap, AnalyticBody,
    DVector, LiftedPoint, NoiseModel, NoisyOracle, Phase, QueryLedger, RunResult, TestFunction,
    Verdict, WalkConfig,
};
use serde::Serialize;

use crate::config::RunConfig;
use crate::output::{write_result, write_sweep, write_trace, SweepRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_TRUNCATED: i32 = 2;

pub struct RunOutcome {
    pub result: RunResult,
    pub exit_code: i32,
}

/// Runs the optimizer and writes `result.json` and `trace.csv` to `out_dir`.
pub fn cmd_run(cfg: &RunConfig, out_dir: &Path) -> Result<RunOutcome> {
    let p = cfg.problem()?;
    let result = optimize(&p.func, &p.noise, p.eps, &p.optimizer)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    write_result(&out_dir.join("result.json"), &result)?;
    write_trace(&out_dir.join("trace.csv"), &result.trace)?;
    let exit_code = if result.truncated {
        EXIT_TRUNCATED
    } else {
        EXIT_OK
    };
    Ok(RunOutcome { result, exit_code })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    Eps,
    Sigma,
    Dim,
    Seed,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            Self::Eps => "eps",
            Self::Sigma => "sigma",
            Self::Dim => "dim",
            Self::Seed => "seed",
        }
    }

    fn apply(self, cfg: &mut RunConfig, value: f64) -> Result<()> {
        let as_int = |what: &str| -> Result<u64> {
            if !(value >= 0.0 && value.fract() == 0.0 && value < u64::MAX as f64) {
                bail!("invalid `{what}` value {value}: expected a nonnegative integer");
            }
            Ok(value as u64)
        };
        match self {
            Self::Eps => cfg.eps = value,
            Self::Sigma => cfg.sigma = value,
            Self::Dim => cfg.dim = as_int("dim")? as usize,
            Self::Seed => cfg.seed = as_int("seed")?,
        }
        Ok(())
    }
}

pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub exit_code: i32,
}

/// One run per `(value, repeat)`. Repeat `r` uses seed `base.seed + r`, so
/// every value sees the same seeds; sweeping `seed` sets it directly. Each
/// run's files go to `out_dir/runs/<row>/`, and `sweep.csv` collects one row
/// per run. Failed runs are recorded and the sweep continues.
pub fn cmd_sweep(
    base: &RunConfig,
    vary: SweepParam,
    values: &[f64],
    repeats: usize,
    out_dir: &Path,
) -> Result<SweepOutcome> {
    ensure!(!values.is_empty(), "invalid `values`: the list is empty");
    ensure!(repeats >= 1, "invalid `repeats`: must be at least 1");
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let mut rows = Vec::new();
    for &value in values {
        for repeat in 0..repeats {
            let mut cfg = base.clone();
            cfg.seed = base.seed.wrapping_add(repeat as u64);
            let run_dir = out_dir.join("runs").join(format!("{:03}", rows.len()));
            let outcome = vary
                .apply(&mut cfg, value)
                .and_then(|()| cmd_run(&cfg, &run_dir));
            let mut row = SweepRow {
                vary: vary.name().to_string(),
                value,
                repeat,
                seed: cfg.seed,
                total_queries: None,
                final_subopt: None,
                epochs: None,
                truncated: None,
                exit_code: EXIT_ERROR,
                error: String::new(),
            };
            match outcome {
                Ok(o) => {
                    row.total_queries = Some(o.result.total_queries);
                    row.final_subopt = Some(o.result.final_subopt);
                    row.epochs = Some(o.result.epochs_run);
                    row.truncated = Some(o.result.truncated);
                    row.exit_code = o.exit_code;
                }
                Err(e) => row.error = format!("{e:#}"),
            }
            rows.push(row);
        }
    }
    write_sweep(&out_dir.join("sweep.csv"), &rows)?;
    let exit_code = if rows.iter().all(|r| r.exit_code != EXIT_ERROR) {
        EXIT_OK
    } else {
        EXIT_ERROR
    };
    Ok(SweepOutcome { rows, exit_code })
}

#[derive(Clone, Debug)]
pub struct AdaptiveArgs {
    pub func: String,
    pub x: Vec<f64>,
    /// Signed gap `y - f(x)`.
    pub delta: f64,
    pub sigma: f64,
    pub confidence: f64,
    pub band: f64,
    pub trials: usize,
    pub seed: u64,
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdaptiveReport {
    pub trials: usize,
    pub delta: f64,
    pub inside: usize,
    pub outside: usize,
    pub gave_up_inside: usize,
    pub gave_up_outside: usize,
    /// Verdicts on the wrong side of the true gap, give-ups included.
    pub wrong: usize,
    pub error_rate: f64,
    pub error_bound: f64,
    pub mean_queries: f64,
    /// `8 C^2 sigma^2 / delta^2`.
    pub query_cap: f64,
    pub max_m: u64,
}

#[derive(Serialize)]
struct AdaptiveTrialRow {
    trial: usize,
    verdict: Verdict,
    queries_spent: u64,
    final_m: u64,
    estimate: f64,
}

/// Repeats the adaptive test at `(x, f(x) + delta)` and tallies verdicts.
pub fn cmd_test_adaptive(args: &AdaptiveArgs) -> Result<AdaptiveReport> {
    ensure!(args.trials >= 1, "invalid `trials`: must be at least 1");
    ensure!(
        !args.x.is_empty(),
        "invalid `x`: needs at least one coordinate"
    );
    let func = TestFunction::by_name(&args.func, args.x.len(), 0.25)?;
    ensure!(
        func.in_domain(&args.x),
        "invalid `x`: {:?} lies outside the domain",
        args.x
    );
    let noise = if args.sigma == 0.0 {
        NoiseModel::none()
    } else {
        NoiseModel::gaussian(args.sigma)?
    };
    let cfg = AdaptiveConfig::new(args.confidence, args.sigma, args.band)?;
    let oracle = NoisyOracle::new(func.clone(), noise);
    let p = LiftedPoint::new(args.x.clone(), func.evaluate(&args.x) + args.delta);
    let mut rng = chain_rng(args.seed, 0, 0);
    let mut ledger = QueryLedger::new();
    let mut counts = [0usize; 4];
    let mut wrong = 0;
    let mut trial_rows = Vec::new();
    for trial in 0..args.trials {
        let d = decide(&p, &cfg, &oracle, Phase::Sample, &mut ledger, &mut rng)?;
        let slot = match d.verdict {
            Verdict::Inside => 0,
            Verdict::Outside => 1,
            Verdict::GaveUpInside => 2,
            Verdict::GaveUpOutside => 3,
        };
        counts[slot] += 1;
        let truly_inside = args.delta >= 0.0;
        if d.verdict.accepts() != truly_inside {
            wrong += 1;
        }
        if args.csv.is_some() {
            trial_rows.push(AdaptiveTrialRow {
                trial,
                verdict: d.verdict,
                queries_spent: d.queries_spent,
                final_m: d.final_m,
                estimate: d.estimate,
            });
        }
    }
    if let Some(path) = &args.csv {
        let mut w = csv::Writer::from_path(path)?;
        for row in &trial_rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    let n = args.trials as f64;
    Ok(AdaptiveReport {
        trials: args.trials,
        delta: args.delta,
        inside: counts[0],
        outside: counts[1],
        gave_up_inside: counts[2],
        gave_up_outside: counts[3],
        wrong,
        error_rate: wrong as f64 / n,
        error_bound: error_bound(args.delta.abs(), &cfg),
        mean_queries: ledger.total() as f64 / n,
        query_cap: 8.0 * (args.confidence * args.sigma / args.delta).powi(2),
        max_m: cfg.max_m,
    })
}

#[derive(Clone, Debug)]
pub struct SampleArgs {
    pub body: String,
    pub count: usize,
    pub steps_per_sample: Option<usize>,
    pub step_radius: Option<f64>,
    pub n_chains: usize,
    pub burn_in_factor: usize,
    pub seed: u64,
    pub sequential: bool,
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SampleReport {
    pub body: String,
    pub count: usize,
    pub steps_per_sample: usize,
    pub step_radius: f64,
    pub acceptance_rate: f64,
    pub mean: Vec<f64>,
    pub exact_centroid: Vec<f64>,
    pub centroid_error: f64,
    /// Pearson statistic on a 4 x 4 grid; only for the unit square.
    pub chi_square_4x4: Option<f64>,
}

/// Pearson chi-square of 2-D points against the uniform law on a `k x k`
/// grid over `[-1/2, 1/2]^2`. Degrees of freedom: `k^2 - 1`.
pub fn grid_chi_square(points: &[DVector<f64>], k: usize) -> f64 {
    let mut cells = vec![0usize; k * k];
    let cell = |v: f64| (((v + 0.5) * k as f64).floor() as usize).min(k - 1);
    for p in points {
        cells[cell(p[0]) * k + cell(p[1])] += 1;
    }
    let expected = points.len() as f64 / (k * k) as f64;
    cells
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum()
}

/// Ball Walk on an analytic body from its centroid.
pub fn cmd_sample_uniform(args: &SampleArgs) -> Result<(SampleReport, Vec<DVector<f64>>)> {
    ensure!(args.count >= 1, "invalid `count`: must be at least 1");
    let body = AnalyticBody::from_name(&args.body)?;
    let d = body.ambient_dim();
    let cfg = WalkConfig {
        step_radius: args.step_radius.unwrap_or(1.0 / (d as f64).sqrt()),
        steps_per_sample: args
            .steps_per_sample
            .unwrap_or_else(|| default_steps_per_sample(d)),
        n_chains: args.n_chains,
        seed: args.seed,
        parallel: !args.sequential,
    };
    let centroid = body.exact_centroid();
    let out = sample_from_point(
        DVector::from_vec(centroid.clone()),
        AffineMap::identity(d),
        args.count,
        &cfg,
        args.burn_in_factor,
        &body,
        0,
        None,
    )?;
    let pts = out.samples.points;
    let mean: Vec<f64> = (0..d)
        .map(|i| pts.iter().map(|p| p[i]).sum::<f64>() / pts.len() as f64)
        .collect();
    let centroid_error = mean
        .iter()
        .zip(&centroid)
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        .sqrt();
    if let Some(path) = &args.csv {
        let mut w = csv::Writer::from_path(path)?;
        let header: Vec<String> = (0..d).map(|i| format!("z{i}")).collect();
        w.write_record(&header)?;
        for p in &pts {
            w.serialize(p.as_slice())?;
        }
        w.flush()?;
    }
    let report = SampleReport {
        body: args.body.clone(),
        count: pts.len(),
        steps_per_sample: cfg.steps_per_sample,
        step_radius: cfg.step_radius,
        acceptance_rate: out.stats.acceptance_rate(),
        mean,
        exact_centroid: centroid,
        centroid_error,
        chi_square_4x4: (body == AnalyticBody::Box { dim: 2 }).then(|| grid_chi_square(&pts, 4)),
    };
    Ok((report, pts))
}
