//! The Cut / Round / Sample epoch loop.
//!
//! Each epoch lowers the ceiling to the mean height of the current samples,
//! fits a whitening map on half of the survivors, and walks the other half
//! into a fresh near-uniform sample set of the smaller body. The run stops
//! when the body is vertically thinner than `eps` (judged from estimated
//! function values at the survivors), when the epoch limit is reached, or
//! when the query budget runs out.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::adaptive::{default_confidence, AdaptiveConfig};
use crate::ballwalk::{
    burn_in_and_harvest, chain_rng, default_steps_per_sample, run_chains, warm_start,
    EpigraphMembership, SampleSet, WalkConfig, SERVICE_STREAM,
};
use crate::error::{invalid, Result};
use crate::geometry::{AffineMap, EpigraphBody, LiftedPoint};
use crate::oracle::{NoiseModel, NoisyOracle, Phase, QueryLedger, TestFunction};
use crate::rounding::{default_sample_count, fit_transform, isotropy_report, DEFAULT_ALPHA};

/// Tunables of a run. `None` fields are derived from the dimension and
/// accuracy; see [`ResolvedParams`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub seed: u64,
    pub query_budget: u64,
    pub n_chains: usize,
    pub step_radius: Option<f64>,
    pub steps_per_sample: Option<usize>,
    /// `n_t`, fresh samples per epoch.
    pub samples_per_epoch: Option<usize>,
    pub rounding_alpha: f64,
    /// `C`; defaults to `sqrt(2 (ell + 1) ln n)`.
    pub confidence: Option<f64>,
    /// `ell`.
    pub error_exponent: f64,
    /// Defaults to `eps`.
    pub give_up_band: Option<f64>,
    pub burn_in_factor: usize,
    pub initial_ceiling: Option<f64>,
    pub max_epochs: Option<usize>,
    pub parallel: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            query_budget: 1_000_000_000,
            n_chains: 3,
            step_radius: None,
            steps_per_sample: None,
            samples_per_epoch: None,
            rounding_alpha: DEFAULT_ALPHA,
            confidence: None,
            error_exponent: 5.0,
            give_up_band: None,
            burn_in_factor: 10,
            initial_ceiling: None,
            max_epochs: None,
            parallel: true,
        }
    }
}

/// Every derived parameter of a run, echoed into the result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedParams {
    pub samples_per_epoch: usize,
    pub steps_per_sample: usize,
    pub step_radius: f64,
    pub confidence: f64,
    pub give_up_band: f64,
    pub max_m: u64,
    /// `m_f`, queries per final value estimate.
    pub extract_m: u64,
    pub max_epochs: usize,
    pub initial_ceiling: f64,
}

/// `ceil((n+1) ln(1/eps) / ln(3/2)) + 5`.
pub fn max_epochs(n: usize, eps: f64) -> usize {
    (((n + 1) as f64) * (1.0 / eps).ln() / 1.5f64.ln()).ceil() as usize + 5
}

impl ResolvedParams {
    pub fn resolve(
        func: &TestFunction,
        noise: &NoiseModel,
        eps: f64,
        cfg: &OptimizerConfig,
    ) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(invalid("eps", format!("{eps} is outside (0, 1)")));
        }
        let n = func.dim;
        let d = n + 1;
        let sigma = noise.scale();
        let samples_per_epoch = cfg
            .samples_per_epoch
            .unwrap_or_else(|| default_sample_count(n, cfg.rounding_alpha));
        if samples_per_epoch < d + 1 {
            return Err(invalid(
                "samples_per_epoch",
                format!("{samples_per_epoch} is below n + 2 = {}", d + 1),
            ));
        }
        let confidence = cfg
            .confidence
            .unwrap_or_else(|| default_confidence(n, cfg.error_exponent));
        let give_up_band = cfg.give_up_band.unwrap_or(eps);
        let adaptive = AdaptiveConfig::new(confidence, sigma, give_up_band)?;
        let extract_m = if sigma == 0.0 {
            1
        } else {
            (4.0 * confidence * confidence * sigma * sigma / (eps * eps)).ceil() as u64
        };
        let initial_ceiling = cfg.initial_ceiling.unwrap_or_else(|| func.max_over_cube());
        if !initial_ceiling.is_finite() {
            return Err(invalid("initial_ceiling", "must be finite"));
        }
        let params = Self {
            samples_per_epoch,
            steps_per_sample: cfg
                .steps_per_sample
                .unwrap_or_else(|| default_steps_per_sample(d)),
            step_radius: cfg.step_radius.unwrap_or(1.0 / (d as f64).sqrt()),
            confidence,
            give_up_band,
            max_m: adaptive.max_m,
            extract_m,
            max_epochs: cfg.max_epochs.unwrap_or_else(|| max_epochs(n, eps)),
            initial_ceiling,
        };
        params.walk_config(cfg).validate()?;
        if cfg.burn_in_factor == 0 {
            return Err(invalid("burn_in_factor", "must be at least 1"));
        }
        Ok(params)
    }

    pub fn adaptive(&self, sigma: f64) -> Result<AdaptiveConfig> {
        AdaptiveConfig::new(self.confidence, sigma, self.give_up_band)
    }

    pub fn walk_config(&self, cfg: &OptimizerConfig) -> WalkConfig {
        WalkConfig {
            step_radius: self.step_radius,
            steps_per_sample: self.steps_per_sample,
            n_chains: cfg.n_chains,
            seed: cfg.seed,
            parallel: cfg.parallel,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Ceiling before the cut.
    pub ceiling: f64,
    /// New ceiling after the cut.
    pub cut_level: f64,
    pub retained_before_cut: usize,
    pub survivors_after_cut: usize,
    /// Isotropy of the fresh samples; absent when the epoch stopped after
    /// the cut.
    pub theta_hat: Option<f64>,
    pub give_ups: u64,
    pub queries_this_epoch: u64,
    pub queries_cum: u64,
    pub min_estimate: f64,
    pub subopt_if_known: f64,
    /// `|T e_{n+1}|`: how the current frame stretches vertical gaps.
    pub vertical_scale: f64,
    pub rewarm: bool,
    pub stall: bool,
    pub floored: bool,
    pub wall_ms: f64,
}

impl EpochStats {
    pub fn survivor_fraction(&self) -> f64 {
        self.survivors_after_cut as f64 / self.retained_before_cut.max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochState {
    pub t: usize,
    pub ceiling: f64,
    pub transform: AffineMap,
    pub retained: SampleSet,
}

/// Mean last coordinate of the retained samples in original coordinates.
pub fn compute_cut_level(state: &EpochState) -> f64 {
    let pts = state.retained.original_points();
    let last = state.transform.dim() - 1;
    pts.iter().map(|p| p[last]).sum::<f64>() / pts.len().max(1) as f64
}

/// Lowers the ceiling to `level` and keeps the samples at or below it.
pub fn cut(state: &EpochState, level: f64) -> Result<EpochState> {
    if !(level < state.ceiling) {
        return Err(invalid(
            "level",
            format!("{level} does not lie below the ceiling {}", state.ceiling),
        ));
    }
    let last = state.transform.dim() - 1;
    let points = state
        .retained
        .points
        .iter()
        .filter(|z| state.transform.unapply(z)[last] <= level)
        .cloned()
        .collect();
    Ok(EpochState {
        t: state.t,
        ceiling: level,
        transform: state.transform.clone(),
        retained: SampleSet {
            points,
            frame: state.transform.clone(),
            give_up_count: state.retained.give_up_count,
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    EpochLimit,
    BudgetExhausted,
}

/// What `run_epoch` needs besides the state.
pub struct EpochContext<'a> {
    pub oracle: &'a NoisyOracle,
    pub params: &'a ResolvedParams,
    pub walk: WalkConfig,
    pub adaptive: AdaptiveConfig,
    pub eps: f64,
    pub query_budget: u64,
}

pub struct EpochOutcome {
    pub state: EpochState,
    pub stats: EpochStats,
    pub stop: Option<StopReason>,
    /// Survivor with the smallest estimated value, and that estimate.
    pub best: Option<(Vec<f64>, f64)>,
}

fn epoch_stream(t: usize) -> u64 {
    10 * t as u64
}

/// Estimates `f` at each point's `x` with `m` queries; returns the values.
fn estimate_values(
    oracle: &NoisyOracle,
    points: &[DVector<f64>],
    m: u64,
    phase: Phase,
    seed: u64,
    stream: u64,
    ledger: &mut QueryLedger,
) -> Result<Vec<f64>> {
    let mut rng = chain_rng(seed, stream, SERVICE_STREAM);
    let n = oracle.dim();
    points
        .iter()
        .map(|p| oracle.query(&p.as_slice()[..n], m, phase, ledger, &mut rng))
        .collect()
}

fn argmin(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
}

/// One Cut / Round / Sample epoch.
pub fn run_epoch(
    state: &EpochState,
    ctx: &EpochContext<'_>,
    ledger: &mut QueryLedger,
) -> Result<EpochOutcome> {
    let started = Instant::now();
    let queries_before = ledger.total();
    let t = state.t + 1;
    let func = &ctx.oracle.func;
    let d = func.dim + 1;
    let stream = epoch_stream(t);

    let level = compute_cut_level(state);
    let stall = !(level < state.ceiling);
    let cut_state = if stall {
        EpochState {
            t: state.t,
            ..state.clone()
        }
    } else {
        cut(state, level)?
    };
    let new_ceiling = cut_state.ceiling;
    let survivors = cut_state.retained.original_points();

    let estimates = estimate_values(
        ctx.oracle,
        &survivors,
        ctx.params.extract_m,
        Phase::CutEstimate,
        ctx.walk.seed,
        stream + 5,
        ledger,
    )?;
    let best_idx = argmin(&estimates).expect("at least one sample lies below the mean");
    let best_x = survivors[best_idx].as_slice()[..func.dim].to_vec();
    let min_estimate = estimates[best_idx];
    let best = Some((best_x.clone(), min_estimate));

    let mut stats = EpochStats {
        epoch: t,
        ceiling: state.ceiling,
        cut_level: new_ceiling,
        retained_before_cut: state.retained.len(),
        survivors_after_cut: survivors.len(),
        theta_hat: None,
        give_ups: 0,
        queries_this_epoch: 0,
        queries_cum: 0,
        min_estimate,
        subopt_if_known: func.evaluate(&best_x) - func.known_min(),
        vertical_scale: state.transform.vertical_scale(),
        rewarm: false,
        stall,
        floored: false,
        wall_ms: 0.0,
    };

    let finish = |mut stats: EpochStats, ledger: &QueryLedger| {
        stats.queries_this_epoch = ledger.total() - queries_before;
        stats.queries_cum = ledger.total();
        stats.wall_ms = started.elapsed().as_secs_f64() * 1e3;
        stats
    };

    if new_ceiling - min_estimate <= ctx.eps {
        return Ok(EpochOutcome {
            state: EpochState { t, ..cut_state },
            stats: finish(stats, ledger),
            stop: Some(StopReason::Converged),
            best,
        });
    }

    let body = EpigraphBody::for_function(func, new_ceiling);
    let remaining = ctx.query_budget.saturating_sub(ledger.total());
    let (frame, output) = if survivors.len() < d + 1 {
        stats.rewarm = true;
        let frame = cut_state.transform.clone();
        let membership = EpigraphMembership {
            oracle: ctx.oracle,
            body,
            frame: &frame,
            adaptive: ctx.adaptive,
            phase: Phase::Sample,
        };
        let out = burn_in_and_harvest(
            &cut_state.retained,
            ctx.params.samples_per_epoch,
            &ctx.walk,
            1,
            &membership,
            stream,
            Some(remaining),
        )?;
        (frame, out)
    } else {
        let (fit_half, seed_half): (Vec<_>, Vec<_>) = cut_state
            .retained
            .points
            .iter()
            .enumerate()
            .partition(|(i, _)| i % 2 == 0);
        let fit_pts: Vec<DVector<f64>> = fit_half.into_iter().map(|(_, z)| z.clone()).collect();
        let fitted = fit_transform(&fit_pts)?;
        stats.floored = fitted.floored;
        let frame = fitted.map.compose(&cut_state.transform);
        let seeds = SampleSet::new(
            seed_half.into_iter().map(|(_, z)| z.clone()).collect(),
            cut_state.transform.clone(),
        )
        .reframed(frame.clone());
        let membership = EpigraphMembership {
            oracle: ctx.oracle,
            body,
            frame: &frame,
            adaptive: ctx.adaptive,
            phase: Phase::Sample,
        };
        let out = run_chains(
            &seeds,
            ctx.params.samples_per_epoch,
            &ctx.walk,
            &membership,
            stream,
            Some(remaining),
        )?;
        (frame, out)
    };
    ledger.merge(&output.ledger);
    stats.give_ups = output.stats.give_ups;
    stats.vertical_scale = frame.vertical_scale();
    if output.samples.len() > d {
        let identity = AffineMap::identity(d);
        stats.theta_hat = Some(isotropy_report(&output.samples.points, &identity)?.theta_hat);
    }
    let stop = output.exhausted.then_some(StopReason::BudgetExhausted);
    let retained = if output.samples.is_empty() {
        cut_state.retained.reframed(frame.clone())
    } else {
        output.samples
    };
    Ok(EpochOutcome {
        state: EpochState {
            t,
            ceiling: new_ceiling,
            transform: frame,
            retained,
        },
        stats: finish(stats, ledger),
        stop,
        best,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub func: TestFunction,
    pub noise: NoiseModel,
    pub eps: f64,
    pub config: OptimizerConfig,
    pub resolved: ResolvedParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub x_hat: Vec<f64>,
    pub f_hat: f64,
    /// `f(x_hat) - f*`, computed from the known minimum.
    pub final_subopt: f64,
    pub total_queries: u64,
    pub queries: QueryLedger,
    pub epochs_run: usize,
    pub stop_reason: StopReason,
    pub truncated: bool,
    pub trace: Vec<EpochStats>,
    pub config_echo: ConfigEcho,
    pub seed: u64,
    pub wall_ms: f64,
}

const EXTRACT_STREAM: u64 = u64::MAX >> 20;

/// Minimizes `func` under `noise` to accuracy `eps`.
pub fn optimize(
    func: &TestFunction,
    noise: &NoiseModel,
    eps: f64,
    cfg: &OptimizerConfig,
) -> Result<RunResult> {
    let started = Instant::now();
    let params = ResolvedParams::resolve(func, noise, eps, cfg)?;
    let oracle = NoisyOracle::new(func.clone(), *noise);
    let adaptive = params.adaptive(noise.scale())?;
    let walk = params.walk_config(cfg);
    let d = func.dim + 1;
    let mut ledger = QueryLedger::new();

    // Unit variance per coordinate for the cube.
    let frame0 = AffineMap::scaling(d, 3f64.sqrt() / func.halfwidth)?;
    let body0 = EpigraphBody::for_function(func, params.initial_ceiling);
    let warm = warm_start(
        &EpigraphMembership {
            oracle: &oracle,
            body: body0,
            frame: &frame0,
            adaptive,
            phase: Phase::Warmstart,
        },
        &walk,
        params.samples_per_epoch,
        cfg.burn_in_factor,
        0,
        Some(cfg.query_budget),
    )?;
    ledger.merge(&warm.ledger);

    let mut state = EpochState {
        t: 0,
        ceiling: params.initial_ceiling,
        transform: frame0,
        retained: warm.samples,
    };
    let mut trace = Vec::new();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut stop = if warm.exhausted {
        Some(StopReason::BudgetExhausted)
    } else {
        None
    };

    if stop.is_none() {
        // Accuracy may already hold for the initial body.
        let pts = state.retained.original_points();
        let values = estimate_values(
            &oracle,
            &pts,
            params.extract_m,
            Phase::CutEstimate,
            cfg.seed,
            5,
            &mut ledger,
        )?;
        if let Some(i) = argmin(&values) {
            best = Some((pts[i].as_slice()[..func.dim].to_vec(), values[i]));
            if state.ceiling - values[i] <= eps {
                stop = Some(StopReason::Converged);
            }
        }
    }

    let ctx = EpochContext {
        oracle: &oracle,
        params: &params,
        walk,
        adaptive,
        eps,
        query_budget: cfg.query_budget,
    };
    while stop.is_none() {
        if state.t >= params.max_epochs {
            stop = Some(StopReason::EpochLimit);
            break;
        }
        if ledger.total() >= cfg.query_budget {
            stop = Some(StopReason::BudgetExhausted);
            break;
        }
        let outcome = run_epoch(&state, &ctx, &mut ledger)?;
        state = outcome.state;
        trace.push(outcome.stats);
        if outcome.best.is_some() {
            best = outcome.best;
        }
        stop = outcome.stop;
    }
    let stop = stop.expect("loop exits with a reason");
    let truncated = stop == StopReason::BudgetExhausted || ledger.total() > cfg.query_budget;

    let (x_hat, f_hat) = if truncated {
        best.unwrap_or_else(|| lowest_point(&state, func))
    } else {
        let pts = state.retained.original_points();
        let values = estimate_values(
            &oracle,
            &pts,
            params.extract_m,
            Phase::FinalExtract,
            cfg.seed,
            EXTRACT_STREAM,
            &mut ledger,
        )?;
        match argmin(&values) {
            Some(i) => (pts[i].as_slice()[..func.dim].to_vec(), values[i]),
            None => lowest_point(&state, func),
        }
    };

    Ok(RunResult {
        final_subopt: func.evaluate(&x_hat) - func.known_min(),
        x_hat,
        f_hat,
        total_queries: ledger.total(),
        queries: ledger,
        epochs_run: trace.len(),
        stop_reason: stop,
        truncated,
        trace,
        config_echo: ConfigEcho {
            func: func.clone(),
            noise: *noise,
            eps,
            config: cfg.clone(),
            resolved: params,
        },
        seed: cfg.seed,
        wall_ms: started.elapsed().as_secs_f64() * 1e3,
    })
}

/// Query-free fallback: the retained point of smallest height, or the
/// domain center when nothing was retained.
fn lowest_point(state: &EpochState, func: &TestFunction) -> (Vec<f64>, f64) {
    state
        .retained
        .original_points()
        .iter()
        .map(LiftedPoint::from_vector)
        .min_by(|a, b| a.y.total_cmp(&b.y))
        .map(|p| (p.x, p.y))
        .unwrap_or_else(|| (vec![0.0; func.dim], state.ceiling))
}
