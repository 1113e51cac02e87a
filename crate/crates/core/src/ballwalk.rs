//! Ball Walk over a convex body seen only through a membership test.
//!
//! A step proposes a uniform point in the ball of radius `r` around the
//! current state and moves there only if the membership test accepts it.
//! Chains are independent: each owns a seed-derived RNG stream and a private
//! query ledger, so running them on a thread pool gives exactly the same
//! samples as running them one after another.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive::{decide, AdaptiveConfig, Verdict};
use crate::error::{invalid, Error, Result};
use crate::geometry::{AffineMap, AnalyticBody, EpigraphBody, LiftedPoint};
use crate::oracle::{NoisyOracle, Phase, QueryLedger};

pub type ChainRng = ChaCha8Rng;

/// Chain index reserved for queries made outside the walk chains.
pub const SERVICE_STREAM: usize = 0xFFFF;

/// RNG for chain `chain` of the run-level stream `stream`.
pub fn chain_rng(seed: u64, stream: u64, chain: usize) -> ChainRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream.wrapping_mul(1 << 16).wrapping_add(chain as u64));
    rng
}

/// A membership decision procedure in walk coordinates.
pub trait Membership: Sync {
    fn ambient_dim(&self) -> usize;

    fn check(
        &self,
        z: &DVector<f64>,
        rng: &mut ChainRng,
        ledger: &mut QueryLedger,
    ) -> Result<Verdict>;
}

impl Membership for AnalyticBody {
    fn ambient_dim(&self) -> usize {
        AnalyticBody::ambient_dim(self)
    }

    fn check(&self, z: &DVector<f64>, _: &mut ChainRng, _: &mut QueryLedger) -> Result<Verdict> {
        Ok(if self.contains(z.as_slice()) {
            Verdict::Inside
        } else {
            Verdict::Outside
        })
    }
}

/// Membership in `frame(K_t)`: points are mapped back to original
/// coordinates, then checked against the cube, the ceiling, and finally the
/// graph with the adaptive noisy test.
pub struct EpigraphMembership<'a> {
    pub oracle: &'a NoisyOracle,
    pub body: EpigraphBody,
    pub frame: &'a AffineMap,
    pub adaptive: AdaptiveConfig,
    pub phase: Phase,
}

impl Membership for EpigraphMembership<'_> {
    fn ambient_dim(&self) -> usize {
        self.body.dim + 1
    }

    fn check(
        &self,
        z: &DVector<f64>,
        rng: &mut ChainRng,
        ledger: &mut QueryLedger,
    ) -> Result<Verdict> {
        let p = LiftedPoint::from_vector(&self.frame.unapply(z));
        if !self.body.in_cube(&p.x) || !self.body.below_ceiling(p.y) {
            return Ok(Verdict::Outside);
        }
        let d = decide(&p, &self.adaptive, self.oracle, self.phase, ledger, rng)?;
        Ok(d.verdict)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub step_radius: f64,
    pub steps_per_sample: usize,
    pub n_chains: usize,
    pub seed: u64,
    /// Run chains on the rayon pool. Output does not depend on this.
    pub parallel: bool,
}

impl WalkConfig {
    /// Defaults for a near-isotropic body in `R^d`: `r = 1/sqrt(d)` and
    /// `2 d^2` steps between retained points, three chains.
    pub fn for_dimension(ambient_dim: usize, seed: u64) -> Self {
        let d = ambient_dim as f64;
        Self {
            step_radius: 1.0 / d.sqrt(),
            steps_per_sample: default_steps_per_sample(ambient_dim),
            n_chains: 3,
            seed,
            parallel: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_radius.is_finite() && self.step_radius > 0.0) {
            return Err(invalid(
                "step_radius",
                format!("{} is not positive", self.step_radius),
            ));
        }
        if self.n_chains == 0 {
            return Err(invalid("n_chains", "must be at least 1"));
        }
        Ok(())
    }
}

/// `2 d^2` steps between retained points of one chain.
pub fn default_steps_per_sample(ambient_dim: usize) -> usize {
    2 * ambient_dim * ambient_dim
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalkStats {
    pub proposals: u64,
    pub accepted: u64,
    pub give_ups: u64,
}

impl WalkStats {
    pub fn merge(&mut self, other: &WalkStats) {
        self.proposals += other.proposals;
        self.accepted += other.accepted;
        self.give_ups += other.give_ups;
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposals as f64
        }
    }
}

/// Points in walk coordinates together with the frame they live in.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub points: Vec<DVector<f64>>,
    pub frame: AffineMap,
    /// Accepted `GaveUpInside` moves that produced these points.
    pub give_up_count: u64,
}

impl SampleSet {
    pub fn new(points: Vec<DVector<f64>>, frame: AffineMap) -> Self {
        Self {
            points,
            frame,
            give_up_count: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The points mapped back to original coordinates.
    pub fn original_points(&self) -> Vec<DVector<f64>> {
        self.points.iter().map(|z| self.frame.unapply(z)).collect()
    }

    /// Re-expresses the points in another frame (both frames map from the
    /// same original coordinates).
    pub fn reframed(&self, frame: AffineMap) -> SampleSet {
        let points = self
            .points
            .iter()
            .map(|z| frame.apply(&self.frame.unapply(z)))
            .collect();
        SampleSet {
            points,
            frame,
            give_up_count: self.give_up_count,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ChainOutput {
    pub samples: SampleSet,
    pub ledger: QueryLedger,
    pub stats: WalkStats,
    /// A chain ran out of its share of the query budget.
    pub exhausted: bool,
}

/// Uniform proposal in the ball of radius `r` around `current`.
pub fn propose<R: Rng + ?Sized>(current: &DVector<f64>, r: f64, rng: &mut R) -> DVector<f64> {
    let d = current.len();
    let dir = loop {
        let g = DVector::<f64>::from_fn(d, |_, _| rng.sample(StandardNormal));
        let norm = g.norm();
        if norm > 0.0 {
            break g / norm;
        }
    };
    let u: f64 = rng.random();
    current + dir * (r * u.powf(1.0 / d as f64))
}

/// One lazy Ball Walk step. Returns the proposal if accepted, else `current`.
pub fn step<M: Membership + ?Sized>(
    current: &DVector<f64>,
    cfg: &WalkConfig,
    membership: &M,
    rng: &mut ChainRng,
    ledger: &mut QueryLedger,
    stats: &mut WalkStats,
) -> Result<DVector<f64>> {
    let q = propose(current, cfg.step_radius, rng);
    stats.proposals += 1;
    let verdict = membership.check(&q, rng, ledger)?;
    if verdict.accepts() {
        stats.accepted += 1;
        if verdict == Verdict::GaveUpInside {
            stats.give_ups += 1;
        }
        Ok(q)
    } else {
        Ok(current.clone())
    }
}

struct ChainRun {
    emitted: Vec<(usize, DVector<f64>)>,
    ledger: QueryLedger,
    stats: WalkStats,
    exhausted: bool,
}

/// Advances the seeds into `target` samples.
///
/// Output `j` continues the walker in seed slot `j mod |seeds|`, and slot `s`
/// belongs to chain `s mod n_chains`. Each chain moves `steps_per_sample`
/// steps between retained points. With `steps_per_sample = 0` and
/// `target = |seeds|` the seeds come back unchanged.
///
/// `budget` caps the queries of the whole call; each chain gets an equal
/// share and stops early once its own ledger exceeds it.
pub fn run_chains<M: Membership + ?Sized>(
    seeds: &SampleSet,
    target: usize,
    cfg: &WalkConfig,
    membership: &M,
    stream: u64,
    budget: Option<u64>,
) -> Result<ChainOutput> {
    cfg.validate()?;
    if seeds.is_empty() {
        return Err(Error::NoSeeds);
    }
    let d = membership.ambient_dim();
    if let Some(bad) = seeds.points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: bad.len(),
        });
    }
    let slots = seeds.len();
    let chains = cfg.n_chains.min(slots);
    let allowance = budget.map(|b| b / chains as u64);

    let run_chain = |c: usize| -> Result<ChainRun> {
        let mut rng = chain_rng(cfg.seed, stream, c);
        let mut ledger = QueryLedger::new();
        let mut stats = WalkStats::default();
        let mut state: Vec<Option<DVector<f64>>> = (0..slots)
            .map(|s| (s % chains == c).then(|| seeds.points[s].clone()))
            .collect();
        let mut emitted = Vec::new();
        let mut exhausted = false;
        for j in (0..target).filter(|j| (j % slots) % chains == c) {
            if allowance.is_some_and(|a| ledger.total() >= a) {
                exhausted = true;
                break;
            }
            let slot = j % slots;
            let mut z = state[slot].take().expect("slot owned by this chain");
            for _ in 0..cfg.steps_per_sample {
                z = step(&z, cfg, membership, &mut rng, &mut ledger, &mut stats)?;
            }
            emitted.push((j, z.clone()));
            state[slot] = Some(z);
        }
        Ok(ChainRun {
            emitted,
            ledger,
            stats,
            exhausted,
        })
    };

    let runs: Vec<Result<ChainRun>> = if cfg.parallel && chains > 1 {
        (0..chains).into_par_iter().map(run_chain).collect()
    } else {
        (0..chains).map(run_chain).collect()
    };

    let mut ledger = QueryLedger::new();
    let mut stats = WalkStats::default();
    let mut exhausted = false;
    let mut indexed = Vec::with_capacity(target);
    for run in runs {
        let run = run?;
        ledger.merge(&run.ledger);
        stats.merge(&run.stats);
        exhausted |= run.exhausted;
        indexed.extend(run.emitted);
    }
    indexed.sort_by_key(|(j, _)| *j);
    let samples = SampleSet {
        points: indexed.into_iter().map(|(_, z)| z).collect(),
        frame: seeds.frame.clone(),
        give_up_count: stats.give_ups,
    };
    Ok(ChainOutput {
        samples,
        ledger,
        stats,
        exhausted,
    })
}

/// Starts `n_chains` walkers at `start`, burns each in for
/// `burn_in_factor * steps_per_sample` steps, then harvests `count` points.
#[allow(clippy::too_many_arguments)]
pub fn sample_from_point<M: Membership + ?Sized>(
    start: DVector<f64>,
    frame: AffineMap,
    count: usize,
    cfg: &WalkConfig,
    burn_in_factor: usize,
    membership: &M,
    stream: u64,
    budget: Option<u64>,
) -> Result<ChainOutput> {
    let seeds = SampleSet::new(vec![start; cfg.n_chains], frame);
    burn_in_and_harvest(
        &seeds,
        count,
        cfg,
        burn_in_factor,
        membership,
        stream,
        budget,
    )
}

/// Burns in every seed independently, then harvests `count` points from the
/// burnt-in states.
pub fn burn_in_and_harvest<M: Membership + ?Sized>(
    seeds: &SampleSet,
    count: usize,
    cfg: &WalkConfig,
    burn_in_factor: usize,
    membership: &M,
    stream: u64,
    budget: Option<u64>,
) -> Result<ChainOutput> {
    let burn_cfg = WalkConfig {
        steps_per_sample: cfg.steps_per_sample * burn_in_factor,
        ..*cfg
    };
    let burned = run_chains(seeds, seeds.len(), &burn_cfg, membership, stream, budget)?;
    if burned.exhausted || burned.samples.is_empty() {
        return Ok(burned);
    }
    let remaining = budget.map(|b| b.saturating_sub(burned.ledger.total()));
    let mut out = run_chains(
        &burned.samples,
        count,
        cfg,
        membership,
        stream.wrapping_add(1),
        remaining,
    )?;
    out.ledger.merge(&burned.ledger);
    out.stats.merge(&burned.stats);
    if out.samples.is_empty() {
        out.samples.points = burned.samples.points;
    }
    out.samples.give_up_count = out.stats.give_ups;
    Ok(out)
}

/// Warm start for an epigraph body: finds the interior point
/// `(0, (O_{max_m} ∘ f(0) + C) / 2)`, confirms it with the adaptive test,
/// and harvests `count` near-uniform points after a burn-in.
pub fn warm_start(
    membership: &EpigraphMembership<'_>,
    cfg: &WalkConfig,
    count: usize,
    burn_in_factor: usize,
    stream: u64,
    budget: Option<u64>,
) -> Result<ChainOutput> {
    let n = membership.body.dim;
    let mut rng = chain_rng(cfg.seed, stream, SERVICE_STREAM);
    let mut ledger = QueryLedger::new();
    let x0 = vec![0.0; n];
    let v = membership.oracle.query(
        &x0,
        membership.adaptive.max_m,
        Phase::Warmstart,
        &mut ledger,
        &mut rng,
    )?;
    let p0 = LiftedPoint::new(x0, 0.5 * (v + membership.body.ceiling));
    let inside = membership.body.passes_box_and_ceiling(&p0)
        && decide(
            &p0,
            &membership.adaptive,
            membership.oracle,
            Phase::Warmstart,
            &mut ledger,
            &mut rng,
        )?
        .verdict
        .accepts();
    if !inside {
        return Err(Error::NoInteriorPoint { x: p0.x, y: p0.y });
    }
    let start = membership.frame.apply(&p0.to_vector());
    let remaining = budget.map(|b| b.saturating_sub(ledger.total()));
    let mut out = sample_from_point(
        start,
        membership.frame.clone(),
        count,
        cfg,
        burn_in_factor,
        membership,
        stream.wrapping_add(1),
        remaining,
    )?;
    out.ledger.merge(&ledger);
    Ok(out)
}
