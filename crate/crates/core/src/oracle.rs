//! Noisy zeroth-order access to a convex test function.
//!
//! The optimizer never sees `f` directly. Every value it uses comes from
//! [`NoisyOracle::query`], which averages `m` noisy evaluations and charges
//! them to a [`QueryLedger`]. Chains own their ledgers and merge them at
//! synchronization points, so the totals do not depend on scheduling.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Half-width of the default domain cube `[-1/2, 1/2]^n`.
pub const DEFAULT_HALFWIDTH: f64 = 0.5;

const DOMAIN_SLACK: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionKind {
    /// `sum |x_i|`
    AbsSum,
    /// `sum x_i^2`
    Quadratic,
    /// `max_i x_i`
    MaxCoordinate,
    /// `sum (x_i - shift)^2`
    ShiftedQuadratic { shift: f64 },
}

/// A convex function on the cube `[-h, h]^n` with a known minimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub kind: FunctionKind,
    pub dim: usize,
    pub halfwidth: f64,
}

impl TestFunction {
    pub fn new(kind: FunctionKind, dim: usize) -> Result<Self> {
        Self::with_halfwidth(kind, dim, DEFAULT_HALFWIDTH)
    }

    pub fn with_halfwidth(kind: FunctionKind, dim: usize, halfwidth: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be positive"));
        }
        if !(halfwidth.is_finite() && halfwidth > 0.0) {
            return Err(invalid("halfwidth", format!("{halfwidth} is not positive")));
        }
        if let FunctionKind::ShiftedQuadratic { shift } = kind {
            if !(shift.is_finite() && shift.abs() <= halfwidth) {
                return Err(invalid(
                    "shift",
                    format!("{shift} must lie in [-{halfwidth}, {halfwidth}]"),
                ));
            }
        }
        Ok(Self {
            kind,
            dim,
            halfwidth,
        })
    }

    /// Looks a function up by its CLI name. `shift` only matters for
    /// `shifted-quadratic`.
    pub fn by_name(name: &str, dim: usize, shift: f64) -> Result<Self> {
        let kind = match name {
            "abs-sum" => FunctionKind::AbsSum,
            "quadratic" => FunctionKind::Quadratic,
            "max-coord" => FunctionKind::MaxCoordinate,
            "shifted-quadratic" => FunctionKind::ShiftedQuadratic { shift },
            other => return Err(Error::UnknownFunction(other.to_string())),
        };
        Self::new(kind, dim)
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            FunctionKind::AbsSum => "abs-sum",
            FunctionKind::Quadratic => "quadratic",
            FunctionKind::MaxCoordinate => "max-coord",
            FunctionKind::ShiftedQuadratic { .. } => "shifted-quadratic",
        }
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.dim);
        match self.kind {
            FunctionKind::AbsSum => x.iter().map(|v| v.abs()).sum(),
            FunctionKind::Quadratic => x.iter().map(|v| v * v).sum(),
            FunctionKind::MaxCoordinate => x.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            FunctionKind::ShiftedQuadratic { shift } => {
                x.iter().map(|v| (v - shift) * (v - shift)).sum()
            }
        }
    }

    pub fn known_min(&self) -> f64 {
        match self.kind {
            FunctionKind::MaxCoordinate => -self.halfwidth,
            _ => 0.0,
        }
    }

    pub fn known_argmin(&self) -> Vec<f64> {
        let v = match self.kind {
            FunctionKind::AbsSum | FunctionKind::Quadratic => 0.0,
            FunctionKind::MaxCoordinate => -self.halfwidth,
            FunctionKind::ShiftedQuadratic { shift } => shift,
        };
        vec![v; self.dim]
    }

    /// Analytic maximum over the domain cube; the default initial ceiling.
    pub fn max_over_cube(&self) -> f64 {
        let n = self.dim as f64;
        let h = self.halfwidth;
        match self.kind {
            FunctionKind::AbsSum => n * h,
            FunctionKind::Quadratic => n * h * h,
            FunctionKind::MaxCoordinate => h,
            FunctionKind::ShiftedQuadratic { shift } => n * (h + shift.abs()).powi(2),
        }
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        x.len() == self.dim && x.iter().all(|v| v.abs() <= self.halfwidth + DOMAIN_SLACK)
    }
}

/// The default test-function suite at dimension `dim`.
pub fn builtin_suite(dim: usize) -> Result<Vec<TestFunction>> {
    Ok(vec![
        TestFunction::new(FunctionKind::AbsSum, dim)?,
        TestFunction::new(FunctionKind::Quadratic, dim)?,
        TestFunction::new(FunctionKind::MaxCoordinate, dim)?,
        TestFunction::new(FunctionKind::ShiftedQuadratic { shift: 0.25 }, dim)?,
    ])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    None,
    Gaussian,
    UniformBounded,
}

/// Zero-mean additive noise with standard deviation `sigma`.
///
/// `UniformBounded` draws from `[-sigma*sqrt(3), sigma*sqrt(3)]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub sigma: f64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            sigma: 0.0,
        }
    }

    pub fn gaussian(sigma: f64) -> Result<Self> {
        Self::new(NoiseKind::Gaussian, sigma)
    }

    pub fn uniform_bounded(sigma: f64) -> Result<Self> {
        Self::new(NoiseKind::UniformBounded, sigma)
    }

    pub fn new(kind: NoiseKind, sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(invalid(
                "sigma",
                format!("{sigma} is not a nonnegative number"),
            ));
        }
        let sigma = if kind == NoiseKind::None { 0.0 } else { sigma };
        Ok(Self { kind, sigma })
    }

    /// Effective noise scale; zero for the noiseless model.
    pub fn scale(&self) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            _ => self.sigma,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            NoiseKind::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                self.sigma * z
            }
            NoiseKind::UniformBounded => {
                let a = self.sigma * 3f64.sqrt();
                rng.random_range(-a..=a)
            }
        }
    }

    /// Mean of `m` independent draws.
    ///
    /// For Gaussian noise the mean of `m` draws is itself `N(0, sigma^2/m)`,
    /// so one scaled draw has exactly the same law.
    pub fn sample_mean<R: Rng + ?Sized>(&self, m: u64, rng: &mut R) -> f64 {
        match self.kind {
            NoiseKind::None => 0.0,
            _ if self.sigma == 0.0 => 0.0,
            NoiseKind::Gaussian => {
                let z: f64 = StandardNormal.sample(rng);
                self.sigma * z / (m as f64).sqrt()
            }
            NoiseKind::UniformBounded => {
                let sum: f64 = (0..m).map(|_| self.sample(rng)).sum();
                sum / m as f64
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Warmstart,
    Sample,
    CutEstimate,
    FinalExtract,
}

impl Phase {
    pub const ALL: [Phase; 4] = [
        Phase::Warmstart,
        Phase::Sample,
        Phase::CutEstimate,
        Phase::FinalExtract,
    ];

    fn index(self) -> usize {
        match self {
            Phase::Warmstart => 0,
            Phase::Sample => 1,
            Phase::CutEstimate => 2,
            Phase::FinalExtract => 3,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Phase::Warmstart => "warmstart",
            Phase::Sample => "sample",
            Phase::CutEstimate => "cut_estimate",
            Phase::FinalExtract => "final_extract",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Query counters. `total()` is always the sum of the per-phase counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QueryLedger {
    per_phase: [u64; 4],
}

impl QueryLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn charge(&mut self, phase: Phase, m: u64) {
        self.per_phase[phase.index()] += m;
    }

    pub fn total(&self) -> u64 {
        self.per_phase.iter().sum()
    }

    pub fn phase(&self, phase: Phase) -> u64 {
        self.per_phase[phase.index()]
    }

    pub fn merge(&mut self, other: &QueryLedger) {
        for (a, b) in self.per_phase.iter_mut().zip(other.per_phase) {
            *a += b;
        }
    }
}

#[derive(Serialize, Deserialize)]
struct LedgerRepr {
    total_queries: u64,
    warmstart: u64,
    sample: u64,
    cut_estimate: u64,
    final_extract: u64,
}

impl Serialize for QueryLedger {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LedgerRepr {
            total_queries: self.total(),
            warmstart: self.phase(Phase::Warmstart),
            sample: self.phase(Phase::Sample),
            cut_estimate: self.phase(Phase::CutEstimate),
            final_extract: self.phase(Phase::FinalExtract),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for QueryLedger {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = LedgerRepr::deserialize(d)?;
        let ledger = QueryLedger {
            per_phase: [r.warmstart, r.sample, r.cut_estimate, r.final_extract],
        };
        if ledger.total() != r.total_queries {
            return Err(serde::de::Error::custom(
                "total_queries does not match the per-phase counters",
            ));
        }
        Ok(ledger)
    }
}

/// `O_m ∘ f`: the function behind an additive noise model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisyOracle {
    pub func: TestFunction,
    pub noise: NoiseModel,
}

impl NoisyOracle {
    pub fn new(func: TestFunction, noise: NoiseModel) -> Self {
        Self { func, noise }
    }

    pub fn sigma(&self) -> f64 {
        self.noise.scale()
    }

    pub fn dim(&self) -> usize {
        self.func.dim
    }

    /// Average of `m` noisy evaluations at `x`, charged to `ledger` under `phase`.
    pub fn query<R: Rng + ?Sized>(
        &self,
        x: &[f64],
        m: u64,
        phase: Phase,
        ledger: &mut QueryLedger,
        rng: &mut R,
    ) -> Result<f64> {
        if m == 0 {
            return Err(invalid("m", "must be at least 1"));
        }
        if !self.func.in_domain(x) {
            return Err(Error::DomainViolation {
                point: x.to_vec(),
                halfwidth: self.func.halfwidth,
            });
        }
        ledger.charge(phase, m);
        Ok(self.func.evaluate(x) + self.noise.sample_mean(m, rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn quad1() -> TestFunction {
        TestFunction::new(FunctionKind::Quadratic, 1).unwrap()
    }

    #[test]
    fn noiseless_query_is_exact() {
        let oracle = NoisyOracle::new(quad1(), NoiseModel::none());
        let mut ledger = QueryLedger::new();
        for m in [1, 7, 1 << 20] {
            let v = oracle
                .query(&[0.3], m, Phase::Sample, &mut ledger, &mut rng(1))
                .unwrap();
            assert_eq!(v, 0.09);
        }
    }

    #[test]
    fn ledger_counts_every_query() {
        let oracle = NoisyOracle::new(quad1(), NoiseModel::gaussian(1.0).unwrap());
        let mut ledger = QueryLedger::new();
        oracle
            .query(&[0.1], 16, Phase::CutEstimate, &mut ledger, &mut rng(2))
            .unwrap();
        assert_eq!(ledger.total(), 16);
        assert_eq!(ledger.phase(Phase::CutEstimate), 16);
        oracle
            .query(&[0.1], 3, Phase::Sample, &mut ledger, &mut rng(2))
            .unwrap();
        assert_eq!(ledger.total(), 19);
    }

    #[test]
    fn outside_domain_is_rejected_and_not_charged() {
        let oracle = NoisyOracle::new(quad1(), NoiseModel::none());
        let mut ledger = QueryLedger::new();
        let err = oracle
            .query(&[0.6], 1, Phase::Sample, &mut ledger, &mut rng(3))
            .unwrap_err();
        assert!(matches!(err, Error::DomainViolation { .. }));
        assert_eq!(ledger.total(), 0);
    }

    #[test]
    fn large_m_average_concentrates() {
        // sigma/sqrt(m) = 1e-3, so 0.004 is four standard deviations.
        let oracle = NoisyOracle::new(quad1(), NoiseModel::gaussian(1.0).unwrap());
        let mut ledger = QueryLedger::new();
        let mut r = rng(4);
        let mut misses = 0;
        for _ in 0..2000 {
            let v = oracle
                .query(&[0.3], 1_000_000, Phase::Sample, &mut ledger, &mut r)
                .unwrap();
            if (v - 0.09).abs() > 0.004 {
                misses += 1;
            }
        }
        assert!(misses <= 2, "{misses} of 2000 outside the band");
    }

    #[test]
    fn noise_means_are_zero() {
        for model in [
            NoiseModel::gaussian(0.7).unwrap(),
            NoiseModel::uniform_bounded(0.7).unwrap(),
        ] {
            let mut r = rng(5);
            let n = 1_000_000;
            let mean: f64 = (0..n).map(|_| model.sample(&mut r)).sum::<f64>() / n as f64;
            assert!(mean.abs() <= 4.0 * 0.7 / 1e3, "{model:?}: mean {mean}");
        }
    }

    #[test]
    fn noise_variance_matches_sigma() {
        for model in [
            NoiseModel::gaussian(0.5).unwrap(),
            NoiseModel::uniform_bounded(0.5).unwrap(),
        ] {
            let mut r = rng(6);
            let draws: Vec<f64> = (0..100_000).map(|_| model.sample(&mut r)).collect();
            let mean = draws.iter().sum::<f64>() / draws.len() as f64;
            let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / draws.len() as f64;
            assert!((var / 0.25 - 1.0).abs() < 0.1, "{model:?}: var {var}");
        }
    }

    #[test]
    fn uniform_noise_is_bounded() {
        let model = NoiseModel::uniform_bounded(1.0).unwrap();
        let mut r = rng(7);
        let a = 3f64.sqrt();
        assert!((0..10_000).all(|_| model.sample(&mut r).abs() <= a));
    }

    #[test]
    fn draws_reproduce_from_seed() {
        let model = NoiseModel::gaussian(1.0).unwrap();
        let a: Vec<f64> = {
            let mut r = rng(8);
            (0..10).map(|_| model.sample(&mut r)).collect()
        };
        let b: Vec<f64> = {
            let mut r = rng(8);
            (0..10).map(|_| model.sample(&mut r)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn suite_values() {
        let q2 = TestFunction::new(FunctionKind::Quadratic, 2).unwrap();
        assert_eq!(q2.max_over_cube(), 0.5);

        let a3 = TestFunction::new(FunctionKind::AbsSum, 3).unwrap();
        assert_eq!(a3.known_min(), 0.0);
        assert_eq!(a3.known_argmin(), vec![0.0; 3]);

        let m2 = TestFunction::new(FunctionKind::MaxCoordinate, 2).unwrap();
        assert_eq!(m2.known_min(), -0.5);
        assert_eq!(m2.evaluate(&m2.known_argmin()), -0.5);

        let s = TestFunction::new(FunctionKind::ShiftedQuadratic { shift: -0.2 }, 2).unwrap();
        assert_eq!(s.max_over_cube(), 2.0 * 0.7 * 0.7);
        assert!(s.evaluate(&s.known_argmin()).abs() < 1e-12);
    }

    #[test]
    fn suite_invariants_hold() {
        let mut r = rng(9);
        for dim in 1..=4 {
            for f in builtin_suite(dim).unwrap() {
                assert!((f.evaluate(&f.known_argmin()) - f.known_min()).abs() <= 1e-12);
                // The maximum is attained at a corner; check all corners.
                let corner_max = (0..1u32 << dim)
                    .map(|bits| {
                        let x: Vec<f64> = (0..dim)
                            .map(|i| {
                                if bits >> i & 1 == 1 {
                                    f.halfwidth
                                } else {
                                    -f.halfwidth
                                }
                            })
                            .collect();
                        f.evaluate(&x)
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!(
                    (corner_max - f.max_over_cube()).abs() < 1e-12,
                    "{}",
                    f.name()
                );
                for _ in 0..500 {
                    let x: Vec<f64> = (0..dim).map(|_| r.random_range(-0.5..=0.5)).collect();
                    let z: Vec<f64> = (0..dim).map(|_| r.random_range(-0.5..=0.5)).collect();
                    let lam: f64 = r.random();
                    let mid: Vec<f64> = x
                        .iter()
                        .zip(&z)
                        .map(|(a, b)| lam * a + (1.0 - lam) * b)
                        .collect();
                    let lhs = f.evaluate(&mid);
                    let rhs = lam * f.evaluate(&x) + (1.0 - lam) * f.evaluate(&z);
                    assert!(lhs <= rhs + 1e-12, "{} not convex", f.name());
                    assert!(f.evaluate(&x) <= f.max_over_cube() + 1e-12);
                    assert!(f.evaluate(&x) >= f.known_min() - 1e-12);
                }
            }
        }
    }

    #[test]
    fn names_round_trip() {
        for f in builtin_suite(3).unwrap() {
            let g = TestFunction::by_name(f.name(), 3, 0.25).unwrap();
            assert_eq!(f, g);
        }
        assert!(matches!(
            TestFunction::by_name("rosenbrock", 2, 0.0),
            Err(Error::UnknownFunction(_))
        ));
    }

    #[test]
    fn bad_parameters_are_rejected() {
        assert!(TestFunction::new(FunctionKind::Quadratic, 0).is_err());
        assert!(TestFunction::new(FunctionKind::ShiftedQuadratic { shift: 0.9 }, 2).is_err());
        assert!(NoiseModel::gaussian(-1.0).is_err());
    }
}
