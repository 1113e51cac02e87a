//! Adaptive doubling test for "is `(x, y)` above the graph of `f`?".
//!
//! Round `k` draws a fresh average `v = O_m ∘ f(x)` with `m = 2^k` and
//! compares `y` against the interval `v ± C·sigma/sqrt(m)`. Outside the
//! interval the answer is final; inside it the test doubles `m`. At `max_m`
//! the test gives up and classifies by the sign of `y - v`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::LiftedPoint;
use crate::oracle::{NoisyOracle, Phase, QueryLedger};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveConfig {
    /// Confidence level `C`.
    pub confidence: f64,
    /// Noise scale `sigma`.
    pub sigma: f64,
    /// Vertical gap below which the test stops doubling.
    pub give_up_band: f64,
    /// Smallest power of two `>= 4 C^2 sigma^2 / band^2`; 1 when `sigma = 0`.
    pub max_m: u64,
}

impl AdaptiveConfig {
    pub fn new(confidence: f64, sigma: f64, give_up_band: f64) -> Result<Self> {
        if !(confidence.is_finite() && confidence > 0.0) {
            return Err(invalid(
                "confidence",
                format!("{confidence} is not positive"),
            ));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(invalid("sigma", format!("{sigma} is negative")));
        }
        if !(give_up_band.is_finite() && give_up_band > 0.0) {
            return Err(invalid(
                "give_up_band",
                format!("{give_up_band} is not positive"),
            ));
        }
        Ok(Self {
            confidence,
            sigma,
            give_up_band,
            max_m: max_rounds_m(confidence, sigma, give_up_band)?,
        })
    }

    /// Uses `C = default_confidence(n, ell)`.
    pub fn with_exponent(n: usize, ell: f64, sigma: f64, give_up_band: f64) -> Result<Self> {
        if !(ell.is_finite() && ell > 0.0) {
            return Err(invalid("error_exponent", format!("{ell} is not positive")));
        }
        Self::new(default_confidence(n, ell), sigma, give_up_band)
    }

    /// Half-width of the decision interval after averaging `m` queries.
    pub fn half_width(&self, m: u64) -> f64 {
        self.confidence * self.sigma / (m as f64).sqrt()
    }
}

fn max_rounds_m(confidence: f64, sigma: f64, band: f64) -> Result<u64> {
    if sigma == 0.0 {
        return Ok(1);
    }
    let need = 4.0 * confidence * confidence * sigma * sigma / (band * band);
    if !(need < (1u64 << 62) as f64) {
        return Err(invalid(
            "give_up_band",
            format!("{band} needs more than 2^62 queries per test"),
        ));
    }
    Ok((need.ceil().max(1.0) as u64).next_power_of_two())
}

/// `sqrt(2 (ell + 1) ln n)`, with `n` floored at 2.
pub fn default_confidence(n: usize, ell: f64) -> f64 {
    let n = n.max(2) as f64;
    (2.0 * (ell + 1.0) * n.ln()).sqrt()
}

/// One-sided failure bound `(log2(4 C^2 sigma^2 / delta^2) + 1) exp(-C^2 / 2)`,
/// clamped to `[0, 1]`. The log term is floored at zero since one round is
/// always spent.
pub fn error_bound(delta_abs: f64, cfg: &AdaptiveConfig) -> f64 {
    if cfg.sigma == 0.0 {
        return if delta_abs > 0.0 { 0.0 } else { 1.0 };
    }
    if !(delta_abs > 0.0) {
        return 1.0;
    }
    let c = cfg.confidence;
    let rounds = (4.0 * c * c * cfg.sigma * cfg.sigma / (delta_abs * delta_abs))
        .log2()
        .max(0.0)
        + 1.0;
    (rounds * (-c * c / 2.0).exp()).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Inside,
    Outside,
    GaveUpInside,
    GaveUpOutside,
}

impl Verdict {
    /// Whether the walk treats the point as a member.
    pub fn accepts(self) -> bool {
        matches!(self, Verdict::Inside | Verdict::GaveUpInside)
    }

    pub fn gave_up(self) -> bool {
        matches!(self, Verdict::GaveUpInside | Verdict::GaveUpOutside)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MembershipDecision {
    pub verdict: Verdict,
    /// Sum of the round sizes used; `2 * final_m - 1` with fresh draws.
    pub queries_spent: u64,
    pub final_m: u64,
    /// The last average `O_m ∘ f(x)` drawn.
    pub estimate: f64,
}

/// Runs the doubling test at `p`. The caller has already checked the cube
/// and ceiling constraints, so `p.x` lies in the domain.
pub fn decide<R: Rng + ?Sized>(
    p: &LiftedPoint,
    cfg: &AdaptiveConfig,
    oracle: &NoisyOracle,
    phase: Phase,
    ledger: &mut QueryLedger,
    rng: &mut R,
) -> Result<MembershipDecision> {
    if cfg.sigma == 0.0 {
        let v = oracle.query(&p.x, 1, phase, ledger, rng)?;
        let verdict = if p.y >= v {
            Verdict::Inside
        } else {
            Verdict::Outside
        };
        return Ok(MembershipDecision {
            verdict,
            queries_spent: 1,
            final_m: 1,
            estimate: v,
        });
    }

    let mut m = 1u64;
    let mut spent = 0u64;
    loop {
        let v = oracle.query(&p.x, m, phase, ledger, rng)?;
        spent += m;
        let w = cfg.half_width(m);
        let verdict = if p.y <= v - w {
            Some(Verdict::Outside)
        } else if p.y >= v + w {
            Some(Verdict::Inside)
        } else if m >= cfg.max_m {
            Some(if p.y >= v {
                Verdict::GaveUpInside
            } else {
                Verdict::GaveUpOutside
            })
        } else {
            None
        };
        if let Some(verdict) = verdict {
            return Ok(MembershipDecision {
                verdict,
                queries_spent: spent,
                final_m: m,
                estimate: v,
            });
        }
        m *= 2;
    }
}
