//! Zeroth-order stochastic convex optimization by random walks on the
//! epigraph.
//!
//! The optimizer keeps a near-uniform sample of the body
//! `{(x, y) : x in [-h, h]^n, f(x) <= y <= C}`, lowers the ceiling `C` to the
//! mean sample height each epoch, rounds the body with an affine map fitted
//! on half of the surviving samples, and refreshes the sample with a Ball
//! Walk. Membership of a point in the epigraph is decided from noisy
//! function values by an adaptive doubling test.
//!
//! ```
//! use epiwalk::{optimize, FunctionKind, NoiseModel, OptimizerConfig, TestFunction};
//!
//! let f = TestFunction::new(FunctionKind::Quadratic, 2).unwrap();
//! let r = optimize(&f, &NoiseModel::none(), 0.1, &OptimizerConfig::default()).unwrap();
//! assert!(r.final_subopt <= 0.1);
//! ```

pub mod adaptive;
pub mod ballwalk;
pub mod error;
pub mod geometry;
pub mod optimizer;
pub mod oracle;
pub mod rounding;

pub use adaptive::{
    decide, default_confidence, error_bound, AdaptiveConfig, MembershipDecision, Verdict,
};
pub use ballwalk::{
    run_chains, sample_from_point, warm_start, ChainOutput, EpigraphMembership, Membership,
    SampleSet, WalkConfig, WalkStats,
};
pub use error::{Error, Result};
pub use geometry::{
    analytic_centroid_and_cut, exact_membership, vertical_gap, AffineMap, AnalyticBody,
    EpigraphBody, LiftedPoint,
};
pub use nalgebra::DVector;
pub use optimizer::{
    compute_cut_level, cut, optimize, run_epoch, EpochContext, EpochState, EpochStats,
    OptimizerConfig, ResolvedParams, RunResult, StopReason,
};
pub use oracle::{
    builtin_suite, FunctionKind, NoiseKind, NoiseModel, NoisyOracle, Phase, QueryLedger,
    TestFunction,
};
pub use rounding::{
    default_sample_count, fit_transform, isotropy_report, IsotropyReport, DEFAULT_ALPHA,
    MIN_SAMPLE_COUNT,
};
