//! Benchmark fixtures: a resolved problem plus a warm-started first state.

use epiwalk::{
    warm_start, AdaptiveConfig, AffineMap, EpigraphBody, EpigraphMembership, EpochContext,
    EpochState, FunctionKind, NoiseModel, NoisyOracle, OptimizerConfig, Phase, ResolvedParams,
    Result, TestFunction, WalkConfig,
};

pub struct Fixture {
    pub oracle: NoisyOracle,
    pub params: ResolvedParams,
    pub walk: WalkConfig,
    pub adaptive: AdaptiveConfig,
    pub eps: f64,
    pub config: OptimizerConfig,
}

impl Fixture {
    pub fn new(kind: FunctionKind, dim: usize, sigma: f64, eps: f64) -> Result<Self> {
        let func = TestFunction::new(kind, dim)?;
        let noise = if sigma > 0.0 {
            NoiseModel::gaussian(sigma)?
        } else {
            NoiseModel::none()
        };
        let config = OptimizerConfig::default();
        let params = ResolvedParams::resolve(&func, &noise, eps, &config)?;
        let adaptive = params.adaptive(noise.scale())?;
        let walk = params.walk_config(&config);
        Ok(Self {
            oracle: NoisyOracle::new(func, noise),
            params,
            walk,
            adaptive,
            eps,
            config,
        })
    }

    /// Quadratic in two variables.
    pub fn quadratic(sigma: f64, eps: f64) -> Self {
        Self::new(FunctionKind::Quadratic, 2, sigma, eps).expect("valid fixture")
    }

    pub fn context(&self) -> EpochContext<'_> {
        EpochContext {
            oracle: &self.oracle,
            params: &self.params,
            walk: self.walk,
            adaptive: self.adaptive,
            eps: self.eps,
            query_budget: u64::MAX,
        }
    }

    /// The state the optimizer holds before its first epoch.
    pub fn warm_state(&self) -> Result<EpochState> {
        let func = &self.oracle.func;
        let frame = AffineMap::scaling(func.dim + 1, 3f64.sqrt() / func.halfwidth)?;
        let warm = warm_start(
            &EpigraphMembership {
                oracle: &self.oracle,
                body: EpigraphBody::for_function(func, self.params.initial_ceiling),
                frame: &frame,
                adaptive: self.adaptive,
                phase: Phase::Warmstart,
            },
            &self.walk,
            self.params.samples_per_epoch,
            self.config.burn_in_factor,
            0,
            None,
        )?;
        Ok(EpochState {
            t: 0,
            ceiling: self.params.initial_ceiling,
            transform: frame,
            retained: warm.samples,
        })
    }

    pub fn membership<'a>(&'a self, state: &'a EpochState) -> EpigraphMembership<'a> {
        EpigraphMembership {
            oracle: &self.oracle,
            body: EpigraphBody::for_function(&self.oracle.func, state.ceiling),
            frame: &state.transform,
            adaptive: self.adaptive,
            phase: Phase::Sample,
        }
    }
}
