use epiwalk::optimizer::max_epochs;
use epiwalk::{
    builtin_suite, optimize, FunctionKind, NoiseModel, OptimizerConfig, Phase, StopReason,
    TestFunction,
};

fn cfg(seed: u64) -> OptimizerConfig {
    OptimizerConfig {
        seed,
        ..OptimizerConfig::default()
    }
}

#[test]
fn noiseless_suite_converges() {
    for dim in [1, 2] {
        for f in builtin_suite(dim).unwrap() {
            let eps = 0.01;
            let r = optimize(&f, &NoiseModel::none(), eps, &cfg(1)).unwrap();
            assert!(!r.truncated, "{} n={dim}", f.name());
            assert!(
                r.final_subopt <= eps,
                "{} n={dim}: {}",
                f.name(),
                r.final_subopt
            );
            assert!(f.in_domain(&r.x_hat));
            assert_eq!(r.f_hat, f.evaluate(&r.x_hat));
            assert!(r.epochs_run <= max_epochs(dim, eps));
        }
    }
}

#[test]
fn ceilings_fall_and_cuts_stay_below_them() {
    let f = TestFunction::new(FunctionKind::Quadratic, 2).unwrap();
    let r = optimize(&f, &NoiseModel::none(), 0.001, &cfg(4)).unwrap();
    assert_eq!(r.stop_reason, StopReason::Converged);
    for s in &r.trace {
        assert!(s.cut_level < s.ceiling);
        assert!(s.survivors_after_cut <= s.retained_before_cut);
    }
    for w in r.trace.windows(2) {
        assert!(w[1].ceiling <= w[0].cut_level + 1e-12);
        assert!(w[1].queries_cum > w[0].queries_cum);
    }
    assert_eq!(
        r.trace.last().unwrap().queries_cum + r.queries.phase(Phase::FinalExtract),
        r.total_queries
    );
}

// In one dimension the body under ceiling C has volume c C^p with p = 2 for
// |x| and p = 3/2 for x^2, so the volume ratio of a cut follows from heights.
fn volume_ratios(kind: FunctionKind, power: f64) -> Vec<f64> {
    let f = TestFunction::new(kind, 1).unwrap();
    let mut ratios = Vec::new();
    for seed in 0..5 {
        let r = optimize(&f, &NoiseModel::none(), 1e-4, &cfg(seed)).unwrap();
        let cut_epochs: Vec<_> = r.trace.iter().filter(|s| !s.rewarm).collect();
        ratios.extend(
            cut_epochs
                .iter()
                .map(|s| (s.cut_level / s.ceiling).powf(power)),
        );
    }
    ratios
}

#[test]
fn cuts_remove_a_constant_fraction_of_volume() {
    for (kind, power) in [(FunctionKind::AbsSum, 2.0), (FunctionKind::Quadratic, 1.5)] {
        let ratios = volume_ratios(kind.clone(), power);
        assert!(ratios.len() >= 20);
        let inside = ratios
            .iter()
            .filter(|&&q| (1.0 / 3.0..=0.75).contains(&q))
            .count();
        assert!(
            inside as f64 >= 0.9 * ratios.len() as f64,
            "{kind:?}: {inside}/{} in [1/3, 3/4]: {ratios:?}",
            ratios.len()
        );
    }
}

#[test]
fn noisy_run_converges_and_charges_every_phase() {
    let f = TestFunction::new(FunctionKind::AbsSum, 2).unwrap();
    let noise = NoiseModel::gaussian(0.1).unwrap();
    let r = optimize(&f, &noise, 0.1, &cfg(9)).unwrap();
    assert!(!r.truncated);
    assert!(r.final_subopt <= 0.1, "{}", r.final_subopt);
    for phase in [Phase::Warmstart, Phase::Sample, Phase::FinalExtract] {
        assert!(r.queries.phase(phase) > 0, "{phase}");
    }
    let summed: u64 = [
        Phase::Warmstart,
        Phase::Sample,
        Phase::CutEstimate,
        Phase::FinalExtract,
    ]
    .iter()
    .map(|&p| r.queries.phase(p))
    .sum();
    assert_eq!(summed, r.total_queries);
}

#[test]
fn bounded_uniform_noise_is_supported() {
    let f = TestFunction::new(FunctionKind::ShiftedQuadratic { shift: 0.25 }, 2).unwrap();
    let noise = NoiseModel::uniform_bounded(0.05).unwrap();
    let r = optimize(&f, &noise, 0.05, &cfg(2)).unwrap();
    assert!(!r.truncated);
    assert!(r.final_subopt <= 0.05, "{}", r.final_subopt);
}

#[test]
fn runs_are_reproducible() {
    let f = TestFunction::new(FunctionKind::MaxCoordinate, 2).unwrap();
    let noise = NoiseModel::gaussian(0.05).unwrap();
    let a = optimize(&f, &noise, 0.1, &cfg(5)).unwrap();
    let b = optimize(&f, &noise, 0.1, &cfg(5)).unwrap();
    let seq = optimize(
        &f,
        &noise,
        0.1,
        &OptimizerConfig {
            parallel: false,
            ..cfg(5)
        },
    )
    .unwrap();
    for other in [&b, &seq] {
        assert_eq!(a.x_hat, other.x_hat);
        assert_eq!(a.queries, other.queries);
        assert_eq!(a.trace.len(), other.trace.len());
        for (s, t) in a.trace.iter().zip(&other.trace) {
            assert_eq!(s.cut_level, t.cut_level);
            assert_eq!(s.theta_hat, t.theta_hat);
        }
    }
    let c = optimize(&f, &noise, 0.1, &cfg(6)).unwrap();
    assert_ne!(a.x_hat, c.x_hat);
}
