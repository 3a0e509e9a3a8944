//! End-to-end: spectrum, splitting, entire solutions, chains and the lift on one system.

use delaylab::chain::{build_chain_to_zero, lift_chain, seed_loop, verify_lifted};
use delaylab::hyperbolic::{chain_recurrent_graph_with, control_family, EntireSolver};
use delaylab::poincare::{chain_map_h1, hyperbolic_subbundle_sample};
use delaylab::spectral::{
    check_exponential_separation, check_hyperbolic, compute_spectrum, hyperbolic_split, selgrade_grouping, Verdict,
    DEFAULT_AXIS_MARGIN,
};
use delaylab::{ControlSignal, DelaySystem, M2State, MetricBasis};

#[test]
fn unstable_scalar_pipeline() {
    // x' = x - 0.1 x(t - 1) + u: one real unstable root
    let sys = DelaySystem::scalar(&[1.0, -0.1], &[1.0, 0.0], &[1.0], (-1.0, 1.0)).unwrap();
    let sp = compute_spectrum(&sys, -3.0, 48).unwrap();
    assert_eq!(check_hyperbolic(&sp, DEFAULT_AXIS_MARGIN), Verdict::Hyperbolic);
    let split = hyperbolic_split(&sys, &sp).unwrap();
    assert_eq!(split.dim_plus, 1);
    let groups = selgrade_grouping(&sys, &sp, 1e-6).unwrap();
    assert_eq!(groups.levels.len(), sp.roots.iter().filter(|r| r.mu.im >= 0.0).count());
    assert_eq!(groups.levels[0].dim(), 1);

    let sep = check_exponential_separation(&sys, &split, 4.0, 4).unwrap();
    assert!(sep.pass, "gamma {}", sep.gamma_hat);

    let solver = EntireSolver::new(&sys, &split, 1e-8).unwrap();
    let controls = control_family(&sys, &solver, 2, 3).unwrap();
    let graph = chain_recurrent_graph_with(&solver, &controls).unwrap();
    // constant c: equilibrium x = -c / 0.9
    for p in graph.iter().take(2) {
        let c = p.control.values()[0][0];
        assert!((p.state.head()[0] + c / 0.9).abs() < 1e-6);
    }
    let bundle = hyperbolic_subbundle_sample(&solver, &controls).unwrap();
    assert!(bundle.min_equator_distance > 0.1);
}

#[test]
fn stable_chain_lifts() {
    let sys = DelaySystem::scalar(&[-1.0, -0.5], &[1.0, 0.0], &[1.0], (-1.0, 1.0)).unwrap();
    let y = M2State::constant(&sys, &[-2.0 / 3.0]);
    let u = ControlSignal::constant(&[-1.0], -1.0, sys.default_step()).unwrap();
    let seed = seed_loop(&sys, &y, &u, 1.0, 0.05, 4).unwrap();
    let built = build_chain_to_zero(&sys, &y, 0.1, 1.0, &seed).unwrap();
    assert!(built.chain.is_valid());

    let proj = chain_map_h1(&sys, &built.chain).unwrap();
    assert!(proj.valid && proj.worst_jump < 2.0 * built.chain.epsilon);

    let zero = ControlSignal::zero(1, sys.default_step());
    let mut lifted = lift_chain(&sys, &built.chain, &zero, &zero).unwrap();
    let rep = verify_lifted(&sys, &mut lifted, &zero, &zero, &MetricBasis::new(1, MetricBasis::DEFAULT_TERMS)).unwrap();
    assert!(rep.valid);
}
