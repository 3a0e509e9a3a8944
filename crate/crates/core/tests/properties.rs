use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use delaylab::chain::scale_trajectory_check;
use delaylab::integrator::{affine_split, semiflow_step, solve};
use delaylab::poincare::{embed_h1, equator_distance, projective_distance};
use delaylab::state::m2_distance;
use delaylab::{ControlSignal, DelaySystem, M2State};

fn system(a0: f64, a1: f64, b0: f64, b1: f64) -> DelaySystem {
    DelaySystem::scalar(&[a0, a1], &[b0, b1], &[1.0], (-1.0, 1.0)).unwrap().with_n_seg(64).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn affine_and_cocycle(a0 in -2.0..2.0f64, a1 in -2.0..2.0f64, b1 in -1.0..1.0f64, seed in 0u64..1000, k in 1usize..8) {
        let sys = system(a0, a1, 1.0, b1);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dt = sys.default_step();
        let t = 0.25 * k as f64;
        let u = ControlSignal::random_bang_bang(&mut rng, sys.omega(), -1.0, 2.0 * t, dt, 0.3).unwrap();
        let y = M2State::random_smooth(&sys, &mut rng, 1.0);
        let (hom, forced) = affine_split(&sys, &y, &u, t).unwrap();
        let direct = solve(&sys, &y, &u, t, dt).unwrap().final_state();
        prop_assert!(m2_distance(&hom.add(&forced), &direct).unwrap() < 1e-10 * (1.0 + direct.norm()));
        let (u1, y1) = semiflow_step(&sys, &u, &y, t).unwrap();
        let (_, y2) = semiflow_step(&sys, &u1, &y1, t).unwrap();
        let (_, y3) = semiflow_step(&sys, &u, &y, 2.0 * t).unwrap();
        prop_assert!(m2_distance(&y2, &y3).unwrap() < 1e-10 * (1.0 + y3.norm()));
    }

    #[test]
    fn scaling_identity(a0 in -2.0..2.0f64, a1 in -2.0..2.0f64, alpha in 0.0..1.0f64, seed in 0u64..1000) {
        let sys = system(a0, a1, 1.0, 0.5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = ControlSignal::random_bang_bang(&mut rng, sys.omega(), -1.0, 1.5, sys.default_step(), 0.3).unwrap();
        let y = M2State::random_smooth(&sys, &mut rng, 2.0);
        prop_assert!(scale_trajectory_check(&sys, &y, &u, 1.5, alpha).unwrap() < 1e-9);
    }

    #[test]
    fn projective_distance_contracts(scale in 0.01..100.0f64, eps in 1e-4..0.5f64, seed in 0u64..1000) {
        let sys = system(-1.0, -0.5, 1.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = ControlSignal::zero(1, sys.default_step());
        let a = M2State::random_smooth(&sys, &mut rng, scale);
        let dir = M2State::random_smooth(&sys, &mut rng, 1.0);
        let b = a.add(&dir.scaled(eps / dir.norm()));
        let d = projective_distance(&embed_h1(&u, &a).1, &embed_h1(&u, &b).1).unwrap();
        prop_assert!(d <= eps * (1.0 + 1e-12));
        let e = equator_distance(&embed_h1(&u, &a).1);
        prop_assert!((e - 1.0 / (1.0 + a.norm_sq()).sqrt()).abs() < 1e-12);
    }
}

#[test]
fn zero_data_stays_zero() {
    let sys = system(0.3, -1.2, 1.0, 1.0);
    let zero = M2State::zero_for(&sys);
    let tr = solve(&sys, &zero, &ControlSignal::zero(1, sys.default_step()), 3.0, sys.default_step()).unwrap();
    assert_abs_diff_eq!(tr.sup_norm(), 0.0);
}
