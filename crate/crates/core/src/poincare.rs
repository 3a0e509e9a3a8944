//! The bilinear lift to `M2 x R` and its projectivization.
//!
//! Adding a constant state `gamma` that multiplies the control turns the affine control flow
//! into a linear one: `(y, gamma) -> (T(t) y + gamma phi(t, 0, u), gamma)`. The affine flow sits
//! on the slice `gamma = 1` and the homogeneous flow on `gamma = 0` (the equator after
//! projectivization); bounded sets are exactly those staying away from the equator.

use rayon::prelude::*;
use serde::Serialize;

use crate::chain::Chain;
use crate::control::ControlSignal;
use crate::error::{Error, Result};
use crate::hyperbolic::EntireSolver;
use crate::integrator::solve_unconstrained;
use crate::state::M2State;
use crate::system::DelaySystem;

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedState {
    pub y: M2State,
    pub gamma: f64,
}

impl LiftedState {
    pub fn new(y: M2State, gamma: f64) -> Self {
        Self { y, gamma }
    }

    pub fn norm(&self) -> f64 {
        (self.y.norm_sq() + self.gamma * self.gamma).sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { y: self.y.scaled(c), gamma: c * self.gamma }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self { y: self.y.sub(&other.y), gamma: self.gamma - other.gamma }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self { y: self.y.add(&other.y), gamma: self.gamma + other.gamma }
    }

    /// First coordinate that is not exactly zero, in the order head, segment samples, gamma.
    fn leading(&self) -> Option<f64> {
        self.y
            .head()
            .iter()
            .chain(self.y.samples_flat())
            .chain(std::iter::once(&self.gamma))
            .copied()
            .find(|&v| v != 0.0)
    }
}

/// `(T(t) y + gamma phi(t, 0, u), gamma)`; `gamma` is copied, never integrated.
pub fn lifted_flow(sys: &DelaySystem, s: &LiftedState, u: &ControlSignal, t: f64) -> Result<LiftedState> {
    if t < 0.0 {
        return Err(Error::InvalidArgument("flow time must be nonnegative".into()));
    }
    if t == 0.0 {
        return Ok(s.clone());
    }
    let y = solve_unconstrained(sys, &s.y, &u.scaled(s.gamma), t, sys.default_step())?.final_state();
    Ok(LiftedState { y, gamma: s.gamma })
}

/// Unit representative of a line through the origin of `M2 x R`, sign fixed by the first
/// nonzero coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectivePoint {
    rep: LiftedState,
}

#[derive(Debug, Clone, Serialize)]
pub struct RepresentativeJson {
    pub head: Vec<f64>,
    pub segment: Vec<Vec<f64>>,
    pub gamma: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectiveJson {
    pub representative: RepresentativeJson,
    pub equator_distance: f64,
}

impl ProjectivePoint {
    pub fn new(s: &LiftedState) -> Result<Self> {
        let norm = s.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::InvalidArgument("the zero vector has no projective point".into()));
        }
        let mut rep = s.scaled(1.0 / norm);
        if rep.leading().is_some_and(|v| v < 0.0) {
            rep = rep.scaled(-1.0);
        }
        Ok(Self { rep })
    }

    pub fn representative(&self) -> &LiftedState {
        &self.rep
    }

    pub fn to_json(&self) -> ProjectiveJson {
        ProjectiveJson {
            representative: RepresentativeJson {
                head: self.rep.y.head().to_vec(),
                segment: self.rep.y.segment(),
                gamma: self.rep.gamma,
            },
            equator_distance: equator_distance(self),
        }
    }
}

/// `min(|a - b|, |a + b|)` over the unit representatives.
pub fn projective_distance(a: &ProjectivePoint, b: &ProjectivePoint) -> Result<f64> {
    a.rep.y.check_grid(&b.rep.y)?;
    let minus = a.rep.sub(&b.rep).norm();
    let plus = a.rep.add(&b.rep).norm();
    Ok(minus.min(plus))
}

/// `h1(u, y) = (u, P(y, 1))`.
pub fn embed_h1(u: &ControlSignal, y: &M2State) -> (ControlSignal, ProjectivePoint) {
    let p = ProjectivePoint::new(&LiftedState::new(y.clone(), 1.0)).expect("gamma = 1 is nonzero");
    (u.clone(), p)
}

/// `y` from a point off the equator.
pub fn inverse_h1(p: &ProjectivePoint) -> Result<M2State> {
    if p.rep.gamma == 0.0 {
        return Err(Error::InvalidArgument("points on the equator have no preimage".into()));
    }
    Ok(p.rep.y.scaled(1.0 / p.rep.gamma))
}

/// `h0(u, y) = (u, (y, 0))`.
pub fn embed_h0(u: &ControlSignal, y: &M2State) -> (ControlSignal, LiftedState) {
    (u.clone(), LiftedState::new(y.clone(), 0.0))
}

/// `|gamma|` of the unit representative: `1 / |(y, 1)|` for `P(y, 1)`.
pub fn equator_distance(p: &ProjectivePoint) -> f64 {
    p.rep.gamma.abs()
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectiveChainReport {
    pub valid: bool,
    pub bound: f64,
    pub jumps: Vec<f64>,
    pub worst_jump: f64,
}

/// Image of an `M2` chain under `h1`: projective jumps between leg ends and next nodes,
/// checked against `2 eps`.
pub fn chain_map_h1(sys: &DelaySystem, chain: &Chain) -> Result<ProjectiveChainReport> {
    if !chain.is_valid() {
        return Err(Error::InvalidChain("chain must be verified first".into()));
    }
    let mut jumps = Vec::with_capacity(chain.q());
    for j in 0..chain.q() {
        let end = solve_unconstrained(sys, &chain.nodes[j], &chain.controls[j], chain.durations[j], sys.default_step())?.final_state();
        let a = embed_h1(&chain.controls[j], &end).1;
        let b = embed_h1(&chain.controls[j], &chain.nodes[j + 1]).1;
        jumps.push(projective_distance(&a, &b)?);
    }
    let bound = 2.0 * chain.epsilon;
    let worst_jump = jumps.iter().copied().fold(0.0, f64::max);
    Ok(ProjectiveChainReport { valid: worst_jump < bound, bound, jumps, worst_jump })
}

#[derive(Debug, Clone)]
pub struct SubbundleSample {
    pub points: Vec<(ControlSignal, ProjectivePoint)>,
    pub min_equator_distance: f64,
}

/// `P(e(u, 0), 1)` over the sampled controls: the invariant line field of the lifted flow.
///
/// The sign is `+e`: `(u, (e(u, 0), 1))` is carried by the lifted flow to `(theta_t u, (e(u, t), 1))`.
pub fn hyperbolic_subbundle_sample(solver: &EntireSolver<'_>, controls: &[ControlSignal]) -> Result<SubbundleSample> {
    let points = controls
        .par_iter()
        .map(|u| {
            let e = solver.entire(u, 0.0)?;
            Ok((u.clone(), embed_h1(u, &e).1))
        })
        .collect::<Result<Vec<_>>>()?;
    let min_equator_distance = points.iter().map(|p| equator_distance(&p.1)).fold(f64::INFINITY, f64::min);
    Ok(SubbundleSample { points, min_equator_distance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{solve, solve_homogeneous};
    use crate::spectral::{compute_spectrum, hyperbolic_split};
    use crate::state::m2_distance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sys() -> DelaySystem {
        DelaySystem::scalar(&[-1.0, -0.5], &[1.0, 0.3], &[1.0], (-1.0, 1.0)).unwrap()
    }

    fn lifted_dist(a: &LiftedState, b: &LiftedState) -> f64 {
        a.sub(b).norm()
    }

    #[test]
    fn flow_slices() {
        let sys = sys();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = ControlSignal::random_bang_bang(&mut rng, sys.omega(), -1.0, 2.0, sys.default_step(), 0.4).unwrap();
        let y = M2State::random_smooth(&sys, &mut rng, 1.0);
        let h = lifted_flow(&sys, &LiftedState::new(y.clone(), 0.0), &u, 2.0).unwrap();
        let hom = solve_homogeneous(&sys, &y, 2.0, sys.default_step()).unwrap().final_state();
        assert!(m2_distance(&h.y, &hom).unwrap() < 1e-12 && h.gamma == 0.0);
        let one = lifted_flow(&sys, &LiftedState::new(y.clone(), 1.0), &u, 2.0).unwrap();
        let direct = solve(&sys, &y, &u, 2.0, sys.default_step()).unwrap().final_state();
        assert_eq!(one.y, direct);
        let two = lifted_flow(&sys, &LiftedState::new(y.clone(), 2.0), &u, 2.0).unwrap();
        let half = lifted_flow(&sys, &LiftedState::new(y.scaled(0.5), 1.0), &u, 2.0).unwrap().scaled(2.0);
        assert!(lifted_dist(&two, &half) < 1e-12);
        // superposition
        let z = M2State::random_smooth(&sys, &mut rng, 1.0);
        let a = LiftedState::new(y, 0.7);
        let b = LiftedState::new(z, -0.4);
        let sum = lifted_flow(&sys, &a.add(&b), &u, 1.5).unwrap();
        let parts = lifted_flow(&sys, &a, &u, 1.5).unwrap().add(&lifted_flow(&sys, &b, &u, 1.5).unwrap());
        assert!(lifted_dist(&sum, &parts) < 1e-9);
    }

    #[test]
    fn h1_embedding() {
        let sys = sys();
        let u = ControlSignal::zero(1, sys.default_step());
        let (_, p) = embed_h1(&u, &M2State::zero_for(&sys));
        assert_eq!(p.representative().gamma, 1.0);
        assert_eq!(equator_distance(&p), 1.0);
        let y = M2State::random_smooth(&sys, &mut ChaCha8Rng::seed_from_u64(3), 2.0);
        let back = inverse_h1(&embed_h1(&u, &y).1).unwrap();
        assert!(m2_distance(&back, &y).unwrap() < 1e-12 * (1.0 + y.norm()));
        let unit = y.scaled(1.0 / y.norm());
        assert!((equator_distance(&embed_h1(&u, &unit).1) - 0.5f64.sqrt()).abs() < 1e-12);
        let big = equator_distance(&embed_h1(&u, &unit.scaled(1e3)).1);
        assert!((big - 1e-3).abs() < 1e-9);
        let (_, z) = embed_h0(&u, &y);
        assert_eq!(z.gamma, 0.0);
    }

    #[test]
    fn metric_axioms() {
        let sys = sys();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let point = |rng: &mut ChaCha8Rng| {
            let scale = rng.gen_range(0.1..5.0);
            let y = M2State::random_smooth(&sys, rng, scale);
            ProjectivePoint::new(&LiftedState::new(y, rng.gen_range(-2.0..2.0))).unwrap()
        };
        for _ in 0..200 {
            let (a, b, c) = (point(&mut rng), point(&mut rng), point(&mut rng));
            assert!((a.representative().norm() - 1.0).abs() < 1e-12);
            let ab = projective_distance(&a, &b).unwrap();
            assert!((ab - projective_distance(&b, &a).unwrap()).abs() < 1e-15);
            assert!(ab <= projective_distance(&a, &c).unwrap() + projective_distance(&c, &b).unwrap() + 1e-12);
            let neg = ProjectivePoint { rep: a.representative().scaled(-1.0) };
            assert!(projective_distance(&a, &neg).unwrap() < 1e-15);
            assert_eq!(projective_distance(&a, &a).unwrap(), 0.0);
        }
        let e = |g: f64, r: f64| ProjectivePoint::new(&LiftedState::new(M2State::constant(&sys, &[r]), g)).unwrap();
        assert!((projective_distance(&e(1.0, 0.0), &e(0.0, 1.0)).unwrap() - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn h1_conjugates_flows() {
        let sys = sys();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = ControlSignal::random_bang_bang(&mut rng, sys.omega(), -1.0, 2.0, sys.default_step(), 0.4).unwrap();
        let y = M2State::random_smooth(&sys, &mut rng, 1.0);
        let lifted = lifted_flow(&sys, &LiftedState::new(y.clone(), 1.0), &u, 2.0).unwrap();
        let flowed = solve(&sys, &y, &u, 2.0, sys.default_step()).unwrap().final_state();
        let a = ProjectivePoint::new(&lifted).unwrap();
        assert!(projective_distance(&a, &embed_h1(&u, &flowed).1).unwrap() < 1e-8);
    }

    #[test]
    fn subbundle_invariance_and_margin() {
        let sys = DelaySystem::scalar(&[-1.0, -0.5], &[1.0, 0.0], &[1.0], (-1.0, 1.0)).unwrap();
        let split = hyperbolic_split(&sys, &compute_spectrum(&sys, -2.0, 32).unwrap()).unwrap();
        let solver = EntireSolver::new(&sys, &split, 1e-8).unwrap();
        let controls = crate::hyperbolic::control_family(&sys, &solver, 2, 1).unwrap();
        let sample = hyperbolic_subbundle_sample(&solver, &controls).unwrap();
        assert!(sample.min_equator_distance > 0.1);
        let (u, p) = &sample.points[controls.len() - 1];
        let moved = lifted_flow(&sys, p.representative(), u, 1.0).unwrap();
        let target = embed_h1(u, &solver.entire(u, 1.0).unwrap()).1;
        assert!(projective_distance(&ProjectivePoint::new(&moved).unwrap(), &target).unwrap() < 1e-6);
    }
}
