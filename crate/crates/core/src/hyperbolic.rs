//! Bounded entire solutions of hyperbolic systems.
//!
//! For a hyperbolic system every control `u` has a unique bounded entire solution
//! `e(u, .) = e+(u, .) + e-(u, .)`. The stable part is the forward-integrated forcing from the
//! far past, projected onto `V-`; the unstable part is the bounded solution of the reduced
//! equation on `V+`, integrated backwards from the far future. The map
//! `H(u, y) = y - e(u, 0)` conjugates the control flow to the homogeneous one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::control::{ControlJson, ControlSignal};
use crate::error::{Error, Result};
use crate::integrator::{forcing_cells, solve_unconstrained};
use crate::spectral::{HyperbolicSplitting, C64};
use crate::state::M2State;
use crate::system::DelaySystem;

pub const DEFAULT_TOL: f64 = 1e-8;
/// Length of the restart windows used for `e-` when `V+` is nontrivial.
const RESTART_WINDOW: f64 = 1.0;

/// Horizons and tolerance for evaluating entire solutions.
#[derive(Debug, Clone)]
pub struct EntireSolver<'a> {
    sys: &'a DelaySystem,
    split: &'a HyperbolicSplitting,
    step: f64,
    pub tol: f64,
    pub t_past: f64,
    pub t_fut: f64,
}

fn round_up(t: f64, step: f64) -> f64 {
    (t / step).ceil() * step
}

fn grid_index(t: f64, step: f64) -> Result<i64> {
    let k = (t / step).round();
    if (t - k * step).abs() > 1e-9 * step.max(t.abs()) {
        return Err(Error::MisalignedStep(format!("time {t} is not a multiple of the step {step}")));
    }
    Ok(k as i64)
}

impl<'a> EntireSolver<'a> {
    /// Horizons `T = 2 (ln(1/tol) + ln K + ln G) / alpha` with `G` the largest forcing over `Omega`.
    pub fn new(sys: &'a DelaySystem, split: &'a HyperbolicSplitting, tol: f64) -> Result<Self> {
        if !(split.alpha_hat > 0.0) {
            return Err(Error::NotHyperbolic);
        }
        if !(tol > 0.0 && tol < 1.0) {
            return Err(Error::InvalidArgument(format!("tolerance must lie in (0, 1), got {tol}")));
        }
        let gain: f64 = sys.b().iter().map(|b| b.norm()).sum::<f64>()
            * sys.omega().vertices().iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).fold(0.0, f64::max);
        let t = 2.0 * ((1.0 / tol).ln() + split.k_hat.max(1.0).ln() + gain.max(1.0).ln()) / split.alpha_hat;
        let step = sys.default_step();
        let t = round_up(t.max(sys.h()), step);
        Ok(Self { sys, split, step, tol, t_past: t, t_fut: t })
    }

    pub fn with_horizons(mut self, t_past: f64, t_fut: f64) -> Self {
        self.t_past = round_up(t_past, self.step);
        self.t_fut = round_up(t_fut, self.step);
        self
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    fn check(&self, u: &ControlSignal, t: f64) -> Result<ControlSignal> {
        if u.m() != self.sys.m() {
            return Err(Error::Dimension(format!("control dimension {} vs m = {}", u.m(), self.sys.m())));
        }
        grid_index(t, self.step)?;
        let needed = t - self.t_past - self.sys.h();
        if u.t_start() > needed + 1e-9 {
            return Err(Error::InsufficientWindow(format!(
                "control starts at {} but e(u, {t}) needs it from {needed}",
                u.t_start()
            )));
        }
        u.on_grid(self.step)
    }

    /// `e-(u, t) = int_{-inf}^t T(t - s) pi- B u ds`, truncated at `t - t_past`.
    pub fn e_minus(&self, u: &ControlSignal, t: f64) -> Result<M2State> {
        let u = self.check(u, t)?;
        let window = if self.split.dim_plus == 0 { self.t_past } else { round_up(RESTART_WINDOW, self.step) };
        let mut y = M2State::zero_for(self.sys);
        let mut s = t - self.t_past;
        while s < t - 0.5 * self.step {
            let len = window.min(t - s);
            let len = (len / self.step).round() * self.step;
            let us = u.restricted(s - self.sys.h(), s + len + self.step).shift(s)?;
            y = solve_unconstrained(self.sys, &y, &us, len, self.step)?.final_state();
            if self.split.dim_plus > 0 {
                // projecting after every window keeps the unstable error from growing
                y = self.split.project_minus(&y);
            }
            s += len;
        }
        Ok(y)
    }

    /// `e+(u, t)`: bounded solution of the reduced equation `c' = mu c + w^T g(t)` on `V+`.
    pub fn e_plus(&self, u: &ControlSignal, t: f64) -> Result<M2State> {
        if self.split.dim_plus == 0 {
            return Ok(M2State::zero_for(self.sys));
        }
        let u = self.check(u, t)?;
        Ok(self.split.combine(&self.reduced_coordinates(&u, t)?))
    }

    /// Real `V+` coordinates of `e+(u, t)`; `u` already on the step grid.
    fn reduced_coordinates(&self, u: &ControlSignal, t: f64) -> Result<Vec<f64>> {
        let k0 = grid_index(t, self.step)?;
        let cells = (self.t_fut / self.step).round() as i64;
        let g = forcing_cells(self.sys, u, k0, k0 + cells, self.step)?;
        let mut out = Vec::with_capacity(self.split.dim_plus);
        for mode in &self.split.modes {
            let mu = mode.mu;
            let decay = (-mu * self.step).exp();
            let factor = (C64::new(1.0, 0.0) - decay) / mu;
            let mut c = C64::new(0.0, 0.0);
            for gk in g.iter().rev() {
                let wg: C64 = mode.w.iter().zip(gk).map(|(w, x)| w * x).sum();
                c = decay * c - wg * factor;
            }
            if mu.im == 0.0 {
                out.push(c.re);
            } else {
                out.push(2.0 * c.re);
                out.push(-2.0 * c.im);
            }
        }
        Ok(out)
    }

    /// `e(u, t) = e+(u, t) + e-(u, t)`.
    pub fn entire(&self, u: &ControlSignal, t: f64) -> Result<M2State> {
        Ok(self.e_plus(u, t)?.add(&self.e_minus(u, t)?))
    }

    /// `H(u, y) = y - e(u, 0)`.
    pub fn conjugacy(&self, u: &ControlSignal, y: &M2State) -> Result<M2State> {
        y.check_grid(&M2State::zero_for(self.sys))?;
        Ok(y.sub(&self.entire(u, 0.0)?))
    }
}

pub fn e_minus(sys: &DelaySystem, split: &HyperbolicSplitting, u: &ControlSignal, t: f64) -> Result<M2State> {
    EntireSolver::new(sys, split, DEFAULT_TOL)?.e_minus(u, t)
}

pub fn e_plus(sys: &DelaySystem, split: &HyperbolicSplitting, u: &ControlSignal, t: f64) -> Result<M2State> {
    EntireSolver::new(sys, split, DEFAULT_TOL)?.e_plus(u, t)
}

pub fn entire_solution(sys: &DelaySystem, split: &HyperbolicSplitting, u: &ControlSignal, t: f64) -> Result<M2State> {
    EntireSolver::new(sys, split, DEFAULT_TOL)?.entire(u, t)
}

#[allow(non_snake_case)]
pub fn conjugacy_H(sys: &DelaySystem, split: &HyperbolicSplitting, u: &ControlSignal, y: &M2State) -> Result<M2State> {
    EntireSolver::new(sys, split, DEFAULT_TOL)?.conjugacy(u, y)
}

/// A point `(u, e(u, 0))` of the chain recurrent set.
#[derive(Debug, Clone)]
pub struct GraphPoint {
    pub control: ControlSignal,
    pub state: M2State,
}

#[derive(Debug, Clone, Serialize)]
pub struct SegmentSummary {
    pub min: f64,
    pub max: f64,
    pub l2: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphPointJson {
    pub control_descriptor: ControlJson,
    pub head: Vec<f64>,
    pub segment_summary: SegmentSummary,
}

impl GraphPoint {
    pub fn to_json(&self) -> GraphPointJson {
        let flat = self.state.samples_flat();
        GraphPointJson {
            control_descriptor: self.control.to_json(),
            head: self.state.head().to_vec(),
            segment_summary: SegmentSummary {
                min: flat.iter().copied().fold(f64::INFINITY, f64::min),
                max: flat.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                l2: self.state.segment_norm_sq().sqrt(),
            },
        }
    }
}

/// Samples the graph `{(u, e(u, 0))}` over the given controls.
pub fn chain_recurrent_graph(sys: &DelaySystem, split: &HyperbolicSplitting, controls: &[ControlSignal]) -> Result<Vec<GraphPoint>> {
    let solver = EntireSolver::new(sys, split, DEFAULT_TOL)?;
    chain_recurrent_graph_with(&solver, controls)
}

pub fn chain_recurrent_graph_with(solver: &EntireSolver<'_>, controls: &[ControlSignal]) -> Result<Vec<GraphPoint>> {
    controls
        .par_iter()
        .map(|u| Ok(GraphPoint { control: u.clone(), state: solver.entire(u, 0.0)? }))
        .collect()
}

/// Constants at the vertices of `Omega` (and at 0 when admissible) followed by `bang_bang`
/// random bang-bang signals, all covering `[-t_past - h, t_fut]`.
pub fn control_family(sys: &DelaySystem, solver: &EntireSolver<'_>, bang_bang: usize, seed: u64) -> Result<Vec<ControlSignal>> {
    let step = solver.step();
    let t0 = -round_up(solver.t_past + sys.h(), step);
    let t1 = round_up(solver.t_fut, step) + step;
    let mut out = Vec::new();
    for v in sys.omega().vertices() {
        out.push(ControlSignal::constant(v, t0, step)?);
    }
    if sys.zero_in_omega() {
        out.push(ControlSignal::constant(&vec![0.0; sys.m()], t0, step)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..bang_bang {
        out.push(ControlSignal::random_bang_bang(&mut rng, sys.omega(), t0, t1, step, 0.5)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{homogeneous_step, solve};
    use crate::spectral::{compute_spectrum, hyperbolic_split};
    use crate::state::m2_distance;

    fn setup(a0: f64, a1: f64, sigma: f64) -> (DelaySystem, HyperbolicSplitting) {
        let sys = DelaySystem::scalar(&[a0, a1], &[1.0, 0.0], &[1.0], (-1.0, 1.0)).unwrap();
        let split = hyperbolic_split(&sys, &compute_spectrum(&sys, sigma, 48).unwrap()).unwrap();
        (sys, split)
    }

    fn constant(c: f64, solver: &EntireSolver<'_>) -> ControlSignal {
        ControlSignal::constant(&[c], -round_up(solver.t_past + 2.0, solver.step()), solver.step()).unwrap()
    }

    #[test]
    fn zero_control_gives_zero() {
        let (sys, split) = setup(-1.0, -0.5, -2.0);
        let s = EntireSolver::new(&sys, &split, 1e-8).unwrap();
        let e = s.entire(&constant(0.0, &s), 0.0).unwrap();
        assert_eq!(e.norm(), 0.0);
        let y = M2State::constant(&sys, &[0.3]);
        assert_eq!(s.conjugacy(&constant(0.0, &s), &y).unwrap(), y);
    }

    #[test]
    fn stable_equilibrium() {
        let (sys, split) = setup(-1.0, -0.5, -2.0);
        let s = EntireSolver::new(&sys, &split, 1e-8).unwrap();
        let e = s.entire(&constant(0.6, &s), 0.0).unwrap();
        let eq = M2State::constant(&sys, &[0.4]);
        assert!(m2_distance(&e, &eq).unwrap() < 1e-6, "{}", m2_distance(&e, &eq).unwrap());
        assert!(s.conjugacy(&constant(0.6, &s), &e).unwrap().norm() < 1e-12);
    }

    #[test]
    fn unstable_equilibrium() {
        let (sys, split) = setup(1.0, -0.1, -3.0);
        assert_eq!(split.dim_plus, 1);
        let s = EntireSolver::new(&sys, &split, 1e-8).unwrap();
        let u = constant(0.5, &s);
        let e = s.entire(&u, 0.0).unwrap();
        let eq = M2State::constant(&sys, &[-0.5 / 0.9]);
        assert!(m2_distance(&e, &eq).unwrap() < 1e-6, "{}", m2_distance(&e, &eq).unwrap());
        let ep = s.e_plus(&u, 0.0).unwrap();
        assert!(m2_distance(&ep, &split.project_plus(&eq)).unwrap() < 1e-6);
        let zero = s.e_plus(&constant(0.0, &s), 0.0).unwrap();
        assert_eq!(zero.norm(), 0.0);
    }

    #[test]
    fn shift_equivariance_and_invariance() {
        let (sys, split) = setup(1.0, -0.1, -3.0);
        let s = EntireSolver::new(&sys, &split, 1e-8).unwrap();
        let fam = control_family(&sys, &s, 2, 5).unwrap();
        let u = &fam[fam.len() - 1];
        let tau = 0.75;
        let a = s.entire(u, tau).unwrap();
        let b = s.entire(&u.shift(tau).unwrap(), 0.0).unwrap();
        assert!(m2_distance(&a, &b).unwrap() < 1e-6);
        // the graph is invariant under the flow
        let e0 = s.entire(u, 0.0).unwrap();
        let moved = solve(&sys, &e0, u, 2.0, s.step()).unwrap().final_state();
        let e2 = s.entire(u, 2.0).unwrap();
        assert!(m2_distance(&moved, &e2).unwrap() < 1e-5, "{}", m2_distance(&moved, &e2).unwrap());
    }

    #[test]
    fn conjugation_identity() {
        let (sys, split) = setup(1.0, -0.1, -3.0);
        let s = EntireSolver::new(&sys, &split, 1e-8).unwrap();
        let fam = control_family(&sys, &s, 1, 9).unwrap();
        let u = fam.last().unwrap();
        let y = M2State::from_fn(&sys, vec![0.2], |t| vec![0.2 + 0.1 * t]);
        let t = 1.5;
        let lhs = {
            let moved = solve(&sys, &y, u, t, s.step()).unwrap().final_state();
            s.conjugacy(&u.shift(t).unwrap(), &moved).unwrap()
        };
        let rhs = homogeneous_step(&sys, u, &s.conjugacy(u, &y).unwrap(), t).unwrap().1;
        assert!(m2_distance(&lhs, &rhs).unwrap() < 1e-5);
    }

    #[test]
    fn truncation_converges() {
        let (sys, split) = setup(-1.0, -0.5, -2.0);
        let s = EntireSolver::new(&sys, &split, 1e-6).unwrap();
        let fam = control_family(&sys, &s.clone().with_horizons(2.0 * s.t_past, 2.0 * s.t_fut), 1, 3).unwrap();
        let u = fam.last().unwrap();
        let a = s.entire(u, 0.0).unwrap();
        let b = s.clone().with_horizons(2.0 * s.t_past, 2.0 * s.t_fut).entire(u, 0.0).unwrap();
        assert!(m2_distance(&a, &b).unwrap() < 1e-6);
    }

    #[test]
    fn graph_of_constants() {
        let (sys, split) = setup(-1.0, -0.5, -2.0);
        let s = EntireSolver::new(&sys, &split, 1e-8).unwrap();
        let controls: Vec<_> = [-1.0, 0.0, 1.0].iter().map(|&c| constant(c, &s)).collect();
        let g = chain_recurrent_graph_with(&s, &controls).unwrap();
        for (p, want) in g.iter().zip([-2.0 / 3.0, 0.0, 2.0 / 3.0]) {
            assert!((p.state.head()[0] - want).abs() < 1e-6);
        }
        assert!(chain_recurrent_graph_with(&s, &[]).unwrap().is_empty());
    }

    #[test]
    fn short_window_rejected() {
        let (sys, split) = setup(-1.0, -0.5, -2.0);
        let u = ControlSignal::constant(&[1.0], 0.0, sys.default_step()).unwrap();
        assert!(matches!(entire_solution(&sys, &split, &u, 0.0), Err(Error::InsufficientWindow(_))));
    }
}
