//! Controlled `(eps, tau)`-chains.
//!
//! A chain runs legs `y_j -> phi(tau_j, y_j, u_j)` and then jumps to the next node; it is valid
//! when every jump is shorter than `eps` in `M2`. The builders follow the scaling argument: a
//! loop through `y` scaled by `alpha` is a loop through `alpha y` (trajectories scale with
//! state and control when `0` is admissible), so a ladder of scaled loops walks to and from 0.

pub mod boxes;

use serde::{Deserialize, Serialize};

use crate::control::{metric_u, ControlJson, ControlSignal, MetricBasis};
use crate::error::{Error, Result};
use crate::integrator::{solve, solve_unconstrained};
use crate::state::{m2_distance, M2State, StateJson};
use crate::system::DelaySystem;

#[derive(Debug, Clone)]
pub struct Chain {
    pub nodes: Vec<M2State>,
    pub controls: Vec<ControlSignal>,
    pub durations: Vec<f64>,
    pub epsilon: f64,
    pub tau: f64,
    valid: bool,
}

impl Chain {
    pub fn new(nodes: Vec<M2State>, controls: Vec<ControlSignal>, durations: Vec<f64>, epsilon: f64, tau: f64) -> Result<Self> {
        let q = controls.len();
        if q == 0 || nodes.len() != q + 1 || durations.len() != q {
            return Err(Error::InvalidChain(format!(
                "{} nodes, {} controls, {} durations: need q + 1, q, q with q >= 1",
                nodes.len(),
                q,
                durations.len()
            )));
        }
        if !(epsilon > 0.0) || !(tau > 0.0) {
            return Err(Error::InvalidChain("epsilon and tau must be positive".into()));
        }
        if let Some(d) = durations.iter().find(|&&d| d < tau - 1e-12) {
            return Err(Error::InvalidChain(format!("leg duration {d} is shorter than tau = {tau}")));
        }
        for w in nodes.windows(2) {
            w[0].check_grid(&w[1])?;
        }
        Ok(Self { nodes, controls, durations, epsilon, tau, valid: false })
    }

    pub fn q(&self) -> usize {
        self.controls.len()
    }

    pub fn start(&self) -> &M2State {
        &self.nodes[0]
    }

    pub fn end(&self) -> &M2State {
        &self.nodes[self.q()]
    }

    /// Set only by [`verify_chain`].
    pub fn is_valid(&self) -> bool {
        self.valid
    }

    pub fn total_time(&self) -> f64 {
        self.durations.iter().sum()
    }

    /// `self` followed by `other`; the end of `self` must equal the start of `other`.
    pub fn concat(&self, other: &Chain) -> Result<Chain> {
        let gap = m2_distance(self.end(), other.start())?;
        if gap > 1e-12 * (1.0 + self.end().norm()) {
            return Err(Error::InvalidChain(format!("endpoints differ by {gap:.3e}")));
        }
        let mut nodes = self.nodes.clone();
        nodes.extend(other.nodes[1..].iter().cloned());
        let mut controls = self.controls.clone();
        controls.extend(other.controls.iter().cloned());
        let mut durations = self.durations.clone();
        durations.extend(&other.durations);
        let mut out = Chain::new(nodes, controls, durations, self.epsilon.max(other.epsilon), self.tau.min(other.tau))?;
        out.valid = self.valid && other.valid;
        Ok(out)
    }

    pub fn to_json(&self) -> ChainJson {
        let mut legs: Vec<LegJson> = (0..self.q())
            .map(|j| LegJson {
                duration: self.durations[j],
                control_descriptor: Some(self.controls[j].to_json()),
                node: self.nodes[j].to_json(),
            })
            .collect();
        legs.push(LegJson { duration: 0.0, control_descriptor: None, node: self.end().to_json() });
        ChainJson { epsilon: self.epsilon, tau: self.tau, legs }
    }

    pub fn from_json(json: &ChainJson, h: f64) -> Result<Self> {
        let (last, legs) = json
            .legs
            .split_last()
            .ok_or_else(|| Error::InvalidChain("chain file has no legs".into()))?;
        if last.control_descriptor.is_some() || last.duration != 0.0 {
            return Err(Error::InvalidChain("the last leg must be the terminal node (duration 0, no control)".into()));
        }
        let mut nodes = Vec::with_capacity(json.legs.len());
        let mut controls = Vec::with_capacity(legs.len());
        let mut durations = Vec::with_capacity(legs.len());
        for (j, leg) in legs.iter().enumerate() {
            let c = leg
                .control_descriptor
                .as_ref()
                .ok_or_else(|| Error::InvalidChain(format!("leg {j} has no control")))?;
            controls.push(ControlSignal::from_json(c)?);
            durations.push(leg.duration);
            nodes.push(M2State::from_json(&leg.node, h)?);
        }
        nodes.push(M2State::from_json(&last.node, h)?);
        Chain::new(nodes, controls, durations, json.epsilon, json.tau)
    }
}

/// One leg of a chain file; the last entry carries the terminal node only.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LegJson {
    pub duration: f64,
    pub control_descriptor: Option<ControlJson>,
    pub node: StateJson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainJson {
    pub epsilon: f64,
    pub tau: f64,
    pub legs: Vec<LegJson>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainReport {
    pub valid: bool,
    pub epsilon: f64,
    pub worst_jump: f64,
    pub jumps: Vec<f64>,
    pub diagnostics: Vec<String>,
}

/// Simulates every leg and measures the jumps; sets the chain's validity flag.
pub fn verify_chain(sys: &DelaySystem, chain: &mut Chain) -> ChainReport {
    let report = verify_chain_at(sys, chain, chain.epsilon);
    chain.valid = report.valid;
    report
}

/// Jump report against an arbitrary `eps`; leaves the chain untouched.
pub fn verify_chain_at(sys: &DelaySystem, chain: &Chain, eps: f64) -> ChainReport {
    let step = sys.default_step();
    let mut jumps = Vec::with_capacity(chain.q());
    let mut diagnostics = Vec::new();
    for j in 0..chain.q() {
        let end = solve(sys, &chain.nodes[j], &chain.controls[j], chain.durations[j], step)
            .map(|t| t.final_state())
            .and_then(|y| m2_distance(&y, &chain.nodes[j + 1]));
        match end {
            Ok(d) => jumps.push(d),
            Err(e) => {
                diagnostics.push(format!("leg {j}: {e}"));
                jumps.push(f64::INFINITY);
            }
        }
    }
    let worst_jump = jumps.iter().copied().fold(0.0, f64::max);
    ChainReport { valid: diagnostics.is_empty() && worst_jump < eps, epsilon: eps, worst_jump, jumps, diagnostics }
}

/// `|alpha phi(t, y0, u) - phi(t, alpha y0, alpha u)|`.
pub fn scale_trajectory_check(sys: &DelaySystem, y0: &M2State, u: &ControlSignal, t: f64, alpha: f64) -> Result<f64> {
    if !sys.zero_in_omega() {
        return Err(Error::ZeroNotInOmega);
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let step = sys.default_step();
    let a = solve(sys, y0, u, t, step)?.final_state().scaled(alpha);
    let b = solve(sys, &y0.scaled(alpha), &u.scaled(alpha), t, step)?.final_state();
    m2_distance(&a, &b)
}

/// A loop `y -> y` of one leg: simulate under `u` and stop at the first multiple of `tau`
/// where the state is back within `tol` of `y`.
pub fn seed_loop(sys: &DelaySystem, y: &M2State, u: &ControlSignal, tau: f64, tol: f64, max_periods: usize) -> Result<Chain> {
    let step = sys.default_step();
    let horizon = tau * max_periods as f64;
    let tr = solve(sys, y, u, horizon, step)?;
    for k in 1..=max_periods {
        let t = k as f64 * tau;
        let d = m2_distance(&tr.state_at(t), y)?;
        if d < tol {
            let mut c = Chain::new(vec![y.clone(), y.clone()], vec![u.clone()], vec![t], tol, tau)?;
            c.valid = true;
            return Ok(c);
        }
    }
    Err(Error::InvalidChain(format!("no return within {tol} of the start after {max_periods} periods of {tau}")))
}

fn require_loop(sys: &DelaySystem, y: &M2State, eps: f64, tau: f64, seed: &Chain) -> Result<()> {
    if !sys.zero_in_omega() {
        return Err(Error::ZeroNotInOmega);
    }
    if !(eps > 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidArgument("epsilon and tau must be positive".into()));
    }
    if m2_distance(seed.start(), y)? > 1e-12 * (1.0 + y.norm()) || m2_distance(seed.end(), y)? > 1e-12 * (1.0 + y.norm()) {
        return Err(Error::InvalidChain("seed loop must start and end at y".into()));
    }
    if seed.durations.iter().any(|&d| d < tau - 1e-12) {
        return Err(Error::InvalidChain("seed loop legs are shorter than tau".into()));
    }
    let rep = verify_chain_at(sys, seed, 0.5 * eps);
    if !rep.valid {
        return Err(Error::InvalidChain(format!(
            "seed loop is not an (eps/2, tau)-chain: worst jump {:.3e}",
            rep.worst_jump
        )));
    }
    Ok(())
}

/// Appends the loop scaled by `c`, ending at `next` instead of `c y`.
fn push_scaled_loop(nodes: &mut Vec<M2State>, controls: &mut Vec<ControlSignal>, durations: &mut Vec<f64>, seed: &Chain, c: f64, next: M2State) {
    for j in 0..seed.q() {
        controls.push(seed.controls[j].scaled(c));
        durations.push(seed.durations[j]);
        if j + 1 < seed.q() {
            nodes.push(seed.nodes[j + 1].scaled(c));
        }
    }
    nodes.push(next);
}

/// Chain with the construction parameters that produced it.
#[derive(Debug, Clone)]
pub struct BuiltChain {
    pub chain: Chain,
    pub alpha: f64,
    /// Number of scaled loops (to 0) or ladder steps `k` (from 0).
    pub steps: usize,
}

fn zero_leg(sys: &DelaySystem, tau: f64) -> ControlSignal {
    ControlSignal::zero(sys.m(), sys.default_step()).with_window(-sys.h(), tau)
}

/// `(eps, tau)`-chain from `y` to `0`: loops through `alpha^k y` with
/// `(1 - alpha) |y| < eps / 2`, then a final jump to 0.
pub fn build_chain_to_zero(sys: &DelaySystem, y: &M2State, eps: f64, tau: f64, seed: &Chain) -> Result<BuiltChain> {
    let zero = M2State::zero_for(sys);
    let ny = y.norm();
    if ny == 0.0 {
        let mut chain = Chain::new(vec![zero.clone(), zero], vec![zero_leg(sys, tau)], vec![tau], eps, tau)?;
        verify_chain(sys, &mut chain);
        return Ok(BuiltChain { chain, alpha: 1.0, steps: 0 });
    }
    if !sys.zero_in_omega() {
        return Err(Error::ZeroNotInOmega);
    }
    // a single leg may already land within eps of 0
    let direct = solve(sys, y, &zero_leg(sys, tau), tau, sys.default_step())?.final_state();
    if direct.norm() < eps {
        let mut chain = Chain::new(vec![y.clone(), zero], vec![zero_leg(sys, tau)], vec![tau], eps, tau)?;
        verify_chain(sys, &mut chain);
        return Ok(BuiltChain { chain, alpha: 0.0, steps: 0 });
    }
    require_loop(sys, y, eps, tau, seed)?;
    let alpha = 1.0 - 0.9 * eps / (2.0 * ny);
    if alpha <= 0.0 {
        return Err(Error::InvalidArgument("epsilon too large for the scaling construction".into()));
    }
    let worst_end = seed.nodes.iter().map(M2State::norm).fold(ny, f64::max) + 0.5 * eps;
    let mut nodes = vec![y.clone()];
    let mut controls = Vec::new();
    let mut durations = Vec::new();
    let mut c = 1.0;
    let mut steps = 0;
    loop {
        let last = c * worst_end < eps;
        let next = if last { zero.clone() } else { y.scaled(c * alpha) };
        push_scaled_loop(&mut nodes, &mut controls, &mut durations, seed, c, next);
        steps += 1;
        if last {
            break;
        }
        c *= alpha;
    }
    let mut chain = Chain::new(nodes, controls, durations, eps, tau)?;
    verify_chain(sys, &mut chain);
    Ok(BuiltChain { chain, alpha, steps })
}

/// Chain from `0` to `y` valid at `(1 + 2|y|) eps`: loops through the ladder `(j alpha + eps) y`,
/// `j = 0..=k` with `k alpha + eps < 1 <= (k + 1) alpha + eps`.
pub fn build_chain_from_zero(sys: &DelaySystem, y: &M2State, eps: f64, tau: f64, seed: &Chain) -> Result<BuiltChain> {
    let zero = M2State::zero_for(sys);
    let ny = y.norm();
    let target = (1.0 + 2.0 * ny) * eps;
    if ny == 0.0 || eps >= 1.0 {
        if ny > 0.0 && !sys.zero_in_omega() {
            return Err(Error::ZeroNotInOmega);
        }
        let mut chain = Chain::new(vec![zero.clone(), y.clone()], vec![zero_leg(sys, tau)], vec![tau], target, tau)?;
        verify_chain(sys, &mut chain);
        return Ok(BuiltChain { chain, alpha: 1.0, steps: 0 });
    }
    require_loop(sys, y, eps, tau, seed)?;
    let alpha = 0.5 * eps.min(eps / ny);
    let k = ladder_steps(alpha, eps);
    let mut nodes = vec![zero.clone()];
    let mut controls = vec![zero_leg(sys, tau)];
    let mut durations = vec![tau];
    nodes.push(y.scaled(eps));
    for j in 0..=k {
        let c = j as f64 * alpha + eps;
        let next = if j == k { y.clone() } else { y.scaled(c + alpha) };
        push_scaled_loop(&mut nodes, &mut controls, &mut durations, seed, c, next);
    }
    let mut chain = Chain::new(nodes, controls, durations, target, tau)?;
    verify_chain(sys, &mut chain);
    Ok(BuiltChain { chain, alpha, steps: k })
}

/// The `k` with `k alpha + eps < 1 <= (k + 1) alpha + eps`.
pub fn ladder_steps(alpha: f64, eps: f64) -> usize {
    let mut k = ((1.0 - eps) / alpha).floor().max(0.0) as usize;
    while k > 0 && k as f64 * alpha + eps >= 1.0 {
        k -= 1;
    }
    while (k + 1) as f64 * alpha + eps < 1.0 {
        k += 1;
    }
    k
}

/// A chain in `U x M2`: nodes `(theta_{T_j} w, y_j)` for one concatenated control `w`.
#[derive(Debug, Clone)]
pub struct LiftedChain {
    pub chain: Chain,
    /// `w`: `u_start` before 0, the legs' controls on `[T_j, T_{j+1})`, `u_end` after `T_q`.
    pub global: ControlSignal,
    pub times: Vec<f64>,
}

impl LiftedChain {
    pub fn node_control(&self, j: usize) -> Result<ControlSignal> {
        self.global.shift(self.times[j])
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LiftedReport {
    pub valid: bool,
    pub state_jumps: Vec<f64>,
    pub control_jumps: Vec<f64>,
    pub worst: f64,
    /// `d_U(w, u_start)` and `d_U(theta_T w, u_end)`.
    pub start_offset: f64,
    pub end_offset: f64,
}

/// Splices the leg controls into one signal so consecutive control nodes agree exactly.
///
/// Legs are simulated again under the spliced controls, whose past may differ from the
/// original leg controls when the system has delayed control terms; the verifier measures
/// the state jumps afresh.
pub fn lift_chain(sys: &DelaySystem, chain: &Chain, u_start: &ControlSignal, u_end: &ControlSignal) -> Result<LiftedChain> {
    if !chain.is_valid() {
        return Err(Error::InvalidChain("lift requires a verified chain".into()));
    }
    let step = sys.default_step();
    let mut times = vec![0.0];
    for d in &chain.durations {
        times.push(times.last().expect("non-empty") + d);
    }
    let cells: Vec<i64> = times.iter().map(|t| (t / step).round() as i64).collect();
    let pad = ((4.0 + sys.h() + chain.tau) / step).ceil() as i64;
    let legs = chain.controls.iter().map(|u| u.on_grid(step)).collect::<Result<Vec<_>>>()?;
    let us = u_start.on_grid(step)?;
    let ue = u_end.on_grid(step)?;
    let kq = *cells.last().expect("non-empty");
    let values: Vec<Vec<f64>> = (-pad..kq + pad)
        .map(|k| {
            if k < 0 {
                us.cell_value(k).to_vec()
            } else if k >= kq {
                ue.cell_value(k - kq).to_vec()
            } else {
                let j = cells.partition_point(|&c| c <= k) - 1;
                legs[j].cell_value(k - cells[j]).to_vec()
            }
        })
        .collect();
    let global = ControlSignal::new(-pad as f64 * step, step, values)?;
    let controls = times[..chain.q()].iter().map(|&t| global.shift(t)).collect::<Result<Vec<_>>>()?;
    let mut lifted = Chain::new(chain.nodes.clone(), controls, chain.durations.clone(), chain.epsilon, chain.tau)?;
    lifted.valid = false;
    Ok(LiftedChain { chain: lifted, global, times })
}

/// Product-metric check `max(d_U, d_M2) < eps` on every jump of a lifted chain.
pub fn verify_lifted(sys: &DelaySystem, lifted: &mut LiftedChain, u_start: &ControlSignal, u_end: &ControlSignal, basis: &MetricBasis) -> Result<LiftedReport> {
    let step = sys.default_step();
    let q = lifted.chain.q();
    let mut state_jumps = Vec::with_capacity(q);
    let mut control_jumps = Vec::with_capacity(q);
    for j in 0..q {
        let v = &lifted.chain.controls[j];
        let end = solve_unconstrained(sys, &lifted.chain.nodes[j], v, lifted.chain.durations[j], step)?.final_state();
        state_jumps.push(m2_distance(&end, &lifted.chain.nodes[j + 1])?);
        let next = lifted.node_control(j + 1)?;
        control_jumps.push(metric_u(&v.shift(lifted.chain.durations[j])?, &next, basis));
    }
    let worst = state_jumps.iter().chain(&control_jumps).copied().fold(0.0, f64::max);
    let valid = worst < lifted.chain.epsilon;
    lifted.chain.valid = valid;
    let last = lifted.node_control(q)?;
    Ok(LiftedReport {
        valid,
        state_jumps,
        control_jumps,
        worst,
        start_offset: metric_u(&lifted.global, u_start, basis),
        end_offset: metric_u(&last, u_end, basis),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stable() -> DelaySystem {
        DelaySystem::scalar(&[-1.0, -0.5], &[1.0, 0.0], &[1.0], (-1.0, 1.0)).unwrap()
    }

    fn equilibrium_loop(sys: &DelaySystem, c: f64, eps: f64) -> (M2State, Chain) {
        let y = M2State::constant(sys, &[c / 1.5]);
        let u = ControlSignal::constant(&[c], -sys.h(), sys.default_step()).unwrap();
        let lp = seed_loop(sys, &y, &u, 1.0, 0.5 * eps, 4).unwrap();
        (y, lp)
    }

    #[test]
    fn exact_chain_is_valid() {
        let sys = stable();
        let y = M2State::constant(&sys, &[1.0]);
        let u = ControlSignal::constant(&[0.5], 0.0, sys.default_step()).unwrap();
        let end = solve(&sys, &y, &u, 1.0, sys.default_step()).unwrap().final_state();
        let mut c = Chain::new(vec![y.clone(), end.clone()], vec![u.clone()], vec![1.0], 1e-9, 1.0).unwrap();
        let rep = verify_chain(&sys, &mut c);
        assert!(rep.valid && rep.worst_jump < 1e-14 && c.is_valid());
        let mut moved = end.clone();
        moved.head_mut()[0] += 2e-3;
        let mut bad = Chain::new(vec![y, moved], vec![u], vec![1.0], 1e-3, 1.0).unwrap();
        assert!(!verify_chain(&sys, &mut bad).valid);
    }

    #[test]
    fn scaling_identity() {
        let sys = stable();
        let y = M2State::from_fn(&sys, vec![0.3], |s| vec![0.3 + s * s]);
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(2);
        let u = ControlSignal::random_bang_bang(&mut rng, sys.omega(), 0.0, 2.0, sys.default_step(), 0.3).unwrap();
        assert!(scale_trajectory_check(&sys, &y, &u, 2.0, 0.5).unwrap() < 1e-9);
        assert!(scale_trajectory_check(&sys, &y, &u, 2.0, 1.0).unwrap() < 1e-15);
        let zero = M2State::zero_for(&sys);
        assert_eq!(scale_trajectory_check(&sys, &zero, &ControlSignal::zero(1, 0.25), 1.0, 0.3).unwrap(), 0.0);
        let shifted = sys.clone().with_omega(vec![vec![0.5], vec![1.0]]).unwrap();
        assert!(matches!(scale_trajectory_check(&shifted, &y, &u, 1.0, 0.5), Err(Error::ZeroNotInOmega)));
    }

    #[test]
    fn chains_to_and_from_zero() {
        let sys = stable();
        for eps in [0.1, 0.02] {
            let (y, lp) = equilibrium_loop(&sys, 1.0, eps);
            let to = build_chain_to_zero(&sys, &y, eps, 1.0, &lp).unwrap();
            assert!(to.chain.is_valid(), "to zero at {eps}");
            assert_eq!(to.chain.end().norm(), 0.0);
            let from = build_chain_from_zero(&sys, &y, eps, 1.0, &lp).unwrap();
            assert!(from.chain.is_valid(), "from zero at {eps}");
            assert!((from.chain.epsilon - (1.0 + 2.0 * y.norm()) * eps).abs() < 1e-15);
            let k = from.steps as f64;
            assert!(k * from.alpha + eps < 1.0 && 1.0 <= (k + 1.0) * from.alpha + eps);
            let both = to.chain.concat(&from.chain).unwrap();
            assert!(both.is_valid() && both.epsilon == from.chain.epsilon);
        }
    }

    #[test]
    fn trivial_chains() {
        let sys = stable();
        let zero = M2State::zero_for(&sys);
        let (_, lp) = equilibrium_loop(&sys, 1.0, 0.1);
        let c = build_chain_to_zero(&sys, &zero, 0.1, 1.0, &lp).unwrap();
        assert!(c.chain.is_valid() && c.chain.q() == 1);
        let small = M2State::constant(&sys, &[0.01]);
        let d = build_chain_to_zero(&sys, &small, 0.1, 1.0, &lp).unwrap();
        assert!(d.chain.is_valid() && d.chain.q() == 1);
    }

    #[test]
    fn lifted_chain_has_no_control_jumps() {
        let sys = stable();
        let (y, lp) = equilibrium_loop(&sys, 1.0, 0.1);
        let to = build_chain_to_zero(&sys, &y, 0.1, 1.0, &lp).unwrap();
        let zero_u = ControlSignal::zero(1, sys.default_step());
        let mut lifted = lift_chain(&sys, &to.chain, &zero_u, &zero_u).unwrap();
        let basis = MetricBasis::new(1, MetricBasis::DEFAULT_TERMS);
        let rep = verify_lifted(&sys, &mut lifted, &zero_u, &zero_u, &basis).unwrap();
        assert!(rep.control_jumps.iter().all(|&d| d == 0.0));
        assert!(rep.valid, "worst {}", rep.worst);
    }

    #[test]
    fn chain_file_roundtrip() {
        let sys = stable();
        let (_, lp) = equilibrium_loop(&sys, 1.0, 0.1);
        let json = serde_json::to_string(&lp.to_json()).unwrap();
        let back = Chain::from_json(&serde_json::from_str(&json).unwrap(), sys.h()).unwrap();
        assert_eq!(back.q(), lp.q());
        assert_eq!(back.nodes, lp.nodes);
        assert!(!back.is_valid());
    }
}
