//! Trajectories by the method of steps.
//!
//! The step must divide every delay, so the delayed arguments of a Runge-Kutta stage
//! fall on a cell boundary or a cell midpoint of already computed history. History for
//! `t >= 0` is kept as node values together with one-sided derivatives and read back by
//! cubic Hermite interpolation; history on `[-h, 0)` is the initial segment. Controls
//! must be piecewise constant on the step grid, which makes the forcing constant on
//! every cell.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::control::ControlSignal;
use crate::error::{Error, Result};
use crate::state::{M2State, SnapshotJson};
use crate::system::DelaySystem;

const BLOW_UP: f64 = 1e150;

/// Dense solution `x` on `[-h, T]` plus the initial segment it started from.
#[derive(Debug, Clone)]
pub struct Trajectory {
    n: usize,
    step: f64,
    steps: usize,
    initial: M2State,
    x: Vec<f64>,
    d_plus: Vec<f64>,
    d_minus: Vec<f64>,
}

fn hermite(theta: f64, step: f64, x0: &[f64], d0: &[f64], x1: &[f64], d1: &[f64], out: &mut [f64]) {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = (t3 - 2.0 * t2 + theta) * step;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = (t3 - t2) * step;
    for i in 0..out.len() {
        out[i] = h00 * x0[i] + h10 * d0[i] + h01 * x1[i] + h11 * d1[i];
    }
}

impl Trajectory {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn t_end(&self) -> f64 {
        self.steps as f64 * self.step
    }

    pub fn h(&self) -> f64 {
        self.initial.h()
    }

    pub fn initial(&self) -> &M2State {
        &self.initial
    }

    /// `x(t_k)` at grid node `k`.
    pub fn node(&self, k: usize) -> &[f64] {
        &self.x[k * self.n..(k + 1) * self.n]
    }

    /// Right derivative at node `k` (left derivative at the last node).
    pub fn node_derivative(&self, k: usize) -> &[f64] {
        if k == self.steps {
            &self.d_minus[k * self.n..(k + 1) * self.n]
        } else {
            &self.d_plus[k * self.n..(k + 1) * self.n]
        }
    }

    fn cell_eval(&self, c: usize, theta: f64, out: &mut [f64]) {
        let n = self.n;
        hermite(
            theta,
            self.step,
            &self.x[c * n..(c + 1) * n],
            &self.d_plus[c * n..(c + 1) * n],
            &self.x[(c + 1) * n..(c + 2) * n],
            &self.d_minus[(c + 1) * n..(c + 2) * n],
            out,
        );
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let pos = t / self.step;
        let nearest = pos.round();
        if (pos - nearest).abs() < 1e-9 {
            let k = nearest as usize;
            return if k >= self.steps { (self.steps - 1, 1.0) } else { (k, 0.0) };
        }
        let c = (pos.floor() as usize).min(self.steps - 1);
        (c, pos - c as f64)
    }

    /// `x(t)` for `t in [-h, T]`.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        if t < -1e-12 * self.step {
            self.initial.segment_at_into(t, out);
        } else {
            let (c, theta) = self.locate(t.min(self.t_end()));
            self.cell_eval(c, theta, out);
        }
    }

    /// `x'(t)` for `t in [0, T]` (right derivative at nodes).
    pub fn derivative(&self, t: f64) -> Vec<f64> {
        let pos = t / self.step;
        let nearest = pos.round();
        if (pos - nearest).abs() < 1e-9 && nearest >= 0.0 {
            return self.node_derivative((nearest as usize).min(self.steps)).to_vec();
        }
        let (c, th) = self.locate(t);
        let n = self.n;
        let (x0, d0) = (&self.x[c * n..(c + 1) * n], &self.d_plus[c * n..(c + 1) * n]);
        let (x1, d1) = (&self.x[(c + 1) * n..(c + 2) * n], &self.d_minus[(c + 1) * n..(c + 2) * n]);
        let s = self.step;
        (0..n)
            .map(|i| {
                (6.0 * th * th - 6.0 * th) / s * x0[i]
                    + (3.0 * th * th - 4.0 * th + 1.0) * d0[i]
                    + (-6.0 * th * th + 6.0 * th) / s * x1[i]
                    + (3.0 * th * th - 2.0 * th) * d1[i]
            })
            .collect()
    }

    /// `y(t) = (x(t), x_t)` sampled on the segment grid.
    pub fn state_at(&self, t: f64) -> M2State {
        let (n, ns, h) = (self.n, self.initial.n_seg(), self.h());
        let mut samples = vec![0.0; n * (ns + 1)];
        for k in 0..=ns {
            let s = -h + k as f64 * h / ns as f64;
            self.eval_into(t + s, &mut samples[k * n..(k + 1) * n]);
        }
        let head = self.eval(t);
        // the sample at s = 0 is the head itself
        samples[ns * n..].copy_from_slice(&head);
        M2State::from_flat(head, samples, h, ns).expect("consistent grid")
    }

    pub fn final_state(&self) -> M2State {
        self.state_at(self.t_end())
    }

    /// Snapshots every `stride` steps, always including both ends.
    pub fn states(&self, stride: usize) -> Vec<(f64, M2State)> {
        let stride = stride.max(1);
        let mut ks: Vec<usize> = (0..=self.steps).step_by(stride).collect();
        if *ks.last().expect("non-empty") != self.steps {
            ks.push(self.steps);
        }
        ks.into_iter().map(|k| (k as f64 * self.step, self.state_at(k as f64 * self.step))).collect()
    }

    pub fn snapshots_json(&self, stride: usize) -> Vec<SnapshotJson> {
        self.states(stride)
            .into_iter()
            .map(|(t, s)| SnapshotJson { t, head: s.head().to_vec(), segment: s.segment() })
            .collect()
    }

    /// CSV with columns `t, x_1 .. x_n`, one row per node.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for i in 1..=self.n {
            out.push_str(&format!(",x_{i}"));
        }
        out.push('\n');
        for k in 0..=self.steps {
            out.push_str(&fmt_f64(k as f64 * self.step));
            for v in self.node(k) {
                out.push(',');
                out.push_str(&fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }

    /// `sup_k |x(t_k)|` over the nodes.
    pub fn sup_norm(&self) -> f64 {
        self.x.chunks(self.n).map(|v| v.iter().map(|a| a * a).sum::<f64>().sqrt()).fold(0.0, f64::max)
    }
}

/// Fixed 17-significant-digit float formatting for tabular output.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Flattened system data used in the inner loop.
struct Plan {
    n: usize,
    a: Vec<Vec<f64>>,
    lags: Vec<usize>,
    step: f64,
    steps: usize,
    /// Forcing `sum_i Bi u(t - hi)` on cell `k`, stored for cells `-1..=steps`.
    forcing: Vec<f64>,
}

impl Plan {
    fn forcing(&self, k: isize) -> &[f64] {
        let idx = (k + 1) as usize;
        &self.forcing[idx * self.n..(idx + 1) * self.n]
    }
}

fn lag_steps(sys: &DelaySystem, step: f64) -> Result<Vec<usize>> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::MisalignedStep("step must be positive".into()));
    }
    sys.delays()
        .iter()
        .map(|&d| {
            let k = (d / step).round();
            if k < 1.0 || (d - k * step).abs() > 1e-9 * d {
                Err(Error::MisalignedStep(format!("step {step} does not divide delay {d}")))
            } else {
                Ok(k as usize)
            }
        })
        .collect()
}

fn step_count(t_end: f64, step: f64) -> Result<usize> {
    if !(t_end > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {t_end}")));
    }
    let k = (t_end / step).round();
    if k < 1.0 || (t_end - k * step).abs() > 1e-9 * t_end.max(step) {
        return Err(Error::MisalignedStep(format!("step {step} does not divide the horizon {t_end}")));
    }
    Ok(k as usize)
}

fn make_plan(sys: &DelaySystem, u: &ControlSignal, t_end: f64, step: f64, scale: f64) -> Result<Plan> {
    if u.m() != sys.m() {
        return Err(Error::Dimension(format!("control dimension {} vs system m = {}", u.m(), sys.m())));
    }
    let lags = lag_steps(sys, step)?;
    let steps = step_count(t_end, step)?;
    let u = u.on_grid(step)?;
    let (n, m) = (sys.n(), sys.m());
    let mut all_lags = vec![0usize];
    all_lags.extend(&lags);
    let mut forcing = Vec::with_capacity(n * (steps + 1));
    for k in -1..=steps as i64 {
        let mut g = vec![0.0; n];
        for (i, &lag) in all_lags.iter().enumerate() {
            let b = &sys.b()[i];
            let v = u.cell_value(k - lag as i64);
            if v.iter().all(|&x| x == 0.0) {
                continue;
            }
            for r in 0..n {
                for c in 0..m {
                    g[r] += b[(r, c)] * v[c];
                }
            }
        }
        forcing.extend(g.into_iter().map(|x| x * scale));
    }
    let a = sys
        .a()
        .iter()
        .map(|mat| (0..n).flat_map(|r| (0..n).map(move |c| mat[(r, c)])).collect())
        .collect();
    Ok(Plan { n, a, lags, step, steps, forcing })
}

/// Forcing `sum_i Bi u(t - hi)` on the absolute step cells `k0..k1` (control on the step grid).
pub fn forcing_cells(sys: &DelaySystem, u: &ControlSignal, k0: i64, k1: i64, step: f64) -> Result<Vec<Vec<f64>>> {
    let lags = lag_steps(sys, step)?;
    let u = u.on_grid(step)?;
    let (n, m) = (sys.n(), sys.m());
    let mut all = vec![0usize];
    all.extend(lags);
    Ok((k0..k1)
        .map(|k| {
            let mut g = vec![0.0; n];
            for (i, &lag) in all.iter().enumerate() {
                let v = u.cell_value(k - lag as i64);
                for r in 0..n {
                    for c in 0..m {
                        g[r] += sys.b()[i][(r, c)] * v[c];
                    }
                }
            }
            g
        })
        .collect())
}

fn matvec_add(a: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for r in 0..n {
        let row = &a[r * n..(r + 1) * n];
        out[r] += row.iter().zip(x).map(|(p, q)| p * q).sum::<f64>();
    }
}

/// History lookup used while integrating: cell `c`, local position `theta in [0, 1]`.
fn history(traj: &Trajectory, c: isize, theta: f64, out: &mut [f64]) {
    if c >= 0 {
        traj.cell_eval(c as usize, theta, out);
    } else {
        let s = (c as f64 + theta) * traj.step;
        traj.initial.segment_at_into(s, out);
    }
}

fn rhs(plan: &Plan, traj: &Trajectory, k: isize, theta: f64, x: &[f64], forcing_cell: isize, out: &mut [f64], tmp: &mut [f64]) {
    out.copy_from_slice(plan.forcing(forcing_cell));
    matvec_add(&plan.a[0], x, out);
    for (i, &lag) in plan.lags.iter().enumerate() {
        history(traj, k - lag as isize, theta, tmp);
        matvec_add(&plan.a[i + 1], tmp, out);
    }
}

fn integrate(sys: &DelaySystem, y0: &M2State, plan: &Plan) -> Result<Trajectory> {
    y0.compatible_with(sys)?;
    let n = plan.n;
    let steps = plan.steps;
    let mut traj = Trajectory {
        n,
        step: plan.step,
        steps,
        initial: y0.clone(),
        x: vec![0.0; n * (steps + 1)],
        d_plus: vec![0.0; n * (steps + 1)],
        d_minus: vec![0.0; n * (steps + 1)],
    };
    traj.x[..n].copy_from_slice(y0.head());
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let (mut xs, mut tmp, mut dm) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let dt = plan.step;
    let x0 = traj.x[..n].to_vec();
    rhs(plan, &traj, -1, 1.0, &x0, -1, &mut dm, &mut tmp);
    traj.d_minus[..n].copy_from_slice(&dm);
    for k in 0..steps {
        let kc = k as isize;
        let xk = traj.x[k * n..(k + 1) * n].to_vec();
        rhs(plan, &traj, kc, 0.0, &xk, kc, &mut k1, &mut tmp);
        traj.d_plus[k * n..(k + 1) * n].copy_from_slice(&k1);
        for i in 0..n {
            xs[i] = xk[i] + 0.5 * dt * k1[i];
        }
        rhs(plan, &traj, kc, 0.5, &xs, kc, &mut k2, &mut tmp);
        for i in 0..n {
            xs[i] = xk[i] + 0.5 * dt * k2[i];
        }
        rhs(plan, &traj, kc, 0.5, &xs, kc, &mut k3, &mut tmp);
        for i in 0..n {
            xs[i] = xk[i] + dt * k3[i];
        }
        rhs(plan, &traj, kc, 1.0, &xs, kc, &mut k4, &mut tmp);
        let mut bad = false;
        for i in 0..n {
            let v = xk[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            bad |= !v.is_finite() || v.abs() > BLOW_UP;
            traj.x[(k + 1) * n + i] = v;
        }
        if bad {
            return Err(Error::BlowUp { time: (k + 1) as f64 * dt });
        }
        let xn = traj.x[(k + 1) * n..(k + 2) * n].to_vec();
        rhs(plan, &traj, kc, 1.0, &xn, kc, &mut dm, &mut tmp);
        traj.d_minus[(k + 1) * n..(k + 2) * n].copy_from_slice(&dm);
    }
    let last = steps * n;
    let tail = traj.d_minus[last..last + n].to_vec();
    traj.d_plus[last..last + n].copy_from_slice(&tail);
    Ok(traj)
}

/// `psi(t, r, f, u)` on `[0, t_end]` for the admissible control `u`.
pub fn solve(sys: &DelaySystem, y0: &M2State, u: &ControlSignal, t_end: f64, step: f64) -> Result<Trajectory> {
    u.check_admissible(sys.omega())?;
    solve_unconstrained(sys, y0, u, t_end, step)
}

/// Same as [`solve`] without the `u(t) in Omega` check; used for linear combinations of
/// solutions (scaled and lifted flows).
pub fn solve_unconstrained(sys: &DelaySystem, y0: &M2State, u: &ControlSignal, t_end: f64, step: f64) -> Result<Trajectory> {
    let plan = make_plan(sys, u, t_end, step, 1.0)?;
    integrate(sys, y0, &plan)
}

/// Homogeneous solution `T(t) y0`.
pub fn solve_homogeneous(sys: &DelaySystem, y0: &M2State, t_end: f64, step: f64) -> Result<Trajectory> {
    solve_unconstrained(sys, y0, &ControlSignal::zero(sys.m(), step), t_end, step)
}

/// Columns of the fundamental matrix `X` on `[0, t_end]`: `X = 0` on `[-h, 0)`, `X(0) = I`.
#[derive(Debug, Clone)]
pub struct FundamentalMatrix {
    columns: Vec<Trajectory>,
}

impl FundamentalMatrix {
    pub fn compute(sys: &DelaySystem, t_end: f64, step: f64) -> Result<Self> {
        let columns = (0..sys.n())
            .map(|j| {
                let mut y = M2State::zero_for(sys);
                y.head_mut()[j] = 1.0;
                solve_homogeneous(sys, &y, t_end, step)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { columns })
    }

    pub fn at(&self, t: f64) -> DMatrix<f64> {
        let n = self.columns.len();
        if t < 0.0 {
            return DMatrix::zeros(n, n);
        }
        let mut out = DMatrix::zeros(n, n);
        for (j, col) in self.columns.iter().enumerate() {
            for (i, v) in col.eval(t).into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        out
    }

    /// `int_{cell c} X(s) ds`, exact for the Hermite interpolant.
    fn cell_integral(&self, c: usize) -> DMatrix<f64> {
        let n = self.columns.len();
        let mut out = DMatrix::zeros(n, n);
        for (j, col) in self.columns.iter().enumerate() {
            let s = col.step;
            for i in 0..n {
                let x0 = col.x[c * n + i];
                let x1 = col.x[(c + 1) * n + i];
                let d0 = col.d_plus[c * n + i];
                let d1 = col.d_minus[(c + 1) * n + i];
                out[(i, j)] = 0.5 * s * (x0 + x1) + s * s / 12.0 * (d0 - d1);
            }
        }
        out
    }
}

/// `X(t)`; zero for `t < 0`, identity at `0`.
pub fn fundamental_matrix(sys: &DelaySystem, t: f64) -> Result<DMatrix<f64>> {
    let n = sys.n();
    if t < -sys.h() - 1e-12 {
        return Err(Error::InvalidArgument("fundamental matrix requested before -h".into()));
    }
    if t < 0.0 {
        return Ok(DMatrix::zeros(n, n));
    }
    if t == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    let step = sys.default_step();
    let horizon = (t / step).ceil().max(1.0) * step;
    Ok(FundamentalMatrix::compute(sys, horizon, step)?.at(t))
}

/// Variation-of-parameters route: `psi(t,r,f,0) + int_0^t X(t-s) sum_i Bi u(s-hi) ds`, the
/// integral taken cell by cell against the stored fundamental matrix.
pub fn solve_vdp(sys: &DelaySystem, y0: &M2State, u: &ControlSignal, t_end: f64, step: f64) -> Result<Trajectory> {
    u.check_admissible(sys.omega())?;
    let plan = make_plan(sys, u, t_end, step, 1.0)?;
    let hom = solve_homogeneous(sys, y0, t_end, step)?;
    let fm = FundamentalMatrix::compute(sys, t_end, step)?;
    let (n, steps) = (plan.n, plan.steps);
    let kernels: Vec<DMatrix<f64>> = (0..steps).map(|c| fm.cell_integral(c)).collect();
    let g: Vec<DVector<f64>> = (0..steps).map(|k| DVector::from_column_slice(plan.forcing(k as isize))).collect();
    let mut traj = Trajectory {
        n,
        step,
        steps,
        initial: y0.clone(),
        x: hom.x.clone(),
        d_plus: vec![0.0; n * (steps + 1)],
        d_minus: vec![0.0; n * (steps + 1)],
    };
    for kk in 1..=steps {
        let mut acc = DVector::zeros(n);
        for j in 0..kk {
            acc += &kernels[kk - 1 - j] * &g[j];
        }
        for i in 0..n {
            let v = traj.x[kk * n + i] + acc[i];
            if !v.is_finite() || v.abs() > BLOW_UP {
                return Err(Error::BlowUp { time: kk as f64 * step });
            }
            traj.x[kk * n + i] = v;
        }
    }
    // one-sided derivatives from the equation at the nodes
    let (mut d, mut tmp) = (vec![0.0; n], vec![0.0; n]);
    for k in 0..=steps {
        let xk = traj.x[k * n..(k + 1) * n].to_vec();
        for (side, left) in [(0usize, false), (1, true)] {
            let _ = side;
            d.copy_from_slice(plan.forcing(if left { k as isize - 1 } else { k as isize }));
            matvec_add(&plan.a[0], &xk, &mut d);
            for (i, &lag) in plan.lags.iter().enumerate() {
                let node = k as isize - lag as isize;
                if node > 0 || (node == 0 && !left) {
                    tmp.copy_from_slice(&traj.x[node as usize * n..(node as usize + 1) * n]);
                } else {
                    y0.segment_at_into(node as f64 * step, &mut tmp);
                }
                matvec_add(&plan.a[i + 1], &tmp, &mut d);
            }
            let target = if left { &mut traj.d_minus } else { &mut traj.d_plus };
            target[k * n..(k + 1) * n].copy_from_slice(&d);
        }
    }
    Ok(traj)
}

/// `Phi_t(u, y0) = (theta_t u, phi(t, y0, u))`.
pub fn semiflow_step(sys: &DelaySystem, u: &ControlSignal, y0: &M2State, t: f64) -> Result<(ControlSignal, M2State)> {
    if t < 0.0 {
        return Err(Error::InvalidArgument("semiflow time must be nonnegative".into()));
    }
    if t == 0.0 {
        return Ok((u.clone(), y0.clone()));
    }
    let traj = solve(sys, y0, u, t, sys.default_step())?;
    Ok((u.shift(t)?, traj.final_state()))
}

/// Homogeneous semiflow `Phi0_t(u, y) = (theta_t u, T(t) y)`.
pub fn homogeneous_step(sys: &DelaySystem, u: &ControlSignal, y0: &M2State, t: f64) -> Result<(ControlSignal, M2State)> {
    if t == 0.0 {
        return Ok((u.clone(), y0.clone()));
    }
    let traj = solve_homogeneous(sys, y0, t, sys.default_step())?;
    Ok((u.shift(t)?, traj.final_state()))
}

/// `phi(t, y0, u) = phi(t, y0, 0) + phi(t, 0, u)`: returns the two parts.
pub fn affine_split(sys: &DelaySystem, y0: &M2State, u: &ControlSignal, t: f64) -> Result<(M2State, M2State)> {
    if t == 0.0 {
        return Ok((y0.clone(), M2State::zero_for(sys)));
    }
    let step = sys.default_step();
    let hom = solve_homogeneous(sys, y0, t, step)?.final_state();
    let forced = solve(sys, &M2State::zero_for(sys), u, t, step)?.final_state();
    Ok((hom, forced))
}

/// Recovers the initial history on `[-h, tau - h]` (and the head) from a homogeneous
/// trajectory on `[0, tau]`, `tau <= h - h_{p-1}`, by solving the equation for the
/// oldest delayed term: `f(t - h) = Ap^-1 [x'(t) - sum_{i<p} Ai x(t - hi)]`.
///
/// Samples right of `tau - h` are taken from the trajectory's own history, i.e. from the
/// state reached at time `tau`.
pub fn reconstruct_initial(sys: &DelaySystem, traj: &Trajectory, tau: f64) -> Result<M2State> {
    if !sys.validate().injective() {
        return Err(Error::SingularAp);
    }
    let p = sys.p();
    let window = sys.h() - sys.delay(p - 1);
    if tau <= 0.0 || tau > window + 1e-12 || tau > traj.t_end() + 1e-12 {
        return Err(Error::InvalidArgument(format!("tau must lie in (0, min(h - h_(p-1), T)] = (0, {}]", window.min(traj.t_end()))));
    }
    let ap_inv = sys.a()[p].clone().try_inverse().ok_or(Error::SingularAp)?;
    let (n, h, ns) = (sys.n(), sys.h(), sys.n_seg());
    let mut samples = vec![0.0; n * (ns + 1)];
    for k in 0..=ns {
        let s = -h + k as f64 * h / ns as f64;
        let t = s + h;
        let value = if t <= tau + 1e-12 * h {
            let mut rhs = DVector::from_vec(traj.derivative(t));
            for i in 0..p {
                let xi = DVector::from_vec(traj.eval(t - sys.delay(i)));
                rhs -= &sys.a()[i] * xi;
            }
            (&ap_inv * rhs).iter().copied().collect()
        } else {
            traj.eval(s)
        };
        samples[k * n..(k + 1) * n].copy_from_slice(&value);
    }
    M2State::from_flat(traj.node(0).to_vec(), samples, h, ns)
}

/// Serializable trajectory summary.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectorySummary {
    pub t_end: f64,
    pub step: f64,
    pub sup_norm: f64,
    pub final_head: Vec<f64>,
}

impl From<&Trajectory> for TrajectorySummary {
    fn from(t: &Trajectory) -> Self {
        Self { t_end: t.t_end(), step: t.step, sup_norm: t.sup_norm(), final_head: t.node(t.steps).to_vec() }
    }
}
