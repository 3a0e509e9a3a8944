//! Admissible controls: the polytope `Omega`, piecewise-constant control signals, and the
//! weak-* compatible metric on control functions.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for polytope membership.
pub const OMEGA_TOL: f64 = 1e-12;

/// Compact convex polytope given by its vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    vertices: Vec<Vec<f64>>,
    dim: usize,
}

impl Polytope {
    pub fn new(vertices: Vec<Vec<f64>>) -> Result<Self> {
        let dim = vertices.first().map(Vec::len).ok_or_else(|| Error::InvalidSystem("omega has no vertices".into()))?;
        if dim == 0 || vertices.iter().any(|v| v.len() != dim) {
            return Err(Error::Dimension("omega vertices must share a positive dimension".into()));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSystem("omega vertices must be finite".into()));
        }
        Ok(Self { vertices, dim })
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn scale(&self) -> f64 {
        self.vertices.iter().flatten().fold(1.0f64, |a, v| a.max(v.abs()))
    }

    /// Euclidean distance from `x` to the convex hull (Wolfe's minimum-norm-point method).
    pub fn distance(&self, x: &[f64]) -> f64 {
        let pts: Vec<DVector<f64>> = self
            .vertices
            .iter()
            .map(|v| DVector::from_iterator(self.dim, v.iter().zip(x).map(|(a, b)| a - b)))
            .collect();
        min_norm_point(&pts).norm()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim && self.distance(x) <= OMEGA_TOL * self.scale()
    }

    /// Interval bounds when `m = 1`.
    pub fn interval(&self) -> Option<(f64, f64)> {
        (self.dim == 1).then(|| {
            let lo = self.vertices.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
            let hi = self.vertices.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        })
    }
}

/// Minimum-norm point of the convex hull of `pts`.
fn min_norm_point(pts: &[DVector<f64>]) -> DVector<f64> {
    let scale = pts.iter().map(|p| p.norm_squared()).fold(0.0, f64::max).max(1e-300);
    let start = (0..pts.len())
        .min_by(|&a, &b| pts[a].norm_squared().total_cmp(&pts[b].norm_squared()))
        .expect("non-empty");
    let mut active = vec![start];
    let mut weights = vec![1.0];
    let mut w = pts[start].clone();
    for _ in 0..(50 * pts.len() + 50) {
        let (j, best) = (0..pts.len())
            .map(|j| (j, w.dot(&pts[j])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        if w.norm_squared() - best <= 1e-15 * scale || active.contains(&j) {
            break;
        }
        active.push(j);
        weights.push(0.0);
        loop {
            let Some(lambda) = affine_min_norm(pts, &active) else { break };
            if lambda.iter().all(|&l| l > 1e-15) {
                weights = lambda;
                break;
            }
            let mut theta = 1.0f64;
            for (mu, l) in weights.iter().zip(&lambda) {
                if *l <= 1e-15 && mu - l > 0.0 {
                    theta = theta.min(mu / (mu - l));
                }
            }
            for (mu, l) in weights.iter_mut().zip(&lambda) {
                *mu += theta * (l - *mu);
            }
            let keep: Vec<bool> = weights.iter().map(|&mu| mu > 1e-15).collect();
            active = active.iter().zip(&keep).filter(|(_, k)| **k).map(|(a, _)| *a).collect();
            weights = weights.iter().zip(&keep).filter(|(_, k)| **k).map(|(a, _)| *a).collect();
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|mu| *mu /= total);
            if active.len() <= 1 {
                break;
            }
        }
        w = active.iter().zip(&weights).fold(DVector::zeros(pts[0].len()), |acc, (&i, &mu)| acc + &pts[i] * mu);
    }
    w
}

/// Weights of the minimum-norm point of the affine hull of `pts[active]`.
fn affine_min_norm(pts: &[DVector<f64>], active: &[usize]) -> Option<Vec<f64>> {
    let k = active.len();
    let mut kkt = DMatrix::zeros(k + 1, k + 1);
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate() {
            kkt[(a, b)] = pts[i].dot(&pts[j]);
        }
        kkt[(a, k)] = 1.0;
        kkt[(k, a)] = 1.0;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let sol = kkt.lu().solve(&rhs)?;
    sol.iter().all(|v| v.is_finite()).then(|| sol.iter().take(k).copied().collect())
}

/// Piecewise-constant control on a uniform grid of cells `[t_start + j dt, t_start + (j+1) dt)`.
///
/// Outside its window the signal is `0` before `t_start` and holds its last value after
/// `t_end`. The window start is stored as an integer multiple of `dt`, so shifts by
/// multiples of `dt` compose exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlSignal {
    start_index: i64,
    dt: f64,
    m: usize,
    values: Vec<Vec<f64>>,
}

fn as_multiple(x: f64, dt: f64) -> Option<i64> {
    let k = (x / dt).round();
    ((x - k * dt).abs() <= 1e-9 * dt.max(x.abs())).then_some(k as i64)
}

impl ControlSignal {
    pub fn new(t_start: f64, dt: f64, values: Vec<Vec<f64>>) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument("control dt must be positive".into()));
        }
        let m = values.first().map(Vec::len).ok_or_else(|| Error::InvalidArgument("control needs at least one value".into()))?;
        if values.iter().any(|v| v.len() != m) {
            return Err(Error::Dimension("control values must share a dimension".into()));
        }
        let start_index = as_multiple(t_start, dt)
            .ok_or_else(|| Error::MisalignedStep(format!("control start {t_start} is not a multiple of dt = {dt}")))?;
        Ok(Self { start_index, dt, m, values })
    }

    /// The zero control (one zero cell starting at `t = 0`, held forever).
    pub fn zero(m: usize, dt: f64) -> Self {
        Self { start_index: 0, dt, m, values: vec![vec![0.0; m]] }
    }

    /// `value` on `[t_start, infinity)`, zero before.
    pub fn constant(value: &[f64], t_start: f64, dt: f64) -> Result<Self> {
        Self::new(t_start, dt, vec![value.to_vec()])
    }

    /// Random bang-bang control on `[t_start, t_end)` switching between polytope vertices.
    /// Each cell switches to a fresh random vertex with probability `dt / mean_dwell`.
    pub fn random_bang_bang<R: Rng>(
        rng: &mut R,
        omega: &Polytope,
        t_start: f64,
        t_end: f64,
        dt: f64,
        mean_dwell: f64,
    ) -> Result<Self> {
        let cells = ((t_end - t_start) / dt).round().max(1.0) as usize;
        let verts = omega.vertices();
        let mut current = rng.gen_range(0..verts.len());
        let mut values = Vec::with_capacity(cells);
        for _ in 0..cells {
            if rng.gen::<f64>() < dt / mean_dwell {
                current = rng.gen_range(0..verts.len());
            }
            values.push(verts[current].clone());
        }
        Self::new(t_start, dt, values)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn start_index(&self) -> i64 {
        self.start_index
    }

    pub fn t_start(&self) -> f64 {
        self.start_index as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        (self.start_index + self.values.len() as i64) as f64 * self.dt
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Value on the absolute cell `[k dt, (k+1) dt)`.
    pub fn cell_value(&self, k: i64) -> &[f64] {
        static ZEROS: [f64; 64] = [0.0; 64];
        let j = k - self.start_index;
        if j < 0 {
            assert!(self.m <= ZEROS.len());
            &ZEROS[..self.m]
        } else {
            &self.values[(j as usize).min(self.values.len() - 1)]
        }
    }

    /// Right-continuous evaluation.
    pub fn value_at(&self, t: f64) -> Vec<f64> {
        let k = (t / self.dt + 1e-9).floor() as i64;
        self.cell_value(k).to_vec()
    }

    /// `theta_s u = u(s + .)`.
    pub fn shift(&self, s: f64) -> Result<Self> {
        if let Some(k) = as_multiple(s, self.dt) {
            return Ok(Self { start_index: self.start_index - k, ..self.clone() });
        }
        for factor in 2..=1024usize {
            if as_multiple(s, self.dt / factor as f64).is_some() {
                return self.refined(factor).shift(s);
            }
        }
        Err(Error::MisalignedStep(format!("shift {s} is not commensurate with dt = {}", self.dt)))
    }

    /// The signal cut down to the cells meeting `[t0, t1)`: equal to `self` there, zero before.
    pub fn restricted(&self, t0: f64, t1: f64) -> Self {
        let k0 = ((t0 / self.dt) + 1e-9).floor() as i64;
        let k1 = (((t1 / self.dt) - 1e-9).ceil() as i64).max(k0 + 1);
        let values = (k0..k1).map(|k| self.cell_value(k).to_vec()).collect();
        Self { start_index: k0, dt: self.dt, m: self.m, values }
    }

    /// Same function on a grid `factor` times finer.
    pub fn refined(&self, factor: usize) -> Self {
        let values = self.values.iter().flat_map(|v| std::iter::repeat_n(v.clone(), factor)).collect();
        Self { start_index: self.start_index * factor as i64, dt: self.dt / factor as f64, m: self.m, values }
    }

    /// Re-expresses the signal on step `dt`, which must divide the current step.
    pub fn on_grid(&self, dt: f64) -> Result<Self> {
        let ratio = self.dt / dt;
        let f = ratio.round();
        if f < 1.0 || (ratio - f).abs() > 1e-9 * ratio {
            return Err(Error::MisalignedStep(format!("{dt} does not divide the control step {}", self.dt)));
        }
        Ok(if f == 1.0 { Self { dt, ..self.clone() } } else { self.refined(f as usize) })
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        let values = self.values.iter().map(|v| v.iter().map(|x| alpha * x).collect()).collect();
        Self { values, ..self.clone() }
    }

    /// Extends the explicit window to cover `[t0, t1)` without changing the function.
    pub fn with_window(&self, t0: f64, t1: f64) -> Self {
        let k0 = ((t0 / self.dt) + 1e-9).floor() as i64;
        let k1 = ((t1 / self.dt) - 1e-9).ceil() as i64;
        let lo = k0.min(self.start_index);
        let hi = k1.max(self.start_index + self.values.len() as i64);
        let values = (lo..hi).map(|k| self.cell_value(k).to_vec()).collect();
        Self { start_index: lo, dt: self.dt, m: self.m, values }
    }

    /// Checks every explicit value against `Omega`. The zero past before `t_start` is a
    /// convention of the signal and is not checked.
    pub fn check_admissible(&self, omega: &Polytope) -> Result<()> {
        if omega.dim() != self.m {
            return Err(Error::Dimension(format!("control dimension {} vs omega dimension {}", self.m, omega.dim())));
        }
        for (index, v) in self.values.iter().enumerate() {
            if !omega.contains(v) {
                return Err(Error::ControlOutsideOmega { index, value: v.clone() });
            }
        }
        Ok(())
    }

    /// `int_a^b u_c(t) dt`, exact.
    pub fn integral(&self, c: usize, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        let (ts, te) = (self.t_start(), self.t_end());
        let mut acc = 0.0;
        let (lo, hi) = (a.max(ts), b.min(te));
        if hi > lo {
            let j0 = (((lo - ts) / self.dt).floor() as usize).min(self.values.len() - 1);
            let j1 = (((hi - ts) / self.dt).ceil() as usize).min(self.values.len());
            for j in j0..j1 {
                let c0 = ts + j as f64 * self.dt;
                let overlap = (c0 + self.dt).min(hi) - c0.max(lo);
                if overlap > 0.0 {
                    acc += overlap * self.values[j][c];
                }
            }
        }
        if b > te {
            acc += (b - a.max(te)) * self.values[self.values.len() - 1][c];
        }
        acc
    }

    pub fn to_json(&self) -> ControlJson {
        ControlJson { t_start: self.t_start(), dt: self.dt, values: self.values.clone() }
    }

    pub fn from_json(json: &ControlJson) -> Result<Self> {
        Self::new(json.t_start, json.dt, json.values.clone())
    }
}

/// JSON descriptor of a control signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlJson {
    pub t_start: f64,
    pub dt: f64,
    pub values: Vec<Vec<f64>>,
}

/// Test functions for the control metric: indicators of dyadic intervals times unit vectors.
///
/// Enumeration order: level `j = 0, 1, ..`; within a level the intervals
/// `[l 2^-j, (l+1) 2^-j)`, `l = -4^j .. 4^j - 1`, cover `[-2^j, 2^j]` left to right; for each
/// interval the coordinates `c = 0 .. m-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricBasis {
    terms: Vec<(f64, f64, usize)>,
}

impl MetricBasis {
    pub const DEFAULT_TERMS: usize = 16;

    pub fn new(m: usize, k_terms: usize) -> Self {
        let mut terms = Vec::with_capacity(k_terms);
        let mut level = 0u32;
        'outer: loop {
            let width = 0.5f64.powi(level as i32);
            let count = 4i64.pow(level);
            for l in -count..count {
                for c in 0..m {
                    if terms.len() == k_terms {
                        break 'outer;
                    }
                    terms.push((l as f64 * width, (l + 1) as f64 * width, c));
                }
            }
            level += 1;
        }
        Self { terms }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// `(a, b, c)`: `z_k` is the indicator of `[a, b)` in coordinate `c`.
    pub fn term(&self, k: usize) -> (f64, f64, usize) {
        self.terms[k]
    }

    /// `L1` norm of `z_k`.
    pub fn l1_norm(&self, k: usize) -> f64 {
        let (a, b, _) = self.terms[k];
        b - a
    }
}

/// Truncated weak-* metric `sum_k 2^-k |I_k| / (1 + |I_k|)`, `I_k = int (u - v)^T z_k`.
pub fn metric_u(u: &ControlSignal, v: &ControlSignal, basis: &MetricBasis) -> f64 {
    let mut acc = 0.0;
    let mut weight = 0.5;
    for &(a, b, c) in &basis.terms {
        let d = (u.integral(c, a, b) - v.integral(c, a, b)).abs();
        acc += weight * d / (1.0 + d);
        weight *= 0.5;
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polytope_membership() {
        let seg = Polytope::new(vec![vec![-1.0], vec![1.0]]).unwrap();
        assert!(seg.contains(&[0.0]));
        assert!(seg.contains(&[1.0]));
        assert!(!seg.contains(&[1.0 + 1e-9]));
        assert!((seg.distance(&[3.0]) - 2.0).abs() < 1e-14);
        let tri = Polytope::new(vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(tri.contains(&[0.25, 0.25]));
        assert!(tri.contains(&[0.5, 0.5]));
        assert!(!tri.contains(&[0.6, 0.6]));
        assert!((tri.distance(&[1.0, 1.0]) - 0.5f64.sqrt()).abs() < 1e-12);
        let square = Polytope::new(vec![vec![-1.0, -1.0], vec![1.0, -1.0], vec![1.0, 1.0], vec![-1.0, 1.0]]).unwrap();
        assert!(square.contains(&[0.0, 0.0]));
        assert!((square.distance(&[2.0, 0.5]) - 1.0).abs() < 1e-12);
        let point = Polytope::new(vec![vec![0.0]]).unwrap();
        assert!(point.contains(&[0.0]));
        assert!(!point.contains(&[1e-6]));
    }

    #[test]
    fn signal_extension_and_shift() {
        let u = ControlSignal::new(0.0, 0.5, vec![vec![1.0], vec![-1.0]]).unwrap();
        assert_eq!(u.value_at(-0.1), vec![0.0]);
        assert_eq!(u.value_at(0.2), vec![1.0]);
        assert_eq!(u.value_at(0.5), vec![-1.0]);
        assert_eq!(u.value_at(7.0), vec![-1.0]);
        let s = u.shift(0.5).unwrap();
        assert_eq!(s.value_at(0.0), vec![-1.0]);
        assert_eq!(s.value_at(-0.25), vec![1.0]);
        let fine = u.shift(0.25).unwrap();
        assert_eq!(fine.value_at(0.0), vec![1.0]);
        assert_eq!(fine.value_at(0.25), vec![-1.0]);
        assert!(u.shift(0.1234567).is_err());
    }

    #[test]
    fn shift_composes_exactly() {
        let u = ControlSignal::new(-1.5, 0.25, (0..20).map(|i| vec![(i as f64).sin()]).collect()).unwrap();
        for (a, b) in [(3i64, 5i64), (-2, 7), (11, -11), (0, 4)] {
            let (s1, s2) = (a as f64 * 0.25, b as f64 * 0.25);
            assert_eq!(u.shift(s1).unwrap().shift(s2).unwrap(), u.shift(s1 + s2).unwrap());
        }
    }

    #[test]
    fn restriction_keeps_window() {
        let u = ControlSignal::new(-1.5, 0.25, (0..20).map(|i| vec![i as f64]).collect()).unwrap();
        let r = u.restricted(-0.6, 0.3);
        assert_eq!(r.t_start(), -0.75);
        for k in -3..2 {
            assert_eq!(r.cell_value(k), u.cell_value(k));
        }
        assert_eq!(r.cell_value(-4), &[0.0]);
    }

    #[test]
    fn exact_integrals() {
        let u = ControlSignal::new(0.0, 0.5, vec![vec![1.0], vec![-1.0]]).unwrap();
        assert!((u.integral(0, -1.0, 0.25) - 0.25).abs() < 1e-15);
        assert!((u.integral(0, 0.0, 1.0) - 0.0).abs() < 1e-15);
        assert!((u.integral(0, 0.25, 3.0) - (0.25 - 0.5 - 2.0)).abs() < 1e-15);
    }

    #[test]
    fn basis_enumeration() {
        let b = MetricBasis::new(1, 12);
        assert_eq!(b.term(0), (-1.0, 0.0, 0));
        assert_eq!(b.term(1), (0.0, 1.0, 0));
        assert_eq!(b.term(2), (-2.0, -1.5, 0));
        assert_eq!(b.term(9), (1.5, 2.0, 0));
        assert_eq!(b.term(10), (-4.0, -3.75, 0));
        let b2 = MetricBasis::new(2, 4);
        assert_eq!(b2.term(1), (-1.0, 0.0, 1));
        assert!((0..b.len()).all(|k| b.l1_norm(k).is_finite()));
    }

    #[test]
    fn metric_examples() {
        let basis = MetricBasis::new(1, MetricBasis::DEFAULT_TERMS);
        let u = ControlSignal::new(0.0, 0.1, (0..30).map(|i| vec![(i as f64 * 0.7).cos()]).collect()).unwrap();
        let v = ControlSignal::constant(&[-1.0], 0.0, 0.1).unwrap();
        assert_eq!(metric_u(&u, &u, &basis), 0.0);
        let d = metric_u(&u, &v, &basis);
        assert!(d > 0.0 && d < 1.0);
        assert_eq!(d, metric_u(&v, &u, &basis));
    }

    #[test]
    fn admissibility() {
        let omega = Polytope::new(vec![vec![-1.0], vec![1.0]]).unwrap();
        let u = ControlSignal::new(0.0, 0.1, vec![vec![0.5], vec![1.5]]).unwrap();
        assert!(matches!(u.check_admissible(&omega), Err(Error::ControlOutsideOmega { index: 1, .. })));
        assert!(u.scaled(0.5).check_admissible(&omega).is_ok());
    }
}
