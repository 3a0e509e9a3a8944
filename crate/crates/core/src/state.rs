//! Elements of `M2 = R^n x L2([-h, 0], R^n)`.
//!
//! The history segment is stored as `n_seg + 1` samples on the uniform grid
//! `s_k = -h + k h / n_seg`. Norms and inner products use the trapezoid rule on these
//! samples. When the integrator reads a segment between grid points it uses the local
//! cubic through the four nearest samples (see [`M2State::segment_at`]).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system::DelaySystem;

#[derive(Debug, Clone, PartialEq)]
pub struct M2State {
    n: usize,
    h: f64,
    n_seg: usize,
    head: Vec<f64>,
    /// Row-major: sample `k` occupies `samples[k * n..(k + 1) * n]`.
    samples: Vec<f64>,
}

impl M2State {
    pub fn zeros(n: usize, h: f64, n_seg: usize) -> Self {
        Self { n, h, n_seg, head: vec![0.0; n], samples: vec![0.0; n * (n_seg + 1)] }
    }

    /// Zero state on the segment grid of `sys`.
    pub fn zero_for(sys: &DelaySystem) -> Self {
        Self::zeros(sys.n(), sys.h(), sys.n_seg())
    }

    /// Builds a state from a head vector and flat row-major samples.
    pub fn from_flat(head: Vec<f64>, samples: Vec<f64>, h: f64, n_seg: usize) -> Result<Self> {
        let n = head.len();
        if samples.len() != n * (n_seg + 1) {
            return Err(Error::Dimension(format!(
                "expected {} segment values, got {}",
                n * (n_seg + 1),
                samples.len()
            )));
        }
        if !(h > 0.0) {
            return Err(Error::InvalidArgument("segment length must be positive".into()));
        }
        Ok(Self { n, h, n_seg, head, samples })
    }

    /// Builds a state from per-sample vectors.
    pub fn from_samples(head: Vec<f64>, segment: &[Vec<f64>], h: f64) -> Result<Self> {
        if segment.len() < 5 {
            return Err(Error::Dimension("a segment needs at least 5 samples".into()));
        }
        let n = head.len();
        if segment.iter().any(|v| v.len() != n) {
            return Err(Error::Dimension("segment samples must have the head's dimension".into()));
        }
        let samples = segment.iter().flatten().copied().collect();
        Self::from_flat(head, samples, h, segment.len() - 1)
    }

    /// Samples `f` on the segment grid of `sys`.
    pub fn from_fn(sys: &DelaySystem, head: Vec<f64>, f: impl Fn(f64) -> Vec<f64>) -> Self {
        let (n, h, n_seg) = (sys.n(), sys.h(), sys.n_seg());
        assert_eq!(head.len(), n);
        let mut samples = Vec::with_capacity(n * (n_seg + 1));
        for k in 0..=n_seg {
            let v = f(-h + k as f64 * h / n_seg as f64);
            assert_eq!(v.len(), n);
            samples.extend_from_slice(&v);
        }
        Self { n, h, n_seg, head, samples }
    }

    /// State with head `v` and the constant history `v`: the equilibrium shape.
    pub fn constant(sys: &DelaySystem, v: &[f64]) -> Self {
        Self::from_fn(sys, v.to_vec(), |_| v.to_vec())
    }

    /// Continuous random state: a few random Fourier modes on `[-h, 0]` with `f(0) = r`.
    pub fn random_smooth<R: rand::Rng>(sys: &DelaySystem, rng: &mut R, scale: f64) -> Self {
        let n = sys.n();
        let h = sys.h();
        let coef: Vec<[f64; 4]> = (0..n)
            .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        let f = |s: f64| -> Vec<f64> {
            let w = std::f64::consts::PI * s / h;
            coef.iter().map(|c| scale * (c[0] + c[1] * w.sin() + c[2] * (2.0 * w).cos() + c[3] * (3.0 * w).sin())).collect()
        };
        let head = f(0.0);
        Self::from_fn(sys, head, f)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_seg(&self) -> usize {
        self.n_seg
    }

    pub fn seg_dt(&self) -> f64 {
        self.h / self.n_seg as f64
    }

    pub fn head(&self) -> &[f64] {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut [f64] {
        &mut self.head
    }

    /// Sample `k` of the segment, located at `s = -h + k * seg_dt`.
    pub fn sample(&self, k: usize) -> &[f64] {
        &self.samples[k * self.n..(k + 1) * self.n]
    }

    pub fn samples_flat(&self) -> &[f64] {
        &self.samples
    }

    pub fn samples_flat_mut(&mut self) -> &mut [f64] {
        &mut self.samples
    }

    pub fn segment(&self) -> Vec<Vec<f64>> {
        self.samples.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    /// Grid point of sample `k`.
    pub fn grid_point(&self, k: usize) -> f64 {
        -self.h + k as f64 * self.seg_dt()
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.n == other.n && self.n_seg == other.n_seg && (self.h - other.h).abs() <= 1e-12 * self.h
    }

    pub fn check_grid(&self, other: &Self) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "(n={}, h={}, n_seg={}) vs (n={}, h={}, n_seg={})",
                self.n, self.h, self.n_seg, other.n, other.h, other.n_seg
            )))
        }
    }

    pub fn compatible_with(&self, sys: &DelaySystem) -> Result<()> {
        if self.n == sys.n() && self.n_seg == sys.n_seg() && (self.h - sys.h()).abs() <= 1e-12 * sys.h() {
            Ok(())
        } else {
            Err(Error::GridMismatch("state grid differs from the system's segment grid".into()))
        }
    }

    /// `sum_k w_k |f_k|^2` with trapezoid weights: the segment part of the squared norm.
    pub fn segment_norm_sq(&self) -> f64 {
        self.trapezoid(|k| {
            let v = self.sample(k);
            v.iter().map(|x| x * x).sum()
        })
    }

    pub fn norm_sq(&self) -> f64 {
        self.head.iter().map(|x| x * x).sum::<f64>() + self.segment_norm_sq()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Trapezoid inner product; panics on grid mismatch.
    pub fn dot(&self, other: &Self) -> f64 {
        assert!(self.same_grid(other), "grid mismatch in inner product");
        let head: f64 = self.head.iter().zip(&other.head).map(|(a, b)| a * b).sum();
        head + self.trapezoid(|k| self.sample(k).iter().zip(other.sample(k)).map(|(a, b)| a * b).sum())
    }

    fn trapezoid(&self, g: impl Fn(usize) -> f64) -> f64 {
        let mut acc = 0.5 * (g(0) + g(self.n_seg));
        for k in 1..self.n_seg {
            acc += g(k);
        }
        acc * self.seg_dt()
    }

    pub fn is_finite(&self) -> bool {
        self.head.iter().chain(&self.samples).all(|v| v.is_finite())
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.scale_mut(c);
        out
    }

    pub fn scale_mut(&mut self, c: f64) {
        self.head.iter_mut().chain(self.samples.iter_mut()).for_each(|v| *v *= c);
    }

    /// `self += c * other`.
    pub fn axpy(&mut self, c: f64, other: &Self) {
        assert!(self.same_grid(other), "grid mismatch in axpy");
        for (a, b) in self.head.iter_mut().zip(&other.head) {
            *a += c * b;
        }
        for (a, b) in self.samples.iter_mut().zip(&other.samples) {
            *a += c * b;
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Segment value at `s in [-h, 0]` from the local cubic through the nearest four samples.
    /// Exact at grid points and for cubic data.
    pub fn segment_at(&self, s: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.segment_at_into(s, &mut out);
        out
    }

    pub fn segment_at_into(&self, s: f64, out: &mut [f64]) {
        let (first, w) = self.stencil(s);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, wj) in w.iter().enumerate() {
            if *wj == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.sample(first + j)) {
                *o += wj * v;
            }
        }
    }

    /// Sample indices `first..first + 4` and weights used by [`Self::segment_at`] at `s`.
    pub fn stencil(&self, s: f64) -> (usize, [f64; 4]) {
        stencil(s, self.h, self.n_seg)
    }

    /// Piecewise-linear reading of the segment at `s`.
    pub fn segment_linear_at(&self, s: f64) -> Vec<f64> {
        let pos = ((s + self.h) / self.seg_dt()).clamp(0.0, self.n_seg as f64);
        let k = (pos.floor() as usize).min(self.n_seg - 1);
        let t = pos - k as f64;
        self.sample(k).iter().zip(self.sample(k + 1)).map(|(a, b)| (1.0 - t) * a + t * b).collect()
    }

    pub fn to_json(&self) -> StateJson {
        StateJson { head: self.head.clone(), segment: self.segment() }
    }

    pub fn from_json(json: &StateJson, h: f64) -> Result<Self> {
        Self::from_samples(json.head.clone(), &json.segment, h)
    }
}

/// JSON form of a state: `{head, segment}` with one array per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateJson {
    pub head: Vec<f64>,
    pub segment: Vec<Vec<f64>>,
}

/// Timestamped snapshot `{t, head, segment}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotJson {
    pub t: f64,
    pub head: Vec<f64>,
    pub segment: Vec<Vec<f64>>,
}

/// `sqrt(|head_a - head_b|^2 + int |f_a - f_b|^2)` on a common grid.
/// Cubic reading stencil on the uniform grid of `n_seg` cells over `[-h, 0]`.
pub fn stencil(s: f64, h: f64, n_seg: usize) -> (usize, [f64; 4]) {
    let pos = (s + h) / (h / n_seg as f64);
    let nearest = pos.round();
    if (pos - nearest).abs() < 1e-9 && nearest >= 0.0 && nearest <= n_seg as f64 {
        let k = nearest as usize;
        let first = k.min(n_seg - 3);
        let mut w = [0.0; 4];
        w[k - first] = 1.0;
        return (first, w);
    }
    let cell = (pos.floor() as isize).clamp(0, n_seg as isize - 1);
    let first = (cell - 1).clamp(0, n_seg as isize - 3) as usize;
    let x = pos - first as f64;
    // Lagrange weights on the nodes 0, 1, 2, 3 (relative to `first`).
    let w = [
        -(x - 1.0) * (x - 2.0) * (x - 3.0) / 6.0,
        x * (x - 2.0) * (x - 3.0) / 2.0,
        -x * (x - 1.0) * (x - 3.0) / 2.0,
        x * (x - 1.0) * (x - 2.0) / 6.0,
    ];
    (first, w)
}

pub fn m2_distance(a: &M2State, b: &M2State) -> Result<f64> {
    a.check_grid(b)?;
    Ok(a.sub(b).norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn distance_examples() {
        let (h, ns) = (1.0, 16);
        let a = M2State::from_flat(vec![0.3], (0..=ns).map(|k| k as f64).collect(), h, ns).unwrap();
        assert_eq!(m2_distance(&a, &a).unwrap(), 0.0);
        let b = M2State::from_flat(vec![0.3 + 2.5], a.samples_flat().to_vec(), h, ns).unwrap();
        assert!((m2_distance(&a, &b).unwrap() - 2.5).abs() < 1e-15);
        let one = M2State::from_flat(vec![0.0], vec![1.0; ns + 1], h, ns).unwrap();
        let zero = M2State::zeros(1, h, ns);
        assert!((m2_distance(&one, &zero).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let a = M2State::zeros(1, 1.0, 16);
        let b = M2State::zeros(1, 1.0, 32);
        assert!(matches!(m2_distance(&a, &b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn zero_norm_iff_zero_state() {
        let mut a = M2State::zeros(2, 1.0, 8);
        assert_eq!(a.norm(), 0.0);
        a.samples_flat_mut()[17] = 1e-3;
        assert!(a.norm() > 0.0);
    }

    #[test]
    fn cubic_reading_reproduces_cubics_and_samples() {
        let ns = 10;
        let f = |s: f64| 1.0 + 2.0 * s - s * s + 0.5 * s * s * s;
        let samples = (0..=ns).map(|k| f(-2.0 + 2.0 * k as f64 / ns as f64)).collect();
        let st = M2State::from_flat(vec![0.0], samples, 2.0, ns).unwrap();
        for &s in &[-2.0, -1.97, -1.3, -0.61, -0.05, 0.0] {
            assert!((st.segment_at(s)[0] - f(s)).abs() < 1e-12, "s = {s}");
        }
        assert_eq!(st.segment_at(-1.0)[0], st.sample(5)[0]);
    }

    fn state(n: usize, ns: usize) -> impl Strategy<Value = M2State> {
        (prop::collection::vec(-5.0..5.0f64, n), prop::collection::vec(-5.0..5.0f64, n * (ns + 1)))
            .prop_map(move |(h, s)| M2State::from_flat(h, s, 1.5, ns).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn triangle_inequality((a, b, c) in (state(2, 8), state(2, 8), state(2, 8))) {
            let ab = m2_distance(&a, &b).unwrap();
            let bc = m2_distance(&b, &c).unwrap();
            let ac = m2_distance(&a, &c).unwrap();
            prop_assert!(ac <= ab + bc + 1e-12);
            prop_assert!((ab - m2_distance(&b, &a).unwrap()).abs() <= 1e-15);
        }
    }
}
