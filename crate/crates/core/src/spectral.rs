//! Characteristic roots and the spectral splitting of the homogeneous semigroup.
//!
//! Roots of `Delta(s) = det(sI - sum_i Ai e^(-hi s))` are seeded by Chebyshev collocation of
//! the generator on `[-h, 0]` and polished by Newton's method on `Delta` itself. Spectral
//! projections onto the unstable eigenspace are realized through the adjoint bilinear form,
//! which gives each unstable coordinate as an explicit linear functional on `M2`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::solve_homogeneous;
use crate::state::{M2State, StateJson};
use crate::system::DelaySystem;

pub type C64 = Complex64;

/// Roots closer than this after Newton are the same root.
pub const ROOT_MERGE_TOL: f64 = 1e-6;
pub const DEFAULT_AXIS_MARGIN: f64 = 1e-6;
pub const DEFAULT_NODES: usize = 48;
/// Collocation eigenvalues this far left of the strip are still refined.
const SEED_MARGIN: f64 = 0.5;

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// `M(s) = sI - sum_i Ai e^(-hi s)` (with `h0 = 0`).
pub fn char_matrix(sys: &DelaySystem, s: C64) -> DMatrix<C64> {
    let n = sys.n();
    let mut m = DMatrix::<C64>::identity(n, n) * s;
    for i in 0..=sys.p() {
        let e = (-s * sys.delay(i)).exp();
        m -= sys.a()[i].map(c) * e;
    }
    m
}

/// `d^k M / ds^k` for `k >= 1`.
pub fn char_matrix_derivative(sys: &DelaySystem, s: C64, k: usize) -> DMatrix<C64> {
    let n = sys.n();
    let mut m = if k == 1 { DMatrix::<C64>::identity(n, n) } else { DMatrix::zeros(n, n) };
    for i in 1..=sys.p() {
        let h = sys.delay(i);
        let e = (-s * h).exp() * (-h).powi(k as i32);
        m -= sys.a()[i].map(c) * e;
    }
    m
}

/// `Delta(s) = det M(s)`.
pub fn delta_eval(sys: &DelaySystem, s: C64) -> C64 {
    char_matrix(sys, s).determinant()
}

/// `Delta'(s) / Delta(s) = tr(M^-1 M')`, `None` at an exact root.
fn log_derivative(sys: &DelaySystem, s: C64) -> Option<C64> {
    let m = char_matrix(sys, s);
    let inv = m.try_inverse()?;
    let d = char_matrix_derivative(sys, s, 1);
    let t = (inv * d).trace();
    t.is_finite().then_some(t)
}

#[derive(Debug, Clone)]
pub struct Root {
    pub mu: C64,
    pub multiplicity: usize,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct Spectrum {
    pub roots: Vec<Root>,
    pub strip_bound: f64,
    pub discretization_order: usize,
    /// Dropped candidates and resolution warnings.
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RootJson {
    pub re: f64,
    pub im: f64,
    pub multiplicity: usize,
    pub residual: f64,
}

impl Spectrum {
    pub fn to_json(&self) -> Vec<RootJson> {
        self.roots
            .iter()
            .map(|r| RootJson { re: r.mu.re, im: r.mu.im, multiplicity: r.multiplicity, residual: r.residual })
            .collect()
    }

    pub fn rightmost(&self) -> Option<&Root> {
        self.roots.first()
    }

    pub fn unstable(&self) -> impl Iterator<Item = &Root> {
        self.roots.iter().filter(|r| r.mu.re > 0.0)
    }
}

/// Chebyshev points `cos(j pi / N)` and the differentiation matrix on `[-1, 1]`.
fn chebyshev(nn: usize) -> (Vec<f64>, DMatrix<f64>) {
    let x: Vec<f64> = (0..=nn).map(|j| (std::f64::consts::PI * j as f64 / nn as f64).cos()).collect();
    let cw = |j: usize| (if j == 0 || j == nn { 2.0 } else { 1.0 }) * if j % 2 == 0 { 1.0 } else { -1.0 };
    let mut d = DMatrix::zeros(nn + 1, nn + 1);
    for i in 0..=nn {
        for j in 0..=nn {
            if i != j {
                d[(i, j)] = cw(i) / cw(j) / (x[i] - x[j]);
            }
        }
    }
    for i in 0..=nn {
        let s: f64 = (0..=nn).filter(|&j| j != i).map(|j| d[(i, j)]).sum();
        d[(i, i)] = -s;
    }
    (x, d)
}

/// Barycentric Lagrange weights of every Chebyshev node at `x`.
fn barycentric(nodes: &[f64], x: f64) -> Vec<f64> {
    let nn = nodes.len() - 1;
    if let Some(k) = nodes.iter().position(|&v| (v - x).abs() < 1e-14) {
        let mut l = vec![0.0; nn + 1];
        l[k] = 1.0;
        return l;
    }
    let w: Vec<f64> = (0..=nn)
        .map(|j| (if j == 0 || j == nn { 0.5 } else { 1.0 }) * if j % 2 == 0 { 1.0 } else { -1.0 } / (x - nodes[j]))
        .collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}

/// Collocation matrix of the generator on `n_nodes` Chebyshev nodes over `[-h, 0]`.
pub fn collocation_matrix(sys: &DelaySystem, n_nodes: usize) -> DMatrix<f64> {
    let n = sys.n();
    let nn = n_nodes - 1;
    let h = sys.h();
    let (x, d) = chebyshev(nn);
    let size = n * (nn + 1);
    let mut g = DMatrix::zeros(size, size);
    // row block 0: phi'(0) = A0 phi(0) + sum Ai phi(-hi)
    for i in 0..=sys.p() {
        let xi = 1.0 - 2.0 * sys.delay(i) / h;
        let l = barycentric(&x, xi);
        for (j, lj) in l.iter().enumerate() {
            if *lj == 0.0 {
                continue;
            }
            for r in 0..n {
                for cc in 0..n {
                    g[(r, j * n + cc)] += lj * sys.a()[i][(r, cc)];
                }
            }
        }
    }
    let scale = 2.0 / h;
    for row in 1..=nn {
        for j in 0..=nn {
            let v = scale * d[(row, j)];
            for r in 0..n {
                g[(row * n + r, j * n + r)] = v;
            }
        }
    }
    g
}

fn newton(sys: &DelaySystem, seed: C64, mult: usize) -> Option<C64> {
    let mut s = seed;
    let scale = 1.0 + seed.norm();
    for _ in 0..100 {
        let ld = match log_derivative(sys, s) {
            Some(v) => v,
            None => return Some(s),
        };
        if ld.norm() == 0.0 {
            return None;
        }
        let step = c(mult as f64) / ld;
        s -= step;
        if !s.is_finite() || (s - seed).norm() > 0.5 * scale + 1.0 {
            return None;
        }
        if step.norm() < 1e-14 * (1.0 + s.norm()) {
            return Some(s);
        }
    }
    let res = delta_eval(sys, s).norm();
    (res < 1e-8 * (1.0 + s.norm()).powi(sys.n() as i32)).then_some(s)
}

/// Roots with `Re s >= sigma`, seeded by collocation on `n_nodes` nodes and polished on `Delta`.
pub fn compute_spectrum(sys: &DelaySystem, sigma: f64, n_nodes: usize) -> Result<Spectrum> {
    if n_nodes < 8 {
        return Err(Error::InvalidArgument(format!("at least 8 collocation nodes required, got {n_nodes}")));
    }
    let n = sys.n();
    let g = collocation_matrix(sys, n_nodes);
    let schur = nalgebra::linalg::Schur::try_new(g, 1e-14, 10_000)
        .ok_or_else(|| Error::InvalidArgument("eigenvalue iteration did not converge".into()))?;
    let mut eig: Vec<C64> = schur.complex_eigenvalues().iter().copied().filter(|z| z.re >= sigma - SEED_MARGIN).collect();
    eig.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    let mut diagnostics = Vec::new();

    // cluster seeds: a multiple root shows up as nearby collocation eigenvalues
    let mut clusters: Vec<Vec<C64>> = Vec::new();
    for z in eig.iter().copied().filter(|z| z.im >= -1e-12) {
        match clusters.iter_mut().find(|cl| cl.iter().any(|w| (w - z).norm() < 1e-4 * (1.0 + z.norm()))) {
            Some(cl) => cl.push(z),
            None => clusters.push(vec![z]),
        }
    }
    let mut found: Vec<Root> = Vec::new();
    for cl in clusters {
        let mult = cl.len();
        let centre = cl.iter().sum::<C64>() / c(mult as f64);
        let centre = if centre.im.abs() < 1e-8 { c(centre.re) } else { centre };
        let (refined, mult) = match newton(sys, centre, mult) {
            Some(s) => (s, mult),
            None => match newton(sys, centre, 1) {
                Some(s) => (s, 1),
                None => {
                    diagnostics.push(format!("Newton diverged from seed {:.6}{:+.6}i; dropped", centre.re, centre.im));
                    continue;
                }
            },
        };
        let refined = if refined.im.abs() < 1e-10 { c(refined.re) } else { refined };
        if refined.re < sigma {
            continue;
        }
        let residual = delta_eval(sys, refined).norm();
        if !(residual < 1e-8 * (1.0 + refined.norm()).powi(n as i32)) {
            diagnostics.push(format!("candidate {:.6}{:+.6}i has residual {residual:.2e}; dropped", refined.re, refined.im));
            continue;
        }
        let refined = if refined.im < 0.0 { refined.conj() } else { refined };
        if let Some(r) = found.iter_mut().find(|r| (r.mu - refined).norm() < ROOT_MERGE_TOL * (1.0 + refined.norm())) {
            // two seed groups reached the same root: keep the larger multiplicity estimate
            r.multiplicity = r.multiplicity.max(mult);
            continue;
        }
        found.push(Root { mu: refined, multiplicity: mult, residual });
    }
    let mut roots = Vec::new();
    for r in found {
        if r.mu.im != 0.0 {
            roots.push(Root { mu: r.mu.conj(), ..r.clone() });
        }
        roots.push(r);
    }
    roots.sort_by(|a, b| b.mu.re.total_cmp(&a.mu.re).then(b.mu.im.total_cmp(&a.mu.im)));

    // crude resolution check: roots in the strip have |s| bounded by the coefficient norms
    let radius: f64 = (0..=sys.p())
        .map(|i| sys.a()[i].norm() * (-sigma.min(0.0) * sys.delay(i)).exp())
        .sum::<f64>()
        + sigma.abs();
    if radius * sys.h() > 0.5 * n_nodes as f64 {
        diagnostics.push(format!(
            "strip radius {radius:.3} may be under-resolved by {n_nodes} nodes; increase the node count"
        ));
    }
    Ok(Spectrum { roots, strip_bound: sigma, discretization_order: n_nodes, diagnostics })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Hyperbolic,
    NonHyperbolic,
    Undecided,
}

/// Hyperbolic iff no computed root is within `axis_margin` of the imaginary axis, the
/// search strip reaches left of the margin band, and no root sits between one and two
/// margins from the axis.
pub fn check_hyperbolic(spec: &Spectrum, axis_margin: f64) -> Verdict {
    if spec.roots.iter().any(|r| r.mu.re.abs() < axis_margin) {
        return Verdict::NonHyperbolic;
    }
    if spec.strip_bound > -2.0 * axis_margin || spec.roots.iter().any(|r| r.mu.re.abs() < 2.0 * axis_margin) {
        return Verdict::Undecided;
    }
    Verdict::Hyperbolic
}

/// Right and left null vectors of `M(mu)` and the geometric multiplicity.
fn null_vectors(sys: &DelaySystem, mu: C64) -> (Vec<DVector<C64>>, Vec<DVector<C64>>) {
    let m = char_matrix(sys, mu);
    let n = sys.n();
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let smax = svd.singular_values.max().max(1.0);
    let mut right = Vec::new();
    let mut left = Vec::new();
    for k in 0..n {
        if svd.singular_values[k] < 1e-7 * smax {
            right.push(vt.row(k).adjoint());
            left.push(u.column(k).map(|z| z.conj()));
        }
    }
    if right.is_empty() {
        let k = svd.singular_values.imin();
        right.push(vt.row(k).adjoint());
        left.push(u.column(k).map(|z| z.conj()));
    }
    (right, left)
}

/// Jordan chain `v0, v1, ..` of a root with one-dimensional null space:
/// `sum_{j<=k} M^(j)(mu)/j! v_{k-j} = 0`.
fn jordan_chain(sys: &DelaySystem, mu: C64, v0: DVector<C64>, len: usize) -> Result<Vec<DVector<C64>>> {
    let m = char_matrix(sys, mu);
    let pinv = m
        .clone()
        .pseudo_inverse(1e-9)
        .map_err(|e| Error::Unsupported(format!("pseudo-inverse failed: {e}")))?;
    let mut chain = vec![v0];
    let mut fact = 1.0;
    let derivs: Vec<DMatrix<C64>> = (1..len).map(|j| char_matrix_derivative(sys, mu, j)).collect();
    for k in 1..len {
        let mut rhs = DVector::zeros(sys.n());
        fact = 1.0;
        for j in 1..=k {
            fact *= j as f64;
            rhs += &derivs[j - 1] * &chain[k - j] * c(1.0 / fact);
        }
        let next = -(&pinv * rhs);
        chain.push(next);
    }
    let _ = fact;
    Ok(chain)
}

/// Real states spanning the (generalized) eigenspace of `mu`, upper half-plane only
/// (a conjugate pair contributes real and imaginary parts).
fn eigen_states(sys: &DelaySystem, root: &Root) -> Result<Vec<M2State>> {
    let (right, _) = null_vectors(sys, root.mu);
    let g = right.len();
    let funcs: Vec<Vec<DVector<C64>>> = if g >= root.multiplicity {
        right.into_iter().take(root.multiplicity).map(|v| vec![v]).collect()
    } else if g == 1 {
        let chain = jordan_chain(sys, root.mu, right[0].clone(), root.multiplicity)?;
        (1..=root.multiplicity).map(|k| chain[..k].to_vec()).collect()
    } else {
        return Err(Error::Unsupported(format!(
            "root {} has multiplicity {} with {} independent eigenvectors",
            root.mu, root.multiplicity, g
        )));
    };
    let mut out = Vec::new();
    for chain in funcs {
        // phi(theta) = e^(mu theta) sum_j theta^j / j! v_{k-j}
        let eval = |th: f64| -> Vec<C64> {
            let k = chain.len() - 1;
            let mut acc = DVector::<C64>::zeros(sys.n());
            let mut pw = 1.0;
            for j in 0..=k {
                if j > 0 {
                    pw *= th / j as f64;
                }
                acc += &chain[k - j] * c(pw);
            }
            (acc * (root.mu * th).exp()).iter().copied().collect()
        };
        let re = M2State::from_fn(sys, eval(0.0).iter().map(|z| z.re).collect(), |s| eval(s).iter().map(|z| z.re).collect());
        out.push(re);
        if root.mu.im != 0.0 {
            let im = M2State::from_fn(sys, eval(0.0).iter().map(|z| z.im).collect(), |s| eval(s).iter().map(|z| z.im).collect());
            out.push(im);
        }
    }
    Ok(out)
}

/// A simple unstable root with its eigenvector and the functional giving its coordinate.
#[derive(Debug, Clone)]
pub struct Mode {
    pub mu: C64,
    pub v: DVector<C64>,
    /// `w / (w^T M'(mu) v)`, so that `c(y) = <psi, y>` with this normalization.
    pub w: DVector<C64>,
    head_weights: Vec<C64>,
    /// Weights on segment samples, row-major `(k, component)`.
    seg_weights: Vec<C64>,
}

impl Mode {
    /// Complex coordinate `c(y)` of `y` along `e^(mu theta) v`.
    pub fn coordinate(&self, y: &M2State) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (w, r) in self.head_weights.iter().zip(y.head()) {
            acc += w * r;
        }
        for (w, f) in self.seg_weights.iter().zip(y.samples_flat()) {
            acc += w * f;
        }
        acc
    }

    /// Eigenfunction `e^(mu theta) v` evaluated at `theta`, times `z`.
    fn eval(&self, z: C64, theta: f64) -> Vec<C64> {
        let e = z * (self.mu * theta).exp();
        self.v.iter().map(|vi| vi * e).collect()
    }
}

const GAUSS4: [(f64, f64); 4] = [
    (-0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
    (-0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.339_981_043_584_856_3, 0.652_145_154_862_546_1),
    (0.861_136_311_594_052_6, 0.347_854_845_137_453_9),
];

/// Interpolation weights used inside the projector quadrature.
///
/// Solutions driven by step-grid controls are only piecewise smooth, with kinks on the
/// integration grid. When that grid is every other sample, interpolate quadratically inside
/// each sample pair so no stencil straddles a kink; otherwise fall back to the cubic stencil.
fn quadrature_stencil(xi: f64, h: f64, ns: usize, paired: bool) -> (usize, [f64; 4]) {
    if !paired {
        return crate::state::stencil(xi, h, ns);
    }
    let pos = (xi + h) / (h / ns as f64);
    let first = ((pos / 2.0).floor() as usize * 2).min(ns - 2);
    let x = pos - first as f64;
    let w = [0.5 * (x - 1.0) * (x - 2.0), -x * (x - 2.0), 0.5 * x * (x - 1.0), 0.0];
    (first, w)
}

fn build_mode(sys: &DelaySystem, mu: C64) -> Result<Mode> {
    let (right, left) = null_vectors(sys, mu);
    if right.len() != 1 {
        return Err(Error::Unsupported(format!("unstable root {mu} is not simple")));
    }
    let v = right[0].clone();
    let w = left[0].clone();
    let denom = (w.transpose() * char_matrix_derivative(sys, mu, 1) * &v)[(0, 0)];
    if denom.norm() < 1e-10 {
        return Err(Error::Unsupported(format!("unstable root {mu} is not simple")));
    }
    let w = w / denom;
    let (n, ns, h) = (sys.n(), sys.n_seg(), sys.h());
    let dt = sys.seg_dt();
    let head_weights: Vec<C64> = w.iter().copied().collect();
    let mut seg_weights = vec![C64::new(0.0, 0.0); n * (ns + 1)];
    let paired = sys.default_step() > 1.5 * dt;
    for i in 1..=sys.p() {
        let hi = sys.delay(i);
        // w^T Ai as a row
        let wa: Vec<C64> = (0..n).map(|col| (0..n).map(|r| w[r] * sys.a()[i][(r, col)]).sum()).collect();
        let cells = (hi / dt).round() as usize;
        for cell in 0..cells {
            let a = -hi + cell as f64 * dt;
            for (x, wt) in GAUSS4 {
                let xi = a + 0.5 * dt * (x + 1.0);
                let kern = (-mu * (xi + hi)).exp() * (0.5 * dt * wt);
                let (first, st) = quadrature_stencil(xi, h, ns, paired);
                for (j, sj) in st.iter().enumerate() {
                    if *sj == 0.0 {
                        continue;
                    }
                    for col in 0..n {
                        seg_weights[(first + j) * n + col] += kern * wa[col] * sj;
                    }
                }
            }
        }
    }
    Ok(Mode { mu, v, w, head_weights, seg_weights })
}

/// `M2 = V+ (+) V-` with the projector onto `V+`.
#[derive(Debug, Clone)]
pub struct HyperbolicSplitting {
    /// One mode per unstable root in the closed upper half-plane.
    pub modes: Vec<Mode>,
    pub unstable_basis: Vec<M2State>,
    pub alpha_hat: f64,
    pub k_hat: f64,
    pub dim_plus: usize,
    pub h: f64,
    pub n_seg: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplittingJson {
    pub dim_plus: usize,
    pub alpha_hat: f64,
    #[serde(rename = "K_hat")]
    pub k_hat: f64,
    pub basis: Vec<StateJson>,
}

impl HyperbolicSplitting {
    /// Real coordinates of `pi+ y` in `unstable_basis`.
    pub fn coordinates(&self, y: &M2State) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim_plus);
        for m in &self.modes {
            let z = m.coordinate(y);
            if m.mu.im == 0.0 {
                out.push(z.re);
            } else {
                out.push(2.0 * z.re);
                out.push(-2.0 * z.im);
            }
        }
        out
    }

    /// State with the given real coordinates in `unstable_basis`.
    pub fn combine(&self, coords: &[f64]) -> M2State {
        let mut y = M2State::zeros(self.n, self.h, self.n_seg);
        for (b, c) in self.unstable_basis.iter().zip(coords) {
            y.axpy(*c, b);
        }
        y
    }

    pub fn project_plus(&self, y: &M2State) -> M2State {
        self.combine(&self.coordinates(y))
    }

    pub fn project_minus(&self, y: &M2State) -> M2State {
        y.sub(&self.project_plus(y))
    }

    /// `T(t)` applied to the basis element `j`, exactly (eigenfunctions evolve by `e^(mu t)`).
    pub fn evolve_basis(&self, t: f64) -> Vec<M2State> {
        let mut out = Vec::with_capacity(self.dim_plus);
        for m in &self.modes {
            let z = (m.mu * t).exp();
            let make = |take_im: bool| {
                let pick = |v: Vec<C64>| -> Vec<f64> { v.iter().map(|c| if take_im { c.im } else { c.re }).collect() };
                let head = pick(m.eval(z, 0.0));
                let ds = self.h / self.n_seg as f64;
                let mut samples = Vec::with_capacity(self.n * (self.n_seg + 1));
                for k in 0..=self.n_seg {
                    samples.extend(pick(m.eval(z, -self.h + k as f64 * ds)));
                }
                M2State::from_flat(head, samples, self.h, self.n_seg).expect("consistent grid")
            };
            out.push(make(false));
            if m.mu.im != 0.0 {
                out.push(make(true));
            }
        }
        out
    }

    pub fn to_json(&self) -> SplittingJson {
        SplittingJson {
            dim_plus: self.dim_plus,
            alpha_hat: self.alpha_hat,
            k_hat: self.k_hat,
            basis: self.unstable_basis.iter().map(|s| s.to_json()).collect(),
        }
    }
}

pub fn hyperbolic_split(sys: &DelaySystem, spec: &Spectrum) -> Result<HyperbolicSplitting> {
    hyperbolic_split_with_margin(sys, spec, DEFAULT_AXIS_MARGIN)
}

pub fn hyperbolic_split_with_margin(sys: &DelaySystem, spec: &Spectrum, axis_margin: f64) -> Result<HyperbolicSplitting> {
    if check_hyperbolic(spec, axis_margin) != Verdict::Hyperbolic {
        return Err(Error::NotHyperbolic);
    }
    let mut modes = Vec::new();
    let mut basis = Vec::new();
    for r in spec.unstable().filter(|r| r.mu.im >= 0.0) {
        if r.multiplicity != 1 {
            return Err(Error::Unsupported(format!("unstable root {} has multiplicity {}", r.mu, r.multiplicity)));
        }
        let mode = build_mode(sys, r.mu)?;
        modes.push(mode);
    }
    let (n, ns, h) = (sys.n(), sys.n_seg(), sys.h());
    let mut split = HyperbolicSplitting {
        modes,
        unstable_basis: Vec::new(),
        alpha_hat: 0.0,
        k_hat: 1.0,
        dim_plus: 0,
        h,
        n_seg: ns,
        n,
    };
    basis.extend(split.evolve_basis(0.0));
    split.dim_plus = basis.len();
    split.unstable_basis = basis;
    let alpha = spec
        .roots
        .iter()
        .map(|r| r.mu.re.abs())
        .fold(spec.strip_bound.abs(), f64::min);
    split.alpha_hat = alpha;
    split.k_hat = fit_decay_constant(sys, &split)?;
    Ok(split)
}

/// `K = max_t ||T(t) pi- y|| e^(alpha t) / ||pi- y||` over a few random continuous states.
fn fit_decay_constant(sys: &DelaySystem, split: &HyperbolicSplitting) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let horizon_steps = ((3.0 / split.alpha_hat).clamp(2.0 * sys.h(), 12.0) / sys.default_step()).ceil();
    let horizon = horizon_steps * sys.default_step();
    let mut k: f64 = 1.0;
    for _ in 0..4 {
        let y = split.project_minus(&M2State::random_smooth(sys, &mut rng, 1.0));
        let norm0 = y.norm();
        if norm0 == 0.0 {
            continue;
        }
        let tr = solve_homogeneous(sys, &y, horizon, sys.default_step())?;
        let stride = (tr.steps() / 48).max(1);
        for (t, s) in tr.states(stride) {
            k = k.max(s.norm() * (split.alpha_hat * t).exp() / norm0);
        }
    }
    Ok(k)
}

/// One level of the grouping: equal real parts up to the tolerance.
#[derive(Debug, Clone)]
pub struct Level {
    pub lambda: f64,
    pub roots: Vec<C64>,
    pub basis: Vec<M2State>,
    pub cumulative: Vec<M2State>,
}

impl Level {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}

#[derive(Debug, Clone)]
pub struct SelgradeGrouping {
    pub levels: Vec<Level>,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelJson {
    pub lambda: f64,
    pub dim: usize,
    pub roots: Vec<[f64; 2]>,
}

impl SelgradeGrouping {
    pub fn to_json(&self) -> Vec<LevelJson> {
        self.levels
            .iter()
            .map(|l| LevelJson { lambda: l.lambda, dim: l.dim(), roots: l.roots.iter().map(|z| [z.re, z.im]).collect() })
            .collect()
    }
}

/// Clusters the computed roots by real part (single linkage with gap `tol`).
pub fn selgrade_grouping(sys: &DelaySystem, spec: &Spectrum, tol: f64) -> Result<SelgradeGrouping> {
    let mut clusters: Vec<Vec<&Root>> = Vec::new();
    for r in &spec.roots {
        match clusters.last_mut() {
            Some(cl) if (cl.last().expect("non-empty").mu.re - r.mu.re).abs() <= tol => cl.push(r),
            _ => clusters.push(vec![r]),
        }
    }
    for pair in clusters.windows(2) {
        let a = pair[0].last().expect("non-empty").mu.re;
        let b = pair[1][0].mu.re;
        if a - b < 2.0 * tol {
            return Err(Error::AmbiguousGrouping(a, b));
        }
    }
    let mut levels = Vec::new();
    let mut cumulative: Vec<M2State> = Vec::new();
    for cl in clusters {
        let lambda = cl.iter().map(|r| r.mu.re).sum::<f64>() / cl.len() as f64;
        let mut basis = Vec::new();
        for r in cl.iter().filter(|r| r.mu.im >= 0.0) {
            basis.extend(eigen_states(sys, r)?);
        }
        cumulative.extend(basis.iter().cloned());
        levels.push(Level { lambda, roots: cl.iter().map(|r| r.mu).collect(), basis, cumulative: cumulative.clone() });
    }
    Ok(SelgradeGrouping { levels, tolerance: tol })
}

#[derive(Debug, Clone, Serialize)]
pub struct SeparationReport {
    #[serde(rename = "K_hat")]
    pub k_hat: f64,
    pub gamma_hat: f64,
    pub pass: bool,
    /// `(t, max ratio over samples)`.
    pub ratios: Vec<(f64, f64)>,
}

/// Smallest gain `min_{|x|=1, x in V} |T(t) x|` from Gram matrices.
fn min_gain(basis: &[M2State], evolved: &[M2State]) -> f64 {
    let d = basis.len();
    let g0 = DMatrix::from_fn(d, d, |i, j| basis[i].dot(&basis[j]));
    let gt = DMatrix::from_fn(d, d, |i, j| evolved[i].dot(&evolved[j]));
    let l = match g0.cholesky() {
        Some(ch) => ch.l(),
        None => return 0.0,
    };
    let linv = l.try_inverse().expect("cholesky factor is invertible");
    let m = &linv * gt * linv.transpose();
    let m = (&m + m.transpose()) * 0.5;
    SymmetricEigen::new(m).eigenvalues.min().max(0.0).sqrt()
}

pub const SEPARATION_MARGIN: f64 = 1e-3;

/// Samples `|T(t) y-| / (|y-| m(T(t)|V+))` and fits `K e^(-gamma t)` on the later half of the horizon.
pub fn check_exponential_separation(sys: &DelaySystem, split: &HyperbolicSplitting, horizon: f64, samples: usize) -> Result<SeparationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e9a);
    let ys: Vec<M2State> = (0..samples.max(1))
        .map(|_| split.project_minus(&M2State::random_smooth(sys, &mut rng, 1.0)))
        .collect();
    separation_for_states(sys, split, &ys, horizon)
}

/// As [`check_exponential_separation`] for given states of `V-`.
pub fn separation_for_states(sys: &DelaySystem, split: &HyperbolicSplitting, ys: &[M2State], horizon: f64) -> Result<SeparationReport> {
    let step = sys.default_step();
    let horizon = ((horizon / step).ceil().max(2.0)) * step;
    let trajs = ys
        .iter()
        .map(|y| solve_homogeneous(sys, y, horizon, step))
        .collect::<Result<Vec<_>>>()?;
    let stride = (trajs[0].steps() / 64).max(1);
    let times: Vec<usize> = (0..=trajs[0].steps()).step_by(stride).collect();
    let mut ratios = Vec::new();
    for &k in &times {
        let t = k as f64 * step;
        let gain = if split.dim_plus == 0 { 1.0 } else { min_gain(&split.unstable_basis, &split.evolve_basis(t)) };
        let mut worst: f64 = 0.0;
        for (y, tr) in ys.iter().zip(&trajs) {
            let n0 = y.norm();
            if n0 == 0.0 {
                continue;
            }
            worst = worst.max(tr.state_at(t).norm() / (n0 * gain));
        }
        ratios.push((t, worst));
    }
    if ratios.iter().all(|r| r.1 == 0.0) {
        return Ok(SeparationReport { k_hat: 0.0, gamma_hat: f64::INFINITY, pass: true, ratios });
    }
    // least-squares slope of log ratio over the later half
    let late: Vec<(f64, f64)> = ratios.iter().filter(|r| r.0 >= 0.5 * horizon && r.1 > 0.0).map(|r| (r.0, r.1.ln())).collect();
    let cnt = late.len() as f64;
    let (mt, ml) = (late.iter().map(|r| r.0).sum::<f64>() / cnt, late.iter().map(|r| r.1).sum::<f64>() / cnt);
    let cov: f64 = late.iter().map(|r| (r.0 - mt) * (r.1 - ml)).sum();
    let var: f64 = late.iter().map(|r| (r.0 - mt).powi(2)).sum();
    let gamma_hat = -cov / var;
    let k_hat = ratios.iter().map(|r| r.1 * (gamma_hat * r.0).exp()).fold(0.0, f64::max);
    let pass = gamma_hat.is_finite() && gamma_hat > SEPARATION_MARGIN && k_hat.is_finite();
    Ok(SeparationReport { k_hat, gamma_hat, pass, ratios })
}
