//! Box approximation of the chain control set in reduced coordinates.
//!
//! States are reduced to `d` coordinates; a uniform grid of boxes covers a region of the
//! reduced space. Box `b` has an edge to `b'` when the time-`tau` image of one of `b`'s sample
//! points under a sampled control, fattened by a multiple of the box diameter, meets `b'`.
//! The output is the strongly connected component of the box containing 0.

use rayon::prelude::*;
use serde::Serialize;

use crate::control::ControlSignal;
use crate::error::{Error, Result};
use crate::integrator::solve;
use crate::state::M2State;
use crate::system::DelaySystem;

pub const MAX_DIM: usize = 12;

/// Finite-dimensional coordinates for `M2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reduction {
    /// `r in R^n`; lifts to the constant history `f = r`.
    HeadConstantHistory,
    /// `r` plus the first `k` coefficients of each component of `f` in the `L2`-orthonormal
    /// Legendre basis on `[-h, 0]`.
    HeadLegendre { k: usize },
}

/// Orthonormal Legendre polynomial `l` on `[-h, 0]` at `s`.
fn legendre(l: usize, s: f64, h: f64) -> f64 {
    let x = 2.0 * s / h + 1.0;
    let (mut p0, mut p1) = (1.0, x);
    let p = match l {
        0 => 1.0,
        1 => x,
        _ => {
            for j in 1..l {
                let jf = j as f64;
                let p2 = ((2.0 * jf + 1.0) * x * p1 - jf * p0) / (jf + 1.0);
                p0 = p1;
                p1 = p2;
            }
            p1
        }
    };
    p * ((2 * l + 1) as f64 / h).sqrt()
}

impl Reduction {
    pub fn dim(&self, n: usize) -> usize {
        match self {
            Reduction::HeadConstantHistory => n,
            Reduction::HeadLegendre { k } => n + n * k,
        }
    }

    pub fn reduce(&self, y: &M2State) -> Vec<f64> {
        let mut z = y.head().to_vec();
        if let Reduction::HeadLegendre { k } = *self {
            let (n, ns, h) = (y.n(), y.n_seg(), y.h());
            let ds = y.seg_dt();
            for c in 0..n {
                for l in 0..k {
                    let mut acc = 0.0;
                    for j in 0..=ns {
                        let w = if j == 0 || j == ns { 0.5 } else { 1.0 };
                        acc += w * y.sample(j)[c] * legendre(l, -h + j as f64 * ds, h);
                    }
                    z.push(acc * ds);
                }
            }
        }
        z
    }

    pub fn lift(&self, sys: &DelaySystem, z: &[f64]) -> M2State {
        let n = sys.n();
        let head = z[..n].to_vec();
        match *self {
            Reduction::HeadConstantHistory => M2State::constant(sys, &head),
            Reduction::HeadLegendre { k } => {
                let h = sys.h();
                M2State::from_fn(sys, head, |s| {
                    (0..n).map(|c| (0..k).map(|l| z[n + c * k + l] * legendre(l, s, h)).sum()).collect()
                })
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidArgument("region needs lo < hi in every coordinate".into()));
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (a, b))| a <= x && x <= b)
    }
}

/// Parameters of the graph construction.
#[derive(Debug, Clone)]
pub struct BoxOptions {
    pub tau: f64,
    /// Image points are fattened by this multiple of the box diameter.
    pub fattening: f64,
}

impl Default for BoxOptions {
    fn default() -> Self {
        Self { tau: 1.0, fattening: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct BoxCover {
    pub region: Region,
    pub depth: u32,
    pub reduction: Reduction,
    /// Boxes per axis.
    pub per_axis: usize,
    pub widths: Vec<f64>,
    /// Flat indices of the boxes in the component of 0, sorted.
    pub boxes: Vec<usize>,
    pub zero_box: usize,
    /// Transition graph over all boxes.
    pub graph: Vec<Vec<usize>>,
    pub roundtrip_error: f64,
    /// Largest `|y - lift(reduce(y))|` over the computed images (information lost by the reduction).
    pub image_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoxJson {
    pub index: Vec<usize>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxCover {
    pub fn diameter(&self) -> f64 {
        self.widths.iter().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let mut rest = flat;
        let mut idx = vec![0; self.widths.len()];
        for a in (0..idx.len()).rev() {
            idx[a] = rest % self.per_axis;
            rest /= self.per_axis;
        }
        idx
    }

    pub fn bounds(&self, flat: usize) -> (Vec<f64>, Vec<f64>) {
        let idx = self.multi_index(flat);
        let lo: Vec<f64> = idx.iter().enumerate().map(|(a, &i)| self.region.lo[a] + i as f64 * self.widths[a]).collect();
        let hi = lo.iter().zip(&self.widths).map(|(l, w)| l + w).collect();
        (lo, hi)
    }

    pub fn to_json(&self) -> Vec<BoxJson> {
        self.boxes
            .iter()
            .map(|&b| {
                let (lo, hi) = self.bounds(b);
                BoxJson { index: self.multi_index(b), lo, hi }
            })
            .collect()
    }

    /// Interval hull of coordinate `axis` over the output boxes.
    pub fn projection(&self, axis: usize) -> Vec<(f64, f64)> {
        let mut iv: Vec<(f64, f64)> = self.boxes.iter().map(|&b| {
            let (lo, hi) = self.bounds(b);
            (lo[axis], hi[axis])
        }).collect();
        iv.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::new();
        for (a, b) in iv {
            match merged.last_mut() {
                Some(last) if a <= last.1 + 1e-12 => last.1 = last.1.max(b),
                _ => merged.push((a, b)),
            }
        }
        merged
    }

    pub fn volume(&self) -> f64 {
        self.boxes.len() as f64 * self.widths.iter().product::<f64>()
    }
}

fn box_of(z: &[f64], region: &Region, widths: &[f64], per_axis: usize) -> Option<usize> {
    if !region.contains(z) {
        return None;
    }
    let mut flat = 0;
    for a in 0..z.len() {
        let i = (((z[a] - region.lo[a]) / widths[a]).floor() as usize).min(per_axis - 1);
        flat = flat * per_axis + i;
    }
    Some(flat)
}

/// Boxes meeting the ball of radius `r` around `z`.
fn boxes_near(z: &[f64], r: f64, region: &Region, widths: &[f64], per_axis: usize) -> Vec<usize> {
    let d = z.len();
    let mut ranges = Vec::with_capacity(d);
    for a in 0..d {
        let lo = ((z[a] - r - region.lo[a]) / widths[a]).floor().max(0.0);
        let hi = ((z[a] + r - region.lo[a]) / widths[a]).floor().min(per_axis as f64 - 1.0);
        if hi < lo {
            return Vec::new();
        }
        ranges.push((lo as usize, hi as usize));
    }
    let mut out = Vec::new();
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    loop {
        // squared distance from z to the box
        let dist2: f64 = (0..d)
            .map(|a| {
                let lo = region.lo[a] + idx[a] as f64 * widths[a];
                let hi = lo + widths[a];
                let gap = if z[a] < lo { lo - z[a] } else if z[a] > hi { z[a] - hi } else { 0.0 };
                gap * gap
            })
            .sum();
        if dist2 <= r * r {
            out.push(idx.iter().fold(0, |acc, &i| acc * per_axis + i));
        }
        let mut a = d;
        loop {
            if a == 0 {
                return out;
            }
            a -= 1;
            if idx[a] < ranges[a].1 {
                idx[a] += 1;
                for b in a + 1..d {
                    idx[b] = ranges[b].0;
                }
                break;
            }
        }
    }
}

/// Corners and centre of a box.
fn sample_points(lo: &[f64], widths: &[f64]) -> Vec<Vec<f64>> {
    let d = lo.len();
    let mut pts: Vec<Vec<f64>> = (0..1usize << d)
        .map(|mask| (0..d).map(|a| lo[a] + if mask >> a & 1 == 1 { widths[a] } else { 0.0 }).collect())
        .collect();
    pts.push(lo.iter().zip(widths).map(|(l, w)| l + 0.5 * w).collect());
    pts
}

pub fn approximate_chain_control_set(
    sys: &DelaySystem,
    reduction: Reduction,
    region: &Region,
    depth: u32,
    controls: &[ControlSignal],
    opts: &BoxOptions,
) -> Result<BoxCover> {
    let d = reduction.dim(sys.n());
    if d > MAX_DIM {
        return Err(Error::InvalidArgument(format!("reduced dimension {d} exceeds {MAX_DIM}")));
    }
    if region.dim() != d {
        return Err(Error::Dimension(format!("region has dimension {} but the reduction has {d}", region.dim())));
    }
    if !sys.zero_in_omega() {
        return Err(Error::ZeroNotInOmega);
    }
    let origin = vec![0.0; d];
    if !region.contains(&origin) {
        return Err(Error::InvalidArgument("region does not contain 0".into()));
    }
    let per_axis = 1usize << depth;
    let total = per_axis
        .checked_pow(d as u32)
        .filter(|&t| t <= 1 << 24)
        .ok_or_else(|| Error::InvalidArgument(format!("{per_axis}^{d} boxes is too many")))?;
    let widths: Vec<f64> = (0..d).map(|a| (region.hi[a] - region.lo[a]) / per_axis as f64).collect();
    let diam = widths.iter().map(|w| w * w).sum::<f64>().sqrt();

    // resolution refusal: the reduction must reproduce box coordinates to within a diameter
    let mut roundtrip_error: f64 = 0.0;
    for z in sample_points(&region.lo, &region.hi.iter().zip(&region.lo).map(|(a, b)| a - b).collect::<Vec<_>>()) {
        let back = reduction.reduce(&reduction.lift(sys, &z));
        roundtrip_error = roundtrip_error.max(back.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
    }
    if roundtrip_error > diam {
        return Err(Error::Resolution(format!(
            "reduction roundtrip error {roundtrip_error:.3e} exceeds the box diameter {diam:.3e}"
        )));
    }

    let radius = opts.fattening * diam;
    let step = sys.default_step();
    let per_box: Vec<(Vec<usize>, f64)> = (0..total)
        .into_par_iter()
        .map(|b| {
            let mut rest = b;
            let mut lo = vec![0.0; d];
            for a in (0..d).rev() {
                lo[a] = region.lo[a] + (rest % per_axis) as f64 * widths[a];
                rest /= per_axis;
            }
            let mut targets = Vec::new();
            let mut residual: f64 = 0.0;
            for z in sample_points(&lo, &widths) {
                let y = reduction.lift(sys, &z);
                for u in controls {
                    let img = solve(sys, &y, u, opts.tau, step)?.final_state();
                    let zi = reduction.reduce(&img);
                    residual = residual.max(crate::state::m2_distance(&img, &reduction.lift(sys, &zi))?);
                    targets.extend(boxes_near(&zi, radius, region, &widths, per_axis));
                }
            }
            targets.sort_unstable();
            targets.dedup();
            Ok((targets, residual))
        })
        .collect::<Result<Vec<_>>>()?;
    let image_residual = per_box.iter().map(|p| p.1).fold(0.0, f64::max);
    let graph: Vec<Vec<usize>> = per_box.into_iter().map(|p| p.0).collect();
    let zero_box = box_of(&origin, region, &widths, per_axis).expect("origin is inside");
    let comp = tarjan_scc(&graph);
    let mut boxes: Vec<usize> = (0..total).filter(|&b| comp[b] == comp[zero_box]).collect();
    boxes.sort_unstable();
    Ok(BoxCover {
        region: region.clone(),
        depth,
        reduction,
        per_axis,
        widths,
        boxes,
        zero_box,
        graph,
        roundtrip_error,
        image_residual,
    })
}

/// Component label of every vertex (iterative Tarjan).
pub fn tarjan_scc(graph: &[Vec<usize>]) -> Vec<usize> {
    const UNSEEN: usize = usize::MAX;
    let n = graph.len();
    let mut index = vec![UNSEEN; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut comp = vec![UNSEEN; n];
    let mut stack = Vec::new();
    let mut next_index = 0;
    let mut next_comp = 0;
    for root in 0..n {
        if index[root] != UNSEEN {
            continue;
        }
        let mut work: Vec<(usize, usize)> = vec![(root, 0)];
        index[root] = next_index;
        low[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;
        while let Some(&mut (v, ref mut pos)) = work.last_mut() {
            if *pos < graph[v].len() {
                let w = graph[v][*pos];
                *pos += 1;
                if index[w] == UNSEEN {
                    index[w] = next_index;
                    low[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                work.pop();
                if let Some(&(parent, _)) = work.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    loop {
                        let w = stack.pop().expect("vertex on stack");
                        on_stack[w] = false;
                        comp[w] = next_comp;
                        if w == v {
                            break;
                        }
                    }
                    next_comp += 1;
                }
            }
        }
    }
    comp
}

/// Reference components by transitive closure (quadratic memory; small graphs only).
pub fn closure_scc(graph: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let n = graph.len();
    let mut reach = vec![vec![false; n]; n];
    for (v, row) in reach.iter_mut().enumerate() {
        row[v] = true;
        for &w in &graph[v] {
            row[w] = true;
        }
    }
    for k in 0..n {
        for i in 0..n {
            if reach[i][k] {
                for j in 0..n {
                    if reach[k][j] {
                        reach[i][j] = true;
                    }
                }
            }
        }
    }
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    for v in 0..n {
        if seen[v] {
            continue;
        }
        let class: Vec<usize> = (0..n).filter(|&w| reach[v][w] && reach[w][v]).collect();
        for &w in &class {
            seen[w] = true;
        }
        out.push(class);
    }
    out
}

/// Components from labels, each sorted, ordered by smallest member.
pub fn components_from_labels(labels: &[usize]) -> Vec<Vec<usize>> {
    let count = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut out = vec![Vec::new(); count];
    for (v, &l) in labels.iter().enumerate() {
        out[l].push(v);
    }
    out.sort_by_key(|c| c[0]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn scc_matches_closure() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let n = rng.gen_range(1..120);
            let graph: Vec<Vec<usize>> = (0..n)
                .map(|_| (0..rng.gen_range(0..3)).map(|_| rng.gen_range(0..n)).collect())
                .collect();
            let mut oracle = closure_scc(&graph);
            oracle.sort_by_key(|c| c[0]);
            assert_eq!(components_from_labels(&tarjan_scc(&graph)), oracle);
        }
    }

    #[test]
    fn legendre_reduction_roundtrip() {
        let sys = DelaySystem::scalar(&[-1.0, -0.5], &[1.0, 0.0], &[1.0], (-1.0, 1.0)).unwrap();
        let red = Reduction::HeadLegendre { k: 3 };
        let z = vec![0.3, 0.1, -0.2, 0.05];
        let back = red.reduce(&red.lift(&sys, &z));
        for (a, b) in back.iter().zip(&z) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    fn stable(omega: (f64, f64)) -> DelaySystem {
        DelaySystem::scalar(&[-1.0, -0.5], &[1.0, 0.0], &[1.0], omega).unwrap()
    }

    #[test]
    fn equilibrium_only() {
        let sys = stable((0.0, 0.0));
        let u = ControlSignal::zero(1, sys.default_step());
        let w = 1.0 / 16.0;
        let region = Region::new(vec![-1.0 - w / 2.0], vec![1.0 - w / 2.0]).unwrap();
        let opts = BoxOptions { tau: 1.0, fattening: 0.25 };
        let cover = approximate_chain_control_set(&sys, Reduction::HeadConstantHistory, &region, 5, &[u], &opts).unwrap();
        assert_eq!(cover.boxes, vec![cover.zero_box]);
    }

    #[test]
    fn region_must_contain_zero() {
        let sys = stable((-1.0, 1.0));
        let region = Region::new(vec![0.5], vec![1.0]).unwrap();
        let u = ControlSignal::zero(1, sys.default_step());
        assert!(approximate_chain_control_set(&sys, Reduction::HeadConstantHistory, &region, 3, &[u], &BoxOptions::default()).is_err());
    }
}
