//! Problem data: the delay system, its JSON description and structural validation.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::control::Polytope;
use crate::error::{Error, Result};

/// Default number of segment intervals on `[-h, 0]`.
pub const DEFAULT_N_SEG: usize = 256;

/// Relative tolerance (in units of `h`) for delays to sit on the segment grid.
pub const GRID_ALIGN_TOL: f64 = 1e-9;

/// Linear delay control system with `p >= 1` positive delays and a polytopic control range.
#[derive(Debug, Clone, PartialEq)]
pub struct DelaySystem {
    n: usize,
    m: usize,
    delays: Vec<f64>,
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
    omega: Polytope,
    n_seg: usize,
    zero_in_omega: bool,
}

impl DelaySystem {
    /// Builds a system from `A0..Ap`, `B0..Bp`, the positive delays `h1 < .. < hp`
    /// and the vertices of the control polytope.
    pub fn new(
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
        delays: Vec<f64>,
        omega_vertices: Vec<Vec<f64>>,
    ) -> Result<Self> {
        Self::with_segments(a, b, delays, omega_vertices, DEFAULT_N_SEG)
    }

    pub fn with_segments(
        a: Vec<DMatrix<f64>>,
        b: Vec<DMatrix<f64>>,
        delays: Vec<f64>,
        omega_vertices: Vec<Vec<f64>>,
        n_seg: usize,
    ) -> Result<Self> {
        let spec = SystemSpec::from_parts(&a, &b, &delays, &omega_vertices, Some(n_seg));
        let report = validate_spec(&spec)?;
        if let Some(f) = report.findings.iter().find(|f| f.structural && !f.passed) {
            return Err(Error::InvalidSystem(format!("{}: {}", f.check, f.detail)));
        }
        let n = a[0].nrows();
        let m = b[0].ncols();
        let omega = Polytope::new(omega_vertices)?;
        let zero_in_omega = omega.contains(&vec![0.0; m]);
        Ok(Self { n, m, delays, a, b, omega, n_seg, zero_in_omega })
    }

    /// Scalar system `x' = sum ai x(t - hi) + sum bi u(t - hi)` with `Omega = [lo, hi]`.
    pub fn scalar(a: &[f64], b: &[f64], delays: &[f64], omega: (f64, f64)) -> Result<Self> {
        let am = a.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect();
        let bm = b.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect();
        let verts = if omega.0 == omega.1 { vec![vec![omega.0]] } else { vec![vec![omega.0], vec![omega.1]] };
        Self::new(am, bm, delays.to_vec(), verts)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of positive delays.
    pub fn p(&self) -> usize {
        self.delays.len()
    }

    /// Positive delays `h1 < .. < hp`.
    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    /// Delay `hi` with `h0 = 0`.
    pub fn delay(&self, i: usize) -> f64 {
        if i == 0 {
            0.0
        } else {
            self.delays[i - 1]
        }
    }

    /// Maximal delay `h = hp`.
    pub fn h(&self) -> f64 {
        *self.delays.last().expect("p >= 1")
    }

    pub fn a(&self) -> &[DMatrix<f64>] {
        &self.a
    }

    pub fn b(&self) -> &[DMatrix<f64>] {
        &self.b
    }

    pub fn omega(&self) -> &Polytope {
        &self.omega
    }

    pub fn n_seg(&self) -> usize {
        self.n_seg
    }

    /// Spacing of the segment grid on `[-h, 0]`.
    pub fn seg_dt(&self) -> f64 {
        self.h() / self.n_seg as f64
    }

    pub fn zero_in_omega(&self) -> bool {
        self.zero_in_omega
    }

    /// Same system on a different segment grid.
    pub fn with_n_seg(&self, n_seg: usize) -> Result<Self> {
        Self::with_segments(
            self.a.clone(),
            self.b.clone(),
            self.delays.clone(),
            self.omega.vertices().to_vec(),
            n_seg,
        )
    }

    /// Same dynamics with a different control polytope.
    pub fn with_omega(&self, omega_vertices: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_segments(self.a.clone(), self.b.clone(), self.delays.clone(), omega_vertices, self.n_seg)
    }

    /// Default integration step: the segment spacing.
    /// Twice the segment spacing when every delay allows it, so Runge-Kutta midpoints of
    /// delayed arguments land on segment samples and no interpolation of stored segments is
    /// needed; the segment spacing otherwise.
    pub fn default_step(&self) -> f64 {
        let dt = self.seg_dt();
        let even = self.delays.iter().all(|&d| {
            let k = (d / dt).round() as i64;
            k % 2 == 0
        });
        if even { 2.0 * dt } else { dt }
    }

    pub fn validate(&self) -> ValidationReport {
        validate_spec(&self.to_spec()).expect("constructed systems are structurally valid")
    }

    pub fn to_spec(&self) -> SystemSpec {
        SystemSpec::from_parts(&self.a, &self.b, &self.delays, self.omega.vertices(), Some(self.n_seg))
    }

    pub fn from_spec(spec: &SystemSpec) -> Result<Self> {
        let report = validate_spec(spec)?;
        if let Some(f) = report.findings.iter().find(|f| f.structural && !f.passed) {
            return Err(Error::InvalidSystem(format!("{}: {}", f.check, f.detail)));
        }
        let a = spec.a.iter().map(|rows| matrix_from_rows(rows, spec.n, spec.n)).collect::<Result<Vec<_>>>()?;
        let b = spec.b.iter().map(|rows| matrix_from_rows(rows, spec.n, spec.m)).collect::<Result<Vec<_>>>()?;
        Self::with_segments(a, b, spec.delays.clone(), spec.omega.vertices.clone(), spec.n_seg.unwrap_or(DEFAULT_N_SEG))
    }

    /// Parses the JSON system description. Errors name the offending key path.
    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_spec(&SystemSpec::from_json(text)?)
    }
}

/// JSON form of a [`DelaySystem`]. Matrices are nested row-major arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub n: usize,
    pub m: usize,
    pub delays: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<Vec<f64>>>,
    pub omega: OmegaSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_seg: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaSpec {
    pub vertices: Vec<Vec<f64>>,
}

impl SystemSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    fn from_parts(
        a: &[DMatrix<f64>],
        b: &[DMatrix<f64>],
        delays: &[f64],
        vertices: &[Vec<f64>],
        n_seg: Option<usize>,
    ) -> Self {
        let rows = |mat: &DMatrix<f64>| {
            (0..mat.nrows()).map(|i| (0..mat.ncols()).map(|j| mat[(i, j)]).collect()).collect()
        };
        Self {
            n: a.first().map_or(0, |m| m.nrows()),
            m: b.first().map_or(0, |m| m.ncols()),
            delays: delays.to_vec(),
            a: a.iter().map(rows).collect(),
            b: b.iter().map(rows).collect(),
            omega: OmegaSpec { vertices: vertices.to_vec() },
            n_seg,
        }
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], nr: usize, nc: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nr || rows.iter().any(|r| r.len() != nc) {
        return Err(Error::Dimension(format!("expected a {nr}x{nc} matrix")));
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

/// One check of [`validate_spec`]. Structural findings block construction; analytic ones
/// (singular `Ap`, `0` outside `Omega`) are informational.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub check: String,
    pub passed: bool,
    pub structural: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
    pub zero_in_omega: bool,
}

impl ValidationReport {
    pub fn finding(&self, check: &str) -> Option<&Finding> {
        self.findings.iter().find(|f| f.check == check)
    }

    pub fn all_passed(&self) -> bool {
        self.findings.iter().all(|f| f.passed)
    }

    pub fn injective(&self) -> bool {
        self.finding("injectivity").is_some_and(|f| f.passed)
    }
}

/// Checks a raw system description. Dimension mismatches are hard errors; everything else
/// is reported as a finding.
pub fn validate_spec(spec: &SystemSpec) -> Result<ValidationReport> {
    let (n, m) = (spec.n, spec.m);
    if n == 0 || m == 0 {
        return Err(Error::Dimension("n and m must be positive".into()));
    }
    let p = spec.delays.len();
    if spec.a.len() != p + 1 || spec.b.len() != p + 1 {
        return Err(Error::Dimension(format!(
            "expected {} matrices in A and B for {p} delays, got {} and {}",
            p + 1,
            spec.a.len(),
            spec.b.len()
        )));
    }
    for (i, rows) in spec.a.iter().enumerate() {
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension(format!("A[{i}] is not {n}x{n}")));
        }
    }
    for (i, rows) in spec.b.iter().enumerate() {
        if rows.len() != n || rows.iter().any(|r| r.len() != m) {
            return Err(Error::Dimension(format!("B[{i}] is not {n}x{m}")));
        }
    }
    if spec.omega.vertices.iter().any(|v| v.len() != m) {
        return Err(Error::Dimension(format!("omega vertices must have length {m}")));
    }

    let mut findings = Vec::new();
    let mut push = |check: &str, passed: bool, structural: bool, detail: String| {
        findings.push(Finding { check: check.into(), passed, structural, detail });
    };

    let finite = spec.delays.iter().all(|d| d.is_finite())
        && spec.a.iter().chain(spec.b.iter()).flatten().flatten().all(|v| v.is_finite());
    push("finite_entries", finite, true, if finite { "ok".into() } else { "non-finite entry".into() });

    let monotone = p >= 1
        && spec.delays[0] > 0.0
        && spec.delays.windows(2).all(|w| w[1] > w[0]);
    push(
        "delays_monotone",
        monotone,
        true,
        if monotone { format!("{p} delays, h = {}", spec.delays[p - 1]) } else { "delays must be positive and strictly increasing, p >= 1".into() },
    );

    let nonempty = !spec.omega.vertices.is_empty();
    push("omega_nonempty", nonempty, true, format!("{} vertices", spec.omega.vertices.len()));

    let n_seg = spec.n_seg.unwrap_or(DEFAULT_N_SEG);
    let aligned = monotone && n_seg >= 4 && {
        let h = spec.delays[p - 1];
        let dg = h / n_seg as f64;
        spec.delays.iter().all(|&d| {
            let k = (d / dg).round();
            (d - k * dg).abs() <= GRID_ALIGN_TOL * h
        })
    };
    push(
        "grid_alignment",
        aligned,
        true,
        if aligned { format!("n_seg = {n_seg}") } else { format!("some delay is not a multiple of h/{n_seg} (n_seg >= 4 required)") },
    );

    let ap = DMatrix::from_fn(n, n, |i, j| spec.a[p][i][j]);
    let det = ap.determinant();
    let norm = ap.clone().svd(false, false).singular_values.max();
    let threshold = 1e-10 * norm.powi(n as i32);
    let injective = finite && norm > 0.0 && det.abs() > threshold;
    push("injectivity", injective, false, format!("|det A_p| = {:e}, threshold {:e}", det.abs(), threshold));

    let zero_in_omega = nonempty && Polytope::new(spec.omega.vertices.clone())?.contains(&vec![0.0; m]);
    push("zero_in_omega", zero_in_omega, false, if zero_in_omega { "0 in Omega".into() } else { "0 not in Omega".into() });

    Ok(ValidationReport { findings, zero_in_omega })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_injectivity() {
        let sys = DelaySystem::scalar(&[-1.0, -0.5], &[1.0, 0.0], &[1.0], (-1.0, 1.0)).unwrap();
        let r = sys.validate();
        assert!(r.injective());
        assert!(r.zero_in_omega);
        let sys = DelaySystem::scalar(&[-1.0, 0.0], &[1.0, 0.0], &[1.0], (-1.0, 1.0)).unwrap();
        assert!(!sys.validate().injective());
    }

    #[test]
    fn zero_outside_omega_is_reported() {
        let sys = DelaySystem::scalar(&[-1.0, -0.5], &[1.0, 0.0], &[1.0], (0.5, 1.0)).unwrap();
        assert!(!sys.zero_in_omega());
        assert!(!sys.validate().finding("zero_in_omega").unwrap().passed);
    }

    #[test]
    fn dimension_mismatch_is_hard_error() {
        let mut spec = DelaySystem::scalar(&[-1.0, -0.5], &[1.0, 0.0], &[1.0], (-1.0, 1.0)).unwrap().to_spec();
        spec.a.pop();
        assert!(matches!(validate_spec(&spec), Err(Error::Dimension(_))));
    }

    #[test]
    fn rejects_bad_delays_and_misaligned_grid() {
        let e = DelaySystem::scalar(&[-1.0, -0.5, 0.1], &[1.0, 0.0, 0.0], &[1.0, 0.5], (-1.0, 1.0));
        assert!(matches!(e, Err(Error::InvalidSystem(_))));
        let e = DelaySystem::scalar(&[-1.0, -0.5, 0.1], &[1.0, 0.0, 0.0], &[0.3001, 1.0], (-1.0, 1.0));
        assert!(matches!(e, Err(Error::InvalidSystem(ref s)) if s.contains("grid_alignment")));
    }

    #[test]
    fn json_roundtrip_and_unknown_keys() {
        let sys = DelaySystem::scalar(&[-1.0, -0.5], &[1.0, 0.0], &[1.0], (-1.0, 1.0)).unwrap();
        let text = sys.to_spec().to_json();
        assert_eq!(DelaySystem::from_json(&text).unwrap(), sys);
        let bad = text.replacen("\"delays\"", "\"delay\"", 1);
        match SystemSpec::from_json(&bad) {
            Err(Error::Parse { message, .. }) => assert!(message.contains("delay")),
            other => panic!("{other:?}"),
        }
        let bad = text.replacen("\"m\": 1", "\"m\": \"one\"", 1);
        match SystemSpec::from_json(&bad) {
            Err(Error::Parse { path, .. }) => assert_eq!(path, "m"),
            other => panic!("{other:?}"),
        }
    }
}
