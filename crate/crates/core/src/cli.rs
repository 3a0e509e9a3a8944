//! Command-line front end.
//!
//! Every command reads a system description (`--system`), writes its artifacts into `--out`
//! and returns an exit code: `0` on success, `2` when validation findings block the requested
//! analysis (for `validate`: any failed finding), `1` on hard errors. Each JSON artifact echoes the configuration and the library
//! version; with the same configuration and `--seed` the artifacts are byte-identical.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chain::boxes::{approximate_chain_control_set, BoxCover, BoxOptions, Reduction, Region};
use crate::chain::{verify_chain, Chain, ChainJson};
use crate::control::{ControlJson, ControlSignal};
use crate::error::{Error, Result};
use crate::hyperbolic::{chain_recurrent_graph_with, control_family, EntireSolver};
use crate::integrator::{fmt_f64, solve, Trajectory, TrajectorySummary};
use crate::poincare::{embed_h1, equator_distance, hyperbolic_subbundle_sample, lifted_flow, LiftedState, ProjectivePoint};
use crate::spectral::{check_hyperbolic, compute_spectrum, hyperbolic_split_with_margin, Spectrum, Verdict};
use crate::state::{M2State, StateJson};
use crate::system::DelaySystem;
use crate::VERSION;

/// Numerical laboratory for linear control systems with delays.
#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "delaylab", version)]
pub struct RunConfig {
    /// System description (JSON).
    #[arg(long, global = true)]
    pub system: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Seed for all randomized sampling.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Command {
    /// Structural and analytic checks of the system description.
    Validate,
    /// Trajectory on [0, horizon].
    Simulate(SimulateArgs),
    /// Characteristic roots in the strip Re s >= sigma.
    Spectrum(SpectrumArgs),
    /// Hyperbolic splitting M2 = V+ (+) V-.
    Split(SpectrumArgs),
    /// Bounded entire solutions e(u, 0) over sampled controls.
    Entire(EntireArgs),
    /// Box approximation of the chain control set.
    Chainset(ChainsetArgs),
    /// Checks a chain file.
    ChainVerify(ChainVerifyArgs),
    /// Lifted trajectory and its distance to the equator.
    Lift(SimulateArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 5.0)]
    pub horizon: f64,
    /// Integration step; defaults to the system's natural step.
    #[arg(long)]
    pub step: Option<f64>,
    /// `zero`, `const:<v1,v2,..>` or a control JSON file.
    #[arg(long, default_value = "zero")]
    pub control: String,
    /// Initial state JSON file; zero state when omitted.
    #[arg(long)]
    pub initial: Option<PathBuf>,
    /// Snapshot every this many steps.
    #[arg(long, default_value_t = 64)]
    pub stride: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SpectrumArgs {
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    pub sigma: f64,
    #[arg(long = "n-collocation", default_value_t = 48)]
    pub n_collocation: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub margin: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EntireArgs {
    #[command(flatten)]
    pub spectrum: SpectrumArgs,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    /// Number of random bang-bang controls besides the constants.
    #[arg(long, default_value_t = 8)]
    pub samples: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ChainsetArgs {
    #[arg(long, default_value_t = 6)]
    pub depth: u32,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Half-width of the region around 0 in every reduced coordinate.
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    /// `head` or `legendre:<k>`.
    #[arg(long, default_value = "head")]
    pub reduction: String,
    /// Constant controls on a grid of Omega's vertex hull.
    #[arg(long, default_value_t = 17)]
    pub constants: usize,
    #[arg(long = "bang-bang", default_value_t = 4)]
    pub bang_bang: usize,
    #[arg(long, default_value_t = 1.0)]
    pub fattening: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ChainVerifyArgs {
    #[arg(long)]
    pub chain: PathBuf,
}

/// Wrapper written around every JSON result.
#[derive(Serialize)]
struct Artifact<'a, T: Serialize> {
    version: &'static str,
    config: &'a RunConfig,
    result: T,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, config: &RunConfig, result: T) -> Result<()> {
    let text = serde_json::to_string_pretty(&Artifact { version: VERSION, config, result })?;
    fs::write(dir.join(name), text + "\n")?;
    Ok(())
}

fn parse_control(spec: &str, sys: &DelaySystem, step: f64) -> Result<ControlSignal> {
    if spec == "zero" {
        return Ok(ControlSignal::zero(sys.m(), step));
    }
    if let Some(rest) = spec.strip_prefix("const:") {
        let v = rest
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidArgument(format!("bad constant control '{rest}': {e}")))?;
        return ControlSignal::constant(&v, -sys.h(), step);
    }
    let path = Path::new(spec);
    let text = fs::read_to_string(path).map_err(|e| Error::Parse { path: spec.into(), message: e.to_string() })?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let json: ControlJson = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: format!("{spec}: {}", e.path()),
        message: e.inner().to_string(),
    })?;
    ControlSignal::from_json(&json)
}

fn read_state(path: &Path, sys: &DelaySystem) -> Result<M2State> {
    let text = fs::read_to_string(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let json: StateJson = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
        path: format!("{}: {}", path.display(), e.path()),
        message: e.inner().to_string(),
    })?;
    let y = M2State::from_json(&json, sys.h())?;
    y.compatible_with(sys)?;
    Ok(y)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("--{name} must be positive, got {v}")))
    }
}

/// Plot-ready tables.
pub enum PlotData<'a> {
    Trajectory(&'a Trajectory),
    Spectrum(&'a Spectrum),
    Boxes(&'a BoxCover),
    Equator(&'a [(f64, f64)]),
}

/// Writes a plain CSV table for `data` into `dir`; returns the file path.
pub fn emit_plot_data(dir: &Path, data: PlotData<'_>) -> Result<PathBuf> {
    let (name, body) = match data {
        PlotData::Trajectory(t) => ("trajectory.csv", t.to_csv()),
        PlotData::Spectrum(s) => {
            let mut out = String::from("re,im\n");
            for r in &s.roots {
                out.push_str(&format!("{},{}\n", fmt_f64(r.mu.re), fmt_f64(r.mu.im)));
            }
            ("spectrum.csv", out)
        }
        PlotData::Boxes(c) => {
            let d = c.widths.len();
            let mut out = (0..d).map(|a| format!("lo_{},hi_{}", a + 1, a + 1)).collect::<Vec<_>>().join(",");
            out.push('\n');
            for &b in &c.boxes {
                let (lo, hi) = c.bounds(b);
                let row: Vec<String> = lo.iter().zip(&hi).map(|(l, h)| format!("{},{}", fmt_f64(*l), fmt_f64(*h))).collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
            ("chainset.csv", out)
        }
        PlotData::Equator(curve) => {
            let mut out = String::from("t,equator_distance\n");
            for (t, d) in curve {
                out.push_str(&format!("{},{}\n", fmt_f64(*t), fmt_f64(*d)));
            }
            ("equator.csv", out)
        }
    };
    let path = dir.join(name);
    fs::write(&path, body)?;
    Ok(path)
}

fn load_system(config: &RunConfig) -> Result<DelaySystem> {
    let path = config
        .system
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("--system is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Error::Parse { path: path.display().to_string(), message: e.to_string() })?;
    DelaySystem::from_json(&text)
}

#[derive(Serialize)]
struct SpectrumResult {
    verdict: Verdict,
    strip_bound: f64,
    discretization_order: usize,
    roots: Vec<crate::spectral::RootJson>,
    diagnostics: Vec<String>,
}

fn spectrum_result(sp: &Spectrum, margin: f64) -> SpectrumResult {
    SpectrumResult {
        verdict: check_hyperbolic(sp, margin),
        strip_bound: sp.strip_bound,
        discretization_order: sp.discretization_order,
        roots: sp.to_json(),
        diagnostics: sp.diagnostics.clone(),
    }
}

/// Executes one command; returns the process exit code.
pub fn run(config: &RunConfig) -> Result<i32> {
    if let Command::Validate = config.command {
        let path = config
            .system
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("--system is required".into()))?;
        let text = fs::read_to_string(path)?;
        let spec = crate::system::SystemSpec::from_json(&text)?;
        let report = crate::system::validate_spec(&spec)?;
        fs::create_dir_all(&config.out)?;
        write_json(&config.out, "validate.json", config, &report)?;
        return Ok(if report.all_passed() { 0 } else { 2 });
    }
    let sys = match load_system(config) {
        Ok(sys) => sys,
        Err(e @ Error::InvalidSystem(_)) => {
            eprintln!("delaylab: {e}");
            return Ok(2);
        }
        Err(e) => return Err(e),
    };
    fs::create_dir_all(&config.out)?;
    let out = &config.out;
    match &config.command {
        Command::Validate => unreachable!("handled above"),
        Command::Simulate(a) => {
            positive("horizon", a.horizon)?;
            let step = a.step.unwrap_or(sys.default_step());
            positive("step", step)?;
            let u = parse_control(&a.control, &sys, step)?;
            let y0 = match &a.initial {
                Some(p) => read_state(p, &sys)?,
                None => M2State::zero_for(&sys),
            };
            let tr = solve(&sys, &y0, &u, a.horizon, step)?;
            emit_plot_data(out, PlotData::Trajectory(&tr))?;
            #[derive(Serialize)]
            struct R {
                summary: TrajectorySummary,
                snapshots: Vec<crate::state::SnapshotJson>,
            }
            write_json(out, "simulate.json", config, R { summary: (&tr).into(), snapshots: tr.snapshots_json(a.stride) })?;
            Ok(0)
        }
        Command::Spectrum(a) => {
            let sp = compute_spectrum(&sys, a.sigma, a.n_collocation)?;
            emit_plot_data(out, PlotData::Spectrum(&sp))?;
            write_json(out, "spectrum.json", config, spectrum_result(&sp, a.margin))?;
            Ok(0)
        }
        Command::Split(a) => {
            let sp = compute_spectrum(&sys, a.sigma, a.n_collocation)?;
            match hyperbolic_split_with_margin(&sys, &sp, a.margin) {
                Ok(split) => {
                    write_json(out, "split.json", config, split.to_json())?;
                    Ok(0)
                }
                Err(Error::NotHyperbolic) => {
                    write_json(out, "split.json", config, spectrum_result(&sp, a.margin))?;
                    eprintln!("delaylab: {}", Error::NotHyperbolic);
                    Ok(2)
                }
                Err(e) => Err(e),
            }
        }
        Command::Entire(a) => {
            let sp = compute_spectrum(&sys, a.spectrum.sigma, a.spectrum.n_collocation)?;
            let split = match hyperbolic_split_with_margin(&sys, &sp, a.spectrum.margin) {
                Ok(s) => s,
                Err(Error::NotHyperbolic) => {
                    eprintln!("delaylab: {}", Error::NotHyperbolic);
                    return Ok(2);
                }
                Err(e) => return Err(e),
            };
            let solver = EntireSolver::new(&sys, &split, a.tolerance)?;
            let controls = control_family(&sys, &solver, a.samples, config.seed)?;
            let graph = chain_recurrent_graph_with(&solver, &controls)?;
            let bundle = hyperbolic_subbundle_sample(&solver, &controls)?;
            #[derive(Serialize)]
            struct R {
                t_past: f64,
                t_fut: f64,
                graph: Vec<crate::hyperbolic::GraphPointJson>,
                min_equator_distance: f64,
            }
            write_json(
                out,
                "entire.json",
                config,
                R {
                    t_past: solver.t_past,
                    t_fut: solver.t_fut,
                    graph: graph.iter().map(|g| g.to_json()).collect(),
                    min_equator_distance: bundle.min_equator_distance,
                },
            )?;
            Ok(0)
        }
        Command::Chainset(a) => {
            if !sys.zero_in_omega() {
                eprintln!("delaylab: {}", Error::ZeroNotInOmega);
                return Ok(2);
            }
            positive("tau", a.tau)?;
            positive("radius", a.radius)?;
            let reduction = parse_reduction(&a.reduction)?;
            let d = reduction.dim(sys.n());
            let w = 2.0 * a.radius / (1u64 << a.depth) as f64;
            // 0 at a box centre
            let region = Region::new(vec![-a.radius - 0.5 * w; d], vec![a.radius - 0.5 * w; d])?;
            let controls = chainset_controls(&sys, a.constants, a.bang_bang, a.tau, config.seed)?;
            let opts = BoxOptions { tau: a.tau, fattening: a.fattening };
            let cover = approximate_chain_control_set(&sys, reduction, &region, a.depth, &controls, &opts)?;
            emit_plot_data(out, PlotData::Boxes(&cover))?;
            #[derive(Serialize)]
            struct R {
                reduction: Reduction,
                region: Region,
                depth: u32,
                box_count: usize,
                roundtrip_error: f64,
                image_residual: f64,
                boxes: Vec<crate::chain::boxes::BoxJson>,
            }
            write_json(
                out,
                "chainset.json",
                config,
                R {
                    reduction,
                    region: cover.region.clone(),
                    depth: cover.depth,
                    box_count: cover.boxes.len(),
                    roundtrip_error: cover.roundtrip_error,
                    image_residual: cover.image_residual,
                    boxes: cover.to_json(),
                },
            )?;
            Ok(0)
        }
        Command::ChainVerify(a) => {
            let text = fs::read_to_string(&a.chain)?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            let json: ChainJson = serde_path_to_error::deserialize(de).map_err(|e| Error::Parse {
                path: format!("{}: {}", a.chain.display(), e.path()),
                message: e.inner().to_string(),
            })?;
            let mut chain = Chain::from_json(&json, sys.h())?;
            let report = verify_chain(&sys, &mut chain);
            write_json(out, "chain_verify.json", config, &report)?;
            Ok(if report.valid { 0 } else { 2 })
        }
        Command::Lift(a) => {
            positive("horizon", a.horizon)?;
            let step = a.step.unwrap_or(sys.default_step());
            let u = parse_control(&a.control, &sys, step)?;
            let y0 = match &a.initial {
                Some(p) => read_state(p, &sys)?,
                None => M2State::zero_for(&sys),
            };
            let tr = solve(&sys, &y0, &u, a.horizon, step)?;
            let curve: Vec<(f64, f64)> = tr
                .states(a.stride)
                .into_iter()
                .map(|(t, y)| (t, equator_distance(&embed_h1(&u, &y).1)))
                .collect();
            let lifted = lifted_flow(&sys, &LiftedState::new(y0, 1.0), &u, a.horizon)?;
            emit_plot_data(out, PlotData::Equator(&curve))?;
            #[derive(Serialize)]
            struct R {
                final_point: crate::poincare::ProjectiveJson,
                min_equator_distance: f64,
            }
            let final_point = ProjectivePoint::new(&lifted)?.to_json();
            let min = curve.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
            write_json(out, "lift.json", config, R { final_point, min_equator_distance: min })?;
            Ok(0)
        }
    }
}

fn parse_reduction(s: &str) -> Result<Reduction> {
    if s == "head" {
        return Ok(Reduction::HeadConstantHistory);
    }
    if let Some(k) = s.strip_prefix("legendre:") {
        let k = k.parse().map_err(|e| Error::InvalidArgument(format!("bad reduction '{s}': {e}")))?;
        return Ok(Reduction::HeadLegendre { k });
    }
    Err(Error::InvalidArgument(format!("unknown reduction '{s}' (use head or legendre:<k>)")))
}

/// Constant controls on a grid between Omega's vertices (pairwise segments), plus random
/// bang-bang signals, all covering `[-h, tau]`.
pub fn chainset_controls(sys: &DelaySystem, constants: usize, bang_bang: usize, tau: f64, seed: u64) -> Result<Vec<ControlSignal>> {
    let step = sys.default_step();
    let verts = sys.omega().vertices();
    let mut values: Vec<Vec<f64>> = Vec::new();
    let k = constants.max(1);
    for (i, a) in verts.iter().enumerate() {
        for b in verts.iter().skip(i) {
            for j in 0..k {
                let s = if k == 1 { 0.5 } else { j as f64 / (k - 1) as f64 };
                let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| (1.0 - s) * x + s * y).collect();
                if !values.contains(&v) {
                    values.push(v);
                }
            }
        }
    }
    let mut out = values
        .iter()
        .map(|v| ControlSignal::constant(v, -sys.h(), step))
        .collect::<Result<Vec<_>>>()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..bang_bang {
        out.push(ControlSignal::random_bang_bang(&mut rng, sys.omega(), -sys.h(), tau, step, 0.25)?);
    }
    Ok(out)
}

/// Parses `args`, runs, reports errors on stderr; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&config) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("delaylab: {e}");
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const STABLE: &str = r#"{"n": 1, "m": 1, "delays": [1.0], "A": [[[-1.0]], [[-0.5]]], "B": [[[1.0]], [[0.0]]], "omega": {"vertices": [[-1.0], [1.0]]}}"#;

    fn setup() -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let sys = dir.path().join("sys.json");
        fs::write(&sys, STABLE).unwrap();
        (dir, sys)
    }

    fn call(args: &[&str]) -> i32 {
        main_with_args(std::iter::once("delaylab").chain(args.iter().copied()))
    }

    #[test]
    fn validate_and_simulate() {
        let (dir, sys) = setup();
        let out = dir.path().join("out");
        let (s, o) = (sys.to_str().unwrap(), out.to_str().unwrap());
        assert_eq!(call(&["validate", "--system", s, "--out", o]), 0);
        let report = fs::read_to_string(out.join("validate.json")).unwrap();
        assert!(report.contains("\"injectivity\"") && report.contains(VERSION));
        assert_eq!(call(&["simulate", "--system", s, "--out", o, "--horizon", "1"]), 0);
        let csv = fs::read_to_string(out.join("trajectory.csv")).unwrap();
        assert!(csv.lines().skip(1).all(|l| l.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 0.0)));
    }

    #[test]
    fn malformed_spec_names_key() {
        let (dir, _) = setup();
        let bad = dir.path().join("bad.json");
        fs::write(&bad, r#"{"n": 1, "m": 1, "delays": [1.0], "A": [[[-1.0]], [["x"]]], "B": [[[1.0]], [[0.0]]], "omega": {"vertices": [[0.0]]}}"#).unwrap();
        let err = load_system(&RunConfig {
            system: Some(bad.clone()),
            out: dir.path().into(),
            seed: 0,
            command: Command::Validate,
        })
        .unwrap_err();
        assert!(err.to_string().contains("A[1]"), "{err}");
        assert_eq!(call(&["spectrum", "--system", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--n-collocation", "8"]), 1);
    }

    #[test]
    fn spectrum_csv_and_unknown_command() {
        let (dir, sys) = setup();
        let o = dir.path().to_str().unwrap();
        assert_eq!(call(&["spectrum", "--system", sys.to_str().unwrap(), "--out", o, "--sigma", "-1"]), 0);
        let csv = fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
        assert_eq!(csv.lines().next(), Some("re,im"));
        assert_eq!(call(&["frobnicate"]), 1);
    }
}
