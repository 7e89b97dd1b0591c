use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::Args;
use fracpot::capacity::{
    ball_capacity_upper, estimate_capacity_with, scale_measure_admissible, wolff_ratio, wolff_threshold,
    CapacityEstimate, CapacityOptions, CellMask,
};
use fracpot::io::{read_field, read_mask_spec, write_csv, write_field, write_radial_csv};
use fracpot::riesz::{riesz_gradient_measure, riesz_potential_measure};
use fracpot::solver::{constants_ledger, picard_solve, SolveOptions, SolveReport};
use fracpot::{validate_parameters, Grid, GridField, VectorGridField};
use serde::Serialize;
use serde_json::{json, Value};

use crate::checks::{self, CheckOutcome, Context};
use crate::config::{Check, Scenario, ScenarioConfig};
use crate::{CliError, GlobalOpts};

/// Radii of the capacity sweep.
pub const SWEEP_RADII: [f64; 4] = [0.25, 0.5, 1.0, 2.0];

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn print_json(value: &impl Serialize) -> Result<(), CliError> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn make_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))
}

fn load(g: &GlobalOpts) -> Result<Scenario, CliError> {
    let path = g
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("this command needs --config".into()))?;
    let mut sc = Scenario::load(path)?;
    if let Some(t) = g.theta {
        sc.config.theta = t;
    }
    Ok(sc)
}

// Applies --auto-scale; returns the factor used.
fn maybe_scale(g: &GlobalOpts, sc: &mut Scenario) -> Result<f64, CliError> {
    if !g.auto_scale || sc.measure.is_zero() {
        return Ok(1.0);
    }
    let (t, _) = scale_measure_admissible(&sc.measure, sc.config.theta, &sc.params, sc.grid)?;
    sc.measure = sc.measure.scaled(t);
    Ok(t)
}

/// Run timing, thread count and version. Kept apart from the report so that the report
/// itself only depends on the inputs.
fn write_metadata(dir: &Path, command: &str, started: Instant) -> Result<(), CliError> {
    let unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let meta = json!({
        "command": command,
        "fracpot_version": env!("CARGO_PKG_VERSION"),
        "threads": rayon::current_num_threads(),
        "finished_unix_seconds": unix,
        "wall_seconds": started.elapsed().as_secs_f64(),
    });
    write_json(&dir.join("metadata.json"), &meta)
}

pub fn constants(g: &GlobalOpts, n: Option<usize>, s: Option<f64>, q: Option<f64>) -> Result<u8, CliError> {
    let (params, theta) = match (n, s, q) {
        (Some(n), Some(s), Some(q)) => (validate_parameters(n, s, q)?, g.theta.unwrap_or(0.5)),
        (None, None, None) => {
            let path = g
                .config
                .as_ref()
                .ok_or_else(|| CliError::Config("give --n, --s and --q, or --config".into()))?;
            let c = ScenarioConfig::read(path)?;
            (validate_parameters(c.params.n, c.params.s, c.params.q)?, g.theta.unwrap_or(c.theta))
        }
        _ => return Err(CliError::Config("--n, --s and --q go together".into())),
    };
    print_json(&constants_ledger(&params, theta)?)?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct SolveOutput<'a> {
    config: &'a ScenarioConfig,
    scale_factor: f64,
    solve: &'a SolveReport,
    checks: Vec<CheckOutcome>,
    passed: bool,
}

pub fn solve(g: &GlobalOpts) -> Result<u8, CliError> {
    let started = Instant::now();
    let mut sc = load(g)?;
    let dir = sc.output_dir(g.out.as_deref());
    make_dir(&dir)?;
    let t = maybe_scale(g, &mut sc)?;
    let opts = SolveOptions { theta: sc.config.theta, tol: sc.config.tol, max_iter: sc.config.max_iter };
    let sol = picard_solve(&sc.measure, &sc.params, sc.grid, opts)?;

    write_field(&dir.join("u.field"), &sol.u).map_err(|e| io_err(&dir, e))?;
    for (d, c) in sol.grad.components.iter().enumerate() {
        write_field(&dir.join(format!("grad_u_{d}.field")), c).map_err(|e| io_err(&dir, e))?;
    }
    write_csv(&dir.join("u.csv"), &sol.u).map_err(|e| io_err(&dir, e))?;

    let ctx = Context {
        u: &sol.u,
        grad: Some(&sol.grad),
        omega: &sc.measure,
        params: &sc.params,
        ledger: &sol.report.ledger,
    };
    let outcomes = checks::run_all(&sc.config.checks, &ctx)?;
    let passed = sol.report.converged && outcomes.iter().all(|c| c.passed);
    let out = SolveOutput { config: &sc.config, scale_factor: t, solve: &sol.report, checks: outcomes, passed };
    write_json(&dir.join("report.json"), &out)?;
    write_metadata(&dir, "solve", started)?;
    eprintln!(
        "fracpot: {} after {} iterations, report in {}",
        if sol.report.converged { "converged" } else { "not converged" },
        sol.report.iterations,
        dir.display()
    );
    Ok(if passed { 0 } else { 1 })
}

#[derive(Debug, Clone, Args)]
pub struct CapacityArgs {
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    /// Box half-width.
    #[arg(long = "L", default_value_t = 8.0)]
    pub half_width: f64,
    /// Points per axis.
    #[arg(long = "N", default_value_t = 256)]
    pub points: usize,
    #[arg(long)]
    pub alpha: f64,
    #[arg(long)]
    pub p: f64,
    /// Mask file: a list of cell indices or {"ball": {...}}.
    #[arg(long, conflicts_with_all = ["radius", "sweep"])]
    pub mask: Option<PathBuf>,
    /// Ball radius, centred at --center.
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub center: Option<Vec<f64>>,
    /// Estimate balls of radius 0.25, 0.5, 1, 2 and fit the power law.
    #[arg(long)]
    pub sweep: bool,
    #[arg(long, default_value_t = 5000)]
    pub max_iter: usize,
}

/// Slope of the least-squares line through `(log r, log c)`.
pub fn loglog_slope(pts: &[(f64, f64)]) -> f64 {
    let m = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn capacity(g: &GlobalOpts, a: &CapacityArgs) -> Result<u8, CliError> {
    let grid = Grid::new(a.n, a.half_width, a.points)?;
    let opts = CapacityOptions { max_iter: a.max_iter, ..CapacityOptions::default() };
    let center = a.center.clone().unwrap_or_else(|| vec![0.0; a.n]);
    if center.len() != a.n {
        return Err(CliError::Config(format!("--center needs {} coordinates", a.n)));
    }
    if a.sweep {
        let mut rows: Vec<(f64, CapacityEstimate)> = Vec::new();
        for &r in &SWEEP_RADII {
            let mask = CellMask::ball(grid, &center, r);
            rows.push((r, estimate_capacity_with(&mask, a.alpha, a.p, grid, opts)?));
        }
        let mut csv = String::from("r,estimate,upper_bound,lower_bound,analytic_bound,iterations\n");
        for (r, e) in &rows {
            let analytic = ball_capacity_upper(a.n, a.alpha, a.p, *r)?;
            csv.push_str(&format!(
                "{r},{},{},{},{analytic},{}\n",
                e.value, e.upper_bound, e.lower_bound, e.iterations
            ));
        }
        let slope = loglog_slope(&rows.iter().map(|(r, e)| (*r, e.value)).collect::<Vec<_>>());
        let expected = a.n as f64 - a.alpha * a.p;
        print!("{csv}");
        println!("# fitted slope {slope} (expected n - alpha p = {expected})");
        if let Some(dir) = &g.out {
            make_dir(dir)?;
            let path = dir.join("capacity_sweep.csv");
            fs::write(&path, &csv).map_err(|e| io_err(&path, e))?;
            write_json(&dir.join("capacity_sweep.json"), &json!({ "slope": slope, "expected_slope": expected }))?;
        }
        return Ok(0);
    }
    let mask = match (&a.mask, a.radius) {
        (Some(path), _) => read_mask_spec(path)?.build(grid)?,
        (None, Some(r)) => CellMask::ball(grid, &center, r),
        (None, None) => return Err(CliError::Config("give --mask, --radius or --sweep".into())),
    };
    let est = estimate_capacity_with(&mask, a.alpha, a.p, grid, opts)?;
    print_json(&est)?;
    if let Some(dir) = &g.out {
        make_dir(dir)?;
        write_json(&dir.join("capacity.json"), &est)?;
        write_field(&dir.join("capacity_candidate.field"), &est.candidate).map_err(|e| io_err(dir, e))?;
    }
    Ok(0)
}

pub fn wolff(g: &GlobalOpts) -> Result<u8, CliError> {
    let sc = load(g)?;
    let rep = wolff_ratio(&sc.measure, &sc.params, sc.grid)?;
    let limit = sc.config.theta * wolff_threshold(&sc.params)?;
    let factor = (limit / rep.c1hat).powf(1.0 / (sc.params.q - 1.0));
    let out = json!({
        "admissibility": rep,
        "theta_target": sc.config.theta,
        "limit": limit,
        "admissible": rep.c1hat <= limit,
        "scale_to_target": factor,
    });
    print_json(&out)?;
    if let Some(dir) = &g.out {
        make_dir(dir)?;
        write_json(&dir.join("wolff.json"), &out)?;
    }
    Ok(0)
}

#[derive(Debug, Clone, Args)]
pub struct FieldArgs {
    /// Potential field; defaults to u.field in the output directory.
    #[arg(long)]
    pub u: Option<PathBuf>,
    /// Gradient component fields, in axis order; default grad_u_<d>.field next to u.
    #[arg(long, value_delimiter = ',')]
    pub grad: Option<Vec<PathBuf>>,
}

fn read_checked(path: &Path, grid: &Grid) -> Result<GridField, CliError> {
    let f = read_field(path).map_err(|e| match e {
        fracpot::Error::Io(io) => io_err(path, io),
        other => CliError::Core(other),
    })?;
    if !f.grid.matches(grid) {
        return Err(CliError::Mismatch(format!(
            "{} has grid n={} L={} N={}, the scenario has n={} L={} N={}",
            path.display(),
            f.grid.n,
            f.grid.half_width,
            f.grid.points,
            grid.n,
            grid.half_width,
            grid.points
        )));
    }
    Ok(f)
}

fn read_gradient(a: &FieldArgs, u_path: &Path, grid: &Grid) -> Result<Option<VectorGridField>, CliError> {
    let paths: Vec<PathBuf> = match &a.grad {
        Some(p) => p.clone(),
        None => {
            let dir = u_path.parent().unwrap_or(Path::new("."));
            let guess: Vec<PathBuf> = (0..grid.n).map(|d| dir.join(format!("grad_u_{d}.field"))).collect();
            if !guess.iter().all(|p| p.exists()) {
                return Ok(None);
            }
            guess
        }
    };
    if paths.len() != grid.n {
        return Err(CliError::Config(format!("expected {} gradient fields, got {}", grid.n, paths.len())));
    }
    let comps = paths.iter().map(|p| read_checked(p, grid)).collect::<Result<Vec<_>, _>>()?;
    Ok(Some(VectorGridField::from_components(comps)?))
}

/// Checks every stored solution must pass.
const VERIFY_CHECKS: [Check; 5] =
    [Check::WeakResidual, Check::Representation, Check::Sandwich, Check::Decay, Check::Positivity];

pub fn verify(g: &GlobalOpts, a: &FieldArgs) -> Result<u8, CliError> {
    let started = Instant::now();
    let mut sc = load(g)?;
    let dir = sc.output_dir(g.out.as_deref());
    let u_path = a.u.clone().unwrap_or_else(|| sc.output_dir(None).join("u.field"));
    let u = read_checked(&u_path, &sc.grid)?;
    let grad = read_gradient(a, &u_path, &sc.grid)?
        .ok_or_else(|| CliError::Config("verify needs the gradient fields (--grad)".into()))?;
    let t = maybe_scale(g, &mut sc)?;
    let ledger = constants_ledger(&sc.params, sc.config.theta)?;
    let ctx = Context { u: &u, grad: Some(&grad), omega: &sc.measure, params: &sc.params, ledger: &ledger };
    let mut list: Vec<Check> = VERIFY_CHECKS.to_vec();
    list.extend(sc.config.checks.iter().filter(|c| !VERIFY_CHECKS.contains(c)));
    let outcomes = checks::run_all(&list, &ctx)?;
    let passed = outcomes.iter().all(|c| c.passed);
    let out = json!({
        "config": sc.config,
        "scale_factor": t,
        "ledger": ledger,
        "checks": outcomes,
        "passed": passed,
    });
    make_dir(&dir)?;
    write_json(&dir.join("verify.json"), &out)?;
    write_metadata(&dir, "verify", started)?;
    for c in &outcomes {
        eprintln!("fracpot: {:?} {}", c.name, if c.passed { "pass" } else { "FAIL" });
    }
    Ok(if passed { 0 } else { 1 })
}

pub fn diagnostics(g: &GlobalOpts, a: &FieldArgs) -> Result<u8, CliError> {
    let mut sc = load(g)?;
    let t = maybe_scale(g, &mut sc)?;
    let (u, grad, source) = match &a.u {
        Some(p) => {
            let u = read_checked(p, &sc.grid)?;
            let grad = read_gradient(a, p, &sc.grid)?;
            (u, grad, p.display().to_string())
        }
        None => {
            let two_s = sc.params.two_s();
            let u = riesz_potential_measure(&sc.measure, two_s, sc.grid)?;
            let grad = riesz_gradient_measure(&sc.measure, sc.params.s, sc.grid)?;
            (u, Some(grad), "I_2s(omega)".to_string())
        }
    };
    let ledger = constants_ledger(&sc.params, sc.config.theta)?;
    let ctx = Context { u: &u, grad: grad.as_ref(), omega: &sc.measure, params: &sc.params, ledger: &ledger };
    let list = [Check::Marcinkiewicz, Check::Distribution, Check::Decay, Check::Positivity];
    let outcomes = checks::run_all(&list, &ctx)?;
    let out: Value = json!({
        "field": source,
        "params": sc.params,
        "grid": sc.grid,
        "scale_factor": t,
        "checks": outcomes,
    });
    print_json(&out)?;
    if let Some(dir) = &g.out {
        make_dir(dir)?;
        write_json(&dir.join("diagnostics.json"), &out)?;
        let path = dir.join("radial.csv");
        write_radial_csv(&path, &u, 0.0, sc.grid.half_width).map_err(|e| io_err(&path, e))?;
    }
    Ok(0)
}
