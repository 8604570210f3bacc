//! Subcommands of the `finsler` binary.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use finsler_core::connection::{null_ricci_scan, ricci_scalar};
use finsler_core::geodesic::{completeness_probe, integrate_geodesic, GeodesicOptions};
use finsler_core::submanifold::trapped_test;
use finsler_core::variational::{solve_jacobi, JacobiInit};
use serde::Serialize;

use crate::pipeline::{fire_congruences, run_penrose, RayRecord};
use crate::scenario::{Scenario, ScenarioError, World};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "finsler",
    version,
    about = "Geodesics, focal points and trapped surfaces on Finsler spacetimes"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Scenario file (JSON).
    #[arg(long, global = true)]
    pub scenario: Option<PathBuf>,
    /// Directory for reports and CSV files.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub tol_cone: Option<f64>,
    #[arg(long, global = true)]
    pub tol_degeneracy: Option<f64>,
    #[arg(long, global = true)]
    pub tol_trapped: Option<f64>,
    #[arg(long, global = true)]
    pub tol_ricci: Option<f64>,
    #[arg(long, global = true)]
    pub tol_focal: Option<f64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the spacetime axioms.
    Validate,
    /// Integrate the scenario rays; CSV per ray plus a termination record.
    Geodesic {
        /// Only this ray.
        #[arg(long)]
        ray: Option<String>,
    },
    /// Jacobi fields along one null normal ray of a patch.
    Jacobi {
        #[arg(long)]
        patch: Option<String>,
        /// Grid point index on the patch.
        #[arg(long, default_value_t = 0)]
        point: usize,
        /// Which of the two null normals (0 or 1).
        #[arg(long, default_value_t = 0)]
        normal: usize,
        /// Affine length; defaults to the bundle budget.
        #[arg(long)]
        length: Option<f64>,
    },
    /// Focal points along every null normal ray of a patch.
    Focal {
        #[arg(long)]
        patch: Option<String>,
    },
    /// Trapped-surface test on a patch.
    Trapped {
        #[arg(long)]
        patch: Option<String>,
    },
    /// Sample the null Ricci scalar.
    RicciScan,
    /// Full pipeline with a verdict.
    Penrose,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Geometry(#[from] finsler_core::GeometryError),
    #[error("{0}")]
    Usage(String),
    #[error("writing {path}: {message}")]
    Output { path: String, message: String },
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn load(common: &Common) -> CliResult<Scenario> {
    let path = common
        .scenario
        .as_ref()
        .ok_or_else(|| CliError::Usage("--scenario <file> is required".into()))?;
    let mut s = Scenario::load(path)?;
    if let Some(seed) = common.seed {
        s.seed = seed;
    }
    let t = &mut s.tolerances;
    for (slot, over) in [
        (&mut t.cone, common.tol_cone),
        (&mut t.degeneracy, common.tol_degeneracy),
        (&mut t.trapped, common.tol_trapped),
        (&mut t.ricci, common.tol_ricci),
        (&mut t.focal, common.tol_focal),
    ] {
        if let Some(v) = over {
            *slot = v;
        }
    }
    s.check()?;
    Ok(s)
}

fn patch_id(scenario: &Scenario, requested: &Option<String>) -> CliResult<String> {
    if let Some(id) = requested {
        return Ok(id.clone());
    }
    if let Some(b) = &scenario.bundle {
        return Ok(b.patch.clone());
    }
    match scenario.patches.as_slice() {
        [only] => Ok(only.id.clone()),
        _ => Err(CliError::Usage("choose a patch with --patch".into())),
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> CliResult<()> {
    let path = dir.join(name);
    let err = |m: String| CliError::Output {
        path: path.display().to_string(),
        message: m,
    };
    let text = serde_json::to_string_pretty(value).map_err(|e| err(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(|e| err(e.to_string()))
}

fn write_csv(dir: &Path, name: &str, header: &[String], rows: &[Vec<String>]) -> CliResult<()> {
    let path = dir.join(name);
    let err = |m: String| CliError::Output {
        path: path.display().to_string(),
        message: m,
    };
    let mut w = csv::Writer::from_path(&path).map_err(|e| err(e.to_string()))?;
    w.write_record(header).map_err(|e| err(e.to_string()))?;
    for r in rows {
        w.write_record(r).map_err(|e| err(e.to_string()))?;
    }
    w.flush().map_err(|e| err(e.to_string()))
}

fn cols(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (0..n).map(move |i| format!("{prefix}{i}"))
}

fn num(x: f64) -> String {
    format!("{x:e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

fn dispatch(cli: &Cli) -> CliResult<i32> {
    let scenario = load(&cli.common)?;
    let out = &cli.common.out;
    fs::create_dir_all(out).map_err(|e| CliError::Output {
        path: out.display().to_string(),
        message: e.to_string(),
    })?;
    match &cli.command {
        Command::Validate => validate(&scenario, out),
        Command::Geodesic { ray } => geodesic(&scenario, out, ray.as_deref()),
        Command::Jacobi {
            patch,
            point,
            normal,
            length,
        } => jacobi(
            &scenario,
            out,
            &patch_id(&scenario, patch)?,
            *point,
            *normal,
            *length,
        ),
        Command::Focal { patch } => focal(&scenario, out, &patch_id(&scenario, patch)?),
        Command::Trapped { patch } => trapped(&scenario, out, &patch_id(&scenario, patch)?),
        Command::RicciScan => ricci(&scenario, out),
        Command::Penrose => penrose(&scenario, out),
    }
}

fn code(pass: bool) -> i32 {
    if pass {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

fn validate(s: &Scenario, out: &Path) -> CliResult<i32> {
    let world = s.build()?;
    let report = world.model.validate_axioms(&s.sampler_config());
    write_json(out, "validation.json", &report)?;
    for c in &report.checks {
        println!(
            "{:<28} {} ({} samples, {} failures)",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.samples,
            c.failures
        );
    }
    Ok(code(report.passed))
}

#[derive(Serialize)]
struct GeodesicRecord<'a> {
    ray: &'a str,
    x0: Vec<f64>,
    v0: Vec<f64>,
    requested: f64,
    reached: f64,
    termination: finsler_core::geodesic::Termination,
    l_drift: f64,
    completeness: Option<finsler_core::geodesic::CompletenessReport>,
}

fn geodesic(s: &Scenario, out: &Path, only: Option<&str>) -> CliResult<i32> {
    let world = s.build()?;
    let m = &world.model;
    let n = m.dim();
    let rays: Vec<_> = s
        .rays
        .iter()
        .filter(|r| only.is_none_or(|id| id == r.id))
        .collect();
    if rays.is_empty() {
        return Err(CliError::Usage("no matching rays in the scenario".into()));
    }
    for ray in rays {
        let v0 = match (&ray.v, &ray.toward) {
            (Some(v), _) => v.clone(),
            (None, Some(d)) => m.null_toward(&ray.x, d)?,
            (None, None) => unreachable!("checked when the scenario was loaded"),
        };
        let path = integrate_geodesic(m, &ray.x, &v0, ray.length, &GeodesicOptions::default())?;
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain(cols("x", n))
            .chain(cols("v", n))
            .chain(["L".to_string()])
            .collect();
        let rows: Vec<Vec<String>> = path
            .nodes()
            .map(|(t, x, v)| {
                std::iter::once(num(t))
                    .chain(x.iter().chain(v).map(|c| num(*c)))
                    .chain([num(m.l(x, v))])
                    .collect()
            })
            .collect();
        write_csv(out, &format!("geodesic-{}.csv", ray.id), &header, &rows)?;
        let completeness = if m
            .classify_vector(&ray.x, &v0)
            .is_ok_and(|c| c.is_future_causal())
        {
            completeness_probe(m, &ray.x, &v0, ray.length).ok()
        } else {
            None
        };
        let rec = GeodesicRecord {
            ray: &ray.id,
            x0: ray.x.clone(),
            v0,
            requested: ray.length,
            reached: path.span(),
            termination: path.termination.clone(),
            l_drift: path.l_drift(),
            completeness,
        };
        println!(
            "{}: reached {} of {} ({:?})",
            ray.id, rec.reached, ray.length, rec.termination
        );
        write_json(out, &format!("geodesic-{}.json", ray.id), &rec)?;
    }
    Ok(EXIT_PASS)
}

#[derive(Serialize)]
struct JacobiSummary {
    patch: String,
    u: Vec<f64>,
    normal: usize,
    z: Vec<f64>,
    k: f64,
    span: f64,
    termination: finsler_core::geodesic::Termination,
    lagrange_drift: f64,
}

/// Samples written per Jacobi CSV.
const JACOBI_ROWS: usize = 200;

fn jacobi(
    s: &Scenario,
    out: &Path,
    id: &str,
    point: usize,
    normal: usize,
    length: Option<f64>,
) -> CliResult<i32> {
    let world = s.build()?;
    let (m, patch) = (&world.model, world.patch(id)?);
    let grid = patch.grid();
    let u = grid
        .get(point)
        .ok_or_else(|| CliError::Usage(format!("patch '{id}' has {} grid points", grid.len())))?;
    if normal > 1 {
        return Err(CliError::Usage("--normal is 0 or 1".into()));
    }
    let length = length
        .or(s.bundle.as_ref().map(|b| b.budget))
        .ok_or_else(|| CliError::Usage("give --length or a bundle budget".into()))?;
    let tp = finsler_core::submanifold::trapped_point(m, patch, u)?;
    let z = &tp.normals[normal];
    let path = integrate_geodesic(m, &tp.x, z, length, &GeodesicOptions::default())?;
    let sys = solve_jacobi(m, &path, &JacobiInit::submanifold(m, patch, u, z)?)?;
    let n = m.dim();
    let count = n - 2;
    let mut header: Vec<String> = std::iter::once("t".to_string())
        .chain(cols("x", n))
        .collect();
    for j in 0..count {
        header.extend(cols(&format!("J{j}_"), n));
    }
    header.extend(["detA".to_string(), "Ric".to_string()]);
    let span = sys.span();
    let rows: Vec<Vec<String>> = (0..=JACOBI_ROWS)
        .map(|i| {
            let t = span * i as f64 / JACOBI_ROWS as f64;
            let x = sys.position(t);
            let mut row: Vec<String> = std::iter::once(num(t))
                .chain(x.iter().map(|c| num(*c)))
                .collect();
            for j in 0..count {
                row.extend(sys.field(j, t).iter().map(|c| num(*c)));
            }
            row.push(num(sys.focal_matrix(t).determinant()));
            row.push(opt(ricci_scalar(m, &x, &sys.velocity(t)).ok()));
            row
        })
        .collect();
    let stem = format!("jacobi-{id}-{point}-{normal}");
    write_csv(out, &format!("{stem}.csv"), &header, &rows)?;
    write_json(
        out,
        &format!("{stem}.json"),
        &JacobiSummary {
            patch: id.to_string(),
            u: u.clone(),
            normal,
            z: z.clone(),
            k: tp.expansions[normal],
            span,
            termination: sys.termination.clone(),
            lagrange_drift: sys.lagrange_drift(),
        },
    )?;
    Ok(EXIT_PASS)
}

fn ray_rows(world: &World, rays: &[RayRecord]) -> (Vec<String>, Vec<Vec<String>>) {
    let n = world.model.dim();
    let header: Vec<String> = ["index".to_string()]
        .into_iter()
        .chain(cols("u", n - 2))
        .chain(
            [
                "normal",
                "k",
                "first_focal",
                "bound",
                "bound_satisfied",
                "ricci_min",
                "breakdown",
            ]
            .map(String::from),
        )
        .collect();
    let rows = rays
        .iter()
        .map(|r| {
            let f = r.focal.as_ref();
            [r.index.to_string()]
                .into_iter()
                .chain(r.u.iter().map(|c| num(*c)))
                .chain([
                    r.normal.to_string(),
                    num(r.k),
                    opt(f.and_then(|f| f.bound.first_focal)),
                    opt(f.map(|f| f.bound.bound)),
                    f.map(|f| f.bound.satisfied.to_string()).unwrap_or_default(),
                    opt(r.ricci_min),
                    opt(r.breakdown()),
                ])
                .collect()
        })
        .collect();
    (header, rows)
}

fn focal(s: &Scenario, out: &Path, id: &str) -> CliResult<i32> {
    let world = s.build()?;
    let (m, patch) = (&world.model, world.patch(id)?);
    let budget = s
        .bundle
        .as_ref()
        .map(|b| b.budget)
        .ok_or_else(|| CliError::Usage("focal needs a bundle budget".into()))?;
    let tr = trapped_test(m, patch, s.tolerances.trapped)?;
    let rays = fire_congruences(m, patch, &tr, budget, s.tolerances.focal);
    let (header, rows) = ray_rows(&world, &rays);
    write_csv(out, "focal.csv", &header, &rows)?;
    write_json(out, "focal.json", &rays)?;
    // The bound is only claimed for rays with positive expansion.
    let pass = rays
        .iter()
        .filter(|r| r.k > 0.0)
        .all(|r| r.focal.as_ref().is_some_and(|f| f.bound.satisfied));
    Ok(code(pass))
}

fn trapped(s: &Scenario, out: &Path, id: &str) -> CliResult<i32> {
    let world = s.build()?;
    let (m, patch) = (&world.model, world.patch(id)?);
    let rep = trapped_test(m, patch, s.tolerances.trapped)?;
    let n = m.dim();
    let header: Vec<String> = cols("u", n - 2)
        .chain(cols("x", n))
        .chain(["k0".into(), "k1".into()])
        .collect();
    let rows: Vec<Vec<String>> = rep
        .points
        .iter()
        .map(|p| {
            p.u.iter()
                .chain(&p.x)
                .chain(&p.expansions)
                .map(|c| num(*c))
                .collect()
        })
        .collect();
    write_csv(out, "trapped.csv", &header, &rows)?;
    write_json(out, "trapped.json", &rep)?;
    println!(
        "patch {}: min expansion {:e}, trapped = {}",
        rep.patch, rep.min_expansion, rep.trapped
    );
    Ok(code(rep.trapped))
}

fn ricci(s: &Scenario, out: &Path) -> CliResult<i32> {
    let world = s.build()?;
    let rep = null_ricci_scan(&world.model, &s.sampler_config(), s.tolerances.ricci);
    write_json(out, "ricci.json", &rep)?;
    println!(
        "null Ricci: {} samples, min {:e}, passed = {}",
        rep.samples, rep.min, rep.passed
    );
    Ok(code(rep.passed))
}

fn penrose(s: &Scenario, out: &Path) -> CliResult<i32> {
    let world = s.build()?;
    let rep = run_penrose(s)?;
    let (header, rows) = ray_rows(&world, &rep.rays);
    write_csv(out, "rays.csv", &header, &rows)?;
    write_json(out, "penrose.json", &rep)?;
    println!(
        "verdict: {}",
        serde_json::to_string(&rep.verdict).unwrap_or_default()
    );
    Ok(rep.verdict.exit_code())
}
