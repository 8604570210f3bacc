//! The singularity pipeline: hypotheses, then the null congruences of the
//! trapped patch, then a verdict computed from the component reports alone.

use finsler_core::connection::{null_ricci_scan, ricci_scalar, RicciScanReport};
use finsler_core::geodesic::{
    completeness_probe, integrate_geodesic, Completeness, CompletenessReport, GeodesicOptions,
};
use finsler_core::spacetime::ValidationReport;
use finsler_core::submanifold::{trapped_test, SurfacePatch, TrappedReport};
use finsler_core::variational::{
    bound_check, find_focal_points, solve_jacobi, BoundCheck, FocalPoint, JacobiInit,
};
use finsler_core::{Result, SpacetimeModel};
use rayon::prelude::*;
use serde::Serialize;

use crate::scenario::{Scenario, ScenarioError, World, SCHEMA_VERSION};

/// Stamp carried by every user-asserted hypothesis.
pub const ASSERTED: &str = "asserted, not verified";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hypothesis {
    Axioms,
    Trapped,
    NullRicci,
    Assertions,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    HypothesesSupportedIncompletenessWitnessed,
    HypothesesSupportedNoWitnessInBudget,
    HypothesisFailed { which: Hypothesis, detail: String },
}

impl Verdict {
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::HypothesisFailed { .. } => 1,
            _ => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AssertionEcho {
    pub stamp: &'static str,
    pub entries: Vec<(String, Option<bool>)>,
    pub first_missing: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FocalSummary {
    pub span: f64,
    pub points: Vec<FocalPoint>,
    pub bound: BoundCheck,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RayRecord {
    pub index: usize,
    pub u: Vec<f64>,
    pub normal: usize,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub k: f64,
    /// Smallest null Ricci value sampled along the ray.
    pub ricci_min: Option<f64>,
    pub focal: Option<FocalSummary>,
    pub completeness: Option<CompletenessReport>,
    pub errors: Vec<String>,
}

impl RayRecord {
    pub fn breakdown(&self) -> Option<f64> {
        match self.completeness.as_ref()?.outcome {
            Completeness::Incomplete { t_star } => Some(t_star),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PenroseReport {
    pub schema_version: u32,
    pub scenario: String,
    pub model: String,
    pub seed: u64,
    pub budget: f64,
    pub axioms: ValidationReport,
    pub trapped: std::result::Result<TrappedReport, String>,
    pub null_ricci: RicciScanReport,
    pub assertions: AssertionEcho,
    pub rays: Vec<RayRecord>,
    pub witnessed: usize,
    pub verdict: Verdict,
}

/// Verdict as a function of the component reports, checked in pipeline order.
pub fn verdict(
    axioms: &ValidationReport,
    trapped: &std::result::Result<TrappedReport, String>,
    ricci: &RicciScanReport,
    assertions: &AssertionEcho,
    rays: &[RayRecord],
) -> Verdict {
    let failed = |which, detail: String| Verdict::HypothesisFailed { which, detail };
    if !axioms.passed {
        let names: Vec<&str> = axioms
            .checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| c.name)
            .collect();
        return failed(
            Hypothesis::Axioms,
            format!("failed checks: {}", names.join(", ")),
        );
    }
    match trapped {
        Err(e) => return failed(Hypothesis::Trapped, e.clone()),
        Ok(t) if !t.trapped => {
            return failed(
                Hypothesis::Trapped,
                format!("minimum expansion {} ≤ {}", t.min_expansion, t.epsilon),
            )
        }
        Ok(_) => {}
    }
    if !ricci.passed {
        return failed(
            Hypothesis::NullRicci,
            format!("minimum sampled null Ricci {}", ricci.min),
        );
    }
    if let Some(name) = &assertions.first_missing {
        return failed(Hypothesis::Assertions, format!("'{name}' is not asserted"));
    }
    if rays.iter().any(|r| r.breakdown().is_some()) {
        Verdict::HypothesesSupportedIncompletenessWitnessed
    } else {
        Verdict::HypothesesSupportedNoWitnessInBudget
    }
}

/// Null Ricci samples along a ray, at interior fractions of its span.
const RICCI_SAMPLES: usize = 8;

fn fire_ray(
    model: &SpacetimeModel,
    patch: &SurfacePatch,
    u: &[f64],
    z: &[f64],
    k: f64,
    budget: f64,
    focal_tol: f64,
) -> (
    Option<f64>,
    Option<FocalSummary>,
    Option<CompletenessReport>,
    Vec<String>,
) {
    let mut errors = Vec::new();
    let x = patch.point(u);
    let focal = (|| -> Result<(FocalSummary, Option<f64>)> {
        let path = integrate_geodesic(model, &x, z, budget, &GeodesicOptions::default())?;
        let span = path.span();
        let ricci_min = (1..=RICCI_SAMPLES)
            .filter_map(|i| {
                let t = span * i as f64 / (RICCI_SAMPLES + 1) as f64;
                ricci_scalar(model, &path.position(t), &path.velocity(t)).ok()
            })
            .reduce(f64::min);
        let init = JacobiInit::submanifold(model, patch, u, z)?;
        let system = solve_jacobi(model, &path, &init)?;
        let report = find_focal_points(&system, (0.0, system.span()))?;
        let bound = bound_check(&report, system.span(), k, model.dim(), focal_tol);
        Ok((
            FocalSummary {
                span: system.span(),
                points: report.points,
                bound,
            },
            ricci_min,
        ))
    })();
    let (focal, ricci_min) = match focal {
        Ok((f, r)) => (Some(f), r),
        Err(e) => {
            errors.push(format!("focal: {e}"));
            (None, None)
        }
    };
    let completeness = match completeness_probe(model, &x, z, budget) {
        Ok(c) => Some(c),
        Err(e) => {
            errors.push(format!("completeness: {e}"));
            None
        }
    };
    (ricci_min, focal, completeness, errors)
}

/// Fires both null normals from every grid point of `patch`.
pub fn fire_congruences(
    model: &SpacetimeModel,
    patch: &SurfacePatch,
    trapped: &TrappedReport,
    budget: f64,
    focal_tol: f64,
) -> Vec<RayRecord> {
    let jobs: Vec<(usize, usize)> = (0..trapped.points.len())
        .flat_map(|p| (0..2).map(move |i| (p, i)))
        .collect();
    jobs.par_iter()
        .enumerate()
        .map(|(index, &(p, i))| {
            let point = &trapped.points[p];
            let z = &point.normals[i];
            let k = point.expansions[i];
            let (ricci_min, focal, completeness, errors) =
                fire_ray(model, patch, &point.u, z, k, budget, focal_tol);
            RayRecord {
                index,
                u: point.u.clone(),
                normal: i,
                x: point.x.clone(),
                z: z.clone(),
                k,
                ricci_min,
                focal,
                completeness,
                errors,
            }
        })
        .collect()
}

pub fn run_penrose(scenario: &Scenario) -> std::result::Result<PenroseReport, ScenarioError> {
    let world: World = scenario.build()?;
    let bundle = scenario.bundle.as_ref().ok_or_else(|| {
        ScenarioError::Invalid("the penrose pipeline needs a 'bundle' block".into())
    })?;
    let patch = world.patch(&bundle.patch)?;
    let model = &world.model;
    let tol = scenario.tolerances;
    let cfg = scenario.sampler_config();

    let axioms = model.validate_axioms(&cfg);
    let trapped = trapped_test(model, patch, tol.trapped).map_err(|e| e.to_string());
    let null_ricci = null_ricci_scan(model, &cfg, tol.ricci);
    let assertions = AssertionEcho {
        stamp: ASSERTED,
        entries: scenario
            .assertions
            .entries()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect(),
        first_missing: scenario.assertions.first_missing().map(str::to_string),
    };
    let rays = match &trapped {
        Ok(t) => fire_congruences(model, patch, t, bundle.budget, tol.focal),
        Err(_) => Vec::new(),
    };
    let verdict = verdict(&axioms, &trapped, &null_ricci, &assertions, &rays);
    Ok(PenroseReport {
        schema_version: SCHEMA_VERSION,
        scenario: scenario.name.clone(),
        model: model.name().to_string(),
        seed: scenario.seed,
        budget: bundle.budget,
        witnessed: rays.iter().filter(|r| r.breakdown().is_some()).count(),
        axioms,
        trapped,
        null_ricci,
        assertions,
        rays,
        verdict,
    })
}
