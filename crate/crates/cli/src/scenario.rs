//! Scenario files: a JSON description of a model, its time field, patches,
//! rays, tolerances and user-asserted global hypotheses.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use finsler_core::expr::Expr;
use finsler_core::spacetime::{
    Chart, ExpressionLagrangian, Minkowski, ModelTolerances, RandersPerturbedSchwarzschild,
    RandersStatic, SamplerConfig, SchwarzschildEF,
};
use finsler_core::submanifold::{ExpressionEmbedding, SurfacePatch};
use finsler_core::{GeometryError, SpacetimeModel};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    /// Seed for every sampling step; required.
    pub seed: u64,
    pub model: ModelSpec,
    /// Time field components as expressions in `x0..`; built-ins supply their own.
    #[serde(default)]
    pub tau: Option<Vec<String>>,
    /// Coordinate box of the single chart.
    #[serde(default)]
    pub chart: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub sampler: SamplerSpec,
    #[serde(default)]
    pub patches: Vec<PatchSpec>,
    #[serde(default)]
    pub rays: Vec<RaySpec>,
    #[serde(default)]
    pub bundle: Option<BundleSpec>,
    #[serde(default)]
    pub assertions: Assertions,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Minkowski {
        dim: usize,
    },
    SchwarzschildEf {
        mass: f64,
    },
    RandersStatic {
        lambda: f64,
        one_form: Vec<f64>,
        #[serde(default)]
        warp: f64,
    },
    RandersSchwarzschild {
        mass: f64,
        epsilon: f64,
        one_form: [f64; 2],
    },
    /// `L` as an expression in `x0.., v0..` and the named parameters.
    Expression {
        dim: usize,
        lagrangian: String,
        #[serde(default)]
        params: BTreeMap<String, f64>,
        /// Expression in `x` that is positive inside the chart.
        #[serde(default)]
        margin: Option<String>,
        #[serde(default = "yes")]
        reversible: bool,
    },
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub cone: f64,
    pub degeneracy: f64,
    /// Expansions must exceed this for a patch to count as trapped.
    pub trapped: f64,
    /// Null Ricci values down to `−ricci` count as nonnegative.
    pub ricci: f64,
    /// Slack on the focal bound.
    pub focal: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let m = ModelTolerances::default();
        Tolerances {
            cone: m.cone,
            degeneracy: m.degeneracy,
            trapped: 1e-9,
            ricci: 1e-8,
            focal: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSpec {
    pub points: usize,
    pub vectors_per_point: usize,
    pub region: Option<Vec<[f64; 2]>>,
}

impl Default for SamplerSpec {
    fn default() -> Self {
        let c = SamplerConfig::default();
        SamplerSpec {
            points: c.points,
            vectors_per_point: c.vectors_per_point,
            region: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PatchSpec {
    pub id: String,
    pub shape: PatchShape,
    #[serde(default)]
    pub resolution: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PatchShape {
    FlatSphere {
        radius: f64,
        #[serde(default)]
        time: f64,
    },
    SymmetrySphere {
        radius: f64,
        #[serde(default)]
        time: f64,
    },
    Plane {
        #[serde(default)]
        time: f64,
    },
    Torus {
        major: f64,
        minor: f64,
        #[serde(default)]
        time: f64,
    },
    /// Embedding components as expressions in `u0..` and named parameters.
    Expression {
        components: Vec<String>,
        domain: Vec<[f64; 2]>,
        #[serde(default)]
        params: BTreeMap<String, f64>,
        #[serde(default)]
        closed: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RaySpec {
    pub id: String,
    pub x: Vec<f64>,
    /// Initial velocity; alternatively `toward`, projected to the future null cone.
    #[serde(default)]
    pub v: Option<Vec<f64>>,
    #[serde(default)]
    pub toward: Option<Vec<f64>>,
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BundleSpec {
    pub patch: String,
    /// Affine-parameter budget per ray.
    pub budget: f64,
}

/// Global hypotheses the tool cannot check; echoed into reports.
#[derive(Clone, Debug, Default, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct Assertions {
    pub patch_achronal: Option<bool>,
    pub patch_compact: Option<bool>,
    /// A Cauchy hypersurface exists (met exactly once by every inextendible causal curve).
    pub cauchy_hypersurface: Option<bool>,
    pub cauchy_hypersurface_noncompact: Option<bool>,
}

impl Assertions {
    pub fn entries(&self) -> Vec<(&'static str, Option<bool>)> {
        vec![
            ("patch_achronal", self.patch_achronal),
            ("patch_compact", self.patch_compact),
            ("cauchy_hypersurface", self.cauchy_hypersurface),
            (
                "cauchy_hypersurface_noncompact",
                self.cauchy_hypersurface_noncompact,
            ),
        ]
    }

    /// First hypothesis not asserted as true.
    pub fn first_missing(&self) -> Option<&'static str> {
        self.entries()
            .into_iter()
            .find(|(_, v)| *v != Some(true))
            .map(|(k, _)| k)
    }
}

/// Model and patches built from a scenario.
#[derive(Clone, Debug)]
pub struct World {
    pub model: SpacetimeModel,
    pub patches: BTreeMap<String, SurfacePatch>,
}

impl World {
    pub fn patch(&self, id: &str) -> Result<&SurfacePatch, ScenarioError> {
        self.patches
            .get(id)
            .ok_or_else(|| ScenarioError::Invalid(format!("unknown patch '{id}'")))
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        s.check()?;
        Ok(s)
    }

    pub fn load(path: &std::path::Path) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scenario::parse(&text)
    }

    pub fn dim(&self) -> usize {
        match &self.model {
            ModelSpec::Minkowski { dim } | ModelSpec::Expression { dim, .. } => *dim,
            ModelSpec::SchwarzschildEf { .. } | ModelSpec::RandersSchwarzschild { .. } => 4,
            ModelSpec::RandersStatic { one_form, .. } => one_form.len() + 1,
        }
    }

    /// Schema-level checks that need no geometry.
    pub fn check(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        let n = self.dim();
        let t = &self.tolerances;
        for (name, v) in [
            ("cone", t.cone),
            ("degeneracy", t.degeneracy),
            ("trapped", t.trapped),
            ("ricci", t.ricci),
            ("focal", t.focal),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("tolerance '{name}' must be positive"));
            }
        }
        if self.sampler.points == 0 || self.sampler.vectors_per_point == 0 {
            return bad("sampler needs at least one point and one vector".into());
        }
        if matches!(self.model, ModelSpec::Expression { .. }) && self.tau.is_none() {
            return bad("expression models need an explicit 'tau'".into());
        }
        if let Some(tau) = &self.tau {
            if tau.len() != n {
                return bad(format!("'tau' has {} components, expected {n}", tau.len()));
            }
        }
        for (what, b) in [
            ("chart", &self.chart),
            ("sampler.region", &self.sampler.region),
        ] {
            if let Some(b) = b {
                if b.len() != n || b.iter().any(|[lo, hi]| !(lo < hi)) {
                    return bad(format!("'{what}' must give {n} intervals with lo < hi"));
                }
            }
        }
        let mut ids = BTreeSet::new();
        for p in &self.patches {
            if !ids.insert(p.id.as_str()) {
                return bad(format!("duplicate patch id '{}'", p.id));
            }
        }
        let mut ray_ids = BTreeSet::new();
        for r in &self.rays {
            if !ray_ids.insert(r.id.as_str()) {
                return bad(format!("duplicate ray id '{}'", r.id));
            }
            if r.x.len() != n {
                return bad(format!(
                    "ray '{}': x has {} components, expected {n}",
                    r.id,
                    r.x.len()
                ));
            }
            match (&r.v, &r.toward) {
                (Some(d), None) | (None, Some(d)) if d.len() == n => {}
                (Some(_), None) | (None, Some(_)) => {
                    return bad(format!("ray '{}': direction needs {n} components", r.id))
                }
                _ => {
                    return bad(format!(
                        "ray '{}': give exactly one of 'v' or 'toward'",
                        r.id
                    ))
                }
            }
            if !(r.length > 0.0) {
                return bad(format!("ray '{}': length must be positive", r.id));
            }
        }
        if let Some(b) = &self.bundle {
            if !ids.contains(b.patch.as_str()) {
                return bad(format!("bundle refers to unknown patch '{}'", b.patch));
            }
            if !(b.budget > 0.0) {
                return bad("bundle budget must be positive".into());
            }
        }
        Ok(())
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            points: self.sampler.points,
            vectors_per_point: self.sampler.vectors_per_point,
            seed: self.seed,
            region: self.sampler.region.as_ref().map(|r| intervals(r)),
        }
    }

    pub fn build(&self) -> Result<World, ScenarioError> {
        self.check()?;
        let model = self.build_model()?;
        let mut patches = BTreeMap::new();
        for spec in &self.patches {
            let patch = self.build_patch(spec)?;
            if patch.ambient_dim() != model.dim() {
                return Err(ScenarioError::Invalid(format!(
                    "patch '{}' lives in dimension {}, the model in {}",
                    spec.id,
                    patch.ambient_dim(),
                    model.dim()
                )));
            }
            patches.insert(spec.id.clone(), patch);
        }
        Ok(World { model, patches })
    }

    fn build_model(&self) -> Result<SpacetimeModel, ScenarioError> {
        let mut model = match &self.model {
            ModelSpec::Minkowski { dim } => {
                if *dim < 3 {
                    return Err(ScenarioError::Invalid("minkowski needs dim ≥ 3".into()));
                }
                Minkowski::model(*dim)
            }
            ModelSpec::SchwarzschildEf { mass } => {
                positive("mass", *mass)?;
                SchwarzschildEF::model(*mass)
            }
            ModelSpec::RandersStatic {
                lambda,
                one_form,
                warp,
            } => {
                positive("lambda", *lambda)?;
                RandersStatic::model(*lambda, one_form.clone(), *warp)
            }
            ModelSpec::RandersSchwarzschild {
                mass,
                epsilon,
                one_form,
            } => {
                positive("mass", *mass)?;
                RandersPerturbedSchwarzschild::model(*mass, *epsilon, *one_form)
            }
            ModelSpec::Expression {
                dim,
                lagrangian,
                params,
                margin,
                reversible,
            } => {
                let expr = Expr::parse(lagrangian, params)?;
                let margin = margin
                    .as_deref()
                    .map(|m| Expr::parse(m, params))
                    .transpose()?;
                let l = ExpressionLagrangian::new(*dim, expr, margin, *reversible)?;
                let tau = self.tau_exprs(params)?.ok_or_else(|| {
                    ScenarioError::Invalid("expression models need an explicit 'tau'".into())
                })?;
                let name = if self.name.is_empty() {
                    "expression".to_string()
                } else {
                    self.name.clone()
                };
                SpacetimeModel::new(name, Arc::new(l), tau)?
            }
        };
        if !matches!(self.model, ModelSpec::Expression { .. }) {
            if let Some(tau) = self.tau_exprs(&BTreeMap::new())? {
                model = model.with_time_field(tau)?;
            }
        }
        if let Some(b) = &self.chart {
            model = model.with_atlas(vec![Chart {
                bounds: Some(intervals(b)),
            }])?;
        }
        if let Some(r) = &self.sampler.region {
            model = model.with_sample_region(intervals(r));
        }
        let t = &self.tolerances;
        Ok(model.with_tolerances(ModelTolerances {
            cone: t.cone,
            degeneracy: t.degeneracy,
        }))
    }

    fn tau_exprs(
        &self,
        params: &BTreeMap<String, f64>,
    ) -> Result<Option<Vec<Expr>>, ScenarioError> {
        match &self.tau {
            None => Ok(None),
            Some(list) => Ok(Some(
                list.iter()
                    .map(|s| Expr::parse(s, params))
                    .collect::<Result<_, _>>()?,
            )),
        }
    }

    fn build_patch(&self, spec: &PatchSpec) -> Result<SurfacePatch, ScenarioError> {
        let n = self.dim();
        let patch = match &spec.shape {
            PatchShape::FlatSphere { radius, time } => {
                positive("radius", *radius)?;
                SurfacePatch::flat_sphere(n, *radius, *time)
            }
            PatchShape::SymmetrySphere { radius, time } => {
                positive("radius", *radius)?;
                SurfacePatch::symmetry_sphere(*radius, *time)
            }
            PatchShape::Plane { time } => SurfacePatch::plane(n, *time),
            PatchShape::Torus { major, minor, time } => {
                positive("minor", *minor)?;
                if !(major > minor) {
                    return Err(ScenarioError::Invalid("torus needs major > minor".into()));
                }
                SurfacePatch::torus(*major, *minor, *time)
            }
            PatchShape::Expression {
                components,
                domain,
                params,
                closed,
            } => {
                let exprs = components
                    .iter()
                    .map(|c| Expr::parse(c, params))
                    .collect::<Result<Vec<_>, _>>()?;
                let emb = ExpressionEmbedding::new(exprs, domain.len())?;
                let res = vec![6; domain.len()];
                SurfacePatch::new(
                    spec.id.clone(),
                    Arc::new(emb),
                    intervals(domain),
                    res,
                    *closed,
                )?
            }
        };
        match &spec.resolution {
            Some(r) => Ok(patch.with_resolution(r.clone())?),
            None => Ok(patch),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), ScenarioError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(ScenarioError::Invalid(format!("'{name}' must be positive")))
    }
}

fn intervals(b: &[[f64; 2]]) -> Vec<(f64, f64)> {
    b.iter().map(|[lo, hi]| (*lo, *hi)).collect()
}
