//! Lorentz–Finsler models on a single chart.

mod axioms;
mod models;

use std::collections::BTreeMap;
use std::fmt::Debug;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{GeometryError, Result};
use crate::expr::{Bindings, Expr};
use crate::jets::{evaluate_jet, Jet, ScalarField, Seed};
use crate::linalg::{self, Mat};

pub use axioms::{AxiomCheck, SamplerConfig, ValidationReport};
pub use models::{
    ExpressionLagrangian, Minkowski, RandersPerturbedSchwarzschild, RandersStatic, SchwarzschildEF,
};

/// The scalar `L(x, v)` of a Finsler spacetime in chart coordinates.
pub trait Lagrangian: Send + Sync + Debug {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[Jet], v: &[Jet]) -> Jet;

    /// False where `L` fails to be smooth in `v` (e.g. the axis of a static
    /// Finsler metric).
    fn is_smooth(&self, _x: &[f64], _v: &[f64]) -> bool {
        true
    }

    /// Positive inside the chart, shrinking to zero at its boundary.
    fn chart_margin(&self, _x: &[f64]) -> f64 {
        f64::INFINITY
    }

    /// Whether `L(x, −v) = L(x, v)`.
    fn reversible(&self) -> bool {
        true
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModelTolerances {
    /// Relative width of the lightlike band `|L| ≤ cone·‖v‖²`.
    pub cone: f64,
    /// Smallest admissible `|eigenvalue|` of the fundamental tensor.
    pub degeneracy: f64,
}

impl Default for ModelTolerances {
    fn default() -> Self {
        ModelTolerances {
            cone: 1e-9,
            degeneracy: 1e-10,
        }
    }
}

/// Coordinate box restricting a chart.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Chart {
    pub bounds: Option<Vec<(f64, f64)>>,
}

#[derive(Clone, Debug)]
pub struct SpacetimeModel {
    name: String,
    lagrangian: Arc<dyn Lagrangian>,
    tau: Vec<Expr>,
    chart: Chart,
    pub tolerances: ModelTolerances,
    /// User-asserted global properties, never verified.
    pub assertions: BTreeMap<String, bool>,
    /// Coordinate box used when sampling points.
    pub sample_region: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FundamentalTensor {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub matrix: Mat,
}

impl FundamentalTensor {
    pub fn apply(&self, a: &[f64], b: &[f64]) -> f64 {
        linalg::bilinear(&self.matrix, a, b)
    }

    /// `w ↦ g_v(w, ·)` as a covector.
    pub fn lower(&self, w: &[f64]) -> Vec<f64> {
        linalg::mat_vec(&self.matrix, w)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CartanTensor {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    n: usize,
    components: Vec<f64>,
}

impl CartanTensor {
    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.components[(i * self.n + j) * self.n + k]
    }

    pub fn apply(&self, a: &[f64], b: &[f64], c: &[f64]) -> f64 {
        let n = self.n;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    s += self.get(i, j, k) * a[i] * b[j] * c[k];
                }
            }
        }
        s
    }

    /// Components of `C_v(w, ·, ·)`.
    pub fn contract(&self, w: &[f64]) -> Mat {
        let n = self.n;
        Mat::from_fn(n, n, |j, k| (0..n).map(|i| w[i] * self.get(i, j, k)).sum())
    }

    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CausalCharacter {
    Timelike,
    Lightlike,
    /// Inside the lightlike band at a point where `L` is not smooth.
    CausalBoundary,
    Spacelike,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeOrientation {
    Future,
    Past,
    NotApplicable,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Classification {
    pub character: CausalCharacter,
    pub orientation: TimeOrientation,
    pub l: f64,
    pub note: Option<String>,
}

impl Classification {
    pub fn is_future_causal(&self) -> bool {
        self.character != CausalCharacter::Spacelike && self.orientation == TimeOrientation::Future
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ReverseInequality {
    /// `g_v(v, w) − F(v)F(w)`, nonnegative up to rounding.
    pub residual: f64,
    /// Whether `w` is a positive multiple of `v`.
    pub equality: bool,
}

impl SpacetimeModel {
    pub fn new(
        name: impl Into<String>,
        lagrangian: Arc<dyn Lagrangian>,
        tau: Vec<Expr>,
    ) -> Result<Self> {
        let n = lagrangian.dim();
        if n < 2 {
            return Err(GeometryError::Input(format!("dimension {n} is too small")));
        }
        check_time_field(&tau, n)?;
        Ok(SpacetimeModel {
            name: name.into(),
            lagrangian,
            tau,
            chart: Chart::default(),
            tolerances: ModelTolerances::default(),
            assertions: BTreeMap::new(),
            sample_region: vec![(-1.0, 1.0); n],
        })
    }

    /// Installs the chart; atlases with more than one chart are rejected.
    pub fn with_atlas(mut self, charts: Vec<Chart>) -> Result<Self> {
        match charts.len() {
            0 => Ok(self),
            1 => {
                let chart = charts.into_iter().next().unwrap_or_default();
                if let Some(b) = &chart.bounds {
                    if b.len() != self.dim() || b.iter().any(|(lo, hi)| !(lo < hi)) {
                        return Err(GeometryError::Input(
                            "chart box must give lo < hi for every coordinate".into(),
                        ));
                    }
                }
                self.chart = chart;
                Ok(self)
            }
            k => Err(GeometryError::Input(format!(
                "only single-chart models are supported ({k} charts given)"
            ))),
        }
    }

    /// Replaces the time field.
    pub fn with_time_field(mut self, tau: Vec<Expr>) -> Result<Self> {
        check_time_field(&tau, self.dim())?;
        self.tau = tau;
        Ok(self)
    }

    pub fn with_tolerances(mut self, tol: ModelTolerances) -> Self {
        self.tolerances = tol;
        self
    }

    pub fn with_sample_region(mut self, region: Vec<(f64, f64)>) -> Self {
        self.sample_region = region;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.lagrangian.dim()
    }

    pub fn lagrangian(&self) -> &dyn Lagrangian {
        self.lagrangian.as_ref()
    }

    pub fn reversible(&self) -> bool {
        self.lagrangian.reversible()
    }

    pub fn chart_margin(&self, x: &[f64]) -> f64 {
        let mut m = self.lagrangian.chart_margin(x);
        if let Some(bounds) = &self.chart.bounds {
            for (xi, (lo, hi)) in x.iter().zip(bounds) {
                m = m.min(xi - lo).min(hi - xi);
            }
        }
        if x.iter().any(|c| !c.is_finite()) {
            return f64::NEG_INFINITY;
        }
        m
    }

    pub fn in_chart(&self, x: &[f64]) -> bool {
        self.chart_margin(x) > 0.0
    }

    pub fn l(&self, x: &[f64], v: &[f64]) -> f64 {
        ScalarField::eval(self, x, v)
    }

    pub fn l_jet(&self, x: &[Jet], v: &[Jet]) -> Jet {
        self.lagrangian.eval(x, v)
    }

    pub fn is_smooth(&self, x: &[f64], v: &[f64]) -> bool {
        self.lagrangian.is_smooth(x, v)
    }

    pub fn tau(&self, x: &[f64]) -> Vec<f64> {
        self.tau.iter().map(|t| t.eval_f64(x, &[], &[])).collect()
    }

    pub fn tau_jet(&self, x: &[Jet]) -> Vec<Jet> {
        let b = Bindings { x, v: &[], u: &[] };
        self.tau.iter().map(|t| t.eval(&b)).collect()
    }

    /// Auxiliary Euclidean norm of the components.
    pub fn aux_norm(&self, v: &[f64]) -> f64 {
        linalg::norm(v)
    }

    fn check_point(&self, x: &[f64], v: &[f64]) -> Result<()> {
        let n = self.dim();
        if x.len() != n || v.len() != n {
            return Err(GeometryError::Input(format!(
                "expected {n} components for x and v"
            )));
        }
        if !self.in_chart(x) {
            return Err(GeometryError::domain(x, v, "base point outside the chart"));
        }
        if v.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::domain(x, v, "non-finite vector"));
        }
        Ok(())
    }

    /// Checks that `(x, v)` is in the chart, `v ≠ 0` and `L` is smooth there.
    pub fn check_smooth(&self, x: &[f64], v: &[f64]) -> Result<()> {
        self.check_point(x, v)?;
        if linalg::norm(v) == 0.0 {
            return Err(GeometryError::domain(x, v, "zero vector"));
        }
        if !self.is_smooth(x, v) {
            return Err(GeometryError::domain(
                x,
                v,
                "L is not smooth at this vector",
            ));
        }
        if !self.l(x, v).is_finite() {
            return Err(GeometryError::domain(x, v, "L is not finite"));
        }
        Ok(())
    }

    /// First fiber derivative `∂L/∂vⁱ` (equal to `2 g_v(v, eᵢ)`).
    pub fn fiber_gradient(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check_smooth(x, v)?;
        let n = self.dim();
        let mut out = vec![0.0; n];
        for (i, o) in out.iter_mut().enumerate() {
            let e = unit(n, i);
            *o = evaluate_jet(self, x, v, &[Seed::fiber(&e)], 1)?.partial(&[0]);
        }
        Ok(out)
    }

    /// `g_v = ½ ∂²L/∂v∂v`; fails if the spectrum approaches zero.
    pub fn fundamental_tensor(&self, x: &[f64], v: &[f64]) -> Result<FundamentalTensor> {
        self.check_smooth(x, v)?;
        let n = self.dim();
        let mut g = Mat::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let jet = evaluate_jet(
                    self,
                    x,
                    v,
                    &[Seed::fiber(&unit(n, i)), Seed::fiber(&unit(n, j))],
                    2,
                )?;
                let val = 0.5 * jet.partial(&[0, 1]);
                g[(i, j)] = val;
                g[(j, i)] = val;
            }
        }
        if g.iter().any(|c| !c.is_finite()) {
            return Err(GeometryError::domain(
                x,
                v,
                "fundamental tensor is not finite",
            ));
        }
        let spectrum = linalg::sym_eigenvalues(&g);
        if spectrum
            .iter()
            .any(|e| e.abs() < self.tolerances.degeneracy)
        {
            return Err(GeometryError::Degenerate { spectrum });
        }
        Ok(FundamentalTensor {
            x: x.to_vec(),
            v: v.to_vec(),
            matrix: g,
        })
    }

    /// `C_v = ¼ ∂³L/∂v∂v∂v`.
    pub fn cartan_tensor(&self, x: &[f64], v: &[f64]) -> Result<CartanTensor> {
        self.fundamental_tensor(x, v)?;
        let n = self.dim();
        let mut c = vec![0.0; n * n * n];
        for i in 0..n {
            for j in i..n {
                for k in j..n {
                    let seeds = [
                        Seed::fiber(&unit(n, i)),
                        Seed::fiber(&unit(n, j)),
                        Seed::fiber(&unit(n, k)),
                    ];
                    let val = 0.25 * evaluate_jet(self, x, v, &seeds, 3)?.partial(&[0, 1, 2]);
                    for (a, b, d) in [
                        (i, j, k),
                        (i, k, j),
                        (j, i, k),
                        (j, k, i),
                        (k, i, j),
                        (k, j, i),
                    ] {
                        c[(a * n + b) * n + d] = val;
                    }
                }
            }
        }
        Ok(CartanTensor {
            x: x.to_vec(),
            v: v.to_vec(),
            n,
            components: c,
        })
    }

    /// The scenario's time field, nudged off any non-smooth axis of `L`.
    pub fn reference_time(&self, x: &[f64]) -> Vec<f64> {
        let tau = self.tau(x);
        if self.is_smooth(x, &tau) {
            return tau;
        }
        let n = self.dim();
        let scale = linalg::norm(&tau).max(f64::MIN_POSITIVE);
        for k in 1..n {
            for sign in [1.0, -1.0] {
                let mut t = tau.clone();
                t[k] += sign * 1e-3 * scale;
                if self.is_smooth(x, &t) && self.l(x, &t) > 0.0 {
                    return t;
                }
            }
        }
        tau
    }

    /// `θ(w) = g_τ(τ, w)` for the reference time `τ`, as a covector.
    pub fn time_covector(&self, x: &[f64]) -> Result<Vec<f64>> {
        let tau = self.reference_time(x);
        Ok(self
            .fiber_gradient(x, &tau)?
            .iter()
            .map(|d| 0.5 * d)
            .collect())
    }

    pub fn classify_vector(&self, x: &[f64], v: &[f64]) -> Result<Classification> {
        self.check_point(x, v)?;
        let norm = self.aux_norm(v);
        if norm == 0.0 {
            return Err(GeometryError::Input(
                "the zero vector has no causal character".into(),
            ));
        }
        let l = self.l(x, v);
        let band = self.tolerances.cone * norm * norm;
        let mut note = None;
        let character = if l.abs() <= band {
            note = Some(format!(
                "|L| = {:.3e} within cone tolerance band {band:.3e}",
                l.abs()
            ));
            if self.is_smooth(x, v) {
                CausalCharacter::Lightlike
            } else {
                CausalCharacter::CausalBoundary
            }
        } else if l > 0.0 {
            CausalCharacter::Timelike
        } else {
            CausalCharacter::Spacelike
        };
        let orientation = if character == CausalCharacter::Spacelike {
            TimeOrientation::NotApplicable
        } else {
            let theta = self.time_covector(x)?;
            if linalg::dot(&theta, v) > 0.0 {
                TimeOrientation::Future
            } else {
                TimeOrientation::Past
            }
        };
        Ok(Classification {
            character,
            orientation,
            l,
            note,
        })
    }

    /// Reverse fundamental inequality `g_v(v, w) ≥ F(v) F(w)` for future causal `v`, `w`.
    pub fn reverse_inequality_check(
        &self,
        x: &[f64],
        v: &[f64],
        w: &[f64],
    ) -> Result<ReverseInequality> {
        for (label, u) in [("v", v), ("w", w)] {
            let c = self.classify_vector(x, u)?;
            if !c.is_future_causal() {
                return Err(GeometryError::domain(
                    x,
                    u,
                    format!("{label} is not future causal"),
                ));
            }
        }
        let g = self.fundamental_tensor(x, v)?;
        let f = |u: &[f64]| self.l(x, u).max(0.0).sqrt();
        let residual = g.apply(v, w) - f(v) * f(w);
        let equality = linalg::angle(v, w) < 1e-7 && linalg::dot(v, w) > 0.0;
        Ok(ReverseInequality { residual, equality })
    }

    /// The lightlike vector `τ + s d̂` where `d̂` is `d` projected into `ker θ`.
    ///
    /// The cone section `{θ = θ(τ)}` is compact and convex, so the ray leaves
    /// it exactly once; the crossing is located by bisection on `L`.
    pub fn null_toward(&self, x: &[f64], d: &[f64]) -> Result<Vec<f64>> {
        let tau = self.reference_time(x);
        let theta = self.time_covector(x)?;
        let along = linalg::dot(&theta, d) / linalg::dot(&theta, &tau);
        let dh: Vec<f64> = d.iter().zip(&tau).map(|(a, t)| a - along * t).collect();
        let dn = linalg::norm(&dh);
        if dn == 0.0 {
            return Err(GeometryError::Input(
                "direction is parallel to the time field".into(),
            ));
        }
        let dh: Vec<f64> = dh.iter().map(|c| c / dn).collect();
        let at = |s: f64| linalg::axpy(s, &dh, &tau);
        let (mut lo, mut hi) = (0.0, linalg::norm(&tau));
        let mut guard = 0;
        while self.l(x, &at(hi)) > 0.0 {
            lo = hi;
            hi *= 2.0;
            guard += 1;
            if guard > 200 {
                return Err(GeometryError::Geometry(
                    "cone section appears unbounded".into(),
                ));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.l(x, &at(mid)) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = if self.l(x, &at(lo)).abs() < self.l(x, &at(hi)).abs() {
            lo
        } else {
            hi
        };
        Ok(at(s))
    }
}

fn check_time_field(tau: &[Expr], n: usize) -> Result<()> {
    if tau.len() != n {
        return Err(GeometryError::Input(format!(
            "time field has {} components, expected {n}",
            tau.len()
        )));
    }
    for t in tau {
        let (nx, nv, nu) = t.arity();
        if nx > n || nv > 0 || nu > 0 {
            return Err(GeometryError::Input(format!(
                "time field component '{}' may depend on x0..x{} only",
                t.source(),
                n - 1
            )));
        }
    }
    Ok(())
}

impl ScalarField for SpacetimeModel {
    fn eval_jet(&self, x: &[Jet], v: &[Jet]) -> Jet {
        self.lagrangian.eval(x, v)
    }

    fn in_domain(&self, x: &[f64], v: &[f64]) -> bool {
        self.in_chart(x) && v.iter().all(|c| c.is_finite())
    }
}

pub(crate) fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

/// Constant expressions for a time field.
pub fn constant_field(values: &[f64]) -> Vec<Expr> {
    let empty = BTreeMap::new();
    values
        .iter()
        .map(|c| {
            Expr::parse(&format!("{c:e}"), &empty)
                .unwrap_or_else(|_| unreachable!("formatted float parses"))
        })
        .collect()
}
