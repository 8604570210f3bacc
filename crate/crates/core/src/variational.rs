//! Jacobi fields in a parallel frame, focal points, the index form and
//! finite-difference checks of the energy variation formulas.
//!
//! Frame layout along a lightlike geodesic `σ`: the first `n − 2` vectors
//! span the screen (tangents of `P` for submanifold data), then `σ̇`, then a
//! transversal with `g_σ̇(X, σ̇) ≠ 0`. Fields orthogonal to `σ̇` have no
//! transversal component.

use std::cell::Cell;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::connection::{
    chern_christoffel, contract_christoffel, jacobi_operator, screen_frame, spray_derivatives,
};
use crate::error::{GeometryError, Result};
use crate::geodesic::{classify_end, spray_and_nonlinear, GeodesicPath, Termination};
use crate::linalg::{self, Mat};
use crate::ode::{integrate, OdeOptions, OdeSolution};
use crate::spacetime::SpacetimeModel;
use crate::submanifold::{normal_second_fundamental_form, second_fundamental_form, SurfacePatch};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    /// `J(0) = 0`.
    Point,
    /// `J(0) ∈ TP`, `tan J′(0) = S̃(J(0))`.
    Submanifold,
}

#[derive(Clone, Debug)]
pub struct JacobiInit {
    pub kind: InitKind,
    pub base: Vec<f64>,
    pub velocity: Vec<f64>,
    pub screen: Vec<Vec<f64>>,
    pub transversal: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub derivatives: Vec<Vec<f64>>,
    /// `g_z(z, S_z(wₐ, w_b))` on the screen basis.
    pub boundary_form: Option<Mat>,
}

impl JacobiInit {
    /// Basis of orthogonal `P`-Jacobi data along the normal `z` at `patch(u)`.
    pub fn submanifold(
        model: &SpacetimeModel,
        patch: &SurfacePatch,
        u: &[f64],
        z: &[f64],
    ) -> Result<Self> {
        let x = patch.point(u);
        let tangents = patch.tangents(u);
        let shape = normal_second_fundamental_form(model, patch, u, z)?;
        let boundary = second_fundamental_form(model, patch, u, z)?.scalar();
        Ok(JacobiInit {
            kind: InitKind::Submanifold,
            transversal: model.tau(&x),
            base: x,
            velocity: z.to_vec(),
            screen: tangents.clone(),
            values: tangents,
            derivatives: shape,
            boundary_form: Some(boundary),
        })
    }

    /// Jacobi fields vanishing at `x` with initial derivatives spanning a screen.
    pub fn point(model: &SpacetimeModel, x: &[f64], z: &[f64]) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x6a6163);
        let screen = screen_frame(model, x, z, &mut rng)?;
        Ok(JacobiInit {
            kind: InitKind::Point,
            base: x.to_vec(),
            velocity: z.to_vec(),
            values: vec![vec![0.0; x.len()]; screen.len()],
            derivatives: screen.clone(),
            screen,
            transversal: model.tau(x),
            boundary_form: None,
        })
    }

    fn frame(&self) -> Vec<Vec<f64>> {
        let mut f = self.screen.clone();
        f.push(self.velocity.clone());
        f.push(self.transversal.clone());
        f
    }
}

/// Basis of Jacobi fields with their parallel frame, integrated jointly with the geodesic.
#[derive(Clone, Debug)]
pub struct JacobiSystem {
    pub init: JacobiInit,
    pub termination: Termination,
    /// `g_σ̇(Eᵢ, Eⱼ)`, constant along the geodesic.
    pub frame_gram: Mat,
    solution: OdeSolution,
    dim: usize,
    count: usize,
}

fn column_matrix(cols: &[Vec<f64>]) -> Mat {
    Mat::from_fn(cols[0].len(), cols.len(), |i, j| cols[j][i])
}

pub fn solve_jacobi(
    model: &SpacetimeModel,
    path: &GeodesicPath,
    init: &JacobiInit,
) -> Result<JacobiSystem> {
    let n = model.dim();
    let m = init.values.len();
    if linalg::angle(&path.v0, &init.velocity) > 1e-9
        || linalg::norm(&linalg::axpy(-1.0, &path.x0, &init.base)) > 1e-9
    {
        return Err(GeometryError::Input(
            "initial data do not sit on the path's starting point and velocity".into(),
        ));
    }
    let frame = init.frame();
    let e0 = column_matrix(&frame);
    let e0_inv = linalg::inverse(&e0)
        .map_err(|_| GeometryError::Frame("initial frame is degenerate".into()))?;
    let g0 = model.fundamental_tensor(&path.x0, &path.v0)?;
    let frame_gram = Mat::from_fn(n, n, |i, j| g0.apply(&frame[i], &frame[j]));
    if g0.apply(&init.transversal, &init.velocity).abs()
        < 1e-12 * linalg::norm(&init.transversal) * linalg::norm(&init.velocity)
    {
        return Err(GeometryError::Frame(
            "transversal is orthogonal to the geodesic".into(),
        ));
    }
    let mut y0 = path.x0.clone();
    y0.extend_from_slice(&path.v0);
    for col in &frame {
        y0.extend_from_slice(col);
    }
    for v in &init.values {
        y0.extend(linalg::mat_vec(&e0_inv, v));
    }
    for d in &init.derivatives {
        y0.extend(linalg::mat_vec(&e0_inv, d));
    }
    let left = Cell::new(false);
    let rhs = |_t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let (x, v) = (&y[..n], &y[n..2 * n]);
        if !model.in_chart(x) {
            left.set(true);
        }
        let d = spray_derivatives(model, x, v)?;
        let k = d.jacobi_matrix();
        let (g, nl) = (&d.g, &d.n);
        let e = Mat::from_column_slice(n, n, &y[2 * n..2 * n + n * n]);
        let ke = &k * &e;
        let frame_k = e
            .clone()
            .lu()
            .solve(&ke)
            .ok_or_else(|| GeometryError::Frame("transported frame became singular".into()))?;
        let mut out = v.to_vec();
        out.extend(g.iter().map(|c| -2.0 * c));
        let de = -(nl * &e);
        out.extend(de.iter());
        let a0 = 2 * n + n * n;
        let d0 = a0 + m * n;
        for j in 0..m {
            out.extend_from_slice(&y[d0 + j * n..d0 + (j + 1) * n]);
        }
        for j in 0..m {
            let a = nalgebra::DVector::from_column_slice(&y[a0 + j * n..a0 + (j + 1) * n]);
            out.extend((&frame_k * a).iter());
        }
        Ok(out)
    };
    let event = |_t: f64, y: &[f64]| model.chart_margin(&y[..n]);
    let opts = OdeOptions {
        rtol: 1e-11,
        atol: 1e-13,
        ..OdeOptions::default()
    };
    let solution = integrate(rhs, 0.0, &y0, path.span(), &opts, Some(event));
    let mut termination = classify_end(model, &solution, left.get());
    if termination == Termination::ReachedT {
        // Reaching the end of a geodesic that itself stopped early.
        termination = path.termination.clone();
    }
    Ok(JacobiSystem {
        init: init.clone(),
        termination,
        frame_gram,
        solution,
        dim: n,
        count: m,
    })
}

impl JacobiSystem {
    pub fn span(&self) -> f64 {
        self.solution.t_end()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn nodes(&self) -> &[f64] {
        &self.solution.ts
    }

    pub fn position(&self, t: f64) -> Vec<f64> {
        self.solution.eval(t)[..self.dim].to_vec()
    }

    pub fn velocity(&self, t: f64) -> Vec<f64> {
        self.solution.eval(t)[self.dim..2 * self.dim].to_vec()
    }

    /// Frame vectors as matrix columns.
    pub fn frame(&self, t: f64) -> Mat {
        let n = self.dim;
        Mat::from_column_slice(n, n, &self.solution.eval(t)[2 * n..2 * n + n * n])
    }

    /// Frame coefficients of `J_j` and `J_j′`.
    pub fn coefficients(&self, j: usize, t: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.dim;
        let y = self.solution.eval(t);
        let a0 = 2 * n + n * n + j * n;
        let d0 = 2 * n + n * n + self.count * n + j * n;
        (y[a0..a0 + n].to_vec(), y[d0..d0 + n].to_vec())
    }

    pub fn field(&self, j: usize, t: f64) -> Vec<f64> {
        linalg::mat_vec(&self.frame(t), &self.coefficients(j, t).0)
    }

    pub fn field_derivative(&self, j: usize, t: f64) -> Vec<f64> {
        linalg::mat_vec(&self.frame(t), &self.coefficients(j, t).1)
    }

    /// Screen block of the Jacobi basis, with point-type columns divided by `t`.
    /// Singular exactly at focal parameters; the identity at `t = 0`.
    pub fn focal_matrix(&self, t: f64) -> Mat {
        let s = self.dim - 2;
        let e0 = column_matrix(&self.init.frame());
        let scale = linalg::inverse(&e0).ok();
        let cols: Vec<Vec<f64>> = (0..self.count)
            .map(|j| {
                let (a, d) = self.coefficients(j, t);
                match self.init.kind {
                    InitKind::Submanifold => a,
                    InitKind::Point if t.abs() > 0.0 => a.iter().map(|c| c / t).collect(),
                    InitKind::Point => d,
                }
            })
            .collect();
        let raw = Mat::from_fn(s, self.count, |i, j| cols[j][i]);
        // Normalize so that the start value is the identity.
        let start: Vec<Vec<f64>> = (0..self.count)
            .map(|j| {
                let v = match self.init.kind {
                    InitKind::Submanifold => &self.init.values[j],
                    InitKind::Point => &self.init.derivatives[j],
                };
                scale
                    .as_ref()
                    .map(|inv| linalg::mat_vec(inv, v))
                    .unwrap_or_else(|| v.clone())
            })
            .collect();
        let a0 = Mat::from_fn(s, self.count, |i, j| start[j][i]);
        match a0.clone().try_inverse() {
            Some(inv) => raw * inv,
            None => raw,
        }
    }

    /// Largest change of `g(Jᵢ, Jⱼ′) − g(Jᵢ′, Jⱼ)` over accepted steps.
    pub fn lagrange_drift(&self) -> f64 {
        let omega = |t: f64| -> Mat {
            let c: Vec<(Vec<f64>, Vec<f64>)> =
                (0..self.count).map(|j| self.coefficients(j, t)).collect();
            Mat::from_fn(self.count, self.count, |i, j| {
                linalg::bilinear(&self.frame_gram, &c[i].0, &c[j].1)
                    - linalg::bilinear(&self.frame_gram, &c[i].1, &c[j].0)
            })
        };
        let w0 = omega(0.0);
        self.solution
            .ts
            .iter()
            .map(|&t| (omega(t) - &w0).amax())
            .fold(0.0, f64::max)
    }

    /// `|screen part| / |all coefficients|` of `J_j(t)`: zero iff `J_j ∥ σ̇`.
    pub fn tangency_residual(&self, j: usize, t: f64) -> f64 {
        let (a, _) = self.coefficients(j, t);
        let s = self.dim - 2;
        linalg::norm(&a[..s]) / linalg::norm(&a).max(f64::MIN_POSITIVE)
    }

    /// Jacobi operator in frame coefficients, `E⁻¹ K E`.
    pub fn frame_operator(&self, model: &SpacetimeModel, t: f64) -> Result<Mat> {
        let e = self.frame(t);
        let k = jacobi_operator(model, &self.position(t), &self.velocity(t))?.matrix;
        e.clone()
            .lu()
            .solve(&(k * &e))
            .ok_or_else(|| GeometryError::Frame(format!("frame singular at t = {t}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FocalMethod {
    SignChange,
    SingularValueDip,
    /// Zero of the indicator extrapolated past the end of an integration
    /// that stopped at the chart boundary.
    Extrapolated,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FocalPoint {
    pub t: f64,
    pub multiplicity: usize,
    pub method: FocalMethod,
    pub bracket: (f64, f64),
    pub sigma_min: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FocalReport {
    pub window: (f64, f64),
    pub start_exclusion: f64,
    pub points: Vec<FocalPoint>,
    pub samples: usize,
    pub sign_changes: usize,
    pub dips_examined: usize,
    /// Smallest singular value seen on the sampling grid.
    pub min_sigma: f64,
}

impl FocalReport {
    pub fn first(&self) -> Option<f64> {
        self.points.first().map(|p| p.t)
    }
}

const SINGULAR: f64 = 1e-8;

fn spectrum(system: &JacobiSystem, t: f64) -> (f64, Vec<f64>) {
    let a = system.focal_matrix(t);
    let det = a.determinant();
    let mut sv: Vec<f64> = a.singular_values().iter().copied().collect();
    sv.sort_by(f64::total_cmp);
    (det, sv)
}

fn multiplicity(sv: &[f64]) -> usize {
    let top = sv.last().copied().unwrap_or(0.0).max(1.0);
    sv.iter().filter(|s| **s <= SINGULAR * top).count()
}

fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Parameters in `window` where the focal matrix drops rank.
///
/// Odd-multiplicity zeros show up as sign changes of the determinant and are
/// bisected; even ones as dips of the smallest singular value, refined by
/// golden-section search. A window reaching the end of an integration that
/// stopped at the chart boundary also gets a linear extrapolation of the
/// singular values from the last two samples.
pub fn find_focal_points(system: &JacobiSystem, window: (f64, f64)) -> Result<FocalReport> {
    let span = system.span();
    let (lo, hi) = window;
    if !(lo >= 0.0 && hi > lo && hi <= span * (1.0 + 1e-12)) {
        return Err(GeometryError::Span { lo, hi, span });
    }
    let hi = hi.min(span);
    let exclusion = 1e-3 * span;
    let start = lo.max(exclusion);
    let tol = 1e-12 * span.max(1.0);
    let mut ts: Vec<f64> = system
        .nodes()
        .iter()
        .copied()
        .filter(|t| *t >= start && *t <= hi)
        .collect();
    let uniform = 512;
    ts.extend((0..=uniform).map(|i| start + (hi - start) * i as f64 / uniform as f64));
    ts.sort_by(f64::total_cmp);
    ts.dedup_by(|a, b| (*a - *b).abs() <= tol);
    let data: Vec<(f64, Vec<f64>)> = ts.iter().map(|&t| spectrum(system, t)).collect();
    let min_sigma = data.iter().map(|(_, s)| s[0]).fold(f64::INFINITY, f64::min);
    let mut points: Vec<FocalPoint> = Vec::new();
    let mut sign_changes = 0;
    for i in 1..ts.len() {
        let (d0, d1) = (data[i - 1].0, data[i].0);
        if d0 == 0.0 || d0.signum() == d1.signum() {
            continue;
        }
        sign_changes += 1;
        let (mut a, mut b) = (ts[i - 1], ts[i]);
        let sa = d0.signum();
        for _ in 0..200 {
            if b - a <= tol {
                break;
            }
            let mid = 0.5 * (a + b);
            let dm = spectrum(system, mid).0;
            if dm == 0.0 {
                a = mid;
                b = mid;
                break;
            }
            if dm.signum() == sa {
                a = mid;
            } else {
                b = mid;
            }
        }
        let t = 0.5 * (a + b);
        let sv = spectrum(system, t).1;
        points.push(FocalPoint {
            t,
            multiplicity: multiplicity(&sv).max(1),
            method: FocalMethod::SignChange,
            bracket: (a, b),
            sigma_min: sv[0],
        });
    }
    let mut dips = 0;
    for i in 1..ts.len().saturating_sub(1) {
        let s = data[i].1[0];
        if !(s <= data[i - 1].1[0] && s <= data[i + 1].1[0]) {
            continue;
        }
        if points
            .iter()
            .any(|p| p.bracket.0 <= ts[i + 1] && p.bracket.1 >= ts[i - 1])
        {
            continue;
        }
        dips += 1;
        let t = golden_min(|t| spectrum(system, t).1[0], ts[i - 1], ts[i + 1], tol);
        let sv = spectrum(system, t).1;
        if multiplicity(&sv) > 0 {
            points.push(FocalPoint {
                t,
                multiplicity: multiplicity(&sv),
                method: FocalMethod::SingularValueDip,
                bracket: (ts[i - 1], ts[i + 1]),
                sigma_min: sv[0],
            });
        }
    }
    let stopped_early = !matches!(system.termination, Termination::ReachedT);
    if stopped_early
        && hi >= span * (1.0 - 1e-12)
        && ts.len() >= 2
        && points.iter().all(|p| p.t < ts[ts.len() - 2])
    {
        if let Some(p) = extrapolate_end(&ts, &data, span) {
            points.push(p);
        }
    }
    points.sort_by(|a, b| a.t.total_cmp(&b.t));
    points.dedup_by(|a, b| (a.t - b.t).abs() <= 1e-9 * span.max(1.0));
    Ok(FocalReport {
        window: (lo, hi),
        start_exclusion: exclusion,
        points,
        samples: ts.len(),
        sign_changes,
        dips_examined: dips,
        min_sigma,
    })
}

fn extrapolate_end(ts: &[f64], data: &[(f64, Vec<f64>)], span: f64) -> Option<FocalPoint> {
    let k = ts.len();
    let (t0, t1) = (ts[k - 2], ts[k - 1]);
    let (s0, s1) = (&data[k - 2].1, &data[k - 1].1);
    let zero = |a: f64, b: f64| {
        let slope = (b - a) / (t1 - t0);
        (slope < 0.0).then(|| t1 + b / -slope)
    };
    let tz = zero(s0[0], s1[0])?;
    let reach = tz - t1;
    if !(reach >= 0.0 && reach <= 1e-3 * span) {
        return None;
    }
    let slack = (0.1 * reach).max(1e-9 * span);
    let mult = s0
        .iter()
        .zip(s1)
        .filter(|(a, b)| zero(**a, **b).is_some_and(|t| (t - tz).abs() <= slack))
        .count();
    Some(FocalPoint {
        t: tz,
        multiplicity: mult.max(1),
        method: FocalMethod::Extrapolated,
        bracket: (t1, tz),
        sigma_min: s1[0],
    })
}

/// Record comparing a detected focal point with the expansion bound.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundCheck {
    /// `k = g_z(H_z, z)` with `H` the trace of `S`.
    pub k: f64,
    /// `(n − 2)/k`: the bound for the averaged expansion `k/(n − 2)`.
    pub bound: f64,
    /// `1/k` with the unaveraged trace, kept as a diagnostic.
    pub literal_bound: f64,
    pub first_focal: Option<f64>,
    /// False when the geodesic ended before the bound without a focal point.
    pub conclusive: bool,
    pub satisfied: bool,
}

pub fn bound_check(
    report: &FocalReport,
    span: f64,
    k: f64,
    dim: usize,
    tolerance: f64,
) -> BoundCheck {
    let bound = (dim as f64 - 2.0) / k;
    let first = report.first();
    let (conclusive, satisfied) = match first {
        Some(r) => (true, r <= bound + tolerance),
        None => (span >= bound, span < bound),
    };
    BoundCheck {
        k,
        bound,
        literal_bound: 1.0 / k,
        first_focal: first,
        conclusive,
        satisfied,
    }
}

type FieldFn = dyn Fn(f64) -> (Vec<f64>, Vec<f64>) + Send + Sync;

/// Vector field along the geodesic given by frame coefficients and their
/// derivatives, smooth between `breaks`.
#[derive(Clone)]
pub struct FrameField {
    f: Arc<FieldFn>,
    pub breaks: Vec<f64>,
}

impl std::fmt::Debug for FrameField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FrameField")
            .field("breaks", &self.breaks)
            .finish()
    }
}

impl FrameField {
    pub fn new(
        f: impl Fn(f64) -> (Vec<f64>, Vec<f64>) + Send + Sync + 'static,
        breaks: Vec<f64>,
    ) -> Self {
        FrameField {
            f: Arc::new(f),
            breaks,
        }
    }

    pub fn eval(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        (self.f)(t)
    }

    /// Zero field.
    pub fn zero(dim: usize) -> Self {
        FrameField::new(move |_| (vec![0.0; dim], vec![0.0; dim]), vec![])
    }

    /// Polynomial coefficients `cᵢ(t) = Σₖ pᵢₖ tᵏ`.
    pub fn polynomial(coeffs: Vec<Vec<f64>>) -> Self {
        FrameField::new(
            move |t| {
                let mut c = Vec::with_capacity(coeffs.len());
                let mut d = Vec::with_capacity(coeffs.len());
                for p in &coeffs {
                    let (mut v, mut dv, mut pow) = (0.0, 0.0, 1.0);
                    for (k, a) in p.iter().enumerate() {
                        v += a * pow;
                        if k + 1 < p.len() {
                            dv += (k + 1) as f64 * p[k + 1] * pow;
                        }
                        pow *= t;
                    }
                    c.push(v);
                    d.push(dv);
                }
                (c, d)
            },
            vec![],
        )
    }

    /// The frame coefficients of the `j`-th Jacobi field of `system`, times `weight`.
    pub fn from_jacobi(system: &JacobiSystem, j: usize, weight: f64) -> Self {
        let s = system.clone();
        FrameField::new(
            move |t| {
                let (a, d) = s.coefficients(j, t);
                (linalg::scale(weight, &a), linalg::scale(weight, &d))
            },
            vec![],
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadrature {
    pub panels: usize,
    pub nodes: usize,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            panels: 16,
            nodes: 10,
        }
    }
}

/// `I(V, W) = ∫₀ᵇ [g(V′, W′) + g(K V, W)] dt − g_z(z, S(V(0), W(0)))`.
pub fn index_form(
    model: &SpacetimeModel,
    system: &JacobiSystem,
    v: &FrameField,
    w: &FrameField,
    b: f64,
) -> Result<f64> {
    index_form_with(model, system, v, w, b, &Quadrature::default())
}

pub fn index_form_with(
    model: &SpacetimeModel,
    system: &JacobiSystem,
    v: &FrameField,
    w: &FrameField,
    b: f64,
    quad: &Quadrature,
) -> Result<f64> {
    let n = system.dim;
    let s = n - 2;
    if !(b > 0.0 && b <= system.span() * (1.0 + 1e-12)) {
        return Err(GeometryError::Span {
            lo: 0.0,
            hi: b,
            span: system.span(),
        });
    }
    let tol = 1e-9;
    for (name, f) in [("V", v), ("W", w)] {
        let (c0, _) = f.eval(0.0);
        let (cb, _) = f.eval(b);
        let scale = 1.0 + linalg::norm(&c0);
        if linalg::norm(&cb) > tol * scale {
            return Err(GeometryError::Input(format!(
                "{name} does not vanish at the endpoint"
            )));
        }
        let start_ok = match system.init.kind {
            InitKind::Submanifold => c0[s..].iter().all(|c| c.abs() <= tol * scale),
            InitKind::Point => linalg::norm(&c0) <= tol,
        };
        if !start_ok {
            return Err(GeometryError::Input(format!(
                "{name}(0) is not tangent to the initial submanifold"
            )));
        }
    }
    let mut breaks: Vec<f64> = v
        .breaks
        .iter()
        .chain(&w.breaks)
        .copied()
        .filter(|t| *t > 0.0 && *t < b)
        .collect();
    breaks.push(0.0);
    breaks.push(b);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();
    let (xs, ws) = linalg::gauss_legendre(quad.nodes);
    let g = &system.frame_gram;
    let mut total = 0.0;
    for piece in breaks.windows(2) {
        let h = (piece[1] - piece[0]) / quad.panels as f64;
        for p in 0..quad.panels {
            let a = piece[0] + p as f64 * h;
            for (x, wt) in xs.iter().zip(&ws) {
                let t = a + 0.5 * h * (x + 1.0);
                let (cv, dv) = v.eval(t);
                let (cw, dw) = w.eval(t);
                for (name, c) in [("V", &cv), ("W", &cw)] {
                    if c[n - 1].abs() > 1e-8 * (1.0 + linalg::norm(c)) {
                        return Err(GeometryError::Input(format!(
                            "{name} is not orthogonal to the geodesic at t = {t}"
                        )));
                    }
                }
                let m = system.frame_operator(model, t)?;
                let kv = linalg::mat_vec(&m, &cv);
                total +=
                    0.5 * h * wt * (linalg::bilinear(g, &dv, &dw) + linalg::bilinear(g, &kv, &cw));
            }
        }
    }
    if let (InitKind::Submanifold, Some(bf)) = (system.init.kind, &system.init.boundary_form) {
        let (cv, _) = v.eval(0.0);
        let (cw, _) = w.eval(0.0);
        total -= linalg::bilinear(bf, &cv[..s], &cw[..s]);
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariationSample {
    pub u: f64,
    /// `g(V′, σ̇)`.
    pub first_exact: f64,
    /// `g(A′, σ̇) + g(KV, V) + g(V′, V′)`.
    pub second_exact: f64,
    /// Central differences of `½ f` per step.
    pub first_fd: Vec<f64>,
    pub second_fd: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VariationReport {
    pub steps: Vec<f64>,
    pub samples: Vec<VariationSample>,
}

impl VariationReport {
    fn residuals(&self, first: bool) -> Vec<f64> {
        (0..self.steps.len())
            .map(|i| {
                self.samples
                    .iter()
                    .map(|s| {
                        if first {
                            (s.first_fd[i] - s.first_exact).abs()
                        } else {
                            (s.second_fd[i] - s.second_exact).abs()
                        }
                    })
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    /// Largest first-variation residual per step.
    pub fn first_residuals(&self) -> Vec<f64> {
        self.residuals(true)
    }

    pub fn second_residuals(&self) -> Vec<f64> {
        self.residuals(false)
    }

    /// Residual ratios between consecutive steps, per sample, for the given order.
    pub fn ratios(&self, first: bool) -> Vec<Vec<f64>> {
        self.samples
            .iter()
            .map(|s| {
                let r: Vec<f64> = (0..self.steps.len())
                    .map(|i| {
                        if first {
                            (s.first_fd[i] - s.first_exact).abs()
                        } else {
                            (s.second_fd[i] - s.second_exact).abs()
                        }
                    })
                    .collect();
                r.windows(2).map(|w| w[0] / w[1]).collect()
            })
            .collect()
    }
}

/// Compares finite differences of `f(u, s) = L(∂ᵤx(u, s))` against the first
/// and second variation formulas.
///
/// The variation is `x(u, s) = σ(u) + sV(u) + ½s²(A(u) − Γ_σ̇(V, V))`, whose
/// variation field is `V` and whose acceleration (with reference `σ̇`) is `A`.
pub fn variation_crosscheck(
    model: &SpacetimeModel,
    system: &JacobiSystem,
    v: &FrameField,
    a: &FrameField,
    at: &[f64],
    steps: &[f64],
) -> Result<VariationReport> {
    let n = system.dim;
    let coords = |f: &FrameField, u: f64| -> Result<(Vec<f64>, Vec<f64>)> {
        let e = system.frame(u);
        let (c, dc) = f.eval(u);
        let (_, nl) = spray_and_nonlinear(model, &system.position(u), &system.velocity(u))?;
        let field = linalg::mat_vec(&e, &c);
        // d/du (E c) = −N E c + E ċ
        let rate = linalg::axpy(
            -1.0,
            &linalg::mat_vec(&nl, &field),
            &linalg::mat_vec(&e, &dc),
        );
        Ok((field, rate))
    };
    let bend = |u: f64| -> Result<Vec<f64>> {
        let (vf, _) = coords(v, u)?;
        let (af, _) = coords(a, u)?;
        let gamma = chern_christoffel(model, &system.position(u), &system.velocity(u))?;
        Ok(linalg::axpy(
            -1.0,
            &contract_christoffel(&gamma, &vf, &vf),
            &af,
        ))
    };
    let mut samples = Vec::with_capacity(at.len());
    for &u in at {
        let x = system.position(u);
        let vel = system.velocity(u);
        let (vf, vrate) = coords(v, u)?;
        let b0 = bend(u)?;
        let d = 1e-3 * system.span().max(1.0);
        let stencil = [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)];
        let mut brate = vec![0.0; n];
        for (k, w) in stencil {
            brate = linalg::axpy(w / (12.0 * d), &bend(u + k * d)?, &brate);
        }
        let f = |s: f64| -> f64 {
            let pos: Vec<f64> = (0..n)
                .map(|i| x[i] + s * vf[i] + 0.5 * s * s * b0[i])
                .collect();
            let tan: Vec<f64> = (0..n)
                .map(|i| vel[i] + s * vrate[i] + 0.5 * s * s * brate[i])
                .collect();
            model.l(&pos, &tan)
        };
        let g = model.fundamental_tensor(&x, &vel)?;
        let e = system.frame(u);
        let (cv, dcv) = v.eval(u);
        let (ca, dca) = a.eval(u);
        let vp = linalg::mat_vec(&e, &dcv);
        let ap = linalg::mat_vec(&e, &dca);
        let _ = ca;
        let kv = linalg::mat_vec(
            &jacobi_operator(model, &x, &vel)?.matrix,
            &linalg::mat_vec(&e, &cv),
        );
        let first_exact = g.apply(&vp, &vel);
        let second_exact = g.apply(&ap, &vel) + g.apply(&kv, &vf) + g.apply(&vp, &vp);
        let f0 = f(0.0);
        let mut first_fd = Vec::with_capacity(steps.len());
        let mut second_fd = Vec::with_capacity(steps.len());
        for &h in steps {
            let (fp, fm) = (f(h), f(-h));
            first_fd.push(0.5 * (fp - fm) / (2.0 * h));
            second_fd.push(0.5 * (fp - 2.0 * f0 + fm) / (h * h));
        }
        samples.push(VariationSample {
            u,
            first_exact,
            second_exact,
            first_fd,
            second_fd,
        });
    }
    Ok(VariationReport {
        steps: steps.to_vec(),
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesic::{integrate_geodesic, GeodesicOptions};
    use crate::spacetime::Minkowski;

    #[test]
    fn golden_section_finds_kink() {
        let t = golden_min(|t| (t - 0.3141).abs(), 0.0, 1.0, 1e-13);
        assert!((t - 0.3141).abs() < 1e-12);
    }

    #[test]
    fn flat_point_jacobi_fields_are_linear() {
        let m = Minkowski::model(4);
        let x = [0.0; 4];
        let z = [1.0, 0.6, 0.8, 0.0];
        let path = integrate_geodesic(&m, &x, &z, 3.0, &GeodesicOptions::default()).unwrap();
        let init = JacobiInit::point(&m, &x, &z).unwrap();
        let sys = solve_jacobi(&m, &path, &init).unwrap();
        for j in 0..2 {
            let j3 = sys.field(j, 3.0);
            for i in 0..4 {
                assert!((j3[i] - 3.0 * init.derivatives[j][i]).abs() < 1e-10);
            }
        }
        let a = sys.focal_matrix(2.0);
        assert!((a - Mat::identity(2, 2)).amax() < 1e-10);
        let rep = find_focal_points(&sys, (0.0, 3.0)).unwrap();
        assert!(rep.points.is_empty());
    }
}
