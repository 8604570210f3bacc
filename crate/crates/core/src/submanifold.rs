//! Spacelike codimension-two surfaces: null normals, second fundamental
//! forms, mean curvature and the trapped-surface test.

use std::f64::consts::PI;
use std::fmt::Debug;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::connection::{chern_christoffel, contract_christoffel};
use crate::error::{GeometryError, Result};
use crate::expr::{Bindings, Expr};
use crate::jets::Jet;
use crate::linalg::{self, Mat};
use crate::spacetime::{CausalCharacter, FundamentalTensor, SpacetimeModel};

/// Parametrized embedding `u ↦ x(u)` evaluated on jets.
pub trait Embedding: Send + Sync + Debug {
    fn ambient_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn eval(&self, u: &[Jet]) -> Vec<Jet>;
}

/// Embedding given by one expression in `u0, u1, ..` per ambient coordinate.
#[derive(Clone, Debug)]
pub struct ExpressionEmbedding {
    components: Vec<Expr>,
    params: usize,
}

impl ExpressionEmbedding {
    pub fn new(components: Vec<Expr>, params: usize) -> Result<Self> {
        for c in &components {
            let (nx, nv, nu) = c.arity();
            if nx > 0 || nv > 0 {
                return Err(GeometryError::Expression(format!(
                    "embedding component `{}` may only use u-variables",
                    c.source()
                )));
            }
            if nu > params {
                return Err(GeometryError::Expression(format!(
                    "embedding component `{}` uses u{} but the patch has {params} parameters",
                    c.source(),
                    nu - 1
                )));
            }
        }
        Ok(ExpressionEmbedding { components, params })
    }
}

impl Embedding for ExpressionEmbedding {
    fn ambient_dim(&self) -> usize {
        self.components.len()
    }

    fn param_dim(&self) -> usize {
        self.params
    }

    fn eval(&self, u: &[Jet]) -> Vec<Jet> {
        let b = Bindings { x: &[], v: &[], u };
        self.components.iter().map(|c| c.eval(&b)).collect()
    }
}

#[derive(Clone, Copy, Debug)]
enum Builtin {
    /// Round sphere (n = 4) or circle (n = 3) in a constant-time slice of flat space.
    FlatSphere { dim: usize, radius: f64, time: f64 },
    /// Symmetry sphere `r = radius` at advanced time `time` in ingoing coordinates.
    SymmetrySphere { radius: f64, time: f64 },
    /// Coordinate plane (n = 4) or line (n = 3) through the origin at `time`.
    Plane { dim: usize, time: f64 },
    /// Torus of revolution in a constant-time slice.
    Torus { major: f64, minor: f64, time: f64 },
}

impl Embedding for Builtin {
    fn ambient_dim(&self) -> usize {
        match *self {
            Builtin::FlatSphere { dim, .. } | Builtin::Plane { dim, .. } => dim,
            Builtin::SymmetrySphere { .. } | Builtin::Torus { .. } => 4,
        }
    }

    fn param_dim(&self) -> usize {
        self.ambient_dim() - 2
    }

    fn eval(&self, u: &[Jet]) -> Vec<Jet> {
        let c = Jet::constant;
        match *self {
            Builtin::FlatSphere {
                dim: 3,
                radius,
                time,
            } => {
                vec![c(time), u[0].cos() * radius, u[0].sin() * radius]
            }
            Builtin::FlatSphere { radius, time, .. } => {
                let s = u[0].sin() * radius;
                vec![c(time), s * u[1].cos(), s * u[1].sin(), u[0].cos() * radius]
            }
            Builtin::SymmetrySphere { radius, time } => vec![c(time), c(radius), u[0], u[1]],
            Builtin::Plane { dim: 3, time } => vec![c(time), c(0.0), u[0]],
            Builtin::Plane { time, .. } => vec![c(time), c(0.0), u[0], u[1]],
            Builtin::Torus { major, minor, time } => {
                let ring = u[0].cos() * minor + major;
                vec![
                    c(time),
                    ring * u[1].cos(),
                    ring * u[1].sin(),
                    u[0].sin() * minor,
                ]
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct SurfacePatch {
    pub name: String,
    embedding: Arc<dyn Embedding>,
    /// Parameter box.
    pub domain: Vec<(f64, f64)>,
    /// Grid cells per parameter.
    pub resolution: Vec<usize>,
    /// User-asserted compactness of the parametrized surface.
    pub closed: bool,
}

impl SurfacePatch {
    pub fn new(
        name: impl Into<String>,
        embedding: Arc<dyn Embedding>,
        domain: Vec<(f64, f64)>,
        resolution: Vec<usize>,
        closed: bool,
    ) -> Result<Self> {
        let k = embedding.param_dim();
        if embedding.ambient_dim() < 3 || k + 2 != embedding.ambient_dim() {
            return Err(GeometryError::Input(format!(
                "a codimension-two patch in dimension {} needs {} parameters, got {k}",
                embedding.ambient_dim(),
                embedding.ambient_dim().saturating_sub(2)
            )));
        }
        if domain.len() != k || resolution.len() != k {
            return Err(GeometryError::Input(
                "patch domain and resolution must list one entry per parameter".into(),
            ));
        }
        if domain.iter().any(|(a, b)| !(a < b)) || resolution.contains(&0) {
            return Err(GeometryError::Input(
                "empty parameter domain or zero resolution".into(),
            ));
        }
        Ok(SurfacePatch {
            name: name.into(),
            embedding,
            domain,
            resolution,
            closed,
        })
    }

    fn builtin(name: String, b: Builtin, domain: Vec<(f64, f64)>, closed: bool) -> Self {
        let resolution = vec![6; domain.len()];
        SurfacePatch::new(name, Arc::new(b), domain, resolution, closed)
            .expect("built-in patch is well formed")
    }

    /// Round sphere of `radius` in the slice `x⁰ = time`; a circle when `dim = 3`.
    pub fn flat_sphere(dim: usize, radius: f64, time: f64) -> Self {
        assert!(
            dim == 3 || dim == 4,
            "flat spheres are provided for n = 3, 4"
        );
        let domain = if dim == 3 {
            vec![(0.0, 2.0 * PI)]
        } else {
            vec![(0.0, PI), (0.0, 2.0 * PI)]
        };
        Self::builtin(
            format!("flat-sphere(rho={radius})"),
            Builtin::FlatSphere { dim, radius, time },
            domain,
            true,
        )
    }

    /// Sphere `r = radius` at advanced time `time` in ingoing Eddington–Finkelstein coordinates.
    pub fn symmetry_sphere(radius: f64, time: f64) -> Self {
        Self::builtin(
            format!("symmetry-sphere(r0={radius})"),
            Builtin::SymmetrySphere { radius, time },
            vec![(0.0, PI), (0.0, 2.0 * PI)],
            true,
        )
    }

    pub fn plane(dim: usize, time: f64) -> Self {
        assert!(dim == 3 || dim == 4, "planes are provided for n = 3, 4");
        let domain = vec![(-1.0, 1.0); dim - 2];
        Self::builtin("plane".into(), Builtin::Plane { dim, time }, domain, false)
    }

    pub fn torus(major: f64, minor: f64, time: f64) -> Self {
        Self::builtin(
            format!("torus(R={major}, a={minor})"),
            Builtin::Torus { major, minor, time },
            vec![(0.0, 2.0 * PI), (0.0, 2.0 * PI)],
            true,
        )
    }

    pub fn with_resolution(mut self, resolution: Vec<usize>) -> Result<Self> {
        if resolution.len() != self.param_dim() || resolution.contains(&0) {
            return Err(GeometryError::Input(
                "resolution must give a positive count per parameter".into(),
            ));
        }
        self.resolution = resolution;
        Ok(self)
    }

    pub fn ambient_dim(&self) -> usize {
        self.embedding.ambient_dim()
    }

    pub fn param_dim(&self) -> usize {
        self.embedding.param_dim()
    }

    pub fn jet_point(&self, u: &[Jet]) -> Vec<Jet> {
        self.embedding.eval(u)
    }

    pub fn point(&self, u: &[f64]) -> Vec<f64> {
        let uj: Vec<Jet> = u.iter().map(|&c| Jet::constant(c)).collect();
        self.embedding.eval(&uj).iter().map(Jet::value).collect()
    }

    /// Coordinate tangent vectors `∂ₐx(u)`.
    pub fn tangents(&self, u: &[f64]) -> Vec<Vec<f64>> {
        (0..self.param_dim())
            .map(|a| {
                let uj: Vec<Jet> = u
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| {
                        if i == a {
                            Jet::constant(c) + Jet::epsilon(0)
                        } else {
                            Jet::constant(c)
                        }
                    })
                    .collect();
                self.embedding
                    .eval(&uj)
                    .iter()
                    .map(|c| c.coeff(1))
                    .collect()
            })
            .collect()
    }

    /// `∂ₐ∂_b x(u)` indexed `[a][b][i]`.
    pub fn second_derivatives(&self, u: &[f64]) -> Vec<Vec<Vec<f64>>> {
        let k = self.param_dim();
        (0..k)
            .map(|a| {
                (0..k)
                    .map(|b| {
                        let uj: Vec<Jet> = u
                            .iter()
                            .enumerate()
                            .map(|(i, &c)| {
                                let mut j = Jet::constant(c);
                                if i == a {
                                    j += Jet::epsilon(0);
                                }
                                if i == b {
                                    j += Jet::epsilon(1);
                                }
                                j
                            })
                            .collect();
                        self.embedding
                            .eval(&uj)
                            .iter()
                            .map(|c| c.coeff(0b11))
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    /// Cell-centred parameter grid.
    pub fn grid(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![]];
        for (&(lo, hi), &m) in self.domain.iter().zip(&self.resolution) {
            let h = (hi - lo) / m as f64;
            out = out
                .into_iter()
                .flat_map(|p| {
                    (0..m).map(move |i| {
                        let mut q = p.clone();
                        q.push(lo + (i as f64 + 0.5) * h);
                        q
                    })
                })
                .collect();
        }
        out
    }

    /// Full rank and spacelike tangent space at `u`.
    pub fn check_spacelike(&self, model: &SpacetimeModel, u: &[f64]) -> Result<()> {
        let x = self.point(u);
        let t = self.tangents(u);
        let n = self.ambient_dim();
        let k = t.len();
        let jac = Mat::from_fn(n, k, |i, a| t[a][i]);
        let sv = jac.singular_values();
        let top = sv.max();
        if !(sv.min() > 1e-10 * top.max(1e-300)) {
            return Err(GeometryError::Geometry(format!(
                "embedding derivative is rank deficient at u = {u:?}"
            )));
        }
        let mut probes: Vec<Vec<f64>> = t.clone();
        if k == 2 {
            for j in 0..8 {
                let a = PI * j as f64 / 8.0;
                probes.push(linalg::axpy(a.cos(), &t[0], &linalg::scale(a.sin(), &t[1])));
            }
        }
        for w in probes {
            let c = model.classify_vector(&x, &w)?;
            if c.character != CausalCharacter::Spacelike {
                return Err(GeometryError::Geometry(format!(
                    "tangent vector {w:?} at u = {u:?} is {:?}, not spacelike",
                    c.character
                )));
            }
        }
        Ok(())
    }
}

/// Orthogonal splitting `T_pM = T_pP ⊕ T_pP^⊥` with respect to `g_z`.
#[derive(Clone, Debug)]
pub struct Splitting {
    pub g: FundamentalTensor,
    pub tangents: Vec<Vec<f64>>,
    /// Induced metric `hₐ_b = g_z(∂ₐx, ∂_bx)`.
    pub induced: Mat,
    induced_inv: Mat,
}

impl Splitting {
    pub fn new(
        model: &SpacetimeModel,
        x: &[f64],
        z: &[f64],
        tangents: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let g = model.fundamental_tensor(x, z)?;
        let k = tangents.len();
        let induced = Mat::from_fn(k, k, |a, b| g.apply(&tangents[a], &tangents[b]));
        let spectrum = linalg::sym_eigenvalues(&induced);
        let scale = spectrum.iter().fold(0.0f64, |m, e| m.max(e.abs()));
        if spectrum
            .iter()
            .any(|e| e.abs() <= model.tolerances.degeneracy * scale.max(1.0))
        {
            return Err(GeometryError::Degenerate { spectrum });
        }
        let induced_inv = linalg::inverse(&induced)?;
        Ok(Splitting {
            g,
            tangents,
            induced,
            induced_inv,
        })
    }

    /// Coefficients of the tangential part of `y` in the basis `∂ₐx`.
    pub fn tangential_coefficients(&self, y: &[f64]) -> Vec<f64> {
        let rhs: Vec<f64> = self.tangents.iter().map(|w| self.g.apply(y, w)).collect();
        linalg::mat_vec(&self.induced_inv, &rhs)
    }

    pub fn tangential(&self, y: &[f64]) -> Vec<f64> {
        let c = self.tangential_coefficients(y);
        let mut out = vec![0.0; y.len()];
        for (ca, w) in c.iter().zip(&self.tangents) {
            out = linalg::axpy(*ca, w, &out);
        }
        out
    }

    pub fn normal(&self, y: &[f64]) -> Vec<f64> {
        let t = self.tangential(y);
        y.iter().zip(&t).map(|(a, b)| a - b).collect()
    }
}

/// The two future lightlike normals at one point of a patch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NullNormalPair {
    pub u: Vec<f64>,
    pub point: Vec<f64>,
    /// Both normalized by `g_z(z, τ) = 1`.
    pub normals: [Vec<f64>; 2],
    /// Largest `|g_z(z, ŵ)|/|z|` over unit tangents `ŵ`.
    pub orthogonality_residual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalSearch {
    /// Random starts added to the deterministic ones.
    pub extra_starts: usize,
    pub max_iterations: usize,
    /// Roots closer than this angle are one direction.
    pub merge_angle: f64,
}

impl Default for NormalSearch {
    fn default() -> Self {
        NormalSearch {
            extra_starts: 8,
            max_iterations: 80,
            merge_angle: 1e-6,
        }
    }
}

/// Basis of `ker θ`, orthonormal for `−g_τ`, whose first `k` vectors span the
/// projections of `tangents`.
fn section_basis(
    model: &SpacetimeModel,
    x: &[f64],
    tangents: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = model.dim();
    let tau = model.reference_time(x);
    let g = model.fundamental_tensor(x, &tau)?;
    let gtt = g.apply(&tau, &tau);
    let project = |w: &[f64]| linalg::axpy(-g.apply(&tau, w) / gtt, &tau, w);
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let candidates = tangents
        .iter()
        .cloned()
        .chain((0..n).map(|i| crate::spacetime::unit(n, i)));
    for c in candidates {
        if basis.len() == n - 1 {
            break;
        }
        let mut w = project(&c);
        for b in &basis {
            w = linalg::axpy(g.apply(&w, b), b, &w);
        }
        let q = -g.apply(&w, &w);
        if q > 1e-12 * linalg::norm(&c).powi(2).max(1e-300) {
            basis.push(linalg::scale(1.0 / q.sqrt(), &w));
        }
    }
    if basis.len() != n - 1 {
        return Err(GeometryError::Geometry(
            "could not build a basis of the cone section".into(),
        ));
    }
    Ok((tau, basis))
}

/// Solves `L(z) = 0`, `g_z(z, wₐ) = 0` on the section through `seed`.
fn newton_on_section(
    model: &SpacetimeModel,
    x: &[f64],
    tau: &[f64],
    basis: &[Vec<f64>],
    tangents: &[Vec<f64>],
    seed: &[f64],
    max_iter: usize,
) -> Option<Vec<f64>> {
    let m = basis.len();
    let to_z = |s: &[f64]| {
        let mut z = tau.to_vec();
        for (si, b) in s.iter().zip(basis) {
            z = linalg::axpy(*si, b, &z);
        }
        z
    };
    let residual = |z: &[f64]| -> Option<(Vec<f64>, FundamentalTensor)> {
        if !model.is_smooth(x, z) {
            return None;
        }
        let g = model.fundamental_tensor(x, z).ok()?;
        let zz = linalg::norm(z);
        let mut f = vec![model.l(x, z) / (zz * zz)];
        f.extend(tangents.iter().map(|w| g.apply(z, w) / zz));
        Some((f, g))
    };
    let fnorm = |f: &[f64]| linalg::norm(f);
    // Section coordinates of the seed.
    let g_tau = model.fundamental_tensor(x, tau).ok()?;
    let d: Vec<f64> = seed.iter().zip(tau).map(|(a, b)| a - b).collect();
    let mut s: Vec<f64> = basis.iter().map(|b| -g_tau.apply(&d, b)).collect();
    let (mut f, mut g) = residual(&to_z(&s))?;
    for _ in 0..max_iter {
        if fnorm(&f) < 1e-14 {
            return Some(to_z(&s));
        }
        let z = to_z(&s);
        let zz = linalg::norm(&z);
        // Jacobian of the scaled residual, dropping derivatives of the scale
        // factors (they vanish at a root).
        let jac = Mat::from_fn(m, m, |r, c| {
            if r == 0 {
                2.0 * g.apply(&z, &basis[c]) / (zz * zz)
            } else {
                g.apply(&tangents[r - 1], &basis[c]) / zz
            }
        });
        let rhs = nalgebra::DVector::from_vec(f.iter().map(|c| -c).collect());
        let step = jac.lu().solve(&rhs)?;
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = s
                .iter()
                .zip(step.iter())
                .map(|(a, b)| a + alpha * b)
                .collect();
            if let Some((ft, gt)) = residual(&to_z(&trial)) {
                if fnorm(&ft) < (1.0 - 0.25 * alpha) * fnorm(&f) || fnorm(&ft) < 1e-14 {
                    s = trial;
                    f = ft;
                    g = gt;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (fnorm(&f) < 1e-11).then(|| to_z(&s))
}

/// The two future null normals to the span of `tangents` at `x`.
pub fn null_normals_at(
    model: &SpacetimeModel,
    x: &[f64],
    tangents: &[Vec<f64>],
    search: &NormalSearch,
) -> Result<[Vec<f64>; 2]> {
    let n = model.dim();
    if tangents.len() + 2 != n {
        return Err(GeometryError::Input(format!(
            "expected {} tangent vectors, got {}",
            n - 2,
            tangents.len()
        )));
    }
    let unit_tangents: Vec<Vec<f64>> = tangents
        .iter()
        .map(|w| linalg::scale(1.0 / linalg::norm(w), w))
        .collect();
    let (tau, basis) = section_basis(model, x, &unit_tangents)?;
    let mut directions: Vec<Vec<f64>> = Vec::new();
    // Starts exactly along a tangent direction make the Jacobian singular, so
    // those are tilted toward the normal direction of the section.
    let last = &basis[n - 2];
    for (i, b) in basis.iter().enumerate() {
        let tilt = if i + 1 < basis.len() { 0.3 } else { 0.0 };
        directions.push(linalg::axpy(tilt, last, b));
        directions.push(linalg::axpy(tilt, last, &linalg::scale(-1.0, b)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x6e6f726d);
    for _ in 0..search.extra_starts {
        let mut d = vec![0.0; n];
        for b in &basis {
            let c: f64 = rng.gen_range(-1.0..1.0);
            d = linalg::axpy(c, b, &d);
        }
        directions.push(d);
    }
    let mut roots: Vec<Vec<f64>> = Vec::new();
    for d in &directions {
        let Ok(seed) = model.null_toward(x, d) else {
            continue;
        };
        let Some(z) = newton_on_section(
            model,
            x,
            &tau,
            &basis,
            &unit_tangents,
            &seed,
            search.max_iterations,
        ) else {
            continue;
        };
        let Ok(c) = model.classify_vector(x, &z) else {
            continue;
        };
        if !c.is_future_causal() {
            continue;
        }
        if roots
            .iter()
            .all(|r| linalg::angle(r, &z) > search.merge_angle)
        {
            roots.push(z);
        }
    }
    if roots.len() != 2 {
        return Err(GeometryError::Geometry(format!(
            "found {} future null normal directions at x = {x:?}, expected exactly two",
            roots.len()
        )));
    }
    let time = model.tau(x);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(2);
    for z in roots {
        let g = model.fundamental_tensor(x, &z)?;
        let c = g.apply(&z, &time);
        if !(c > 0.0) {
            return Err(GeometryError::Geometry(format!(
                "null normal {z:?} is not future against the time field"
            )));
        }
        out.push(linalg::scale(1.0 / c, &z));
    }
    // Deterministic order: larger component along the last section direction first.
    let key = |z: &[f64]| {
        -model
            .fundamental_tensor(x, &tau)
            .map(|g| g.apply(z, &basis[n - 2]))
            .unwrap_or(0.0)
    };
    out.sort_by(|a, b| key(b).total_cmp(&key(a)));
    let second = out.pop().expect("two roots");
    let first = out.pop().expect("two roots");
    Ok([first, second])
}

pub fn null_normals(
    model: &SpacetimeModel,
    patch: &SurfacePatch,
    u: &[f64],
) -> Result<NullNormalPair> {
    null_normals_with(model, patch, u, &NormalSearch::default())
}

pub fn null_normals_with(
    model: &SpacetimeModel,
    patch: &SurfacePatch,
    u: &[f64],
    search: &NormalSearch,
) -> Result<NullNormalPair> {
    patch.check_spacelike(model, u)?;
    let x = patch.point(u);
    let tangents = patch.tangents(u);
    let normals = null_normals_at(model, &x, &tangents, search)?;
    let mut residual: f64 = 0.0;
    for z in &normals {
        let g = model.fundamental_tensor(&x, z)?;
        for w in &tangents {
            residual = residual.max((g.apply(z, w) / (linalg::norm(z) * linalg::norm(w))).abs());
        }
    }
    Ok(NullNormalPair {
        u: u.to_vec(),
        point: x,
        normals,
        orthogonality_residual: residual,
    })
}

fn check_normal(model: &SpacetimeModel, split: &Splitting, z: &[f64]) -> Result<()> {
    let zn = linalg::norm(z);
    for w in &split.tangents {
        let r = split.g.apply(z, w) / (zn * linalg::norm(w));
        if r.abs() > 1e-6 {
            return Err(GeometryError::Input(format!(
                "z is not g_z-orthogonal to the patch (residual {r:.3e})"
            )));
        }
    }
    let c = model.classify_vector(&split.g.x, z)?;
    if !c.is_future_causal() {
        return Err(GeometryError::Input(
            "z must be a future causal normal".into(),
        ));
    }
    Ok(())
}

/// `S_z(∂ₐx, ∂_bx)` for all parameter pairs.
#[derive(Clone, Debug)]
pub struct SecondFundamentalForm {
    pub z: Vec<f64>,
    pub splitting: Splitting,
    /// Normal-valued components indexed `[a][b]`.
    pub components: Vec<Vec<Vec<f64>>>,
}

impl SecondFundamentalForm {
    /// Mean curvature vector: the `g_z`-trace of `S_z` over the induced metric.
    pub fn mean_curvature(&self) -> Vec<f64> {
        let k = self.components.len();
        let n = self.z.len();
        let mut h = vec![0.0; n];
        for a in 0..k {
            for b in 0..k {
                h = linalg::axpy(
                    self.splitting.induced_inv[(a, b)],
                    &self.components[a][b],
                    &h,
                );
            }
        }
        h
    }

    /// `g_z(S_z(∂ₐx, ∂_bx), z)`.
    pub fn scalar(&self) -> Mat {
        let k = self.components.len();
        Mat::from_fn(k, k, |a, b| {
            self.splitting.g.apply(&self.components[a][b], &self.z)
        })
    }

    /// `g_z(H_z, z)`.
    pub fn expansion(&self) -> f64 {
        self.splitting.g.apply(&self.mean_curvature(), &self.z)
    }
}

pub fn second_fundamental_form(
    model: &SpacetimeModel,
    patch: &SurfacePatch,
    u: &[f64],
    z: &[f64],
) -> Result<SecondFundamentalForm> {
    let x = patch.point(u);
    let split = Splitting::new(model, &x, z, patch.tangents(u))?;
    check_normal(model, &split, z)?;
    let gamma = chern_christoffel(model, &x, z)?;
    let dd = patch.second_derivatives(u);
    let k = split.tangents.len();
    let components = (0..k)
        .map(|a| {
            (0..k)
                .map(|b| {
                    let conn = contract_christoffel(&gamma, &split.tangents[a], &split.tangents[b]);
                    let y: Vec<f64> = dd[a][b].iter().zip(&conn).map(|(p, q)| p + q).collect();
                    split.normal(&y)
                })
                .collect()
        })
        .collect();
    Ok(SecondFundamentalForm {
        z: z.to_vec(),
        splitting: split,
        components,
    })
}

pub fn mean_curvature(
    model: &SpacetimeModel,
    patch: &SurfacePatch,
    u: &[f64],
    z: &[f64],
) -> Result<Vec<f64>> {
    Ok(second_fundamental_form(model, patch, u, z)?.mean_curvature())
}

/// Derivatives `∂_b z` of the null normal field through `z`, keeping the
/// normalization `g_z(z, τ)` fixed.
pub fn null_normal_derivatives(
    model: &SpacetimeModel,
    patch: &SurfacePatch,
    u: &[f64],
    z: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let n = model.dim();
    let k = patch.param_dim();
    let x = patch.point(u);
    let tangents = patch.tangents(u);
    let g = model.fundamental_tensor(&x, z)?;
    if model.l(&x, z).abs() > 1e-8 * linalg::norm(z).powi(2) {
        return Err(GeometryError::Input(
            "normal derivatives are defined for null normals only".into(),
        ));
    }
    let tau = model.tau(&x);
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
    rows.push((0..n).map(|i| 2.0 * g.lower(z)[i]).collect());
    for w in &tangents {
        rows.push(g.lower(w));
    }
    rows.push(g.lower(&tau));
    let jz = Mat::from_fn(n, n, |r, c| rows[r][c]);
    let lu = jz.lu();
    let zl: Vec<Jet> = z.iter().map(|&c| Jet::constant(c)).collect();
    (0..k)
        .map(|b| {
            let shift = |extra: Option<usize>| -> Vec<Jet> {
                u.iter()
                    .enumerate()
                    .map(|(i, &c)| {
                        let mut j = Jet::constant(c);
                        if i == b {
                            j += Jet::epsilon(2);
                        }
                        if Some(i) == extra {
                            j += Jet::epsilon(1);
                        }
                        j
                    })
                    .collect()
            };
            let xj = patch.jet_point(&shift(None));
            let mut fu = vec![model.l_jet(&xj, &zl).coeff(0b100)];
            for a in 0..k {
                let wa: Vec<Jet> = patch
                    .jet_point(&shift(Some(a)))
                    .iter()
                    .map(|c| c.extract(0b10))
                    .collect();
                let v: Vec<Jet> = zl
                    .iter()
                    .zip(&wa)
                    .map(|(zi, wi)| *zi + Jet::epsilon(0) * *wi)
                    .collect();
                fu.push(0.5 * model.l_jet(&xj, &v).coeff(0b101));
            }
            let tj = model.tau_jet(&xj);
            let v: Vec<Jet> = zl
                .iter()
                .zip(&tj)
                .map(|(zi, ti)| *zi + Jet::epsilon(0) * *ti)
                .collect();
            fu.push(0.5 * model.l_jet(&xj, &v).coeff(0b101));
            let rhs = nalgebra::DVector::from_vec(fu.iter().map(|c| -c).collect());
            let dz = lu.solve(&rhs).ok_or_else(|| {
                GeometryError::Geometry("null normal constraints are singular".into())
            })?;
            Ok(dz.iter().copied().collect())
        })
        .collect()
}

/// `S̃_z(∂_bx)`: tangential part of `∇^z_{∂_b} Z` for the null normal field `Z`.
pub fn normal_second_fundamental_form(
    model: &SpacetimeModel,
    patch: &SurfacePatch,
    u: &[f64],
    z: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let x = patch.point(u);
    let split = Splitting::new(model, &x, z, patch.tangents(u))?;
    check_normal(model, &split, z)?;
    let dz = null_normal_derivatives(model, patch, u, z)?;
    let gamma = chern_christoffel(model, &x, z)?;
    Ok(split
        .tangents
        .iter()
        .zip(&dz)
        .map(|(w, d)| {
            let conn = contract_christoffel(&gamma, w, z);
            let y: Vec<f64> = d.iter().zip(&conn).map(|(p, q)| p + q).collect();
            split.tangential(&y)
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrappedPoint {
    pub u: Vec<f64>,
    pub x: Vec<f64>,
    pub normals: [Vec<f64>; 2],
    /// `k = g_z(H_z, z)` for each normal.
    pub expansions: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrappedReport {
    pub patch: String,
    pub closed_asserted: bool,
    pub epsilon: f64,
    pub points: Vec<TrappedPoint>,
    pub min_expansion: f64,
    pub trapped: bool,
}

impl TrappedReport {
    /// Focal-bound inputs `(u, normal index, k)` with `k > 0`.
    pub fn positive_expansions(&self) -> Vec<(Vec<f64>, usize, f64)> {
        self.points
            .iter()
            .flat_map(|p| {
                (0..2)
                    .filter(|&i| p.expansions[i] > 0.0)
                    .map(move |i| (p.u.clone(), i, p.expansions[i]))
            })
            .collect()
    }
}

pub fn trapped_point(
    model: &SpacetimeModel,
    patch: &SurfacePatch,
    u: &[f64],
) -> Result<TrappedPoint> {
    let pair = null_normals(model, patch, u)?;
    let mut expansions = [0.0; 2];
    for (i, z) in pair.normals.iter().enumerate() {
        expansions[i] = second_fundamental_form(model, patch, u, z)?.expansion();
    }
    Ok(TrappedPoint {
        u: u.to_vec(),
        x: pair.point,
        normals: pair.normals,
        expansions,
    })
}

/// Trapped iff `k > ε` for both null normals at every grid point.
pub fn trapped_test(
    model: &SpacetimeModel,
    patch: &SurfacePatch,
    epsilon: f64,
) -> Result<TrappedReport> {
    trapped_test_on(model, patch, &patch.grid(), epsilon)
}

pub fn trapped_test_on(
    model: &SpacetimeModel,
    patch: &SurfacePatch,
    grid: &[Vec<f64>],
    epsilon: f64,
) -> Result<TrappedReport> {
    let points: Vec<TrappedPoint> = grid
        .par_iter()
        .map(|u| trapped_point(model, patch, u))
        .collect::<Result<_>>()?;
    let min_expansion = points
        .iter()
        .flat_map(|p| p.expansions)
        .fold(f64::INFINITY, f64::min);
    Ok(TrappedReport {
        patch: patch.name.clone(),
        closed_asserted: patch.closed,
        epsilon,
        trapped: !points.is_empty() && min_expansion > epsilon,
        min_expansion,
        points,
    })
}
