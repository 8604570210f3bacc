//! Geodesic spray, Chern connection and curvature along the flagpole.
//!
//! The spray is obtained from the Euler–Lagrange equations of `L`:
//! `2 g_lk ẍᵏ = ∂_l L − (∂²L/∂vˡ∂xᵏ) vᵏ`, so `Gⁱ = ¼ gⁱˡ (M_l − D_l)` with
//! `D_l = ∂L/∂xˡ` and `M_l = ∂²L/∂vˡ∂xᵏ vᵏ`. Jet slots 0 and 1 carry these
//! inner derivatives; slots 2 and 3 are left free so callers can
//! differentiate the spray itself.
//!
//! Curvature is the spray (Berwald) Riemann curvature
//! `Rⁱ_k = 2∂_kGⁱ − yʲ∂_j∂_{yᵏ}Gⁱ + 2Gʲ∂_{yʲ}∂_{yᵏ}Gⁱ − ∂_{yʲ}Gⁱ ∂_{yᵏ}Gʲ`.
//! Jacobi fields satisfy `J″ = −R J`; the stored Jacobi operator is
//! `K = −R`, the matrix of `w ↦ R_v(v, w)v`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{GeometryError, Result};
use crate::jets::Jet;
use crate::linalg::{self, Mat};
use crate::spacetime::{CausalCharacter, SamplerConfig, SpacetimeModel};

fn lift(a: &[f64]) -> Vec<Jet> {
    a.iter().map(|&c| Jet::constant(c)).collect()
}

fn values(a: &[Jet]) -> Vec<f64> {
    a.iter().map(Jet::value).collect()
}

/// `½ ∂²L/∂v∂v` as jets in the caller's slots (2, 3), row-major.
pub fn hessian_jet(model: &SpacetimeModel, x: &[Jet], v: &[Jet]) -> Vec<Jet> {
    let n = model.dim();
    let (e0, e1) = (Jet::epsilon(0), Jet::epsilon(1));
    let mut g = vec![Jet::constant(0.0); n * n];
    for i in 0..n {
        for j in i..n {
            let mut vs = v.to_vec();
            vs[i] += e0;
            vs[j] += e1;
            let val = model.l_jet(x, &vs).extract(0b11) * 0.5;
            g[i * n + j] = val;
            g[j * n + i] = val;
        }
    }
    g
}

/// Spray coefficients `Gⁱ(x, v)` for jet-valued arguments, together with the
/// fundamental tensor used to build them. Arguments may carry seeds in
/// slots 2 and 3 only.
pub fn spray_jet(model: &SpacetimeModel, x: &[Jet], v: &[Jet]) -> Result<(Vec<Jet>, Vec<Jet>)> {
    let n = model.dim();
    let (xv, vv) = (values(x), values(v));
    model.check_smooth(&xv, &vv)?;
    let g = hessian_jet(model, x, v);
    let (e0, e1) = (Jet::epsilon(0), Jet::epsilon(1));
    let mut rhs = vec![Jet::constant(0.0); n];
    for l in 0..n {
        let mut xs = x.to_vec();
        xs[l] += e0;
        let d = model.l_jet(&xs, v).extract(0b01);

        let xs: Vec<Jet> = x.iter().zip(v).map(|(a, b)| *a + e0 * *b).collect();
        let mut vs = v.to_vec();
        vs[l] += e1;
        let m = model.l_jet(&xs, &vs).extract(0b11);
        rhs[l] = (m - d) * 0.25;
    }
    if g.iter().chain(&rhs).any(|j| !j.value().is_finite()) {
        return Err(GeometryError::domain(
            &xv,
            &vv,
            "non-finite derivatives of L",
        ));
    }
    let gs = linalg::solve_jet(&g, &rhs, n, 1).map_err(|e| match e {
        GeometryError::Degenerate { .. } => {
            let re = Mat::from_fn(n, n, |i, j| g[i * n + j].value());
            GeometryError::Degenerate {
                spectrum: linalg::sym_eigenvalues(&re),
            }
        }
        other => other,
    })?;
    Ok((gs, g))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SprayCoefficients {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub components: Vec<f64>,
}

/// `Gⁱ(x, v)`; geodesics solve `ẍ + 2G(x, ẋ) = 0`.
pub fn spray(model: &SpacetimeModel, x: &[f64], v: &[f64]) -> Result<SprayCoefficients> {
    let (g, _) = spray_jet(model, &lift(x), &lift(v))?;
    Ok(SprayCoefficients {
        x: x.to_vec(),
        v: v.to_vec(),
        components: values(&g),
    })
}

/// Spray coefficients with the derivatives entering the curvature.
#[derive(Clone, Debug, PartialEq)]
pub struct SprayDerivatives {
    pub g: Vec<f64>,
    /// `N[i][j] = ∂Gⁱ/∂yʲ`.
    pub n: Mat,
    /// `∂Gⁱ/∂xʲ`.
    pub dx: Mat,
    /// `yʲ ∂_{xʲ} ∂_{yᵏ} Gⁱ` at `(i, k)`.
    pub y_dx_dy: Mat,
    /// `∂²Gⁱ/∂yʲ∂yᵏ` at `(i·n + j)·n + k`.
    pub dyy: Vec<f64>,
}

pub fn spray_derivatives(model: &SpacetimeModel, x: &[f64], v: &[f64]) -> Result<SprayDerivatives> {
    let n = model.dim();
    let (e2, e3) = (Jet::epsilon(2), Jet::epsilon(3));
    let xl = lift(x);
    let mut out = SprayDerivatives {
        g: vec![0.0; n],
        n: Mat::zeros(n, n),
        dx: Mat::zeros(n, n),
        y_dx_dy: Mat::zeros(n, n),
        dyy: vec![0.0; n * n * n],
    };
    for j in 0..n {
        for k in j..n {
            let mut vs = lift(v);
            vs[j] += e2;
            vs[k] += e3;
            let (g, _) = spray_jet(model, &xl, &vs)?;
            for i in 0..n {
                out.g[i] = g[i].value();
                out.n[(i, j)] = g[i].coeff(0b0100);
                out.n[(i, k)] = g[i].coeff(0b1000);
                out.dyy[(i * n + j) * n + k] = g[i].coeff(0b1100);
                out.dyy[(i * n + k) * n + j] = g[i].coeff(0b1100);
            }
        }
    }
    for k in 0..n {
        let mut vs = lift(v);
        vs[k] += e2;
        let xs: Vec<Jet> = x
            .iter()
            .zip(v)
            .map(|(a, b)| Jet::constant(*a) + e3 * *b)
            .collect();
        let (g, _) = spray_jet(model, &xs, &vs)?;
        for i in 0..n {
            out.y_dx_dy[(i, k)] = g[i].coeff(0b1100);
        }
        let mut xs = lift(x);
        xs[k] += e2;
        let (g, _) = spray_jet(model, &xs, &lift(v))?;
        for i in 0..n {
            out.dx[(i, k)] = g[i].coeff(0b0100);
        }
    }
    Ok(out)
}

/// Matrix of `w ↦ R_v(v, w)v`; Jacobi fields satisfy `J″ = K J`.
#[derive(Clone, Debug, PartialEq)]
pub struct JacobiOperator {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub matrix: Mat,
}

impl JacobiOperator {
    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        linalg::mat_vec(&self.matrix, w)
    }
}

impl SprayDerivatives {
    pub fn jacobi_matrix(&self) -> Mat {
        let n = self.g.len();
        Mat::from_fn(n, n, |i, k| {
            let mut r = 2.0 * self.dx[(i, k)] - self.y_dx_dy[(i, k)];
            for j in 0..n {
                r += 2.0 * self.g[j] * self.dyy[(i * n + j) * n + k]
                    - self.n[(i, j)] * self.n[(j, k)];
            }
            -r
        })
    }
}

pub fn jacobi_operator(model: &SpacetimeModel, x: &[f64], v: &[f64]) -> Result<JacobiOperator> {
    let d = spray_derivatives(model, x, v)?;
    Ok(JacobiOperator {
        x: x.to_vec(),
        v: v.to_vec(),
        matrix: d.jacobi_matrix(),
    })
}

/// Flag curvature `K_v(w) = g_v(R_v(v,w)w, v) / (L(v) g_v(w,w) − g_v(v,w)²)`.
pub fn flag_curvature(model: &SpacetimeModel, x: &[f64], v: &[f64], w: &[f64]) -> Result<f64> {
    let g = model.fundamental_tensor(x, v)?;
    let k = jacobi_operator(model, x, v)?;
    let denom = model.l(x, v) * g.apply(w, w) - g.apply(v, w).powi(2);
    if denom.abs() < 1e-14 * linalg::dot(v, v) * linalg::dot(w, w) {
        return Err(GeometryError::Input(
            "degenerate flag: v and w span a null or degenerate plane".into(),
        ));
    }
    Ok(-g.apply(&k.apply(w), w) / denom)
}

/// Chern connection coefficients `Γⁱ_jk(x, v)` at `(i·n + j)·n + k`.
pub fn chern_christoffel(model: &SpacetimeModel, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let n = model.dim();
    let g = model.fundamental_tensor(x, v)?;
    let ginv = linalg::inverse(&g.matrix)?;
    let c = model.cartan_tensor(x, v)?;
    let e2 = Jet::epsilon(2);
    let vl = lift(v);
    // dg[(j, l, k)] = ∂g_lk/∂xʲ
    let mut dg = vec![0.0; n * n * n];
    let mut nl = Mat::zeros(n, n);
    for j in 0..n {
        let mut xs = lift(x);
        xs[j] += e2;
        let h = hessian_jet(model, &xs, &vl);
        for lk in 0..n * n {
            dg[j * n * n + lk] = h[lk].coeff(0b0100);
        }
        let mut vs = lift(v);
        vs[j] += e2;
        let (gs, _) = spray_jet(model, &lift(x), &vs)?;
        for i in 0..n {
            nl[(i, j)] = gs[i].coeff(0b0100);
        }
    }
    let delta = |j: usize, l: usize, k: usize| -> f64 {
        let mut s = dg[(j * n + l) * n + k];
        for m in 0..n {
            s -= 2.0 * nl[(m, j)] * c.get(l, k, m);
        }
        s
    };
    let mut gamma = vec![0.0; n * n * n];
    for i in 0..n {
        for j in 0..n {
            for k in j..n {
                let mut s = 0.0;
                for l in 0..n {
                    s += ginv[(i, l)] * (delta(j, l, k) + delta(k, j, l) - delta(l, j, k));
                }
                gamma[(i * n + j) * n + k] = 0.5 * s;
                gamma[(i * n + k) * n + j] = 0.5 * s;
            }
        }
    }
    Ok(gamma)
}

/// `Γ(a, b)ⁱ = Γⁱ_jk aʲ bᵏ`.
pub fn contract_christoffel(gamma: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len();
    (0..n)
        .map(|i| {
            let mut s = 0.0;
            for j in 0..n {
                for k in 0..n {
                    s += gamma[(i * n + j) * n + k] * a[j] * b[k];
                }
            }
            s
        })
        .collect()
}

/// `D^W_γ X = Ẋ + Γ(W)(γ̇, X)` from pointwise data.
pub fn covariant_derivative_at(
    model: &SpacetimeModel,
    position: &[f64],
    velocity: &[f64],
    reference: &[f64],
    field: &[f64],
    field_rate: &[f64],
) -> Result<Vec<f64>> {
    let gamma = chern_christoffel(model, position, reference)?;
    let corr = contract_christoffel(&gamma, velocity, field);
    Ok(field_rate.iter().zip(&corr).map(|(a, b)| a + b).collect())
}

/// `D^W_γ X` at `t` for a curve, reference field and field given as jet
/// functions of the parameter (derivatives are taken exactly).
pub fn covariant_derivative<C, W, X>(
    model: &SpacetimeModel,
    curve: C,
    reference: W,
    field: X,
    t: f64,
) -> Result<Vec<f64>>
where
    C: Fn(Jet) -> Vec<Jet>,
    W: Fn(Jet) -> Vec<Jet>,
    X: Fn(Jet) -> Vec<Jet>,
{
    let tj = Jet::variable(t, &[1.0]);
    let c = curve(tj);
    let w = values(&reference(Jet::constant(t)));
    let f = field(tj);
    let pos = values(&c);
    let vel: Vec<f64> = c.iter().map(|j| j.partial(&[0])).collect();
    let rate: Vec<f64> = f.iter().map(|j| j.partial(&[0])).collect();
    covariant_derivative_at(model, &pos, &vel, &w, &values(&f), &rate).map_err(|e| match e {
        GeometryError::Domain { x, v, reason } => GeometryError::Domain {
            x,
            v,
            reason: format!("{reason} (at t = {t})"),
        },
        other => other,
    })
}

/// `g_z`-orthonormal spacelike vectors spanning the complement of
/// `span{z, τ}` in `z^⊥`, by Gram–Schmidt on random seeds.
pub fn screen_frame<R: Rng>(
    model: &SpacetimeModel,
    x: &[f64],
    z: &[f64],
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let n = model.dim();
    let g = model.fundamental_tensor(x, z)?;
    let tau = model.reference_time(x);
    let gz = g.lower(z);
    let gt = g.lower(&tau);
    // Project r onto {w : g(w,z) = 0, g(w,τ) = 0}.
    let (zz, zt, tt) = (
        linalg::dot(&gz, z),
        linalg::dot(&gz, &tau),
        linalg::dot(&gt, &tau),
    );
    let det = zz * tt - zt * zt;
    if det.abs() < 1e-14 {
        return Err(GeometryError::Frame(
            "span{z, τ} is degenerate for g_z".into(),
        ));
    }
    let mut frame: Vec<Vec<f64>> = Vec::new();
    let mut attempts = 0;
    while frame.len() < n - 2 {
        attempts += 1;
        if attempts > 100 * n {
            return Err(GeometryError::Frame(
                "repeated near-degenerate pivots".into(),
            ));
        }
        let r: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (rz, rt) = (linalg::dot(&gz, &r), linalg::dot(&gt, &r));
        let a = (rz * tt - rt * zt) / det;
        let b = (rt * zz - rz * zt) / det;
        let mut w: Vec<f64> = (0..n).map(|i| r[i] - a * z[i] - b * tau[i]).collect();
        for e in &frame {
            // e has g(e,e) = −1
            let c = -g.apply(&w, e);
            for i in 0..n {
                w[i] -= c * e[i];
            }
        }
        let q = -g.apply(&w, &w);
        if q < 1e-10 * linalg::dot(&w, &w).max(1e-300) || q <= 0.0 {
            continue;
        }
        let s = q.sqrt();
        frame.push(w.iter().map(|c| c / s).collect());
    }
    Ok(frame)
}

/// Scalar Ricci curvature: `−trace K`; for lightlike `v` the sum
/// `Σ g_v(K eᵢ, eᵢ)` over a spacelike screen frame.
pub fn ricci_scalar(model: &SpacetimeModel, x: &[f64], v: &[f64]) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    ricci_scalar_with(model, x, v, &mut rng)
}

pub fn ricci_scalar_with<R: Rng>(
    model: &SpacetimeModel,
    x: &[f64],
    v: &[f64],
    rng: &mut R,
) -> Result<f64> {
    let k = jacobi_operator(model, x, v)?;
    let class = model.classify_vector(x, v)?;
    if class.character == CausalCharacter::Lightlike {
        let g = model.fundamental_tensor(x, v)?;
        let frame = screen_frame(model, x, v, rng)?;
        Ok(frame.iter().map(|e| g.apply(&k.apply(e), e)).sum())
    } else {
        Ok(-k.matrix.trace())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RicciWitness {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub ric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RicciScanReport {
    pub samples: usize,
    pub errors: usize,
    pub first_error: Option<String>,
    pub min: f64,
    pub mean: f64,
    pub threshold: f64,
    pub worst: Option<RicciWitness>,
    pub passed: bool,
}

/// Samples future lightlike vectors and checks `Ric ≥ −threshold`.
pub fn null_ricci_scan(
    model: &SpacetimeModel,
    cfg: &SamplerConfig,
    threshold: f64,
) -> RicciScanReport {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let region = cfg
        .region
        .clone()
        .unwrap_or_else(|| model.sample_region.clone());
    let mut report = RicciScanReport {
        samples: 0,
        errors: 0,
        first_error: None,
        min: f64::INFINITY,
        mean: 0.0,
        threshold,
        worst: None,
        passed: true,
    };
    let mut sum = 0.0;
    for _ in 0..cfg.points {
        let x = match model.random_point(&region, &mut rng) {
            Ok(x) => x,
            Err(e) => {
                report.errors += 1;
                report.first_error.get_or_insert(e.to_string());
                break;
            }
        };
        for _ in 0..cfg.vectors_per_point {
            let res = model
                .random_null(&x, &mut rng)
                .and_then(|z| ricci_scalar_with(model, &x, &z, &mut rng).map(|r| (z, r)));
            match res {
                Ok((z, ric)) => {
                    report.samples += 1;
                    sum += ric;
                    if ric < report.min {
                        report.min = ric;
                        report.worst = Some(RicciWitness {
                            x: x.clone(),
                            z,
                            ric,
                        });
                    }
                }
                Err(e) => {
                    report.errors += 1;
                    report.first_error.get_or_insert(e.to_string());
                }
            }
        }
    }
    if report.samples > 0 {
        report.mean = sum / report.samples as f64;
    } else {
        report.min = f64::NAN;
    }
    report.passed = report.samples > 0 && report.errors == 0 && report.min >= -threshold;
    report
}
