//! Geodesics, parallel transport and affine-completeness probing.

use std::cell::Cell;

use serde::Serialize;

use crate::connection::spray_jet;
use crate::error::{GeometryError, Result};
use crate::jets::Jet;
use crate::linalg::Mat;
use crate::ode::{integrate, OdeOptions, OdeSolution, OdeStatus};
use crate::spacetime::SpacetimeModel;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeodesicOptions {
    pub ode: OdeOptions,
    /// Integration stops once the chart margin drops to this value.
    pub chart_floor: f64,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        GeodesicOptions {
            ode: OdeOptions {
                rtol: 1e-11,
                atol: 1e-13,
                ..OdeOptions::default()
            },
            chart_floor: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Termination {
    ReachedT,
    LeftChart { boundary: Vec<f64> },
    Blowup { reason: String },
    Degeneracy { spectrum: Vec<f64> },
}

/// Spray coefficients `G` and `N = ∂G/∂y` at `(x, v)`.
pub fn spray_and_nonlinear(
    model: &SpacetimeModel,
    x: &[f64],
    v: &[f64],
) -> Result<(Vec<f64>, Mat)> {
    let n = model.dim();
    let xl: Vec<Jet> = x.iter().map(|&c| Jet::constant(c)).collect();
    let mut g = vec![0.0; n];
    let mut nl = Mat::zeros(n, n);
    for j in 0..n {
        let mut vs: Vec<Jet> = v.iter().map(|&c| Jet::constant(c)).collect();
        vs[j] += Jet::epsilon(2);
        let (gs, _) = spray_jet(model, &xl, &vs)?;
        for i in 0..n {
            g[i] = gs[i].value();
            nl[(i, j)] = gs[i].coeff(0b0100);
        }
    }
    Ok((g, nl))
}

/// Geodesic right-hand side on the state `(x, ẋ)`.
pub fn geodesic_rhs(model: &SpacetimeModel, state: &[f64]) -> Result<Vec<f64>> {
    let n = model.dim();
    let (x, v) = state.split_at(n);
    let xl: Vec<Jet> = x.iter().map(|&c| Jet::constant(c)).collect();
    let vl: Vec<Jet> = v.iter().map(|&c| Jet::constant(c)).collect();
    let (g, _) = spray_jet(model, &xl, &vl)?;
    let mut out = v.to_vec();
    out.extend(g.iter().map(|c| -2.0 * c.value()));
    Ok(out)
}

/// Classifies how an integration that carries a geodesic in its first
/// `2n` state components ended.
pub(crate) fn classify_end(model: &SpacetimeModel, sol: &OdeSolution, left: bool) -> Termination {
    let n = model.dim();
    let boundary = sol.last()[..n].to_vec();
    match &sol.status {
        OdeStatus::Finished => Termination::ReachedT,
        OdeStatus::Event => Termination::LeftChart { boundary },
        OdeStatus::StepCollapse(err) => match err {
            Some(GeometryError::Degenerate { spectrum }) => Termination::Degeneracy {
                spectrum: spectrum.clone(),
            },
            _ if left => Termination::LeftChart { boundary },
            Some(e) => Termination::Blowup {
                reason: e.to_string(),
            },
            None => Termination::Blowup {
                reason: "step size collapsed".into(),
            },
        },
        OdeStatus::MaxSteps => Termination::Blowup {
            reason: "step budget exhausted".into(),
        },
    }
}

#[derive(Clone, Debug)]
pub struct GeodesicPath {
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub requested: f64,
    pub termination: Termination,
    /// `(t, L(ẋ(t)))` at every accepted step.
    pub l_log: Vec<(f64, f64)>,
    solution: OdeSolution,
    dim: usize,
}

impl GeodesicPath {
    /// End of the affine span `[0, T]` actually covered.
    pub fn span(&self) -> f64 {
        self.solution.t_end()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state(&self, t: f64) -> Vec<f64> {
        self.solution.eval(t)
    }

    pub fn position(&self, t: f64) -> Vec<f64> {
        self.state(t)[..self.dim].to_vec()
    }

    pub fn velocity(&self, t: f64) -> Vec<f64> {
        self.state(t)[self.dim..].to_vec()
    }

    /// Accepted nodes `(t, x, ẋ)`.
    pub fn nodes(&self) -> impl Iterator<Item = (f64, &[f64], &[f64])> {
        let n = self.dim;
        self.solution
            .ts
            .iter()
            .zip(&self.solution.ys)
            .map(move |(t, y)| (*t, &y[..n], &y[n..]))
    }

    /// `max |L(ẋ(t)) − L(v₀)| / max(1, |L(v₀)|)` over the accepted steps.
    pub fn l_drift(&self) -> f64 {
        let l0 = self.l_log[0].1;
        self.l_log
            .iter()
            .map(|(_, l)| (l - l0).abs())
            .fold(0.0, f64::max)
            / l0.abs().max(1.0)
    }
}

/// Solves `ẍ = −2G(x, ẋ)` on `[0, t]` (or until the chart or the numerics give out).
pub fn integrate_geodesic(
    model: &SpacetimeModel,
    x0: &[f64],
    v0: &[f64],
    t: f64,
    opts: &GeodesicOptions,
) -> Result<GeodesicPath> {
    model.fundamental_tensor(x0, v0)?;
    let n = model.dim();
    let left = Cell::new(false);
    let rhs = |_t: f64, y: &[f64]| {
        if !model.in_chart(&y[..n]) {
            left.set(true);
        }
        geodesic_rhs(model, y)
    };
    let floor = opts.chart_floor;
    let event = |_t: f64, y: &[f64]| model.chart_margin(&y[..n]) - floor;
    let mut y0 = x0.to_vec();
    y0.extend_from_slice(v0);
    let solution = integrate(rhs, 0.0, &y0, t, &opts.ode, Some(event));
    let termination = classify_end(model, &solution, left.get());
    let l_log = solution
        .ts
        .iter()
        .zip(&solution.ys)
        .map(|(t, y)| (*t, model.l(&y[..n], &y[n..])))
        .collect();
    Ok(GeodesicPath {
        x0: x0.to_vec(),
        v0: v0.to_vec(),
        requested: t,
        termination,
        l_log,
        solution,
        dim: n,
    })
}

/// Fields transported along a geodesic, integrated jointly with it.
#[derive(Clone, Debug)]
pub struct TransportedFields {
    solution: OdeSolution,
    dim: usize,
    count: usize,
}

impl TransportedFields {
    pub fn span(&self) -> f64 {
        self.solution.t_end()
    }

    pub fn field(&self, i: usize, t: f64) -> Vec<f64> {
        let n = self.dim;
        self.solution.eval(t)[2 * n + i * n..2 * n + (i + 1) * n].to_vec()
    }

    pub fn position(&self, t: f64) -> Vec<f64> {
        self.solution.eval(t)[..self.dim].to_vec()
    }

    pub fn velocity(&self, t: f64) -> Vec<f64> {
        self.solution.eval(t)[self.dim..2 * self.dim].to_vec()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn nodes(&self) -> &[f64] {
        &self.solution.ts
    }

    /// `g_γ̇(Xᵢ, Xⱼ)` at `t`.
    pub fn gram(&self, model: &SpacetimeModel, t: f64) -> Result<Mat> {
        let g = model.fundamental_tensor(&self.position(t), &self.velocity(t))?;
        let fields: Vec<Vec<f64>> = (0..self.count).map(|i| self.field(i, t)).collect();
        Ok(Mat::from_fn(self.count, self.count, |i, j| {
            g.apply(&fields[i], &fields[j])
        }))
    }
}

/// Transports each of `fields` along the geodesic of `path` (`Ẋ = −N(x, ẋ) X`).
pub fn parallel_transport(
    model: &SpacetimeModel,
    path: &GeodesicPath,
    fields: &[Vec<f64>],
) -> Result<TransportedFields> {
    let n = model.dim();
    let m = fields.len();
    let rhs = |_t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let (x, v) = (&y[..n], &y[n..2 * n]);
        let (g, nl) = spray_and_nonlinear(model, x, v)?;
        let mut out = v.to_vec();
        out.extend(g.iter().map(|c| -2.0 * c));
        for f in 0..m {
            let xf = &y[2 * n + f * n..2 * n + (f + 1) * n];
            for i in 0..n {
                out.push(-(0..n).map(|j| nl[(i, j)] * xf[j]).sum::<f64>());
            }
        }
        Ok(out)
    };
    let mut y0 = path.x0.clone();
    y0.extend_from_slice(&path.v0);
    for f in fields {
        y0.extend_from_slice(f);
    }
    let opts = GeodesicOptions::default().ode;
    let solution = integrate(
        rhs,
        0.0,
        &y0,
        path.span(),
        &opts,
        None::<fn(f64, &[f64]) -> f64>,
    );
    if let OdeStatus::StepCollapse(Some(e)) = &solution.status {
        if (solution.t_end() - path.span()).abs() > 1e-9 * path.span().abs().max(1.0) {
            return Err(e.clone());
        }
    }
    Ok(TransportedFields {
        solution,
        dim: n,
        count: m,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "kebab-case")]
pub enum Completeness {
    CompleteUpToBudget { budget: f64 },
    Incomplete { t_star: f64 },
    LeftChart { t_star: f64, boundary: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompletenessReport {
    pub outcome: Completeness,
    pub termination: Termination,
    /// Affine parameter where integration stopped.
    pub t_last: f64,
    /// `(T* − t, ‖K‖_F)` samples approaching the end.
    pub curvature_samples: Vec<(f64, f64)>,
    /// Fitted exponent `p` in `‖K‖ ∝ (T* − t)^{−p}`.
    pub blowup_exponent: Option<f64>,
    pub curvature_ratio: Option<f64>,
}

/// Follows a lightlike geodesic up to `budget` and reports how it ends.
///
/// A finite end is extrapolated from the chart margin along the last steps
/// (`T*ₖ = tₖ + mₖ/|ṁₖ|`, Aitken-accelerated). The geodesic is declared
/// incomplete when the Jacobi-operator norm diverges like a power of
/// `T* − t` with exponent above 1 and grows by more than 10³.
pub fn completeness_probe(
    model: &SpacetimeModel,
    x0: &[f64],
    v0: &[f64],
    budget: f64,
) -> Result<CompletenessReport> {
    let path = integrate_geodesic(model, x0, v0, budget, &GeodesicOptions::default())?;
    let t_last = path.span();
    if path.termination == Termination::ReachedT {
        return Ok(CompletenessReport {
            outcome: Completeness::CompleteUpToBudget { budget },
            termination: path.termination,
            t_last,
            curvature_samples: vec![],
            blowup_exponent: None,
            curvature_ratio: None,
        });
    }
    let t_star = extrapolate_end(model, &path);
    let k0 = crate::connection::jacobi_operator(model, x0, v0)
        .map(|k| k.matrix.norm())
        .unwrap_or(f64::NAN);
    let mut samples = Vec::new();
    let total = t_star.max(t_last);
    for j in 1..=40 {
        let d = total * 10f64.powf(-0.5 * j as f64);
        let t = t_star - d;
        if t <= 0.0 || t > t_last {
            continue;
        }
        let y = path.state(t);
        let n = model.dim();
        if let Ok(k) = crate::connection::jacobi_operator(model, &y[..n], &y[n..]) {
            let norm = k.matrix.norm();
            if norm.is_finite() {
                samples.push((d, norm));
            }
        }
    }
    let tail: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|(d, k)| *d < 0.1 * total && *k > 0.0)
        .collect();
    let exponent = if tail.len() >= 3 {
        let pts: Vec<(f64, f64)> = tail.iter().map(|(d, k)| (d.ln(), k.ln())).collect();
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        let (mx, my) = (sx / m, sy / m);
        let (num, den) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| {
            (a + (x - mx) * (y - my), b + (x - mx).powi(2))
        });
        Some(-num / den)
    } else {
        None
    };
    let ratio = match (samples.last(), k0.is_finite() && k0 > 0.0) {
        (Some((_, k)), true) => Some(k / k0),
        (Some((_, k)), false) if *k > 0.0 => Some(f64::INFINITY),
        _ => None,
    };
    let diverges = exponent.is_some_and(|p| p > 1.0) && ratio.is_some_and(|r| r > 1e3);
    let outcome = if diverges {
        Completeness::Incomplete { t_star }
    } else {
        Completeness::LeftChart {
            t_star,
            boundary: path.position(t_last),
        }
    };
    Ok(CompletenessReport {
        outcome,
        termination: path.termination,
        t_last,
        curvature_samples: samples,
        blowup_exponent: exponent,
        curvature_ratio: ratio,
    })
}

/// Estimate of the parameter where the chart margin reaches zero.
fn extrapolate_end(model: &SpacetimeModel, path: &GeodesicPath) -> f64 {
    let n = model.dim();
    let t_last = path.span();
    let ts = &path.solution.ts;
    let k = ts.len();
    if k < 3 {
        return t_last;
    }
    let margin = |i: usize| model.chart_margin(&path.solution.ys[i][..n]);
    let mut est = Vec::new();
    for i in k.saturating_sub(4)..k {
        if i == 0 {
            continue;
        }
        let (m0, m1) = (margin(i - 1), margin(i));
        let dt = ts[i] - ts[i - 1];
        let rate = (m1 - m0) / dt;
        if rate < 0.0 && m1.is_finite() {
            est.push(ts[i] + m1.max(0.0) / rate.abs());
        }
    }
    match est.len() {
        0 => t_last,
        1 | 2 => *est.last().unwrap_or(&t_last),
        _ => {
            let (a, b, c) = (est[est.len() - 3], est[est.len() - 2], est[est.len() - 1]);
            let denom = c - 2.0 * b + a;
            let aitken = if denom.abs() > 1e-300 {
                c - (c - b).powi(2) / denom
            } else {
                c
            };
            if aitken.is_finite()
                && aitken >= t_last
                && (aitken - c).abs() <= (c - t_last).abs().max(1e-12 * c.abs())
            {
                aitken
            } else {
                c
            }
        }
    }
    .max(t_last)
}
