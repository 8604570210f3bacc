//! Built-in Lagrangians.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use super::{constant_field, Lagrangian, SpacetimeModel};
use crate::error::{GeometryError, Result};
use crate::expr::{Bindings, Expr};
use crate::jets::Jet;

fn ef_time_field(mass: f64) -> Vec<Expr> {
    let mut params = BTreeMap::new();
    params.insert("M".to_string(), mass);
    ["1", "-(1 + M/x1)", "0", "0"]
        .iter()
        .map(|s| Expr::parse(s, &params).unwrap_or_else(|e| unreachable!("{e}")))
        .collect()
}

/// `L = (v⁰)² − Σ (vⁱ)²`.
#[derive(Clone, Debug)]
pub struct Minkowski {
    pub dim: usize,
}

impl Minkowski {
    pub fn model(dim: usize) -> SpacetimeModel {
        let mut tau = vec![0.0; dim];
        tau[0] = 1.0;
        SpacetimeModel::new(
            format!("minkowski-{dim}"),
            Arc::new(Minkowski { dim }),
            constant_field(&tau),
        )
        .unwrap_or_else(|e| unreachable!("{e}"))
    }
}

impl Lagrangian for Minkowski {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, _x: &[Jet], v: &[Jet]) -> Jet {
        let mut l = v[0] * v[0];
        for c in &v[1..] {
            l -= *c * *c;
        }
        l
    }
}

/// Schwarzschild in ingoing Eddington–Finkelstein coordinates `(v, r, θ, φ)`:
/// `L = (1 − 2M/r) v̇² − 2 v̇ ṙ − r² (θ̇² + sin²θ φ̇²)`.
#[derive(Clone, Debug)]
pub struct SchwarzschildEF {
    pub mass: f64,
}

impl SchwarzschildEF {
    pub fn model(mass: f64) -> SpacetimeModel {
        let region = vec![
            (-1.0, 1.0),
            (0.4 * mass, 4.0 * mass),
            (0.4, PI - 0.4),
            (0.0, 2.0 * PI),
        ];
        SpacetimeModel::new(
            format!("schwarzschild-ef(M={mass})"),
            Arc::new(SchwarzschildEF { mass }),
            ef_time_field(mass),
        )
        .unwrap_or_else(|e| unreachable!("{e}"))
        .with_sample_region(region)
    }
}

fn ef_margin(x: &[f64]) -> f64 {
    x[1].min(x[2]).min(PI - x[2])
}

fn schwarzschild_l(mass: f64, x: &[Jet], v: &[Jet]) -> Jet {
    let r = x[1];
    let s = x[2].sin();
    let f = 1.0 - 2.0 * mass / r;
    f * v[0] * v[0] - 2.0 * v[0] * v[1] - r * r * (v[2] * v[2] + s * s * v[3] * v[3])
}

impl Lagrangian for SchwarzschildEF {
    fn dim(&self) -> usize {
        4
    }

    fn eval(&self, x: &[Jet], v: &[Jet]) -> Jet {
        schwarzschild_l(self.mass, x, v)
    }

    fn chart_margin(&self, x: &[f64]) -> f64 {
        ef_margin(x)
    }
}

/// Static Finsler spacetime `L = Λ (v⁰)² − F(v_s)²` with the Randers norm
/// `F(w) = ψ(x)|w| + b·w`, `ψ = 1 + warp·|x_s|²` on the spatial part.
///
/// Not smooth on the time axis `v_s = 0`; a Finsler spacetime iff `|b| < ψ`.
#[derive(Clone, Debug)]
pub struct RandersStatic {
    pub lambda: f64,
    pub one_form: Vec<f64>,
    pub warp: f64,
}

impl RandersStatic {
    pub fn model(lambda: f64, one_form: Vec<f64>, warp: f64) -> SpacetimeModel {
        let n = one_form.len() + 1;
        let mut tau = vec![0.0; n];
        tau[0] = 1.0 / lambda.sqrt();
        let name = format!("randers-static(n={n}, lambda={lambda}, b={one_form:?}, warp={warp})");
        SpacetimeModel::new(
            name,
            Arc::new(RandersStatic {
                lambda,
                one_form,
                warp,
            }),
            constant_field(&tau),
        )
        .unwrap_or_else(|e| unreachable!("{e}"))
    }

    fn spatial_norm_sq<T: Copy + std::ops::Mul<Output = T> + std::ops::Add<Output = T>>(
        w: &[T],
        zero: T,
    ) -> T {
        w.iter().fold(zero, |acc, c| acc + *c * *c)
    }
}

impl Lagrangian for RandersStatic {
    fn dim(&self) -> usize {
        self.one_form.len() + 1
    }

    fn eval(&self, x: &[Jet], v: &[Jet]) -> Jet {
        let psi = 1.0 + self.warp * Self::spatial_norm_sq(&x[1..], Jet::constant(0.0));
        let alpha = Self::spatial_norm_sq(&v[1..], Jet::constant(0.0)).sqrt();
        let mut beta = Jet::constant(0.0);
        for (b, c) in self.one_form.iter().zip(&v[1..]) {
            beta += *c * *b;
        }
        let f = psi * alpha + beta;
        self.lambda * v[0] * v[0] - f * f
    }

    fn is_smooth(&self, _x: &[f64], v: &[f64]) -> bool {
        let spatial = Self::spatial_norm_sq(&v[1..], 0.0).sqrt();
        let total = Self::spatial_norm_sq(v, 0.0).sqrt();
        spatial > 1e-9 * total
    }

    fn reversible(&self) -> bool {
        self.one_form.iter().all(|b| *b == 0.0)
    }
}

/// Schwarzschild plus a small Randers-type term:
/// `L = L_S − 2ε β(v) √h(v, v)` with `β = b_v dv + b_r dr` and
/// `h = dv² + dr² + r² dΩ²`. Spherically symmetric, not reversible.
#[derive(Clone, Debug)]
pub struct RandersPerturbedSchwarzschild {
    pub mass: f64,
    pub epsilon: f64,
    pub one_form: [f64; 2],
}

impl RandersPerturbedSchwarzschild {
    pub fn model(mass: f64, epsilon: f64, one_form: [f64; 2]) -> SpacetimeModel {
        let region = vec![
            (-1.0, 1.0),
            (0.4 * mass, 4.0 * mass),
            (0.4, PI - 0.4),
            (0.0, 2.0 * PI),
        ];
        let name = format!("randers-schwarzschild(M={mass}, eps={epsilon}, b={one_form:?})");
        let l = RandersPerturbedSchwarzschild {
            mass,
            epsilon,
            one_form,
        };
        SpacetimeModel::new(name, Arc::new(l), ef_time_field(mass))
            .unwrap_or_else(|e| unreachable!("{e}"))
            .with_sample_region(region)
    }
}

impl Lagrangian for RandersPerturbedSchwarzschild {
    fn dim(&self) -> usize {
        4
    }

    fn eval(&self, x: &[Jet], v: &[Jet]) -> Jet {
        let r = x[1];
        let s = x[2].sin();
        let h = v[0] * v[0] + v[1] * v[1] + r * r * (v[2] * v[2] + s * s * v[3] * v[3]);
        let beta = self.one_form[0] * v[0] + self.one_form[1] * v[1];
        schwarzschild_l(self.mass, x, v) - 2.0 * self.epsilon * beta * h.sqrt()
    }

    fn is_smooth(&self, x: &[f64], v: &[f64]) -> bool {
        let s = x[2].sin();
        let h = v[0] * v[0] + v[1] * v[1] + x[1] * x[1] * (v[2] * v[2] + s * s * v[3] * v[3]);
        h > 1e-18 * v.iter().map(|c| c * c).sum::<f64>()
    }

    fn chart_margin(&self, x: &[f64]) -> f64 {
        ef_margin(x)
    }

    fn reversible(&self) -> bool {
        self.epsilon == 0.0 || self.one_form == [0.0, 0.0]
    }
}

/// `L` given as an expression in `x0.., v0..` and named parameters.
///
/// The expression is taken as the extension of `L` off the cone; samplers
/// report where it misbehaves rather than assuming a valid extension.
#[derive(Clone, Debug)]
pub struct ExpressionLagrangian {
    dim: usize,
    expr: Expr,
    margin: Option<Expr>,
    reversible: bool,
}

impl ExpressionLagrangian {
    /// `margin`, when given, is an expression in `x` that is positive inside the chart.
    pub fn new(dim: usize, expr: Expr, margin: Option<Expr>, reversible: bool) -> Result<Self> {
        let (nx, nv, nu) = expr.arity();
        if nx > dim || nv > dim || nu > 0 {
            return Err(GeometryError::Expression(format!(
                "L uses variables beyond dimension {dim} or patch parameters"
            )));
        }
        if let Some(m) = &margin {
            let (mx, mv, mu) = m.arity();
            if mx > dim || mv > 0 || mu > 0 {
                return Err(GeometryError::Expression(
                    "chart margin may depend on x only".into(),
                ));
            }
        }
        Ok(ExpressionLagrangian {
            dim,
            expr,
            margin,
            reversible,
        })
    }
}

impl Lagrangian for ExpressionLagrangian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[Jet], v: &[Jet]) -> Jet {
        self.expr.eval(&Bindings { x, v, u: &[] })
    }

    fn is_smooth(&self, x: &[f64], v: &[f64]) -> bool {
        self.expr.eval_f64(x, v, &[]).is_finite()
    }

    fn chart_margin(&self, x: &[f64]) -> f64 {
        self.margin
            .as_ref()
            .map_or(f64::INFINITY, |m| m.eval_f64(x, &[], &[]))
    }

    fn reversible(&self) -> bool {
        self.reversible
    }
}
