//! Higher-order forward-mode differentiation.
//!
//! A [`Jet`] is a nest of up to four first-order dual numbers stored flat:
//! one coefficient per subset of the seed slots `ε₀ … ε₃`, with `εᵢ² = 0`.
//! The coefficient stored under a subset mask is exactly the mixed
//! directional derivative along the seeds in that subset, so a single
//! evaluation with `k` seeds yields every mixed partial of order `≤ k`
//! without finite differencing. Repeating a direction in two slots gives
//! the corresponding pure second derivative.
//!
//! Nonlinear functions are lifted through their Taylor expansion about the
//! real part; the nilpotent remainder has vanishing fifth power, so the
//! expansion terminates at the jet order.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::error::{GeometryError, Result};

/// Maximum number of seed slots (and therefore derivative order).
pub const MAX_ORDER: usize = 4;
const WIDTH: usize = 1 << MAX_ORDER;

/// Truncated multivariate Taylor datum: value plus all mixed derivatives
/// along up to four seed slots.
#[derive(Clone, Copy, PartialEq)]
pub struct Jet {
    coeffs: [f64; WIDTH],
    order: u8,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = 1usize << self.order;
        f.debug_struct("Jet")
            .field("order", &self.order)
            .field("coeffs", &&self.coeffs[..w])
            .finish()
    }
}

impl Default for Jet {
    fn default() -> Self {
        Jet::constant(0.0)
    }
}

impl From<f64> for Jet {
    fn from(value: f64) -> Self {
        Jet::constant(value)
    }
}

impl Jet {
    pub const fn constant(value: f64) -> Self {
        let mut coeffs = [0.0; WIDTH];
        coeffs[0] = value;
        Jet { coeffs, order: 0 }
    }

    /// `value + Σ_k slopes[k]·ε_k` with `order = slopes.len()`.
    pub fn variable(value: f64, slopes: &[f64]) -> Self {
        assert!(slopes.len() <= MAX_ORDER, "too many seed slots");
        let mut j = Jet::constant(value);
        j.order = slopes.len() as u8;
        for (k, s) in slopes.iter().enumerate() {
            j.coeffs[1 << k] = *s;
        }
        j
    }

    /// The infinitesimal `ε_slot`.
    pub fn epsilon(slot: usize) -> Self {
        assert!(slot < MAX_ORDER);
        let mut j = Jet::constant(0.0);
        j.order = slot as u8 + 1;
        j.coeffs[1 << slot] = 1.0;
        j
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.order as usize
    }

    /// Coefficient of the monomial `∏_{k ∈ mask} ε_k`.
    #[inline]
    pub fn coeff(&self, mask: usize) -> f64 {
        self.coeffs[mask]
    }

    /// Mixed derivative along the listed (distinct) seed slots.
    pub fn partial(&self, slots: &[usize]) -> f64 {
        let mut mask = 0usize;
        for &s in slots {
            assert!(
                s < MAX_ORDER && mask & (1 << s) == 0,
                "slots must be distinct"
            );
            mask |= 1 << s;
        }
        self.coeffs[mask]
    }

    /// Keeps the coefficients whose masks contain all of `inner` and drop the
    /// `inner` bits, yielding a jet in the remaining slots.
    ///
    /// This turns a jet over `inner ∪ outer` slots into the outer-slot jet of
    /// the `inner` derivative, which is how derivatives of derived quantities
    /// (spray coefficients, metric components) are propagated.
    pub fn extract(&self, inner: usize) -> Jet {
        let w = 1usize << self.order;
        let mut out = Jet::constant(0.0);
        out.order = self.order;
        for m in 0..w {
            if m & inner == inner {
                out.coeffs[m & !inner] = self.coeffs[m];
            }
        }
        out
    }

    #[inline]
    fn width(&self) -> usize {
        1usize << self.order
    }

    fn is_real(&self) -> bool {
        self.coeffs[1..self.width()].iter().all(|c| *c == 0.0)
    }

    /// Lifts a scalar function given its derivatives `f⁽ʲ⁾(value)`, `j = 0..=order`.
    pub fn compose(&self, derivs: &[f64]) -> Jet {
        let order = self.order();
        debug_assert!(derivs.len() > order);
        let mut nil = *self;
        nil.coeffs[0] = 0.0;
        let mut out = Jet::constant(derivs[0]);
        out.order = self.order;
        let mut power = Jet::constant(1.0);
        let mut factorial = 1.0;
        for (j, d) in derivs.iter().enumerate().take(order + 1).skip(1) {
            power *= nil;
            factorial *= j as f64;
            if *d != 0.0 {
                out += power * (*d / factorial);
            }
        }
        out
    }

    pub fn recip(self) -> Jet {
        let x = self.value();
        let mut d = [0.0; MAX_ORDER + 1];
        let mut c = 1.0 / x;
        for (j, dj) in d.iter_mut().enumerate() {
            *dj = c;
            c *= -((j + 1) as f64) / x;
        }
        self.compose(&d)
    }

    pub fn powf(self, p: f64) -> Jet {
        let x = self.value();
        let mut d = [0.0; MAX_ORDER + 1];
        let mut c = 1.0;
        for (j, dj) in d.iter_mut().enumerate() {
            *dj = c * x.powf(p - j as f64);
            c *= p - j as f64;
        }
        self.compose(&d)
    }

    pub fn powi(self, n: i32) -> Jet {
        match n {
            0 => Jet::constant(1.0),
            1 => self,
            2 => self * self,
            _ if n < 0 => self.powi(-n).recip(),
            _ => {
                let half = self.powi(n / 2);
                if n % 2 == 0 {
                    half * half
                } else {
                    half * half * self
                }
            }
        }
    }

    pub fn sqrt(self) -> Jet {
        self.powf(0.5)
    }

    pub fn exp(self) -> Jet {
        let e = self.value().exp();
        self.compose(&[e; MAX_ORDER + 1])
    }

    pub fn ln(self) -> Jet {
        let x = self.value();
        let mut d = [x.ln(), 0.0, 0.0, 0.0, 0.0];
        let mut c = 1.0 / x;
        for (j, dj) in d.iter_mut().enumerate().skip(1) {
            *dj = c;
            c *= -(j as f64) / x;
        }
        self.compose(&d)
    }

    pub fn sin(self) -> Jet {
        let (s, c) = self.value().sin_cos();
        self.compose(&[s, c, -s, -c, s])
    }

    pub fn cos(self) -> Jet {
        let (s, c) = self.value().sin_cos();
        self.compose(&[c, -s, -c, s, c])
    }

    pub fn tan(self) -> Jet {
        self.sin() / self.cos()
    }

    pub fn tanh(self) -> Jet {
        let e = (self * 2.0).exp();
        (e - 1.0) / (e + 1.0)
    }

    pub fn atan(self) -> Jet {
        let x = self.value();
        let q = 1.0 + x * x;
        // derivatives of atan: 1/q, -2x/q², (6x²-2)/q³, (24x-24x³)/q⁴
        self.compose(&[
            x.atan(),
            1.0 / q,
            -2.0 * x / (q * q),
            (6.0 * x * x - 2.0) / (q * q * q),
            (24.0 * x - 24.0 * x * x * x) / (q * q * q * q),
        ])
    }

    /// `|x|`, differentiable away from zero.
    pub fn abs(self) -> Jet {
        if self.value() < 0.0 {
            -self
        } else {
            self
        }
    }

    fn scale(mut self, s: f64) -> Jet {
        let w = self.width();
        for c in &mut self.coeffs[..w] {
            *c *= s;
        }
        self
    }
}

impl Add for Jet {
    type Output = Jet;
    #[inline]
    fn add(mut self, rhs: Jet) -> Jet {
        self += rhs;
        self
    }
}

impl AddAssign for Jet {
    #[inline]
    fn add_assign(&mut self, rhs: Jet) {
        self.order = self.order.max(rhs.order);
        let w = rhs.width();
        for i in 0..w {
            self.coeffs[i] += rhs.coeffs[i];
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    #[inline]
    fn sub(mut self, rhs: Jet) -> Jet {
        self -= rhs;
        self
    }
}

impl SubAssign for Jet {
    #[inline]
    fn sub_assign(&mut self, rhs: Jet) {
        self.order = self.order.max(rhs.order);
        let w = rhs.width();
        for i in 0..w {
            self.coeffs[i] -= rhs.coeffs[i];
        }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        if rhs.order == 0 || rhs.is_real() {
            let mut out = self.scale(rhs.coeffs[0]);
            out.order = self.order.max(rhs.order);
            return out;
        }
        if self.order == 0 || self.is_real() {
            let mut out = rhs.scale(self.coeffs[0]);
            out.order = self.order.max(rhs.order);
            return out;
        }
        let order = self.order.max(rhs.order);
        let w = 1usize << order;
        let mut out = [0.0; WIDTH];
        for (m, slot) in out.iter_mut().enumerate().take(w) {
            // sum over submasks s of m
            let mut s = m;
            let mut acc = 0.0;
            loop {
                acc += self.coeffs[s] * rhs.coeffs[m ^ s];
                if s == 0 {
                    break;
                }
                s = (s - 1) & m;
            }
            *slot = acc;
        }
        Jet { coeffs: out, order }
    }
}

impl MulAssign for Jet {
    fn mul_assign(&mut self, rhs: Jet) {
        *self = *self * rhs;
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, rhs: Jet) -> Jet {
        if rhs.order == 0 || rhs.is_real() {
            let mut out = self.scale(1.0 / rhs.coeffs[0]);
            out.order = self.order.max(rhs.order);
            return out;
        }
        self * rhs.recip()
    }
}

macro_rules! scalar_ops {
    ($($tr:ident $m:ident),*) => {$(
        impl $tr<f64> for Jet {
            type Output = Jet;
            #[inline]
            fn $m(self, rhs: f64) -> Jet { $tr::$m(self, Jet::constant(rhs)) }
        }
        impl $tr<Jet> for f64 {
            type Output = Jet;
            #[inline]
            fn $m(self, rhs: Jet) -> Jet { $tr::$m(Jet::constant(self), rhs) }
        }
    )*};
}
scalar_ops!(Add add, Sub sub, Mul mul, Div div);

/// Which argument of `f(x, v)` a seed perturbs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    /// Base point (chart coordinates).
    Base,
    /// Fiber (tangent vector components).
    Fiber,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Seed {
    pub slot: Slot,
    pub direction: Vec<f64>,
}

impl Seed {
    pub fn base(direction: &[f64]) -> Self {
        Seed {
            slot: Slot::Base,
            direction: direction.to_vec(),
        }
    }

    pub fn fiber(direction: &[f64]) -> Self {
        Seed {
            slot: Slot::Fiber,
            direction: direction.to_vec(),
        }
    }
}

/// A scalar function on chart × fiber that can be evaluated on jets.
pub trait ScalarField: Send + Sync {
    fn eval_jet(&self, x: &[Jet], v: &[Jet]) -> Jet;

    /// Whether `(x, v)` is a point where the field may be differentiated.
    fn in_domain(&self, _x: &[f64], _v: &[f64]) -> bool {
        true
    }

    fn eval(&self, x: &[f64], v: &[f64]) -> f64 {
        let xj: Vec<Jet> = x.iter().map(|&a| Jet::constant(a)).collect();
        let vj: Vec<Jet> = v.iter().map(|&a| Jet::constant(a)).collect();
        self.eval_jet(&xj, &vj).value()
    }
}

impl<F> ScalarField for F
where
    F: Fn(&[Jet], &[Jet]) -> Jet + Send + Sync,
{
    fn eval_jet(&self, x: &[Jet], v: &[Jet]) -> Jet {
        self(x, v)
    }
}

/// Builds the seeded argument vectors `x + Σ ε_k d_k` (base seeds) and
/// `v + Σ ε_k d_k` (fiber seeds).
pub fn seeded_arguments(x: &[f64], v: &[f64], seeds: &[Seed]) -> (Vec<Jet>, Vec<Jet>) {
    let order = seeds.len();
    let mut xs: Vec<Jet> = x
        .iter()
        .map(|&a| Jet::variable(a, &[0.0; MAX_ORDER][..order]))
        .collect();
    let mut vs: Vec<Jet> = v
        .iter()
        .map(|&a| Jet::variable(a, &[0.0; MAX_ORDER][..order]))
        .collect();
    for (k, seed) in seeds.iter().enumerate() {
        let target = match seed.slot {
            Slot::Base => &mut xs,
            Slot::Fiber => &mut vs,
        };
        for (t, d) in target.iter_mut().zip(&seed.direction) {
            t.coeffs[1 << k] += *d;
        }
    }
    (xs, vs)
}

/// Evaluates `f` at `(x, v)` with one nilpotent slot per seed.
///
/// The returned jet holds every mixed derivative along subsets of the seeds;
/// `jet.partial(&[0, 1])` is `∂²f/∂s₀∂s₁`.
pub fn evaluate_jet<F: ScalarField + ?Sized>(
    f: &F,
    x: &[f64],
    v: &[f64],
    seeds: &[Seed],
    order: usize,
) -> Result<Jet> {
    if order > MAX_ORDER || seeds.len() > MAX_ORDER {
        return Err(GeometryError::UnsupportedOrder(order.max(seeds.len())));
    }
    if seeds.is_empty() {
        return Err(GeometryError::EmptySeeds);
    }
    if seeds.len() > order {
        return Err(GeometryError::Input(format!(
            "{} seeds supplied for a jet of order {order}",
            seeds.len()
        )));
    }
    for s in seeds {
        let n = match s.slot {
            Slot::Base => x.len(),
            Slot::Fiber => v.len(),
        };
        if s.direction.len() != n {
            return Err(GeometryError::Input(format!(
                "seed direction has length {}, expected {n}",
                s.direction.len()
            )));
        }
    }
    if !f.in_domain(x, v) {
        return Err(GeometryError::domain(
            x,
            v,
            "outside the domain of the scalar field",
        ));
    }
    let (xs, vs) = seeded_arguments(x, v, seeds);
    Ok(f.eval_jet(&xs, &vs))
}
