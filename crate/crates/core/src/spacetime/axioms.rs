//! Sampled validation of the Finsler spacetime axioms.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::SpacetimeModel;
use crate::error::{GeometryError, Result};
use crate::linalg;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SamplerConfig {
    pub points: usize,
    pub vectors_per_point: usize,
    pub seed: u64,
    /// Overrides the model's sample region.
    pub region: Option<Vec<(f64, f64)>>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            points: 20,
            vectors_per_point: 10,
            seed: 0,
            region: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomWitness {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomCheck {
    pub name: &'static str,
    pub passed: bool,
    pub samples: usize,
    pub failures: usize,
    /// Largest normalized violation seen (0 when none).
    pub worst: f64,
    pub witness: Option<AxiomWitness>,
}

impl AxiomCheck {
    fn new(name: &'static str) -> Self {
        AxiomCheck {
            name,
            passed: true,
            samples: 0,
            failures: 0,
            worst: 0.0,
            witness: None,
        }
    }

    fn record(&mut self, violation: f64, x: &[f64], v: &[f64], detail: impl FnOnce() -> String) {
        self.samples += 1;
        if violation > 0.0 {
            self.failures += 1;
            self.passed = false;
            if violation > self.worst || self.witness.is_none() {
                self.worst = self.worst.max(violation);
                self.witness = Some(AxiomWitness {
                    x: x.to_vec(),
                    v: v.to_vec(),
                    detail: detail(),
                });
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub model: String,
    pub passed: bool,
    pub checks: Vec<AxiomCheck>,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&AxiomCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl SpacetimeModel {
    /// Uniform point in the sample region that lies inside the chart.
    pub fn random_point<R: Rng>(&self, region: &[(f64, f64)], rng: &mut R) -> Result<Vec<f64>> {
        for _ in 0..1000 {
            let x: Vec<f64> = region
                .iter()
                .map(|(lo, hi)| rng.gen_range(*lo..*hi))
                .collect();
            if self.in_chart(&x) {
                return Ok(x);
            }
        }
        Err(GeometryError::Input(
            "sample region does not meet the chart".into(),
        ))
    }

    /// Random direction with independent Gaussian components.
    pub fn random_direction<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim()).map(|_| gaussian(rng)).collect()
    }

    /// Future lightlike vector on the cone section through the reference time.
    pub fn random_null<R: Rng>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let d = self.random_direction(rng);
        self.null_toward(x, &d)
    }

    /// Future timelike vector on the segment from the reference time to a
    /// random lightlike vector of the section.
    pub fn random_timelike<R: Rng>(&self, x: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let z = self.random_null(x, rng)?;
        let tau = self.reference_time(x);
        let s: f64 = rng.gen_range(0.02..0.98);
        Ok(tau.iter().zip(&z).map(|(t, c)| t + s * (c - t)).collect())
    }

    /// Samples the conic domain and checks homogeneity, positivity on the
    /// cone, convexity of cone sections, salience, Lorentzian signature and
    /// strong convexity of the indicatrix.
    pub fn validate_axioms(&self, cfg: &SamplerConfig) -> ValidationReport {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let region = cfg
            .region
            .clone()
            .unwrap_or_else(|| self.sample_region.clone());
        let band = self.tolerances.cone;

        let mut homogeneity = AxiomCheck::new("homogeneity");
        let mut time_field = AxiomCheck::new("time-field-timelike");
        let mut positivity = AxiomCheck::new("cone-positivity");
        let mut boundary = AxiomCheck::new("cone-boundary");
        let mut convexity = AxiomCheck::new("cone-convexity");
        let mut salience = AxiomCheck::new("salience");
        let mut signature = AxiomCheck::new("signature");
        let mut indicatrix = AxiomCheck::new("indicatrix-convexity");

        for _ in 0..cfg.points {
            let x = match self.random_point(&region, &mut rng) {
                Ok(x) => x,
                Err(e) => {
                    positivity.record(1.0, &[], &[], || e.to_string());
                    break;
                }
            };
            let tau = self.reference_time(&x);
            let lt = self.l(&x, &tau);
            time_field.record(
                if lt > 0.0 { 0.0 } else { 1.0 + lt.abs() },
                &x,
                &tau,
                || format!("L(tau) = {lt:.6e} is not positive"),
            );
            self.check_signature(&x, &tau, &mut signature);

            let mut interior = Vec::new();
            let mut nulls = Vec::new();
            for _ in 0..cfg.vectors_per_point {
                let v = self.random_direction(&mut rng);
                let lambda: f64 = rng.gen_range(0.1..10.0);
                let lv = self.l(&x, &v);
                let scaled: Vec<f64> = v.iter().map(|c| lambda * c).collect();
                let res = (self.l(&x, &scaled) - lambda * lambda * lv).abs()
                    / (lambda * lambda * linalg::dot(&v, &v));
                homogeneity.record(if res > 1e-9 { res } else { 0.0 }, &x, &v, || {
                    format!("|L(λv) − λ²L(v)| / (λ²|v|²) = {res:.3e} at λ = {lambda:.3}")
                });

                let z = match self.null_toward(&x, &v) {
                    Ok(z) => z,
                    Err(e) => {
                        boundary.record(1.0, &x, &v, || e.to_string());
                        continue;
                    }
                };
                let nz = linalg::dot(&z, &z);
                let lz = self.l(&x, &z);
                let off = lz.abs() / nz - band;
                boundary.record(off.max(0.0), &x, &z, || {
                    format!("boundary vector has L = {lz:.3e}")
                });
                if !self.is_smooth(&x, &z) {
                    boundary.record(1.0, &x, &z, || {
                        "L is not smooth at a lightlike vector".into()
                    });
                } else {
                    self.check_signature(&x, &z, &mut signature);
                }
                for s in [0.25, 0.5, 0.75] {
                    let w: Vec<f64> = tau.iter().zip(&z).map(|(t, c)| t + s * (c - t)).collect();
                    let lw = self.l(&x, &w);
                    positivity.record(if lw > 0.0 { 0.0 } else { 1.0 + lw.abs() }, &x, &w, || {
                        format!("interior vector has L = {lw:.3e}")
                    });
                    if lw > 0.0 && self.is_smooth(&x, &w) {
                        self.check_signature(&x, &w, &mut signature);
                        self.check_indicatrix(&x, &w, &mut rng, &mut indicatrix);
                        interior.push(w);
                    }
                }
                nulls.push(z);
            }

            // Midpoints of interior pairs stay inside; midpoints of distinct
            // lightlike pairs are strictly timelike.
            for pair in interior.windows(2).chain(nulls.windows(2)) {
                if linalg::angle(&pair[0], &pair[1]) < 1e-6 {
                    continue;
                }
                let mid: Vec<f64> = pair[0]
                    .iter()
                    .zip(&pair[1])
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect();
                let lm = self.l(&x, &mid);
                let scale = linalg::dot(&mid, &mid);
                convexity.record(
                    if lm > band * scale {
                        0.0
                    } else {
                        1.0 + lm.abs() / scale
                    },
                    &x,
                    &mid,
                    || format!("midpoint of cone vectors has L = {lm:.3e}"),
                );
            }

            for w in interior.iter().chain(&nulls) {
                let minus: Vec<f64> = w.iter().map(|c| -c).collect();
                let future = self
                    .classify_vector(&x, &minus)
                    .map(|c| c.is_future_causal())
                    .unwrap_or(false);
                salience.record(if future { 1.0 } else { 0.0 }, &x, w, || {
                    "both v and −v are future causal".into()
                });
            }
        }

        let checks = vec![
            homogeneity,
            time_field,
            positivity,
            boundary,
            convexity,
            salience,
            signature,
            indicatrix,
        ];
        ValidationReport {
            model: self.name().to_string(),
            passed: checks.iter().all(|c| c.passed),
            checks,
        }
    }

    fn check_signature(&self, x: &[f64], v: &[f64], check: &mut AxiomCheck) {
        let spectrum = match self.fundamental_tensor(x, v) {
            Ok(g) => linalg::sym_eigenvalues(&g.matrix),
            Err(GeometryError::Degenerate { spectrum }) => spectrum,
            Err(e) => {
                check.record(1.0, x, v, || e.to_string());
                return;
            }
        };
        let positive = spectrum
            .iter()
            .filter(|e| **e > self.tolerances.degeneracy)
            .count();
        let negative = spectrum
            .iter()
            .filter(|e| **e < -self.tolerances.degeneracy)
            .count();
        let ok = positive == 1 && negative == self.dim() - 1;
        check.record(if ok { 0.0 } else { 1.0 }, x, v, || {
            format!("eigenvalues {spectrum:?}: {positive} positive, {negative} negative")
        });
    }

    /// `g_v(X, X) < 0` for `X ⟂_{g_v} v`, and `L ≥ 1` at the midpoint of two
    /// unit vectors of the indicatrix.
    fn check_indicatrix<R: Rng>(&self, x: &[f64], v: &[f64], rng: &mut R, check: &mut AxiomCheck) {
        let Ok(g) = self.fundamental_tensor(x, v) else {
            return;
        };
        let lv = self.l(x, v);
        let d = self.random_direction(rng);
        let gv = g.apply(v, &d) / lv;
        let xo: Vec<f64> = d.iter().zip(v).map(|(a, b)| a - gv * b).collect();
        let q = g.apply(&xo, &xo) / linalg::dot(&xo, &xo);
        check.record(if q < 0.0 { 0.0 } else { 1.0 + q }, x, &xo, || {
            format!("g_v(X,X) = {q:.3e} for X orthogonal to v")
        });

        let unit = |u: &[f64]| -> Vec<f64> {
            let f = self.l(x, u).sqrt();
            u.iter().map(|c| c / f).collect()
        };
        let w: Vec<f64> = v
            .iter()
            .zip(&xo)
            .map(|(a, b)| a + 1e-2 * b * lv.sqrt() / linalg::norm(&xo).max(1e-300))
            .collect();
        if self.l(x, &w) <= 0.0 {
            return;
        }
        let (a, b) = (unit(v), unit(&w));
        let mid: Vec<f64> = a.iter().zip(&b).map(|(p, q)| 0.5 * (p + q)).collect();
        let lm = self.l(x, &mid);
        check.record(
            if lm >= 1.0 - 1e-12 { 0.0 } else { 1.0 - lm },
            x,
            &mid,
            || format!("midpoint of indicatrix points has L = {lm:.12}"),
        );
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}
