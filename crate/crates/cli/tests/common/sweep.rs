//! Exhaustive cone-section sweep for null normals of static Randers models
//! `L = λ (v⁰)² − (ψ|v_s| + b·v_s)²`, `ψ = 1 + warp·|x_s|²`.
//!
//! The future cone meets `{v⁰ = 1}` in `v_s = √λ d / (ψ + b·d)` for unit `d`,
//! so the section is parametrized by the sphere of spatial directions. A null
//! normal is a section point where `dL_z(t) = 0` for every tangent `t`.

use std::f64::consts::PI;

pub struct Randers {
    pub lambda: f64,
    pub b: Vec<f64>,
    pub warp: f64,
}

impl Randers {
    pub fn l(&self, x: &[f64], v: &[f64]) -> f64 {
        let psi = 1.0 + self.warp * x[1..].iter().map(|c| c * c).sum::<f64>();
        let alpha = v[1..].iter().map(|c| c * c).sum::<f64>().sqrt();
        let beta: f64 = self.b.iter().zip(&v[1..]).map(|(p, q)| p * q).sum();
        let f = psi * alpha + beta;
        self.lambda * v[0] * v[0] - f * f
    }

    fn section(&self, x: &[f64], d: &[f64]) -> Vec<f64> {
        let psi = 1.0 + self.warp * x[1..].iter().map(|c| c * c).sum::<f64>();
        let beta: f64 = self.b.iter().zip(d).map(|(p, q)| p * q).sum();
        let s = self.lambda.sqrt() / (psi + beta);
        std::iter::once(1.0)
            .chain(d.iter().map(|c| s * c))
            .collect()
    }

    /// `½ dL_z(t)/(|z||t|)` for each tangent, by central differences.
    fn residual(&self, x: &[f64], z: &[f64], tangents: &[Vec<f64>]) -> Vec<f64> {
        let nz = z.iter().map(|c| c * c).sum::<f64>().sqrt();
        tangents
            .iter()
            .map(|t| {
                let nt = t.iter().map(|c| c * c).sum::<f64>().sqrt();
                let h = 1e-5 * nz / nt;
                let p: Vec<f64> = z.iter().zip(t).map(|(a, b)| a + h * b).collect();
                let m: Vec<f64> = z.iter().zip(t).map(|(a, b)| a - h * b).collect();
                (self.l(x, &p) - self.l(x, &m)) / (4.0 * h * nz * nt)
            })
            .collect()
    }

    /// Null normals at `x` from `samples` section points plus local polishing.
    pub fn sweep(&self, x: &[f64], tangents: &[Vec<f64>], samples: usize) -> Vec<Vec<f64>> {
        match x.len() {
            3 => self.sweep_circle(x, tangents, samples),
            4 => self.sweep_sphere(x, tangents, samples),
            n => panic!("sweep supports n = 3, 4 (got {n})"),
        }
    }

    fn sweep_circle(&self, x: &[f64], tangents: &[Vec<f64>], samples: usize) -> Vec<Vec<f64>> {
        let r = |phi: f64| self.residual(x, &self.section(x, &[phi.cos(), phi.sin()]), tangents)[0];
        let mut roots = Vec::new();
        for i in 0..samples {
            let (mut a, mut b) = (
                2.0 * PI * i as f64 / samples as f64,
                2.0 * PI * (i + 1) as f64 / samples as f64,
            );
            let (ra, rb) = (r(a), r(b));
            if ra.signum() == rb.signum() {
                continue;
            }
            for _ in 0..100 {
                let m = 0.5 * (a + b);
                if r(m).signum() == ra.signum() {
                    a = m;
                } else {
                    b = m;
                }
            }
            let phi = 0.5 * (a + b);
            roots.push(self.section(x, &[phi.cos(), phi.sin()]));
        }
        roots
    }

    fn sweep_sphere(&self, x: &[f64], tangents: &[Vec<f64>], samples: usize) -> Vec<Vec<f64>> {
        let side = (samples as f64).sqrt().round() as usize;
        let dir = |th: f64, ph: f64| [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
        let res = |th: f64, ph: f64| self.residual(x, &self.section(x, &dir(th, ph)), tangents);
        let f = |th: f64, ph: f64| res(th, ph).iter().map(|c| c * c).sum::<f64>();
        let th_at = |i: usize| PI * (i as f64 + 0.5) / side as f64;
        let ph_at = |j: usize| 2.0 * PI * j as f64 / side as f64;
        let grid: Vec<Vec<f64>> = (0..side)
            .map(|i| (0..side).map(|j| f(th_at(i), ph_at(j))).collect())
            .collect();
        let mut roots: Vec<Vec<f64>> = Vec::new();
        for i in 0..side {
            for j in 0..side {
                let c = grid[i][j];
                let mut is_min = true;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        let ii = i as i64 + di;
                        if (di, dj) == (0, 0) || ii < 0 || ii >= side as i64 {
                            continue;
                        }
                        let jj = (j as i64 + dj).rem_euclid(side as i64) as usize;
                        if grid[ii as usize][jj] < c {
                            is_min = false;
                        }
                    }
                }
                if !is_min {
                    continue;
                }
                // Newton on (θ, φ) with a difference Jacobian.
                let (mut th, mut ph) = (th_at(i), ph_at(j));
                for _ in 0..50 {
                    let r0 = res(th, ph);
                    if r0.iter().all(|c| c.abs() < 1e-13) {
                        break;
                    }
                    let h = 1e-7;
                    let rt = res(th + h, ph);
                    let rp = res(th, ph + h);
                    let jac = [
                        [(rt[0] - r0[0]) / h, (rp[0] - r0[0]) / h],
                        [(rt[1] - r0[1]) / h, (rp[1] - r0[1]) / h],
                    ];
                    let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
                    if det.abs() < 1e-300 {
                        break;
                    }
                    th -= (jac[1][1] * r0[0] - jac[0][1] * r0[1]) / det;
                    ph -= (-jac[1][0] * r0[0] + jac[0][0] * r0[1]) / det;
                }
                if res(th, ph).iter().any(|c| c.abs() > 1e-9) {
                    continue;
                }
                let z = self.section(x, &dir(th, ph));
                if roots.iter().all(|q| angle(q, &z) > 1e-8) {
                    roots.push(z);
                }
            }
        }
        roots
    }
}

pub fn angle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
    let na = a.iter().map(|c| c * c).sum::<f64>().sqrt();
    let nb = b.iter().map(|c| c * c).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0).acos()
}
