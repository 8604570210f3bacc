//! Closed-form Schwarzschild (ingoing Eddington–Finkelstein) data used as an
//! independent oracle. Coordinates `(v, r, θ, φ)`.

#![allow(dead_code)]

fn powf(a: f64, b: f64) -> f64 {
    a.powf(b)
}
fn sin(a: f64) -> f64 {
    a.sin()
}
fn cos(a: f64) -> f64 {
    a.cos()
}
fn tan(a: f64) -> f64 {
    a.tan()
}

/// Metric components.
pub fn metric(m: f64, x: &[f64]) -> [[f64; 4]; 4] {
    let (r, th) = (x[1], x[2]);
    let mut g = [[0.0; 4]; 4];
    g[0][0] = 1.0 - 2.0 * m / r;
    g[0][1] = -1.0;
    g[1][0] = -1.0;
    g[2][2] = -r * r;
    g[3][3] = -r * r * th.sin().powi(2);
    g
}

/// `Γ^a_bc` at `[a][b][c]`.
pub fn christoffel(m: f64, x: &[f64]) -> [[[f64; 4]; 4]; 4] {
    let (r, th) = (x[1], x[2]);
    let mut g = [[[0.0; 4]; 4]; 4];
    g[0][0][0] = m * powf(r, -2.0);
    g[0][2][2] = -r;
    g[0][3][3] = -r * powf(sin(th), 2.0);
    g[1][0][0] = m * powf(r, -3.0) * (-2.0 * m + r);
    g[1][0][1] = -m * powf(r, -2.0);
    g[1][1][0] = -m * powf(r, -2.0);
    g[1][2][2] = 2.0 * m - 1.0 * r;
    g[1][3][3] = (2.0 * m - 1.0 * r) * powf(sin(th), 2.0);
    g[2][1][2] = 1.0 / r;
    g[2][2][1] = 1.0 / r;
    g[2][3][3] = -0.5 * sin(2.0 * th);
    g[3][1][3] = 1.0 / r;
    g[3][2][3] = 1.0 / tan(th);
    g[3][3][1] = 1.0 / r;
    g[3][3][2] = 1.0 / tan(th);
    g
}

/// `R^a_bcd` with `R(e_c, e_d) e_b = R^a_bcd e_a`.
pub fn riemann(m: f64, x: &[f64]) -> [[[[f64; 4]; 4]; 4]; 4] {
    let (r, th) = (x[1], x[2]);
    let mut rm = [[[[0.0; 4]; 4]; 4]; 4];
    rm[0][0][0][1] = 2.0 * m * powf(r, -3.0);
    rm[0][0][1][0] = -2.0 * m * powf(r, -3.0);
    rm[0][2][0][2] = -m * 1.0 / r;
    rm[0][2][2][0] = m * 1.0 / r;
    rm[0][3][0][3] = -m * 1.0 / r * powf(sin(th), 2.0);
    rm[0][3][3][0] = m * 1.0 / r * powf(sin(th), 2.0);
    rm[0][3][3][2] = 0.5 * r * (sin(2.0 * th) * tan(th) + cos(2.0 * th) - 1.0) * 1.0 / tan(th);
    rm[1][0][0][1] = 2.0 * m * powf(r, -4.0) * (-2.0 * m + r);
    rm[1][0][1][0] = 2.0 * m * powf(r, -4.0) * (2.0 * m - 1.0 * r);
    rm[1][1][0][1] = -2.0 * m * powf(r, -3.0);
    rm[1][1][1][0] = 2.0 * m * powf(r, -3.0);
    rm[1][2][1][2] = -m * 1.0 / r;
    rm[1][2][2][1] = m * 1.0 / r;
    rm[1][3][1][3] = -m * 1.0 / r * powf(sin(th), 2.0);
    rm[1][3][3][1] = m * 1.0 / r * powf(sin(th), 2.0);
    rm[2][0][0][2] = m * powf(r, -4.0) * (2.0 * m - 1.0 * r);
    rm[2][0][1][2] = m * powf(r, -3.0);
    rm[2][0][2][0] = m * powf(r, -4.0) * (-2.0 * m + r);
    rm[2][0][2][1] = -m * powf(r, -3.0);
    rm[2][1][0][2] = m * powf(r, -3.0);
    rm[2][1][2][0] = -m * powf(r, -3.0);
    rm[2][3][2][3] = 2.0 * m * 1.0 / r * powf(sin(th), 2.0);
    rm[2][3][3][2] = -2.0 * m * 1.0 / r * powf(sin(th), 2.0);
    rm[3][0][0][3] = m * powf(r, -4.0) * (2.0 * m - 1.0 * r);
    rm[3][0][1][3] = m * powf(r, -3.0);
    rm[3][0][3][0] = m * powf(r, -4.0) * (-2.0 * m + r);
    rm[3][0][3][1] = -m * powf(r, -3.0);
    rm[3][1][0][3] = m * powf(r, -3.0);
    rm[3][1][3][0] = -m * powf(r, -3.0);
    rm[3][2][2][3] = -2.0 * m * 1.0 / r;
    rm[3][2][3][2] = 2.0 * m * 1.0 / r;
    rm
}

/// Jacobi operator `w ↦ R(v, w)v`: `K^a_d = R^a_bcd v^b v^c`.
pub fn jacobi(m: f64, x: &[f64], v: &[f64]) -> [[f64; 4]; 4] {
    let rm = riemann(m, x);
    let mut k = [[0.0; 4]; 4];
    for a in 0..4 {
        for d in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    k[a][d] += rm[a][b][c][d] * v[b] * v[c];
                }
            }
        }
    }
    k
}

/// `½ Γ^i_jk v^j v^k`.
pub fn half_geodesic_term(m: f64, x: &[f64], v: &[f64]) -> [f64; 4] {
    let g = christoffel(m, x);
    let mut out = [0.0; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                out[i] += 0.5 * g[i][j][k] * v[j] * v[k];
            }
        }
    }
    out
}

/// Levi-Civita geodesic right-hand side `(ẋ, −Γ(ẋ, ẋ))`.
pub fn geodesic_rhs(m: f64, state: &[f64]) -> Vec<f64> {
    let (x, v) = state.split_at(4);
    let h = half_geodesic_term(m, x, v);
    let mut out = v.to_vec();
    out.extend(h.iter().map(|c| -2.0 * c));
    out
}

/// Classical fixed-step RK4, independent of the library integrator.
pub fn rk4(f: impl Fn(&[f64]) -> Vec<f64>, y0: &[f64], t: f64, steps: usize) -> Vec<f64> {
    let h = t / steps as f64;
    let mut y = y0.to_vec();
    let add =
        |a: &[f64], b: &[f64], s: f64| a.iter().zip(b).map(|(p, q)| p + s * q).collect::<Vec<_>>();
    for _ in 0..steps {
        let k1 = f(&y);
        let k2 = f(&add(&y, &k1, 0.5 * h));
        let k3 = f(&add(&y, &k2, 0.5 * h));
        let k4 = f(&add(&y, &k3, h));
        for i in 0..y.len() {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    y
}
