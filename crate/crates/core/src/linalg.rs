//! Small dense helpers shared by the geometric kernels.

use nalgebra::{DMatrix, DVector};

use crate::error::{GeometryError, Result};
use crate::jets::Jet;

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// `aᵀ G b`.
pub fn bilinear(g: &Mat, a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += g[(i, j)] * b[j];
        }
        s += a[i] * row;
    }
    s
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| alpha * a + b).collect()
}

pub fn scale(alpha: f64, x: &[f64]) -> Vec<f64> {
    x.iter().map(|a| alpha * a).collect()
}

pub fn mat_vec(m: &Mat, x: &[f64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * x[j]).sum())
        .collect()
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    let mut ev: Vec<f64> = m
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Angle between the lines spanned by `a` and `b` (Euclidean, in `[0, π]`).
pub fn angle(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (norm(a), norm(b));
    let (mut diff, mut sum) = (0.0, 0.0);
    for (p, q) in a.iter().zip(b) {
        let (u, v) = (p / na, q / nb);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

/// Solves `A X = B` for jet-valued square `A` (row-major `n×n`) and `m`
/// right-hand sides (row-major `n×m`), by Gaussian elimination with partial
/// pivoting on the real parts. Derivatives propagate exactly.
pub fn solve_jet(a: &[Jet], b: &[Jet], n: usize, m: usize) -> Result<Vec<Jet>> {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    let scale = a
        .iter()
        .map(|j| j.value().abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                a[i * n + col]
                    .value()
                    .abs()
                    .total_cmp(&a[j * n + col].value().abs())
            })
            .unwrap_or(col);
        if a[pivot * n + col].value().abs() < 1e-14 * scale {
            let spectrum = {
                let re = Mat::from_fn(n, n, |i, j| a[i * n + j].value());
                re.singular_values().iter().copied().collect()
            };
            return Err(GeometryError::Degenerate { spectrum });
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            for k in 0..m {
                b.swap(col * m + k, pivot * m + k);
            }
        }
        let inv = a[col * n + col].recip();
        for row in col + 1..n {
            let f = a[row * n + col] * inv;
            if f.value() == 0.0 && f.order() == 0 {
                continue;
            }
            for k in col..n {
                let t = a[col * n + k];
                a[row * n + k] -= f * t;
            }
            for k in 0..m {
                let t = b[col * m + k];
                b[row * m + k] -= f * t;
            }
        }
    }
    for col in (0..n).rev() {
        let inv = a[col * n + col].recip();
        for k in 0..m {
            let mut s = b[col * m + k];
            for j in col + 1..n {
                s -= a[col * n + j] * b[j * m + k];
            }
            b[col * m + k] = s * inv;
        }
    }
    Ok(b)
}

/// Inverse of a real square matrix, failing with the spectrum when singular.
pub fn inverse(m: &Mat) -> Result<Mat> {
    m.clone()
        .try_inverse()
        .ok_or_else(|| GeometryError::Degenerate {
            spectrum: sym_eigenvalues(&((m + m.transpose()) * 0.5)),
        })
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` via Newton on `P_n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jet_solve_matches_derivative_of_inverse() {
        // A(s) = [[2+s, 1], [1, 3]]; d/ds A⁻¹ b = -A⁻¹ A' A⁻¹ b
        let s = Jet::variable(0.0, &[1.0]);
        let a = [
            2.0 + s,
            Jet::constant(1.0),
            Jet::constant(1.0),
            Jet::constant(3.0),
        ];
        let b = [Jet::constant(1.0), Jet::constant(2.0)];
        let x = solve_jet(&a, &b, 2, 1).unwrap();
        // A⁻¹ = 1/5 [[3,-1],[-1,2]]; x = (1/5, 3/5)
        assert!((x[0].value() - 0.2).abs() < 1e-15 && (x[1].value() - 0.6).abs() < 1e-15);
        // A' x = (0.2, 0); -A⁻¹(0.2,0) = (-0.12, 0.04)
        assert!((x[0].partial(&[0]) + 0.12).abs() < 1e-15);
        assert!((x[1].partial(&[0]) - 0.04).abs() < 1e-15);
    }

    #[test]
    fn singular_system_reports_degeneracy() {
        let a = [
            Jet::constant(1.0),
            Jet::constant(2.0),
            Jet::constant(2.0),
            Jet::constant(4.0),
        ];
        let b = [Jet::constant(1.0), Jet::constant(1.0)];
        assert!(matches!(
            solve_jet(&a, &b, 2, 1),
            Err(GeometryError::Degenerate { .. })
        ));
    }

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(5);
        let integral: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((integral - 2.0 / 9.0).abs() < 1e-14);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }
}
