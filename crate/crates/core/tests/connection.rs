mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use common::ef;
use finsler_core::connection::{
    chern_christoffel, flag_curvature, jacobi_operator, null_ricci_scan, ricci_scalar, spray,
};
use finsler_core::expr::Expr;
use finsler_core::spacetime::{
    constant_field, ExpressionLagrangian, RandersStatic, SamplerConfig, SchwarzschildEF,
};
use finsler_core::SpacetimeModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ef_samples(count: usize, seed: u64) -> Vec<([f64; 4], [f64; 4])> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let x = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.4..5.0),
                rng.gen_range(0.4..2.7),
                rng.gen_range(0.0..6.0),
            ];
            let v = [
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            ];
            (x, v)
        })
        .collect()
}

#[test]
fn schwarzschild_spray_matches_christoffel_contraction() {
    let m = SchwarzschildEF::model(1.0);
    for (x, v) in ef_samples(40, 1) {
        let got = spray(&m, &x, &v).unwrap().components;
        let want = ef::half_geodesic_term(1.0, &x, &v);
        for i in 0..4 {
            assert!(
                (got[i] - want[i]).abs() < 1e-9 * (1.0 + want[i].abs()),
                "G[{i}] {} vs {}",
                got[i],
                want[i]
            );
        }
    }
}

#[test]
fn schwarzschild_chern_connection_is_levi_civita() {
    let m = SchwarzschildEF::model(1.0);
    for (x, v) in ef_samples(10, 2) {
        let gamma = chern_christoffel(&m, &x, &v).unwrap();
        let want = ef::christoffel(1.0, &x);
        for i in 0..4 {
            for j in 0..4 {
                for k in 0..4 {
                    let g = gamma[(i * 4 + j) * 4 + k];
                    assert!((g - want[i][j][k]).abs() < 1e-9 * (1.0 + want[i][j][k].abs()));
                }
            }
        }
    }
}

#[test]
fn schwarzschild_jacobi_operator_matches_riemann_contraction() {
    let m = SchwarzschildEF::model(1.3);
    for (x, v) in ef_samples(25, 3) {
        let k = jacobi_operator(&m, &x, &v).unwrap().matrix;
        let want = ef::jacobi(1.3, &x, &v);
        let scale = want.iter().flatten().fold(1.0f64, |a, b| a.max(b.abs()));
        for a in 0..4 {
            for d in 0..4 {
                assert!(
                    (k[(a, d)] - want[a][d]).abs() < 1e-8 * scale,
                    "K[{a}][{d}] {} vs {}",
                    k[(a, d)],
                    want[a][d]
                );
            }
        }
    }
}

#[test]
fn lorentzian_flag_curvature_is_sectional_curvature() {
    let mass = 1.0;
    let m = SchwarzschildEF::model(mass);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for (x, v) in ef_samples(10, 5) {
        let w: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k = flag_curvature(&m, &x, &v, &w).unwrap();
        // sectional curvature ⟨R(w, v)v, w⟩ / (⟨v,v⟩⟨w,w⟩ − ⟨v,w⟩²)
        let g = ef::metric(mass, &x);
        let rm = ef::riemann(mass, &x);
        let ip = |a: &[f64], b: &[f64]| {
            (0..4)
                .flat_map(|i| (0..4).map(move |j| (i, j)))
                .map(|(i, j)| g[i][j] * a[i] * b[j])
                .sum::<f64>()
        };
        let mut rwvv = [0.0; 4];
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        rwvv[a] += rm[a][b][c][d] * v[b] * w[c] * v[d];
                    }
                }
            }
        }
        let want = ip(&rwvv, &w) / (ip(&v, &v) * ip(&w, &w) - ip(&v, &w).powi(2));
        assert!(
            (k - want).abs() < 1e-8 * (1.0 + want.abs()),
            "{k} vs {want}"
        );
    }
}

#[test]
fn schwarzschild_null_ricci_vanishes() {
    let m = SchwarzschildEF::model(1.0);
    let cfg = SamplerConfig {
        points: 10,
        vectors_per_point: 5,
        seed: 7,
        region: None,
    };
    let report = null_ricci_scan(&m, &cfg, 1e-8);
    assert!(report.passed, "{report:?}");
    assert!(report.min.abs() < 1e-8);
}

#[test]
fn engineered_negative_null_ricci_is_detected() {
    // Expanding metric with scale factor a = exp(t²): Ric(k) = −4 (k⁰)² for null k.
    let e = Expr::parse("v0^2 - exp(2*x0^2)*(v1^2 + v2^2 + v3^2)", &BTreeMap::new()).unwrap();
    let l = ExpressionLagrangian::new(4, e, None, true).unwrap();
    let m = SpacetimeModel::new("frw", Arc::new(l), constant_field(&[1.0, 0.0, 0.0, 0.0])).unwrap();
    let x = [0.3, 0.1, 0.0, 0.0];
    let a = (0.09f64).exp();
    let ric = ricci_scalar(&m, &x, &[1.0, 1.0 / a, 0.0, 0.0]).unwrap();
    assert!((ric + 4.0).abs() < 1e-8, "{ric}");
    let report = null_ricci_scan(&m, &SamplerConfig::default(), 1e-8);
    assert!(!report.passed);
    let w = report.worst.unwrap();
    assert!(w.ric < 0.0 && (w.ric + 4.0 * w.z[0] * w.z[0]).abs() < 1e-7);
}

#[test]
fn curvature_homogeneity() {
    let m = RandersStatic::model(1.0, vec![0.3, -0.2, 0.1], 0.6);
    let x = [0.0, 0.4, 0.3, -0.2];
    let v = [1.0, 0.5, -0.2, 0.3];
    let lam = 2.5;
    let vl = v.map(|c| lam * c);
    let k1 = jacobi_operator(&m, &x, &v).unwrap().matrix;
    let k2 = jacobi_operator(&m, &x, &vl).unwrap().matrix;
    let scale = k1.amax();
    assert!((k2 - k1 * (lam * lam)).amax() < 1e-9 * lam * lam * scale);
    // Scalar Ricci is the trace of an operator of degree 2.
    let r1 = ricci_scalar(&m, &x, &v).unwrap();
    let r2 = ricci_scalar(&m, &x, &vl).unwrap();
    assert!((r2 - lam * lam * r1).abs() < 1e-9 * (1.0 + r2.abs()));
}
