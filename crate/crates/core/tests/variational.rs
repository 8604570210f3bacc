mod common;

use std::f64::consts::PI;

use common::ef;
use finsler_core::geodesic::{integrate_geodesic, GeodesicOptions};
use finsler_core::linalg::angle;
use finsler_core::spacetime::{Minkowski, RandersStatic, SchwarzschildEF};
use finsler_core::submanifold::{null_normals, second_fundamental_form, SurfacePatch};
use finsler_core::variational::{
    bound_check, find_focal_points, index_form, solve_jacobi, variation_crosscheck, FocalMethod,
    FrameField, JacobiInit, JacobiSystem,
};
use finsler_core::SpacetimeModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn system_for(
    m: &SpacetimeModel,
    p: &SurfacePatch,
    u: &[f64],
    z: &[f64],
    span: f64,
) -> JacobiSystem {
    let x = p.point(u);
    let path = integrate_geodesic(m, &x, z, span, &GeodesicOptions::default()).unwrap();
    let init = JacobiInit::submanifold(m, p, u, z).unwrap();
    solve_jacobi(m, &path, &init).unwrap()
}

fn ingoing(normals: &[Vec<f64>; 2], x: &[f64]) -> Vec<f64> {
    // The normal whose spatial part points toward smaller radius.
    let radial = |z: &[f64]| (1..x.len()).map(|i| z[i] * x[i]).sum::<f64>();
    if radial(&normals[0]) < radial(&normals[1]) {
        normals[0].clone()
    } else {
        normals[1].clone()
    }
}

#[test]
fn flat_sphere_focal_point_is_the_centre() {
    let m = Minkowski::model(4);
    for rho in [0.5, 1.0, 2.5] {
        let p = SurfacePatch::flat_sphere(4, rho, 0.0);
        let u = [1.0, 0.5];
        let pair = null_normals(&m, &p, &u).unwrap();
        let zin = ingoing(&pair.normals, &p.point(&u));
        let sys = system_for(&m, &p, &u, &zin, 2.0 * rho);
        let rep = find_focal_points(&sys, (0.0, sys.span())).unwrap();
        assert_eq!(rep.points.len(), 1, "{rep:?}");
        let fp = &rep.points[0];
        assert!((fp.t - rho).abs() < 1e-6 * rho, "{} vs {rho}", fp.t);
        assert_eq!(fp.multiplicity, 2);
        assert_eq!(fp.method, FocalMethod::SingularValueDip);
        // Subdividing the window finds the same count.
        let a = find_focal_points(&sys, (0.0, 0.7 * rho)).unwrap();
        let b = find_focal_points(&sys, (0.7 * rho, sys.span())).unwrap();
        assert_eq!(a.points.len() + b.points.len(), 1);
        // A P-Jacobi field vanishing at r is never tangent to σ̇ before r.
        let worst = (1..200)
            .map(|i| sys.tangency_residual(0, rho * i as f64 / 200.0))
            .fold(f64::INFINITY, f64::min);
        assert!(worst > 0.5);
        let zout = pair
            .normals
            .iter()
            .find(|z| angle(z, &zin) > 1e-3)
            .unwrap()
            .clone();
        let sys = system_for(&m, &p, &u, &zout, 3.0 * rho);
        assert!(find_focal_points(&sys, (0.0, sys.span()))
            .unwrap()
            .points
            .is_empty());
    }
}

#[test]
fn flat_plane_has_no_focal_points() {
    let m = Minkowski::model(4);
    let p = SurfacePatch::plane(4, 0.0);
    let u = [0.1, -0.2];
    for z in null_normals(&m, &p, &u).unwrap().normals {
        let sys = system_for(&m, &p, &u, &z, 50.0);
        let rep = find_focal_points(&sys, (0.0, 50.0)).unwrap();
        assert!(rep.points.is_empty());
        assert!(rep.min_sigma > 0.99);
    }
}

#[test]
fn schwarzschild_jacobi_fields_match_geodesic_deviation() {
    let mass = 1.0;
    let m = SchwarzschildEF::model(mass);
    let p = SurfacePatch::symmetry_sphere(4.0, 0.0);
    let u = [1.0, 0.7];
    let x0 = p.point(&u);
    for z in null_normals(&m, &p, &u).unwrap().normals {
        // Perturb the radial data off symmetry with a tilted start so curvature acts.
        let sys = system_for(&m, &p, &u, &z, 1.5);
        let gam = ef::christoffel(mass, &x0);
        for j in 0..2 {
            let j0 = sys.field(j, 0.0);
            let d0 = sys.field_derivative(j, 0.0);
            // Coordinate rate of J at the start: J′ − Γ(σ̇, J).
            let mut rate = d0.clone();
            for i in 0..4 {
                for a in 0..4 {
                    for b in 0..4 {
                        rate[i] -= gam[i][a][b] * z[a] * j0[b];
                    }
                }
            }
            let eps = 1e-4;
            let shoot = |s: f64| {
                let y0: Vec<f64> = (0..4)
                    .map(|i| x0[i] + s * j0[i])
                    .chain((0..4).map(|i| z[i] + s * rate[i]))
                    .collect();
                ef::rk4(|y| ef::geodesic_rhs(mass, y), &y0, 1.5, 3000)
            };
            let (yp, ym) = (shoot(eps), shoot(-eps));
            let got = sys.field(j, 1.5);
            for i in 0..4 {
                let want = (yp[i] - ym[i]) / (2.0 * eps);
                assert!(
                    (got[i] - want).abs() < 1e-7 * (1.0 + want.abs()),
                    "J{j}[{i}] {} vs {want}",
                    got[i]
                );
            }
        }
    }
}

#[test]
fn lagrange_identity_is_conserved() {
    let cases: Vec<(SpacetimeModel, SurfacePatch, Vec<f64>, f64)> = vec![
        (
            SchwarzschildEF::model(1.0),
            SurfacePatch::symmetry_sphere(3.0, 0.0),
            vec![0.9, 0.3],
            2.0,
        ),
        (
            RandersStatic::model(1.0, vec![0.2, -0.1, 0.15], 0.3),
            SurfacePatch::torus(1.0, 0.4, 0.0),
            vec![0.7, 2.4],
            0.6,
        ),
    ];
    for (m, p, u, span) in cases {
        for z in null_normals(&m, &p, &u).unwrap().normals {
            let sys = system_for(&m, &p, &u, &z, span);
            assert!(
                sys.lagrange_drift() < 1e-7,
                "{}: {}",
                m.name(),
                sys.lagrange_drift()
            );
        }
    }
}

#[test]
fn trapped_sphere_focal_points_respect_the_expansion_bound() {
    let mass = 1.0;
    let m = SchwarzschildEF::model(mass);
    for r0 in [0.5, 1.0, 1.5] {
        let p = SurfacePatch::symmetry_sphere(r0, 0.0);
        let u = [1.2, 0.4];
        let f = 1.0 - 2.0 * mass / r0;
        for z in null_normals(&m, &p, &u).unwrap().normals {
            let k = second_fundamental_form(&m, &p, &u, &z).unwrap().expansion();
            assert!(k > 0.0);
            let zin = [0.0, -1.0, 0.0, 0.0];
            let zout = [2.0 / 3.0, f / 3.0, 0.0, 0.0];
            let closed = if angle(&z, &zin) < angle(&z, &zout) {
                r0
            } else {
                -3.0 * r0 / f
            };
            let sys = system_for(&m, &p, &u, &z, 2.0 * closed);
            let rep = find_focal_points(&sys, (0.0, sys.span())).unwrap();
            let check = bound_check(&rep, sys.span(), k, 4, 1e-4);
            let first = rep
                .first()
                .unwrap_or_else(|| panic!("r0={r0}: no focal point {rep:?}"));
            assert!(
                (first - closed).abs() < 1e-4,
                "r0={r0}: {first} vs {closed} {rep:?}"
            );
            assert!(check.satisfied, "{check:?}");
        }
    }
}

fn random_admissible(rng: &mut ChaCha8Rng, b: f64) -> FrameField {
    // Screen components (1 − t/b)·p(t); σ̇ component t(1 − t/b)·q(t); no transversal part.
    let mut coeffs = Vec::new();
    for comp in 0..4 {
        let base: Vec<f64> = match comp {
            0 | 1 => (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            2 => (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            _ => vec![],
        };
        // Multiply by (1 − t/b), and by t for the σ̇ component.
        let mut p = vec![0.0; base.len() + 2];
        for (k, c) in base.iter().enumerate() {
            let shift = if comp == 2 { k + 1 } else { k };
            p[shift] += c;
            p[shift + 1] -= c / b;
        }
        coeffs.push(p);
    }
    FrameField::polynomial(coeffs)
}

#[test]
fn index_form_is_negative_before_the_first_focal_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let m = SchwarzschildEF::model(1.0);
    let p = SurfacePatch::symmetry_sphere(3.0, 0.0);
    let u = [1.0, 1.0];
    for z in null_normals(&m, &p, &u).unwrap().normals {
        let sys = system_for(&m, &p, &u, &z, 2.0);
        for _ in 0..10 {
            let v = random_admissible(&mut rng, 2.0);
            let i = index_form(&m, &sys, &v, &v, 2.0).unwrap();
            assert!(i <= 1e-7, "{i}");
            let w = random_admissible(&mut rng, 2.0);
            let (a, b) = (
                index_form(&m, &sys, &v, &w, 2.0).unwrap(),
                index_form(&m, &sys, &w, &v, 2.0).unwrap(),
            );
            assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }
    }
}

#[test]
fn index_form_closed_form_and_jacobi_kernel() {
    let m = Minkowski::model(4);
    let x = [0.0; 4];
    let z = [1.0, 0.0, 0.6, 0.8];
    let b = 2.0;
    let path = integrate_geodesic(&m, &x, &z, b, &GeodesicOptions::default()).unwrap();
    let sys = solve_jacobi(&m, &path, &JacobiInit::point(&m, &x, &z).unwrap()).unwrap();
    let v = FrameField::new(
        move |t| {
            (
                vec![(PI * t / b).sin(), 0.0, 0.0, 0.0],
                vec![PI / b * (PI * t / b).cos(), 0.0, 0.0, 0.0],
            )
        },
        vec![],
    );
    let i = index_form(&m, &sys, &v, &v, b).unwrap();
    let want = -(PI / b).powi(2) * b / 2.0;
    assert!((i - want).abs() < 1e-10, "{i} vs {want}");

    // Ingoing sphere Jacobi field vanishing at the centre lies in the kernel.
    let rho = 1.3;
    let p = SurfacePatch::flat_sphere(4, rho, 0.0);
    let u = [0.8, 2.0];
    let zin = ingoing(&null_normals(&m, &p, &u).unwrap().normals, &p.point(&u));
    let sys = system_for(&m, &p, &u, &zin, rho);
    let jf = FrameField::from_jacobi(&sys, 0, 1.0);
    let i = index_form(&m, &sys, &jf, &jf, rho).unwrap();
    assert!(i.abs() < 1e-8, "{i}");
}

#[test]
fn variation_formulas_converge_quadratically() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let steps = [2e-2, 1e-2, 5e-3];
    let models: Vec<(SpacetimeModel, SurfacePatch, Vec<f64>)> = vec![
        (
            SchwarzschildEF::model(1.0),
            SurfacePatch::symmetry_sphere(4.0, 0.0),
            vec![1.1, 0.2],
        ),
        (
            RandersStatic::model(1.0, vec![0.2, -0.1, 0.15], 0.3),
            SurfacePatch::torus(1.0, 0.4, 0.0),
            vec![0.7, 2.4],
        ),
    ];
    for (m, p, u) in models {
        let z = null_normals(&m, &p, &u).unwrap().normals[0].clone();
        let sys = system_for(&m, &p, &u, &z, 1.0);
        for _ in 0..5 {
            let coeffs: Vec<Vec<f64>> = (0..4)
                .map(|c| {
                    if c == 3 {
                        vec![0.0]
                    } else {
                        (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect()
                    }
                })
                .collect();
            let acc: Vec<Vec<f64>> = (0..4)
                .map(|_| (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let v = FrameField::polynomial(coeffs);
            let a = FrameField::polynomial(acc);
            let rep = variation_crosscheck(&m, &sys, &v, &a, &[0.3, 0.6], &steps).unwrap();
            for first in [true, false] {
                for r in rep.ratios(first).iter().flatten() {
                    assert!(
                        (3.5..=4.5).contains(r),
                        "{}: ratio {r} ({first}) {rep:?}",
                        m.name()
                    );
                }
            }
        }
    }
}

#[test]
fn flat_first_variation_is_exact_and_jacobi_second_variation_is_a_boundary_term() {
    let m = Minkowski::model(4);
    let x = [0.0; 4];
    let z = [1.0, 0.6, 0.0, 0.8];
    let path = integrate_geodesic(&m, &x, &z, 1.0, &GeodesicOptions::default()).unwrap();
    let sys = solve_jacobi(&m, &path, &JacobiInit::point(&m, &x, &z).unwrap()).unwrap();
    let v = FrameField::polynomial(vec![
        vec![0.2, -0.3, 0.5],
        vec![0.1, 0.4],
        vec![0.3, 0.0, 0.2],
        vec![0.0],
    ]);
    let rep = variation_crosscheck(
        &m,
        &sys,
        &v,
        &FrameField::zero(4),
        &[0.25, 0.5, 0.75],
        &[1e-3],
    )
    .unwrap();
    assert!(rep.first_residuals()[0] < 1e-8);

    let m = SchwarzschildEF::model(1.0);
    let p = SurfacePatch::symmetry_sphere(3.0, 0.0);
    let u = [1.0, 0.3];
    let z = null_normals(&m, &p, &u).unwrap().normals[1].clone();
    let sys = system_for(&m, &p, &u, &z, 1.0);
    let jf = FrameField::from_jacobi(&sys, 1, 1.0);
    let rep = variation_crosscheck(&m, &sys, &jf, &FrameField::zero(4), &[0.4], &[1e-3]).unwrap();
    // With V Jacobi and A = 0 the second variation is d/du g(V′, V).
    let gvv = |t: f64| {
        let (c, d) = jf.eval(t);
        finsler_core::linalg::bilinear(&sys.frame_gram, &d, &c)
    };
    let h = 1e-4;
    let want = (gvv(0.4 + h) - gvv(0.4 - h)) / (2.0 * h);
    assert!(
        (rep.samples[0].second_exact - want).abs() < 1e-7,
        "{} vs {want}",
        rep.samples[0].second_exact
    );
}
