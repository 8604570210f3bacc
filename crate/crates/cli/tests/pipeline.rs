use finsler_cli::pipeline::{run_penrose, Hypothesis, Verdict};
use finsler_cli::scenario::Scenario;

fn schwarzschild(r0: f64, budget: f64) -> Scenario {
    Scenario::parse(&format!(
        r#"{{
          "schema_version": 1, "name": "schwarzschild-inner", "seed": 7,
          "model": {{"kind": "schwarzschild-ef", "mass": 1.0}},
          "patches": [{{"id": "s", "shape": {{"kind": "symmetry-sphere", "radius": {r0}}}, "resolution": [2, 3]}}],
          "bundle": {{"patch": "s", "budget": {budget}}},
          "assertions": {{"patch_achronal": true, "patch_compact": true,
                          "cauchy_hypersurface": true, "cauchy_hypersurface_noncompact": true}}
        }}"#
    ))
    .unwrap()
}

#[test]
fn schwarzschild_inner_sphere_witnesses_incompleteness() {
    let r0 = 1.0;
    let rep = run_penrose(&schwarzschild(r0, 20.0)).unwrap();
    assert_eq!(
        rep.verdict,
        Verdict::HypothesesSupportedIncompletenessWitnessed,
        "{:?}",
        rep.verdict
    );
    assert_eq!(rep.rays.len(), 12);
    for ray in &rep.rays {
        assert!(ray.errors.is_empty(), "{:?}", ray.errors);
        let t = ray
            .breakdown()
            .expect("every ray of the inner sphere ends at r = 0");
        // Radial rays reach r = 0 at r0/|ṙ|.
        let want = r0 / -ray.z[1];
        assert!((t - want).abs() < 1e-2 * want, "{t} vs {want}");
        let focal = ray.focal.as_ref().unwrap();
        assert!(focal.bound.satisfied, "{:?}", focal.bound);
    }
}

#[test]
fn minkowski_sphere_fails_at_the_trapped_hypothesis() {
    let s = Scenario::parse(
        r#"{
          "schema_version": 1, "seed": 1,
          "model": {"kind": "minkowski", "dim": 4},
          "patches": [{"id": "s", "shape": {"kind": "flat-sphere", "radius": 1.0}, "resolution": [2, 2]}],
          "bundle": {"patch": "s", "budget": 5.0}
        }"#,
    )
    .unwrap();
    let rep = run_penrose(&s).unwrap();
    match &rep.verdict {
        Verdict::HypothesisFailed { which, .. } => assert_eq!(*which, Hypothesis::Trapped),
        v => panic!("{v:?}"),
    }
    assert_eq!(rep.verdict.exit_code(), 1);
}

#[test]
fn reports_are_deterministic() {
    let s = schwarzschild(1.5, 10.0);
    let a = serde_json::to_string(&run_penrose(&s).unwrap()).unwrap();
    let b = serde_json::to_string(&run_penrose(&s).unwrap()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn larger_budget_keeps_the_witness() {
    for budget in [5.0, 40.0] {
        let rep = run_penrose(&schwarzschild(1.0, budget)).unwrap();
        assert_eq!(
            rep.verdict,
            Verdict::HypothesesSupportedIncompletenessWitnessed,
            "budget {budget}"
        );
    }
}
