use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn finsler(dir: &Path, scenario: &str, args: &[&str]) -> Output {
    let file = dir.join("scenario.json");
    fs::write(&file, scenario).unwrap();
    Command::new(env!("CARGO_BIN_EXE_finsler"))
        .args(args)
        .arg("--scenario")
        .arg(&file)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out").join(name)).unwrap()).unwrap()
}

fn csv_rows(dir: &Path, name: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(dir.join("out").join(name)).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| {
            l.split(',')
                .map(|c| c.parse().unwrap_or(f64::NAN))
                .collect()
        })
        .collect();
    (header, rows)
}

const MINKOWSKI: &str = r#"{"schema_version": 1, "seed": 3, "model": {"kind": "minkowski", "dim": 4},
  "patches": [{"id": "sphere", "shape": {"kind": "flat-sphere", "radius": 1.0}, "resolution": [2, 2]},
              {"id": "plane", "shape": {"kind": "plane"}, "resolution": [2, 2]}],
  "rays": [{"id": "line", "x": [0, 0.5, 0, 0], "v": [1, 0.3, -0.2, 0.1], "length": 2.0}],
  "bundle": {"patch": "sphere", "budget": 4.0}}"#;

fn schwarzschild(r0: f64) -> String {
    format!(
        r#"{{"schema_version": 1, "seed": 9, "model": {{"kind": "schwarzschild-ef", "mass": 1.0}},
  "patches": [{{"id": "s", "shape": {{"kind": "symmetry-sphere", "radius": {r0}}}, "resolution": [1, 2]}}],
  "rays": [{{"id": "radial", "x": [0, {r0}, 1.2, 0.4], "v": [0, -1, 0, 0], "length": 10.0}}],
  "bundle": {{"patch": "s", "budget": 6.0}},
  "assertions": {{"patch_achronal": true, "patch_compact": true, "cauchy_hypersurface": true, "cauchy_hypersurface_noncompact": true}}}}"#
    )
}

#[test]
fn validate_exit_codes_follow_the_axioms() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        finsler(dir.path(), MINKOWSKI, &["validate"]).status.code(),
        Some(0)
    );
    assert_eq!(json(dir.path(), "validation.json")["passed"], true);

    let flipped = r#"{"schema_version": 1, "seed": 3, "tau": ["1", "0", "0", "0"],
      "model": {"kind": "expression", "dim": 4, "lagrangian": "-(v0^2 - v1^2 - v2^2 - v3^2)"}}"#;
    assert_eq!(
        finsler(dir.path(), flipped, &["validate"]).status.code(),
        Some(1)
    );

    // |b| > 1: F(w) = |w| + b·w is negative along −b, so the Randers norm is not a norm.
    let b = [1.4, 0.0, 0.0];
    let worst = (0..1000)
        .map(|i| {
            let (th, ph) = (
                std::f64::consts::PI * (i % 40) as f64 / 39.0,
                0.25 * (i / 40) as f64,
            );
            let w = [th.cos(), th.sin() * ph.cos(), th.sin() * ph.sin()];
            1.0 + b.iter().zip(&w).map(|(p, q)| p * q).sum::<f64>()
        })
        .fold(f64::INFINITY, f64::min);
    assert!(worst < 0.0);
    let big = r#"{"schema_version": 1, "seed": 3, "model": {"kind": "randers-static", "lambda": 1.0, "one_form": [1.4, 0.0, 0.0]}}"#;
    assert_eq!(
        finsler(dir.path(), big, &["validate"]).status.code(),
        Some(1)
    );
    let rep = json(dir.path(), "validation.json");
    let cone = rep["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "cone-convexity")
        .unwrap();
    assert_eq!(cone["passed"], false);
}

#[test]
fn malformed_scenarios_exit_with_an_error_and_a_position() {
    let dir = tempfile::tempdir().unwrap();
    let broken =
        "{\"schema_version\": 1,\n \"seed\": 3,\n \"model\": {\"kind\": \"minkowski\" \"dim\": 4}}";
    let out = finsler(dir.path(), broken, &["validate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    let no_seed = r#"{"schema_version": 1, "model": {"kind": "minkowski", "dim": 4}}"#;
    let out = finsler(dir.path(), no_seed, &["validate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));

    let bad_patch = r#"{"schema_version": 1, "seed": 1, "model": {"kind": "minkowski", "dim": 4}, "bundle": {"patch": "nope", "budget": 1}}"#;
    assert_eq!(
        finsler(dir.path(), bad_patch, &["validate"]).status.code(),
        Some(2)
    );
    assert_eq!(
        finsler(dir.path(), MINKOWSKI, &["validate", "--tol-focal", "-1"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn geodesic_csv_of_a_straight_line() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        finsler(dir.path(), MINKOWSKI, &["geodesic"]).status.code(),
        Some(0)
    );
    let (header, rows) = csv_rows(dir.path(), "geodesic-line.csv");
    assert_eq!(
        header,
        ["t", "x0", "x1", "x2", "x3", "v0", "v1", "v2", "v3", "L"]
    );
    let (x0, v0) = ([0.0, 0.5, 0.0, 0.0], [1.0, 0.3, -0.2, 0.1]);
    for r in &rows {
        for i in 0..4 {
            assert!((r[1 + i] - (x0[i] + r[0] * v0[i])).abs() < 1e-12);
        }
        assert!((r[9] - 0.86).abs() < 1e-12);
    }
    assert!((rows.last().unwrap()[0] - 2.0).abs() < 1e-12);
    assert_eq!(
        json(dir.path(), "geodesic-line.json")["termination"]["kind"],
        "reached-t"
    );
}

#[test]
fn radial_ray_is_reported_incomplete() {
    let dir = tempfile::tempdir().unwrap();
    let r0 = 1.5;
    assert_eq!(
        finsler(dir.path(), &schwarzschild(r0), &["geodesic"])
            .status
            .code(),
        Some(0)
    );
    let rec = json(dir.path(), "geodesic-radial.json");
    let outcome = &rec["completeness"]["outcome"];
    assert_eq!(outcome["outcome"], "incomplete");
    let t_star = outcome["t_star"].as_f64().unwrap();
    assert!((t_star - r0).abs() < 1e-3 * r0, "{t_star}");
}

#[test]
fn trapped_and_ricci_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        finsler(dir.path(), MINKOWSKI, &["trapped"]).status.code(),
        Some(1)
    );
    assert_eq!(
        finsler(dir.path(), MINKOWSKI, &["trapped", "--patch", "plane"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        finsler(dir.path(), &schwarzschild(1.0), &["trapped"])
            .status
            .code(),
        Some(0)
    );
    let (header, rows) = csv_rows(dir.path(), "trapped.csv");
    assert_eq!(header.last().unwrap(), "k1");
    // Both expansions at r0 = M: 2/r0 and −2f/(3 r0) with f = −1.
    for r in rows {
        let mut k = [r[6], r[7]];
        k.sort_by(f64::total_cmp);
        assert!(
            (k[0] - 2.0 / 3.0).abs() < 1e-8 && (k[1] - 2.0).abs() < 1e-8,
            "{k:?}"
        );
    }
    assert_eq!(
        finsler(dir.path(), &schwarzschild(1.0), &["ricci-scan"])
            .status
            .code(),
        Some(0)
    );
}

#[test]
fn jacobi_and_focal_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = finsler(
        dir.path(),
        MINKOWSKI,
        &["jacobi", "--point", "1", "--normal", "0"],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let (header, rows) = csv_rows(dir.path(), "jacobi-sphere-1-0.csv");
    assert_eq!(header.len(), 1 + 4 + 2 * 4 + 2);
    assert_eq!(rows.len(), 201);
    assert!((rows[0][13] - 1.0).abs() < 1e-12);
    assert!(
        json(dir.path(), "jacobi-sphere-1-0.json")["lagrange_drift"]
            .as_f64()
            .unwrap()
            < 1e-9
    );

    assert_eq!(
        finsler(dir.path(), MINKOWSKI, &["focal"]).status.code(),
        Some(0)
    );
    let rays = json(dir.path(), "focal.json");
    // One ingoing ray per grid point focuses at the centre, after one unit.
    let firsts: Vec<f64> = rays
        .as_array()
        .unwrap()
        .iter()
        .filter_map(|r| r["focal"]["bound"]["first_focal"].as_f64())
        .collect();
    assert_eq!(firsts.len(), 4);
    assert!(firsts.iter().all(|t| (t - 1.0).abs() < 1e-6));
}

#[test]
fn penrose_verdicts_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        finsler(dir.path(), MINKOWSKI, &["penrose"]).status.code(),
        Some(1)
    );
    let rep = json(dir.path(), "penrose.json");
    assert_eq!(rep["verdict"]["verdict"], "hypothesis-failed");
    assert_eq!(rep["verdict"]["which"], "trapped");

    let s = schwarzschild(1.0);
    assert_eq!(finsler(dir.path(), &s, &["penrose"]).status.code(), Some(0));
    let first = fs::read(dir.path().join("out/penrose.json")).unwrap();
    assert_eq!(
        json(dir.path(), "penrose.json")["verdict"]["verdict"],
        "hypotheses-supported-incompleteness-witnessed"
    );
    assert_eq!(
        json(dir.path(), "penrose.json")["assertions"]["stamp"],
        "asserted, not verified"
    );
    assert_eq!(finsler(dir.path(), &s, &["penrose"]).status.code(), Some(0));
    assert_eq!(
        first,
        fs::read(dir.path().join("out/penrose.json")).unwrap()
    );
}

#[test]
fn shipped_scenarios_load_and_build() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut count = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let s = finsler_cli::scenario::Scenario::load(&path).unwrap();
            s.check().unwrap();
            let world = s.build().unwrap();
            assert!(!world.patches.is_empty(), "{}", path.display());
            count += 1;
        }
    }
    assert!(count >= 4);
}
