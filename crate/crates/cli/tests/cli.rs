use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use npiv_cli::report::{BiasDocument, EstimateDocument, OracleDocument, ReducedFormDocument};

fn npiv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_npiv")).args(args).output().expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulated_csv(dir: &Path, n: usize) -> PathBuf {
    let csv = dir.join(format!("sim{n}.csv"));
    let out = npiv(&["simulate", "--n", &n.to_string(), "--seed", "7", "--output", path_str(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    csv
}

#[test]
fn default_sweep_has_nine_cells() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulated_csv(dir.path(), 4000);
    let json = dir.path().join("out.json");
    let out = npiv(&["estimate", "--input", path_str(&csv), "--output", path_str(&json)]);
    assert!(matches!(out.status.code(), Some(0) | Some(4)));
    let doc: EstimateDocument = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(doc.schema, 1);
    assert_eq!(doc.cells.len(), 9);
    assert_eq!(doc.config.b_sweep, vec![0.005, 0.02, 0.05]);
    assert_eq!(doc.config.c_sweep, Some(vec![1.0, 2.0, 5.0]));
    assert_eq!(doc.config.series.k_dim, 10);
    assert_eq!(doc.reduced_form.bands.len(), 3);
    for (i, cell) in doc.cells.iter().enumerate() {
        assert_eq!((cell.b_index, cell.c_index), (i / 3, i % 3));
        assert_eq!(cell.x_grid.len(), 100);
        assert_eq!(cell.diagnostics.n_constraints, 600);
        if cell.feasible {
            assert!(cell.lower.iter().zip(&cell.upper).all(|(l, u)| l <= u));
        }
    }
    let infeasible = doc.cells.iter().any(|c| !c.feasible);
    assert_eq!(out.status.code(), Some(if infeasible { 4 } else { 0 }));
}

#[test]
fn custom_shape_file_replaces_c_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulated_csv(dir.path(), 2000);
    let shape = dir.path().join("shape.json");
    std::fs::write(
        &shape,
        r#"{"rows": [
            {"deriv_order": 0, "sign": 1, "bound": "unit_interval"},
            {"deriv_order": 0, "sign": -1, "bound": "unit_interval"},
            {"deriv_order": 1, "sign": 1, "bound": 0.0}
        ]}"#,
    )
    .unwrap();
    let out = npiv(&["estimate", "--input", path_str(&csv), "--shape", path_str(&shape), "--b", "0.05"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: EstimateDocument = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc.cells.len(), 1);
    assert_eq!(doc.config.c_sweep, None);
    assert_eq!(doc.cells[0].diagnostics.n_constraints, 200 + 300);
    // decreasing shape: envelopes are non-increasing up to LP tolerance
    let up = &doc.cells[0].upper;
    assert!(up.windows(2).all(|w| w[1] <= w[0] + 1e-6));
}

#[test]
fn data_errors_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("empty.csv", "", "empty"),
        ("header.csv", "y,x,z\n", "no data rows"),
        ("missing.csv", "y,x\n1,2\n", "missing required column(s): z"),
        ("text.csv", "y,x,z\n1,2,3\n4,five,6\n", "data row 2"),
        ("few.csv", "y,x,z\n1,2,3\n4,5,6\n", "at least l_dim"),
    ];
    for (name, content, needle) in cases {
        let path = dir.path().join(name);
        std::fs::write(&path, content).unwrap();
        let out = npiv(&["estimate", "--input", path_str(&path)]);
        let stderr = String::from_utf8_lossy(&out.stderr);
        assert_eq!(out.status.code(), Some(3), "{name}: {stderr}");
        assert!(stderr.contains(needle), "{name}: {stderr}");
    }
    let out = npiv(&["estimate", "--input", path_str(&dir.path().join("absent.csv"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulated_csv(dir.path(), 500);
    for args in [
        vec!["estimate", "--input", path_str(&csv), "--b", "-1"],
        vec!["estimate", "--input", path_str(&csv), "--c-sweep", "1,0"],
        vec!["estimate", "--input", path_str(&csv), "--k-dim", "2"],
        vec!["estimate", "--input", path_str(&csv), "--trim", "0.7"],
        vec!["estimate", "--input", path_str(&csv), "--b", "0.1", "--b-sweep", "0.1,0.2"],
        vec!["simulate", "--n", "10", "--h0", "cubic"],
        vec!["simulate", "--n", "10", "--rho", "0"],
        vec!["frobnicate"],
    ] {
        let out = npiv(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn reduced_form_band() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulated_csv(dir.path(), 1000);
    let out = npiv(&["reduced-form", "--input", path_str(&csv), "--b", "0.02", "--z-grid", "50"]);
    assert_eq!(out.status.code(), Some(0));
    let doc: ReducedFormDocument = serde_json::from_slice(&out.stdout).unwrap();
    let rf = &doc.reduced_form;
    assert_eq!(rf.z_grid.len(), 50);
    assert_eq!(rf.bands[0].b, 0.02);
    for i in 0..50 {
        assert_eq!(rf.bands[0].upper[i], rf.g_hat[i] + 0.02);
        assert_eq!(rf.bands[0].lower[i], rf.g_hat[i] - 0.02);
    }
}

#[test]
fn simulate_is_reproducible() {
    let a = npiv(&["simulate", "--n", "100", "--seed", "7"]);
    let b = npiv(&["simulate", "--n", "100", "--seed", "7"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    assert!(text.starts_with("y,x,z\n"));
    assert_eq!(text.lines().count(), 101);
}

fn write_model(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("model.json");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn oracle_single_point_interval() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), r#"{"x_support": [0.0], "z_support": [0.0], "joint_pmf": [[1.0]], "g0": [0.5]}"#);
    let out = npiv(&["oracle", "--model", path_str(&model), "--b", "0.1"]);
    assert_eq!(out.status.code(), Some(0));
    let doc: OracleDocument = serde_json::from_slice(&out.stdout).unwrap();
    assert!(doc.feasible);
    assert!((doc.lower[0] - 0.4).abs() < 1e-12 && (doc.upper[0] - 0.6).abs() < 1e-12);

    let far = write_model(dir.path(), r#"{"x_support": [0.0], "z_support": [0.0], "joint_pmf": [[1.0]], "g0": [1.5]}"#);
    let out = npiv(&["oracle", "--model", path_str(&far), "--b", "0.1"]);
    assert_eq!(out.status.code(), Some(4));
    let doc: OracleDocument = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!doc.feasible);

    let bad = write_model(dir.path(), r#"{"x_support": [0.0], "z_support": [0.0], "joint_pmf": [[0.7]], "g0": [0.5]}"#);
    assert_eq!(npiv(&["oracle", "--model", path_str(&bad), "--b", "0.1"]).status.code(), Some(3));
}

#[test]
fn bias_of_zero_weight_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(
        dir.path(),
        r#"{"x_support": [0.0, 1.0], "z_support": [0.0, 1.0], "joint_pmf": [[0.4, 0.1], [0.1, 0.4]], "g0": [0.3, 0.6]}"#,
    );
    let out = npiv(&["bias", "--model", path_str(&model), "--w", "0,0", "--b", "0.1"]);
    assert_eq!(out.status.code(), Some(0));
    let doc: BiasDocument = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc.bias, Some(0.0));

    let out = npiv(&["bias", "--model", path_str(&model), "--w", "1,-1", "--b", "0.1"]);
    let doc: BiasDocument = serde_json::from_slice(&out.stdout).unwrap();
    assert!(doc.representable && doc.bias.unwrap() > 0.0);
}
