use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairsparse"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn synth_fit_debias_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("s");
    let f = dir.path().join("f");
    let out = bin(&["synth", "--d", "20", "--s", "3", "--n", "80", "--seed", "5", "--out", path(&s)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(s.join("dataset.csv").exists());
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(s.join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth["support"].as_array().unwrap().len(), 3);

    let data = s.join("dataset.csv");
    let out = bin(&["fit", "--data", path(&data), "--gamma", "2", "--out", path(&f)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let sol: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(f.join("solution.json")).unwrap()).unwrap();
    assert_eq!(sol["z"], truth["z_star"]);
    assert_eq!(fs::read_to_string(f.join("weights.csv")).unwrap().lines().count(), 21);

    let sol_path = f.join("solution.json");
    let out = bin(&["debias", "--data", path(&data), "--solution", path(&sol_path), "--gamma", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("index,z,y_debiased"));
    assert_eq!(text.lines().count(), 81);
}

#[test]
fn experiment_tables_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out_dir = dir.path().join(name);
        let out = bin(&[
            "experiment", "--dims", "30", "--betas", "1.0,2.0", "--s", "3", "--runs", "3", "--seed", "11",
            "--svg", "--out", path(&out_dir),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        out_dir
    };
    let a = run("a");
    let b = run("b");
    for file in ["curve.csv", "runs.csv", "jaccard.svg", "exact_z.svg"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
    let curve = fs::read_to_string(a.join("curve.csv")).unwrap();
    assert!(curve.starts_with("d,beta,n,mean_jaccard,exact_z_rate"));
    assert_eq!(curve.lines().count(), 3);
}

#[test]
fn json_format_and_stdout() {
    let out = bin(&["gamma-sweep", "--d", "30", "--s", "3", "--runs", "2", "--gammas", "1.5,2.0", "--format", "json"]);
    assert!(out.status.success());
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 2);
    assert_eq!(rows[0]["gamma_hat"], 1.5);
}

#[test]
fn assumptions_sweep_table() {
    let out = bin(&["assumptions", "--d", "20", "--s", "3", "--ns", "10,200", "--runs", "5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("n,d,s,runs,a1_holds,a2_holds"));
}

#[test]
fn witness_report() {
    let out = bin(&["witness", "--d", "20", "--s", "3", "--n", "150", "--trials", "20"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(rep["complementary_slackness"], 0.0);
    assert_eq!(rep["invexity"]["trials"], 20);
    assert_eq!(rep["spectrum"]["diag_check"], true);
}

#[test]
fn real_data_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("t.csv");
    let mut text = String::from("id,a,b,c,kind,y\n");
    for i in 0..40 {
        let a = (i as f64 * 0.37).sin();
        let b = (i as f64 * 0.91).cos();
        let kind = ["u", "v", "w"][i % 3];
        let y = 2.0 * a + if i % 2 == 0 { 1.0 } else { -1.0 };
        text += &format!("{i},{a},{b},{},{kind},{y}\n", if i == 7 { "?".to_string() } else { "1".into() });
    }
    fs::write(&csv, text).unwrap();
    let out_dir = dir.path().join("out");
    let out = bin(&[
        "real", "--data", path(&csv), "--target", "y", "--drop", "id", "--lambda", "0.01", "--out", path(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    // a, b and two indicators for kind; c has a missing cell
    assert_eq!(rep["d"], 4);
    assert_eq!(rep["n"], 40);
    let cols = fs::read_to_string(out_dir.join("columns.json")).unwrap();
    assert!(cols.contains("kind=v") && cols.contains("kind=w"));
}

#[test]
fn exit_codes() {
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
    assert_eq!(bin(&["--version"]).status.code(), Some(0));
    assert_eq!(bin(&["nonsense"]).status.code(), Some(1));
    assert_eq!(bin(&["synth", "--s", "0"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "y,x\n1,2\n3\n").unwrap();
    assert_eq!(bin(&["fit", "--data", path(&bad)]).status.code(), Some(2));
    assert_eq!(
        bin(&["fit", "--data", path(&dir.path().join("missing.csv"))]).status.code(),
        Some(2)
    );
}
