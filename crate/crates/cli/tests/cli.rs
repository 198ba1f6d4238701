mod support;

use support::{artifacts, run, run_all_workflows, run_ok};

#[test]
fn workflows_are_byte_reproducible_and_replayable() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let first = run_all_workflows(root);
    for (name, out) in &first {
        let before = artifacts(&root.join(out));
        assert!(!before.is_empty(), "{name} wrote nothing");
        let manifest = out.join("manifest.json");
        let replay_dir = format!("replay-{name}");
        let res = run_ok(root, &["replay", manifest.to_str().unwrap(), "--out", &replay_dir]);
        assert!(String::from_utf8_lossy(&res.stdout).contains("outputs reproduced"));
        assert_eq!(before, artifacts(&root.join(&replay_dir)), "{name}: replay differs");
    }
}

#[test]
fn manifest_records_inputs_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    run_ok(root, &["simulate", "--n", "50", "--out", "s"]);
    run_ok(root, &["fit", "--data", "s/data.csv", "--k", "2", "--out", "f"]);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(root.join("f/manifest.json")).unwrap()).unwrap();
    assert_eq!(m["format"], "manifest");
    assert_eq!(m["command"], "fit");
    assert_eq!(m["argv"][0], "fit");
    assert!(m["inputs"]["s/data.csv"].as_str().unwrap().len() == 16);
    assert!(m["outputs"]["fit.json"].is_string());
    assert_eq!(m["config"]["k"], 2);
}

#[test]
fn replay_detects_changed_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    run_ok(root, &["simulate", "--n", "50", "--out", "s"]);
    run_ok(root, &["fit", "--data", "s/data.csv", "--k", "2", "--out", "f"]);
    let csv = root.join("s/data.csv");
    let mut text = std::fs::read_to_string(&csv).unwrap();
    text.push_str("0.5,1.0\n");
    std::fs::write(&csv, text).unwrap();
    let out = run(root, &["replay", "f/manifest.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("changed"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_eq!(run(root, &["--help"]).status.code(), Some(0));
    assert_eq!(run(root, &["--version"]).status.code(), Some(0));
    assert_eq!(run(root, &[]).status.code(), Some(1));
    assert_eq!(run(root, &["fit", "--bogus"]).status.code(), Some(1));

    let missing = run(root, &["fit", "--data", "nope.csv", "--k", "2"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.csv"));

    assert_eq!(run(root, &["simulate", "--truth", "g0_9"]).status.code(), Some(1));
    assert_eq!(run(root, &["rate-study", "--preset", "fig4"]).status.code(), Some(1));
    assert_eq!(run(root, &["select", "--data", "x.csv", "--epsilon", "-1"]).status.code(), Some(1));

    // A constant covariate makes the unregularised gating Hessian singular.
    let mut csv = String::from("x,y\n");
    for i in 0..60 {
        csv.push_str(&format!("0,{}\n", if i % 2 == 0 { 0.1 * i as f64 } else { 3.0 - 0.05 * i as f64 }));
    }
    std::fs::write(root.join("const.csv"), csv).unwrap();
    let numeric = run(root, &["fit", "--data", "const.csv", "--k", "2", "--ridge", "0"]);
    assert_eq!(numeric.status.code(), Some(2), "{}", String::from_utf8_lossy(&numeric.stderr));
}

#[test]
fn csv_errors_report_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("bad.csv"), "x,y\n1,2\n2,3\n3,oops\n").unwrap();
    let out = run(root, &["fit", "--data", "bad.csv", "--k", "2"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");

    std::fs::write(root.join("ragged.csv"), "x,y\n1,2\n2\n").unwrap();
    let out = run(root, &["fit", "--data", "ragged.csv", "--k", "2"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn select_prints_a_table_and_metrics_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    run_ok(root, &["simulate", "--n", "600", "--seed", "1", "--out", "s"]);
    let out = run_ok(root, &["select", "--data", "s/data.csv", "--method", "bic", "--kmax", "3", "--out", "sel"]);
    let table = String::from_utf8_lossy(&out.stdout);
    assert!(table.contains("BIC") && table.contains("chosen"), "{table}");
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(root.join("sel/selection.json")).unwrap()).unwrap();
    assert_eq!(doc["reports"][0]["method"], "BIC");

    let truth = root.join("truth.json");
    std::fs::write(
        &truth,
        r#"{"dim":1,"atoms":[{"omega0":-8,"omega1":[25],"a":[-20],"b":15,"sigma":0.3},{"omega0":0,"omega1":[0],"a":[20],"b":-5,"sigma":0.4}]}"#,
    )
    .unwrap();
    // The truth against itself, loaded from a JSON file, has zero loss.
    let out = run_ok(root, &["metrics", "--model", "truth.json", "--truth", "truth.json", "--out", "m"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["vde", "vdo", "vdfra"] {
        assert!(v[key].as_f64().unwrap() < 1e-8);
        assert!(v["t0"][key].is_number());
    }
    assert!(v["cells"].is_object());
}

#[test]
fn threads_flag_does_not_change_study_output() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(
        root.join("r.json"),
        r#"{"grid":{"n_min":150,"n_max":300,"count":2},"reps":2,"seed":1}"#,
    )
    .unwrap();
    run_ok(root, &["rate-study", "--config", "r.json", "--threads", "1", "--out", "a"]);
    run_ok(root, &["rate-study", "--config", "r.json", "--threads", "3", "--out", "b"]);
    assert_eq!(artifacts(&root.join("a")), artifacts(&root.join("b")));
}

#[test]
fn simulate_then_fit_converges() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    run_ok(root, &["simulate", "--truth", "g0_2", "--n", "1000", "--seed", "7", "--out", "a"]);
    run_ok(root, &["simulate", "--truth", "g0_2", "--n", "1000", "--seed", "7", "--out", "b"]);
    assert_eq!(std::fs::read(root.join("a/data.csv")).unwrap(), std::fs::read(root.join("b/data.csv")).unwrap());
    run_ok(root, &["fit", "--data", "a/data.csv", "--k", "2", "--out", "f"]);
    let fit: serde_json::Value = serde_json::from_slice(&std::fs::read(root.join("f/fit.json")).unwrap()).unwrap();
    assert_eq!(fit["format"], "fit");
    assert_eq!(fit["converged"], true);
}

#[test]
fn dsc_picks_two_experts_on_a_large_sample() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    run_ok(root, &["simulate", "--truth", "g0_2", "--n", "50000", "--seed", "7", "--out", "s"]);
    run_ok(
        root,
        &["fit", "--data", "s/data.csv", "--k", "4", "--init", "perturbed", "--truth", "g0_2", "--seed", "1", "--out", "f"],
    );
    run_ok(root, &["select", "--data", "s/data.csv", "--model", "f/fit.json", "--method", "dsc", "--out", "sel"]);
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(root.join("sel/selection.json")).unwrap()).unwrap();
    assert_eq!(doc["reports"][0]["chosen"], 2);
}
