#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_sgmoe")
}

/// Runs the binary in `cwd` with `args`.
pub fn run(cwd: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(cwd)
        .env_remove("SGMOE_THREADS")
        .output()
        .expect("binary runs")
}

pub fn run_ok(cwd: &Path, args: &[&str]) -> Output {
    let out = run(cwd, args);
    assert!(
        out.status.success(),
        "sgmoe {} failed ({:?}):\n{}",
        args.join(" "),
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const RATE_CONFIG: &str = r#"{
  "setting": { "kind": "merged", "k": 3 },
  "grid": { "n_min": 150, "n_max": 600, "count": 3 },
  "reps": 2,
  "losses": ["vde", "vdfra"],
  "seed": 5
}"#;

const SELECTION_CONFIG: &str = r#"{
  "grid": { "n_min": 300, "n_max": 300, "count": 1 },
  "reps": 2,
  "kmax": 3,
  "contamination_eps": 0.05,
  "seed": 6
}"#;

/// Runs every workflow subcommand once inside `dir` and returns
/// `(workflow name, output directory relative to dir)`.
pub fn run_all_workflows(dir: &Path) -> Vec<(&'static str, PathBuf)> {
    std::fs::write(dir.join("rate.json"), RATE_CONFIG).unwrap();
    std::fs::write(dir.join("select.json"), SELECTION_CONFIG).unwrap();
    let steps: Vec<(&'static str, Vec<&str>)> = vec![
        ("simulate", vec!["simulate", "--truth", "g0_2", "--n", "400", "--seed", "7", "--out", "sim"]),
        ("fit", vec!["fit", "--data", "sim/data.csv", "--k", "3", "--seed", "2", "--out", "fit"]),
        (
            "fit-perturbed",
            vec![
                "fit", "--data", "sim/data.csv", "--k", "4", "--init", "perturbed", "--truth", "g0_2", "--out", "fitp",
            ],
        ),
        ("dendrogram", vec!["dendrogram", "--model", "fitp/fit.json", "--data", "sim/data.csv", "--out", "dg"]),
        (
            "select",
            vec!["select", "--data", "sim/data.csv", "--model", "fitp/fit.json", "--kmax", "3", "--out", "sel"],
        ),
        ("metrics", vec!["metrics", "--model", "fitp/fit.json", "--truth", "g0_2", "--out", "met"]),
        ("rate-study", vec!["rate-study", "--config", "rate.json", "--threads", "2", "--out", "rate"]),
        ("select-study", vec!["select-study", "--config", "select.json", "--out", "selstudy"]),
    ];
    steps
        .into_iter()
        .map(|(name, args)| {
            run_ok(dir, &args);
            let out = PathBuf::from(args[args.iter().position(|a| *a == "--out").unwrap() + 1]);
            (name, out)
        })
        .collect()
}

/// Files in `dir` other than the manifest, sorted by name, with their bytes.
pub fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file() && p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}
