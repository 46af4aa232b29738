use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use opca::harness::{run_experiment, run_trial, Experiment, ExperimentConfig};

const SMALL: &str = r#"
[data]
kind = "gau-gap-1"
n = 12
p = 2
mu_min = 0.5
mu_max = 4.0
rho = 0.3

[algo]
name = "sgn"

[stepsize]
kind = "diminishing"
gamma = 1.0

[run]
h = 3
m = 400
trials = 5
record_every = 10
base_seed = 21
"#;

fn opca(args: &[&str], workers: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opca"))
        .args(args)
        .env("OPCA_WORKERS", workers)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn run_output_does_not_depend_on_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let mut traces = Vec::new();
    for (i, workers) in ["1", "4", "1"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}"));
        let res = opca(
            &["run", "--config", &cfg, "--out", out.to_str().unwrap()],
            workers,
        );
        assert!(
            res.status.success(),
            "{}",
            String::from_utf8_lossy(&res.stderr)
        );
        traces.push((
            fs::read(out.join("trace.csv")).unwrap(),
            fs::read(out.join("aggregate.csv")).unwrap(),
        ));
        let summary: serde_json::Value =
            serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary["trials"], 5);
        assert_eq!(summary["failed_trials"], 0);
    }
    assert_eq!(traces[0], traces[1]);
    assert_eq!(traces[0], traces[2]);
    let text = String::from_utf8(traces[0].0.clone()).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "trial,k,samples_seen,error,stepsize,fhat,corrected"
    );
    // 5 trials, k = 0, 10, ..., 130 and the final step 133
    assert_eq!(text.lines().count(), 1 + 5 * 15);
}

#[test]
fn sweep_marks_the_best_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("sweep");
    let res = opca(
        &[
            "sweep",
            "--config",
            &cfg,
            "--gammas",
            "2^-2..2^1",
            "--out",
            out.to_str().unwrap(),
        ],
        "2",
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    let entries = summary["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 4);
    let best = summary["best_final_error"].as_f64().unwrap();
    for e in entries {
        assert!(best <= e["final_mean"].as_f64().unwrap());
    }
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("gamma,trial,k,"));
}

#[test]
fn ode_and_eig_subcommands_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let ode_cfg = SMALL.replace("p = 2", "p = 1") + "\n[ode]\ndt = [0.1]\nt_end = 5.0\n";
    let cfg = write_config(dir.path(), "ode.toml", &ode_cfg);
    let out = dir.path().join("ode");
    let res = opca(
        &["ode", "--config", &cfg, "--out", out.to_str().unwrap()],
        "1",
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let csv = fs::read_to_string(out.join("ode.csv")).unwrap();
    assert!(csv.starts_with("limit,dt,t,error\n"));
    assert!(csv.contains("sgn-limit") && csv.contains("oja-limit"));

    let data = dir.path().join("data.csv");
    fs::write(&data, "1,-1,2,-2\n0.5,-0.5,0,0\n0,0,0.1,-0.1\n").unwrap();
    let vecs = dir.path().join("top.f64");
    let res = opca(
        &[
            "eig",
            "--input",
            data.to_str().unwrap(),
            "--format",
            "csv",
            "--top",
            "1",
            "--out",
            vecs.to_str().unwrap(),
        ],
        "1",
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let top = opca::data::load_matrix_file(&vecs, opca::data::MatrixFormat::F64le).unwrap();
    assert_eq!(top.shape(), (3, 1));
    assert!(top[(0, 0)].abs() > 0.9);
    let values = fs::read_to_string(dir.path().join("top.values.csv")).unwrap();
    assert_eq!(values.lines().count(), 1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    let missing = dir.path().join("absent.toml");
    let res = opca(
        &["run", "--config", missing.to_str().unwrap(), "--out", out],
        "1",
    );
    assert_eq!(res.status.code(), Some(2));

    let bad = write_config(
        dir.path(),
        "bad.toml",
        &SMALL.replace("trials = 5", "trials = 0"),
    );
    assert_eq!(
        opca(&["run", "--config", &bad, "--out", out], "1")
            .status
            .code(),
        Some(1)
    );

    let unknown = write_config(
        dir.path(),
        "unknown.toml",
        &SMALL.replace("h = 3", "h = 3\nspeed = 2"),
    );
    assert_eq!(
        opca(&["run", "--config", &unknown, "--out", out], "1")
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn trials_are_isolated_and_read_each_batch_once() {
    let exp = Experiment::new(ExperimentConfig::from_toml_str(SMALL).unwrap()).unwrap();
    let all = run_experiment(&exp, 2).unwrap();
    for outcome in &all.outcomes {
        let alone = run_trial(&exp, outcome.trial);
        assert_eq!(
            format!("{:?}", alone.records),
            format!("{:?}", outcome.records)
        );
        assert_eq!(alone.batches_fetched, 400usize.div_ceil(3));
    }
}

#[test]
fn file_data_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let mut rows = String::new();
    for i in 0..6 {
        let row: Vec<String> = (0..200)
            .map(|j| {
                let t = (j as f64 * 0.37 + i as f64).sin();
                format!(
                    "{}",
                    if i == 0 {
                        3.0 * (j as f64 * 0.11).cos()
                    } else {
                        0.2 * t
                    }
                )
            })
            .collect();
        rows.push_str(&row.join(","));
        rows.push('\n');
    }
    fs::write(dir.path().join("samples.csv"), rows).unwrap();
    let cfg = r#"
[data]
kind = "file"
p = 1
path = "samples.csv"
format = "csv"

[algo]
name = "adasgn"

[run]
h = 4
m = 200
trials = 2
"#;
    let cfg = write_config(dir.path(), "file.toml", cfg);
    let out = dir.path().join("out");
    let res = opca(
        &["run", "--config", &cfg, "--out", out.to_str().unwrap()],
        "1",
    );
    assert!(
        res.status.success(),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["final_error_mean"].as_f64().unwrap() < 0.1);
}
