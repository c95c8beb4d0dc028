//! End-to-end runs of the `kvdecay` binary.

use std::path::Path;
use std::process::{Command, Output};

fn kvdecay(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kvdecay"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn table_writes_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = kvdecay(&["table", "--alphas", "0,0.25,0.5,0.75", "--output-dir", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = read(&dir.path().join("table.csv"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "alpha,decay_order,prior_order,theta_fit,slope_energy");
    assert_eq!(lines.len(), 5);
    assert!(!csv.contains('\r'));
    assert!(read(&dir.path().join("table.txt")).contains("optimal polynomial t^-2"));
}

#[test]
fn usage_errors_exit_one() {
    let out = kvdecay(&["simulate", "--alpha", "1.2", "--n", "64"]);
    assert_eq!(out.status.code(), Some(1));
    let msg = stderr(&out);
    assert!(msg.contains("alpha out of [0,1)"), "{msg}");
    assert_eq!(msg.trim().lines().count(), 1, "{msg}");

    for args in [
        vec!["launch"],
        vec!["simulate", "--alpha", "0.5", "--n", "64", "--frobnicate"],
        vec!["simulate", "--alpha", "0.5", "--n", "sixty"],
        vec!["simulate", "--n", "64"],
    ] {
        let out = kvdecay(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", stderr(&out));
        assert_eq!(stderr(&out).trim().lines().count(), 1, "{args:?}: {}", stderr(&out));
    }
}

#[test]
fn resolvent_cap_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let out = kvdecay(&[
        "resolvent",
        "--alpha",
        "0.5",
        "--n",
        "256",
        "--omega-max",
        "40",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_ne!(out.status.code(), Some(0));
    assert!(stderr(&out).contains("25.6"), "{}", stderr(&out));
    assert!(!dir.path().join("resolvent.csv").exists());
}

fn resolvent_run(dir: &Path) -> (String, String) {
    let out = kvdecay(&[
        "resolvent",
        "--alpha",
        "0.25",
        "--n",
        "512",
        "--omega-min",
        "5",
        "--omega-max",
        "50",
        "--output-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    (read(&dir.join("resolvent.csv")), read(&dir.join("fit.json")))
}

#[test]
fn resolvent_outputs_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = resolvent_run(a.path());
    let second = resolvent_run(b.path());
    assert_eq!(first, second);
    assert!(first.0.starts_with("omega,sigma_min,resolvent_norm\n"));
    let json: serde_json::Value = serde_json::from_str(&first.1).unwrap();
    let keys: Vec<&String> = json.as_object().unwrap().keys().collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert_eq!(json["n_elements"], 512);
    // No temporary files left behind.
    let names: Vec<String> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    assert_eq!(names.len(), 2, "{names:?}");
}

#[test]
fn grid_sampling_uses_requested_points() {
    let dir = tempfile::tempdir().unwrap();
    let out = kvdecay(&[
        "resolvent",
        "--alpha",
        "0.5",
        "--n",
        "128",
        "--omega-min",
        "1",
        "--omega-max",
        "12",
        "--points",
        "15",
        "--sampling",
        "grid",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(read(&dir.path().join("resolvent.csv")).lines().count(), 16);
}

#[test]
fn simulate_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.json");
    let output = dir.path().join("out");
    std::fs::write(
        &config,
        format!(
            r#"{{"alpha": 0.5, "n_elements": 64, "dt": 0.01, "t_final": 5.0, "sample_every": 10, "output_dir": {:?}}}"#,
            output.to_str().unwrap()
        ),
    )
    .unwrap();
    let run = || {
        let out = kvdecay(&["simulate", "--config", config.to_str().unwrap(), "--dump-matrices"]);
        assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
        read(&output.join("energy.csv"))
    };
    let first = run();
    assert_eq!(first, run());
    let rows: Vec<&str> = first.lines().collect();
    assert_eq!(rows[0], "t,energy");
    assert_eq!(rows.len(), 2 + 50);
    for name in ["mass.txt", "stiffness.txt", "damping.txt"] {
        assert!(read(&output.join(name)).starts_with("# n_dof=63\n"));
    }
}

#[test]
fn spectrum_and_branches() {
    let dir = tempfile::tempdir().unwrap();
    let out = kvdecay(&[
        "spectrum",
        "--alpha",
        "0.5",
        "--n",
        "64",
        "--branch-alphas",
        "0,0.25,0.5",
        "--k-max",
        "3",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let spectrum = read(&dir.path().join("spectrum.csv"));
    assert_eq!(spectrum.lines().next(), Some("re,im"));
    assert_eq!(spectrum.lines().count(), 1 + 126);
    let branches = read(&dir.path().join("branches.csv"));
    assert_eq!(branches.lines().next(), Some("alpha,k,re,im"));
    assert_eq!(branches.lines().count(), 1 + 9);
}

#[test]
fn hardy_sweep_output() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "hardy",
        "--alphas",
        "0,0.5",
        "--betas",
        "0,1",
        "--samples",
        "10",
        "--output-dir",
        dir.path().to_str().unwrap(),
    ];
    let out = kvdecay(&args);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let first = read(&dir.path().join("hardy.csv"));
    assert_eq!(first.lines().count(), 5);
    assert_eq!(kvdecay(&args).status.code(), Some(0));
    assert_eq!(first, read(&dir.path().join("hardy.csv")));
    assert_eq!(kvdecay(&["hardy", "--betas", "-1"]).status.code(), Some(1));
}

#[test]
fn quick_verify_passes() {
    let out = kvdecay(&["verify", "--quick"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{text}");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines.iter().all(|l| l.starts_with("PASS")));
}
