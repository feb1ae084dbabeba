use std::path::Path;
use std::process::{Command, Output};

fn nagumo(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nagumo"))
        .args(args)
        .env("NAGUMO_OUTPUT_DIR", out)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn mesh_generation_reports_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let o = nagumo(
        &[
            "mesh",
            "--kind",
            "right45",
            "--nx",
            "20",
            "--ny",
            "20",
            "--rect",
            "-100,100,-100,100",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("N_e = 800"));
    assert!(dir.path().join("mesh.txt").exists());

    let o = nagumo(&["mesh", "--kind", "acute8", "--nx", "10", "--ny", "10"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("N_e = 800") && s.contains("acute: true"));
}

#[test]
fn malformed_mesh_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.mesh");
    std::fs::write(&bad, "mesh 2 3 1\n0 0 1\nnot a vertex\n").unwrap();
    let o = nagumo(&["mesh", "--import", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn diagnose_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = nagumo(
        &["diagnose", "--kind", "right45", "--nx", "160", "--diffusion", "ex2"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let d = report["d_acute"].as_f64().unwrap();
    assert!((d - 5.3e-2).abs() < 0.02 * 5.3e-2);

    let o = nagumo(
        &["diagnose", "--kind", "right135", "--nx", "160", "--diffusion", "ex2"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(4));

    let o = nagumo(&["diagnose", "--kind", "right135", "--nx", "12"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["d_acute"].as_f64(), Some(0.0));
}

#[test]
fn strict_enforcement_exits_with_five() {
    let dir = tempfile::tempdir().unwrap();
    let o = nagumo(
        &[
            "solve",
            "--problem",
            "ex2",
            "--kind",
            "right45",
            "--nx",
            "40",
            "--treatment",
            "em",
            "--dt",
            "0.1",
            "--t-final",
            "1",
            "--enforcement",
            "strict",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(5));
}

#[test]
fn solve_from_config_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        r#"
[problem]
name = "ex1"
t_final = 0.5

[mesh]
kind = "right45"
nx = 16

[scheme]
treatment = "heim1"
lumping = "lumped"
dt = 0.25

[output]
formats = ["csv", "json", "svg", "ppm"]
"#,
    )
    .unwrap();
    let run = dir.path().join("run");
    let o = nagumo(
        &[
            "solve",
            "--config",
            cfg.to_str().unwrap(),
            "--output-dir",
            run.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "steps.csv",
        "solution.csv",
        "summary.json",
        "solution.svg",
        "solution.ppm",
    ] {
        assert!(run.join(f).exists(), "{f} missing");
    }
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run.join("summary.json")).unwrap()).unwrap();
    assert_eq!(doc["summary"]["steps"].as_u64(), Some(2));
    assert_eq!(doc["config"]["treatment"].as_str(), Some("HEIM1"));
    let steps = std::fs::read_to_string(run.join("steps.csv")).unwrap();
    assert_eq!(steps.lines().count(), 3);

    // Same inputs, same bytes.
    let again = dir.path().join("again");
    nagumo(
        &[
            "solve",
            "--config",
            cfg.to_str().unwrap(),
            "--output-dir",
            again.to_str().unwrap(),
        ],
        dir.path(),
    );
    for f in ["steps.csv", "solution.csv"] {
        assert_eq!(
            std::fs::read(run.join(f)).unwrap(),
            std::fs::read(again.join(f)).unwrap()
        );
    }

    let o = nagumo(&["report", dir.path().to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let table = stdout(&o);
    assert!(table.contains("| run |") && table.contains("| again |") && table.contains("HEIM1"));
}

#[test]
fn zero_final_time_reports_initial_data() {
    let dir = tempfile::tempdir().unwrap();
    let o = nagumo(
        &["solve", "--problem", "ex1", "--nx", "10", "--t-final", "0"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    let s = &doc["summary"];
    assert_eq!(s["steps"].as_u64(), Some(0));
    assert_eq!(s["final_u_min"], s["initial_u_min"]);
    assert_eq!(s["final_u_max"], s["initial_u_max"]);
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[scheme]\ntreatment = \"im\"\ndt = 0.5\n[problem]\nt_final = 0.5\n[mesh]\nnx = 8\n",
    )
    .unwrap();
    let o = nagumo(
        &["solve", "-c", cfg.to_str().unwrap(), "--treatment", "heim2"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("HEIM2"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[scheme]\nstep = 0.1\n").unwrap();
    let o = nagumo(&["solve", "-c", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn single_level_study_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = nagumo(&["converge", "--mode", "time", "--levels", "1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("need ≥ 2 levels"));
}

#[test]
fn small_space_study_writes_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = nagumo(
        &[
            "converge",
            "--mode",
            "space",
            "--levels",
            "2",
            "--n",
            "8",
            "--dt",
            "0.01",
            "--t-final",
            "0.05",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}
