use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_isac-drt"));
    cmd.env_remove("ISAC_DRT_JOBS");
    cmd
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_cfg(dir: &Path, text: &str) -> String {
    let p = dir.join("case.cfg");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn verify_scalar_passes_psk_check() {
    let cfg = config("scalar.cfg");
    let out = run(&["verify", "scalar", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["seed"], 7);
    let psk = report["checks"].as_array().unwrap().iter().find(|c| c["name"] == "prop2_psk_mse").unwrap();
    assert_eq!(psk["pass"], true);
}

#[test]
fn drt_writes_two_rows_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("curve.csv");
    let cfg = config("trm.cfg");
    let out = run(&[
        "drt",
        "--config",
        cfg.to_str().unwrap(),
        "--points",
        "11",
        "--trials",
        "200",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(&out_path).unwrap();
    assert_eq!(csv.lines().count(), 23);
}

#[test]
fn drt_output_is_reproducible_across_jobs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("trm.cfg");
    let mut outputs = Vec::new();
    for (i, jobs) in ["1", "4", "4"].iter().enumerate() {
        let p = dir.path().join(format!("c{i}.csv"));
        let out = run(&[
            "--jobs",
            jobs,
            "drt",
            "--config",
            cfg.to_str().unwrap(),
            "--points",
            "4",
            "--trials",
            "100",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert_eq!(code(&out), 0);
        outputs.push(fs::read(&p).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[1], outputs[2]);
}

#[test]
fn mi_is_reproducible_for_a_seed() {
    let cfg = config("trm.cfg");
    let args = ["mi", "--config", cfg.to_str().unwrap(), "--scheme", "gaussian_iid", "--trials", "300"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let other = run(&[&args[..], &["--seed", "99"]].concat());
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&["verify", "scalar", "--config", "/nonexistent/x.cfg"])), 2);
    assert_eq!(code(&run(&["verify"])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = write_cfg(dir.path(), "[scenario]\nM = 1\nbogus = 3\n");
    assert_eq!(code(&run(&["verify", "scalar", "--config", &bad])), 2);
    let cfg = config("trm.cfg");
    assert_eq!(code(&run(&["mi", "--config", cfg.to_str().unwrap(), "--scheme", "nope"])), 2);
}

#[test]
fn help_exits_0() {
    assert_eq!(code(&run(&["--help"])), 0);
    for sub in ["verify", "optimize", "capacity", "mi", "drt"] {
        assert_eq!(code(&run(&[sub, "--help"])), 0, "{sub}");
    }
}

#[test]
fn numeric_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "[scenario]\nM = 1\nN_s = 1\nT = 1\nP_T = 0\nsigma_s2 = 1\n\n[run]\ntrials = 10\n",
    );
    let out = run(&["capacity", "--config", &cfg]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn optimize_wf_writes_covariance() {
    let dir = tempfile::tempdir().unwrap();
    let cov = dir.path().join("cov.csv");
    let cfg = config("trm.cfg");
    let out = run(&["optimize", "--config", cfg.to_str().unwrap(), "--method", "wf", "--out", cov.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["converged"], true);
    let rows: Vec<_> = fs::read_to_string(&cov).unwrap().lines().map(str::to_owned).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.split(',').count() == 4));

    let pg = run(&["optimize", "--config", cfg.to_str().unwrap(), "--method", "pg"]);
    assert_eq!(code(&pg), 0);
    let pg: serde_json::Value = serde_json::from_slice(&pg.stdout).unwrap();
    let gap = (pg["mi_bits"].as_f64().unwrap() - summary["mi_bits"].as_f64().unwrap()).abs();
    assert!(gap < 1e-6, "{gap}");
}

#[test]
fn wf_without_closed_form_is_a_usage_error() {
    let cfg = config("correlated.cfg");
    assert_eq!(code(&run(&["optimize", "--config", cfg.to_str().unwrap(), "--method", "wf"])), 2);
}
