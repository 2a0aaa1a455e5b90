use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn diffkern(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_diffkern"));
    cmd.args(args);
    match threads {
        Some(t) => cmd.env("DIFFKERN_THREADS", t),
        None => cmd.env_remove("DIFFKERN_THREADS"),
    };
    cmd.output().unwrap()
}

fn small_run(out: &Path, threads: &str) -> Output {
    diffkern(
        &[
            "run",
            "--preset",
            "multi-gauss",
            "--trials",
            "3",
            "--iters",
            "150",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ],
        Some(threads),
    )
}

#[test]
fn run_writes_outputs_and_echoes_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = small_run(dir.path(), "2");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in [
        "config.txt",
        "nmse.csv",
        "updates.csv",
        "field.csv",
        "positions.csv",
        "edges.csv",
    ] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    let nmse = fs::read_to_string(dir.path().join("nmse.csv")).unwrap();
    assert!(nmse.starts_with("iter,nmse_linear,nmse_db\n"));
    assert_eq!(nmse.lines().count(), 151);
    let cfg = fs::read_to_string(dir.path().join("config.txt")).unwrap();
    assert!(cfg.contains("seed=7\n") && cfg.contains("trials=3\n"));
    assert!(String::from_utf8_lossy(&out.stdout).contains("steady_nmse_db="));
}

#[test]
fn echoed_config_reproduces_the_run() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(small_run(a.path(), "1").status.success());
    let cfg = a.path().join("config.txt");
    let out = diffkern(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            b.path().to_str().unwrap(),
        ],
        Some("1"),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for f in ["nmse.csv", "updates.csv", "field.csv", "config.txt"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn thread_count_does_not_change_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(small_run(a.path(), "1").status.success());
    assert!(small_run(b.path(), "3").status.success());
    for f in [
        "nmse.csv",
        "updates.csv",
        "field.csv",
        "positions.csv",
        "edges.csv",
    ] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(diffkern(&["run"], None).status.code(), Some(2));
    assert_eq!(
        diffkern(
            &["run", "--preset", "multi-gauss", "--config", "c.txt"],
            None
        )
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        diffkern(&["run", "--preset", "nowhere"], None)
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        diffkern(&["run", "--preset", "multi-gauss", "--set", "mu=abc"], None)
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        diffkern(&["run", "--config", "/nonexistent/config.txt"], None)
            .status
            .code(),
        Some(2)
    );
    assert_eq!(diffkern(&["frobnicate"], None).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(
        diffkern(
            &["run", "--preset", "multi-gauss", "--out", out],
            Some("zero")
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn runtime_errors_exit_3() {
    // A radius this small never yields a connected graph.
    let dir = tempfile::tempdir().unwrap();
    let out = diffkern(
        &[
            "run",
            "--preset",
            "multi-gauss",
            "--set",
            "radius=0.001",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("connected"));
}

#[test]
fn complexity_prints_table() {
    let out = diffkern(
        &[
            "complexity",
            "--J",
            "60",
            "--edges",
            "300",
            "--r",
            "33",
            "--Q",
            "2",
            "--L",
            "2",
            "--s",
            "7",
        ],
        None,
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("algorithm,multiplications,overhead\n"));
    assert!(text.contains("FATC-KLMS,31740,1980\n"));
    assert_eq!(text.lines().count(), 7);
}

#[test]
fn sweep_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = diffkern(
        &[
            "sweep",
            "--preset",
            "multi-gauss",
            "--trials",
            "2",
            "--iters",
            "300",
            "--eps",
            "0,1",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        None,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "epsilon,mean_updates,steady_nmse_db");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("0,300,"));
}

#[test]
fn validate_consensus_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = diffkern(
        &[
            "validate-consensus",
            "--preset",
            "multi-gauss",
            "--set",
            "nodes=10",
            "--out",
            d,
        ],
        None,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = fs::read_to_string(dir.path().join("consensus.txt")).unwrap();
    assert!(text.contains("contraction_ok=true"));

    let out = diffkern(
        &[
            "validate-consensus",
            "--preset",
            "multi-gauss",
            "--set",
            "nodes=10",
            "--set",
            "mixing=identity",
            "--out",
            d,
        ],
        None,
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn export_dict_writes_centers() {
    let dir = tempfile::tempdir().unwrap();
    let out = diffkern(
        &[
            "export-dict",
            "--preset",
            "multi-gauss",
            "--out",
            dir.path().to_str().unwrap(),
        ],
        None,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let dict = fs::read_to_string(dir.path().join("dictionary.csv")).unwrap();
    let stdout = String::from_utf8(out.stdout).unwrap();
    let r: usize = stdout
        .trim()
        .strip_prefix("centers=")
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(dict.lines().count(), r);
    assert!(dict.lines().all(|l| l.split(',').count() == 2));
    let positions = fs::read_to_string(dir.path().join("positions.csv")).unwrap();
    assert_eq!(positions.lines().count(), 61);
}
