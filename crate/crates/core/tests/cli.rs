//! End-to-end tests of the `gnewton` binary: exit codes, log files and the
//! comparison table.

use std::process::Command;

use grassmann_newton::harness::ConvergenceLog;

fn gnewton() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gnewton"))
}

fn write(dir: &std::path::Path, name: &str, contents: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

#[test]
fn run_writes_a_log_and_exits_zero_on_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "quad.json",
        r#"{"model":"quadratic","n_g":12,"n":3,"matrix_seed":7,
            "solver":"newton-bt","epsilon":1e-8,"seed":42,"output":"quad.csv"}"#,
    );
    let out = gnewton()
        .arg("run")
        .arg(&cfg)
        .current_dir(dir.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("quad.csv")).unwrap();
    let log = ConvergenceLog::from_csv(&text).unwrap();
    assert_eq!(log.solver, "newton-bt");
    assert_eq!(log.seed, 42);
    assert!(log.rows.last().unwrap().grad_norm <= 1e-8);
}

#[test]
fn identical_runs_produce_identical_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "quad.json",
        r#"{"model":"quadratic","n_g":10,"n":2,"matrix_seed":3,
            "solver":"newton-adaptive","epsilon":1e-8,"seed":5,"output":"a.csv"}"#,
    );
    let run = |output: &str| {
        let status = gnewton()
            .arg("run")
            .arg(&cfg)
            .arg("--out-dir")
            .arg(output)
            .current_dir(dir.path())
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read_to_string(dir.path().join(output).join("a.csv")).unwrap()
    };
    let first = run("x");
    let second = run("y");
    let strip = |text: &str| {
        text.lines()
            .filter(|l| !l.starts_with("# timestamp"))
            .map(|l| {
                // elapsed_s is the last column and may differ between runs
                match l.rsplit_once(',') {
                    Some((head, _)) if !l.starts_with('#') && !l.starts_with('n') => {
                        head.to_string()
                    }
                    _ => l.to_string(),
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(&first), strip(&second));
}

#[test]
fn compare_prints_table_and_rejects_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(
        dir.path(),
        "a.json",
        r#"{"model":"quadratic","n_g":12,"n":3,"matrix_seed":7,
            "solver":"newton-bt","epsilon":1e-8,"seed":1,
            "sigma_mode":"residual-scaled","inner_cap":200}"#,
    );
    let b = write(
        dir.path(),
        "b.json",
        r#"{"model":"quadratic","n_g":12,"n":3,"matrix_seed":7,
            "solver":"newton-adaptive","epsilon":1e-8,"seed":1,
            "sigma_mode":"residual-scaled","inner_cap":200}"#,
    );
    let out = gnewton().arg("compare").arg(&a).arg(&b).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("newton-bt"));
    assert!(stdout.contains("newton-adaptive"));

    // mismatched model dimensions are a config error (exit code 2)
    let c = write(
        dir.path(),
        "c.json",
        r#"{"model":"quadratic","n_g":14,"n":3,"matrix_seed":7,
            "solver":"gradient","epsilon":1e-8,"seed":1}"#,
    );
    let out = gnewton().arg("compare").arg(&a).arg(&c).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    // a single config is rejected
    let out = gnewton().arg("compare").arg(&a).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_configs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(
        dir.path(),
        "unknown.json",
        r#"{"model":"quadratic","n_g":12,"n":3,"solver":"newton-bt","momentum":0.9}"#,
    );
    let out = gnewton().arg("run").arg(&unknown).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("momentum"));

    let bad_eta = write(
        dir.path(),
        "eta.json",
        r#"{"model":"quadratic","n_g":12,"n":3,"solver":"newton-bt","eta":0.3}"#,
    );
    let out = gnewton().arg("run").arg(&bad_eta).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn overrides_change_retraction_and_hessian() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "ks.json",
        r#"{"model":"ks1d","n_g":24,"n":2,"solver":"newton-adaptive",
            "epsilon":1e-7,"seed":2,"max_outer":3000}"#,
    );
    let out = gnewton()
        .arg("run")
        .arg(&cfg)
        .arg("--retraction")
        .arg("wy")
        .arg("--hessian")
        .arg("exact")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = gnewton()
        .arg("run")
        .arg(&cfg)
        .arg("--retraction")
        .arg("nonsense")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
