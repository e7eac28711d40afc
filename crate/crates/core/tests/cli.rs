use std::path::Path;
use std::process::{Command, Output};

fn bench(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vamp-bench"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

const SMALL: &str = "kappas = [1.0, 100.0]\ntrials = 2\nn = 64\nm = 256\nk_nonzero = 4\nmax_iters = 15\nthreads = 2\n";

#[test]
fn sweep_writes_records_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    let out = bench(
        &["sweep", "--config", "c.toml", "--out", "run.csv"],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let records = std::fs::read_to_string(dir.path().join("run.csv")).unwrap();
    let mut lines = records.lines();
    assert_eq!(
        lines.next(),
        Some("kappa,trial,iteration,dnmse_db,gamma1,tau1,converged,wall_time_ms")
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(rows.iter().all(|r| r.len() == 8));
    // (κ, trial) blocks appear in order
    let keys: Vec<(&str, &str)> = rows.iter().map(|r| (r[0], r[1])).collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| {
        a.0.parse::<f64>()
            .unwrap()
            .total_cmp(&b.0.parse().unwrap())
            .then(a.1.cmp(b.1))
    });
    assert_eq!(keys, sorted);
    assert!(!records.contains('\r'));

    let summary = std::fs::read_to_string(dir.path().join("run.summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert_eq!(String::from_utf8_lossy(&out.stdout), summary);

    // summarize reproduces the summary written by sweep
    let again = bench(&["summarize", "run.csv"], dir.path());
    assert!(again.status.success());
    assert_eq!(String::from_utf8_lossy(&again.stdout), summary);
}

#[test]
fn seed_flag_changes_draws() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    let a = bench(
        &["sweep", "--config", "c.toml", "--out", "a.csv"],
        dir.path(),
    );
    let b = bench(
        &[
            "sweep", "--config", "c.toml", "--seed", "9", "--out", "b.csv",
        ],
        dir.path(),
    );
    assert!(a.status.success() && b.status.success());
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn single_prints_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), SMALL).unwrap();
    let out = bench(
        &["single", "--config", "c.toml", "--kappa", "10"],
        dir.path(),
    );
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("k,dnmse_db,"));
    assert_eq!(text.lines().count(), 16);
}

#[test]
fn invalid_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    for (name, body) in [
        ("empty.toml", "kappas = []\n"),
        ("unknown.toml", "kappas = [1.0]\nbogus = 3\n"),
        (
            "slm.toml",
            "algorithm = \"vamp_slm\"\nchannel = \"probit\"\n",
        ),
    ] {
        std::fs::write(dir.path().join(name), body).unwrap();
        let out = bench(&["sweep", "--config", name], dir.path());
        assert!(!out.status.success(), "{name} accepted");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    }
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = bench(&["selftest"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert_eq!(
        String::from_utf8_lossy(&out.stdout)
            .matches("[PASS]")
            .count(),
        4
    );
}
