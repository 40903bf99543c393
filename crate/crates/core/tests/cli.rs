use std::path::Path;
use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eikonal-lab")).args(args).output().unwrap()
}

fn run_with(dir: &Path, sub: &str, config: &str, out: &str) -> Output {
    let cfg = dir.join(format!("{out}.cfg"));
    std::fs::write(&cfg, config).unwrap();
    let out = dir.join(out);
    lab(&[sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

fn column(csv: &str, name: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().parse().unwrap()).collect()
}

#[test]
fn constant_field_has_zero_besov_rates() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_with(dir.path(), "besov", "field = constant\nn = 64\np = 3\ns = 0.5\n", "out");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out/besov.csv")).unwrap();
    let rates = column(&csv, "rate");
    assert!(!rates.is_empty());
    assert!(rates.iter().all(|&r| r == 0.0), "{rates:?}");
}

#[test]
fn bc_rejects_q_outside_the_admissible_range() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_with(dir.path(), "bc", "q = 5\n", "out");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("< q ≤ 6"));
}

#[test]
fn unknown_keys_and_batteries_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_with(dir.path(), "kinetic", "field = jump\nn = 48\nepsilon = 0.1\nspeed = 3\n", "out");
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("speed"));
    let o = lab(&["suite", "nightly"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn manifest_replays_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_with(dir.path(), "kinetic", "field = vortex\nn = 48\nepsilon = 0.1\nn_s = 32\n", "first");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = dir.path().join("first/manifest.txt");
    let second = dir.path().join("second");
    let o = lab(&["kinetic", "--config", manifest.to_str().unwrap(), "--out", second.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for name in ["kinetic.csv", "nu.eikf"] {
        let a = std::fs::read(dir.path().join("first").join(name)).unwrap();
        let b = std::fs::read(second.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
}

#[test]
fn smoke_battery_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("suite");
    let o = lab(&["suite", "smoke", "--out", out.to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{stdout}");
    assert!(stdout.contains("4 of 4 criteria passed"));
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 5);
}
