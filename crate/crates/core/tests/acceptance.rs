//! One test per acceptance criterion at desk scale. Each prints its
//! pass/fail line, so `cargo test --test acceptance -- --nocapture` gives the
//! full table.

use eikonal_lab::suite::{run_criterion, Scale};

fn check(id: u8) {
    let dir = tempfile::tempdir().unwrap();
    let result = run_criterion(id, Scale::Desk, dir.path()).unwrap();
    println!("{}", result.line());
    assert!(result.passed, "{}", result.line());
}

#[test]
fn criterion_01_zero_entropy_baselines() {
    check(1);
}

#[test]
fn criterion_02_critical_jump_scaling() {
    check(2);
}

#[test]
fn criterion_03_borderline_exponents() {
    check(3);
}

#[test]
fn criterion_04_covering_law() {
    check(4);
}

#[test]
fn criterion_05_modulus_floor() {
    check(5);
}

#[test]
fn criterion_06_straightness_audit() {
    check(6);
}

#[test]
fn criterion_07_kinetic_identities() {
    check(7);
}

#[test]
fn criterion_08_refined_besov() {
    check(8);
}

#[test]
fn criterion_09_disk_boundary() {
    check(9);
}

#[test]
fn criterion_10_determinism() {
    check(10);
}
