//! One test per acceptance criterion. Each prints its pass/fail line.

use traceforms::acceptance::{self, Suite, CRITERIA};

fn check(id: u8) {
    let result = acceptance::run(id, &Suite::default());
    println!("{}", result.line());
    assert!(result.pass, "{}", result.line());
}

#[test]
fn criterion_01_three_paths() {
    check(1);
}

#[test]
fn criterion_02_dirichlet_principle() {
    check(2);
}

#[test]
fn criterion_03_shift_consistency() {
    check(3);
}

#[test]
fn criterion_04_chain_oracle() {
    check(4);
}

#[test]
fn criterion_05_halfspace_symbol() {
    check(5);
}

#[test]
fn criterion_06_scaled_family() {
    check(6);
}

#[test]
fn criterion_07_markov_preservation() {
    check(7);
}

#[test]
fn criterion_08_potential_identity() {
    check(8);
}

#[test]
fn criterion_09_harmonic_structure() {
    check(9);
}

#[test]
fn criterion_10_mosco_harness() {
    check(10);
}

#[test]
fn criterion_11_identity_embedding() {
    check(11);
}

#[test]
fn criterion_12_grid_demo() {
    check(12);
}

#[test]
fn every_criterion_has_a_test() {
    let ids: Vec<u8> = CRITERIA.iter().map(|c| c.id).collect();
    assert_eq!(ids, (1..=12).collect::<Vec<_>>());
}

#[test]
fn sign_flipped_chain_oracle_is_caught() {
    let suite = Suite {
        chain_oracle: acceptance::flipped_chain_oracle,
        ..Suite::default()
    };
    let result = acceptance::run(4, &suite);
    println!("{}", result.line());
    assert!(!result.pass);
}
