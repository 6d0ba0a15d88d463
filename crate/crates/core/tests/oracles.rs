//! Closed-form values checked against independent computations.

use traceforms::harmonic::{dirichlet_part, e_har_form, harmonic_decomposition, j_ellipticity, BETA_GRID};
use traceforms::instances::{self, random_spd};
use traceforms::linalg::{self, Mat, Vector};
use traceforms::markov::dirichlet_form_check;
use traceforms::mosco::{diagonal_select, verify_a1};
use traceforms::oracles::analytic::{chain_coefficients, counterexample_value, halfspace_symbol};
use traceforms::oracles::demos::counterexample_sequence;
use traceforms::oracles::fem::{fem_chain_demo, fem_counterexample, fem_halfstrip_mode};
use traceforms::trace::Projection;
use traceforms::{kernel_basis, shift, trace_form, trace_limit, Error, QuadraticForm, Schedule, TraceMap, TracePath};

/// Composite Simpson rule on `[0, 1]` with `2m` panels.
fn simpson(f: impl Fn(f64) -> f64, m: usize) -> f64 {
    let n = 2 * m;
    let h = 1.0 / n as f64;
    let mut sum = f(0.0) + f(1.0);
    for i in 1..n {
        sum += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    sum * h / 3.0
}

/// Energy `∫₀¹ (c w′² + λ w²)` of the exact minimizer with `w(0) = a`, `w(1) = b`, by quadrature.
fn cell_energy(c: f64, lambda: f64, a: f64, b: f64) -> f64 {
    let s = (lambda / c).sqrt();
    let w = |x: f64| (a * (s * (1.0 - x)).sinh() + b * (s * x).sinh()) / s.sinh();
    let dw = |x: f64| s * (-a * (s * (1.0 - x)).cosh() + b * (s * x).cosh()) / s.sinh();
    simpson(|x| c * dw(x).powi(2) + lambda * w(x).powi(2), 2000)
}

fn path(n: usize) -> Mat {
    let mut a = Mat::zeros(n, n);
    for i in 0..n - 1 {
        a[(i, i)] += 1.0;
        a[(i + 1, i + 1)] += 1.0;
        a[(i, i + 1)] -= 1.0;
        a[(i + 1, i)] -= 1.0;
    }
    a
}

#[test]
fn chain_coefficients_match_cell_quadrature() {
    for lambda in [0.01, 0.25, 1.0, 4.0, 9.0] {
        let c = chain_coefficients(lambda).unwrap();
        // One cell with ψ = (1, 0) carries c_off + c_diag/2, with ψ = (1, 1) it carries c_diag.
        let spike = cell_energy(1.0, lambda, 1.0, 0.0);
        let flat = cell_energy(1.0, lambda, 1.0, 1.0);
        assert!((c.c_off + 0.5 * c.c_diag - spike).abs() < 1e-10, "λ = {lambda}");
        assert!((c.c_diag - flat).abs() < 1e-10, "λ = {lambda}");
    }
}

#[test]
fn chain_coefficients_at_one() {
    let c = chain_coefficients(1.0).unwrap();
    let (sh, ch) = (1f64.sinh(), 1f64.cosh());
    assert!((c.c_off - 1.0 / sh).abs() < 1e-15);
    assert!((c.c_diag - 2.0 * (ch - 1.0) / sh).abs() < 1e-15);
    // Total diagonal 2√λ cosh√λ / sinh√λ.
    assert!((c.c_diag + 2.0 * c.c_off - 2.0 * ch / sh).abs() < 1e-15);
}

#[test]
fn chain_small_and_large_shifts() {
    let tiny = chain_coefficients(1e-12).unwrap();
    assert!((tiny.c_off - 1.0).abs() < 1e-12);
    assert!(tiny.c_diag.abs() < 1e-11);
    let near = chain_coefficients(1e-6).unwrap();
    let s = 1e-3_f64;
    assert!((near.c_off - s / s.sinh()).abs() < 1e-14);
    let huge = chain_coefficients(1e6).unwrap();
    assert!(huge.c_off.is_finite() && huge.c_off < 1e-300);
    assert!((huge.c_diag - 2e3).abs() < 1e-9);
}

#[test]
fn chain_form_values() {
    let c = chain_coefficients(1.0).unwrap();
    assert!((c.value(&[1.0]) - (2.0 * c.c_off + c.c_diag)).abs() < 1e-15);
    let block = vec![1.0; 50];
    let small = chain_coefficients(1e-14).unwrap();
    assert!((small.value(&block) - 2.0).abs() < 1e-10);
}

#[test]
fn chain_weights_enter_only_the_operator() {
    let k = 2 * 3 + 1;
    let weights: Vec<f64> = (0..k).map(|i| 1.0 + 0.25 * i as f64).collect();
    let plain = fem_chain_demo(3, 8, 1.0, None).unwrap();
    let weighted = fem_chain_demo(3, 8, 1.0, Some(&weights)).unwrap();
    assert!(linalg::max_abs(&(&plain.t - &weighted.t)) < 1e-14);
    assert!(linalg::max_abs(&(&plain.operator - &weighted.operator)) > 0.1);
}

#[test]
fn chain_coefficients_are_negative_off_diagonal_and_markov() {
    let fem = fem_chain_demo(3, 16, 1.0, None).unwrap();
    assert!(fem.c_off.iter().all(|&c| c > 0.0));
    let report = dirichlet_form_check(&fem.t, &Mat::identity(7, 7), 200, 1).unwrap();
    assert!(report.pass);
}

#[test]
fn halfspace_symbol_values() {
    assert_eq!(halfspace_symbol(3.0, 0.0), 3.0);
    assert_eq!(halfspace_symbol(-2.0, 0.0), 2.0);
    assert_eq!(halfspace_symbol(0.0, 1.0), 1.0);
    assert_eq!(halfspace_symbol(3.0, 0.0), halfspace_symbol(0.0, 9.0));
}

#[test]
fn halfstrip_mode_matches_exact_decay() {
    // The minimizer of ∫₀ᵀ w′² + κ²w² with w(0) = 1 and free far end has energy κ tanh(κT).
    for (xi, lambda) in [(1.0, 0.0), (0.0, 1.0), (2.0, 1.0)] {
        let kappa = halfspace_symbol(xi, lambda);
        let value = fem_halfstrip_mode(xi, lambda, 20.0, 2048).unwrap();
        let exact = kappa * (kappa * 20.0).tanh();
        assert!((value - exact).abs() / exact < 5e-3);
    }
}

#[test]
fn counterexample_value_matches_quadrature() {
    for (n, lambda, a, b) in [(1, 1.0, 1.0, 0.0), (4, 0.5, 1.0, -2.0), (16, 1.0, 0.3, 0.7), (64, 0.5, 1.0, 1.0)] {
        let nf = f64::from(n);
        // Interior minimizer of n⁻¹∫u′² + λ∫u² plus the endpoint terms a² + b².
        let expected = cell_energy(1.0 / nf, lambda, a, b) + a * a + b * b;
        let value = counterexample_value(n, lambda, a, b);
        assert!((value - expected).abs() < 1e-9 * expected.max(1.0), "n = {n}: {value} vs {expected}");
    }
}

#[test]
fn counterexample_value_limits() {
    assert!((counterexample_value(1, 0.0, 1.0, -1.0) - 6.0).abs() < 1e-15);
    assert!((counterexample_value(1_000_000, 1.0, 1.0, 0.0) - 1.0).abs() < 2e-3);
    assert!((counterexample_value(1, 1e-9, 1.0, -1.0) - 6.0).abs() < 1e-8);
}

#[test]
fn counterexample_limit_is_exact_for_p1() {
    let fem = fem_counterexample(1, 64).unwrap();
    let form = QuadraticForm::new(fem.a, fem.mass).unwrap();
    let lim = trace_limit(&form, &fem.trace, &Schedule::default(), 1e-12).unwrap();
    for (a, b) in [(1.0, 0.0), (1.0, -1.0), (0.3, 2.0)] {
        let psi = Vector::from_vec(vec![a, b]);
        let expected = (b - a) * (b - a) + a * a + b * b;
        assert!((lim.value(&psi) - expected).abs() < 1e-10);
    }
}

#[test]
fn counterexample_fem_matches_closed_form() {
    for n in [1, 16] {
        let fem = fem_counterexample(n, 512).unwrap();
        let form = QuadraticForm::new(fem.a, fem.mass).unwrap();
        let t = trace_form(&form, &fem.trace, 1.0, TracePath::Schur).unwrap();
        let psi = Vector::from_vec(vec![1.0, 0.0]);
        let oracle = counterexample_value(n, 1.0, 1.0, 0.0);
        assert!((t.value(&psi) - oracle).abs() / oracle < 1e-2);
    }
}

#[test]
fn counterexample_sequence_violates_comparability() {
    let seq = counterexample_sequence(&[1, 4, 16], 64).unwrap();
    let a1 = verify_a1(&seq).unwrap();
    assert!(!a1.finite);
    let eps: Vec<f64> = (0..7).map(|j| 0.1 * 0.5f64.powi(j)).collect();
    let sched = Schedule::geometric(1.0, 0.5, 6).unwrap();
    assert!(matches!(
        diagonal_select(&seq, &sched, &eps),
        Err(Error::ScheduleExhausted { .. })
    ));
}

#[test]
fn path_projection_defining_equations() {
    let form = QuadraticForm::with_identity_mass(path(3)).unwrap();
    let j = TraceMap::restriction(vec![0, 2], 3).unwrap();
    let shifted = shift(&form, 1.0).unwrap();
    let kernel = kernel_basis(&j);
    let p = Projection::new(&shifted, &kernel).unwrap();
    let u = Vector::from_vec(vec![0.7, -1.3, 2.1]);
    let pu = p.apply(&u);
    assert!((j.apply(&pu) - j.apply(&u)).norm() < 1e-15);
    for c in 0..kernel.dim() {
        let kc = kernel.matrix().column(c).into_owned();
        assert!(shifted.bilinear(&pu, &kc).abs() < 1e-14);
    }
}

#[test]
fn schur_value_matches_explicit_inverse() {
    let mut r = instances::rng(3, 0);
    let a = random_spd(&mut r, 4, 0.1);
    let m = random_spd(&mut r, 4, 0.5);
    let form = QuadraticForm::new(a.clone(), m.clone()).unwrap();
    let j = TraceMap::restriction(vec![0, 1], 4).unwrap();
    let b = &a + &m * 0.5;
    let bgg = b.view((0, 0), (2, 2)).into_owned();
    let bgi = b.view((0, 2), (2, 2)).into_owned();
    let bii = b.view((2, 2), (2, 2)).into_owned();
    let schur = &bgg - &bgi * bii.try_inverse().unwrap() * bgi.transpose();
    for path in [TracePath::Schur, TracePath::Kkt, TracePath::Adjoint] {
        let t = trace_form(&form, &j, 0.5, path).unwrap();
        assert!(linalg::max_abs(&(&t.t - &schur)) < 1e-12, "{path}");
    }
}

#[test]
fn path5_harmonic_form_value() {
    let form = QuadraticForm::with_identity_mass(path(5)).unwrap();
    let j = TraceMap::restriction(vec![0, 4], 5).unwrap();
    let h = harmonic_decomposition(&form, &j).unwrap();
    let t = e_har_form(&h, &form, &j).unwrap();
    for (a, b) in [(1.0, 0.0), (2.0, -1.0), (0.5, 0.5)] {
        let psi = Vector::from_vec(vec![a, b]);
        assert!((psi.dot(&(&t * &psi)) - (b - a) * (b - a) / 4.0).abs() < 1e-14);
    }
}

#[test]
fn path3_dirichlet_part_is_scalar() {
    let m = Mat::from_diagonal(&Vector::from_vec(vec![1.0, 2.5, 1.0]));
    let form = QuadraticForm::new(path(3), m).unwrap();
    let j = TraceMap::restriction(vec![0, 2], 3).unwrap();
    let d = dirichlet_part(&form, &j).unwrap();
    assert!((d.ld_matrix[(0, 0)] - 2.0 / 2.5).abs() < 1e-15);
}

#[test]
fn path_laplacian_needs_the_trace_term_for_ellipticity() {
    let form = QuadraticForm::with_identity_mass(path(4)).unwrap();
    let j = TraceMap::restriction(vec![0], 4).unwrap();
    let only_zero = j_ellipticity(&form, &j, &[0.0]).unwrap();
    assert!(!only_zero.elliptic);
    let grid = j_ellipticity(&form, &j, &BETA_GRID).unwrap();
    assert!(grid.elliptic);
    assert!(grid.beta >= 1.0);
}

#[test]
fn positive_coupling_is_not_markov() {
    let a = Mat::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
    let report = dirichlet_form_check(&a, &Mat::identity(2, 2), 2000, 42).unwrap();
    assert!(!report.structural.pass);
    assert!(!report.sampling_pass);
    let u = report.witness.unwrap();
    let c = u.map(|x| x.clamp(0.0, 1.0));
    assert!(c.dot(&(&a * &c)) > u.dot(&(&a * &u)));
    let zero = dirichlet_form_check(&Mat::zeros(3, 3), &Mat::identity(3, 3), 100, 42).unwrap();
    assert!(zero.pass);
}
