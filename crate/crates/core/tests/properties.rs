//! Structural properties checked on seeded random instances.

use proptest::prelude::*;

use traceforms::harmonic::{self, harmonic_decomposition, pj_projection};
use traceforms::instances::{self, graph_laplacian_instance, random_instance, Instance, TraceShape};
use traceforms::linalg::{self, Mat, Vector};
use traceforms::markov::{dirichlet_form_check, structural_check};
use traceforms::mosco::{mosco_distance, trace_convergence_run, FormSequence};
use traceforms::oracles::analytic::counterexample_value;
use traceforms::oracles::fem::{fem_counterexample, fem_interval};
use traceforms::trace::Projection;
use traceforms::{
    dirichlet_minimize, kernel_basis, resolvent, shift, trace_form, trace_limit, QuadraticForm, Schedule, TracePath,
};

fn shape(dense: bool) -> TraceShape {
    if dense {
        TraceShape::Dense
    } else {
        TraceShape::Restriction
    }
}

fn instance(seed: u64, dense: bool) -> Instance {
    random_instance(seed, 0, shape(dense), None)
}

fn samples(seed: u64, dim: usize, count: usize) -> Vec<Vector> {
    let mut r = instances::rng(seed, 99);
    (0..count).map(|_| instances::gaussian_vector(&mut r, dim)).collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn validated_forms_are_psd_with_pd_mass(seed in any::<u64>(), dense in any::<bool>()) {
        let inst = instance(seed, dense);
        let (a, m) = (inst.form.form_matrix(), inst.form.mass_matrix());
        for u in samples(seed, inst.form.dim(), 10) {
            prop_assert!(u.dot(&(a * &u)) >= -1e-10 * u.norm_squared());
            prop_assert!(u.dot(&(m * &u)) > 0.0);
        }
    }

    #[test]
    fn shift_is_affine(seed in any::<u64>(), l1 in 0.0..4.0f64, l2 in 0.0..4.0f64) {
        let inst = instance(seed, false);
        let b1 = shift(&inst.form, l1).unwrap();
        let b2 = shift(&inst.form, l2).unwrap();
        let moved = b1.matrix() + inst.form.mass_matrix() * (l2 - l1);
        let scale = linalg::max_abs(b2.matrix()).max(1.0);
        prop_assert!(linalg::max_abs(&(moved - b2.matrix())) <= 8.0 * f64::EPSILON * scale);
    }

    #[test]
    fn restriction_apply_matches_matrix(seed in any::<u64>()) {
        let inst = instance(seed, false);
        let jm = inst.trace.matrix();
        for v in samples(seed, inst.form.dim(), 5) {
            let fast = inst.trace.apply(&v);
            let slow = &jm * &v;
            prop_assert!((&fast - &slow).norm() <= 1e-14 * slow.norm().max(1e-300));
        }
    }

    #[test]
    fn dirichlet_principle_and_paths_agree(seed in any::<u64>(), dense in any::<bool>(), lambda in 0.05..4.0f64) {
        let inst = instance(seed, dense);
        let (form, j) = (&inst.form, &inst.trace);
        let kkt = trace_form(form, j, lambda, TracePath::Kkt).unwrap();
        let adj = trace_form(form, j, lambda, TracePath::Adjoint).unwrap();
        let scale = linalg::max_abs(&kkt.operator).max(1.0);
        prop_assert!(linalg::max_abs(&(&kkt.operator - &adj.operator)) <= 1e-8 * scale);
        let shifted = shift(form, lambda).unwrap();
        for psi in samples(seed, j.aux_dim(), 10) {
            let min = dirichlet_minimize(&shifted, j, &psi).unwrap();
            prop_assert!(rel(min.value, kkt.value(&psi)) <= 1e-8);
            prop_assert!(min.constraint_residual <= 1e-8 * psi.norm().max(1.0));
        }
    }

    #[test]
    fn projection_is_idempotent_and_self_adjoint(seed in any::<u64>(), dense in any::<bool>(), lambda in 0.05..4.0f64) {
        let inst = instance(seed, dense);
        let shifted = shift(&inst.form, lambda).unwrap();
        let p = Projection::new(&shifted, &kernel_basis(&inst.trace)).unwrap();
        let pm = p.matrix();
        let scale = linalg::max_abs(shifted.matrix()).max(1.0);
        prop_assert!(linalg::max_abs(&(&pm * &pm - &pm)) <= 1e-10 * pm.amax().max(1.0));
        let vs = samples(seed, inst.form.dim(), 6);
        for pair in vs.chunks(2) {
            let (u, v) = (&pair[0], &pair[1]);
            let lhs = shifted.bilinear(&p.apply(u), v);
            let rhs = shifted.bilinear(u, &p.apply(v));
            prop_assert!((lhs - rhs).abs() <= 1e-10 * scale * u.norm() * v.norm());
        }
    }
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn limit_is_monotone_and_dominated(seed in any::<u64>(), dense in any::<bool>()) {
        let inst = instance(seed, dense);
        let (form, j) = (&inst.form, &inst.trace);
        let lim = trace_limit(form, j, &Schedule::default(), 1e-10).unwrap();
        let psis = samples(seed, j.aux_dim(), 20);
        for entry in &lim.schedule {
            let scale = linalg::max_abs(&entry.t).max(1.0);
            prop_assert!(lim.monotonicity_violation(&psis) <= 1e-10 * scale);
            let gap = linalg::sym_eigenvalues(&linalg::symmetrize(&(&entry.t - &lim.t0)));
            prop_assert!(gap.min() >= -1e-10 * scale, "λ = {}", entry.lambda);
        }
    }

    #[test]
    fn resolvents_approach_the_limit_monotonically(seed in any::<u64>()) {
        let inst = instance(seed, false);
        let (form, j) = (&inst.form, &inst.trace);
        let lim = trace_limit(form, j, &Schedule::default(), 1e-10).unwrap();
        let w = j.weight_matrix();
        let limit_res = resolvent(&lim.operator, 1.0).unwrap();
        for psi in samples(seed, j.aux_dim(), 5) {
            let target = &limit_res * &psi;
            let mut previous = f64::INFINITY;
            for entry in &lim.schedule {
                let op = linalg::inverse(w, "W").unwrap() * &entry.t;
                let d = &resolvent(&op, 1.0).unwrap() * &psi - &target;
                let dist = d.dot(&(w * &d)).sqrt();
                prop_assert!(dist <= previous + 1e-10 * psi.norm());
                previous = dist;
            }
        }
    }

    #[test]
    fn harmonic_extension_identities(seed in any::<u64>(), dense in any::<bool>()) {
        let inst = instance(seed, dense);
        let (form, j) = (&inst.form, &inst.trace);
        let h = harmonic_decomposition(form, j).unwrap();
        prop_assert!(h.direct_sum_ok);
        let e = h.extension_matrix.as_ref().unwrap();
        let a = form.form_matrix();
        let jm = j.matrix();
        let k = h.kernel.matrix();
        let scale = linalg::max_abs(a).max(1.0) * e.amax().max(1.0);
        prop_assert!(linalg::max_abs(&(e * e - e)) <= 1e-10 * scale);
        prop_assert!(linalg::max_abs(&(&jm * e - &jm)) <= 1e-10 * scale);
        if k.ncols() > 0 {
            prop_assert!(linalg::max_abs(&(k.transpose() * a * e)) <= 1e-10 * scale);
        }
        let t = harmonic::e_har_form(&h, form, j).unwrap();
        let p = pj_projection(form, j).unwrap();
        for u in samples(seed, form.dim(), 5) {
            let ju = j.apply(&u);
            let pu = &p * &u;
            let lhs = ju.dot(&(&t * &ju));
            let rhs = pu.dot(&(a * &pu));
            prop_assert!((lhs - rhs).abs() <= 1e-10 * scale * u.norm_squared());
        }
        let jwj = jm.transpose() * j.weight_matrix() * &jm;
        prop_assert!((a + jwj).cholesky().is_some());
    }

    #[test]
    fn laplacian_traces_stay_markov(seed in any::<u64>()) {
        let inst = graph_laplacian_instance(seed, 0);
        let (form, j) = (&inst.form, &inst.trace);
        prop_assert!(structural_check(form.form_matrix()).pass);
        for lambda in [0.25, 1.0, 4.0] {
            let t = trace_form(form, j, lambda, TracePath::Schur).unwrap();
            let report = dirichlet_form_check(&t.t, j.weight_matrix(), 200, seed).unwrap();
            prop_assert!(report.pass, "λ = {lambda}: {report:?}");
        }
    }

    #[test]
    fn structural_pass_implies_sampling_pass(seed in any::<u64>(), coupling in -1.0..1.0f64) {
        // Laplacian with one perturbed edge, which may or may not stay an M-matrix.
        let inst = graph_laplacian_instance(seed, 1);
        let mut a = inst.form.form_matrix().clone();
        a[(0, 1)] += coupling;
        a[(1, 0)] += coupling;
        a[(0, 0)] += coupling.abs();
        a[(1, 1)] += coupling.abs();
        let report = dirichlet_form_check(&a, inst.form.mass_matrix(), 300, seed).unwrap();
        if report.structural.pass {
            prop_assert!(report.sampling_pass);
        }
    }

    #[test]
    fn mosco_distance_is_a_metric(seed in any::<u64>()) {
        let mut r = instances::rng(seed, 5);
        let n = 6;
        let m = instances::random_spd(&mut r, n, 0.5);
        let forms: Vec<Mat> = (0..3).map(|_| instances::random_spd(&mut r, n, 0.0)).collect();
        let d = |x: &Mat, y: &Mat| mosco_distance(x, y, &m).unwrap();
        prop_assert!(d(&forms[0], &forms[0]) <= 1e-12);
        prop_assert!((d(&forms[0], &forms[1]) - d(&forms[1], &forms[0])).abs() <= 1e-12);
        prop_assert!(d(&forms[0], &forms[2]) <= d(&forms[0], &forms[1]) + d(&forms[1], &forms[2]) + 1e-12);
        prop_assert!(d(&forms[0], &forms[1]) > 0.0);
    }

    #[test]
    fn monotone_families_have_nonincreasing_gaps(seed in any::<u64>()) {
        let inst = instance(seed, false);
        let a_inf = inst.form.form_matrix().clone();
        let m = inst.form.mass_matrix().clone();
        let mut r = instances::rng(seed, 6);
        let g = instances::random_spd(&mut r, a_inf.nrows(), 0.0);
        // Aₙ = A_∞ − G/(n + 1) increases to A_∞ and stays PSD.
        let floor = linalg::sym_eigenvalues(&a_inf).min();
        let g = &g * (0.5 * floor / linalg::sym_norm(&g));
        let terms: Vec<Mat> = (1..=8).map(|n| &a_inf - &g / (n as f64 + 1.0)).collect();
        let seq = FormSequence::with_default_labels(terms, m, a_inf.clone(), a_inf, inst.trace.clone()).unwrap();
        let run = trace_convergence_run(&seq, 1.0).unwrap();
        for pair in run.distances.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-12);
        }
    }

    #[test]
    fn counterexample_values_increase_with_lambda(
        n in 1u32..200,
        a in -3.0..3.0f64,
        b in -3.0..3.0f64,
        l1 in 0.0..10.0f64,
        l2 in 0.0..10.0f64,
    ) {
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let (vlo, vhi) = (counterexample_value(n, lo, a, b), counterexample_value(n, hi, a, b));
        prop_assert!(vlo <= vhi + 1e-12 * vhi.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(config(12))]

    #[test]
    fn fem_matrices_validate_and_are_m_matrices(nodes in 2usize..200, n in 1u32..100, cells in 16usize..200) {
        let fem = fem_interval(nodes, 0.0, 1.0).unwrap();
        prop_assert!(QuadraticForm::new(fem.stiffness.clone(), fem.mass.clone()).is_ok());
        prop_assert!(structural_check(&fem.stiffness).pass);
        let ce = fem_counterexample(n, cells).unwrap();
        prop_assert!(QuadraticForm::new(ce.a.clone(), ce.mass.clone()).is_ok());
        prop_assert!(structural_check(&ce.a).pass);
    }
}
