//! The acceptance criteria, runnable from tests and from `traceforms selftest`.
//!
//! Each criterion returns a [`CriterionResult`] carrying the measured value
//! next to its threshold. Criteria are tagged with a group so that a subset
//! can be selected by name.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::form::{AuxSpace, QuadraticForm, TraceKind, TraceMap};
use crate::harmonic;
use crate::instances::{self, random_instance, Instance, TraceShape};
use crate::linalg::{self, Mat};
use crate::markov;
use crate::mosco::{self, FormSequence};
use crate::oracles::analytic::{self, ChainTraceCoefficients};
use crate::oracles::demos;
use crate::oracles::fem::{fem_chain_demo, fem_chain_limit, fem_halfstrip_mode};
use crate::trace::{self, shift_consistency_check, trace_form, trace_limit, Schedule, TracePath};

/// Closed-form chain coefficients used by criterion 4; replaceable for mutation checks.
pub type ChainOracle = fn(f64) -> Result<ChainTraceCoefficients>;

/// Settings shared by all criteria.
#[derive(Debug, Clone, Copy)]
pub struct Suite {
    pub seed: u64,
    pub chain_oracle: ChainOracle,
}

impl Default for Suite {
    fn default() -> Self {
        Self {
            seed: instances::DEFAULT_SEED,
            chain_oracle: analytic::chain_coefficients,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub group: &'static str,
    pub pass: bool,
    /// Measured quantities with their thresholds.
    pub measured: String,
    pub seconds: f64,
}

impl CriterionResult {
    /// One line of the form `[PASS] 4 chain oracle (oracles) ... 1.2 s`.
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {:<28} ({:<8}) {}  [{:.2} s]",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.group,
            self.measured,
            self.seconds
        )
    }
}

/// Identification of a criterion.
#[derive(Debug, Clone, Copy)]
pub struct CriterionInfo {
    pub id: u8,
    pub name: &'static str,
    pub group: &'static str,
}

pub const CRITERIA: [CriterionInfo; 12] = [
    CriterionInfo { id: 1, name: "three-path equality", group: "trace" },
    CriterionInfo { id: 2, name: "dirichlet principle", group: "trace" },
    CriterionInfo { id: 3, name: "shift consistency", group: "trace" },
    CriterionInfo { id: 4, name: "chain oracle", group: "oracles" },
    CriterionInfo { id: 5, name: "half-space symbol", group: "oracles" },
    CriterionInfo { id: 6, name: "counterexample", group: "mosco" },
    CriterionInfo { id: 7, name: "markov preservation", group: "markov" },
    CriterionInfo { id: 8, name: "potential identity", group: "markov" },
    CriterionInfo { id: 9, name: "harmonic structure", group: "harmonic" },
    CriterionInfo { id: 10, name: "mosco harness", group: "mosco" },
    CriterionInfo { id: 11, name: "identity embedding", group: "trace" },
    CriterionInfo { id: 12, name: "grid demo", group: "oracles" },
];

/// Whether a criterion is selected by `filter` (group, id or part of the name).
pub fn matches(info: &CriterionInfo, filter: &str) -> bool {
    let f = filter.trim().to_ascii_lowercase();
    f.is_empty() || f == "all" || info.group == f || info.id.to_string() == f || info.name.contains(&f)
}

fn finish(id: u8, started: Instant, outcome: Result<(bool, String)>) -> CriterionResult {
    let info = CRITERIA[usize::from(id) - 1];
    let (pass, measured) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
    CriterionResult {
        id,
        name: info.name,
        group: info.group,
        pass,
        measured,
        seconds: started.elapsed().as_secs_f64(),
    }
}

/// Runs one criterion.
pub fn run(id: u8, suite: &Suite) -> CriterionResult {
    let started = Instant::now();
    let outcome = match id {
        1 => three_paths(suite),
        2 => dirichlet_principle(suite),
        3 => shift_consistency(suite),
        4 => chain_oracle(suite),
        5 => halfspace(),
        6 => counterexample(),
        7 => markov_preservation(suite),
        8 => potential_identity(suite),
        9 => harmonic_structure(suite),
        10 => mosco_harness(suite),
        11 => identity_embedding(suite),
        12 => grid_demo(),
        other => Err(Error::InvalidSequence(format!("no criterion {other}"))),
    };
    finish(id, started, outcome)
}

/// Runs every criterion selected by `filter`, in order.
pub fn run_filtered(filter: &str, suite: &Suite) -> Vec<CriterionResult> {
    CRITERIA
        .iter()
        .filter(|c| matches(c, filter))
        .map(|c| run(c.id, suite))
        .collect()
}

fn shape_for(i: u64) -> TraceShape {
    if i % 2 == 0 {
        TraceShape::Restriction
    } else {
        TraceShape::Dense
    }
}

fn instance(suite: &Suite, i: u64) -> Instance {
    random_instance(suite.seed, i, shape_for(i), None)
}

fn max_of(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

/// Three routes to `T_λ` on 100 random instances, pairwise relative Frobenius gaps.
fn three_paths(suite: &Suite) -> Result<(bool, String)> {
    const TOL: f64 = 1e-8;
    const BUDGET: f64 = 10.0;
    let started = Instant::now();
    let gaps = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let inst = instance(suite, i);
            let mut worst = 0.0_f64;
            for lambda in [0.5, 1.0] {
                let kkt = trace_form(&inst.form, &inst.trace, lambda, TracePath::Kkt)?.t;
                let adj = trace_form(&inst.form, &inst.trace, lambda, TracePath::Adjoint)?.t;
                worst = worst.max(linalg::rel_diff(&kkt, &adj));
                if inst.trace.restriction_indices().is_some() {
                    let schur = trace_form(&inst.form, &inst.trace, lambda, TracePath::Schur)?.t;
                    worst = worst.max(linalg::rel_diff(&schur, &kkt));
                    worst = worst.max(linalg::rel_diff(&schur, &adj));
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    let worst = max_of(gaps);
    let secs = started.elapsed().as_secs_f64();
    Ok((
        worst <= TOL && secs <= BUDGET,
        format!("max pairwise gap {worst:.2e} (≤ {TOL:.0e}), {secs:.2} s (≤ {BUDGET} s)"),
    ))
}

/// Constrained minima against `ψᵀT_λψ`, and monotonicity in `λ`.
fn dirichlet_principle(suite: &Suite) -> Result<(bool, String)> {
    const TOL: f64 = 1e-8;
    const SLACK: f64 = 1e-10;
    let rows = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let inst = instance(suite, i);
            let (form, j) = (&inst.form, &inst.trace);
            let path = TracePath::preferred(j);
            let t_half = trace_form(form, j, 0.5, path)?.t;
            let t_one = trace_form(form, j, 1.0, path)?.t;
            let shifted = form.shift(1.0)?;
            let mut r = instances::rng(suite.seed ^ 0x5eed, i);
            let (mut gap, mut mono) = (0.0_f64, f64::NEG_INFINITY);
            for _ in 0..20 {
                let psi = instances::gaussian_vector(&mut r, j.aux_dim());
                let min = trace::dirichlet_minimize(&shifted, j, &psi)?;
                let quad = psi.dot(&(&t_one * &psi));
                gap = gap.max((min.value - quad).abs() / quad.abs().max(f64::MIN_POSITIVE));
                mono = mono.max(psi.dot(&(&t_half * &psi)) - quad);
            }
            Ok((gap, mono))
        })
        .collect::<Result<Vec<_>>>()?;
    let gap = max_of(rows.iter().map(|r| r.0));
    let mono = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    Ok((
        gap <= TOL && mono <= SLACK,
        format!("minimum gap {gap:.2e} (≤ {TOL:.0e}), max ψᵀ(T_0.5 − T_1)ψ {mono:.2e} (≤ {SLACK:.0e})"),
    ))
}

fn shift_consistency(suite: &Suite) -> Result<(bool, String)> {
    const TOL: f64 = trace::SHIFT_CONSISTENCY_TOL;
    let devs = (0..20u64)
        .into_par_iter()
        .map(|i| {
            let inst = instance(suite, i);
            let mut worst = 0.0_f64;
            for beta in [0.5, 1.0, 2.0] {
                worst = worst.max(shift_consistency_check(&inst.form, &inst.trace, beta)?.deviation);
            }
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    let worst = max_of(devs);
    Ok((worst <= TOL, format!("max deviation {worst:.2e} (≤ {TOL:.0e})")))
}

/// Chain model at `L = 8`, `h = 1/64`, its refinement rate, and its `λ ↓ 0` limit.
pub fn chain_criterion(oracle: ChainOracle) -> Result<(bool, String)> {
    const TOL: f64 = 1e-2;
    const SLOPE: (f64, f64) = (1.8, 2.2);
    const BUDGET: f64 = 30.0;
    let started = Instant::now();
    let mut worst_gap = 0.0_f64;
    let mut slopes = Vec::new();
    for lambda in [0.25, 1.0, 4.0] {
        let c = oracle(lambda)?;
        let mut hs = Vec::new();
        let mut errs = Vec::new();
        for p in [16, 32, 64] {
            let fem = fem_chain_demo(8, p, lambda, None)?;
            let gap = fem.rel_gap(&c);
            if p == 64 {
                worst_gap = worst_gap.max(gap);
            }
            hs.push(fem.h);
            errs.push(gap);
        }
        slopes.push(linalg::loglog_slope(&hs, &errs));
    }
    let lim = fem_chain_limit(8, 64, 1e-8)?;
    let lim_gap = max_of(
        lim.c_off
            .iter()
            .map(|c| (c - 1.0).abs())
            .chain(lim.c_diag.iter().map(|c| c.abs())),
    );
    let slope_ok = slopes.iter().all(|s| (SLOPE.0..=SLOPE.1).contains(s));
    let secs = started.elapsed().as_secs_f64();
    let slopes_txt: Vec<String> = slopes.iter().map(|s| format!("{s:.3}")).collect();
    Ok((
        worst_gap <= TOL && slope_ok && lim_gap <= TOL && secs <= BUDGET,
        format!(
            "coefficient gap {worst_gap:.2e} (≤ 1%), slopes [{}] (in [1.8, 2.2]), limit gap {lim_gap:.2e} (≤ 1%), {secs:.1} s",
            slopes_txt.join(", ")
        ),
    ))
}

fn chain_oracle(suite: &Suite) -> Result<(bool, String)> {
    chain_criterion(suite.chain_oracle)
}

fn halfspace() -> Result<(bool, String)> {
    const TOL: f64 = 5e-3;
    const EXACT: f64 = 1e-12;
    let mut gap = 0.0_f64;
    let mut dependence = 0.0_f64;
    for (xi, lambda) in [(1.0, 0.0), (0.0, 1.0), (2.0, 1.0), (3.0, 0.0)] {
        let v = fem_halfstrip_mode(xi, lambda, 20.0, 2048)?;
        let exact = analytic::halfspace_symbol(xi, lambda);
        gap = gap.max((v - exact).abs() / exact);
        let kappa: f64 = xi * xi + lambda;
        let as_shift = fem_halfstrip_mode(0.0, kappa, 20.0, 2048)?;
        let as_frequency = fem_halfstrip_mode(kappa.sqrt(), 0.0, 20.0, 2048)?;
        dependence = dependence.max((v - as_shift).abs() / v).max((v - as_frequency).abs() / v);
    }
    Ok((
        gap <= TOL && dependence <= EXACT,
        format!("symbol gap {gap:.2e} (≤ 0.5%), (ξ² + λ)-dependence {dependence:.1e} (≤ 1e-12)"),
    ))
}

/// The two-point family: closed-form reproduction, the large-`n` value, comparability failure,
/// and the failed diagonal towards the zero form.
fn counterexample() -> Result<(bool, String)> {
    const TOL: f64 = 1e-2;
    const LIMIT_TOL: f64 = 2e-2;
    let ns = [1u32, 4, 16, 64];
    let rep = demos::counterexample_report(&ns, &[0.5, 1.0], 512, 1.0, 0.0)?;
    let rep_mixed = demos::counterexample_report(&ns, &[0.5, 1.0], 512, 1.0, -1.0)?;
    let fem_gap = rep.rel_gap.max(rep_mixed.rel_gap);

    // Large-n value of the limit form at (1, 0): 1 + 1/n.
    let formula_64 = analytic::counterexample_value(64, 0.0, 1.0, 0.0);
    let computed_64 = demos::counterexample_report(&[64], &[0.0], 512, 1.0, 0.0)?.computed[0];
    let limit_gap = (formula_64 - 1.0).abs().max((computed_64 - 1.0).abs());

    let seq = demos::counterexample_sequence(&ns, 512)?;
    let a1 = mosco::verify_a1(&seq)?;
    let lambdas = Schedule::geometric(1.0, 0.5, 3)?;
    let eps: Vec<f64> = (0..4).map(|j| 0.1 * 0.5f64.powi(j)).collect();
    let diagonal = mosco::diagonal_select(&seq, &lambdas, &eps);
    let exhausted = matches!(diagonal, Err(Error::ScheduleExhausted { .. }));
    Ok((
        fem_gap <= TOL && limit_gap <= LIMIT_TOL && !a1.finite && exhausted,
        format!(
            "formula gap {fem_gap:.2e} (≤ 1%), n = 64 value {computed_64:.4} (within 2% of 1), c = {}, diagonal {}",
            if a1.finite { format!("{:.3}", a1.c_best) } else { "inf".into() },
            if exhausted { "not found within schedule" } else { "unexpectedly found" }
        ),
    ))
}

fn markov_preservation(suite: &Suite) -> Result<(bool, String)> {
    const TOL: f64 = markov::BOX_TOL;
    let alphas = [0.5, 1.0, 2.0];
    let rows = (0..50u64)
        .into_par_iter()
        .map(|i| {
            let inst = instances::graph_laplacian_instance(suite.seed, i);
            let (form, j) = (&inst.form, &inst.trace);
            let w = j.weight_matrix();
            let mut forms = Vec::new();
            for lambda in [0.25, 1.0] {
                forms.push(trace_form(form, j, lambda, TracePath::Schur)?.t);
            }
            forms.push(trace_limit(form, j, &Schedule::default(), 1e-10)?.t0);
            let mut worst = 0.0_f64;
            let mut implication = true;
            for t in &forms {
                let rep = markov::markov_resolvent_check(t, w, &alphas, 200, suite.seed ^ i)?;
                worst = worst.max(rep.max_box_violation);
                implication &= !rep.structural.pass || rep.pass;
            }
            Ok((worst, implication))
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = max_of(rows.iter().map(|r| r.0));
    let implication = rows.iter().all(|r| r.1);
    Ok((
        worst <= TOL && implication,
        format!("max box violation {worst:.2e} (≤ {TOL:.0e}), structural ⇒ sampling: {implication}"),
    ))
}

fn potential_identity(suite: &Suite) -> Result<(bool, String)> {
    const TOL: f64 = markov::POTENTIAL_TOL;
    let res = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let inst = instance(suite, i);
            Ok(markov::potential_identity_check(&inst.form, &inst.trace, 20, suite.seed ^ i)?.max_residual)
        })
        .collect::<Result<Vec<f64>>>()?;
    let worst = max_of(res);
    Ok((worst <= TOL, format!("max relative residual {worst:.2e} (≤ {TOL:.0e})")))
}

#[derive(Default)]
struct HarmonicMeasures {
    quadharm: f64,
    spread: f64,
    v1: f64,
    pj: f64,
    e_har_vs_t0: f64,
}

fn harmonic_structure(suite: &Suite) -> Result<(bool, String)> {
    let rows = (0..50u64)
        .into_par_iter()
        .map(|i| {
            let inst = instance(suite, i);
            let (form, j) = (&inst.form, &inst.trace);
            let h = harmonic::harmonic_decomposition(form, j)?;
            let e = h.extension_matrix.clone().ok_or(Error::NoDirectSum)?;
            let d = harmonic::dirichlet_part(form, j)?;
            let mut m = HarmonicMeasures {
                quadharm: harmonic::quadharm_check(&h, form, j, 50, suite.seed ^ i)?.max_deviation,
                ..Default::default()
            };
            let mut r = instances::rng(suite.seed ^ 0xa11, i);
            for _ in 0..5 {
                let u = instances::gaussian_vector(&mut r, form.dim());
                m.spread = m
                    .spread
                    .max(harmonic::v_lambda_spread(form, j, &d, &u, &[0.1, 0.5, 1.0, 2.0])?);
                let v1 = harmonic::v_lambda(form, j, &d, &u, 1.0)?;
                m.v1 = m.v1.max((v1 - &e * &u).norm());
            }
            m.pj = linalg::max_abs(&(harmonic::pj_projection(form, j)? - &e));
            let e_har = harmonic::e_har_form(&h, form, j)?;
            let lim = trace_limit(form, j, &Schedule::default(), 1e-10)?;
            m.e_har_vs_t0 = linalg::rel_diff(&e_har, &lim.t0).max(linalg::rel_diff(&e_har, &lim.iterate));
            Ok(m)
        })
        .collect::<Result<Vec<_>>>()?;
    let q = max_of(rows.iter().map(|m| m.quadharm));
    let s = max_of(rows.iter().map(|m| m.spread));
    let v = max_of(rows.iter().map(|m| m.v1));
    let p = max_of(rows.iter().map(|m| m.pj));
    let t = max_of(rows.iter().map(|m| m.e_har_vs_t0));
    Ok((
        q <= 1e-10 && s <= 1e-10 && v <= 1e-10 && p <= 1e-12 && t <= 1e-6,
        format!(
            "quadharm {q:.1e} (≤ 1e-10), v_λ spread {s:.1e} (≤ 1e-10), v₁ − E_har u {v:.1e} (≤ 1e-10), \
             P^J − E_har {p:.1e} (≤ 1e-12), E_har form vs limit {t:.1e} (≤ 1e-6)"
        ),
    ))
}

/// `A_n = (1 + 1/n)A_∞`, `n = 1..=64`, on a random SPD `A_∞` with a restriction trace.
pub fn scaled_family(seed: u64) -> Result<FormSequence> {
    let mut r = instances::rng(seed, 1000);
    let n = 16;
    let a_inf = instances::random_spd(&mut r, n, 0.1);
    let m = instances::random_diagonal(&mut r, n, 0.5, 2.0);
    let idx = instances::random_subset(&mut r, n, 5);
    let trace = TraceMap::new(TraceKind::Restriction(idx), AuxSpace::identity(5), n)?;
    let terms = (1..=64).map(|k| &a_inf * (1.0 + 1.0 / k as f64)).collect();
    FormSequence::with_default_labels(terms, m, a_inf.clone(), a_inf, trace)
}

fn mosco_harness(suite: &Suite) -> Result<(bool, String)> {
    const C_MAX: f64 = 2.0;
    const SLOPE: f64 = -1.0;
    const SLOPE_TOL: f64 = 0.3;
    const FINAL: f64 = 1e-2;
    let seq = scaled_family(suite.seed)?;
    let a1 = mosco::verify_a1(&seq)?;
    let vectors = mosco::default_test_vectors(seq.limit().dim(), 20, suite.seed);
    let a3 = mosco::verify_a3(&seq, &vectors)?;
    let xs: Vec<f64> = seq.labels().iter().map(|&n| n as f64).collect();
    let a3_slope = linalg::loglog_slope(&xs, &a3.residuals);
    let run = mosco::trace_convergence_run(&seq, 1.0)?;
    // c is attained at n = 1 as the largest eigenvalue of a pencil; allow rounding in the last digits.
    let c_ok = a1.c_best <= C_MAX * (1.0 + 1e-12);
    let pass = c_ok
        && (a3_slope - SLOPE).abs() <= SLOPE_TOL
        && (run.distance_slope - SLOPE).abs() <= SLOPE_TOL
        && run.final_distance <= FINAL;
    Ok((
        pass,
        format!(
            "c = {:.6} (≤ 2), residual slope {a3_slope:.3}, distance slope {:.3} (−1 ± 0.3), final distance {:.2e} (≤ 1e-2)",
            a1.c_best, run.distance_slope, run.final_distance
        ),
    ))
}

fn identity_embedding(suite: &Suite) -> Result<(bool, String)> {
    const TOL: f64 = 1e-12;
    let rows = (0..20u64)
        .into_par_iter()
        .map(|i| {
            let mut r = instances::rng(suite.seed ^ 0x1d, i);
            let n = 4 + (i as usize % 29);
            let a = instances::random_spd(&mut r, n, 0.1);
            let m = instances::random_spd(&mut r, n, 0.5);
            let form = QuadraticForm::new(a, m)?;
            let j = TraceMap::new(
                TraceKind::Matrix(Mat::identity(n, n)),
                AuxSpace::new(form.mass_matrix().clone())?,
                n,
            )?;
            let mut worst = 0.0_f64;
            for lambda in [0.25, 1.0, 4.0] {
                let t = trace_form(&form, &j, lambda, TracePath::preferred(&j))?.t;
                let expected = form.form_matrix() + form.mass_matrix() * lambda;
                worst = worst.max(linalg::rel_diff(&t, &expected));
            }
            let t0 = trace_limit(&form, &j, &Schedule::default(), 1e-10)?.t0;
            worst = worst.max(linalg::rel_diff(&t0, form.form_matrix()));
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?;
    let worst = max_of(rows);
    Ok((worst <= TOL, format!("max relative deviation {worst:.2e} (≤ {TOL:.0e})")))
}

fn grid_demo() -> Result<(bool, String)> {
    let rep = demos::grid2d_report(33, 11, 11)?;
    Ok((
        rep.pass,
        format!(
            "interior rows {:.1e} (≤ 1e-10), rotation {:.1e} (≤ 1e-10), interface rows {:.3}",
            rep.computed, rep.rotation_deviation, rep.interface_deviation
        ),
    ))
}

/// Sign-flipped chain coefficients, for checking that criterion 4 can fail.
pub fn flipped_chain_oracle(lambda: f64) -> Result<ChainTraceCoefficients> {
    let c = analytic::chain_coefficients(lambda)?;
    Ok(ChainTraceCoefficients { c_off: -c.c_off, ..c })
}
