//! Markov (Dirichlet-form) checks for form matrices and trace operators.
//!
//! A symmetric PSD matrix on `ℝᵏ` with a diagonal scalar product is a
//! Dirichlet form when the unit contraction `u ↦ (0 ∨ u) ∧ 1` does not
//! increase its energy. Equivalently, `α(Ȟ + α)⁻¹` maps `[0, 1]ᵏ` into itself
//! for every `α > 0`.

use rand::Rng;
use rand_distr::{Cauchy, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::form::{QuadraticForm, TraceMap};
use crate::instances;
use crate::linalg::{self, Mat, Vector};
use crate::trace::{check_dims, operator_from_form, resolvent, trace_form, trace_limit, Schedule, TracePath};

/// Off-diagonal entries above `OFFDIAG_TOL · ‖A‖` fail the structural test.
pub const OFFDIAG_TOL: f64 = 1e-12;
/// Row sums below `−ROWSUM_TOL · ‖A‖` fail the structural test.
pub const ROWSUM_TOL: f64 = 1e-10;
/// Slack of the contraction test, scaled by `1 + ‖A‖‖u‖²`.
pub const CONTRACTION_TOL: f64 = 1e-10;
/// Largest excursion of `α(Ȟ + α)⁻¹ψ` outside `[0, 1]` accepted.
pub const BOX_TOL: f64 = 1e-8;
/// Vertices of `{0,1}ᵏ` are enumerated up to this dimension, sampled above it.
pub const MAX_ENUMERATED_DIM: usize = 10;
/// Number of sampled vertices for `k` above [`MAX_ENUMERATED_DIM`].
pub const MAX_VERTICES: usize = 1024;
/// Pass threshold of [`potential_identity_check`].
pub const POTENTIAL_TOL: f64 = 1e-8;

/// `(0 ∨ u) ∧ 1`, componentwise.
pub fn unit_contraction(u: &Vector) -> Vector {
    u.map(|x| x.clamp(0.0, 1.0))
}

/// M-matrix-type sufficient condition for the Markov property.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StructuralReport {
    pub offdiag_max: f64,
    pub rowsum_min: f64,
    pub pass: bool,
}

pub fn structural_check(a: &Mat) -> StructuralReport {
    let n = a.nrows();
    let norm = linalg::max_abs(a);
    let mut offdiag_max = f64::NEG_INFINITY;
    let mut rowsum_min = f64::INFINITY;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += a[(i, j)];
            if i != j {
                offdiag_max = offdiag_max.max(a[(i, j)]);
            }
        }
        rowsum_min = rowsum_min.min(row);
    }
    if n < 2 {
        offdiag_max = 0.0;
    }
    if n == 0 {
        rowsum_min = 0.0;
    }
    StructuralReport {
        offdiag_max,
        rowsum_min,
        pass: offdiag_max <= OFFDIAG_TOL * norm && rowsum_min >= -ROWSUM_TOL * norm,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DirichletFormReport {
    pub structural: StructuralReport,
    /// Largest `E[clamp u] − E[u]` seen, before subtracting the slack.
    pub max_contraction_increase: f64,
    pub sampling_pass: bool,
    /// A sample whose energy increased under the contraction, if any.
    #[serde(serialize_with = "crate::serde_mat::opt_vector")]
    pub witness: Option<Vector>,
    pub pass: bool,
}

/// Heavy-tailed sample: a random vertex of the unit box plus Cauchy noise.
fn heavy_tailed(rng: &mut impl Rng, n: usize) -> Vector {
    let cauchy = Cauchy::new(0.0, 0.5).expect("valid scale");
    Vector::from_fn(n, |_, _| {
        let vertex = if rng.random::<bool>() { 1.0 } else { 0.0 };
        vertex + cauchy.sample(rng)
    })
}

/// Structural and sampling tests of the Markov property of `uᵀAu` (diagonal mass only).
pub fn dirichlet_form_check(a: &Mat, mass: &Mat, samples: usize, seed: u64) -> Result<DirichletFormReport> {
    if !linalg::is_diagonal(mass) {
        return Err(Error::NonDiagonalMass);
    }
    let structural = structural_check(a);
    let norm = linalg::sym_norm(a);
    let n = a.nrows();
    let draws: Vec<Vector> = {
        let mut r = instances::rng(seed, 0);
        (0..samples).map(|_| heavy_tailed(&mut r, n)).collect()
    };
    let results: Vec<(f64, bool)> = draws
        .par_iter()
        .map(|u| {
            let c = unit_contraction(u);
            let inc = c.dot(&(a * &c)) - u.dot(&(a * u));
            (inc, inc > CONTRACTION_TOL * (1.0 + norm * u.norm_squared()))
        })
        .collect();
    let mut max_inc = f64::NEG_INFINITY;
    let mut witness = None;
    for (u, (inc, violated)) in draws.iter().zip(&results) {
        max_inc = max_inc.max(*inc);
        if *violated && witness.is_none() {
            witness = Some(u.clone());
        }
    }
    let sampling_pass = witness.is_none();
    Ok(DirichletFormReport {
        structural,
        max_contraction_increase: if samples == 0 { 0.0 } else { max_inc },
        sampling_pass,
        witness,
        pass: structural.pass && sampling_pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MarkovReport {
    pub alpha_list: Vec<f64>,
    /// Worst excursion of `α(Ȟ + α)⁻¹ψ` outside `[0, 1]`, over all `α` and samples.
    pub max_box_violation: f64,
    pub structural: StructuralReport,
    pub samples_tested: usize,
    pub pass: bool,
}

/// Test vectors: `samples` uniform draws from the unit box plus its vertices.
fn box_samples(k: usize, samples: usize, seed: u64) -> Vec<Vector> {
    let mut r = instances::rng(seed, 1);
    let mut out: Vec<Vector> = (0..samples).map(|_| instances::unit_box_vector(&mut r, k)).collect();
    if k <= MAX_ENUMERATED_DIM {
        for bits in 0..(1usize << k) {
            out.push(Vector::from_fn(k, |i, _| ((bits >> i) & 1) as f64));
        }
    } else {
        for _ in 0..MAX_VERTICES {
            out.push(Vector::from_fn(k, |_, _| if r.random::<bool>() { 1.0 } else { 0.0 }));
        }
    }
    out
}

/// Checks that `α(W⁻¹T + α)⁻¹` maps `[0, 1]ᵏ` into itself for each `α`.
pub fn markov_resolvent_check(t: &Mat, w: &Mat, alphas: &[f64], samples: usize, seed: u64) -> Result<MarkovReport> {
    if !linalg::is_diagonal(w) {
        return Err(Error::NonDiagonalWeight);
    }
    let op = operator_from_form(t, w)?;
    let psis = box_samples(t.nrows(), samples, seed);
    let mut worst = 0.0_f64;
    for &alpha in alphas {
        let r = resolvent(&op, alpha)? * alpha;
        let v = psis
            .par_iter()
            .map(|psi| {
                (&r * psi)
                    .iter()
                    .fold(0.0_f64, |acc, &x| acc.max(-x).max(x - 1.0))
            })
            .reduce(|| 0.0, f64::max);
        worst = worst.max(v);
    }
    Ok(MarkovReport {
        alpha_list: alphas.to_vec(),
        max_box_violation: worst,
        structural: structural_check(t),
        samples_tested: psis.len(),
        pass: worst <= BOX_TOL,
    })
}

/// Markov checks of a form and of its trace.
#[derive(Debug, Clone, Serialize)]
pub struct DirichletCheckReport {
    pub lambda: f64,
    /// Contraction test of `A` itself.
    pub form: DirichletFormReport,
    /// Contraction test of `T_λ`.
    pub trace: DirichletFormReport,
    /// Resolvent test of `T_λ`.
    pub resolvent: MarkovReport,
    /// Resolvent test of the limit `T0`.
    pub limit_resolvent: MarkovReport,
    pub pass: bool,
}

/// Structural, sampling and resolvent tests of `A`, `T_λ` and `T0` (diagonal `M` and `W`).
pub fn dirichlet_check(
    form: &QuadraticForm,
    j: &TraceMap,
    lambda: f64,
    alphas: &[f64],
    samples: usize,
    seed: u64,
) -> Result<DirichletCheckReport> {
    check_dims(form, j)?;
    let w = j.weight_matrix();
    if !linalg::is_diagonal(w) {
        return Err(Error::NonDiagonalWeight);
    }
    let form_report = dirichlet_form_check(form.form_matrix(), form.mass_matrix(), samples, seed)?;
    let t = trace_form(form, j, lambda, TracePath::preferred(j))?;
    let trace_report = dirichlet_form_check(&t.t, w, samples, seed)?;
    let resolvent_report = markov_resolvent_check(&t.t, w, alphas, samples, seed)?;
    let limit = trace_limit(form, j, &Schedule::default(), LIMIT_TOL)?;
    let limit_report = markov_resolvent_check(&limit.t0, w, alphas, samples, seed)?;
    Ok(DirichletCheckReport {
        lambda,
        pass: form_report.pass && trace_report.pass && resolvent_report.pass && limit_report.pass,
        form: form_report,
        trace: trace_report,
        resolvent: resolvent_report,
        limit_resolvent: limit_report,
    })
}

/// Convergence tolerance of the limit form used by [`dirichlet_check`].
pub const LIMIT_TOL: f64 = 1e-10;

/// `U₁ = (A + M)⁻¹JᵀWψ`, so that `vᵀ(A + M)U₁ = (Jv)ᵀWψ` for all `v`.
pub fn potential_u1(form: &QuadraticForm, j: &TraceMap, psi: &Vector) -> Result<Vector> {
    check_dims(form, j)?;
    let b = form.form_matrix() + form.mass_matrix();
    let chol = linalg::cholesky(&b, "A + M")?;
    Ok(chol.solve(&(j.matrix().transpose() * (j.weight_matrix() * psi))))
}

/// Largest `|e_iᵀ(A + M)U₁ − (Je_i)ᵀWψ|` over the coordinate basis.
pub fn potential_relation_residual(form: &QuadraticForm, j: &TraceMap, psi: &Vector, u1: &Vector) -> f64 {
    let lhs = (form.form_matrix() + form.mass_matrix()) * u1;
    let rhs = j.matrix().transpose() * (j.weight_matrix() * psi);
    (lhs - rhs).amax()
}

#[derive(Debug, Clone, Serialize)]
pub struct PotentialReport {
    pub max_residual: f64,
    pub pass: bool,
}

/// Compares `T₁⁻¹Wψ` (saddle-point route) with `J(A + M)⁻¹JᵀWψ` (Cholesky route).
pub fn potential_identity_check(form: &QuadraticForm, j: &TraceMap, samples: usize, seed: u64) -> Result<PotentialReport> {
    let t1 = trace_form(form, j, 1.0, TracePath::Kkt)?;
    let lu = t1.t.clone().full_piv_lu();
    let w = j.weight_matrix();
    let jm = j.matrix();
    let chol = linalg::cholesky(&(form.form_matrix() + form.mass_matrix()), "A + M")?;
    let mut r = instances::rng(seed, 2);
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let psi = instances::gaussian_vector(&mut r, j.aux_dim());
        let wpsi = w * &psi;
        let lhs = lu.solve(&wpsi).ok_or(Error::Singular { context: "T₁" })?;
        let rhs = &jm * chol.solve(&(jm.transpose() * &wpsi));
        let scale = lhs.norm().max(rhs.norm()).max(f64::MIN_POSITIVE);
        worst = worst.max((lhs - rhs).norm() / scale);
    }
    Ok(PotentialReport {
        max_residual: worst,
        pass: worst <= POTENTIAL_TOL,
    })
}
