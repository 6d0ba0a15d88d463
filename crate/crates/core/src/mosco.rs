//! Convergence of trace forms along a sequence of forms on a fixed space.
//!
//! All members of a [`FormSequence`] live on the same `(ℝᴺ, M)` and share one
//! trace map. Mosco convergence of forms on a fixed finite-dimensional space
//! is equivalent to convergence of resolvents, so every distance below is the
//! resolvent gap [`mosco_distance`].
//!
//! Three conditions are checked for a sequence `Eⁿ → E^∞`:
//!
//! * comparability with a reference form, `c⁻¹E ≤ Eⁿ ≤ cE` ([`verify_a1`]);
//! * continuity of `J` from `(ℝᴺ, E₁)` into the auxiliary space ([`verify_a2`]);
//! * convergence of the traced resolvents `J(Eⁿ₁)⁻¹M → J(E^∞₁)⁻¹M` ([`verify_a3`]).

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::form::{QuadraticForm, TraceMap};
use crate::instances;
use crate::linalg::{self, Mat, Vector};
use crate::serde_mat;
use crate::trace::{check_dims, trace_form, trace_limit, Schedule, TracePath};

/// Pass threshold on the final resolvent distance of a run.
pub const TOL_RUN: f64 = 1e-3;
/// Relative eigenvalue threshold separating `ker A` from its complement.
pub const KERNEL_TOL: f64 = 1e-10;

/// Forms `Aₙ` with labels `n`, their limit `A_∞` and a reference form, sharing `M` and `J`.
#[derive(Debug, Clone)]
pub struct FormSequence {
    terms: Vec<QuadraticForm>,
    labels: Vec<usize>,
    limit: QuadraticForm,
    reference: QuadraticForm,
    trace: TraceMap,
}

impl FormSequence {
    pub fn new(
        terms: Vec<Mat>,
        labels: Vec<usize>,
        mass: Mat,
        limit: Mat,
        reference: Mat,
        trace: TraceMap,
    ) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidSequence("no terms".into()));
        }
        if labels.len() != terms.len() {
            return Err(Error::InvalidSequence(format!(
                "{} labels for {} terms",
                labels.len(),
                terms.len()
            )));
        }
        if labels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSequence("labels must increase strictly".into()));
        }
        let terms = terms
            .into_iter()
            .map(|a| QuadraticForm::new(a, mass.clone()))
            .collect::<Result<Vec<_>>>()?;
        let limit = QuadraticForm::new(limit, mass.clone())?;
        let reference = QuadraticForm::new(reference, mass)?;
        check_dims(&limit, &trace)?;
        Ok(Self {
            terms,
            labels,
            limit,
            reference,
            trace,
        })
    }

    /// Labels `1, 2, …, len`.
    pub fn with_default_labels(terms: Vec<Mat>, mass: Mat, limit: Mat, reference: Mat, trace: TraceMap) -> Result<Self> {
        let labels = (1..=terms.len()).collect();
        Self::new(terms, labels, mass, limit, reference, trace)
    }

    pub fn terms(&self) -> &[QuadraticForm] {
        &self.terms
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn limit(&self) -> &QuadraticForm {
        &self.limit
    }

    pub fn reference(&self) -> &QuadraticForm {
        &self.reference
    }

    pub fn trace(&self) -> &TraceMap {
        &self.trace
    }

    pub fn mass_matrix(&self) -> &Mat {
        self.limit.mass_matrix()
    }
}

/// Comparability constants of the terms with the reference form.
#[derive(Debug, Clone, Serialize)]
pub struct A1Report {
    /// Smallest `c` valid for every term; infinite when some term is not comparable.
    pub c_best: f64,
    pub finite: bool,
    /// Per-term constants (`null` for non-comparable terms).
    pub per_term: Vec<f64>,
}

/// Smallest `c` with `c⁻¹A ⪯ Aₙ ⪯ cA` for every term.
///
/// The pencil is reduced to the complement of `ker A`; a term that does not
/// vanish on `ker A`, or vanishes somewhere off it, gets `c = ∞`.
pub fn verify_a1(seq: &FormSequence) -> Result<A1Report> {
    let a = seq.reference.form_matrix();
    let eig = linalg::symmetrize(a).symmetric_eigen();
    let top = eig.eigenvalues.amax();
    let (mut range, mut null) = (Vec::new(), Vec::new());
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        if l > KERNEL_TOL * top && l > 0.0 {
            range.push(i);
        } else {
            null.push(i);
        }
    }
    let u = Mat::from_fn(a.nrows(), range.len(), |r, c| eig.eigenvectors[(r, range[c])]);
    let z = Mat::from_fn(a.nrows(), null.len(), |r, c| eig.eigenvectors[(r, null[c])]);
    let d = Mat::from_diagonal(&Vector::from_fn(range.len(), |i, _| eig.eigenvalues[range[i]]));

    let per_term = seq
        .terms
        .iter()
        .map(|t| {
            let an = t.form_matrix();
            let scale = linalg::max_abs(an).max(top).max(f64::MIN_POSITIVE);
            if !null.is_empty() && linalg::max_abs(&(an * &z)) > KERNEL_TOL * scale {
                return Ok(f64::INFINITY);
            }
            if range.is_empty() {
                return Ok(1.0);
            }
            let vals = linalg::generalized_eigenvalues(&(u.transpose() * an * &u), &d)?;
            let (lo, hi) = (vals[0], vals[vals.len() - 1]);
            if lo <= KERNEL_TOL * hi.max(1.0) {
                return Ok(f64::INFINITY);
            }
            Ok(hi.max(1.0 / lo))
        })
        .collect::<Result<Vec<f64>>>()?;
    let c_best = per_term.iter().fold(1.0_f64, |acc, &c| acc.max(c));
    Ok(A1Report {
        c_best,
        finite: c_best.is_finite(),
        per_term,
    })
}

/// Operator norm of `J: (ℝᴺ, A + M) → (ℝᵏ, W)`: `√λ_max(JᵀWJ, A + M)`.
pub fn verify_a2(form: &QuadraticForm, j: &TraceMap) -> Result<f64> {
    check_dims(form, j)?;
    let jm = j.matrix();
    let jwj = jm.transpose() * j.weight_matrix() * &jm;
    let vals = linalg::generalized_eigenvalues(&jwj, &(form.form_matrix() + form.mass_matrix()))?;
    Ok(vals[vals.len() - 1].max(0.0).sqrt())
}

#[derive(Debug, Clone, Serialize)]
pub struct A3Report {
    /// `max_u ‖J(Kⁿ − K^∞)u‖_W` per term, with `Kⁿ = (Aₙ + M)⁻¹M`.
    pub residuals: Vec<f64>,
    /// `max_v |Eⁿ[v] − E^∞[v]| / E^∞₁[v]` over `v = K^∞u`.
    pub energy_gaps: Vec<f64>,
}

/// Gaussian test vectors for [`verify_a3`].
pub fn default_test_vectors(dim: usize, count: usize, seed: u64) -> Vec<Vector> {
    let mut r = instances::rng(seed, 3);
    (0..count).map(|_| instances::gaussian_vector(&mut r, dim)).collect()
}

pub fn verify_a3(seq: &FormSequence, test_vectors: &[Vector]) -> Result<A3Report> {
    let m = seq.mass_matrix();
    let jm = seq.trace.matrix();
    let aux = seq.trace.aux();
    let resolve = |form: &QuadraticForm| -> Result<Vec<Vector>> {
        let chol = linalg::cholesky(&(form.form_matrix() + m), "A + M")?;
        Ok(test_vectors.iter().map(|u| chol.solve(&(m * u))).collect())
    };
    let limit_images = resolve(&seq.limit)?;
    let a_inf = seq.limit.form_matrix();
    let rows = seq
        .terms
        .par_iter()
        .map(|t| {
            let images = resolve(t)?;
            let mut residual = 0.0_f64;
            let mut gap = 0.0_f64;
            for (kn, kinf) in images.iter().zip(&limit_images) {
                residual = residual.max(aux.norm(&(&jm * (kn - kinf))));
                let e1 = kinf.dot(&((a_inf + m) * kinf));
                let diff = kinf.dot(&((t.form_matrix() - a_inf) * kinf));
                if e1 > 0.0 {
                    gap = gap.max(diff.abs() / e1);
                }
            }
            Ok((residual, gap))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(A3Report {
        residuals: rows.iter().map(|r| r.0).collect(),
        energy_gaps: rows.iter().map(|r| r.1).collect(),
    })
}

/// `‖(Ã₁ + 1)⁻¹ − (Ã₂ + 1)⁻¹‖₂` with `Ã = L⁻¹AL⁻ᵀ`, `M = LLᵀ`.
///
/// This is the operator-norm distance of the resolvents `(M⁻¹Aᵢ + 1)⁻¹` in the
/// `M` scalar product.
pub fn mosco_distance(a1: &Mat, a2: &Mat, m: &Mat) -> Result<f64> {
    let n = m.nrows();
    if a1.shape() != (n, n) || a2.shape() != (n, n) {
        return Err(Error::DimensionMismatch {
            what: "form matrices",
            expected: format!("{n}x{n}"),
            got: format!("{}x{} and {}x{}", a1.nrows(), a1.ncols(), a2.nrows(), a2.ncols()),
        });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let l = linalg::cholesky(m, "mass matrix")?.l();
    let reduce = |a: &Mat| -> Result<Mat> {
        let left = l
            .solve_lower_triangular(a)
            .ok_or(Error::Singular { context: "mass factor" })?;
        let full = l
            .solve_lower_triangular(&left.transpose())
            .ok_or(Error::Singular { context: "mass factor" })?;
        let shifted = linalg::symmetrize(&full) + Mat::identity(n, n);
        Ok(linalg::cholesky(&shifted, "reduced form + 1")?.inverse())
    };
    Ok(linalg::sym_norm(&(reduce(a1)? - reduce(a2)?)))
}

/// Diagnostics of the three conditions for a sequence.
#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub c_best: f64,
    pub a1_finite: bool,
    pub a2_bound: f64,
    pub a3_residuals: Vec<f64>,
    pub a3_energy_gaps: Vec<f64>,
    pub all_pass: bool,
}

/// Residuals count as converging when the second half is nonincreasing and ends below the first.
fn tail_converges(r: &[f64]) -> bool {
    let Some((&first, &last)) = r.first().zip(r.last()) else {
        return true;
    };
    let slack = 1e-12 * first.abs().max(1.0);
    let tail = &r[r.len() / 2..];
    tail.windows(2).all(|w| w[1] <= w[0] + slack) && (last <= first + slack)
}

pub fn check_assumptions(seq: &FormSequence, test_vectors: &[Vector]) -> Result<AssumptionReport> {
    let a1 = verify_a1(seq)?;
    let a2 = seq
        .terms
        .iter()
        .chain(std::iter::once(&seq.limit))
        .map(|f| verify_a2(f, &seq.trace))
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0_f64, f64::max);
    let a3 = verify_a3(seq, test_vectors)?;
    let all_pass = a1.finite && a2.is_finite() && tail_converges(&a3.residuals);
    Ok(AssumptionReport {
        c_best: a1.c_best,
        a1_finite: a1.finite,
        a2_bound: a2,
        a3_residuals: a3.residuals,
        a3_energy_gaps: a3.energy_gaps,
        all_pass,
    })
}

/// Result of following the trace forms `Tⁿ_λ` along a sequence.
#[derive(Debug, Clone, Serialize)]
pub struct MoscoReport {
    pub lambda: f64,
    pub labels: Vec<usize>,
    /// Resolvent gaps between `Tⁿ_λ` and `T^∞_λ` on `(ℝᵏ, W)`.
    pub distances: Vec<f64>,
    /// `‖Qₙ − Q_∞‖₂` with `Qₙ = WJ(Aₙ + λM)⁻¹JᵀW`.
    pub q_form_gaps: Vec<f64>,
    /// Least-squares slope of `log distance` against `log n`.
    pub distance_slope: f64,
    pub q_gap_slope: f64,
    pub final_distance: f64,
    pub tolerance: f64,
    /// `(λ_j, n_j)` pairs when a diagonal selection was run.
    pub diagonal: Vec<(f64, usize)>,
    pub assumptions: AssumptionReport,
    pub warnings: Vec<String>,
    /// Trace form matrices `Tⁿ_λ`, in label order.
    #[serde(skip)]
    pub trace_forms: Vec<Mat>,
    #[serde(rename = "T_limit", serialize_with = "serde_mat::rows")]
    pub limit_trace_form: Mat,
    pub pass: bool,
}

fn q_form(form: &QuadraticForm, j: &TraceMap, lambda: f64) -> Result<Mat> {
    let jm = j.matrix();
    let w = j.weight_matrix();
    let b = form.form_matrix() + form.mass_matrix() * lambda;
    let chol = linalg::cholesky(&b, "A + λM")?;
    let jtw = jm.transpose() * w;
    Ok(linalg::symmetrize(&(jtw.transpose() * chol.solve(&jtw))))
}

/// Computes `Tⁿ_λ`, their resolvent distances to `T^∞_λ` and the `Qₙ` gaps.
pub fn trace_convergence_run(seq: &FormSequence, lambda: f64) -> Result<MoscoReport> {
    let j = &seq.trace;
    let path = TracePath::preferred(j);
    let w = j.weight_matrix();
    let t_inf = trace_form(&seq.limit, j, lambda, path)?.t;
    let q_inf = q_form(&seq.limit, j, lambda)?;
    let rows = seq
        .terms
        .par_iter()
        .map(|f| {
            let t = trace_form(f, j, lambda, path)?.t;
            let d = mosco_distance(&t, &t_inf, w)?;
            let q = linalg::sym_norm(&(q_form(f, j, lambda)? - &q_inf));
            Ok((t, d, q))
        })
        .collect::<Result<Vec<_>>>()?;
    let distances: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let q_form_gaps: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let xs: Vec<f64> = seq.labels.iter().map(|&n| n as f64).collect();

    let vectors = default_test_vectors(seq.limit.dim(), 20, instances::DEFAULT_SEED);
    let assumptions = check_assumptions(seq, &vectors)?;
    let mut warnings = Vec::new();
    if !assumptions.a1_finite {
        warnings.push("comparability with the reference form fails (c = inf)".to_string());
    }
    if !assumptions.a2_bound.is_finite() {
        warnings.push("trace map is not bounded on the shifted energy space".to_string());
    }
    if !tail_converges(&assumptions.a3_residuals) {
        warnings.push("traced resolvents do not settle along the sequence".to_string());
    }
    let final_distance = *distances.last().expect("nonempty sequence");
    Ok(MoscoReport {
        lambda,
        labels: seq.labels.clone(),
        distance_slope: linalg::loglog_slope(&xs, &distances),
        q_gap_slope: linalg::loglog_slope(&xs, &q_form_gaps),
        final_distance,
        tolerance: TOL_RUN,
        distances,
        q_form_gaps,
        diagonal: Vec::new(),
        assumptions,
        warnings,
        trace_forms: rows.into_iter().map(|r| r.0).collect(),
        limit_trace_form: t_inf,
        pass: final_distance <= TOL_RUN,
    })
}

/// One step `(λ_j, n_j)` of a diagonal selection.
#[derive(Debug, Clone, Serialize)]
pub struct DiagonalStep {
    pub lambda: f64,
    pub eps: f64,
    /// Label `n_j` of the chosen term.
    pub n: usize,
    /// Resolvent distance of `T^{n_j}_{λ_j}` to `T^∞_{λ_j}`.
    pub distance: f64,
    /// Resolvent distance of `T^{n_j}_{λ_j}` to the limit trace form of `E^∞`.
    pub limit_distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DiagonalReport {
    pub steps: Vec<DiagonalStep>,
    /// Whether the distances to the limit trace form decrease along the steps.
    pub decreasing: bool,
}

/// Picks, for each `j`, the first term after the previous choice whose trace form at
/// `λ_j` is within `ε_j` of `T^∞_{λ_j}`.
pub fn diagonal_select(seq: &FormSequence, lambdas: &Schedule, eps: &[f64]) -> Result<DiagonalReport> {
    if eps.len() != lambdas.values().len() {
        return Err(Error::InvalidSchedule(format!(
            "{} tolerances for {} shifts",
            eps.len(),
            lambdas.values().len()
        )));
    }
    let j = &seq.trace;
    let w = j.weight_matrix();
    let path = TracePath::preferred(j);
    let t0_inf = trace_limit(&seq.limit, j, &Schedule::default(), 1e-10)?.t0;
    let mut steps: Vec<DiagonalStep> = Vec::new();
    let mut next = 0usize;
    for (step, (&lambda, &e)) in lambdas.values().iter().zip(eps).enumerate() {
        let t_inf = trace_form(&seq.limit, j, lambda, path)?.t;
        let mut found = None;
        for idx in next..seq.terms.len() {
            let t = trace_form(&seq.terms[idx], j, lambda, path)?.t;
            let d = mosco_distance(&t, &t_inf, w)?;
            if d <= e {
                found = Some((idx, t, d));
                break;
            }
        }
        let (idx, t, d) = found.ok_or(Error::ScheduleExhausted { step, lambda, eps: e })?;
        steps.push(DiagonalStep {
            lambda,
            eps: e,
            n: seq.labels[idx],
            distance: d,
            limit_distance: mosco_distance(&t, &t0_inf, w)?,
        });
        next = idx + 1;
    }
    let decreasing = steps
        .windows(2)
        .all(|p| p[1].limit_distance <= p[0].limit_distance + 1e-12);
    Ok(DiagonalReport { steps, decreasing })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd3() -> Mat {
        Mat::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0])
    }

    #[test]
    fn distance_trivial_cases() {
        let m = Mat::identity(3, 3);
        assert_eq!(mosco_distance(&spd3(), &spd3(), &m).unwrap(), 0.0);
        let d = mosco_distance(&Mat::zeros(3, 3), &m, &m).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn constant_sequence() {
        let j = TraceMap::restriction(vec![0, 2], 3).unwrap();
        let seq = FormSequence::with_default_labels(vec![spd3(); 4], Mat::identity(3, 3), spd3(), spd3(), j).unwrap();
        let a1 = verify_a1(&seq).unwrap();
        assert!((a1.c_best - 1.0).abs() < 1e-12);
        let a3 = verify_a3(&seq, &default_test_vectors(3, 5, 1)).unwrap();
        assert!(a3.residuals.iter().all(|r| *r == 0.0));
        let run = trace_convergence_run(&seq, 1.0).unwrap();
        assert!(run.distances.iter().all(|d| *d == 0.0));
        assert!(run.pass);
        let sched = Schedule::geometric(1.0, 0.5, 3).unwrap();
        let diag = diagonal_select(&seq, &sched, &[1.0, 0.5, 0.25, 0.125]).unwrap();
        let ns: Vec<usize> = diag.steps.iter().map(|s| s.n).collect();
        assert_eq!(ns, vec![1, 2, 3, 4]);
    }

    #[test]
    fn scaled_sequence_constant() {
        let j = TraceMap::restriction(vec![1], 3).unwrap();
        let terms: Vec<Mat> = (1..=5).map(|n| spd3() * (1.0 + 1.0 / n as f64)).collect();
        let seq = FormSequence::with_default_labels(terms, Mat::identity(3, 3), spd3(), spd3(), j).unwrap();
        let a1 = verify_a1(&seq).unwrap();
        assert!((a1.per_term[0] - 2.0).abs() < 1e-12);
        assert!((a1.c_best - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_mismatch_gives_infinite_constant() {
        let lap = Mat::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let j = TraceMap::restriction(vec![0], 2).unwrap();
        let seq = FormSequence::with_default_labels(vec![Mat::identity(2, 2)], Mat::identity(2, 2), lap.clone(), lap, j)
            .unwrap();
        let a1 = verify_a1(&seq).unwrap();
        assert!(!a1.finite);
        assert!(a1.c_best.is_infinite());
    }

    #[test]
    fn identity_trace_norm_bound() {
        let form = QuadraticForm::with_identity_mass(Mat::zeros(3, 3)).unwrap();
        let j = TraceMap::restriction(vec![0, 1, 2], 3).unwrap();
        assert!((verify_a2(&form, &j).unwrap() - 1.0).abs() < 1e-14);
        let form = QuadraticForm::with_identity_mass(spd3()).unwrap();
        assert!(verify_a2(&form, &j).unwrap() < 1.0);
    }
}
