//! Shifted trace forms `Ě_λ`, their operators, and the monotone limit `λ ↓ 0`.
//!
//! For `λ > 0` the trace form on the auxiliary space is
//!
//! ```text
//! Ě_λ[Ju] = E_λ[P_λ u] = min { E_λ[v] : Jv = Ju },
//! ```
//!
//! where `P_λ` is the `E_λ`-orthogonal projection onto `(ker J)^⊥`. Its matrix
//! `T_λ` is computed by three independent routes:
//!
//! * **Schur**: for coordinate restrictions, `T = B_ΓΓ − B_ΓI B_II⁻¹ B_IΓ` with `B = A + λM`;
//! * **KKT**: the equality-constrained minimization, one saddle-point solve per
//!   auxiliary basis vector;
//! * **adjoint**: `Ȟ_λ = (J_λ J_λ*)⁻¹` with `J_λ* = B⁻¹JᵀW`, then `T = W Ȟ_λ`.
//!
//! The associated operator is `Ȟ_λ = W⁻¹T_λ`, self-adjoint for `ψᵀWφ`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, Dyn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::form::{shift, QuadraticForm, ShiftedForm, TraceKind, TraceMap};
use crate::linalg::{self, Mat, Vector};
use crate::serde_mat;

/// Relative agreement demanded between the three trace routes.
pub const PATH_AGREEMENT_TOL: f64 = 1e-8;
/// Relative tolerance of the exact-limit cross-check.
pub const LIMIT_CROSS_CHECK_TOL: f64 = 1e-6;
/// Pass threshold of [`shift_consistency_check`].
pub const SHIFT_CONSISTENCY_TOL: f64 = 1e-6;

/// Orthonormal basis `K` of `ker J`.
#[derive(Debug, Clone)]
pub struct KernelBasis {
    basis: Mat,
    coordinate: bool,
}

impl KernelBasis {
    pub fn matrix(&self) -> &Mat {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Whether the basis consists of unit coordinate vectors.
    pub fn is_coordinate(&self) -> bool {
        self.coordinate
    }
}

/// Basis of `ker J`. For restrictions it is the injection of the complementary coordinates.
pub fn kernel_basis(j: &TraceMap) -> KernelBasis {
    let n = j.ground_dim();
    match j.kind() {
        TraceKind::Restriction(_) => {
            let rest = j.complement_indices().expect("restriction");
            let mut k = Mat::zeros(n, rest.len());
            for (c, &i) in rest.iter().enumerate() {
                k[(i, c)] = 1.0;
            }
            KernelBasis {
                basis: k,
                coordinate: true,
            }
        }
        TraceKind::Matrix(m) => KernelBasis {
            basis: linalg::null_space_basis(m, n - m.nrows()),
            coordinate: false,
        },
    }
}

/// Cholesky factor of a symmetric block, rejected when numerically singular.
pub(crate) fn factor_spd(m: &Mat) -> Option<Cholesky<f64, Dyn>> {
    let chol = Cholesky::new(linalg::symmetrize(m))?;
    let diag = chol.l_dirty().diagonal();
    linalg::pivots_healthy(diag.iter().map(|d| d * d)).then_some(chol)
}

/// The `E_λ`-orthogonal projection `P_λ` onto `(ker J)^⊥`.
#[derive(Debug, Clone)]
pub struct Projection {
    b: Mat,
    k: Mat,
    block: Option<Cholesky<f64, Dyn>>,
}

impl Projection {
    pub fn new(shifted: &ShiftedForm, kernel: &KernelBasis) -> Result<Self> {
        let k = kernel.matrix().clone();
        let b = shifted.matrix().clone();
        let block = if k.ncols() == 0 {
            None
        } else {
            let ktbk = k.transpose() * &b * &k;
            Some(factor_spd(&ktbk).ok_or(Error::SingularKernelBlock)?)
        };
        Ok(Self { b, k, block })
    }

    /// `P_λu = u − K (KᵀBK)⁻¹ KᵀBu`.
    pub fn apply(&self, u: &Vector) -> Vector {
        match &self.block {
            None => u.clone(),
            Some(chol) => {
                let rhs = self.k.transpose() * (&self.b * u);
                u - &self.k * chol.solve(&rhs)
            }
        }
    }

    /// `P_λ` as a dense `N × N` matrix.
    pub fn matrix(&self) -> Mat {
        let n = self.b.nrows();
        match &self.block {
            None => Mat::identity(n, n),
            Some(chol) => {
                let rhs = self.k.transpose() * &self.b;
                Mat::identity(n, n) - &self.k * chol.solve(&rhs)
            }
        }
    }
}

pub fn projection_apply(shifted: &ShiftedForm, kernel: &KernelBasis, u: &Vector) -> Result<Vector> {
    Ok(Projection::new(shifted, kernel)?.apply(u))
}

/// Factored saddle-point matrix `[[B, Jᵀ], [J, 0]]`.
struct SaddlePoint {
    lu: nalgebra::linalg::FullPivLU<f64, Dyn, Dyn>,
    n: usize,
    k: usize,
}

impl SaddlePoint {
    fn new(b: &Mat, j: &Mat) -> Result<Self> {
        let (k, n) = j.shape();
        let mut kkt = Mat::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(b);
        kkt.view_mut((0, n), (n, k)).copy_from(&j.transpose());
        kkt.view_mut((n, 0), (k, n)).copy_from(j);
        let lu = kkt.full_piv_lu();
        if !linalg::pivots_healthy(lu.u().diagonal().iter().copied()) {
            return Err(Error::SaddleSingular);
        }
        Ok(Self { lu, n, k })
    }

    /// Solves for right-hand sides `[0; Ψ]`, returning `(V, η)`.
    fn solve(&self, psi: &Mat) -> Result<(Mat, Mat)> {
        let cols = psi.ncols();
        let mut rhs = Mat::zeros(self.n + self.k, cols);
        rhs.view_mut((self.n, 0), (self.k, cols)).copy_from(psi);
        let sol = self.lu.solve(&rhs).ok_or(Error::SaddleSingular)?;
        Ok((
            sol.rows(0, self.n).into_owned(),
            sol.rows(self.n, self.k).into_owned(),
        ))
    }
}

/// Minimizer of the constrained quadratic problem `min vᵀBv` subject to `Jv = ψ`.
#[derive(Debug, Clone, Serialize)]
pub struct DirichletMinimum {
    pub value: f64,
    #[serde(serialize_with = "serde_mat::vector")]
    pub minimizer: Vector,
    /// `‖Jv − ψ‖` of the returned minimizer.
    pub constraint_residual: f64,
}

/// Solves `min E_λ[v]` subject to `Jv = ψ` through the saddle-point system.
pub fn dirichlet_minimize(shifted: &ShiftedForm, j: &TraceMap, psi: &Vector) -> Result<DirichletMinimum> {
    if psi.len() != j.aux_dim() {
        return Err(Error::DimensionMismatch {
            what: "auxiliary vector",
            expected: j.aux_dim().to_string(),
            got: psi.len().to_string(),
        });
    }
    let saddle = SaddlePoint::new(shifted.matrix(), &j.matrix())?;
    let (v, _) = saddle.solve(&Mat::from_column_slice(psi.len(), 1, psi.as_slice()))?;
    let v = v.column(0).into_owned();
    Ok(DirichletMinimum {
        value: shifted.energy(&v),
        constraint_residual: (j.apply(&v) - psi).norm(),
        minimizer: v,
    })
}

/// Route used to compute a trace form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TracePath {
    Schur,
    Kkt,
    Adjoint,
}

impl TracePath {
    /// Schur for restrictions, KKT otherwise.
    pub fn preferred(j: &TraceMap) -> Self {
        if j.restriction_indices().is_some() {
            TracePath::Schur
        } else {
            TracePath::Kkt
        }
    }
}

impl FromStr for TracePath {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "schur" => Ok(TracePath::Schur),
            "kkt" => Ok(TracePath::Kkt),
            "adjoint" => Ok(TracePath::Adjoint),
            other => Err(format!("unknown path `{other}` (expected schur, kkt or adjoint)")),
        }
    }
}

impl fmt::Display for TracePath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TracePath::Schur => "schur",
            TracePath::Kkt => "kkt",
            TracePath::Adjoint => "adjoint",
        })
    }
}

/// Consistency residuals recorded while assembling a trace form.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceResiduals {
    /// Relative asymmetry of `T` before symmetrization.
    pub symmetry: f64,
    /// Relative asymmetry of `W Ȟ` (W-self-adjointness of the operator).
    pub w_self_adjoint: f64,
}

/// Matrix `T_λ` of `Ě_λ` together with `Ȟ_λ = W⁻¹T_λ`.
#[derive(Debug, Clone, Serialize)]
pub struct TraceForm {
    pub lambda: f64,
    #[serde(rename = "T", serialize_with = "serde_mat::rows")]
    pub t: Mat,
    #[serde(serialize_with = "serde_mat::rows")]
    pub operator: Mat,
    pub path: TracePath,
    pub residuals: TraceResiduals,
}

impl TraceForm {
    /// `Ě_λ[ψ] = ψᵀTψ`.
    pub fn value(&self, psi: &Vector) -> f64 {
        psi.dot(&(&self.t * psi))
    }

    /// `(Ȟ_λ + α)⁻¹`.
    pub fn resolvent(&self, alpha: f64) -> Result<Mat> {
        resolvent(&self.operator, alpha)
    }
}

fn relative_asymmetry(m: &Mat) -> f64 {
    linalg::asymmetry(m) / linalg::max_abs(m).max(f64::MIN_POSITIVE)
}

/// `W⁻¹T`.
pub(crate) fn operator_from_form(t: &Mat, w: &Mat) -> Result<Mat> {
    let chol = linalg::cholesky(w, "weight matrix W")?;
    Ok(chol.solve(t))
}

/// Schur complement of `b` onto `gamma` (the complement `rest` is eliminated by Cholesky).
pub(crate) fn schur_complement(b: &Mat, gamma: &[usize], rest: &[usize]) -> Result<Mat> {
    let b_gg = linalg::select_block(b, gamma, gamma);
    if rest.is_empty() {
        return Ok(b_gg);
    }
    let b_gi = linalg::select_block(b, gamma, rest);
    let b_ii = linalg::select_block(b, rest, rest);
    let chol = factor_spd(&b_ii).ok_or(Error::SingularKernelBlock)?;
    let x = chol.solve(&b_gi.transpose());
    Ok(b_gg - b_gi * x)
}

fn trace_matrix(shifted: &ShiftedForm, j: &TraceMap, path: TracePath) -> Result<(Mat, Mat)> {
    let w = j.weight_matrix();
    match path {
        TracePath::Schur => {
            let gamma = j.restriction_indices().ok_or(Error::PathUnavailable)?;
            let rest = j.complement_indices().expect("restriction");
            let t = schur_complement(shifted.matrix(), gamma, &rest)?;
            let op = operator_from_form(&t, w)?;
            Ok((t, op))
        }
        TracePath::Kkt => {
            let k = j.aux_dim();
            let saddle = SaddlePoint::new(shifted.matrix(), &j.matrix())?;
            // Column i: minimizer with Jv = e_i; the multiplier is η = −T e_i.
            let (_, eta) = saddle.solve(&Mat::identity(k, k))?;
            let t = -eta;
            let op = operator_from_form(&t, w)?;
            Ok((t, op))
        }
        TracePath::Adjoint => {
            let jm = j.matrix();
            let chol = linalg::cholesky(shifted.matrix(), "shifted form A + λM")?;
            // J_λ* = B⁻¹JᵀW; J_λ J_λ* = J B⁻¹ Jᵀ W.
            let adjoint = chol.solve(&(jm.transpose() * w));
            let jjstar = &jm * adjoint;
            let op = linalg::inverse(&jjstar, "J_λ J_λ*")?;
            let t = w * &op;
            Ok((t, op))
        }
    }
}

/// Computes `T_λ` and `Ȟ_λ` along the requested route. Needs `λ > 0`.
pub fn trace_form(form: &QuadraticForm, j: &TraceMap, lambda: f64, path: TracePath) -> Result<TraceForm> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidLambda {
            lambda,
            requirement: "positive (use trace_limit for λ = 0)",
        });
    }
    check_dims(form, j)?;
    let shifted = shift(form, lambda)?;
    let (t_raw, operator) = trace_matrix(&shifted, j, path)?;
    let symmetry = relative_asymmetry(&t_raw);
    let w_self_adjoint = relative_asymmetry(&(j.weight_matrix() * &operator));
    Ok(TraceForm {
        lambda,
        t: linalg::symmetrize(&t_raw),
        operator,
        path,
        residuals: TraceResiduals {
            symmetry,
            w_self_adjoint,
        },
    })
}

pub(crate) fn check_dims(form: &QuadraticForm, j: &TraceMap) -> Result<()> {
    if form.dim() != j.ground_dim() {
        return Err(Error::DimensionMismatch {
            what: "trace map ground dimension",
            expected: form.dim().to_string(),
            got: j.ground_dim().to_string(),
        });
    }
    Ok(())
}

/// `(Ȟ + αI)⁻¹`.
pub fn resolvent(operator: &Mat, alpha: f64) -> Result<Mat> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidLambda {
            lambda: alpha,
            requirement: "positive",
        });
    }
    let k = operator.nrows();
    linalg::inverse(&(operator + Mat::identity(k, k) * alpha), "Ȟ + α")
}

/// Strictly decreasing positive shift parameters.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule(Vec<f64>);

impl Schedule {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSchedule("empty schedule".into()));
        }
        if values.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidSchedule("entries must be positive and finite".into()));
        }
        if values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidSchedule("entries must decrease strictly".into()));
        }
        Ok(Self(values))
    }

    /// `start · ratioʲ` for `j = 0..=steps`.
    pub fn geometric(start: f64, ratio: f64, steps: usize) -> Result<Self> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::InvalidSchedule(format!("ratio {ratio} must lie in (0, 1)")));
        }
        Self::new((0..=steps).map(|j| start * ratio.powi(j as i32)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl Default for Schedule {
    /// `λ_j = 2⁻ʲ`, `j = 0..=40`.
    fn default() -> Self {
        Self::geometric(1.0, 0.5, 40).expect("valid default")
    }
}

impl FromStr for Schedule {
    type Err = String;

    /// `geometric:<start>:<ratio>:<steps>` or a comma-separated list.
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if let Some(rest) = s.strip_prefix("geometric:") {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 3 {
                return Err("expected geometric:<start>:<ratio>:<steps>".into());
            }
            let start: f64 = parts[0].parse().map_err(|e| format!("start: {e}"))?;
            let ratio: f64 = parts[1].parse().map_err(|e| format!("ratio: {e}"))?;
            let steps: usize = parts[2].parse().map_err(|e| format!("steps: {e}"))?;
            Schedule::geometric(start, ratio, steps).map_err(|e| e.to_string())
        } else {
            let values = s
                .split(',')
                .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Schedule::new(values).map_err(|e| e.to_string())
        }
    }
}

/// One evaluated point of the `λ ↓ 0` schedule.
#[derive(Debug, Clone, Serialize)]
pub struct ScheduleEntry {
    pub lambda: f64,
    /// `‖T_λ − T_previous‖_F`; absent for the first entry.
    pub decrement: Option<f64>,
    #[serde(skip)]
    pub t: Mat,
}

/// The limit form `Ě = lim Ě_λ` and the diagnostics of its computation.
#[derive(Debug, Clone, Serialize)]
pub struct TraceLimitResult {
    /// Limit form matrix: the exact generalized Schur complement when available,
    /// otherwise the last schedule iterate.
    #[serde(rename = "T0", serialize_with = "serde_mat::rows")]
    pub t0: Mat,
    /// `Ȟ = W⁻¹T0`.
    #[serde(serialize_with = "serde_mat::rows")]
    pub operator: Mat,
    /// Last evaluated `T_λ` of the schedule.
    #[serde(serialize_with = "serde_mat::rows")]
    pub iterate: Mat,
    pub schedule: Vec<ScheduleEntry>,
    pub converged: bool,
    /// Whether `KᵀAK` was nonsingular so the exact limit could be formed.
    pub exact_available: bool,
    /// Relative distance between the last iterate and the exact limit.
    pub exact_deviation: Option<f64>,
    pub path: TracePath,
}

impl TraceLimitResult {
    pub fn value(&self, psi: &Vector) -> f64 {
        psi.dot(&(&self.t0 * psi))
    }

    /// `true` when the exact limit is unavailable or agrees with the iterate.
    pub fn cross_check_passed(&self) -> bool {
        self.exact_deviation.is_none_or(|d| d <= LIMIT_CROSS_CHECK_TOL)
    }

    /// Largest violation of `ψᵀT_λψ` nonincreasing along the schedule, over the given vectors.
    pub fn monotonicity_violation(&self, samples: &[Vector]) -> f64 {
        let mut worst = 0.0_f64;
        for pair in self.schedule.windows(2) {
            for psi in samples {
                let hi = psi.dot(&(&pair[0].t * psi));
                let lo = psi.dot(&(&pair[1].t * psi));
                worst = worst.max(lo - hi);
            }
        }
        worst
    }
}

/// Exact `λ = 0` limit `Rᵀ(A − AK(KᵀAK)⁻¹KᵀA)R` when `KᵀAK` is nonsingular.
pub fn exact_limit(form: &QuadraticForm, j: &TraceMap) -> Option<Mat> {
    let a = form.form_matrix();
    if let Some(gamma) = j.restriction_indices() {
        let rest = j.complement_indices().expect("restriction");
        return schur_complement(a, gamma, &rest).ok().map(|t| linalg::symmetrize(&t));
    }
    let kernel = kernel_basis(j);
    let r = j.right_inverse();
    if kernel.dim() == 0 {
        return Some(linalg::symmetrize(&(r.transpose() * a * &r)));
    }
    let k = kernel.matrix();
    let ak = a * k;
    let chol = factor_spd(&(k.transpose() * &ak))?;
    let s = a - &ak * chol.solve(&ak.transpose());
    Some(linalg::symmetrize(&(r.transpose() * s * &r)))
}

/// Follows `T_λ` along the schedule until successive iterates differ by at most
/// `tol · max(‖T_previous‖, ‖T_first‖)`.
pub fn trace_limit(form: &QuadraticForm, j: &TraceMap, schedule: &Schedule, tol: f64) -> Result<TraceLimitResult> {
    check_dims(form, j)?;
    let path = TracePath::preferred(j);
    let mut entries: Vec<ScheduleEntry> = Vec::new();
    let mut converged = false;
    let mut reference = 0.0_f64;
    for &lambda in schedule.values() {
        let tf = trace_form(form, j, lambda, path)?;
        let decrement = entries.last().map(|prev| (&tf.t - &prev.t).norm());
        if entries.is_empty() {
            reference = tf.t.norm();
        }
        let prev_norm = entries.last().map(|p| p.t.norm()).unwrap_or(0.0);
        entries.push(ScheduleEntry {
            lambda,
            decrement,
            t: tf.t,
        });
        if let Some(d) = decrement {
            if d <= tol * prev_norm.max(reference) {
                converged = true;
                break;
            }
        }
    }
    let iterate = entries.last().expect("nonempty schedule").t.clone();
    let exact = exact_limit(form, j);
    let exact_deviation = exact.as_ref().map(|e| linalg::rel_diff(&iterate, e));
    let t0 = exact.clone().unwrap_or_else(|| iterate.clone());
    let operator = operator_from_form(&t0, j.weight_matrix())?;
    Ok(TraceLimitResult {
        t0,
        operator,
        iterate,
        schedule: entries,
        converged,
        exact_available: exact.is_some(),
        exact_deviation,
        path,
    })
}

/// Result of comparing `Ě_β` with `lim_{λ↓0} Ě_{β+λ}`.
#[derive(Debug, Clone, Serialize)]
pub struct ShiftConsistencyReport {
    pub beta: f64,
    /// Relative Frobenius distance between the schedule limit and `T_β`.
    pub deviation: f64,
    pub converged: bool,
    pub pass: bool,
}

/// Compares `trace_form(E, J, β)` (adjoint route) with the schedule limit of `E_β`.
pub fn shift_consistency_check(form: &QuadraticForm, j: &TraceMap, beta: f64) -> Result<ShiftConsistencyReport> {
    let direct = trace_form(form, j, beta, TracePath::Adjoint)?;
    let shifted_base = form.shifted_base(beta)?;
    let limit = trace_limit(&shifted_base, j, &Schedule::default(), 1e-12)?;
    let deviation = linalg::rel_diff(&limit.iterate, &direct.t);
    Ok(ShiftConsistencyReport {
        beta,
        deviation,
        converged: limit.converged,
        pass: deviation <= SHIFT_CONSISTENCY_TOL,
    })
}
