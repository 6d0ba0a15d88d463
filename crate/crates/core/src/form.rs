//! Ground space, quadratic forms, the auxiliary space and trace maps.
//!
//! A [`QuadraticForm`] is the pair `(A, M)`: `E[u] = uᵀAu` is the energy and
//! `⟨u, v⟩ = uᵀMv` the scalar product of the ground space. A [`TraceMap`] is
//! a full-row-rank `k × N` matrix `J` into an auxiliary space whose scalar
//! product is given by the weight matrix `W`.
//!
//! Finite-dimensional trace maps are always defined on the whole ground space.
//! A map defined only on a subspace is modelled by composing with a
//! coordinate restriction.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};

/// Relative tolerance for symmetry checks.
pub const SYMMETRY_TOL: f64 = 1e-10;
/// Relative slack for positive semidefiniteness, scaled by `‖A‖`.
pub const PSD_TOL: f64 = 1e-8;
/// Relative floor for positive definiteness of mass and weight matrices.
pub const PD_TOL: f64 = 1e-12;
/// Relative singular-value threshold for rank decisions, scaled by `‖J‖`.
pub const RANK_TOL: f64 = 1e-10;
/// Largest ground dimension accepted for dense storage.
pub const DENSE_LIMIT: usize = 4096;

/// Symmetrization applied during validation (largest `|X − Xᵀ|` entry removed).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct SymmetryCorrection {
    pub form: f64,
    pub mass: f64,
}

/// Validated positive semidefinite form `E[u] = uᵀAu` on `(ℝᴺ, uᵀMv)`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    a: Mat,
    m: Mat,
    correction: SymmetryCorrection,
}

fn check_square(m: &Mat, what: &'static str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            what,
            expected: "square matrix".into(),
            got: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    Ok(())
}

/// Symmetrizes `x` if its asymmetry is within tolerance, otherwise fails.
fn symmetric_part(x: &Mat, which: &'static str) -> Result<(Mat, f64)> {
    let asym = linalg::asymmetry(x);
    let scale = linalg::max_abs(x).max(1.0);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric {
            which,
            asymmetry: asym,
        });
    }
    Ok((linalg::symmetrize(x), asym))
}

/// Checks that a symmetric matrix is positive definite with the relative floor [`PD_TOL`].
pub(crate) fn check_positive_definite(m: &Mat, which: &'static str) -> Result<()> {
    if m.nrows() == 0 {
        return Ok(());
    }
    let (lo, hi) = linalg::min_max(&linalg::sym_eigenvalues(m));
    let floor = PD_TOL * hi.abs().max(lo.abs());
    if !(lo > floor) || lo <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            which,
            min_eigenvalue: lo,
        });
    }
    Ok(())
}

/// Validates `(A, M)` and returns the form.
pub fn validate_form(a: Mat, m: Mat) -> Result<QuadraticForm> {
    check_square(&a, "form matrix A")?;
    check_square(&m, "mass matrix M")?;
    if a.nrows() != m.nrows() {
        return Err(Error::DimensionMismatch {
            what: "mass matrix M",
            expected: format!("{0}x{0}", a.nrows()),
            got: format!("{}x{}", m.nrows(), m.ncols()),
        });
    }
    if a.nrows() == 0 {
        return Err(Error::DimensionMismatch {
            what: "ground dimension",
            expected: "positive".into(),
            got: "0".into(),
        });
    }
    if a.nrows() > DENSE_LIMIT {
        return Err(Error::SizeLimit {
            dim: a.nrows(),
            limit: DENSE_LIMIT,
        });
    }
    let (a, form_asym) = symmetric_part(&a, "form matrix A")?;
    let (m, mass_asym) = symmetric_part(&m, "mass matrix M")?;

    let (lo, hi) = linalg::min_max(&linalg::sym_eigenvalues(&a));
    let norm = lo.abs().max(hi.abs());
    if lo < -PSD_TOL * norm {
        return Err(Error::NotPsd { min_eigenvalue: lo });
    }
    check_positive_definite(&m, "mass matrix M").map_err(|e| match e {
        Error::NotPositiveDefinite { min_eigenvalue, .. } => Error::MassNotPd { min_eigenvalue },
        other => other,
    })?;

    Ok(QuadraticForm {
        a,
        m,
        correction: SymmetryCorrection {
            form: form_asym,
            mass: mass_asym,
        },
    })
}

impl QuadraticForm {
    pub fn new(a: Mat, m: Mat) -> Result<Self> {
        validate_form(a, m)
    }

    /// Form on `ℝᴺ` with the Euclidean scalar product.
    pub fn with_identity_mass(a: Mat) -> Result<Self> {
        let n = a.nrows();
        validate_form(a, Mat::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn form_matrix(&self) -> &Mat {
        &self.a
    }

    pub fn mass_matrix(&self) -> &Mat {
        &self.m
    }

    pub fn correction(&self) -> SymmetryCorrection {
        self.correction
    }

    /// `E[u] = uᵀAu`.
    pub fn energy(&self, u: &Vector) -> f64 {
        u.dot(&(&self.a * u))
    }

    /// `E(u, v) = uᵀAv`.
    pub fn bilinear(&self, u: &Vector, v: &Vector) -> f64 {
        u.dot(&(&self.a * v))
    }

    /// `⟨u, v⟩ = uᵀMv`.
    pub fn inner(&self, u: &Vector, v: &Vector) -> f64 {
        u.dot(&(&self.m * v))
    }

    pub fn shift(&self, lambda: f64) -> Result<ShiftedForm> {
        shift(self, lambda)
    }

    /// The form `E_β` as a new base form (`A + βM`, same mass).
    pub fn shifted_base(&self, beta: f64) -> Result<QuadraticForm> {
        if !(beta >= 0.0) {
            return Err(Error::InvalidLambda {
                lambda: beta,
                requirement: "nonnegative",
            });
        }
        Ok(QuadraticForm {
            a: &self.a + &self.m * beta,
            m: self.m.clone(),
            correction: self.correction,
        })
    }
}

/// `E_λ[u] = E[u] + λ‖u‖²`, assembled as `A + λM`.
#[derive(Debug, Clone)]
pub struct ShiftedForm {
    lambda: f64,
    matrix: Mat,
    mass: Mat,
    certified_pd: bool,
}

/// Builds `A + λM`. For `λ > 0` positive definiteness is certified by a Cholesky factorization.
pub fn shift(form: &QuadraticForm, lambda: f64) -> Result<ShiftedForm> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidLambda {
            lambda,
            requirement: "finite and nonnegative",
        });
    }
    let matrix = form.form_matrix() + form.mass_matrix() * lambda;
    let certified_pd = nalgebra::Cholesky::new(matrix.clone()).is_some();
    if lambda > 0.0 && !certified_pd {
        return Err(Error::NotPositiveDefinite {
            which: "shifted form A + λM",
            min_eigenvalue: linalg::min_max(&linalg::sym_eigenvalues(&matrix)).0,
        });
    }
    Ok(ShiftedForm {
        lambda,
        matrix,
        mass: form.mass_matrix().clone(),
        certified_pd,
    })
}

impl ShiftedForm {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn matrix(&self) -> &Mat {
        &self.matrix
    }

    pub fn mass_matrix(&self) -> &Mat {
        &self.mass
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// Whether a Cholesky factorization of `A + λM` succeeded.
    pub fn is_positive_definite(&self) -> bool {
        self.certified_pd
    }

    pub fn energy(&self, u: &Vector) -> f64 {
        u.dot(&(&self.matrix * u))
    }

    pub fn bilinear(&self, u: &Vector, v: &Vector) -> f64 {
        u.dot(&(&self.matrix * v))
    }
}

/// Auxiliary space `ℝᵏ` with scalar product `ψᵀWφ`.
#[derive(Debug, Clone)]
pub struct AuxSpace {
    w: Mat,
}

impl AuxSpace {
    pub fn new(w: Mat) -> Result<Self> {
        check_square(&w, "weight matrix W")?;
        let (w, _) = symmetric_part(&w, "weight matrix W")?;
        check_positive_definite(&w, "weight matrix W")?;
        Ok(Self { w })
    }

    pub fn identity(k: usize) -> Self {
        Self {
            w: Mat::identity(k, k),
        }
    }

    /// Diagonal weights, e.g. point masses of a discrete measure.
    pub fn diagonal(weights: &[f64]) -> Result<Self> {
        Self::new(Mat::from_diagonal(&Vector::from_column_slice(weights)))
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn weight_matrix(&self) -> &Mat {
        &self.w
    }

    pub fn inner(&self, psi: &Vector, phi: &Vector) -> f64 {
        psi.dot(&(&self.w * phi))
    }

    pub fn norm(&self, psi: &Vector) -> f64 {
        self.inner(psi, psi).max(0.0).sqrt()
    }
}

/// How a trace map is stored.
#[derive(Debug, Clone, PartialEq)]
pub enum TraceKind {
    /// Dense `k × N` matrix.
    Matrix(Mat),
    /// Selection of the listed coordinates, in order.
    Restriction(Vec<usize>),
}

/// Validated surjective trace map `J: ℝᴺ → (ℝᵏ, W)`.
#[derive(Debug, Clone)]
pub struct TraceMap {
    kind: TraceKind,
    ground_dim: usize,
    aux: AuxSpace,
}

/// Recognizes a dense selection matrix (one unit entry per row, distinct columns).
fn as_selection(j: &Mat) -> Option<Vec<usize>> {
    let mut idx = Vec::with_capacity(j.nrows());
    for r in 0..j.nrows() {
        let mut hit = None;
        for c in 0..j.ncols() {
            let v = j[(r, c)];
            if v == 1.0 && hit.is_none() {
                hit = Some(c);
            } else if v != 0.0 {
                return None;
            }
        }
        let c = hit?;
        if idx.contains(&c) {
            return None;
        }
        idx.push(c);
    }
    Some(idx)
}

/// Validates a trace map against a ground dimension and auxiliary space.
///
/// A dense matrix that is exactly a coordinate selection is stored as a
/// restriction so that the Schur-complement fast path becomes available.
pub fn validate_trace_map(kind: TraceKind, aux: AuxSpace, ground_dim: usize) -> Result<TraceMap> {
    let kind = match kind {
        TraceKind::Restriction(idx) => {
            let mut seen = vec![false; ground_dim];
            for &i in &idx {
                if i >= ground_dim {
                    return Err(Error::IndexOutOfRange {
                        index: i,
                        dim: ground_dim,
                    });
                }
                if seen[i] {
                    return Err(Error::DuplicateIndex { index: i });
                }
                seen[i] = true;
            }
            if idx.is_empty() {
                return Err(Error::RankDeficient {
                    rank: 0,
                    expected: 0,
                });
            }
            TraceKind::Restriction(idx)
        }
        TraceKind::Matrix(j) => {
            if j.ncols() != ground_dim {
                return Err(Error::DimensionMismatch {
                    what: "trace map columns",
                    expected: ground_dim.to_string(),
                    got: j.ncols().to_string(),
                });
            }
            if j.nrows() == 0 || j.nrows() > ground_dim {
                return Err(Error::RankDeficient {
                    rank: j.nrows().min(ground_dim),
                    expected: j.nrows(),
                });
            }
            let sv = j.singular_values();
            let top = sv.iter().fold(0.0_f64, |a, s| a.max(*s));
            let rank = sv.iter().filter(|&&s| s > RANK_TOL * top && s > 0.0).count();
            if rank < j.nrows() {
                return Err(Error::RankDeficient {
                    rank,
                    expected: j.nrows(),
                });
            }
            match as_selection(&j) {
                Some(idx) => TraceKind::Restriction(idx),
                None => TraceKind::Matrix(j),
            }
        }
    };
    let k = match &kind {
        TraceKind::Matrix(j) => j.nrows(),
        TraceKind::Restriction(idx) => idx.len(),
    };
    if aux.dim() != k {
        return Err(Error::DimensionMismatch {
            what: "weight matrix W",
            expected: format!("{k}x{k}"),
            got: format!("{0}x{0}", aux.dim()),
        });
    }
    Ok(TraceMap {
        kind,
        ground_dim,
        aux,
    })
}

impl TraceMap {
    pub fn new(kind: TraceKind, aux: AuxSpace, ground_dim: usize) -> Result<Self> {
        validate_trace_map(kind, aux, ground_dim)
    }

    /// Coordinate restriction with Euclidean auxiliary weights.
    pub fn restriction(indices: Vec<usize>, ground_dim: usize) -> Result<Self> {
        let k = indices.len();
        validate_trace_map(TraceKind::Restriction(indices), AuxSpace::identity(k), ground_dim)
    }

    pub fn kind(&self) -> &TraceKind {
        &self.kind
    }

    pub fn aux(&self) -> &AuxSpace {
        &self.aux
    }

    pub fn weight_matrix(&self) -> &Mat {
        self.aux.weight_matrix()
    }

    pub fn ground_dim(&self) -> usize {
        self.ground_dim
    }

    pub fn aux_dim(&self) -> usize {
        self.aux.dim()
    }

    /// Selected coordinates when the map is a restriction.
    pub fn restriction_indices(&self) -> Option<&[usize]> {
        match &self.kind {
            TraceKind::Restriction(idx) => Some(idx),
            TraceKind::Matrix(_) => None,
        }
    }

    /// Coordinates not selected by a restriction, ascending.
    pub fn complement_indices(&self) -> Option<Vec<usize>> {
        self.restriction_indices().map(|idx| {
            let mut chosen = vec![false; self.ground_dim];
            for &i in idx {
                chosen[i] = true;
            }
            (0..self.ground_dim).filter(|&i| !chosen[i]).collect()
        })
    }

    /// `Jv`.
    pub fn apply(&self, v: &Vector) -> Vector {
        match &self.kind {
            TraceKind::Matrix(j) => j * v,
            TraceKind::Restriction(idx) => Vector::from_iterator(idx.len(), idx.iter().map(|&i| v[i])),
        }
    }

    /// `J` as a dense matrix.
    pub fn matrix(&self) -> Mat {
        match &self.kind {
            TraceKind::Matrix(j) => j.clone(),
            TraceKind::Restriction(idx) => {
                let mut j = Mat::zeros(idx.len(), self.ground_dim);
                for (r, &c) in idx.iter().enumerate() {
                    j[(r, c)] = 1.0;
                }
                j
            }
        }
    }

    /// Right inverse `R = Jᵀ(JJᵀ)⁻¹`, so that `J R = I`.
    pub fn right_inverse(&self) -> Mat {
        match &self.kind {
            TraceKind::Restriction(_) => self.matrix().transpose(),
            TraceKind::Matrix(j) => {
                let gram = j * j.transpose();
                let chol = nalgebra::Cholesky::new(gram).expect("full row rank checked at validation");
                j.transpose() * chol.inverse()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> Mat {
        Mat::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0])
    }

    #[test]
    fn zero_form_is_valid() {
        let f = QuadraticForm::with_identity_mass(Mat::zeros(4, 4)).unwrap();
        assert_eq!(f.energy(&Vector::from_element(4, 3.0)), 0.0);
    }

    #[test]
    fn path_laplacian_is_valid() {
        let f = QuadraticForm::with_identity_mass(path3()).unwrap();
        assert_eq!(f.dim(), 3);
        assert_eq!(f.correction(), SymmetryCorrection::default());
    }

    #[test]
    fn negative_eigenvalue_rejected() {
        let a = Mat::from_diagonal(&Vector::from_vec(vec![1.0, -0.1, 2.0]));
        assert!(matches!(
            QuadraticForm::with_identity_mass(a),
            Err(Error::NotPsd { min_eigenvalue }) if (min_eigenvalue + 0.1).abs() < 1e-12
        ));
    }

    #[test]
    fn small_asymmetry_is_corrected() {
        let mut a = path3();
        a[(0, 1)] += 1e-12;
        let f = QuadraticForm::with_identity_mass(a).unwrap();
        assert!(f.correction().form > 0.0);
        assert_eq!(linalg::asymmetry(f.form_matrix()), 0.0);
    }

    #[test]
    fn large_asymmetry_rejected() {
        let mut a = path3();
        a[(0, 1)] += 1e-3;
        assert!(matches!(
            QuadraticForm::with_identity_mass(a),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn singular_mass_rejected() {
        let m = Mat::from_diagonal(&Vector::from_vec(vec![1.0, 0.0, 1.0]));
        assert!(matches!(validate_form(path3(), m), Err(Error::MassNotPd { .. })));
    }

    #[test]
    fn shift_zero_and_one() {
        let f = QuadraticForm::with_identity_mass(path3()).unwrap();
        assert_eq!(shift(&f, 0.0).unwrap().matrix(), &path3());
        assert_eq!(shift(&f, 1.0).unwrap().matrix(), &(path3() + Mat::identity(3, 3)));
        assert!(!shift(&f, 0.0).unwrap().is_positive_definite());
        assert!(shift(&f, -1.0).is_err());
    }

    #[test]
    fn trace_map_cases() {
        let id = TraceMap::new(TraceKind::Matrix(Mat::identity(3, 3)), AuxSpace::identity(3), 3).unwrap();
        assert_eq!(id.restriction_indices(), Some(&[0, 1, 2][..]));

        let ends = TraceMap::restriction(vec![0, 4], 5).unwrap();
        assert_eq!(ends.complement_indices().unwrap(), vec![1, 2, 3]);

        let twin = Mat::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        assert!(matches!(
            TraceMap::new(TraceKind::Matrix(twin), AuxSpace::identity(2), 3),
            Err(Error::RankDeficient { rank: 1, expected: 2 })
        ));
        assert!(matches!(
            TraceMap::restriction(vec![5], 3),
            Err(Error::IndexOutOfRange { index: 5, dim: 3 })
        ));
        assert!(matches!(
            TraceMap::restriction(vec![1, 1], 3),
            Err(Error::DuplicateIndex { index: 1 })
        ));
    }

    #[test]
    fn right_inverse_of_dense_map() {
        let j = Mat::from_row_slice(2, 3, &[1.0, 2.0, 0.5, 0.0, 1.0, -1.0]);
        let t = TraceMap::new(TraceKind::Matrix(j.clone()), AuxSpace::identity(2), 3).unwrap();
        assert!((&j * t.right_inverse() - Mat::identity(2, 2)).norm() < 1e-14);
    }
}
