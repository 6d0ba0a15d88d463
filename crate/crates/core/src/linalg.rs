//! Dense helpers shared by the form modules.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Largest absolute entry.
pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Largest entry of `|a - aᵀ|`.
pub fn asymmetry(a: &Mat) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

pub fn symmetrize(a: &Mat) -> Mat {
    (a + a.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix (input is symmetrized first).
pub fn sym_eigenvalues(a: &Mat) -> Vector {
    if a.nrows() == 0 {
        return Vector::zeros(0);
    }
    symmetrize(a).symmetric_eigenvalues()
}

pub fn min_max(v: &Vector) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

/// Spectral norm of a symmetric matrix.
pub fn sym_norm(a: &Mat) -> f64 {
    sym_eigenvalues(a).iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Spectral norm of a general matrix.
pub fn spectral_norm(a: &Mat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().iter().fold(0.0_f64, |acc, x| acc.max(*x))
}

pub fn cholesky(a: &Mat, which: &'static str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(symmetrize(a)).ok_or_else(|| Error::NotPositiveDefinite {
        which,
        min_eigenvalue: min_max(&sym_eigenvalues(a)).0,
    })
}

/// Inverse through LU, refusing matrices whose pivots collapse relative to the largest.
pub fn inverse(a: &Mat, context: &'static str) -> Result<Mat> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let lu = a.clone().full_piv_lu();
    if !pivots_healthy(lu.u().diagonal().iter().copied()) {
        return Err(Error::Singular { context });
    }
    lu.try_inverse().ok_or(Error::Singular { context })
}

/// Rejects factorizations whose smallest pivot is below `1e-13` of the largest.
pub(crate) fn pivots_healthy(pivots: impl Iterator<Item = f64>) -> bool {
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for p in pivots {
        lo = lo.min(p.abs());
        hi = hi.max(p.abs());
    }
    hi > 0.0 && lo > 1e-13 * hi
}

/// Orthonormal basis of the right null space of `m`, spanned by the right
/// singular vectors of the `nullity` smallest singular values.
///
/// The matrix is zero-padded to square so the SVD yields a full right basis.
pub fn null_space_basis(m: &Mat, nullity: usize) -> Mat {
    let (rows, cols) = m.shape();
    if nullity == 0 || cols == 0 {
        return Mat::zeros(cols, 0);
    }
    let size = rows.max(cols);
    let mut padded = Mat::zeros(size, cols);
    padded.view_mut((0, 0), (rows, cols)).copy_from(m);
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let mut basis = Mat::zeros(cols, nullity);
    for (c, &r) in order.iter().take(nullity).enumerate() {
        basis.set_column(c, &v_t.row(r).transpose());
    }
    basis
}

/// Numerical rank with the threshold `rel_tol · σ_max`.
pub fn numerical_rank(m: &Mat, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let top = sv.iter().fold(0.0_f64, |a, s| a.max(*s));
    sv.iter().filter(|&&s| s > rel_tol * top && s > 0.0).count()
}

/// Eigenvalues of the pencil `(a, b)` with `b` positive definite, ascending.
pub fn generalized_eigenvalues(a: &Mat, b: &Mat) -> Result<Vector> {
    let chol = cholesky(b, "pencil right-hand matrix")?;
    let l = chol.l();
    // L⁻¹ A L⁻ᵀ
    let left = l
        .solve_lower_triangular(a)
        .ok_or(Error::Singular { context: "pencil factor" })?;
    let reduced = l
        .solve_lower_triangular(&left.transpose())
        .ok_or(Error::Singular { context: "pencil factor" })?;
    let mut vals: Vec<f64> = sym_eigenvalues(&reduced).iter().copied().collect();
    vals.sort_by(f64::total_cmp);
    Ok(Vector::from_vec(vals))
}

/// Rows of `m` picked by `idx`, all columns.
pub fn select_rows(m: &Mat, idx: &[usize]) -> Mat {
    Mat::from_fn(idx.len(), m.ncols(), |i, j| m[(idx[i], j)])
}

pub fn select_block(m: &Mat, rows: &[usize], cols: &[usize]) -> Mat {
    Mat::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return f64::NAN;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// `true` when every off-diagonal entry is exactly zero.
pub fn is_diagonal(m: &Mat) -> bool {
    m.iter()
        .enumerate()
        .all(|(idx, v)| idx % m.nrows() == idx / m.nrows() || *v == 0.0)
}

/// Relative Frobenius distance `‖a − b‖ / max(‖a‖, ‖b‖, tiny)`.
pub fn rel_diff(a: &Mat, b: &Mat) -> f64 {
    let scale = a.norm().max(b.norm()).max(f64::MIN_POSITIVE);
    (a - b).norm() / scale
}
