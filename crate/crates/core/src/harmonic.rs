//! Harmonic extensions, the Dirichlet part on `ker J`, and J-ellipticity.
//!
//! The harmonic space is `{u : E(u, v) = 0 for all v ∈ ker J}`. When `KᵀAK`
//! is nonsingular it is complementary to `ker J`, and the projection along
//! `ker J` onto it is
//!
//! ```text
//! E_har = I − K (KᵀAK)⁻¹ KᵀA.
//! ```
//!
//! The trace form at `λ = 0` is then `E_har[Ju] = E[E_har u]`.

use nalgebra::{Cholesky, Dyn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::form::{shift, QuadraticForm, TraceMap};
use crate::instances;
use crate::linalg::{self, Mat, Vector};
use crate::serde_mat;
use crate::trace::{check_dims, factor_spd, kernel_basis, KernelBasis, Projection};

/// Default `β` grid for [`j_ellipticity`].
pub const BETA_GRID: [f64; 6] = [0.0, 0.5, 1.0, 2.0, 4.0, 8.0];
/// Pass threshold of [`quadharm_check`], relative to `‖A‖`.
pub const QUADHARM_TOL: f64 = 1e-10;
/// Ellipticity constants below this count as zero.
pub const ELLIPTIC_TOL: f64 = 1e-12;

/// Splitting of the ground space into the harmonic space and `ker J`.
#[derive(Debug, Clone)]
pub struct HarmonicDecomposition {
    pub kernel: KernelBasis,
    /// `E_har R` with `R` a right inverse of `J`; `None` when the sum is not direct.
    pub harmonic_basis: Option<Mat>,
    /// `E_har`; `None` when the sum is not direct.
    pub extension_matrix: Option<Mat>,
    pub direct_sum_ok: bool,
}

impl HarmonicDecomposition {
    fn extension(&self) -> Result<&Mat> {
        self.extension_matrix.as_ref().ok_or(Error::NoDirectSum)
    }
}

fn kernel_block(a: &Mat, kernel: &KernelBasis) -> Option<Cholesky<f64, Dyn>> {
    let k = kernel.matrix();
    factor_spd(&(k.transpose() * a * k))
}

/// `I − K(KᵀCK)⁻¹KᵀC`, the `C`-orthogonal projection onto `(ker J)^⊥`.
fn projection_along_kernel(c: &Mat, kernel: &KernelBasis) -> Option<Mat> {
    let n = c.nrows();
    if kernel.dim() == 0 {
        return Some(Mat::identity(n, n));
    }
    let k = kernel.matrix();
    let chol = kernel_block(c, kernel)?;
    Some(Mat::identity(n, n) - k * chol.solve(&(k.transpose() * c)))
}

pub fn harmonic_decomposition(form: &QuadraticForm, j: &TraceMap) -> Result<HarmonicDecomposition> {
    check_dims(form, j)?;
    let kernel = kernel_basis(j);
    let extension = projection_along_kernel(form.form_matrix(), &kernel);
    let harmonic_basis = extension.as_ref().map(|e| e * j.right_inverse());
    Ok(HarmonicDecomposition {
        direct_sum_ok: extension.is_some(),
        kernel,
        harmonic_basis,
        extension_matrix: extension,
    })
}

/// Matrix of `E_har` on auxiliary coordinates: `HᵀAH` for the harmonic lifts `H`.
pub fn e_har_form(h: &HarmonicDecomposition, form: &QuadraticForm, _j: &TraceMap) -> Result<Mat> {
    let basis = h.harmonic_basis.as_ref().ok_or(Error::NoDirectSum)?;
    Ok(linalg::symmetrize(&(basis.transpose() * form.form_matrix() * basis)))
}

#[derive(Debug, Clone, Serialize)]
pub struct QuadharmReport {
    pub max_deviation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Largest `|E(E_har u, v) − E(u, E_har v)|` over `samples` Gaussian pairs.
pub fn quadharm_check(
    h: &HarmonicDecomposition,
    form: &QuadraticForm,
    _j: &TraceMap,
    samples: usize,
    seed: u64,
) -> Result<QuadharmReport> {
    let e = h.extension()?;
    let a = form.form_matrix();
    let left = e.transpose() * a;
    let right = a * e;
    let mut r = instances::rng(seed, 0);
    let n = form.dim();
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let u = instances::gaussian_vector(&mut r, n);
        let v = instances::gaussian_vector(&mut r, n);
        worst = worst.max((u.dot(&(&left * &v)) - u.dot(&(&right * &v))).abs());
    }
    let tolerance = QUADHARM_TOL * linalg::sym_norm(a).max(f64::MIN_POSITIVE);
    Ok(QuadharmReport {
        max_deviation: worst,
        tolerance,
        pass: worst <= tolerance,
    })
}

/// The form `E` restricted to `ker J`, in the coordinates of the kernel basis.
#[derive(Debug, Clone, Serialize)]
pub struct DirichletPart {
    /// `(KᵀMK)⁻¹(KᵀAK)`.
    #[serde(rename = "LD", serialize_with = "serde_mat::rows")]
    pub ld_matrix: Mat,
    /// Whether `KᵀAK` is nonsingular.
    pub surjective: bool,
    #[serde(skip)]
    kernel: Mat,
    #[serde(skip)]
    block: Option<Cholesky<f64, Dyn>>,
}

pub fn dirichlet_part(form: &QuadraticForm, j: &TraceMap) -> Result<DirichletPart> {
    check_dims(form, j)?;
    let kernel = kernel_basis(j);
    let k = kernel.matrix().clone();
    let ktak = linalg::symmetrize(&(k.transpose() * form.form_matrix() * &k));
    let ktmk = k.transpose() * form.mass_matrix() * &k;
    let ld = if k.ncols() == 0 {
        Mat::zeros(0, 0)
    } else {
        linalg::cholesky(&ktmk, "KᵀMK")?.solve(&ktak)
    };
    let block = if k.ncols() == 0 { None } else { factor_spd(&ktak) };
    Ok(DirichletPart {
        ld_matrix: ld,
        surjective: k.ncols() == 0 || block.is_some(),
        kernel: k,
        block,
    })
}

/// `v_λ = λz + P_λu` with `z = Kz_K ∈ ker J`, `(KᵀAK)z_K = KᵀM P_λu`.
///
/// The result lies in the harmonic space, has the trace `Ju`, and does not
/// depend on `λ`.
pub fn v_lambda(form: &QuadraticForm, j: &TraceMap, d: &DirichletPart, u: &Vector, lambda: f64) -> Result<Vector> {
    if !d.surjective {
        return Err(Error::NotSurjective);
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidLambda {
            lambda,
            requirement: "positive",
        });
    }
    let shifted = shift(form, lambda)?;
    let kernel = kernel_basis(j);
    let pu = Projection::new(&shifted, &kernel)?.apply(u);
    let Some(chol) = &d.block else {
        return Ok(pu);
    };
    let zk = chol.solve(&(d.kernel.transpose() * (form.mass_matrix() * &pu)));
    Ok(&d.kernel * zk * lambda + pu)
}

/// `E^J`-orthogonal projection onto `(ker J)^⊥` with `E^J[u] = E[u] + ‖Ju‖²_W`.
pub fn pj_projection(form: &QuadraticForm, j: &TraceMap) -> Result<Mat> {
    check_dims(form, j)?;
    let jm = j.matrix();
    let c = form.form_matrix() + jm.transpose() * j.weight_matrix() * &jm;
    projection_along_kernel(&c, &kernel_basis(j)).ok_or(Error::NoDirectSum)
}

/// Best ellipticity constant found on a `β` grid.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct JEllipticity {
    #[serde(rename = "flag")]
    pub elliptic: bool,
    pub alpha: f64,
    pub beta: f64,
}

/// For each `β`, `α(β)` is the smallest eigenvalue of `A + βJᵀWJ` relative to `A + M`.
pub fn j_ellipticity(form: &QuadraticForm, j: &TraceMap, beta_grid: &[f64]) -> Result<JEllipticity> {
    check_dims(form, j)?;
    let jm = j.matrix();
    let jwj = jm.transpose() * j.weight_matrix() * &jm;
    let a = form.form_matrix();
    let a1 = a + form.mass_matrix();
    let mut best = JEllipticity {
        elliptic: false,
        alpha: f64::NEG_INFINITY,
        beta: f64::NAN,
    };
    for &beta in beta_grid {
        let alpha = linalg::generalized_eigenvalues(&(a + &jwj * beta), &a1)?[0];
        if alpha > best.alpha {
            best.alpha = alpha;
            best.beta = beta;
        }
    }
    best.elliptic = best.alpha > ELLIPTIC_TOL;
    Ok(best)
}

/// Largest pairwise distance of `v_λ` over the given shifts, for one `u`.
pub fn v_lambda_spread(form: &QuadraticForm, j: &TraceMap, d: &DirichletPart, u: &Vector, lambdas: &[f64]) -> Result<f64> {
    let vs = lambdas
        .iter()
        .map(|&l| v_lambda(form, j, d, u, l))
        .collect::<Result<Vec<_>>>()?;
    let mut worst = 0.0_f64;
    for (i, a) in vs.iter().enumerate() {
        for b in &vs[i + 1..] {
            worst = worst.max((a - b).norm());
        }
    }
    Ok(worst)
}

/// Shifts over which `v_λ` is compared.
pub const SPREAD_LAMBDAS: [f64; 4] = [0.1, 0.5, 1.0, 2.0];

/// Summary of the harmonic description of the limit trace form.
#[derive(Debug, Clone, Serialize)]
pub struct HarmonicReport {
    pub direct_sum_ok: bool,
    #[serde(serialize_with = "serde_mat::opt_rows")]
    pub e_har_form: Option<Mat>,
    /// Worst `|E(E_har u, v) − E(u, E_har v)|`; `None` without a direct sum.
    pub quadharm_residual: Option<f64>,
    /// Worst spread of `v_λ` over [`SPREAD_LAMBDAS`]; `None` when `L_D` is not surjective.
    pub v_lambda_spread: Option<f64>,
    pub elliptic: JEllipticity,
}

/// Runs the harmonic-structure checks on `samples` Gaussian vectors.
pub fn harmonic_report(form: &QuadraticForm, j: &TraceMap, samples: usize, seed: u64) -> Result<HarmonicReport> {
    let h = harmonic_decomposition(form, j)?;
    let elliptic = j_ellipticity(form, j, &BETA_GRID)?;
    if !h.direct_sum_ok {
        return Ok(HarmonicReport {
            direct_sum_ok: false,
            e_har_form: None,
            quadharm_residual: None,
            v_lambda_spread: None,
            elliptic,
        });
    }
    let quad = quadharm_check(&h, form, j, samples, seed)?;
    let d = dirichlet_part(form, j)?;
    let spread = if d.surjective {
        let mut r = instances::rng(seed, 2);
        let mut worst = 0.0_f64;
        for _ in 0..samples {
            let u = instances::gaussian_vector(&mut r, form.dim());
            worst = worst.max(v_lambda_spread(form, j, &d, &u, &SPREAD_LAMBDAS)?);
        }
        Some(worst)
    } else {
        None
    };
    Ok(HarmonicReport {
        direct_sum_ok: true,
        e_har_form: Some(e_har_form(&h, form, j)?),
        quadharm_residual: Some(quad.max_deviation),
        v_lambda_spread: spread,
        elliptic,
    })
}
