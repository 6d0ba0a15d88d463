//! Traces of positive quadratic forms and Dirichlet forms on finite-dimensional spaces.
//!
//! Given a positive semidefinite form `E[u] = uᵀAu` on `(ℝᴺ, uᵀMv)` and a
//! surjective trace map `J: ℝᴺ → (ℝᵏ, ψᵀWφ)`, the crate builds the shifted
//! trace forms
//!
//! ```text
//! Ě_λ[ψ] = min { E[v] + λ‖v‖² : Jv = ψ },   λ > 0,
//! ```
//!
//! their operators `Ȟ_λ = W⁻¹T_λ`, and the monotone limit `Ě = lim_{λ↓0} Ě_λ`.
//! Around that core sit the harmonic-extension description of the limit
//! ([`harmonic`]), Markov/Dirichlet-form verification ([`markov`]), a
//! Mosco-convergence harness for sequences of forms ([`mosco`]), and
//! closed-form oracles with the finite-element discretizations that connect
//! them to the engine ([`oracles`]).
//!
//! ```
//! use traceforms::{QuadraticForm, TraceMap, TracePath, trace_form};
//! use traceforms::linalg::{Mat, Vector};
//!
//! // Path graph on three nodes, traced onto its endpoints.
//! let a = Mat::from_row_slice(3, 3, &[1., -1., 0., -1., 2., -1., 0., -1., 1.]);
//! let form = QuadraticForm::with_identity_mass(a).unwrap();
//! let j = TraceMap::restriction(vec![0, 2], 3).unwrap();
//!
//! let t = trace_form(&form, &j, 1.0, TracePath::Schur).unwrap();
//! let psi = Vector::from_vec(vec![1.0, 0.0]);
//! // Minimize (1 − x)² + x² + x² over the middle value x: x = 1/3, energy 2/3.
//! assert!((t.value(&psi) - (1.0 + 2.0 / 3.0)).abs() < 1e-12);
//! ```

pub mod acceptance;
pub mod error;
pub mod form;
pub mod harmonic;
pub mod instances;
pub mod io;
pub mod linalg;
pub mod markov;
pub mod mosco;
pub mod oracles;
mod serde_mat;
pub mod trace;

pub use error::{Error, Result};
pub use form::{shift, validate_form, validate_trace_map, AuxSpace, QuadraticForm, ShiftedForm, TraceKind, TraceMap};
pub use trace::{
    dirichlet_minimize, exact_limit, kernel_basis, projection_apply, resolvent, shift_consistency_check, trace_form,
    trace_limit, KernelBasis, Schedule, TraceForm, TraceLimitResult, TracePath,
};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    pub struct Readme;
    #[doc = include_str!("../../../book/src/intro.md")]
    pub struct Intro;
    #[doc = include_str!("../../../book/src/forms.md")]
    pub struct Forms;
    #[doc = include_str!("../../../book/src/shifted-traces.md")]
    pub struct ShiftedTraces;
    #[doc = include_str!("../../../book/src/limit.md")]
    pub struct Limit;
    #[doc = include_str!("../../../book/src/harmonic.md")]
    pub struct Harmonic;
    #[doc = include_str!("../../../book/src/markov.md")]
    pub struct Markov;
    #[doc = include_str!("../../../book/src/mosco.md")]
    pub struct Mosco;
    #[doc = include_str!("../../../book/src/examples.md")]
    pub struct Examples;
    #[doc = include_str!("../../../book/src/cli.md")]
    pub struct Cli;
}
