//! Closed-form trace values.
//!
//! **Chain.** `E[u] = ∫_ℝ u′²` on `L²(ℝ, μ)` with `μ = Σ aₙδₙ` traced onto
//! the integers. Each unit cell is an independent two-point problem for
//! `−w″ + λw = 0`, which gives
//!
//! ```text
//! Ě_λ[ψ] = c_off Σ|ψ(n+1) − ψ(n)|² + c_diag Σ|ψ(n)|²,
//! c_off = s / sinh s,   c_diag = 2s (cosh s − 1) / sinh s = 2s tanh(s/2),   s = √λ.
//! ```
//!
//! **Half-space.** Traced onto the boundary hyperplane, each Fourier mode
//! decays like `exp(−√(ξ² + λ) t)`, so the trace has the symbol `√(ξ² + λ)`.
//!
//! **Two-point counterexample.** `Eⁿ[u] = n⁻¹∫₀¹u′² + u(0)² + u(1)²` traced
//! onto `{0, 1}` with `s = √(nλ)`:
//!
//! ```text
//! Ěⁿ_λ[(a, b)] = −(s / sinh s)(2ab/n) + ((a² + b²) s/n)(cosh s / sinh s) + a² + b²,
//! Ěⁿ[(a, b)]   = (b − a)²/n + a² + b²                        (λ = 0).
//! ```

use serde::Serialize;

use crate::error::{Error, Result};

/// Below this shift the chain coefficients are evaluated by their Taylor series.
pub const SERIES_CUTOFF: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainTraceCoefficients {
    pub lambda: f64,
    pub c_off: f64,
    pub c_diag: f64,
}

/// `s / sinh s` without overflow for large `s`.
fn s_over_sinh(s: f64) -> f64 {
    if s == 0.0 {
        return 1.0;
    }
    2.0 * s * (-s).exp() / -(-2.0 * s).exp_m1()
}

/// `s cosh s / sinh s` without overflow for large `s`.
fn s_coth(s: f64) -> f64 {
    if s == 0.0 {
        return 1.0;
    }
    let e = (-2.0 * s).exp();
    s * (1.0 + e) / -(-2.0 * s).exp_m1()
}

pub fn chain_coefficients(lambda: f64) -> Result<ChainTraceCoefficients> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidLambda {
            lambda,
            requirement: "positive and finite",
        });
    }
    let (c_off, c_diag) = if lambda < SERIES_CUTOFF {
        (1.0 - lambda / 6.0 + 7.0 * lambda * lambda / 360.0, lambda - lambda * lambda / 12.0)
    } else {
        let s = lambda.sqrt();
        (s_over_sinh(s), 2.0 * s * (0.5 * s).tanh())
    };
    Ok(ChainTraceCoefficients { lambda, c_off, c_diag })
}

impl ChainTraceCoefficients {
    /// Form value on a finitely supported sequence, extended by zero on both sides.
    pub fn value(&self, psi: &[f64]) -> f64 {
        let mut jumps = 0.0;
        let mut prev = 0.0;
        for &x in psi.iter().chain(std::iter::once(&0.0)) {
            jumps += (x - prev) * (x - prev);
            prev = x;
        }
        let mass: f64 = psi.iter().map(|x| x * x).sum();
        self.c_off * jumps + self.c_diag * mass
    }
}

/// `c_off Σ|ψ(n+1) − ψ(n)|² + c_diag Σ|ψ(n)|²` with `ψ` zero outside the given window.
pub fn chain_trace_value(lambda: f64, psi: &[f64]) -> Result<f64> {
    Ok(chain_coefficients(lambda)?.value(psi))
}

/// `√(ξ² + λ)`; at `λ = 0` this is `|ξ|`.
pub fn halfspace_symbol(xi: f64, lambda: f64) -> f64 {
    (xi * xi + lambda).sqrt()
}

/// Trace value of the two-point counterexample at `(a, b)`; `λ = 0` gives the limit form.
pub fn counterexample_value(n: u32, lambda: f64, a: f64, b: f64) -> f64 {
    let nf = f64::from(n);
    if lambda == 0.0 {
        return (b - a).powi(2) / nf + a * a + b * b;
    }
    let s = (nf * lambda).sqrt();
    -s_over_sinh(s) * (2.0 * a * b / nf) + (a * a + b * b) * s_coth(s) / nf + a * a + b * b
}
