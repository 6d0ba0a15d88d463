//! Closed-form trace values and the finite-element models that reproduce them.
//!
//! * [`analytic`]: the nearest-neighbour chain, the half-space symbol and the
//!   two-point counterexample, all in closed form;
//! * [`fem`]: P1 discretizations feeding those models into the trace engine;
//! * [`demos`]: computed-versus-closed-form comparison reports.

pub mod analytic;
pub mod demos;
pub mod fem;

pub use analytic::{chain_coefficients, chain_trace_value, counterexample_value, halfspace_symbol, ChainTraceCoefficients};
pub use fem::{fem_chain_demo, fem_counterexample, fem_halfstrip_mode, fem_interval, grid2d_nested, FemInstance};
