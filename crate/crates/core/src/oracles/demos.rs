//! Computed-versus-closed-form reports for the discretized models.

use serde::Serialize;

use crate::error::Result;
use crate::linalg::{self, Mat, Vector};
use crate::mosco::{self, FormSequence, MoscoReport};
use crate::oracles::analytic::{chain_coefficients, counterexample_value, halfspace_symbol};
use crate::oracles::fem::{box_stencil, fem_chain_demo, fem_counterexample, fem_halfstrip_mode, grid2d_nested};
use crate::form::QuadraticForm;
use crate::trace::{trace_form, trace_limit, Schedule, TracePath};

/// Relative gap accepted by the chain and counterexample demos.
pub const FEM_TOL: f64 = 1e-2;
/// Relative gap accepted by the half-strip demo.
pub const HALFSTRIP_TOL: f64 = 5e-3;
/// Row and symmetry tolerance of the grid demo.
pub const GRID_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Coefficients {
    pub c_off: f64,
    pub c_diag: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainDemoReport {
    pub lambda: f64,
    pub h: f64,
    /// Interior coefficients farthest from the closed form.
    pub computed: Coefficients,
    pub oracle: Coefficients,
    pub rel_gap: f64,
    pub pass: bool,
}

fn farthest(values: &[f64], reference: f64) -> f64 {
    values
        .iter()
        .copied()
        .max_by(|a, b| (a - reference).abs().total_cmp(&(b - reference).abs()))
        .unwrap_or(f64::NAN)
}

pub fn chain_report(half_width: usize, nodes_per_unit: usize, lambda: f64) -> Result<ChainDemoReport> {
    let fem = fem_chain_demo(half_width, nodes_per_unit, lambda, None)?;
    let oracle = chain_coefficients(lambda)?;
    let rel_gap = fem.rel_gap(&oracle);
    Ok(ChainDemoReport {
        lambda,
        h: fem.h,
        computed: Coefficients {
            c_off: farthest(&fem.c_off, oracle.c_off),
            c_diag: farthest(&fem.c_diag, oracle.c_diag),
        },
        oracle: Coefficients {
            c_off: oracle.c_off,
            c_diag: oracle.c_diag,
        },
        rel_gap,
        pass: rel_gap <= FEM_TOL,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct HalfstripDemoReport {
    pub xi: f64,
    pub lambda: f64,
    pub depth: f64,
    pub cells: usize,
    pub computed: f64,
    pub oracle: f64,
    pub rel_gap: f64,
    pub pass: bool,
}

pub fn halfstrip_report(xi: f64, lambda: f64, depth: f64, cells: usize) -> Result<HalfstripDemoReport> {
    let computed = fem_halfstrip_mode(xi, lambda, depth, cells)?;
    let oracle = halfspace_symbol(xi, lambda);
    let rel_gap = (computed - oracle).abs() / oracle;
    Ok(HalfstripDemoReport {
        xi,
        lambda,
        depth,
        cells,
        computed,
        oracle,
        rel_gap,
        pass: rel_gap <= HALFSTRIP_TOL,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleRow {
    pub n: u32,
    pub lambda: f64,
    pub computed: f64,
    pub oracle: f64,
    pub rel_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleDemoReport {
    pub a: f64,
    pub b: f64,
    pub cells: usize,
    pub rows: Vec<CounterexampleRow>,
    pub computed: Vec<f64>,
    pub oracle: Vec<f64>,
    pub rel_gap: f64,
    pub pass: bool,
}

/// Trace values of the counterexample family at `(a, b)` for each `n` and `λ`;
/// `λ = 0` entries use the limit form.
pub fn counterexample_report(ns: &[u32], lambdas: &[f64], cells: usize, a: f64, b: f64) -> Result<CounterexampleDemoReport> {
    let psi = Vector::from_vec(vec![a, b]);
    let mut rows = Vec::new();
    for &n in ns {
        let fem = fem_counterexample(n, cells)?;
        let form = QuadraticForm::new(fem.a, fem.mass)?;
        for &lambda in lambdas {
            let t = if lambda == 0.0 {
                trace_limit(&form, &fem.trace, &Schedule::default(), 1e-10)?.t0
            } else {
                trace_form(&form, &fem.trace, lambda, TracePath::Schur)?.t
            };
            let computed = psi.dot(&(&t * &psi));
            let oracle = counterexample_value(n, lambda, a, b);
            let scale = oracle.abs().max(f64::MIN_POSITIVE);
            rows.push(CounterexampleRow {
                n,
                lambda,
                computed,
                oracle,
                rel_gap: (computed - oracle).abs() / scale,
            });
        }
    }
    let rel_gap = rows.iter().map(|r| r.rel_gap).fold(0.0, f64::max);
    Ok(CounterexampleDemoReport {
        a,
        b,
        cells,
        computed: rows.iter().map(|r| r.computed).collect(),
        oracle: rows.iter().map(|r| r.oracle).collect(),
        rows,
        rel_gap,
        pass: rel_gap <= FEM_TOL,
    })
}

/// The counterexample family as a [`FormSequence`] with limit `0` and reference `∫u′²`.
pub fn counterexample_sequence(ns: &[u32], cells: usize) -> Result<FormSequence> {
    let mut terms = Vec::with_capacity(ns.len());
    let mut last = None;
    for &n in ns {
        let fem = fem_counterexample(n, cells)?;
        terms.push(fem.a.clone());
        last = Some(fem);
    }
    let fem = last.ok_or_else(|| crate::Error::InvalidSequence("no terms".into()))?;
    let dim = fem.mass.nrows();
    FormSequence::new(
        terms,
        ns.iter().map(|&n| n as usize).collect(),
        fem.mass,
        Mat::zeros(dim, dim),
        fem.stiffness,
        fem.trace,
    )
}

/// Convergence run of the counterexample family plus the closed-form comparison.
#[derive(Debug, Clone, Serialize)]
pub struct CounterexampleMoscoReport {
    pub run: MoscoReport,
    pub comparison: CounterexampleDemoReport,
    /// The trace forms approach `a² + b²`, not the trace of the limit form.
    pub assumption_failure_flagged: bool,
}

pub fn counterexample_mosco(ns: &[u32], cells: usize, lambda: f64) -> Result<CounterexampleMoscoReport> {
    let seq = counterexample_sequence(ns, cells)?;
    let run = mosco::trace_convergence_run(&seq, lambda)?;
    let comparison = counterexample_report(ns, &[lambda], cells, 1.0, 0.0)?;
    Ok(CounterexampleMoscoReport {
        assumption_failure_flagged: !run.assumptions.a1_finite,
        run,
        comparison,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GridDemoReport {
    pub n_outer: usize,
    pub box_size: usize,
    /// Largest deviation of a non-boundary box row of the limit operator from the five-point stencil.
    pub computed: f64,
    pub oracle: f64,
    pub rel_gap: f64,
    /// Largest entry of `PᵀȞP − Ȟ` for the quarter-turn permutation `P`.
    pub rotation_deviation: f64,
    /// Largest deviation on box-boundary rows (reported, not certified).
    pub interface_deviation: f64,
    pub pass: bool,
}

pub fn grid2d_report(n_outer: usize, offset: usize, size: usize) -> Result<GridDemoReport> {
    let g = grid2d_nested(n_outer, offset, size)?;
    let lim = trace_limit(&g.form, &g.trace, &Schedule::default(), 1e-8)?;
    let h = &lim.operator;
    let stencil = box_stencil(size);
    let (mut interior, mut interface) = (0.0_f64, 0.0_f64);
    for i in 0..size * size {
        let dev = (h.row(i) - stencil.row(i)).amax();
        if g.on_ring(i / size, i % size) {
            interface = interface.max(dev);
        } else {
            interior = interior.max(dev);
        }
    }
    let p = g.rotation();
    let rotated = Mat::from_fn(size * size, size * size, |r, c| h[(p[r], p[c])]);
    let rotation_deviation = linalg::max_abs(&(rotated - h));
    Ok(GridDemoReport {
        n_outer,
        box_size: size,
        computed: interior,
        oracle: 0.0,
        rel_gap: interior / linalg::max_abs(&stencil),
        rotation_deviation,
        interface_deviation: interface,
        pass: interior <= GRID_TOL && rotation_deviation <= GRID_TOL,
    })
}
