//! P1 finite elements for the closed-form models.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::form::{AuxSpace, QuadraticForm, TraceKind, TraceMap};
use crate::linalg::{Mat, Vector};
use crate::oracles::analytic::ChainTraceCoefficients;
use crate::trace::{trace_form, trace_limit, Schedule, TracePath};

/// Stiffness and mass of P1 elements on a uniform mesh of an interval.
#[derive(Debug, Clone)]
pub struct FemInstance {
    pub nodes: Vec<f64>,
    pub interval: (f64, f64),
    pub stiffness: Mat,
    pub mass: Mat,
}

impl FemInstance {
    pub fn mesh_size(&self) -> usize {
        self.nodes.len()
    }

    pub fn h(&self) -> f64 {
        self.nodes[1] - self.nodes[0]
    }
}

/// Uniform mesh with `n_nodes` nodes on `[x0, x1]`.
pub fn fem_interval(n_nodes: usize, x0: f64, x1: f64) -> Result<FemInstance> {
    if n_nodes < 2 || !(x1 > x0) {
        return Err(Error::GeometryInvalid(format!(
            "need at least 2 nodes on a nondegenerate interval, got {n_nodes} on [{x0}, {x1}]"
        )));
    }
    let cells = n_nodes - 1;
    let h = (x1 - x0) / cells as f64;
    let mut a = Mat::zeros(n_nodes, n_nodes);
    let mut m = Mat::zeros(n_nodes, n_nodes);
    for e in 0..cells {
        let (i, j) = (e, e + 1);
        a[(i, i)] += 1.0 / h;
        a[(j, j)] += 1.0 / h;
        a[(i, j)] -= 1.0 / h;
        a[(j, i)] -= 1.0 / h;
        m[(i, i)] += h / 3.0;
        m[(j, j)] += h / 3.0;
        m[(i, j)] += h / 6.0;
        m[(j, i)] += h / 6.0;
    }
    let nodes = (0..n_nodes)
        .map(|i| if i == cells { x1 } else { x0 + i as f64 * h })
        .collect();
    Ok(FemInstance {
        nodes,
        interval: (x0, x1),
        stiffness: a,
        mass: m,
    })
}

/// Trace of the P1 model of `∫u′²` on `[−L, L]` onto the integers.
#[derive(Debug, Clone, Serialize)]
pub struct ChainFem {
    pub lambda: f64,
    pub h: f64,
    /// `−T[n, n+1]` for neighbouring integers inside `|n| ≤ L − 1`.
    pub c_off: Vec<f64>,
    /// Row sums of `T` for integers inside `|n| ≤ L − 1`.
    pub c_diag: Vec<f64>,
    #[serde(skip)]
    pub t: Mat,
    #[serde(skip)]
    pub operator: Mat,
}

/// Largest relative gap of a set of computed values to one reference value.
fn worst_gap(values: &[f64], reference: f64) -> f64 {
    values
        .iter()
        .map(|v| (v - reference).abs() / reference.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max)
}

impl ChainFem {
    /// `(off-diagonal gap, row-sum gap)` relative to the given coefficients.
    pub fn gaps(&self, oracle: &ChainTraceCoefficients) -> (f64, f64) {
        (worst_gap(&self.c_off, oracle.c_off), worst_gap(&self.c_diag, oracle.c_diag))
    }

    pub fn rel_gap(&self, oracle: &ChainTraceCoefficients) -> f64 {
        let (a, b) = self.gaps(oracle);
        a.max(b)
    }
}

fn chain_model(half_width: usize, nodes_per_unit: usize, weights: Option<&[f64]>) -> Result<(QuadraticForm, TraceMap, f64)> {
    if half_width < 2 || nodes_per_unit < 1 {
        return Err(Error::GeometryInvalid(format!(
            "chain needs L ≥ 2 and at least one node per unit, got L = {half_width}, {nodes_per_unit}"
        )));
    }
    let l = half_width as f64;
    let fem = fem_interval(2 * half_width * nodes_per_unit + 1, -l, l)?;
    let h = fem.h();
    let k = 2 * half_width + 1;
    let aux = match weights {
        None => AuxSpace::identity(k),
        Some(w) if w.len() == k => AuxSpace::diagonal(w)?,
        Some(w) => {
            return Err(Error::DimensionMismatch {
                what: "chain weights",
                expected: k.to_string(),
                got: w.len().to_string(),
            })
        }
    };
    let idx = (0..k).map(|i| i * nodes_per_unit).collect();
    let n = fem.mesh_size();
    let form = QuadraticForm::new(fem.stiffness, fem.mass)?;
    let trace = TraceMap::new(TraceKind::Restriction(idx), aux, n)?;
    Ok((form, trace, h))
}

fn interior_coefficients(t: &Mat) -> (Vec<f64>, Vec<f64>) {
    let k = t.nrows();
    let c_off = (1..k - 2).map(|i| -t[(i, i + 1)]).collect();
    let c_diag = (1..k - 1).map(|i| t.row(i).iter().sum()).collect();
    (c_off, c_diag)
}

/// P1 model of the chain with `nodes_per_unit` nodes per unit length and weights `aₙ` in `W`.
pub fn fem_chain_demo(half_width: usize, nodes_per_unit: usize, lambda: f64, weights: Option<&[f64]>) -> Result<ChainFem> {
    let (form, trace, h) = chain_model(half_width, nodes_per_unit, weights)?;
    let tf = trace_form(&form, &trace, lambda, TracePath::Schur)?;
    let (c_off, c_diag) = interior_coefficients(&tf.t);
    Ok(ChainFem {
        lambda,
        h,
        c_off,
        c_diag,
        t: tf.t,
        operator: tf.operator,
    })
}

/// `λ ↓ 0` limit of the chain model; the interior coefficients should approach `(1, 0)`.
pub fn fem_chain_limit(half_width: usize, nodes_per_unit: usize, tol: f64) -> Result<ChainFem> {
    let (form, trace, h) = chain_model(half_width, nodes_per_unit, None)?;
    let lim = trace_limit(&form, &trace, &Schedule::default(), tol)?;
    let (c_off, c_diag) = interior_coefficients(&lim.t0);
    Ok(ChainFem {
        lambda: 0.0,
        h,
        c_off,
        c_diag,
        t: lim.t0,
        operator: lim.operator,
    })
}

/// Minimum of `∫₀ᵀ w′² + (ξ² + λ)w²` over P1 functions with `w(0) = 1` on `n_cells` cells.
///
/// Eliminates the free nodes from the far end: `s_N = d_N`, `s_i = d_i − e²/s_{i+1}`;
/// the value is `s_0`.
pub fn fem_halfstrip_mode(xi: f64, lambda: f64, t_domain: f64, n_cells: usize) -> Result<f64> {
    if n_cells < 1 || !(t_domain > 0.0) {
        return Err(Error::GeometryInvalid(format!(
            "half-strip needs a positive depth and at least one cell, got {t_domain} and {n_cells}"
        )));
    }
    let kappa = xi * xi + lambda;
    let h = t_domain / n_cells as f64;
    // Per cell: (1/h)[1, −1; −1, 1] + κ(h/6)[2, 1; 1, 2].
    let d_end = 1.0 / h + kappa * h / 3.0;
    let d_mid = 2.0 * d_end;
    let e = -1.0 / h + kappa * h / 6.0;
    let mut s = d_end;
    for i in (0..n_cells).rev() {
        let d = if i == 0 { d_end } else { d_mid };
        s = d - e * e / s;
    }
    Ok(s)
}

/// Matrices of `Eⁿ[u] = n⁻¹∫₀¹u′² + u(0)² + u(1)²` on `n_cells` P1 cells, traced onto the endpoints.
#[derive(Debug, Clone)]
pub struct CounterexampleFem {
    pub a: Mat,
    pub mass: Mat,
    /// Stiffness of `∫₀¹u′²`, the reference form of the family.
    pub stiffness: Mat,
    pub trace: TraceMap,
}

pub fn fem_counterexample(n: u32, n_cells: usize) -> Result<CounterexampleFem> {
    if n < 1 || n_cells < 16 {
        return Err(Error::GeometryInvalid(format!(
            "counterexample needs n ≥ 1 and at least 16 cells, got n = {n}, {n_cells} cells"
        )));
    }
    let fem = fem_interval(n_cells + 1, 0.0, 1.0)?;
    let mut a = &fem.stiffness / f64::from(n);
    a[(0, 0)] += 1.0;
    a[(n_cells, n_cells)] += 1.0;
    let trace = TraceMap::restriction(vec![0, n_cells], n_cells + 1)?;
    Ok(CounterexampleFem {
        a,
        mass: fem.mass,
        stiffness: fem.stiffness,
        trace,
    })
}

/// Five-point Laplacian on an `n × n` grid (zero outside), traced onto a square sub-box.
#[derive(Debug, Clone)]
pub struct Grid2d {
    pub n_outer: usize,
    pub offset: usize,
    pub size: usize,
    pub form: QuadraticForm,
    pub trace: TraceMap,
}

impl Grid2d {
    /// Whether the box node `(r, c)` (box coordinates) lies on the box boundary.
    pub fn on_ring(&self, r: usize, c: usize) -> bool {
        r == 0 || c == 0 || r + 1 == self.size || c + 1 == self.size
    }

    /// Permutation of box indices under a quarter turn: `(r, c) ↦ (c, size − 1 − r)`.
    pub fn rotation(&self) -> Vec<usize> {
        let s = self.size;
        (0..s * s)
            .map(|i| {
                let (r, c) = (i / s, i % s);
                c * s + (s - 1 - r)
            })
            .collect()
    }
}

pub fn grid2d_nested(n_outer: usize, offset: usize, size: usize) -> Result<Grid2d> {
    if size < 3 || offset < 1 || offset + size + 1 > n_outer {
        return Err(Error::GeometryInvalid(format!(
            "a {size}×{size} box at offset {offset} is not strictly inside a {n_outer}×{n_outer} grid"
        )));
    }
    let n = n_outer;
    let id = |r: usize, c: usize| r * n + c;
    let mut a = Mat::zeros(n * n, n * n);
    for r in 0..n {
        for c in 0..n {
            let i = id(r, c);
            a[(i, i)] = 4.0;
            if r > 0 {
                a[(i, id(r - 1, c))] = -1.0;
            }
            if r + 1 < n {
                a[(i, id(r + 1, c))] = -1.0;
            }
            if c > 0 {
                a[(i, id(r, c - 1))] = -1.0;
            }
            if c + 1 < n {
                a[(i, id(r, c + 1))] = -1.0;
            }
        }
    }
    let idx = (0..size * size)
        .map(|b| id(offset + b / size, offset + b % size))
        .collect();
    let form = QuadraticForm::with_identity_mass(a)?;
    let trace = TraceMap::restriction(idx, n * n)?;
    Ok(Grid2d {
        n_outer,
        offset,
        size,
        form,
        trace,
    })
}

/// Five-point stencil restricted to the box, in box coordinates.
pub fn box_stencil(size: usize) -> Mat {
    let mut s = Mat::zeros(size * size, size * size);
    for r in 0..size {
        for c in 0..size {
            let i = r * size + c;
            s[(i, i)] = 4.0;
            if r > 0 {
                s[(i, i - size)] = -1.0;
            }
            if r + 1 < size {
                s[(i, i + size)] = -1.0;
            }
            if c > 0 {
                s[(i, i - 1)] = -1.0;
            }
            if c + 1 < size {
                s[(i, i + 1)] = -1.0;
            }
        }
    }
    s
}

/// Interpolant of `x ↦ f(x)` at the mesh nodes.
pub fn interpolate(fem: &FemInstance, f: impl Fn(f64) -> f64) -> Vector {
    Vector::from_iterator(fem.nodes.len(), fem.nodes.iter().map(|&x| f(x)))
}
