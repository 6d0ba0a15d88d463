//! Seeded random instances used by the property tests and the acceptance suite.
//!
//! Every instance is drawn from its own ChaCha stream (`seed`, `stream`), so
//! results do not depend on evaluation order or thread count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::form::{AuxSpace, QuadraticForm, TraceKind, TraceMap};
use crate::linalg::{Mat, Vector};

/// Default seed of the CLI and the acceptance suite.
pub const DEFAULT_SEED: u64 = 42;

/// Generator for the `stream`-th independent draw under `seed`.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn gaussian_vector(rng: &mut impl Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Uniform sample of `[0, 1]^k`.
pub fn unit_box_vector(rng: &mut impl Rng, k: usize) -> Vector {
    Vector::from_fn(k, |_, _| rng.random::<f64>())
}

/// `GGᵀ/n + shift·I`, well conditioned for moderate `shift`.
pub fn random_spd(rng: &mut impl Rng, n: usize, shift: f64) -> Mat {
    let g = gaussian_matrix(rng, n, n);
    let a = &g * g.transpose() / n as f64 + Mat::identity(n, n) * shift;
    (&a + a.transpose()) * 0.5
}

/// Diagonal with entries uniform in `[lo, hi)`.
pub fn random_diagonal(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Mat {
    Mat::from_diagonal(&Vector::from_fn(n, |_, _| rng.random_range(lo..hi)))
}

/// `k` distinct indices out of `0..n`, ascending.
pub fn random_subset(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    let mut idx = rand::seq::index::sample(rng, n, k).into_vec();
    idx.sort_unstable();
    idx
}

/// A form together with a trace map.
#[derive(Debug, Clone)]
pub struct Instance {
    pub form: QuadraticForm,
    pub trace: TraceMap,
}

/// Shape of the trace map of a random instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceShape {
    Restriction,
    Dense,
}

/// Random instance with SPD `A`, SPD `M`, SPD `W`.
///
/// `N` is drawn from `4..=32` and `k` from `1..=N/2` unless given.
pub fn random_instance(seed: u64, stream: u64, shape: TraceShape, dims: Option<(usize, usize)>) -> Instance {
    let mut r = rng(seed, stream);
    let (n, k) = dims.unwrap_or_else(|| {
        let n = r.random_range(4..=32usize);
        (n, r.random_range(1..=n / 2))
    });
    let a = random_spd(&mut r, n, 0.1);
    let m = random_spd(&mut r, n, 0.5);
    let w = random_spd(&mut r, k, 0.5);
    let form = QuadraticForm::new(a, m).expect("random SPD form");
    let kind = match shape {
        TraceShape::Restriction => TraceKind::Restriction(random_subset(&mut r, n, k)),
        TraceShape::Dense => TraceKind::Matrix(gaussian_matrix(&mut r, k, n)),
    };
    let trace = TraceMap::new(kind, AuxSpace::new(w).expect("random SPD weight"), n).expect("full rank trace");
    Instance { form, trace }
}

/// Weighted graph Laplacian plus a nonnegative killing term, with diagonal `M`
/// and `W` and a restriction trace map.
///
/// The graph is a path (so it is connected) plus random extra edges; about half
/// of the killing coefficients are zero.
pub fn graph_laplacian_instance(seed: u64, stream: u64) -> Instance {
    let mut r = rng(seed, stream);
    let n = r.random_range(4..=32usize);
    let k = r.random_range(1..=n / 2);
    let mut a = Mat::zeros(n, n);
    let add_edge = |a: &mut Mat, i: usize, j: usize, w: f64| {
        a[(i, i)] += w;
        a[(j, j)] += w;
        a[(i, j)] -= w;
        a[(j, i)] -= w;
    };
    for i in 0..n - 1 {
        let w = r.random_range(0.1..2.0);
        add_edge(&mut a, i, i + 1, w);
    }
    for _ in 0..n {
        let i = r.random_range(0..n);
        let j = r.random_range(0..n);
        if i != j {
            let w = r.random_range(0.1..2.0);
            add_edge(&mut a, i, j, w);
        }
    }
    for i in 0..n {
        if r.random::<bool>() {
            a[(i, i)] += r.random_range(0.0..1.0);
        }
    }
    let m = random_diagonal(&mut r, n, 0.5, 2.0);
    let weights: Vec<f64> = (0..k).map(|_| r.random_range(0.5..2.0)).collect();
    let form = QuadraticForm::new(a, m).expect("Laplacian plus killing is PSD");
    let trace = TraceMap::new(
        TraceKind::Restriction(random_subset(&mut r, n, k)),
        AuxSpace::diagonal(&weights).expect("positive weights"),
        n,
    )
    .expect("restriction");
    Instance { form, trace }
}
