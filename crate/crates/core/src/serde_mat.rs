//! Row-major serialization for dense matrices in reports.

use serde::ser::{SerializeSeq, Serializer};

use crate::linalg::{Mat, Vector};

pub fn rows<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for r in 0..m.nrows() {
        let row: Vec<f64> = m.row(r).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

pub fn opt_rows<S: Serializer>(m: &Option<Mat>, s: S) -> Result<S::Ok, S::Error> {
    match m {
        Some(m) => rows(m, s),
        None => s.serialize_none(),
    }
}

pub fn vector<S: Serializer>(v: &Vector, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}

pub fn opt_vector<S: Serializer>(v: &Option<Vector>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => vector(v, s),
        None => s.serialize_none(),
    }
}
