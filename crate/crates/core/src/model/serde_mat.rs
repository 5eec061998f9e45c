//! `serialize_with` helpers writing matrices as row-major nested arrays.

use nalgebra::{DMatrix, DVector};
use serde::ser::{SerializeSeq, Serializer};

use crate::linalg;

pub fn matrix<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(linalg::rows(m))
}

pub fn matrices<S: Serializer>(ms: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(ms.len()))?;
    for m in ms {
        seq.serialize_element(&linalg::rows(m))?;
    }
    seq.end()
}

pub fn matrices2<S: Serializer>(ms: &[Vec<DMatrix<f64>>], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(ms.len()))?;
    for inner in ms {
        let rows: Vec<Vec<Vec<f64>>> = inner.iter().map(linalg::rows).collect();
        seq.serialize_element(&rows)?;
    }
    seq.end()
}

pub fn vectors<S: Serializer>(vs: &[DVector<f64>], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(vs.len()))?;
    for v in vs {
        seq.serialize_element(v.as_slice())?;
    }
    seq.end()
}

pub fn vectors2<S: Serializer>(vs: &[Vec<DVector<f64>>], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(vs.len()))?;
    for inner in vs {
        let rows: Vec<&[f64]> = inner.iter().map(|v| v.as_slice()).collect();
        seq.serialize_element(&rows)?;
    }
    seq.end()
}
