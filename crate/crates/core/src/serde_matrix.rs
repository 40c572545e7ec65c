//! Serialize dense matrices as a list of columns.

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

fn columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter().map(|c| c.iter().copied().collect()).collect()
}

fn from_columns(cols: Vec<Vec<f64>>, nrows: usize) -> Result<DMatrix<f64>, String> {
    if cols.iter().any(|c| c.len() != nrows) {
        return Err("ragged matrix columns".into());
    }
    let ncols = cols.len();
    Ok(DMatrix::from_iterator(nrows, ncols, cols.into_iter().flatten()))
}

#[derive(Serialize, Deserialize)]
struct Repr {
    rows: usize,
    columns: Vec<Vec<f64>>,
}

pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    Repr { rows: m.nrows(), columns: columns(m) }.serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
    let r = Repr::deserialize(d)?;
    from_columns(r.columns, r.rows).map_err(serde::de::Error::custom)
}

pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
        let reprs: Vec<Repr> = ms.iter().map(|m| Repr { rows: m.nrows(), columns: columns(m) }).collect();
        reprs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
        let reprs = Vec::<Repr>::deserialize(d)?;
        reprs
            .into_iter()
            .map(|r| from_columns(r.columns, r.rows).map_err(serde::de::Error::custom))
            .collect()
    }
}
