//! Serde adapter storing an `Array2<f64>` as `{rows, cols, data}` with
//! row-major data, so model files stay readable from any language.

use ndarray::Array2;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

pub fn serialize<S: Serializer>(m: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
    let (rows, cols) = m.dim();
    Mat {
        rows,
        cols,
        data: m.iter().copied().collect(),
    }
    .serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
    let mat = Mat::deserialize(d)?;
    Array2::from_shape_vec((mat.rows, mat.cols), mat.data)
        .map_err(|e| D::Error::custom(format!("bad matrix shape: {e}")))
}
