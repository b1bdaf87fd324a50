//! Pairwise similarity and distance between MTS items: EROS, multivariate
//! DTW and Euclidean distance on vectors.

mod dtw;
mod eigen;
mod eros;

pub use dtw::{dtw, dtw_banded, dtw_matrix, mts_dtw, mts_dtw_banded};
pub use eigen::{covariance, eigendecompose, EigenBasis};
pub use eros::{
    eros, eros_matrix, eros_weights, item_bases, weights_from_bases, ErosModel, WeightAggregator,
    WeightVector, NEGLIGIBLE_WEIGHT,
};

use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const RANGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatrixKind {
    Similarity,
    Distance,
}

/// Symmetric k×k similarity or distance matrix over named items.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseMatrix {
    kind: MatrixKind,
    ids: Vec<String>,
    data: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct Envelope {
    kind: MatrixKind,
    ids: Vec<String>,
    data: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    key: Option<String>,
}

impl PairwiseMatrix {
    pub fn new(kind: MatrixKind, ids: Vec<String>, data: DMatrix<f64>) -> Result<Self> {
        let k = data.nrows();
        if !data.is_square() || ids.len() != k {
            return Err(Error::Contract(format!(
                "pairwise matrix is {}x{} with {} ids",
                data.nrows(),
                data.ncols(),
                ids.len()
            )));
        }
        for i in 0..k {
            let diag = data[(i, i)];
            let expected = match kind {
                MatrixKind::Similarity => 1.0,
                MatrixKind::Distance => 0.0,
            };
            if diag != expected {
                return Err(Error::Contract(format!("diagonal entry {i} is {diag}, expected {expected}")));
            }
            for j in 0..k {
                let v = data[(i, j)];
                if !v.is_finite() {
                    return Err(Error::Contract(format!("entry ({i}, {j}) is not finite")));
                }
                if (v - data[(j, i)]).abs() > SYMMETRY_TOL {
                    return Err(Error::Contract(format!("entry ({i}, {j}) breaks symmetry")));
                }
                let in_range = match kind {
                    MatrixKind::Similarity => (0.0..=1.0).contains(&v),
                    MatrixKind::Distance => v >= 0.0,
                };
                if !in_range {
                    return Err(Error::Contract(format!("entry ({i}, {j}) = {v} out of range for {kind:?}")));
                }
            }
        }
        Ok(Self { kind, ids, data })
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Dense CSV with the item ids as header.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(&self.ids)?;
        for row in self.data.row_iter() {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn to_json(&self, key: Option<&str>) -> Result<String> {
        let env = Envelope {
            kind: self.kind,
            ids: self.ids.clone(),
            data: self.data.row_iter().map(|r| r.iter().copied().collect()).collect(),
            key: key.map(str::to_string),
        };
        Ok(serde_json::to_string(&env)?)
    }

    /// Parses a JSON envelope, returning the matrix and its cache key.
    pub fn from_json(text: &str) -> Result<(Self, Option<String>)> {
        let env: Envelope = serde_json::from_str(text)?;
        let k = env.ids.len();
        if env.data.len() != k || env.data.iter().any(|r| r.len() != k) {
            return Err(Error::Contract("envelope data is not k×k".into()));
        }
        let data = DMatrix::from_fn(k, k, |i, j| env.data[i][j]);
        Ok((Self::new(env.kind, env.ids, data)?, env.key))
    }
}

/// Fills a symmetric matrix from `f(i, j)` evaluated on the strict upper
/// triangle only. Entries are independent so the parallel schedule does
/// not affect the result. The diagonal is left at zero.
pub(crate) fn pairwise<F>(k: usize, f: F) -> Result<DMatrix<f64>>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| ((i + 1)..k).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| f(i, j))
        .collect::<Result<Vec<_>>>()?;
    let mut out = DMatrix::zeros(k, k);
    for (&(i, j), v) in pairs.iter().zip(values) {
        out[(i, j)] = v;
        out[(j, i)] = v;
    }
    Ok(out)
}

/// ℓ2 distances between the rows of `vectors`.
pub fn euclidean_matrix(vectors: &DMatrix<f64>, ids: Vec<String>) -> Result<PairwiseMatrix> {
    if vectors.nrows() < 2 {
        return Err(Error::EmptyInput("need at least 2 rows".into()));
    }
    let data = pairwise(vectors.nrows(), |i, j| {
        Ok(vectors
            .row(i)
            .iter()
            .zip(vectors.row(j).iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    })?;
    PairwiseMatrix::new(MatrixKind::Distance, ids, data)
}

/// Chord distance sqrt(2·(1 − s)) between items with similarity s.
pub fn similarity_to_distance(s: &PairwiseMatrix) -> Result<PairwiseMatrix> {
    if s.kind != MatrixKind::Similarity {
        return Err(Error::Contract("expected a similarity matrix".into()));
    }
    let k = s.len();
    let mut data = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let v = s.data[(i, j)];
            if !(-RANGE_TOL..=1.0 + RANGE_TOL).contains(&v) {
                return Err(Error::Contract(format!("similarity ({i}, {j}) = {v} outside [0, 1]")));
            }
            data[(i, j)] = (2.0 * (1.0 - v.clamp(0.0, 1.0))).sqrt();
        }
    }
    PairwiseMatrix::new(MatrixKind::Distance, s.ids.clone(), data)
}
