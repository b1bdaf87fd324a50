//! Low-dimensional projection: perplexity-calibrated affinities, the
//! KL-minimizing gradient descent and the PCA baseline.

mod affinity;
mod pca;
mod tsne;

pub use affinity::{
    calibrate_row, direct_affinities, joint_affinities, AffinityMatrix, RowCalibration, PERPLEXITY_TOL,
    PROB_FLOOR,
};
pub use pca::pca_project;
pub use tsne::{kl_cost, low_dim_affinities, optimize, tsne_embed, tsne_gradient, TsneConfig};

use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Projection {
    Tsne(TsneConfig),
    Pca {
        explained_variance: Vec<f64>,
        explained_ratio: Vec<f64>,
        /// Principal axes, one vector per component.
        axes: Vec<Vec<f64>>,
    },
    /// Coordinates read back from a file.
    Loaded,
}

/// k×d coordinates with the item ids and labels they belong to.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub ids: Vec<String>,
    pub labels: Vec<Option<String>>,
    pub coords: DMatrix<f64>,
    /// KL divergence per iteration; empty for PCA.
    pub cost_trace: Vec<f64>,
    pub projection: Projection,
}

impl Embedding {
    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.coords.ncols()
    }

    pub fn with_labels(mut self, labels: Vec<Option<String>>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::Contract(format!("{} labels for {} points", labels.len(), self.len())));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn final_cost(&self) -> Option<f64> {
        self.cost_trace.last().copied()
    }

    /// CSV with columns `id,label,y1..yd`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend((1..=self.dim()).map(|c| format!("y{c}")));
        w.write_record(&header)?;
        for (i, row) in self.coords.row_iter().enumerate() {
            let mut rec = vec![self.ids[i].clone(), self.labels[i].clone().unwrap_or_default()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let header = r.headers()?.clone();
        if header.len() < 4 || &header[0] != "id" || &header[1] != "label" {
            return Err(Error::Schema(format!(
                "{} is not an embedding file (expected id,label,y1..yd)",
                path.display()
            )));
        }
        let d = header.len() - 2;
        let mut ids = Vec::new();
        let mut labels = Vec::new();
        let mut values = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            ids.push(rec[0].to_string());
            labels.push(Some(rec[1].to_string()).filter(|l| !l.is_empty()));
            for c in 0..d {
                let cell = &rec[c + 2];
                values.push(cell.parse::<f64>().map_err(|_| Error::Parse {
                    row: row + 1,
                    column: c + 1,
                    value: cell.to_string(),
                })?);
            }
        }
        if ids.is_empty() {
            return Err(Error::EmptyInput(format!("{} has no points", path.display())));
        }
        Ok(Self {
            coords: DMatrix::from_row_slice(ids.len(), d, &values),
            ids,
            labels,
            cost_trace: Vec::new(),
            projection: Projection::Loaded,
        })
    }
}
