use nalgebra::DMatrix;

use super::{Embedding, Projection};
use crate::error::{Error, Result};
use crate::similarity::eigendecompose;

/// Projects the rows of `data` onto the top-`dim` principal axes of its
/// column-centered covariance.
pub fn pca_project(data: &DMatrix<f64>, dim: usize, ids: Vec<String>) -> Result<Embedding> {
    let (k, p) = data.shape();
    if k < 2 {
        return Err(Error::EmptyInput(format!("PCA needs at least 2 rows, got {k}")));
    }
    if !(2..=3).contains(&dim) {
        return Err(Error::Dimension(format!("output dimension {dim} must be 2 or 3")));
    }
    if p < dim {
        return Err(Error::Dimension(format!("{p} input columns cannot give {dim} components")));
    }
    if ids.len() != k {
        return Err(Error::Contract(format!("{} ids for {k} rows", ids.len())));
    }
    let mut centered = data.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.sum() / k as f64;
        col.add_scalar_mut(-mean);
    }
    let mut cov = centered.tr_mul(&centered) / k as f64;
    for i in 0..p {
        for j in (i + 1)..p {
            let v = cov[(i, j)];
            cov[(j, i)] = v;
        }
    }
    let basis = eigendecompose(&cov)?;
    let axes = basis.vectors().columns(0, dim).into_owned();
    let coords = &centered * &axes;
    let total: f64 = basis.values().iter().sum();
    let explained_variance = basis.values()[..dim].to_vec();
    let explained_ratio = explained_variance
        .iter()
        .map(|v| if total > 0.0 { v / total } else { 0.0 })
        .collect();
    Ok(Embedding {
        ids,
        labels: vec![None; k],
        coords,
        cost_trace: Vec::new(),
        projection: Projection::Pca {
            explained_variance,
            explained_ratio,
            axes: axes.column_iter().map(|c| c.iter().copied().collect()).collect(),
        },
    })
}
