use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::data::MtsItem;
use crate::error::{Error, Result};

/// Eigenvalues below this fraction of the largest one are treated as an
/// exact null space.
const NULL_SPACE_RTOL: f64 = 1e-11;

/// Orthonormal eigenvectors (columns) with eigenvalues sorted descending.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBasis {
    vectors: DMatrix<f64>,
    values: Vec<f64>,
}

impl EigenBasis {
    /// Wraps precomputed eigenpairs. Columns must be unit length; values
    /// are expected in descending order.
    pub fn from_parts(vectors: DMatrix<f64>, values: Vec<f64>) -> Result<Self> {
        if !vectors.is_square() || vectors.ncols() != values.len() {
            return Err(Error::Contract(format!(
                "basis is {}x{} with {} eigenvalues",
                vectors.nrows(),
                vectors.ncols(),
                values.len()
            )));
        }
        Ok(Self { vectors, values })
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Copy with eigenvector `l` negated.
    pub fn flip(&self, l: usize) -> Self {
        let mut out = self.clone();
        out.vectors.column_mut(l).neg_mut();
        out
    }
}

/// Population covariance (1/m)·AᵀA of the item after centering each
/// column on its own mean.
pub fn covariance(item: &MtsItem) -> DMatrix<f64> {
    let x = item.values();
    let m = x.nrows() as f64;
    let mut centered = x.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.sum() / m;
        col.add_scalar_mut(-mean);
    }
    let mut cov = centered.tr_mul(&centered) / m;
    // exact symmetry
    let n = cov.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = cov[(i, j)];
            cov[(j, i)] = v;
        }
    }
    cov
}

/// Flips `v` so that its largest-magnitude entry (first one on ties) is
/// positive.
fn orient(mut v: DVector<f64>) -> DVector<f64> {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.neg_mut();
    }
    v
}

/// Orthonormal completion of `range` built by Gram-Schmidt over the
/// standard basis, so the null-space vectors depend only on the span of
/// the range vectors.
fn complete_basis(range: &[DVector<f64>], n: usize) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = range.to_vec();
    let mut extra = Vec::new();
    for e in 0..n {
        if basis.len() == n {
            break;
        }
        let mut v = DVector::zeros(n);
        v[e] = 1.0;
        // two passes for numerical orthogonality
        for _ in 0..2 {
            for b in &basis {
                let d = b.dot(&v);
                v.axpy(-d, b, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            v /= norm;
            basis.push(v.clone());
            extra.push(v);
        }
    }
    extra
}

/// Symmetric eigendecomposition with descending eigenvalues, clamped
/// non-negative, and a deterministic eigenvector orientation.
pub fn eigendecompose(cov: &DMatrix<f64>) -> Result<EigenBasis> {
    if !cov.is_square() {
        return Err(Error::Contract(format!(
            "eigendecompose needs a square matrix, got {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    let n = cov.nrows();
    if n == 0 {
        return Err(Error::EmptyInput("0x0 matrix".into()));
    }
    let scale = cov.amax().max(1.0);
    for i in 0..n {
        for j in (i + 1)..n {
            if (cov[(i, j)] - cov[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::Contract(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }

    let eig = SymmetricEigen::new(cov.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let null_tol = NULL_SPACE_RTOL * top;
    let eps_neg = 1e-10 * scale;
    if let Some(&bad) = order.iter().find(|&&i| eig.eigenvalues[i] < -eps_neg) {
        return Err(Error::Contract(format!(
            "matrix is not positive semi-definite (eigenvalue {})",
            eig.eigenvalues[bad]
        )));
    }

    let mut values = Vec::with_capacity(n);
    let mut range = Vec::new();
    for &i in &order {
        let lambda = eig.eigenvalues[i];
        if top > 0.0 && lambda > null_tol {
            values.push(lambda);
            range.push(orient(eig.eigenvectors.column(i).into_owned()));
        }
    }
    let null = complete_basis(&range, n);
    values.resize(n, 0.0);
    let mut vectors = DMatrix::zeros(n, n);
    for (c, v) in range.iter().chain(null.iter()).enumerate() {
        vectors.set_column(c, &orient(v.clone()));
    }
    Ok(EigenBasis { vectors, values })
}
