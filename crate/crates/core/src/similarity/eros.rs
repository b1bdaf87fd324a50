use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::eigen::{covariance, eigendecompose, EigenBasis};
use super::{pairwise, MatrixKind, PairwiseMatrix};
use crate::data::MtsDataset;
use crate::error::{Error, Result};

/// Ranks whose weight falls below this contribute nothing to EROS.
pub const NEGLIGIBLE_WEIGHT: f64 = 1e-12;

/// How per-item eigenvalue spectra are combined into the dataset weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightAggregator {
    #[default]
    Mean,
    Min,
    Max,
}

impl FromStr for WeightAggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Self::Mean),
            "min" => Ok(Self::Min),
            "max" => Ok(Self::Max),
            other => Err(Error::Validation(format!("unknown weight aggregator {other:?}"))),
        }
    }
}

/// Per-rank EROS weights, non-negative and summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Normalizes `raw` to sum to one. Fails on negative or all-zero input.
    pub fn new(raw: Vec<f64>) -> Result<Self> {
        if raw.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::Contract("weights must be finite and non-negative".into()));
        }
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::Contract("weights sum to zero".into()));
        }
        Ok(Self(raw.into_iter().map(|w| w / total).collect()))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Eigenvalues scaled to sum to one; a zero spectrum becomes uniform.
fn normalized_spectrum(values: &[f64]) -> Vec<f64> {
    let total: f64 = values.iter().sum();
    if total > 0.0 {
        values.iter().map(|v| v / total).collect()
    } else {
        vec![1.0 / values.len() as f64; values.len()]
    }
}

/// Aggregates normalized spectra element-wise by rank.
pub fn weights_from_bases(bases: &[EigenBasis], aggregator: WeightAggregator) -> Result<WeightVector> {
    let first = bases
        .first()
        .ok_or_else(|| Error::EmptyInput("no eigen bases to aggregate".into()))?;
    let n = first.dim();
    if bases.iter().any(|b| b.dim() != n) {
        return Err(Error::Contract("bases differ in dimension".into()));
    }
    let spectra: Vec<Vec<f64>> = bases.iter().map(|b| normalized_spectrum(b.values())).collect();
    let raw = (0..n)
        .map(|l| {
            let col = spectra.iter().map(|s| s[l]);
            match aggregator {
                WeightAggregator::Mean => col.sum::<f64>() / spectra.len() as f64,
                WeightAggregator::Min => col.fold(f64::INFINITY, f64::min),
                WeightAggregator::Max => col.fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    WeightVector::new(raw)
}

pub fn item_bases(dataset: &MtsDataset) -> Result<Vec<EigenBasis>> {
    use rayon::prelude::*;
    dataset
        .items()
        .par_iter()
        .map(|it| eigendecompose(&covariance(it)))
        .collect()
}

pub fn eros_weights(dataset: &MtsDataset, aggregator: WeightAggregator) -> Result<WeightVector> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("dataset has no items".into()));
    }
    weights_from_bases(&item_bases(dataset)?, aggregator)
}

/// Weighted sum of absolute cosines between same-rank eigenvectors.
pub fn eros(a: &EigenBasis, b: &EigenBasis, w: &WeightVector) -> Result<f64> {
    let n = w.len();
    if a.dim() != n || b.dim() != n {
        return Err(Error::Contract(format!(
            "EROS dimension mismatch: bases {} and {}, weights {}",
            a.dim(),
            b.dim(),
            n
        )));
    }
    let (va, vb) = (a.vectors(), b.vectors());
    let mut total = 0.0;
    for (l, &wl) in w.as_slice().iter().enumerate() {
        if wl < NEGLIGIBLE_WEIGHT {
            continue;
        }
        let dot: f64 = va.column(l).iter().zip(vb.column(l).iter()).map(|(x, y)| x * y).sum();
        total += wl * dot.abs();
    }
    Ok(total)
}

/// Cached per-item bases plus the dataset weight vector.
#[derive(Debug, Clone)]
pub struct ErosModel {
    pub ids: Vec<String>,
    pub bases: Vec<EigenBasis>,
    pub weights: WeightVector,
}

impl ErosModel {
    pub fn fit(dataset: &MtsDataset, aggregator: WeightAggregator) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyInput("dataset has no items".into()));
        }
        let bases = item_bases(dataset)?;
        let weights = weights_from_bases(&bases, aggregator)?;
        Ok(Self {
            ids: dataset.ids(),
            bases,
            weights,
        })
    }

    pub fn similarity_matrix(&self) -> Result<PairwiseMatrix> {
        let k = self.bases.len();
        let data = pairwise(k, |i, j| {
            eros(&self.bases[i], &self.bases[j], &self.weights).map(|s| s.clamp(0.0, 1.0))
        })?;
        let mut data = data;
        for i in 0..k {
            data[(i, i)] = 1.0;
        }
        PairwiseMatrix::new(MatrixKind::Similarity, self.ids.clone(), data)
    }
}

/// k×k EROS similarity matrix with diagonal exactly one.
pub fn eros_matrix(dataset: &MtsDataset, aggregator: WeightAggregator) -> Result<PairwiseMatrix> {
    dataset.require_pairwise()?;
    ErosModel::fit(dataset, aggregator)?.similarity_matrix()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::MtsItem;
    use nalgebra::DMatrix;

    fn rotation(theta: f64) -> EigenBasis {
        let (s, c) = theta.sin_cos();
        EigenBasis::from_parts(DMatrix::from_row_slice(2, 2, &[c, -s, s, c]), vec![1.0, 0.5]).unwrap()
    }

    fn basis_with_values(values: Vec<f64>) -> EigenBasis {
        let n = values.len();
        EigenBasis::from_parts(DMatrix::identity(n, n), values).unwrap()
    }

    #[test]
    fn weight_examples() {
        let w = weights_from_bases(&[basis_with_values(vec![0.7, 0.3])], WeightAggregator::Mean).unwrap();
        assert!((w.as_slice()[0] - 0.7).abs() < 1e-15 && (w.as_slice()[1] - 0.3).abs() < 1e-15);

        let w = weights_from_bases(
            &[basis_with_values(vec![1.0, 0.0]), basis_with_values(vec![0.5, 0.5])],
            WeightAggregator::Mean,
        )
        .unwrap();
        assert_eq!(w.as_slice(), &[0.75, 0.25]);

        // unnormalized spectra are normalized per item first
        let w = weights_from_bases(
            &[basis_with_values(vec![4.0, 0.0]), basis_with_values(vec![2.0, 2.0])],
            WeightAggregator::Min,
        )
        .unwrap();
        assert_eq!(w.as_slice(), &[1.0, 0.0]);

        let zero = weights_from_bases(&[basis_with_values(vec![0.0, 0.0, 0.0])], WeightAggregator::Max).unwrap();
        assert!(zero.as_slice().iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn weights_need_items() {
        let ds = MtsDataset::new(vec![], vec!["a".into()]).unwrap();
        assert!(matches!(eros_weights(&ds, WeightAggregator::Mean), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn eros_examples() {
        let w = WeightVector::new(vec![0.5, 0.5]).unwrap();
        let b = rotation(0.3);
        assert!((eros(&b, &b, &w).unwrap() - 1.0).abs() < 1e-15);

        let w1 = WeightVector::new(vec![1.0, 0.0]).unwrap();
        let orth = eros(&rotation(0.0), &rotation(std::f64::consts::FRAC_PI_2), &w1).unwrap();
        assert!(orth.abs() < 1e-15);

        let s = eros(&rotation(0.0), &rotation(std::f64::consts::FRAC_PI_4), &w).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);

        let w3 = WeightVector::new(vec![1.0, 1.0, 1.0]).unwrap();
        assert!(matches!(eros(&b, &b, &w3), Err(Error::Contract(_))));
    }

    #[test]
    fn identical_items_are_fully_similar() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.2, -0.5, 0.3, 2.0, -1.0, 0.1, 0.0]);
        let ds = MtsDataset::from_items(vec![
            MtsItem::new("a", x.clone(), None).unwrap(),
            MtsItem::new("b", x, None).unwrap(),
        ])
        .unwrap();
        let s = eros_matrix(&ds, WeightAggregator::Mean).unwrap();
        assert!((s.data() - DMatrix::from_element(2, 2, 1.0)).amax() < 1e-12);
    }

    #[test]
    fn matching_structure_scores_higher() {
        // items a and b stretch along the first axis, c along the second
        let along = |scale: f64, swap: bool| {
            let pts = [(-2.0, 0.3), (-1.0, -0.2), (0.0, 0.25), (1.0, -0.3), (2.0, 0.1)];
            let rows: Vec<Vec<f64>> = pts
                .iter()
                .map(|&(x, y)| if swap { vec![y * scale, x * scale] } else { vec![x * scale, y * scale] })
                .collect();
            rows
        };
        let ds = MtsDataset::from_items(vec![
            MtsItem::from_rows("a", &along(1.0, false), None).unwrap(),
            MtsItem::from_rows("b", &along(1.7, false), None).unwrap(),
            MtsItem::from_rows("c", &along(1.0, true), None).unwrap(),
        ])
        .unwrap();
        let s = eros_matrix(&ds, WeightAggregator::Mean).unwrap();
        let d = s.data();
        assert!(d[(0, 1)] > d[(0, 2)] && d[(0, 1)] > d[(1, 2)]);
    }
}
