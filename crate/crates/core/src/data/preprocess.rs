use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{MtsDataset, MtsItem};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NormalizationScope {
    /// Column statistics pooled over every row of every item.
    #[default]
    Pooled,
    PerItem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemStats {
    pub id: String,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// Record of the transformations applied by the preprocessing stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub scope: NormalizationScope,
    /// Pooled per-variable means of the input.
    pub means: Vec<f64>,
    /// Pooled per-variable population standard deviations of the input.
    pub stds: Vec<f64>,
    /// Columns that were only centered because their variance is zero.
    /// Under per-item scope this counts (item, column) pairs.
    pub zero_variance_count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub item_stats: Vec<ItemStats>,
    pub window: Option<usize>,
    pub dropped_rows: usize,
}

impl PreprocessReport {
    pub fn record_segmentation(&mut self, window: usize, dropped_rows: usize) {
        self.window = Some(window);
        self.dropped_rows = dropped_rows;
    }
}

/// Population mean and standard deviation of each column over a set of
/// matrices sharing a column count.
fn column_stats<'a>(mats: impl Iterator<Item = &'a DMatrix<f64>> + Clone, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut count = 0usize;
    let mut sums = vec![0.0; n];
    for m in mats.clone() {
        count += m.nrows();
        for (j, s) in sums.iter_mut().enumerate() {
            *s += m.column(j).iter().sum::<f64>();
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / count as f64).collect();
    let mut sq = vec![0.0; n];
    for m in mats {
        for (j, s) in sq.iter_mut().enumerate() {
            *s += m.column(j).iter().map(|v| (v - means[j]).powi(2)).sum::<f64>();
        }
    }
    let stds = sq.iter().map(|s| (s / count as f64).sqrt()).collect();
    (means, stds)
}

fn standardize(values: &DMatrix<f64>, means: &[f64], stds: &[f64]) -> (DMatrix<f64>, usize) {
    let mut zero = 0;
    let mut out = values.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let scale = if stds[j] > 0.0 {
            stds[j]
        } else {
            zero += 1;
            1.0
        };
        col.apply(|v| *v = (*v - means[j]) / scale);
    }
    (out, zero)
}

/// Mean-centers and scales every variable by its population standard
/// deviation, with statistics pooled over all items.
pub fn mean_center_normalize(dataset: &MtsDataset) -> Result<(MtsDataset, PreprocessReport)> {
    normalize(dataset, NormalizationScope::Pooled)
}

pub fn normalize(dataset: &MtsDataset, scope: NormalizationScope) -> Result<(MtsDataset, PreprocessReport)> {
    if dataset.is_empty() {
        return Err(Error::EmptyInput("dataset has no items".into()));
    }
    let n = dataset.width();
    let (means, stds) = column_stats(dataset.items().iter().map(MtsItem::values), n);
    let mut zero_variance_count = 0;
    let mut item_stats = Vec::new();
    let mut items = Vec::with_capacity(dataset.len());
    for item in dataset.items() {
        let values = match scope {
            NormalizationScope::Pooled => {
                let (v, _) = standardize(item.values(), &means, &stds);
                v
            }
            NormalizationScope::PerItem => {
                let (m, s) = column_stats(std::iter::once(item.values()), n);
                let (v, zero) = standardize(item.values(), &m, &s);
                zero_variance_count += zero;
                item_stats.push(ItemStats {
                    id: item.id().to_string(),
                    means: m,
                    stds: s,
                });
                v
            }
        };
        items.push(item.with_values(values)?);
    }
    if scope == NormalizationScope::Pooled {
        zero_variance_count = stds.iter().filter(|s| **s <= 0.0).count();
    }
    let report = PreprocessReport {
        scope,
        means,
        stds,
        zero_variance_count,
        item_stats,
        window: None,
        dropped_rows: 0,
    };
    Ok((MtsDataset::new(items, dataset.variable_names().to_vec())?, report))
}

/// Splits every item into consecutive non-overlapping windows of `window`
/// rows. Returns the segmented dataset and the number of trailing rows
/// dropped across all items.
pub fn segment(dataset: &MtsDataset, window: usize) -> Result<(MtsDataset, usize)> {
    if window == 0 {
        return Err(Error::Validation("window must be at least 1".into()));
    }
    let mut items = Vec::new();
    let mut dropped = 0;
    for item in dataset.items() {
        let m = item.len();
        let count = m / window;
        dropped += m - count * window;
        for s in 0..count {
            let values = item.values().rows(s * window, window).into_owned();
            items.push(MtsItem::new(
                format!("{}_{}", item.id(), s),
                values,
                item.label().map(str::to_string),
            )?);
        }
    }
    if items.is_empty() {
        return Err(Error::EmptyInput(format!(
            "window {window} is longer than every item"
        )));
    }
    Ok((MtsDataset::new(items, dataset.variable_names().to_vec())?, dropped))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregator {
    Sum,
    Mean,
    Max,
    Min,
}

impl Aggregator {
    pub fn apply(self, values: impl Iterator<Item = f64>) -> f64 {
        match self {
            Aggregator::Sum => values.sum(),
            Aggregator::Mean => {
                let (s, c) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
                s / c as f64
            }
            Aggregator::Max => values.fold(f64::NEG_INFINITY, f64::max),
            Aggregator::Min => values.fold(f64::INFINITY, f64::min),
        }
    }
}

impl FromStr for Aggregator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sum" => Ok(Aggregator::Sum),
            "mean" | "avg" => Ok(Aggregator::Mean),
            "max" => Ok(Aggregator::Max),
            "min" => Ok(Aggregator::Min),
            other => Err(Error::Schema(format!("unknown aggregator {other:?}"))),
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregator::Sum => "sum",
            Aggregator::Mean => "mean",
            Aggregator::Max => "max",
            Aggregator::Min => "min",
        })
    }
}

/// Parses a comma separated aggregator list such as `sum,sum,mean,max,min`.
pub fn parse_aggregators(s: &str) -> Result<Vec<Aggregator>> {
    s.split(',').map(str::parse).collect()
}

/// Collapses an item to one value per variable.
pub fn aggregate_item(item: &MtsItem, spec: &[Aggregator]) -> Result<Vec<f64>> {
    if spec.len() != item.width() {
        return Err(Error::Schema(format!(
            "aggregator list has {} entries but the item has {} variables",
            spec.len(),
            item.width()
        )));
    }
    Ok(spec
        .iter()
        .zip(item.values().column_iter())
        .map(|(agg, col)| agg.apply(col.iter().copied()))
        .collect())
}

/// k×n matrix of aggregated item vectors, one row per item.
pub fn aggregate_matrix(dataset: &MtsDataset, spec: &[Aggregator]) -> Result<DMatrix<f64>> {
    let rows = dataset
        .items()
        .iter()
        .map(|it| aggregate_item(it, spec))
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(rows.len(), spec.len(), |i, j| rows[i][j]))
}
