//! Datasets of multivariate time series items, CSV ingestion and the
//! preprocessing stage (normalization, segmentation, aggregation).

mod csv_io;
mod preprocess;

pub use csv_io::{load_csv, load_path, write_csv, write_item_csv, CsvSchema};
pub use preprocess::{
    aggregate_item, aggregate_matrix, mean_center_normalize, normalize, parse_aggregators,
    segment, Aggregator, NormalizationScope, PreprocessReport,
};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// One m×n observation matrix: rows are time steps, columns are variables.
#[derive(Debug, Clone, PartialEq)]
pub struct MtsItem {
    id: String,
    values: DMatrix<f64>,
    label: Option<String>,
}

impl MtsItem {
    pub fn new(id: impl Into<String>, values: DMatrix<f64>, label: Option<String>) -> Result<Self> {
        let id = id.into();
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::EmptyInput(format!("item {id:?} has no observations")));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let (col, row) = (pos / values.nrows(), pos % values.nrows());
            return Err(Error::Validation(format!(
                "item {id:?} has a non-finite value at row {}, column {}",
                row + 1,
                col + 1
            )));
        }
        Ok(Self { id, values, label })
    }

    /// Builds an item from row-major data.
    pub fn from_rows(id: impl Into<String>, rows: &[Vec<f64>], label: Option<String>) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("ragged rows".into()));
        }
        let values = DMatrix::from_fn(m, n, |i, j| rows[i][j]);
        Self::new(id, values, label)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    /// Number of time steps m.
    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    /// Number of variables n.
    pub fn width(&self) -> usize {
        self.values.ncols()
    }

    pub fn with_values(&self, values: DMatrix<f64>) -> Result<Self> {
        Self::new(self.id.clone(), values, self.label.clone())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtsDataset {
    items: Vec<MtsItem>,
    variable_names: Vec<String>,
}

impl MtsDataset {
    pub fn new(items: Vec<MtsItem>, variable_names: Vec<String>) -> Result<Self> {
        let n = variable_names.len();
        if let Some(bad) = items.iter().find(|it| it.width() != n) {
            return Err(Error::Dimension(format!(
                "item {:?} has {} variables, dataset declares {}",
                bad.id(),
                bad.width(),
                n
            )));
        }
        Ok(Self {
            items,
            variable_names,
        })
    }

    /// Dataset with generated variable names `v0..v{n-1}`.
    pub fn from_items(items: Vec<MtsItem>) -> Result<Self> {
        let n = items
            .first()
            .map(MtsItem::width)
            .ok_or_else(|| Error::EmptyInput("dataset has no items".into()))?;
        let names = (0..n).map(|i| format!("v{i}")).collect();
        Self::new(items, names)
    }

    pub fn items(&self) -> &[MtsItem] {
        &self.items
    }

    pub fn variable_names(&self) -> &[String] {
        &self.variable_names
    }

    /// Item count k.
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Variable count n.
    pub fn width(&self) -> usize {
        self.variable_names.len()
    }

    pub fn ids(&self) -> Vec<String> {
        self.items.iter().map(|it| it.id().to_string()).collect()
    }

    pub fn labels(&self) -> Vec<Option<String>> {
        self.items.iter().map(|it| it.label.clone()).collect()
    }

    pub(crate) fn require_pairwise(&self) -> Result<()> {
        if self.items.len() < 2 {
            return Err(Error::EmptyInput(format!(
                "pairwise computations need at least 2 items, got {}",
                self.items.len()
            )));
        }
        Ok(())
    }
}
