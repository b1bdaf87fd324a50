use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{MtsDataset, MtsItem};
use crate::error::{Error, Result};

/// Column layout of an input CSV.
///
/// Without an `id_column` every file holds exactly one item whose id is
/// the file stem. An empty `variables` list selects every column not
/// claimed by the id, label or time columns, in header order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub id_column: Option<String>,
    pub label_column: Option<String>,
    pub time_column: Option<String>,
    pub variables: Vec<String>,
}

impl CsvSchema {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Schema matching the files produced by [`write_csv`].
    pub fn written(labelled: bool) -> Self {
        Self {
            id_column: Some("id".into()),
            label_column: labelled.then(|| "label".into()),
            time_column: Some("t".into()),
            variables: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, PartialOrd)]
enum TimeKey {
    Num(f64),
    Text(String),
}

struct Row {
    time: Option<String>,
    label: Option<String>,
    values: Vec<f64>,
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Schema(format!("missing column {name:?}")))
}

/// Reads one CSV file into a dataset, grouping rows by the id column and
/// ordering each group by the time column (file order when absent).
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<MtsDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(Error::EmptyInput(format!("{} has no header", path.display())));
    }

    let id_idx = schema.id_column.as_deref().map(|c| column_index(&headers, c)).transpose()?;
    let label_idx = schema.label_column.as_deref().map(|c| column_index(&headers, c)).transpose()?;
    let time_idx = schema.time_column.as_deref().map(|c| column_index(&headers, c)).transpose()?;
    let (var_idx, var_names): (Vec<usize>, Vec<String>) = if schema.variables.is_empty() {
        headers
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != id_idx && Some(*i) != label_idx && Some(*i) != time_idx)
            .map(|(i, h)| (i, h.trim().to_string()))
            .unzip()
    } else {
        schema
            .variables
            .iter()
            .map(|v| column_index(&headers, v).map(|i| (i, v.clone())))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip()
    };
    if var_idx.is_empty() {
        return Err(Error::Schema("no variable columns selected".into()));
    }

    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<Row>> = HashMap::new();
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();

    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row_no = r + 1;
        let mut values = Vec::with_capacity(var_idx.len());
        for (c, &idx) in var_idx.iter().enumerate() {
            let cell = record.get(idx).unwrap_or("").trim();
            if cell.is_empty() {
                return Err(Error::Validation(format!(
                    "missing value at ({row_no}, {}) in {}",
                    c + 1,
                    path.display()
                )));
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row: row_no,
                column: c + 1,
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(Error::Validation(format!(
                    "non-finite value {cell:?} at ({row_no}, {}) in {}",
                    c + 1,
                    path.display()
                )));
            }
            values.push(v);
        }
        let id = match id_idx {
            Some(i) => record.get(i).unwrap_or("").trim().to_string(),
            None => stem.clone(),
        };
        let row = Row {
            time: time_idx.map(|i| record.get(i).unwrap_or("").trim().to_string()),
            label: label_idx
                .map(|i| record.get(i).unwrap_or("").trim().to_string())
                .filter(|l| !l.is_empty()),
            values,
        };
        groups
            .entry(id.clone())
            .or_insert_with(|| {
                order.push(id);
                Vec::new()
            })
            .push(row);
    }
    if order.is_empty() {
        return Err(Error::EmptyInput(format!("{} has no data rows", path.display())));
    }

    let n = var_idx.len();
    let items = order
        .into_iter()
        .map(|id| {
            let rows = groups.remove(&id).unwrap_or_default();
            build_item(id, rows, n)
        })
        .collect::<Result<Vec<_>>>()?;
    MtsDataset::new(items, var_names)
}

fn build_item(id: String, mut rows: Vec<Row>, n: usize) -> Result<MtsItem> {
    if rows.iter().all(|r| r.time.is_some()) {
        let numeric: Option<Vec<f64>> = rows
            .iter()
            .map(|r| r.time.as_deref().and_then(|t| t.parse::<f64>().ok()))
            .collect();
        let keys: Vec<TimeKey> = match numeric {
            Some(nums) => nums.into_iter().map(TimeKey::Num).collect(),
            None => rows
                .iter()
                .map(|r| TimeKey::Text(r.time.clone().unwrap_or_default()))
                .collect(),
        };
        let mut keyed: Vec<(TimeKey, Row)> = keys.into_iter().zip(rows).collect();
        keyed.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        keyed.dedup_by(|later, first| {
            let dup = later.0 == first.0;
            if dup {
                log::warn!("item {id:?}: dropping duplicate timestamp {:?}", later.0);
            }
            dup
        });
        rows = keyed.into_iter().map(|(_, r)| r).collect();
    }

    let label = rows[0].label.clone();
    if rows.iter().any(|r| r.label != label) {
        return Err(Error::Validation(format!("item {id:?} has inconsistent labels")));
    }
    let m = rows.len();
    let values = DMatrix::from_fn(m, n, |i, j| rows[i].values[j]);
    MtsItem::new(id, values, label)
}

fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads a single CSV file or every `*.csv` file of a directory. Files are
/// read in parallel and merged in path order.
pub fn load_path(path: &Path, schema: &CsvSchema) -> Result<MtsDataset> {
    if !path.is_dir() {
        return load_csv(path, schema);
    }
    let files = csv_files(path)?;
    if files.is_empty() {
        return Err(Error::EmptyInput(format!("no CSV files in {}", path.display())));
    }
    let parts = files
        .par_iter()
        .map(|f| load_csv(f, schema))
        .collect::<Result<Vec<_>>>()?;
    let names = parts[0].variable_names().to_vec();
    let mut items = Vec::new();
    for (part, file) in parts.into_iter().zip(&files) {
        if part.variable_names() != names.as_slice() {
            return Err(Error::Schema(format!(
                "{} has different variable columns than {}",
                file.display(),
                files[0].display()
            )));
        }
        items.extend(part.items);
    }
    MtsDataset::new(items, names)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn flush(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a dataset in long format: `id[,label],t,<variables...>`, where
/// `t` is the row index within the item. Values use the shortest decimal
/// form that parses back to the same `f64`.
pub fn write_csv(dataset: &MtsDataset, path: &Path) -> Result<()> {
    let labelled = dataset.items().iter().any(|it| it.label().is_some());
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["id".to_string()];
    if labelled {
        header.push("label".into());
    }
    header.push("t".into());
    header.extend(dataset.variable_names().iter().cloned());
    w.write_record(&header)?;
    for item in dataset.items() {
        for (t, row) in item.values().row_iter().enumerate() {
            let mut rec = vec![item.id().to_string()];
            if labelled {
                rec.push(item.label().unwrap_or("").to_string());
            }
            rec.push(t.to_string());
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    flush(w, path)
}

/// Writes one item as a standalone file: `[label,]t,<variables...>`.
pub fn write_item_csv(item: &MtsItem, variable_names: &[String], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut header = Vec::new();
    if item.label().is_some() {
        header.push("label".to_string());
    }
    header.push("t".into());
    header.extend(variable_names.iter().cloned());
    w.write_record(&header)?;
    for (t, row) in item.values().row_iter().enumerate() {
        let mut rec = Vec::new();
        if let Some(l) = item.label() {
            rec.push(l.to_string());
        }
        rec.push(t.to_string());
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    flush(w, path)
}
