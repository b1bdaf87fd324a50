use std::fmt;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use super::render::PlotOptions;
use crate::data::{Aggregator, CsvSchema};
use crate::embedding::TsneConfig;
use crate::error::{Error, Result};
use crate::similarity::WeightAggregator;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    #[default]
    Mtsne,
    TsneEuclidean,
    TsneDtw,
    Pca,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Mtsne, Method::Pca, Method::TsneEuclidean, Method::TsneDtw];

    pub fn name(self) -> &'static str {
        match self {
            Method::Mtsne => "mtsne",
            Method::TsneEuclidean => "tsne-euclidean",
            Method::TsneDtw => "tsne-dtw",
            Method::Pca => "pca",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum AffinitySource {
    /// Gaussian affinities calibrated on sqrt(2(1 − s)) distances.
    #[default]
    Distance,
    /// Row-normalized similarities used directly.
    Direct,
}

/// Optimizer overrides; unset fields take the size-dependent defaults of
/// [`TsneConfig::for_items`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub perplexity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub momentum_initial: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub momentum_final: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub momentum_switch_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exaggeration_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exaggeration_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init_std: Option<f64>,
    pub parallel: bool,
}

/// Fully resolved settings of one CLI run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub schema: CsvSchema,
    pub normalize: bool,
    pub per_item: bool,
    pub window: Option<usize>,
    /// Per-variable aggregators for the aggregate vectors; all `mean` when unset.
    pub item_agg: Option<Vec<Aggregator>>,
    pub aggregator: WeightAggregator,
    pub method: Method,
    pub dim: usize,
    pub seed: u64,
    pub tsne: TsneSettings,
    pub affinity_from: AffinitySource,
    pub flatten: bool,
    pub dtw_band: Option<usize>,
    pub k_neighbors: usize,
    pub out: PathBuf,
    pub cache_dir: Option<PathBuf>,
    pub plot: PlotOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input: None,
            schema: CsvSchema::default(),
            normalize: true,
            per_item: false,
            window: None,
            item_agg: None,
            aggregator: WeightAggregator::Mean,
            method: Method::Mtsne,
            dim: 2,
            seed: 0,
            tsne: TsneSettings::default(),
            affinity_from: AffinitySource::Distance,
            flatten: false,
            dtw_band: None,
            k_neighbors: 10,
            out: PathBuf::from("out"),
            cache_dir: None,
            plot: PlotOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
    }

    pub fn input(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| Error::Validation("--input is required".into()))
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.out.join("cache"))
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=3).contains(&self.dim) {
            return Err(Error::Validation(format!("--dim must be 2 or 3, got {}", self.dim)));
        }
        if self.window == Some(0) {
            return Err(Error::Validation("--window must be at least 1".into()));
        }
        if self.k_neighbors == 0 {
            return Err(Error::Validation("--k-neighbors must be at least 1".into()));
        }
        Ok(())
    }

    /// Optimizer settings for `k` items.
    pub fn tsne_config(&self, k: usize) -> TsneConfig {
        let mut cfg = TsneConfig::for_items(k);
        let t = &self.tsne;
        cfg.output_dim = self.dim;
        cfg.seed = self.seed;
        cfg.parallel = t.parallel;
        if let Some(v) = t.perplexity {
            cfg.perplexity = v;
        }
        if let Some(v) = t.iterations {
            cfg.iterations = v;
            cfg.momentum_switch_iter = cfg.momentum_switch_iter.min(v);
            cfg.exaggeration_iters = cfg.exaggeration_iters.min(v);
        }
        if let Some(v) = t.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = t.momentum_initial {
            cfg.momentum_initial = v;
        }
        if let Some(v) = t.momentum_final {
            cfg.momentum_final = v;
        }
        if let Some(v) = t.momentum_switch_iter {
            cfg.momentum_switch_iter = v;
        }
        if let Some(v) = t.exaggeration_factor {
            cfg.exaggeration_factor = v;
        }
        if let Some(v) = t.exaggeration_iters {
            cfg.exaggeration_iters = v;
        }
        if let Some(v) = t.init_std {
            cfg.init_std = v;
        }
        cfg
    }
}
