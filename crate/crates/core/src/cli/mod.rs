//! The `mtsne` command line: `preprocess`, `embed`, `compare` and `render`.
//!
//! Settings resolve as flags over the `--config` JSON file over built-in
//! defaults.

mod config;
mod pipeline;
mod render;

pub use config::{AffinitySource, Method, RunConfig, TsneSettings};
pub use pipeline::{
    cmd_compare, cmd_embed, cmd_preprocess, cmd_render, prepare, run_method, Artifacts, Comparison, MethodRun,
    Prepared,
};
pub use render::{annotation_text, render_scatter, PlotOptions};

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::data::{parse_aggregators, Aggregator, CsvSchema};
use crate::error::{Error, Result};
use crate::similarity::WeightAggregator;

#[derive(Debug, Parser)]
#[command(name = "mtsne", version, about = "Embed multivariate time series into 2-D or 3-D scatter plots")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize and segment the input and write the resulting items.
    Preprocess(PipelineArgs),
    /// Embed the items with one method and write CSV, JSON and SVG outputs.
    Embed(PipelineArgs),
    /// Run every method with a shared seed and score each embedding.
    Compare(PipelineArgs),
    /// Draw an SVG scatter plot of an embedding CSV.
    Render(RenderArgs),
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Input CSV file or directory of CSV files.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// JSON file with the CSV column layout.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub id_column: Option<String>,
    #[arg(long)]
    pub label_column: Option<String>,
    #[arg(long)]
    pub time_column: Option<String>,
    /// Comma-separated variable columns; all remaining columns when omitted.
    #[arg(long, value_delimiter = ',')]
    pub variables: Option<Vec<String>>,
    /// JSON run configuration; flags take precedence over it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Segment every series into consecutive windows of this many rows.
    #[arg(long)]
    pub window: Option<usize>,
    /// Normalize each item with its own statistics.
    #[arg(long)]
    pub per_item: bool,
    /// Skip mean-centering and normalization.
    #[arg(long)]
    pub no_normalize: bool,
    /// Per-variable aggregators for the PCA and Euclidean inputs, e.g. sum,mean,max.
    #[arg(long)]
    pub item_agg: Option<String>,
    /// How eigenvalue weights are combined across items.
    #[arg(long, value_enum)]
    pub aggregator: Option<WeightAggregatorArg>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Output dimensionality, 2 or 3.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub perplexity: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_enum)]
    pub affinity_from: Option<AffinitySource>,
    /// Euclidean t-SNE on flattened series instead of aggregate vectors.
    #[arg(long)]
    pub flatten: bool,
    /// Sakoe-Chiba band half-width for DTW.
    #[arg(long)]
    pub dtw_band: Option<usize>,
    /// Neighborhood size for the evaluation scores.
    #[arg(long)]
    pub k_neighbors: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for cached pairwise matrices; defaults to OUT/cache.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Point label template using {id}, {label}, {index} and {aggN}.
    #[arg(long)]
    pub annotate: Option<String>,
    /// Compute the gradient with multiple threads.
    #[arg(long)]
    pub parallel: bool,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum WeightAggregatorArg {
    Mean,
    Min,
    Max,
}

impl From<WeightAggregatorArg> for WeightAggregator {
    fn from(a: WeightAggregatorArg) -> Self {
        match a {
            WeightAggregatorArg::Mean => WeightAggregator::Mean,
            WeightAggregatorArg::Min => WeightAggregator::Min,
            WeightAggregatorArg::Max => WeightAggregator::Max,
        }
    }
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Embedding CSV with id,label,y1..yd columns.
    #[arg(long)]
    pub embedding: PathBuf,
    /// SVG file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON run configuration providing plot options.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Point label template using {id}, {label} and {index}.
    #[arg(long)]
    pub annotate: Option<String>,
}

impl PipelineArgs {
    /// Layers the flags over the config file (if any) and the defaults.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_json_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(path) = &self.schema {
            cfg.schema = CsvSchema::from_json_file(path)?;
        }
        let s = &mut cfg.schema;
        if self.id_column.is_some() {
            s.id_column = self.id_column.clone();
        }
        if self.label_column.is_some() {
            s.label_column = self.label_column.clone();
        }
        if self.time_column.is_some() {
            s.time_column = self.time_column.clone();
        }
        if let Some(v) = &self.variables {
            s.variables = v.clone();
        }
        set(&mut cfg.input, self.input.clone());
        set(&mut cfg.window, self.window);
        if self.per_item {
            cfg.per_item = true;
        }
        if self.no_normalize {
            cfg.normalize = false;
        }
        if let Some(spec) = &self.item_agg {
            let aggs: Vec<Aggregator> = parse_aggregators(spec)?;
            cfg.item_agg = Some(aggs);
        }
        if let Some(a) = self.aggregator {
            cfg.aggregator = a.into();
        }
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(d) = self.dim {
            cfg.dim = d;
        }
        set(&mut cfg.tsne.perplexity, self.perplexity);
        set(&mut cfg.tsne.iterations, self.iterations);
        set(&mut cfg.tsne.learning_rate, self.learning_rate);
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(a) = self.affinity_from {
            cfg.affinity_from = a;
        }
        if self.flatten {
            cfg.flatten = true;
        }
        set(&mut cfg.dtw_band, self.dtw_band);
        if let Some(k) = self.k_neighbors {
            cfg.k_neighbors = k;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        set(&mut cfg.cache_dir, self.cache_dir.clone());
        set(&mut cfg.plot.annotate, self.annotate.clone());
        if self.parallel {
            cfg.tsne.parallel = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn exit_code(err: &Error) -> i32 {
    if err.is_usage() {
        2
    } else {
        1
    }
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Preprocess(args) => {
            cmd_preprocess(&args.resolve()?)?;
            Ok(0)
        }
        Command::Embed(args) => {
            cmd_embed(&args.resolve()?)?;
            Ok(0)
        }
        Command::Compare(args) => {
            let cmp = cmd_compare(&args.resolve()?)?;
            Ok(if cmp.errors.len() < cmp.reports.len() {
                0
            } else if cmp.errors.iter().all(Error::is_usage) {
                2
            } else {
                1
            })
        }
        Command::Render(args) => {
            let mut cfg = match &args.config {
                Some(path) => RunConfig::from_json_file(path)?,
                None => RunConfig::default(),
            };
            set(&mut cfg.plot.annotate, args.annotate.clone());
            cmd_render(&cfg, &args.embedding, &args.out)?;
            Ok(0)
        }
    }
}

/// Parses `args` (program name first) and runs the subcommand, returning
/// the process exit code: 0 on success, 1 on a runtime failure and 2 on a
/// usage or validation error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
