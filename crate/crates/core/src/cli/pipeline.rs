//! The preprocess → similarity → embedding → evaluation stages behind the
//! subcommands, plus the on-disk matrix cache.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::{AffinitySource, Method, RunConfig};
use super::render::{annotation_text, render_scatter};
use crate::data::{
    aggregate_matrix, load_path, normalize, segment, write_csv, write_item_csv, Aggregator,
    MtsDataset, NormalizationScope, PreprocessReport,
};
use crate::embedding::{direct_affinities, optimize, pca_project, tsne_embed, Embedding, Projection};
use crate::error::{Error, Result};
use crate::eval::{knn_label_agreement, trustworthiness, EvalReport};
use crate::similarity::{dtw_matrix, eros_matrix, euclidean_matrix, similarity_to_distance, PairwiseMatrix};

/// Dataset after normalization and segmentation, with the segmented raw
/// values kept for annotations.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: MtsDataset,
    pub raw: MtsDataset,
    pub report: Option<PreprocessReport>,
    /// Content hash of `dataset`, the base of every cache key.
    pub digest: String,
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    let input = cfg.input()?;
    let raw = load_path(input, &cfg.schema).map_err(|e| e.in_stage("load"))?;
    info!("loaded {} items of width {} from {}", raw.len(), raw.width(), input.display());

    let (mut dataset, mut report) = if cfg.normalize {
        let scope = if cfg.per_item {
            NormalizationScope::PerItem
        } else {
            NormalizationScope::Pooled
        };
        let (ds, rep) = normalize(&raw, scope).map_err(|e| e.in_stage("normalize"))?;
        (ds, Some(rep))
    } else {
        (raw.clone(), None)
    };
    let mut raw = raw;
    if let Some(w) = cfg.window {
        let (seg, dropped) = segment(&dataset, w).map_err(|e| e.in_stage("segment"))?;
        raw = segment(&raw, w).map_err(|e| e.in_stage("segment"))?.0;
        if let Some(r) = report.as_mut() {
            r.record_segmentation(w, dropped);
        }
        info!("segmented into {} items of {} rows, {} rows dropped", seg.len(), w, dropped);
        dataset = seg;
    }
    let digest = dataset_digest(&dataset);
    Ok(Prepared {
        dataset,
        raw,
        report,
        digest,
    })
}

fn dataset_digest(ds: &MtsDataset) -> String {
    let mut h = Sha256::new();
    for name in ds.variable_names() {
        h.update(name.as_bytes());
        h.update([0]);
    }
    for item in ds.items() {
        h.update(item.id().as_bytes());
        h.update([0]);
        h.update(item.label().unwrap_or("").as_bytes());
        h.update([item.label().is_some() as u8]);
        h.update((item.len() as u64).to_le_bytes());
        for v in item.values().iter() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

#[derive(Serialize)]
struct PreprocessSummary<'a> {
    items: usize,
    variables: &'a [String],
    normalized: bool,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    report: Option<&'a PreprocessReport>,
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `preprocessed.csv`, one CSV per item under `items/` and
/// `report.json` into the output directory.
pub fn cmd_preprocess(cfg: &RunConfig) -> Result<Prepared> {
    let prepared = prepare(cfg)?;
    let ds = &prepared.dataset;
    let items_dir = cfg.out.join("items");
    create_dir(&items_dir)?;
    write_csv(ds, &cfg.out.join("preprocessed.csv"))?;
    for item in ds.items() {
        write_item_csv(item, ds.variable_names(), &items_dir.join(format!("{}.csv", item.id())))?;
    }
    let summary = PreprocessSummary {
        items: ds.len(),
        variables: ds.variable_names(),
        normalized: cfg.normalize,
        report: prepared.report.as_ref(),
    };
    write_text(&cfg.out.join("report.json"), &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    info!("wrote {} items to {}", ds.len(), cfg.out.display());
    Ok(prepared)
}

fn item_aggregators(cfg: &RunConfig, ds: &MtsDataset) -> Vec<Aggregator> {
    cfg.item_agg.clone().unwrap_or_else(|| vec![Aggregator::Mean; ds.width()])
}

fn aggregate_spec(aggs: &[Aggregator]) -> String {
    aggs.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",")
}

/// Loads a pairwise matrix from the cache or computes and stores it. The
/// file name carries a prefix of the key; the full key and the item ids
/// are checked on load.
fn cached_matrix(
    cfg: &RunConfig,
    prepared: &Prepared,
    tag: &str,
    params: &str,
    compute: impl FnOnce() -> Result<PairwiseMatrix>,
) -> Result<(PairwiseMatrix, String)> {
    let mut h = Sha256::new();
    h.update(prepared.digest.as_bytes());
    h.update(tag.as_bytes());
    h.update([0]);
    h.update(params.as_bytes());
    let key = hex::encode(h.finalize());
    let dir = cfg.cache_dir();
    let path = dir.join(format!("{tag}-{}.json", &key[..16]));
    if path.exists() {
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let (matrix, stored) = PairwiseMatrix::from_json(&text).map_err(|e| Error::StaleCache {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        if stored.as_deref() != Some(key.as_str()) {
            return Err(Error::StaleCache {
                path,
                reason: "content key does not match the current input".into(),
            });
        }
        if matrix.ids() != prepared.dataset.ids().as_slice() {
            return Err(Error::StaleCache {
                path,
                reason: "item ids differ from the current input".into(),
            });
        }
        info!("loaded {tag} matrix from {}", path.display());
        return Ok((matrix, key));
    }
    let matrix = compute()?;
    create_dir(&dir)?;
    write_text(&path, &matrix.to_json(Some(&key))?)?;
    Ok((matrix, key))
}

/// One method's embedding together with the high-dimensional distances it
/// was computed from.
pub struct MethodRun {
    pub method: Method,
    pub embedding: Embedding,
    pub high: PairwiseMatrix,
    pub cache_key: String,
}

fn eros_distances(cfg: &RunConfig, p: &Prepared) -> Result<(PairwiseMatrix, PairwiseMatrix, String)> {
    let (sim, key) = cached_matrix(cfg, p, "eros", &format!("{:?}", cfg.aggregator), || {
        eros_matrix(&p.dataset, cfg.aggregator)
    })
    .map_err(|e| e.in_stage("eros"))?;
    let dist = similarity_to_distance(&sim).map_err(|e| e.in_stage("eros"))?;
    Ok((sim, dist, key))
}

fn euclidean_distances(cfg: &RunConfig, p: &Prepared, flatten: bool) -> Result<(PairwiseMatrix, String)> {
    let ds = &p.dataset;
    let aggs = item_aggregators(cfg, ds);
    let params = if flatten {
        "flatten".to_string()
    } else {
        aggregate_spec(&aggs)
    };
    cached_matrix(cfg, p, "euclidean", &params, || {
        let vectors = if flatten { flattened(ds)? } else { aggregate_matrix(ds, &aggs)? };
        euclidean_matrix(&vectors, ds.ids())
    })
    .map_err(|e| e.in_stage("euclidean"))
}

/// Row-major (m·n)-vectors; every item must have the same length.
fn flattened(ds: &MtsDataset) -> Result<DMatrix<f64>> {
    let m = ds.items()[0].len();
    if let Some(item) = ds.items().iter().find(|it| it.len() != m) {
        return Err(Error::Dimension(format!(
            "--flatten needs equal-length items; {} has {} rows, expected {m}",
            item.id(),
            item.len()
        )));
    }
    let n = ds.width();
    Ok(DMatrix::from_fn(ds.len(), m * n, |i, c| ds.items()[i].values()[(c / n, c % n)]))
}

pub fn run_method(cfg: &RunConfig, p: &Prepared, method: Method) -> Result<MethodRun> {
    let ds = &p.dataset;
    ds.require_pairwise()?;
    let tsne_cfg = cfg.tsne_config(ds.len());
    let (embedding, high, cache_key) = match method {
        Method::Mtsne => {
            let (sim, dist, key) = eros_distances(cfg, p)?;
            let emb = match cfg.affinity_from {
                AffinitySource::Distance => tsne_embed(&dist, &tsne_cfg),
                AffinitySource::Direct => direct_affinities(&sim).and_then(|a| optimize(&a, &tsne_cfg, ds.ids())),
            }
            .map_err(|e| e.in_stage("tsne"))?;
            (emb, dist, key)
        }
        Method::TsneEuclidean => {
            let (dist, key) = euclidean_distances(cfg, p, cfg.flatten)?;
            let emb = tsne_embed(&dist, &tsne_cfg).map_err(|e| e.in_stage("tsne"))?;
            (emb, dist, key)
        }
        Method::TsneDtw => {
            let (dist, key) = cached_matrix(cfg, p, "dtw", &format!("{:?}", cfg.dtw_band), || {
                dtw_matrix(ds, cfg.dtw_band)
            })
            .map_err(|e| e.in_stage("dtw"))?;
            let emb = tsne_embed(&dist, &tsne_cfg).map_err(|e| e.in_stage("tsne"))?;
            (emb, dist, key)
        }
        Method::Pca => {
            let aggs = item_aggregators(cfg, ds);
            let vectors = aggregate_matrix(ds, &aggs).map_err(|e| e.in_stage("aggregate"))?;
            let emb = pca_project(&vectors, cfg.dim, ds.ids()).map_err(|e| e.in_stage("pca"))?;
            let (dist, key) = euclidean_distances(cfg, p, false)?;
            (emb, dist, key)
        }
    };
    let embedding = embedding.with_labels(ds.labels())?;
    Ok(MethodRun {
        method,
        embedding,
        high,
        cache_key,
    })
}

/// Annotation strings for every item, with `{aggN}` taken from the raw
/// (unnormalized) segment values.
fn annotations(cfg: &RunConfig, p: &Prepared) -> Result<Option<Vec<String>>> {
    let Some(template) = &cfg.plot.annotate else {
        return Ok(None);
    };
    let aggs = item_aggregators(cfg, &p.raw);
    let raw = aggregate_matrix(&p.raw, &aggs)?;
    p.raw
        .items()
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let row: Vec<f64> = raw.row(i).iter().copied().collect();
            annotation_text(template, item.id(), item.label(), i, Some(&row))
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

#[derive(Serialize)]
struct Sidecar<'a> {
    method: &'a str,
    seed: u64,
    items: usize,
    final_cost: Option<f64>,
    cost_trace: &'a [f64],
    projection: &'a Projection,
    cache_key: &'a str,
    config: &'a RunConfig,
}

/// Paths of the files written for one method.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub svg: PathBuf,
}

fn write_artifacts(cfg: &RunConfig, run: &MethodRun, notes: Option<&[String]>) -> Result<Artifacts> {
    create_dir(&cfg.out)?;
    let name = run.method.name();
    let artifacts = Artifacts {
        csv: cfg.out.join(format!("{name}.csv")),
        json: cfg.out.join(format!("{name}.json")),
        svg: cfg.out.join(format!("{name}.svg")),
    };
    let emb = &run.embedding;
    emb.write_csv(&artifacts.csv)?;
    let mut resolved = cfg.clone();
    resolved.method = run.method;
    let sidecar = Sidecar {
        method: name,
        seed: cfg.seed,
        items: emb.len(),
        final_cost: emb.final_cost(),
        cost_trace: &emb.cost_trace,
        projection: &emb.projection,
        cache_key: &run.cache_key,
        config: &resolved,
    };
    write_text(&artifacts.json, &(serde_json::to_string_pretty(&sidecar)? + "\n"))?;
    let mut plot = cfg.plot.clone();
    plot.title.get_or_insert_with(|| name.to_string());
    write_text(&artifacts.svg, &render_scatter(emb, &plot, notes).map_err(|e| e.in_stage("render"))?)?;
    Ok(artifacts)
}

pub fn cmd_embed(cfg: &RunConfig) -> Result<(MethodRun, Artifacts)> {
    let prepared = prepare(cfg)?;
    let notes = annotations(cfg, &prepared)?;
    let run = run_method(cfg, &prepared, cfg.method)?;
    let artifacts = write_artifacts(cfg, &run, notes.as_deref())?;
    info!("wrote {}", artifacts.csv.display());
    Ok((run, artifacts))
}

fn evaluate(cfg: &RunConfig, p: &Prepared, method: Method, notes: Option<&[String]>) -> Result<EvalReport> {
    let run = run_method(cfg, p, method)?;
    write_artifacts(cfg, &run, notes)?;
    let kn = cfg.k_neighbors;
    Ok(EvalReport {
        method: method.name().to_string(),
        knn_agreement: Some(knn_label_agreement(&run.embedding, kn).map_err(|e| e.in_stage("eval"))?),
        trustworthiness: Some(trustworthiness(&run.high, &run.embedding, kn).map_err(|e| e.in_stage("eval"))?),
        k_neighbors: kn,
        seed: cfg.seed,
        error: None,
    })
}

/// Outcome of `compare`: one report per method, with the errors kept
/// alongside so the caller can pick an exit code.
pub struct Comparison {
    pub reports: Vec<EvalReport>,
    pub errors: Vec<Error>,
}

/// Runs every method with the shared seed and writes `reports.json`.
pub fn cmd_compare(cfg: &RunConfig) -> Result<Comparison> {
    let prepared = prepare(cfg)?;
    let notes = annotations(cfg, &prepared)?;
    let unlabeled = prepared.dataset.items().iter().find(|it| it.label().is_none()).map(|it| it.id().to_string());
    let kn = cfg.k_neighbors;
    let mut reports = Vec::new();
    let mut errors = Vec::new();
    for method in Method::ALL {
        let outcome = match &unlabeled {
            Some(id) => Err(Error::MissingLabel(id.clone())),
            None => evaluate(cfg, &prepared, method, notes.as_deref()),
        };
        match outcome {
            Ok(r) => {
                info!(
                    "{method}: knn agreement {:.4}, trustworthiness {:.4}",
                    r.knn_agreement.unwrap_or(f64::NAN),
                    r.trustworthiness.unwrap_or(f64::NAN)
                );
                reports.push(r);
            }
            Err(e) => {
                log::error!("{method}: {e}");
                reports.push(EvalReport::failed(method.name(), kn, cfg.seed, &e));
                errors.push(e);
            }
        }
    }
    create_dir(&cfg.out)?;
    write_text(&cfg.out.join("reports.json"), &(serde_json::to_string_pretty(&reports)? + "\n"))?;
    Ok(Comparison { reports, errors })
}

/// Re-renders an embedding CSV. `{aggN}` placeholders are unavailable here.
pub fn cmd_render(cfg: &RunConfig, embedding: &Path, out: &Path) -> Result<()> {
    let emb = Embedding::read_csv(embedding)?;
    let notes = match &cfg.plot.annotate {
        Some(t) => Some(
            emb.ids
                .iter()
                .zip(&emb.labels)
                .enumerate()
                .map(|(i, (id, label))| annotation_text(t, id, label.as_deref(), i, None))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    write_text(out, &render_scatter(&emb, &cfg.plot, notes.as_deref())?)
}
