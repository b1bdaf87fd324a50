mod common;

use std::fs;
use std::path::Path;

use common::{labels_of, mtsne, stderr, two_blobs, write_activity, write_labelled};
use mtsne::eval::{adjusted_rand_index, kmeans, EvalReport};
use mtsne::{Embedding, MtsDataset, MtsItem};
use nalgebra::DMatrix;
use tempfile::tempdir;

const WRITTEN: [&str; 6] = ["--id-column", "id", "--label-column", "label", "--time-column", "t"];

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn run_ok(args: &[&str]) {
    let out = mtsne(args);
    assert!(out.status.success(), "mtsne {args:?} failed: {}", stderr(&out));
}

#[test]
fn empty_csv_is_a_usage_error() {
    let dir = tempdir().unwrap();
    let input = dir.path().join("empty.csv");
    fs::write(&input, "").unwrap();
    let out = mtsne(&["preprocess", "--input", s(&input), "--out", s(&dir.path().join("out"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("empty input"), "{}", stderr(&out));
}

#[test]
fn bad_cell_reports_position() {
    let dir = tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    fs::write(&input, "t,a,b\n0,1,2\n1,x,3\n").unwrap();
    let out = mtsne(&["preprocess", "--input", s(&input), "--time-column", "t", "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("(2, 1)"), "{}", stderr(&out));
}

#[test]
fn help_and_unknown_flags() {
    let out = mtsne(&["embed", "--help"]);
    assert!(out.status.success());
    let help = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--input",
        "--schema",
        "--window",
        "--method",
        "--dim",
        "--perplexity",
        "--iterations",
        "--learning-rate",
        "--seed",
        "--aggregator",
        "--affinity-from",
        "--flatten",
        "--out",
    ] {
        assert!(help.contains(flag), "help lacks {flag}");
    }
    assert_eq!(mtsne(&["embed", "--bogus"]).status.code(), Some(2));
    assert_eq!(mtsne(&["embed", "--dim", "4", "--input", "x.csv"]).status.code(), Some(2));
}

#[test]
fn activity_window_gives_daily_items() {
    let dir = tempdir().unwrap();
    let input = dir.path().join("p01.csv");
    write_activity(&input, 3);
    let out = dir.path().join("out");
    run_ok(&["preprocess", "--input", s(&input), "--time-column", "hour", "--window", "24", "--out", s(&out)]);
    let items: Vec<_> = fs::read_dir(out.join("items")).unwrap().collect();
    assert_eq!(items.len(), 51);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["items"], 51);
    assert_eq!(report["window"], 24);
    assert_eq!(report["dropped_rows"], 0);

    // idempotent
    let first = fs::read(out.join("preprocessed.csv")).unwrap();
    run_ok(&["preprocess", "--input", s(&input), "--time-column", "hour", "--window", "24", "--out", s(&out)]);
    assert_eq!(first, fs::read(out.join("preprocessed.csv")).unwrap());
}

#[test]
fn eeg_shaped_directory_ingestion() {
    let dir = tempdir().unwrap();
    let input = dir.path().join("trials");
    fs::create_dir(&input).unwrap();
    let header: Vec<String> = (0..64).map(|c| format!("ch{c:02}")).collect();
    let header = header.join(",");
    for trial in 0..600 {
        let mut text = header.clone();
        text.push('\n');
        for t in 0..256 {
            let row: Vec<String> = (0..64).map(|c| ((trial * 7 + t * 3 + c * 5) % 17).to_string()).collect();
            text.push_str(&row.join(","));
            text.push('\n');
        }
        fs::write(input.join(format!("trial{trial:03}.csv")), text).unwrap();
    }
    let out = dir.path().join("out");
    run_ok(&["preprocess", "--input", s(&input), "--no-normalize", "--out", s(&out)]);
    let items: Vec<_> = fs::read_dir(out.join("items")).unwrap().collect();
    assert_eq!(items.len(), 600);
    let one = fs::read_to_string(out.join("items").join("trial042.csv")).unwrap();
    let rows: Vec<&str> = one.lines().collect();
    assert_eq!(rows.len(), 257);
    assert_eq!(rows[1].split(',').count(), 65); // time column plus 64 channels
}

#[test]
fn embed_is_deterministic() {
    let dir = tempdir().unwrap();
    let input = dir.path().join("p01.csv");
    write_activity(&input, 5);
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        run_ok(&[
            "embed", "--input", s(&input), "--time-column", "hour", "--window", "24", "--method", "mtsne", "--dim", "3",
            "--seed", "7", "--out", s(&out),
        ]);
        outputs.push((fs::read(out.join("mtsne.csv")).unwrap(), fs::read(out.join("mtsne.svg")).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let emb = Embedding::read_csv(&dir.path().join("a").join("mtsne.csv")).unwrap();
    assert_eq!((emb.len(), emb.dim()), (51, 3));

    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a").join("mtsne.json")).unwrap()).unwrap();
    assert_eq!(sidecar["seed"], 7);
    assert_eq!(sidecar["config"]["dim"], 3);
    assert_eq!(sidecar["cost_trace"].as_array().unwrap().len(), 1000);
}

#[test]
fn pca_on_rank_one_data() {
    let dir = tempdir().unwrap();
    let items = (0..12)
        .map(|i| {
            let c = i as f64 - 5.5;
            let values = DMatrix::from_fn(6, 3, |t, j| c * (j as f64 + 1.0) + if t % 2 == 0 { 0.5 } else { -0.5 });
            MtsItem::new(format!("i{i:02}"), values, None).unwrap()
        })
        .collect();
    let ds = MtsDataset::from_items(items).unwrap();
    let input = dir.path().join("rank1.csv");
    mtsne::data::write_csv(&ds, &input).unwrap();
    let out = dir.path().join("out");
    run_ok(&["embed", "--input", s(&input), "--id-column", "id", "--time-column", "t", "--method", "pca", "--out", s(&out)]);
    let emb = Embedding::read_csv(&out.join("pca.csv")).unwrap();
    assert!(emb.coords.column(1).amax() <= 1e-8, "{}", emb.coords.column(1));
    assert!(emb.coords.column(0).amax() > 1.0);
}

#[test]
fn dtw_tsne_separates_blobs() {
    let dir = tempdir().unwrap();
    let ds = two_blobs(11);
    let input = dir.path().join("blobs.csv");
    write_labelled(&ds, &input);
    let out = dir.path().join("out");
    let mut args = vec!["embed", "--input", s(&input), "--method", "tsne-dtw", "--seed", "3", "--out", s(&out)];
    args.extend(WRITTEN);
    run_ok(&args);
    let emb = Embedding::read_csv(&out.join("tsne-dtw.csv")).unwrap();
    let clusters = kmeans(&emb.coords, 2, 3, 10).unwrap();
    assert!(adjusted_rand_index(&clusters, &labels_of(&ds)) >= 0.9);
    assert!(out.join("cache").read_dir().unwrap().count() == 1);

    // a second run reuses the cached matrix and reproduces the output
    let first = fs::read(out.join("tsne-dtw.csv")).unwrap();
    run_ok(&args);
    assert_eq!(first, fs::read(out.join("tsne-dtw.csv")).unwrap());
}

#[test]
fn tampered_cache_is_stale() {
    let dir = tempdir().unwrap();
    let ds = two_blobs(2);
    let input = dir.path().join("blobs.csv");
    write_labelled(&ds, &input);
    let out = dir.path().join("out");
    let mut args = vec!["embed", "--input", s(&input), "--method", "tsne-dtw", "--iterations", "300", "--out", s(&out)];
    args.extend(WRITTEN);
    run_ok(&args);
    let entry = out.join("cache").read_dir().unwrap().next().unwrap().unwrap().path();
    let mut envelope: serde_json::Value = serde_json::from_str(&fs::read_to_string(&entry).unwrap()).unwrap();
    envelope["key"] = serde_json::Value::String("0".repeat(64));
    fs::write(&entry, envelope.to_string()).unwrap();
    let res = mtsne(&args);
    assert_eq!(res.status.code(), Some(1));
    assert!(stderr(&res).contains("stale cache"), "{}", stderr(&res));
}

#[test]
fn compare_reports_every_method() {
    let dir = tempdir().unwrap();
    let ds = two_blobs(5);
    let input = dir.path().join("blobs.csv");
    write_labelled(&ds, &input);
    let out = dir.path().join("out");
    let mut args = vec!["compare", "--input", s(&input), "--k-neighbors", "5", "--seed", "1", "--out", s(&out)];
    args.extend(WRITTEN);
    run_ok(&args);
    let reports: Vec<EvalReport> = serde_json::from_str(&fs::read_to_string(out.join("reports.json")).unwrap()).unwrap();
    let names: Vec<&str> = reports.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(names, ["mtsne", "pca", "tsne-euclidean", "tsne-dtw"]);
    for r in &reports {
        assert!(r.error.is_none(), "{r:?}");
        for v in [r.knn_agreement.unwrap(), r.trustworthiness.unwrap()] {
            assert!((0.0..=1.0).contains(&v));
        }
        assert_eq!((r.k_neighbors, r.seed), (5, 1));
        assert!(out.join(format!("{}.svg", r.method)).exists());
    }
    assert_eq!(reports[0].knn_agreement, Some(1.0));
}

#[test]
fn compare_without_labels_fails_per_method() {
    let dir = tempdir().unwrap();
    let input = dir.path().join("blobs.csv");
    let items = two_blobs(1)
        .items()
        .iter()
        .map(|it| MtsItem::new(it.id(), it.values().clone(), None).unwrap())
        .collect();
    mtsne::data::write_csv(&MtsDataset::from_items(items).unwrap(), &input).unwrap();
    let out = dir.path().join("out");
    let res = mtsne(&[
        "compare", "--input", s(&input), "--id-column", "id", "--time-column", "t", "--k-neighbors", "5", "--out", s(&out),
    ]);
    assert_eq!(res.status.code(), Some(2));
    let reports: Vec<EvalReport> = serde_json::from_str(&fs::read_to_string(out.join("reports.json")).unwrap()).unwrap();
    assert_eq!(reports.len(), 4);
    assert!(reports.iter().all(|r| r.error.as_deref().is_some_and(|e| e.contains("no label"))));
}

#[test]
fn render_counts_and_determinism() {
    let dir = tempdir().unwrap();
    let emb_path = dir.path().join("emb.csv");
    fs::write(&emb_path, "id,label,y1,y2\np,a,0,0\nq,b,1,0\nr,a,0,1\n").unwrap();
    let mut svgs = Vec::new();
    for name in ["one.svg", "two.svg"] {
        let out = dir.path().join(name);
        run_ok(&["render", "--embedding", s(&emb_path), "--out", s(&out), "--annotate", "{index}:{id}"]);
        svgs.push(fs::read_to_string(out).unwrap());
    }
    assert_eq!(svgs[0], svgs[1]);
    assert_eq!(svgs[0].matches("<circle").count(), 3);
    assert_eq!(svgs[0].matches("class=\"legend-entry\"").count(), 2);
    assert!(svgs[0].contains(">1:q</text>"));
}

#[test]
fn activity_annotations_carry_step_counts() {
    let dir = tempdir().unwrap();
    let input = dir.path().join("day.csv");
    let raw = write_activity(&input, 9);
    let out = dir.path().join("out");
    run_ok(&[
        "embed", "--input", s(&input), "--time-column", "hour", "--window", "24", "--method", "pca", "--item-agg",
        "sum,sum,mean,max,min", "--annotate", "{id}_{agg0}", "--out", s(&out),
    ]);
    let svg = fs::read_to_string(out.join("pca.svg")).unwrap();
    let steps = raw.items()[0].values().column(0);
    for day in 0..51 {
        let total: f64 = steps.rows(day * 24, 24).sum();
        let text = format!(">day_{day}_{}</text>", total as i64);
        assert!(svg.contains(&text), "missing {text}");
    }
}
