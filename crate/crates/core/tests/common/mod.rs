#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use mtsne::data::write_csv;
use mtsne::{MtsDataset, MtsItem};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn mtsne(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtsne"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("failed to launch mtsne")
}

pub fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Two groups of 10 two-variable items. Group `a` sits near level 0 with
/// co-moving variables, group `b` near level 4 with opposed ones, so
/// level-based and structure-based distances both separate them.
pub fn two_blobs(seed: u64) -> MtsDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = 16;
    let mut items = Vec::new();
    for i in 0..10 {
        for (name, level, sign) in [("a", 0.0, 1.0), ("b", 4.0, -1.0)] {
            let mut values = DMatrix::zeros(m, 2);
            for t in 0..m {
                let s = normal(&mut rng);
                values[(t, 0)] = level + s + 0.1 * normal(&mut rng);
                values[(t, 1)] = level + sign * s + 0.1 * normal(&mut rng);
            }
            items.push(MtsItem::new(format!("{name}{i:02}"), values, Some(name.to_string())).unwrap());
        }
    }
    MtsDataset::new(items, vec!["x".into(), "y".into()]).unwrap()
}

pub fn write_labelled(ds: &MtsDataset, path: &Path) {
    write_csv(ds, path).unwrap();
}

pub fn labels_of(ds: &MtsDataset) -> Vec<String> {
    ds.items().iter().map(|i| i.label().unwrap_or("").to_string()).collect()
}

/// 1224 hourly rows of the five wearable variables for one subject,
/// written without an id column so the file stem names the series.
pub fn write_activity(path: &Path, seed: u64) -> MtsDataset {
    let ds = mtsne::synthetic::hourly_activity("p01", 51, seed).unwrap();
    let item = &ds.items()[0];
    let mut w = csv::Writer::from_path(path).unwrap();
    let mut header = vec!["hour".to_string()];
    header.extend(ds.variable_names().iter().cloned());
    w.write_record(&header).unwrap();
    for (h, row) in item.values().row_iter().enumerate() {
        let mut rec = vec![h.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec).unwrap();
    }
    w.flush().unwrap();
    ds
}
