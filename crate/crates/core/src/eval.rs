//! Embedding quality scores: label agreement of nearest neighbors,
//! trustworthiness, plus k-means and the adjusted Rand index for cluster
//! recovery checks.
//!
//! All neighbor rankings break distance ties by item index.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::similarity::{MatrixKind, PairwiseMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub knn_agreement: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trustworthiness: Option<f64>,
    pub k_neighbors: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EvalReport {
    pub fn failed(method: &str, k_neighbors: usize, seed: u64, err: &Error) -> Self {
        Self {
            method: method.to_string(),
            knn_agreement: None,
            trustworthiness: None,
            k_neighbors,
            seed,
            error: Some(err.to_string()),
        }
    }
}

fn squared_distances(coords: &DMatrix<f64>) -> DMatrix<f64> {
    let (k, d) = coords.shape();
    DMatrix::from_fn(k, k, |i, j| (0..d).map(|c| (coords[(i, c)] - coords[(j, c)]).powi(2)).sum())
}

/// Indices of every other point ordered by distance, ties by index.
fn ranked_neighbors(dist: &DMatrix<f64>, i: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dist.nrows()).filter(|&j| j != i).collect();
    order.sort_by(|&a, &b| dist[(i, a)].total_cmp(&dist[(i, b)]).then(a.cmp(&b)));
    order
}

/// Leave-one-out fraction of points whose own label is the strict majority
/// among their `k_neighbors` nearest embedding neighbors. A tie counts as a
/// disagreement.
pub fn knn_label_agreement(embedding: &Embedding, k_neighbors: usize) -> Result<f64> {
    let k = embedding.len();
    if k_neighbors == 0 || k_neighbors >= k {
        return Err(Error::Validation(format!("k_neighbors = {k_neighbors} must lie in [1, {k})")));
    }
    let labels: Vec<&str> = embedding
        .labels
        .iter()
        .zip(&embedding.ids)
        .map(|(l, id)| l.as_deref().ok_or_else(|| Error::MissingLabel(id.clone())))
        .collect::<Result<_>>()?;
    let dist = squared_distances(&embedding.coords);
    let mut agree = 0usize;
    for i in 0..k {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for j in ranked_neighbors(&dist, i).into_iter().take(k_neighbors) {
            *counts.entry(labels[j]).or_default() += 1;
        }
        let own = counts.get(labels[i]).copied().unwrap_or(0);
        let best_other = counts
            .iter()
            .filter(|(l, _)| **l != labels[i])
            .map(|(_, c)| *c)
            .max()
            .unwrap_or(0);
        if own > best_other {
            agree += 1;
        }
    }
    Ok(agree as f64 / k as f64)
}

/// Trustworthiness of the embedding against high-dimensional distances:
/// 1 − 2/(k·K·(2k − 3K − 1)) · Σ_i Σ_{j ∈ U_i} (r(i, j) − K), where U_i are
/// the embedding K-neighbors of i that are not among its high-dimensional
/// K-neighbors and r(i, j) is the 1-based high-dimensional rank of j.
pub fn trustworthiness(high: &PairwiseMatrix, embedding: &Embedding, k_neighbors: usize) -> Result<f64> {
    if high.kind() != MatrixKind::Distance {
        return Err(Error::Contract("trustworthiness needs a distance matrix".into()));
    }
    let k = embedding.len();
    if high.len() != k {
        return Err(Error::Contract(format!("{} distances for {k} points", high.len())));
    }
    if k_neighbors == 0 || 2 * k_neighbors >= k {
        return Err(Error::Validation(format!("k_neighbors = {k_neighbors} must lie in [1, {k}/2)")));
    }
    let low = squared_distances(&embedding.coords);
    let mut penalty = 0usize;
    for i in 0..k {
        let mut rank = vec![0usize; k];
        for (r, j) in ranked_neighbors(high.data(), i).into_iter().enumerate() {
            rank[j] = r + 1;
        }
        for j in ranked_neighbors(&low, i).into_iter().take(k_neighbors) {
            if rank[j] > k_neighbors {
                penalty += rank[j] - k_neighbors;
            }
        }
    }
    let (kf, kn) = (k as f64, k_neighbors as f64);
    let norm = 2.0 / (kf * kn * (2.0 * kf - 3.0 * kn - 1.0));
    Ok(1.0 - norm * penalty as f64)
}

/// Lloyd's k-means with k-means++ seeding, best of `restarts` by inertia.
pub fn kmeans(points: &DMatrix<f64>, clusters: usize, seed: u64, restarts: usize) -> Result<Vec<usize>> {
    let (n, d) = points.shape();
    if clusters == 0 || clusters > n {
        return Err(Error::Validation(format!("cannot form {clusters} clusters from {n} points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist2 = |i: usize, c: &[f64]| (0..d).map(|j| (points[(i, j)] - c[j]).powi(2)).sum::<f64>();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for _ in 0..restarts.max(1) {
        let first = rng.random_range(0..n);
        let mut centers: Vec<Vec<f64>> = vec![points.row(first).iter().copied().collect()];
        while centers.len() < clusters {
            let weights: Vec<f64> = (0..n)
                .map(|i| centers.iter().map(|c| dist2(i, c)).fold(f64::INFINITY, f64::min))
                .collect();
            let total: f64 = weights.iter().sum();
            let pick = if total > 0.0 {
                let mut target = rng.random::<f64>() * total;
                let mut chosen = n - 1;
                for (i, w) in weights.iter().enumerate() {
                    if target < *w {
                        chosen = i;
                        break;
                    }
                    target -= w;
                }
                chosen
            } else {
                rng.random_range(0..n)
            };
            centers.push(points.row(pick).iter().copied().collect());
        }
        let mut assign = vec![0usize; n];
        for _ in 0..300 {
            let mut changed = false;
            for (i, a) in assign.iter_mut().enumerate() {
                let nearest = (0..clusters)
                    .min_by(|&x, &y| dist2(i, &centers[x]).total_cmp(&dist2(i, &centers[y])))
                    .unwrap_or(0);
                if nearest != *a {
                    *a = nearest;
                    changed = true;
                }
            }
            for (c, center) in centers.iter_mut().enumerate() {
                let members: Vec<usize> = (0..n).filter(|&i| assign[i] == c).collect();
                if members.is_empty() {
                    continue;
                }
                for (j, v) in center.iter_mut().enumerate() {
                    *v = members.iter().map(|&i| points[(i, j)]).sum::<f64>() / members.len() as f64;
                }
            }
            if !changed {
                break;
            }
        }
        let inertia: f64 = (0..n).map(|i| dist2(i, &centers[assign[i]])).sum();
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, assign));
        }
    }
    Ok(best.map(|(_, a)| a).unwrap_or_default())
}

fn choose2(x: usize) -> f64 {
    (x as f64) * (x as f64 - 1.0) / 2.0
}

/// Chance-corrected agreement between two partitions.
pub fn adjusted_rand_index<A, B>(a: &[A], b: &[B]) -> f64
where
    A: Eq + std::hash::Hash,
    B: Eq + std::hash::Hash,
{
    assert_eq!(a.len(), b.len(), "partitions differ in length");
    let n = a.len();
    let mut table: HashMap<(&A, &B), usize> = HashMap::new();
    let mut rows: HashMap<&A, usize> = HashMap::new();
    let mut cols: HashMap<&B, usize> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    let index: f64 = table.values().map(|&c| choose2(c)).sum();
    let sum_a: f64 = rows.values().map(|&c| choose2(c)).sum();
    let sum_b: f64 = cols.values().map(|&c| choose2(c)).sum();
    let expected = sum_a * sum_b / choose2(n);
    let max = 0.5 * (sum_a + sum_b);
    if max == expected {
        return 1.0;
    }
    (index - expected) / (max - expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Projection;
    use crate::similarity::euclidean_matrix;
    use rand_distr::{Distribution, StandardNormal};

    fn embedding(coords: DMatrix<f64>, labels: Vec<&str>) -> Embedding {
        let k = coords.nrows();
        Embedding {
            ids: (0..k).map(|i| format!("p{i}")).collect(),
            labels: labels.into_iter().map(|l| Some(l.to_string())).collect(),
            coords,
            cost_trace: vec![],
            projection: Projection::Loaded,
        }
    }

    fn blobs(per: usize, rng: &mut ChaCha8Rng) -> (DMatrix<f64>, Vec<&'static str>) {
        let coords = DMatrix::from_fn(2 * per, 2, |i, _| {
            let offset = if i < per { 0.0 } else { 50.0 };
            let z: f64 = StandardNormal.sample(rng);
            offset + z
        });
        let labels = (0..2 * per).map(|i| if i < per { "a" } else { "b" }).collect();
        (coords, labels)
    }

    #[test]
    fn separated_blobs_agree_fully() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (coords, labels) = blobs(15, &mut rng);
        assert_eq!(knn_label_agreement(&embedding(coords, labels), 5).unwrap(), 1.0);
    }

    #[test]
    fn random_labels_hover_near_half() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coords = DMatrix::from_fn(200, 2, |_, _| StandardNormal.sample(&mut rng));
            let labels = (0..200).map(|_| if rng.random::<bool>() { "x" } else { "y" }).collect();
            let score = knn_label_agreement(&embedding(coords, labels), 5).unwrap();
            assert!((0.3..=0.7).contains(&score), "seed {seed}: {score}");
        }
    }

    #[test]
    fn alternating_square_disagrees() {
        let coords = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0]);
        // nearest neighbor ties are broken by index; both candidates are opposite-labeled
        let e = embedding(coords, vec!["a", "b", "a", "b"]);
        assert_eq!(knn_label_agreement(&e, 1).unwrap(), 0.0);
    }

    #[test]
    fn missing_label_is_an_error() {
        let mut e = embedding(DMatrix::zeros(3, 2), vec!["a", "b", "a"]);
        e.labels[1] = None;
        assert!(matches!(knn_label_agreement(&e, 1), Err(Error::MissingLabel(id)) if id == "p1"));
    }

    #[test]
    fn exact_embedding_is_trustworthy() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let coords = DMatrix::from_fn(30, 2, |_, _| StandardNormal.sample(&mut rng));
        let ids: Vec<String> = (0..30).map(|i| format!("p{i}")).collect();
        let high = euclidean_matrix(&coords, ids).unwrap();
        let e = embedding(coords, vec!["a"; 30]);
        for kn in [1, 5, 14] {
            assert!((trustworthiness(&high, &e, kn).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn trustworthiness_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let a = DMatrix::from_fn(20, 3, |_, _| StandardNormal.sample(&mut rng));
            let b = DMatrix::from_fn(20, 2, |_, _| StandardNormal.sample(&mut rng));
            let high = euclidean_matrix(&a, (0..20).map(|i| i.to_string()).collect()).unwrap();
            for kn in 1..10 {
                let t = trustworthiness(&high, &embedding(b.clone(), vec!["a"; 20]), kn).unwrap();
                assert!((0.0..=1.0).contains(&t));
            }
        }
        let high = euclidean_matrix(&DMatrix::zeros(4, 1), (0..4).map(|i| i.to_string()).collect()).unwrap();
        assert!(trustworthiness(&high, &embedding(DMatrix::zeros(4, 2), vec!["a"; 4]), 2).is_err());
    }

    #[test]
    fn ari_examples() {
        assert_eq!(adjusted_rand_index(&[0, 0, 1, 1], &[5, 5, 9, 9]), 1.0);
        assert!(adjusted_rand_index(&[0, 0, 1, 1], &[0, 1, 0, 1]) < 0.0);
        // sklearn reference value for this pair of labelings
        let ari = adjusted_rand_index(&[0, 0, 0, 1, 1, 1], &[0, 0, 1, 1, 2, 2]);
        assert!((ari - 0.24242424242424246).abs() < 1e-12);
    }

    #[test]
    fn kmeans_recovers_blobs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (coords, labels) = blobs(20, &mut rng);
        let assign = kmeans(&coords, 2, 0, 5).unwrap();
        assert_eq!(adjusted_rand_index(&assign, &labels), 1.0);
    }
}
