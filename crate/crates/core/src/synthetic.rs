//! Seeded synthetic MTS fixtures: VAR(1) groups with distinct
//! cross-correlation structure, an EEG-shaped two-class surrogate and an
//! hourly activity series shaped like a wearable export.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{MtsDataset, MtsItem};
use crate::error::Result;
use crate::similarity::{eigendecompose, eros, weights_from_bases, WeightAggregator};

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Haar-distributed orthogonal matrix from the QR factorization of a
/// Gaussian matrix.
pub fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(n, n, |_, _| normal(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Correlation matrix with eigen-directions drawn at random and the given
/// spectrum before rescaling to unit diagonal.
pub fn random_correlation(spectrum: &[f64], rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = spectrum.len();
    let q = random_orthogonal(n, rng);
    let cov = &q * DMatrix::from_diagonal(&DVector::from_column_slice(spectrum)) * q.transpose();
    DMatrix::from_fn(n, n, |i, j| cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt())
}

/// m steps of x_t = a·x_{t−1} + L·e_t with L Lᵀ = (1 − a²)·C, so the
/// stationary covariance is C. The first state is drawn from the
/// stationary law.
pub fn var1_series(m: usize, ar: f64, correlation: &DMatrix<f64>, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = correlation.nrows();
    let chol = correlation
        .clone()
        .cholesky()
        .expect("correlation matrix must be positive definite")
        .l();
    let innov = (1.0 - ar * ar).sqrt();
    let mut out = DMatrix::zeros(m, n);
    let mut state = &chol * DVector::from_fn(n, |_, _| normal(rng));
    for t in 0..m {
        if t > 0 {
            let e = DVector::from_fn(n, |_, _| normal(rng));
            state = state * ar + &chol * e * innov;
        }
        out.set_row(t, &state.transpose());
    }
    out
}

fn group_structures(q: &DMatrix<f64>, spectrum: &[f64], groups: usize) -> Vec<DMatrix<f64>> {
    let n = spectrum.len();
    (0..groups)
        .map(|g| {
            let mut cov = DMatrix::zeros(n, n);
            for (rank, lambda) in spectrum.iter().enumerate() {
                let v = q.column((rank + g) % n);
                cov += v * v.transpose() * *lambda;
            }
            DMatrix::from_fn(n, n, |i, j| cov[(i, j)] / (cov[(i, i)] * cov[(j, j)]).sqrt())
        })
        .collect()
}

/// Largest EROS similarity between any two population structures.
fn structure_overlap(structures: &[DMatrix<f64>]) -> Result<f64> {
    let bases = structures
        .iter()
        .map(eigendecompose)
        .collect::<Result<Vec<_>>>()?;
    let w = weights_from_bases(&bases, WeightAggregator::Mean)?;
    let mut worst: f64 = 0.0;
    for a in 0..bases.len() {
        for b in (a + 1)..bases.len() {
            worst = worst.max(eros(&bases[a], &bases[b], &w)?);
        }
    }
    Ok(worst)
}

/// `groups` × `per_group` items of m×n VAR(1) data. Items in a group share
/// one correlation structure; every variable has unit stationary variance
/// in every group, so groups differ only in how variables co-move.
///
/// Group g ranks the columns of an orthogonal basis cyclically shifted by
/// g. The basis is the least overlapping of 32 random draws, scored by the
/// EROS similarity of the resulting population structures. Labels are
/// `g0`, `g1`, …
pub fn var_groups(groups: usize, per_group: usize, m: usize, n: usize, seed: u64) -> Result<MtsDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spectrum: Vec<f64> = (0..n).map(|i| 0.5f64.powi(i as i32) * 4.0 + 0.05).collect();
    let mut best: Option<(f64, Vec<DMatrix<f64>>)> = None;
    for _ in 0..32 {
        let q = random_orthogonal(n, &mut rng);
        let structures = group_structures(&q, &spectrum, groups);
        let overlap = structure_overlap(&structures)?;
        if best.as_ref().is_none_or(|(o, _)| overlap < *o) {
            best = Some((overlap, structures));
        }
    }
    let structures = best.map(|(_, s)| s).unwrap_or_default();
    let mut items = Vec::with_capacity(groups * per_group);
    for i in 0..per_group {
        for (g, corr) in structures.iter().enumerate() {
            let values = var1_series(m, 0.5, corr, &mut rng);
            items.push(MtsItem::new(format!("g{g}_{i:03}"), values, Some(format!("g{g}")))?);
        }
    }
    MtsDataset::from_items(items)
}

/// Two-class EEG-shaped surrogate: `trials` items of `m` samples over `n`
/// channels. Each trial mixes a few AR(1) latent sources into the channels
/// through a subject-specific mixing matrix that perturbs a class-level
/// one, plus white sensor noise. Classes are `control` and `alcoholic`,
/// with consecutive blocks of `trials_per_subject` trials per subject.
pub fn eeg_surrogate(trials: usize, trials_per_subject: usize, m: usize, n: usize, seed: u64) -> Result<MtsDataset> {
    const SOURCES: usize = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let class_mixing: Vec<DMatrix<f64>> = (0..2)
        .map(|_| DMatrix::from_fn(n, SOURCES, |_, _| normal(&mut rng)))
        .collect();
    let source_ar = [0.95, 0.9, 0.8, 0.7, 0.5, 0.3];
    let subjects = trials.div_ceil(trials_per_subject.max(1));
    let mut items = Vec::with_capacity(trials);
    for s in 0..subjects {
        let class = s % 2;
        let label = if class == 0 { "control" } else { "alcoholic" };
        let mixing = &class_mixing[class] + DMatrix::from_fn(n, SOURCES, |_, _| 0.35 * normal(&mut rng));
        for t in 0..trials_per_subject {
            if items.len() == trials {
                break;
            }
            let mut src = DVector::from_fn(SOURCES, |_, _| normal(&mut rng));
            let mut values = DMatrix::zeros(m, n);
            for step in 0..m {
                for (j, a) in source_ar.iter().enumerate() {
                    src[j] = a * src[j] + (1.0 - a * a).sqrt() * normal(&mut rng);
                }
                let row = &mixing * &src;
                for c in 0..n {
                    values[(step, c)] = row[c] + 0.5 * normal(&mut rng);
                }
            }
            items.push(MtsItem::new(format!("s{s:02}_t{t:02}"), values, Some(label.into()))?);
        }
    }
    let names = (0..n).map(|c| format!("ch{c:02}")).collect();
    MtsDataset::new(items, names)
}

pub const ACTIVITY_VARIABLES: [&str; 5] = ["steps", "calories", "hr_avg", "hr_peak", "hr_low"];

/// One subject's hourly activity over `days` days with the five
/// wearable variables. Activity drops during a treatment window in the
/// middle third of the days. Values are rounded like device exports.
pub fn hourly_activity(subject: &str, days: usize, seed: u64) -> Result<MtsDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hours = days * 24;
    let mut values = DMatrix::zeros(hours, 5);
    for h in 0..hours {
        let day = h / 24;
        let hour = (h % 24) as f64;
        let treatment = day >= days / 3 && day < 2 * days / 3;
        let awake = (hour - 14.0).abs() < 8.0;
        let level = if treatment { 0.4 } else { 1.0 } * if awake { 1.0 } else { 0.05 };
        let steps = (level * 600.0 * (1.0 + 0.5 * normal(&mut rng))).max(0.0).round();
        let calories = (60.0 + steps * 0.04 + 5.0 * normal(&mut rng)).round();
        let hr_avg = (62.0 + 20.0 * level + 3.0 * normal(&mut rng)).round();
        let hr_peak = hr_avg + (10.0 + 15.0 * level + 3.0 * rng.random::<f64>()).round();
        let hr_low = hr_avg - (5.0 + 3.0 * rng.random::<f64>()).round();
        values.set_row(h, &nalgebra::RowDVector::from_row_slice(&[steps, calories, hr_avg, hr_peak, hr_low]));
    }
    let item = MtsItem::new(subject, values, None)?;
    MtsDataset::new(vec![item], ACTIVITY_VARIABLES.iter().map(|s| s.to_string()).collect())
}
