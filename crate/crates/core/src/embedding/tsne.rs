use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::affinity::{joint_affinities, AffinityMatrix, PROB_FLOOR};
use super::{Embedding, Projection};
use crate::error::{Error, Result};
use crate::similarity::PairwiseMatrix;

/// Optimizer settings for the stochastic neighbor embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub output_dim: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub momentum_initial: f64,
    pub momentum_final: f64,
    pub momentum_switch_iter: usize,
    pub exaggeration_factor: f64,
    pub exaggeration_iters: usize,
    pub seed: u64,
    pub init_std: f64,
    /// Compute kernel and gradient rows on the rayon pool. Per-row
    /// arithmetic is unchanged, so results match the sequential path.
    #[serde(default)]
    pub parallel: bool,
}

impl TsneConfig {
    /// Defaults for a dataset of `k` items: perplexity
    /// min(30, ⌊(k−1)/3⌋) (at least 1), 1000 iterations, learning rate 100,
    /// momentum 0.5 → 0.8 at iteration 250, exaggeration 4 for 100
    /// iterations, initial spread 1e-4.
    pub fn for_items(k: usize) -> Self {
        let perplexity = (k.saturating_sub(1) / 3).clamp(1, 30) as f64;
        Self {
            perplexity,
            output_dim: 2,
            iterations: 1000,
            learning_rate: 100.0,
            momentum_initial: 0.5,
            momentum_final: 0.8,
            momentum_switch_iter: 250,
            exaggeration_factor: 4.0,
            exaggeration_iters: 100,
            seed: 0,
            init_std: 1e-4,
            parallel: false,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if !(self.perplexity > 0.0 && self.perplexity < k as f64) {
            return bad(format!("perplexity {} must be positive and below k = {k}", self.perplexity));
        }
        if !(2..=3).contains(&self.output_dim) {
            return bad(format!("output dimension {} must be 2 or 3", self.output_dim));
        }
        if self.iterations == 0 {
            return bad("iterations must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate {} must be positive", self.learning_rate));
        }
        for m in [self.momentum_initial, self.momentum_final] {
            if !(0.0..1.0).contains(&m) {
                return bad(format!("momentum {m} must lie in [0, 1)"));
            }
        }
        if self.momentum_switch_iter > self.iterations {
            return bad("momentum switch beyond the last iteration".into());
        }
        if !(self.exaggeration_factor >= 1.0) {
            return bad(format!("exaggeration factor {} must be >= 1", self.exaggeration_factor));
        }
        if self.exaggeration_iters > self.iterations {
            return bad("exaggeration phase longer than the run".into());
        }
        if !(self.init_std > 0.0) {
            return bad(format!("initial spread {} must be positive", self.init_std));
        }
        Ok(())
    }
}

/// Student-t kernel values for a row-major k×d coordinate buffer.
struct Kernel {
    /// Unnormalized (1 + ‖y_i − y_j‖²)^−1, zero on the diagonal, row-major.
    q_tilde: Vec<f64>,
    normalizer: f64,
}

fn kernel_row(y: &[f64], k: usize, d: usize, i: usize, out: &mut [f64]) -> f64 {
    let yi = &y[i * d..(i + 1) * d];
    let mut sum = 0.0;
    for j in 0..k {
        if j == i {
            out[j] = 0.0;
            continue;
        }
        let yj = &y[j * d..(j + 1) * d];
        let mut dist2 = 0.0;
        for c in 0..d {
            let diff = yi[c] - yj[c];
            dist2 += diff * diff;
        }
        let q = 1.0 / (1.0 + dist2);
        out[j] = q;
        sum += q;
    }
    sum
}

fn kernel(y: &[f64], k: usize, d: usize, parallel: bool) -> Kernel {
    let mut q_tilde = vec![0.0; k * k];
    let row_sums: Vec<f64> = if parallel {
        q_tilde
            .par_chunks_mut(k)
            .enumerate()
            .map(|(i, row)| kernel_row(y, k, d, i, row))
            .collect()
    } else {
        q_tilde
            .chunks_mut(k)
            .enumerate()
            .map(|(i, row)| kernel_row(y, k, d, i, row))
            .collect()
    };
    // fixed reduction order
    let normalizer = row_sums.iter().sum();
    Kernel { q_tilde, normalizer }
}

fn gradient_row(p: &[f64], scale: f64, kern: &Kernel, y: &[f64], k: usize, d: usize, i: usize, out: &mut [f64]) {
    out.fill(0.0);
    let yi = &y[i * d..(i + 1) * d];
    for j in 0..k {
        if j == i {
            continue;
        }
        let qt = kern.q_tilde[i * k + j];
        let q = qt / kern.normalizer;
        let coeff = 4.0 * (scale * p[i * k + j] - q) * qt;
        let yj = &y[j * d..(j + 1) * d];
        for c in 0..d {
            out[c] += coeff * (yi[c] - yj[c]);
        }
    }
}

fn gradient(p: &[f64], scale: f64, kern: &Kernel, y: &[f64], k: usize, d: usize, parallel: bool) -> Vec<f64> {
    let mut grad = vec![0.0; k * d];
    if parallel {
        grad.par_chunks_mut(d)
            .enumerate()
            .for_each(|(i, row)| gradient_row(p, scale, kern, y, k, d, i, row));
    } else {
        grad.chunks_mut(d)
            .enumerate()
            .for_each(|(i, row)| gradient_row(p, scale, kern, y, k, d, i, row));
    }
    grad
}

fn kl_flat(p: &[f64], kern: &Kernel, k: usize) -> f64 {
    let mut cost = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let pij = p[i * k + j];
            let q = (kern.q_tilde[i * k + j] / kern.normalizer).max(PROB_FLOOR);
            cost += pij * (pij / q).ln();
        }
    }
    cost
}

fn to_flat(m: &DMatrix<f64>) -> Vec<f64> {
    m.row_iter().flat_map(|r| r.iter().copied().collect::<Vec<_>>()).collect()
}

/// Low-dimensional joint probabilities Q (floored at [`PROB_FLOOR`] off the
/// diagonal) and the kernel normalizer S = Σ_{i≠j} (1 + ‖y_i − y_j‖²)^−1.
pub fn low_dim_affinities(y: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let (k, d) = y.shape();
    let kern = kernel(&to_flat(y), k, d, false);
    let q = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            0.0
        } else {
            (kern.q_tilde[i * k + j] / kern.normalizer).max(PROB_FLOOR)
        }
    });
    (q, kern.normalizer)
}

/// KL(P‖Q) = Σ_{i≠j} p_ij ln(p_ij / q_ij), natural log.
pub fn kl_cost(p: &DMatrix<f64>, q: &DMatrix<f64>) -> f64 {
    let k = p.nrows();
    let mut cost = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i != j && p[(i, j)] > 0.0 {
                cost += p[(i, j)] * (p[(i, j)] / q[(i, j)].max(PROB_FLOOR)).ln();
            }
        }
    }
    cost
}

/// ∂KL/∂y_i = 4 Σ_j (p_ij − q_ij)(y_i − y_j)(1 + ‖y_i − y_j‖²)^−1.
pub fn tsne_gradient(p: &DMatrix<f64>, q: &DMatrix<f64>, y: &DMatrix<f64>) -> DMatrix<f64> {
    let (k, d) = y.shape();
    let mut grad = DMatrix::zeros(k, d);
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let mut dist2 = 0.0;
            for c in 0..d {
                dist2 += (y[(i, c)] - y[(j, c)]).powi(2);
            }
            let coeff = 4.0 * (p[(i, j)] - q[(i, j)]) / (1.0 + dist2);
            for c in 0..d {
                grad[(i, c)] += coeff * (y[(i, c)] - y[(j, c)]);
            }
        }
    }
    grad
}

/// Gradient descent with momentum and early exaggeration from a seeded
/// Gaussian start. The cost trace holds the un-exaggerated KL at the start
/// of every iteration.
pub fn optimize(p: &AffinityMatrix, config: &TsneConfig, ids: Vec<String>) -> Result<Embedding> {
    let k = p.len();
    config.validate(k)?;
    if ids.len() != k {
        return Err(Error::Contract(format!("{} ids for {k} items", ids.len())));
    }
    let d = config.output_dim;
    let p_flat = to_flat(p.matrix());

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let normal = Normal::new(0.0, config.init_std)
        .map_err(|e| Error::Validation(format!("initial spread: {e}")))?;
    let mut y: Vec<f64> = (0..k * d).map(|_| normal.sample(&mut rng)).collect();
    let mut velocity = vec![0.0; k * d];
    let mut trace = Vec::with_capacity(config.iterations);

    for iter in 0..config.iterations {
        let kern = kernel(&y, k, d, config.parallel);
        let cost = kl_flat(&p_flat, &kern, k);
        if !cost.is_finite() {
            return Err(Error::Divergence {
                iteration: iter,
                learning_rate: config.learning_rate,
            });
        }
        trace.push(cost);
        if (iter + 1) % 100 == 0 {
            log::info!("iteration {:>5}: KL = {cost:.6}", iter + 1);
        }

        let scale = if iter < config.exaggeration_iters {
            config.exaggeration_factor
        } else {
            1.0
        };
        let momentum = if iter < config.momentum_switch_iter {
            config.momentum_initial
        } else {
            config.momentum_final
        };
        let grad = gradient(&p_flat, scale, &kern, &y, k, d, config.parallel);
        for ((v, yv), g) in velocity.iter_mut().zip(y.iter_mut()).zip(&grad) {
            *v = momentum * *v - config.learning_rate * g;
            *yv += *v;
        }
        for c in 0..d {
            let mean = (0..k).map(|i| y[i * d + c]).sum::<f64>() / k as f64;
            for i in 0..k {
                y[i * d + c] -= mean;
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                iteration: iter,
                learning_rate: config.learning_rate,
            });
        }
    }

    Ok(Embedding {
        ids,
        labels: vec![None; k],
        coords: DMatrix::from_row_slice(k, d, &y),
        cost_trace: trace,
        projection: Projection::Tsne(config.clone()),
    })
}

/// Calibrates Gaussian affinities on `distances` and optimizes the layout.
pub fn tsne_embed(distances: &PairwiseMatrix, config: &TsneConfig) -> Result<Embedding> {
    let k = distances.len();
    if k < 3 {
        return Err(Error::EmptyInput(format!("t-SNE needs at least 3 items, got {k}")));
    }
    config.validate(k)?;
    let p = joint_affinities(distances, config.perplexity)?;
    optimize(&p, config, distances.ids().to_vec())
}
