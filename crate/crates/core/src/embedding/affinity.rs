use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::similarity::{MatrixKind, PairwiseMatrix};

/// Lower bound applied to off-diagonal joint probabilities.
pub const PROB_FLOOR: f64 = 1e-12;

/// Accepted gap between achieved and requested perplexity.
pub const PERPLEXITY_TOL: f64 = 1e-5;

const MAX_BRACKET_STEPS: usize = 64;
const MAX_BISECTIONS: usize = 200;

/// Symmetric joint probabilities over item pairs, zero on the diagonal,
/// summing to one, with every off-diagonal entry at least [`PROB_FLOOR`].
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    p: DMatrix<f64>,
}

impl AffinityMatrix {
    /// Symmetrizes row-conditional probabilities as (p_{j|i} + p_{i|j}) / 2k
    /// and applies the floor.
    pub fn from_conditional(cond: &DMatrix<f64>) -> Result<Self> {
        let k = cond.nrows();
        if !cond.is_square() || k < 2 {
            return Err(Error::Contract("conditional matrix must be square with k >= 2".into()));
        }
        let mut p = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in (i + 1)..k {
                let v = (cond[(i, j)] + cond[(j, i)]) / (2.0 * k as f64);
                p[(i, j)] = v;
                p[(j, i)] = v;
            }
        }
        Ok(Self { p: floor_and_renormalize(p) })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.p.nrows() == 0
    }
}

/// Raises entries below the floor and shrinks the excess above it so the
/// off-diagonal total is one again: p' = floor + c·(max(p, floor) − floor).
fn floor_and_renormalize(mut p: DMatrix<f64>) -> DMatrix<f64> {
    let k = p.nrows();
    let mut total = 0.0;
    for i in 0..k {
        for j in 0..k {
            if i != j {
                p[(i, j)] = p[(i, j)].max(PROB_FLOOR);
                total += p[(i, j)];
            }
        }
    }
    let floor_mass = PROB_FLOOR * (k * (k - 1)) as f64;
    let c = (1.0 - floor_mass) / (total - floor_mass);
    for i in 0..k {
        for j in (i + 1)..k {
            let v = PROB_FLOOR + c * (p[(i, j)] - PROB_FLOOR);
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
    p
}

/// Result of calibrating one row: the Gaussian bandwidth and the
/// conditional neighbor probabilities in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct RowCalibration {
    pub sigma: f64,
    pub probs: Vec<f64>,
    /// 2^H of the returned distribution, H in bits.
    pub perplexity: f64,
}

struct RowState<'a> {
    shifted: &'a [f64],
}

impl RowState<'_> {
    /// Probabilities at precision `beta` and their perplexity.
    fn eval(&self, beta: f64) -> (Vec<f64>, f64) {
        let weights: Vec<f64> = self.shifted.iter().map(|d| (-beta * d).exp()).collect();
        let z: f64 = weights.iter().sum();
        let probs: Vec<f64> = weights.iter().map(|w| w / z).collect();
        let h_bits: f64 = -probs
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| p * p.log2())
            .sum::<f64>();
        (probs, h_bits.exp2())
    }
}

/// Finds σ such that the conditional distribution
/// p_j ∝ exp(−d_j² / 2σ²) has the requested perplexity.
pub fn calibrate_row(distances: &[f64], perplexity: f64) -> Result<RowCalibration> {
    calibrate_row_at(0, distances, perplexity)
}

pub(crate) fn calibrate_row_at(row: usize, distances: &[f64], perplexity: f64) -> Result<RowCalibration> {
    let fail = |perp: f64| Error::Calibration {
        row,
        entropy: perp.log2(),
        perplexity,
    };
    if distances.is_empty() || !distances.iter().any(|d| *d > 0.0) {
        return Err(fail(1.0));
    }
    let sq: Vec<f64> = distances.iter().map(|d| d * d).collect();
    let min = sq.iter().copied().fold(f64::INFINITY, f64::min);
    let shifted: Vec<f64> = sq.iter().map(|d| d - min).collect();
    let state = RowState { shifted: &shifted };

    let finish = |beta: f64, probs: Vec<f64>, perp: f64| {
        let sigma = if beta > 0.0 { (0.5 / beta).sqrt() } else { f64::INFINITY };
        Ok(RowCalibration { sigma, probs, perplexity: perp })
    };

    let (probs0, perp0) = state.eval(0.0);
    if (perp0 - perplexity).abs() <= PERPLEXITY_TOL * 1e-3 {
        return finish(0.0, probs0, perp0);
    }
    if perp0 < perplexity {
        return Err(fail(perp0));
    }
    let spread: f64 = shifted.iter().sum::<f64>() / shifted.len() as f64;
    if spread <= 0.0 {
        return Err(fail(perp0));
    }

    let mut lo = 0.0;
    let mut hi = 1.0 / spread;
    let mut bracketed = false;
    let mut last = perp0;
    for _ in 0..MAX_BRACKET_STEPS {
        let (probs, perp) = state.eval(hi);
        last = perp;
        // targets at the tie-limited floor are only approached from above
        if (perp - perplexity).abs() <= 1e-9 * perplexity {
            return finish(hi, probs, perp);
        }
        if perp < perplexity {
            bracketed = true;
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    if !bracketed {
        return Err(fail(last));
    }

    let mut best = (f64::INFINITY, 0.0);
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let (_, perp) = state.eval(mid);
        let gap = (perp - perplexity).abs();
        if gap < best.0 {
            best = (gap, mid);
        }
        if gap <= 1e-12 * perplexity || mid == lo || mid == hi {
            break;
        }
        if perp > perplexity {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let beta = best.1;
    let (probs, perp) = state.eval(beta);
    if (perp - perplexity).abs() > PERPLEXITY_TOL {
        return Err(fail(perp));
    }
    finish(beta, probs, perp)
}

fn check_perplexity(k: usize, perplexity: f64) -> Result<()> {
    if k < 3 {
        return Err(Error::EmptyInput(format!("affinities need at least 3 items, got {k}")));
    }
    if !(perplexity >= 1.0 && perplexity < k as f64) {
        return Err(Error::Validation(format!(
            "perplexity {perplexity} must lie in [1, {k})"
        )));
    }
    Ok(())
}

/// Gaussian joint affinities with per-row bandwidths calibrated to the
/// target perplexity.
pub fn joint_affinities(distances: &PairwiseMatrix, perplexity: f64) -> Result<AffinityMatrix> {
    if distances.kind() != MatrixKind::Distance {
        return Err(Error::Contract("joint affinities need a distance matrix".into()));
    }
    let k = distances.len();
    check_perplexity(k, perplexity)?;
    let d = distances.data();
    let mut cond = DMatrix::zeros(k, k);
    for i in 0..k {
        let row: Vec<f64> = (0..k).filter(|&j| j != i).map(|j| d[(i, j)]).collect();
        let cal = calibrate_row_at(i, &row, perplexity)?;
        for (p, j) in cal.probs.into_iter().zip((0..k).filter(|&j| j != i)) {
            cond[(i, j)] = p;
        }
    }
    AffinityMatrix::from_conditional(&cond)
}

/// Affinities taken directly from similarities: each row is normalized
/// to sum to one, then symmetrized like the Gaussian path.
pub fn direct_affinities(similarities: &PairwiseMatrix) -> Result<AffinityMatrix> {
    if similarities.kind() != MatrixKind::Similarity {
        return Err(Error::Contract("direct affinities need a similarity matrix".into()));
    }
    let k = similarities.len();
    if k < 3 {
        return Err(Error::EmptyInput(format!("affinities need at least 3 items, got {k}")));
    }
    let s = similarities.data();
    let mut cond = DMatrix::zeros(k, k);
    for i in 0..k {
        let total: f64 = (0..k).filter(|&j| j != i).map(|j| s[(i, j)]).sum();
        if total <= 0.0 {
            return Err(Error::Calibration {
                row: i,
                entropy: 0.0,
                perplexity: 0.0,
            });
        }
        for j in (0..k).filter(|&j| j != i) {
            cond[(i, j)] = s[(i, j)] / total;
        }
    }
    AffinityMatrix::from_conditional(&cond)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn achieved(probs: &[f64]) -> f64 {
        let h: f64 = -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.log2()).sum::<f64>();
        h.exp2()
    }

    fn matrix(k: usize, f: impl Fn(usize, usize) -> f64) -> PairwiseMatrix {
        let ids = (0..k).map(|i| i.to_string()).collect();
        let data = DMatrix::from_fn(k, k, |i, j| if i == j { 0.0 } else { f(i.min(j), i.max(j)) });
        PairwiseMatrix::new(MatrixKind::Distance, ids, data).unwrap()
    }

    #[test]
    fn equidistant_rows_are_uniform() {
        let c = calibrate_row(&[3.0, 3.0], 2.0).unwrap();
        assert!(c.probs.iter().all(|p| (p - 0.5).abs() < 1e-15));
        assert!((c.perplexity - 2.0).abs() < 1e-12);
        let c = calibrate_row(&[1.5; 5], 5.0).unwrap();
        assert!(c.probs.iter().all(|p| (p - 0.2).abs() < 1e-15));
    }

    #[test]
    fn uneven_row_hits_target() {
        let c = calibrate_row(&[1.0, 2.0, 4.0], 2.0).unwrap();
        assert!((achieved(&c.probs) - 2.0).abs() <= 1e-5);
        assert!(c.probs[0] > c.probs[1] && c.probs[1] > c.probs[2]);
        // independent check of the bandwidth: recompute the distribution from sigma
        let w: Vec<f64> = [1.0f64, 2.0, 4.0].iter().map(|d| (-d * d / (2.0 * c.sigma * c.sigma)).exp()).collect();
        let z: f64 = w.iter().sum();
        for (p, wi) in c.probs.iter().zip(&w) {
            assert!((p - wi / z).abs() < 1e-9);
        }
    }

    #[test]
    fn unreachable_targets_fail() {
        // two neighbors can never exceed perplexity 2
        assert!(matches!(calibrate_row(&[1.0, 2.0], 2.5), Err(Error::Calibration { .. })));
        // equidistant rows are stuck at their count
        assert!(matches!(calibrate_row(&[1.0, 1.0, 1.0], 2.0), Err(Error::Calibration { .. })));
        assert!(matches!(calibrate_row(&[0.0, 0.0], 1.5), Err(Error::Calibration { .. })));
    }

    #[test]
    fn degenerate_matrix_reports_row() {
        let d = matrix(4, |_, _| 0.0);
        match joint_affinities(&d, 2.0) {
            Err(Error::Calibration { row, .. }) => assert_eq!(row, 0),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn equilateral_is_uniform() {
        let p = joint_affinities(&matrix(3, |_, _| 1.0), 2.0).unwrap();
        let m = p.matrix();
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert!((m[(i, j)] - 1.0 / 6.0).abs() < 1e-15);
        }
    }

    /// Independent reference: grid search on sigma, then symmetrize.
    fn reference_joint(d: &DMatrix<f64>, perplexity: f64) -> DMatrix<f64> {
        let k = d.nrows();
        let mut cond = DMatrix::zeros(k, k);
        for i in 0..k {
            let (mut lo, mut hi) = (1e-6f64, 1e6f64);
            let probs_at = |sigma: f64| {
                let w: Vec<f64> = (0..k)
                    .map(|j| if j == i { 0.0 } else { (-d[(i, j)].powi(2) / (2.0 * sigma * sigma)).exp() })
                    .collect();
                let z: f64 = w.iter().sum();
                w.into_iter().map(|x| x / z).collect::<Vec<_>>()
            };
            for _ in 0..300 {
                let mid = (lo * hi).sqrt();
                if achieved(&probs_at(mid)) < perplexity {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            for (j, p) in probs_at((lo * hi).sqrt()).into_iter().enumerate() {
                cond[(i, j)] = p;
            }
        }
        DMatrix::from_fn(k, k, |i, j| (cond[(i, j)] + cond[(j, i)]) / (2.0 * k as f64))
    }

    #[test]
    fn line_prefers_nearest_neighbors() {
        let d = matrix(4, |i, j| (j - i) as f64);
        let p = joint_affinities(&d, 2.0).unwrap();
        let m = p.matrix();
        let oracle = reference_joint(d.data(), 2.0);
        assert!((m - &oracle).amax() < 1e-8);
        for i in 0..4usize {
            let near = [i.wrapping_sub(1), i + 1].into_iter().filter(|&j| j < 4).map(|j| m[(i, j)]).fold(f64::INFINITY, f64::min);
            let far = [i.wrapping_sub(2), i + 2].into_iter().filter(|&j| j < 4).map(|j| m[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
            assert!(near > far);
        }
    }

    #[test]
    fn direct_path_normalizes_rows() {
        let ids = (0..3).map(|i| i.to_string()).collect();
        let s = PairwiseMatrix::new(
            MatrixKind::Similarity,
            ids,
            DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.5, 0.5, 1.0, 0.5, 0.5, 0.5, 1.0]),
        )
        .unwrap();
        let p = direct_affinities(&s).unwrap();
        assert!((p.matrix().sum() - 1.0).abs() < 1e-12);
        assert!((p.matrix()[(0, 1)] - 1.0 / 6.0).abs() < 1e-12);
    }

    fn random_distances() -> impl Strategy<Value = (PairwiseMatrix, f64)> {
        (4usize..25).prop_flat_map(|k| {
            (
                proptest::collection::vec(0.01f64..10.0, k * (k - 1) / 2),
                1.0f64..((k - 1) as f64),
            )
                .prop_map(move |(v, perp)| {
                    let mut data = DMatrix::zeros(k, k);
                    let mut it = v.into_iter();
                    for i in 0..k {
                        for j in (i + 1)..k {
                            let x = it.next().unwrap();
                            data[(i, j)] = x;
                            data[(j, i)] = x;
                        }
                    }
                    let ids = (0..k).map(|i| i.to_string()).collect();
                    (PairwiseMatrix::new(MatrixKind::Distance, ids, data).unwrap(), perp)
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn joint_invariants((d, perp) in random_distances()) {
            let p = joint_affinities(&d, perp).unwrap();
            let m = p.matrix();
            let k = m.nrows();
            prop_assert!((m.sum() - 1.0).abs() < 1e-9);
            for i in 0..k {
                prop_assert_eq!(m[(i, i)], 0.0);
                for j in 0..k {
                    prop_assert!((m[(i, j)] - m[(j, i)]).abs() <= 1e-12);
                    if i != j {
                        prop_assert!(m[(i, j)] >= PROB_FLOOR);
                    }
                }
                let row: Vec<f64> = (0..k).filter(|&j| j != i).map(|j| d.data()[(i, j)]).collect();
                let c = calibrate_row(&row, perp).unwrap();
                prop_assert!((achieved(&c.probs) - perp).abs() <= 1e-5);
            }
        }
    }
}
