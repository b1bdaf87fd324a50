use nalgebra::DMatrix;

use super::{pairwise, MatrixKind, PairwiseMatrix};
use crate::data::{MtsDataset, MtsItem};
use crate::error::{Error, Result};

/// Accumulated cost of the optimal warping path between `a` and `b`, with
/// squared-difference local cost and the symmetric step set
/// {(1,0), (0,1), (1,1)}.
pub fn dtw(a: &[f64], b: &[f64]) -> Result<f64> {
    dtw_banded(a, b, None)
}

/// DTW restricted to cells with |i − j| ≤ band. The band is widened to the
/// length difference so that the end cell stays reachable.
pub fn dtw_banded(a: &[f64], b: &[f64], band: Option<usize>) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput("DTW needs non-empty sequences".into()));
    }
    let (n, m) = (a.len(), b.len());
    let band = band.map(|w| w.max(n.abs_diff(m)));
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut curr = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        curr.fill(f64::INFINITY);
        let (lo, hi) = match band {
            Some(w) => (i.saturating_sub(w).max(1), (i + w).min(m)),
            None => (1, m),
        };
        let ai = a[i - 1];
        for j in lo..=hi {
            let d = ai - b[j - 1];
            let best = prev[j - 1].min(prev[j]).min(curr[j - 1]);
            curr[j] = d * d + best;
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    Ok(prev[m])
}

/// Independent multivariate DTW: the sum of per-variable DTW costs.
pub fn mts_dtw(x: &MtsItem, y: &MtsItem) -> Result<f64> {
    mts_dtw_banded(x, y, None)
}

pub fn mts_dtw_banded(x: &MtsItem, y: &MtsItem, band: Option<usize>) -> Result<f64> {
    if x.width() != y.width() {
        return Err(Error::Contract(format!(
            "items {:?} and {:?} have {} and {} variables",
            x.id(),
            y.id(),
            x.width(),
            y.width()
        )));
    }
    let (xv, yv) = (x.values(), y.values());
    let mut total = 0.0;
    for l in 0..x.width() {
        total += dtw_banded(xv.column(l).as_slice(), yv.column(l).as_slice(), band)?;
    }
    Ok(total)
}

/// Pairwise multivariate DTW distance matrix.
pub fn dtw_matrix(dataset: &MtsDataset, band: Option<usize>) -> Result<PairwiseMatrix> {
    dataset.require_pairwise()?;
    let items = dataset.items();
    let data: DMatrix<f64> = pairwise(items.len(), |i, j| mts_dtw_banded(&items[i], &items[j], band))?;
    PairwiseMatrix::new(MatrixKind::Distance, dataset.ids(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Minimum over every monotone warping path, enumerated recursively.
    fn brute_force(a: &[f64], b: &[f64]) -> f64 {
        fn walk(a: &[f64], b: &[f64], i: usize, j: usize) -> f64 {
            let d = a[i] - b[j];
            let here = d * d;
            if i + 1 == a.len() && j + 1 == b.len() {
                return here;
            }
            let mut best = f64::INFINITY;
            if i + 1 < a.len() {
                best = best.min(walk(a, b, i + 1, j));
            }
            if j + 1 < b.len() {
                best = best.min(walk(a, b, i, j + 1));
            }
            if i + 1 < a.len() && j + 1 < b.len() {
                best = best.min(walk(a, b, i + 1, j + 1));
            }
            here + best
        }
        walk(a, b, 0, 0)
    }

    #[test]
    fn examples() {
        assert_eq!(dtw(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 2.0);
        assert_eq!(brute_force(&[0.0, 0.0], &[1.0, 1.0]), 2.0);
        assert_eq!(dtw(&[1.0, 2.0, 3.0], &[1.0, 2.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(dtw(&[0.5, -1.0, 3.0], &[0.5, -1.0, 3.0]).unwrap(), 0.0);
        assert!(matches!(dtw(&[], &[1.0]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn multivariate_examples() {
        let a = MtsItem::from_rows("a", &[vec![0.0, 0.0], vec![0.0, 0.0]], None).unwrap();
        let b = MtsItem::from_rows("b", &[vec![1.0, 0.0], vec![1.0, 0.0]], None).unwrap();
        assert_eq!(mts_dtw(&a, &b).unwrap(), 2.0);
        assert_eq!(mts_dtw(&a, &a).unwrap(), 0.0);
        let c = MtsItem::from_rows("c", &[vec![0.0], vec![0.0]], None).unwrap();
        assert!(matches!(mts_dtw(&a, &c), Err(Error::Contract(_))));
    }

    #[test]
    fn band_never_beats_unconstrained() {
        let a = [0.0, 1.0, 3.0, 2.0, 0.0, -1.0];
        let b = [0.0, 0.0, 1.0, 3.0, 2.0, 0.0];
        let free = dtw(&a, &b).unwrap();
        let banded = dtw_banded(&a, &b, Some(0)).unwrap();
        assert!(banded >= free);
        let diag: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
        assert_eq!(banded, diag);
        assert_eq!(dtw_banded(&a, &b, Some(6)).unwrap(), free);
    }

    proptest! {
        #[test]
        fn matches_enumeration(
            a in proptest::collection::vec((-4i32..=4).prop_map(|v| v as f64 * 0.5), 1..=6),
            b in proptest::collection::vec((-4i32..=4).prop_map(|v| v as f64 * 0.5), 1..=6),
        ) {
            prop_assert_eq!(dtw(&a, &b).unwrap(), brute_force(&a, &b));
        }

        #[test]
        fn diagonal_path_bounds(a in proptest::collection::vec(-10.0f64..10.0, 1..20), seed in 0u64..1000) {
            let b: Vec<f64> = a.iter().enumerate().map(|(i, v)| v + ((seed + i as u64) % 7) as f64 - 3.0).collect();
            let diag: f64 = a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum();
            prop_assert!(dtw(&a, &b).unwrap() <= diag);
            prop_assert_eq!(dtw(&a, &a).unwrap(), 0.0);
        }
    }
}
