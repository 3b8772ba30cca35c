//! Contrastive selection: unlabeled points whose predicted distribution
//! disagrees most with that of their nearest labeled neighbors.

use crate::dataset::Matrix;
use crate::error::{Error, Result};
use crate::model::Predictor;
use crate::qstrat::{largest_by_key, PoolState};

/// Probabilities are floored at this value inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// `KL(p || q)`; terms with `p_i = 0` contribute nothing.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * (pi.max(PROB_FLOOR).ln() - qi.max(PROB_FLOOR).ln()))
        .sum()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Positions (into `candidates`) of the `k` rows nearest to `x`; ties go to
/// the smaller pool index.
fn nearest(features: &Matrix, x: &[f64], candidates: &[usize], k: usize) -> Vec<usize> {
    let mut d: Vec<(f64, usize, usize)> = candidates
        .iter()
        .enumerate()
        .map(|(pos, &i)| (sq_dist(x, features.row(i)), i, pos))
        .collect();
    let cmp = |a: &(f64, usize, usize), b: &(f64, usize, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < d.len() {
        d.select_nth_unstable_by(k, cmp);
        d.truncate(k);
    }
    d.sort_by(cmp);
    d.into_iter().map(|(_, _, pos)| pos).collect()
}

/// Mean `KL(neighbor || candidate)` over each unlabeled point's `k` nearest
/// labeled neighbors, keyed by pool index (ascending).
pub fn cal_scores(
    model: &dyn Predictor,
    features: &Matrix,
    pool: &PoolState,
    k: usize,
) -> Result<Vec<(f64, usize)>> {
    if pool.labeled().is_empty() {
        return Err(Error::Empty("labeled set"));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("cal_k must be positive".into()));
    }
    let mut labeled = pool.labeled().to_vec();
    labeled.sort_unstable();
    let unlabeled = pool.sorted_unlabeled();
    let k = k.min(labeled.len());

    let p_lab = model.predict_proba(&features.select(&labeled))?;
    let p_unl = model.predict_proba(&features.select(&unlabeled))?;
    Ok(unlabeled
        .iter()
        .enumerate()
        .map(|(u, &i)| {
            let q = p_unl.row(u);
            let neighbors = nearest(features, features.row(i), &labeled, k);
            let total: f64 = neighbors.iter().map(|&pos| kl_divergence(p_lab.row(pos), q)).sum();
            (total / k as f64, i)
        })
        .collect())
}

/// The `b` unlabeled points with the highest contrastive score.
pub fn select_cal(
    model: &dyn Predictor,
    features: &Matrix,
    pool: &PoolState,
    b: usize,
    k: usize,
) -> Result<Vec<usize>> {
    pool.check_batch(b)?;
    Ok(largest_by_key(cal_scores(model, features, pool, k)?, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_of_identical_is_zero() {
        assert_eq!(kl_divergence(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn kl_against_uniform() {
        let v = kl_divergence(&[1.0, 0.0], &[0.5, 0.5]);
        assert!((v - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((v - 0.6931).abs() < 1e-4);
    }

    #[test]
    fn kl_floor_keeps_it_finite() {
        let v = kl_divergence(&[0.5, 0.5], &[1.0, 0.0]);
        assert!(v.is_finite() && v > 10.0);
    }

    #[test]
    fn nearest_breaks_ties_by_index() {
        let f = Matrix::from_rows(&[vec![0.0], vec![1.0], vec![-1.0], vec![2.0]]).unwrap();
        // rows 1 and 2 are equidistant from row 0
        assert_eq!(nearest(&f, &[0.0], &[3, 2, 1], 1), vec![2]);
        assert_eq!(nearest(&f, &[0.0], &[3, 2, 1], 5).len(), 3);
    }
}
