//! Representative-error selection.
//!
//! The unlabeled pool is clustered; each cluster's modal predicted class is
//! its pseudo-label, and members predicted otherwise are its "errors". The
//! batch is apportioned over clusters in proportion to their error counts
//! (largest remainder, ties to the lower cluster id). Inside a cluster,
//! errors are taken in order of descending confidence in their own
//! predicted class. If there are fewer errors than `b`, the rest of the
//! batch is filled with the smallest-margin remaining points.

use crate::dataset::{largest_remainder, Matrix};
use crate::error::{Error, Result};
use crate::model::{argmax, Predictor, ProbabilityMatrix};
use crate::qstrat::kmeans::kmeans;
use crate::qstrat::margin::margin_of;
use crate::qstrat::{smallest_by_key, PoolState, StrategyParams};
use crate::seed::Rng;

/// Selection given cluster ids for `unlabeled` (ascending pool indices),
/// with `proba` row `u` belonging to `unlabeled[u]`.
pub fn select_real_with_clusters(
    proba: &ProbabilityMatrix,
    unlabeled: &[usize],
    clusters: &[usize],
    b: usize,
) -> Result<Vec<usize>> {
    if proba.rows() != unlabeled.len() || clusters.len() != unlabeled.len() {
        return Err(Error::LengthMismatch {
            left: proba.rows(),
            right: unlabeled.len(),
        });
    }
    if b > unlabeled.len() {
        return Err(Error::SizeExceedsPopulation {
            requested: b,
            available: unlabeled.len(),
        });
    }
    let k = clusters.iter().max().map_or(0, |&c| c + 1);
    let classes = proba.class_count();
    let predicted: Vec<usize> = proba.iter_rows().map(argmax).collect();

    let mut votes = vec![vec![0usize; classes]; k];
    for (&c, &p) in clusters.iter().zip(&predicted) {
        votes[c][p] += 1;
    }
    let pseudo: Vec<usize> = votes
        .iter()
        .map(|v| {
            let mut best = 0;
            for (cls, &n) in v.iter().enumerate() {
                if n > v[best] {
                    best = cls;
                }
            }
            best
        })
        .collect();

    // (confidence, pool index) per cluster
    let mut errors: Vec<Vec<(f64, usize)>> = vec![Vec::new(); k];
    for (u, (&c, &p)) in clusters.iter().zip(&predicted).enumerate() {
        if p != pseudo[c] {
            errors[c].push((proba.row(u)[p], unlabeled[u]));
        }
    }
    let total_errors: usize = errors.iter().map(Vec::len).sum();

    let mut chosen = Vec::with_capacity(b);
    if total_errors >= b {
        let counts: Vec<usize> = errors.iter().map(Vec::len).collect();
        let quotas = largest_remainder(b, &counts);
        for (mut errs, quota) in errors.into_iter().zip(quotas) {
            errs.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
            chosen.extend(errs.into_iter().take(quota).map(|(_, i)| i));
        }
    } else {
        chosen.extend(errors.into_iter().flatten().map(|(_, i)| i));
        chosen.sort_unstable();
        let rest: Vec<(f64, usize)> = proba
            .iter_rows()
            .zip(unlabeled)
            .filter(|(_, i)| chosen.binary_search(i).is_err())
            .map(|(p, &i)| (margin_of(p), i))
            .collect();
        chosen.extend(smallest_by_key(rest, b - total_errors));
    }
    chosen.sort_unstable();
    Ok(chosen)
}

pub fn select_real(
    model: &dyn Predictor,
    features: &Matrix,
    pool: &PoolState,
    b: usize,
    params: &StrategyParams,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    pool.check_batch(b)?;
    let unlabeled = pool.sorted_unlabeled();
    if unlabeled.is_empty() {
        return Ok(Vec::new());
    }
    let x = features.select(&unlabeled);
    let clusters = kmeans(&x, params.real_clusters, rng)?;
    let proba = model.predict_proba(&x)?;
    select_real_with_clusters(&proba, &unlabeled, &clusters, b)
}
