use rand::Rng as _;

use crate::dataset::Matrix;
use crate::error::{Error, Result};
use crate::seed::Rng;

pub const MAX_ITER: usize = 100;

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_center(x: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(x, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// k-means++ seeding followed by Lloyd iterations (at most [`MAX_ITER`]).
///
/// Returns one cluster id per row. Ids are renumbered so cluster 0 holds
/// row 0 and new ids appear in row order. A cluster that loses all its
/// members keeps its previous center.
pub fn kmeans(x: &Matrix, k: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::Empty("k-means input"));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    let k = k.min(n);

    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    centers.push(x.row(rng.gen_range(0..n)).to_vec());
    let mut d2: Vec<f64> = x.iter_rows().map(|r| sq_dist(r, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && d > 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            // every remaining point coincides with a center
            rng.gen_range(0..n)
        };
        centers.push(x.row(next).to_vec());
        let c = centers.last().expect("just pushed");
        for (d, r) in d2.iter_mut().zip(x.iter_rows()) {
            *d = d.min(sq_dist(r, c));
        }
    }

    let mut assign: Vec<usize> = x.iter_rows().map(|r| nearest_center(r, &centers).0).collect();
    let dim = x.cols();
    for _ in 0..MAX_ITER {
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (r, &c) in x.iter_rows().zip(&assign) {
            counts[c] += 1;
            sums[c].iter_mut().zip(r).for_each(|(s, v)| *s += v);
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                centers[c] = sums[c].iter().map(|s| s * inv).collect();
            }
        }
        let next: Vec<usize> = x.iter_rows().map(|r| nearest_center(r, &centers).0).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    Ok(canonical_ids(&assign))
}

/// Renumber cluster ids in order of first appearance.
fn canonical_ids(assign: &[usize]) -> Vec<usize> {
    let mut map = std::collections::HashMap::new();
    assign
        .iter()
        .map(|&c| {
            let next = map.len();
            *map.entry(c).or_insert(next)
        })
        .collect()
}
