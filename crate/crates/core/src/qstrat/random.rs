use rand::seq::index;

use crate::error::Result;
use crate::qstrat::PoolState;
use crate::seed::Rng;

/// Uniform sample of `b` unlabeled indices without replacement.
pub fn select_random(pool: &PoolState, b: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    pool.check_batch(b)?;
    let unlabeled = pool.sorted_unlabeled();
    let mut out: Vec<usize> = index::sample(rng, unlabeled.len(), b)
        .into_iter()
        .map(|p| unlabeled[p])
        .collect();
    out.sort_unstable();
    Ok(out)
}
