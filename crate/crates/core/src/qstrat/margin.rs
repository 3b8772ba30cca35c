use crate::dataset::Matrix;
use crate::error::Result;
use crate::model::Predictor;
use crate::qstrat::{smallest_by_key, PoolState};

/// Gap between the two largest probabilities of a row.
pub fn margin_of(p: &[f64]) -> f64 {
    let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &v in p {
        if v > first {
            second = first;
            first = v;
        } else if v > second {
            second = v;
        }
    }
    first - second
}

/// Margins of the given rows, keyed by pool index.
pub(crate) fn keyed_margins(
    model: &dyn Predictor,
    features: &Matrix,
    indices: &[usize],
) -> Result<Vec<(f64, usize)>> {
    let proba = model.predict_proba(&features.select(indices))?;
    Ok(proba
        .iter_rows()
        .zip(indices)
        .map(|(p, &i)| (margin_of(p), i))
        .collect())
}

/// The `b` unlabeled instances with the smallest top-two probability gap.
pub fn select_margin(
    model: &dyn Predictor,
    features: &Matrix,
    pool: &PoolState,
    b: usize,
) -> Result<Vec<usize>> {
    pool.check_batch(b)?;
    let unlabeled = pool.sorted_unlabeled();
    Ok(smallest_by_key(keyed_margins(model, features, &unlabeled)?, b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margin_values() {
        assert!((margin_of(&[0.6, 0.3, 0.1]) - 0.3).abs() < 1e-12);
        assert!((margin_of(&[0.45, 0.44, 0.11]) - 0.01).abs() < 1e-12);
        assert_eq!(margin_of(&[0.5, 0.5]), 0.0);
        assert_eq!(margin_of(&[1.0, 0.0, 0.0]), 1.0);
    }
}
