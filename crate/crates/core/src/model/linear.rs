//! One-vs-rest linear max-margin scorers.

use crate::dataset::Matrix;
use crate::error::{Error, Result};

/// Full-batch passes over the training set.
pub const LINEAR_EPOCHS: usize = 20;

/// One-vs-rest hyperplanes over mean-centered features.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    class_count: usize,
    dim: usize,
    /// Row `c` holds the weights of the class-`c` scorer.
    weights: Vec<f64>,
    bias: Vec<f64>,
    center: Vec<f64>,
}

impl LinearModel {
    /// Assemble a model from explicit parameters (`weights` is class-major).
    pub fn from_parts(
        class_count: usize,
        dim: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
    ) -> Result<Self> {
        if weights.len() != class_count * dim || bias.len() != class_count {
            return Err(Error::LengthMismatch {
                left: weights.len() + bias.len(),
                right: class_count * dim + class_count,
            });
        }
        Ok(Self {
            class_count,
            dim,
            weights,
            bias,
            center: vec![0.0; dim],
        })
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self, class: usize) -> &[f64] {
        &self.weights[class * self.dim..(class + 1) * self.dim]
    }

    pub fn bias(&self, class: usize) -> f64 {
        self.bias[class]
    }

    pub fn score_row(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            let w = self.weights(c);
            let dot: f64 = x
                .iter()
                .zip(&self.center)
                .zip(w)
                .map(|((xi, mi), wi)| (xi - mi) * wi)
                .sum();
            *o = dot + self.bias[c];
        }
    }
}

/// Per-instance weights `n / (K * n_y)` over the K classes present.
pub fn balanced_weights(labels: &[usize], class_count: usize) -> Vec<f64> {
    let mut counts = vec![0usize; class_count];
    for &y in labels {
        counts[y] += 1;
    }
    let present = counts.iter().filter(|&&n| n > 0).count() as f64;
    let n = labels.len() as f64;
    labels
        .iter()
        .map(|&y| n / (present * counts[y] as f64))
        .collect()
}

/// Fit one-vs-rest linear scorers with balanced class weights.
///
/// Each scorer minimizes `1/(2C) |w|^2 + mean_i a_i hinge(y_i (w.x_i + b))`
/// by full-batch subgradient descent with step `C / t` on `w` and `1 / t`
/// on the unregularized bias. The loss is a mean, so uniformly duplicating
/// the data leaves the fit unchanged.
pub fn fit_linear(
    features: &Matrix,
    labels: &[usize],
    class_count: usize,
    c: f64,
) -> Result<LinearModel> {
    fit_linear_epochs(features, labels, class_count, c, LINEAR_EPOCHS)
}

pub fn fit_linear_epochs(
    features: &Matrix,
    labels: &[usize],
    class_count: usize,
    c: f64,
    epochs: usize,
) -> Result<LinearModel> {
    if features.rows() != labels.len() {
        return Err(Error::LengthMismatch {
            left: features.rows(),
            right: labels.len(),
        });
    }
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::InvalidArgument(format!("C must be positive, got {c}")));
    }
    if labels.iter().any(|&y| y >= class_count) {
        return Err(Error::InvalidArgument("label outside class range".into()));
    }
    let distinct = {
        let mut seen = vec![false; class_count];
        labels.iter().for_each(|&y| seen[y] = true);
        seen.iter().filter(|&&s| s).count()
    };
    if distinct < 2 {
        return Err(Error::TooFewClasses);
    }

    let n = labels.len();
    let dim = features.cols();
    let mut center = vec![0.0; dim];
    for row in features.iter_rows() {
        center.iter_mut().zip(row).for_each(|(m, x)| *m += x);
    }
    center.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<f64> = features
        .iter_rows()
        .flat_map(|row| row.iter().zip(&center).map(|(x, m)| x - m))
        .collect();
    let instance_weight = balanced_weights(labels, class_count);

    let mut weights = vec![0.0; class_count * dim];
    let mut bias = vec![0.0; class_count];
    let mut grad = vec![0.0; dim];
    for class in 0..class_count {
        let w = &mut weights[class * dim..(class + 1) * dim];
        let b = &mut bias[class];
        for t in 1..=epochs {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let mut grad_b = 0.0;
            for (i, x) in centered.chunks_exact(dim).enumerate() {
                let y = if labels[i] == class { 1.0 } else { -1.0 };
                let margin = y * (x.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>() + *b);
                if margin < 1.0 {
                    let a = instance_weight[i] * y;
                    grad.iter_mut().zip(x).for_each(|(g, xi)| *g += a * xi);
                    grad_b += a;
                }
            }
            let t = t as f64;
            let step = c / t;
            let shrink = 1.0 - 1.0 / t;
            let inv_n = 1.0 / n as f64;
            w.iter_mut()
                .zip(&grad)
                .for_each(|(wi, g)| *wi = shrink * *wi + step * g * inv_n);
            *b += grad_b * inv_n / t;
        }
    }
    Ok(LinearModel {
        class_count,
        dim,
        weights,
        bias,
        center,
    })
}
