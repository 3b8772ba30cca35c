//! Discriminative selection: a small network learns to tell labeled from
//! unlabeled points; the most "unlabeled-looking" points are queried.

use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::dataset::Matrix;
use crate::error::{Error, Result};
use crate::qstrat::{largest_by_key, PoolState, StrategyParams};
use crate::seed::Rng;

/// One hidden ReLU layer, logistic output. The output layer starts at zero,
/// so an untrained network predicts exactly 0.5 everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminator {
    dim: usize,
    hidden: usize,
    /// `hidden x dim`, row-major.
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

/// Gradients with the same layout as [`Discriminator`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `-[y ln s(z) + (1-y) ln(1 - s(z))]`, stable in `z`.
fn bce_with_logit(z: f64, y: f64) -> f64 {
    let softplus = |x: f64| if x > 0.0 { x + (-x).exp().ln_1p() } else { x.exp().ln_1p() };
    y * softplus(-z) + (1.0 - y) * softplus(z)
}

impl Discriminator {
    pub fn new(dim: usize, hidden: usize, rng: &mut Rng) -> Self {
        let scale = (2.0 / dim as f64).sqrt();
        let w1 = (0..hidden * dim)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self {
            dim,
            hidden,
            w1,
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    fn hidden_layer(&self, x: &[f64], out: &mut [f64]) {
        for (j, h) in out.iter_mut().enumerate() {
            let w = &self.w1[j * self.dim..(j + 1) * self.dim];
            let z: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.b1[j];
            *h = z.max(0.0);
        }
    }

    fn logit(&self, x: &[f64], h: &mut [f64]) -> f64 {
        self.hidden_layer(x, h);
        h.iter().zip(&self.w2).map(|(a, b)| a * b).sum::<f64>() + self.b2
    }

    /// Probability that each row is unlabeled.
    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        let mut h = vec![0.0; self.hidden];
        x.iter_rows().map(|r| sigmoid(self.logit(r, &mut h))).collect()
    }

    /// Weighted mean cross-entropy.
    pub fn loss(&self, x: &Matrix, y: &[f64], weight: &[f64]) -> f64 {
        let mut h = vec![0.0; self.hidden];
        let total: f64 = x
            .iter_rows()
            .zip(y.iter().zip(weight))
            .map(|(r, (&t, &w))| w * bce_with_logit(self.logit(r, &mut h), t))
            .sum();
        total / y.len() as f64
    }

    pub fn gradients(&self, x: &Matrix, y: &[f64], weight: &[f64]) -> Gradients {
        let mut g = Gradients {
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.hidden],
            w2: vec![0.0; self.hidden],
            b2: 0.0,
        };
        let n = y.len() as f64;
        let mut h = vec![0.0; self.hidden];
        for (r, (&t, &w)) in x.iter_rows().zip(y.iter().zip(weight)) {
            let z = self.logit(r, &mut h);
            let dz = w * (sigmoid(z) - t) / n;
            g.b2 += dz;
            for j in 0..self.hidden {
                g.w2[j] += dz * h[j];
                if h[j] > 0.0 {
                    let dh = dz * self.w2[j];
                    g.b1[j] += dh;
                    let row = &mut g.w1[j * self.dim..(j + 1) * self.dim];
                    row.iter_mut().zip(r).for_each(|(gw, xi)| *gw += dh * xi);
                }
            }
        }
        g
    }

    pub fn step(&mut self, g: &Gradients, learning_rate: f64) {
        let upd = |p: &mut [f64], d: &[f64]| p.iter_mut().zip(d).for_each(|(a, b)| *a -= learning_rate * b);
        upd(&mut self.w1, &g.w1);
        upd(&mut self.b1, &g.b1);
        upd(&mut self.w2, &g.w2);
        self.b2 -= learning_rate * g.b2;
    }

    /// Full-batch gradient descent; returns the loss before each epoch and
    /// after the last.
    pub fn train(&mut self, x: &Matrix, y: &[f64], weight: &[f64], epochs: usize, learning_rate: f64) -> Vec<f64> {
        let mut losses = Vec::with_capacity(epochs + 1);
        for _ in 0..epochs {
            losses.push(self.loss(x, y, weight));
            let g = self.gradients(x, y, weight);
            self.step(&g, learning_rate);
        }
        losses.push(self.loss(x, y, weight));
        losses
    }
}

/// Train a fresh labeled-vs-unlabeled discriminator and query the `b`
/// unlabeled points it most confidently calls unlabeled. Both groups get
/// equal total weight in the loss.
pub fn select_dal(
    features: &Matrix,
    pool: &PoolState,
    b: usize,
    params: &StrategyParams,
    rng: &mut Rng,
) -> Result<Vec<usize>> {
    pool.check_batch(b)?;
    if pool.labeled().is_empty() {
        return Err(Error::Empty("labeled set"));
    }
    let mut labeled = pool.labeled().to_vec();
    labeled.sort_unstable();
    let unlabeled = pool.sorted_unlabeled();
    if unlabeled.is_empty() {
        return Ok(Vec::new());
    }

    let rows: Vec<usize> = labeled.iter().chain(&unlabeled).copied().collect();
    let x = features.select(&rows);
    let (nl, nu) = (labeled.len() as f64, unlabeled.len() as f64);
    let total = nl + nu;
    let y: Vec<f64> = (0..rows.len()).map(|i| f64::from(u8::from(i >= labeled.len()))).collect();
    let weight: Vec<f64> = y
        .iter()
        .map(|&t| if t > 0.5 { total / (2.0 * nu) } else { total / (2.0 * nl) })
        .collect();

    let mut net = Discriminator::new(features.cols(), params.dal_hidden, rng);
    net.train(&x, &y, &weight, params.dal_epochs, params.dal_learning_rate);

    let p = net.predict(&features.select(&unlabeled));
    Ok(largest_by_key(p.into_iter().zip(unlabeled).collect(), b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn five_points() -> (Matrix, Vec<f64>, Vec<f64>) {
        let x = Matrix::from_rows(&[
            vec![0.1, -0.3],
            vec![0.5, 0.2],
            vec![-0.4, 0.9],
            vec![1.2, -0.7],
            vec![-0.8, -0.6],
        ])
        .unwrap();
        let y = vec![0.0, 0.0, 1.0, 1.0, 1.0];
        let w = vec![1.25, 1.25, 5.0 / 6.0, 5.0 / 6.0, 5.0 / 6.0];
        (x, y, w)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let (x, y, w) = five_points();
        let mut net = Discriminator::new(2, 4, &mut seed::rng(3));
        // move off the zero-initialized output layer so every path is live
        net.w2 = vec![0.3, -0.2, 0.5, 0.1];
        net.b1 = vec![0.05, 0.1, -0.02, 0.2];
        let g = net.gradients(&x, &y, &w);
        let h = 1e-6;
        let check = |analytic: f64, bump: &dyn Fn(&mut Discriminator, f64)| {
            let mut plus = net.clone();
            bump(&mut plus, h);
            let mut minus = net.clone();
            bump(&mut minus, -h);
            let numeric = (plus.loss(&x, &y, &w) - minus.loss(&x, &y, &w)) / (2.0 * h);
            assert!((numeric - analytic).abs() < 1e-6, "{numeric} vs {analytic}");
        };
        for i in 0..net.w1.len() {
            check(g.w1[i], &|n, d| n.w1[i] += d);
        }
        for j in 0..4 {
            check(g.b1[j], &|n, d| n.b1[j] += d);
            check(g.w2[j], &|n, d| n.w2[j] += d);
        }
        check(g.b2, &|n, d| n.b2 += d);
    }

    #[test]
    fn loss_is_non_increasing_with_small_steps() {
        let (x, y, w) = five_points();
        let mut net = Discriminator::new(2, 8, &mut seed::rng(4));
        let losses = net.train(&x, &y, &w, 200, 1e-2);
        for pair in losses.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "{pair:?}");
        }
    }

    #[test]
    fn untrained_network_ties_everywhere() {
        let mut rng = seed::rng(1);
        let rows: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, -(i as f64)]).collect();
        let features = Matrix::from_rows(&rows).unwrap();
        let pool = PoolState::new(vec![5, 9], vec![0, 1], vec![11, 0, 3, 7, 1, 2]).unwrap();
        let params = StrategyParams { dal_epochs: 0, ..StrategyParams::default() };
        assert_eq!(select_dal(&features, &pool, 3, &params, &mut rng).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn far_outlier_is_picked() {
        let mut rng = seed::rng(17);
        let mut rows = Vec::new();
        for _ in 0..40 {
            rows.push(vec![
                0.1 * rng.sample::<f64, _>(StandardNormal),
                0.1 * rng.sample::<f64, _>(StandardNormal),
            ]);
        }
        rows.push(vec![100.0, 0.0]);
        let features = Matrix::from_rows(&rows).unwrap();
        let labeled: Vec<usize> = (0..20).collect();
        let unlabeled: Vec<usize> = (20..41).collect();
        let pool = PoolState::new(labeled, vec![0; 20], unlabeled).unwrap();
        let picked = select_dal(&features, &pool, 1, &StrategyParams::default(), &mut seed::rng(5)).unwrap();
        assert_eq!(picked, vec![40]);
    }

    #[test]
    fn requires_labeled_points() {
        let features = Matrix::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let pool = PoolState::fresh(2);
        assert!(select_dal(&features, &pool, 1, &StrategyParams::default(), &mut seed::rng(0)).is_err());
    }
}
