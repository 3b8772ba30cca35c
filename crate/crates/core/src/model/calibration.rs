//! Platt scaling, one-vs-rest, with row renormalization.

use crate::dataset::Matrix;
use crate::error::{Error, Result};
use crate::model::TrainedModel;

const MAX_ITER: usize = 100;
const MIN_STEP: f64 = 1e-10;
const HESSIAN_RIDGE: f64 = 1e-12;
const GRAD_TOL: f64 = 1e-5;

/// `p(s) = 1 / (1 + exp(a * s + b))`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sigmoid {
    pub a: f64,
    pub b: f64,
}

impl Sigmoid {
    /// Plain logistic of the raw score.
    pub const IDENTITY: Sigmoid = Sigmoid { a: -1.0, b: 0.0 };

    /// `ln p(s)`, stable for large |a s + b|.
    pub fn ln_prob(&self, s: f64) -> f64 {
        -softplus(self.a * s + self.b)
    }

    pub fn prob(&self, s: f64) -> f64 {
        self.ln_prob(s).exp()
    }
}

/// `ln(1 + e^x)`
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Fit Platt's sigmoid to binary outcomes by damped Newton iteration on
/// the smoothed-target log-likelihood. `None` if either class is absent.
pub fn fit_sigmoid(scores: &[f64], positive: &[bool]) -> Result<Option<Sigmoid>> {
    if scores.len() != positive.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: positive.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("calibration scores"));
    }
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let hi = (n_pos as f64 + 1.0) / (n_pos as f64 + 2.0);
    let lo = 1.0 / (n_neg as f64 + 2.0);
    let targets: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();

    let objective = |a: f64, b: f64| -> f64 {
        scores
            .iter()
            .zip(&targets)
            .map(|(&s, &t)| {
                let z = a * s + b;
                // -[t ln p + (1-t) ln(1-p)] with p = 1/(1+e^z)
                t * z + softplus(-z)
            })
            .sum()
    };

    let mut a = 0.0;
    let mut b = ((n_neg as f64 + 1.0) / (n_pos as f64 + 1.0)).ln();
    let mut fval = objective(a, b);
    for _ in 0..MAX_ITER {
        let (mut h11, mut h22, mut h21) = (HESSIAN_RIDGE, HESSIAN_RIDGE, 0.0);
        let (mut g1, mut g2) = (0.0, 0.0);
        for (&s, &t) in scores.iter().zip(&targets) {
            let z = a * s + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += s * s * d2;
            h22 += d2;
            h21 += s * d2;
            let d1 = t - p;
            g1 += s * d1;
            g2 += d1;
        }
        if g1.abs() < GRAD_TOL && g2.abs() < GRAD_TOL {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < MIN_STEP {
            break;
        }
    }
    Ok(Some(Sigmoid { a, b }))
}

/// Row-normalized class probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix(Matrix);

impl ProbabilityMatrix {
    /// Wrap rows that are already distributions (used by tests and oracles).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = Matrix::from_rows(rows)?;
        for r in m.iter_rows() {
            let s: f64 = r.iter().sum();
            if (s - 1.0).abs() > 1e-9 || r.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidArgument(format!("not a distribution: {r:?}")));
            }
        }
        Ok(Self(m))
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn class_count(&self) -> usize {
        self.0.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.0.iter_rows()
    }

    pub fn argmax(&self) -> Vec<usize> {
        self.iter_rows().map(super::argmax).collect()
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }
}

/// A trained scorer plus one sigmoid per class.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedModel {
    base: TrainedModel,
    sigmoids: Vec<Sigmoid>,
    fallback: Vec<bool>,
}

impl CalibratedModel {
    pub fn new(base: TrainedModel, sigmoids: Vec<Sigmoid>) -> Result<Self> {
        if sigmoids.len() != base.class_count() {
            return Err(Error::LengthMismatch {
                left: sigmoids.len(),
                right: base.class_count(),
            });
        }
        let fallback = vec![false; sigmoids.len()];
        Ok(Self {
            base,
            sigmoids,
            fallback,
        })
    }

    /// Identity calibration for every class.
    pub fn uncalibrated(base: TrainedModel) -> Self {
        let k = base.class_count();
        Self {
            base,
            sigmoids: vec![Sigmoid::IDENTITY; k],
            fallback: vec![true; k],
        }
    }

    pub fn base(&self) -> &TrainedModel {
        &self.base
    }

    pub fn sigmoids(&self) -> &[Sigmoid] {
        &self.sigmoids
    }

    pub fn class_count(&self) -> usize {
        self.base.class_count()
    }

    /// True if any class fell back to identity calibration.
    pub fn used_fallback(&self) -> bool {
        self.fallback.iter().any(|&f| f)
    }

    pub fn fallback_classes(&self) -> impl Iterator<Item = usize> + '_ {
        self.fallback.iter().enumerate().filter(|(_, &f)| f).map(|(c, _)| c)
    }

    /// Calibrated probabilities from raw class scores.
    pub fn calibrate_scores(&self, scores: &[f64], out: &mut [f64]) {
        for ((o, sig), &s) in out.iter_mut().zip(&self.sigmoids).zip(scores) {
            *o = sig.ln_prob(s);
        }
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            total += *o;
        }
        out.iter_mut().for_each(|o| *o /= total);
    }

    pub fn predict_proba(&self, features: &Matrix) -> Result<ProbabilityMatrix> {
        let scores = self.base.scores(features)?;
        let k = self.class_count();
        let mut data = vec![0.0; scores.rows() * k];
        for (row, out) in scores.iter_rows().zip(data.chunks_exact_mut(k)) {
            self.calibrate_scores(row, out);
        }
        Ok(ProbabilityMatrix(Matrix::new(scores.rows(), k, data)?))
    }

    pub fn predict(&self, features: &Matrix) -> Result<Vec<usize>> {
        Ok(self.predict_proba(features)?.argmax())
    }
}

/// Fit one sigmoid per class on held-out raw scores.
///
/// A class whose one-vs-rest slice of the validation labels has no
/// positives or no negatives keeps the identity map and is flagged.
pub fn platt_calibrate(
    model: TrainedModel,
    val_features: &Matrix,
    val_labels: &[usize],
) -> Result<CalibratedModel> {
    if val_features.rows() != val_labels.len() {
        return Err(Error::LengthMismatch {
            left: val_features.rows(),
            right: val_labels.len(),
        });
    }
    let k = model.class_count();
    if val_labels.is_empty() {
        return Ok(CalibratedModel::uncalibrated(model));
    }
    let scores = model.scores(val_features)?;
    let mut sigmoids = Vec::with_capacity(k);
    let mut fallback = Vec::with_capacity(k);
    let mut column = vec![0.0; scores.rows()];
    for c in 0..k {
        for (dst, row) in column.iter_mut().zip(scores.iter_rows()) {
            *dst = row[c];
        }
        let positive: Vec<bool> = val_labels.iter().map(|&y| y == c).collect();
        match fit_sigmoid(&column, &positive)? {
            Some(s) => {
                sigmoids.push(s);
                fallback.push(false);
            }
            None => {
                sigmoids.push(Sigmoid::IDENTITY);
                fallback.push(true);
            }
        }
    }
    Ok(CalibratedModel {
        base: model,
        sigmoids,
        fallback,
    })
}
