use crate::error::{Error, Result};

/// Score used for model selection and test evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum MetricSpec {
    #[default]
    F1Macro,
}

impl MetricSpec {
    pub fn evaluate(self, predicted: &[usize], truth: &[usize], class_count: usize) -> Result<f64> {
        match self {
            MetricSpec::F1Macro => f1_macro(predicted, truth, class_count),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricSpec::F1Macro => "f1_macro",
        }
    }
}

/// Unweighted mean of per-class F1 over the classes present in `truth`.
///
/// A class that occurs in `truth` but is never predicted scores 0. Classes
/// that never occur in `truth` are left out of the mean.
pub fn f1_macro(predicted: &[usize], truth: &[usize], class_count: usize) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch {
            left: predicted.len(),
            right: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Empty("truth"));
    }
    let mut tp = vec![0usize; class_count];
    let mut pred_count = vec![0usize; class_count];
    let mut true_count = vec![0usize; class_count];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p >= class_count || t >= class_count {
            return Err(Error::InvalidArgument(format!(
                "class id outside 0..{class_count}"
            )));
        }
        pred_count[p] += 1;
        true_count[t] += 1;
        if p == t {
            tp[p] += 1;
        }
    }
    let mut sum = 0.0;
    let mut classes = 0usize;
    for c in 0..class_count {
        if true_count[c] == 0 {
            continue;
        }
        classes += 1;
        // 2PR/(P+R) == 2TP/(|pred|+|true|)
        sum += 2.0 * tp[c] as f64 / (pred_count[c] + true_count[c]) as f64;
    }
    Ok(sum / classes as f64)
}
