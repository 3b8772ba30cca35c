//! Base classifiers, model selection and probability calibration.

pub mod calibration;
pub mod forest;
pub mod linear;
pub mod metrics;

use std::fmt;

use rand::Rng as _;

use crate::dataset::{split_validation, Matrix};
use crate::error::{Error, Result};
use crate::seed::Rng;

pub use calibration::{fit_sigmoid, platt_calibrate, CalibratedModel, ProbabilityMatrix, Sigmoid};
pub use forest::{fit_forest, fit_forest_seeded, ForestModel, ForestParams};
pub use linear::{fit_linear, LinearModel};
pub use metrics::{f1_macro, MetricSpec};

/// Anything that yields calibrated class probabilities for feature rows.
pub trait Predictor: Send + Sync {
    fn class_count(&self) -> usize;
    fn predict_proba(&self, features: &Matrix) -> Result<ProbabilityMatrix>;
}

impl Predictor for CalibratedModel {
    fn class_count(&self) -> usize {
        CalibratedModel::class_count(self)
    }

    fn predict_proba(&self, features: &Matrix) -> Result<ProbabilityMatrix> {
        CalibratedModel::predict_proba(self, features)
    }
}

/// Index of the largest entry; the first one wins ties.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PipelineKind {
    LinearMargin,
    RandomForest,
}

/// Hyperparameter search space, enumerated in declaration order with the
/// first list outermost.
#[derive(Debug, Clone, PartialEq)]
pub enum HyperGrid {
    Linear {
        c: Vec<f64>,
    },
    Forest {
        min_samples_leaf: Vec<usize>,
        n_estimators: Vec<usize>,
        max_depth: Vec<usize>,
    },
}

impl HyperGrid {
    pub fn linear_default() -> Self {
        HyperGrid::Linear {
            c: vec![0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0],
        }
    }

    pub fn forest_default() -> Self {
        HyperGrid::Forest {
            min_samples_leaf: vec![1, 5, 9],
            n_estimators: vec![5, 10, 20, 30, 40, 50],
            max_depth: vec![5, 10, 15, 20, 25, 30],
        }
    }

    pub fn kind(&self) -> PipelineKind {
        match self {
            HyperGrid::Linear { .. } => PipelineKind::LinearMargin,
            HyperGrid::Forest { .. } => PipelineKind::RandomForest,
        }
    }

    pub fn points(&self) -> Vec<HyperParams> {
        match self {
            HyperGrid::Linear { c } => c.iter().map(|&c| HyperParams::Linear { c }).collect(),
            HyperGrid::Forest {
                min_samples_leaf,
                n_estimators,
                max_depth,
            } => {
                let mut out = Vec::new();
                for &leaf in min_samples_leaf {
                    for &trees in n_estimators {
                        for &depth in max_depth {
                            out.push(HyperParams::Forest(ForestParams {
                                min_samples_leaf: leaf,
                                n_estimators: trees,
                                max_depth: depth,
                            }));
                        }
                    }
                }
                out
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            HyperGrid::Linear { c } => !c.is_empty() && c.iter().all(|v| v.is_finite() && *v > 0.0),
            HyperGrid::Forest {
                min_samples_leaf,
                n_estimators,
                max_depth,
            } => [min_samples_leaf, n_estimators, max_depth]
                .iter()
                .all(|l| !l.is_empty() && l.iter().all(|&v| v > 0)),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(
                "hyperparameter grid must be non-empty with positive values".into(),
            ))
        }
    }
}

/// One point of a [`HyperGrid`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HyperParams {
    Linear { c: f64 },
    Forest(ForestParams),
}

impl fmt::Display for HyperParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HyperParams::Linear { c } => write!(f, "C={c}"),
            HyperParams::Forest(p) => write!(
                f,
                "min_samples_leaf={};n_estimators={};max_depth={}",
                p.min_samples_leaf, p.n_estimators, p.max_depth
            ),
        }
    }
}

/// A named classifier family with its search space.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineSpec {
    pub id: String,
    pub grid: HyperGrid,
}

impl PipelineSpec {
    pub fn new(id: impl Into<String>, grid: HyperGrid) -> Result<Self> {
        grid.validate()?;
        Ok(Self { id: id.into(), grid })
    }

    pub fn linear() -> Self {
        Self {
            id: "linear".into(),
            grid: HyperGrid::linear_default(),
        }
    }

    pub fn forest() -> Self {
        Self {
            id: "forest".into(),
            grid: HyperGrid::forest_default(),
        }
    }

    /// Parse a pipeline token: `linear` or `forest`.
    pub fn from_token(token: &str) -> Result<Self> {
        match token.trim() {
            "linear" => Ok(Self::linear()),
            "forest" => Ok(Self::forest()),
            other => Err(Error::Config(format!("unknown pipeline `{other}`"))),
        }
    }

    pub fn kind(&self) -> PipelineKind {
        self.grid.kind()
    }
}

/// A fitted, uncalibrated classifier producing one raw score per class.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Linear(LinearModel),
    Forest(ForestModel),
}

impl TrainedModel {
    pub fn class_count(&self) -> usize {
        match self {
            TrainedModel::Linear(m) => m.class_count(),
            TrainedModel::Forest(m) => m.class_count(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            TrainedModel::Linear(m) => m.dim(),
            TrainedModel::Forest(m) => m.dim(),
        }
    }

    pub fn kind(&self) -> PipelineKind {
        match self {
            TrainedModel::Linear(_) => PipelineKind::LinearMargin,
            TrainedModel::Forest(_) => PipelineKind::RandomForest,
        }
    }

    /// Raw decision scores, one row per instance.
    pub fn scores(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: features.cols(),
            });
        }
        let k = self.class_count();
        let mut data = vec![0.0; features.rows() * k];
        for (row, out) in features.iter_rows().zip(data.chunks_exact_mut(k)) {
            match self {
                TrainedModel::Linear(m) => m.score_row(row, out),
                TrainedModel::Forest(m) => m.score_row(row, out),
            }
        }
        Matrix::new(features.rows(), k, data)
    }

    pub fn predict(&self, features: &Matrix) -> Result<Vec<usize>> {
        Ok(self.scores(features)?.iter_rows().map(argmax).collect())
    }
}

/// Result of model selection on one labeled set.
#[derive(Debug, Clone)]
pub struct Selection {
    /// Winner, fitted on the train part.
    pub model: TrainedModel,
    pub params: HyperParams,
    /// Validation score of the winner (0 when the validation part is empty).
    pub score: f64,
    /// Positions into the labeled arrays.
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Grid search against a stratified validation split of the labeled data.
///
/// Every grid point is fitted on the train part and scored on the
/// validation part; the first point with the highest score wins.
pub fn grid_search(
    spec: &PipelineSpec,
    features: &Matrix,
    labels: &[usize],
    class_count: usize,
    metric: MetricSpec,
    validation_fraction: f64,
    rng: &mut Rng,
) -> Result<Selection> {
    spec.grid.validate()?;
    let positions: Vec<usize> = (0..labels.len()).collect();
    let (train, validation) = split_validation(&positions, labels, validation_fraction, rng)?;
    let train_x = features.select(&train);
    let train_y: Vec<usize> = train.iter().map(|&i| labels[i]).collect();
    let val_x = features.select(&validation);
    let val_y: Vec<usize> = validation.iter().map(|&i| labels[i]).collect();

    let evaluate = |m: &TrainedModel| -> Result<f64> {
        if val_y.is_empty() {
            return Ok(0.0);
        }
        metric.evaluate(&m.predict(&val_x)?, &val_y, class_count)
    };

    let mut best: Option<(TrainedModel, HyperParams, f64)> = None;
    let mut consider = |m: TrainedModel, p: HyperParams, s: f64| {
        if best.as_ref().is_none_or(|b| s > b.2) {
            best = Some((m, p, s));
        }
    };

    match &spec.grid {
        HyperGrid::Linear { .. } => {
            for p in spec.grid.points() {
                let HyperParams::Linear { c } = p else { unreachable!() };
                let m = TrainedModel::Linear(fit_linear(&train_x, &train_y, class_count, c)?);
                let s = evaluate(&m)?;
                consider(m, p, s);
            }
        }
        HyperGrid::Forest {
            min_samples_leaf,
            n_estimators,
            max_depth,
        } => {
            // One full-size forest per leaf size; smaller candidates are
            // exact prefix/depth views of it.
            let base_seed = rng.gen::<u64>();
            let widest = *n_estimators.iter().max().expect("validated");
            let deepest = *max_depth.iter().max().expect("validated");
            for &leaf in min_samples_leaf {
                let family = fit_forest_seeded(
                    &train_x,
                    &train_y,
                    class_count,
                    ForestParams {
                        min_samples_leaf: leaf,
                        n_estimators: widest,
                        max_depth: deepest,
                    },
                    base_seed,
                )?;
                for &trees in n_estimators {
                    for &depth in max_depth {
                        let m = TrainedModel::Forest(family.view(trees, depth));
                        let s = evaluate(&m)?;
                        let p = HyperParams::Forest(ForestParams {
                            min_samples_leaf: leaf,
                            n_estimators: trees,
                            max_depth: depth,
                        });
                        consider(m, p, s);
                    }
                }
            }
        }
    }
    let (model, params, score) = best.ok_or(Error::Empty("hyperparameter grid"))?;
    Ok(Selection {
        model,
        params,
        score,
        train,
        validation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_blobs;
    use crate::seed;

    #[test]
    fn argmax_first_wins_ties() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[1.0]), 0);
    }

    #[test]
    fn grid_enumeration_order() {
        let pts = HyperGrid::forest_default().points();
        assert_eq!(pts.len(), 108);
        assert_eq!(
            pts[1],
            HyperParams::Forest(ForestParams { min_samples_leaf: 1, n_estimators: 5, max_depth: 10 })
        );
        assert_eq!(HyperGrid::linear_default().points().len(), 7);
    }

    #[test]
    fn singleton_grid_wins() {
        let b = make_blobs(2, 2, 30, 3.0, &mut seed::rng(1)).unwrap();
        let spec = PipelineSpec::new("one", HyperGrid::Linear { c: vec![0.5] }).unwrap();
        let sel = grid_search(&spec, &b.features, &b.labels, 2, MetricSpec::F1Macro, 0.2, &mut seed::rng(2)).unwrap();
        assert_eq!(sel.params, HyperParams::Linear { c: 0.5 });
    }

    #[test]
    fn ties_pick_first_point() {
        // perfectly separable: every C reaches validation F1 = 1
        let b = make_blobs(2, 2, 40, 12.0, &mut seed::rng(3)).unwrap();
        let spec = PipelineSpec::new("t", HyperGrid::Linear { c: vec![10.0, 1.0, 0.1] }).unwrap();
        let sel = grid_search(&spec, &b.features, &b.labels, 2, MetricSpec::F1Macro, 0.2, &mut seed::rng(4)).unwrap();
        assert_eq!(sel.score, 1.0);
        assert_eq!(sel.params, HyperParams::Linear { c: 10.0 });
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(PipelineSpec::new("e", HyperGrid::Linear { c: vec![] }).is_err());
        assert!(PipelineSpec::from_token("svm").is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = TrainedModel::Linear(LinearModel::from_parts(2, 2, vec![0.0; 4], vec![0.0; 2]).unwrap());
        let x = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(m.scores(&x), Err(Error::DimensionMismatch { .. })));
    }
}
