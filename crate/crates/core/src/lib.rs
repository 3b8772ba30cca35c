//! Batch active learning benchmark: datasets, classifier pipelines with
//! calibration, query strategies, the trial loop, experiment matrices and
//! the statistics used to compare strategies against random sampling.

pub mod analysis;
pub mod dataset;
pub mod error;
pub mod model;
pub mod qstrat;
pub mod runner;
pub mod seed;
pub mod trial;

pub use dataset::{DatasetBundle, Matrix};
pub use error::{Error, Result};
pub use model::{CalibratedModel, HyperGrid, MetricSpec, PipelineSpec, Predictor, ProbabilityMatrix, TrainedModel};
pub use qstrat::{PoolState, StrategyId, StrategyParams};
pub use trial::{run_trial, ExperimentConfig, IterationRecord, RunRecord};
pub use runner::{expand_matrix, run_matrix, MatrixConfig, ReportKind, ResultsTable};
