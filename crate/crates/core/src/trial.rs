//! One active learning trial: seed set, then alternate model fitting and
//! batch queries until the labeled budget is spent.

use std::time::Instant;

use rand::seq::index;

use crate::dataset::DatasetBundle;
use crate::error::{Error, Result};
use crate::model::{grid_search, platt_calibrate, CalibratedModel, MetricSpec, PipelineSpec};
use crate::qstrat::{dispatch, PoolState, QueryContext, StrategyId, StrategyParams};
use crate::seed;

/// How the initial labeled set is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SeedStrategy {
    /// Uniform without replacement, ignoring labels.
    #[default]
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset_id: String,
    pub pipeline: PipelineSpec,
    pub strategy: StrategyId,
    pub batch: usize,
    pub seed_size: usize,
    pub max_labeled: usize,
    pub seed_strategy: SeedStrategy,
    pub metric: MetricSpec,
    pub trial_seed: u64,
    pub strategy_params: StrategyParams,
    pub validation_fraction: f64,
}

impl ExperimentConfig {
    pub fn new(
        dataset_id: impl Into<String>,
        pipeline: PipelineSpec,
        strategy: StrategyId,
        batch: usize,
        seed_size: usize,
        trial_seed: u64,
    ) -> Self {
        Self {
            dataset_id: dataset_id.into(),
            pipeline,
            strategy,
            batch,
            seed_size,
            max_labeled: 5000,
            seed_strategy: SeedStrategy::Random,
            metric: MetricSpec::F1Macro,
            trial_seed,
            strategy_params: StrategyParams::default(),
            validation_fraction: 0.2,
        }
    }

    /// Number of querying iterations, `(max_labeled - s) / b`.
    pub fn iterations(&self) -> Result<usize> {
        iteration_count(self.batch, self.seed_size, self.max_labeled)
    }

    pub fn validate(&self) -> Result<()> {
        self.iterations()?;
        self.strategy_params.validate()?;
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation fraction {} outside (0, 1)",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// `(max_labeled - s) / b`, rejecting anything but a non-negative integer.
pub fn iteration_count(batch: usize, seed_size: usize, max_labeled: usize) -> Result<usize> {
    if batch == 0 || seed_size == 0 {
        return Err(Error::Config("batch and seed sizes must be positive".into()));
    }
    if max_labeled < seed_size {
        return Err(Error::Config(format!(
            "max_labeled {max_labeled} is below the seed size {seed_size}"
        )));
    }
    let span = max_labeled - seed_size;
    if span % batch != 0 {
        return Err(Error::Config(format!(
            "(max_labeled - s) / b = ({max_labeled} - {seed_size}) / {batch} is not an integer"
        )));
    }
    Ok(span / batch)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Labeled set size, `s + t * b`.
    pub labeled: usize,
    pub f1_macro: f64,
    pub hyperparameters: String,
    pub calibration_fallback: bool,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub entries: Vec<IterationRecord>,
    /// Pool indices in the order they were labeled.
    pub final_labeled: Vec<usize>,
    /// The first seed set had fewer than two classes and was redrawn.
    pub reseeded: bool,
}

impl RunRecord {
    /// Equality on everything but wall-clock timings.
    pub fn same_outcome(&self, other: &RunRecord) -> bool {
        self.config == other.config
            && self.final_labeled == other.final_labeled
            && self.reseeded == other.reseeded
            && self.entries.len() == other.entries.len()
            && self.entries.iter().zip(&other.entries).all(|(a, b)| {
                a.iteration == b.iteration
                    && a.labeled == b.labeled
                    && a.f1_macro.to_bits() == b.f1_macro.to_bits()
                    && a.hyperparameters == b.hyperparameters
                    && a.calibration_fallback == b.calibration_fallback
            })
    }
}

/// Ground-truth labels for pool indices.
pub fn oracle_label(indices: &[usize], bundle: &DatasetBundle) -> Result<Vec<usize>> {
    indices
        .iter()
        .map(|&i| {
            bundle.labels.get(i).copied().ok_or(Error::IndexOutOfRange {
                index: i,
                len: bundle.len(),
            })
        })
        .collect()
}

fn distinct_classes(labels: &[usize]) -> usize {
    let mut v = labels.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

fn draw_seed_set(pool: &DatasetBundle, size: usize, stream: u64) -> Result<(Vec<usize>, bool)> {
    let draw = |s: u64| -> Vec<usize> {
        let mut rng = seed::rng(s);
        index::sample(&mut rng, pool.len(), size).into_vec()
    };
    let first = draw(stream);
    if distinct_classes(&oracle_label(&first, pool)?) >= 2 {
        return Ok((first, false));
    }
    let second = draw(seed::derive(stream, "reseed"));
    if distinct_classes(&oracle_label(&second, pool)?) >= 2 {
        return Ok((second, true));
    }
    Err(Error::InvalidArgument(
        "seed set holds a single class even after reseeding".into(),
    ))
}

/// Sub-seeds of a trial. The seed set depends only on the trial seed, so
/// every strategy in a trial starts from the same labeled set.
struct Streams {
    seed_set: u64,
    model: u64,
    strategy: u64,
}

impl Streams {
    fn new(config: &ExperimentConfig) -> Self {
        Self {
            seed_set: seed::derive(config.trial_seed, "seed-set"),
            model: seed::derive(config.trial_seed, "model"),
            strategy: seed::derive(
                seed::derive(config.trial_seed, "strategy"),
                config.strategy.as_str(),
            ),
        }
    }
}

fn fit_iteration(
    config: &ExperimentConfig,
    pool: &DatasetBundle,
    state: &PoolState,
    model_seed: u64,
) -> Result<(CalibratedModel, String)> {
    let x = pool.features.select(state.labeled());
    let y = state.labels_of_labeled();
    let mut rng = seed::rng(model_seed);
    let sel = grid_search(
        &config.pipeline,
        &x,
        y,
        pool.class_count,
        config.metric,
        config.validation_fraction,
        &mut rng,
    )?;
    let val_x = x.select(&sel.validation);
    let val_y: Vec<usize> = sel.validation.iter().map(|&p| y[p]).collect();
    let model = platt_calibrate(sel.model, &val_x, &val_y)?;
    Ok((model, sel.params.to_string()))
}

/// Run one trial of batch active learning and score every iteration on
/// `test`.
pub fn run_trial(config: &ExperimentConfig, pool: &DatasetBundle, test: &DatasetBundle) -> Result<RunRecord> {
    run_trial_observed(config, pool, test, |_, _| {})
}

/// [`run_trial`], handing the pool state of every iteration to `observe`
/// once that iteration's batch has been labeled.
pub fn run_trial_observed(
    config: &ExperimentConfig,
    pool: &DatasetBundle,
    test: &DatasetBundle,
    mut observe: impl FnMut(usize, &PoolState),
) -> Result<RunRecord> {
    config.validate()?;
    let iterations = config.iterations()?;
    if pool.len() < config.max_labeled {
        return Err(Error::SizeExceedsPopulation {
            requested: config.max_labeled,
            available: pool.len(),
        });
    }
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    if test.dim() != pool.dim() {
        return Err(Error::DimensionMismatch {
            expected: pool.dim(),
            found: test.dim(),
        });
    }

    let streams = Streams::new(config);
    let (seed_set, reseeded) = draw_seed_set(pool, config.seed_size, streams.seed_set)?;
    let seed_labels = oracle_label(&seed_set, pool)?;
    let mut in_seed = vec![false; pool.len()];
    seed_set.iter().for_each(|&i| in_seed[i] = true);
    let rest: Vec<usize> = (0..pool.len()).filter(|&i| !in_seed[i]).collect();
    let mut state = PoolState::new(seed_set, seed_labels, rest)?;

    let mut strategy_rng = seed::rng(streams.strategy);
    let mut entries = Vec::with_capacity(iterations + 1);
    let mut previous: Option<CalibratedModel> = None;
    for t in 0..=iterations {
        let started = Instant::now();
        if let Some(model) = &previous {
            let ctx = QueryContext {
                model: Some(model),
                features: &pool.features,
                pool: &state,
                batch: config.batch,
                params: &config.strategy_params,
            };
            let batch = dispatch(config.strategy, &ctx, &mut strategy_rng)?;
            let labels = oracle_label(&batch, pool)?;
            state.label(&batch, &labels)?;
        }
        observe(t, &state);

        let (model, params) = fit_iteration(config, pool, &state, seed::derive_index(streams.model, t as u64))?;
        let predicted = model.predict(&test.features)?;
        let score = config.metric.evaluate(&predicted, &test.labels, pool.class_count)?;
        entries.push(IterationRecord {
            iteration: t,
            labeled: state.labeled().len(),
            f1_macro: score,
            hyperparameters: params,
            calibration_fallback: model.used_fallback(),
            wall_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        previous = Some(model);
    }
    Ok(RunRecord {
        config: config.clone(),
        entries,
        final_labeled: state.labeled().to_vec(),
        reseeded,
    })
}
