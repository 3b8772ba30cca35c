use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::PipelineSpec;
use crate::qstrat::{StrategyId, StrategyParams};
use crate::seed;
use crate::trial::{iteration_count, ExperimentConfig};

/// How each dataset is cut into an active learning pool and a test set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub pool_size: usize,
    pub test_size: usize,
    pub validation_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            pool_size: 20_000,
            test_size: 5_000,
            validation_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixConfig {
    /// CSV paths or synthetic specs `blobs:C:D:N:S:SEED`.
    pub datasets: Vec<String>,
    /// `linear`, `forest`, or `name:linear` / `name:forest`.
    pub pipelines: Vec<String>,
    pub strategies: Vec<StrategyId>,
    /// `(b, s)` pairs.
    pub batch_seed: Vec<(usize, usize)>,
    pub trials: usize,
    pub base_seed: u64,
    pub max_labeled: usize,
    pub split: SplitSpec,
    pub output_dir: PathBuf,
    pub strategy_params: StrategyParams,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            pipelines: vec!["linear".into()],
            strategies: StrategyId::ALL.to_vec(),
            batch_seed: vec![(200, 200), (500, 500)],
            trials: 3,
            base_seed: 0,
            max_labeled: 5000,
            split: SplitSpec::default(),
            output_dir: PathBuf::from("results"),
            strategy_params: StrategyParams::default(),
        }
    }
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

/// Split a pipeline token into (id, spec).
pub fn parse_pipeline(token: &str) -> Result<PipelineSpec> {
    match token.split_once(':') {
        Some((id, kind)) => {
            let id = id.trim();
            if id.is_empty() {
                return Err(Error::Config(format!("empty pipeline name in `{token}`")));
            }
            let mut spec = PipelineSpec::from_token(kind)?;
            spec.id = id.to_string();
            Ok(spec)
        }
        None => PipelineSpec::from_token(token),
    }
}

impl MatrixConfig {
    /// Parse flat `key = value` text. Blank lines and `#` comments are
    /// ignored; lists are comma separated; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = MatrixConfig::default();
        let mut seen = BTreeSet::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("duplicate key `{key}`")));
            }
            match key {
                "datasets" => cfg.datasets = list(value),
                "pipelines" => cfg.pipelines = list(value),
                "strategies" => {
                    cfg.strategies = list(value).iter().map(|s| s.parse()).collect::<Result<_>>()?;
                }
                "batch_seed" => {
                    cfg.batch_seed = list(value)
                        .iter()
                        .map(|pair| {
                            let (b, s) = pair
                                .split_once(':')
                                .ok_or_else(|| Error::Config(format!("batch_seed entry `{pair}` is not `b:s`")))?;
                            Ok((number(key, b)?, number(key, s)?))
                        })
                        .collect::<Result<_>>()?;
                }
                "trials" => cfg.trials = number(key, value)?,
                "base_seed" => cfg.base_seed = number(key, value)?,
                "max_labeled" => cfg.max_labeled = number(key, value)?,
                "pool_size" => cfg.split.pool_size = number(key, value)?,
                "test_size" => cfg.split.test_size = number(key, value)?,
                "validation_fraction" => cfg.split.validation_fraction = number(key, value)?,
                "output_dir" => cfg.output_dir = PathBuf::from(value),
                "cal_k" => cfg.strategy_params.cal_k = number(key, value)?,
                "real_clusters" => cfg.strategy_params.real_clusters = number(key, value)?,
                "dal_hidden" => cfg.strategy_params.dal_hidden = number(key, value)?,
                "dal_epochs" => cfg.strategy_params.dal_epochs = number(key, value)?,
                "dal_learning_rate" => cfg.strategy_params.dal_learning_rate = number(key, value)?,
                other => return Err(Error::Config(format!("unknown key `{other}`"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Read and parse a config file. Relative dataset paths and the output
    /// directory are resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for d in &mut cfg.datasets {
            if !d.starts_with("blobs:") && Path::new(d).is_relative() {
                *d = base.join(&*d).to_string_lossy().into_owned();
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let nonempty = |name: &str, len: usize| {
            if len == 0 {
                Err(Error::Config(format!("`{name}` is empty")))
            } else {
                Ok(())
            }
        };
        nonempty("datasets", self.datasets.len())?;
        nonempty("pipelines", self.pipelines.len())?;
        nonempty("strategies", self.strategies.len())?;
        nonempty("batch_seed", self.batch_seed.len())?;
        if self.trials == 0 {
            return Err(Error::Config("`trials` must be at least 1".into()));
        }
        for &(b, s) in &self.batch_seed {
            iteration_count(b, s, self.max_labeled)?;
        }
        if self.split.pool_size < self.max_labeled {
            return Err(Error::Config(format!(
                "pool_size {} is below max_labeled {}",
                self.split.pool_size, self.max_labeled
            )));
        }
        if self.split.test_size == 0 {
            return Err(Error::Config("`test_size` must be positive".into()));
        }
        if !(self.split.validation_fraction > 0.0 && self.split.validation_fraction < 1.0) {
            return Err(Error::Config("`validation_fraction` must lie in (0, 1)".into()));
        }
        let mut ids = BTreeSet::new();
        for p in &self.pipelines {
            if !ids.insert(parse_pipeline(p)?.id) {
                return Err(Error::Config(format!("duplicate pipeline `{p}`")));
            }
        }
        let unique = |v: &[String], name: &str| {
            if v.iter().collect::<BTreeSet<_>>().len() != v.len() {
                Err(Error::Config(format!("duplicate entries in `{name}`")))
            } else {
                Ok(())
            }
        };
        unique(&self.datasets, "datasets")?;
        let q: Vec<String> = self.strategies.iter().map(|s| s.to_string()).collect();
        unique(&q, "strategies")?;
        if self.batch_seed.iter().collect::<BTreeSet<_>>().len() != self.batch_seed.len() {
            return Err(Error::Config("duplicate entries in `batch_seed`".into()));
        }
        self.strategy_params.validate()
    }
}

/// Primary key of a trial.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrialKey {
    pub dataset: String,
    pub pipeline: String,
    pub strategy: StrategyId,
    pub batch: usize,
    pub seed_size: usize,
    pub trial: usize,
}

impl TrialKey {
    /// Tab-separated form used in the completion manifest.
    pub fn to_line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}\t{}\t{}",
            self.dataset, self.pipeline, self.strategy, self.batch, self.seed_size, self.trial
        )
    }

    pub fn from_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 6 {
            return Err(Error::Parse(format!("manifest line `{line}`")));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("manifest line `{line}`")));
        Ok(Self {
            dataset: f[0].to_string(),
            pipeline: f[1].to_string(),
            strategy: f[2].parse()?,
            batch: num(f[3])?,
            seed_size: num(f[4])?,
            trial: num(f[5])?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSpec {
    pub key: TrialKey,
    pub config: ExperimentConfig,
}

/// Seed of one trial. The strategy is left out so all strategies of a
/// trial start from the same seed set.
pub fn trial_seed(base_seed: u64, dataset: &str, pipeline: &str, batch: usize, seed_size: usize, trial: usize) -> u64 {
    let mut s = seed::derive(base_seed, "trial");
    s = seed::derive(s, dataset);
    s = seed::derive(s, pipeline);
    s = seed::derive_index(s, batch as u64);
    s = seed::derive_index(s, seed_size as u64);
    seed::derive_index(s, trial as u64)
}

/// Cartesian product of datasets, pipelines, strategies and (b, s) pairs,
/// times the trial count, in that nesting order.
pub fn expand_matrix(config: &MatrixConfig) -> Result<Vec<TrialSpec>> {
    config.validate()?;
    let pipelines: Vec<PipelineSpec> = config.pipelines.iter().map(|p| parse_pipeline(p)).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for dataset in &config.datasets {
        for pipeline in &pipelines {
            for &strategy in &config.strategies {
                for &(batch, seed_size) in &config.batch_seed {
                    for trial in 0..config.trials {
                        let seed = trial_seed(config.base_seed, dataset, &pipeline.id, batch, seed_size, trial);
                        let mut ec =
                            ExperimentConfig::new(dataset.clone(), pipeline.clone(), strategy, batch, seed_size, seed);
                        ec.max_labeled = config.max_labeled;
                        ec.validation_fraction = config.split.validation_fraction;
                        ec.strategy_params = config.strategy_params;
                        out.push(TrialSpec {
                            key: TrialKey {
                                dataset: dataset.clone(),
                                pipeline: pipeline.id.clone(),
                                strategy,
                                batch,
                                seed_size,
                                trial,
                            },
                            config: ec,
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}
