//! Query strategies: pick the next batch of pool indices to label.
//!
//! Every strategy sorts the unlabeled (and labeled) index lists before
//! doing anything else, so the storage order of a [`PoolState`] never
//! influences a selection. All ties are broken by ascending pool index.

pub mod cal;
pub mod dal;
pub mod kmeans;
pub mod margin;
pub mod random;
pub mod real;

use std::fmt;
use std::str::FromStr;

use crate::dataset::Matrix;
use crate::error::{Error, Result};
use crate::model::Predictor;
use crate::seed::Rng;

pub use cal::{cal_scores, kl_divergence, select_cal};
pub use dal::{select_dal, Discriminator};
pub use kmeans::kmeans;
pub use margin::{margin_of, select_margin};
pub use random::select_random;
pub use real::{select_real, select_real_with_clusters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StrategyId {
    Random,
    Margin,
    Cal,
    Dal,
    Real,
}

impl StrategyId {
    pub const ALL: [StrategyId; 5] = [
        StrategyId::Random,
        StrategyId::Margin,
        StrategyId::Cal,
        StrategyId::Dal,
        StrategyId::Real,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyId::Random => "random",
            StrategyId::Margin => "margin",
            StrategyId::Cal => "cal",
            StrategyId::Dal => "dal",
            StrategyId::Real => "real",
        }
    }

    pub fn is_random(self) -> bool {
        self == StrategyId::Random
    }

    pub fn needs_model(self) -> bool {
        matches!(self, StrategyId::Margin | StrategyId::Cal | StrategyId::Real)
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StrategyId::ALL
            .into_iter()
            .find(|q| q.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrategyParams {
    pub cal_k: usize,
    pub real_clusters: usize,
    pub dal_hidden: usize,
    pub dal_epochs: usize,
    pub dal_learning_rate: f64,
}

impl Default for StrategyParams {
    fn default() -> Self {
        Self {
            cal_k: 10,
            real_clusters: 25,
            dal_hidden: 64,
            dal_epochs: 50,
            dal_learning_rate: 0.05,
        }
    }
}

impl StrategyParams {
    pub fn validate(&self) -> Result<()> {
        if self.cal_k == 0 || self.real_clusters == 0 || self.dal_hidden == 0 {
            return Err(Error::InvalidArgument(
                "strategy parameters must be positive".into(),
            ));
        }
        if !(self.dal_learning_rate.is_finite() && self.dal_learning_rate > 0.0) {
            return Err(Error::InvalidArgument("dal learning rate must be positive".into()));
        }
        Ok(())
    }
}

/// Labeled and unlabeled pool indices at one iteration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PoolState {
    labeled: Vec<usize>,
    labels_of_labeled: Vec<usize>,
    unlabeled: Vec<usize>,
}

impl PoolState {
    pub fn new(labeled: Vec<usize>, labels_of_labeled: Vec<usize>, unlabeled: Vec<usize>) -> Result<Self> {
        if labeled.len() != labels_of_labeled.len() {
            return Err(Error::LengthMismatch {
                left: labeled.len(),
                right: labels_of_labeled.len(),
            });
        }
        let mut all: Vec<usize> = labeled.iter().chain(&unlabeled).copied().collect();
        all.sort_unstable();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(
                "labeled and unlabeled sets overlap or repeat an index".into(),
            ));
        }
        Ok(Self {
            labeled,
            labels_of_labeled,
            unlabeled,
        })
    }

    /// Everything unlabeled.
    pub fn fresh(pool_size: usize) -> Self {
        Self {
            labeled: Vec::new(),
            labels_of_labeled: Vec::new(),
            unlabeled: (0..pool_size).collect(),
        }
    }

    pub fn labeled(&self) -> &[usize] {
        &self.labeled
    }

    pub fn labels_of_labeled(&self) -> &[usize] {
        &self.labels_of_labeled
    }

    pub fn unlabeled(&self) -> &[usize] {
        &self.unlabeled
    }

    pub fn total(&self) -> usize {
        self.labeled.len() + self.unlabeled.len()
    }

    /// Move `batch` from unlabeled to labeled with the given labels.
    pub fn label(&mut self, batch: &[usize], labels: &[usize]) -> Result<()> {
        if batch.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: batch.len(),
                right: labels.len(),
            });
        }
        let mut sorted = batch.to_vec();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("batch repeats an index".into()));
        }
        let before = self.unlabeled.len();
        self.unlabeled.retain(|i| sorted.binary_search(i).is_err());
        if before - self.unlabeled.len() != batch.len() {
            return Err(Error::InvalidArgument(
                "batch contains indices that are not unlabeled".into(),
            ));
        }
        self.labeled.extend_from_slice(batch);
        self.labels_of_labeled.extend_from_slice(labels);
        Ok(())
    }

    pub(crate) fn sorted_unlabeled(&self) -> Vec<usize> {
        let mut u = self.unlabeled.clone();
        u.sort_unstable();
        u
    }

    pub(crate) fn check_batch(&self, b: usize) -> Result<()> {
        if b > self.unlabeled.len() {
            return Err(Error::SizeExceedsPopulation {
                requested: b,
                available: self.unlabeled.len(),
            });
        }
        Ok(())
    }
}

/// `b` indices with the smallest keys (ties by index), returned ascending.
pub(crate) fn smallest_by_key(mut keyed: Vec<(f64, usize)>, b: usize) -> Vec<usize> {
    keyed.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let mut out: Vec<usize> = keyed.into_iter().take(b).map(|(_, i)| i).collect();
    out.sort_unstable();
    out
}

/// `b` indices with the largest keys (ties by index), returned ascending.
pub(crate) fn largest_by_key(mut keyed: Vec<(f64, usize)>, b: usize) -> Vec<usize> {
    keyed.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let mut out: Vec<usize> = keyed.into_iter().take(b).map(|(_, i)| i).collect();
    out.sort_unstable();
    out
}

/// Everything a strategy may look at.
pub struct QueryContext<'a> {
    /// Model from the previous iteration.
    pub model: Option<&'a dyn Predictor>,
    /// Feature rows of the whole pool, addressed by pool index.
    pub features: &'a Matrix,
    pub pool: &'a PoolState,
    pub batch: usize,
    pub params: &'a StrategyParams,
}

/// Route to the strategy's selector. The returned batch always has exactly
/// `batch` distinct unlabeled indices, in ascending order.
pub fn dispatch(strategy: StrategyId, ctx: &QueryContext<'_>, rng: &mut Rng) -> Result<Vec<usize>> {
    let need_model = || {
        ctx.model.ok_or_else(|| {
            Error::InvalidArgument(format!("strategy `{strategy}` needs a trained model"))
        })
    };
    let picked = match strategy {
        StrategyId::Random => select_random(ctx.pool, ctx.batch, rng)?,
        StrategyId::Margin => select_margin(need_model()?, ctx.features, ctx.pool, ctx.batch)?,
        StrategyId::Cal => select_cal(need_model()?, ctx.features, ctx.pool, ctx.batch, ctx.params.cal_k)?,
        StrategyId::Dal => select_dal(ctx.features, ctx.pool, ctx.batch, ctx.params, rng)?,
        StrategyId::Real => select_real(need_model()?, ctx.features, ctx.pool, ctx.batch, ctx.params, rng)?,
    };
    debug_assert_eq!(picked.len(), ctx.batch);
    Ok(picked)
}
