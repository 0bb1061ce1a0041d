//! Model families, their gradient-descent trainers, and evaluation.

pub mod features;
pub mod kernels;

use ndarray::{Array1, Array2, Axis};

use crate::data::{Dataset, Shard};
use crate::error::{Error, Result};
use crate::exec::partitioned_gradient;
use crate::space::Configuration;

pub use features::{random_features, FeatureMap, FeatureSpec, Projection};
pub use kernels::{
    batched_gradient, batched_hinge_subgradient, hinge_subgradient, logistic_gradient,
    naive_batched_gradient, sigma, Loss,
};

/// Hyperparameter names the trainers read from a [`Configuration`].
pub mod params {
    pub const LEARNING_RATE: &str = "lr";
    pub const REGULARIZATION: &str = "reg";
    pub const PROJECTION: &str = "projection";
    pub const NOISE: &str = "noise";
    pub const DISTRIBUTION: &str = "distribution";
    pub const SKEW: &str = "skew";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Logistic,
    LinearSvm,
}

impl Family {
    pub fn from_label(label: &str) -> Result<Self> {
        match label {
            "logistic" => Ok(Family::Logistic),
            "linear_svm" | "svm" => Ok(Family::LinearSvm),
            other => Err(Error::invalid_argument(format!("unknown model family {other:?}"))),
        }
    }

    pub fn loss(self) -> Loss {
        match self {
            Family::Logistic => Loss::Logistic,
            Family::LinearSvm => Loss::Hinge,
        }
    }
}

/// A partially or fully trained model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    /// Position of this model's configuration in proposal order.
    pub id: usize,
    pub family: Family,
    pub config: Configuration,
    pub weights: Array1<f64>,
    pub iterations_used: usize,
    pub val_error: Option<f64>,
    /// Set once an update produced non-finite weights; the weights are then
    /// the last finite ones and no longer change.
    pub diverged: bool,
}

impl ModelState {
    /// Zero-initialized model over `dim` features.
    pub fn new(id: usize, config: Configuration, dim: usize) -> Result<Self> {
        let family = Family::from_label(&config.family)?;
        let eta = config.real(params::LEARNING_RATE).ok_or_else(|| {
            Error::invalid_argument(format!("configuration lacks `{}`", params::LEARNING_RATE))
        })?;
        if !(eta.is_finite() && eta > 0.0) {
            return Err(Error::invalid_argument(format!("learning rate {eta} must be positive")));
        }
        Ok(ModelState {
            id,
            family,
            config,
            weights: Array1::zeros(dim),
            iterations_used: 0,
            val_error: None,
            diverged: false,
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.config.real(params::LEARNING_RATE).unwrap_or(0.0)
    }

    pub fn regularization(&self) -> f64 {
        self.config.real(params::REGULARIZATION).unwrap_or(0.0)
    }
}

/// `k` models of one family over one feature space, trained together.
#[derive(Debug, Clone)]
pub struct ModelBatch {
    /// `d × k`, column `j` is `members[j].weights`.
    weights: Array2<f64>,
    members: Vec<ModelState>,
}

impl ModelBatch {
    pub fn new(members: Vec<ModelState>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::invalid_argument("a batch needs at least one model"))?;
        let (family, dim) = (first.family, first.weights.len());
        if members.iter().any(|m| m.family != family || m.weights.len() != dim) {
            return Err(Error::invalid_argument(
                "batch members must share a family and feature dimension",
            ));
        }
        let mut weights = Array2::zeros((dim, members.len()));
        for (mut col, m) in weights.columns_mut().into_iter().zip(&members) {
            col.assign(&m.weights);
        }
        Ok(ModelBatch { weights, members })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn members(&self) -> &[ModelState] {
        &self.members
    }

    pub fn into_members(self) -> Vec<ModelState> {
        self.members
    }

    pub fn family(&self) -> Family {
        self.members[0].family
    }
}

/// How each iteration touches the training data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TrainMode {
    /// Full-data gradient per iteration.
    #[default]
    FullBatch,
    /// Each iteration uses a contiguous block of this many rows from every
    /// partition, advancing through the partition cyclically.
    MiniBatch(usize),
}

fn minibatch<'a>(shards: &[Shard<'a>], size: usize, step: usize) -> Vec<Shard<'a>> {
    shards
        .iter()
        .filter(|s| s.x.nrows() > 0)
        .map(|s| {
            let n = s.x.nrows();
            let size = size.min(n);
            let blocks = n.div_ceil(size);
            let start = (step % blocks) * size;
            let end = (start + size).min(n);
            Shard {
                x: s.x.slice_move(ndarray::s![start..end, ..]),
                y: s.y.slice_move(ndarray::s![start..end]),
            }
        })
        .collect()
}

/// Runs `iters` gradient steps `W ← W − diag(η) ∇` on every member, reading
/// the training data once per step whatever the batch size, then stores each
/// member's validation error.
///
/// A member whose update turns non-finite keeps its last finite weights, is
/// marked diverged with validation error 1.0, and is not updated again.
pub fn train_partial(
    mut batch: ModelBatch,
    train: &Dataset,
    validation: &Dataset,
    iters: usize,
    mode: TrainMode,
) -> Result<ModelBatch> {
    if iters == 0 {
        return Err(Error::invalid_argument("iteration count must be at least 1"));
    }
    let dim = batch.weights.nrows();
    if train.n_features() != dim || validation.n_features() != dim {
        return Err(Error::invalid_argument(format!(
            "models have {dim} weights, data has {} / {} features",
            train.n_features(),
            validation.n_features()
        )));
    }
    if let TrainMode::MiniBatch(0) = mode {
        return Err(Error::invalid_argument("minibatch size must be at least 1"));
    }
    let loss = batch.family().loss();
    let etas: Vec<f64> = batch.members.iter().map(ModelState::learning_rate).collect();
    let lambdas: Vec<f64> = batch.members.iter().map(ModelState::regularization).collect();

    for _ in 0..iters {
        let shards = train.scan();
        let step = batch.members[0].iterations_used;
        let grad = match mode {
            TrainMode::FullBatch => partitioned_gradient(loss, &shards, batch.weights.view(), &lambdas)?,
            TrainMode::MiniBatch(size) => {
                let blocks = minibatch(&shards, size, step);
                partitioned_gradient(loss, &blocks, batch.weights.view(), &lambdas)?
            }
        };
        for (j, member) in batch.members.iter_mut().enumerate() {
            member.iterations_used += 1;
            if member.diverged {
                continue;
            }
            let mut col = batch.weights.column_mut(j);
            let updated: Array1<f64> = &col - &(&grad.column(j) * etas[j]);
            if updated.iter().all(|v| v.is_finite()) {
                col.assign(&updated);
            } else {
                member.diverged = true;
            }
        }
    }

    for (member, col) in batch.members.iter_mut().zip(batch.weights.axis_iter(Axis(1))) {
        member.weights.assign(&col);
    }
    for member in &mut batch.members {
        member.val_error = Some(if member.diverged {
            1.0
        } else {
            evaluate(member, validation)?
        });
    }
    Ok(batch)
}

/// Fraction of misclassified rows, predicting class 1 when `wᵀx ≥ 0`
/// (equivalently `σ(wᵀx) ≥ 0.5`).
pub fn evaluate(model: &ModelState, split: &Dataset) -> Result<f64> {
    if split.is_empty() {
        return Err(Error::invalid_argument("cannot evaluate on an empty split"));
    }
    if split.n_features() != model.weights.len() {
        return Err(Error::invalid_argument(format!(
            "model has {} weights, data has {} features",
            model.weights.len(),
            split.n_features()
        )));
    }
    let scores = split.features().dot(&model.weights);
    let wrong = scores
        .iter()
        .zip(split.labels())
        .filter(|(&s, &y)| (s >= 0.0) != (y == 1.0))
        .count();
    Ok(wrong as f64 / split.n_rows() as f64)
}
