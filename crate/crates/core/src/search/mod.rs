//! Search strategies that propose configurations from the history of
//! evaluations so far.
//!
//! Every strategy is driven through [`Strategy::propose`]. Proposed
//! configurations are identified by their position in proposal order: the
//! `n`-th configuration a strategy returns (counting from zero across calls)
//! is expected to appear in the history with `model_id == n`. Strategies that
//! need results of their own proposals (Nelder-Mead, Powell) read them from
//! the history by that id.

mod derivative_free;
mod tpe;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::space::{grid_points, sample_uniform, Configuration, SearchSpace};

pub use derivative_free::{DerivativeFree, Method};
pub use tpe::{Tpe, TpeSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Running,
    Killed,
    Finished,
}

impl Status {
    pub fn is_terminal(self) -> bool {
        !matches!(self, Status::Running)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Status::Running => "running",
            Status::Killed => "killed",
            Status::Finished => "finished",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRecord {
    pub model_id: usize,
    pub config: Configuration,
    pub iterations_used: usize,
    /// Present iff `iterations_used > 0`.
    pub val_error: Option<f64>,
    pub status: Status,
}

/// Append-only log of model evaluations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    records: Vec<HistoryRecord>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, record: HistoryRecord) {
        self.records.push(record);
    }

    pub fn records(&self) -> &[HistoryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Lowest validation error recorded; on ties the earliest record.
    pub fn best(&self) -> Option<&HistoryRecord> {
        self.records
            .iter()
            .filter(|r| r.val_error.is_some())
            .fold(None, |best: Option<&HistoryRecord>, r| match best {
                Some(b) if b.val_error <= r.val_error => Some(b),
                _ => Some(r),
            })
    }

    pub fn best_error(&self) -> Option<f64> {
        self.best().and_then(|r| r.val_error)
    }

    /// Most recent record of a model.
    pub fn latest(&self, model_id: usize) -> Option<&HistoryRecord> {
        self.records.iter().rev().find(|r| r.model_id == model_id)
    }

    /// Most recent record of every model that has a validation error,
    /// ordered by model id.
    pub fn observations(&self) -> Vec<&HistoryRecord> {
        let mut latest: Vec<Option<&HistoryRecord>> = Vec::new();
        for r in self.records.iter().filter(|r| r.val_error.is_some()) {
            if latest.len() <= r.model_id {
                latest.resize(r.model_id + 1, None);
            }
            latest[r.model_id] = Some(r);
        }
        latest.into_iter().flatten().collect()
    }

    /// Running minimum of validation error over records in order.
    pub fn best_so_far(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.records
            .iter()
            .filter_map(|r| r.val_error)
            .map(|e| {
                best = best.min(e);
                best
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    Grid,
    Random,
    NelderMead,
    Powell,
    Tpe,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Grid,
        StrategyKind::Random,
        StrategyKind::Tpe,
        StrategyKind::NelderMead,
        StrategyKind::Powell,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Grid => "grid",
            StrategyKind::Random => "random",
            StrategyKind::NelderMead => "nelder-mead",
            StrategyKind::Powell => "powell",
            StrategyKind::Tpe => "tpe",
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "grid" => Ok(StrategyKind::Grid),
            "random" => Ok(StrategyKind::Random),
            "nelder-mead" | "neldermead" => Ok(StrategyKind::NelderMead),
            "powell" => Ok(StrategyKind::Powell),
            "tpe" | "hyperopt" => Ok(StrategyKind::Tpe),
            other => Err(Error::invalid_argument(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Construction-time knobs shared by all strategies.
#[derive(Debug, Clone)]
pub struct StrategyOptions {
    pub seed: u64,
    /// Number of grid points (grid strategy only).
    pub grid_budget: usize,
    pub tpe: TpeSettings,
    /// Error reported for out-of-bounds derivative-free proposals.
    pub penalty: f64,
}

impl Default for StrategyOptions {
    fn default() -> Self {
        StrategyOptions {
            seed: 0,
            grid_budget: 16,
            tpe: TpeSettings::default(),
            penalty: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GridSearch {
    points: Vec<Configuration>,
    cursor: usize,
}

#[derive(Debug, Clone)]
pub struct RandomSearch {
    rng: ChaCha8Rng,
}

#[derive(Debug, Clone)]
pub enum Strategy {
    Grid(GridSearch),
    Random(RandomSearch),
    NelderMead(DerivativeFree),
    Powell(DerivativeFree),
    Tpe(Tpe),
}

impl Strategy {
    pub fn grid(space: &SearchSpace, budget: usize) -> Result<Self> {
        Ok(Strategy::Grid(GridSearch {
            points: grid_points(space, budget)?,
            cursor: 0,
        }))
    }

    pub fn random(seed: u64) -> Self {
        Strategy::Random(RandomSearch {
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn nelder_mead(space: &SearchSpace, seed: u64, penalty: f64) -> Result<Self> {
        Ok(Strategy::NelderMead(DerivativeFree::new(Method::NelderMead, space, seed, penalty)?))
    }

    pub fn powell(space: &SearchSpace, seed: u64, penalty: f64) -> Result<Self> {
        Ok(Strategy::Powell(DerivativeFree::new(Method::Powell, space, seed, penalty)?))
    }

    pub fn tpe(seed: u64, settings: TpeSettings) -> Result<Self> {
        Ok(Strategy::Tpe(Tpe::new(seed, settings)?))
    }

    pub fn build(kind: StrategyKind, space: &SearchSpace, opts: &StrategyOptions) -> Result<Self> {
        match kind {
            StrategyKind::Grid => Self::grid(space, opts.grid_budget),
            StrategyKind::Random => Ok(Self::random(opts.seed)),
            StrategyKind::NelderMead => Self::nelder_mead(space, opts.seed, opts.penalty),
            StrategyKind::Powell => Self::powell(space, opts.seed, opts.penalty),
            StrategyKind::Tpe => Self::tpe(opts.seed, opts.tpe.clone()),
        }
    }

    pub fn kind(&self) -> StrategyKind {
        match self {
            Strategy::Grid(_) => StrategyKind::Grid,
            Strategy::Random(_) => StrategyKind::Random,
            Strategy::NelderMead(_) => StrategyKind::NelderMead,
            Strategy::Powell(_) => StrategyKind::Powell,
            Strategy::Tpe(_) => StrategyKind::Tpe,
        }
    }

    /// Up to `free_slots` new configurations.
    ///
    /// An empty result means the strategy is exhausted or, for the sequential
    /// derivative-free methods, still waiting for its last proposal to reach
    /// a terminal status in `history`.
    pub fn propose(
        &mut self,
        free_slots: usize,
        space: &SearchSpace,
        history: &History,
    ) -> Result<Vec<Configuration>> {
        if free_slots == 0 {
            return Err(Error::invalid_argument("free_slots must be at least 1"));
        }
        if space.is_empty() {
            return Err(Error::InvalidSpace("space has no parameters".into()));
        }
        match self {
            Strategy::Grid(g) => {
                let end = (g.cursor + free_slots).min(g.points.len());
                let out = g.points[g.cursor..end].to_vec();
                g.cursor = end;
                Ok(out)
            }
            Strategy::Random(r) => Ok((0..free_slots).map(|_| sample_uniform(space, &mut r.rng)).collect()),
            Strategy::NelderMead(df) | Strategy::Powell(df) => Ok(df.propose(space, history)?.into_iter().collect()),
            Strategy::Tpe(t) => Ok((0..free_slots).map(|_| t.propose(space, history)).collect()),
        }
    }
}

/// Drives a strategy against a cheap objective, one evaluation at a time,
/// until `max_evals` evaluations or exhaustion. Each evaluation is recorded
/// as a finished one-iteration model.
pub fn run_objective<F>(
    strategy: &mut Strategy,
    space: &SearchSpace,
    max_evals: usize,
    mut objective: F,
) -> Result<History>
where
    F: FnMut(&Configuration) -> f64,
{
    let mut history = History::new();
    let mut next_id = 0;
    while next_id < max_evals {
        let proposals = strategy.propose(1, space, &history)?;
        if proposals.is_empty() {
            break;
        }
        for config in proposals {
            let value = objective(&config);
            history.push(HistoryRecord {
                model_id: next_id,
                config,
                iterations_used: 1,
                val_error: Some(value),
                status: Status::Finished,
            });
            next_id += 1;
        }
    }
    Ok(history)
}
