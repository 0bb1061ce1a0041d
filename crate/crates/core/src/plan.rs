//! Planners: sequential grid search, and the batched loop that combines a
//! search strategy with shared scans and bandit pruning.
//!
//! Budgets are counted in model-iterations, one full pass over the training
//! split by one model.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::bandit::{allocate, SlackRule, DEFAULT_EPSILON};
use crate::data::{downsample, DataSplit, Dataset};
use crate::error::{Error, Result};
use crate::search::{History, Status, Strategy, StrategyKind, StrategyOptions};
use crate::space::{grid_points, Configuration, SearchSpace};
use crate::train::{evaluate, random_features, train_partial, FeatureMap, FeatureSpec, ModelBatch, ModelState, TrainMode};

pub const DEFAULT_PARTIAL_ITERS: usize = 10;
pub const DEFAULT_MAX_ITERATIONS: usize = 100;
pub const DEFAULT_BATCH_SIZE: usize = 10;
/// Fewest training rows kept when expanded features shrink the training set.
pub const MIN_EXPANDED_ROWS: usize = 1000;

/// Remaining training allowance in model-iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    remaining: usize,
}

impl Budget {
    pub fn new(model_iterations: usize) -> Self {
        Budget {
            remaining: model_iterations,
        }
    }

    /// A budget of `models` models trained to `max_iterations` each.
    pub fn from_models(models: usize, max_iterations: usize) -> Self {
        Budget::new(models * max_iterations)
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    pub fn is_spent(&self) -> bool {
        self.remaining == 0
    }

    fn consume(&mut self, amount: usize) {
        debug_assert!(amount <= self.remaining);
        self.remaining -= amount;
    }
}

#[derive(Debug, Clone)]
pub struct PlanOptions {
    pub partial_iters: usize,
    pub batch_size: usize,
    pub strategy: StrategyKind,
    /// `f64::INFINITY` turns pruning off.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Train compatible active models in one shared scan.
    pub batching: bool,
    pub seed: u64,
    pub search: StrategyOptions,
    pub slack_rule: SlackRule,
    pub train_mode: TrainMode,
    /// Simulated per-task scheduling delay, charged once per training task.
    pub sched_delay: Duration,
    /// Stop proposing after this many configurations.
    pub max_models: Option<usize>,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            partial_iters: DEFAULT_PARTIAL_ITERS,
            batch_size: DEFAULT_BATCH_SIZE,
            strategy: StrategyKind::Random,
            epsilon: DEFAULT_EPSILON,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            batching: true,
            seed: 0,
            search: StrategyOptions::default(),
            slack_rule: SlackRule::Error,
            train_mode: TrainMode::FullBatch,
            sched_delay: Duration::ZERO,
            max_models: None,
        }
    }
}

impl PlanOptions {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid_argument("batch size must be at least 1"));
        }
        if self.partial_iters == 0 || self.max_iterations == 0 {
            return Err(Error::invalid_argument("iteration counts must be at least 1"));
        }
        if self.max_iterations % self.partial_iters != 0 {
            return Err(Error::invalid_argument(format!(
                "partial iterations {} must divide max iterations {}",
                self.partial_iters, self.max_iterations
            )));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::invalid_argument(format!("epsilon {} must be non-negative", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PlanResult {
    pub best: ModelState,
    /// No model reached max iterations; `best` is the best partial model.
    pub best_is_partial: bool,
    pub history: History,
    /// Elapsed time since planning started, one per history record.
    pub timestamps: Vec<Duration>,
    /// Model-iterations spent.
    pub scans_used: usize,
    /// Passes over training data counted by the datasets themselves.
    pub data_passes: u64,
    /// Training tasks dispatched.
    pub tasks: usize,
    pub wall_time: Duration,
    /// Scheduling delay charged to the tasks, not slept.
    pub simulated_overhead: Duration,
}

impl PlanResult {
    pub fn models_trained(&self) -> usize {
        self.history.records().iter().map(|r| r.model_id).max().map_or(0, |m| m + 1)
    }

    pub fn models_finished(&self) -> usize {
        self.history.records().iter().filter(|r| r.status == Status::Finished).count()
    }

    pub fn total_time(&self) -> Duration {
        self.wall_time + self.simulated_overhead
    }
}

type SplitPair = Arc<(Dataset, Dataset)>;
type FeatureKey = (usize, crate::train::Projection, u64, u64);

/// Training and validation data per feature map, built on first use.
struct FeatureCache<'a> {
    split: &'a DataSplit,
    seed: u64,
    expanded: HashMap<FeatureKey, SplitPair>,
    /// Scan count of the shared training split when planning started.
    base_passes: u64,
    /// Passes over expanded data that has since been dropped.
    dropped_passes: u64,
}

impl<'a> FeatureCache<'a> {
    fn new(split: &'a DataSplit, seed: u64) -> Self {
        FeatureCache {
            split,
            seed,
            expanded: HashMap::new(),
            base_passes: split.train.scan_count(),
            dropped_passes: 0,
        }
    }

    fn input_dim(&self) -> usize {
        self.split.train.n_features()
    }

    fn dim(&self, config: &Configuration) -> Result<usize> {
        Ok(match FeatureSpec::from_config(config, self.input_dim())? {
            Some(spec) => spec.output_dim,
            None => self.input_dim(),
        })
    }

    /// `None` for the raw features.
    fn key(&self, config: &Configuration) -> Result<Option<FeatureKey>> {
        Ok(FeatureSpec::from_config(config, self.input_dim())?.map(|s| s.key()))
    }

    fn data(&mut self, config: &Configuration) -> Result<(&Dataset, &Dataset)> {
        let d_in = self.input_dim();
        let Some(spec) = FeatureSpec::from_config(config, d_in)? else {
            return Ok((&self.split.train, &self.split.validation));
        };
        if !self.expanded.contains_key(&spec.key()) {
            let map = FeatureMap::random_cosine(spec, d_in, self.seed)?;
            let base = self.split.train.n_rows();
            let rows = ((base as f64 * d_in as f64 / spec.output_dim as f64).round() as usize)
                .max(MIN_EXPANDED_ROWS)
                .min(base);
            let train = if rows < base {
                downsample(&self.split.train, rows as f64 / base as f64, self.seed)?
            } else {
                self.split.train.clone()
            };
            let partitions = self.split.train.partitions().len();
            let train = train
                .with_features(random_features(train.features(), &map)?)?
                .with_partitions(partitions.min(rows.max(1)))?;
            let validation = self
                .split
                .validation
                .with_features(random_features(self.split.validation.features(), &map)?)?;
            self.expanded.insert(spec.key(), Arc::new((train, validation)));
        }
        let pair = &self.expanded[&spec.key()];
        Ok((&pair.0, &pair.1))
    }

    /// Drops expanded data no active model uses.
    fn retain(&mut self, active: &[ModelState]) -> Result<()> {
        let live = active
            .iter()
            .map(|m| self.key(&m.config))
            .collect::<Result<Vec<_>>>()?;
        let mut dropped = 0;
        self.expanded.retain(|k, pair| {
            let keep = live.contains(&Some(*k));
            if !keep {
                dropped += pair.0.scan_count();
            }
            keep
        });
        self.dropped_passes += dropped;
        Ok(())
    }

    fn data_passes(&self) -> u64 {
        self.dropped_passes + self.split.train.scan_count() - self.base_passes + self.expanded.values().map(|p| p.0.scan_count()).sum::<u64>()
    }
}

/// Tracks the best finished and best partial model seen so far.
#[derive(Default)]
struct Incumbents {
    finished: Option<ModelState>,
    partial: Option<ModelState>,
}

impl Incumbents {
    fn offer(slot: &mut Option<ModelState>, m: &ModelState) {
        if slot.as_ref().is_none_or(|b| m.val_error < b.val_error) {
            *slot = Some(m.clone());
        }
    }

    fn into_best(self) -> Result<(ModelState, bool)> {
        match (self.finished, self.partial) {
            (Some(m), _) => Ok((m, false)),
            (None, Some(m)) => Ok((m, true)),
            (None, None) => Err(Error::invalid_argument("the budget did not allow training any model")),
        }
    }
}

/// Trains each grid point of `budget_models` to `max_iterations`, one model
/// at a time.
pub fn baseline_plan(
    split: &DataSplit,
    space: &SearchSpace,
    budget_models: usize,
    max_iterations: usize,
    seed: u64,
) -> Result<PlanResult> {
    if budget_models == 0 || max_iterations == 0 {
        return Err(Error::invalid_argument("budget and iteration count must be at least 1"));
    }
    let start = Instant::now();
    let points = grid_points(space, budget_models)?;
    let mut cache = FeatureCache::new(split, seed);
    let mut history = History::new();
    let mut timestamps = Vec::new();
    let mut best = Incumbents::default();
    for (id, config) in points.iter().enumerate() {
        let model = ModelState::new(id, config.clone(), cache.dim(config)?)?;
        let (train, validation) = cache.data(config)?;
        let trained = train_partial(ModelBatch::new(vec![model])?, train, validation, max_iterations, TrainMode::FullBatch)?;
        let decision = allocate(trained.into_members(), &mut history, f64::INFINITY, max_iterations, SlackRule::Error)?;
        timestamps.push(start.elapsed());
        for m in &decision.finished {
            Incumbents::offer(&mut best.finished, m);
        }
        cache.retain(&[])?;
    }
    let (best, best_is_partial) = best.into_best()?;
    Ok(PlanResult {
        best,
        best_is_partial,
        history,
        timestamps,
        scans_used: points.len() * max_iterations,
        data_passes: cache.data_passes(),
        tasks: points.len() * max_iterations,
        wall_time: start.elapsed(),
        simulated_overhead: Duration::ZERO,
    })
}

/// The batched planning loop.
///
/// Each round fills free slots with proposals, trains every active model for
/// `partial_iters` iterations, charges the budget, and lets the bandit decide
/// which models finish, continue or stop. Continued models keep their slots.
/// When the budget cannot cover a full round, one truncated round of
/// `remaining / active` iterations runs and planning stops; if that is zero,
/// only the first `remaining` active models get one iteration.
pub fn tupaq_plan(split: &DataSplit, space: &SearchSpace, budget: Budget, opts: &PlanOptions) -> Result<PlanResult> {
    opts.validate()?;
    if budget.is_spent() {
        return Err(Error::invalid_argument("budget must be at least one model-iteration"));
    }
    let start = Instant::now();
    let mut budget = budget;
    let initial = budget.remaining();
    let search_opts = StrategyOptions {
        seed: opts.seed,
        grid_budget: opts.max_models.unwrap_or(initial / opts.max_iterations).max(1),
        ..opts.search.clone()
    };
    let mut strategy = Strategy::build(opts.strategy, space, &search_opts)?;
    let mut cache = FeatureCache::new(split, opts.seed);
    let mut history = History::new();
    let mut timestamps = Vec::new();
    let mut best = Incumbents::default();
    let mut active: Vec<ModelState> = Vec::new();
    let mut next_id = 0;
    let mut exhausted = false;
    let mut tasks = 0;

    while !budget.is_spent() {
        let free = opts.batch_size - active.len();
        let free = free.min(opts.max_models.map_or(usize::MAX, |m| m - next_id));
        if free > 0 && !exhausted {
            let proposals = strategy.propose(free, space, &history)?;
            if proposals.is_empty() && active.is_empty() {
                exhausted = true;
            }
            for config in proposals {
                active.push(ModelState::new(next_id, config.clone(), cache.dim(&config)?)?);
                next_id += 1;
            }
        }
        if active.is_empty() {
            break;
        }

        let mut step = opts.partial_iters;
        let full_round = active.len() * step;
        let truncated = full_round > budget.remaining();
        if truncated {
            step = budget.remaining() / active.len();
            if step == 0 {
                active.truncate(budget.remaining());
                step = 1;
            }
        }

        let mut trained = Vec::with_capacity(active.len());
        for group in groups(&active, &cache, opts.batching)? {
            let members: Vec<ModelState> = group.iter().map(|&i| active[i].clone()).collect();
            let (train, validation) = cache.data(&members[0].config)?;
            let batch = train_partial(ModelBatch::new(members)?, train, validation, step, opts.train_mode)?;
            tasks += step;
            trained.extend(group.into_iter().zip(batch.into_members()));
        }
        trained.sort_by_key(|(i, _)| *i);
        let trained: Vec<ModelState> = trained.into_iter().map(|(_, m)| m).collect();
        budget.consume(trained.len() * step);

        let decision = allocate(trained, &mut history, opts.epsilon, opts.max_iterations, opts.slack_rule)?;
        timestamps.resize(history.len(), start.elapsed());
        for m in decision.finished.iter() {
            Incumbents::offer(&mut best.finished, m);
        }
        for m in decision.finished.iter().chain(&decision.continued).chain(&decision.killed) {
            Incumbents::offer(&mut best.partial, m);
        }
        active = decision.continued;
        cache.retain(&active)?;
        if truncated {
            break;
        }
    }

    let (best, best_is_partial) = best.into_best()?;
    let scans_used = initial - budget.remaining();
    Ok(PlanResult {
        best,
        best_is_partial,
        history,
        timestamps,
        scans_used,
        data_passes: cache.data_passes(),
        tasks,
        wall_time: start.elapsed(),
        simulated_overhead: opts.sched_delay * tasks as u32,
    })
}

/// Indices of `active` grouped into training tasks, in first-member order.
fn groups(active: &[ModelState], cache: &FeatureCache<'_>, batching: bool) -> Result<Vec<Vec<usize>>> {
    if !batching {
        return Ok((0..active.len()).map(|i| vec![i]).collect());
    }
    let mut out: Vec<(_, Vec<usize>)> = Vec::new();
    for (i, m) in active.iter().enumerate() {
        let key = (m.family, cache.key(&m.config)?);
        match out.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(i),
            None => out.push((key, vec![i])),
        }
    }
    Ok(out.into_iter().map(|(_, g)| g).collect())
}

/// Error of `model` on the test split, rebuilding its feature map from the
/// planner seed.
pub fn test_error(split: &DataSplit, model: &ModelState, seed: u64) -> Result<f64> {
    let d_in = split.test.n_features();
    match FeatureSpec::from_config(&model.config, d_in)? {
        None => evaluate(model, &split.test),
        Some(spec) => {
            let map = FeatureMap::random_cosine(spec, d_in, seed)?;
            evaluate(model, &split.test.with_features(random_features(split.test.features(), &map)?)?)
        }
    }
}

/// Delimiter-separated results: a header, one row per history record, and a
/// summary row. The `elapsed_ms` column is the only timing field.
pub fn results_table(result: &PlanResult) -> String {
    let mut out = String::from("model_id\tconfig\titerations\tval_error\tstatus\tcumulative_scans\telapsed_ms\n");
    let mut seen: HashMap<usize, usize> = HashMap::new();
    let mut cumulative = 0;
    for (r, t) in result.history.records().iter().zip(&result.timestamps) {
        let before = seen.insert(r.model_id, r.iterations_used).unwrap_or(0);
        cumulative += r.iterations_used - before;
        let err = r.val_error.map_or_else(|| "-".to_string(), |e| format!("{e:.6}"));
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.model_id,
            r.config,
            r.iterations_used,
            err,
            r.status,
            cumulative,
            t.as_millis()
        );
    }
    let _ = writeln!(
        out,
        "summary\t{}\t{}\t{:.6}\t{}\t{}\t{}",
        result.best.config,
        result.best.iterations_used,
        result.best.val_error.unwrap_or(f64::NAN),
        if result.best_is_partial { "partial" } else { "best" },
        result.scans_used,
        result.total_time().as_millis()
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{standard_split, synth};
    use crate::space::ParamSpec;

    fn data(seed: u64) -> DataSplit {
        standard_split(&synth(600, 6, seed, 0.1).unwrap(), seed).unwrap()
    }

    fn space() -> SearchSpace {
        SearchSpace::new(vec![
            ParamSpec::log10("lr", 1e-4, 1e-1).unwrap(),
            ParamSpec::log10("reg", 1e-4, 1e1).unwrap(),
        ])
        .unwrap()
    }

    fn summed_iterations(h: &History) -> usize {
        let mut latest: HashMap<usize, usize> = HashMap::new();
        for r in h.records() {
            latest.insert(r.model_id, r.iterations_used);
        }
        latest.values().sum()
    }

    #[test]
    fn baseline_trains_the_grid() {
        let four = SearchSpace::new(vec![
            ParamSpec::log10("lr", 1e-4, 1e-1).unwrap(),
            ParamSpec::log10("reg", 1e-4, 1e1).unwrap(),
            ParamSpec::linear("a", 0.0, 1.0).unwrap(),
            ParamSpec::linear("b", 0.0, 1.0).unwrap(),
        ])
        .unwrap();
        let r = baseline_plan(&data(0), &four, 16, 20, 0).unwrap();
        assert_eq!(r.history.len(), 16);
        assert_eq!(r.scans_used, 320);
        assert!(!r.best_is_partial);
        let best = r.history.best().unwrap();
        assert_eq!(r.best.id, best.model_id);
    }

    #[test]
    fn baseline_with_one_model_trains_the_corner() {
        let r = baseline_plan(&data(0), &space(), 1, 10, 0).unwrap();
        assert_eq!(r.history.len(), 1);
        assert_eq!(r.best.config.real("lr"), Some(1e-4));
        assert_eq!(r.best.config.real("reg"), Some(1e-4));
    }

    #[test]
    fn baseline_ties_go_to_the_earliest_point() {
        // A learning rate so small every model predicts the same classes.
        let flat = SearchSpace::new(vec![
            ParamSpec::log10("lr", 1e-12, 1e-11).unwrap(),
            ParamSpec::linear("reg", 0.0, 1.0).unwrap(),
        ])
        .unwrap();
        let r = baseline_plan(&data(1), &flat, 9, 1, 0).unwrap();
        let errs: Vec<_> = r.history.records().iter().map(|r| r.val_error).collect();
        assert!(errs.windows(2).all(|w| w[0] == w[1]), "{errs:?}");
        assert_eq!(r.best.id, 0);
    }

    #[test]
    fn one_round_of_ten_models_costs_one_hundred() {
        let opts = PlanOptions {
            epsilon: f64::INFINITY,
            ..Default::default()
        };
        let r = tupaq_plan(&data(2), &space(), Budget::new(100), &opts).unwrap();
        assert_eq!(r.scans_used, 100);
        assert_eq!(r.history.len(), 10);
        assert_eq!(r.data_passes, 10, "ten models share each pass");
        assert!(r.best_is_partial);
    }

    #[test]
    fn reduces_to_the_baseline() {
        for seed in 0..3 {
            let split = data(seed);
            let base = baseline_plan(&split, &space(), 9, 20, seed).unwrap();
            let opts = PlanOptions {
                partial_iters: 20,
                max_iterations: 20,
                batch_size: 1,
                epsilon: f64::INFINITY,
                strategy: StrategyKind::Grid,
                seed,
                ..Default::default()
            };
            let r = tupaq_plan(&split, &space(), Budget::from_models(9, 20), &opts).unwrap();
            assert_eq!(r.best.config, base.best.config);
            assert_eq!(r.best.weights, base.best.weights);
        }
    }

    #[test]
    fn budget_is_conserved_and_slots_respected() {
        for (budget, batch) in [(1000, 10), (735, 7), (95, 10), (3, 10)] {
            let opts = PlanOptions {
                batch_size: batch,
                ..Default::default()
            };
            let r = tupaq_plan(&data(3), &space(), Budget::new(budget), &opts).unwrap();
            assert_eq!(summed_iterations(&r.history), r.scans_used);
            assert!(r.scans_used <= budget && budget - r.scans_used < batch, "{budget}: {}", r.scans_used);
            let mut running = std::collections::HashSet::new();
            for rec in r.history.records() {
                if rec.status == Status::Running {
                    running.insert(rec.model_id);
                } else {
                    running.remove(&rec.model_id);
                }
                assert!(running.len() <= batch);
            }
        }
    }

    #[test]
    fn bandits_cut_scans() {
        let split = standard_split(&synth(2000, 10, 4, 0.1).unwrap(), 4).unwrap();
        let wide = SearchSpace::new(vec![
            ParamSpec::log10("lr", 1e-6, 1e0).unwrap(),
            ParamSpec::log10("reg", 1e-4, 1e3).unwrap(),
        ])
        .unwrap();
        let run = |epsilon| {
            let opts = PlanOptions {
                epsilon,
                ..Default::default()
            };
            tupaq_plan(&split, &wide, Budget::from_models(60, 100), &opts).unwrap()
        };
        let (off, on) = (run(f64::INFINITY), run(0.5));
        assert!(on.models_trained() > off.models_trained());
        assert_eq!(off.models_trained(), 60);
        assert!(on.best.val_error <= Some(off.best.val_error.unwrap() + 0.02));
    }

    #[test]
    fn unbatched_runs_match_batched_weights() {
        let split = data(5);
        let opts = PlanOptions {
            epsilon: f64::INFINITY,
            ..Default::default()
        };
        let batched = tupaq_plan(&split, &space(), Budget::new(500), &opts).unwrap();
        let single = tupaq_plan(&split, &space(), Budget::new(500), &PlanOptions { batching: false, ..opts }).unwrap();
        assert_eq!(batched.best.config, single.best.config);
        let diff = (&batched.best.weights - &single.best.weights).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(diff <= 1e-10);
        assert_eq!(batched.data_passes, 50);
        assert_eq!(single.data_passes, 500);
        assert_eq!(batched.tasks, 50);
        assert_eq!(single.tasks, 500);
    }

    #[test]
    fn results_are_reproducible() {
        let split = data(6);
        let opts = PlanOptions {
            strategy: StrategyKind::Tpe,
            seed: 7,
            ..Default::default()
        };
        let a = tupaq_plan(&split, &space(), Budget::new(2000), &opts).unwrap();
        let b = tupaq_plan(&split, &space(), Budget::new(2000), &opts).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.best.weights, b.best.weights);
    }

    #[test]
    fn random_features_expand_and_cache() {
        let split = data(7);
        let s = SearchSpace::new(vec![
            ParamSpec::log10("lr", 1e-3, 1e-1).unwrap(),
            ParamSpec::categorical("distribution", ["gaussian", "cauchy"]).unwrap(),
            ParamSpec::linear("projection", 2.0, 2.01).unwrap(),
        ])
        .unwrap();
        let opts = PlanOptions {
            epsilon: f64::INFINITY,
            ..Default::default()
        };
        let r = tupaq_plan(&split, &s, Budget::new(200), &opts).unwrap();
        assert_eq!(r.best.weights.len(), 12);
        // Two distributions, two cached expansions, each read once per
        // iteration of its group.
        assert_eq!(r.data_passes, 40);
    }

    #[test]
    fn model_cap_limits_proposals() {
        let opts = PlanOptions {
            max_models: Some(25),
            epsilon: f64::INFINITY,
            ..Default::default()
        };
        let r = tupaq_plan(&data(8), &space(), Budget::from_models(40, 100), &opts).unwrap();
        assert_eq!(r.models_trained(), 25);
        assert_eq!(r.models_finished(), 25);
        assert_eq!(r.scans_used, 2500);
    }

    #[test]
    fn invalid_options() {
        let split = data(0);
        let bad = [
            PlanOptions { batch_size: 0, ..Default::default() },
            PlanOptions { partial_iters: 3, ..Default::default() },
            PlanOptions { epsilon: -1.0, ..Default::default() },
        ];
        for opts in bad {
            assert!(tupaq_plan(&split, &space(), Budget::new(100), &opts).is_err());
        }
        assert!(tupaq_plan(&split, &space(), Budget::new(0), &PlanOptions::default()).is_err());
    }

    #[test]
    fn results_table_shape() {
        let r = tupaq_plan(&data(0), &space(), Budget::new(300), &PlanOptions::default()).unwrap();
        let table = results_table(&r);
        let lines: Vec<_> = table.lines().collect();
        assert_eq!(lines.len(), r.history.len() + 2);
        assert!(lines.iter().all(|l| l.split('\t').count() == 7));
        let last_row: Vec<_> = lines[lines.len() - 2].split('\t').collect();
        assert_eq!(last_row[5], "300");
    }
}
