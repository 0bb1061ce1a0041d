//! Early termination of models that fall behind the incumbent.

use crate::error::{Error, Result};
use crate::search::{History, HistoryRecord, Status};
use crate::train::ModelState;

pub const DEFAULT_EPSILON: f64 = 0.5;

/// Form of the slack test deciding whether a model keeps training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SlackRule {
    /// `err(m) ≤ (1 + ε)·err(best)`.
    #[default]
    Error,
    /// `(1 − err(m))·(1 + ε) ≥ 1 − err(best)`.
    Quality,
}

impl SlackRule {
    fn keeps(self, err: f64, best: f64, epsilon: f64) -> bool {
        if epsilon.is_infinite() {
            return true;
        }
        match self {
            SlackRule::Error => err <= (1.0 + epsilon) * best,
            SlackRule::Quality => (1.0 - err) * (1.0 + epsilon) >= 1.0 - best,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AllocationDecision {
    pub finished: Vec<ModelState>,
    pub continued: Vec<ModelState>,
    pub killed: Vec<ModelState>,
}

impl AllocationDecision {
    pub fn len(&self) -> usize {
        self.finished.len() + self.continued.len() + self.killed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Sorts freshly trained models into finished, continued and killed, and
/// appends one history record per model.
///
/// The incumbent is the lowest validation error in `history` or in `models`.
/// Models at `max_iterations` finish whatever their error; the others keep
/// training only if they pass the slack test against the incumbent.
pub fn allocate(
    models: Vec<ModelState>,
    history: &mut History,
    epsilon: f64,
    max_iterations: usize,
    rule: SlackRule,
) -> Result<AllocationDecision> {
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::invalid_argument(format!("epsilon {epsilon} must be non-negative")));
    }
    let mut batch_best = f64::INFINITY;
    for m in &models {
        let err = m
            .val_error
            .ok_or_else(|| Error::InvalidState(format!("model {} has no validation error", m.id)))?;
        if m.iterations_used == 0 || m.iterations_used > max_iterations {
            return Err(Error::InvalidState(format!(
                "model {} has {} iterations, expected 1..={max_iterations}",
                m.id, m.iterations_used
            )));
        }
        batch_best = batch_best.min(err);
    }
    let best = history.best_error().map_or(batch_best, |h| h.min(batch_best));

    let mut decision = AllocationDecision::default();
    for m in models {
        let err = m.val_error.expect("checked above");
        let status = if m.iterations_used == max_iterations {
            Status::Finished
        } else if rule.keeps(err, best, epsilon) {
            Status::Running
        } else {
            Status::Killed
        };
        history.push(HistoryRecord {
            model_id: m.id,
            config: m.config.clone(),
            iterations_used: m.iterations_used,
            val_error: m.val_error,
            status,
        });
        match status {
            Status::Finished => decision.finished.push(m),
            Status::Running => decision.continued.push(m),
            Status::Killed => decision.killed.push(m),
        }
    }
    Ok(decision)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::Configuration;
    use proptest::prelude::*;

    fn model(id: usize, err: f64, iters: usize) -> ModelState {
        let config = Configuration {
            family: "logistic".into(),
            values: vec![("lr".into(), crate::space::Value::Real(0.1))],
        };
        let mut m = ModelState::new(id, config, 2).unwrap();
        m.iterations_used = iters;
        m.val_error = Some(err);
        m
    }

    fn incumbent(err: f64) -> History {
        let mut h = History::new();
        allocate(vec![model(99, err, 10)], &mut h, 0.5, 100, SlackRule::Error).unwrap();
        h
    }

    fn ids(ms: &[ModelState]) -> Vec<usize> {
        ms.iter().map(|m| m.id).collect()
    }

    #[test]
    fn within_slack_continues() {
        let mut h = incumbent(0.10);
        let d = allocate(vec![model(0, 0.14, 10)], &mut h, 0.5, 100, SlackRule::Error).unwrap();
        assert_eq!(ids(&d.continued), [0]);
    }

    #[test]
    fn outside_slack_is_killed() {
        let mut h = incumbent(0.10);
        let d = allocate(vec![model(0, 0.16, 10)], &mut h, 0.5, 100, SlackRule::Error).unwrap();
        assert_eq!(ids(&d.killed), [0]);
        assert_eq!(h.latest(0).unwrap().status, Status::Killed);
    }

    #[test]
    fn fully_trained_finishes_regardless_of_error() {
        let mut h = incumbent(0.10);
        let d = allocate(vec![model(0, 0.9, 100)], &mut h, 0.0, 100, SlackRule::Error).unwrap();
        assert_eq!(ids(&d.finished), [0]);
    }

    #[test]
    fn incumbent_includes_current_batch() {
        let mut h = incumbent(0.30);
        let d = allocate(vec![model(0, 0.40, 10), model(1, 0.10, 10)], &mut h, 0.5, 100, SlackRule::Error).unwrap();
        assert_eq!(ids(&d.killed), [0]);
        assert_eq!(ids(&d.continued), [1]);
        assert_eq!(h.len(), 3);
    }

    #[test]
    fn infinite_epsilon_with_zero_error_incumbent() {
        let mut h = incumbent(0.0);
        let d = allocate(vec![model(0, 0.5, 10)], &mut h, f64::INFINITY, 100, SlackRule::Error).unwrap();
        assert_eq!(ids(&d.continued), [0]);
        let d = allocate(vec![model(1, 1.0, 10)], &mut h, f64::INFINITY, 100, SlackRule::Quality).unwrap();
        assert_eq!(ids(&d.continued), [1]);
    }

    #[test]
    fn quality_form() {
        // quality 0.8·1.5 = 1.2 ≥ 0.9 keeps; error form would kill 0.2 > 0.15.
        let mut h = incumbent(0.10);
        let d = allocate(vec![model(0, 0.2, 10)], &mut h, 0.5, 100, SlackRule::Quality).unwrap();
        assert_eq!(ids(&d.continued), [0]);
        let d = allocate(vec![model(1, 0.5, 10)], &mut h, 0.1, 100, SlackRule::Quality).unwrap();
        assert_eq!(ids(&d.killed), [1]);
    }

    #[test]
    fn invalid_inputs() {
        let mut h = History::new();
        assert!(matches!(
            allocate(vec![model(0, 0.1, 10)], &mut h, -0.1, 100, SlackRule::Error),
            Err(Error::InvalidArgument(_))
        ));
        let mut m = model(0, 0.1, 10);
        m.val_error = None;
        assert!(matches!(
            allocate(vec![m], &mut h, 0.5, 100, SlackRule::Error),
            Err(Error::InvalidState(_))
        ));
        assert!(h.is_empty());
    }

    fn batch() -> impl Strategy<Value = Vec<(f64, bool)>> {
        prop::collection::vec((0.0..=1.0f64, prop::bool::weighted(0.2)), 1..20)
    }

    fn build(specs: &[(f64, bool)]) -> Vec<ModelState> {
        specs
            .iter()
            .enumerate()
            .map(|(i, &(e, done))| model(i, e, if done { 100 } else { 10 }))
            .collect()
    }

    proptest! {
        #[test]
        fn decisions_partition_the_input(specs in batch(), eps in 0.0..3.0f64, inc in 0.0..=1.0f64) {
            let mut h = incumbent(inc);
            let d = allocate(build(&specs), &mut h, eps, 100, SlackRule::Error).unwrap();
            prop_assert_eq!(d.len(), specs.len());
            let mut all: Vec<usize> = [ids(&d.finished), ids(&d.continued), ids(&d.killed)].concat();
            all.sort();
            prop_assert_eq!(all, (0..specs.len()).collect::<Vec<_>>());
            prop_assert!(d.finished.iter().all(|m| m.iterations_used == 100));
            prop_assert_eq!(h.len(), specs.len() + 1);
        }

        #[test]
        fn better_incumbent_never_revives(specs in batch(), eps in 0.0..3.0f64, a in 0.0..=1.0f64, b in 0.0..=1.0f64) {
            let (worse, better) = if a >= b { (a, b) } else { (b, a) };
            let d_worse = allocate(build(&specs), &mut incumbent(worse), eps, 100, SlackRule::Error).unwrap();
            let d_better = allocate(build(&specs), &mut incumbent(better), eps, 100, SlackRule::Error).unwrap();
            for id in ids(&d_worse.killed) {
                prop_assert!(ids(&d_better.killed).contains(&id));
            }
        }

        #[test]
        fn infinite_epsilon_kills_nothing(specs in batch(), inc in 0.0..=1.0f64) {
            for rule in [SlackRule::Error, SlackRule::Quality] {
                let d = allocate(build(&specs), &mut incumbent(inc), f64::INFINITY, 100, rule).unwrap();
                prop_assert!(d.killed.is_empty());
            }
        }

        #[test]
        fn zero_epsilon_keeps_only_incumbent_matches(specs in batch(), inc in 0.0..=1.0f64) {
            let best = specs.iter().map(|s| s.0).fold(inc, f64::min);
            let d = allocate(build(&specs), &mut incumbent(inc), 0.0, 100, SlackRule::Error).unwrap();
            prop_assert!(d.continued.iter().all(|m| m.val_error.unwrap() <= best));
        }

        #[test]
        fn batch_minimum_is_never_killed(specs in batch(), eps in 0.0..3.0f64, inc in 0.0..=1.0f64) {
            for rule in [SlackRule::Error, SlackRule::Quality] {
                let models = build(&specs);
                let min = models.iter().map(|m| m.val_error.unwrap()).fold(f64::INFINITY, f64::min);
                let d = allocate(models, &mut incumbent(inc), eps, 100, rule).unwrap();
                if min <= inc {
                    prop_assert!(d.killed.iter().all(|m| m.val_error.unwrap() != min));
                }
            }
        }
    }
}
