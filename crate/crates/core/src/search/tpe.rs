//! Tree-structured Parzen estimator.
//!
//! Observations are split at the `γ` quantile of validation error into a good
//! set and a bad set. Each set gets an independent density per parameter:
//! a Gaussian kernel mixture over normalized scaled coordinates for
//! continuous parameters, smoothed frequencies for categorical ones. Draws
//! from the good densities are ranked by `l(x) / g(x)` and the best is
//! proposed. The family choice is treated as one more categorical parameter
//! and conditional parameters only see observations from their own family.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::space::{sample_uniform, Configuration, ParamKind, ParamSpec, SearchSpace, Value};

use super::{History, HistoryRecord};

/// Bandwidth used when a set holds a single point.
const SINGLE_POINT_BANDWIDTH: f64 = 0.25;
/// The bandwidth never drops below `1 / min(n + 1, MAX_SHRINK)`, which keeps
/// repeated good points from collapsing the kernel onto one value.
const MAX_SHRINK: usize = 100;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TpeSettings {
    /// Fraction of observations in the good set.
    pub gamma: f64,
    /// Observations drawn uniformly before the model is used.
    pub n_startup: usize,
    /// Candidates scored per proposal.
    pub n_candidates: usize,
}

impl Default for TpeSettings {
    fn default() -> Self {
        TpeSettings {
            gamma: 0.25,
            n_startup: 20,
            n_candidates: 24,
        }
    }
}

impl TpeSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::invalid_argument(format!("tpe gamma {} must be in (0, 1)", self.gamma)));
        }
        if self.n_candidates == 0 {
            return Err(Error::invalid_argument("tpe n_candidates must be at least 1"));
        }
        Ok(())
    }

    /// Reads the optional `[tpe]` table of a space file.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Wrapper {
            #[serde(default)]
            tpe: Option<TpeSettings>,
        }
        let w: Wrapper = toml::from_str::<toml::Table>(text)
            .and_then(|t| {
                let tpe = t.get("tpe").cloned();
                let mut only = toml::Table::new();
                if let Some(tpe) = tpe {
                    only.insert("tpe".into(), tpe);
                }
                only.try_into()
            })
            .map_err(|e| Error::invalid_argument(format!("invalid [tpe] table: {e}")))?;
        let settings = w.tpe.unwrap_or_default();
        settings.validate()?;
        Ok(settings)
    }
}

#[derive(Debug, Clone)]
pub struct Tpe {
    settings: TpeSettings,
    rng: ChaCha8Rng,
}

/// Per-parameter density over one observation set.
enum Density {
    Kernel { centers: Vec<f64>, bandwidth: f64 },
    Frequency { probs: Vec<f64> },
}

impl Density {
    fn continuous(points: Vec<f64>) -> Self {
        let n = points.len();
        let bandwidth = match n {
            0 => 1.0,
            1 => SINGLE_POINT_BANDWIDTH,
            _ => {
                let mean = points.iter().sum::<f64>() / n as f64;
                let var = points.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
                (1.06 * var.sqrt() * (n as f64).powf(-0.2)).max(1.0 / (n + 1).min(MAX_SHRINK) as f64)
            }
        };
        Density::Kernel {
            centers: points,
            bandwidth,
        }
    }

    fn categorical(choices: &[String], labels: &[&str]) -> Self {
        let k = choices.len();
        let n = labels.len();
        let probs = choices
            .iter()
            .map(|c| (labels.iter().filter(|l| **l == c.as_str()).count() as f64 + 1.0) / (n + k) as f64)
            .collect();
        Density::Frequency { probs }
    }

    /// Component weights are `1/(n+1)` each for the kernels and the uniform
    /// prior.
    fn pdf(&self, x: f64) -> f64 {
        match self {
            Density::Kernel { centers, bandwidth } => {
                let w = 1.0 / (centers.len() + 1) as f64;
                let norm = 1.0 / (bandwidth * (2.0 * PI).sqrt());
                let kernels: f64 = centers
                    .iter()
                    .map(|c| norm * (-0.5 * ((x - c) / bandwidth).powi(2)).exp())
                    .sum();
                w * (1.0 + kernels)
            }
            Density::Frequency { .. } => unreachable!("pdf of a categorical density"),
        }
    }

    fn pmf(&self, index: usize) -> f64 {
        match self {
            Density::Frequency { probs } => probs[index],
            Density::Kernel { .. } => unreachable!("pmf of a continuous density"),
        }
    }

    fn sample_continuous(&self, rng: &mut ChaCha8Rng) -> f64 {
        let Density::Kernel { centers, bandwidth } = self else {
            unreachable!("continuous sample from a categorical density")
        };
        let pick = rng.random_range(0..=centers.len());
        if pick == centers.len() {
            return rng.random::<f64>();
        }
        let z: f64 = rng.sample(StandardNormal);
        (centers[pick] + bandwidth * z).clamp(0.0, 1.0)
    }

    fn sample_index(&self, rng: &mut ChaCha8Rng) -> usize {
        let Density::Frequency { probs } = self else {
            unreachable!("categorical sample from a continuous density")
        };
        let mut u = rng.random::<f64>();
        for (i, p) in probs.iter().enumerate() {
            if u < *p {
                return i;
            }
            u -= p;
        }
        probs.len() - 1
    }
}

fn normalized(p: &ParamSpec, value: f64) -> f64 {
    let ParamKind::Continuous { scale, .. } = p.kind else {
        unreachable!("normalized coordinate of a categorical parameter")
    };
    let (lo, hi) = p.scaled_bounds().expect("continuous");
    if hi == lo {
        return 0.5;
    }
    ((scale.to_scaled(value) - lo) / (hi - lo)).clamp(0.0, 1.0)
}

fn from_normalized(p: &ParamSpec, u: f64) -> f64 {
    let (lo, hi) = p.scaled_bounds().expect("continuous");
    p.value_from_scaled(lo + u * (hi - lo)).expect("continuous")
}

/// Good and bad densities for one parameter.
fn densities(p: &ParamSpec, good: &[&HistoryRecord], bad: &[&HistoryRecord]) -> (Density, Density) {
    let build = |set: &[&HistoryRecord]| match &p.kind {
        ParamKind::Continuous { .. } => {
            Density::continuous(set.iter().filter_map(|r| r.config.real(&p.name)).map(|v| normalized(p, v)).collect())
        }
        ParamKind::Categorical { choices } => {
            let labels: Vec<&str> = set.iter().filter_map(|r| r.config.label(&p.name)).collect();
            Density::categorical(choices, &labels)
        }
    };
    (build(good), build(bad))
}

fn family_labels<'a>(set: &[&'a HistoryRecord]) -> Vec<&'a str> {
    set.iter().map(|r| r.config.family.as_str()).collect()
}

fn in_family<'a>(set: &[&'a HistoryRecord], family: &str) -> Vec<&'a HistoryRecord> {
    set.iter().copied().filter(|r| r.config.family == family).collect()
}

impl Tpe {
    pub fn new(seed: u64, settings: TpeSettings) -> Result<Self> {
        settings.validate()?;
        Ok(Tpe {
            settings,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn settings(&self) -> &TpeSettings {
        &self.settings
    }

    pub fn propose(&mut self, space: &SearchSpace, history: &History) -> Configuration {
        let mut obs = history.observations();
        let n = obs.len();
        if n < self.settings.n_startup.max(2) {
            return sample_uniform(space, &mut self.rng);
        }
        // Stable: equal errors keep model-id order.
        obs.sort_by(|a, b| a.val_error.unwrap().total_cmp(&b.val_error.unwrap()));
        let n_good = ((self.settings.gamma * n as f64).ceil() as usize).clamp(1, n - 1);
        let (good, bad) = obs.split_at(n_good);

        let families = space.families();
        let family_density = space.has_family_param().then(|| {
            let fams: Vec<String> = families.iter().map(|f| f.to_string()).collect();
            (
                Density::categorical(&fams, &family_labels(good)),
                Density::categorical(&fams, &family_labels(bad)),
            )
        });

        let mut best: Option<(f64, Configuration)> = None;
        for _ in 0..self.settings.n_candidates {
            let mut score = 0.0;
            let family = match &family_density {
                Some((l, g)) => {
                    let i = l.sample_index(&mut self.rng);
                    score += l.pmf(i).ln() - g.pmf(i).ln();
                    families[i]
                }
                None => families[0],
            };
            let (good_f, bad_f) = (in_family(good, family), in_family(bad, family));
            let mut values = Vec::new();
            for p in space.active_params(family) {
                let (l, g) = densities(p, &good_f, &bad_f);
                let v = match &p.kind {
                    ParamKind::Continuous { .. } => {
                        let u = l.sample_continuous(&mut self.rng);
                        score += l.pdf(u).ln() - g.pdf(u).ln();
                        Value::Real(from_normalized(p, u))
                    }
                    ParamKind::Categorical { choices } => {
                        let i = l.sample_index(&mut self.rng);
                        score += l.pmf(i).ln() - g.pmf(i).ln();
                        Value::Label(choices[i].clone())
                    }
                };
                values.push((p.name.clone(), v));
            }
            let candidate = Configuration {
                family: family.to_string(),
                values,
            };
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, candidate));
            }
        }
        best.expect("at least one candidate").1
    }
}

#[cfg(test)]
mod tests {
    use super::super::{run_objective, Status, Strategy};
    use super::*;
    use crate::space::ParamSpec;

    fn lr_reg() -> SearchSpace {
        SearchSpace::new(vec![
            ParamSpec::log10("lr", 1e-3, 1e1).unwrap(),
            ParamSpec::log10("reg", 1e-4, 1e2).unwrap(),
        ])
        .unwrap()
    }

    fn quad(c: &Configuration) -> f64 {
        (c.real("lr").unwrap().log10() + 1.0).powi(2) + (c.real("reg").unwrap().log10() - 0.5).powi(2)
    }

    #[test]
    fn empty_history_is_uniform_sampling() {
        let space = lr_reg();
        let mut t = Tpe::new(11, TpeSettings::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            assert_eq!(t.propose(&space, &History::new()), sample_uniform(&space, &mut rng));
        }
    }

    #[test]
    fn proposals_stay_in_bounds() {
        let space = SearchSpace::with_families(["logistic", "linear_svm"])
            .unwrap()
            .param(ParamSpec::log10("lr", 1e-3, 1e1).unwrap())
            .unwrap()
            .conditional(ParamSpec::categorical("d", ["a", "b", "c"]).unwrap(), ["linear_svm"])
            .unwrap();
        let settings = TpeSettings {
            n_startup: 3,
            ..Default::default()
        };
        let mut s = Strategy::tpe(5, settings).unwrap();
        let h = run_objective(&mut s, &space, 60, |c| {
            let lr = c.real("lr").unwrap().log10();
            lr * lr + if c.family == "linear_svm" { 0.0 } else { 0.5 }
        })
        .unwrap();
        for r in h.records() {
            space.validate_config(&r.config).unwrap();
        }
        // The model should favour the cheaper family after startup.
        let late_svm = h.records()[30..].iter().filter(|r| r.config.family == "linear_svm").count();
        assert!(late_svm > 15, "{late_svm}");
    }

    #[test]
    fn more_evaluations_do_not_hurt_the_median() {
        let space = lr_reg();
        let mut at_10 = Vec::new();
        let mut at_50 = Vec::new();
        for seed in 0..20 {
            let mut s = Strategy::tpe(seed, TpeSettings::default()).unwrap();
            let h = run_objective(&mut s, &space, 50, quad).unwrap();
            let best = h.best_so_far();
            at_10.push(best[9]);
            at_50.push(best[49]);
        }
        let median = |v: &mut Vec<f64>| {
            v.sort_by(f64::total_cmp);
            (v[9] + v[10]) / 2.0
        };
        let (m10, m50) = (median(&mut at_10), median(&mut at_50));
        assert!(m50 <= m10, "{m50} > {m10}");
        // Better than uniform sampling at the same budget.
        let mut uniform = Vec::new();
        for seed in 0..20 {
            let mut s = Strategy::random(seed + 100);
            uniform.push(run_objective(&mut s, &space, 50, quad).unwrap().best_so_far()[49]);
        }
        let mu = median(&mut uniform);
        assert!(m50 <= mu);
    }

    #[test]
    fn killed_models_count_as_observations() {
        let space = lr_reg();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut h = History::new();
        for id in 0..4 {
            h.push(HistoryRecord {
                model_id: id,
                config: sample_uniform(&space, &mut rng),
                iterations_used: 5,
                val_error: Some(0.1 * id as f64),
                status: if id % 2 == 0 { Status::Killed } else { Status::Finished },
            });
        }
        let settings = TpeSettings {
            n_startup: 4,
            ..Default::default()
        };
        let mut model = Tpe::new(1, settings.clone()).unwrap();
        let mut uniform = Tpe::new(1, TpeSettings { n_startup: 5, ..settings }).unwrap();
        assert_ne!(model.propose(&space, &h), uniform.propose(&space, &h));
    }

    #[test]
    fn settings_from_space_file() {
        let s = TpeSettings::from_toml_str("families = [\"logistic\"]\n[tpe]\ngamma = 0.15\nn_startup = 10\n").unwrap();
        assert_eq!(s.gamma, 0.15);
        assert_eq!(s.n_startup, 10);
        assert_eq!(s.n_candidates, TpeSettings::default().n_candidates);
        assert_eq!(TpeSettings::from_toml_str("").unwrap(), TpeSettings::default());
        assert!(TpeSettings::from_toml_str("[tpe]\ngamma = 1.5\n").is_err());
        assert!(TpeSettings::from_toml_str("[tpe]\nbogus = 1\n").is_err());
    }
}
