use std::collections::HashMap;

use tupaq::cli::{cmd_compare_search, median, CompareArgs, SynthSpec};
use tupaq::search::StrategyKind;

const SPACE: &str = r#"
[[params]]
name = "lr"
type = "continuous"
lo = 1e-3
hi = 1e1
scale = "log10"

[[params]]
name = "reg"
type = "continuous"
lo = 1e-4
hi = 1e2
scale = "log10"
"#;

fn args(dir: &std::path::Path, strategies: Vec<StrategyKind>, budgets: Vec<usize>, seeds: u64) -> CompareArgs {
    let space = dir.join("space.toml");
    std::fs::write(&space, SPACE).unwrap();
    CompareArgs {
        space,
        strategies,
        budgets,
        synth: SynthSpec { n: 2000, d: 10, noise: 0.0 },
        noise: vec![0.05, 0.1, 0.15, 0.2, 0.25],
        seeds,
        max_iters: 20,
        out: None,
        plot: None,
    }
}

#[test]
fn best_so_far_never_increases_with_budget() {
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_compare_search(&args(dir.path(), StrategyKind::ALL.to_vec(), vec![16, 81, 256], 2)).unwrap();
    let best = report.column("best_error").unwrap();
    let budget = report.column("budget").unwrap();
    let mut curves: HashMap<(String, String, String), Vec<(usize, f64)>> = HashMap::new();
    for row in &report.rows {
        assert_eq!(row[report.column("status").unwrap()], "ok");
        curves
            .entry((row[0].clone(), row[2].clone(), row[3].clone()))
            .or_default()
            .push((row[budget].parse().unwrap(), row[best].parse().unwrap()));
    }
    assert_eq!(curves.len(), 5 * 2 * 5);
    for (cell, mut curve) in curves {
        curve.sort_by_key(|p| p.0);
        assert!(curve.windows(2).all(|w| w[1].1 <= w[0].1), "{cell:?}: {curve:?}");
    }
}

#[test]
fn tpe_matches_or_beats_random_at_full_budget() {
    let dir = tempfile::tempdir().unwrap();
    let report = cmd_compare_search(&args(
        dir.path(),
        vec![StrategyKind::Tpe, StrategyKind::Random],
        vec![625],
        20,
    ))
    .unwrap();
    let best = report.column("best_error").unwrap();
    let mut per: HashMap<(String, String), Vec<f64>> = HashMap::new();
    for row in &report.rows {
        per.entry((row[0].clone(), row[3].clone())).or_default().push(row[best].parse().unwrap());
    }
    let mut wins = 0;
    for dataset in 0..5 {
        let key = |s: &str| (dataset.to_string(), s.to_string());
        let tpe = median(per.get_mut(&key("tpe")).unwrap());
        let random = median(per.get_mut(&key("random")).unwrap());
        if tpe <= random {
            wins += 1;
        }
    }
    assert!(wins >= 3, "tpe at or below random on {wins}/5 datasets");
}
