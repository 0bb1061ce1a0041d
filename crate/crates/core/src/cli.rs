//! Command-line harness: planner runs, the batching benchmark and the search
//! comparison, each producing a [`RunReport`].

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::bandit::{SlackRule, DEFAULT_EPSILON};
use crate::data::{self, standard_split, synth, DataSplit};
use crate::error::{Error, Result};
use crate::paq::{bind, parse_predict_clause, Catalog};
use crate::plan::{
    baseline_plan, test_error, tupaq_plan, Budget, PlanOptions, PlanResult, DEFAULT_BATCH_SIZE,
    DEFAULT_MAX_ITERATIONS, DEFAULT_PARTIAL_ITERS,
};
use crate::search::{StrategyKind, StrategyOptions, TpeSettings};
use crate::space::SearchSpace;
use crate::train::{batched_gradient, naive_batched_gradient};

#[derive(Parser, Debug)]
#[command(name = "tupaq", version, about = "Model search under a training budget")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run a planner and report every model it trained.
    Plan(PlanArgs),
    /// Measure training throughput across batch sizes.
    BenchBatching(BenchArgs),
    /// Compare search strategies across budgets, datasets and seeds.
    CompareSearch(CompareArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

impl Switch {
    fn is_on(self) -> bool {
        self == Switch::On
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Planner {
    Tupaq,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Slack {
    Error,
    Quality,
}

/// `n,d[,noise]` for a synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub noise: f64,
}

impl FromStr for SynthSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if !(2..=3).contains(&parts.len()) {
            return Err(format!("expected n,d[,noise], got {s:?}"));
        }
        let n = parts[0].parse().map_err(|_| format!("bad row count {:?}", parts[0]))?;
        let d = parts[1].parse().map_err(|_| format!("bad feature count {:?}", parts[1]))?;
        let noise = match parts.get(2) {
            Some(p) => p.parse().map_err(|_| format!("bad noise rate {p:?}"))?,
            None => 0.0,
        };
        Ok(SynthSpec { n, d, noise })
    }
}

impl std::fmt::Display for SynthSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{},{},{}", self.n, self.d, self.noise)
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct DataArgs {
    /// CSV or libsvm file; the final CSV column is the label.
    #[arg(long, value_name = "FILE")]
    pub data: Option<PathBuf>,
    /// Synthetic data: rows, features and label-noise rate.
    #[arg(long, value_name = "N,D,NOISE")]
    pub synth: Option<SynthSpec>,
    /// Predictive clause naming the target and training relation.
    #[arg(long, value_name = "CLAUSE", requires = "catalog")]
    pub paq: Option<String>,
    /// Directory of `<Relation>.csv` files with header rows.
    #[arg(long, value_name = "DIR")]
    pub catalog: Option<PathBuf>,
}

impl DataArgs {
    fn describe(&self) -> String {
        match (&self.data, &self.synth, &self.paq) {
            (Some(p), _, _) => format!("file:{}", p.display()),
            (_, Some(s), _) => format!("synth:{s}"),
            (_, _, Some(q)) => format!("paq:{q}"),
            _ => "none".into(),
        }
    }

    /// Loads and splits the selected source.
    pub fn load(&self, seed: u64) -> Result<DataSplit> {
        let chosen = [self.data.is_some(), self.synth.is_some(), self.paq.is_some()]
            .iter()
            .filter(|b| **b)
            .count();
        if chosen != 1 {
            return Err(Error::invalid_argument("give exactly one of --data, --synth or --paq"));
        }
        if let Some(path) = &self.data {
            return standard_split(&data::load(path)?, seed);
        }
        if let Some(s) = self.synth {
            return standard_split(&synth(s.n, s.d, seed, s.noise)?, seed);
        }
        let clause = self.paq.as_deref().expect("one source chosen");
        let query = parse_predict_clause(clause)?;
        let catalog = Catalog::load_dir(self.catalog.as_deref().expect("required by clap"))?;
        Ok(bind(&query, &catalog, seed)?.split)
    }
}

#[derive(Args, Debug, Clone)]
pub struct PlanArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Search space file.
    #[arg(long, value_name = "FILE")]
    pub space: PathBuf,
    #[arg(long, value_enum, default_value = "tupaq")]
    pub planner: Planner,
    #[arg(long, default_value = "random", value_name = "NAME")]
    pub strategy: StrategyKind,
    /// Budget in models, each worth max-iters iterations; also caps the
    /// number of configurations tried.
    #[arg(long, value_name = "N", conflicts_with = "budget_iters")]
    pub budget_models: Option<usize>,
    /// Budget in model-iterations.
    #[arg(long, value_name = "N")]
    pub budget_iters: Option<usize>,
    #[arg(long = "batch", default_value_t = DEFAULT_BATCH_SIZE, value_name = "K")]
    pub batch_size: usize,
    #[arg(long, default_value_t = DEFAULT_PARTIAL_ITERS, value_name = "P")]
    pub partial_iters: usize,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS, value_name = "M")]
    pub max_iters: usize,
    #[arg(long, default_value_t = DEFAULT_EPSILON, value_name = "E")]
    pub epsilon: f64,
    #[arg(long, value_enum, default_value = "on")]
    pub bandit: Switch,
    #[arg(long, value_enum, default_value = "on")]
    pub batching: Switch,
    #[arg(long, value_enum, default_value = "error")]
    pub slack: Slack,
    /// Simulated scheduling delay per training task, in milliseconds.
    #[arg(long, default_value_t = 0, value_name = "MS")]
    pub sched_delay: u64,
    #[arg(long, default_value_t = 0, value_name = "S")]
    pub seed: u64,
    /// Report file; printed to stdout when absent.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct BenchArgs {
    #[arg(long, default_value = "100000,1000", value_name = "N,D")]
    pub synth: SynthSpec,
    #[arg(long, value_delimiter = ',', default_value = "1,2,5,8,10,15,20", value_name = "K,...")]
    pub batch_sizes: Vec<usize>,
    /// Gradient iterations timed per cell.
    #[arg(long, default_value_t = 2, value_name = "N")]
    pub iters: usize,
    /// Iterations that make up one trained model.
    #[arg(long, default_value_t = DEFAULT_MAX_ITERATIONS, value_name = "M")]
    pub max_iters: usize,
    #[arg(long, default_value_t = 0, value_name = "S")]
    pub seed: u64,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct CompareArgs {
    /// Search space file.
    #[arg(long, value_name = "FILE")]
    pub space: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "grid,random,tpe,nelder-mead,powell", value_name = "NAME,...")]
    pub strategies: Vec<StrategyKind>,
    #[arg(long, value_delimiter = ',', default_value = "16,81,256,625", value_name = "N,...")]
    pub budgets: Vec<usize>,
    /// Synthetic dataset shape; one dataset per noise rate.
    #[arg(long, default_value = "2000,10", value_name = "N,D")]
    pub synth: SynthSpec,
    #[arg(long, value_delimiter = ',', default_value = "0.05,0.1,0.15,0.2,0.25", value_name = "R,...")]
    pub noise: Vec<f64>,
    /// Number of seeds per dataset.
    #[arg(long, default_value_t = 3, value_name = "N")]
    pub seeds: u64,
    /// Iterations per evaluated configuration.
    #[arg(long, default_value_t = 20, value_name = "M")]
    pub max_iters: usize,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// SVG plot of median best error against budget.
    #[arg(long, value_name = "FILE")]
    pub plot: Option<PathBuf>,
}

/// Knobs, one delimiter-separated table and summary lines.
///
/// Comment lines start with `#`. Lines starting with `# timing` and table
/// columns named `*_ms` or `*_per_hour` depend on the machine; everything
/// else is reproducible from the knobs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunReport {
    pub command: String,
    pub knobs: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
    pub summary: Vec<(String, String)>,
    pub timing: Vec<(String, String)>,
}

impl RunReport {
    fn new(command: &str, columns: &[&str]) -> Self {
        RunReport {
            command: command.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Default::default()
        }
    }

    fn knob(&mut self, key: &str, value: impl ToString) {
        self.knobs.push((key.to_string(), value.to_string()));
    }

    fn summary(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    fn timing(&mut self, key: &str, value: impl ToString) {
        self.timing.push((key.to_string(), value.to_string()));
    }

    pub fn summary_value(&self, key: &str) -> Option<&str> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn timing_value(&self, key: &str) -> Option<&str> {
        self.timing.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn render(&self) -> String {
        let mut out = format!("# tupaq {}\n", self.command);
        for (k, v) in &self.knobs {
            let _ = writeln!(out, "# knob {k}={v}");
        }
        let _ = writeln!(out, "{}", self.columns.join("\t"));
        for row in &self.rows {
            let _ = writeln!(out, "{}", row.join("\t"));
        }
        for (k, v) in &self.summary {
            let _ = writeln!(out, "# summary {k}={v}");
        }
        for (k, v) in &self.timing {
            let _ = writeln!(out, "# timing {k}={v}");
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}

fn is_timing_column(name: &str) -> bool {
    name.ends_with("_ms") || name.ends_with("_per_hour")
}

/// A rendered report without its machine-dependent parts.
pub fn strip_timing(report: &str) -> String {
    let mut timing_cols: Option<Vec<bool>> = None;
    let mut out = String::new();
    for line in report.lines() {
        if line.starts_with("# timing") {
            continue;
        }
        if line.starts_with('#') {
            out.push_str(line);
            out.push('\n');
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let mask = timing_cols.get_or_insert_with(|| fields.iter().map(|f| is_timing_column(f)).collect());
        let kept: Vec<&str> = fields
            .iter()
            .enumerate()
            .filter(|(i, _)| !mask.get(*i).copied().unwrap_or(false))
            .map(|(_, f)| *f)
            .collect();
        out.push_str(&kept.join("\t"));
        out.push('\n');
    }
    out
}

fn ms(d: Duration) -> String {
    format!("{:.3}", d.as_secs_f64() * 1e3)
}

fn read_space(path: &Path) -> Result<(SearchSpace, TpeSettings)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let config = |e: Error| Error::Config {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    Ok((
        SearchSpace::from_toml_str(&text).map_err(config)?,
        TpeSettings::from_toml_str(&text).map_err(config)?,
    ))
}

pub fn models_per_hour(models: usize, elapsed: Duration) -> f64 {
    let secs = elapsed.as_secs_f64();
    if secs > 0.0 {
        3600.0 * models as f64 / secs
    } else {
        f64::INFINITY
    }
}

/// Runs the selected planner.
pub fn cmd_plan(args: &PlanArgs) -> Result<RunReport> {
    let (space, tpe) = read_space(&args.space)?;
    let split = args.data.load(args.seed)?;
    let epsilon = if args.bandit.is_on() { args.epsilon } else { f64::INFINITY };
    let result = match args.planner {
        Planner::Baseline => {
            let models = args
                .budget_models
                .ok_or_else(|| Error::invalid_argument("the baseline planner needs --budget-models"))?;
            baseline_plan(&split, &space, models, args.max_iters, args.seed)?
        }
        Planner::Tupaq => {
            let budget = match (args.budget_models, args.budget_iters) {
                (Some(m), _) => Budget::from_models(m, args.max_iters),
                (None, Some(i)) => Budget::new(i),
                (None, None) => return Err(Error::invalid_argument("give --budget-models or --budget-iters")),
            };
            let opts = PlanOptions {
                partial_iters: args.partial_iters,
                batch_size: args.batch_size,
                strategy: args.strategy,
                epsilon,
                max_iterations: args.max_iters,
                batching: args.batching.is_on(),
                seed: args.seed,
                search: StrategyOptions {
                    seed: args.seed,
                    tpe,
                    ..Default::default()
                },
                slack_rule: match args.slack {
                    Slack::Error => SlackRule::Error,
                    Slack::Quality => SlackRule::Quality,
                },
                sched_delay: Duration::from_millis(args.sched_delay),
                max_models: args.budget_models,
                ..Default::default()
            };
            tupaq_plan(&split, &space, budget, &opts)?
        }
    };

    let mut report = RunReport::new(
        "plan",
        &["model_id", "config", "iterations", "val_error", "status", "cumulative_scans", "elapsed_ms"],
    );
    report.knob("data", args.data.describe());
    report.knob("space", args.space.display());
    report.knob("planner", format!("{:?}", args.planner).to_lowercase());
    report.knob("strategy", args.strategy);
    report.knob("budget_models", args.budget_models.map_or("-".into(), |v| v.to_string()));
    report.knob("budget_iters", args.budget_iters.map_or("-".into(), |v| v.to_string()));
    report.knob("batch", args.batch_size);
    report.knob("partial_iters", args.partial_iters);
    report.knob("max_iters", args.max_iters);
    report.knob("epsilon", args.epsilon);
    report.knob("bandit", if args.bandit.is_on() { "on" } else { "off" });
    report.knob("batching", if args.batching.is_on() { "on" } else { "off" });
    report.knob("slack", format!("{:?}", args.slack).to_lowercase());
    report.knob("sched_delay_ms", args.sched_delay);
    report.knob("seed", args.seed);
    fill_plan_report(&mut report, &result, &split, args.seed)?;
    if let Some(out) = &args.out {
        report.write(out)?;
    }
    Ok(report)
}

fn fill_plan_report(report: &mut RunReport, result: &PlanResult, split: &DataSplit, seed: u64) -> Result<()> {
    let mut last_iters = std::collections::HashMap::new();
    let mut cumulative = 0;
    for (r, t) in result.history.records().iter().zip(&result.timestamps) {
        let before = last_iters.insert(r.model_id, r.iterations_used).unwrap_or(0);
        cumulative += r.iterations_used - before;
        report.rows.push(vec![
            r.model_id.to_string(),
            r.config.to_string(),
            r.iterations_used.to_string(),
            r.val_error.map_or("-".into(), |e| format!("{e:.6}")),
            r.status.to_string(),
            cumulative.to_string(),
            ms(*t),
        ]);
    }
    let best = &result.best;
    report.summary("best_model_id", best.id);
    report.summary("best_config", &best.config);
    report.summary("best_val_error", format!("{:.6}", best.val_error.unwrap_or(f64::NAN)));
    report.summary("best_test_error", format!("{:.6}", test_error(split, best, seed)?));
    report.summary("best_is_partial", result.best_is_partial);
    report.summary("models_trained", result.models_trained());
    report.summary("models_finished", result.models_finished());
    report.summary("total_scans", result.scans_used);
    report.summary("data_passes", result.data_passes);
    report.summary("tasks", result.tasks);
    report.timing("wall_ms", ms(result.wall_time));
    report.timing("simulated_overhead_ms", ms(result.simulated_overhead));
    report.timing("total_ms", ms(result.total_time()));
    report.timing(
        "models_per_hour",
        format!("{:.2}", models_per_hour(result.models_finished(), result.total_time())),
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    Matrix,
    Naive,
}

impl Kernel {
    fn name(self) -> &'static str {
        match self {
            Kernel::Matrix => "matrix",
            Kernel::Naive => "naive",
        }
    }
}

/// Throughput of one kernel at one batch size: average time per iteration
/// and the implied models per hour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchCell {
    pub kernel: Kernel,
    pub batch: usize,
    pub per_iteration: Duration,
    pub models_per_hour: f64,
}

/// Times `iters` full-data gradient steps for `batch` models.
pub fn bench_cell(ds: &data::Dataset, kernel: Kernel, batch: usize, iters: usize, max_iters: usize, seed: u64) -> Result<BenchCell> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = Array2::from_shape_fn((ds.n_features(), batch), |_| 1e-3 * (rng.random::<f64>() - 0.5));
    let start = Instant::now();
    for _ in 0..iters {
        let g = match kernel {
            Kernel::Matrix => batched_gradient(w.view(), ds.features(), ds.labels(), 1e-3)?,
            Kernel::Naive => naive_batched_gradient(w.view(), ds.features(), ds.labels(), 1e-3)?,
        };
        w.scaled_add(-1e-6, &g);
    }
    let per_iteration = start.elapsed() / iters.max(1) as u32;
    let per_model = per_iteration * max_iters as u32;
    Ok(BenchCell {
        kernel,
        batch,
        per_iteration,
        models_per_hour: models_per_hour(batch, per_model),
    })
}

pub fn cmd_bench_batching(args: &BenchArgs) -> Result<RunReport> {
    if args.iters == 0 || args.batch_sizes.contains(&0) {
        return Err(Error::invalid_argument("iterations and batch sizes must be at least 1"));
    }
    let ds = synth(args.synth.n, args.synth.d, args.seed, args.synth.noise)?;
    let mut report = RunReport::new(
        "bench-batching",
        &["kernel", "batch", "iteration_ms", "models_per_hour", "speedup_per_hour"],
    );
    report.knob("synth", args.synth);
    report.knob(
        "batch_sizes",
        args.batch_sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
    );
    report.knob("iters", args.iters);
    report.knob("max_iters", args.max_iters);
    report.knob("seed", args.seed);
    for kernel in [Kernel::Naive, Kernel::Matrix] {
        let mut base = None;
        for &k in &args.batch_sizes {
            let cell = bench_cell(&ds, kernel, k, args.iters, args.max_iters, args.seed)?;
            let base_rate = *base.get_or_insert(if k == 1 {
                cell.models_per_hour
            } else {
                bench_cell(&ds, kernel, 1, args.iters, args.max_iters, args.seed)?.models_per_hour
            });
            report.rows.push(vec![
                kernel.name().into(),
                k.to_string(),
                ms(cell.per_iteration),
                format!("{:.2}", cell.models_per_hour),
                format!("{:.2}", cell.models_per_hour / base_rate),
            ]);
        }
    }
    if let Some(out) = &args.out {
        report.write(out)?;
    }
    Ok(report)
}

/// One (dataset, seed, strategy) sweep over the requested budgets.
fn compare_cells(
    split: &DataSplit,
    space: &SearchSpace,
    tpe: &TpeSettings,
    strategy: StrategyKind,
    budgets: &[usize],
    max_iters: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let run = |models: usize| {
        let opts = PlanOptions {
            partial_iters: max_iters,
            max_iterations: max_iters,
            batch_size: 1,
            epsilon: f64::INFINITY,
            strategy,
            seed,
            search: StrategyOptions {
                seed,
                tpe: tpe.clone(),
                ..Default::default()
            },
            max_models: Some(models),
            ..Default::default()
        };
        tupaq_plan(split, space, Budget::from_models(models, max_iters), &opts)
    };
    if strategy == StrategyKind::Grid {
        return budgets
            .iter()
            .map(|&b| Ok(run(b)?.history.best_error().unwrap_or(f64::NAN)))
            .collect();
    }
    let largest = budgets.iter().copied().max().unwrap_or(0);
    let curve = run(largest)?.history.best_so_far();
    Ok(budgets
        .iter()
        .map(|&b| curve.get(b.min(curve.len()).saturating_sub(1)).copied().unwrap_or(f64::NAN))
        .collect())
}

pub fn cmd_compare_search(args: &CompareArgs) -> Result<RunReport> {
    let (space, tpe) = read_space(&args.space)?;
    let mut budgets = args.budgets.clone();
    budgets.sort_unstable();
    budgets.dedup();
    if budgets.is_empty() || budgets[0] == 0 {
        return Err(Error::invalid_argument("budgets must be at least 1"));
    }
    let mut report = RunReport::new(
        "compare-search",
        &["dataset", "noise", "seed", "strategy", "budget", "best_error", "cell_best", "status"],
    );
    report.knob("space", args.space.display());
    report.knob("strategies", args.strategies.iter().map(|s| s.name()).collect::<Vec<_>>().join(","));
    report.knob("budgets", budgets.iter().map(usize::to_string).collect::<Vec<_>>().join(","));
    report.knob("synth", format!("{},{}", args.synth.n, args.synth.d));
    report.knob("noise", args.noise.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
    report.knob("seeds", args.seeds);
    report.knob("max_iters", args.max_iters);

    let mut medians: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for strategy in &args.strategies {
        let mut per_budget: Vec<Vec<f64>> = vec![Vec::new(); budgets.len()];
        for (di, &noise) in args.noise.iter().enumerate() {
            let split = standard_split(&synth(args.synth.n, args.synth.d, di as u64, noise)?, di as u64)?;
            for seed in 0..args.seeds {
                match compare_cells(&split, &space, &tpe, *strategy, &budgets, args.max_iters, seed) {
                    Ok(cells) => {
                        let mut running = f64::INFINITY;
                        for (bi, (&b, &cell)) in budgets.iter().zip(&cells).enumerate() {
                            running = running.min(cell);
                            per_budget[bi].push(running);
                            report.rows.push(vec![
                                di.to_string(),
                                noise.to_string(),
                                seed.to_string(),
                                strategy.name().into(),
                                b.to_string(),
                                format!("{running:.6}"),
                                format!("{cell:.6}"),
                                "ok".into(),
                            ]);
                        }
                    }
                    Err(e @ Error::UnsupportedStrategy { .. }) => {
                        for &b in &budgets {
                            report.rows.push(vec![
                                di.to_string(),
                                noise.to_string(),
                                seed.to_string(),
                                strategy.name().into(),
                                b.to_string(),
                                "-".into(),
                                "-".into(),
                                format!("unsupported: {e}").replace('\t', " "),
                            ]);
                        }
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        let points: Vec<(f64, f64)> = budgets
            .iter()
            .zip(&mut per_budget)
            .filter(|(_, v)| !v.is_empty())
            .map(|(&b, v)| (b as f64, median(v)))
            .collect();
        if !points.is_empty() {
            for &(b, m) in &points {
                report.summary(&format!("median_{}_{}", strategy.name(), b), format!("{m:.6}"));
            }
            medians.push((strategy.name().to_string(), points));
        }
    }
    if let Some(out) = &args.out {
        report.write(out)?;
    }
    if let Some(plot) = &args.plot {
        let svg = svg_lines("median best validation error", "budget (models)", &medians);
        std::fs::write(plot, svg).map_err(|e| Error::io(plot, e))?;
    }
    Ok(report)
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// A line chart with a log-scaled x axis.
pub fn svg_lines(title: &str, x_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const PAD: f64 = 60.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];
    let pts = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts.filter(|(x, y)| *x > 0.0 && y.is_finite()) {
        x0 = x0.min(x.log10());
        x1 = x1.max(x.log10());
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1e-3;
    }
    let sx = |x: f64| PAD + (x.log10() - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let _ = writeln!(svg, "<text x=\"{}\" y=\"20\" text-anchor=\"middle\">{title}</text>", W / 2.0);
    let _ = writeln!(
        svg,
        "<line x1=\"{PAD}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/><line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{b}\" stroke=\"black\"/>",
        b = H - PAD,
        r = W - PAD
    );
    let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{x_label}</text>", W / 2.0, H - 15.0);
    let _ = writeln!(svg, "<text x=\"5\" y=\"{}\">{y1:.3}</text><text x=\"5\" y=\"{}\">{y0:.3}</text>", PAD, H - PAD);
    for (i, (name, points)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = points
            .iter()
            .filter(|(x, y)| *x > 0.0 && y.is_finite())
            .map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(svg, "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>", path.join(" "));
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{name}</text>",
            W - PAD + 5.0,
            PAD + 15.0 * i as f64
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Parses arguments, runs the command and prints the report unless it was
/// written to a file.
pub fn run(cli: Cli) -> Result<String> {
    let (report, out) = match &cli.command {
        Command::Plan(a) => (cmd_plan(a)?, a.out.clone()),
        Command::BenchBatching(a) => (cmd_bench_batching(a)?, a.out.clone()),
        Command::CompareSearch(a) => (cmd_compare_search(a)?, a.out.clone()),
    };
    Ok(match out {
        Some(path) => format!("report written to {}\n", path.display()),
        None => report.render(),
    })
}
