use std::fs;
use std::path::Path;
use std::process::Command;

use tupaq::cli::strip_timing;
use tupaq::data::{synth, to_csv};

const LINEAR_SPACE: &str = r#"
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

fn tupaq(args: &[&str]) -> (bool, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_tupaq")).args(args).output().unwrap();
    (
        out.status.success(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn write_space(dir: &Path) -> String {
    let path = dir.join("space.toml");
    fs::write(&path, LINEAR_SPACE).unwrap();
    path.display().to_string()
}

fn summary<'a>(report: &'a str, key: &str) -> &'a str {
    let prefix = format!("# summary {key}=");
    report
        .lines()
        .find_map(|l| l.strip_prefix(prefix.as_str()))
        .unwrap_or_else(|| panic!("no summary {key}"))
}

#[test]
fn plan_reports_every_model() {
    let dir = tempfile::tempdir().unwrap();
    let space = write_space(dir.path());
    let (ok, out, err) = tupaq(&["plan", "--synth", "1500,6,0.1", "--space", &space, "--budget-models", "12", "--seed", "3"]);
    assert!(ok, "{err}");
    let header = out.lines().find(|l| !l.starts_with('#')).unwrap();
    assert_eq!(header, "model_id\tconfig\titerations\tval_error\tstatus\tcumulative_scans\telapsed_ms");
    let rows: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert!(!rows.is_empty());
    let last_scans: usize = rows.last().unwrap().split('\t').nth(5).unwrap().parse().unwrap();
    assert_eq!(last_scans.to_string(), summary(&out, "total_scans"));
    assert!(last_scans <= 1200);
    let test_err: f64 = summary(&out, "best_test_error").parse().unwrap();
    assert!((0.0..=1.0).contains(&test_err));
    assert!(out.contains("# timing models_per_hour="));
}

#[test]
fn plan_writes_report_file_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let space = write_space(dir.path());
    let a = dir.path().join("a.tsv");
    let b = dir.path().join("b.tsv");
    for out in [&a, &b] {
        let (ok, stdout, err) = tupaq(&[
            "plan", "--synth", "1200,5,0.2", "--space", &space, "--budget-iters", "600", "--strategy", "tpe",
            "--sched-delay", "5", "--out", out.to_str().unwrap(),
        ]);
        assert!(ok, "{err}");
        assert!(stdout.starts_with("report written to"));
    }
    let (a, b) = (fs::read_to_string(a).unwrap(), fs::read_to_string(b).unwrap());
    assert_eq!(strip_timing(&a), strip_timing(&b));
    assert!(a.contains("# knob sched_delay_ms=5"));
}

#[test]
fn baseline_planner_trains_the_grid() {
    let dir = tempfile::tempdir().unwrap();
    let space = write_space(dir.path());
    let (ok, out, err) = tupaq(&[
        "plan", "--synth", "800,4,0.1", "--space", &space, "--planner", "baseline", "--budget-models", "9", "--max-iters", "20",
    ]);
    assert!(ok, "{err}");
    assert_eq!(summary(&out, "models_finished"), "9");
    assert_eq!(summary(&out, "total_scans"), "180");
}

#[test]
fn plan_reads_csv_and_paq_sources() {
    let dir = tempfile::tempdir().unwrap();
    let space = write_space(dir.path());
    let ds = synth(600, 3, 5, 0.1).unwrap();
    let csv = dir.path().join("points.csv");
    fs::write(&csv, to_csv(&ds)).unwrap();
    let (ok, out, err) = tupaq(&["plan", "--data", csv.to_str().unwrap(), "--space", &space, "--budget-models", "4"]);
    assert!(ok, "{err}");
    assert_eq!(summary(&out, "models_trained"), "4");

    let catalog = dir.path().join("catalog");
    fs::create_dir(&catalog).unwrap();
    let body = to_csv(&ds);
    fs::write(catalog.join("Points.csv"), format!("a,b,c,label\n{body}")).unwrap();
    let (ok, out, err) = tupaq(&[
        "plan", "--paq", "PREDICT(Points.label, a, c) GIVEN Points", "--catalog", catalog.to_str().unwrap(),
        "--space", &space, "--budget-models", "4",
    ]);
    assert!(ok, "{err}");
    assert!(out.contains("# knob data=paq:PREDICT(Points.label, a, c) GIVEN Points"));

    let (ok, _, err) = tupaq(&[
        "plan", "--paq", "PREDICT(Points.missing) GIVEN Points", "--catalog", catalog.to_str().unwrap(),
        "--space", &space, "--budget-models", "4",
    ]);
    assert!(!ok);
    assert!(err.contains("missing"), "{err}");
}

#[test]
fn errors_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let space = write_space(dir.path());
    let (ok, _, err) = tupaq(&["plan", "--space", &space, "--budget-models", "2"]);
    assert!(!ok);
    assert!(err.starts_with("error:"));
    let (ok, _, err) = tupaq(&["plan", "--synth", "100,2", "--space", "/nonexistent.toml", "--budget-models", "2"]);
    assert!(!ok);
    assert!(err.contains("/nonexistent.toml"));
    let (ok, _, _) = tupaq(&["plan", "--synth", "100,2", "--space", &space]);
    assert!(!ok);
}

#[test]
fn compare_search_reports_unsupported_cells() {
    let dir = tempfile::tempdir().unwrap();
    let space = dir.path().join("families.toml");
    fs::write(
        &space,
        "families = [\"logistic\", \"svm\"]\n[[params]]\nname = \"lr\"\ntype = \"continuous\"\nlo = 0.001\nhi = 1.0\nscale = \"log10\"\n",
    )
    .unwrap();
    let plot = dir.path().join("plot.svg");
    let (ok, out, err) = tupaq(&[
        "compare-search", "--space", space.to_str().unwrap(), "--strategies", "random,powell", "--budgets", "2,4",
        "--synth", "400,3", "--noise", "0.1", "--seeds", "1", "--max-iters", "5", "--plot", plot.to_str().unwrap(),
    ]);
    assert!(ok, "{err}");
    let rows: Vec<Vec<&str>> = out
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split('\t').collect())
        .collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().filter(|r| r[3] == "powell").all(|r| r[7].starts_with("unsupported")));
    let random: Vec<f64> = rows.iter().filter(|r| r[3] == "random").map(|r| r[5].parse().unwrap()).collect();
    assert!(random[1] <= random[0]);
    assert!(fs::read_to_string(plot).unwrap().contains("<polyline"));
}

#[test]
fn bench_batching_reports_both_kernels() {
    let (ok, out, err) = tupaq(&["bench-batching", "--synth", "2000,20", "--batch-sizes", "1,4", "--iters", "1"]);
    assert!(ok, "{err}");
    let rows: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[0].starts_with("naive\t1\t") && rows[3].starts_with("matrix\t4\t"));
    assert!(rows[2].ends_with("\t1.00"));
    let stripped = strip_timing(&out);
    assert!(stripped.lines().any(|l| l == "kernel\tbatch"));
}
