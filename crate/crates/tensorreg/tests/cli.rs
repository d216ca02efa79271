use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::json;
use tensorreg::core::experiment::RateReport;
use tensorreg::core::{rng, DenseTensor};
use tensorreg::io::{decode_tns, encode_tns, read_problem, read_tns, write_problem, write_tns};
use tensorreg::report::{self, Format, PackingReport, SolveReport, VarExtremaReport};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tensorreg")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_json(path: &Path, v: &serde_json::Value) -> String {
    fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn rate_config(grid: &[usize]) -> serde_json::Value {
    json!({
        "class": {"class": "theta1", "s": 2, "shape": [4, 4, 4]},
        "estimator": {"estimator": "norm", "regularizer": {"kind": "entry_l1"}},
        "n_grid": grid,
        "replications": 10,
        "seed": 5,
        "rate": "s_log_d1_d2_d3",
        "width_draws": 128
    })
}

fn gen_problem_dir(dir: &Path, seed: &str) -> String {
    let cfg = write_json(&dir.join("gen.json"), &json!({"class": {"class": "theta1", "s": 2, "shape": [3, 3, 3]}, "n": 60, "noise_sigma": 0.5}));
    let out = dir.join("problem");
    let o = cli(&["gen", "--config", &cfg, "--seed", seed, "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out.join("manifest.json").to_str().unwrap().to_string()
}

#[test]
fn gen_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_problem_dir(dir.path(), "3");
    let est = dir.path().join("est.tns");
    let report = dir.path().join("solve.json");
    let o = cli(&[
        "solve",
        "--problem",
        &manifest,
        "--regularizer",
        "entry_l1",
        "--lambda",
        "0.05",
        "--estimate",
        est.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: SolveReport = report::parse_json(&fs::read(&report).unwrap()).unwrap();
    assert_eq!(rep.lambda, 0.05);
    let problem = read_problem(Path::new(&manifest)).unwrap();
    let estimate = read_tns(&est).unwrap();
    assert_eq!(estimate.shape(), &[3, 3, 3]);
    let want = tensorreg::core::solver::objective(&problem, &rep.regularizer, rep.lambda, &estimate).unwrap();
    assert_eq!(rep.objective, want);
    assert!(rep.error_frobenius_sq.unwrap() < problem.truth.unwrap().frobenius_sq());
}

#[test]
fn auto_lambda_uses_the_width() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_problem_dir(dir.path(), "4");
    let o = cli(&["solve", "--problem", &manifest, "--regularizer", "{\"kind\":\"fiber_group\",\"mode\":2}", "--width-draws", "128"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: SolveReport = report::parse_json(&o.stdout).unwrap();
    assert!(rep.width.unwrap() > 0.0 && rep.lambda > 0.0);
}

#[test]
fn non_convergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = gen_problem_dir(dir.path(), "5");
    let solver = write_json(&dir.path().join("solver.json"), &json!({"max_iters": 1, "tol": 0.0, "kkt_tol": 1e-14}));
    let o = cli(&["solve", "--problem", &manifest, "--regularizer", "entry_l1", "--lambda", "0.01", "--solver", &solver]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    // the report is still written
    let rep: SolveReport = report::parse_json(&o.stdout).unwrap();
    assert_eq!(rep.iterations, 1);
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let degenerate = write_json(&dir.path().join("rate.json"), &rate_config(&[100, 100, 100, 100]));
    assert_eq!(code(&cli(&["rate", "--config", &degenerate])), 2);
    let short = write_json(&dir.path().join("short.json"), &rate_config(&[100, 200]));
    assert_eq!(code(&cli(&["rate", "--config", &short])), 2);
    assert_eq!(code(&cli(&["width", "--kinds", "no_such_norm", "--shapes", "3x3x3"])), 2);
    assert_eq!(code(&cli(&["width", "--kinds", "entry_l1", "--shapes", "3xx3"])), 2);
    assert_eq!(code(&cli(&["packing", "--kind", "full", "--d", "4", "--delta", "1"])), 2);
    assert_eq!(code(&cli(&["packing", "--kind", "sparse", "--d", "8", "--delta", "1"])), 2);
    assert_eq!(code(&cli(&["no-such-command"])), 2);
    let unstable = write_json(&dir.path().join("var.json"), &json!({"dim": 1, "lags": [[1.5]]}));
    assert_eq!(code(&cli(&["var-extrema", "--model", &unstable])), 2);
}

#[test]
fn width_and_rate_are_deterministic_across_threads() {
    let dir = tempfile::tempdir().unwrap();
    let w1 = cli(&["width", "--kinds", r#"entry_l1;{"kind":"slice_nuclear","axes":[0,1]}"#, "--shapes", "3x3x3,4x3x2", "--draws", "256", "--seed", "9", "--threads", "1"]);
    let w2 = cli(&["width", "--kinds", r#"entry_l1;{"kind":"slice_nuclear","axes":[0,1]}"#, "--shapes", "3x3x3,4x3x2", "--draws", "256", "--seed", "9", "--threads", "3"]);
    assert_eq!(code(&w1), 0, "{}", String::from_utf8_lossy(&w1.stderr));
    assert_eq!(w1.stdout, w2.stdout);

    let cfg = write_json(&dir.path().join("rate.json"), &rate_config(&[40, 80, 160, 320]));
    let a = cli(&["rate", "--config", &cfg, "--threads", "1"]);
    let b = cli(&["rate", "--config", &cfg, "--threads", "2"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let rep: RateReport = report::parse_json(&a.stdout).unwrap();
    assert_eq!(rep.cells.len(), 40);
    assert_eq!(rep.summaries.len(), 4);
    assert!(rep.fit_frobenius.slope.is_finite());
    assert_eq!(report::to_bytes(&rep, Format::Json).unwrap(), a.stdout);

    let c = cli(&["rate", "--config", &cfg, "--seed", "6"]);
    let other: RateReport = report::parse_json(&c.stdout).unwrap();
    assert_eq!(other.config.seed, 6);
    assert_ne!(other.cells, rep.cells);

    let csv = cli(&["rate", "--config", &cfg, "--format", "csv"]);
    let text = String::from_utf8(csv.stdout).unwrap();
    assert!(text.starts_with("config,"));
    assert!(text.lines().count() > 40);
}

#[test]
fn packing_report_round_trips() {
    let o = cli(&["packing", "--kind", "full", "--d", "12", "--delta", "0.05", "--fano-n", "100", "--seed", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: PackingReport = report::parse_json(&o.stdout).unwrap();
    assert!(rep.complete && rep.verification.passed);
    assert!(rep.fano.as_ref().unwrap().passed);
    assert_eq!(report::to_bytes(&rep, Format::Json).unwrap(), o.stdout);
    assert_eq!(cli(&["packing", "--kind", "full", "--d", "12", "--delta", "0.05", "--fano-n", "100", "--seed", "2"]).stdout, o.stdout);
}

#[test]
fn var_extrema_command() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_json(&dir.path().join("var.json"), &json!({"dim": 1, "lags": [[0.5]]}));
    let o = cli(&["var-extrema", "--model", &model, "--grid", "64"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep: VarExtremaReport = report::parse_json(&o.stdout).unwrap();
    assert!((rep.extrema.mu_min - 0.25).abs() < 1e-6 && (rep.extrema.mu_max - 2.25).abs() < 1e-6);
    let unstable = write_json(&dir.path().join("u.json"), &json!({"dim": 1, "lags": [[1.5]]}));
    let o = cli(&["var-extrema", "--model", &unstable, "--auto-stabilize"]);
    let rep: VarExtremaReport = report::parse_json(&o.stdout).unwrap();
    assert!((rep.spectral_radius - 0.95).abs() < 1e-12);
}

#[test]
fn tns_round_trip() {
    for shape in [vec![1], vec![2, 3], vec![3, 1, 4, 2]] {
        let t = rng::normal_tensor(&mut rng::substream(1, 0), &shape);
        assert_eq!(decode_tns(&encode_tns(&t), Path::new("t")).unwrap(), t);
    }
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("a.tns");
    let t = DenseTensor::new(vec![2, 2], vec![1.0, -0.0, f64::MIN_POSITIVE, 1e300]).unwrap();
    write_tns(&p, &t).unwrap();
    let back = read_tns(&p).unwrap();
    assert_eq!(back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

#[test]
fn problem_round_trip() {
    let truth = rng::normal_tensor(&mut rng::substream(2, 0), &[2, 3, 2]);
    let p = tensorreg::core::datagen::gen_problem(&truth, 15, 2, 0.3, &tensorreg::core::datagen::Design::Iid, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_problem(dir.path(), &p).unwrap();
    assert_eq!(read_problem(&manifest).unwrap(), p);
    fs::write(dir.path().join("responses.tns"), encode_tns(&DenseTensor::zeros(&[14, 2]))).unwrap();
    assert!(read_problem(&manifest).is_err());
}
