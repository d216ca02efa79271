use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use tensorreg::core::datagen::{self, Design, ModelClassSpec, VarModel};
use tensorreg::core::experiment::RateExperimentConfig;
use tensorreg::core::packing::{self, PackingKind};
use tensorreg::core::solver::{self, lambda_rule, objective, SolveStatus, SolverConfig};
use tensorreg::core::{Error as CoreError, RegularizerSpec};
use tensorreg::error::{Error, Result};
use tensorreg::report::{self, Format, GenReport, PackingReport, SolveReport, VarExtremaReport};
use tensorreg::{io, run};

#[derive(Parser)]
#[command(name = "tensorreg", version, about = "Regularized tensor regression experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Master seed (0 when omitted); overrides the seed of a rate config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Report path (stdout when omitted); for `gen`, the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
}

impl Global {
    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw a truth and a regression problem from a JSON config.
    Gen {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit a stored problem.
    Solve {
        /// Problem manifest.
        #[arg(long)]
        problem: PathBuf,
        /// Regularizer as JSON, e.g. '{"kind":"fiber_group","mode":0}', or a
        /// bare kind name.
        #[arg(long)]
        regularizer: String,
        /// A number, or `auto` for the width-based rule.
        #[arg(long, default_value = "auto")]
        lambda: String,
        #[arg(long, default_value_t = 1.0)]
        multiplier: f64,
        #[arg(long, default_value_t = 1.0)]
        c_u: f64,
        #[arg(long, default_value_t = 2000)]
        width_draws: usize,
        /// Solver settings as a JSON file.
        #[arg(long)]
        solver: Option<PathBuf>,
        /// Write the estimate here as TNS1.
        #[arg(long)]
        estimate: Option<PathBuf>,
    },
    /// Monte-Carlo Gaussian widths of dual-norm balls.
    Width {
        /// Regularizers, separated by ';'.
        #[arg(long)]
        kinds: String,
        /// Shapes like `5x5x5`, separated by ','.
        #[arg(long)]
        shapes: String,
        #[arg(long, default_value_t = 2000)]
        draws: usize,
    },
    /// Rate sweep from a JSON config.
    Rate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Greedy hypercube packing with independent verification.
    Packing {
        /// full, sparse or lowrank.
        #[arg(long)]
        kind: String,
        #[arg(long)]
        d: usize,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 100_000)]
        budget: usize,
        #[arg(long)]
        s: Option<usize>,
        #[arg(long)]
        d1: Option<usize>,
        #[arg(long)]
        d2: Option<usize>,
        #[arg(long)]
        r: Option<usize>,
        /// Also check the lower-bound preconditions at this sample size.
        #[arg(long)]
        fano_n: Option<usize>,
        #[arg(long, default_value_t = 1.0)]
        c_u: f64,
        /// Lower-bound `δ`; defaults to the packing radius mapped through
        /// `δ c_u / (2 √n)`.
        #[arg(long)]
        fano_delta: Option<f64>,
    },
    /// Spectral extrema of a VAR model given as JSON.
    VarExtrema {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 256)]
        grid: usize,
        #[arg(long)]
        auto_stabilize: bool,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenConfig {
    #[serde(default)]
    class: Option<ModelClassSpec>,
    #[serde(default)]
    var_model: Option<VarModel>,
    n: usize,
    #[serde(default = "one")]
    noise_sigma: f64,
    /// Covariate axes; defaults to all but the response axes of the class.
    #[serde(default)]
    split: Option<usize>,
    #[serde(default)]
    auto_stabilize: bool,
}

fn one() -> f64 {
    1.0
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    serde_json::from_str(&text).map_err(|e| Error::Format { path: path.into(), msg: e.to_string() })
}

fn parse_regularizer(s: &str) -> Result<RegularizerSpec> {
    let s = s.trim();
    let json = if s.starts_with('{') { s.to_string() } else { format!("{{\"kind\":\"{s}\"}}") };
    serde_json::from_str(&json).map_err(|e| Error::Usage(format!("bad regularizer `{s}`: {e}")))
}

fn parse_shape(s: &str) -> Result<Vec<usize>> {
    s.trim()
        .split('x')
        .map(|d| d.trim().parse::<usize>().map_err(|_| Error::Usage(format!("bad shape `{s}`"))))
        .collect()
}

fn gen(g: &Global, config: &Path) -> Result<()> {
    let cfg: GenConfig = read_json(config)?;
    let dir = g.out.clone().ok_or_else(|| Error::Usage("gen needs --out <dir>".into()))?;
    let (problem, var_model) = match (&cfg.class, &cfg.var_model) {
        (Some(class), None) => {
            let truth = datagen::gen_truth(class, tensorreg::core::rng::derive_seed(g.seed(), &[0]))?;
            let split = cfg.split.unwrap_or(match class.class {
                datagen::ModelClass::T1 { .. } | datagen::ModelClass::T2 { .. } | datagen::ModelClass::T3 { .. } => 2,
                _ => 3,
            });
            let seed = tensorreg::core::rng::derive_seed(g.seed(), &[1]);
            (datagen::gen_problem(&truth, cfg.n, split, cfg.noise_sigma, &Design::Iid, seed)?, None)
        }
        (None, Some(model)) => {
            let model = model.clone().stabilized(cfg.auto_stabilize)?;
            let series = datagen::gen_var_series(&model, cfg.n, g.seed())?;
            (series.problem, Some(model))
        }
        _ => return Err(Error::Usage("gen config needs exactly one of `class` and `var_model`".into())),
    };
    let manifest = io::write_problem(&dir, &problem)?;
    let rep = GenReport {
        seed: g.seed(),
        class: cfg.class,
        var_model,
        n: problem.n(),
        noise_sigma: problem.noise_sigma,
        manifest,
        truth_frobenius: problem.truth.as_ref().map_or(0.0, |t| t.frobenius()),
    };
    report::emit(&rep, g.format, None)
}

#[allow(clippy::too_many_arguments)]
fn solve(
    g: &Global,
    problem: &Path,
    regularizer: &str,
    lambda: &str,
    multiplier: f64,
    c_u: f64,
    width_draws: usize,
    solver_cfg: Option<&Path>,
    estimate: Option<&Path>,
) -> Result<()> {
    let problem = io::read_problem(problem)?;
    let spec = parse_regularizer(regularizer)?;
    let config: SolverConfig = match solver_cfg {
        Some(p) => read_json(p)?,
        None => SolverConfig::default(),
    };
    let pool = run::pool(g.threads)?;
    let (lambda, width) = if lambda == "auto" {
        let w = run::gaussian_width(&spec, &problem.coefficient_shape(), width_draws, g.seed(), &pool)?;
        (lambda_rule(w.mean, problem.n(), c_u, spec.c_r(), multiplier)?, Some(w.mean))
    } else {
        let l: f64 = lambda.parse().map_err(|_| Error::Usage(format!("bad lambda `{lambda}`")))?;
        (l, None)
    };
    let result = solver::solve(&problem, &spec, lambda, &config)?;
    if let Some(p) = estimate {
        io::write_tns(p, &result.estimate)?;
    }
    let error = match &problem.truth {
        Some(t) => Some(result.estimate.sub(t).map_err(Error::Core)?.frobenius_sq()),
        None => None,
    };
    let rep = SolveReport {
        regularizer: spec,
        lambda,
        width,
        status: result.status,
        iterations: result.iterations,
        kkt_residual: result.kkt_residual,
        objective: objective(&problem, &spec, lambda, &result.estimate)?,
        objective_trace: result.objective_trace,
        error_frobenius_sq: error,
        estimate: estimate.map(Path::to_path_buf),
    };
    report::emit(&rep, g.format, g.out.as_deref())?;
    match rep.status {
        SolveStatus::Converged => Ok(()),
        s => Err(Error::NotConverged(format!("{s:?} after {} iterations, KKT residual {:e}", rep.iterations, rep.kkt_residual))),
    }
}

fn width(g: &Global, kinds: &str, shapes: &str, draws: usize) -> Result<()> {
    let kinds = kinds.split(';').filter(|s| !s.trim().is_empty()).map(parse_regularizer).collect::<Result<Vec<_>>>()?;
    let shapes = shapes.split(',').map(parse_shape).collect::<Result<Vec<_>>>()?;
    let pool = run::pool(g.threads)?;
    let rep = run::width_experiment(&kinds, &shapes, draws, g.seed(), &pool)?;
    report::emit(&rep, g.format, g.out.as_deref())
}

fn rate(g: &Global, config: &Path) -> Result<()> {
    let mut cfg: RateExperimentConfig = read_json(config)?;
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    let pool = run::pool(g.threads)?;
    let rep = run::rate_experiment(&cfg, &pool)?;
    report::emit(&rep, g.format, g.out.as_deref())
}

#[allow(clippy::too_many_arguments)]
fn packing_cmd(
    g: &Global,
    kind: &str,
    d: usize,
    delta: f64,
    budget: usize,
    s: Option<usize>,
    dims: (Option<usize>, Option<usize>, Option<usize>),
    fano_n: Option<usize>,
    c_u: f64,
    fano_delta: Option<f64>,
) -> Result<()> {
    let need = |v: Option<usize>, name: &str| v.ok_or_else(|| Error::Usage(format!("--kind {kind} needs --{name}")));
    let kind = match kind {
        "full" => PackingKind::Full,
        "sparse" => PackingKind::Sparse { s: need(s, "s")? },
        "lowrank" => PackingKind::Lowrank { d1: need(dims.0, "d1")?, d2: need(dims.1, "d2")?, r: need(dims.2, "r")? },
        other => return Err(Error::Usage(format!("unknown packing kind `{other}`"))),
    };
    let (set, complete) = match packing::hypercube_packing(d, delta, kind, budget, g.seed()) {
        Ok(set) => (set, true),
        Err(CoreError::BudgetExhausted(set)) => (set, false),
        Err(e) => return Err(e.into()),
    };
    let verification = packing::verify_packing(&set)?;
    let fano = match fano_n {
        Some(n) => {
            let fd = fano_delta.unwrap_or_else(|| packing::fano_delta(delta, c_u, n));
            Some(packing::fano_precondition_check(&set, n, c_u, fd)?)
        }
        None => None,
    };
    let rep = PackingReport { seed: g.seed(), budget, complete, log_m_per_dim: set.log_m_per_dim(), set, verification, fano };
    report::emit(&rep, g.format, g.out.as_deref())
}

fn var_extrema(g: &Global, model: &Path, grid: usize, auto_stabilize: bool) -> Result<()> {
    let model: VarModel = read_json(model)?;
    let model = model.stabilized(auto_stabilize)?;
    let extrema = datagen::var_spectral_extrema(&model, grid)?;
    let rep = VarExtremaReport { spectral_radius: model.spectral_radius(), model, extrema };
    report::emit(&rep, g.format, g.out.as_deref())
}

fn dispatch(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::Gen { config } => gen(g, &config),
        Command::Solve { problem, regularizer, lambda, multiplier, c_u, width_draws, solver, estimate } => solve(
            g,
            &problem,
            &regularizer,
            &lambda,
            multiplier,
            c_u,
            width_draws,
            solver.as_deref(),
            estimate.as_deref(),
        ),
        Command::Width { kinds, shapes, draws } => width(g, &kinds, &shapes, draws),
        Command::Rate { config } => rate(g, &config),
        Command::Packing { kind, d, delta, budget, s, d1, d2, r, fano_n, c_u, fano_delta } => {
            packing_cmd(g, &kind, d, delta, budget, s, (d1, d2, r), fano_n, c_u, fano_delta)
        }
        Command::VarExtrema { model, grid, auto_stabilize } => var_extrema(g, &model, grid, auto_stabilize),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
