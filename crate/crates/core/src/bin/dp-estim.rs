//! `dp-estim`: private estimation, tuning, auditing and simulation from the
//! command line.
//!
//! Exit codes: 0 on success, 1 when the data or the environment fails,
//! 2 when the arguments or a spec file are invalid.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use dp_estim::audit::AuditSpec;
use dp_estim::sim::{run_experiment, ExperimentSpec};
use dp_estim::tuning::{response_truncation, sparsity_grid, CvOutcome};
use dp_estim::{
    data_driven_truncation, private_cv_sparsity, private_linear_regression, private_mean, private_quantile,
    private_sparse_mean, private_sparse_regression, BudgetLedger, CvConfig, CvProblem, DataMatrix, Error,
    MeanConfig, PrivacyBudget, QuantileConfig, RegressionData, Seed, TheoryConstants, Truncation,
};

#[derive(Parser)]
#[command(name = "dp-estim", version, about = "Differentially private mean and regression estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one estimator on a CSV file.
    Estimate {
        #[command(subcommand)]
        kind: EstimateKind,
    },
    /// Run a simulation experiment described by a JSON spec.
    Experiment {
        spec: PathBuf,
        /// Directory for the cell CSV and summary JSON.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Print the resolved grid and exit.
        #[arg(long)]
        dry_run: bool,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run a membership-inference audit described by a JSON spec.
    Audit {
        spec: PathBuf,
        /// Report path (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Private tuning helpers.
    Tune {
        #[command(subcommand)]
        kind: TuneKind,
    },
}

#[derive(Args)]
struct Common {
    /// Input CSV without header.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    eps: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long, env = "DP_ESTIM_SEED")]
    seed: u64,
    /// Estimate CSV path (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON sidecar path; defaults to `<out>.json` when --out is given.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Scale applied to every noise draw (0 disables noise).
    #[arg(long, default_value_t = 1.0)]
    noise_multiplier: f64,
}

#[derive(Args)]
struct RegressionArgs {
    /// Response clamp; defaults to σ√(2 ln n) with σ = 1.
    #[arg(long)]
    r: Option<f64>,
    /// Iterations.
    #[arg(long)]
    t: Option<usize>,
    /// Step size.
    #[arg(long)]
    eta: Option<f64>,
    /// Feasibility radius.
    #[arg(long)]
    c: Option<f64>,
    /// Gradient sensitivity scale.
    #[arg(long)]
    b: Option<f64>,
}

#[derive(Subcommand)]
enum EstimateKind {
    Mean {
        #[command(flatten)]
        common: Common,
        /// Clamp data entries to [-r, r].
        #[arg(long)]
        r: f64,
    },
    SparseMean {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        r: f64,
        /// Output sparsity.
        #[arg(long)]
        s: usize,
    },
    Regression {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        reg: RegressionArgs,
    },
    SparseRegression {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        reg: RegressionArgs,
        #[arg(long)]
        s: usize,
    },
}

#[derive(Args)]
struct HistogramArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    eps: f64,
    #[arg(long, env = "DP_ESTIM_SEED")]
    seed: u64,
    #[arg(long, default_value_t = -50.0, allow_negative_numbers = true)]
    lo: f64,
    #[arg(long, default_value_t = 50.0, allow_negative_numbers = true)]
    hi: f64,
    #[arg(long, default_value_t = 200)]
    bins: usize,
    #[arg(long, default_value_t = 1.0)]
    noise_multiplier: f64,
}

#[derive(Subcommand)]
enum TuneKind {
    /// Private quantile of all entries in the file.
    Quantile {
        #[command(flatten)]
        hist: HistogramArgs,
        #[arg(long)]
        q: f64,
    },
    /// Private clamp interval from the 2.5% and 97.5% quantiles.
    Truncation {
        #[command(flatten)]
        hist: HistogramArgs,
        /// Treat the last column as a regression response and use it alone.
        #[arg(long)]
        response: bool,
    },
    /// Private cross-validated choice of the sparsity level.
    CvSparsity {
        #[command(flatten)]
        common: Common,
        /// Fit sparse regression (last column is the response) instead of the sparse mean.
        #[arg(long)]
        regression: bool,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        grid_lo: usize,
        #[arg(long)]
        grid_hi: usize,
        #[arg(long, default_value_t = 1)]
        grid_step: usize,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[arg(long, allow_negative_numbers = true)]
        clip_lo: f64,
        #[arg(long, allow_negative_numbers = true)]
        clip_hi: f64,
    },
}

/// Separates spec-file problems (usage) from everything else.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(format!("i/o error: {e}"))
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Estimate { kind } => estimate(kind),
        Command::Experiment {
            spec,
            out_dir,
            dry_run,
            jobs,
        } => experiment(&spec, &out_dir, dry_run, jobs),
        Command::Audit { spec, out } => audit(&spec, out.as_deref()),
        Command::Tune { kind } => tune(kind),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Failure::Runtime(format!("cannot open {}: {e}", path.display())))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(format!("cannot create {}: {e}", path.display())))
}

fn read_matrix(path: &Path) -> CliResult<DataMatrix> {
    DataMatrix::read_csv(open(path)?).map_err(|e| Failure::Runtime(e.to_string()))
}

fn read_regression(path: &Path) -> CliResult<RegressionData> {
    RegressionData::read_csv(open(path)?).map_err(|e| Failure::Runtime(e.to_string()))
}

fn read_spec<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_reader(open(path)?).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn to_json<T: Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))
}

fn write_text(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => {
            let mut w = create(p)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn sidecar_path(common: &Common) -> Option<PathBuf> {
    common.sidecar.clone().or_else(|| {
        common.out.as_ref().map(|o| {
            let mut s = o.clone().into_os_string();
            s.push(".json");
            PathBuf::from(s)
        })
    })
}

#[derive(Serialize)]
struct Sidecar<'a, C: Serialize> {
    command: &'a str,
    input: String,
    config: C,
    budget: &'a BudgetLedger,
    balanced: bool,
    warnings: &'a [String],
}

fn emit<C: Serialize>(command: &str, common: &Common, config: C, est: &dp_estim::Estimate) -> CliResult<()> {
    let mut buf = Vec::new();
    DataMatrix::new(1, est.value.len(), est.value.clone())?.write_csv(&mut buf)?;
    write_text(common.out.as_deref(), &String::from_utf8_lossy(&buf))?;
    if let Some(path) = sidecar_path(common) {
        let sidecar = Sidecar {
            command,
            input: common.input.display().to_string(),
            config,
            budget: &est.budget,
            balanced: est.budget.is_balanced(),
            warnings: &est.warnings,
        };
        write_text(Some(&path), &to_json(&sidecar)?)?;
    }
    for w in &est.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn estimate(kind: EstimateKind) -> CliResult<()> {
    match kind {
        EstimateKind::Mean { common, r } => {
            let x = read_matrix(&common.input)?;
            let cfg = MeanConfig::new(
                Truncation::symmetric(r)?,
                PrivacyBudget::new(common.eps, common.delta)?,
                Seed(common.seed),
            )
            .noise_multiplier(common.noise_multiplier);
            let est = private_mean(&x, &cfg)?;
            emit("estimate mean", &common, &cfg, &est)
        }
        EstimateKind::SparseMean { common, r, s } => {
            let x = read_matrix(&common.input)?;
            let cfg = MeanConfig::new(
                Truncation::symmetric(r)?,
                PrivacyBudget::new(common.eps, common.delta)?,
                Seed(common.seed),
            )
            .sparse(s)
            .noise_multiplier(common.noise_multiplier);
            let est = private_sparse_mean(&x, &cfg)?;
            emit("estimate sparse-mean", &common, &cfg, &est)
        }
        EstimateKind::Regression { common, reg } => {
            let data = read_regression(&common.input)?;
            let (truncation, budget) = regression_inputs(&common, &reg, data.n())?;
            let mut cfg = TheoryConstants::default()
                .dense_config(data.n(), data.d(), truncation, budget, Seed(common.seed))
                .noise_multiplier(common.noise_multiplier);
            apply_overrides(&mut cfg, &reg);
            let (est, _) = private_linear_regression(&data, &cfg)?;
            emit("estimate regression", &common, &cfg, &est)
        }
        EstimateKind::SparseRegression { common, reg, s } => {
            let data = read_regression(&common.input)?;
            let (truncation, budget) = regression_inputs(&common, &reg, data.n())?;
            let mut cfg = TheoryConstants::default()
                .sparse_config_with(data.n(), s, truncation, budget, Seed(common.seed))
                .noise_multiplier(common.noise_multiplier);
            apply_overrides(&mut cfg, &reg);
            let (est, _) = private_sparse_regression(&data, &cfg)?;
            emit("estimate sparse-regression", &common, &cfg, &est)
        }
    }
}

fn regression_inputs(common: &Common, reg: &RegressionArgs, n: usize) -> CliResult<(Truncation, PrivacyBudget)> {
    let truncation = match reg.r {
        Some(r) => Truncation::symmetric(r)?,
        None => TheoryConstants::response_truncation(1.0, n)?,
    };
    Ok((truncation, PrivacyBudget::new(common.eps, common.delta)?))
}

fn apply_overrides(cfg: &mut dp_estim::RegressionConfig, reg: &RegressionArgs) {
    if let Some(t) = reg.t {
        cfg.iterations = t;
    }
    if let Some(eta) = reg.eta {
        cfg.eta0 = eta;
    }
    if let Some(c) = reg.c {
        cfg.radius = c;
        cfg.norm_bound = c;
    }
    if let Some(b) = reg.b {
        cfg.b = b;
    }
}

fn experiment(path: &Path, out_dir: &Path, dry_run: bool, jobs: Option<usize>) -> CliResult<()> {
    let spec: ExperimentSpec = read_spec(path)?;
    let grid = spec.resolved_grid()?;
    if dry_run {
        println!("{:>8} {:>8} {:>14} {:>6}", "n", "d", "delta", "reps");
        for (n, d, delta) in grid {
            println!("{n:>8} {d:>8} {delta:>14.6e} {:>6}", spec.reps);
        }
        return Ok(());
    }
    if jobs == Some(0) {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let result = run_experiment(&spec, jobs)?;
    std::fs::create_dir_all(out_dir)?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("experiment");
    let csv_path = out_dir.join(format!("{stem}_cells.csv"));
    let json_path = out_dir.join(format!("{stem}_summary.json"));
    let mut w = create(&csv_path)?;
    result.write_cells_csv(&mut w)?;
    w.flush()?;
    write_text(Some(&json_path), &result.summary_json()?)?;
    print!("{}", result.summary_table());
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn audit(path: &Path, out: Option<&Path>) -> CliResult<()> {
    let spec: AuditSpec = read_spec(path)?;
    let report = spec.run()?;
    let text = to_json(&report)?;
    match out {
        Some(p) => {
            write_text(Some(p), &text)?;
            println!("z = {}", report.z);
        }
        None => {
            println!("{text}");
            eprintln!("z = {}", report.z);
        }
    }
    Ok(())
}

fn histogram_config(h: &HistogramArgs) -> QuantileConfig {
    QuantileConfig::new(h.lo, h.hi, h.bins).noise_multiplier(h.noise_multiplier)
}

fn tune(kind: TuneKind) -> CliResult<()> {
    match kind {
        TuneKind::Quantile { hist, q } => {
            let x = read_matrix(&hist.input)?;
            let budget = PrivacyBudget::pure(hist.eps)?;
            let mut cfg = histogram_config(&hist);
            cfg.group_size = x.d();
            let value = private_quantile(x.values(), q, budget, &cfg, Seed(hist.seed))?;
            println!("{value:?}");
            Ok(())
        }
        TuneKind::Truncation { hist, response } => {
            let budget = PrivacyBudget::pure(hist.eps)?;
            let cfg = histogram_config(&hist);
            let (t, ledger) = if response {
                response_truncation(&read_regression(&hist.input)?, budget, &cfg, Seed(hist.seed))?
            } else {
                data_driven_truncation(&read_matrix(&hist.input)?, budget, &cfg, Seed(hist.seed))?
            };
            let out = json!({
                "lo": t.lo(),
                "hi": t.hi(),
                "budget": ledger,
                "balanced": ledger.is_balanced(),
            });
            println!("{}", to_json(&out)?);
            Ok(())
        }
        TuneKind::CvSparsity {
            common,
            regression,
            r,
            grid_lo,
            grid_hi,
            grid_step,
            folds,
            clip_lo,
            clip_hi,
        } => {
            let cfg = CvConfig::new(sparsity_grid(grid_lo, grid_hi, grid_step)?, folds, (clip_lo, clip_hi))
                .noise_multiplier(common.noise_multiplier);
            let budget = PrivacyBudget::new(common.eps, common.delta)?;
            let truncation = Truncation::symmetric(r)?;
            let seed = Seed(common.seed);
            let outcome: CvOutcome = if regression {
                let data = read_regression(&common.input)?;
                let problem = CvProblem::SparseRegression {
                    data: &data,
                    truncation,
                    constants: TheoryConstants::default(),
                };
                private_cv_sparsity(&problem, &cfg, budget, seed)?
            } else {
                let data = read_matrix(&common.input)?;
                let problem = CvProblem::SparseMean { data: &data, truncation };
                private_cv_sparsity(&problem, &cfg, budget, seed)?
            };
            let out = json!({
                "s": outcome.s,
                "scores": outcome.scores,
                "budget": outcome.budget,
                "balanced": outcome.budget.is_balanced(),
            });
            write_text(common.out.as_deref(), &(to_json(&out)? + "\n"))
        }
    }
}
