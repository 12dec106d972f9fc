use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stoc_order::criteria::{self, Criterion, CriterionScore, IntegralMode, NmlRegressionForm};
use stoc_order::experiments::{emit_report, replay, run_experiment, ExperimentConfig};
use stoc_order::fisher::{fim_root, sqrt_det_fim, SqrtDet};
use stoc_order::model::{ModelFile, RootConfig, TimeSeries};
use stoc_order::qmc::{convergence_delta, integrate_sqrt_fim_with, IntegralTable};
use stoc_order::sobol::DirectionSet;
use stoc_order::Error;

const CACHE_ENV: &str = "STOC_ORDER_CACHE";

/// Order and structure selection for AR and ARMA models.
#[derive(Debug, Parser)]
#[command(name = "stoc-order", version)]
struct Cli {
    /// Maximum number of worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate |J(θ)|^{1/2} over one root-type configuration.
    Integrate(IntegrateArgs),
    /// Score candidate structures on a series and print the winner.
    Select(SelectArgs),
    /// Run one of the simulation studies.
    Experiment(ExperimentArgs),
    /// Print the Fisher information matrix of a model.
    Fisher(FisherArgs),
}

#[derive(Debug, Args)]
struct IntegrateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    m: usize,
    /// Real poles; defaults to n mod 2.
    #[arg(long)]
    n1: Option<usize>,
    /// Real zeros; defaults to m mod 2.
    #[arg(long)]
    m1: Option<usize>,
    /// Number of Sobol' points, e.g. 1e6.
    #[arg(long, value_parser = parse_points)]
    points: u64,
    /// Integral cache file (JSON); also read from STOC_ORDER_CACHE.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Direction numbers: bratley-fox or joe-kuo.
    #[arg(long, default_value = "bratley-fox", value_parser = parse_generator)]
    generator: DirectionSet,
}

#[derive(Debug, Args)]
struct SelectArgs {
    /// Series file, one value per line.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value_t = 6)]
    max_order: usize,
    #[arg(long, default_value = "nml", value_parser = parse_criterion)]
    criterion: Criterion,
    /// Score ARMA(n, m) with n, m ≥ 1 and n + m ≤ max-order instead of AR(n).
    #[arg(long)]
    arma: bool,
    /// Integral cache file; without one the bundled table is used.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Sum the integral over every root-type configuration.
    #[arg(long)]
    all_configs: bool,
    /// Add the structure code length ln k + 2 ln ln k.
    #[arg(long)]
    structure_cost: bool,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    example: Option<u8>,
    #[arg(long)]
    runs_outer: Option<usize>,
    #[arg(long)]
    runs_inner: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// CSV report path; a JSON sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Comma-separated criteria.
    #[arg(long, value_delimiter = ',', value_parser = parse_criterion)]
    criteria: Option<Vec<Criterion>>,
    /// Comma-separated AR orders (example 2) or model numbers (example 3).
    #[arg(long, value_delimiter = ',')]
    cases: Option<Vec<usize>>,
    /// Example 1 signal-to-noise ratio in dB.
    #[arg(long)]
    snr_db: Option<f64>,
    /// Example 1 without noise.
    #[arg(long, conflicts_with = "snr_db")]
    noiseless: bool,
    /// Regression criterion form: printed, halved-fit or gamma.
    #[arg(long, value_parser = parse_form)]
    nml_form: Option<NmlRegressionForm>,
    #[arg(long)]
    all_configs: bool,
    /// Integral cache file; without one the bundled table is used.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Re-run the experiment described by a JSON sidecar.
    #[arg(long, conflicts_with = "example")]
    replay: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FisherArgs {
    /// Model file (JSON, coefficient or root form).
    #[arg(long)]
    model: PathBuf,
    /// Include the noise-variance coordinate.
    #[arg(long)]
    include_sigma: bool,
}

fn parse_points(s: &str) -> Result<u64, String> {
    let v: f64 = s.parse().map_err(|_| format!("'{s}' is not a number"))?;
    if !(v.is_finite() && v.fract() == 0.0 && (1000.0..=1e12).contains(&v)) {
        return Err(format!("point count must be an integer between 1000 and 1e12, got {s}"));
    }
    Ok(v as u64)
}

fn parse_generator(s: &str) -> Result<DirectionSet, String> {
    match s {
        "bratley-fox" => Ok(DirectionSet::BratleyFox),
        "joe-kuo" => Ok(DirectionSet::JoeKuo),
        _ => Err(format!("unknown generator '{s}'")),
    }
}

fn parse_criterion(s: &str) -> Result<Criterion, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_form(s: &str) -> Result<NmlRegressionForm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure with its process exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidInput(_) | Error::Config(_) => 2,
            Error::MissingIntegral { .. } => 3,
            Error::Inadmissible(_) | Error::Degenerate(_) => 4,
            Error::Numeric(_) | Error::SingularDesign | Error::DegenerateInput(_) => 5,
            Error::Io(_) | Error::Json(_) => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        message: format!("{}: {e}", path.display()),
    }
}

fn cache_path(flag: Option<PathBuf>) -> Option<PathBuf> {
    flag.or_else(|| std::env::var_os(CACHE_ENV).map(PathBuf::from))
}

/// Table used for scoring: the given cache (a missing file reads as empty)
/// or the bundled one.
fn scoring_table(flag: Option<PathBuf>) -> Result<IntegralTable, Failure> {
    match cache_path(flag) {
        Some(p) => IntegralTable::load_or_empty(&p).map_err(|e| io_failure(&p, e)),
        None => Ok(IntegralTable::bundled()),
    }
}

fn cmd_integrate(args: IntegrateArgs) -> Result<(), Failure> {
    let config = RootConfig::new(
        args.n,
        args.m,
        args.n1.unwrap_or(args.n % 2),
        args.m1.unwrap_or(args.m % 2),
    )
    .map_err(|e| usage(e.to_string()))?;
    if config.dim() == 0 {
        return Err(usage("structure has no pole or zero parameters"));
    }
    let cache = cache_path(args.cache);
    let mut table = match &cache {
        Some(p) => IntegralTable::load_or_empty(p).map_err(|e| io_failure(p, e))?,
        None => IntegralTable::new(),
    };
    if let Some(hit) = table.get(config) {
        if hit.points >= args.points && hit.generator_version == args.generator.version() {
            println!("structure: n={} m={} n1={} m1={}", config.n, config.m, config.n1, config.m1);
            println!("cache: hit (M={}, generator {})", hit.points, hit.generator_version);
            println!("integral: {:.6}", hit.ln_integral.exp());
            println!("ln_integral: {:.9}", hit.ln_integral);
            return Ok(());
        }
    }
    let est = integrate_sqrt_fim_with(config, args.points, args.generator)?;
    println!("structure: n={} m={} n1={} m1={}", config.n, config.m, config.n1, config.m1);
    println!("points: {}", est.points);
    println!("integral: {:.6}", est.value);
    println!("ln_integral: {:.9}", est.ln_value());
    println!("skipped: {} ({:.4}%)", est.skipped, 100.0 * est.skipped_fraction());
    if est.flagged() {
        println!("warning: at least 1% of the points were skipped");
    }
    if est.points / 2 >= 1000 {
        let half = integrate_sqrt_fim_with(config, est.points / 2, args.generator)?;
        println!("delta_vs_half: {:.6}", convergence_delta(&half, &est)?);
    }
    if let Some(p) = cache {
        if !(est.value.is_finite() && est.value > 0.0) {
            return Err(Error::Numeric("integral estimate is not positive".into()).into());
        }
        table.insert(&est);
        table.save(&p).map_err(|e| io_failure(&p, e))?;
        println!("cache: stored in {}", p.display());
    }
    Ok(())
}

fn read_series(path: &Path) -> Result<TimeSeries, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    Ok(TimeSeries::from_text(&text)?)
}

fn cmd_select(args: SelectArgs) -> Result<(), Failure> {
    let series = read_series(&args.input)?;
    let table = scoring_table(args.cache)?;
    let mode = if args.all_configs {
        IntegralMode::AllConfigs
    } else {
        IntegralMode::DefaultConfig
    };
    let result = criteria::score_series(&series, args.max_order, args.criterion, args.arma, &table, mode)?;
    for (s, why) in &result.unfitted {
        eprintln!("warning: {s} not fitted: {why}");
    }
    let mut scores = result.scores;
    if args.structure_cost {
        scores = scores.into_iter().map(CriterionScore::with_structure_cost).collect();
    }
    println!("{}", CriterionScore::CSV_HEADER);
    for s in &scores {
        println!("{}", s.csv_row());
    }
    let sel = criteria::select(&scores)?;
    for s in &sel.excluded {
        eprintln!("warning: {s} excluded, score undefined");
    }
    println!("selected: {}", sel.structure);
    Ok(())
}

fn cmd_experiment(args: ExperimentArgs, jobs: Option<usize>) -> Result<(), Failure> {
    let table = scoring_table(args.cache)?;
    let report = if let Some(sidecar) = &args.replay {
        replay(sidecar, &table, jobs)?
    } else {
        let example = args.example.ok_or_else(|| usage("--example or --replay is required"))?;
        let mut cfg = ExperimentConfig::for_example(example)?;
        cfg.seed = args.seed;
        if let Some(v) = args.runs_outer {
            cfg.runs_outer = v;
        }
        if let Some(v) = args.runs_inner {
            cfg.runs_inner = v;
        }
        if let Some(v) = args.sizes {
            cfg.sample_sizes = v;
        }
        if let Some(v) = args.criteria {
            cfg.criteria = v;
        }
        if let Some(v) = args.cases {
            cfg.cases = v;
        }
        if args.noiseless {
            cfg.snr_db = None;
        } else if let Some(v) = args.snr_db {
            cfg.snr_db = Some(v);
        }
        if let Some(v) = args.nml_form {
            cfg.nml_form = v;
        }
        if args.all_configs {
            cfg.integral_mode = IntegralMode::AllConfigs;
        }
        run_experiment(&cfg, &table, jobs)?
    };
    emit_report(&report, &args.out)?;
    print!("{}", report.to_csv());
    if report.failed_fits > 0 {
        eprintln!("note: {} candidate fits failed and were excluded", report.failed_fits);
    }
    Ok(())
}

fn cmd_fisher(args: FisherArgs) -> Result<(), Failure> {
    let text = fs::read_to_string(&args.model).map_err(|e| io_failure(&args.model, e))?;
    let model = ModelFile::parse(&text)?.to_root_model()?;
    let fim = fim_root(&model, args.include_sigma);
    print!("{}", fim.to_csv());
    println!("det: {:.12e}", fim.determinant());
    match sqrt_det_fim(&model) {
        SqrtDet::Finite(v) => println!("sqrt_det_roots: {v:.12e}"),
        SqrtDet::Overflow => println!("sqrt_det_roots: inf"),
        SqrtDet::Invalid => return Err(Error::Numeric("information matrix is not positive definite".into()).into()),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let jobs = cli.jobs;
    if jobs == Some(0) {
        return Err(usage("--jobs must be at least 1"));
    }
    if let Some(j) = jobs {
        // The global pool serves integrate and select; experiments build their own.
        let _ = rayon_pool(j);
    }
    match cli.command {
        Command::Integrate(a) => cmd_integrate(a),
        Command::Select(a) => cmd_select(a),
        Command::Experiment(a) => cmd_experiment(a, jobs),
        Command::Fisher(a) => cmd_fisher(a),
    }
}

fn rayon_pool(jobs: usize) -> Result<(), String> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
