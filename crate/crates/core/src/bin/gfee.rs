use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use gfee::baselines::{best_d_for, SpectralConfig, DEFAULT_D_MAX};
use gfee::classifier::{cross_validate, ErrorReport, EvalProtocol};
use gfee::encoder::fuse;
use gfee::experiments::{nested_prefixes, run_simulation, verify_properties, Method, SimulationConfig, DEFAULT_N_GRID};
use gfee::graph::{read_edgelist, read_labels, validate_collection, GraphCollection, LabelVector};
use gfee::ingest::load_manifest;
use gfee::sbm::BlockSpec;

#[derive(Parser)]
#[command(name = "gfee", version, about = "Graph fusion encoder embedding for multiple graphs on one vertex set")]
struct Cli {
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed a graph collection with its labels.
    Embed(EmbedArgs),
    /// Cross-validated 5-NN error of an embedding.
    Evaluate(EvaluateArgs),
    /// Monte-Carlo error table over a grid of sample sizes.
    Simulate(SimArgs),
    /// Same as simulate, comparing GFEE with the spectral baselines by default.
    Baseline(SimArgs),
    /// Convergence, identifiability and nested-subset checks for a block spec.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct InputArgs {
    /// Edge-list files, one per graph (1-based `u v [w]` lines).
    #[arg(long, num_args = 1.., required_unless_present = "manifest", conflicts_with = "manifest")]
    graphs: Vec<PathBuf>,

    /// Label file, one label per line (0 = unknown).
    #[arg(long, required_unless_present = "manifest")]
    labels: Option<PathBuf>,

    /// Treat edge lists as directed.
    #[arg(long)]
    directed: bool,

    /// JSON dataset manifest instead of --graphs/--labels.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmbedFormat {
    Csv,
    Bin,
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    input: InputArgs,

    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "csv")]
    format: EmbedFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportFormat {
    Json,
    Csv,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    input: InputArgs,

    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(2..))]
    folds: u32,

    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..))]
    replicates: u32,

    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    knn: u32,

    #[arg(long)]
    seed: Option<u64>,

    /// 1-based graph indices to fuse, e.g. `--subset 1,2` (default: all).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    subset: Vec<usize>,

    #[arg(long, default_value = "gfee", value_parser = parse_method)]
    method: Method,

    /// Largest spectral dimension swept (spectral methods only).
    #[arg(long)]
    dmax: Option<usize>,

    #[arg(long, value_enum, default_value = "json")]
    format: ReportFormat,
}

#[derive(Args)]
struct SpecArgs {
    /// Built-in simulation.
    #[arg(long, value_parser = ["sim1", "sim2", "sim3"], required_unless_present = "spec", conflicts_with = "spec")]
    sim: Option<String>,

    /// Block spec JSON file.
    #[arg(long)]
    spec: Option<PathBuf>,

    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    n_grid: Vec<usize>,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u32).range(1..))]
    replicates: u32,

    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(2..))]
    folds: u32,

    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u32).range(1..))]
    knn: u32,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    spec: SpecArgs,

    /// Methods to run, repeatable or comma-separated.
    #[arg(long, value_delimiter = ',', num_args = 1.., value_parser = parse_method)]
    method: Vec<Method>,

    #[arg(long)]
    dmax: Option<usize>,

    /// Output CSV (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,

    /// Also write gnuplot data blocks here.
    #[arg(long)]
    gnuplot: Option<PathBuf>,

    /// Omit the wall-time column so seeded runs are byte-identical.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    spec: SpecArgs,

    /// Allowed increase in error when a graph is added.
    #[arg(long, default_value_t = 0.01)]
    slack: f64,

    #[arg(long, value_enum, default_value = "json")]
    format: VerifyFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifyFormat {
    Json,
    Text,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e: gfee::Error| e.to_string())
}

/// Input problems exit with 2, everything else with 1.
enum Failure {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

type CliResult<T> = Result<T, Failure>;

fn input<T>(r: anyhow::Result<T>) -> CliResult<T> {
    r.map_err(Failure::Input)
}

fn runtime<T>(r: anyhow::Result<T>) -> CliResult<T> {
    r.map_err(Failure::Runtime)
}

fn seed_or_draw(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u64>();
        eprintln!("seed: {s}");
        s
    })
}

fn output(path: &Option<PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_input(args: &InputArgs) -> CliResult<(GraphCollection, LabelVector)> {
    if let Some(m) = &args.manifest {
        let ds = input(load_manifest(m).with_context(|| format!("loading manifest {}", m.display())))?;
        if ds.removed > 0 {
            eprintln!("removed {} unmatched vertices", ds.removed);
        }
        if ds.negative_similarities > 0 {
            eprintln!("note: {} negative similarity entries passed through", ds.negative_similarities);
        }
        return Ok((ds.collection, ds.labels));
    }
    let labels_path = args.labels.as_ref().expect("clap requires labels");
    let labels = input(read_labels(labels_path).with_context(|| format!("reading labels {}", labels_path.display())))?;
    let graphs = args
        .graphs
        .iter()
        .map(|p| read_edgelist(p, Some(labels.len()), args.directed).with_context(|| format!("reading {}", p.display())))
        .collect::<anyhow::Result<Vec<_>>>();
    Ok((GraphCollection::from_edgelists(input(graphs)?), labels))
}

fn validated(collection: &GraphCollection, labels: &LabelVector) -> CliResult<()> {
    input(validate_collection(collection, labels).into_result().map_err(anyhow::Error::from))
}

fn embed(args: EmbedArgs) -> CliResult<()> {
    let (collection, labels) = load_input(&args.input)?;
    validated(&collection, &labels)?;
    let emb = input(fuse(&collection, &labels).map_err(anyhow::Error::from))?;
    let summary = format!("n={} M={} K={} dims={}", emb.n(), emb.m, emb.k, emb.dim());
    runtime((|| {
        let mut out = output(&args.out)?;
        match args.format {
            EmbedFormat::Csv => emb.write_csv(&mut out)?,
            EmbedFormat::Bin => emb.write_bin(&mut out)?,
        }
        out.flush()?;
        Ok(())
    })())?;
    if args.out.is_some() {
        println!("{summary}");
    } else {
        eprintln!("{summary}");
    }
    Ok(())
}

#[derive(Serialize)]
struct Evaluation<'a> {
    method: &'static str,
    graphs: Vec<usize>,
    best_d: Option<usize>,
    folds: u32,
    replicates: u32,
    knn: u32,
    seed: u64,
    #[serde(flatten)]
    report: &'a ErrorReport,
}

fn evaluate(args: EvaluateArgs) -> CliResult<()> {
    let (collection, labels) = load_input(&args.input)?;
    validated(&collection, &labels)?;
    let graphs: Vec<usize> = if args.subset.is_empty() { (1..=collection.len()).collect() } else { args.subset.clone() };
    if let Some(bad) = graphs.iter().find(|&&g| g == 0 || g > collection.len()) {
        return Err(Failure::Input(anyhow!("--subset {bad} outside 1..={}", collection.len())));
    }
    let zero_based: Vec<usize> = graphs.iter().map(|g| g - 1).collect();
    let chosen = input(collection.subset(&zero_based).map_err(anyhow::Error::from))?;
    if args.method == Method::Gfee && args.dmax.is_some() {
        eprintln!("warning: --dmax has no effect with --method gfee");
    }
    let seed = seed_or_draw(args.seed);
    let protocol = EvalProtocol::new(args.folds as usize, args.replicates as usize, args.knn as usize, seed);
    let (best_d, report) = runtime(
        match args.method.spectral() {
            None => cross_validate(&chosen, &labels, &protocol).map(|r| (None, r)),
            Some(sm) => best_d_for(&chosen, &labels, &SpectralConfig::new(sm, args.dmax.unwrap_or(DEFAULT_D_MAX)), &protocol)
                .map(|(d, r)| (Some(d), r)),
        }
        .map_err(anyhow::Error::from),
    )?;
    let eval = Evaluation {
        method: args.method.name(),
        graphs,
        best_d,
        folds: args.folds,
        replicates: args.replicates,
        knn: args.knn,
        seed,
        report: &report,
    };
    runtime((|| {
        let mut out = io::stdout().lock();
        match args.format {
            ReportFormat::Json => writeln!(out, "{}", serde_json::to_string_pretty(&eval)?)?,
            ReportFormat::Csv => {
                writeln!(out, "method,graphs,best_d,mean_error,std_error,folds,replicates,knn,seed")?;
                writeln!(
                    out,
                    "{},{},{},{:.6},{:.6},{},{},{},{}",
                    eval.method,
                    eval.graphs.iter().map(|g| g.to_string()).collect::<Vec<_>>().join("+"),
                    best_d.map_or(String::new(), |d| d.to_string()),
                    report.mean_error,
                    report.std_error,
                    eval.folds,
                    eval.replicates,
                    eval.knn,
                    seed
                )?;
            }
        }
        Ok(())
    })())
}

fn load_spec(args: &SpecArgs) -> CliResult<(String, BlockSpec)> {
    match (&args.sim, &args.spec) {
        (Some(name), _) => Ok((name.clone(), BlockSpec::named(name).expect("clap restricts names"))),
        (None, Some(path)) => {
            let spec = input(BlockSpec::load(path).with_context(|| format!("loading spec {}", path.display())))?;
            let name = path.file_stem().map_or("spec".into(), |s| s.to_string_lossy().into_owned());
            Ok((name, spec))
        }
        (None, None) => unreachable!("clap requires --sim or --spec"),
    }
}

fn sim_config(args: &SpecArgs) -> CliResult<SimulationConfig> {
    let (name, spec) = load_spec(args)?;
    let mut cfg = SimulationConfig::new(&name, spec);
    cfg.n_grid = if args.n_grid.is_empty() { DEFAULT_N_GRID.to_vec() } else { args.n_grid.clone() };
    if cfg.n_grid.iter().any(|&n| n < 2) {
        return Err(Failure::Input(anyhow!("--n-grid values must be at least 2")));
    }
    cfg.seed = seed_or_draw(args.seed);
    cfg.replicates = args.replicates as usize;
    cfg.folds = args.folds as usize;
    cfg.neighbors = args.knn as usize;
    Ok(cfg)
}

fn simulate(args: SimArgs, default_methods: &[Method]) -> CliResult<()> {
    let mut cfg = sim_config(&args.spec)?;
    cfg.methods = if args.method.is_empty() { default_methods.to_vec() } else { args.method.clone() };
    cfg.subsets = nested_prefixes(cfg.spec.m());
    if let Some(d) = args.dmax {
        if cfg.methods.iter().all(|m| *m == Method::Gfee) {
            eprintln!("warning: --dmax has no effect with --method gfee");
        }
        if d == 0 {
            return Err(Failure::Input(anyhow!("--dmax must be at least 1")));
        }
        cfg.d_max = d;
    }
    let table = runtime(run_simulation(&cfg).map_err(anyhow::Error::from))?;
    runtime((|| {
        let mut out = output(&args.out)?;
        table.write_csv(&mut out, !args.no_timing)?;
        out.flush()?;
        if let Some(p) = &args.gnuplot {
            let mut g = BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?);
            table.write_gnuplot(&mut g)?;
            g.flush()?;
        }
        Ok(())
    })())
}

fn verify(args: VerifyArgs) -> CliResult<()> {
    let cfg = sim_config(&args.spec)?;
    let report = runtime(verify_properties(&cfg, args.slack).map_err(anyhow::Error::from))?;
    match args.format {
        VerifyFormat::Json => println!("{}", report.to_json()),
        VerifyFormat::Text => print!("{}", report.summary()),
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        runtime(
            rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.max(1))
                .build_global()
                .map_err(anyhow::Error::from),
        )?;
    }
    match cli.command {
        Command::Embed(a) => embed(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Simulate(a) => simulate(a, &[Method::Gfee]),
        Command::Baseline(a) => simulate(a, &[Method::Gfee, Method::Omnibus, Method::Mase, Method::Use]),
        Command::Verify(a) => verify(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
