use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use haystack_core::bench::{self, gen_synthetic, select_subset, BenchReport, Selector, SweepGrid, SynthConfig, TrialOptions};
use haystack_core::objectives::{normalize_weights, KernelOptions, MixtureScaling, ObjectiveKind, ObjectiveSpec};
use haystack_core::store::{load_embeddings, manifest_path_for, normalize_label, write_embeddings, EmbeddingMatrix};
use haystack_core::{
    build_query_set, greedy_select, parse_query, subset_fraction_to_k, GreedyOptions, QueryMode, QuerySet,
    ReferenceStore, Strategy, Transform,
};

#[derive(Parser)]
#[command(name = "haystack-select", version, about = "Query-aware submodular subset selection for embedding haystacks")]
struct Cli {
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true, env = "HAYSTACK_SELECT_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select a query-relevant subset of a haystack.
    Select(Box<SelectArgs>),
    /// Run a benchmark sweep and write its report.
    Bench(BenchArgs),
    /// Write a synthetic clustered pool and reference store.
    GenSynth(GenSynthArgs),
    /// Parse a templated query and print its slots.
    ParseQuery {
        text: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    Gcmi,
    Flvmi,
    Logdet,
    Mixture,
    /// Uniform-random baseline, driven by --seed.
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScalingArg {
    Range,
    None,
}

#[derive(Args)]
struct SelectArgs {
    /// EMB1 haystack embeddings.
    #[arg(long)]
    haystack: PathBuf,
    /// Haystack manifest [default: haystack path with .json extension].
    #[arg(long)]
    haystack_manifest: Option<PathBuf>,
    /// EMB1 file of query embeddings, used as-is.
    #[arg(long, conflicts_with_all = ["query", "references"])]
    queries: Option<PathBuf>,
    /// Templated query text, resolved against --references.
    #[arg(long, requires = "references")]
    query: Option<String>,
    /// EMB1 reference store with per-row class labels.
    #[arg(long)]
    references: Option<PathBuf>,
    #[arg(long, value_parser = ["anchor", "target"], default_value = "anchor")]
    mode: String,
    /// Reference embeddings per query.
    #[arg(long, default_value_t = 1)]
    refs: usize,
    /// EMB1 file of augmented reference views appended to the query set.
    #[arg(long)]
    aug: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "gcmi")]
    objective: ObjectiveArg,
    /// Mixture weights for GCMI, FLVMI, LogDetMI; normalized to sum to 1.
    #[arg(long, value_parser = parse_weights)]
    weights: Option<[f64; 3]>,
    #[arg(long, value_enum, default_value = "range")]
    scaling: ScalingArg,
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    #[arg(long, default_value_t = haystack_core::kernel::DEFAULT_JITTER)]
    jitter: f64,
    /// Similarity transform [default: shifted for gcmi/flvmi, raw for logdet].
    #[arg(long, value_parser = ["raw", "shifted"])]
    transform: Option<String>,
    /// Subset size as a fraction of the haystack.
    #[arg(long, group = "size", required_unless_present = "k")]
    fraction: Option<f64>,
    /// Subset size.
    #[arg(long, group = "size")]
    k: Option<usize>,
    #[arg(long, value_parser = ["naive", "lazy"], default_value = "lazy")]
    strategy: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file [default: stdout].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Sweep grid JSON [default: built-in grid].
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Print the built-in grid as JSON and exit.
    #[arg(long)]
    print_grid: bool,
    /// Overrides the grid's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the grid's trials per cell.
    #[arg(long)]
    trials: Option<usize>,
    /// Report JSON; without it the report goes to stdout and the table to stderr.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Record mean selection time per cell (not byte-reproducible).
    #[arg(long)]
    timings: bool,
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long, default_value_t = 20)]
    classes: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 0.3)]
    spread: f64,
    #[arg(long, default_value_t = 50)]
    items_per_class: usize,
    #[arg(long, default_value_t = 5)]
    refs_per_class: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Writes PREFIX.emb/.json (pool) and PREFIX.refs.emb/.json (references).
    #[arg(long)]
    out: PathBuf,
}

fn parse_weights(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(parts).map_err(|p| format!("expected three comma-separated weights, got {}", p.len()))
}

/// A runtime failure, reported on stderr as JSON.
struct Failure {
    kind: &'static str,
    message: String,
}

macro_rules! failure_from {
    ($($t:ty => $kind:literal),* $(,)?) => {
        $(impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Failure { kind: $kind, message: e.to_string() }
            }
        })*
    };
}

failure_from! {
    haystack_core::StoreError => "store",
    haystack_core::QueryError => "query",
    haystack_core::ObjectiveError => "objective",
    haystack_core::SelectError => "select",
    bench::BenchError => "bench",
    serde_json::Error => "json",
    rayon::ThreadPoolBuildError => "threads",
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure { kind: "io", message: format!("{}: {e}", path.display()) }
}

fn usage_error(kind: ErrorKind, message: impl std::fmt::Display) -> ! {
    Cli::command().error(kind, message).exit()
}

fn load(path: &Path, manifest: Option<&Path>) -> Result<EmbeddingMatrix, Failure> {
    let manifest = manifest.map_or_else(|| manifest_path_for(path), Path::to_path_buf);
    Ok(load_embeddings(path, &manifest)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| io_failure(p, e)),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| io_failure(Path::new("<stdout>"), e))
        }
    }
}

fn to_json_line(v: &Value) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn selector_for(args: &SelectArgs) -> Selector {
    let kind = match args.objective {
        ObjectiveArg::Random => {
            if args.weights.is_some() {
                usage_error(ErrorKind::ArgumentConflict, "--weights only applies to --objective mixture");
            }
            return Selector::RANDOM;
        }
        ObjectiveArg::Gcmi => ObjectiveKind::Gcmi,
        ObjectiveArg::Flvmi => ObjectiveKind::Flvmi,
        ObjectiveArg::Logdet => ObjectiveKind::LogDetMi,
        ObjectiveArg::Mixture => ObjectiveKind::Mixture,
    };
    let mut spec = ObjectiveSpec::new(kind).with_lambda(args.lambda).with_eta(args.eta);
    spec.scaling = match args.scaling {
        ScalingArg::Range => MixtureScaling::SingletonRange,
        ScalingArg::None => MixtureScaling::None,
    };
    match (kind, args.weights) {
        (ObjectiveKind::Mixture, Some(w)) => match normalize_weights(w) {
            Ok(w) => spec.weights = Some(w),
            Err(e) => usage_error(ErrorKind::ValueValidation, e),
        },
        (ObjectiveKind::Mixture, None) => usage_error(ErrorKind::MissingRequiredArgument, "--objective mixture needs --weights"),
        (_, Some(_)) => usage_error(ErrorKind::ArgumentConflict, "--weights only applies to --objective mixture"),
        (_, None) => {}
    }
    Selector::Submodular(spec)
}

fn query_set(args: &SelectArgs, mode: QueryMode) -> Result<(QuerySet, Value), Failure> {
    if let Some(path) = &args.queries {
        let qs = QuerySet::from_embeddings(load(path, None)?, "queries", mode)?;
        let info = json!({ "source": path.display().to_string(), "reference_ids": qs.reference_ids() });
        return Ok((qs, info));
    }
    let Some(text) = &args.query else {
        usage_error(ErrorKind::MissingRequiredArgument, "either --queries or --query with --references is required");
    };
    let parsed = parse_query(text)?;
    let store = ReferenceStore::new(load(args.references.as_deref().expect("clap enforces --references"), None)?.normalize_rows()?)?;
    let augmented = match &args.aug {
        Some(path) => Some(augmented_rows(load(path, None)?, parsed.class_for(mode))?),
        None => None,
    };
    let qs = build_query_set(&parsed, mode, &store, args.refs, augmented.as_ref())?;
    let info = json!({
        "anchor": parsed.anchor,
        "target": parsed.target,
        "mode": mode,
        "class": qs.source_class(),
        "reference_ids": qs.reference_ids(),
        "augmented_count": qs.augmented_count(),
    });
    Ok((qs, info))
}

/// Rows of an augmentation file that belong to `class`; a file without
/// class labels is taken whole.
fn augmented_rows(m: EmbeddingMatrix, class: &str) -> Result<EmbeddingMatrix, Failure> {
    if (0..m.n()).all(|i| m.class(i).is_none()) {
        return Ok(m);
    }
    let want = normalize_label(class);
    let rows: Vec<usize> = (0..m.n()).filter(|&i| m.class(i).is_some_and(|c| normalize_label(c) == want)).collect();
    Ok(m.select_rows(&rows)?)
}

fn cmd_select(args: SelectArgs, pool: &rayon::ThreadPool) -> Result<(), Failure> {
    let selector = selector_for(&args);
    let mode: QueryMode = args.mode.parse().expect("clap restricts values");
    let ground = load(&args.haystack, args.haystack_manifest.as_deref())?.normalize_rows()?;
    let (queries, query_info) = query_set(&args, mode)?;
    let k = match (args.fraction, args.k) {
        (Some(f), None) => subset_fraction_to_k(ground.n(), f)?,
        (None, Some(k)) => k,
        _ => unreachable!("clap enforces exactly one of --fraction and --k"),
    };
    let kernel = KernelOptions {
        transform: args.transform.as_deref().map(|t| t.parse::<Transform>().expect("clap restricts values")),
        jitter: args.jitter,
        ..KernelOptions::default()
    };
    let strategy: Strategy = args.strategy.parse().expect("clap restricts values");
    let (result, scales) = pool.install(|| -> Result<_, Failure> {
        match &selector {
            Selector::Submodular(spec) => {
                let objective = spec.build::<f64>(&ground, queries.embeddings(), &kernel)?;
                let result = greedy_select(&objective, k, GreedyOptions { strategy, parallel: true })?;
                Ok((result, objective.mixture_scales()))
            }
            random => Ok(select_subset(&ground, &queries, random, k, &TrialOptions { strategy, kernel }, args.seed)?),
        }
    })?;
    let ids: Vec<&str> = result.selected.iter().map(|&i| ground.id(i)).collect();
    let mut out = json!({
        "n": ground.n(),
        "k": k,
        "truncated": result.truncated,
        "objective": selector,
        "strategy": result.strategy,
        "query": query_info,
        "ids": ids,
        "order": result.selected,
        "gains": result.gains,
        "final_value": result.final_value,
        "evaluations": result.evaluations,
    });
    if let Selector::Submodular(spec) = &selector {
        let transform = match (spec.kind, kernel.transform) {
            (ObjectiveKind::Mixture, None) => json!({
                "gcmi": ObjectiveKind::Gcmi.default_transform(),
                "flvmi": ObjectiveKind::Flvmi.default_transform(),
                "logdet": ObjectiveKind::LogDetMi.default_transform(),
            }),
            (kind, _) => json!(kernel.kernel_config(kind).transform),
        };
        out["kernel"] = json!({ "transform": transform, "jitter": kernel.jitter });
        if let Some(w) = spec.weights {
            out["weights"] = json!(w);
        }
    }
    if let Some(s) = scales {
        out["mixture_scales"] = json!(s);
    }
    emit(args.out.as_deref(), &to_json_line(&out)?)
}

fn cmd_bench(args: BenchArgs, threads: Option<usize>) -> Result<(), Failure> {
    if args.print_grid {
        return emit(None, &to_json_line(&serde_json::to_value(SweepGrid::default_grid())?)?);
    }
    let mut grid = match &args.grid {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).map_err(|e| io_failure(p, e))?)?,
        None => SweepGrid::default_grid(),
    };
    if let Some(s) = args.seed {
        grid.master_seed = s;
    }
    if let Some(t) = args.trials {
        grid.trials_per_cell = t;
    }
    let report: BenchReport = bench::run_sweep(&grid, threads, args.timings)?;
    if let Some(p) = &args.csv {
        fs::write(p, report.to_csv()).map_err(|e| io_failure(p, e))?;
    }
    match &args.out {
        Some(p) => {
            fs::write(p, report.to_json()).map_err(|e| io_failure(p, e))?;
            emit(None, &report.summary_table())
        }
        None => {
            eprint!("{}", report.summary_table());
            emit(None, &report.to_json())
        }
    }
}

fn cmd_gen_synth(args: GenSynthArgs) -> Result<(), Failure> {
    let cfg = SynthConfig {
        items_per_class: args.items_per_class,
        refs_per_class: args.refs_per_class,
        ..SynthConfig::new(args.classes, args.dim, args.spread, args.seed)
    };
    let (pool, refs) = gen_synthetic(cfg)?;
    let prefix = args.out.display().to_string();
    let pool_path = PathBuf::from(format!("{prefix}.emb"));
    let refs_path = PathBuf::from(format!("{prefix}.refs.emb"));
    write_embeddings(&pool, &pool_path, &manifest_path_for(&pool_path))?;
    write_embeddings(refs.matrix(), &refs_path, &manifest_path_for(&refs_path))?;
    let summary = json!({
        "pool": pool_path,
        "pool_manifest": manifest_path_for(&pool_path),
        "references": refs_path,
        "references_manifest": manifest_path_for(&refs_path),
        "items": pool.n(),
        "reference_items": refs.matrix().n(),
        "dimension": pool.d(),
        "classes": refs.classes().collect::<Vec<_>>(),
        "config": cfg,
    });
    emit(None, &to_json_line(&summary)?)
}

fn run(cli: Cli) -> Result<(), Failure> {
    if cli.threads == Some(0) {
        usage_error(ErrorKind::ValueValidation, "--threads must be positive");
    }
    match cli.command {
        Command::Select(args) => {
            let mut builder = rayon::ThreadPoolBuilder::new();
            if let Some(t) = cli.threads {
                builder = builder.num_threads(t);
            }
            cmd_select(*args, &builder.build()?)
        }
        Command::Bench(args) => cmd_bench(args, cli.threads),
        Command::GenSynth(args) => cmd_gen_synth(args),
        Command::ParseQuery { text } => emit(None, &to_json_line(&serde_json::to_value(parse_query(&text)?)?)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", json!({ "error": { "kind": f.kind, "message": f.message } }));
            ExitCode::from(1)
        }
    }
}
