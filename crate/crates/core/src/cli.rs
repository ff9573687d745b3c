//! The `a2c` command line: train, eval, similar, gradcheck, augment.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::embedding::{parse_embedding_text, EmbeddingTable};
use crate::error::Error;
use crate::io::{parse_attribute_profiles, parse_class_list, read_input, write_atomic, write_report, RunManifest};
use crate::network::{deserialize_model, serialize_model, ModelMeta, NetworkParams};
use crate::predicates::{merge_predicates, parse_predicate_csv, parse_predicate_extension_csv, PredicateMatrix};
use crate::training::{
    cross_validate, finite_diff_check, train_with, BatchSize, ObjectiveRegistry, TrainingConfig, TrainingData,
};
use crate::transform::{Identity, Transform};
use crate::zsl::{nearest_classes, ZslModel};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Parser)]
#[command(
    name = "a2c",
    version,
    about = "Zero-shot classification from attribute and class names"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Learn the word-vector transformation.
    Train(Box<TrainArgs>),
    /// Zero-shot evaluation of attribute profiles against a class list.
    Eval(EvalArgs),
    /// Rank pool classes by similarity to a query class.
    Similar(SimilarArgs),
    /// Compare analytic and finite-difference gradients on a seeded instance.
    Gradcheck(GradcheckArgs),
    /// Append predicate-only classes to a predicate matrix.
    Augment(AugmentArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    mode: String,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    predicates: Option<PathBuf>,
    #[arg(long)]
    profiles: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// History CSV path [default: <out>.history.csv]
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 32)]
    outdim: usize,
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    /// Minibatch size, or `full`.
    #[arg(long, default_value = "64", value_parser = parse_batch)]
    batch: BatchSize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Select hidden width, output width and iteration count by class-wise cross-validation.
    #[arg(long)]
    cv: bool,
    #[arg(long, default_value_t = 2)]
    folds: usize,
    #[arg(long, value_delimiter = ',')]
    hidden_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    outdim_grid: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    checkpoints: Vec<usize>,
    /// Margin for every class pair when no predicate matrix is given.
    #[arg(long, conflicts_with = "predicates")]
    const_margin: Option<f64>,
    /// Binarize predicate cells at this threshold instead of requiring 0/1.
    #[arg(long)]
    binarize: Option<f64>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Model file, or `identity` for untransformed vectors.
    #[arg(long)]
    model: String,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    profiles: PathBuf,
    #[arg(long)]
    classes: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimilarArgs {
    #[arg(long)]
    model: String,
    #[arg(long)]
    embeddings: PathBuf,
    #[arg(long)]
    query: String,
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long)]
    mode: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct AugmentArgs {
    #[arg(long)]
    base: PathBuf,
    #[arg(long)]
    extra: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    binarize: Option<f64>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

fn parse_batch(s: &str) -> Result<BatchSize, String> {
    if s.eq_ignore_ascii_case("full") {
        return Ok(BatchSize::Full);
    }
    match s.parse::<usize>() {
        Ok(0) | Err(_) => Err(format!("expected a positive integer or `full`, got `{s}`")),
        Ok(n) => Ok(BatchSize::Size(n)),
    }
}

enum Failure {
    Usage(String),
    Data(Error),
    /// A check that ran to completion but did not pass.
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CmdResult = Result<(), Failure>;

/// Parses `argv` (including the program name) and runs the command.
/// Returns the process exit status.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(*a),
        Command::Eval(a) => eval(a),
        Command::Similar(a) => similar(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Augment(a) => augment(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("{e}");
            EXIT_DATA
        }
        Err(Failure::Check(msg)) => {
            eprintln!("{msg}");
            EXIT_DATA
        }
    }
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    path.with_file_name(name)
}

/// Writes the manifest to `explicit`, else next to `primary`, else to stderr.
fn emit_manifest(
    mut manifest: RunManifest,
    started: Instant,
    explicit: Option<&Path>,
    primary: Option<&Path>,
) -> Result<(), Error> {
    manifest.wall_clock_seconds = started.elapsed().as_secs_f64();
    let target = explicit
        .map(Path::to_path_buf)
        .or_else(|| primary.map(|p| sibling(p, ".manifest.json")));
    let json = manifest.to_json()?;
    match target {
        Some(path) => write_atomic(&path, &json),
        None => std::io::stderr().write_all(&json).map_err(Error::from),
    }
}

fn load_embeddings(path: &Path, manifest: &mut RunManifest) -> Result<EmbeddingTable, Error> {
    let bytes = read_input(path)?;
    manifest.record_input(path, &bytes);
    let parsed = parse_embedding_text(bytes.as_slice(), None)?;
    for w in &parsed.warnings {
        eprintln!("warning: {}: {w}", path.display());
    }
    Ok(parsed.table)
}

fn load_transform(spec: &str, manifest: &mut RunManifest) -> Result<Box<dyn Transform>, Error> {
    if spec == "identity" {
        return Ok(Box::new(Identity));
    }
    let path = Path::new(spec);
    let bytes = read_input(path)?;
    manifest.record_input(path, &bytes);
    let (params, _meta) = deserialize_model(&bytes)?;
    Ok(Box::new(params))
}

fn load_predicates(path: &Path, threshold: Option<f64>, manifest: &mut RunManifest) -> Result<PredicateMatrix, Error> {
    let bytes = read_input(path)?;
    manifest.record_input(path, &bytes);
    parse_predicate_csv(bytes.as_slice(), threshold)
}

fn train(args: TrainArgs) -> CmdResult {
    let started = Instant::now();
    let registry = ObjectiveRegistry::with_builtins();
    let objective = registry.get(&args.mode).map_err(|_| {
        let known: Vec<&str> = registry.names().collect();
        Failure::Usage(format!(
            "--mode: unknown value `{}` (expected one of {})",
            args.mode,
            known.join(", ")
        ))
    })?;
    if args.cv && args.folds < 2 {
        return Err(Failure::Usage("--folds: need at least 2".into()));
    }

    let mut manifest = RunManifest::new("train");
    let table = load_embeddings(&args.embeddings, &mut manifest)?;
    let predicates = args
        .predicates
        .as_deref()
        .map(|p| load_predicates(p, args.binarize, &mut manifest))
        .transpose()?;
    let profiles = match &args.profiles {
        Some(path) => {
            let bytes = read_input(path)?;
            manifest.record_input(path, &bytes);
            let expected = predicates.as_ref().map(|p| p.attribute_names());
            Some(parse_attribute_profiles(bytes.as_slice(), expected)?)
        }
        None => None,
    };
    let attr_names = match (&predicates, &profiles) {
        (Some(p), _) => p.attribute_names().to_vec(),
        (None, Some((attrs, _))) => attrs.clone(),
        (None, None) if objective.needs_profiles() => return Err(Error::MissingProfiles.into()),
        (None, None) => return Err(Error::MissingPredicates.into()),
    };
    let data = TrainingData {
        class_table: &table,
        attr_table: &table,
        attr_names,
        predicates,
        profiles: profiles.map(|(_, p)| p),
    };

    let mut config = TrainingConfig {
        mode: objective.name().to_string(),
        lr: args.lr,
        iterations: args.iters,
        batch_size: args.batch,
        hidden: args.hidden,
        outdim: args.outdim,
        lambda: args.lambda,
        seed: args.seed,
        cv_folds: args.folds,
        hidden_grid: args.hidden_grid.clone(),
        outdim_grid: args.outdim_grid.clone(),
        checkpoints: args.checkpoints.clone(),
        ..TrainingConfig::default()
    };
    if let Some(delta) = args.const_margin {
        config.const_margin = delta;
    }
    config.validate()?;

    let (params, history) = if args.cv {
        let outcome = cross_validate(&config, &data)?;
        eprintln!(
            "cv: hidden={} outdim={} iterations={} mean accuracy {:.4}",
            outcome.hidden, outcome.outdim, outcome.iterations, outcome.mean_accuracy
        );
        config.hidden = outcome.hidden;
        config.outdim = outcome.outdim;
        config.iterations = outcome.iterations;
        let mut observer = |iteration: usize, _: &NetworkParams| Ok(outcome.selected_accuracy_at(iteration));
        train_with(&registry, &config, &data, &mut observer)?
    } else {
        train_with(&registry, &config, &data, &mut |_, _| Ok(None))?
    };

    let meta = ModelMeta {
        mode: config.mode.clone(),
        seed: config.seed,
        iterations: config.iterations as u64,
        embedding_dim: table.dim() as u64,
    };
    write_atomic(&args.out, &serialize_model(&params, &meta))?;
    let history_path = args
        .history
        .clone()
        .unwrap_or_else(|| sibling(&args.out, ".history.csv"));
    let mut csv = Vec::new();
    history.write_csv(&mut csv)?;
    write_atomic(&history_path, &csv)?;

    if let (Some(first), Some(last)) = (history.first(), history.last()) {
        println!(
            "objective {} -> {} after {} iterations",
            first.objective, last.objective, last.iteration
        );
    }

    manifest.seed = Some(config.seed);
    manifest.set("mode", config.mode.as_str());
    manifest.set("lr", config.lr);
    manifest.set("iterations", config.iterations);
    manifest.set(
        "batch",
        match config.batch_size {
            BatchSize::Full => serde_json::Value::from("full"),
            BatchSize::Size(b) => serde_json::Value::from(b),
        },
    );
    manifest.set("hidden", config.hidden);
    manifest.set("outdim", config.outdim);
    manifest.set("lambda", config.lambda);
    manifest.set("cv", args.cv);
    if args.cv {
        manifest.set("folds", config.cv_folds);
        manifest.set("hidden_grid", config.hidden_grid.clone());
        manifest.set("outdim_grid", config.outdim_grid.clone());
    }
    manifest.set("checkpoints", config.checkpoints.clone());
    if data.predicates.is_none() {
        manifest.set("const_margin", config.const_margin);
    }
    manifest.outputs = vec![args.out.clone(), history_path];
    emit_manifest(manifest, started, args.manifest.as_deref(), Some(&args.out))?;
    Ok(())
}

fn eval(args: EvalArgs) -> CmdResult {
    let started = Instant::now();
    let mut manifest = RunManifest::new("eval");
    let transform = load_transform(&args.model, &mut manifest)?;
    let table = load_embeddings(&args.embeddings, &mut manifest)?;
    let bytes = read_input(&args.profiles)?;
    manifest.record_input(&args.profiles, &bytes);
    let (attrs, profiles) = parse_attribute_profiles(bytes.as_slice(), None)?;
    let bytes = read_input(&args.classes)?;
    manifest.record_input(&args.classes, &bytes);
    let classes = parse_class_list(bytes.as_slice())?;

    let model = ZslModel::new(transform.as_ref(), &table, &table, &attrs)?;
    let report = model.evaluate(&profiles, &classes)?;
    write_report(&report, &args.report)?;
    println!(
        "normalized accuracy {} over {} images",
        report.normalized_accuracy, report.n_images
    );

    manifest.set("model", args.model.as_str());
    manifest.set("transform", transform.name());
    manifest.outputs = vec![args.report.clone()];
    emit_manifest(manifest, started, args.manifest.as_deref(), Some(&args.report))?;
    Ok(())
}

fn similar(args: SimilarArgs) -> CmdResult {
    let started = Instant::now();
    let mut manifest = RunManifest::new("similar");
    let transform = load_transform(&args.model, &mut manifest)?;
    let table = load_embeddings(&args.embeddings, &mut manifest)?;
    let bytes = read_input(&args.pool)?;
    manifest.record_input(&args.pool, &bytes);
    let pool = parse_class_list(bytes.as_slice())?;

    let ranked = nearest_classes(transform.as_ref(), &table, &args.query, &pool, args.k)?;
    for (name, sim) in &ranked {
        println!("{name}\t{sim}");
    }

    manifest.set("model", args.model.as_str());
    manifest.set("query", args.query.as_str());
    manifest.set("k", args.k);
    emit_manifest(manifest, started, args.manifest.as_deref(), None)?;
    Ok(())
}

fn gradcheck(args: GradcheckArgs) -> CmdResult {
    let started = Instant::now();
    let registry = ObjectiveRegistry::with_builtins();
    if registry.get(&args.mode).is_err() {
        return Err(Failure::Usage(format!("--mode: unknown value `{}`", args.mode)));
    }
    let err = finite_diff_check(args.seed, &args.mode)?;
    println!("max relative error {err:e}");

    let mut manifest = RunManifest::new("gradcheck");
    manifest.seed = Some(args.seed);
    manifest.set("mode", args.mode.to_ascii_lowercase());
    manifest.set("max_relative_error", err);
    emit_manifest(manifest, started, args.manifest.as_deref(), None)?;
    if err < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "gradient check failed: {err:e} >= {GRADCHECK_TOLERANCE:e}"
        )))
    }
}

fn augment(args: AugmentArgs) -> CmdResult {
    let started = Instant::now();
    let mut manifest = RunManifest::new("augment");
    let base = load_predicates(&args.base, args.binarize, &mut manifest)?;
    let bytes = read_input(&args.extra)?;
    manifest.record_input(&args.extra, &bytes);
    let extra = parse_predicate_extension_csv(bytes.as_slice(), args.binarize)?;
    let merged = merge_predicates(&base, &extra)?;
    let mut out = Vec::new();
    merged.write_csv(&mut out)?;
    write_atomic(&args.out, &out)?;
    println!(
        "{} classes x {} attributes",
        merged.num_classes(),
        merged.num_attributes()
    );

    manifest.outputs = vec![args.out.clone()];
    emit_manifest(manifest, started, args.manifest.as_deref(), Some(&args.out))?;
    Ok(())
}
