//! Command-line surface: dataset generation, training, evaluation,
//! translation, and gradient checking.

use std::error::Error as _;
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use tree2tree::checkpoint::{self, CheckpointError};
use tree2tree::dataset::{
    corpus_stats, read_split, write_split, DatasetError, DatasetHeader, FileRecord,
};
use tree2tree::diff::Hyperparams;
use tree2tree::generator::{build_dataset, GenConfig, GenError};
use tree2tree::gradcheck::{run_full_suite, GradCheckError};
use tree2tree::model::{DecodeLimits, IndexedBinaryTree, ModelError, Variant};
use tree2tree::oracle::{translate_with, OracleMode};
use tree2tree::syntax::{join_tokens, parse_for, render_lambda, tokenize, SyntaxError};
use tree2tree::trainer::{evaluate, train, DataError, TreePair};
use tree2tree::tree::{for_to_tree, from_lcrs, to_lcrs, tree_to_lambda, TreeError};

#[derive(Parser)]
#[command(
    name = "t2t",
    version,
    about = "Tree-to-tree neural translation of FOR programs into LAMBDA terms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a program corpus and write train/dev/test dataset files.
    GenData(GenDataArgs),
    /// Train a model on a generated dataset directory.
    Train(TrainArgs),
    /// Score a checkpoint against one dataset file.
    Eval(EvalArgs),
    /// Translate one FOR program from stdin to a LAMBDA program on stdout.
    Translate(TranslateArgs),
    /// Compare every analytic gradient against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Serialize)]
struct GenDataArgs {
    /// Sampling preset.
    #[arg(long, value_parser = ["syn-s", "syn-l"], default_value = "syn-s")]
    preset: String,
    /// Training records.
    #[arg(long, default_value_t = 2000)]
    train: usize,
    /// Development records.
    #[arg(long, default_value_t = 200)]
    dev: usize,
    /// Test records.
    #[arg(long, default_value_t = 200)]
    test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct TrainArgs {
    /// Dataset directory holding train.tsv and dev.tsv.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = Variant::Full)]
    variant: Variant,
    /// Hidden and embedding width.
    #[arg(long, default_value_t = 256)]
    hidden: usize,
    /// Mini-batch size.
    #[arg(long, default_value_t = 100)]
    batch: usize,
    #[arg(long, default_value_t = 30)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint path to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Serialize)]
struct EvalArgs {
    /// Checkpoint to load.
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset file to score.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct TranslateSource {
    /// Decode with a trained checkpoint.
    #[arg(long)]
    ckpt: Option<PathBuf>,
    /// Use the reference translator.
    #[arg(long)]
    oracle: bool,
    /// Use the reference translator in its historical mode, entering loops
    /// with the step expression instead of the initializer.
    #[arg(long)]
    oracle_appendix_literal: bool,
}

#[derive(Args)]
struct TranslateArgs {
    #[command(flatten)]
    source: TranslateSource,
}

#[derive(Args, Serialize)]
struct GradcheckArgs {
    /// Hidden width for the whole-model checks.
    #[arg(long, default_value_t = 8)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("invalid dataset record: {0}")]
    Record(#[from] TreeError),
    #[error(transparent)]
    GradCheck(#[from] GradCheckError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("{0}")]
    Other(String),
}

fn model_exit_code(e: &ModelError) -> u8 {
    match e {
        ModelError::LimitExceeded { .. } => 3,
        ModelError::UnknownToken { .. } | ModelError::EosLabel => 4,
        _ => 1,
    }
}

fn exit_code(e: &CliError) -> u8 {
    match e {
        CliError::Syntax(_) => 2,
        CliError::Model(m) => model_exit_code(m),
        CliError::Data(DataError::VocabMismatch { .. }) => 4,
        CliError::Data(DataError::Model(m)) => model_exit_code(m),
        CliError::Dataset(_) | CliError::Checkpoint(_) | CliError::Record(_) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut cause = e.source();
            while let Some(c) = cause {
                eprintln!("  caused by: {c}");
                cause = c.source();
            }
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenData(args) => gen_data(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Translate(args) => cmd_translate(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    }
}

fn io_ctx(context: impl Into<String>) -> impl FnOnce(io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

fn write_config<T: Serialize>(path: &Path, command: &str, args: &T) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Echo<'a, T> {
        command: &'a str,
        #[serde(flatten)]
        args: &'a T,
    }
    let text = serde_json::to_string_pretty(&Echo { command, args })
        .map_err(|e| CliError::Other(format!("config encoding: {e}")))?;
    fs::write(path, text + "\n").map_err(io_ctx(format!("writing {}", path.display())))
}

fn gen_data(args: GenDataArgs) -> Result<(), CliError> {
    let config = GenConfig::preset(&args.preset, args.seed)
        .ok_or_else(|| CliError::Other(format!("unknown preset `{}`", args.preset)))?;
    let splits = build_dataset(&config, args.train, args.dev, args.test)?;
    fs::create_dir_all(&args.out).map_err(io_ctx(format!("creating {}", args.out.display())))?;

    let mut all = Vec::with_capacity(args.train + args.dev + args.test);
    for (name, records) in [
        ("train", &splits.train),
        ("dev", &splits.dev),
        ("test", &splits.test),
    ] {
        let file_records: Vec<FileRecord> = records.iter().map(FileRecord::from_generated).collect();
        let header = DatasetHeader::new(&args.preset, args.seed, file_records.len());
        write_split(&args.out.join(format!("{name}.tsv")), &header, &file_records)?;
        all.extend(file_records);
    }

    let mut stats_text = format!(
        "preset: {}\nseed: {}\nsplits: train {} / dev {} / test {}\n\n",
        args.preset, args.seed, args.train, args.dev, args.test
    );
    match corpus_stats(&all) {
        Some(stats) => stats_text.push_str(&stats.to_string()),
        None => stats_text.push_str("no records\n"),
    }
    let stats_path = args.out.join("stats.txt");
    fs::write(&stats_path, &stats_text)
        .map_err(io_ctx(format!("writing {}", stats_path.display())))?;
    write_config(&args.out.join("config.json"), "gen-data", &args)?;

    println!(
        "wrote {} records ({} train / {} dev / {} test) to {}",
        all.len(),
        args.train,
        args.dev,
        args.test,
        args.out.display()
    );
    print!("{stats_text}");
    Ok(())
}

fn load_pairs(path: &Path) -> Result<Vec<TreePair>, CliError> {
    let (_, records) = read_split(path)?;
    records
        .iter()
        .map(|r| r.tree_pair().map_err(CliError::from))
        .collect()
}

fn cmd_train(args: TrainArgs) -> Result<(), CliError> {
    let train_pairs = load_pairs(&args.data.join("train.tsv"))?;
    let dev_pairs = load_pairs(&args.data.join("dev.tsv"))?;
    let hyper = Hyperparams {
        batch_size: args.batch,
        hidden_dim: args.hidden,
        embedding_dim: args.hidden,
        epochs: args.epochs,
        seed: args.seed,
        ..Hyperparams::default()
    };
    let outcome = train(&train_pairs, &dev_pairs, args.variant, &hyper)?;

    checkpoint::save(&args.out, &outcome.model)?;
    let log_path = args.out.with_extension("log.jsonl");
    let mut log_text = String::new();
    for record in &outcome.log {
        let line = serde_json::to_string(record)
            .map_err(|e| CliError::Other(format!("log encoding: {e}")))?;
        log_text.push_str(&line);
        log_text.push('\n');
    }
    fs::write(&log_path, log_text).map_err(io_ctx(format!("writing {}", log_path.display())))?;
    write_config(&args.out.with_extension("config.json"), "train", &args)?;

    println!(
        "trained {} variant for {} epochs ({} mini-batches) on {} pairs",
        args.variant,
        outcome.state.epochs_run,
        outcome.state.minibatches,
        train_pairs.len()
    );
    match outcome.state.best_dev_loss {
        Some(loss) => println!("best dev loss {loss:.6}"),
        None => println!("no dev split; kept the final parameters"),
    }
    println!("checkpoint: {}", args.out.display());
    println!("log: {}", log_path.display());
    Ok(())
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let model = checkpoint::load(&args.ckpt)?;
    let pairs = load_pairs(&args.data)?;
    let report = evaluate(&model, &pairs, DecodeLimits::default())?;
    println!("{report}");
    Ok(())
}

fn cmd_translate(args: TranslateArgs) -> Result<(), CliError> {
    let mut input = String::new();
    io::stdin()
        .read_to_string(&mut input)
        .map_err(io_ctx("reading standard input"))?;
    let ast = parse_for(&tokenize(&input))?;

    let target = if let Some(ckpt) = &args.source.ckpt {
        let model = checkpoint::load(ckpt)?;
        let source = IndexedBinaryTree::index_source(&to_lcrs(&for_to_tree(&ast)), model.src_vocab())?;
        let decoded = model
            .decode_greedy(&source, DecodeLimits::default())?
            .ok_or_else(|| CliError::Other("the model predicted an empty program".to_owned()))?;
        let tree = from_lcrs(&decoded)
            .map_err(|e| CliError::Other(format!("the decoded tree is malformed: {e}")))?;
        tree_to_lambda(&tree)
            .map_err(|e| CliError::Other(format!("the decoded tree is not a program: {e}")))?
    } else {
        let mode = if args.source.oracle_appendix_literal {
            OracleMode::LoopFromStep
        } else {
            OracleMode::LoopFromInit
        };
        translate_with(&ast, mode)
    };
    println!("{}", join_tokens(&render_lambda(&target)));
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> Result<(), CliError> {
    if args.dim == 0 {
        return Err(CliError::Other("--dim must be positive".to_owned()));
    }
    let report = run_full_suite(args.dim, args.seed)?;
    println!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::Other(format!(
            "gradient check failed: max relative error {:.3e} exceeds {:.0e}",
            report.max_rel_err(),
            report.tolerance
        )))
    }
}
