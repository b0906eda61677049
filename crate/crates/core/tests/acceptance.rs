//! Release acceptance suite. Each test covers one numbered shipping
//! criterion and prints a single PASS or FAIL line for it.

use std::io::Write as _;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tempfile::tempdir;
use tree2tree::diff::Hyperparams;
use tree2tree::generator::{build_dataset, sample_program, DatasetRecord, GenConfig};
use tree2tree::gradcheck;
use tree2tree::model::{DecodeLimits, Variant};
use tree2tree::oracle::{self, OracleMode};
use tree2tree::syntax::{join_tokens, parse_for, render_for, tokenize};
use tree2tree::trainer::{self, TreePair};
use tree2tree::tree::{
    deserialize_dfs, for_to_tree, from_lcrs, lambda_to_tree, serialize_dfs, to_lcrs,
};

fn conclude(number: u32, label: &str, detail: &str, failures: &[String]) {
    let suffix = if detail.is_empty() {
        String::new()
    } else {
        format!(" [{detail}]")
    };
    if failures.is_empty() {
        println!("criterion {number} ({label}): PASS{suffix}");
    } else {
        println!(
            "criterion {number} ({label}): FAIL ({}){suffix}",
            failures.join("; ")
        );
    }
    assert!(failures.is_empty(), "{}", failures.join("; "));
}

fn tree_pairs(records: &[DatasetRecord]) -> Vec<TreePair> {
    records
        .iter()
        .map(|r| TreePair {
            source: for_to_tree(&r.source_ast),
            target: lambda_to_tree(&r.target_ast),
        })
        .collect()
}

const FIGURE_SOURCE: &str =
    "for i = 1 ; i < 10 ; i + 1 do if x > 1 then y = 1 else y = 2 endif endfor";
const FIGURE_TARGET: &str = "letrec f i = if i < 10 then let _ = if x > 1 then let y = 1 in () \
                             else let y = 2 in () in f i + 1 else () in f 1";
const FIGURE_TARGET_LITERAL: &str =
    "letrec f i = if i < 10 then let _ = if x > 1 then let y = 1 in () \
     else let y = 2 in () in f i + 1 else () in f i + 1";

fn run_cli(args: &[&str], stdin: Option<&str>) -> (String, String, Option<i32>) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_t2t"));
    cmd.args(args)
        .stdin(if stdin.is_some() {
            Stdio::piped()
        } else {
            Stdio::null()
        })
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    let mut child = cmd.spawn().expect("cli spawns");
    if let Some(text) = stdin {
        child
            .stdin
            .as_mut()
            .expect("stdin piped")
            .write_all(text.as_bytes())
            .expect("stdin accepts input");
    }
    let out = child.wait_with_output().expect("cli runs");
    (
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
        out.status.code(),
    )
}

#[test]
fn criterion_1_oracle_figure_example() {
    let mut failures = Vec::new();
    let (stdout, stderr, code) = run_cli(&["translate", "--oracle"], Some(FIGURE_SOURCE));
    if code != Some(0) {
        failures.push(format!("default mode exited {code:?}: {stderr}"));
    } else if stdout.trim_end() != FIGURE_TARGET {
        failures.push(format!(
            "default mode produced {:?}, wanted {FIGURE_TARGET:?}",
            stdout.trim_end()
        ));
    }
    let (stdout, stderr, code) =
        run_cli(&["translate", "--oracle-appendix-literal"], Some(FIGURE_SOURCE));
    if code != Some(0) {
        failures.push(format!("literal mode exited {code:?}: {stderr}"));
    } else if stdout.trim_end() != FIGURE_TARGET_LITERAL {
        failures.push(format!(
            "literal mode produced {:?}, wanted {FIGURE_TARGET_LITERAL:?}",
            stdout.trim_end()
        ));
    }
    conclude(1, "oracle figure example", "", &failures);
}

#[test]
fn criterion_2_gradient_suite() {
    let started = Instant::now();
    let mut failures = Vec::new();
    let mut detail = String::new();
    match gradcheck::run_full_suite(8, 0) {
        Ok(report) => {
            detail = format!(
                "max rel err {:.3e} over {} checks, {:.1}s",
                report.max_rel_err(),
                report.results.len(),
                started.elapsed().as_secs_f64()
            );
            if !report.passed() {
                for result in &report.results {
                    if result.max_rel_err >= gradcheck::TOLERANCE {
                        failures.push(format!(
                            "{}: max rel err {:.3e}",
                            result.name, result.max_rel_err
                        ));
                    }
                }
            }
        }
        Err(e) => failures.push(format!("suite failed to run: {e}")),
    }
    conclude(2, "finite-difference gradient suite", &detail, &failures);
}

#[test]
fn criterion_3_round_trip_suites() {
    let config = GenConfig::syn_s(17);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut failures = Vec::new();
    for case in 0..1000 {
        let ast = sample_program(&config, &mut rng);
        if parse_for(&render_for(&ast)) != Ok(ast.clone()) {
            failures.push(format!("case {case}: source parse/render round-trip"));
        }
        let trees = [for_to_tree(&ast), lambda_to_tree(&oracle::translate(&ast))];
        for (side, tree) in ["source", "target"].into_iter().zip(&trees) {
            if from_lcrs(&to_lcrs(tree)).as_ref() != Ok(tree) {
                failures.push(format!("case {case}: {side} LCRS round-trip"));
            }
            if deserialize_dfs(&serialize_dfs(tree)).as_ref() != Ok(tree) {
                failures.push(format!("case {case}: {side} DFS round-trip"));
            }
        }
        if failures.len() > 5 {
            break;
        }
    }
    conclude(3, "round-trip suites", "1000 programs", &failures);
}

#[test]
fn criterion_4_overfit_small_training_set() {
    let started = Instant::now();
    let splits = build_dataset(&GenConfig::syn_s(23), 100, 0, 0).expect("generates");
    let train = tree_pairs(&splits.train);
    let hyper = Hyperparams {
        hidden_dim: 64,
        embedding_dim: 64,
        batch_size: 10,
        lr0: 0.5,
        init_range: 0.5,
        dropout: 0.0,
        eval_every: 50,
        plateau_window: 150,
        epochs: 150,
        seed: 7,
        ..Hyperparams::default()
    };
    // The training set doubles as the schedule's dev split; an overfit
    // run has no held-out data and the plateau decay anneals the endgame.
    let outcome = trainer::train(&train, &train, Variant::Full, &hyper).expect("trains");
    let report =
        trainer::evaluate(&outcome.model, &train, DecodeLimits::default()).expect("evaluates");
    let mut failures = Vec::new();
    if report.program_accuracy < 1.0 {
        failures.push(format!(
            "program accuracy {:.4} after {} epochs, wanted 1.0",
            report.program_accuracy, hyper.epochs
        ));
    }
    let detail = format!(
        "program accuracy {:.4} on 100 pairs, {:.0}s",
        report.program_accuracy,
        started.elapsed().as_secs_f64()
    );
    conclude(4, "training-set overfit", &detail, &failures);
}

#[test]
fn criterion_5_generalization_and_ablation_ordering() {
    let started = Instant::now();
    let splits = build_dataset(&GenConfig::syn_s(29), 2000, 200, 200).expect("generates");
    let train = tree_pairs(&splits.train);
    let dev = tree_pairs(&splits.dev);
    let test = tree_pairs(&splits.test);
    let hyper = Hyperparams {
        hidden_dim: 64,
        embedding_dim: 64,
        batch_size: 20,
        lr0: 0.005,
        dropout: 0.0,
        eval_every: 100,
        epochs: 40,
        seed: 11,
        ..Hyperparams::default()
    };
    let mut accuracy = |variant: Variant| -> f64 {
        let outcome = trainer::train(&train, &dev, variant, &hyper).expect("trains");
        trainer::evaluate(&outcome.model, &test, DecodeLimits::default())
            .expect("evaluates")
            .program_accuracy
    };
    let full = accuracy(Variant::Full);
    let no_parent_feed = accuracy(Variant::NoParentFeed);
    let no_attention = accuracy(Variant::NoAttention);

    let mut failures = Vec::new();
    if full < 0.60 {
        failures.push(format!("full variant reached {full:.4}, wanted >= 0.60"));
    }
    // Ordering must hold up to two-point ties.
    if full + 0.02 < no_parent_feed {
        failures.push(format!(
            "full {full:.4} below no-parent-feed {no_parent_feed:.4}"
        ));
    }
    if no_parent_feed + 0.02 < no_attention {
        failures.push(format!(
            "no-parent-feed {no_parent_feed:.4} below no-attention {no_attention:.4}"
        ));
    }
    if no_attention > 0.05 {
        failures.push(format!(
            "no-attention reached {no_attention:.4}, wanted <= 0.05"
        ));
    }
    let detail = format!(
        "full {full:.4}, no-parent-feed {no_parent_feed:.4}, no-attention {no_attention:.4}, {:.0}s",
        started.elapsed().as_secs_f64()
    );
    conclude(5, "generalization and ablation ordering", &detail, &failures);
}

#[test]
fn criterion_6_generator_statistics() {
    let splits = build_dataset(&GenConfig::syn_s(0), 10_000, 0, 0).expect("generates");
    let lengths = |field: fn(&DatasetRecord) -> usize| -> (usize, f64, usize) {
        let mut min = usize::MAX;
        let mut max = 0usize;
        let mut sum = 0usize;
        for record in &splits.train {
            let len = field(record);
            min = min.min(len);
            max = max.max(len);
            sum += len;
        }
        (min, sum as f64 / splits.train.len() as f64, max)
    };
    let source_p = lengths(|r| r.source_p.len());
    let target_p = lengths(|r| r.target_p.len());
    let source_t = lengths(|r| r.source_t.len());
    let target_t = lengths(|r| r.target_t.len());

    let mut failures = Vec::new();
    let mut band = |name: &str, value: f64, lo: f64, hi: f64| {
        if value < lo || value > hi {
            failures.push(format!("{name} {value} outside [{lo}, {hi}]"));
        }
    };
    band("source P mean", source_p.1, 16.0, 24.0);
    band("target P mean", target_p.1, 24.0, 36.0);
    band("target P min", target_p.0 as f64, 16.5, 49.5);
    band("target P max", target_p.2 as f64, 16.5, 49.5);
    band("source T min", source_t.0 as f64, 36.0, 60.0);
    band("source T max", source_t.2 as f64, 36.0, 60.0);
    band("target T min", target_t.0 as f64, 30.75, 92.25);
    band("target T max", target_t.2 as f64, 30.75, 92.25);
    let detail = format!(
        "source P {:?}, target P {:?}, source T {:?}, target T {:?}",
        source_p, target_p, source_t, target_t
    );
    conclude(6, "generator statistics", &detail, &failures);
}

#[test]
fn criterion_7_metric_formulas() {
    let toks = |s: &str| tokenize(s);
    let mut failures = Vec::new();
    let mut check = |name: &str, got: f64, want: f64| {
        if (got - want).abs() > 1e-12 {
            failures.push(format!("{name}: got {got}, want {want}"));
        }
    };
    check(
        "identical sequences",
        trainer::token_accuracy(&toks("a b c"), &toks("a b c")),
        1.0,
    );
    check(
        "one mismatch of three",
        trainer::token_accuracy(&toks("a b c"), &toks("a x c")),
        2.0 / 3.0,
    );
    check(
        "short prediction",
        trainer::token_accuracy(&toks("a"), &toks("a b")),
        0.5,
    );
    check(
        "both empty",
        trainer::token_accuracy(&[], &[]),
        1.0,
    );
    check(
        "empty gold, non-empty prediction",
        trainer::token_accuracy(&toks("a"), &[]),
        0.0,
    );

    let gold: Vec<_> = ["x = 1", "y = 2", "z = 3", "a = 4"]
        .iter()
        .map(|s| for_to_tree(&parse_for(&toks(s)).expect("parses")))
        .collect();
    let all_right: Vec<_> = gold.iter().cloned().map(Some).collect();
    check(
        "all programs equal",
        trainer::program_accuracy(&all_right, &gold),
        1.0,
    );
    let mut one_wrong = all_right.clone();
    one_wrong[2] = Some(gold[0].clone());
    check(
        "one mismatch of four",
        trainer::program_accuracy(&one_wrong, &gold),
        0.75,
    );
    let mut one_failed = all_right;
    one_failed[1] = None;
    check(
        "failed decode counts as wrong",
        trainer::program_accuracy(&one_failed, &gold),
        0.75,
    );

    // Identity pipeline: gold targets scored against themselves.
    let splits = build_dataset(&GenConfig::syn_s(31), 20, 0, 0).expect("generates");
    for record in &splits.train {
        let tree = lambda_to_tree(&record.target_ast);
        check(
            "identity token accuracy",
            trainer::token_accuracy(&serialize_dfs(&tree), &record.target_t),
            1.0,
        );
    }
    let gold_trees: Vec<_> = splits
        .train
        .iter()
        .map(|r| lambda_to_tree(&r.target_ast))
        .collect();
    let identity: Vec<_> = gold_trees.iter().cloned().map(Some).collect();
    check(
        "identity program accuracy",
        trainer::program_accuracy(&identity, &gold_trees),
        1.0,
    );
    conclude(7, "metric formulas", "", &failures);
}

fn read_split_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    ["train.tsv", "dev.tsv", "test.tsv"]
        .iter()
        .map(|name| {
            (
                name.to_string(),
                std::fs::read(dir.join(name)).expect("split file exists"),
            )
        })
        .collect()
}

fn log_without_timestamps(path: &Path) -> Vec<serde_json::Value> {
    std::fs::read_to_string(path)
        .expect("log exists")
        .lines()
        .map(|line| {
            let mut record: serde_json::Value = serde_json::from_str(line).expect("log line");
            record
                .as_object_mut()
                .expect("log record is an object")
                .remove("timestamp");
            record
        })
        .collect()
}

#[test]
fn criterion_8_determinism() {
    let mut failures = Vec::new();

    let gen_args = [
        "gen-data", "--preset", "syn-s", "--train", "30", "--dev", "10", "--test", "5",
        "--seed", "3",
    ];
    let dirs = (tempdir().expect("tempdir"), tempdir().expect("tempdir"));
    for dir in [&dirs.0, &dirs.1] {
        let mut args: Vec<&str> = gen_args.to_vec();
        let out = dir.path().to_str().expect("utf-8 path");
        args.extend_from_slice(&["--out", out]);
        let (_, stderr, code) = run_cli(&args, None);
        assert_eq!(code, Some(0), "gen-data failed: {stderr}");
    }
    if read_split_bytes(dirs.0.path()) != read_split_bytes(dirs.1.path()) {
        failures.push("gen-data reruns differ".to_string());
    }

    let mut ckpts = Vec::new();
    for dir in [&dirs.0, &dirs.1] {
        let ckpt = dir.path().join("model.ckpt");
        let (_, stderr, code) = run_cli(
            &[
                "train", "--data", dirs.0.path().to_str().expect("utf-8 path"),
                "--hidden", "32", "--batch", "10", "--epochs", "10", "--seed", "4",
                "--out", ckpt.to_str().expect("utf-8 path"),
            ],
            None,
        );
        assert_eq!(code, Some(0), "train failed: {stderr}");
        ckpts.push(ckpt);
    }
    if std::fs::read(&ckpts[0]).expect("checkpoint") != std::fs::read(&ckpts[1]).expect("checkpoint")
    {
        failures.push("training reruns wrote different checkpoints".to_string());
    }
    let logs = (
        log_without_timestamps(&ckpts[0].with_extension("log.jsonl")),
        log_without_timestamps(&ckpts[1].with_extension("log.jsonl")),
    );
    if logs.0.is_empty() || logs.0 != logs.1 {
        failures.push("training reruns logged different losses".to_string());
    }

    // A longer library-level run exercising the evaluation cadence.
    let splits = build_dataset(&GenConfig::syn_s(37), 60, 12, 0).expect("generates");
    let train = tree_pairs(&splits.train);
    let dev = tree_pairs(&splits.dev);
    let hyper = Hyperparams {
        hidden_dim: 32,
        embedding_dim: 32,
        batch_size: 10,
        eval_every: 3,
        epochs: 10,
        seed: 13,
        ..Hyperparams::default()
    };
    let run = || trainer::train(&train, &dev, Variant::Full, &hyper).expect("trains");
    let (a, b) = (run(), run());
    let strip = |outcome: &trainer::TrainOutcome| {
        outcome
            .log
            .iter()
            .map(|r| {
                (
                    r.minibatch,
                    r.train_loss.to_bits(),
                    r.dev_loss.map(f64::to_bits),
                    r.lr.to_bits(),
                )
            })
            .collect::<Vec<_>>()
    };
    if strip(&a) != strip(&b) {
        failures.push("library training reruns logged different losses".to_string());
    }
    if a.model.params() != b.model.params() {
        failures.push("library training reruns produced different parameters".to_string());
    }
    let detail = format!("{} log records in the library rerun", a.log.len());
    conclude(8, "determinism", &detail, &failures);
}
