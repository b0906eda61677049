//! Throwaway calibration probe. Not part of the suite; run with
//! `cargo test --test scratch_calib -- --ignored --nocapture`.

use std::time::Instant;

use tree2tree::diff::Hyperparams;
use tree2tree::generator::{build_dataset, DatasetRecord, GenConfig};
use tree2tree::model::{DecodeLimits, Variant};
use tree2tree::trainer::{self, TreePair};
use tree2tree::tree::{for_to_tree, lambda_to_tree};

fn tree_pairs(records: &[DatasetRecord]) -> Vec<TreePair> {
    records
        .iter()
        .map(|r| TreePair {
            source: for_to_tree(&r.source_ast),
            target: lambda_to_tree(&r.target_ast),
        })
        .collect()
}

#[test]
#[ignore]
fn probe_generalization() {
    let splits = build_dataset(&GenConfig::syn_s(29), 2000, 200, 200).expect("generates");
    let train = tree_pairs(&splits.train);
    let dev = tree_pairs(&splits.dev);
    let test = tree_pairs(&splits.test);
    struct Cfg {
        tag: &'static str,
        lr: f64,
        dropout: f64,
        epochs: usize,
    }
    let cases = [
        Cfg { tag: "G", lr: 0.5, dropout: 0.0, epochs: 100 },
        Cfg { tag: "H", lr: 0.5, dropout: 0.2, epochs: 100 },
    ];
    for c in cases {
        let started = Instant::now();
        let hyper = Hyperparams {
            hidden_dim: 64,
            embedding_dim: 64,
            batch_size: 20,
            lr0: c.lr,
            init_range: 0.5,
            dropout: c.dropout,
            eval_every: 100,
            plateau_window: 300,
            epochs: c.epochs,
            seed: 11,
            ..Hyperparams::default()
        };
        let outcome = trainer::train(&train, &dev, Variant::Full, &hyper).expect("trains");
        let report = trainer::evaluate(&outcome.model, &test, DecodeLimits::default())
            .expect("evaluates");
        let last = outcome.log.last().expect("log non-empty");
        println!(
            "{} lr {} drop {} e{}: prog {:.3} tok {:.3} trunc {} err {} | loss {:.4} dev {:?} lr_end {:.3} | {:.0}s",
            c.tag,
            c.lr,
            c.dropout,
            c.epochs,
            report.program_accuracy,
            report.token_accuracy,
            report.truncations,
            report.errors,
            last.train_loss,
            last.dev_loss,
            last.lr,
            started.elapsed().as_secs_f64()
        );
    }
}
