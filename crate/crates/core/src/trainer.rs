//! Training loop, evaluation, and the two accuracy metrics.

use std::fmt;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::{clip_and_step, DiffError, Hyperparams, LrSchedule, ParamSet, Tape};
use crate::model::{DecodeLimits, Dropout, IndexedBinaryTree, Model, ModelError, Variant};
use crate::syntax::{Token, Vocabulary};
use crate::tree::{build_vocabs, from_lcrs, serialize_dfs, to_lcrs, GeneralTree};

/// One source/target pair in tree form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TreePair {
    pub source: GeneralTree,
    pub target: GeneralTree,
}

/// Errors tying data to a model: vocabulary mismatches between splits,
/// invalid configurations, or failures bubbling up from the model itself.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("the training split is empty")]
    EmptyTrain,
    #[error("{split} split uses token `{token}` which is absent from the training vocabulary")]
    VocabMismatch { split: &'static str, token: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Config(#[from] DiffError),
}

/// Final snapshot of the training loop counters.
#[derive(Debug, Clone, Serialize)]
pub struct TrainState {
    pub epochs_run: usize,
    pub minibatches: u64,
    pub lr: f64,
    pub best_dev_loss: Option<f64>,
    pub minibatches_since_best: u64,
    pub seed: u64,
}

/// One line of the training log, written at every development evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogRecord {
    pub minibatch: u64,
    /// Mean per-example training loss since the previous record.
    pub train_loss: f64,
    /// Mean dev loss, absent when no dev split was given.
    pub dev_loss: Option<f64>,
    pub lr: f64,
    pub timestamp: u64,
}

/// A trained model (the best-dev parameters seen) plus its log.
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<LogRecord>,
    pub state: TrainState,
}

struct IndexedPair {
    src: IndexedBinaryTree,
    tgt: IndexedBinaryTree,
}

fn lift(e: ModelError, split: &'static str) -> DataError {
    match e {
        ModelError::UnknownToken { token, .. } => DataError::VocabMismatch { split, token },
        other => DataError::Model(other),
    }
}

fn index_pairs(
    pairs: &[TreePair],
    src_vocab: &Vocabulary,
    tgt_vocab: &Vocabulary,
    split: &'static str,
) -> Result<Vec<IndexedPair>, DataError> {
    pairs
        .iter()
        .map(|p| {
            let src = IndexedBinaryTree::index_source(&to_lcrs(&p.source), src_vocab)
                .map_err(|e| lift(e, split))?;
            let tgt = IndexedBinaryTree::index_target(&to_lcrs(&p.target), tgt_vocab)
                .map_err(|e| lift(e, split))?;
            Ok(IndexedPair { src, tgt })
        })
        .collect()
}

fn mean_forced_loss(model: &Model, pairs: &[IndexedPair]) -> Result<f64, DataError> {
    let mut silent = ChaCha8Rng::seed_from_u64(0);
    let mut total = 0.0;
    for ex in pairs {
        let mut tape = Tape::new();
        let mut drop = Dropout::inference(&mut silent);
        let fl = model.teacher_forced_loss(&mut tape, &ex.src, &ex.tgt, &mut drop)?;
        total += tape.value(fl.loss)[0];
    }
    Ok(total / pairs.len() as f64)
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Trains a fresh model. Vocabularies come from the training split alone;
/// a dev/test token outside them is an error. Every `eval_every`
/// mini-batches the dev loss is measured, the learning-rate schedule
/// observes it, and the parameters are snapshotted if it improved. The
/// returned model carries the best-dev parameters (or the final ones when
/// no dev split is given). The whole run is a pure function of its inputs
/// except for log timestamps.
pub fn train(
    train_pairs: &[TreePair],
    dev_pairs: &[TreePair],
    variant: Variant,
    hyper: &Hyperparams,
) -> Result<TrainOutcome, DataError> {
    hyper.validate()?;
    if train_pairs.is_empty() {
        return Err(DataError::EmptyTrain);
    }
    let (src_vocab, tgt_vocab) = build_vocabs(
        train_pairs.iter().map(|p| &p.source),
        train_pairs.iter().map(|p| &p.target),
    );
    let train_idx = index_pairs(train_pairs, &src_vocab, &tgt_vocab, "train")?;
    let dev_idx = index_pairs(dev_pairs, &src_vocab, &tgt_vocab, "dev")?;

    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut model = Model::new(
        hyper.hidden_dim,
        variant,
        src_vocab,
        tgt_vocab,
        hyper.init_range,
        &mut rng,
    )?;
    let mut sched = LrSchedule::new(hyper.lr0, hyper.lr_decay, hyper.plateau_window as usize);
    let mut lr = hyper.lr0;
    let mut log = Vec::new();
    let mut best: Option<(f64, ParamSet)> = None;
    let mut best_at: u64 = 0;
    let mut minibatch: u64 = 0;
    let mut window_sum = 0.0;
    let mut window_n = 0u64;
    let mut order: Vec<usize> = (0..train_idx.len()).collect();

    let measure_dev = |model: &Model,
                           best: &mut Option<(f64, ParamSet)>,
                           best_at: &mut u64,
                           minibatch: u64|
     -> Result<Option<f64>, DataError> {
        if dev_idx.is_empty() {
            return Ok(None);
        }
        let dl = mean_forced_loss(model, &dev_idx)?;
        if best.as_ref().is_none_or(|(b, _)| dl < *b) {
            *best = Some((dl, model.params().clone()));
            *best_at = minibatch;
        }
        Ok(Some(dl))
    };

    for _ in 0..hyper.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(hyper.batch_size) {
            model.params_mut().zero_grads();
            let mut batch_loss = 0.0;
            for &i in chunk {
                let ex = &train_idx[i];
                let mut tape = Tape::new();
                let mut drop = Dropout::training(hyper.dropout, &mut rng);
                let fl = model.teacher_forced_loss(&mut tape, &ex.src, &ex.tgt, &mut drop)?;
                batch_loss += tape.value(fl.loss)[0];
                tape.backward(fl.loss, model.params_mut())
                    .map_err(ModelError::from)?;
            }
            let n = chunk.len() as f64;
            model.params_mut().scale_grads(1.0 / n);
            clip_and_step(model.params_mut(), lr, hyper.grad_clip);
            minibatch += 1;
            window_sum += batch_loss / n;
            window_n += 1;

            if minibatch % hyper.eval_every == 0 {
                let dev_loss = measure_dev(&model, &mut best, &mut best_at, minibatch)?;
                if let Some(dl) = dev_loss {
                    lr = sched.observe(minibatch as usize, dl);
                }
                log.push(LogRecord {
                    minibatch,
                    train_loss: window_sum / window_n as f64,
                    dev_loss,
                    lr,
                    timestamp: unix_now(),
                });
                window_sum = 0.0;
                window_n = 0;
            }
        }
    }
    if window_n > 0 {
        // Tail record for runs that do not end on the evaluation cadence;
        // it snapshots but does not advance the schedule.
        let dev_loss = measure_dev(&model, &mut best, &mut best_at, minibatch)?;
        log.push(LogRecord {
            minibatch,
            train_loss: window_sum / window_n as f64,
            dev_loss,
            lr,
            timestamp: unix_now(),
        });
    }

    let state = TrainState {
        epochs_run: hyper.epochs,
        minibatches: minibatch,
        lr,
        best_dev_loss: best.as_ref().map(|(b, _)| *b),
        minibatches_since_best: minibatch - best_at,
        seed: hyper.seed,
    };
    let model = match best {
        Some((_, params)) => Model::from_params(
            params,
            hyper.hidden_dim,
            variant,
            model.src_vocab().clone(),
            model.tgt_vocab().clone(),
        )?,
        None => model,
    };
    Ok(TrainOutcome { model, log, state })
}

/// Position-wise token accuracy with the gold length as denominator. An
/// empty gold sequence scores 1 against an empty prediction and 0 against
/// anything else.
pub fn token_accuracy(pred: &[Token], gold: &[Token]) -> f64 {
    if gold.is_empty() {
        return if pred.is_empty() { 1.0 } else { 0.0 };
    }
    let matches = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    matches as f64 / gold.len() as f64
}

/// Fraction of predictions structurally equal to their gold tree. `None`
/// entries (failed decodes) never match.
pub fn program_accuracy(pred: &[Option<GeneralTree>], gold: &[GeneralTree]) -> f64 {
    debug_assert_eq!(pred.len(), gold.len());
    if gold.is_empty() {
        return 1.0;
    }
    let matches = pred
        .iter()
        .zip(gold)
        .filter(|(p, g)| p.as_ref() == Some(g))
        .count();
    matches as f64 / gold.len() as f64
}

/// Aggregate metrics over one dataset split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// Mean per-example token accuracy of serialized predictions.
    pub token_accuracy: f64,
    /// Fraction of exactly reproduced target trees.
    pub program_accuracy: f64,
    pub exact_matches: usize,
    /// Decodes aborted by a node or depth budget.
    pub truncations: usize,
    /// Decodes that failed outright (vocabulary mismatch or a malformed
    /// output tree).
    pub errors: usize,
    pub total: usize,
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "program accuracy: {:.4} ({}/{} exact)",
            self.program_accuracy, self.exact_matches, self.total
        )?;
        writeln!(f, "token accuracy:   {:.4}", self.token_accuracy)?;
        writeln!(f, "truncated decodes: {}", self.truncations)?;
        write!(f, "errored decodes:   {}", self.errors)
    }
}

/// Greedy-decodes every source in the split and scores the results against
/// the gold targets. Truncated or failed decodes count as wrong on both
/// metrics. An empty split scores vacuously perfect.
pub fn evaluate(
    model: &Model,
    pairs: &[TreePair],
    limits: DecodeLimits,
) -> Result<EvalReport, DataError> {
    let mut exact = 0usize;
    let mut truncations = 0usize;
    let mut errors = 0usize;
    let mut token_sum = 0.0;
    for pair in pairs {
        let gold_tokens = serialize_dfs(&pair.target);
        let decoded = IndexedBinaryTree::index_source(&to_lcrs(&pair.source), model.src_vocab())
            .and_then(|idx| model.decode_greedy(&idx, limits));
        match decoded {
            Ok(Some(bin)) => match from_lcrs(&bin) {
                Ok(tree) => {
                    token_sum += token_accuracy(&serialize_dfs(&tree), &gold_tokens);
                    if tree == pair.target {
                        exact += 1;
                    }
                }
                Err(_) => errors += 1,
            },
            Ok(None) => token_sum += token_accuracy(&[], &gold_tokens),
            Err(ModelError::LimitExceeded { .. }) => truncations += 1,
            Err(ModelError::UnknownToken { .. } | ModelError::EosLabel) => errors += 1,
            Err(e) => return Err(DataError::Model(e)),
        }
    }
    let total = pairs.len();
    if total == 0 {
        return Ok(EvalReport {
            token_accuracy: 1.0,
            program_accuracy: 1.0,
            exact_matches: 0,
            truncations: 0,
            errors: 0,
            total: 0,
        });
    }
    Ok(EvalReport {
        token_accuracy: token_sum / total as f64,
        program_accuracy: exact as f64 / total as f64,
        exact_matches: exact,
        truncations,
        errors,
        total,
    })
}
