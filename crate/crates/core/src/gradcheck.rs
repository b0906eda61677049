//! Central finite-difference verification of every reverse-mode gradient,
//! from single tape operations up to the full teacher-forced loss.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::fmt;
use thiserror::Error;

use crate::diff::{
    lstm_cell, tree_lstm_cell, CellState, DiffError, DropoutMode, LstmParams, ParamId, ParamSet,
    Tape, TreeLstmParams, ValueId,
};
use crate::model::{Dropout, IndexedBinaryTree, Model, ModelError, Variant};
use crate::oracle::translate;
use crate::syntax::{parse_for, tokenize};
use crate::tree::{build_vocabs, for_to_tree, lambda_to_tree, to_lcrs};

/// Step used for the symmetric difference quotient.
pub const EPSILON: f64 = 1e-5;
/// Largest acceptable relative error.
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Error)]
pub enum GradCheckError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub checks: usize,
    pub max_rel_err: f64,
}

/// All check results from one suite run.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub epsilon: f64,
    pub tolerance: f64,
    pub results: Vec<CheckResult>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.results
            .iter()
            .map(|r| r.max_rel_err)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < self.tolerance
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "gradient check (epsilon {:.0e}, tolerance {:.0e})",
            self.epsilon, self.tolerance
        )?;
        for r in &self.results {
            writeln!(
                f,
                "  {:<28}{:>6} checks   max rel err {:.3e}",
                r.name, r.checks, r.max_rel_err
            )?;
        }
        write!(
            f,
            "overall max rel err {:.3e}: {}",
            self.max_rel_err(),
            if self.passed() { "pass" } else { "FAIL" }
        )
    }
}

/// Relative error between an analytic and a finite-difference derivative.
/// Pairs that are both negligible compare equal; a floor on the denominator
/// keeps difference-quotient noise from dominating small gradients.
fn rel_err(analytic: f64, fd: f64) -> f64 {
    let scale = analytic.abs().max(fd.abs());
    if scale < 1e-6 {
        return 0.0;
    }
    (analytic - fd).abs() / scale.max(1e-4)
}

fn compare_all(
    name: &str,
    analytic: &[(ParamId, Vec<f64>)],
    mut loss_at: impl FnMut(ParamId, usize, f64) -> Result<f64, GradCheckError>,
) -> Result<CheckResult, GradCheckError> {
    let mut max_rel = 0.0f64;
    let mut checks = 0;
    for (id, grads) in analytic {
        for (i, &g) in grads.iter().enumerate() {
            let plus = loss_at(*id, i, EPSILON)?;
            let minus = loss_at(*id, i, -EPSILON)?;
            let fd = (plus - minus) / (2.0 * EPSILON);
            max_rel = max_rel.max(rel_err(g, fd));
            checks += 1;
        }
    }
    Ok(CheckResult {
        name: name.to_owned(),
        checks,
        max_rel_err: max_rel,
    })
}

fn analytic_grads(params: &ParamSet) -> Vec<(ParamId, Vec<f64>)> {
    params
        .iter()
        .map(|(id, p)| (id, p.grad().data().to_vec()))
        .collect()
}

/// Checks one scalar loss built from a parameter set. The builder must be a
/// deterministic function of the parameters.
fn check_loss(
    name: &str,
    params: &mut ParamSet,
    build: impl Fn(&mut Tape, &ParamSet) -> Result<ValueId, DiffError>,
) -> Result<CheckResult, GradCheckError> {
    params.zero_grads();
    let mut tape = Tape::new();
    let loss = build(&mut tape, params)?;
    tape.backward(loss, params)?;
    let analytic = analytic_grads(params);
    compare_all(name, &analytic, |id, i, delta| {
        params.perturb(id, i, delta);
        let mut tape = Tape::new();
        let loss = build(&mut tape, params);
        params.perturb(id, i, -delta);
        let loss = loss?;
        Ok(tape.value(loss)[0])
    })
}

/// Checks the teacher-forced loss of a whole model on one example.
fn check_model(
    name: &str,
    model: &mut Model,
    src: &IndexedBinaryTree,
    tgt: &IndexedBinaryTree,
    dropout_p: f64,
) -> Result<CheckResult, GradCheckError> {
    let forward = |model: &Model| -> Result<(Tape, ValueId), GradCheckError> {
        let mut tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        let mut drop = Dropout::training(dropout_p, &mut rng);
        let fl = model.teacher_forced_loss(&mut tape, src, tgt, &mut drop)?;
        Ok((tape, fl.loss))
    };
    model.params_mut().zero_grads();
    let (tape, loss) = forward(model)?;
    tape.backward(loss, model.params_mut())
        .map_err(ModelError::from)?;
    let analytic = analytic_grads(model.params());
    compare_all(name, &analytic, |id, i, delta| {
        model.params_mut().perturb(id, i, delta);
        let out = forward(model);
        model.params_mut().perturb(id, i, -delta);
        let (tape, loss) = out?;
        Ok(tape.value(loss)[0])
    })
}

fn op_checks(seed: u64) -> Result<Vec<CheckResult>, GradCheckError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut results = Vec::new();

    {
        let mut params = ParamSet::new();
        let w = params.init_uniform("w", &[3, 4], 0.5, &mut rng)?;
        let b = params.init_uniform("b", &[3], 0.5, &mut rng)?;
        let x = params.init_uniform("x", &[4], 0.5, &mut rng)?;
        results.push(check_loss("affine", &mut params, |tape, ps| {
            let xv = tape.param(ps, x);
            let y = tape.affine(ps, w, xv, Some(b))?;
            tape.dot_product(y, y)
        })?);
    }
    {
        let mut params = ParamSet::new();
        let table = params.init_uniform("table", &[4, 5], 0.5, &mut rng)?;
        results.push(check_loss("embed_col", &mut params, |tape, ps| {
            let e = tape.embed_col(ps, table, 2)?;
            tape.dot_product(e, e)
        })?);
    }
    {
        let mut params = ParamSet::new();
        let x = params.init_uniform("x", &[5], 0.5, &mut rng)?;
        let y = params.init_uniform("y", &[5], 0.5, &mut rng)?;
        results.push(check_loss("add_mul_dot", &mut params, |tape, ps| {
            let xv = tape.param(ps, x);
            let yv = tape.param(ps, y);
            let sum = tape.add(xv, yv)?;
            let prod = tape.mul(sum, yv)?;
            tape.dot_product(prod, xv)
        })?);
    }
    {
        let mut params = ParamSet::new();
        let x = params.init_uniform("x", &[6], 1.0, &mut rng)?;
        let y = params.init_uniform("y", &[6], 1.0, &mut rng)?;
        results.push(check_loss("tanh_sigmoid", &mut params, |tape, ps| {
            let xv = tape.param(ps, x);
            let yv = tape.param(ps, y);
            let t = tape.tanh(xv)?;
            let s = tape.sigmoid(yv)?;
            tape.dot_product(t, s)
        })?);
    }
    {
        let mut params = ParamSet::new();
        let x = params.init_uniform("x", &[3], 0.5, &mut rng)?;
        let y = params.init_uniform("y", &[4], 0.5, &mut rng)?;
        results.push(check_loss("concat", &mut params, |tape, ps| {
            let xv = tape.param(ps, x);
            let yv = tape.param(ps, y);
            let c = tape.concat(xv, yv)?;
            tape.dot_product(c, c)
        })?);
    }
    {
        let mut params = ParamSet::new();
        let x = params.init_uniform("x", &[7], 2.0, &mut rng)?;
        results.push(check_loss("softmax_cross_entropy", &mut params, |tape, ps| {
            let xv = tape.param(ps, x);
            let p = tape.softmax(xv)?;
            tape.cross_entropy(p, 3)
        })?);
    }
    {
        let mut params = ParamSet::new();
        let k: Vec<ParamId> = (0..3)
            .map(|i| params.init_uniform(&format!("k{i}"), &[4], 0.5, &mut rng))
            .collect::<Result<_, _>>()?;
        let q = params.init_uniform("q", &[4], 0.5, &mut rng)?;
        results.push(check_loss("attention", &mut params, |tape, ps| {
            let keys: Vec<ValueId> = k.iter().map(|&id| tape.param(ps, id)).collect();
            let qv = tape.param(ps, q);
            let scores = tape.scores_against(&keys, qv)?;
            let weights = tape.softmax(scores)?;
            let mix = tape.weighted_sum(weights, &keys)?;
            tape.dot_product(mix, qv)
        })?);
    }
    {
        let mut params = ParamSet::new();
        let x = params.init_uniform("x", &[16], 0.5, &mut rng)?;
        results.push(check_loss("dropout", &mut params, |tape, ps| {
            let xv = tape.param(ps, x);
            let mut mask_rng = ChaCha8Rng::seed_from_u64(13);
            let d = tape.dropout(xv, 0.5, DropoutMode::Training, &mut mask_rng)?;
            tape.dot_product(d, d)
        })?);
    }
    {
        let mut params = ParamSet::new();
        let x = params.init_uniform("x", &[4], 2.0, &mut rng)?;
        let y = params.init_uniform("y", &[4], 2.0, &mut rng)?;
        results.push(check_loss("mean_of_sites", &mut params, |tape, ps| {
            let xv = tape.param(ps, x);
            let yv = tape.param(ps, y);
            let px = tape.softmax(xv)?;
            let py = tape.softmax(yv)?;
            let a = tape.cross_entropy(px, 0)?;
            let b = tape.cross_entropy(py, 2)?;
            tape.mean(&[a, b])
        })?);
    }
    {
        let d = 4;
        let mut params = ParamSet::new();
        let cell = LstmParams::init(&mut params, "cell", d, d, 0.5, &mut rng)?;
        let x = params.init_uniform("x", &[d], 0.5, &mut rng)?;
        let h0 = params.init_uniform("h0", &[d], 0.5, &mut rng)?;
        let c0 = params.init_uniform("c0", &[d], 0.5, &mut rng)?;
        results.push(check_loss("lstm_cell", &mut params, |tape, ps| {
            let xv = tape.param(ps, x);
            let prev = CellState {
                h: tape.param(ps, h0),
                c: tape.param(ps, c0),
            };
            let next = lstm_cell(tape, ps, &cell, xv, prev)?;
            let lh = tape.dot_product(next.h, next.h)?;
            let lc = tape.dot_product(next.c, next.c)?;
            tape.add(lh, lc)
        })?);
    }
    {
        let d = 4;
        let mut params = ParamSet::new();
        let cell = TreeLstmParams::init(&mut params, "cell", d, d, 0.5, &mut rng)?;
        let x = params.init_uniform("x", &[d], 0.5, &mut rng)?;
        let hl = params.init_uniform("hl", &[d], 0.5, &mut rng)?;
        let cl = params.init_uniform("cl", &[d], 0.5, &mut rng)?;
        let hr = params.init_uniform("hr", &[d], 0.5, &mut rng)?;
        let cr = params.init_uniform("cr", &[d], 0.5, &mut rng)?;
        results.push(check_loss("tree_lstm_cell", &mut params, |tape, ps| {
            let xv = tape.param(ps, x);
            let left = CellState {
                h: tape.param(ps, hl),
                c: tape.param(ps, cl),
            };
            let right = CellState {
                h: tape.param(ps, hr),
                c: tape.param(ps, cr),
            };
            let next = tree_lstm_cell(tape, ps, &cell, xv, left, right)?;
            let lh = tape.dot_product(next.h, next.h)?;
            let lc = tape.dot_product(next.c, next.c)?;
            tape.add(lh, lc)
        })?);
    }
    Ok(results)
}

fn model_checks(d: usize, seed: u64) -> Result<Vec<CheckResult>, GradCheckError> {
    let sources = ["x = 1", "x = y + 1", "x = 1 ; y = 2"];
    let pairs: Vec<_> = sources
        .iter()
        .map(|s| {
            let ast = parse_for(&tokenize(s)).expect("valid program");
            let tgt = translate(&ast);
            (for_to_tree(&ast), lambda_to_tree(&tgt))
        })
        .collect();
    let (src_vocab, tgt_vocab) =
        build_vocabs(pairs.iter().map(|(s, _)| s), pairs.iter().map(|(_, t)| t));
    let indexed: Vec<_> = pairs
        .iter()
        .map(|(s, t)| {
            let si = IndexedBinaryTree::index_source(&to_lcrs(s), &src_vocab)?;
            let ti = IndexedBinaryTree::index_target(&to_lcrs(t), &tgt_vocab)?;
            Ok::<_, ModelError>((si, ti))
        })
        .collect::<Result<_, _>>()?;

    let mut results = Vec::new();
    for variant in Variant::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut model = Model::new(
            d,
            variant,
            src_vocab.clone(),
            tgt_vocab.clone(),
            0.1,
            &mut rng,
        )?;
        for (i, (src, tgt)) in indexed.iter().enumerate() {
            results.push(check_model(
                &format!("loss[{variant}] example {i}"),
                &mut model,
                src,
                tgt,
                0.0,
            )?);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd5);
    let mut model = Model::new(d, Variant::Full, src_vocab, tgt_vocab, 0.1, &mut rng)?;
    let (src, tgt) = &indexed[2];
    results.push(check_model(
        "loss[full] with dropout",
        &mut model,
        src,
        tgt,
        0.3,
    )?);
    Ok(results)
}

/// Runs every check: one per tape operation, the recurrent cells, and the
/// teacher-forced loss for all three variants on three small programs.
pub fn run_full_suite(d: usize, seed: u64) -> Result<GradCheckReport, GradCheckError> {
    let mut results = op_checks(seed)?;
    results.extend(model_checks(d, seed)?);
    Ok(GradCheckReport {
        epsilon: EPSILON,
        tolerance: TOLERANCE,
        results,
    })
}
