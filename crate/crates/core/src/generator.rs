//! Weighted-grammar random program sampler and dataset assembly.
//!
//! Programs are drawn top-down from the FOR grammar with per-nonterminal
//! production weights and a recursion-depth cap; a depth budget below 2
//! forces the only non-recursive derivation (a flat assignment). Dataset
//! assembly pairs each sampled program with its oracle translation, keeps
//! only samples whose source and target lengths fall inside the preset's
//! windows, and rejects duplicates by source text, so splits are disjoint
//! and every record is unique.

use std::collections::HashSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::oracle;
use crate::syntax::{
    join_tokens, render_for, render_lambda, Cmp, CmpOp, Expr, ForAst, LambdaAst, Operand, Token,
};
use crate::tree::{for_to_tree, lambda_to_tree, serialize_dfs};

/// Production weights for each nonterminal of the FOR grammar. Weights in a
/// group must be non-negative and sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductionWeights {
    /// `Statement -> Seq` (versus a single statement).
    pub statement_seq: f64,
    /// `Statement -> Single`.
    pub statement_single: f64,
    /// Probability that a sequence continues with another `; <Single>`.
    pub seq_extend: f64,
    /// `Single -> Assign | If | For`.
    pub single_assign: f64,
    pub single_if: f64,
    pub single_for: f64,
    /// `Expr -> Var | Const | Expr + Var | Expr + Const | Expr - Var | Expr - Const`.
    pub expr_var: f64,
    pub expr_const: f64,
    pub expr_add_var: f64,
    pub expr_add_const: f64,
    pub expr_sub_var: f64,
    pub expr_sub_const: f64,
    /// `Cmp -> == | > | <`.
    pub cmp_eq: f64,
    pub cmp_gt: f64,
    pub cmp_lt: f64,
}

/// Generator configuration: weights, pools, depth cap, length windows, seed.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    pub weights: ProductionWeights,
    /// Mean source length (format P tokens) the preset is tuned for.
    pub target_mean_source_len: usize,
    /// Maximum derivation nesting depth; 1 permits only a flat assignment.
    pub max_depth: usize,
    /// Variable pool.
    pub vars: Vec<String>,
    /// Literal pool.
    pub consts: Vec<u32>,
    /// Accepted source length range (format P tokens), inclusive.
    pub source_len_window: (usize, usize),
    /// Accepted target length range (format P tokens), inclusive.
    pub target_len_window: (usize, usize),
    /// Accepted target length range (format T tokens), inclusive.
    pub target_tree_window: (usize, usize),
    pub seed: u64,
}

impl GenConfig {
    /// Preset tuned for a mean source length of 20 tokens.
    pub fn syn_s(seed: u64) -> Self {
        GenConfig {
            weights: ProductionWeights {
                statement_seq: 0.42,
                statement_single: 0.58,
                seq_extend: 0.20,
                single_assign: 0.62,
                single_if: 0.21,
                single_for: 0.17,
                expr_var: 0.35,
                expr_const: 0.35,
                expr_add_var: 0.08,
                expr_add_const: 0.08,
                expr_sub_var: 0.07,
                expr_sub_const: 0.07,
                cmp_eq: 0.34,
                cmp_gt: 0.33,
                cmp_lt: 0.33,
            },
            target_mean_source_len: 20,
            max_depth: 4,
            vars: default_vars(),
            consts: (0..10).collect(),
            source_len_window: (8, 24),
            target_len_window: (24, 48),
            target_tree_window: (31, 62),
            seed,
        }
    }

    /// Preset tuned for a mean source length of 50 tokens.
    pub fn syn_l(seed: u64) -> Self {
        GenConfig {
            weights: ProductionWeights {
                statement_seq: 0.53,
                statement_single: 0.47,
                seq_extend: 0.34,
                single_assign: 0.58,
                single_if: 0.22,
                single_for: 0.20,
                expr_var: 0.33,
                expr_const: 0.33,
                expr_add_var: 0.09,
                expr_add_const: 0.09,
                expr_sub_var: 0.08,
                expr_sub_const: 0.08,
                cmp_eq: 0.34,
                cmp_gt: 0.33,
                cmp_lt: 0.33,
            },
            target_mean_source_len: 50,
            max_depth: 6,
            vars: default_vars(),
            consts: (0..10).collect(),
            source_len_window: (30, 75),
            target_len_window: (40, 130),
            target_tree_window: (70, 160),
            seed,
        }
    }

    /// Looks up a preset by its dataset-header name.
    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        match name {
            "syn-s" => Some(Self::syn_s(seed)),
            "syn-l" => Some(Self::syn_l(seed)),
            _ => None,
        }
    }

    /// Validates weights, pools, and windows.
    pub fn validate(&self) -> Result<(), GenError> {
        let w = &self.weights;
        let groups: [(&str, Vec<f64>); 4] = [
            (
                "statement",
                vec![w.statement_seq, w.statement_single],
            ),
            (
                "single",
                vec![w.single_assign, w.single_if, w.single_for],
            ),
            (
                "expr",
                vec![
                    w.expr_var,
                    w.expr_const,
                    w.expr_add_var,
                    w.expr_add_const,
                    w.expr_sub_var,
                    w.expr_sub_const,
                ],
            ),
            ("cmp", vec![w.cmp_eq, w.cmp_gt, w.cmp_lt]),
        ];
        for (name, weights) in groups {
            if weights.iter().any(|&x| x < 0.0) {
                return Err(GenError::InvalidConfig {
                    reason: format!("negative weight in {name} group"),
                });
            }
            let sum: f64 = weights.iter().sum();
            if (sum - 1.0).abs() > 1e-6 {
                return Err(GenError::InvalidConfig {
                    reason: format!("{name} weights sum to {sum}, expected 1"),
                });
            }
        }
        if !(0.0..1.0).contains(&w.seq_extend) {
            return Err(GenError::InvalidConfig {
                reason: "seq_extend must lie in [0, 1)".to_owned(),
            });
        }
        if self.max_depth < 1 {
            return Err(GenError::InvalidConfig {
                reason: "max_depth must be at least 1".to_owned(),
            });
        }
        if self.vars.is_empty() || self.consts.is_empty() {
            return Err(GenError::InvalidConfig {
                reason: "variable and literal pools must be non-empty".to_owned(),
            });
        }
        for (name, (lo, hi)) in [
            ("source", self.source_len_window),
            ("target", self.target_len_window),
            ("target tree", self.target_tree_window),
        ] {
            if lo > hi {
                return Err(GenError::InvalidConfig {
                    reason: format!("{name} length window is empty ({lo} > {hi})"),
                });
            }
        }
        Ok(())
    }
}

fn default_vars() -> Vec<String> {
    ["i", "x", "y", "z", "a", "b"]
        .into_iter()
        .map(str::to_owned)
        .collect()
}

/// Generation failures.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GenError {
    #[error("invalid generator config: {reason}")]
    InvalidConfig { reason: String },
    #[error(
        "retry budget exhausted after {attempts} attempts: \
         requested {requested} unique records, achieved {achieved}"
    )]
    Exhausted {
        requested: usize,
        achieved: usize,
        attempts: usize,
    },
}

/// One source/target pair in all four representations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetRecord {
    pub source_ast: ForAst,
    pub target_ast: LambdaAst,
    /// Source program text tokens (format P).
    pub source_p: Vec<Token>,
    /// Target program text tokens (format P).
    pub target_p: Vec<Token>,
    /// Source tree serialization (format T).
    pub source_t: Vec<Token>,
    /// Target tree serialization (format T).
    pub target_t: Vec<Token>,
}

impl DatasetRecord {
    /// Builds the full record for a source program: oracle translation plus
    /// all four serializations.
    pub fn from_source(source_ast: ForAst) -> Self {
        let target_ast = oracle::translate(&source_ast);
        let source_p = render_for(&source_ast);
        let target_p = render_lambda(&target_ast);
        let source_t = serialize_dfs(&for_to_tree(&source_ast));
        let target_t = serialize_dfs(&lambda_to_tree(&target_ast));
        DatasetRecord {
            source_ast,
            target_ast,
            source_p,
            target_p,
            source_t,
            target_t,
        }
    }
}

/// Train/dev/test record lists with global uniqueness.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplits {
    pub train: Vec<DatasetRecord>,
    pub dev: Vec<DatasetRecord>,
    pub test: Vec<DatasetRecord>,
}

fn pick<T: Copy>(rng: &mut impl Rng, options: &[(f64, T)]) -> T {
    let total: f64 = options.iter().map(|(w, _)| *w).sum();
    assert!(total > 0.0, "no applicable production");
    let mut x = rng.random::<f64>() * total;
    for (w, v) in options {
        if x < *w {
            return *v;
        }
        x -= w;
    }
    options.last().expect("non-empty options").1
}

#[derive(Clone, Copy)]
enum SingleKind {
    Assign,
    If,
    For,
}

#[derive(Clone, Copy)]
enum ExprKind {
    Var,
    Const,
    AddVar,
    AddConst,
    SubVar,
    SubConst,
}

/// Samples one well-formed FOR program.
pub fn sample_program(config: &GenConfig, rng: &mut impl Rng) -> ForAst {
    let ast = sample_statement(config, rng, config.max_depth);
    debug_assert!(ast.is_well_formed());
    ast
}

fn sample_statement(config: &GenConfig, rng: &mut impl Rng, budget: usize) -> ForAst {
    let w = &config.weights;
    let make_seq = budget >= 2
        && pick(
            rng,
            &[(w.statement_seq, true), (w.statement_single, false)],
        );
    if !make_seq {
        return sample_single(config, rng, budget);
    }
    let mut items = vec![
        sample_single(config, rng, budget - 1),
        sample_single(config, rng, budget - 1),
    ];
    while rng.random::<f64>() < w.seq_extend {
        items.push(sample_single(config, rng, budget - 1));
    }
    ForAst::Seq(items)
}

fn sample_single(config: &GenConfig, rng: &mut impl Rng, budget: usize) -> ForAst {
    let w = &config.weights;
    let kind = if budget < 2 {
        SingleKind::Assign
    } else {
        pick(
            rng,
            &[
                (w.single_assign, SingleKind::Assign),
                (w.single_if, SingleKind::If),
                (w.single_for, SingleKind::For),
            ],
        )
    };
    match kind {
        SingleKind::Assign => ForAst::Assign {
            var: sample_var(config, rng),
            value: sample_expr(config, rng, budget.saturating_sub(1)),
        },
        SingleKind::If => ForAst::If {
            cond: sample_cmp(config, rng, budget - 1),
            then_branch: Box::new(sample_statement(config, rng, budget - 1)),
            else_branch: Box::new(sample_statement(config, rng, budget - 1)),
        },
        SingleKind::For => ForAst::For {
            var: sample_var(config, rng),
            init: sample_expr(config, rng, budget - 1),
            cond: sample_cmp(config, rng, budget - 1),
            step: sample_expr(config, rng, budget - 1),
            body: Box::new(sample_statement(config, rng, budget - 1)),
        },
    }
}

fn sample_expr(config: &GenConfig, rng: &mut impl Rng, budget: usize) -> Expr {
    let w = &config.weights;
    let kind = if budget < 1 {
        pick(
            rng,
            &[(w.expr_var, ExprKind::Var), (w.expr_const, ExprKind::Const)],
        )
    } else {
        pick(
            rng,
            &[
                (w.expr_var, ExprKind::Var),
                (w.expr_const, ExprKind::Const),
                (w.expr_add_var, ExprKind::AddVar),
                (w.expr_add_const, ExprKind::AddConst),
                (w.expr_sub_var, ExprKind::SubVar),
                (w.expr_sub_const, ExprKind::SubConst),
            ],
        )
    };
    match kind {
        ExprKind::Var => Expr::Var(sample_var(config, rng)),
        ExprKind::Const => Expr::Const(sample_const(config, rng)),
        ExprKind::AddVar => Expr::Add(
            Box::new(sample_expr(config, rng, budget - 1)),
            Operand::Var(sample_var(config, rng)),
        ),
        ExprKind::AddConst => Expr::Add(
            Box::new(sample_expr(config, rng, budget - 1)),
            Operand::Const(sample_const(config, rng)),
        ),
        ExprKind::SubVar => Expr::Sub(
            Box::new(sample_expr(config, rng, budget - 1)),
            Operand::Var(sample_var(config, rng)),
        ),
        ExprKind::SubConst => Expr::Sub(
            Box::new(sample_expr(config, rng, budget - 1)),
            Operand::Const(sample_const(config, rng)),
        ),
    }
}

fn sample_cmp(config: &GenConfig, rng: &mut impl Rng, budget: usize) -> Cmp {
    let w = &config.weights;
    let op = pick(
        rng,
        &[
            (w.cmp_eq, CmpOp::Eq),
            (w.cmp_gt, CmpOp::Gt),
            (w.cmp_lt, CmpOp::Lt),
        ],
    );
    Cmp {
        op,
        lhs: sample_expr(config, rng, budget),
        rhs: sample_expr(config, rng, budget),
    }
}

fn sample_var(config: &GenConfig, rng: &mut impl Rng) -> String {
    config.vars[rng.random_range(0..config.vars.len())].clone()
}

fn sample_const(config: &GenConfig, rng: &mut impl Rng) -> u32 {
    config.consts[rng.random_range(0..config.consts.len())]
}

/// Builds disjoint train/dev/test splits of globally unique records.
///
/// Sampling, length filtering, and deduplication all draw from a single
/// stream seeded by `config.seed`, so the result is a pure function of the
/// config and sizes. The retry budget is 100 attempts per requested record.
pub fn build_dataset(
    config: &GenConfig,
    n_train: usize,
    n_dev: usize,
    n_test: usize,
) -> Result<DatasetSplits, GenError> {
    config.validate()?;
    let total = n_train + n_dev + n_test;
    let budget = total.saturating_mul(100).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut seen: HashSet<String> = HashSet::with_capacity(total);
    let mut records: Vec<DatasetRecord> = Vec::with_capacity(total);
    let mut attempts = 0;
    let (src_lo, src_hi) = config.source_len_window;
    let (tgt_lo, tgt_hi) = config.target_len_window;
    let (tree_lo, tree_hi) = config.target_tree_window;
    while records.len() < total && attempts < budget {
        attempts += 1;
        let ast = sample_program(config, &mut rng);
        let source_p = render_for(&ast);
        if source_p.len() < src_lo || source_p.len() > src_hi {
            continue;
        }
        let key = join_tokens(&source_p);
        if seen.contains(&key) {
            continue;
        }
        let record = DatasetRecord::from_source(ast);
        if record.target_p.len() < tgt_lo || record.target_p.len() > tgt_hi {
            continue;
        }
        if record.target_t.len() < tree_lo || record.target_t.len() > tree_hi {
            continue;
        }
        seen.insert(key);
        records.push(record);
    }
    if records.len() < total {
        return Err(GenError::Exhausted {
            requested: total,
            achieved: records.len(),
            attempts,
        });
    }
    let mut rest = records.split_off(n_train);
    let test = rest.split_off(n_dev);
    Ok(DatasetSplits {
        train: records,
        dev: rest,
        test,
    })
}
