//! Labeled ordered trees, the left-child right-sibling (LCRS) binary
//! encoding, and the bracketed depth-first token serialization (format T).
//!
//! ASTs map to general trees with one label per node: statement and term
//! forms use their constructor names (`Assign`, `If`, `For`, `Seq`, `Let`,
//! `LetRec`, `IfTerm`, `App`), operators use their symbols (`+`, `-`, `==`,
//! `>`, `<`), and leaves are variables, literals, or `Unit`. Child order
//! follows grammar order.
//!
//! Format T serializes a tree in preorder; an internal node's child list is
//! wrapped in `(` `)` tokens while leaves appear bare, so `A(B, C)` becomes
//! `A ( B C )` and the tree is uniquely recoverable. Bracket tokens exist
//! only in serialized sequences, never as tree labels or vocabulary entries.

use thiserror::Error;

use crate::syntax::{Cmp, CmpOp, Expr, ForAst, LambdaAst, Operand, Token, Vocabulary};

/// Tree-node labels for AST constructors.
pub mod labels {
    pub const ASSIGN: &str = "Assign";
    pub const IF: &str = "If";
    pub const FOR: &str = "For";
    pub const SEQ: &str = "Seq";
    pub const LET: &str = "Let";
    pub const LETREC: &str = "LetRec";
    pub const IFTERM: &str = "IfTerm";
    pub const APP: &str = "App";
    pub const UNIT: &str = "Unit";
    pub const OPEN: &str = "(";
    pub const CLOSE: &str = ")";
}

/// An ordered tree with arbitrary arity.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GeneralTree {
    pub label: Token,
    pub children: Vec<GeneralTree>,
}

impl GeneralTree {
    /// A childless node.
    pub fn leaf(label: impl Into<String>) -> Self {
        GeneralTree {
            label: Token::raw(label),
            children: Vec::new(),
        }
    }

    /// An internal node.
    pub fn node(label: impl Into<String>, children: Vec<GeneralTree>) -> Self {
        GeneralTree {
            label: Token::raw(label),
            children,
        }
    }

    /// Total number of nodes.
    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(GeneralTree::node_count).sum::<usize>()
    }

    /// Height counted in nodes (a leaf has depth 1).
    pub fn depth(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(GeneralTree::depth)
            .max()
            .unwrap_or(0)
    }

    /// Labels in preorder, one per node.
    pub fn labels_preorder(&self) -> Vec<Token> {
        let mut out = Vec::with_capacity(self.node_count());
        self.collect_labels(&mut out);
        out
    }

    fn collect_labels(&self, out: &mut Vec<Token>) {
        out.push(self.label.clone());
        for child in &self.children {
            child.collect_labels(out);
        }
    }
}

/// A binary tree with optional left and right children, as produced by the
/// LCRS encoding: left = first child, right = next sibling.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryTree {
    pub label: Token,
    pub left: Option<Box<BinaryTree>>,
    pub right: Option<Box<BinaryTree>>,
}

impl BinaryTree {
    /// Total number of nodes.
    pub fn node_count(&self) -> usize {
        1 + self.left.as_ref().map_or(0, |n| n.node_count())
            + self.right.as_ref().map_or(0, |n| n.node_count())
    }

    /// Height counted in nodes.
    pub fn depth(&self) -> usize {
        1 + self
            .left
            .as_ref()
            .map_or(0, |n| n.depth())
            .max(self.right.as_ref().map_or(0, |n| n.depth()))
    }
}

/// Errors raised when interpreting trees or serialized token streams.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("node `{label}` with {arity} children does not form a {role}")]
    BadNode {
        label: String,
        arity: usize,
        role: &'static str,
    },
    #[error("ill-formed serialized tree at token {position}: {reason}")]
    BadSerialization { position: usize, reason: String },
    #[error("binary tree root has a right child, which no single tree encodes to")]
    RootHasRightSibling,
}

fn bad(label: &Token, arity: usize, role: &'static str) -> TreeError {
    TreeError::BadNode {
        label: label.as_str().to_owned(),
        arity,
        role,
    }
}

fn expr_to_tree(expr: &Expr) -> GeneralTree {
    match expr {
        Expr::Var(v) => GeneralTree::leaf(v.as_str()),
        Expr::Const(c) => GeneralTree::leaf(c.to_string()),
        Expr::Add(lhs, rhs) => {
            GeneralTree::node("+", vec![expr_to_tree(lhs), operand_to_tree(rhs)])
        }
        Expr::Sub(lhs, rhs) => {
            GeneralTree::node("-", vec![expr_to_tree(lhs), operand_to_tree(rhs)])
        }
    }
}

fn operand_to_tree(op: &Operand) -> GeneralTree {
    match op {
        Operand::Var(v) => GeneralTree::leaf(v.as_str()),
        Operand::Const(c) => GeneralTree::leaf(c.to_string()),
    }
}

fn cmp_to_tree(cmp: &Cmp) -> GeneralTree {
    GeneralTree::node(
        cmp.op.symbol(),
        vec![expr_to_tree(&cmp.lhs), expr_to_tree(&cmp.rhs)],
    )
}

/// Converts a FOR statement into its labeled general tree.
pub fn for_to_tree(ast: &ForAst) -> GeneralTree {
    match ast {
        ForAst::Assign { var, value } => GeneralTree::node(
            labels::ASSIGN,
            vec![GeneralTree::leaf(var.as_str()), expr_to_tree(value)],
        ),
        ForAst::If {
            cond,
            then_branch,
            else_branch,
        } => GeneralTree::node(
            labels::IF,
            vec![
                cmp_to_tree(cond),
                for_to_tree(then_branch),
                for_to_tree(else_branch),
            ],
        ),
        ForAst::For {
            var,
            init,
            cond,
            step,
            body,
        } => GeneralTree::node(
            labels::FOR,
            vec![
                GeneralTree::leaf(var.as_str()),
                expr_to_tree(init),
                cmp_to_tree(cond),
                expr_to_tree(step),
                for_to_tree(body),
            ],
        ),
        ForAst::Seq(items) => {
            GeneralTree::node(labels::SEQ, items.iter().map(for_to_tree).collect())
        }
    }
}

/// Converts a LAMBDA term into its labeled general tree.
pub fn lambda_to_tree(ast: &LambdaAst) -> GeneralTree {
    match ast {
        LambdaAst::Unit => GeneralTree::leaf(labels::UNIT),
        LambdaAst::Expr(e) => expr_to_tree(e),
        LambdaAst::App { func, args } => {
            let mut children = vec![GeneralTree::leaf(func.as_str())];
            children.extend(args.iter().map(expr_to_tree));
            GeneralTree::node(labels::APP, children)
        }
        LambdaAst::Let { var, bound, body } => GeneralTree::node(
            labels::LET,
            vec![
                GeneralTree::leaf(var.as_str()),
                lambda_to_tree(bound),
                lambda_to_tree(body),
            ],
        ),
        LambdaAst::LetRec {
            func,
            param,
            fn_body,
            body,
        } => GeneralTree::node(
            labels::LETREC,
            vec![
                GeneralTree::leaf(func.as_str()),
                GeneralTree::leaf(param.as_str()),
                lambda_to_tree(fn_body),
                lambda_to_tree(body),
            ],
        ),
        LambdaAst::IfTerm {
            cond,
            then_branch,
            else_branch,
        } => GeneralTree::node(
            labels::IFTERM,
            vec![
                cmp_to_tree(cond),
                lambda_to_tree(then_branch),
                lambda_to_tree(else_branch),
            ],
        ),
    }
}

fn is_const_label(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn tree_to_leaf_var(tree: &GeneralTree) -> Result<String, TreeError> {
    if tree.children.is_empty() && !is_const_label(tree.label.as_str()) {
        Ok(tree.label.as_str().to_owned())
    } else {
        Err(bad(&tree.label, tree.children.len(), "variable"))
    }
}

fn tree_to_operand(tree: &GeneralTree) -> Result<Operand, TreeError> {
    if !tree.children.is_empty() {
        return Err(bad(&tree.label, tree.children.len(), "operand"));
    }
    let text = tree.label.as_str();
    if is_const_label(text) {
        let value = text
            .parse()
            .map_err(|_| bad(&tree.label, 0, "operand literal"))?;
        Ok(Operand::Const(value))
    } else {
        Ok(Operand::Var(text.to_owned()))
    }
}

fn tree_to_expr(tree: &GeneralTree) -> Result<Expr, TreeError> {
    match tree.label.as_str() {
        "+" | "-" if tree.children.len() == 2 => {
            let lhs = Box::new(tree_to_expr(&tree.children[0])?);
            let rhs = tree_to_operand(&tree.children[1])?;
            Ok(if tree.label.as_str() == "+" {
                Expr::Add(lhs, rhs)
            } else {
                Expr::Sub(lhs, rhs)
            })
        }
        _ if tree.children.is_empty() => Ok(match tree_to_operand(tree)? {
            Operand::Var(v) => Expr::Var(v),
            Operand::Const(c) => Expr::Const(c),
        }),
        _ => Err(bad(&tree.label, tree.children.len(), "expression")),
    }
}

fn tree_to_cmp(tree: &GeneralTree) -> Result<Cmp, TreeError> {
    let op = match tree.label.as_str() {
        "==" => CmpOp::Eq,
        ">" => CmpOp::Gt,
        "<" => CmpOp::Lt,
        _ => return Err(bad(&tree.label, tree.children.len(), "comparison")),
    };
    if tree.children.len() != 2 {
        return Err(bad(&tree.label, tree.children.len(), "comparison"));
    }
    Ok(Cmp {
        op,
        lhs: tree_to_expr(&tree.children[0])?,
        rhs: tree_to_expr(&tree.children[1])?,
    })
}

/// Recovers a FOR statement from its labeled general tree.
pub fn tree_to_for(tree: &GeneralTree) -> Result<ForAst, TreeError> {
    match (tree.label.as_str(), tree.children.as_slice()) {
        (labels::ASSIGN, [var, value]) => Ok(ForAst::Assign {
            var: tree_to_leaf_var(var)?,
            value: tree_to_expr(value)?,
        }),
        (labels::IF, [cond, then_branch, else_branch]) => Ok(ForAst::If {
            cond: tree_to_cmp(cond)?,
            then_branch: Box::new(tree_to_for(then_branch)?),
            else_branch: Box::new(tree_to_for(else_branch)?),
        }),
        (labels::FOR, [var, init, cond, step, body]) => Ok(ForAst::For {
            var: tree_to_leaf_var(var)?,
            init: tree_to_expr(init)?,
            cond: tree_to_cmp(cond)?,
            step: tree_to_expr(step)?,
            body: Box::new(tree_to_for(body)?),
        }),
        (labels::SEQ, items) if items.len() >= 2 => Ok(ForAst::Seq(
            items.iter().map(tree_to_for).collect::<Result<_, _>>()?,
        )),
        _ => Err(bad(&tree.label, tree.children.len(), "statement")),
    }
}

/// Recovers a LAMBDA term from its labeled general tree.
pub fn tree_to_lambda(tree: &GeneralTree) -> Result<LambdaAst, TreeError> {
    match (tree.label.as_str(), tree.children.as_slice()) {
        (labels::UNIT, []) => Ok(LambdaAst::Unit),
        (labels::APP, [func, args @ ..]) if !args.is_empty() => Ok(LambdaAst::App {
            func: tree_to_leaf_var(func)?,
            args: args.iter().map(tree_to_expr).collect::<Result<_, _>>()?,
        }),
        (labels::LET, [var, bound, body]) => Ok(LambdaAst::Let {
            var: tree_to_leaf_var(var)?,
            bound: Box::new(tree_to_lambda(bound)?),
            body: Box::new(tree_to_lambda(body)?),
        }),
        (labels::LETREC, [func, param, fn_body, body]) => Ok(LambdaAst::LetRec {
            func: tree_to_leaf_var(func)?,
            param: tree_to_leaf_var(param)?,
            fn_body: Box::new(tree_to_lambda(fn_body)?),
            body: Box::new(tree_to_lambda(body)?),
        }),
        (labels::IFTERM, [cond, then_branch, else_branch]) => Ok(LambdaAst::IfTerm {
            cond: tree_to_cmp(cond)?,
            then_branch: Box::new(tree_to_lambda(then_branch)?),
            else_branch: Box::new(tree_to_lambda(else_branch)?),
        }),
        ("+" | "-", _) | (_, []) => Ok(LambdaAst::Expr(tree_to_expr(tree)?)),
        _ => Err(bad(&tree.label, tree.children.len(), "term")),
    }
}

/// Encodes a general tree as a binary tree: left = first child, right = next
/// sibling. Node count is preserved; the root never has a right child.
pub fn to_lcrs(tree: &GeneralTree) -> BinaryTree {
    BinaryTree {
        label: tree.label.clone(),
        left: lcrs_chain(&tree.children),
        right: None,
    }
}

fn lcrs_chain(nodes: &[GeneralTree]) -> Option<Box<BinaryTree>> {
    let (first, rest) = nodes.split_first()?;
    Some(Box::new(BinaryTree {
        label: first.label.clone(),
        left: lcrs_chain(&first.children),
        right: lcrs_chain(rest),
    }))
}

/// Decodes a left-child right-sibling binary tree back to the general tree.
///
/// Fails if the root has a right child: that sibling would not belong to any
/// single tree.
pub fn from_lcrs(tree: &BinaryTree) -> Result<GeneralTree, TreeError> {
    if tree.right.is_some() {
        return Err(TreeError::RootHasRightSibling);
    }
    Ok(rebuild(tree))
}

fn rebuild(node: &BinaryTree) -> GeneralTree {
    let mut children = Vec::new();
    let mut slot = node.left.as_deref();
    while let Some(child) = slot {
        children.push(rebuild(child));
        slot = child.right.as_deref();
    }
    GeneralTree {
        label: node.label.clone(),
        children,
    }
}

/// Serializes a tree in preorder with explicit brackets around each internal
/// node's child list (format T).
pub fn serialize_dfs(tree: &GeneralTree) -> Vec<Token> {
    let mut out = Vec::new();
    serialize_into(tree, &mut out);
    out
}

fn serialize_into(tree: &GeneralTree, out: &mut Vec<Token>) {
    out.push(tree.label.clone());
    if !tree.children.is_empty() {
        out.push(Token::raw(labels::OPEN));
        for child in &tree.children {
            serialize_into(child, out);
        }
        out.push(Token::raw(labels::CLOSE));
    }
}

/// Parses a format-T token sequence back into the tree it serializes.
pub fn deserialize_dfs(tokens: &[Token]) -> Result<GeneralTree, TreeError> {
    let mut pos = 0;
    let tree = parse_node(tokens, &mut pos)?;
    if pos != tokens.len() {
        return Err(TreeError::BadSerialization {
            position: pos,
            reason: "trailing tokens after a complete tree".to_owned(),
        });
    }
    Ok(tree)
}

fn parse_node(tokens: &[Token], pos: &mut usize) -> Result<GeneralTree, TreeError> {
    let label = match tokens.get(*pos) {
        Some(t) if t.as_str() != labels::OPEN && t.as_str() != labels::CLOSE => t.clone(),
        Some(t) => {
            return Err(TreeError::BadSerialization {
                position: *pos,
                reason: format!("expected a node label, found `{t}`"),
            })
        }
        None => {
            return Err(TreeError::BadSerialization {
                position: *pos,
                reason: "expected a node label, found end of input".to_owned(),
            })
        }
    };
    *pos += 1;
    let mut children = Vec::new();
    if tokens.get(*pos).map(Token::as_str) == Some(labels::OPEN) {
        *pos += 1;
        loop {
            match tokens.get(*pos).map(Token::as_str) {
                Some(s) if s == labels::CLOSE => {
                    *pos += 1;
                    break;
                }
                Some(_) => children.push(parse_node(tokens, pos)?),
                None => {
                    return Err(TreeError::BadSerialization {
                        position: *pos,
                        reason: "unclosed bracket group".to_owned(),
                    })
                }
            }
        }
        if children.is_empty() {
            return Err(TreeError::BadSerialization {
                position: *pos - 1,
                reason: "empty bracket group".to_owned(),
            });
        }
    }
    Ok(GeneralTree { label, children })
}

/// Builds the source and target vocabularies from tree labels in
/// first-occurrence traversal order. The target vocabulary reserves its final
/// slot for the end-of-subtree symbol; bracket tokens are serialization-only
/// and never enter either table.
pub fn build_vocabs<'a, S, T>(sources: S, targets: T) -> (Vocabulary, Vocabulary)
where
    S: IntoIterator<Item = &'a GeneralTree>,
    T: IntoIterator<Item = &'a GeneralTree>,
{
    let source_labels = sources.into_iter().flat_map(GeneralTree::labels_preorder);
    let target_labels = targets.into_iter().flat_map(GeneralTree::labels_preorder);
    (
        Vocabulary::build(source_labels, false),
        Vocabulary::build(target_labels, true),
    )
}
