//! Abstract syntax for the FOR (imperative source) and LAMBDA (functional
//! target) languages, their flat token rendering (format P), and a
//! recursive-descent parser for FOR.
//!
//! Format P is the raw program text: tokens joined by single spaces, one
//! program per line. Every keyword, operator, variable, and literal is a
//! single token.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

/// Reserved end-of-subtree symbol appended to decoder vocabularies. It never
/// appears in program text, so it cannot collide with real tokens.
pub const EOS_TOKEN: &str = "<EOS>";

/// Internal name of the throwaway binder introduced when sequencing
/// statements; rendered as `_` in program text.
pub const BLANK_VAR: &str = "blank";

/// Internal name of the recursive function introduced for loops; rendered as
/// `f` in program text.
pub const FUNC_VAR: &str = "func";

/// A single lexical token: non-empty text with no internal whitespace.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Token(String);

/// Error returned when constructing a [`Token`] from invalid text.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid token text {text:?}: must be non-empty and contain no whitespace")]
pub struct InvalidTokenError {
    pub text: String,
}

impl Token {
    /// Creates a token, validating that the text is non-empty and free of
    /// whitespace.
    pub fn new(text: impl Into<String>) -> Result<Self, InvalidTokenError> {
        let text = text.into();
        if text.is_empty() || text.chars().any(char::is_whitespace) {
            return Err(InvalidTokenError { text });
        }
        Ok(Token(text))
    }

    /// Internal constructor for token text known to be valid.
    pub(crate) fn raw(text: impl Into<String>) -> Self {
        let text = text.into();
        debug_assert!(
            !text.is_empty() && !text.chars().any(char::is_whitespace),
            "invalid raw token {text:?}"
        );
        Token(text)
    }

    /// The token text.
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Splits a line of program text into tokens on whitespace.
pub fn tokenize(line: &str) -> Vec<Token> {
    line.split_whitespace().map(Token::raw).collect()
}

/// Joins tokens with single spaces, producing one line of program text.
pub fn join_tokens(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(t.as_str());
    }
    out
}

/// The right-hand operand of `+` / `-`: restricted by both grammars to a
/// variable or a literal, never a nested expression.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Operand {
    Var(String),
    Const(u32),
}

impl Operand {
    /// Views the operand as an [`Expr`] leaf.
    pub fn to_expr(&self) -> Expr {
        match self {
            Operand::Var(v) => Expr::Var(v.clone()),
            Operand::Const(c) => Expr::Const(*c),
        }
    }
}

/// Arithmetic expressions, shared by both languages. The grammar is
/// left-recursive: an expression is a variable or literal optionally extended
/// by `+`/`-` with a variable or literal on the right.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Var(String),
    Const(u32),
    Add(Box<Expr>, Operand),
    Sub(Box<Expr>, Operand),
}

/// Comparison operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Gt,
    Lt,
}

impl CmpOp {
    /// The operator's token text.
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Gt => ">",
            CmpOp::Lt => "<",
        }
    }
}

/// A comparison between two expressions.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Cmp {
    pub op: CmpOp,
    pub lhs: Expr,
    pub rhs: Expr,
}

/// Statements of the FOR language.
///
/// `Seq` holds two or more non-`Seq` statements; sequencing is flattened
/// during parsing, mirroring the left-recursive grammar production.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ForAst {
    Assign {
        var: String,
        value: Expr,
    },
    If {
        cond: Cmp,
        then_branch: Box<ForAst>,
        else_branch: Box<ForAst>,
    },
    For {
        var: String,
        init: Expr,
        cond: Cmp,
        step: Expr,
        body: Box<ForAst>,
    },
    Seq(Vec<ForAst>),
}

impl ForAst {
    /// True for the three single-statement forms (everything except `Seq`).
    pub fn is_single(&self) -> bool {
        !matches!(self, ForAst::Seq(_))
    }

    /// Checks the structural invariants that the grammar imposes beyond what
    /// the type system enforces: every `Seq` holds at least two elements and
    /// none of them is itself a `Seq`.
    pub fn is_well_formed(&self) -> bool {
        match self {
            ForAst::Assign { .. } => true,
            ForAst::If {
                then_branch,
                else_branch,
                ..
            } => then_branch.is_well_formed() && else_branch.is_well_formed(),
            ForAst::For { body, .. } => body.is_well_formed(),
            ForAst::Seq(items) => {
                items.len() >= 2 && items.iter().all(|s| s.is_single() && s.is_well_formed())
            }
        }
    }
}

/// Terms of the LAMBDA language.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LambdaAst {
    Unit,
    Expr(Expr),
    /// Application of a function variable to one or more expression
    /// arguments, written by juxtaposition.
    App {
        func: String,
        args: Vec<Expr>,
    },
    Let {
        var: String,
        bound: Box<LambdaAst>,
        body: Box<LambdaAst>,
    },
    /// `letrec f x = fn_body in body`: a recursive function of exactly one
    /// parameter.
    LetRec {
        func: String,
        param: String,
        fn_body: Box<LambdaAst>,
        body: Box<LambdaAst>,
    },
    IfTerm {
        cond: Cmp,
        then_branch: Box<LambdaAst>,
        else_branch: Box<LambdaAst>,
    },
}

impl LambdaAst {
    /// Checks invariants not captured by the type: applications have at
    /// least one argument.
    pub fn is_well_formed(&self) -> bool {
        match self {
            LambdaAst::Unit | LambdaAst::Expr(_) => true,
            LambdaAst::App { args, .. } => !args.is_empty(),
            LambdaAst::Let { bound, body, .. } => bound.is_well_formed() && body.is_well_formed(),
            LambdaAst::LetRec { fn_body, body, .. } => {
                fn_body.is_well_formed() && body.is_well_formed()
            }
            LambdaAst::IfTerm {
                then_branch,
                else_branch,
                ..
            } => then_branch.is_well_formed() && else_branch.is_well_formed(),
        }
    }
}

/// Maps internal variable names to their surface spelling in LAMBDA program
/// text: the sequencing binder prints as `_` and the loop function as `f`.
pub fn lambda_surface_name(name: &str) -> &str {
    match name {
        BLANK_VAR => "_",
        FUNC_VAR => "f",
        other => other,
    }
}

fn render_expr(expr: &Expr, out: &mut Vec<Token>, surface: bool) {
    let name = |v: &str| {
        if surface {
            Token::raw(lambda_surface_name(v))
        } else {
            Token::raw(v)
        }
    };
    match expr {
        Expr::Var(v) => out.push(name(v)),
        Expr::Const(c) => out.push(Token::raw(c.to_string())),
        Expr::Add(lhs, rhs) | Expr::Sub(lhs, rhs) => {
            render_expr(lhs, out, surface);
            out.push(Token::raw(if matches!(expr, Expr::Add(..)) {
                "+"
            } else {
                "-"
            }));
            match rhs {
                Operand::Var(v) => out.push(name(v)),
                Operand::Const(c) => out.push(Token::raw(c.to_string())),
            }
        }
    }
}

fn render_cmp(cmp: &Cmp, out: &mut Vec<Token>, surface: bool) {
    render_expr(&cmp.lhs, out, surface);
    out.push(Token::raw(cmp.op.symbol()));
    render_expr(&cmp.rhs, out, surface);
}

/// Renders a FOR program to its token sequence (format P).
pub fn render_for(ast: &ForAst) -> Vec<Token> {
    let mut out = Vec::new();
    render_for_into(ast, &mut out);
    out
}

fn render_for_into(ast: &ForAst, out: &mut Vec<Token>) {
    match ast {
        ForAst::Assign { var, value } => {
            out.push(Token::raw(var));
            out.push(Token::raw("="));
            render_expr(value, out, false);
        }
        ForAst::If {
            cond,
            then_branch,
            else_branch,
        } => {
            out.push(Token::raw("if"));
            render_cmp(cond, out, false);
            out.push(Token::raw("then"));
            render_for_into(then_branch, out);
            out.push(Token::raw("else"));
            render_for_into(else_branch, out);
            out.push(Token::raw("endif"));
        }
        ForAst::For {
            var,
            init,
            cond,
            step,
            body,
        } => {
            out.push(Token::raw("for"));
            out.push(Token::raw(var));
            out.push(Token::raw("="));
            render_expr(init, out, false);
            out.push(Token::raw(";"));
            render_cmp(cond, out, false);
            out.push(Token::raw(";"));
            render_expr(step, out, false);
            out.push(Token::raw("do"));
            render_for_into(body, out);
            out.push(Token::raw("endfor"));
        }
        ForAst::Seq(items) => {
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(Token::raw(";"));
                }
                render_for_into(item, out);
            }
        }
    }
}

/// Renders a LAMBDA term to its token sequence (format P).
pub fn render_lambda(ast: &LambdaAst) -> Vec<Token> {
    let mut out = Vec::new();
    render_lambda_into(ast, &mut out);
    out
}

fn render_lambda_into(ast: &LambdaAst, out: &mut Vec<Token>) {
    match ast {
        LambdaAst::Unit => out.push(Token::raw("()")),
        LambdaAst::Expr(e) => render_expr(e, out, true),
        LambdaAst::App { func, args } => {
            out.push(Token::raw(lambda_surface_name(func)));
            for arg in args {
                render_expr(arg, out, true);
            }
        }
        LambdaAst::Let { var, bound, body } => {
            out.push(Token::raw("let"));
            out.push(Token::raw(lambda_surface_name(var)));
            out.push(Token::raw("="));
            render_lambda_into(bound, out);
            out.push(Token::raw("in"));
            render_lambda_into(body, out);
        }
        LambdaAst::LetRec {
            func,
            param,
            fn_body,
            body,
        } => {
            out.push(Token::raw("letrec"));
            out.push(Token::raw(lambda_surface_name(func)));
            out.push(Token::raw(lambda_surface_name(param)));
            out.push(Token::raw("="));
            render_lambda_into(fn_body, out);
            out.push(Token::raw("in"));
            render_lambda_into(body, out);
        }
        LambdaAst::IfTerm {
            cond,
            then_branch,
            else_branch,
        } => {
            out.push(Token::raw("if"));
            render_cmp(cond, out, true);
            out.push(Token::raw("then"));
            render_lambda_into(then_branch, out);
            out.push(Token::raw("else"));
            render_lambda_into(else_branch, out);
        }
    }
}

/// Parse error: the token at `position` (0-based; equal to the input length
/// when the input ended too early) does not fit the grammar.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SyntaxError {
    #[error("unexpected token `{found}` at position {position}: expected {expected}")]
    UnexpectedToken {
        position: usize,
        found: String,
        expected: String,
    },
    #[error("unexpected end of input at position {position}: expected {expected}")]
    UnexpectedEnd { position: usize, expected: String },
}

impl SyntaxError {
    /// The offending token position.
    pub fn position(&self) -> usize {
        match self {
            SyntaxError::UnexpectedToken { position, .. }
            | SyntaxError::UnexpectedEnd { position, .. } => *position,
        }
    }
}

const FOR_KEYWORDS: [&str; 7] = ["for", "do", "endfor", "if", "then", "else", "endif"];

fn is_const_text(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn is_var_text(s: &str) -> bool {
    let mut chars = s.chars();
    let starts_ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_');
    starts_ok
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !FOR_KEYWORDS.contains(&s)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a str> {
        self.tokens.get(self.pos).map(Token::as_str)
    }

    fn fail(&self, expected: &str) -> SyntaxError {
        match self.tokens.get(self.pos) {
            Some(tok) => SyntaxError::UnexpectedToken {
                position: self.pos,
                found: tok.as_str().to_owned(),
                expected: expected.to_owned(),
            },
            None => SyntaxError::UnexpectedEnd {
                position: self.pos,
                expected: expected.to_owned(),
            },
        }
    }

    fn expect(&mut self, keyword: &str) -> Result<(), SyntaxError> {
        if self.peek() == Some(keyword) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.fail(&format!("`{keyword}`")))
        }
    }

    fn var(&mut self) -> Result<String, SyntaxError> {
        match self.peek() {
            Some(s) if is_var_text(s) => {
                self.pos += 1;
                Ok(s.to_owned())
            }
            _ => Err(self.fail("a variable")),
        }
    }

    fn const_lit(&mut self, text: &str) -> Result<u32, SyntaxError> {
        let value: u32 = text
            .parse()
            .map_err(|_| self.fail("an integer literal in range"))?;
        self.pos += 1;
        Ok(value)
    }

    fn operand(&mut self) -> Result<Operand, SyntaxError> {
        match self.peek() {
            Some(s) if is_const_text(s) => Ok(Operand::Const(self.const_lit(s)?)),
            Some(s) if is_var_text(s) => {
                self.pos += 1;
                Ok(Operand::Var(s.to_owned()))
            }
            _ => Err(self.fail("a variable or literal")),
        }
    }

    fn expr(&mut self) -> Result<Expr, SyntaxError> {
        let mut expr = match self.peek() {
            Some(s) if is_const_text(s) => Expr::Const(self.const_lit(s)?),
            Some(s) if is_var_text(s) => {
                self.pos += 1;
                Expr::Var(s.to_owned())
            }
            _ => return Err(self.fail("an expression")),
        };
        loop {
            match self.peek() {
                Some("+") => {
                    self.pos += 1;
                    expr = Expr::Add(Box::new(expr), self.operand()?);
                }
                Some("-") => {
                    self.pos += 1;
                    expr = Expr::Sub(Box::new(expr), self.operand()?);
                }
                _ => return Ok(expr),
            }
        }
    }

    fn cmp(&mut self) -> Result<Cmp, SyntaxError> {
        let lhs = self.expr()?;
        let op = match self.peek() {
            Some("==") => CmpOp::Eq,
            Some(">") => CmpOp::Gt,
            Some("<") => CmpOp::Lt,
            _ => return Err(self.fail("a comparison operator (`==`, `>`, `<`)")),
        };
        self.pos += 1;
        let rhs = self.expr()?;
        Ok(Cmp { op, lhs, rhs })
    }

    fn single(&mut self) -> Result<ForAst, SyntaxError> {
        match self.peek() {
            Some("if") => {
                self.pos += 1;
                let cond = self.cmp()?;
                self.expect("then")?;
                let then_branch = Box::new(self.statement()?);
                self.expect("else")?;
                let else_branch = Box::new(self.statement()?);
                self.expect("endif")?;
                Ok(ForAst::If {
                    cond,
                    then_branch,
                    else_branch,
                })
            }
            Some("for") => {
                self.pos += 1;
                let var = self.var()?;
                self.expect("=")?;
                let init = self.expr()?;
                self.expect(";")?;
                let cond = self.cmp()?;
                self.expect(";")?;
                let step = self.expr()?;
                self.expect("do")?;
                let body = Box::new(self.statement()?);
                self.expect("endfor")?;
                Ok(ForAst::For {
                    var,
                    init,
                    cond,
                    step,
                    body,
                })
            }
            _ => {
                let var = self.var()?;
                self.expect("=")?;
                let value = self.expr()?;
                Ok(ForAst::Assign { var, value })
            }
        }
    }

    fn statement(&mut self) -> Result<ForAst, SyntaxError> {
        let mut items = vec![self.single()?];
        while self.peek() == Some(";") {
            self.pos += 1;
            items.push(self.single()?);
        }
        if items.len() == 1 {
            Ok(items.pop().expect("one item"))
        } else {
            Ok(ForAst::Seq(items))
        }
    }
}

/// Parses a FOR program from its token sequence (format P).
///
/// The entire input must form exactly one statement; trailing tokens are
/// rejected.
pub fn parse_for(tokens: &[Token]) -> Result<ForAst, SyntaxError> {
    let mut parser = Parser { tokens, pos: 0 };
    let ast = parser.statement()?;
    if parser.pos != tokens.len() {
        return Err(parser.fail("end of input"));
    }
    debug_assert!(ast.is_well_formed());
    Ok(ast)
}

/// Error returned when assembling a [`Vocabulary`] from inconsistent parts.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid vocabulary: {reason}")]
pub struct InvalidVocabError {
    pub reason: String,
}

/// An ordered, duplicate-free token table with dense indices. Decoder-side
/// vocabularies reserve the final slot for [`EOS_TOKEN`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<Token>,
    index: HashMap<String, usize>,
    eos: Option<usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from tokens in first-occurrence order, optionally
    /// appending [`EOS_TOKEN`] at the end.
    pub fn build<I>(items: I, include_eos: bool) -> Self
    where
        I: IntoIterator<Item = Token>,
    {
        let mut vocab = Vocabulary {
            tokens: Vec::new(),
            index: HashMap::new(),
            eos: None,
        };
        for token in items {
            vocab.insert(token);
        }
        if include_eos {
            let idx = vocab.insert(Token::raw(EOS_TOKEN));
            vocab.eos = Some(idx);
            debug_assert_eq!(idx, vocab.tokens.len() - 1, "EOS must be the final entry");
        }
        vocab
    }

    /// Reassembles a vocabulary from an explicit token list, validating
    /// uniqueness and the EOS position.
    pub fn from_parts(tokens: Vec<Token>, has_eos: bool) -> Result<Self, InvalidVocabError> {
        let mut index = HashMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.as_str().to_owned(), i).is_some() {
                return Err(InvalidVocabError {
                    reason: format!("duplicate token `{t}`"),
                });
            }
        }
        let eos = if has_eos {
            match tokens.last() {
                Some(t) if t.as_str() == EOS_TOKEN => Some(tokens.len() - 1),
                _ => {
                    return Err(InvalidVocabError {
                        reason: format!("`{EOS_TOKEN}` must be the final entry"),
                    })
                }
            }
        } else {
            if index.contains_key(EOS_TOKEN) {
                return Err(InvalidVocabError {
                    reason: format!("unexpected `{EOS_TOKEN}` in a vocabulary without one"),
                });
            }
            None
        };
        Ok(Vocabulary { tokens, index, eos })
    }

    fn insert(&mut self, token: Token) -> usize {
        if let Some(&i) = self.index.get(token.as_str()) {
            return i;
        }
        let i = self.tokens.len();
        self.index.insert(token.as_str().to_owned(), i);
        self.tokens.push(token);
        i
    }

    /// Index of a token's text, if present.
    pub fn index_of(&self, text: &str) -> Option<usize> {
        self.index.get(text).copied()
    }

    /// Token at an index.
    pub fn token_at(&self, index: usize) -> Option<&Token> {
        self.tokens.get(index)
    }

    /// Index of [`EOS_TOKEN`], when this vocabulary carries one.
    pub fn eos_index(&self) -> Option<usize> {
        self.eos
    }

    /// Number of entries.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// True when the table is empty.
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// All tokens in index order.
    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }
}
