//! The tree-to-tree encoder/decoder.
//!
//! The encoder folds a binary tree-LSTM over the source tree. The decoder
//! grows the output tree from a FIFO queue of expansion slots: each slot
//! predicts a label through a softmax readout, and a node that predicts the
//! end-of-subtree marker is simply absent. Separate left and right LSTM
//! cells turn a parent state into the two child states.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::{
    lstm_cell, tree_lstm_cell, CellState, DiffError, DropoutMode, LstmParams, ParamId, ParamSet,
    Tape, TreeLstmParams, ValueId,
};
use crate::syntax::Vocabulary;
use crate::tree::BinaryTree;

/// Which pieces of the architecture are enabled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Attention plus parent attention feeding.
    Full,
    /// Attention at prediction time only; child inputs carry just the
    /// parent label embedding.
    NoParentFeed,
    /// No attention anywhere; predictions read the raw decoder state.
    NoAttention,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::NoParentFeed, Variant::NoAttention];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoParentFeed => "no-parent-feed",
            Variant::NoAttention => "no-attention",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Variant::Full),
            "no-parent-feed" => Ok(Variant::NoParentFeed),
            "no-attention" => Ok(Variant::NoAttention),
            other => Err(ModelError::BadConfig(format!(
                "unknown variant `{other}`; expected full, no-parent-feed, or no-attention"
            ))),
        }
    }
}

/// Which decoding budget was exhausted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitKind {
    Nodes,
    Depth,
}

impl fmt::Display for LimitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LimitKind::Nodes => "node",
            LimitKind::Depth => "depth",
        })
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    BadConfig(String),
    #[error("token `{token}` is not in the {side} vocabulary")]
    UnknownToken { token: String, side: &'static str },
    #[error("the end-of-subtree marker cannot label a tree node")]
    EosLabel,
    #[error("the source tree is empty")]
    EmptySource,
    #[error("decoding exceeded the {kind} limit of {limit}")]
    LimitExceeded { kind: LimitKind, limit: usize },
    #[error(transparent)]
    Diff(#[from] DiffError),
}

/// Budgets for greedy decoding. The node budget counts queue insertions
/// (the root counts as one, and every materialized node inserts two more),
/// the depth budget counts nodes along a root-to-node path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeLimits {
    pub max_nodes: usize,
    pub max_depth: usize,
}

impl Default for DecodeLimits {
    fn default() -> Self {
        DecodeLimits {
            max_nodes: 1000,
            max_depth: 80,
        }
    }
}

/// A binary tree flattened to index arrays, with labels resolved against a
/// vocabulary. Index 0 is the root; children always carry higher indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedBinaryTree {
    labels: Vec<usize>,
    left: Vec<Option<usize>>,
    right: Vec<Option<usize>>,
}

impl IndexedBinaryTree {
    /// The tree with no nodes at all.
    pub fn empty() -> Self {
        IndexedBinaryTree {
            labels: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
        }
    }

    /// Indexes a source-side tree.
    pub fn index_source(tree: &BinaryTree, vocab: &Vocabulary) -> Result<Self, ModelError> {
        Self::index_with(tree, vocab, "source")
    }

    /// Indexes a target-side tree.
    pub fn index_target(tree: &BinaryTree, vocab: &Vocabulary) -> Result<Self, ModelError> {
        Self::index_with(tree, vocab, "target")
    }

    fn index_with(
        tree: &BinaryTree,
        vocab: &Vocabulary,
        side: &'static str,
    ) -> Result<Self, ModelError> {
        let mut out = IndexedBinaryTree::empty();
        out.push_node(tree, vocab, side)?;
        Ok(out)
    }

    fn push_node(
        &mut self,
        node: &BinaryTree,
        vocab: &Vocabulary,
        side: &'static str,
    ) -> Result<usize, ModelError> {
        let label = vocab
            .index_of(node.label.as_str())
            .ok_or_else(|| ModelError::UnknownToken {
                token: node.label.as_str().to_owned(),
                side,
            })?;
        if Some(label) == vocab.eos_index() {
            return Err(ModelError::EosLabel);
        }
        let me = self.labels.len();
        self.labels.push(label);
        self.left.push(None);
        self.right.push(None);
        if let Some(l) = &node.left {
            let child = self.push_node(l, vocab, side)?;
            self.left[me] = Some(child);
        }
        if let Some(r) = &node.right {
            let child = self.push_node(r, vocab, side)?;
            self.right[me] = Some(child);
        }
        Ok(me)
    }

    pub fn node_count(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Node indices ordered so that children precede their parent.
    fn post_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.labels.len());
        if self.labels.is_empty() {
            return out;
        }
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            out.push(i);
            if let Some(l) = self.left[i] {
                stack.push(l);
            }
            if let Some(r) = self.right[i] {
                stack.push(r);
            }
        }
        out.reverse();
        out
    }
}

/// Per-node encoder states for one source tree.
pub struct Encoding {
    pub states: Vec<CellState>,
    pub root: CellState,
}

/// Dropout configuration threaded through a forward pass.
pub struct Dropout<'a> {
    pub p: f64,
    pub mode: DropoutMode,
    pub rng: &'a mut dyn rand::RngCore,
}

impl<'a> Dropout<'a> {
    pub fn training(p: f64, rng: &'a mut dyn rand::RngCore) -> Self {
        Dropout {
            p,
            mode: DropoutMode::Training,
            rng,
        }
    }

    pub fn inference(rng: &'a mut dyn rand::RngCore) -> Self {
        Dropout {
            p: 0.0,
            mode: DropoutMode::Inference,
            rng,
        }
    }

    fn apply(&mut self, tape: &mut Tape, x: ValueId) -> Result<ValueId, DiffError> {
        tape.dropout(x, self.p, self.mode, &mut self.rng)
    }
}

/// The teacher-forced loss over one example.
pub struct ForcedLoss {
    pub loss: ValueId,
    /// Number of prediction sites averaged into the loss: one per node plus
    /// one per absent child slot.
    pub site_count: usize,
}

#[derive(Debug, Clone, Copy)]
struct AttnParams {
    w0: ParamId,
    w1: ParamId,
    w2: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct ModelIds {
    src_embed: ParamId,
    encoder: TreeLstmParams,
    dec_embed: ParamId,
    lstm_l: LstmParams,
    lstm_r: LstmParams,
    out_w: ParamId,
    attn: Option<AttnParams>,
}

/// A complete translation model: parameters plus the vocabularies they are
/// tied to.
pub struct Model {
    params: ParamSet,
    d: usize,
    variant: Variant,
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    eos: usize,
    ids: ModelIds,
}

impl Model {
    /// Creates a model with uniformly initialized weights.
    pub fn new(
        d: usize,
        variant: Variant,
        src_vocab: Vocabulary,
        tgt_vocab: Vocabulary,
        init_range: f64,
        rng: &mut impl Rng,
    ) -> Result<Self, ModelError> {
        if d == 0 {
            return Err(ModelError::BadConfig("hidden width must be positive".into()));
        }
        if src_vocab.is_empty() {
            return Err(ModelError::BadConfig("source vocabulary is empty".into()));
        }
        let eos = tgt_vocab.eos_index().ok_or_else(|| {
            ModelError::BadConfig("target vocabulary lacks the end-of-subtree marker".into())
        })?;
        let v_s = src_vocab.len();
        let v_t = tgt_vocab.len();
        let dec_in = Self::decoder_input_width(d, variant);
        let mut params = ParamSet::new();
        let src_embed = params.init_uniform("src_embed", &[d, v_s], init_range, rng)?;
        let encoder = TreeLstmParams::init(&mut params, "enc", d, d, init_range, rng)?;
        let dec_embed = params.init_uniform("dec_embed", &[d, v_t], init_range, rng)?;
        let lstm_l = LstmParams::init(&mut params, "dec.l", dec_in, d, init_range, rng)?;
        let lstm_r = LstmParams::init(&mut params, "dec.r", dec_in, d, init_range, rng)?;
        let out_w = params.init_uniform("out_w", &[v_t, d], init_range, rng)?;
        let attn = if variant == Variant::NoAttention {
            None
        } else {
            Some(AttnParams {
                w0: params.init_uniform("attn.w0", &[d, d], init_range, rng)?,
                w1: params.init_uniform("attn.w1", &[d, d], init_range, rng)?,
                w2: params.init_uniform("attn.w2", &[d, d], init_range, rng)?,
            })
        };
        Ok(Model {
            params,
            d,
            variant,
            src_vocab,
            tgt_vocab,
            eos,
            ids: ModelIds {
                src_embed,
                encoder,
                dec_embed,
                lstm_l,
                lstm_r,
                out_w,
                attn,
            },
        })
    }

    /// Reassembles a model around an existing parameter set, checking that
    /// every expected tensor is present with the right shape.
    pub fn from_params(
        params: ParamSet,
        d: usize,
        variant: Variant,
        src_vocab: Vocabulary,
        tgt_vocab: Vocabulary,
    ) -> Result<Self, ModelError> {
        if d == 0 {
            return Err(ModelError::BadConfig("hidden width must be positive".into()));
        }
        let eos = tgt_vocab.eos_index().ok_or_else(|| {
            ModelError::BadConfig("target vocabulary lacks the end-of-subtree marker".into())
        })?;
        let find = |name: &str| {
            params
                .id_of(name)
                .ok_or_else(|| ModelError::BadConfig(format!("missing parameter `{name}`")))
        };
        let src_embed = find("src_embed")?;
        let encoder = TreeLstmParams::find(&params, "enc")
            .map_err(|e| ModelError::BadConfig(e.to_string()))?;
        let dec_embed = find("dec_embed")?;
        let lstm_l =
            LstmParams::find(&params, "dec.l").map_err(|e| ModelError::BadConfig(e.to_string()))?;
        let lstm_r =
            LstmParams::find(&params, "dec.r").map_err(|e| ModelError::BadConfig(e.to_string()))?;
        let out_w = find("out_w")?;
        let attn = if variant == Variant::NoAttention {
            None
        } else {
            Some(AttnParams {
                w0: find("attn.w0")?,
                w1: find("attn.w1")?,
                w2: find("attn.w2")?,
            })
        };

        let v_s = src_vocab.len();
        let v_t = tgt_vocab.len();
        let dec_in = Self::decoder_input_width(d, variant);
        let mut expected: Vec<(ParamId, Vec<usize>)> = vec![
            (src_embed, vec![d, v_s]),
            (dec_embed, vec![d, v_t]),
            (out_w, vec![v_t, d]),
        ];
        for slot in 0..5 {
            expected.push((encoder.w[slot], vec![d, d]));
            expected.push((encoder.u[slot], vec![d, 2 * d]));
            expected.push((encoder.b[slot], vec![d]));
        }
        for cell in [&lstm_l, &lstm_r] {
            for slot in 0..4 {
                expected.push((cell.w[slot], vec![d, dec_in]));
                expected.push((cell.u[slot], vec![d, d]));
                expected.push((cell.b[slot], vec![d]));
            }
        }
        if let Some(a) = &attn {
            for id in [a.w0, a.w1, a.w2] {
                expected.push((id, vec![d, d]));
            }
        }
        for (id, shape) in expected {
            let got = params.value(id).shape();
            if got != shape.as_slice() {
                return Err(ModelError::BadConfig(format!(
                    "parameter `{}` has shape {:?}, expected {:?}",
                    params.get(id).name(),
                    got,
                    shape
                )));
            }
        }

        Ok(Model {
            params,
            d,
            variant,
            src_vocab,
            tgt_vocab,
            eos,
            ids: ModelIds {
                src_embed,
                encoder,
                dec_embed,
                lstm_l,
                lstm_r,
                out_w,
                attn,
            },
        })
    }

    fn decoder_input_width(d: usize, variant: Variant) -> usize {
        match variant {
            Variant::Full => 2 * d,
            Variant::NoParentFeed | Variant::NoAttention => d,
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn src_vocab(&self) -> &Vocabulary {
        &self.src_vocab
    }

    pub fn tgt_vocab(&self) -> &Vocabulary {
        &self.tgt_vocab
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Total number of trainable scalars.
    pub fn weight_count(&self) -> usize {
        self.params.iter().map(|(_, p)| p.value().len()).sum()
    }

    /// Runs the tree-LSTM encoder over a source tree, producing one state
    /// per node. Missing children contribute all-zero states.
    pub fn encode(&self, tape: &mut Tape, src: &IndexedBinaryTree) -> Result<Encoding, ModelError> {
        if src.is_empty() {
            return Err(ModelError::EmptySource);
        }
        let zero = CellState::zeros(tape, self.d);
        let mut states = vec![zero; src.node_count()];
        for idx in src.post_order() {
            let x = tape.embed_col(&self.params, self.ids.src_embed, src.labels[idx])?;
            let left = src.left[idx].map_or(zero, |i| states[i]);
            let right = src.right[idx].map_or(zero, |i| states[i]);
            states[idx] = tree_lstm_cell(tape, &self.params, &self.ids.encoder, x, left, right)?;
        }
        let root = states[0];
        Ok(Encoding { states, root })
    }

    /// The context vector a decoder state predicts from: an attention
    /// combination of encoder states, or the raw state when attention is
    /// disabled.
    fn combine(
        &self,
        tape: &mut Tape,
        enc_states: &[CellState],
        h: ValueId,
    ) -> Result<ValueId, DiffError> {
        match &self.ids.attn {
            None => Ok(h),
            Some(attn) => {
                let query = tape.matvec(&self.params, attn.w0, h)?;
                let keys: Vec<ValueId> = enc_states.iter().map(|s| s.h).collect();
                let scores = tape.scores_against(&keys, query)?;
                let weights = tape.softmax(scores)?;
                let pooled = tape.weighted_sum(weights, &keys)?;
                let a = tape.matvec(&self.params, attn.w1, pooled)?;
                let b = tape.matvec(&self.params, attn.w2, h)?;
                let sum = tape.add(a, b)?;
                tape.tanh(sum)
            }
        }
    }

    /// Label distribution for one expansion slot.
    fn predict(
        &self,
        tape: &mut Tape,
        context: ValueId,
        drop: &mut Dropout,
    ) -> Result<ValueId, DiffError> {
        let dropped = drop.apply(tape, context)?;
        let logits = tape.matvec(&self.params, self.ids.out_w, dropped)?;
        tape.softmax(logits)
    }

    /// Input vector fed to a child cell: the parent label embedding, with
    /// the parent context appended when parent feeding is enabled.
    fn child_input(
        &self,
        tape: &mut Tape,
        parent_embed: ValueId,
        parent_context: ValueId,
        drop: &mut Dropout,
    ) -> Result<ValueId, DiffError> {
        let x = match self.variant {
            Variant::Full => tape.concat(parent_embed, parent_context)?,
            Variant::NoParentFeed | Variant::NoAttention => parent_embed,
        };
        drop.apply(tape, x)
    }

    /// Mean cross-entropy over every prediction site of a gold target tree:
    /// each node must predict its label, each absent child slot (and the
    /// root slot of an empty tree) must predict the end-of-subtree marker.
    /// Child states are driven by gold labels.
    pub fn teacher_forced_loss(
        &self,
        tape: &mut Tape,
        src: &IndexedBinaryTree,
        tgt: &IndexedBinaryTree,
        drop: &mut Dropout,
    ) -> Result<ForcedLoss, ModelError> {
        let enc = self.encode(tape, src)?;
        self.teacher_forced_loss_with(tape, &enc, tgt, drop)
    }

    pub(crate) fn teacher_forced_loss_with(
        &self,
        tape: &mut Tape,
        enc: &Encoding,
        tgt: &IndexedBinaryTree,
        drop: &mut Dropout,
    ) -> Result<ForcedLoss, ModelError> {
        let mut sites = Vec::new();
        if tgt.is_empty() {
            let context = self.combine(tape, &enc.states, enc.root.h)?;
            let probs = self.predict(tape, context, drop)?;
            sites.push(tape.cross_entropy(probs, self.eos)?);
        } else {
            self.forced_node(tape, enc, tgt, 0, enc.root, drop, &mut sites)?;
        }
        let loss = tape.mean(&sites)?;
        Ok(ForcedLoss {
            loss,
            site_count: sites.len(),
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn forced_node(
        &self,
        tape: &mut Tape,
        enc: &Encoding,
        tgt: &IndexedBinaryTree,
        node: usize,
        state: CellState,
        drop: &mut Dropout,
        sites: &mut Vec<ValueId>,
    ) -> Result<(), ModelError> {
        let context = self.combine(tape, &enc.states, state.h)?;
        let probs = self.predict(tape, context, drop)?;
        let gold = tgt.labels[node];
        sites.push(tape.cross_entropy(probs, gold)?);
        let embed = tape.embed_col(&self.params, self.ids.dec_embed, gold)?;
        for (cell, child) in [
            (&self.ids.lstm_l, tgt.left[node]),
            (&self.ids.lstm_r, tgt.right[node]),
        ] {
            let x = self.child_input(tape, embed, context, drop)?;
            let next = lstm_cell(tape, &self.params, cell, x, state)?;
            match child {
                Some(c) => self.forced_node(tape, enc, tgt, c, next, drop, sites)?,
                None => {
                    let ctx = self.combine(tape, &enc.states, next.h)?;
                    let probs = self.predict(tape, ctx, drop)?;
                    sites.push(tape.cross_entropy(probs, self.eos)?);
                }
            }
        }
        Ok(())
    }

    /// Greedily decodes an output tree, expanding slots in FIFO order and
    /// taking the argmax label at every site (ties break to the lowest
    /// index). Returns `None` when the root slot predicts end-of-subtree.
    pub fn decode_greedy(
        &self,
        src: &IndexedBinaryTree,
        limits: DecodeLimits,
    ) -> Result<Option<BinaryTree>, ModelError> {
        let mut tape = Tape::new();
        let enc = self.encode(&mut tape, src)?;
        self.decode_greedy_with(&mut tape, &enc, limits)
    }

    pub(crate) fn decode_greedy_with(
        &self,
        tape: &mut Tape,
        enc: &Encoding,
        limits: DecodeLimits,
    ) -> Result<Option<BinaryTree>, ModelError> {
        struct Built {
            label: usize,
            left: Option<usize>,
            right: Option<usize>,
        }
        enum Link {
            Root,
            Child { parent: usize, is_left: bool },
        }
        struct Pending {
            state: CellState,
            depth: usize,
            link: Link,
        }

        let mut noop_rng = ChaCha8Rng::seed_from_u64(0);
        let mut drop = Dropout::inference(&mut noop_rng);
        let mut arena: Vec<Built> = Vec::new();
        let mut queue = VecDeque::new();
        queue.push_back(Pending {
            state: enc.root,
            depth: 1,
            link: Link::Root,
        });
        let mut inserted: usize = 1;

        while let Some(pending) = queue.pop_front() {
            let context = self.combine(tape, &enc.states, pending.state.h)?;
            let probs = self.predict(tape, context, &mut drop)?;
            let label = argmax(tape.value(probs));
            if label == self.eos {
                continue;
            }
            if pending.depth > limits.max_depth {
                return Err(ModelError::LimitExceeded {
                    kind: LimitKind::Depth,
                    limit: limits.max_depth,
                });
            }
            if inserted + 2 > limits.max_nodes {
                return Err(ModelError::LimitExceeded {
                    kind: LimitKind::Nodes,
                    limit: limits.max_nodes,
                });
            }
            let idx = arena.len();
            arena.push(Built {
                label,
                left: None,
                right: None,
            });
            match pending.link {
                Link::Root => {}
                Link::Child { parent, is_left } => {
                    if is_left {
                        arena[parent].left = Some(idx);
                    } else {
                        arena[parent].right = Some(idx);
                    }
                }
            }
            let embed = tape.embed_col(&self.params, self.ids.dec_embed, label)?;
            for (cell, is_left) in [(&self.ids.lstm_l, true), (&self.ids.lstm_r, false)] {
                let x = self.child_input(tape, embed, context, &mut drop)?;
                let state = lstm_cell(tape, &self.params, cell, x, pending.state)?;
                queue.push_back(Pending {
                    state,
                    depth: pending.depth + 1,
                    link: Link::Child {
                        parent: idx,
                        is_left,
                    },
                });
            }
            inserted += 2;
        }

        if arena.is_empty() {
            return Ok(None);
        }
        fn rebuild(arena: &[Built], idx: usize, vocab: &Vocabulary) -> BinaryTree {
            BinaryTree {
                label: vocab
                    .token_at(arena[idx].label)
                    .expect("label indices come from this vocabulary")
                    .clone(),
                left: arena[idx]
                    .left
                    .map(|i| Box::new(rebuild(arena, i, vocab))),
                right: arena[idx]
                    .right
                    .map(|i| Box::new(rebuild(arena, i, vocab))),
            }
        }
        Ok(Some(rebuild(&arena, 0, &self.tgt_vocab)))
    }
}

/// Index of the largest value; the first one wins on exact ties.
fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in xs.iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}
