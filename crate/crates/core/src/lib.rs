//! Tree-to-tree neural program translation.
//!
//! This crate implements an end-to-end pipeline that learns to translate
//! imperative FOR-loop programs into functional LAMBDA terms:
//!
//! * [`syntax`]: ASTs for both languages, token rendering, and a FOR parser.
//! * [`oracle`]: the deterministic reference translator used to label data.
//! * [`generator`]: a weighted-grammar sampler that builds datasets.
//! * [`tree`]: general/binary tree forms, left-child right-sibling encoding,
//!   and the bracketed token serialization shared by all tools.
//! * [`diff`]: a small reverse-mode automatic differentiation engine with the
//!   LSTM and tree-LSTM cells the model is built from.
//! * [`model`]: the tree-to-tree encoder/decoder with attention.
//! * [`trainer`]: training loop, evaluation, and accuracy metrics.
//! * [`dataset`] / [`checkpoint`]: on-disk formats for corpora and weights.
//! * [`gradcheck`]: finite-difference verification of every gradient path.
//!
//! The `t2t` binary exposes the pipeline as a command line tool.

pub mod checkpoint;
pub mod dataset;
pub mod diff;
pub mod generator;
pub mod gradcheck;
pub mod model;
pub mod oracle;
pub mod syntax;
pub mod trainer;
pub mod tree;
