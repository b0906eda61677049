//! Binary model checkpoints.
//!
//! Layout: an 8-byte magic tag, a length-prefixed JSON header carrying the
//! model configuration and both vocabularies, then length-prefixed named
//! tensors with their dimensions and a row-major little-endian 64-bit
//! payload.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::diff::{ParamSet, TensorValue};
use crate::model::{Model, ModelError, Variant};
use crate::syntax::{Token, Vocabulary};

pub const FORMAT_VERSION: u32 = 1;

const MAGIC: &[u8; 8] = b"T2TCKPT\n";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("corrupt checkpoint: {reason}")]
    Corrupt { reason: String },
    #[error("checkpoint mismatch: {reason}")]
    Mismatch { reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn corrupt(reason: impl Into<String>) -> CheckpointError {
    CheckpointError::Corrupt {
        reason: reason.into(),
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    d: usize,
    v_s: usize,
    v_t: usize,
    variant: Variant,
    src_tokens: Vec<String>,
    src_has_eos: bool,
    tgt_tokens: Vec<String>,
    tgt_has_eos: bool,
    src_sha256: String,
    tgt_sha256: String,
}

fn vocab_hash(vocab: &Vocabulary) -> String {
    let mut hasher = Sha256::new();
    for t in vocab.tokens() {
        hasher.update(t.as_str().as_bytes());
        hasher.update(b"\n");
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        use std::fmt::Write as _;
        write!(hex, "{byte:02x}").expect("writing to a string");
    }
    hex
}

/// Saves a model. The byte content is a pure function of the model, so
/// identical models produce identical files.
pub fn save(path: &Path, model: &Model) -> Result<(), CheckpointError> {
    let header = Header {
        format_version: FORMAT_VERSION,
        d: model.d(),
        v_s: model.src_vocab().len(),
        v_t: model.tgt_vocab().len(),
        variant: model.variant(),
        src_tokens: model
            .src_vocab()
            .tokens()
            .iter()
            .map(|t| t.as_str().to_owned())
            .collect(),
        src_has_eos: model.src_vocab().eos_index().is_some(),
        tgt_tokens: model
            .tgt_vocab()
            .tokens()
            .iter()
            .map(|t| t.as_str().to_owned())
            .collect(),
        tgt_has_eos: model.tgt_vocab().eos_index().is_some(),
        src_sha256: vocab_hash(model.src_vocab()),
        tgt_sha256: vocab_hash(model.tgt_vocab()),
    };
    let header_bytes =
        serde_json::to_vec(&header).map_err(|e| corrupt(format!("header encoding: {e}")))?;

    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_bytes);
    let params = model.params();
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (_, p) in params.iter() {
        let name = p.name().as_bytes();
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name);
        let value = p.value();
        buf.extend_from_slice(&(value.shape().len() as u32).to_le_bytes());
        for &dim in value.shape() {
            buf.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        for &x in value.data() {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| CheckpointError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| corrupt(format!("truncated while reading {what}")))?;
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64, CheckpointError> {
        let b = self.take(8, what)?;
        Ok(u64::from_le_bytes(b.try_into().expect("8 bytes")))
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn rebuild_vocab(
    tokens: &[String],
    has_eos: bool,
    expected_len: usize,
    expected_hash: &str,
    side: &str,
) -> Result<Vocabulary, CheckpointError> {
    if tokens.len() != expected_len {
        return Err(corrupt(format!(
            "{side} vocabulary lists {} tokens but declares {expected_len}",
            tokens.len()
        )));
    }
    let tokens: Vec<Token> = tokens
        .iter()
        .map(|t| Token::new(t.clone()).map_err(|e| corrupt(format!("{side} vocabulary: {e}"))))
        .collect::<Result<_, _>>()?;
    let vocab = Vocabulary::from_parts(tokens, has_eos)
        .map_err(|e| corrupt(format!("{side} vocabulary: {e}")))?;
    if vocab_hash(&vocab) != expected_hash {
        return Err(corrupt(format!("{side} vocabulary hash does not match")));
    }
    Ok(vocab)
}

/// Loads a model, validating the header, the vocabulary hashes, and every
/// tensor shape.
pub fn load(path: &Path) -> Result<Model, CheckpointError> {
    let bytes = fs::read(path).map_err(|e| CheckpointError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    if r.take(8, "magic tag")? != MAGIC {
        return Err(corrupt("not a checkpoint file (bad magic tag)"));
    }
    let header_len = r.u32("header length")? as usize;
    let header: Header = serde_json::from_slice(r.take(header_len, "header")?)
        .map_err(|e| corrupt(format!("header decoding: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(CheckpointError::Mismatch {
            reason: format!(
                "format version {} (this build reads {})",
                header.format_version, FORMAT_VERSION
            ),
        });
    }
    let src_vocab = rebuild_vocab(
        &header.src_tokens,
        header.src_has_eos,
        header.v_s,
        &header.src_sha256,
        "source",
    )?;
    let tgt_vocab = rebuild_vocab(
        &header.tgt_tokens,
        header.tgt_has_eos,
        header.v_t,
        &header.tgt_sha256,
        "target",
    )?;

    let tensor_count = r.u32("tensor count")?;
    let mut params = ParamSet::new();
    for _ in 0..tensor_count {
        let name_len = r.u32("tensor name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| corrupt("tensor name is not UTF-8"))?
            .to_owned();
        let ndims = r.u32("dimension count")? as usize;
        let mut shape = Vec::with_capacity(ndims);
        let mut total: usize = 1;
        for _ in 0..ndims {
            let dim = r.u64("dimension")? as usize;
            total = total
                .checked_mul(dim)
                .ok_or_else(|| corrupt(format!("tensor `{name}` dimensions overflow")))?;
            shape.push(dim);
        }
        let payload = r.take(
            total
                .checked_mul(8)
                .ok_or_else(|| corrupt(format!("tensor `{name}` payload overflows")))?,
            "tensor payload",
        )?;
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let value = TensorValue::new(shape, data)
            .map_err(|e| corrupt(format!("tensor `{name}`: {e}")))?;
        params
            .register(&name, value)
            .map_err(|e| corrupt(format!("tensor `{name}`: {e}")))?;
    }
    if !r.done() {
        return Err(corrupt("trailing bytes after the last tensor"));
    }
    Ok(Model::from_params(
        params,
        header.d,
        header.variant,
        src_vocab,
        tgt_vocab,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::Hyperparams;
    use crate::model::DecodeLimits;
    use crate::oracle::translate;
    use crate::syntax::{parse_for, tokenize};
    use crate::trainer::{evaluate, train, TreePair};
    use crate::tree::{for_to_tree, lambda_to_tree};

    fn pairs() -> Vec<TreePair> {
        ["x = 1", "y = x + 2", "x = 1 ; y = 2", "z = 4"]
            .iter()
            .map(|s| {
                let ast = parse_for(&tokenize(s)).expect("valid program");
                let target = translate(&ast);
                TreePair {
                    source: for_to_tree(&ast),
                    target: lambda_to_tree(&target),
                }
            })
            .collect()
    }

    fn tiny_model(variant: Variant, seed: u64) -> Model {
        let hyper = Hyperparams {
            batch_size: 4,
            hidden_dim: 6,
            embedding_dim: 6,
            dropout: 0.0,
            eval_every: 1,
            epochs: 2,
            seed,
            ..Hyperparams::default()
        };
        train(&pairs(), &[], variant, &hyper).expect("trains").model
    }

    #[test]
    fn round_trip_preserves_the_model_and_its_report() {
        let dir = tempfile::tempdir().expect("temp dir");
        for variant in Variant::ALL {
            let model = tiny_model(variant, 5);
            let path = dir.path().join(format!("{variant}.ckpt"));
            save(&path, &model).expect("saves");
            let loaded = load(&path).expect("loads");
            let values = |m: &Model| -> Vec<(String, TensorValue)> {
                m.params()
                    .iter()
                    .map(|(_, p)| (p.name().to_owned(), p.value().clone()))
                    .collect()
            };
            assert_eq!(values(&loaded), values(&model));
            assert_eq!(loaded.variant(), model.variant());
            assert_eq!(loaded.d(), model.d());
            assert_eq!(loaded.src_vocab(), model.src_vocab());
            assert_eq!(loaded.tgt_vocab(), model.tgt_vocab());

            let before = evaluate(&model, &pairs(), DecodeLimits::default()).expect("evaluates");
            let after = evaluate(&loaded, &pairs(), DecodeLimits::default()).expect("evaluates");
            assert_eq!(before, after);
        }
    }

    #[test]
    fn saving_twice_is_byte_identical() {
        let dir = tempfile::tempdir().expect("temp dir");
        let model = tiny_model(Variant::Full, 9);
        let a = dir.path().join("a.ckpt");
        let b = dir.path().join("b.ckpt");
        save(&a, &model).expect("saves");
        save(&b, &model).expect("saves");
        assert_eq!(fs::read(&a).expect("a"), fs::read(&b).expect("b"));
    }

    #[test]
    fn truncated_files_are_rejected() {
        let dir = tempfile::tempdir().expect("temp dir");
        let path = dir.path().join("model.ckpt");
        save(&path, &tiny_model(Variant::NoAttention, 2)).expect("saves");
        let bytes = fs::read(&path).expect("reads");
        let cut = dir.path().join("cut.ckpt");
        fs::write(&cut, &bytes[..bytes.len() - 9]).expect("writes");
        assert!(matches!(load(&cut), Err(CheckpointError::Corrupt { .. })));
    }

    #[test]
    fn foreign_files_and_future_versions_are_rejected() {
        let dir = tempfile::tempdir().expect("temp dir");
        let path = dir.path().join("bogus.ckpt");
        fs::write(&path, b"definitely not a checkpoint").expect("writes");
        assert!(matches!(load(&path), Err(CheckpointError::Corrupt { .. })));

        let real = dir.path().join("real.ckpt");
        save(&real, &tiny_model(Variant::Full, 1)).expect("saves");
        let mut bytes = fs::read(&real).expect("reads");
        let json_start = 12;
        let needle = b"\"format_version\":1";
        let at = bytes[json_start..]
            .windows(needle.len())
            .position(|w| w == needle)
            .expect("version field")
            + json_start;
        bytes[at + needle.len() - 1] = b'9';
        let bumped = dir.path().join("bumped.ckpt");
        fs::write(&bumped, &bytes).expect("writes");
        assert!(matches!(
            load(&bumped),
            Err(CheckpointError::Mismatch { .. })
        ));
    }

    #[test]
    fn tampered_vocabularies_fail_their_hash() {
        let dir = tempfile::tempdir().expect("temp dir");
        let real = dir.path().join("real.ckpt");
        save(&real, &tiny_model(Variant::Full, 1)).expect("saves");
        let mut bytes = fs::read(&real).expect("reads");
        let needle = b"\"src_tokens\":[\"";
        let at = bytes
            .windows(needle.len())
            .position(|w| w == needle)
            .expect("token list")
            + needle.len();
        bytes[at] = if bytes[at] == b'Q' { b'R' } else { b'Q' };
        let tampered = dir.path().join("tampered.ckpt");
        fs::write(&tampered, &bytes).expect("writes");
        match load(&tampered) {
            Err(CheckpointError::Corrupt { reason }) => {
                assert!(reason.contains("hash"), "unexpected reason: {reason}")
            }
            other => panic!("expected a hash failure, got {:?}", other.map(|_| ())),
        }
    }
}
