//! On-disk dataset format: one tab-separated text file per split, plus
//! corpus length statistics.
//!
//! A file starts with a single header line and is followed by exactly as
//! many record lines as the header announces. Each record line holds four
//! tab-separated fields, every field a space-joined token sequence:
//! source program text, source tree serialization, target program text,
//! target tree serialization.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::generator::DatasetRecord;
use crate::syntax::{join_tokens, tokenize, Token};
use crate::trainer::TreePair;
use crate::tree::{deserialize_dfs, TreeError};

pub const FORMAT_VERSION: u32 = 1;
/// Version of the tree serialization the `*_t` fields use.
pub const CODEC_VERSION: u32 = 1;

const MAGIC: &str = "t2t-dataset";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("{path}:{line}: bad tree serialization: {source}")]
    Tree {
        path: String,
        line: usize,
        #[source]
        source: TreeError,
    },
}

/// Metadata carried on the first line of every dataset file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub preset: String,
    pub seed: u64,
    pub records: usize,
    pub codec_version: u32,
}

impl DatasetHeader {
    pub fn new(preset: impl Into<String>, seed: u64, records: usize) -> Self {
        DatasetHeader {
            format_version: FORMAT_VERSION,
            preset: preset.into(),
            seed,
            records,
            codec_version: CODEC_VERSION,
        }
    }

    fn render(&self) -> String {
        format!(
            "{MAGIC}\tformat={}\tpreset={}\tseed={}\trecords={}\tcodec={}",
            self.format_version, self.preset, self.seed, self.records, self.codec_version
        )
    }

    fn parse(line: &str, path: &str) -> Result<Self, DatasetError> {
        let bad = |reason: String| DatasetError::Malformed {
            path: path.to_owned(),
            line: 1,
            reason,
        };
        let mut fields = line.split('\t');
        if fields.next() != Some(MAGIC) {
            return Err(bad(format!("missing `{MAGIC}` magic tag")));
        }
        let mut take = |key: &str| -> Result<String, DatasetError> {
            let field = fields
                .next()
                .ok_or_else(|| bad(format!("missing `{key}` field")))?;
            field
                .strip_prefix(key)
                .and_then(|rest| rest.strip_prefix('='))
                .map(str::to_owned)
                .ok_or_else(|| bad(format!("expected `{key}=...`, found `{field}`")))
        };
        let format_version = take("format")?;
        let preset = take("preset")?;
        let seed = take("seed")?;
        let records = take("records")?;
        let codec_version = take("codec")?;
        let parse_num = |name: &str, value: &str| -> Result<u64, DatasetError> {
            value
                .parse()
                .map_err(|_| bad(format!("`{name}` is not a number: `{value}`")))
        };
        let header = DatasetHeader {
            format_version: parse_num("format", &format_version)? as u32,
            preset,
            seed: parse_num("seed", &seed)?,
            records: parse_num("records", &records)? as usize,
            codec_version: parse_num("codec", &codec_version)? as u32,
        };
        if header.format_version != FORMAT_VERSION {
            return Err(bad(format!(
                "unsupported format version {} (this build reads {})",
                header.format_version, FORMAT_VERSION
            )));
        }
        if header.codec_version != CODEC_VERSION {
            return Err(bad(format!(
                "unsupported codec version {} (this build reads {})",
                header.codec_version, CODEC_VERSION
            )));
        }
        Ok(header)
    }
}

/// One dataset record as stored on disk: the four token sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileRecord {
    pub source_p: Vec<Token>,
    pub source_t: Vec<Token>,
    pub target_p: Vec<Token>,
    pub target_t: Vec<Token>,
}

impl FileRecord {
    pub fn from_generated(r: &DatasetRecord) -> Self {
        FileRecord {
            source_p: r.source_p.clone(),
            source_t: r.source_t.clone(),
            target_p: r.target_p.clone(),
            target_t: r.target_t.clone(),
        }
    }

    /// Rebuilds the source and target trees from their serializations.
    pub fn tree_pair(&self) -> Result<TreePair, TreeError> {
        Ok(TreePair {
            source: deserialize_dfs(&self.source_t)?,
            target: deserialize_dfs(&self.target_t)?,
        })
    }

    fn render(&self) -> String {
        format!(
            "{}\t{}\t{}\t{}",
            join_tokens(&self.source_p),
            join_tokens(&self.source_t),
            join_tokens(&self.target_p),
            join_tokens(&self.target_t)
        )
    }
}

fn io_err(path: &Path, source: io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes one split. The byte content is a pure function of the header and
/// records.
pub fn write_split(
    path: &Path,
    header: &DatasetHeader,
    records: &[FileRecord],
) -> Result<(), DatasetError> {
    debug_assert_eq!(header.records, records.len());
    let mut out = String::new();
    out.push_str(&header.render());
    out.push('\n');
    for r in records {
        out.push_str(&r.render());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Reads and validates one split: the header must parse, every record line
/// must carry exactly four non-empty fields, and the record count must
/// match the header.
pub fn read_split(path: &Path) -> Result<(DatasetHeader, Vec<FileRecord>), DatasetError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let shown = path.display().to_string();
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| DatasetError::Malformed {
        path: shown.clone(),
        line: 1,
        reason: "empty file".to_owned(),
    })?;
    let header = DatasetHeader::parse(first, &shown)?;
    let mut records = Vec::with_capacity(header.records);
    for (i, line) in lines {
        let lineno = i + 1;
        let bad = |reason: String| DatasetError::Malformed {
            path: shown.clone(),
            line: lineno,
            reason,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(bad(format!(
                "expected 4 tab-separated fields, found {}",
                fields.len()
            )));
        }
        if let Some(pos) = fields.iter().position(|f| f.trim().is_empty()) {
            return Err(bad(format!("field {} is empty", pos + 1)));
        }
        records.push(FileRecord {
            source_p: tokenize(fields[0]),
            source_t: tokenize(fields[1]),
            target_p: tokenize(fields[2]),
            target_t: tokenize(fields[3]),
        });
    }
    if records.len() != header.records {
        return Err(DatasetError::Malformed {
            path: shown,
            line: records.len() + 1,
            reason: format!(
                "header announces {} records, file holds {}",
                header.records,
                records.len()
            ),
        });
    }
    Ok((header, records))
}

/// Minimum, mean, and maximum of one length column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthStats {
    pub min: usize,
    pub mean: f64,
    pub max: usize,
}

fn column_stats(lengths: impl Iterator<Item = usize>) -> LengthStats {
    let mut min = usize::MAX;
    let mut max = 0;
    let mut sum = 0usize;
    let mut n = 0usize;
    for len in lengths {
        min = min.min(len);
        max = max.max(len);
        sum += len;
        n += 1;
    }
    LengthStats {
        min,
        mean: sum as f64 / n as f64,
        max,
    }
}

/// Length statistics over one corpus, covering program text and tree
/// serialization lengths on both sides.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusStats {
    pub records: usize,
    pub source_p: LengthStats,
    pub target_p: LengthStats,
    pub source_t: LengthStats,
    pub target_t: LengthStats,
}

/// Computes corpus statistics; `None` when there are no records.
pub fn corpus_stats(records: &[FileRecord]) -> Option<CorpusStats> {
    if records.is_empty() {
        return None;
    }
    Some(CorpusStats {
        records: records.len(),
        source_p: column_stats(records.iter().map(|r| r.source_p.len())),
        target_p: column_stats(records.iter().map(|r| r.target_p.len())),
        source_t: column_stats(records.iter().map(|r| r.source_t.len())),
        target_t: column_stats(records.iter().map(|r| r.target_t.len())),
    })
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "records: {}", self.records)?;
        writeln!(f, "{:<22}{:>6}{:>9}{:>6}", "", "min", "mean", "max")?;
        let row = |f: &mut fmt::Formatter<'_>, name: &str, s: &LengthStats| {
            writeln!(f, "{name:<22}{:>6}{:>9.1}{:>6}", s.min, s.mean, s.max)
        };
        row(f, "source length (P)", &self.source_p)?;
        row(f, "target length (P)", &self.target_p)?;
        row(f, "source length (T)", &self.source_t)?;
        row(f, "target length (T)", &self.target_t)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{build_dataset, GenConfig};

    fn small_split() -> Vec<FileRecord> {
        let splits = build_dataset(&GenConfig::syn_s(11), 6, 0, 0).expect("generates");
        splits.train.iter().map(FileRecord::from_generated).collect()
    }

    #[test]
    fn round_trips_records_and_header() {
        let dir = tempfile::tempdir().expect("temp dir");
        let path = dir.path().join("train.tsv");
        let records = small_split();
        let header = DatasetHeader::new("syn-s", 11, records.len());
        write_split(&path, &header, &records).expect("writes");
        let (h, rs) = read_split(&path).expect("reads");
        assert_eq!(h, header);
        assert_eq!(rs, records);
    }

    #[test]
    fn rewriting_identical_inputs_is_byte_identical() {
        let dir = tempfile::tempdir().expect("temp dir");
        let a = dir.path().join("a.tsv");
        let b = dir.path().join("b.tsv");
        let records = small_split();
        let header = DatasetHeader::new("syn-s", 11, records.len());
        write_split(&a, &header, &records).expect("writes");
        write_split(&b, &header, &records).expect("writes");
        assert_eq!(fs::read(&a).expect("a"), fs::read(&b).expect("b"));
    }

    #[test]
    fn record_count_must_match_header() {
        let dir = tempfile::tempdir().expect("temp dir");
        let path = dir.path().join("short.tsv");
        let records = small_split();
        let header = DatasetHeader::new("syn-s", 11, records.len() + 1);
        let mut text = header.render();
        text.push('\n');
        for r in &records {
            text.push_str(&r.render());
            text.push('\n');
        }
        fs::write(&path, text).expect("writes");
        match read_split(&path) {
            Err(DatasetError::Malformed { reason, .. }) => {
                assert!(reason.contains("records"), "unexpected reason: {reason}")
            }
            other => panic!("expected a malformed-file error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_wrong_field_counts_and_bad_headers() {
        let dir = tempfile::tempdir().expect("temp dir");
        let path = dir.path().join("bad.tsv");
        fs::write(&path, "t2t-dataset\tformat=1\tpreset=syn-s\tseed=0\trecords=1\tcodec=1\nx = 1\tonly two\n").expect("writes");
        assert!(matches!(
            read_split(&path),
            Err(DatasetError::Malformed { line: 2, .. })
        ));
        fs::write(&path, "not-a-dataset\n").expect("writes");
        assert!(matches!(
            read_split(&path),
            Err(DatasetError::Malformed { line: 1, .. })
        ));
        fs::write(&path, "t2t-dataset\tformat=9\tpreset=syn-s\tseed=0\trecords=0\tcodec=1\n")
            .expect("writes");
        assert!(matches!(
            read_split(&path),
            Err(DatasetError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn records_rebuild_their_tree_pair()  {
        let records = small_split();
        for r in &records {
            let pair = r.tree_pair().expect("valid serializations");
            assert_eq!(crate::tree::serialize_dfs(&pair.source), r.source_t);
            assert_eq!(crate::tree::serialize_dfs(&pair.target), r.target_t);
        }
    }

    #[test]
    fn stats_cover_all_four_columns() {
        let records = small_split();
        let stats = corpus_stats(&records).expect("non-empty");
        assert_eq!(stats.records, records.len());
        for s in [stats.source_p, stats.target_p, stats.source_t, stats.target_t] {
            assert!(s.min <= s.max);
            assert!(s.min as f64 <= s.mean && s.mean <= s.max as f64);
        }
        assert!(stats.source_t.min > stats.source_p.min);
        assert!(corpus_stats(&[]).is_none());
        let text = stats.to_string();
        assert!(text.contains("source length (P)"));
        assert!(text.contains("records: 6"));
    }
}
