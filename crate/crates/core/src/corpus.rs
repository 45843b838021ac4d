//! External knowledge corpus: chunk storage, ingestion and lookup.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    MalformedLine { path: PathBuf, line: usize, reason: String },
    #[error("duplicate chunk id `{0}`")]
    DuplicateId(String),
    #[error("unknown chunk id `{0}`")]
    UnknownId(String),
    #[error("chunk `{0}` has empty text")]
    EmptyText(String),
    #[error("unknown chunk kind `{0}` (expected `qa` or `textbook`)")]
    UnknownKind(String),
}

/// Which sub-corpus a chunk belongs to. Retrieval quotas are keyed by kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkKind {
    Qa,
    Textbook,
}

impl ChunkKind {
    pub const ALL: [ChunkKind; 2] = [ChunkKind::Qa, ChunkKind::Textbook];

    pub fn as_str(self) -> &'static str {
        match self {
            ChunkKind::Qa => "qa",
            ChunkKind::Textbook => "textbook",
        }
    }
}

impl fmt::Display for ChunkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ChunkKind {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qa" => Ok(ChunkKind::Qa),
            "textbook" => Ok(ChunkKind::Textbook),
            other => Err(CorpusError::UnknownKind(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: String,
    pub text: String,
    pub kind: ChunkKind,
    #[serde(default)]
    pub source: String,
}

/// One line of the JSONL chunk format.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChunkLine {
    id: Option<String>,
    text: String,
    kind: Option<ChunkKind>,
    source: Option<String>,
}

/// Ordered, append-only chunk store.
///
/// Iteration order is ingestion order; the position of a chunk in that order
/// (its ordinal) is the tie-breaker used throughout retrieval.
#[derive(Debug, Default, Clone)]
pub struct Corpus {
    chunks: Vec<Chunk>,
    by_id: HashMap<String, usize>,
    by_kind: BTreeMap<ChunkKind, Vec<usize>>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunks(&self) -> &[Chunk] {
        &self.chunks
    }

    pub fn get(&self, id: &str) -> Result<&Chunk, CorpusError> {
        self.by_id
            .get(id)
            .map(|&i| &self.chunks[i])
            .ok_or_else(|| CorpusError::UnknownId(id.to_string()))
    }

    pub fn ordinal(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    /// Ordinals of all chunks of `kind`, in ingestion order.
    pub fn ordinals_of(&self, kind: ChunkKind) -> &[usize] {
        self.by_kind.get(&kind).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn count_by_kind(&self) -> BTreeMap<ChunkKind, usize> {
        self.by_kind.iter().map(|(k, v)| (*k, v.len())).collect()
    }

    /// Adds chunks atomically: either all are stored or none.
    pub fn extend(&mut self, chunks: Vec<Chunk>) -> Result<usize, CorpusError> {
        let mut seen = std::collections::HashSet::new();
        for chunk in &chunks {
            if chunk.text.trim().is_empty() {
                return Err(CorpusError::EmptyText(chunk.id.clone()));
            }
            if self.by_id.contains_key(&chunk.id) || !seen.insert(chunk.id.as_str()) {
                return Err(CorpusError::DuplicateId(chunk.id.clone()));
            }
        }
        let added = chunks.len();
        for chunk in chunks {
            let ordinal = self.chunks.len();
            self.by_id.insert(chunk.id.clone(), ordinal);
            self.by_kind.entry(chunk.kind).or_default().push(ordinal);
            self.chunks.push(chunk);
        }
        Ok(added)
    }

    pub fn push(&mut self, chunk: Chunk) -> Result<(), CorpusError> {
        self.extend(vec![chunk]).map(|_| ())
    }

    /// Ingests a chunk file. `.jsonl`/`.json`/`.ndjson` files are read as
    /// one chunk object per line; anything else as plain text with
    /// blank-line-delimited chunks. Returns the number of chunks added.
    pub fn ingest(&mut self, path: &Path, kind: ChunkKind) -> Result<usize, CorpusError> {
        let content = fs::read_to_string(path).map_err(|source| CorpusError::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        let is_jsonl = matches!(
            path.extension().and_then(|e| e.to_str()),
            Some("jsonl" | "json" | "ndjson")
        );
        let chunks = if is_jsonl {
            self.parse_jsonl(path, &content, kind)?
        } else {
            self.parse_plain(path, &content, kind)
        };
        self.extend(chunks)
    }

    fn auto_id(&self, offset: usize) -> String {
        format!("chunk-{}", self.chunks.len() + offset + 1)
    }

    fn parse_jsonl(&self, path: &Path, content: &str, kind: ChunkKind) -> Result<Vec<Chunk>, CorpusError> {
        let mut out = Vec::new();
        for (i, line) in content.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |reason: String| CorpusError::MalformedLine {
                path: path.to_path_buf(),
                line: i + 1,
                reason,
            };
            let parsed: ChunkLine = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
            if parsed.text.trim().is_empty() {
                return Err(malformed("empty `text`".into()));
            }
            let id = match parsed.id {
                Some(id) if id.is_empty() => return Err(malformed("empty `id`".into())),
                Some(id) => id,
                None => self.auto_id(out.len()),
            };
            out.push(Chunk {
                id,
                text: parsed.text,
                kind: parsed.kind.unwrap_or(kind),
                source: parsed
                    .source
                    .unwrap_or_else(|| format!("{}:{}", path.display(), i + 1)),
            });
        }
        Ok(out)
    }

    fn parse_plain(&self, path: &Path, content: &str, kind: ChunkKind) -> Vec<Chunk> {
        let mut out = Vec::new();
        let mut current: Vec<&str> = Vec::new();
        let mut start_line = 0;
        let lines: Vec<&str> = content.lines().collect();
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                if !current.is_empty() {
                    out.push(self.plain_chunk(path, &current, start_line, kind, out.len()));
                    current.clear();
                }
            } else {
                if current.is_empty() {
                    start_line = i + 1;
                }
                current.push(line);
            }
        }
        if !current.is_empty() {
            out.push(self.plain_chunk(path, &current, start_line, kind, out.len()));
        }
        out
    }

    fn plain_chunk(&self, path: &Path, lines: &[&str], start_line: usize, kind: ChunkKind, offset: usize) -> Chunk {
        Chunk {
            id: self.auto_id(offset),
            text: lines.join("\n"),
            kind,
            source: format!("{}:{}", path.display(), start_line),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file_with(ext: &str, content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingest_three_valid_lines() {
        let f = file_with(
            ".jsonl",
            r#"{"id":"a","text":"x","kind":"qa"}
{"id":"b","text":"y","kind":"qa"}
{"id":"c","text":"z","kind":"textbook","source":"book 1.2"}
"#,
        );
        let mut corpus = Corpus::new();
        assert_eq!(corpus.ingest(f.path(), ChunkKind::Qa).unwrap(), 3);
        assert_eq!(corpus.get("a").unwrap().text, "x");
        assert_eq!(corpus.get("c").unwrap().kind, ChunkKind::Textbook);
        assert_eq!(corpus.get("c").unwrap().source, "book 1.2");
        assert_eq!(corpus.ordinals_of(ChunkKind::Qa), &[0, 1]);
    }

    #[test]
    fn empty_file_adds_nothing() {
        let f = file_with(".jsonl", "");
        let mut corpus = Corpus::new();
        assert_eq!(corpus.ingest(f.path(), ChunkKind::Qa).unwrap(), 0);
        assert!(corpus.is_empty());
    }

    #[test]
    fn duplicate_id_is_rejected_and_nothing_is_stored() {
        let f = file_with(
            ".jsonl",
            "{\"id\":\"a\",\"text\":\"x\"}\n{\"id\":\"dup\",\"text\":\"y\"}\n{\"id\":\"dup\",\"text\":\"z\"}\n",
        );
        let mut corpus = Corpus::new();
        let err = corpus.ingest(f.path(), ChunkKind::Qa).unwrap_err();
        assert!(matches!(&err, CorpusError::DuplicateId(id) if id == "dup"));
        assert!(err.to_string().contains("dup"));
        assert!(corpus.is_empty());
    }

    #[test]
    fn duplicate_across_files_is_rejected() {
        let a = file_with(".jsonl", "{\"id\":\"a\",\"text\":\"x\"}\n");
        let mut corpus = Corpus::new();
        corpus.ingest(a.path(), ChunkKind::Qa).unwrap();
        assert!(matches!(
            corpus.ingest(a.path(), ChunkKind::Qa),
            Err(CorpusError::DuplicateId(_))
        ));
        assert_eq!(corpus.len(), 1);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let f = file_with(".jsonl", "{\"text\":\"ok\"}\n\nnot json\n");
        let err = Corpus::new().ingest(f.path(), ChunkKind::Qa).unwrap_err();
        match err {
            CorpusError::MalformedLine { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_text_line_is_malformed() {
        let f = file_with(".jsonl", "{\"text\":\"   \"}\n");
        assert!(matches!(
            Corpus::new().ingest(f.path(), ChunkKind::Qa),
            Err(CorpusError::MalformedLine { line: 1, .. })
        ));
    }

    #[test]
    fn unknown_field_is_malformed() {
        let f = file_with(".jsonl", "{\"text\":\"a\",\"bogus\":1}\n");
        assert!(Corpus::new().ingest(f.path(), ChunkKind::Qa).is_err());
    }

    #[test]
    fn plain_text_chunks_get_ordinal_ids() {
        let f = file_with(".txt", "first para\nline two\n\n\n second\n\nthird\n");
        let mut corpus = Corpus::new();
        assert_eq!(corpus.ingest(f.path(), ChunkKind::Textbook).unwrap(), 3);
        assert_eq!(corpus.get("chunk-1").unwrap().text, "first para\nline two");
        assert_eq!(corpus.get("chunk-2").unwrap().text, " second");
        assert_eq!(corpus.get("chunk-3").unwrap().kind, ChunkKind::Textbook);
    }

    #[test]
    fn get_unknown_id() {
        assert!(matches!(Corpus::new().get("missing"), Err(CorpusError::UnknownId(_))));
    }

    #[test]
    fn unreadable_file() {
        assert!(matches!(
            Corpus::new().ingest(Path::new("/definitely/not/here.jsonl"), ChunkKind::Qa),
            Err(CorpusError::Unreadable { .. })
        ));
    }

    #[test]
    fn kind_index_partitions_corpus() {
        let mut corpus = Corpus::new();
        for (i, kind) in [ChunkKind::Qa, ChunkKind::Textbook, ChunkKind::Qa].into_iter().enumerate() {
            corpus
                .push(Chunk { id: format!("c{i}"), text: "t".into(), kind, source: String::new() })
                .unwrap();
        }
        let total: usize = corpus.count_by_kind().values().sum();
        assert_eq!(total, corpus.len());
    }
}
