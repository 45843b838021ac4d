//! Similarity scoring, per-model top-k, Z-score fusion across embedding
//! models, and prompt assembly.
//!
//! Ordering is total everywhere: score descending, then corpus ingestion
//! order ascending, then model index ascending.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Chunk, ChunkKind, Corpus};
use crate::embedding::{cosine, EmbeddingError, EmbeddingProvider, EmbeddingVector};

#[derive(Debug, Clone, thiserror::Error)]
pub enum RetrievalError {
    #[error("no chunks to score after filtering")]
    EmptyCorpus,
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("similarity row has no entries")]
    EmptyRow,
    #[error("similarity row contains a non-finite score for `{0}`")]
    NonFiniteScore(String),
    #[error("similarity row lists chunk `{0}` twice")]
    DuplicateChunk(String),
    #[error("no similarity rows to fuse")]
    NoRows,
    #[error("row for model `{0}` scores a different chunk set than row 0")]
    MismatchedRows(String),
    #[error("prompt template must contain `{0}` exactly once")]
    TemplatePlaceholder(&'static str),
}

/// Retrieval budget per kind, e.g. one textbook section and three QA items.
pub type Quotas = BTreeMap<ChunkKind, usize>;

pub fn default_quotas() -> Quotas {
    Quotas::from([(ChunkKind::Textbook, 1), (ChunkKind::Qa, 3)])
}

/// How many chunks a retrieval step keeps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Budget {
    TopK(usize),
    PerKind(Quotas),
}

impl Budget {
    pub fn total(&self) -> usize {
        match self {
            Budget::TopK(k) => *k,
            Budget::PerKind(q) => q.values().sum(),
        }
    }

    /// Keeps items of an already ranked sequence until the budget is spent.
    fn take<T>(&self, ranked: impl IntoIterator<Item = T>, kind_of: impl Fn(&T) -> ChunkKind) -> Vec<T> {
        match self {
            Budget::TopK(k) => ranked.into_iter().take(*k).collect(),
            Budget::PerKind(quotas) => {
                let total: usize = quotas.values().sum();
                let mut used: BTreeMap<ChunkKind, usize> = BTreeMap::new();
                let mut out = Vec::new();
                for item in ranked {
                    if out.len() == total {
                        break;
                    }
                    let kind = kind_of(&item);
                    let quota = quotas.get(&kind).copied().unwrap_or(0);
                    let n = used.entry(kind).or_insert(0);
                    if *n < quota {
                        *n += 1;
                        out.push(item);
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowEntry {
    pub chunk_id: String,
    /// Position of the chunk in corpus ingestion order.
    pub ordinal: usize,
    pub kind: ChunkKind,
    pub score: f64,
}

/// Raw similarities of one question against every eligible chunk, for one
/// embedding model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRow {
    pub model_id: String,
    pub question_id: String,
    entries: Vec<RowEntry>,
}

impl SimilarityRow {
    pub fn new(
        model_id: impl Into<String>,
        question_id: impl Into<String>,
        entries: Vec<RowEntry>,
    ) -> Result<Self, RetrievalError> {
        if entries.is_empty() {
            return Err(RetrievalError::EmptyRow);
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if !e.score.is_finite() {
                return Err(RetrievalError::NonFiniteScore(e.chunk_id.clone()));
            }
            if !seen.insert(e.chunk_id.as_str()) {
                return Err(RetrievalError::DuplicateChunk(e.chunk_id.clone()));
            }
        }
        Ok(Self { model_id: model_id.into(), question_id: question_id.into(), entries })
    }

    pub fn entries(&self) -> &[RowEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn score_of(&self, chunk_id: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.chunk_id == chunk_id).map(|e| e.score)
    }

    /// Entry indices sorted by `values` descending, ordinal ascending.
    fn ranked_by(&self, values: &[f64]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.entries.len()).collect();
        idx.sort_by(|&a, &b| {
            values[b]
                .total_cmp(&values[a])
                .then(self.entries[a].ordinal.cmp(&self.entries[b].ordinal))
        });
        idx
    }

    fn raw_scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.score).collect()
    }

    fn chunk_set(&self) -> Vec<(usize, &str)> {
        let mut set: Vec<_> = self.entries.iter().map(|e| (e.ordinal, e.chunk_id.as_str())).collect();
        set.sort_unstable();
        set
    }
}

/// Chunk embeddings for one provider, aligned with corpus order.
pub struct ChunkIndex {
    model_id: String,
    vectors: Vec<EmbeddingVector>,
}

impl ChunkIndex {
    pub fn build(provider: &dyn EmbeddingProvider, corpus: &Corpus) -> Result<Self, RetrievalError> {
        if corpus.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        let texts: Vec<String> = corpus.chunks().iter().map(|c| c.text.clone()).collect();
        let vectors = provider.embed(&texts)?;
        if vectors.len() != texts.len() {
            return Err(EmbeddingError::CountMismatch { expected: texts.len(), got: vectors.len() }.into());
        }
        Ok(Self { model_id: provider.model_id().to_string(), vectors })
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn score(
        &self,
        question_id: &str,
        question: &EmbeddingVector,
        corpus: &Corpus,
        kind_filter: Option<ChunkKind>,
    ) -> Result<SimilarityRow, RetrievalError> {
        let mut entries = Vec::new();
        for (ordinal, (chunk, vector)) in corpus.chunks().iter().zip(&self.vectors).enumerate() {
            if kind_filter.is_some_and(|k| k != chunk.kind) {
                continue;
            }
            entries.push(RowEntry {
                chunk_id: chunk.id.clone(),
                ordinal,
                kind: chunk.kind,
                score: cosine(question, vector)?,
            });
        }
        if entries.is_empty() {
            return Err(RetrievalError::EmptyCorpus);
        }
        SimilarityRow::new(&self.model_id, question_id, entries)
    }
}

/// Scores a question against every (optionally kind-filtered) chunk.
pub fn score_all(
    provider: &dyn EmbeddingProvider,
    question_id: &str,
    question: &str,
    corpus: &Corpus,
    kind_filter: Option<ChunkKind>,
) -> Result<SimilarityRow, RetrievalError> {
    let eligible = corpus
        .chunks()
        .iter()
        .filter(|c| kind_filter.map_or(true, |k| c.kind == k))
        .count();
    if eligible == 0 {
        return Err(RetrievalError::EmptyCorpus);
    }
    let index = ChunkIndex::build(provider, corpus)?;
    let q = provider
        .embed(&[question.to_string()])?
        .pop()
        .ok_or(EmbeddingError::CountMismatch { expected: 1, got: 0 })?;
    index.score(question_id, &q, corpus, kind_filter)
}

/// The `k` best chunk ids by raw similarity.
pub fn top_k(row: &SimilarityRow, k: usize) -> Vec<String> {
    select(row, &Budget::TopK(k))
}

/// Best chunk ids by raw similarity under `budget`, best first.
pub fn select(row: &SimilarityRow, budget: &Budget) -> Vec<String> {
    let ranked = row.ranked_by(&row.raw_scores());
    budget
        .take(ranked, |&i| row.entries[i].kind)
        .into_iter()
        .map(|i| row.entries[i].chunk_id.clone())
        .collect()
}

/// Z-scores with population standard deviation; a constant row maps to zeros.
pub fn z_scores(scores: &[f64]) -> Vec<f64> {
    if scores.is_empty() {
        return Vec::new();
    }
    let first = scores[0];
    if scores.iter().all(|&s| s == first) {
        return vec![0.0; scores.len()];
    }
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    let sd = var.sqrt();
    if sd == 0.0 {
        return vec![0.0; scores.len()];
    }
    scores.iter().map(|s| (s - mean) / sd).collect()
}

/// Standardized scores of a row, aligned with `row.entries()`.
pub fn standardize(row: &SimilarityRow) -> Vec<f64> {
    z_scores(&row.raw_scores())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalCandidate {
    pub model_id: String,
    pub model_index: usize,
    pub chunk_id: String,
    pub ordinal: usize,
    pub kind: ChunkKind,
    pub raw: f64,
    pub standardized: f64,
    /// 1-based position within the source model's own shortlist.
    pub rank_within_model: usize,
}

/// Mixture-embedding retrieval.
///
/// Each row is standardized, each model shortlists its best chunks under
/// `budget`, the shortlists are pooled, duplicates collapse to their highest
/// standardized score (lowest model index on ties), and the pool is cut to
/// `budget` again. Shortlisting first gives the same result as pooling every
/// scored chunk: a chunk outside its model's shortlist already has `budget`
/// distinct chunks ranked ahead of it.
pub fn fuse(rows: &[SimilarityRow], budget: &Budget) -> Result<Vec<RetrievalCandidate>, RetrievalError> {
    let first = rows.first().ok_or(RetrievalError::NoRows)?;
    let reference = first.chunk_set();
    for row in &rows[1..] {
        if row.chunk_set() != reference {
            return Err(RetrievalError::MismatchedRows(row.model_id.clone()));
        }
    }

    let mut shortlisted = Vec::new();
    for (model_index, row) in rows.iter().enumerate() {
        let z = standardize(row);
        let ranked = row.ranked_by(&z);
        let shortlist = budget.take(ranked, |&i| row.entries[i].kind);
        for (pos, i) in shortlist.into_iter().enumerate() {
            let e = &row.entries[i];
            let candidate = RetrievalCandidate {
                model_id: row.model_id.clone(),
                model_index,
                chunk_id: e.chunk_id.clone(),
                ordinal: e.ordinal,
                kind: e.kind,
                raw: e.score,
                standardized: z[i],
                rank_within_model: pos + 1,
            };
            shortlisted.push(candidate);
        }
    }
    Ok(merge_candidates(shortlisted, budget))
}

/// Pools standardized candidates: one entry per chunk (highest standardized
/// score, lowest model index on ties), best first, cut to `budget`.
pub fn merge_candidates(
    candidates: impl IntoIterator<Item = RetrievalCandidate>,
    budget: &Budget,
) -> Vec<RetrievalCandidate> {
    let mut pool: BTreeMap<usize, RetrievalCandidate> = BTreeMap::new();
    for candidate in candidates {
        match pool.get(&candidate.ordinal) {
            Some(kept)
                if kept.standardized > candidate.standardized
                    || (kept.standardized == candidate.standardized && kept.model_index <= candidate.model_index) => {}
            _ => {
                pool.insert(candidate.ordinal, candidate);
            }
        }
    }
    let mut merged: Vec<RetrievalCandidate> = pool.into_values().collect();
    merged.sort_by(compare_candidates);
    budget.take(merged, |c| c.kind)
}

fn compare_candidates(a: &RetrievalCandidate, b: &RetrievalCandidate) -> Ordering {
    b.standardized
        .total_cmp(&a.standardized)
        .then(a.ordinal.cmp(&b.ordinal))
        .then(a.model_index.cmp(&b.model_index))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceStyle {
    /// `[1] text`
    #[default]
    Bracketed,
    /// `Reference 1:` on its own line, then the text.
    Labeled,
}

/// Prompt template with `{{question}}` and `{{references}}` placeholders.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplate {
    text: String,
    style: ReferenceStyle,
}

impl PromptTemplate {
    pub const QUESTION: &'static str = "{{question}}";
    pub const REFERENCES: &'static str = "{{references}}";
    const DEFAULT: &'static str = include_str!("../assets/default_prompt.txt");

    pub fn new(text: impl Into<String>, style: ReferenceStyle) -> Result<Self, RetrievalError> {
        let text = text.into();
        for placeholder in [Self::QUESTION, Self::REFERENCES] {
            if text.matches(placeholder).count() != 1 {
                return Err(RetrievalError::TemplatePlaceholder(placeholder));
            }
        }
        Ok(Self { text, style })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn style(&self) -> ReferenceStyle {
        self.style
    }

    fn render_references(&self, references: &[&Chunk]) -> String {
        if references.is_empty() {
            return String::new();
        }
        let mut out = String::from("References:\n");
        for (i, chunk) in references.iter().enumerate() {
            match self.style {
                ReferenceStyle::Bracketed => out.push_str(&format!("[{}] {}\n", i + 1, chunk.text)),
                ReferenceStyle::Labeled => out.push_str(&format!("Reference {}:\n{}\n", i + 1, chunk.text)),
            }
        }
        out.push('\n');
        out
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self::new(Self::DEFAULT, ReferenceStyle::default()).expect("bundled template is valid")
    }
}

/// Renders the prompt in a single pass so placeholder-like text inside the
/// question or references is never re-expanded.
pub fn assemble_prompt(template: &PromptTemplate, question: &str, references: &[&Chunk]) -> String {
    let refs = template.render_references(references);
    let text = template.text();
    let q_at = text.find(PromptTemplate::QUESTION).expect("validated");
    let r_at = text.find(PromptTemplate::REFERENCES).expect("validated");
    let mut parts = [(q_at, PromptTemplate::QUESTION.len(), question), (r_at, PromptTemplate::REFERENCES.len(), refs.as_str())];
    parts.sort_by_key(|p| p.0);
    let mut out = String::with_capacity(text.len() + question.len() + refs.len());
    let mut cursor = 0;
    for (at, len, value) in parts {
        out.push_str(&text[cursor..at]);
        out.push_str(value);
        cursor = at + len;
    }
    out.push_str(&text[cursor..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashEmbedder;

    fn row(model: &str, scores: &[(&str, f64)]) -> SimilarityRow {
        let entries = scores
            .iter()
            .enumerate()
            .map(|(ordinal, (id, score))| RowEntry {
                chunk_id: id.to_string(),
                ordinal,
                kind: ChunkKind::Qa,
                score: *score,
            })
            .collect();
        SimilarityRow::new(model, "q", entries).unwrap()
    }

    fn corpus_of(texts: &[&str]) -> Corpus {
        let mut corpus = Corpus::new();
        for (i, t) in texts.iter().enumerate() {
            corpus
                .push(Chunk { id: format!("c{i}"), text: t.to_string(), kind: ChunkKind::Qa, source: String::new() })
                .unwrap();
        }
        corpus
    }

    #[test]
    fn top_k_examples() {
        let r = row("m", &[("a", 0.9), ("b", 0.1), ("c", 0.5)]);
        assert!(top_k(&r, 0).is_empty());
        assert_eq!(top_k(&r, 2), vec!["a", "c"]);
        assert_eq!(top_k(&r, 10), vec!["a", "c", "b"]);
        let tied = row("m", &[("x", 0.5), ("y", 0.5)]);
        assert_eq!(top_k(&tied, 1), vec!["x"]);
    }

    #[test]
    fn select_respects_quotas() {
        let mut entries = vec![];
        for (i, (kind, score)) in [
            (ChunkKind::Qa, 0.9),
            (ChunkKind::Qa, 0.8),
            (ChunkKind::Textbook, 0.1),
            (ChunkKind::Qa, 0.7),
            (ChunkKind::Qa, 0.6),
            (ChunkKind::Textbook, 0.5),
        ]
        .into_iter()
        .enumerate()
        {
            entries.push(RowEntry { chunk_id: format!("c{i}"), ordinal: i, kind, score });
        }
        let r = SimilarityRow::new("m", "q", entries).unwrap();
        assert_eq!(select(&r, &Budget::PerKind(default_quotas())), vec!["c0", "c1", "c3", "c5"]);
    }

    #[test]
    fn standardize_examples() {
        let z = standardize(&row("m", &[("a", 1.0), ("b", 2.0), ("c", 3.0)]));
        let expected = [-1.224_744_871_391_589, 0.0, 1.224_744_871_391_589];
        for (got, want) in z.iter().zip(expected) {
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
        }
        assert_eq!(z_scores(&[0.1, 0.1, 0.1]), vec![0.0; 3]);
        let shifted: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|w| 2.0 * w + 5.0).collect();
        for (a, b) in z_scores(&shifted).iter().zip(&z) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn row_validation() {
        assert!(matches!(SimilarityRow::new("m", "q", vec![]), Err(RetrievalError::EmptyRow)));
        let bad = vec![RowEntry { chunk_id: "a".into(), ordinal: 0, kind: ChunkKind::Qa, score: f64::NAN }];
        assert!(matches!(SimilarityRow::new("m", "q", bad), Err(RetrievalError::NonFiniteScore(_))));
    }

    #[test]
    fn fuse_single_row_matches_top_k() {
        let r = row("m", &[("a", 0.2), ("b", 0.9), ("c", 0.4), ("d", 0.4)]);
        let fused = fuse(std::slice::from_ref(&r), &Budget::TopK(3)).unwrap();
        let ids: Vec<_> = fused.iter().map(|c| c.chunk_id.clone()).collect();
        assert_eq!(ids, top_k(&r, 3));
        let z = standardize(&r);
        assert_eq!(fused[0].standardized, z[1]);
    }

    #[test]
    fn fuse_dedups_across_models() {
        // Rows chosen so the standardized values are easy to read off:
        // z-scores of a two-entry row are exactly ±1.
        let a = row("A", &[("c1", 1.0), ("c2", 0.0), ("c3", 0.5)]);
        let b = row("B", &[("c1", 0.0), ("c2", 1.0), ("c3", 0.5)]);
        let fused = fuse(&[a.clone(), b.clone()], &Budget::TopK(2)).unwrap();
        let ids: Vec<_> = fused.iter().map(|c| c.chunk_id.as_str()).collect();
        // A: c1 +1.2247, c3 0, c2 -1.2247; B: c2 +1.2247, c3 0, c1 -1.2247.
        // Tie at +1.2247 between c1 (ordinal 0) and c2 (ordinal 1).
        assert_eq!(ids, vec!["c1", "c2"]);
        assert_eq!(fused[1].model_id, "B");
        let all = fuse(&[a, b], &Budget::TopK(10)).unwrap();
        assert_eq!(all.len(), 3);
        assert!(all.windows(2).all(|w| w[0].standardized >= w[1].standardized));
    }

    fn cand(model_index: usize, chunk: usize, z: f64) -> RetrievalCandidate {
        RetrievalCandidate {
            model_id: format!("m{model_index}"),
            model_index,
            chunk_id: format!("c{chunk}"),
            ordinal: chunk,
            kind: ChunkKind::Qa,
            raw: z,
            standardized: z,
            rank_within_model: 1,
        }
    }

    #[test]
    fn merge_pools_dedups_and_sorts() {
        let pool = vec![cand(0, 1, 1.5), cand(0, 2, 0.3), cand(1, 2, 0.9), cand(1, 3, 0.1)];
        let merged = merge_candidates(pool, &Budget::TopK(2));
        let got: Vec<_> = merged.iter().map(|c| (c.chunk_id.as_str(), c.standardized, c.model_index)).collect();
        assert_eq!(got, vec![("c1", 1.5, 0), ("c2", 0.9, 1)]);
        // equal scores keep the lower model index regardless of arrival order
        let merged = merge_candidates(vec![cand(2, 5, 0.4), cand(1, 5, 0.4)], &Budget::TopK(1));
        assert_eq!(merged[0].model_index, 1);
    }

    #[test]
    fn fuse_rejects_mismatched_rows() {
        let a = row("A", &[("c1", 1.0)]);
        let b = row("B", &[("zz", 1.0)]);
        assert!(matches!(fuse(&[a, b], &Budget::TopK(1)), Err(RetrievalError::MismatchedRows(_))));
        assert!(matches!(fuse(&[], &Budget::TopK(1)), Err(RetrievalError::NoRows)));
    }

    #[test]
    fn score_all_cardinality_and_self_similarity() {
        let corpus = corpus_of(&["two apples and three pears", "a train leaves at noon", "the cat sat"]);
        let e = HashEmbedder::new("m", 32);
        let r = score_all(&e, "q", "a train leaves at noon", &corpus, None).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r.score_of("c1"), Some(1.0));
        assert_eq!(top_k(&r, 1), vec!["c1"]);
        assert!(matches!(
            score_all(&e, "q", "x", &corpus, Some(ChunkKind::Textbook)),
            Err(RetrievalError::EmptyCorpus)
        ));
    }

    #[test]
    fn template_rendering() {
        let t = PromptTemplate::default();
        let bare = assemble_prompt(&t, "What is 2+2?", &[]);
        assert!(bare.contains("Question: What is 2+2?"));
        assert!(!bare.contains("References"));
        let corpus = corpus_of(&["alpha", "beta", "gamma"]);
        let refs: Vec<&Chunk> = corpus.chunks().iter().rev().collect();
        let p = assemble_prompt(&t, "Q {{references}}", &refs);
        assert_eq!(p.matches("Q {{references}}").count(), 1);
        let (g, b, a) = (p.find("[1] gamma").unwrap(), p.find("[2] beta").unwrap(), p.find("[3] alpha").unwrap());
        assert!(g < b && b < a);
        assert_eq!(p, assemble_prompt(&t, "Q {{references}}", &refs));
    }

    #[test]
    fn labeled_style_and_placeholder_validation() {
        let t = PromptTemplate::new("{{references}}Q: {{question}}", ReferenceStyle::Labeled).unwrap();
        let corpus = corpus_of(&["alpha"]);
        let refs: Vec<&Chunk> = corpus.chunks().iter().collect();
        assert_eq!(assemble_prompt(&t, "x", &refs), "References:\nReference 1:\nalpha\n\nQ: x");
        assert!(matches!(
            PromptTemplate::new("no placeholders", ReferenceStyle::Bracketed),
            Err(RetrievalError::TemplatePlaceholder("{{question}}"))
        ));
        assert!(PromptTemplate::new("{{question}} {{question}} {{references}}", ReferenceStyle::Bracketed).is_err());
    }

    proptest::proptest! {
        #[test]
        fn z_scores_have_zero_mean_unit_variance(scores in proptest::collection::vec(-1.0f64..1.0, 2..80)) {
            let z = z_scores(&scores);
            let n = z.len() as f64;
            let mean = z.iter().sum::<f64>() / n;
            proptest::prop_assert!(mean.abs() < 1e-9);
            if scores.iter().any(|s| *s != scores[0]) {
                let var = z.iter().map(|x| x * x).sum::<f64>() / n;
                proptest::prop_assert!((var - 1.0).abs() < 1e-9);
            } else {
                proptest::prop_assert!(z.iter().all(|x| *x == 0.0));
            }
        }

        #[test]
        fn fused_references_are_unique_and_bounded(
            a in proptest::collection::vec(-4i32..4, 1..30),
            shift in proptest::collection::vec(-4i32..4, 30),
            k in 0usize..10,
        ) {
            let first: Vec<(String, f64)> = a.iter().enumerate().map(|(i, s)| (format!("c{i}"), *s as f64)).collect();
            let second: Vec<(String, f64)> =
                a.iter().enumerate().map(|(i, s)| (format!("c{i}"), (*s + shift[i]) as f64)).collect();
            let (r0, r1): (Vec<(&str, f64)>, Vec<(&str, f64)>) = (
                first.iter().map(|(id, s)| (id.as_str(), *s)).collect(),
                second.iter().map(|(id, s)| (id.as_str(), *s)).collect(),
            );
            let rows = [row("m0", &r0), row("m1", &r1)];
            let fused = fuse(&rows, &Budget::TopK(k)).unwrap();
            proptest::prop_assert_eq!(fused.len(), k.min(a.len()));
            let ids: HashSet<&str> = fused.iter().map(|c| c.chunk_id.as_str()).collect();
            proptest::prop_assert_eq!(ids.len(), fused.len());
            proptest::prop_assert!(fused.windows(2).all(|w| w[0].standardized >= w[1].standardized));
        }
    }
}
