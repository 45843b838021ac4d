//! End-to-end flows: no-retrieval baseline, vanilla RAG, mixture-embedding
//! RAG and confident RAG.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use itertools::Itertools;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::confidence::{self, ConfidenceError, MetricName};
use crate::corpus::{Chunk, Corpus};
use crate::embedding::{EmbeddingError, EmbeddingProvider};
use crate::generation::{DecodeParams, GenerationError, GenerationRecord, LlmBackend};
use crate::hashing::derive_seed;
use crate::retrieval::{self, assemble_prompt, Budget, ChunkIndex, PromptTemplate, Quotas, RetrievalCandidate, RetrievalError, SimilarityRow};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("embedding: {0}")]
    Embedding(EmbeddingError),
    #[error("retrieval: {0}")]
    Retrieval(RetrievalError),
    #[error("generation: {0}")]
    Generation(#[from] GenerationError),
    #[error("confidence: {0}")]
    Confidence(#[from] ConfidenceError),
    #[error("config: {0}")]
    Config(String),
    #[error("selection: all {0} generations failed")]
    AllGenerationsFailed(usize),
}

impl From<RetrievalError> for PipelineError {
    fn from(e: RetrievalError) -> Self {
        match e {
            RetrievalError::Embedding(inner) => PipelineError::Embedding(inner),
            other => PipelineError::Retrieval(other),
        }
    }
}

impl From<EmbeddingError> for PipelineError {
    fn from(e: EmbeddingError) -> Self {
        PipelineError::Embedding(e)
    }
}

impl PipelineError {
    /// Errors that point at misconfiguration (wrong endpoint contract,
    /// missing logprobs, inconsistent dimensions) rather than a transient
    /// failure; they abort a sweep instead of being dropped.
    pub fn is_fatal(&self) -> bool {
        match self {
            PipelineError::Embedding(e) => !e.is_retryable(),
            PipelineError::Generation(e) => !(e.is_retryable() || matches!(e, GenerationError::EmptyCompletion)),
            PipelineError::Retrieval(_) | PipelineError::Confidence(_) | PipelineError::Config(_) => true,
            PipelineError::AllGenerationsFailed(_) => false,
        }
    }

    pub fn stage(&self) -> &'static str {
        match self {
            PipelineError::Embedding(_) => "embedding",
            PipelineError::Retrieval(_) => "retrieval",
            PipelineError::Generation(_) => "generation",
            PipelineError::Confidence(_) => "confidence",
            PipelineError::Config(_) => "config",
            PipelineError::AllGenerationsFailed(_) => "selection",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PipelineKind {
    /// No retrieval; the bare question is sent to the LLM.
    VanillaLlm,
    Vanilla,
    Mixture,
    Confident,
}

impl PipelineKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PipelineKind::VanillaLlm => "vanilla-llm",
            PipelineKind::Vanilla => "vanilla",
            PipelineKind::Mixture => "mixture",
            PipelineKind::Confident => "confident",
        }
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineKind {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "vanilla-llm" | "llm" => Ok(PipelineKind::VanillaLlm),
            "vanilla" => Ok(PipelineKind::Vanilla),
            "mixture" => Ok(PipelineKind::Mixture),
            "confident" => Ok(PipelineKind::Confident),
            other => Err(PipelineError::Config(format!("unknown pipeline `{other}`"))),
        }
    }
}

/// How per-kind quotas apply to mixture retrieval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuotaMode {
    /// Quotas hold per kind after fusion, as in single-model retrieval.
    #[default]
    PerKind,
    /// Fusion keeps the quota total regardless of kind.
    Pooled,
}

#[derive(Debug, Clone)]
pub struct PipelineSettings {
    pub k: usize,
    /// When set, retrieval keeps this many chunks of each kind and `k` is ignored.
    pub quotas: Option<Quotas>,
    pub quota_mode: QuotaMode,
    pub metric: MetricName,
    pub decode: DecodeParams,
    pub template: PromptTemplate,
    pub seed: u64,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            k: 4,
            quotas: Some(retrieval::default_quotas()),
            quota_mode: QuotaMode::PerKind,
            metric: MetricName::SelfCertainty,
            decode: DecodeParams::default(),
            template: PromptTemplate::default(),
            seed: 0,
        }
    }
}

impl PipelineSettings {
    pub fn budget(&self) -> Budget {
        match &self.quotas {
            Some(q) => Budget::PerKind(q.clone()),
            None => Budget::TopK(self.k),
        }
    }

    pub fn fusion_budget(&self) -> Budget {
        match (&self.quotas, self.quota_mode) {
            (Some(q), QuotaMode::Pooled) => Budget::TopK(q.values().sum()),
            _ => self.budget(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub text: String,
}

impl Question {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        Self { id: id.into(), text: text.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievedSet {
    pub model_id: String,
    pub chunk_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedRecord {
    pub model_index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuestionResult {
    pub question_id: String,
    pub pipeline: PipelineKind,
    pub combination: String,
    pub final_answer: String,
    /// Declared index of the winning embedding model (confident mode).
    pub winner: Option<usize>,
    pub metric: Option<MetricName>,
    #[serde(skip)]
    pub records: Vec<Arc<GenerationRecord>>,
    pub retrieved: Vec<RetrievedSet>,
    /// Fused candidates behind a mixture prompt, best first.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub fused: Vec<RetrievalCandidate>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub dropped: Vec<DroppedRecord>,
}

/// 1-based, comma-joined model indices, e.g. `[0, 2]` → `"1,3"`.
pub fn combination_tag(models: &[usize]) -> String {
    models.iter().map(|i| (i + 1).to_string()).join(",")
}

/// Which embedding-model subsets a sweep runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum CombinationSpec {
    /// Every subset of each listed size.
    Sizes(Vec<usize>),
    /// Explicit 1-based index lists.
    Explicit(Vec<Vec<usize>>),
    /// `per_size` seeded random subsets of each listed size.
    Random { sizes: Vec<usize>, per_size: usize },
}

impl CombinationSpec {
    pub fn all_multi(n_models: usize) -> Self {
        CombinationSpec::Sizes((2..=n_models).collect())
    }

    /// 0-based subsets, each ascending, ordered by size then lexicographically.
    pub fn expand(&self, n_models: usize, seed: u64) -> Result<Vec<Vec<usize>>, PipelineError> {
        let check_size = |s: usize| {
            if s == 0 || s > n_models {
                Err(PipelineError::Config(format!("combination size {s} outside 1..={n_models}")))
            } else {
                Ok(())
            }
        };
        let mut out: Vec<Vec<usize>> = match self {
            CombinationSpec::Sizes(sizes) => {
                let mut out = Vec::new();
                for &s in sizes.iter().sorted().dedup() {
                    check_size(s)?;
                    out.extend((0..n_models).combinations(s));
                }
                out
            }
            CombinationSpec::Explicit(lists) => {
                let mut out = Vec::new();
                for list in lists {
                    let mut subset = Vec::with_capacity(list.len());
                    for &i in list {
                        if i == 0 || i > n_models {
                            return Err(PipelineError::Config(format!("model index {i} outside 1..={n_models}")));
                        }
                        subset.push(i - 1);
                    }
                    subset.sort_unstable();
                    subset.dedup();
                    check_size(subset.len())?;
                    out.push(subset);
                }
                out
            }
            CombinationSpec::Random { sizes, per_size } => {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["combinations"]));
                let mut out = Vec::new();
                for &s in sizes.iter().sorted().dedup() {
                    check_size(s)?;
                    let all: Vec<Vec<usize>> = (0..n_models).combinations(s).collect();
                    out.extend(all.choose_multiple(&mut rng, (*per_size).min(all.len())).cloned());
                }
                out
            }
        };
        out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        out.dedup();
        Ok(out)
    }
}

struct EmbeddingModel {
    provider: Arc<dyn EmbeddingProvider>,
    index: ChunkIndex,
}

/// Corpus, embedding models and LLM backend wired together.
pub struct Engine {
    corpus: Arc<Corpus>,
    models: Vec<EmbeddingModel>,
    backend: Arc<dyn LlmBackend>,
    settings: PipelineSettings,
}

impl Engine {
    /// Embeds the corpus once per provider (providers in parallel).
    pub fn new(
        corpus: Arc<Corpus>,
        providers: Vec<Arc<dyn EmbeddingProvider>>,
        backend: Arc<dyn LlmBackend>,
        settings: PipelineSettings,
    ) -> Result<Self, PipelineError> {
        if providers.is_empty() {
            return Err(PipelineError::Config("at least one embedding model is required".into()));
        }
        let ids: Vec<&str> = providers.iter().map(|p| p.model_id()).collect();
        if let Some(dup) = ids.iter().duplicates().next() {
            return Err(PipelineError::Config(format!("duplicate embedding model id `{dup}`")));
        }
        let models = providers
            .into_par_iter()
            .map(|provider| {
                let index = ChunkIndex::build(provider.as_ref(), &corpus)?;
                Ok(EmbeddingModel { provider, index })
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        Ok(Self { corpus, models, backend, settings })
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn settings(&self) -> &PipelineSettings {
        &self.settings
    }

    pub fn backend(&self) -> &dyn LlmBackend {
        self.backend.as_ref()
    }

    pub fn model_count(&self) -> usize {
        self.models.len()
    }

    pub fn model_ids(&self) -> Vec<String> {
        self.models.iter().map(|m| m.provider.model_id().to_string()).collect()
    }

    pub fn model_descriptions(&self) -> Vec<String> {
        self.models.iter().map(|m| m.provider.describe()).collect()
    }

    /// Per-question view that memoizes each model's similarity row.
    pub fn question(&self, question: Question) -> QuestionContext<'_> {
        QuestionContext {
            engine: self,
            rows: (0..self.models.len()).map(|_| OnceLock::new()).collect(),
            question,
        }
    }

    pub fn run_llm_only(&self, question: &Question) -> Result<QuestionResult, PipelineError> {
        self.question(question.clone()).llm_only()
    }

    pub fn run_vanilla(&self, question: &Question, model: usize) -> Result<QuestionResult, PipelineError> {
        self.question(question.clone()).vanilla(model)
    }

    pub fn run_mixture(&self, question: &Question, models: &[usize]) -> Result<QuestionResult, PipelineError> {
        self.question(question.clone()).mixture(models)
    }

    pub fn run_confident(&self, question: &Question, models: &[usize]) -> Result<QuestionResult, PipelineError> {
        self.question(question.clone()).confident(models, self.settings.metric)
    }

    fn check_models(&self, models: &[usize]) -> Result<(), PipelineError> {
        if models.is_empty() {
            return Err(PipelineError::Config("empty embedding-model subset".into()));
        }
        if let Some(&bad) = models.iter().find(|&&m| m >= self.models.len()) {
            return Err(PipelineError::Config(format!("model index {bad} outside 0..{}", self.models.len())));
        }
        if models.iter().duplicates().next().is_some() {
            return Err(PipelineError::Config("embedding-model subset repeats a model".into()));
        }
        Ok(())
    }
}

/// One question bound to an engine. Similarity rows are computed at most
/// once per model and shared by every pipeline run on the question.
pub struct QuestionContext<'e> {
    engine: &'e Engine,
    question: Question,
    rows: Vec<OnceLock<Result<Arc<SimilarityRow>, RetrievalError>>>,
}

impl<'e> QuestionContext<'e> {
    pub fn question(&self) -> &Question {
        &self.question
    }

    pub fn row(&self, model: usize) -> Result<Arc<SimilarityRow>, PipelineError> {
        self.engine.check_models(&[model])?;
        self.rows[model]
            .get_or_init(|| {
                let m = &self.engine.models[model];
                let q = m
                    .provider
                    .embed(std::slice::from_ref(&self.question.text))?
                    .pop()
                    .ok_or(EmbeddingError::CountMismatch { expected: 1, got: 0 })?;
                m.index.score(&self.question.id, &q, &self.engine.corpus, None).map(Arc::new)
            })
            .clone()
            .map_err(PipelineError::from)
    }

    fn chunks(&self, ids: &[String]) -> Result<Vec<&'e Chunk>, PipelineError> {
        ids.iter()
            .map(|id| {
                self.engine
                    .corpus
                    .get(id)
                    .map_err(|e| PipelineError::Config(e.to_string()))
            })
            .collect()
    }

    fn generate(
        &self,
        combination: &str,
        model_index: Option<usize>,
        references: &[&Chunk],
    ) -> Result<GenerationRecord, PipelineError> {
        let settings = &self.engine.settings;
        let prompt = assemble_prompt(&settings.template, &self.question.text, references);
        let params = DecodeParams {
            seed: Some(derive_seed(settings.seed, &[&self.question.id, combination])),
            ..settings.decode
        };
        let generation = self.engine.backend.generate(&prompt, &params)?;
        let confidence = confidence::score_all(&generation.steps)?;
        Ok(GenerationRecord {
            question_id: self.question.id.clone(),
            combination: combination.to_string(),
            model_index,
            prompt,
            completion: generation.completion,
            steps: generation.steps,
            confidence,
        })
    }

    fn single(
        &self,
        pipeline: PipelineKind,
        combination: String,
        record: GenerationRecord,
        retrieved: Vec<RetrievedSet>,
        fused: Vec<RetrievalCandidate>,
    ) -> QuestionResult {
        QuestionResult {
            question_id: self.question.id.clone(),
            pipeline,
            combination,
            final_answer: record.completion.clone(),
            winner: None,
            metric: None,
            records: vec![Arc::new(record)],
            retrieved,
            fused,
            dropped: Vec::new(),
        }
    }

    /// The LLM alone: bare-question prompt, no retrieval.
    pub fn llm_only(&self) -> Result<QuestionResult, PipelineError> {
        let record = self.generate("", None, &[])?;
        Ok(self.single(PipelineKind::VanillaLlm, String::new(), record, Vec::new(), Vec::new()))
    }

    /// Retrieve with one embedding model, generate once.
    pub fn vanilla(&self, model: usize) -> Result<QuestionResult, PipelineError> {
        let row = self.row(model)?;
        let ids = retrieval::select(&row, &self.engine.settings.budget());
        let refs = self.chunks(&ids)?;
        let tag = combination_tag(&[model]);
        let record = self.generate(&tag, Some(model), &refs)?;
        let retrieved = vec![RetrievedSet { model_id: row.model_id.clone(), chunk_ids: ids }];
        Ok(self.single(PipelineKind::Vanilla, tag, record, retrieved, Vec::new()))
    }

    /// Fuse standardized retrievals of several models, generate once.
    pub fn mixture(&self, models: &[usize]) -> Result<QuestionResult, PipelineError> {
        self.engine.check_models(models)?;
        let rows: Vec<SimilarityRow> = models
            .iter()
            .map(|&m| self.row(m).map(|r| (*r).clone()))
            .collect::<Result<_, _>>()?;
        let mut fused = retrieval::fuse(&rows, &self.engine.settings.fusion_budget())?;
        for c in &mut fused {
            // fuse indexes rows by position; report the declared model index
            c.model_index = models[c.model_index];
        }
        let ids: Vec<String> = fused.iter().map(|c| c.chunk_id.clone()).collect();
        let refs = self.chunks(&ids)?;
        let tag = combination_tag(models);
        let model_index = (models.len() == 1).then(|| models[0]);
        let record = self.generate(&tag, model_index, &refs)?;
        let retrieved = models
            .iter()
            .map(|&m| RetrievedSet {
                model_id: self.engine.models[m].provider.model_id().to_string(),
                chunk_ids: fused.iter().filter(|c| c.model_index == m).map(|c| c.chunk_id.clone()).collect(),
            })
            .collect();
        Ok(self.single(PipelineKind::Mixture, tag, record, retrieved, fused))
    }

    /// One vanilla run per model (concurrently), then keep the most
    /// confident answer under `metric`. Runs that fail transiently are
    /// dropped and logged; a fatal failure fails the question.
    pub fn confident(&self, models: &[usize], metric: MetricName) -> Result<QuestionResult, PipelineError> {
        self.engine.check_models(models)?;
        let mut runs: Vec<Result<QuestionResult, PipelineError>> = models.par_iter().map(|&m| self.vanilla(m)).collect();
        if let Some(i) = runs.iter().position(|r| r.as_ref().is_err_and(PipelineError::is_fatal)) {
            return Err(runs.swap_remove(i).unwrap_err());
        }
        let runs: Vec<(usize, Result<&QuestionResult, String>)> = models
            .iter()
            .zip(&runs)
            .map(|(&m, r)| (m, r.as_ref().map_err(|e| e.to_string())))
            .collect();
        select_confident(&self.question.id, models, &runs, metric)
    }
}

/// Builds a confident-mode result from per-model vanilla outcomes.
///
/// `runs` pairs each declared model index with its vanilla result or the
/// error text of a failed run.
pub fn select_confident(
    question_id: &str,
    models: &[usize],
    runs: &[(usize, Result<&QuestionResult, String>)],
    metric: MetricName,
) -> Result<QuestionResult, PipelineError> {
    let mut records = Vec::new();
    let mut retrieved = Vec::new();
    let mut dropped = Vec::new();
    for (model, run) in runs {
        match run {
            Ok(result) => {
                records.extend(result.records.iter().cloned());
                retrieved.extend(result.retrieved.iter().cloned());
            }
            Err(error) => {
                log::warn!("question {question_id}: dropping model {} ({error})", model + 1);
                dropped.push(DroppedRecord { model_index: *model, error: error.clone() });
            }
        }
    }
    if records.is_empty() {
        return Err(PipelineError::AllGenerationsFailed(runs.len()));
    }
    let best = confidence::select_most_confident(&records, metric)?;
    let winner = &records[best];
    Ok(QuestionResult {
        question_id: question_id.to_string(),
        pipeline: PipelineKind::Confident,
        combination: combination_tag(models),
        final_answer: winner.completion.clone(),
        winner: winner.model_index,
        metric: Some(metric),
        records,
        retrieved,
        fused: Vec::new(),
        dropped,
    })
}
