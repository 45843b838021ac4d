//! File-backed run configuration, evaluation sweeps and report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::confidence::{MetricName, PROB_FLOOR};
use crate::corpus::{ChunkKind, Corpus, CorpusError};
use crate::embedding::{EmbeddingProvider, HashEmbedder, RemoteEmbedder, RemoteEmbedderConfig};
use crate::eval::{self, AccuracyReport, CdfTable, ComboTable, EvalError, Outcome, QAItem};
use crate::generation::{DecodeParams, DistributionMode, LlmBackend, MockBackend, RemoteChatBackend, RemoteChatConfig};
use crate::http::RetryPolicy;
use crate::pipeline::{
    combination_tag, select_confident, CombinationSpec, Engine, PipelineError, PipelineKind, PipelineSettings,
    Question, QuestionResult, QuotaMode,
};
use crate::retrieval::{default_quotas, PromptTemplate, Quotas, ReferenceStyle};

pub const REPORT_FILE: &str = "report.json";
pub const TABLES_FILE: &str = "tables.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("io: {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    pub fn stage(&self) -> &'static str {
        match self {
            HarnessError::Config(_) => "config",
            HarnessError::Corpus(_) => "corpus",
            HarnessError::Eval(_) => "eval",
            HarnessError::Pipeline(e) => e.stage(),
            HarnessError::Io { .. } => "io",
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSource {
    pub path: PathBuf,
    pub kind: ChunkKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "provider", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EmbeddingModelConfig {
    /// Offline feature-hashing embedder.
    DeterministicTest {
        id: String,
        #[serde(default = "default_dim")]
        dim: usize,
    },
    /// OpenAI-compatible `/v1/embeddings` endpoint.
    Remote {
        id: String,
        endpoint: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default = "default_batch")]
        batch_size: usize,
        #[serde(default)]
        retry: RetryPolicy,
    },
}

fn default_dim() -> usize {
    HashEmbedder::DEFAULT_DIM
}

fn default_batch() -> usize {
    64
}

impl EmbeddingModelConfig {
    pub fn id(&self) -> &str {
        match self {
            EmbeddingModelConfig::DeterministicTest { id, .. } | EmbeddingModelConfig::Remote { id, .. } => id,
        }
    }

    fn credential(&self) -> Option<&str> {
        match self {
            EmbeddingModelConfig::Remote { api_key_env, .. } => api_key_env.as_deref(),
            EmbeddingModelConfig::DeterministicTest { .. } => None,
        }
    }

    fn build(&self) -> Result<Arc<dyn EmbeddingProvider>, PipelineError> {
        Ok(match self {
            EmbeddingModelConfig::DeterministicTest { id, dim } => Arc::new(HashEmbedder::new(id.clone(), *dim)),
            EmbeddingModelConfig::Remote { id, endpoint, model, api_key_env, batch_size, retry } => {
                let config = RemoteEmbedderConfig {
                    endpoint: endpoint.clone(),
                    model: model.clone(),
                    api_key_env: api_key_env.clone(),
                    batch_size: *batch_size,
                    retry: *retry,
                };
                Arc::new(RemoteEmbedder::new(id.clone(), config)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BackendConfig {
    Mock {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_mock_vocab")]
        vocab_size: usize,
        /// Report only this many tokens per step.
        #[serde(default)]
        top_k: Option<usize>,
    },
    Remote {
        endpoint: String,
        model: String,
        #[serde(default)]
        api_key_env: Option<String>,
        vocab_size: usize,
        #[serde(default = "default_top_logprobs")]
        top_logprobs: usize,
        #[serde(default)]
        retry: RetryPolicy,
    },
}

fn default_mock_vocab() -> usize {
    MockBackend::DEFAULT_VOCAB
}

fn default_top_logprobs() -> usize {
    20
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Mock { seed: 0, vocab_size: default_mock_vocab(), top_k: None }
    }
}

impl BackendConfig {
    fn credential(&self) -> Option<&str> {
        match self {
            BackendConfig::Remote { api_key_env, .. } => api_key_env.as_deref(),
            BackendConfig::Mock { .. } => None,
        }
    }

    pub fn build(&self) -> Result<Arc<dyn LlmBackend>, PipelineError> {
        Ok(match self {
            BackendConfig::Mock { seed, vocab_size, top_k } => {
                let mock = MockBackend::with_vocab(*seed, *vocab_size);
                Arc::new(match top_k {
                    Some(k) => mock.truncated(*k),
                    None => mock,
                })
            }
            BackendConfig::Remote { endpoint, model, api_key_env, vocab_size, top_logprobs, retry } => {
                Arc::new(RemoteChatBackend::new(RemoteChatConfig {
                    endpoint: endpoint.clone(),
                    model: model.clone(),
                    api_key_env: api_key_env.clone(),
                    vocab_size: *vocab_size,
                    top_logprobs: *top_logprobs,
                    retry: *retry,
                })?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetrievalConfig {
    pub k: usize,
    /// Chunks per kind; `null` switches to plain top-k.
    pub quotas: Option<Quotas>,
    pub quota_mode: QuotaMode,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { k: 4, quotas: Some(default_quotas()), quota_mode: QuotaMode::PerKind }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Vec<CorpusSource>,
    #[serde(default)]
    pub gold: Option<PathBuf>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub embedding_models: Vec<EmbeddingModelConfig>,
    #[serde(default)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub decode: DecodeParams,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default = "default_pipelines")]
    pub pipelines: Vec<PipelineKind>,
    /// Subsets swept by the mixture and confident pipelines; defaults to
    /// every subset of two or more models.
    #[serde(default)]
    pub combinations: Option<CombinationSpec>,
    /// Selection metric for one-shot confident runs; sweeps report all.
    #[serde(default = "default_metric")]
    pub metric: MetricName,
    #[serde(default)]
    pub template: Option<PathBuf>,
    #[serde(default)]
    pub reference_style: ReferenceStyle,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Gaussian smoothing width for CDFs in grid steps; `null` disables.
    #[serde(default = "default_sigma")]
    pub cdf_sigma: Option<f64>,
    #[serde(default)]
    pub max_questions: Option<usize>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_pipelines() -> Vec<PipelineKind> {
    vec![PipelineKind::VanillaLlm, PipelineKind::Vanilla, PipelineKind::Mixture, PipelineKind::Confident]
}

fn default_metric() -> MetricName {
    MetricName::SelfCertainty
}

fn default_concurrency() -> usize {
    4
}

fn default_sigma() -> Option<f64> {
    Some(1.0)
}

impl RunConfig {
    /// Parses a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            config.resolve_paths(base);
        }
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.corpus.iter_mut().for_each(|c| fix(&mut c.path));
        self.gold.as_mut().map(fix);
        self.template.as_mut().map(fix);
        fix(&mut self.out);
    }

    /// Checks everything that can be checked without touching the network.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.embedding_models.is_empty() {
            return bad("`embedding_models` is empty".into());
        }
        let mut ids = std::collections::HashSet::new();
        for m in &self.embedding_models {
            if !ids.insert(m.id()) {
                return bad(format!("duplicate embedding model id `{}`", m.id()));
            }
        }
        if self.corpus.is_empty() {
            return bad("`corpus` is empty".into());
        }
        if self.concurrency == 0 {
            return bad("`concurrency` must be at least 1".into());
        }
        if let Some(s) = self.cdf_sigma {
            if !s.is_finite() || s < 0.0 {
                return bad(format!("`cdf_sigma` must be a non-negative number, got {s}"));
            }
        }
        if self.pipelines.is_empty() {
            return bad("`pipelines` is empty".into());
        }
        if let BackendConfig::Mock { vocab_size, .. } = self.backend {
            if vocab_size < MockBackend::MIN_VOCAB {
                return bad(format!("mock `vocab_size` must be at least {}, got {vocab_size}", MockBackend::MIN_VOCAB));
            }
        }
        self.combination_spec().expand(self.embedding_models.len(), self.seed)?;
        let vars = self.embedding_models.iter().filter_map(|m| m.credential()).chain(self.backend.credential());
        for var in vars {
            if std::env::var_os(var).is_none() {
                return bad(format!("credential variable `{var}` is not set"));
            }
        }
        Ok(())
    }

    pub fn combination_spec(&self) -> CombinationSpec {
        self.combinations.clone().unwrap_or_else(|| CombinationSpec::all_multi(self.embedding_models.len()))
    }

    pub fn settings(&self) -> Result<PipelineSettings, HarnessError> {
        let template = match &self.template {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(io_err(path))?;
                PromptTemplate::new(text, self.reference_style).map_err(|e| HarnessError::Config(e.to_string()))?
            }
            None => PromptTemplate::new(PromptTemplate::default().text(), self.reference_style)
                .map_err(|e| HarnessError::Config(e.to_string()))?,
        };
        Ok(PipelineSettings {
            k: self.retrieval.k,
            quotas: self.retrieval.quotas.clone(),
            quota_mode: self.retrieval.quota_mode,
            metric: self.metric,
            decode: self.decode,
            template,
            seed: self.seed,
        })
    }

    pub fn load_corpus(&self) -> Result<Corpus, HarnessError> {
        let mut corpus = Corpus::new();
        for source in &self.corpus {
            let n = corpus.ingest(&source.path, source.kind)?;
            log::info!("ingested {n} {} chunks from {}", source.kind, source.path.display());
        }
        Ok(corpus)
    }

    pub fn load_questions(&self) -> Result<Vec<QAItem>, HarnessError> {
        let path = self.gold.as_ref().ok_or_else(|| HarnessError::Config("`gold` is required for eval".into()))?;
        let mut items = eval::load_gold(path)?;
        if let Some(n) = self.max_questions {
            items.truncate(n);
        }
        if items.is_empty() {
            return Err(HarnessError::Config(format!("{} holds no questions", path.display())));
        }
        Ok(items)
    }

    /// Validates, loads the corpus and embeds it with every model.
    pub fn build_engine(&self) -> Result<Engine, HarnessError> {
        self.validate()?;
        let corpus = Arc::new(self.load_corpus()?);
        let providers = self.embedding_models.iter().map(|m| m.build()).collect::<Result<Vec<_>, _>>()?;
        let backend = self.backend.build()?;
        Ok(Engine::new(corpus, providers, backend, self.settings()?)?)
    }

    pub fn sha256(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&canonical).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Reproducibility record written next to every report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub version: &'static str,
    pub config_sha256: String,
    pub seed: u64,
    pub pipelines: Vec<PipelineKind>,
    pub metric: MetricName,
    pub embedding_models: Vec<String>,
    pub backend: String,
    pub distribution_mode: DistributionMode,
    pub vocab_size: usize,
    pub prob_floor: f64,
    pub decode: DecodeParams,
    pub retrieval: RetrievalConfig,
    pub combinations: Vec<String>,
}

impl Manifest {
    fn new(config: &RunConfig, pipelines: Vec<PipelineKind>, metric: MetricName) -> Result<Self, HarnessError> {
        let backend = config.backend.build()?;
        let combos = config.combination_spec().expand(config.embedding_models.len(), config.seed)?;
        Ok(Self {
            version: env!("CARGO_PKG_VERSION"),
            config_sha256: config.sha256(),
            seed: config.seed,
            pipelines,
            metric,
            embedding_models: config.embedding_models.iter().map(|m| m.id().to_string()).collect(),
            backend: backend.id(),
            distribution_mode: backend.distribution_mode(),
            vocab_size: backend.vocab_size(),
            prob_floor: PROB_FLOOR,
            decode: config.decode,
            retrieval: config.retrieval.clone(),
            combinations: combos.iter().map(|c| combination_tag(c)).collect(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf, HarnessError> {
        write_file(dir, MANIFEST_FILE, &(to_json(self) + "\n"))
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("report types serialize")
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(io_err(&path))?;
    Ok(path)
}

/// A pipeline run that produced no answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub question_id: String,
    pub pipeline: PipelineKind,
    pub combination: String,
    pub stage: String,
    pub error: String,
}

/// A single-model generation dropped from a confident-mode selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedNote {
    pub question_id: String,
    pub combination: String,
    pub model_index: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub models: Vec<String>,
    pub accuracy: AccuracyReport,
    pub failures: Vec<RunFailure>,
    pub dropped: Vec<DroppedNote>,
}

#[derive(Debug, Default)]
struct QuestionRun {
    outcomes: Vec<Outcome>,
    failures: Vec<RunFailure>,
    dropped: Vec<DroppedNote>,
    /// Oriented scores of each successful single-model vanilla record.
    scores: BTreeMap<MetricName, Vec<f64>>,
}

impl QuestionRun {
    fn record(&mut self, qid: &str, pipeline: PipelineKind, combination: String, metric: Option<MetricName>, r: Result<&QuestionResult, String>, stage: &str) {
        match r {
            Ok(result) => self.outcomes.push(Outcome { metric, ..Outcome::from_result(result) }),
            Err(error) => {
                self.failures.push(RunFailure {
                    question_id: qid.to_string(),
                    pipeline,
                    combination: combination.clone(),
                    stage: stage.to_string(),
                    error,
                });
                self.outcomes.push(Outcome { question_id: qid.to_string(), pipeline, combination, metric, completion: None });
            }
        }
    }
}

fn sweep_question(
    engine: &Engine,
    pipelines: &[PipelineKind],
    combos: &[Vec<usize>],
    item: &QAItem,
) -> Result<QuestionRun, PipelineError> {
    let mut run = QuestionRun::default();
    let qid = item.id.as_str();
    let ctx = engine.question(Question::new(&item.id, &item.question));
    let wants = |p: PipelineKind| pipelines.contains(&p);

    if wants(PipelineKind::VanillaLlm) {
        let r = split_fatal(ctx.llm_only())?;
        let stage = r.as_ref().err().map_or("", |e| e.stage());
        run.record(qid, PipelineKind::VanillaLlm, String::new(), None, r.as_ref().map_err(|e| e.to_string()), stage);
    }

    let need_vanilla = wants(PipelineKind::Vanilla) || wants(PipelineKind::Confident);
    let vanilla: Vec<Result<QuestionResult, PipelineError>> = if need_vanilla {
        (0..engine.model_count()).into_par_iter().map(|m| split_fatal(ctx.vanilla(m))).collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };
    if wants(PipelineKind::Vanilla) {
        for (m, r) in vanilla.iter().enumerate() {
            let stage = r.as_ref().err().map_or("", |e| e.stage());
            run.record(qid, PipelineKind::Vanilla, combination_tag(&[m]), None, r.as_ref().map_err(|e| e.to_string()), stage);
        }
    }
    for r in vanilla.iter().flatten() {
        for rec in &r.records {
            for (metric, score) in &rec.confidence {
                run.scores.entry(*metric).or_default().push(score.oriented);
            }
        }
    }

    if wants(PipelineKind::Mixture) {
        let mixed: Vec<_> = combos.par_iter().map(|c| split_fatal(ctx.mixture(c))).collect::<Result<Vec<_>, _>>()?;
        for (c, r) in combos.iter().zip(&mixed) {
            let stage = r.as_ref().err().map_or("", |e| e.stage());
            run.record(qid, PipelineKind::Mixture, combination_tag(c), None, r.as_ref().map_err(|e| e.to_string()), stage);
        }
    }

    if wants(PipelineKind::Confident) {
        for c in combos {
            let runs: Vec<(usize, Result<&QuestionResult, String>)> =
                c.iter().map(|&m| (m, vanilla[m].as_ref().map_err(|e| e.to_string()))).collect();
            let tag = combination_tag(c);
            for metric in MetricName::ALL {
                let r = select_confident(qid, c, &runs, metric);
                if metric == MetricName::ALL[0] {
                    if let Ok(result) = &r {
                        run.dropped.extend(result.dropped.iter().map(|d| DroppedNote {
                            question_id: qid.to_string(),
                            combination: tag.clone(),
                            model_index: d.model_index,
                            error: d.error.clone(),
                        }));
                    }
                }
                let stage = r.as_ref().err().map_or("", |e| e.stage());
                run.record(qid, PipelineKind::Confident, tag.clone(), Some(metric), r.as_ref().map_err(|e| e.to_string()), stage);
            }
        }
    }
    Ok(run)
}

/// Lifts fatal errors out of a pipeline result so they abort the sweep;
/// anything else stays in the inner result and is recorded as a failure.
fn split_fatal(r: Result<QuestionResult, PipelineError>) -> Result<Result<QuestionResult, PipelineError>, PipelineError> {
    match r {
        Err(e) if e.is_fatal() => Err(e),
        other => Ok(other),
    }
}

/// Runs every configured pipeline over the gold questions.
///
/// Each confident-mode selection reuses the single-model vanilla runs of the
/// same question, so the LLM is called once per (question, model) for both.
pub fn run_sweep(engine: &Engine, config: &RunConfig, questions: &[QAItem]) -> Result<(EvalReport, BTreeMap<MetricName, CdfTable>), HarnessError> {
    let combos = config.combination_spec().expand(engine.model_count(), config.seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.concurrency)
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let runs: Vec<QuestionRun> = pool.install(|| {
        questions
            .par_iter()
            .map(|q| sweep_question(engine, &config.pipelines, &combos, q))
            .collect::<Result<_, _>>()
    })?;

    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    let mut dropped = Vec::new();
    let mut scores: BTreeMap<MetricName, Vec<f64>> = BTreeMap::new();
    for run in runs {
        outcomes.extend(run.outcomes);
        failures.extend(run.failures);
        dropped.extend(run.dropped);
        for (m, s) in run.scores {
            scores.entry(m).or_default().extend(s);
        }
    }
    let accuracy = eval::aggregate(&outcomes, questions)?;
    let mut cdfs = BTreeMap::new();
    for (metric, s) in &scores {
        cdfs.insert(*metric, eval::cdf_report(s, config.cdf_sigma)?);
    }
    Ok((EvalReport { models: engine.model_ids(), accuracy, failures, dropped }, cdfs))
}

#[derive(Debug)]
pub struct EvalSummary {
    pub report: EvalReport,
    pub files: Vec<PathBuf>,
}

/// Full evaluation: manifest, sweep, then report.json, tables.txt and one
/// `cdf_<metric>.csv` per metric. The manifest is written before the sweep
/// so it survives a failed run.
pub fn run_eval(config: &RunConfig) -> Result<EvalSummary, HarnessError> {
    config.validate()?;
    let mut files = vec![Manifest::new(config, config.pipelines.clone(), config.metric)?.write(&config.out)?];
    let questions = config.load_questions()?;
    let engine = config.build_engine()?;
    let (report, cdfs) = run_sweep(&engine, config, &questions)?;
    files.push(write_file(&config.out, REPORT_FILE, &(to_json(&report) + "\n"))?);
    files.push(write_file(&config.out, TABLES_FILE, &render_tables(&report))?);
    for (metric, table) in &cdfs {
        files.push(write_file(&config.out, &cdf_file_name(*metric), &table.to_csv())?);
    }
    Ok(EvalSummary { report, files })
}

pub fn cdf_file_name(metric: MetricName) -> String {
    format!("cdf_{}.csv", metric.as_str())
}

/// One-shot question through a single pipeline; writes the manifest.
pub fn run_ask(config: &RunConfig, question: &str, pipeline: PipelineKind, models: &[usize]) -> Result<QuestionResult, HarnessError> {
    config.validate()?;
    Manifest::new(config, vec![pipeline], config.metric)?.write(&config.out)?;
    let engine = config.build_engine()?;
    let q = Question::new("ask", question);
    let ctx = engine.question(q);
    let result = match pipeline {
        PipelineKind::VanillaLlm => ctx.llm_only(),
        PipelineKind::Vanilla => match models {
            [m] => ctx.vanilla(*m),
            _ => Err(PipelineError::Config(format!("vanilla takes exactly one model, got {}", models.len()))),
        },
        PipelineKind::Mixture => ctx.mixture(models),
        PipelineKind::Confident => ctx.confident(models, config.metric),
    }?;
    Ok(result)
}

pub fn load_report(path: &Path) -> Result<EvalReport, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
}

fn pct(x: f64) -> String {
    format!("{:.1}", 100.0 * x)
}

fn signed_pct(x: f64) -> String {
    format!("{:+.1}", 100.0 * x)
}

fn render_rows(out: &mut String, title: &str, header: &[String], rows: &[Vec<String>]) {
    let cols = header.len();
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect::<Vec<_>>()
            .join("  ")
    };
    let _ = writeln!(out, "{title}");
    let head = line(header);
    let _ = writeln!(out, "{head}");
    let _ = writeln!(out, "{}", "-".repeat(head.len()));
    for r in rows {
        let _ = writeln!(out, "{}", line(r).trim_end());
    }
    out.push('\n');
}

fn delta_cell(report: &AccuracyReport, label: &str) -> String {
    report.delta(label).map_or_else(|| "-".into(), |d| signed_pct(d.value))
}

/// Aligned-text accuracy tables (percent) for the pipelines in a report.
pub fn render_tables(report: &EvalReport) -> String {
    let acc = &report.accuracy;
    let mut out = String::new();
    let _ = writeln!(out, "Questions: {}", acc.questions);
    for (i, m) in report.models.iter().enumerate() {
        let _ = writeln!(out, "Model {}: {m}", i + 1);
    }
    out.push('\n');

    if acc.vanilla_llm.is_some() || !acc.vanilla_rag.cells.is_empty() {
        let mut rows = Vec::new();
        if let Some(c) = acc.vanilla_llm {
            rows.push(vec!["Vanilla LLM".to_string(), pct(c.accuracy)]);
        }
        for c in &acc.vanilla_rag.cells {
            let label = c.combination.parse::<usize>().ok().and_then(|i| report.models.get(i - 1)).cloned().unwrap_or_default();
            rows.push(vec![format!("Vanilla RAG {} ({label})", c.combination), pct(c.cell.accuracy)]);
        }
        if let Some(avg) = acc.vanilla_rag.average {
            rows.push(vec!["Avg".into(), pct(avg)]);
            rows.push(vec!["Improvement".into(), delta_cell(acc, "vanilla-rag vs vanilla-llm")]);
        }
        render_rows(&mut out, "Table 1. Vanilla LLM and vanilla RAG accuracy (%)", &["Method".into(), "Accuracy".into()], &rows);
    }

    if !acc.mixture.cells.is_empty() {
        let mut rows = size_rows(&acc.mixture);
        rows.push(vec!["v.s. Vanilla LLM".into(), delta_cell(acc, "mixture vs vanilla-llm")]);
        rows.push(vec!["v.s. Vanilla RAG".into(), delta_cell(acc, "mixture vs vanilla-rag")]);
        render_rows(&mut out, "Table 2. Mixture-embedding RAG accuracy (%)", &["Models".into(), "Accuracy".into()], &rows);
    }

    if !acc.confident.is_empty() {
        let metrics: Vec<MetricName> = acc.confident.keys().copied().collect();
        let mut header = vec!["Models".to_string()];
        header.extend(metrics.iter().map(|m| m.label().to_string()));
        let first = &acc.confident[&metrics[0]];
        let mut rows: Vec<Vec<String>> = Vec::new();
        let mut emit = |label: String, value: &dyn Fn(&ComboTable) -> Option<f64>, signed: bool| {
            let mut row = vec![label];
            for m in &metrics {
                let v = value(&acc.confident[m]);
                row.push(v.map_or_else(|| "-".into(), |x| if signed { signed_pct(x) } else { pct(x) }));
            }
            rows.push(row);
        };
        for c in &first.cells {
            let tag = c.combination.clone();
            emit(tag.clone(), &|t| t.cells.iter().find(|x| x.combination == tag).map(|x| x.cell.accuracy), false);
        }
        for s in &first.by_size {
            let size = s.size;
            emit(format!("Avg (n={size})"), &|t| t.by_size.iter().find(|x| x.size == size).map(|x| x.accuracy), false);
        }
        emit("Avg".into(), &|t| t.average, false);
        let rag = acc.vanilla_rag.average;
        let llm = acc.vanilla_llm.map(|c| c.accuracy);
        emit("v.s. Vanilla LLM".into(), &|t| t.average.zip(llm).map(|(a, b)| a - b), true);
        emit("v.s. Vanilla RAG".into(), &|t| t.average.zip(rag).map(|(a, b)| a - b), true);
        render_rows(&mut out, "Table 3. Confident RAG accuracy by selection metric (%)", &header, &rows);
    }

    if !report.failures.is_empty() || !report.dropped.is_empty() {
        let _ = writeln!(out, "Failed runs: {}", report.failures.len());
        let _ = writeln!(out, "Dropped generations: {}", report.dropped.len());
    }
    out
}

fn size_rows(table: &ComboTable) -> Vec<Vec<String>> {
    let mut rows: Vec<Vec<String>> = table.cells.iter().map(|c| vec![c.combination.clone(), pct(c.cell.accuracy)]).collect();
    for s in &table.by_size {
        rows.push(vec![format!("Avg (n={})", s.size), pct(s.accuracy)]);
    }
    if let Some(avg) = table.average {
        rows.push(vec!["Avg".into(), pct(avg)]);
    }
    rows
}
