//! LLM backends that return a completion together with the per-step token
//! probability distributions the confidence metrics need.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::confidence::{ConfidenceScore, MetricName};
use crate::hashing::derive_seed;
use crate::http::{join_url, HttpError, JsonClient, RetryPolicy};

/// Allowed deviation of a step's total probability mass from 1.
pub const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum GenerationError {
    #[error("chat request failed: {0}")]
    Transport(#[from] HttpError),
    #[error("backend response carries no token logprobs; enable `logprobs`/`top_logprobs` on the server")]
    LogprobsMissing,
    #[error("backend returned an empty completion")]
    EmptyCompletion,
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("invalid token step: {0}")]
    InvalidStep(String),
}

impl GenerationError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, GenerationError::Transport(e) if e.is_retryable())
    }
}

/// One autoregressive step: the emitted token and the (possibly truncated)
/// distribution it was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenStep {
    chosen: String,
    chosen_prob: f64,
    dist: Vec<(String, f64)>,
    tail_mass: f64,
    vocab_size: usize,
}

impl TokenStep {
    /// Validates and normalizes a step. `dist` is re-sorted by descending
    /// probability; the tail mass is whatever the listed tokens leave over.
    pub fn new(
        chosen: impl Into<String>,
        chosen_prob: f64,
        mut dist: Vec<(String, f64)>,
        vocab_size: usize,
    ) -> Result<Self, GenerationError> {
        let chosen = chosen.into();
        let invalid = |msg: String| Err(GenerationError::InvalidStep(msg));
        if !(chosen_prob > 0.0 && chosen_prob <= 1.0) {
            return invalid(format!("chosen probability {chosen_prob} outside (0, 1]"));
        }
        if dist.is_empty() {
            return invalid("empty distribution".into());
        }
        if let Some((t, p)) = dist.iter().find(|(_, p)| !(*p > 0.0 && *p <= 1.0)) {
            return invalid(format!("probability {p} of `{t}` outside (0, 1]"));
        }
        if !dist.iter().any(|(t, _)| *t == chosen) {
            return invalid(format!("chosen token `{chosen}` missing from distribution"));
        }
        if vocab_size < dist.len() {
            return invalid(format!("vocabulary size {vocab_size} smaller than distribution size {}", dist.len()));
        }
        let listed: f64 = dist.iter().map(|(_, p)| p).sum();
        if listed > 1.0 + MASS_TOLERANCE {
            return invalid(format!("listed probabilities sum to {listed}"));
        }
        let tail_mass = (1.0 - listed).max(0.0);
        if vocab_size == dist.len() && tail_mass > MASS_TOLERANCE {
            return invalid(format!("tail mass {tail_mass} but every vocabulary token is listed"));
        }
        dist.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(Self { chosen, chosen_prob, dist, tail_mass, vocab_size })
    }

    /// Full-vocabulary step from a probability vector. Zero entries are left
    /// unlisted; tokens are named `t<index>`.
    pub fn from_probs(probs: &[f64], chosen: usize) -> Result<Self, GenerationError> {
        let dist = probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(j, p)| (format!("t{j}"), *p))
            .collect();
        let chosen_prob = probs.get(chosen).copied().unwrap_or(0.0);
        Self::new(format!("t{chosen}"), chosen_prob, dist, probs.len())
    }

    pub fn chosen(&self) -> &str {
        &self.chosen
    }

    pub fn chosen_prob(&self) -> f64 {
        self.chosen_prob
    }

    pub fn dist(&self) -> &[(String, f64)] {
        &self.dist
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// Number of vocabulary tokens not listed in `dist`.
    pub fn unlisted(&self) -> usize {
        self.vocab_size - self.dist.len()
    }
}

/// Raw output of one backend call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Generation {
    pub completion: String,
    pub steps: Vec<TokenStep>,
}

impl Generation {
    pub fn new(completion: String, steps: Vec<TokenStep>) -> Result<Self, GenerationError> {
        if completion.is_empty() || steps.is_empty() {
            return Err(GenerationError::EmptyCompletion);
        }
        Ok(Self { completion, steps })
    }

    /// Builds a generation whose completion is the concatenation of the
    /// chosen tokens.
    pub fn from_steps(steps: Vec<TokenStep>) -> Result<Self, GenerationError> {
        let completion = steps.iter().map(|s| s.chosen.as_str()).collect();
        Self::new(completion, steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeParams {
    pub temperature: f64,
    pub max_tokens: u32,
    /// Per-call seed; derived per (question, embedding models) by the pipeline.
    #[serde(skip_deserializing)]
    pub seed: Option<u64>,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self { temperature: 0.0, max_tokens: 512, seed: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum DistributionMode {
    /// Every vocabulary token's probability is known.
    Full,
    /// Only the top `k` tokens per step are reported.
    Truncated { k: usize },
}

pub trait LlmBackend: Send + Sync {
    fn id(&self) -> String;
    fn vocab_size(&self) -> usize;
    fn distribution_mode(&self) -> DistributionMode;
    fn generate(&self, prompt: &str, params: &DecodeParams) -> Result<Generation, GenerationError>;
}

impl<B: LlmBackend + ?Sized> LlmBackend for Arc<B> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn vocab_size(&self) -> usize {
        (**self).vocab_size()
    }
    fn distribution_mode(&self) -> DistributionMode {
        (**self).distribution_mode()
    }
    fn generate(&self, prompt: &str, params: &DecodeParams) -> Result<Generation, GenerationError> {
        (**self).generate(prompt, params)
    }
}

/// A completion scored for confidence, tied to the question and embedding
/// model(s) whose retrieval produced its prompt.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationRecord {
    pub question_id: String,
    /// 1-based model indices joined by commas (e.g. "1,3"); empty for the
    /// no-retrieval baseline.
    pub combination: String,
    /// Declared index of the embedding model for single-model runs.
    pub model_index: Option<usize>,
    pub prompt: String,
    pub completion: String,
    #[serde(skip)]
    pub steps: Vec<TokenStep>,
    pub confidence: BTreeMap<MetricName, ConfidenceScore>,
}

impl GenerationRecord {
    pub fn score(&self, metric: MetricName) -> Option<&ConfidenceScore> {
        self.confidence.get(&metric)
    }
}

const MOCK_WORDS: &[&str] = &[
    " First", " we", " add", " the", " numbers", " so", " total", " is", " each", " then", " multiply", " find",
    ",", ".",
];
const MOCK_SYMBOLS: &[&str] = &[" ####", " ", "-", "0", "1", "2", "3", "4", "5", "6", "7", "8", "9"];

/// Offline backend whose output is a pure function of `(seed, prompt)`.
///
/// Completions look like `" First we add ... #### 42"`; the answer is drawn
/// from numbers that follow `####` in the prompt (half the time, when
/// present), else from any number in the prompt, else at random. Each step's
/// distribution is a softmax over the whole vocabulary with the emitted token
/// as argmax, so greedy decoding is honoured and exact metrics are available.
#[derive(Debug)]
pub struct MockBackend {
    seed: u64,
    vocab: Vec<String>,
    top_k: Option<usize>,
    calls: AtomicUsize,
}

impl MockBackend {
    pub const DEFAULT_VOCAB: usize = 64;
    /// Size of the built-in token set.
    pub const MIN_VOCAB: usize = MOCK_WORDS.len() + MOCK_SYMBOLS.len();

    pub fn new(seed: u64) -> Self {
        Self::with_vocab(seed, Self::DEFAULT_VOCAB)
    }

    pub fn with_vocab(seed: u64, vocab_size: usize) -> Self {
        let mut vocab: Vec<String> = MOCK_WORDS.iter().chain(MOCK_SYMBOLS).map(|s| s.to_string()).collect();
        let mut i = 0;
        while vocab.len() < vocab_size {
            vocab.push(format!("<extra_{i}>"));
            i += 1;
        }
        Self { seed, vocab, top_k: None, calls: AtomicUsize::new(0) }
    }

    /// Reports only the `k` most likely tokens per step, like a chat API.
    pub fn truncated(mut self, k: usize) -> Self {
        self.top_k = Some(k.max(1));
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }

    fn token_index(&self, token: &str) -> usize {
        self.vocab.iter().position(|t| t == token).expect("mock token in vocabulary")
    }

    fn plan(&self, prompt: &str, rng: &mut ChaCha8Rng) -> Vec<usize> {
        static NUMBER: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
        static MARKED: std::sync::OnceLock<Regex> = std::sync::OnceLock::new();
        let number = NUMBER.get_or_init(|| Regex::new(r"-?\d+").unwrap());
        let marked = MARKED.get_or_init(|| Regex::new(r"####\s*(-?\d+)").unwrap());

        let marked: Vec<&str> = marked.captures_iter(prompt).map(|c| c.get(1).unwrap().as_str()).collect();
        let all: Vec<&str> = number.find_iter(prompt).map(|m| m.as_str()).collect();
        let answer = if !marked.is_empty() && rng.gen_bool(0.5) {
            marked[rng.gen_range(0..marked.len())].to_string()
        } else if !all.is_empty() {
            all[rng.gen_range(0..all.len())].to_string()
        } else {
            rng.gen_range(0..100).to_string()
        };

        let mut plan = Vec::new();
        for _ in 0..rng.gen_range(2..7) {
            plan.push(rng.gen_range(0..MOCK_WORDS.len()));
        }
        plan.push(self.token_index(" ####"));
        plan.push(self.token_index(" "));
        for ch in answer.chars() {
            plan.push(self.token_index(&ch.to_string()));
        }
        plan
    }

    fn step(&self, chosen: usize, sharpness: f64, rng: &mut ChaCha8Rng) -> TokenStep {
        let v = self.vocab.len();
        let mut logits: Vec<f64> = (0..v).map(|_| sharpness * rng.gen_range(-1.0..1.0)).collect();
        let others_max = logits
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != chosen)
            .map(|(_, l)| *l)
            .fold(f64::NEG_INFINITY, f64::max);
        logits[chosen] = others_max + 0.05 + sharpness * rng.gen_range(0.0..2.0);
        let max = logits[chosen];
        let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exp.iter().sum();
        let mut dist: Vec<(String, f64)> = exp.iter().zip(&self.vocab).map(|(e, t)| (t.clone(), e / z)).collect();
        dist.sort_by(|a, b| b.1.total_cmp(&a.1));
        if let Some(k) = self.top_k {
            dist.truncate(k);
        }
        let chosen_prob = exp[chosen] / z;
        TokenStep::new(self.vocab[chosen].clone(), chosen_prob, dist, v).expect("softmax step is valid")
    }
}

impl LlmBackend for MockBackend {
    fn id(&self) -> String {
        format!("mock(seed={})", self.seed)
    }

    fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    fn distribution_mode(&self) -> DistributionMode {
        match self.top_k {
            Some(k) if k < self.vocab.len() => DistributionMode::Truncated { k },
            _ => DistributionMode::Full,
        }
    }

    fn generate(&self, prompt: &str, params: &DecodeParams) -> Result<Generation, GenerationError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &["mock-backend", prompt]));
        let mut plan = self.plan(prompt, &mut rng);
        plan.truncate(params.max_tokens as usize);
        let sharpness = rng.gen_range(0.3..3.0);
        let steps = plan.into_iter().map(|t| self.step(t, sharpness, &mut rng)).collect();
        Generation::from_steps(steps)
    }
}

type ScriptFn = dyn Fn(&str) -> Result<Generation, GenerationError> + Send + Sync;

/// Backend driven by a caller-supplied function of the prompt. Useful for
/// pinning exact distributions or injecting failures.
pub struct ScriptedBackend {
    script: Box<ScriptFn>,
    vocab_size: usize,
    calls: AtomicUsize,
}

impl ScriptedBackend {
    pub fn new(
        vocab_size: usize,
        script: impl Fn(&str) -> Result<Generation, GenerationError> + Send + Sync + 'static,
    ) -> Self {
        Self { script: Box::new(script), vocab_size, calls: AtomicUsize::new(0) }
    }

    /// Always returns the same generation.
    pub fn fixed(generation: Generation) -> Self {
        let vocab = generation.steps.iter().map(TokenStep::vocab_size).max().unwrap_or(1);
        Self::new(vocab, move |_| Ok(generation.clone()))
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl LlmBackend for ScriptedBackend {
    fn id(&self) -> String {
        "scripted".into()
    }

    fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    fn distribution_mode(&self) -> DistributionMode {
        DistributionMode::Full
    }

    fn generate(&self, prompt: &str, _params: &DecodeParams) -> Result<Generation, GenerationError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        (self.script)(prompt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RemoteChatConfig {
    /// Base URL; requests go to `<endpoint>/v1/chat/completions`.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Vocabulary size of the served model; chat APIs do not report it.
    pub vocab_size: usize,
    #[serde(default = "default_top_logprobs")]
    pub top_logprobs: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
}

fn default_top_logprobs() -> usize {
    20
}

/// Client for an OpenAI-compatible `/v1/chat/completions` endpoint with
/// `logprobs` enabled.
#[derive(Debug)]
pub struct RemoteChatBackend {
    config: RemoteChatConfig,
    client: JsonClient,
}

impl RemoteChatBackend {
    pub fn new(config: RemoteChatConfig) -> Result<Self, GenerationError> {
        let client = JsonClient::new(config.api_key_env.as_deref(), config.retry)?;
        Ok(Self { config, client })
    }

    pub fn request_body(&self, prompt: &str, params: &DecodeParams) -> serde_json::Value {
        let mut body = serde_json::json!({
            "model": self.config.model,
            "messages": [{ "role": "user", "content": prompt }],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "logprobs": true,
            "top_logprobs": self.config.top_logprobs,
        });
        if let Some(seed) = params.seed {
            body["seed"] = serde_json::json!(seed);
        }
        body
    }

    fn parse(&self, value: &serde_json::Value) -> Result<Generation, GenerationError> {
        let choice = value
            .pointer("/choices/0")
            .ok_or_else(|| GenerationError::Malformed("no choices".into()))?;
        let completion = choice
            .pointer("/message/content")
            .and_then(|c| c.as_str())
            .unwrap_or_default()
            .to_string();
        if completion.is_empty() {
            return Err(GenerationError::EmptyCompletion);
        }
        let content = choice
            .pointer("/logprobs/content")
            .and_then(|c| c.as_array())
            .filter(|c| !c.is_empty())
            .ok_or(GenerationError::LogprobsMissing)?;
        let steps = content
            .iter()
            .map(|entry| self.parse_step(entry))
            .collect::<Result<Vec<_>, _>>()?;
        Generation::new(completion, steps)
    }

    fn parse_step(&self, entry: &serde_json::Value) -> Result<TokenStep, GenerationError> {
        let token = entry
            .get("token")
            .and_then(|t| t.as_str())
            .ok_or_else(|| GenerationError::Malformed("logprob entry without `token`".into()))?;
        let logprob = entry.get("logprob").and_then(|l| l.as_f64()).ok_or(GenerationError::LogprobsMissing)?;
        let top = entry.get("top_logprobs").and_then(|t| t.as_array()).ok_or(GenerationError::LogprobsMissing)?;

        let chosen_prob = logprob.exp().clamp(f64::MIN_POSITIVE, 1.0);
        let mut dist: Vec<(String, f64)> = Vec::with_capacity(top.len() + 1);
        for alt in top {
            let (Some(t), Some(lp)) = (alt.get("token").and_then(|t| t.as_str()), alt.get("logprob").and_then(|l| l.as_f64()))
            else {
                return Err(GenerationError::Malformed("top_logprobs entry without token/logprob".into()));
            };
            let p = if t == token { chosen_prob } else { lp.exp().min(1.0) };
            if p > 0.0 {
                dist.push((t.to_string(), p));
            }
        }
        if !dist.iter().any(|(t, _)| t == token) {
            dist.push((token.to_string(), chosen_prob));
        }
        // servers round logprobs; rescale slight overshoot back onto the simplex
        let listed: f64 = dist.iter().map(|(_, p)| p).sum();
        if listed > 1.0 && listed <= 1.0 + 1e-3 {
            for (_, p) in &mut dist {
                *p /= listed;
            }
        }
        let chosen_prob = dist.iter().find(|(t, _)| t == token).map(|(_, p)| *p).unwrap_or(chosen_prob);
        TokenStep::new(token, chosen_prob, dist, self.config.vocab_size.max(top.len() + 1))
    }
}

impl LlmBackend for RemoteChatBackend {
    fn id(&self) -> String {
        format!("{} @ {}", self.config.model, self.config.endpoint)
    }

    fn vocab_size(&self) -> usize {
        self.config.vocab_size
    }

    fn distribution_mode(&self) -> DistributionMode {
        DistributionMode::Truncated { k: self.config.top_logprobs }
    }

    fn generate(&self, prompt: &str, params: &DecodeParams) -> Result<Generation, GenerationError> {
        let url = join_url(&self.config.endpoint, "v1/chat/completions");
        let value = self.client.post_json(&url, &self.request_body(prompt, params))?;
        self.parse(&value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_validation() {
        assert!(TokenStep::from_probs(&[0.5, 0.5, 0.0, 0.0], 0).is_ok());
        assert!(TokenStep::from_probs(&[0.6, 0.6], 0).is_err());
        // chosen token has zero probability
        assert!(TokenStep::from_probs(&[1.0, 0.0], 1).is_err());
        // unassigned mass with nowhere to go
        assert!(TokenStep::new("a", 0.5, vec![("a".into(), 0.5)], 1).is_err());
        // chosen token must be listed
        assert!(TokenStep::new("z", 0.5, vec![("a".into(), 0.5)], 10).is_err());
        assert!(TokenStep::new("a", 0.5, vec![("a".into(), 0.5)], 0).is_err());
    }

    #[test]
    fn step_is_sorted_and_tail_computed() {
        let s = TokenStep::new("b", 0.2, vec![("b".into(), 0.2), ("a".into(), 0.7)], 5).unwrap();
        assert_eq!(s.dist()[0].0, "a");
        assert!((s.tail_mass() - 0.1).abs() < 1e-12);
        assert_eq!(s.unlisted(), 3);
    }

    #[test]
    fn mock_is_deterministic() {
        let m = MockBackend::new(7);
        let p = DecodeParams::default();
        let a = m.generate("What is 3 + 4?", &p).unwrap();
        let b = MockBackend::new(7).generate("What is 3 + 4?", &p).unwrap();
        assert_eq!(a, b);
        assert_eq!(m.calls(), 1);
        assert!(a.completion.contains("####"));
    }

    #[test]
    fn mock_varies_with_prompt_and_seed() {
        let p = DecodeParams::default();
        let m = MockBackend::new(7);
        let outs: std::collections::HashSet<String> =
            (0..20).map(|i| m.generate(&format!("prompt {i} with 1 2 3"), &p).unwrap().completion).collect();
        assert!(outs.len() > 1);
        assert_ne!(
            MockBackend::new(1).generate("same", &p).unwrap(),
            MockBackend::new(2).generate("same", &p).unwrap()
        );
    }

    #[test]
    fn mock_steps_are_normalized_and_greedy() {
        let g = MockBackend::new(3).generate("Question: 12 and 30", &DecodeParams::default()).unwrap();
        for s in &g.steps {
            let mass: f64 = s.dist().iter().map(|(_, p)| p).sum::<f64>() + s.tail_mass();
            assert!((mass - 1.0).abs() <= MASS_TOLERANCE);
            assert_eq!(s.dist()[0].0, s.chosen());
            assert_eq!(s.unlisted(), 0);
        }
        let concatenated: String = g.steps.iter().map(|s| s.chosen()).collect();
        assert_eq!(concatenated, g.completion);
    }

    #[test]
    fn mock_truncated_mode_reports_tail() {
        let m = MockBackend::new(3).truncated(5);
        assert_eq!(m.distribution_mode(), DistributionMode::Truncated { k: 5 });
        let g = m.generate("x", &DecodeParams::default()).unwrap();
        assert!(g.steps.iter().all(|s| s.dist().len() == 5 && s.tail_mass() > 0.0));
    }

    #[test]
    fn mock_respects_max_tokens() {
        let params = DecodeParams { max_tokens: 2, ..Default::default() };
        assert_eq!(MockBackend::new(1).generate("x", &params).unwrap().steps.len(), 2);
        let params = DecodeParams { max_tokens: 0, ..Default::default() };
        assert!(matches!(MockBackend::new(1).generate("x", &params), Err(GenerationError::EmptyCompletion)));
    }

    #[test]
    fn scripted_three_tokens() {
        let steps = (0..3).map(|_| TokenStep::from_probs(&[1.0, 0.0], 0).unwrap()).collect();
        let b = ScriptedBackend::fixed(Generation::from_steps(steps).unwrap());
        let g = b.generate("anything", &DecodeParams::default()).unwrap();
        assert_eq!(g.steps.len(), 3);
        assert!(g.steps.iter().all(|s| s.chosen_prob() == 1.0));
        assert_eq!(b.calls(), 1);
    }

    fn remote() -> RemoteChatBackend {
        RemoteChatBackend::new(RemoteChatConfig {
            endpoint: "http://127.0.0.1:9".into(),
            model: "m".into(),
            api_key_env: None,
            vocab_size: 100,
            top_logprobs: 2,
            retry: RetryPolicy::default(),
        })
        .unwrap()
    }

    #[test]
    fn remote_parses_logprobs() {
        let resp = serde_json::json!({
            "choices": [{
                "message": {"role": "assistant", "content": "Hi!"},
                "logprobs": {"content": [
                    {"token": "Hi", "logprob": -0.1, "top_logprobs": [
                        {"token": "Hi", "logprob": -0.1}, {"token": "Hey", "logprob": -2.5}]},
                    {"token": "!", "logprob": -3.0, "top_logprobs": [
                        {"token": ".", "logprob": -0.3}, {"token": "?", "logprob": -2.0}]}
                ]}
            }]
        });
        let g = remote().parse(&resp).unwrap();
        assert_eq!(g.completion, "Hi!");
        assert_eq!(g.steps.len(), 2);
        assert!((g.steps[0].chosen_prob() - (-0.1f64).exp()).abs() < 1e-12);
        // chosen token outside the reported top-k is added to the distribution
        assert_eq!(g.steps[1].dist().len(), 3);
        assert_eq!(g.steps[1].vocab_size(), 100);
    }

    #[test]
    fn remote_without_logprobs_is_fatal() {
        let resp = serde_json::json!({"choices": [{"message": {"content": "Hi"}}]});
        assert!(matches!(remote().parse(&resp), Err(GenerationError::LogprobsMissing)));
        let resp = serde_json::json!({"choices": [{"message": {"content": "Hi"}, "logprobs": null}]});
        assert!(matches!(remote().parse(&resp), Err(GenerationError::LogprobsMissing)));
        let resp = serde_json::json!({"choices": [{"message": {"content": ""}, "logprobs": null}]});
        assert!(matches!(remote().parse(&resp), Err(GenerationError::EmptyCompletion)));
    }

    #[test]
    fn request_body_shape() {
        let body = remote().request_body("hello", &DecodeParams { seed: Some(5), ..Default::default() });
        assert_eq!(body["logprobs"], true);
        assert_eq!(body["top_logprobs"], 2);
        assert_eq!(body["temperature"], 0.0);
        assert_eq!(body["messages"][0]["content"], "hello");
        assert_eq!(body["seed"], 5);
    }
}
