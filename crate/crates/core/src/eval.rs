//! Answer grading, accuracy aggregation and confidence CDFs.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::confidence::MetricName;
use crate::pipeline::{PipelineKind, QuestionResult};

/// Relative tolerance for numeric answer comparison.
pub const NUMERIC_RTOL: f64 = 1e-6;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    MalformedLine { path: String, line: usize, reason: String },
    #[error("duplicate question id `{0}`")]
    DuplicateQuestion(String),
    #[error("no gold answer for question `{0}`")]
    MissingGold(String),
    #[error("no scores to build a CDF from")]
    EmptyCdf,
    #[error("invalid CDF file: {0}")]
    BadCsv(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QAItem {
    pub id: String,
    pub question: String,
    pub answer: String,
}

/// Reads a JSONL gold file of `{"id", "question", "answer"}` objects.
pub fn load_gold(path: &Path) -> Result<Vec<QAItem>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io { path: path.display().to_string(), source })?;
    let mut items: Vec<QAItem> = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| EvalError::MalformedLine { path: path.display().to_string(), line: i + 1, reason };
        let item: QAItem = serde_json::from_str(line).map_err(|e| malformed(e.to_string()))?;
        if item.answer.trim().is_empty() {
            return Err(malformed("empty `answer`".into()));
        }
        if !seen.insert(item.id.clone()) {
            return Err(EvalError::DuplicateQuestion(item.id));
        }
        items.push(item);
    }
    Ok(items)
}

fn number_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d{1,3}(?:,\d{3})+(?:\.\d+)?|-?\d+(?:\.\d+)?").unwrap())
}

fn numbers(text: &str) -> impl Iterator<Item = String> + '_ {
    number_pattern().find_iter(text).map(|m| m.as_str().replace(',', ""))
}

/// Canonical answer of a completion, or `None` when it contains no answer.
///
/// After the last `####` marker the first number wins (or the trimmed text
/// if there is none); without a marker, the last number in the text.
pub fn extract_answer(completion: &str) -> Option<String> {
    if let Some(at) = completion.rfind("####") {
        let tail = completion[at + 4..].trim();
        if let Some(n) = numbers(tail).next() {
            return Some(n);
        }
        let tail = tail.replace(',', "");
        if !tail.is_empty() {
            return Some(tail);
        }
    }
    numbers(completion).last()
}

/// Canonical form of a gold answer: GSM8K-style solutions keep only the
/// value after `####`.
pub fn canonical_gold(answer: &str) -> String {
    if answer.contains("####") {
        extract_answer(answer).unwrap_or_default()
    } else {
        answer.trim().replace(',', "")
    }
}

pub fn is_correct(extracted: Option<&str>, gold: &str) -> bool {
    let Some(extracted) = extracted else { return false };
    let (a, b) = (extracted.trim(), gold.trim());
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => (x - y).abs() <= NUMERIC_RTOL * x.abs().max(y.abs()),
        _ => a == b,
    }
}

/// One final answer of one pipeline configuration on one question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub question_id: String,
    pub pipeline: PipelineKind,
    /// 1-based model indices, e.g. "1,3"; empty for the LLM-only baseline.
    pub combination: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricName>,
    /// `None` when the run failed.
    pub completion: Option<String>,
}

impl Outcome {
    pub fn from_result(result: &QuestionResult) -> Self {
        Self {
            question_id: result.question_id.clone(),
            pipeline: result.pipeline,
            combination: result.combination.clone(),
            metric: result.metric,
            completion: Some(result.final_answer.clone()),
        }
    }

    fn size(&self) -> usize {
        if self.combination.is_empty() {
            0
        } else {
            self.combination.split(',').count()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedOutcome {
    pub question_id: String,
    pub pipeline: PipelineKind,
    pub combination: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<MetricName>,
    pub extracted: Option<String>,
    pub gold: String,
    pub correct: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl Cell {
    fn from_counts(correct: usize, total: usize) -> Self {
        let accuracy = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
        Self { correct, total, accuracy }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboCell {
    pub combination: String,
    pub size: usize,
    #[serde(flatten)]
    pub cell: Cell,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeAverage {
    pub size: usize,
    pub combinations: usize,
    pub accuracy: f64,
}

/// Accuracy of one pipeline (and metric) across model combinations.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ComboTable {
    pub cells: Vec<ComboCell>,
    /// Mean accuracy over the combinations of each size.
    pub by_size: Vec<SizeAverage>,
    /// Mean accuracy over every combination.
    pub average: Option<f64>,
}

impl ComboTable {
    fn build(mut cells: Vec<ComboCell>) -> Self {
        cells.sort_by(|a, b| a.size.cmp(&b.size).then_with(|| combo_key(&a.combination).cmp(&combo_key(&b.combination))));
        let mut by_size: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for c in &cells {
            by_size.entry(c.size).or_default().push(c.cell.accuracy);
        }
        let by_size = by_size
            .into_iter()
            .map(|(size, accs)| SizeAverage { size, combinations: accs.len(), accuracy: mean(&accs) })
            .collect();
        let all: Vec<f64> = cells.iter().map(|c| c.cell.accuracy).collect();
        let average = (!all.is_empty()).then(|| mean(&all));
        Self { cells, by_size, average }
    }
}

fn combo_key(tag: &str) -> Vec<usize> {
    tag.split(',').filter_map(|s| s.parse().ok()).collect()
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `value = minuend - subtrahend`, both of which are stored accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub label: String,
    pub minuend: f64,
    pub subtrahend: f64,
    pub value: f64,
}

impl Delta {
    fn new(label: impl Into<String>, minuend: f64, subtrahend: f64) -> Self {
        Self { label: label.into(), minuend, subtrahend, value: minuend - subtrahend }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub questions: usize,
    pub vanilla_llm: Option<Cell>,
    /// Single-model vanilla RAG, one cell per model.
    pub vanilla_rag: ComboTable,
    pub mixture: ComboTable,
    pub confident: BTreeMap<MetricName, ComboTable>,
    pub deltas: Vec<Delta>,
    pub outcomes: Vec<GradedOutcome>,
}

impl AccuracyReport {
    pub fn delta(&self, label: &str) -> Option<&Delta> {
        self.deltas.iter().find(|d| d.label == label)
    }
}

/// Grades outcomes against gold answers and builds the accuracy tables.
///
/// Deltas compare each pipeline's all-combination average with the
/// LLM-only accuracy and with the mean single-model vanilla RAG accuracy.
pub fn aggregate(outcomes: &[Outcome], gold: &[QAItem]) -> Result<AccuracyReport, EvalError> {
    let gold: HashMap<&str, String> = gold.iter().map(|g| (g.id.as_str(), canonical_gold(&g.answer))).collect();
    let mut graded = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        let g = gold.get(o.question_id.as_str()).ok_or_else(|| EvalError::MissingGold(o.question_id.clone()))?;
        let extracted = o.completion.as_deref().and_then(extract_answer);
        graded.push(GradedOutcome {
            question_id: o.question_id.clone(),
            pipeline: o.pipeline,
            combination: o.combination.clone(),
            metric: o.metric,
            correct: is_correct(extracted.as_deref(), g),
            extracted,
            gold: g.clone(),
        });
    }

    type Key = (PipelineKind, Option<MetricName>, String);
    let mut counts: BTreeMap<Key, (usize, usize, usize)> = BTreeMap::new();
    for (o, g) in outcomes.iter().zip(&graded) {
        let entry = counts.entry((o.pipeline, o.metric, o.combination.clone())).or_insert((o.size(), 0, 0));
        entry.1 += usize::from(g.correct);
        entry.2 += 1;
    }

    let mut vanilla_llm = None;
    let mut vanilla = Vec::new();
    let mut mixture = Vec::new();
    let mut confident: BTreeMap<MetricName, Vec<ComboCell>> = BTreeMap::new();
    for ((pipeline, metric, combination), (size, correct, total)) in counts {
        let cell = Cell::from_counts(correct, total);
        let combo = ComboCell { combination, size, cell };
        match (pipeline, metric) {
            (PipelineKind::VanillaLlm, _) => vanilla_llm = Some(cell),
            (PipelineKind::Vanilla, _) => vanilla.push(combo),
            (PipelineKind::Mixture, _) => mixture.push(combo),
            (PipelineKind::Confident, Some(m)) => confident.entry(m).or_default().push(combo),
            (PipelineKind::Confident, None) => {}
        }
    }
    let vanilla_rag = ComboTable::build(vanilla);
    let mixture = ComboTable::build(mixture);
    let confident: BTreeMap<MetricName, ComboTable> = confident.into_iter().map(|(m, c)| (m, ComboTable::build(c))).collect();

    let llm = vanilla_llm.map(|c| c.accuracy);
    let rag = vanilla_rag.average;
    let mut deltas = Vec::new();
    let mut push_pair = |name: &str, avg: Option<f64>| {
        if let (Some(a), Some(l)) = (avg, llm) {
            deltas.push(Delta::new(format!("{name} vs vanilla-llm"), a, l));
        }
        if name != "vanilla-rag" {
            if let (Some(a), Some(r)) = (avg, rag) {
                deltas.push(Delta::new(format!("{name} vs vanilla-rag"), a, r));
            }
        }
    };
    push_pair("vanilla-rag", rag);
    push_pair("mixture", mixture.average);
    for (m, table) in &confident {
        push_pair(&format!("confident:{m}"), table.average);
    }

    let questions = graded.iter().map(|g| g.question_id.as_str()).collect::<HashSet<_>>().len();
    Ok(AccuracyReport { questions, vanilla_llm, vanilla_rag, mixture, confident, deltas, outcomes: graded })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub threshold: f64,
    pub raw_cdf: f64,
    pub smoothed_cdf: Option<f64>,
}

/// Empirical CDF of oriented confidence scores at each distinct score.
#[derive(Debug, Clone, PartialEq)]
pub struct CdfTable {
    pub rows: Vec<CdfRow>,
}

/// Builds the empirical CDF of `scores`. With `sigma` (in grid steps, the
/// grid being the sorted distinct scores) the jump masses are Gaussian
/// filtered before accumulating, so the smoothed curve stays monotone and
/// still ends at 1.
pub fn cdf_report(scores: &[f64], sigma: Option<f64>) -> Result<CdfTable, EvalError> {
    if scores.is_empty() {
        return Err(EvalError::EmptyCdf);
    }
    let mut sorted: Vec<f64> = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut thresholds = Vec::new();
    let mut mass = Vec::new();
    for s in sorted {
        if thresholds.last() == Some(&s) {
            *mass.last_mut().unwrap() += 1.0;
        } else {
            thresholds.push(s);
            mass.push(1.0);
        }
    }
    let mut raw = Vec::with_capacity(mass.len());
    let mut seen = 0.0;
    for (i, m) in mass.iter().enumerate() {
        seen += m;
        raw.push(if i + 1 == mass.len() { 1.0 } else { seen / n });
    }
    let smoothed = sigma.filter(|s| *s > 0.0).map(|s| {
        let pmf: Vec<f64> = mass.iter().map(|m| m / n).collect();
        let filtered = gaussian_filter(&pmf, s);
        let total: f64 = filtered.iter().sum();
        let mut acc = 0.0;
        filtered.iter().map(|p| { acc += p / total; acc.min(1.0) }).collect::<Vec<f64>>()
    });
    let rows = thresholds
        .into_iter()
        .zip(raw)
        .enumerate()
        .map(|(i, (threshold, raw_cdf))| CdfRow { threshold, raw_cdf, smoothed_cdf: smoothed.as_ref().map(|s| s[i]) })
        .collect();
    Ok(CdfTable { rows })
}

/// 1-D Gaussian filter with reflecting boundaries, truncated at 4σ.
pub fn gaussian_filter(values: &[f64], sigma: f64) -> Vec<f64> {
    let n = values.len() as isize;
    let radius = (4.0 * sigma + 0.5) as isize;
    let mut weights: Vec<f64> = (-radius..=radius).map(|j| (-(j * j) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let wsum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= wsum);
    let reflect = |mut k: isize| -> usize {
        let period = 2 * n;
        k = k.rem_euclid(period);
        (if k >= n { period - 1 - k } else { k }) as usize
    };
    (0..n)
        .map(|i| {
            weights
                .iter()
                .enumerate()
                .map(|(w, weight)| weight * values[reflect(i + w as isize - radius)])
                .sum()
        })
        .collect()
}

impl CdfTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,raw_cdf,smoothed_cdf\n");
        for r in &self.rows {
            let smoothed = r.smoothed_cdf.map(|s| s.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{}", r.threshold, r.raw_cdf, smoothed);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("threshold,raw_cdf,smoothed_cdf") {
            return Err(EvalError::BadCsv("missing header".into()));
        }
        let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| EvalError::BadCsv(format!("`{s}`: {e}")));
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.trim().is_empty()) {
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 3 {
                return Err(EvalError::BadCsv(format!("expected 3 columns in `{line}`")));
            }
            let smoothed_cdf = if cols[2].trim().is_empty() { None } else { Some(parse(cols[2])?) };
            rows.push(CdfRow { threshold: parse(cols[0])?, raw_cdf: parse(cols[1])?, smoothed_cdf });
        }
        Ok(Self { rows })
    }
}
