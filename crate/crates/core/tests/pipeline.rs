mod common;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use confident_rag::confidence::{ConfidenceScore, MetricName};
use confident_rag::generation::{Generation, GenerationError, GenerationRecord, LlmBackend, ScriptedBackend, TokenStep};
use confident_rag::pipeline::{select_confident, Engine, PipelineError, PipelineKind, PipelineSettings, Question, QuestionResult};
use confident_rag::retrieval::{self, assemble_prompt, Budget};

fn plain_k(k: usize) -> PipelineSettings {
    PipelineSettings { k, quotas: None, ..PipelineSettings::default() }
}

#[test]
fn runs_are_deterministic() {
    let qs = common::questions(1, 5);
    let (a, _) = common::mock_engine(common::corpus(3, 40, 6), 3, PipelineSettings::default());
    let (b, _) = common::mock_engine(common::corpus(3, 40, 6), 3, PipelineSettings::default());
    for q in &qs {
        assert_eq!(a.run_vanilla(q, 1).unwrap(), b.run_vanilla(q, 1).unwrap());
        assert_eq!(a.run_mixture(q, &[0, 2]).unwrap(), b.run_mixture(q, &[0, 2]).unwrap());
        assert_eq!(a.run_confident(q, &[0, 1, 2]).unwrap(), b.run_confident(q, &[0, 1, 2]).unwrap());
    }
}

#[test]
fn degenerate_pipelines_match_vanilla() {
    let (engine, _) = common::mock_engine(common::corpus(5, 30, 4), 2, PipelineSettings::default());
    for q in common::questions(2, 20) {
        for m in 0..2 {
            let vanilla = engine.run_vanilla(&q, m).unwrap();
            assert_eq!(engine.run_confident(&q, &[m]).unwrap().final_answer, vanilla.final_answer);
            let mixture = engine.run_mixture(&q, &[m]).unwrap();
            assert_eq!(mixture.final_answer, vanilla.final_answer);
            assert_eq!(mixture.records[0].prompt, vanilla.records[0].prompt);
        }
    }
}

#[test]
fn zero_k_sends_the_bare_question() {
    let (engine, _) = common::mock_engine(common::corpus(5, 30, 4), 2, plain_k(0));
    for q in common::questions(4, 10) {
        let vanilla = engine.run_vanilla(&q, 0).unwrap();
        let llm = engine.run_llm_only(&q).unwrap();
        assert_eq!(vanilla.final_answer, llm.final_answer);
        let bare = assemble_prompt(&engine.settings().template, &q.text, &[]);
        assert_eq!(vanilla.records[0].prompt, bare);
        assert!(vanilla.retrieved[0].chunk_ids.is_empty());
    }
}

#[test]
fn retrieved_ids_match_top_k_oracle() {
    let (engine, _) = common::mock_engine(common::corpus(8, 50, 0), 2, plain_k(5));
    for q in common::questions(9, 10) {
        let ctx = engine.question(q.clone());
        for m in 0..2 {
            let result = ctx.vanilla(m).unwrap();
            let row = ctx.row(m).unwrap();
            let mut oracle: Vec<_> = row.entries().to_vec();
            oracle.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.ordinal.cmp(&b.ordinal)));
            let expected: Vec<String> = oracle.iter().take(5).map(|e| e.chunk_id.clone()).collect();
            assert_eq!(result.retrieved[0].chunk_ids, expected);
        }
    }
}

#[test]
fn quotas_split_references_by_kind() {
    let (engine, _) = common::mock_engine(common::corpus(8, 30, 5), 1, PipelineSettings::default());
    let q = &common::questions(3, 1)[0];
    let ids = &engine.run_vanilla(q, 0).unwrap().retrieved[0].chunk_ids;
    assert_eq!(ids.iter().filter(|id| id.starts_with("qa-")).count(), 3);
    assert_eq!(ids.iter().filter(|id| id.starts_with("tb-")).count(), 1);
}

#[test]
fn mixture_references_are_unique_and_ordered() {
    let (engine, _) = common::mock_engine(common::corpus(12, 40, 0), 3, plain_k(6));
    for q in common::questions(13, 10) {
        let r = engine.run_mixture(&q, &[0, 1, 2]).unwrap();
        let ids: Vec<&str> = r.fused.iter().map(|c| c.chunk_id.as_str()).collect();
        let mut dedup = ids.clone();
        dedup.sort_unstable();
        dedup.dedup();
        assert_eq!(dedup.len(), ids.len());
        assert_eq!(ids.len(), 6);
        assert!(r.fused.windows(2).all(|w| w[0].standardized >= w[1].standardized));
        let prompt = &r.records[0].prompt;
        for (i, c) in r.fused.iter().enumerate() {
            let text = &engine.corpus().get(&c.chunk_id).unwrap().text;
            assert!(prompt.contains(&format!("[{}] {text}", i + 1)));
        }
    }
}

#[test]
fn backend_call_counts() {
    let (engine, backend) = common::mock_engine(common::corpus(5, 20, 3), 4, PipelineSettings::default());
    let q = &common::questions(6, 1)[0];
    let before = backend.calls();
    engine.run_vanilla(q, 2).unwrap();
    assert_eq!(backend.calls() - before, 1);
    let before = backend.calls();
    engine.run_mixture(q, &[0, 1, 3]).unwrap();
    assert_eq!(backend.calls() - before, 1);
    for n in 1..=4 {
        let models: Vec<usize> = (0..n).collect();
        let before = backend.calls();
        let r = engine.run_confident(q, &models).unwrap();
        assert_eq!(backend.calls() - before, n);
        assert_eq!(r.records.len(), n);
    }
}

#[test]
fn confident_winner_is_the_argmax() {
    let (engine, _) = common::mock_engine(common::corpus(21, 40, 5), 4, PipelineSettings::default());
    for q in common::questions(22, 15) {
        let r = engine.run_confident(&q, &[0, 1, 2, 3]).unwrap();
        let best = r
            .records
            .iter()
            .map(|rec| rec.confidence[&MetricName::SelfCertainty].oriented)
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, s)| if s > acc.1 { (i, s) } else { acc });
        assert_eq!(r.final_answer, r.records[best.0].completion);
        assert_eq!(r.winner, r.records[best.0].model_index);
    }
}

#[test]
fn permuting_the_subset_keeps_the_winner() {
    let (engine, _) = common::mock_engine(common::corpus(31, 40, 5), 3, PipelineSettings::default());
    for q in common::questions(32, 10) {
        let a = engine.run_confident(&q, &[0, 1, 2]).unwrap();
        let b = engine.run_confident(&q, &[2, 0, 1]).unwrap();
        assert_eq!(a.final_answer, b.final_answer);
        assert_eq!(a.winner, b.winner);
    }
}

fn scored(model: usize, oriented: f64, answer: &str) -> QuestionResult {
    let mut confidence = BTreeMap::new();
    confidence.insert(MetricName::Gini, ConfidenceScore { metric: MetricName::Gini, raw: oriented, oriented });
    QuestionResult {
        question_id: "q".into(),
        pipeline: PipelineKind::Vanilla,
        combination: (model + 1).to_string(),
        final_answer: answer.into(),
        winner: None,
        metric: None,
        records: vec![Arc::new(GenerationRecord {
            question_id: "q".into(),
            combination: (model + 1).to_string(),
            model_index: Some(model),
            prompt: String::new(),
            completion: answer.into(),
            steps: Vec::new(),
            confidence,
        })],
        retrieved: Vec::new(),
        fused: Vec::new(),
        dropped: Vec::new(),
    }
}

#[test]
fn scripted_scores_pick_the_second_model() {
    let (a, b) = (scored(0, 0.1, "#### 1"), scored(1, 0.8, "#### 2"));
    let runs = vec![(0, Ok(&a)), (1, Ok(&b))];
    let r = select_confident("q", &[0, 1], &runs, MetricName::Gini).unwrap();
    assert_eq!(r.final_answer, "#### 2");
    assert_eq!(r.winner, Some(1));
    assert_eq!(r.combination, "1,2");
}

#[test]
fn failed_generations_are_dropped() {
    let fails = AtomicUsize::new(0);
    let ok = Generation::from_steps(vec![TokenStep::from_probs(&[0.7, 0.2, 0.1], 0).unwrap()]).unwrap();
    let corpus = common::corpus(5, 20, 0);
    let settings = plain_k(1);
    let probe = Engine::new(Arc::new(corpus.clone()), common::providers(2), Arc::new(ScriptedBackend::fixed(ok.clone())), settings.clone()).unwrap();
    let prompt = |q: &Question, m| probe.run_vanilla(q, m).unwrap().records[0].prompt.clone();
    let q = common::questions(1, 50)
        .into_iter()
        .find(|q| prompt(q, 0) != prompt(q, 1))
        .expect("some question where the models retrieve differently");
    let bad_prompt = prompt(&q, 0);

    let backend = Arc::new(ScriptedBackend::new(3, move |prompt| {
        if prompt == bad_prompt {
            fails.fetch_add(1, Ordering::Relaxed);
            Err(GenerationError::EmptyCompletion)
        } else {
            Ok(ok.clone())
        }
    }));
    let engine = Engine::new(Arc::new(corpus), common::providers(2), backend.clone() as Arc<dyn LlmBackend>, settings).unwrap();
    let r = engine.run_confident(&q, &[0, 1]).unwrap();
    assert_eq!(r.records.len(), 1);
    assert_eq!(r.winner, Some(1));
    assert_eq!(r.dropped.len(), 1);
    assert_eq!(r.dropped[0].model_index, 0);
    let err = engine.run_confident(&q, &[0]).unwrap_err();
    assert!(matches!(err, PipelineError::AllGenerationsFailed(1)));
    assert_eq!(err.stage(), "selection");
    let err = engine.run_vanilla(&q, 0).unwrap_err();
    assert_eq!(err.stage(), "generation");
}

#[test]
fn invalid_subsets_are_config_errors() {
    let (engine, _) = common::mock_engine(common::corpus(5, 10, 0), 2, PipelineSettings::default());
    let q = &common::questions(1, 1)[0];
    for models in [&[][..], &[2][..], &[0, 0][..]] {
        assert_eq!(engine.run_mixture(q, models).unwrap_err().stage(), "config");
        assert_eq!(engine.run_confident(q, models).unwrap_err().stage(), "config");
    }
}

#[test]
fn pooled_quota_mode_ignores_kinds_in_fusion() {
    let mut settings = PipelineSettings::default();
    settings.quota_mode = confident_rag::pipeline::QuotaMode::Pooled;
    assert_eq!(settings.fusion_budget(), Budget::TopK(4));
    let (engine, _) = common::mock_engine(common::corpus(5, 30, 5), 2, settings);
    let q = &common::questions(3, 1)[0];
    let r = engine.run_mixture(q, &[0, 1]).unwrap();
    assert_eq!(r.fused.len(), 4);
    let rows: Vec<_> = (0..2).map(|m| (*engine.question(q.clone()).row(m).unwrap()).clone()).collect();
    let oracle = retrieval::fuse(&rows, &Budget::TopK(4)).unwrap();
    let ids: Vec<_> = oracle.iter().map(|c| &c.chunk_id).collect();
    assert_eq!(r.fused.iter().map(|c| &c.chunk_id).collect::<Vec<_>>(), ids);
}
