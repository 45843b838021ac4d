#![allow(dead_code)]

use std::sync::Arc;

use confident_rag::corpus::{Chunk, ChunkKind, Corpus};
use confident_rag::embedding::{EmbeddingProvider, HashEmbedder};
use confident_rag::generation::{LlmBackend, MockBackend};
use confident_rag::pipeline::{Engine, PipelineSettings, Question};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NAMES: &[&str] = &["Ava", "Ben", "Cara", "Dev", "Eli", "Fay", "Gus", "Hana"];
const ITEMS: &[&str] = &["apples", "pencils", "stickers", "marbles", "cookies", "books"];

pub fn word_problem(rng: &mut ChaCha8Rng) -> (String, i64) {
    let (a, b, c) = (rng.gen_range(3..40), rng.gen_range(2..9), rng.gen_range(1..20));
    let name = NAMES[rng.gen_range(0..NAMES.len())];
    let item = ITEMS[rng.gen_range(0..ITEMS.len())];
    let text = format!("{name} has {a} {item} and buys {b} packs of {c} {item}. How many {item} now?");
    (text, a + b * c)
}

/// `qa` word-problem chunks with `####` answers plus `textbook` notes.
pub fn corpus(seed: u64, qa: usize, textbook: usize) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Corpus::new();
    for i in 0..qa {
        let (text, answer) = word_problem(&mut rng);
        corpus
            .push(Chunk { id: format!("qa-{i}"), text: format!("{text}\n#### {answer}"), kind: ChunkKind::Qa, source: "fixture".into() })
            .unwrap();
    }
    for i in 0..textbook {
        let n = rng.gen_range(2..12);
        let text = format!("Section {i}: multiplying {n} packs by their size gives the total, then add what was there.");
        corpus.push(Chunk { id: format!("tb-{i}"), text, kind: ChunkKind::Textbook, source: "fixture".into() }).unwrap();
    }
    corpus
}

pub fn questions(seed: u64, n: usize) -> Vec<Question> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| Question::new(format!("q{i}"), word_problem(&mut rng).0)).collect()
}

pub fn providers(n: usize) -> Vec<Arc<dyn EmbeddingProvider>> {
    let dims = [64, 48, 32, 24];
    (0..n)
        .map(|i| Arc::new(HashEmbedder::new(format!("hash-{}", i + 1), dims[i % dims.len()])) as Arc<dyn EmbeddingProvider>)
        .collect()
}

pub fn mock_engine(corpus: Corpus, models: usize, settings: PipelineSettings) -> (Engine, Arc<MockBackend>) {
    let backend = Arc::new(MockBackend::new(99));
    let engine = Engine::new(Arc::new(corpus), providers(models), backend.clone() as Arc<dyn LlmBackend>, settings).unwrap();
    (engine, backend)
}
