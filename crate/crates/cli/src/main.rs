use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use confident_rag::confidence::MetricName;
use confident_rag::corpus::{ChunkKind, Corpus};
use confident_rag::eval::extract_answer;
use confident_rag::harness::{self, HarnessError, RunConfig};
use confident_rag::pipeline::{PipelineKind, QuestionResult};

#[derive(Parser)]
#[command(name = "confident-rag", version, about = "Multi-embedding RAG: vanilla, mixture-embedding and confident pipelines")]
struct Cli {
    /// Log progress to stderr (and print details for `ask`).
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load corpus files and print chunk counts per kind.
    Ingest {
        /// QA-item file (JSONL or blank-line separated text); repeatable.
        #[arg(long = "qa", value_name = "PATH")]
        qa: Vec<PathBuf>,
        /// Textbook file; repeatable.
        #[arg(long = "textbook", value_name = "PATH")]
        textbook: Vec<PathBuf>,
        /// Also ingest the corpus listed in a run config.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Answer one question through one pipeline.
    Ask {
        question: String,
        #[command(flatten)]
        run: RunArgs,
        /// vanilla-llm, vanilla, mixture or confident.
        #[arg(long, default_value = "confident")]
        pipeline: PipelineKind,
    },
    /// Sweep the configured pipelines over the gold questions and write reports.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Run only this pipeline (the LLM-only baseline is kept for deltas).
        #[arg(long)]
        pipeline: Option<PipelineKind>,
    },
    /// Re-render accuracy tables from a report.json.
    Report {
        report: PathBuf,
        /// Write tables.txt here instead of printing.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    metric: Option<MetricName>,
    /// Embedding models by id or 1-based index, comma separated.
    #[arg(long, value_delimiter = ',')]
    models: Vec<String>,
    /// Plain top-k retrieval with this k (drops per-kind quotas).
    #[arg(long)]
    k: Option<usize>,
    /// Per-kind quota, e.g. `qa=3`; repeatable, replaces configured quotas.
    #[arg(long = "quota", value_name = "KIND=COUNT", value_parser = parse_quota)]
    quotas: Vec<(ChunkKind, usize)>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_quota(s: &str) -> Result<(ChunkKind, usize), String> {
    let (kind, count) = s.split_once('=').ok_or_else(|| format!("expected KIND=COUNT, got `{s}`"))?;
    let kind = kind.parse::<ChunkKind>().map_err(|e| e.to_string())?;
    let count = count.trim().parse::<usize>().map_err(|e| format!("bad count in `{s}`: {e}"))?;
    Ok((kind, count))
}

impl RunArgs {
    /// Loads the config and applies command-line overrides. Returns the
    /// config and the selected 0-based model indices.
    fn load(&self) -> Result<(RunConfig, Vec<usize>)> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(m) = self.metric {
            config.metric = m;
        }
        if let Some(k) = self.k {
            config.retrieval.k = k;
            config.retrieval.quotas = None;
        }
        if !self.quotas.is_empty() {
            config.retrieval.quotas = Some(self.quotas.iter().copied().collect::<BTreeMap<_, _>>());
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(out) = &self.out {
            config.out = out.clone();
        }
        let ids: Vec<&str> = config.embedding_models.iter().map(|m| m.id()).collect();
        let mut selected = Vec::new();
        for token in self.models.iter().map(|s| s.trim()).filter(|s| !s.is_empty()) {
            let index = match ids.iter().position(|id| *id == token) {
                Some(i) => i,
                None => match token.parse::<usize>() {
                    Ok(i) if (1..=ids.len()).contains(&i) => i - 1,
                    _ => bail!("unknown embedding model `{token}` (declared: {})", ids.join(", ")),
                },
            };
            if selected.contains(&index) {
                bail!("embedding model `{token}` listed twice");
            }
            selected.push(index);
        }
        if selected.is_empty() {
            selected = (0..ids.len()).collect();
        }
        Ok((config, selected))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            match err.downcast_ref::<HarnessError>() {
                Some(h) => eprintln!("error [{}]: {h}", h.stage()),
                None => eprintln!("error [cli]: {err:#}"),
            }
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Ingest { qa, textbook, config } => ingest(&qa, &textbook, config.as_deref()),
        Command::Ask { question, run, pipeline } => ask(&question, &run, pipeline, cli.verbose),
        Command::Eval { run, pipeline } => eval(&run, pipeline),
        Command::Report { report, out } => {
            let parsed = harness::load_report(&report)?;
            let tables = harness::render_tables(&parsed);
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                    let path = dir.join(harness::TABLES_FILE);
                    std::fs::write(&path, tables).with_context(|| format!("writing {}", path.display()))?;
                    println!("wrote {}", path.display());
                }
                None => print!("{tables}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn ingest(qa: &[PathBuf], textbook: &[PathBuf], config: Option<&Path>) -> Result<ExitCode> {
    let mut sources: Vec<(PathBuf, ChunkKind)> = Vec::new();
    if let Some(path) = config {
        let config = RunConfig::load(path)?;
        sources.extend(config.corpus.into_iter().map(|c| (c.path, c.kind)));
    }
    sources.extend(qa.iter().map(|p| (p.clone(), ChunkKind::Qa)));
    sources.extend(textbook.iter().map(|p| (p.clone(), ChunkKind::Textbook)));
    if sources.is_empty() {
        bail!("nothing to ingest; pass --qa, --textbook or --config");
    }
    let mut corpus = Corpus::new();
    for (path, kind) in &sources {
        let n = corpus.ingest(path, *kind).map_err(HarnessError::from)?;
        println!("{}: {n} {kind} chunks", path.display());
    }
    for (kind, n) in corpus.count_by_kind() {
        println!("{kind}: {n}");
    }
    println!("total: {}", corpus.len());
    Ok(ExitCode::SUCCESS)
}

fn ask(question: &str, args: &RunArgs, pipeline: PipelineKind, verbose: bool) -> Result<ExitCode> {
    let (config, models) = args.load()?;
    let models = match pipeline {
        PipelineKind::Vanilla if args.models.is_empty() => vec![0],
        _ => models,
    };
    let result = harness::run_ask(&config, question, pipeline, &models)?;
    println!("{}", result.final_answer.trim());
    println!("answer: {}", extract_answer(&result.final_answer).unwrap_or_default());
    if verbose {
        print_details(&config, &result);
    }
    Ok(ExitCode::SUCCESS)
}

fn print_details(config: &RunConfig, result: &QuestionResult) {
    let label = |i: usize| format!("{} ({})", i + 1, config.embedding_models[i].id());
    println!("pipeline: {}", result.pipeline);
    if let Some(metric) = result.metric {
        println!("metric: {metric}");
    }
    for set in &result.retrieved {
        println!("retrieved [{}]: {}", set.model_id, set.chunk_ids.join(", "));
    }
    for record in &result.records {
        let who = record.model_index.map_or_else(|| format!("models {}", record.combination), label);
        let scores: Vec<String> = record
            .confidence
            .values()
            .map(|s| format!("{}={:.6} ({:.6})", s.metric, s.raw, s.oriented))
            .collect();
        println!("scores [{who}]: {}", scores.join(" "));
    }
    for d in &result.dropped {
        println!("dropped [{}]: {}", label(d.model_index), d.error);
    }
    if let Some(w) = result.winner {
        println!("winner: {}", label(w));
    }
}

fn eval(args: &RunArgs, pipeline: Option<PipelineKind>) -> Result<ExitCode> {
    let (mut config, models) = args.load()?;
    if !args.models.is_empty() {
        if config.combinations.is_some() {
            bail!("--models cannot be combined with explicit `combinations` in the config");
        }
        config.embedding_models = models.iter().map(|&i| config.embedding_models[i].clone()).collect();
    }
    if let Some(p) = pipeline {
        config.pipelines = vec![PipelineKind::VanillaLlm];
        if p != PipelineKind::VanillaLlm {
            config.pipelines.push(p);
        }
    }
    let summary = harness::run_eval(&config)?;
    print!("{}", harness::render_tables(&summary.report));
    for f in &summary.report.failures {
        eprintln!(
            "failed [{}] question {} {} {}: {}",
            f.stage, f.question_id, f.pipeline, f.combination, f.error
        );
    }
    for d in &summary.report.dropped {
        eprintln!("dropped question {} models {} model {}: {}", d.question_id, d.combination, d.model_index + 1, d.error);
    }
    for path in &summary.files {
        println!("wrote {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}
