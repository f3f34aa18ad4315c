mod config;

use std::fmt;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use toolcoder_core::annotate::{
    annotate_all, compute_stats, default_library_prefixes, filter_and_clean, load_code_units, select_base_samples,
    verdict_counts, AnnotatedSample, AnnotationPrompt, AnnotatorClient, FixtureAnnotator, HttpAnnotator,
    RecordingAnnotator, SampleRecord,
};
use toolcoder_core::decode::{
    DecodeOutcome, GenerationScript, HttpGenerator, Orchestrator, ScriptedGenerator, TokenGenerator,
};
use toolcoder_core::eval::{evaluate, load_benchmark};
use toolcoder_core::peft::{lora_param_count, LoraBudget};
use toolcoder_core::search::{
    load_doc_corpus, ApiSearchTool, ApiVocabulary, CacheMode, FixtureTool, HttpTransport, OnlineSearch,
    SearchFixtureCache,
};
use toolcoder_core::{DocIndexF64, DocSearchToolF64};

use config::{GlobalConfig, CONFIG_ENV};

/// Bad arguments or configuration; reported with exit status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    UsageError(message.into()).into()
}

fn require_file(path: &Path) -> Result<&Path> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(usage(format!("no such file: {}", path.display())))
    }
}

#[derive(Parser)]
#[command(name = "toolcoder", version, about = "Tool-augmented code generation toolkit")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a BM25 index from a documentation corpus.
    Index {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Ask a search tool for the API answering QUERY.
    Search {
        query: String,
        #[arg(long, value_enum, default_value_t = ToolKind::Doc)]
        tool: ToolKind,
        /// With the doc tool, list this many ranked hits instead.
        #[arg(long)]
        top: Option<usize>,
        #[command(flatten)]
        sources: ToolSources,
    },
    /// Annotate code units with tool calls and filter the result.
    Annotate {
        /// JSONL of `{"id", "code"}` units.
        #[arg(long)]
        input: PathBuf,
        /// `fixture:PATH` or an `http(s)://` endpoint.
        #[arg(long)]
        annotator: String,
        #[arg(long)]
        out: PathBuf,
        /// Sample base units by length first, using the `[annotate]` settings.
        #[arg(long)]
        select: bool,
        #[arg(long)]
        sample_n: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// JSON file replacing the built-in annotation prompt.
        #[arg(long)]
        prompt: Option<PathBuf>,
        /// Save live annotator replies as a fixture file.
        #[arg(long)]
        record: Option<PathBuf>,
    },
    /// Re-run the filter on already annotated samples.
    Filter {
        /// JSONL with `id`, `original_code` and `annotated_code`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Statistics over the accepted samples of a dataset.
    Stats {
        #[arg(long)]
        input: PathBuf,
    },
    /// Decode with tool calls for one prompt.
    Generate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, conflicts_with = "prompt_file")]
        prompt: Option<String>,
        #[arg(long)]
        prompt_file: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        samples: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Write one JSON decode outcome per line.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Print outcomes as JSON instead of the cleaned code.
        #[arg(long)]
        json: bool,
    },
    /// Execution-based pass@k evaluation.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, value_delimiter = ',')]
        k: Option<Vec<usize>>,
        #[arg(long)]
        workers: Option<usize>,
        /// Write the full JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the JSON report instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Trainable parameter count of a LoRA configuration.
    Lora {
        #[arg(long)]
        layers: u64,
        #[arg(long)]
        d_model: u64,
        #[arg(long)]
        rank: u64,
        #[arg(long)]
        total: u64,
        /// Adapted projections per layer.
        #[arg(long, default_value_t = 2)]
        matrices: u64,
        #[arg(long)]
        json: bool,
    },
    /// Inspect the effective configuration.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
}

#[derive(Subcommand)]
enum ConfigAction {
    /// Print the effective configuration as TOML.
    Dump,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ToolKind {
    /// BM25 over the documentation index.
    Doc,
    /// Site-restricted web search with a local cache.
    Online,
    /// Recorded answers only.
    Fixture,
    /// Intercept calls but answer nothing.
    None,
}

#[derive(Args)]
struct ToolSources {
    /// Documentation index, or a `.jsonl` corpus to index on the fly.
    #[arg(long)]
    index: Option<PathBuf>,
    /// Search cache for the online and fixture tools.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// `script:PATH` or an `http(s)://` model server.
    #[arg(long)]
    generator: String,
    #[arg(long, value_enum, default_value_t = ToolKind::Doc)]
    tool: ToolKind,
    #[command(flatten)]
    sources: ToolSources,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_len: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.chain().any(|c| c.is::<UsageError>()) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => GlobalConfig::load(path)?,
        None => GlobalConfig::default(),
    };
    match cli.command {
        Command::Index { corpus, out } => cmd_index(&corpus, &out),
        Command::Search {
            query,
            tool,
            top,
            sources,
        } => cmd_search(&config, &query, tool, top, &sources),
        Command::Annotate {
            input,
            annotator,
            out,
            select,
            sample_n,
            seed,
            prompt,
            record,
        } => {
            let mut config = config;
            if let Some(n) = sample_n {
                config.annotate.sample_n = n;
            }
            if let Some(s) = seed {
                config.annotate.seed = s;
            }
            cmd_annotate(&config, &input, &annotator, &out, select, prompt.as_deref(), record.as_deref())
        }
        Command::Filter { input, out } => cmd_filter(&config, &input, &out),
        Command::Stats { input } => cmd_stats(&config, &input),
        Command::Generate {
            run,
            prompt,
            prompt_file,
            samples,
            seed,
            trace,
            json,
        } => {
            let prompt = match (prompt, prompt_file) {
                (Some(p), None) => p,
                (None, Some(path)) => std::fs::read_to_string(require_file(&path)?)
                    .with_context(|| format!("reading prompt {}", path.display()))?,
                _ => return Err(usage("give exactly one of --prompt or --prompt-file")),
            };
            if samples == 0 {
                return Err(usage("--samples must be at least 1"));
            }
            cmd_generate(&config, &run, &prompt, samples, seed, trace.as_deref(), json)
        }
        Command::Evaluate {
            run,
            benchmark,
            samples,
            seeds,
            k,
            workers,
            out,
            json,
        } => {
            let mut config = config;
            if let Some(n) = samples {
                config.eval.n_samples = n;
            }
            if let Some(s) = seeds {
                config.eval.seeds = s;
            }
            if let Some(k) = k {
                config.eval.k_values = k;
            }
            if let Some(w) = workers {
                config.eval.workers = w;
            }
            cmd_evaluate(&config, &run, &benchmark, out.as_deref(), json)
        }
        Command::Lora {
            layers,
            d_model,
            rank,
            total,
            matrices,
            json,
        } => cmd_lora(layers, d_model, rank, total, matrices, json),
        Command::Config {
            action: ConfigAction::Dump,
        } => {
            print!("{}", config.to_toml());
            Ok(())
        }
    }
}

fn cmd_index(corpus: &Path, out: &Path) -> Result<()> {
    let entries = load_doc_corpus(require_file(corpus)?)?;
    let index = DocIndexF64::with_defaults(entries)?;
    index.save(out)?;
    println!("indexed {} entries into {}", index.len(), out.display());
    Ok(())
}

fn load_index(path: &Path) -> Result<DocIndexF64> {
    require_file(path)?;
    let index = if path.extension().is_some_and(|e| e == "jsonl") {
        DocIndexF64::with_defaults(load_doc_corpus(path)?)?
    } else {
        DocIndexF64::load(path)?
    };
    Ok(index)
}

/// A configured search tool plus what must happen once the run is over.
struct ToolHandle {
    tool: Option<Box<dyn ApiSearchTool>>,
    save_cache: Option<(Arc<SearchFixtureCache>, PathBuf)>,
}

impl ToolHandle {
    fn as_tool(&self) -> Option<&dyn ApiSearchTool> {
        self.tool.as_deref()
    }

    fn finish(self) -> Result<()> {
        if let Some((cache, path)) = self.save_cache {
            cache.save(&path)?;
            log::info!("saved {} cache entries to {}", cache.len(), path.display());
        }
        Ok(())
    }
}

fn build_tool(config: &GlobalConfig, kind: ToolKind, sources: &ToolSources) -> Result<ToolHandle> {
    let cache_path = sources.cache.clone().or_else(|| config.search.cache.clone());
    let handle = match kind {
        ToolKind::None => ToolHandle {
            tool: None,
            save_cache: None,
        },
        ToolKind::Doc => {
            let path = sources
                .index
                .clone()
                .or_else(|| config.search.index.clone())
                .ok_or_else(|| usage("the doc tool needs --index or search.index"))?;
            ToolHandle {
                tool: Some(Box::new(DocSearchToolF64::new(load_index(&path)?))),
                save_cache: None,
            }
        }
        ToolKind::Fixture => {
            let path = cache_path.ok_or_else(|| usage("the fixture tool needs --cache or search.cache"))?;
            let cache = SearchFixtureCache::load(require_file(&path)?)?;
            ToolHandle {
                tool: Some(Box::new(FixtureTool::new(cache, config.search.online.on_miss))),
                save_cache: None,
            }
        }
        ToolKind::Online => {
            let cache = match &cache_path {
                Some(p) if p.exists() => SearchFixtureCache::load(p)?,
                _ => SearchFixtureCache::new(),
            };
            let cache = Arc::new(cache);
            let vocab = ApiVocabulary::compile(&config.search.vocabulary)?;
            let transport = HttpTransport::new()?;
            let live = config.search.online.mode == CacheMode::Live;
            let save_cache = match (live, cache_path) {
                (true, Some(p)) => Some((cache.clone(), p)),
                _ => None,
            };
            ToolHandle {
                tool: Some(Box::new(OnlineSearch::new(
                    config.search.online.clone(),
                    vocab,
                    transport,
                    cache,
                ))),
                save_cache,
            }
        }
    };
    Ok(handle)
}

fn cmd_search(config: &GlobalConfig, query: &str, kind: ToolKind, top: Option<usize>, sources: &ToolSources) -> Result<()> {
    if query.trim().is_empty() {
        return Err(usage("the query is empty"));
    }
    if top == Some(0) {
        return Err(usage("--top must be at least 1"));
    }
    if let (ToolKind::Doc, Some(top)) = (kind, top) {
        let path = sources
            .index
            .clone()
            .or_else(|| config.search.index.clone())
            .ok_or_else(|| usage("the doc tool needs --index or search.index"))?;
        let index = load_index(&path)?;
        for hit in index.search(query, top) {
            println!("{:.4}\t{}", hit.score, hit.entry.api_name);
        }
        return Ok(());
    }
    if kind == ToolKind::None {
        return Err(usage("--tool none cannot answer queries"));
    }
    let handle = build_tool(config, kind, sources)?;
    let answer = handle.as_tool().expect("tool is configured").search(query)?;
    println!("{answer}");
    handle.finish()
}

fn build_generator(config: &GlobalConfig, source: &str) -> Result<Box<dyn TokenGenerator>> {
    if let Some(path) = source.strip_prefix("script:") {
        let script = GenerationScript::load(require_file(Path::new(path))?)?;
        return Ok(Box::new(ScriptedGenerator::new(script)));
    }
    if source.starts_with("http://") || source.starts_with("https://") {
        let timeout = Duration::from_secs_f64(config.generator.timeout_s);
        return Ok(Box::new(HttpGenerator::new(source, config.generator.max_new, timeout)?));
    }
    Err(usage(format!("unknown generator {source:?}; use script:PATH or an http(s) URL")))
}

fn apply_run_overrides(config: &GlobalConfig, run: &RunArgs) -> Result<GlobalConfig> {
    let mut config = config.clone();
    if let Some(t) = run.temperature {
        config.sampling.temperature = t;
    }
    if let Some(m) = run.max_len {
        config.sampling.max_len = m;
    }
    config.validate()?;
    Ok(config)
}

fn cmd_generate(
    config: &GlobalConfig,
    run: &RunArgs,
    prompt: &str,
    samples: usize,
    seed: Option<u64>,
    trace: Option<&Path>,
    json: bool,
) -> Result<()> {
    let config = apply_run_overrides(config, run)?;
    let mut params = config.sampling.clone();
    if let Some(s) = seed {
        params.seed = s;
    }
    let mut generator = build_generator(&config, &run.generator)?;
    let handle = build_tool(&config, run.tool, &run.sources)?;
    let orchestrator = Orchestrator::new(handle.as_tool(), config.decode.clone());
    let outcomes = orchestrator.generate_candidates(generator.as_mut(), prompt, None, samples, &params)?;

    if let Some(path) = trace {
        let mut out = create(path)?;
        for outcome in &outcomes {
            writeln!(out, "{}", serde_json::to_string(outcome)?)?;
        }
        out.flush()?;
    }
    let failures = outcomes.iter().filter(|o| o.failure().is_some()).count();
    if json {
        #[derive(Serialize)]
        struct Printed<'a> {
            candidate_index: usize,
            seed: u64,
            tool_invocations: usize,
            #[serde(flatten)]
            outcome: &'a DecodeOutcome,
        }
        for (i, outcome) in outcomes.iter().enumerate() {
            let line = Printed {
                candidate_index: i,
                seed: params.seed.wrapping_add(i as u64),
                tool_invocations: outcome.trace.invocation_count(),
                outcome,
            };
            println!("{}", serde_json::to_string(&line)?);
        }
    } else {
        for (i, outcome) in outcomes.iter().enumerate() {
            if samples > 1 {
                println!("# candidate {i}");
            }
            println!("{}", outcome.clean_code);
            if let Some(message) = outcome.failure() {
                eprintln!("candidate {i}: {message}");
            }
        }
    }
    handle.finish()?;
    if failures == outcomes.len() {
        bail!("all {failures} generation(s) failed");
    }
    Ok(())
}

fn cmd_evaluate(
    config: &GlobalConfig,
    run: &RunArgs,
    benchmark: &Path,
    out: Option<&Path>,
    json: bool,
) -> Result<()> {
    let config = apply_run_overrides(config, run)?;
    let problems = load_benchmark(require_file(benchmark)?)?;
    let mut generator = build_generator(&config, &run.generator)?;
    let handle = build_tool(&config, run.tool, &run.sources)?;
    let orchestrator = Orchestrator::new(handle.as_tool(), config.decode.clone());
    let name = benchmark
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "benchmark".into());
    let report = evaluate(generator.as_mut(), &orchestrator, &name, &problems, &config.eval, &config.sampling)?;
    handle.finish()?;

    if let Some(path) = out {
        let mut file = create(path)?;
        serde_json::to_writer_pretty(&mut file, &report)?;
        writeln!(file)?;
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        print!("{}", report.render_table());
    }
    Ok(())
}

fn load_prompt(path: Option<&Path>) -> Result<AnnotationPrompt> {
    match path {
        None => Ok(AnnotationPrompt::default()),
        Some(p) => {
            let text = std::fs::read_to_string(require_file(p)?).with_context(|| format!("reading prompt {}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("prompt {}: {e}", p.display())))
        }
    }
}

fn cmd_annotate(
    config: &GlobalConfig,
    input: &Path,
    annotator: &str,
    out: &Path,
    select: bool,
    prompt: Option<&Path>,
    record: Option<&Path>,
) -> Result<()> {
    let a = &config.annotate;
    let markers = &config.decode.markers;
    let prompt = load_prompt(prompt)?;
    prompt
        .validate(&a.public_prefixes, markers)
        .map_err(|e| usage(e.to_string()))?;

    let mut units = load_code_units(require_file(input)?)?;
    if select {
        let selection = select_base_samples(&units, a.min_len, a.max_len, a.sample_n, a.seed)?;
        if let Some(d) = &selection.diagnostic {
            log::warn!("{d}");
        }
        units = selection.samples;
    }

    let samples = if let Some(path) = annotator.strip_prefix("fixture:") {
        if record.is_some() {
            return Err(usage("--record needs a live annotator"));
        }
        let client = FixtureAnnotator::load(require_file(Path::new(path))?)?;
        annotate_all(&units, &prompt, &client, &a.public_prefixes, markers)
    } else if annotator.starts_with("http://") || annotator.starts_with("https://") {
        let key = std::env::var(&a.api_key_env).ok();
        let client = HttpAnnotator::new(annotator, key, Duration::from_secs_f64(a.timeout_s))?;
        match record {
            Some(path) => {
                let recording = RecordingAnnotator::new(client);
                let samples = annotate_all(&units, &prompt, &recording, &a.public_prefixes, markers);
                recording.save(path)?;
                samples
            }
            None => annotate_all(&units, &prompt, &client as &dyn AnnotatorClient, &a.public_prefixes, markers),
        }
    } else {
        return Err(usage(format!(
            "unknown annotator {annotator:?}; use fixture:PATH or an http(s) URL"
        )));
    };

    write_samples(out, &samples)?;
    report_verdicts(&samples);
    Ok(())
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    require_file(path)?;
    let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).with_context(|| format!("{} line {}", path.display(), i + 1))?);
    }
    Ok(rows)
}

fn create(path: &Path) -> Result<BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_samples(path: &Path, samples: &[AnnotatedSample]) -> Result<()> {
    let mut out = create(path)?;
    for sample in samples {
        writeln!(out, "{}", serde_json::to_string(&sample.to_record())?)?;
    }
    out.flush()?;
    Ok(())
}

fn report_verdicts(samples: &[AnnotatedSample]) {
    let (accepted, rejected) = verdict_counts(samples);
    println!("accepted {accepted} of {}", samples.len());
    for (rule, count) in rejected {
        println!("rejected by {}: {count}", rule.id());
    }
}

#[derive(serde::Deserialize)]
struct FilterInput {
    id: String,
    original_code: String,
    annotated_code: String,
}

fn cmd_filter(config: &GlobalConfig, input: &Path, out: &Path) -> Result<()> {
    let rows: Vec<FilterInput> = read_jsonl(input)?;
    let samples: Vec<AnnotatedSample> = rows
        .into_iter()
        .map(|row| {
            let mut sample = filter_and_clean(
                &row.original_code,
                &row.annotated_code,
                &config.annotate.public_prefixes,
                &config.decode.markers,
            );
            sample.id = row.id;
            sample
        })
        .collect();
    write_samples(out, &samples)?;
    report_verdicts(&samples);
    Ok(())
}

fn cmd_stats(config: &GlobalConfig, input: &Path) -> Result<()> {
    let records: Vec<SampleRecord> = read_jsonl(input)?;
    let samples = records
        .into_iter()
        .map(|r| AnnotatedSample::from_record(r, &config.decode.markers))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| anyhow::anyhow!("{}: {e}", input.display()))?;
    let (stats, diagnostic) = compute_stats(&samples, &default_library_prefixes());
    if let Some(d) = diagnostic {
        eprintln!("warning: {d}");
    }
    println!("{}", serde_json::to_string_pretty(&stats)?);
    Ok(())
}

fn cmd_lora(layers: u64, d_model: u64, rank: u64, total: u64, matrices: u64, json: bool) -> Result<()> {
    let mut budget = LoraBudget::new(layers, d_model, rank, total);
    budget.adapted_matrices_per_layer = matrices;
    let count = lora_param_count(&budget).map_err(|e| usage(e.to_string()))?;
    if json {
        println!("{}", serde_json::to_string(&count)?);
    } else {
        println!(
            "trainable parameters: {} ({:.4}% of {total})",
            count.trainable,
            count.fraction * 100.0
        );
    }
    Ok(())
}
