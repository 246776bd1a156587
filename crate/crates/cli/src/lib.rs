//! The `claimsearch` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 operational failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use claimsearch::codes::{CountryCode, LanguageCode};
use claimsearch::enrich::{DictionaryProvider, EntityGazetteer, Translator};
use claimsearch::index::{Filters, Query, ResultPage, SearchContext, SearchIndex};
use claimsearch::ingest::{ClaimRecord, TemplateRegistry};
use claimsearch::pipeline::{
    build_index, enrich_records, enrich_stage, index_stage, ingest_stage, normalize_records,
    normalize_stage, read_jsonl, run_pipeline, Config, PipelineExecutor, Resources,
};
use claimsearch::stats::{compute_stats, StatsReport};
use claimsearch::verdict::{LabelLexicon, Verdict};
use claimsearch::workflow::{new_run_id, DagRun, ExecuteError, JsonlRunLog};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "claimsearch", version, about = "Search engine for fact-checked claims")]
#[command(arg_required_else_help = true)]
pub struct Cli {
    /// Configuration file.
    #[arg(long, global = true, env = "UNTRUE_CONFIG")]
    pub config: Option<PathBuf>,

    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract ClaimRecords from a fixture archive.
    Ingest {
        #[arg(long)]
        archive: Option<PathBuf>,
        /// Template directory (bundled templates when omitted).
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Attach verdicts to extracted records.
    Normalize {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        lexicon: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Detect languages and link entities.
    Enrich {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        gazetteer: Option<PathBuf>,
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build an index snapshot from enriched claims.
    Index {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pipeline operations.
    Pipeline {
        #[command(subcommand)]
        action: PipelineAction,
    },
    /// Serve the HTTP API.
    Serve,
    /// Print corpus statistics.
    Stats {
        /// Index snapshot.
        #[arg(long, conflicts_with = "records")]
        index: Option<PathBuf>,
        /// Extracted records (JSONL); normalized and enriched in memory.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Query an index snapshot.
    Search(SearchArgs),
}

#[derive(Debug, Subcommand)]
pub enum PipelineAction {
    /// Run the configured DAG once.
    Run,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub q: String,
    /// Comma-separated verdicts.
    #[arg(long, value_delimiter = ',')]
    pub verdict: Vec<Verdict>,
    #[arg(long, value_delimiter = ',')]
    pub lang: Vec<LanguageCode>,
    #[arg(long, value_delimiter = ',')]
    pub source: Vec<String>,
    #[arg(long, value_delimiter = ',')]
    pub country: Vec<CountryCode>,
    #[arg(long)]
    pub year_from: Option<i32>,
    #[arg(long)]
    pub year_to: Option<i32>,
    #[arg(long)]
    pub display_lang: Option<LanguageCode>,
    /// Expand the query across languages through linked entities.
    #[arg(long)]
    pub expand: bool,
    #[arg(long, default_value_t = 0)]
    pub page: usize,
    #[arg(long)]
    pub page_size: Option<usize>,
    #[arg(long)]
    pub gazetteer: Option<PathBuf>,
    /// Phrase dictionary for translated display fields.
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
}

/// An operational failure, reported on stderr with exit code 2.
#[derive(Debug)]
struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure(e.to_string())
    }
}

type Outcome = Result<i32, Failure>;

/// Parses `argv` and runs the command, writing to `out` and `err`.
pub fn run_cli<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{rendered}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{rendered}");
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(Failure(message)) => {
            let _ = writeln!(err, "error: {message}");
            EXIT_FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<Option<Config>, Failure> {
    Ok(match &cli.config {
        Some(path) => Some(Config::load(path)?),
        None => None,
    })
}

fn require(value: &Option<PathBuf>, fallback: Option<PathBuf>, what: &str) -> Result<PathBuf, Failure> {
    value
        .clone()
        .or(fallback)
        .ok_or_else(|| Failure(format!("{what} is required (flag or --config)")))
}

fn emit<T: Serialize>(out: &mut dyn Write, format: Format, value: &T, text: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<(), Failure> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, value)?;
            writeln!(out)?;
        }
        Format::Text => text(out)?,
    }
    Ok(())
}

fn registry(templates: &Option<PathBuf>, config: Option<&Config>) -> Result<TemplateRegistry, Failure> {
    match templates.clone().or_else(|| config.and_then(|c| c.paths.templates.clone())) {
        Some(dir) => Ok(TemplateRegistry::from_dir(&dir)?),
        None => Ok(TemplateRegistry::builtin()),
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Outcome {
    let config = load_config(cli)?;
    let cfg = config.as_ref();
    let paths = cfg.map(|c| &c.paths);
    match &cli.command {
        Command::Ingest { archive, templates, out: dest } => {
            let archive = require(archive, paths.and_then(|p| p.archive.clone()), "--archive")?;
            let dest = require(dest, paths.map(|p| p.records()), "--out")?;
            let summary = ingest_stage(&archive, &registry(templates, cfg)?, &dest)?;
            emit(out, cli.format, &summary, |w| {
                writeln!(
                    w,
                    "{} documents, {} records written to {} ({} skipped lines, {} unmatched, {} unparseable, {} dropped, {} duplicates)",
                    summary.documents,
                    summary.records,
                    dest.display(),
                    summary.skipped_lines,
                    summary.unmatched,
                    summary.unparseable,
                    summary.dropped,
                    summary.duplicates
                )
            })?;
        }
        Command::Normalize { input, lexicon, out: dest } => {
            let input = require(input, paths.map(|p| p.records()), "--input")?;
            let dest = require(dest, paths.map(|p| p.normalized()), "--out")?;
            let lexicon = match lexicon.clone().or_else(|| paths.and_then(|p| p.lexicon.clone())) {
                Some(p) => LabelLexicon::load(&p)?,
                None => LabelLexicon::seed(),
            };
            let count = normalize_stage(&input, &lexicon, &dest)?;
            emit(out, cli.format, &serde_json::json!({ "records": count }), |w| {
                writeln!(w, "{count} records normalized into {}", dest.display())
            })?;
        }
        Command::Enrich { input, gazetteer, templates, out: dest } => {
            let input = require(input, paths.map(|p| p.normalized()), "--input")?;
            let dest = require(dest, paths.map(|p| p.enriched()), "--out")?;
            let gazetteer = match gazetteer.clone().or_else(|| paths.and_then(|p| p.gazetteer.clone())) {
                Some(p) => EntityGazetteer::load(&p)?,
                None => EntityGazetteer::new(),
            };
            let count = enrich_stage(&input, &registry(templates, cfg)?, &gazetteer, &dest)?;
            emit(out, cli.format, &serde_json::json!({ "records": count }), |w| {
                writeln!(w, "{count} records enriched into {}", dest.display())
            })?;
        }
        Command::Index { input, out: dest } => {
            let input = require(input, paths.map(|p| p.enriched()), "--input")?;
            let dest = require(dest, paths.map(|p| p.snapshot()), "--out")?;
            let settings = cfg.map(|c| c.index.settings()).unwrap_or_default();
            let index = index_stage(&input, settings, &dest)?;
            emit(out, cli.format, &serde_json::json!({ "documents": index.len() }), |w| {
                writeln!(w, "{} documents indexed into {}", index.len(), dest.display())
            })?;
        }
        Command::Pipeline { action: PipelineAction::Run } => {
            let config = config.clone().ok_or_else(|| Failure("pipeline run needs --config".into()))?;
            return pipeline_run(config, cli.format, out);
        }
        Command::Serve => {
            let config = config.clone().ok_or_else(|| Failure("serve needs --config".into()))?;
            let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            runtime.block_on(claimsearch_server::serve(config))?;
        }
        Command::Stats { index, records } => {
            let report = match records {
                Some(path) => stats_from_records(path, cfg)?,
                None => {
                    let snapshot = require(index, paths.map(|p| p.snapshot()), "--index")?;
                    compute_stats(&SearchIndex::load(&snapshot)?)
                }
            };
            emit(out, cli.format, &report, |w| write_stats(w, &report))?;
        }
        Command::Search(args) => {
            let snapshot = require(&args.index, paths.map(|p| p.snapshot()), "--index")?;
            let index = SearchIndex::load(&snapshot)?;
            let ctx = search_context(args, cfg)?;
            let query = build_query(args, cfg);
            if query.text.trim().is_empty() {
                return Err(Failure("--q must not be empty".into()));
            }
            let page = index.search(&query, &ctx)?;
            emit(out, cli.format, &page, |w| write_results(w, &page))?;
        }
    }
    Ok(EXIT_OK)
}

fn stats_from_records(path: &Path, config: Option<&Config>) -> Result<StatsReport, Failure> {
    let resources = match config {
        Some(c) => Resources::load(c)?,
        None => Resources::default(),
    };
    let records: Vec<ClaimRecord> = read_jsonl(path)?;
    let normalized = normalize_records(records, &resources.lexicon);
    let enriched = enrich_records(&normalized, &resources.registry, &resources.gazetteer);
    let settings = config.map(|c| c.index.settings()).unwrap_or_default();
    Ok(compute_stats(&build_index(enriched, settings)?))
}

fn search_context(args: &SearchArgs, config: Option<&Config>) -> Result<SearchContext, Failure> {
    let mut ctx = match config {
        Some(c) => Resources::load(c)?.search_context(),
        None => SearchContext::default(),
    };
    if let Some(p) = &args.gazetteer {
        ctx.gazetteer = Arc::new(EntityGazetteer::load(p)?);
    }
    if let Some(p) = &args.dictionary {
        ctx.translator = Translator::new(Arc::new(DictionaryProvider::load(p)?));
    }
    Ok(ctx)
}

fn build_query(args: &SearchArgs, config: Option<&Config>) -> Query {
    Query {
        text: args.q.clone(),
        filters: Filters {
            verdicts: args.verdict.iter().copied().collect(),
            languages: args.lang.iter().cloned().collect(),
            sources: args.source.iter().cloned().collect(),
            countries: args.country.iter().cloned().collect(),
            year_from: args.year_from,
            year_to: args.year_to,
        },
        display_language: args.display_lang.clone(),
        page: args.page,
        page_size: args
            .page_size
            .or(config.map(|c| c.server.page_size))
            .unwrap_or(claimsearch::index::DEFAULT_PAGE_SIZE),
        expand_entities: args.expand,
    }
}

fn pipeline_run(config: Config, format: Format, out: &mut dyn Write) -> Outcome {
    let resources = Resources::load(&config)?;
    let log = JsonlRunLog::open(&config.paths.run_log())?;
    let executor = PipelineExecutor {
        config,
        resources,
        live: None,
    };
    let run = match run_pipeline(&executor, &new_run_id(), &log) {
        Ok(run) => run,
        Err(ExecuteError::ExecutorUnavailable { run, .. }) => *run,
        Err(e) => return Err(e.into()),
    };
    emit(out, format, &run, |w| write_run(w, &run))?;
    Ok(if run.succeeded() { EXIT_OK } else { EXIT_FAILURE })
}

fn write_run(w: &mut dyn Write, run: &DagRun) -> std::io::Result<()> {
    writeln!(w, "run {}", run.run_id)?;
    writeln!(w, "{:<12} {:<8} {:>8}  REASON", "TASK", "STATE", "ATTEMPTS")?;
    for (task, state) in &run.task_states {
        let state = serde_json::to_value(state).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        writeln!(
            w,
            "{:<12} {:<8} {:>8}  {}",
            task,
            state,
            run.attempt_counts.get(task).copied().unwrap_or(0),
            run.failure_reasons.get(task).map(String::as_str).unwrap_or("")
        )?;
    }
    Ok(())
}

fn write_stats(w: &mut dyn Write, r: &StatsReport) -> std::io::Result<()> {
    writeln!(w, "total documents: {}", r.total_documents)?;
    writeln!(w, "by language:")?;
    for (k, v) in &r.by_language {
        writeln!(w, "  {k:<12} {v}")?;
    }
    writeln!(w, "by source:")?;
    for (k, v) in &r.by_source {
        writeln!(w, "  {k:<12} {v}")?;
    }
    writeln!(w, "by verdict:")?;
    for (k, v) in &r.by_verdict {
        writeln!(w, "  {:<12} {v}", k.to_string())?;
    }
    writeln!(w, "by year:")?;
    for (year, langs) in &r.by_year {
        let parts: Vec<String> = langs.iter().map(|(l, n)| format!("{l}={n}")).collect();
        writeln!(w, "  {year:<12} {}", parts.join(" "))?;
    }
    Ok(())
}

fn write_results(w: &mut dyn Write, page: &ResultPage) -> std::io::Result<()> {
    writeln!(w, "{} hits in {:.2} ms", page.total_hits, page.elapsed_ms)?;
    if page.hits.is_empty() {
        return Ok(());
    }
    writeln!(
        w,
        "{:>4}  {:<7} {:<7} {:<10}  {:<14} {:>8}  TITLE",
        "#", "VERDICT", "COUNTRY", "DATE", "SOURCE", "SCORE"
    )?;
    for (i, hit) in page.hits.iter().enumerate() {
        let rank = page.page * page.page_size + i + 1;
        let date = hit.date_published.map(|d| d.to_string()).unwrap_or_else(|| "-".into());
        writeln!(
            w,
            "{:>4}  {:<7} {:<7} {:<10}  {:<14} {:>8.4}  {}",
            rank,
            hit.verdict.to_string(),
            hit.country.as_str(),
            date,
            hit.source_id,
            hit.score,
            hit.review_title
        )?;
        writeln!(w, "      {}", hit.review_url)?;
        writeln!(w, "      {}", hit.excerpt)?;
        if let Some(t) = &hit.translation {
            let status = serde_json::to_value(t.status).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
            writeln!(w, "      [{} {}] {}", t.language.as_str(), status, t.claim_text)?;
        }
    }
    if let Some(e) = &page.expansion {
        if !e.is_empty() {
            let ids: Vec<&str> = e.entity_ids.iter().map(String::as_str).collect();
            writeln!(w, "expanded via {}", ids.join(", "))?;
        }
    }
    Ok(())
}
