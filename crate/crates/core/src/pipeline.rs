//! Configuration and the four pipeline stages.
//!
//! Stages talk through files in the work directory:
//! `records.jsonl` → `normalized.jsonl` → `enriched.jsonl` → index snapshot.
//! Each stage can therefore be re-run on its own.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::LanguageCode;
use crate::enrich::{enrich, DictionaryProvider, EnrichedClaim, EntityGazetteer, Translator};
use crate::index::{IndexSettings, SearchContext, SearchIndex, SharedIndex, MAX_PAGE_SIZE};
use crate::ingest::{ingest_documents, load_archive, ClaimRecord, TemplateRegistry};
use crate::verdict::{normalize, LabelLexicon, Verdict};
use crate::workflow::{
    execute_dag, validate_dag, DagRun, ExecuteError, RunObserver, TaskExecutor, TaskFailure,
    TaskSpec,
};

pub const RECORDS_FILE: &str = "records.jsonl";
pub const NORMALIZED_FILE: &str = "normalized.jsonl";
pub const ENRICHED_FILE: &str = "enriched.jsonl";
pub const ACTIONS: [&str; 4] = ["ingest", "normalize", "enrich", "index"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub paths: PathsConfig,
    #[serde(default)]
    pub index: IndexConfig,
    #[serde(default)]
    pub translation: TranslationConfig,
    #[serde(default)]
    pub server: ServerConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub archive: Option<PathBuf>,
    /// Template directory; the bundled templates when unset.
    pub templates: Option<PathBuf>,
    /// Label lexicon; the bundled seed lexicon when unset.
    pub lexicon: Option<PathBuf>,
    pub gazetteer: Option<PathBuf>,
    #[serde(default = "default_work_dir")]
    pub work_dir: PathBuf,
    /// Defaults to `<work_dir>/index.json`.
    pub snapshot: Option<PathBuf>,
    /// Defaults to `<work_dir>/runs.jsonl`.
    pub run_log: Option<PathBuf>,
}

fn default_work_dir() -> PathBuf {
    PathBuf::from("work")
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            archive: None,
            templates: None,
            lexicon: None,
            gazetteer: None,
            work_dir: default_work_dir(),
            snapshot: None,
            run_log: None,
        }
    }
}

impl PathsConfig {
    pub fn records(&self) -> PathBuf {
        self.work_dir.join(RECORDS_FILE)
    }

    pub fn normalized(&self) -> PathBuf {
        self.work_dir.join(NORMALIZED_FILE)
    }

    pub fn enriched(&self) -> PathBuf {
        self.work_dir.join(ENRICHED_FILE)
    }

    pub fn snapshot(&self) -> PathBuf {
        self.snapshot.clone().unwrap_or_else(|| self.work_dir.join("index.json"))
    }

    pub fn run_log(&self) -> PathBuf {
        self.run_log.clone().unwrap_or_else(|| self.work_dir.join("runs.jsonl"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexConfig {
    #[serde(default = "default_entity_bonus")]
    pub entity_bonus: f64,
}

fn default_entity_bonus() -> f64 {
    1.0
}

impl Default for IndexConfig {
    fn default() -> Self {
        Self {
            entity_bonus: default_entity_bonus(),
        }
    }
}

impl IndexConfig {
    pub fn settings(&self) -> IndexSettings {
        IndexSettings {
            entity_bonus: self.entity_bonus,
            ..IndexSettings::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Identity,
    Dictionary,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslationConfig {
    #[serde(default)]
    pub provider: ProviderKind,
    /// Phrase dictionary for the `dictionary` provider.
    pub dictionary: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServerConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_page_size")]
    pub page_size: usize,
    #[serde(default = "default_retention_hours")]
    pub log_retention_hours: u64,
    /// Access log file; access logging is off when unset.
    pub access_log: Option<PathBuf>,
    #[serde(default)]
    pub cors_origins: Vec<String>,
}

fn default_bind() -> String {
    "127.0.0.1:8080".into()
}

fn default_page_size() -> usize {
    10
}

fn default_retention_hours() -> u64 {
    24
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: default_bind(),
            page_size: default_page_size(),
            log_retention_hours: default_retention_hours(),
            access_log: None,
            cors_origins: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "standard_tasks")]
    pub tasks: Vec<TaskSpec>,
}

fn default_workers() -> usize {
    2
}

/// The ingest → normalize → enrich → index chain.
pub fn standard_tasks() -> Vec<TaskSpec> {
    let mut prev: Option<&str> = None;
    ACTIONS
        .iter()
        .map(|action| {
            let deps: Vec<&str> = prev.into_iter().collect();
            prev = Some(action);
            TaskSpec::new(action, action, &deps)
        })
        .collect()
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            workers: default_workers(),
            tasks: standard_tasks(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl Config {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, ConfigError> {
        let mut config: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        config.resolve_paths(base_dir);
        config.validate()?;
        Ok(config)
    }

    /// Loads a TOML config; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        for p in [
            &mut paths.archive,
            &mut paths.templates,
            &mut paths.lexicon,
            &mut paths.gazetteer,
            &mut paths.snapshot,
            &mut paths.run_log,
            &mut self.translation.dictionary,
            &mut self.server.access_log,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut paths.work_dir);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.server.bind.parse::<SocketAddr>().is_err() {
            return invalid(format!("server.bind {:?} is not an address:port", self.server.bind));
        }
        if !(1..=MAX_PAGE_SIZE).contains(&self.server.page_size) {
            return invalid(format!("server.page_size must be 1..={MAX_PAGE_SIZE}"));
        }
        if self.server.log_retention_hours == 0 {
            return invalid("server.log_retention_hours must be positive".into());
        }
        if !(self.index.entity_bonus.is_finite() && self.index.entity_bonus >= 0.0) {
            return invalid("index.entity_bonus must be a non-negative number".into());
        }
        if self.translation.provider == ProviderKind::Dictionary && self.translation.dictionary.is_none() {
            return invalid("translation.dictionary is required by the dictionary provider".into());
        }
        if self.pipeline.workers == 0 {
            return invalid("pipeline.workers must be at least 1".into());
        }
        validate_dag(&self.pipeline.tasks).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if let Some(t) = self.pipeline.tasks.iter().find(|t| !ACTIONS.contains(&t.action.as_str())) {
            return invalid(format!("task {} has unknown action {:?}", t.task_id, t.action));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Decode {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Load(String),
    #[error("no archive configured")]
    NoArchive,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StageError + '_ {
    move |source| StageError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), StageError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension("jsonl.tmp");
    let mut out = BufWriter::new(File::create(&tmp).map_err(io_err(&tmp))?);
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| StageError::Io {
            path: tmp.display().to_string(),
            source: e.into(),
        })?;
        out.write_all(b"\n").map_err(io_err(&tmp))?;
    }
    out.flush().map_err(io_err(&tmp))?;
    drop(out);
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, StageError> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut items = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line).map_err(|e| StageError::Decode {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(items)
}

/// A record with its normalized verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedRecord {
    pub record: ClaimRecord,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub documents: usize,
    pub skipped_lines: usize,
    pub records: usize,
    pub unmatched: usize,
    pub unparseable: usize,
    pub dropped: usize,
    pub duplicates: usize,
}

pub fn ingest_stage(archive: &Path, registry: &TemplateRegistry, out: &Path) -> Result<IngestSummary, StageError> {
    let load = load_archive(archive).map_err(|e| StageError::Load(e.to_string()))?;
    let report = ingest_documents(&load.documents, registry);
    write_jsonl(out, &report.records)?;
    Ok(IngestSummary {
        documents: report.documents,
        skipped_lines: load.skipped,
        records: report.records.len(),
        unmatched: report.unmatched,
        unparseable: report.unparseable,
        dropped: report.dropped,
        duplicates: report.duplicates,
    })
}

pub fn normalize_records(records: Vec<ClaimRecord>, lexicon: &LabelLexicon) -> Vec<NormalizedRecord> {
    records
        .into_iter()
        .map(|record| NormalizedRecord {
            verdict: normalize(&record.rating(), lexicon),
            record,
        })
        .collect()
}

pub fn normalize_stage(input: &Path, lexicon: &LabelLexicon, out: &Path) -> Result<usize, StageError> {
    let normalized = normalize_records(read_jsonl(input)?, lexicon);
    write_jsonl(out, &normalized)?;
    Ok(normalized.len())
}

pub fn enrich_records(
    records: &[NormalizedRecord],
    registry: &TemplateRegistry,
    gazetteer: &EntityGazetteer,
) -> Vec<EnrichedClaim> {
    records
        .iter()
        .map(|n| {
            let fallback = registry
                .get(&n.record.source_id)
                .map(|t| t.default_language.clone())
                .unwrap_or_else(LanguageCode::undetermined);
            enrich(&n.record, n.verdict, gazetteer, &fallback)
        })
        .collect()
}

pub fn enrich_stage(
    input: &Path,
    registry: &TemplateRegistry,
    gazetteer: &EntityGazetteer,
    out: &Path,
) -> Result<usize, StageError> {
    let normalized: Vec<NormalizedRecord> = read_jsonl(input)?;
    let enriched = enrich_records(&normalized, registry, gazetteer);
    write_jsonl(out, &enriched)?;
    Ok(enriched.len())
}

pub fn build_index(claims: Vec<EnrichedClaim>, settings: IndexSettings) -> Result<SearchIndex, StageError> {
    let mut index = SearchIndex::with_settings(settings);
    for claim in claims {
        index
            .add_document(claim)
            .map_err(|e| StageError::Load(e.to_string()))?;
    }
    Ok(index)
}

pub fn index_stage(input: &Path, settings: IndexSettings, snapshot: &Path) -> Result<SearchIndex, StageError> {
    let mut index = build_index(read_jsonl(input)?, settings)?;
    index
        .save(snapshot)
        .map_err(|e| StageError::Load(format!("saving snapshot: {e}")))?;
    Ok(index)
}

/// Everything the stages and the search need besides the data itself.
#[derive(Debug, Clone)]
pub struct Resources {
    pub registry: Arc<TemplateRegistry>,
    pub lexicon: Arc<LabelLexicon>,
    pub gazetteer: Arc<EntityGazetteer>,
    pub translator: Translator,
}

impl Default for Resources {
    fn default() -> Self {
        Self {
            registry: Arc::new(TemplateRegistry::builtin()),
            lexicon: Arc::new(LabelLexicon::seed()),
            gazetteer: Arc::new(EntityGazetteer::new()),
            translator: Translator::identity(),
        }
    }
}

impl Resources {
    pub fn load(config: &Config) -> Result<Self, StageError> {
        let load = |e: &dyn std::fmt::Display| StageError::Load(e.to_string());
        let registry = match &config.paths.templates {
            Some(dir) => TemplateRegistry::from_dir(dir).map_err(|e| load(&e))?,
            None => TemplateRegistry::builtin(),
        };
        let lexicon = match &config.paths.lexicon {
            Some(p) => LabelLexicon::load(p).map_err(|e| load(&e))?,
            None => LabelLexicon::seed(),
        };
        let gazetteer = match &config.paths.gazetteer {
            Some(p) => EntityGazetteer::load(p).map_err(|e| load(&e))?,
            None => EntityGazetteer::new(),
        };
        let translator = match (config.translation.provider, &config.translation.dictionary) {
            (ProviderKind::Dictionary, Some(p)) => {
                Translator::new(Arc::new(DictionaryProvider::load(p).map_err(|e| load(&e))?))
            }
            _ => Translator::identity(),
        };
        Ok(Self {
            registry: Arc::new(registry),
            lexicon: Arc::new(lexicon),
            gazetteer: Arc::new(gazetteer),
            translator,
        })
    }

    pub fn search_context(&self) -> SearchContext {
        SearchContext {
            gazetteer: self.gazetteer.clone(),
            translator: self.translator.clone(),
        }
    }
}

/// Maps task actions to stages. When `live` is set, the index stage also
/// swaps the freshly built index into it.
pub struct PipelineExecutor {
    pub config: Config,
    pub resources: Resources,
    pub live: Option<SharedIndex>,
}

impl PipelineExecutor {
    fn run_action(&self, action: &str) -> Result<(), StageError> {
        let paths = &self.config.paths;
        let r = &self.resources;
        match action {
            "ingest" => {
                let archive = paths.archive.as_deref().ok_or(StageError::NoArchive)?;
                ingest_stage(archive, &r.registry, &paths.records()).map(drop)
            }
            "normalize" => normalize_stage(&paths.records(), &r.lexicon, &paths.normalized()).map(drop),
            "enrich" => enrich_stage(&paths.normalized(), &r.registry, &r.gazetteer, &paths.enriched()).map(drop),
            "index" => {
                let index = index_stage(&paths.enriched(), self.config.index.settings(), &paths.snapshot())?;
                if let Some(live) = &self.live {
                    live.replace(index);
                }
                Ok(())
            }
            other => Err(StageError::Load(format!("unknown action {other:?}"))),
        }
    }
}

impl TaskExecutor for PipelineExecutor {
    fn execute(&self, task: &TaskSpec, _attempt: u32) -> Result<(), TaskFailure> {
        self.run_action(&task.action)
            .map_err(|e| TaskFailure::Failed(e.to_string()))
    }
}

/// Runs the configured DAG.
pub fn run_pipeline(
    executor: &PipelineExecutor,
    run_id: &str,
    observer: &dyn RunObserver,
) -> Result<DagRun, ExecuteError> {
    let p = &executor.config.pipeline;
    execute_dag(&p.tasks, executor, run_id, p.workers, observer)
}
