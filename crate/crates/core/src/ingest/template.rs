//! Per-source extraction templates and the host white-list they form.

use std::collections::BTreeSet;
use std::path::Path;

use scraper::Selector;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::codes::{CountryCode, LanguageCode};

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("no template matches host {0:?}")]
    NoMatch(String),
    #[error("host {host:?} matches several templates: {sources:?}")]
    Ambiguous { host: String, sources: Vec<String> },
    #[error("url {0:?} has no host")]
    NoHost(String),
    #[error("template registry is empty")]
    EmptyRegistry,
    #[error("duplicate source_id {0:?}")]
    DuplicateSource(String),
    #[error("template {source_id}: {reason}")]
    Invalid { source_id: String, reason: String },
    #[error("reading templates: {0}")]
    Io(#[from] std::io::Error),
}

/// ClaimRecord fields a markup rule can fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleField {
    ClaimText,
    Claimant,
    ReviewTitle,
    ReviewUrl,
    DatePublished,
    RatingValue,
    BestRating,
    WorstRating,
    RatingLabel,
}

/// CSS selector → field. Without `attribute` the element text is used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionRule {
    pub field: RuleField,
    pub selector: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<String>,
}

impl ExtractionRule {
    pub(crate) fn parsed_selector(&self) -> Option<Selector> {
        Selector::parse(&self.selector).ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceTemplate {
    pub source_id: String,
    pub domain_patterns: Vec<String>,
    pub country: CountryCode,
    pub default_language: LanguageCode,
    pub extraction_rules: Vec<ExtractionRule>,
}

impl SourceTemplate {
    pub fn validate(&self) -> Result<(), TemplateError> {
        let invalid = |reason: String| TemplateError::Invalid {
            source_id: self.source_id.clone(),
            reason,
        };
        if self.source_id.trim().is_empty() {
            return Err(invalid("empty source_id".into()));
        }
        if self.domain_patterns.iter().all(|p| p.trim().is_empty()) {
            return Err(invalid("no domain patterns".into()));
        }
        for field in [RuleField::ClaimText, RuleField::ReviewUrl] {
            if !self.extraction_rules.iter().any(|r| r.field == field) {
                return Err(invalid(format!("missing {field:?} rule")));
            }
        }
        for rule in &self.extraction_rules {
            if rule.parsed_selector().is_none() {
                return Err(invalid(format!("bad selector {:?}", rule.selector)));
            }
        }
        Ok(())
    }

    /// Case-insensitive host match. `example.org` covers the host and its
    /// subdomains; `*.example.org` covers subdomains only.
    pub fn matches_host(&self, host: &str) -> bool {
        let host = host.trim_end_matches('.').to_ascii_lowercase();
        self.domain_patterns.iter().any(|pattern| {
            let pattern = pattern.trim().to_ascii_lowercase();
            if let Some(suffix) = pattern.strip_prefix("*.") {
                host.ends_with(&format!(".{suffix}"))
            } else {
                host == pattern || host.ends_with(&format!(".{pattern}"))
            }
        })
    }
}

/// Returns the single template whose patterns cover the url's host.
pub fn match_template<'a>(
    url: &Url,
    registry: &'a [SourceTemplate],
) -> Result<&'a SourceTemplate, TemplateError> {
    if registry.is_empty() {
        return Err(TemplateError::EmptyRegistry);
    }
    let host = url
        .host_str()
        .ok_or_else(|| TemplateError::NoHost(url.to_string()))?;
    let mut hits = registry.iter().filter(|t| t.matches_host(host));
    match (hits.next(), hits.next()) {
        (None, _) => Err(TemplateError::NoMatch(host.to_string())),
        (Some(t), None) => Ok(t),
        (Some(a), Some(b)) => {
            let mut sources = vec![a.source_id.clone(), b.source_id.clone()];
            sources.extend(hits.map(|t| t.source_id.clone()));
            Err(TemplateError::Ambiguous {
                host: host.to_string(),
                sources,
            })
        }
    }
}

#[derive(Deserialize)]
struct TemplateFile {
    source_id: Option<String>,
    domain_patterns: Vec<String>,
    country: CountryCode,
    default_language: LanguageCode,
    #[serde(default)]
    extraction_rules: Vec<ExtractionRule>,
}

impl TemplateFile {
    fn into_template(self, stem: &str) -> Result<SourceTemplate, TemplateError> {
        if let Some(id) = &self.source_id {
            if id != stem {
                return Err(TemplateError::Invalid {
                    source_id: id.clone(),
                    reason: format!("file name {stem:?} does not match source_id"),
                });
            }
        }
        let template = SourceTemplate {
            source_id: stem.to_string(),
            domain_patterns: self.domain_patterns,
            country: self.country,
            default_language: self.default_language,
            extraction_rules: self.extraction_rules,
        };
        template.validate()?;
        Ok(template)
    }
}

fn parse_template(stem: &str, text: &str) -> Result<SourceTemplate, TemplateError> {
    let file: TemplateFile = toml::from_str(text).map_err(|e| TemplateError::Invalid {
        source_id: stem.to_string(),
        reason: e.to_string(),
    })?;
    file.into_template(stem)
}

macro_rules! builtin_templates {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../../data/templates/", $name, ".toml")))),*]
    };
}

const BUILTIN: &[(&str, &str)] = builtin_templates![
    "aosfatos",
    "apublica",
    "checkyourfact",
    "correctiv",
    "dpa",
    "efarsas",
    "fullfact",
    "g1",
    "lupa",
    "politifact",
    "snopes",
    "truthorfiction",
];

/// Immutable set of templates keyed by `source_id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateRegistry {
    templates: Vec<SourceTemplate>,
}

impl TemplateRegistry {
    pub fn new(mut templates: Vec<SourceTemplate>) -> Result<Self, TemplateError> {
        if templates.is_empty() {
            return Err(TemplateError::EmptyRegistry);
        }
        let mut ids = BTreeSet::new();
        for t in &templates {
            t.validate()?;
            if !ids.insert(t.source_id.clone()) {
                return Err(TemplateError::DuplicateSource(t.source_id.clone()));
            }
        }
        templates.sort_by(|a, b| a.source_id.cmp(&b.source_id));
        Ok(Self { templates })
    }

    /// The fact-checking sources bundled with the crate.
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(stem, text)| parse_template(stem, text).expect("bundled template is valid"))
            .collect();
        Self::new(templates).expect("bundled registry is valid")
    }

    /// Loads every `*.toml` file in `dir`; the file stem is the source id.
    pub fn from_dir(dir: &Path) -> Result<Self, TemplateError> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "toml"))
            .collect();
        paths.sort();
        let mut templates = Vec::with_capacity(paths.len());
        for path in paths {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            templates.push(parse_template(&stem, &std::fs::read_to_string(&path)?)?);
        }
        Self::new(templates)
    }

    pub fn templates(&self) -> &[SourceTemplate] {
        &self.templates
    }

    pub fn get(&self, source_id: &str) -> Option<&SourceTemplate> {
        self.templates.iter().find(|t| t.source_id == source_id)
    }

    pub fn match_url(&self, url: &Url) -> Result<&SourceTemplate, TemplateError> {
        match_template(url, &self.templates)
    }
}
