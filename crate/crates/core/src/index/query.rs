use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::codes::{CountryCode, LanguageCode};
use crate::verdict::Verdict;

pub const MAX_PAGE_SIZE: usize = 100;
pub const DEFAULT_PAGE_SIZE: usize = 10;

/// Facet names, in the order they appear in `facet_counts`.
pub const FACETS: [&str; 5] = ["country", "language", "source", "verdict", "year"];

/// Year bucket for documents without a publication date.
pub const UNKNOWN_YEAR: &str = "unknown";

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Filters {
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub verdicts: BTreeSet<Verdict>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub languages: BTreeSet<LanguageCode>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub sources: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub countries: BTreeSet<CountryCode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year_from: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year_to: Option<i32>,
}

impl Filters {
    pub fn is_empty(&self) -> bool {
        *self == Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    #[serde(default)]
    pub filters: Filters,
    #[serde(default)]
    pub display_language: Option<LanguageCode>,
    #[serde(default)]
    pub page: usize,
    #[serde(default = "default_page_size")]
    pub page_size: usize,
    #[serde(default)]
    pub expand_entities: bool,
}

fn default_page_size() -> usize {
    DEFAULT_PAGE_SIZE
}

impl Query {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            filters: Filters::default(),
            display_language: None,
            page: 0,
            page_size: DEFAULT_PAGE_SIZE,
            expand_entities: false,
        }
    }

    pub fn with_page(mut self, page: usize, page_size: usize) -> Self {
        self.page = page;
        self.page_size = page_size;
        self
    }

    pub fn expanded(mut self, on: bool) -> Self {
        self.expand_entities = on;
        self
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        if self.page_size == 0 || self.page_size > MAX_PAGE_SIZE {
            return Err(QueryError::PageSize(self.page_size));
        }
        if let (Some(from), Some(to)) = (self.filters.year_from, self.filters.year_to) {
            if from > to {
                return Err(QueryError::YearRange { from, to });
            }
        }
        if self.filters.sources.iter().any(|s| s.trim().is_empty()) {
            return Err(QueryError::EmptySource);
        }
        if matches!(&self.display_language, Some(l) if l.is_undetermined()) {
            return Err(QueryError::DisplayLanguage);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QueryError {
    #[error("page_size must be between 1 and {MAX_PAGE_SIZE}, got {0}")]
    PageSize(usize),
    #[error("year_from {from} is after year_to {to}")]
    YearRange { from: i32, to: i32 },
    #[error("source filter contains an empty value")]
    EmptySource,
    #[error("display language must be a concrete language code")]
    DisplayLanguage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TranslationStatus {
    Translated,
    Untranslated,
    Failed,
}

/// Display-language rendering of a hit. The original fields stay on the hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitTranslation {
    pub language: LanguageCode,
    pub status: TranslationStatus,
    pub review_title: String,
    pub claim_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub doc_id: u32,
    pub record_id: String,
    pub score: f64,
    pub verdict: Verdict,
    pub review_title: String,
    pub date_published: Option<NaiveDate>,
    pub country: CountryCode,
    pub review_url: Url,
    pub excerpt: String,
    pub claimant: Option<String>,
    pub language: LanguageCode,
    pub source_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translation: Option<HitTranslation>,
}

/// What entity expansion added to the query.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Expansion {
    pub entity_ids: BTreeSet<String>,
    pub terms: BTreeSet<String>,
}

impl Expansion {
    pub fn is_empty(&self) -> bool {
        self.entity_ids.is_empty() && self.terms.is_empty()
    }
}

pub type FacetCounts = BTreeMap<String, BTreeMap<String, usize>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultPage {
    pub total_hits: usize,
    pub elapsed_ms: f64,
    pub page: usize,
    pub page_size: usize,
    pub hits: Vec<Hit>,
    pub facet_counts: FacetCounts,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expansion: Option<Expansion>,
}

impl ResultPage {
    /// Copy with `elapsed_ms` zeroed, for comparisons that must ignore timing.
    pub fn without_timing(&self) -> Self {
        Self {
            elapsed_ms: 0.0,
            ..self.clone()
        }
    }
}
