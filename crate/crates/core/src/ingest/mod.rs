//! Acquisition and extraction of fact-check pages.
//!
//! Pages come from a newline-delimited fixture archive ([`load_archive`]) or
//! from a white-listed live fetch ([`Fetcher`]). Each page is matched to a
//! [`SourceTemplate`] and its ClaimReview markup is turned into
//! [`ClaimRecord`]s by [`extract_claim_reviews`].

mod archive;
mod extract;
mod fetch;
mod record;
mod template;

use std::collections::HashSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use url::Url;

pub use archive::{load_archive, parse_archive, write_archive, ArchiveError, ArchiveLoad};
pub use extract::{extract_claim_reviews, ExtractError, Extraction};
pub use fetch::{
    FetchError, Fetcher, HttpTransport, Politeness, Transport, TransportError, TransportResponse,
};
pub use record::{compute_record_id, parse_date, ClaimRecord, InvalidRecord};
pub use template::{
    match_template, ExtractionRule, RuleField, SourceTemplate, TemplateError, TemplateRegistry,
};

/// A fetched page before extraction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawDocument {
    pub url: Url,
    pub fetched_at: DateTime<Utc>,
    pub http_status: u16,
    pub content_type: String,
    pub body: Vec<u8>,
}

impl RawDocument {
    /// Checks the document invariants relative to `now`.
    pub fn validate(&self, now: DateTime<Utc>) -> Result<(), String> {
        if self.url.cannot_be_a_base() || self.url.host_str().is_none() {
            return Err(format!("url {} is not absolute", self.url));
        }
        if self.fetched_at > now {
            return Err(format!("fetched_at {} is in the future", self.fetched_at));
        }
        if self.http_status == 200 && self.body.is_empty() {
            return Err("empty body with status 200".into());
        }
        Ok(())
    }
}

/// Counters and output of one ingestion run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub records: Vec<ClaimRecord>,
    pub documents: usize,
    /// Documents whose host matched no template.
    pub unmatched: usize,
    /// Documents whose body could not be parsed at all.
    pub unparseable: usize,
    /// Extracted records dropped for violating record invariants.
    pub dropped: usize,
    /// Records whose `record_id` was already produced earlier in the run.
    pub duplicates: usize,
}

/// Extracts every document in order; the first occurrence of a record id wins.
pub fn ingest_documents(documents: &[RawDocument], registry: &TemplateRegistry) -> IngestReport {
    let mut report = IngestReport {
        documents: documents.len(),
        ..IngestReport::default()
    };
    let mut seen = HashSet::new();
    for doc in documents {
        let template = match registry.match_url(&doc.url) {
            Ok(t) => t,
            Err(_) => {
                report.unmatched += 1;
                continue;
            }
        };
        match extract_claim_reviews(doc, template) {
            Ok(extraction) => {
                report.dropped += extraction.dropped;
                for record in extraction.records {
                    if seen.insert(record.record_id.clone()) {
                        report.records.push(record);
                    } else {
                        report.duplicates += 1;
                    }
                }
            }
            Err(_) => report.unparseable += 1,
        }
    }
    report
}
