//! Corpus statistics by language, source, year and verdict.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::index::SearchIndex;
use crate::verdict::Verdict;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub total_documents: usize,
    pub by_language: BTreeMap<String, usize>,
    pub by_source: BTreeMap<String, usize>,
    /// year → language → count; undated documents are left out.
    pub by_year: BTreeMap<i32, BTreeMap<String, usize>>,
    pub by_verdict: BTreeMap<Verdict, usize>,
    pub generated_at: DateTime<Utc>,
}

impl StatsReport {
    /// Checks the sum and bound relations between the tables.
    pub fn is_consistent(&self) -> bool {
        let lang: usize = self.by_language.values().sum();
        let verdict: usize = self.by_verdict.values().sum();
        let source: usize = self.by_source.values().sum();
        let year_ok = self.by_year.values().all(|langs| {
            langs
                .iter()
                .all(|(l, n)| *n <= self.by_language.get(l).copied().unwrap_or(0))
        });
        lang == self.total_documents
            && verdict == self.total_documents
            && source == self.total_documents
            && year_ok
    }

    pub fn without_timestamp(&self) -> Self {
        Self {
            generated_at: DateTime::<Utc>::UNIX_EPOCH,
            ..self.clone()
        }
    }
}

pub fn compute_stats(index: &SearchIndex) -> StatsReport {
    let mut report = StatsReport {
        total_documents: index.len(),
        by_language: BTreeMap::new(),
        by_source: BTreeMap::new(),
        by_year: BTreeMap::new(),
        by_verdict: Verdict::ALL.iter().map(|v| (*v, 0)).collect(),
        generated_at: Utc::now(),
    };
    for doc in index.documents() {
        let e = &doc.enriched;
        let lang = e.language.as_str().to_string();
        *report.by_language.entry(lang.clone()).or_insert(0) += 1;
        *report.by_source.entry(e.base.source_id.clone()).or_insert(0) += 1;
        *report.by_verdict.entry(e.verdict).or_insert(0) += 1;
        if let Some(year) = e.year {
            *report.by_year.entry(year).or_default().entry(lang).or_insert(0) += 1;
        }
    }
    report
}
