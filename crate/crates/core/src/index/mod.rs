//! Embedded inverted index over enriched claims.
//!
//! Searchable text is `claim_text + " " + review_title`. The claimant is a
//! second field with its own length statistics; a document's score is the
//! sum of both fields' BM25 contributions over the distinct query terms, plus
//! a fixed bonus per entity shared with an expanded query.
//!
//! Ranking is a pure function of the index contents and the query: hits are
//! ordered by score descending, then doc id ascending.

mod analyzer;
mod bm25;
mod query;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, RwLock, RwLockReadGuard, RwLockWriteGuard};
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use analyzer::{analyze, MIN_TOKEN_CHARS};
pub use bm25::{bm25_score, idf, Bm25Error, Bm25Params};
pub use query::{
    Expansion, FacetCounts, Filters, Hit, HitTranslation, Query, QueryError, ResultPage,
    TranslationStatus, DEFAULT_PAGE_SIZE, FACETS, MAX_PAGE_SIZE, UNKNOWN_YEAR,
};

use crate::codes::LanguageCode;
use crate::enrich::{
    EnrichedClaim, EntityGazetteer, InvalidEnrichment, Provenance, TranslateError, Translator,
    SUPPORTED_LANGUAGES,
};

pub const SNAPSHOT_FORMAT: &str = "claimsearch-index";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Excerpts are cut to this many characters.
pub const EXCERPT_CHARS: usize = 280;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexSettings {
    pub bm25: Bm25Params,
    /// Added once per entity shared between an expanded query and a document.
    pub entity_bonus: f64,
}

impl Default for IndexSettings {
    fn default() -> Self {
        Self {
            bm25: Bm25Params::default(),
            entity_bonus: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexedClaim {
    pub doc_id: u32,
    pub enriched: EnrichedClaim,
    pub tokens: Vec<String>,
    pub claimant_tokens: Vec<String>,
    pub entity_ids: BTreeSet<String>,
}

impl IndexedClaim {
    fn build(doc_id: u32, enriched: EnrichedClaim) -> Self {
        let base = &enriched.base;
        let tokens = analyze(
            &format!("{} {}", base.claim_text, base.review_title),
            &enriched.language,
        );
        let claimant_tokens = base
            .claimant
            .as_deref()
            .map(|c| analyze(c, &enriched.language))
            .unwrap_or_default();
        let entity_ids = enriched.entity_ids().map(str::to_string).collect();
        Self {
            doc_id,
            enriched,
            tokens,
            claimant_tokens,
            entity_ids,
        }
    }

    pub fn record_id(&self) -> &str {
        self.enriched.record_id()
    }

    /// `(facet, value)` pairs this document contributes to facet counts.
    pub fn facet_values(&self) -> [(&'static str, String); 5] {
        let e = &self.enriched;
        [
            ("country", e.base.country.as_str().to_string()),
            ("language", e.language.as_str().to_string()),
            ("source", e.base.source_id.clone()),
            ("verdict", e.verdict.as_str().to_string()),
            (
                "year",
                e.year
                    .map(|y| y.to_string())
                    .unwrap_or_else(|| UNKNOWN_YEAR.to_string()),
            ),
        ]
    }

    pub fn matches(&self, filters: &Filters) -> bool {
        let e = &self.enriched;
        if !filters.verdicts.is_empty() && !filters.verdicts.contains(&e.verdict) {
            return false;
        }
        if !filters.languages.is_empty() && !filters.languages.contains(&e.language) {
            return false;
        }
        if !filters.sources.is_empty() && !filters.sources.contains(&e.base.source_id) {
            return false;
        }
        if !filters.countries.is_empty() && !filters.countries.contains(&e.base.country) {
            return false;
        }
        if filters.year_from.is_some() || filters.year_to.is_some() {
            let Some(year) = e.year else { return false };
            if filters.year_from.is_some_and(|from| year < from)
                || filters.year_to.is_some_and(|to| year > to)
            {
                return false;
            }
        }
        true
    }
}

type Postings = BTreeMap<String, BTreeMap<u32, u32>>;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("claim rejected: {0}")]
    Invalid(#[from] InvalidEnrichment),
    #[error("document id space exhausted")]
    Full,
}

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("snapshot i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("snapshot encoding: {0}")]
    Encoding(#[from] serde_json::Error),
    #[error("not an index snapshot (format {0:?})")]
    Format(String),
    #[error("unsupported snapshot version {0}")]
    Version(u32),
    #[error("snapshot is inconsistent: {0}")]
    Corrupt(String),
}

/// Extra inputs to a search that are not index contents: the gazetteer for
/// entity expansion and the translator for display languages.
#[derive(Debug, Clone)]
pub struct SearchContext {
    pub gazetteer: Arc<EntityGazetteer>,
    pub translator: Translator,
}

impl Default for SearchContext {
    fn default() -> Self {
        Self {
            gazetteer: Arc::new(EntityGazetteer::new()),
            translator: Translator::identity(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct SearchIndex {
    settings: IndexSettings,
    docs: Vec<IndexedClaim>,
    by_record: BTreeMap<String, u32>,
    text_postings: Postings,
    claimant_postings: Postings,
    entity_postings: BTreeMap<String, BTreeSet<u32>>,
    text_length_total: u64,
    claimant_length_total: u64,
    facets: FacetCounts,
    snapshot_at: Option<DateTime<Utc>>,
}

fn add_postings(postings: &mut Postings, doc_id: u32, tokens: &[String]) {
    for token in tokens {
        *postings
            .entry(token.clone())
            .or_default()
            .entry(doc_id)
            .or_insert(0) += 1;
    }
}

fn remove_postings(postings: &mut Postings, doc_id: u32, tokens: &[String]) {
    for token in tokens {
        if let Some(list) = postings.get_mut(token) {
            list.remove(&doc_id);
            if list.is_empty() {
                postings.remove(token);
            }
        }
    }
}

fn excerpt(text: &str) -> String {
    if text.chars().count() <= EXCERPT_CHARS {
        return text.to_string();
    }
    let mut cut: String = text.chars().take(EXCERPT_CHARS).collect();
    if let Some(space) = cut.rfind(' ') {
        cut.truncate(space);
    }
    cut.push('…');
    cut
}

/// Entities linked in `text` and every alias token of those entities in the
/// supported languages.
pub fn cross_language_expand(text: &str, gazetteer: &EntityGazetteer) -> Expansion {
    let entity_ids: BTreeSet<String> = gazetteer
        .link(text)
        .into_iter()
        .map(|m| m.entity_id)
        .collect();
    let mut terms = BTreeSet::new();
    for id in &entity_ids {
        for (alias, lang) in gazetteer.aliases(id) {
            if SUPPORTED_LANGUAGES.contains(&lang.as_str()) {
                terms.extend(analyze(alias, lang));
            }
        }
    }
    Expansion { entity_ids, terms }
}

impl SearchIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_settings(settings: IndexSettings) -> Self {
        Self {
            settings,
            ..Self::default()
        }
    }

    pub fn settings(&self) -> IndexSettings {
        self.settings
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn documents(&self) -> &[IndexedClaim] {
        &self.docs
    }

    pub fn document(&self, doc_id: u32) -> Option<&IndexedClaim> {
        self.docs.get(doc_id as usize)
    }

    pub fn get(&self, record_id: &str) -> Option<&IndexedClaim> {
        self.by_record.get(record_id).and_then(|id| self.document(*id))
    }

    /// Facet counts over the whole index.
    pub fn facet_table(&self) -> &FacetCounts {
        &self.facets
    }

    /// When the index was last saved to or loaded from a snapshot.
    pub fn snapshot_at(&self) -> Option<DateTime<Utc>> {
        self.snapshot_at
    }

    /// Inserts a claim. A claim whose record id is already indexed replaces
    /// the earlier version under the same doc id.
    pub fn add_document(&mut self, claim: EnrichedClaim) -> Result<u32, IndexError> {
        claim.validate()?;
        match self.by_record.get(claim.record_id()).copied() {
            Some(doc_id) => {
                self.unindex(doc_id);
                self.docs[doc_id as usize] = IndexedClaim::build(doc_id, claim);
                self.index(doc_id);
                Ok(doc_id)
            }
            None => {
                let doc_id = u32::try_from(self.docs.len()).map_err(|_| IndexError::Full)?;
                self.by_record.insert(claim.record_id().to_string(), doc_id);
                self.docs.push(IndexedClaim::build(doc_id, claim));
                self.index(doc_id);
                Ok(doc_id)
            }
        }
    }

    fn index(&mut self, doc_id: u32) {
        let doc = &self.docs[doc_id as usize];
        add_postings(&mut self.text_postings, doc_id, &doc.tokens);
        add_postings(&mut self.claimant_postings, doc_id, &doc.claimant_tokens);
        for entity in &doc.entity_ids {
            self.entity_postings
                .entry(entity.clone())
                .or_default()
                .insert(doc_id);
        }
        self.text_length_total += doc.tokens.len() as u64;
        self.claimant_length_total += doc.claimant_tokens.len() as u64;
        for (facet, value) in doc.facet_values() {
            *self
                .facets
                .entry(facet.to_string())
                .or_default()
                .entry(value)
                .or_insert(0) += 1;
        }
    }

    fn unindex(&mut self, doc_id: u32) {
        let doc = &self.docs[doc_id as usize];
        remove_postings(&mut self.text_postings, doc_id, &doc.tokens);
        remove_postings(&mut self.claimant_postings, doc_id, &doc.claimant_tokens);
        for entity in &doc.entity_ids {
            if let Some(set) = self.entity_postings.get_mut(entity) {
                set.remove(&doc_id);
                if set.is_empty() {
                    self.entity_postings.remove(entity);
                }
            }
        }
        self.text_length_total -= doc.tokens.len() as u64;
        self.claimant_length_total -= doc.claimant_tokens.len() as u64;
        for (facet, value) in doc.facet_values() {
            if let Some(values) = self.facets.get_mut(facet) {
                if let Some(count) = values.get_mut(&value) {
                    *count -= 1;
                    if *count == 0 {
                        values.remove(&value);
                    }
                }
                if values.is_empty() {
                    self.facets.remove(facet);
                }
            }
        }
    }

    /// Scores every candidate; unfiltered and unordered.
    fn score_candidates(&self, terms: &BTreeSet<String>, expansion: Option<&Expansion>) -> BTreeMap<u32, f64> {
        let mut scores = BTreeMap::new();
        let n = self.docs.len() as u64;
        if n == 0 {
            return scores;
        }
        let params = self.settings.bm25;
        let fields = [
            (&self.text_postings, self.text_length_total, false),
            (&self.claimant_postings, self.claimant_length_total, true),
        ];
        for term in terms {
            for (postings, total, claimant) in fields {
                let Some(list) = postings.get(term) else { continue };
                let avgdl = total as f64 / n as f64;
                let df = list.len() as u64;
                for (&doc_id, &tf) in list {
                    let doc = &self.docs[doc_id as usize];
                    let dl = if claimant { doc.claimant_tokens.len() } else { doc.tokens.len() };
                    *scores.entry(doc_id).or_insert(0.0) +=
                        bm25::term_score(tf as u64, df, n, dl as u64, avgdl, params);
                }
            }
        }
        if let Some(expansion) = expansion {
            for entity in &expansion.entity_ids {
                for &doc_id in self.entity_postings.get(entity).into_iter().flatten() {
                    *scores.entry(doc_id).or_insert(0.0) += self.settings.entity_bonus;
                }
            }
        }
        scores
    }

    /// Runs a query. Text that is blank after trimming browses the whole
    /// index (every document matches with score 0) so facets can be explored
    /// without a keyword.
    pub fn search(&self, q: &Query, ctx: &SearchContext) -> Result<ResultPage, QueryError> {
        let started = Instant::now();
        q.validate()?;

        let mut terms: BTreeSet<String> =
            analyze(&q.text, &LanguageCode::undetermined()).into_iter().collect();
        let expansion = q
            .expand_entities
            .then(|| cross_language_expand(&q.text, &ctx.gazetteer));
        if let Some(e) = &expansion {
            terms.extend(e.terms.iter().cloned());
        }

        let mut scores = self.score_candidates(&terms, expansion.as_ref());
        if q.text.trim().is_empty() {
            for doc in &self.docs {
                scores.entry(doc.doc_id).or_insert(0.0);
            }
        }

        let mut ranked: Vec<(u32, f64)> = scores
            .into_iter()
            .filter(|(doc_id, _)| self.docs[*doc_id as usize].matches(&q.filters))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

        let mut facet_counts: FacetCounts =
            FACETS.iter().map(|f| (f.to_string(), BTreeMap::new())).collect();
        for (doc_id, _) in &ranked {
            for (facet, value) in self.docs[*doc_id as usize].facet_values() {
                *facet_counts
                    .get_mut(facet)
                    .expect("facet key present")
                    .entry(value)
                    .or_insert(0) += 1;
            }
        }

        let hits = ranked
            .iter()
            .skip(q.page.saturating_mul(q.page_size))
            .take(q.page_size)
            .map(|&(doc_id, score)| self.hit(doc_id, score, q.display_language.as_ref(), &ctx.translator))
            .collect();

        Ok(ResultPage {
            total_hits: ranked.len(),
            elapsed_ms: started.elapsed().as_secs_f64() * 1000.0,
            page: q.page,
            page_size: q.page_size,
            hits,
            facet_counts,
            expansion,
        })
    }

    fn hit(&self, doc_id: u32, score: f64, display: Option<&LanguageCode>, translator: &Translator) -> Hit {
        let e = &self.docs[doc_id as usize].enriched;
        let b = &e.base;
        Hit {
            doc_id,
            record_id: b.record_id.clone(),
            score,
            verdict: e.verdict,
            review_title: b.review_title.clone(),
            date_published: b.date_published,
            country: b.country.clone(),
            review_url: b.review_url.clone(),
            excerpt: excerpt(&b.claim_text),
            claimant: b.claimant.clone(),
            language: e.language.clone(),
            source_id: b.source_id.clone(),
            translation: display.and_then(|to| translate_hit(e, to, translator)),
        }
    }

    pub fn save(&mut self, path: &Path) -> Result<DateTime<Utc>, SnapshotError> {
        let saved_at = Utc::now();
        let snapshot = SnapshotRef {
            format: SNAPSHOT_FORMAT,
            version: SNAPSHOT_VERSION,
            saved_at,
            settings: &self.settings,
            documents: &self.docs,
            text_postings: &self.text_postings,
            claimant_postings: &self.claimant_postings,
            entity_postings: &self.entity_postings,
            facets: &self.facets,
        };
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(dir)?;
        let tmp = dir.join(format!(
            ".{}.tmp",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("snapshot")
        ));
        {
            let mut out = BufWriter::new(fs::File::create(&tmp)?);
            serde_json::to_writer(&mut out, &snapshot)?;
            out.flush()?;
            out.get_ref().sync_all()?;
        }
        fs::rename(&tmp, path)?;
        self.snapshot_at = Some(saved_at);
        Ok(saved_at)
    }

    /// Loads a snapshot and checks that its postings and facet tables agree
    /// with the stored documents.
    pub fn load(path: &Path) -> Result<Self, SnapshotError> {
        let file = BufReader::new(fs::File::open(path)?);
        let snap: SnapshotOwned = serde_json::from_reader(file)?;
        if snap.format != SNAPSHOT_FORMAT {
            return Err(SnapshotError::Format(snap.format));
        }
        if snap.version != SNAPSHOT_VERSION {
            return Err(SnapshotError::Version(snap.version));
        }
        let mut index = Self::with_settings(snap.settings);
        for (position, doc) in snap.documents.into_iter().enumerate() {
            if doc.doc_id as usize != position {
                return Err(SnapshotError::Corrupt(format!("doc id {} at position {position}", doc.doc_id)));
            }
            let stored_tokens = doc.tokens.clone();
            let id = index
                .add_document(doc.enriched)
                .map_err(|e| SnapshotError::Corrupt(e.to_string()))?;
            if id as usize != position || index.docs[position].tokens != stored_tokens {
                return Err(SnapshotError::Corrupt(format!("document {position} does not rebuild")));
            }
        }
        if index.text_postings != snap.text_postings
            || index.claimant_postings != snap.claimant_postings
            || index.entity_postings != snap.entity_postings
            || index.facets != snap.facets
        {
            return Err(SnapshotError::Corrupt("postings or facets disagree with documents".into()));
        }
        index.snapshot_at = Some(snap.saved_at);
        Ok(index)
    }
}

fn translate_hit(e: &EnrichedClaim, to: &LanguageCode, translator: &Translator) -> Option<HitTranslation> {
    let from = &e.language;
    let one = |text: &str| match translator.translate(text, from, to) {
        Ok(t) => Some((t.text, matches!(t.provenance, Provenance::Translated), false)),
        Err(TranslateError::SameLanguage(_)) => None,
        Err(TranslateError::Provider(_)) => Some((text.to_string(), false, true)),
    };
    let (claim_text, claim_translated, claim_failed) = one(&e.base.claim_text)?;
    let (review_title, title_translated, title_failed) = one(&e.base.review_title)?;
    let status = if claim_failed || title_failed {
        TranslationStatus::Failed
    } else if claim_translated || title_translated {
        TranslationStatus::Translated
    } else {
        TranslationStatus::Untranslated
    };
    Some(HitTranslation {
        language: to.clone(),
        status,
        review_title,
        claim_text,
    })
}

#[derive(Serialize)]
struct SnapshotRef<'a> {
    format: &'a str,
    version: u32,
    saved_at: DateTime<Utc>,
    settings: &'a IndexSettings,
    documents: &'a [IndexedClaim],
    text_postings: &'a Postings,
    claimant_postings: &'a Postings,
    entity_postings: &'a BTreeMap<String, BTreeSet<u32>>,
    facets: &'a FacetCounts,
}

#[derive(Deserialize)]
struct SnapshotOwned {
    format: String,
    version: u32,
    saved_at: DateTime<Utc>,
    settings: IndexSettings,
    documents: Vec<IndexedClaim>,
    text_postings: Postings,
    claimant_postings: Postings,
    entity_postings: BTreeMap<String, BTreeSet<u32>>,
    facets: FacetCounts,
}

/// Single-writer, many-reader handle. A search holds the read lock for its
/// whole duration, so it sees an insert either entirely or not at all.
#[derive(Debug, Clone, Default)]
pub struct SharedIndex {
    inner: Arc<RwLock<SearchIndex>>,
}

impl SharedIndex {
    pub fn new(index: SearchIndex) -> Self {
        Self {
            inner: Arc::new(RwLock::new(index)),
        }
    }

    pub fn read(&self) -> RwLockReadGuard<'_, SearchIndex> {
        self.inner.read().expect("index lock poisoned")
    }

    pub fn write(&self) -> RwLockWriteGuard<'_, SearchIndex> {
        self.inner.write().expect("index lock poisoned")
    }

    pub fn add_document(&self, claim: EnrichedClaim) -> Result<u32, IndexError> {
        self.write().add_document(claim)
    }

    pub fn search(&self, q: &Query, ctx: &SearchContext) -> Result<ResultPage, QueryError> {
        self.read().search(q, ctx)
    }

    /// Swaps in a whole new index, e.g. after a pipeline run.
    pub fn replace(&self, index: SearchIndex) {
        *self.write() = index;
    }

    pub fn len(&self) -> usize {
        self.read().len()
    }

    pub fn is_empty(&self) -> bool {
        self.read().is_empty()
    }
}
