//! Language, entity and translation enrichment of extracted claims.

mod gazetteer;
mod language;
mod translate;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use gazetteer::{link_entities, EntityGazetteer, EntityMention, GazetteerError};
pub use language::{
    detect_language, Detection, LanguageDetector, MIN_DETECTION_CHARS, SUPPORTED_LANGUAGES,
};
pub use translate::{
    translate, DictionaryError, DictionaryProvider, IdentityProvider, Provenance, ProviderError,
    TranslateError, Translation, TranslationCache, TranslationProvider, Translator,
};

use crate::codes::LanguageCode;
use crate::ingest::ClaimRecord;
use crate::verdict::Verdict;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedClaim {
    pub base: ClaimRecord,
    pub verdict: Verdict,
    pub language: LanguageCode,
    pub entities: Vec<EntityMention>,
    /// Claim text per target language; never keyed by `language` itself.
    #[serde(default)]
    pub translations: BTreeMap<LanguageCode, String>,
    pub year: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvalidEnrichment {
    #[error("mention {index} lies outside the claim text")]
    MentionOutOfBounds { index: usize },
    #[error("mention {index} surface does not match the claim text")]
    SurfaceMismatch { index: usize },
    #[error("mentions {first} and {second} overlap")]
    Overlap { first: usize, second: usize },
    #[error("translations contain the record language")]
    SelfTranslation,
}

impl EnrichedClaim {
    pub fn record_id(&self) -> &str {
        &self.base.record_id
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = &str> {
        self.entities.iter().map(|m| m.entity_id.as_str())
    }

    pub fn validate(&self) -> Result<(), InvalidEnrichment> {
        let chars: Vec<char> = self.base.claim_text.chars().collect();
        for (index, m) in self.entities.iter().enumerate() {
            if !(m.start < m.end && m.end <= chars.len()) {
                return Err(InvalidEnrichment::MentionOutOfBounds { index });
            }
            if chars[m.start..m.end].iter().collect::<String>() != m.surface {
                return Err(InvalidEnrichment::SurfaceMismatch { index });
            }
        }
        let mut spans: Vec<(usize, usize, usize)> = self
            .entities
            .iter()
            .enumerate()
            .map(|(i, m)| (m.start, m.end, i))
            .collect();
        spans.sort();
        for pair in spans.windows(2) {
            if pair[1].0 < pair[0].1 {
                return Err(InvalidEnrichment::Overlap {
                    first: pair[0].2,
                    second: pair[1].2,
                });
            }
        }
        if self.translations.contains_key(&self.language) {
            return Err(InvalidEnrichment::SelfTranslation);
        }
        Ok(())
    }
}

/// Detects the claim language (falling back to `default_language` when
/// undetermined), links entities and projects the publication year.
pub fn enrich(
    record: &ClaimRecord,
    verdict: Verdict,
    gazetteer: &EntityGazetteer,
    default_language: &LanguageCode,
) -> EnrichedClaim {
    let detected = detect_language(&record.claim_text).language;
    let language = if detected.is_undetermined() {
        default_language.clone()
    } else {
        detected
    };
    EnrichedClaim {
        base: record.clone(),
        verdict,
        language,
        entities: gazetteer.link(&record.claim_text),
        translations: BTreeMap::new(),
        year: record.year(),
    }
}
