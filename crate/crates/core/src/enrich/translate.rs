//! Pluggable translation with a shared result cache.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::gazetteer::fold_char;
use crate::codes::LanguageCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Translated,
    Untranslated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Translation {
    pub text: String,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("translation transport failure: {0}")]
    Transport(String),
    #[error("translation quota exhausted")]
    Quota,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TranslateError {
    #[error("source and target language are both {0}")]
    SameLanguage(LanguageCode),
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

pub trait TranslationProvider: Send + Sync {
    /// Stable name, part of the cache key.
    fn name(&self) -> &str;

    fn translate(
        &self,
        text: &str,
        from: &LanguageCode,
        to: &LanguageCode,
    ) -> Result<Translation, ProviderError>;
}

/// Returns its input unchanged, flagged `untranslated`.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityProvider;

impl TranslationProvider for IdentityProvider {
    fn name(&self) -> &str {
        "identity"
    }

    fn translate(
        &self,
        text: &str,
        _from: &LanguageCode,
        _to: &LanguageCode,
    ) -> Result<Translation, ProviderError> {
        Ok(Translation {
            text: text.to_string(),
            provenance: Provenance::Untranslated,
        })
    }
}

/// Replaces known phrases, longest first, case-insensitively and on word
/// boundaries. Text without any known phrase comes back `untranslated`.
/// Source phrase as chars, with its replacement.
type Phrase = (Vec<char>, String);

#[derive(Debug, Clone, Default)]
pub struct DictionaryProvider {
    phrases: BTreeMap<(LanguageCode, LanguageCode), Vec<Phrase>>,
}

#[derive(Debug, Error)]
pub enum DictionaryError {
    #[error("reading dictionary: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing dictionary: {0}")]
    Parse(String),
}

impl DictionaryProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, from: LanguageCode, to: LanguageCode, phrase: &str, target: &str) {
        let folded: Vec<char> = phrase.trim().chars().map(fold_char).collect();
        if folded.is_empty() {
            return;
        }
        let list = self.phrases.entry((from, to)).or_default();
        list.retain(|(p, _)| *p != folded);
        list.push((folded, target.to_string()));
        list.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));
    }

    /// Parses `[<from>.<to>] "phrase" = "translation"` tables.
    pub fn from_toml_str(text: &str) -> Result<Self, DictionaryError> {
        let raw: BTreeMap<String, BTreeMap<String, BTreeMap<String, String>>> =
            toml::from_str(text).map_err(|e| DictionaryError::Parse(e.to_string()))?;
        let mut dict = Self::new();
        for (from, targets) in raw {
            let from = LanguageCode::parse(&from).map_err(|e| DictionaryError::Parse(e.to_string()))?;
            for (to, phrases) in targets {
                let to = LanguageCode::parse(&to).map_err(|e| DictionaryError::Parse(e.to_string()))?;
                for (phrase, target) in phrases {
                    dict.insert(from.clone(), to.clone(), &phrase, &target);
                }
            }
        }
        Ok(dict)
    }

    pub fn load(path: &Path) -> Result<Self, DictionaryError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

impl TranslationProvider for DictionaryProvider {
    fn name(&self) -> &str {
        "dictionary"
    }

    fn translate(
        &self,
        text: &str,
        from: &LanguageCode,
        to: &LanguageCode,
    ) -> Result<Translation, ProviderError> {
        let Some(phrases) = self.phrases.get(&(from.clone(), to.clone())) else {
            return IdentityProvider.translate(text, from, to);
        };
        let chars: Vec<char> = text.chars().collect();
        let folded: Vec<char> = chars.iter().copied().map(fold_char).collect();
        let n = chars.len();
        let joins = |a: usize, b: usize| chars[a].is_alphanumeric() && chars[b].is_alphanumeric();
        let mut out = String::with_capacity(text.len());
        let mut replaced = false;
        let mut i = 0;
        while i < n {
            let at_boundary = i == 0 || !joins(i - 1, i);
            let hit = at_boundary
                .then(|| {
                    phrases.iter().find(|(p, _)| {
                        let end = i + p.len();
                        end <= n && folded[i..end] == p[..] && (end == n || !joins(end - 1, end))
                    })
                })
                .flatten();
            match hit {
                Some((phrase, target)) => {
                    out.push_str(target);
                    i += phrase.len();
                    replaced = true;
                }
                None => {
                    out.push(chars[i]);
                    i += 1;
                }
            }
        }
        Ok(Translation {
            text: out,
            provenance: if replaced {
                Provenance::Translated
            } else {
                Provenance::Untranslated
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct CacheKey {
    provider: String,
    from: LanguageCode,
    to: LanguageCode,
    text_hash: [u8; 32],
}

/// Translation results keyed by `(provider, from, to, sha256(text))`.
/// Concurrent inserts of one key are last-write-wins.
#[derive(Debug, Default)]
pub struct TranslationCache {
    entries: RwLock<HashMap<CacheKey, Translation>>,
}

impl TranslationCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn translate(
    text: &str,
    from: &LanguageCode,
    to: &LanguageCode,
    provider: &dyn TranslationProvider,
    cache: &TranslationCache,
) -> Result<Translation, TranslateError> {
    if from == to {
        return Err(TranslateError::SameLanguage(from.clone()));
    }
    let key = CacheKey {
        provider: provider.name().to_string(),
        from: from.clone(),
        to: to.clone(),
        text_hash: Sha256::digest(text.as_bytes()).into(),
    };
    if let Some(hit) = cache.entries.read().expect("cache poisoned").get(&key) {
        return Ok(hit.clone());
    }
    let translation = provider.translate(text, from, to)?;
    cache
        .entries
        .write()
        .expect("cache poisoned")
        .insert(key, translation.clone());
    Ok(translation)
}

/// A provider paired with its cache.
#[derive(Clone)]
pub struct Translator {
    provider: Arc<dyn TranslationProvider>,
    cache: Arc<TranslationCache>,
}

impl Translator {
    pub fn new(provider: Arc<dyn TranslationProvider>) -> Self {
        Self {
            provider,
            cache: Arc::new(TranslationCache::new()),
        }
    }

    pub fn identity() -> Self {
        Self::new(Arc::new(IdentityProvider))
    }

    pub fn provider_name(&self) -> &str {
        self.provider.name()
    }

    pub fn cache(&self) -> &TranslationCache {
        &self.cache
    }

    pub fn translate(
        &self,
        text: &str,
        from: &LanguageCode,
        to: &LanguageCode,
    ) -> Result<Translation, TranslateError> {
        translate(text, from, to, self.provider.as_ref(), &self.cache)
    }
}

impl std::fmt::Debug for Translator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Translator")
            .field("provider", &self.provider.name())
            .field("cached", &self.cache.len())
            .finish()
    }
}
