//! Multilingual entity gazetteer and exact-alias entity linking.
//!
//! Matching is case-insensitive per character (so character offsets in the
//! folded text line up with the original) and only accepts matches that
//! start and end on word boundaries. Overlapping candidates are resolved by
//! longest span first, then leftmost, then smallest entity id.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::LanguageCode;

#[derive(Debug, Error)]
pub enum GazetteerError {
    #[error("entity {0:?} has no aliases")]
    NoAliases(String),
    #[error("entity {0:?} has an empty alias")]
    EmptyAlias(String),
    #[error("reading gazetteer: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing gazetteer: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityMention {
    pub surface: String,
    /// Character offsets, half-open.
    pub start: usize,
    pub end: usize,
    pub entity_id: String,
    pub confidence: f64,
}

#[derive(Debug, Clone)]
struct CompiledAlias {
    folded: Vec<char>,
    entity_id: String,
}

/// `entity_id → {(alias, language)}` plus a first-character lookup table.
#[derive(Debug, Clone, Default)]
pub struct EntityGazetteer {
    entries: BTreeMap<String, BTreeSet<(String, LanguageCode)>>,
    by_first_char: HashMap<char, Vec<CompiledAlias>>,
}

pub(crate) fn fold_char(c: char) -> char {
    let mut lower = c.to_lowercase();
    match (lower.next(), lower.next()) {
        (Some(l), None) => l,
        _ => c,
    }
}

#[derive(Deserialize)]
struct GazetteerFile {
    #[serde(default)]
    entities: BTreeMap<String, BTreeMap<String, Vec<String>>>,
}

impl EntityGazetteer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        entity_id: &str,
        aliases: &[(&str, &str)],
    ) -> Result<(), GazetteerError> {
        if aliases.is_empty() {
            return Err(GazetteerError::NoAliases(entity_id.to_string()));
        }
        for (alias, lang) in aliases {
            let alias = alias.trim();
            if alias.is_empty() {
                return Err(GazetteerError::EmptyAlias(entity_id.to_string()));
            }
            let lang = LanguageCode::parse(lang).map_err(|e| GazetteerError::Parse(e.to_string()))?;
            let fresh = self
                .entries
                .entry(entity_id.to_string())
                .or_default()
                .insert((alias.to_string(), lang));
            if fresh {
                let folded: Vec<char> = alias.chars().map(fold_char).collect();
                let entry = self.by_first_char.entry(folded[0]).or_default();
                let duplicate = entry
                    .iter()
                    .any(|a| a.folded == folded && a.entity_id == entity_id);
                if !duplicate {
                    entry.push(CompiledAlias {
                        folded,
                        entity_id: entity_id.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Parses `[entities."<iri>"] <lang> = ["alias", ...]` tables.
    pub fn from_toml_str(text: &str) -> Result<Self, GazetteerError> {
        let file: GazetteerFile =
            toml::from_str(text).map_err(|e| GazetteerError::Parse(e.to_string()))?;
        let mut gazetteer = Self::new();
        for (entity_id, by_lang) in &file.entities {
            let aliases: Vec<(&str, &str)> = by_lang
                .iter()
                .flat_map(|(lang, names)| names.iter().map(move |n| (n.as_str(), lang.as_str())))
                .collect();
            gazetteer.insert(entity_id, &aliases)?;
        }
        Ok(gazetteer)
    }

    pub fn load(path: &Path) -> Result<Self, GazetteerError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn aliases(&self, entity_id: &str) -> impl Iterator<Item = (&str, &LanguageCode)> {
        self.entries
            .get(entity_id)
            .into_iter()
            .flatten()
            .map(|(alias, lang)| (alias.as_str(), lang))
    }

    /// Exact-alias entity linking; mentions are sorted by start offset.
    pub fn link(&self, text: &str) -> Vec<EntityMention> {
        let chars: Vec<char> = text.chars().collect();
        let folded: Vec<char> = chars.iter().copied().map(fold_char).collect();
        let n = chars.len();
        let joins = |a: usize, b: usize| chars[a].is_alphanumeric() && chars[b].is_alphanumeric();

        let mut candidates: Vec<(usize, usize, &str)> = Vec::new();
        for start in 0..n {
            if start > 0 && joins(start - 1, start) {
                continue;
            }
            let Some(aliases) = self.by_first_char.get(&folded[start]) else {
                continue;
            };
            for alias in aliases {
                let end = start + alias.folded.len();
                if end > n || folded[start..end] != alias.folded[..] {
                    continue;
                }
                if end < n && joins(end - 1, end) {
                    continue;
                }
                candidates.push((start, end, &alias.entity_id));
            }
        }
        candidates.sort_by(|a, b| {
            (b.1 - b.0)
                .cmp(&(a.1 - a.0))
                .then(a.0.cmp(&b.0))
                .then(a.2.cmp(b.2))
        });

        let mut taken = vec![false; n];
        let mut mentions = Vec::new();
        for (start, end, entity_id) in candidates {
            if taken[start..end].iter().any(|t| *t) {
                continue;
            }
            taken[start..end].iter_mut().for_each(|t| *t = true);
            mentions.push(EntityMention {
                surface: chars[start..end].iter().collect(),
                start,
                end,
                entity_id: entity_id.to_string(),
                confidence: 1.0,
            });
        }
        mentions.sort_by_key(|m| m.start);
        mentions
    }
}

/// Convenience wrapper over [`EntityGazetteer::link`].
pub fn link_entities(text: &str, gazetteer: &EntityGazetteer) -> Vec<EntityMention> {
    gazetteer.link(text)
}
