//! Verdict normalization.
//!
//! Agencies publish ratings either on a numeric scale (ClaimReview
//! `ratingValue` / `bestRating` / `worstRating`) or as free-text labels
//! (`alternateName`). Both are mapped onto four categories:
//!
//! * `TRUE`: completely accurate,
//! * `FALSE`: completely false,
//! * `MIXED`: partially accurate with some elements of falsity,
//! * `OTHER`: no clear verdict.
//!
//! Numeric ratings are projected onto `[0, 1]` and snapped to the nearest of
//! five equally spaced buckets. Only the endpoints are categorical: bucket
//! `1.0` is `TRUE`, bucket `0.0` is `FALSE`, everything between is `MIXED`.
//! Ties at bucket midpoints go to the bucket nearer `0.5`. This is a policy
//! and can be replaced through [`NumericPolicy`].

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::LanguageCode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    True,
    False,
    Mixed,
    Other,
}

impl Verdict {
    pub const ALL: [Verdict; 4] = [Verdict::True, Verdict::False, Verdict::Mixed, Verdict::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::True => "TRUE",
            Verdict::False => "FALSE",
            Verdict::Mixed => "MIXED",
            Verdict::Other => "OTHER",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = VerdictError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "true" => Ok(Verdict::True),
            "false" => Ok(Verdict::False),
            "mixed" => Ok(Verdict::Mixed),
            "other" => Ok(Verdict::Other),
            _ => Err(VerdictError::UnknownVerdict(s.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum VerdictError {
    #[error("degenerate rating scale: best {best} must exceed worst {worst}")]
    DegenerateScale { best: f64, worst: f64 },
    #[error("rating value {value} outside scale [{worst}, {best}]")]
    OutOfScale { value: f64, best: f64, worst: f64 },
    #[error("incomplete numeric rating")]
    Incomplete,
    #[error("unknown verdict {0:?}")]
    UnknownVerdict(String),
    #[error("label {label:?} maps to both {first} and {second}")]
    ConflictingLabel {
        label: String,
        first: Verdict,
        second: Verdict,
    },
    #[error("reading lexicon: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing lexicon: {0}")]
    Parse(String),
}

/// Rating fields as published in a ClaimReview block.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RatingInfo {
    pub rating_value: Option<f64>,
    pub best_rating: Option<f64>,
    pub worst_rating: Option<f64>,
    pub rating_label: Option<String>,
}

impl RatingInfo {
    pub fn numeric(value: f64, best: f64, worst: f64) -> Self {
        Self {
            rating_value: Some(value),
            best_rating: Some(best),
            worst_rating: Some(worst),
            rating_label: None,
        }
    }

    pub fn label(label: &str) -> Self {
        Self {
            rating_label: Some(label.to_string()),
            ..Self::default()
        }
    }

    /// The complete numeric triple `(value, best, worst)`, if present.
    pub fn triple(&self) -> Option<(f64, f64, f64)> {
        Some((self.rating_value?, self.best_rating?, self.worst_rating?))
    }
}

/// Tolerance below which two bucket distances count as a tie.
const TIE_EPSILON: f64 = 1e-9;

/// How a position on the unit rating scale becomes a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NumericPolicy {
    /// Snap to {0, .25, .5, .75, 1}; 0 is FALSE, 1 is TRUE, the rest MIXED.
    #[default]
    FiveBucket,
    /// `p <= false_max` is FALSE, `p >= true_min` is TRUE, otherwise MIXED.
    Threshold { false_max: f64, true_min: f64 },
}

const BUCKETS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

impl NumericPolicy {
    pub fn verdict_for(&self, p: f64) -> Verdict {
        match *self {
            NumericPolicy::FiveBucket => {
                let bucket = snap_to_bucket(p);
                if bucket == 1.0 {
                    Verdict::True
                } else if bucket == 0.0 {
                    Verdict::False
                } else {
                    Verdict::Mixed
                }
            }
            NumericPolicy::Threshold {
                false_max,
                true_min,
            } => {
                if p >= true_min {
                    Verdict::True
                } else if p <= false_max {
                    Verdict::False
                } else {
                    Verdict::Mixed
                }
            }
        }
    }
}

/// Nearest of the five buckets; ties resolve toward 0.5.
pub fn snap_to_bucket(p: f64) -> f64 {
    let mut best = BUCKETS[0];
    let mut best_dist = (p - best).abs();
    for &bucket in &BUCKETS[1..] {
        let dist = (p - bucket).abs();
        let tie = (dist - best_dist).abs() <= TIE_EPSILON;
        if (dist < best_dist && !tie) || (tie && (bucket - 0.5).abs() < (best - 0.5).abs()) {
            best = bucket;
            best_dist = dist;
        }
    }
    best
}

/// Maps a complete numeric rating onto a verdict with the default policy.
pub fn normalize_numeric(rating: &RatingInfo) -> Result<Verdict, VerdictError> {
    normalize_numeric_with(rating, NumericPolicy::default())
}

pub fn normalize_numeric_with(
    rating: &RatingInfo,
    policy: NumericPolicy,
) -> Result<Verdict, VerdictError> {
    let (value, best, worst) = rating.triple().ok_or(VerdictError::Incomplete)?;
    if best.partial_cmp(&worst) != Some(std::cmp::Ordering::Greater) {
        return Err(VerdictError::DegenerateScale { best, worst });
    }
    if !(worst..=best).contains(&value) {
        return Err(VerdictError::OutOfScale { value, best, worst });
    }
    let p = (value - worst) / (best - worst);
    Ok(policy.verdict_for(p))
}

fn normalize_key(label: &str) -> String {
    label.trim().to_lowercase()
}

/// Case-insensitive label → verdict table, grouped by language.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelLexicon {
    entries: BTreeMap<String, Verdict>,
    by_language: BTreeMap<LanguageCode, BTreeMap<String, Verdict>>,
}

const SEED_LEXICON: &str = include_str!("../data/lexicon.toml");

impl LabelLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Labels for the agencies the crate ships templates for.
    pub fn seed() -> Self {
        Self::from_toml_str(SEED_LEXICON).expect("seed lexicon is valid")
    }

    pub fn insert(
        &mut self,
        language: LanguageCode,
        label: &str,
        verdict: Verdict,
    ) -> Result<(), VerdictError> {
        let key = normalize_key(label);
        if let Some(&existing) = self.entries.get(&key) {
            if existing != verdict {
                return Err(VerdictError::ConflictingLabel {
                    label: key,
                    first: existing,
                    second: verdict,
                });
            }
        }
        self.entries.insert(key.clone(), verdict);
        self.by_language.entry(language).or_default().insert(key, verdict);
        Ok(())
    }

    pub fn lookup(&self, label: &str) -> Option<Verdict> {
        self.entries.get(&normalize_key(label)).copied()
    }

    /// Every `(label, verdict)` pair, labels already normalized.
    pub fn entries(&self) -> impl Iterator<Item = (&str, Verdict)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn languages(&self) -> impl Iterator<Item = &LanguageCode> {
        self.by_language.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `[lang] "label" = "verdict"` tables.
    pub fn from_toml_str(text: &str) -> Result<Self, VerdictError> {
        let raw: BTreeMap<String, BTreeMap<String, String>> =
            toml::from_str(text).map_err(|e| VerdictError::Parse(e.to_string()))?;
        let mut lexicon = Self::new();
        for (lang, labels) in raw {
            let lang =
                LanguageCode::parse(&lang).map_err(|e| VerdictError::Parse(e.to_string()))?;
            for (label, verdict) in labels {
                lexicon.insert(lang.clone(), &label, verdict.parse()?)?;
            }
        }
        Ok(lexicon)
    }

    pub fn load(path: &Path) -> Result<Self, VerdictError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

/// Looks up a textual label; misses are `OTHER`.
pub fn normalize_label(label: &str, lexicon: &LabelLexicon) -> Verdict {
    lexicon.lookup(label).unwrap_or(Verdict::Other)
}

/// Numeric rating first, label second, `OTHER` when neither yields a verdict.
pub fn normalize(rating: &RatingInfo, lexicon: &LabelLexicon) -> Verdict {
    normalize_with(rating, lexicon, NumericPolicy::default())
}

pub fn normalize_with(rating: &RatingInfo, lexicon: &LabelLexicon, policy: NumericPolicy) -> Verdict {
    if rating.triple().is_some() {
        if let Ok(verdict) = normalize_numeric_with(rating, policy) {
            return verdict;
        }
    }
    match &rating.rating_label {
        Some(label) => normalize_label(label, lexicon),
        None => Verdict::Other,
    }
}
