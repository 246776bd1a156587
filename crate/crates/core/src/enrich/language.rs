//! Trigram-profile language identification over a closed language set.

use std::sync::OnceLock;

use whatlang::{Detector, Lang};

use crate::codes::LanguageCode;

/// Texts shorter than this (in characters) are never classified.
pub const MIN_DETECTION_CHARS: usize = 20;

/// ISO 639-1 codes the bundled sources publish in.
pub const SUPPORTED_LANGUAGES: [&str; 3] = ["en", "pt", "de"];

const ISO_639_1_TO_3: &[(&str, &str)] = &[
    ("de", "deu"),
    ("en", "eng"),
    ("es", "spa"),
    ("fr", "fra"),
    ("it", "ita"),
    ("nl", "nld"),
    ("pt", "por"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub language: LanguageCode,
    pub confidence: f64,
}

impl Detection {
    fn undetermined() -> Self {
        Self {
            language: LanguageCode::undetermined(),
            confidence: 0.0,
        }
    }
}

pub struct LanguageDetector {
    detector: Detector,
    languages: Vec<(Lang, LanguageCode)>,
}

impl LanguageDetector {
    /// Restricts classification to `codes`; returns `None` when a code has no
    /// trigram profile.
    pub fn new(codes: &[&str]) -> Option<Self> {
        let mut languages = Vec::with_capacity(codes.len());
        for code in codes {
            let code = LanguageCode::parse(code).ok()?;
            let iso3 = ISO_639_1_TO_3
                .iter()
                .find(|(two, _)| *two == code.as_str())?
                .1;
            languages.push((Lang::from_code(iso3)?, code));
        }
        let detector = Detector::with_allowlist(languages.iter().map(|(l, _)| *l).collect());
        Some(Self {
            detector,
            languages,
        })
    }

    pub fn detect(&self, text: &str) -> Detection {
        if text.trim().chars().count() < MIN_DETECTION_CHARS {
            return Detection::undetermined();
        }
        let Some(info) = self.detector.detect(text) else {
            return Detection::undetermined();
        };
        match self.languages.iter().find(|(lang, _)| *lang == info.lang()) {
            Some((_, code)) => Detection {
                language: code.clone(),
                confidence: info.confidence().clamp(0.0, 1.0),
            },
            None => Detection::undetermined(),
        }
    }
}

fn default_detector() -> &'static LanguageDetector {
    static DETECTOR: OnceLock<LanguageDetector> = OnceLock::new();
    DETECTOR.get_or_init(|| {
        LanguageDetector::new(&SUPPORTED_LANGUAGES).expect("supported languages have profiles")
    })
}

/// Classifies `text` as one of [`SUPPORTED_LANGUAGES`] or `und`.
pub fn detect_language(text: &str) -> Detection {
    default_detector().detect(text)
}
