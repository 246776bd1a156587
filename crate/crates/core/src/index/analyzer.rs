use crate::codes::LanguageCode;

/// Tokens shorter than this many characters are dropped.
pub const MIN_TOKEN_CHARS: usize = 2;

/// Lowercases, splits on non-alphanumeric characters and drops short tokens.
/// No stemming or stop-word removal, so the result is the same for every
/// language; `language` is accepted for interface symmetry.
pub fn analyze(text: &str, _language: &LanguageCode) -> Vec<String> {
    tokenize(text)
}

pub(crate) fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().count() >= MIN_TOKEN_CHARS)
        .map(str::to_string)
        .collect()
}
