use std::collections::BTreeSet;
use std::str::FromStr;

use serde::Deserialize;

use claimsearch::codes::{CountryCode, LanguageCode};
use claimsearch::index::{Filters, Query};
use claimsearch::verdict::Verdict;

/// Raw `/search` parameters. Multi-valued filters are comma-separated.
#[derive(Debug, Clone, Default, Deserialize)]
pub struct SearchParams {
    pub q: Option<String>,
    pub verdict: Option<String>,
    pub lang: Option<String>,
    pub source: Option<String>,
    pub country: Option<String>,
    pub year_from: Option<String>,
    pub year_to: Option<String>,
    pub display_lang: Option<String>,
    pub expand: Option<String>,
    pub page: Option<String>,
    pub page_size: Option<String>,
}

fn list<T: FromStr + Ord>(name: &str, raw: &Option<String>) -> Result<BTreeSet<T>, String>
where
    T::Err: std::fmt::Display,
{
    let Some(raw) = raw else { return Ok(BTreeSet::new()) };
    raw.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<T>().map_err(|e| format!("{name}: {e}")))
        .collect()
}

fn number<T: FromStr>(name: &str, raw: &Option<String>) -> Result<Option<T>, String> {
    raw.as_deref()
        .map(|v| v.trim().parse::<T>().map_err(|_| format!("{name}: {v:?} is not a valid number")))
        .transpose()
}

fn flag(name: &str, raw: &Option<String>) -> Result<bool, String> {
    match raw.as_deref().map(str::trim) {
        None | Some("") | Some("false") | Some("0") => Ok(false),
        Some("true") | Some("1") => Ok(true),
        Some(other) => Err(format!("{name}: {other:?} is not a boolean")),
    }
}

/// Builds a validated [`Query`]; the error text goes into the 400 body.
pub fn parse_search_params(p: &SearchParams, default_page_size: usize) -> Result<Query, String> {
    let text = p.q.as_deref().map(str::trim).unwrap_or_default();
    if text.is_empty() {
        return Err("q must not be empty".into());
    }
    let filters = Filters {
        verdicts: list::<Verdict>("verdict", &p.verdict)?,
        languages: list::<LanguageCode>("lang", &p.lang)?,
        sources: list::<String>("source", &p.source)?,
        countries: list::<CountryCode>("country", &p.country)?,
        year_from: number("year_from", &p.year_from)?,
        year_to: number("year_to", &p.year_to)?,
    };
    let display_language = p
        .display_lang
        .as_deref()
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse::<LanguageCode>().map_err(|e| format!("display_lang: {e}")))
        .transpose()?;
    let query = Query {
        text: text.to_string(),
        filters,
        display_language,
        page: number("page", &p.page)?.unwrap_or(0),
        page_size: number("page_size", &p.page_size)?.unwrap_or(default_page_size),
        expand_entities: flag("expand", &p.expand)?,
    };
    query.validate().map_err(|e| e.to_string())?;
    Ok(query)
}
