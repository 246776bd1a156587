//! Randomized corpora and a linear-scan BM25 reference scorer.
//!
//! The scorer shares no code with the index: it re-tokenizes raw text on
//! every call and recomputes document frequencies by scanning the corpus.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use chrono::NaiveDate;
use rand::rngs::StdRng;
use rand::seq::IndexedRandom;
use rand::Rng;
use url::Url;

use claimsearch::codes::{CountryCode, LanguageCode};
use claimsearch::enrich::EnrichedClaim;
use claimsearch::index::{Filters, Query};
use claimsearch::ingest::{compute_record_id, ClaimRecord};
use claimsearch::verdict::Verdict;

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;

const VOCAB: [&str; 14] = [
    "crime", "germany", "refugees", "migrants", "vaccine", "school", "budget", "minister", "wage", "amazon",
    "greta", "thunberg", "train", "lunch",
];
const CLAIMANTS: [&str; 4] = ["Donald Trump", "Greta Thunberg", "Budget Office", "Minister Silva"];
const LANGS: [&str; 3] = ["en", "pt", "de"];
const COUNTRIES: [&str; 3] = ["US", "BR", "DE"];
const SOURCES: [&str; 3] = ["politifact", "lupa", "correctiv"];
const VERDICTS: [Verdict; 4] = [Verdict::True, Verdict::False, Verdict::Mixed, Verdict::Other];

fn words(rng: &mut StdRng, max: usize) -> String {
    let n = rng.random_range(1..=max);
    (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

pub fn claim(i: usize, claim_text: &str, title: &str, claimant: Option<&str>) -> EnrichedClaim {
    let url = format!("https://www.politifact.com/factchecks/{i}/");
    EnrichedClaim {
        base: ClaimRecord {
            record_id: compute_record_id(&url, claim_text),
            claim_text: claim_text.into(),
            claimant: claimant.map(str::to_string),
            review_title: title.into(),
            review_url: Url::parse(&url).unwrap(),
            date_published: None,
            rating_value: None,
            best_rating: None,
            worst_rating: None,
            rating_label: None,
            source_id: "politifact".into(),
            country: CountryCode::parse("US").unwrap(),
        },
        verdict: Verdict::Other,
        language: LanguageCode::parse("en").unwrap(),
        entities: Vec::new(),
        translations: BTreeMap::new(),
        year: None,
    }
}

pub fn random_corpus(rng: &mut StdRng) -> Vec<EnrichedClaim> {
    let n = rng.random_range(1..=20);
    (0..n)
        .map(|i| {
            // Punctuation and case noise exercise the tokenizer on both sides.
            let text = format!("{}, {}!", words(rng, 12), words(rng, 3).to_uppercase());
            let title = words(rng, 6);
            let claimant = rng.random_bool(0.6).then(|| *CLAIMANTS.choose(rng).unwrap());
            let mut c = claim(i, &text, &title, claimant);
            c.verdict = *VERDICTS.choose(rng).unwrap();
            c.language = LanguageCode::parse(LANGS.choose(rng).unwrap()).unwrap();
            c.base.country = CountryCode::parse(COUNTRIES.choose(rng).unwrap()).unwrap();
            c.base.source_id = SOURCES.choose(rng).unwrap().to_string();
            if rng.random_bool(0.8) {
                let year = rng.random_range(2015..=2021);
                c.base.date_published = NaiveDate::from_ymd_opt(year, 6, 1);
                c.year = Some(year);
            }
            c
        })
        .collect()
}

pub fn random_query(rng: &mut StdRng) -> Query {
    let mut text = words(rng, 3);
    if rng.random_bool(0.2) {
        text.push_str(" zebra");
    }
    if rng.random_bool(0.2) {
        text.push_str(" trump");
    }
    let mut q = Query::new(&text).with_page(0, 100);
    let f = &mut q.filters;
    if rng.random_bool(0.25) {
        f.verdicts = BTreeSet::from([*VERDICTS.choose(rng).unwrap()]);
    }
    if rng.random_bool(0.25) {
        f.languages = BTreeSet::from([LanguageCode::parse(LANGS.choose(rng).unwrap()).unwrap()]);
    }
    if rng.random_bool(0.2) {
        f.countries = BTreeSet::from([CountryCode::parse(COUNTRIES.choose(rng).unwrap()).unwrap()]);
    }
    if rng.random_bool(0.2) {
        f.sources = BTreeSet::from([SOURCES.choose(rng).unwrap().to_string()]);
    }
    if rng.random_bool(0.2) {
        f.year_from = Some(rng.random_range(2015..=2021));
    }
    if rng.random_bool(0.2) {
        f.year_to = Some(f.year_from.unwrap_or(2015) + rng.random_range(0..4));
    }
    q
}

/// Lowercase, split on anything that is not a letter or digit, keep tokens
/// of two or more characters.
pub fn reference_tokens(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    for c in text.chars().flat_map(char::to_lowercase).chain([' ']) {
        if c.is_alphanumeric() {
            current.push(c);
        } else {
            if current.chars().count() >= 2 {
                out.push(current.clone());
            }
            current.clear();
        }
    }
    out
}

fn passes(c: &EnrichedClaim, f: &Filters) -> bool {
    (f.verdicts.is_empty() || f.verdicts.contains(&c.verdict))
        && (f.languages.is_empty() || f.languages.contains(&c.language))
        && (f.sources.is_empty() || f.sources.contains(&c.base.source_id))
        && (f.countries.is_empty() || f.countries.contains(&c.base.country))
        && f.year_from.is_none_or(|y| c.year.is_some_and(|cy| cy >= y))
        && f.year_to.is_none_or(|y| c.year.is_some_and(|cy| cy <= y))
}

fn field_score(term: &str, docs: &[Vec<String>], i: usize) -> f64 {
    let n = docs.len() as f64;
    let tf = docs[i].iter().filter(|t| *t == term).count() as f64;
    if tf == 0.0 {
        return 0.0;
    }
    let df = docs.iter().filter(|d| d.iter().any(|t| t == term)).count() as f64;
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let dl = docs[i].len() as f64;
    let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
    idf * tf * (K1 + 1.0) / (tf + K1 * (1.0 - B + B * dl / avgdl))
}

/// `(position in corpus, score)` for every match, best first.
pub fn brute_force(corpus: &[EnrichedClaim], q: &Query) -> Vec<(usize, f64)> {
    let text: Vec<Vec<String>> = corpus
        .iter()
        .map(|c| reference_tokens(&format!("{} {}", c.base.claim_text, c.base.review_title)))
        .collect();
    let claimant: Vec<Vec<String>> = corpus
        .iter()
        .map(|c| reference_tokens(c.base.claimant.as_deref().unwrap_or("")))
        .collect();
    let terms: BTreeSet<String> = reference_tokens(&q.text).into_iter().collect();
    let mut hits: Vec<(usize, f64)> = (0..corpus.len())
        .filter(|&i| terms.iter().any(|t| text[i].contains(t) || claimant[i].contains(t)))
        .filter(|&i| passes(&corpus[i], &q.filters))
        .map(|i| {
            let mut score = 0.0;
            for t in &terms {
                score += field_score(t, &text, i);
                score += field_score(t, &claimant, i);
            }
            (i, score)
        })
        .collect();
    hits.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    hits
}
