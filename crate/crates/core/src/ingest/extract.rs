//! ClaimReview extraction.
//!
//! Sources, in order of preference:
//! 1. JSON-LD `<script type="application/ld+json">` blocks (or a bare JSON
//!    payload),
//! 2. microdata (`itemscope itemtype=".../ClaimReview"`),
//! 3. the template's CSS extraction rules.
//!
//! Microdata items are converted to the same JSON shape as JSON-LD so one
//! field mapping serves both. Rating values are copied verbatim from markup
//! and parsed as numbers; absent ratings stay absent.

use scraper::{ElementRef, Html, Selector};
use serde_json::{Map, Value};
use thiserror::Error;

use super::record::{compute_record_id, parse_date, ClaimRecord};
use super::template::{RuleField, SourceTemplate};
use super::RawDocument;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error("document body is not valid UTF-8")]
    NotUtf8,
    #[error("structured payload is not valid JSON: {0}")]
    BadJson(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extraction {
    pub records: Vec<ClaimRecord>,
    /// Candidates that violated ClaimRecord invariants.
    pub dropped: usize,
    /// JSON-LD blocks that failed to parse and were ignored.
    pub malformed_blocks: usize,
}

/// Raw field values for one candidate review, before validation.
#[derive(Debug, Default)]
struct ReviewFields {
    claim_text: Option<String>,
    claimant: Option<String>,
    review_title: Option<String>,
    review_url: Option<String>,
    date_published: Option<String>,
    rating_value: Option<String>,
    best_rating: Option<String>,
    worst_rating: Option<String>,
    rating_label: Option<String>,
}

pub fn extract_claim_reviews(
    doc: &RawDocument,
    template: &SourceTemplate,
) -> Result<Extraction, ExtractError> {
    let body = std::str::from_utf8(&doc.body).map_err(|_| ExtractError::NotUtf8)?;
    let mut extraction = Extraction::default();

    let (candidates, page_title) = if is_json_payload(&doc.content_type, body) {
        let value: Value =
            serde_json::from_str(body).map_err(|e| ExtractError::BadJson(e.to_string()))?;
        let mut nodes = Vec::new();
        collect_claim_reviews(&value, &mut nodes);
        (nodes.into_iter().map(fields_from_json).collect::<Vec<_>>(), None)
    } else {
        let html = Html::parse_document(body);
        let page_title = select_text(&html, "title");
        let mut nodes = Vec::new();
        for block in json_ld_blocks(&html) {
            match serde_json::from_str::<Value>(&block) {
                Ok(value) => collect_claim_reviews(&value, &mut nodes),
                Err(_) => extraction.malformed_blocks += 1,
            }
        }
        if nodes.is_empty() {
            nodes = microdata_claim_reviews(&html);
        }
        let mut candidates: Vec<ReviewFields> = nodes.into_iter().map(fields_from_json).collect();
        if candidates.is_empty() {
            candidates.extend(fields_from_rules(&html, template));
        }
        (candidates, page_title)
    };

    for fields in candidates {
        match build_record(fields, doc, template, page_title.as_deref()) {
            Some(record) => extraction.records.push(record),
            None => extraction.dropped += 1,
        }
    }
    Ok(extraction)
}

fn is_json_payload(content_type: &str, body: &str) -> bool {
    let media = content_type
        .split(';')
        .next()
        .unwrap_or_default()
        .trim()
        .to_ascii_lowercase();
    if media.ends_with("json") {
        return true;
    }
    media.is_empty() && matches!(body.trim_start().chars().next(), Some('{' | '['))
}

fn collapse_ws(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn non_empty(text: String) -> Option<String> {
    let text = collapse_ws(&text);
    (!text.is_empty()).then_some(text)
}

fn select_text(html: &Html, selector: &str) -> Option<String> {
    let selector = Selector::parse(selector).ok()?;
    let el = html.select(&selector).next()?;
    non_empty(el.text().collect())
}

fn json_ld_blocks(html: &Html) -> Vec<String> {
    let selector = Selector::parse("script[type]").expect("static selector");
    html.select(&selector)
        .filter(|el| {
            el.value()
                .attr("type")
                .is_some_and(|t| t.trim().eq_ignore_ascii_case("application/ld+json"))
        })
        .map(|el| el.text().collect::<String>())
        .collect()
}

fn is_claim_review_type(value: &Value) -> bool {
    let matches = |s: &str| {
        let s = s.trim();
        s == "ClaimReview" || s.ends_with("/ClaimReview") || s.ends_with(":ClaimReview")
    };
    match value {
        Value::String(s) => matches(s),
        Value::Array(items) => items.iter().any(|v| v.as_str().is_some_and(matches)),
        _ => false,
    }
}

/// Depth-first search for ClaimReview objects, in document order.
fn collect_claim_reviews(value: &Value, out: &mut Vec<Value>) {
    match value {
        Value::Object(map) => {
            if map.get("@type").is_some_and(is_claim_review_type) {
                out.push(value.clone());
                return;
            }
            for child in map.values() {
                collect_claim_reviews(child, out);
            }
        }
        Value::Array(items) => {
            for item in items {
                collect_claim_reviews(item, out);
            }
        }
        _ => {}
    }
}

/// First scalar found at `key`, looking through arrays and `@value` wrappers.
fn scalar(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => non_empty(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Array(items) => items.iter().find_map(scalar),
        Value::Object(map) => map.get("@value").and_then(scalar),
        _ => None,
    }
}

fn object(value: &Value) -> Option<&Map<String, Value>> {
    match value {
        Value::Object(map) => Some(map),
        Value::Array(items) => items.iter().find_map(Value::as_object),
        _ => None,
    }
}

fn field(map: &Map<String, Value>, key: &str) -> Option<String> {
    map.get(key).and_then(scalar)
}

/// A person/organization given as a bare string or as an object with `name`.
fn agent_name(value: &Value) -> Option<String> {
    match value {
        Value::Array(items) => items.iter().find_map(agent_name),
        Value::Object(map) => map.get("name").and_then(scalar),
        other => scalar(other),
    }
}

fn fields_from_json(node: Value) -> ReviewFields {
    let Some(map) = node.as_object() else {
        return ReviewFields::default();
    };
    let item = map.get("itemReviewed").and_then(object);
    let rating = map.get("reviewRating").and_then(object);
    ReviewFields {
        claim_text: field(map, "claimReviewed").or_else(|| item.and_then(|i| field(i, "name"))),
        claimant: item.and_then(|i| i.get("author")).and_then(agent_name),
        review_title: field(map, "name").or_else(|| field(map, "headline")),
        review_url: field(map, "url"),
        date_published: field(map, "datePublished"),
        rating_value: rating.and_then(|r| field(r, "ratingValue")),
        best_rating: rating.and_then(|r| field(r, "bestRating")),
        worst_rating: rating.and_then(|r| field(r, "worstRating")),
        rating_label: rating.and_then(|r| field(r, "alternateName")),
    }
}

fn microdata_claim_reviews(html: &Html) -> Vec<Value> {
    let selector = Selector::parse("[itemscope][itemtype]").expect("static selector");
    html.select(&selector)
        .filter(|el| {
            let types: Vec<Value> = el
                .value()
                .attr("itemtype")
                .unwrap_or_default()
                .split_whitespace()
                .map(|t| Value::String(t.to_string()))
                .collect();
            is_claim_review_type(&Value::Array(types))
        })
        .map(microdata_item)
        .collect()
}

/// Converts an itemscope element into a JSON object; the first value of a
/// repeated property wins.
fn microdata_item(el: ElementRef<'_>) -> Value {
    let mut map = Map::new();
    if let Some(types) = el.value().attr("itemtype") {
        map.insert("@type".into(), Value::String(types.trim().to_string()));
    }
    collect_properties(el, &mut map);
    Value::Object(map)
}

fn collect_properties(el: ElementRef<'_>, map: &mut Map<String, Value>) {
    for child in el.children().filter_map(ElementRef::wrap) {
        let scoped = child.value().attr("itemscope").is_some();
        if let Some(names) = child.value().attr("itemprop") {
            let value = if scoped {
                microdata_item(child)
            } else {
                Value::String(property_value(child))
            };
            for name in names.split_whitespace() {
                map.entry(name.to_string()).or_insert_with(|| value.clone());
            }
        }
        if !scoped {
            collect_properties(child, map);
        }
    }
}

fn property_value(el: ElementRef<'_>) -> String {
    let node = el.value();
    if let Some(content) = node.attr("content") {
        return content.to_string();
    }
    let attr = match node.name() {
        "a" | "area" | "link" => Some("href"),
        "audio" | "embed" | "iframe" | "img" | "source" | "track" | "video" => Some("src"),
        "object" => Some("data"),
        "data" | "meter" => Some("value"),
        "time" => Some("datetime"),
        _ => None,
    };
    if let Some(value) = attr.and_then(|a| node.attr(a)) {
        return value.to_string();
    }
    el.text().collect()
}

fn fields_from_rules(html: &Html, template: &SourceTemplate) -> Option<ReviewFields> {
    let mut fields = ReviewFields::default();
    for rule in &template.extraction_rules {
        let slot = match rule.field {
            RuleField::ClaimText => &mut fields.claim_text,
            RuleField::Claimant => &mut fields.claimant,
            RuleField::ReviewTitle => &mut fields.review_title,
            RuleField::ReviewUrl => &mut fields.review_url,
            RuleField::DatePublished => &mut fields.date_published,
            RuleField::RatingValue => &mut fields.rating_value,
            RuleField::BestRating => &mut fields.best_rating,
            RuleField::WorstRating => &mut fields.worst_rating,
            RuleField::RatingLabel => &mut fields.rating_label,
        };
        if slot.is_some() {
            continue;
        }
        let Some(selector) = rule.parsed_selector() else {
            continue;
        };
        *slot = html.select(&selector).find_map(|el| match &rule.attribute {
            Some(attr) => el.value().attr(attr).and_then(|v| non_empty(v.to_string())),
            None => non_empty(el.text().collect()),
        });
    }
    fields.claim_text.is_some().then_some(fields)
}

fn parse_number(text: &Option<String>) -> Option<f64> {
    text.as_deref()?.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn build_record(
    fields: ReviewFields,
    doc: &RawDocument,
    template: &SourceTemplate,
    page_title: Option<&str>,
) -> Option<ClaimRecord> {
    let claim_text = fields.claim_text.map(|t| collapse_ws(&t))?;
    let review_url = match fields.review_url {
        Some(u) => doc.url.join(u.trim()).ok()?,
        None => doc.url.clone(),
    };
    if !matches!(review_url.scheme(), "http" | "https") {
        return None;
    }
    let review_title = fields
        .review_title
        .or_else(|| page_title.map(str::to_string))
        .unwrap_or_default();
    let record = ClaimRecord {
        record_id: compute_record_id(review_url.as_str(), &claim_text),
        claim_text,
        claimant: fields.claimant,
        review_title,
        date_published: fields.date_published.as_deref().and_then(parse_date),
        rating_value: parse_number(&fields.rating_value),
        best_rating: parse_number(&fields.best_rating),
        worst_rating: parse_number(&fields.worst_rating),
        rating_label: fields.rating_label,
        source_id: template.source_id.clone(),
        country: template.country.clone(),
        review_url,
    };
    record.validate().ok()?;
    Some(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::TemplateRegistry;
    use chrono::{TimeZone, Utc};
    use url::Url;

    fn doc(url: &str, content_type: &str, body: &str) -> RawDocument {
        RawDocument {
            url: Url::parse(url).unwrap(),
            fetched_at: Utc.with_ymd_and_hms(2020, 1, 1, 0, 0, 0).unwrap(),
            http_status: 200,
            content_type: content_type.into(),
            body: body.as_bytes().to_vec(),
        }
    }

    fn extract(url: &str, body: &str) -> Extraction {
        let registry = TemplateRegistry::builtin();
        let d = doc(url, "text/html; charset=utf-8", body);
        extract_claim_reviews(&d, registry.match_url(&d.url).unwrap()).unwrap()
    }

    const ONE_BLOCK: &str = r#"<html><head><title>Page</title>
        <script type="application/ld+json">
        {"@context":"https://schema.org","@type":"ClaimReview",
         "url":"https://www.snopes.com/fact-check/x/",
         "claimReviewed":"  Something   false happened ",
         "name":"Did something happen?",
         "datePublished":"2019-04-02",
         "itemReviewed":{"@type":"Claim","author":{"@type":"Person","name":"A. Person"}},
         "reviewRating":{"@type":"Rating","ratingValue":1,"bestRating":"5","worstRating":1,"alternateName":"False"}}
        </script></head><body></body></html>"#;

    #[test]
    fn single_json_ld_block() {
        let out = extract("https://www.snopes.com/fact-check/x/", ONE_BLOCK);
        assert_eq!(out.records.len(), 1);
        let r = &out.records[0];
        assert_eq!(r.claim_text, "Something false happened");
        assert_eq!(r.claimant.as_deref(), Some("A. Person"));
        assert_eq!(r.review_title, "Did something happen?");
        assert_eq!((r.rating_value, r.best_rating, r.worst_rating), (Some(1.0), Some(5.0), Some(1.0)));
        assert_eq!(r.rating_label.as_deref(), Some("False"));
        assert_eq!(r.date_published.unwrap().to_string(), "2019-04-02");
        assert_eq!(r.country.as_str(), "US");
        assert_eq!(r.source_id, "snopes");
        assert_eq!(r.record_id, r.expected_id());
    }

    #[test]
    fn nothing_to_extract() {
        let out = extract("https://fullfact.org/a", "<html><body><p>hello</p></body></html>");
        assert!(out.records.is_empty());
        assert_eq!(out.dropped, 0);
    }

    #[test]
    fn two_blocks_two_ids() {
        let body = r#"<script type="application/ld+json">
            {"@graph":[
              {"@type":"ClaimReview","claimReviewed":"first claim","url":"https://fullfact.org/a"},
              {"@type":["CreativeWork","ClaimReview"],"claimReviewed":"second claim","url":"https://fullfact.org/a"}
            ]}</script>"#;
        let out = extract("https://fullfact.org/a", body);
        assert_eq!(out.records.len(), 2);
        assert_ne!(out.records[0].record_id, out.records[1].record_id);
        // the title falls back to empty when neither markup nor <title> has one
        assert_eq!(out.records[0].review_title, "");
    }

    #[test]
    fn json_ld_wins_over_microdata() {
        let body = format!(
            "{ONE_BLOCK}<div itemscope itemtype=\"http://schema.org/ClaimReview\">\
             <span itemprop=\"claimReviewed\">microdata claim</span></div>"
        );
        let out = extract("https://www.snopes.com/fact-check/x/", &body);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].claim_text, "Something false happened");
    }

    #[test]
    fn microdata_review() {
        let body = r#"<html><head><title>T</title></head><body>
          <article itemscope itemtype="https://schema.org/ClaimReview">
            <link itemprop="url" href="/2019/01/claim-x">
            <h1 itemprop="name">Checagem</h1>
            <time itemprop="datePublished" datetime="2019-01-15">15 jan</time>
            <p itemprop="claimReviewed">Uma alegação qualquer</p>
            <div itemprop="itemReviewed" itemscope itemtype="https://schema.org/Claim">
              <div itemprop="author" itemscope itemtype="https://schema.org/Person">
                <span itemprop="name">Fulano de Tal</span>
              </div>
            </div>
            <div itemprop="reviewRating" itemscope itemtype="https://schema.org/Rating">
              <meta itemprop="ratingValue" content="3">
              <meta itemprop="bestRating" content="5">
              <meta itemprop="worstRating" content="1">
              <span itemprop="alternateName">Exagerado</span>
            </div>
          </article></body></html>"#;
        let out = extract("https://aosfatos.org/noticias/x", body);
        assert_eq!(out.records.len(), 1);
        let r = &out.records[0];
        assert_eq!(r.review_url.as_str(), "https://aosfatos.org/2019/01/claim-x");
        assert_eq!(r.claimant.as_deref(), Some("Fulano de Tal"));
        assert_eq!(r.rating_value, Some(3.0));
        assert_eq!(r.rating_label.as_deref(), Some("Exagerado"));
        assert_eq!(r.review_title, "Checagem");
        assert_eq!(r.country.as_str(), "BR");
    }

    #[test]
    fn template_rules_fallback() {
        let body = r#"<html><head><link rel="canonical" href="https://correctiv.org/faktencheck/z/">
          <title>Faktencheck</title></head><body>
          <h1 class="detail__title">Nein, das stimmt nicht</h1>
          <time datetime="2020-02-03T09:00:00+01:00">3. Februar</time>
          <div class="detail__claim">Eine Behauptung über etwas</div>
          <div class="detail__rating-text">Falsch</div></body></html>"#;
        let out = extract("https://correctiv.org/faktencheck/z/", body);
        assert_eq!(out.records.len(), 1);
        let r = &out.records[0];
        assert_eq!(r.claim_text, "Eine Behauptung über etwas");
        assert_eq!(r.review_title, "Nein, das stimmt nicht");
        assert_eq!(r.rating_label.as_deref(), Some("Falsch"));
        assert_eq!(r.rating_value, None);
        assert_eq!(r.date_published.unwrap().to_string(), "2020-02-03");
    }

    #[test]
    fn invalid_records_are_dropped() {
        let body = r#"<script type="application/ld+json">[
            {"@type":"ClaimReview","claimReviewed":"   "},
            {"@type":"ClaimReview","claimReviewed":"bad scale","reviewRating":{"ratingValue":7,"bestRating":5,"worstRating":1}},
            {"@type":"ClaimReview","claimReviewed":"fine"}
        ]</script>"#;
        let out = extract("https://fullfact.org/b", body);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.dropped, 2);
    }

    #[test]
    fn malformed_block_is_ignored() {
        let body = r#"<script type="application/ld+json">{"@type":"ClaimReview",</script>"#;
        let out = extract("https://fullfact.org/c", body);
        assert!(out.records.is_empty());
        assert_eq!(out.malformed_blocks, 1);
    }

    #[test]
    fn unparseable_bodies() {
        let registry = TemplateRegistry::builtin();
        let t = registry.get("fullfact").unwrap();
        let mut d = doc("https://fullfact.org/a", "application/ld+json", "{not json");
        assert!(matches!(extract_claim_reviews(&d, t), Err(ExtractError::BadJson(_))));
        d.body = vec![0xff, 0xfe, 0x00];
        d.content_type = "text/html".into();
        assert!(matches!(extract_claim_reviews(&d, t), Err(ExtractError::NotUtf8)));
    }

    #[test]
    fn json_payload() {
        let registry = TemplateRegistry::builtin();
        let t = registry.get("politifact").unwrap();
        let d = doc(
            "https://www.politifact.com/api/x",
            "application/json",
            r#"{"@type":"ClaimReview","claimReviewed":"Payload claim","url":"https://www.politifact.com/factchecks/x/","reviewRating":{"alternateName":"Pants on Fire"}}"#,
        );
        let out = extract_claim_reviews(&d, t).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].rating_label.as_deref(), Some("Pants on Fire"));
        assert_eq!(out.records[0].rating_value, None);
    }

    #[test]
    fn extraction_is_idempotent() {
        let a = extract("https://www.snopes.com/fact-check/x/", ONE_BLOCK);
        let b = extract("https://www.snopes.com/fact-check/x/", ONE_BLOCK);
        assert_eq!(a, b);
    }
}
