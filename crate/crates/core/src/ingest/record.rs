use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use url::Url;

use crate::codes::CountryCode;
use crate::verdict::RatingInfo;

/// One extracted fact-check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub record_id: String,
    pub claim_text: String,
    pub claimant: Option<String>,
    pub review_title: String,
    pub review_url: Url,
    pub date_published: Option<NaiveDate>,
    pub rating_value: Option<f64>,
    pub best_rating: Option<f64>,
    pub worst_rating: Option<f64>,
    pub rating_label: Option<String>,
    pub source_id: String,
    pub country: CountryCode,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InvalidRecord {
    #[error("claim text is empty")]
    EmptyClaim,
    #[error("record id does not match (review_url, claim_text)")]
    IdMismatch,
    #[error("rating scale is inconsistent")]
    BadRating,
}

/// Lowercase hex SHA-256 over `review_url + "\n" + claim_text`.
pub fn compute_record_id(review_url: &str, claim_text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(review_url.as_bytes());
    hasher.update(b"\n");
    hasher.update(claim_text.as_bytes());
    hex::encode(hasher.finalize())
}

impl ClaimRecord {
    pub fn expected_id(&self) -> String {
        compute_record_id(self.review_url.as_str(), &self.claim_text)
    }

    pub fn rating(&self) -> RatingInfo {
        RatingInfo {
            rating_value: self.rating_value,
            best_rating: self.best_rating,
            worst_rating: self.worst_rating,
            rating_label: self.rating_label.clone(),
        }
    }

    pub fn year(&self) -> Option<i32> {
        use chrono::Datelike;
        self.date_published.map(|d| d.year())
    }

    /// Rating relations are checked between whichever bounds are present.
    pub fn validate(&self) -> Result<(), InvalidRecord> {
        if self.claim_text.trim().is_empty() {
            return Err(InvalidRecord::EmptyClaim);
        }
        if self.record_id != self.expected_id() {
            return Err(InvalidRecord::IdMismatch);
        }
        let non_finite = [self.rating_value, self.best_rating, self.worst_rating]
            .into_iter()
            .flatten()
            .any(|v| !v.is_finite());
        if non_finite {
            return Err(InvalidRecord::BadRating);
        }
        if let (Some(best), Some(worst)) = (self.best_rating, self.worst_rating) {
            if worst >= best {
                return Err(InvalidRecord::BadRating);
            }
        }
        if let Some(value) = self.rating_value {
            if self.worst_rating.is_some_and(|w| value < w)
                || self.best_rating.is_some_and(|b| value > b)
            {
                return Err(InvalidRecord::BadRating);
            }
        }
        Ok(())
    }
}

const MONTHS: [&str; 12] = [
    "january",
    "february",
    "march",
    "april",
    "may",
    "june",
    "july",
    "august",
    "september",
    "october",
    "november",
    "december",
];

fn month_number(name: &str) -> Option<u32> {
    let name = name.trim_end_matches('.').to_ascii_lowercase();
    if name.len() < 3 {
        return None;
    }
    MONTHS
        .iter()
        .position(|m| *m == name || (name.len() <= 4 && m.starts_with(&name)))
        .map(|i| i as u32 + 1)
}

/// ISO-8601 dates (optionally with a time part) and `Month D, YYYY`.
/// Anything else yields `None`.
pub fn parse_date(text: &str) -> Option<NaiveDate> {
    let text = text.trim();
    if let Some(head) = text.get(..10) {
        let rest = &text[10..];
        if (rest.is_empty() || rest.starts_with('T') || rest.starts_with(' '))
            && head.as_bytes()[4] == b'-'
        {
            if let Ok(date) = NaiveDate::parse_from_str(head, "%Y-%m-%d") {
                return Some(date);
            }
        }
    }
    let mut parts = text.split_whitespace();
    let month = month_number(parts.next()?)?;
    let day: u32 = parts.next()?.strip_suffix(',')?.parse().ok()?;
    let year_part = parts.next()?;
    if parts.next().is_some() || year_part.len() != 4 {
        return None;
    }
    let year: i32 = year_part.parse().ok()?;
    NaiveDate::from_ymd_opt(year, month, day)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_id_is_sha256_of_url_and_claim() {
        assert_eq!(
            compute_record_id("https://a.org/x", "claim"),
            "95a6471e86ac0f7f03a6f14c89fc783b6d1e0d562638b5cad2812b0c5234ab64"
        );
        let id = compute_record_id("https://a.org/x", "claim");
        assert_eq!(id.len(), 64);
        assert!(id.bytes().all(|b| b.is_ascii_hexdigit() && !b.is_ascii_uppercase()));
        assert_ne!(id, compute_record_id("https://a.org/x", "claim "));
        assert_ne!(id, compute_record_id("https://a.org/x\nclaim", ""));
    }

    #[test]
    fn iso_dates() {
        let d = NaiveDate::from_ymd_opt(2016, 3, 1).unwrap();
        assert_eq!(parse_date("2016-03-01"), Some(d));
        assert_eq!(parse_date("2016-03-01T10:22:00+02:00"), Some(d));
        assert_eq!(parse_date(" 2016-03-01 08:00 "), Some(d));
        assert_eq!(parse_date("2016-02-30"), None);
        assert_eq!(parse_date("2016-03-011"), None);
    }

    #[test]
    fn month_name_dates() {
        let d = NaiveDate::from_ymd_opt(2019, 9, 5).unwrap();
        assert_eq!(parse_date("September 5, 2019"), Some(d));
        assert_eq!(parse_date("Sep 5, 2019"), Some(d));
        assert_eq!(parse_date("Sept. 5, 2019"), Some(d));
        assert_eq!(parse_date("september 5, 2019"), Some(d));
        assert_eq!(parse_date("September 31, 2019"), None);
        assert_eq!(parse_date("5 September 2019"), None);
        assert_eq!(parse_date("yesterday"), None);
        assert_eq!(parse_date(""), None);
    }
}
