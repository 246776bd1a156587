//! Newline-delimited fixture archives.
//!
//! Each line is one JSON object:
//! `{"url", "fetched_at", "http_status", "content_type", "body_base64"}`.

use std::io::Write;
use std::path::Path;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use super::RawDocument;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("archive {path} not found")]
    Missing { path: String },
    #[error("reading archive: {0}")]
    Io(#[from] std::io::Error),
    #[error("unreadable archive header: {0}")]
    UnreadableHeader(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ArchiveLoad {
    pub documents: Vec<RawDocument>,
    /// Lines that were not well-formed records.
    pub skipped: usize,
}

#[derive(Serialize, Deserialize)]
struct ArchiveLine {
    url: String,
    fetched_at: DateTime<Utc>,
    http_status: u16,
    content_type: String,
    body_base64: String,
}

pub fn load_archive(path: &Path) -> Result<ArchiveLoad, ArchiveError> {
    if !path.exists() {
        return Err(ArchiveError::Missing {
            path: path.display().to_string(),
        });
    }
    let bytes = std::fs::read(path)?;
    parse_archive(&bytes, Utc::now())
}

/// Parses archive bytes; `now` bounds the accepted `fetched_at` values.
pub fn parse_archive(bytes: &[u8], now: DateTime<Utc>) -> Result<ArchiveLoad, ArchiveError> {
    let text = std::str::from_utf8(bytes).map_err(|e| {
        ArchiveError::UnreadableHeader(format!("archive is not UTF-8 text ({e})"))
    })?;
    let mut load = ArchiveLoad::default();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        match parse_line(line, now) {
            Some(doc) => load.documents.push(doc),
            None => load.skipped += 1,
        }
    }
    Ok(load)
}

fn parse_line(line: &str, now: DateTime<Utc>) -> Option<RawDocument> {
    let raw: ArchiveLine = serde_json::from_str(line).ok()?;
    let doc = RawDocument {
        url: Url::parse(&raw.url).ok()?,
        fetched_at: raw.fetched_at,
        http_status: raw.http_status,
        content_type: raw.content_type,
        body: BASE64.decode(raw.body_base64.as_bytes()).ok()?,
    };
    doc.validate(now).ok()?;
    Some(doc)
}

pub fn write_archive<W: Write>(documents: &[RawDocument], mut out: W) -> std::io::Result<()> {
    for doc in documents {
        let line = ArchiveLine {
            url: doc.url.to_string(),
            fetched_at: doc.fetched_at,
            http_status: doc.http_status,
            content_type: doc.content_type.clone(),
            body_base64: BASE64.encode(&doc.body),
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
