//! Packs a directory of saved pages into a fixture archive.
//!
//! Usage: pack_archive <pages.toml> <archive.jsonl>
//!
//! Page paths in the manifest are relative to the manifest's directory.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use claimsearch::ingest::{write_archive, RawDocument};
use serde::Deserialize;
use url::Url;

#[derive(Deserialize)]
struct Manifest {
    fetched_at: DateTime<Utc>,
    #[serde(default)]
    truncated_tail: bool,
    pages: Vec<Page>,
}

#[derive(Deserialize)]
struct Page {
    file: PathBuf,
    url: Url,
    #[serde(default = "html")]
    content_type: String,
    #[serde(default = "ok")]
    http_status: u16,
}

fn html() -> String {
    "text/html; charset=utf-8".into()
}

fn ok() -> u16 {
    200
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let [_, manifest_path, out_path] = args.as_slice() else {
        return Err("usage: pack_archive <pages.toml> <archive.jsonl>".into());
    };
    let manifest_path = Path::new(manifest_path);
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let manifest: Manifest = toml::from_str(&std::fs::read_to_string(manifest_path)?)?;

    let mut documents = Vec::new();
    for page in manifest.pages {
        documents.push(RawDocument {
            url: page.url,
            fetched_at: manifest.fetched_at,
            http_status: page.http_status,
            content_type: page.content_type,
            body: std::fs::read(base.join(&page.file))?,
        });
    }
    let mut bytes = Vec::new();
    write_archive(&documents, &mut bytes)?;
    if manifest.truncated_tail {
        let first_line = bytes.split(|b| *b == b'\n').next().unwrap_or_default().to_vec();
        bytes.extend_from_slice(&first_line[..first_line.len() / 2]);
        bytes.push(b'\n');
    }
    std::fs::write(out_path, bytes)?;
    eprintln!("packed {} documents into {out_path}", documents.len());
    Ok(())
}
