//! Redacted access log with a retention window.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::{Request, State};
use axum::middleware::Next;
use axum::response::Response;
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// One request. Deliberately has no field for the query string, client
/// address or any header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessRecord {
    pub at: DateTime<Utc>,
    pub method: String,
    pub path: String,
    pub status: u16,
    pub duration_ms: f64,
}

pub struct AccessLog {
    path: PathBuf,
    retention: Duration,
    file: Mutex<File>,
}

impl AccessLog {
    pub fn open(path: &Path, retention: Duration) -> std::io::Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            retention,
            file: Mutex::new(file),
        })
    }

    pub fn retention(&self) -> Duration {
        self.retention
    }

    pub fn write(&self, record: &AccessRecord) {
        let Ok(mut line) = serde_json::to_vec(record) else { return };
        line.push(b'\n');
        let mut file = self.file.lock().expect("access log poisoned");
        // Logging is best effort; a full disk must not fail requests.
        let _ = file.write_all(&line);
    }

    /// Drops entries older than the retention window; returns how many.
    pub fn scrub(&self, now: DateTime<Utc>) -> std::io::Result<usize> {
        let mut file = self.file.lock().expect("access log poisoned");
        let removed = scrub_access_log(&self.path, self.retention, now)?;
        *file = OpenOptions::new().append(true).open(&self.path)?;
        Ok(removed)
    }
}

/// Rewrites the log at `path` keeping only entries newer than `now - retention`.
/// Unparseable lines are dropped too.
pub fn scrub_access_log(path: &Path, retention: Duration, now: DateTime<Utc>) -> std::io::Result<usize> {
    let cutoff = now - chrono::Duration::from_std(retention).unwrap_or(chrono::Duration::MAX);
    let mut kept = Vec::new();
    let mut removed = 0;
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        match serde_json::from_str::<AccessRecord>(&line) {
            Ok(r) if r.at >= cutoff => {
                kept.extend_from_slice(line.as_bytes());
                kept.push(b'\n');
            }
            _ => removed += 1,
        }
    }
    let tmp = path.with_extension("scrub.tmp");
    fs::write(&tmp, &kept)?;
    fs::rename(&tmp, path)?;
    Ok(removed)
}

pub(crate) async fn record(State(log): State<Arc<AccessLog>>, request: Request, next: Next) -> Response {
    let started = Instant::now();
    let method = request.method().to_string();
    let path = request.uri().path().to_string();
    let response = next.run(request).await;
    log.write(&AccessRecord {
        at: Utc::now(),
        method,
        path,
        status: response.status().as_u16(),
        duration_ms: started.elapsed().as_secs_f64() * 1000.0,
    });
    response
}
