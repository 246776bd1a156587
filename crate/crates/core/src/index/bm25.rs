//! Okapi BM25.
//!
//! `idf = ln(1 + (N - df + 0.5) / (df + 0.5))`
//! `score = idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))`

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("bm25 precondition violated: {0}")]
pub struct Bm25Error(&'static str);

pub fn idf(df: u64, n: u64) -> f64 {
    let (df, n) = (df as f64, n as f64);
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// Checked per-term BM25 score.
pub fn bm25_score(
    tf: u64,
    df: u64,
    n: u64,
    dl: u64,
    avgdl: f64,
    params: Bm25Params,
) -> Result<f64, Bm25Error> {
    if n < 1 {
        return Err(Bm25Error("corpus size must be at least 1"));
    }
    if df < 1 {
        return Err(Bm25Error("document frequency must be at least 1"));
    }
    if dl < 1 {
        return Err(Bm25Error("document length must be at least 1"));
    }
    if !(avgdl > 0.0 && avgdl.is_finite()) {
        return Err(Bm25Error("average document length must be positive"));
    }
    Ok(term_score(tf, df, n, dl, avgdl, params))
}

pub(crate) fn term_score(tf: u64, df: u64, n: u64, dl: u64, avgdl: f64, params: Bm25Params) -> f64 {
    if tf == 0 {
        return 0.0;
    }
    let tf = tf as f64;
    let norm = params.k1 * (1.0 - params.b + params.b * dl as f64 / avgdl);
    idf(df, n) * tf * (params.k1 + 1.0) / (tf + norm)
}
