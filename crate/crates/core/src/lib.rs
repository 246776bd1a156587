//! Fact-check claim search: ClaimReview extraction, verdict normalization,
//! enrichment, an embedded BM25 index, a DAG pipeline runner and corpus
//! statistics.

pub mod codes;
pub mod enrich;
pub mod index;
pub mod ingest;
pub mod pipeline;
pub mod stats;
pub mod verdict;
pub mod workflow;
