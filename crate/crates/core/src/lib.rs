//! Chart-to-table extraction engine.
//!
//! - [`pdf`]: figure detection in PDF documents by caption anchoring, and rendering.
//! - [`vlm`]: vision-language model clients, prompts, preprocessing, mock backends.
//! - [`table`]: reply parsing, numeric normalization, per-row confidence, cell edits.
//! - [`metrics`]: recall and permutation-invariant RMSF1 under relative tolerance.
//! - [`bench`]: dataset manifests, ground-truth patches, evaluation runs, bootstrap CIs.
//! - [`export`]: CSV, TSV, JSON, LaTeX, R and XLSX writers.

pub mod archive;
pub mod bench;
pub mod export;
pub mod geometry;
pub mod glyphs;
pub mod metrics;
pub mod pdf;
pub mod table;
pub mod vlm;
