//! De-identification of annotated clinical text with metric-differential-
//! privacy surrogate generation.
//!
//! The crate is organized as a pipeline over standoff-annotated documents:
//!
//! - [`annotation`] loads and validates documents (text plus labeled
//!   character-offset spans) and offers a small locale-aware pattern
//!   recognizer for producing annotations from raw text.
//! - [`temporal`] parses date and age surfaces into (magnitude, format)
//!   pairs measured in units before a reference date, and renders
//!   magnitudes back into the exact surface format they came from.
//! - [`dpcore`] holds the privacy primitives: validated budgets, the
//!   seeded random source, inverse-CDF Laplace noise, per-key budget
//!   allocation, and the memo table that keeps one surrogate per value.
//! - [`geoloc`] implements the location mechanism: a feature-normalized
//!   place database, candidate sets gated by great-circle distance, and
//!   the score-based exponential draw over feature distances.
//! - [`rewrite`] orchestrates whole documents: plans every span, draws
//!   memoized surrogates, optionally restores date order, splices the
//!   rendered surfaces, and emits replacement maps and surface-free
//!   audit reports.
//! - [`verify`] checks the privacy inequalities analytically on small
//!   domains, runs distributional tests on the sampler, and ships
//!   negative controls that a sound checker must reject.
//!
//! Randomness is deterministic given a master seed and a document id, so
//! batch runs reproduce byte-for-byte regardless of scheduling.

pub mod annotation;
pub mod config;
pub mod dpcore;
pub mod error;
pub mod geoloc;
pub mod rewrite;
pub mod temporal;
pub mod verify;

pub use annotation::{pattern_recognize, AnnotatedDocument, EntityLabel, EntitySpan};
pub use config::{DayMonthOrder, Language, LocaleConfig, Policy};
pub use dpcore::{allocate_budget, BudgetLedger, Epsilon, MemoTable, RandomSource};
pub use error::{Error, Result};
pub use geoloc::{sanitize_location, LocationDb, LocationRecord};
pub use rewrite::{
    audit_report, sanitize_document, sanitized_annotations, AuditReport, SanitizedDocument,
    SanitizeOptions, SurrogatePool,
};
pub use verify::PrivacyCheckResult;
