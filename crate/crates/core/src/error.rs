//! Crate-wide error type. Library code returns `Error`; the CLI wraps it in
//! anyhow for user-facing reports.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("annotation format error at line {line}, column {column}: {message}")]
    AnnotationFormat {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("document id must be non-empty")]
    EmptyDocId,

    #[error("unknown entity label {0:?}")]
    UnknownLabel(String),

    #[error(
        "span {start}..{end} ({label}) out of bounds or inverted for text of length {text_len}"
    )]
    SpanOutOfBounds {
        start: usize,
        end: usize,
        label: String,
        text_len: usize,
    },

    #[error("span {a_start}..{a_end} ({a_label}) overlaps span {b_start}..{b_end} ({b_label})")]
    SpanOverlap {
        a_start: usize,
        a_end: usize,
        a_label: String,
        b_start: usize,
        b_end: usize,
        b_label: String,
    },

    #[error("span {start}..{end}: surface field does not match the covered text")]
    SurfaceMismatch { start: usize, end: usize },

    #[error("cannot parse {label} surface with the configured locale; supported forms: {supported}")]
    TemporalParse { label: String, supported: String },

    #[error("date lies after the reference date {reference}")]
    FutureDate { reference: String },

    #[error("rendered date falls before year 1 (magnitude {magnitude} days)")]
    DateRange { magnitude: u64 },

    #[error("granularity mismatch: {a} vs {b}")]
    GranularityMismatch { a: String, b: String },

    #[error("epsilon must be a finite positive number, got {0}")]
    InvalidEpsilon(f64),

    #[error("location database: {0}")]
    LocationDbSchema(String),

    #[error("location database row {row}: non-numeric value in column {column:?}")]
    LocationDbValue { row: usize, column: String },

    #[error("location database: duplicate name {0:?} (names are case-insensitive)")]
    DuplicateLocation(String),

    #[error("location {0:?} not present in the database")]
    UnknownLocation(String),

    #[error("surrogate pool for {label} is empty")]
    EmptyPool { label: String },

    #[error("document {doc_id:?}: {message}")]
    Policy { doc_id: String, message: String },

    #[error("verification contract violated: {0}")]
    VerifyContract(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
