//! Convenience subcommands: a pattern-based recognizer producing
//! annotation JSON from raw text, and a location-database inspector.

use std::path::Path;

use anyhow::{Context, Result};

use deid_core::annotation::{pattern_recognize, AnnotatedDocument};
use deid_core::LocaleConfig;

use crate::pipeline::load_location_db;

/// Reads a text file, recognizes date/age/telephone patterns, and returns
/// the result as annotation JSON.
pub fn run_recognize(
    input: &Path,
    doc_id: Option<String>,
    locale: &LocaleConfig,
) -> Result<String> {
    let text =
        std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let doc_id = doc_id.unwrap_or_else(|| {
        input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "document".to_string())
    });
    let spans = pattern_recognize(&text, locale);
    let doc = AnnotatedDocument {
        doc_id,
        text,
        spans,
    };
    Ok(doc.to_json_string())
}

/// Prints a summary of a location database: size, feature columns with
/// their raw ranges, normalization warnings, and the place names.
pub fn run_inspect_db(path: &Path, feature_columns: &[String]) -> Result<String> {
    let db = load_location_db(path, feature_columns)?;
    let mut out = String::new();
    out.push_str(&format!("records: {}\n", db.len()));
    out.push_str(&format!("features: {}\n", db.feature_names().join(", ")));
    for (name, (lo, hi)) in db.feature_names().iter().zip(db.bounds()) {
        out.push_str(&format!("  {name}: raw range [{lo}, {hi}]\n"));
    }
    for w in db.warnings() {
        out.push_str(&format!("warning: {w}\n"));
    }
    const SHOWN: usize = 20;
    for record in db.records().iter().take(SHOWN) {
        out.push_str(&format!(
            "  {} ({:.4}, {:.4})\n",
            record.name, record.lat, record.lon
        ));
    }
    if db.len() > SHOWN {
        out.push_str(&format!("  ... and {} more\n", db.len() - SHOWN));
    }
    Ok(out)
}
