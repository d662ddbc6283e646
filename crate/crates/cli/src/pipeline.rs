//! Batch de-identification: load documents, rewrite them in parallel, and
//! write sanitized text, replacement sidecars, and audit reports.
//!
//! The run is all-or-nothing under the strict policy: every document is
//! processed in memory first and files appear only if the whole batch
//! succeeded, each written to a temporary name and renamed into place.
//! Under the lenient policy, documents that still fail are skipped and
//! reported, and the successes are written.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use deid_core::annotation::AnnotatedDocument;
use deid_core::dpcore::RandomSource;
use deid_core::geoloc::LocationDb;
use deid_core::rewrite::{
    audit_report, sanitize_document, sanitized_annotations, SanitizeOptions, SanitizedDocument,
    SurrogatePool,
};
use deid_core::EntityLabel;

use crate::settings::RunSettings;

/// Runs one batch and returns the number of documents that failed (always
/// zero under the strict policy, which aborts instead).
pub fn run_deid(settings: &RunSettings) -> Result<usize> {
    let inputs = discover_inputs(&settings.input)?;
    let docs = load_documents(&inputs)?;

    let db = match &settings.locations_db {
        Some(path) => Some(load_location_db(path, &settings.feature_columns)?),
        None => None,
    };
    if db.is_none() {
        if let Some(doc) = docs
            .iter()
            .find(|d| d.spans.iter().any(|s| s.label == EntityLabel::Loc))
        {
            bail!(
                "document {:?} has LOC spans but no location database is configured \
                 (--locations-db)",
                doc.doc_id
            );
        }
    }

    let options = SanitizeOptions {
        epsilon: settings.epsilon,
        locale: settings.locale,
        restore_order: settings.restore_order,
        age_cap: settings.age_cap,
        k: settings.k,
        geo_threshold_km: settings.geo_threshold_km,
        policy: settings.policy,
    };
    let pools = SurrogatePool::default();

    // One independent RNG stream per document id: results do not depend on
    // scheduling or worker count.
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers.unwrap_or(0))
        .build()
        .context("building worker pool")?;
    let results: Vec<(String, deid_core::Result<SanitizedDocument>)> = pool.install(|| {
        docs.par_iter()
            .map(|doc| {
                let mut rng = match settings.seed {
                    Some(master) => RandomSource::for_document(master, &doc.doc_id),
                    None => RandomSource::from_entropy(),
                };
                let out = sanitize_document(doc.clone(), db.as_ref(), &pools, &options, &mut rng);
                (doc.doc_id.clone(), out)
            })
            .collect()
    });

    let failures: Vec<(&String, &deid_core::Error)> = results
        .iter()
        .filter_map(|(id, r)| r.as_ref().err().map(|e| (id, e)))
        .collect();
    if !failures.is_empty() && settings.policy == deid_core::Policy::Strict {
        for (id, err) in &failures {
            eprintln!("error: document {id:?}: {err}");
        }
        bail!(
            "{} of {} documents failed under the strict policy; no output written",
            failures.len(),
            results.len()
        );
    }
    for (id, err) in &failures {
        eprintln!("warning: document {id:?} skipped: {err}");
    }

    fs::create_dir_all(&settings.output)
        .with_context(|| format!("creating output directory {}", settings.output.display()))?;
    let mut summaries = Vec::new();
    for (id, result) in &results {
        let Ok(sdoc) = result else { continue };
        write_outputs(&settings.output, sdoc)?;
        summaries.push(format!(
            "{}: {} replacements, {} dp keys, {} warnings",
            id,
            sdoc.replacements.len(),
            sdoc.budget.dp_key_count,
            sdoc.warnings.len()
        ));
    }
    summaries.sort();
    for line in &summaries {
        println!("{line}");
    }
    println!(
        "processed {} documents ({} failed)",
        results.len() - failures.len(),
        failures.len()
    );
    Ok(failures.len())
}

/// Input files: one annotation JSON, or every `.json` in a directory in
/// name order.
fn discover_inputs(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if input.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(input)
            .with_context(|| format!("reading input directory {}", input.display()))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|e| e == "json"))
            .collect();
        files.sort();
        return Ok(files);
    }
    bail!("input path {} does not exist", input.display());
}

fn load_documents(paths: &[PathBuf]) -> Result<Vec<AnnotatedDocument>> {
    let mut docs = Vec::with_capacity(paths.len());
    let mut seen_ids: BTreeSet<String> = BTreeSet::new();
    let mut seen_files: BTreeSet<String> = BTreeSet::new();
    for path in paths {
        let raw = fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let doc = AnnotatedDocument::parse_json(&raw)
            .with_context(|| format!("parsing {}", path.display()))?;
        if !seen_ids.insert(doc.doc_id.clone()) {
            bail!(
                "duplicate doc_id {:?} (second occurrence in {}); outputs would collide",
                doc.doc_id,
                path.display()
            );
        }
        let base = file_base(&doc.doc_id);
        if !seen_files.insert(base.clone()) {
            bail!(
                "doc_ids {:?} and another both map to output name {:?}; rename one",
                doc.doc_id,
                base
            );
        }
        docs.push(doc);
    }
    Ok(docs)
}

pub fn load_location_db(path: &Path, feature_columns: &[String]) -> Result<LocationDb> {
    let file = fs::File::open(path)
        .with_context(|| format!("opening location database {}", path.display()))?;
    let db = LocationDb::load_csv(file, feature_columns)
        .with_context(|| format!("loading location database {}", path.display()))?;
    Ok(db)
}

/// Output base name for a document id: anything outside [A-Za-z0-9._-]
/// becomes '_' so ids cannot escape the output directory.
fn file_base(doc_id: &str) -> String {
    doc_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn write_outputs(out_dir: &Path, sdoc: &SanitizedDocument) -> Result<()> {
    let base = file_base(&sdoc.doc_id);
    write_atomic(out_dir, &format!("{base}.txt"), sdoc.text.as_bytes())?;
    let sidecar = sanitized_annotations(sdoc).to_json_string();
    write_atomic(
        out_dir,
        &format!("{base}.annotations.json"),
        sidecar.as_bytes(),
    )?;
    let audit = audit_report(sdoc);
    let mut audit_json =
        serde_json::to_string_pretty(&audit).context("serializing audit report")?;
    audit_json.push('\n');
    write_atomic(out_dir, &format!("{base}.audit.json"), audit_json.as_bytes())?;
    Ok(())
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let tmp = dir.join(format!(".tmp-{name}"));
    let final_path = dir.join(name);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, &final_path)
        .with_context(|| format!("renaming into {}", final_path.display()))?;
    Ok(())
}
