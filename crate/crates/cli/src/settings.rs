//! Pipeline configuration: a JSON config file merged with command-line
//! overrides. Flags always win over the file; defaults fill the rest.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use serde::Deserialize;

use deid_core::dpcore::Epsilon;
use deid_core::{DayMonthOrder, Language, LocaleConfig, Policy};

/// On-disk configuration. Every key is optional; unknown keys are errors.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub language: Option<Language>,
    pub day_month_order: Option<DayMonthOrder>,
    pub reference_date: Option<NaiveDate>,
    pub locations_db: Option<PathBuf>,
    pub feature_columns: Option<Vec<String>>,
    pub k: Option<usize>,
    pub geo_threshold_km: Option<f64>,
    pub restore_order: Option<bool>,
    pub age_cap: Option<u64>,
    pub policy: Option<Policy>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl FileConfig {
    /// Loads and validates a config file. Relative paths inside the file
    /// resolve against the file's own directory.
    pub fn load(path: &Path) -> Result<FileConfig> {
        let raw = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let mut config: FileConfig = serde_json::from_str(&raw)
            .with_context(|| format!("parsing config file {}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.locations_db = config.locations_db.map(|p| resolve(base, p));
        config.input = config.input.map(|p| resolve(base, p));
        config.output = config.output.map(|p| resolve(base, p));
        Ok(config)
    }
}

fn resolve(base: &Path, p: PathBuf) -> PathBuf {
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

/// Flag-level overrides, already parsed by the argument parser. `None`
/// means the flag was not given.
#[derive(Debug, Default)]
pub struct Overrides {
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub language: Option<Language>,
    pub day_month_order: Option<DayMonthOrder>,
    pub reference_date: Option<NaiveDate>,
    pub locations_db: Option<PathBuf>,
    pub feature_columns: Option<Vec<String>>,
    pub k: Option<usize>,
    pub geo_threshold_km: Option<f64>,
    pub restore_order: bool,
    pub age_cap: Option<u64>,
    pub policy: Option<Policy>,
    pub input: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
}

/// Fully resolved settings for one `deid` run.
#[derive(Debug)]
pub struct RunSettings {
    pub epsilon: Epsilon,
    pub seed: Option<u64>,
    pub locale: LocaleConfig,
    pub locations_db: Option<PathBuf>,
    pub feature_columns: Vec<String>,
    pub k: usize,
    pub geo_threshold_km: f64,
    pub restore_order: bool,
    pub age_cap: Option<u64>,
    pub policy: Policy,
    pub input: PathBuf,
    pub output: PathBuf,
    pub workers: Option<usize>,
}

pub fn resolve_settings(file: FileConfig, flags: Overrides) -> Result<RunSettings> {
    let epsilon_raw = flags.epsilon.or(file.epsilon).unwrap_or(1.0);
    let epsilon = Epsilon::new(epsilon_raw)
        .with_context(|| format!("invalid epsilon {epsilon_raw}"))?;
    let language = flags.language.or(file.language).unwrap_or(Language::En);
    let day_month_order = flags
        .day_month_order
        .or(file.day_month_order)
        .unwrap_or(DayMonthOrder::Dmy);
    let reference_date = flags
        .reference_date
        .or(file.reference_date)
        .unwrap_or_else(|| chrono::Utc::now().date_naive());
    let k = flags.k.or(file.k).unwrap_or(deid_core::rewrite::DEFAULT_K);
    if k == 0 {
        bail!("k must be at least 1");
    }
    let geo_threshold_km = flags
        .geo_threshold_km
        .or(file.geo_threshold_km)
        .unwrap_or(deid_core::rewrite::DEFAULT_GEO_THRESHOLD_KM);
    if geo_threshold_km.is_nan() || geo_threshold_km <= 0.0 {
        bail!("geo threshold must be positive (got {geo_threshold_km})");
    }
    let locations_db = flags.locations_db.or(file.locations_db);
    let feature_columns = flags
        .feature_columns
        .or(file.feature_columns)
        .unwrap_or_default();
    if locations_db.is_some() && feature_columns.is_empty() {
        bail!("a locations database needs at least one feature column (--features)");
    }
    let input = flags
        .input
        .or(file.input)
        .context("no input path: pass --in or set \"input\" in the config")?;
    let output = flags
        .output
        .or(file.output)
        .context("no output path: pass --out or set \"output\" in the config")?;
    Ok(RunSettings {
        epsilon,
        seed: flags.seed.or(file.seed),
        locale: LocaleConfig::new(language, day_month_order, reference_date),
        locations_db,
        feature_columns,
        k,
        geo_threshold_km,
        restore_order: if flags.restore_order {
            true
        } else {
            file.restore_order.unwrap_or(false)
        },
        age_cap: flags.age_cap.or(file.age_cap),
        policy: flags.policy.or(file.policy).unwrap_or(Policy::Strict),
        input,
        output,
        workers: flags.workers.or(file.workers),
    })
}
