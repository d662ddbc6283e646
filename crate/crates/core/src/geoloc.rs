//! Location surrogates drawn in feature space.
//!
//! A location database carries one record per place: geographic coordinates
//! plus a vector of demographic features, min-max normalized per column so
//! every feature weighs equally in the Euclidean distance. Geographic
//! distance only gates which places are candidates; the draw itself is an
//! exponential mechanism over feature distance, so the surrogate resembles
//! the original place statistically rather than geographically.

use serde::Serialize;
use std::collections::HashMap;
use std::io::Read;

use crate::dpcore::{canonical_key, Epsilon, RandomSource};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct LocationRecord {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
    /// Normalized to [0, 1] per feature across the database.
    pub features: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LocationDb {
    records: Vec<LocationRecord>,
    feature_names: Vec<String>,
    /// Raw (min, max) per feature; reproduces raw values on demand.
    bounds: Vec<(f64, f64)>,
    warnings: Vec<String>,
    by_name: HashMap<String, usize>,
}

/// Mean Earth radius, kilometers.
const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Great-circle distance between two (lat, lon) points in decimal degrees.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

impl LocationDb {
    /// Loads a CSV with header columns `name, lat, lon` plus the requested
    /// feature columns, then min-max normalizes each feature. A constant
    /// column normalizes to zero and records a warning instead of failing.
    pub fn load_csv(reader: impl Read, feature_columns: &[String]) -> Result<Self> {
        let mut csv_reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = csv_reader
            .headers()
            .map_err(|e| Error::LocationDbSchema(format!("unreadable header: {e}")))?
            .clone();
        let col = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::LocationDbSchema(format!("missing column {name:?}")))
        };
        let name_idx = col("name")?;
        let lat_idx = col("lat")?;
        let lon_idx = col("lon")?;
        let feature_idx: Vec<usize> = feature_columns
            .iter()
            .map(|c| col(c))
            .collect::<Result<_>>()?;

        let mut names = Vec::new();
        let mut coords = Vec::new();
        let mut raw_features: Vec<Vec<f64>> = Vec::new();
        for record in csv_reader.records() {
            let record = record?;
            let row = record
                .position()
                .map(|p| p.line() as usize)
                .unwrap_or(names.len() + 2);
            let numeric = |idx: usize| -> Result<f64> {
                let field = record.get(idx).unwrap_or("");
                field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::LocationDbValue {
                        row,
                        column: headers.get(idx).unwrap_or("?").to_string(),
                    })
            };
            let name = record
                .get(name_idx)
                .filter(|n| !n.is_empty())
                .ok_or_else(|| Error::LocationDbSchema(format!("row {row}: empty name")))?
                .to_string();
            names.push(name);
            coords.push((numeric(lat_idx)?, numeric(lon_idx)?));
            raw_features.push(feature_idx.iter().map(|&i| numeric(i)).collect::<Result<_>>()?);
        }
        Self::from_raw(names, coords, feature_columns.to_vec(), raw_features)
    }

    /// Builds a database from raw (unnormalized) feature rows.
    pub fn from_raw(
        names: Vec<String>,
        coords: Vec<(f64, f64)>,
        feature_names: Vec<String>,
        raw_features: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let n_features = feature_names.len();
        let mut bounds = vec![(f64::INFINITY, f64::NEG_INFINITY); n_features];
        for row in &raw_features {
            for (f, &v) in row.iter().enumerate() {
                bounds[f].0 = bounds[f].0.min(v);
                bounds[f].1 = bounds[f].1.max(v);
            }
        }
        let mut warnings = Vec::new();
        for (f, &(lo, hi)) in bounds.iter().enumerate() {
            if raw_features.is_empty() {
                break;
            }
            if lo == hi {
                warnings.push(format!(
                    "feature {:?} is constant across the database; it contributes nothing to distances",
                    feature_names[f]
                ));
            }
        }
        let normalized: Vec<Vec<f64>> = raw_features
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(f, &v)| {
                        let (lo, hi) = bounds[f];
                        if hi > lo {
                            (v - lo) / (hi - lo)
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        Self::assemble(names, coords, feature_names, normalized, bounds, warnings)
    }

    /// Builds a database whose features are already in [0, 1]; bounds are
    /// recorded as the identity so raw and normalized views coincide.
    pub fn from_normalized(
        names: Vec<String>,
        coords: Vec<(f64, f64)>,
        feature_names: Vec<String>,
        features: Vec<Vec<f64>>,
    ) -> Result<Self> {
        for (i, row) in features.iter().enumerate() {
            if row.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
                return Err(Error::LocationDbSchema(format!(
                    "record {i}: feature outside [0, 1] in pre-normalized database"
                )));
            }
        }
        let bounds = vec![(0.0, 1.0); feature_names.len()];
        Self::assemble(names, coords, feature_names, features, bounds, Vec::new())
    }

    fn assemble(
        names: Vec<String>,
        coords: Vec<(f64, f64)>,
        feature_names: Vec<String>,
        features: Vec<Vec<f64>>,
        bounds: Vec<(f64, f64)>,
        warnings: Vec<String>,
    ) -> Result<Self> {
        let mut by_name = HashMap::new();
        let mut records = Vec::new();
        for ((name, (lat, lon)), feats) in names.into_iter().zip(coords).zip(features) {
            if feats.len() != feature_names.len() {
                return Err(Error::LocationDbSchema(format!(
                    "record {name:?}: expected {} features, got {}",
                    feature_names.len(),
                    feats.len()
                )));
            }
            let key = canonical_key(&name);
            if by_name.insert(key, records.len()).is_some() {
                return Err(Error::DuplicateLocation(name));
            }
            records.push(LocationRecord {
                name,
                lat,
                lon,
                features: feats,
            });
        }
        Ok(LocationDb {
            records,
            feature_names,
            bounds,
            warnings,
            by_name,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[LocationRecord] {
        &self.records
    }

    pub fn record(&self, idx: usize) -> &LocationRecord {
        &self.records[idx]
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Case-insensitive lookup by place name.
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.by_name.get(&canonical_key(name)).copied()
    }

    /// Raw feature values reconstructed from the stored bounds.
    pub fn raw_features(&self, idx: usize) -> Vec<f64> {
        self.records[idx]
            .features
            .iter()
            .zip(&self.bounds)
            .map(|(&v, &(lo, hi))| lo + v * (hi - lo))
            .collect()
    }

    /// Euclidean distance between two records in normalized feature space.
    pub fn feature_distance(&self, i: usize, j: usize) -> f64 {
        feature_distance(&self.records[i].features, &self.records[j].features)
    }
}

pub fn feature_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Candidate surrogates for one origin: the origin itself first at distance
/// zero, then the nearest places in feature space among those within the
/// geographic threshold, truncated to `k` entries.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub origin: usize,
    /// (record index, feature distance), ascending; first entry is the origin.
    pub entries: Vec<(usize, f64)>,
    pub requested_k: usize,
}

impl CandidateSet {
    /// True when the geographic threshold left fewer than k candidates.
    pub fn is_short(&self) -> bool {
        self.entries.len() < self.requested_k
    }
}

/// Builds the candidate set for `origin`. Places whose great-circle distance
/// exceeds `geo_threshold_km` are out; survivors order by feature distance
/// with ties broken by record index, and the origin is always first.
pub fn candidate_set(
    db: &LocationDb,
    origin: usize,
    k: usize,
    geo_threshold_km: f64,
) -> Result<CandidateSet> {
    if k == 0 {
        return Err(Error::Config("candidate count k must be at least 1".into()));
    }
    // Positive, possibly infinite (infinite means no geographic gate).
    if geo_threshold_km.is_nan() || geo_threshold_km <= 0.0 {
        return Err(Error::Config(format!(
            "geographic threshold must be positive, got {geo_threshold_km}"
        )));
    }
    let o = &db.records[origin];
    let mut survivors: Vec<(usize, f64)> = Vec::new();
    for (i, r) in db.records.iter().enumerate() {
        if i == origin {
            continue;
        }
        if haversine_km(o.lat, o.lon, r.lat, r.lon) <= geo_threshold_km {
            survivors.push((i, db.feature_distance(origin, i)));
        }
    }
    survivors.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    let mut entries = Vec::with_capacity(k);
    entries.push((origin, 0.0));
    entries.extend(survivors.into_iter().take(k - 1));
    Ok(CandidateSet {
        origin,
        entries,
        requested_k: k,
    })
}

/// Probabilities aligned with a candidate set's entries.
#[derive(Debug, Clone)]
pub struct CandidateDistribution {
    pub indices: Vec<usize>,
    pub probabilities: Vec<f64>,
}

/// Exponential-mechanism distribution over the candidate set: each entry's
/// weight is exp(eps * (1 - d)). Computed in shifted log space so extreme
/// epsilon values neither overflow nor underflow.
pub fn location_distribution(candidates: &CandidateSet, eps: Epsilon) -> CandidateDistribution {
    let scores: Vec<f64> = candidates
        .entries
        .iter()
        .map(|&(_, d)| eps.get() * (1.0 - d))
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = weights.iter().sum();
    CandidateDistribution {
        indices: candidates.entries.iter().map(|&(i, _)| i).collect(),
        probabilities: weights.iter().map(|w| w / sum).collect(),
    }
}

/// One draw from the candidate distribution by inverting the cumulative sum
/// with a single uniform. Returns the chosen record index.
pub fn sanitize_location(
    db: &LocationDb,
    origin: usize,
    eps: Epsilon,
    k: usize,
    geo_threshold_km: f64,
    rng: &mut RandomSource,
) -> Result<usize> {
    let candidates = candidate_set(db, origin, k, geo_threshold_km)?;
    let dist = location_distribution(&candidates, eps);
    Ok(draw_from(&dist, rng))
}

pub fn draw_from(dist: &CandidateDistribution, rng: &mut RandomSource) -> usize {
    let u = rng.uniform();
    let mut cumulative = 0.0;
    for (idx, p) in dist.indices.iter().zip(&dist.probabilities) {
        cumulative += p;
        if u <= cumulative {
            return *idx;
        }
    }
    // Floating-point shortfall in the cumulative sum: fall back to the last.
    *dist.indices.last().expect("candidate set is never empty")
}
