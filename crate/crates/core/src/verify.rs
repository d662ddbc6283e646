//! Analytic verification of the privacy mechanisms.
//!
//! These checks brute-force the defining inequality of metric privacy,
//!     |log P_v1(y) - log P_v2(y)| <= eps * d(v1, v2),
//! over exhaustive grids, plus distributional tests for the sampler. The
//! negative controls run the same checks against mechanisms that are known
//! not to satisfy the bound; a verifier that passes them has no power, so
//! callers treat a passing control as a failure of the verifier itself.

use std::f64::consts::PI;

use serde::Serialize;

use crate::dpcore::{laplace_sample, Epsilon, RandomSource};
use crate::error::{Error, Result};
use crate::geoloc::{candidate_set, location_distribution, LocationDb};

/// Analytic slack: excesses at or below this are floating-point noise.
pub const ANALYTIC_TOLERANCE: f64 = 1e-9;

/// Largest database the exhaustive exponential check will enumerate.
pub const MAX_EXHAUSTIVE_DB: usize = 20;

#[derive(Debug, Clone, Serialize)]
pub struct PrivacyCheckResult {
    pub mechanism: String,
    pub worst_excess: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub detail: String,
}

impl PrivacyCheckResult {
    fn new(mechanism: impl Into<String>, worst_excess: f64, detail: String) -> Self {
        PrivacyCheckResult {
            mechanism: mechanism.into(),
            worst_excess,
            tolerance: ANALYTIC_TOLERANCE,
            pass: worst_excess <= ANALYTIC_TOLERANCE,
            detail,
        }
    }
}

/// Integer axis -50..=50; the cube over it is the default evaluation grid.
pub fn default_axis() -> Vec<f64> {
    (-50..=50).map(|v| v as f64).collect()
}

/// Worst excess of |log f(y - v1) - log f(y - v2)| over eps*|v1 - v2| for a
/// location-family density given by its unnormalized log density.
fn density_worst_excess(log_density: impl Fn(f64) -> f64, eps: f64, axis: &[f64]) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for &y in axis {
        for &v1 in axis {
            let ld1 = log_density(y - v1);
            for &v2 in axis {
                let ld2 = log_density(y - v2);
                let excess = (ld1 - ld2).abs() - eps * (v1 - v2).abs();
                if excess > worst {
                    worst = excess;
                }
            }
        }
    }
    worst
}

/// Checks the Laplace mechanism at scale 1/eps against the metric-privacy
/// bound on the cube over `axis`.
pub fn check_laplace_dprivacy(eps: Epsilon, axis: &[f64]) -> PrivacyCheckResult {
    let b = 1.0 / eps.get();
    let worst = density_worst_excess(|x| -x.abs() / b, eps.get(), axis);
    PrivacyCheckResult::new(
        format!("laplace eps={}", eps.get()),
        worst,
        format!("cube over {} axis points", axis.len()),
    )
}

/// Negative control: a Gaussian density at the same scale. Its log-ratio
/// grows quadratically in |y|, so the linear bound must break on the grid;
/// a `pass` here means the checker lost its power.
pub fn check_gaussian_density_control(eps: Epsilon, axis: &[f64]) -> PrivacyCheckResult {
    let b = 1.0 / eps.get();
    let worst = density_worst_excess(|x| -(x * x) / (2.0 * b * b), eps.get(), axis);
    PrivacyCheckResult::new(
        format!("gaussian-control eps={}", eps.get()),
        worst,
        format!("cube over {} axis points", axis.len()),
    )
}

fn exponential_worst_excess(
    db: &LocationDb,
    eps: Epsilon,
    score: impl Fn(f64) -> f64,
) -> Result<f64> {
    let n = db.len();
    if n == 0 {
        return Err(Error::VerifyContract("empty location database".into()));
    }
    if n > MAX_EXHAUSTIVE_DB {
        return Err(Error::VerifyContract(format!(
            "exhaustive check enumerates all triples; database has {n} records, limit is {MAX_EXHAUSTIVE_DB}"
        )));
    }
    // Full support: every record is a candidate of every origin.
    let mut probs = vec![vec![0.0f64; n]; n];
    for (j, row) in probs.iter_mut().enumerate() {
        let cands = candidate_set(db, j, n, f64::INFINITY)?;
        let scores: Vec<f64> = cands
            .entries
            .iter()
            .map(|&(_, d)| eps.get() * score(d))
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let sum: f64 = weights.iter().sum();
        for (&(i, _), w) in cands.entries.iter().zip(&weights) {
            row[i] = w / sum;
        }
    }
    let mut worst = f64::NEG_INFINITY;
    for v1 in 0..n {
        for v2 in 0..n {
            let d12 = db.feature_distance(v1, v2);
            for (p1, p2) in probs[v1].iter().zip(&probs[v2]) {
                let excess = (p1.ln() - p2.ln()).abs() - eps.get() * d12;
                if excess > worst {
                    worst = excess;
                }
            }
        }
    }
    Ok(worst)
}

/// Exhaustive metric-privacy check of the exponential mechanism with full
/// support (k = N, no geographic threshold) over every (v1, v2, y) triple.
pub fn check_exponential_dprivacy(db: &LocationDb, eps: Epsilon) -> Result<PrivacyCheckResult> {
    let worst = exponential_worst_excess(db, eps, |d| 1.0 - d)?;
    Ok(PrivacyCheckResult::new(
        format!("exponential eps={}", eps.get()),
        worst,
        format!("{} records, full support, exhaustive", db.len()),
    ))
}

/// Negative control: score 1 - d^2 instead of 1 - d. The squared distance
/// is not a metric bound (it violates the triangle step once distances
/// exceed 1), so the check must fail on `control_db`.
pub fn check_exponential_squared_score_control(
    db: &LocationDb,
    eps: Epsilon,
) -> Result<PrivacyCheckResult> {
    let worst = exponential_worst_excess(db, eps, |d| 1.0 - d * d)?;
    Ok(PrivacyCheckResult::new(
        format!("exponential-squared-control eps={}", eps.get()),
        worst,
        format!("{} records, full support, exhaustive", db.len()),
    ))
}

/// Toy database for the exponential check: `n` places evenly spaced on a
/// circle in the first two features, third feature constant. Every place
/// then sees the same multiset of distances, which is exactly the regime
/// where the mechanism's normalization factors agree and the bound is
/// tight. Geographic coordinates are spread so no threshold interferes.
pub fn symmetric_toy_db(n: usize) -> LocationDb {
    assert!((2..=MAX_EXHAUSTIVE_DB).contains(&n));
    let mut names = Vec::new();
    let mut coords = Vec::new();
    let mut features = Vec::new();
    for j in 0..n {
        let theta = 2.0 * PI * j as f64 / n as f64;
        names.push(format!("city{j:02}"));
        coords.push((40.0 + j as f64 * 0.01, 4.0 + j as f64 * 0.01));
        features.push(vec![
            0.5 + 0.5 * theta.cos(),
            0.5 + 0.5 * theta.sin(),
            0.5,
        ]);
    }
    LocationDb::from_normalized(
        names,
        coords,
        vec!["f1".into(), "f2".into(), "f3".into()],
        features,
    )
    .expect("constructed in range")
}

/// Database for the squared-score control: four places at tetrahedron
/// corners of the unit cube, pairwise feature distance sqrt(2) > 1.
pub fn control_db() -> LocationDb {
    let corners = [
        [0.0, 0.0, 0.0],
        [1.0, 1.0, 0.0],
        [1.0, 0.0, 1.0],
        [0.0, 1.0, 1.0],
    ];
    LocationDb::from_normalized(
        corners
            .iter()
            .enumerate()
            .map(|(i, _)| format!("corner{i}"))
            .collect(),
        corners
            .iter()
            .enumerate()
            .map(|(i, _)| (41.0 + i as f64, 3.0 + i as f64))
            .collect(),
        vec!["f1".into(), "f2".into(), "f3".into()],
        corners.iter().map(|c| c.to_vec()).collect(),
    )
    .expect("constructed in range")
}

/// Worst-case log-probability ratio over shared support in truncated mode
/// (finite k or geographic threshold). Reported, not asserted: with zeros
/// outside the candidate set the two-sided bound does not hold globally.
#[derive(Debug, Clone, Serialize)]
pub struct TruncatedReport {
    pub k: usize,
    pub geo_threshold_km: f64,
    pub worst_excess_shared_support: f64,
    pub pairs_with_disjoint_support: usize,
}

pub fn report_truncated_ratios(
    db: &LocationDb,
    eps: Epsilon,
    k: usize,
    geo_threshold_km: f64,
) -> Result<TruncatedReport> {
    let n = db.len();
    if n > MAX_EXHAUSTIVE_DB {
        return Err(Error::VerifyContract(format!(
            "truncated report enumerates all pairs; database has {n} records, limit is {MAX_EXHAUSTIVE_DB}"
        )));
    }
    let mut probs = vec![vec![0.0f64; n]; n];
    for (j, row) in probs.iter_mut().enumerate() {
        let cands = candidate_set(db, j, k, geo_threshold_km)?;
        let dist = location_distribution(&cands, eps);
        for (&i, &p) in dist.indices.iter().zip(&dist.probabilities) {
            row[i] = p;
        }
    }
    let mut worst = f64::NEG_INFINITY;
    let mut disjoint = 0usize;
    for v1 in 0..n {
        for v2 in (v1 + 1)..n {
            let d12 = db.feature_distance(v1, v2);
            let mut any_shared = false;
            for (p1, p2) in probs[v1].iter().zip(&probs[v2]) {
                if *p1 > 0.0 && *p2 > 0.0 {
                    any_shared = true;
                    let excess = (p1.ln() - p2.ln()).abs() - eps.get() * d12;
                    if excess > worst {
                        worst = excess;
                    }
                }
            }
            if !any_shared {
                disjoint += 1;
            }
        }
    }
    Ok(TruncatedReport {
        k,
        geo_threshold_km,
        worst_excess_shared_support: worst,
        pairs_with_disjoint_support: disjoint,
    })
}

/// Distributional check of the Laplace sampler: one-sample KS test against
/// the analytic CDF at the 1% level, plus mean and variance.
#[derive(Debug, Clone, Serialize)]
pub struct SamplerCheck {
    pub n: usize,
    pub scale: f64,
    pub ks_statistic: f64,
    pub ks_critical: f64,
    pub ks_pass: bool,
    pub mean: f64,
    pub variance: f64,
    pub expected_variance: f64,
    pub variance_ok: bool,
    pub pass: bool,
}

fn laplace_cdf(x: f64, b: f64) -> f64 {
    if x < 0.0 {
        0.5 * (x / b).exp()
    } else {
        1.0 - 0.5 * (-x / b).exp()
    }
}

/// KS 1% asymptotic critical value: sqrt(ln(2/alpha)/2) / sqrt(n).
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    ((2.0 / alpha).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

pub fn check_sampler(scale: f64, n: usize, rng: &mut RandomSource) -> Result<SamplerCheck> {
    if n < 10_000 {
        return Err(Error::VerifyContract(format!(
            "sampler check needs at least 10000 draws for the asymptotic KS threshold, got {n}"
        )));
    }
    let mut samples: Vec<f64> = (0..n).map(|_| laplace_sample(scale, rng)).collect();
    samples.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nf = n as f64;
    let mut ks = 0.0f64;
    let mut sum = 0.0f64;
    let mut sumsq = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = laplace_cdf(x, scale);
        let upper = (i as f64 + 1.0) / nf - f;
        let lower = f - i as f64 / nf;
        ks = ks.max(upper).max(lower);
        sum += x;
        sumsq += x * x;
    }
    let mean = sum / nf;
    let variance = (sumsq - nf * mean * mean) / (nf - 1.0);
    let expected_variance = 2.0 * scale * scale;
    let ks_critical = ks_critical_value(n, 0.01);
    let ks_pass = ks < ks_critical;
    let variance_ok = (variance - expected_variance).abs() / expected_variance <= 0.02;
    Ok(SamplerCheck {
        n,
        scale,
        ks_statistic: ks,
        ks_critical,
        ks_pass,
        mean,
        variance,
        expected_variance,
        variance_ok,
        pass: ks_pass && variance_ok,
    })
}

/// Pearson chi-square statistic for observed counts against expected counts.
pub fn chi_square_stat(observed: &[u64], expected: &[f64]) -> f64 {
    observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| {
            let diff = o as f64 - e;
            diff * diff / e
        })
        .sum()
}
