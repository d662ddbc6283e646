//! The `verify` subcommand: runs the analytic privacy checks, the sampler
//! statistics, and the negative controls, prints one line per check, and
//! optionally writes a structured JSON report.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use deid_core::dpcore::{Epsilon, RandomSource};
use deid_core::geoloc::LocationDb;
use deid_core::verify::{
    check_exponential_dprivacy, check_exponential_squared_score_control, check_gaussian_density_control,
    check_laplace_dprivacy, check_sampler, control_db, default_axis, report_truncated_ratios,
    symmetric_toy_db, PrivacyCheckResult, SamplerCheck, TruncatedReport,
};

/// Everything one verify run produced, in print order.
#[derive(Serialize)]
pub struct VerifyReport {
    pub checks: Vec<PrivacyCheckResult>,
    pub controls: Vec<PrivacyCheckResult>,
    pub samplers: Vec<SamplerCheck>,
    pub truncated: Option<TruncatedReport>,
    pub all_passed: bool,
}

fn print_check(prefix: &str, r: &PrivacyCheckResult, expect_pass: bool) {
    let verdict = match (r.pass, expect_pass) {
        (true, true) => "PASS",
        (false, false) => "REJECTED (expected)",
        (true, false) => "FAIL (control slipped through)",
        (false, true) => "FAIL",
    };
    println!(
        "{prefix}{}: worst excess {:+.3e} over tolerance {:.1e}: {verdict}",
        r.mechanism, r.worst_excess, r.tolerance
    );
}

fn print_sampler(s: &SamplerCheck) {
    println!(
        "sampler scale={} n={}: ks {:.5} (critical {:.5}), variance {:.4} vs {:.1}: {}",
        s.scale,
        s.n,
        s.ks_statistic,
        s.ks_critical,
        s.variance,
        s.expected_variance,
        if s.pass { "PASS" } else { "FAIL" }
    );
}

/// Default run: positive checks must pass, negative controls must fail.
/// Returns true when the verifier is healthy on both counts.
pub fn run_verify(
    epsilons: &[f64],
    user_db: Option<&LocationDb>,
    seed: u64,
    report_path: Option<&Path>,
) -> Result<bool> {
    let axis = default_axis();
    let toy = symmetric_toy_db(10);
    let mut checks = Vec::new();
    for &e in epsilons {
        let eps = Epsilon::new(e).with_context(|| format!("invalid epsilon {e}"))?;
        checks.push(check_laplace_dprivacy(eps, &axis));
        checks.push(check_exponential_dprivacy(&toy, eps)?);
        if let Some(db) = user_db {
            checks.push(check_exponential_dprivacy(db, eps)?);
        }
    }
    for c in &checks {
        print_check("", c, true);
    }

    let eps1 = Epsilon::new(1.0).expect("1.0 is valid");
    let controls = vec![
        check_gaussian_density_control(eps1, &axis),
        check_exponential_squared_score_control(&control_db(), eps1)?,
    ];
    for c in &controls {
        print_check("control ", c, false);
    }

    let mut rng = RandomSource::seeded(seed);
    let samplers = vec![
        check_sampler(1.0, 100_000, &mut rng)?,
        check_sampler(2.0, 100_000, &mut rng)?,
    ];
    for s in &samplers {
        print_sampler(s);
    }

    // Truncated support is reported, never asserted: with finite k the two
    // origins' supports differ and the two-sided bound cannot hold globally.
    let truncated = report_truncated_ratios(&toy, eps1, 4, f64::INFINITY)?;
    println!(
        "truncated mode k={} (informational): worst shared-support excess {:+.3e}, {} disjoint pairs",
        truncated.k, truncated.worst_excess_shared_support, truncated.pairs_with_disjoint_support
    );

    let all_passed = checks.iter().all(|c| c.pass)
        && controls.iter().all(|c| !c.pass)
        && samplers.iter().all(|s| s.pass);
    println!(
        "{}",
        if all_passed {
            "verify: all checks passed, all controls rejected"
        } else {
            "verify: FAILURES above"
        }
    );

    if let Some(path) = report_path {
        let report = VerifyReport {
            checks,
            controls,
            samplers,
            truncated: Some(truncated),
            all_passed,
        };
        let mut json = serde_json::to_string_pretty(&report).context("serializing report")?;
        json.push('\n');
        std::fs::write(path, json)
            .with_context(|| format!("writing report {}", path.display()))?;
    }
    Ok(all_passed)
}

/// Negative-control mode: run the broken mechanisms as if they were the
/// real ones. A healthy verifier reports failures here, so a nonzero exit
/// is the expected outcome; exit zero would mean the checks lost their
/// power.
pub fn run_negative_controls() -> Result<bool> {
    let axis = default_axis();
    let eps1 = Epsilon::new(1.0).expect("1.0 is valid");
    let checks = vec![
        check_gaussian_density_control(eps1, &axis),
        check_exponential_squared_score_control(&control_db(), eps1)?,
    ];
    for c in &checks {
        print_check("", c, true);
    }
    let all_passed = checks.iter().all(|c| c.pass);
    println!(
        "{}",
        if all_passed {
            "negative controls passed the privacy check: the verifier has no power"
        } else {
            "negative controls rejected as they should be"
        }
    );
    Ok(all_passed)
}
