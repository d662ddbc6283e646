//! Acceptance suite: one test per release criterion. Every test prints a
//! single `[PASS]`/`[FAIL]` line (visible under `--nocapture`) and then
//! asserts, so the suite doubles as a human-readable checklist. Numeric
//! tolerances are pinned here on purpose: if the library drifts, this file
//! is the tripwire, not the thing that moves with it.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use chrono::NaiveDate;
use deid_core::dpcore::sanitize_temporal;
use deid_core::geoloc::{location_distribution, sanitize_location, CandidateSet};
use deid_core::temporal::{
    parse_temporal, render_temporal, FormatDescriptor, Granularity, PatternShape, TemporalEntity,
    TemporalKind,
};
use deid_core::verify::{
    check_exponential_dprivacy, check_gaussian_density_control, check_laplace_dprivacy,
    check_sampler, default_axis, ks_critical_value, symmetric_toy_db,
};
use deid_core::{
    allocate_budget, sanitize_document, AnnotatedDocument, DayMonthOrder, EntityLabel, EntitySpan,
    Epsilon, Language, LocaleConfig, LocationDb, Policy, RandomSource, SanitizeOptions,
    SurrogatePool,
};
use regex::Regex;

/// Worst allowed excess over the analytic privacy bound.
const EXCESS_TOLERANCE: f64 = 1e-9;

fn report(number: u32, what: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("[{verdict}] criterion {number}: {what} ({detail})");
    assert!(pass, "criterion {number}: {what}: {detail}");
}

fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn fixture_locale() -> LocaleConfig {
    LocaleConfig::new(
        Language::En,
        DayMonthOrder::Dmy,
        NaiveDate::from_ymd_opt(2020, 12, 31).expect("valid reference date"),
    )
}

fn thread_doc() -> AnnotatedDocument {
    let raw = fs::read_to_string(fixtures_dir().join("corpus/thread_example.json"))
        .expect("fixture readable");
    AnnotatedDocument::parse_json(&raw).expect("fixture parses")
}

fn burgundy_db() -> LocationDb {
    let file = fs::File::open(fixtures_dir().join("locations.csv")).expect("fixture db opens");
    let features: Vec<String> =
        ["population", "beds", "median_age"].iter().map(|s| s.to_string()).collect();
    LocationDb::load_csv(file, &features).expect("fixture db loads")
}

fn fixture_options() -> SanitizeOptions {
    SanitizeOptions::new(eps(1.0), fixture_locale())
}

fn eps(v: f64) -> Epsilon {
    Epsilon::new(v).expect("positive epsilon")
}

/// Criterion 1: the exponential mechanism over a vertex-transitive 10-place
/// database with three normalized features satisfies the scaled log-ratio
/// bound exactly (up to float noise), checked by exhaustive enumeration of
/// every (origin, origin, output) triple.
#[test]
fn criterion_01_exponential_log_ratio_bound() {
    let db = symmetric_toy_db(10);
    let start = Instant::now();
    let mut worst = f64::NEG_INFINITY;
    for e in [0.1, 1.0, 5.0] {
        let check = check_exponential_dprivacy(&db, eps(e)).expect("exhaustive check runs");
        worst = worst.max(check.worst_excess);
    }
    let elapsed = start.elapsed();
    let pass = worst <= EXCESS_TOLERANCE && elapsed <= Duration::from_secs(1);
    report(
        1,
        "exponential mechanism log-ratio bound holds exactly on a 10-place database",
        pass,
        &format!(
            "worst excess {worst:+.3e} over eps in {{0.1, 1, 5}}, tolerance {EXCESS_TOLERANCE:.1e}, {elapsed:?}"
        ),
    );
}

/// Criterion 2: the Laplace density satisfies the same bound on the full
/// 101x101x101 grid of (secret, secret, output) points, and the Gaussian
/// density control is rejected by the identical check.
#[test]
fn criterion_02_laplace_density_bound_and_gaussian_control() {
    let axis = default_axis();
    assert_eq!(axis.len(), 101, "grid axis holds 101 points");
    let start = Instant::now();
    let mut worst = f64::NEG_INFINITY;
    for e in [0.1, 0.5, 1.0, 2.0, 5.0] {
        let check = check_laplace_dprivacy(eps(e), &axis);
        worst = worst.max(check.worst_excess);
    }
    let control = check_gaussian_density_control(eps(1.0), &axis);
    let elapsed = start.elapsed();
    let pass = worst <= EXCESS_TOLERANCE
        && !control.pass
        && control.worst_excess > EXCESS_TOLERANCE
        && elapsed <= Duration::from_secs(10);
    report(
        2,
        "laplace density bound holds on the 101^3 grid and the gaussian control is rejected",
        pass,
        &format!(
            "worst excess {worst:+.3e}, gaussian control excess {:+.3e}, {elapsed:?}",
            control.worst_excess
        ),
    );
}

/// Criterion 3: selection probabilities for candidate distances (0, 0.2,
/// 0.5) at eps = 1 match direct evaluation of exp(eps*(1-d)) / sum, and the
/// distribution normalizes to 1 on random candidate sets.
#[test]
fn criterion_03_candidate_distribution_values_and_normalization() {
    let candidates = CandidateSet {
        origin: 0,
        entries: vec![(0, 0.0), (1, 0.2), (2, 0.5)],
        requested_k: 3,
    };
    let dist = location_distribution(&candidates, eps(1.0));
    // exp(1-d) / (exp(1) + exp(0.8) + exp(0.5)) for d in {0, 0.2, 0.5}.
    let expected = [0.412_326_685_6_f64, 0.337_584_537_8, 0.250_088_776_6];
    let mut value_dev = 0.0_f64;
    for (p, e) in dist.probabilities.iter().zip(expected) {
        value_dev = value_dev.max((p - e).abs());
    }

    let mut rng = RandomSource::seeded(20_240_613);
    let mut sum_dev = 0.0_f64;
    for _ in 0..1000 {
        let size = 1 + rng.below(12);
        let mut distances = vec![0.0_f64];
        for _ in 1..size {
            // Three features in [0, 1] bound pairwise distances by sqrt(3).
            distances.push(rng.uniform() * 3.0_f64.sqrt());
        }
        distances.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        let entries: Vec<(usize, f64)> = distances.iter().copied().enumerate().collect();
        let set = CandidateSet { origin: 0, entries, requested_k: size };
        let random_eps = eps(0.05 + rng.uniform() * 4.95);
        let total: f64 = location_distribution(&set, random_eps).probabilities.iter().sum();
        sum_dev = sum_dev.max((total - 1.0).abs());
    }

    let pass = value_dev <= 1e-5 && sum_dev <= 1e-12;
    report(
        3,
        "candidate probabilities at distances (0, 0.2, 0.5) match direct evaluation and normalize",
        pass,
        &format!(
            "max value deviation {value_dev:.2e} (tolerance 1e-5), worst |sum - 1| {sum_dev:.2e} over 1000 random candidate sets (tolerance 1e-12)"
        ),
    );
}

/// Criterion 4: one hundred thousand seeded draws at scale 1 pass the
/// Kolmogorov-Smirnov test at the 1% level and land within 2% of the
/// analytic variance 2b^2 = 2.
#[test]
fn criterion_04_sampler_statistics() {
    let start = Instant::now();
    let mut rng = RandomSource::seeded(20_240_601);
    let check = check_sampler(1.0, 100_000, &mut rng).expect("sample size accepted");
    let elapsed = start.elapsed();
    let critical = ks_critical_value(100_000, 0.01);
    let pass = check.ks_statistic <= critical
        && (check.variance - 2.0).abs() <= 0.02 * 2.0
        && check.pass
        && elapsed <= Duration::from_secs(5);
    report(
        4,
        "100000 seeded laplace draws at scale 1 pass the 1% KS test with variance within 2% of 2",
        pass,
        &format!(
            "ks {:.5} vs critical {:.5}, variance {:.4}, mean {:+.4}, {elapsed:?}",
            check.ks_statistic, critical, check.variance, check.mean
        ),
    );
}

/// Criterion 5: the thread fixture (two dates, one age, one repeated city)
/// yields exactly four distinct budget keys, each receiving exactly a
/// quarter of the total. The split is a dyadic rational, so the comparison
/// is exact, not approximate.
#[test]
fn criterion_05_thread_fixture_budget_split() {
    let doc = thread_doc();
    let ledger = allocate_budget(&doc, eps(1.0), &fixture_locale(), Policy::Strict)
        .expect("fixture allocates");
    let count = ledger.dp_key_count();
    let all_quarter = ledger.shares().values().all(|s| s.get() == 0.25);
    let total = ledger.allocated_sum();
    let pass = count == 4 && all_quarter && total == 1.0;
    report(
        5,
        "thread fixture splits the budget into exactly 4 keys of exactly 0.25 each",
        pass,
        &format!("{count} keys, every share == 0.25: {all_quarter}, allocated sum {total}"),
    );
}

/// Criterion 6: both occurrences of the repeated city resolve to one
/// memoized surrogate in every one of 100 independently seeded runs.
#[test]
fn criterion_06_repeated_location_gets_one_surrogate() {
    let doc = thread_doc();
    let db = burgundy_db();
    let pools = SurrogatePool::default();
    let mut all_consistent = true;
    let mut example = String::new();
    for seed in 0..100_u64 {
        let mut rng = RandomSource::seeded(seed);
        let out = sanitize_document(doc.clone(), Some(&db), &pools, &fixture_options(), &mut rng)
            .expect("fixture sanitizes");
        let locs: Vec<&str> = out
            .replacements
            .iter()
            .filter(|r| r.label == EntityLabel::Loc)
            .map(|r| r.surface.as_str())
            .collect();
        if locs.len() != 2 || locs[0] != locs[1] {
            all_consistent = false;
            break;
        }
        if seed == 0 {
            example = locs[0].to_string();
        }
    }
    report(
        6,
        "both occurrences of the repeated city share one surrogate in 100 seeded runs",
        all_consistent,
        &format!("seed-0 surrogate {example:?}"),
    );
}

/// Criterion 7: across 100 seeded runs the numeric-slash date surrogate
/// always renders as dd/mm/yyyy, the long-form date keeps its long form,
/// and no original sensitive surface of length >= 3 survives anywhere in
/// the sanitized text (case-insensitive).
#[test]
fn criterion_07_format_preservation_and_no_leaks() {
    let doc = thread_doc();
    let db = burgundy_db();
    let pools = SurrogatePool::default();
    let slash_shape = Regex::new(r"^\d{2}/\d{2}/\d{4}$").expect("regex compiles");
    let long_shape = Regex::new(r"^[A-Z][a-z]+ \d{1,2}, \d{4}$").expect("regex compiles");
    let originals: Vec<String> = doc
        .spans
        .iter()
        .filter(|s| s.surface.chars().count() >= 3)
        .map(|s| s.surface.to_lowercase())
        .collect();

    let mut pass = true;
    let mut detail = String::from("all 100 runs kept both shapes and leaked nothing");
    'runs: for seed in 0..100_u64 {
        let mut rng = RandomSource::seeded(seed);
        let out = sanitize_document(doc.clone(), Some(&db), &pools, &fixture_options(), &mut rng)
            .expect("fixture sanitizes");
        let lower = out.text.to_lowercase();
        for orig in &originals {
            if lower.contains(orig.as_str()) {
                pass = false;
                detail = format!("seed {seed}: original surface {orig:?} survived");
                break 'runs;
            }
        }
        let by_start: BTreeMap<usize, &str> =
            out.replacements.iter().map(|r| (r.orig_start, r.surface.as_str())).collect();
        let slash_out = by_start.get(&74).copied().unwrap_or("");
        let long_out = by_start.get(&88).copied().unwrap_or("");
        if !slash_shape.is_match(slash_out) || !long_shape.is_match(long_out) {
            pass = false;
            detail = format!("seed {seed}: surrogate shapes {slash_out:?} / {long_out:?}");
            break 'runs;
        }
    }
    report(
        7,
        "date surrogates keep their surface shapes and no original surface of length >= 3 leaks in 100 seeded runs",
        pass,
        &detail,
    );
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut map = BTreeMap::new();
    for entry in fs::read_dir(dir).expect("output dir readable") {
        let entry = entry.expect("directory entry");
        map.insert(
            entry.file_name().to_string_lossy().into_owned(),
            fs::read(entry.path()).expect("output file readable"),
        );
    }
    map
}

/// Criterion 8: a fixed-seed run of the binary over the fixture corpus is
/// byte-identical across repeated executions and across worker counts.
#[test]
fn criterion_08_cli_determinism_across_runs_and_workers() {
    let corpus = fixtures_dir().join("corpus");
    let config = fixtures_dir().join("config.json");
    let tmp = tempfile::tempdir().expect("tempdir");
    let runs = [(1_u32, "a"), (1, "b"), (2, "c"), (4, "d")];
    let mut outputs: Vec<(String, BTreeMap<String, Vec<u8>>)> = Vec::new();
    for (workers, tag) in runs {
        let out_dir = tmp.path().join(tag);
        let result = Command::new(env!("CARGO_BIN_EXE_deid"))
            .arg("deid")
            .arg("--config")
            .arg(&config)
            .arg("--seed")
            .arg("42")
            .arg("--workers")
            .arg(workers.to_string())
            .arg("--in")
            .arg(&corpus)
            .arg("--out")
            .arg(&out_dir)
            .output()
            .expect("binary runs");
        assert!(
            result.status.success(),
            "deid exited nonzero: {}",
            String::from_utf8_lossy(&result.stderr)
        );
        let stdout = String::from_utf8(result.stdout).expect("utf8 stdout");
        outputs.push((stdout, read_tree(&out_dir)));
    }
    let (stdout0, tree0) = &outputs[0];
    let identical = outputs.iter().all(|(s, t)| s == stdout0 && t == tree0);
    let pass = identical && tree0.len() == 6;
    report(
        8,
        "fixed-seed corpus runs are byte-identical across two executions and worker counts 1, 2, 4",
        pass,
        &format!("{} output files and stdout compared across {} runs", tree0.len(), outputs.len()),
    );
}

fn ranks(values: &[u64]) -> Vec<usize> {
    values.iter().map(|v| values.iter().filter(|o| *o < v).count()).collect()
}

/// Criterion 9: with order restoration enabled, the sanitized dates of 1000
/// randomly generated multi-date documents keep exactly the original
/// chronological ranks.
#[test]
fn criterion_09_order_restoration_preserves_ranks() {
    let locale = fixture_locale();
    let pools = SurrogatePool::default();
    let shapes = [
        PatternShape::NumericSlash { four_digit_year: true, pad_day: true, pad_month: true },
        PatternShape::Iso,
        PatternShape::LongMonth { first_ordinal: false },
    ];
    let mut gen = RandomSource::seeded(987_654_321);
    let mut pass = true;
    let mut detail = String::from("ranks preserved on 1000 random multi-date documents");
    'trials: for trial in 0..1000_u32 {
        let n_dates = 2 + gen.below(5);
        let mut distinct: BTreeSet<u64> = BTreeSet::new();
        while distinct.len() < n_dates {
            distinct.insert(1 + gen.below(1095) as u64);
        }
        let mut magnitudes: Vec<u64> = distinct.into_iter().collect();
        for i in (1..magnitudes.len()).rev() {
            let j = gen.below(i + 1);
            magnitudes.swap(i, j);
        }

        let mut text = String::new();
        let mut spans = Vec::new();
        for &magnitude in &magnitudes {
            let entity = TemporalEntity {
                kind: TemporalKind::AbsoluteDate,
                magnitude,
                granularity: Granularity::Day,
                format: FormatDescriptor {
                    shape: shapes[gen.below(shapes.len())],
                    language: Language::En,
                    order: DayMonthOrder::Dmy,
                },
            };
            let surface = render_temporal(&entity, &locale).expect("generated date renders");
            text.push_str("Seen on ");
            let start = text.chars().count();
            text.push_str(&surface);
            let end = text.chars().count();
            text.push_str(". ");
            spans.push(EntitySpan { start, end, label: EntityLabel::Date, surface });
        }
        let doc = AnnotatedDocument { doc_id: format!("order-{trial}"), text, spans }
            .validated()
            .expect("generated document is valid");

        let mut options = fixture_options();
        options.restore_order = true;
        let mut rng = RandomSource::for_document(20_240_815, &doc.doc_id);
        let out =
            sanitize_document(doc, None, &pools, &options, &mut rng).expect("document sanitizes");
        let mut replacements = out.replacements.clone();
        replacements.sort_by_key(|r| r.orig_start);
        let sanitized: Vec<u64> = replacements
            .iter()
            .map(|r| {
                parse_temporal(&r.surface, EntityLabel::Date, &locale)
                    .expect("surrogate date reparses")
                    .magnitude
            })
            .collect();
        if ranks(&magnitudes) != ranks(&sanitized) {
            pass = false;
            detail = format!(
                "trial {trial}: original magnitudes {magnitudes:?} vs sanitized {sanitized:?}"
            );
            break 'trials;
        }
    }
    report(
        9,
        "order restoration keeps original chronological ranks on 1000 random documents",
        pass,
        &detail,
    );
}

/// Criterion 10: with a huge budget share the noise collapses: the noisy
/// date rounds back to its original magnitude and the location draw
/// returns its own origin in at least 999 of 1000 trials.
#[test]
fn criterion_10_huge_budget_concentrates_on_the_original() {
    let share = eps(1.0e6);
    let entity = TemporalEntity {
        kind: TemporalKind::AbsoluteDate,
        magnitude: 323,
        granularity: Granularity::Day,
        format: FormatDescriptor {
            shape: PatternShape::NumericSlash { four_digit_year: true, pad_day: true, pad_month: true },
            language: Language::En,
            order: DayMonthOrder::Dmy,
        },
    };
    let db = symmetric_toy_db(10);
    let mut rng = RandomSource::seeded(20_240_815);
    let mut temporal_hits = 0_u32;
    let mut location_hits = 0_u32;
    for _ in 0..1000 {
        if sanitize_temporal(&entity, share, &mut rng).magnitude == 323 {
            temporal_hits += 1;
        }
        if sanitize_location(&db, 3, share, 10, f64::INFINITY, &mut rng).expect("location draws")
            == 3
        {
            location_hits += 1;
        }
    }
    let pass = temporal_hits >= 999 && location_hits >= 999;
    report(
        10,
        "a 1e6 budget share returns the original magnitude and the origin city in >= 999 of 1000 trials",
        pass,
        &format!("temporal {temporal_hits}/1000, location {location_hits}/1000"),
    );
}
