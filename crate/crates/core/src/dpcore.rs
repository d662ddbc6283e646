//! Noise mechanisms and privacy bookkeeping.
//!
//! The Laplace sampler draws one uniform per sample and inverts the CDF, so
//! a seeded stream replays identically. The budget ledger splits the total
//! epsilon uniformly over the distinct memoization keys of a document; the
//! memo table guarantees one draw per key, which is what makes repeated
//! mentions of the same value consistent and blocks averaging attacks.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Deserializer, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::annotation::{AnnotatedDocument, EntityLabel};
use crate::config::{LocaleConfig, Policy};
use crate::error::{Error, Result};
use crate::temporal::{parse_temporal, TemporalEntity};

/// Privacy parameter, validated to be finite and strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct Epsilon(f64);

impl Epsilon {
    pub fn new(value: f64) -> Result<Self> {
        if value.is_finite() && value > 0.0 {
            Ok(Epsilon(value))
        } else {
            Err(Error::InvalidEpsilon(value))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = f64::deserialize(d)?;
        Epsilon::new(raw).map_err(serde::de::Error::custom)
    }
}

impl TryFrom<f64> for Epsilon {
    type Error = Error;
    fn try_from(value: f64) -> Result<Self> {
        Epsilon::new(value)
    }
}

/// Seeded randomness with an independent stream per document, so documents
/// can be processed in any order (or in parallel) without changing output.
pub struct RandomSource {
    rng: ChaCha12Rng,
}

fn fnv1a64(data: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for &b in data {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

impl RandomSource {
    pub fn seeded(master_seed: u64) -> Self {
        RandomSource {
            rng: ChaCha12Rng::seed_from_u64(master_seed),
        }
    }

    pub fn from_entropy() -> Self {
        RandomSource {
            rng: ChaCha12Rng::from_entropy(),
        }
    }

    /// Stream keyed by (master seed, document id). Identical inputs replay
    /// the identical stream regardless of what other documents were drawn.
    pub fn for_document(master_seed: u64, doc_id: &str) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
        rng.set_stream(fnv1a64(doc_id.as_bytes()));
        RandomSource { rng }
    }

    /// Uniform draw on the open interval (0, 1).
    pub fn uniform(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.gen();
            if u > 0.0 {
                return u;
            }
        }
    }

    /// Uniform integer in 0..n for pool and fallback draws.
    pub fn below(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        self.rng.gen_range(0..n)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }
}

/// Inverse CDF of the zero-centered Laplace distribution at scale `scale`.
/// Exposed separately from the sampler so closed-form points are testable.
pub fn laplace_inverse_cdf(u: f64, scale: f64) -> f64 {
    debug_assert!(u > 0.0 && u < 1.0);
    debug_assert!(scale.is_finite() && scale > 0.0);
    let centered = u - 0.5;
    -scale * centered.signum() * (1.0 - 2.0 * centered.abs()).ln()
}

/// One Laplace draw from one uniform draw.
pub fn laplace_sample(scale: f64, rng: &mut RandomSource) -> f64 {
    laplace_inverse_cdf(rng.uniform(), scale)
}

/// Adds Laplace noise at scale `1/share` to the magnitude, rounds to the
/// nearest integer, and clamps at zero. Kind, granularity, and format pass
/// through untouched: the surface renderer needs them intact.
pub fn sanitize_temporal(
    entity: &TemporalEntity,
    share: Epsilon,
    rng: &mut RandomSource,
) -> TemporalEntity {
    let noise = laplace_sample(1.0 / share.get(), rng);
    let noised = entity.magnitude as f64 + noise;
    let magnitude = noised.round().max(0.0) as u64;
    TemporalEntity {
        magnitude,
        ..entity.clone()
    }
}

/// Memoization key: entity label plus a canonicalized value key.
pub type MemoKey = (EntityLabel, String);

/// Case-folds and collapses whitespace so that "Dijon", "DIJON", and
/// " dijon " memoize together.
pub fn canonical_key(raw: &str) -> String {
    raw.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Canonical key for a parsed temporal entity: granularity plus magnitude.
/// Two renderings of the same date collapse to one key; the label keeps a
/// date and an age with equal magnitudes apart.
pub fn temporal_key(entity: &TemporalEntity) -> String {
    format!("{}|{}", entity.granularity.as_str(), entity.magnitude)
}

/// Uniform split of the total budget over the distinct keys that take a
/// noise draw. Labels outside DATE/AGE/LOC never appear here.
#[derive(Debug, Clone)]
pub struct BudgetLedger {
    total: Epsilon,
    shares: BTreeMap<MemoKey, Epsilon>,
}

impl BudgetLedger {
    pub fn allocate(total: Epsilon, keys: impl IntoIterator<Item = MemoKey>) -> BudgetLedger {
        let distinct: BTreeSet<MemoKey> = keys
            .into_iter()
            .filter(|(label, _)| label.consumes_budget())
            .collect();
        let count = distinct.len();
        let mut shares = BTreeMap::new();
        if count > 0 {
            let share = Epsilon::new(total.get() / count as f64)
                .expect("positive total split over a positive count stays positive");
            for key in distinct {
                shares.insert(key, share);
            }
        }
        BudgetLedger { total, shares }
    }

    pub fn total(&self) -> Epsilon {
        self.total
    }

    pub fn share(&self, key: &MemoKey) -> Option<Epsilon> {
        self.shares.get(key).copied()
    }

    pub fn shares(&self) -> &BTreeMap<MemoKey, Epsilon> {
        &self.shares
    }

    pub fn dp_key_count(&self) -> usize {
        self.shares.len()
    }

    /// Sum of all shares; equals the total for any non-empty allocation.
    pub fn allocated_sum(&self) -> f64 {
        self.shares.values().map(|e| e.get()).sum()
    }
}

/// Distinct-key budget allocation for a whole document. DATE and AGE spans
/// must parse to form their keys; under the strict policy a parse failure
/// propagates, under the lenient policy the span is skipped (it will be
/// replaced by a placeholder downstream and consumes no budget).
pub fn allocate_budget(
    doc: &AnnotatedDocument,
    total: Epsilon,
    locale: &LocaleConfig,
    policy: Policy,
) -> Result<BudgetLedger> {
    let mut keys: Vec<MemoKey> = Vec::new();
    for span in &doc.spans {
        match span.label {
            EntityLabel::Date | EntityLabel::Age => {
                match parse_temporal(&span.surface, span.label, locale) {
                    Ok(entity) => keys.push((span.label, temporal_key(&entity))),
                    Err(e) => match policy {
                        Policy::Strict => return Err(e),
                        Policy::Lenient => continue,
                    },
                }
            }
            EntityLabel::Loc => keys.push((span.label, canonical_key(&span.surface))),
            _ => {}
        }
    }
    Ok(BudgetLedger::allocate(total, keys))
}

/// Per-document memo of drawn surrogates, one value per canonical key.
#[derive(Debug, Default)]
pub struct MemoTable<V> {
    map: HashMap<MemoKey, V>,
}

impl<V: Clone> MemoTable<V> {
    pub fn new() -> Self {
        MemoTable {
            map: HashMap::new(),
        }
    }

    /// Returns the memoized value for the key, invoking `produce` exactly
    /// once on first sight.
    pub fn get_or_insert_with(
        &mut self,
        key: MemoKey,
        produce: impl FnOnce() -> Result<V>,
    ) -> Result<V> {
        if let Some(v) = self.map.get(&key) {
            return Ok(v.clone());
        }
        let value = produce()?;
        self.map.insert(key, value.clone());
        Ok(value)
    }

    pub fn get(&self, key: &MemoKey) -> Option<&V> {
        self.map.get(key)
    }

    pub fn insert(&mut self, key: MemoKey, value: V) {
        self.map.insert(key, value);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
