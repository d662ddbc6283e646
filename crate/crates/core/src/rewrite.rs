//! Per-document rewriting: budget allocation, memoized surrogate draws,
//! right-to-left splicing, and a surface-free audit trail.
//!
//! The pipeline walks the annotated spans of one document, binds every
//! distinct canonical key to exactly one surrogate (dates and ages through
//! calibrated integer noise, locations through the candidate-set draw,
//! names and organizations through pools, identifiers through a
//! layout-preserving generator), splices the rendered surrogates into the
//! text from right to left so earlier offsets stay valid, and finishes
//! with a containment scan that refuses to emit any original surface.
//!
//! Surrogate draws are rejected while they would render an original
//! surface from the same document. That exclusion consults the secrets a
//! second time, so the spliced text is a filtered, not a pure, image of
//! the underlying mechanisms; the mechanisms themselves (exported by the
//! noise and location modules) stay unfiltered and are what the verifier
//! certifies.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::annotation::{AnnotatedDocument, EntityLabel, EntitySpan};
use crate::config::{LocaleConfig, Policy};
use crate::dpcore::{
    allocate_budget, canonical_key, sanitize_temporal, temporal_key, Epsilon, MemoKey, MemoTable,
    RandomSource,
};
use crate::error::{Error, Result};
use crate::geoloc::{candidate_set, draw_from, location_distribution, LocationDb};
use crate::temporal::{parse_temporal, render_temporal, TemporalEntity, TemporalKind};

/// Attempts at drawing a surrogate before the policy decides the outcome.
const MAX_REDRAWS: usize = 128;

/// Increments tried when repairing date order before giving up.
const MAX_ORDER_BUMPS: u64 = 4096;

/// Default candidate-set size for location draws.
pub const DEFAULT_K: usize = 10;

/// Default geographic gate for location candidates, kilometers.
pub const DEFAULT_GEO_THRESHOLD_KM: f64 = 100.0;

/// Replacement strings for PER and ORG spans plus the layout-preserving
/// generator for TEL/QID/REF identifiers.
#[derive(Debug, Clone)]
pub struct SurrogatePool {
    persons: Vec<String>,
    organizations: Vec<String>,
}

impl SurrogatePool {
    pub fn new(persons: Vec<String>, organizations: Vec<String>) -> Result<Self> {
        if persons.is_empty() || persons.iter().any(|p| p.trim().is_empty()) {
            return Err(Error::EmptyPool {
                label: EntityLabel::Per.as_str().to_string(),
            });
        }
        if organizations.is_empty() || organizations.iter().any(|o| o.trim().is_empty()) {
            return Err(Error::EmptyPool {
                label: EntityLabel::Org.as_str().to_string(),
            });
        }
        Ok(SurrogatePool {
            persons,
            organizations,
        })
    }

    pub fn persons(&self) -> &[String] {
        &self.persons
    }

    pub fn organizations(&self) -> &[String] {
        &self.organizations
    }

    /// Random identifier with the same character-class layout as the
    /// original: digits stay digits, letters stay letters of the same
    /// case, everything else (separators, '+', spaces) is kept verbatim.
    pub fn layout_surrogate(&self, original: &str, rng: &mut RandomSource) -> String {
        original
            .chars()
            .map(|c| {
                if c.is_ascii_digit() {
                    (b'0' + rng.below(10) as u8) as char
                } else if c.is_ascii_uppercase() {
                    (b'A' + rng.below(26) as u8) as char
                } else if c.is_ascii_lowercase() {
                    (b'a' + rng.below(26) as u8) as char
                } else {
                    c
                }
            })
            .collect()
    }
}

impl Default for SurrogatePool {
    fn default() -> Self {
        let persons = [
            "Julien", "Martin", "Bernard", "Dubois", "Thomas", "Robert", "Richard", "Petit",
            "Durand", "Leroy", "Moreau", "Simon", "Laurent", "Lefebvre", "Michel", "Garcia",
            "David", "Bertrand", "Roux", "Vincent", "Fournier", "Morel", "Girard", "Mercier",
        ];
        let organizations = [
            "Centre Hospitalier Lyon Sud",
            "Clinique du Parc",
            "Hôpital Saint-Louis",
            "Institut Bergonié",
            "Centre Léon Bérard",
            "Polyclinique des Alpes",
            "Clinique Pasteur",
            "Hôpital de la Timone",
            "Centre Hospitalier de Mâcon",
            "Clinique Sainte-Marie",
            "Hôpital Nord",
            "Centre Médical des Vignes",
        ];
        SurrogatePool::new(
            persons.iter().map(|s| s.to_string()).collect(),
            organizations.iter().map(|s| s.to_string()).collect(),
        )
        .expect("built-in pools are non-empty")
    }
}

/// Settings for one sanitization run.
#[derive(Debug, Clone)]
pub struct SanitizeOptions {
    pub epsilon: Epsilon,
    pub locale: LocaleConfig,
    /// Reassign sanitized date magnitudes so chronological ranks match the
    /// originals. Off by default.
    pub restore_order: bool,
    /// Optional upper bound applied to sanitized ages.
    pub age_cap: Option<u64>,
    pub k: usize,
    pub geo_threshold_km: f64,
    pub policy: Policy,
}

impl SanitizeOptions {
    pub fn new(epsilon: Epsilon, locale: LocaleConfig) -> Self {
        SanitizeOptions {
            epsilon,
            locale,
            restore_order: false,
            age_cap: None,
            k: DEFAULT_K,
            geo_threshold_km: DEFAULT_GEO_THRESHOLD_KM,
            policy: Policy::Strict,
        }
    }
}

/// One rewritten span. Original offsets travel with the replacement so
/// downstream annotations can be re-aligned; the original surface never
/// does.
#[derive(Debug, Clone, Serialize)]
pub struct Replacement {
    pub orig_start: usize,
    pub orig_end: usize,
    pub label: EntityLabel,
    /// The surrogate surface spliced into the text.
    pub surface: String,
    pub new_start: usize,
    pub new_end: usize,
}

/// Privacy-budget share bound to one canonical key. Only the label is
/// reported; the key itself would reveal the original value.
#[derive(Debug, Clone, Serialize)]
pub struct KeyShare {
    pub label: EntityLabel,
    pub epsilon_share: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BudgetReport {
    pub epsilon_total: f64,
    pub dp_key_count: usize,
    pub key_shares: Vec<KeyShare>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SanitizedDocument {
    pub doc_id: String,
    pub text: String,
    pub replacements: Vec<Replacement>,
    pub budget: BudgetReport,
    pub warnings: Vec<String>,
}

/// Per-document audit: counts, budget, warnings. Contains offsets and
/// labels but no surface from the source document.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub doc_id: String,
    pub span_count: usize,
    pub label_counts: BTreeMap<String, usize>,
    pub epsilon_total: f64,
    pub dp_key_count: usize,
    pub key_shares: Vec<KeyShare>,
    pub warnings: Vec<String>,
}

pub fn audit_report(sdoc: &SanitizedDocument) -> AuditReport {
    let mut label_counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in &sdoc.replacements {
        *label_counts.entry(r.label.as_str().to_string()).or_insert(0) += 1;
    }
    AuditReport {
        doc_id: sdoc.doc_id.clone(),
        span_count: sdoc.replacements.len(),
        label_counts,
        epsilon_total: sdoc.budget.epsilon_total,
        dp_key_count: sdoc.budget.dp_key_count,
        key_shares: sdoc.budget.key_shares.clone(),
        warnings: sdoc.warnings.clone(),
    }
}

/// The sanitized document re-expressed in the annotation input format:
/// same doc_id, rewritten text, spans carrying surrogate surfaces at their
/// new offsets. The result round-trips through the annotation parser.
pub fn sanitized_annotations(sdoc: &SanitizedDocument) -> AnnotatedDocument {
    AnnotatedDocument {
        doc_id: sdoc.doc_id.clone(),
        text: sdoc.text.clone(),
        spans: sdoc
            .replacements
            .iter()
            .map(|r| EntitySpan {
                start: r.new_start,
                end: r.new_end,
                label: r.label,
                surface: r.surface.clone(),
            })
            .collect(),
    }
}

fn placeholder(label: EntityLabel) -> String {
    format!("[{}]", label.as_str())
}

/// What the draw phase stores per canonical key.
#[derive(Debug, Clone)]
enum Surrogate {
    /// Sanitized temporal magnitude; each occurrence renders it in its own
    /// format.
    Magnitude(u64),
    /// Index into the location database.
    Place(usize),
    /// Literal replacement text (pool names, identifiers, placeholders).
    Text(String),
}

/// How one span will be rewritten.
#[derive(Debug, Clone)]
enum PlanAction {
    Temporal { entity: TemporalEntity },
    Location { origin: usize },
    /// Lenient fallback for a location absent from the database.
    LocationFallback,
    Pool,
    Layout,
    /// Lenient fallback for an unparseable date or age.
    Placeholder,
}

#[derive(Debug, Clone)]
struct SpanPlan {
    start: usize,
    end: usize,
    label: EntityLabel,
    surface: String,
    key: MemoKey,
    action: PlanAction,
}

/// Formats in which one temporal key occurs, plus its original magnitude.
struct TemporalKeyInfo {
    original_magnitude: u64,
    variants: Vec<TemporalEntity>,
    any_absolute: bool,
}

/// True when rendering `magnitude` in any of the key's formats would
/// reproduce a surface from the source document (or cannot render at all).
fn renders_forbidden(
    magnitude: u64,
    variants: &[TemporalEntity],
    locale: &LocaleConfig,
    forbidden: &BTreeSet<String>,
) -> bool {
    variants.iter().any(|variant| {
        let candidate = TemporalEntity {
            magnitude,
            ..variant.clone()
        };
        match render_temporal(&candidate, locale) {
            Ok(s) => forbidden.contains(&s.to_lowercase()),
            Err(_) => true,
        }
    })
}

/// Outcome of a draw loop that ran out of attempts.
fn exhausted(
    policy: Policy,
    doc_id: &str,
    plan: &SpanPlan,
    what: &str,
    warnings: &mut Vec<String>,
) -> Result<Surrogate> {
    let message = format!(
        "span {}..{} ({}): no admissible {} after {} attempts",
        plan.start,
        plan.end,
        plan.label.as_str(),
        what,
        MAX_REDRAWS
    );
    match policy {
        Policy::Strict => Err(Error::Policy {
            doc_id: doc_id.to_string(),
            message,
        }),
        Policy::Lenient => {
            warnings.push(format!("{message}; placeholder substituted"));
            Ok(Surrogate::Text(placeholder(plan.label)))
        }
    }
}

/// Rewrites one annotated document. See the module docs for the phase
/// structure; the returned document carries the rewritten text, the
/// replacement list with both offset systems, the budget report, and any
/// warnings the run produced.
pub fn sanitize_document(
    doc: AnnotatedDocument,
    db: Option<&LocationDb>,
    pools: &SurrogatePool,
    options: &SanitizeOptions,
    rng: &mut RandomSource,
) -> Result<SanitizedDocument> {
    let doc = doc.validated()?;
    let ledger = allocate_budget(&doc, options.epsilon, &options.locale, options.policy)?;
    let mut warnings: Vec<String> = Vec::new();

    // Case-folded original surfaces; no generated surrogate may render one.
    let forbidden: BTreeSet<String> =
        doc.spans.iter().map(|s| s.surface.to_lowercase()).collect();

    // Phase 1: decide how each span will be rewritten.
    let mut plans: Vec<SpanPlan> = Vec::with_capacity(doc.spans.len());
    let mut temporal_info: BTreeMap<MemoKey, TemporalKeyInfo> = BTreeMap::new();
    for span in &doc.spans {
        let (key, action) = match span.label {
            EntityLabel::Date | EntityLabel::Age => {
                match parse_temporal(&span.surface, span.label, &options.locale) {
                    Ok(entity) => {
                        let key = (span.label, temporal_key(&entity));
                        let info =
                            temporal_info
                                .entry(key.clone())
                                .or_insert_with(|| TemporalKeyInfo {
                                    original_magnitude: entity.magnitude,
                                    variants: Vec::new(),
                                    any_absolute: false,
                                });
                        if !info.variants.iter().any(|v| {
                            v.kind == entity.kind
                                && v.granularity == entity.granularity
                                && v.format == entity.format
                        }) {
                            info.variants.push(entity.clone());
                        }
                        if entity.kind == TemporalKind::AbsoluteDate {
                            info.any_absolute = true;
                        }
                        (key, PlanAction::Temporal { entity })
                    }
                    Err(e) => match options.policy {
                        Policy::Strict => return Err(e),
                        Policy::Lenient => {
                            warnings.push(format!(
                                "span {}..{} ({}): unparseable surface, placeholder substituted",
                                span.start,
                                span.end,
                                span.label.as_str()
                            ));
                            (
                                (span.label, canonical_key(&span.surface)),
                                PlanAction::Placeholder,
                            )
                        }
                    },
                }
            }
            EntityLabel::Loc => {
                let db = db.ok_or_else(|| {
                    Error::Config(
                        "a location database is required to rewrite LOC spans".to_string(),
                    )
                })?;
                let key = (span.label, canonical_key(&span.surface));
                match db.index_of(&span.surface) {
                    Some(origin) => (key, PlanAction::Location { origin }),
                    None => match options.policy {
                        Policy::Strict => {
                            return Err(Error::UnknownLocation(span.surface.clone()))
                        }
                        Policy::Lenient => {
                            warnings.push(format!(
                                "span {}..{} (LOC): surface not in the location database, \
                                 uniform fallback draw",
                                span.start, span.end
                            ));
                            (key, PlanAction::LocationFallback)
                        }
                    },
                }
            }
            EntityLabel::Per | EntityLabel::Org => {
                ((span.label, canonical_key(&span.surface)), PlanAction::Pool)
            }
            EntityLabel::Tel | EntityLabel::Qid | EntityLabel::Ref => (
                (span.label, canonical_key(&span.surface)),
                PlanAction::Layout,
            ),
        };
        plans.push(SpanPlan {
            start: span.start,
            end: span.end,
            label: span.label,
            surface: span.surface.clone(),
            key,
            action,
        });
    }

    // Phase 2: one draw per distinct key, in first-occurrence order.
    let mut memo: MemoTable<Surrogate> = MemoTable::new();
    let mut used_person_names: BTreeSet<usize> = BTreeSet::new();
    for plan in &plans {
        if memo.get(&plan.key).is_some() {
            continue;
        }
        let surrogate = match &plan.action {
            PlanAction::Temporal { entity } => {
                let share = ledger
                    .share(&plan.key)
                    .expect("every parsed temporal key holds a budget share");
                let info = &temporal_info[&plan.key];
                let mut drawn = None;
                for _ in 0..MAX_REDRAWS {
                    let mut candidate = sanitize_temporal(entity, share, rng);
                    if plan.label == EntityLabel::Age {
                        if let Some(cap) = options.age_cap {
                            candidate.magnitude = candidate.magnitude.min(cap);
                        }
                    }
                    if !renders_forbidden(
                        candidate.magnitude,
                        &info.variants,
                        &options.locale,
                        &forbidden,
                    ) {
                        drawn = Some(Surrogate::Magnitude(candidate.magnitude));
                        break;
                    }
                }
                match drawn {
                    Some(s) => s,
                    None => exhausted(
                        options.policy,
                        &doc.doc_id,
                        plan,
                        "noised value",
                        &mut warnings,
                    )?,
                }
            }
            PlanAction::Location { origin } => {
                let db = db.expect("checked during planning");
                let share = ledger
                    .share(&plan.key)
                    .expect("every known location key holds a budget share");
                let candidates =
                    candidate_set(db, *origin, options.k, options.geo_threshold_km)?;
                if candidates.is_short() {
                    warnings.push(format!(
                        "span {}..{} (LOC): geographic threshold leaves {} of {} requested \
                         candidates",
                        plan.start,
                        plan.end,
                        candidates.entries.len(),
                        options.k
                    ));
                }
                let dist = location_distribution(&candidates, share);
                let mut drawn = None;
                for _ in 0..MAX_REDRAWS {
                    let idx = draw_from(&dist, rng);
                    if !forbidden.contains(&db.record(idx).name.to_lowercase()) {
                        drawn = Some(Surrogate::Place(idx));
                        break;
                    }
                }
                match drawn {
                    Some(s) => s,
                    None => exhausted(
                        options.policy,
                        &doc.doc_id,
                        plan,
                        "surrogate place",
                        &mut warnings,
                    )?,
                }
            }
            PlanAction::LocationFallback => {
                let db = db.expect("checked during planning");
                let mut drawn = None;
                for _ in 0..MAX_REDRAWS {
                    let idx = rng.below(db.len());
                    if !forbidden.contains(&db.record(idx).name.to_lowercase()) {
                        drawn = Some(Surrogate::Place(idx));
                        break;
                    }
                }
                match drawn {
                    Some(s) => s,
                    None => exhausted(
                        options.policy,
                        &doc.doc_id,
                        plan,
                        "fallback place",
                        &mut warnings,
                    )?,
                }
            }
            PlanAction::Pool => {
                if plan.label == EntityLabel::Per {
                    // Without replacement: two distinct people never share
                    // a surrogate within one document.
                    let available: Vec<usize> = (0..pools.persons.len())
                        .filter(|i| {
                            !used_person_names.contains(i)
                                && !forbidden.contains(&pools.persons[*i].to_lowercase())
                        })
                        .collect();
                    if available.is_empty() {
                        exhausted(
                            options.policy,
                            &doc.doc_id,
                            plan,
                            "pool name",
                            &mut warnings,
                        )?
                    } else {
                        let pick = available[rng.below(available.len())];
                        used_person_names.insert(pick);
                        Surrogate::Text(pools.persons[pick].clone())
                    }
                } else {
                    let available: Vec<usize> = (0..pools.organizations.len())
                        .filter(|i| !forbidden.contains(&pools.organizations[*i].to_lowercase()))
                        .collect();
                    if available.is_empty() {
                        exhausted(
                            options.policy,
                            &doc.doc_id,
                            plan,
                            "pool name",
                            &mut warnings,
                        )?
                    } else {
                        Surrogate::Text(pools.organizations[available[rng.below(available.len())]].clone())
                    }
                }
            }
            PlanAction::Layout => {
                let mut drawn = None;
                for _ in 0..MAX_REDRAWS {
                    let candidate = pools.layout_surrogate(&plan.surface, rng);
                    if !forbidden.contains(&candidate.to_lowercase()) {
                        drawn = Some(Surrogate::Text(candidate));
                        break;
                    }
                }
                match drawn {
                    Some(s) => s,
                    None => exhausted(
                        options.policy,
                        &doc.doc_id,
                        plan,
                        "identifier",
                        &mut warnings,
                    )?,
                }
            }
            PlanAction::Placeholder => Surrogate::Text(placeholder(plan.label)),
        };
        memo.insert(plan.key.clone(), surrogate);
    }

    // Phase 3: optional order restoration over absolute dates. The drawn
    // magnitudes are sorted and reassigned so sanitized ranks equal the
    // original ranks; collisions with original surfaces are stepped over.
    if options.restore_order {
        let mut date_keys: Vec<(MemoKey, u64, u64)> = temporal_info
            .iter()
            .filter(|(key, info)| key.0 == EntityLabel::Date && info.any_absolute)
            .filter_map(|(key, info)| match memo.get(key) {
                Some(Surrogate::Magnitude(v)) => {
                    Some((key.clone(), info.original_magnitude, *v))
                }
                _ => None,
            })
            .collect();
        if date_keys.len() >= 2 {
            date_keys.sort_by_key(|(_, orig, _)| *orig);
            let mut drawn: Vec<u64> = date_keys.iter().map(|(_, _, v)| *v).collect();
            drawn.sort_unstable();
            let mut prev: Option<u64> = None;
            for ((key, _, _), assigned) in date_keys.iter().zip(drawn) {
                let info = &temporal_info[key];
                let mut v = assigned;
                if let Some(p) = prev {
                    if v <= p {
                        v = p + 1;
                    }
                }
                let mut bumps = 0;
                while renders_forbidden(v, &info.variants, &options.locale, &forbidden) {
                    v += 1;
                    bumps += 1;
                    if bumps > MAX_ORDER_BUMPS {
                        match options.policy {
                            Policy::Strict => {
                                return Err(Error::Policy {
                                    doc_id: doc.doc_id.clone(),
                                    message: format!(
                                        "order restoration found no admissible magnitude \
                                         within {MAX_ORDER_BUMPS} steps"
                                    ),
                                })
                            }
                            Policy::Lenient => {
                                warnings.push(
                                    "order restoration ran out of admissible magnitudes; \
                                     a colliding value may remain"
                                        .to_string(),
                                );
                                break;
                            }
                        }
                    }
                }
                prev = Some(v);
                memo.insert(key.clone(), Surrogate::Magnitude(v));
            }
        }
    }

    // Phase 4: render every occurrence in its own surface format.
    let mut rendered: Vec<String> = Vec::with_capacity(plans.len());
    for plan in &plans {
        let surrogate = memo.get(&plan.key).expect("drawn in phase 2").clone();
        let surface = match (&plan.action, surrogate) {
            (PlanAction::Temporal { entity }, Surrogate::Magnitude(v)) => {
                let candidate = TemporalEntity {
                    magnitude: v,
                    ..entity.clone()
                };
                match render_temporal(&candidate, &options.locale) {
                    Ok(s) => s,
                    Err(e) => match options.policy {
                        Policy::Strict => return Err(e),
                        Policy::Lenient => {
                            warnings.push(format!(
                                "span {}..{} ({}): surrogate does not render, placeholder \
                                 substituted",
                                plan.start,
                                plan.end,
                                plan.label.as_str()
                            ));
                            placeholder(plan.label)
                        }
                    },
                }
            }
            (_, Surrogate::Place(idx)) => db.expect("checked during planning").record(idx).name.clone(),
            (_, Surrogate::Text(t)) => t,
            (_, Surrogate::Magnitude(_)) => unreachable!("magnitudes only bind temporal plans"),
        };
        rendered.push(surface);
    }

    // Phase 5: splice right to left so earlier offsets stay valid.
    let mut chars: Vec<char> = doc.text.chars().collect();
    for (plan, surface) in plans.iter().zip(&rendered).rev() {
        chars.splice(plan.start..plan.end, surface.chars());
    }
    let text: String = chars.into_iter().collect();

    // New offsets by cumulative length delta, left to right.
    let mut replacements = Vec::with_capacity(plans.len());
    let mut delta: i64 = 0;
    for (plan, surface) in plans.iter().zip(&rendered) {
        let surrogate_len = surface.chars().count();
        let new_start = (plan.start as i64 + delta) as usize;
        replacements.push(Replacement {
            orig_start: plan.start,
            orig_end: plan.end,
            label: plan.label,
            surface: surface.clone(),
            new_start,
            new_end: new_start + surrogate_len,
        });
        delta += surrogate_len as i64 - (plan.end - plan.start) as i64;
    }

    // Phase 6: containment scan. Surfaces shorter than 3 characters are
    // skipped (and the skip recorded) to avoid trivial collisions.
    let folded_text = text.to_lowercase();
    for plan in &plans {
        let folded = plan.surface.to_lowercase();
        if folded.chars().count() < 3 {
            warnings.push(format!(
                "containment scan skipped span {}..{} ({}): surface shorter than 3 characters",
                plan.start,
                plan.end,
                plan.label.as_str()
            ));
            continue;
        }
        if folded_text.contains(&folded) {
            let message = format!(
                "sanitized text still contains the surface of span {}..{} ({})",
                plan.start,
                plan.end,
                plan.label.as_str()
            );
            match options.policy {
                Policy::Strict => {
                    return Err(Error::Policy {
                        doc_id: doc.doc_id.clone(),
                        message,
                    })
                }
                Policy::Lenient => warnings.push(message),
            }
        }
    }

    let key_shares = ledger
        .shares()
        .iter()
        .map(|((label, _), eps)| KeyShare {
            label: *label,
            epsilon_share: eps.get(),
        })
        .collect();
    Ok(SanitizedDocument {
        doc_id: doc.doc_id,
        text,
        replacements,
        budget: BudgetReport {
            epsilon_total: options.epsilon.get(),
            dp_key_count: ledger.dp_key_count(),
            key_shares,
        },
        warnings,
    })
}
