//! Temporal surfaces: parsing into duration form, rendering back out.
//!
//! An absolute date is stored as its distance in days from the configured
//! reference date; a relative phrase or age keeps its stated magnitude and
//! unit. Rendering inverts parsing for every supported surface form, so a
//! sanitized magnitude comes back in the same shape the original used:
//! numeric dates stay numeric, long-form dates stay long-form, ages keep
//! their unit word.

use chrono::{Datelike, Days, NaiveDate};
use regex::Regex;
use std::fmt;
use std::sync::LazyLock;

use crate::annotation::EntityLabel;
use crate::config::{DayMonthOrder, Language, LocaleConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Granularity {
    Day,
    Week,
    Month,
    Year,
}

impl Granularity {
    pub fn as_str(&self) -> &'static str {
        match self {
            Granularity::Day => "DAY",
            Granularity::Week => "WEEK",
            Granularity::Month => "MONTH",
            Granularity::Year => "YEAR",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TemporalKind {
    /// A calendar date, measured in days before the reference date.
    AbsoluteDate,
    /// An age or a "N units ago" phrase, measured in its own unit.
    Relative,
}

/// Shape of the surface form, with enough detail to reproduce it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PatternShape {
    /// 12/02/2020, 3/4/20, 03/04/2020. Field order comes from the descriptor.
    NumericSlash {
        four_digit_year: bool,
        pad_day: bool,
        pad_month: bool,
    },
    /// 2020-02-12.
    Iso,
    /// February 26, 2020 (en) or 26 février 2020 (fr). `first_ordinal` keeps
    /// the French "1er" spelling when the original used it.
    LongMonth { first_ordinal: bool },
    /// 40 years / 40 years old / 40 ans.
    BareAge { old_suffix: bool },
    /// 10 years ago / il y a 10 ans.
    RelativeAgo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FormatDescriptor {
    pub shape: PatternShape,
    pub language: Language,
    pub order: DayMonthOrder,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TemporalEntity {
    pub kind: TemporalKind,
    pub magnitude: u64,
    pub granularity: Granularity,
    pub format: FormatDescriptor,
}

const MONTHS_EN: [&str; 12] = [
    "January",
    "February",
    "March",
    "April",
    "May",
    "June",
    "July",
    "August",
    "September",
    "October",
    "November",
    "December",
];

const MONTHS_FR: [&str; 12] = [
    "janvier",
    "février",
    "mars",
    "avril",
    "mai",
    "juin",
    "juillet",
    "août",
    "septembre",
    "octobre",
    "novembre",
    "décembre",
];

fn month_number(token: &str, table: &[&str; 12]) -> Option<u32> {
    let lower = token.to_lowercase();
    table
        .iter()
        .position(|m| m.to_lowercase() == lower)
        .map(|i| i as u32 + 1)
}

macro_rules! anchored {
    ($name:ident, $re:expr) => {
        static $name: LazyLock<Regex> = LazyLock::new(|| Regex::new($re).unwrap());
    };
}

anchored!(RE_ISO, r"^(\d{4})-(\d{2})-(\d{2})$");
anchored!(RE_SLASH, r"^(\d{1,2})/(\d{1,2})/(\d{4}|\d{2})$");
anchored!(
    RE_LONG_EN,
    r"(?i)^(january|february|march|april|may|june|july|august|september|october|november|december) (\d{1,2}), (\d{4})$"
);
anchored!(
    RE_LONG_FR,
    r"(?i)^(\d{1,2})(er)? (janvier|février|mars|avril|mai|juin|juillet|août|septembre|octobre|novembre|décembre) (\d{4})$"
);
anchored!(RE_AGO_EN, r"^(\d{1,3}) (years?|months?|weeks?|days?) ago$");
anchored!(RE_AGO_FR, r"^il y a (\d{1,3}) (ans?|mois|semaines?|jours?)$");
anchored!(RE_AGE_EN, r"^(\d{1,3}) (years?|months?|weeks?|days?)( old)?$");
anchored!(RE_AGE_FR, r"^(\d{1,3}) (ans?|mois|semaines?|jours?)$");

fn unit_granularity_en(word: &str) -> Granularity {
    match word.trim_end_matches('s') {
        "year" => Granularity::Year,
        "month" => Granularity::Month,
        "week" => Granularity::Week,
        _ => Granularity::Day,
    }
}

fn unit_granularity_fr(word: &str) -> Granularity {
    match word {
        "an" | "ans" => Granularity::Year,
        "mois" => Granularity::Month,
        "semaine" | "semaines" => Granularity::Week,
        _ => Granularity::Day,
    }
}

fn unit_word(granularity: Granularity, language: Language, magnitude: u64) -> &'static str {
    let plural = magnitude != 1;
    match (language, granularity, plural) {
        (Language::En, Granularity::Year, false) => "year",
        (Language::En, Granularity::Year, true) => "years",
        (Language::En, Granularity::Month, false) => "month",
        (Language::En, Granularity::Month, true) => "months",
        (Language::En, Granularity::Week, false) => "week",
        (Language::En, Granularity::Week, true) => "weeks",
        (Language::En, Granularity::Day, false) => "day",
        (Language::En, Granularity::Day, true) => "days",
        (Language::Fr, Granularity::Year, false) => "an",
        (Language::Fr, Granularity::Year, true) => "ans",
        (Language::Fr, Granularity::Month, _) => "mois",
        (Language::Fr, Granularity::Week, false) => "semaine",
        (Language::Fr, Granularity::Week, true) => "semaines",
        (Language::Fr, Granularity::Day, false) => "jour",
        (Language::Fr, Granularity::Day, true) => "jours",
    }
}

fn supported_forms(label: EntityLabel) -> &'static str {
    match label {
        EntityLabel::Date => {
            "numeric d/m/y or m/d/y (2- or 4-digit year), yyyy-mm-dd, \
             'February 26, 2020', '26 février 2020', 'N units ago', 'il y a N unités'"
        }
        EntityLabel::Age => "'N years [old]', 'N ans' (also months/weeks/days units)",
        _ => "DATE and AGE spans only",
    }
}

fn parse_err(label: EntityLabel) -> Error {
    Error::TemporalParse {
        label: label.as_str().to_string(),
        supported: supported_forms(label).to_string(),
    }
}

/// Two-digit years pivot at 70: 00-69 map to 2000-2069, 70-99 to 1970-1999.
fn expand_two_digit_year(yy: i32) -> i32 {
    if yy < 70 {
        2000 + yy
    } else {
        1900 + yy
    }
}

fn absolute_entity(
    year: i32,
    month: u32,
    day: u32,
    format: FormatDescriptor,
    label: EntityLabel,
    locale: &LocaleConfig,
) -> Result<TemporalEntity> {
    let date = NaiveDate::from_ymd_opt(year, month, day).ok_or_else(|| parse_err(label))?;
    if date > locale.reference_date {
        return Err(Error::FutureDate {
            reference: locale.reference_date.to_string(),
        });
    }
    let magnitude = (locale.reference_date - date).num_days() as u64;
    Ok(TemporalEntity {
        kind: TemporalKind::AbsoluteDate,
        magnitude,
        granularity: Granularity::Day,
        format,
    })
}

/// Parses a DATE or AGE surface into duration form. The reference date and
/// numeric field order come from the locale; the language of the matched
/// surface is recorded in the descriptor, so a French phrase inside an
/// English-configured document still renders back in French.
pub fn parse_temporal(
    surface: &str,
    label: EntityLabel,
    locale: &LocaleConfig,
) -> Result<TemporalEntity> {
    match label {
        EntityLabel::Date => parse_date(surface, locale),
        EntityLabel::Age => parse_age(surface, locale),
        other => Err(parse_err(other)),
    }
}

fn parse_date(surface: &str, locale: &LocaleConfig) -> Result<TemporalEntity> {
    let label = EntityLabel::Date;
    if let Some(c) = RE_ISO.captures(surface) {
        let format = FormatDescriptor {
            shape: PatternShape::Iso,
            language: locale.language,
            order: locale.day_month_order,
        };
        return absolute_entity(
            c[1].parse().unwrap(),
            c[2].parse().unwrap(),
            c[3].parse().unwrap(),
            format,
            label,
            locale,
        );
    }
    if let Some(c) = RE_LONG_EN.captures(surface) {
        let month = month_number(&c[1], &MONTHS_EN).ok_or_else(|| parse_err(label))?;
        let format = FormatDescriptor {
            shape: PatternShape::LongMonth {
                first_ordinal: false,
            },
            language: Language::En,
            order: locale.day_month_order,
        };
        return absolute_entity(
            c[3].parse().unwrap(),
            month,
            c[2].parse().unwrap(),
            format,
            label,
            locale,
        );
    }
    if let Some(c) = RE_LONG_FR.captures(surface) {
        let month = month_number(&c[3], &MONTHS_FR).ok_or_else(|| parse_err(label))?;
        let format = FormatDescriptor {
            shape: PatternShape::LongMonth {
                first_ordinal: c.get(2).is_some(),
            },
            language: Language::Fr,
            order: locale.day_month_order,
        };
        return absolute_entity(
            c[4].parse().unwrap(),
            month,
            c[1].parse().unwrap(),
            format,
            label,
            locale,
        );
    }
    if let Some(entity) = parse_relative_ago(surface, locale) {
        return Ok(entity);
    }
    if let Some(c) = RE_SLASH.captures(surface) {
        let first: u32 = c[1].parse().unwrap();
        let second: u32 = c[2].parse().unwrap();
        let year_token = &c[3];
        let year = if year_token.len() == 4 {
            year_token.parse().unwrap()
        } else {
            expand_two_digit_year(year_token.parse().unwrap())
        };
        let (day, month, pad_day, pad_month) = match locale.day_month_order {
            DayMonthOrder::Dmy => (first, second, c[1].len() == 2, c[2].len() == 2),
            DayMonthOrder::Mdy => (second, first, c[2].len() == 2, c[1].len() == 2),
        };
        let format = FormatDescriptor {
            shape: PatternShape::NumericSlash {
                four_digit_year: year_token.len() == 4,
                pad_day,
                pad_month,
            },
            language: locale.language,
            order: locale.day_month_order,
        };
        return absolute_entity(year, month, day, format, label, locale);
    }
    Err(parse_err(label))
}

fn parse_relative_ago(surface: &str, locale: &LocaleConfig) -> Option<TemporalEntity> {
    let make = |magnitude: u64, granularity: Granularity, language: Language| TemporalEntity {
        kind: TemporalKind::Relative,
        magnitude,
        granularity,
        format: FormatDescriptor {
            shape: PatternShape::RelativeAgo,
            language,
            order: locale.day_month_order,
        },
    };
    if let Some(c) = RE_AGO_EN.captures(surface) {
        return Some(make(
            c[1].parse().unwrap(),
            unit_granularity_en(&c[2]),
            Language::En,
        ));
    }
    if let Some(c) = RE_AGO_FR.captures(surface) {
        return Some(make(
            c[1].parse().unwrap(),
            unit_granularity_fr(&c[2]),
            Language::Fr,
        ));
    }
    None
}

fn parse_age(surface: &str, locale: &LocaleConfig) -> Result<TemporalEntity> {
    let make = |magnitude: u64,
                granularity: Granularity,
                language: Language,
                old_suffix: bool| TemporalEntity {
        kind: TemporalKind::Relative,
        magnitude,
        granularity,
        format: FormatDescriptor {
            shape: PatternShape::BareAge { old_suffix },
            language,
            order: locale.day_month_order,
        },
    };
    // Try the configured language first so "40 ans" under an English locale
    // still resolves, and vice versa.
    let try_en = |s: &str| {
        RE_AGE_EN.captures(s).map(|c| {
            make(
                c[1].parse().unwrap(),
                unit_granularity_en(&c[2]),
                Language::En,
                c.get(3).is_some(),
            )
        })
    };
    let try_fr = |s: &str| {
        RE_AGE_FR.captures(s).map(|c| {
            make(
                c[1].parse().unwrap(),
                unit_granularity_fr(&c[2]),
                Language::Fr,
                false,
            )
        })
    };
    let parsed = match locale.language {
        Language::En => try_en(surface).or_else(|| try_fr(surface)),
        Language::Fr => try_fr(surface).or_else(|| try_en(surface)),
    };
    parsed.ok_or_else(|| parse_err(EntityLabel::Age))
}

/// Renders an entity back into its original surface shape. Absolute dates
/// resolve to `reference_date - magnitude` days; a magnitude pushing the
/// date before year 1 is a range error.
pub fn render_temporal(entity: &TemporalEntity, locale: &LocaleConfig) -> Result<String> {
    match entity.kind {
        TemporalKind::AbsoluteDate => {
            let date = locale
                .reference_date
                .checked_sub_days(Days::new(entity.magnitude))
                .filter(|d| d.year() >= 1)
                .ok_or(Error::DateRange {
                    magnitude: entity.magnitude,
                })?;
            Ok(render_date(date, &entity.format))
        }
        TemporalKind::Relative => Ok(render_relative(entity)),
    }
}

fn render_date(date: NaiveDate, format: &FormatDescriptor) -> String {
    let (y, m, d) = (date.year(), date.month(), date.day());
    match format.shape {
        PatternShape::Iso => format!("{y:04}-{m:02}-{d:02}"),
        PatternShape::NumericSlash {
            four_digit_year,
            pad_day,
            pad_month,
        } => {
            let day = if pad_day {
                format!("{d:02}")
            } else {
                d.to_string()
            };
            let month = if pad_month {
                format!("{m:02}")
            } else {
                m.to_string()
            };
            let year = if four_digit_year {
                format!("{y:04}")
            } else {
                format!("{:02}", y.rem_euclid(100))
            };
            match format.order {
                DayMonthOrder::Dmy => format!("{day}/{month}/{year}"),
                DayMonthOrder::Mdy => format!("{month}/{day}/{year}"),
            }
        }
        PatternShape::LongMonth { first_ordinal } => match format.language {
            Language::En => format!("{} {}, {}", MONTHS_EN[m as usize - 1], d, y),
            Language::Fr => {
                let day = if d == 1 && first_ordinal {
                    "1er".to_string()
                } else {
                    d.to_string()
                };
                format!("{} {} {}", day, MONTHS_FR[m as usize - 1], y)
            }
        },
        // A shape for relative phrases on an absolute date cannot be built
        // through parsing; render defensively as ISO.
        _ => format!("{y:04}-{m:02}-{d:02}"),
    }
}

fn render_relative(entity: &TemporalEntity) -> String {
    let n = entity.magnitude;
    let unit = unit_word(entity.granularity, entity.format.language, n);
    match (entity.format.shape, entity.format.language) {
        (PatternShape::BareAge { old_suffix }, Language::En) => {
            if old_suffix {
                format!("{n} {unit} old")
            } else {
                format!("{n} {unit}")
            }
        }
        (PatternShape::BareAge { .. }, Language::Fr) => format!("{n} {unit}"),
        (_, Language::En) => format!("{n} {unit} ago"),
        (_, Language::Fr) => format!("il y a {n} {unit}"),
    }
}

/// Distance between two temporal entities in their shared granularity unit.
/// Mixing granularities is a caller bug surfaced as a contract error.
pub fn temporal_distance(a: &TemporalEntity, b: &TemporalEntity) -> Result<u64> {
    if a.granularity != b.granularity {
        return Err(Error::GranularityMismatch {
            a: a.granularity.to_string(),
            b: b.granularity.to_string(),
        });
    }
    Ok(a.magnitude.abs_diff(b.magnitude))
}
