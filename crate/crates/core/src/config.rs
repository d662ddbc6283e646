//! Locale and policy settings shared across the pipeline.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Surface language for month names and age/relative phrases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Fr,
}

impl FromStr for Language {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "en" => Ok(Language::En),
            "fr" => Ok(Language::Fr),
            other => Err(Error::Config(format!(
                "unknown locale {other:?} (expected en or fr)"
            ))),
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::En => "en",
            Language::Fr => "fr",
        })
    }
}

/// Field order for ambiguous numeric dates such as 03/04/2020.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayMonthOrder {
    Dmy,
    Mdy,
}

impl FromStr for DayMonthOrder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "dmy" => Ok(DayMonthOrder::Dmy),
            "mdy" => Ok(DayMonthOrder::Mdy),
            other => Err(Error::Config(format!(
                "unknown day-month order {other:?} (expected dmy or mdy)"
            ))),
        }
    }
}

impl fmt::Display for DayMonthOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DayMonthOrder::Dmy => "dmy",
            DayMonthOrder::Mdy => "mdy",
        })
    }
}

/// Everything the temporal subsystem needs to interpret a surface form:
/// language, numeric field order, and the reference date that absolute
/// dates are measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LocaleConfig {
    pub language: Language,
    pub day_month_order: DayMonthOrder,
    pub reference_date: NaiveDate,
}

impl LocaleConfig {
    pub fn new(
        language: Language,
        day_month_order: DayMonthOrder,
        reference_date: NaiveDate,
    ) -> Self {
        LocaleConfig {
            language,
            day_month_order,
            reference_date,
        }
    }
}

/// Failure handling for spans the pipeline cannot substitute faithfully.
/// Strict aborts the document; Lenient degrades (placeholder or uniform
/// fallback) and records the event in the audit report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    #[default]
    Strict,
    Lenient,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn language_parse_round_trip() {
        assert_eq!("en".parse::<Language>().unwrap(), Language::En);
        assert_eq!("FR".parse::<Language>().unwrap(), Language::Fr);
        assert!("de".parse::<Language>().is_err());
    }

    #[test]
    fn order_parse_round_trip() {
        assert_eq!("dmy".parse::<DayMonthOrder>().unwrap(), DayMonthOrder::Dmy);
        assert_eq!("MDY".parse::<DayMonthOrder>().unwrap(), DayMonthOrder::Mdy);
        assert!("ymd".parse::<DayMonthOrder>().is_err());
    }
}
