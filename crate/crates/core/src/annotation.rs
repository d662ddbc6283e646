//! Standoff annotations over clinical text.
//!
//! Offsets are Unicode scalar-value indices, not byte indices: a span is
//! `start..end` over the sequence of `char`s of the document text. Documents
//! are validated on load; downstream stages assume spans are in bounds,
//! sorted, and non-overlapping.

use regex::Regex;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Read;
use std::str::FromStr;
use std::sync::LazyLock;

use crate::config::{Language, LocaleConfig};
use crate::error::{Error, Result};

/// Closed set of entity categories. Anything else is a load error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EntityLabel {
    Per,
    Date,
    Loc,
    Org,
    Age,
    Tel,
    Ref,
    Qid,
}

impl EntityLabel {
    pub const ALL: [EntityLabel; 8] = [
        EntityLabel::Per,
        EntityLabel::Date,
        EntityLabel::Loc,
        EntityLabel::Org,
        EntityLabel::Age,
        EntityLabel::Tel,
        EntityLabel::Ref,
        EntityLabel::Qid,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EntityLabel::Per => "PER",
            EntityLabel::Date => "DATE",
            EntityLabel::Loc => "LOC",
            EntityLabel::Org => "ORG",
            EntityLabel::Age => "AGE",
            EntityLabel::Tel => "TEL",
            EntityLabel::Ref => "REF",
            EntityLabel::Qid => "QID",
        }
    }

    /// Labels whose surrogates are drawn from a noise mechanism and therefore
    /// receive a share of the privacy budget.
    pub fn consumes_budget(&self) -> bool {
        matches!(
            self,
            EntityLabel::Date | EntityLabel::Age | EntityLabel::Loc
        )
    }
}

impl fmt::Display for EntityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityLabel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "PER" => Ok(EntityLabel::Per),
            "DATE" => Ok(EntityLabel::Date),
            "LOC" => Ok(EntityLabel::Loc),
            "ORG" => Ok(EntityLabel::Org),
            "AGE" => Ok(EntityLabel::Age),
            "TEL" => Ok(EntityLabel::Tel),
            "REF" => Ok(EntityLabel::Ref),
            "QID" => Ok(EntityLabel::Qid),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }
}

/// One annotated region: `start` inclusive, `end` exclusive, in char offsets.
/// `surface` duplicates the covered text so files are auditable on their own.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub label: EntityLabel,
    pub surface: String,
}

/// A document plus its validated spans, sorted by start offset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedDocument {
    pub doc_id: String,
    pub text: String,
    pub spans: Vec<EntitySpan>,
}

/// Char-offset to byte-offset translation for one text. `byte_pos[i]` is the
/// byte index where char `i` starts; the last entry is `text.len()`.
#[derive(Debug, Clone)]
pub(crate) struct CharMap {
    byte_pos: Vec<usize>,
}

impl CharMap {
    pub(crate) fn new(text: &str) -> Self {
        let mut byte_pos: Vec<usize> = text.char_indices().map(|(b, _)| b).collect();
        byte_pos.push(text.len());
        CharMap { byte_pos }
    }

    pub(crate) fn len_chars(&self) -> usize {
        self.byte_pos.len() - 1
    }

    pub(crate) fn byte(&self, char_idx: usize) -> usize {
        self.byte_pos[char_idx]
    }

    /// Char index of a byte offset that falls on a char boundary.
    pub(crate) fn char_of_byte(&self, byte_idx: usize) -> usize {
        self.byte_pos
            .binary_search(&byte_idx)
            .expect("byte offset not on a char boundary")
    }
}

impl AnnotatedDocument {
    /// Parses and validates one document from its JSON form.
    pub fn parse_json(input: &str) -> Result<Self> {
        let doc: AnnotatedDocument =
            serde_json::from_str(input).map_err(|e| Error::AnnotationFormat {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        doc.validated()
    }

    /// Reads one document from any reader (file, stdin).
    pub fn load(mut reader: impl Read) -> Result<Self> {
        let mut buf = String::new();
        reader.read_to_string(&mut buf)?;
        Self::parse_json(&buf)
    }

    /// Serializes back to the same structured form. Text and spans survive a
    /// load/serialize round trip byte-identically.
    pub fn to_json_string(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("document serializes");
        out.push('\n');
        out
    }

    pub fn validated(mut self) -> Result<Self> {
        if self.doc_id.is_empty() {
            return Err(Error::EmptyDocId);
        }
        let map = CharMap::new(&self.text);
        let len = map.len_chars();
        for span in &self.spans {
            if span.start >= span.end || span.end > len {
                return Err(Error::SpanOutOfBounds {
                    start: span.start,
                    end: span.end,
                    label: span.label.as_str().to_string(),
                    text_len: len,
                });
            }
            let covered = &self.text[map.byte(span.start)..map.byte(span.end)];
            if covered != span.surface {
                return Err(Error::SurfaceMismatch {
                    start: span.start,
                    end: span.end,
                });
            }
        }
        self.spans.sort_by_key(|s| (s.start, s.end));
        for pair in self.spans.windows(2) {
            if pair[1].start < pair[0].end {
                return Err(Error::SpanOverlap {
                    a_start: pair[0].start,
                    a_end: pair[0].end,
                    a_label: pair[0].label.as_str().to_string(),
                    b_start: pair[1].start,
                    b_end: pair[1].end,
                    b_label: pair[1].label.as_str().to_string(),
                });
            }
        }
        Ok(self)
    }
}

struct PatternDef {
    regex: &'static LazyLock<Regex>,
    label: EntityLabel,
    /// Lower value wins when two matches start at the same offset and have
    /// the same length.
    priority: u8,
    language: Option<Language>,
}

macro_rules! pat {
    ($name:ident, $re:expr) => {
        static $name: LazyLock<Regex> = LazyLock::new(|| Regex::new($re).unwrap());
    };
}

pat!(RE_ISO, r"\b(\d{4})-(\d{2})-(\d{2})\b");
pat!(RE_SLASH, r"\b(\d{1,2})/(\d{1,2})/(\d{4}|\d{2})\b");
pat!(
    RE_LONG_EN,
    r"\b(January|February|March|April|May|June|July|August|September|October|November|December) (\d{1,2}), (\d{4})\b"
);
pat!(
    RE_LONG_FR,
    r"\b(\d{1,2})(er)? (janvier|février|mars|avril|mai|juin|juillet|août|septembre|octobre|novembre|décembre) (\d{4})\b"
);
pat!(RE_AGO_EN, r"\b(\d{1,3}) (years?|months?|weeks?|days?) ago\b");
pat!(
    RE_AGO_FR,
    r"\bil y a (\d{1,3}) (ans?|mois|semaines?|jours?)\b"
);
pat!(RE_AGE_EN, r"\b(\d{1,3}) years?\b");
pat!(RE_AGE_FR, r"\b(\d{1,3}) ans?\b");
pat!(
    RE_TEL_FR,
    r"(?:\+33[ .-]?\d|\b0\d)(?:[ .-]?\d{2}){4}\b"
);
pat!(RE_TEL_US, r"\b\d{3}[-.]\d{3}[-.]\d{4}\b");

/// Best-effort recognition of DATE, AGE, and TEL surfaces by locale-aware
/// patterns. Returns non-overlapping spans sorted by start; overlaps resolve
/// to the earliest, then longest, match. No recall guarantee: this seeds an
/// annotation pass, it does not replace one.
pub fn pattern_recognize(text: &str, locale: &LocaleConfig) -> Vec<EntitySpan> {
    let defs = [
        PatternDef {
            regex: &RE_AGO_EN,
            label: EntityLabel::Date,
            priority: 0,
            language: Some(Language::En),
        },
        PatternDef {
            regex: &RE_AGO_FR,
            label: EntityLabel::Date,
            priority: 0,
            language: Some(Language::Fr),
        },
        PatternDef {
            regex: &RE_LONG_EN,
            label: EntityLabel::Date,
            priority: 1,
            language: None,
        },
        PatternDef {
            regex: &RE_LONG_FR,
            label: EntityLabel::Date,
            priority: 1,
            language: None,
        },
        PatternDef {
            regex: &RE_ISO,
            label: EntityLabel::Date,
            priority: 2,
            language: None,
        },
        PatternDef {
            regex: &RE_SLASH,
            label: EntityLabel::Date,
            priority: 3,
            language: None,
        },
        PatternDef {
            regex: &RE_AGE_EN,
            label: EntityLabel::Age,
            priority: 4,
            language: Some(Language::En),
        },
        PatternDef {
            regex: &RE_AGE_FR,
            label: EntityLabel::Age,
            priority: 4,
            language: Some(Language::Fr),
        },
        PatternDef {
            regex: &RE_TEL_FR,
            label: EntityLabel::Tel,
            priority: 5,
            language: None,
        },
        PatternDef {
            regex: &RE_TEL_US,
            label: EntityLabel::Tel,
            priority: 5,
            language: None,
        },
    ];

    let map = CharMap::new(text);
    let mut candidates: Vec<(usize, usize, u8, EntityLabel)> = Vec::new();
    for def in &defs {
        if def.language.is_some_and(|l| l != locale.language) {
            continue;
        }
        for m in def.regex.find_iter(text) {
            let start = map.char_of_byte(m.start());
            let end = map.char_of_byte(m.end());
            candidates.push((start, end, def.priority, def.label));
        }
    }
    candidates.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(b.1.cmp(&a.1))
            .then(a.2.cmp(&b.2))
    });

    let mut spans = Vec::new();
    let mut last_end = 0usize;
    for (start, end, _, label) in candidates {
        if start < last_end {
            continue;
        }
        let surface = text[map.byte(start)..map.byte(end)].to_string();
        spans.push(EntitySpan {
            start,
            end,
            label,
            surface,
        });
        last_end = end;
    }
    spans
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::DayMonthOrder;
    use chrono::NaiveDate;

    fn locale(language: Language) -> LocaleConfig {
        LocaleConfig::new(
            language,
            DayMonthOrder::Dmy,
            NaiveDate::from_ymd_opt(2020, 12, 31).unwrap(),
        )
    }

    fn doc_json(text: &str, spans: &[(usize, usize, &str, &str)]) -> String {
        let spans: Vec<serde_json::Value> = spans
            .iter()
            .map(|(s, e, l, surf)| {
                serde_json::json!({"start": s, "end": e, "label": l, "surface": surf})
            })
            .collect();
        serde_json::json!({"doc_id": "d1", "text": text, "spans": spans}).to_string()
    }

    #[test]
    fn label_round_trip() {
        for label in EntityLabel::ALL {
            assert_eq!(label.as_str().parse::<EntityLabel>().unwrap(), label);
        }
        assert!(matches!(
            "PERSON".parse::<EntityLabel>(),
            Err(Error::UnknownLabel(_))
        ));
    }

    #[test]
    fn loads_and_sorts_spans() {
        let json = doc_json(
            "seen in Dijon on 12/02/2020",
            &[(17, 27, "DATE", "12/02/2020"), (8, 13, "LOC", "Dijon")],
        );
        let doc = AnnotatedDocument::parse_json(&json).unwrap();
        assert_eq!(doc.spans[0].label, EntityLabel::Loc);
        assert_eq!(doc.spans[1].label, EntityLabel::Date);
    }

    #[test]
    fn zero_spans_is_valid() {
        let doc = AnnotatedDocument::parse_json(&doc_json("nothing here", &[])).unwrap();
        assert!(doc.spans.is_empty());
    }

    #[test]
    fn rejects_empty_doc_id() {
        let json = serde_json::json!({"doc_id": "", "text": "x", "spans": []}).to_string();
        assert!(matches!(
            AnnotatedDocument::parse_json(&json),
            Err(Error::EmptyDocId)
        ));
    }

    #[test]
    fn rejects_unknown_label_with_location() {
        let json = doc_json("Dijon", &[(0, 5, "CITY", "Dijon")]);
        let err = AnnotatedDocument::parse_json(&json).unwrap_err();
        match err {
            Error::AnnotationFormat { line, .. } => assert!(line >= 1),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_out_of_bounds_and_inverted() {
        let json = doc_json("abc", &[(1, 9, "LOC", "bc")]);
        assert!(matches!(
            AnnotatedDocument::parse_json(&json),
            Err(Error::SpanOutOfBounds { .. })
        ));
        let json = doc_json("abc", &[(2, 2, "LOC", "")]);
        assert!(matches!(
            AnnotatedDocument::parse_json(&json),
            Err(Error::SpanOutOfBounds { .. })
        ));
    }

    #[test]
    fn rejects_surface_mismatch() {
        let json = doc_json("Dijon", &[(0, 5, "LOC", "Lyon!")]);
        assert!(matches!(
            AnnotatedDocument::parse_json(&json),
            Err(Error::SurfaceMismatch { start: 0, end: 5 })
        ));
    }

    #[test]
    fn rejects_overlap_naming_both_spans() {
        let json = doc_json(
            "Dijon area",
            &[(0, 5, "LOC", "Dijon"), (3, 8, "ORG", "on ar")],
        );
        let err = AnnotatedDocument::parse_json(&json).unwrap_err();
        match err {
            Error::SpanOverlap {
                a_start,
                a_end,
                b_start,
                b_end,
                ..
            } => {
                assert_eq!((a_start, a_end), (0, 5));
                assert_eq!((b_start, b_end), (3, 8));
            }
            other => panic!("expected overlap error, got {other:?}"),
        }
    }

    #[test]
    fn touching_spans_are_allowed() {
        let json = doc_json("DijonLyon", &[(0, 5, "LOC", "Dijon"), (5, 9, "LOC", "Lyon")]);
        assert!(AnnotatedDocument::parse_json(&json).is_ok());
    }

    #[test]
    fn offsets_are_char_offsets() {
        // é is 2 bytes but 1 char; span offsets must count chars.
        let text = "né à Dijon";
        let json = doc_json(text, &[(5, 10, "LOC", "Dijon")]);
        let doc = AnnotatedDocument::parse_json(&json).unwrap();
        assert_eq!(doc.spans[0].surface, "Dijon");
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let json = doc_json(
            "né à Dijon le 12/02/2020",
            &[(5, 10, "LOC", "Dijon"), (14, 24, "DATE", "12/02/2020")],
        );
        let doc = AnnotatedDocument::parse_json(&json).unwrap();
        let once = doc.to_json_string();
        let reloaded = AnnotatedDocument::parse_json(&once).unwrap();
        assert_eq!(doc, reloaded);
        assert_eq!(once, reloaded.to_json_string());
    }

    #[test]
    fn recognizes_english_mixture() {
        let text = "admitted from 12/02/2020 to February 26, 2020, 40 years old, call 555-123-4567";
        let spans = pattern_recognize(text, &locale(Language::En));
        let got: Vec<(&str, &str)> = spans
            .iter()
            .map(|s| (s.label.as_str(), s.surface.as_str()))
            .collect();
        assert_eq!(
            got,
            vec![
                ("DATE", "12/02/2020"),
                ("DATE", "February 26, 2020"),
                ("AGE", "40 years"),
                ("TEL", "555-123-4567"),
            ]
        );
    }

    #[test]
    fn recognizes_french_mixture() {
        let text = "vu le 26 février 2020, il y a 10 ans, 40 ans, tél 03 80 12 34 56";
        let spans = pattern_recognize(text, &locale(Language::Fr));
        let got: Vec<(&str, &str)> = spans
            .iter()
            .map(|s| (s.label.as_str(), s.surface.as_str()))
            .collect();
        assert_eq!(
            got,
            vec![
                ("DATE", "26 février 2020"),
                ("DATE", "il y a 10 ans"),
                ("AGE", "40 ans"),
                ("TEL", "03 80 12 34 56"),
            ]
        );
    }

    #[test]
    fn relative_phrase_beats_bare_age() {
        let spans = pattern_recognize("seen 10 years ago", &locale(Language::En));
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].label, EntityLabel::Date);
        assert_eq!(spans[0].surface, "10 years ago");
    }

    #[test]
    fn iso_dates_recognized() {
        let spans = pattern_recognize("op on 2020-02-12", &locale(Language::En));
        assert_eq!(spans[0].surface, "2020-02-12");
        assert_eq!(spans[0].label, EntityLabel::Date);
    }
}
