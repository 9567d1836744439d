//! Dictionary-driven section segmentation of extracted body text.
//!
//! A line opens a section when its whole normalized text is a dictionary key.
//! Sections run until the next title line, so the spans plus the untitled
//! prefix tile the input exactly.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::LineRef;
use crate::extractor::ExtractedText;
use crate::features::strip_accents_lower;

/// The bundled dictionary, `term<TAB>type` per line.
pub const DEFAULT_DICTIONARY_TSV: &str = include_str!("../assets/sections.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "&'static str")]
pub enum SectionType {
    Antecedents,
    AntecedentsFamiliaux,
    Allergies,
    ModeDeVie,
    Traitement,
    TraitementEntree,
    TraitementSortie,
    Motif,
    HistoireMaladie,
    Evolution,
    ExamenClinique,
    Constantes,
    ExamensComplementaires,
    Conclusion,
    Indication,
    Resultats,
    Autres,
}

impl SectionType {
    pub const CORE: [SectionType; 14] = [
        SectionType::Antecedents,
        SectionType::AntecedentsFamiliaux,
        SectionType::Allergies,
        SectionType::ModeDeVie,
        SectionType::Traitement,
        SectionType::TraitementEntree,
        SectionType::TraitementSortie,
        SectionType::Motif,
        SectionType::HistoireMaladie,
        SectionType::Evolution,
        SectionType::ExamenClinique,
        SectionType::Constantes,
        SectionType::ExamensComplementaires,
        SectionType::Conclusion,
    ];

    pub const ALL: [SectionType; 17] = [
        SectionType::Antecedents,
        SectionType::AntecedentsFamiliaux,
        SectionType::Allergies,
        SectionType::ModeDeVie,
        SectionType::Traitement,
        SectionType::TraitementEntree,
        SectionType::TraitementSortie,
        SectionType::Motif,
        SectionType::HistoireMaladie,
        SectionType::Evolution,
        SectionType::ExamenClinique,
        SectionType::Constantes,
        SectionType::ExamensComplementaires,
        SectionType::Conclusion,
        SectionType::Indication,
        SectionType::Resultats,
        SectionType::Autres,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SectionType::Antecedents => "Antécédents",
            SectionType::AntecedentsFamiliaux => "Antécédents familiaux",
            SectionType::Allergies => "Allergies",
            SectionType::ModeDeVie => "Mode de vie",
            SectionType::Traitement => "Traitement",
            SectionType::TraitementEntree => "Traitement entrée",
            SectionType::TraitementSortie => "Traitement sortie",
            SectionType::Motif => "Motif",
            SectionType::HistoireMaladie => "Histoire de la maladie",
            SectionType::Evolution => "Evolution",
            SectionType::ExamenClinique => "Examen clinique",
            SectionType::Constantes => "Constantes",
            SectionType::ExamensComplementaires => "Examens complémentaires",
            SectionType::Conclusion => "Conclusion",
            SectionType::Indication => "Indication",
            SectionType::Resultats => "Résultats",
            SectionType::Autres => "Autres",
        }
    }

    pub fn is_core(self) -> bool {
        !matches!(
            self,
            SectionType::Indication | SectionType::Resultats | SectionType::Autres
        )
    }
}

impl fmt::Display for SectionType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<SectionType> for &'static str {
    fn from(t: SectionType) -> Self {
        t.name()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown section type {0:?}")]
pub struct UnknownSectionType(pub String);

impl FromStr for SectionType {
    type Err = UnknownSectionType;

    /// Case- and accent-insensitive. "Traitement de sortie" is accepted for
    /// [`SectionType::TraitementSortie`].
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = normalize_title(s);
        if key == "traitement de sortie" {
            return Ok(SectionType::TraitementSortie);
        }
        SectionType::ALL
            .into_iter()
            .find(|t| normalize_title(t.name()) == key)
            .ok_or_else(|| UnknownSectionType(s.to_string()))
    }
}

impl TryFrom<String> for SectionType {
    type Error = UnknownSectionType;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Lowercase, no diacritics, single spaces, no surrounding whitespace and no
/// trailing ':' or '.'.
pub fn normalize_title(text: &str) -> String {
    let folded = strip_accents_lower(text);
    let collapsed = folded.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(|c: char| c == ':' || c == '.' || c.is_whitespace())
        .to_string()
}

#[derive(Debug, Error)]
pub enum DictionaryError {
    #[error("reading dictionary: {0}")]
    Io(#[from] std::io::Error),
    #[error("dictionary line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dictionary has no terms for: {0}")]
    MissingTypes(String),
}

/// A term listed under two different types. The first listing is kept.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DuplicateTerm {
    pub key: String,
    pub kept: SectionType,
    pub dropped: SectionType,
    pub line: usize,
}

#[derive(Debug, Clone)]
pub struct SectionDictionary {
    terms: HashMap<String, SectionType>,
    duplicates: Vec<DuplicateTerm>,
}

impl SectionDictionary {
    pub fn from_tsv(tsv: &str) -> Result<Self, DictionaryError> {
        let mut terms = HashMap::new();
        let mut duplicates = Vec::new();
        for (i, raw) in tsv.lines().enumerate() {
            let line = i + 1;
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let (term, ty) = raw.split_once('\t').ok_or_else(|| DictionaryError::Parse {
                line,
                message: "expected term<TAB>type".into(),
            })?;
            let ty: SectionType = ty.trim().parse().map_err(|e: UnknownSectionType| {
                DictionaryError::Parse {
                    line,
                    message: e.to_string(),
                }
            })?;
            let key = normalize_title(term);
            if key.is_empty() {
                return Err(DictionaryError::Parse {
                    line,
                    message: "empty term".into(),
                });
            }
            match terms.get(&key) {
                None => {
                    terms.insert(key, ty);
                }
                Some(&kept) if kept != ty => {
                    log::warn!("dictionary line {line}: {key:?} already maps to {kept}, ignoring {ty}");
                    duplicates.push(DuplicateTerm {
                        key,
                        kept,
                        dropped: ty,
                        line,
                    });
                }
                Some(_) => {}
            }
        }
        let missing: Vec<&str> = SectionType::CORE
            .iter()
            .filter(|t| !terms.values().any(|v| v == *t))
            .map(|t| t.name())
            .collect();
        if !missing.is_empty() {
            return Err(DictionaryError::MissingTypes(missing.join(", ")));
        }
        Ok(SectionDictionary { terms, duplicates })
    }

    pub fn load(path: &Path) -> Result<Self, DictionaryError> {
        Self::from_tsv(&std::fs::read_to_string(path)?)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn duplicates(&self) -> &[DuplicateTerm] {
        &self.duplicates
    }

    pub fn get(&self, key: &str) -> Option<SectionType> {
        self.terms.get(key).copied()
    }

    /// Keys with their types, sorted by key.
    pub fn entries(&self) -> Vec<(&str, SectionType)> {
        let mut out: Vec<_> = self.terms.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        out.sort();
        out
    }
}

impl Default for SectionDictionary {
    fn default() -> Self {
        Self::from_tsv(DEFAULT_DICTIONARY_TSV).expect("bundled dictionary is valid")
    }
}

pub fn match_title(line: &str, dict: &SectionDictionary) -> Option<SectionType> {
    dict.get(&normalize_title(line))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionSpan {
    pub section_type: SectionType,
    /// Source line of the title, when the text came from a document.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title_line_ref: Option<LineRef>,
    pub char_start: usize,
    pub char_end: usize,
    pub title: String,
}

/// Segments plain text, one candidate title per `\n`-separated line.
pub fn segment_text(text: &str, dict: &SectionDictionary) -> Vec<SectionSpan> {
    let mut spans: Vec<SectionSpan> = Vec::new();
    let mut offset = 0usize;
    for line in text.split('\n') {
        let len = line.chars().count();
        if let Some(section_type) = match_title(line, dict) {
            if let Some(prev) = spans.last_mut() {
                prev.char_end = offset;
            }
            spans.push(SectionSpan {
                section_type,
                title_line_ref: None,
                char_start: offset,
                char_end: 0,
                title: line.to_string(),
            });
        }
        offset += len + 1;
    }
    let total = offset - 1;
    if let Some(last) = spans.last_mut() {
        last.char_end = total;
    }
    spans
}

/// Like [`segment_text`], also recording which source line each title came from.
pub fn segment(body: &ExtractedText, dict: &SectionDictionary) -> Vec<SectionSpan> {
    let mut spans = segment_text(&body.text, dict);
    for span in &mut spans {
        let title_end = span.char_start + span.title.chars().count();
        span.title_line_ref = body
            .line_refs
            .iter()
            .find(|s| s.char_start == span.char_start && s.char_end == title_end)
            .map(|s| s.line);
    }
    spans
}

/// Char-indexed substring.
pub fn span_text(text: &str, char_start: usize, char_end: usize) -> String {
    text.chars().skip(char_start).take(char_end - char_start).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extractor::TextSpan;
    use proptest::prelude::*;

    #[test]
    fn normalization_examples() {
        assert_eq!(normalize_title("CONCLUSION :"), "conclusion");
        assert_eq!(normalize_title("Antécédents"), "antecedents");
        assert_eq!(normalize_title("  Au  total. "), "au total");
        assert_eq!(normalize_title(""), "");
        assert_eq!(normalize_title("Motif.:"), "motif");
    }

    #[test]
    fn bundled_dictionary_loads() {
        let dict = SectionDictionary::default();
        assert_eq!(DEFAULT_DICTIONARY_TSV.lines().filter(|l| !l.starts_with('#')).count(), 192);
        assert_eq!(dict.len(), 191);
        assert_eq!(
            dict.duplicates(),
            &[DuplicateTerm {
                key: "constantes initiales".into(),
                kept: SectionType::ExamenClinique,
                dropped: SectionType::Constantes,
                line: 178,
            }]
        );
        for t in SectionType::ALL {
            assert!(dict.entries().iter().any(|(_, v)| *v == t), "{t}");
        }
    }

    #[test]
    fn title_matching() {
        let dict = SectionDictionary::default();
        assert_eq!(match_title("Au total", &dict), Some(SectionType::Conclusion));
        assert_eq!(
            match_title("Histoire de la maladie", &dict),
            Some(SectionType::HistoireMaladie)
        );
        assert_eq!(match_title("Le patient présente une fièvre.", &dict), None);
        assert_eq!(match_title("CONCLUSION :", &dict), Some(SectionType::Conclusion));
        assert_eq!(match_title("Conclusion du séjour en cardiologie", &dict), None);
    }

    #[test]
    fn type_names_round_trip() {
        for t in SectionType::ALL {
            assert_eq!(t.name().parse::<SectionType>().unwrap(), t);
            let json = serde_json::to_string(&t).unwrap();
            assert_eq!(serde_json::from_str::<SectionType>(&json).unwrap(), t);
        }
        assert_eq!(
            "Traitement de sortie".parse::<SectionType>().unwrap(),
            SectionType::TraitementSortie
        );
        assert!("Radiologie".parse::<SectionType>().is_err());
        assert_eq!(SectionType::ALL.iter().filter(|t| t.is_core()).count(), 14);
    }

    #[test]
    fn dictionary_errors() {
        assert!(matches!(
            SectionDictionary::from_tsv("motif\tMotif\n"),
            Err(DictionaryError::MissingTypes(_))
        ));
        assert!(matches!(
            SectionDictionary::from_tsv("motif Motif\n"),
            Err(DictionaryError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            SectionDictionary::from_tsv("x\tRadiologie\n"),
            Err(DictionaryError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn no_titles_no_spans() {
        let dict = SectionDictionary::default();
        assert!(segment_text("fièvre\nguérison", &dict).is_empty());
        assert!(segment_text("", &dict).is_empty());
    }

    #[test]
    fn two_sections_hand_offsets() {
        let dict = SectionDictionary::default();
        let text = "Motif\nfièvre\nConclusion\nguérison";
        let spans = segment_text(text, &dict);
        let got: Vec<_> = spans
            .iter()
            .map(|s| (s.section_type, s.char_start, s.char_end))
            .collect();
        // "Motif\n" 6 + "fièvre\n" 7 = 13; 13 + "Conclusion\n" 11 + "guérison" 8 = 32
        assert_eq!(
            got,
            vec![(SectionType::Motif, 0, 13), (SectionType::Conclusion, 13, 32)]
        );
        assert_eq!(span_text(text, 13, 32), "Conclusion\nguérison");
    }

    #[test]
    fn title_refs_follow_line_spans() {
        let dict = SectionDictionary::default();
        let line = |page, line| LineRef { page, line };
        let body = ExtractedText {
            label: None,
            text: "intro\nMotif\nfièvre".into(),
            line_refs: vec![
                TextSpan { line: line(0, 3), char_start: 0, char_end: 5 },
                TextSpan { line: line(0, 4), char_start: 6, char_end: 11 },
                TextSpan { line: line(0, 5), char_start: 12, char_end: 18 },
            ],
        };
        let spans = segment(&body, &dict);
        assert_eq!(spans.len(), 1);
        assert_eq!(spans[0].title_line_ref, Some(line(0, 4)));
        assert_eq!((spans[0].char_start, spans[0].char_end), (6, 18));
    }

    proptest! {
        #[test]
        fn spans_tile_the_suffix(lines in proptest::collection::vec(
            prop_oneof![
                Just("Motif".to_string()),
                Just("CONCLUSION :".to_string()),
                Just("Antécédents".to_string()),
                "[a-zé ]{0,20}",
            ],
            0..12,
        )) {
            let dict = SectionDictionary::default();
            let text = lines.join("\n");
            let spans = segment_text(&text, &dict);
            let n = text.chars().count();
            let mut rebuilt = spans
                .first()
                .map(|s| span_text(&text, 0, s.char_start))
                .unwrap_or_else(|| text.clone());
            for (i, s) in spans.iter().enumerate() {
                prop_assert!(s.char_start < s.char_end || s.char_end == n);
                if let Some(next) = spans.get(i + 1) {
                    prop_assert_eq!(s.char_end, next.char_start);
                }
                rebuilt.push_str(&span_text(&text, s.char_start, s.char_end));
            }
            prop_assert_eq!(rebuilt, text);
        }

        #[test]
        fn casing_and_accents_do_not_matter(idx in 0usize..191, upper in any::<bool>(), colon in any::<bool>()) {
            let dict = SectionDictionary::default();
            let entries = dict.entries();
            let (key, ty) = entries[idx];
            let mut variant = if upper { key.to_uppercase() } else { key.to_string() };
            if colon {
                variant.push_str(" :");
            }
            prop_assert_eq!(match_title(&variant, &dict), Some(ty));
            prop_assert_eq!(match_title(&format!("{key} zzq"), &dict), None);
        }
    }
}
