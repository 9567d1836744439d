//! Token-level categorical features: 3-character prefix and suffix, a
//! coarse shape, and a normalized form, each mapped to a dense id.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::document::LineBox;

pub const AFFIX_LEN: usize = 3;
pub const SHAPE_LEN: usize = 8;
/// Id shared by every unseen string once a vocabulary is frozen.
pub const UNK: u32 = 0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenFeatures {
    pub prefix3: String,
    pub suffix3: String,
    pub shape: String,
    pub norm: String,
}

fn is_punct(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Whitespace split, then leading and trailing punctuation characters each
/// become their own token.
pub fn tokenize(text: &str) -> Vec<&str> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut rest = chunk;
        let mut trailing = Vec::new();
        while let Some(c) = rest.chars().next().filter(|&c| is_punct(c)) {
            tokens.push(&rest[..c.len_utf8()]);
            rest = &rest[c.len_utf8()..];
        }
        while let Some(c) = rest.chars().next_back().filter(|&c| is_punct(c)) {
            let at = rest.len() - c.len_utf8();
            trailing.push(&rest[at..]);
            rest = &rest[..at];
        }
        if !rest.is_empty() {
            tokens.push(rest);
        }
        tokens.extend(trailing.into_iter().rev());
    }
    tokens
}

pub fn shape(token: &str) -> String {
    token
        .chars()
        .take(SHAPE_LEN)
        .map(|c| {
            if c.is_uppercase() {
                'X'
            } else if c.is_lowercase() {
                'x'
            } else if c.is_numeric() {
                'd'
            } else {
                c
            }
        })
        .collect()
}

/// Lowercase, strips diacritics.
pub fn strip_accents_lower(text: &str) -> String {
    text.nfd()
        .filter(|c| !is_combining_mark(*c))
        .flat_map(char::to_lowercase)
        .collect()
}

pub fn normalize_token(token: &str) -> String {
    strip_accents_lower(token)
        .chars()
        .map(|c| if c.is_numeric() { '0' } else { c })
        .collect()
}

pub fn token_features(token: &str) -> TokenFeatures {
    let n = token.chars().count();
    TokenFeatures {
        prefix3: token.chars().take(AFFIX_LEN).collect(),
        suffix3: token.chars().skip(n.saturating_sub(AFFIX_LEN)).collect(),
        shape: shape(token),
        norm: normalize_token(token),
    }
}

/// One feature family: string to dense id, `UNK` reserved.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct FeatureMap {
    ids: HashMap<String, u32>,
    strings: Vec<String>,
}

impl From<Vec<String>> for FeatureMap {
    fn from(strings: Vec<String>) -> Self {
        let ids = strings
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i as u32 + 1))
            .collect();
        FeatureMap { ids, strings }
    }
}

impl From<FeatureMap> for Vec<String> {
    fn from(map: FeatureMap) -> Self {
        map.strings
    }
}

impl FeatureMap {
    pub fn get(&self, s: &str) -> u32 {
        self.ids.get(s).copied().unwrap_or(UNK)
    }

    fn intern(&mut self, s: &str) -> u32 {
        if let Some(&id) = self.ids.get(s) {
            return id;
        }
        self.strings.push(s.to_string());
        let id = self.strings.len() as u32;
        self.ids.insert(s.to_string(), id);
        id
    }

    /// Number of ids including `UNK`.
    pub fn size(&self) -> usize {
        self.strings.len() + 1
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    pub prefix: FeatureMap,
    pub suffix: FeatureMap,
    pub shape: FeatureMap,
    pub norm: FeatureMap,
    pub frozen: bool,
}

/// Ids of one token: prefix, suffix, shape, norm.
pub type TokenIds = [u32; 4];

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn sizes(&self) -> [usize; 4] {
        [
            self.prefix.size(),
            self.suffix.size(),
            self.shape.size(),
            self.norm.size(),
        ]
    }

    pub fn lookup(&self, f: &TokenFeatures) -> TokenIds {
        [
            self.prefix.get(&f.prefix3),
            self.suffix.get(&f.suffix3),
            self.shape.get(&f.shape),
            self.norm.get(&f.norm),
        ]
    }

    fn intern(&mut self, f: &TokenFeatures) -> TokenIds {
        [
            self.prefix.intern(&f.prefix3),
            self.suffix.intern(&f.suffix3),
            self.shape.intern(&f.shape),
            self.norm.intern(&f.norm),
        ]
    }

    /// Featurizes text, growing the vocabulary unless it is frozen.
    pub fn featurize_text(&mut self, text: &str) -> Vec<TokenIds> {
        if self.frozen {
            return self.featurize_frozen(text);
        }
        tokenize(text)
            .into_iter()
            .map(|t| self.intern(&token_features(t)))
            .collect()
    }

    /// Read-only featurization; unseen strings map to `UNK`.
    pub fn featurize_frozen(&self, text: &str) -> Vec<TokenIds> {
        tokenize(text)
            .into_iter()
            .map(|t| self.lookup(&token_features(t)))
            .collect()
    }
}

pub fn featurize_line(line: &LineBox, vocab: &mut Vocab) -> Vec<TokenIds> {
    vocab.featurize_text(&line.text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenize_examples() {
        assert_eq!(tokenize("Dr. Martin"), vec!["Dr", ".", "Martin"]);
        assert!(tokenize("").is_empty());
        assert_eq!(tokenize("12/05/2021:"), vec!["12/05/2021", ":"]);
        assert_eq!(tokenize("(n°12)."), vec!["(", "n°12", ")", "."]);
        assert_eq!(tokenize(" -- "), vec!["-", "-"]);
    }

    #[test]
    fn shape_examples() {
        assert_eq!(shape("Mme"), "Xxx");
        assert_eq!(shape("2023"), "dddd");
        assert_eq!(shape("CONCLUSION"), "XXXXXXXX");
        assert_eq!(shape("É-2"), "X-d");
    }

    #[test]
    fn normalized_form() {
        assert_eq!(normalize_token("Antécédents"), "antecedents");
        assert_eq!(normalize_token("J12"), "j00");
        let f = token_features("Conclusion");
        assert_eq!(f.prefix3, "Con");
        assert_eq!(f.suffix3, "ion");
        let short = token_features("é");
        assert_eq!((short.prefix3.as_str(), short.suffix3.as_str()), ("é", "é"));
    }

    #[test]
    fn building_then_freezing() {
        let mut vocab = Vocab::new();
        let ids = vocab.featurize_text("Conclusion :");
        assert_eq!(ids.len(), 2);
        let entries: usize = vocab.sizes().iter().map(|s| s - 1).sum();
        assert!(entries <= 8);
        assert_eq!(vocab.featurize_text("Conclusion :"), ids);

        vocab.freeze();
        let before = vocab.clone();
        // "Xylophone" shares only its shape "Xxxxxxxx" with "Conclusion"
        let unseen = vocab.featurize_text("Xylophone");
        assert_eq!(unseen[0][0], UNK);
        assert_eq!(unseen[0][1], UNK);
        assert_eq!(unseen[0][3], UNK);
        assert_eq!(unseen[0][2], vocab.shape.get("Xxxxxxxx"));
        assert_ne!(unseen[0][2], UNK);
        assert_eq!(vocab, before);
        assert_eq!(vocab.featurize_text("zzz qqq"), vec![[UNK; 4], [UNK; 4]]);
    }

    #[test]
    fn vocab_serializes_as_lists() {
        let mut vocab = Vocab::new();
        vocab.featurize_text("Motif");
        let json = serde_json::to_string(&vocab).unwrap();
        let back: Vocab = serde_json::from_str(&json).unwrap();
        assert_eq!(back, vocab);
        assert!(json.contains("\"norm\":[\"motif\"]"));
    }

    proptest! {
        #[test]
        fn shape_is_idempotent_on_its_alphabet(s in "[Xxd]{1,12}") {
            let once = shape(&s);
            prop_assert_eq!(shape(&once), once.clone());
        }

        #[test]
        fn tokens_are_never_empty(s in "\\PC{0,40}") {
            for t in tokenize(&s) {
                prop_assert!(!t.is_empty());
                prop_assert!(!t.chars().any(char::is_whitespace));
            }
        }

        #[test]
        fn freezing_keeps_existing_ids(words in proptest::collection::vec("[a-zA-Z0-9]{1,8}", 1..20)) {
            let mut vocab = Vocab::new();
            let text = words.join(" ");
            let ids = vocab.featurize_text(&text);
            vocab.freeze();
            prop_assert_eq!(vocab.featurize_text(&text), ids);
        }
    }
}
