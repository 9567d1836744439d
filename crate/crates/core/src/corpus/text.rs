//! Filler text: names, addresses, dates and clinical-sounding sentences drawn
//! from the bundled wordlist.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::ingest::fonts::text_width;

pub const DEFAULT_WORDLIST: &str = include_str!("../../assets/wordlist.txt");

#[derive(Debug, Clone)]
pub struct Wordlist {
    categories: HashMap<String, Vec<String>>,
}

impl Wordlist {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut categories: HashMap<String, Vec<String>> = HashMap::new();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = Some(name.to_string());
                categories.entry(name.to_string()).or_default();
                continue;
            }
            let cat = current
                .as_ref()
                .ok_or_else(|| format!("wordlist line {}: entry before any [category]", i + 1))?;
            if text_width(line, 1.0).is_none() {
                return Err(format!("wordlist line {}: {line:?} is not WinAnsi-encodable", i + 1));
            }
            categories.get_mut(cat).unwrap().push(line.to_string());
        }
        Ok(Wordlist { categories })
    }

    pub fn get(&self, category: &str) -> &[String] {
        self.categories
            .get(category)
            .map(Vec::as_slice)
            .unwrap_or_else(|| panic!("wordlist has no [{category}] block"))
    }

    pub fn pick<'a, R: Rng>(&'a self, rng: &mut R, category: &str) -> &'a str {
        self.get(category).choose(rng).expect("non-empty category")
    }
}

impl Default for Wordlist {
    fn default() -> Self {
        Wordlist::parse(DEFAULT_WORDLIST).expect("bundled wordlist is valid")
    }
}

pub fn date<R: Rng>(rng: &mut R) -> String {
    format!(
        "{:02}/{:02}/{}",
        rng.gen_range(1..=28),
        rng.gen_range(1..=12),
        rng.gen_range(2015..=2023)
    )
}

pub fn phone<R: Rng>(rng: &mut R) -> String {
    let mut s = String::from("01");
    for _ in 0..4 {
        s.push_str(&format!(" {:02}", rng.gen_range(10..100)));
    }
    s
}

pub fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// "Dr Anne DURAND" or "Dr A. DURAND".
pub fn person<R: Rng>(rng: &mut R, words: &Wordlist, title: &str) -> String {
    let first = words.pick(rng, "first");
    let last = words.pick(rng, "last");
    if rng.gen_bool(0.3) {
        let initial: String = first.chars().take(1).collect();
        format!("{title} {initial}. {last}")
    } else {
        format!("{title} {first} {last}")
    }
}

fn dosage<R: Rng>(rng: &mut R, words: &Wordlist) -> String {
    let drug = words.pick(rng, "drug");
    let unit = words.pick(rng, "unit");
    let amount = [1, 2, 5, 10, 20, 40, 80, 100, 250, 500, 1000].choose(rng).unwrap();
    format!("{drug} {amount} {unit} x {}/j", rng.gen_range(1..=3))
}

fn measurement<R: Rng>(rng: &mut R) -> String {
    match rng.gen_range(0..4) {
        0 => format!(
            "TA {}/{} mmHg",
            rng.gen_range(95..170),
            rng.gen_range(50..100)
        ),
        1 => format!("T {},{} °C", rng.gen_range(36..41), rng.gen_range(0..10)),
        2 => format!("FC {}/min", rng.gen_range(55..130)),
        _ => format!("SpO2 {} %", rng.gen_range(86..100)),
    }
}

/// One sentence, capitalized and ending with a period.
pub fn sentence<R: Rng>(rng: &mut R, words: &Wordlist) -> String {
    let n = rng.gen_range(6..20);
    let mut parts: Vec<String> = Vec::with_capacity(n + 2);
    for _ in 0..n {
        let roll = rng.gen_range(0..100);
        let piece = match roll {
            0..=2 => format!("le {}", date(rng)),
            3..=5 => dosage(rng, words),
            6..=8 => measurement(rng),
            9..=11 => words.pick(rng, "symptom").to_string(),
            _ => words.pick(rng, "clinical").to_string(),
        };
        parts.push(piece);
    }
    let mut s = capitalize(&parts.join(" "));
    if rng.gen_bool(0.15) {
        let cut = s.rfind(' ').unwrap_or(0);
        if cut > 0 {
            s.insert(cut, ',');
        }
    }
    s.push('.');
    s
}

pub fn paragraph<R: Rng>(rng: &mut R, words: &Wordlist) -> String {
    let n = rng.gen_range(1..=4);
    (0..n).map(|_| sentence(rng, words)).collect::<Vec<_>>().join(" ")
}

/// Greedy word wrap to `width` points at `size`.
pub fn wrap(text: &str, size: f64, width: f64) -> Vec<String> {
    let mut lines = Vec::new();
    let mut current = String::new();
    for word in text.split_whitespace() {
        let candidate = if current.is_empty() {
            word.to_string()
        } else {
            format!("{current} {word}")
        };
        let fits = text_width(&candidate, size).is_some_and(|w| w <= width);
        if fits || current.is_empty() {
            current = candidate;
        } else {
            lines.push(std::mem::take(&mut current));
            current = word.to_string();
        }
    }
    if !current.is_empty() {
        lines.push(current);
    }
    lines
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bundled_wordlist_has_every_category() {
        let w = Wordlist::default();
        for cat in [
            "clinical", "symptom", "drug", "unit", "first", "last", "hospital", "service",
            "street", "city", "role", "doc_title", "doc_subtitle", "greeting",
        ] {
            assert!(!w.get(cat).is_empty(), "{cat}");
        }
    }

    #[test]
    fn wordlist_rejects_orphans_and_unencodable() {
        assert!(Wordlist::parse("orphan\n").is_err());
        assert!(Wordlist::parse("[a]\n\u{4e00}\n").is_err());
    }

    #[test]
    fn wrap_respects_width() {
        let text = "un deux trois quatre cinq six sept huit neuf dix onze douze";
        let lines = wrap(text, 10.0, 80.0);
        assert!(lines.len() > 1);
        for l in &lines {
            assert!(text_width(l, 10.0).unwrap() <= 80.0 || !l.contains(' '));
        }
        assert_eq!(lines.join(" "), text);
    }

    #[test]
    fn sentences_are_deterministic_and_encodable() {
        let w = Wordlist::default();
        let a: Vec<String> = {
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            (0..50).map(|_| sentence(&mut rng, &w)).collect()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for s in &a {
            assert_eq!(*s, sentence(&mut rng, &w));
            assert!(text_width(s, 10.0).is_some());
            assert!(s.ends_with('.'));
            assert!(!s.contains("  "));
        }
    }
}
