//! Synthetic labeled clinical letters.
//!
//! Each document is laid out from one of three letterhead templates and
//! carries gold labels for every line, the gold body string, and the gold
//! section spans over that string. Documents are generated independently
//! from a per-document RNG stream, so parallel and sequential generation
//! agree byte for byte.

pub mod pdf;
pub mod text;

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::distributions::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::document::{Document, LineBox, LineLabel, LineRef, Page, PageGeometry};
use crate::exec::Exec;
use crate::extractor::{PAGE_JOIN, ROW_JOIN};
use crate::ingest::fonts::text_width;
use crate::jsonl;
use crate::sections::{match_title, normalize_title, SectionDictionary, SectionType, DEFAULT_DICTIONARY_TSV};
pub use pdf::emit_pdf;
use text::{capitalize, date, paragraph, person, phone, wrap, Wordlist};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    /// Two-block letterhead on the first page, running header afterwards.
    SingleColumn,
    /// Staff column down the left margin beside a narrower body.
    LeftNote,
    /// Full letterhead and multi-line footer on every page.
    HeaderFooter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutMix {
    pub single_column: f64,
    pub left_note: f64,
    pub header_footer: f64,
}

impl Default for LayoutMix {
    fn default() -> Self {
        LayoutMix {
            single_column: 0.3,
            left_note: 0.5,
            header_footer: 0.2,
        }
    }
}

impl LayoutMix {
    pub fn only(template: Template) -> Self {
        let mut mix = LayoutMix {
            single_column: 0.0,
            left_note: 0.0,
            header_footer: 0.0,
        };
        match template {
            Template::SingleColumn => mix.single_column = 1.0,
            Template::LeftNote => mix.left_note = 1.0,
            Template::HeaderFooter => mix.header_footer = 1.0,
        }
        mix
    }

    fn weights(&self) -> [(Template, f64); 3] {
        [
            (Template::SingleColumn, self.single_column),
            (Template::LeftNote, self.left_note),
            (Template::HeaderFooter, self.header_footer),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Probability that a line's font size is perturbed.
    pub font_size_jitter_prob: f64,
    /// Largest font-size perturbation, pt.
    pub font_size_jitter: f64,
    /// Per-line position jitter, pt.
    pub xy_jitter: f64,
    /// Per-document shift of the whole layout, pt.
    pub page_shift: f64,
    /// Probability that a section title is re-cased or gets a colon.
    pub title_variant_prob: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            font_size_jitter_prob: 0.2,
            font_size_jitter: 0.3,
            xy_jitter: 0.8,
            page_shift: 12.0,
            title_variant_prob: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub seed: u64,
    pub n_documents: usize,
    /// Inclusive range of body pages per document.
    pub pages_per_doc: [usize; 2],
    pub layout_mix: LayoutMix,
    pub noise: NoiseConfig,
    pub page_width: f64,
    pub page_height: f64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            seed: 1,
            n_documents: 215,
            pages_per_doc: [1, 3],
            layout_mix: LayoutMix::default(),
            noise: NoiseConfig::default(),
            page_width: 595.0,
            page_height: 842.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid generator config: {0}")]
pub struct ConfigError(pub String);

impl GenConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: &str| Err(ConfigError(m.to_string()));
        if self.n_documents == 0 {
            return err("n_documents must be positive");
        }
        let [lo, hi] = self.pages_per_doc;
        if lo == 0 || lo > hi || hi > 20 {
            return err("pages_per_doc must satisfy 1 <= min <= max <= 20");
        }
        let weights = self.layout_mix.weights();
        if weights.iter().any(|(_, w)| !w.is_finite() || *w < 0.0) {
            return err("layout_mix weights must be nonnegative");
        }
        if weights.iter().map(|(_, w)| w).sum::<f64>() <= 0.0 {
            return err("layout_mix is empty");
        }
        let n = &self.noise;
        for (name, p) in [
            ("font_size_jitter_prob", n.font_size_jitter_prob),
            ("title_variant_prob", n.title_variant_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError(format!("{name} must be in [0, 1]")));
            }
        }
        if !(0.0..=2.0).contains(&n.font_size_jitter) {
            return err("font_size_jitter must be in [0, 2] pt");
        }
        if !(0.0..=3.0).contains(&n.xy_jitter) {
            return err("xy_jitter must be in [0, 3] pt");
        }
        if !(0.0..=20.0).contains(&n.page_shift) {
            return err("page_shift must be in [0, 20] pt");
        }
        if (self.page_width - 595.0).abs() > 50.0 || (self.page_height - 842.0).abs() > 50.0 {
            return err("page size must be within 50 pt of A4 (595 x 842)");
        }
        Ok(())
    }
}

/// One row of `sections_gold.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldSection {
    pub doc_id: String,
    pub section_type: SectionType,
    pub title_line_ref: LineRef,
    pub char_start: usize,
    pub char_end: usize,
}

/// One row of `body_gold.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldBody {
    pub doc_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedDocument {
    pub doc: Document,
    pub template: Template,
    pub body_text: String,
    pub sections: Vec<GoldSection>,
    pub pdf_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub config: GenConfig,
    pub documents: Vec<GeneratedDocument>,
}

impl Manifest {
    pub fn docs(&self) -> Vec<Document> {
        self.documents.iter().map(|g| g.doc.clone()).collect()
    }

    pub fn label_counts(&self) -> [usize; LineLabel::COUNT] {
        let mut counts = [0; LineLabel::COUNT];
        for g in &self.documents {
            for (_, line) in g.doc.lines() {
                if let Some(label) = line.label {
                    counts[label.index()] += 1;
                }
            }
        }
        counts
    }
}

/// Shared read-only inputs of the generator.
pub struct Resources {
    pub words: Wordlist,
    pub dict: SectionDictionary,
    terms: HashMap<SectionType, Vec<String>>,
}

impl Resources {
    pub fn new(words: Wordlist, dict: SectionDictionary, dictionary_tsv: &str) -> Self {
        let mut terms: HashMap<SectionType, Vec<String>> = HashMap::new();
        for line in dictionary_tsv.lines().filter(|l| !l.starts_with('#')) {
            if let Some((term, _)) = line.split_once('\t') {
                // Keep only spellings the dictionary resolves, so the gold type
                // is what matching will find.
                if let Some(t) = dict.get(&normalize_title(term)) {
                    let list = terms.entry(t).or_default();
                    if !list.iter().any(|x| x == term.trim()) {
                        list.push(term.trim().to_string());
                    }
                }
            }
        }
        Resources { words, dict, terms }
    }
}

impl Default for Resources {
    fn default() -> Self {
        Resources::new(
            Wordlist::default(),
            SectionDictionary::default(),
            DEFAULT_DICTIONARY_TSV,
        )
    }
}

pub fn doc_id(index: usize) -> String {
    format!("doc{index:05}")
}

pub fn generate(config: &GenConfig) -> Result<Manifest, ConfigError> {
    generate_with(config, &Resources::default(), Exec::default())
}

pub fn generate_with(
    config: &GenConfig,
    resources: &Resources,
    exec: Exec,
) -> Result<Manifest, ConfigError> {
    config.validate()?;
    let documents = exec.map_range(config.n_documents, |i| {
        generate_document(config, resources, i)
    });
    Ok(Manifest {
        config: config.clone(),
        documents,
    })
}

/// RNG for document `index`: the config seed selects the key, the index the
/// stream.
pub fn document_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn generate_document(config: &GenConfig, res: &Resources, index: usize) -> GeneratedDocument {
    let mut rng = document_rng(config.seed, index);
    let weights: Vec<f64> = config.layout_mix.weights().iter().map(|(_, w)| *w).collect();
    let dist = WeightedIndex::new(&weights).expect("validated weights");
    let template = config.layout_mix.weights()[dist.sample(&mut rng)].0;
    let [lo, hi] = config.pages_per_doc;
    let n_pages = rng.gen_range(lo..=hi);
    let geometry = PageGeometry::new(config.page_width, config.page_height).expect("validated");
    let mut b = Builder::new(rng, res, &config.noise, geometry, template, n_pages, doc_id(index));
    b.build();
    b.finish()
}

// Layout constants, pt, top-left origin.
const BODY_SIZE: f64 = 10.0;
const BODY_LEADING: f64 = 13.0;
const PARAGRAPH_GAP: f64 = 8.0;
const HEADER_SIZE: f64 = 8.0;
const HEADER_LEADING: f64 = 10.5;
const NOTE_SIZE: f64 = 7.0;
const NOTE_LEADING: f64 = 9.5;
const NOTE_LEFT: f64 = 36.0;
const NOTE_RIGHT: f64 = 150.0;
const FOOTER_SIZE: f64 = 7.0;
const PAGE_INDEX_TOP: f64 = 812.0;
/// Space kept below the body on the last page for signature and copies.
const CLOSING_RESERVE: f64 = 90.0;

#[derive(Clone, Copy)]
enum Align {
    Left(f64),
    Right(f64),
    Center(f64),
}

struct Patient {
    name: String,
    birth: String,
    ipp: String,
    stay: (String, String),
    city: String,
}

struct Institution {
    hospital: String,
    service: String,
    address: String,
    postcode: String,
    city: String,
    chief: String,
}

/// Body text produced on demand, one visual line at a time.
struct BodySource {
    queue: Vec<SectionType>,
    /// Lines still to place: text, section opened, first line of a paragraph.
    pending: Vec<(String, Option<SectionType>, bool)>,
    paragraphs_left: usize,
    greeting: bool,
}

struct Builder<'a> {
    rng: ChaCha8Rng,
    res: &'a Resources,
    noise: &'a NoiseConfig,
    geometry: PageGeometry,
    template: Template,
    n_pages: usize,
    doc_id: String,
    shift: (f64, f64),
    pages: Vec<Page>,
    /// Body lines in placement order, with the section they open.
    body: Vec<(LineRef, Option<SectionType>)>,
    patient: Patient,
    inst: Institution,
    note_right_aligned: bool,
    note_repeats: bool,
    footer_lines: usize,
}

impl<'a> Builder<'a> {
    fn new(
        mut rng: ChaCha8Rng,
        res: &'a Resources,
        noise: &'a NoiseConfig,
        geometry: PageGeometry,
        template: Template,
        n_pages: usize,
        doc_id: String,
    ) -> Self {
        let w = &res.words;
        let shift = if noise.page_shift > 0.0 {
            (
                rng.gen_range(-noise.page_shift..=noise.page_shift),
                rng.gen_range(-noise.page_shift..=noise.page_shift),
            )
        } else {
            (0.0, 0.0)
        };
        let city = w.pick(&mut rng, "city").to_string();
        let postcode = format!("{}0{:02}", ["75", "93", "92", "94"].choose(&mut rng).unwrap(), rng.gen_range(1..20));
        let honorific = if rng.gen_bool(0.5) { "M." } else { "Mme" };
        let patient = Patient {
            name: format!("{honorific} {} {}", w.pick(&mut rng, "last"), w.pick(&mut rng, "first")),
            birth: date(&mut rng),
            ipp: format!("80{:08}", rng.gen_range(0..100_000_000u32)),
            stay: (date(&mut rng), date(&mut rng)),
            city: city.clone(),
        };
        let inst = Institution {
            hospital: w.pick(&mut rng, "hospital").to_string(),
            service: w.pick(&mut rng, "service").to_string(),
            address: format!("{} {}", rng.gen_range(1..200), w.pick(&mut rng, "street")),
            postcode,
            city,
            chief: person(&mut rng, w, "Pr"),
        };
        let note_right_aligned = rng.gen_bool(0.5);
        let note_repeats = rng.gen_bool(0.8);
        let footer_lines = match template {
            Template::HeaderFooter => rng.gen_range(2..=3),
            Template::SingleColumn => usize::from(rng.gen_bool(0.8)),
            Template::LeftNote => usize::from(rng.gen_bool(0.7)),
        };
        Builder {
            rng,
            res,
            noise,
            geometry,
            template,
            n_pages,
            doc_id,
            shift,
            pages: Vec::new(),
            body: Vec::new(),
            patient,
            inst,
            note_right_aligned,
            note_repeats,
            footer_lines,
        }
    }

    fn jitter(&mut self, amount: f64) -> f64 {
        if amount > 0.0 {
            self.rng.gen_range(-amount..=amount)
        } else {
            0.0
        }
    }

    /// Adds one line to the current page with its box top near `top`.
    fn place(&mut self, text: &str, align: Align, top: f64, size: f64, label: LineLabel) -> LineRef {
        let page = self.pages.len() - 1;
        self.place_on(page, text, align, top, size, label)
    }

    fn place_on(
        &mut self,
        page: usize,
        text: &str,
        align: Align,
        top: f64,
        size: f64,
        label: LineLabel,
    ) -> LineRef {
        let mut size = size;
        if self.noise.font_size_jitter_prob > 0.0 && self.rng.gen_bool(self.noise.font_size_jitter_prob) {
            size += self.jitter(self.noise.font_size_jitter);
        }
        let size = (size * 10.0).round() / 10.0;
        let width = text_width(text, size).expect("generator text is WinAnsi");
        let dx = self.shift.0 + self.jitter(self.noise.xy_jitter);
        let dy = self.shift.1 + self.jitter(self.noise.xy_jitter * 0.5);
        let anchor = match align {
            Align::Left(x) => x,
            Align::Right(x) => x - width,
            Align::Center(x) => x - width / 2.0,
        };
        let max_x0 = (self.geometry.width - 2.0 - width).max(0.0);
        let x0 = ((anchor + dx).clamp(2.0, max_x0) * 100.0).round() / 100.0;
        let baseline = (((top + dy).max(2.0) + 0.8 * size) * 100.0).round() / 100.0;
        let lines = &mut self.pages[page].lines;
        lines.push(LineBox {
            page,
            x0,
            y0: baseline - 0.8 * size,
            x1: x0 + width,
            y1: baseline + 0.2 * size,
            text: text.to_string(),
            label: Some(label),
        });
        LineRef {
            page,
            line: lines.len() - 1,
        }
    }

    fn body_columns(&self) -> (f64, f64) {
        match self.template {
            Template::LeftNote => (175.0, 552.0),
            _ => (60.0, 535.0),
        }
    }

    fn build(&mut self) {
        let mut source = self.body_source();
        let mut y = self.new_page();
        let mut since_title = usize::MAX;
        let mut fill_target = f64::INFINITY;
        let mut started = false;
        loop {
            let page = self.pages.len() - 1;
            let bottom = self.body_bottom(page);
            if page + 1 >= self.n_pages && fill_target.is_infinite() {
                let top = y;
                let room = (bottom - CLOSING_RESERVE - top).max(0.0);
                fill_target = top + room * self.rng.gen_range(0.1..0.8);
            }
            if started && y >= fill_target && since_title >= 2 {
                break;
            }
            let (text, opens, new_paragraph) = self.next_body_line(&mut source);
            if opens.is_some() {
                if started {
                    y += 10.0;
                }
                // Keep a title with at least two lines of its section.
                if y + 3.0 * BODY_LEADING > bottom {
                    self.close_page(false);
                    y = self.new_page();
                }
            } else if new_paragraph && started && since_title != 0 && y + PARAGRAPH_GAP + BODY_LEADING <= bottom {
                y += PARAGRAPH_GAP;
            } else if y + BODY_LEADING > bottom {
                self.close_page(false);
                y = self.new_page();
            }
            let (left, _) = self.body_columns();
            let size = if opens.is_some() { 10.5 } else { BODY_SIZE };
            let r = self.place(&text, Align::Left(left), y, size, LineLabel::Body);
            self.body.push((r, opens));
            since_title = if opens.is_some() { 0 } else { since_title.saturating_add(1) };
            y += BODY_LEADING;
            started = true;
        }
        self.closing(y);
        self.close_page(true);
    }

    fn body_source(&mut self) -> BodySource {
        use SectionType::*;
        let canonical = [
            (Motif, 0.8),
            (Indication, 0.1),
            (HistoireMaladie, 0.6),
            (Antecedents, 0.7),
            (AntecedentsFamiliaux, 0.3),
            (Allergies, 0.4),
            (ModeDeVie, 0.4),
            (TraitementEntree, 0.5),
            (ExamenClinique, 0.6),
            (Constantes, 0.3),
            (ExamensComplementaires, 0.6),
            (Resultats, 0.1),
            (Evolution, 0.6),
            (Traitement, 0.3),
            (Conclusion, 0.8),
            (TraitementSortie, 0.5),
            (Autres, 0.1),
        ];
        let mut queue: Vec<SectionType> = canonical
            .iter()
            .filter(|(_, p)| self.rng.gen_bool(*p))
            .map(|(t, _)| *t)
            .collect();
        if queue.len() < 3 {
            queue = vec![Motif, Evolution, Conclusion];
        }
        queue.reverse();
        BodySource {
            queue,
            pending: Vec::new(),
            paragraphs_left: 0,
            greeting: self.rng.gen_bool(0.5),
        }
    }

    fn section_title(&mut self, t: SectionType) -> String {
        let terms = &self.res.terms[&t];
        let term = terms.choose(&mut self.rng).unwrap().clone();
        if !self.rng.gen_bool(self.noise.title_variant_prob) {
            return term;
        }
        match self.rng.gen_range(0..5) {
            0 => term.to_uppercase(),
            1 => capitalize(&term),
            2 => format!("{term} :"),
            3 => format!("{} :", term.to_uppercase()),
            _ => format!("{}:", capitalize(&term)),
        }
    }

    /// A paragraph wrapped to the body width, none of whose lines reads as a
    /// section title.
    fn filler_lines(&mut self) -> Vec<String> {
        let (left, right) = self.body_columns();
        loop {
            let text = paragraph(&mut self.rng, &self.res.words);
            let lines = wrap(&text, BODY_SIZE + 0.5, right - left);
            if lines.iter().all(|l| match_title(l, &self.res.dict).is_none()) {
                return lines;
            }
        }
    }

    fn next_body_line(&mut self, src: &mut BodySource) -> (String, Option<SectionType>, bool) {
        if src.pending.is_empty() {
            if src.greeting {
                src.greeting = false;
                let greeting = self.res.words.pick(&mut self.rng, "greeting").to_string();
                src.pending.push((greeting, None, true));
                let lines = self.filler_lines();
                src.pending.extend(lines.into_iter().enumerate().map(|(i, l)| (l, None, i == 0)));
            } else if src.paragraphs_left == 0 && !src.queue.is_empty() {
                let t = src.queue.pop().unwrap();
                let title = self.section_title(t);
                src.pending.push((title, Some(t), true));
                src.paragraphs_left = self.rng.gen_range(1..=3);
            } else {
                src.paragraphs_left = src.paragraphs_left.saturating_sub(1);
                let lines = self.filler_lines();
                src.pending.extend(lines.into_iter().enumerate().map(|(i, l)| (l, None, i == 0)));
            }
            src.pending.reverse();
        }
        src.pending.pop().unwrap()
    }

    fn body_bottom(&self, page: usize) -> f64 {
        let footer_top = 799.0 - 9.0 * self.footer_lines.saturating_sub(1) as f64;
        let mut bottom = footer_top - 14.0;
        if page == 0 && self.template == Template::LeftNote {
            bottom = bottom.min(790.0);
        }
        bottom
    }

    /// Starts a page with its furniture; returns where the body begins.
    fn new_page(&mut self) -> f64 {
        let index = self.pages.len();
        self.pages.push(Page {
            geometry: self.geometry,
            lines: Vec::new(),
        });
        let full_header = index == 0 || self.template == Template::HeaderFooter;
        let (left, right) = self.body_columns();
        let mut y = if full_header {
            self.letterhead(index)
        } else {
            self.running_header()
        };
        if index == 0 {
            y = self.titles(y, (left + right) / 2.0);
        }
        if self.template == Template::LeftNote && (index == 0 || self.note_repeats) {
            self.left_note_column();
        }
        y + 14.0
    }

    /// Institution block and patient block; returns the lowest box bottom.
    fn letterhead(&mut self, page: usize) -> f64 {
        let mut lowest: f64 = 0.0;
        let right_x = if self.template == Template::LeftNote { 340.0 } else { 330.0 };
        if self.template != Template::LeftNote {
            let mut lines = Vec::new();
            if self.rng.gen_bool(0.5) {
                lines.push("Assistance Publique - Hôpitaux de Paris".to_string());
            }
            lines.push(self.inst.hospital.clone());
            lines.extend(wrap(&self.inst.service, HEADER_SIZE, 230.0));
            lines.push(self.inst.address.clone());
            lines.push(format!("{} {}", self.inst.postcode, self.inst.city));
            if self.rng.gen_bool(0.5) {
                lines.push("Chef de service".to_string());
                lines.push(self.inst.chief.clone());
            } else {
                lines.push(format!("Chef de service : {}", self.inst.chief));
            }
            for _ in 0..self.rng.gen_range(0..=3) {
                lines.push(person(&mut self.rng, &self.res.words, "Dr"));
            }
            lines.push(format!("Secrétariat : {}", phone(&mut self.rng)));
            let mut y = 36.0;
            for l in lines {
                self.place(&l, Align::Left(40.0), y, HEADER_SIZE, LineLabel::Header);
                y += HEADER_LEADING;
            }
            lowest = lowest.max(y);
        }
        let mut lines = vec![format!("{}, le {}", self.patient.city, self.patient.stay.1)];
        if page == 0 || self.rng.gen_bool(0.5) {
            lines.push(self.patient.name.clone());
            lines.push(format!("Né(e) le {}", self.patient.birth));
            lines.push(format!("IPP : {}", self.patient.ipp));
        }
        if self.rng.gen_bool(0.6) {
            lines.push(format!(
                "Hospitalisation du {} au {}",
                self.patient.stay.0, self.patient.stay.1
            ));
        }
        if self.rng.gen_bool(0.5) {
            let gp = person(&mut self.rng, &self.res.words, "Dr");
            lines.push(format!("Médecin traitant : {gp}"));
        }
        let mut y = 48.0;
        for l in lines {
            self.place(&l, Align::Left(right_x), y, 8.5, LineLabel::Header);
            y += 11.0;
        }
        if self.rng.gen_bool(0.35) {
            let r = format!("Réf. : {}/{}", initials(&mut self.rng), initials(&mut self.rng));
            self.place(&r, Align::Left(right_x), y + 4.0, 7.5, LineLabel::Others);
            y += 14.0;
        }
        lowest.max(y)
    }

    fn running_header(&mut self) -> f64 {
        let (left, _) = self.body_columns();
        let mut lines = vec![
            self.inst.hospital.clone(),
            format!("{} - Né(e) le {}", self.patient.name, self.patient.birth),
        ];
        if self.rng.gen_bool(0.8) {
            lines.push(format!(
                "Séjour du {} au {}",
                self.patient.stay.0, self.patient.stay.1
            ));
        }
        if self.rng.gen_bool(0.5) {
            lines.push(format!("IPP : {}", self.patient.ipp));
        }
        if self.rng.gen_bool(0.7) {
            lines.push(self.inst.service.clone());
        }
        if self.rng.gen_bool(0.5) {
            lines.push(format!("Chef de service : {}", self.inst.chief));
        }
        let mut y = 34.0;
        for l in lines {
            self.place(&l, Align::Left(left), y, HEADER_SIZE, LineLabel::Header);
            y += HEADER_LEADING;
        }
        y
    }

    fn titles(&mut self, y: f64, center: f64) -> f64 {
        let mut y = y + 14.0;
        if self.rng.gen_bool(0.25) {
            let sub = self.res.words.pick(&mut self.rng, "doc_subtitle").to_string();
            self.place(&sub, Align::Center(center), y, 11.0, LineLabel::Title);
            y += 15.0;
        }
        let title = self.res.words.pick(&mut self.rng, "doc_title").to_string();
        self.place(&title, Align::Center(center), y, 13.0, LineLabel::Title);
        y + 16.0
    }

    fn left_note_column(&mut self) {
        let w = &self.res.words;
        let rng = &mut self.rng;
        let mut groups: Vec<Vec<String>> = vec![
            vec![self.inst.hospital.clone(), self.inst.service.clone()],
            vec!["Chef de service".into(), self.inst.chief.clone()],
        ];
        let staff = |title: &str, role: &str, n: usize, rng: &mut ChaCha8Rng| {
            let mut g = vec![role.to_string()];
            for _ in 0..n {
                g.push(person(rng, w, title));
            }
            g
        };
        let n = rng.gen_range(2..=6);
        groups.push(staff("Dr", "Praticiens hospitaliers", n, rng));
        if rng.gen_bool(0.7) {
            let n = rng.gen_range(1..=4);
            groups.push(staff("Dr", "Chefs de clinique", n, rng));
        }
        if rng.gen_bool(0.5) {
            let n = rng.gen_range(1..=3);
            groups.push(staff("Dr", "Internes", n, rng));
        }
        if rng.gen_bool(0.6) {
            groups.push(staff("Mme", "Cadre de santé", 1, rng));
        }
        let mut sec = vec!["Secrétariat".to_string(), format!("Tél : {}", phone(rng))];
        if rng.gen_bool(0.6) {
            sec.push(format!("Fax : {}", phone(rng)));
        }
        groups.push(sec);
        for unit in ["Consultations", "Hôpital de jour", "Hospitalisation"] {
            if rng.gen_bool(0.5) {
                groups.push(vec![unit.to_string(), format!("Tél : {}", phone(rng))]);
            }
        }
        let align = if self.note_right_aligned {
            Align::Right(NOTE_RIGHT)
        } else {
            Align::Left(NOTE_LEFT)
        };
        let mut y = 40.0;
        for group in groups {
            for entry in group {
                for l in wrap(&entry, NOTE_SIZE, NOTE_RIGHT - NOTE_LEFT - 4.0) {
                    if y > 780.0 {
                        return;
                    }
                    self.place(&l, align, y, NOTE_SIZE, LineLabel::LeftNote);
                    y += NOTE_LEADING;
                }
            }
            y += 7.0;
        }
    }

    /// Signature block and trailing administrative lines after the body.
    fn closing(&mut self, y: f64) {
        let mut y = y + 16.0;
        let signer = person(&mut self.rng, &self.res.words, "Dr");
        self.place(&signer, Align::Left(330.0), y, BODY_SIZE, LineLabel::Signature);
        y += BODY_LEADING;
        if self.rng.gen_bool(0.7) {
            let role = self.res.words.pick(&mut self.rng, "role").to_string();
            self.place(&role, Align::Left(330.0), y, 9.0, LineLabel::Signature);
            y += BODY_LEADING;
        }
        let (left, _) = self.body_columns();
        if self.rng.gen_bool(0.6) {
            y += 10.0;
            let gp = person(&mut self.rng, &self.res.words, "Dr");
            let copy = format!("Copie : {gp}, médecin traitant");
            self.place(&copy, Align::Left(left), y, 8.0, LineLabel::Others);
            y += 11.0;
            if self.rng.gen_bool(0.3) {
                self.place("Patient(e)", Align::Left(left), y, 8.0, LineLabel::Others);
            }
        }
    }

    /// Footer, page index and page-level stamps.
    fn close_page(&mut self, last: bool) {
        let center = self.geometry.width / 2.0;
        let footer_top = 799.0 - 9.0 * self.footer_lines.saturating_sub(1) as f64;
        if self.rng.gen_bool(0.25) {
            let stamp = if last {
                format!("Document signé électroniquement le {}", self.patient.stay.1)
            } else {
                format!("Dictée le {}, tapée le {}", self.patient.stay.1, self.patient.stay.1)
            };
            let (left, _) = self.body_columns();
            self.place(&stamp, Align::Left(left), footer_top - 12.0, 7.5, LineLabel::Others);
        }
        let mut lines = vec![format!(
            "{} - {} - {} {}",
            self.inst.hospital, self.inst.address, self.inst.postcode, self.inst.city
        )];
        lines.push(format!("Standard : {} - Fax : {}", phone(&mut self.rng), phone(&mut self.rng)));
        lines.push("Site internet : www.aphp.fr".to_string());
        let mut y = footer_top;
        for l in lines.into_iter().take(self.footer_lines) {
            self.place(&l, Align::Center(center), y, FOOTER_SIZE, LineLabel::Footer);
            y += 9.0;
        }
    }

    fn finish(mut self) -> GeneratedDocument {
        let total = self.pages.len();
        // Page indices go last so every page knows the final count.
        for p in 0..total {
            let text = format!("{}/{}", p + 1, total);
            self.place_on(p, &text, Align::Right(558.0), PAGE_INDEX_TOP, 8.0, LineLabel::Page);
        }
        let doc = Document {
            doc_id: self.doc_id.clone(),
            pages: self.pages,
        };
        let (body_text, sections) = gold_body(&doc, &self.body, &self.doc_id);
        GeneratedDocument {
            doc,
            template: self.template,
            body_text,
            sections,
            pdf_path: None,
        }
    }
}

fn initials(rng: &mut ChaCha8Rng) -> String {
    (0..2).map(|_| (b'A' + rng.gen_range(0..26u8)) as char).collect()
}

/// The body string in placement order and the sections over it, built from
/// what the generator placed rather than from any matching.
fn gold_body(
    doc: &Document,
    body: &[(LineRef, Option<SectionType>)],
    doc_id: &str,
) -> (String, Vec<GoldSection>) {
    let mut text = String::new();
    let mut chars = 0usize;
    let mut sections: Vec<GoldSection> = Vec::new();
    let mut prev_page = None;
    for (r, opens) in body {
        if let Some(p) = prev_page {
            let sep = if p == r.page { ROW_JOIN } else { PAGE_JOIN };
            text.push_str(sep);
            chars += sep.chars().count();
        }
        prev_page = Some(r.page);
        if let Some(t) = opens {
            if let Some(last) = sections.last_mut() {
                last.char_end = chars;
            }
            sections.push(GoldSection {
                doc_id: doc_id.to_string(),
                section_type: *t,
                title_line_ref: *r,
                char_start: chars,
                char_end: 0,
            });
        }
        let line = &doc.line(*r).expect("placed line").text;
        text.push_str(line);
        chars += line.chars().count();
    }
    if let Some(last) = sections.last_mut() {
        last.char_end = chars;
    }
    (text, sections)
}

/// Writes `{doc_id}.pdf` per document plus `corpus.jsonl`,
/// `sections_gold.jsonl` and `body_gold.jsonl`; records each PDF path.
pub fn write_corpus(manifest: &mut Manifest, dir: &Path, exec: Exec) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let results = exec.map(&manifest.documents, |g| {
        let path = dir.join(format!("{}.pdf", g.doc.doc_id));
        fs::write(&path, emit_pdf(&g.doc)).map(|_| path)
    });
    for (g, path) in manifest.documents.iter_mut().zip(results) {
        g.pdf_path = Some(path?);
    }
    let docs = manifest.docs();
    let mut corpus = BufWriter::new(File::create(dir.join("corpus.jsonl"))?);
    jsonl::write_documents(&docs, &mut corpus)?;
    corpus.flush()?;
    let mut sections = BufWriter::new(File::create(dir.join("sections_gold.jsonl"))?);
    let mut bodies = BufWriter::new(File::create(dir.join("body_gold.jsonl"))?);
    for g in &manifest.documents {
        for s in &g.sections {
            serde_json::to_writer(&mut sections, s)?;
            sections.write_all(b"\n")?;
        }
        let body = GoldBody {
            doc_id: g.doc.doc_id.clone(),
            text: g.body_text.clone(),
        };
        serde_json::to_writer(&mut bodies, &body)?;
        bodies.write_all(b"\n")?;
    }
    sections.flush()?;
    bodies.flush()
}

fn read_json_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> io::Result<Vec<T>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| {
            io::Error::new(io::ErrorKind::InvalidData, format!("{}:{}: {e}", path.display(), i + 1))
        })?);
    }
    Ok(out)
}

pub fn read_gold_sections(path: &Path) -> io::Result<Vec<GoldSection>> {
    read_json_lines(path)
}

pub fn read_gold_bodies(path: &Path) -> io::Result<Vec<GoldBody>> {
    read_json_lines(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extractor::aggregate;
    use crate::sections::{segment, SectionDictionary};

    fn small(seed: u64, n: usize) -> GenConfig {
        GenConfig {
            seed,
            n_documents: n,
            ..GenConfig::default()
        }
    }

    #[test]
    fn single_page_single_column_example() {
        let cfg = GenConfig {
            seed: 1,
            n_documents: 1,
            pages_per_doc: [1, 1],
            layout_mix: LayoutMix::only(Template::SingleColumn),
            ..GenConfig::default()
        };
        let m = generate(&cfg).unwrap();
        let g = &m.documents[0];
        assert_eq!(g.doc.pages.len(), 1);
        let first = g.doc.lines().next().unwrap().1;
        assert_eq!(first.label, Some(LineLabel::Header));
        let dict = SectionDictionary::default();
        assert!(g
            .doc
            .lines()
            .any(|(_, l)| l.label == Some(LineLabel::Title) && match_title(&l.text, &dict).is_some()));
    }

    #[test]
    fn config_errors() {
        let mut cfg = small(1, 1);
        cfg.layout_mix = LayoutMix {
            single_column: 0.0,
            left_note: 0.0,
            header_footer: 0.0,
        };
        assert!(generate(&cfg).is_err());
        assert!(generate(&small(1, 0)).is_err());
        let mut cfg = small(1, 1);
        cfg.pages_per_doc = [2, 1];
        assert!(generate(&cfg).is_err());
    }

    #[test]
    fn documents_are_valid_and_fully_labeled() {
        let m = generate(&small(7, 30)).unwrap();
        for g in &m.documents {
            g.doc.validate().unwrap();
            assert!(g.doc.lines().all(|(_, l)| l.label.is_some()));
            let pages = g.doc.pages.len();
            for (i, page) in g.doc.pages.iter().enumerate() {
                let expected = format!("{}/{}", i + 1, pages);
                let idx: Vec<_> = page
                    .lines
                    .iter()
                    .filter(|l| l.label == Some(LineLabel::Page))
                    .collect();
                assert_eq!(idx.len(), 1);
                assert_eq!(idx[0].text, expected);
            }
        }
    }

    #[test]
    fn gold_body_matches_aggregation_and_segmentation() {
        let dict = SectionDictionary::default();
        let m = generate(&small(11, 40)).unwrap();
        for g in &m.documents {
            let body = aggregate(&g.doc, LineLabel::Body);
            assert_eq!(body.text, g.body_text, "{}", g.doc.doc_id);
            let spans = segment(&body, &dict);
            let got: Vec<_> = spans
                .iter()
                .map(|s| (s.section_type, s.title_line_ref, s.char_start, s.char_end))
                .collect();
            let want: Vec<_> = g
                .sections
                .iter()
                .map(|s| (s.section_type, Some(s.title_line_ref), s.char_start, s.char_end))
                .collect();
            assert_eq!(got, want, "{}", g.doc.doc_id);
        }
    }

    #[test]
    fn parallel_equals_sequential() {
        let cfg = small(5, 12);
        let res = Resources::default();
        let a = generate_with(&cfg, &res, Exec::Sequential).unwrap();
        let b = generate_with(&cfg, &res, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        let single = generate_document(&cfg, &res, 7);
        assert_eq!(single, a.documents[7]);
    }

    #[test]
    fn template_mix_is_respected() {
        let mut cfg = small(3, 20);
        cfg.layout_mix = LayoutMix::only(Template::LeftNote);
        let m = generate(&cfg).unwrap();
        assert!(m.documents.iter().all(|g| g.template == Template::LeftNote));
        for g in &m.documents {
            assert!(g.doc.pages[0]
                .lines
                .iter()
                .any(|l| l.label == Some(LineLabel::LeftNote) && l.x1 <= NOTE_RIGHT + 16.0));
        }
    }
}
