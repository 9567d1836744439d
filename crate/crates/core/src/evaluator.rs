//! Line-level precision/recall/F1, the ablation grid, and section-level
//! comparison of naive and model-based body extraction.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{GeneratedDocument, GoldSection};
use crate::document::{Document, LineLabel};
use crate::exec::Exec;
use crate::extractor::{aggregate, naive_extract, MaskConfig};
use crate::model::{Model, ModelConfig};
use crate::sections::{segment, span_text, SectionDictionary, SectionType};
use crate::trainer::{train_multiseed, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{doc_id}: {gold} gold lines but {predicted} predictions")]
    LengthMismatch {
        doc_id: String,
        gold: usize,
        predicted: usize,
    },
    #[error("{doc_id}: page {page} line {line} has no gold label")]
    UnlabeledLine {
        doc_id: String,
        page: usize,
        line: usize,
    },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub per_label: [LabelCounts; LineLabel::COUNT],
}

impl ConfusionCounts {
    pub fn record(&mut self, gold: LineLabel, predicted: LineLabel) {
        if gold == predicted {
            self.per_label[gold.index()].tp += 1;
        } else {
            self.per_label[predicted.index()].fp += 1;
            self.per_label[gold.index()].fn_ += 1;
        }
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        for (a, b) in self.per_label.iter_mut().zip(&other.per_label) {
            a.tp += b.tp;
            a.fp += b.fp;
            a.fn_ += b.fn_;
        }
    }

    pub fn gold_lines(&self) -> u64 {
        self.per_label.iter().map(|c| c.tp + c.fn_).sum()
    }
}

pub fn score_lines(gold: &Document, predicted: &[LineLabel]) -> Result<ConfusionCounts, EvalError> {
    if gold.line_count() != predicted.len() {
        return Err(EvalError::LengthMismatch {
            doc_id: gold.doc_id.clone(),
            gold: gold.line_count(),
            predicted: predicted.len(),
        });
    }
    let mut counts = ConfusionCounts::default();
    for ((r, line), &p) in gold.lines().zip(predicted) {
        let g = line.label.ok_or_else(|| EvalError::UnlabeledLine {
            doc_id: gold.doc_id.clone(),
            page: r.page,
            line: r.line,
        })?;
        counts.record(g, p);
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl Prf {
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        Prf {
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRow {
    pub label: LineLabel,
    #[serde(flatten)]
    pub prf: Prf,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub labels: Vec<LabelRow>,
    pub macro_avg: Prf,
    pub micro_avg: Prf,
    pub counts: ConfusionCounts,
}

/// Macro averages skip labels with neither gold nor predicted lines.
pub fn micro_macro(counts: &ConfusionCounts) -> EvalReport {
    let labels: Vec<LabelRow> = LineLabel::ALL
        .iter()
        .zip(&counts.per_label)
        .map(|(&label, c)| LabelRow {
            label,
            prf: Prf::from_counts(c.tp, c.fp, c.fn_),
            support: c.tp + c.fn_,
        })
        .collect();
    let present: Vec<&LabelRow> = labels
        .iter()
        .zip(&counts.per_label)
        .filter(|(_, c)| c.tp + c.fp + c.fn_ > 0)
        .map(|(r, _)| r)
        .collect();
    let mean = |f: fn(&Prf) -> f64| {
        if present.is_empty() {
            0.0
        } else {
            present.iter().map(|r| f(&r.prf)).sum::<f64>() / present.len() as f64
        }
    };
    let macro_avg = Prf {
        precision: mean(|p| p.precision),
        recall: mean(|p| p.recall),
        f1: mean(|p| p.f1),
    };
    let (tp, fp, fn_) = counts
        .per_label
        .iter()
        .fold((0, 0, 0), |(a, b, c), l| (a + l.tp, b + l.fp, c + l.fn_));
    EvalReport {
        labels,
        macro_avg,
        micro_avg: Prf::from_counts(tp, fp, fn_),
        counts: *counts,
    }
}

impl EvalReport {
    pub fn body(&self) -> &Prf {
        &self.labels[LineLabel::Body.index()].prf
    }

    /// Per-label rows followed by the macro and micro rows.
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<18} {:>9} {:>9} {:>9} {:>8}\n",
            "label", "precision", "recall", "f1", "support"
        );
        for r in &self.labels {
            let _ = writeln!(
                s,
                "{:<18} {:>9.3} {:>9.3} {:>9.3} {:>8}",
                r.label.as_str(),
                r.prf.precision,
                r.prf.recall,
                r.prf.f1,
                r.support
            );
        }
        let total = self.counts.gold_lines();
        for (name, p) in [("ALL (macro-avg)", &self.macro_avg), ("ALL (micro-avg)", &self.micro_avg)] {
            let _ = writeln!(
                s,
                "{:<18} {:>9.3} {:>9.3} {:>9.3} {:>8}",
                name, p.precision, p.recall, p.f1, total
            );
        }
        s
    }
}

/// Scores `predict` on every document and pools the counts.
pub fn evaluate<F>(docs: &[Document], predict: F, exec: Exec) -> Result<EvalReport, EvalError>
where
    F: Fn(&Document) -> Vec<LineLabel> + Sync + Send,
{
    let per_doc = exec.map(docs, |d| score_lines(d, &predict(d)));
    let mut total = ConfusionCounts::default();
    for c in per_doc {
        total.merge(&c?);
    }
    Ok(micro_macro(&total))
}

pub fn evaluate_model(model: &Model, docs: &[Document], exec: Exec) -> Result<EvalReport, EvalError> {
    evaluate(docs, |d| model.predict(d), exec)
}

/// The four ablation columns.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AblationMetrics {
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub body_f1: f64,
    pub body_recall: f64,
}

impl AblationMetrics {
    pub fn from_report(r: &EvalReport) -> Self {
        AblationMetrics {
            micro_f1: r.micro_avg.f1,
            macro_f1: r.macro_avg.f1,
            body_f1: r.body().f1,
            body_recall: r.body().recall,
        }
    }

    pub fn mean(rows: &[AblationMetrics]) -> Self {
        let n = rows.len().max(1) as f64;
        let sum = |f: fn(&AblationMetrics) -> f64| rows.iter().map(f).sum::<f64>() / n;
        AblationMetrics {
            micro_f1: sum(|m| m.micro_f1),
            macro_f1: sum(|m| m.macro_f1),
            body_f1: sum(|m| m.body_f1),
            body_recall: sum(|m| m.body_recall),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    NoRelativePosition,
    NoTransformer,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::NoRelativePosition, Variant::NoTransformer];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "Full model",
            Variant::NoRelativePosition => "- Relative position",
            Variant::NoTransformer => "- Transformer",
        }
    }

    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        let mut c = base.clone();
        match self {
            Variant::Full => {}
            Variant::NoRelativePosition => c.disable_relative_attention = true,
            Variant::NoTransformer => c.disable_transformer = true,
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<AblationMetrics>,
    pub mean: AblationMetrics,
    /// Wall time spent training all seeds of this variant.
    pub train_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, v: Variant) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == v)
    }

    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<22} {:>12} {:>12} {:>8} {:>11}\n",
            "", "Micro-avg F1", "Macro-avg F1", "Body F1", "Body recall"
        );
        for r in &self.rows {
            let m = &r.mean;
            let _ = writeln!(
                s,
                "{:<22} {:>12.3} {:>12.3} {:>8.3} {:>11.3}",
                r.variant.name(),
                m.micro_f1,
                m.macro_f1,
                m.body_f1,
                m.body_recall
            );
        }
        s
    }
}

/// Trains each variant over the seed list on `train` and scores it on `test`.
/// `on_model` sees every trained model, e.g. to save it.
pub fn run_ablations(
    train: &[Document],
    test: &[Document],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    exec: Exec,
    mut on_model: impl FnMut(Variant, u64, &Model),
) -> Result<AblationReport, TrainError> {
    let mut rows = Vec::new();
    for v in Variant::ALL {
        let cfg = v.apply(model_cfg);
        log::info!("ablation variant: {}", v.name());
        let started = std::time::Instant::now();
        let runs = train_multiseed(train, &cfg, train_cfg, exec)?;
        let train_seconds = started.elapsed().as_secs_f64();
        let mut per_seed = Vec::new();
        for run in &runs.runs {
            let report = evaluate_model(&run.model, test, exec)?;
            on_model(v, run.seed, &run.model);
            per_seed.push(AblationMetrics::from_report(&report));
        }
        rows.push(AblationRow {
            variant: v,
            seeds: runs.runs.iter().map(|r| r.seed).collect(),
            mean: AblationMetrics::mean(&per_seed),
            per_seed,
            train_seconds,
        });
    }
    Ok(AblationReport { rows })
}

/// Longest common subsequence length over chars.
pub fn lcs_len(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for &ca in &a {
        for (j, &cb) in b.iter().enumerate() {
            cur[j + 1] = if ca == cb {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Character overlap of two texts relative to the longer one.
pub fn char_overlap(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    lcs_len(a, b) as f64 / longest as f64
}

pub const SECTION_OVERLAP: f64 = 0.8;

/// A section with its text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionText {
    pub section_type: SectionType,
    pub text: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SectionScore {
    pub matched: u64,
    pub predicted: u64,
    pub gold: u64,
    #[serde(flatten)]
    pub prf: Prf,
}

impl SectionScore {
    fn add(&mut self, matched: usize, predicted: usize, gold: usize) {
        self.matched += matched as u64;
        self.predicted += predicted as u64;
        self.gold += gold as u64;
        self.prf = Prf::from_counts(self.matched, self.predicted - self.matched, self.gold - self.matched);
    }
}

/// Greedy one-to-one matching: a predicted section matches the first unused
/// gold section of the same type whose overlap reaches [`SECTION_OVERLAP`].
pub fn match_sections(predicted: &[SectionText], gold: &[SectionText]) -> usize {
    let mut used = vec![false; gold.len()];
    let mut matched = 0;
    for p in predicted {
        let hit = gold.iter().enumerate().position(|(i, g)| {
            !used[i] && g.section_type == p.section_type && char_overlap(&p.text, &g.text) >= SECTION_OVERLAP
        });
        if let Some(i) = hit {
            used[i] = true;
            matched += 1;
        }
    }
    matched
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocSectionResult {
    pub doc_id: String,
    pub gold: usize,
    pub naive_predicted: usize,
    pub naive_matched: usize,
    pub advanced_predicted: usize,
    pub advanced_matched: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionComparison {
    pub naive: SectionScore,
    pub advanced: SectionScore,
    pub documents: Vec<DocSectionResult>,
}

impl SectionComparison {
    pub fn to_table(&self) -> String {
        let mut s = format!(
            "{:<10} {:>9} {:>9} {:>9} {:>8} {:>8} {:>8}\n",
            "pipeline", "precision", "recall", "f1", "matched", "pred", "gold"
        );
        for (name, sc) in [("naive", &self.naive), ("advanced", &self.advanced)] {
            let _ = writeln!(
                s,
                "{:<10} {:>9.3} {:>9.3} {:>9.3} {:>8} {:>8} {:>8}",
                name, sc.prf.precision, sc.prf.recall, sc.prf.f1, sc.matched, sc.predicted, sc.gold
            );
        }
        s
    }
}

fn sections_of(text: &crate::extractor::ExtractedText, dict: &SectionDictionary) -> Vec<SectionText> {
    segment(text, dict)
        .into_iter()
        .map(|s| SectionText {
            section_type: s.section_type,
            text: span_text(&text.text, s.char_start, s.char_end),
        })
        .collect()
}

/// A document with its gold body string and the section spans over it.
#[derive(Debug, Clone, Copy)]
pub struct SectionGold<'a> {
    pub doc: &'a Document,
    pub body_text: &'a str,
    pub sections: &'a [GoldSection],
}

impl<'a> From<&'a GeneratedDocument> for SectionGold<'a> {
    fn from(g: &'a GeneratedDocument) -> Self {
        SectionGold {
            doc: &g.doc,
            body_text: &g.body_text,
            sections: &g.sections,
        }
    }
}

/// Segments the naive mask output and the model-based body of each
/// document and scores both against the gold sections.
pub fn compare_section_extraction<F>(
    docs: &[SectionGold<'_>],
    predict: F,
    mask: &MaskConfig,
    dict: &SectionDictionary,
    exec: Exec,
) -> SectionComparison
where
    F: Fn(&Document) -> Vec<LineLabel> + Sync + Send,
{
    let documents = exec.map(docs, |g| {
        let gold: Vec<SectionText> = g
            .sections
            .iter()
            .map(|s| SectionText {
                section_type: s.section_type,
                text: span_text(g.body_text, s.char_start, s.char_end),
            })
            .collect();
        let naive = sections_of(&naive_extract(g.doc, mask), dict);
        let mut labeled = g.doc.clone();
        labeled.set_labels(&predict(g.doc));
        let advanced = sections_of(&aggregate(&labeled, LineLabel::Body), dict);
        DocSectionResult {
            doc_id: g.doc.doc_id.clone(),
            gold: gold.len(),
            naive_predicted: naive.len(),
            naive_matched: match_sections(&naive, &gold),
            advanced_predicted: advanced.len(),
            advanced_matched: match_sections(&advanced, &gold),
        }
    });
    let mut naive = SectionScore::default();
    let mut advanced = SectionScore::default();
    for d in &documents {
        naive.add(d.naive_matched, d.naive_predicted, d.gold);
        advanced.add(d.advanced_matched, d.advanced_predicted, d.gold);
    }
    SectionComparison {
        naive,
        advanced,
        documents,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::{LineBox, Page, PageGeometry};
    use proptest::prelude::*;

    fn doc_with(labels: &[LineLabel]) -> Document {
        let lines = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| LineBox {
                page: 0,
                x0: 10.0,
                y0: 10.0 + 12.0 * i as f64,
                x1: 100.0,
                y1: 20.0 + 12.0 * i as f64,
                text: format!("l{i}"),
                label: Some(l),
            })
            .collect();
        Document {
            doc_id: "t".into(),
            pages: vec![Page {
                geometry: PageGeometry::new(600.0, 800.0).unwrap(),
                lines,
            }],
        }
    }

    #[test]
    fn three_one_one_gives_three_quarters() {
        use LineLabel::*;
        let gold = doc_with(&[Body, Body, Body, Body, Header]);
        let pred = [Body, Body, Body, Header, Body];
        let r = micro_macro(&score_lines(&gold, &pred).unwrap());
        let b = r.body();
        assert_eq!((b.precision, b.recall, b.f1), (0.75, 0.75, 0.75));
        assert_eq!(r.counts.per_label[Body.index()], LabelCounts { tp: 3, fp: 1, fn_: 1 });
    }

    #[test]
    fn perfect_predictions() {
        let labels = [LineLabel::Body, LineLabel::Title, LineLabel::Page];
        let r = micro_macro(&score_lines(&doc_with(&labels), &labels).unwrap());
        assert_eq!(r.micro_avg.f1, 1.0);
        assert_eq!(r.macro_avg.f1, 1.0);
        assert!(r.labels.iter().all(|l| l.prf.f1 == 1.0 || l.support == 0));
    }

    #[test]
    fn length_mismatch_and_unlabeled() {
        let d = doc_with(&[LineLabel::Body]);
        assert!(matches!(score_lines(&d, &[]), Err(EvalError::LengthMismatch { .. })));
        let mut u = d.clone();
        u.pages[0].lines[0].label = None;
        assert!(matches!(
            score_lines(&u, &[LineLabel::Body]),
            Err(EvalError::UnlabeledLine { line: 0, .. })
        ));
    }

    #[test]
    fn macro_of_one_and_zero_is_half() {
        use LineLabel::*;
        let mut c = ConfusionCounts::default();
        c.per_label[Body.index()] = LabelCounts { tp: 4, fp: 0, fn_: 0 };
        c.per_label[Footer.index()] = LabelCounts { tp: 0, fp: 2, fn_: 2 };
        assert_eq!(micro_macro(&c).macro_avg.f1, 0.5);
    }

    #[test]
    fn single_label_micro_equals_label() {
        let labels = vec![LineLabel::Signature; 6];
        let r = micro_macro(&score_lines(&doc_with(&labels), &labels).unwrap());
        assert_eq!(r.micro_avg.f1, r.labels[LineLabel::Signature.index()].prf.f1);
    }

    #[test]
    fn table_has_ten_rows() {
        let r = micro_macro(&ConfusionCounts::default());
        let t = r.to_table();
        assert_eq!(t.lines().count(), 1 + 8 + 2);
        assert!(t.contains("ALL (micro-avg)"));
    }

    #[test]
    fn overlap_examples() {
        assert_eq!(lcs_len("abcde", "ace"), 3);
        assert_eq!(char_overlap("", ""), 1.0);
        assert_eq!(char_overlap("abcd", "abcd"), 1.0);
        assert_eq!(char_overlap("abcd", "abcdefgh"), 0.5);
    }

    #[test]
    fn section_matching_needs_type_and_overlap() {
        let s = |t: SectionType, x: &str| SectionText { section_type: t, text: x.into() };
        let gold = vec![
            s(SectionType::Motif, "Motif\nfièvre"),
            s(SectionType::Conclusion, "Conclusion\nguérison complète"),
        ];
        let pred = vec![
            s(SectionType::Motif, "Motif\nfièvre"),
            s(SectionType::Conclusion, "Conclusion\nguérison complète\nDr X\nCHU Y\nService Z"),
            s(SectionType::Motif, "Motif\nfièvre"),
        ];
        assert_eq!(match_sections(&pred, &gold), 1);
    }

    #[test]
    fn gold_labels_recover_gold_sections() {
        use crate::corpus::{generate, GenConfig, LayoutMix, Template};
        let m = generate(&GenConfig {
            n_documents: 6,
            layout_mix: LayoutMix::only(Template::LeftNote),
            ..GenConfig::default()
        })
        .unwrap();
        let gold: Vec<SectionGold> = m.documents.iter().map(SectionGold::from).collect();
        let cmp = compare_section_extraction(
            &gold,
            |d| d.lines().map(|(_, l)| l.label.unwrap()).collect(),
            &MaskConfig::default(),
            &SectionDictionary::default(),
            Exec::Sequential,
        );
        assert_eq!(cmp.documents.len(), 6);
        assert_eq!(cmp.advanced.prf.f1, 1.0);
        assert!(cmp.naive.prf.f1 < cmp.advanced.prf.f1);
    }

    proptest! {
        #[test]
        fn harmonic_mean_bounds(tp in 0u64..50, fp in 0u64..50, fn_ in 0u64..50) {
            let p = Prf::from_counts(tp, fp, fn_);
            for v in [p.precision, p.recall, p.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
            if p.precision > 0.0 && p.recall > 0.0 {
                prop_assert!(p.f1 <= p.precision.max(p.recall) + 1e-15);
                prop_assert!(p.f1 >= p.precision.min(p.recall) - 1e-15);
            }
        }

        #[test]
        fn micro_invariant_under_label_permutation(
            pairs in proptest::collection::vec((0usize..8, 0usize..8), 0..50),
            shift in 1usize..8,
        ) {
            let mut a = ConfusionCounts::default();
            let mut b = ConfusionCounts::default();
            for &(g, p) in &pairs {
                a.record(LineLabel::ALL[g], LineLabel::ALL[p]);
                b.record(LineLabel::ALL[(g + shift) % 8], LineLabel::ALL[(p + shift) % 8]);
            }
            prop_assert_eq!(micro_macro(&a).micro_avg, micro_macro(&b).micro_avg);
            prop_assert_eq!(a.gold_lines(), pairs.len() as u64);
        }
    }
}
