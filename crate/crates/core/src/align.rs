//! Transfers labels from annotated page regions onto extracted lines.

use serde::{Deserialize, Serialize};

use crate::document::{Document, LineBox, LineLabel};

/// Lines whose best overlap ratio falls below this get [`LineLabel::Others`].
pub const MIN_OVERLAP_RATIO: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnotationBox {
    pub page: usize,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub label: LineLabel,
}

impl AnnotationBox {
    fn area(&self) -> f64 {
        (self.x1 - self.x0).max(0.0) * (self.y1 - self.y0).max(0.0)
    }
}

/// Fraction of the line box covered by the annotation box.
pub fn overlap_ratio(line: &LineBox, annotation: &AnnotationBox) -> f64 {
    if line.page != annotation.page {
        return 0.0;
    }
    let area = line.area();
    if area <= 0.0 {
        let (cx, cy) = line.center();
        let inside = cx >= annotation.x0
            && cx <= annotation.x1
            && cy >= annotation.y0
            && cy <= annotation.y1;
        return if inside { 1.0 } else { 0.0 };
    }
    let w = (line.x1.min(annotation.x1) - line.x0.max(annotation.x0)).max(0.0);
    let h = (line.y1.min(annotation.y1) - line.y0.max(annotation.y0)).max(0.0);
    w * h / area
}

/// Label for one line: the annotation with the largest overlap ratio, ties
/// going to the smaller annotation box, then to the earlier one.
pub fn best_label(line: &LineBox, boxes: &[AnnotationBox], min_ratio: f64) -> LineLabel {
    let mut best: Option<(f64, f64, LineLabel)> = None;
    for annotation in boxes {
        let ratio = overlap_ratio(line, annotation);
        if ratio <= 0.0 {
            continue;
        }
        let area = annotation.area();
        let better = match best {
            None => true,
            Some((r, a, _)) => ratio > r || (ratio == r && area < a),
        };
        if better {
            best = Some((ratio, area, annotation.label));
        }
    }
    match best {
        Some((ratio, _, label)) if ratio >= min_ratio => label,
        _ => LineLabel::Others,
    }
}

pub fn align_labels(doc: &Document, boxes: &[AnnotationBox]) -> Document {
    align_labels_with(doc, boxes, MIN_OVERLAP_RATIO)
}

pub fn align_labels_with(doc: &Document, boxes: &[AnnotationBox], min_ratio: f64) -> Document {
    let mut out = doc.clone();
    for line in out.lines_mut() {
        line.label = Some(best_label(line, boxes, min_ratio));
    }
    out
}
