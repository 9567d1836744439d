#![allow(dead_code)]

use edlx_core::document::{Document, LineBox};

pub const COORD_TOL: f64 = 0.5;

fn same_line(a: &LineBox, b: &LineBox) -> bool {
    a.page == b.page
        && a.text == b.text
        && [(a.x0, b.x0), (a.x1, b.x1), (a.y0, b.y0), (a.y1, b.y1)]
            .iter()
            .all(|(p, q)| (p - q).abs() <= COORD_TOL)
}

/// Number of `gold` lines that reappear in `parsed` with byte-equal text
/// and coordinates within tolerance. Lines are matched one-to-one per page.
pub fn recovered_lines(gold: &Document, parsed: &Document) -> usize {
    let mut hits = 0;
    for (gp, pp) in gold.pages.iter().zip(&parsed.pages) {
        let mut used = vec![false; pp.lines.len()];
        for g in &gp.lines {
            if let Some(k) = (0..pp.lines.len()).find(|&k| !used[k] && same_line(g, &pp.lines[k])) {
                used[k] = true;
                hits += 1;
            }
        }
    }
    hits
}

/// Copies gold labels onto a parsed document whose lines all match.
pub fn transfer_labels(gold: &Document, parsed: &Document) -> Option<Document> {
    if gold.pages.len() != parsed.pages.len() || gold.line_count() != parsed.line_count() {
        return None;
    }
    let mut out = parsed.clone();
    for (gp, op) in gold.pages.iter().zip(&mut out.pages) {
        let mut used = vec![false; op.lines.len()];
        for g in &gp.lines {
            let k = (0..op.lines.len()).find(|&k| !used[k] && same_line(g, &op.lines[k]))?;
            used[k] = true;
            op.lines[k].label = g.label;
        }
    }
    Some(out)
}
