//! Label-driven text reconstruction and the fixed-rectangle baseline.

use serde::{Deserialize, Serialize};

use crate::document::{Document, LineBox, LineLabel, LineRef};

/// Two lines share a row when their vertical overlap reaches this fraction of
/// the smaller line height.
pub const ROW_OVERLAP: f64 = 0.5;
pub const SAME_ROW_JOIN: &str = " ";
pub const ROW_JOIN: &str = "\n";
pub const PAGE_JOIN: &str = "\n\n";

/// Keep-rectangle in page-normalized coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            x_min: 0.18,
            x_max: 0.95,
            y_min: 0.10,
            y_max: 0.90,
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<(), String> {
        let ok = |lo: f64, hi: f64| (0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo < hi;
        if ok(self.x_min, self.x_max) && ok(self.y_min, self.y_max) {
            Ok(())
        } else {
            Err(format!("mask bounds must satisfy 0 <= min < max <= 1: {self:?}"))
        }
    }

    pub fn contains(&self, nx: f64, ny: f64) -> bool {
        nx >= self.x_min && nx <= self.x_max && ny >= self.y_min && ny <= self.y_max
    }
}

/// Where one source line landed in the reconstructed text (char offsets).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextSpan {
    pub line: LineRef,
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedText {
    /// `None` for the mask baseline, which ignores labels.
    pub label: Option<LineLabel>,
    pub text: String,
    pub line_refs: Vec<TextSpan>,
}

/// A row of lines, left to right.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub page: usize,
    pub lines: Vec<LineRef>,
}

fn shares_row(a: &LineBox, b: &LineBox) -> bool {
    let overlap = a.y1.min(b.y1) - a.y0.max(b.y0);
    let smaller = a.height().min(b.height());
    overlap >= ROW_OVERLAP * smaller && overlap >= 0.0
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

/// Groups lines into rows and orders them top-down, left-right.
///
/// Rows are connected components of the "share a row" relation, so the result
/// does not depend on the order of `lines`. Rows sort by (page, mean `y0`),
/// lines within a row by `x0`; remaining ties fall back to emission order.
pub fn reading_rows(lines: &[(LineRef, &LineBox)]) -> Vec<Row> {
    let mut items: Vec<(LineRef, &LineBox)> = lines.to_vec();
    items.sort_by_key(|(r, _)| *r);
    let n = items.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if items[i].0.page == items[j].0.page && shares_row(items[i].1, items[j].1) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot_of_root = vec![usize::MAX; n];
    for i in 0..n {
        let root = find(&mut parent, i);
        if slot_of_root[root] == usize::MAX {
            slot_of_root[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot_of_root[root]].push(i);
    }
    let mut keyed: Vec<(usize, f64, LineRef, Row)> = groups
        .into_iter()
        .map(|mut members| {
            members.sort_by(|&a, &b| {
                items[a]
                    .1
                    .x0
                    .total_cmp(&items[b].1.x0)
                    .then(items[a].0.cmp(&items[b].0))
            });
            let mean_y0 =
                members.iter().map(|&i| items[i].1.y0).sum::<f64>() / members.len() as f64;
            let first = members.iter().map(|&i| items[i].0).min().unwrap();
            let page = items[members[0]].0.page;
            (
                page,
                mean_y0,
                first,
                Row {
                    page,
                    lines: members.iter().map(|&i| items[i].0).collect(),
                },
            )
        })
        .collect();
    keyed.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    keyed.into_iter().map(|(_, _, _, row)| row).collect()
}

/// Flattened reading order.
pub fn reading_order(lines: &[(LineRef, &LineBox)]) -> Vec<LineRef> {
    reading_rows(lines)
        .into_iter()
        .flat_map(|r| r.lines)
        .collect()
}

/// Joins the given lines in reading order.
pub fn join_lines(doc: &Document, selected: &[LineRef], label: Option<LineLabel>) -> ExtractedText {
    let lines: Vec<(LineRef, &LineBox)> = selected
        .iter()
        .filter_map(|&r| doc.line(r).map(|l| (r, l)))
        .collect();
    let rows = reading_rows(&lines);
    let mut text = String::new();
    let mut chars = 0usize;
    let mut line_refs = Vec::with_capacity(lines.len());
    let mut prev_page: Option<usize> = None;
    for row in rows {
        if let Some(p) = prev_page {
            let sep = if p == row.page { ROW_JOIN } else { PAGE_JOIN };
            text.push_str(sep);
            chars += sep.chars().count();
        }
        prev_page = Some(row.page);
        for (k, r) in row.lines.iter().enumerate() {
            if k > 0 {
                text.push_str(SAME_ROW_JOIN);
                chars += 1;
            }
            let line_text = &doc.line(*r).expect("selected line exists").text;
            let len = line_text.chars().count();
            text.push_str(line_text);
            line_refs.push(TextSpan {
                line: *r,
                char_start: chars,
                char_end: chars + len,
            });
            chars += len;
        }
    }
    ExtractedText {
        label,
        text,
        line_refs,
    }
}

/// Text of every line carrying `label`, in reading order.
pub fn aggregate(doc: &Document, label: LineLabel) -> ExtractedText {
    let selected: Vec<LineRef> = doc
        .lines()
        .filter(|(_, l)| l.label == Some(label))
        .map(|(r, _)| r)
        .collect();
    join_lines(doc, &selected, Some(label))
}

/// Lines whose box center falls in the page rectangle, regardless of label.
pub fn mask_selection(doc: &Document, mask: &MaskConfig) -> Vec<LineRef> {
    doc.lines()
        .filter(|(r, l)| {
            let geometry = &doc.pages[r.page].geometry;
            let (cx, cy) = l.center();
            mask.contains(cx / geometry.width, cy / geometry.height)
        })
        .map(|(r, _)| r)
        .collect()
}

pub fn naive_extract(doc: &Document, mask: &MaskConfig) -> ExtractedText {
    join_lines(doc, &mask_selection(doc, mask), None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::{Page, PageGeometry};

    fn lb(page: usize, x0: f64, y0: f64, x1: f64, text: &str, label: LineLabel) -> LineBox {
        LineBox {
            page,
            x0,
            y0,
            x1,
            y1: y0 + 10.0,
            text: text.into(),
            label: Some(label),
        }
    }

    fn doc(pages: Vec<Vec<LineBox>>) -> Document {
        Document {
            doc_id: "t".into(),
            pages: pages
                .into_iter()
                .map(|lines| Page {
                    geometry: PageGeometry::new(600.0, 800.0).unwrap(),
                    lines,
                })
                .collect(),
        }
    }

    #[test]
    fn top_down_then_left_right() {
        use LineLabel::Body;
        let d = doc(vec![vec![
            lb(0, 50.0, 200.0, 90.0, "low", Body),
            lb(0, 150.0, 100.0, 190.0, "right", Body),
            lb(0, 50.0, 102.0, 90.0, "left", Body),
        ]]);
        let out = aggregate(&d, Body);
        assert_eq!(out.text, "left right\nlow");
        let spans: Vec<_> = out.line_refs.iter().map(|s| (s.char_start, s.char_end)).collect();
        assert_eq!(spans, vec![(0, 4), (5, 10), (11, 14)]);
    }

    #[test]
    fn pages_are_separated_by_a_blank_line() {
        use LineLabel::*;
        let d = doc(vec![
            vec![lb(0, 50.0, 100.0, 90.0, "Conclusion", Body), lb(0, 50.0, 10.0, 90.0, "Hôpital", Header)],
            vec![lb(1, 50.0, 100.0, 90.0, "guérison", Body)],
        ]);
        assert_eq!(aggregate(&d, Body).text, "Conclusion\n\nguérison");
        assert_eq!(aggregate(&d, Header).text, "Hôpital");
        let none = aggregate(&d, Signature);
        assert!(none.text.is_empty() && none.line_refs.is_empty());
    }

    #[test]
    fn mask_keeps_centers_inside() {
        use LineLabel::*;
        let d = doc(vec![vec![
            lb(0, 200.0, 400.0, 300.0, "body", Body),
            lb(0, 200.0, 20.0, 300.0, "header", Header),
            // left note whose center x = 125 / 600 = 0.208 lies inside
            lb(0, 100.0, 400.0, 150.0, "Pr X", LeftNote),
        ]]);
        let out = naive_extract(&d, &MaskConfig::default());
        assert_eq!(out.text, "Pr X body");
        assert_eq!(out.label, None);
    }

    #[test]
    fn mask_validation() {
        assert!(MaskConfig::default().validate().is_ok());
        let bad = MaskConfig {
            x_min: 0.5,
            x_max: 0.5,
            ..MaskConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
