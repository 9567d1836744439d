//! Positioned text lines and the documents that hold them.
//!
//! All coordinates are PDF points with a top-left origin: `y` grows downward,
//! so "top-down" reading order is ascending `y0`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Layout role of a single line.
///
/// The declaration order is the tie-break order used by argmax prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineLabel {
    Body,
    Footer,
    Header,
    LeftNote,
    Page,
    Others,
    Signature,
    Title,
}

impl LineLabel {
    pub const COUNT: usize = 8;

    pub const ALL: [LineLabel; LineLabel::COUNT] = [
        LineLabel::Body,
        LineLabel::Footer,
        LineLabel::Header,
        LineLabel::LeftNote,
        LineLabel::Page,
        LineLabel::Others,
        LineLabel::Signature,
        LineLabel::Title,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LineLabel::Body => "body",
            LineLabel::Footer => "footer",
            LineLabel::Header => "header",
            LineLabel::LeftNote => "left_note",
            LineLabel::Page => "page",
            LineLabel::Others => "others",
            LineLabel::Signature => "signature",
            LineLabel::Title => "title",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<LineLabel> {
        LineLabel::ALL.get(index).copied()
    }
}

impl fmt::Display for LineLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnknownLabel(pub String);

impl fmt::Display for UnknownLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "unknown line label `{}`", self.0)
    }
}

impl std::error::Error for UnknownLabel {}

impl FromStr for LineLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LineLabel::ALL
            .iter()
            .copied()
            .find(|label| label.as_str() == s)
            .ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PageGeometry {
    pub width: f64,
    pub height: f64,
}

impl PageGeometry {
    pub fn new(width: f64, height: f64) -> Option<Self> {
        (width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite())
            .then_some(PageGeometry { width, height })
    }

    /// Converts a bottom-left-origin `y` to top-left origin. Applying it twice
    /// is the identity.
    pub fn flip_y(&self, y: f64) -> f64 {
        self.height - y
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineBox {
    pub page: usize,
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
    pub text: String,
    pub label: Option<LineLabel>,
}

impl LineBox {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) * 0.5, (self.y0 + self.y1) * 0.5)
    }

    /// Checks the box against its page; returns a description of the first
    /// violated invariant.
    pub fn validate(&self, geometry: &PageGeometry) -> Result<(), String> {
        let coords = [self.x0, self.y0, self.x1, self.y1];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err("non-finite coordinate".into());
        }
        if self.x0 > self.x1 || self.y0 > self.y1 {
            return Err(format!(
                "inverted box ({}, {}, {}, {})",
                self.x0, self.y0, self.x1, self.y1
            ));
        }
        if self.x0 < 0.0 || self.y0 < 0.0 || self.x1 > geometry.width || self.y1 > geometry.height
        {
            return Err(format!(
                "box ({}, {}, {}, {}) outside page {}x{}",
                self.x0, self.y0, self.x1, self.y1, geometry.width, geometry.height
            ));
        }
        if self.text.trim().is_empty() {
            return Err("text has no visible character".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Page {
    pub geometry: PageGeometry,
    pub lines: Vec<LineBox>,
}

/// An ordered collection of pages. Lines keep parser emission order.
#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub pages: Vec<Page>,
}

/// Stable reference to a line: page index and position within that page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LineRef {
    pub page: usize,
    pub line: usize,
}

impl Document {
    pub fn new(doc_id: impl Into<String>) -> Self {
        Document {
            doc_id: doc_id.into(),
            pages: Vec::new(),
        }
    }

    pub fn line_count(&self) -> usize {
        self.pages.iter().map(|p| p.lines.len()).sum()
    }

    /// Lines in emission order with their references.
    pub fn lines(&self) -> impl Iterator<Item = (LineRef, &LineBox)> + '_ {
        self.pages.iter().enumerate().flat_map(|(page, p)| {
            p.lines
                .iter()
                .enumerate()
                .map(move |(line, lb)| (LineRef { page, line }, lb))
        })
    }

    pub fn lines_mut(&mut self) -> impl Iterator<Item = &mut LineBox> + '_ {
        self.pages.iter_mut().flat_map(|p| p.lines.iter_mut())
    }

    pub fn line(&self, r: LineRef) -> Option<&LineBox> {
        self.pages.get(r.page).and_then(|p| p.lines.get(r.line))
    }

    pub fn labels(&self) -> Vec<Option<LineLabel>> {
        self.lines().map(|(_, l)| l.label).collect()
    }

    /// Overwrites every line label with `labels`, given in emission order.
    pub fn set_labels(&mut self, labels: &[LineLabel]) {
        debug_assert_eq!(labels.len(), self.line_count());
        for (line, label) in self.lines_mut().zip(labels) {
            line.label = Some(*label);
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (index, page) in self.pages.iter().enumerate() {
            for (li, line) in page.lines.iter().enumerate() {
                if line.page != index {
                    return Err(format!(
                        "line {li} of page {index} claims page {}",
                        line.page
                    ));
                }
                line.validate(&page.geometry)
                    .map_err(|e| format!("page {index} line {li}: {e}"))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn label_names_round_trip() {
        for label in LineLabel::ALL {
            assert_eq!(label.as_str().parse::<LineLabel>().unwrap(), label);
            assert_eq!(LineLabel::from_index(label.index()), Some(label));
        }
        assert!("left note".parse::<LineLabel>().is_err());
        assert_eq!(
            serde_json::to_string(&LineLabel::LeftNote).unwrap(),
            "\"left_note\""
        );
    }

    #[test]
    fn validate_rejects_whitespace_text() {
        let geometry = PageGeometry::new(100.0, 100.0).unwrap();
        let mut line = LineBox {
            page: 0,
            x0: 1.0,
            y0: 1.0,
            x1: 2.0,
            y1: 2.0,
            text: " \t".into(),
            label: None,
        };
        assert!(line.validate(&geometry).is_err());
        line.text = "a".into();
        assert!(line.validate(&geometry).is_ok());
        line.x1 = 101.0;
        assert!(line.validate(&geometry).is_err());
    }

    proptest! {
        #[test]
        fn flip_is_an_involution(h in 1.0f64..2000.0, y in -100.0f64..2100.0) {
            let geometry = PageGeometry::new(10.0, h).unwrap();
            prop_assert!((geometry.flip_y(geometry.flip_y(y)) - y).abs() <= 1e-9);
        }
    }
}
