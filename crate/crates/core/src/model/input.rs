use crate::document::{Document, LineLabel};
use crate::features::{TokenIds, Vocab, UNK};

use super::encoding::{layout_embedding, LayoutFeatures};
use super::ModelConfig;

/// Everything the network reads from a document, in line emission order.
#[derive(Debug, Clone, PartialEq)]
pub struct DocInput {
    /// Token ids of all lines, concatenated.
    pub tokens: Vec<TokenIds>,
    /// `line_start[i]..line_start[i + 1]` indexes `tokens` for line `i`.
    pub line_start: Vec<usize>,
    /// Layout part of each line embedding, `n × d` row-major.
    pub layout: Vec<f64>,
    /// Box centers normalized by their own page's size.
    pub centers: Vec<(f64, f64)>,
}

impl DocInput {
    pub fn new(doc: &Document, vocab: &Vocab, config: &ModelConfig) -> Self {
        let mut input = DocInput {
            tokens: Vec::new(),
            line_start: vec![0],
            layout: Vec::with_capacity(doc.line_count() * config.d),
            centers: Vec::with_capacity(doc.line_count()),
        };
        for page in &doc.pages {
            let g = &page.geometry;
            for line in &page.lines {
                let ids = vocab.featurize_frozen(&line.text);
                if ids.is_empty() {
                    input.tokens.push([UNK; 4]);
                } else {
                    input.tokens.extend(ids);
                }
                input.line_start.push(input.tokens.len());
                let f = LayoutFeatures::new(line, g);
                input
                    .layout
                    .extend(layout_embedding(&f, config.d, config.position_scale));
                let (cx, cy) = line.center();
                input.centers.push((cx / g.width, cy / g.height));
            }
        }
        input
    }

    pub fn n_lines(&self) -> usize {
        self.centers.len()
    }

    pub fn line_tokens(&self, i: usize) -> &[TokenIds] {
        &self.tokens[self.line_start[i]..self.line_start[i + 1]]
    }

    /// Reorders lines so that new line `k` is old line `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let d = self.layout.len() / self.n_lines().max(1);
        let mut out = DocInput {
            tokens: Vec::with_capacity(self.tokens.len()),
            line_start: vec![0],
            layout: Vec::with_capacity(self.layout.len()),
            centers: Vec::with_capacity(self.centers.len()),
        };
        for &i in perm {
            out.tokens.extend_from_slice(self.line_tokens(i));
            out.line_start.push(out.tokens.len());
            out.layout.extend_from_slice(&self.layout[i * d..(i + 1) * d]);
            out.centers.push(self.centers[i]);
        }
        out
    }
}

/// Gold label indices, or `None` when any line is unlabeled.
pub fn label_indices(doc: &Document) -> Option<Vec<usize>> {
    doc.lines()
        .map(|(_, l)| l.label.map(LineLabel::index))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::{LineBox, Page, PageGeometry};

    #[test]
    fn empty_token_lines_get_one_unk() {
        let g = PageGeometry::new(100.0, 100.0).unwrap();
        let mut doc = Document::new("d");
        doc.pages.push(Page {
            geometry: g,
            lines: vec![
                LineBox { page: 0, x0: 0.0, y0: 0.0, x1: 10.0, y1: 5.0, text: "Bonjour Madame".into(), label: None },
                LineBox { page: 0, x0: 0.0, y0: 10.0, x1: 10.0, y1: 15.0, text: "\u{a0}".into(), label: None },
            ],
        });
        let mut vocab = Vocab::new();
        vocab.featurize_text("Bonjour");
        vocab.freeze();
        let input = DocInput::new(&doc, &vocab, &ModelConfig::tiny());
        assert_eq!(input.line_start, vec![0, 2, 3]);
        assert_eq!(input.line_tokens(1), &[[UNK; 4]]);
        assert_ne!(input.line_tokens(0)[0], [UNK; 4]);
        assert_eq!(input.layout.len(), 24);
        assert_eq!(input.centers[1], (0.05, 0.125));
        let p = input.permuted(&[1, 0]);
        assert_eq!(p.line_tokens(0), input.line_tokens(1));
        assert_eq!(p.permuted(&[1, 0]), input);
    }
}
