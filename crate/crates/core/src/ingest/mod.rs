//! Text-line extraction from a restricted subset of PDF.
//!
//! Supported: classic cross-reference tables (with incremental `/Prev`
//! sections), uncompressed or Flate-compressed content streams, simple
//! Type1/TrueType fonts in WinAnsi or built-in encoding, and the text
//! operators `BT ET Tf Td TD Tm T* Tj TJ ' " Tc Tw Tz TL Ts` plus `q Q cm`.
//! Anything else that could carry text (XObjects, inline images, CID fonts,
//! encryption, rotation) is rejected rather than skipped.

mod content;
mod file;
pub mod fonts;
mod lexer;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::document::{Document, LineBox, Page, PageGeometry};
pub use content::GlyphRun;
use content::{Interpreter, LoadedFont};
use file::PdfFile;
use fonts::FontMetrics;
use lexer::{Dict, Object};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("unsupported PDF feature: {0}")]
    UnsupportedFeature(String),
    #[error("malformed PDF: {0}")]
    MalformedPdf(String),
}

/// Line assembly and box geometry, as fractions of the font size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Runs whose baselines differ by at most this fraction share a line.
    pub baseline_tolerance: f64,
    /// Largest horizontal gap bridged when merging runs.
    pub max_gap: f64,
    /// Gaps wider than this become a space in the merged text.
    pub space_gap: f64,
    pub ascent: f64,
    pub descent: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            baseline_tolerance: 0.25,
            max_gap: 1.0,
            space_gap: 0.2,
            ascent: 0.8,
            descent: 0.2,
        }
    }
}

fn malformed(msg: impl Into<String>) -> IngestError {
    IngestError::MalformedPdf(msg.into())
}

fn unsupported(msg: impl Into<String>) -> IngestError {
    IngestError::UnsupportedFeature(msg.into())
}

pub fn parse_pdf(bytes: &[u8]) -> Result<Document, IngestError> {
    parse_pdf_with(bytes, "", &IngestConfig::default())
}

pub fn parse_pdf_with(
    bytes: &[u8],
    doc_id: &str,
    config: &IngestConfig,
) -> Result<Document, IngestError> {
    let file = PdfFile::open(bytes)?;
    let root = file.resolve_dict(&file.trailer["Root"], "/Root")?;
    let pages_ref = root
        .get("Pages")
        .ok_or_else(|| malformed("catalog lacks /Pages"))?;
    let mut doc = Document::new(doc_id);
    for leaf in collect_pages(&file, pages_ref)? {
        let index = doc.pages.len();
        doc.pages.push(read_page(&file, &leaf, index, config)?);
    }
    Ok(doc)
}

/// A page dictionary with inherited attributes resolved.
struct PageLeaf {
    dict: Dict,
    media_box: [f64; 4],
    resources: Option<Object>,
    rotate: i64,
}

fn collect_pages(file: &PdfFile<'_>, root: &Object) -> Result<Vec<PageLeaf>, IngestError> {
    struct Inherited {
        media_box: Option<[f64; 4]>,
        resources: Option<Object>,
        rotate: Option<i64>,
    }
    let mut out = Vec::new();
    let mut stack = vec![(
        root.clone(),
        Inherited {
            media_box: None,
            resources: None,
            rotate: None,
        },
        0usize,
    )];
    let mut visits = 0usize;
    while let Some((node_ref, inherited, depth)) = stack.pop() {
        visits += 1;
        if depth > 64 || visits > 100_000 {
            return Err(malformed("page tree too deep or cyclic"));
        }
        let node = file.resolve_dict(&node_ref, "page tree node")?;
        let media_box = match node.get("MediaBox") {
            Some(mb) => Some(parse_rect(&file.resolve(mb)?)?),
            None => inherited.media_box,
        };
        let resources = node.get("Resources").cloned().or(inherited.resources);
        let rotate = match node.get("Rotate") {
            Some(r) => Some(
                file.resolve(r)?
                    .as_i64()
                    .ok_or_else(|| malformed("/Rotate is not an integer"))?,
            ),
            None => inherited.rotate,
        };
        let kind = node.get("Type").and_then(Object::as_name);
        let is_tree = kind == Some("Pages") || (kind.is_none() && node.contains_key("Kids"));
        if is_tree {
            let kids = file.resolve(node.get("Kids").ok_or_else(|| malformed("/Pages without /Kids"))?)?;
            let kids = kids
                .as_array()
                .ok_or_else(|| malformed("/Kids is not an array"))?;
            // reversed so pages pop in document order
            for kid in kids.iter().rev() {
                stack.push((
                    kid.clone(),
                    Inherited {
                        media_box,
                        resources: resources.clone(),
                        rotate,
                    },
                    depth + 1,
                ));
            }
        } else {
            out.push(PageLeaf {
                media_box: media_box.ok_or_else(|| malformed("page without /MediaBox"))?,
                resources,
                rotate: rotate.unwrap_or(0),
                dict: node,
            });
        }
    }
    Ok(out)
}

fn parse_rect(obj: &Object) -> Result<[f64; 4], IngestError> {
    let items = obj
        .as_array()
        .filter(|a| a.len() == 4)
        .ok_or_else(|| malformed("rectangle must have four numbers"))?;
    let mut r = [0.0; 4];
    for (slot, item) in r.iter_mut().zip(items) {
        *slot = item.as_f64().ok_or_else(|| malformed("rectangle entry is not a number"))?;
    }
    Ok([r[0].min(r[2]), r[1].min(r[3]), r[0].max(r[2]), r[1].max(r[3])])
}

fn load_fonts(
    file: &PdfFile<'_>,
    resources: Option<&Object>,
) -> Result<HashMap<String, LoadedFont>, IngestError> {
    let mut fonts = HashMap::new();
    let Some(resources) = resources else {
        return Ok(fonts);
    };
    let resources = file.resolve_dict(resources, "/Resources")?;
    let Some(font_dict) = resources.get("Font") else {
        return Ok(fonts);
    };
    for (name, font_ref) in file.resolve_dict(font_dict, "/Font resources")? {
        let font = file.resolve_dict(&font_ref, "font")?;
        let subtype = font.get("Subtype").and_then(Object::as_name).unwrap_or("");
        match subtype {
            "Type1" | "TrueType" | "MMType1" => {}
            "Type0" | "CIDFontType0" | "CIDFontType2" => {
                return Err(unsupported(format!("CID font /{name} ({subtype})")))
            }
            other => return Err(unsupported(format!("font /{name} of subtype /{other}"))),
        }
        if let Some(enc) = font.get("Encoding") {
            match file.resolve(enc)? {
                Object::Name(n) if n == "WinAnsiEncoding" || n == "StandardEncoding" => {}
                Object::Name(n) => return Err(unsupported(format!("font encoding /{n}"))),
                _ => return Err(unsupported(format!("custom encoding dictionary on /{name}"))),
            }
        }
        let base = font.get("BaseFont").and_then(Object::as_name).unwrap_or("");
        if base.starts_with("Symbol") || base.starts_with("ZapfDingbats") {
            return Err(unsupported(format!("symbolic font /{base}")));
        }
        let metrics = match font.get("Widths") {
            Some(w) => {
                let widths = file.resolve(w)?;
                let widths = widths
                    .as_array()
                    .ok_or_else(|| malformed("/Widths is not an array"))?
                    .iter()
                    .map(|x| {
                        file.resolve(x)?
                            .as_f64()
                            .ok_or_else(|| malformed("/Widths entry is not a number"))
                    })
                    .collect::<Result<Vec<f64>, _>>()?;
                let first = font
                    .get("FirstChar")
                    .map(|f| file.resolve(f))
                    .transpose()?
                    .and_then(|f| f.as_i64())
                    .unwrap_or(0)
                    .clamp(0, 255) as usize;
                FontMetrics::from_widths(first, &widths, 0.0)
            }
            None => FontMetrics::standard(base)
                .ok_or_else(|| malformed(format!("font /{name} ({base}) lacks /Widths")))?,
        };
        fonts.insert(name, LoadedFont { metrics });
    }
    Ok(fonts)
}

fn read_page(
    file: &PdfFile<'_>,
    leaf: &PageLeaf,
    index: usize,
    config: &IngestConfig,
) -> Result<Page, IngestError> {
    if leaf.rotate.rem_euclid(360) != 0 {
        return Err(unsupported(format!("page rotation /Rotate {}", leaf.rotate)));
    }
    let [llx, lly, urx, ury] = leaf.media_box;
    let geometry = PageGeometry::new(urx - llx, ury - lly)
        .ok_or_else(|| malformed("degenerate /MediaBox"))?;
    let fonts = load_fonts(file, leaf.resources.as_ref())?;

    let mut content = Vec::new();
    if let Some(contents) = leaf.dict.get("Contents") {
        let parts = match file.resolve(contents)? {
            Object::Array(items) => items,
            Object::Null => Vec::new(),
            _ => vec![contents.clone()],
        };
        for part in parts {
            content.extend_from_slice(&file.stream_data(&part)?);
            content.push(b'\n');
        }
    }
    let mut interpreter = Interpreter::new(&fonts);
    interpreter.run(&content)?;

    let runs: Vec<GlyphRun> = interpreter
        .runs
        .into_iter()
        .map(|r| GlyphRun {
            x0: r.x0 - llx,
            x1: r.x1 - llx,
            baseline: r.baseline - lly,
            ..r
        })
        .collect();
    Ok(Page {
        geometry,
        lines: assemble_lines(&runs, index, &geometry, config),
    })
}

struct OpenLine {
    text: String,
    x0: f64,
    x1: f64,
    baseline: f64,
    size: f64,
}

/// Merges glyph runs, in emission order, into visual lines.
pub fn assemble_lines(
    runs: &[GlyphRun],
    page: usize,
    geometry: &PageGeometry,
    config: &IngestConfig,
) -> Vec<LineBox> {
    let mut lines = Vec::new();
    let mut open: Option<OpenLine> = None;
    for run in runs {
        if let Some(cur) = open.as_mut() {
            let same_baseline = (run.baseline - cur.baseline).abs() <= config.baseline_tolerance * cur.size;
            let gap = run.x0 - cur.x1;
            let tolerance = config.max_gap * cur.size.max(run.size);
            if same_baseline && gap <= tolerance && gap >= -tolerance {
                let boundary_space = cur.text.ends_with(char::is_whitespace)
                    || run.text.starts_with(char::is_whitespace);
                if gap > config.space_gap * cur.size && !boundary_space {
                    cur.text.push(' ');
                }
                cur.text.push_str(&run.text);
                cur.x0 = cur.x0.min(run.x0);
                cur.x1 = cur.x1.max(run.x1);
                cur.size = cur.size.max(run.size);
                continue;
            }
        }
        if let Some(done) = open.take() {
            lines.extend(close_line(done, page, geometry, config));
        }
        open = Some(OpenLine {
            text: run.text.clone(),
            x0: run.x0,
            x1: run.x1,
            baseline: run.baseline,
            size: run.size,
        });
    }
    if let Some(done) = open {
        lines.extend(close_line(done, page, geometry, config));
    }
    lines
}

fn close_line(
    line: OpenLine,
    page: usize,
    geometry: &PageGeometry,
    config: &IngestConfig,
) -> Option<LineBox> {
    let text = line.text.trim();
    if text.is_empty() {
        return None;
    }
    let clamp_x = |x: f64| x.clamp(0.0, geometry.width);
    let clamp_y = |y: f64| y.clamp(0.0, geometry.height);
    Some(LineBox {
        page,
        x0: clamp_x(line.x0),
        x1: clamp_x(line.x1),
        y0: clamp_y(geometry.flip_y(line.baseline + config.ascent * line.size)),
        y1: clamp_y(geometry.flip_y(line.baseline - config.descent * line.size)),
        text: text.to_string(),
        label: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Builds a minimal single-page PDF around `content` with correct offsets.
    pub(crate) fn tiny_pdf(content: &str, extra_font: &str) -> Vec<u8> {
        let objects = [
            "<< /Type /Catalog /Pages 2 0 R >>".to_string(),
            "<< /Type /Pages /Kids [3 0 R] /Count 1 /MediaBox [0 0 612 792] >>".to_string(),
            "<< /Type /Page /Parent 2 0 R /Resources << /Font << /F1 5 0 R >> >> /Contents 4 0 R >>"
                .to_string(),
            format!(
                "<< /Length {} >>\nstream\n{}\nendstream",
                content.len() + 1,
                content
            ),
            format!("<< /Type /Font /Subtype /Type1 /BaseFont /Helvetica {extra_font}>>"),
        ];
        let mut out = b"%PDF-1.4\n".to_vec();
        let mut offsets = Vec::new();
        for (i, body) in objects.iter().enumerate() {
            offsets.push(out.len());
            out.extend_from_slice(format!("{} 0 obj\n{}\nendobj\n", i + 1, body).as_bytes());
        }
        let xref = out.len();
        out.extend_from_slice(format!("xref\n0 {}\n0000000000 65535 f \n", objects.len() + 1).as_bytes());
        for off in offsets {
            out.extend_from_slice(format!("{off:010} 00000 n \n").as_bytes());
        }
        out.extend_from_slice(
            format!(
                "trailer\n<< /Size {} /Root 1 0 R >>\nstartxref\n{}\n%%EOF\n",
                objects.len() + 1,
                xref
            )
            .as_bytes(),
        );
        out
    }

    #[test]
    fn hello_box_geometry() {
        let pdf = tiny_pdf("BT /F1 12 Tf 72 720 Td (Hello) Tj ET", "");
        let doc = parse_pdf(&pdf).unwrap();
        assert_eq!(doc.pages.len(), 1);
        let lines = &doc.pages[0].lines;
        assert_eq!(lines.len(), 1);
        let l = &lines[0];
        assert_eq!(l.text, "Hello");
        assert_eq!(l.x0, 72.0);
        assert!((l.y0 - (792.0 - 720.0 - 9.6)).abs() < 1e-9);
        assert!((l.y1 - (792.0 - 720.0 + 2.4)).abs() < 1e-9);
        assert!((l.x1 - 99.336).abs() < 1e-9);
    }

    #[test]
    fn empty_content_gives_empty_page() {
        let pdf = tiny_pdf("0 0 m 10 10 l S", "");
        let doc = parse_pdf(&pdf).unwrap();
        assert_eq!(doc.pages.len(), 1);
        assert!(doc.pages[0].lines.is_empty());
    }

    #[test]
    fn gap_rule_splits_same_baseline_runs() {
        // "AB" then a run 5pt away (merged with a space) then one 30pt away
        let src = "BT /F1 10 Tf 1 0 0 1 50 500 Tm (AB) Tj 1 0 0 1 68.34 500 Tm (CD) Tj \
                   1 0 0 1 200 500 Tm (EF) Tj ET";
        let doc = parse_pdf(&tiny_pdf(src, "")).unwrap();
        let texts: Vec<_> = doc.pages[0].lines.iter().map(|l| l.text.as_str()).collect();
        assert_eq!(texts, vec!["AB CD", "EF"]);
    }

    #[test]
    fn unsupported_constructs_are_named() {
        let cid = tiny_pdf("BT /F1 12 Tf (A) Tj ET", "/Encoding /Identity-H ");
        assert!(matches!(parse_pdf(&cid), Err(IngestError::UnsupportedFeature(m)) if m.contains("Identity-H")));
        let mut encrypted = tiny_pdf("", "");
        let text = String::from_utf8_lossy(&encrypted).replace("/Root 1 0 R", "/Root 1 0 R /Encrypt 9 0 R");
        encrypted = text.into_bytes();
        assert!(matches!(parse_pdf(&encrypted), Err(IngestError::UnsupportedFeature(_))));
    }

    #[test]
    fn broken_structure_is_malformed() {
        assert!(matches!(parse_pdf(b"hello"), Err(IngestError::MalformedPdf(_))));
        let mut pdf = tiny_pdf("BT /F1 12 Tf 72 720 Td (Hello) Tj ET", "");
        let len = pdf.len();
        pdf.truncate(len - 30);
        assert!(parse_pdf(&pdf).is_err());
    }
}
