//! Writes Documents as PDFs inside the subset `parse_pdf` accepts.

use std::io::Write;

use flate2::write::ZlibEncoder;
use flate2::Compression;

use crate::document::{Document, LineBox, PageGeometry};
use crate::ingest::fonts::{helvetica_width, text_width, win_ansi_encode};
use crate::ingest::IngestConfig;

/// Baseline (PDF coordinates) and font size that reproduce `line`'s box
/// under the default ascent and descent fractions.
pub fn placement(line: &LineBox, geometry: &PageGeometry) -> (f64, f64) {
    let cfg = IngestConfig::default();
    let size = (line.y1 - line.y0) / (cfg.ascent + cfg.descent);
    let baseline = geometry.flip_y(line.y1) + cfg.descent * size;
    (baseline, size)
}

fn pdf_string(text: &str, out: &mut Vec<u8>) {
    out.push(b'(');
    for c in text.chars() {
        let b = win_ansi_encode(c).unwrap_or(b'?');
        match b {
            b'(' | b')' | b'\\' => {
                out.push(b'\\');
                out.push(b);
            }
            0x20..=0x7e => out.push(b),
            _ => out.extend_from_slice(format!("\\{b:03o}").as_bytes()),
        }
    }
    out.push(b')');
}

fn content_stream(lines: &[&LineBox], geometry: &PageGeometry) -> Vec<u8> {
    let mut out = Vec::new();
    for line in lines {
        let (baseline, size) = placement(line, geometry);
        out.extend_from_slice(format!("BT\n/F1 {size:.2} Tf\n").as_bytes());
        // Horizontal scaling only when the box is not the natural width.
        if let Some(natural) = text_width(&line.text, size).filter(|w| *w > 0.0) {
            let scale = (line.x1 - line.x0) / natural;
            if (scale - 1.0).abs() > 1e-6 {
                out.extend_from_slice(format!("{:.4} Tz\n", scale * 100.0).as_bytes());
            }
        }
        out.extend_from_slice(format!("1 0 0 1 {:.2} {:.2} Tm\n", line.x0, baseline).as_bytes());
        pdf_string(&line.text, &mut out);
        out.extend_from_slice(b" Tj\nET\n");
    }
    out
}

fn widths_array() -> String {
    let widths: Vec<String> = (32u16..=255)
        .map(|b| format!("{}", helvetica_width(b as u8)))
        .collect();
    format!("[{}]", widths.join(" "))
}

fn deflate(data: &[u8]) -> Vec<u8> {
    let mut enc = ZlibEncoder::new(Vec::new(), Compression::new(6));
    enc.write_all(data).expect("writing to memory");
    enc.finish().expect("writing to memory")
}

/// Serializes `doc` as a PDF: one Helvetica font with explicit widths and
/// WinAnsi encoding, one Flate-compressed content stream per page, one `Tj`
/// per line. Lines whose text is not WinAnsi-encodable get `?` substitutes.
pub fn emit_pdf(doc: &Document) -> Vec<u8> {
    let n_pages = doc.pages.len();
    // 1 catalog, 2 pages, 3 font, then (page, content) pairs.
    let mut objects: Vec<Vec<u8>> = Vec::with_capacity(3 + 2 * n_pages);
    objects.push(b"<< /Type /Catalog /Pages 2 0 R >>".to_vec());
    let kids: Vec<String> = (0..n_pages).map(|i| format!("{} 0 R", 4 + 2 * i)).collect();
    objects.push(
        format!(
            "<< /Type /Pages /Kids [{}] /Count {} >>",
            kids.join(" "),
            n_pages
        )
        .into_bytes(),
    );
    objects.push(
        format!(
            "<< /Type /Font /Subtype /Type1 /BaseFont /Helvetica /Encoding /WinAnsiEncoding \
             /FirstChar 32 /LastChar 255 /Widths {} >>",
            widths_array()
        )
        .into_bytes(),
    );
    for (i, page) in doc.pages.iter().enumerate() {
        let g = &page.geometry;
        objects.push(
            format!(
                "<< /Type /Page /Parent 2 0 R /MediaBox [0 0 {} {}] \
                 /Resources << /Font << /F1 3 0 R >> >> /Contents {} 0 R >>",
                g.width,
                g.height,
                5 + 2 * i
            )
            .into_bytes(),
        );
        let lines: Vec<&LineBox> = page.lines.iter().collect();
        let data = deflate(&content_stream(&lines, g));
        let mut stream = format!("<< /Length {} /Filter /FlateDecode >>\nstream\n", data.len())
            .into_bytes();
        stream.extend_from_slice(&data);
        stream.extend_from_slice(b"\nendstream");
        objects.push(stream);
    }

    let mut out = b"%PDF-1.4\n%\xe2\xe3\xcf\xd3\n".to_vec();
    let mut offsets = Vec::with_capacity(objects.len());
    for (i, body) in objects.iter().enumerate() {
        offsets.push(out.len());
        out.extend_from_slice(format!("{} 0 obj\n", i + 1).as_bytes());
        out.extend_from_slice(body);
        out.extend_from_slice(b"\nendobj\n");
    }
    let xref_at = out.len();
    out.extend_from_slice(format!("xref\n0 {}\n0000000000 65535 f \n", objects.len() + 1).as_bytes());
    for off in offsets {
        out.extend_from_slice(format!("{off:010} 00000 n \n").as_bytes());
    }
    out.extend_from_slice(
        format!(
            "trailer\n<< /Size {} /Root 1 0 R >>\nstartxref\n{}\n%%EOF\n",
            objects.len() + 1,
            xref_at
        )
        .as_bytes(),
    );
    out
}
