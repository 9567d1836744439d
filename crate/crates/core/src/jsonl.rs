//! JSONL line-record interchange.
//!
//! One JSON object per line. A document is introduced by its page records,
//! each page record preceding the line records that reference it:
//!
//! ```text
//! {"type":"page","doc_id":"d1","page":0,"width":595.0,"height":842.0}
//! {"type":"line","doc_id":"d1","page":0,"x0":57.0,"y0":120.5,"x1":210.25,"y1":132.5,"text":"Motif","label":"body"}
//! ```
//!
//! Unknown keys are ignored on read. Serialization uses a fixed key order and
//! shortest round-trip float formatting, so `write(read(write(doc)))` is
//! byte-identical to `write(doc)`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::document::{Document, LineBox, LineLabel, Page, PageGeometry};

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("line {line}: field `{field}`: {message}")]
    Field {
        line: usize,
        field: String,
        message: String,
    },
    #[error("line {line}: invalid JSON: {message}")]
    Json { line: usize, message: String },
    #[error("{0}")]
    Structure(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Serialize)]
struct PageRecord<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    doc_id: &'a str,
    page: usize,
    width: f64,
    height: f64,
}

#[derive(Serialize)]
struct LineRecord<'a> {
    #[serde(rename = "type")]
    kind: &'static str,
    doc_id: &'a str,
    page: usize,
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    text: &'a str,
    label: Option<LineLabel>,
}

/// Serializes one document; pages are written before their lines.
pub fn write_document<W: Write>(doc: &Document, out: &mut W) -> std::io::Result<()> {
    for (index, page) in doc.pages.iter().enumerate() {
        let record = PageRecord {
            kind: "page",
            doc_id: &doc.doc_id,
            page: index,
            width: page.geometry.width,
            height: page.geometry.height,
        };
        serde_json::to_writer(&mut *out, &record)?;
        out.write_all(b"\n")?;
        for line in &page.lines {
            let record = LineRecord {
                kind: "line",
                doc_id: &doc.doc_id,
                page: line.page,
                x0: line.x0,
                y0: line.y0,
                x1: line.x1,
                y1: line.y1,
                text: &line.text,
                label: line.label,
            };
            serde_json::to_writer(&mut *out, &record)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

pub fn write_documents<W: Write>(docs: &[Document], out: &mut W) -> std::io::Result<()> {
    docs.iter().try_for_each(|d| write_document(d, out))
}

pub fn to_string(doc: &Document) -> String {
    let mut buf = Vec::new();
    write_document(doc, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

pub fn write_jsonl(doc: &Document, path: impl AsRef<Path>) -> Result<(), SchemaError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_document(doc, &mut out)?;
    out.flush()?;
    Ok(())
}

/// Reads a file that must hold exactly one document.
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Document, SchemaError> {
    let mut docs = read_corpus(path)?;
    match docs.len() {
        1 => Ok(docs.pop().unwrap()),
        n => Err(SchemaError::Structure(format!(
            "expected exactly one document, found {n}"
        ))),
    }
}

pub fn read_corpus(path: impl AsRef<Path>) -> Result<Vec<Document>, SchemaError> {
    read_documents(BufReader::new(File::open(path)?))
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str, line: usize) -> Result<&'a Value, SchemaError> {
    obj.get(name).ok_or_else(|| SchemaError::Field {
        line,
        field: name.to_string(),
        message: "missing".into(),
    })
}

fn str_field<'a>(obj: &'a Map<String, Value>, name: &str, line: usize) -> Result<&'a str, SchemaError> {
    field(obj, name, line)?
        .as_str()
        .ok_or_else(|| bad(line, name, "expected a string"))
}

fn num_field(obj: &Map<String, Value>, name: &str, line: usize) -> Result<f64, SchemaError> {
    field(obj, name, line)?
        .as_f64()
        .filter(|v| v.is_finite())
        .ok_or_else(|| bad(line, name, "expected a finite number"))
}

fn index_field(obj: &Map<String, Value>, name: &str, line: usize) -> Result<usize, SchemaError> {
    field(obj, name, line)?
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| bad(line, name, "expected a non-negative integer"))
}

fn bad(line: usize, field: &str, message: impl Into<String>) -> SchemaError {
    SchemaError::Field {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

/// Parses any number of documents. Records of one document must be
/// contiguous; a document must start with its first page record.
pub fn read_documents<R: BufRead>(reader: R) -> Result<Vec<Document>, SchemaError> {
    let mut docs: Vec<Document> = Vec::new();
    for (index, raw) in reader.lines().enumerate() {
        let lineno = index + 1;
        let raw = raw?;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&raw).map_err(|e| SchemaError::Json {
            line: lineno,
            message: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| SchemaError::Json {
            line: lineno,
            message: "record is not a JSON object".into(),
        })?;
        let kind = str_field(obj, "type", lineno)?;
        let doc_id = str_field(obj, "doc_id", lineno)?;
        let page = index_field(obj, "page", lineno)?;
        let starts_new = docs.last().map_or(true, |d| d.doc_id != doc_id);
        match kind {
            "page" => {
                let width = num_field(obj, "width", lineno)?;
                let height = num_field(obj, "height", lineno)?;
                let geometry = PageGeometry::new(width, height)
                    .ok_or_else(|| bad(lineno, "width", "page dimensions must be positive"))?;
                if starts_new {
                    if docs.iter().any(|d| d.doc_id == doc_id) {
                        return Err(bad(lineno, "doc_id", "records of a document must be contiguous"));
                    }
                    docs.push(Document::new(doc_id));
                }
                let doc = docs.last_mut().unwrap();
                if page != doc.pages.len() {
                    return Err(bad(
                        lineno,
                        "page",
                        format!("expected page {} next", doc.pages.len()),
                    ));
                }
                doc.pages.push(Page {
                    geometry,
                    lines: Vec::new(),
                });
            }
            "line" => {
                if starts_new {
                    return Err(bad(lineno, "doc_id", "line record before any page record"));
                }
                let doc = docs.last_mut().unwrap();
                let Some(target) = doc.pages.get_mut(page) else {
                    return Err(bad(lineno, "page", "references a page not yet declared"));
                };
                let label = match field(obj, "label", lineno) {
                    Ok(Value::Null) | Err(_) => None,
                    Ok(Value::String(s)) => Some(
                        s.parse::<LineLabel>()
                            .map_err(|e| bad(lineno, "label", e.to_string()))?,
                    ),
                    Ok(_) => return Err(bad(lineno, "label", "expected a string or null")),
                };
                let line = LineBox {
                    page,
                    x0: num_field(obj, "x0", lineno)?,
                    y0: num_field(obj, "y0", lineno)?,
                    x1: num_field(obj, "x1", lineno)?,
                    y1: num_field(obj, "y1", lineno)?,
                    text: str_field(obj, "text", lineno)?.to_string(),
                    label,
                };
                line.validate(&target.geometry)
                    .map_err(|e| bad(lineno, if e.contains("text") { "text" } else { "x0" }, e))?;
                target.lines.push(line);
            }
            other => return Err(bad(lineno, "type", format!("unknown record type `{other}`"))),
        }
    }
    if docs.is_empty() {
        return Err(SchemaError::Structure(
            "no page record: a document needs at least one page".into(),
        ));
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Vec<Document>, SchemaError> {
        read_documents(text.as_bytes())
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(parse(""), Err(SchemaError::Structure(_))));
    }

    #[test]
    fn one_page_one_line() {
        let text = concat!(
            r#"{"type":"page","doc_id":"a","page":0,"width":100,"height":200}"#,
            "\n",
            r#"{"type":"line","doc_id":"a","page":0,"x0":1,"y0":2,"x1":30,"y1":12,"text":"Motif","label":"body","extra":1}"#,
            "\n"
        );
        let docs = parse(text).unwrap();
        assert_eq!(docs.len(), 1);
        assert_eq!(docs[0].pages.len(), 1);
        assert_eq!(docs[0].line_count(), 1);
        assert_eq!(docs[0].pages[0].lines[0].label, Some(LineLabel::Body));
    }

    #[test]
    fn errors_name_line_and_field() {
        let text = concat!(
            r#"{"type":"page","doc_id":"a","page":0,"width":100,"height":200}"#,
            "\n",
            r#"{"type":"line","doc_id":"a","page":0,"x0":1,"y0":2,"x1":30,"y1":12,"text":"x","label":"bodie"}"#,
        );
        match parse(text) {
            Err(SchemaError::Field { line, field, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "label");
            }
            other => panic!("unexpected {other:?}"),
        }
        let orphan = r#"{"type":"line","doc_id":"a","page":0,"x0":1,"y0":2,"x1":30,"y1":12,"text":"x","label":null}"#;
        assert!(matches!(parse(orphan), Err(SchemaError::Field { line: 1, .. })));
        let missing = r#"{"type":"page","doc_id":"a","page":0,"width":100}"#;
        match parse(missing) {
            Err(SchemaError::Field { field, .. }) => assert_eq!(field, "height"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn serialization_is_stable() {
        let text = concat!(
            r#"{"type":"page","doc_id":"a","page":0,"width":595.0,"height":842.0}"#,
            "\n",
            r#"{"type":"line","doc_id":"a","page":0,"x0":57.123456789,"y0":2.5,"x1":80.1,"y1":12.0,"text":"Antécédents \"x\"","label":null}"#,
            "\n"
        );
        let docs = parse(text).unwrap();
        let once = to_string(&docs[0]);
        assert_eq!(once, text);
        let again = to_string(&parse(&once).unwrap()[0]);
        assert_eq!(once, again);
    }
}
