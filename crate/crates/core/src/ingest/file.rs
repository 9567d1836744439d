//! File structure: header, cross-reference table, trailer, indirect objects,
//! and stream decoding.

use std::collections::HashMap;
use std::io::Read;

use flate2::read::ZlibDecoder;

use super::lexer::{Dict, Lexer, Object};
use super::IngestError;

/// Decoded streams larger than this are rejected.
const MAX_DECODED_STREAM: u64 = 64 << 20;
const MAX_REF_CHAIN: usize = 32;

pub struct PdfFile<'a> {
    data: &'a [u8],
    offsets: HashMap<u32, usize>,
    pub trailer: Dict,
}

fn malformed(msg: impl Into<String>) -> IngestError {
    IngestError::MalformedPdf(msg.into())
}

fn unsupported(msg: impl Into<String>) -> IngestError {
    IngestError::UnsupportedFeature(msg.into())
}

fn find_last(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    if needle.len() > haystack.len() {
        return None;
    }
    (0..=haystack.len() - needle.len())
        .rev()
        .find(|&i| &haystack[i..i + needle.len()] == needle)
}

impl<'a> PdfFile<'a> {
    pub fn open(data: &'a [u8]) -> Result<Self, IngestError> {
        let head = &data[..data.len().min(1024)];
        if !head.windows(5).any(|w| w == b"%PDF-") {
            return Err(malformed("missing %PDF- header"));
        }
        let tail_start = data.len().saturating_sub(2048);
        let sx = find_last(&data[tail_start..], b"startxref")
            .map(|i| tail_start + i)
            .ok_or_else(|| malformed("missing startxref"))?;
        let mut lx = Lexer::new(data, sx + "startxref".len());
        let start = match lx.object(false, false)? {
            Object::Int(v) if v >= 0 && (v as usize) < data.len() => v as usize,
            _ => return Err(malformed("startxref offset out of range")),
        };

        let mut file = PdfFile {
            data,
            offsets: HashMap::new(),
            trailer: Dict::new(),
        };
        let mut next = Some(start);
        let mut visited = Vec::new();
        let mut first_trailer = None;
        while let Some(offset) = next {
            if visited.contains(&offset) || visited.len() > 64 {
                return Err(malformed("cyclic /Prev chain in cross-reference"));
            }
            visited.push(offset);
            let trailer = file.read_xref_section(offset)?;
            next = match trailer.get("Prev") {
                Some(Object::Int(p)) if *p >= 0 && (*p as usize) < data.len() => Some(*p as usize),
                Some(_) => return Err(malformed("invalid /Prev offset")),
                None => None,
            };
            if first_trailer.is_none() {
                first_trailer = Some(trailer);
            }
        }
        file.trailer = first_trailer.unwrap_or_default();
        if file.trailer.contains_key("Encrypt") {
            return Err(unsupported("encrypted document (/Encrypt in trailer)"));
        }
        if !file.trailer.contains_key("Root") {
            return Err(malformed("trailer lacks /Root"));
        }
        Ok(file)
    }

    fn read_xref_section(&mut self, offset: usize) -> Result<Dict, IngestError> {
        let mut lx = Lexer::new(self.data, offset);
        lx.skip_ws();
        let word = lx.regular_word();
        if word != b"xref" {
            if word.first().is_some_and(|b| b.is_ascii_digit()) {
                return Err(unsupported("cross-reference streams"));
            }
            return Err(malformed(format!("no xref table at offset {offset}")));
        }
        loop {
            lx.skip_ws();
            let save = lx.pos;
            let word = lx.regular_word();
            if word == b"trailer" {
                break;
            }
            lx.pos = save;
            let first = lx.object(false, false)?.as_i64();
            let count = lx.object(false, false)?.as_i64();
            let (Some(first), Some(count)) = (first, count) else {
                return Err(malformed("bad xref subsection header"));
            };
            if first < 0 || count < 0 || count as usize > self.data.len() / 18 + 1 {
                return Err(malformed("xref subsection out of range"));
            }
            for i in 0..count {
                let off = lx.object(false, false)?.as_i64();
                let _gen = lx.object(false, false)?.as_i64();
                lx.skip_ws();
                let kind = lx.regular_word();
                let Some(off) = off else {
                    return Err(malformed("bad xref entry"));
                };
                let num = u32::try_from(first + i).map_err(|_| malformed("object number overflow"))?;
                match kind {
                    b"n" => {
                        if off < 0 || off as usize >= self.data.len() {
                            return Err(malformed(format!("object {num} offset out of range")));
                        }
                        self.offsets.entry(num).or_insert(off as usize);
                    }
                    b"f" => {}
                    _ => return Err(malformed("xref entry type must be n or f")),
                }
            }
        }
        match lx.object(true, false)? {
            Object::Dict(d) => Ok(d),
            _ => Err(malformed("trailer is not a dictionary")),
        }
    }

    /// Loads indirect object `num`. Undefined objects read as null.
    pub fn get(&self, num: u32) -> Result<Object, IngestError> {
        self.get_with_depth(num, 0)
    }

    fn get_with_depth(&self, num: u32, depth: usize) -> Result<Object, IngestError> {
        if depth > MAX_REF_CHAIN {
            return Err(malformed("reference chain too long"));
        }
        let Some(&offset) = self.offsets.get(&num) else {
            return Ok(Object::Null);
        };
        let mut lx = Lexer::new(self.data, offset);
        let header_num = lx.object(false, false)?.as_i64();
        let _gen = lx.object(false, false)?;
        if header_num != Some(num as i64) {
            return Err(malformed(format!("xref points to wrong object for {num}")));
        }
        lx.expect_keyword("obj")?;
        let obj = lx.object(true, false)?;
        lx.skip_ws();
        let save = lx.pos;
        let word = lx.regular_word();
        if word == b"stream" {
            let Object::Dict(dict) = obj else {
                return Err(malformed(format!("stream of object {num} lacks a dictionary")));
            };
            // stream keyword is followed by CRLF or LF
            match (lx.peek(), self.data.get(lx.pos + 1)) {
                (Some(b'\r'), Some(b'\n')) => lx.pos += 2,
                (Some(b'\n'), _) => lx.pos += 1,
                _ => return Err(malformed(format!("object {num}: bad EOL after `stream`"))),
            }
            let length = match dict.get("Length") {
                Some(Object::Int(n)) => *n,
                Some(Object::Ref(r, _)) => self
                    .get_with_depth(*r, depth + 1)?
                    .as_i64()
                    .ok_or_else(|| malformed("indirect /Length is not an integer"))?,
                _ => return Err(malformed(format!("object {num}: stream without /Length"))),
            };
            let start = lx.pos;
            let end = usize::try_from(length)
                .ok()
                .and_then(|l| start.checked_add(l))
                .filter(|&e| e <= self.data.len())
                .ok_or_else(|| malformed(format!("object {num}: /Length exceeds file")))?;
            let body = self.data[start..end].to_vec();
            lx.pos = end;
            lx.expect_keyword("endstream")
                .map_err(|_| malformed(format!("object {num}: /Length does not end at endstream")))?;
            lx.expect_keyword("endobj")?;
            return Ok(Object::Stream(dict, body));
        }
        lx.pos = save;
        lx.expect_keyword("endobj")?;
        Ok(obj)
    }

    /// Follows references until a direct object is reached.
    pub fn resolve(&self, obj: &Object) -> Result<Object, IngestError> {
        let mut current = obj.clone();
        for _ in 0..MAX_REF_CHAIN {
            match current {
                Object::Ref(num, _) => current = self.get(num)?,
                other => return Ok(other),
            }
        }
        Err(malformed("reference chain too long"))
    }

    pub fn resolve_dict(&self, obj: &Object, what: &str) -> Result<Dict, IngestError> {
        match self.resolve(obj)? {
            Object::Dict(d) => Ok(d),
            Object::Stream(d, _) => Ok(d),
            _ => Err(malformed(format!("{what} is not a dictionary"))),
        }
    }

    /// Decoded content of a stream object.
    pub fn stream_data(&self, obj: &Object) -> Result<Vec<u8>, IngestError> {
        let Object::Stream(dict, raw) = self.resolve(obj)? else {
            return Err(malformed("expected a stream"));
        };
        let filters: Vec<String> = match dict.get("Filter").map(|f| self.resolve(f)).transpose()? {
            None | Some(Object::Null) => Vec::new(),
            Some(Object::Name(n)) => vec![n],
            Some(Object::Array(items)) => items
                .iter()
                .map(|i| i.as_name().map(str::to_string))
                .collect::<Option<_>>()
                .ok_or_else(|| malformed("/Filter array holds a non-name"))?,
            Some(_) => return Err(malformed("/Filter must be a name or array")),
        };
        if let Some(parms) = dict.get("DecodeParms") {
            let parms = self.resolve(parms)?;
            let has_predictor = |d: &Object| {
                d.as_dict()
                    .and_then(|d| d.get("Predictor"))
                    .and_then(Object::as_i64)
                    .is_some_and(|p| p > 1)
            };
            let any = match &parms {
                Object::Array(a) => a.iter().any(has_predictor),
                other => has_predictor(other),
            };
            if any {
                return Err(unsupported("stream predictor in /DecodeParms"));
            }
        }
        let mut data = raw;
        for filter in filters {
            match filter.as_str() {
                "FlateDecode" | "Fl" => {
                    let mut out = Vec::new();
                    ZlibDecoder::new(&data[..])
                        .take(MAX_DECODED_STREAM + 1)
                        .read_to_end(&mut out)
                        .map_err(|e| malformed(format!("corrupt Flate stream: {e}")))?;
                    if out.len() as u64 > MAX_DECODED_STREAM {
                        return Err(malformed("decoded stream too large"));
                    }
                    data = out;
                }
                other => return Err(unsupported(format!("stream filter /{other}"))),
            }
        }
        Ok(data)
    }
}
