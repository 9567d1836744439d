//! Tokenizer and object parser shared by file structure and content streams.

use std::collections::BTreeMap;

use super::IngestError;

const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub enum Object {
    Null,
    Bool(bool),
    Int(i64),
    Real(f64),
    Name(String),
    Str(Vec<u8>),
    Array(Vec<Object>),
    Dict(Dict),
    Ref(u32, u16),
    Stream(Dict, Vec<u8>),
    /// Bare keyword; only produced in content streams (operators).
    Keyword(String),
}

pub type Dict = BTreeMap<String, Object>;

impl Object {
    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Object::Int(i) => Some(i as f64),
            Object::Real(r) => Some(r),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match *self {
            Object::Int(i) => Some(i),
            _ => None,
        }
    }

    pub fn as_name(&self) -> Option<&str> {
        match self {
            Object::Name(n) => Some(n),
            _ => None,
        }
    }

    pub fn as_dict(&self) -> Option<&Dict> {
        match self {
            Object::Dict(d) | Object::Stream(d, _) => Some(d),
            _ => None,
        }
    }

    pub fn as_array(&self) -> Option<&[Object]> {
        match self {
            Object::Array(a) => Some(a),
            _ => None,
        }
    }
}

pub fn is_whitespace(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\r' | b'\n' | 0x0C | 0x00)
}

pub fn is_delimiter(b: u8) -> bool {
    matches!(b, b'(' | b')' | b'<' | b'>' | b'[' | b']' | b'{' | b'}' | b'/' | b'%')
}

pub struct Lexer<'a> {
    pub data: &'a [u8],
    pub pos: usize,
}

fn malformed(msg: impl Into<String>) -> IngestError {
    IngestError::MalformedPdf(msg.into())
}

impl<'a> Lexer<'a> {
    pub fn new(data: &'a [u8], pos: usize) -> Self {
        Lexer { data, pos }
    }

    pub fn peek(&self) -> Option<u8> {
        self.data.get(self.pos).copied()
    }

    pub fn skip_ws(&mut self) {
        while let Some(b) = self.peek() {
            if is_whitespace(b) {
                self.pos += 1;
            } else if b == b'%' {
                while let Some(b) = self.peek() {
                    if b == b'\r' || b == b'\n' {
                        break;
                    }
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    pub fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.data.len()
    }

    /// Reads a regular-character run (keyword or number) without consuming
    /// anything else.
    pub fn regular_word(&mut self) -> &'a [u8] {
        let start = self.pos;
        while let Some(b) = self.peek() {
            if is_whitespace(b) || is_delimiter(b) {
                break;
            }
            self.pos += 1;
        }
        &self.data[start..self.pos]
    }

    pub fn expect_keyword(&mut self, keyword: &str) -> Result<(), IngestError> {
        self.skip_ws();
        let at = self.pos;
        let word = self.regular_word();
        if word == keyword.as_bytes() {
            Ok(())
        } else {
            Err(malformed(format!(
                "expected `{keyword}` at byte {at}, found `{}`",
                String::from_utf8_lossy(word)
            )))
        }
    }

    /// Parses one object. With `allow_refs`, `n g R` sequences become
    /// references; keywords other than true/false/null are errors unless
    /// `allow_keywords` is set.
    pub fn object(&mut self, allow_refs: bool, allow_keywords: bool) -> Result<Object, IngestError> {
        self.object_at_depth(allow_refs, allow_keywords, 0)
    }

    fn object_at_depth(
        &mut self,
        allow_refs: bool,
        allow_keywords: bool,
        depth: usize,
    ) -> Result<Object, IngestError> {
        if depth > MAX_DEPTH {
            return Err(malformed("objects nested too deeply"));
        }
        self.skip_ws();
        let Some(b) = self.peek() else {
            return Err(malformed("unexpected end of data"));
        };
        match b {
            b'/' => {
                self.pos += 1;
                Ok(Object::Name(self.name()?))
            }
            b'(' => {
                self.pos += 1;
                Ok(Object::Str(self.literal_string()?))
            }
            b'<' => {
                if self.data.get(self.pos + 1) == Some(&b'<') {
                    self.pos += 2;
                    let mut dict = Dict::new();
                    loop {
                        self.skip_ws();
                        match self.peek() {
                            Some(b'>') => {
                                if self.data.get(self.pos + 1) == Some(&b'>') {
                                    self.pos += 2;
                                    break;
                                }
                                return Err(malformed("stray `>` in dictionary"));
                            }
                            Some(b'/') => {
                                self.pos += 1;
                                let key = self.name()?;
                                let value =
                                    self.object_at_depth(allow_refs, false, depth + 1)?;
                                dict.insert(key, value);
                            }
                            Some(_) => return Err(malformed("dictionary key is not a name")),
                            None => return Err(malformed("unterminated dictionary")),
                        }
                    }
                    Ok(Object::Dict(dict))
                } else {
                    self.pos += 1;
                    Ok(Object::Str(self.hex_string()?))
                }
            }
            b'[' => {
                self.pos += 1;
                let mut items = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(b']') => {
                            self.pos += 1;
                            break;
                        }
                        Some(_) => items.push(self.object_at_depth(allow_refs, false, depth + 1)?),
                        None => return Err(malformed("unterminated array")),
                    }
                }
                Ok(Object::Array(items))
            }
            b')' | b'>' | b']' | b'{' | b'}' => {
                Err(malformed(format!("unexpected `{}` at byte {}", b as char, self.pos)))
            }
            _ => {
                let start = self.pos;
                let word = self.regular_word();
                if word.is_empty() {
                    return Err(malformed(format!("unexpected byte at {start}")));
                }
                if let Some(number) = parse_number(word) {
                    if allow_refs {
                        if let Object::Int(num) = number {
                            if let Some(reference) = self.try_reference(num) {
                                return Ok(reference);
                            }
                        }
                    }
                    return Ok(number);
                }
                match word {
                    b"true" => Ok(Object::Bool(true)),
                    b"false" => Ok(Object::Bool(false)),
                    b"null" => Ok(Object::Null),
                    _ if allow_keywords => {
                        Ok(Object::Keyword(String::from_utf8_lossy(word).into_owned()))
                    }
                    _ => Err(malformed(format!(
                        "unexpected keyword `{}` at byte {start}",
                        String::from_utf8_lossy(word)
                    ))),
                }
            }
        }
    }

    fn try_reference(&mut self, num: i64) -> Option<Object> {
        let save = self.pos;
        self.skip_ws();
        let gen = self.regular_word();
        let gen = match parse_number(gen) {
            Some(Object::Int(g)) if (0..=65535).contains(&g) => g as u16,
            _ => {
                self.pos = save;
                return None;
            }
        };
        self.skip_ws();
        if self.peek() == Some(b'R') {
            let next = self.data.get(self.pos + 1).copied();
            if next.map_or(true, |b| is_whitespace(b) || is_delimiter(b)) {
                self.pos += 1;
                if let Ok(n) = u32::try_from(num) {
                    return Some(Object::Ref(n, gen));
                }
            }
        }
        self.pos = save;
        None
    }

    fn name(&mut self) -> Result<String, IngestError> {
        let raw = self.regular_word();
        let mut out = Vec::with_capacity(raw.len());
        let mut i = 0;
        while i < raw.len() {
            if raw[i] == b'#' && i + 2 < raw.len() {
                let hex = std::str::from_utf8(&raw[i + 1..i + 3]).ok();
                match hex.and_then(|h| u8::from_str_radix(h, 16).ok()) {
                    Some(v) => {
                        out.push(v);
                        i += 3;
                        continue;
                    }
                    None => return Err(malformed("bad #xx escape in name")),
                }
            }
            out.push(raw[i]);
            i += 1;
        }
        Ok(String::from_utf8_lossy(&out).into_owned())
    }

    fn literal_string(&mut self) -> Result<Vec<u8>, IngestError> {
        let mut out = Vec::new();
        let mut nesting = 0usize;
        loop {
            let Some(b) = self.peek() else {
                return Err(malformed("unterminated string"));
            };
            self.pos += 1;
            match b {
                b'(' => {
                    nesting += 1;
                    out.push(b);
                }
                b')' => {
                    if nesting == 0 {
                        return Ok(out);
                    }
                    nesting -= 1;
                    out.push(b);
                }
                b'\\' => {
                    let Some(e) = self.peek() else {
                        return Err(malformed("unterminated string escape"));
                    };
                    self.pos += 1;
                    match e {
                        b'n' => out.push(b'\n'),
                        b'r' => out.push(b'\r'),
                        b't' => out.push(b'\t'),
                        b'b' => out.push(0x08),
                        b'f' => out.push(0x0C),
                        b'0'..=b'7' => {
                            let mut value = (e - b'0') as u32;
                            for _ in 0..2 {
                                match self.peek() {
                                    Some(d @ b'0'..=b'7') => {
                                        value = value * 8 + (d - b'0') as u32;
                                        self.pos += 1;
                                    }
                                    _ => break,
                                }
                            }
                            out.push((value & 0xFF) as u8);
                        }
                        b'\r' => {
                            if self.peek() == Some(b'\n') {
                                self.pos += 1;
                            }
                        }
                        b'\n' => {}
                        other => out.push(other),
                    }
                }
                b'\r' => {
                    // end-of-line in a string reads as a single LF
                    if self.peek() == Some(b'\n') {
                        self.pos += 1;
                    }
                    out.push(b'\n');
                }
                other => out.push(other),
            }
        }
    }

    fn hex_string(&mut self) -> Result<Vec<u8>, IngestError> {
        let mut digits = Vec::new();
        loop {
            let Some(b) = self.peek() else {
                return Err(malformed("unterminated hex string"));
            };
            self.pos += 1;
            match b {
                b'>' => break,
                b if is_whitespace(b) => {}
                b if b.is_ascii_hexdigit() => digits.push(b),
                _ => return Err(malformed("invalid character in hex string")),
            }
        }
        if digits.len() % 2 == 1 {
            digits.push(b'0');
        }
        Ok(digits
            .chunks(2)
            .map(|pair| {
                let s = std::str::from_utf8(pair).unwrap();
                u8::from_str_radix(s, 16).unwrap()
            })
            .collect())
    }
}

pub fn parse_number(word: &[u8]) -> Option<Object> {
    let s = std::str::from_utf8(word).ok()?;
    let first = *word.first()?;
    if !(first.is_ascii_digit() || matches!(first, b'+' | b'-' | b'.')) {
        return None;
    }
    if s.contains('.') {
        // PDF reals never carry exponents; "-.5" and "5." are valid
        let body = s.trim_start_matches(['+', '-']);
        if body.is_empty() || !body.bytes().all(|b| b.is_ascii_digit() || b == b'.') {
            return None;
        }
        if body.bytes().filter(|&b| b == b'.').count() > 1 || body == "." {
            return None;
        }
        let normalized = if s.ends_with('.') { format!("{s}0") } else { s.to_string() };
        normalized.parse::<f64>().ok().map(Object::Real)
    } else {
        s.parse::<i64>().ok().map(Object::Int)
    }
}
