//! Content-stream interpretation: turns text-showing operators into glyph
//! runs positioned in user space (bottom-left origin).

use std::collections::HashMap;

use super::fonts::{win_ansi_decode, FontMetrics};
use super::lexer::{Lexer, Object};
use super::IngestError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Matrix {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl Matrix {
    pub const IDENTITY: Matrix = Matrix {
        a: 1.0,
        b: 0.0,
        c: 0.0,
        d: 1.0,
        e: 0.0,
        f: 0.0,
    };

    pub fn translate(tx: f64, ty: f64) -> Matrix {
        Matrix {
            e: tx,
            f: ty,
            ..Matrix::IDENTITY
        }
    }

    /// `self × other` in the row-vector convention used by PDF.
    pub fn then(&self, other: &Matrix) -> Matrix {
        Matrix {
            a: self.a * other.a + self.b * other.c,
            b: self.a * other.b + self.b * other.d,
            c: self.c * other.a + self.d * other.c,
            d: self.c * other.b + self.d * other.d,
            e: self.e * other.a + self.f * other.c + other.e,
            f: self.e * other.b + self.f * other.d + other.f,
        }
    }
}

/// Font as seen by the interpreter.
#[derive(Debug, Clone)]
pub struct LoadedFont {
    pub metrics: FontMetrics,
}

/// A contiguous string drawn in one text-showing step.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphRun {
    pub text: String,
    pub x0: f64,
    pub x1: f64,
    pub baseline: f64,
    pub size: f64,
}

#[derive(Clone)]
struct GraphicsState {
    ctm: Matrix,
}

struct TextState {
    tm: Matrix,
    tlm: Matrix,
    font: Option<String>,
    size: f64,
    char_spacing: f64,
    word_spacing: f64,
    horizontal_scale: f64,
    leading: f64,
    rise: f64,
}

impl Default for TextState {
    fn default() -> Self {
        TextState {
            tm: Matrix::IDENTITY,
            tlm: Matrix::IDENTITY,
            font: None,
            size: 0.0,
            char_spacing: 0.0,
            word_spacing: 0.0,
            horizontal_scale: 1.0,
            leading: 0.0,
            rise: 0.0,
        }
    }
}

/// Operators that draw nothing textual; accepted and ignored.
const IGNORED_OPERATORS: &[&str] = &[
    "w", "J", "j", "M", "d", "ri", "i", "gs", "m", "l", "c", "v", "y", "h", "re", "S", "s", "f",
    "F", "f*", "B", "B*", "b", "b*", "n", "W", "W*", "CS", "cs", "SC", "SCN", "sc", "scn", "G",
    "g", "RG", "rg", "K", "k", "sh", "BMC", "BDC", "EMC", "MP", "DP", "BX", "EX", "d0", "d1",
    "Tr",
];

fn malformed(msg: impl Into<String>) -> IngestError {
    IngestError::MalformedPdf(msg.into())
}

fn unsupported(msg: impl Into<String>) -> IngestError {
    IngestError::UnsupportedFeature(msg.into())
}

fn numbers<const N: usize>(op: &str, operands: &[Object]) -> Result<[f64; N], IngestError> {
    if operands.len() < N {
        return Err(malformed(format!("`{op}` expects {N} numeric operands")));
    }
    let tail = &operands[operands.len() - N..];
    let mut out = [0.0; N];
    for (slot, obj) in out.iter_mut().zip(tail) {
        *slot = obj
            .as_f64()
            .filter(|v| v.is_finite())
            .ok_or_else(|| malformed(format!("`{op}` operand is not a number")))?;
    }
    Ok(out)
}

pub struct Interpreter<'f> {
    fonts: &'f HashMap<String, LoadedFont>,
    graphics: GraphicsState,
    stack: Vec<GraphicsState>,
    text: TextState,
    in_text: bool,
    pub runs: Vec<GlyphRun>,
}

impl<'f> Interpreter<'f> {
    pub fn new(fonts: &'f HashMap<String, LoadedFont>) -> Self {
        Interpreter {
            fonts,
            graphics: GraphicsState {
                ctm: Matrix::IDENTITY,
            },
            stack: Vec::new(),
            text: TextState::default(),
            in_text: false,
            runs: Vec::new(),
        }
    }

    pub fn run(&mut self, content: &[u8]) -> Result<(), IngestError> {
        let mut lx = Lexer::new(content, 0);
        let mut operands: Vec<Object> = Vec::new();
        while !lx.at_end() {
            if lx.peek() == Some(b'{') || lx.peek() == Some(b'}') {
                return Err(malformed("PostScript braces in content stream"));
            }
            match lx.object(false, true)? {
                Object::Keyword(op) => {
                    self.apply(&op, &operands)?;
                    operands.clear();
                }
                other => {
                    if operands.len() > 4096 {
                        return Err(malformed("operand stack overflow"));
                    }
                    operands.push(other);
                }
            }
        }
        Ok(())
    }

    fn apply(&mut self, op: &str, operands: &[Object]) -> Result<(), IngestError> {
        match op {
            "q" => {
                if self.stack.len() > 256 {
                    return Err(malformed("graphics state stack overflow"));
                }
                self.stack.push(self.graphics.clone());
            }
            "Q" => {
                self.graphics = self
                    .stack
                    .pop()
                    .ok_or_else(|| malformed("`Q` without matching `q`"))?;
            }
            "cm" => {
                let [a, b, c, d, e, f] = numbers::<6>(op, operands)?;
                let m = Matrix { a, b, c, d, e, f };
                self.graphics.ctm = m.then(&self.graphics.ctm);
            }
            "BT" => {
                if self.in_text {
                    return Err(malformed("nested BT"));
                }
                self.in_text = true;
                self.text.tm = Matrix::IDENTITY;
                self.text.tlm = Matrix::IDENTITY;
            }
            "ET" => {
                if !self.in_text {
                    return Err(malformed("ET without BT"));
                }
                self.in_text = false;
            }
            "Tf" => {
                if operands.len() < 2 {
                    return Err(malformed("`Tf` expects a font name and size"));
                }
                let name = operands[operands.len() - 2]
                    .as_name()
                    .ok_or_else(|| malformed("`Tf` font operand is not a name"))?;
                if !self.fonts.contains_key(name) {
                    return Err(malformed(format!("font /{name} not in page resources")));
                }
                let [size] = numbers::<1>(op, operands)?;
                self.text.font = Some(name.to_string());
                self.text.size = size;
            }
            "Tc" => self.text.char_spacing = numbers::<1>(op, operands)?[0],
            "Tw" => self.text.word_spacing = numbers::<1>(op, operands)?[0],
            "Tz" => self.text.horizontal_scale = numbers::<1>(op, operands)?[0] / 100.0,
            "TL" => self.text.leading = numbers::<1>(op, operands)?[0],
            "Ts" => self.text.rise = numbers::<1>(op, operands)?[0],
            "Td" => {
                let [tx, ty] = numbers::<2>(op, operands)?;
                self.move_line(tx, ty)?;
            }
            "TD" => {
                let [tx, ty] = numbers::<2>(op, operands)?;
                self.text.leading = -ty;
                self.move_line(tx, ty)?;
            }
            "Tm" => {
                self.require_text(op)?;
                let [a, b, c, d, e, f] = numbers::<6>(op, operands)?;
                let m = Matrix { a, b, c, d, e, f };
                self.text.tm = m;
                self.text.tlm = m;
            }
            "T*" => self.move_line(0.0, -self.text.leading)?,
            "Tj" => {
                let s = string_operand(op, operands)?;
                self.show(s)?;
            }
            "'" => {
                let s = string_operand(op, operands)?;
                self.move_line(0.0, -self.text.leading)?;
                self.show(s)?;
            }
            "\"" => {
                if operands.len() < 3 {
                    return Err(malformed("`\"` expects three operands"));
                }
                let [aw, ac] = numbers::<2>(op, &operands[..operands.len() - 1])?;
                self.text.word_spacing = aw;
                self.text.char_spacing = ac;
                let s = string_operand(op, operands)?;
                self.move_line(0.0, -self.text.leading)?;
                self.show(s)?;
            }
            "TJ" => {
                let Some(Object::Array(items)) = operands.last() else {
                    return Err(malformed("`TJ` expects an array"));
                };
                for item in items {
                    match item {
                        Object::Str(s) => self.show(s)?,
                        Object::Int(_) | Object::Real(_) => {
                            let adjust = item.as_f64().unwrap();
                            let tx = -adjust / 1000.0 * self.text.size * self.text.horizontal_scale;
                            self.advance(tx);
                        }
                        _ => return Err(malformed("`TJ` array holds a non-string, non-number")),
                    }
                }
            }
            "Do" => return Err(unsupported("XObject painting (`Do`)")),
            "BI" | "ID" | "EI" => return Err(unsupported("inline image")),
            _ if IGNORED_OPERATORS.contains(&op) => {}
            _ => return Err(unsupported(format!("content operator `{op}`"))),
        }
        Ok(())
    }

    fn require_text(&self, op: &str) -> Result<(), IngestError> {
        if self.in_text {
            Ok(())
        } else {
            Err(malformed(format!("`{op}` outside BT/ET")))
        }
    }

    fn move_line(&mut self, tx: f64, ty: f64) -> Result<(), IngestError> {
        self.require_text("Td")?;
        self.text.tlm = Matrix::translate(tx, ty).then(&self.text.tlm);
        self.text.tm = self.text.tlm;
        Ok(())
    }

    fn advance(&mut self, tx: f64) {
        self.text.tm = Matrix::translate(tx, 0.0).then(&self.text.tm);
    }

    fn show(&mut self, bytes: &[u8]) -> Result<(), IngestError> {
        self.require_text("Tj")?;
        let name = self
            .text
            .font
            .as_ref()
            .ok_or_else(|| malformed("text shown before `Tf`"))?;
        let font = &self.fonts[name];
        let m = self.text.tm.then(&self.graphics.ctm);
        if m.b.abs() > 1e-9 || m.c.abs() > 1e-9 {
            return Err(unsupported("rotated or skewed text"));
        }
        if m.a <= 0.0 || m.d <= 0.0 {
            return Err(unsupported("mirrored text"));
        }
        let size = self.text.size * m.d;
        if size <= 0.0 || !size.is_finite() {
            return Err(unsupported("non-positive font size"));
        }
        let x0 = m.e;
        let baseline = m.f + self.text.rise * m.d;
        let mut text = String::with_capacity(bytes.len());
        let mut tx = 0.0;
        for &b in bytes {
            let w0 = font.metrics.width(b);
            let spacing = if b == b' ' { self.text.word_spacing } else { 0.0 };
            tx += (w0 / 1000.0 * self.text.size + self.text.char_spacing + spacing)
                * self.text.horizontal_scale;
            match win_ansi_decode(b) {
                Some(c) => text.push(c),
                None if b < 0x20 => {}
                None => text.push('\u{FFFD}'),
            }
        }
        self.advance(tx);
        if !x0.is_finite() || !baseline.is_finite() || !tx.is_finite() {
            return Err(malformed("non-finite text position"));
        }
        let x1 = x0 + tx * m.a;
        self.runs.push(GlyphRun {
            text,
            x0: x0.min(x1),
            x1: x0.max(x1),
            baseline,
            size,
        });
        Ok(())
    }
}

fn string_operand<'o>(op: &str, operands: &'o [Object]) -> Result<&'o [u8], IngestError> {
    match operands.last() {
        Some(Object::Str(s)) => Ok(s),
        _ => Err(malformed(format!("`{op}` expects a string operand"))),
    }
}
