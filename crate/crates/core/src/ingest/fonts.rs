//! WinAnsi encoding and standard-14 glyph widths.

/// Unicode code points for WinAnsi bytes 0x80..=0x9F; `None` marks holes.
const WIN_ANSI_HIGH: [Option<char>; 32] = [
    Some('\u{20AC}'), None, Some('\u{201A}'), Some('\u{0192}'),
    Some('\u{201E}'), Some('\u{2026}'), Some('\u{2020}'), Some('\u{2021}'),
    Some('\u{02C6}'), Some('\u{2030}'), Some('\u{0160}'), Some('\u{2039}'),
    Some('\u{0152}'), None, Some('\u{017D}'), None,
    None, Some('\u{2018}'), Some('\u{2019}'), Some('\u{201C}'),
    Some('\u{201D}'), Some('\u{2022}'), Some('\u{2013}'), Some('\u{2014}'),
    Some('\u{02DC}'), Some('\u{2122}'), Some('\u{0161}'), Some('\u{203A}'),
    Some('\u{0153}'), None, Some('\u{017E}'), Some('\u{0178}'),
];

pub fn win_ansi_decode(byte: u8) -> Option<char> {
    match byte {
        0x20..=0x7E => Some(byte as char),
        0x80..=0x9F => WIN_ANSI_HIGH[(byte - 0x80) as usize],
        0xA0..=0xFF => char::from_u32(byte as u32),
        _ => None,
    }
}

pub fn win_ansi_encode(c: char) -> Option<u8> {
    let code = c as u32;
    match code {
        0x20..=0x7E | 0xA0..=0xFF => Some(code as u8),
        _ => WIN_ANSI_HIGH
            .iter()
            .position(|&x| x == Some(c))
            .map(|i| 0x80 + i as u8),
    }
}

/// Helvetica advance widths (1/1000 em) for WinAnsi codes 32..=255.
#[rustfmt::skip]
pub const HELVETICA_WIDTHS: [u16; 224] = [
    // 32..=63
    278, 278, 355, 556, 556, 889, 667, 191, 333, 333, 389, 584, 278, 333, 278, 278,
    556, 556, 556, 556, 556, 556, 556, 556, 556, 556, 278, 278, 584, 584, 584, 556,
    // 64..=95
    1015, 667, 667, 722, 722, 667, 611, 778, 722, 278, 500, 667, 556, 833, 722, 778,
    667, 778, 722, 667, 611, 722, 667, 944, 667, 667, 611, 278, 278, 278, 469, 556,
    // 96..=127
    333, 556, 556, 500, 556, 556, 278, 556, 556, 222, 222, 500, 222, 833, 556, 556,
    556, 556, 333, 500, 278, 556, 500, 722, 500, 500, 500, 334, 260, 334, 584, 350,
    // 128..=159
    556, 350, 222, 556, 333, 1000, 556, 556, 333, 1000, 667, 333, 1000, 350, 611, 350,
    350, 222, 222, 333, 333, 350, 556, 1000, 333, 1000, 500, 333, 944, 350, 500, 667,
    // 160..=191
    278, 333, 556, 556, 556, 556, 260, 556, 333, 737, 370, 556, 584, 333, 737, 333,
    400, 584, 333, 333, 333, 556, 537, 278, 333, 333, 365, 556, 834, 834, 834, 611,
    // 192..=223
    667, 667, 667, 667, 667, 667, 1000, 722, 667, 667, 667, 667, 278, 278, 278, 278,
    722, 722, 778, 778, 778, 778, 778, 584, 778, 722, 722, 722, 722, 667, 667, 611,
    // 224..=255
    556, 556, 556, 556, 556, 556, 889, 500, 556, 556, 556, 556, 278, 278, 278, 278,
    556, 556, 556, 556, 556, 556, 556, 584, 611, 556, 556, 556, 556, 500, 556, 500,
];

pub fn helvetica_width(byte: u8) -> f64 {
    if byte < 32 {
        0.0
    } else {
        HELVETICA_WIDTHS[(byte - 32) as usize] as f64
    }
}

/// Width table of a simple font, indexed by byte code.
#[derive(Debug, Clone)]
pub struct FontMetrics {
    widths: [f64; 256],
}

impl FontMetrics {
    pub fn helvetica() -> Self {
        let mut widths = [0.0; 256];
        for (b, w) in widths.iter_mut().enumerate() {
            *w = helvetica_width(b as u8);
        }
        FontMetrics { widths }
    }

    pub fn monospace(width: f64) -> Self {
        FontMetrics {
            widths: [width; 256],
        }
    }

    pub fn from_widths(first_char: usize, widths: &[f64], missing: f64) -> Self {
        let mut table = [missing; 256];
        for (i, w) in widths.iter().enumerate() {
            if let Some(slot) = table.get_mut(first_char + i) {
                *slot = *w;
            }
        }
        FontMetrics { widths: table }
    }

    /// Metrics for a standard-14 base font name, if it is one we model.
    /// Serif and bold faces reuse Helvetica widths.
    pub fn standard(base_font: &str) -> Option<Self> {
        let name = base_font.split('+').last().unwrap_or(base_font);
        if name.starts_with("Courier") {
            Some(Self::monospace(600.0))
        } else if name.starts_with("Helvetica")
            || name.starts_with("Arial")
            || name.starts_with("Times")
        {
            Some(Self::helvetica())
        } else {
            None
        }
    }

    pub fn width(&self, byte: u8) -> f64 {
        self.widths[byte as usize]
    }
}

/// Advance of `text` in points at `size`, or `None` if a character is not
/// WinAnsi-encodable.
pub fn text_width(text: &str, size: f64) -> Option<f64> {
    let mut total = 0.0;
    for c in text.chars() {
        total += helvetica_width(win_ansi_encode(c)?);
    }
    Some(total * size / 1000.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn win_ansi_round_trip() {
        for b in 0u8..=255 {
            if let Some(c) = win_ansi_decode(b) {
                assert_eq!(win_ansi_encode(c), Some(b));
            }
        }
        assert_eq!(win_ansi_encode('é'), Some(0xE9));
        assert_eq!(win_ansi_encode('œ'), Some(0x9C));
        assert_eq!(win_ansi_encode('€'), Some(0x80));
        assert_eq!(win_ansi_encode('ł'), None);
    }

    #[test]
    fn hello_width() {
        // H e l l o = 722 + 556 + 222 + 222 + 556
        let w = text_width("Hello", 12.0).unwrap();
        assert!((w - 2278.0 * 12.0 / 1000.0).abs() < 1e-12);
    }
}
