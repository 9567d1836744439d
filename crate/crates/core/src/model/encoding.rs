//! Sinusoidal encodings of layout features and relative offsets.

use crate::document::{LineBox, PageGeometry};

/// Writes the sinusoidal encoding of `value` into `out` (even length).
/// Component `2i` is `sin(value*scale / 10000^(2i/dim))`, `2i+1` the cosine.
pub fn sinusoidal_encode_into(value: f64, scale: f64, out: &mut [f64]) {
    let dim = out.len();
    assert!(dim % 2 == 0, "sinusoidal dim must be even, got {dim}");
    for i in 0..dim / 2 {
        let angle = value * scale / 10000f64.powf(2.0 * i as f64 / dim as f64);
        out[2 * i] = angle.sin();
        out[2 * i + 1] = angle.cos();
    }
}

pub fn sinusoidal_encode(value: f64, scale: f64, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    sinusoidal_encode_into(value, scale, &mut out);
    out
}

/// Page-normalized box geometry of one line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayoutFeatures {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub width: f64,
    pub height: f64,
}

impl LayoutFeatures {
    pub fn new(line: &LineBox, page: &PageGeometry) -> Self {
        let (w, h) = (page.width, page.height);
        LayoutFeatures {
            x0: line.x0 / w,
            x1: line.x1 / w,
            y0: line.y0 / h,
            y1: line.y1 / h,
            width: line.width() / w,
            height: line.height() / h,
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.x0, self.x1, self.y0, self.y1, self.width, self.height]
    }
}

/// Concatenated encodings of the six features, `d / 6` dims each.
pub fn layout_embedding(f: &LayoutFeatures, d: usize, scale: f64) -> Vec<f64> {
    let block = d / 6;
    let mut out = vec![0.0; d];
    for (k, v) in f.as_array().into_iter().enumerate() {
        sinusoidal_encode_into(v, scale, &mut out[k * block..(k + 1) * block]);
    }
    out
}

/// Pairwise center offsets, row-major: `dx[u * n + v] = cx[v] - cx[u]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeOffsets {
    pub n: usize,
    pub dx: Vec<f64>,
    pub dy: Vec<f64>,
}

pub fn relative_offsets(centers: &[(f64, f64)]) -> RelativeOffsets {
    let n = centers.len();
    let mut dx = vec![0.0; n * n];
    let mut dy = vec![0.0; n * n];
    for (u, cu) in centers.iter().enumerate() {
        for (v, cv) in centers.iter().enumerate() {
            dx[u * n + v] = cv.0 - cu.0;
            dy[u * n + v] = cv.1 - cu.1;
        }
    }
    RelativeOffsets { n, dx, dy }
}
