//! Forward pass with cached activations and the matching backward pass.
//!
//! Relative-position attention is evaluated without materializing the
//! `n × n × r` offset encodings. Since `sin(a_v - a_u)` and `cos(a_v - a_u)`
//! expand into products of per-line sines and cosines, each of the two
//! position terms becomes an inner product of a per-query row with a per-key
//! row. Each head therefore scores `Left · Rightᵀ` with
//!
//! ```text
//! Left_u  = [cos θx_u, sin θx_u | cos θy_u, sin θy_u | q_u | Lx_u | Ly_u]
//! Right_v = [Rx_v | Ry_v | k_v | sin θx_v, cos θx_v | sin θy_v, cos θy_v]
//! ```
//!
//! where `R` mixes `A = k_half · W1` with the key's angles and `L` mixes
//! `B = q_half · W2` with the query's angles. The angle blocks sit at the
//! outer ends so the backward pass only multiplies the columns that carry
//! gradient.

use crate::document::LineLabel;
use crate::tensor::{
    add_bias, col_sums_into, gelu_grad_with_tanh, gelu_slice_with_tanh, layer_norm, layer_norm_backward, mm, mm_nt, mm_tn,
    softmax_row, Float,
};

use super::input::DocInput;
use super::params::{LayerIndex, ModelParams};

const C: usize = LineLabel::COUNT;

/// Per-line angles `scale * ω_i * c` for both axes, `n × r/2` each.
struct Trig<T> {
    half: usize,
    cos_x: Vec<T>,
    sin_x: Vec<T>,
    cos_y: Vec<T>,
    sin_y: Vec<T>,
}

impl<T: Float> Trig<T> {
    fn new(centers: &[(f64, f64)], r: usize, scale: f64) -> Self {
        let half = r / 2;
        let n = centers.len();
        let mut t = Trig {
            half,
            cos_x: Vec::with_capacity(n * half),
            sin_x: Vec::with_capacity(n * half),
            cos_y: Vec::with_capacity(n * half),
            sin_y: Vec::with_capacity(n * half),
        };
        let freqs: Vec<f64> = (0..half)
            .map(|i| scale / 10000f64.powf(2.0 * i as f64 / r as f64))
            .collect();
        for &(cx, cy) in centers {
            for &w in &freqs {
                t.cos_x.push(T::of((w * cx).cos()));
                t.sin_x.push(T::of((w * cx).sin()));
                t.cos_y.push(T::of((w * cy).cos()));
                t.sin_y.push(T::of((w * cy).sin()));
            }
        }
        t
    }
}

struct HeadCache<T> {
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    left: Vec<T>,
    right: Vec<T>,
    probs: Vec<T>,
}

struct LayerCache<T> {
    x: Vec<T>,
    heads: Vec<HeadCache<T>>,
    o: Vec<T>,
    r1: Vec<T>,
    st1: Vec<(T, T)>,
    h: Vec<T>,
    f1: Vec<T>,
    /// Inner `tanh` of the GELU at each `f1` entry.
    tanh: Vec<T>,
    g: Vec<T>,
    r2: Vec<T>,
    st2: Vec<(T, T)>,
}

/// Activations of one document, kept for [`backward`].
pub struct Forward<T> {
    pub n: usize,
    /// Token vectors, `n_tokens × d`.
    xtok: Vec<T>,
    /// Max-pool winners per window, `n × d`.
    argmax: Vec<Vec<u32>>,
    layers: Vec<LayerCache<T>>,
    /// Classifier input, `n × d`.
    top: Vec<T>,
    trig: Option<Trig<T>>,
    pub probs: Vec<[T; C]>,
}

fn window_geometry(w: usize, len: usize) -> (usize, usize) {
    let pad = w.saturating_sub(len);
    let left = pad / 2;
    (left, len + pad - w + 1)
}

/// Sum of the four feature embeddings per token, `n_tokens × d`.
fn token_vectors<T: Float>(p: &ModelParams<T>, input: &DocInput) -> Vec<T> {
    let d = p.config.d;
    let mut x = vec![T::zero(); input.tokens.len() * d];
    for (row, ids) in x.chunks_mut(d).zip(&input.tokens) {
        for (f, &id) in ids.iter().enumerate() {
            let table = p.t(p.index.emb[f]);
            let e = &table[id as usize * d..(id as usize + 1) * d];
            for (a, &b) in row.iter_mut().zip(e) {
                *a += b;
            }
        }
    }
    x
}

/// Line embeddings (`n × d`): max-pooled convolutions plus layout encodings.
/// Also returns the token vectors and the pooling winners.
pub fn embed_lines<T: Float>(
    p: &ModelParams<T>,
    input: &DocInput,
) -> (Vec<T>, Vec<T>, Vec<Vec<u32>>) {
    let d = p.config.d;
    let n = input.n_lines();
    let ntok = input.tokens.len();
    let xtok = token_vectors(p, input);
    let mut e: Vec<T> = input.layout.iter().map(|&v| T::of(v)).collect();
    let mut argmax = Vec::with_capacity(p.config.conv_windows.len());
    let mut acc = vec![T::zero(); d];
    let mut best = vec![T::zero(); d];
    for (&w, &(wi, bi)) in p.config.conv_windows.iter().zip(&p.index.conv) {
        let wd = w * d;
        let mut y = vec![T::zero(); ntok * wd];
        mm_nt(ntok, d, wd, &xtok, p.t(wi), T::zero(), &mut y);
        let bias = p.t(bi);
        let mut arg = vec![0u32; n * d];
        for i in 0..n {
            let s = input.line_start[i];
            let len = input.line_start[i + 1] - s;
            let (left, positions) = window_geometry(w, len);
            best.iter_mut().for_each(|b| *b = T::neg_infinity());
            let arg_i = &mut arg[i * d..(i + 1) * d];
            for t in 0..positions {
                acc.copy_from_slice(bias);
                for j in 0..w {
                    let r = t + j;
                    if r < left || r - left >= len {
                        continue;
                    }
                    let row = &y[(s + r - left) * wd + j * d..(s + r - left) * wd + (j + 1) * d];
                    for (a, &v) in acc.iter_mut().zip(row) {
                        *a += v;
                    }
                }
                for o in 0..d {
                    if acc[o] > best[o] {
                        best[o] = acc[o];
                        arg_i[o] = t as u32;
                    }
                }
            }
            for (a, &b) in e[i * d..(i + 1) * d].iter_mut().zip(&best) {
                *a += b;
            }
        }
        argmax.push(arg);
    }
    (e, xtok, argmax)
}

fn copy_cols<T: Float>(src: &[T], rows: usize, stride: usize, off: usize, width: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(rows * width);
    for r in 0..rows {
        out.extend_from_slice(&src[r * stride + off..r * stride + off + width]);
    }
    out
}

fn add_cols<T: Float>(dst: &mut [T], stride: usize, off: usize, width: usize, src: &[T]) {
    for (r, s) in src.chunks(width).enumerate() {
        for (a, &b) in dst[r * stride + off..r * stride + off + width].iter_mut().zip(s) {
            *a += b;
        }
    }
}

/// Relative projections of one head: `(w1_x, w1_y, w2_x, w2_y)`, each
/// `hh × r`.
fn head_rel<'a, T: Float>(p: &'a ModelParams<T>, li: &LayerIndex, h: usize) -> Option<[&'a [T]; 4]> {
    let hh = p.config.head_dim() / 2;
    let r = p.config.rel_dim();
    let size = hh * r;
    li.rel
        .map(|ids| ids.map(|i| &p.t(i)[h * size..(h + 1) * size]))
}

/// Column offset of the content block and total width of `Left`/`Right`.
fn factor_layout(dh: usize, r: usize, rel: bool) -> (usize, usize) {
    if rel {
        (2 * r, dh + 4 * r)
    } else {
        (0, dh)
    }
}

/// Builds the per-head `Left`/`Right` factors and the score scale.
fn head_factors<T: Float>(
    q: &[T],
    k: &[T],
    n: usize,
    dh: usize,
    r: usize,
    rel: Option<[&[T]; 4]>,
    trig: Option<&Trig<T>>,
) -> (Vec<T>, Vec<T>, usize, T) {
    let Some(rel) = rel else {
        return (q.to_vec(), k.to_vec(), dh, T::one() / T::of(dh as f64).sqrt());
    };
    let trig = trig.expect("trig tables exist when relative attention is on");
    let hh = dh / 2;
    let half = trig.half;
    let (c0, inner) = factor_layout(dh, r, true);
    let mut left = vec![T::zero(); n * inner];
    let mut right = vec![T::zero(); n * inner];
    let halves = [
        (copy_cols(q, n, dh, 0, hh), copy_cols(k, n, dh, 0, hh)),
        (copy_cols(q, n, dh, hh, hh), copy_cols(k, n, dh, hh, hh)),
    ];
    for (axis, (qa, ka)) in halves.iter().enumerate() {
        let (cos, sin) = if axis == 0 {
            (&trig.cos_x, &trig.sin_x)
        } else {
            (&trig.cos_y, &trig.sin_y)
        };
        let mut a = vec![T::zero(); n * r];
        mm(n, hh, r, ka, rel[axis], T::zero(), &mut a);
        let mut b = vec![T::zero(); n * r];
        mm(n, hh, r, qa, rel[2 + axis], T::zero(), &mut b);
        let t_off = axis * r;
        let l_off = c0 + dh + axis * r;
        let r_off = axis * r;
        let s_off = c0 + dh + axis * r;
        for u in 0..n {
            let lrow = &mut left[u * inner..(u + 1) * inner];
            let rrow = &mut right[u * inner..(u + 1) * inner];
            let (au, bu) = (&a[u * r..(u + 1) * r], &b[u * r..(u + 1) * r]);
            for i in 0..half {
                let c = cos[u * half + i];
                let s = sin[u * half + i];
                lrow[t_off + i] = c;
                lrow[t_off + half + i] = s;
                lrow[l_off + i] = bu[2 * i] * c + bu[2 * i + 1] * s;
                lrow[l_off + half + i] = bu[2 * i + 1] * c - bu[2 * i] * s;
                rrow[r_off + i] = au[2 * i] * s + au[2 * i + 1] * c;
                rrow[r_off + half + i] = au[2 * i + 1] * s - au[2 * i] * c;
                rrow[s_off + i] = s;
                rrow[s_off + half + i] = c;
            }
        }
    }
    for u in 0..n {
        left[u * inner + c0..u * inner + c0 + dh].copy_from_slice(&q[u * dh..(u + 1) * dh]);
        right[u * inner + c0..u * inner + c0 + dh].copy_from_slice(&k[u * dh..(u + 1) * dh]);
    }
    (left, right, inner, T::one() / T::of(3.0 * dh as f64).sqrt())
}

fn project<T: Float>(x: &[T], n: usize, d_in: usize, w: &[T], d_out: usize) -> Vec<T> {
    let mut y = vec![T::zero(); n * d_out];
    mm_nt(n, d_in, d_out, x, w, T::zero(), &mut y);
    y
}

/// Pre-softmax scores of one head, `n × n`, for layer input `x` (`n × d`).
pub fn attention_scores<T: Float>(
    p: &ModelParams<T>,
    layer: usize,
    head: usize,
    x: &[T],
    centers: &[(f64, f64)],
) -> Vec<T> {
    let cfg = &p.config;
    let (d, dh, r) = (cfg.d, cfg.head_dim(), cfg.rel_dim());
    let n = centers.len();
    let li = &p.index.layers[layer];
    let q = copy_cols(&project(x, n, d, p.t(li.wq), d), n, d, head * dh, dh);
    let k = copy_cols(&project(x, n, d, p.t(li.wk), d), n, d, head * dh, dh);
    let trig = li.rel.map(|_| Trig::new(centers, r, cfg.position_scale));
    let (left, right, inner, scale) = head_factors(&q, &k, n, dh, r, head_rel(p, li, head), trig.as_ref());
    let mut s = vec![T::zero(); n * n];
    T::gemm_raw(n, inner, n, scale, &left, inner as isize, 1, &right, 1, inner as isize, T::zero(), &mut s, n as isize, 1);
    s
}

/// Row-softmaxed [`attention_scores`].
pub fn attention_probs<T: Float>(
    p: &ModelParams<T>,
    layer: usize,
    head: usize,
    x: &[T],
    centers: &[(f64, f64)],
) -> Vec<T> {
    let n = centers.len();
    let mut s = attention_scores(p, layer, head, x, centers);
    for row in s.chunks_mut(n.max(1)) {
        softmax_row(row);
    }
    s
}

fn layer_forward<T: Float>(
    p: &ModelParams<T>,
    li: &LayerIndex,
    x: Vec<T>,
    n: usize,
    trig: Option<&Trig<T>>,
) -> (Vec<T>, LayerCache<T>) {
    let cfg = &p.config;
    let (d, dh, r) = (cfg.d, cfg.head_dim(), cfg.rel_dim());
    let f = cfg.ffn_mult * d;
    let qf = project(&x, n, d, p.t(li.wq), d);
    let kf = project(&x, n, d, p.t(li.wk), d);
    let vf = project(&x, n, d, p.t(li.wv), d);
    let mut o = vec![T::zero(); n * d];
    let mut heads = Vec::with_capacity(cfg.n_heads);
    for h in 0..cfg.n_heads {
        let q = copy_cols(&qf, n, d, h * dh, dh);
        let k = copy_cols(&kf, n, d, h * dh, dh);
        let v = copy_cols(&vf, n, d, h * dh, dh);
        let (left, right, inner, scale) = head_factors(&q, &k, n, dh, r, head_rel(p, li, h), trig);
        let mut probs = vec![T::zero(); n * n];
        T::gemm_raw(n, inner, n, scale, &left, inner as isize, 1, &right, 1, inner as isize, T::zero(), &mut probs, n as isize, 1);
        for row in probs.chunks_mut(n) {
            softmax_row(row);
        }
        // O[:, head block] = P · V_h
        T::gemm_raw(n, n, dh, T::one(), &probs, n as isize, 1, &v, dh as isize, 1, T::zero(), &mut o[h * dh..], d as isize, 1);
        heads.push(HeadCache { q, k, v, left, right, probs });
    }
    let mut r1 = project(&o, n, d, p.t(li.wo), d);
    add_bias(n, d, p.t(li.bo), &mut r1);
    for (a, &b) in r1.iter_mut().zip(&x) {
        *a += b;
    }
    let mut hs = vec![T::zero(); n * d];
    let st1 = layer_norm(n, d, &r1, p.t(li.ln1_g), p.t(li.ln1_b), &mut hs);
    let mut f1 = project(&hs, n, d, p.t(li.ff1_w), f);
    add_bias(n, f, p.t(li.ff1_b), &mut f1);
    let (g, tanh) = gelu_slice_with_tanh(&f1);
    let mut r2 = project(&g, n, f, p.t(li.ff2_w), d);
    add_bias(n, d, p.t(li.ff2_b), &mut r2);
    for (a, &b) in r2.iter_mut().zip(&hs) {
        *a += b;
    }
    let mut out = vec![T::zero(); n * d];
    let st2 = layer_norm(n, d, &r2, p.t(li.ln2_g), p.t(li.ln2_b), &mut out);
    let cache = LayerCache { x, heads, o, r1, st1, h: hs, f1, tanh, g, r2, st2 };
    (out, cache)
}

/// Runs the network on one document.
pub fn forward<T: Float>(p: &ModelParams<T>, input: &DocInput) -> Forward<T> {
    let cfg = &p.config;
    let d = cfg.d;
    let n = input.n_lines();
    let (e, xtok, argmax) = embed_lines(p, input);
    let uses_rel = p.index.layers.iter().any(|l| l.rel.is_some());
    let trig = uses_rel.then(|| Trig::new(&input.centers, cfg.rel_dim(), cfg.position_scale));
    let mut hcur = e;
    let mut layers = Vec::with_capacity(p.index.layers.len());
    for li in &p.index.layers {
        let (out, cache) = layer_forward(p, li, hcur, n, trig.as_ref());
        layers.push(cache);
        hcur = out;
    }
    let mut logits = project(&hcur, n, d, p.t(p.index.cls_w), C);
    add_bias(n, C, p.t(p.index.cls_b), &mut logits);
    let probs = logits
        .chunks_mut(C)
        .map(|row| {
            softmax_row(row);
            let mut a = [T::zero(); C];
            a.copy_from_slice(row);
            a
        })
        .collect();
    Forward { n, xtok, argmax, layers, top: hcur, trig, probs }
}

/// First index of the maximum; ties go to the earlier label.
pub fn argmax_label<T: Float>(row: &[T; C]) -> LineLabel {
    let mut best = 0;
    for i in 1..C {
        if row[i] > row[best] {
            best = i;
        }
    }
    LineLabel::ALL[best]
}

fn head_backward<T: Float>(
    p: &ModelParams<T>,
    li: &LayerIndex,
    h: usize,
    hc: &HeadCache<T>,
    d_oh: &[T],
    n: usize,
    trig: Option<&Trig<T>>,
    grads: &mut [Vec<T>],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let cfg = &p.config;
    let (dh, r) = (cfg.head_dim(), cfg.rel_dim());
    let rel = head_rel(p, li, h);
    let (c0, inner) = factor_layout(dh, r, rel.is_some());
    let scale = if rel.is_some() {
        T::one() / T::of(3.0 * dh as f64).sqrt()
    } else {
        T::one() / T::of(dh as f64).sqrt()
    };
    let mut dp = vec![T::zero(); n * n];
    mm_nt(n, dh, n, d_oh, &hc.v, T::zero(), &mut dp);
    let mut dv = vec![T::zero(); n * dh];
    mm_tn(n, n, dh, &hc.probs, d_oh, T::zero(), &mut dv);
    // dS = P ⊙ (dP - rowsum(P ⊙ dP)), then fold in the scale.
    let mut g = dp;
    for (grow, prow) in g.chunks_mut(n).zip(hc.probs.chunks(n)) {
        let dot: T = grow.iter().zip(prow).map(|(&a, &b)| a * b).sum();
        for (gv, &pv) in grow.iter_mut().zip(prow) {
            *gv = pv * (*gv - dot) * scale;
        }
    }
    // Only [q | L] of Left and [R | k] of Right carry gradient; the angle
    // blocks are constants.
    let (wl, wr) = (inner - c0, c0 + dh);
    let mut dleft = vec![T::zero(); n * wl];
    T::gemm_raw(
        n, n, wl, T::one(), &g, n as isize, 1, &hc.right[c0..], inner as isize, 1,
        T::zero(), &mut dleft, wl as isize, 1,
    );
    let mut dright = vec![T::zero(); n * wr];
    T::gemm_raw(
        n, n, wr, T::one(), &g, 1, n as isize, &hc.left, inner as isize, 1,
        T::zero(), &mut dright, wr as isize, 1,
    );
    let mut dq = copy_cols(&dleft, n, wl, 0, dh);
    let mut dk = copy_cols(&dright, n, wr, c0, dh);
    if let (Some(rel), Some(ids), Some(trig)) = (rel, li.rel, trig) {
        let hh = dh / 2;
        let half = trig.half;
        let size = hh * r;
        for axis in 0..2 {
            let (cos, sin) = if axis == 0 {
                (&trig.cos_x, &trig.sin_x)
            } else {
                (&trig.cos_y, &trig.sin_y)
            };
            let l_off = dh + axis * r;
            let r_off = axis * r;
            let mut da = vec![T::zero(); n * r];
            let mut db = vec![T::zero(); n * r];
            for u in 0..n {
                let dl = &dleft[u * wl + l_off..u * wl + l_off + r];
                let dr = &dright[u * wr + r_off..u * wr + r_off + r];
                let (dau, dbu) = (&mut da[u * r..(u + 1) * r], &mut db[u * r..(u + 1) * r]);
                for i in 0..half {
                    let c = cos[u * half + i];
                    let s = sin[u * half + i];
                    let (l1, l2) = (dl[i], dl[half + i]);
                    dbu[2 * i] = l1 * c - l2 * s;
                    dbu[2 * i + 1] = l1 * s + l2 * c;
                    let (r1, r2) = (dr[i], dr[half + i]);
                    dau[2 * i] = r1 * s - r2 * c;
                    dau[2 * i + 1] = r1 * c + r2 * s;
                }
            }
            let ka = copy_cols(&hc.k, n, dh, axis * hh, hh);
            let qa = copy_cols(&hc.q, n, dh, axis * hh, hh);
            let mut dka = vec![T::zero(); n * hh];
            mm_nt(n, r, hh, &da, rel[axis], T::zero(), &mut dka);
            add_cols(&mut dk, dh, axis * hh, hh, &dka);
            let mut dqa = vec![T::zero(); n * hh];
            mm_nt(n, r, hh, &db, rel[2 + axis], T::zero(), &mut dqa);
            add_cols(&mut dq, dh, axis * hh, hh, &dqa);
            let g1 = &mut grads[ids[axis]][h * size..(h + 1) * size];
            mm_tn(hh, n, r, &ka, &da, T::one(), g1);
            let g2 = &mut grads[ids[2 + axis]][h * size..(h + 1) * size];
            mm_tn(hh, n, r, &qa, &db, T::one(), g2);
        }
    }
    (dq, dk, dv)
}

/// Accumulates `d loss / d W` for `y = x · Wᵀ (+ b)` and returns `d loss / d x`.
fn linear_backward<T: Float>(
    x: &[T],
    dy: &[T],
    n: usize,
    d_in: usize,
    d_out: usize,
    w: &[T],
    dw: &mut [T],
) -> Vec<T> {
    mm_tn(d_out, n, d_in, dy, x, T::one(), dw);
    let mut dx = vec![T::zero(); n * d_in];
    mm(n, d_out, d_in, dy, w, T::zero(), &mut dx);
    dx
}

fn layer_backward<T: Float>(
    p: &ModelParams<T>,
    li: &LayerIndex,
    c: &LayerCache<T>,
    dout: &[T],
    n: usize,
    trig: Option<&Trig<T>>,
    grads: &mut [Vec<T>],
) -> Vec<T> {
    let cfg = &p.config;
    let (d, dh) = (cfg.d, cfg.head_dim());
    let f = cfg.ffn_mult * d;

    let mut dr2 = vec![T::zero(); n * d];
    {
        let (mut gg, mut gb) = (vec![T::zero(); d], vec![T::zero(); d]);
        layer_norm_backward(n, d, &c.r2, &c.st2, p.t(li.ln2_g), dout, &mut dr2, &mut gg, &mut gb);
        add_into(&mut grads[li.ln2_g], &gg);
        add_into(&mut grads[li.ln2_b], &gb);
    }
    col_sums_into(n, d, &dr2, &mut grads[li.ff2_b]);
    let mut dg = linear_backward(&c.g, &dr2, n, f, d, p.t(li.ff2_w), &mut grads[li.ff2_w]);
    for ((dv, &x), &t) in dg.iter_mut().zip(&c.f1).zip(&c.tanh) {
        *dv *= gelu_grad_with_tanh(x, t);
    }
    col_sums_into(n, f, &dg, &mut grads[li.ff1_b]);
    let mut dh_ = linear_backward(&c.h, &dg, n, d, f, p.t(li.ff1_w), &mut grads[li.ff1_w]);
    add_into(&mut dh_, &dr2);

    let mut dr1 = vec![T::zero(); n * d];
    {
        let (mut gg, mut gb) = (vec![T::zero(); d], vec![T::zero(); d]);
        layer_norm_backward(n, d, &c.r1, &c.st1, p.t(li.ln1_g), &dh_, &mut dr1, &mut gg, &mut gb);
        add_into(&mut grads[li.ln1_g], &gg);
        add_into(&mut grads[li.ln1_b], &gb);
    }
    col_sums_into(n, d, &dr1, &mut grads[li.bo]);
    let d_o = linear_backward(&c.o, &dr1, n, d, d, p.t(li.wo), &mut grads[li.wo]);

    let mut dqf = vec![T::zero(); n * d];
    let mut dkf = vec![T::zero(); n * d];
    let mut dvf = vec![T::zero(); n * d];
    for (h, hc) in c.heads.iter().enumerate() {
        let d_oh = copy_cols(&d_o, n, d, h * dh, dh);
        let (dq, dk, dv) = head_backward(p, li, h, hc, &d_oh, n, trig, grads);
        add_cols(&mut dqf, d, h * dh, dh, &dq);
        add_cols(&mut dkf, d, h * dh, dh, &dk);
        add_cols(&mut dvf, d, h * dh, dh, &dv);
    }
    let mut dx = dr1;
    for (dy, wi) in [(&dqf, li.wq), (&dkf, li.wk), (&dvf, li.wv)] {
        let part = linear_backward(&c.x, dy, n, d, d, p.t(wi), &mut grads[wi]);
        add_into(&mut dx, &part);
    }
    dx
}

#[inline]
fn add_into<T: Float>(dst: &mut [T], src: &[T]) {
    for (a, &b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

fn embed_backward<T: Float>(
    p: &ModelParams<T>,
    input: &DocInput,
    fwd: &Forward<T>,
    de: &[T],
    grads: &mut [Vec<T>],
) {
    #[cfg(target_arch = "x86_64")]
    if std::is_x86_feature_detected!("avx2") {
        // SAFETY: the required CPU feature was detected at run time.
        return unsafe { embed_backward_avx2(p, input, fwd, de, grads) };
    }
    embed_backward_body(p, input, fwd, de, grads)
}

/// AVX2 build of the scatter loops.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn embed_backward_avx2<T: Float>(
    p: &ModelParams<T>,
    input: &DocInput,
    fwd: &Forward<T>,
    de: &[T],
    grads: &mut [Vec<T>],
) {
    embed_backward_body(p, input, fwd, de, grads)
}

#[inline(always)]
fn embed_backward_body<T: Float>(
    p: &ModelParams<T>,
    input: &DocInput,
    fwd: &Forward<T>,
    de: &[T],
    grads: &mut [Vec<T>],
) {
    let d = p.config.d;
    let mut dx = vec![T::zero(); input.tokens.len() * d];
    for ((&w, &(wi, bi)), arg) in p.config.conv_windows.iter().zip(&p.index.conv).zip(&fwd.argmax) {
        let weight = p.t(wi);
        for i in 0..fwd.n {
            let s = input.line_start[i];
            let len = input.line_start[i + 1] - s;
            let (left, _) = window_geometry(w, len);
            for o in 0..d {
                let g = de[i * d + o];
                grads[bi][o] += g;
                let t = arg[i * d + o] as usize;
                for j in 0..w {
                    let r = t + j;
                    if r < left || r - left >= len {
                        continue;
                    }
                    let tok = s + r - left;
                    let row = (j * d + o) * d;
                    let xrow = &fwd.xtok[tok * d..(tok + 1) * d];
                    for (a, &b) in grads[wi][row..row + d].iter_mut().zip(xrow) {
                        *a += g * b;
                    }
                    for (a, &b) in dx[tok * d..(tok + 1) * d].iter_mut().zip(&weight[row..row + d]) {
                        *a += g * b;
                    }
                }
            }
        }
    }
    for (ids, drow) in input.tokens.iter().zip(dx.chunks(d)) {
        for (f, &id) in ids.iter().enumerate() {
            let table = &mut grads[p.index.emb[f]];
            add_into(&mut table[id as usize * d..(id as usize + 1) * d], drow);
        }
    }
}

/// Accumulates gradients of the summed cross-entropy into `grads` and
/// returns that sum.
pub fn backward<T: Float>(
    p: &ModelParams<T>,
    input: &DocInput,
    fwd: &Forward<T>,
    labels: &[usize],
    grads: &mut [Vec<T>],
) -> f64 {
    let cfg = &p.config;
    let (d, n) = (cfg.d, fwd.n);
    assert_eq!(labels.len(), n, "one label per line");
    let mut loss = 0.0;
    let mut dlogits = vec![T::zero(); n * C];
    for (i, (&y, row)) in labels.iter().zip(&fwd.probs).enumerate() {
        loss -= row[y].f64().max(f64::MIN_POSITIVE).ln();
        let drow = &mut dlogits[i * C..(i + 1) * C];
        drow.copy_from_slice(row);
        drow[y] -= T::one();
    }
    col_sums_into(n, C, &dlogits, &mut grads[p.index.cls_b]);
    let mut dh = linear_backward(&fwd.top, &dlogits, n, d, C, p.t(p.index.cls_w), &mut grads[p.index.cls_w]);
    for (li, cache) in p.index.layers.iter().zip(&fwd.layers).rev() {
        dh = layer_backward(p, li, cache, &dh, n, fwd.trig.as_ref(), grads);
    }
    embed_backward(p, input, fwd, &dh, grads);
    loss
}

/// Summed cross-entropy over the document's lines and its gradient.
pub fn loss_and_grad<T: Float>(
    p: &ModelParams<T>,
    input: &DocInput,
    labels: &[usize],
) -> (f64, Vec<Vec<T>>) {
    let fwd = forward(p, input);
    let mut grads = p.zeros_like();
    let loss = backward(p, input, &fwd, labels, &mut grads);
    (loss, grads)
}
