use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::document::{LineBox, Page, PageGeometry};
use crate::features::TokenIds;
use crate::tensor::Float;

const WORDS: &[&str] = &[
    "Conclusion", ":", "Motif", "Dr", "MARTIN", "12/05/2021", "patient", "douleur", "thoracique",
    "Page", "1/2", "CHU", "de", "Lyon", "Traitement", "Doliprane", "1000", "mg",
];

fn random_doc(rng: &mut ChaCha8Rng, pages: usize, lines_per_page: usize) -> Document {
    let mut doc = Document::new("rand");
    for page in 0..pages {
        let geometry = PageGeometry::new(595.0, 842.0).unwrap();
        let lines = (0..lines_per_page)
            .map(|_| {
                let x0 = rng.gen_range(20.0..400.0);
                let y0 = rng.gen_range(20.0..800.0);
                let n = rng.gen_range(1..7);
                let text: Vec<&str> = (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect();
                LineBox {
                    page,
                    x0,
                    y0,
                    x1: x0 + rng.gen_range(10.0..180.0),
                    y1: y0 + rng.gen_range(6.0..14.0),
                    text: text.join(" "),
                    label: Some(LineLabel::ALL[rng.gen_range(0..LineLabel::COUNT)]),
                }
            })
            .collect();
        doc.pages.push(Page { geometry, lines });
    }
    doc
}

fn vocab() -> Vocab {
    let mut v = Vocab::new();
    // Leave a few words out so UNK rows take part.
    for w in &WORDS[..WORDS.len() - 3] {
        v.featurize_text(w);
    }
    v.freeze();
    v
}

fn tiny_params<T: Float>(cfg: &ModelConfig, seed: u64) -> ModelParams<T> {
    ModelParams::init(cfg, vocab().sizes(), &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Direct convolution over an explicitly padded token matrix.
fn conv_oracle(x: &[Vec<f64>], w: usize, weight: &[f64], bias: &[f64], d: usize) -> Vec<f64> {
    let len = x.len();
    let pad = w.saturating_sub(len);
    let left = pad / 2;
    let mut padded = vec![vec![0.0; d]; left];
    padded.extend(x.iter().cloned());
    padded.extend(vec![vec![0.0; d]; pad - left]);
    let mut best = vec![f64::NEG_INFINITY; d];
    for t in 0..=padded.len() - w {
        for o in 0..d {
            let mut s = bias[o];
            for j in 0..w {
                for c in 0..d {
                    s += padded[t + j][c] * weight[(j * d + o) * d + c];
                }
            }
            best[o] = best[o].max(s);
        }
    }
    best
}

#[test]
fn embedding_matches_direct_convolution() {
    let cfg = ModelConfig {
        conv_windows: vec![3],
        disable_transformer: true,
        ..ModelConfig::tiny()
    };
    let d = cfg.d;
    let p: ModelParams<f64> = tiny_params(&cfg, 4);
    let tokens: Vec<TokenIds> = vec![[1, 2, 3, 4], [2, 1, 1, 0]];
    let input = DocInput {
        tokens: tokens.clone(),
        line_start: vec![0, 2],
        layout: vec![0.0; d],
        centers: vec![(0.5, 0.5)],
    };
    let x: Vec<Vec<f64>> = tokens
        .iter()
        .map(|ids| {
            (0..d)
                .map(|c| (0..4).map(|f| p.t(p.index.emb[f])[ids[f] as usize * d + c]).sum())
                .collect()
        })
        .collect();
    let (wi, bi) = p.index.conv[0];
    let want = conv_oracle(&x, 3, p.t(wi), p.t(bi), d);
    let (e, _, _) = embed_lines(&p, &input);
    for (a, b) in e.iter().zip(&want) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn zero_text_params_leave_only_layout() {
    let cfg = ModelConfig { disable_transformer: true, ..ModelConfig::tiny() };
    let p: ModelParams<f64> = ModelParams::zeros(&cfg, vocab().sizes());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let doc = random_doc(&mut rng, 1, 4);
    let input = DocInput::new(&doc, &vocab(), &cfg);
    let (e, _, _) = embed_lines(&p, &input);
    assert_eq!(e, input.layout);
}

#[test]
fn single_token_line_is_finite() {
    let cfg = ModelConfig::tiny();
    let p: ModelParams<f32> = tiny_params(&cfg, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut doc = random_doc(&mut rng, 1, 1);
    doc.pages[0].lines[0].text = "Conclusion".into();
    let input = DocInput::new(&doc, &vocab(), &cfg);
    assert_eq!(input.tokens.len(), 1);
    let out = forward(&p, &input);
    assert_eq!(out.probs.len(), 1);
    assert!((out.probs[0].iter().sum::<f32>() - 1.0).abs() < 1e-6);
}

/// Three-term score evaluated pair by pair from the explicit encodings.
fn score_oracle(p: &ModelParams<f64>, head: usize, x: &[f64], centers: &[(f64, f64)]) -> Vec<f64> {
    let cfg = &p.config;
    let (d, dh, r) = (cfg.d, cfg.head_dim(), cfg.rel_dim());
    let hh = dh / 2;
    let n = centers.len();
    let li = &p.index.layers[0];
    let proj = |w: &[f64], u: usize| -> Vec<f64> {
        (0..dh)
            .map(|i| (0..d).map(|c| w[(head * dh + i) * d + c] * x[u * d + c]).sum())
            .collect()
    };
    let rel_proj = |w: &[f64], e: &[f64]| -> Vec<f64> {
        (0..hh)
            .map(|i| (0..r).map(|m| w[(head * hh + i) * r + m] * e[m]).sum())
            .collect()
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let offsets = relative_offsets(centers);
    let mut s = vec![0.0; n * n];
    for u in 0..n {
        for v in 0..n {
            let q = proj(p.t(li.wq), u);
            let k = proj(p.t(li.wk), v);
            let mut score = dot(&q, &k);
            if let Some([w1x, w1y, w2x, w2y]) = li.rel {
                let ex = sinusoidal_encode(offsets.dx[u * n + v], cfg.position_scale, r);
                let ey = sinusoidal_encode(offsets.dy[u * n + v], cfg.position_scale, r);
                let mut pos1 = rel_proj(p.t(w1x), &ex);
                pos1.extend(rel_proj(p.t(w1y), &ey));
                let mut pos2 = rel_proj(p.t(w2x), &ex);
                pos2.extend(rel_proj(p.t(w2y), &ey));
                score += dot(&pos1, &k) + dot(&q, &pos2);
                s[u * n + v] = score / (3.0 * dh as f64).sqrt();
            } else {
                s[u * n + v] = score / (dh as f64).sqrt();
            }
        }
    }
    s
}

fn random_x(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<f64> {
    (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

#[test]
fn attention_matches_pairwise_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for cfg in [ModelConfig::tiny(), ModelConfig { d: 24, n_heads: 2, ..ModelConfig::tiny() }] {
        let p: ModelParams<f64> = tiny_params(&cfg, 3);
        for n in [1, 2, 5] {
            let centers: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen(), rng.gen())).collect();
            let x = random_x(&mut rng, n, cfg.d);
            for head in 0..cfg.n_heads {
                let got = attention_scores(&p, 0, head, &x, &centers);
                let want = score_oracle(&p, head, &x, &centers);
                for (a, b) in got.iter().zip(&want) {
                    assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()), "{a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn zero_position_projections_reduce_to_dot_product() {
    let cfg = ModelConfig::tiny();
    let mut p: ModelParams<f64> = tiny_params(&cfg, 5);
    for i in p.index.layers[0].rel.unwrap() {
        p.tensors[i].data.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let centers = vec![(0.1, 0.2), (0.7, 0.9), (0.3, 0.3)];
    let x = random_x(&mut rng, 3, cfg.d);
    let mut dot_only = p.clone();
    dot_only.index.layers[0].rel = None;
    let scaled = (cfg.head_dim() as f64 / (3.0 * cfg.head_dim() as f64)).sqrt();
    let got = attention_scores(&p, 0, 1, &x, &centers);
    let plain = attention_scores(&dot_only, 0, 1, &x, &centers);
    for (a, b) in got.iter().zip(&plain) {
        assert!((a - b * scaled).abs() <= 1e-12 * (1.0 + b.abs()));
    }
    let probs = attention_probs(&p, 0, 1, &x, &centers);
    for row in probs.chunks(3) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn probability_rows_sum_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for cfg in [
        ModelConfig::tiny(),
        ModelConfig { disable_relative_attention: true, ..ModelConfig::tiny() },
        ModelConfig { disable_transformer: true, ..ModelConfig::tiny() },
    ] {
        let p: ModelParams<f32> = tiny_params(&cfg, 1);
        let doc = random_doc(&mut rng, 2, 6);
        for row in forward(&p, &DocInput::new(&doc, &vocab(), &cfg)).probs {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn permutation_equivariance() {
    let cfg = ModelConfig::tiny();
    let p: ModelParams<f32> = tiny_params(&cfg, 12);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..10 {
        let doc = random_doc(&mut rng, 2, 7);
        let input = DocInput::new(&doc, &vocab(), &cfg);
        let mut perm: Vec<usize> = (0..input.n_lines()).collect();
        perm.shuffle(&mut rng);
        let a = forward(&p, &input).probs;
        let b = forward(&p, &input.permuted(&perm)).probs;
        for (k, &i) in perm.iter().enumerate() {
            for c in 0..LineLabel::COUNT {
                assert!((a[i][c] - b[k][c]).abs() <= 1e-5);
            }
        }
    }
}

#[test]
fn argmax_ties_follow_label_order() {
    assert_eq!(argmax_label(&[0.125f32; 8]), LineLabel::Body);
    let mut row = [0.1f64; 8];
    row[3] = 0.3;
    row[6] = 0.3;
    assert_eq!(argmax_label(&row), LineLabel::LeftNote);
}

fn gradient_errors(cfg: &ModelConfig, seed: u64) -> Vec<(String, f64)> {
    let p: ModelParams<f64> = tiny_params(cfg, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let doc = random_doc(&mut rng, 1, 3);
    let input = DocInput::new(&doc, &vocab(), cfg);
    gradient_check(&p, &input, &label_indices(&doc).unwrap(), 1e-4)
}

#[test]
fn gradients_match_finite_differences() {
    for cfg in [
        ModelConfig::tiny(),
        ModelConfig { disable_relative_attention: true, ..ModelConfig::tiny() },
        ModelConfig { disable_transformer: true, ..ModelConfig::tiny() },
    ] {
        for (name, err) in gradient_errors(&cfg, 21) {
            assert!(err <= 1e-3, "{name}: {err}");
        }
    }
}

#[test]
fn parameter_count_is_light() {
    let cfg = ModelConfig::default();
    let p: ModelParams<f32> = ModelParams::zeros(&cfg, [3000, 3000, 200, 6000]);
    assert!(p.count() < 10_000_000, "{}", p.count());
}
