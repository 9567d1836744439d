//! Named parameter tensors and their fixed layout.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ModelConfig;
use crate::document::LineLabel;
use crate::tensor::Float;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Float> Tensor<T> {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Tensor {
            name: name.into(),
            shape,
            data: vec![T::zero(); len],
        }
    }
}

/// Positions of one layer's tensors in [`ModelParams::tensors`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerIndex {
    pub wq: usize,
    pub wk: usize,
    pub wv: usize,
    pub wo: usize,
    pub bo: usize,
    /// Position projections `[w1_x, w1_y, w2_x, w2_y]`, each `[heads, d_h/2, r]`.
    /// `w1_*` pair with key content, `w2_*` with query content.
    pub rel: Option<[usize; 4]>,
    pub ln1_g: usize,
    pub ln1_b: usize,
    pub ff1_w: usize,
    pub ff1_b: usize,
    pub ff2_w: usize,
    pub ff2_b: usize,
    pub ln2_g: usize,
    pub ln2_b: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamIndex {
    pub emb: [usize; 4],
    /// `(weight, bias)` per convolution window, weight rows ordered
    /// (offset, output channel).
    pub conv: Vec<(usize, usize)>,
    pub layers: Vec<LayerIndex>,
    pub cls_w: usize,
    pub cls_b: usize,
}

/// How a tensor is initialized.
#[derive(Debug, Clone, Copy)]
enum Init {
    Zero,
    One,
    /// Uniform in `±a`.
    Uniform(f64),
}

fn xavier(fan_in: usize, fan_out: usize) -> Init {
    Init::Uniform((6.0 / (fan_in + fan_out) as f64).sqrt())
}

/// Tensor specs in storage order, plus the index over them.
fn specs(config: &ModelConfig, vocab_sizes: [usize; 4]) -> (Vec<(String, Vec<usize>, Init)>, ParamIndex) {
    let d = config.d;
    let f = config.ffn_mult * d;
    let h = config.n_heads;
    let hh = config.head_dim() / 2;
    let r = config.rel_dim();
    let mut out: Vec<(String, Vec<usize>, Init)> = Vec::new();
    let mut push = |name: String, shape: Vec<usize>, init: Init| {
        out.push((name, shape, init));
        out.len() - 1
    };
    let emb_a = Init::Uniform((3.0 / d as f64).sqrt());
    let emb = [
        push("emb.prefix".into(), vec![vocab_sizes[0], d], emb_a),
        push("emb.suffix".into(), vec![vocab_sizes[1], d], emb_a),
        push("emb.shape".into(), vec![vocab_sizes[2], d], emb_a),
        push("emb.norm".into(), vec![vocab_sizes[3], d], emb_a),
    ];
    let conv = config
        .conv_windows
        .iter()
        .map(|&w| {
            (
                push(format!("conv{w}.weight"), vec![w * d, d], xavier(w * d, d)),
                push(format!("conv{w}.bias"), vec![d], Init::Zero),
            )
        })
        .collect();
    let mut layers = Vec::new();
    if !config.disable_transformer {
        for l in 0..config.n_layers {
            let p = |s: &str| format!("layer{l}.{s}");
            let wq = push(p("wq"), vec![d, d], xavier(d, d));
            let wk = push(p("wk"), vec![d, d], xavier(d, d));
            let wv = push(p("wv"), vec![d, d], xavier(d, d));
            let wo = push(p("wo"), vec![d, d], xavier(d, d));
            let bo = push(p("bo"), vec![d], Init::Zero);
            let rel = if config.disable_relative_attention {
                None
            } else {
                Some([
                    push(p("rel_w1_x"), vec![h, hh, r], xavier(r, hh)),
                    push(p("rel_w1_y"), vec![h, hh, r], xavier(r, hh)),
                    push(p("rel_w2_x"), vec![h, hh, r], xavier(r, hh)),
                    push(p("rel_w2_y"), vec![h, hh, r], xavier(r, hh)),
                ])
            };
            layers.push(LayerIndex {
                wq,
                wk,
                wv,
                wo,
                bo,
                rel,
                ln1_g: push(p("ln1.gain"), vec![d], Init::One),
                ln1_b: push(p("ln1.bias"), vec![d], Init::Zero),
                ff1_w: push(p("ffn1.weight"), vec![f, d], xavier(d, f)),
                ff1_b: push(p("ffn1.bias"), vec![f], Init::Zero),
                ff2_w: push(p("ffn2.weight"), vec![d, f], xavier(f, d)),
                ff2_b: push(p("ffn2.bias"), vec![d], Init::Zero),
                ln2_g: push(p("ln2.gain"), vec![d], Init::One),
                ln2_b: push(p("ln2.bias"), vec![d], Init::Zero),
            });
        }
    }
    let cls_w = push(
        "classifier.weight".into(),
        vec![LineLabel::COUNT, d],
        xavier(d, LineLabel::COUNT),
    );
    let cls_b = push("classifier.bias".into(), vec![LineLabel::COUNT], Init::Zero);
    (
        out,
        ParamIndex {
            emb,
            conv,
            layers,
            cls_w,
            cls_b,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamShape {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub index: ParamIndex,
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Float> ModelParams<T> {
    pub fn zeros(config: &ModelConfig, vocab_sizes: [usize; 4]) -> Self {
        let (specs, index) = specs(config, vocab_sizes);
        ModelParams {
            config: config.clone(),
            index,
            tensors: specs
                .into_iter()
                .map(|(name, shape, _)| Tensor::zeros(name, shape))
                .collect(),
        }
    }

    /// Xavier-uniform matrices, uniform embeddings, unit gains, zero biases.
    pub fn init<R: Rng>(config: &ModelConfig, vocab_sizes: [usize; 4], rng: &mut R) -> Self {
        let (specs, index) = specs(config, vocab_sizes);
        let tensors = specs
            .into_iter()
            .map(|(name, shape, init)| {
                let mut t = Tensor::zeros(name, shape);
                match init {
                    Init::Zero => {}
                    Init::One => t.data.iter_mut().for_each(|v| *v = T::one()),
                    Init::Uniform(a) => t
                        .data
                        .iter_mut()
                        .for_each(|v| *v = T::of(rng.gen_range(-a..=a))),
                }
                t
            })
            .collect();
        ModelParams {
            config: config.clone(),
            index,
            tensors,
        }
    }

    /// Expected names and shapes for a config and vocabulary.
    pub fn expected_shapes(config: &ModelConfig, vocab_sizes: [usize; 4]) -> Vec<ParamShape> {
        specs(config, vocab_sizes)
            .0
            .into_iter()
            .map(|(name, shape, _)| ParamShape { name, shape })
            .collect()
    }

    pub fn vocab_sizes(&self) -> [usize; 4] {
        self.index.emb.map(|i| self.tensors[i].shape[0])
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn t(&self, i: usize) -> &[T] {
        &self.tensors[i].data
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn zeros_like(&self) -> Vec<Vec<T>> {
        self.tensors.iter().map(|t| vec![T::zero(); t.data.len()]).collect()
    }

    pub fn cast<U: Float>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            index: self.index.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| U::of(v.f64())).collect(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn default_layout_and_count() {
        let cfg = ModelConfig::default();
        let p: ModelParams<f32> = ModelParams::zeros(&cfg, [10, 10, 10, 10]);
        let d = 96;
        let emb = 40 * d;
        let conv = (3 + 4 + 5) * d * d + 3 * d;
        let layer = 4 * d * d + d + 4 * (4 * 12 * 48) + 2 * d + 2 * (4 * d * d) + 4 * d + d + 2 * d;
        let cls = 8 * d + 8;
        assert_eq!(p.count(), emb + conv + 4 * layer + cls);
        assert_eq!(p.tensors.len(), 4 + 6 + 4 * 17 + 2);
        assert_eq!(p.vocab_sizes(), [10; 4]);
    }

    #[test]
    fn ablations_drop_tensors() {
        let mut cfg = ModelConfig::default();
        cfg.disable_relative_attention = true;
        let p: ModelParams<f32> = ModelParams::zeros(&cfg, [3; 4]);
        assert!(p.index.layers.iter().all(|l| l.rel.is_none()));
        cfg.disable_transformer = true;
        let p: ModelParams<f32> = ModelParams::zeros(&cfg, [3; 4]);
        assert!(p.index.layers.is_empty());
    }

    #[test]
    fn init_is_seeded() {
        let cfg = ModelConfig::tiny();
        let a: ModelParams<f64> = ModelParams::init(&cfg, [5; 4], &mut ChaCha8Rng::seed_from_u64(1));
        let b: ModelParams<f64> = ModelParams::init(&cfg, [5; 4], &mut ChaCha8Rng::seed_from_u64(1));
        let c: ModelParams<f64> = ModelParams::init(&cfg, [5; 4], &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(a, b);
        assert_ne!(a, c);
        let g = &a.tensors[a.index.layers[0].ln1_g].data;
        assert!(g.iter().all(|&v| v == 1.0));
    }
}
