//! Adam training with linear warmup and decay, document-level batches, and
//! multi-seed runs over a fixed train/dev split.

use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::document::Document;
use crate::evaluator::{evaluate_model, AblationMetrics, EvalError, EvalReport};
use crate::exec::Exec;
use crate::features::Vocab;
use crate::model::{backward, forward, label_indices, DocInput, Model, ModelConfig, ModelError, ModelParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub warmup_steps: usize,
    pub peak_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_docs: usize,
    pub seeds: Vec<u64>,
    pub dev_fraction: f64,
    /// Seed of the train/dev shuffle, shared by all runs.
    pub split_seed: u64,
    /// Global gradient-norm clip; off when `None`.
    pub grad_clip: Option<f64>,
    /// L2 penalty added to the gradient.
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 1000,
            warmup_steps: 100,
            peak_lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_docs: 8,
            seeds: vec![0, 1, 2, 3, 4],
            dev_fraction: 0.1,
            split_seed: 0,
            grad_clip: None,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.steps == 0 || self.warmup_steps >= self.steps {
            return bad(format!(
                "need 0 <= warmup_steps < steps, got {} and {}",
                self.warmup_steps, self.steps
            ));
        }
        if !(self.peak_lr > 0.0 && self.peak_lr.is_finite()) {
            return bad(format!("peak_lr {} must be positive", self.peak_lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return bad("Adam needs beta1, beta2 in [0, 1) and epsilon > 0".into());
        }
        if self.batch_docs == 0 {
            return bad("batch_docs must be positive".into());
        }
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            return bad(format!("dev_fraction {} must lie in (0, 1)", self.dev_fraction));
        }
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        if self.grad_clip.is_some_and(|c| !(c > 0.0)) || self.weight_decay < 0.0 {
            return bad("grad_clip must be positive and weight_decay nonnegative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("{doc_id}: page {page} line {line} has no label")]
    UnlabeledLine {
        doc_id: String,
        page: usize,
        line: usize,
    },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Linear warmup from 0 to `peak_lr`, then linear decay to 0 at `steps`.
pub fn lr_schedule(cfg: &TrainConfig, step: usize) -> f64 {
    let s = step.min(cfg.steps) as f64;
    let w = cfg.warmup_steps as f64;
    if s <= w && cfg.warmup_steps > 0 {
        cfg.peak_lr * s / w
    } else {
        cfg.peak_lr * (cfg.steps as f64 - s) / (cfg.steps as f64 - w)
    }
}

/// Vocabulary over every line of `docs`, frozen.
pub fn build_vocab(docs: &[Document]) -> Vocab {
    let mut vocab = Vocab::new();
    for d in docs {
        for (_, line) in d.lines() {
            vocab.featurize_text(&line.text);
        }
    }
    vocab.freeze();
    vocab
}

fn check_labels(docs: &[Document]) -> Result<Vec<Vec<usize>>, TrainError> {
    if docs.is_empty() || docs.iter().all(|d| d.line_count() == 0) {
        return Err(TrainError::EmptyCorpus);
    }
    docs.iter()
        .map(|d| {
            label_indices(d).ok_or_else(|| {
                let (r, _) = d.lines().find(|(_, l)| l.label.is_none()).unwrap();
                TrainError::UnlabeledLine {
                    doc_id: d.doc_id.clone(),
                    page: r.page,
                    line: r.line,
                }
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: Model,
    pub log: Vec<StepLog>,
}

struct Adam {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: i32,
}

impl Adam {
    fn new(p: &ModelParams<f32>) -> Self {
        Adam { m: p.zeros_like(), v: p.zeros_like(), t: 0 }
    }

    fn step(&mut self, p: &mut ModelParams<f32>, grads: &[Vec<f32>], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (cfg.beta1 as f32, cfg.beta2 as f32);
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        let step = (lr * c2.sqrt() / c1) as f32;
        let eps = (cfg.epsilon * c2.sqrt()) as f32;
        for (((t, g), m), v) in p.tensors.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for (((w, &g), m), v) in t.data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *w -= step * *m / (v.sqrt() + eps);
            }
        }
    }
}

/// Trains on every document in `corpus`. Batches are sampled with
/// replacement; per-document gradients are summed in batch order, so the
/// result does not depend on `exec`.
pub fn train(
    corpus: &[Document],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    seed: u64,
    exec: Exec,
) -> Result<TrainOutput, TrainError> {
    cfg.validate()?;
    model_cfg.validate()?;
    let labels = check_labels(corpus)?;
    let vocab = build_vocab(corpus);
    let inputs: Vec<DocInput> = exec.map(corpus, |d| DocInput::new(d, &vocab, model_cfg));
    let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::<f32>::init(model_cfg, vocab.sizes(), &mut init_rng);
    let mut sampler = ChaCha8Rng::seed_from_u64(seed);
    sampler.set_stream(1);
    let mut adam = Adam::new(&params);
    let mut log = Vec::with_capacity(cfg.steps);
    // Per-document gradient buffers and their sum, reused across steps.
    let mut bufs: Vec<Vec<Vec<f32>>> = (0..cfg.batch_docs).map(|_| params.zeros_like()).collect();
    let mut total = params.zeros_like();
    for i in 0..cfg.steps {
        let batch: Vec<usize> = (0..cfg.batch_docs)
            .map(|_| sampler.gen_range(0..corpus.len()))
            .collect();
        let losses = exec.map_mut(&mut bufs, |j, grads| {
            grads.iter_mut().for_each(|g| g.fill(0.0));
            let b = batch[j];
            let fwd = forward(&params, &inputs[b]);
            backward(&params, &inputs[b], &fwd, &labels[b], grads)
        });
        let lines: usize = batch.iter().map(|&b| labels[b].len()).sum();
        let loss: f64 = losses.iter().sum();
        total.iter_mut().for_each(|g| g.fill(0.0));
        for g in &bufs {
            for (a, b) in total.iter_mut().zip(g) {
                for (x, &y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
        }
        let scale = 1.0 / lines.max(1) as f32;
        let mut sq = 0.0f64;
        for (g, t) in total.iter_mut().zip(&params.tensors) {
            for (x, &w) in g.iter_mut().zip(&t.data) {
                *x = *x * scale + cfg.weight_decay as f32 * w;
                sq += (*x as f64) * (*x as f64);
            }
        }
        if let Some(clip) = cfg.grad_clip {
            let norm = sq.sqrt();
            if norm > clip {
                let f = (clip / norm) as f32;
                total.iter_mut().flatten().for_each(|x| *x *= f);
            }
        }
        let lr = lr_schedule(cfg, i + 1);
        adam.step(&mut params, &total, lr, cfg);
        let loss = loss / lines.max(1) as f64;
        if (i + 1) % 100 == 0 {
            log::debug!("seed {seed} step {} lr {lr:.2e} loss {loss:.4}", i + 1);
        }
        log.push(StepLog { step: i + 1, lr, loss });
    }
    if !params.is_finite() {
        return Err(TrainError::Config("training diverged to non-finite weights".into()));
    }
    Ok(TrainOutput {
        model: Model { params, vocab },
        log,
    })
}

/// Indices of the train and dev parts: a seeded shuffle, the last
/// `ceil(n * fraction)` going to dev (at least one, at most `n - 1`).
pub fn split_dev(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_dev = if n < 2 {
        0
    } else {
        ((n as f64 * fraction).ceil() as usize).clamp(1, n - 1)
    };
    let dev = idx.split_off(n - n_dev);
    (idx, dev)
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub model: Model,
    pub log: Vec<StepLog>,
    pub dev: EvalReport,
}

#[derive(Debug, Clone)]
pub struct MultiSeedRuns {
    pub runs: Vec<SeedRun>,
    pub mean: AblationMetrics,
    pub std: AblationMetrics,
}

impl MultiSeedRuns {
    pub fn metrics(&self) -> Vec<AblationMetrics> {
        self.runs
            .iter()
            .map(|r| AblationMetrics::from_report(&r.dev))
            .collect()
    }
}

fn std_dev(rows: &[AblationMetrics], mean: &AblationMetrics) -> AblationMetrics {
    let n = rows.len().max(1) as f64;
    let sd = |f: fn(&AblationMetrics) -> f64| {
        (rows.iter().map(|r| (f(r) - f(mean)).powi(2)).sum::<f64>() / n).sqrt()
    };
    AblationMetrics {
        micro_f1: sd(|m| m.micro_f1),
        macro_f1: sd(|m| m.macro_f1),
        body_f1: sd(|m| m.body_f1),
        body_recall: sd(|m| m.body_recall),
    }
}

/// Trains once per seed on the train part of a fixed split and scores each
/// run on the dev part.
pub fn train_multiseed(
    corpus: &[Document],
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    exec: Exec,
) -> Result<MultiSeedRuns, TrainError> {
    cfg.validate()?;
    let (train_idx, dev_idx) = split_dev(corpus.len(), cfg.dev_fraction, cfg.split_seed);
    let train_docs: Vec<Document> = train_idx.iter().map(|&i| corpus[i].clone()).collect();
    let dev_docs: Vec<Document> = dev_idx.iter().map(|&i| corpus[i].clone()).collect();
    let mut runs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let started = std::time::Instant::now();
        let out = train(&train_docs, model_cfg, cfg, seed, exec)?;
        let dev = evaluate_model(&out.model, &dev_docs, exec)?;
        log::info!(
            "seed {seed}: dev micro-F1 {:.4}, final loss {:.4}, {:.1}s",
            dev.micro_avg.f1,
            out.log.last().map_or(f64::NAN, |l| l.loss),
            started.elapsed().as_secs_f64()
        );
        runs.push(SeedRun {
            seed,
            model: out.model,
            log: out.log,
            dev,
        });
    }
    let rows: Vec<AblationMetrics> = runs.iter().map(|r| AblationMetrics::from_report(&r.dev)).collect();
    let mean = AblationMetrics::mean(&rows);
    let std = std_dev(&rows, &mean);
    Ok(MultiSeedRuns { runs, mean, std })
}

pub fn write_loss_csv(log: &[StepLog], out: &mut impl Write) -> io::Result<()> {
    writeln!(out, "step,lr,loss")?;
    for s in log {
        writeln!(out, "{},{:e},{}", s.step, s.lr, s.loss)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::{LineBox, LineLabel, Page, PageGeometry};
    use proptest::prelude::*;

    fn doc(id: &str, lines: &[(&str, LineLabel, f64)]) -> Document {
        let lines = lines
            .iter()
            .enumerate()
            .map(|(i, &(text, label, x0))| LineBox {
                page: 0,
                x0,
                y0: 40.0 + 14.0 * i as f64,
                x1: x0 + 120.0,
                y1: 50.0 + 14.0 * i as f64,
                text: text.into(),
                label: Some(label),
            })
            .collect();
        Document {
            doc_id: id.into(),
            pages: vec![Page {
                geometry: PageGeometry::new(595.0, 842.0).unwrap(),
                lines,
            }],
        }
    }

    fn small() -> TrainConfig {
        TrainConfig {
            steps: 30,
            warmup_steps: 5,
            batch_docs: 2,
            seeds: vec![0],
            ..TrainConfig::default()
        }
    }

    fn corpus() -> Vec<Document> {
        use LineLabel::*;
        (0..4)
            .map(|i| {
                doc(
                    &format!("d{i}"),
                    &[
                        ("CHU de Lyon", Header, 40.0),
                        ("Motif :", Body, 150.0),
                        ("douleur thoracique", Body, 150.0),
                        ("Dr MARTIN", LeftNote, 40.0),
                        ("Page 1/1", Page, 500.0),
                    ],
                )
            })
            .collect()
    }

    #[test]
    fn schedule_examples() {
        let c = TrainConfig::default();
        assert_eq!(lr_schedule(&c, 0), 0.0);
        assert!((lr_schedule(&c, 50) - 5e-5).abs() < 1e-20);
        assert_eq!(lr_schedule(&c, 100), 1e-4);
        assert_eq!(lr_schedule(&c, 1000), 0.0);
        assert!((lr_schedule(&c, 550) - 5e-5).abs() < 1e-18);
    }

    proptest! {
        #[test]
        fn schedule_is_bounded_and_peaks_at_warmup(step in 0usize..=1000) {
            let c = TrainConfig::default();
            let lr = lr_schedule(&c, step);
            prop_assert!((0.0..=c.peak_lr).contains(&lr));
            if step > 0 {
                let prev = lr_schedule(&c, step - 1);
                prop_assert!((lr - prev).abs() <= c.peak_lr / 100.0 + 1e-18);
            }
        }
    }

    #[test]
    fn config_errors() {
        for c in [
            TrainConfig { warmup_steps: 1000, ..TrainConfig::default() },
            TrainConfig { peak_lr: 0.0, ..TrainConfig::default() },
            TrainConfig { dev_fraction: 1.0, ..TrainConfig::default() },
            TrainConfig { batch_docs: 0, ..TrainConfig::default() },
        ] {
            assert!(matches!(c.validate(), Err(TrainError::Config(_))));
        }
    }

    #[test]
    fn corpus_errors() {
        let cfg = small();
        let m = ModelConfig::tiny();
        assert!(matches!(train(&[], &m, &cfg, 0, Exec::Sequential), Err(TrainError::EmptyCorpus)));
        let mut docs = corpus();
        docs[2].pages[0].lines[3].label = None;
        match train(&docs, &m, &cfg, 0, Exec::Sequential) {
            Err(TrainError::UnlabeledLine { doc_id, page: 0, line: 3 }) => assert_eq!(doc_id, "d2"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let docs = corpus();
        let m = ModelConfig::tiny();
        let a = train(&docs, &m, &small(), 7, Exec::Sequential).unwrap();
        let b = train(&docs, &m, &small(), 7, Exec::Sequential).unwrap();
        let c = train(&docs, &m, &small(), 8, Exec::Sequential).unwrap();
        let p = train(&docs, &m, &small(), 7, Exec::Parallel).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.log, b.log);
        assert_eq!(a.model, p.model);
        assert_ne!(a.model.params, c.model.params);
    }

    #[test]
    fn memorizes_one_line() {
        let docs = vec![doc("one", &[("Conclusion :", LineLabel::Title, 60.0)])];
        let cfg = TrainConfig { steps: 200, warmup_steps: 20, batch_docs: 1, ..TrainConfig::default() };
        let out = train(&docs, &ModelConfig::default(), &cfg, 0, Exec::Sequential).unwrap();
        let last = out.log.last().unwrap().loss;
        assert!(last < 0.01, "final loss {last}");
    }

    #[test]
    fn small_lr_loss_mostly_decreases() {
        let docs = corpus();
        let cfg = TrainConfig { steps: 120, warmup_steps: 10, batch_docs: 4, peak_lr: 3e-4, ..TrainConfig::default() };
        let out = train(&docs, &ModelConfig::tiny(), &cfg, 3, Exec::Sequential).unwrap();
        let w = 10;
        let smooth: Vec<f64> = out
            .log
            .windows(w)
            .map(|s| s.iter().map(|l| l.loss).sum::<f64>() / w as f64)
            .collect();
        let down = smooth.windows(2).filter(|p| p[1] <= p[0]).count();
        assert!(down as f64 >= 0.9 * (smooth.len() - 1) as f64, "{down}/{}", smooth.len() - 1);
    }

    #[test]
    fn split_is_disjoint_and_sized() {
        let (t, d) = split_dev(215, 0.1, 0);
        assert_eq!(d.len(), 22);
        assert_eq!(t.len() + d.len(), 215);
        let mut all: Vec<usize> = t.iter().chain(&d).copied().collect();
        all.sort();
        assert_eq!(all, (0..215).collect::<Vec<_>>());
    }

    #[test]
    fn multiseed_single_seed_equals_train() {
        let docs: Vec<Document> = corpus().into_iter().chain(corpus()).collect();
        let cfg = small();
        let multi = train_multiseed(&docs, &ModelConfig::tiny(), &cfg, Exec::Sequential).unwrap();
        let (t, _) = split_dev(docs.len(), cfg.dev_fraction, cfg.split_seed);
        let train_docs: Vec<Document> = t.iter().map(|&i| docs[i].clone()).collect();
        let single = train(&train_docs, &ModelConfig::tiny(), &cfg, 0, Exec::Sequential).unwrap();
        assert_eq!(multi.runs.len(), 1);
        assert_eq!(multi.runs[0].model, single.model);
        assert_eq!(multi.mean.micro_f1, multi.runs[0].dev.micro_avg.f1);
    }

    #[test]
    fn loss_csv_format() {
        let mut out = Vec::new();
        write_loss_csv(&[StepLog { step: 1, lr: 1e-6, loss: 2.5 }], &mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "step,lr,loss\n1,1e-6,2.5\n");
    }
}
