use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use edlx_core::corpus::{generate_with, read_gold_bodies, read_gold_sections, write_corpus, GoldSection, Resources};
use edlx_core::document::{Document, LineLabel};
use edlx_core::evaluator::{compare_section_extraction, evaluate, run_ablations, SectionGold};
use edlx_core::exec::{init_threads, Exec};
use edlx_core::extractor::{naive_extract, ExtractedText};
use edlx_core::ingest::parse_pdf_with;
use edlx_core::jsonl::read_corpus;
use edlx_core::model::{self, Model};
use edlx_core::pipeline::{bench_extract, extract_document, PdfInput};
use edlx_core::sections::{segment, segment_text, span_text, SectionDictionary, SectionSpan};
use edlx_core::trainer::{train_multiseed, write_loss_csv};

use crate::config::{parse_seeds, RunConfig};
use crate::error::{CliError, IoContext};
use crate::manifest::RunManifest;
use crate::{Cli, Command, Common};

struct Ctx {
    config: RunConfig,
    exec: Exec,
    manifest_override: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let Cli { common, command } = cli;
    let mut ctx = setup(&common)?;
    match command {
        Command::Gen { seed, docs, out } => {
            if let Some(s) = seed {
                ctx.config.gen.seed = s;
            }
            if let Some(n) = docs {
                ctx.config.gen.n_documents = n;
            }
            ctx.config.validate()?;
            cmd_gen(&ctx, &out, &common)
        }
        Command::Train { corpus, seeds, steps, out } => {
            apply_train_overrides(&mut ctx.config, seeds.as_deref(), steps)?;
            ctx.config.validate()?;
            cmd_train(&ctx, &corpus, &out)
        }
        Command::Extract { input, weights, label, naive, out } => {
            ctx.config.validate()?;
            cmd_extract(&ctx, &input, weights.as_deref(), label, naive, out.as_deref())
        }
        Command::Sections { input, dict, out } => {
            if dict.is_some() {
                ctx.config.dictionary = dict;
            }
            ctx.config.validate()?;
            cmd_sections(&ctx, &input, out.as_deref())
        }
        Command::Eval { corpus, weights, predictions, sections, dict, out } => {
            if dict.is_some() {
                ctx.config.dictionary = dict;
            }
            ctx.config.validate()?;
            let source = match (weights, predictions) {
                (Some(w), _) => Labels::Model(w),
                (None, Some(p)) => Labels::Predictions(p),
                (None, None) => return Err(CliError::Usage("eval needs --weights or --predictions".into())),
            };
            cmd_eval(&ctx, &corpus, source, sections, out.as_deref())
        }
        Command::Ablate { corpus, test, seeds, steps, out } => {
            apply_train_overrides(&mut ctx.config, seeds.as_deref(), steps)?;
            ctx.config.validate()?;
            cmd_ablate(&ctx, &corpus, &test, &out)
        }
        Command::Bench { corpus, weights, repeat, out } => {
            ctx.config.validate()?;
            cmd_bench(&ctx, &corpus, &weights, repeat, out.as_deref())
        }
    }
}

fn setup(common: &Common) -> Result<Ctx, CliError> {
    let config = RunConfig::load(common.config.as_deref())?;
    let exec = match common.jobs {
        1 => Exec::Sequential,
        0 => Exec::Parallel,
        n => {
            init_threads(n);
            Exec::Parallel
        }
    };
    Ok(Ctx {
        config,
        exec,
        manifest_override: common.manifest.clone(),
    })
}

fn apply_train_overrides(cfg: &mut RunConfig, seeds: Option<&str>, steps: Option<usize>) -> Result<(), CliError> {
    if let Some(s) = seeds {
        cfg.train.seeds = parse_seeds(s).map_err(CliError::Usage)?;
    }
    if let Some(n) = steps {
        cfg.train.steps = n;
        cfg.train.warmup_steps = cfg.train.warmup_steps.min(n.saturating_sub(1));
    }
    Ok(())
}

impl Ctx {
    /// Manifest goes to `--manifest`, else into `dir`, else the working directory.
    fn finish(&self, manifest: RunManifest, dir: Option<&Path>) -> Result<(), CliError> {
        let path = match (&self.manifest_override, dir) {
            (Some(p), _) => p.clone(),
            (None, Some(d)) => d.join("run_manifest.json"),
            (None, None) => PathBuf::from("run_manifest.json"),
        };
        manifest
            .finish(&path)
            .context(|| format!("writing {}", path.display()))
    }

    fn dictionary(&self, manifest: &mut RunManifest) -> Result<SectionDictionary, CliError> {
        match &self.config.dictionary {
            Some(p) => {
                let dict = SectionDictionary::load(p)?;
                manifest.input(p).context(|| format!("hashing {}", p.display()))?;
                Ok(dict)
            }
            None => Ok(SectionDictionary::default()),
        }
    }
}

fn write_file(path: &Path, bytes: &[u8], manifest: &mut RunManifest) -> Result<(), CliError> {
    fs::write(path, bytes).context(|| format!("writing {}", path.display()))?;
    manifest.artifact(path).context(|| format!("hashing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T, manifest: &mut RunManifest) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value).expect("report serializes");
    write_file(path, (json + "\n").as_bytes(), manifest)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).context(|| format!("creating {}", dir.display()))
}

/// Accepts a corpus directory (reads `corpus.jsonl`) or a JSONL file.
fn corpus_file(path: &Path) -> Result<PathBuf, CliError> {
    let file = if path.is_dir() { path.join("corpus.jsonl") } else { path.to_path_buf() };
    if !file.is_file() {
        return Err(CliError::Usage(format!("corpus not found: {}", file.display())));
    }
    Ok(file)
}

fn load_corpus(path: &Path, manifest: &mut RunManifest) -> Result<Vec<Document>, CliError> {
    let file = corpus_file(path)?;
    let docs = read_corpus(&file).map_err(|source| CliError::Schema {
        path: file.clone(),
        source,
    })?;
    manifest.input(&file).context(|| format!("hashing {}", file.display()))?;
    if docs.is_empty() {
        return Err(CliError::Usage(format!("{} holds no documents", file.display())));
    }
    Ok(docs)
}

fn load_model(path: &Path, manifest: &mut RunManifest) -> Result<Model, CliError> {
    let m = model::load(path)?;
    manifest.input(path).context(|| format!("hashing {}", path.display()))?;
    Ok(m)
}

/// PDFs of a directory sorted by file name.
fn pdf_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).context(|| format!("listing {}", dir.display()))? {
        let path = entry.context(|| format!("listing {}", dir.display()))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pdf")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

fn read_pdfs(paths: &[PathBuf], manifest: &mut RunManifest) -> Result<Vec<PdfInput>, CliError> {
    paths
        .iter()
        .map(|p| {
            let bytes = fs::read(p).context(|| format!("reading {}", p.display()))?;
            manifest.input(p).context(|| format!("hashing {}", p.display()))?;
            let doc_id = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok(PdfInput { doc_id, bytes })
        })
        .collect()
}

fn cmd_gen(ctx: &Ctx, out: &Path, common: &Common) -> Result<(), CliError> {
    let mut manifest = RunManifest::start("gen", &ctx.config);
    if let Some(c) = &common.config {
        manifest.input(c).context(|| format!("hashing {}", c.display()))?;
    }
    let resources = Resources::default();
    let mut corpus = generate_with(&ctx.config.gen, &resources, ctx.exec)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    write_corpus(&mut corpus, out, ctx.exec).context(|| format!("writing corpus to {}", out.display()))?;
    for g in &corpus.documents {
        if let Some(p) = &g.pdf_path {
            manifest.artifact(p).context(|| format!("hashing {}", p.display()))?;
        }
    }
    for name in ["corpus.jsonl", "sections_gold.jsonl", "body_gold.jsonl"] {
        let p = out.join(name);
        manifest.artifact(&p).context(|| format!("hashing {}", p.display()))?;
    }
    write_file(&out.join("config.toml"), ctx.config.to_toml().as_bytes(), &mut manifest)?;
    println!("wrote {} documents to {}", corpus.documents.len(), out.display());
    ctx.finish(manifest, Some(out))
}

#[derive(Serialize)]
struct SeedMetrics<'a> {
    seed: u64,
    final_loss: f64,
    dev: &'a edlx_core::evaluator::EvalReport,
}

fn cmd_train(ctx: &Ctx, corpus: &Path, out: &Path) -> Result<(), CliError> {
    let mut manifest = RunManifest::start("train", &ctx.config);
    let docs = load_corpus(corpus, &mut manifest)?;
    create_dir(out)?;
    let runs = train_multiseed(&docs, &ctx.config.model, &ctx.config.train, ctx.exec)?;
    let mut per_seed = Vec::new();
    for run in &runs.runs {
        let weights = out.join(format!("model_seed{}.edlx", run.seed));
        write_file(&weights, &model::to_bytes(&run.model), &mut manifest)?;
        let mut csv = Vec::new();
        write_loss_csv(&run.log, &mut csv).expect("writing to memory");
        write_file(&out.join(format!("loss_seed{}.csv", run.seed)), &csv, &mut manifest)?;
        per_seed.push(SeedMetrics {
            seed: run.seed,
            final_loss: run.log.last().map_or(f64::NAN, |l| l.loss),
            dev: &run.dev,
        });
        println!(
            "seed {}: dev micro-F1 {:.4}, body F1 {:.4} -> {}",
            run.seed,
            run.dev.micro_avg.f1,
            run.dev.body().f1,
            weights.display()
        );
    }
    #[derive(Serialize)]
    struct DevMetrics<'a> {
        runs: Vec<SeedMetrics<'a>>,
        mean: edlx_core::evaluator::AblationMetrics,
        std: edlx_core::evaluator::AblationMetrics,
    }
    write_json(
        &out.join("dev_metrics.json"),
        &DevMetrics {
            runs: per_seed,
            mean: runs.mean,
            std: runs.std,
        },
        &mut manifest,
    )?;
    write_file(&out.join("config.toml"), ctx.config.to_toml().as_bytes(), &mut manifest)?;
    println!(
        "mean over {} seeds: micro-F1 {:.4} (sd {:.4}), body F1 {:.4} (sd {:.4})",
        runs.runs.len(),
        runs.mean.micro_f1,
        runs.std.micro_f1,
        runs.mean.body_f1,
        runs.std.body_f1
    );
    ctx.finish(manifest, Some(out))
}

#[derive(Serialize)]
struct ExtractRecord {
    doc_id: String,
    #[serde(flatten)]
    extracted: ExtractedText,
}

#[derive(serde::Deserialize)]
struct ExtractRecordIn {
    doc_id: String,
    #[serde(flatten)]
    extracted: ExtractedText,
}

fn load_documents(ctx: &Ctx, input: &Path, manifest: &mut RunManifest) -> Result<Vec<Document>, CliError> {
    if input.extension().is_some_and(|e| e == "jsonl") {
        return load_corpus(input, manifest);
    }
    let paths = if input.is_dir() {
        pdf_files(input)?
    } else if input.is_file() {
        vec![input.to_path_buf()]
    } else {
        return Err(CliError::Usage(format!("input not found: {}", input.display())));
    };
    let pdfs = read_pdfs(&paths, manifest)?;
    let ingest = ctx.config.ingest;
    ctx.exec
        .map(&pdfs, |p| parse_pdf_with(&p.bytes, &p.doc_id, &ingest))
        .into_iter()
        .zip(&paths)
        .map(|(r, path)| {
            r.map_err(|source| CliError::Pdf {
                path: path.clone(),
                source,
            })
        })
        .collect()
}

fn cmd_extract(
    ctx: &Ctx,
    input: &Path,
    weights: Option<&Path>,
    label: LineLabel,
    naive: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let mut manifest = RunManifest::start("extract", &ctx.config);
    let model = match (naive, weights) {
        (true, _) => None,
        (false, Some(w)) => Some(load_model(w, &mut manifest)?),
        (false, None) => return Err(CliError::Usage("extract needs --weights unless --naive is set".into())),
    };
    let docs = load_documents(ctx, input, &mut manifest)?;
    let mask = ctx.config.mask;
    let records: Vec<ExtractRecord> = ctx.exec.map(&docs, |d| ExtractRecord {
        doc_id: d.doc_id.clone(),
        extracted: match &model {
            Some(m) => extract_document(m, d, label),
            None => naive_extract(d, &mask),
        },
    });
    match out {
        Some(dir) => {
            create_dir(dir)?;
            let mut jsonl = String::new();
            for r in &records {
                write_file(&dir.join(format!("{}.txt", r.doc_id)), r.extracted.text.as_bytes(), &mut manifest)?;
                jsonl.push_str(&serde_json::to_string(r).expect("record serializes"));
                jsonl.push('\n');
            }
            write_file(&dir.join("extraction.jsonl"), jsonl.as_bytes(), &mut manifest)?;
            println!("extracted {} documents to {}", records.len(), dir.display());
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = BufWriter::new(stdout.lock());
            let res = if let [only] = records.as_slice() {
                writeln!(w, "{}", only.extracted.text)
            } else {
                records.iter().try_for_each(|r| {
                    writeln!(w, "{}", serde_json::to_string(r).expect("record serializes"))
                })
            };
            res.and_then(|_| w.flush()).context(|| "writing stdout".into())?;
        }
    }
    ctx.finish(manifest, out)
}

#[derive(Serialize)]
struct SectionOut {
    #[serde(flatten)]
    span: SectionSpan,
    text: String,
}

#[derive(Serialize)]
struct SectionsRecord {
    doc_id: String,
    sections: Vec<SectionOut>,
}

fn with_text(text: &str, spans: Vec<SectionSpan>) -> Vec<SectionOut> {
    spans
        .into_iter()
        .map(|span| SectionOut {
            text: span_text(text, span.char_start, span.char_end),
            span,
        })
        .collect()
}

fn cmd_sections(ctx: &Ctx, input: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let mut manifest = RunManifest::start("sections", &ctx.config);
    let dict = ctx.dictionary(&mut manifest)?;
    let raw = fs::read_to_string(input).context(|| format!("reading {}", input.display()))?;
    manifest.input(input).context(|| format!("hashing {}", input.display()))?;
    let records = if input.extension().is_some_and(|e| e == "jsonl") {
        raw.lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                let r: ExtractRecordIn = serde_json::from_str(l).map_err(|e| CliError::Schema {
                    path: input.to_path_buf(),
                    source: edlx_core::jsonl::SchemaError::Json {
                        line: i + 1,
                        message: e.to_string(),
                    },
                })?;
                let spans = segment(&r.extracted, &dict);
                Ok(SectionsRecord {
                    sections: with_text(&r.extracted.text, spans),
                    doc_id: r.doc_id,
                })
            })
            .collect::<Result<Vec<_>, CliError>>()?
    } else {
        let doc_id = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        vec![SectionsRecord {
            sections: with_text(&raw, segment_text(&raw, &dict)),
            doc_id,
        }]
    };
    let mut text = String::new();
    for r in &records {
        text.push_str(&serde_json::to_string(r).expect("record serializes"));
        text.push('\n');
    }
    match out {
        Some(path) => {
            write_file(path, text.as_bytes(), &mut manifest)?;
            let mpath = manifest_sibling(path);
            let m = ctx.manifest_override.clone().unwrap_or(mpath);
            return manifest.finish(&m).context(|| format!("writing {}", m.display()));
        }
        None => print!("{text}"),
    }
    ctx.finish(manifest, None)
}

fn manifest_sibling(file: &Path) -> PathBuf {
    let mut name = file.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    file.with_file_name(name)
}

enum Labels {
    Model(PathBuf),
    Predictions(PathBuf),
}

fn cmd_eval(
    ctx: &Ctx,
    corpus: &Path,
    source: Labels,
    sections: bool,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let mut manifest = RunManifest::start("eval", &ctx.config);
    let docs = load_corpus(corpus, &mut manifest)?;
    let (model, predicted): (Option<Model>, HashMap<String, Vec<LineLabel>>) = match &source {
        Labels::Model(w) => (Some(load_model(w, &mut manifest)?), HashMap::new()),
        Labels::Predictions(p) => {
            let pred = load_corpus(p, &mut manifest)?;
            let mut map = HashMap::new();
            for d in pred {
                let labels: Option<Vec<LineLabel>> = d.labels().into_iter().collect();
                let labels = labels.ok_or_else(|| CliError::Usage(format!("prediction {} has unlabeled lines", d.doc_id)))?;
                map.insert(d.doc_id, labels);
            }
            if let Some(d) = docs.iter().find(|d| !map.contains_key(&d.doc_id)) {
                return Err(CliError::Usage(format!("no prediction for {}", d.doc_id)));
            }
            (None, map)
        }
    };
    let predict = |d: &Document| -> Vec<LineLabel> {
        match &model {
            Some(m) => m.predict(d),
            None => predicted[&d.doc_id].clone(),
        }
    };
    let report = evaluate(&docs, predict, ctx.exec)?;
    print!("{}", report.to_table());
    if let Some(dir) = out {
        create_dir(dir)?;
        write_json(&dir.join("eval.json"), &report, &mut manifest)?;
    }
    if sections {
        let dir = if corpus.is_dir() { corpus.to_path_buf() } else { corpus.parent().unwrap_or(Path::new(".")).to_path_buf() };
        let bodies_path = dir.join("body_gold.jsonl");
        let sections_path = dir.join("sections_gold.jsonl");
        let bodies = read_gold_bodies(&bodies_path).context(|| format!("reading {}", bodies_path.display()))?;
        let gold_sections = read_gold_sections(&sections_path).context(|| format!("reading {}", sections_path.display()))?;
        manifest.input(&bodies_path).context(|| "hashing gold bodies".into())?;
        manifest.input(&sections_path).context(|| "hashing gold sections".into())?;
        let body_of: HashMap<&str, &str> = bodies.iter().map(|b| (b.doc_id.as_str(), b.text.as_str())).collect();
        let mut by_doc: HashMap<&str, Vec<GoldSection>> = HashMap::new();
        for s in &gold_sections {
            by_doc.entry(s.doc_id.as_str()).or_default().push(s.clone());
        }
        let empty = Vec::new();
        let mut gold = Vec::with_capacity(docs.len());
        for d in &docs {
            let body_text = body_of
                .get(d.doc_id.as_str())
                .ok_or_else(|| CliError::Usage(format!("no gold body for {}", d.doc_id)))?;
            gold.push(SectionGold {
                doc: d,
                body_text,
                sections: by_doc.get(d.doc_id.as_str()).unwrap_or(&empty),
            });
        }
        let dict = ctx.dictionary(&mut manifest)?;
        let cmp = compare_section_extraction(&gold, predict, &ctx.config.mask, &dict, ctx.exec);
        print!("\n{}", cmp.to_table());
        if let Some(dir) = out {
            write_json(&dir.join("sections_eval.json"), &cmp, &mut manifest)?;
        }
    }
    ctx.finish(manifest, out)
}

fn cmd_ablate(ctx: &Ctx, corpus: &Path, test: &Path, out: &Path) -> Result<(), CliError> {
    let mut manifest = RunManifest::start("ablate", &ctx.config);
    let train_docs = load_corpus(corpus, &mut manifest)?;
    let test_docs = load_corpus(test, &mut manifest)?;
    create_dir(out)?;
    let report = run_ablations(
        &train_docs,
        &test_docs,
        &ctx.config.model,
        &ctx.config.train,
        ctx.exec,
        |_, _, _| {},
    )?;
    print!("{}", report.to_table());
    write_json(&out.join("ablation.json"), &report, &mut manifest)?;
    write_file(&out.join("config.toml"), ctx.config.to_toml().as_bytes(), &mut manifest)?;
    ctx.finish(manifest, Some(out))
}

fn cmd_bench(
    ctx: &Ctx,
    corpus: &Path,
    weights: &Path,
    repeat: usize,
    out: Option<&Path>,
) -> Result<(), CliError> {
    let mut manifest = RunManifest::start("bench", &ctx.config);
    let model = load_model(weights, &mut manifest)?;
    let paths = pdf_files(corpus)?;
    if paths.is_empty() {
        return Err(CliError::Usage(format!("no PDFs in {}", corpus.display())));
    }
    let inputs = read_pdfs(&paths, &mut manifest)?;
    let mut runs = Vec::new();
    for _ in 0..repeat.max(1) {
        let (report, _) = bench_extract(&model, &inputs, &ctx.config.ingest, ctx.exec).map_err(|source| CliError::Pdf {
            path: corpus.to_path_buf(),
            source,
        })?;
        print!("{}", report.to_table());
        runs.push(report);
    }
    #[derive(Serialize)]
    struct BenchOut<'a> {
        runs: &'a [edlx_core::pipeline::BenchReport],
    }
    match out {
        Some(path) => {
            write_json(path, &BenchOut { runs: &runs }, &mut manifest)?;
            let m = ctx.manifest_override.clone().unwrap_or_else(|| manifest_sibling(path));
            manifest.finish(&m).context(|| format!("writing {}", m.display()))
        }
        None => ctx.finish(manifest, None),
    }
}
