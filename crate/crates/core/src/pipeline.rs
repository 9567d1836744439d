//! End-to-end extraction: parse, classify, aggregate.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::document::{Document, LineLabel};
use crate::exec::Exec;
use crate::extractor::{aggregate, ExtractedText};
use crate::ingest::{parse_pdf_with, IngestConfig, IngestError};
use crate::model::Model;

/// Copy of `doc` with every line labeled by `model`.
pub fn classify(model: &Model, doc: &Document) -> Document {
    let mut out = doc.clone();
    out.set_labels(&model.predict(doc));
    out
}

/// Classifies `doc` and joins the lines predicted as `label`.
pub fn extract_document(model: &Model, doc: &Document, label: LineLabel) -> ExtractedText {
    aggregate(&classify(model, doc), label)
}

pub fn extract_pdf(
    model: &Model,
    bytes: &[u8],
    doc_id: &str,
    label: LineLabel,
    ingest: &IngestConfig,
) -> Result<ExtractedText, IngestError> {
    let doc = parse_pdf_with(bytes, doc_id, ingest)?;
    Ok(extract_document(model, &doc, label))
}

/// One PDF to benchmark: document id and file bytes.
pub struct PdfInput {
    pub doc_id: String,
    pub bytes: Vec<u8>,
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimes {
    pub parse: f64,
    pub classify: f64,
    pub aggregate: f64,
}

impl StageTimes {
    pub fn sum(&self) -> f64 {
        self.parse + self.classify + self.aggregate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub documents: usize,
    pub lines: usize,
    pub parallel: bool,
    pub param_count: usize,
    pub total_seconds: f64,
    pub documents_per_second: f64,
    pub stages: StageTimes,
}

impl BenchReport {
    pub fn to_table(&self) -> String {
        format!(
            "documents        {}\nlines            {}\nparameters       {}\nparallel         {}\n\
             parse            {:.3} s\nclassify         {:.3} s\naggregate        {:.3} s\n\
             total            {:.3} s\nthroughput       {:.1} docs/s\n",
            self.documents,
            self.lines,
            self.param_count,
            self.parallel,
            self.stages.parse,
            self.stages.classify,
            self.stages.aggregate,
            self.total_seconds,
            self.documents_per_second,
        )
    }
}

/// Runs each stage over all documents before starting the next, so the
/// stage timings partition the total in both execution modes.
pub fn bench_extract(
    model: &Model,
    inputs: &[PdfInput],
    ingest: &IngestConfig,
    exec: Exec,
) -> Result<(BenchReport, Vec<ExtractedText>), IngestError> {
    let start = Instant::now();
    let docs = exec
        .map(inputs, |p| parse_pdf_with(&p.bytes, &p.doc_id, ingest))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let parsed = Instant::now();
    let labeled = exec.map(&docs, |d| classify(model, d));
    let classified = Instant::now();
    let texts = exec.map(&labeled, |d| aggregate(d, LineLabel::Body));
    let done = Instant::now();
    let total_seconds = (done - start).as_secs_f64();
    let report = BenchReport {
        documents: inputs.len(),
        lines: docs.iter().map(Document::line_count).sum(),
        parallel: exec.is_parallel(),
        param_count: model.param_count(),
        total_seconds,
        documents_per_second: inputs.len() as f64 / total_seconds.max(1e-9),
        stages: StageTimes {
            parse: (parsed - start).as_secs_f64(),
            classify: (classified - parsed).as_secs_f64(),
            aggregate: (done - classified).as_secs_f64(),
        },
    };
    Ok((report, texts))
}
