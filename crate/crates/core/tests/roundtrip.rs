mod common;

use edlx_core::corpus::{emit_pdf, generate, GenConfig};
use edlx_core::document::LineLabel;
use edlx_core::extractor::aggregate;
use edlx_core::ingest::parse_pdf;

#[test]
fn generated_pdfs_parse_back_exactly() {
    let m = generate(&GenConfig {
        seed: 5,
        n_documents: 40,
        ..GenConfig::default()
    })
    .unwrap();
    for g in &m.documents {
        let parsed = parse_pdf(&emit_pdf(&g.doc)).unwrap();
        assert_eq!(common::recovered_lines(&g.doc, &parsed), g.doc.line_count(), "{}", g.doc.doc_id);
        let labeled = common::transfer_labels(&g.doc, &parsed).unwrap();
        assert_eq!(aggregate(&labeled, LineLabel::Body).text, g.body_text);
    }
}
