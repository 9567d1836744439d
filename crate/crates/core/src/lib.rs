pub mod align;
pub mod corpus;
pub mod document;
pub mod evaluator;
pub mod exec;
pub mod extractor;
pub mod features;
pub mod ingest;
pub mod jsonl;
pub mod model;
pub mod pipeline;
pub mod sections;
pub mod tensor;
pub mod trainer;
