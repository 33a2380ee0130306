//! Host-side companion to `fgvp-core`: image files, dataset and report
//! formats, scorer/segmenter backends, the on-disk cache and the benchmark
//! harness behind the `fgvp` binary.

pub mod backends;
pub mod cache;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod fsutil;
pub mod imageio;
pub mod report;
pub mod synthetic;
pub mod wire;

pub use config::{Matching, PostChain, RunConfig, SegmenterChoice};
pub use dataset::{load_part_jsonl, load_rec_jsonl, PartRecord, RecRecord};
pub use eval::{evaluate_partdet, evaluate_rec};
pub use report::EvalReport;
