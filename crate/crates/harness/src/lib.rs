//! Dataset evaluation and ablation protocols for `geoseg`.
//!
//! A dataset is a directory with `images/`, `scribbles/` and `gt/`
//! subdirectories whose files are matched by stem. [`evaluate`] segments
//! every entry, scores it against ground truth and aggregates the scores;
//! the `ablate_*` functions rerun it with one setting varied.

pub mod dataset;
mod error;
pub mod eval;
pub mod synthetic;

pub use dataset::{index_dataset, write_dataset, DatasetEntry, DatasetIndex};
pub use error::{HarnessError, Result};
pub use eval::{
    ablate_fbs, ablate_superpixels, ablation_csv, evaluate, evaluate_source, EvalOptions, EvalReport, EvalSource, ImageResult,
    LoadedSample,
};
