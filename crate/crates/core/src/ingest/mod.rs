//! Loading, validation and splitting of all tabular inputs.
//!
//! Every loader validates its file against a fixed schema (exact header,
//! typed cells, dataset invariants) and reports the first offending row and
//! column. Loaded datasets are immutable; all downstream analytics borrow
//! them read-only.

mod events;
mod multiview;
mod ratings;
mod split;
mod study;
pub mod table;
mod text;

pub use events::{load_events, write_events, EventKind, EventLog, EventRecord};
pub use multiview::{load_multiview, write_multiview, MultiViewDataset, ViewPartition};
pub use ratings::{
    load_context, load_privacy, load_ratings, write_context, write_privacy, write_ratings,
    ContextQuads, IdMap, PrivacyMap, RatingsTriples,
};
pub use split::split_indices;
pub use study::{load_study, write_study, StudyTable};
pub use table::{ColumnKind, TableSchema};
pub use text::{load_app_docs, load_corpus, write_app_docs, write_corpus, AppDocs, TokenCorpus};
