//! Retrieval index, metrics and evaluation protocols.

mod index;
mod manifest;
mod metrics;
mod protocols;

pub use index::{build_index, rank, IndexEntry, IndexItem, RetrievalIndex, ScoredId, INDEX_VERSION};
pub use manifest::{parse_manifest, read_manifest, ManifestRow};
pub use metrics::{auc_roc, balanced_accuracy, mean_std, mrr, random_assignment_accuracy, EvalReport, QueryDetail};
pub use protocols::{
    object_context_accuracy, recognition_from_features, recognition_splits, ContextPrompt, ObjectContextReport,
    ParentSplitPrompt, RecognitionReport, RecognitionSets,
};
