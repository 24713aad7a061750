//! Node semantics: code segments and their features, code–user co-attention,
//! and structural aggregation over repository hierarchies.

mod features;
mod fusion;
mod gat;
mod history;
mod segment;
mod structure;
mod tfidf;

pub use features::{
    import_segment_features, CodeSegmentMatrix, SegmentFeatures, FEATURE_MAGIC, FEATURE_VERSION,
};
pub use fusion::{
    coattention_fuse, coattention_fuse_batched, Fused, FusionParams, FusionVars, FusionWeights,
};
pub use gat::{
    structural_aggregate, GatLayer, GatLayerVars, GatParams, GatWeights, ATTENTION_SLOPE,
    GAT_LAYERS,
};
pub use history::{sample_historical_users, HistoricalUsers};
pub use segment::{segment_code, tokenize};
pub use structure::{
    build_structure_forest, build_structure_graph, encode_directories, encode_repositories,
    encode_structure_features, split_name_words, StructureFeatures, StructureForest,
    StructureGraph, OWNER_BUCKETS,
};
pub use tfidf::{encode_segments_tfidf, Vocabulary};
