//! Model assembly, chunked utterance scoring, score fusion and checkpoints.

mod aasist;
pub mod checkpoint;
mod config;
mod scoring;

pub use aasist::{
    aggregate_branches, readout, Aasist3Model, Aggregate, Branch, BranchStages, FeatureGraphs, BONAFIDE_CLASS,
    NUM_CLASSES,
};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_expecting, save_checkpoint, CheckpointError, CHECKPOINT_VERSION};
pub use config::{FrontendConfig, GraphConfig, InferenceConfig, ModelConfig, ReadoutConfig, StackCombine};
pub use scoring::{fuse_scores, score_utterance, utterance_chunks};
