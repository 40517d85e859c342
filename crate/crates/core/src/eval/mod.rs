//! Countermeasure metrics and the protocol and score text formats.

mod io;
mod metrics;

pub use io::{
    format_scores, join_scores, parse_protocol, parse_protocol_str, parse_scores_str, read_scores, write_scores, Label,
    ScoreRecord, TrialRecord, UtteranceId,
};
pub use metrics::{compute_eer, compute_min_dcf, roc_points, sweep_thresholds, CostModel, Eer, MinDcf, RocPoint};
