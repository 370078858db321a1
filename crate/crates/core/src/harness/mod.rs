//! Configuration, the synthetic corpus, training and the file-based
//! pipeline stages behind the command-line tool.

mod config;
mod eval;
mod pipeline;
mod synth;
mod train;

pub use config::{Config, Profile};
pub use eval::{evaluate, EvalReport, Prediction, RawOutput, TaskReport};
pub use pipeline::{
    build_data_stage, eval_stage, grad_check_stage, infer_stage, load_clip, load_model, parse_stage, read_predictions, sidecar, synth_stage,
    token_budget, train_stage, GradCheckSummary, SynthSummary, TokenBudget, ANNOTATIONS_FILE, CLIPS_DIR,
};
pub use synth::{
    detect_pattern, paint, pattern_name, render_video, synth_corpus, SynthEvent, SynthVideo, SyntheticCorpus, SyntheticSpec, NUM_PATTERNS,
};
pub use train::{greedy_accuracy, make_sample, query_ids, teacher_forced_accuracy, train, StopReason, TrainReport};

use crate::error::{Error, Result};

/// `T` timestamps at the centres of equal bins: `(i + 0.5)·duration / T`.
pub fn sample_frames(duration: f64, t: usize) -> Result<Vec<f64>> {
    if t == 0 {
        return Err(Error::Config("at least one frame is required".into()));
    }
    if !(duration.is_finite() && duration > 0.0) {
        return Err(Error::Domain(format!("duration must be positive, got {duration}")));
    }
    Ok((0..t).map(|i| (i as f64 + 0.5) * duration / t as f64).collect())
}
