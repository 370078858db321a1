//! Timestamp-aware video-language modelling at desk scale: a small autograd
//! engine, the frame encoder and sliding video Q-Former, a toy decoder with
//! LoRA, the instruction-data builder, a response parser and the temporal
//! localization metrics.

pub mod autograd;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod frame_encoder;
pub mod gradcheck;
pub mod harness;
pub mod lm;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod optim;
pub mod param;
pub mod parser;
pub mod segment;
pub mod tensor;
pub mod video;
pub mod video_qformer;

pub use error::{Error, Result};
