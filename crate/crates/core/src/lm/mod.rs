//! The toy causal decoder that stands in for the language model.

mod decoder;
mod tokenizer;

pub use decoder::{argmax, Decoder, DecoderConfig, SequenceLayout};
pub use tokenizer::Tokenizer;
