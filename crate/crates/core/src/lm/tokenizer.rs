use crate::error::{Error, Result};

/// Character-level tokenizer over the 128 ASCII code points plus four
/// special tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tokenizer;

impl Tokenizer {
    pub const BOS: usize = 128;
    pub const EOS: usize = 129;
    pub const PAD: usize = 130;
    pub const SEP: usize = 131;
    pub const VOCAB_SIZE: usize = 132;

    pub fn new() -> Self {
        Tokenizer
    }

    pub fn vocab_size(&self) -> usize {
        Self::VOCAB_SIZE
    }

    pub fn tokenize(&self, text: &str) -> Result<Vec<usize>> {
        text.bytes()
            .enumerate()
            .map(|(offset, byte)| {
                if byte.is_ascii() {
                    Ok(byte as usize)
                } else {
                    Err(Error::Encoding { offset, byte })
                }
            })
            .collect()
    }

    /// Special tokens contribute nothing to the text.
    pub fn detokenize(&self, ids: &[usize]) -> String {
        ids.iter().filter(|&&id| id < 128).map(|&id| id as u8 as char).collect()
    }

    pub fn token_str(&self, id: usize) -> Option<String> {
        match id {
            0..=127 => Some((id as u8 as char).to_string()),
            Self::BOS => Some("<bos>".into()),
            Self::EOS => Some("<eos>".into()),
            Self::PAD => Some("<pad>".into()),
            Self::SEP => Some("<sep>".into()),
            _ => None,
        }
    }

    pub fn id_of(&self, token: &str) -> Option<usize> {
        match token {
            "<bos>" => Some(Self::BOS),
            "<eos>" => Some(Self::EOS),
            "<pad>" => Some(Self::PAD),
            "<sep>" => Some(Self::SEP),
            s if s.len() == 1 && s.is_ascii() => Some(s.as_bytes()[0] as usize),
            _ => None,
        }
    }
}
