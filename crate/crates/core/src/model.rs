//! The full pipeline: frame encoder, sliding video Q-Former, projection and
//! decoder, plus the training step.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::frame_encoder::{FrameEncoder, FrameEncoderConfig};
use crate::lm::{Decoder, DecoderConfig, Tokenizer};
use crate::optim::{AdamW, AdamWConfig, LrSchedule};
use crate::param::ParamStore;
use crate::video::VideoClip;
use crate::video_qformer::{SlidingConfig, VideoQFormer, VideoQFormerConfig, VideoTokens, WindowMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub frame: FrameEncoderConfig,
    pub video: VideoQFormerConfig,
    pub decoder: DecoderConfig,
}

impl ModelConfig {
    /// Desk-scale defaults: 28×28 frames, 8 frames in windows of 4.
    pub fn toy() -> Self {
        Self {
            frame: FrameEncoderConfig::default(),
            video: VideoQFormerConfig {
                sliding: SlidingConfig {
                    window_len: 4,
                    stride: 4,
                    num_queries: 4,
                    mode: WindowMode::Sliding,
                    strict: false,
                },
                dim: 64,
                layers: 2,
                heads: 2,
                llm_dim: 64,
                max_window_frames: 32,
            },
            decoder: DecoderConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame.qformer_dim != self.video.dim {
            return Err(Error::Config(format!(
                "image Q-Former width {} differs from video Q-Former width {}",
                self.frame.qformer_dim, self.video.dim
            )));
        }
        if self.video.llm_dim != self.decoder.dim {
            return Err(Error::Config(format!(
                "projection width {} differs from decoder width {}",
                self.video.llm_dim, self.decoder.dim
            )));
        }
        self.frame.num_patches()?;
        self.video.sliding.validate()
    }
}

/// One training example: a clip, the tokenized instruction and answer.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub clip: VideoClip,
    pub query: Vec<usize>,
    pub answer: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub cfg: ModelConfig,
    pub frame_encoder: FrameEncoder,
    pub video_qformer: VideoQFormer,
    pub decoder: Decoder,
}

impl Model {
    /// Builds every module and sets the trainable split: the patch embedding
    /// and self-attention stack (`vit.*`) and the decoder base (`llm.*`) are
    /// frozen; the Q-Formers, the projection and the LoRA adapters train.
    pub fn new<R: Rng>(cfg: ModelConfig, rng: &mut R) -> Result<(Self, ParamStore)> {
        cfg.validate()?;
        let mut store = ParamStore::new();
        let frame_encoder = FrameEncoder::new(&mut store, cfg.frame, rng)?;
        store.set_trainable("vit.", false);
        let video_qformer = VideoQFormer::new(&mut store, cfg.video, rng)?;
        let decoder = Decoder::new(&mut store, cfg.decoder, rng)?;
        Ok((
            Self {
                cfg,
                frame_encoder,
                video_qformer,
                decoder,
            },
            store,
        ))
    }

    /// `X_v` for a clip, recorded on `g`.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, clip: &VideoClip) -> Result<Var> {
        let frames = self.frame_encoder.encode_video(g, store, clip)?;
        Ok(self.video_qformer.compress(g, store, &frames)?.0)
    }

    pub fn video_tokens(&self, store: &ParamStore, clip: &VideoClip) -> Result<VideoTokens> {
        let mut g = Graph::new();
        let frames = self.frame_encoder.encode_video(&mut g, store, clip)?;
        let (tokens, window_index) = self.video_qformer.compress(&mut g, store, &frames)?;
        Ok(VideoTokens {
            tokens: g.value(tokens).clone(),
            window_index,
        })
    }

    pub fn sample_loss(&self, g: &mut Graph, store: &ParamStore, sample: &Sample) -> Result<Var> {
        let video = self.encode(g, store, &sample.clip)?;
        let logits = self.decoder.forward(g, store, Some(video), &sample.query, &sample.answer)?;
        self.decoder.loss(g, logits, &sample.answer)
    }

    /// Mean of the per-sample losses.
    pub fn batch_loss(&self, g: &mut Graph, store: &ParamStore, batch: &[Sample]) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::Empty("training batch"));
        }
        let mut total = self.sample_loss(g, store, &batch[0])?;
        for s in &batch[1..] {
            let l = self.sample_loss(g, store, s)?;
            total = g.add(total, l)?;
        }
        Ok(g.scale(total, 1.0 / batch.len() as f64))
    }

    pub fn greedy_decode(&self, store: &ParamStore, clip: &VideoClip, query: &[usize], max_new_tokens: usize) -> Result<Vec<usize>> {
        let video = self.video_tokens(store, clip)?;
        self.decoder.greedy_decode(store, Some(&video.tokens), query, max_new_tokens)
    }

    pub fn generate(&self, store: &ParamStore, clip: &VideoClip, query: &str, max_new_tokens: usize) -> Result<String> {
        let ids = Tokenizer.tokenize(query)?;
        Ok(Tokenizer.detokenize(&self.greedy_decode(store, clip, &ids, max_new_tokens)?))
    }

    pub fn merge_lora(&mut self, store: &mut ParamStore) -> Result<()> {
        self.decoder.merge_lora(store)
    }
}

/// Optimizer state plus the learning-rate schedule.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub optimizer: AdamW,
    pub schedule: LrSchedule,
    pub step: usize,
}

impl Trainer {
    pub fn new(store: &ParamStore, adam: AdamWConfig, schedule: LrSchedule) -> Self {
        Self {
            optimizer: AdamW::new(adam, store),
            schedule,
            step: 0,
        }
    }

    /// One AdamW update on `batch`; returns the loss before the update.
    pub fn train_step(&mut self, model: &Model, store: &mut ParamStore, batch: &[Sample]) -> Result<f64> {
        store.zero_grads();
        let mut g = Graph::new();
        let loss = model.batch_loss(&mut g, store, batch)?;
        if let Some((node, op)) = g.first_non_finite() {
            return Err(Error::NonFinite { op, node });
        }
        g.backward(loss, store)?;
        if let Some(p) = store.iter().find(|(_, p)| p.trainable && !p.grad.is_finite()) {
            return Err(Error::Domain(format!("non-finite gradient in {}", p.1.name)));
        }
        let lr = self.schedule.at(self.step);
        self.optimizer.step(store, lr);
        self.step += 1;
        Ok(g.scalar(loss))
    }
}

/// Fraction of positions where the decoded ids agree with `answer` followed
/// by EOS. Missing or extra tokens count as mismatches.
pub fn answer_token_accuracy(decoded: &[usize], answer: &[usize]) -> f64 {
    let target: Vec<usize> = answer.iter().copied().chain([Tokenizer::EOS]).collect();
    let got: Vec<usize> = decoded.iter().copied().chain([Tokenizer::EOS]).collect();
    let hits = target.iter().zip(&got).filter(|(a, b)| a == b).count();
    hits as f64 / target.len().max(got.len()) as f64
}
