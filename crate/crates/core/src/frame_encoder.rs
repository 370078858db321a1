//! Timestamp-aware frame encoder.
//!
//! Each frame is cut into `P×P` patches, embedded, passed through a small
//! self-attention stack, and then distilled by an image Q-Former into `N_I`
//! tokens. The frame's sampling time, rendered as a sentence and tokenized
//! with the shared character tokenizer, joins the Q-Former's learnable
//! queries in self-attention. Cross-attention keys and values come from the
//! frame tokens only.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::lm::Tokenizer;
use crate::nn::{add_positions, input_matrix, EncoderLayer, LayerNorm, Linear, QFormer, QFormerConfig};
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;
use crate::video::{Frame, VideoClip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimestampMode {
    #[default]
    On,
    /// Ablation: the Q-Former sees no timestamp tokens at all.
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameEncoderConfig {
    pub height: usize,
    pub width: usize,
    pub patch_size: usize,
    /// Width of the patch tokens (`D_enc`).
    pub enc_dim: usize,
    pub vit_layers: usize,
    pub vit_heads: usize,
    /// Q-Former hidden size (`D_Q`).
    pub qformer_dim: usize,
    pub qformer_layers: usize,
    pub qformer_heads: usize,
    /// Visual tokens per frame (`N_I`).
    pub num_queries: usize,
    pub max_timestamp_tokens: usize,
    pub timestamps: TimestampMode,
}

impl Default for FrameEncoderConfig {
    fn default() -> Self {
        Self {
            height: 28,
            width: 28,
            patch_size: 14,
            enc_dim: 64,
            vit_layers: 1,
            vit_heads: 2,
            qformer_dim: 64,
            qformer_layers: 2,
            qformer_heads: 2,
            num_queries: 8,
            max_timestamp_tokens: 48,
            timestamps: TimestampMode::On,
        }
    }
}

impl FrameEncoderConfig {
    /// Patches per frame (`N_P`).
    pub fn num_patches(&self) -> Result<usize> {
        num_patches(self.height, self.width, self.patch_size)
    }
}

pub fn num_patches(height: usize, width: usize, patch: usize) -> Result<usize> {
    if patch == 0 || height % patch != 0 || width % patch != 0 {
        return Err(Error::Config(format!(
            "frame {height}x{width} is not divisible into {patch}x{patch} patches"
        )));
    }
    Ok((height / patch) * (width / patch))
}

/// Renders a sampling time the way the frame encoder is conditioned on it:
/// integral seconds without a decimal point, anything else with one decimal.
pub fn render_timestamp(t: f64) -> Result<String> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::Domain(format!("timestamp {t} must be a finite non-negative number")));
    }
    let num = if t.fract() == 0.0 {
        format!("{}", t as u64)
    } else {
        format!("{t:.1}")
    };
    Ok(format!("This frame is sampled at {num}s."))
}

/// Patch embeddings of one frame, `N_P × D_enc`.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePatchTokens {
    pub tokens: Tensor,
}

impl FramePatchTokens {
    pub fn num_patches(&self) -> usize {
        self.tokens.rows()
    }
}

#[derive(Debug, Clone)]
pub struct FrameEncoder {
    pub cfg: FrameEncoderConfig,
    patch_proj: Linear,
    patch_pos: ParamId,
    vit: Vec<EncoderLayer>,
    vit_ln: LayerNorm,
    text_emb: ParamId,
    text_pos: ParamId,
    qformer: QFormer,
    tokenizer: Tokenizer,
}

impl FrameEncoder {
    /// Parameters are registered under `vit.*` (patch embedding and
    /// self-attention stack) and `image_qformer.*`.
    pub fn new<R: Rng>(store: &mut ParamStore, cfg: FrameEncoderConfig, rng: &mut R) -> Result<Self> {
        let n_p = cfg.num_patches()?;
        let patch_dim = cfg.patch_size * cfg.patch_size * 3;
        let tokenizer = Tokenizer;
        let patch_proj = Linear::new(store, "vit.patch", patch_dim, cfg.enc_dim, true, rng);
        let patch_pos = store.normal("vit.pos", &[n_p, cfg.enc_dim], 0.1, rng);
        let vit = (0..cfg.vit_layers)
            .map(|l| EncoderLayer::new(store, &format!("vit.layer{l}"), cfg.enc_dim, cfg.vit_heads, cfg.enc_dim * 2, rng))
            .collect::<Result<_>>()?;
        let vit_ln = LayerNorm::new(store, "vit.ln", cfg.enc_dim);
        let text_emb = store.normal("image_qformer.text_emb", &[tokenizer.vocab_size(), cfg.qformer_dim], 0.5, rng);
        let text_pos = store.normal("image_qformer.text_pos", &[cfg.max_timestamp_tokens, cfg.qformer_dim], 0.1, rng);
        let qformer = QFormer::new(
            store,
            "image_qformer",
            QFormerConfig {
                dim: cfg.qformer_dim,
                context_dim: cfg.enc_dim,
                heads: cfg.qformer_heads,
                layers: cfg.qformer_layers,
                ffn_dim: cfg.qformer_dim * 2,
                num_queries: cfg.num_queries,
            },
            rng,
        )?;
        Ok(Self {
            cfg,
            patch_proj,
            patch_pos,
            vit,
            vit_ln,
            text_emb,
            text_pos,
            qformer,
            tokenizer,
        })
    }

    fn patch_matrix(&self, frame: &Frame) -> Result<(usize, Vec<f64>)> {
        let p = self.cfg.patch_size;
        let n_p = num_patches(frame.height, frame.width, p)?;
        let mut data = Vec::with_capacity(n_p * p * p * 3);
        for py in 0..frame.height / p {
            for px in 0..frame.width / p {
                for dy in 0..p {
                    for dx in 0..p {
                        data.extend(frame.pixel(py * p + dy, px * p + dx).iter().map(|&v| v as f64));
                    }
                }
            }
        }
        Ok((n_p, data))
    }

    /// Linear patch embedding recorded on `g`.
    pub fn patch_embed_var(&self, g: &mut Graph, store: &ParamStore, frame: &Frame) -> Result<Var> {
        let (n_p, data) = self.patch_matrix(frame)?;
        let x = input_matrix(g, n_p, self.cfg.patch_size * self.cfg.patch_size * 3, data)?;
        self.patch_proj.forward(g, store, x)
    }

    pub fn patch_embed(&self, store: &ParamStore, frame: &Frame) -> Result<FramePatchTokens> {
        let mut g = Graph::new();
        let v = self.patch_embed_var(&mut g, store, frame)?;
        Ok(FramePatchTokens {
            tokens: g.value(v).clone(),
        })
    }

    /// Runs the self-attention stack and the timestamp-conditioned Q-Former
    /// over one frame's patch tokens. Returns `N_I × D_Q`.
    pub fn encode_frame(&self, g: &mut Graph, store: &ParamStore, patch_tokens: Var, timestamp_text: &str) -> Result<Var> {
        let n_p = g.value(patch_tokens).rows();
        let expected = self.cfg.num_patches()?;
        if n_p != expected {
            return Err(Error::shape("encode_frame", &[n_p], &[expected]));
        }
        let mut h = add_positions(g, store, patch_tokens, self.patch_pos, 0)?;
        for layer in &self.vit {
            h = layer.forward(g, store, h, false)?;
        }
        let frame_tokens = self.vit_ln.forward(g, store, h)?;

        let condition = match self.cfg.timestamps {
            TimestampMode::Off => None,
            TimestampMode::On => {
                let ids = self.tokenizer.tokenize(timestamp_text)?;
                if ids.is_empty() {
                    return Err(Error::Domain("timestamp text produced no tokens".into()));
                }
                if ids.len() > self.cfg.max_timestamp_tokens {
                    return Err(Error::Config(format!(
                        "timestamp text has {} tokens, limit is {}",
                        ids.len(),
                        self.cfg.max_timestamp_tokens
                    )));
                }
                let table = g.param(store, self.text_emb);
                let emb = g.gather(table, &ids)?;
                Some(add_positions(g, store, emb, self.text_pos, 0)?)
            }
        };
        self.qformer.forward(g, store, frame_tokens, condition)
    }

    /// Encodes every frame independently; element `i` depends only on frame
    /// `i` and timestamp `i`.
    pub fn encode_video(&self, g: &mut Graph, store: &ParamStore, clip: &VideoClip) -> Result<Vec<Var>> {
        clip.validate()?;
        clip.frames
            .iter()
            .zip(&clip.timestamps)
            .map(|(frame, &t)| {
                let patches = self.patch_embed_var(g, store, frame)?;
                self.encode_frame(g, store, patches, &render_timestamp(t)?)
            })
            .collect()
    }

    /// Convenience wrapper returning plain tensors, `T` entries of `N_I × D_Q`.
    pub fn encode_video_values(&self, store: &ParamStore, clip: &VideoClip) -> Result<Vec<Tensor>> {
        let mut g = Graph::new();
        let vars = self.encode_video(&mut g, store, clip)?;
        Ok(vars.into_iter().map(|v| g.value(v).clone()).collect())
    }
}
