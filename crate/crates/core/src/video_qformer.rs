//! Sliding video Q-Former: temporal fusion over windows of frames, token
//! budgeting, and the projection into the decoder's embedding space.

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{Linear, QFormer, QFormerConfig};
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowMode {
    #[default]
    Sliding,
    /// The whole video is a single window.
    Fixed,
}

impl std::str::FromStr for WindowMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sliding" => Ok(Self::Sliding),
            "fixed" => Ok(Self::Fixed),
            other => Err(Error::Config(format!("unknown window mode `{other}` (expected sliding or fixed)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlidingConfig {
    /// `L_W`, frames per window.
    pub window_len: usize,
    /// `S`, frames between window starts.
    pub stride: usize,
    /// `N_V`, tokens emitted per window.
    pub num_queries: usize,
    pub mode: WindowMode,
    /// Reject frame counts that are not a multiple of the stride.
    pub strict: bool,
}

impl SlidingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.stride == 0 || self.num_queries == 0 {
            return Err(Error::Config(format!(
                "window_len, stride and num_queries must be positive (got {}, {}, {})",
                self.window_len, self.stride, self.num_queries
            )));
        }
        Ok(())
    }
}

/// Frame-index ranges covered by each window.
pub fn make_windows(t: usize, cfg: &SlidingConfig) -> Result<Vec<Range<usize>>> {
    cfg.validate()?;
    if t == 0 {
        return Err(Error::Empty("video has no frames"));
    }
    match cfg.mode {
        WindowMode::Fixed => Ok(vec![0..t]),
        WindowMode::Sliding => {
            if cfg.strict && t % cfg.stride != 0 {
                return Err(Error::Config(format!(
                    "strict mode: {t} frames is not a multiple of stride {}",
                    cfg.stride
                )));
            }
            Ok((0..t)
                .step_by(cfg.stride)
                .map(|start| start..start + cfg.window_len.min(t - start))
                .collect())
        }
    }
}

/// Number of video tokens the configuration produces for `t` frames.
pub fn token_count(t: usize, cfg: &SlidingConfig) -> Result<usize> {
    Ok(make_windows(t, cfg)?.len() * cfg.num_queries)
}

/// Original visual tokens divided by final video tokens: `T·N_P/N_V` for a
/// fixed token set, `S·N_P/N_V` per window when sliding.
pub fn compression_rate(t: usize, n_p: usize, n_v: usize, stride: usize, mode: WindowMode) -> Result<f64> {
    if t == 0 || n_p == 0 || n_v == 0 || stride == 0 {
        return Err(Error::Domain(format!(
            "compression rate needs positive arguments (T={t}, N_P={n_p}, N_V={n_v}, S={stride})"
        )));
    }
    let frames = match mode {
        WindowMode::Fixed => t,
        WindowMode::Sliding => stride,
    };
    Ok((frames * n_p) as f64 / n_v as f64)
}

/// Compressed visual tokens `X_v`, ordered by window then query.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTokens {
    pub tokens: Tensor,
    pub window_index: Vec<usize>,
}

impl VideoTokens {
    pub fn len(&self) -> usize {
        self.window_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window_index.is_empty()
    }

    pub fn num_windows(&self) -> usize {
        self.window_index.last().map_or(0, |w| w + 1)
    }

    /// No visual input; the decoder then runs as a plain language model.
    pub fn empty(dim: usize) -> Self {
        Self {
            tokens: Tensor::zeros(&[0, dim]),
            window_index: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoQFormerConfig {
    pub sliding: SlidingConfig,
    pub dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub llm_dim: usize,
    /// Size of the frame-position table; bounds the frames in one window.
    pub max_window_frames: usize,
}

#[derive(Debug, Clone)]
pub struct VideoQFormer {
    pub cfg: VideoQFormerConfig,
    frame_pos: ParamId,
    qformer: QFormer,
    proj: Linear,
}

impl VideoQFormer {
    /// Registers `video_qformer.*` and the projection `proj.*`.
    pub fn new<R: Rng>(store: &mut ParamStore, cfg: VideoQFormerConfig, rng: &mut R) -> Result<Self> {
        cfg.sliding.validate()?;
        let frame_pos = store.normal("video_qformer.frame_pos", &[cfg.max_window_frames, cfg.dim], 0.1, rng);
        let qformer = QFormer::new(
            store,
            "video_qformer",
            QFormerConfig {
                dim: cfg.dim,
                context_dim: cfg.dim,
                heads: cfg.heads,
                layers: cfg.layers,
                ffn_dim: cfg.dim * 2,
                num_queries: cfg.sliding.num_queries,
            },
            rng,
        )?;
        let proj = Linear::new(store, "proj", cfg.dim, cfg.llm_dim, true, rng);
        Ok(Self {
            cfg,
            frame_pos,
            qformer,
            proj,
        })
    }

    /// Fuses the frame tokens of one window (each `N_I × D_Q`) into `N_V`
    /// tokens of width `D_Q`.
    pub fn fuse_window(&self, g: &mut Graph, store: &ParamStore, frames: &[Var]) -> Result<Var> {
        if frames.is_empty() {
            return Err(Error::Empty("window has no frames"));
        }
        if frames.len() > self.cfg.max_window_frames {
            return Err(Error::Config(format!(
                "window of {} frames exceeds the {} learned frame positions",
                frames.len(),
                self.cfg.max_window_frames
            )));
        }
        let mut ids = Vec::new();
        for (j, &f) in frames.iter().enumerate() {
            ids.extend(std::iter::repeat(j).take(g.value(f).rows()));
        }
        let context = g.concat_rows(frames)?;
        let table = g.param(store, self.frame_pos);
        let pos = g.gather(table, &ids)?;
        let context = g.add(context, pos)?;
        self.qformer.forward(g, store, context, None)
    }

    /// Windows the encoded frames, fuses each window and projects to the
    /// decoder width. Returns the `M × D_LLM` token matrix and each row's
    /// window index.
    pub fn compress(&self, g: &mut Graph, store: &ParamStore, encoded: &[Var]) -> Result<(Var, Vec<usize>)> {
        let windows = make_windows(encoded.len(), &self.cfg.sliding)?;
        let mut fused = Vec::with_capacity(windows.len());
        let mut window_index = Vec::new();
        for (w, range) in windows.into_iter().enumerate() {
            fused.push(self.fuse_window(g, store, &encoded[range])?);
            window_index.extend(std::iter::repeat(w).take(self.cfg.sliding.num_queries));
        }
        let all = if fused.len() == 1 { fused[0] } else { g.concat_rows(&fused)? };
        let tokens = self.proj.forward(g, store, all)?;
        Ok((tokens, window_index))
    }

    pub fn compress_values(&self, store: &ParamStore, encoded: &[Tensor]) -> Result<VideoTokens> {
        let mut g = Graph::new();
        let vars: Vec<Var> = encoded.iter().map(|t| g.input(t.clone())).collect();
        let (tokens, window_index) = self.compress(&mut g, store, &vars)?;
        Ok(VideoTokens {
            tokens: g.value(tokens).clone(),
            window_index,
        })
    }
}
