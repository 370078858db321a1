use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::Task;
use crate::error::{Error, Result};
use crate::frame_encoder::{FrameEncoderConfig, TimestampMode};
use crate::lm::{DecoderConfig, Tokenizer};
use crate::model::ModelConfig;
use crate::optim::{AdamWConfig, LrSchedule};
use crate::video_qformer::{SlidingConfig, VideoQFormerConfig, WindowMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// 28×28 frames and 64-wide modules; trains in minutes on one core.
    Toy,
    /// The published instruction-tuning hyper-parameters. Only practical for
    /// token budgeting.
    Paper,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(Profile::Toy),
            "paper" => Ok(Profile::Paper),
            _ => Err(Error::Config(format!("unknown profile {s:?} (expected toy or paper)"))),
        }
    }
}

/// Every tunable of the pipeline. Field names double as config-file keys and,
/// with `_` replaced by `-`, as command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub profile: Profile,
    pub seed: u64,

    pub frames: usize,
    pub resolution: usize,
    pub patch_size: usize,
    pub enc_dim: usize,
    pub vit_layers: usize,
    pub vit_heads: usize,
    pub qformer_dim: usize,
    pub image_qformer_layers: usize,
    pub image_qformer_heads: usize,
    pub image_queries: usize,
    pub max_timestamp_tokens: usize,
    pub timestamps: TimestampMode,

    pub window_len: usize,
    pub stride: usize,
    pub video_queries: usize,
    pub window_mode: WindowMode,
    pub strict: bool,
    pub video_qformer_layers: usize,
    pub video_qformer_heads: usize,

    pub llm_dim: usize,
    pub llm_layers: usize,
    pub llm_heads: usize,
    pub llm_ffn_dim: usize,
    pub max_text_len: usize,
    pub lora_rank: usize,
    pub lora_alpha: f64,

    pub epochs: usize,
    pub batch_size: usize,
    pub max_steps: usize,
    pub lr: f64,
    pub warmup_lr: f64,
    pub warmup_steps: usize,
    pub min_lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Training stops once greedy answer-token accuracy on the training set
    /// reaches this value. Checked every `eval_every` steps.
    pub target_accuracy: f64,
    pub eval_every: usize,
    pub max_new_tokens: usize,

    pub hit_threshold: f64,
    pub grad_samples: usize,
    pub grad_epsilon: f64,

    pub videos: usize,
    pub min_duration: usize,
    pub max_duration: usize,
    pub events_per_video: usize,
    pub tasks: Vec<Task>,
}

impl Config {
    pub fn for_profile(p: Profile) -> Self {
        match p {
            Profile::Toy => Self::toy(),
            Profile::Paper => Self::paper(),
        }
    }

    pub fn toy() -> Self {
        Self {
            profile: Profile::Toy,
            seed: 0,
            frames: 8,
            resolution: 28,
            patch_size: 14,
            enc_dim: 64,
            vit_layers: 1,
            vit_heads: 2,
            qformer_dim: 64,
            image_qformer_layers: 2,
            image_qformer_heads: 2,
            image_queries: 8,
            max_timestamp_tokens: 48,
            timestamps: TimestampMode::On,
            window_len: 4,
            stride: 4,
            video_queries: 4,
            window_mode: WindowMode::Sliding,
            strict: false,
            video_qformer_layers: 2,
            video_qformer_heads: 2,
            llm_dim: 64,
            llm_layers: 2,
            llm_heads: 2,
            llm_ffn_dim: 256,
            max_text_len: 256,
            lora_rank: 4,
            lora_alpha: 8.0,
            epochs: 2000,
            batch_size: 8,
            max_steps: 2000,
            lr: 3e-3,
            warmup_lr: 1e-4,
            warmup_steps: 20,
            min_lr: 3e-4,
            weight_decay: 0.0,
            beta1: 0.9,
            beta2: 0.999,
            target_accuracy: 0.98,
            eval_every: 50,
            max_new_tokens: 64,
            hit_threshold: 4.0,
            grad_samples: 256,
            grad_epsilon: 1e-4,
            videos: 16,
            min_duration: 20,
            max_duration: 40,
            events_per_video: 2,
            tasks: Task::ALL.to_vec(),
        }
    }

    /// Published instruction-tuning settings layered over the toy values for
    /// everything else.
    pub fn paper() -> Self {
        Self {
            profile: Profile::Paper,
            frames: 96,
            resolution: 224,
            enc_dim: 1408,
            vit_layers: 39,
            vit_heads: 16,
            qformer_dim: 768,
            image_qformer_layers: 12,
            image_qformer_heads: 12,
            image_queries: 32,
            window_len: 32,
            stride: 32,
            video_queries: 32,
            video_qformer_layers: 2,
            video_qformer_heads: 12,
            llm_dim: 4096,
            llm_layers: 32,
            llm_heads: 32,
            llm_ffn_dim: 11008,
            max_text_len: 2048,
            lora_rank: 32,
            lora_alpha: 32.0,
            epochs: 3,
            batch_size: 32,
            lr: 3e-5,
            warmup_lr: 1e-6,
            min_lr: 0.0,
            weight_decay: 0.05,
            ..Self::toy()
        }
    }

    fn to_map(&self) -> BTreeMap<String, Value> {
        match serde_json::to_value(self).expect("config serializes") {
            Value::Object(m) => m.into_iter().collect(),
            _ => unreachable!(),
        }
    }

    pub fn keys() -> Vec<String> {
        Self::toy().to_map().into_keys().collect()
    }

    /// Overrides one field from its textual form. `key` may use `-` or `_`.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let key = key.replace('-', "_");
        let mut map = self.to_map();
        let Some(old) = map.get(&key) else {
            return Err(Error::Config(format!("unknown key {key:?}")));
        };
        let raw = raw.trim();
        let bad = |what: &str| Error::Config(format!("{key}: expected {what}, got {raw:?}"));
        let new = match old {
            Value::Bool(_) => Value::Bool(raw.parse().map_err(|_| bad("true or false"))?),
            Value::Number(n) if n.is_f64() => Value::from(raw.parse::<f64>().map_err(|_| bad("a number"))?),
            Value::Number(_) => Value::from(raw.parse::<u64>().map_err(|_| bad("a non-negative integer"))?),
            Value::Array(_) => Value::Array(
                raw.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| Value::String(s.to_string()))
                    .collect(),
            ),
            _ => Value::String(raw.to_string()),
        };
        map.insert(key.clone(), new);
        let obj: serde_json::Map<String, Value> = map.into_iter().collect();
        *self = serde_json::from_value(Value::Object(obj)).map_err(|e| Error::Config(format!("{key}: {e}")))?;
        Ok(())
    }

    /// Applies `key = value` lines. Blank lines and `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v).map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Config("frames must be at least 1".into()));
        }
        if self.min_duration == 0 || self.min_duration > self.max_duration {
            return Err(Error::Config("need 0 < min_duration <= max_duration".into()));
        }
        if self.strict && self.window_mode == WindowMode::Sliding && self.frames % self.stride != 0 {
            return Err(Error::Config(format!(
                "strict mode: frames ({}) must be a multiple of stride ({})",
                self.frames, self.stride
            )));
        }
        if !(0.0..=1.0).contains(&self.target_accuracy) {
            return Err(Error::Config("target_accuracy must lie in [0, 1]".into()));
        }
        self.sliding().validate()
    }

    pub fn sliding(&self) -> SlidingConfig {
        SlidingConfig {
            window_len: self.window_len,
            stride: self.stride,
            num_queries: self.video_queries,
            mode: self.window_mode,
            strict: self.strict,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            frame: FrameEncoderConfig {
                height: self.resolution,
                width: self.resolution,
                patch_size: self.patch_size,
                enc_dim: self.enc_dim,
                vit_layers: self.vit_layers,
                vit_heads: self.vit_heads,
                qformer_dim: self.qformer_dim,
                qformer_layers: self.image_qformer_layers,
                qformer_heads: self.image_qformer_heads,
                num_queries: self.image_queries,
                max_timestamp_tokens: self.max_timestamp_tokens,
                timestamps: self.timestamps,
            },
            video: VideoQFormerConfig {
                sliding: self.sliding(),
                dim: self.qformer_dim,
                layers: self.video_qformer_layers,
                heads: self.video_qformer_heads,
                llm_dim: self.llm_dim,
                max_window_frames: self.window_len.max(self.frames),
            },
            decoder: DecoderConfig {
                layers: self.llm_layers,
                heads: self.llm_heads,
                dim: self.llm_dim,
                ffn_dim: self.llm_ffn_dim,
                max_len: self.max_text_len,
                vocab_size: Tokenizer::VOCAB_SIZE,
                lora_rank: self.lora_rank,
                lora_alpha: self.lora_alpha,
            },
        }
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
            weight_decay: self.weight_decay,
        }
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            warmup_lr: self.warmup_lr,
            peak_lr: self.lr,
            min_lr: self.min_lr,
            warmup_steps: self.warmup_steps,
            total_steps: self.max_steps,
        }
    }
}

/// `key = value` lines in key order; two equal configs render identically.
impl fmt::Display for Config {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in self.to_map() {
            let v = match v {
                Value::String(s) => s,
                Value::Array(xs) => xs
                    .iter()
                    .map(|x| x.as_str().map_or_else(|| x.to_string(), str::to_string))
                    .collect::<Vec<_>>()
                    .join(","),
                other => other.to_string(),
            };
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}
