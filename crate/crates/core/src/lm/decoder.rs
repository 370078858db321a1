use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Tokenizer;
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{add_positions, EncoderLayer, LayerNorm, Linear};
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    pub layers: usize,
    pub heads: usize,
    /// Model width, also the width of the video tokens (`D_LLM`).
    pub dim: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub lora_rank: usize,
    pub lora_alpha: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            heads: 2,
            dim: 64,
            ffn_dim: 256,
            max_len: 256,
            vocab_size: Tokenizer::VOCAB_SIZE,
            lora_rank: 4,
            lora_alpha: 8.0,
        }
    }
}

/// Row layout of `[X_v][SEP][X_q][SEP][X_a]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SequenceLayout {
    pub video: usize,
    pub query: usize,
    pub answer: usize,
}

impl SequenceLayout {
    pub const SPECIALS: usize = 2;

    pub fn total(&self) -> usize {
        self.video + self.query + self.answer + Self::SPECIALS
    }

    /// Row whose output predicts the first answer token (the second SEP).
    pub fn first_prediction_row(&self) -> usize {
        self.video + self.query + 1
    }

    /// Next-token targets and the loss mask over the whole sequence: only
    /// rows that predict an answer token or the closing EOS are supervised.
    pub fn full_targets(&self, query: &[usize], answer: &[usize]) -> (Vec<usize>, Vec<bool>) {
        let n = self.total();
        let mut targets = vec![Tokenizer::PAD; n];
        let mut mask = vec![false; n];
        // Rows that see query tokens predict the next query token, unsupervised.
        let q0 = self.video + 1;
        for (i, &t) in query.iter().enumerate() {
            targets[q0 + i - 1] = t;
        }
        targets[q0 + self.query - 1] = Tokenizer::SEP;
        let a0 = self.first_prediction_row();
        for (i, &t) in answer.iter().chain(std::iter::once(&Tokenizer::EOS)).enumerate() {
            targets[a0 + i] = t;
            mask[a0 + i] = true;
        }
        (targets, mask)
    }
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub cfg: DecoderConfig,
    tok_emb: ParamId,
    pos_emb: ParamId,
    layers: Vec<EncoderLayer>,
    ln_f: LayerNorm,
    head: Linear,
}

impl Decoder {
    /// Registers `llm.*`. Base weights are frozen and LoRA adapters sit on
    /// every attention projection, both feed-forward maps and the output head.
    pub fn new<R: Rng>(store: &mut ParamStore, cfg: DecoderConfig, rng: &mut R) -> Result<Self> {
        if cfg.heads == 0 || cfg.dim % cfg.heads != 0 {
            return Err(Error::Config(format!("decoder dim {} not divisible by {} heads", cfg.dim, cfg.heads)));
        }
        let tok_emb = store.normal("llm.tok_emb", &[cfg.vocab_size, cfg.dim], 1.0, rng);
        let pos_emb = store.normal("llm.pos_emb", &[cfg.max_len, cfg.dim], 0.1, rng);
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let name = format!("llm.layer{l}");
            layers.push(EncoderLayer::new(store, &name, cfg.dim, cfg.heads, cfg.ffn_dim, rng)?);
        }
        let ln_f = LayerNorm::new(store, "llm.ln_f", cfg.dim);
        let head = Linear::new(store, "llm.head", cfg.dim, cfg.vocab_size, true, rng);
        store.set_trainable("llm.", false);

        let mut dec = Self {
            cfg,
            tok_emb,
            pos_emb,
            layers,
            ln_f,
            head,
        };
        if cfg.lora_rank > 0 {
            let (r, a) = (cfg.lora_rank, cfg.lora_alpha);
            for (l, layer) in dec.layers.iter_mut().enumerate() {
                let name = format!("llm.layer{l}");
                layer.attn.attach_lora(store, &format!("{name}.attn"), r, a, rng);
                layer.ffn.fc1.attach_lora(store, &format!("{name}.ffn.fc1"), r, a, rng);
                layer.ffn.fc2.attach_lora(store, &format!("{name}.ffn.fc2"), r, a, rng);
            }
            dec.head.attach_lora(store, "llm.head", r, a, rng);
        }
        Ok(dec)
    }

    pub fn layout(&self, video: usize, query: usize, answer: usize) -> Result<SequenceLayout> {
        let l = SequenceLayout { video, query, answer };
        if l.total() > self.cfg.max_len {
            return Err(Error::Length {
                video,
                query,
                answer,
                specials: SequenceLayout::SPECIALS,
                max: self.cfg.max_len,
            });
        }
        Ok(l)
    }

    /// Final hidden states for every row of the sequence.
    fn hidden(&self, g: &mut Graph, store: &ParamStore, video: Option<Var>, query: &[usize], answer: &[usize]) -> Result<(Var, SequenceLayout)> {
        let nv = video.map_or(0, |v| g.value(v).rows());
        if let Some(v) = video {
            if g.value(v).cols() != self.cfg.dim {
                return Err(Error::shape("decoder video tokens", g.value(v).shape(), &[nv, self.cfg.dim]));
            }
        }
        let layout = self.layout(nv, query.len(), answer.len())?;
        if let Some(&bad) = query.iter().chain(answer).find(|&&t| t >= self.cfg.vocab_size) {
            return Err(Error::Domain(format!("token id {bad} out of vocabulary")));
        }
        let mut ids = vec![Tokenizer::SEP];
        ids.extend_from_slice(query);
        ids.push(Tokenizer::SEP);
        ids.extend_from_slice(answer);
        let table = g.param(store, self.tok_emb);
        let text = g.gather(table, &ids)?;
        let x = match video {
            Some(v) if nv > 0 => g.concat_rows(&[v, text])?,
            _ => text,
        };
        let mut h = add_positions(g, store, x, self.pos_emb, 0)?;
        for layer in &self.layers {
            h = layer.forward(g, store, h, true)?;
        }
        Ok((self.ln_f.forward(g, store, h)?, layout))
    }

    /// Logits for the `answer.len() + 1` rows that predict the answer tokens
    /// followed by EOS.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, video: Option<Var>, query: &[usize], answer: &[usize]) -> Result<Var> {
        let (h, layout) = self.hidden(g, store, video, query, answer)?;
        let rows = g.slice_rows(h, layout.first_prediction_row(), answer.len() + 1)?;
        self.head.forward(g, store, rows)
    }

    /// Logits for every row of the sequence.
    pub fn forward_full(&self, g: &mut Graph, store: &ParamStore, video: Option<Var>, query: &[usize], answer: &[usize]) -> Result<(Var, SequenceLayout)> {
        let (h, layout) = self.hidden(g, store, video, query, answer)?;
        Ok((self.head.forward(g, store, h)?, layout))
    }

    /// Mean negative log-likelihood of `answer` followed by EOS.
    pub fn loss(&self, g: &mut Graph, logits: Var, answer: &[usize]) -> Result<Var> {
        let mut targets = answer.to_vec();
        targets.push(Tokenizer::EOS);
        let mask = vec![true; targets.len()];
        g.cross_entropy_lm(logits, &targets, &mask)
    }

    /// Argmax decoding until EOS, the token budget, or the length limit.
    pub fn greedy_decode(&self, store: &ParamStore, video: Option<&Tensor>, query: &[usize], max_new_tokens: usize) -> Result<Vec<usize>> {
        if max_new_tokens == 0 {
            return Err(Error::Config("max_new_tokens must be at least 1".into()));
        }
        let nv = video.map_or(0, |v| v.rows());
        let mut out = Vec::new();
        while out.len() < max_new_tokens {
            if self.layout(nv, query.len(), out.len() + 1).is_err() {
                break;
            }
            let mut g = Graph::new();
            let v = video.map(|t| g.input(t.clone()));
            let (h, layout) = self.hidden(&mut g, store, v, query, &out)?;
            let last = g.slice_rows(h, layout.total() - 1, 1)?;
            let logits = self.head.forward(&mut g, store, last)?;
            let next = argmax(g.value(logits).row(0));
            if next == Tokenizer::EOS {
                break;
            }
            out.push(next);
        }
        Ok(out)
    }

    /// Folds every LoRA adapter into its base weight.
    pub fn merge_lora(&mut self, store: &mut ParamStore) -> Result<()> {
        for layer in &mut self.layers {
            for lin in layer.attn.linears_mut() {
                lin.merge_lora(store)?;
            }
            layer.ffn.fc1.merge_lora(store)?;
            layer.ffn.fc2.merge_lora(store)?;
        }
        self.head.merge_lora(store)
    }

    /// Parameters added by the adapters.
    pub fn lora_param_count(&self) -> usize {
        let mut lins: Vec<&Linear> = Vec::new();
        for layer in &self.layers {
            lins.extend([&layer.attn.q, &layer.attn.k, &layer.attn.v, &layer.attn.o, &layer.ffn.fc1, &layer.ffn.fc2]);
        }
        lins.push(&self.head);
        lins.iter()
            .filter_map(|l| l.lora.as_ref().map(|a| a.extra_params(l.d_in, l.d_out)))
            .sum()
    }
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
