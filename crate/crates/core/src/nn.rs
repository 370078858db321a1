//! Layers shared by the frame encoder, the video Q-Former and the decoder.

use rand::Rng;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Low-rank adapter `W + (alpha / rank) · B·A` for a linear map.
///
/// Shapes follow the `d_out × d_in` weight convention: `a` is
/// `[rank, d_in]`, `b` is `[d_out, rank]`. `b` starts at zero so an adapted
/// layer initially reproduces its base layer.
#[derive(Debug, Clone)]
pub struct LoraAdapter {
    pub a: ParamId,
    pub b: ParamId,
    pub rank: usize,
    pub alpha: f64,
}

impl LoraAdapter {
    pub fn scaling(&self) -> f64 {
        self.alpha / self.rank as f64
    }

    pub fn extra_params(&self, d_in: usize, d_out: usize) -> usize {
        self.rank * (d_in + d_out)
    }
}

/// `y = x · W + b` with `W` stored as `[d_in, d_out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub d_in: usize,
    pub d_out: usize,
    pub lora: Option<LoraAdapter>,
}

impl Linear {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, bias: bool, rng: &mut R) -> Self {
        let w = store.normal(format!("{name}.w"), &[d_in, d_out], (1.0 / d_in as f64).sqrt(), rng);
        let b = bias.then(|| store.zeros(format!("{name}.b"), &[d_out]));
        Self {
            w,
            b,
            d_in,
            d_out,
            lora: None,
        }
    }

    /// Attaches a LoRA adapter (A random, B zero) whose parameters live under
    /// `{name}.lora_a` / `{name}.lora_b`.
    pub fn attach_lora<R: Rng>(&mut self, store: &mut ParamStore, name: &str, rank: usize, alpha: f64, rng: &mut R) {
        let a = store.normal(format!("{name}.lora_a"), &[rank, self.d_in], (1.0 / self.d_in as f64).sqrt(), rng);
        let b = store.zeros(format!("{name}.lora_b"), &[self.d_out, rank]);
        self.lora = Some(LoraAdapter { a, b, rank, alpha });
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let mut y = g.matmul(x, w)?;
        if let Some(b) = self.b {
            let b = g.param(store, b);
            y = g.add_row(y, b)?;
        }
        if let Some(l) = &self.lora {
            let a = g.param(store, l.a);
            let b = g.param(store, l.b);
            let down = g.matmul_t(x, a)?;
            let up = g.matmul_t(down, b)?;
            let up = g.scale(up, l.scaling());
            y = g.add(y, up)?;
        }
        Ok(y)
    }

    /// Folds the adapter into the base weight and removes it.
    ///
    /// Afterwards `forward` computes `x · (W + s·(B·A)ᵀ) + b`, which equals the
    /// adapted output up to rounding.
    pub fn merge_lora(&mut self, store: &mut ParamStore) -> Result<()> {
        let Some(l) = self.lora.take() else {
            return Ok(());
        };
        let a = store.get(l.a).value.clone();
        let b = store.get(l.b).value.clone();
        if a.shape() != [l.rank, self.d_in] || b.shape() != [self.d_out, l.rank] {
            self.lora = Some(l);
            return Err(Error::Config(format!(
                "LoRA shapes {:?}/{:?} do not fit a {}x{} layer",
                a.shape(),
                b.shape(),
                self.d_in,
                self.d_out
            )));
        }
        let s = l.scaling();
        let w = &mut store.get_mut(self.w).value;
        // W[i][o] += s * sum_r B[o][r] * A[r][i]
        for i in 0..self.d_in {
            for o in 0..self.d_out {
                let mut acc = 0.0;
                for r in 0..l.rank {
                    acc += b.at(o, r) * a.at(r, i);
                }
                w.data_mut()[i * self.d_out + o] += s * acc;
            }
        }
        Ok(())
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut v = vec![self.w];
        v.extend(self.b);
        if let Some(l) = &self.lora {
            v.extend([l.a, l.b]);
        }
        v
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.ones(format!("{name}.g"), &[dim]),
            bias: store.zeros(format!("{name}.b"), &[dim]),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let gain = g.param(store, self.gain);
        let bias = g.param(store, self.bias);
        g.layer_norm(x, gain, bias)
    }
}

/// Multi-head scaled dot-product attention with separate query and
/// key/value inputs.
#[derive(Debug, Clone)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub heads: usize,
}

impl Attention {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, kv_dim: usize, heads: usize, rng: &mut R) -> Result<Self> {
        if heads == 0 || dim % heads != 0 {
            return Err(Error::Config(format!("dim {dim} is not divisible by {heads} heads")));
        }
        Ok(Self {
            q: Linear::new(store, &format!("{name}.q"), dim, dim, true, rng),
            k: Linear::new(store, &format!("{name}.k"), kv_dim, dim, true, rng),
            v: Linear::new(store, &format!("{name}.v"), kv_dim, dim, true, rng),
            o: Linear::new(store, &format!("{name}.o"), dim, dim, true, rng),
            heads,
        })
    }

    pub fn attach_lora<R: Rng>(&mut self, store: &mut ParamStore, name: &str, rank: usize, alpha: f64, rng: &mut R) {
        for (lin, tag) in [(&mut self.q, "q"), (&mut self.k, "k"), (&mut self.v, "v"), (&mut self.o, "o")] {
            lin.attach_lora(store, &format!("{name}.{tag}"), rank, alpha, rng);
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, context: Var, causal: bool) -> Result<Var> {
        let q = self.q.forward(g, store, x)?;
        let k = self.k.forward(g, store, context)?;
        let v = self.v.forward(g, store, context)?;
        let dim = self.q.d_out;
        let dh = dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = if self.heads == 1 {
                (q, k, v)
            } else {
                (
                    g.slice_cols(q, h * dh, dh)?,
                    g.slice_cols(k, h * dh, dh)?,
                    g.slice_cols(v, h * dh, dh)?,
                )
            };
            let scores = g.matmul_t(qh, kh)?;
            let scores = g.scale(scores, scale);
            let p = g.softmax(scores, causal)?;
            outs.push(g.matmul(p, vh)?);
        }
        let merged = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs)? };
        self.o.forward(g, store, merged)
    }

    pub fn linears_mut(&mut self) -> [&mut Linear; 4] {
        [&mut self.q, &mut self.k, &mut self.v, &mut self.o]
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    pub fc1: Linear,
    pub fc2: Linear,
}

impl FeedForward {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            fc1: Linear::new(store, &format!("{name}.fc1"), dim, hidden, true, rng),
            fc2: Linear::new(store, &format!("{name}.fc2"), hidden, dim, true, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let h = self.fc1.forward(g, store, x)?;
        let h = g.gelu(h);
        self.fc2.forward(g, store, h)
    }
}

/// Pre-norm transformer encoder layer (bidirectional self-attention + FFN).
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub ln1: LayerNorm,
    pub attn: Attention,
    pub ln2: LayerNorm,
    pub ffn: FeedForward,
}

impl EncoderLayer {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, dim: usize, heads: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        Ok(Self {
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), dim),
            attn: Attention::new(store, &format!("{name}.attn"), dim, dim, heads, rng)?,
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), dim),
            ffn: FeedForward::new(store, &format!("{name}.ffn"), dim, hidden, rng),
        })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, causal: bool) -> Result<Var> {
        let h = self.ln1.forward(g, store, x)?;
        let a = self.attn.forward(g, store, h, h, causal)?;
        let x = g.add(x, a)?;
        let h = self.ln2.forward(g, store, x)?;
        let f = self.ffn.forward(g, store, h)?;
        g.add(x, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QFormerConfig {
    pub dim: usize,
    pub context_dim: usize,
    pub heads: usize,
    pub layers: usize,
    pub ffn_dim: usize,
    pub num_queries: usize,
}

#[derive(Debug, Clone)]
struct QFormerLayer {
    self_attn: Attention,
    ln_self: LayerNorm,
    cross_attn: Attention,
    ln_cross: LayerNorm,
    ffn: FeedForward,
    ln_ffn: LayerNorm,
}

/// Learnable queries that read a context sequence through cross-attention.
///
/// Optional conditioning tokens are appended to the queries for the
/// self-attention sublayer only: they shape the queries but never attend to
/// the context, and only the query rows are returned.
#[derive(Debug, Clone)]
pub struct QFormer {
    pub cfg: QFormerConfig,
    pub queries: ParamId,
    layers: Vec<QFormerLayer>,
}

impl QFormer {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, cfg: QFormerConfig, rng: &mut R) -> Result<Self> {
        let queries = store.normal(format!("{name}.queries"), &[cfg.num_queries, cfg.dim], 0.5, rng);
        let layers = (0..cfg.layers)
            .map(|l| {
                let n = format!("{name}.layer{l}");
                Ok(QFormerLayer {
                    self_attn: Attention::new(store, &format!("{n}.self"), cfg.dim, cfg.dim, cfg.heads, rng)?,
                    ln_self: LayerNorm::new(store, &format!("{n}.ln_self"), cfg.dim),
                    cross_attn: Attention::new(store, &format!("{n}.cross"), cfg.dim, cfg.context_dim, cfg.heads, rng)?,
                    ln_cross: LayerNorm::new(store, &format!("{n}.ln_cross"), cfg.dim),
                    ffn: FeedForward::new(store, &format!("{n}.ffn"), cfg.dim, cfg.ffn_dim, rng),
                    ln_ffn: LayerNorm::new(store, &format!("{n}.ln_ffn"), cfg.dim),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { cfg, queries, layers })
    }

    /// `context` is `[n_ctx, context_dim]`; `condition`, when present, is
    /// `[n_cond, dim]`. Returns `[num_queries, dim]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, context: Var, condition: Option<Var>) -> Result<Var> {
        let nq = self.cfg.num_queries;
        let mut q = g.param(store, self.queries);
        let mut cond = condition;
        for layer in &self.layers {
            let h = match cond {
                Some(c) => g.concat_rows(&[q, c])?,
                None => q,
            };
            let a = layer.self_attn.forward(g, store, h, h, false)?;
            let h = g.add(h, a)?;
            let h = layer.ln_self.forward(g, store, h)?;
            if let Some(c) = cond {
                let n_cond = g.value(c).rows();
                q = g.slice_rows(h, 0, nq)?;
                cond = Some(g.slice_rows(h, nq, n_cond)?);
            } else {
                q = h;
            }
            let c = layer.cross_attn.forward(g, store, q, context, false)?;
            let s = g.add(q, c)?;
            q = layer.ln_cross.forward(g, store, s)?;
            // Conditioning rows only take part in self-attention; the
            // feed-forward sublayer runs on the query rows.
            let f = layer.ffn.forward(g, store, q)?;
            let s = g.add(q, f)?;
            q = layer.ln_ffn.forward(g, store, s)?;
        }
        Ok(q)
    }
}

/// Adds row `positions[i]` of a learned table to row `i` of `x`.
pub fn add_positions(g: &mut Graph, store: &ParamStore, x: Var, table: ParamId, start: usize) -> Result<Var> {
    let rows = g.value(x).rows();
    let t = g.param(store, table);
    if start + rows > g.value(t).rows() {
        return Err(Error::Config(format!(
            "sequence of {} rows starting at {start} exceeds the {} learned positions",
            rows,
            g.value(t).rows()
        )));
    }
    let ids: Vec<usize> = (start..start + rows).collect();
    let pos = g.gather(t, &ids)?;
    g.add(x, pos)
}

pub fn input_matrix(g: &mut Graph, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
    Ok(g.input(Tensor::new(&[rows, cols], data)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{grad_check, DEFAULT_EPSILON};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_input(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::new(&[rows, cols], (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn lora_zero_init_is_identity_and_merge_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = ParamStore::new();
        let mut lin = Linear::new(&mut store, "l", 6, 5, true, &mut rng);
        let x = random_input(4, 6, &mut rng);

        let run = |lin: &Linear, store: &ParamStore| {
            let mut g = Graph::new();
            let xi = g.input(x.clone());
            let y = lin.forward(&mut g, store, xi).unwrap();
            g.value(y).clone()
        };
        let base = run(&lin, &store);
        lin.attach_lora(&mut store, "l", 2, 4.0, &mut rng);
        assert_eq!(run(&lin, &store), base);
        assert_eq!(lin.lora.as_ref().unwrap().extra_params(6, 5), 2 * (6 + 5));

        let bid = lin.lora.as_ref().unwrap().b;
        for v in store.get_mut(bid).value.data_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let adapted = run(&lin, &store);
        assert!(adapted.max_abs_diff(&base) > 1e-3);
        lin.merge_lora(&mut store).unwrap();
        assert!(lin.lora.is_none());
        assert!(run(&lin, &store).max_abs_diff(&adapted) < 1e-9);
    }

    #[test]
    fn merge_rejects_mismatched_adapter() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut store = ParamStore::new();
        let mut lin = Linear::new(&mut store, "l", 4, 3, false, &mut rng);
        let a = store.zeros("bad.a", &[2, 5]);
        let b = store.zeros("bad.b", &[3, 2]);
        lin.lora = Some(LoraAdapter { a, b, rank: 2, alpha: 1.0 });
        assert!(matches!(lin.merge_lora(&mut store), Err(Error::Config(_))));
    }

    #[test]
    fn qformer_output_count_and_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut store = ParamStore::new();
        let cfg = QFormerConfig {
            dim: 8,
            context_dim: 6,
            heads: 2,
            layers: 2,
            ffn_dim: 12,
            num_queries: 3,
        };
        let qf = QFormer::new(&mut store, "qf", cfg, &mut rng).unwrap();
        let ctx = random_input(5, 6, &mut rng);
        let cond = random_input(4, 8, &mut rng);
        let mut g = Graph::new();
        let c = g.input(ctx.clone());
        let out = qf.forward(&mut g, &store, c, None).unwrap();
        assert_eq!(g.value(out).shape(), &[3, 8]);

        let report = grad_check(
            &mut store,
            |s, g| {
                let c = g.input(ctx.clone());
                let d = g.input(cond.clone());
                let out = qf.forward(g, s, c, Some(d))?;
                let sq = g.mul(out, out)?;
                Ok(g.sum(sq))
            },
            DEFAULT_EPSILON,
            200,
            3,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "{report:?}");
    }
}
