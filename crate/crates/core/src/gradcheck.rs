//! Central finite-difference verification of analytic gradients.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::param::ParamStore;

pub const DEFAULT_EPSILON: f64 = 1e-4;
pub const DEFAULT_SAMPLES: usize = 200;
pub const PASS_THRESHOLD: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct CoordError {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub loss: f64,
    pub coords_checked: usize,
    pub max_rel_err: f64,
    pub worst: Option<CoordError>,
    pub epsilon: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err <= PASS_THRESHOLD
    }
}

/// Compares analytic gradients of `loss_fn` against central differences on at
/// least `samples` parameter coordinates (every parameter tensor contributes
/// at least one). The error per coordinate is
/// `|analytic - numeric| / max(1, |analytic|)`.
///
/// `loss_fn` must record a scalar loss on the given graph. It is evaluated
/// twice up front; differing results are reported as
/// [`Error::Nondeterministic`].
pub fn grad_check<F>(store: &mut ParamStore, loss_fn: F, epsilon: f64, samples: usize, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore, &mut Graph) -> Result<Var>,
{
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let l = loss_fn(store, &mut g)?;
        Ok(g.scalar(l))
    };

    store.zero_grads();
    let mut g = Graph::with_all_grads();
    let loss_var = loss_fn(store, &mut g)?;
    let loss = g.scalar(loss_var);
    let again = eval(store)?;
    if loss.to_bits() != again.to_bits() {
        return Err(Error::Nondeterministic {
            first: loss,
            second: again,
        });
    }
    g.backward(loss_var, store)?;
    drop(g);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coords: Vec<(usize, usize)> = Vec::new();
    let sizes: Vec<usize> = store.iter().map(|(_, p)| p.value.len()).collect();
    for (pi, &n) in sizes.iter().enumerate() {
        if n > 0 {
            coords.push((pi, rng.gen_range(0..n)));
        }
    }
    let total: usize = sizes.iter().sum();
    if total <= samples {
        coords = sizes
            .iter()
            .enumerate()
            .flat_map(|(pi, &n)| (0..n).map(move |i| (pi, i)))
            .collect();
    } else {
        while coords.len() < samples {
            let mut flat = rng.gen_range(0..total);
            let mut pi = 0;
            while flat >= sizes[pi] {
                flat -= sizes[pi];
                pi += 1;
            }
            coords.push((pi, flat));
        }
        coords.shuffle(&mut rng);
    }

    let ids: Vec<_> = store.iter().map(|(id, _)| id).collect();
    let mut worst: Option<CoordError> = None;
    for &(pi, i) in &coords {
        let id = ids[pi];
        let original = store.get(id).value.data()[i];
        store.get_mut(id).value.data_mut()[i] = original + epsilon;
        let plus = eval(store)?;
        store.get_mut(id).value.data_mut()[i] = original - epsilon;
        let minus = eval(store)?;
        store.get_mut(id).value.data_mut()[i] = original;

        let numeric = (plus - minus) / (2.0 * epsilon);
        let analytic = store.get(id).grad.data()[i];
        let rel_err = (analytic - numeric).abs() / analytic.abs().max(1.0);
        if worst.as_ref().map_or(true, |w| rel_err > w.rel_err) {
            worst = Some(CoordError {
                param: store.get(id).name.clone(),
                index: i,
                analytic,
                numeric,
                rel_err,
            });
        }
    }

    Ok(GradCheckReport {
        loss,
        coords_checked: coords.len(),
        max_rel_err: worst.as_ref().map_or(0.0, |w| w.rel_err),
        worst,
        epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;
    use std::cell::Cell;

    fn linear_setup() -> (ParamStore, crate::param::ParamId, crate::param::ParamId, Tensor) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = ParamStore::new();
        let w = s.normal("w", &[6, 4], 0.5, &mut rng);
        let b = s.normal("b", &[4], 0.5, &mut rng);
        let x = Tensor::new(&[5, 6], (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        (s, w, b, x)
    }

    #[test]
    fn linear_layer_passes_tightly() {
        let (mut s, w, b, x) = linear_setup();
        let report = grad_check(
            &mut s,
            |s, g| {
                let xi = g.input(x.clone());
                let wv = g.param(s, w);
                let bv = g.param(s, b);
                let y = g.matmul(xi, wv)?;
                let y = g.add_row(y, bv)?;
                let t = g.gelu(y);
                let sq = g.mul(t, t)?;
                Ok(g.sum(sq))
            },
            DEFAULT_EPSILON,
            DEFAULT_SAMPLES,
            1,
        )
        .unwrap();
        assert_eq!(report.coords_checked, 28);
        assert!(report.max_rel_err < 1e-6, "{report:?}");
    }

    #[test]
    fn attention_block_passes() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = ParamStore::new();
        let wq = s.normal("wq", &[8, 8], 0.4, &mut rng);
        let wk = s.normal("wk", &[8, 8], 0.4, &mut rng);
        let wv = s.normal("wv", &[8, 8], 0.4, &mut rng);
        let gain = s.ones("ln.g", &[8]);
        let bias = s.zeros("ln.b", &[8]);
        let x = Tensor::new(&[5, 8], (0..40).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let report = grad_check(
            &mut s,
            |s, g| {
                let xi = g.input(x.clone());
                let (q, k, v) = (g.param(s, wq), g.param(s, wk), g.param(s, wv));
                let (gn, bn) = (g.param(s, gain), g.param(s, bias));
                let h = g.layer_norm(xi, gn, bn)?;
                let q = g.matmul(h, q)?;
                let k = g.matmul(h, k)?;
                let v = g.matmul(h, v)?;
                let sc = g.matmul_t(q, k)?;
                let sc = g.scale(sc, 0.5);
                let p = g.softmax(sc, true)?;
                let o = g.matmul(p, v)?;
                let o = g.slice_cols(o, 2, 4)?;
                let o2 = g.slice_rows(o, 1, 3)?;
                let sq = g.mul(o2, o2)?;
                Ok(g.sum(sq))
            },
            DEFAULT_EPSILON,
            DEFAULT_SAMPLES,
            2,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-4, "{report:?}");
    }

    #[test]
    fn nondeterministic_forward_is_detected() {
        let (mut s, w, _, _) = linear_setup();
        let counter = Cell::new(0.0);
        let err = grad_check(
            &mut s,
            |s, g| {
                counter.set(counter.get() + 1.0);
                let wv = g.param(s, w);
                let c = g.input(Tensor::full(&[6, 4], counter.get()));
                let y = g.mul(wv, c)?;
                Ok(g.sum(y))
            },
            DEFAULT_EPSILON,
            10,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Nondeterministic { .. }));
    }
}
