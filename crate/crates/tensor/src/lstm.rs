//! Gated recurrent cell (LSTM) on the graph.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::{ParamId, ParamStore};

/// Fused LSTM weights. `weight` is `(input + hidden) x 4*hidden` with gate
/// blocks ordered input, forget, candidate, output; `bias` is `1 x 4*hidden`.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmWeights {
    pub fn register(
        store: &mut ParamStore,
        prefix: &str,
        input: usize,
        hidden: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let fan_in = input + hidden;
        let weight = store.add_uniform(format!("{prefix}.weight"), fan_in, 4 * hidden, fan_in, rng)?;
        let bias = store.add_uniform(format!("{prefix}.bias"), 1, 4 * hidden, fan_in, rng)?;
        Ok(Self {
            weight,
            bias,
            input,
            hidden,
        })
    }

    /// Looks the weights up by name in a loaded store.
    pub fn lookup(store: &ParamStore, prefix: &str) -> Result<Self> {
        let weight = store.id(&format!("{prefix}.weight"))?;
        let bias = store.id(&format!("{prefix}.bias"))?;
        let w = store.get(weight);
        let hidden = w.cols() / 4;
        Ok(Self {
            weight,
            bias,
            input: w.rows() - hidden,
            hidden,
        })
    }
}

/// One LSTM step. `x` is `1 x input`, `h_prev` and `c_prev` are `1 x hidden`.
/// Returns `(h, c)`.
pub fn lstm_cell(
    g: &mut Graph<'_>,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    w: &LstmWeights,
) -> Result<(Var, Var)> {
    let hd = w.hidden;
    let xh = g.concat_cols(&[x, h_prev])?;
    let weight = g.param(w.weight);
    let bias = g.param(w.bias);
    let z = g.matmul(xh, weight)?;
    let z = g.add(z, bias)?;
    let i = g.slice_cols(z, 0, hd)?;
    let f = g.slice_cols(z, hd, hd)?;
    let cand = g.slice_cols(z, 2 * hd, hd)?;
    let o = g.slice_cols(z, 3 * hd, hd)?;
    let i = g.sigmoid(i);
    let f = g.sigmoid(f);
    let cand = g.tanh(cand);
    let o = g.sigmoid(o);
    let keep = g.mul(f, c_prev)?;
    let write = g.mul(i, cand)?;
    let c = g.add(keep, write)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    #[test]
    fn zero_weights_halve_the_cell() {
        let mut store = ParamStore::new();
        let weight = store.add_filled("w", 5, 8, 0.0).unwrap();
        let bias = store.add_filled("b", 1, 8, 0.0).unwrap();
        let w = LstmWeights {
            weight,
            bias,
            input: 3,
            hidden: 2,
        };
        let mut g = Graph::new(&store);
        let x = g.leaf(Tensor::row(vec![0.3, -1.0, 2.0]));
        let h = g.leaf(Tensor::row(vec![0.7, 0.1]));
        let c = g.leaf(Tensor::row(vec![1.5, -2.0]));
        let (h2, c2) = lstm_cell(&mut g, x, h, c, &w).unwrap();
        for (k, &cp) in [1.5f64, -2.0].iter().enumerate() {
            assert!((g.value(c2).data()[k] - 0.5 * cp).abs() < 1e-15);
            assert!((g.value(h2).data()[k] - 0.5 * (0.5 * cp).tanh()).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_everything_gives_zero_state() {
        let mut store = ParamStore::new();
        let weight = store.add_filled("w", 4, 8, 0.0).unwrap();
        let bias = store.add_filled("b", 1, 8, 0.0).unwrap();
        let w = LstmWeights {
            weight,
            bias,
            input: 2,
            hidden: 2,
        };
        let mut g = Graph::new(&store);
        let z2 = g.leaf(Tensor::zeros(&[1, 2]));
        let (h, c) = lstm_cell(&mut g, z2, z2, z2, &w).unwrap();
        assert!(g.value(h).data().iter().all(|&v| v == 0.0));
        assert!(g.value(c).data().iter().all(|&v| v == 0.0));
    }
}
