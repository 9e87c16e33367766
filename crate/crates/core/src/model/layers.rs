//! Building blocks: parameter registry, linear maps, attention, encodings.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::{Graph, Tensor, Var};

/// Named parameter tensors in creation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl ParamSet {
    fn add(&mut self, name: String, tensor: Tensor) -> usize {
        self.names.push(name);
        self.tensors.push(tensor);
        self.tensors.len() - 1
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Leaves for every parameter, in order.
    pub fn leaves(&self, g: &mut Graph, track: bool) -> Result<Vec<Var>> {
        self.tensors
            .iter()
            .map(|t| {
                let (r, c) = t.as_matrix_dims()?;
                g.input(r, c, t.data().to_vec(), track)
            })
            .collect()
    }
}

/// How fresh parameters are filled.
pub(crate) enum Init<'a, R: Rng + ?Sized> {
    Uniform(&'a mut R),
    Zeros,
}

impl<R: Rng + ?Sized> Init<'_, R> {
    fn uniform(&mut self, n: usize, bound: f64) -> Vec<f64> {
        match self {
            Init::Uniform(rng) => (0..n).map(|_| rng.random_range(-bound..=bound)).collect(),
            Init::Zeros => vec![0.0; n],
        }
    }
}

/// Registers parameters with hierarchical names.
pub(crate) struct Builder<'a, R: Rng + ?Sized> {
    pub params: ParamSet,
    pub init: Init<'a, R>,
}

impl<R: Rng + ?Sized> Builder<'_, R> {
    pub fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Linear {
        let bound = (1.0 / fan_in as f64).sqrt();
        let w = self.init.uniform(fan_in * fan_out, bound);
        let b = self.init.uniform(fan_out, bound);
        Linear {
            w: self.params.add(format!("{name}.weight"), Tensor::matrix(fan_in, fan_out, w).unwrap()),
            b: self.params.add(format!("{name}.bias"), Tensor::matrix(1, fan_out, b).unwrap()),
        }
    }

    pub fn norm(&mut self, name: &str, width: usize) -> Norm {
        let gamma = match self.init {
            Init::Zeros => vec![0.0; width],
            Init::Uniform(_) => vec![1.0; width],
        };
        Norm {
            gamma: self.params.add(format!("{name}.gamma"), Tensor::matrix(1, width, gamma).unwrap()),
            beta: self.params.add(format!("{name}.beta"), Tensor::zeros(&[1, width])),
        }
    }

    pub fn attention(&mut self, name: &str, d: usize) -> Attention {
        Attention {
            q: self.linear(&format!("{name}.q"), d, d),
            k: self.linear(&format!("{name}.k"), d, d),
            v: self.linear(&format!("{name}.v"), d, d),
            o: self.linear(&format!("{name}.o"), d, d),
        }
    }

    pub fn feed_forward(&mut self, name: &str, d: usize, hidden: usize) -> FeedForward {
        FeedForward {
            l1: self.linear(&format!("{name}.1"), d, hidden),
            l2: self.linear(&format!("{name}.2"), hidden, d),
        }
    }
}

/// `x·W + b` with `W` stored fan_in × fan_out.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
}

impl Linear {
    pub fn forward(&self, g: &mut Graph, p: &[Var], x: Var) -> Result<Var> {
        let y = g.matmul(x, p[self.w])?;
        g.add_row(y, p[self.b])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Norm {
    pub gamma: usize,
    pub beta: usize,
}

pub const LN_EPS: f64 = 1e-5;

impl Norm {
    pub fn forward(&self, g: &mut Graph, p: &[Var], x: Var) -> Result<Var> {
        g.layer_norm(x, p[self.gamma], p[self.beta], LN_EPS)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
}

/// Graph handles of one attention block's weights.
#[derive(Debug, Clone, Copy)]
pub struct AttentionVars {
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
}

impl Attention {
    pub fn vars(&self, p: &[Var]) -> AttentionVars {
        AttentionVars {
            wq: p[self.q.w],
            bq: p[self.q.b],
            wk: p[self.k.w],
            bk: p[self.k.b],
            wv: p[self.v.w],
            bv: p[self.v.b],
            wo: p[self.o.w],
            bo: p[self.o.b],
        }
    }
}

/// Multi-head scaled dot-product attention over `blocks` independent
/// sequences stacked by rows. Queries come from `q_src`, keys and values
/// from `kv_src`; each head sees a contiguous `d_model / heads` slice of
/// the projections, and the concatenated heads are projected by `W⁰`.
pub fn multi_head_attention(
    g: &mut Graph,
    q_src: Var,
    kv_src: Var,
    w: &AttentionVars,
    heads: usize,
    blocks: usize,
) -> Result<Var> {
    Ok(multi_head_attention_weights(g, q_src, kv_src, w, heads, blocks)?.0)
}

/// As [`multi_head_attention`], also returning each head's attention
/// weight matrix.
pub fn multi_head_attention_weights(
    g: &mut Graph,
    q_src: Var,
    kv_src: Var,
    w: &AttentionVars,
    heads: usize,
    blocks: usize,
) -> Result<(Var, Vec<Var>)> {
    let d = g.shape(q_src).1;
    if heads == 0 || d % heads != 0 {
        return Err(Error::Parameter(format!("d_model {d} is not divisible by {heads} heads")));
    }
    if g.shape(kv_src).1 != d {
        return Err(Error::dim("attention", &[g.shape(q_src).0, d], &[g.shape(kv_src).0, g.shape(kv_src).1]));
    }
    let dk = d / heads;
    let q = g.matmul(q_src, w.wq)?;
    let q = g.add_row(q, w.bq)?;
    let k = g.matmul(kv_src, w.wk)?;
    let k = g.add_row(k, w.bk)?;
    let v = g.matmul(kv_src, w.wv)?;
    let v = g.add_row(v, w.bv)?;
    let mut outs = Vec::with_capacity(heads);
    let mut weights = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = g.slice_cols(q, h * dk, dk)?;
        let kh = g.slice_cols(k, h * dk, dk)?;
        let vh = g.slice_cols(v, h * dk, dk)?;
        let scores = g.block_matmul_nt(qh, kh, blocks)?;
        let scores = g.scale(scores, 1.0 / (dk as f64).sqrt());
        let a = g.softmax_rows(scores);
        outs.push(g.block_matmul(a, vh, blocks)?);
        weights.push(a);
    }
    let cat = if heads == 1 { outs[0] } else { g.concat_cols(&outs)? };
    let o = g.matmul(cat, w.wo)?;
    Ok((g.add_row(o, w.bo)?, weights))
}

#[derive(Debug, Clone, Copy)]
pub struct FeedForward {
    pub l1: Linear,
    pub l2: Linear,
}

impl FeedForward {
    pub fn forward<R: Rng + ?Sized>(
        &self,
        g: &mut Graph,
        p: &[Var],
        x: Var,
        dropout: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<Var> {
        let h = self.l1.forward(g, p, x)?;
        let h = g.relu(h);
        let h = g.dropout(h, dropout, rng, training)?;
        self.l2.forward(g, p, h)
    }
}

/// Sinusoidal position table: `PE(pos, 2i) = sin(pos / 10000^{2i/d})`,
/// `PE(pos, 2i+1) = cos(pos / 10000^{2i/d})`.
pub fn positional_encoding(length: usize, d_model: usize) -> Result<Tensor> {
    if d_model == 0 || d_model % 2 != 0 {
        return Err(Error::Parameter(format!("positional encoding needs an even width, got {d_model}")));
    }
    if length == 0 {
        return Err(Error::Parameter("positional encoding needs at least one position".into()));
    }
    let mut data = vec![0.0; length * d_model];
    for pos in 0..length {
        for i in 0..d_model / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
            data[pos * d_model + 2 * i] = angle.sin();
            data[pos * d_model + 2 * i + 1] = angle.cos();
        }
    }
    Tensor::matrix(length, d_model, data)
}
