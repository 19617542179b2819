//! Transformer encoder shared by every feature module (`G_o`, `G_t`, `G_a`, `G_r`).
//!
//! Post-norm blocks: self-attention, residual, layer norm, ReLU feed-forward,
//! residual, layer norm. Translation encoders carry learned query tokens that
//! are appended to the input sequence; their output rows become the output
//! sequence, which is how an encoder maps `M` frames to `N` frames.

use rand::Rng;

use crate::error::{Error, Result};
use crate::gradcheck::Parameterized;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub model_dim: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub ffn_hidden: usize,
    /// Number of learned query tokens; `None` for a recognition encoder.
    pub query_len: Option<usize>,
}

impl EncoderConfig {
    /// Two layers, eight heads, feed-forward width `d / 2`.
    pub fn new(model_dim: usize) -> Self {
        EncoderConfig {
            model_dim,
            num_heads: 8,
            num_layers: 2,
            ffn_hidden: model_dim / 2,
            query_len: None,
        }
    }

    pub fn heads(mut self, heads: usize) -> Self {
        self.num_heads = heads;
        self
    }

    pub fn layers(mut self, layers: usize) -> Self {
        self.num_layers = layers;
        self
    }

    pub fn translating(mut self, out_len: usize) -> Self {
        self.query_len = Some(out_len);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.model_dim;
        if d < 2 || !d.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "model dimension must be even and at least 2, got {d}"
            )));
        }
        if self.num_heads == 0 || !d.is_multiple_of(self.num_heads) {
            return Err(Error::InvalidArgument(format!(
                "model dimension {d} is not divisible by {} heads",
                self.num_heads
            )));
        }
        if self.num_layers == 0 || self.ffn_hidden == 0 || self.query_len == Some(0) {
            return Err(Error::InvalidArgument(format!("degenerate encoder config {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderLayer {
    pub wq: Tensor,
    pub wk: Tensor,
    pub wv: Tensor,
    pub wo: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub ln1_gamma: Tensor,
    pub ln1_beta: Tensor,
    pub ln2_gamma: Tensor,
    pub ln2_beta: Tensor,
}

impl EncoderLayer {
    fn init<R: Rng + ?Sized>(d: usize, hidden: usize, rng: &mut R) -> Self {
        let bound = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        EncoderLayer {
            wq: Tensor::uniform(vec![d, d], bound(d), rng),
            wk: Tensor::uniform(vec![d, d], bound(d), rng),
            wv: Tensor::uniform(vec![d, d], bound(d), rng),
            wo: Tensor::uniform(vec![d, d], bound(d), rng),
            w1: Tensor::uniform(vec![d, hidden], bound(d), rng),
            b1: Tensor::zeros(vec![hidden]),
            w2: Tensor::uniform(vec![hidden, d], bound(hidden), rng),
            b2: Tensor::zeros(vec![d]),
            ln1_gamma: Tensor::full(vec![d], 1.0),
            ln1_beta: Tensor::zeros(vec![d]),
            ln2_gamma: Tensor::full(vec![d], 1.0),
            ln2_beta: Tensor::zeros(vec![d]),
        }
    }

    fn fields(&self) -> [(&'static str, &Tensor); 12] {
        [
            ("wq", &self.wq),
            ("wk", &self.wk),
            ("wv", &self.wv),
            ("wo", &self.wo),
            ("w1", &self.w1),
            ("b1", &self.b1),
            ("w2", &self.w2),
            ("b2", &self.b2),
            ("ln1_gamma", &self.ln1_gamma),
            ("ln1_beta", &self.ln1_beta),
            ("ln2_gamma", &self.ln2_gamma),
            ("ln2_beta", &self.ln2_beta),
        ]
    }

    fn fields_mut(&mut self) -> [(&'static str, &mut Tensor); 12] {
        [
            ("wq", &mut self.wq),
            ("wk", &mut self.wk),
            ("wv", &mut self.wv),
            ("wo", &mut self.wo),
            ("w1", &mut self.w1),
            ("b1", &mut self.b1),
            ("w2", &mut self.w2),
            ("b2", &mut self.b2),
            ("ln1_gamma", &mut self.ln1_gamma),
            ("ln1_beta", &mut self.ln1_beta),
            ("ln2_gamma", &mut self.ln2_gamma),
            ("ln2_beta", &mut self.ln2_beta),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams {
    pub num_heads: usize,
    pub ffn_hidden: usize,
    pub layers: Vec<EncoderLayer>,
    pub query_tokens: Option<Tensor>,
}

impl EncoderParams {
    /// Weights uniform in `±1/√fan_in`, biases zero, layer-norm gains one.
    pub fn init<R: Rng + ?Sized>(config: EncoderConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let d = config.model_dim;
        let layers = (0..config.num_layers)
            .map(|_| EncoderLayer::init(d, config.ffn_hidden, rng))
            .collect();
        let bound = 1.0 / (d as f64).sqrt();
        let query_tokens = config
            .query_len
            .map(|l| Tensor::uniform(vec![l, d], bound, rng));
        Ok(EncoderParams {
            num_heads: config.num_heads,
            ffn_hidden: config.ffn_hidden,
            layers,
            query_tokens,
        })
    }

    pub fn model_dim(&self) -> usize {
        self.layers[0].wq.shape()[0]
    }

    pub fn config(&self) -> EncoderConfig {
        EncoderConfig {
            model_dim: self.model_dim(),
            num_heads: self.num_heads,
            num_layers: self.layers.len(),
            ffn_hidden: self.ffn_hidden,
            query_len: self.query_tokens.as_ref().map(|q| q.shape()[0]),
        }
    }

    /// Zeroes every attention and feed-forward weight, leaving only the
    /// residual paths and layer norms active.
    pub fn make_pass_through(&mut self) {
        for layer in &mut self.layers {
            for t in [
                &mut layer.wq,
                &mut layer.wk,
                &mut layer.wv,
                &mut layer.wo,
                &mut layer.w1,
                &mut layer.b1,
                &mut layer.w2,
                &mut layer.b2,
            ] {
                t.data_mut().fill(0.0);
            }
        }
    }

    /// Registers every tensor on `tape` under `prefix.`.
    pub fn bind(&self, tape: &mut Tape, prefix: &str) -> BoundEncoder {
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let mut p = |field: &str, t: &Tensor| tape.param(format!("{prefix}.layer{i}.{field}"), t.clone());
                BoundLayer {
                    wq: p("wq", &l.wq),
                    wk: p("wk", &l.wk),
                    wv: p("wv", &l.wv),
                    wo: p("wo", &l.wo),
                    w1: p("w1", &l.w1),
                    b1: p("b1", &l.b1),
                    w2: p("w2", &l.w2),
                    b2: p("b2", &l.b2),
                    ln1_gamma: p("ln1_gamma", &l.ln1_gamma),
                    ln1_beta: p("ln1_beta", &l.ln1_beta),
                    ln2_gamma: p("ln2_gamma", &l.ln2_gamma),
                    ln2_beta: p("ln2_beta", &l.ln2_beta),
                }
            })
            .collect();
        let query_tokens = self
            .query_tokens
            .as_ref()
            .map(|q| tape.param(format!("{prefix}.query"), q.clone()));
        BoundEncoder {
            num_heads: self.num_heads,
            model_dim: self.model_dim(),
            layers,
            query_tokens,
        }
    }

    /// Single-sequence convenience wrapper around [`encoder_forward`].
    pub fn forward(&self, x: &Tensor, out_len: usize) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, "enc");
        let input = as_batch(&mut tape, x)?;
        let out = encoder_forward(&mut tape, input, &bound, out_len)?;
        let value = tape.value(out).clone();
        let shape = value.shape()[1..].to_vec();
        value.reshape(shape)
    }
}

impl Parameterized for EncoderParams {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            for (field, t) in layer.fields() {
                out.push((format!("layer{i}.{field}"), t));
            }
        }
        if let Some(q) = &self.query_tokens {
            out.push(("query".to_string(), q));
        }
        out
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            for (field, t) in layer.fields_mut() {
                out.push((format!("layer{i}.{field}"), t));
            }
        }
        if let Some(q) = &mut self.query_tokens {
            out.push(("query".to_string(), q));
        }
        out
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundLayer {
    pub wq: Var,
    pub wk: Var,
    pub wv: Var,
    pub wo: Var,
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
    pub ln1_gamma: Var,
    pub ln1_beta: Var,
    pub ln2_gamma: Var,
    pub ln2_beta: Var,
}

#[derive(Clone, Debug)]
pub struct BoundEncoder {
    pub num_heads: usize,
    pub model_dim: usize,
    pub layers: Vec<BoundLayer>,
    pub query_tokens: Option<Var>,
}

/// Lifts a `[T, d]` tensor to a one-sequence batch `[1, T, d]` constant.
pub(crate) fn as_batch(tape: &mut Tape, x: &Tensor) -> Result<Var> {
    let t = match x.shape() {
        [t, d] => x.clone().reshape(vec![1, *t, *d])?,
        [_, _, _] => x.clone(),
        s => {
            return Err(Error::InvalidArgument(format!(
                "expected [T, d] or [B, T, d], got {s:?}"
            )))
        }
    };
    Ok(tape.constant(t))
}

/// Sinusoidal table: `sin(pos / 10000^(2i/d))` at column `2i`, `cos` at `2i + 1`.
pub fn positional_encoding(length: usize, d: usize) -> Result<Tensor> {
    if length == 0 || d < 2 || !d.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!(
            "positional encoding needs length >= 1 and even d >= 2, got length {length}, d {d}"
        )));
    }
    let mut data = vec![0.0; length * d];
    for pos in 0..length {
        for i in 0..d / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
            data[pos * d + 2 * i] = angle.sin();
            data[pos * d + 2 * i + 1] = angle.cos();
        }
    }
    Tensor::new(vec![length, d], data)
}

/// Projects `x[B, T, d]` to queries, keys and values, attends per head, and
/// applies the output projection.
pub fn multi_head_self_attention(
    tape: &mut Tape,
    x: Var,
    layer: &BoundLayer,
    num_heads: usize,
) -> Result<Var> {
    let q = tape.matmul(x, layer.wq)?;
    let k = tape.matmul(x, layer.wk)?;
    let v = tape.matmul(x, layer.wv)?;
    let heads = tape.attention(q, k, v, num_heads)?;
    tape.matmul(heads, layer.wo)
}

fn encoder_block(tape: &mut Tape, h: Var, layer: &BoundLayer, num_heads: usize) -> Result<Var> {
    let attended = multi_head_self_attention(tape, h, layer, num_heads)?;
    let res = tape.add(h, attended)?;
    let h = tape.layer_norm(res, layer.ln1_gamma, layer.ln1_beta, LAYER_NORM_EPS)?;
    let f = tape.matmul(h, layer.w1)?;
    let f = tape.add_broadcast(f, layer.b1)?;
    let f = tape.relu(f)?;
    let f = tape.matmul(f, layer.w2)?;
    let f = tape.add_broadcast(f, layer.b2)?;
    let res = tape.add(h, f)?;
    tape.layer_norm(res, layer.ln2_gamma, layer.ln2_beta, LAYER_NORM_EPS)
}

/// Runs the encoder over `x[B, T_in, d]` and returns `[B, out_len, d]`.
///
/// Without query tokens the encoder is in recognition mode and `out_len`
/// must equal `T_in`. With query tokens, `out_len` must equal their count
/// and the output is read at the query positions.
pub fn encoder_forward(tape: &mut Tape, x: Var, enc: &BoundEncoder, out_len: usize) -> Result<Var> {
    let shape = tape.shape(x).to_vec();
    if shape.len() != 3 || shape[2] != enc.model_dim {
        return Err(Error::GeometryMismatch(
            "encoder_forward",
            format!("input {shape:?} vs model width {}", enc.model_dim),
        ));
    }
    let t_in = shape[1];
    let pe = tape.constant(positional_encoding(t_in, enc.model_dim)?);
    let mut h = tape.add_broadcast(x, pe)?;
    let translate = match enc.query_tokens {
        Some(q) => {
            let l = tape.shape(q)[0];
            if l != out_len {
                return Err(Error::GeometryMismatch(
                    "encoder_forward",
                    format!("encoder has {l} query tokens, requested {out_len} outputs"),
                ));
            }
            h = tape.concat_seq(h, q)?;
            true
        }
        None if out_len == t_in => false,
        None => {
            return Err(Error::InvalidArgument(format!(
                "encoder_forward: {t_in} -> {out_len} translation requires query tokens"
            )))
        }
    };
    for layer in &enc.layers {
        h = encoder_block(tape, h, layer, enc.num_heads)?;
    }
    if translate {
        tape.slice_seq(h, t_in, out_len)
    } else {
        Ok(h)
    }
}
