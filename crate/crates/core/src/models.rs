//! The three anticipation models.
//!
//! * **SE** (semantic experience): `G_o` encodes the observed frames, a
//!   classification head recognizes the observed action, and the experience
//!   MLP `E` maps that label distribution to a future-action distribution.
//! * **PV** (pattern visualization): `G_t` translates observed frames into
//!   future frames and `V` classifies the synthesized future.
//! * **ACT** (cycle transformation): `G_a` translates forward, `V_a`
//!   anticipates from the synthesized future, `G_r` translates back to the
//!   observed window, `V_r` recognizes the observed action from the
//!   reconstruction, and `E` anticipates from that recognition.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::attention::{encoder_forward, BoundEncoder, EncoderConfig, EncoderParams};
use crate::error::{Error, Result};
use crate::gradcheck::Parameterized;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModelKind {
    Se,
    Pv,
    Act,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Se, ModelKind::Pv, ModelKind::Act];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Se => "se",
            ModelKind::Pv => "pv",
            ModelKind::Act => "act",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "se" => Ok(ModelKind::Se),
            "pv" => Ok(ModelKind::Pv),
            "act" | "a-act" => Ok(ModelKind::Act),
            other => Err(Error::InvalidArgument(format!(
                "unknown model kind `{other}` (expected se, pv or act)"
            ))),
        }
    }
}

/// Architecture and example geometry shared by every component of a model.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub observed_len: usize,
    pub future_len: usize,
    pub num_heads: usize,
    pub num_layers: usize,
    pub ffn_hidden: usize,
}

impl ModelConfig {
    pub fn new(kind: ModelKind, feature_dim: usize, num_classes: usize, observed_len: usize, future_len: usize) -> Self {
        ModelConfig {
            kind,
            feature_dim,
            num_classes,
            observed_len,
            future_len,
            num_heads: 8,
            num_layers: 2,
            ffn_hidden: feature_dim / 2,
        }
    }

    fn encoder(&self) -> EncoderConfig {
        EncoderConfig {
            model_dim: self.feature_dim,
            num_heads: self.num_heads,
            num_layers: self.num_layers,
            ffn_hidden: self.ffn_hidden,
            query_len: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder().validate()?;
        if self.num_classes < 2 || self.observed_len == 0 || self.future_len == 0 {
            return Err(Error::InvalidArgument(format!("degenerate model config {self:?}")));
        }
        Ok(())
    }
}

/// Whether a classifier reduces the sequence before or after its MLP.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ClassifyMode {
    /// Mean over frames, then one distribution per sequence.
    Pooled,
    /// One distribution per frame.
    Dense,
}

/// Two-layer perceptron with a ReLU hidden layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

/// `V`, `V_a`, `V_r` and the head of `G_o`: `d → d → A`.
pub type ClassifierParams = Mlp;
/// `E`: `A → A → A`.
pub type ExperienceParams = Mlp;

impl Mlp {
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, output: usize, rng: &mut R) -> Self {
        Mlp {
            w1: Tensor::uniform(vec![input, hidden], 1.0 / (input as f64).sqrt(), rng),
            b1: Tensor::zeros(vec![hidden]),
            w2: Tensor::uniform(vec![hidden, output], 1.0 / (hidden as f64).sqrt(), rng),
            b2: Tensor::zeros(vec![output]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.w2.shape()[1]
    }

    pub fn bind(&self, tape: &mut Tape, prefix: &str) -> BoundMlp {
        BoundMlp {
            w1: tape.param(format!("{prefix}.w1"), self.w1.clone()),
            b1: tape.param(format!("{prefix}.b1"), self.b1.clone()),
            w2: tape.param(format!("{prefix}.w2"), self.w2.clone()),
            b2: tape.param(format!("{prefix}.b2"), self.b2.clone()),
        }
    }
}

impl Parameterized for Mlp {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        vec![
            ("w1".into(), &self.w1),
            ("b1".into(), &self.b1),
            ("w2".into(), &self.w2),
            ("b2".into(), &self.b2),
        ]
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        vec![
            ("w1".into(), &mut self.w1),
            ("b1".into(), &mut self.b1),
            ("w2".into(), &mut self.w2),
            ("b2".into(), &mut self.b2),
        ]
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BoundMlp {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

fn mlp_forward(tape: &mut Tape, x: Var, mlp: &BoundMlp) -> Result<Var> {
    let h = tape.matmul(x, mlp.w1)?;
    let h = tape.add_broadcast(h, mlp.b1)?;
    let h = tape.relu(h)?;
    let o = tape.matmul(h, mlp.w2)?;
    tape.add_broadcast(o, mlp.b2)
}

/// Label distribution(s) from `features[B, T, d]`: `[B, A]` pooled or `[B, T, A]` dense.
pub fn classify(tape: &mut Tape, features: Var, mlp: &BoundMlp, mode: ClassifyMode) -> Result<Var> {
    let shape = tape.shape(features).to_vec();
    if shape.len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "classify expects [batch, time, features], got {shape:?}"
        )));
    }
    let input = match mode {
        ClassifyMode::Pooled => tape.mean_axis(features, 1)?,
        ClassifyMode::Dense => features,
    };
    let logits = mlp_forward(tape, input, mlp)?;
    let axis = tape.shape(logits).len() - 1;
    tape.softmax(logits, axis)
}

/// Future-action distribution `[B, A]` from an observed-action distribution `[B, A]`.
pub fn experience_anticipate(tape: &mut Tape, a_o_hat: Var, e: &BoundMlp) -> Result<Var> {
    let logits = mlp_forward(tape, a_o_hat, e)?;
    let axis = tape.shape(logits).len() - 1;
    tape.softmax(logits, axis)
}

#[allow(clippy::large_enum_variant)]
#[derive(Clone, Debug, PartialEq)]
pub enum Components {
    Se {
        g_o: EncoderParams,
        head: ClassifierParams,
        e: ExperienceParams,
    },
    Pv {
        g_t: EncoderParams,
        v: ClassifierParams,
    },
    Act {
        g_a: EncoderParams,
        g_r: EncoderParams,
        v_a: ClassifierParams,
        v_r: ClassifierParams,
        e: ExperienceParams,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub components: Components,
}

impl ModelParams {
    pub fn init<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (d, a) = (config.feature_dim, config.num_classes);
        let (m, n) = (config.observed_len, config.future_len);
        let enc = config.encoder();
        let components = match config.kind {
            ModelKind::Se => Components::Se {
                g_o: EncoderParams::init(enc, rng)?,
                head: Mlp::init(d, d, a, rng),
                e: Mlp::init(a, a, a, rng),
            },
            ModelKind::Pv => Components::Pv {
                g_t: EncoderParams::init(enc.translating(n), rng)?,
                v: Mlp::init(d, d, a, rng),
            },
            ModelKind::Act => Components::Act {
                g_a: EncoderParams::init(enc.translating(n), rng)?,
                g_r: EncoderParams::init(enc.translating(m), rng)?,
                v_a: Mlp::init(d, d, a, rng),
                v_r: Mlp::init(d, d, a, rng),
                e: Mlp::init(a, a, a, rng),
            },
        };
        Ok(ModelParams { config, components })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    /// Registers every parameter on `tape`, named as in [`Parameterized::named_params`].
    pub fn bind(&self, tape: &mut Tape) -> BoundModel {
        let components = match &self.components {
            Components::Se { g_o, head, e } => BoundComponents::Se {
                g_o: g_o.bind(tape, "g_o"),
                head: head.bind(tape, "head"),
                e: e.bind(tape, "e"),
            },
            Components::Pv { g_t, v } => BoundComponents::Pv {
                g_t: g_t.bind(tape, "g_t"),
                v: v.bind(tape, "v"),
            },
            Components::Act { g_a, g_r, v_a, v_r, e } => BoundComponents::Act {
                g_a: g_a.bind(tape, "g_a"),
                g_r: g_r.bind(tape, "g_r"),
                v_a: v_a.bind(tape, "v_a"),
                v_r: v_r.bind(tape, "v_r"),
                e: e.bind(tape, "e"),
            },
        };
        BoundModel {
            config: self.config,
            components,
        }
    }

    /// Forward pass on `x_o[B, M, d]` (or a single `[M, d]` window) without gradients.
    pub fn predict(&self, x_o: &Tensor) -> Result<ModelOutputs> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let x = crate::attention::as_batch(&mut tape, x_o)?;
        let vars = bound.forward(&mut tape, x)?;
        let take = |v: Option<Var>| v.map(|v| tape.value(v).clone());
        Ok(ModelOutputs {
            x_f_hat: take(vars.x_f_hat),
            a_f_p: take(vars.a_f_p),
            x_o_hat: take(vars.x_o_hat),
            a_o_hat: take(vars.a_o_hat),
            a_f_s: take(vars.a_f_s),
        })
    }

    /// Per-frame future distributions `[B, N, A]` for the dense protocol.
    ///
    /// PV and ACT classify each synthesized future frame; SE has no future
    /// frames, so its single anticipation is repeated across the window.
    pub fn predict_dense(&self, x_o: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape);
        let x = crate::attention::as_batch(&mut tape, x_o)?;
        let vars = bound.forward(&mut tape, x)?;
        let n = self.config.future_len;
        let a = self.config.num_classes;
        let dense = match (&bound.components, vars.x_f_hat) {
            (BoundComponents::Pv { v, .. }, Some(xf)) | (BoundComponents::Act { v_a: v, .. }, Some(xf)) => {
                let out = classify(&mut tape, xf, v, ClassifyMode::Dense)?;
                tape.value(out).clone()
            }
            _ => {
                let pooled = tape.value(vars.anticipation()).clone();
                let b = pooled.rows();
                let mut data = Vec::with_capacity(b * n * a);
                for r in 0..b {
                    for _ in 0..n {
                        data.extend_from_slice(pooled.row(r));
                    }
                }
                Tensor::new(vec![b, n, a], data)?
            }
        };
        Ok(dense)
    }
}

fn prefixed<'a, T>(prefix: &str, items: Vec<(String, T)>) -> impl Iterator<Item = (String, T)> + 'a
where
    T: 'a,
{
    let prefix = prefix.to_string();
    items.into_iter().map(move |(n, t)| (format!("{prefix}.{n}"), t))
}

impl Parameterized for ModelParams {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        match &self.components {
            Components::Se { g_o, head, e } => prefixed("g_o", g_o.named_params())
                .chain(prefixed("head", head.named_params()))
                .chain(prefixed("e", e.named_params()))
                .collect(),
            Components::Pv { g_t, v } => prefixed("g_t", g_t.named_params())
                .chain(prefixed("v", v.named_params()))
                .collect(),
            Components::Act { g_a, g_r, v_a, v_r, e } => prefixed("g_a", g_a.named_params())
                .chain(prefixed("g_r", g_r.named_params()))
                .chain(prefixed("v_a", v_a.named_params()))
                .chain(prefixed("v_r", v_r.named_params()))
                .chain(prefixed("e", e.named_params()))
                .collect(),
        }
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        match &mut self.components {
            Components::Se { g_o, head, e } => prefixed("g_o", g_o.named_params_mut())
                .chain(prefixed("head", head.named_params_mut()))
                .chain(prefixed("e", e.named_params_mut()))
                .collect(),
            Components::Pv { g_t, v } => prefixed("g_t", g_t.named_params_mut())
                .chain(prefixed("v", v.named_params_mut()))
                .collect(),
            Components::Act { g_a, g_r, v_a, v_r, e } => prefixed("g_a", g_a.named_params_mut())
                .chain(prefixed("g_r", g_r.named_params_mut()))
                .chain(prefixed("v_a", v_a.named_params_mut()))
                .chain(prefixed("v_r", v_r.named_params_mut()))
                .chain(prefixed("e", e.named_params_mut()))
                .collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum BoundComponents {
    Se {
        g_o: BoundEncoder,
        head: BoundMlp,
        e: BoundMlp,
    },
    Pv {
        g_t: BoundEncoder,
        v: BoundMlp,
    },
    Act {
        g_a: BoundEncoder,
        g_r: BoundEncoder,
        v_a: BoundMlp,
        v_r: BoundMlp,
        e: BoundMlp,
    },
}

#[derive(Clone, Debug)]
pub struct BoundModel {
    pub config: ModelConfig,
    pub components: BoundComponents,
}

/// Tape handles for whatever a model kind produces.
#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardVars {
    pub x_f_hat: Option<Var>,
    pub a_f_p: Option<Var>,
    pub x_o_hat: Option<Var>,
    pub a_o_hat: Option<Var>,
    pub a_f_s: Option<Var>,
}

impl ForwardVars {
    /// The distribution used to anticipate `a_f`: `â_f^s` for SE, `â_f^p` otherwise.
    pub fn anticipation(&self) -> Var {
        self.a_f_p
            .or(self.a_f_s)
            .expect("every model kind produces an anticipation")
    }
}

/// Tensor values of a forward pass. `None` where the model kind has no such output.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutputs {
    pub x_f_hat: Option<Tensor>,
    pub a_f_p: Option<Tensor>,
    pub x_o_hat: Option<Tensor>,
    pub a_o_hat: Option<Tensor>,
    pub a_f_s: Option<Tensor>,
}

impl ModelOutputs {
    pub fn anticipation(&self) -> &Tensor {
        self.a_f_p
            .as_ref()
            .or(self.a_f_s.as_ref())
            .expect("every model kind produces an anticipation")
    }
}

/// `(â_o, â_f^s)`.
pub fn se_forward(tape: &mut Tape, x_o: Var, g_o: &BoundEncoder, head: &BoundMlp, e: &BoundMlp) -> Result<(Var, Var)> {
    let m = tape.shape(x_o)[1];
    let h = encoder_forward(tape, x_o, g_o, m)?;
    let a_o_hat = classify(tape, h, head, ClassifyMode::Pooled)?;
    let a_f_s = experience_anticipate(tape, a_o_hat, e)?;
    Ok((a_o_hat, a_f_s))
}

/// `(X̂_f, â_f^p)`.
pub fn pv_forward(tape: &mut Tape, x_o: Var, g_t: &BoundEncoder, v: &BoundMlp, n: usize) -> Result<(Var, Var)> {
    let x_f_hat = encoder_forward(tape, x_o, g_t, n)?;
    let a_f_p = classify(tape, x_f_hat, v, ClassifyMode::Pooled)?;
    Ok((x_f_hat, a_f_p))
}

#[derive(Clone, Copy, Debug)]
pub struct ActVars {
    pub x_f_hat: Var,
    pub a_f_p: Var,
    pub x_o_hat: Var,
    pub a_o_hat: Var,
    pub a_f_s: Var,
}

/// The full cycle: forward translation, anticipation, reverse translation,
/// recognition, and experience-based anticipation.
#[allow(clippy::too_many_arguments)]
pub fn act_forward(
    tape: &mut Tape,
    x_o: Var,
    g_a: &BoundEncoder,
    g_r: &BoundEncoder,
    v_a: &BoundMlp,
    v_r: &BoundMlp,
    e: &BoundMlp,
    n: usize,
) -> Result<ActVars> {
    let m = tape.shape(x_o)[1];
    let x_f_hat = encoder_forward(tape, x_o, g_a, n)?;
    let a_f_p = classify(tape, x_f_hat, v_a, ClassifyMode::Pooled)?;
    let x_o_hat = encoder_forward(tape, x_f_hat, g_r, m)?;
    let a_o_hat = classify(tape, x_o_hat, v_r, ClassifyMode::Pooled)?;
    let a_f_s = experience_anticipate(tape, a_o_hat, e)?;
    Ok(ActVars {
        x_f_hat,
        a_f_p,
        x_o_hat,
        a_o_hat,
        a_f_s,
    })
}

impl BoundModel {
    /// Runs the model's forward pass on `x_o[B, M, d]`.
    pub fn forward(&self, tape: &mut Tape, x_o: Var) -> Result<ForwardVars> {
        let c = &self.config;
        let shape = tape.shape(x_o);
        if shape.len() != 3 || shape[1] != c.observed_len || shape[2] != c.feature_dim {
            return Err(Error::GeometryMismatch(
                "forward",
                format!(
                    "input {shape:?} vs observed window {}×{}",
                    c.observed_len, c.feature_dim
                ),
            ));
        }
        let n = c.future_len;
        Ok(match &self.components {
            BoundComponents::Se { g_o, head, e } => {
                let (a_o_hat, a_f_s) = se_forward(tape, x_o, g_o, head, e)?;
                ForwardVars {
                    a_o_hat: Some(a_o_hat),
                    a_f_s: Some(a_f_s),
                    ..Default::default()
                }
            }
            BoundComponents::Pv { g_t, v } => {
                let (x_f_hat, a_f_p) = pv_forward(tape, x_o, g_t, v, n)?;
                ForwardVars {
                    x_f_hat: Some(x_f_hat),
                    a_f_p: Some(a_f_p),
                    ..Default::default()
                }
            }
            BoundComponents::Act { g_a, g_r, v_a, v_r, e } => {
                let out = act_forward(tape, x_o, g_a, g_r, v_a, v_r, e, n)?;
                ForwardVars {
                    x_f_hat: Some(out.x_f_hat),
                    a_f_p: Some(out.a_f_p),
                    x_o_hat: Some(out.x_o_hat),
                    a_o_hat: Some(out.a_o_hat),
                    a_f_s: Some(out.a_f_s),
                }
            }
        })
    }
}
