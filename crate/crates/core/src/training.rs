//! Mini-batch Adam training and the checkpoint format.
//!
//! # Checkpoint layout
//!
//! Little-endian throughout:
//!
//! ```text
//! magic        8 bytes   b"AACTCP1\0"
//! version      u32       1
//! echo_len     u32       length of the config echo
//! echo         bytes     UTF-8 `key = value` lines describing the architecture
//! count        u32       number of tensor records
//! count × {
//!     name_len u32, name bytes (UTF-8)
//!     ndim     u32, ndim × u64 extents
//!     data     product(extents) × f64
//! }
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{AnticipationExample, Dataset, Geometry};
use crate::error::{Error, Result};
use crate::gradcheck::{compare, finite_diff_grad_piecewise, Coordinate, Parameterized, FD_STEP};
use crate::losses::{composed_losses, LossBreakdown, LossConfig, Targets};
use crate::models::{ModelConfig, ModelKind, ModelParams};
use crate::rng;
use crate::tape::{GradientMap, Tape};
use crate::tensor::Tensor;

/// Largest relative error a gradient check may report.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

/// First and second moments per parameter, each with its own step count.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    moments: BTreeMap<String, Moments>,
}

impl AdamState {
    pub fn step_of(&self, name: &str) -> u64 {
        self.moments.get(name).map_or(0, |m| m.step)
    }
}

/// One bias-corrected Adam update. Parameters without a gradient are left alone.
pub fn adam_step<P: Parameterized>(
    params: &mut P,
    grads: &GradientMap,
    state: &mut AdamState,
    hyper: &AdamConfig,
) -> Result<()> {
    let mut named = params.named_params_mut();
    for (name, grad) in grads.iter() {
        let Some((_, param)) = named.iter_mut().find(|(n, _)| n == name) else {
            return Err(Error::InvalidArgument(format!("gradient for unknown parameter `{name}`")));
        };
        if param.shape() != grad.shape() {
            return Err(Error::shape("adam_step", param.shape(), grad.shape()));
        }
        let n = grad.numel();
        let mom = state.moments.entry(name.to_string()).or_insert_with(|| Moments {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        });
        mom.step += 1;
        let t = mom.step as i32;
        let c1 = 1.0 - hyper.beta1.powi(t);
        let c2 = 1.0 - hyper.beta2.powi(t);
        for (((p, &g), m), v) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(mom.m.iter_mut())
            .zip(mom.v.iter_mut())
        {
            *m = hyper.beta1 * *m + (1.0 - hyper.beta1) * g;
            *v = hyper.beta2 * *v + (1.0 - hyper.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.eps);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model_kind: ModelKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub loss: LossConfig,
    pub seed: u64,
    pub geometry: Geometry,
    pub num_heads: usize,
    pub num_layers: usize,
    /// Verify a sampled set of gradient coordinates on the first batch.
    pub gradcheck: bool,
    pub gradcheck_coords: usize,
}

impl TrainConfig {
    /// Desk-scale defaults: `d = 16`, `A = 12`, `M = 8`, `N = 4`, `k = 4`, 8 heads, 2 layers.
    pub fn desk(model_kind: ModelKind, seed: u64) -> Self {
        TrainConfig {
            model_kind,
            epochs: 30,
            batch_size: 16,
            adam: AdamConfig::default(),
            loss: LossConfig::default(),
            seed,
            geometry: Geometry {
                feature_dim: 16,
                num_classes: 12,
                observed_len: 8,
                future_len: 4,
                horizon: 4,
            },
            num_heads: 8,
            num_layers: 2,
            gradcheck: false,
            gradcheck_coords: 64,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        let g = self.geometry;
        let mut c = ModelConfig::new(self.model_kind, g.feature_dim, g.num_classes, g.observed_len, g.future_len);
        c.num_heads = self.num_heads;
        c.num_layers = self.num_layers;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.adam;
        let positive = [a.learning_rate, a.eps, self.batch_size as f64];
        if positive.iter().any(|v| v.is_nan() || *v <= 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) {
            return Err(Error::InvalidArgument(format!("invalid optimizer settings {a:?}, batch {}", self.batch_size)));
        }
        let l = &self.loss;
        if [l.lambda_s, l.lambda_p, l.lambda_c].iter().any(|v| v.is_nan() || *v < 0.0) {
            return Err(Error::InvalidArgument("loss weights must be non-negative".into()));
        }
        self.model_config().validate()
    }
}

/// A batch in tensor form.
#[derive(Clone, Debug)]
pub struct Batch {
    /// `[B, M, d]`
    pub x_o: Tensor,
    /// `[B, N, d]`
    pub x_f: Tensor,
    pub a_o: Vec<usize>,
    pub a_f: Vec<usize>,
}

impl Batch {
    pub fn new(examples: &[&AnticipationExample]) -> Result<Self> {
        let first = examples.first().ok_or(Error::Empty("batch"))?;
        let (m, n, d) = (first.x_o.shape()[0], first.x_f.shape()[0], first.x_o.shape()[1]);
        let b = examples.len();
        let mut xo = Vec::with_capacity(b * m * d);
        let mut xf = Vec::with_capacity(b * n * d);
        for ex in examples {
            xo.extend_from_slice(ex.x_o.data());
            xf.extend_from_slice(ex.x_f.data());
        }
        Ok(Batch {
            x_o: Tensor::new(vec![b, m, d], xo)?,
            x_f: Tensor::new(vec![b, n, d], xf)?,
            a_o: examples.iter().map(|e| e.a_o).collect(),
            a_f: examples.iter().map(|e| e.a_f).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.a_f.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a_f.is_empty()
    }
}

/// Result of one forward/backward pass over a batch.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub breakdown: LossBreakdown,
    pub grads: GradientMap,
    /// Anticipation distribution per example, `[B, A]`.
    pub anticipation: Tensor,
    /// `â_f^p` for ACT, the value the semantic cycle term treats as constant.
    pub cycle_target: Option<Tensor>,
}

/// Forward pass, composed objective and reverse pass for one batch.
pub fn loss_and_grads(params: &ModelParams, batch: &Batch, loss: &LossConfig) -> Result<StepOutput> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let x_o = tape.constant(batch.x_o.clone());
    let x_f = tape.constant(batch.x_f.clone());
    let outputs = bound.forward(&mut tape, x_o)?;
    let targets = Targets {
        x_o,
        x_f,
        a_o: &batch.a_o,
        a_f: &batch.a_f,
        frozen_cycle_target: None,
    };
    let vars = composed_losses(&mut tape, params.kind(), &outputs, &targets, loss)?;
    let breakdown = vars.breakdown(&tape, loss);
    if !breakdown.total.is_finite() {
        return Err(Error::NonFinite("training loss"));
    }
    let anticipation = tape.value(outputs.anticipation()).clone();
    let cycle_target = match params.kind() {
        ModelKind::Act => outputs.a_f_p.map(|v| tape.value(v).clone()),
        _ => None,
    };
    let grads = tape.backward(vars.total)?;
    Ok(StepOutput {
        breakdown,
        grads,
        anticipation,
        cycle_target,
    })
}

/// The composed objective alone.
pub fn batch_loss(params: &ModelParams, batch: &Batch, loss: &LossConfig) -> Result<f64> {
    Ok(batch_loss_with_pattern(params, batch, loss, None)?.0)
}

/// The composed objective together with the tape's activation pattern,
/// optionally with the semantic-cycle target held at `frozen`.
pub fn batch_loss_with_pattern(
    params: &ModelParams,
    batch: &Batch,
    loss: &LossConfig,
    frozen: Option<&Tensor>,
) -> Result<(f64, u64)> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let x_o = tape.constant(batch.x_o.clone());
    let x_f = tape.constant(batch.x_f.clone());
    let outputs = bound.forward(&mut tape, x_o)?;
    let targets = Targets {
        x_o,
        x_f,
        a_o: &batch.a_o,
        a_f: &batch.a_f,
        frozen_cycle_target: frozen,
    };
    let vars = composed_losses(&mut tape, params.kind(), &outputs, &targets, loss)?;
    Ok((tape.value(vars.total).item().expect("scalar"), tape.activation_pattern()))
}

/// Outcome of [`check_gradients`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckSummary {
    pub worst_param: String,
    /// Largest per-parameter relative error over the compared coordinates.
    pub max_error: f64,
    pub compared: usize,
    /// Coordinates skipped because their perturbation crossed a ReLU kink.
    pub kinks: usize,
}

/// Checks analytic gradients of the composed objective against central
/// differences. `coords = None` checks every coordinate.
///
/// The stop-gradient target of the semantic cycle term is evaluated once at
/// the unperturbed parameters and held fixed, so the numeric derivative
/// differentiates the same function the tape does.
pub fn check_gradients(
    params: &ModelParams,
    batch: &Batch,
    loss: &LossConfig,
    coords: Option<&[Coordinate]>,
) -> Result<GradCheckSummary> {
    let step = loss_and_grads(params, batch, loss)?;
    let analytic = step.grads;
    let frozen = step.cycle_target;
    let mut probe = params.clone();
    let all: Vec<Coordinate>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = probe
                .named_params()
                .iter()
                .flat_map(|(n, t)| (0..t.numel()).map(move |i| (n.clone(), i)))
                .collect();
            &all
        }
    };
    let (numeric, kinks) =
        finite_diff_grad_piecewise(&mut probe, FD_STEP, coords, |p| {
        batch_loss_with_pattern(p, batch, loss, frozen.as_ref())
    })?;
    let smooth: Vec<Coordinate> = coords.iter().filter(|c| !kinks.contains(c)).cloned().collect();
    let report = compare(params, &analytic, &numeric, Some(&smooth));
    let (worst_param, max_error) = report.worst().cloned().unwrap_or_default();
    Ok(GradCheckSummary {
        worst_param,
        max_error,
        compared: smooth.len(),
        kinks: kinks.len(),
    })
}

/// `count` random coordinates, at least one from every parameter tensor.
pub fn sample_coordinates<R: Rng + ?Sized>(params: &ModelParams, count: usize, rng: &mut R) -> Vec<Coordinate> {
    let named = params.named_params();
    let mut out: Vec<Coordinate> = named
        .iter()
        .map(|(n, t)| (n.clone(), rng.random_range(0..t.numel())))
        .collect();
    while out.len() < count {
        let (n, t) = &named[rng.random_range(0..named.len())];
        out.push((n.clone(), rng.random_range(0..t.numel())));
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Batch-size-weighted mean of every component over the epoch.
    pub mean: LossBreakdown,
    pub train_top1: f64,
    pub val_top1: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// One record per optimizer step, in order.
    pub steps: Vec<LossBreakdown>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,l_s,l_p,l_cyc_p,l_cyc_s,l_c,total,train_top1,val_top1\n");
        for r in &self.epochs {
            let m = &r.mean;
            let val = r.val_top1.map(|v| v.to_string()).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.epoch, m.l_s, m.l_p, m.l_cyc_p, m.l_cyc_s, m.l_c, m.total, r.train_top1, val
            ));
        }
        out
    }
}

fn check_geometry(what: &'static str, data: &Dataset, expected: Geometry) -> Result<()> {
    if data.geometry != expected {
        return Err(Error::GeometryMismatch(
            what,
            format!("dataset {:?} vs config {expected:?}", data.geometry),
        ));
    }
    Ok(())
}

fn top1(pred: &Tensor, targets: &[usize]) -> usize {
    pred.argmax_rows()
        .iter()
        .zip(targets)
        .filter(|(p, t)| p == t)
        .count()
}

/// Trains a fresh model of `config.model_kind` on `train`.
///
/// Initialization and epoch shuffling draw from streams derived from
/// `config.seed`, so identical configs produce bitwise-identical parameters.
pub fn train(config: &TrainConfig, train: &Dataset, validation: &Dataset) -> Result<(ModelParams, TrainHistory)> {
    config.validate()?;
    check_geometry("train", train, config.geometry)?;
    check_geometry("validation", validation, config.geometry)?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let mut init_rng = rng::seeded(rng::derive(config.seed, 0x1417));
    let mut params = ModelParams::init(config.model_config(), &mut init_rng)?;
    let mut shuffle_rng = rng::seeded(rng::derive(config.seed, 0x5AFF));
    let mut state = AdamState::default();
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut sums = [0.0; 6];
        let mut correct = 0;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let refs: Vec<&AnticipationExample> = chunk.iter().map(|&i| &train.examples[i]).collect();
            let batch = Batch::new(&refs)?;
            if config.gradcheck && epoch == 0 && bi == 0 {
                let mut coord_rng = rng::seeded(rng::derive(config.seed, 0x6C4C));
                let coords = sample_coordinates(&params, config.gradcheck_coords, &mut coord_rng);
                let summary = check_gradients(&params, &batch, &config.loss, Some(&coords))?;
                if summary.max_error > GRADCHECK_TOLERANCE {
                    return Err(Error::GradientCheck {
                        name: summary.worst_param,
                        error: summary.max_error,
                        tolerance: GRADCHECK_TOLERANCE,
                    });
                }
            }
            let step = loss_and_grads(&params, &batch, &config.loss)?;
            adam_step(&mut params, &step.grads, &mut state, &config.adam)?;
            let b = step.breakdown;
            let w = batch.len() as f64;
            for (s, v) in sums.iter_mut().zip([b.l_s, b.l_p, b.l_cyc_p, b.l_cyc_s, b.l_c, b.total]) {
                *s += w * v;
            }
            correct += top1(&step.anticipation, &batch.a_f);
            history.steps.push(b);
        }
        let n = train.len() as f64;
        let l = &config.loss;
        let mean = LossBreakdown {
            l_s: sums[0] / n,
            l_p: sums[1] / n,
            l_cyc_p: sums[2] / n,
            l_cyc_s: sums[3] / n,
            l_c: sums[4] / n,
            total: sums[5] / n,
            lambda_s: l.lambda_s,
            lambda_p: l.lambda_p,
            lambda_c: l.lambda_c,
        };
        let val_top1 = if validation.is_empty() {
            None
        } else {
            let preds = crate::evaluation::predict(&params, validation)?;
            let targets: Vec<usize> = validation.examples.iter().map(|e| e.a_f).collect();
            Some(crate::evaluation::top_k_accuracy(&preds, &targets, 1)?)
        };
        history.epochs.push(EpochRecord {
            epoch,
            mean,
            train_top1: correct as f64 / n,
            val_top1,
        });
    }
    Ok((params, history))
}

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"AACTCP1\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn config_echo(c: &ModelConfig) -> String {
    format!(
        "kind = {}\nd = {}\nA = {}\nM = {}\nN = {}\nheads = {}\nlayers = {}\nffn_hidden = {}\n",
        c.kind, c.feature_dim, c.num_classes, c.observed_len, c.future_len, c.num_heads, c.num_layers, c.ffn_hidden
    )
}

fn parse_echo(text: &str, path: &Path) -> Result<ModelConfig> {
    let bad = |reason: String| Error::BadHeader {
        path: path.to_path_buf(),
        reason,
    };
    let mut kv = BTreeMap::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| bad(format!("malformed config line `{line}`")))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let num = |key: &str| -> Result<usize> {
        kv.get(key)
            .ok_or_else(|| bad(format!("config echo lacks `{key}`")))?
            .parse()
            .map_err(|_| bad(format!("config `{key}` is not a count")))
    };
    let kind: ModelKind = kv
        .get("kind")
        .ok_or_else(|| bad("config echo lacks `kind`".into()))?
        .parse()?;
    Ok(ModelConfig {
        kind,
        feature_dim: num("d")?,
        num_classes: num("A")?,
        observed_len: num("M")?,
        future_len: num("N")?,
        num_heads: num("heads")?,
        num_layers: num("layers")?,
        ffn_hidden: num("ffn_hidden")?,
    })
}

pub fn encode_checkpoint(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    let echo = config_echo(&params.config);
    out.extend_from_slice(&(echo.len() as u32).to_le_bytes());
    out.extend_from_slice(echo.as_bytes());
    let named = params.named_params();
    out.extend_from_slice(&(named.len() as u32).to_le_bytes());
    for (name, t) in named {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &e in t.shape() {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn checkpoint_save(params: &ModelParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_checkpoint(params)).map_err(|e| Error::io(path, e))
}

pub fn checkpoint_load(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}

/// Loads a checkpoint and insists its architecture equals `expected`.
pub fn checkpoint_load_expecting(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<ModelParams> {
    let params = checkpoint_load(path)?;
    let c = params.config;
    let pairs = [
        ("kind", c.kind.to_string(), expected.kind.to_string()),
        ("d", c.feature_dim.to_string(), expected.feature_dim.to_string()),
        ("A", c.num_classes.to_string(), expected.num_classes.to_string()),
        ("M", c.observed_len.to_string(), expected.observed_len.to_string()),
        ("N", c.future_len.to_string(), expected.future_len.to_string()),
        ("heads", c.num_heads.to_string(), expected.num_heads.to_string()),
        ("layers", c.num_layers.to_string(), expected.num_layers.to_string()),
    ];
    for (key, found, want) in pairs {
        if found != want {
            return Err(Error::ConfigMismatch {
                key: key.to_string(),
                found,
                expected: want,
            });
        }
    }
    Ok(params)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8], path: &Path) -> Result<ModelParams> {
    let bad = |reason: &str| Error::BadHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8) != Some(CHECKPOINT_MAGIC.as_slice()) {
        return Err(bad("wrong magic"));
    }
    let version = r.u32().ok_or_else(|| bad("truncated header"))?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let echo_len = r.u32().ok_or_else(|| bad("truncated header"))? as usize;
    let echo = r.take(echo_len).ok_or_else(|| bad("truncated config echo"))?;
    let echo = std::str::from_utf8(echo).map_err(|_| bad("config echo is not UTF-8"))?;
    let config = parse_echo(echo, path)?;
    config.validate()?;
    let count = r.u32().ok_or_else(|| bad("truncated header"))? as usize;

    let mut params = ModelParams::init(config, &mut rng::seeded(0))?;
    let mut seen = BTreeMap::new();
    {
        let mut named = params.named_params_mut();
        for i in 0..count {
            let placeholder = format!("<record {i}>");
            let truncated = |name: &str| Error::TruncatedTensor {
                path: path.to_path_buf(),
                name: name.to_string(),
            };
            let name_len = r.u32().ok_or_else(|| truncated(&placeholder))? as usize;
            let name = r.take(name_len).ok_or_else(|| truncated(&placeholder))?;
            let name = String::from_utf8(name.to_vec()).map_err(|_| bad("tensor name is not UTF-8"))?;
            let ndim = r.u32().ok_or_else(|| truncated(&name))? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u64().ok_or_else(|| truncated(&name))? as usize);
            }
            let Some((_, slot)) = named.iter_mut().find(|(n, _)| *n == name) else {
                return Err(bad(&format!("unexpected tensor `{name}`")));
            };
            if slot.shape() != shape.as_slice() {
                return Err(Error::TensorShape {
                    path: path.to_path_buf(),
                    name,
                    found: shape,
                    expected: slot.shape().to_vec(),
                });
            }
            let raw = r.take(slot.numel() * 8).ok_or_else(|| truncated(&name))?;
            for (dst, b) in slot.data_mut().iter_mut().zip(raw.chunks_exact(8)) {
                *dst = f64::from_le_bytes(b.try_into().unwrap());
            }
            seen.insert(name, ());
        }
    }
    if r.pos != bytes.len() {
        return Err(bad("trailing bytes after last tensor"));
    }
    if let Some((name, _)) = params.named_params().into_iter().find(|(n, _)| !seen.contains_key(n)) {
        return Err(Error::MissingTensor {
            path: path.to_path_buf(),
            name,
        });
    }
    Ok(params)
}
