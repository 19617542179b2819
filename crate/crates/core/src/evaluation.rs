//! Metrics, evaluation protocols and experiment suites.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::data::{generate, stratified_subset, DataConfig, Dataset};
use crate::error::{Error, Result};
use crate::losses::LossTerms;
use crate::models::{ModelKind, ModelParams};
use crate::rng;
use crate::tensor::Tensor;
use crate::training::{train, TrainConfig};

/// Examples per forward pass during evaluation.
pub const EVAL_CHUNK: usize = 64;

/// Fraction of rows whose target is among the `k` highest-scoring classes.
/// Equal scores rank the lower class index first.
pub fn top_k_accuracy(predictions: &[Vec<f64>], targets: &[usize], k: usize) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let classes = predictions[0].len();
    if k == 0 || k > classes {
        return Err(Error::InvalidArgument(format!("k = {k} outside 1..={classes}")));
    }
    let mut hits = 0usize;
    for (row, &t) in predictions.iter().zip(targets) {
        if row.len() != classes {
            return Err(Error::InvalidArgument("ragged prediction rows".into()));
        }
        if t >= classes {
            return Err(Error::ClassOutOfRange { index: t, classes });
        }
        // Rank of t: classes strictly better, plus equal ones with lower index.
        let rank = row
            .iter()
            .enumerate()
            .filter(|&(c, &p)| p > row[t] || (p == row[t] && c < t))
            .count();
        if rank < k {
            hits += 1;
        }
    }
    Ok(hits as f64 / predictions.len() as f64)
}

/// Per-class frame accuracy averaged over the classes present in `targets`.
pub fn moc_accuracy(predictions: &[usize], targets: &[usize], num_classes: usize) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predicted frames for {} target frames",
            predictions.len(),
            targets.len()
        )));
    }
    if targets.is_empty() {
        return Err(Error::Empty("frames"));
    }
    let mut total = vec![0usize; num_classes];
    let mut correct = vec![0usize; num_classes];
    for (&p, &t) in predictions.iter().zip(targets) {
        if t >= num_classes {
            return Err(Error::ClassOutOfRange {
                index: t,
                classes: num_classes,
            });
        }
        total[t] += 1;
        if p == t {
            correct[t] += 1;
        }
    }
    let present: Vec<f64> = total
        .iter()
        .zip(&correct)
        .filter(|(t, _)| **t > 0)
        .map(|(t, c)| *c as f64 / *t as f64)
        .collect();
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

/// Runs `f` over `items`, honoring `AACT_THREADS` (unset: rayon default, `0`: serial).
/// Output order matches input order.
pub fn parallel_map<T, U, F>(items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    match std::env::var("AACT_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()) {
        Some(0) => items.iter().map(&f).collect(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(|| items.par_iter().map(&f).collect()),
        None => items.par_iter().map(&f).collect(),
    }
}

fn stacked_inputs(data: &Dataset) -> Result<Vec<Tensor>> {
    let g = data.geometry;
    data.examples
        .chunks(EVAL_CHUNK)
        .map(|chunk| {
            let mut buf = Vec::with_capacity(chunk.len() * g.observed_len * g.feature_dim);
            for ex in chunk {
                buf.extend_from_slice(ex.x_o.data());
            }
            Tensor::new(vec![chunk.len(), g.observed_len, g.feature_dim], buf)
        })
        .collect()
}

fn check_model_geometry(model: &ModelParams, data: &Dataset) -> Result<()> {
    let c = &model.config;
    let g = &data.geometry;
    if (c.feature_dim, c.num_classes, c.observed_len, c.future_len)
        != (g.feature_dim, g.num_classes, g.observed_len, g.future_len)
    {
        return Err(Error::GeometryMismatch(
            "evaluation",
            format!("model {c:?} vs dataset {g:?}"),
        ));
    }
    if data.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    Ok(())
}

/// Pooled anticipation distribution for every example, in dataset order.
pub fn predict(model: &ModelParams, data: &Dataset) -> Result<Vec<Vec<f64>>> {
    check_model_geometry(model, data)?;
    let inputs = stacked_inputs(data)?;
    let chunks = parallel_map(&inputs, |x| {
        let out = model.predict(x)?;
        let a = out.anticipation();
        Ok((0..a.rows()).map(|i| a.row(i).to_vec()).collect::<Vec<_>>())
    })?;
    Ok(chunks.into_iter().flatten().collect())
}

/// Per-frame class predictions over the future window, flattened in dataset order.
pub fn predict_dense(model: &ModelParams, data: &Dataset) -> Result<Vec<usize>> {
    check_model_geometry(model, data)?;
    let inputs = stacked_inputs(data)?;
    let chunks = parallel_map(&inputs, |x| Ok(model.predict_dense(x)?.argmax_rows()))?;
    Ok(chunks.into_iter().flatten().collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Protocol {
    /// Pooled Top-1 and Top-5 on the future label.
    AtHorizon,
    /// MoC over the future-window frame labels.
    DenseFuture,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::AtHorizon => "at_horizon",
            Protocol::DenseFuture => "dense_future",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "at_horizon" => Ok(Protocol::AtHorizon),
            "dense_future" => Ok(Protocol::DenseFuture),
            other => Err(Error::InvalidArgument(format!("unknown protocol `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub protocol: String,
    pub model: String,
    pub param: String,
    pub metric: String,
    pub value: f64,
    pub seed: u64,
    pub n: usize,
}

pub const REPORT_HEADER: &str = "protocol,model,param,metric,value,seed,n";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn extend(&mut self, other: EvalReport) {
        self.rows.extend(other.rows);
    }

    /// Rows in canonical order.
    pub fn sorted(&self) -> Vec<&EvalRow> {
        let mut rows: Vec<&EvalRow> = self.rows.iter().collect();
        rows.sort_by(|a, b| {
            (&a.protocol, &a.model, &a.param, &a.metric, a.seed)
                .cmp(&(&b.protocol, &b.model, &b.param, &b.metric, b.seed))
                .then(a.value.total_cmp(&b.value))
        });
        rows
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{REPORT_HEADER}\n");
        for r in self.sorted() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.protocol, r.model, r.param, r.metric, r.value, r.seed, r.n
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(REPORT_HEADER) {
            return Err(Error::InvalidArgument("report lacks the expected header".into()));
        }
        let mut rows = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::InvalidArgument(format!("malformed report row `{line}`"));
            if f.len() != 7 {
                return Err(bad());
            }
            rows.push(EvalRow {
                protocol: f[0].into(),
                model: f[1].into(),
                param: f[2].into(),
                metric: f[3].into(),
                value: f[4].parse().map_err(|_| bad())?,
                seed: f[5].parse().map_err(|_| bad())?,
                n: f[6].parse().map_err(|_| bad())?,
            });
        }
        Ok(EvalReport { rows })
    }

    /// Mean over seeds of the matching rows.
    pub fn seed_mean(&self, model: &str, param: &str, metric: &str) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.model == model && r.param == param && r.metric == metric)
            .map(|r| r.value)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// `series,x,y` lines: one series per model, one point per param, y the seed mean.
    pub fn plot_data(&self, metric: &str) -> String {
        let mut groups: BTreeMap<(&str, &str), Vec<f64>> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.metric == metric) {
            groups.entry((&r.model, &r.param)).or_default().push(r.value);
        }
        let mut points: Vec<(&str, &str, f64)> = groups
            .into_iter()
            .map(|((m, p), v)| (m, p, v.iter().sum::<f64>() / v.len() as f64))
            .collect();
        points.sort_by(|a, b| {
            a.0.cmp(b.0).then(match (a.1.parse::<f64>(), b.1.parse::<f64>()) {
                (Ok(x), Ok(y)) => x.total_cmp(&y),
                _ => a.1.cmp(b.1),
            })
        });
        let mut out = String::from("series,x,y\n");
        for (m, p, y) in points {
            out.push_str(&format!("{m},{p},{y}\n"));
        }
        out
    }
}

/// Evaluates one model. Rows are labelled with `model`'s kind, the dataset
/// horizon as param, and `seed`.
pub fn evaluate(model: &ModelParams, data: &Dataset, protocol: Protocol, seed: u64) -> Result<EvalReport> {
    let row = |metric: &str, value: f64, n: usize| EvalRow {
        protocol: protocol.to_string(),
        model: model.kind().to_string(),
        param: data.geometry.horizon.to_string(),
        metric: metric.to_string(),
        value,
        seed,
        n,
    };
    let rows = match protocol {
        Protocol::AtHorizon => {
            let preds = predict(model, data)?;
            let targets: Vec<usize> = data.examples.iter().map(|e| e.a_f).collect();
            let k5 = 5.min(model.config.num_classes);
            vec![
                row("top1", top_k_accuracy(&preds, &targets, 1)?, data.len()),
                row("top5", top_k_accuracy(&preds, &targets, k5)?, data.len()),
            ]
        }
        Protocol::DenseFuture => {
            let preds = predict_dense(model, data)?;
            let targets: Vec<usize> = data
                .examples
                .iter()
                .flat_map(|e| e.future_labels.iter().copied())
                .collect();
            vec![row("moc", moc_accuracy(&preds, &targets, model.config.num_classes)?, data.len())]
        }
    };
    Ok(EvalReport { rows })
}

#[derive(Clone, Debug, PartialEq)]
pub enum Suite {
    ModelComparison,
    CycleAblation,
    LossAblation,
    HorizonSweep(Vec<usize>),
    DataFraction(Vec<f64>),
}

impl Suite {
    pub fn name(&self) -> &'static str {
        match self {
            Suite::ModelComparison => "model_comparison",
            Suite::CycleAblation => "cycle_ablation",
            Suite::LossAblation => "loss_ablation",
            Suite::HorizonSweep(_) => "horizon_sweep",
            Suite::DataFraction(_) => "data_fraction",
        }
    }

    /// Parses a suite name with its default parameter list.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "model_comparison" => Ok(Suite::ModelComparison),
            "cycle_ablation" => Ok(Suite::CycleAblation),
            "loss_ablation" => Ok(Suite::LossAblation),
            "horizon_sweep" => Ok(Suite::HorizonSweep(vec![0, 2, 4, 6, 8])),
            "data_fraction" => Ok(Suite::DataFraction(vec![0.1, 0.2, 0.3, 0.5])),
            other => Err(Error::InvalidArgument(format!("unknown suite `{other}`"))),
        }
    }
}

/// Row labels and term switches of the cycle-space ablation.
pub fn cycle_ablation_cells() -> [(&'static str, LossTerms); 3] {
    let all = LossTerms::default();
    [
        (
            "semantic",
            LossTerms {
                feature_cycle: false,
                ..all
            },
        ),
        (
            "feature",
            LossTerms {
                semantic_cycle: false,
                ..all
            },
        ),
        ("both", all),
    ]
}

/// Row labels and term switches of the loss-term ablation. The feature
/// cycle term stays on in every row.
pub fn loss_ablation_cells() -> [(&'static str, LossTerms); 3] {
    let all = LossTerms::default();
    let pattern_only = LossTerms {
        past_recognition: false,
        semantic_anticipation: false,
        semantic_cycle: false,
        ..all
    };
    [
        ("lp+cyc_p", pattern_only),
        (
            "lp+rec+cyc_p",
            LossTerms {
                past_recognition: true,
                ..pattern_only
            },
        ),
        ("full", all),
    ]
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    pub suite: Suite,
    pub seeds: Vec<u64>,
    /// Template; `seed`, kind, loss terms and horizon are set per cell.
    pub train: TrainConfig,
    /// Template; seeds and horizon are set per cell.
    pub data: DataConfig,
}

impl SuiteConfig {
    pub fn desk(suite: Suite, seeds: Vec<u64>) -> Self {
        SuiteConfig {
            suite,
            seeds,
            train: TrainConfig::desk(ModelKind::Act, 0),
            data: DataConfig::desk(0),
        }
    }
}

fn data_for(base: &DataConfig, seed: u64, horizon: usize) -> Result<(Dataset, Dataset)> {
    let mut dc = base.clone();
    dc.seed = seed;
    dc.grammar.seed = seed;
    dc.horizon = horizon;
    generate(&dc)
}

fn fit(
    base: &TrainConfig,
    kind: ModelKind,
    terms: Option<LossTerms>,
    seed: u64,
    data: &Dataset,
) -> Result<ModelParams> {
    let mut tc = base.clone();
    tc.model_kind = kind;
    tc.seed = seed;
    tc.geometry = data.geometry;
    if let Some(terms) = terms {
        tc.loss.terms = terms;
    }
    let empty = Dataset {
        geometry: data.geometry,
        examples: Vec::new(),
    };
    Ok(train(&tc, data, &empty)?.0)
}

fn relabel(mut report: EvalReport, model: &str, param: &str) -> EvalReport {
    for r in &mut report.rows {
        r.model = model.to_string();
        r.param = param.to_string();
    }
    report
}

/// Trains and evaluates every cell of `config.suite` for every seed.
pub fn run_suite(config: &SuiteConfig) -> Result<EvalReport> {
    if config.seeds.is_empty() {
        return Err(Error::Empty("seed list"));
    }
    let mut report = EvalReport::default();
    let horizon = config.data.horizon;
    let at = Protocol::AtHorizon;
    for &seed in &config.seeds {
        match &config.suite {
            Suite::ModelComparison => {
                let (tr, te) = data_for(&config.data, seed, horizon)?;
                for kind in ModelKind::ALL {
                    let model = fit(&config.train, kind, None, seed, &tr)?;
                    report.extend(evaluate(&model, &te, at, seed)?);
                    report.extend(evaluate(&model, &te, Protocol::DenseFuture, seed)?);
                }
            }
            Suite::CycleAblation | Suite::LossAblation => {
                let cells = if config.suite == Suite::CycleAblation {
                    cycle_ablation_cells()
                } else {
                    loss_ablation_cells()
                };
                let (tr, te) = data_for(&config.data, seed, horizon)?;
                for (label, terms) in cells {
                    let model = fit(&config.train, ModelKind::Act, Some(terms), seed, &tr)?;
                    report.extend(relabel(evaluate(&model, &te, at, seed)?, "act", label));
                }
            }
            Suite::HorizonSweep(ks) => {
                for &k in ks {
                    let (tr, te) = data_for(&config.data, seed, k)?;
                    for kind in ModelKind::ALL {
                        let model = fit(&config.train, kind, None, seed, &tr)?;
                        report.extend(evaluate(&model, &te, at, seed)?);
                    }
                }
            }
            Suite::DataFraction(fractions) => {
                let (tr, te) = data_for(&config.data, seed, horizon)?;
                let no_cycle = LossTerms {
                    feature_cycle: false,
                    semantic_cycle: false,
                    ..LossTerms::default()
                };
                for &frac in fractions {
                    let subset = stratified_subset(&tr, frac, rng::derive(seed, 0xF7AC))?;
                    let param = format!("{}", (frac * 100.0).round());
                    for (series, terms) in [("cycle", LossTerms::default()), ("no_cycle", no_cycle)] {
                        let model = fit(&config.train, ModelKind::Act, Some(terms), seed, &subset)?;
                        report.extend(relabel(evaluate(&model, &te, at, seed)?, series, &param));
                    }
                }
            }
        }
    }
    Ok(report)
}

/// True if `values` never increase, except at most one adjacent rise of at most `slack`.
pub fn non_increasing_with_slack(values: &[f64], slack: f64) -> bool {
    let rises: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).collect();
    rises.is_empty() || (rises.len() == 1 && rises[0] <= slack)
}

/// True if `values` never decrease, except at most one adjacent drop of at most `slack`.
pub fn non_decreasing_with_slack(values: &[f64], slack: f64) -> bool {
    let neg: Vec<f64> = values.iter().map(|v| -v).collect();
    non_increasing_with_slack(&neg, slack)
}
