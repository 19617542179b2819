//! `key = value` run configuration shared by the config file and the flags.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use aact_core::evaluation::Suite;
use aact_core::{
    AdamConfig, CycleLabelTarget, DataConfig, Geometry, GrammarConfig, LossConfig, ModelKind, Protocol,
    TrainConfig,
};

/// A configuration problem the user can fix: bad key, value or flag.
#[derive(Debug, Clone, PartialEq)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Every recognized key with its one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("model", "model kind: se, pv or act"),
    ("seed", "run seed; all randomness derives from it"),
    ("epochs", "training epochs"),
    ("batch_size", "examples per Adam step"),
    ("lr", "Adam learning rate"),
    ("beta1", "Adam first-moment decay"),
    ("beta2", "Adam second-moment decay"),
    ("adam_eps", "Adam denominator epsilon"),
    ("lambda_s", "weight of the semantic loss"),
    ("lambda_p", "weight of the pattern loss"),
    ("lambda_c", "weight of the cycle loss"),
    ("cycle_label_target", "semantic cycle target: soft or hard"),
    ("heads", "attention heads"),
    ("layers", "encoder layers"),
    ("d", "feature dimension"),
    ("classes", "number of action classes A"),
    ("observed_len", "observed frames M"),
    ("future_len", "future frames N"),
    ("horizon", "anticipation gap k in frames"),
    ("activities", "activities in the grammar"),
    ("noise_sigma", "Gaussian frame noise"),
    ("segment_min", "shortest action segment in frames"),
    ("segment_max", "longest action segment in frames"),
    ("frames_per_video", "frames per synthetic video"),
    ("examples_per_video", "windows cut from each video"),
    ("train_examples", "training examples"),
    ("test_examples", "test examples"),
    ("gradcheck", "check gradients on the first batch: true or false"),
    ("gradcheck_coords", "coordinates sampled by gradient checks"),
    ("protocol", "evaluation protocol: at_horizon or dense_future"),
    ("suite", "ablate suite: cycle_ablation, loss_ablation, data_fraction or model_comparison"),
    ("seeds", "comma-separated seeds for suites"),
    ("horizons", "comma-separated horizons for sweep-horizon"),
    ("fractions", "comma-separated training fractions for data_fraction"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub loss: LossConfig,
    pub heads: usize,
    pub layers: usize,
    pub d: usize,
    pub classes: usize,
    pub observed_len: usize,
    pub future_len: usize,
    pub horizon: usize,
    pub activities: usize,
    pub noise_sigma: f64,
    pub segment: (usize, usize),
    pub frames_per_video: usize,
    pub examples_per_video: usize,
    pub train_examples: usize,
    pub test_examples: usize,
    pub gradcheck: bool,
    pub gradcheck_coords: usize,
    pub protocol: Protocol,
    pub suite: String,
    pub seeds: Vec<u64>,
    pub horizons: Vec<usize>,
    pub fractions: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let data = DataConfig::desk(0);
        let train = TrainConfig::desk(ModelKind::Act, 0);
        RunConfig {
            model: ModelKind::Act,
            seed: 0,
            epochs: train.epochs,
            batch_size: train.batch_size,
            adam: train.adam,
            loss: train.loss,
            heads: train.num_heads,
            layers: train.num_layers,
            d: data.grammar.feature_dim,
            classes: data.grammar.num_actions,
            observed_len: data.observed_len,
            future_len: data.future_len,
            horizon: data.horizon,
            activities: data.grammar.num_activities,
            noise_sigma: data.grammar.noise_sigma,
            segment: data.grammar.segment_len,
            frames_per_video: data.frames_per_video,
            examples_per_video: data.examples_per_video,
            train_examples: data.train_examples,
            test_examples: data.test_examples,
            gradcheck: false,
            gradcheck_coords: train.gradcheck_coords,
            protocol: Protocol::AtHorizon,
            suite: "cycle_ablation".into(),
            seeds: vec![1, 2, 3, 4, 5],
            horizons: vec![0, 2, 4, 6, 8],
            fractions: vec![0.1, 0.2, 0.3, 0.5],
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, UsageError>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| UsageError(format!("invalid value `{value}` for `{key}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>, UsageError>
where
    T::Err: fmt::Display,
{
    let items: Vec<T> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect::<Result<_, _>>()?;
    if items.is_empty() {
        return Err(UsageError(format!("`{key}` needs at least one value")));
    }
    Ok(items)
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), UsageError> {
        let v = value.trim();
        match key {
            "model" => self.model = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "lr" => self.adam.learning_rate = parse(key, v)?,
            "beta1" => self.adam.beta1 = parse(key, v)?,
            "beta2" => self.adam.beta2 = parse(key, v)?,
            "adam_eps" => self.adam.eps = parse(key, v)?,
            "lambda_s" => self.loss.lambda_s = parse(key, v)?,
            "lambda_p" => self.loss.lambda_p = parse(key, v)?,
            "lambda_c" => self.loss.lambda_c = parse(key, v)?,
            "cycle_label_target" => self.loss.cycle_label_target = parse::<CycleLabelTarget>(key, v)?,
            "heads" => self.heads = parse(key, v)?,
            "layers" => self.layers = parse(key, v)?,
            "d" => self.d = parse(key, v)?,
            "classes" => self.classes = parse(key, v)?,
            "observed_len" => self.observed_len = parse(key, v)?,
            "future_len" => self.future_len = parse(key, v)?,
            "horizon" => self.horizon = parse(key, v)?,
            "activities" => self.activities = parse(key, v)?,
            "noise_sigma" => self.noise_sigma = parse(key, v)?,
            "segment_min" => self.segment.0 = parse(key, v)?,
            "segment_max" => self.segment.1 = parse(key, v)?,
            "frames_per_video" => self.frames_per_video = parse(key, v)?,
            "examples_per_video" => self.examples_per_video = parse(key, v)?,
            "train_examples" => self.train_examples = parse(key, v)?,
            "test_examples" => self.test_examples = parse(key, v)?,
            "gradcheck" => self.gradcheck = parse(key, v)?,
            "gradcheck_coords" => self.gradcheck_coords = parse(key, v)?,
            "protocol" => self.protocol = parse(key, v)?,
            "suite" => {
                Suite::parse(v).map_err(|e| UsageError(format!("invalid value for `suite`: {e}")))?;
                self.suite = v.to_string();
            }
            "seeds" => self.seeds = parse_list(key, v)?,
            "horizons" => self.horizons = parse_list(key, v)?,
            "fractions" => {
                let f: Vec<f64> = parse_list(key, v)?;
                if let Some(bad) = f.iter().find(|x| !(**x > 0.0 && **x <= 1.0)) {
                    return Err(UsageError(format!("`fractions` entries must be in (0, 1], got {bad}")));
                }
                self.fractions = f;
            }
            other => return Err(UsageError(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Current value of every key, in [`KEYS`] order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        KEYS.iter()
            .map(|(key, _)| {
                let value = match *key {
                    "model" => self.model.to_string(),
                    "seed" => self.seed.to_string(),
                    "epochs" => self.epochs.to_string(),
                    "batch_size" => self.batch_size.to_string(),
                    "lr" => self.adam.learning_rate.to_string(),
                    "beta1" => self.adam.beta1.to_string(),
                    "beta2" => self.adam.beta2.to_string(),
                    "adam_eps" => self.adam.eps.to_string(),
                    "lambda_s" => self.loss.lambda_s.to_string(),
                    "lambda_p" => self.loss.lambda_p.to_string(),
                    "lambda_c" => self.loss.lambda_c.to_string(),
                    "cycle_label_target" => self.loss.cycle_label_target.to_string(),
                    "heads" => self.heads.to_string(),
                    "layers" => self.layers.to_string(),
                    "d" => self.d.to_string(),
                    "classes" => self.classes.to_string(),
                    "observed_len" => self.observed_len.to_string(),
                    "future_len" => self.future_len.to_string(),
                    "horizon" => self.horizon.to_string(),
                    "activities" => self.activities.to_string(),
                    "noise_sigma" => self.noise_sigma.to_string(),
                    "segment_min" => self.segment.0.to_string(),
                    "segment_max" => self.segment.1.to_string(),
                    "frames_per_video" => self.frames_per_video.to_string(),
                    "examples_per_video" => self.examples_per_video.to_string(),
                    "train_examples" => self.train_examples.to_string(),
                    "test_examples" => self.test_examples.to_string(),
                    "gradcheck" => self.gradcheck.to_string(),
                    "gradcheck_coords" => self.gradcheck_coords.to_string(),
                    "protocol" => self.protocol.to_string(),
                    "suite" => self.suite.clone(),
                    "seeds" => join(&self.seeds),
                    "horizons" => join(&self.horizons),
                    "fractions" => join(&self.fractions),
                    other => unreachable!("key `{other}` has no value"),
                };
                (*key, value)
            })
            .collect()
    }

    /// The config file text that reproduces this configuration.
    pub fn echo(&self) -> String {
        let mut out = String::from("# effective configuration\n");
        for (key, value) in self.entries() {
            out.push_str(&format!("{key} = {value}\n"));
        }
        out
    }

    /// Applies a config file's `key = value` lines. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<(), UsageError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| UsageError(format!("{source}:{}: expected `key = value`, got `{line}`", i + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| UsageError(format!("{source}:{}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), UsageError> {
        let text = fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config file {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            feature_dim: self.d,
            num_classes: self.classes,
            observed_len: self.observed_len,
            future_len: self.future_len,
            horizon: self.horizon,
        }
    }

    pub fn data_config(&self) -> DataConfig {
        let mut grammar = GrammarConfig::new(self.activities, self.classes, self.d, self.seed, self.noise_sigma);
        grammar.segment_len = self.segment;
        DataConfig {
            grammar,
            observed_len: self.observed_len,
            future_len: self.future_len,
            horizon: self.horizon,
            frames_per_video: self.frames_per_video,
            examples_per_video: self.examples_per_video,
            train_examples: self.train_examples,
            test_examples: self.test_examples,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            model_kind: self.model,
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: self.adam,
            loss: self.loss,
            seed: self.seed,
            geometry: self.geometry(),
            num_heads: self.heads,
            num_layers: self.layers,
            gradcheck: self.gradcheck,
            gradcheck_coords: self.gradcheck_coords,
        }
    }

    /// The `ablate` suite with its parameter list taken from this config.
    pub fn ablation_suite(&self) -> Result<Suite, UsageError> {
        let suite = Suite::parse(&self.suite).map_err(|e| UsageError(e.to_string()))?;
        Ok(match suite {
            Suite::DataFraction(_) => Suite::DataFraction(self.fractions.clone()),
            Suite::HorizonSweep(_) => Suite::HorizonSweep(self.horizons.clone()),
            other => other,
        })
    }
}
