//! Synthetic procedural-activity videos and the on-disk dataset format.
//!
//! An [`ActivityGrammar`] holds one Markov chain over action classes per
//! activity. A video is a walk over that chain with uniformly drawn segment
//! lengths; every frame's feature is its class embedding plus Gaussian noise.
//! Anticipation examples are windows cut from such videos.
//!
//! # Dataset file layout
//!
//! All integers and reals are little-endian.
//!
//! | offset | size | field |
//! |-------:|-----:|-------|
//! | 0  | 8 | magic `b"AACTDS1\0"` |
//! | 8  | 4 | version (`u32`, currently 1) |
//! | 12 | 4 | `d` feature dimension (`u32`) |
//! | 16 | 4 | `A` number of classes (`u32`) |
//! | 20 | 4 | `M` observed frames (`u32`) |
//! | 24 | 4 | `N` future frames (`u32`) |
//! | 28 | 4 | `k` horizon in frames (`u32`) |
//! | 32 | 8 | example count (`u64`) |
//!
//! followed by `count` fixed-size records of `(M + N)·d` `f64` values
//! (`x_o` rows then `x_f` rows) and `2 + N` `u32` labels
//! (`a_o`, `a_f`, then the `N` future frame labels).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

pub const DATASET_MAGIC: &[u8; 8] = b"AACTDS1\0";
pub const DATASET_VERSION: u32 = 1;
const HEADER_LEN: usize = 40;

/// Minimum pairwise distance between class embeddings.
const MIN_EMBEDDING_DISTANCE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Geometry {
    pub feature_dim: usize,
    pub num_classes: usize,
    pub observed_len: usize,
    pub future_len: usize,
    pub horizon: usize,
}

impl Geometry {
    /// Offset of the first future frame from the start of the observed window (`M + k`).
    pub fn future_offset(&self) -> usize {
        self.observed_len + self.horizon
    }

    /// Frames spanned by one example.
    pub fn span(&self) -> usize {
        self.future_offset() + self.future_len
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GrammarConfig {
    pub num_activities: usize,
    pub num_actions: usize,
    pub feature_dim: usize,
    pub segment_len: (usize, usize),
    pub noise_sigma: f64,
    pub seed: u64,
}

impl GrammarConfig {
    pub fn new(num_activities: usize, num_actions: usize, feature_dim: usize, seed: u64, noise_sigma: f64) -> Self {
        GrammarConfig {
            num_activities,
            num_actions,
            feature_dim,
            segment_len: (4, 12),
            noise_sigma,
            seed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ActivityGrammar {
    pub num_activities: usize,
    pub num_actions: usize,
    /// One row-stochastic `A × A` matrix per activity, row-major.
    pub transition: Vec<Vec<f64>>,
    pub start_dist: Vec<Vec<f64>>,
    pub segment_len: (usize, usize),
    /// `A × d`, unit-norm rows.
    pub class_embeddings: Tensor,
    pub noise_sigma: f64,
    pub seed: u64,
}

const DOMINANT_WEIGHT: f64 = 1.0;
const ALTERNATE_WEIGHT_MAX: f64 = 0.25;

fn normalize(weights: &mut [f64]) {
    let sum: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= sum;
    }
}

/// Builds a seeded grammar. Each activity orders the actions by a random
/// permutation; every action moves on to one of the next two or three actions
/// in that order. The immediate successor carries most of the mass, so
/// futures are predictable but not deterministic.
pub fn build_grammar(config: &GrammarConfig) -> Result<ActivityGrammar> {
    let (acts, a, d) = (config.num_activities, config.num_actions, config.feature_dim);
    if a < 2 || d < 2 || acts == 0 {
        return Err(Error::InvalidArgument(format!(
            "grammar needs A >= 2, d >= 2 and at least one activity, got A={a}, d={d}, activities={acts}"
        )));
    }
    let (lo, hi) = config.segment_len;
    if lo == 0 || lo > hi {
        return Err(Error::InvalidArgument(format!("invalid segment length range [{lo}, {hi}]")));
    }
    if !(config.noise_sigma >= 0.0 && config.noise_sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise_sigma must be >= 0, got {}", config.noise_sigma)));
    }
    let mut rng = rng::seeded(config.seed);

    let mut transition = Vec::with_capacity(acts);
    let mut start_dist = Vec::with_capacity(acts);
    for _ in 0..acts {
        let mut order: Vec<usize> = (0..a).collect();
        order.shuffle(&mut rng);
        let mut matrix = vec![0.0; a * a];
        for (pos, &from) in order.iter().enumerate() {
            let fanout = rng.random_range(2..=3usize).min(a - 1);
            let row = &mut matrix[from * a..(from + 1) * a];
            row[order[(pos + 1) % a]] = DOMINANT_WEIGHT;
            for step in 2..=fanout {
                row[order[(pos + step) % a]] = rng.random_range(0.05..ALTERNATE_WEIGHT_MAX);
            }
            normalize(row);
        }
        let mut start = vec![0.0; a];
        for &first in order.iter().take(3) {
            start[first] = rng.random_range(0.1..1.0);
        }
        normalize(&mut start);
        transition.push(matrix);
        start_dist.push(start);
    }

    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(a);
    while rows.len() < a {
        let mut accepted = false;
        for _ in 0..10_000 {
            let mut v: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm < 1e-9 {
                continue;
            }
            v.iter_mut().for_each(|x| *x /= norm);
            let far = rows.iter().all(|r| {
                r.iter().zip(&v).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt() > MIN_EMBEDDING_DISTANCE
            });
            if far {
                rows.push(v);
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::InvalidArgument(format!(
                "cannot place {a} unit embeddings {MIN_EMBEDDING_DISTANCE} apart in {d} dimensions"
            )));
        }
    }

    Ok(ActivityGrammar {
        num_activities: acts,
        num_actions: a,
        transition,
        start_dist,
        segment_len: (lo, hi),
        class_embeddings: Tensor::from_rows(&rows)?,
        noise_sigma: config.noise_sigma,
        seed: config.seed,
    })
}

impl ActivityGrammar {
    pub fn feature_dim(&self) -> usize {
        self.class_embeddings.cols()
    }

    pub fn transition_row(&self, activity: usize, from: usize) -> &[f64] {
        let a = self.num_actions;
        &self.transition[activity][from * a..(from + 1) * a]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    pub activity: usize,
    pub labels: Vec<usize>,
    /// `T × d`
    pub features: Tensor,
}

impl Video {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn draw(weights: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

/// Samples one video of `total_frames` frames from `activity`'s chain.
pub fn sample_video(grammar: &ActivityGrammar, total_frames: usize, activity: usize, seed: u64) -> Result<Video> {
    if activity >= grammar.num_activities {
        return Err(Error::InvalidArgument(format!(
            "activity {activity} out of range for {} activities",
            grammar.num_activities
        )));
    }
    let (lo, hi) = grammar.segment_len;
    if total_frames < lo {
        return Err(Error::InvalidArgument(format!(
            "video of {total_frames} frames is shorter than the minimum segment ({lo})"
        )));
    }
    let mut rng = rng::seeded(seed);
    let mut labels = Vec::with_capacity(total_frames);
    let mut action = draw(&grammar.start_dist[activity], &mut rng);
    while labels.len() < total_frames {
        let len = rng.random_range(lo..=hi);
        for _ in 0..len.min(total_frames - labels.len()) {
            labels.push(action);
        }
        action = draw(grammar.transition_row(activity, action), &mut rng);
    }

    let d = grammar.feature_dim();
    let mut data = Vec::with_capacity(total_frames * d);
    let noise = (grammar.noise_sigma > 0.0)
        .then(|| Normal::new(0.0, grammar.noise_sigma).expect("finite sigma"));
    for &label in &labels {
        let emb = grammar.class_embeddings.row(label);
        match &noise {
            Some(n) => data.extend(emb.iter().map(|&e| e + n.sample(&mut rng))),
            None => data.extend_from_slice(emb),
        }
    }
    Ok(Video {
        activity,
        labels,
        features: Tensor::new(vec![total_frames, d], data)?,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnticipationExample {
    /// `M × d`
    pub x_o: Tensor,
    /// `N × d`
    pub x_f: Tensor,
    pub a_o: usize,
    pub a_f: usize,
    pub future_labels: Vec<usize>,
    pub geometry: Geometry,
}

/// Most frequent label; ties go to the label that occurs first.
pub fn majority_label(labels: &[usize]) -> usize {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let best = counts.values().copied().max().unwrap_or(0);
    labels
        .iter()
        .copied()
        .find(|l| counts[l] == best)
        .expect("non-empty window")
}

/// Cuts the example whose observed window starts at frame `t`.
///
/// Observed frames are `[t, t + M)`, the future window is
/// `[t + M + k, t + M + k + N)`, and `a_f` is the label at `t + M + k`.
pub fn make_example(video: &Video, t: usize, geometry: Geometry) -> Result<AnticipationExample> {
    let d = video.features.cols();
    if d != geometry.feature_dim {
        return Err(Error::GeometryMismatch(
            "make_example",
            format!("video features are {d}-dimensional, geometry says {}", geometry.feature_dim),
        ));
    }
    let end = t + geometry.span();
    if end > video.len() {
        return Err(Error::WindowExceedsVideo {
            start: t,
            end,
            len: video.len(),
        });
    }
    let rows = |start: usize, len: usize| {
        Tensor::new(
            vec![len, d],
            video.features.data()[start * d..(start + len) * d].to_vec(),
        )
    };
    let (m, n) = (geometry.observed_len, geometry.future_len);
    let f0 = t + geometry.future_offset();
    Ok(AnticipationExample {
        x_o: rows(t, m)?,
        x_f: rows(f0, n)?,
        a_o: majority_label(&video.labels[t..t + m]),
        a_f: video.labels[f0],
        future_labels: video.labels[f0..f0 + n].to_vec(),
        geometry,
    })
}

/// How to turn a grammar into train and test example sets.
#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub grammar: GrammarConfig,
    pub observed_len: usize,
    pub future_len: usize,
    pub horizon: usize,
    pub frames_per_video: usize,
    pub examples_per_video: usize,
    pub train_examples: usize,
    pub test_examples: usize,
    /// Seeds the videos; video `i` uses `seed ⊕ i`.
    pub seed: u64,
}

impl DataConfig {
    /// Desk-scale defaults: `A = 12`, `d = 16`, `M = 8`, `N = 4`, `k = 4`.
    pub fn desk(seed: u64) -> Self {
        DataConfig {
            grammar: GrammarConfig::new(4, 12, 16, seed, 0.3),
            observed_len: 8,
            future_len: 4,
            horizon: 4,
            frames_per_video: 64,
            examples_per_video: 8,
            train_examples: 2000,
            test_examples: 500,
            seed,
        }
    }

    pub fn geometry(&self) -> Geometry {
        Geometry {
            feature_dim: self.grammar.feature_dim,
            num_classes: self.grammar.num_actions,
            observed_len: self.observed_len,
            future_len: self.future_len,
            horizon: self.horizon,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub geometry: Geometry,
    pub examples: Vec<AnticipationExample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Examples from videos `first_video..`, `examples_per_video` random windows each.
fn examples_from_videos(
    grammar: &ActivityGrammar,
    config: &DataConfig,
    first_video: usize,
    count: usize,
) -> Result<Vec<AnticipationExample>> {
    let geometry = config.geometry();
    if config.frames_per_video < geometry.span() {
        return Err(Error::InvalidArgument(format!(
            "videos of {} frames cannot hold an example spanning {} frames",
            config.frames_per_video,
            geometry.span()
        )));
    }
    if config.examples_per_video == 0 {
        return Err(Error::InvalidArgument("examples_per_video must be positive".into()));
    }
    let last_start = config.frames_per_video - geometry.span();
    let mut out = Vec::with_capacity(count);
    let mut video_index = first_video;
    while out.len() < count {
        let video_seed = config.seed ^ video_index as u64;
        let activity = video_index % grammar.num_activities;
        let video = sample_video(grammar, config.frames_per_video, activity, video_seed)?;
        let mut pick = rng::seeded(rng::derive(video_seed, 0x57A2));
        for _ in 0..config.examples_per_video.min(count - out.len()) {
            let t = pick.random_range(0..=last_start);
            out.push(make_example(&video, t, geometry)?);
        }
        video_index += 1;
    }
    Ok(out)
}

/// Train and test sets from disjoint videos of one grammar.
pub fn generate(config: &DataConfig) -> Result<(Dataset, Dataset)> {
    let grammar = build_grammar(&config.grammar)?;
    let train_videos = config.train_examples.div_ceil(config.examples_per_video.max(1));
    let train = examples_from_videos(&grammar, config, 0, config.train_examples)?;
    let test = examples_from_videos(&grammar, config, train_videos, config.test_examples)?;
    let geometry = config.geometry();
    Ok((
        Dataset {
            geometry,
            examples: train,
        },
        Dataset {
            geometry,
            examples: test,
        },
    ))
}

/// A class-stratified subset: each `a_f` class keeps `round(fraction · count)`
/// of its examples, chosen by a seeded shuffle. Original order is preserved.
pub fn stratified_subset(data: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("fraction must be in (0, 1], got {fraction}")));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, ex) in data.examples.iter().enumerate() {
        by_class.entry(ex.a_f).or_default().push(i);
    }
    let mut rng = rng::seeded(seed);
    let mut keep = Vec::new();
    for (_, mut idx) in by_class {
        let take = (fraction * idx.len() as f64).round() as usize;
        idx.shuffle(&mut rng);
        keep.extend_from_slice(&idx[..take]);
    }
    if keep.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "a {:.0}% stratified sample of {} examples is empty",
            fraction * 100.0,
            data.len()
        )));
    }
    keep.sort_unstable();
    Ok(Dataset {
        geometry: data.geometry,
        examples: keep.into_iter().map(|i| data.examples[i].clone()).collect(),
    })
}

fn record_len(g: &Geometry) -> usize {
    (g.observed_len + g.future_len) * g.feature_dim * 8 + (2 + g.future_len) * 4
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} does not fit in u32")))
}

/// Serializes `data` in the layout documented at the top of this module.
pub fn encode_dataset(data: &Dataset) -> Result<Vec<u8>> {
    let g = data.geometry;
    let mut out = Vec::with_capacity(HEADER_LEN + data.len() * record_len(&g));
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    for (v, what) in [
        (g.feature_dim, "d"),
        (g.num_classes, "A"),
        (g.observed_len, "M"),
        (g.future_len, "N"),
        (g.horizon, "k"),
    ] {
        out.extend_from_slice(&to_u32(v, what)?.to_le_bytes());
    }
    out.extend_from_slice(&(data.len() as u64).to_le_bytes());
    for (i, ex) in data.examples.iter().enumerate() {
        let shapes_ok = ex.geometry == g
            && ex.x_o.shape() == [g.observed_len, g.feature_dim]
            && ex.x_f.shape() == [g.future_len, g.feature_dim]
            && ex.future_labels.len() == g.future_len;
        if !shapes_ok {
            return Err(Error::GeometryMismatch(
                "write_dataset",
                format!("example {i} does not match dataset geometry {g:?}"),
            ));
        }
        for v in ex.x_o.data().iter().chain(ex.x_f.data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for l in [ex.a_o, ex.a_f].iter().chain(&ex.future_labels) {
            out.extend_from_slice(&to_u32(*l, "label")?.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_dataset(data)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dataset(&bytes, path)
}

/// Reads a dataset and checks it against the geometry a caller expects.
pub fn read_dataset_expecting(path: impl AsRef<Path>, expected: Geometry) -> Result<Dataset> {
    let data = read_dataset(&path)?;
    if data.geometry != expected {
        return Err(Error::GeometryMismatch(
            "read_dataset",
            format!("{} has {:?}, expected {expected:?}", path.as_ref().display(), data.geometry),
        ));
    }
    Ok(data)
}

pub fn decode_dataset(bytes: &[u8], path: &Path) -> Result<Dataset> {
    let bad = |reason: &str| Error::BadHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < HEADER_LEN {
        return Err(bad("file shorter than header"));
    }
    if &bytes[..8] != DATASET_MAGIC {
        return Err(bad("wrong magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let version = u32_at(8) as u32;
    if version != DATASET_VERSION {
        return Err(Error::VersionMismatch {
            path: path.to_path_buf(),
            found: version,
            expected: DATASET_VERSION,
        });
    }
    let g = Geometry {
        feature_dim: u32_at(12),
        num_classes: u32_at(16),
        observed_len: u32_at(20),
        future_len: u32_at(24),
        horizon: u32_at(28),
    };
    if g.feature_dim == 0 || g.num_classes == 0 || g.observed_len == 0 || g.future_len == 0 {
        return Err(bad("zero extent in geometry"));
    }
    let count = u64::from_le_bytes(bytes[32..40].try_into().unwrap()) as usize;
    let rec = record_len(&g);
    let body = &bytes[HEADER_LEN..];
    let complete = body.len() / rec;
    if complete < count {
        return Err(Error::TruncatedRecord {
            path: path.to_path_buf(),
            index: complete,
        });
    }
    if body.len() != count * rec {
        return Err(bad("trailing bytes after last record"));
    }
    let (m, n, d) = (g.observed_len, g.future_len, g.feature_dim);
    let mut examples = Vec::with_capacity(count);
    for (i, chunk) in body.chunks_exact(rec).enumerate() {
        let reals: Vec<f64> = chunk[..(m + n) * d * 8]
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let labels: Vec<usize> = chunk[(m + n) * d * 8..]
            .chunks_exact(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
            .collect();
        if let Some(&l) = labels.iter().find(|&&l| l >= g.num_classes) {
            return Err(Error::BadHeader {
                path: path.to_path_buf(),
                reason: format!("record {i}: label {l} out of range for {} classes", g.num_classes),
            });
        }
        examples.push(AnticipationExample {
            x_o: Tensor::new(vec![m, d], reals[..m * d].to_vec())?,
            x_f: Tensor::new(vec![n, d], reals[m * d..].to_vec())?,
            a_o: labels[0],
            a_f: labels[1],
            future_labels: labels[2..].to_vec(),
            geometry: g,
        });
    }
    Ok(Dataset { geometry: g, examples })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grammar(a: usize, sigma: f64) -> ActivityGrammar {
        build_grammar(&GrammarConfig::new(3, a, 8, 42, sigma)).unwrap()
    }

    fn geometry(m: usize, n: usize, k: usize) -> Geometry {
        Geometry {
            feature_dim: 8,
            num_classes: 6,
            observed_len: m,
            future_len: n,
            horizon: k,
        }
    }

    #[test]
    fn grammar_is_deterministic_and_stochastic() {
        let g1 = grammar(6, 0.2);
        assert_eq!(g1, grammar(6, 0.2));
        for act in 0..g1.num_activities {
            for from in 0..6 {
                let row = g1.transition_row(act, from);
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                let successors = row.iter().filter(|&&p| p > 0.0).count();
                assert!((2..=3).contains(&successors));
                assert_eq!(row[from], 0.0);
            }
            assert!((g1.start_dist[act].iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let e = &g1.class_embeddings;
        for i in 0..6 {
            let norm: f64 = e.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
            for j in 0..i {
                let dist: f64 = e.row(i).iter().zip(e.row(j)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                assert!(dist > 0.1);
            }
        }
    }

    #[test]
    fn two_action_grammar() {
        let g = grammar(2, 0.0);
        for act in 0..3 {
            assert_eq!(g.transition_row(act, 0), &[0.0, 1.0]);
            assert_eq!(g.transition_row(act, 1), &[1.0, 0.0]);
        }
        assert!(build_grammar(&GrammarConfig::new(1, 1, 8, 0, 0.0)).is_err());
        assert!(build_grammar(&GrammarConfig::new(1, 3, 1, 0, 0.0)).is_err());
    }

    #[test]
    fn noiseless_video_frames_are_embeddings() {
        let g = grammar(6, 0.0);
        let v = sample_video(&g, 50, 1, 9).unwrap();
        assert_eq!(v.len(), 50);
        for (t, &l) in v.labels.iter().enumerate() {
            assert!(l < 6);
            assert_eq!(v.features.row(t), g.class_embeddings.row(l));
        }
        assert_eq!(v, sample_video(&g, 50, 1, 9).unwrap());
        assert!(sample_video(&g, 50, 3, 9).is_err());
        assert!(sample_video(&g, 2, 0, 9).is_err());
    }

    #[test]
    fn segments_respect_length_range() {
        let g = grammar(6, 0.0);
        let v = sample_video(&g, 400, 0, 1).unwrap();
        let mut runs = Vec::new();
        let mut len = 1;
        for w in v.labels.windows(2) {
            if w[0] == w[1] {
                len += 1;
            } else {
                runs.push(len);
                len = 1;
            }
        }
        // interior runs only; successors never repeat the current action
        assert!(runs[1..].iter().all(|&r| (4..=12).contains(&r)), "{runs:?}");
    }

    #[test]
    fn example_window_arithmetic() {
        let g = grammar(6, 0.0);
        let v = sample_video(&g, 40, 0, 3).unwrap();
        let ex = make_example(&v, 0, geometry(4, 3, 2)).unwrap();
        // future frames 6, 7, 8
        assert_eq!(ex.future_labels, v.labels[6..9].to_vec());
        assert_eq!(ex.a_f, v.labels[6]);
        assert_eq!(ex.x_f.row(0), v.features.row(6));
        assert_eq!(ex.x_f.row(2), v.features.row(8));

        let abut = make_example(&v, 5, geometry(4, 3, 0)).unwrap();
        assert_eq!(abut.x_f.row(0), v.features.row(9));

        let err = make_example(&v, 35, geometry(4, 3, 2)).unwrap_err();
        assert!(matches!(err, Error::WindowExceedsVideo { start: 35, end: 44, len: 40 }));
    }

    #[test]
    fn majority_ties_go_to_first_label() {
        assert_eq!(majority_label(&[3, 3, 1, 1]), 3);
        assert_eq!(majority_label(&[1, 3, 3, 1]), 1);
        assert_eq!(majority_label(&[2, 5, 5, 5]), 5);
    }

    #[test]
    fn stratified_subset_keeps_class_proportions() {
        let mut cfg = DataConfig::desk(5);
        cfg.train_examples = 400;
        cfg.test_examples = 8;
        let (train, _) = generate(&cfg).unwrap();
        let half = stratified_subset(&train, 0.5, 1).unwrap();
        let count = |d: &Dataset, c: usize| d.examples.iter().filter(|e| e.a_f == c).count();
        for c in 0..12 {
            let full = count(&train, c);
            assert_eq!(count(&half, c), (0.5 * full as f64).round() as usize);
        }
        assert!(stratified_subset(&train, 0.0, 1).is_err());
    }

    #[test]
    fn empty_dataset_round_trips() {
        let data = Dataset {
            geometry: geometry(4, 3, 2),
            examples: vec![],
        };
        let bytes = encode_dataset(&data).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN);
        assert_eq!(decode_dataset(&bytes, Path::new("mem")).unwrap(), data);
    }

    #[test]
    fn truncated_record_is_named() {
        let mut cfg = DataConfig::desk(2);
        cfg.train_examples = 5;
        cfg.test_examples = 1;
        let (train, _) = generate(&cfg).unwrap();
        let bytes = encode_dataset(&train).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        let err = decode_dataset(cut, Path::new("x.bin")).unwrap_err();
        assert!(matches!(err, Error::TruncatedRecord { index: 4, .. }), "{err}");
        assert!(err.to_string().contains("record 4"));

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_dataset(&bad, Path::new("x")), Err(Error::BadHeader { .. })));
        let mut v2 = bytes;
        v2[8] = 2;
        assert!(matches!(decode_dataset(&v2, Path::new("x")), Err(Error::VersionMismatch { found: 2, .. })));
    }
}
