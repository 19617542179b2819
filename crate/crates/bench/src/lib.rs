//! Desk-scale fixtures shared by the benchmarks.

use aact_core::data::generate;
use aact_core::training::Batch;
use aact_core::{rng, DataConfig, EncoderConfig, EncoderParams, ModelConfig, ModelKind, ModelParams, Tensor};

pub const BATCH: usize = 16;

/// One desk batch (`A = 12`, `d = 16`, `M = 8`, `N = 4`).
pub fn desk_batch(seed: u64) -> Batch {
    let mut dc = DataConfig::desk(seed);
    dc.train_examples = BATCH;
    dc.test_examples = 1;
    let (train, _) = generate(&dc).expect("desk data");
    Batch::new(&train.examples.iter().collect::<Vec<_>>()).expect("uniform geometry")
}

pub fn desk_model(kind: ModelKind, seed: u64) -> ModelParams {
    ModelParams::init(ModelConfig::new(kind, 16, 12, 8, 4), &mut rng::seeded(seed)).expect("desk config")
}

/// A desk translating encoder (8 heads, 2 layers, `M = 8 -> N = 4`) and an input batch.
pub fn desk_encoder(seed: u64) -> (EncoderParams, Tensor) {
    let mut r = rng::seeded(seed);
    let enc = EncoderParams::init(EncoderConfig::new(16).translating(4), &mut r).expect("desk encoder");
    let x = Tensor::uniform(vec![BATCH, 8, 16], 1.0, &mut r);
    (enc, x)
}
