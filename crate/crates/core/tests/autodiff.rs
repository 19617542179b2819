//! Every differentiable op checked against central finite differences.

use std::collections::BTreeMap;

use aact_core::attention::{encoder_forward, BoundEncoder, BoundLayer, EncoderConfig, EncoderParams};
use aact_core::gradcheck::{compare, finite_diff_grad_piecewise, Coordinate, FD_STEP};
use aact_core::rng;
use aact_core::tape::CeTarget;
use aact_core::{Error, Result, Tape, Tensor, Var};
use rand::Rng;

const SEEDS: u64 = 10;
const TOLERANCE: f64 = 1e-6;

type Params = BTreeMap<String, Tensor>;

/// Uniform entries kept at least 0.05 away from zero so ReLU kinks are not straddled.
fn away_from_zero(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(0.05..1.0);
            if rng.random::<bool>() {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Reduces any output to a scalar with fixed random weights so every output
/// coordinate contributes a distinct upstream gradient.
fn weighted_sum(tape: &mut Tape, out: Var, seed: u64) -> Result<Var> {
    let shape = tape.shape(out).to_vec();
    let w = Tensor::uniform(shape, 1.0, &mut rng::seeded(seed ^ 0xABCD));
    let w = tape.constant(w);
    let prod = tape.mul(out, w)?;
    tape.sum(prod)
}

fn check<F>(mut params: Params, build: F) -> f64
where
    F: Fn(&mut Tape, &BTreeMap<String, Var>) -> Result<Var>,
{
    let eval = |p: &Params, want_grad: bool| {
        let mut tape = Tape::new();
        let vars: BTreeMap<String, Var> = p
            .iter()
            .map(|(n, t)| (n.clone(), tape.param(n.clone(), t.clone())))
            .collect();
        let loss = build(&mut tape, &vars)?;
        let value = tape.value(loss).item().unwrap();
        let pattern = tape.activation_pattern();
        let grads = if want_grad { Some(tape.backward(loss)?) } else { None };
        Ok::<_, Error>((value, pattern, grads))
    };
    let analytic = eval(&params, true).unwrap().2.unwrap();
    let snapshot = params.clone();
    let coords: Vec<Coordinate> = params
        .iter()
        .flat_map(|(n, t)| (0..t.numel()).map(move |i| (n.clone(), i)))
        .collect();
    let (numeric, kinks) = finite_diff_grad_piecewise(&mut params, FD_STEP, &coords, |p| {
        let (v, pat, _) = eval(p, false)?;
        Ok((v, pat))
    })
    .unwrap();
    assert_eq!(params, snapshot, "finite differences must restore parameters");
    assert!(kinks.len() * 50 <= coords.len(), "{} of {} coordinates on kinks", kinks.len(), coords.len());
    let smooth: Vec<Coordinate> = coords.into_iter().filter(|c| !kinks.contains(c)).collect();
    compare(&params, &analytic, &numeric, Some(&smooth)).max_error()
}

fn for_seeds(name: &str, f: impl Fn(u64) -> f64) {
    for seed in 0..SEEDS {
        let err = f(seed);
        assert!(err < TOLERANCE, "{name}: seed {seed} relative error {err:e}");
    }
}

fn params(entries: Vec<(&str, Tensor)>) -> Params {
    entries.into_iter().map(|(n, t)| (n.to_string(), t)).collect()
}

#[test]
fn matmul_rows_and_batches() {
    for_seeds("matmul", |seed| {
        let mut r = rng::seeded(seed);
        let p = params(vec![
            ("a", away_from_zero(&[2, 3, 4], &mut r)),
            ("b", away_from_zero(&[4, 5], &mut r)),
        ]);
        check(p, |t, v| {
            let y = t.matmul(v["a"], v["b"])?;
            weighted_sum(t, y, seed)
        })
    });
}

#[test]
fn elementwise_ops() {
    for_seeds("add/sub/mul/scale", |seed| {
        let mut r = rng::seeded(seed);
        let p = params(vec![
            ("x", away_from_zero(&[3, 4], &mut r)),
            ("y", away_from_zero(&[3, 4], &mut r)),
        ]);
        check(p, |t, v| {
            let s = t.add(v["x"], v["y"])?;
            let d = t.sub(s, v["y"])?;
            let m = t.mul(d, v["y"])?;
            let m = t.mul(m, v["x"])?;
            let c = t.scale(m, -0.7)?;
            weighted_sum(t, c, seed)
        })
    });
}

#[test]
fn broadcast_add_and_relu() {
    for_seeds("add_broadcast/relu", |seed| {
        let mut r = rng::seeded(seed);
        let p = params(vec![
            ("x", away_from_zero(&[2, 3, 4], &mut r)),
            ("b", away_from_zero(&[4], &mut r)),
        ]);
        check(p, |t, v| {
            let y = t.add_broadcast(v["x"], v["b"])?;
            let y = t.relu(y)?;
            weighted_sum(t, y, seed)
        })
    });
}

#[test]
fn reductions() {
    for_seeds("mean_axis", |seed| {
        let mut r = rng::seeded(seed);
        let p = params(vec![("x", away_from_zero(&[2, 3, 4], &mut r))]);
        let axis = (seed % 3) as usize;
        check(p, move |t, v| {
            let m = t.mean_axis(v["x"], axis)?;
            weighted_sum(t, m, seed)
        })
    });
}

#[test]
fn softmax_over_any_axis() {
    for_seeds("softmax", |seed| {
        let mut r = rng::seeded(seed);
        let p = params(vec![("x", Tensor::uniform(vec![2, 3, 4], 2.0, &mut r))]);
        let axis = (seed % 3) as usize;
        check(p, move |t, v| {
            let s = t.softmax(v["x"], axis)?;
            weighted_sum(t, s, seed)
        })
    });
}

#[test]
fn layer_norm_all_inputs() {
    for_seeds("layer_norm", |seed| {
        let mut r = rng::seeded(seed);
        let p = params(vec![
            ("x", Tensor::uniform(vec![2, 3, 6], 2.0, &mut r)),
            ("g", Tensor::uniform(vec![6], 1.5, &mut r)),
            ("b", Tensor::uniform(vec![6], 1.0, &mut r)),
        ]);
        check(p, |t, v| {
            let y = t.layer_norm(v["x"], v["g"], v["b"], 1e-5)?;
            weighted_sum(t, y, seed)
        })
    });
}

#[test]
fn sequence_concat_and_slice() {
    for_seeds("concat_seq/slice_seq", |seed| {
        let mut r = rng::seeded(seed);
        let p = params(vec![
            ("x", Tensor::uniform(vec![2, 3, 4], 1.0, &mut r)),
            ("q", Tensor::uniform(vec![2, 4], 1.0, &mut r)),
        ]);
        check(p, |t, v| {
            let c = t.concat_seq(v["x"], v["q"])?;
            let s = t.slice_seq(c, 1, 3)?;
            weighted_sum(t, s, seed)
        })
    });
}

#[test]
fn multi_head_attention() {
    for_seeds("attention", |seed| {
        let mut r = rng::seeded(seed);
        let p = params(vec![
            ("q", Tensor::uniform(vec![2, 5, 8], 1.0, &mut r)),
            ("k", Tensor::uniform(vec![2, 5, 8], 1.0, &mut r)),
            ("v", Tensor::uniform(vec![2, 5, 8], 1.0, &mut r)),
        ]);
        let heads = if seed % 2 == 0 { 2 } else { 4 };
        check(p, move |t, v| {
            let y = t.attention(v["q"], v["k"], v["v"], heads)?;
            weighted_sum(t, y, seed)
        })
    });
}

#[test]
fn cross_entropy_hard_targets() {
    for_seeds("cross_entropy hard", |seed| {
        let mut r = rng::seeded(seed);
        let targets: Vec<usize> = (0..3).map(|_| r.random_range(0..5)).collect();
        let p = params(vec![("logits", Tensor::uniform(vec![3, 5], 2.0, &mut r))]);
        check(p, move |t, v| {
            let p = t.softmax(v["logits"], 1)?;
            t.cross_entropy(p, CeTarget::Hard(targets.clone()))
        })
    });
}

#[test]
fn cross_entropy_soft_targets_carry_gradient_into_both_sides() {
    for_seeds("cross_entropy soft", |seed| {
        let mut r = rng::seeded(seed);
        let p = params(vec![
            ("pred", Tensor::uniform(vec![3, 5], 2.0, &mut r)),
            ("target", Tensor::uniform(vec![3, 5], 2.0, &mut r)),
        ]);
        check(p, |t, v| {
            let p = t.softmax(v["pred"], 1)?;
            let q = t.softmax(v["target"], 1)?;
            t.cross_entropy(p, CeTarget::Soft(q))
        })
    });
}

#[test]
fn mean_squared_error() {
    for_seeds("mse", |seed| {
        let mut r = rng::seeded(seed);
        let p = params(vec![
            ("a", Tensor::uniform(vec![2, 3, 4], 1.0, &mut r)),
            ("b", Tensor::uniform(vec![2, 3, 4], 1.0, &mut r)),
        ]);
        check(p, |t, v| t.mse(v["a"], v["b"]))
    });
}

fn encoder_error(d: usize, heads: usize, seed: u64) -> f64 {
    let mut r = rng::seeded(seed);
    let enc = EncoderParams::init(EncoderConfig::new(d).heads(heads).translating(3), &mut r).unwrap();
    let mut p: Params = aact_core::Parameterized::named_params(&enc)
        .into_iter()
        .map(|(n, t)| (n, t.clone()))
        .collect();
    p.insert("x".into(), Tensor::uniform(vec![2, 5, d], 1.0, &mut r));
    check(p, |t, v| {
        // Rebuild the encoder's tape handles from the checked parameter set.
        let layers = (0..enc.layers.len())
            .map(|i| {
                let f = |name: &str| v[&format!("layer{i}.{name}")];
                BoundLayer {
                    wq: f("wq"),
                    wk: f("wk"),
                    wv: f("wv"),
                    wo: f("wo"),
                    w1: f("w1"),
                    b1: f("b1"),
                    w2: f("w2"),
                    b2: f("b2"),
                    ln1_gamma: f("ln1_gamma"),
                    ln1_beta: f("ln1_beta"),
                    ln2_gamma: f("ln2_gamma"),
                    ln2_beta: f("ln2_beta"),
                }
            })
            .collect();
        let bound = BoundEncoder {
            num_heads: heads,
            model_dim: d,
            layers,
            query_tokens: Some(v["query"]),
        };
        let y = encoder_forward(t, v["x"], &bound, 3)?;
        weighted_sum(t, y, seed)
    })
}

#[test]
fn whole_translating_encoder() {
    for_seeds("encoder d=8 heads=2", |seed| encoder_error(8, 2, seed));
}

#[test]
fn whole_encoder_with_eight_heads() {
    for_seeds("encoder d=16 heads=8", |seed| encoder_error(16, 8, seed));
}

#[test]
fn detached_values_receive_no_gradient() {
    let mut tape = Tape::new();
    let x = tape.param("x", Tensor::vector(vec![1.0, 2.0]));
    let d = tape.detach(x);
    let y = tape.mul(d, d).unwrap();
    let s = tape.sum(y).unwrap();
    let grads = tape.backward(s).unwrap();
    assert!(grads.get("x").is_none_or(|g| g.data().iter().all(|v| *v == 0.0)));
}

#[test]
fn foreign_vars_are_rejected() {
    let mut a = Tape::new();
    let mut b = Tape::new();
    let x = a.param("x", Tensor::scalar(1.0));
    let y = b.param("y", Tensor::scalar(2.0));
    assert!(matches!(b.add(x, y), Err(Error::DetachedGraph)));
    let v = a.param("v", Tensor::vector(vec![1.0, 2.0]));
    assert!(matches!(a.backward(v), Err(Error::NonScalarLoss(_))));
}
