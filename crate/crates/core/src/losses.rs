//! Objectives: semantic-experience loss `L_S`, pattern-visualization loss
//! `L_P`, the feature and label cycle losses, and their weighted sum.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::models::{ForwardVars, ModelKind};
use crate::tape::{CeTarget, Tape, Var};
use crate::tensor::{Tensor, PROB_FLOOR};

/// How the label-space cycle term treats `â_f^p` as its target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum CycleLabelTarget {
    /// The full distribution, gradient stopped.
    #[default]
    Soft,
    /// One-hot at its argmax.
    Hard,
}

impl fmt::Display for CycleLabelTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CycleLabelTarget::Soft => "soft",
            CycleLabelTarget::Hard => "hard",
        })
    }
}

impl FromStr for CycleLabelTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(CycleLabelTarget::Soft),
            "hard" => Ok(CycleLabelTarget::Hard),
            other => Err(Error::InvalidArgument(format!(
                "cycle_label_target must be soft or hard, got `{other}`"
            ))),
        }
    }
}

/// Switches for the individual terms; a disabled term contributes exactly 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LossTerms {
    /// `CE(â_o, a_o)`
    pub past_recognition: bool,
    /// `CE(â_f^s, a_f)`
    pub semantic_anticipation: bool,
    /// `mse(X̂_f, X_f)`
    pub future_features: bool,
    /// `CE(â_f^p, a_f)`
    pub pattern_anticipation: bool,
    /// `mse(X̂_o, X_o)`
    pub feature_cycle: bool,
    /// `CE(â_f^s, stopgrad(â_f^p))`
    pub semantic_cycle: bool,
}

impl Default for LossTerms {
    fn default() -> Self {
        LossTerms {
            past_recognition: true,
            semantic_anticipation: true,
            future_features: true,
            pattern_anticipation: true,
            feature_cycle: true,
            semantic_cycle: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    pub lambda_s: f64,
    pub lambda_p: f64,
    pub lambda_c: f64,
    pub terms: LossTerms,
    pub cycle_label_target: CycleLabelTarget,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_s: 1.0,
            lambda_p: 1.0,
            lambda_c: 1.0,
            terms: LossTerms::default(),
            cycle_label_target: CycleLabelTarget::Soft,
        }
    }
}

/// Scalar values of every objective term for one batch.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossBreakdown {
    pub l_s: f64,
    pub l_p: f64,
    pub l_cyc_p: f64,
    pub l_cyc_s: f64,
    pub l_c: f64,
    pub total: f64,
    pub lambda_s: f64,
    pub lambda_p: f64,
    pub lambda_c: f64,
}

impl LossBreakdown {
    /// `l_c = l_cyc_p + l_cyc_s` and `total = λ_s l_s + λ_p l_p + λ_c l_c`, bitwise.
    pub fn identities_hold(&self) -> bool {
        let l_c = self.l_cyc_p + self.l_cyc_s;
        let total = self.lambda_s * self.l_s + self.lambda_p * self.l_p + self.lambda_c * self.l_c;
        l_c.to_bits() == self.l_c.to_bits() && total.to_bits() == self.total.to_bits()
    }

    pub fn is_valid(&self) -> bool {
        [self.l_s, self.l_p, self.l_cyc_p, self.l_cyc_s, self.l_c, self.total]
            .iter()
            .all(|v| v.is_finite() && *v >= 0.0)
            && self.identities_hold()
    }
}

/// Ground truth for one batch, already on the tape where it is a tensor.
#[derive(Clone, Copy, Debug)]
pub struct Targets<'a> {
    pub x_o: Var,
    pub x_f: Var,
    pub a_o: &'a [usize],
    pub a_f: &'a [usize],
    /// Replaces the stop-gradient `â_f^p` target of `L_cyc^s` with fixed
    /// values. Finite-difference checks use it to hold the target still
    /// while parameters are perturbed.
    pub frozen_cycle_target: Option<&'a Tensor>,
}

#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub l_s: Var,
    pub l_p: Var,
    pub l_cyc_p: Var,
    pub l_cyc_s: Var,
    pub l_c: Var,
    pub total: Var,
}

impl LossVars {
    pub fn breakdown(&self, tape: &Tape, config: &LossConfig) -> LossBreakdown {
        let v = |x: Var| tape.value(x).item().expect("losses are scalars");
        LossBreakdown {
            l_s: v(self.l_s),
            l_p: v(self.l_p),
            l_cyc_p: v(self.l_cyc_p),
            l_cyc_s: v(self.l_cyc_s),
            l_c: v(self.l_c),
            total: v(self.total),
            lambda_s: config.lambda_s,
            lambda_p: config.lambda_p,
            lambda_c: config.lambda_c,
        }
    }
}

fn require(kind: ModelKind, name: &'static str, v: Option<Var>) -> Result<Var> {
    v.ok_or_else(|| Error::InvalidArgument(format!("{kind} model output is missing `{name}`")))
}

/// Sum of the enabled terms, or an exact zero when none is enabled.
fn sum_terms(tape: &mut Tape, terms: &[Option<Var>]) -> Result<Var> {
    let mut acc: Option<Var> = None;
    for t in terms.iter().flatten() {
        acc = Some(match acc {
            None => *t,
            Some(a) => tape.add(a, *t)?,
        });
    }
    Ok(match acc {
        Some(a) => a,
        None => tape.constant(Tensor::scalar(0.0)),
    })
}

/// Builds every objective term for the outputs of `kind`.
///
/// SE contributes only `L_S`, PV only `L_P`; the remaining terms are 0.
/// ACT contributes all of them.
pub fn composed_losses(
    tape: &mut Tape,
    kind: ModelKind,
    outputs: &ForwardVars,
    targets: &Targets<'_>,
    config: &LossConfig,
) -> Result<LossVars> {
    let terms = config.terms;
    let hard = |v: &[usize]| CeTarget::Hard(v.to_vec());
    let (uses_s, uses_p, uses_c) = match kind {
        ModelKind::Se => (true, false, false),
        ModelKind::Pv => (false, true, false),
        ModelKind::Act => (true, true, true),
    };

    let mut s_terms = [None, None];
    if uses_s {
        let a_o_hat = require(kind, "a_o_hat", outputs.a_o_hat)?;
        let a_f_s = require(kind, "a_f_s", outputs.a_f_s)?;
        if terms.past_recognition {
            s_terms[0] = Some(tape.cross_entropy(a_o_hat, hard(targets.a_o))?);
        }
        if terms.semantic_anticipation {
            s_terms[1] = Some(tape.cross_entropy(a_f_s, hard(targets.a_f))?);
        }
    }
    let l_s = sum_terms(tape, &s_terms)?;

    let mut p_terms = [None, None];
    if uses_p {
        let x_f_hat = require(kind, "x_f_hat", outputs.x_f_hat)?;
        let a_f_p = require(kind, "a_f_p", outputs.a_f_p)?;
        if terms.future_features {
            p_terms[0] = Some(tape.mse(x_f_hat, targets.x_f)?);
        }
        if terms.pattern_anticipation {
            p_terms[1] = Some(tape.cross_entropy(a_f_p, hard(targets.a_f))?);
        }
    }
    let l_p = sum_terms(tape, &p_terms)?;

    let zero = || Tensor::scalar(0.0);
    let (l_cyc_p, l_cyc_s) = if uses_c {
        let x_o_hat = require(kind, "x_o_hat", outputs.x_o_hat)?;
        let a_f_s = require(kind, "a_f_s", outputs.a_f_s)?;
        let a_f_p = require(kind, "a_f_p", outputs.a_f_p)?;
        let l_cyc_p = if terms.feature_cycle {
            tape.mse(x_o_hat, targets.x_o)?
        } else {
            tape.constant(zero())
        };
        let l_cyc_s = if terms.semantic_cycle {
            let target = match (config.cycle_label_target, targets.frozen_cycle_target) {
                (CycleLabelTarget::Soft, None) => CeTarget::Soft(tape.detach(a_f_p)),
                (CycleLabelTarget::Soft, Some(t)) => CeTarget::Soft(tape.constant(t.clone())),
                (CycleLabelTarget::Hard, None) => CeTarget::Hard(tape.value(a_f_p).argmax_rows()),
                (CycleLabelTarget::Hard, Some(t)) => CeTarget::Hard(t.argmax_rows()),
            };
            tape.cross_entropy(a_f_s, target)?
        } else {
            tape.constant(zero())
        };
        (l_cyc_p, l_cyc_s)
    } else {
        (tape.constant(zero()), tape.constant(zero()))
    };
    let l_c = tape.add(l_cyc_p, l_cyc_s)?;

    let ws = tape.scale(l_s, config.lambda_s)?;
    let wp = tape.scale(l_p, config.lambda_p)?;
    let wc = tape.scale(l_c, config.lambda_c)?;
    let sp = tape.add(ws, wp)?;
    let total = tape.add(sp, wc)?;
    Ok(LossVars {
        l_s,
        l_p,
        l_cyc_p,
        l_cyc_s,
        l_c,
        total,
    })
}

/// Value-level cross-entropy of one distribution against a class index.
pub fn cross_entropy(pred: &[f64], target: usize) -> Result<f64> {
    let p = pred.get(target).ok_or(Error::ClassOutOfRange {
        index: target,
        classes: pred.len(),
    })?;
    Ok(-p.max(PROB_FLOOR).ln())
}

/// Value-level cross-entropy against a soft target distribution.
pub fn soft_cross_entropy(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::shape("cross_entropy", &[pred.len()], &[target.len()]));
    }
    Ok(-pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| if t == 0.0 { 0.0 } else { t * p.max(PROB_FLOOR).ln() })
        .sum::<f64>())
}

pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape("mse", a.shape(), b.shape()));
    }
    let s: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(s / a.numel() as f64)
}

/// Shannon entropy in nats; the lower bound of any soft cross-entropy against `p`.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter()
        .filter(|&&v| v > 0.0)
        .map(|&v| v * v.ln())
        .sum::<f64>()
}

/// One-hot rows for hard targets.
pub fn one_hot(labels: &[usize], classes: usize) -> Tensor {
    let mut data = vec![0.0; labels.len() * classes];
    for (r, &c) in labels.iter().enumerate() {
        data[r * classes + c] = 1.0;
    }
    Tensor::from_parts(vec![labels.len(), classes], data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_examples() {
        assert_eq!(cross_entropy(&[0.0, 1.0, 0.0], 1).unwrap(), 0.0);
        let a = 7;
        let uniform = vec![1.0 / a as f64; a];
        for c in 0..a {
            assert!((cross_entropy(&uniform, c).unwrap() - (a as f64).ln()).abs() < 1e-12);
        }
        let ce = cross_entropy(&[1.0, 0.0], 1).unwrap();
        assert!((ce - 1e12f64.ln()).abs() < 1e-9);
        assert!((ce - 27.631).abs() < 1e-3);
        assert!(matches!(
            cross_entropy(&[0.5, 0.5], 2),
            Err(Error::ClassOutOfRange { index: 2, classes: 2 })
        ));
        assert!(soft_cross_entropy(&[0.5, 0.5], &[1.0]).is_err());
    }

    #[test]
    fn mse_examples() {
        let a = Tensor::vector(vec![0.0, 0.0]);
        let b = Tensor::vector(vec![2.0, 0.0]);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &b).unwrap(), 2.0);
        assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
        assert!(mse(&a, &Tensor::vector(vec![1.0])).is_err());
    }

    #[test]
    fn tape_cross_entropy_matches_value_level() {
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::new(vec![2, 3], vec![0.2, 0.3, 0.5, 0.6, 0.4, 0.0]).unwrap());
        let ce = tape.cross_entropy(p, CeTarget::Hard(vec![2, 2])).unwrap();
        let expect = (cross_entropy(&[0.2, 0.3, 0.5], 2).unwrap()
            + cross_entropy(&[0.6, 0.4, 0.0], 2).unwrap())
            / 2.0;
        assert!((tape.value(ce).item().unwrap() - expect).abs() < 1e-12);
        assert!(tape.cross_entropy(p, CeTarget::Hard(vec![3, 0])).is_err());
        assert!(tape.cross_entropy(p, CeTarget::Hard(vec![0])).is_err());
    }

    #[test]
    fn breakdown_identities() {
        let b = LossBreakdown {
            l_s: 0.3,
            l_p: 1.1,
            l_cyc_p: 0.7,
            l_cyc_s: 0.2,
            l_c: 0.7 + 0.2,
            total: 0.5 * 0.3 + 2.0 * 1.1 + 0.25 * (0.7 + 0.2),
            lambda_s: 0.5,
            lambda_p: 2.0,
            lambda_c: 0.25,
        };
        assert!(b.is_valid());
        let broken = LossBreakdown { l_c: 1.0, ..b };
        assert!(!broken.identities_hold());
    }
}
