//! Central finite differences, used as an oracle for [`Tape::backward`](crate::tape::Tape::backward).

use std::collections::BTreeMap;

use crate::error::Result;
use crate::tape::GradientMap;
use crate::tensor::Tensor;

/// Step used by the gradient checks throughout the crate.
pub const FD_STEP: f64 = 1e-4;

/// Anything that owns a fixed set of named parameter tensors.
pub trait Parameterized {
    fn named_params(&self) -> Vec<(String, &Tensor)>;
    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }
}

impl Parameterized for BTreeMap<String, Tensor> {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        self.iter().map(|(k, v)| (k.clone(), v)).collect()
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        self.iter_mut().map(|(k, v)| (k.clone(), v)).collect()
    }
}

/// Which coordinates [`finite_diff_grad_subset`] perturbs: `(param name, flat index)`.
pub type Coordinate = (String, usize);

/// `(f(θ + h·e) − f(θ − h·e)) / 2h` for every coordinate of every parameter.
pub fn finite_diff_grad<P, F>(params: &mut P, step: f64, mut f: F) -> Result<GradientMap>
where
    P: Parameterized,
    F: FnMut(&P) -> Result<f64>,
{
    let coords: Vec<Coordinate> = params
        .named_params()
        .iter()
        .flat_map(|(name, t)| (0..t.numel()).map(move |i| (name.clone(), i)))
        .collect();
    finite_diff_grad_subset(params, step, &coords, &mut f)
}

/// Like [`finite_diff_grad`] but only for the listed coordinates; others are reported as 0.
pub fn finite_diff_grad_subset<P, F>(
    params: &mut P,
    step: f64,
    coords: &[Coordinate],
    mut f: F,
) -> Result<GradientMap>
where
    P: Parameterized,
    F: FnMut(&P) -> Result<f64>,
{
    let (map, _) = finite_diff_grad_piecewise(params, step, coords, |p| Ok((f(p)?, 0)))?;
    Ok(map)
}

/// Central differences where `f` also reports an activation pattern (see
/// [`Tape::activation_pattern`](crate::tape::Tape::activation_pattern)).
///
/// A coordinate whose `+h` and `−h` evaluations see different patterns
/// straddles a kink, so its difference quotient is not a derivative estimate.
/// Such coordinates are returned separately and left at 0 in the map.
pub fn finite_diff_grad_piecewise<P, F>(
    params: &mut P,
    step: f64,
    coords: &[Coordinate],
    mut f: F,
) -> Result<(GradientMap, Vec<Coordinate>)>
where
    P: Parameterized,
    F: FnMut(&P) -> Result<(f64, u64)>,
{
    assert!(step > 0.0, "finite difference step must be positive");
    let mut out: BTreeMap<String, Tensor> = params
        .named_params()
        .into_iter()
        .map(|(n, t)| (n, Tensor::zeros(t.shape().to_vec())))
        .collect();
    let mut kinks = Vec::new();
    for (name, i) in coords {
        let original = set_coord(params, name, *i, None);
        set_coord(params, name, *i, Some(original + step));
        let plus = f(params);
        set_coord(params, name, *i, Some(original - step));
        let minus = f(params);
        set_coord(params, name, *i, Some(original));
        let ((plus, p_pat), (minus, m_pat)) = (plus?, minus?);
        if p_pat != m_pat {
            kinks.push((name.clone(), *i));
            continue;
        }
        if let Some(t) = out.get_mut(name) {
            t.data_mut()[*i] = (plus - minus) / (2.0 * step);
        }
    }
    let mut map = GradientMap::default();
    for (name, t) in out {
        map.insert(name, t);
    }
    Ok((map, kinks))
}

fn set_coord<P: Parameterized>(params: &mut P, name: &str, i: usize, value: Option<f64>) -> f64 {
    let mut all = params.named_params_mut();
    let (_, t) = all
        .iter_mut()
        .find(|(n, _)| n == name)
        .unwrap_or_else(|| panic!("unknown parameter `{name}`"));
    let old = t.data()[i];
    if let Some(v) = value {
        t.data_mut()[i] = v;
    }
    old
}

/// Relative error between two gradients of one tensor:
/// `‖a − n‖₂ / max(‖a‖₂, ‖n‖₂, floor)`.
///
/// Norm-wise comparison keeps a single coordinate sitting on a ReLU kink
/// from dominating; `floor` stops near-zero gradients from dividing by noise.
pub fn relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, b)| a - b));
    let scale = norm(&mut analytic.iter().copied())
        .max(norm(&mut numeric.iter().copied()))
        .max(floor);
    diff / scale
}

/// Default denominator floor for [`relative_error`].
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Per-parameter comparison of two gradient maps.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub per_param: Vec<(String, f64)>,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.per_param.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&(String, f64)> {
        self.per_param
            .iter()
            .max_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Compares `analytic` against `numeric` for every parameter of `params`.
///
/// When `only` is given, just those coordinates enter the comparison.
pub fn compare<P: Parameterized>(
    params: &P,
    analytic: &GradientMap,
    numeric: &GradientMap,
    only: Option<&[Coordinate]>,
) -> GradCheckReport {
    let mut per_param = Vec::new();
    for (name, t) in params.named_params() {
        let zeros = Tensor::zeros(t.shape().to_vec());
        let a = analytic.get(&name).unwrap_or(&zeros);
        let n = numeric.get(&name).unwrap_or(&zeros);
        let (av, nv): (Vec<f64>, Vec<f64>) = match only {
            Some(coords) => coords
                .iter()
                .filter(|(c, _)| *c == name)
                .map(|(_, i)| (a.data()[*i], n.data()[*i]))
                .unzip(),
            None => (a.data().to_vec(), n.data().to_vec()),
        };
        if av.is_empty() {
            continue;
        }
        per_param.push((name, relative_error(&av, &nv, REL_ERR_FLOOR)));
    }
    GradCheckReport { per_param }
}
