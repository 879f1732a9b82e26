//! Invariant Sobolev metrics on curves and the Riemannian path energy.
//!
//! For a curve `c` and tangent field `h`, the order-`n` metric is
//! `G_c(h,h) = Σ_i a_i ∫ <∂_s^i h, ∂_s^i h> ds` with arc-length derivative
//! `∂_s = |∂_θ c|^{-1} ∂_θ` and `ds = |∂_θ c| dθ`; the scale-invariant
//! variant multiplies term `i` by a power of the curve length. Orders up to 2
//! are supported, with the chain rule expanded symbolically:
//!
//! `∂_s h   = h_θ / q`
//! `∂_s^2 h = h_θθ / q^2 - h_θ (c_θ · c_θθ) / q^4`,  `q = |c_θ|`.
//!
//! The path energy integrates `Σ_k G_{c^k(t)}(∂_t c^k, ∂_t c^k)` over time by
//! Gaussian quadrature; its gradient flows through the node jets back to the
//! spline control points.

use ndarray::{Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::detsum::ExactSum;
use crate::error::{Error, Result};
use crate::spline::{PathSpline, QuadratureRule};

/// Exponent rule for the scale-invariant variant's length powers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleExponent {
    /// `2i - 3`: the unique exponents making every term scale-invariant
    /// (under `c -> λc`, `h -> λh`, term `i` picks up `λ^{3-2i}`).
    DimensionBalanced,
    /// `2n - i` for an order-`n` metric, as conventionally written.
    AsPrinted,
}

/// Which family of Sobolev metrics to use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricVariant {
    ConstantCoefficient,
    ScaleInvariant(ScaleExponent),
}

/// Sobolev metric parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricConfig {
    /// Metric order `n` (0, 1 or 2).
    pub order: usize,
    /// Coefficients `a_0 ..= a_n`, nonnegative with at least one positive.
    pub coefficients: Vec<f64>,
    pub variant: MetricVariant,
    /// Nodes with `|∂_θ c|` below this are immersion violations.
    pub immersion_floor: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        MetricConfig {
            order: 2,
            coefficients: vec![0.1, 1.0, 1e-5],
            variant: MetricVariant::ConstantCoefficient,
            immersion_floor: 1e-8,
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if self.order > 2 {
            return Err(Error::InvalidConfig(format!(
                "metric order {} not supported (max 2)",
                self.order
            )));
        }
        if self.coefficients.len() != self.order + 1 {
            return Err(Error::InvalidConfig(format!(
                "metric order {} needs {} coefficients, got {}",
                self.order,
                self.order + 1,
                self.coefficients.len()
            )));
        }
        if self.coefficients.iter().any(|&a| a < 0.0 || !a.is_finite()) {
            return Err(Error::InvalidConfig(
                "metric coefficients must be nonnegative".into(),
            ));
        }
        if !self.coefficients.iter().any(|&a| a > 0.0) {
            return Err(Error::InvalidConfig(
                "at least one metric coefficient must be positive".into(),
            ));
        }
        Ok(())
    }

    fn length_exponent(&self, i: usize) -> i32 {
        match self.variant {
            MetricVariant::ConstantCoefficient => 0,
            MetricVariant::ScaleInvariant(ScaleExponent::DimensionBalanced) => 2 * i as i32 - 3,
            MetricVariant::ScaleInvariant(ScaleExponent::AsPrinted) => {
                2 * self.order as i32 - i as i32
            }
        }
    }
}

/// Spatial jet of the base curve at quadrature nodes: rows are nodes,
/// columns the three coordinates. `d2` is required for order-2 metrics.
pub struct CurveJet<'a> {
    pub d1: ArrayView2<'a, f64>,
    pub d2: Option<ArrayView2<'a, f64>>,
}

/// Spatial jet of the tangent field at the same nodes.
pub struct FieldJet<'a> {
    pub d0: ArrayView2<'a, f64>,
    pub d1: Option<ArrayView2<'a, f64>>,
    pub d2: Option<ArrayView2<'a, f64>>,
}

#[inline]
fn row(view: &ArrayView2<'_, f64>, s: usize) -> [f64; 3] {
    [view[[s, 0]], view[[s, 1]], view[[s, 2]]]
}

#[inline]
fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Per-term integrals and curve length for one (component, time-node) slice.
struct SliceIntegrals {
    terms: [f64; 3],
    length: f64,
}

fn slice_integrals(
    c: &CurveJet<'_>,
    h: &FieldJet<'_>,
    weights: &[f64],
    cfg: &MetricConfig,
) -> Result<SliceIntegrals> {
    let nodes = weights.len();
    let mut terms = [0.0; 3];
    let mut length = 0.0;
    for s in 0..nodes {
        let c1 = row(&c.d1, s);
        let q2 = dot3(c1, c1);
        let q = q2.sqrt();
        if q < cfg.immersion_floor {
            return Err(Error::ImmersionViolation {
                component: 0,
                node: s,
                speed: q,
            });
        }
        let w = weights[s];
        length += w * q;
        let h0 = row(&h.d0, s);
        terms[0] += w * dot3(h0, h0) * q;
        if cfg.order >= 1 {
            let h1 = row(h.d1.as_ref().expect("field jet order 1"), s);
            terms[1] += w * dot3(h1, h1) / q;
            if cfg.order >= 2 {
                let c2 = row(c.d2.as_ref().expect("curve jet order 2"), s);
                let h2 = row(h.d2.as_ref().expect("field jet order 2"), s);
                let m = dot3(c1, c2);
                let mut s2 = [0.0; 3];
                for d in 0..3 {
                    s2[d] = h2[d] / q2 - h1[d] * m / (q2 * q2);
                }
                terms[2] += w * dot3(s2, s2) * q;
            }
        }
    }
    Ok(SliceIntegrals { terms, length })
}

/// `G_c(h, h)` evaluated by quadrature from jets at the nodes.
pub fn metric_value(
    c: &CurveJet<'_>,
    h: &FieldJet<'_>,
    weights: &[f64],
    cfg: &MetricConfig,
) -> Result<f64> {
    let ints = slice_integrals(c, h, weights, cfg)?;
    let mut value = 0.0;
    for (i, &a) in cfg.coefficients.iter().enumerate() {
        value += a * ints.length.powi(cfg.length_exponent(i)) * ints.terms[i];
    }
    Ok(value)
}

/// Cotangents of [`metric_value`] with respect to every node jet entry.
pub struct MetricCotangents {
    pub c1: Array2<f64>,
    pub c2: Array2<f64>,
    pub h0: Array2<f64>,
    pub h1: Array2<f64>,
    pub h2: Array2<f64>,
}

/// Value and exact node-jet gradient of `G_c(h, h)`.
pub fn metric_value_grad(
    c: &CurveJet<'_>,
    h: &FieldJet<'_>,
    weights: &[f64],
    cfg: &MetricConfig,
) -> Result<(f64, MetricCotangents)> {
    let ints = slice_integrals(c, h, weights, cfg)?;
    let mut value = 0.0;
    // d(value)/d(I_i) and d(value)/d(length).
    let mut di = [0.0; 3];
    let mut dlen = 0.0;
    for (i, &a) in cfg.coefficients.iter().enumerate() {
        let p = cfg.length_exponent(i);
        let lp = ints.length.powi(p);
        value += a * lp * ints.terms[i];
        di[i] = a * lp;
        if p != 0 {
            dlen += a * p as f64 * ints.length.powi(p - 1) * ints.terms[i];
        }
    }

    let nodes = weights.len();
    let mut cot = MetricCotangents {
        c1: Array2::zeros((nodes, 3)),
        c2: Array2::zeros((nodes, 3)),
        h0: Array2::zeros((nodes, 3)),
        h1: Array2::zeros((nodes, 3)),
        h2: Array2::zeros((nodes, 3)),
    };
    for s in 0..nodes {
        let w = weights[s];
        let c1 = row(&c.d1, s);
        let q2 = dot3(c1, c1);
        let q = q2.sqrt();
        let h0 = row(&h.d0, s);
        // length = Σ w q, dq/dc1 = c1/q.
        for d in 0..3 {
            cot.c1[[s, d]] += dlen * w * c1[d] / q;
        }
        // term 0: Σ w |h0|^2 q
        for d in 0..3 {
            cot.h0[[s, d]] += di[0] * w * 2.0 * q * h0[d];
            cot.c1[[s, d]] += di[0] * w * dot3(h0, h0) * c1[d] / q;
        }
        if cfg.order >= 1 {
            let h1 = row(h.d1.as_ref().unwrap(), s);
            // term 1: Σ w |h1|^2 / q
            for d in 0..3 {
                cot.h1[[s, d]] += di[1] * w * 2.0 * h1[d] / q;
                cot.c1[[s, d]] -= di[1] * w * dot3(h1, h1) * c1[d] / (q2 * q);
            }
            if cfg.order >= 2 {
                let c2 = row(c.d2.as_ref().unwrap(), s);
                let h2 = row(h.d2.as_ref().unwrap(), s);
                let m = dot3(c1, c2);
                let q4 = q2 * q2;
                let mut s2 = [0.0; 3];
                for d in 0..3 {
                    s2[d] = h2[d] / q2 - h1[d] * m / q4;
                }
                let s2h1 = dot3(s2, h1);
                let s2h2 = dot3(s2, h2);
                let s2s2 = dot3(s2, s2);
                let a2 = di[2] * w;
                for d in 0..3 {
                    // g2 = |s2|^2 q
                    cot.h2[[s, d]] += a2 * 2.0 * s2[d] / q;
                    cot.h1[[s, d]] -= a2 * 2.0 * m * s2[d] / (q2 * q);
                    cot.c2[[s, d]] -= a2 * 2.0 * s2h1 * c1[d] / (q2 * q);
                    cot.c1[[s, d]] += a2
                        * (s2s2 * c1[d] / q - 4.0 * s2h2 * c1[d] / (q2 * q)
                            - 2.0 * s2h1 * c2[d] / (q2 * q)
                            + 8.0 * m * s2h1 * c1[d] / (q4 * q));
                }
            }
        }
    }
    Ok((value, cot))
}

/// Node jets of a spline path needed by the order-2 metric.
pub struct PathJets {
    /// `∂_θ c` per component, shape `(T, Θ, 3)`.
    pub c1: Vec<Array3<f64>>,
    pub c2: Option<Vec<Array3<f64>>>,
    pub h0: Vec<Array3<f64>>,
    pub h1: Option<Vec<Array3<f64>>>,
    pub h2: Option<Vec<Array3<f64>>>,
}

pub fn path_jets(path: &PathSpline, cfg: &MetricConfig, quad: &QuadratureRule) -> Result<PathJets> {
    if cfg.order >= 1 && quad.basis_theta.len() < 2 || cfg.order >= 2 && quad.basis_theta.len() < 3
    {
        return Err(Error::InvalidConfig(format!(
            "metric order {} exceeds the spatial spline smoothness",
            cfg.order
        )));
    }
    let bt0 = &quad.basis_t[0];
    let bt1 = &quad.basis_t[1];
    Ok(PathJets {
        c1: path.eval(bt0, &quad.basis_theta[1]),
        c2: (cfg.order >= 2).then(|| path.eval(bt0, &quad.basis_theta[2])),
        h0: path.eval(bt1, &quad.basis_theta[0]),
        h1: (cfg.order >= 1).then(|| path.eval(bt1, &quad.basis_theta[1])),
        h2: (cfg.order >= 2).then(|| path.eval(bt1, &quad.basis_theta[2])),
    })
}

fn component_slice<'a>(
    jets: &'a PathJets,
    k: usize,
    ti: usize,
) -> (CurveJet<'a>, FieldJet<'a>) {
    let c = CurveJet {
        d1: jets.c1[k].index_axis(Axis(0), ti),
        d2: jets.c2.as_ref().map(|j| j[k].index_axis(Axis(0), ti)),
    };
    let h = FieldJet {
        d0: jets.h0[k].index_axis(Axis(0), ti),
        d1: jets.h1.as_ref().map(|j| j[k].index_axis(Axis(0), ti)),
        d2: jets.h2.as_ref().map(|j| j[k].index_axis(Axis(0), ti)),
    };
    (c, h)
}

/// Riemannian energy of the path: `∫_0^1 Σ_k G_{c^k(t)}(∂_t c^k, ∂_t c^k) dt`.
/// Per-component energies are combined with an exact reduction, so the value
/// is bitwise invariant under component reordering.
pub fn path_energy(path: &PathSpline, cfg: &MetricConfig, quad: &QuadratureRule) -> Result<f64> {
    cfg.validate()?;
    let jets = path_jets(path, cfg, quad)?;
    let mut total = ExactSum::new();
    for k in 0..path.num_components() {
        let mut component_energy = 0.0;
        for (ti, &wt) in quad.t_weights.iter().enumerate() {
            let (c, h) = component_slice(&jets, k, ti);
            let g = metric_value(&c, &h, &quad.theta_weights, cfg).map_err(|e| match e {
                Error::ImmersionViolation { node, speed, .. } => Error::ImmersionViolation {
                    component: k,
                    node: ti * quad.theta_nodes.len() + node,
                    speed,
                },
                other => other,
            })?;
            component_energy += wt * g;
        }
        total.push(component_energy);
    }
    Ok(total.value())
}

/// Path energy together with its exact gradient with respect to all control
/// points (including the frozen first slice; packing masks those).
pub fn path_energy_gradient(
    path: &PathSpline,
    cfg: &MetricConfig,
    quad: &QuadratureRule,
) -> Result<(f64, Vec<Array3<f64>>)> {
    cfg.validate()?;
    let jets = path_jets(path, cfg, quad)?;
    let t_nodes = quad.t_nodes.len();
    let s_nodes = quad.theta_nodes.len();
    let zero = || -> Vec<Array3<f64>> {
        (0..path.num_components())
            .map(|_| Array3::zeros((t_nodes, s_nodes, 3)))
            .collect()
    };
    let (mut cot_c1, mut cot_c2) = (zero(), zero());
    let (mut cot_h0, mut cot_h1, mut cot_h2) = (zero(), zero(), zero());

    let mut total = ExactSum::new();
    for k in 0..path.num_components() {
        let mut component_energy = 0.0;
        for (ti, &wt) in quad.t_weights.iter().enumerate() {
            let (c, h) = component_slice(&jets, k, ti);
            let (g, cots) =
                metric_value_grad(&c, &h, &quad.theta_weights, cfg).map_err(|e| match e {
                    Error::ImmersionViolation { node, speed, .. } => Error::ImmersionViolation {
                        component: k,
                        node: ti * s_nodes + node,
                        speed,
                    },
                    other => other,
                })?;
            component_energy += wt * g;
            for s in 0..s_nodes {
                for d in 0..3 {
                    cot_c1[k][[ti, s, d]] += wt * cots.c1[[s, d]];
                    cot_c2[k][[ti, s, d]] += wt * cots.c2[[s, d]];
                    cot_h0[k][[ti, s, d]] += wt * cots.h0[[s, d]];
                    cot_h1[k][[ti, s, d]] += wt * cots.h1[[s, d]];
                    cot_h2[k][[ti, s, d]] += wt * cots.h2[[s, d]];
                }
            }
        }
        total.push(component_energy);
    }

    let bt0 = &quad.basis_t[0];
    let bt1 = &quad.basis_t[1];
    let mut grads = path.backprop(bt0, &quad.basis_theta[1], &cot_c1)?;
    let add = |more: Vec<Array3<f64>>, grads: &mut Vec<Array3<f64>>| {
        for (g, m) in grads.iter_mut().zip(more) {
            *g += &m;
        }
    };
    if cfg.order >= 2 {
        add(path.backprop(bt0, &quad.basis_theta[2], &cot_c2)?, &mut grads);
    }
    add(path.backprop(bt1, &quad.basis_theta[0], &cot_h0)?, &mut grads);
    if cfg.order >= 1 {
        add(path.backprop(bt1, &quad.basis_theta[1], &cot_h1)?, &mut grads);
    }
    if cfg.order >= 2 {
        add(path.backprop(bt1, &quad.basis_theta[2], &cot_h2)?, &mut grads);
    }
    Ok((total.value(), grads))
}
