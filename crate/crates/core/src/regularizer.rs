//! Weight-change regularization: discrete TV norm, Huber smoothing, the
//! shrinkage (soft-thresholding) operator, and the clipped {0,1} double-well
//! penalty.
//!
//! The TV norm of a weight change `δρ` is approximated by `‖D δρ‖_1` where
//! `D = diag(D^1, ..., D^K)` stacks per-component first-difference blocks;
//! differences never cross component boundaries. Eliminating the auxiliary
//! variable of the Lagrangian splitting turns `α ‖η‖_1 + (γ/2) ‖η - D δρ‖^2`
//! into the Huber sum `Σ H_{α,γ}((D δρ)_i)`, with the minimizing `η` given by
//! shrinkage; that identity is what the continuation solver relies on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::graph::PolygonalGraph;

/// Block-diagonal first-difference operator, stored implicitly as the
/// per-component edge counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DifferenceOperator {
    /// Edge count `N_k` of each component; block `k` maps `R^{N_k}` to
    /// `R^{N_k - 1}`.
    sizes: Vec<usize>,
}

impl DifferenceOperator {
    pub fn new(sizes: Vec<usize>) -> Self {
        DifferenceOperator { sizes }
    }

    pub fn from_graph(graph: &PolygonalGraph) -> Self {
        DifferenceOperator::new(graph.edges_per_component())
    }

    pub fn input_len(&self) -> usize {
        self.sizes.iter().sum()
    }

    /// `N - K` for nonempty blocks.
    pub fn output_len(&self) -> usize {
        self.sizes.iter().map(|n| n.saturating_sub(1)).sum()
    }

    /// `(D v)_i = v_{i+1} - v_i` within each component block.
    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.input_len() {
            return Err(Error::ShapeMismatch {
                context: "difference operator input",
                expected: self.input_len().to_string(),
                got: v.len().to_string(),
            });
        }
        let mut out = Vec::with_capacity(self.output_len());
        let mut offset = 0;
        for &n in &self.sizes {
            for i in 0..n.saturating_sub(1) {
                out.push(v[offset + i + 1] - v[offset + i]);
            }
            offset += n;
        }
        Ok(out)
    }

    /// Adjoint `D^T`.
    pub fn apply_adjoint(&self, w: &[f64]) -> Result<Vec<f64>> {
        if w.len() != self.output_len() {
            return Err(Error::ShapeMismatch {
                context: "difference operator adjoint input",
                expected: self.output_len().to_string(),
                got: w.len().to_string(),
            });
        }
        let mut out = vec![0.0; self.input_len()];
        let mut in_offset = 0;
        let mut out_offset = 0;
        for &n in &self.sizes {
            for i in 0..n.saturating_sub(1) {
                let wi = w[out_offset + i];
                out[in_offset + i] -= wi;
                out[in_offset + i + 1] += wi;
            }
            in_offset += n;
            out_offset += n.saturating_sub(1);
        }
        Ok(out)
    }
}

/// Discrete total variation `‖D δρ‖_1`.
pub fn tv_norm(delta_rho: &[f64], d: &DifferenceOperator) -> Result<f64> {
    Ok(d.apply(delta_rho)?.iter().map(|v| v.abs()).sum())
}

/// Huber/TV smoothing parameters: `alpha` weights the TV term, `gamma` is the
/// smoothing (Lagrange multiplier) strength. The quadratic/linear crossover
/// sits at `alpha / gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HuberParams {
    pub alpha: f64,
    pub gamma: f64,
}

impl HuberParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "TV weight alpha must be nonnegative, got {}",
                self.alpha
            )));
        }
        if !self.gamma.is_finite() || self.gamma <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "smoothing gamma must be positive, got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    pub fn threshold(&self) -> f64 {
        self.alpha / self.gamma
    }
}

/// `H_{α,γ}(v)`: quadratic of curvature γ inside `|v| <= α/γ`, the tight
/// linear continuation `α (|v| - α/2γ)` outside.
pub fn huber(v: f64, p: HuberParams) -> f64 {
    let t = p.threshold();
    if v.abs() <= t {
        0.5 * p.gamma * v * v
    } else {
        p.alpha * (v.abs() - 0.5 * t)
    }
}

/// Derivative of [`huber`]; continuous at `±α/γ`.
pub fn huber_grad(v: f64, p: HuberParams) -> f64 {
    let t = p.threshold();
    if v.abs() <= t {
        p.gamma * v
    } else {
        p.alpha * v.signum()
    }
}

/// Elementwise soft thresholding: the proximal operator of `threshold ‖·‖_1`.
pub fn shrink(w: &[f64], threshold: f64) -> Vec<f64> {
    w.iter()
        .map(|&v| {
            if v > threshold {
                v - threshold
            } else if v < -threshold {
                v + threshold
            } else {
                0.0
            }
        })
        .collect()
}

/// Clipped {0,1}-penalty configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyConfig {
    /// Weight of the penalty in the total energy.
    pub beta: f64,
    /// Clipping margin: the quartic is continued linearly outside
    /// `(-epsilon, 1 + epsilon)` with matching value and slope.
    pub epsilon: f64,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            beta: 1.0,
            epsilon: 0.5,
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta < 0.0 || !self.beta.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "penalty weight beta must be nonnegative, got {}",
                self.beta
            )));
        }
        if !self.epsilon.is_finite() || self.epsilon <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "clipping margin epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// The double well `8 (ρ (ρ - 1))^2` and its derivative.
#[inline]
fn well(rho: f64) -> (f64, f64) {
    let r = rho * (rho - 1.0);
    (8.0 * r * r, 16.0 * r * (2.0 * rho - 1.0))
}

/// Clipped double well: quartic on `[-ε, 1+ε]`, C¹ linear continuations
/// outside. The well is symmetric about 1/2, so one clip anchor serves both
/// sides.
pub fn clipped_well(rho: f64, epsilon: f64) -> (f64, f64) {
    let hi = 1.0 + epsilon;
    let lo = -epsilon;
    if rho > hi {
        let (v, s) = well(hi);
        (v + s * (rho - hi), s)
    } else if rho < lo {
        let (v, s) = well(lo);
        (v + s * (rho - lo), s)
    } else {
        well(rho)
    }
}

/// Length-weighted clipped {0,1}-penalty of a polygonal graph:
/// `Σ_i well(ρ_i) |e_i|` with gradients through both the weights and (via
/// `|e_i|`) the chain vertices. The returned value excludes the `beta`
/// factor.
pub struct PenaltyGradient {
    pub value: f64,
    /// Per component, per chain vertex.
    pub vertex: Vec<Vec<Vec3>>,
    /// Per edge.
    pub weight: Vec<f64>,
}

pub fn zero_one_penalty(graph: &PolygonalGraph, cfg: &PenaltyConfig) -> Result<PenaltyGradient> {
    cfg.validate()?;
    let mut value = 0.0;
    let mut vertex: Vec<Vec<Vec3>> = graph
        .vertices
        .iter()
        .map(|chain| vec![[0.0; 3]; chain.len()])
        .collect();
    let mut weight = vec![0.0; graph.num_edges()];
    let mut edge_index = 0;
    for (c, chain) in graph.vertices.iter().enumerate() {
        for local in 0..chain.len() - 1 {
            let e = graph.edge_vectors[edge_index];
            let q = geom::norm(e);
            if q == 0.0 {
                return Err(Error::ZeroLengthEdge {
                    component: c,
                    index: local,
                });
            }
            let rho = graph.weights[edge_index];
            let (w, dw) = clipped_well(rho, cfg.epsilon);
            value += w * q;
            weight[edge_index] = dw * q;
            // d(|e|)/de = e/|e|; e = v_{a+1} - v_a.
            let u = geom::scale(e, w / q);
            for d in 0..3 {
                vertex[c][local][d] -= u[d];
                vertex[c][local + 1][d] += u[d];
            }
            edge_index += 1;
        }
    }
    Ok(PenaltyGradient {
        value,
        vertex,
        weight,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::PolygonalGraph;

    #[test]
    fn tv_of_single_bump_is_two() {
        let d = DifferenceOperator::new(vec![3]);
        assert_eq!(tv_norm(&[0.0, 1.0, 0.0], &d).unwrap(), 2.0);
    }

    #[test]
    fn tv_of_constant_is_zero() {
        let d = DifferenceOperator::new(vec![4]);
        assert_eq!(tv_norm(&[2.5; 4], &d).unwrap(), 0.0);
        // Per-component constants too: blocks never couple.
        let d = DifferenceOperator::new(vec![2, 3]);
        assert_eq!(tv_norm(&[7.0, 7.0, -1.0, -1.0, -1.0], &d).unwrap(), 0.0);
    }

    #[test]
    fn tv_matches_naive_loop_over_components() {
        let sizes = vec![4, 1, 3];
        let d = DifferenceOperator::new(sizes.clone());
        let v: Vec<f64> = (0..8).map(|i| ((i * 83 % 17) as f64) * 0.31 - 1.0).collect();
        let fast = tv_norm(&v, &d).unwrap();
        let mut naive = 0.0;
        let mut offset = 0;
        for &n in &sizes {
            for i in 1..n {
                naive += (v[offset + i] - v[offset + i - 1]).abs();
            }
            offset += n;
        }
        assert_eq!(fast, naive);
    }

    #[test]
    fn tv_invariant_under_per_component_constants() {
        let d = DifferenceOperator::new(vec![3, 4]);
        let v = [0.1, -0.4, 0.9, 2.0, 1.0, 0.0, 0.5];
        let base = tv_norm(&v, &d).unwrap();
        let shifted: Vec<f64> = v
            .iter()
            .enumerate()
            .map(|(i, &x)| if i < 3 { x + 5.0 } else { x - 3.0 })
            .collect();
        let after = tv_norm(&shifted, &d).unwrap();
        assert!((base - after).abs() < 1e-12);
    }

    /// `<D v, w> = <v, D^T w>` on random vectors.
    #[test]
    fn difference_operator_adjoint_identity() {
        let d = DifferenceOperator::new(vec![5, 2, 4]);
        let mut state = 17u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for _ in 0..20 {
            let v: Vec<f64> = (0..d.input_len()).map(|_| next()).collect();
            let w: Vec<f64> = (0..d.output_len()).map(|_| next()).collect();
            let dv = d.apply(&v).unwrap();
            let dtw = d.apply_adjoint(&w).unwrap();
            let lhs: f64 = dv.iter().zip(&w).map(|(a, b)| a * b).sum();
            let rhs: f64 = v.iter().zip(&dtw).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn difference_annihilates_constants() {
        let d = DifferenceOperator::new(vec![6]);
        assert!(d.apply(&[3.3; 6]).unwrap().iter().all(|&x| x == 0.0));
        assert_eq!(d.output_len(), 5);
        assert_eq!(DifferenceOperator::new(vec![4, 3]).output_len(), 5);
    }

    #[test]
    fn huber_tagged_values() {
        let p = HuberParams {
            alpha: 1.0,
            gamma: 2.0,
        };
        assert_eq!(huber(0.0, p), 0.0);
        assert_eq!(huber(0.25, p), 0.0625); // quadratic branch: γ/2 v²
        assert_eq!(huber(1.0, p), 0.75); // linear branch: α(|v| - α/2γ)
        assert_eq!(huber(-1.0, p), 0.75);
    }

    #[test]
    fn huber_gradient_is_continuous_at_threshold() {
        let p = HuberParams {
            alpha: 1.3,
            gamma: 3.7,
        };
        let t = p.threshold();
        let eps = 1e-12;
        let inner = huber_grad(t - eps, p);
        let outer = huber_grad(t + eps, p);
        assert!((inner - outer).abs() < 1e-10, "{inner} vs {outer}");
        assert!((inner - p.alpha).abs() < 1e-9);
        // Gradient matches finite differences across both branches.
        for v in [-2.0, -t, -0.1, 0.0, 0.2, t, 1.7] {
            let h = 1e-7;
            let fd = (huber(v + h, p) - huber(v - h, p)) / (2.0 * h);
            assert!((fd - huber_grad(v, p)).abs() < 1e-6);
        }
    }

    #[test]
    fn shrink_tagged_values() {
        assert_eq!(shrink(&[0.3], 0.5), vec![0.0]);
        assert_eq!(shrink(&[1.0], 0.5), vec![0.5]);
        assert_eq!(shrink(&[-2.0], 0.5), vec![-1.5]);
    }

    /// Scalar grid-search oracle: shrink(w) minimizes
    /// `|η| + (1 / 2 threshold) (η - w)^2` over η.
    #[test]
    fn shrink_matches_grid_search_oracle() {
        let threshold = 0.37;
        let objective = |eta: f64, w: f64| eta.abs() + (eta - w) * (eta - w) / (2.0 * threshold);
        for &w in &[-1.9, -0.37, -0.2, 0.0, 0.11, 0.37, 0.8, 2.5] {
            let ours = shrink(&[w], threshold)[0];
            let mut best = f64::INFINITY;
            let mut best_eta = 0.0;
            let grid = 40_001;
            for g in 0..grid {
                let eta = -3.0 + 6.0 * g as f64 / (grid - 1) as f64;
                let v = objective(eta, w);
                if v < best {
                    best = v;
                    best_eta = eta;
                }
            }
            let resolution = 6.0 / (grid - 1) as f64;
            assert!(
                (ours - best_eta).abs() <= resolution,
                "w={w}: shrink {ours} vs grid {best_eta}"
            );
            assert!(objective(ours, w) <= best + 1e-12);
        }
    }

    /// The elimination identity: `H(v) = min_η α|η| + (γ/2)(η - v)^2`, with
    /// the minimizer given by shrinkage.
    #[test]
    fn huber_equals_shrink_eliminated_objective() {
        let p = HuberParams {
            alpha: 0.8,
            gamma: 2.6,
        };
        let mut state = 33u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 52) as f64 - 1.0
        };
        for _ in 0..1000 {
            let v = 3.0 * next();
            let eta = shrink(&[v], p.threshold())[0];
            let eliminated = p.alpha * eta.abs() + 0.5 * p.gamma * (eta - v) * (eta - v);
            assert!(
                (huber(v, p) - eliminated).abs() < 1e-10,
                "v={v}: huber {} vs eliminated {eliminated}",
                huber(v, p)
            );
        }
    }

    fn weighted_segment(weights: Vec<f64>) -> PolygonalGraph {
        let n = weights.len();
        let chain: Vec<Vec3> = (0..=n)
            .map(|i| [i as f64 / n as f64, 0.0, 0.0])
            .collect();
        PolygonalGraph::from_vertices(vec![chain], weights, 2).unwrap()
    }

    #[test]
    fn binary_weights_give_zero_penalty() {
        let g = weighted_segment(vec![0.0, 1.0, 1.0, 0.0, 1.0]);
        let p = zero_one_penalty(&g, &PenaltyConfig::default()).unwrap();
        assert_eq!(p.value, 0.0);
    }

    #[test]
    fn half_weight_unit_edge_penalty() {
        let g = PolygonalGraph::from_vertices(
            vec![vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]],
            vec![0.5],
            2,
        )
        .unwrap();
        let p = zero_one_penalty(&g, &PenaltyConfig::default()).unwrap();
        assert!((p.value - 0.5).abs() < 1e-15); // 8 (0.25)^2 · 1
    }

    #[test]
    fn penalty_is_nonnegative_and_zero_only_at_binary() {
        let cfg = PenaltyConfig::default();
        for rho in [-1.0, -0.2, 0.0, 0.3, 0.5, 1.0, 1.2, 2.0] {
            let (v, _) = clipped_well(rho, cfg.epsilon);
            assert!(v >= 0.0);
            if rho == 0.0 || rho == 1.0 {
                assert_eq!(v, 0.0);
            } else {
                assert!(v > 0.0, "rho={rho}");
            }
        }
    }

    #[test]
    fn clipped_well_is_c1_at_clip_points() {
        let eps = 0.5f64;
        for anchor in [1.0 + eps, -eps] {
            let h = 1e-9;
            let (v_in, s_in) = clipped_well(anchor - h * anchor.signum(), eps);
            let (v_out, s_out) = clipped_well(anchor + h * anchor.signum(), eps);
            assert!((v_in - v_out).abs() < 1e-7, "value jump at {anchor}");
            assert!((s_in - s_out).abs() < 1e-6, "slope jump at {anchor}");
        }
        // Outside the clip the growth is linear, not quartic.
        let (v5, s5) = clipped_well(5.0, eps);
        let (v6, _) = clipped_well(6.0, eps);
        assert!((v6 - v5 - s5).abs() < 1e-12);
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let chain = vec![
            [0.0, 0.0, 0.0],
            [0.3, 0.4, 0.0],
            [0.7, 0.2, 0.1],
            [1.1, -0.1, 0.0],
        ];
        let weights = vec![0.3, 1.4, -0.7]; // spans quartic and both clips
        let g = PolygonalGraph::from_vertices(vec![chain], weights, 3).unwrap();
        let cfg = PenaltyConfig {
            beta: 1.0,
            epsilon: 0.5,
        };
        let grad = zero_one_penalty(&g, &cfg).unwrap();
        let step = 1e-6;
        for vi in 0..g.vertices[0].len() {
            for d in 0..3 {
                let bump = |delta: f64| {
                    let mut chains = g.vertices.clone();
                    chains[0][vi][d] += delta;
                    let p = PolygonalGraph::from_vertices(chains, g.weights.clone(), 3).unwrap();
                    zero_one_penalty(&p, &cfg).unwrap().value
                };
                let fd = (bump(step) - bump(-step)) / (2.0 * step);
                let an = grad.vertex[0][vi][d];
                assert!(
                    (fd - an).abs() <= 1e-5 * (1.0 + fd.abs()),
                    "vertex ({vi},{d}): {an} vs {fd}"
                );
            }
        }
        for ei in 0..g.num_edges() {
            let bump = |delta: f64| {
                let mut weights = g.weights.clone();
                weights[ei] += delta;
                let p = PolygonalGraph::from_vertices(g.vertices.clone(), weights, 3).unwrap();
                zero_one_penalty(&p, &cfg).unwrap().value
            };
            let fd = (bump(step) - bump(-step)) / (2.0 * step);
            let an = grad.weight[ei];
            assert!(
                (fd - an).abs() <= 1e-5 * (1.0 + fd.abs()),
                "weight {ei}: {an} vs {fd}"
            );
        }
    }
}
