//! The smoothed matching energy in the joint variable `z`.
//!
//! For a smoothing strength `γ` the objective is
//!
//! `E_γ(z) = E_path(c) + λ ‖μ_S - μ_T‖² + β P_{01}(S) + Σ_i H_{α,γ}((D δρ)_i)`
//!
//! where `S` is the transformed source: the path's end slice resampled at the
//! uniform parameters with weights `ρ_0 + δρ`. The gradient is assembled from
//! the module gradients: metric → control points, varifold and penalty →
//! (end-slice controls via the resampling chain rule, `δρ`), Huber∘D → `δρ`.

use ndarray::{Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::PolygonalGraph;
use crate::metric::{self, MetricConfig};
use crate::regularizer::{
    huber, huber_grad, tv_norm, DifferenceOperator, HuberParams, PenaltyConfig,
};
use crate::spline::{basis_eval, DofMap, PathSpline, QuadratureRule};
use crate::varifold::{self, KernelConfig};

/// Per-term values of the smoothed energy at some `z`.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct SmoothedBreakdown {
    pub path_energy: f64,
    /// `λ ‖μ_S - μ_T‖²`.
    pub varifold: f64,
    /// `β P_{01}(S)`.
    pub zero_one: f64,
    /// `Σ H_{α,γ}((D δρ)_i)`.
    pub huber: f64,
}

impl SmoothedBreakdown {
    pub fn total(&self) -> f64 {
        self.path_energy + self.varifold + self.zero_one + self.huber
    }
}

/// A fully discretized matching problem, ready for the smooth solver.
#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    pub path: PathSpline,
    pub dofs: DofMap,
    pub quad: QuadratureRule,
    pub metric: MetricConfig,
    pub kernel: KernelConfig,
    /// Varifold balancing weight `λ`.
    pub lambda: f64,
    /// TV weight `α` (enters through the Huber terms).
    pub alpha: f64,
    pub penalty: PenaltyConfig,
    /// Uniform resample counts `N_k` of the transformed source.
    pub resample_counts: Vec<usize>,
    /// Source weights on the resampled edges.
    pub rho0: Vec<f64>,
    pub target: PolygonalGraph,
    pub diff: DifferenceOperator,
    /// When set, `δρ` is frozen at zero and `z` holds only control points.
    pub fixed_weights: bool,
    end_bt: Array2<f64>,
    end_ctheta: Vec<Array2<f64>>,
}

impl DiscreteProblem {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        path: PathSpline,
        quad: QuadratureRule,
        metric: MetricConfig,
        kernel: KernelConfig,
        lambda: f64,
        alpha: f64,
        penalty: PenaltyConfig,
        resample_counts: Vec<usize>,
        rho0: Vec<f64>,
        target: PolygonalGraph,
        fixed_weights: bool,
    ) -> Result<Self> {
        metric.validate()?;
        kernel.validate()?;
        penalty.validate()?;
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "varifold weight lambda must be positive, got {lambda}"
            )));
        }
        if alpha < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "TV weight alpha must be nonnegative, got {alpha}"
            )));
        }
        if resample_counts.len() != path.num_components() {
            return Err(Error::ShapeMismatch {
                context: "resample counts",
                expected: path.num_components().to_string(),
                got: resample_counts.len().to_string(),
            });
        }
        let total_edges: usize = resample_counts.iter().sum();
        if rho0.len() != total_edges {
            return Err(Error::ShapeMismatch {
                context: "source weights",
                expected: total_edges.to_string(),
                got: rho0.len().to_string(),
            });
        }
        let end_bt = basis_eval(&path.knots_t, &[1.0], 0)?;
        let end_ctheta = resample_counts
            .iter()
            .map(|&n| {
                let thetas: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
                basis_eval(&path.knots_theta, &thetas, 0)
            })
            .collect::<Result<Vec<_>>>()?;
        let diff = DifferenceOperator::new(resample_counts.clone());
        let dofs = DofMap::build(&path);
        Ok(DiscreteProblem {
            path,
            dofs,
            quad,
            metric,
            kernel,
            lambda,
            alpha,
            penalty,
            resample_counts,
            rho0,
            target,
            diff,
            fixed_weights,
            end_bt,
            end_ctheta,
        })
    }

    pub fn num_edges(&self) -> usize {
        self.rho0.len()
    }

    /// Dimension of the joint variable.
    pub fn dim(&self) -> usize {
        self.dofs.len() + if self.fixed_weights { 0 } else { self.num_edges() }
    }

    /// Starting point: the stored path's free controls and `δρ = 0`.
    pub fn initial_z(&self) -> Vec<f64> {
        let mut z = self.dofs.pack(&self.path);
        if !self.fixed_weights {
            z.extend(std::iter::repeat_n(0.0, self.num_edges()));
        }
        z
    }

    fn split_z<'a>(&self, z: &'a [f64]) -> Result<(&'a [f64], &'a [f64])> {
        if z.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                context: "joint variable",
                expected: self.dim().to_string(),
                got: z.len().to_string(),
            });
        }
        Ok(z.split_at(self.dofs.len()))
    }

    /// Reconstruct the path at `z`.
    pub fn path_at(&self, z: &[f64]) -> Result<PathSpline> {
        let (controls, _) = self.split_z(z)?;
        let mut path = self.path.clone();
        self.dofs.unpack(&mut path, controls)?;
        Ok(path)
    }

    /// Weight change at `z` (zeros under fixed weights).
    pub fn delta_rho_at(&self, z: &[f64]) -> Result<Vec<f64>> {
        let (_, dr) = self.split_z(z)?;
        if self.fixed_weights {
            Ok(vec![0.0; self.num_edges()])
        } else {
            Ok(dr.to_vec())
        }
    }

    /// The transformed source: end slice of `path` sampled at `i / N_k`, with
    /// weights `ρ_0 + δρ`.
    pub fn end_slice_graph(
        &self,
        path: &PathSpline,
        delta_rho: &[f64],
    ) -> Result<PolygonalGraph> {
        let mut chains = Vec::with_capacity(path.num_components());
        for k in 0..path.num_components() {
            let vals = path.eval_component(k, &self.end_bt, &self.end_ctheta[k]);
            let chain: Vec<[f64; 3]> = (0..self.end_ctheta[k].nrows())
                .map(|s| [vals[[0, s, 0]], vals[[0, s, 1]], vals[[0, s, 2]]])
                .collect();
            chains.push(chain);
        }
        let weights: Vec<f64> = self
            .rho0
            .iter()
            .zip(delta_rho)
            .map(|(r0, dr)| r0 + dr)
            .collect();
        PolygonalGraph::from_vertices(chains, weights, path.dim)
    }

    /// Value, gradient and term breakdown of the smoothed energy at `z`.
    pub fn eval(&self, z: &[f64], gamma: f64) -> Result<(f64, Vec<f64>, SmoothedBreakdown)> {
        if !gamma.is_finite() || gamma <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "smoothing gamma must be positive, got {gamma}"
            )));
        }
        let (_, dr_slice) = self.split_z(z)?;
        let path = self.path_at(z)?;
        let delta_rho = self.delta_rho_at(z)?;

        let (path_energy, mut control_grads) =
            metric::path_energy_gradient(&path, &self.metric, &self.quad)?;

        let graph = self.end_slice_graph(&path, &delta_rho)?;
        let (d2, var_grad) = varifold::gradient(&graph, &self.target, &self.kernel)?;
        let penalty = crate::regularizer::zero_one_penalty(&graph, &self.penalty)?;

        let hp = HuberParams {
            alpha: self.alpha,
            gamma,
        };
        hp.validate()?;
        let differences = self.diff.apply(&delta_rho)?;
        let huber_sum: f64 = differences.iter().map(|&v| huber(v, hp)).sum();

        let breakdown = SmoothedBreakdown {
            path_energy,
            varifold: self.lambda * d2,
            zero_one: self.penalty.beta * penalty.value,
            huber: huber_sum,
        };
        let value = breakdown.total();
        if !value.is_finite() {
            let term = if !path_energy.is_finite() {
                "path energy"
            } else if !d2.is_finite() {
                "varifold distance"
            } else if !penalty.value.is_finite() {
                "zero-one penalty"
            } else {
                "huber term"
            };
            return Err(Error::NonFiniteEnergy { term });
        }

        // End-slice chain rule: vertex cotangents -> control gradients.
        for k in 0..path.num_components() {
            let rows = self.end_ctheta[k].nrows();
            let mut cot = Array3::zeros((1, rows, 3));
            for s in 0..rows {
                for d in 0..3 {
                    cot[[0, s, d]] = self.lambda * var_grad.vertex[k][s][d]
                        + self.penalty.beta * penalty.vertex[k][s][d];
                }
            }
            let g = path.backprop_component(k, &self.end_bt, &self.end_ctheta[k], &cot);
            control_grads[k] += &g;
        }

        let mut grad = self.dofs.pack_grad(&path, &control_grads);
        if !self.fixed_weights {
            let huber_slopes: Vec<f64> = differences.iter().map(|&v| huber_grad(v, hp)).collect();
            let tv_part = self.diff.apply_adjoint(&huber_slopes)?;
            grad.reserve(dr_slice.len());
            for i in 0..self.num_edges() {
                grad.push(
                    self.lambda * var_grad.weight[i]
                        + self.penalty.beta * penalty.weight[i]
                        + tv_part[i],
                );
            }
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFiniteEnergy { term: "gradient" });
        }
        Ok((value, grad, breakdown))
    }

    /// Term breakdown with the exact `α ‖D δρ‖_1` in place of the Huber sum.
    pub fn exact_breakdown(&self, z: &[f64]) -> Result<SmoothedBreakdown> {
        let path = self.path_at(z)?;
        let delta_rho = self.delta_rho_at(z)?;
        let path_energy = metric::path_energy(&path, &self.metric, &self.quad)?;
        let graph = self.end_slice_graph(&path, &delta_rho)?;
        let d2 = varifold::squared_distance(&graph, &self.target, &self.kernel)?;
        let penalty = crate::regularizer::zero_one_penalty(&graph, &self.penalty)?;
        let tv = tv_norm(&delta_rho, &self.diff)?;
        Ok(SmoothedBreakdown {
            path_energy,
            varifold: self.lambda * d2,
            zero_one: self.penalty.beta * penalty.value,
            huber: self.alpha * tv,
        })
    }
}
