//! End-to-end weighted shape-graph matching.
//!
//! [`match_graphs`] assembles the full problem from two validated shape
//! graphs: both are jointly scaled to unit diameter, the source is fitted
//! with a spline path (constant in time), the target is resampled once, and
//! the smoothed energy is minimized by the continuation solver. The reported
//! geodesic distance is the square root of the Riemannian path-energy term
//! alone; the relaxation terms are diagnostics, not distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom;
use crate::graph::{self, PolygonalGraph, ShapeGraphSpec};
use crate::metric::MetricConfig;
use crate::optim::{
    sfista_minimize, DiscreteProblem, LbfgsConfig, SfistaSchedule, SmoothedBreakdown, StageTrace,
};
use crate::regularizer::PenaltyConfig;
use crate::spline::{basis_eval, fit_constant_path, PathSpline, QuadratureRule};
use crate::varifold::KernelConfig;

/// Spline discretization sizes for the path of shape graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplineConfig {
    /// Polynomial degree in time (`n_t`).
    pub degree_t: usize,
    /// Polynomial degree in space (`n_theta`).
    pub degree_theta: usize,
    /// Control points per component in time (`N_t`).
    pub controls_t: usize,
    /// Control points per component in space (`N_theta`).
    pub controls_theta: usize,
    /// Gauss-Legendre nodes per knot span in time.
    pub quad_t: usize,
    /// Gauss-Legendre nodes per knot span in space.
    pub quad_theta: usize,
}

impl Default for SplineConfig {
    fn default() -> Self {
        SplineConfig {
            degree_t: 1,
            degree_theta: 2,
            controls_t: 10,
            controls_theta: 100,
            quad_t: 2,
            quad_theta: 3,
        }
    }
}

/// A complete matching problem between two weighted shape graphs.
#[derive(Debug, Clone)]
pub struct MatchProblem {
    pub source: ShapeGraphSpec,
    pub target: ShapeGraphSpec,
    pub metric: MetricConfig,
    pub kernel: KernelConfig,
    /// Varifold balancing weight `λ > 0`.
    pub lambda: f64,
    /// TV weight `α >= 0`.
    pub alpha: f64,
    /// {0,1}-penalty weight and clipping margin.
    pub penalty: PenaltyConfig,
    pub schedule: SfistaSchedule,
    pub lbfgs: LbfgsConfig,
    pub spline: SplineConfig,
    /// Edges per component in the matching-time discretization. A single
    /// entry is broadcast to every component of the respective graph.
    pub resample_count: usize,
    /// Jointly rescale source and target to unit diameter before matching.
    pub normalize: bool,
    /// Gluing tolerance; derived from the graph diameter when absent.
    pub junction_tolerance: Option<f64>,
}

impl MatchProblem {
    /// A problem with default parameters for the given pair.
    pub fn new(source: ShapeGraphSpec, target: ShapeGraphSpec) -> Self {
        MatchProblem {
            source,
            target,
            metric: MetricConfig::default(),
            kernel: KernelConfig::default(),
            lambda: 10.0,
            alpha: 1.0,
            penalty: PenaltyConfig::default(),
            schedule: SfistaSchedule::default(),
            lbfgs: LbfgsConfig::default(),
            spline: SplineConfig::default(),
            resample_count: 100,
            normalize: true,
            junction_tolerance: None,
        }
    }

    /// The role-swapped problem: weights are estimated on (what used to be)
    /// the target. Used by the weights-on-target mode.
    pub fn swapped(mut self) -> Self {
        std::mem::swap(&mut self.source, &mut self.target);
        self
    }

    fn junction_tolerance_for(&self, spec: &ShapeGraphSpec) -> f64 {
        self.junction_tolerance
            .unwrap_or_else(|| spec.default_junction_tolerance())
    }

    /// Validate both graphs, reporting every violation.
    pub fn validate(&self) -> Result<()> {
        for (name, spec) in [("source", &self.source), ("target", &self.target)] {
            let report = graph::validate(spec, self.junction_tolerance_for(spec));
            if !report.is_valid() {
                return Err(Error::InvalidShapeGraph {
                    report: format!("{name}:\n{report}"),
                });
            }
        }
        if !self.lambda.is_finite() || self.lambda <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if self.alpha < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "alpha must be nonnegative, got {}",
                self.alpha
            )));
        }
        self.metric.validate()?;
        self.kernel.validate()?;
        self.penalty.validate()?;
        self.schedule.validate()?;
        self.lbfgs.validate()?;
        if self.resample_count == 0 {
            return Err(Error::InvalidConfig("resample count must be >= 1".into()));
        }
        if self.spline.degree_theta < self.metric.order {
            return Err(Error::InvalidConfig(format!(
                "spatial spline degree {} below metric order {}",
                self.spline.degree_theta, self.metric.order
            )));
        }
        Ok(())
    }
}

/// Result of a matching run. All geometry is in the normalized (unit
/// diameter) coordinates; multiply by `1 / normalization_scale` to recover
/// input units.
#[derive(Debug, Clone)]
pub struct MatchResult {
    pub path: PathSpline,
    pub delta_rho: Vec<f64>,
    pub rho0: Vec<f64>,
    pub resample_counts: Vec<usize>,
    /// Term breakdown at the optimum with the exact TV norm
    /// (`α ‖D δρ‖_1`) in the `huber` slot.
    pub breakdown: SmoothedBreakdown,
    /// `sqrt(path energy)`: the geodesic distance estimate.
    pub distance: f64,
    pub stages: Vec<StageTrace>,
    pub failed_stage: Option<(usize, String)>,
    /// Factor the inputs were multiplied by (1 when `normalize` was off).
    pub normalization_scale: f64,
    /// Per-component least-squares residual of the initial slice fit.
    pub fit_residuals: Vec<f64>,
    /// Per-stage joint variables, for checkpointing.
    pub stage_z: Vec<Vec<f64>>,
    pub dim: usize,
}

impl MatchResult {
    /// Evaluate the optimal path at the given times, attaching the linearly
    /// interpolated weights `ρ(t) = ρ_0 + t δρ` for display.
    pub fn geodesic_frames(&self, times: &[f64]) -> Result<Vec<PolygonalGraph>> {
        geodesic_frames(&self.path, &self.rho0, &self.delta_rho, &self.resample_counts, times)
    }
}

/// Evaluate a path spline at each time, resampled at the uniform parameters,
/// with linearly interpolated weights.
pub fn geodesic_frames(
    path: &PathSpline,
    rho0: &[f64],
    delta_rho: &[f64],
    counts: &[usize],
    times: &[f64],
) -> Result<Vec<PolygonalGraph>> {
    if let Some(&t) = times.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::ParameterOutOfRange { value: t });
    }
    let theta_bases: Vec<_> = counts
        .iter()
        .map(|&n| {
            let thetas: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
            basis_eval(&path.knots_theta, &thetas, 0)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut frames = Vec::with_capacity(times.len());
    for &t in times {
        let bt = basis_eval(&path.knots_t, &[t], 0)?;
        let mut chains = Vec::with_capacity(path.num_components());
        for k in 0..path.num_components() {
            let vals = path.eval_component(k, &bt, &theta_bases[k]);
            let chain: Vec<[f64; 3]> = (0..theta_bases[k].nrows())
                .map(|s| [vals[[0, s, 0]], vals[[0, s, 1]], vals[[0, s, 2]]])
                .collect();
            chains.push(chain);
        }
        let weights: Vec<f64> = rho0
            .iter()
            .zip(delta_rho)
            .map(|(r0, dr)| r0 + t * dr)
            .collect();
        frames.push(PolygonalGraph::from_vertices(chains, weights, path.dim)?);
    }
    Ok(frames)
}

fn joint_scale(a: &ShapeGraphSpec, b: &ShapeGraphSpec) -> Result<f64> {
    let diameter = geom::diameter(a.vertex_iter().chain(b.vertex_iter()));
    if diameter <= 0.0 {
        return Err(Error::InvalidConfig(
            "cannot normalize: all vertices coincide".into(),
        ));
    }
    Ok(1.0 / diameter)
}

fn discretize(problem: &MatchProblem, fixed_weights: bool) -> Result<(DiscreteProblem, f64, Vec<f64>)> {
    problem.validate()?;
    let scale = if problem.normalize {
        joint_scale(&problem.source, &problem.target)?
    } else {
        1.0
    };
    let source = problem.source.scaled(scale);
    let target = problem.target.scaled(scale);

    let (path, fit_residuals) = fit_constant_path(
        &source,
        problem.spline.degree_t,
        problem.spline.degree_theta,
        problem.spline.controls_t,
        problem.spline.controls_theta,
    )?;
    let quad = QuadratureRule::build(
        &path.knots_t,
        &path.knots_theta,
        problem.spline.quad_t,
        problem.spline.quad_theta,
    )?;
    let source_counts = vec![problem.resample_count; source.components.len()];
    let target_counts = vec![problem.resample_count; target.components.len()];
    let source_graph = graph::resample(&source, &source_counts)?;
    let target_graph = graph::resample(&target, &target_counts)?;

    let (alpha, penalty) = if fixed_weights {
        // Baseline model: weights frozen, regularizers inert.
        (0.0, PenaltyConfig { beta: 0.0, ..problem.penalty })
    } else {
        (problem.alpha, problem.penalty)
    };
    let discrete = DiscreteProblem::new(
        path,
        quad,
        problem.metric.clone(),
        problem.kernel,
        problem.lambda,
        alpha,
        penalty,
        source_counts,
        source_graph.weights,
        target_graph,
        fixed_weights,
    )?;
    Ok((discrete, scale, fit_residuals))
}

fn run(problem: &MatchProblem, fixed_weights: bool) -> Result<MatchResult> {
    let (discrete, scale, fit_residuals) = discretize(problem, fixed_weights)?;
    let outcome = sfista_minimize(&discrete, &problem.schedule, &problem.lbfgs)?;
    let breakdown = discrete.exact_breakdown(&outcome.z)?;
    let path = discrete.path_at(&outcome.z)?;
    let delta_rho = discrete.delta_rho_at(&outcome.z)?;
    let distance = breakdown.path_energy.max(0.0).sqrt();
    Ok(MatchResult {
        path,
        delta_rho,
        rho0: discrete.rho0.clone(),
        resample_counts: discrete.resample_counts.clone(),
        breakdown,
        distance,
        stages: outcome.stages,
        failed_stage: outcome.failed_stage,
        normalization_scale: scale,
        fit_residuals,
        stage_z: outcome.stage_z,
        dim: problem.source.dim,
    })
}

/// Jointly estimate a deformation path and weight change registering the
/// source onto the target.
pub fn match_graphs(problem: &MatchProblem) -> Result<MatchResult> {
    run(problem, false)
}

/// The baseline model with weights frozen at `ρ_0` (`α` and `β` are ignored).
pub fn fixed_weight_match(problem: &MatchProblem) -> Result<MatchResult> {
    run(problem, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::split_components;

    fn fast_problem(source: ShapeGraphSpec, target: ShapeGraphSpec) -> MatchProblem {
        let mut p = MatchProblem::new(source, target);
        p.spline.controls_t = 4;
        p.spline.controls_theta = 10;
        p.resample_count = 12;
        p.lbfgs.max_iterations = 150;
        p
    }

    fn segment_spec(shift: f64) -> ShapeGraphSpec {
        split_components(
            &[vec![[shift, 0.0, 0.0], [1.0 + shift, 0.0, 0.0]]],
            1e-9,
        )
        .unwrap()
    }

    #[test]
    fn self_match_has_tiny_distance() {
        let p = fast_problem(segment_spec(0.0), segment_spec(0.0));
        let result = match_graphs(&p).unwrap();
        assert!(result.distance < 1e-3, "distance {}", result.distance);
        let max_dr = result.delta_rho.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max_dr < 1e-3, "‖δρ‖_∞ = {max_dr}");
        assert!(result.failed_stage.is_none());
    }

    #[test]
    fn translation_distance_respects_admissible_bound() {
        let mut p = fast_problem(segment_spec(0.0), segment_spec(0.3));
        p.lambda = 2000.0;
        // Joint normalization shrinks everything by the union diameter (1.3).
        let result = match_graphs(&p).unwrap();
        let scale = result.normalization_scale;
        let v = 0.3 * scale;
        let ell = 1.0 * scale;
        let bound = (0.1 * v * v * ell).sqrt() * 1.05;
        assert!(
            result.distance <= bound,
            "distance {} vs bound {bound}",
            result.distance
        );
    }

    #[test]
    fn frames_interpolate_the_translation() {
        let mut p = fast_problem(segment_spec(0.0), segment_spec(0.3));
        p.lambda = 2000.0;
        let result = match_graphs(&p).unwrap();
        let frames = result.geodesic_frames(&[0.0, 0.5, 1.0]).unwrap();
        assert_eq!(frames.len(), 3);
        // t = 0 reproduces the fitted source slice exactly.
        let zero = &frames[0];
        let z0 = geodesic_frames(
            &result.path,
            &result.rho0,
            &vec![0.0; result.rho0.len()],
            &result.resample_counts,
            &[0.0],
        )
        .unwrap();
        for (a, b) in zero.vertices[0].iter().zip(&z0[0].vertices[0]) {
            assert_eq!(a, b);
        }
        // t = 1/2 sits halfway between endpoints, within spline tolerance.
        let s = result.normalization_scale;
        for (i, v) in frames[1].vertices[0].iter().enumerate() {
            let start = frames[0].vertices[0][i];
            let end = frames[2].vertices[0][i];
            let mid = [(start[0] + end[0]) / 2.0, (start[1] + end[1]) / 2.0, 0.0];
            assert!(
                geom::dist(*v, mid) < 0.02 * s + 1e-3,
                "frame midpoint mismatch at vertex {i}"
            );
        }
        // Weights interpolate linearly.
        for (i, w) in frames[1].weights.iter().enumerate() {
            let expect = result.rho0[i] + 0.5 * result.delta_rho[i];
            assert!((w - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn weighted_distance_not_above_fixed_weight_distance() {
        // Source with an extra branch the target lacks.
        let j = [0.5, 0.0, 0.0];
        let source = split_components(
            &[
                vec![[0.0, 0.0, 0.0], j, [1.0, 0.0, 0.0]],
                vec![j, [0.6, 0.35, 0.0]],
            ],
            1e-9,
        )
        .unwrap();
        let target = segment_spec(0.0);
        let mut p = fast_problem(source, target);
        p.lambda = 60.0;
        p.alpha = 0.2;
        p.penalty.beta = 0.4;
        let weighted = match_graphs(&p).unwrap();
        let fixed = fixed_weight_match(&p).unwrap();
        assert!(
            weighted.distance <= fixed.distance + 1e-6,
            "weighted {} vs fixed {}",
            weighted.distance,
            fixed.distance
        );
    }

    /// Large α forces per-component-constant δρ; with ρ0 = 1 and the binary
    /// well active, δρ is pinned near 0 and the two models agree.
    #[test]
    fn huge_alpha_approaches_fixed_weight_model() {
        let source = segment_spec(0.0);
        let target = segment_spec(0.15);
        let mut p = fast_problem(source, target);
        p.lambda = 500.0;
        p.alpha = 1e3;
        p.penalty.beta = 1.0;
        let weighted = match_graphs(&p).unwrap();
        let fixed = fixed_weight_match(&p).unwrap();
        let ew = weighted.breakdown.path_energy;
        let ef = fixed.breakdown.path_energy;
        assert!(
            (ew - ef).abs() <= 0.05 * ef.abs().max(1e-9),
            "weighted path energy {ew} vs fixed {ef}"
        );
    }

    /// The reported breakdown (with the exact TV norm) sums to the final
    /// smoothed stage energy within the Huber-vs-TV gap bound, and every term
    /// is nonnegative.
    #[test]
    fn breakdown_sums_to_smoothed_energy_within_gap_bound() {
        let j = [0.5, 0.0, 0.0];
        let source = split_components(
            &[
                vec![[0.0, 0.0, 0.0], j, [1.0, 0.0, 0.0]],
                vec![j, [0.6, 0.35, 0.0]],
            ],
            1e-9,
        )
        .unwrap();
        let mut p = fast_problem(source, segment_spec(0.05));
        p.lambda = 60.0;
        p.alpha = 0.2;
        p.penalty.beta = 0.4;
        let r = match_graphs(&p).unwrap();
        let b = &r.breakdown;
        for (name, term) in [
            ("path", b.path_energy),
            ("varifold", b.varifold),
            ("zero-one", b.zero_one),
            ("tv", b.huber),
        ] {
            assert!(term >= 0.0, "{name} term negative: {term}");
        }
        assert!(r.distance >= 0.0);
        let last = r.stages.last().unwrap();
        let n_minus_k = (2 * p.resample_count - 2) as f64;
        let gap_bound = n_minus_k * p.alpha * p.alpha / (2.0 * last.gamma);
        let sum = b.path_energy + b.varifold + b.zero_one + b.huber;
        let diff = sum - last.energy;
        assert!(
            (-1e-10..=gap_bound + 1e-10).contains(&diff),
            "breakdown sum {sum} vs stage energy {} (gap bound {gap_bound})",
            last.energy
        );
    }

    #[test]
    fn invalid_adjacency_is_rejected_before_solving() {
        let mut spec = segment_spec(0.0);
        spec.adjacency.set(0, 1, true); // claims closure of an open segment
        let p = fast_problem(spec, segment_spec(0.0));
        match match_graphs(&p) {
            Err(Error::InvalidShapeGraph { report }) => {
                assert!(report.contains("source"));
            }
            other => panic!("expected validation failure, got {other:?}"),
        }
    }

    /// The t = 1 frame is the transformed source: same vertices as the
    /// end-slice discretization, with weights `ρ0 + δρ`.
    #[test]
    fn final_frame_is_the_transformed_source() {
        let mut p = fast_problem(segment_spec(0.0), segment_spec(0.2));
        p.lambda = 300.0;
        let r = match_graphs(&p).unwrap();
        let frames = r.geodesic_frames(&[1.0]).unwrap();
        for (i, w) in frames[0].weights.iter().enumerate() {
            assert_eq!(*w, r.rho0[i] + r.delta_rho[i]);
        }
        // End chain sits near the (normalized) target.
        let s = r.normalization_scale;
        let first = frames[0].vertices[0][0];
        assert!((first[0] - 0.2 * s).abs() < 0.05 * s, "end start {first:?}");
    }

    /// Default-size discretization (as in the stock configuration) runs a
    /// self-match cleanly at production scale.
    #[test]
    fn default_sizes_self_match_smoke() {
        let curve: Vec<[f64; 3]> = (0..=300)
            .map(|i| {
                let t = i as f64 / 300.0;
                [t, 0.25 * (std::f64::consts::PI * t).sin(), 0.0]
            })
            .collect();
        let spec = split_components(&[curve], 1e-9).unwrap();
        let mut p = MatchProblem::new(spec.clone(), spec);
        p.schedule.stages = 3;
        p.lbfgs.max_iterations = 80;
        assert_eq!(p.spline.controls_theta, 100);
        assert_eq!(p.spline.controls_t, 10);
        assert_eq!(p.resample_count, 100);
        let r = match_graphs(&p).unwrap();
        assert!(r.failed_stage.is_none());
        assert!(r.distance < 1e-3, "distance {}", r.distance);
    }

    /// Mass creation needs no special code path: a phantom source branch
    /// with zero initial weight is grown by the data term when the target
    /// carries the branch.
    #[test]
    fn phantom_branch_gains_mass() {
        let j = [0.5, 0.0, 0.0];
        let mut left: Vec<[f64; 3]> = (0..=80)
            .map(|i| [0.5 * i as f64 / 80.0, 0.0, 0.0])
            .collect();
        *left.last_mut().unwrap() = j;
        let mut right: Vec<[f64; 3]> = (0..=80)
            .map(|i| [0.5 + 0.5 * i as f64 / 80.0, 0.0, 0.0])
            .collect();
        right[0] = j;
        let mut branch: Vec<[f64; 3]> = (0..=60)
            .map(|i| {
                let t = i as f64 / 60.0;
                [0.5 + 0.2 * t, 0.3 * t, 0.0]
            })
            .collect();
        branch[0] = j;
        let soup = vec![left, right, branch];
        let mut source = split_components(&soup, 1e-9).unwrap();
        for w in source.weights.per_component[2].iter_mut() {
            *w = 0.0; // phantom
        }
        let target = split_components(&soup, 1e-9).unwrap();
        let mut p = MatchProblem::new(source, target);
        p.lambda = 40.0;
        p.alpha = 0.1;
        p.penalty.beta = 0.5;
        p.spline.controls_t = 5;
        p.spline.controls_theta = 14;
        p.resample_count = 16;
        p.lbfgs.max_iterations = 250;
        let r = match_graphs(&p).unwrap();
        let n = p.resample_count;
        let phantom_mean = (2 * n..3 * n)
            .map(|i| r.rho0[i] + r.delta_rho[i])
            .sum::<f64>()
            / n as f64;
        assert!(phantom_mean > 0.9, "phantom branch mean weight {phantom_mean}");
        assert!(r.distance < 1e-2, "distance {}", r.distance);
    }

    #[test]
    fn swapped_problem_moves_weights_to_target_side() {
        let p = fast_problem(segment_spec(0.0), segment_spec(0.1)).swapped();
        // After the swap the (old) target is the deforming, weighted side.
        assert_eq!(p.source.components[0].vertices[0][0], 0.1);
    }
}
