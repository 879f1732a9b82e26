//! Continuation over the Huber smoothing strength with warm starts.
//!
//! Each stage minimizes the smoothed energy at a fixed `γ_j = γ_0 κ^j`
//! starting from the previous stage's optimum (stage 0 starts from the
//! constant path and `δρ = 0`). As `γ` grows the Huber terms converge to the
//! exact TV norm; the per-stage constraint residual
//! `‖shrink(Dδρ, α/γ) - Dδρ‖_2` measures how far the eliminated auxiliary
//! variable still is from its target.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::regularizer::shrink;

use super::energy::{DiscreteProblem, SmoothedBreakdown};
use super::lbfgs::{lbfgs_minimize, IterationRecord, LbfgsConfig, Termination};

/// Geometric smoothing schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SfistaSchedule {
    /// Initial smoothing strength `γ_0`.
    pub gamma0: f64,
    /// Per-stage growth factor `κ > 1`.
    pub growth: f64,
    /// Number of stages `J`.
    pub stages: usize,
}

impl Default for SfistaSchedule {
    fn default() -> Self {
        SfistaSchedule {
            gamma0: 1.0,
            growth: 5.0,
            stages: 6,
        }
    }
}

impl SfistaSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0.is_finite() && self.gamma0 > 0.0)
            || !(self.growth.is_finite() && self.growth > 1.0)
            || self.stages == 0
        {
            return Err(crate::error::Error::InvalidConfig(format!(
                "continuation schedule needs gamma0 > 0, growth > 1, stages >= 1; \
                 got gamma0={}, growth={}, stages={}",
                self.gamma0, self.growth, self.stages
            )));
        }
        Ok(())
    }

    pub fn gamma(&self, stage: usize) -> f64 {
        self.gamma0 * self.growth.powi(stage as i32)
    }
}

/// Diagnostics of one continuation stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageTrace {
    pub gamma: f64,
    pub energy: f64,
    pub breakdown: SmoothedBreakdown,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// `‖shrink(Dδρ, α/γ) - Dδρ‖_2` at the stage optimum.
    pub constraint_residual: f64,
    pub records: Vec<IterationRecord>,
}

#[derive(Debug, Clone)]
pub struct SfistaOutcome {
    /// Final joint variable (from the last completed stage).
    pub z: Vec<f64>,
    pub stages: Vec<StageTrace>,
    /// Joint variable at the end of each completed stage (checkpoints).
    pub stage_z: Vec<Vec<f64>>,
    /// Set when a stage after the first failed; earlier stages stand.
    pub failed_stage: Option<(usize, String)>,
}

/// Run the continuation loop on a discretized problem.
pub fn sfista_minimize(
    problem: &DiscreteProblem,
    schedule: &SfistaSchedule,
    lbfgs: &LbfgsConfig,
) -> Result<SfistaOutcome> {
    schedule.validate()?;
    lbfgs.validate()?;
    let mut z = problem.initial_z();
    let mut stages = Vec::with_capacity(schedule.stages);
    let mut stage_z = Vec::with_capacity(schedule.stages);
    let mut failed_stage = None;
    for stage in 0..schedule.stages {
        let gamma = schedule.gamma(stage);
        let outcome = {
            let objective = |zz: &[f64]| -> Result<(f64, Vec<f64>)> {
                let (value, grad, _) = problem.eval(zz, gamma)?;
                Ok((value, grad))
            };
            match lbfgs_minimize(objective, &z, lbfgs) {
                Ok(o) => o,
                Err(e) => {
                    if stage == 0 {
                        return Err(e);
                    }
                    log::warn!("continuation stage {stage} failed: {e}");
                    failed_stage = Some((stage, e.to_string()));
                    break;
                }
            }
        };
        let (_, _, breakdown) = problem.eval(&outcome.z, gamma)?;
        let delta_rho = problem.delta_rho_at(&outcome.z)?;
        let differences = problem.diff.apply(&delta_rho)?;
        let eta = shrink(&differences, problem.alpha / gamma);
        let constraint_residual = eta
            .iter()
            .zip(&differences)
            .map(|(e, d)| (e - d) * (e - d))
            .sum::<f64>()
            .sqrt();
        z = outcome.z.clone();
        stage_z.push(outcome.z.clone());
        stages.push(StageTrace {
            gamma,
            energy: outcome.energy,
            breakdown,
            iterations: outcome.iterations.len(),
            evaluations: outcome.evaluations,
            termination: outcome.termination,
            constraint_residual,
            records: outcome.iterations,
        });
    }
    Ok(SfistaOutcome {
        z,
        stages,
        stage_z,
        failed_stage,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{resample, split_components};
    use crate::metric::MetricConfig;
    use crate::regularizer::PenaltyConfig;
    use crate::spline::{fit_constant_path, QuadratureRule};
    use crate::varifold::KernelConfig;

    fn line_problem(offset: f64, lambda: f64, fixed: bool) -> DiscreteProblem {
        let source =
            split_components(&[vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]]], 1e-9).unwrap();
        let target =
            split_components(&[vec![[offset, 0.0, 0.0], [1.0 + offset, 0.0, 0.0]]], 1e-9)
                .unwrap();
        let (path, _) = fit_constant_path(&source, 1, 2, 4, 8).unwrap();
        let quad = QuadratureRule::build(&path.knots_t, &path.knots_theta, 2, 3).unwrap();
        let counts = vec![10usize];
        let target_graph = resample(&target, &counts).unwrap();
        let source_graph = resample(&source, &counts).unwrap();
        DiscreteProblem::new(
            path,
            quad,
            MetricConfig::default(),
            KernelConfig::default(),
            lambda,
            0.1,
            PenaltyConfig {
                beta: 0.1,
                epsilon: 0.5,
            },
            counts,
            source_graph.weights,
            target_graph,
            fixed,
        )
        .unwrap()
    }

    #[test]
    fn self_match_stays_at_zero() {
        let p = line_problem(0.0, 100.0, false);
        let out = sfista_minimize(&p, &SfistaSchedule::default(), &LbfgsConfig::default())
            .unwrap();
        assert!(out.failed_stage.is_none());
        assert_eq!(out.stages.len(), 6);
        let last = out.stages.last().unwrap();
        assert!(last.energy < 1e-6, "energy {}", last.energy);
        let dr = p.delta_rho_at(&out.z).unwrap();
        let max = dr.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 1e-3, "‖δρ‖_∞ = {max}");
    }

    #[test]
    fn translation_match_recovers_admissible_energy() {
        let p = line_problem(0.3, 1000.0, false);
        let schedule = SfistaSchedule::default();
        let out = sfista_minimize(&p, &schedule, &LbfgsConfig::default()).unwrap();
        let last = out.stages.last().unwrap();
        // The straight translation path is admissible with path energy
        // a0 |v|^2 ℓ = 0.1 · 0.09 = 9e-3; the solver may not exceed it much.
        assert!(
            last.breakdown.path_energy <= 9e-3 * 1.1,
            "path energy {}",
            last.breakdown.path_energy
        );
        // Weights should stay near 1: the target carries the same mass.
        let dr = p.delta_rho_at(&out.z).unwrap();
        let max = dr.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max < 0.2, "‖δρ‖_∞ = {max}");
    }

    #[test]
    fn stage_energies_do_not_increase_within_stage() {
        let p = line_problem(0.2, 50.0, false);
        let out = sfista_minimize(&p, &SfistaSchedule::default(), &LbfgsConfig::default())
            .unwrap();
        for stage in &out.stages {
            for w in stage.records.windows(2) {
                assert!(
                    w[1].energy <= w[0].energy + 1e-13,
                    "gamma {}: {} -> {}",
                    stage.gamma,
                    w[0].energy,
                    w[1].energy
                );
            }
        }
    }

    #[test]
    fn huber_gap_respects_theoretical_bound() {
        let p = line_problem(0.25, 50.0, false);
        let out = sfista_minimize(&p, &SfistaSchedule::default(), &LbfgsConfig::default())
            .unwrap();
        let n_minus_k = p.diff.output_len() as f64;
        // Each residual coordinate is capped at the shrink threshold, so
        // ‖shrink(Dδρ) - Dδρ‖_2 <= sqrt(N - K) α / γ.
        for stage in &out.stages {
            let cap = n_minus_k.sqrt() * p.alpha / stage.gamma;
            assert!(
                stage.constraint_residual <= cap + 1e-12,
                "gamma {}: residual {} above cap {cap}",
                stage.gamma,
                stage.constraint_residual
            );
        }
        for stage in &out.stages {
            let exact = p.exact_breakdown(&out.z).unwrap();
            let _ = exact;
            let bound = n_minus_k * p.alpha * p.alpha / (2.0 * stage.gamma);
            // Recompute the gap at this stage's gamma from the stored z of the
            // final stage is not meaningful; instead check the recorded
            // breakdown against the exact TV at the same point.
            let z = &out.z;
            let (_, _, b) = p.eval(z, stage.gamma).unwrap();
            let tv = p.exact_breakdown(z).unwrap().huber;
            let gap = tv - b.huber;
            assert!(
                (-1e-12..=bound + 1e-12).contains(&gap),
                "gamma {}: gap {gap} outside [0, {bound}]",
                stage.gamma
            );
        }
    }

    #[test]
    fn fixed_weight_variant_runs() {
        let p = line_problem(0.2, 50.0, true);
        let out =
            sfista_minimize(&p, &SfistaSchedule { stages: 2, ..Default::default() },
                &LbfgsConfig::default())
            .unwrap();
        assert_eq!(out.z.len(), p.dofs.len());
        assert!(out.stages.last().unwrap().breakdown.huber == 0.0);
    }
}
