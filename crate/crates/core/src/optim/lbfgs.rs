//! Limited-memory BFGS with a strong Wolfe line search.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Solver parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LbfgsConfig {
    /// Number of curvature pairs kept for the two-loop recursion.
    pub memory: usize,
    /// Terminate when the Euclidean gradient norm drops below this.
    pub grad_tol: f64,
    /// Terminate when the relative energy decrease drops below this.
    pub energy_tol: f64,
    pub max_iterations: usize,
    /// Sufficient-decrease constant, `0 < c1 < c2 < 1`.
    pub wolfe_c1: f64,
    /// Curvature constant.
    pub wolfe_c2: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            memory: 20,
            grad_tol: 1e-7,
            energy_tol: 1e-11,
            max_iterations: 300,
            wolfe_c1: 1e-4,
            wolfe_c2: 0.9,
            max_line_search: 25,
        }
    }
}

impl LbfgsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.memory == 0 {
            return Err(Error::InvalidConfig("L-BFGS memory must be >= 1".into()));
        }
        if !(0.0 < self.wolfe_c1 && self.wolfe_c1 < self.wolfe_c2 && self.wolfe_c2 < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "Wolfe constants must satisfy 0 < c1 < c2 < 1, got c1={}, c2={}",
                self.wolfe_c1, self.wolfe_c2
            )));
        }
        Ok(())
    }
}

/// Why the solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// The start point already satisfied the gradient tolerance.
    StationaryStart,
    GradientTolerance,
    EnergyTolerance,
    MaxIterations,
    /// No acceptable step found; the best iterate so far is returned.
    LineSearchFailed,
}

/// One accepted iteration.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IterationRecord {
    pub energy: f64,
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub z: Vec<f64>,
    pub energy: f64,
    pub gradient: Vec<f64>,
    pub iterations: Vec<IterationRecord>,
    pub termination: Termination,
    pub evaluations: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cubic minimizer of a 1-D function from two (position, value, slope)
/// samples, clamped to `bounds`; bisects when the data is degenerate.
fn cubic_interpolate(
    x1: f64,
    f1: f64,
    g1: f64,
    x2: f64,
    f2: f64,
    g2: f64,
    bounds: (f64, f64),
) -> f64 {
    let (lo, hi) = bounds;
    if !(f1.is_finite() && f2.is_finite() && g1.is_finite() && g2.is_finite()) {
        return 0.5 * (lo + hi);
    }
    let d1 = g1 + g2 - 3.0 * (f1 - f2) / (x1 - x2);
    let d2_sq = d1 * d1 - g1 * g2;
    if d2_sq >= 0.0 {
        let d2 = d2_sq.sqrt();
        let min_pos = if x1 <= x2 {
            x2 - (x2 - x1) * ((g2 + d2 - d1) / (g2 - g1 + 2.0 * d2))
        } else {
            x1 - (x1 - x2) * ((g1 + d2 - d1) / (g1 - g2 + 2.0 * d2))
        };
        if min_pos.is_finite() {
            min_pos.clamp(lo, hi)
        } else {
            0.5 * (lo + hi)
        }
    } else {
        0.5 * (lo + hi)
    }
}

struct LinePoint {
    step: f64,
    f: f64,
    grad: Vec<f64>,
    gtd: f64,
}

/// Strong Wolfe line search (bracket then zoom). Trial evaluations that fail
/// or come back non-finite are treated as `+inf`, which steers the bracket
/// back toward the current iterate instead of aborting.
#[allow(clippy::too_many_arguments)]
fn strong_wolfe<F>(
    eval: &mut F,
    z: &[f64],
    direction: &[f64],
    f0: f64,
    grad0: &[f64],
    gtd0: f64,
    t_init: f64,
    cfg: &LbfgsConfig,
    evaluations: &mut usize,
) -> Option<LinePoint>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let probe = |t: f64, evals: &mut usize, eval: &mut F| -> LinePoint {
        let trial: Vec<f64> = z.iter().zip(direction).map(|(zi, di)| zi + t * di).collect();
        *evals += 1;
        match eval(&trial) {
            Ok((f, grad)) if f.is_finite() => {
                let gtd = dot(&grad, direction);
                LinePoint { step: t, f, grad, gtd }
            }
            _ => LinePoint {
                step: t,
                f: f64::INFINITY,
                grad: vec![f64::NAN; z.len()],
                gtd: f64::INFINITY,
            },
        }
    };

    let mut t = t_init;
    let mut prev = LinePoint {
        step: 0.0,
        f: f0,
        grad: grad0.to_vec(),
        gtd: gtd0,
    };
    let mut bracket: Option<(LinePoint, LinePoint)> = None;
    let mut done: Option<LinePoint> = None;
    for ls_iter in 0..cfg.max_line_search {
        let cur = probe(t, evaluations, eval);
        if cur.f > f0 + cfg.wolfe_c1 * t * gtd0 || (ls_iter > 0 && cur.f >= prev.f) {
            bracket = Some((prev, cur));
            break;
        }
        if cur.gtd.abs() <= -cfg.wolfe_c2 * gtd0 {
            done = Some(cur);
            break;
        }
        if cur.gtd >= 0.0 {
            bracket = Some((prev, cur));
            break;
        }
        // Extrapolate.
        let min_step = t + 0.01 * (t - prev.step);
        let max_step = t * 10.0;
        let next_t = cubic_interpolate(
            prev.step,
            prev.f,
            prev.gtd,
            t,
            cur.f,
            cur.gtd,
            (min_step, max_step),
        );
        prev = cur;
        t = next_t;
    }
    if let Some(p) = done {
        return Some(p);
    }
    let (mut lo, mut hi) = bracket?;
    // Order so `lo` carries the lower function value.
    if hi.f < lo.f {
        std::mem::swap(&mut lo, &mut hi);
    }
    let mut insufficient = 0;
    for _ in 0..cfg.max_line_search {
        if (hi.step - lo.step).abs() * direction.iter().fold(0.0f64, |m, d| m.max(d.abs())) < 1e-14
        {
            break;
        }
        let t = cubic_interpolate(
            lo.step,
            lo.f,
            lo.gtd,
            hi.step,
            hi.f,
            hi.gtd,
            (lo.step.min(hi.step), lo.step.max(hi.step)),
        );
        // Guard against stagnation at the bracket edge.
        let span = (hi.step - lo.step).abs();
        let margin = 0.1 * span;
        let t = if (t - lo.step).abs().min((t - hi.step).abs()) < margin {
            insufficient += 1;
            if insufficient > 1 {
                0.5 * (lo.step + hi.step)
            } else {
                t
            }
        } else {
            insufficient = 0;
            t
        };
        let cur = probe(t, evaluations, eval);
        if cur.f > f0 + cfg.wolfe_c1 * t * gtd0 || cur.f >= lo.f {
            hi = cur;
        } else {
            if cur.gtd.abs() <= -cfg.wolfe_c2 * gtd0 {
                return Some(cur);
            }
            // Narrow toward the side containing the minimizer.
            if cur.gtd * (hi.step - lo.step) >= 0.0 {
                hi = std::mem::replace(&mut lo, cur);
            } else {
                lo = cur;
            }
        }
    }
    if lo.step > 0.0 && lo.f < f0 && lo.f.is_finite() {
        // Sufficient decrease without curvature: still usable.
        return Some(lo);
    }
    None
}

/// Minimize `f` from `z0`. The returned iterate is the best one seen; the
/// energy trace over accepted iterates is non-increasing by construction of
/// the line search.
pub fn lbfgs_minimize<F>(mut f: F, z0: &[f64], cfg: &LbfgsConfig) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    cfg.validate()?;
    let mut evaluations = 1;
    let (f0, g0) = f(z0)?;
    if !f0.is_finite() {
        return Err(Error::NonFiniteEnergy {
            term: "objective at start point",
        });
    }
    if g0.len() != z0.len() {
        return Err(Error::ShapeMismatch {
            context: "gradient length",
            expected: z0.len().to_string(),
            got: g0.len().to_string(),
        });
    }

    let mut z = z0.to_vec();
    let mut fx = f0;
    let mut grad = g0;
    let mut records = Vec::new();
    if norm(&grad) <= cfg.grad_tol {
        return Ok(LbfgsOutcome {
            z,
            energy: fx,
            gradient: grad,
            iterations: records,
            termination: Termination::StationaryStart,
            evaluations,
        });
    }

    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new(); // (s, y, 1/yᵀs)
    let mut best_z = z.clone();
    let mut best_f = fx;
    let mut best_grad = grad.clone();
    let mut termination = Termination::MaxIterations;

    for iter in 0..cfg.max_iterations {
        // Two-loop recursion: d = -H g.
        let mut q = grad.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let scale = dot(s, y) / dot(y, y);
            for qi in q.iter_mut() {
                *qi *= scale;
            }
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.into_iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut direction: Vec<f64> = q.into_iter().map(|v| -v).collect();
        let mut gtd = dot(&grad, &direction);
        if gtd >= 0.0 {
            // Not a descent direction; restart from steepest descent.
            history.clear();
            direction = grad.iter().map(|g| -g).collect();
            gtd = dot(&grad, &direction);
        }

        let t_init = if iter == 0 {
            (1.0 / (1.0 + norm(&grad))).min(1.0)
        } else {
            1.0
        };
        let found = strong_wolfe(
            &mut f,
            &z,
            &direction,
            fx,
            &grad,
            gtd,
            t_init,
            cfg,
            &mut evaluations,
        );
        let point = match found {
            Some(p) => p,
            None => {
                termination = Termination::LineSearchFailed;
                break;
            }
        };

        let new_z: Vec<f64> = z
            .iter()
            .zip(&direction)
            .map(|(zi, di)| zi + point.step * di)
            .collect();
        let s: Vec<f64> = new_z.iter().zip(&z).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = point.grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 * norm(&s) * norm(&y) {
            if history.len() == cfg.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        let f_prev = fx;
        z = new_z;
        fx = point.f;
        grad = point.grad;
        let gnorm = norm(&grad);
        records.push(IterationRecord {
            energy: fx,
            grad_norm: gnorm,
            step: point.step,
        });
        if fx < best_f {
            best_f = fx;
            best_z = z.clone();
            best_grad = grad.clone();
        }
        if gnorm <= cfg.grad_tol {
            termination = Termination::GradientTolerance;
            break;
        }
        if (f_prev - fx).abs() <= cfg.energy_tol * fx.abs().max(1.0) {
            termination = Termination::EnergyTolerance;
            break;
        }
    }

    Ok(LbfgsOutcome {
        z: best_z,
        energy: best_f,
        gradient: best_grad,
        iterations: records,
        termination,
        evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convex_quadratic_converges_fast() {
        let b: Vec<f64> = (0..12).map(|i| (i as f64) * 0.37 - 2.0).collect();
        let f = |z: &[f64]| -> Result<(f64, Vec<f64>)> {
            let v: f64 = z.iter().zip(&b).map(|(zi, bi)| (zi - bi) * (zi - bi)).sum();
            let g: Vec<f64> = z.iter().zip(&b).map(|(zi, bi)| 2.0 * (zi - bi)).collect();
            Ok((v, g))
        };
        let z0 = vec![5.0; 12];
        let out = lbfgs_minimize(f, &z0, &LbfgsConfig {
            grad_tol: 1e-8,
            ..LbfgsConfig::default()
        })
        .unwrap();
        assert!(out.iterations.len() <= 50, "{} iterations", out.iterations.len());
        assert!(norm(&out.gradient) < 1e-8);
        for (zi, bi) in out.z.iter().zip(&b) {
            assert!((zi - bi).abs() < 1e-7);
        }
    }

    #[test]
    fn rosenbrock_reaches_minimum() {
        let f = |z: &[f64]| -> Result<(f64, Vec<f64>)> {
            let (x, y) = (z[0], z[1]);
            let v = (1.0 - x).powi(2) + 100.0 * (y - x * x).powi(2);
            let g = vec![
                -2.0 * (1.0 - x) - 400.0 * x * (y - x * x),
                200.0 * (y - x * x),
            ];
            Ok((v, g))
        };
        let out = lbfgs_minimize(
            f,
            &[-1.2, 1.0],
            &LbfgsConfig {
                grad_tol: 1e-10,
                energy_tol: 1e-16,
                max_iterations: 200,
                ..LbfgsConfig::default()
            },
        )
        .unwrap();
        assert!(out.energy < 1e-8, "f = {}", out.energy);
        assert!((out.z[0] - 1.0).abs() < 1e-3 && (out.z[1] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn stationary_start_terminates_immediately() {
        let f = |z: &[f64]| -> Result<(f64, Vec<f64>)> {
            let v: f64 = z.iter().map(|zi| zi * zi).sum();
            Ok((v, z.iter().map(|zi| 2.0 * zi).collect()))
        };
        let out = lbfgs_minimize(f, &[0.0, 0.0, 0.0], &LbfgsConfig::default()).unwrap();
        assert_eq!(out.termination, Termination::StationaryStart);
        assert!(out.iterations.is_empty());
    }

    #[test]
    fn accepted_energies_are_monotone() {
        // A mildly nonconvex smooth function.
        let f = |z: &[f64]| -> Result<(f64, Vec<f64>)> {
            let v: f64 = z
                .iter()
                .map(|&x| (x - 1.0).powi(2) + 0.3 * (3.0 * x).sin())
                .sum();
            let g: Vec<f64> = z
                .iter()
                .map(|&x| 2.0 * (x - 1.0) + 0.9 * (3.0 * x).cos())
                .collect();
            Ok((v, g))
        };
        let out = lbfgs_minimize(f, &[-2.0, 0.5, 3.0], &LbfgsConfig::default()).unwrap();
        for w in out.iterations.windows(2) {
            assert!(
                w[1].energy <= w[0].energy + 1e-14,
                "energy increased: {} -> {}",
                w[0].energy,
                w[1].energy
            );
        }
    }

    #[test]
    fn unbounded_descent_reports_line_search_failure() {
        let f = |z: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((z[0], vec![1.0])) };
        let out = lbfgs_minimize(f, &[0.0], &LbfgsConfig::default()).unwrap();
        assert_eq!(out.termination, Termination::LineSearchFailed);
        // Best-so-far is still returned.
        assert!(out.energy <= 0.0);
    }

    #[test]
    fn non_finite_at_start_is_an_error() {
        let f = |_: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((f64::NAN, vec![0.0])) };
        assert!(matches!(
            lbfgs_minimize(f, &[1.0], &LbfgsConfig::default()),
            Err(Error::NonFiniteEnergy { .. })
        ));
    }

    #[test]
    fn recovers_from_non_finite_trial_steps() {
        // Finite near the start, NaN far away: the line search must back off.
        let f = |z: &[f64]| -> Result<(f64, Vec<f64>)> {
            let x = z[0];
            if x.abs() > 3.0 {
                Ok((f64::NAN, vec![f64::NAN]))
            } else {
                Ok(((x - 2.0) * (x - 2.0), vec![2.0 * (x - 2.0)]))
            }
        };
        let out = lbfgs_minimize(f, &[-2.5], &LbfgsConfig::default()).unwrap();
        assert!((out.z[0] - 2.0).abs() < 1e-5, "z = {}", out.z[0]);
    }
}
