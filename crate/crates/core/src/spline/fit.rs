//! Least-squares fit of the initial time slice to the source polylines.

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::graph::{slot_endpoint, ShapeGraphSpec};

use super::basis::{basis_eval, KnotVector};
use super::path::{PathSpline, TieTable};

/// Fit a clamped spatial spline to sampled points with both boundary
/// coefficients pinned. Returns the coefficients and the maximum residual
/// over the samples. Interior coefficients solve the normal equations by
/// Cholesky (with a tiny ridge retry if the sampling is degenerate).
pub fn fit_open_curve(
    knots: &KnotVector,
    thetas: &[f64],
    points: &[Vec3],
    start: Vec3,
    end: Vec3,
) -> Result<(Vec<Vec3>, f64)> {
    let n = knots.num_basis();
    let b = basis_eval(knots, thetas, 0)?;
    let mut coefficients = vec![[0.0; 3]; n];
    coefficients[0] = start;
    coefficients[n - 1] = end;

    let interior = n.saturating_sub(2);
    if interior > 0 {
        if thetas.len() < interior {
            return Err(Error::InvalidConfig(format!(
                "need at least {interior} samples to fit {n} spline coefficients"
            )));
        }
        // Residual target after removing the pinned boundary columns.
        let mut rhs = Array2::<f64>::zeros((thetas.len(), 3));
        for (s, &p) in points.iter().enumerate() {
            for d in 0..3 {
                rhs[[s, d]] = p[d] - b[[s, 0]] * start[d] - b[[s, n - 1]] * end[d];
            }
        }
        let a = b.slice(ndarray::s![.., 1..n - 1]);
        let mut normal = a.t().dot(&a);
        let atr = a.t().dot(&rhs);
        let solution = match cholesky_solve(normal.clone(), atr.clone()) {
            Some(x) => x,
            None => {
                let ridge = 1e-10
                    * normal
                        .diag()
                        .iter()
                        .fold(0.0f64, |acc, &d| acc.max(d))
                        .max(1e-300);
                for i in 0..interior {
                    normal[[i, i]] += ridge;
                }
                cholesky_solve(normal, atr).ok_or_else(|| {
                    Error::InvalidConfig("spline fit normal equations are singular".into())
                })?
            }
        };
        for i in 0..interior {
            for d in 0..3 {
                coefficients[i + 1][d] = solution[[i, d]];
            }
        }
    }

    let mut residual = 0.0f64;
    for (s, &p) in points.iter().enumerate() {
        let mut fitted = [0.0; 3];
        for (j, c) in coefficients.iter().enumerate() {
            for d in 0..3 {
                fitted[d] += b[[s, j]] * c[d];
            }
        }
        residual = residual.max(geom::dist(fitted, p));
    }
    Ok((coefficients, residual))
}

/// Solve `M X = B` for symmetric positive definite `M` via LL^T.
fn cholesky_solve(mut m: Array2<f64>, mut b: Array2<f64>) -> Option<Array2<f64>> {
    let n = m.nrows();
    for k in 0..n {
        let mut d = m[[k, k]];
        for p in 0..k {
            d -= m[[k, p]] * m[[k, p]];
        }
        if d <= 0.0 || !d.is_finite() {
            return None;
        }
        let d = d.sqrt();
        m[[k, k]] = d;
        for i in (k + 1)..n {
            let mut v = m[[i, k]];
            for p in 0..k {
                v -= m[[i, p]] * m[[k, p]];
            }
            m[[i, k]] = v / d;
        }
    }
    // Forward then backward substitution, per right-hand-side column.
    for c in 0..b.ncols() {
        for i in 0..n {
            let mut v = b[[i, c]];
            for p in 0..i {
                v -= m[[i, p]] * b[[p, c]];
            }
            b[[i, c]] = v / m[[i, i]];
        }
        for i in (0..n).rev() {
            let mut v = b[[i, c]];
            for p in (i + 1)..n {
                v -= m[[p, i]] * b[[p, c]];
            }
            b[[i, c]] = v / m[[i, i]];
        }
    }
    Some(b)
}

/// Build the constant path at the source: the first time slice is a
/// least-squares spline fit of each source component (boundary coefficients
/// snapped so glued endpoints coincide exactly), replicated over all time
/// slices. Returns the path and per-component fit residuals.
pub fn fit_constant_path(
    spec: &ShapeGraphSpec,
    degree_t: usize,
    degree_theta: usize,
    num_t: usize,
    num_theta: usize,
) -> Result<(PathSpline, Vec<f64>)> {
    let knots_t = KnotVector::clamped_uniform(degree_t, num_t)?;
    let knots_theta = KnotVector::clamped_uniform(degree_theta, num_theta)?;
    let ties = TieTable::from_adjacency(&spec.adjacency, num_theta);

    // Snap glued boundary points to their class mean so ties hold exactly.
    let mut snapped: Vec<Vec3> = (0..2 * spec.components.len())
        .map(|s| {
            let (c, e) = slot_endpoint(s);
            spec.components[c].endpoint(e)
        })
        .collect();
    for class in spec.adjacency.junction_classes() {
        if class.len() < 2 {
            continue;
        }
        let mut mean = [0.0; 3];
        for &s in &class {
            mean = geom::add(mean, snapped[s]);
        }
        mean = geom::scale(mean, 1.0 / class.len() as f64);
        for &s in &class {
            snapped[s] = mean;
        }
    }

    let mut controls = Vec::with_capacity(spec.components.len());
    let mut residuals = Vec::with_capacity(spec.components.len());
    for (ci, comp) in spec.components.iter().enumerate() {
        let samples = (8 * num_theta).max(4 * comp.vertices.len()).max(64);
        let thetas: Vec<f64> = (0..=samples).map(|s| s as f64 / samples as f64).collect();
        let points: Vec<Vec3> = thetas
            .iter()
            .map(|&t| comp.eval(t))
            .collect::<Result<_>>()?;
        let (coefficients, residual) = fit_open_curve(
            &knots_theta,
            &thetas,
            &points,
            snapped[2 * ci],
            snapped[2 * ci + 1],
        )?;
        residuals.push(residual);
        let mut ctl = Array3::zeros((num_t, num_theta, 3));
        for i in 0..num_t {
            for (j, c) in coefficients.iter().enumerate() {
                for d in 0..3 {
                    ctl[[i, j, d]] = c[d];
                }
            }
        }
        controls.push(ctl);
    }

    let mut path = PathSpline {
        knots_t,
        knots_theta,
        controls,
        ties,
        dim: spec.dim,
    };
    path.enforce_ties();
    Ok((path, residuals))
}
