//! Gauss–Legendre quadrature over knot spans, with cached basis matrices.

use ndarray::Array2;

use crate::error::{Error, Result};

use super::basis::{basis_eval, KnotVector};

/// Gauss–Legendre nodes and weights on `[-1, 1]`, by Newton iteration on the
/// Legendre recurrence. Exact (to roundoff) for polynomials of degree
/// `2n - 1`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            if n == 1 {
                p1 = x;
            }
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { x } else { p1 };
            let pm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Quadrature sites in time and space with weights and precomputed basis and
/// derivative matrices at those sites. Nodes sit strictly inside knot spans,
/// where the splines are smooth.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub t_nodes: Vec<f64>,
    pub t_weights: Vec<f64>,
    pub theta_nodes: Vec<f64>,
    pub theta_weights: Vec<f64>,
    /// Basis matrices in time for derivative orders `0..=1`.
    pub basis_t: Vec<Array2<f64>>,
    /// Basis matrices in space for derivative orders `0..=2`.
    pub basis_theta: Vec<Array2<f64>>,
}

/// Map reference nodes onto each span of a knot vector.
fn per_span_nodes(knots: &KnotVector, nodes_per_span: usize) -> (Vec<f64>, Vec<f64>) {
    let (xi, wi) = gauss_legendre(nodes_per_span);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for (a, b) in knots.spans() {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (&x, &w) in xi.iter().zip(&wi) {
            nodes.push(mid + half * x);
            weights.push(half * w);
        }
    }
    (nodes, weights)
}

impl QuadratureRule {
    /// Build a rule for the given knot vectors. The spatial derivative order
    /// is capped at 2 (the highest order the metrics use) and the time order
    /// at 1; both are also capped by the spline degrees.
    pub fn build(
        knots_t: &KnotVector,
        knots_theta: &KnotVector,
        nodes_per_span_t: usize,
        nodes_per_span_theta: usize,
    ) -> Result<Self> {
        if nodes_per_span_t == 0 || nodes_per_span_theta == 0 {
            return Err(Error::InvalidConfig(
                "quadrature needs at least one node per span".into(),
            ));
        }
        let (t_nodes, t_weights) = per_span_nodes(knots_t, nodes_per_span_t);
        let (theta_nodes, theta_weights) = per_span_nodes(knots_theta, nodes_per_span_theta);
        let max_dt = knots_t.degree().min(1);
        let max_dtheta = knots_theta.degree().min(2);
        let basis_t = (0..=max_dt)
            .map(|d| basis_eval(knots_t, &t_nodes, d))
            .collect::<Result<Vec<_>>>()?;
        let basis_theta = (0..=max_dtheta)
            .map(|d| basis_eval(knots_theta, &theta_nodes, d))
            .collect::<Result<Vec<_>>>()?;
        Ok(QuadratureRule {
            t_nodes,
            t_weights,
            theta_nodes,
            theta_weights,
            basis_t,
            basis_theta,
        })
    }
}
