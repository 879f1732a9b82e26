//! Clamped B-spline knot vectors and basis evaluation (Cox–de Boor).

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Knot vector on `[0, 1]` with full multiplicity at both boundaries and
/// equidistant simple interior knots.
#[derive(Debug, Clone, PartialEq)]
pub struct KnotVector {
    degree: usize,
    knots: Vec<f64>,
}

impl KnotVector {
    /// Clamped uniform knots for `num_basis` basis functions of the given
    /// degree. Requires `num_basis >= degree + 1`.
    pub fn clamped_uniform(degree: usize, num_basis: usize) -> Result<Self> {
        if num_basis < degree + 1 {
            return Err(Error::InvalidConfig(format!(
                "need at least {} control points for degree {degree}, got {num_basis}",
                degree + 1
            )));
        }
        let interior = num_basis - degree - 1;
        let mut knots = Vec::with_capacity(num_basis + degree + 1);
        knots.extend(std::iter::repeat_n(0.0, degree + 1));
        for i in 1..=interior {
            knots.push(i as f64 / (interior + 1) as f64);
        }
        knots.extend(std::iter::repeat_n(1.0, degree + 1));
        Ok(KnotVector { degree, knots })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn num_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    /// Distinct knot spans as `(left, right)` pairs covering `[0, 1]`.
    pub fn spans(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for w in self.knots.windows(2) {
            if w[1] > w[0] {
                out.push((w[0], w[1]));
            }
        }
        out
    }

    /// Index of the knot span containing `u`, with `u = 1` assigned to the
    /// last non-empty span.
    pub fn find_span(&self, u: f64) -> usize {
        let n = self.num_basis();
        let p = self.degree;
        if u >= self.knots[n] {
            return n - 1;
        }
        // Binary search over knots[p..=n] for knots[i] <= u < knots[i+1].
        let (mut lo, mut hi) = (p, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if u < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Nonzero basis functions and derivatives at `u`: `ders[k][j]` is the
    /// k-th derivative of basis `span - degree + j`. Cox–de Boor with the
    /// standard derivative triangle.
    pub fn ders_basis(&self, span: usize, u: f64, n_ders: usize) -> Vec<Vec<f64>> {
        let p = self.degree;
        let n = n_ders.min(p);
        let knots = &self.knots;
        let mut ndu = vec![vec![0.0; p + 1]; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        ndu[0][0] = 1.0;
        for j in 1..=p {
            left[j] = u - knots[span + 1 - j];
            right[j] = knots[span + j] - u;
            let mut saved = 0.0;
            for r in 0..j {
                ndu[j][r] = right[r + 1] + left[j - r];
                let temp = ndu[r][j - 1] / ndu[j][r];
                ndu[r][j] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            ndu[j][j] = saved;
        }
        let mut ders = vec![vec![0.0; p + 1]; n_ders + 1];
        for j in 0..=p {
            ders[0][j] = ndu[j][p];
        }
        let mut a = vec![vec![0.0; p + 1]; 2];
        for r in 0..=p {
            let mut s1 = 0;
            let mut s2 = 1;
            a[0][0] = 1.0;
            for k in 1..=n {
                let mut d = 0.0;
                let rk = r as isize - k as isize;
                let pk = p - k;
                if r >= k {
                    a[s2][0] = a[s1][0] / ndu[pk + 1][rk as usize];
                    d = a[s2][0] * ndu[rk as usize][pk];
                }
                let j1 = if rk >= -1 { 1 } else { (-rk) as usize };
                let j2 = if r as isize - 1 <= pk as isize {
                    k - 1
                } else {
                    p - r
                };
                for j in j1..=j2 {
                    a[s2][j] =
                        (a[s1][j] - a[s1][j - 1]) / ndu[pk + 1][(rk + j as isize) as usize];
                    d += a[s2][j] * ndu[(rk + j as isize) as usize][pk];
                }
                if r <= pk {
                    a[s2][k] = -a[s1][k - 1] / ndu[pk + 1][r];
                    d += a[s2][k] * ndu[r][pk];
                }
                ders[k][r] = d;
                std::mem::swap(&mut s1, &mut s2);
            }
        }
        let mut factor = p as f64;
        for k in 1..=n {
            for j in 0..=p {
                ders[k][j] *= factor;
            }
            factor *= (p - k) as f64;
        }
        ders
    }
}

/// Dense basis (or derivative) matrix: one row per evaluation point, one
/// column per basis function.
pub fn basis_eval(
    knots: &KnotVector,
    points: &[f64],
    derivative_order: usize,
) -> Result<Array2<f64>> {
    if derivative_order > knots.degree() {
        return Err(Error::DerivativeOrderTooHigh {
            requested: derivative_order,
            degree: knots.degree(),
        });
    }
    let mut out = Array2::zeros((points.len(), knots.num_basis()));
    for (row, &u) in points.iter().enumerate() {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::ParameterOutOfRange { value: u });
        }
        let span = knots.find_span(u);
        let ders = knots.ders_basis(span, u, derivative_order);
        for (j, &v) in ders[derivative_order].iter().enumerate() {
            out[[row, span - knots.degree() + j]] = v;
        }
    }
    Ok(out)
}

/// Evaluate one spatial spline curve at a single parameter.
pub fn eval_curve_point(knots: &KnotVector, coefficients: &[Vec3], u: f64) -> Result<Vec3> {
    if coefficients.len() != knots.num_basis() {
        return Err(Error::ShapeMismatch {
            context: "spline coefficients",
            expected: knots.num_basis().to_string(),
            got: coefficients.len().to_string(),
        });
    }
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::ParameterOutOfRange { value: u });
    }
    let span = knots.find_span(u);
    let ders = knots.ders_basis(span, u, 0);
    let mut point = [0.0; 3];
    for (j, &b) in ders[0].iter().enumerate() {
        let c = coefficients[span - knots.degree() + j];
        for d in 0..3 {
            point[d] += b * c[d];
        }
    }
    Ok(point)
}
