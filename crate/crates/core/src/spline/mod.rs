//! Tensor-product B-spline paths of shape graphs.
//!
//! A path is discretized per component as `c^k(t, θ) = Σ_ij c_ij^k B_i(t) C_j(θ)`
//! with clamped (full-multiplicity boundary) knots, equidistant simple interior
//! knots, and typically degree 1 in time, degree 2 in space. Clamping makes the
//! first time slice of control points carry `c(0)` exactly, so the initial
//! constraint is enforced by freezing that slice, and lets glued boundary
//! points be tied by sharing spatial boundary control points at every time
//! slice. Evaluation and its adjoint are plain tensor contractions against
//! precomputed basis matrices.

mod basis;
mod fit;
mod path;
mod quadrature;

pub use basis::{basis_eval, eval_curve_point, KnotVector};
pub use fit::{fit_constant_path, fit_open_curve};
pub use path::{DofMap, PathSpline, TieTable};
pub use quadrature::{gauss_legendre, QuadratureRule};
