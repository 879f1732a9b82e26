//! Elastic matching and geodesic distances between weighted shape graphs.
//!
//! A shape graph is a union of open or closed component curves in `R^2` or
//! `R^3` whose boundary points may be glued together, carrying a nonnegative
//! weight (multiplicity) on each edge. This crate registers a source shape
//! graph onto a target by jointly estimating a geometric deformation (a
//! B-spline path of shape graphs, measured by a second-order invariant Sobolev
//! metric) and a weight-change function (regularized by a total-variation norm
//! and an optional binary-well penalty), with a kernel varifold distance
//! relaxing the endpoint constraint. The nonsmooth TV term is handled by
//! Huber smoothing with a geometrically increasing continuation schedule, each
//! stage solved by L-BFGS.
//!
//! Entry points: [`pipeline::MatchProblem`] and [`pipeline::match_graphs`],
//! with file formats in [`formats`] consumed by the `sge` command line tool.

// Numerical kernels index by node/coordinate throughout; iterator rewrites
// obscure the tensor structure.
#![allow(clippy::needless_range_loop)]

pub mod detsum;
pub mod error;
pub mod formats;
pub mod geom;
pub mod graph;
pub mod metric;
pub mod optim;
pub mod pipeline;
pub mod regularizer;
pub mod spline;
pub mod varifold;

pub use error::{Error, Result};
pub use graph::{AdjacencyMatrix, ComponentCurve, PolygonalGraph, ShapeGraphSpec, WeightField};
pub use metric::MetricConfig;
pub use pipeline::{fixed_weight_match, match_graphs, MatchProblem, MatchResult};
pub use varifold::KernelConfig;
