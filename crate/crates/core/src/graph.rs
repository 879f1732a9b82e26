//! Shape-graph data model: component curves, endpoint adjacency, edge weights.
//!
//! A shape graph with `K` components carries a `2K x 2K` binary adjacency
//! matrix over its boundary points. Row/column `2k` is the start of component
//! `k` and `2k+1` its end (0-based; the classical 1-based convention uses
//! `2k-1` and `2k`). An entry is 1 exactly when the two boundary points are
//! glued; the diagonal is tautologically 1 and `A[2k][2k+1] = 1` marks
//! component `k` as closed. Entries must form equivalence classes: gluing is
//! symmetric and transitive.

use crate::error::{Error, Result};
use crate::geom::{self, Vec3};
use crate::spline;

/// Which boundary point of a component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum End {
    Start,
    End,
}

/// Boundary-point slot index in the adjacency matrix.
#[inline]
pub fn slot(component: usize, end: End) -> usize {
    2 * component
        + match end {
            End::Start => 0,
            End::End => 1,
        }
}

/// Inverse of [`slot`].
#[inline]
pub fn slot_endpoint(slot: usize) -> (usize, End) {
    (
        slot / 2,
        if slot.is_multiple_of(2) { End::Start } else { End::End },
    )
}

/// Binary boundary-point adjacency matrix of a shape graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    components: usize,
    data: Vec<bool>,
}

impl AdjacencyMatrix {
    /// Identity gluing: every boundary point is its own class (all components
    /// open and disconnected).
    pub fn disconnected(components: usize) -> Self {
        let n = 2 * components;
        let mut data = vec![false; n * n];
        for i in 0..n {
            data[i * n + i] = true;
        }
        AdjacencyMatrix { components, data }
    }

    /// Build from explicit rows (row-major over `2K x 2K` slots).
    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let n = rows.len();
        if !n.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "adjacency matrix must have an even size, got {n}"
            )));
        }
        let mut data = vec![false; n * n];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidConfig(format!(
                    "adjacency matrix is not square: row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                data[i * n + j] = v != 0;
            }
        }
        Ok(AdjacencyMatrix {
            components: n / 2,
            data,
        })
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn size(&self) -> usize {
        2 * self.components
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i * self.size() + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        let n = self.size();
        self.data[i * n + j] = value;
    }

    /// Whether component `k` is closed (`A[2k][2k+1] = 1`).
    pub fn is_closed(&self, component: usize) -> bool {
        self.get(slot(component, End::Start), slot(component, End::End))
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        let n = self.size();
        (0..n)
            .map(|i| (0..n).map(|j| u8::from(self.get(i, j))).collect())
            .collect()
    }

    /// Equivalence classes of glued boundary points, as sorted slot lists.
    /// Computed by union-find over the marked entries, so the result is a
    /// partition even if the stored matrix is not transitively closed.
    pub fn junction_classes(&self) -> Vec<Vec<usize>> {
        let mut uf = UnionFind::new(self.size());
        for i in 0..self.size() {
            for j in (i + 1)..self.size() {
                if self.get(i, j) || self.get(j, i) {
                    uf.union(i, j);
                }
            }
        }
        uf.classes()
    }
}

/// One immersed component curve, stored as an ordered polyline with an
/// optional smooth control net refining it.
#[derive(Debug, Clone)]
pub struct ComponentCurve {
    pub vertices: Vec<Vec3>,
    pub control_net: Option<ControlNet>,
}

/// Clamped B-spline refinement of a component curve on parameter `[0, 1]`.
#[derive(Debug, Clone)]
pub struct ControlNet {
    pub degree: usize,
    pub coefficients: Vec<Vec3>,
}

impl ComponentCurve {
    pub fn polyline(vertices: Vec<Vec3>) -> Self {
        ComponentCurve {
            vertices,
            control_net: None,
        }
    }

    pub fn start(&self) -> Vec3 {
        self.vertices[0]
    }

    pub fn end(&self) -> Vec3 {
        *self.vertices.last().expect("component has vertices")
    }

    pub fn endpoint(&self, end: End) -> Vec3 {
        match end {
            End::Start => self.start(),
            End::End => self.end(),
        }
    }

    /// Evaluate the curve at parameter `theta` in `[0, 1]`: the control net
    /// when present, otherwise linear interpolation along the polyline with
    /// vertices placed uniformly in parameter.
    pub fn eval(&self, theta: f64) -> Result<Vec3> {
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::ParameterOutOfRange { value: theta });
        }
        if let Some(net) = &self.control_net {
            let knots = spline::KnotVector::clamped_uniform(net.degree, net.coefficients.len())?;
            return spline::eval_curve_point(&knots, &net.coefficients, theta);
        }
        let n_edges = self.vertices.len() - 1;
        let scaled = theta * n_edges as f64;
        let idx = (scaled.floor() as usize).min(n_edges - 1);
        let local = scaled - idx as f64;
        Ok(geom::lerp(self.vertices[idx], self.vertices[idx + 1], local))
    }

    pub fn chord_length(&self) -> f64 {
        self.vertices
            .windows(2)
            .map(|w| geom::dist(w[0], w[1]))
            .sum()
    }
}

/// Per-component, per-edge nonnegative weights (multiplicities).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightField {
    pub per_component: Vec<Vec<f64>>,
}

impl WeightField {
    /// All-ones weights matching the edge counts of `components`.
    pub fn unit(components: &[ComponentCurve]) -> Self {
        WeightField {
            per_component: components
                .iter()
                .map(|c| vec![1.0; c.vertices.len().saturating_sub(1)])
                .collect(),
        }
    }

    /// Piecewise-constant lookup of component `k`'s weight at parameter
    /// `theta`, using the uniform-in-parameter edge partition of the source.
    pub fn lookup(&self, component: usize, theta: f64) -> f64 {
        let weights = &self.per_component[component];
        let n = weights.len();
        let idx = ((theta * n as f64).floor() as usize).min(n - 1);
        weights[idx]
    }
}

/// A weighted shape graph: components, gluing, weights.
#[derive(Debug, Clone)]
pub struct ShapeGraphSpec {
    pub components: Vec<ComponentCurve>,
    pub adjacency: AdjacencyMatrix,
    pub weights: WeightField,
    /// Ambient dimension of the input data (2 or 3); points are stored
    /// embedded in `R^3`.
    pub dim: usize,
}

impl ShapeGraphSpec {
    pub fn new(
        components: Vec<ComponentCurve>,
        adjacency: AdjacencyMatrix,
        weights: WeightField,
        dim: usize,
    ) -> Self {
        ShapeGraphSpec {
            components,
            adjacency,
            weights,
            dim,
        }
    }

    /// Spec with unit weights and the given adjacency.
    pub fn with_unit_weights(
        components: Vec<ComponentCurve>,
        adjacency: AdjacencyMatrix,
        dim: usize,
    ) -> Self {
        let weights = WeightField::unit(&components);
        Self::new(components, adjacency, weights, dim)
    }

    pub fn vertex_iter(&self) -> impl Iterator<Item = &Vec3> {
        self.components.iter().flat_map(|c| c.vertices.iter())
    }

    /// Largest pairwise vertex distance.
    pub fn diameter(&self) -> f64 {
        geom::diameter(self.vertex_iter())
    }

    /// Default gluing tolerance: `1e-6` of the graph diameter (one unit when
    /// the graph is degenerate).
    pub fn default_junction_tolerance(&self) -> f64 {
        let d = self.diameter();
        if d > 0.0 {
            1e-6 * d
        } else {
            1e-6
        }
    }

    /// Uniformly scale every vertex (weights are dimensionless).
    pub fn scaled(&self, factor: f64) -> Self {
        let components = self
            .components
            .iter()
            .map(|c| ComponentCurve {
                vertices: c.vertices.iter().map(|&v| geom::scale(v, factor)).collect(),
                control_net: c.control_net.as_ref().map(|net| ControlNet {
                    degree: net.degree,
                    coefficients: net
                        .coefficients
                        .iter()
                        .map(|&v| geom::scale(v, factor))
                        .collect(),
                }),
            })
            .collect();
        ShapeGraphSpec {
            components,
            adjacency: self.adjacency.clone(),
            weights: self.weights.clone(),
            dim: self.dim,
        }
    }
}

/// One violated adjacency or immersion condition found by [`validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    AdjacencySizeMismatch { expected: usize, got: usize },
    NotSymmetric { row: usize, col: usize },
    DiagonalNotOne { slot: usize },
    /// Boundary points marked glued but farther apart than the tolerance.
    MarkedButDistant { a: usize, b: usize, distance: f64 },
    /// Boundary points coincide within tolerance but are not marked glued.
    CoincidentNotMarked { a: usize, b: usize, distance: f64 },
    /// `a ~ b` and `b ~ c` are marked but `a ~ c` is not.
    TransitivityDefect { a: usize, b: usize, c: usize },
    ZeroLengthEdge { component: usize, index: usize },
    TooFewVertices { component: usize, got: usize },
    WeightLengthMismatch { component: usize, expected: usize, got: usize },
    NegativeWeight { component: usize, index: usize, value: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::AdjacencySizeMismatch { expected, got } => {
                write!(f, "adjacency matrix is {got}x{got}, expected {expected}x{expected}")
            }
            Violation::NotSymmetric { row, col } => {
                write!(f, "adjacency entry ({row},{col}) differs from ({col},{row})")
            }
            Violation::DiagonalNotOne { slot } => {
                write!(f, "adjacency diagonal entry {slot} must be 1")
            }
            Violation::MarkedButDistant { a, b, distance } => {
                let (ca, ea) = slot_endpoint(*a);
                let (cb, eb) = slot_endpoint(*b);
                write!(
                    f,
                    "slots {a} ({ea:?} of component {ca}) and {b} ({eb:?} of component {cb}) \
                     are marked glued but {distance:e} apart"
                )
            }
            Violation::CoincidentNotMarked { a, b, distance } => {
                write!(
                    f,
                    "slots {a} and {b} coincide ({distance:e} apart) but are not marked glued"
                )
            }
            Violation::TransitivityDefect { a, b, c } => {
                write!(f, "gluing is not transitive: {a}~{b} and {b}~{c} but not {a}~{c}")
            }
            Violation::ZeroLengthEdge { component, index } => {
                write!(f, "component {component} has a zero-length edge at index {index}")
            }
            Violation::TooFewVertices { component, got } => {
                write!(f, "component {component} has {got} vertices, need at least 2")
            }
            Violation::WeightLengthMismatch { component, expected, got } => {
                write!(
                    f,
                    "component {component} has {got} weights, expected {expected} (one per edge)"
                )
            }
            Violation::NegativeWeight { component, index, value } => {
                write!(f, "component {component} weight {index} is negative ({value})")
            }
        }
    }
}

/// Outcome of [`validate`]: every violated condition, in scan order.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for v in &self.violations {
            writeln!(f, "- {v}")?;
        }
        Ok(())
    }
}

/// Check every adjacency condition, gluing consistency at tolerance
/// `junction_tolerance`, and discrete immersion of each component. Reports
/// everything it finds; callers decide whether to proceed.
pub fn validate(spec: &ShapeGraphSpec, junction_tolerance: f64) -> ValidationReport {
    let mut report = ValidationReport::default();
    let k = spec.components.len();
    let n = 2 * k;
    let adj = &spec.adjacency;

    for (ci, comp) in spec.components.iter().enumerate() {
        if comp.vertices.len() < 2 {
            report.violations.push(Violation::TooFewVertices {
                component: ci,
                got: comp.vertices.len(),
            });
        }
        for (ei, w) in comp.vertices.windows(2).enumerate() {
            if geom::dist(w[0], w[1]) == 0.0 {
                report
                    .violations
                    .push(Violation::ZeroLengthEdge { component: ci, index: ei });
            }
        }
        let expected = comp.vertices.len().saturating_sub(1);
        let weights = &spec.weights.per_component.get(ci);
        match weights {
            Some(ws) => {
                if ws.len() != expected {
                    report.violations.push(Violation::WeightLengthMismatch {
                        component: ci,
                        expected,
                        got: ws.len(),
                    });
                }
                for (wi, &w) in ws.iter().enumerate() {
                    if w < 0.0 {
                        report.violations.push(Violation::NegativeWeight {
                            component: ci,
                            index: wi,
                            value: w,
                        });
                    }
                }
            }
            None => report.violations.push(Violation::WeightLengthMismatch {
                component: ci,
                expected,
                got: 0,
            }),
        }
    }

    if adj.size() != n {
        report.violations.push(Violation::AdjacencySizeMismatch {
            expected: n,
            got: adj.size(),
        });
        return report; // geometric checks below index by slot
    }

    for i in 0..n {
        if !adj.get(i, i) {
            report.violations.push(Violation::DiagonalNotOne { slot: i });
        }
        for j in (i + 1)..n {
            if adj.get(i, j) != adj.get(j, i) {
                report
                    .violations
                    .push(Violation::NotSymmetric { row: i, col: j });
            }
        }
    }

    let endpoint = |s: usize| -> Vec3 {
        let (c, e) = slot_endpoint(s);
        spec.components[c].endpoint(e)
    };
    for i in 0..n {
        for j in (i + 1)..n {
            let d = geom::dist(endpoint(i), endpoint(j));
            let marked = adj.get(i, j) || adj.get(j, i);
            if marked && d > junction_tolerance {
                report
                    .violations
                    .push(Violation::MarkedButDistant { a: i, b: j, distance: d });
            }
            if !marked && d <= junction_tolerance {
                report
                    .violations
                    .push(Violation::CoincidentNotMarked { a: i, b: j, distance: d });
            }
        }
    }

    for b in 0..n {
        for a in 0..n {
            if a == b || !adj.get(a, b) {
                continue;
            }
            for c in (a + 1)..n {
                if c == b && adj.get(b, c) {
                    continue;
                }
                if adj.get(b, c) && !adj.get(a, c) {
                    report
                        .violations
                        .push(Violation::TransitivityDefect { a, b, c });
                }
            }
        }
    }

    report
}

/// Assemble a shape graph from loose polylines, gluing endpoints that fall
/// within `junction_tolerance` of each other (union-find, so gluing is
/// transitively closed) and marking closed components.
pub fn split_components(
    polyline_soup: &[Vec<Vec3>],
    junction_tolerance: f64,
) -> Result<ShapeGraphSpec> {
    for (ci, poly) in polyline_soup.iter().enumerate() {
        if poly.len() < 2 {
            return Err(Error::TooFewVertices {
                component: ci,
                got: poly.len(),
            });
        }
        for (vi, w) in poly.windows(2).enumerate() {
            if geom::dist(w[0], w[1]) == 0.0 {
                return Err(Error::DegeneratePolyline {
                    component: ci,
                    index: vi,
                });
            }
        }
    }

    let k = polyline_soup.len();
    let endpoints: Vec<Vec3> = polyline_soup
        .iter()
        .flat_map(|p| [p[0], *p.last().unwrap()])
        .collect();
    let mut uf = UnionFind::new(2 * k);
    for i in 0..2 * k {
        for j in (i + 1)..2 * k {
            if geom::dist(endpoints[i], endpoints[j]) <= junction_tolerance {
                uf.union(i, j);
            }
        }
    }

    let mut adjacency = AdjacencyMatrix::disconnected(k);
    for class in uf.classes() {
        for (ai, &a) in class.iter().enumerate() {
            for &b in &class[ai + 1..] {
                adjacency.set(a, b, true);
                adjacency.set(b, a, true);
            }
        }
    }

    let components: Vec<ComponentCurve> = polyline_soup
        .iter()
        .map(|p| ComponentCurve::polyline(p.clone()))
        .collect();
    let dim = if components
        .iter()
        .all(|c| c.vertices.iter().all(|v| v[2] == 0.0))
    {
        2
    } else {
        3
    };
    Ok(ShapeGraphSpec::with_unit_weights(components, adjacency, dim))
}

/// Discrete matching-time representation: oriented edges, their centers and
/// weights, flattened over all components.
#[derive(Debug, Clone)]
pub struct PolygonalGraph {
    /// Per-component vertex chains (closed components repeat the first vertex
    /// at the end).
    pub vertices: Vec<Vec<Vec3>>,
    pub edge_vectors: Vec<Vec3>,
    pub centers: Vec<Vec3>,
    pub weights: Vec<f64>,
    pub component_of: Vec<usize>,
    pub dim: usize,
}

impl PolygonalGraph {
    /// Build edges/centers from per-component vertex chains.
    pub fn from_vertices(
        vertices: Vec<Vec<Vec3>>,
        weights: Vec<f64>,
        dim: usize,
    ) -> Result<Self> {
        let mut edge_vectors = Vec::new();
        let mut centers = Vec::new();
        let mut component_of = Vec::new();
        for (ci, chain) in vertices.iter().enumerate() {
            for (ei, w) in chain.windows(2).enumerate() {
                let e = geom::sub(w[1], w[0]);
                if geom::norm(e) == 0.0 {
                    return Err(Error::ZeroLengthEdge {
                        component: ci,
                        index: ei,
                    });
                }
                edge_vectors.push(e);
                centers.push(geom::midpoint(w[0], w[1]));
                component_of.push(ci);
            }
        }
        if weights.len() != edge_vectors.len() {
            return Err(Error::ShapeMismatch {
                context: "polygonal graph weights",
                expected: edge_vectors.len().to_string(),
                got: weights.len().to_string(),
            });
        }
        Ok(PolygonalGraph {
            vertices,
            edge_vectors,
            centers,
            weights,
            component_of,
            dim,
        })
    }

    pub fn num_edges(&self) -> usize {
        self.edge_vectors.len()
    }

    pub fn num_components(&self) -> usize {
        self.vertices.len()
    }

    /// Edge counts per component.
    pub fn edges_per_component(&self) -> Vec<usize> {
        self.vertices.iter().map(|v| v.len() - 1).collect()
    }

    pub fn total_length(&self) -> f64 {
        self.edge_vectors.iter().map(|&e| geom::norm(e)).sum()
    }

    /// The vertex chains as plain polylines (for re-splitting or export).
    pub fn component_polylines(&self) -> Vec<Vec<Vec3>> {
        self.vertices.clone()
    }
}

/// Resample every component at the uniform parameters `i / N_k`, transferring
/// weights by piecewise-constant lookup at each edge-center parameter.
pub fn resample(spec: &ShapeGraphSpec, counts: &[usize]) -> Result<PolygonalGraph> {
    if counts.len() != spec.components.len() {
        return Err(Error::ShapeMismatch {
            context: "resample counts",
            expected: spec.components.len().to_string(),
            got: counts.len().to_string(),
        });
    }
    if let Some(&bad) = counts.iter().find(|&&n| n == 0) {
        return Err(Error::InvalidConfig(format!(
            "resample count must be at least 1, got {bad}"
        )));
    }
    let mut vertices = Vec::with_capacity(spec.components.len());
    let mut weights = Vec::new();
    for (ci, (comp, &n)) in spec.components.iter().zip(counts).enumerate() {
        let chain: Vec<Vec3> = (0..=n)
            .map(|i| comp.eval(i as f64 / n as f64))
            .collect::<Result<_>>()?;
        for (ei, w) in chain.windows(2).enumerate() {
            if geom::dist(w[0], w[1]) == 0.0 {
                return Err(Error::ZeroLengthEdge {
                    component: ci,
                    index: ei,
                });
            }
            let theta_center = (ei as f64 + 0.5) / n as f64;
            weights.push(spec.weights.lookup(ci, theta_center));
        }
        vertices.push(chain);
    }
    PolygonalGraph::from_vertices(vertices, weights, spec.dim)
}

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }

    /// All classes as sorted member lists, ordered by smallest member.
    pub fn classes(&mut self) -> Vec<Vec<usize>> {
        let n = self.parent.len();
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); n];
        for x in 0..n {
            let root = self.find(x);
            buckets[root].push(x);
        }
        buckets.retain(|b| !b.is_empty());
        buckets
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn segment(a: Vec3, b: Vec3) -> Vec<Vec3> {
        vec![a, b]
    }

    #[test]
    fn single_open_segment_validates() {
        let spec = split_components(
            &[segment([0.0, 0.0, 0.0], [1.0, 0.0, 0.0])],
            1e-9,
        )
        .unwrap();
        assert_eq!(spec.adjacency.rows(), vec![vec![1, 0], vec![0, 1]]);
        assert!(validate(&spec, 1e-9).is_valid());
    }

    #[test]
    fn closed_square_loop_validates() {
        let square = vec![
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0],
        ];
        let spec = split_components(&[square], 1e-9).unwrap();
        assert!(spec.adjacency.is_closed(0));
        assert_eq!(spec.adjacency.rows(), vec![vec![1, 1], vec![1, 1]]);
        assert!(validate(&spec, 1e-9).is_valid());
    }

    /// Four components: a closed loop whose basepoint also starts component 1,
    /// whose end meets the start of component 2 and the end of component 3.
    /// The expected matrix is the printed 8x8 example with junction classes
    /// {0,1,2}, {3,4,7}, {5}, {6}.
    #[test]
    fn four_component_graph_matches_printed_matrix() {
        let p = [0.0, 0.0, 0.0];
        let q = [2.0, 0.0, 0.0];
        let loop0 = vec![p, [0.5, 1.0, 0.0], [-0.5, 1.0, 0.0], p];
        let c1 = vec![p, [1.0, 0.3, 0.0], [1.5, -0.3, 0.0], q];
        let c2 = vec![q, [3.0, 1.0, 0.0]];
        let c3 = vec![[3.0, -1.0, 0.0], q];
        let spec = split_components(&[loop0, c1, c2, c3], 1e-9).unwrap();
        let expected = vec![
            vec![1, 1, 1, 0, 0, 0, 0, 0],
            vec![1, 1, 1, 0, 0, 0, 0, 0],
            vec![1, 1, 1, 0, 0, 0, 0, 0],
            vec![0, 0, 0, 1, 1, 0, 0, 1],
            vec![0, 0, 0, 1, 1, 0, 0, 1],
            vec![0, 0, 0, 0, 0, 1, 0, 0],
            vec![0, 0, 0, 0, 0, 0, 1, 0],
            vec![0, 0, 0, 1, 1, 0, 0, 1],
        ];
        assert_eq!(spec.adjacency.rows(), expected);
        assert!(validate(&spec, 1e-9).is_valid());
    }

    #[test]
    fn shared_endpoint_sets_single_pair() {
        let spec = split_components(
            &[
                segment([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
                segment([1.0, 0.0, 0.0], [2.0, 1.0, 0.0]),
            ],
            1e-9,
        )
        .unwrap();
        // End of component 0 (slot 1) touches start of component 1 (slot 2).
        let expected = vec![
            vec![1, 0, 0, 0],
            vec![0, 1, 1, 0],
            vec![0, 1, 1, 0],
            vec![0, 0, 0, 1],
        ];
        assert_eq!(spec.adjacency.rows(), expected);
    }

    /// Independent oracle: brute-force pairwise coincidence, transitively
    /// closed by breadth-first search, must agree with the union-find result.
    #[test]
    fn three_way_junction_is_transitively_glued() {
        let j = [0.5, 0.5, 0.0];
        let soup = vec![
            segment([0.0, 0.0, 0.0], j),
            segment(j, [1.0, 0.0, 0.0]),
            segment([1.0, 1.0, 0.0], j),
        ];
        let spec = split_components(&soup, 1e-9).unwrap();

        let endpoints: Vec<Vec3> = soup
            .iter()
            .flat_map(|p| [p[0], *p.last().unwrap()])
            .collect();
        let n = endpoints.len();
        let mut expect = vec![vec![false; n]; n];
        for (i, row) in expect.iter_mut().enumerate() {
            for (jx, cell) in row.iter_mut().enumerate() {
                *cell = i == jx || geom::dist(endpoints[i], endpoints[jx]) <= 1e-9;
            }
        }
        // Transitive closure by BFS from each slot.
        for s in 0..n {
            let mut queue = vec![s];
            let mut seen = vec![false; n];
            seen[s] = true;
            while let Some(u) = queue.pop() {
                for v in 0..n {
                    if expect[u][v] && !seen[v] {
                        seen[v] = true;
                        queue.push(v);
                    }
                }
            }
            for (v, &reachable) in seen.iter().enumerate() {
                if reachable {
                    expect[s][v] = true;
                }
            }
        }
        for i in 0..n {
            for jx in 0..n {
                assert_eq!(
                    spec.adjacency.get(i, jx),
                    expect[i][jx],
                    "adjacency mismatch at ({i},{jx})"
                );
            }
        }
        // The three touching slots (1, 2, 5) are mutually glued.
        for &(a, b) in &[(1, 2), (1, 5), (2, 5)] {
            assert!(spec.adjacency.get(a, b));
        }
        assert!(validate(&spec, 1e-9).is_valid());
    }

    #[test]
    fn degenerate_polyline_rejected_with_index() {
        let bad = vec![[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        match split_components(&[segment([5.0, 5.0, 0.0], [6.0, 5.0, 0.0]), bad], 1e-9) {
            Err(Error::DegeneratePolyline { component: 1, index: 0 }) => {}
            other => panic!("expected degenerate polyline error, got {other:?}"),
        }
    }

    #[test]
    fn validate_reports_marked_but_distant_and_asymmetry() {
        let mut spec = split_components(
            &[
                segment([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]),
                segment([5.0, 0.0, 0.0], [6.0, 0.0, 0.0]),
            ],
            1e-9,
        )
        .unwrap();
        spec.adjacency.set(1, 2, true); // claim a gluing that is 4 apart
        let report = validate(&spec, 1e-9);
        assert!(!report.is_valid());
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::NotSymmetric { .. })));
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::MarkedButDistant { a: 1, b: 2, .. })));
    }

    #[test]
    fn validate_reports_transitivity_defect() {
        let j = [0.0, 0.0, 0.0];
        let soup = vec![
            segment(j, [1.0, 0.0, 0.0]),
            segment(j, [0.0, 1.0, 0.0]),
            segment(j, [-1.0, 0.0, 0.0]),
        ];
        let mut spec = split_components(&soup, 1e-9).unwrap();
        // Break the closure: un-mark 0~4 while keeping 0~2 and 2~4.
        spec.adjacency.set(0, 4, false);
        spec.adjacency.set(4, 0, false);
        let report = validate(&spec, 1e-9);
        assert!(report
            .violations
            .iter()
            .any(|v| matches!(v, Violation::TransitivityDefect { .. })));
    }

    #[test]
    fn control_net_refines_component_evaluation() {
        // A quadratic net on collinear coefficients reproduces the segment.
        let net = ControlNet {
            degree: 2,
            coefficients: vec![
                [0.0, 0.0, 0.0],
                [0.25, 0.5, 0.0],
                [0.75, 1.5, 0.0],
                [1.0, 2.0, 0.0],
            ],
        };
        let comp = ComponentCurve {
            vertices: vec![[0.0, 0.0, 0.0], [1.0, 2.0, 0.0]],
            control_net: Some(net),
        };
        // Clamped ends interpolate the boundary coefficients.
        assert_eq!(comp.eval(0.0).unwrap(), [0.0, 0.0, 0.0]);
        assert_eq!(comp.eval(1.0).unwrap(), [1.0, 2.0, 0.0]);
        // Coefficients lie on y = 2x, and clamped quadratic B-splines
        // reproduce straight control polygons' line exactly.
        for s in [0.2, 0.5, 0.8] {
            let p = comp.eval(s).unwrap();
            assert!((p[1] - 2.0 * p[0]).abs() < 1e-12, "point {p:?}");
        }
        // Without the net, evaluation falls back to the polyline.
        let poly = ComponentCurve::polyline(vec![[0.0, 0.0, 0.0], [1.0, 2.0, 0.0]]);
        assert_eq!(poly.eval(0.5).unwrap(), [0.5, 1.0, 0.0]);
    }

    #[test]
    fn resample_unit_segment_two_edges() {
        let spec = split_components(&[segment([0.0, 0.0, 0.0], [1.0, 0.0, 0.0])], 1e-9).unwrap();
        let poly = resample(&spec, &[2]).unwrap();
        assert_eq!(poly.num_edges(), 2);
        assert_eq!(poly.edge_vectors, vec![[0.5, 0.0, 0.0], [0.5, 0.0, 0.0]]);
        assert_eq!(poly.centers, vec![[0.25, 0.0, 0.0], [0.75, 0.0, 0.0]]);
        assert_eq!(poly.weights, vec![1.0, 1.0]);
    }

    fn circle_polyline(n: usize) -> Vec<Vec3> {
        (0..=n)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                [a.cos(), a.sin(), 0.0]
            })
            .collect()
    }

    #[test]
    fn resample_circle_matches_chord_oracle() {
        let spec = split_components(&[circle_polyline(100)], 1e-9).unwrap();
        let poly = resample(&spec, &[4]).unwrap();
        assert_eq!(poly.num_edges(), 4);
        // Chord-length oracle: four chords of the inscribed square, each
        // spanning a quarter turn; with the polygonal correction factor
        // sin(pi/4)/(pi/4) applied to the circumference.
        let correction = (std::f64::consts::FRAC_PI_4).sin() / std::f64::consts::FRAC_PI_4;
        let expected = 2.0 * std::f64::consts::PI * correction;
        let total = poly.total_length();
        assert!(
            (total - expected).abs() / expected < 0.05,
            "total {total} vs oracle {expected}"
        );
    }

    #[test]
    fn refinement_does_not_shrink_chord_length() {
        let spec = split_components(&[circle_polyline(512)], 1e-9).unwrap();
        let coarse = resample(&spec, &[8]).unwrap().total_length();
        let fine = resample(&spec, &[16]).unwrap().total_length();
        assert!(fine >= coarse - 1e-12, "fine {fine} < coarse {coarse}");
    }

    #[test]
    fn resample_then_split_reconstructs_adjacency() {
        let j = [0.3, 0.7, 0.0];
        let soup = vec![
            vec![[0.0, 0.0, 0.0], [0.1, 0.3, 0.0], j],
            vec![j, [1.0, 1.0, 0.0]],
            circle_polyline(32),
        ];
        let spec = split_components(&soup, 1e-9).unwrap();
        let poly = resample(&spec, &[7, 5, 11]).unwrap();
        let rebuilt = split_components(&poly.component_polylines(), 1e-9).unwrap();
        assert_eq!(rebuilt.adjacency, spec.adjacency);
    }

    #[test]
    fn component_permutation_preserves_validity() {
        let j = [0.5, 0.5, 0.0];
        let soup = vec![
            segment([0.0, 0.0, 0.0], j),
            segment(j, [1.0, 0.0, 0.0]),
            circle_polyline(16),
        ];
        let spec = split_components(&soup, 1e-9).unwrap();
        assert!(validate(&spec, 1e-9).is_valid());
        let permuted: Vec<Vec<Vec3>> = vec![soup[2].clone(), soup[0].clone(), soup[1].clone()];
        let spec_p = split_components(&permuted, 1e-9).unwrap();
        assert!(validate(&spec_p, 1e-9).is_valid());
    }
}
