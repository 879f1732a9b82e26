//! Spline paths of shape graphs: control nets, endpoint ties, evaluation and
//! its adjoint, and the free-variable packing used by the optimizer.

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::geom::Vec3;
use crate::graph::{slot_endpoint, AdjacencyMatrix, End};

use super::basis::KnotVector;

/// Groups of spatial boundary control columns that share one underlying
/// variable at every time slice. Derived from the adjacency matrix: glued
/// boundary points (and the seam of a closed component) stay glued along the
/// whole path because their controls are literally the same numbers.
#[derive(Debug, Clone, Default)]
pub struct TieTable {
    /// Each group lists `(component, theta column)` members; first member owns
    /// the stored value.
    pub groups: Vec<Vec<(usize, usize)>>,
}

impl TieTable {
    /// Build tie groups from the junction classes of an adjacency matrix.
    pub fn from_adjacency(adjacency: &AdjacencyMatrix, theta_cols: usize) -> Self {
        let mut groups = Vec::new();
        for class in adjacency.junction_classes() {
            if class.len() < 2 {
                continue;
            }
            let members: Vec<(usize, usize)> = class
                .iter()
                .map(|&s| {
                    let (comp, end) = slot_endpoint(s);
                    let col = match end {
                        End::Start => 0,
                        End::End => theta_cols - 1,
                    };
                    (comp, col)
                })
                .collect();
            groups.push(members);
        }
        TieTable { groups }
    }

    /// The group owning `(component, column)`, if any.
    pub fn group_of(&self, component: usize, col: usize) -> Option<usize> {
        self.groups
            .iter()
            .position(|g| g.contains(&(component, col)))
    }

    /// Whether `(component, column)` is a non-owner member of some group.
    pub fn is_follower(&self, component: usize, col: usize) -> bool {
        self.groups
            .iter()
            .any(|g| g[0] != (component, col) && g.contains(&(component, col)))
    }
}

/// Tensor-product B-spline path of a shape graph.
#[derive(Debug, Clone)]
pub struct PathSpline {
    pub knots_t: KnotVector,
    pub knots_theta: KnotVector,
    /// Per component: control points of shape `(N_t, N_theta, 3)`.
    pub controls: Vec<Array3<f64>>,
    pub ties: TieTable,
    pub dim: usize,
}

impl PathSpline {
    pub fn num_components(&self) -> usize {
        self.controls.len()
    }

    pub fn num_t(&self) -> usize {
        self.knots_t.num_basis()
    }

    pub fn num_theta(&self) -> usize {
        self.knots_theta.num_basis()
    }

    /// Copy every tie-group owner's control values onto the other members, at
    /// every time slice.
    pub fn enforce_ties(&mut self) {
        for group in self.ties.groups.clone() {
            let (oc, oj) = group[0];
            for i in 0..self.num_t() {
                let owner: Vec3 = [
                    self.controls[oc][[i, oj, 0]],
                    self.controls[oc][[i, oj, 1]],
                    self.controls[oc][[i, oj, 2]],
                ];
                for &(c, j) in &group[1..] {
                    for d in 0..3 {
                        self.controls[c][[i, j, d]] = owner[d];
                    }
                }
            }
        }
    }

    /// Contract the control net against a time basis `bt` (rows: time nodes)
    /// and space basis `ct` (rows: space nodes): per component an array of
    /// sampled values `(T, Θ, 3)`. Passing derivative basis matrices yields
    /// the corresponding jet.
    pub fn eval(&self, bt: &Array2<f64>, ct: &Array2<f64>) -> Vec<Array3<f64>> {
        let (t_rows, s_rows) = (bt.nrows(), ct.nrows());
        self.controls
            .iter()
            .map(|ctl| {
                let mut out = Array3::zeros((t_rows, s_rows, 3));
                for d in 0..3 {
                    let plane = ctl.index_axis(ndarray::Axis(2), d);
                    let tmp = bt.dot(&plane); // (T, N_theta)
                    let vals = tmp.dot(&ct.t()); // (T, Θ)
                    out.index_axis_mut(ndarray::Axis(2), d).assign(&vals);
                }
                out
            })
            .collect()
    }

    /// [`Self::eval`] restricted to one component.
    pub fn eval_component(
        &self,
        component: usize,
        bt: &Array2<f64>,
        ct: &Array2<f64>,
    ) -> Array3<f64> {
        let ctl = &self.controls[component];
        let mut out = Array3::zeros((bt.nrows(), ct.nrows(), 3));
        for d in 0..3 {
            let plane = ctl.index_axis(ndarray::Axis(2), d);
            let vals = bt.dot(&plane).dot(&ct.t());
            out.index_axis_mut(ndarray::Axis(2), d).assign(&vals);
        }
        out
    }

    /// Adjoint of [`Self::eval_component`].
    pub fn backprop_component(
        &self,
        component: usize,
        bt: &Array2<f64>,
        ct: &Array2<f64>,
        cotangent: &Array3<f64>,
    ) -> Array3<f64> {
        let mut grad = Array3::zeros(self.controls[component].raw_dim());
        for d in 0..3 {
            let plane = cotangent.index_axis(ndarray::Axis(2), d);
            let g = bt.t().dot(&plane).dot(ct);
            grad.index_axis_mut(ndarray::Axis(2), d).assign(&g);
        }
        grad
    }

    /// Adjoint of [`Self::eval`]: scatter cotangents at the sample nodes back
    /// to control-point gradients. Linear, so `<eval(x), w> = <x, backprop(w)>`.
    pub fn backprop(
        &self,
        bt: &Array2<f64>,
        ct: &Array2<f64>,
        cotangents: &[Array3<f64>],
    ) -> Result<Vec<Array3<f64>>> {
        if cotangents.len() != self.controls.len() {
            return Err(Error::ShapeMismatch {
                context: "backprop cotangents",
                expected: self.controls.len().to_string(),
                got: cotangents.len().to_string(),
            });
        }
        let mut grads = Vec::with_capacity(self.controls.len());
        for (ctl, cot) in self.controls.iter().zip(cotangents) {
            if cot.shape() != [bt.nrows(), ct.nrows(), 3] {
                return Err(Error::ShapeMismatch {
                    context: "backprop cotangent shape",
                    expected: format!("({}, {}, 3)", bt.nrows(), ct.nrows()),
                    got: format!("{:?}", cot.shape()),
                });
            }
            let mut grad = Array3::zeros(ctl.raw_dim());
            for d in 0..3 {
                let plane = cot.index_axis(ndarray::Axis(2), d);
                let tmp = bt.t().dot(&plane); // (N_t, Θ)
                let g = tmp.dot(ct); // (N_t, N_theta)
                grad.index_axis_mut(ndarray::Axis(2), d).assign(&g);
            }
            grads.push(grad);
        }
        Ok(grads)
    }
}

/// Mapping between the free optimization variables and the control net.
///
/// The first time slice is frozen (it carries the initial constraint) and tied
/// columns are stored once, under their owner. Gradients of tied variables sum
/// over all occurrences; gradients on the frozen slice are computed but never
/// enter the packed vector.
#[derive(Debug, Clone)]
pub struct DofMap {
    /// Owned `(component, time index, theta column)` slots in packing order
    /// (component-major, then time, then column).
    slots: Vec<(usize, usize, usize)>,
    dim: usize,
}

impl DofMap {
    pub fn build(path: &PathSpline) -> Self {
        let mut slots = Vec::new();
        for c in 0..path.num_components() {
            for i in 1..path.num_t() {
                for j in 0..path.num_theta() {
                    if path.ties.is_follower(c, j) {
                        continue;
                    }
                    slots.push((c, i, j));
                }
            }
        }
        DofMap {
            slots,
            dim: path.dim,
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len() * self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn pack(&self, path: &PathSpline) -> Vec<f64> {
        let mut z = Vec::with_capacity(self.len());
        for &(c, i, j) in &self.slots {
            for d in 0..self.dim {
                z.push(path.controls[c][[i, j, d]]);
            }
        }
        z
    }

    pub fn unpack(&self, path: &mut PathSpline, z: &[f64]) -> Result<()> {
        if z.len() != self.len() {
            return Err(Error::ShapeMismatch {
                context: "control vector",
                expected: self.len().to_string(),
                got: z.len().to_string(),
            });
        }
        let mut it = z.iter();
        for &(c, i, j) in &self.slots {
            for d in 0..self.dim {
                path.controls[c][[i, j, d]] = *it.next().unwrap();
            }
        }
        path.enforce_ties();
        Ok(())
    }

    /// Pack control gradients, summing tied occurrences into their owner and
    /// masking the frozen first time slice.
    pub fn pack_grad(&self, path: &PathSpline, grads: &[Array3<f64>]) -> Vec<f64> {
        let mut z = vec![0.0; self.len()];
        for (slot_idx, &(c, i, j)) in self.slots.iter().enumerate() {
            let base = slot_idx * self.dim;
            for d in 0..self.dim {
                z[base + d] = grads[c][[i, j, d]];
            }
            if let Some(gi) = path.ties.group_of(c, j) {
                for &(fc, fj) in &path.ties.groups[gi][1..] {
                    for d in 0..self.dim {
                        z[base + d] += grads[fc][[i, fj, d]];
                    }
                }
            }
        }
        z
    }
}
