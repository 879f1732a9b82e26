//! JSON file formats: shape graphs, solver configuration, results and
//! checkpoints. All floating-point values survive a write/read round trip
//! bit-exactly (shortest-representation encoding).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom;
use crate::graph::{AdjacencyMatrix, ComponentCurve, ShapeGraphSpec, WeightField};
use crate::metric::MetricConfig;
use crate::optim::{LbfgsConfig, SfistaSchedule, SmoothedBreakdown, StageTrace};
use crate::pipeline::{MatchProblem, MatchResult, SplineConfig};
use crate::regularizer::PenaltyConfig;
use crate::spline::{KnotVector, PathSpline, TieTable};
use crate::varifold::KernelConfig;

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// On-disk shape graph: per-component vertex lists, the boundary-point
/// adjacency matrix, optional per-edge weights (default 1).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapeGraphFile {
    pub dim: usize,
    pub components: Vec<Vec<Vec<f64>>>,
    pub adjacency: Vec<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<Vec<f64>>>,
}

impl ShapeGraphFile {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn to_spec(&self) -> Result<ShapeGraphSpec> {
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::InvalidConfig(format!(
                "dim must be 2 or 3, got {}",
                self.dim
            )));
        }
        let mut components = Vec::with_capacity(self.components.len());
        for (ci, comp) in self.components.iter().enumerate() {
            let mut vertices = Vec::with_capacity(comp.len());
            for point in comp {
                if point.len() != self.dim {
                    return Err(Error::InvalidConfig(format!(
                        "component {ci} has a point with {} coordinates, expected {}",
                        point.len(),
                        self.dim
                    )));
                }
                vertices.push(geom::embed(point));
            }
            components.push(ComponentCurve::polyline(vertices));
        }
        let adjacency = AdjacencyMatrix::from_rows(&self.adjacency)?;
        if adjacency.size() != 2 * components.len() {
            return Err(Error::InvalidConfig(format!(
                "adjacency is {0}x{0} but {1} components need {2}x{2}",
                adjacency.size(),
                components.len(),
                2 * components.len()
            )));
        }
        let weights = match &self.weights {
            Some(w) => WeightField {
                per_component: w.clone(),
            },
            None => WeightField::unit(&components),
        };
        Ok(ShapeGraphSpec::new(components, adjacency, weights, self.dim))
    }

    pub fn from_spec(spec: &ShapeGraphSpec) -> Self {
        ShapeGraphFile {
            dim: spec.dim,
            components: spec
                .components
                .iter()
                .map(|c| {
                    c.vertices
                        .iter()
                        .map(|v| v[..spec.dim].to_vec())
                        .collect()
                })
                .collect(),
            adjacency: spec.adjacency.rows(),
            weights: Some(spec.weights.per_component.clone()),
        }
    }
}

/// Solver configuration file mirroring [`MatchProblem`]. Unknown keys are
/// rejected everywhere, so typos fail loudly.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConfigFile {
    pub metric: MetricConfig,
    pub kernel: KernelConfig,
    /// Varifold balancing weight λ.
    pub lambda: f64,
    /// TV weight α.
    pub alpha: f64,
    /// {0,1}-penalty weight β and clipping margin.
    pub penalty: PenaltyConfig,
    pub schedule: SfistaSchedule,
    pub lbfgs: LbfgsConfig,
    pub spline: SplineConfig,
    /// Edges per component in the matching-time discretization.
    pub resample_count: usize,
    /// Jointly rescale the pair to unit diameter before matching.
    pub normalize: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub junction_tolerance: Option<f64>,
}

impl Default for ConfigFile {
    fn default() -> Self {
        let p = MatchProblem::new(empty_spec(), empty_spec());
        ConfigFile {
            metric: p.metric,
            kernel: p.kernel,
            lambda: p.lambda,
            alpha: p.alpha,
            penalty: p.penalty,
            schedule: p.schedule,
            lbfgs: p.lbfgs,
            spline: p.spline,
            resample_count: p.resample_count,
            normalize: p.normalize,
            junction_tolerance: None,
        }
    }
}

fn empty_spec() -> ShapeGraphSpec {
    ShapeGraphSpec::with_unit_weights(Vec::new(), AdjacencyMatrix::disconnected(0), 2)
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn to_problem(&self, source: ShapeGraphSpec, target: ShapeGraphSpec) -> MatchProblem {
        let mut p = MatchProblem::new(source, target);
        p.metric = self.metric.clone();
        p.kernel = self.kernel;
        p.lambda = self.lambda;
        p.alpha = self.alpha;
        p.penalty = self.penalty;
        p.schedule = self.schedule;
        p.lbfgs = self.lbfgs;
        p.spline = self.spline;
        p.resample_count = self.resample_count;
        p.normalize = self.normalize;
        p.junction_tolerance = self.junction_tolerance;
        p
    }
}

/// Serialized spline path of shape graphs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PathSplineData {
    pub degree_t: usize,
    pub degree_theta: usize,
    /// Per component: `N_t x N_theta` rows of 3 coordinates.
    pub controls: Vec<Vec<Vec<Vec<f64>>>>,
    pub tie_groups: Vec<Vec<(usize, usize)>>,
    pub dim: usize,
}

impl PathSplineData {
    pub fn from_path(path: &PathSpline) -> Self {
        PathSplineData {
            degree_t: path.knots_t.degree(),
            degree_theta: path.knots_theta.degree(),
            controls: path
                .controls
                .iter()
                .map(|ctl| {
                    (0..ctl.shape()[0])
                        .map(|i| {
                            (0..ctl.shape()[1])
                                .map(|j| (0..3).map(|d| ctl[[i, j, d]]).collect())
                                .collect()
                        })
                        .collect()
                })
                .collect(),
            tie_groups: path.ties.groups.clone(),
            dim: path.dim,
        }
    }

    pub fn to_path(&self) -> Result<PathSpline> {
        let first = self.controls.first().ok_or_else(|| {
            Error::InvalidConfig("path spline data has no components".into())
        })?;
        let num_t = first.len();
        let num_theta = first.first().map(|r| r.len()).unwrap_or(0);
        let knots_t = KnotVector::clamped_uniform(self.degree_t, num_t)?;
        let knots_theta = KnotVector::clamped_uniform(self.degree_theta, num_theta)?;
        let mut controls = Vec::with_capacity(self.controls.len());
        for (k, comp) in self.controls.iter().enumerate() {
            let mut ctl = ndarray::Array3::zeros((num_t, num_theta, 3));
            if comp.len() != num_t {
                return Err(Error::ShapeMismatch {
                    context: "path spline time slices",
                    expected: num_t.to_string(),
                    got: format!("{} (component {k})", comp.len()),
                });
            }
            for (i, row) in comp.iter().enumerate() {
                if row.len() != num_theta {
                    return Err(Error::ShapeMismatch {
                        context: "path spline columns",
                        expected: num_theta.to_string(),
                        got: format!("{} (component {k}, slice {i})", row.len()),
                    });
                }
                for (j, coords) in row.iter().enumerate() {
                    for (d, &v) in coords.iter().take(3).enumerate() {
                        ctl[[i, j, d]] = v;
                    }
                }
            }
            controls.push(ctl);
        }
        Ok(PathSpline {
            knots_t,
            knots_theta,
            controls,
            ties: TieTable {
                groups: self.tie_groups.clone(),
            },
            dim: self.dim,
        })
    }
}

/// Complete matching result: re-loadable for rendering without re-solving.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultFile {
    pub format_version: u32,
    /// `sqrt(path energy)` in normalized units.
    pub distance: f64,
    /// Term breakdown at the optimum (exact TV in the `huber` slot).
    pub breakdown: SmoothedBreakdown,
    /// Factor the input coordinates were multiplied by before solving.
    pub normalization_scale: f64,
    pub dim: usize,
    pub path: PathSplineData,
    pub rho0: Vec<f64>,
    pub delta_rho: Vec<f64>,
    pub resample_counts: Vec<usize>,
    /// Target geometry in the same normalized coordinates as `path`.
    pub target: ShapeGraphFile,
    pub fit_residuals: Vec<f64>,
    pub stages: Vec<StageTrace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failed_stage: Option<(usize, String)>,
    /// Echo of the configuration that produced this result.
    pub config: ConfigFile,
}

pub const RESULT_FORMAT_VERSION: u32 = 1;

impl ResultFile {
    pub fn new(
        result: &MatchResult,
        config: &ConfigFile,
        target_normalized: &ShapeGraphSpec,
    ) -> Self {
        ResultFile {
            format_version: RESULT_FORMAT_VERSION,
            distance: result.distance,
            breakdown: result.breakdown,
            normalization_scale: result.normalization_scale,
            dim: result.dim,
            path: PathSplineData::from_path(&result.path),
            rho0: result.rho0.clone(),
            delta_rho: result.delta_rho.clone(),
            resample_counts: result.resample_counts.clone(),
            target: ShapeGraphFile::from_spec(target_normalized),
            fit_residuals: result.fit_residuals.clone(),
            stages: result.stages.clone(),
            failed_stage: result.failed_stage.clone(),
            config: config.clone(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: ResultFile = read_json(path)?;
        if file.format_version != RESULT_FORMAT_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported result format version {} (expected {RESULT_FORMAT_VERSION})",
                file.format_version
            )));
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// Per-stage solver checkpoints: the joint variable and energy terms after
/// each completed continuation stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub format_version: u32,
    pub stages: Vec<CheckpointStage>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointStage {
    pub stage: usize,
    pub gamma: f64,
    pub energy: f64,
    pub breakdown: SmoothedBreakdown,
    /// Joint variable: free control points (component-major, time-major,
    /// column-major, `dim` coordinates each), then `δρ`.
    pub z: Vec<f64>,
}

impl CheckpointFile {
    pub fn from_result(result: &MatchResult) -> Self {
        CheckpointFile {
            format_version: RESULT_FORMAT_VERSION,
            stages: result
                .stages
                .iter()
                .zip(&result.stage_z)
                .enumerate()
                .map(|(i, (trace, z))| CheckpointStage {
                    stage: i,
                    gamma: trace.gamma,
                    energy: trace.energy,
                    breakdown: trace.breakdown,
                    z: z.clone(),
                })
                .collect(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// Convenience: resample a spec and keep the weights alongside the geometry.
pub fn polygonal_to_file(graph: &crate::graph::PolygonalGraph) -> ShapeGraphFile {
    let soup = graph.component_polylines();
    let mut weights = Vec::new();
    let mut offset = 0;
    for chain in &soup {
        let n = chain.len() - 1;
        weights.push(graph.weights[offset..offset + n].to_vec());
        offset += n;
    }
    // Rebuild adjacency by gluing coincident endpoints, at a tolerance
    // proportional to the geometry's size.
    let diameter = geom::diameter(soup.iter().flatten());
    let tolerance = 1e-9 * diameter.max(1.0);
    let spec = crate::graph::split_components(&soup, tolerance).unwrap_or_else(|_| {
        ShapeGraphSpec::with_unit_weights(Vec::new(), AdjacencyMatrix::disconnected(0), graph.dim)
    });
    let mut file = ShapeGraphFile::from_spec(&spec);
    file.dim = graph.dim;
    file.weights = Some(weights);
    file.components = soup
        .iter()
        .map(|chain| chain.iter().map(|v| v[..graph.dim].to_vec()).collect())
        .collect();
    file
}
