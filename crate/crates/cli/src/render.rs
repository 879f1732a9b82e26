//! SVG rendering of geodesic frames.
//!
//! Each frame becomes one SVG: every edge is a line whose stroke opacity is
//! `clamp(ρ, 0, 1)`, so erased parts fade out. The target is overlaid in a
//! second color on the final frame. 3D geometry is projected orthographically
//! onto the selected plane.

use std::path::{Path, PathBuf};

use sge_core::geom::Vec3;
use sge_core::{PolygonalGraph, ShapeGraphSpec};

use crate::Plane;

const SOURCE_COLOR: &str = "#1f6fb4";
const TARGET_COLOR: &str = "#d0342c";

fn project(p: Vec3, plane: Plane) -> (f64, f64) {
    match plane {
        Plane::Xy => (p[0], p[1]),
        Plane::Xz => (p[0], p[2]),
        Plane::Yz => (p[1], p[2]),
    }
}

struct Bounds {
    min_x: f64,
    min_y: f64,
    max_x: f64,
    max_y: f64,
}

impl Bounds {
    fn new() -> Self {
        Bounds {
            min_x: f64::INFINITY,
            min_y: f64::INFINITY,
            max_x: f64::NEG_INFINITY,
            max_y: f64::NEG_INFINITY,
        }
    }

    fn include(&mut self, (x, y): (f64, f64)) {
        self.min_x = self.min_x.min(x);
        self.min_y = self.min_y.min(y);
        self.max_x = self.max_x.max(x);
        self.max_y = self.max_y.max(y);
    }

    fn extent(&self) -> f64 {
        (self.max_x - self.min_x).max(self.max_y - self.min_y).max(1e-9)
    }
}

fn polyline_segments(chain: &[Vec3], weights: &[f64], plane: Plane, bounds: &Bounds, color: &str) -> String {
    let mut out = String::new();
    // SVG y grows downward; flip within the bounding box.
    let flip = |y: f64| bounds.max_y - y + bounds.min_y;
    for (i, pair) in chain.windows(2).enumerate() {
        let (x1, y1) = project(pair[0], plane);
        let (x2, y2) = project(pair[1], plane);
        let opacity = weights.get(i).copied().unwrap_or(1.0).clamp(0.0, 1.0);
        out.push_str(&format!(
            r#"    <line x1="{x1}" y1="{}" x2="{x2}" y2="{}" stroke="{color}" stroke-opacity="{opacity}"/>{}"#,
            flip(y1),
            flip(y2),
            '\n'
        ));
    }
    out
}

/// Write one SVG per time; returns the written paths.
pub fn render_frames(
    frames: &[PolygonalGraph],
    times: &[f64],
    target: &ShapeGraphSpec,
    plane: Plane,
    out_dir: &Path,
) -> std::io::Result<Vec<PathBuf>> {
    let mut bounds = Bounds::new();
    for frame in frames {
        for chain in &frame.vertices {
            for &v in chain {
                bounds.include(project(v, plane));
            }
        }
    }
    for comp in &target.components {
        for &v in &comp.vertices {
            bounds.include(project(v, plane));
        }
    }
    let margin = 0.05 * bounds.extent();
    bounds.min_x -= margin;
    bounds.min_y -= margin;
    bounds.max_x += margin;
    bounds.max_y += margin;
    let stroke = 0.008 * bounds.extent();

    let mut written = Vec::with_capacity(frames.len());
    let last = frames.len() - 1;
    for (fi, (frame, &t)) in frames.iter().zip(times).enumerate() {
        let mut body = String::new();
        body.push_str(&format!(
            "  <g fill=\"none\" stroke-width=\"{stroke}\" stroke-linecap=\"round\">\n"
        ));
        let mut offset = 0;
        for chain in &frame.vertices {
            let n = chain.len() - 1;
            body.push_str(&polyline_segments(
                chain,
                &frame.weights[offset..offset + n],
                plane,
                &bounds,
                SOURCE_COLOR,
            ));
            offset += n;
        }
        if fi == last {
            for (ci, comp) in target.components.iter().enumerate() {
                let weights = &target.weights.per_component[ci];
                body.push_str(&polyline_segments(
                    &comp.vertices,
                    weights,
                    plane,
                    &bounds,
                    TARGET_COLOR,
                ));
            }
        }
        body.push_str("  </g>\n");
        let svg = format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"{} {} {} {}\">\n<!-- t = {t} -->\n{body}</svg>\n",
            bounds.min_x,
            bounds.min_y,
            bounds.max_x - bounds.min_x,
            bounds.max_y - bounds.min_y,
        );
        let path = out_dir.join(format!("frame_{fi:03}.svg"));
        std::fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}
