//! Small fixed-dimension vector helpers.
//!
//! Points live in `R^3` internally; planar inputs are embedded with a zero
//! third coordinate, which is preserved exactly by every linear operation in
//! this crate.

/// A point or vector in `R^3`.
pub type Vec3 = [f64; 3];

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm_sq(a: Vec3) -> f64 {
    dot(a, a)
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    norm_sq(a).sqrt()
}

#[inline]
pub fn dist(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

#[inline]
pub fn midpoint(a: Vec3, b: Vec3) -> Vec3 {
    [
        (a[0] + b[0]) * 0.5,
        (a[1] + b[1]) * 0.5,
        (a[2] + b[2]) * 0.5,
    ]
}

/// Linear interpolation `a + t (b - a)`.
#[inline]
pub fn lerp(a: Vec3, b: Vec3, t: f64) -> Vec3 {
    [
        a[0] + t * (b[0] - a[0]),
        a[1] + t * (b[1] - a[1]),
        a[2] + t * (b[2] - a[2]),
    ]
}

/// Embed a `dim`-dimensional coordinate slice into `R^3`.
#[inline]
pub fn embed(coords: &[f64]) -> Vec3 {
    let mut p = [0.0; 3];
    p[..coords.len()].copy_from_slice(coords);
    p
}

/// Largest pairwise distance among `points`; 0 for fewer than two points.
pub fn diameter<'a, I>(points: I) -> f64
where
    I: IntoIterator<Item = &'a Vec3>,
{
    let pts: Vec<&Vec3> = points.into_iter().collect();
    let mut best = 0.0_f64;
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            best = best.max(dist(**a, **b));
        }
    }
    best
}
