//! Light-aligned proxy geometry for the unit cube.
//!
//! Planes are perpendicular to the light direction and placed at the centers
//! of `n` equal bins between the nearest and farthest cube vertex. Each plane
//! is intersected with the cube by walking the three monotone edge paths from
//! the vertex nearest the light to the one farthest away, plus the three
//! edges that connect those paths. Every level between the two extreme
//! vertices crosses each path exactly once, so the walk yields the polygon
//! without testing all twelve edges.

use crate::error::{Error, Result};
use crate::math::{cube_vertex, Vec3};

/// Coincident vertices closer than this are merged.
pub const DEDUP_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SliceStackSpec {
    light_dir: Vec3,
    n_slices: usize,
    d_min: f64,
    d_max: f64,
    offsets: Vec<f64>,
}

impl SliceStackSpec {
    pub fn light_dir(&self) -> Vec3 {
        self.light_dir
    }

    pub fn n_slices(&self) -> usize {
        self.n_slices
    }

    pub fn d_min(&self) -> f64 {
        self.d_min
    }

    pub fn d_max(&self) -> f64 {
        self.d_max
    }

    /// Distance between consecutive planes.
    pub fn spacing(&self) -> f64 {
        (self.d_max - self.d_min) / self.n_slices as f64
    }

    pub fn plane_offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn offset(&self, k: usize) -> f64 {
        self.offsets[k]
    }

    /// Continuous slice index `n (L.p - min) / (max - min)`. Points on plane
    /// `k` map to `k + 0.5`.
    #[inline]
    pub fn slice_index(&self, p: &Vec3) -> f64 {
        self.n_slices as f64 * (self.light_dir.dot(p) - self.d_min) / (self.d_max - self.d_min)
    }

    /// Slice index clamped to `[0, n - 1]` and floored.
    pub fn discrete_index(&self, p: &Vec3) -> usize {
        let idx = self.slice_index(p).clamp(0.0, (self.n_slices - 1) as f64);
        idx.floor() as usize
    }

    pub fn slice_polygon(&self, k: usize) -> Result<SlicePolygon> {
        if k >= self.n_slices {
            return Err(Error::Parameter(format!(
                "slice index {k} out of range for {} slices",
                self.n_slices
            )));
        }
        let mut poly = plane_cube_polygon(&self.light_dir, self.offsets[k]);
        poly.slice_index = k;
        Ok(poly)
    }

    pub fn polygons(&self) -> impl Iterator<Item = SlicePolygon> + '_ {
        (0..self.n_slices).map(|k| self.slice_polygon(k).expect("index in range"))
    }
}

/// `min` and `max` of `dir . V` over the 8 cube vertices.
pub fn cube_extent_along(dir: &Vec3) -> (f64, f64) {
    (0..8)
        .map(|i| dir.dot(&cube_vertex(i)))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| {
            (lo.min(d), hi.max(d))
        })
}

pub fn make_slice_stack(light_dir: Vec3, n_slices: usize) -> Result<SliceStackSpec> {
    let norm = light_dir.norm();
    if !(norm.is_finite() && norm > 1e-12) {
        return Err(Error::Parameter(format!(
            "light direction must be nonzero, got {light_dir:?}"
        )));
    }
    if n_slices == 0 {
        return Err(Error::Parameter("slice count must be at least 1".into()));
    }
    let dir = light_dir / norm;
    let (d_min, d_max) = cube_extent_along(&dir);
    let delta = (d_max - d_min) / n_slices as f64;
    let offsets = (0..n_slices)
        .map(|k| d_min + (k as f64 + 0.5) * delta)
        .collect();
    Ok(SliceStackSpec {
        light_dir: dir,
        n_slices,
        d_min,
        d_max,
        offsets,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlicePolygon {
    pub slice_index: usize,
    /// Fan-ordered vertices; empty when the plane only grazes the cube.
    pub vertices: Vec<Vec3>,
}

impl SlicePolygon {
    pub fn is_degenerate(&self) -> bool {
        self.vertices.len() < 3
    }

    pub fn triangle_count(&self) -> usize {
        self.vertices.len().saturating_sub(2)
    }

    /// Fan triangulation around vertex 0.
    pub fn triangles(&self) -> impl Iterator<Item = [Vec3; 3]> + '_ {
        (1..self.vertices.len().saturating_sub(1))
            .map(|i| [self.vertices[0], self.vertices[i], self.vertices[i + 1]])
    }

    pub fn area(&self) -> f64 {
        self.triangles()
            .map(|[a, b, c]| 0.5 * (b - a).cross(&(c - a)).norm())
            .sum()
    }

    pub fn centroid(&self) -> Option<Vec3> {
        if self.vertices.is_empty() {
            return None;
        }
        Some(self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64)
    }
}

/// Point where `normal . p == offset` crosses the edge `a -> b`, if the edge
/// is not parallel to the plane and the level lies within it.
#[inline]
fn edge_hit(normal: &Vec3, offset: f64, a: usize, b: usize) -> Option<Vec3> {
    let (pa, pb) = (cube_vertex(a), cube_vertex(b));
    let (da, db) = (normal.dot(&pa), normal.dot(&pb));
    let (lo, hi) = if da <= db { (da, db) } else { (db, da) };
    if hi - lo <= 0.0 || offset < lo || offset > hi {
        return None;
    }
    let t = ((offset - da) / (db - da)).clamp(0.0, 1.0);
    Some(pa + (pb - pa) * t)
}

/// Intersects the plane `normal . p == offset` with the unit cube. `normal`
/// must be unit length. Vertices are deduplicated and ordered by angle around
/// the centroid.
pub fn plane_cube_polygon(normal: &Vec3, offset: f64) -> SlicePolygon {
    // Vertex nearest along `normal`: set a coordinate bit where the normal is negative.
    let near = (0..3).fold(0usize, |acc, i| {
        if normal[i] < 0.0 {
            acc | (1 << i)
        } else {
            acc
        }
    });
    let far = near ^ 7;

    let mut candidates: Vec<Vec3> = Vec::with_capacity(6);
    for axis in 0..3 {
        let first = 1 << axis;
        let second = 1 << ((axis + 1) % 3);
        let third = 1 << ((axis + 2) % 3);
        let v1 = near ^ first;
        let v2 = v1 ^ second;
        let path = [(near, v1), (v1, v2), (v2, far)];
        if let Some(p) = path.iter().find_map(|&(a, b)| edge_hit(normal, offset, a, b)) {
            candidates.push(p);
        }
        // connecting edge from this path's first vertex onto the path two axes on
        if let Some(p) = edge_hit(normal, offset, v1, v1 ^ third) {
            candidates.push(p);
        }
    }

    let vertices = order_convex(dedup(candidates), normal);
    SlicePolygon {
        slice_index: 0,
        vertices: if vertices.len() >= 3 { vertices } else { Vec::new() },
    }
}

fn dedup(points: Vec<Vec3>) -> Vec<Vec3> {
    let mut out: Vec<Vec3> = Vec::with_capacity(points.len());
    for p in points {
        if out.iter().all(|q| (q - p).norm() > DEDUP_EPS) {
            out.push(p);
        }
    }
    out
}

/// Sorts coplanar points counter-clockwise around their centroid as seen
/// looking against `normal`.
fn order_convex(mut points: Vec<Vec3>, normal: &Vec3) -> Vec<Vec3> {
    if points.len() < 3 {
        return points;
    }
    let c = points.iter().sum::<Vec3>() / points.len() as f64;
    let u = crate::math::any_perpendicular(normal);
    let v = normal.cross(&u);
    let angle = |p: &Vec3| {
        let d = p - c;
        d.dot(&v).atan2(d.dot(&u))
    };
    points.sort_by(|a, b| angle(a).total_cmp(&angle(b)));
    points
}
