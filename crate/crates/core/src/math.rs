//! Small geometric helpers shared by the renderers.

use nalgebra::{Matrix4, Vector3};

pub type Vec3 = Vector3<f64>;
pub type Mat4 = Matrix4<f64>;
/// Linear RGB triple.
pub type Rgb = Vector3<f64>;

/// The 8 corners of the unit cube, indexed by bits `x | y << 1 | z << 2`.
pub const UNIT_CUBE_VERTICES: [[f64; 3]; 8] = [
    [0.0, 0.0, 0.0],
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [1.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [1.0, 0.0, 1.0],
    [0.0, 1.0, 1.0],
    [1.0, 1.0, 1.0],
];

/// The 12 edges of the unit cube as vertex index pairs.
pub const UNIT_CUBE_EDGES: [(usize, usize); 12] = [
    (0, 1),
    (2, 3),
    (4, 5),
    (6, 7),
    (0, 2),
    (1, 3),
    (4, 6),
    (5, 7),
    (0, 4),
    (1, 5),
    (2, 6),
    (3, 7),
];

#[inline]
pub fn cube_vertex(i: usize) -> Vec3 {
    let v = UNIT_CUBE_VERTICES[i];
    Vec3::new(v[0], v[1], v[2])
}

#[inline]
pub fn inside_unit_cube(p: &Vec3, eps: f64) -> bool {
    p.iter().all(|&c| c >= -eps && c <= 1.0 + eps)
}

#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: Vec3,
    pub dir: Vec3,
}

impl Ray {
    pub fn new(origin: Vec3, dir: Vec3) -> Self {
        Ray { origin, dir }
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.dir * t
    }

    /// Slab test against the unit cube. Returns the parametric entry/exit
    /// interval clipped to `t >= 0`.
    pub fn intersect_unit_cube(&self) -> Option<(f64, f64)> {
        let mut t0 = 0.0_f64;
        let mut t1 = f64::INFINITY;
        for axis in 0..3 {
            let o = self.origin[axis];
            let d = self.dir[axis];
            if d.abs() < 1e-300 {
                if !(0.0..=1.0).contains(&o) {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d;
            let (mut near, mut far) = ((0.0 - o) * inv, (1.0 - o) * inv);
            if near > far {
                std::mem::swap(&mut near, &mut far);
            }
            t0 = t0.max(near);
            t1 = t1.min(far);
            if t0 > t1 {
                return None;
            }
        }
        Some((t0, t1))
    }
}

/// Any unit vector perpendicular to `v` (assumed normalized).
pub fn any_perpendicular(v: &Vec3) -> Vec3 {
    let helper = if v.y.abs() < 0.9 {
        Vec3::y()
    } else {
        Vec3::z()
    };
    (helper - v * v.dot(&helper)).normalize()
}
