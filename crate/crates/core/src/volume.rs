//! Scalar volumes: raw loading, normalization and reconstruction.
//!
//! Voxels are stored x-fastest (`x + nx * (y + ny * z)`) and normalized to
//! `[0, 1]` on load. The volume occupies an axis-aligned box inside the unit
//! cube: the longest physical axis spans `[0, 1]`, shorter axes are centered.
//! Voxel values sit on the grid nodes, so voxel `(0, 0, 0)` of a cubic volume
//! lives at the world origin and voxel `(n-1, n-1, n-1)` at `(1, 1, 1)`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarType {
    U8,
    U16,
    F32,
}

impl ScalarType {
    pub fn size_of(self) -> usize {
        match self {
            ScalarType::U8 => 1,
            ScalarType::U16 => 2,
            ScalarType::F32 => 4,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "u8" => Ok(ScalarType::U8),
            "u16" => Ok(ScalarType::U16),
            "f32" => Ok(ScalarType::F32),
            other => Err(Error::Format(format!("unsupported scalar type `{other}`"))),
        }
    }
}

fn default_spacing() -> [f64; 3] {
    [1.0, 1.0, 1.0]
}

/// Sidecar metadata describing a `.raw` file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeDescriptor {
    pub dims: [usize; 3],
    /// Kept as a string so that an unknown type surfaces as a format error
    /// rather than a generic parse failure.
    pub scalar_type: String,
    #[serde(default = "default_spacing")]
    pub spacing: [f64; 3],
}

impl VolumeDescriptor {
    pub fn new(dims: [usize; 3], scalar_type: ScalarType) -> Self {
        VolumeDescriptor {
            dims,
            scalar_type: match scalar_type {
                ScalarType::U8 => "u8",
                ScalarType::U16 => "u16",
                ScalarType::F32 => "f32",
            }
            .to_string(),
            spacing: default_spacing(),
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Descriptor(format!("{}: {e}", path.display())))
    }

    pub fn scalar_type(&self) -> Result<ScalarType> {
        ScalarType::parse(&self.scalar_type)
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.iter().product()
    }

    fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < 2) {
            return Err(Error::Descriptor(format!(
                "every dimension must be at least 2, got {:?}",
                self.dims
            )));
        }
        if self.spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::Descriptor(format!(
                "spacing must be positive, got {:?}",
                self.spacing
            )));
        }
        Ok(())
    }
}

/// Path of the JSON descriptor that accompanies a `.raw` file.
pub fn sidecar_path(raw: &Path) -> PathBuf {
    raw.with_extension("json")
}

#[derive(Clone, Debug)]
pub struct VolumeDataset {
    dims: [usize; 3],
    spacing: [f64; 3],
    scalar_type: ScalarType,
    data: Vec<f32>,
    value_range: (f64, f64),
    /// World-space size of the volume box along each axis.
    extent: Vec3,
    /// World-space position of voxel (0, 0, 0).
    origin: Vec3,
}

impl VolumeDataset {
    /// Builds a dataset from values already normalized to `[0, 1]`.
    pub fn from_normalized(dims: [usize; 3], spacing: [f64; 3], data: Vec<f32>) -> Result<Self> {
        let desc = VolumeDescriptor {
            dims,
            scalar_type: "f32".into(),
            spacing,
        };
        desc.validate()?;
        if data.len() != desc.voxel_count() {
            return Err(Error::Descriptor(format!(
                "expected {} voxels, got {}",
                desc.voxel_count(),
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Parameter(format!(
                "normalized voxel value {bad} outside [0, 1]"
            )));
        }
        Ok(Self::assemble(dims, spacing, ScalarType::F32, data, (0.0, 1.0)))
    }

    /// Fills a cubic-spaced volume from a function of the voxel index.
    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f32) -> Result<Self> {
        let mut data = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z).clamp(0.0, 1.0));
                }
            }
        }
        Self::from_normalized(dims, default_spacing(), data)
    }

    fn assemble(
        dims: [usize; 3],
        spacing: [f64; 3],
        scalar_type: ScalarType,
        data: Vec<f32>,
        value_range: (f64, f64),
    ) -> Self {
        let physical = Vec3::from_fn(|i, _| (dims[i] - 1) as f64 * spacing[i]);
        let longest = physical.max();
        let extent = physical / longest;
        let origin = extent.map(|e| 0.5 * (1.0 - e));
        VolumeDataset {
            dims,
            spacing,
            scalar_type,
            data,
            value_range,
            extent,
            origin,
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn scalar_type(&self) -> ScalarType {
        self.scalar_type
    }

    /// Range of the raw values before normalization.
    pub fn value_range(&self) -> (f64, f64) {
        self.value_range
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn extent(&self) -> Vec3 {
        self.extent
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    /// World-space distance between neighbouring voxels along the longest axis.
    pub fn voxel_size(&self) -> f64 {
        (0..3)
            .map(|i| self.extent[i] / (self.dims[i] - 1) as f64)
            .fold(f64::INFINITY, f64::min)
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn voxel(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.index(x, y, z)] as f64
    }

    /// World position of a voxel node.
    pub fn voxel_position(&self, x: usize, y: usize, z: usize) -> Vec3 {
        let idx = [x, y, z];
        Vec3::from_fn(|i, _| {
            self.origin[i] + self.extent[i] * idx[i] as f64 / (self.dims[i] - 1) as f64
        })
    }

    /// Continuous grid coordinate of a world position, or `None` outside the box.
    #[inline]
    fn grid_coord(&self, p: &Vec3) -> Option<[f64; 3]> {
        const EPS: f64 = 1e-9;
        let mut g = [0.0; 3];
        for i in 0..3 {
            let n1 = (self.dims[i] - 1) as f64;
            let c = (p[i] - self.origin[i]) / self.extent[i] * n1;
            if !(c >= -EPS * n1 && c <= n1 * (1.0 + EPS)) {
                return None;
            }
            g[i] = c;
        }
        Some(g)
    }

    #[inline]
    fn interpolate(&self, g: [f64; 3]) -> f64 {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for i in 0..3 {
            let n1 = self.dims[i] - 1;
            let mut c = g[i].clamp(0.0, n1 as f64);
            let r = c.round();
            if (c - r).abs() < 1e-9 {
                c = r;
            }
            let b = (c.floor() as usize).min(n1 - 1);
            base[i] = b;
            frac[i] = c - b as f64;
        }
        let [x, y, z] = base;
        let [fx, fy, fz] = frac;
        let sx = 1;
        let sy = self.dims[0];
        let sz = self.dims[0] * self.dims[1];
        let i0 = self.index(x, y, z);
        let d = &self.data;
        let lerp = |a: f32, b: f32, t: f64| a as f64 * (1.0 - t) + b as f64 * t;
        let c00 = lerp(d[i0], d[i0 + sx], fx);
        let c10 = lerp(d[i0 + sy], d[i0 + sy + sx], fx);
        let c01 = lerp(d[i0 + sz], d[i0 + sz + sx], fx);
        let c11 = lerp(d[i0 + sz + sy], d[i0 + sz + sy + sx], fx);
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        c0 * (1.0 - fz) + c1 * fz
    }

    /// Trilinear reconstruction; zero outside the volume box.
    #[inline]
    pub fn sample_trilinear(&self, p: &Vec3) -> f64 {
        match self.grid_coord(p) {
            Some(g) => self.interpolate(g),
            None => 0.0,
        }
    }

    /// Trilinear reconstruction with the position clamped into the box.
    fn sample_clamped(&self, p: &Vec3) -> f64 {
        let g: [f64; 3] = std::array::from_fn(|i| {
            let n1 = (self.dims[i] - 1) as f64;
            ((p[i] - self.origin[i]) / self.extent[i] * n1).clamp(0.0, n1)
        });
        self.interpolate(g)
    }

    fn clamp_to_box(&self, p: Vec3) -> Vec3 {
        Vec3::from_fn(|i, _| p[i].clamp(self.origin[i], self.origin[i] + self.extent[i]))
    }

    /// Central-difference gradient in world units, one voxel step per axis.
    /// Near the boundary the stencil is clamped into the box, which turns it
    /// into a one-sided difference.
    pub fn gradient(&self, p: &Vec3) -> Vec3 {
        let p = self.clamp_to_box(*p);
        let mut g = Vec3::zeros();
        for axis in 0..3 {
            let h = self.extent[axis] / (self.dims[axis] - 1) as f64;
            let mut hi = p;
            let mut lo = p;
            hi[axis] += h;
            lo[axis] -= h;
            let hi = self.clamp_to_box(hi);
            let lo = self.clamp_to_box(lo);
            let dist = hi[axis] - lo[axis];
            if dist > 0.0 {
                g[axis] = (self.sample_clamped(&hi) - self.sample_clamped(&lo)) / dist;
            }
        }
        g
    }

    /// Writes the normalized values as a raw file plus JSON sidecar.
    pub fn write_raw(&self, path: &Path, scalar_type: ScalarType) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.data.len() * scalar_type.size_of());
        for &v in &self.data {
            match scalar_type {
                ScalarType::U8 => bytes.push((v * 255.0).round() as u8),
                ScalarType::U16 => {
                    bytes.extend_from_slice(&((v * 65535.0).round() as u16).to_le_bytes())
                }
                ScalarType::F32 => bytes.extend_from_slice(&v.to_le_bytes()),
            }
        }
        fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
        let mut desc = VolumeDescriptor::new(self.dims, scalar_type);
        desc.spacing = self.spacing;
        let sidecar = sidecar_path(path);
        let json = serde_json::to_string_pretty(&desc)?;
        fs::write(&sidecar, json).map_err(|e| Error::io(&sidecar, e))
    }
}

/// Loads a tightly packed little-endian raw volume.
///
/// Integer types are divided by their type maximum; `f32` data is min-max
/// normalized (a constant field normalizes to zero).
pub fn load_raw(path: &Path, desc: &VolumeDescriptor) -> Result<VolumeDataset> {
    desc.validate()?;
    let scalar_type = desc.scalar_type()?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = desc.voxel_count() * scalar_type.size_of();
    if bytes.len() != expected {
        return Err(Error::Descriptor(format!(
            "{}: expected {expected} bytes for dims {:?} of {}, found {}",
            path.display(),
            desc.dims,
            desc.scalar_type,
            bytes.len()
        )));
    }

    let (data, range) = match scalar_type {
        ScalarType::U8 => {
            let data: Vec<f32> = bytes.iter().map(|&b| b as f32 / 255.0).collect();
            (data, minmax(bytes.iter().map(|&b| b as f64)))
        }
        ScalarType::U16 => {
            let raw: Vec<u16> = bytes
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect();
            let data = raw.iter().map(|&v| v as f32 / 65535.0).collect();
            (data, minmax(raw.iter().map(|&v| v as f64)))
        }
        ScalarType::F32 => {
            let raw: Vec<f32> = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if raw.iter().any(|v| !v.is_finite()) {
                return Err(Error::Format(format!(
                    "{}: non-finite f32 voxel",
                    path.display()
                )));
            }
            let (lo, hi) = minmax(raw.iter().map(|&v| v as f64));
            let span = hi - lo;
            let data = raw
                .iter()
                .map(|&v| {
                    if span > 0.0 {
                        (((v as f64 - lo) / span) as f32).clamp(0.0, 1.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            (data, (lo, hi))
        }
    };
    Ok(VolumeDataset::assemble(
        desc.dims,
        desc.spacing,
        scalar_type,
        data,
        range,
    ))
}

/// Loads `path` using the descriptor found next to it.
pub fn load_raw_with_sidecar(path: &Path) -> Result<VolumeDataset> {
    let desc = VolumeDescriptor::from_json_file(&sidecar_path(path))?;
    load_raw(path, &desc)
}

fn minmax(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_tmp(dir: &tempfile::TempDir, name: &str, bytes: &[u8]) -> PathBuf {
        let p = dir.path().join(name);
        fs::write(&p, bytes).unwrap();
        p
    }

    #[test]
    fn loads_zero_volume() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "z.raw", &[0u8; 8]);
        let v = load_raw(&p, &VolumeDescriptor::new([2, 2, 2], ScalarType::U8)).unwrap();
        assert!(v.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn index_arithmetic_matches_layout() {
        let dir = tempfile::tempdir().unwrap();
        let bytes: Vec<u8> = (0..8).collect();
        let p = write_tmp(&dir, "seq.raw", &bytes);
        let v = load_raw(&p, &VolumeDescriptor::new([2, 2, 2], ScalarType::U8)).unwrap();
        // x + nx * (y + ny * z) = 1 + 2 * (1 + 2 * 1) = 7
        assert!((v.voxel(1, 1, 1) - 7.0 / 255.0).abs() < 1e-7);
        assert_eq!(v.voxel(1, 0, 0), (1.0f32 / 255.0) as f64);
        assert_eq!(v.value_range(), (0.0, 7.0));
    }

    #[test]
    fn u16_and_f32_normalization() {
        let dir = tempfile::tempdir().unwrap();
        let vals: Vec<u16> = vec![0, 65535, 1000, 2000, 0, 0, 0, 0];
        let bytes: Vec<u8> = vals.iter().flat_map(|v| v.to_le_bytes()).collect();
        let p = write_tmp(&dir, "a.raw", &bytes);
        let v = load_raw(&p, &VolumeDescriptor::new([2, 2, 2], ScalarType::U16)).unwrap();
        assert_eq!(v.voxel(1, 0, 0), 1.0);

        let vals: Vec<f32> = vec![-2.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let bytes: Vec<u8> = vals.iter().flat_map(|v| v.to_le_bytes()).collect();
        let p = write_tmp(&dir, "b.raw", &bytes);
        let v = load_raw(&p, &VolumeDescriptor::new([2, 2, 2], ScalarType::F32)).unwrap();
        assert_eq!(v.voxel(0, 0, 0), 0.0);
        assert_eq!(v.voxel(1, 0, 0), 1.0);
        assert_eq!(v.voxel(0, 1, 0), 0.5);
        assert_eq!(v.value_range(), (-2.0, 2.0));
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "short.raw", &[0u8; 7]);
        let desc = VolumeDescriptor::new([2, 2, 2], ScalarType::U8);
        assert!(matches!(load_raw(&p, &desc), Err(Error::Descriptor(_))));

        let mut bad = desc.clone();
        bad.scalar_type = "f64".into();
        assert!(matches!(load_raw(&p, &bad), Err(Error::Format(_))));

        let missing = dir.path().join("missing.raw");
        assert!(matches!(load_raw(&missing, &desc), Err(Error::Io { .. })));

        let flat = VolumeDescriptor::new([1, 2, 2], ScalarType::U8);
        assert!(matches!(load_raw(&p, &flat), Err(Error::Descriptor(_))));
    }

    #[test]
    fn engine_sized_volume_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_tmp(&dir, "engine.raw", &vec![0u8; 256 * 256 * 256]);
        let v = load_raw(&p, &VolumeDescriptor::new([256, 256, 256], ScalarType::U8)).unwrap();
        assert_eq!(v.data().len(), 16_777_216);
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = VolumeDataset::from_fn([3, 4, 5], |x, y, z| ((x + y + z) % 3) as f32 / 2.0).unwrap();
        let p = dir.path().join("vol.raw");
        v.write_raw(&p, ScalarType::U16).unwrap();
        let back = load_raw_with_sidecar(&p).unwrap();
        assert_eq!(back.dims(), [3, 4, 5]);
        for (a, b) in v.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn anisotropic_box_is_centered() {
        let v = VolumeDataset::from_normalized([5, 3, 2], [1.0, 1.0, 2.0], vec![0.0; 30]).unwrap();
        // physical extents: 4, 2, 2 -> 1, 0.5, 0.5
        assert!((v.extent() - Vec3::new(1.0, 0.5, 0.5)).norm() < 1e-12);
        assert!((v.origin() - Vec3::new(0.0, 0.25, 0.25)).norm() < 1e-12);
    }

    #[test]
    fn constant_field_samples_constant() {
        let v = VolumeDataset::from_fn([4, 4, 4], |_, _, _| 0.5).unwrap();
        for p in [Vec3::new(0.1, 0.2, 0.3), Vec3::new(0.5, 0.5, 0.5), Vec3::new(0.99, 0.0, 1.0)] {
            assert!((v.sample_trilinear(&p) - 0.5).abs() < 1e-12);
        }
        assert_eq!(v.sample_trilinear(&Vec3::new(1.5, 0.5, 0.5)), 0.0);
        assert_eq!(v.sample_trilinear(&Vec3::new(0.5, -0.01, 0.5)), 0.0);
    }

    #[test]
    fn voxel_node_returns_stored_value() {
        let v = VolumeDataset::from_fn([5, 6, 7], |x, y, z| ((x * 7 + y * 3 + z) % 11) as f32 / 10.0)
            .unwrap();
        for z in 0..7 {
            for y in 0..6 {
                for x in 0..5 {
                    let p = v.voxel_position(x, y, z);
                    assert_eq!(v.sample_trilinear(&p), v.voxel(x, y, z));
                }
            }
        }
    }

    #[test]
    fn cube_center_is_corner_mean() {
        // Hand-evaluated trilinear weights at the center are all 1/8.
        let corners = [0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 0.0, 1.0];
        let v = VolumeDataset::from_fn([2, 2, 2], |x, y, z| corners[x + 2 * (y + 2 * z)]).unwrap();
        let mean: f64 = corners.iter().map(|&c| c as f64).sum::<f64>() / 8.0;
        assert!((v.sample_trilinear(&Vec3::new(0.5, 0.5, 0.5)) - mean).abs() < 1e-12);
    }

    #[test]
    fn gradient_cases() {
        let c = VolumeDataset::from_fn([4, 4, 4], |_, _, _| 0.3).unwrap();
        assert_eq!(c.gradient(&Vec3::new(0.4, 0.5, 0.6)), Vec3::zeros());

        let n = 9;
        let ramp = VolumeDataset::from_fn([n, n, n], |x, _, _| x as f32 / (n - 1) as f32).unwrap();
        let g = ramp.gradient(&Vec3::new(0.43, 0.51, 0.37));
        assert!((g - Vec3::x()).norm() < 1e-6, "{g:?}");

        let edge = ramp.gradient(&Vec3::new(0.0, 0.0, 0.0));
        assert!(edge.iter().all(|c| c.is_finite()));
        assert!((edge.x - 1.0).abs() < 1e-6);
    }
}
