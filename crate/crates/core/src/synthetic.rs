//! Procedural test volumes.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::VolumeDataset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticShape {
    /// Sum of random Gaussian blobs.
    SphereBlob,
    /// Opaque block floating above a thinner floor plate.
    Slab,
    /// Block drilled with a grid of cylindrical holes and a cross bore.
    EngineBlock,
    Empty,
}

impl SyntheticShape {
    pub const ALL: [SyntheticShape; 4] = [
        SyntheticShape::SphereBlob,
        SyntheticShape::Slab,
        SyntheticShape::EngineBlock,
        SyntheticShape::Empty,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SyntheticShape::SphereBlob => "sphere-blob",
            SyntheticShape::Slab => "slab",
            SyntheticShape::EngineBlock => "engine-block",
            SyntheticShape::Empty => "empty",
        }
    }
}

impl FromStr for SyntheticShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SyntheticShape::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown synthetic shape `{s}`")))
    }
}

impl fmt::Display for SyntheticShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Generates a cubic `size`³ volume. Only the blob shape uses `seed`.
pub fn generate(shape: SyntheticShape, size: usize, seed: u64) -> Result<VolumeDataset> {
    if size < 2 {
        return Err(Error::Parameter(format!("synthetic volume size must be at least 2, got {size}")));
    }
    match shape {
        SyntheticShape::SphereBlob => sphere_blob(size, seed),
        SyntheticShape::Slab => slab(size),
        SyntheticShape::EngineBlock => engine_block(size),
        SyntheticShape::Empty => VolumeDataset::from_fn([size; 3], |_, _, _| 0.0),
    }
}

#[inline]
fn unit(i: usize, size: usize) -> f64 {
    i as f64 / (size - 1) as f64
}

/// Soft inside test: 1 well inside, 0 well outside, linear ramp of width `w` at the border.
#[inline]
fn soft(signed_dist: f64, w: f64) -> f64 {
    (0.5 - signed_dist / w).clamp(0.0, 1.0)
}

#[inline]
fn box_dist(p: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> f64 {
    (0..3)
        .map(|a| (lo[a] - p[a]).max(p[a] - hi[a]))
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn sphere_blob(size: usize, seed: u64) -> Result<VolumeDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blobs: Vec<([f64; 3], f64, f64)> = (0..8)
        .map(|_| {
            let c = [
                rng.random_range(0.25..0.75),
                rng.random_range(0.25..0.75),
                rng.random_range(0.25..0.75),
            ];
            let sigma = rng.random_range(0.07..0.16);
            let amp = rng.random_range(0.4..1.0);
            (c, sigma, amp)
        })
        .collect();
    VolumeDataset::from_fn([size; 3], |x, y, z| {
        let p = [unit(x, size), unit(y, size), unit(z, size)];
        let v: f64 = blobs
            .iter()
            .map(|(c, s, a)| {
                let d2 = (0..3).map(|i| (p[i] - c[i]).powi(2)).sum::<f64>();
                a * (-d2 / (2.0 * s * s)).exp()
            })
            .sum();
        v.min(1.0) as f32
    })
}

pub fn slab(size: usize) -> Result<VolumeDataset> {
    let w = 1.5 / (size - 1) as f64;
    VolumeDataset::from_fn([size; 3], |x, y, z| {
        let p = [unit(x, size), unit(y, size), unit(z, size)];
        let block = soft(box_dist(p, [0.3, 0.6, 0.3], [0.7, 0.75, 0.7]), w);
        let plate = soft(box_dist(p, [0.05, 0.1, 0.05], [0.95, 0.18, 0.95]), w) * 0.6;
        block.max(plate) as f32
    })
}

pub fn engine_block(size: usize) -> Result<VolumeDataset> {
    let w = 1.5 / (size - 1) as f64;
    VolumeDataset::from_fn([size; 3], |x, y, z| {
        let p = [unit(x, size), unit(y, size), unit(z, size)];
        let mut d = box_dist(p, [0.15, 0.25, 0.2], [0.85, 0.75, 0.8]);
        // vertical holes on a 3x3 grid
        for cx in [0.3, 0.5, 0.7] {
            for cz in [0.35, 0.5, 0.65] {
                let r = ((p[0] - cx).powi(2) + (p[2] - cz).powi(2)).sqrt();
                d = d.max(0.045 - r);
            }
        }
        // bore along x
        let r = ((p[1] - 0.5).powi(2) + (p[2] - 0.5).powi(2)).sqrt();
        d = d.max(0.1 - r);
        let shell = soft(d, w);
        // denser core material around the bore
        let core = if r < 0.16 { 0.9 } else { 0.65 };
        (shell * core) as f32
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in SyntheticShape::ALL {
            assert_eq!(s.as_str().parse::<SyntheticShape>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{s}\""));
        }
        assert!("torus".parse::<SyntheticShape>().is_err());
    }

    #[test]
    fn blob_is_seeded() {
        let a = generate(SyntheticShape::SphereBlob, 12, 7).unwrap();
        let b = generate(SyntheticShape::SphereBlob, 12, 7).unwrap();
        let c = generate(SyntheticShape::SphereBlob, 12, 8).unwrap();
        assert_eq!(a.data(), b.data());
        assert_ne!(a.data(), c.data());
    }

    #[test]
    fn shapes_have_expected_content() {
        for s in SyntheticShape::ALL {
            let v = generate(s, 16, 1).unwrap();
            assert_eq!(v.dims(), [16; 3]);
            let max = v.data().iter().copied().fold(0.0f32, f32::max);
            if s == SyntheticShape::Empty {
                assert_eq!(max, 0.0);
            } else {
                assert!(max > 0.3, "{s}: {max}");
                // corners stay (nearly) empty
                assert!(v.voxel(0, 15, 0) < 0.1, "{s}");
            }
        }
        let e = engine_block(33).unwrap();
        // center of a vertical hole is empty, solid material next to it
        assert_eq!(e.voxel(16, 16, 16), 0.0);
        assert!(e.voxel(13, 10, 13) > 0.5);
        assert!(generate(SyntheticShape::Slab, 1, 0).is_err());
    }
}
