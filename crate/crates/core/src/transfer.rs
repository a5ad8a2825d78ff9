//! Transfer functions: scalar to premultiplied color and opacity.

use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Rgb;

pub const LUT_SIZE: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub x: f64,
    pub rgba: [f64; 4],
}

impl ControlPoint {
    pub const fn new(x: f64, rgba: [f64; 4]) -> Self {
        ControlPoint { x, rgba }
    }
}

/// A classified sample. Emission is always opacity-weighted (premultiplied),
/// so `emission[c] <= opacity` for every channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassifiedSample {
    pub emission: Rgb,
    pub opacity: f64,
}

impl ClassifiedSample {
    pub const TRANSPARENT: ClassifiedSample = ClassifiedSample {
        emission: Rgb::new(0.0, 0.0, 0.0),
        opacity: 0.0,
    };

    pub fn new(emission: Rgb, opacity: f64) -> Self {
        ClassifiedSample { emission, opacity }
    }

    /// Rescales opacity to a different sampling distance, keeping the
    /// un-premultiplied color. `ratio` is `step / reference_step`.
    #[inline]
    pub fn opacity_corrected(&self, ratio: f64) -> ClassifiedSample {
        if self.opacity <= 0.0 {
            return ClassifiedSample::TRANSPARENT;
        }
        let alpha = correct_opacity(self.opacity, ratio);
        ClassifiedSample {
            emission: self.emission * (alpha / self.opacity),
            opacity: alpha,
        }
    }
}

/// `1 - (1 - alpha)^ratio`, the opacity of a segment `ratio` times as long.
#[inline]
pub fn correct_opacity(alpha: f64, ratio: f64) -> f64 {
    if alpha >= 1.0 {
        1.0
    } else if alpha <= 0.0 {
        0.0
    } else if ratio == 1.0 {
        alpha
    } else {
        1.0 - (1.0 - alpha).powf(ratio)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransferFunction {
    points: Vec<ControlPoint>,
    lut: Vec<[f64; 4]>,
}

impl TransferFunction {
    pub fn new(points: Vec<ControlPoint>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Parameter(
                "transfer function needs at least two control points".into(),
            ));
        }
        if points[0].x != 0.0 || points[points.len() - 1].x != 1.0 {
            return Err(Error::Parameter(
                "transfer function must start at 0.0 and end at 1.0".into(),
            ));
        }
        if points.windows(2).any(|w| !(w[0].x < w[1].x)) {
            return Err(Error::Parameter(
                "control points must be strictly increasing".into(),
            ));
        }
        if points
            .iter()
            .flat_map(|p| p.rgba)
            .any(|c| !(0.0..=1.0).contains(&c))
        {
            return Err(Error::Parameter(
                "control point components must lie in [0, 1]".into(),
            ));
        }

        let mut lut = Vec::with_capacity(LUT_SIZE);
        let mut seg = 0;
        for i in 0..LUT_SIZE {
            let x = i as f64 / (LUT_SIZE - 1) as f64;
            while seg + 2 < points.len() && x > points[seg + 1].x {
                seg += 1;
            }
            let (a, b) = (&points[seg], &points[seg + 1]);
            let t = ((x - a.x) / (b.x - a.x)).clamp(0.0, 1.0);
            lut.push(std::array::from_fn(|c| a.rgba[c] + (b.rgba[c] - a.rgba[c]) * t));
        }
        Ok(TransferFunction { points, lut })
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let points: Vec<ControlPoint> = serde_json::from_str(s)?;
        Self::new(points)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.points)?)
    }

    /// Built-in presets: `grayscale`, `engine`, `blob`, `transparent`.
    pub fn preset(name: &str) -> Result<Self> {
        let pts = match name {
            "grayscale" => vec![
                ControlPoint::new(0.0, [0.0, 0.0, 0.0, 0.0]),
                ControlPoint::new(1.0, [1.0, 1.0, 1.0, 1.0]),
            ],
            "engine" => vec![
                ControlPoint::new(0.0, [0.0, 0.0, 0.0, 0.0]),
                ControlPoint::new(0.25, [0.0, 0.0, 0.0, 0.0]),
                ControlPoint::new(0.4, [0.9, 0.55, 0.3, 0.08]),
                ControlPoint::new(0.7, [0.95, 0.9, 0.8, 0.6]),
                ControlPoint::new(1.0, [1.0, 1.0, 1.0, 0.9]),
            ],
            "blob" => vec![
                ControlPoint::new(0.0, [0.0, 0.0, 0.0, 0.0]),
                ControlPoint::new(0.1, [0.0, 0.0, 0.0, 0.0]),
                ControlPoint::new(0.5, [0.85, 0.75, 0.6, 0.25]),
                ControlPoint::new(1.0, [1.0, 1.0, 1.0, 0.8]),
            ],
            "transparent" => vec![
                ControlPoint::new(0.0, [0.0, 0.0, 0.0, 0.0]),
                ControlPoint::new(1.0, [1.0, 1.0, 1.0, 0.0]),
            ],
            other => {
                return Err(Error::Parameter(format!(
                    "unknown transfer function preset `{other}`"
                )))
            }
        };
        Self::new(pts)
    }

    pub fn control_points(&self) -> &[ControlPoint] {
        &self.points
    }

    pub fn lut(&self) -> &[[f64; 4]] {
        &self.lut
    }

    /// Stable content hash, used as a cache key.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for p in &self.points {
            p.x.to_bits().hash(&mut h);
            for c in p.rgba {
                c.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    /// Interpolated un-premultiplied RGBA at `s`.
    #[inline]
    pub fn rgba(&self, s: f64) -> [f64; 4] {
        let pos = s.clamp(0.0, 1.0) * (LUT_SIZE - 1) as f64;
        let i = (pos.floor() as usize).min(LUT_SIZE - 2);
        let t = pos - i as f64;
        let (a, b) = (&self.lut[i], &self.lut[i + 1]);
        std::array::from_fn(|c| a[c] * (1.0 - t) + b[c] * t)
    }

    #[inline]
    pub fn opacity(&self, s: f64) -> f64 {
        self.rgba(s)[3]
    }

    /// Classifies a scalar, returning premultiplied emission.
    #[inline]
    pub fn classify(&self, s: f64) -> ClassifiedSample {
        let [r, g, b, a] = self.rgba(s);
        ClassifiedSample {
            emission: Rgb::new(r * a, g * a, b * a),
            opacity: a,
        }
    }

    pub fn is_fully_transparent(&self) -> bool {
        self.lut.iter().all(|e| e[3] == 0.0)
    }
}
