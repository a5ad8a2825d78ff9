//! Premultiplied RGBA float images plus PNG/PPM IO and diff metrics.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::Cursor;
use std::path::Path;

use ::image::{ImageFormat, Rgba, RgbaImage};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    /// Row-major, row 0 at the top, premultiplied alpha.
    pixels: Vec<[f32; 4]>,
}

impl Image {
    /// Transparent black image.
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            pixels: vec![[0.0; 4]; width * height],
        }
    }

    pub fn from_pixels(width: usize, height: usize, pixels: Vec<[f32; 4]>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Parameter(format!(
                "{} pixels do not fill a {width}x{height} image",
                pixels.len()
            )));
        }
        Ok(Image {
            width,
            height,
            pixels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[f32; 4]] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f32; 4] {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, px: [f32; 4]) {
        self.pixels[y * self.width + x] = px;
    }

    pub fn is_fully_transparent(&self) -> bool {
        self.pixels.iter().all(|p| p.iter().all(|&c| c == 0.0))
    }

    /// Hash of the exact float contents.
    pub fn content_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        (self.width, self.height).hash(&mut h);
        for p in &self.pixels {
            for c in p {
                c.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    /// 8-bit straight-alpha RGBA.
    pub fn to_rgba8(&self) -> RgbaImage {
        let mut out = RgbaImage::new(self.width as u32, self.height as u32);
        for (dst, src) in out.pixels_mut().zip(&self.pixels) {
            let a = src[3].clamp(0.0, 1.0);
            let un = |c: f32| if a > 0.0 { (c / a).clamp(0.0, 1.0) } else { 0.0 };
            *dst = Rgba([
                to_u8(un(src[0])),
                to_u8(un(src[1])),
                to_u8(un(src[2])),
                to_u8(a),
            ]);
        }
        out
    }

    pub fn from_rgba8(img: &RgbaImage) -> Self {
        let pixels = img
            .pixels()
            .map(|p| {
                let a = p[3] as f32 / 255.0;
                [
                    p[0] as f32 / 255.0 * a,
                    p[1] as f32 / 255.0 * a,
                    p[2] as f32 / 255.0 * a,
                    a,
                ]
            })
            .collect();
        Image {
            width: img.width() as usize,
            height: img.height() as usize,
            pixels,
        }
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut buf = Cursor::new(Vec::new());
        self.to_rgba8().write_to(&mut buf, ImageFormat::Png)?;
        Ok(buf.into_inner())
    }

    /// Binary PPM of the color composited over black.
    pub fn encode_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for p in &self.pixels {
            out.extend(p[..3].iter().map(|&c| to_u8(c.clamp(0.0, 1.0))));
        }
        out
    }

    /// Writes PNG or PPM depending on the extension (`.ppm` or anything else -> PNG).
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("ppm") => self.encode_ppm(),
            _ => self.encode_png()?,
        };
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = ::image::open(path)?;
        Ok(Self::from_rgba8(&img.to_rgba8()))
    }
}

#[inline]
fn to_u8(c: f32) -> u8 {
    (c * 255.0).round() as u8
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffMetrics {
    pub max_abs: f64,
    pub mean_abs: f64,
    /// RGBA order.
    pub channel_max_abs: [f64; 4],
    pub channel_mean_abs: [f64; 4],
}

impl DiffMetrics {
    pub fn within(&self, max_abs: Option<f64>, mean_abs: Option<f64>) -> bool {
        max_abs.is_none_or(|t| self.max_abs <= t) && mean_abs.is_none_or(|t| self.mean_abs <= t)
    }
}

pub fn diff_images(a: &Image, b: &Image) -> Result<DiffMetrics> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::Parameter(format!(
            "image sizes differ: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let mut ch_max = [0.0f64; 4];
    let mut ch_sum = [0.0f64; 4];
    for (p, q) in a.pixels.iter().zip(&b.pixels) {
        for c in 0..4 {
            let d = (p[c] as f64 - q[c] as f64).abs();
            ch_max[c] = ch_max[c].max(d);
            ch_sum[c] += d;
        }
    }
    let count = a.pixels.len().max(1) as f64;
    let ch_mean = ch_sum.map(|s| s / count);
    Ok(DiffMetrics {
        max_abs: ch_max.iter().copied().fold(0.0, f64::max),
        mean_abs: ch_mean.iter().sum::<f64>() / 4.0,
        channel_max_abs: ch_max,
        channel_mean_abs: ch_mean,
    })
}
