//! Timing sweeps over slice counts, buffer resolutions and methods.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::half_angle::render_half_angle;
use crate::raycast::{render, ShadingMode};
use crate::scene::{elapsed_ms, Scene};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    None,
    Phong,
    /// Half-angle slicing.
    Has,
    Sbrc,
    Shell,
    Cone,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::None,
        Method::Phong,
        Method::Has,
        Method::Sbrc,
        Method::Shell,
        Method::Cone,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Phong => "phong",
            Method::Has => "has",
            Method::Sbrc => "sbrc",
            Method::Shell => "shell",
            Method::Cone => "cone",
        }
    }

    /// Ray-casting shading mode, `None` for the half-angle baseline.
    pub fn shading(self) -> Option<ShadingMode> {
        match self {
            Method::None => Some(ShadingMode::None),
            Method::Phong => Some(ShadingMode::Phong),
            Method::Has => None,
            Method::Sbrc => Some(ShadingMode::SbrcShadow),
            Method::Shell => Some(ShadingMode::Shell),
            Method::Cone => Some(ShadingMode::Cone),
        }
    }

    /// Passes per frame: slice-based methods draw one pass per light slice
    /// plus the ray-casting pass, half-angle slicing two per slice.
    pub fn pass_count(self, n_slices: usize) -> usize {
        match self {
            Method::None | Method::Phong => 1,
            Method::Has => 2 * n_slices,
            Method::Sbrc | Method::Shell | Method::Cone => n_slices + 1,
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method `{s}`")))
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `WxH`; a single number means a square.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Resolution {
    pub width: usize,
    pub height: usize,
}

impl Resolution {
    pub fn square(n: usize) -> Self {
        Resolution { width: n, height: n }
    }

    pub fn texels(&self) -> usize {
        self.width * self.height
    }
}

impl FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid resolution `{s}`, expected WxH"));
        let (w, h) = match s.split_once(['x', 'X']) {
            Some((w, h)) => (w.trim(), h.trim()),
            None => (s.trim(), s.trim()),
        };
        let width: usize = w.parse().map_err(|_| bad())?;
        let height: usize = h.parse().map_err(|_| bad())?;
        if width == 0 || height == 0 {
            return Err(bad());
        }
        Ok(Resolution { width, height })
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.width, self.height)
    }
}

impl Serialize for Resolution {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Resolution {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One CSV row: mean timings of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub method: Method,
    pub n_slices: usize,
    pub buffer_resolution: Resolution,
    pub sample_step: f64,
    pub build_ms: f64,
    pub render_ms: f64,
    pub total_ms: f64,
    pub pass_count: usize,
    /// Hex content hash of the rendered image.
    pub image_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchSweep {
    pub methods: Vec<Method>,
    pub n_slices: Vec<usize>,
    pub resolutions: Vec<Resolution>,
    /// Timed repeats per configuration, after one discarded warm-up run.
    pub repeats: usize,
}

impl Default for BenchSweep {
    fn default() -> Self {
        BenchSweep {
            methods: Method::ALL.to_vec(),
            n_slices: vec![64, 128, 256],
            resolutions: vec![Resolution::square(128), Resolution::square(256), Resolution::square(512)],
            repeats: 3,
        }
    }
}

impl BenchSweep {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() || self.n_slices.is_empty() || self.resolutions.is_empty() {
            return Err(Error::Config("sweep lists must not be empty".into()));
        }
        if self.repeats < 3 {
            return Err(Error::Config(format!("at least 3 repeats required, got {}", self.repeats)));
        }
        if self.n_slices.contains(&0) {
            return Err(Error::Config("slice counts must be positive".into()));
        }
        Ok(())
    }
}

struct Timing {
    build_ms: f64,
    render_ms: f64,
    hash: u64,
}

fn run_once(scene: &Scene, method: Method, n_slices: usize, res: Resolution) -> Result<Timing> {
    let mut settings = scene.config.effective_render_settings();
    match method.shading() {
        None => {
            let start = Instant::now();
            let out = render_half_angle(
                &scene.volume,
                &scene.transfer_function,
                &settings,
                n_slices,
                (res.width, res.height),
            )?;
            Ok(Timing {
                build_ms: 0.0,
                render_ms: elapsed_ms(start),
                hash: out.image.content_hash(),
            })
        }
        Some(mode) => {
            settings.shading = mode;
            let (buffer, build_ms) = if mode.needs_buffer() {
                let mut cfg = scene.config.clone();
                cfg.buffer.n_slices = n_slices;
                cfg.buffer.resolution = [res.width, res.height];
                let sub = Scene {
                    config: cfg,
                    volume: scene.volume.clone(),
                    transfer_function: scene.transfer_function.clone(),
                };
                let start = Instant::now();
                let b = sub.build_buffer()?;
                (Some(b), elapsed_ms(start))
            } else {
                (None, 0.0)
            };
            let start = Instant::now();
            let img = render(&scene.volume, &scene.transfer_function, &settings, buffer.as_ref())?;
            Ok(Timing {
                build_ms,
                render_ms: elapsed_ms(start),
                hash: img.content_hash(),
            })
        }
    }
}

/// Measures one configuration: a warm-up run, then `repeats` timed runs
/// averaged. Fails if the image differs between runs.
pub fn measure(scene: &Scene, method: Method, n_slices: usize, res: Resolution, repeats: usize) -> Result<BenchRecord> {
    let warm = run_once(scene, method, n_slices, res)?;
    let (mut build, mut rend) = (0.0, 0.0);
    for _ in 0..repeats.max(1) {
        let t = run_once(scene, method, n_slices, res)?;
        if t.hash != warm.hash {
            return Err(Error::Parameter(format!(
                "nondeterministic output for {method} at {n_slices} slices, {res}"
            )));
        }
        build += t.build_ms;
        rend += t.render_ms;
    }
    let r = repeats.max(1) as f64;
    let (build_ms, render_ms) = (build / r, rend / r);
    Ok(BenchRecord {
        method,
        n_slices,
        buffer_resolution: res,
        sample_step: scene.config.render.step,
        build_ms,
        render_ms,
        total_ms: build_ms + render_ms,
        pass_count: method.pass_count(n_slices),
        image_hash: format!("{:016x}", warm.hash),
    })
}

/// Runs every (method, slices, resolution) combination in that nesting order.
pub fn run_sweep(scene: &Scene, sweep: &BenchSweep, mut progress: impl FnMut(&BenchRecord)) -> Result<Vec<BenchRecord>> {
    sweep.validate()?;
    let mut rows = Vec::new();
    for &method in &sweep.methods {
        for &res in &sweep.resolutions {
            for &n in &sweep.n_slices {
                let rec = measure(scene, method, n, res, sweep.repeats)?;
                progress(&rec);
                rows.push(rec);
            }
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(out: W, rows: &[BenchRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::Format(format!("writing CSV: {e}")))?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<BenchRecord>> {
    let mut r = csv::Reader::from_reader(input);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}
