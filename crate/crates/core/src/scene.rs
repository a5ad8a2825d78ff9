//! JSON scene descriptions and the glue that turns one into a frame.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::half_angle::render_half_angle;
use crate::image::Image;
use crate::lightbuffer::{build_attenuation_buffer, AttenuationBuffer, BufferOptions, LightCamera, LookupMode};
use crate::raycast::{render, RenderSettings};
use crate::slicing::make_slice_stack;
use crate::synthetic::{generate, SyntheticShape};
use crate::transfer::{ControlPoint, TransferFunction};
use crate::volume::{load_raw, load_raw_with_sidecar, VolumeDataset, VolumeDescriptor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    /// Raw file; the descriptor defaults to the `.json` sidecar.
    Raw {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        descriptor: Option<VolumeDescriptor>,
    },
    Synthetic {
        shape: SyntheticShape,
        #[serde(default = "default_synthetic_size")]
        size: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_synthetic_size() -> usize {
    64
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic {
            shape: SyntheticShape::SphereBlob,
            size: default_synthetic_size(),
            seed: 0,
        }
    }
}

impl DatasetSource {
    pub fn load(&self, base_dir: &Path) -> Result<VolumeDataset> {
        match self {
            DatasetSource::Raw { path, descriptor } => {
                let path = resolve(base_dir, path);
                match descriptor {
                    Some(d) => load_raw(&path, d),
                    None => load_raw_with_sidecar(&path),
                }
            }
            DatasetSource::Synthetic { shape, size, seed } => generate(*shape, *size, *seed),
        }
    }
}

/// A preset name, a path to a control-point file, or inline control points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TransferSource {
    Points(Vec<ControlPoint>),
    Named(String),
}

impl Default for TransferSource {
    fn default() -> Self {
        TransferSource::Named("grayscale".into())
    }
}

impl TransferSource {
    pub fn load(&self, base_dir: &Path) -> Result<TransferFunction> {
        match self {
            TransferSource::Points(p) => TransferFunction::new(p.clone()),
            TransferSource::Named(name) => match TransferFunction::preset(name) {
                Ok(tf) => Ok(tf),
                Err(_) if name.ends_with(".json") => TransferFunction::from_json_file(&resolve(base_dir, Path::new(name))),
                Err(e) => Err(e),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BufferSettings {
    pub n_slices: usize,
    pub resolution: [usize; 2],
    pub interpolation: LookupMode,
    pub compensation_n: f64,
}

impl Default for BufferSettings {
    fn default() -> Self {
        BufferSettings {
            n_slices: 256,
            resolution: [256, 256],
            interpolation: LookupMode::Linear,
            compensation_n: 0.0,
        }
    }
}

impl BufferSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_slices == 0 {
            return Err(Error::Config("n_slices must be at least 1".into()));
        }
        if self.resolution[0] == 0 || self.resolution[1] == 0 {
            return Err(Error::Config("buffer resolution must be positive".into()));
        }
        if !(self.compensation_n >= 0.0) {
            return Err(Error::Config("compensation_n must be non-negative".into()));
        }
        Ok(())
    }
}

/// Which renderer draws the frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Renderer {
    #[default]
    Raycast,
    HalfAngle,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub dataset: DatasetSource,
    pub transfer_function: TransferSource,
    pub renderer: Renderer,
    #[serde(flatten)]
    pub render: RenderSettings,
    pub buffer: BufferSettings,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl SceneConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("invalid scene config: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Replaces the seed of a synthetic dataset.
    pub fn set_seed(&mut self, new_seed: u64) {
        if let DatasetSource::Synthetic { seed, .. } = &mut self.dataset {
            *seed = new_seed;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.render.validate()?;
        self.buffer.validate()
    }

    pub fn light_camera(&self) -> Result<LightCamera> {
        let [w, h] = self.buffer.resolution;
        LightCamera::new(self.render.light.direction(), self.render.light.color(), (w, h))
    }

    pub fn buffer_options(&self) -> BufferOptions {
        BufferOptions {
            compensation_n: self.buffer.compensation_n,
            reference_spacing: self.render.reference_spacing,
        }
    }

    /// Render settings with the buffer lookup mode applied.
    pub fn effective_render_settings(&self) -> RenderSettings {
        let mut s = self.render.clone();
        s.lookup = self.buffer.interpolation;
        s
    }
}

fn resolve(base_dir: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base_dir.join(p)
    }
}

#[derive(Clone, Debug)]
pub struct FrameOutput {
    pub image: Image,
    pub build_ms: f64,
    pub render_ms: f64,
    pub pass_count: usize,
}

/// A loaded scene: volume and transfer function resolved.
#[derive(Clone, Debug)]
pub struct Scene {
    pub config: SceneConfig,
    pub volume: VolumeDataset,
    pub transfer_function: TransferFunction,
}

impl Scene {
    /// Relative paths in the config resolve against `base_dir`.
    pub fn load(config: SceneConfig, base_dir: &Path) -> Result<Self> {
        config.validate()?;
        let volume = config.dataset.load(base_dir)?;
        let transfer_function = config.transfer_function.load(base_dir)?;
        Ok(Scene {
            config,
            volume,
            transfer_function,
        })
    }

    pub fn from_parts(config: SceneConfig, volume: VolumeDataset, transfer_function: TransferFunction) -> Result<Self> {
        config.validate()?;
        Ok(Scene {
            config,
            volume,
            transfer_function,
        })
    }

    pub fn build_buffer(&self) -> Result<AttenuationBuffer> {
        let camera = self.config.light_camera()?;
        let spec = make_slice_stack(self.config.render.light.direction(), self.config.buffer.n_slices)?;
        build_attenuation_buffer(
            &self.volume,
            &self.transfer_function,
            &camera,
            &spec,
            &self.config.buffer_options(),
        )
    }

    /// Builds the buffer when the shading mode needs one, then renders.
    pub fn render_frame(&self) -> Result<FrameOutput> {
        let settings = self.config.effective_render_settings();
        let n = self.config.buffer.n_slices;
        match self.config.renderer {
            Renderer::HalfAngle => {
                let [w, h] = self.config.buffer.resolution;
                let start = Instant::now();
                let out = render_half_angle(&self.volume, &self.transfer_function, &settings, n, (w, h))?;
                Ok(FrameOutput {
                    image: out.image,
                    build_ms: 0.0,
                    render_ms: elapsed_ms(start),
                    pass_count: out.pass_count,
                })
            }
            Renderer::Raycast => {
                let (buffer, build_ms) = if settings.shading.needs_buffer() {
                    let start = Instant::now();
                    let b = self.build_buffer()?;
                    (Some(b), elapsed_ms(start))
                } else {
                    (None, 0.0)
                };
                let start = Instant::now();
                let image = render(&self.volume, &self.transfer_function, &settings, buffer.as_ref())?;
                let render_ms = elapsed_ms(start);
                let pass_count = if buffer.is_some() { n + 1 } else { 1 };
                Ok(FrameOutput {
                    image,
                    build_ms,
                    render_ms,
                    pass_count,
                })
            }
        }
    }
}

pub fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raycast::ShadingMode;
    use crate::volume::ScalarType;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = SceneConfig::from_json_str("{}").unwrap();
        assert_eq!(c.render, RenderSettings::default());
        assert_eq!(c.buffer, BufferSettings::default());
        assert_eq!(c.renderer, Renderer::Raycast);
    }

    #[test]
    fn full_config_parses() {
        let text = r#"{
            "dataset": {"kind": "synthetic", "shape": "slab", "size": 16, "seed": 3},
            "transfer_function": [{"x": 0.0, "rgba": [0,0,0,0]}, {"x": 1.0, "rgba": [1,1,1,1]}],
            "shading": "sbrc_shadow",
            "viewport": [32, 16],
            "camera": {"eye": [0.5, 0.5, 3.0]},
            "light": {"direction": [0, -1, 0], "color": [1, 1, 1]},
            "buffer": {"n_slices": 32, "resolution": [16, 16], "interpolation": "nearest"},
            "output": "out.png"
        }"#;
        let c = SceneConfig::from_json_str(text).unwrap();
        assert_eq!(c.render.shading, ShadingMode::SbrcShadow);
        assert_eq!(c.render.viewport, [32, 16]);
        assert_eq!(c.render.camera.target, [0.5, 0.5, 0.5]);
        assert_eq!(c.buffer.interpolation, LookupMode::Nearest);
        assert!(matches!(c.transfer_function, TransferSource::Points(ref p) if p.len() == 2));

        // serialization round trip
        let back = SceneConfig::from_json_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);

        let scene = Scene::load(c, Path::new(".")).unwrap();
        let out = scene.render_frame().unwrap();
        assert_eq!((out.image.width(), out.image.height()), (32, 16));
        assert_eq!(out.pass_count, 33);
        assert!(out.build_ms > 0.0);
    }

    #[test]
    fn unknown_shading_mode_is_rejected() {
        let err = SceneConfig::from_json_str(r#"{"shading": "foggy"}"#).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn raw_dataset_and_tf_file_resolve_relative_to_base() {
        let dir = tempfile::tempdir().unwrap();
        let v = generate(SyntheticShape::Slab, 8, 0).unwrap();
        v.write_raw(&dir.path().join("slab.raw"), ScalarType::U8).unwrap();
        let tf = TransferFunction::preset("engine").unwrap();
        std::fs::write(dir.path().join("tf.json"), tf.to_json().unwrap()).unwrap();
        let c = SceneConfig::from_json_str(
            r#"{"dataset": {"kind": "raw", "path": "slab.raw"}, "transfer_function": "tf.json", "viewport": [8, 8]}"#,
        )
        .unwrap();
        let scene = Scene::load(c.clone(), dir.path()).unwrap();
        assert_eq!(scene.volume.dims(), [8, 8, 8]);
        assert_eq!(scene.transfer_function.fingerprint(), tf.fingerprint());
        assert!(Scene::load(c, Path::new("/nonexistent")).is_err());
    }

    #[test]
    fn seed_override_changes_blob() {
        let mut c = SceneConfig {
            dataset: DatasetSource::Synthetic {
                shape: SyntheticShape::SphereBlob,
                size: 8,
                seed: 1,
            },
            ..Default::default()
        };
        let a = Scene::load(c.clone(), Path::new(".")).unwrap();
        c.set_seed(2);
        let b = Scene::load(c, Path::new(".")).unwrap();
        assert_ne!(a.volume.data(), b.volume.data());
    }

    #[test]
    fn half_angle_renderer_reports_passes() {
        let mut c = SceneConfig {
            dataset: DatasetSource::Synthetic {
                shape: SyntheticShape::Empty,
                size: 8,
                seed: 0,
            },
            ..Default::default()
        };
        c.renderer = Renderer::HalfAngle;
        c.render.viewport = [8, 8];
        c.buffer.n_slices = 10;
        c.buffer.resolution = [8, 8];
        let out = Scene::load(c, Path::new(".")).unwrap().render_frame().unwrap();
        assert_eq!(out.pass_count, 20);
        assert!(out.image.is_fully_transparent());
    }
}
