//! Front-to-back ray casting with pluggable per-sample illumination.

pub mod compositing;
pub mod shading;

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::lightbuffer::{AttenuationBuffer, DirectionalLight, LookupMode, REFERENCE_SPACING};
use crate::math::{inside_unit_cube, Ray, Rgb, Vec3};
use crate::transfer::{correct_opacity, ClassifiedSample, TransferFunction};
use crate::volume::VolumeDataset;

pub use compositing::{
    composite_back_to_front, composite_back_to_front_state, composite_front_to_back,
    extinction_from_opacity, optical_depth_from_opacity, sum_extinction, CompositingState,
    ALPHA_MAX,
};
pub use shading::{
    cone_project, projection_base, rodrigues_rotate, shade_cone, shade_phong, shade_sbrc_shadow,
    shade_shell, ConeKernel, PhongParams, ShadowFactor, ShellKernel, ShellSettings,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShadingMode {
    /// Emission-absorption only.
    #[default]
    None,
    Phong,
    SbrcShadow,
    Shell,
    Cone,
    /// Eye-ray transmittance from summed extinction, buffer shadows.
    Extinction,
    /// Brute-force light march per sample. Reference only; very slow.
    Oracle,
}

impl ShadingMode {
    pub const ALL: [ShadingMode; 7] = [
        ShadingMode::None,
        ShadingMode::Phong,
        ShadingMode::SbrcShadow,
        ShadingMode::Shell,
        ShadingMode::Cone,
        ShadingMode::Extinction,
        ShadingMode::Oracle,
    ];

    pub fn needs_buffer(self) -> bool {
        matches!(
            self,
            ShadingMode::SbrcShadow | ShadingMode::Shell | ShadingMode::Cone | ShadingMode::Extinction
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ShadingMode::None => "none",
            ShadingMode::Phong => "phong",
            ShadingMode::SbrcShadow => "sbrc_shadow",
            ShadingMode::Shell => "shell",
            ShadingMode::Cone => "cone",
            ShadingMode::Extinction => "extinction",
            ShadingMode::Oracle => "oracle",
        }
    }
}

impl FromStr for ShadingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ShadingMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown shading mode `{s}`")))
    }
}

impl std::fmt::Display for ShadingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Pinhole camera.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Camera {
    pub eye: [f64; 3],
    pub target: [f64; 3],
    pub up: [f64; 3],
    /// Vertical field of view in degrees.
    pub fov_deg: f64,
}

impl Default for Camera {
    fn default() -> Self {
        Camera {
            eye: [2.2, 1.8, 2.6],
            target: [0.5, 0.5, 0.5],
            up: [0.0, 1.0, 0.0],
            fov_deg: 35.0,
        }
    }
}

impl Camera {
    pub fn eye(&self) -> Vec3 {
        Vec3::from(self.eye)
    }

    pub fn forward(&self) -> Vec3 {
        (Vec3::from(self.target) - self.eye()).normalize()
    }

    pub fn validate(&self) -> Result<()> {
        let f = Vec3::from(self.target) - self.eye();
        if !(f.norm() > 1e-12) {
            return Err(Error::Config("camera eye and target coincide".into()));
        }
        if f.cross(&Vec3::from(self.up)).norm() < 1e-12 {
            return Err(Error::Config("camera up is parallel to the view direction".into()));
        }
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(Error::Config(format!("field of view {} out of range", self.fov_deg)));
        }
        Ok(())
    }

    /// Generates primary rays through pixel centers; row 0 is the top.
    pub fn ray_generator(&self, width: usize, height: usize) -> RayGenerator {
        let f = self.forward();
        let right = f.cross(&Vec3::from(self.up)).normalize();
        let up = right.cross(&f);
        let half = (self.fov_deg.to_radians() * 0.5).tan();
        RayGenerator {
            eye: self.eye(),
            forward: f,
            right: right * half * width as f64 / height as f64,
            up: up * half,
            width: width as f64,
            height: height as f64,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RayGenerator {
    eye: Vec3,
    forward: Vec3,
    right: Vec3,
    up: Vec3,
    width: f64,
    height: f64,
}

impl RayGenerator {
    #[inline]
    pub fn ray(&self, x: usize, y: usize) -> Ray {
        let sx = 2.0 * (x as f64 + 0.5) / self.width - 1.0;
        let sy = 1.0 - 2.0 * (y as f64 + 0.5) / self.height;
        let dir = (self.forward + self.right * sx + self.up * sy).normalize();
        Ray::new(self.eye, dir)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSettings {
    pub camera: Camera,
    pub light: DirectionalLight,
    pub viewport: [usize; 2],
    /// Sample spacing along eye rays, world units.
    pub step: f64,
    pub shading: ShadingMode,
    pub early_termination_alpha: f64,
    /// Lower bound of the light factor in buffer-based modes.
    pub ambient_floor: f64,
    pub lookup: LookupMode,
    pub phong: PhongParams,
    pub shell: ShellSettings,
    pub cone: ConeKernel,
    /// Step of the brute-force light march in `oracle` mode.
    pub oracle_step: f64,
    pub reference_spacing: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            camera: Camera::default(),
            light: DirectionalLight::default(),
            viewport: [512, 512],
            step: 1.0 / 256.0,
            shading: ShadingMode::None,
            early_termination_alpha: 0.99,
            ambient_floor: 0.0,
            lookup: LookupMode::Linear,
            phong: PhongParams::default(),
            shell: ShellSettings::default(),
            cone: ConeKernel::default(),
            oracle_step: 1.0 / 256.0,
            reference_spacing: REFERENCE_SPACING,
        }
    }
}

impl RenderSettings {
    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        if self.viewport[0] == 0 || self.viewport[1] == 0 {
            return Err(Error::Config("viewport dimensions must be at least 1".into()));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Config("sample step must be positive".into()));
        }
        if !(self.early_termination_alpha > 0.0 && self.early_termination_alpha <= 1.0) {
            return Err(Error::Config("early termination threshold must be in (0, 1]".into()));
        }
        if !(self.ambient_floor >= 0.0) {
            return Err(Error::Config("ambient floor must be non-negative".into()));
        }
        if !(self.oracle_step > 0.0) || !(self.reference_spacing > 0.0) {
            return Err(Error::Config("oracle step and reference spacing must be positive".into()));
        }
        if !(Vec3::from(self.light.direction).norm() > 1e-12) {
            return Err(Error::Config("light direction must be nonzero".into()));
        }
        self.cone.validate()?;
        Ok(())
    }
}

/// Brute-force transmittance from `sample` toward the light: march against
/// the light direction until leaving the cube, multiplying `1 - alpha` of
/// every step (opacity-corrected to `step`). The sample itself is excluded.
pub fn shadow_oracle(
    volume: &VolumeDataset,
    tf: &TransferFunction,
    sample: &Vec3,
    light_dir: &Vec3,
    step: f64,
    reference_spacing: f64,
) -> f64 {
    let to_light = -light_dir.normalize();
    let ratio = step / reference_spacing;
    let mut transmittance = 1.0;
    let mut i = 1usize;
    loop {
        let p = sample + to_light * (step * i as f64);
        if !inside_unit_cube(&p, 1e-12) {
            break;
        }
        let alpha = correct_opacity(tf.opacity(volume.sample_trilinear(&p)), ratio);
        transmittance *= 1.0 - alpha;
        if transmittance == 0.0 {
            break;
        }
        i += 1;
    }
    transmittance
}

struct PixelContext<'a> {
    volume: &'a VolumeDataset,
    tf: &'a TransferFunction,
    settings: &'a RenderSettings,
    buffer: Option<&'a AttenuationBuffer>,
    shell: Option<ShellKernel>,
    light_dir: Vec3,
    eye: Vec3,
    ratio: f64,
}

impl PixelContext<'_> {
    #[inline]
    fn light_factor(&self, p: &Vec3) -> Rgb {
        let s = self.settings;
        match s.shading {
            ShadingMode::None => Rgb::repeat(1.0),
            ShadingMode::Phong => {
                Rgb::repeat(shade_phong(p, self.volume, &self.light_dir, &self.eye, &s.phong))
            }
            ShadingMode::SbrcShadow | ShadingMode::Extinction => {
                shade_sbrc_shadow(p, self.buffer.unwrap(), s.lookup, s.ambient_floor).rgb()
            }
            ShadingMode::Shell => shade_shell(
                p,
                self.buffer.unwrap(),
                self.shell.as_ref().unwrap(),
                s.lookup,
                s.ambient_floor,
            )
            .rgb(),
            ShadingMode::Cone => {
                shade_cone(p, self.buffer.unwrap(), &s.cone, &self.eye, s.lookup, s.ambient_floor)
                    .rgb()
            }
            ShadingMode::Oracle => Rgb::repeat(
                shadow_oracle(
                    self.volume,
                    self.tf,
                    p,
                    &self.light_dir,
                    s.oracle_step,
                    s.reference_spacing,
                )
                .max(s.ambient_floor),
            ),
        }
    }

    fn trace(&self, ray: &Ray) -> [f32; 4] {
        let Some((t0, t1)) = ray.intersect_unit_cube() else {
            return [0.0; 4];
        };
        let s = self.settings;
        let threshold = s.early_termination_alpha;
        let mut state = CompositingState::empty();
        // running optical depth for the extinction mode
        let mut depth = 0.0f64;
        let mut i = 0usize;
        loop {
            let t = t0 + s.step * (i as f64 + 0.5);
            if t > t1 {
                break;
            }
            i += 1;
            let p = ray.at(t);
            let raw = self.tf.classify(self.volume.sample_trilinear(&p));
            if raw.opacity <= 0.0 {
                continue;
            }
            let c = raw.opacity_corrected(self.ratio);
            let factor = self.light_factor(&p);
            if s.shading == ShadingMode::Extinction {
                let tau_dt = optical_depth_from_opacity(c.opacity);
                let transmittance = (-depth).exp();
                let segment = 1.0 - (-tau_dt).exp();
                let color = c.emission / c.opacity;
                state.color += color.component_mul(&factor) * (segment * transmittance);
                depth += tau_dt;
                state.alpha = 1.0 - (-depth).exp();
            } else {
                let shaded = ClassifiedSample::new(c.emission.component_mul(&factor), c.opacity);
                state = composite_front_to_back(state, &shaded);
            }
            if state.alpha >= threshold {
                break;
            }
        }
        state.to_rgba()
    }
}

/// Renders one frame. Buffer-based shading modes require `buffer`.
pub fn render(
    volume: &VolumeDataset,
    tf: &TransferFunction,
    settings: &RenderSettings,
    buffer: Option<&AttenuationBuffer>,
) -> Result<Image> {
    settings.validate()?;
    if settings.shading.needs_buffer() && buffer.is_none() {
        return Err(Error::Config(format!(
            "shading mode `{}` needs an attenuation buffer",
            settings.shading
        )));
    }
    let shell = match settings.shading {
        ShadingMode::Shell => Some(settings.shell.kernel(volume.voxel_size())?),
        _ => None,
    };
    let light_dir = match (settings.shading.needs_buffer(), buffer) {
        (true, Some(b)) => b.spec().light_dir(),
        _ => settings.light.direction(),
    };
    let ctx = PixelContext {
        volume,
        tf,
        settings,
        buffer,
        shell,
        light_dir,
        eye: settings.camera.eye(),
        ratio: settings.step / settings.reference_spacing,
    };

    let [w, h] = settings.viewport;
    let rays = settings.camera.ray_generator(w, h);
    let mut pixels = vec![[0f32; 4]; w * h];
    pixels.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, px) in row.iter_mut().enumerate() {
            *px = ctx.trace(&rays.ray(x, y));
        }
    });
    Image::from_pixels(w, h, pixels)
}
