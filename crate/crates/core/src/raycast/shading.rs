//! Per-sample light factors: local Phong, buffer shadows and the shell and
//! cone scattering kernels.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lightbuffer::{AttenuationBuffer, LookupMode};
use crate::math::{any_perpendicular, Rgb, Vec3};
use crate::volume::VolumeDataset;

/// Weight applied to a sample's emission.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShadowFactor(pub Rgb);

impl ShadowFactor {
    pub const ONE: ShadowFactor = ShadowFactor(Rgb::new(1.0, 1.0, 1.0));

    pub fn uniform(v: f64) -> Self {
        ShadowFactor(Rgb::repeat(v))
    }

    pub fn rgb(&self) -> Rgb {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhongParams {
    pub ambient: f64,
    pub diffuse: f64,
    pub specular: f64,
    pub shininess: f64,
}

impl Default for PhongParams {
    fn default() -> Self {
        PhongParams {
            ambient: 0.25,
            diffuse: 0.75,
            specular: 0.25,
            shininess: 24.0,
        }
    }
}

/// Phong light factor for a surface normal.
///
/// `to_light` and `to_eye` are unit vectors pointing away from the sample.
/// A zero normal (homogeneous neighbourhood) gets ambient light only.
pub fn phong_factor(normal: Option<Vec3>, to_light: &Vec3, to_eye: &Vec3, p: &PhongParams) -> f64 {
    let Some(n) = normal else {
        return p.ambient;
    };
    let ndl = n.dot(to_light);
    let diffuse = p.diffuse * ndl.max(0.0);
    let specular = if p.specular > 0.0 && ndl > 0.0 {
        let r = n * (2.0 * ndl) - to_light;
        p.specular * r.dot(to_eye).max(0.0).powf(p.shininess)
    } else {
        0.0
    };
    p.ambient + diffuse + specular
}

/// Local Phong shading using the negated, normalized volume gradient as normal.
pub fn shade_phong(
    sample: &Vec3,
    volume: &VolumeDataset,
    light_dir: &Vec3,
    eye: &Vec3,
    params: &PhongParams,
) -> f64 {
    let g = volume.gradient(sample);
    let normal = (g.norm() > 1e-12).then(|| -g.normalize());
    let to_eye = (eye - sample).try_normalize(1e-12).unwrap_or_else(Vec3::zeros);
    phong_factor(normal, &(-light_dir), &to_eye, params)
}

#[inline]
fn factor_from_light(light: Rgb, color: Rgb, floor: f64) -> ShadowFactor {
    ShadowFactor(Rgb::from_fn(|i, _| {
        if color[i] > 0.0 {
            (light[i] / color[i]).max(floor)
        } else {
            floor
        }
    }))
}

/// Hard shadow: attenuated light at the sample relative to the incident light.
#[inline]
pub fn shade_sbrc_shadow(
    sample: &Vec3,
    buffer: &AttenuationBuffer,
    mode: LookupMode,
    ambient_floor: f64,
) -> ShadowFactor {
    let light = buffer.lookup_light(sample, mode);
    factor_from_light(light, buffer.light_color(), ambient_floor)
}

/// Concentric cuboid shells sampled at the six axis offsets.
#[derive(Clone, Debug, PartialEq)]
pub struct ShellKernel {
    radii: Vec<f64>,
    weights: Vec<f64>,
}

impl ShellKernel {
    /// `radii` in world units, strictly increasing; `weights` non-negative
    /// and summing to one.
    pub fn new(radii: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if radii.is_empty() || radii.len() != weights.len() {
            return Err(Error::Parameter(
                "shell kernel needs one weight per radius".into(),
            ));
        }
        if radii[0] < 0.0 || radii.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Parameter(
                "shell radii must be non-negative and strictly increasing".into(),
            ));
        }
        if weights.iter().any(|&w| w < 0.0) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(
                "shell weights must be non-negative and sum to 1".into(),
            ));
        }
        Ok(ShellKernel { radii, weights })
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Shell parameters expressed in voxels, resolved against a volume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShellSettings {
    pub radii_voxels: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Default for ShellSettings {
    fn default() -> Self {
        ShellSettings {
            radii_voxels: vec![1.0, 2.0, 3.0],
            weights: vec![0.5, 0.3, 0.2],
        }
    }
}

impl ShellSettings {
    pub fn kernel(&self, voxel_size: f64) -> Result<ShellKernel> {
        ShellKernel::new(
            self.radii_voxels.iter().map(|r| r * voxel_size).collect(),
            self.weights.clone(),
        )
    }
}

const AXES: [Vec3; 6] = [
    Vec3::new(1.0, 0.0, 0.0),
    Vec3::new(-1.0, 0.0, 0.0),
    Vec3::new(0.0, 1.0, 0.0),
    Vec3::new(0.0, -1.0, 0.0),
    Vec3::new(0.0, 0.0, 1.0),
    Vec3::new(0.0, 0.0, -1.0),
];

pub fn shade_shell(
    sample: &Vec3,
    buffer: &AttenuationBuffer,
    kernel: &ShellKernel,
    mode: LookupMode,
    ambient_floor: f64,
) -> ShadowFactor {
    let mut light = Rgb::zeros();
    for (&r, &w) in kernel.radii.iter().zip(&kernel.weights) {
        let shell: Rgb = AXES
            .iter()
            .map(|a| buffer.lookup_light(&(sample + a * r), mode))
            .sum();
        light += shell * (w / AXES.len() as f64);
    }
    factor_from_light(light, buffer.light_color(), ambient_floor)
}

/// Rodrigues rotation of `base` about the unit axis `axis` by `theta`.
#[inline]
pub fn rodrigues_rotate(base: &Vec3, axis: &Vec3, theta: f64) -> Vec3 {
    let (s, c) = theta.sin_cos();
    base * c + axis.cross(base) * s + axis * (axis.dot(base) * (1.0 - c))
}

/// Projection of `c` onto the line spanned by `axis`.
#[inline]
pub fn cone_project(c: &Vec3, axis: &Vec3) -> Result<Vec3> {
    let aa = axis.dot(axis);
    if !(aa > 0.0) {
        return Err(Error::Parameter("projection axis must be nonzero".into()));
    }
    Ok(axis * (c.dot(axis) / aa))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConeKernel {
    /// Steps taken toward the light, one slice spacing each.
    pub axis_samples: usize,
    /// Ring radius per unit distance travelled toward the light.
    pub ring_radius_per_step: f64,
    /// Ring sample angles in radians.
    pub angles: Vec<f64>,
}

impl Default for ConeKernel {
    fn default() -> Self {
        ConeKernel {
            axis_samples: 2,
            ring_radius_per_step: 1.0,
            angles: vec![0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2],
        }
    }
}

impl ConeKernel {
    pub fn validate(&self) -> Result<()> {
        if self.axis_samples == 0 {
            return Err(Error::Parameter("cone needs at least one axis sample".into()));
        }
        if !(self.ring_radius_per_step >= 0.0) {
            return Err(Error::Parameter("cone ring radius must be non-negative".into()));
        }
        if self.angles.is_empty() {
            return Err(Error::Parameter("cone needs at least one ring angle".into()));
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        self.axis_samples * self.angles.len()
    }
}

/// Projection base: the eye direction with its light-parallel component
/// removed, so it lies in the plane through the sample, the light and the
/// viewer. Falls back to a fixed perpendicular when eye and light align.
pub fn projection_base(sample: &Vec3, eye: &Vec3, light_dir: &Vec3) -> Vec3 {
    let to_eye = eye - sample;
    let b = to_eye - light_dir * light_dir.dot(&to_eye);
    b.try_normalize(1e-9)
        .unwrap_or_else(|| any_perpendicular(light_dir))
}

/// Cone scattering: rings of samples around the path toward the light.
pub fn shade_cone(
    sample: &Vec3,
    buffer: &AttenuationBuffer,
    kernel: &ConeKernel,
    eye: &Vec3,
    mode: LookupMode,
    ambient_floor: f64,
) -> ShadowFactor {
    let l = buffer.spec().light_dir();
    let step = buffer.spec().spacing();
    let base = projection_base(sample, eye, &l);
    let mut light = Rgb::zeros();
    for j in 1..=kernel.axis_samples {
        let dist = step * j as f64;
        let axis_point = sample - l * dist;
        let radius = kernel.ring_radius_per_step * dist;
        for &theta in &kernel.angles {
            let rotated = rodrigues_rotate(&base, &l, theta);
            let along = cone_project(&rotated, &l).expect("light direction is unit length");
            let offset = (rotated - along).try_normalize(1e-12).unwrap_or(rotated);
            light += buffer.lookup_light(&(axis_point + offset * radius), mode);
        }
    }
    light /= kernel.sample_count() as f64;
    factor_from_light(light, buffer.light_color(), ambient_floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightbuffer::LightCamera;
    use crate::slicing::make_slice_stack;
    use proptest::prelude::*;

    fn uniform_buffer(value: f32) -> AttenuationBuffer {
        let cam = LightCamera::new(Vec3::z(), Rgb::new(1.0, 0.5, 2.0), (16, 16)).unwrap();
        let spec = make_slice_stack(Vec3::z(), 8).unwrap();
        AttenuationBuffer::from_transmittance(cam, spec, vec![value; 16 * 16 * 8]).unwrap()
    }

    /// Transmittance linear in world x: texel center u maps to x.
    fn gradient_buffer() -> AttenuationBuffer {
        let (w, n) = (32, 8);
        let cam = LightCamera::new(Vec3::z(), Rgb::repeat(1.0), (w, w)).unwrap();
        let spec = make_slice_stack(Vec3::z(), n).unwrap();
        let mut data = Vec::new();
        for _j in 0..w {
            for i in 0..w {
                let x = (i as f64 + 0.5) / w as f64;
                data.extend(std::iter::repeat_n((0.2 + 0.6 * x) as f32, n));
            }
        }
        AttenuationBuffer::from_transmittance(cam, spec, data).unwrap()
    }

    /// Left half (x < 0.5) dark, right half lit.
    fn edge_buffer() -> AttenuationBuffer {
        let (w, n) = (32, 8);
        let cam = LightCamera::new(Vec3::z(), Rgb::repeat(1.0), (w, w)).unwrap();
        let spec = make_slice_stack(Vec3::z(), n).unwrap();
        let mut data = Vec::new();
        for _j in 0..w {
            for i in 0..w {
                let v = if i < w / 2 { 0.0 } else { 1.0 };
                data.extend(std::iter::repeat_n(v, n));
            }
        }
        AttenuationBuffer::from_transmittance(cam, spec, data).unwrap()
    }

    #[test]
    fn phong_cases() {
        let p = PhongParams {
            ambient: 0.1,
            diffuse: 0.8,
            specular: 0.0,
            shininess: 1.0,
        };
        let l = Vec3::z();
        assert!((phong_factor(Some(l), &l, &l, &p) - 0.9).abs() < 1e-12);
        assert!((phong_factor(Some(Vec3::x()), &l, &l, &p) - 0.1).abs() < 1e-12);
        assert_eq!(phong_factor(None, &l, &l, &p), 0.1);

        let p45 = PhongParams {
            ambient: 0.0,
            diffuse: 1.0,
            specular: 0.0,
            shininess: 1.0,
        };
        let n = Vec3::new(1.0, 0.0, 1.0).normalize();
        let f = phong_factor(Some(n), &l, &l, &p45);
        assert!((f - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn phong_normal_from_gradient() {
        // density increases with x, so the normal faces -x
        let v = VolumeDataset::from_fn([9, 9, 9], |x, _, _| x as f32 / 8.0).unwrap();
        let p = PhongParams {
            ambient: 0.0,
            diffuse: 1.0,
            specular: 0.0,
            shininess: 1.0,
        };
        let light_dir = Vec3::x(); // travels +x, so to_light = -x
        let f = shade_phong(&Vec3::repeat(0.5), &v, &light_dir, &Vec3::new(0.5, 0.5, 5.0), &p);
        assert!((f - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sbrc_factor_divides_out_light_color() {
        let b = uniform_buffer(1.0);
        let f = shade_sbrc_shadow(&Vec3::repeat(0.5), &b, LookupMode::Linear, 0.0);
        assert!((f.rgb() - Rgb::repeat(1.0)).norm() < 1e-12);

        let dark = uniform_buffer(0.0);
        let f = shade_sbrc_shadow(&Vec3::repeat(0.5), &dark, LookupMode::Linear, 0.15);
        assert_eq!(f, ShadowFactor::uniform(0.15));
    }

    #[test]
    fn kernels_reduce_to_plain_shadow_on_constant_field() {
        let b = uniform_buffer(0.37);
        let p = Vec3::new(0.45, 0.52, 0.6);
        let plain = shade_sbrc_shadow(&p, &b, LookupMode::Linear, 0.0).rgb();
        let shell = ShellSettings::default().kernel(1.0 / 31.0).unwrap();
        let s = shade_shell(&p, &b, &shell, LookupMode::Linear, 0.0).rgb();
        let c = shade_cone(&p, &b, &ConeKernel::default(), &Vec3::new(2.0, 2.0, 2.0), LookupMode::Linear, 0.0).rgb();
        assert!((s - plain).norm() < 1e-6);
        assert!((c - plain).norm() < 1e-6);
    }

    #[test]
    fn shell_at_hard_edge_is_half() {
        let b = edge_buffer();
        let kernel = ShellKernel::new(vec![0.1], vec![1.0]).unwrap();
        let f = shade_shell(&Vec3::new(0.5, 0.5, 0.5), &b, &kernel, LookupMode::Linear, 0.0);
        assert!((f.rgb().x - 0.5).abs() < 1e-9, "{f:?}");
    }

    #[test]
    fn weighted_shells_cancel_on_linear_gradient() {
        let b = gradient_buffer();
        let kernel = ShellKernel::new(vec![0.05, 0.12], vec![0.7, 0.3]).unwrap();
        let p = Vec3::new(0.41, 0.5, 0.5);
        let center = shade_sbrc_shadow(&p, &b, LookupMode::Linear, 0.0).rgb().x;
        let f = shade_shell(&p, &b, &kernel, LookupMode::Linear, 0.0).rgb().x;
        assert!((center - (0.2 + 0.6 * 0.41)).abs() < 1e-6);
        assert!((f - center).abs() < 1e-6);
    }

    #[test]
    fn shell_kernel_validation() {
        assert!(ShellKernel::new(vec![2.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(ShellKernel::new(vec![1.0, 2.0], vec![0.5, 0.6]).is_err());
        assert!(ShellKernel::new(vec![1.0], vec![-1.0]).is_err());
        assert!(ShellKernel::new(vec![1.0, 2.0], vec![1.0]).is_err());
    }

    #[test]
    fn rodrigues_cases() {
        let b = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(rodrigues_rotate(&b, &Vec3::z(), 0.0), b);
        let r = rodrigues_rotate(&b, &Vec3::z(), FRAC_PI_2);
        assert!((r - Vec3::y()).norm() < 1e-15);
    }

    #[test]
    fn cone_project_cases() {
        let v = cone_project(&Vec3::new(1.0, 2.0, 3.0), &Vec3::z()).unwrap();
        assert_eq!(v, Vec3::new(0.0, 0.0, 3.0));
        let a = Vec3::new(1.0, -2.0, 0.5);
        assert_eq!(cone_project(&(a * 3.0), &a).unwrap(), a * 3.0);
        assert_eq!(cone_project(&Vec3::new(2.0, 1.0, 0.0), &a).unwrap(), Vec3::zeros());
        assert!(cone_project(&a, &Vec3::zeros()).is_err());
    }

    #[test]
    fn projection_base_is_perpendicular() {
        let l = Vec3::new(0.0, -1.0, 0.0);
        let b = projection_base(&Vec3::repeat(0.5), &Vec3::new(3.0, 2.0, 1.0), &l);
        assert!(b.dot(&l).abs() < 1e-12);
        assert!((b.norm() - 1.0).abs() < 1e-12);
        // eye straight along the light: fallback
        let b = projection_base(&Vec3::repeat(0.5), &Vec3::new(0.5, 3.0, 0.5), &l);
        assert!(b.dot(&l).abs() < 1e-12);
    }

    #[test]
    fn zero_radius_cone_is_axis_average() {
        let b = gradient_buffer();
        let k = ConeKernel {
            ring_radius_per_step: 0.0,
            ..Default::default()
        };
        let p = Vec3::new(0.3, 0.5, 0.7);
        let f = shade_cone(&p, &b, &k, &Vec3::new(0.3, 4.0, 0.7), LookupMode::Linear, 0.0);
        let step = b.spec().spacing();
        let l = b.spec().light_dir();
        let axis: f64 = (1..=2)
            .map(|j| b.lookup_transmittance(&(p - l * (step * j as f64)), LookupMode::Linear))
            .sum::<f64>()
            / 2.0;
        assert!((f.rgb().x - axis).abs() < 1e-12);
    }

    #[test]
    fn cone_near_edge_is_bracketed() {
        let b = edge_buffer();
        let p = Vec3::new(0.49, 0.5, 0.7);
        let hard = shade_sbrc_shadow(&p, &b, LookupMode::Linear, 0.0).rgb().x;
        let k = ConeKernel {
            ring_radius_per_step: 3.0,
            ..Default::default()
        };
        let cone = shade_cone(&p, &b, &k, &Vec3::new(0.49, 4.0, 0.7), LookupMode::Linear, 0.0).rgb().x;
        assert!(hard <= cone && cone <= 1.0, "hard {hard} cone {cone}");
        assert!(cone > hard);
    }

    proptest! {
        #[test]
        fn rodrigues_is_an_isometry(
            bx in -5.0f64..5.0, by in -5.0f64..5.0, bz in -5.0f64..5.0,
            lx in -1.0f64..1.0, ly in -1.0f64..1.0, lz in -1.0f64..1.0,
            theta in -10.0f64..10.0,
        ) {
            let l = Vec3::new(lx, ly, lz);
            prop_assume!(l.norm() > 1e-3);
            let l = l.normalize();
            let b = Vec3::new(bx, by, bz);
            let a = rodrigues_rotate(&b, &l, theta);
            prop_assert!((a.norm() - b.norm()).abs() <= 1e-9);
            // rotation about l preserves the component along l
            prop_assert!((a.dot(&l) - b.dot(&l)).abs() <= 1e-9);
        }
    }
}
