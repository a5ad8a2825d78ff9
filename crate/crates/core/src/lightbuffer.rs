//! Light-space illumination attenuation buffer.
//!
//! The buffer is built once per (volume, transfer function, light, slice
//! count, resolution) by sweeping the light-aligned slices away from the
//! light. Layer `k` holds the light arriving at slice `k`, i.e. the incident
//! light attenuated by slices `0..k`. Ray casting then looks up any world
//! position with the slice index and the shadow matrix.
//!
//! Attenuation is achromatic, so texels store scalar transmittance and the
//! light color is applied on lookup.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::{inside_unit_cube, Mat4, Rgb, Vec3};
use crate::slicing::{cube_extent_along, SliceStackSpec};
use crate::transfer::{correct_opacity, TransferFunction};
use crate::volume::VolumeDataset;

/// Opacities from the transfer function are defined for this sample spacing.
pub const REFERENCE_SPACING: f64 = 1.0 / 256.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionalLight {
    /// Direction the light travels.
    pub direction: [f64; 3],
    pub color: [f64; 3],
}

impl Default for DirectionalLight {
    fn default() -> Self {
        DirectionalLight {
            direction: [-0.5, -0.7, -0.5],
            color: [1.0, 1.0, 1.0],
        }
    }
}

impl DirectionalLight {
    pub fn direction(&self) -> Vec3 {
        Vec3::from(self.direction).normalize()
    }

    pub fn color(&self) -> Rgb {
        Rgb::from(self.color)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LookupMode {
    Nearest,
    #[default]
    Linear,
}

/// Orthographic camera looking along the light direction.
#[derive(Clone, Debug, PartialEq)]
pub struct LightCamera {
    light_dir: Vec3,
    light_color: Rgb,
    right: Vec3,
    up: Vec3,
    /// `[right_min, right_max, up_min, up_max]` of the cube footprint.
    bounds: [f64; 4],
    depth: (f64, f64),
    view: Mat4,
    proj: Mat4,
    resolution: (usize, usize),
}

impl LightCamera {
    pub fn new(light_dir: Vec3, light_color: Rgb, resolution: (usize, usize)) -> Result<Self> {
        let norm = light_dir.norm();
        if !(norm.is_finite() && norm > 1e-12) {
            return Err(Error::Parameter("light direction must be nonzero".into()));
        }
        if resolution.0 == 0 || resolution.1 == 0 {
            return Err(Error::Parameter(format!(
                "light buffer resolution must be positive, got {}x{}",
                resolution.0, resolution.1
            )));
        }
        if light_color.iter().any(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::Parameter("light color must be non-negative".into()));
        }
        let l = light_dir / norm;
        // Basis with right x up == l, so that for l = +z the texture axes
        // follow world x and y.
        let up_hint = if l.y.abs() < 0.9 { Vec3::y() } else { Vec3::z() };
        let up = (up_hint - l * l.dot(&up_hint)).normalize();
        let right = up.cross(&l);

        let (r_min, r_max) = cube_extent_along(&right);
        let (u_min, u_max) = cube_extent_along(&up);
        let (d_min, d_max) = cube_extent_along(&l);

        #[rustfmt::skip]
        let view = Mat4::new(
            right.x, right.y, right.z, 0.0,
            up.x,    up.y,    up.z,    0.0,
            -l.x,    -l.y,    -l.z,    0.0,
            0.0,     0.0,     0.0,     1.0,
        );
        // View-space depth runs over [-d_max, -d_min]; map near plane d_min to -1.
        let (near, far) = (d_min, d_max.max(d_min + 1e-12));
        #[rustfmt::skip]
        let proj = Mat4::new(
            2.0 / (r_max - r_min), 0.0, 0.0, -(r_max + r_min) / (r_max - r_min),
            0.0, 2.0 / (u_max - u_min), 0.0, -(u_max + u_min) / (u_max - u_min),
            0.0, 0.0, -2.0 / (far - near), -(far + near) / (far - near),
            0.0, 0.0, 0.0, 1.0,
        );

        Ok(LightCamera {
            light_dir: l,
            light_color,
            right,
            up,
            bounds: [r_min, r_max, u_min, u_max],
            depth: (d_min, d_max),
            view,
            proj,
            resolution,
        })
    }

    pub fn light_dir(&self) -> Vec3 {
        self.light_dir
    }

    pub fn light_color(&self) -> Rgb {
        self.light_color
    }

    pub fn resolution(&self) -> (usize, usize) {
        self.resolution
    }

    pub fn view_matrix(&self) -> Mat4 {
        self.view
    }

    pub fn proj_matrix(&self) -> Mat4 {
        self.proj
    }

    /// `proj * view`: world position to light clip space.
    pub fn shadow_matrix(&self) -> Mat4 {
        self.proj * self.view
    }

    /// World-space point on the plane `L.p = 0` under the center of texel `(i, j)`.
    #[inline]
    pub fn texel_origin(&self, i: usize, j: usize) -> Vec3 {
        let [r0, r1, u0, u1] = self.bounds;
        let (w, h) = self.resolution;
        let u = (i as f64 + 0.5) / w as f64;
        let v = (j as f64 + 0.5) / h as f64;
        self.right * (r0 + u * (r1 - r0)) + self.up * (u0 + v * (u1 - u0))
    }

    pub fn depth_range(&self) -> (f64, f64) {
        self.depth
    }
}

/// Inputs of the full object-space shadow matrix
/// `L_p * L_v * E_vi * E_mv`, for callers that start from object-space
/// vertices and an eye model-view transform.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShadowMatrixInputs {
    pub light_proj: Mat4,
    pub light_view: Mat4,
    pub eye_view_inverse: Mat4,
    pub eye_model_view: Mat4,
}

impl ShadowMatrixInputs {
    pub fn compose(&self) -> Mat4 {
        self.light_proj * self.light_view * self.eye_view_inverse * self.eye_model_view
    }

    /// Light texture coordinates of an object-space vertex.
    pub fn uv(&self, object_pos: &Vec3) -> (f64, f64) {
        clip_to_uv(&self.compose(), object_pos)
    }
}

#[inline]
fn clip_to_uv(m: &Mat4, p: &Vec3) -> (f64, f64) {
    let c = m * p.push(1.0);
    let w = if c.w != 0.0 { c.w } else { 1.0 };
    (0.5 * (c.x / w + 1.0), 0.5 * (c.y / w + 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BufferOptions {
    /// Exponent of the `(1 + alpha)^n` over-darkening compensation; 0 disables it.
    pub compensation_n: f64,
    /// Sample spacing at which transfer-function opacities are defined.
    pub reference_spacing: f64,
}

impl Default for BufferOptions {
    fn default() -> Self {
        BufferOptions {
            compensation_n: 0.0,
            reference_spacing: REFERENCE_SPACING,
        }
    }
}

#[derive(Clone, Debug)]
pub struct AttenuationBuffer {
    camera: LightCamera,
    spec: SliceStackSpec,
    shadow_matrix: Mat4,
    compensation_n: f64,
    /// Texel-major: `data[(j * W + i) * n + k]`.
    data: Vec<f32>,
}

impl AttenuationBuffer {
    /// Wraps precomputed transmittance values laid out texel-major.
    pub fn from_transmittance(
        camera: LightCamera,
        spec: SliceStackSpec,
        data: Vec<f32>,
    ) -> Result<Self> {
        check_alignment(&camera, &spec)?;
        let (w, h) = camera.resolution();
        if data.len() != w * h * spec.n_slices() {
            return Err(Error::Parameter(format!(
                "expected {} texel values, got {}",
                w * h * spec.n_slices(),
                data.len()
            )));
        }
        Ok(AttenuationBuffer {
            shadow_matrix: camera.shadow_matrix(),
            camera,
            spec,
            compensation_n: 0.0,
            data,
        })
    }

    pub fn camera(&self) -> &LightCamera {
        &self.camera
    }

    pub fn spec(&self) -> &SliceStackSpec {
        &self.spec
    }

    pub fn shadow_matrix(&self) -> &Mat4 {
        &self.shadow_matrix
    }

    pub fn compensation_n(&self) -> f64 {
        self.compensation_n
    }

    pub fn light_color(&self) -> Rgb {
        self.camera.light_color
    }

    pub fn n_slices(&self) -> usize {
        self.spec.n_slices()
    }

    pub fn resolution(&self) -> (usize, usize) {
        self.camera.resolution
    }

    /// Stored transmittance of texel `(i, j)` at layer `k`.
    #[inline]
    pub fn texel(&self, i: usize, j: usize, k: usize) -> f32 {
        let (w, _) = self.camera.resolution;
        self.data[(j * w + i) * self.spec.n_slices() + k]
    }

    /// Transmittance values of one layer, row-major.
    pub fn layer(&self, k: usize) -> Vec<f32> {
        let n = self.spec.n_slices();
        self.data.iter().skip(k).step_by(n).copied().collect()
    }

    /// Light intensity of one layer as an opaque image (row 0 at the top).
    pub fn layer_image(&self, k: usize) -> Image {
        let (w, h) = self.camera.resolution;
        let c = self.light_color();
        let mut img = Image::new(w, h);
        for j in 0..h {
            for i in 0..w {
                let t = self.texel(i, j, k) as f64;
                let rgb = (c * t).map(|x| x.clamp(0.0, 1.0));
                img.set(i, h - 1 - j, [rgb.x as f32, rgb.y as f32, rgb.z as f32, 1.0]);
            }
        }
        img
    }

    /// Light-space texture coordinates of a world position. Values outside
    /// `[0, 1]` are outside the light footprint.
    #[inline]
    pub fn world_to_light_uv(&self, p: &Vec3) -> (f64, f64) {
        clip_to_uv(&self.shadow_matrix, p)
    }

    /// Attenuated light as a fraction of the incident light.
    ///
    /// Layer `k` has passed through bins `0..k`, so it is the light at the
    /// near boundary of bin `k`, slice index `k`. Linear mode interpolates
    /// between those boundaries; nearest mode uses the layer of the bin.
    #[inline]
    pub fn lookup_transmittance(&self, p: &Vec3, mode: LookupMode) -> f64 {
        let n = self.spec.n_slices();
        let idx = self.spec.slice_index(p);
        if !(idx >= 0.0) {
            return 1.0;
        }
        let (u, v) = self.world_to_light_uv(p);
        if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
            return 1.0;
        }
        let last = (n - 1) as f64;
        let (k0, k1, kt) = match mode {
            LookupMode::Nearest => {
                let k = idx.clamp(0.0, last).floor() as usize;
                (k, k, 0.0)
            }
            LookupMode::Linear => {
                let f = idx.clamp(0.0, last);
                let k0 = f.floor() as usize;
                let k1 = (k0 + 1).min(n - 1);
                (k0, k1, f - k0 as f64)
            }
        };

        let (w, h) = self.camera.resolution;
        let (x0, x1, fx) = bilinear_axis(u, w);
        let (y0, y1, fy) = bilinear_axis(v, h);
        let fetch = |i: usize, j: usize| -> f64 {
            let base = (j * w + i) * n;
            let a = self.data[base + k0] as f64;
            if k1 == k0 {
                a
            } else {
                let b = self.data[base + k1] as f64;
                a + (b - a) * kt
            }
        };
        let top = fetch(x0, y0) * (1.0 - fx) + fetch(x1, y0) * fx;
        let bottom = fetch(x0, y1) * (1.0 - fx) + fetch(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Light intensity arriving at `p`.
    #[inline]
    pub fn lookup_light(&self, p: &Vec3, mode: LookupMode) -> Rgb {
        self.camera.light_color * self.lookup_transmittance(p, mode)
    }
}

/// Texel pair and weight for a normalized coordinate with clamp-to-edge.
#[inline]
pub(crate) fn bilinear_axis(coord: f64, size: usize) -> (usize, usize, f64) {
    if size == 1 {
        return (0, 0, 0.0);
    }
    let x = (coord * size as f64 - 0.5).clamp(0.0, (size - 1) as f64);
    let x0 = (x.floor() as usize).min(size - 2);
    (x0, x0 + 1, x - x0 as f64)
}

fn check_alignment(camera: &LightCamera, spec: &SliceStackSpec) -> Result<()> {
    if (camera.light_dir() - spec.light_dir()).norm() > 1e-9 {
        return Err(Error::Parameter(
            "slice stack and light camera disagree on the light direction".into(),
        ));
    }
    Ok(())
}

/// Sweeps the slices front to back from the light and records the light
/// arriving at each slice for every texel.
///
/// Texels are independent, so the sweep runs texel-parallel; within a texel
/// the slices are strictly sequential, which keeps the result identical for
/// any worker count.
pub fn build_attenuation_buffer(
    volume: &VolumeDataset,
    tf: &TransferFunction,
    camera: &LightCamera,
    spec: &SliceStackSpec,
    options: &BufferOptions,
) -> Result<AttenuationBuffer> {
    check_alignment(camera, spec)?;
    let (w, h) = camera.resolution();
    if w == 0 || h == 0 {
        return Err(Error::Parameter("light buffer resolution must be positive".into()));
    }
    if !(options.reference_spacing > 0.0) {
        return Err(Error::Parameter("reference spacing must be positive".into()));
    }
    let n = spec.n_slices();
    let l = spec.light_dir();
    let ratio = spec.spacing() / options.reference_spacing;
    let comp = options.compensation_n;
    let offsets = spec.plane_offsets();

    let mut data = vec![0f32; w * h * n];
    data.par_chunks_mut(w * n).enumerate().for_each(|(j, row)| {
        for (i, texel) in row.chunks_exact_mut(n).enumerate() {
            let origin = camera.texel_origin(i, j);
            let mut transmittance = 1.0f64;
            for (k, out) in texel.iter_mut().enumerate() {
                let p = origin + l * offsets[k];
                if !inside_unit_cube(&p, 1e-9) {
                    *out = transmittance as f32;
                    continue;
                }
                let alpha = correct_opacity(tf.opacity(volume.sample_trilinear(&p)), ratio);
                let stored = if comp > 0.0 {
                    transmittance * (1.0 + alpha).powf(comp)
                } else {
                    transmittance
                };
                *out = stored as f32;
                transmittance *= 1.0 - alpha;
            }
        }
    });

    Ok(AttenuationBuffer {
        shadow_matrix: camera.shadow_matrix(),
        camera: camera.clone(),
        spec: spec.clone(),
        compensation_n: comp,
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::cube_vertex;
    use crate::slicing::make_slice_stack;
    use crate::transfer::ControlPoint;

    fn camera(dir: Vec3, res: usize) -> LightCamera {
        LightCamera::new(dir, Rgb::new(1.0, 1.0, 1.0), (res, res)).unwrap()
    }

    /// Transfer function with constant opacity `a` everywhere.
    fn constant_tf(a: f64) -> TransferFunction {
        TransferFunction::new(vec![
            ControlPoint::new(0.0, [1.0, 1.0, 1.0, a]),
            ControlPoint::new(1.0, [1.0, 1.0, 1.0, a]),
        ])
        .unwrap()
    }

    #[test]
    fn frustum_contains_cube() {
        for dir in [Vec3::z(), Vec3::new(1.0, 2.0, -0.5), Vec3::new(0.0, -1.0, 0.0)] {
            let cam = camera(dir, 8);
            let m = cam.shadow_matrix();
            for i in 0..8 {
                let c = m * cube_vertex(i).push(1.0);
                for a in 0..3 {
                    assert!(c[a].abs() <= 1.0 + 1e-9, "{c:?}");
                }
            }
            let v = cam.view_matrix() * cam.light_dir().push(0.0);
            assert!((v - nalgebra::Vector4::new(0.0, 0.0, -1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn light_uv_cases() {
        let cam = camera(Vec3::z(), 4);
        let spec = make_slice_stack(Vec3::z(), 4).unwrap();
        let b = AttenuationBuffer::from_transmittance(cam, spec, vec![1.0; 64]).unwrap();
        let (u, v) = b.world_to_light_uv(&Vec3::new(0.25, 0.75, 0.3));
        assert!((u - 0.25).abs() < 1e-12 && (v - 0.75).abs() < 1e-12);

        let diag = Vec3::new(1.0, -1.0, 0.5);
        let cam = camera(diag, 4);
        let spec = make_slice_stack(diag, 4).unwrap();
        let b = AttenuationBuffer::from_transmittance(cam, spec, vec![1.0; 64]).unwrap();
        let (u, v) = b.world_to_light_uv(&Vec3::repeat(0.5));
        assert!((u - 0.5).abs() < 1e-12 && (v - 0.5).abs() < 1e-12);
        let on_edge = (0..8).any(|i| {
            let (u, v) = b.world_to_light_uv(&cube_vertex(i));
            [u, v].iter().any(|c| c.abs() < 1e-12 || (c - 1.0).abs() < 1e-12)
        });
        assert!(on_edge);
    }

    #[test]
    fn shadow_matrix_with_identity_eye_matches_world_path() {
        let cam = camera(Vec3::new(0.3, -0.4, 0.8), 4);
        let model = Mat4::new_translation(&Vec3::new(0.1, 0.0, -0.2));
        let eye_view = Mat4::look_at_rh(
            &nalgebra::Point3::new(2.0, 1.0, 3.0),
            &nalgebra::Point3::new(0.5, 0.5, 0.5),
            &Vec3::y(),
        );
        let inputs = ShadowMatrixInputs {
            light_proj: cam.proj_matrix(),
            light_view: cam.view_matrix(),
            eye_view_inverse: eye_view.try_inverse().unwrap(),
            eye_model_view: eye_view * model,
        };
        let obj = Vec3::new(0.2, 0.3, 0.4);
        let world = (model * obj.push(1.0)).xyz();
        let (u0, v0) = inputs.uv(&obj);
        let (u1, v1) = clip_to_uv(&cam.shadow_matrix(), &world);
        assert!((u0 - u1).abs() < 1e-12 && (v0 - v1).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(LightCamera::new(Vec3::z(), Rgb::repeat(1.0), (0, 4)).is_err());
        assert!(LightCamera::new(Vec3::zeros(), Rgb::repeat(1.0), (4, 4)).is_err());
        let cam = camera(Vec3::z(), 4);
        let other = make_slice_stack(Vec3::x(), 4).unwrap();
        let vol = VolumeDataset::from_fn([2, 2, 2], |_, _, _| 0.0).unwrap();
        let tf = constant_tf(0.0);
        assert!(build_attenuation_buffer(&vol, &tf, &cam, &other, &BufferOptions::default()).is_err());
    }

    #[test]
    fn transparent_volume_keeps_full_light() {
        let vol = VolumeDataset::from_fn([8, 8, 8], |x, _, _| x as f32 / 7.0).unwrap();
        let tf = constant_tf(0.0);
        let dir = Vec3::new(0.2, -1.0, 0.4);
        let light = LightCamera::new(dir, Rgb::new(0.9, 0.8, 0.7), (16, 16)).unwrap();
        let spec = make_slice_stack(dir, 16).unwrap();
        let b = build_attenuation_buffer(&vol, &tf, &light, &spec, &BufferOptions::default()).unwrap();
        assert!(b.data.iter().all(|&t| t == 1.0));
        let l = b.lookup_light(&Vec3::new(0.3, 0.4, 0.5), LookupMode::Linear);
        assert_eq!(l, Rgb::new(0.9, 0.8, 0.7));
    }

    /// Homogeneous volume with corrected per-slice opacity exactly 0.5.
    fn half_per_slice(n: usize) -> AttenuationBuffer {
        let spec = make_slice_stack(Vec3::z(), n).unwrap();
        // 1 - (1 - a)^(spacing / ref) = 0.5
        let a = 1.0 - 0.5f64.powf(REFERENCE_SPACING / spec.spacing());
        let vol = VolumeDataset::from_fn([4, 4, 4], |_, _, _| 0.5).unwrap();
        let cam = camera(Vec3::z(), 8);
        build_attenuation_buffer(&vol, &constant_tf(a), &cam, &spec, &BufferOptions::default())
            .unwrap()
    }

    #[test]
    fn homogeneous_layers_follow_closed_form() {
        let b = half_per_slice(6);
        for k in 0..6 {
            let expect = 0.5f64.powi(k as i32);
            for t in b.layer(k) {
                assert!((t as f64 - expect).abs() < 1e-6, "layer {k}: {t}");
            }
        }
        for k in 0..6 {
            let p = Vec3::new(0.37, 0.61, b.spec().offset(k));
            let expect = 0.5f64.powi(k as i32);
            assert!((b.lookup_transmittance(&p, LookupMode::Nearest) - expect).abs() < 1e-6);
            // linear mode: layer k is reached at the start of bin k
            let start = Vec3::new(0.37, 0.61, k as f64 / 6.0);
            assert!((b.lookup_transmittance(&start, LookupMode::Linear) - expect).abs() < 1e-6);
        }
        // on plane 2, halfway through bin 2, the linear mode blends layers 2 and 3
        let p = Vec3::new(0.5, 0.5, b.spec().offset(2));
        let expect = 0.5 * (0.25 + 0.125);
        assert!((b.lookup_transmittance(&p, LookupMode::Linear) - expect).abs() < 1e-6);
    }

    #[test]
    fn opaque_slab_blocks_light() {
        // value 1 for z < 0.5, 0 elsewhere; opacity equals the value
        let n = 17;
        let vol = VolumeDataset::from_fn([n, n, n], |_, _, z| if z <= 7 { 1.0 } else { 0.0 }).unwrap();
        let tf = TransferFunction::preset("grayscale").unwrap();
        let spec = make_slice_stack(Vec3::z(), 16).unwrap();
        let cam = camera(Vec3::z(), 8);
        let b = build_attenuation_buffer(&vol, &tf, &cam, &spec, &BufferOptions::default()).unwrap();
        assert!(b.layer(0).iter().all(|&t| t == 1.0));
        for k in 8..16 {
            assert!(b.layer(k).iter().all(|&t| t == 0.0), "layer {k}");
        }
        let behind = Vec3::new(0.5, 0.5, 0.8);
        assert_eq!(b.lookup_light(&behind, LookupMode::Linear), Rgb::zeros());
        // before the first slice or outside the footprint: unattenuated
        assert_eq!(b.lookup_transmittance(&Vec3::new(0.5, 0.5, -0.1), LookupMode::Linear), 1.0);
        assert_eq!(b.lookup_transmittance(&Vec3::new(1.5, 0.5, 0.8), LookupMode::Linear), 1.0);
    }

    #[test]
    fn compensation_brightens_layers() {
        let spec = make_slice_stack(Vec3::z(), 8).unwrap();
        let vol = VolumeDataset::from_fn([4, 4, 4], |_, _, _| 0.5).unwrap();
        let cam = camera(Vec3::z(), 4);
        let tf = constant_tf(0.02);
        let plain = build_attenuation_buffer(&vol, &tf, &cam, &spec, &BufferOptions::default()).unwrap();
        let opts = BufferOptions {
            compensation_n: 3.0,
            ..Default::default()
        };
        let comp = build_attenuation_buffer(&vol, &tf, &cam, &spec, &opts).unwrap();
        let alpha = correct_opacity(0.02, spec.spacing() / REFERENCE_SPACING);
        for k in 0..8 {
            let a = plain.texel(1, 1, k) as f64;
            let b = comp.texel(1, 1, k) as f64;
            assert!((b - a * (1.0 + alpha).powf(3.0)).abs() < 1e-5);
        }
        assert_eq!(comp.compensation_n(), 3.0);
    }

    #[test]
    fn layer_image_dimensions() {
        let b = half_per_slice(4);
        let img = b.layer_image(3);
        assert_eq!((img.width(), img.height()), (8, 8));
        assert!((img.get(3, 3)[0] - 0.125).abs() < 1e-6);
    }
}
