//! Half-angle slicing baseline.
//!
//! The cube is sliced perpendicular to the vector halfway between the view
//! and light directions. Every slice is drawn twice: once into the eye image,
//! shadowed by the running light-space transmittance, and once into the
//! light image to attenuate it for the following slices.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::lightbuffer::{bilinear_axis, LightCamera};
use crate::math::{inside_unit_cube, Rgb, Vec3};
use crate::raycast::{
    composite_back_to_front_state, composite_front_to_back, CompositingState, RenderSettings,
};
use crate::slicing::make_slice_stack;
use crate::transfer::{correct_opacity, ClassifiedSample, TransferFunction};
use crate::volume::VolumeDataset;

#[derive(Clone, Debug)]
pub struct HalfAngleOutput {
    pub image: Image,
    /// Eye and light passes issued, two per slice.
    pub pass_count: usize,
}

/// Slicing axis and traversal order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HalfAngleSetup {
    pub half_vector: Vec3,
    /// Slices are visited front to back from the eye when true, back to
    /// front otherwise. Either way they are visited in light order.
    pub front_to_back: bool,
}

impl HalfAngleSetup {
    pub fn new(view_dir: &Vec3, light_dir: &Vec3) -> Self {
        let v = view_dir.normalize();
        let l = light_dir.normalize();
        let front_to_back = v.dot(&l) >= 0.0;
        let h = if front_to_back { v + l } else { l - v };
        HalfAngleSetup {
            half_vector: h.try_normalize(1e-9).unwrap_or(l),
            front_to_back,
        }
    }
}

#[derive(Clone, Copy)]
struct PixelRay {
    origin: Vec3,
    dir: Vec3,
    t0: f64,
    t1: f64,
}

pub fn render_half_angle(
    volume: &VolumeDataset,
    tf: &TransferFunction,
    settings: &RenderSettings,
    n_slices: usize,
    light_resolution: (usize, usize),
) -> Result<HalfAngleOutput> {
    render_half_angle_with(volume, tf, settings, n_slices, light_resolution, |_, _| {})
}

/// Like [`render_half_angle`], calling `on_light_pass(k, light)` after the
/// light pass of slice `k`.
pub fn render_half_angle_with(
    volume: &VolumeDataset,
    tf: &TransferFunction,
    settings: &RenderSettings,
    n_slices: usize,
    light_resolution: (usize, usize),
    mut on_light_pass: impl FnMut(usize, &[f64]),
) -> Result<HalfAngleOutput> {
    settings.validate()?;
    if n_slices == 0 {
        return Err(Error::Parameter("slice count must be at least 1".into()));
    }
    let l = settings.light.direction();
    let light_color = settings.light.color();
    let setup = HalfAngleSetup::new(&settings.camera.forward(), &l);
    let h = setup.half_vector;
    let stack = make_slice_stack(h, n_slices)?;
    let dh = stack.spacing();
    let light_cam = LightCamera::new(l, light_color, light_resolution)?;
    let (lw, lh) = light_resolution;
    let shadow = light_cam.shadow_matrix();
    let reference = settings.reference_spacing;
    let floor = settings.ambient_floor;

    let [w, ht] = settings.viewport;
    let gen = settings.camera.ray_generator(w, ht);
    let rays: Vec<Option<PixelRay>> = (0..w * ht)
        .map(|idx| {
            let r = gen.ray(idx % w, idx / w);
            r.intersect_unit_cube().map(|(t0, t1)| PixelRay {
                origin: r.origin,
                dir: r.dir,
                t0,
                t1,
            })
        })
        .collect();

    let mut eye = vec![CompositingState::empty(); w * ht];
    let mut light = vec![1.0f64; lw * lh];
    let texel_origins: Vec<Vec3> = (0..lw * lh)
        .map(|idx| light_cam.texel_origin(idx % lw, idx / lw))
        .collect();
    let h_dot_l = h.dot(&l);
    let light_ratio = dh / h_dot_l / reference;

    let shadow_factor = |t: f64| -> Rgb {
        light_color.map(|c| if c > 0.0 { t.max(floor) } else { floor })
    };

    for k in 0..n_slices {
        let offset = stack.offset(k);

        // eye pass
        {
            let light = &light;
            eye.par_iter_mut().zip(rays.par_iter()).for_each(|(state, ray)| {
                let Some(r) = ray else { return };
                let hd = h.dot(&r.dir);
                if hd.abs() < 1e-12 {
                    return;
                }
                let t = (offset - h.dot(&r.origin)) / hd;
                if t < r.t0 || t > r.t1 {
                    return;
                }
                let p = r.origin + r.dir * t;
                let raw = tf.classify(volume.sample_trilinear(&p));
                if raw.opacity <= 0.0 {
                    return;
                }
                let c = raw.opacity_corrected(dh / hd.abs() / reference);
                let uv = clip_uv(&shadow, &p);
                let lt = sample_light(light, lw, lh, uv);
                let s = ClassifiedSample::new(c.emission.component_mul(&shadow_factor(lt)), c.opacity);
                *state = if setup.front_to_back {
                    composite_front_to_back(*state, &s)
                } else {
                    composite_back_to_front_state(*state, &s)
                };
            });
        }

        // light pass
        light
            .par_iter_mut()
            .zip(texel_origins.par_iter())
            .for_each(|(t, base)| {
                let p = base + l * ((offset - h.dot(base)) / h_dot_l);
                if !inside_unit_cube(&p, 1e-9) {
                    return;
                }
                let a = correct_opacity(tf.opacity(volume.sample_trilinear(&p)), light_ratio);
                *t *= 1.0 - a;
            });
        on_light_pass(k, &light);
    }

    let pixels = eye.iter().map(|s| s.to_rgba()).collect();
    Ok(HalfAngleOutput {
        image: Image::from_pixels(w, ht, pixels)?,
        pass_count: 2 * n_slices,
    })
}

#[inline]
fn clip_uv(m: &crate::math::Mat4, p: &Vec3) -> (f64, f64) {
    let c = m * p.push(1.0);
    ((c.x / c.w + 1.0) * 0.5, (c.y / c.w + 1.0) * 0.5)
}

#[inline]
fn sample_light(light: &[f64], w: usize, h: usize, (u, v): (f64, f64)) -> f64 {
    if !(0.0..=1.0).contains(&u) || !(0.0..=1.0).contains(&v) {
        return 1.0;
    }
    let (x0, x1, fx) = bilinear_axis(u, w);
    let (y0, y1, fy) = bilinear_axis(v, h);
    let at = |x: usize, y: usize| light[y * w + x];
    let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
    let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::diff_images;
    use crate::lightbuffer::{build_attenuation_buffer, BufferOptions};
    use crate::raycast::{render, Camera, ShadingMode};

    fn settings() -> RenderSettings {
        RenderSettings {
            viewport: [48, 48],
            step: 1.0 / 128.0,
            ..Default::default()
        }
    }

    #[test]
    fn setup_is_within_90_degrees_of_both() {
        let dirs = [
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(-1.0, 0.2, 0.1),
            Vec3::new(0.3, -0.5, 0.8),
            Vec3::new(0.0, 0.0, -1.0),
        ];
        for v in &dirs {
            for l in &dirs {
                let s = HalfAngleSetup::new(v, l);
                assert!(s.half_vector.dot(&l.normalize()) > 0.0);
                let toward = if s.front_to_back { v.normalize() } else { -v.normalize() };
                assert!(s.half_vector.dot(&toward) >= -1e-12);
            }
        }
        // view opposite to light: half vector undefined for v + l, falls to l - v = 2l
        let s = HalfAngleSetup::new(&Vec3::x(), &-Vec3::x());
        assert!(!s.front_to_back);
        assert!((s.half_vector + Vec3::x()).norm() < 1e-12);
    }

    #[test]
    fn empty_volume_is_transparent() {
        let v = VolumeDataset::from_fn([8, 8, 8], |_, _, _| 0.0).unwrap();
        let tf = TransferFunction::preset("grayscale").unwrap();
        for n in [1, 64, 256] {
            let out = render_half_angle(&v, &tf, &settings(), n, (16, 16)).unwrap();
            assert!(out.image.is_fully_transparent());
            assert_eq!(out.pass_count, 2 * n);
        }
    }

    #[test]
    fn zero_slices_rejected() {
        let v = VolumeDataset::from_fn([4, 4, 4], |_, _, _| 0.0).unwrap();
        let tf = TransferFunction::preset("grayscale").unwrap();
        assert!(render_half_angle(&v, &tf, &settings(), 0, (8, 8)).is_err());
    }

    #[test]
    fn light_accumulation_is_monotone() {
        let v = VolumeDataset::from_fn([12, 12, 12], |x, y, z| ((x * 7 + y * 3 + z * 5) % 11) as f32 / 10.0).unwrap();
        let tf = TransferFunction::preset("engine").unwrap();
        let mut prev: Option<Vec<f64>> = None;
        render_half_angle_with(&v, &tf, &settings(), 40, (16, 16), |_, light| {
            for &t in light {
                assert!((0.0..=1.0).contains(&t));
            }
            if let Some(p) = &prev {
                assert!(p.iter().zip(light).all(|(a, b)| b <= a));
            }
            prev = Some(light.to_vec());
        })
        .unwrap();
    }

    fn slab_scene() -> (VolumeDataset, TransferFunction, RenderSettings) {
        // occluding block above a floor plate, light from above
        let v = VolumeDataset::from_fn([33, 33, 33], |x, y, z| {
            let (x, y, z) = (x as f64 / 32.0, y as f64 / 32.0, z as f64 / 32.0);
            if (0.3..=0.7).contains(&x) && (0.3..=0.7).contains(&z) && (0.7..=0.8).contains(&y) {
                1.0
            } else if (0.1..=0.2).contains(&y) {
                0.6
            } else {
                0.0
            }
        })
        .unwrap();
        let tf = TransferFunction::new(vec![
            crate::transfer::ControlPoint::new(0.0, [0.0, 0.0, 0.0, 0.0]),
            crate::transfer::ControlPoint::new(0.3, [0.0, 0.0, 0.0, 0.0]),
            crate::transfer::ControlPoint::new(0.6, [0.9, 0.9, 0.9, 0.6]),
            crate::transfer::ControlPoint::new(1.0, [1.0, 1.0, 1.0, 1.0]),
        ])
        .unwrap();
        let mut s = settings();
        s.light.direction = [0.1, -1.0, 0.15];
        s.camera = Camera {
            eye: [0.5, 2.8, 1.9],
            target: [0.5, 0.3, 0.5],
            up: [0.0, 1.0, 0.0],
            fov_deg: 40.0,
        };
        (v, tf, s)
    }

    #[test]
    fn slab_shadow_agrees_with_slice_based_raycasting() {
        let (v, tf, mut s) = slab_scene();
        let n = 128;
        let has = render_half_angle(&v, &tf, &s, n, (64, 64)).unwrap();
        let l = s.light.direction();
        let cam = LightCamera::new(l, s.light.color(), (64, 64)).unwrap();
        let stack = make_slice_stack(l, n).unwrap();
        let b = build_attenuation_buffer(&v, &tf, &cam, &stack, &BufferOptions::default()).unwrap();
        s.shading = ShadingMode::SbrcShadow;
        s.early_termination_alpha = 1.0;
        let rc = render(&v, &tf, &s, Some(&b)).unwrap();
        let m = diff_images(&has.image, &rc).unwrap();
        assert!(m.mean_abs <= 0.1, "{m:?}");

        // and the shadow is really there: the floor under the block is darker
        s.shading = ShadingMode::None;
        let lit = render(&v, &tf, &s, None).unwrap();
        let sum = |img: &Image| img.pixels().iter().map(|p| p[0] as f64).sum::<f64>();
        assert!(sum(&has.image) < sum(&lit) - 1.0);
    }

    #[test]
    fn refinement_converges_on_smooth_volume() {
        let v = VolumeDataset::from_fn([16, 16, 16], |x, y, z| {
            let d = ((x as f32 - 7.5).powi(2) + (y as f32 - 7.5).powi(2) + (z as f32 - 7.5).powi(2)).sqrt();
            (1.0 - d / 9.0).max(0.0)
        })
        .unwrap();
        let tf = TransferFunction::preset("blob").unwrap();
        let s = settings();
        let imgs: Vec<Image> = [32, 64, 128, 256]
            .iter()
            .map(|&n| render_half_angle(&v, &tf, &s, n, (32, 32)).unwrap().image)
            .collect();
        let d1 = diff_images(&imgs[0], &imgs[1]).unwrap().mean_abs;
        let d2 = diff_images(&imgs[1], &imgs[2]).unwrap().mean_abs;
        let d3 = diff_images(&imgs[2], &imgs[3]).unwrap().mean_abs;
        assert!(d2 < d1 && d3 < d2, "{d1} {d2} {d3}");
    }
}
