//! Slice-based ray casting for volumetric shadows and single scattering.
//!
//! A light-space attenuation buffer is built once by sweeping planes
//! perpendicular to the light through the volume; ray casting then reads
//! the light arriving at any sample from that buffer. Camera changes reuse
//! the buffer, so only light or transfer-function edits pay for a rebuild.
//!
//! ```
//! use slicecast::{
//!     build_attenuation_buffer, make_slice_stack, render, BufferOptions, LightCamera,
//!     RenderSettings, ShadingMode, TransferFunction, synthetic,
//! };
//!
//! let volume = synthetic::sphere_blob(16, 1).unwrap();
//! let tf = TransferFunction::preset("blob").unwrap();
//! let settings = RenderSettings {
//!     viewport: [32, 32],
//!     shading: ShadingMode::SbrcShadow,
//!     ..Default::default()
//! };
//! let l = settings.light.direction();
//! let camera = LightCamera::new(l, settings.light.color(), (64, 64)).unwrap();
//! let stack = make_slice_stack(l, 64).unwrap();
//! let buffer = build_attenuation_buffer(&volume, &tf, &camera, &stack, &BufferOptions::default()).unwrap();
//! let image = render(&volume, &tf, &settings, Some(&buffer)).unwrap();
//! assert_eq!(image.width(), 32);
//! ```

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod half_angle;
pub mod image;
pub mod lightbuffer;
pub mod math;
pub mod raycast;
pub mod scene;
pub mod slicing;
pub mod synthetic;
pub mod transfer;
pub mod volume;

pub use bench::{measure, read_csv, run_sweep, write_csv, BenchRecord, BenchSweep, Method, Resolution};
pub use error::{Error, Result};
pub use half_angle::{render_half_angle, HalfAngleOutput, HalfAngleSetup};
pub use image::{diff_images, DiffMetrics, Image};
pub use lightbuffer::{
    build_attenuation_buffer, AttenuationBuffer, BufferOptions, DirectionalLight, LightCamera,
    LookupMode, ShadowMatrixInputs, REFERENCE_SPACING,
};
pub use math::{Mat4, Ray, Rgb, Vec3};
pub use raycast::{
    composite_back_to_front, composite_back_to_front_state, composite_front_to_back, cone_project,
    extinction_from_opacity, render, rodrigues_rotate, shade_cone, shade_phong, shade_sbrc_shadow,
    shade_shell, shadow_oracle, sum_extinction, Camera, CompositingState, ConeKernel, PhongParams,
    RenderSettings, ShadingMode, ShadowFactor, ShellKernel, ShellSettings, ALPHA_MAX,
};
pub use scene::{BufferSettings, DatasetSource, FrameOutput, Renderer, Scene, SceneConfig, TransferSource};
pub use slicing::{make_slice_stack, plane_cube_polygon, SlicePolygon, SliceStackSpec};
pub use synthetic::SyntheticShape;
pub use transfer::{correct_opacity, ClassifiedSample, ControlPoint, TransferFunction};
pub use volume::{load_raw, load_raw_with_sidecar, ScalarType, VolumeDataset, VolumeDescriptor};
