//! Fixed scenes shared by the benchmarks.

use slicecast::{
    build_attenuation_buffer, make_slice_stack, synthetic, AttenuationBuffer, BufferOptions, LightCamera,
    RenderSettings, TransferFunction, VolumeDataset,
};

pub struct BenchScene {
    pub volume: VolumeDataset,
    pub tf: TransferFunction,
    pub settings: RenderSettings,
}

impl BenchScene {
    /// Perforated block, `size`³ voxels, square viewport.
    pub fn engine(size: usize, viewport: usize) -> Self {
        BenchScene {
            volume: synthetic::engine_block(size).expect("valid size"),
            tf: TransferFunction::preset("engine").expect("preset exists"),
            settings: RenderSettings {
                viewport: [viewport, viewport],
                ..Default::default()
            },
        }
    }

    pub fn buffer(&self, n_slices: usize, resolution: usize) -> AttenuationBuffer {
        let l = self.settings.light.direction();
        let camera = LightCamera::new(l, self.settings.light.color(), (resolution, resolution)).expect("valid light");
        let stack = make_slice_stack(l, n_slices).expect("valid slice count");
        build_attenuation_buffer(&self.volume, &self.tf, &camera, &stack, &BufferOptions::default())
            .expect("buffer builds")
    }
}
