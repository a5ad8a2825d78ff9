//! Emission-absorption compositing with premultiplied colors.

use crate::math::Rgb;
use crate::transfer::ClassifiedSample;

/// Opacity used in place of 1 when converting opacity to extinction.
pub const ALPHA_MAX: f64 = 1.0 - 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CompositingState {
    pub color: Rgb,
    pub alpha: f64,
}

impl CompositingState {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn to_rgba(&self) -> [f32; 4] {
        [
            self.color.x as f32,
            self.color.y as f32,
            self.color.z as f32,
            self.alpha as f32,
        ]
    }
}

/// Front-to-back "under" operator.
#[inline]
pub fn composite_front_to_back(state: CompositingState, s: &ClassifiedSample) -> CompositingState {
    let remaining = 1.0 - state.alpha;
    CompositingState {
        color: state.color + s.emission * remaining,
        alpha: state.alpha + remaining * s.opacity,
    }
}

/// Back-to-front "over" operator on color only.
#[inline]
pub fn composite_back_to_front(color_behind: Rgb, s: &ClassifiedSample) -> Rgb {
    color_behind * (1.0 - s.opacity) + s.emission
}

/// Back-to-front "over" operator carrying the accumulated opacity as well.
#[inline]
pub fn composite_back_to_front_state(behind: CompositingState, s: &ClassifiedSample) -> CompositingState {
    CompositingState {
        color: composite_back_to_front(behind.color, s),
        alpha: behind.alpha * (1.0 - s.opacity) + s.opacity,
    }
}

/// Extinction `tau * dt` of a segment with opacity `alpha`, guarding `alpha = 1`.
#[inline]
pub fn optical_depth_from_opacity(alpha: f64) -> f64 {
    -(1.0 - alpha.clamp(0.0, ALPHA_MAX)).ln()
}

/// Extinction coefficient `tau` for a segment of length `dt` with opacity `alpha`.
pub fn extinction_from_opacity(alpha: f64, dt: f64) -> f64 {
    optical_depth_from_opacity(alpha) / dt
}

/// Transmittance `exp(-sum(dt * tau))`.
///
/// The terms are summed in sorted order so the result is bitwise identical
/// for any permutation of the input.
pub fn sum_extinction(samples: &[(f64, f64)]) -> f64 {
    let mut terms: Vec<f64> = samples.iter().map(|&(tau, dt)| tau * dt).collect();
    terms.sort_by(f64::total_cmp);
    (-terms.iter().sum::<f64>()).exp()
}
