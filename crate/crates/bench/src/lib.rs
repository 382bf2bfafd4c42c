//! Shared fixtures for the benchmark targets.

use stereo_core::synth::{synth_pair, SynthScene};
use stereo_core::{LabeledSample, Tensor};

/// Deterministic pseudo-random tensor in `[-1, 1)` without an RNG dependency.
pub fn noise(shape: &[usize], seed: u64) -> Tensor<f32> {
    Tensor::from_fn(shape, |i| {
        let mut z = seed.wrapping_add((i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 40) as f32 / (1u64 << 23) as f32 - 1.0
    })
}

/// A synthetic labelled pair of the given size.
pub fn scene(seed: u64, width: usize, height: usize, ndisp: usize) -> LabeledSample<f32> {
    synth_pair(&SynthScene::random(seed, width, height, ndisp)).expect("valid synthetic scene")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_is_bounded_and_deterministic() {
        let a = noise(&[4, 8], 3);
        assert_eq!(a, noise(&[4, 8], 3));
        assert!(a.data().iter().all(|v| (-1.0..1.0).contains(v)));
        assert_ne!(a, noise(&[4, 8], 4));
    }
}
