//! Seeded synthetic scenes for demos and tests: three class prototype
//! spectra with per-pixel brightness jitter and noise, laid out as
//! rectangular cloud patches over a clear background.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hypercube::{ClassMask, HyperCube, NUM_CLASSES};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Half-width of the uniform additive noise.
    pub noise: f32,
    /// Number of cloud rectangles dropped on the background.
    pub patches: usize,
}

impl SynthConfig {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            noise: 0.03,
            patches: 6,
        }
    }
}

/// Noise-free reflectance of `class` at channel `band` of `channels`.
pub fn prototype(class: u8, band: usize, channels: usize) -> f32 {
    let x = if channels > 1 {
        band as f32 / (channels - 1) as f32
    } else {
        0.0
    };
    match class {
        0 => 0.08 + 0.12 * x,
        1 => 0.35 + 0.10 * (std::f32::consts::PI * x).sin(),
        _ => 0.75 - 0.20 * x,
    }
}

fn spectrum_value(class: u8, band: usize, channels: usize, gain: f32, noise: f32) -> f32 {
    prototype(class, band, channels) * gain + noise
}

/// Builds a cube from a label layout.
pub fn render(
    mask: &ClassMask,
    channels: usize,
    noise: f32,
    rng: &mut ChaCha8Rng,
) -> Result<HyperCube> {
    if channels == 0 {
        return Err(Error::InvalidArgument(
            "synthetic cube needs channels".into(),
        ));
    }
    let mut data = Vec::with_capacity(mask.len() * channels);
    for &label in mask.labels() {
        let gain = rng.random_range(0.9f32..1.1);
        for b in 0..channels {
            let n = if noise > 0.0 {
                rng.random_range(-noise..noise)
            } else {
                0.0
            };
            data.push(spectrum_value(label, b, channels, gain, n));
        }
    }
    HyperCube::new(mask.height(), mask.width(), channels, data)
}

/// Spatially coherent label layout: clear sky with random thin and thick
/// cloud rectangles, thick patches drawn after thin ones.
pub fn patch_mask(
    height: usize,
    width: usize,
    patches: usize,
    rng: &mut ChaCha8Rng,
) -> Result<ClassMask> {
    let mut labels = vec![0u8; height * width];
    let mut rects = Vec::with_capacity(patches);
    for i in 0..patches {
        let class = 1 + (i % (NUM_CLASSES - 1)) as u8;
        let h = rng
            .random_range(height / 8..=(height / 2).max(height / 8 + 1))
            .max(1);
        let w = rng
            .random_range(width / 8..=(width / 2).max(width / 8 + 1))
            .max(1);
        let r0 = rng.random_range(0..=height.saturating_sub(h));
        let c0 = rng.random_range(0..=width.saturating_sub(w));
        rects.push((class, r0, c0, h, w));
    }
    rects.sort_by_key(|r| r.0);
    for (class, r0, c0, h, w) in rects {
        for r in r0..(r0 + h).min(height) {
            labels[r * width + c0..r * width + (c0 + w).min(width)].fill(class);
        }
    }
    ClassMask::new(height, width, labels)
}

/// A synthetic scene and its ground truth.
pub fn scene(config: &SynthConfig, seed: u64) -> Result<(HyperCube, ClassMask)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = patch_mask(config.height, config.width, config.patches, &mut rng)?;
    let cube = render(&mask, config.channels, config.noise, &mut rng)?;
    Ok((cube, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_all_classes_present() {
        let cfg = SynthConfig::new(64, 64, 10);
        let a = scene(&cfg, 5).unwrap();
        assert_eq!(a, scene(&cfg, 5).unwrap());
        assert_ne!(a.0, scene(&cfg, 6).unwrap().0);
        assert!(a.1.class_counts().iter().all(|&n| n > 0));
    }

    #[test]
    fn prototypes_are_separated() {
        for b in 0..20 {
            let p: Vec<f32> = (0..3).map(|c| prototype(c, b, 20)).collect();
            assert!(p[0] + 0.1 < p[1] && p[1] + 0.05 < p[2]);
        }
    }
}
