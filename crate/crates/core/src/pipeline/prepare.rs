//! Turning tiles into model inputs.

use serde::{Deserialize, Serialize};

use crate::bandselect::replicate_channels;
use crate::error::{Error, Result};
use crate::hypercube::{HyperCube, Tile};
use crate::models::liunet_min_length;
use crate::nn::Tensor;

/// Channel standard deviations below this are treated as constant.
pub const MIN_CHANNEL_STD: f64 = 1e-12;

/// How often a `k`-channel spectrum is tiled so the 1D network's pooling
/// chain stays valid: `ceil(91 / k)` below the minimum length, else once.
pub fn replication_repeats(k: usize) -> usize {
    let min = liunet_min_length();
    if k == 0 || k >= min {
        1
    } else {
        min.div_ceil(k)
    }
}

/// Length of the 1D network input for a `k`-channel selection.
pub fn spectral_input_length(k: usize) -> usize {
    k * replication_repeats(k)
}

/// Channel selection followed by per-channel affine scaling
/// `(v − mean) / std`. Stored with a trained model so inference applies the
/// same mapping as training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputTransform {
    pub channels: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl InputTransform {
    /// Selection only; values pass through unchanged.
    pub fn select(channels: &[usize]) -> Self {
        Self {
            channels: channels.to_vec(),
            mean: vec![0.0; channels.len()],
            std: vec![1.0; channels.len()],
        }
    }

    /// Standardizes each selected channel with its population mean and
    /// standard deviation over every `stride`-th pixel of `tiles`.
    /// Constant channels keep a unit scale.
    pub fn fit(tiles: &[Tile], channels: &[usize], stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidArgument(
                "pixel stride must be at least 1".into(),
            ));
        }
        let k = channels.len();
        let mut count = 0usize;
        let mut sum = vec![0.0; k];
        for t in tiles {
            check_channels(channels, t.cube.channels())?;
            for i in (0..t.cube.pixel_count()).step_by(stride) {
                let s = t.cube.spectrum_at(i);
                for (acc, &c) in sum.iter_mut().zip(channels) {
                    *acc += s[c] as f64;
                }
                count += 1;
            }
        }
        if count < 2 {
            return Err(Error::TooFewSamples {
                needed: 2,
                got: count,
            });
        }
        let mean: Vec<f64> = sum.iter().map(|s| s / count as f64).collect();
        let mut sq = vec![0.0; k];
        for t in tiles {
            for i in (0..t.cube.pixel_count()).step_by(stride) {
                let s = t.cube.spectrum_at(i);
                for ((acc, &c), m) in sq.iter_mut().zip(channels).zip(&mean) {
                    let d = s[c] as f64 - m;
                    *acc += d * d;
                }
            }
        }
        let std = sq
            .iter()
            .map(|q| {
                let sd = (q / count as f64).sqrt();
                if sd < MIN_CHANNEL_STD {
                    1.0
                } else {
                    sd
                }
            })
            .collect();
        Ok(Self {
            channels: channels.to_vec(),
            mean,
            std,
        })
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn check(&self, available: usize) -> Result<()> {
        if self.mean.len() != self.len() || self.std.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "input transform has {} channels but {} means and {} deviations",
                self.len(),
                self.mean.len(),
                self.std.len()
            )));
        }
        check_channels(&self.channels, available)
    }

    fn apply(&self, i: usize, v: f32) -> f64 {
        (v as f64 - self.mean[i]) / self.std[i]
    }

    fn map_spectrum<'a>(&'a self, spectrum: &'a [f32]) -> impl Iterator<Item = f64> + 'a {
        self.channels
            .iter()
            .enumerate()
            .map(move |(i, &c)| self.apply(i, spectrum[c]))
    }
}

fn check_channels(channels: &[usize], available: usize) -> Result<()> {
    if channels.is_empty() {
        return Err(Error::EmptyInput("channel selection".into()));
    }
    match channels.iter().find(|&&c| c >= available) {
        Some(&channel) => Err(Error::ChannelMissing {
            channel,
            channels: available,
        }),
        None => Ok(()),
    }
}

/// Transforms one pixel spectrum and replicates the result into a `[L, 1]`
/// tensor for the 1D network.
pub fn prepare_spectrum(spectrum: &[f32], input: &InputTransform) -> Result<Tensor> {
    input.check(spectrum.len())?;
    let picked: Vec<f64> = input.map_spectrum(spectrum).collect();
    let values = replicate_channels(&picked, replication_repeats(input.len()));
    let len = values.len();
    Tensor::new(vec![len, 1], values)
}

/// Top-left corners of the crops covering an `h × w` image: offsets 0 and
/// `extent − crop` per axis (a single offset when they coincide).
pub fn crop_offsets(h: usize, w: usize, crop: (usize, usize)) -> Result<Vec<(usize, usize)>> {
    if h < crop.0 || w < crop.1 {
        return Err(Error::ShapeMismatch(format!(
            "tile {h}x{w} is smaller than the {}x{} model input",
            crop.0, crop.1
        )));
    }
    let axis = |extent: usize, c: usize| {
        if extent == c {
            vec![0]
        } else {
            vec![0, extent - c]
        }
    };
    let rows = axis(h, crop.0);
    let cols = axis(w, crop.1);
    Ok(rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .collect())
}

/// `[h, w, K]` tensor of the transformed channels over a window of `cube`.
pub fn spatial_crop(
    cube: &HyperCube,
    input: &InputTransform,
    origin: (usize, usize),
    size: (usize, usize),
) -> Result<Tensor> {
    input.check(cube.channels())?;
    if origin.0 + size.0 > cube.height() || origin.1 + size.1 > cube.width() {
        return Err(Error::ShapeMismatch(format!(
            "crop {size:?} at {origin:?} exceeds {}x{} tile",
            cube.height(),
            cube.width()
        )));
    }
    let k = input.len();
    let mut data = Vec::with_capacity(size.0 * size.1 * k);
    for r in origin.0..origin.0 + size.0 {
        for c in origin.1..origin.1 + size.1 {
            data.extend(input.map_spectrum(cube.spectrum(r, c)));
        }
    }
    Tensor::new(vec![size.0, size.1, k], data)
}
