//! Hyperspectral cubes, class masks, tiling, composites and dataset statistics.
//!
//! Cubes are stored band-interleaved-by-pixel: for each row, for each column,
//! all channel values. A pixel spectrum is therefore one contiguous slice.

mod composite;
mod io;
mod stats;
mod tiling;

pub use composite::{rgb_composite, RgbImage, DEFAULT_AUX_FRACTION};
pub use io::{
    load_cube, load_mask, load_wavelengths, read_cube, read_mask, save_cube, save_mask, save_ppm,
    save_wavelengths, write_cube, write_mask, write_ppm, CUBE_HEADER_LEN, CUBE_MAGIC, MASK_MAGIC,
};
pub use stats::{class_distribution, DatasetStats, COVERAGE_BINS};
pub use tiling::{load_tiles, save_tiles, tile_scene, Tile, CUBE_EXT, MASK_EXT};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 3;

/// Per-pixel class ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum CloudClass {
    NoCloud = 0,
    ThinCloud = 1,
    ThickCloud = 2,
}

impl CloudClass {
    pub const ALL: [CloudClass; NUM_CLASSES] = [
        CloudClass::NoCloud,
        CloudClass::ThinCloud,
        CloudClass::ThickCloud,
    ];

    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(CloudClass::NoCloud),
            1 => Some(CloudClass::ThinCloud),
            2 => Some(CloudClass::ThickCloud),
            _ => None,
        }
    }

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            CloudClass::NoCloud => "NoCloud",
            CloudClass::ThinCloud => "ThinCloud",
            CloudClass::ThickCloud => "ThickCloud",
        }
    }
}

/// H×W×C radiance cube.
#[derive(Debug, Clone, PartialEq)]
pub struct HyperCube {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
    wavelengths_nm: Option<Vec<f64>>,
}

impl HyperCube {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        let expected = height
            .checked_mul(width)
            .and_then(|n| n.checked_mul(channels))
            .ok_or_else(|| Error::DimMismatch("cube dimensions overflow".into()))?;
        if data.len() != expected {
            return Err(Error::DimMismatch(format!(
                "{height}x{width}x{channels} cube needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
            wavelengths_nm: None,
        })
    }

    /// Cube filled by evaluating `f(row, col, channel)`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for b in 0..channels {
                    data.push(f(r, c, b));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    /// Attaches a per-channel wavelength table; it must be strictly increasing.
    pub fn with_wavelengths(mut self, wavelengths_nm: Vec<f64>) -> Result<Self> {
        if wavelengths_nm.len() != self.channels {
            return Err(Error::DimMismatch(format!(
                "{} wavelengths for {} channels",
                wavelengths_nm.len(),
                self.channels
            )));
        }
        if !wavelengths_nm.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "wavelengths must be strictly increasing".into(),
            ));
        }
        self.wavelengths_nm = Some(wavelengths_nm);
        Ok(self)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn wavelengths_nm(&self) -> Option<&[f64]> {
        self.wavelengths_nm.as_deref()
    }

    pub fn spectrum(&self, row: usize, col: usize) -> &[f32] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Spectrum of the pixel with flat (row-major) index `index`.
    pub fn spectrum_at(&self, index: usize) -> &[f32] {
        let start = index * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn value(&self, row: usize, col: usize, channel: usize) -> f32 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    /// All values of one band in row-major pixel order.
    pub fn band(&self, channel: usize) -> Result<Vec<f32>> {
        if channel >= self.channels {
            return Err(Error::BandOutOfRange {
                band: channel,
                channels: self.channels,
            });
        }
        Ok(self
            .data
            .chunks_exact(self.channels)
            .map(|px| px[channel])
            .collect())
    }

    /// Spatial crop; the wavelength table is carried over.
    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        if row + height > self.height || col + width > self.width {
            return Err(Error::DimMismatch(format!(
                "crop {height}x{width} at ({row},{col}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width * self.channels);
        for r in row..row + height {
            let start = (r * self.width + col) * self.channels;
            data.extend_from_slice(&self.data[start..start + width * self.channels]);
        }
        Ok(Self {
            height,
            width,
            channels: self.channels,
            data,
            wavelengths_nm: self.wavelengths_nm.clone(),
        })
    }

    /// Keeps only the listed channels, in the listed order.
    pub fn select_channels(&self, indices: &[usize]) -> Result<Self> {
        for &i in indices {
            if i >= self.channels {
                return Err(Error::ChannelMissing {
                    channel: i,
                    channels: self.channels,
                });
            }
        }
        let mut data = Vec::with_capacity(self.pixel_count() * indices.len());
        for px in self.data.chunks_exact(self.channels) {
            data.extend(indices.iter().map(|&i| px[i]));
        }
        let wavelengths_nm = self
            .wavelengths_nm
            .as_ref()
            .map(|w| indices.iter().map(|&i| w[i]).collect());
        Ok(Self {
            height: self.height,
            width: self.width,
            channels: indices.len(),
            data,
            wavelengths_nm,
        })
    }
}

/// H×W map of class ids in {0,1,2}.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassMask {
    height: usize,
    width: usize,
    labels: Vec<u8>,
}

impl ClassMask {
    pub fn new(height: usize, width: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::DimMismatch(format!(
                "{height}x{width} mask needs {} labels, got {}",
                height * width,
                labels.len()
            )));
        }
        if let Some(index) = labels.iter().position(|&l| l as usize >= NUM_CLASSES) {
            return Err(Error::InvalidLabel {
                label: labels[index],
                index,
            });
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    pub fn filled(height: usize, width: usize, class: CloudClass) -> Self {
        Self {
            height,
            width,
            labels: vec![class.id(); height * width],
        }
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self> {
        let mut labels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                labels.push(f(r, c));
            }
        }
        Self::new(height, width, labels)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.width + col]
    }

    pub fn crop(&self, row: usize, col: usize, height: usize, width: usize) -> Result<Self> {
        if row + height > self.height || col + width > self.width {
            return Err(Error::DimMismatch(format!(
                "crop {height}x{width} at ({row},{col}) exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut labels = Vec::with_capacity(height * width);
        for r in row..row + height {
            let start = r * self.width + col;
            labels.extend_from_slice(&self.labels[start..start + width]);
        }
        Ok(Self {
            height,
            width,
            labels,
        })
    }

    /// Pixel counts per class.
    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Fraction of pixels labelled Thin or Thick cloud.
    pub fn cloud_fraction(&self) -> f64 {
        if self.labels.is_empty() {
            return 0.0;
        }
        let cloudy = self.labels.iter().filter(|&&l| l != 0).count();
        cloudy as f64 / self.labels.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_is_contiguous() {
        let cube = HyperCube::new(2, 2, 3, (0..12).map(|v| v as f32).collect()).unwrap();
        assert_eq!(cube.spectrum(0, 0), &[0.0, 1.0, 2.0]);
        assert_eq!(cube.spectrum(1, 0), &[6.0, 7.0, 8.0]);
        assert_eq!(cube.band(1).unwrap(), vec![1.0, 4.0, 7.0, 10.0]);
    }

    #[test]
    fn rejects_bad_lengths_and_nan() {
        assert!(matches!(
            HyperCube::new(2, 2, 3, vec![0.0; 11]),
            Err(Error::DimMismatch(_))
        ));
        let mut data = vec![0.0; 12];
        data[5] = f32::NAN;
        assert!(matches!(
            HyperCube::new(2, 2, 3, data),
            Err(Error::NonFinite { index: 5 })
        ));
    }

    #[test]
    fn wavelengths_must_increase() {
        let cube = HyperCube::new(1, 1, 3, vec![0.0; 3]).unwrap();
        assert!(cube
            .clone()
            .with_wavelengths(vec![400.0, 500.0, 600.0])
            .is_ok());
        assert!(cube
            .clone()
            .with_wavelengths(vec![400.0, 400.0, 600.0])
            .is_err());
        assert!(cube.with_wavelengths(vec![400.0]).is_err());
    }

    #[test]
    fn select_channels_keeps_order() {
        let cube = HyperCube::new(1, 2, 4, (0..8).map(|v| v as f32).collect()).unwrap();
        let sel = cube.select_channels(&[3, 1]).unwrap();
        assert_eq!(sel.data(), &[3.0, 1.0, 7.0, 5.0]);
        assert!(matches!(
            cube.select_channels(&[4]),
            Err(Error::ChannelMissing { channel: 4, .. })
        ));
    }

    #[test]
    fn mask_rejects_label_three() {
        assert!(matches!(
            ClassMask::new(1, 2, vec![0, 3]),
            Err(Error::InvalidLabel { label: 3, index: 1 })
        ));
    }

    #[test]
    fn crops_line_up() {
        let cube = HyperCube::from_fn(4, 5, 2, |r, c, b| (r * 100 + c * 10 + b) as f32).unwrap();
        let crop = cube.crop(1, 2, 2, 3).unwrap();
        assert_eq!(crop.spectrum(0, 0), &[120.0, 121.0]);
        assert_eq!(crop.spectrum(1, 2), &[240.0, 241.0]);
        let mask = ClassMask::from_fn(4, 5, |r, c| ((r + c) % 3) as u8).unwrap();
        let mc = mask.crop(1, 2, 2, 3).unwrap();
        assert_eq!(mc.get(1, 2), mask.get(2, 4));
    }
}
