use super::HyperCube;
use crate::error::{Error, Result};

/// Fraction of the mean of the two auxiliary SWIR bands added to each visible band.
pub const DEFAULT_AUX_FRACTION: f64 = 0.2;

const LOW_PERCENTILE: f64 = 1.0;
const HIGH_PERCENTILE: f64 = 97.0;

/// Interleaved 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbImage {
    pub fn pixel(&self, row: usize, col: usize) -> [u8; 3] {
        let i = (row * self.width + col) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

/// Linear-interpolated percentile of a sorted slice (`p` in 0..=100).
fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Maps the 1st percentile to 0 and the 97th to 255, clipping outside.
/// A flat channel (p1 == p97) maps to 0.
fn stretch(values: &[f64]) -> Vec<u8> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = percentile_sorted(&sorted, LOW_PERCENTILE);
    let hi = percentile_sorted(&sorted, HIGH_PERCENTILE);
    if hi <= lo {
        return vec![0; values.len()];
    }
    let scale = 255.0 / (hi - lo);
    values
        .iter()
        .map(|&v| ((v - lo) * scale).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// False-colour composite: each output channel is its band plus
/// `aux_fraction` times the mean of the two auxiliary bands, followed by a
/// per-channel percentile stretch.
pub fn rgb_composite(
    cube: &HyperCube,
    rgb_bands: [usize; 3],
    aux_bands: [usize; 2],
    aux_fraction: f64,
) -> Result<RgbImage> {
    for &band in rgb_bands.iter().chain(aux_bands.iter()) {
        if band >= cube.channels() {
            return Err(Error::BandOutOfRange {
                band,
                channels: cube.channels(),
            });
        }
    }
    if !(0.0..=1.0).contains(&aux_fraction) {
        return Err(Error::InvalidArgument(format!(
            "aux fraction {aux_fraction} outside [0, 1]"
        )));
    }
    let n = cube.pixel_count();
    if n == 0 {
        return Err(Error::EmptyCube {
            height: cube.height(),
            width: cube.width(),
            channels: cube.channels(),
        });
    }

    let aux: Vec<f64> = (0..n)
        .map(|i| {
            let px = cube.spectrum_at(i);
            0.5 * (px[aux_bands[0]] as f64 + px[aux_bands[1]] as f64)
        })
        .collect();

    let channels: Vec<Vec<u8>> = rgb_bands
        .iter()
        .map(|&band| {
            let values: Vec<f64> = (0..n)
                .map(|i| cube.spectrum_at(i)[band] as f64 + aux_fraction * aux[i])
                .collect();
            stretch(&values)
        })
        .collect();

    let mut pixels = Vec::with_capacity(n * 3);
    for ((r, g), b) in channels[0].iter().zip(&channels[1]).zip(&channels[2]) {
        pixels.extend([*r, *g, *b]);
    }
    Ok(RgbImage {
        width: cube.width(),
        height: cube.height(),
        pixels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_cube_is_black() {
        let cube = HyperCube::new(4, 4, 5, vec![3.5; 80]).unwrap();
        let img = rgb_composite(&cube, [0, 1, 2], [3, 4], 0.2).unwrap();
        assert!(img.pixels.iter().all(|&p| p == 0));
    }

    #[test]
    fn uniform_ramp_is_monotone_grey() {
        let cube = HyperCube::from_fn(16, 16, 1, |r, c, _| (r * 16 + c) as f32).unwrap();
        let img = rgb_composite(&cube, [0, 0, 0], [0, 0], 0.0).unwrap();
        let grey: Vec<u8> = img
            .pixels
            .chunks(3)
            .map(|p| {
                assert!(p[0] == p[1] && p[1] == p[2]);
                p[0]
            })
            .collect();
        assert!(grey.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(grey[0], 0);
        assert_eq!(*grey.last().unwrap(), 255);
    }

    #[test]
    fn hand_computed_stretch() {
        // values 0..8: p1 = 0.08, p97 = 7.76, out = round((v - 0.08) * 255 / 7.68)
        let cube = HyperCube::from_fn(3, 3, 1, |r, c, _| (r * 3 + c) as f32).unwrap();
        let img = rgb_composite(&cube, [0, 0, 0], [0, 0], 0.0).unwrap();
        let red: Vec<u8> = img.pixels.chunks(3).map(|p| p[0]).collect();
        assert_eq!(red, vec![0, 31, 64, 97, 130, 163, 197, 230, 255]);
    }

    #[test]
    fn aux_bands_are_added() {
        // band0 = 0 everywhere, aux bands carry the ramp: the composite equals the ramp's stretch.
        let cube = HyperCube::from_fn(3, 3, 3, |r, c, b| match b {
            0 => 0.0,
            _ => (r * 3 + c) as f32,
        })
        .unwrap();
        let img = rgb_composite(&cube, [0, 0, 0], [1, 2], 0.5).unwrap();
        let red: Vec<u8> = img.pixels.chunks(3).map(|p| p[0]).collect();
        assert_eq!(red, vec![0, 31, 64, 97, 130, 163, 197, 230, 255]);
    }

    #[test]
    fn band_out_of_range() {
        let cube = HyperCube::new(1, 1, 3, vec![0.0; 3]).unwrap();
        assert!(matches!(
            rgb_composite(&cube, [0, 1, 3], [0, 1], 0.2),
            Err(Error::BandOutOfRange {
                band: 3,
                channels: 3
            })
        ));
        assert!(rgb_composite(&cube, [0, 1, 2], [0, 1], 1.5).is_err());
    }

    proptest! {
        #[test]
        fn invariant_under_positive_rescaling(
            values in proptest::collection::vec(-1000i32..1000, 5 * 5 * 4),
            exp in -4i32..6,
            offset in -500i32..500,
        ) {
            let base = HyperCube::new(5, 5, 4, values.iter().map(|&v| v as f32).collect()).unwrap();
            let scale = 2f32.powi(exp);
            let scaled = HyperCube::new(
                5, 5, 4,
                values.iter().map(|&v| v as f32 * scale + offset as f32 * scale).collect(),
            ).unwrap();
            let a = rgb_composite(&base, [0, 1, 2], [3, 1], 0.25).unwrap();
            let b = rgb_composite(&scaled, [0, 1, 2], [3, 1], 0.25).unwrap();
            // an offset shifts the percentile interpolation by one rounding step at most
            for (x, y) in a.pixels.iter().zip(&b.pixels) {
                prop_assert!((*x as i32 - *y as i32).abs() <= 1);
            }
        }

        #[test]
        fn exact_under_power_of_two_scaling(
            values in proptest::collection::vec(-1000i32..1000, 5 * 5 * 4),
            exp in -4i32..6,
        ) {
            let base = HyperCube::new(5, 5, 4, values.iter().map(|&v| v as f32).collect()).unwrap();
            let scale = 2f32.powi(exp);
            let scaled = HyperCube::new(5, 5, 4, values.iter().map(|&v| v as f32 * scale).collect()).unwrap();
            prop_assert_eq!(
                rgb_composite(&base, [0, 1, 2], [3, 1], 0.25).unwrap(),
                rgb_composite(&scaled, [0, 1, 2], [3, 1], 0.25).unwrap()
            );
        }
    }
}
