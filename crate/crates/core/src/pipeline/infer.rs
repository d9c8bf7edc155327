//! Tile inference for both networks.

use rayon::prelude::*;

use super::prepare::{crop_offsets, prepare_spectrum, spatial_crop, InputTransform};
use crate::error::{Error, Result};
use crate::hypercube::{ClassMask, HyperCube, NUM_CLASSES};
use crate::models::ModelKind;
use crate::nn::{ModelGraph, Tensor};

/// Per-pixel class probabilities `[H, W, 3]` and their argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub mask: ClassMask,
    pub probs: Tensor,
}

/// Model inputs for one tile, built ahead of timing.
#[derive(Debug, Clone)]
pub enum PreparedTile {
    /// One `[L, 1]` spectrum per pixel, row-major.
    Spectral {
        height: usize,
        width: usize,
        spectra: Vec<Tensor>,
    },
    /// Overlapping crops with their top-left offsets.
    Spatial {
        height: usize,
        width: usize,
        crops: Vec<((usize, usize), Tensor)>,
    },
}

pub fn prepare_tile(
    kind: ModelKind,
    model: &ModelGraph,
    cube: &HyperCube,
    input: &InputTransform,
) -> Result<PreparedTile> {
    match kind {
        ModelKind::LiuNet1d => {
            let spectra = (0..cube.pixel_count())
                .into_par_iter()
                .map(|i| prepare_spectrum(cube.spectrum_at(i), input))
                .collect::<Result<Vec<_>>>()?;
            Ok(PreparedTile::Spectral {
                height: cube.height(),
                width: cube.width(),
                spectra,
            })
        }
        ModelKind::UNet2dSimple => {
            let shape = model.input_shape();
            let size = (shape[0], shape[1]);
            let crops = crop_offsets(cube.height(), cube.width(), size)?
                .into_iter()
                .map(|o| Ok((o, spatial_crop(cube, input, o, size)?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(PreparedTile::Spatial {
                height: cube.height(),
                width: cube.width(),
                crops,
            })
        }
    }
}

/// Index of the largest probability; ties go to the lowest class id.
pub fn argmax(p: &[f64]) -> u8 {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best as u8
}

fn to_prediction(height: usize, width: usize, probs: Vec<f64>) -> Result<Prediction> {
    let labels = probs.chunks_exact(NUM_CLASSES).map(argmax).collect();
    Ok(Prediction {
        mask: ClassMask::new(height, width, labels)?,
        probs: Tensor::new(vec![height, width, NUM_CLASSES], probs)?,
    })
}

fn check_output(model: &ModelGraph, probs: &Tensor) -> Result<()> {
    if probs.last_dim() != NUM_CLASSES {
        return Err(Error::ShapeMismatch(format!(
            "{} emits {} classes, expected {NUM_CLASSES}",
            model.name(),
            probs.last_dim()
        )));
    }
    Ok(())
}

/// Runs the model on a prepared tile. Overlapping crops are stitched by
/// averaging probabilities over every crop covering a pixel.
pub fn run_prepared(model: &ModelGraph, tile: &PreparedTile) -> Result<Prediction> {
    match tile {
        PreparedTile::Spectral {
            height,
            width,
            spectra,
        } => {
            let rows = spectra
                .par_iter()
                .map(|s| {
                    let p = model.forward(s)?;
                    check_output(model, &p)?;
                    Ok(p.into_data())
                })
                .collect::<Result<Vec<_>>>()?;
            to_prediction(*height, *width, rows.concat())
        }
        PreparedTile::Spatial {
            height,
            width,
            crops,
        } => {
            let (h, w) = (*height, *width);
            let outputs = crops
                .par_iter()
                .map(|(o, x)| Ok((*o, model.forward(x)?)))
                .collect::<Result<Vec<_>>>()?;
            let mut sum = vec![0.0; h * w * NUM_CLASSES];
            let mut cover = vec![0u32; h * w];
            for ((r0, c0), p) in &outputs {
                check_output(model, p)?;
                let (ch, cw) = (p.shape()[0], p.shape()[1]);
                for r in 0..ch {
                    for c in 0..cw {
                        let px = (r0 + r) * w + c0 + c;
                        cover[px] += 1;
                        let src = &p.data()[(r * cw + c) * NUM_CLASSES..][..NUM_CLASSES];
                        for (d, s) in sum[px * NUM_CLASSES..][..NUM_CLASSES].iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
            for (px, &n) in cover.iter().enumerate() {
                let inv = 1.0 / n as f64;
                sum[px * NUM_CLASSES..][..NUM_CLASSES]
                    .iter_mut()
                    .for_each(|v| *v *= inv);
            }
            to_prediction(h, w, sum)
        }
    }
}

/// Segments a tile with the 2D network: the transformed channels are cut into
/// the four corner-aligned crops and the crop probabilities are averaged.
pub fn infer_tile_2d(
    model: &ModelGraph,
    cube: &HyperCube,
    input: &InputTransform,
) -> Result<Prediction> {
    run_prepared(
        model,
        &prepare_tile(ModelKind::UNet2dSimple, model, cube, input)?,
    )
}

/// Segments a tile with the 1D network, one independent forward pass per
/// pixel spectrum.
pub fn infer_tile_1d(
    model: &ModelGraph,
    cube: &HyperCube,
    input: &InputTransform,
) -> Result<Prediction> {
    run_prepared(
        model,
        &prepare_tile(ModelKind::LiuNet1d, model, cube, input)?,
    )
}

pub fn infer_tile(
    kind: ModelKind,
    model: &ModelGraph,
    cube: &HyperCube,
    input: &InputTransform,
) -> Result<Prediction> {
    run_prepared(model, &prepare_tile(kind, model, cube, input)?)
}
