//! Mini-batch training with Adam.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::bundle::TrainedModel;
use super::prepare::{
    crop_offsets, prepare_spectrum, spatial_crop, spectral_input_length, InputTransform,
};
use crate::bandselect::BandSelection;
use crate::error::{Error, Result};
use crate::hypercube::{ClassMask, Tile};
use crate::models::ModelKind;
use crate::nn::{Gradients, ModelGraph, Tensor};

pub const DEFAULT_EPOCHS: usize = 20;
pub const DEFAULT_BATCH_SIZE: usize = 22;
pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Stream id separating the shuffling generator from weight initialisation.
const SHUFFLE_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub model: ModelKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub bands: BandSelection,
    /// Only every `pixel_stride`-th pixel of a tile becomes a 1D sample
    /// (and enters the standardization statistics).
    pub pixel_stride: usize,
    /// Fit per-channel mean/std on the training tiles and standardize
    /// inputs with them; otherwise raw values are fed.
    pub standardize: bool,
}

impl TrainConfig {
    pub fn new(model: ModelKind, bands: BandSelection) -> Self {
        Self {
            model,
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            learning_rate: DEFAULT_LEARNING_RATE,
            seed: 0,
            bands,
            pixel_stride: 1,
            standardize: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument(
                "batch size must be at least 1".into(),
            ));
        }
        if self.pixel_stride == 0 {
            return Err(Error::InvalidArgument(
                "pixel stride must be at least 1".into(),
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate {} must be finite and non-negative",
                self.learning_rate
            )));
        }
        if self.bands.is_empty() {
            return Err(Error::EmptyInput("band selection".into()));
        }
        Ok(())
    }

    /// Argument for [`ModelKind::build`].
    pub fn build_arg(&self) -> usize {
        match self.model {
            ModelKind::LiuNet1d => spectral_input_length(self.bands.len()),
            ModelKind::UNet2dSimple => self.bands.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub model: ModelKind,
    pub train_samples: usize,
    pub val_samples: usize,
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }
}

/// One training example: a pixel spectrum or a crop, addressed lazily.
#[derive(Debug, Clone, Copy)]
enum Sample {
    Pixel { tile: usize, index: usize },
    Crop { tile: usize, origin: (usize, usize) },
}

struct SampleSet<'a> {
    tiles: &'a [Tile],
    samples: Vec<Sample>,
}

impl<'a> SampleSet<'a> {
    fn new(config: &TrainConfig, model: &ModelGraph, tiles: &'a [Tile]) -> Result<Self> {
        let mut samples = Vec::new();
        for (t, tile) in tiles.iter().enumerate() {
            let Some(mask) = &tile.mask else {
                return Err(Error::InvalidArgument(format!(
                    "tile {} has no mask",
                    tile.id()
                )));
            };
            if mask.height() != tile.cube.height() || mask.width() != tile.cube.width() {
                return Err(Error::DimMismatch(format!(
                    "mask of tile {} does not match its cube",
                    tile.id()
                )));
            }
            config.bands.validate(tile.cube.channels())?;
            match config.model {
                ModelKind::LiuNet1d => samples.extend(
                    (0..tile.cube.pixel_count())
                        .step_by(config.pixel_stride)
                        .map(|index| Sample::Pixel { tile: t, index }),
                ),
                ModelKind::UNet2dSimple => {
                    let s = model.input_shape();
                    samples.extend(
                        crop_offsets(tile.cube.height(), tile.cube.width(), (s[0], s[1]))?
                            .into_iter()
                            .map(|origin| Sample::Crop { tile: t, origin }),
                    );
                }
            }
        }
        Ok(Self { tiles, samples })
    }

    fn load(
        &self,
        s: Sample,
        input: &InputTransform,
        size: (usize, usize),
    ) -> Result<(Tensor, Vec<u8>)> {
        match s {
            Sample::Pixel { tile, index } => {
                let t = &self.tiles[tile];
                let label = t.mask.as_ref().expect("checked").labels()[index];
                Ok((
                    prepare_spectrum(t.cube.spectrum_at(index), input)?,
                    vec![label],
                ))
            }
            Sample::Crop { tile, origin } => {
                let t = &self.tiles[tile];
                let mask: &ClassMask = t.mask.as_ref().expect("checked");
                let x = spatial_crop(&t.cube, input, origin, size)?;
                let y = mask.crop(origin.0, origin.1, size.0, size.1)?;
                Ok((x, y.labels().to_vec()))
            }
        }
    }
}

struct Adam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: i32,
}

impl Adam {
    fn new(model: &ModelGraph) -> Self {
        let zeros: Vec<Vec<f64>> = model.params().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    fn update(&mut self, model: &mut ModelGraph, grads: &Gradients, lr: f64) {
        self.step += 1;
        let c1 = 1.0 - ADAM_BETA1.powi(self.step);
        let c2 = 1.0 - ADAM_BETA2.powi(self.step);
        for (((p, g), m), v) in model
            .params_mut()
            .into_iter()
            .zip(grads.flat())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for (((w, &g), m), v) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                *w -= lr * (*m / c1) / ((*v / c2).sqrt() + ADAM_EPSILON);
            }
        }
    }
}

/// Rounds every parameter to f32 so the in-memory model equals its
/// weight file.
pub fn round_to_f32(model: &mut ModelGraph) {
    for p in model.params_mut() {
        for v in p.data_mut() {
            *v = *v as f32 as f64;
        }
    }
}

fn sample_loss(
    model: &ModelGraph,
    set: &SampleSet,
    s: Sample,
    input: &InputTransform,
    size: (usize, usize),
) -> Result<f64> {
    let (x, y) = set.load(s, input, size)?;
    crate::nn::ops::cross_entropy(&model.forward(&x)?, &y)
}

fn mean_loss(
    model: &ModelGraph,
    set: &SampleSet,
    input: &InputTransform,
    size: (usize, usize),
) -> Result<Option<f64>> {
    if set.samples.is_empty() {
        return Ok(None);
    }
    let losses = set
        .samples
        .par_iter()
        .map(|&s| sample_loss(model, set, s, input, size))
        .collect::<Result<Vec<f64>>>()?;
    Ok(Some(losses.iter().sum::<f64>() / losses.len() as f64))
}

/// Trains a freshly initialised model. Samples are reshuffled every epoch;
/// per-sample gradients are computed in parallel and summed in batch order
/// so results do not depend on the thread count.
pub fn train(
    config: &TrainConfig,
    train_tiles: &[Tile],
    val_tiles: &[Tile],
) -> Result<TrainedModel> {
    config.validate()?;
    let mut model = config.model.build(config.build_arg())?;
    model.initialize(config.seed);
    let train_set = SampleSet::new(config, &model, train_tiles)?;
    let val_set = SampleSet::new(config, &model, val_tiles)?;
    if train_set.samples.is_empty() {
        return Err(Error::EmptyInput("training samples".into()));
    }
    let channels = &config.bands.channel_indices;
    let input = if config.standardize {
        InputTransform::fit(train_tiles, channels, config.pixel_stride)?
    } else {
        InputTransform::select(channels)
    };
    let shape = model.input_shape();
    let size = (shape[0], shape.get(1).copied().unwrap_or(1));

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(SHUFFLE_STREAM);
    let mut adam = Adam::new(&model);
    let mut order: Vec<usize> = (0..train_set.samples.len()).collect();
    let mut log = TrainLog {
        model: config.model,
        train_samples: train_set.samples.len(),
        val_samples: val_set.samples.len(),
        epochs: Vec::with_capacity(config.epochs),
    };

    for epoch in 1..=config.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            let results = batch
                .par_iter()
                .map(|&i| {
                    let (x, y) = train_set.load(train_set.samples[i], &input, size)?;
                    let tape = model.forward_with_tape(&x)?;
                    model.backward_softmax_ce(&tape, &y)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut iter = results.into_iter();
            let (first_loss, mut grads) = iter.next().expect("non-empty batch");
            let mut batch_loss = first_loss;
            for (l, g) in iter {
                batch_loss += l;
                grads.add_assign(&g)?;
            }
            let finite = batch_loss.is_finite() && grads.flat().iter().all(|t| t.all_finite());
            if !finite {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: b + 1,
                    detail: format!("batch loss {batch_loss}, {} samples", batch.len()),
                });
            }
            loss_sum += batch_loss;
            grads.scale(1.0 / batch.len() as f64);
            adam.update(&mut model, &grads, config.learning_rate);
        }
        let val_loss = mean_loss(&model, &val_set, &input, size)?;
        log.epochs.push(EpochLog {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            val_loss,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    round_to_f32(&mut model);
    Ok(TrainedModel {
        kind: config.model,
        graph: model,
        bands: config.bands.clone(),
        input,
        log: Some(log),
    })
}
