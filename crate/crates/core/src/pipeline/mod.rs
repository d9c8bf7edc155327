//! Experiment orchestration: splitting, input preparation, training,
//! inference and benchmarking.

mod bench;
mod bundle;
mod infer;
mod prepare;
mod split;
mod train;

pub use bench::{benchmark, BenchResult};
pub use bundle::{TrainedModel, BUNDLE_SCHEMA, MANIFEST_FILE, TRAIN_LOG_FILE, WEIGHTS_FILE};
pub use infer::{
    argmax, infer_tile, infer_tile_1d, infer_tile_2d, prepare_tile, run_prepared, Prediction,
    PreparedTile,
};
pub use prepare::{
    crop_offsets, prepare_spectrum, replication_repeats, spatial_crop, spectral_input_length,
    InputTransform, MIN_CHANNEL_STD,
};
pub use split::{
    split_by_scene, split_dataset, SplitPlan, SplitRole, MIN_TILES, TRAIN_FRACTION, VAL_FRACTION,
};
pub use train::{
    round_to_f32, train, EpochLog, TrainConfig, TrainLog, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON,
    DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, DEFAULT_LEARNING_RATE,
};

use crate::error::{Error, Result};

/// Runs `f` on a dedicated pool of `threads` workers (`None` = all cores).
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(Error::InvalidArgument(
            "thread count must be at least 1".into(),
        )),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
