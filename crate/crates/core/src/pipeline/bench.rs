//! Inference timing paired with the model size report.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::infer::{prepare_tile, run_prepared};
use super::prepare::InputTransform;
use crate::error::{Error, Result};
use crate::hypercube::HyperCube;
use crate::models::{size_report, ModelKind, SizeReport};
use crate::nn::ModelGraph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub model: ModelKind,
    pub channels: usize,
    pub tiles: usize,
    pub repetitions: usize,
    pub mean_seconds: f64,
    pub min_seconds: f64,
    pub max_seconds: f64,
    pub size: SizeReport,
}

/// Per-tile inference time over `cubes × repetitions`. Inputs are prepared
/// before the clock starts and one untimed warm-up run precedes the loop.
pub fn benchmark(
    kind: ModelKind,
    model: &ModelGraph,
    cubes: &[HyperCube],
    input: &InputTransform,
    repetitions: usize,
) -> Result<BenchResult> {
    if cubes.is_empty() {
        return Err(Error::EmptyInput("benchmark tiles".into()));
    }
    if repetitions == 0 {
        return Err(Error::InvalidArgument(
            "repetitions must be at least 1".into(),
        ));
    }
    let prepared = cubes
        .iter()
        .map(|c| prepare_tile(kind, model, c, input))
        .collect::<Result<Vec<_>>>()?;
    run_prepared(model, &prepared[0])?;

    let mut times = Vec::with_capacity(prepared.len() * repetitions);
    for _ in 0..repetitions {
        for tile in &prepared {
            let start = Instant::now();
            let out = run_prepared(model, tile)?;
            times.push(start.elapsed().as_secs_f64());
            std::hint::black_box(out);
        }
    }
    let mean = times.iter().sum::<f64>() / times.len() as f64;
    let min = times.iter().copied().fold(f64::INFINITY, f64::min);
    let max = times.iter().copied().fold(0.0, f64::max);
    Ok(BenchResult {
        model: kind,
        channels: input.len(),
        tiles: cubes.len(),
        repetitions,
        // keep min <= mean <= max despite summation rounding
        mean_seconds: mean.clamp(min, max),
        min_seconds: min,
        max_seconds: max,
        size: size_report(model),
    })
}
