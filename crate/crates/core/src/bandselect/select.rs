use std::cmp::Ordering;

use ndarray::ArrayView2;
use rayon::prelude::*;

use super::cluster::{correlation_clusters, ChannelRange};
use super::pca::{pca, standardize, PcaResult};
use super::{BandSelection, ChannelProvenance};
use crate::error::{Error, Result};

/// Channel count the every-second-channel scenario is cut down to.
pub const EVERY_SECOND_LIMIT: usize = 98;

fn best_in(
    weights: &[f64],
    channels: impl Iterator<Item = usize>,
    degenerate: &[usize],
) -> Option<usize> {
    let mut best: Option<usize> = None;
    for c in channels {
        if degenerate.binary_search(&c).is_ok() {
            continue;
        }
        // strict comparison keeps the lowest index on ties
        if best.is_none_or(|b| weights[c] > weights[b]) {
            best = Some(c);
        }
    }
    best
}

/// Channel with the largest PC1 weight; ties go to the lowest index.
pub fn select_single_channel(pca: &PcaResult) -> Result<BandSelection> {
    let channel = best_in(&pca.pc1_weights, 0..pca.channels(), &pca.degenerate)
        .ok_or_else(|| Error::EmptyInput("every channel is constant".into()))?;
    Ok(BandSelection {
        method: "single".into(),
        channel_indices: vec![channel],
        wavelengths_nm: None,
        provenance: vec![ChannelProvenance {
            channel,
            source_class: None,
            cluster: None,
            pc1_weight: Some(pca.pc1_weights[channel]),
        }],
    })
}

/// The per-cluster PC1 argmax of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCandidate {
    pub class: usize,
    pub channel: usize,
    pub weight: f64,
    pub cluster: ChannelRange,
}

/// Runs PCA and correlation clustering on one class and returns the
/// highest-weight channel of every cluster that has a usable channel.
pub fn class_candidates(
    class: usize,
    pixels: ArrayView2<f64>,
    threshold: f64,
) -> Result<Vec<ClassCandidate>> {
    let z = standardize(pixels)?;
    let p = pca(z.data.view())?;
    let clusters = correlation_clusters(pixels, threshold)?;
    Ok(clusters
        .clusters
        .iter()
        .filter_map(|range| {
            best_in(&p.pc1_weights, range.channels(), &clusters.degenerate).map(|channel| {
                ClassCandidate {
                    class,
                    channel,
                    weight: p.pc1_weights[channel],
                    cluster: *range,
                }
            })
        })
        .collect())
}

fn priority(a: &ClassCandidate, b: &ClassCandidate) -> Ordering {
    b.weight
        .total_cmp(&a.weight)
        .then(a.channel.cmp(&b.channel))
        .then(a.class.cmp(&b.class))
}

/// Among candidates whose cluster intervals overlap, keeps the one with the
/// highest PC1 weight. Candidates are admitted greedily in descending weight
/// order and dropped if they overlap an admitted one. The result is sorted
/// by channel.
pub fn resolve_overlaps(mut candidates: Vec<ClassCandidate>) -> Vec<ClassCandidate> {
    candidates.sort_by(priority);
    let mut kept: Vec<ClassCandidate> = Vec::new();
    for cand in candidates {
        if kept.iter().all(|k| !k.cluster.overlaps(&cand.cluster)) {
            kept.push(cand);
        }
    }
    kept.sort_by_key(|k| k.channel);
    kept
}

/// Per-class PCA plus correlation clustering; one channel per cluster, with
/// cross-class overlaps resolved by PC1 weight. `classes[k]` holds the
/// pixels (N×C) of class `k`; classes with fewer than two pixels are
/// ignored.
pub fn select_per_class_channels(
    classes: &[ArrayView2<f64>],
    threshold: f64,
) -> Result<BandSelection> {
    if classes.is_empty() {
        return Err(Error::EmptyInput("no classes".into()));
    }
    let channels = classes[0].ncols();
    if let Some(bad) = classes.iter().find(|c| c.ncols() != channels) {
        return Err(Error::DimMismatch(format!(
            "class matrices have {} and {} channels",
            channels,
            bad.ncols()
        )));
    }
    // a class with fewer than two pixels has no covariance; it is skipped
    let usable: Vec<(usize, &ArrayView2<f64>)> = classes
        .iter()
        .enumerate()
        .filter(|(_, p)| p.nrows() >= 2)
        .collect();
    if usable.is_empty() {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: classes.iter().map(|c| c.nrows()).max().unwrap_or(0),
        });
    }
    let per_class: Vec<Vec<ClassCandidate>> = usable
        .par_iter()
        .map(|(k, pixels)| class_candidates(*k, **pixels, threshold))
        .collect::<Result<_>>()?;

    let kept = resolve_overlaps(per_class.into_iter().flatten().collect());
    let mut selection = BandSelection {
        method: "perclass".into(),
        channel_indices: kept.iter().map(|k| k.channel).collect(),
        wavelengths_nm: None,
        provenance: kept
            .iter()
            .map(|k| ChannelProvenance {
                channel: k.channel,
                source_class: Some(k.class),
                cluster: Some(k.cluster),
                pc1_weight: Some(k.weight),
            })
            .collect(),
    };
    selection.channel_indices.dedup();
    Ok(selection)
}

/// Indices 0, 2, 4, … below `channels`.
pub fn select_every_second(channels: usize) -> Result<BandSelection> {
    if channels < 2 {
        return Err(Error::InvalidArgument(format!(
            "every-second selection needs at least 2 channels, got {channels}"
        )));
    }
    let channel_indices: Vec<usize> = (0..channels).step_by(2).collect();
    Ok(BandSelection {
        method: "every2nd".into(),
        provenance: channel_indices
            .iter()
            .map(|&channel| ChannelProvenance {
                channel,
                source_class: None,
                cluster: None,
                pc1_weight: None,
            })
            .collect(),
        channel_indices,
        wavelengths_nm: None,
    })
}

/// The K-vector repeated `repeats` times back to back.
pub fn replicate_channels<T: Copy>(spectrum: &[T], repeats: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(spectrum.len() * repeats);
    for _ in 0..repeats {
        out.extend_from_slice(spectrum);
    }
    out
}
