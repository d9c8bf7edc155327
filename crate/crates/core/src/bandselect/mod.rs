//! Ground-segment channel selection.
//!
//! Three scenarios are supported: the single channel with the largest
//! first-principal-component weight over all pixels, one channel per
//! correlation cluster from per-class PCA, and every second channel.

mod cluster;
mod eigen;
mod pca;
mod select;

pub use cluster::{
    correlation_clusters, pearson_matrix, ChannelRange, CorrelationClusters,
    DEFAULT_CLUSTER_THRESHOLD,
};
pub use eigen::{jacobi_eigen, MAX_SWEEPS};
pub use pca::{covariance, pca, standardize, PcaResult, Standardized, DEGENERATE_STD};
pub use select::{
    class_candidates, replicate_channels, resolve_overlaps, select_every_second,
    select_per_class_channels, select_single_channel, ClassCandidate, EVERY_SECOND_LIMIT,
};

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypercube::{Tile, NUM_CLASSES};

pub const SELECTION_SCHEMA: &str = "bandselection/1";

/// Why a channel was chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelProvenance {
    pub channel: usize,
    pub source_class: Option<usize>,
    pub cluster: Option<ChannelRange>,
    pub pc1_weight: Option<f64>,
}

/// Ordered channel subset used for training and inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandSelection {
    pub method: String,
    pub channel_indices: Vec<usize>,
    pub wavelengths_nm: Option<Vec<f64>>,
    pub provenance: Vec<ChannelProvenance>,
}

#[derive(Serialize, Deserialize)]
struct SelectionFile {
    schema: String,
    #[serde(flatten)]
    selection: BandSelection,
}

impl BandSelection {
    /// Explicit channel list with no provenance.
    pub fn from_indices(method: &str, mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self {
            method: method.into(),
            provenance: indices
                .iter()
                .map(|&channel| ChannelProvenance {
                    channel,
                    source_class: None,
                    cluster: None,
                    pc1_weight: None,
                })
                .collect(),
            channel_indices: indices,
            wavelengths_nm: None,
        }
    }

    pub fn len(&self) -> usize {
        self.channel_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channel_indices.is_empty()
    }

    /// First `n` channels.
    pub fn truncated(mut self, n: usize) -> Self {
        self.channel_indices.truncate(n);
        self.provenance.truncate(n);
        if let Some(w) = self.wavelengths_nm.as_mut() {
            w.truncate(n);
        }
        self
    }

    /// Fills `wavelengths_nm` from a full per-channel table.
    pub fn attach_wavelengths(&mut self, table: &[f64]) -> Result<()> {
        let wl = self
            .channel_indices
            .iter()
            .map(|&i| {
                table.get(i).copied().ok_or(Error::BandOutOfRange {
                    band: i,
                    channels: table.len(),
                })
            })
            .collect::<Result<_>>()?;
        self.wavelengths_nm = Some(wl);
        Ok(())
    }

    pub fn validate(&self, channels: usize) -> Result<()> {
        if !self.channel_indices.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "channel indices must be sorted and unique".into(),
            ));
        }
        if let Some(&i) = self.channel_indices.iter().find(|&&i| i >= channels) {
            return Err(Error::ChannelMissing {
                channel: i,
                channels,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = SelectionFile {
            schema: SELECTION_SCHEMA.into(),
            selection: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: SelectionFile = serde_json::from_str(text)?;
        if file.schema != SELECTION_SCHEMA {
            return Err(Error::UnsupportedFormat(format!(
                "schema {:?}",
                file.schema
            )));
        }
        if !file
            .selection
            .channel_indices
            .windows(2)
            .all(|w| w[0] < w[1])
        {
            return Err(Error::Parse(
                "channel indices must be sorted and unique".into(),
            ));
        }
        Ok(file.selection)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectMode {
    Single,
    PerClass,
    EverySecond,
}

impl SelectMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SelectMode::Single => "single",
            SelectMode::PerClass => "perclass",
            SelectMode::EverySecond => "every2nd",
        }
    }
}

impl std::str::FromStr for SelectMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "single" => Ok(SelectMode::Single),
            "perclass" => Ok(SelectMode::PerClass),
            "every2nd" => Ok(SelectMode::EverySecond),
            other => Err(Error::InvalidArgument(format!(
                "unknown selection mode {other:?}"
            ))),
        }
    }
}

/// Runs one selection scenario over a tile set. `stride` subsamples pixels
/// for the PCA modes; the every-second mode is cut to
/// [`EVERY_SECOND_LIMIT`] channels.
pub fn select_from_tiles(
    tiles: &[Tile],
    mode: SelectMode,
    threshold: f64,
    stride: usize,
) -> Result<BandSelection> {
    match mode {
        SelectMode::Single => select_single_channel(&pca(collect_pixels(tiles, stride)?.view())?),
        SelectMode::PerClass => {
            let classes = collect_pixels_by_class(tiles, stride)?;
            let views: Vec<_> = classes.iter().map(|c| c.view()).collect();
            select_per_class_channels(&views, threshold)
        }
        SelectMode::EverySecond => {
            Ok(select_every_second(common_channels(tiles)?)?.truncated(EVERY_SECOND_LIMIT))
        }
    }
}

/// Every `stride`-th pixel spectrum of every tile, stacked into an N×C matrix.
pub fn collect_pixels(tiles: &[Tile], stride: usize) -> Result<Array2<f64>> {
    let channels = common_channels(tiles)?;
    let stride = stride.max(1);
    let mut data = Vec::new();
    let mut rows = 0;
    for tile in tiles {
        for i in (0..tile.cube.pixel_count()).step_by(stride) {
            data.extend(tile.cube.spectrum_at(i).iter().map(|&v| v as f64));
            rows += 1;
        }
    }
    Ok(Array2::from_shape_vec((rows, channels), data).expect("row-major fill"))
}

/// Like [`collect_pixels`] but split by ground-truth class. Tiles without a
/// mask are skipped.
pub fn collect_pixels_by_class(tiles: &[Tile], stride: usize) -> Result<Vec<Array2<f64>>> {
    let channels = common_channels(tiles)?;
    let stride = stride.max(1);
    let mut data: Vec<Vec<f64>> = vec![Vec::new(); NUM_CLASSES];
    for tile in tiles {
        let Some(mask) = &tile.mask else { continue };
        for i in (0..tile.cube.pixel_count()).step_by(stride) {
            let class = mask.labels()[i] as usize;
            data[class].extend(tile.cube.spectrum_at(i).iter().map(|&v| v as f64));
        }
    }
    Ok(data
        .into_iter()
        .map(|d| {
            let rows = d.len() / channels;
            Array2::from_shape_vec((rows, channels), d).expect("row-major fill")
        })
        .collect())
}

fn common_channels(tiles: &[Tile]) -> Result<usize> {
    let first = tiles
        .first()
        .ok_or_else(|| Error::EmptyInput("no tiles".into()))?;
    let channels = first.cube.channels();
    if let Some(t) = tiles.iter().find(|t| t.cube.channels() != channels) {
        return Err(Error::DimMismatch(format!(
            "tile {} has {} channels, expected {channels}",
            t.id(),
            t.cube.channels()
        )));
    }
    Ok(channels)
}
