use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::pca::standardize;
use crate::error::Result;

pub const DEFAULT_CLUSTER_THRESHOLD: f64 = 0.9;

/// Inclusive channel interval `start..=end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ChannelRange {
    pub start: usize,
    pub end: usize,
}

impl ChannelRange {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Self { start, end }
    }

    pub fn contains(&self, channel: usize) -> bool {
        self.start <= channel && channel <= self.end
    }

    pub fn overlaps(&self, other: &ChannelRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn channels(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationClusters {
    /// C×C Pearson correlations. Rows and columns of constant channels are
    /// zero apart from the unit diagonal.
    pub matrix: Array2<f64>,
    /// Contiguous blocks covering every channel once, in order.
    pub clusters: Vec<ChannelRange>,
    pub degenerate: Vec<usize>,
}

/// Pearson correlation matrix (population statistics).
pub fn pearson_matrix(pixels: ArrayView2<f64>) -> Result<(Array2<f64>, Vec<usize>)> {
    let z = standardize(pixels)?;
    let n = pixels.nrows() as f64;
    let mut m = z.data.t().dot(&z.data) / n;
    for v in m.iter_mut() {
        *v = v.clamp(-1.0, 1.0);
    }
    for c in 0..m.nrows() {
        m[[c, c]] = 1.0;
    }
    // symmetric by construction up to rounding; make it exact
    for i in 0..m.nrows() {
        for j in i + 1..m.ncols() {
            let v = m[[i, j]];
            m[[j, i]] = v;
        }
    }
    Ok((m, z.degenerate))
}

/// Cuts the channel axis into contiguous blocks wherever the correlation of
/// neighbouring channels drops below `threshold`. Constant channels always
/// form singleton blocks.
pub fn correlation_clusters(
    pixels: ArrayView2<f64>,
    threshold: f64,
) -> Result<CorrelationClusters> {
    let (matrix, degenerate) = pearson_matrix(pixels)?;
    let c = matrix.nrows();
    let is_degenerate = |ch: usize| degenerate.binary_search(&ch).is_ok();

    let mut clusters = Vec::new();
    let mut start = 0;
    for ch in 1..c {
        let linked =
            !is_degenerate(ch - 1) && !is_degenerate(ch) && matrix[[ch - 1, ch]] >= threshold;
        if !linked {
            clusters.push(ChannelRange::new(start, ch - 1));
            start = ch;
        }
    }
    if c > 0 {
        clusters.push(ChannelRange::new(start, c - 1));
    }
    Ok(CorrelationClusters {
        matrix,
        clusters,
        degenerate,
    })
}
