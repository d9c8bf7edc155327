use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::eigen::jacobi_eigen;
use crate::error::{Error, Result};

/// Channels whose standard deviation falls below this are treated as constant.
pub const DEGENERATE_STD: f64 = 1e-12;

/// Output of [`standardize`].
#[derive(Debug, Clone)]
pub struct Standardized {
    pub data: Array2<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Channels emitted as all-zero because they are constant.
    pub degenerate: Vec<usize>,
}

fn check_samples(pixels: &ArrayView2<f64>) -> Result<()> {
    if pixels.nrows() < 2 {
        return Err(Error::TooFewSamples {
            needed: 2,
            got: pixels.nrows(),
        });
    }
    Ok(())
}

/// Per-channel zero mean and unit population standard deviation.
pub fn standardize(pixels: ArrayView2<f64>) -> Result<Standardized> {
    check_samples(&pixels)?;
    let n = pixels.nrows() as f64;
    let mut data = pixels.to_owned();
    let mut mean = Vec::with_capacity(pixels.ncols());
    let mut std = Vec::with_capacity(pixels.ncols());
    let mut degenerate = Vec::new();
    for (c, mut col) in data.axis_iter_mut(Axis(1)).enumerate() {
        let mu = col.sum() / n;
        let var = col.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / n;
        let sigma = var.sqrt();
        if sigma < DEGENERATE_STD {
            col.fill(0.0);
            degenerate.push(c);
        } else {
            col.mapv_inplace(|x| (x - mu) / sigma);
        }
        mean.push(mu);
        std.push(sigma);
    }
    Ok(Standardized {
        data,
        mean,
        std,
        degenerate,
    })
}

/// Population (1/N) covariance of the columns.
pub fn covariance(pixels: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_samples(&pixels)?;
    let n = pixels.nrows() as f64;
    let mean = pixels.mean_axis(Axis(0)).expect("non-empty");
    let centered = &pixels - &mean;
    Ok(centered.t().dot(&centered) / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaResult {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// `eigenvectors[k]` pairs with `eigenvalues[k]`; the largest-magnitude
    /// component of each is positive.
    pub eigenvectors: Vec<Vec<f64>>,
    /// `|eigenvectors[0][i]|` per channel.
    pub pc1_weights: Vec<f64>,
    /// Zero-variance channels; never selected.
    pub degenerate: Vec<usize>,
}

impl PcaResult {
    pub fn channels(&self) -> usize {
        self.pc1_weights.len()
    }
}

/// Flips `v` so that its largest-magnitude component (first one on ties) is positive.
pub(crate) fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|&x| x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Principal components of the channel covariance. Callers normally pass
/// standardized pixels; the data is centred here regardless.
pub fn pca(pixels: ArrayView2<f64>) -> Result<PcaResult> {
    let cov = covariance(pixels)?;
    let degenerate = (0..cov.nrows())
        .filter(|&c| cov[[c, c]].sqrt() < DEGENERATE_STD)
        .collect();
    let (values, vectors) = jacobi_eigen(cov.view())?;

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    let eigenvalues = order.iter().map(|&k| values[k]).collect();
    let eigenvectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| {
            let mut v = vectors.column(k).to_vec();
            fix_sign(&mut v);
            v
        })
        .collect();
    let pc1_weights = eigenvectors
        .first()
        .map(|v| v.iter().map(|x| x.abs()).collect())
        .unwrap_or_default();
    Ok(PcaResult {
        eigenvalues,
        eigenvectors,
        pc1_weights,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, c: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, c), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn standardize_closed_form() {
        let x = array![[1.0], [2.0], [3.0]];
        let s = standardize(x.view()).unwrap();
        // (x - 2) / sqrt(2/3)
        let sigma = (2.0f64 / 3.0).sqrt();
        assert!((s.data[[0, 0]] + 1.0 / sigma).abs() < 1e-12);
        assert_eq!(s.data[[1, 0]], 0.0);
        assert!((s.data[[2, 0]] - 1.224744871391589).abs() < 1e-12);
        assert!(s.degenerate.is_empty());
    }

    #[test]
    fn constant_channel_is_flagged() {
        let x = array![[5.0, 1.0], [5.0, 2.0], [5.0, 4.0]];
        let s = standardize(x.view()).unwrap();
        assert_eq!(s.degenerate, vec![0]);
        assert!(s.data.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn standardize_is_idempotent() {
        let s = standardize(random(50, 4, 1).view()).unwrap();
        let t = standardize(s.data.view()).unwrap();
        for (a, b) in s.data.iter().zip(t.data.iter()) {
            assert!((a - b).abs() < 1e-9);
        }
        for c in 0..4 {
            assert!(t.mean[c].abs() < 1e-9);
            assert!((t.std[c] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn too_few_samples() {
        let x = array![[1.0, 2.0]];
        assert!(matches!(
            standardize(x.view()),
            Err(Error::TooFewSamples { .. })
        ));
        assert!(matches!(pca(x.view()), Err(Error::TooFewSamples { .. })));
    }

    #[test]
    fn axis_aligned_variances() {
        // channel 0 takes ±2 (variance 4), channel 1 takes ±1 (variance 1), uncorrelated
        let x = array![[2.0, 1.0], [2.0, -1.0], [-2.0, 1.0], [-2.0, -1.0]];
        let p = pca(x.view()).unwrap();
        assert!((p.eigenvalues[0] - 4.0).abs() < 1e-12);
        assert!((p.eigenvalues[1] - 1.0).abs() < 1e-12);
        assert!((p.pc1_weights[0] - 1.0).abs() < 1e-12);
        assert!(p.pc1_weights[1].abs() < 1e-12);
    }

    #[test]
    fn correlated_pair_splits_weight() {
        let x = array![[1.0, 1.0], [2.0, 2.0], [4.0, 4.0], [-3.0, -3.0]];
        let p = pca(x.view()).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p.pc1_weights[0] - h).abs() < 1e-12);
        assert!((p.pc1_weights[1] - h).abs() < 1e-12);
        assert!(p.eigenvalues[1].abs() < 1e-12);
    }

    #[test]
    fn sign_convention_and_orthonormality() {
        let p = pca(random(200, 8, 3).view()).unwrap();
        for (k, v) in p.eigenvectors.iter().enumerate() {
            let big = v
                .iter()
                .cloned()
                .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
            assert!(big > 0.0);
            for (j, w) in p.eigenvectors.iter().enumerate() {
                let dot: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
                let expect = if j == k { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() < 1e-10);
            }
        }
        assert!(p.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn degenerate_channels_are_reported() {
        let mut x = random(30, 3, 9);
        x.column_mut(1).fill(7.0);
        let p = pca(standardize(x.view()).unwrap().data.view()).unwrap();
        assert_eq!(p.degenerate, vec![1]);
        assert!(p.pc1_weights[1] < 1e-12);
    }
}
