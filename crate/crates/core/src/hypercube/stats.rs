use serde::{Deserialize, Serialize};

use super::{ClassMask, NUM_CLASSES};
use crate::error::{Error, Result};

pub const COVERAGE_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub tile_count: usize,
    /// Pixel share of NoCloud, ThinCloud, ThickCloud.
    pub class_fractions: [f64; NUM_CLASSES],
    /// Tiles per cloud-coverage decile; the last bin is closed at 1.0.
    pub coverage_histogram: [usize; COVERAGE_BINS],
}

pub fn class_distribution(masks: &[ClassMask]) -> Result<DatasetStats> {
    if masks.is_empty() {
        return Err(Error::EmptyInput("no masks".into()));
    }
    let mut counts = [0usize; NUM_CLASSES];
    let mut histogram = [0usize; COVERAGE_BINS];
    for mask in masks {
        for (total, c) in counts.iter_mut().zip(mask.class_counts()) {
            *total += c;
        }
        let bin = ((mask.cloud_fraction() * COVERAGE_BINS as f64) as usize).min(COVERAGE_BINS - 1);
        histogram[bin] += 1;
    }
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyInput("masks contain no pixels".into()));
    }
    Ok(DatasetStats {
        tile_count: masks.len(),
        class_fractions: counts.map(|c| c as f64 / total as f64),
        coverage_histogram: histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypercube::CloudClass;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn all_clear() {
        let s = class_distribution(&[ClassMask::filled(3, 3, CloudClass::NoCloud)]).unwrap();
        assert_eq!(s.class_fractions, [1.0, 0.0, 0.0]);
        assert_eq!(s.coverage_histogram[0], 1);
    }

    #[test]
    fn thin_and_thick_split_evenly() {
        let masks = [
            ClassMask::filled(2, 2, CloudClass::ThinCloud),
            ClassMask::filled(2, 2, CloudClass::ThickCloud),
        ];
        let s = class_distribution(&masks).unwrap();
        assert_eq!(s.class_fractions, [0.0, 0.5, 0.5]);
        assert_eq!(s.coverage_histogram[9], 2);
    }

    #[test]
    fn empty_input() {
        assert!(matches!(class_distribution(&[]), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn random_masks_match_counting() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let masks: Vec<ClassMask> = (0..12)
            .map(|_| {
                let (h, w) = (rng.random_range(1..9), rng.random_range(1..9));
                let labels = (0..h * w).map(|_| rng.random_range(0..3u8)).collect();
                ClassMask::new(h, w, labels).unwrap()
            })
            .collect();
        let s = class_distribution(&masks).unwrap();
        let mut counts = [0f64; 3];
        let mut total = 0f64;
        for m in &masks {
            for &l in m.labels() {
                counts[l as usize] += 1.0;
                total += 1.0;
            }
        }
        for (fraction, count) in s.class_fractions.iter().zip(counts) {
            assert_eq!(*fraction, count / total);
        }
        assert_eq!(s.coverage_histogram.iter().sum::<usize>(), masks.len());
    }

    proptest! {
        #[test]
        fn fractions_sum_to_one_and_relabel(labels in proptest::collection::vec(0u8..3, 1..64)) {
            let n = labels.len();
            let mask = ClassMask::new(1, n, labels.clone()).unwrap();
            let s = class_distribution(std::slice::from_ref(&mask)).unwrap();
            prop_assert!((s.class_fractions.iter().sum::<f64>() - 1.0).abs() < 1e-9);

            // swapping classes 1 and 2 swaps their fractions
            let swapped: Vec<u8> = labels.iter().map(|&l| [0, 2, 1][l as usize]).collect();
            let t = class_distribution(&[ClassMask::new(1, n, swapped).unwrap()]).unwrap();
            prop_assert_eq!(s.class_fractions[1], t.class_fractions[2]);
            prop_assert_eq!(s.class_fractions[2], t.class_fractions[1]);
        }
    }
}
