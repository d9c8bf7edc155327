//! Segmentation and tile-classification metrics, the cloudy-tile rule and
//! evaluation reports.

mod report;

pub use report::{render_report, EvalEntry, EvalReport, REPORT_SCHEMA};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hypercube::{ClassMask, NUM_CLASSES};

pub const DEFAULT_CLOUDY_THRESHOLD: f64 = 0.70;

/// Pixel counts indexed `[truth][pred]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl Confusion {
    pub fn from_masks(pred: &ClassMask, truth: &ClassMask) -> Result<Self> {
        let mut c = Self::default();
        c.add(pred, truth)?;
        Ok(c)
    }

    pub fn add(&mut self, pred: &ClassMask, truth: &ClassMask) -> Result<()> {
        if pred.height() != truth.height() || pred.width() != truth.width() {
            return Err(Error::ShapeMismatch(format!(
                "prediction {}x{} vs truth {}x{}",
                pred.height(),
                pred.width(),
                truth.height(),
                truth.width()
            )));
        }
        for (&p, &t) in pred.labels().iter().zip(truth.labels()) {
            self.counts[t as usize][p as usize] += 1;
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..NUM_CLASSES).map(|k| self.counts[k][k]).sum()
    }

    pub fn pixel_accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.correct() as f64 / n as f64,
        }
    }

    /// Per class `2·|pred=c ∧ truth=c| / (|pred=c| + |truth=c|)`; `None` when
    /// the class is absent from both.
    pub fn dice_per_class(&self) -> [Option<f64>; NUM_CLASSES] {
        std::array::from_fn(|k| {
            let truth: u64 = self.counts[k].iter().sum();
            let pred: u64 = (0..NUM_CLASSES).map(|t| self.counts[t][k]).sum();
            (truth + pred > 0).then(|| 2.0 * self.counts[k][k] as f64 / (truth + pred) as f64)
        })
    }

    pub fn seg_scores(&self) -> SegScores {
        let per = self.dice_per_class();
        SegScores {
            pixel_accuracy: self.pixel_accuracy(),
            dice_per_class: per,
            dice_macro: mean_defined(&per),
            dice_cloud: mean_defined(&per[1..]),
        }
    }
}

fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegScores {
    pub pixel_accuracy: f64,
    pub dice_per_class: [Option<f64>; NUM_CLASSES],
    /// Mean over classes present in prediction or truth.
    pub dice_macro: Option<f64>,
    /// Same, restricted to the two cloud classes.
    pub dice_cloud: Option<f64>,
}

pub fn pixel_accuracy(pred: &ClassMask, truth: &ClassMask) -> Result<f64> {
    Ok(Confusion::from_masks(pred, truth)?.pixel_accuracy())
}

pub fn dice(pred: &ClassMask, truth: &ClassMask) -> Result<SegScores> {
    Ok(Confusion::from_masks(pred, truth)?.seg_scores())
}

/// True when thin plus thick cloud cover strictly exceeds `threshold`.
pub fn cloudy_decision(mask: &ClassMask, threshold: f64) -> bool {
    mask.cloud_fraction() > threshold
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClsScores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// Cloudy is the positive class. Precision or recall with an empty
/// denominator is 0, and so is F1 when both are 0.
pub fn classification_scores(preds: &[bool], truths: &[bool]) -> Result<ClsScores> {
    if preds.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: truths.len(),
        });
    }
    if preds.is_empty() {
        return Err(Error::EmptyInput("classification labels".into()));
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (&p, &t) in preds.iter().zip(truths) {
        match (p, t) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ClsScores {
        accuracy: ratio(tp + tn, preds.len()),
        precision,
        recall,
        f1,
        tp,
        fp,
        tn,
        fn_,
    })
}

/// Scores of one model on one set of tiles. Segmentation metrics pool the
/// pixels of all tiles; classification applies the cloudy rule per tile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitScores {
    pub tiles: usize,
    pub segmentation: SegScores,
    pub classification: ClsScores,
}

pub fn evaluate_split(
    preds: &[ClassMask],
    truths: &[ClassMask],
    threshold: f64,
) -> Result<SplitScores> {
    if preds.len() != truths.len() {
        return Err(Error::LengthMismatch {
            left: preds.len(),
            right: truths.len(),
        });
    }
    let mut confusion = Confusion::default();
    for (p, t) in preds.iter().zip(truths) {
        confusion.add(p, t)?;
    }
    let p: Vec<bool> = preds
        .iter()
        .map(|m| cloudy_decision(m, threshold))
        .collect();
    let t: Vec<bool> = truths
        .iter()
        .map(|m| cloudy_decision(m, threshold))
        .collect();
    Ok(SplitScores {
        tiles: preds.len(),
        segmentation: confusion.seg_scores(),
        classification: classification_scores(&p, &t)?,
    })
}
