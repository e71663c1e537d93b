//! Confusion matrices and precision / recall / F1 reports.
//!
//! Undefined ratios (no predictions for a class, or no support) count as 0.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::GrayImage;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("label {label} outside 0..{k}")]
    LabelOutOfRange { label: usize, k: usize },
    #[error("{truth} true labels but {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub k: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(k: usize) -> Self {
        ConfusionMatrix {
            k,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Self {
        let k = counts.len();
        assert!(counts.iter().all(|r| r.len() == k), "confusion matrix must be square");
        ConfusionMatrix { k, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }

    /// Heatmap with `cell × cell` squares, dark where a row's mass sits.
    pub fn heatmap(&self, cell: usize) -> GrayImage {
        let side = (self.k * cell).max(1);
        let mut img = GrayImage::filled(side, side, 255);
        for t in 0..self.k {
            let support = self.row_sum(t).max(1) as f64;
            for p in 0..self.k {
                let v = 255.0 - 255.0 * self.counts[t][p] as f64 / support;
                for y in t * cell..(t + 1) * cell {
                    for x in p * cell..(p + 1) * cell {
                        img.set(x, y, v.round() as u8);
                    }
                }
            }
        }
        img
    }
}

/// Counts `(true, predicted)` pairs.
pub fn confusion<T, P>(y_true: &[T], y_pred: &[P], k: usize) -> Result<ConfusionMatrix, MetricsError>
where
    T: Copy + Into<usize>,
    P: Copy + Into<usize>,
{
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch {
            truth: y_true.len(),
            pred: y_pred.len(),
        });
    }
    let mut cm = ConfusionMatrix::zeros(k);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        let (t, p) = (t.into(), p.into());
        for label in [t, p] {
            if label >= k {
                return Err(MetricsError::LabelOutOfRange { label, k });
            }
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn summarize(cm: &ConfusionMatrix) -> Report {
    let total = cm.total();
    let per_class: Vec<ClassMetrics> = (0..cm.k)
        .map(|c| {
            let tp = cm.counts[c][c];
            let precision = ratio(tp, cm.col_sum(c));
            let recall = ratio(tp, cm.row_sum(c));
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                class: c,
                precision,
                recall,
                f1,
                support: cm.row_sum(c),
            }
        })
        .collect();
    let k = cm.k.max(1) as f64;
    let macro_avg = Averages {
        precision: per_class.iter().map(|m| m.precision).sum::<f64>() / k,
        recall: per_class.iter().map(|m| m.recall).sum::<f64>() / k,
        f1: per_class.iter().map(|m| m.f1).sum::<f64>() / k,
    };
    let weight = |f: fn(&ClassMetrics) -> f64| {
        if total == 0 {
            0.0
        } else {
            per_class.iter().map(|m| f(m) * m.support as f64).sum::<f64>() / total as f64
        }
    };
    let weighted_avg = Averages {
        precision: weight(|m| m.precision),
        recall: weight(|m| m.recall),
        f1: weight(|m| m.f1),
    };
    Report {
        accuracy: ratio(cm.trace(), total),
        per_class,
        macro_avg,
        weighted_avg,
        confusion: cm.clone(),
    }
}

impl Report {
    /// Plain-text table in the usual classification-report layout.
    pub fn render(&self) -> String {
        let mut s = format!("{:>8} {:>9} {:>9} {:>9} {:>9}\n", "class", "precision", "recall", "f1", "support");
        for m in &self.per_class {
            s += &format!(
                "{:>8} {:>9.3} {:>9.3} {:>9.3} {:>9}\n",
                m.class, m.precision, m.recall, m.f1, m.support
            );
        }
        let n = self.confusion.total();
        s += &format!("{:>8} {:>9} {:>9} {:>9.3} {:>9}\n", "accuracy", "", "", self.accuracy, n);
        for (name, a) in [("macro", self.macro_avg), ("weighted", self.weighted_avg)] {
            s += &format!(
                "{:>8} {:>9.3} {:>9.3} {:>9.3} {:>9}\n",
                name, a.precision, a.recall, a.f1, n
            );
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions_are_diagonal() {
        let y = [0usize, 1, 2, 2, 1];
        let cm = confusion(&y, &y, 3).unwrap();
        assert_eq!(cm.trace(), 5);
        let r = summarize(&cm);
        assert_eq!(r.accuracy, 1.0);
        for m in &r.per_class {
            assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        }
        assert_eq!(r.macro_avg.f1, 1.0);
        assert_eq!(r.weighted_avg.f1, 1.0);
    }

    #[test]
    fn empty_input_is_zero_matrix() {
        let cm = confusion::<usize, usize>(&[], &[], 4).unwrap();
        assert_eq!(cm, ConfusionMatrix::zeros(4));
    }

    #[test]
    fn two_class_fixture() {
        let cm = confusion(&[0usize, 0, 1], &[0usize, 1, 1], 2).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1], vec![0, 1]]);
        let r = summarize(&cm);
        assert_eq!(r.per_class[0].precision, 1.0);
        assert_eq!(r.per_class[0].recall, 0.5);
        assert!((r.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn out_of_range_labels() {
        assert_eq!(
            confusion(&[0usize, 3], &[0usize, 1], 3),
            Err(MetricsError::LabelOutOfRange { label: 3, k: 3 })
        );
        assert!(confusion(&[0usize], &[0usize, 1], 3).is_err());
    }

    #[test]
    fn heatmap_has_expected_size() {
        let cm = ConfusionMatrix::from_counts(vec![vec![2, 0], vec![1, 1]]);
        let h = cm.heatmap(4);
        assert_eq!((h.width(), h.height()), (8, 8));
        assert_eq!(h.get(0, 0), 0);
        assert_eq!(h.get(4, 0), 255);
    }

    proptest! {
        #[test]
        fn identities_hold(cells in prop::collection::vec(0u64..20, 25)) {
            let counts: Vec<Vec<u64>> = cells.chunks(5).map(|c| c.to_vec()).collect();
            let cm = ConfusionMatrix::from_counts(counts);
            prop_assume!(cm.total() > 0);
            let r = summarize(&cm);
            prop_assert!((r.accuracy - r.weighted_avg.recall).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&r.macro_avg.f1));
            for m in &r.per_class {
                for v in [m.precision, m.recall, m.f1] {
                    prop_assert!((0.0..=1.0).contains(&v));
                }
                prop_assert_eq!(m.support, cm.row_sum(m.class));
            }
        }
    }
}
