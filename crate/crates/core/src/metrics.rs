//! Classification metrics from a confusion matrix: accuracy and
//! macro-averaged precision, recall and F1.

use serde::{Deserialize, Serialize};

use crate::error::{CorfError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassScores>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl Metrics {
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Self> {
        let k = confusion.len();
        if k == 0 || confusion.iter().any(|r| r.len() != k) {
            return Err(CorfError::Data("confusion matrix must be square and non-empty".into()));
        }
        let total: u64 = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(CorfError::Data("empty dataset".into()));
        }
        let trace: u64 = (0..k).map(|i| confusion[i][i]).sum();
        let per_class: Vec<ClassScores> = (0..k)
            .map(|c| {
                let tp = confusion[c][c];
                let predicted: u64 = (0..k).map(|r| confusion[r][c]).sum();
                let actual: u64 = confusion[c].iter().sum();
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, actual);
                ClassScores {
                    precision,
                    recall,
                    f1: f1(precision, recall),
                    support: actual,
                }
            })
            .collect();
        let mean = |f: fn(&ClassScores) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
        Ok(Metrics {
            accuracy: ratio(trace, total),
            macro_precision: mean(|c| c.precision),
            macro_recall: mean(|c| c.recall),
            macro_f1: mean(|c| c.f1),
            per_class,
            confusion,
        })
    }

    pub fn from_labels(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(CorfError::Data(format!(
                "{} true labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        if truth.is_empty() {
            return Err(CorfError::Data("empty dataset".into()));
        }
        let mut confusion = vec![vec![0u64; classes]; classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= classes || p >= classes {
                return Err(CorfError::Data(format!("label out of range 0..{classes}")));
            }
            confusion[t][p] += 1;
        }
        Metrics::from_confusion(confusion)
    }
}

/// Reads one integer label per line. Blank lines, `#` comments and a
/// non-numeric header are skipped; for comma-separated rows the last field is used.
pub fn parse_labels(text: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.rsplit(',').next().unwrap_or(line).trim();
        match field.parse::<usize>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(CorfError::Data(format!("line {}: '{field}' is not a label", i + 1))),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_worked_example() {
        // class 1 is the positive class: TP=40, FN=10, FP=20, TN=30
        let m = Metrics::from_confusion(vec![vec![30, 20], vec![10, 40]]).unwrap();
        assert!((m.accuracy - 0.7).abs() < 1e-15);
        let c1 = &m.per_class[1];
        assert!((c1.precision - 2.0 / 3.0).abs() < 1e-15);
        assert!((c1.recall - 0.8).abs() < 1e-15);
        assert!((c1.f1 - 8.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_predictions() {
        let labels = vec![0, 1, 2, 2, 1, 0, 0];
        let m = Metrics::from_labels(&labels, &labels, 3).unwrap();
        assert_eq!((m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn undefined_precision_scores_zero() {
        // nothing is ever predicted as class 2
        let m = Metrics::from_labels(&[0, 1, 2], &[0, 1, 1], 3).unwrap();
        assert_eq!(m.per_class[2].precision, 0.0);
        assert_eq!(m.per_class[2].f1, 0.0);
        let rows: Vec<u64> = m.confusion.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(rows, vec![1, 1, 1]);
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        assert!(Metrics::from_labels(&[], &[], 2).is_err());
        assert!(Metrics::from_labels(&[0], &[0, 1], 2).is_err());
        assert!(Metrics::from_labels(&[3], &[0], 2).is_err());
    }

    #[test]
    fn label_parsing() {
        assert_eq!(parse_labels("label\n1\n0\n\n2\n").unwrap(), vec![1, 0, 2]);
        assert_eq!(parse_labels("id,label\na,1\nb,2\n").unwrap(), vec![1, 2]);
        assert!(parse_labels("1\nx\n").is_err());
    }
}
