//! Confusion matrices and segmentation statistics.
//!
//! For class i: `n_i` is the number of points whose true class is i, `c_i`
//! the number of those predicted correctly, and `w_i` the number of points
//! wrongly predicted as i. Then
//!
//! - oAcc = Σ c_i / Σ n_i
//! - mAcc = mean of c_i / n_i
//! - mIoU = mean of c_i / (n_i + w_i)
//!
//! Classes with `n_i + w_i = 0` are left out of both means and listed in
//! [`SegMetrics::excluded`]. A class with `n_i = 0 < w_i` counts as 0.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{predicted} predictions for {truth} labels")]
    Length { predicted: usize, truth: usize },
    #[error("label {label} outside a {classes}-class matrix")]
    Label { label: usize, classes: usize },
    #[error("cannot merge a {left}-class matrix with a {right}-class matrix")]
    ClassCount { left: usize, right: usize },
    #[error("no points were scored")]
    Empty,
}

/// Counts indexed by (true class, predicted class).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Row sum: points whose true class is `i`.
    pub fn n(&self, i: usize) -> u64 {
        (0..self.classes).map(|j| self.get(i, j)).sum()
    }

    pub fn c(&self, i: usize) -> u64 {
        self.get(i, i)
    }

    /// Column sum minus the diagonal: points wrongly predicted as `i`.
    pub fn w(&self, i: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, i)).sum::<u64>() - self.c(i)
    }

    /// Returns a new matrix with the given points added; `self` is unchanged.
    pub fn accumulate(&self, predicted: &[usize], truth: &[usize]) -> Result<Self, MetricsError> {
        if predicted.len() != truth.len() {
            return Err(MetricsError::Length {
                predicted: predicted.len(),
                truth: truth.len(),
            });
        }
        let classes = self.classes;
        if let Some(&label) = predicted.iter().chain(truth).find(|&&l| l >= classes) {
            return Err(MetricsError::Label { label, classes });
        }
        let mut out = self.clone();
        for (&p, &t) in predicted.iter().zip(truth) {
            out.counts[t * classes + p] += 1;
        }
        Ok(out)
    }

    /// Elementwise sum of two matrices.
    pub fn merge(&self, other: &Self) -> Result<Self, MetricsError> {
        if self.classes != other.classes {
            return Err(MetricsError::ClassCount {
                left: self.classes,
                right: other.classes,
            });
        }
        Ok(Self {
            classes: self.classes,
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegMetrics {
    pub oacc: f64,
    pub macc: f64,
    pub miou: f64,
    /// Per-class accuracy and IoU; `None` for excluded classes.
    pub class_acc: Vec<Option<f64>>,
    pub class_iou: Vec<Option<f64>>,
    pub excluded: Vec<usize>,
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<SegMetrics, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let mut class_acc = Vec::with_capacity(cm.classes());
    let mut class_iou = Vec::with_capacity(cm.classes());
    let mut excluded = Vec::new();
    let mut correct = 0u64;
    for i in 0..cm.classes() {
        let (n, c, w) = (cm.n(i), cm.c(i), cm.w(i));
        correct += c;
        if n + w == 0 {
            excluded.push(i);
            class_acc.push(None);
            class_iou.push(None);
            continue;
        }
        class_acc.push(Some(if n == 0 { 0.0 } else { c as f64 / n as f64 }));
        class_iou.push(Some(c as f64 / (n + w) as f64));
    }
    let mean = |v: &[Option<f64>]| {
        let present: Vec<f64> = v.iter().flatten().copied().collect();
        present.iter().sum::<f64>() / present.len() as f64
    };
    Ok(SegMetrics {
        oacc: correct as f64 / total as f64,
        macc: mean(&class_acc),
        miou: mean(&class_iou),
        class_acc,
        class_iou,
        excluded,
    })
}

/// Per-class rows `class,n_i,c_i,w_i,acc,iou`, then an `overall` row whose
/// acc column is oAcc and a `mean` row holding mAcc and mIoU. Excluded
/// classes have empty acc and iou fields.
pub fn metrics_csv(cm: &ConfusionMatrix, metrics: &SegMetrics, class_names: &[String]) -> String {
    let mut out = String::from("class,n_i,c_i,w_i,acc,iou\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    let (mut tn, mut tc, mut tw) = (0, 0, 0);
    for i in 0..cm.classes() {
        let name = class_names.get(i).cloned().unwrap_or_else(|| i.to_string());
        let (n, c, w) = (cm.n(i), cm.c(i), cm.w(i));
        tn += n;
        tc += c;
        tw += w;
        let _ = writeln!(out, "{name},{n},{c},{w},{},{}", opt(metrics.class_acc[i]), opt(metrics.class_iou[i]));
    }
    let _ = writeln!(out, "overall,{tn},{tc},{tw},{:.6},", metrics.oacc);
    let _ = writeln!(out, "mean,{tn},{tc},{tw},{:.6},{:.6}", metrics.macc, metrics.miou);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hand_matrix() -> ConfusionMatrix {
        let mut truth = vec![0; 10];
        truth.extend([1; 5]);
        let mut pred = vec![0; 8];
        pred.extend([1, 1]);
        pred.extend([1, 1, 1, 1, 0]);
        ConfusionMatrix::new(2).accumulate(&pred, &truth).unwrap()
    }

    #[test]
    fn diagonal_counts() {
        let cm = ConfusionMatrix::new(2).accumulate(&[0, 0, 1], &[0, 0, 1]).unwrap();
        assert_eq!((cm.get(0, 0), cm.get(1, 1), cm.get(0, 1)), (2, 1, 0));
    }

    #[test]
    fn empty_input_leaves_matrix_unchanged() {
        let cm = hand_matrix();
        assert_eq!(cm.accumulate(&[], &[]).unwrap(), cm);
    }

    #[test]
    fn accumulation_is_additive() {
        let (p, t) = ([0, 1, 2, 2, 1], [0, 2, 2, 1, 1]);
        let whole = ConfusionMatrix::new(3).accumulate(&p, &t).unwrap();
        let split = ConfusionMatrix::new(3)
            .accumulate(&p[..2], &t[..2])
            .unwrap()
            .accumulate(&p[2..], &t[2..])
            .unwrap();
        assert_eq!(whole, split);
        let a = ConfusionMatrix::new(3).accumulate(&p[..2], &t[..2]).unwrap();
        let b = ConfusionMatrix::new(3).accumulate(&p[2..], &t[2..]).unwrap();
        assert_eq!(a.merge(&b).unwrap(), whole);
    }

    #[test]
    fn hand_example() {
        let m = compute_metrics(&hand_matrix()).unwrap();
        assert_eq!(m.oacc, 0.8);
        assert!((m.macc - 0.8).abs() < 1e-15);
        let miou = (8.0 / 11.0 + 4.0 / 7.0) / 2.0;
        assert!((m.miou - miou).abs() < 1e-15);
        assert!((m.miou - 0.6494).abs() < 1e-4);
    }

    #[test]
    fn perfect_prediction() {
        let cm = ConfusionMatrix::new(2).accumulate(&[0, 1, 1], &[0, 1, 1]).unwrap();
        let m = compute_metrics(&cm).unwrap();
        assert_eq!((m.oacc, m.macc, m.miou), (1.0, 1.0, 1.0));
    }

    #[test]
    fn absent_class_is_excluded() {
        let cm = ConfusionMatrix::new(3).accumulate(&[0, 2, 2], &[0, 2, 0]).unwrap();
        let m = compute_metrics(&cm).unwrap();
        assert_eq!(m.excluded, vec![1]);
        assert_eq!(m.class_acc[1], None);
        assert!((m.macc - 0.75).abs() < 1e-15);
    }

    #[test]
    fn predicted_only_class_scores_zero() {
        let cm = ConfusionMatrix::new(2).accumulate(&[1, 0], &[0, 0]).unwrap();
        let m = compute_metrics(&cm).unwrap();
        assert_eq!(m.class_acc[1], Some(0.0));
        assert_eq!(m.macc, 0.25);
    }

    #[test]
    fn errors() {
        let cm = ConfusionMatrix::new(2);
        assert_eq!(compute_metrics(&cm), Err(MetricsError::Empty));
        assert!(matches!(cm.accumulate(&[0], &[2]), Err(MetricsError::Label { label: 2, .. })));
        assert!(matches!(cm.accumulate(&[0], &[]), Err(MetricsError::Length { .. })));
        assert!(cm.merge(&ConfusionMatrix::new(3)).is_err());
    }

    #[test]
    fn csv_layout() {
        let cm = hand_matrix();
        let m = compute_metrics(&cm).unwrap();
        let csv = metrics_csv(&cm, &m, &["floor".into(), "wall".into()]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "class,n_i,c_i,w_i,acc,iou");
        assert_eq!(lines[1], "floor,10,8,1,0.800000,0.727273");
        assert_eq!(lines[3], "overall,15,12,3,0.800000,");
        assert!(lines[4].starts_with("mean,15,12,3,0.800000,0.649"));
    }
}
