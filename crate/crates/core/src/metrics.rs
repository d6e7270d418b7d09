//! Classification error, mean IOU and active-site pattern confusion.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::Sites;

/// Percentage of mismatched predictions.
pub fn classification_error(preds: &[usize], labels: &[usize]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    if preds.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    let wrong = preds.iter().zip(labels).filter(|(p, l)| p != l).count();
    Ok(100.0 * wrong as f64 / preds.len() as f64)
}

/// Mean over classes of `|pred_c ∩ truth_c| / |pred_c ∪ truth_c|`; classes
/// absent from both predictions and labels are skipped.
pub fn mean_iou(preds: &[usize], labels: &[usize], classes: usize) -> Result<f64> {
    Ok(per_class_iou(preds, labels, classes)?.mean)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IouReport {
    pub mean: f64,
    /// `None` for classes absent from both predictions and labels.
    pub per_class: Vec<Option<f64>>,
}

pub fn per_class_iou(preds: &[usize], labels: &[usize], classes: usize) -> Result<IouReport> {
    if preds.is_empty() {
        return Err(Error::EmptyInput);
    }
    if preds.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!("{} predictions for {} labels", preds.len(), labels.len())));
    }
    let mut inter = vec![0usize; classes];
    let mut union = vec![0usize; classes];
    for (&p, &l) in preds.iter().zip(labels) {
        if p >= classes || l >= classes {
            return Err(Error::ShapeMismatch(format!("class id {} with {classes} classes", p.max(l))));
        }
        union[p] += 1;
        if p == l {
            inter[p] += 1;
        } else {
            union[l] += 1;
        }
    }
    let per_class: Vec<Option<f64>> = inter
        .iter()
        .zip(&union)
        .map(|(&i, &u)| (u > 0).then(|| i as f64 / u as f64))
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    Ok(IouReport {
        mean: present.iter().sum::<f64>() / present.len() as f64,
        per_class,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct PatternConfusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl PatternConfusion {
    /// `tp / (tp + fp + fn)`, or 1 when both patterns are empty.
    pub fn accuracy(&self) -> f64 {
        let all = self.tp + self.fp + self.fn_;
        if all == 0 {
            1.0
        } else {
            self.tp as f64 / all as f64
        }
    }
}

impl std::ops::AddAssign for PatternConfusion {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

pub fn pattern_confusion(pred: &Sites, truth: &Sites) -> PatternConfusion {
    let tp = pred.coords().iter().filter(|c| truth.contains(c)).count();
    PatternConfusion {
        tp,
        fp: pred.len() - tp,
        fn_: truth.len() - tp,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Coord, Geometry};

    #[test]
    fn error_rates() {
        assert_eq!(classification_error(&[1, 2, 3, 4], &[1, 2, 3, 4]).unwrap(), 0.0);
        assert_eq!(classification_error(&[0, 0], &[1, 1]).unwrap(), 100.0);
        assert_eq!(classification_error(&[1, 2, 3, 0], &[1, 2, 3, 4]).unwrap(), 25.0);
        assert!(matches!(classification_error(&[], &[]), Err(Error::EmptyInput)));
    }

    #[test]
    fn iou_cases() {
        assert_eq!(mean_iou(&[0, 1, 1], &[0, 1, 1], 3).unwrap(), 1.0);
        assert_eq!(mean_iou(&[1, 0], &[0, 1], 2).unwrap(), 0.0);
        // class 0: pred {a, b}, truth {b, c} -> 1/3; class 1: pred {c}, truth {a} -> 0
        let r = per_class_iou(&[0, 0, 1], &[1, 0, 0], 3).unwrap();
        assert_eq!(r.per_class, vec![Some(1.0 / 3.0), Some(0.0), None]);
        assert!((r.mean - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn confusion_cases() {
        let g = Geometry::cube(2, 4);
        let a = Sites::from_coords(g.clone(), vec![Coord::new(0, &[0, 0]), Coord::new(0, &[1, 1])]).unwrap();
        let b = Sites::from_coords(g.clone(), vec![Coord::new(0, &[1, 1]), Coord::new(0, &[2, 2])]).unwrap();
        assert_eq!(pattern_confusion(&a, &a), PatternConfusion { tp: 2, fp: 0, fn_: 0 });
        assert_eq!(pattern_confusion(&a, &b), PatternConfusion { tp: 1, fp: 1, fn_: 1 });
        let e = Sites::empty(g);
        assert_eq!(pattern_confusion(&e, &b), PatternConfusion { tp: 0, fp: 0, fn_: 2 });
    }
}
