use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::features::compute_features;
use super::model::{LinearSoftmaxModel, Params};
use super::world::ShapesSample;

/// Accumulated `truth x prediction` pixel counts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    /// Pixels whose truth is `ignore` are skipped.
    pub fn add(&mut self, truth: &[u8], pred: &[u8], ignore: u8) -> Result<()> {
        if truth.len() != pred.len() {
            return Err(Error::Shape(format!(
                "{} truth labels vs {} predictions",
                truth.len(),
                pred.len()
            )));
        }
        for (&t, &p) in truth.iter().zip(pred) {
            if t == ignore {
                continue;
            }
            let (t, p) = (t as usize, p as usize);
            if t >= self.classes || p >= self.classes {
                return Err(Error::Invalid(format!("label {t} or prediction {p} out of range")));
            }
            self.counts[t * self.classes + p] += 1;
        }
        Ok(())
    }

    /// `TP / (TP + FP + FN)` per class; `None` when the class is absent from
    /// both truth and prediction.
    pub fn iou(&self) -> IouReport {
        let k = self.classes;
        let per_class: Vec<Option<f64>> = (0..k)
            .map(|c| {
                let tp = self.counts[c * k + c];
                let row: u64 = (0..k).map(|p| self.counts[c * k + p]).sum();
                let col: u64 = (0..k).map(|t| self.counts[t * k + c]).sum();
                let union = row + col - tp;
                (union > 0).then(|| tp as f64 / union as f64)
            })
            .collect();
        let present: Vec<f64> = per_class.iter().flatten().copied().collect();
        let mean = if present.is_empty() {
            0.0
        } else {
            present.iter().sum::<f64>() / present.len() as f64
        };
        IouReport { per_class, mean }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IouReport {
    pub per_class: Vec<Option<f64>>,
    pub mean: f64,
}

impl IouReport {
    /// `class,iou` rows (`NA` for excluded classes) and a final `mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("class,iou\n");
        for (c, v) in self.per_class.iter().enumerate() {
            match v {
                Some(v) => writeln!(s, "{c},{v}"),
                None => writeln!(s, "{c},NA"),
            }
            .ok();
        }
        let _ = writeln!(s, "mean,{}", self.mean);
        s
    }
}

/// Argmax class per pixel of the student model.
pub fn predict(model: &LinearSoftmaxModel, sample: &ShapesSample) -> Vec<u8> {
    let x = compute_features(&sample.image);
    model
        .probs(&x, Params::Student)
        .argmax_rows()
        .into_iter()
        .map(|c| c as u8)
        .collect()
}

/// Mean IoU of the student over a labeled set, from one confusion matrix.
pub fn evaluate_miou(model: &LinearSoftmaxModel, eval_set: &[ShapesSample]) -> Result<IouReport> {
    if eval_set.is_empty() {
        return Err(Error::EmptyEvalSet);
    }
    let mut cm = ConfusionMatrix::new(model.classes());
    for s in eval_set {
        cm.add(&s.labels.labels, &predict(model, s), s.labels.ignore_value)?;
    }
    Ok(cm.iou())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_and_complement() {
        let mut cm = ConfusionMatrix::new(2);
        cm.add(&[0, 1, 1, 0], &[0, 1, 1, 0], 255).unwrap();
        assert_eq!(cm.iou().mean, 1.0);
        let mut cm = ConfusionMatrix::new(2);
        cm.add(&[0, 1, 1, 0], &[1, 0, 0, 1], 255).unwrap();
        assert_eq!(cm.iou().per_class, vec![Some(0.0), Some(0.0)]);
    }

    #[test]
    fn absent_classes_are_excluded() {
        let mut cm = ConfusionMatrix::new(3);
        cm.add(&[0, 1, 255], &[0, 1, 2], 255).unwrap();
        let r = cm.iou();
        assert_eq!(r.per_class[2], None);
        assert_eq!(r.mean, 1.0);
        assert!(r.to_csv().contains("2,NA\n"));
    }
}
