use crate::error::{Error, Result};
use crate::matrix::{softmax_in_place, Matrix, ProbMatrix};

use super::features::{FeatureMap, FEATURE_DIM};

/// Fixed affine input standardization `(x - shift) * scale` per feature.
pub const INPUT_SHIFT: [f64; FEATURE_DIM] = [0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.0, 0.0, 0.0];
pub const INPUT_SCALE: [f64; FEATURE_DIM] = [4.0, 4.0, 4.0, 2.0, 2.0, 4.0, 4.0, 4.0, 10.0, 10.0, 10.0];

#[inline]
fn standardize(f: &[f64]) -> [f64; FEATURE_DIM] {
    let mut out = [0.0; FEATURE_DIM];
    for d in 0..FEATURE_DIM {
        out[d] = (f[d] - INPUT_SHIFT[d]) * INPUT_SCALE[d];
    }
    out
}

/// Multinomial logistic regression over per-pixel features, with an EMA
/// shadow used as the teacher.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSoftmaxModel {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub ema_weights: Matrix,
    pub ema_bias: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Params {
    Student,
    Teacher,
}

impl LinearSoftmaxModel {
    pub fn zeros(classes: usize) -> Self {
        Self {
            weights: Matrix::zeros(FEATURE_DIM, classes),
            bias: vec![0.0; classes],
            ema_weights: Matrix::zeros(FEATURE_DIM, classes),
            ema_bias: vec![0.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn logits(&self, x: &FeatureMap, which: Params) -> Matrix {
        let (w, b) = match which {
            Params::Student => (&self.weights, &self.bias),
            Params::Teacher => (&self.ema_weights, &self.ema_bias),
        };
        let k = self.classes();
        let mut out = Matrix::zeros(x.pixels, k);
        for i in 0..x.pixels {
            let f = standardize(x.row(i));
            let row = out.row_mut(i);
            row.copy_from_slice(b);
            for (d, &fd) in f.iter().enumerate() {
                for (o, &wv) in row.iter_mut().zip(w.row(d)) {
                    *o += fd * wv;
                }
            }
        }
        out
    }

    pub fn probs(&self, x: &FeatureMap, which: Params) -> ProbMatrix {
        let mut logits = self.logits(x, which);
        for i in 0..logits.rows() {
            softmax_in_place(logits.row_mut(i));
        }
        ProbMatrix::normalized(logits).expect("softmax rows are distributions")
    }

    /// Accumulates `scale * X^T G` (on standardized inputs) and `scale * 1^T G` into the gradient
    /// buffers, where `G` is a gradient with respect to the logits.
    pub fn accumulate_grad(x: &FeatureMap, g: &Matrix, scale: f64, gw: &mut Matrix, gb: &mut [f64]) -> Result<()> {
        if g.rows() != x.pixels || g.cols() != gb.len() || gw.shape() != (FEATURE_DIM, gb.len()) {
            return Err(Error::Shape(format!(
                "logit gradient {:?} for {} pixels",
                g.shape(),
                x.pixels
            )));
        }
        for i in 0..x.pixels {
            let gi = g.row(i);
            if gi.iter().all(|v| *v == 0.0) {
                continue;
            }
            for (d, &fd) in standardize(x.row(i)).iter().enumerate() {
                for (acc, &gv) in gw.row_mut(d).iter_mut().zip(gi) {
                    *acc += scale * fd * gv;
                }
            }
            for (acc, &gv) in gb.iter_mut().zip(gi) {
                *acc += scale * gv;
            }
        }
        Ok(())
    }

    pub fn descend(&mut self, lr: f64, gw: &Matrix, gb: &[f64]) {
        for (p, g) in self.weights.data_mut().iter_mut().zip(gw.data()) {
            *p -= lr * g;
        }
        for (p, g) in self.bias.iter_mut().zip(gb) {
            *p -= lr * g;
        }
    }

    /// `ema <- m * ema + (1 - m) * param`.
    pub fn update_ema(&mut self, momentum: f64) {
        for (e, p) in self.ema_weights.data_mut().iter_mut().zip(self.weights.data()) {
            *e = momentum * *e + (1.0 - momentum) * p;
        }
        for (e, p) in self.ema_bias.iter_mut().zip(&self.bias) {
            *e = momentum * *e + (1.0 - momentum) * p;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights
            .data()
            .iter()
            .chain(&self.bias)
            .chain(self.ema_weights.data())
            .chain(&self.ema_bias)
            .all(|v| v.is_finite())
    }
}

/// `lr0 * (1 - step / total)^power`, zero from `total` on.
pub fn poly_lr(lr0: f64, step: usize, total: usize, power: f64) -> f64 {
    if total == 0 || step >= total {
        return 0.0;
    }
    lr0 * (1.0 - step as f64 / total as f64).powf(power)
}
