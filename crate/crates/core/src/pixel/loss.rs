use crate::error::{Error, Result};
use crate::matrix::{Matrix, ProbMatrix};
use crate::transport::Layout;
use crate::DEFAULT_PROB_FLOOR;

use super::{LabelGrid, PseudoLabelGrid};

/// A loss value with its gradient with respect to the logits whose row-wise
/// softmax produced the predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelLoss {
    pub loss: f64,
    pub grad: Matrix,
    /// Rows that contributed to the loss.
    pub counted: usize,
}

/// Adds the gradient of `-weight * sum_j t_j log(max(p_j, floor))` with
/// respect to softmax logits to `out`; returns the loss term.
///
/// Clamped entries are constant, so they drop out of the gradient. Without
/// clamping this is `weight * (p * sum(t) - t)`.
pub(crate) fn soft_cross_entropy_row(p: &[f64], t: &[f64], weight: f64, out: &mut [f64]) -> f64 {
    let mut loss = 0.0;
    let mut active_mass = 0.0;
    for ((&pj, &tj), o) in p.iter().zip(t).zip(out.iter_mut()) {
        if tj == 0.0 {
            continue;
        }
        loss -= tj * pj.max(DEFAULT_PROB_FLOOR).ln();
        if pj > DEFAULT_PROB_FLOOR {
            active_mass += tj;
            *o -= weight * tj;
        }
    }
    for (o, &pj) in out.iter_mut().zip(p) {
        *o += weight * active_mass * pj;
    }
    weight * loss
}

/// `-(1/n) sum_{i gated} sum_j q_ij log p_strong_ij`, with gradient
/// `(1/n) * gate_i * (p_strong_i - q_i)` for rows without clamping.
pub fn synthetic_pixel_loss(pl: &PseudoLabelGrid, p_strong: &ProbMatrix) -> Result<PixelLoss> {
    if pl.q.rows() != p_strong.rows() || pl.q.cols() != p_strong.cols() {
        return Err(Error::Shape(format!(
            "pseudo labels {}x{} vs predictions {}x{}",
            pl.q.rows(),
            pl.q.cols(),
            p_strong.rows(),
            p_strong.cols()
        )));
    }
    let n = pl.q.rows();
    let weight = 1.0 / n as f64;
    let mut grad = Matrix::zeros(n, pl.q.cols());
    let mut loss = 0.0;
    let mut counted = 0;
    for i in 0..n {
        if !pl.gate.flags[i] {
            continue;
        }
        counted += 1;
        loss += soft_cross_entropy_row(p_strong.row(i), pl.q.row(i), weight, grad.row_mut(i));
    }
    Ok(PixelLoss {
        loss,
        grad,
        counted,
    })
}

/// Mean cross-entropy over non-ignore pixels. With every pixel ignored the
/// loss is 0 with a zero gradient and `counted == 0`.
pub fn real_pixel_loss(labels: &LabelGrid, p: &ProbMatrix, layout: &Layout) -> Result<PixelLoss> {
    if labels.layout != *layout || layout.rows() != p.rows() {
        return Err(Error::Shape(format!(
            "labels for {:?} vs layout {:?} with {} prediction rows",
            labels.layout,
            layout,
            p.rows()
        )));
    }
    let k = p.cols();
    labels.validate(k)?;
    let counted = labels
        .labels
        .iter()
        .filter(|&&l| l != labels.ignore_value)
        .count();
    let mut grad = Matrix::zeros(p.rows(), k);
    if counted == 0 {
        return Ok(PixelLoss {
            loss: 0.0,
            grad,
            counted,
        });
    }
    let weight = 1.0 / counted as f64;
    let mut loss = 0.0;
    let mut target = vec![0.0; k];
    for (i, &l) in labels.labels.iter().enumerate() {
        if l == labels.ignore_value {
            continue;
        }
        target.iter_mut().for_each(|t| *t = 0.0);
        target[l as usize] = 1.0;
        loss += soft_cross_entropy_row(p.row(i), &target, weight, grad.row_mut(i));
    }
    Ok(PixelLoss {
        loss,
        grad,
        counted,
    })
}

/// Average of the synthetic and real losses.
pub fn total_pixel_loss(l_s: f64, l_r: f64) -> f64 {
    (l_s + l_r) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pixel::{confidence_gate, GateMask};

    fn one_hot(labels: &[usize], k: usize) -> ProbMatrix {
        ProbMatrix::one_hot(labels, k).unwrap()
    }

    #[test]
    fn perfect_agreement_has_zero_loss_and_gradient() {
        let p = one_hot(&[0, 2, 1], 3);
        let layout = Layout::new(1, 1, 3).unwrap();
        let gate = confidence_gate(&p, 0.95).unwrap();
        let pl = PseudoLabelGrid::new(p.clone(), gate, layout).unwrap();
        let out = synthetic_pixel_loss(&pl, &p).unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grad.data().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn fully_gated_out_batch_has_zero_loss() {
        let q = ProbMatrix::new(Matrix::filled(4, 2, 0.5)).unwrap();
        let p = one_hot(&[0, 1, 0, 1], 2);
        let gate = GateMask {
            flags: vec![false; 4],
            gamma: 0.95,
        };
        let pl = PseudoLabelGrid::new(q, gate, Layout::new(1, 2, 2).unwrap()).unwrap();
        let out = synthetic_pixel_loss(&pl, &p).unwrap();
        assert_eq!(out.loss, 0.0);
        assert_eq!(out.counted, 0);
        assert!(out.grad.data().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn uniform_predictions_cost_log_k() {
        let layout = Layout::new(1, 2, 2).unwrap();
        let labels = LabelGrid::new(vec![0, 1, 2, 3], layout).unwrap();
        let p = ProbMatrix::new(Matrix::filled(4, 4, 0.25)).unwrap();
        let out = real_pixel_loss(&labels, &p, &layout).unwrap();
        assert!((out.loss - 4f64.ln()).abs() < 1e-12);
        let perfect = one_hot(&[0, 1, 2, 3], 4);
        assert_eq!(real_pixel_loss(&labels, &perfect, &layout).unwrap().loss, 0.0);
    }

    #[test]
    fn ignored_pixels_do_not_count() {
        let layout = Layout::new(1, 1, 2).unwrap();
        let labels = LabelGrid::new(vec![255, 255], layout).unwrap();
        let p = ProbMatrix::new(Matrix::filled(2, 2, 0.5)).unwrap();
        let out = real_pixel_loss(&labels, &p, &layout).unwrap();
        assert_eq!((out.loss, out.counted), (0.0, 0));
        let labels = LabelGrid::new(vec![255, 1], layout).unwrap();
        let out = real_pixel_loss(&labels, &p, &layout).unwrap();
        assert!((out.loss - 2f64.ln()).abs() < 1e-12);
        assert_eq!(out.grad.row(0), &[0.0, 0.0]);
    }

    #[test]
    fn total_is_the_average() {
        assert_eq!(total_pixel_loss(0.0, 0.0), 0.0);
        assert_eq!(total_pixel_loss(1.0, 3.0), 2.0);
    }
}
