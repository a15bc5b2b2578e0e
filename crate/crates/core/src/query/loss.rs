use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::pixel::loss::soft_cross_entropy_row;
use crate::DEFAULT_PROB_FLOOR;

use super::matching::{match_targets, MatchResult, Target};
use super::{GtPair, MaskLossWeights, QuerySet};

pub const DICE_EPS: f64 = 1e-6;

/// Mean binary cross-entropy with clamped logarithms.
pub(crate) fn bce(m: &[f64], t: &[f64]) -> f64 {
    let total: f64 = m
        .iter()
        .zip(t)
        .map(|(&m, &t)| {
            -(t * m.max(DEFAULT_PROB_FLOOR).ln() + (1.0 - t) * (1.0 - m).max(DEFAULT_PROB_FLOOR).ln())
        })
        .sum();
    total / m.len() as f64
}

pub(crate) fn dice(m: &[f64], t: &[f64]) -> f64 {
    let inter: f64 = m.iter().zip(t).map(|(a, b)| a * b).sum();
    let denom = m.iter().sum::<f64>() + t.iter().sum::<f64>() + DICE_EPS;
    1.0 - 2.0 * inter / denom
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskLoss {
    pub loss: f64,
    /// Gradient with respect to the mask logits.
    pub grad: Vec<f64>,
}

/// `lambda_ce * BCE + lambda_dice * Dice` of a soft mask against a target.
pub fn mask_loss(m_pred: &[f64], m_target: &[f64], weights: &MaskLossWeights) -> Result<MaskLoss> {
    if m_pred.len() != m_target.len() || m_pred.is_empty() {
        return Err(Error::Shape(format!(
            "mask sizes {} and {} differ or are empty",
            m_pred.len(),
            m_target.len()
        )));
    }
    let mut grad = vec![0.0; m_pred.len()];
    let mut loss = 0.0;
    let n = m_pred.len() as f64;
    if weights.lambda_ce > 0.0 {
        loss += weights.lambda_ce * bce(m_pred, m_target);
        for ((g, &m), &t) in grad.iter_mut().zip(m_pred).zip(m_target) {
            let mut d = 0.0;
            if m > DEFAULT_PROB_FLOOR {
                d -= t * (1.0 - m);
            }
            if 1.0 - m > DEFAULT_PROB_FLOOR {
                d += (1.0 - t) * m;
            }
            *g += weights.lambda_ce * d / n;
        }
    }
    if weights.lambda_dice > 0.0 {
        loss += weights.lambda_dice * dice(m_pred, m_target);
        let inter: f64 = m_pred.iter().zip(m_target).map(|(a, b)| a * b).sum();
        let denom = m_pred.iter().sum::<f64>() + m_target.iter().sum::<f64>() + DICE_EPS;
        for ((g, &m), &t) in grad.iter_mut().zip(m_pred).zip(m_target) {
            let d_m = -2.0 * t / denom + 2.0 * inter / (denom * denom);
            *g += weights.lambda_dice * d_m * m * (1.0 - m);
        }
    }
    Ok(MaskLoss { loss, grad })
}

/// Gradients with respect to class logits (`N x (k+1)`) and mask logits
/// (`N x H*W`).
#[derive(Clone, Debug, PartialEq)]
pub struct QueryGrad {
    pub class_logits: Matrix,
    pub mask_logits: Matrix,
}

impl QueryGrad {
    fn zeros(z: &QuerySet) -> Self {
        Self {
            class_logits: Matrix::zeros(z.queries(), z.classes() + 1),
            mask_logits: Matrix::zeros(z.queries(), z.pixels()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryLoss {
    pub loss: f64,
    pub grad: QueryGrad,
}

/// Gate inputs of the synthetic query loss.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryGates {
    /// Batch threshold on the mean top pseudo score.
    pub delta: f64,
    /// Per-query mask threshold.
    pub gamma: f64,
    /// Per pseudo query confidence, compared against `gamma`.
    pub per_query_conf: Vec<f64>,
}

impl QueryGates {
    /// Mean over all queries of the largest pseudo score, "no object" included.
    pub fn batch_score(pseudo: &QuerySet) -> f64 {
        let total: f64 = (0..pseudo.queries())
            .map(|q| pseudo.score(q).iter().copied().fold(f64::MIN, f64::max))
            .sum();
        total / pseudo.queries() as f64
    }
}

struct Accumulator {
    loss: f64,
    grad: QueryGrad,
}

impl Accumulator {
    fn new(pred: &QuerySet) -> Self {
        Self {
            loss: 0.0,
            grad: QueryGrad::zeros(pred),
        }
    }

    fn class_term(&mut self, pred: &QuerySet, p: usize, class: usize, weight: f64) {
        if weight == 0.0 {
            return;
        }
        let mut target = vec![0.0; pred.classes() + 1];
        target[class] = 1.0;
        self.loss +=
            soft_cross_entropy_row(pred.score(p), &target, weight, self.grad.class_logits.row_mut(p));
    }

    fn mask_term(&mut self, pred: &QuerySet, p: usize, target: &[f64], weights: &MaskLossWeights) -> Result<()> {
        let ml = mask_loss(pred.mask(p), target, weights)?;
        self.loss += ml.loss;
        for (g, d) in self.grad.mask_logits.row_mut(p).iter_mut().zip(&ml.grad) {
            *g += d;
        }
        Ok(())
    }

    fn finish(self) -> QueryLoss {
        QueryLoss {
            loss: self.loss,
            grad: self.grad,
        }
    }
}

/// Loss of strong-view predictions against matched pseudo pairs.
///
/// Unmatched predictions stand for the "no object" pseudo targets.
pub fn synthetic_query_loss(
    pred_strong: &QuerySet,
    pseudo: &QuerySet,
    matching: &MatchResult,
    gates: &QueryGates,
    weights: &MaskLossWeights,
) -> Result<QueryLoss> {
    weights.validate()?;
    check_match(pred_strong, pseudo, matching)?;
    if gates.per_query_conf.len() != pseudo.queries() {
        return Err(Error::Shape(format!(
            "{} query confidences for {} pseudo queries",
            gates.per_query_conf.len(),
            pseudo.queries()
        )));
    }
    let mut acc = Accumulator::new(pred_strong);
    if QueryGates::batch_score(pseudo) < gates.delta {
        return Ok(acc.finish());
    }
    for (t, p) in matching.matched_pairs() {
        let class = pseudo
            .target_class(t)
            .ok_or_else(|| Error::Invalid(format!("\"no object\" pseudo query {t} is matched")))?;
        acc.class_term(pred_strong, p, class, weights.lambda_cls_obj);
        if gates.per_query_conf[t] >= gates.gamma {
            acc.mask_term(pred_strong, p, pseudo.mask(t), weights)?;
        }
    }
    for p in matching.unmatched(pred_strong.queries()) {
        acc.class_term(pred_strong, p, pred_strong.no_object(), weights.lambda_cls_noobj);
    }
    Ok(acc.finish())
}

/// Matches predictions to ground-truth segments and evaluates the loss.
pub fn real_query_loss(
    pred: &QuerySet,
    gt: &[GtPair],
    weights: &MaskLossWeights,
) -> Result<(QueryLoss, MatchResult)> {
    let targets: Vec<Target<'_>> = gt
        .iter()
        .map(|g| Target {
            class: g.class,
            mask: &g.mask,
        })
        .collect();
    let matching = match_targets(pred, &targets, weights)?;
    let mut acc = Accumulator::new(pred);
    for (t, p) in matching.matched_pairs() {
        acc.class_term(pred, p, gt[t].class, weights.lambda_cls_obj);
        acc.mask_term(pred, p, &gt[t].mask, weights)?;
    }
    for p in matching.unmatched(pred.queries()) {
        acc.class_term(pred, p, pred.no_object(), weights.lambda_cls_noobj);
    }
    Ok((acc.finish(), matching))
}

pub fn total_query_loss(l_s: f64, l_r: f64) -> f64 {
    0.5 * (l_s + l_r)
}

fn check_match(pred: &QuerySet, pseudo: &QuerySet, matching: &MatchResult) -> Result<()> {
    if (pred.classes(), pred.height(), pred.width())
        != (pseudo.classes(), pseudo.height(), pseudo.width())
        || matching.assignment.len() != pseudo.queries()
    {
        return Err(Error::Shape("match does not fit the query sets".into()));
    }
    let mut used = vec![false; pred.queries()];
    for p in matching.assignment.iter().flatten() {
        if *p >= pred.queries() || std::mem::replace(&mut used[*p], true) {
            return Err(Error::Invalid(format!("prediction {p} is out of range or reused")));
        }
    }
    Ok(())
}
