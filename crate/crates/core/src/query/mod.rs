//! Query-based (mask classification) supervision.
//!
//! A query set holds `N` pairs of a class distribution over `k` classes plus
//! "no object" and a soft mask. Query sets are projected to dense per-pixel
//! class scores, transported like pixel predictions, turned back into
//! rectified pseudo pairs and matched to predictions by the Hungarian
//! algorithm before the set-prediction losses are evaluated.

mod aggregate;
pub mod io;
mod loss;
mod matching;
mod pseudo;

pub use io::{decode_query_set, encode_query_set, gt_pairs_from_labels};
pub use aggregate::{aggregate_semantics, normalize_semantics, SemanticMap};
pub use loss::{
    mask_loss, real_query_loss, DICE_EPS, synthetic_query_loss, total_query_loss, MaskLoss, QueryGates,
    QueryGrad, QueryLoss,
};
pub use matching::{hungarian_match, linear_assignment, match_targets, MatchResult, Target};
pub use pseudo::{derive_pseudo_pairs, query_confidence, BINARIZE_THRESHOLD};

use crate::error::{Error, Result};
use crate::matrix::{argmax, softmax_in_place, Matrix};

/// Default number of queries.
pub const DEFAULT_QUERIES: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct QuerySet {
    queries: usize,
    classes: usize,
    height: usize,
    width: usize,
    /// `queries x (classes + 1)`; the last column is "no object".
    scores: Vec<f64>,
    /// `queries x (height * width)`.
    masks: Vec<f64>,
}

impl QuerySet {
    pub const SIMPLEX_TOL: f64 = 1e-6;

    pub fn new(
        classes: usize,
        height: usize,
        width: usize,
        scores: Vec<f64>,
        masks: Vec<f64>,
    ) -> Result<Self> {
        if classes == 0 || height == 0 || width == 0 {
            return Err(Error::Shape(format!(
                "query set needs k, H, W >= 1, got ({classes}, {height}, {width})"
            )));
        }
        let queries = scores.len() / (classes + 1);
        if queries == 0 || scores.len() != queries * (classes + 1) {
            return Err(Error::Shape(format!(
                "{} scores do not form rows of {}",
                scores.len(),
                classes + 1
            )));
        }
        if masks.len() != queries * height * width {
            return Err(Error::Shape(format!(
                "{} mask values for {queries} masks of {height}x{width}",
                masks.len()
            )));
        }
        for (q, s) in scores.chunks_exact(classes + 1).enumerate() {
            let total: f64 = s.iter().sum();
            if s.iter().any(|v| !(0.0..=1.0).contains(v)) || (total - 1.0).abs() > Self::SIMPLEX_TOL
            {
                return Err(Error::Invalid(format!("query {q} scores are not a distribution")));
            }
        }
        if let Some(v) = masks.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Invalid(format!("mask value {v} outside [0, 1]")));
        }
        Ok(Self {
            queries,
            classes,
            height,
            width,
            scores,
            masks,
        })
    }

    /// Softmax over class logits and sigmoid over mask logits.
    pub fn from_logits(
        class_logits: &Matrix,
        mask_logits: &Matrix,
        height: usize,
        width: usize,
    ) -> Result<Self> {
        if class_logits.cols() < 2
            || class_logits.rows() != mask_logits.rows()
            || mask_logits.cols() != height * width
        {
            return Err(Error::Shape(format!(
                "class logits {:?}, mask logits {:?}, image {height}x{width}",
                class_logits.shape(),
                mask_logits.shape()
            )));
        }
        let mut scores = class_logits.clone().into_data();
        for row in scores.chunks_exact_mut(class_logits.cols()) {
            softmax_in_place(row);
        }
        let masks = mask_logits.data().iter().map(|&x| sigmoid(x)).collect();
        Self::new(class_logits.cols() - 1, height, width, scores, masks)
    }

    pub fn queries(&self) -> usize {
        self.queries
    }

    /// Number of object classes, excluding "no object".
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Index of the "no object" class.
    pub fn no_object(&self) -> usize {
        self.classes
    }

    pub fn score(&self, q: usize) -> &[f64] {
        &self.scores[q * (self.classes + 1)..(q + 1) * (self.classes + 1)]
    }

    pub fn mask(&self, q: usize) -> &[f64] {
        &self.masks[q * self.pixels()..(q + 1) * self.pixels()]
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn masks(&self) -> &[f64] {
        &self.masks
    }

    /// Argmax class of query `q`; `None` when it is "no object".
    pub fn target_class(&self, q: usize) -> Option<usize> {
        let c = argmax(self.score(q));
        (c != self.classes).then_some(c)
    }
}

/// A ground-truth segment: class index and hard mask over `H*W` pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct GtPair {
    pub class: usize,
    pub mask: Vec<f64>,
}

/// Loss weights of one branch; matching reuses them as cost weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaskLossWeights {
    pub lambda_ce: f64,
    pub lambda_dice: f64,
    pub lambda_cls_obj: f64,
    pub lambda_cls_noobj: f64,
}

impl MaskLossWeights {
    /// Labeled-data weights: BCE 5, Dice 5, class 2, no-object 0.1.
    pub fn real() -> Self {
        Self {
            lambda_ce: 5.0,
            lambda_dice: 5.0,
            lambda_cls_obj: 2.0,
            lambda_cls_noobj: 0.1,
        }
    }

    /// Synthetic-data weights: BCE 5, no Dice term, class 2, no-object 0.02.
    pub fn synthetic() -> Self {
        Self {
            lambda_ce: 5.0,
            lambda_dice: 0.0,
            lambda_cls_obj: 2.0,
            lambda_cls_noobj: 0.02,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.lambda_ce,
            self.lambda_dice,
            self.lambda_cls_obj,
            self.lambda_cls_noobj,
        ];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Invalid(format!("loss weights must be finite and >= 0: {self:?}")));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_shapes_and_simplex() {
        assert!(QuerySet::new(2, 1, 1, vec![0.2, 0.3, 0.5], vec![0.5]).is_ok());
        assert!(QuerySet::new(2, 1, 1, vec![0.2, 0.3, 0.6], vec![0.5]).is_err());
        assert!(QuerySet::new(2, 1, 1, vec![0.2, 0.3, 0.5], vec![1.5]).is_err());
        assert!(QuerySet::new(2, 1, 2, vec![0.2, 0.3, 0.5], vec![0.5]).is_err());
        assert!(QuerySet::new(2, 1, 1, vec![], vec![]).is_err());
    }

    #[test]
    fn target_class_excludes_no_object() {
        let z = QuerySet::new(2, 1, 1, vec![0.1, 0.7, 0.2, 0.1, 0.1, 0.8], vec![1.0, 0.0]).unwrap();
        assert_eq!(z.target_class(0), Some(1));
        assert_eq!(z.target_class(1), None);
        assert_eq!(z.no_object(), 2);
    }

    #[test]
    fn presets() {
        assert_eq!(MaskLossWeights::real().lambda_dice, 5.0);
        assert_eq!(MaskLossWeights::synthetic().lambda_dice, 0.0);
        assert_eq!(MaskLossWeights::synthetic().lambda_cls_noobj, 0.02);
        assert!(MaskLossWeights {
            lambda_ce: -1.0,
            ..MaskLossWeights::real()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }
}
