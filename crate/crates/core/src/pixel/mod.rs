//! Confidence-gated pixel pseudo-labels and the pixel-based objective.
//!
//! Transport plans are row-normalized into per-pixel class distributions,
//! gated by the teacher's maximum confidence, and used as soft targets for
//! the student's predictions on the strongly augmented view. Labeled pixels
//! get the usual cross-entropy. Both losses return gradients with respect
//! to the logits of a softmax head.

pub mod io;
pub(crate) mod loss;

pub use loss::{real_pixel_loss, synthetic_pixel_loss, total_pixel_loss, PixelLoss};

use crate::error::{Error, Result};
use crate::matrix::{Matrix, ProbMatrix};
use crate::transport::{plan_row_normalize, Layout, TransportPlan};

/// Ignore sentinel for label maps.
pub const IGNORE_LABEL: u8 = 255;

/// `flags[i] = max_j p_weak[i][j] >= gamma`.
#[derive(Clone, Debug, PartialEq)]
pub struct GateMask {
    pub flags: Vec<bool>,
    pub gamma: f64,
}

impl GateMask {
    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn count(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }

    /// Fraction of gated-in rows.
    pub fn fraction(&self) -> f64 {
        if self.flags.is_empty() {
            0.0
        } else {
            self.count() as f64 / self.flags.len() as f64
        }
    }
}

pub fn confidence_gate(p_weak: &ProbMatrix, gamma: f64) -> Result<GateMask> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Invalid(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    let flags = p_weak
        .matrix()
        .iter_rows()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max) >= gamma)
        .collect();
    Ok(GateMask { flags, gamma })
}

/// Supervision target for unlabeled images: per-pixel distributions `q`
/// plus the confidence gate.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoLabelGrid {
    pub q: ProbMatrix,
    pub gate: GateMask,
    pub layout: Layout,
}

impl PseudoLabelGrid {
    pub fn new(q: ProbMatrix, gate: GateMask, layout: Layout) -> Result<Self> {
        if q.rows() != gate.len() || q.rows() != layout.rows() {
            return Err(Error::Shape(format!(
                "pseudo labels with {} rows, gate of {} and layout of {} pixels",
                q.rows(),
                gate.len(),
                layout.rows()
            )));
        }
        Ok(Self { q, gate, layout })
    }

    pub fn classes(&self) -> usize {
        self.q.cols()
    }
}

/// `q = plan_row_normalize(plan)` with the gate and layout attached.
pub fn make_pseudo_labels(
    plan: &TransportPlan,
    gate: GateMask,
    layout: Layout,
) -> Result<PseudoLabelGrid> {
    let q = plan_row_normalize(plan)?;
    PseudoLabelGrid::new(q, gate, layout)
}

/// One-hot teacher argmax targets; the assignment used without transport.
pub fn argmax_pseudo_labels(
    p_weak: &ProbMatrix,
    gate: GateMask,
    layout: Layout,
) -> Result<PseudoLabelGrid> {
    let q = ProbMatrix::one_hot(&p_weak.argmax_rows(), p_weak.cols())?;
    PseudoLabelGrid::new(q, gate, layout)
}

/// Integer label map `(batch, height, width)`; [`IGNORE_LABEL`] marks
/// pixels without supervision.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelGrid {
    pub labels: Vec<u8>,
    pub layout: Layout,
    pub ignore_value: u8,
}

impl LabelGrid {
    pub fn new(labels: Vec<u8>, layout: Layout) -> Result<Self> {
        if labels.len() != layout.rows() {
            return Err(Error::Shape(format!(
                "{} labels for a layout of {} pixels",
                labels.len(),
                layout.rows()
            )));
        }
        Ok(Self {
            labels,
            layout,
            ignore_value: IGNORE_LABEL,
        })
    }

    /// Checks that every non-ignore label is below `classes`.
    pub fn validate(&self, classes: usize) -> Result<()> {
        match self
            .labels
            .iter()
            .find(|&&l| l != self.ignore_value && l as usize >= classes)
        {
            Some(l) => Err(Error::Invalid(format!("label {l} >= {classes} classes"))),
            None => Ok(()),
        }
    }
}

/// Mean over pixels of the row-wise maximum, used for logging.
pub fn mean_confidence(p: &Matrix) -> f64 {
    let total: f64 = p
        .iter_rows()
        .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum();
    total / p.rows().max(1) as f64
}
