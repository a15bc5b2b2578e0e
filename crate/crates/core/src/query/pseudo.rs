use crate::error::{Error, Result};
use crate::matrix::ProbMatrix;
use crate::transport::Layout;

use super::QuerySet;

/// Soft masks are binarized at this level.
pub const BINARIZE_THRESHOLD: f64 = 0.5;

fn check_inputs(teacher: &QuerySet, plan_q: &ProbMatrix, layout: &Layout, tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Invalid(format!("binarize threshold {tau} outside (0, 1)")));
    }
    if layout.batch != 1
        || layout.height != teacher.height()
        || layout.width != teacher.width()
        || plan_q.rows() != layout.rows()
        || plan_q.cols() != teacher.classes()
    {
        return Err(Error::Shape(format!(
            "plan {}x{} with layout {:?} does not fit a {}x{} query set with {} classes",
            plan_q.rows(),
            plan_q.cols(),
            layout,
            teacher.height(),
            teacher.width(),
            teacher.classes()
        )));
    }
    Ok(())
}

/// Rectified pseudo pairs: binarized teacher masks and class distributions
/// re-estimated from the transported per-pixel distributions under each mask.
///
/// The teacher's "no object" mass is kept; the object classes share the rest
/// in proportion to the mask-weighted class mass. Queries whose binarized
/// mask is empty keep the teacher pair.
pub fn derive_pseudo_pairs(
    teacher: &QuerySet,
    plan_q: &ProbMatrix,
    layout: &Layout,
    tau: f64,
) -> Result<QuerySet> {
    check_inputs(teacher, plan_q, layout, tau)?;
    let k = teacher.classes();
    let mut scores = Vec::with_capacity(teacher.scores().len());
    let mut masks = Vec::with_capacity(teacher.masks().len());
    for q in 0..teacher.queries() {
        let hard: Vec<f64> = teacher
            .mask(q)
            .iter()
            .map(|&m| if m >= tau { 1.0 } else { 0.0 })
            .collect();
        let mut mass = vec![0.0; k];
        for (pix, _) in hard.iter().enumerate().filter(|(_, &m)| m > 0.0) {
            for (acc, &v) in mass.iter_mut().zip(plan_q.row(pix)) {
                *acc += v;
            }
        }
        let total: f64 = mass.iter().sum();
        let s = teacher.score(q);
        if total > 0.0 {
            let object = 1.0 - s[k];
            scores.extend(mass.iter().map(|m| object * m / total));
            scores.push(s[k]);
            masks.extend(hard);
        } else {
            scores.extend_from_slice(s);
            masks.extend_from_slice(teacher.mask(q));
        }
    }
    QuerySet::new(k, teacher.height(), teacher.width(), scores, masks)
}

/// Per query, the mean over its binarized mask of the top transported class
/// probability; 0 for empty masks.
pub fn query_confidence(
    teacher: &QuerySet,
    plan_q: &ProbMatrix,
    layout: &Layout,
    tau: f64,
) -> Result<Vec<f64>> {
    check_inputs(teacher, plan_q, layout, tau)?;
    let top: Vec<f64> = (0..plan_q.rows())
        .map(|i| plan_q.row(i).iter().copied().fold(0.0, f64::max))
        .collect();
    Ok((0..teacher.queries())
        .map(|q| {
            let (sum, count) = teacher
                .mask(q)
                .iter()
                .zip(&top)
                .filter(|(&m, _)| m >= tau)
                .fold((0.0, 0usize), |(s, c), (_, &t)| (s + t, c + 1));
            if count == 0 {
                0.0
            } else {
                sum / count as f64
            }
        })
        .collect())
}
