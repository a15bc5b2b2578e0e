use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::DEFAULT_PROB_FLOOR;

use super::loss::{bce, dice};
use super::{MaskLossWeights, QuerySet};

/// One object target of a matching problem.
#[derive(Clone, Copy, Debug)]
pub struct Target<'a> {
    pub class: usize,
    pub mask: &'a [f64],
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    /// Prediction index per target; `None` for "no object" targets, which are
    /// not matched and are represented by the leftover predictions.
    pub assignment: Vec<Option<usize>>,
    pub total_cost: f64,
}

impl MatchResult {
    /// Predictions not assigned to any target, ascending.
    pub fn unmatched(&self, predictions: usize) -> Vec<usize> {
        let mut used = vec![false; predictions];
        for p in self.assignment.iter().flatten() {
            used[*p] = true;
        }
        (0..predictions).filter(|p| !used[*p]).collect()
    }

    pub fn matched_pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.assignment
            .iter()
            .enumerate()
            .filter_map(|(t, p)| p.map(|p| (t, p)))
    }
}

pub(crate) fn pair_cost(
    pred: &QuerySet,
    p: usize,
    target: &Target<'_>,
    weights: &MaskLossWeights,
) -> f64 {
    let s = pred.score(p)[target.class].max(DEFAULT_PROB_FLOOR);
    let mut cost = -weights.lambda_cls_obj * s.ln();
    if weights.lambda_ce > 0.0 {
        cost += weights.lambda_ce * bce(pred.mask(p), target.mask);
    }
    if weights.lambda_dice > 0.0 {
        cost += weights.lambda_dice * dice(pred.mask(p), target.mask);
    }
    cost
}

/// Matches every object target of `target` to a distinct prediction.
pub fn hungarian_match(
    pred: &QuerySet,
    target: &QuerySet,
    weights: &MaskLossWeights,
) -> Result<MatchResult> {
    if (pred.classes(), pred.height(), pred.width())
        != (target.classes(), target.height(), target.width())
    {
        return Err(Error::Shape("prediction and target query sets differ in k, H or W".into()));
    }
    let objects: Vec<usize> = (0..target.queries())
        .filter(|&t| target.target_class(t).is_some())
        .collect();
    let targets: Vec<Target<'_>> = objects
        .iter()
        .map(|&t| Target {
            class: target.target_class(t).unwrap_or_default(),
            mask: target.mask(t),
        })
        .collect();
    let inner = match_targets(pred, &targets, weights)?;
    let mut assignment = vec![None; target.queries()];
    for (slot, &t) in objects.iter().enumerate() {
        assignment[t] = inner.assignment[slot];
    }
    Ok(MatchResult {
        assignment,
        total_cost: inner.total_cost,
    })
}

/// Matches a list of object targets (for example ground-truth segments).
pub fn match_targets(
    pred: &QuerySet,
    targets: &[Target<'_>],
    weights: &MaskLossWeights,
) -> Result<MatchResult> {
    weights.validate()?;
    if targets.len() > pred.queries() {
        return Err(Error::TooManyTargets {
            targets: targets.len(),
            predictions: pred.queries(),
        });
    }
    for t in targets {
        if t.class >= pred.classes() || t.mask.len() != pred.pixels() {
            return Err(Error::Shape(format!(
                "target class {} / mask of {} pixels does not fit predictions",
                t.class,
                t.mask.len()
            )));
        }
    }
    if targets.is_empty() {
        return Ok(MatchResult {
            assignment: Vec::new(),
            total_cost: 0.0,
        });
    }
    let mut cost = Matrix::zeros(targets.len(), pred.queries());
    for (t, target) in targets.iter().enumerate() {
        for p in 0..pred.queries() {
            cost.set(t, p, pair_cost(pred, p, target, weights));
        }
    }
    let (assignment, total_cost) = linear_assignment(&cost)?;
    Ok(MatchResult {
        assignment: assignment.into_iter().map(Some).collect(),
        total_cost,
    })
}

/// Minimum-cost assignment of every row to a distinct column (`rows <= cols`).
///
/// Among optimal assignments, returns the lexicographically smallest sequence
/// of column indices by row.
pub fn linear_assignment(cost: &Matrix) -> Result<(Vec<usize>, f64)> {
    let (rows, cols) = cost.shape();
    if rows > cols {
        return Err(Error::TooManyTargets {
            targets: rows,
            predictions: cols,
        });
    }
    if let Some(v) = cost.data().iter().find(|v| !v.is_finite()) {
        return Err(Error::Invalid(format!("assignment cost {v} is not finite")));
    }
    if rows == 0 {
        return Ok((Vec::new(), 0.0));
    }
    // Pad with zero-cost rows so every column is covered; any perfect
    // matching on tight edges of an optimal dual is then optimal.
    let n = cols;
    let c = |i: usize, j: usize| if i < rows { cost.get(i, j) } else { 0.0 };
    let (row_to_col, u, v) = kuhn_munkres(n, &c);
    let scale = cost.data().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = 1e-9 * (1.0 + scale);
    let tight = |i: usize, j: usize| c(i, j) - u[i] - v[j] <= tol;

    let mut m_row = row_to_col;
    let mut m_col = vec![0; n];
    for (i, &j) in m_row.iter().enumerate() {
        m_col[j] = i;
    }
    for t in 0..rows {
        for j in 0..n {
            if m_row[t] == j {
                break;
            }
            let owner = m_col[j];
            if owner < t || !tight(t, j) {
                continue;
            }
            let saved = (m_row.clone(), m_col.clone());
            let freed = m_row[t];
            m_row[t] = j;
            m_col[j] = t;
            let mut seen = vec![false; n];
            if augment(owner, freed, t, &tight, &mut m_row, &mut m_col, &mut seen) {
                break;
            }
            (m_row, m_col) = saved;
        }
    }
    m_row.truncate(rows);
    let total = m_row.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum();
    Ok((m_row, total))
}

/// Alternating path from free row `r` to the single free column `goal`,
/// using only rows above `fixed` and tight edges.
fn augment(
    r: usize,
    goal: usize,
    fixed: usize,
    tight: &dyn Fn(usize, usize) -> bool,
    m_row: &mut [usize],
    m_col: &mut [usize],
    seen: &mut [bool],
) -> bool {
    for j in 0..m_col.len() {
        if seen[j] || !tight(r, j) {
            continue;
        }
        if j != goal && m_col[j] <= fixed {
            continue;
        }
        seen[j] = true;
        if j == goal || augment(m_col[j], goal, fixed, tight, m_row, m_col, seen) {
            m_row[r] = j;
            m_col[j] = r;
            return true;
        }
    }
    false
}

/// Square Hungarian algorithm with potentials. Returns the row assignment
/// and dual potentials with `u[i] + v[j] <= c(i, j)`, tight on the matching.
fn kuhn_munkres(n: usize, c: &dyn Fn(usize, usize) -> f64) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    // 1-based internals; index 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = c(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[owner[j] - 1] = j - 1;
    }
    (row_to_col, u[1..].to_vec(), v[1..].to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_assignment() {
        let c = Matrix::from_rows(&[vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]])
            .unwrap();
        let (a, total) = linear_assignment(&c).unwrap();
        assert_eq!(a, vec![1, 0, 2]);
        assert_eq!(total, 5.0);
    }

    #[test]
    fn ties_resolve_lexicographically() {
        let c = Matrix::filled(3, 4, 1.0);
        assert_eq!(linear_assignment(&c).unwrap().0, vec![0, 1, 2]);
        let c = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        // Optima: (1,0), (1,2), (2,0); smallest is (1,0).
        assert_eq!(linear_assignment(&c).unwrap().0, vec![1, 0]);
    }

    #[test]
    fn rectangular_and_errors() {
        let c = Matrix::from_rows(&[vec![5.0, 3.0, 9.0]]).unwrap();
        assert_eq!(linear_assignment(&c).unwrap(), (vec![1], 3.0));
        assert!(linear_assignment(&Matrix::zeros(3, 2)).is_err());
    }
}
