use crate::error::{Error, Result};
use crate::matrix::{Matrix, ProbMatrix};
use crate::DEFAULT_PROB_FLOOR;

use super::CostMatrix;

/// Largest row-shifted `c/beta` handled by plain matrix scaling. Beyond it
/// the kernel `exp(-c/beta)` nears the bottom of the f64 range and the
/// solver iterates on log-scalings instead.
const PLAIN_SCALING_MAX_EXPONENT: f64 = 600.0;

/// Plain-domain scalings are rebalanced when they leave `[1e-150, 1e150]`.
const REBALANCE_BOUND: f64 = 1e150;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornSettings {
    /// Entropic regularization weight.
    pub beta: f64,
    pub max_iters: usize,
    /// Stop once the larger of the L1 row and column marginal violations
    /// is at most this value.
    pub tolerance: f64,
    /// Probabilities are clamped to this floor before taking logs.
    pub prob_floor: f64,
}

impl Default for SinkhornSettings {
    fn default() -> Self {
        Self {
            beta: 0.05,
            max_iters: 1000,
            tolerance: 1e-6,
            prob_floor: DEFAULT_PROB_FLOOR,
        }
    }
}

impl SinkhornSettings {
    pub fn with_beta(beta: f64) -> Self {
        Self {
            beta,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Invalid(format!("beta must be > 0, got {}", self.beta)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Invalid(format!(
                "tolerance must be > 0, got {}",
                self.tolerance
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::Invalid("max_iters must be >= 1".into()));
        }
        if !(self.prob_floor > 0.0 && self.prob_floor < 1.0) {
            return Err(Error::Invalid(format!(
                "prob_floor must lie in (0, 1), got {}",
                self.prob_floor
            )));
        }
        Ok(())
    }
}

/// Row and column masses of the transport polytope.
#[derive(Clone, Debug, PartialEq)]
pub struct MarginalPrior {
    row_mass: Vec<f64>,
    col_mass: Vec<f64>,
}

impl MarginalPrior {
    const MASS_TOL: f64 = 1e-9;

    /// `1/n` for every row and `1/k` for every column.
    pub fn uniform(n: usize, k: usize) -> Self {
        Self {
            row_mass: vec![1.0 / n as f64; n],
            col_mass: vec![1.0 / k as f64; k],
        }
    }

    pub fn new(row_mass: Vec<f64>, col_mass: Vec<f64>) -> Result<Self> {
        for (name, m) in [("row", &row_mass), ("column", &col_mass)] {
            if m.is_empty() {
                return Err(Error::Shape(format!("empty {name} marginal")));
            }
            if let Some(v) = m.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
                return Err(Error::Invalid(format!("{name} mass {v} is not positive")));
            }
            let s: f64 = m.iter().sum();
            if (s - 1.0).abs() > Self::MASS_TOL {
                return Err(Error::Invalid(format!("{name} masses sum to {s}")));
            }
        }
        Ok(Self { row_mass, col_mass })
    }

    pub fn row_mass(&self) -> &[f64] {
        &self.row_mass
    }

    pub fn col_mass(&self) -> &[f64] {
        &self.col_mass
    }

    fn check_against(&self, c: &CostMatrix) -> Result<()> {
        if self.row_mass.len() != c.rows() || self.col_mass.len() != c.cols() {
            return Err(Error::Shape(format!(
                "prior of size {}x{} for a {}x{} cost matrix",
                self.row_mass.len(),
                self.col_mass.len(),
                c.rows(),
                c.cols()
            )));
        }
        Ok(())
    }
}

/// Log-domain scaling vectors: `plan = diag(exp(log_u)) * exp(-c/beta) * diag(exp(log_v))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaling {
    pub log_u: Vec<f64>,
    pub log_v: Vec<f64>,
    pub beta: f64,
}

impl Scaling {
    /// Recomputes the plan from the factorized form.
    pub fn reconstruct(&self, c: &CostMatrix) -> Matrix {
        let mut m = Matrix::zeros(c.rows(), c.cols());
        for i in 0..c.rows() {
            for j in 0..c.cols() {
                m.set(
                    i,
                    j,
                    (self.log_u[i] - c.get(i, j) / self.beta + self.log_v[j]).exp(),
                );
            }
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    pub data: Matrix,
    /// Present for Sinkhorn solutions; the exact oracle has no scaling form.
    pub scaling: Option<Scaling>,
    pub iterations_used: usize,
    /// `max(L1 row violation, L1 column violation)` of `data`.
    pub final_violation: f64,
    pub converged: bool,
}

impl TransportPlan {
    pub fn rows(&self) -> usize {
        self.data.rows()
    }

    pub fn cols(&self) -> usize {
        self.data.cols()
    }

    pub fn marginal_violations(&self, prior: &MarginalPrior) -> (f64, f64) {
        marginal_violations(&self.data, prior.row_mass(), prior.col_mass())
    }
}

pub(crate) fn marginal_violations(plan: &Matrix, rows: &[f64], cols: &[f64]) -> (f64, f64) {
    let r = plan
        .row_sums()
        .iter()
        .zip(rows)
        .map(|(s, a)| (s - a).abs())
        .sum();
    let c = plan
        .col_sums()
        .iter()
        .zip(cols)
        .map(|(s, b)| (s - b).abs())
        .sum();
    (r, c)
}

/// Solves `min <pi, c> - beta * H(pi)` over plans with the prior's marginals
/// by Sinkhorn-Knopp scaling of the kernel `exp(-c/beta)`.
///
/// Non-convergence is not an error: the returned plan has
/// `converged == false` and `final_violation > tolerance`.
pub fn sinkhorn_solve(
    c: &CostMatrix,
    prior: &MarginalPrior,
    settings: &SinkhornSettings,
) -> Result<TransportPlan> {
    solve(c, prior, settings, None)
}

/// [`sinkhorn_solve`] starting from the column log-scaling `init_log_v`,
/// typically the solution of a similar earlier problem. The fixed point is
/// the same; only the iteration count changes.
pub fn sinkhorn_solve_warm(
    c: &CostMatrix,
    prior: &MarginalPrior,
    settings: &SinkhornSettings,
    init_log_v: &[f64],
) -> Result<TransportPlan> {
    if init_log_v.len() != c.cols() || !init_log_v.iter().all(|x| x.is_finite()) {
        return Err(Error::Invalid(format!(
            "warm start needs {} finite column scalings",
            c.cols()
        )));
    }
    solve(c, prior, settings, Some(init_log_v))
}

/// [`sinkhorn_solve`] by epsilon scaling: solves a ladder of regularization
/// strengths halving down to `settings.beta`, each warm-started from the
/// previous column scaling. The ladder starts at `beta_start` (at least
/// `settings.beta`). Small `beta` on costs with near ties converges far
/// faster this way. `iterations_used` counts every stage; convergence is
/// that of the last stage.
pub fn sinkhorn_solve_annealed(
    c: &CostMatrix,
    prior: &MarginalPrior,
    settings: &SinkhornSettings,
    beta_start: f64,
) -> Result<TransportPlan> {
    settings.validate()?;
    if !(beta_start.is_finite() && beta_start > 0.0) {
        return Err(Error::Invalid(format!("starting beta {beta_start} must be finite and positive")));
    }
    let mut beta = beta_start.max(settings.beta);
    let mut plan = solve(c, prior, &SinkhornSettings { beta, ..*settings }, None)?;
    let mut iterations = plan.iterations_used;
    while beta > settings.beta {
        let next = (beta * 0.5).max(settings.beta);
        let init: Vec<f64> = match &plan.scaling {
            Some(s) if s.log_v.iter().all(|x| x.is_finite()) => s.log_v.iter().map(|x| x * beta / next).collect(),
            _ => vec![0.0; c.cols()],
        };
        plan = solve(c, prior, &SinkhornSettings { beta: next, ..*settings }, Some(&init))?;
        iterations += plan.iterations_used;
        beta = next;
    }
    plan.iterations_used = iterations;
    Ok(plan)
}

fn solve(
    c: &CostMatrix,
    prior: &MarginalPrior,
    settings: &SinkhornSettings,
    init_log_v: Option<&[f64]>,
) -> Result<TransportPlan> {
    settings.validate()?;
    prior.check_against(c)?;
    let shifted = ShiftedCost::new(c, settings.beta);
    let plan = if shifted.max_exponent <= PLAIN_SCALING_MAX_EXPONENT {
        match solve_plain(&shifted, prior, settings, init_log_v) {
            Some(plan) => plan,
            None => solve_log(&shifted, prior, settings, init_log_v),
        }
    } else {
        solve_log(&shifted, prior, settings, init_log_v)
    };
    Ok(plan)
}

/// `-(c_ij - min_j c_ij) / beta`; every row has a zero maximum.
struct ShiftedCost {
    rows: usize,
    cols: usize,
    neg_scaled: Vec<f64>,
    row_shift: Vec<f64>,
    beta: f64,
    max_exponent: f64,
}

impl ShiftedCost {
    fn new(c: &CostMatrix, beta: f64) -> Self {
        let (rows, cols) = (c.rows(), c.cols());
        let mut neg_scaled = Vec::with_capacity(rows * cols);
        let mut row_shift = Vec::with_capacity(rows);
        let mut max_exponent: f64 = 0.0;
        for i in 0..rows {
            let r = c.row(i);
            let m = r.iter().copied().fold(f64::INFINITY, f64::min);
            row_shift.push(m);
            for &v in r {
                let e = (v - m) / beta;
                max_exponent = max_exponent.max(e);
                neg_scaled.push(-e);
            }
        }
        Self {
            rows,
            cols,
            neg_scaled,
            row_shift,
            beta,
            max_exponent,
        }
    }

    fn finish(
        &self,
        prior: &MarginalPrior,
        settings: &SinkhornSettings,
        data: Matrix,
        log_u: Vec<f64>,
        log_v: Vec<f64>,
        iterations_used: usize,
    ) -> TransportPlan {
        let (r, c) = marginal_violations(&data, prior.row_mass(), prior.col_mass());
        let final_violation = r.max(c);
        let log_u = log_u
            .iter()
            .zip(&self.row_shift)
            .map(|(lu, m)| lu + m / self.beta)
            .collect();
        TransportPlan {
            data,
            scaling: Some(Scaling {
                log_u,
                log_v,
                beta: self.beta,
            }),
            iterations_used,
            final_violation,
            converged: final_violation <= settings.tolerance,
        }
    }
}

/// Matrix scaling on the precomputed kernel. Returns `None` if a scaling
/// leaves the finite positive range, in which case the caller falls back
/// to the log-domain iteration.
fn solve_plain(
    s: &ShiftedCost,
    prior: &MarginalPrior,
    settings: &SinkhornSettings,
    init_log_v: Option<&[f64]>,
) -> Option<TransportPlan> {
    let (n, k) = (s.rows, s.cols);
    let a = prior.row_mass();
    let b = prior.col_mass();
    let kernel: Vec<f64> = s.neg_scaled.iter().map(|e| e.exp()).collect();
    let mut u = vec![0.0; n];
    let mut v = match init_log_v {
        Some(lv) => {
            let top = lv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            lv.iter().map(|x| (x - top).exp()).collect()
        }
        None => vec![1.0; k],
    };
    let mut u_next = vec![0.0; n];
    let mut ktu = vec![0.0; k];
    let mut iterations = 0;
    while iterations < settings.max_iters {
        // One pass: the row violation of the current iterate (columns are
        // exact after every column update), the next u = a / (K v) and the
        // column sums K^T u_next.
        let mut violation = 0.0;
        ktu.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            let row = &kernel[i * k..(i + 1) * k];
            let kv: f64 = row.iter().zip(&v).map(|(x, y)| x * y).sum();
            violation += (u[i] * kv - a[i]).abs();
            let ui = a[i] / kv;
            u_next[i] = ui;
            for (acc, x) in ktu.iter_mut().zip(row) {
                *acc += x * ui;
            }
        }
        if iterations > 0 && violation <= settings.tolerance {
            break;
        }
        std::mem::swap(&mut u, &mut u_next);
        for j in 0..k {
            v[j] = b[j] / ktu[j];
        }
        iterations += 1;
        if !u.iter().chain(&v).all(|x| x.is_finite() && *x > 0.0) {
            return None;
        }
        let vmax = v.iter().copied().fold(0.0, f64::max);
        let vmin = v.iter().copied().fold(f64::INFINITY, f64::min);
        if vmax > REBALANCE_BOUND || vmin < 1.0 / REBALANCE_BOUND {
            v.iter_mut().for_each(|x| *x /= vmax);
            u.iter_mut().for_each(|x| *x *= vmax);
        }
    }
    let mut data = Matrix::zeros(n, k);
    for i in 0..n {
        let row = &kernel[i * k..(i + 1) * k];
        let out = data.row_mut(i);
        for j in 0..k {
            out[j] = u[i] * row[j] * v[j];
        }
    }
    if !data.data().iter().all(|x| x.is_finite()) {
        return None;
    }
    let log_u = u.iter().map(|x| x.ln()).collect();
    let log_v = v.iter().map(|x| x.ln()).collect();
    Some(s.finish(prior, settings, data, log_u, log_v, iterations))
}

fn solve_log(
    s: &ShiftedCost,
    prior: &MarginalPrior,
    settings: &SinkhornSettings,
    init_log_v: Option<&[f64]>,
) -> TransportPlan {
    let (n, k) = (s.rows, s.cols);
    let log_a: Vec<f64> = prior.row_mass().iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = prior.col_mass().iter().map(|x| x.ln()).collect();
    let a = prior.row_mass();
    let mut f = vec![f64::NEG_INFINITY; n];
    let mut g = init_log_v.map_or_else(|| vec![0.0; k], <[f64]>::to_vec);
    let mut lse = vec![0.0; n];
    let mut col_max = vec![0.0; k];
    let mut col_sum = vec![0.0; k];
    let mut iterations = 0;
    while iterations < settings.max_iters {
        let mut violation = 0.0;
        for i in 0..n {
            let row = &s.neg_scaled[i * k..(i + 1) * k];
            lse[i] = log_sum_exp(row.iter().zip(&g).map(|(m, gj)| m + gj));
            violation += ((f[i] + lse[i]).exp() - a[i]).abs();
        }
        if iterations > 0 && violation <= settings.tolerance {
            break;
        }
        for i in 0..n {
            f[i] = log_a[i] - lse[i];
        }
        col_max.iter_mut().for_each(|x| *x = f64::NEG_INFINITY);
        col_sum.iter_mut().for_each(|x| *x = 0.0);
        for i in 0..n {
            let row = &s.neg_scaled[i * k..(i + 1) * k];
            let fi = f[i];
            for j in 0..k {
                let x = row[j] + fi;
                if x > col_max[j] {
                    col_sum[j] = col_sum[j] * (col_max[j] - x).exp() + 1.0;
                    col_max[j] = x;
                } else {
                    col_sum[j] += (x - col_max[j]).exp();
                }
            }
        }
        for j in 0..k {
            g[j] = log_b[j] - (col_max[j] + col_sum[j].ln());
        }
        iterations += 1;
    }
    let mut data = Matrix::zeros(n, k);
    for i in 0..n {
        let row = &s.neg_scaled[i * k..(i + 1) * k];
        let out = data.row_mut(i);
        for j in 0..k {
            out[j] = (f[i] + row[j] + g[j]).exp();
        }
    }
    s.finish(prior, settings, data, f, g, iterations)
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// `sum_ij plan_ij * c_ij`.
pub fn transport_cost(plan: &TransportPlan, c: &CostMatrix) -> Result<f64> {
    plan.data.dot(c.matrix())
}

/// Shannon entropy `-sum pi log pi` with `0 log 0 = 0`.
pub fn entropy(plan: &Matrix) -> f64 {
    -plan
        .data()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Divides every plan row by its mass, giving per-pixel class distributions.
pub fn plan_row_normalize(plan: &TransportPlan) -> Result<ProbMatrix> {
    let mut m = plan.data.clone();
    for i in 0..m.rows() {
        let r = m.row_mut(i);
        let s: f64 = r.iter().sum();
        if !(s > 0.0) {
            return Err(Error::ZeroRowMass(i));
        }
        r.iter_mut().for_each(|v| *v /= s);
    }
    Ok(ProbMatrix::from_matrix_unchecked(m))
}

/// Per-row class distributions `q_ij ∝ exp(-c_ij / beta) * v_j` from a
/// solved column scaling, for any rows of predictions.
///
/// On the rows the plan was solved for this equals [`plan_row_normalize`];
/// on other rows it applies the same class re-weighting.
pub fn conditional_rows(p: &ProbMatrix, scaling: &Scaling, settings: &SinkhornSettings) -> Result<ProbMatrix> {
    settings.validate()?;
    if scaling.log_v.len() != p.cols() {
        return Err(Error::Shape(format!(
            "column scaling has {} entries, predictions have {} classes",
            scaling.log_v.len(),
            p.cols()
        )));
    }
    let k = p.cols();
    let mut out = Matrix::zeros(p.rows(), k);
    for i in 0..p.rows() {
        let row = out.row_mut(i);
        for (j, (o, &v)) in row.iter_mut().zip(p.row(i)).enumerate() {
            let cost = (-(v.max(settings.prob_floor)).ln()).max(0.0);
            *o = -cost / scaling.beta + scaling.log_v[j];
        }
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for o in row.iter_mut() {
            *o = (*o - m).exp();
            s += *o;
        }
        row.iter_mut().for_each(|o| *o /= s);
    }
    Ok(ProbMatrix::from_matrix_unchecked(out))
}
