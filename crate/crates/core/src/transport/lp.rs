//! Exact transportation simplex, used as a verification oracle.
//!
//! Starts from the north-west corner basis and pivots with Bland's rule
//! (smallest entering index, smallest leaving index among ratio ties), so
//! degenerate pivots cannot cycle.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::{CostMatrix, MarginalPrior, TransportPlan};

pub const ORACLE_MAX_ROWS: usize = 64;
pub const ORACLE_MAX_COLS: usize = 16;

const MAX_PIVOTS: usize = 200_000;

#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub plan: TransportPlan,
    pub objective: f64,
    /// Dual potentials with `c_ij - row_potential_i - col_potential_j >= 0`
    /// (up to rounding) and equality on the basis.
    pub row_potential: Vec<f64>,
    pub col_potential: Vec<f64>,
    pub pivots: usize,
}

impl OracleSolution {
    /// `sum_i a_i u_i + sum_j b_j v_j`; equals the objective at optimality.
    pub fn dual_objective(&self, prior: &MarginalPrior) -> f64 {
        let r: f64 = prior
            .row_mass()
            .iter()
            .zip(&self.row_potential)
            .map(|(a, u)| a * u)
            .sum();
        let c: f64 = prior
            .col_mass()
            .iter()
            .zip(&self.col_potential)
            .map(|(b, v)| b * v)
            .sum();
        r + c
    }

    /// Most negative reduced cost `c_ij - u_i - v_j` (0 when dual feasible).
    pub fn min_reduced_cost(&self, c: &CostMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..c.rows() {
            for j in 0..c.cols() {
                worst = worst.min(c.get(i, j) - self.row_potential[i] - self.col_potential[j]);
            }
        }
        worst
    }
}

/// Exact minimizer of `<pi, c>` over plans with the prior's marginals.
pub fn lp_oracle_solve(c: &CostMatrix, prior: &MarginalPrior) -> Result<OracleSolution> {
    let (n, k) = (c.rows(), c.cols());
    if n > ORACLE_MAX_ROWS || k > ORACLE_MAX_COLS {
        return Err(Error::OracleTooLarge {
            rows: n,
            cols: k,
            max_rows: ORACLE_MAX_ROWS,
            max_cols: ORACLE_MAX_COLS,
        });
    }
    if prior.row_mass().len() != n || prior.col_mass().len() != k {
        return Err(Error::Shape(format!(
            "prior of size {}x{} for a {n}x{k} cost matrix",
            prior.row_mass().len(),
            prior.col_mass().len()
        )));
    }
    let scale = c
        .matrix()
        .data()
        .iter()
        .fold(1.0f64, |m, v| m.max(v.abs()));
    let eps = 1e-12 * scale;

    let mut tableau = Tableau::north_west_corner(prior.row_mass(), prior.col_mass());
    let mut pivots = 0;
    loop {
        let (u, v) = tableau.potentials(c);
        let entering = (0..n * k).find(|&idx| {
            let (i, j) = (idx / k, idx % k);
            !tableau.basic[idx] && c.get(i, j) - u[i] - v[j] < -eps
        });
        let Some(entering) = entering else {
            let data = tableau.flow;
            let objective = data.dot(c.matrix())?;
            let plan = TransportPlan {
                data,
                scaling: None,
                iterations_used: pivots,
                final_violation: 0.0,
                converged: true,
            };
            let (r, cv) = plan.marginal_violations(prior);
            return Ok(OracleSolution {
                plan: TransportPlan {
                    final_violation: r.max(cv),
                    ..plan
                },
                objective,
                row_potential: u,
                col_potential: v,
                pivots,
            });
        };
        if pivots >= MAX_PIVOTS {
            return Err(Error::OracleStalled(MAX_PIVOTS));
        }
        tableau.pivot(entering / k, entering % k);
        pivots += 1;
    }
}

struct Tableau {
    n: usize,
    k: usize,
    flow: Matrix,
    basic: Vec<bool>,
}

impl Tableau {
    /// North-west corner rule; yields exactly `n + k - 1` basic cells
    /// (some possibly at zero flow).
    fn north_west_corner(rows: &[f64], cols: &[f64]) -> Self {
        let (n, k) = (rows.len(), cols.len());
        let mut flow = Matrix::zeros(n, k);
        let mut basic = vec![false; n * k];
        let mut ra = rows.to_vec();
        let mut rb = cols.to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            basic[i * k + j] = true;
            if i == n - 1 && j == k - 1 {
                // The remaining supply and demand agree up to rounding.
                flow.set(i, j, ra[i].max(rb[j]).max(0.0));
                break;
            }
            let row_done = (ra[i] <= rb[j] && i < n - 1) || j == k - 1;
            if row_done {
                let q = ra[i].max(0.0);
                flow.set(i, j, q);
                rb[j] -= q;
                ra[i] = 0.0;
                i += 1;
            } else {
                let q = rb[j].max(0.0);
                flow.set(i, j, q);
                ra[i] -= q;
                rb[j] = 0.0;
                j += 1;
            }
        }
        Self { n, k, flow, basic }
    }

    /// Spanning-tree adjacency over nodes `0..n` (rows) and `n..n+k` (columns).
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n + self.k];
        for idx in 0..self.n * self.k {
            if self.basic[idx] {
                let (i, j) = (idx / self.k, idx % self.k);
                adj[i].push(self.n + j);
                adj[self.n + j].push(i);
            }
        }
        adj
    }

    /// Solves `u_i + v_j = c_ij` on the basis with `u_0 = 0`.
    fn potentials(&self, c: &CostMatrix) -> (Vec<f64>, Vec<f64>) {
        let adj = self.adjacency();
        let mut pot = vec![f64::NAN; self.n + self.k];
        pot[0] = 0.0;
        let mut queue = VecDeque::from([0]);
        while let Some(node) = queue.pop_front() {
            for &next in &adj[node] {
                if pot[next].is_nan() {
                    pot[next] = if node < self.n {
                        c.get(node, next - self.n) - pot[node]
                    } else {
                        c.get(next, node - self.n) - pot[node]
                    };
                    queue.push_back(next);
                }
            }
        }
        let v = pot.split_off(self.n);
        (pot, v)
    }

    fn pivot(&mut self, ei: usize, ej: usize) {
        let (n, k) = (self.n, self.k);
        // Tree path from column node ej to row node ei.
        let adj = self.adjacency();
        let start = n + ej;
        let mut parent = vec![usize::MAX; n + k];
        parent[start] = start;
        let mut queue = VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            if node == ei {
                break;
            }
            for &next in &adj[node] {
                if parent[next] == usize::MAX {
                    parent[next] = node;
                    queue.push_back(next);
                }
            }
        }
        let mut path = Vec::new();
        let mut node = ei;
        while node != start {
            path.push(node);
            node = parent[node];
        }
        path.push(start);
        path.reverse();
        // Cells along the path alternate -, +, -, ... starting at column ej.
        let cell = |a: usize, b: usize| {
            if a < n {
                a * k + (b - n)
            } else {
                b * k + (a - n)
            }
        };
        let cycle: Vec<(usize, bool)> = path
            .windows(2)
            .enumerate()
            .map(|(step, w)| (cell(w[0], w[1]), step % 2 == 1))
            .collect();
        let theta = cycle
            .iter()
            .filter(|(_, plus)| !plus)
            .map(|&(idx, _)| self.flow.data()[idx])
            .fold(f64::INFINITY, f64::min)
            .max(0.0);
        let leaving = cycle
            .iter()
            .filter(|(_, plus)| !plus)
            .map(|&(idx, _)| idx)
            .filter(|&idx| self.flow.data()[idx] <= theta)
            .min()
            .expect("cycle has a decreasing cell");
        let flow = self.flow.data_mut();
        for &(idx, plus) in &cycle {
            if plus {
                flow[idx] += theta;
            } else {
                flow[idx] = (flow[idx] - theta).max(0.0);
            }
        }
        flow[ei * k + ej] = theta;
        flow[leaving] = 0.0;
        self.basic[leaving] = false;
        self.basic[ei * k + ej] = true;
    }
}
