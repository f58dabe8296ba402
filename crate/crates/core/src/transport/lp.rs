//! Transportation simplex on spanning-tree bases.

use crate::error::{Error, Result};

use super::{check_marginals, TransportPlan};

/// Dense row-major cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::invalid(format!(
                "cost matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        Ok(CostMatrix { rows, cols, values })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                values.push(f(i, j));
            }
        }
        CostMatrix { rows, cols, values }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A basis of the transportation problem: `m + n - 1` cells forming a
/// spanning tree of the bipartite row/column graph. Row `i` is node `i`,
/// column `j` is node `m + j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) struct Basis {
    pub m: usize,
    pub n: usize,
    /// Sorted cell indices `i * n + j`.
    pub cells: Vec<usize>,
}

impl Basis {
    pub fn new(m: usize, n: usize, mut cells: Vec<usize>) -> Self {
        cells.sort_unstable();
        Basis { m, n, cells }
    }

    /// North-west corner rule; always yields a spanning tree.
    pub fn north_west(row: &[f64], col: &[f64]) -> Self {
        let (m, n) = (row.len(), col.len());
        let mut rr = row.to_vec();
        let mut rc = col.to_vec();
        let (mut i, mut j) = (0, 0);
        let mut cells = Vec::with_capacity(m + n - 1);
        loop {
            cells.push(i * n + j);
            let q = rr[i].min(rc[j]);
            rr[i] -= q;
            rc[j] -= q;
            if i == m - 1 && j == n - 1 {
                break;
            }
            if i == m - 1 {
                j += 1;
            } else if j == n - 1 || rr[i] <= rc[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
        Basis::new(m, n, cells)
    }

    fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.m + self.n];
        for &c in &self.cells {
            let (i, j) = (c / self.n, c % self.n);
            adj[i].push((self.m + j, c));
            adj[self.m + j].push((i, c));
        }
        adj
    }

    /// Basic solution for the given marginals, by peeling leaves of the tree.
    pub fn solve(&self, row: &[f64], col: &[f64]) -> Vec<f64> {
        let (m, n) = (self.m, self.n);
        let adj = self.adjacency();
        let mut degree: Vec<usize> = adj.iter().map(|a| a.len()).collect();
        let mut residual: Vec<f64> = row.iter().chain(col).copied().collect();
        let mut used = vec![false; m * n];
        let mut x = vec![0.0; m * n];
        let mut stack: Vec<usize> = (0..m + n).filter(|&v| degree[v] == 1).collect();
        let mut remaining = self.cells.len();
        while remaining > 0 {
            let Some(v) = stack.pop() else { break };
            if degree[v] != 1 {
                continue;
            }
            let Some(&(u, c)) = adj[v].iter().find(|(_, c)| !used[*c]) else { continue };
            used[c] = true;
            remaining -= 1;
            let val = residual[v];
            x[c] = val;
            residual[v] = 0.0;
            residual[u] -= val;
            degree[v] -= 1;
            degree[u] -= 1;
            if degree[u] == 1 {
                stack.push(u);
            }
        }
        x
    }

    /// Dual potentials `u_i + v_j = c_ij` on basic cells, with `u_0 = 0`.
    pub fn potentials(&self, cost: &CostMatrix) -> (Vec<f64>, Vec<f64>) {
        let adj = self.adjacency();
        let mut pot = vec![f64::NAN; self.m + self.n];
        pot[0] = 0.0;
        let mut stack = vec![0];
        while let Some(v) = stack.pop() {
            for &(u, c) in &adj[v] {
                if pot[u].is_nan() {
                    pot[u] = cost.values[c] - pot[v];
                    stack.push(u);
                }
            }
        }
        let v = pot.split_off(self.m);
        (pot, v)
    }

    /// Cells of the cycle closed by entering `(i, j)`, starting with the
    /// entering cell; even positions gain, odd positions lose.
    pub fn cycle(&self, i: usize, j: usize) -> Vec<usize> {
        let adj = self.adjacency();
        let start = self.m + j;
        let target = i;
        let mut parent: Vec<Option<(usize, usize)>> = vec![None; self.m + self.n];
        let mut seen = vec![false; self.m + self.n];
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            if v == target {
                break;
            }
            for &(u, c) in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    parent[u] = Some((v, c));
                    stack.push(u);
                }
            }
        }
        // walk back from row i to column j
        let mut path = Vec::new();
        let mut v = target;
        while v != start {
            let (p, c) = parent[v].expect("basis is a spanning tree");
            path.push(c);
            v = p;
        }
        // path runs row i → ... → column j; the cycle leaves (i, j) through column j
        path.reverse();
        let mut cycle = Vec::with_capacity(path.len() + 1);
        cycle.push(i * self.n + j);
        cycle.extend(path);
        cycle
    }

    pub fn replace(&self, leaving: usize, entering: usize) -> Basis {
        let mut cells: Vec<usize> = self.cells.iter().copied().filter(|&c| c != leaving).collect();
        cells.push(entering);
        Basis::new(self.m, self.n, cells)
    }
}

/// Solves `min Σ c_ij w_ij` over couplings of `row` and `col`.
///
/// Transportation simplex from the north-west corner basis; the entering
/// cell is the lowest-index cell with negative reduced cost and the
/// leaving cell the lowest-index blocking cell, so the result is
/// deterministic and the method cannot cycle.
pub fn solve_transportation_lp(cost: &CostMatrix, row: &[f64], col: &[f64]) -> Result<(TransportPlan, f64)> {
    check_marginals(row, col)?;
    if cost.rows() != row.len() || cost.cols() != col.len() {
        return Err(Error::invalid("cost matrix shape does not match the marginals"));
    }
    let (m, n) = (row.len(), col.len());
    let scale = cost.values().iter().fold(0.0f64, |a, c| a.max(c.abs())).max(1e-300);
    let rc_tol = 1e-12 * scale;

    let mut basis = Basis::north_west(row, col);
    let mut x = basis.solve(row, col);
    let max_iter = 50 * (m + n) * (m + n) + 1000;
    let mut iterations = 0;
    loop {
        let (u, v) = basis.potentials(cost);
        let mut is_basic = vec![false; m * n];
        basis.cells.iter().for_each(|&c| is_basic[c] = true);
        let entering = (0..m * n).find(|&c| !is_basic[c] && cost.values[c] - u[c / n] - v[c % n] < -rc_tol);
        let Some(e) = entering else { break };
        iterations += 1;
        if iterations > max_iter {
            return Err(Error::NoConvergence { what: "transportation simplex", iterations });
        }
        let cycle = basis.cycle(e / n, e % n);
        let theta = cycle.iter().skip(1).step_by(2).map(|&c| x[c]).fold(f64::INFINITY, f64::min);
        let leaving = cycle
            .iter()
            .skip(1)
            .step_by(2)
            .copied()
            .filter(|&c| x[c] <= theta)
            .min()
            .ok_or_else(|| Error::Internal("empty pivot cycle".into()))?;
        for (k, &c) in cycle.iter().enumerate() {
            if k % 2 == 0 {
                x[c] += theta;
            } else {
                x[c] -= theta;
            }
        }
        basis = basis.replace(leaving, e);
        x[leaving] = 0.0;
    }
    // recompute from the final tree to drop accumulated pivot round-off
    let mut x = basis.solve(row, col);
    if x.iter().any(|v| *v < -1e-10) {
        return Err(Error::Internal("transportation simplex ended infeasible".into()));
    }
    x.iter_mut().for_each(|v| *v = v.max(0.0));
    let plan = TransportPlan::from_parts(x, row.to_vec(), col.to_vec());
    let obj = plan.cost(cost);
    Ok((plan, obj))
}
