//! Vertices of the transportation polytope `Π(a, b)`.
//!
//! A vertex is determined by its support, which is a forest of the
//! bipartite row/column graph, so vertices are deduplicated by support.

use std::collections::{BTreeMap, HashSet, VecDeque};

use crate::error::{Error, Result};

use super::lp::Basis;
use super::{check_marginals, TransportPlan};

pub const DEFAULT_VERTEX_BUDGET: usize = 2_000_000;

/// Entries at or below this are treated as zero when comparing supports.
const SUPPORT_TOL: f64 = 1e-12;

/// All vertices of `Π(row, col)`, ordered lexicographically by support.
///
/// Polytopes with two rows or two columns use a direct enumeration; the
/// general case walks the graph of feasible bases with simplex pivots.
pub fn enumerate_vertices(row: &[f64], col: &[f64], budget: Option<usize>) -> Result<Vec<TransportPlan>> {
    check_marginals(row, col)?;
    let budget = budget.unwrap_or(DEFAULT_VERTEX_BUDGET);
    if row.len() == 1 || col.len() == 1 {
        let entries = if row.len() == 1 { col.to_vec() } else { row.to_vec() };
        return Ok(vec![TransportPlan::from_parts(entries, row.to_vec(), col.to_vec())]);
    }
    if row.len() == 2 {
        return two_row_vertices(row, col, budget);
    }
    if col.len() == 2 {
        let t = two_row_vertices(col, row, budget)?;
        let plans: Vec<TransportPlan> = t.iter().map(TransportPlan::transposed).collect();
        return Ok(sorted_by_support(plans));
    }
    enumerate_vertices_by_pivoting(row, col, budget)
}

fn support_key(entries: &[f64]) -> Vec<usize> {
    entries
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > SUPPORT_TOL)
        .map(|(k, _)| k)
        .collect()
}

fn sorted_by_support(plans: Vec<TransportPlan>) -> Vec<TransportPlan> {
    let mut map = BTreeMap::new();
    for p in plans {
        map.entry(support_key(p.entries())).or_insert(p);
    }
    map.into_values().collect()
}

/// Two-row polytope: the first row `x` satisfies `0 ≤ x_j ≤ b_j` and
/// `Σ x_j = a_0`, whose vertices have at most one `x_j` strictly inside
/// its bounds.
fn two_row_vertices(row: &[f64], col: &[f64], budget: usize) -> Result<Vec<TransportPlan>> {
    let n = col.len();
    let target = row[0];
    let total: f64 = col.iter().sum();
    let tol = SUPPORT_TOL * total.max(1.0) + (row.iter().sum::<f64>() - total).abs();
    let mut found: BTreeMap<Vec<usize>, TransportPlan> = BTreeMap::new();

    let emit = |x: &[f64], found: &mut BTreeMap<Vec<usize>, TransportPlan>| -> Result<()> {
        let mut entries = Vec::with_capacity(2 * n);
        entries.extend_from_slice(x);
        entries.extend(x.iter().zip(col).map(|(xi, c)| (c - xi).max(0.0)));
        let key = support_key(&entries);
        if !found.contains_key(&key) {
            if found.len() >= budget {
                return Err(Error::VertexBudgetExceeded { budget });
            }
            found.insert(key, TransportPlan::from_parts(entries, row.to_vec(), col.to_vec()));
        }
        Ok(())
    };

    struct Search<'a, F> {
        col: &'a [f64],
        target: f64,
        tol: f64,
        split: Option<usize>,
        /// remaining capacity of the free indices at or after `j`
        suffix: Vec<f64>,
        emit: F,
    }

    impl<F: FnMut(&[f64]) -> Result<()>> Search<'_, F> {
        fn run(&mut self, j: usize, s: f64, x: &mut Vec<f64>) -> Result<()> {
            let slack = self.split.map_or(0.0, |f| self.col[f]);
            if s > self.target + self.tol || s + self.suffix[j] + slack < self.target - self.tol {
                return Ok(());
            }
            if j == self.col.len() {
                let r = self.target - s;
                match self.split {
                    None if r.abs() <= self.tol => (self.emit)(x)?,
                    Some(f) if r > self.tol && r < self.col[f] - self.tol => {
                        x[f] = r;
                        (self.emit)(x)?;
                        x[f] = 0.0;
                    }
                    _ => {}
                }
                return Ok(());
            }
            if Some(j) == self.split {
                return self.run(j + 1, s, x);
            }
            self.run(j + 1, s, x)?;
            x[j] = self.col[j];
            self.run(j + 1, s + self.col[j], x)?;
            x[j] = 0.0;
            Ok(())
        }
    }

    for split in std::iter::once(None).chain((0..n).map(Some)) {
        let mut suffix = vec![0.0; n + 1];
        for j in (0..n).rev() {
            suffix[j] = suffix[j + 1] + if Some(j) == split { 0.0 } else { col[j] };
        }
        let mut search = Search {
            col,
            target,
            tol,
            split,
            suffix,
            emit: |x: &[f64]| emit(x, &mut found),
        };
        search.run(0, 0.0, &mut vec![0.0; n])?;
    }
    Ok(found.into_values().collect())
}

/// Breadth-first walk over feasible bases connected by single pivots,
/// following every tied choice of leaving cell.
pub fn enumerate_vertices_by_pivoting(row: &[f64], col: &[f64], budget: usize) -> Result<Vec<TransportPlan>> {
    check_marginals(row, col)?;
    let (m, n) = (row.len(), col.len());
    let start = Basis::north_west(row, col);
    let total: f64 = row.iter().sum();
    let tol = SUPPORT_TOL * total.max(1.0);
    let mut seen_bases: HashSet<Vec<usize>> = HashSet::new();
    let mut vertices: BTreeMap<Vec<usize>, TransportPlan> = BTreeMap::new();
    let mut queue = VecDeque::new();
    seen_bases.insert(start.cells.clone());
    queue.push_back(start);
    let basis_budget = budget.saturating_mul(16);

    while let Some(basis) = queue.pop_front() {
        let mut x = basis.solve(row, col);
        x.iter_mut().for_each(|v| {
            if v.abs() <= tol {
                *v = 0.0
            }
        });
        let key = support_key(&x);
        if !vertices.contains_key(&key) {
            if vertices.len() >= budget {
                return Err(Error::VertexBudgetExceeded { budget });
            }
            vertices.insert(key, TransportPlan::from_parts(x.clone(), row.to_vec(), col.to_vec()));
        }
        let mut is_basic = vec![false; m * n];
        basis.cells.iter().for_each(|&c| is_basic[c] = true);
        for e in (0..m * n).filter(|&c| !is_basic[c]) {
            let cycle = basis.cycle(e / n, e % n);
            let losing: Vec<usize> = cycle.iter().skip(1).step_by(2).copied().collect();
            let theta = losing.iter().map(|&c| x[c]).fold(f64::INFINITY, f64::min);
            for &l in losing.iter().filter(|&&c| x[c] <= theta + tol) {
                let next = basis.replace(l, e);
                if seen_bases.insert(next.cells.clone()) {
                    if seen_bases.len() > basis_budget {
                        return Err(Error::VertexBudgetExceeded { budget });
                    }
                    queue.push_back(next);
                }
            }
        }
    }
    Ok(vertices.into_values().collect())
}
