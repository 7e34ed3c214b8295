//! Minimum-cost assignment and the cost matrices that clear the trailing frame.

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::graph::{ACGraph, StateId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AssignmentError {
    #[error("row {0} has no feasible column")]
    Infeasible(usize),
    #[error("matrix has {rows} rows but only {cols} columns")]
    TooFewColumns { rows: usize, cols: usize },
    #[error("row {0} has the wrong length")]
    Ragged(usize),
    #[error("costs must be non-negative or +inf, found {0}")]
    BadCost(f64),
}

/// Row-to-column matching covering every row.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub cols: Vec<usize>,
    pub total: f64,
}

/// Optimal assignment of every row to a distinct column, `rows <= cols`.
///
/// `f64::INFINITY` marks a forbidden pair. Among optimal matchings the
/// lexicographically smallest row-to-column mapping is returned.
pub fn hungarian(cost: &[Vec<f64>]) -> Result<Assignment, AssignmentError> {
    let n = cost.len();
    if n == 0 {
        return Ok(Assignment { cols: Vec::new(), total: 0.0 });
    }
    let m = cost[0].len();
    for (i, row) in cost.iter().enumerate() {
        if row.len() != m {
            return Err(AssignmentError::Ragged(i));
        }
        if let Some(&bad) = row.iter().find(|v| v.is_nan() || **v < 0.0 || **v == f64::NEG_INFINITY) {
            return Err(AssignmentError::BadCost(bad));
        }
        if row.iter().all(|v| v.is_infinite()) {
            return Err(AssignmentError::Infeasible(i));
        }
    }
    if n > m {
        return Err(AssignmentError::TooFewColumns { rows: n, cols: m });
    }

    let rows: Vec<usize> = (0..n).collect();
    let mut used = vec![false; m];
    let (mut current, opt) = solve(cost, &rows, &used).ok_or(AssignmentError::Infeasible(0))?;
    let eps = 1e-9 * (1.0 + opt.abs());
    let mut fixed = Vec::with_capacity(n);
    let mut fixed_cost = 0.0;
    for i in 0..n {
        let rest = &rows[i + 1..];
        let target = current[0];
        let mut chosen = None;
        for j in 0..target {
            if used[j] || cost[i][j].is_infinite() {
                continue;
            }
            used[j] = true;
            if let Some((sub, sub_cost)) = solve(cost, rest, &used) {
                if fixed_cost + cost[i][j] + sub_cost <= opt + eps {
                    chosen = Some((j, sub));
                    break;
                }
            }
            used[j] = false;
        }
        let (j, sub) = match chosen {
            Some(c) => c,
            None => {
                used[target] = true;
                (target, current[1..].to_vec())
            }
        };
        fixed.push(j);
        fixed_cost += cost[i][j];
        current = sub;
    }
    let total = fixed.iter().enumerate().map(|(i, &j)| cost[i][j]).sum();
    Ok(Assignment { cols: fixed, total })
}

/// Shortest-augmenting-path solve of `rows` against the unused columns.
/// Returns the column of each row, in `rows` order, and the total cost.
fn solve(cost: &[Vec<f64>], rows: &[usize], used: &[bool]) -> Option<(Vec<usize>, f64)> {
    let cols: Vec<usize> = (0..used.len()).filter(|&j| !used[j]).collect();
    let (n, m) = (rows.len(), cols.len());
    if n == 0 {
        return Some((Vec::new(), 0.0));
    }
    if n > m {
        return None;
    }
    let finite_max = rows
        .iter()
        .flat_map(|&i| cols.iter().map(move |&j| cost[i][j]))
        .filter(|v| v.is_finite())
        .fold(0.0f64, f64::max);
    // Stand-in for forbidden pairs: dearer than any matching of finite cells.
    let big = (finite_max + 1.0) * (n as f64 + 1.0);
    let c = |i: usize, j: usize| {
        let v = cost[rows[i - 1]][cols[j - 1]];
        if v.is_finite() { v } else { big }
    };

    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut done = vec![false; m + 1];
        loop {
            done[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if done[j] {
                    continue;
                }
                let cur = c(i0, j) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if done[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut out = vec![0usize; n];
    for j in 1..=m {
        if p[j] != 0 {
            out[p[j] - 1] = cols[j - 1];
        }
    }
    let mut total = 0.0;
    for (k, &i) in rows.iter().enumerate() {
        let v = cost[i][out[k]];
        if v.is_infinite() {
            return None;
        }
        total += v;
    }
    Some((out, total))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Parent(StateId),
    /// Track birth for the given row.
    Birth(usize),
}

/// Assignment instance for the ambiguous states of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub rows: Vec<StateId>,
    pub cols: Vec<Column>,
    pub cost: Vec<Vec<f64>>,
}

impl CostMatrix {
    /// Rows are the unmerged ambiguous states of `frame` by id; columns are
    /// the union of their parents by id followed by one birth column per row.
    /// Parents scoring at most `a_thre` are treated as forbidden.
    pub fn build(graph: &ACGraph, frame: u32, a_thre: f64) -> Self {
        let rows: Vec<StateId> = graph
            .frame_states(frame)
            .iter()
            .copied()
            .filter(|&id| graph.node(id).is_some_and(|n| !n.is_merged() && !n.is_clear()))
            .collect();
        let mut parents: Vec<StateId> = rows
            .iter()
            .flat_map(|&r| graph.node(r).into_iter().flat_map(|n| n.parents.iter().map(|&(p, _)| p)))
            .collect();
        parents.sort_unstable();
        parents.dedup();
        let mut cols: Vec<Column> = parents.iter().map(|&p| Column::Parent(p)).collect();
        cols.extend((0..rows.len()).map(Column::Birth));
        let cost = rows
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let node = graph.node(r).expect("row ids exist");
                cols.iter()
                    .map(|col| match *col {
                        Column::Parent(p) => match node.score_from(p) {
                            Some(s) if s > a_thre => 1.0 - s,
                            _ => f64::INFINITY,
                        },
                        Column::Birth(b) if b == i => 1.0 - a_thre,
                        Column::Birth(_) => f64::INFINITY,
                    })
                    .collect()
            })
            .collect();
        Self { rows, cols, cost }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn solve(&self) -> Result<Assignment, AssignmentError> {
        hungarian(&self.cost)
    }

    /// Per-row decision: the chosen parent with its score, or `None` for a birth.
    pub fn decisions(&self, a: &Assignment) -> Vec<(StateId, Option<(StateId, f64)>)> {
        self.rows
            .iter()
            .zip(&a.cols)
            .enumerate()
            .map(|(i, (&row, &j))| match self.cols[j] {
                Column::Parent(p) => (row, Some((p, 1.0 - self.cost[i][j]))),
                Column::Birth(_) => (row, None),
            })
            .collect()
    }
}
