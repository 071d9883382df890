//! Square linear assignment (Hungarian method with potentials, O(m³)).

use ndarray::{s, ArrayView2};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// `perm[row]` is the column assigned to `row`.
    pub perm: Vec<usize>,
    pub total: f64,
}

/// Minimum-cost perfect matching of a square cost matrix.
///
/// Among optimal assignments the lexicographically smallest permutation is
/// returned, so equal costs resolve to the identity.
pub fn hungarian(cost: ArrayView2<'_, f64>) -> Result<Assignment> {
    let (m, m2) = cost.dim();
    if m != m2 {
        return Err(Error::validation(
            "cost",
            format!("assignment needs a square matrix, got {m}×{m2}"),
        ));
    }
    if cost.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("cost", "non-finite entry"));
    }
    if m == 0 {
        return Ok(Assignment {
            perm: Vec::new(),
            total: 0.0,
        });
    }

    let (_, best) = solve(cost);
    let scale: f64 = cost.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tol = 1e-12 * (1.0 + scale) * m as f64;

    // Fix rows one at a time to the smallest column that keeps optimality.
    let mut perm = Vec::with_capacity(m);
    let mut free_cols: Vec<usize> = (0..m).collect();
    let mut spent = 0.0;
    for row in 0..m {
        let rest_rows: Vec<usize> = (row + 1..m).collect();
        let mut chosen = None;
        for (pos, &col) in free_cols.iter().enumerate() {
            let rest_cols: Vec<usize> = free_cols
                .iter()
                .copied()
                .filter(|&c| c != col)
                .collect();
            let sub = cost
                .select(ndarray::Axis(0), &rest_rows)
                .select(ndarray::Axis(1), &rest_cols);
            let (_, rest) = solve(sub.view());
            if spent + cost[[row, col]] + rest <= best + tol {
                chosen = Some(pos);
                break;
            }
        }
        // The optimum always admits some column; fall back to the solver's
        // own choice if rounding rejected every candidate.
        let pos = chosen.unwrap_or_else(|| {
            let sub = cost.slice(s![row.., ..]).select(ndarray::Axis(1), &free_cols);
            let (p, _) = solve(sub.view());
            p[0]
        });
        let col = free_cols.remove(pos);
        spent += cost[[row, col]];
        perm.push(col);
    }

    let total = perm.iter().enumerate().map(|(r, &c)| cost[[r, c]]).sum();
    Ok(Assignment { perm, total })
}

/// Potentials-based Hungarian solver; returns (row → column, optimal cost).
fn solve(a: ArrayView2<'_, f64>) -> (Vec<usize>, f64) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), 0.0);
    }
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = a[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
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
    let mut perm = vec![0; n];
    for j in 1..=n {
        perm[p[j] - 1] = j - 1;
    }
    let total = perm.iter().enumerate().map(|(r, &c)| a[[r, c]]).sum();
    (perm, total)
}
