//! Maximum-weight bipartite assignment between proposals and texts.

use alloc::vec;
use alloc::vec::Vec;

use super::ScoreMatrix;

/// Shortest augmenting path Hungarian method on a `rows <= cols` cost
/// matrix (minimization). Returns the column assigned to each row.
fn solve_min(cost: &[Vec<f64>], cols: usize) -> Vec<usize> {
    let rows = cost.len();
    debug_assert!(rows <= cols);
    let inf = f64::INFINITY;
    // 1-based potentials and matching; index 0 is the virtual root column.
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut row_of = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        row_of[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![inf; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of = vec![usize::MAX; rows];
    for j in 1..=cols {
        if row_of[j] != 0 {
            col_of[row_of[j] - 1] = j - 1;
        }
    }
    col_of
}

/// Best total of `weights` restricted to `rows x cols`, with the matching.
fn best(weights: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> (f64, Vec<usize>) {
    if rows.is_empty() {
        return (0.0, Vec::new());
    }
    let cost: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| cols.iter().map(|&c| -weights[r][c]).collect())
        .collect();
    let local = solve_min(&cost, cols.len());
    let picked: Vec<usize> = local.iter().map(|&k| cols[k]).collect();
    let total = rows.iter().zip(&picked).map(|(&r, &c)| weights[r][c]).sum();
    (total, picked)
}

/// Sum of `s` over the given `(row, col)` pairs.
pub fn assignment_value(s: &ScoreMatrix, pairs: &[(usize, usize)]) -> f64 {
    pairs.iter().map(|&(r, c)| s.get(r, c)).sum()
}

/// Assignment of proposals (rows) to texts (columns) maximizing the total
/// score, with exactly `min(N, M)` pairs, sorted by row.
///
/// Among optimal assignments the result is the lexicographically smallest
/// sequence of partners for the smaller side taken in index order (rows when
/// `N <= M`, columns otherwise). Candidate partners are tested in ascending
/// order by re-solving the remaining subproblem, so ties cost extra solves.
pub fn hungarian_assign(s: &ScoreMatrix) -> Vec<(usize, usize)> {
    let (n, m) = s.shape();
    if n == 0 || m == 0 {
        return Vec::new();
    }
    let transposed = n > m;
    let weights: Vec<Vec<f64>> = if transposed { s.transpose().to_rows() } else { s.to_rows() };
    let (k, l) = if transposed { (m, n) } else { (n, m) };

    let all_cols: Vec<usize> = (0..l).collect();
    let all_rows: Vec<usize> = (0..k).collect();
    let (optimum, mut current) = best(&weights, &all_rows, &all_cols);
    let scale = weights.iter().flatten().fold(1.0f64, |a, &w| a.max(w.abs()));
    let tol = 1e-9 * scale * k as f64;

    let mut fixed_value = 0.0;
    let mut free_cols: Vec<usize> = all_cols;
    let mut chosen = Vec::with_capacity(k);
    for r in 0..k {
        let rest_rows: Vec<usize> = (r + 1..k).collect();
        let incumbent = current[0];
        let mut pick = incumbent;
        let mut pick_tail = current[1..].to_vec();
        for &c in free_cols.iter().filter(|&&c| c < incumbent) {
            let w = weights[r][c];
            // Cheap bound: remaining rows at their unconstrained best.
            let bound: f64 = rest_rows
                .iter()
                .map(|&rr| {
                    free_cols
                        .iter()
                        .filter(|&&cc| cc != c)
                        .map(|&cc| weights[rr][cc])
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .sum();
            if fixed_value + w + bound < optimum - tol {
                continue;
            }
            let cols: Vec<usize> = free_cols.iter().copied().filter(|&cc| cc != c).collect();
            let (rest, tail) = best(&weights, &rest_rows, &cols);
            if fixed_value + w + rest >= optimum - tol {
                pick = c;
                pick_tail = tail;
                break;
            }
        }
        fixed_value += weights[r][pick];
        chosen.push(pick);
        free_cols.retain(|&c| c != pick);
        current = pick_tail;
    }

    let mut pairs: Vec<(usize, usize)> = chosen
        .into_iter()
        .enumerate()
        .map(|(r, c)| if transposed { (c, r) } else { (r, c) })
        .collect();
    pairs.sort_unstable();
    pairs
}
