//! Maximum-weight bipartite matching with a deterministic tie-break.

/// Weights within this distance of the optimum count as optimal.
pub const TIE_EPS: f64 = 1e-9;

/// Hungarian algorithm on a square cost matrix (minimisation). Returns the
/// column assigned to each row.
fn hungarian_min(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    if n == 0 {
        return Vec::new();
    }
    let inf = f64::INFINITY;
    // 1-based potentials and column owners, as in the classic formulation.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut owner = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
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
        if owner[j] > 0 {
            row_to_col[owner[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Best total weight over `rows` x `cols` of `w` (weights are >= 0).
fn best_total(w: &[Vec<f64>], rows: &[usize], cols: &[usize]) -> f64 {
    let n = rows.len().max(cols.len());
    if rows.is_empty() || cols.is_empty() {
        return 0.0;
    }
    let max_w = rows.iter().flat_map(|&r| cols.iter().map(move |&c| w[r][c])).fold(0.0, f64::max);
    let mut cost = vec![vec![max_w; n]; n];
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            cost[i][j] = max_w - w[r][c];
        }
    }
    hungarian_min(&cost)
        .iter()
        .enumerate()
        .filter(|&(i, &j)| i < rows.len() && j < cols.len())
        .map(|(i, &j)| w[rows[i]][cols[j]])
        .sum()
}

/// Assigns each row (gold) at most one column (prediction), maximising the
/// total weight. Only positive-weight pairs are matched. Among optimal
/// matchings the lexicographically smallest assignment vector wins, reading
/// rows in order and ranking "unmatched" after every column.
pub fn max_weight_matching(w: &[Vec<f64>]) -> Vec<Option<usize>> {
    let n_rows = w.len();
    let n_cols = w.first().map_or(0, Vec::len);
    let all_rows: Vec<usize> = (0..n_rows).collect();
    let mut free_cols: Vec<usize> = (0..n_cols).collect();
    let target = best_total(w, &all_rows, &free_cols);
    let mut fixed = 0.0;
    let mut out = vec![None; n_rows];
    for r in 0..n_rows {
        let rest: Vec<usize> = (r + 1..n_rows).collect();
        let mut chosen = None;
        for (k, &c) in free_cols.iter().enumerate() {
            if w[r][c] <= 0.0 {
                continue;
            }
            let others: Vec<usize> = free_cols.iter().copied().filter(|&x| x != c).collect();
            if fixed + w[r][c] + best_total(w, &rest, &others) >= target - TIE_EPS {
                chosen = Some(k);
                break;
            }
        }
        if let Some(k) = chosen {
            let c = free_cols.remove(k);
            fixed += w[r][c];
            out[r] = Some(c);
        }
    }
    out
}

/// Exhaustive reference: enumerates every injective partial mapping.
pub fn brute_force_matching(w: &[Vec<f64>]) -> Vec<Option<usize>> {
    fn walk(
        w: &[Vec<f64>],
        r: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<Option<usize>>,
        all: &mut Vec<(f64, Vec<Option<usize>>)>,
    ) {
        if r == w.len() {
            let total = cur.iter().enumerate().filter_map(|(i, c)| c.map(|c| w[i][c])).sum();
            all.push((total, cur.clone()));
            return;
        }
        for c in 0..used.len() {
            if !used[c] && w[r][c] > 0.0 {
                used[c] = true;
                cur.push(Some(c));
                walk(w, r + 1, used, cur, all);
                cur.pop();
                used[c] = false;
            }
        }
        cur.push(None);
        walk(w, r + 1, used, cur, all);
        cur.pop();
    }
    let n_cols = w.first().map_or(0, Vec::len);
    let mut all = Vec::new();
    walk(w, 0, &mut vec![false; n_cols], &mut Vec::new(), &mut all);
    let best = all.iter().map(|(t, _)| *t).fold(0.0, f64::max);
    let key = |m: &Vec<Option<usize>>| m.iter().map(|c| c.unwrap_or(usize::MAX)).collect::<Vec<_>>();
    all.into_iter().filter(|(t, _)| *t >= best - TIE_EPS).map(|(_, m)| m).min_by_key(key).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_and_rectangular() {
        assert!(max_weight_matching(&[]).is_empty());
        assert_eq!(max_weight_matching(&[vec![], vec![]]), vec![None, None]);
        let w = vec![vec![0.2, 0.9, 0.1]];
        assert_eq!(max_weight_matching(&w), vec![Some(1)]);
        let tall = vec![vec![0.5], vec![0.7], vec![0.1]];
        assert_eq!(max_weight_matching(&tall), vec![None, Some(0), None]);
    }

    #[test]
    fn prefers_global_optimum_over_greedy() {
        let w = vec![vec![0.9, 0.8], vec![0.8, 0.0]];
        assert_eq!(max_weight_matching(&w), vec![Some(1), Some(0)]);
    }

    #[test]
    fn ties_go_to_smaller_indices() {
        let w = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert_eq!(max_weight_matching(&w), vec![Some(0), Some(1)]);
        let w = vec![vec![0.0, 0.0], vec![0.0, 0.5]];
        assert_eq!(max_weight_matching(&w), vec![None, Some(1)]);
    }

    proptest! {
        #[test]
        fn agrees_with_enumeration(
            rows in 0usize..6,
            cols in 0usize..6,
            seed in prop::collection::vec(0u8..5, 36),
        ) {
            // Few distinct values, so ties are common.
            let w: Vec<Vec<f64>> = (0..rows)
                .map(|r| (0..cols).map(|c| f64::from(seed[r * 6 + c]) / 4.0).collect())
                .collect();
            prop_assert_eq!(max_weight_matching(&w), brute_force_matching(&w));
        }
    }
}
