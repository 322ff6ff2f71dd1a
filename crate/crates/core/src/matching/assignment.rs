//! Rectangular min-cost assignment by shortest augmenting paths.

/// Solves `min Σ cost[r][c]` over assignments that match every row when
/// `rows <= cols` (or every column otherwise), i.e. maximum cardinality
/// first, minimum cost second.
///
/// Returns `row_to_col[r]`, `None` for rows left unassigned.
pub fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<Option<usize>> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return vec![None; rows];
    }
    if rows <= cols {
        solve_wide(rows, cols, |r, c| cost[r][c])
    } else {
        let col_to_row = solve_wide(cols, rows, |c, r| cost[r][c]);
        let mut row_to_col = vec![None; rows];
        for (c, r) in col_to_row.into_iter().enumerate() {
            if let Some(r) = r {
                row_to_col[r] = Some(c);
            }
        }
        row_to_col
    }
}

/// Jonker-Volgenant style potentials; requires `n <= m`. Every row ends
/// up assigned.
fn solve_wide(n: usize, m: usize, a: impl Fn(usize, usize) -> f64) -> Vec<Option<usize>> {
    // 1-based columns; column 0 is the virtual source of each augmentation
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    let mut minv = vec![0.0f64; m + 1];
    let mut used = vec![false; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = f64::INFINITY);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = a(i0 - 1, j - 1) - u[i0] - v[j];
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
    let mut row_to_col = vec![None; n];
    for j in 1..=m {
        if owner[j] != 0 {
            row_to_col[owner[j] - 1] = Some(j - 1);
        }
    }
    row_to_col
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total(cost: &[Vec<f64>], sol: &[Option<usize>]) -> f64 {
        sol.iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| cost[r][c]))
            .sum()
    }

    #[test]
    fn square_classic() {
        let cost = vec![
            vec![4.0, 1.0, 3.0],
            vec![2.0, 0.0, 5.0],
            vec![3.0, 2.0, 2.0],
        ];
        let sol = min_cost_assignment(&cost);
        assert_eq!(total(&cost, &sol), 5.0);
    }

    #[test]
    fn rectangular_both_ways() {
        let wide = vec![vec![10.0, 1.0, 7.0, 3.0], vec![2.0, 9.0, 1.0, 8.0]];
        let sol = min_cost_assignment(&wide);
        assert_eq!(sol, vec![Some(1), Some(2)]);
        let tall: Vec<Vec<f64>> = (0..4).map(|c| wide.iter().map(|r| r[c]).collect()).collect();
        let sol = min_cost_assignment(&tall);
        assert_eq!(sol, vec![None, Some(0), Some(1), None]);
    }

    #[test]
    fn empty_sides() {
        assert!(min_cost_assignment(&[]).is_empty());
        assert_eq!(min_cost_assignment(&[vec![], vec![]]), vec![None, None]);
    }
}
