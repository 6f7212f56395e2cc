//! Small exact solvers backing the unbiased predictor: a dense-tableau
//! simplex for zero-sum matrix games and a vertex enumerator for minimizing
//! a linear objective over a low-dimensional polytope inside the unit box.
//!
//! Both solvers face matrices with at most a few dozen rows and columns, so
//! they favor clarity and determinism over asymptotics. Pivoting follows
//! Bland's rule, which cannot cycle.

const PIVOT_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-9;

/// Mixed strategies and value of a finite zero-sum game. The row player
/// minimizes the expected entry, the column player maximizes it. Production
/// callers sample from `row_mix`; the value and column strategy certify the
/// solution in tests.
#[derive(Debug, Clone)]
pub(crate) struct ZeroSumSolution {
    #[allow(dead_code)]
    pub value: f64,
    pub row_mix: Vec<f64>,
    #[allow(dead_code)]
    pub col_mix: Vec<f64>,
}

/// Solves the game with cost matrix `cost` (row player pays cost[i][j]).
///
/// The game is shifted so all payoffs are positive and solved in the classic
/// packing form: max 1.y subject to B.y <= 1, y >= 0, whose optimal basis
/// yields both players' strategies. Panics only on empty or ragged input.
pub(crate) fn solve_zero_sum(cost: &[Vec<f64>]) -> ZeroSumSolution {
    let rows = cost.len();
    assert!(rows > 0, "game needs at least one row");
    let cols = cost[0].len();
    assert!(cols > 0, "game needs at least one column");
    assert!(cost.iter().all(|r| r.len() == cols), "ragged game matrix");

    let max_entry = cost
        .iter()
        .flatten()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let shift = max_entry + 1.0;
    // B[i][j] = shift - cost[i][j] >= 1, a payoff the row player maximizes.
    let b: Vec<Vec<f64>> = cost
        .iter()
        .map(|row| row.iter().map(|&v| shift - v).collect())
        .collect();

    // Tableau for: max sum(y) s.t. B.y <= 1, y >= 0. Columns are the y
    // variables, then one slack per constraint row, then the right-hand side.
    let width = cols + rows + 1;
    let mut tab: Vec<Vec<f64>> = Vec::with_capacity(rows + 1);
    for i in 0..rows {
        let mut row = vec![0.0; width];
        row[..cols].copy_from_slice(&b[i]);
        row[cols + i] = 1.0;
        row[width - 1] = 1.0;
        tab.push(row);
    }
    let mut obj = vec![0.0; width];
    for j in 0..cols {
        obj[j] = -1.0;
    }
    tab.push(obj);
    let mut basis: Vec<usize> = (cols..cols + rows).collect();

    loop {
        // Bland: entering variable is the lowest-index improving column.
        let entering = (0..cols + rows).find(|&j| tab[rows][j] < -PIVOT_TOL);
        let Some(enter) = entering else { break };

        // Ratio test, ties broken toward the lowest basic variable index.
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..rows {
            if tab[i][enter] > PIVOT_TOL {
                let ratio = tab[i][width - 1] / tab[i][enter];
                let better = ratio < best_ratio - PIVOT_TOL
                    || (ratio < best_ratio + PIVOT_TOL
                        && leave.is_some_and(|l| basis[i] < basis[l]));
                if better {
                    best_ratio = ratio;
                    leave = Some(i);
                }
            }
        }
        let leave = leave.expect("packing LP is bounded because B is positive");

        let pivot = tab[leave][enter];
        for v in tab[leave].iter_mut() {
            *v /= pivot;
        }
        for i in 0..=rows {
            if i != leave {
                let factor = tab[i][enter];
                if factor != 0.0 {
                    for j in 0..width {
                        tab[i][j] -= factor * tab[leave][j];
                    }
                }
            }
        }
        basis[leave] = enter;
    }

    // Objective value S = 1/(shifted game value); always positive here.
    let s = tab[rows][width - 1].max(PIVOT_TOL);
    let shifted_value = 1.0 / s;

    let mut col_mix = vec![0.0; cols];
    for i in 0..rows {
        if basis[i] < cols {
            col_mix[basis[i]] = tab[i][width - 1].max(0.0) * shifted_value;
        }
    }
    // Duals of the packing constraints sit under the slack columns of the
    // objective row and scale to the row player's strategy.
    let mut row_mix: Vec<f64> = (0..rows)
        .map(|i| tab[rows][cols + i].max(0.0) * shifted_value)
        .collect();
    normalize(&mut row_mix);
    normalize(&mut col_mix);

    ZeroSumSolution {
        value: shift - shifted_value,
        row_mix,
        col_mix,
    }
}

fn normalize(weights: &mut [f64]) {
    let total: f64 = weights.iter().sum();
    if total > 0.0 {
        for w in weights.iter_mut() {
            *w /= total;
        }
    } else {
        let uniform = 1.0 / weights.len() as f64;
        for w in weights.iter_mut() {
            *w = uniform;
        }
    }
}

/// Minimizes `objective . v` over { v in [0,1]^d : a.v <= b for each
/// half-space } by enumerating basic solutions of d-subsets of the
/// constraints (box faces included). Returns None when the region is empty.
/// Ties in the objective resolve to the lexicographically smallest vertex,
/// keeping the result deterministic.
pub(crate) fn minimize_over_box_polytope(
    objective: &[f64],
    halfspaces: &[(Vec<f64>, f64)],
) -> Option<Vec<f64>> {
    let d = objective.len();
    assert!(d >= 1, "empty objective");
    assert!(
        halfspaces.iter().all(|(a, _)| a.len() == d),
        "half-space width mismatch"
    );

    // Constraint list a.v <= b: the callers' half-spaces, then v_j <= 1 and
    // -v_j <= 0 for each coordinate.
    let mut rows: Vec<(Vec<f64>, f64)> = halfspaces.to_vec();
    for j in 0..d {
        let mut hi = vec![0.0; d];
        hi[j] = 1.0;
        rows.push((hi, 1.0));
        let mut lo = vec![0.0; d];
        lo[j] = -1.0;
        rows.push((lo, 0.0));
    }

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut combo: Vec<usize> = (0..d).collect();
    loop {
        if let Some(v) = solve_square(&rows, &combo, d) {
            if rows
                .iter()
                .all(|(a, b)| dot(a, &v) <= *b + FEAS_TOL)
            {
                let value = dot(objective, &v);
                let better = match &best {
                    None => true,
                    Some((bv, bvec)) => {
                        value < bv - FEAS_TOL
                            || (value <= bv + FEAS_TOL && lex_less(&v, bvec))
                    }
                };
                if better {
                    best = Some((value, v));
                }
            }
        }
        if !advance_combo(&mut combo, rows.len()) {
            break;
        }
    }
    best.map(|(_, v)| v)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < &(y - FEAS_TOL) {
            return true;
        }
        if x > &(y + FEAS_TOL) {
            return false;
        }
    }
    false
}

/// Next d-combination of indices below `n` in lexicographic order.
fn advance_combo(combo: &mut [usize], n: usize) -> bool {
    let d = combo.len();
    let mut i = d;
    while i > 0 {
        i -= 1;
        if combo[i] < n - (d - i) {
            combo[i] += 1;
            for j in i + 1..d {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Solves the square system formed by the chosen constraint rows taken with
/// equality; None when the rows are (numerically) dependent.
fn solve_square(rows: &[(Vec<f64>, f64)], combo: &[usize], d: usize) -> Option<Vec<f64>> {
    let mut a: Vec<Vec<f64>> = combo.iter().map(|&i| rows[i].0.clone()).collect();
    let mut rhs: Vec<f64> = combo.iter().map(|&i| rows[i].1).collect();

    for col in 0..d {
        let pivot_row = (col..d)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot_row][col].abs() < PIVOT_TOL {
            return None;
        }
        a.swap(col, pivot_row);
        rhs.swap(col, pivot_row);
        let pivot = a[col][col];
        for i in 0..d {
            if i != col {
                let factor = a[i][col] / pivot;
                if factor != 0.0 {
                    for j in 0..d {
                        a[i][j] -= factor * a[col][j];
                    }
                    rhs[i] -= factor * rhs[col];
                }
            }
        }
    }
    Some((0..d).map(|i| rhs[i] / a[i][i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-7, "{a} != {b}");
    }

    #[test]
    fn matching_pennies_is_fair() {
        let cost = vec![vec![1.0, -1.0], vec![-1.0, 1.0]];
        let sol = solve_zero_sum(&cost);
        assert_close(sol.value, 0.0);
        assert_close(sol.row_mix[0], 0.5);
        assert_close(sol.col_mix[0], 0.5);
    }

    #[test]
    fn dominant_row_is_played_pure() {
        let cost = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let sol = solve_zero_sum(&cost);
        assert_close(sol.value, 0.0);
        assert_close(sol.row_mix[0], 1.0);
        assert_close(sol.row_mix[1], 0.0);
    }

    #[test]
    fn rock_paper_scissors_is_uniform() {
        let cost = vec![
            vec![0.0, 1.0, -1.0],
            vec![-1.0, 0.0, 1.0],
            vec![1.0, -1.0, 0.0],
        ];
        let sol = solve_zero_sum(&cost);
        assert_close(sol.value, 0.0);
        for p in sol.row_mix.iter().chain(&sol.col_mix) {
            assert_close(*p, 1.0 / 3.0);
        }
    }

    #[test]
    fn known_two_by_two_mixed_game() {
        // Row costs equalize at p = (1/2, 1/2), q = (3/4, 1/4), value 3/2.
        let cost = vec![vec![2.0, 0.0], vec![1.0, 3.0]];
        let sol = solve_zero_sum(&cost);
        assert_close(sol.value, 1.5);
        assert_close(sol.row_mix[0], 0.5);
        assert_close(sol.col_mix[0], 0.75);
    }

    #[test]
    fn single_entry_game() {
        let sol = solve_zero_sum(&[vec![3.5]]);
        assert_close(sol.value, 3.5);
        assert_close(sol.row_mix[0], 1.0);
        assert_close(sol.col_mix[0], 1.0);
    }

    #[test]
    fn single_row_game_lets_column_player_pick_max() {
        let sol = solve_zero_sum(&[vec![0.25, 0.75, 0.5]]);
        assert_close(sol.value, 0.75);
        assert_close(sol.col_mix[1], 1.0);
    }

    #[test]
    fn strategies_are_distributions() {
        let cost = vec![vec![0.3, -0.2, 0.9], vec![-0.5, 0.4, 0.1]];
        let sol = solve_zero_sum(&cost);
        assert_close(sol.row_mix.iter().sum::<f64>(), 1.0);
        assert_close(sol.col_mix.iter().sum::<f64>(), 1.0);
        assert!(sol.row_mix.iter().all(|&p| p >= 0.0));
        assert!(sol.col_mix.iter().all(|&p| p >= 0.0));
        // The mixes certify the value from both sides.
        for j in 0..3 {
            let col_cost: f64 = (0..2).map(|i| sol.row_mix[i] * cost[i][j]).sum();
            assert!(col_cost <= sol.value + 1e-7);
        }
        for row in &cost {
            let row_cost: f64 = (0..3).map(|j| sol.col_mix[j] * row[j]).sum();
            assert!(row_cost >= sol.value - 1e-7);
        }
    }

    #[test]
    fn box_minimum_sits_at_origin() {
        let v = minimize_over_box_polytope(&[1.0, 1.0], &[]).unwrap();
        assert_close(v[0], 0.0);
        assert_close(v[1], 0.0);
    }

    #[test]
    fn box_maximum_via_negated_objective() {
        let v = minimize_over_box_polytope(&[-1.0, -2.0, -3.0], &[]).unwrap();
        assert!(v.iter().all(|&x| (x - 1.0).abs() < 1e-9));
    }

    #[test]
    fn halfspace_shifts_the_minimum() {
        // x >= y + 0.25 written as y - x <= -0.25; minimizing x forces the
        // vertex (0.25, 0).
        let v =
            minimize_over_box_polytope(&[1.0, 0.0], &[(vec![-1.0, 1.0], -0.25)]).unwrap();
        assert_close(v[0], 0.25);
        assert_close(v[1], 0.0);
    }

    #[test]
    fn infeasible_region_returns_none() {
        // x <= 0.2 and -x <= -0.8 cannot both hold.
        let region = minimize_over_box_polytope(
            &[1.0],
            &[(vec![1.0], 0.2), (vec![-1.0], -0.8)],
        );
        assert!(region.is_none());
    }

    #[test]
    fn argmax_cell_of_pick_coordinate_utility() {
        // Cell of action 0 under U(a, y) = y[a]: v0 >= v1 and v0 >= v2.
        let cell = vec![
            (vec![-1.0, 1.0, 0.0], 0.0),
            (vec![-1.0, 0.0, 1.0], 0.0),
        ];
        let v = minimize_over_box_polytope(&[1.0, 1.0, 1.0], &cell).unwrap();
        assert!(v.iter().all(|&x| x.abs() < 1e-9));
        // Pushing coordinate 1 up drags coordinate 0 with it.
        let w = minimize_over_box_polytope(&[0.0, -1.0, 0.0], &cell).unwrap();
        assert_close(w[0], 1.0);
        assert_close(w[1], 1.0);
        assert_close(w[2], 0.0);
    }

    #[test]
    fn ties_resolve_to_lexicographic_smallest_vertex() {
        // Objective 0: every vertex ties, so the origin wins.
        let v = minimize_over_box_polytope(&[0.0, 0.0], &[]).unwrap();
        assert_close(v[0], 0.0);
        assert_close(v[1], 0.0);
    }
}
