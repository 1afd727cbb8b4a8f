//! Dense tableau simplex for the small linear programs behind the
//! feasibility tests in [`crate::geom`].
//!
//! Problems here are tiny: dimension `d + 1` with at most a few hundred
//! rows, always feasible (the caller supplies a feasible start) and always
//! bounded above. A textbook primal simplex with a Bland fallback covers
//! that comfortably; no attempt is made at a general-purpose solver.

/// One inequality `coeffs . z <= rhs`.
#[derive(Debug, Clone)]
pub(crate) struct LpRow {
    pub coeffs: Vec<f64>,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct LpSolution {
    /// Objective value at the returned point; a lower bound on the
    /// optimum when the solve stopped early at `stop_above`.
    pub value: f64,
    pub point: Vec<f64>,
}

#[derive(Debug, Clone)]
pub(crate) enum LpError {
    /// Pivot budget exhausted.
    IterationLimit,
    /// The supplied start violates a row beyond the feasibility slack.
    BadStart,
    /// Improving ray with no blocking row; the caller's model is wrong.
    Unbounded,
}

const PIVOT_TOL: f64 = 1e-9;
const COST_TOL: f64 = 1e-9;
const START_SLACK: f64 = 1e-7;

/// Maximize `objective . z` subject to `rows`, starting from the feasible
/// point `start`. Free variables are handled by a shifted positive/negative
/// split, so the slack basis at `start` is immediately feasible.
///
/// `stop_above`: return as soon as a feasible iterate exceeds this value;
/// used by feasibility queries that only need a yes/no answer.
pub(crate) fn maximize(
    rows: &[LpRow],
    objective: &[f64],
    start: &[f64],
    stop_above: Option<f64>,
) -> Result<LpSolution, LpError> {
    let k = start.len();
    let m = rows.len();
    debug_assert!(rows.iter().all(|r| r.coeffs.len() == k));
    debug_assert_eq!(objective.len(), k);

    let start_value: f64 = dot(objective, start);
    if m == 0 {
        // No rows: optimal iff the objective is identically zero.
        if objective.iter().all(|&c| c == 0.0) {
            return Ok(LpSolution {
                value: start_value,
                point: start.to_vec(),
            });
        }
        return Err(LpError::Unbounded);
    }

    // Tableau columns: k positive parts, k negative parts, m slacks.
    let ncols = 2 * k + m;
    let mut tab = vec![0.0f64; m * ncols];
    let mut rhs = vec![0.0f64; m];
    let mut basis: Vec<usize> = (0..m).map(|i| 2 * k + i).collect();

    for (i, row) in rows.iter().enumerate() {
        let slack = row.rhs - dot(&row.coeffs, start);
        if slack < -START_SLACK * (1.0 + row.rhs.abs()) {
            return Err(LpError::BadStart);
        }
        rhs[i] = slack.max(0.0);
        let t = &mut tab[i * ncols..(i + 1) * ncols];
        for j in 0..k {
            t[j] = row.coeffs[j];
            t[k + j] = -row.coeffs[j];
        }
        t[2 * k + i] = 1.0;
    }

    // Reduced-cost row for the shifted variables.
    let mut cost = vec![0.0f64; ncols];
    for j in 0..k {
        cost[j] = objective[j];
        cost[k + j] = -objective[j];
    }
    let mut value = start_value;

    let max_iters = 200 * (m + 2 * k) + 10_000;
    let stall_limit = m + 2 * k + 16;
    let mut stalled = 0usize;
    let mut bland = false;

    for _ in 0..max_iters {
        if let Some(threshold) = stop_above {
            if value > threshold {
                return Ok(LpSolution {
                    value,
                    point: extract_point(start, &basis, &rhs, k),
                });
            }
        }

        // Pricing.
        let entering = if bland {
            (0..ncols).find(|&j| cost[j] > COST_TOL)
        } else {
            let mut best = None;
            let mut best_cost = COST_TOL;
            for (j, &c) in cost.iter().enumerate() {
                if c > best_cost {
                    best_cost = c;
                    best = Some(j);
                }
            }
            best
        };
        let Some(e) = entering else {
            return Ok(LpSolution {
                value,
                point: extract_point(start, &basis, &rhs, k),
            });
        };

        // Ratio test.
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for i in 0..m {
            let a = tab[i * ncols + e];
            if a > PIVOT_TOL {
                let ratio = rhs[i] / a;
                let better = match leave {
                    None => true,
                    Some(r) => {
                        if ratio < best_ratio - 1e-12 {
                            true
                        } else if ratio > best_ratio + 1e-12 {
                            false
                        } else if bland {
                            // Bland: leave on the smallest basis index.
                            basis[i] < basis[r]
                        } else {
                            // Prefer the larger pivot among ties.
                            a > tab[r * ncols + e]
                        }
                    }
                };
                if better {
                    leave = Some(i);
                    best_ratio = ratio.max(0.0);
                }
            }
        }
        let Some(r) = leave else {
            return Err(LpError::Unbounded);
        };

        // Pivot on (r, e).
        let step = best_ratio;
        if step * cost[e] <= 1e-15 * (1.0 + value.abs()) {
            stalled += 1;
            if stalled > stall_limit {
                bland = true;
            }
        } else {
            stalled = 0;
        }
        value += step * cost[e];

        let piv = tab[r * ncols + e];
        let inv = 1.0 / piv;
        for j in 0..ncols {
            tab[r * ncols + j] *= inv;
        }
        rhs[r] *= inv;
        tab[r * ncols + e] = 1.0;

        for i in 0..m {
            if i == r {
                continue;
            }
            let f = tab[i * ncols + e];
            if f != 0.0 {
                for j in 0..ncols {
                    tab[i * ncols + j] -= f * tab[r * ncols + j];
                }
                tab[i * ncols + e] = 0.0;
                rhs[i] -= f * rhs[r];
                if rhs[i] < 0.0 && rhs[i] > -1e-9 {
                    rhs[i] = 0.0;
                }
            }
        }
        let cf = cost[e];
        if cf != 0.0 {
            for j in 0..ncols {
                cost[j] -= cf * tab[r * ncols + j];
            }
            cost[e] = 0.0;
        }
        basis[r] = e;
    }

    Err(LpError::IterationLimit)
}

fn extract_point(start: &[f64], basis: &[usize], rhs: &[f64], k: usize) -> Vec<f64> {
    let mut z = start.to_vec();
    for (row, &var) in basis.iter().enumerate() {
        if var < k {
            z[var] += rhs[row];
        } else if var < 2 * k {
            z[var - k] -= rhs[row];
        }
    }
    z
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
