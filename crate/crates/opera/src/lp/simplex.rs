//! Dense primal simplex for the small benchmark LPs.
//!
//! Maximizes `c'x` subject to `Ax <= b`, `0 <= x <= ub`, with `b >= 0` so the
//! slack basis is feasible and no phase-1 is needed. Pricing is Dantzig with a
//! switch to Bland's rule after a stall, leaving-row ties broken by lowest
//! basis index; the whole pivot sequence is deterministic.

use super::{LpError, LpModel, LpSolution, LpStatus, Sense};

const PIVOT_TOL: f64 = 1e-10;
const STALL_LIMIT: usize = 200;
const ITERATION_LIMIT: usize = 500_000;

pub fn solve(model: &LpModel) -> Result<LpSolution, LpError> {
    if model.rows.iter().any(|r| r.sense == Sense::Eq) {
        return Err(LpError::BadShape(
            "dense simplex handles inequality rows only".to_string(),
        ));
    }
    let n = model.cols.len();
    // Finite non-trivial upper bounds become explicit rows.
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = model
        .rows
        .iter()
        .map(|r| (r.coeffs.clone(), r.rhs))
        .collect();
    for (j, &ub) in model.upper.iter().enumerate() {
        if ub.is_finite() {
            rows.push((vec![(j, 1.0)], ub));
        }
    }
    let m = rows.len();
    debug_assert!(rows.iter().all(|r| r.1 >= 0.0), "RHS must be nonnegative");

    // Tableau: m constraint rows + objective row; columns = n structural +
    // m slacks + rhs.
    let width = n + m + 1;
    let mut tab = vec![vec![0.0f64; width]; m + 1];
    for (i, (coeffs, rhs)) in rows.iter().enumerate() {
        for &(j, a) in coeffs {
            tab[i][j] += a;
        }
        tab[i][n + i] = 1.0;
        tab[i][width - 1] = *rhs;
    }
    for j in 0..n {
        tab[m][j] = -model.objective[j];
    }

    let mut basis: Vec<usize> = (n..n + m).collect();
    let mut iterations = 0usize;
    let mut stall = 0usize;
    let mut bland = false;
    let mut last_obj = 0.0f64;

    loop {
        // Entering column.
        let entering = if bland {
            (0..n + m).find(|&j| tab[m][j] < -PIVOT_TOL)
        } else {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..n + m {
                let c = tab[m][j];
                if c < -PIVOT_TOL && best.map_or(true, |(_, bc)| c < bc) {
                    best = Some((j, c));
                }
            }
            best.map(|(j, _)| j)
        };
        let Some(e) = entering else { break };

        // Leaving row: min ratio, ties by lowest basis variable index.
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let a = tab[i][e];
            if a > PIVOT_TOL {
                let ratio = tab[i][width - 1] / a;
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr - PIVOT_TOL
                            || (ratio < lr + PIVOT_TOL && basis[i] < basis[li])
                        {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((l, _)) = leave else {
            // Cannot happen for these models: every column lies in a bound
            // or packing row.
            return Err(LpError::SolverFailed("unbounded direction".to_string()));
        };

        // Pivot on (l, e).
        let piv = tab[l][e];
        for j in 0..width {
            tab[l][j] /= piv;
        }
        for i in 0..=m {
            if i != l {
                let f = tab[i][e];
                if f != 0.0 {
                    for j in 0..width {
                        tab[i][j] -= f * tab[l][j];
                    }
                }
            }
        }
        basis[l] = e;
        iterations += 1;
        if iterations >= ITERATION_LIMIT {
            return Err(LpError::IterationLimit);
        }
        let obj = tab[m][width - 1];
        if obj > last_obj + PIVOT_TOL {
            last_obj = obj;
            stall = 0;
        } else {
            stall += 1;
            if stall > STALL_LIMIT {
                bland = true;
            }
        }
    }

    let mut x = vec![0.0f64; n];
    for (i, &b) in basis.iter().enumerate() {
        if b < n {
            x[b] = tab[i][width - 1].max(0.0);
        }
    }
    let objective = x
        .iter()
        .zip(&model.objective)
        .map(|(xi, ci)| xi * ci)
        .sum();
    Ok(LpSolution {
        x,
        objective,
        iterations,
        status: LpStatus::Optimal,
    })
}
