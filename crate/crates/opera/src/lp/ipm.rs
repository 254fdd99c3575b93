//! Interior-point backend for large models (Clarabel), used when the dense
//! tableau would be too big or when the model carries equality rows.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT::*,
};

use super::{LpError, LpModel, LpSolution, LpStatus, Sense};

struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Triplets {
    fn new() -> Triplets {
        Triplets {
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
        }
    }

    fn push(&mut self, r: usize, c: usize, v: f64) {
        self.rows.push(r);
        self.cols.push(c);
        self.vals.push(v);
    }

    fn into_csc(self, m: usize, n: usize) -> CscMatrix<f64> {
        let mut order: Vec<usize> = (0..self.vals.len()).collect();
        order.sort_by_key(|&i| (self.cols[i], self.rows[i]));
        let mut colptr = vec![0usize; n + 1];
        let mut rowval = Vec::with_capacity(order.len());
        let mut nzval = Vec::with_capacity(order.len());
        for &i in &order {
            colptr[self.cols[i] + 1] += 1;
            rowval.push(self.rows[i]);
            nzval.push(self.vals[i]);
        }
        for j in 0..n {
            colptr[j + 1] += colptr[j];
        }
        CscMatrix::new(m, n, colptr, rowval, nzval)
    }
}

pub fn solve(model: &LpModel) -> Result<LpSolution, LpError> {
    let n = model.cols.len();
    let q: Vec<f64> = model.objective.iter().map(|c| -c).collect();

    // Row order: equalities (zero cone) first, then all inequalities.
    let mut a = Triplets::new();
    let mut b: Vec<f64> = Vec::new();
    let mut row = 0usize;
    for r in model.rows.iter().filter(|r| r.sense == Sense::Eq) {
        for &(j, v) in &r.coeffs {
            a.push(row, j, v);
        }
        b.push(r.rhs);
        row += 1;
    }
    let neq = row;
    for r in model.rows.iter().filter(|r| r.sense == Sense::Le) {
        for &(j, v) in &r.coeffs {
            a.push(row, j, v);
        }
        b.push(r.rhs);
        row += 1;
    }
    for (j, &ub) in model.upper.iter().enumerate() {
        if ub.is_finite() {
            a.push(row, j, 1.0);
            b.push(ub);
            row += 1;
        }
    }
    for j in 0..n {
        a.push(row, j, -1.0);
        b.push(0.0);
        row += 1;
    }
    let m = row;
    let amat = a.into_csc(m, n);
    let pmat = CscMatrix::<f64>::zeros((n, n));
    let cones = [ZeroConeT(neq), NonnegativeConeT(m - neq)];
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .build()
        .map_err(|e| LpError::SolverFailed(format!("settings: {e}")))?;
    let mut solver = DefaultSolver::new(&pmat, &q, &amat, &b, &cones, settings)
        .map_err(|e| LpError::SolverFailed(format!("setup: {e:?}")))?;
    solver.solve();
    let status = solver.solution.status;
    if !matches!(status, SolverStatus::Solved | SolverStatus::AlmostSolved) {
        return Err(LpError::SolverFailed(format!("status {status:?}")));
    }
    // Clip the interior-point iterate onto the box; residual row violations
    // are caught by the caller's independent feasibility check.
    let x: Vec<f64> = solver
        .solution
        .x
        .iter()
        .enumerate()
        .map(|(j, &v)| v.clamp(0.0, model.upper[j]))
        .collect();
    let objective = x
        .iter()
        .zip(&model.objective)
        .map(|(xi, ci)| xi * ci)
        .sum();
    Ok(LpSolution {
        x,
        objective,
        iterations: solver.info.iterations as usize,
        status: LpStatus::Optimal,
    })
}
