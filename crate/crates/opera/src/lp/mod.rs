//! Benchmark linear programs bounding the offline optimum.
//!
//! Three nested formulations: unit-capacity sequential arrivals, unit-capacity
//! batch arrivals, and the full shared-capacity batch model. All are packing
//! LPs (`Ax <= b`, `0 <= x <= 1`); small models go to the bundled dense
//! simplex, large ones are rewritten with per-round balance equalities over
//! symmetric resource classes and handed to an interior-point backend.

pub mod ipm;
pub mod simplex;

use std::collections::HashMap;
use std::io::Write;

use thiserror::Error;

use crate::grouping::{self, GroupCatalog};
use crate::model::Instance;

#[derive(Debug, Error)]
pub enum LpError {
    #[error("model shape: {0}")]
    BadShape(String),
    #[error("simplex iteration limit reached")]
    IterationLimit,
    #[error("solver failed: {0}")]
    SolverFailed(String),
    #[error("returned solution violates a constraint by {0:e}")]
    FeasibilityCheck(f64),
    #[error(transparent)]
    Group(#[from] grouping::GroupError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Row {
    pub coeffs: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// Column identities. `u` is a resource id in per-resource models and a class
/// id in pooled models; `g` indexes the group catalog (for unit-capacity
/// models the singleton group index equals the vertex-type id).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ColKey {
    Assign { u: usize, g: usize, t: usize },
    /// Idle capacity of a pooled class at the end of round `t`.
    Idle { class: usize, t: usize },
}

#[derive(Debug, Clone)]
pub struct LpModel {
    pub cols: Vec<ColKey>,
    pub objective: Vec<f64>,
    pub upper: Vec<f64>,
    pub rows: Vec<Row>,
    /// Pooled models: the resource ids aggregated into each class column.
    pub classes: Option<Vec<Vec<usize>>>,
}

impl LpModel {
    pub fn nnz(&self) -> usize {
        self.rows.iter().map(|r| r.coeffs.len()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub status: LpStatus,
}

pub const FEAS_TOL: f64 = 1e-7;

/// Unit-capacity, one arrival per round. Supply rows carry the per-round
/// arrival probability; reuse rows keep each resource's expected load at most
/// one, discounted by the occupancy survival function.
pub fn build_lp_sequential(inst: &Instance) -> Result<LpModel, LpError> {
    if inst.kappa != 1 {
        return Err(LpError::BadShape(format!(
            "sequential model requires kappa=1 (got {})",
            inst.kappa
        )));
    }
    if inst.arrivals.batch_sizes.iter().any(|&b| b != 1) {
        return Err(LpError::BadShape(
            "sequential model requires unit batches".to_string(),
        ));
    }
    build_unit_capacity(inst, false)
}

/// Unit-capacity batch arrivals: identical to the sequential model except the
/// supply right-hand side is the expected per-round type count `b^t * p_v^t`.
pub fn build_lp_batch(inst: &Instance) -> Result<LpModel, LpError> {
    if inst.kappa != 1 {
        return Err(LpError::BadShape(format!(
            "batch model requires kappa=1 (got {})",
            inst.kappa
        )));
    }
    build_unit_capacity(inst, true)
}

fn build_unit_capacity(inst: &Instance, scale_by_batch: bool) -> Result<LpModel, LpError> {
    let nu = inst.num_resources();
    let nv = inst.num_types();
    let nt = inst.rounds();
    let col = |u: usize, v: usize, t: usize| (u * nv + v) * nt + t;
    let n = nu * nv * nt;
    let mut cols = Vec::with_capacity(n);
    let mut objective = vec![0.0; n];
    for u in 0..nu {
        for v in 0..nv {
            for t in 0..nt {
                cols.push(ColKey::Assign { u, g: v, t });
                objective[col(u, v, t)] = inst.weights.get(u, v, t);
            }
        }
    }
    let mut rows = Vec::new();
    // Reuse: expected load of u at round t, survival-discounted history plus
    // the current round, stays at most 1.
    for u in 0..nu {
        for t in 0..nt {
            let mut coeffs = Vec::new();
            for v in 0..nv {
                for tp in 0..=t {
                    let surv = inst.occupancy.get(u, v, tp).survival(t - tp);
                    if surv > 0.0 {
                        coeffs.push((col(u, v, tp), surv));
                    }
                }
            }
            rows.push(Row {
                coeffs,
                sense: Sense::Le,
                rhs: 1.0,
            });
        }
    }
    // Supply per (v, t).
    for v in 0..nv {
        for t in 0..nt {
            let coeffs = (0..nu).map(|u| (col(u, v, t), 1.0)).collect();
            let p = inst.arrivals.probs[t][v];
            let rhs = if scale_by_batch {
                inst.arrivals.batch_sizes[t] as f64 * p
            } else {
                p
            };
            rows.push(Row {
                coeffs,
                sense: Sense::Le,
                rhs,
            });
        }
    }
    Ok(LpModel {
        cols,
        objective,
        upper: vec![1.0; n],
        rows,
        classes: None,
    })
}

/// Full shared-capacity model over the group catalog: per-resource reuse rows,
/// per-vertex-type supply rows (multiplicity-weighted), and per-group-type
/// supply rows. For `kappa = 1` this specializes to the batch model exactly.
pub fn build_lp_share(inst: &Instance, catalog: &GroupCatalog) -> Result<LpModel, LpError> {
    if catalog.kappa != inst.kappa || catalog.num_types != inst.num_types() {
        return Err(LpError::BadShape(
            "group catalog does not match the instance".to_string(),
        ));
    }
    if inst.kappa == 1 {
        return build_lp_batch(inst);
    }
    let nu = inst.num_resources();
    let nv = inst.num_types();
    let ng = catalog.len();
    let nt = inst.rounds();
    let col = |u: usize, g: usize, t: usize| (u * ng + g) * nt + t;
    let n = nu * ng * nt;
    let mut cols = Vec::with_capacity(n);
    let mut objective = vec![0.0; n];
    for u in 0..nu {
        for g in 0..ng {
            for t in 0..nt {
                cols.push(ColKey::Assign { u, g, t });
                objective[col(u, g, t)] = inst.weights.get(u, g, t);
            }
        }
    }
    let mut rows = Vec::new();
    for u in 0..nu {
        for t in 0..nt {
            let mut coeffs = Vec::new();
            for g in 0..ng {
                for tp in 0..=t {
                    let surv = inst.occupancy.get(u, g, tp).survival(t - tp);
                    if surv > 0.0 {
                        coeffs.push((col(u, g, tp), surv));
                    }
                }
            }
            rows.push(Row {
                coeffs,
                sense: Sense::Le,
                rhs: 1.0,
            });
        }
    }
    for v in 0..nv {
        for t in 0..nt {
            let mut coeffs = Vec::new();
            for g in 0..ng {
                let mult = catalog.group(g).multiplicity_of(v);
                if mult > 0 {
                    for u in 0..nu {
                        coeffs.push((col(u, g, t), mult as f64));
                    }
                }
            }
            let rhs = inst.arrivals.batch_sizes[t] as f64 * inst.arrivals.probs[t][v];
            rows.push(Row {
                coeffs,
                sense: Sense::Le,
                rhs,
            });
        }
    }
    for g in 0..ng {
        for t in 0..nt {
            let coeffs = (0..nu).map(|u| (col(u, g, t), 1.0)).collect();
            let rhs = grouping::expected_group_count(
                catalog.group(g),
                &inst.arrivals.probs[t],
                inst.arrivals.batch_sizes[t],
            );
            rows.push(Row {
                coeffs,
                sense: Sense::Le,
                rhs,
            });
        }
    }
    Ok(LpModel {
        cols,
        objective,
        upper: vec![1.0; n],
        rows,
        classes: None,
    })
}

/// Partition resources into classes with identical weight and occupancy
/// columns. Aggregating such a class is exact: any optimum can be symmetrized
/// across the class without changing objective or feasibility.
pub fn detect_resource_classes(inst: &Instance, catalog: &GroupCatalog) -> Vec<Vec<usize>> {
    let nt = inst.rounds();
    let mut by_key: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
    let mut order: Vec<Vec<u64>> = Vec::new();
    for u in 0..inst.num_resources() {
        let mut key = Vec::new();
        for g in 0..catalog.len() {
            for t in 0..nt {
                key.push(inst.weights.get(u, g, t).to_bits());
                match inst.occupancy.get(u, g, t) {
                    crate::model::Occupancy::Constant(c) => {
                        key.push(u64::MAX);
                        key.push(*c as u64);
                    }
                    crate::model::Occupancy::Categorical { support, probs } => {
                        key.push(u64::MAX - 1);
                        key.push(support.len() as u64);
                        for s in support {
                            key.push(*s as u64);
                        }
                        for p in probs {
                            key.push(p.to_bits());
                        }
                    }
                }
            }
        }
        let entry = by_key.entry(key.clone()).or_default();
        if entry.is_empty() {
            order.push(key);
        }
        entry.push(u);
    }
    order.into_iter().map(|k| by_key.remove(&k).unwrap()).collect()
}

/// Shared-capacity model with symmetric resource classes pooled into one
/// column block each, and the reuse constraints rewritten as per-round idle
/// balance equalities (occupancy exits enter through `Pr[c = d]`). Feasible
/// per-resource solutions are recovered by even splitting within a class.
pub fn build_lp_share_pooled(
    inst: &Instance,
    catalog: &GroupCatalog,
    classes: &[Vec<usize>],
) -> Result<LpModel, LpError> {
    let nc = classes.len();
    let ng = catalog.len();
    let nv = inst.num_types();
    let nt = inst.rounds();
    let nx = nc * ng * nt;
    let n = nx + nc * nt;
    let xcol = |c: usize, g: usize, t: usize| (c * ng + g) * nt + t;
    let icol = |c: usize, t: usize| nx + c * nt + t;

    let qg: Vec<Vec<f64>> = (0..nt)
        .map(|t| {
            (0..ng)
                .map(|g| {
                    grouping::expected_group_count(
                        catalog.group(g),
                        &inst.arrivals.probs[t],
                        inst.arrivals.batch_sizes[t],
                    )
                })
                .collect()
        })
        .collect();

    let mut cols = Vec::with_capacity(n);
    let mut objective = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for (c, members) in classes.iter().enumerate() {
        let size = members.len() as f64;
        let rep = members[0];
        for g in 0..ng {
            for t in 0..nt {
                cols.push(ColKey::Assign { u: c, g, t });
                objective[xcol(c, g, t)] = inst.weights.get(rep, g, t);
                // With a single class the group-supply constraint folds into
                // the variable bound; otherwise it stays a shared row below.
                upper[xcol(c, g, t)] = if nc == 1 { size.min(qg[t][g]) } else { size };
            }
        }
    }
    for (c, members) in classes.iter().enumerate() {
        for t in 0..nt {
            cols.push(ColKey::Idle { class: c, t });
            upper[icol(c, t)] = members.len() as f64;
        }
    }

    let mut rows = Vec::new();
    // Idle balance per (class, t): idle_t = idle_{t-1} - entering_t + exits_t,
    // seeded with the class size at t = 0. idle >= 0 is the capacity
    // constraint; exits are spread by the occupancy exit probabilities.
    for (c, members) in classes.iter().enumerate() {
        let rep = members[0];
        for t in 0..nt {
            let mut acc: HashMap<usize, f64> = HashMap::new();
            for g in 0..ng {
                *acc.entry(xcol(c, g, t)).or_insert(0.0) += 1.0;
                for tp in 0..t {
                    let exit = inst.occupancy.get(rep, g, tp).exit_prob(t - tp);
                    if exit > 0.0 {
                        *acc.entry(xcol(c, g, tp)).or_insert(0.0) -= exit;
                    }
                }
            }
            *acc.entry(icol(c, t)).or_insert(0.0) += 1.0;
            let rhs = if t > 0 {
                *acc.entry(icol(c, t - 1)).or_insert(0.0) -= 1.0;
                0.0
            } else {
                members.len() as f64
            };
            let mut coeffs: Vec<(usize, f64)> =
                acc.into_iter().filter(|(_, v)| *v != 0.0).collect();
            coeffs.sort_by_key(|e| e.0);
            rows.push(Row {
                coeffs,
                sense: Sense::Eq,
                rhs,
            });
        }
    }
    for v in 0..nv {
        for t in 0..nt {
            let mut coeffs = Vec::new();
            for g in 0..ng {
                let mult = catalog.group(g).multiplicity_of(v);
                if mult > 0 {
                    for c in 0..nc {
                        coeffs.push((xcol(c, g, t), mult as f64));
                    }
                }
            }
            let rhs = inst.arrivals.batch_sizes[t] as f64 * inst.arrivals.probs[t][v];
            rows.push(Row {
                coeffs,
                sense: Sense::Le,
                rhs,
            });
        }
    }
    if nc > 1 {
        for g in 0..ng {
            for t in 0..nt {
                let coeffs = (0..nc).map(|c| (xcol(c, g, t), 1.0)).collect();
                rows.push(Row {
                    coeffs,
                    sense: Sense::Le,
                    rhs: qg[t][g],
                });
            }
        }
    }
    Ok(LpModel {
        cols,
        objective,
        upper,
        rows,
        classes: Some(classes.to_vec()),
    })
}

/// Maximum constraint/bound violation of `x` against the model, computed
/// independently of any solver.
pub fn check_solution(model: &LpModel, x: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for (j, &xj) in x.iter().enumerate() {
        worst = worst.max(-xj).max(xj - model.upper[j]);
    }
    for row in &model.rows {
        let lhs: f64 = row.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
        let v = match row.sense {
            Sense::Le => lhs - row.rhs,
            Sense::Eq => (lhs - row.rhs).abs(),
        };
        worst = worst.max(v);
    }
    worst
}

/// Solve a model with the appropriate backend and re-check feasibility of the
/// returned point row by row. Deterministic for a fixed model.
pub fn solve_lp(model: &LpModel) -> Result<LpSolution, LpError> {
    let has_eq = model.rows.iter().any(|r| r.sense == Sense::Eq);
    let sol = if has_eq || model.cols.len() > 2000 || model.nnz() > 100_000 {
        ipm::solve(model)?
    } else {
        simplex::solve(model)?
    };
    let viol = check_solution(model, &sol.x);
    if viol > FEAS_TOL {
        return Err(LpError::FeasibilityCheck(viol));
    }
    Ok(sol)
}

/// Dense per-(resource, group, round) view of an LP solution, with pooled
/// class columns split evenly over their member resources.
#[derive(Debug, Clone)]
pub struct XStar {
    pub nu: usize,
    pub ng: usize,
    pub nt: usize,
    pub objective: f64,
    x: Vec<f64>,
    sum_u: Vec<f64>,
}

impl XStar {
    pub fn from_solution(inst: &Instance, ng: usize, model: &LpModel, sol: &LpSolution) -> XStar {
        let nu = inst.num_resources();
        let nt = inst.rounds();
        let mut x = vec![0.0; nu * ng * nt];
        // Interior-point solutions leave noise-level positives on unsupported
        // columns; zero them so ratio-based samplers see the true support.
        let cutoff = 1e-6
            * sol
                .x
                .iter()
                .fold(0.0f64, |m, &v| m.max(v));
        for (j, key) in model.cols.iter().enumerate() {
            if sol.x[j] < cutoff {
                continue;
            }
            if let ColKey::Assign { u, g, t } = *key {
                match &model.classes {
                    None => x[(u * ng + g) * nt + t] = sol.x[j],
                    Some(classes) => {
                        let members = &classes[u];
                        let share = sol.x[j] / members.len() as f64;
                        for &m in members {
                            x[(m * ng + g) * nt + t] = share;
                        }
                    }
                }
            }
        }
        let mut sum_u = vec![0.0; ng * nt];
        for u in 0..nu {
            for g in 0..ng {
                for t in 0..nt {
                    sum_u[g * nt + t] += x[(u * ng + g) * nt + t];
                }
            }
        }
        XStar {
            nu,
            ng,
            nt,
            objective: sol.objective,
            x,
            sum_u,
        }
    }

    pub fn get(&self, u: usize, g: usize, t: usize) -> f64 {
        self.x[(u * self.ng + g) * self.nt + t]
    }

    pub fn sum_over_u(&self, g: usize, t: usize) -> f64 {
        self.sum_u[g * self.nt + t]
    }
}

/// Free-format MPS export for cross-checking against external solvers.
pub fn write_mps<W: Write>(model: &LpModel, name: &str, mut w: W) -> std::io::Result<()> {
    writeln!(w, "NAME {name}")?;
    writeln!(w, "ROWS")?;
    writeln!(w, " N  COST")?;
    for (i, row) in model.rows.iter().enumerate() {
        let s = match row.sense {
            Sense::Le => 'L',
            Sense::Eq => 'E',
        };
        writeln!(w, " {s}  R{i}")?;
    }
    writeln!(w, "COLUMNS")?;
    // Column-major entries; maximization objective is negated because MPS
    // readers minimize by convention.
    let mut by_col: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.cols.len()];
    for (i, row) in model.rows.iter().enumerate() {
        for &(j, a) in &row.coeffs {
            by_col[j].push((i, a));
        }
    }
    for (j, entries) in by_col.iter().enumerate() {
        if model.objective[j] != 0.0 {
            writeln!(w, "    X{j}  COST  {}", -model.objective[j])?;
        }
        for &(i, a) in entries {
            writeln!(w, "    X{j}  R{i}  {a}")?;
        }
    }
    writeln!(w, "RHS")?;
    for (i, row) in model.rows.iter().enumerate() {
        if row.rhs != 0.0 {
            writeln!(w, "    RHS  R{i}  {}", row.rhs)?;
        }
    }
    writeln!(w, "BOUNDS")?;
    for (j, &ub) in model.upper.iter().enumerate() {
        if ub.is_finite() {
            writeln!(w, " UP BND  X{j}  {ub}")?;
        }
    }
    writeln!(w, "ENDATA")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        ArrivalModel, Instance, Metadata, Occupancy, OccupancyModel, Resource, VertexType,
        WeightModel,
    };

    pub(crate) fn unit_instance(
        nu: usize,
        nv: usize,
        nt: usize,
        b: usize,
        c: usize,
        weights: WeightModel,
        probs: Vec<Vec<f64>>,
    ) -> Instance {
        Instance {
            kappa: 1,
            resources: (0..nu).map(|id| Resource { id, capacity: 1 }).collect(),
            vertex_types: (0..nv).map(|id| VertexType { id, label: None }).collect(),
            arrivals: ArrivalModel {
                rounds: nt,
                batch_sizes: vec![b; nt],
                probs,
            },
            weights,
            occupancy: OccupancyModel::uniform(Occupancy::Constant(c)),
            null_type: None,
            allow_small_batches: true,
            metadata: Metadata::default(),
        }
    }

    #[test]
    fn sequential_single_variable() {
        let inst = unit_instance(
            1,
            1,
            1,
            1,
            1,
            WeightModel {
                constant: vec![(0, 0, 1.0)],
                per_round: vec![],
            },
            vec![vec![1.0]],
        );
        let model = build_lp_sequential(&inst).unwrap();
        let sol = solve_lp(&model).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sequential_busy_resource_caps_value() {
        // Two rounds, occupancy 2: serving both rounds is impossible.
        let inst = unit_instance(
            1,
            1,
            2,
            1,
            2,
            WeightModel {
                constant: vec![(0, 0, 1.0)],
                per_round: vec![],
            },
            vec![vec![1.0]; 2],
        );
        let model = build_lp_sequential(&inst).unwrap();
        let sol = solve_lp(&model).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-9, "got {}", sol.objective);
    }

    #[test]
    fn zero_weights_zero_value() {
        let inst = unit_instance(2, 2, 3, 1, 1, WeightModel::default(), vec![vec![0.5, 0.5]; 3]);
        let sol = solve_lp(&build_lp_sequential(&inst).unwrap()).unwrap();
        assert_eq!(sol.objective, 0.0);
    }

    #[test]
    fn batch_equals_sequential_for_unit_batches() {
        let inst = unit_instance(
            2,
            2,
            2,
            1,
            1,
            WeightModel {
                constant: vec![(0, 0, 1.0), (1, 1, 2.0)],
                per_round: vec![],
            },
            vec![vec![0.3, 0.7]; 2],
        );
        let a = build_lp_sequential(&inst).unwrap();
        let b = build_lp_batch(&inst).unwrap();
        assert_eq!(a.cols, b.cols);
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.rows.len(), b.rows.len());
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.coeffs, rb.coeffs);
            assert_eq!(ra.rhs, rb.rhs);
        }
    }

    #[test]
    fn batch_values() {
        let w = WeightModel {
            constant: vec![(0, 0, 1.0), (1, 0, 1.0)],
            per_round: vec![],
        };
        let one = unit_instance(1, 1, 1, 2, 1, w.clone(), vec![vec![1.0]]);
        let sol = solve_lp(&build_lp_batch(&one).unwrap()).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-9);
        let two = unit_instance(2, 1, 1, 2, 1, w, vec![vec![1.0]]);
        let sol = solve_lp(&build_lp_batch(&two).unwrap()).unwrap();
        assert!((sol.objective - 2.0).abs() < 1e-9);
    }

    fn share_instance() -> (Instance, GroupCatalog) {
        // 1 resource, kappa 2, one type, b = 3: the pair is worth more than
        // the singleton, LP should load the pair column.
        let inst = Instance {
            kappa: 2,
            resources: vec![Resource { id: 0, capacity: 2 }],
            vertex_types: vec![VertexType { id: 0, label: None }],
            arrivals: ArrivalModel {
                rounds: 1,
                batch_sizes: vec![3],
                probs: vec![vec![1.0]],
            },
            weights: WeightModel {
                constant: vec![(0, 0, 1.0), (0, 1, 1.5)],
                per_round: vec![],
            },
            occupancy: OccupancyModel::uniform(Occupancy::Constant(1)),
            null_type: None,
            allow_small_batches: false,
            metadata: Metadata::default(),
        };
        let cat = GroupCatalog::build(1, 2).unwrap();
        (inst, cat)
    }

    #[test]
    fn share_prefers_pair() {
        let (inst, cat) = share_instance();
        let model = build_lp_share(&inst, &cat).unwrap();
        let sol = solve_lp(&model).unwrap();
        assert!((sol.objective - 1.5).abs() < 1e-9, "got {}", sol.objective);
    }

    #[test]
    fn share_zero_supply_zero_value() {
        let (mut inst, _) = share_instance();
        // Degenerate arrivals on a zero-weight padding type. In the 2-type
        // catalog the weighted groups are {0} (index 0) and {0,0} (index 2).
        inst.vertex_types.push(VertexType { id: 1, label: None });
        inst.null_type = Some(1);
        inst.arrivals.probs = vec![vec![0.0, 1.0]];
        inst.weights.constant = vec![(0, 0, 1.0), (0, 2, 1.5)];
        let cat = GroupCatalog::build(2, 2).unwrap();
        let sol = solve_lp(&build_lp_share(&inst, &cat).unwrap()).unwrap();
        assert!(sol.objective.abs() < 1e-9);
    }

    #[test]
    fn share_with_unit_capacity_is_batch() {
        let inst = unit_instance(
            2,
            2,
            2,
            3,
            1,
            WeightModel {
                constant: vec![(0, 0, 1.0), (1, 1, 2.0)],
                per_round: vec![],
            },
            vec![vec![0.3, 0.7]; 2],
        );
        let cat = GroupCatalog::build(2, 1).unwrap();
        let a = build_lp_share(&inst, &cat).unwrap();
        let b = build_lp_batch(&inst).unwrap();
        assert_eq!(a.cols, b.cols);
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.coeffs, rb.coeffs);
            assert_eq!(ra.rhs, rb.rhs);
        }
    }

    #[test]
    fn solver_is_deterministic() {
        let (inst, cat) = share_instance();
        let model = build_lp_share(&inst, &cat).unwrap();
        let a = solve_lp(&model).unwrap();
        let b = solve_lp(&model).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.objective, b.objective);
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn adding_a_resource_never_hurts() {
        let (inst, cat) = share_instance();
        let base = solve_lp(&build_lp_share(&inst, &cat).unwrap()).unwrap();
        let mut bigger = inst.clone();
        bigger.resources.push(Resource { id: 1, capacity: 2 });
        bigger.weights.constant.push((1, 0, 1.0));
        bigger.weights.constant.push((1, 1, 1.5));
        bigger.weights.sort();
        let more = solve_lp(&build_lp_share(&bigger, &cat).unwrap()).unwrap();
        assert!(more.objective >= base.objective - 1e-9);
    }

    #[test]
    fn scaling_weights_scales_objective() {
        let (inst, cat) = share_instance();
        let base = solve_lp(&build_lp_share(&inst, &cat).unwrap()).unwrap();
        let mut scaled = inst.clone();
        for e in &mut scaled.weights.constant {
            e.2 *= 3.0;
        }
        let s = solve_lp(&build_lp_share(&scaled, &cat).unwrap()).unwrap();
        assert!((s.objective - 3.0 * base.objective).abs() < 1e-7);
        // The same x stays optimal under scaling.
        assert_eq!(s.x, base.x);
    }

    #[test]
    fn pooled_model_matches_per_resource() {
        // Two identical resources: pooled and per-resource optima agree.
        let (mut inst, cat) = share_instance();
        inst.resources.push(Resource { id: 1, capacity: 2 });
        inst.weights.constant.push((1, 0, 1.0));
        inst.weights.constant.push((1, 1, 1.5));
        inst.weights.sort();
        inst.arrivals = ArrivalModel {
            rounds: 3,
            batch_sizes: vec![3; 3],
            probs: vec![vec![1.0]; 3],
        };
        let per_u = solve_lp(&build_lp_share(&inst, &cat).unwrap()).unwrap();
        let classes = detect_resource_classes(&inst, &cat);
        assert_eq!(classes, vec![vec![0, 1]]);
        let pooled_model = build_lp_share_pooled(&inst, &cat, &classes).unwrap();
        let pooled = solve_lp(&pooled_model).unwrap();
        assert!(
            (pooled.objective - per_u.objective).abs() < 1e-5,
            "pooled {} vs per-resource {}",
            pooled.objective,
            per_u.objective
        );
        // Expansion to per-resource form is feasible in the original model.
        let xs = XStar::from_solution(&inst, cat.len(), &pooled_model, &pooled);
        let orig = build_lp_share(&inst, &cat).unwrap();
        let mut flat = vec![0.0; orig.cols.len()];
        for (j, key) in orig.cols.iter().enumerate() {
            if let ColKey::Assign { u, g, t } = *key {
                flat[j] = xs.get(u, g, t);
            }
        }
        assert!(check_solution(&orig, &flat) < 1e-6);
    }

    #[test]
    fn pooled_with_two_classes() {
        let (mut inst, cat) = share_instance();
        inst.resources.push(Resource { id: 1, capacity: 2 });
        // Different weights for the second resource: two classes.
        inst.weights.constant.push((1, 0, 2.0));
        inst.weights.constant.push((1, 1, 2.5));
        inst.weights.sort();
        let classes = detect_resource_classes(&inst, &cat);
        assert_eq!(classes.len(), 2);
        let per_u = solve_lp(&build_lp_share(&inst, &cat).unwrap()).unwrap();
        let pooled = solve_lp(&build_lp_share_pooled(&inst, &cat, &classes).unwrap()).unwrap();
        assert!((pooled.objective - per_u.objective).abs() < 1e-5);
    }

    #[test]
    fn mps_export_shape() {
        let (inst, cat) = share_instance();
        let model = build_lp_share(&inst, &cat).unwrap();
        let mut buf = Vec::new();
        write_mps(&model, "share", &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("NAME share"));
        assert!(text.trim_end().ends_with("ENDATA"));
        assert!(text.contains("COLUMNS"));
    }
}
