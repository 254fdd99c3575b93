//! Exact offline optima on small inputs: the ground truth that the LP bounds
//! and policy values are validated against, plus the per-round exact matching
//! used by the greedy baseline.

use thiserror::Error;

use crate::grouping::GroupCatalog;
use crate::model::Instance;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OfflineError {
    #[error("search exceeded {0} nodes")]
    SizeLimitExceeded(usize),
    #[error("sequence space of ~{0} realizations is too large to enumerate")]
    TooManySequences(u64),
    #[error("exact expected optimum requires constant occupancy distributions")]
    NonConstantOccupancy,
    #[error("realization round {0} has {1} arrivals, expected {2}")]
    BadRealization(usize, usize, usize),
}

const NODE_LIMIT: usize = 1_000_000;
const SEQUENCE_LIMIT: u64 = 200_000;

/// A fixed arrival draw: realized vertex types per round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Realization {
    pub arrivals: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct OfflineResult {
    pub value: f64,
    /// `(round, resource, group index)` of an optimal integral assignment.
    pub assignments: Vec<(usize, usize, usize)>,
}

struct Search<'a> {
    inst: &'a Instance,
    catalog: &'a GroupCatalog,
    counts: Vec<Vec<usize>>,
    free_at: Vec<usize>,
    /// Max assignable weight per (resource, round), for the admissible bound.
    wmax: Vec<Vec<f64>>,
    nodes: usize,
    best: f64,
    best_assign: Vec<(usize, usize, usize)>,
    current: Vec<(usize, usize, usize)>,
}

impl<'a> Search<'a> {
    fn new(inst: &'a Instance, catalog: &'a GroupCatalog, real: &Realization) -> Search<'a> {
        let nv = inst.num_types();
        let nt = inst.rounds();
        let counts: Vec<Vec<usize>> = real
            .arrivals
            .iter()
            .map(|round| {
                let mut c = vec![0usize; nv];
                for &v in round {
                    c[v] += 1;
                }
                c
            })
            .collect();
        let wmax = (0..inst.num_resources())
            .map(|u| {
                (0..nt)
                    .map(|t| {
                        (0..catalog.len())
                            .map(|g| inst.weights.get(u, g, t))
                            .fold(0.0f64, f64::max)
                    })
                    .collect()
            })
            .collect();
        Search {
            inst,
            catalog,
            counts,
            free_at: vec![0; inst.num_resources()],
            wmax,
            nodes: 0,
            best: 0.0,
            best_assign: Vec::new(),
            current: Vec::new(),
        }
    }

    /// Upper bound on what rounds >= t can still add, with resources before
    /// `u` in round `t` already decided.
    fn remaining_bound(&self, t: usize, u: usize) -> f64 {
        let nt = self.inst.rounds();
        let mut bound = 0.0;
        for uu in u..self.inst.num_resources() {
            bound += self.wmax[uu][t];
        }
        for tt in t + 1..nt {
            for uu in 0..self.inst.num_resources() {
                bound += self.wmax[uu][tt];
            }
        }
        bound
    }

    fn dfs(&mut self, t: usize, u: usize, value: f64) -> Result<(), OfflineError> {
        self.nodes += 1;
        if self.nodes > NODE_LIMIT {
            return Err(OfflineError::SizeLimitExceeded(NODE_LIMIT));
        }
        if t == self.inst.rounds() {
            if value > self.best {
                self.best = value;
                self.best_assign = self.current.clone();
            }
            return Ok(());
        }
        if u == self.inst.num_resources() {
            return self.dfs(t + 1, 0, value);
        }
        if value + self.remaining_bound(t, u) <= self.best {
            return Ok(());
        }
        // Leave u unassigned this round.
        self.dfs(t, u + 1, value)?;
        if self.free_at[u] > t {
            return Ok(());
        }
        for g in 0..self.catalog.len() {
            let group = self.catalog.group(g);
            if group
                .multiplicities()
                .iter()
                .any(|&(v, n)| self.counts[t][v] < n)
            {
                continue;
            }
            let w = self.inst.weights.get(u, g, t);
            let Some(c) = self.inst.occupancy.get(u, g, t).as_constant() else {
                return Err(OfflineError::NonConstantOccupancy);
            };
            for &(v, n) in &group.multiplicities() {
                self.counts[t][v] -= n;
            }
            self.free_at[u] = t + c;
            self.current.push((t, u, g));
            self.dfs(t, u + 1, value + w)?;
            self.current.pop();
            self.free_at[u] = t;
            for &(v, n) in &group.multiplicities() {
                self.counts[t][v] += n;
            }
        }
        Ok(())
    }
}

/// Maximum-weight integral assignment for a fixed arrival realization, by
/// depth-first branch and bound with an admissible per-round bound.
/// Occupancy must be constant (the oracle suite fixes it so).
pub fn offline_optimal_fixed(
    inst: &Instance,
    catalog: &GroupCatalog,
    real: &Realization,
) -> Result<OfflineResult, OfflineError> {
    if real.arrivals.len() != inst.rounds() {
        return Err(OfflineError::BadRealization(
            0,
            real.arrivals.len(),
            inst.rounds(),
        ));
    }
    for (t, round) in real.arrivals.iter().enumerate() {
        if round.len() != inst.arrivals.batch_sizes[t] && !round.is_empty() {
            return Err(OfflineError::BadRealization(
                t,
                round.len(),
                inst.arrivals.batch_sizes[t],
            ));
        }
    }
    let mut search = Search::new(inst, catalog, real);
    search.dfs(0, 0, 0.0)?;
    Ok(OfflineResult {
        value: search.best,
        assignments: search.best_assign,
    })
}

fn multinomial(b: usize, counts: &[usize]) -> f64 {
    let mut ln = 0.0f64;
    let lnfact = |n: usize| (1..=n).map(|i| (i as f64).ln()).sum::<f64>();
    ln += lnfact(b);
    for &k in counts {
        ln -= lnfact(k);
    }
    ln.exp()
}

fn compositions(b: usize, parts: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; parts];
    fn rec(b: usize, i: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == cur.len() - 1 {
            cur[i] = b;
            out.push(cur.clone());
            return;
        }
        for k in 0..=b {
            cur[i] = k;
            rec(b - k, i + 1, cur, out);
        }
    }
    rec(b, 0, &mut cur, &mut out);
    out
}

/// Exact expectation of the offline optimum over the arrival distribution.
/// Realizations with the same per-round type counts share an optimum, so the
/// enumeration runs over count vectors weighted by multinomial probabilities.
pub fn expected_offline_optimal(
    inst: &Instance,
    catalog: &GroupCatalog,
) -> Result<f64, OfflineError> {
    let nv = inst.num_types();
    let nt = inst.rounds();
    let mut total: u64 = 1;
    for t in 0..nt {
        let b = inst.arrivals.batch_sizes[t] as u64;
        let per_round = num_compositions(b, nv as u64).ok_or(OfflineError::TooManySequences(u64::MAX))?;
        total = total
            .checked_mul(per_round)
            .ok_or(OfflineError::TooManySequences(u64::MAX))?;
        if total > SEQUENCE_LIMIT {
            return Err(OfflineError::TooManySequences(total));
        }
    }
    let per_round: Vec<Vec<(Vec<usize>, f64)>> = (0..nt)
        .map(|t| {
            let b = inst.arrivals.batch_sizes[t];
            compositions(b, nv)
                .into_iter()
                .map(|k| {
                    let mut p = multinomial(b, &k);
                    for (v, &n) in k.iter().enumerate() {
                        p *= inst.arrivals.probs[t][v].powi(n as i32);
                    }
                    (k, p)
                })
                .collect()
        })
        .collect();

    let mut value = 0.0f64;
    let mut arrivals: Vec<Vec<usize>> = vec![Vec::new(); nt];
    fn rec(
        inst: &Instance,
        catalog: &GroupCatalog,
        per_round: &[Vec<(Vec<usize>, f64)>],
        t: usize,
        prob: f64,
        arrivals: &mut Vec<Vec<usize>>,
        value: &mut f64,
    ) -> Result<(), OfflineError> {
        if t == per_round.len() {
            if prob > 0.0 {
                let res = offline_optimal_fixed(
                    inst,
                    catalog,
                    &Realization {
                        arrivals: arrivals.clone(),
                    },
                )?;
                *value += prob * res.value;
            }
            return Ok(());
        }
        for (k, p) in &per_round[t] {
            if *p == 0.0 {
                continue;
            }
            arrivals[t] = k
                .iter()
                .enumerate()
                .flat_map(|(v, &n)| std::iter::repeat(v).take(n))
                .collect();
            rec(inst, catalog, per_round, t + 1, prob * p, arrivals, value)?;
            arrivals[t].clear();
        }
        Ok(())
    }
    rec(inst, catalog, &per_round, 0, 1.0, &mut arrivals, &mut value)?;
    Ok(value)
}

fn num_compositions(b: u64, parts: u64) -> Option<u64> {
    // C(b + parts - 1, parts - 1)
    let n = b.checked_add(parts - 1)?;
    let k = (parts - 1).min(n - (parts - 1));
    let mut r: u64 = 1;
    for i in 0..k {
        r = r.checked_mul(n - i)?;
        r /= i + 1;
    }
    Some(r)
}

#[derive(Debug, Clone)]
pub struct RoundMatching {
    /// `(resource, group index)` pairs, vertex-disjoint within the round.
    pub assignments: Vec<(usize, usize)>,
    pub value: f64,
    /// False when the node cap forced the best-first fallback.
    pub exact: bool,
}

/// Maximum-weight assignment of the currently free resources to groups
/// formable from the remaining type counts, for round `t` only.
pub fn greedy_matching_ilp(
    inst: &Instance,
    catalog: &GroupCatalog,
    t: usize,
    free: &[usize],
    counts: &[usize],
) -> RoundMatching {
    struct R<'a> {
        inst: &'a Instance,
        catalog: &'a GroupCatalog,
        t: usize,
        free: &'a [usize],
        counts: Vec<usize>,
        wmax: Vec<f64>,
        nodes: usize,
        capped: bool,
        best: f64,
        best_assign: Vec<(usize, usize)>,
        current: Vec<(usize, usize)>,
    }
    impl R<'_> {
        fn dfs(&mut self, i: usize, value: f64) {
            self.nodes += 1;
            if self.nodes > NODE_LIMIT {
                self.capped = true;
                return;
            }
            if i == self.free.len() {
                if value > self.best {
                    self.best = value;
                    self.best_assign = self.current.clone();
                }
                return;
            }
            let tail: f64 = self.wmax[i..].iter().sum();
            if value + tail <= self.best {
                return;
            }
            self.dfs(i + 1, value);
            let u = self.free[i];
            for g in 0..self.catalog.len() {
                if self.capped {
                    return;
                }
                let group = self.catalog.group(g);
                if group
                    .multiplicities()
                    .iter()
                    .any(|&(v, n)| self.counts[v] < n)
                {
                    continue;
                }
                let w = self.inst.weights.get(u, g, self.t);
                for &(v, n) in &group.multiplicities() {
                    self.counts[v] -= n;
                }
                self.current.push((u, g));
                self.dfs(i + 1, value + w);
                self.current.pop();
                for &(v, n) in &group.multiplicities() {
                    self.counts[v] += n;
                }
            }
        }
    }
    let wmax: Vec<f64> = free
        .iter()
        .map(|&u| {
            (0..catalog.len())
                .map(|g| inst.weights.get(u, g, t))
                .fold(0.0f64, f64::max)
        })
        .collect();
    let mut r = R {
        inst,
        catalog,
        t,
        free,
        counts: counts.to_vec(),
        wmax,
        nodes: 0,
        capped: false,
        best: 0.0,
        best_assign: Vec::new(),
        current: Vec::new(),
    };
    r.dfs(0, 0.0);
    if !r.capped {
        return RoundMatching {
            assignments: r.best_assign,
            value: r.best,
            exact: true,
        };
    }
    // Best-first fallback: repeatedly take the heaviest feasible pair.
    let mut remaining = counts.to_vec();
    let mut used = vec![false; inst.num_resources()];
    let mut assignments = Vec::new();
    let mut value = 0.0;
    loop {
        let mut pick: Option<(usize, usize, f64)> = None;
        for &u in free {
            if used[u] {
                continue;
            }
            for g in 0..catalog.len() {
                if catalog
                    .group(g)
                    .multiplicities()
                    .iter()
                    .any(|&(v, n)| remaining[v] < n)
                {
                    continue;
                }
                let w = inst.weights.get(u, g, t);
                if w > 0.0 && pick.map_or(true, |(_, _, bw)| w > bw) {
                    pick = Some((u, g, w));
                }
            }
        }
        let Some((u, g, w)) = pick else { break };
        used[u] = true;
        for &(v, n) in &catalog.group(g).multiplicities() {
            remaining[v] -= n;
        }
        assignments.push((u, g));
        value += w;
    }
    RoundMatching {
        assignments,
        value,
        exact: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        ArrivalModel, Instance, Metadata, Occupancy, OccupancyModel, Resource, VertexType,
        WeightModel,
    };

    fn inst_kappa2_pair() -> (Instance, GroupCatalog) {
        let inst = Instance {
            kappa: 2,
            resources: vec![Resource { id: 0, capacity: 2 }],
            vertex_types: vec![VertexType { id: 0, label: None }],
            arrivals: ArrivalModel {
                rounds: 1,
                batch_sizes: vec![2],
                probs: vec![vec![1.0]],
            },
            weights: WeightModel {
                constant: vec![(0, 0, 1.0), (0, 1, 2.0)],
                per_round: vec![],
            },
            occupancy: OccupancyModel::uniform(Occupancy::Constant(1)),
            null_type: None,
            allow_small_batches: true,
            metadata: Metadata::default(),
        };
        let cat = GroupCatalog::build(1, 2).unwrap();
        (inst, cat)
    }

    #[test]
    fn pair_dominates_singleton() {
        let (inst, cat) = inst_kappa2_pair();
        let real = Realization {
            arrivals: vec![vec![0, 0]],
        };
        let res = offline_optimal_fixed(&inst, &cat, &real).unwrap();
        assert_eq!(res.value, 2.0);
        assert_eq!(res.assignments, vec![(0, 0, 1)]);
    }

    #[test]
    fn occupancy_blocks_second_round() {
        let inst = Instance {
            kappa: 1,
            resources: vec![Resource { id: 0, capacity: 1 }],
            vertex_types: vec![VertexType { id: 0, label: None }],
            arrivals: ArrivalModel {
                rounds: 2,
                batch_sizes: vec![1, 1],
                probs: vec![vec![1.0]; 2],
            },
            weights: WeightModel {
                constant: vec![(0, 0, 1.0)],
                per_round: vec![],
            },
            occupancy: OccupancyModel::uniform(Occupancy::Constant(2)),
            null_type: None,
            allow_small_batches: true,
            metadata: Metadata::default(),
        };
        let cat = GroupCatalog::build(1, 1).unwrap();
        let real = Realization {
            arrivals: vec![vec![0], vec![0]],
        };
        let res = offline_optimal_fixed(&inst, &cat, &real).unwrap();
        assert_eq!(res.value, 1.0);
    }

    #[test]
    fn empty_arrivals_zero_value() {
        let (inst, cat) = inst_kappa2_pair();
        let real = Realization {
            arrivals: vec![vec![]],
        };
        let res = offline_optimal_fixed(&inst, &cat, &real).unwrap();
        assert_eq!(res.value, 0.0);
        assert!(res.assignments.is_empty());
    }

    #[test]
    fn expected_optimum_deterministic_arrivals() {
        let (inst, cat) = inst_kappa2_pair();
        let exp = expected_offline_optimal(&inst, &cat).unwrap();
        let fixed = offline_optimal_fixed(
            &inst,
            &cat,
            &Realization {
                arrivals: vec![vec![0, 0]],
            },
        )
        .unwrap();
        assert!((exp - fixed.value).abs() < 1e-12);
    }

    #[test]
    fn expected_optimum_two_types() {
        let inst = Instance {
            kappa: 1,
            resources: vec![Resource { id: 0, capacity: 1 }],
            vertex_types: (0..2).map(|id| VertexType { id, label: None }).collect(),
            arrivals: ArrivalModel {
                rounds: 1,
                batch_sizes: vec![1],
                probs: vec![vec![0.5, 0.5]],
            },
            weights: WeightModel {
                constant: vec![(0, 0, 2.0)],
                per_round: vec![],
            },
            occupancy: OccupancyModel::uniform(Occupancy::Constant(1)),
            null_type: None,
            allow_small_batches: true,
            metadata: Metadata::default(),
        };
        let cat = GroupCatalog::build(2, 1).unwrap();
        let exp = expected_offline_optimal(&inst, &cat).unwrap();
        assert!((exp - 1.0).abs() < 1e-12);
    }

    #[test]
    fn round_matching_resolves_conflicts() {
        // Two resources, one shared vertex: only the heavier group fits.
        let inst = Instance {
            kappa: 2,
            resources: (0..2).map(|id| Resource { id, capacity: 2 }).collect(),
            vertex_types: (0..2).map(|id| VertexType { id, label: None }).collect(),
            arrivals: ArrivalModel {
                rounds: 1,
                batch_sizes: vec![2],
                probs: vec![vec![0.5, 0.5]],
            },
            // Catalog (2 types, kappa 2): {0}=0, {1}=1, {0,0}=2, {0,1}=3, {1,1}=4.
            weights: WeightModel {
                constant: vec![(0, 3, 3.0), (1, 1, 2.0)],
                per_round: vec![],
            },
            occupancy: OccupancyModel::uniform(Occupancy::Constant(1)),
            null_type: None,
            allow_small_batches: true,
            metadata: Metadata::default(),
        };
        let cat = GroupCatalog::build(2, 2).unwrap();
        // Realized counts: one of each type. Groups {0,1} (w=3 on u0) and
        // {1} (w=2 on u1) share vertex type 1.
        let m = greedy_matching_ilp(&inst, &cat, 0, &[0, 1], &[1, 1]);
        assert!(m.exact);
        assert_eq!(m.value, 3.0);
        assert_eq!(m.assignments, vec![(0, 3)]);
        // Disjoint supply: both assigned.
        let m = greedy_matching_ilp(&inst, &cat, 0, &[0, 1], &[1, 2]);
        assert_eq!(m.value, 5.0);
        assert_eq!(m.assignments.len(), 2);
        // No free resources.
        let m = greedy_matching_ilp(&inst, &cat, 0, &[], &[1, 1]);
        assert_eq!(m.value, 0.0);
        assert!(m.assignments.is_empty());
    }

    #[test]
    fn round_matching_matches_single_round_oracle() {
        let (inst, cat) = inst_kappa2_pair();
        let real = Realization {
            arrivals: vec![vec![0, 0]],
        };
        let oracle = offline_optimal_fixed(&inst, &cat, &real).unwrap();
        let m = greedy_matching_ilp(&inst, &cat, 0, &[0], &[2]);
        assert_eq!(m.value, oracle.value);
    }
}
