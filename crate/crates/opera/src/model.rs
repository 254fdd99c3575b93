//! Problem data model: resources, vertex types, arrival distributions,
//! weights, occupancy distributions, and instance validation.
//!
//! An [`Instance`] is immutable after validation and safe to share read-only
//! across parallel simulation workers. Weight and occupancy tables are sparse:
//! a `(u, g)` entry with no round index applies to every round, per-round
//! entries override it, and missing entries mean weight zero / the default
//! occupancy distribution.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grouping;

/// A request class. For trip data this is an origin-destination cell pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexType {
    pub id: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// A reusable server (vehicle). All resources in an instance share one capacity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resource {
    pub id: usize,
    pub capacity: usize,
}

/// Round-indexed arrival distributions: `probs[t][v]` is the probability that
/// a single arrival in round `t` has type `v`; `batch_sizes[t]` arrivals are
/// drawn iid per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalModel {
    pub rounds: usize,
    pub batch_sizes: Vec<usize>,
    pub probs: Vec<Vec<f64>>,
}

/// Distribution of the number of rounds a resource stays busy after an
/// assignment. The constant form is the common case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Occupancy {
    Constant(usize),
    Categorical {
        support: Vec<usize>,
        probs: Vec<f64>,
    },
}

impl Occupancy {
    /// Pr[duration > d].
    pub fn survival(&self, d: usize) -> f64 {
        match self {
            Occupancy::Constant(c) => {
                if *c > d {
                    1.0
                } else {
                    0.0
                }
            }
            Occupancy::Categorical { support, probs } => support
                .iter()
                .zip(probs)
                .filter(|(s, _)| **s > d)
                .map(|(_, p)| *p)
                .sum(),
        }
    }

    /// Pr[duration = d].
    pub fn exit_prob(&self, d: usize) -> f64 {
        match self {
            Occupancy::Constant(c) => {
                if *c == d {
                    1.0
                } else {
                    0.0
                }
            }
            Occupancy::Categorical { support, probs } => support
                .iter()
                .zip(probs)
                .filter(|(s, _)| **s == d)
                .map(|(_, p)| *p)
                .sum(),
        }
    }

    pub fn as_constant(&self) -> Option<usize> {
        match self {
            Occupancy::Constant(c) => Some(*c),
            Occupancy::Categorical { .. } => None,
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> usize {
        match self {
            Occupancy::Constant(c) => *c,
            Occupancy::Categorical { support, probs } => {
                let r: f64 = rng.gen();
                let mut acc = 0.0;
                for (s, p) in support.iter().zip(probs) {
                    acc += p;
                    if r < acc {
                        return *s;
                    }
                }
                *support.last().expect("non-empty support")
            }
        }
    }

    fn check(&self, what: &str, out: &mut Vec<String>) {
        match self {
            Occupancy::Constant(c) => {
                if *c < 1 {
                    out.push(format!("{what}: constant occupancy must be >= 1"));
                }
            }
            Occupancy::Categorical { support, probs } => {
                if support.len() != probs.len() || support.is_empty() {
                    out.push(format!("{what}: support/probability length mismatch"));
                    return;
                }
                if support.iter().any(|s| *s < 1) {
                    out.push(format!("{what}: occupancy support values must be >= 1"));
                }
                let sum: f64 = probs.iter().sum();
                if (sum - 1.0).abs() > PROB_TOL {
                    out.push(format!("{what}: occupancy probabilities sum to {sum}, not 1"));
                }
                if probs.iter().any(|p| *p < 0.0) {
                    out.push(format!("{what}: negative occupancy probability"));
                }
            }
        }
    }
}

/// Sparse nonnegative weights per (resource, group type, round). Infeasible
/// pairings are encoded as absent entries, i.e. weight zero.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WeightModel {
    /// `(u, g, w)` entries applying to every round; sorted by `(u, g)`.
    pub constant: Vec<(usize, usize, f64)>,
    /// `(u, g, t, w)` entries overriding `constant`; sorted by `(u, g, t)`.
    pub per_round: Vec<(usize, usize, usize, f64)>,
}

impl WeightModel {
    pub fn get(&self, u: usize, g: usize, t: usize) -> f64 {
        if let Ok(i) = self
            .per_round
            .binary_search_by(|e| (e.0, e.1, e.2).cmp(&(u, g, t)))
        {
            return self.per_round[i].3;
        }
        match self.constant.binary_search_by(|e| (e.0, e.1).cmp(&(u, g))) {
            Ok(i) => self.constant[i].2,
            Err(_) => 0.0,
        }
    }

    pub fn sort(&mut self) {
        self.constant.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        self.per_round
            .sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
    }
}

/// Sparse occupancy distributions per (resource, group type, round) over a
/// shared default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyModel {
    pub default: Occupancy,
    /// `(u, g, occupancy)` entries applying to every round; sorted by `(u, g)`.
    pub constant: Vec<(usize, usize, Occupancy)>,
    /// `(u, g, t, occupancy)` overrides; sorted by `(u, g, t)`.
    pub per_round: Vec<(usize, usize, usize, Occupancy)>,
}

impl OccupancyModel {
    pub fn uniform(default: Occupancy) -> Self {
        OccupancyModel {
            default,
            constant: Vec::new(),
            per_round: Vec::new(),
        }
    }

    pub fn get(&self, u: usize, g: usize, t: usize) -> &Occupancy {
        if let Ok(i) = self
            .per_round
            .binary_search_by(|e| (e.0, e.1, e.2).cmp(&(u, g, t)))
        {
            return &self.per_round[i].3;
        }
        match self.constant.binary_search_by(|e| (e.0, e.1).cmp(&(u, g))) {
            Ok(i) => &self.constant[i].2,
            Err(_) => &self.default,
        }
    }

    pub fn sort(&mut self) {
        self.constant.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        self.per_round
            .sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Full problem description. Group-type indices in the weight and occupancy
/// tables refer to the canonical enumeration of [`crate::grouping`] for
/// `(num_types, kappa)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub kappa: usize,
    pub resources: Vec<Resource>,
    pub vertex_types: Vec<VertexType>,
    pub arrivals: ArrivalModel,
    pub weights: WeightModel,
    pub occupancy: OccupancyModel,
    /// Index of the reserved zero-weight padding type, if present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_type: Option<usize>,
    /// Permit batch sizes <= kappa (the model normally assumes b^t > kappa).
    #[serde(default)]
    pub allow_small_batches: bool,
    #[serde(default)]
    pub metadata: Metadata,
}

pub const PROB_TOL: f64 = 1e-9;

impl Instance {
    pub fn num_resources(&self) -> usize {
        self.resources.len()
    }

    pub fn num_types(&self) -> usize {
        self.vertex_types.len()
    }

    pub fn rounds(&self) -> usize {
        self.arrivals.rounds
    }

    /// Serialize to canonical JSON: compact, fixed field order, sorted sparse
    /// tables. Serializing a deserialized instance is byte-identical.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("instance serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Instance, serde_json::Error> {
        serde_json::from_str(s)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every structural invariant of the instance. A passing instance is
/// accepted by all downstream operations.
pub fn validate_instance(inst: &Instance) -> ValidationReport {
    let mut v = Vec::new();
    let nu = inst.num_resources();
    let nv = inst.num_types();
    let t_rounds = inst.rounds();

    if inst.kappa < 1 {
        v.push("kappa must be >= 1".to_string());
    }
    if nu == 0 {
        v.push("instance has no resources".to_string());
    }
    if nv == 0 {
        v.push("instance has no vertex types".to_string());
    }
    if t_rounds == 0 {
        v.push("instance has no rounds".to_string());
    }
    for (i, r) in inst.resources.iter().enumerate() {
        if r.id != i {
            v.push(format!("resource ids not dense: position {i} has id {}", r.id));
        }
        if r.capacity != inst.kappa {
            v.push(format!(
                "resource {} has capacity {}, expected the shared kappa {}",
                r.id, r.capacity, inst.kappa
            ));
        }
    }
    for (i, t) in inst.vertex_types.iter().enumerate() {
        if t.id != i {
            v.push(format!("vertex type ids not dense: position {i} has id {}", t.id));
        }
    }
    if let Some(nt) = inst.null_type {
        if nt >= nv {
            v.push(format!("null type index {nt} out of range"));
        }
    }

    if inst.arrivals.batch_sizes.len() != t_rounds {
        v.push(format!(
            "batch_sizes has length {}, expected {} rounds",
            inst.arrivals.batch_sizes.len(),
            t_rounds
        ));
    }
    if inst.arrivals.probs.len() != t_rounds {
        v.push(format!(
            "arrival probs has {} rows, expected {} rounds",
            inst.arrivals.probs.len(),
            t_rounds
        ));
    }
    for (t, &b) in inst.arrivals.batch_sizes.iter().enumerate() {
        if b < 1 {
            v.push(format!("batch size must be >= 1 at t={t}"));
        }
        if b <= inst.kappa && !inst.allow_small_batches {
            v.push(format!(
                "batch size {b} at t={t} violates the b^t > kappa assumption \
                 (set allow_small_batches to relax)"
            ));
        }
    }
    for (t, row) in inst.arrivals.probs.iter().enumerate() {
        if row.len() != nv {
            v.push(format!("arrival row at t={t} has length {}, expected {nv}", row.len()));
            continue;
        }
        if row.iter().any(|p| *p < 0.0 || *p > 1.0 || !p.is_finite()) {
            v.push(format!("arrival probability out of [0,1] at t={t}"));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > PROB_TOL {
            v.push(format!("arrival probabilities do not sum to 1 at t={t} (sum {sum})"));
        }
    }

    let ng = match grouping::count_group_types(nv.max(1), inst.kappa.max(1)) {
        Ok(n) => n as usize,
        Err(e) => {
            v.push(format!("group catalog size: {e}"));
            usize::MAX
        }
    };
    let check_ugt = |u: usize, g: usize, t: Option<usize>, what: &str, out: &mut Vec<String>| {
        if u >= nu {
            out.push(format!("{what}: resource index {u} out of range"));
        }
        if g >= ng {
            out.push(format!("{what}: group index {g} out of range"));
        }
        if let Some(t) = t {
            if t >= t_rounds {
                out.push(format!("{what}: round index {t} out of range"));
            }
        }
    };
    for w in &inst.weights.constant {
        check_ugt(w.0, w.1, None, "weight", &mut v);
        if w.2 < 0.0 || !w.2.is_finite() {
            v.push(format!("weight ({},{}) is negative or non-finite", w.0, w.1));
        }
    }
    for w in &inst.weights.per_round {
        check_ugt(w.0, w.1, Some(w.2), "weight", &mut v);
        if w.3 < 0.0 || !w.3.is_finite() {
            v.push(format!("weight ({},{},{}) is negative or non-finite", w.0, w.1, w.2));
        }
    }
    if !inst.weights.constant.windows(2).all(|p| (p[0].0, p[0].1) < (p[1].0, p[1].1)) {
        v.push("constant weight entries not sorted/unique by (u,g)".to_string());
    }
    if !inst
        .weights
        .per_round
        .windows(2)
        .all(|p| (p[0].0, p[0].1, p[0].2) < (p[1].0, p[1].1, p[1].2))
    {
        v.push("per-round weight entries not sorted/unique by (u,g,t)".to_string());
    }

    inst.occupancy.default.check("default occupancy", &mut v);
    for o in &inst.occupancy.constant {
        check_ugt(o.0, o.1, None, "occupancy", &mut v);
        o.2.check(&format!("occupancy ({},{})", o.0, o.1), &mut v);
    }
    for o in &inst.occupancy.per_round {
        check_ugt(o.0, o.1, Some(o.2), "occupancy", &mut v);
        o.3.check(&format!("occupancy ({},{},{})", o.0, o.1, o.2), &mut v);
    }

    ValidationReport { violations: v }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_instance() -> Instance {
        Instance {
            kappa: 1,
            resources: (0..2).map(|id| Resource { id, capacity: 1 }).collect(),
            vertex_types: (0..2).map(|id| VertexType { id, label: None }).collect(),
            arrivals: ArrivalModel {
                rounds: 3,
                batch_sizes: vec![2, 2, 2],
                probs: vec![vec![0.5, 0.5]; 3],
            },
            weights: WeightModel {
                constant: vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 0.5)],
                per_round: vec![(1, 1, 2, 3.0)],
            },
            occupancy: OccupancyModel::uniform(Occupancy::Constant(1)),
            null_type: None,
            allow_small_batches: false,
            metadata: Metadata::default(),
        }
    }

    #[test]
    fn well_formed_instance_passes() {
        let report = validate_instance(&tiny_instance());
        assert!(report.passed(), "{:?}", report.violations);
    }

    #[test]
    fn bad_probability_row_fails() {
        let mut inst = tiny_instance();
        inst.arrivals.probs[0] = vec![0.5, 0.4];
        let report = validate_instance(&inst);
        assert!(report
            .violations
            .iter()
            .any(|m| m.contains("do not sum to 1 at t=0")));
    }

    #[test]
    fn small_batch_without_flag_fails() {
        let mut inst = tiny_instance();
        inst.kappa = 2;
        for r in &mut inst.resources {
            r.capacity = 2;
        }
        inst.arrivals.batch_sizes = vec![2, 2, 2];
        let report = validate_instance(&inst);
        assert!(report.violations.iter().any(|m| m.contains("b^t > kappa")));
        inst.allow_small_batches = true;
        assert!(validate_instance(&inst).passed());
    }

    #[test]
    fn json_round_trip_is_byte_identical() {
        let inst = tiny_instance();
        let first = inst.to_canonical_json();
        let back = Instance::from_json(&first).unwrap();
        assert_eq!(back, inst);
        assert_eq!(back.to_canonical_json(), first);
    }

    #[test]
    fn weight_lookup_layers() {
        let inst = tiny_instance();
        assert_eq!(inst.weights.get(0, 1, 0), 2.0);
        assert_eq!(inst.weights.get(1, 1, 2), 3.0);
        assert_eq!(inst.weights.get(1, 1, 1), 0.0);
    }

    #[test]
    fn occupancy_survival_and_exit() {
        let c = Occupancy::Constant(2);
        assert_eq!(c.survival(0), 1.0);
        assert_eq!(c.survival(1), 1.0);
        assert_eq!(c.survival(2), 0.0);
        assert_eq!(c.exit_prob(2), 1.0);
        let cat = Occupancy::Categorical {
            support: vec![1, 3],
            probs: vec![0.25, 0.75],
        };
        assert!((cat.survival(1) - 0.75).abs() < 1e-12);
        assert!((cat.exit_prob(1) - 0.25).abs() < 1e-12);
        assert_eq!(cat.survival(3), 0.0);
    }
}
