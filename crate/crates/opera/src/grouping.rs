//! Group-type combinatorics: enumeration of vertex-type multisets up to the
//! capacity, the per-round formation counts `h` and expectations `q`, and the
//! canonical step lattice that visits every concrete group of a realized batch
//! exactly once.

use std::collections::HashMap;
use std::io::Write;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GroupError {
    #[error("kappa must be >= 1 (got {0})")]
    BadKappa(usize),
    #[error("num_types must be >= 1 (got {0})")]
    BadNumTypes(usize),
    #[error("group-type count exceeds 2^62 for num_types={num_types}, kappa={kappa}")]
    CountOverflow { num_types: usize, kappa: usize },
    #[error("catalog would hold {count} group types (limit {limit}); supply a pruning predicate")]
    CatalogTooLarge { count: u64, limit: u64 },
    #[error("group of size {size} cannot form in a batch of {batch} arrivals")]
    BatchTooSmall { size: usize, batch: usize },
}

/// A multiset of vertex-type ids of cardinality `1..=kappa`, stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupType {
    members: Vec<usize>,
}

impl GroupType {
    pub fn new(mut members: Vec<usize>) -> GroupType {
        members.sort_unstable();
        GroupType { members }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn size(&self) -> usize {
        self.members.len()
    }

    /// `(type, multiplicity)` pairs in ascending type order.
    pub fn multiplicities(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = Vec::new();
        for &m in &self.members {
            match out.last_mut() {
                Some((v, n)) if *v == m => *n += 1,
                _ => out.push((m, 1)),
            }
        }
        out
    }

    pub fn multiplicity_of(&self, v: usize) -> usize {
        self.members.iter().filter(|m| **m == v).count()
    }

    pub fn contains(&self, v: usize) -> bool {
        self.members.binary_search(&v).is_ok()
    }
}

const CATALOG_LIMIT: u64 = 1_000_000;

fn binom(n: u64, k: u64) -> Option<u64> {
    let mut r: u64 = 1;
    for i in 0..k {
        r = r.checked_mul(n.checked_sub(i)?)?;
        r /= i + 1;
    }
    Some(r)
}

/// `sum_{k=1..kappa} C(num_types + k - 1, k)`, the number of multisets of each
/// cardinality up to `kappa`. Fails loudly beyond 2^62.
pub fn count_group_types(num_types: usize, kappa: usize) -> Result<u64, GroupError> {
    if kappa < 1 {
        return Err(GroupError::BadKappa(kappa));
    }
    if num_types < 1 {
        return Err(GroupError::BadNumTypes(num_types));
    }
    let mut total: u64 = 0;
    for k in 1..=kappa as u64 {
        let c = binom(num_types as u64 + k - 1, k)
            .ok_or(GroupError::CountOverflow { num_types, kappa })?;
        total = total
            .checked_add(c)
            .ok_or(GroupError::CountOverflow { num_types, kappa })?;
        if total > (1 << 62) {
            return Err(GroupError::CountOverflow { num_types, kappa });
        }
    }
    Ok(total)
}

/// Every multiset of cardinality `1..=kappa` exactly once, size-major and
/// lexicographic within a size. An optional predicate prunes groups as they
/// are generated; without one, catalogs beyond 10^6 entries are refused.
pub fn enumerate_group_types_filtered(
    num_types: usize,
    kappa: usize,
    filter: Option<&dyn Fn(&GroupType) -> bool>,
) -> Result<Vec<GroupType>, GroupError> {
    if kappa < 1 {
        return Err(GroupError::BadKappa(kappa));
    }
    if num_types < 1 {
        return Err(GroupError::BadNumTypes(num_types));
    }
    if filter.is_none() {
        let count = count_group_types(num_types, kappa)?;
        if count > CATALOG_LIMIT {
            return Err(GroupError::CatalogTooLarge {
                count,
                limit: CATALOG_LIMIT,
            });
        }
    }
    let mut out = Vec::new();
    let mut current = Vec::new();
    for size in 1..=kappa {
        gen_multisets(num_types, size, 0, &mut current, filter, &mut out)?;
    }
    Ok(out)
}

fn gen_multisets(
    num_types: usize,
    remaining: usize,
    min_type: usize,
    current: &mut Vec<usize>,
    filter: Option<&dyn Fn(&GroupType) -> bool>,
    out: &mut Vec<GroupType>,
) -> Result<(), GroupError> {
    if remaining == 0 {
        let g = GroupType {
            members: current.clone(),
        };
        if filter.map_or(true, |f| f(&g)) {
            if out.len() as u64 >= CATALOG_LIMIT {
                return Err(GroupError::CatalogTooLarge {
                    count: out.len() as u64 + 1,
                    limit: CATALOG_LIMIT,
                });
            }
            out.push(g);
        }
        return Ok(());
    }
    for v in min_type..num_types {
        current.push(v);
        gen_multisets(num_types, remaining - 1, v, current, filter, out)?;
        current.pop();
    }
    Ok(())
}

pub fn enumerate_group_types(num_types: usize, kappa: usize) -> Result<Vec<GroupType>, GroupError> {
    enumerate_group_types_filtered(num_types, kappa, None)
}

/// Immutable group catalog with stable indices, generated once per instance.
#[derive(Debug, Clone)]
pub struct GroupCatalog {
    pub num_types: usize,
    pub kappa: usize,
    groups: Vec<GroupType>,
    index: HashMap<Vec<usize>, usize>,
}

impl GroupCatalog {
    pub fn build(num_types: usize, kappa: usize) -> Result<GroupCatalog, GroupError> {
        let groups = enumerate_group_types(num_types, kappa)?;
        let index = groups
            .iter()
            .enumerate()
            .map(|(i, g)| (g.members.clone(), i))
            .collect();
        Ok(GroupCatalog {
            num_types,
            kappa,
            groups,
            index,
        })
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn group(&self, idx: usize) -> &GroupType {
        &self.groups[idx]
    }

    pub fn groups(&self) -> &[GroupType] {
        &self.groups
    }

    /// Index of the multiset given by `members` (any order).
    pub fn index_of(&self, members: &[usize]) -> Option<usize> {
        let mut m = members.to_vec();
        m.sort_unstable();
        self.index.get(&m).copied()
    }

    /// CSV export: (group_index, members, size, multiplicities).
    pub fn export_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "group_index,members,size,multiplicities")?;
        for (i, g) in self.groups.iter().enumerate() {
            let members = g
                .members
                .iter()
                .map(|m| m.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            let mults = g
                .multiplicities()
                .iter()
                .map(|(v, n)| format!("{v}:{n}"))
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(w, "{i},{members},{},{mults}", g.size())?;
        }
        Ok(())
    }
}

/// Number of step-lattice positions at which a group of this type is
/// considered across arrival orders: `b(b-1)...(b-|g|+1) / prod_v n_v!`.
/// Requires a batch strictly larger than the group.
pub fn h_factor(g: &GroupType, b: usize) -> Result<u64, GroupError> {
    if b <= g.size() {
        return Err(GroupError::BatchTooSmall {
            size: g.size(),
            batch: b,
        });
    }
    Ok(h_factor_lenient(g, b))
}

/// As [`h_factor`] but defined for every batch size: zero when the group
/// cannot form (`b < |g|`), the plain falling-factorial ratio otherwise.
pub fn h_factor_lenient(g: &GroupType, b: usize) -> u64 {
    let s = g.size();
    if b < s {
        return 0;
    }
    let mut num: u64 = 1;
    for i in 0..s as u64 {
        num *= b as u64 - i;
    }
    let mut den: u64 = 1;
    for (_, n) in g.multiplicities() {
        for i in 2..=n as u64 {
            den *= i;
        }
    }
    num / den
}

/// Expected number of formable groups of type `g` per round:
/// `q = h * prod_v p_v^{n_v}`.
pub fn expected_group_count(g: &GroupType, probs: &[f64], b: usize) -> f64 {
    let mut q = h_factor_lenient(g, b) as f64;
    for &v in g.members() {
        q *= probs[v];
    }
    q
}

/// Expected number of arrivals of type `v` per round: `b * p_v`.
pub fn expected_vertex_count(v: usize, probs: &[f64], b: usize) -> f64 {
    b as f64 * probs[v]
}

/// What happens at one step of the lattice for a realized batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StepAction {
    /// First visit of this concrete group: the policy considers it here.
    /// `labels` are the participating batch positions in canonical order.
    Process {
        members: GroupType,
        labels: Vec<usize>,
    },
    /// Valid step shape, but a duplicate visit of a group already processed
    /// at an earlier step.
    Skip,
    /// The tuple does not encode a group at all.
    Idle,
}

/// Resolve one step tuple against realized batch types (`types[label]`).
///
/// A tuple encodes a group when it consists of a distinct prefix followed by
/// repeats of the prefix's last entry; the prefix labels are the group. The
/// group is processed only at the step whose prefix lists its labels sorted
/// by (type id, label) — every other ordering is a duplicate visit.
pub fn group_of_step(step: &[usize], types: &[usize]) -> StepAction {
    let kappa = step.len();
    debug_assert!(kappa >= 1);
    let mut s = 1;
    while s < kappa && !step[..s].contains(&step[s]) {
        s += 1;
    }
    if step[s..].iter().any(|&l| l != step[s - 1]) {
        return StepAction::Idle;
    }
    let labels = &step[..s];
    for w in labels.windows(2) {
        let (a, b) = (w[0], w[1]);
        if (types[a], a) >= (types[b], b) {
            return StepAction::Skip;
        }
    }
    StepAction::Process {
        members: GroupType::new(labels.iter().map(|&l| types[l]).collect()),
        labels: labels.to_vec(),
    }
}

/// Whether any realization lets `g` be processed at this step: the tuple must
/// encode a group of `g`'s size, and wherever `g` repeats a type the
/// corresponding prefix labels must already be in increasing order.
pub fn pattern_possible(g: &GroupType, step: &[usize]) -> bool {
    let kappa = step.len();
    let mut s = 1;
    while s < kappa && !step[..s].contains(&step[s]) {
        s += 1;
    }
    if step[s..].iter().any(|&l| l != step[s - 1]) {
        return false;
    }
    if s != g.size() {
        return false;
    }
    let m = g.members();
    for j in 0..s.saturating_sub(1) {
        if m[j] == m[j + 1] && step[j] >= step[j + 1] {
            return false;
        }
    }
    true
}

/// All `b^kappa` step tuples in lexicographic order.
pub fn step_lattice(b: usize, kappa: usize) -> StepLattice {
    StepLattice {
        b,
        kappa,
        next: Some(vec![0; kappa]),
    }
}

pub fn num_steps(b: usize, kappa: usize) -> usize {
    b.pow(kappa as u32)
}

/// Rank of a step tuple in lexicographic order.
pub fn step_rank(step: &[usize], b: usize) -> usize {
    step.iter().fold(0, |acc, &l| acc * b + l)
}

pub struct StepLattice {
    b: usize,
    kappa: usize,
    next: Option<Vec<usize>>,
}

impl Iterator for StepLattice {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        for i in (0..self.kappa).rev() {
            if succ[i] + 1 < self.b {
                succ[i] += 1;
                self.next = Some(succ);
                break;
            }
            succ[i] = 0;
        }
        Some(current)
    }
}
