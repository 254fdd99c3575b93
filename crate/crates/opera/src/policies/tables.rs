//! Bootstrapped Monte Carlo estimation of the adaptive policies' safety
//! probabilities: `beta[u, t, step]` (resource idle) and `pavail[g, t, step]`
//! (group canonically formable with all members unconsumed).
//!
//! Estimation runs N episodes in lockstep. At each `(round, step)` cell the
//! empirical frequencies across the population are written first and the
//! per-episode decisions are then taken using exactly those values, so the
//! tables are self-consistent with the policy that consumes them.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::grouping::{self, GroupCatalog, StepAction};
use crate::lp::XStar;
use crate::model::Instance;
use crate::rng::{self, Purpose};

#[derive(Debug, Clone)]
pub struct PolicyTables {
    pub gamma: f64,
    pub samples: usize,
    /// Estimation-time clamp activations (sampling mass above one).
    pub clamp_events: usize,
    nu: usize,
    ng: usize,
    kappa: usize,
    /// Step-cell offset per round (batch sizes may vary).
    offsets: Vec<usize>,
    total_steps: usize,
    beta: Vec<f64>,
    pavail: Vec<f64>,
    /// Joint frequency of (step active with group g) and (resource u free),
    /// per (u, g, cell). The sampling rule divides by this joint rather than
    /// the product of the marginals: within a round the two events are
    /// positively correlated, and the product would overshoot the target
    /// match rate. Empty at capacity one, where the step event depends only
    /// on the current label's type and the product is exact.
    joint: Vec<f64>,
    /// Theory floor for `pavail` per (g, t): `(1-gamma)^kappa * prod p^n`.
    pfloor: Vec<f64>,
}

impl PolicyTables {
    fn cell(&self, t: usize, step: usize) -> usize {
        self.offsets[t] + step
    }

    pub fn num_steps(&self, t: usize) -> usize {
        let end = if t + 1 < self.offsets.len() {
            self.offsets[t + 1]
        } else {
            self.total_steps
        };
        end - self.offsets[t]
    }

    pub fn beta(&self, u: usize, t: usize, step: usize) -> f64 {
        debug_assert!(u < self.nu && step < self.num_steps(t));
        self.beta[u * self.total_steps + self.cell(t, step)]
    }

    pub fn pavail(&self, g: usize, t: usize, step: usize) -> f64 {
        debug_assert!(g < self.ng && step < self.num_steps(t));
        self.pavail[g * self.total_steps + self.cell(t, step)]
    }

    /// Binomial standard error of a frequency cell.
    pub fn stderr(&self, v: f64) -> f64 {
        (v * (1.0 - v) / self.samples as f64).sqrt()
    }

    pub fn beta_floor(&self) -> f64 {
        1.0 - self.gamma
    }

    pub fn pavail_floor(&self, g: usize, t: usize) -> f64 {
        self.pfloor[g * self.offsets.len() + t]
    }

    /// Estimates as consumed by the sampling rule: floored at the theory
    /// bounds so the rule stays defined on sparsely-hit cells.
    pub fn beta_for_rule(&self, u: usize, t: usize, step: usize) -> f64 {
        self.beta(u, t, step).max(self.beta_floor())
    }

    pub fn pavail_for_rule(&self, g: usize, t: usize, step: usize) -> f64 {
        self.pavail(g, t, step).max(self.pavail_floor(g, t))
    }

    /// Joint frequency of the step being active with group `g` while `u` is
    /// free (capacity two and above only).
    pub fn joint(&self, u: usize, g: usize, t: usize, step: usize) -> f64 {
        debug_assert!(self.kappa >= 2);
        self.joint[(u * self.ng + g) * self.total_steps + self.cell(t, step)]
    }

    /// The probability the sampling rule divides by (along with the
    /// arrangement factor): the floored joint activity/freeness estimate, or
    /// the exact `p_v * beta` product at capacity one.
    pub fn rule_denominator(&self, u: usize, g: usize, t: usize, step: usize) -> f64 {
        if self.kappa == 1 {
            self.pavail_for_rule(g, t, step) * self.beta_for_rule(u, t, step)
        } else {
            let floor = self.pavail_floor(g, t) * self.beta_floor();
            self.joint(u, g, t, step).max(floor)
        }
    }
}

struct EpisodeSim {
    free_at: Vec<usize>,
    types: Vec<usize>,
    consumed: Vec<bool>,
    arrival: ChaCha8Rng,
    policy: ChaCha8Rng,
    occupancy: ChaCha8Rng,
}

/// Estimate both tables for the adaptive policy with scaling `gamma` and LP
/// guidance `xstar`, from `samples` lockstep episodes.
pub fn estimate_tables(
    inst: &Instance,
    catalog: &GroupCatalog,
    xstar: &XStar,
    gamma: f64,
    samples: usize,
    seed: u64,
) -> PolicyTables {
    assert!(samples >= 1);
    let nu = inst.num_resources();
    let ng = catalog.len();
    let nt = inst.rounds();
    let kappa = inst.kappa;

    let mut offsets = Vec::with_capacity(nt);
    let mut total_steps = 0usize;
    for t in 0..nt {
        offsets.push(total_steps);
        total_steps += grouping::num_steps(inst.arrivals.batch_sizes[t], kappa);
    }
    let mut pfloor = vec![0.0f64; ng * nt];
    for g in 0..ng {
        for t in 0..nt {
            let mut f = (1.0 - gamma).powi(kappa as i32);
            for &v in catalog.group(g).members() {
                f *= inst.arrivals.probs[t][v];
            }
            pfloor[g * nt + t] = f;
        }
    }
    let h: Vec<Vec<f64>> = (0..nt)
        .map(|t| {
            (0..ng)
                .map(|g| {
                    grouping::h_factor_lenient(catalog.group(g), inst.arrivals.batch_sizes[t])
                        as f64
                })
                .collect()
        })
        .collect();

    let mut tables = PolicyTables {
        gamma,
        samples,
        clamp_events: 0,
        nu,
        ng,
        kappa,
        offsets,
        total_steps,
        beta: vec![0.0; nu * total_steps],
        pavail: vec![0.0; ng * total_steps],
        joint: if kappa >= 2 {
            vec![0.0; nu * ng * total_steps]
        } else {
            Vec::new()
        },
        pfloor,
    };

    let mut sims: Vec<EpisodeSim> = (0..samples)
        .map(|i| EpisodeSim {
            free_at: vec![0; nu],
            types: Vec::new(),
            consumed: Vec::new(),
            arrival: rng::stream(seed, i as u64, 0, Purpose::Estimator),
            policy: rng::stream(seed, i as u64, 1, Purpose::Estimator),
            occupancy: rng::stream(seed, i as u64, 2, Purpose::Estimator),
        })
        .collect();

    let inv_n = 1.0 / samples as f64;
    let mut actions: Vec<Option<(usize, Vec<usize>)>> = vec![None; samples];
    for t in 0..nt {
        let b = inst.arrivals.batch_sizes[t];
        for sim in sims.iter_mut() {
            sim.types = crate::sim::sample_batch(&inst.arrivals.probs[t], b, &mut sim.arrival);
            sim.consumed = vec![false; b];
        }
        for (srank, step) in grouping::step_lattice(b, kappa).enumerate() {
            let cell = tables.offsets[t] + srank;
            // Write the cell's frequencies from the population first.
            for u in 0..nu {
                let idle = sims.iter().filter(|s| s.free_at[u] <= t).count();
                tables.beta[u * total_steps + cell] = idle as f64 * inv_n;
            }
            for (i, sim) in sims.iter().enumerate() {
                actions[i] = match grouping::group_of_step(&step, &sim.types) {
                    StepAction::Process { members, labels }
                        if labels.iter().all(|&l| !sim.consumed[l]) =>
                    {
                        let g = catalog
                            .index_of(members.members())
                            .expect("catalog covers all realizable groups");
                        Some((g, labels))
                    }
                    _ => None,
                };
            }
            if kappa == 1 {
                // A batch label is visited at exactly its own step, so the
                // canonical-match probability is the arrival probability
                // itself; the exact value keeps the unit-capacity policies
                // aligned with the batch formulation.
                for g in 0..ng {
                    tables.pavail[g * total_steps + cell] = inst.arrivals.probs[t][g];
                }
            } else {
                for g in 0..ng {
                    tables.pavail[g * total_steps + cell] = 0.0;
                    for u in 0..nu {
                        tables.joint[(u * ng + g) * total_steps + cell] = 0.0;
                    }
                }
                for (i, a) in actions.iter().enumerate() {
                    let Some((g, _)) = a else { continue };
                    tables.pavail[g * total_steps + cell] += inv_n;
                    for u in 0..nu {
                        if sims[i].free_at[u] <= t {
                            tables.joint[(u * ng + g) * total_steps + cell] += inv_n;
                        }
                    }
                }
            }
            // Then let every episode decide using the just-written values.
            for (i, sim) in sims.iter_mut().enumerate() {
                let Some((g, labels)) = actions[i].take() else {
                    continue;
                };
                let free: Vec<usize> = (0..nu).filter(|&u| sim.free_at[u] <= t).collect();
                if free.is_empty() {
                    continue;
                }
                let mut probs = Vec::with_capacity(free.len());
                let mut total = 0.0;
                for &u in &free {
                    let x = xstar.get(u, g, t);
                    let denom = h[t][g] * tables.rule_denominator(u, g, t, srank);
                    let p = if x > 0.0 && denom > 0.0 {
                        x * gamma / denom
                    } else {
                        0.0
                    };
                    total += p;
                    probs.push(p);
                }
                let scale = if total > 1.0 {
                    tables.clamp_events += 1;
                    1.0 / total
                } else {
                    1.0
                };
                let r: f64 = sim.policy.gen();
                let mut cum = 0.0;
                for (&u, &p) in free.iter().zip(&probs) {
                    cum += p * scale;
                    if r < cum {
                        for &l in &labels {
                            sim.consumed[l] = true;
                        }
                        let dur = inst.occupancy.get(u, g, t).sample(&mut sim.occupancy);
                        sim.free_at[u] = t + dur;
                        break;
                    }
                }
            }
        }
    }
    tables
}
