//! LP-guided heuristics and baselines: two non-adaptive LP-ratio samplers,
//! exact per-round greedy, uniform random, and the epsilon-mixture.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::grouping;
use crate::lp::XStar;
use crate::offline;
use crate::sim::{Policy, PolicyRngs, RoundCtx, SimError};

fn formable(ctx: &RoundCtx, g: usize) -> bool {
    ctx.catalog
        .group(g)
        .multiplicities()
        .iter()
        .all(|&(v, n)| ctx.counts[v] >= n)
}

/// Samples a group for each free resource with probability proportional to
/// `x*(u,g,t) / q_g(t)`; residual mass means no assignment, so the resource
/// may stay idle even when candidates exist.
pub struct Opera1<'a> {
    pub xstar: &'a XStar,
}

impl Opera1<'_> {
    fn resource_round(&self, ctx: &mut RoundCtx, rngs: &mut PolicyRngs, u: usize, step: usize) -> Result<(), SimError> {
        let t = ctx.t;
        let b = ctx.inst.arrivals.batch_sizes[t];
        let mut cand: Vec<(usize, f64)> = Vec::new();
        let mut total = 0.0;
        for g in 0..ctx.catalog.len() {
            if !formable(ctx, g) {
                continue;
            }
            let q = grouping::expected_group_count(ctx.catalog.group(g), &ctx.inst.arrivals.probs[t], b);
            if q <= 0.0 {
                continue;
            }
            let r = self.xstar.get(u, g, t) / q;
            if r > 0.0 {
                cand.push((g, r));
                total += r;
            }
        }
        if total <= 0.0 {
            return Ok(());
        }
        let scale = if total > 1.0 { 1.0 / total } else { 1.0 };
        ctx.note_decision();
        let r: f64 = rngs.policy.gen();
        let mut cum = 0.0;
        for &(g, p) in &cand {
            cum += p * scale;
            if r < cum {
                return ctx.assign_group(u, g, step);
            }
        }
        Ok(())
    }
}

impl Policy for Opera1<'_> {
    fn name(&self) -> &str {
        "opera1"
    }

    fn play_round(&self, ctx: &mut RoundCtx, rngs: &mut PolicyRngs) -> Result<(), SimError> {
        for u in 0..ctx.inst.num_resources() {
            if ctx.is_free(u) {
                self.resource_round(ctx, rngs, u, u)?;
            }
        }
        Ok(())
    }
}

/// Samples a group for each free resource with probability proportional to
/// `x*(u,g,t) / sum_u x*(u,g,t)`, renormalized over the formable candidates,
/// so some candidate is always taken when any has LP support.
pub struct Opera2<'a> {
    pub xstar: &'a XStar,
}

impl Policy for Opera2<'_> {
    fn name(&self) -> &str {
        "opera2"
    }

    fn play_round(&self, ctx: &mut RoundCtx, rngs: &mut PolicyRngs) -> Result<(), SimError> {
        let t = ctx.t;
        for u in 0..ctx.inst.num_resources() {
            if !ctx.is_free(u) {
                continue;
            }
            let mut cand: Vec<(usize, f64)> = Vec::new();
            let mut total = 0.0;
            for g in 0..ctx.catalog.len() {
                if !formable(ctx, g) {
                    continue;
                }
                let denom = self.xstar.sum_over_u(g, t);
                if denom <= 0.0 {
                    continue;
                }
                let r = self.xstar.get(u, g, t) / denom;
                if r > 0.0 {
                    cand.push((g, r));
                    total += r;
                }
            }
            if total <= 0.0 {
                continue;
            }
            ctx.note_decision();
            let r: f64 = rngs.policy.gen();
            let mut cum = 0.0;
            let mut chosen = cand.last().expect("non-empty candidates").0;
            for &(g, p) in &cand {
                cum += p / total;
                if r < cum {
                    chosen = g;
                    break;
                }
            }
            ctx.assign_group(u, chosen, u)?;
        }
        Ok(())
    }
}

/// Exact maximum-weight matching of the current round, recomputed per round.
pub struct GreedyPolicy;

impl Policy for GreedyPolicy {
    fn name(&self) -> &str {
        "greedy"
    }

    fn play_round(&self, ctx: &mut RoundCtx, _rngs: &mut PolicyRngs) -> Result<(), SimError> {
        let free = ctx.free_resources();
        let m = offline::greedy_matching_ilp(ctx.inst, ctx.catalog, ctx.t, &free, &ctx.counts);
        if !m.exact {
            ctx.note_fallback();
        }
        for (step, &(u, g)) in m.assignments.iter().enumerate() {
            ctx.assign_group(u, g, step)?;
        }
        Ok(())
    }
}

/// Shuffles the free resources and assigns each a uniformly random formable
/// group.
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn name(&self) -> &str {
        "random"
    }

    fn play_round(&self, ctx: &mut RoundCtx, rngs: &mut PolicyRngs) -> Result<(), SimError> {
        let mut free = ctx.free_resources();
        free.shuffle(&mut rngs.policy);
        for (step, &u) in free.iter().enumerate() {
            let cand: Vec<usize> = (0..ctx.catalog.len()).filter(|&g| formable(ctx, g)).collect();
            if cand.is_empty() {
                break;
            }
            let g = cand[rngs.policy.gen_range(0..cand.len())];
            ctx.assign_group(u, g, step)?;
        }
        Ok(())
    }
}

/// Per-round coin between the greedy round and the first LP-ratio sampler.
/// The coin uses its own stream, so the `eps = 0` and `eps = 1` extremes
/// reproduce the component policies' traces exactly.
pub struct EpsGreedy<'a> {
    pub eps: f64,
    pub opera1: Opera1<'a>,
}

impl Policy for EpsGreedy<'_> {
    fn name(&self) -> &str {
        "epsgreedy"
    }

    fn play_round(&self, ctx: &mut RoundCtx, rngs: &mut PolicyRngs) -> Result<(), SimError> {
        let coin: f64 = rngs.coin.gen();
        if coin < self.eps {
            GreedyPolicy.play_round(ctx, rngs)
        } else {
            self.opera1.play_round(ctx, rngs)
        }
    }
}
