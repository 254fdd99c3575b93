//! Self-verification suites: closed-form scaling constants, combinatorial
//! identities against Monte Carlo, the LP upper-bound property against the
//! exact offline expectation, realized match rates of the adaptive policies,
//! and the estimated-table lower bounds.

use rand::Rng;

use crate::grouping::{self, GroupCatalog, GroupType};
use crate::lp::{build_lp_share, solve_lp, XStar};
use crate::model::{
    ArrivalModel, Instance, Metadata, Occupancy, OccupancyModel, Resource, VertexType, WeightModel,
};
use crate::offline;
use crate::policies::{estimate_tables, gamma_fixed_point, AdaptiveBatch, AdaptiveShare};
use crate::rng::{self, Purpose};
use crate::sim::{episode_streams, run_episode, Policy};

#[derive(Debug, Clone)]
pub struct Check {
    pub label: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub name: String,
    pub checks: Vec<Check>,
}

impl SuiteResult {
    fn new(name: &str) -> SuiteResult {
        SuiteResult {
            name: name.to_string(),
            checks: Vec::new(),
        }
    }

    fn check(&mut self, label: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            label: label.into(),
            passed,
            detail: detail.into(),
        });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn summary(&self) -> String {
        let ok = self.checks.iter().filter(|c| c.passed).count();
        format!(
            "suite {}: {}/{} checks passed",
            self.name,
            ok,
            self.checks.len()
        )
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Fixed-point scaling constants: known closed forms, residuals, and strict
/// monotonicity in the capacity.
pub fn check_gamma() -> SuiteResult {
    let mut s = SuiteResult::new("gamma");
    let known = [
        (1usize, (3.0 - 5.0f64.sqrt()) / 2.0),
        (2, 0.3176721962),
        (3, 0.2755080410),
    ];
    for (kappa, expect) in known {
        let g = gamma_fixed_point(kappa).gamma;
        s.check(
            format!("gamma({kappa}) value"),
            (g - expect).abs() < 1e-9,
            format!("{g:.10} vs {expect:.10}"),
        );
    }
    let mut prev = f64::INFINITY;
    for kappa in 1..=10 {
        let g = gamma_fixed_point(kappa).gamma;
        let residual = (g - (1.0 - g).powi(kappa as i32 + 1)).abs();
        s.check(
            format!("gamma({kappa}) residual"),
            residual <= 1e-10,
            format!("{residual:.2e}"),
        );
        s.check(
            format!("gamma({kappa}) monotone"),
            g < prev,
            format!("{g:.10} < {prev:.10}"),
        );
        prev = g;
    }
    s
}

/// Sample count: rounded to at least 1.
fn mc_group_count(g: &GroupType, probs: &[f64], b: usize, samples: usize, rng: &mut impl Rng) -> (f64, f64) {
    let mults = g.multiplicities();
    let mut sum = 0.0f64;
    let mut sumsq = 0.0f64;
    let mut counts = vec![0usize; probs.len()];
    for _ in 0..samples {
        counts.iter_mut().for_each(|c| *c = 0);
        for _ in 0..b {
            let mut r: f64 = rng.gen();
            let mut v = probs.len() - 1;
            for (i, &p) in probs.iter().enumerate() {
                if r < p {
                    v = i;
                    break;
                }
                r -= p;
            }
            counts[v] += 1;
        }
        // Number of label subsets realizing the group: product of binomials.
        let mut ways = 1.0f64;
        for &(v, n) in &mults {
            let m = counts[v];
            if m < n {
                ways = 0.0;
                break;
            }
            let mut c = 1.0f64;
            for i in 0..n {
                c = c * (m - i) as f64 / (i + 1) as f64;
            }
            ways *= c;
        }
        sum += ways;
        sumsq += ways * ways;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sumsq / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}

/// Combinatorial identities: catalog sizes against the closed-form count,
/// the arrangement factor at capacity two, and expected group counts against
/// Monte Carlo batch sampling.
pub fn check_combinatorics(mc_samples: usize, seed: u64) -> SuiteResult {
    let mut s = SuiteResult::new("combinatorics");
    for n in 1..=12usize {
        for kappa in 1..=4usize {
            let count = grouping::count_group_types(n, kappa).unwrap();
            let listed = grouping::enumerate_group_types(n, kappa).unwrap().len() as u64;
            s.check(
                format!("catalog size n={n} kappa={kappa}"),
                count == listed,
                format!("count {count} listed {listed}"),
            );
        }
    }
    for b in 3..=6usize {
        let single = grouping::h_factor(&GroupType::new(vec![0]), b).unwrap();
        let pair = grouping::h_factor(&GroupType::new(vec![0, 1]), b).unwrap();
        let twin = grouping::h_factor(&GroupType::new(vec![0, 0]), b).unwrap();
        s.check(
            format!("arrangement factors b={b}"),
            single == b as u64
                && pair == (b * (b - 1)) as u64
                && twin == (b * (b - 1) / 2) as u64,
            format!("{single} {pair} {twin}"),
        );
    }
    // Expected group counts vs simulation, 3-sigma, over a spread of batch
    // sizes, group shapes, and probability rows.
    let prob_rows: [Vec<f64>; 3] = [
        vec![0.5, 0.3, 0.2],
        vec![0.7, 0.2, 0.1],
        vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
    ];
    let groups = [
        GroupType::new(vec![0]),
        GroupType::new(vec![2]),
        GroupType::new(vec![0, 1]),
        GroupType::new(vec![1, 1]),
        GroupType::new(vec![0, 0, 2]),
        GroupType::new(vec![0, 1, 2]),
        GroupType::new(vec![2, 2, 2]),
    ];
    let mut case = 0u64;
    for probs in &prob_rows {
        for g in &groups {
            let b = 3 + (case as usize % 3); // 3, 4, 5
            let q = grouping::expected_group_count(g, probs, b);
            let mut rng = rng::stream(seed, case, 0, Purpose::Estimator);
            let (mean, se) = mc_group_count(g, probs, b, mc_samples, &mut rng);
            let tol = 3.0 * se.max(1e-12);
            s.check(
                format!("q case {case} (b={b})"),
                (q - mean).abs() <= tol,
                format!("analytic {q:.6} mc {mean:.6} +- {se:.6}"),
            );
            case += 1;
        }
    }
    s
}

/// A random instance small enough for the exact offline expectation.
pub fn random_tiny_instance(seed: u64, idx: u64) -> Instance {
    random_tiny_instance_with_kappa(seed, idx, None)
}

/// As [`random_tiny_instance`], optionally pinning the capacity.
pub fn random_tiny_instance_with_kappa(seed: u64, idx: u64, fixed_kappa: Option<usize>) -> Instance {
    let mut r = rng::stream(seed, idx, 0, Purpose::Generator);
    let nu = r.gen_range(1..=2usize);
    let nv = r.gen_range(1..=2usize);
    let nt = r.gen_range(1..=3usize);
    let b = r.gen_range(1..=2usize);
    let kappa = fixed_kappa.unwrap_or_else(|| r.gen_range(1..=2usize));
    let ng = grouping::count_group_types(nv, kappa).unwrap() as usize;
    let probs = (0..nt)
        .map(|_| {
            let mut row: Vec<f64> = (0..nv).map(|_| r.gen::<f64>() + 0.05).collect();
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= s);
            let s: f64 = row.iter().sum();
            row[nv - 1] += 1.0 - s;
            row
        })
        .collect();
    let mut weights = WeightModel::default();
    for u in 0..nu {
        for g in 0..ng {
            weights.constant.push((u, g, r.gen::<f64>() * 2.0));
        }
    }
    weights.sort();
    Instance {
        kappa,
        resources: (0..nu).map(|id| Resource { id, capacity: kappa }).collect(),
        vertex_types: (0..nv).map(|id| VertexType { id, label: None }).collect(),
        arrivals: ArrivalModel {
            rounds: nt,
            batch_sizes: vec![b; nt],
            probs,
        },
        weights,
        occupancy: OccupancyModel::uniform(Occupancy::Constant(r.gen_range(1..=3usize))),
        null_type: None,
        allow_small_batches: true,
        metadata: Metadata {
            seed: Some(seed),
            generator: Some("tiny".to_string()),
            note: None,
        },
    }
}

/// The shared-capacity LP value dominates the exact expected offline optimum
/// on random tiny instances.
pub fn check_upper_bound(instances: u64, seed: u64) -> SuiteResult {
    let mut s = SuiteResult::new("upper-bound");
    for idx in 0..instances {
        let inst = random_tiny_instance(seed, idx);
        let catalog = GroupCatalog::build(inst.num_types(), inst.kappa).unwrap();
        let model = build_lp_share(&inst, &catalog).unwrap();
        let sol = solve_lp(&model).unwrap();
        let off = offline::expected_offline_optimal(&inst, &catalog).unwrap();
        s.check(
            format!("instance {idx}"),
            sol.objective >= off - 1e-6,
            format!("lp {:.9} offline {:.9}", sol.objective, off),
        );
    }
    s
}

pub struct MatchRateOptions {
    pub kappa: usize,
    pub episodes: u64,
    pub table_samples: usize,
    /// None: the capacity fixed point (clamp rate must stay below 0.1%).
    /// Some(g): override, used to demonstrate clamp telemetry.
    pub gamma: Option<f64>,
    pub seed: u64,
}

/// The two-resource, two-type test instance for the match-rate checks.
pub fn match_rate_instance(kappa: usize) -> Instance {
    Instance {
        kappa,
        resources: (0..2).map(|id| Resource { id, capacity: kappa }).collect(),
        vertex_types: (0..2).map(|id| VertexType { id, label: None }).collect(),
        arrivals: ArrivalModel {
            rounds: 2,
            batch_sizes: vec![3; 2],
            probs: vec![vec![0.6, 0.4]; 2],
        },
        weights: WeightModel {
            constant: match kappa {
                1 => vec![(0, 0, 1.0), (0, 1, 2.0), (1, 0, 1.5), (1, 1, 0.5)],
                _ => vec![
                    (0, 0, 1.0),
                    (0, 2, 2.5),
                    (0, 3, 2.0),
                    (1, 1, 1.5),
                    (1, 4, 2.8),
                    (1, 2, 1.0),
                ],
            },
            per_round: vec![],
        },
        occupancy: OccupancyModel::uniform(Occupancy::Constant(2)),
        null_type: None,
        allow_small_batches: false,
        metadata: Metadata::default(),
    }
}

/// Realized per-round match frequency of the adaptive policy against the
/// scaled LP mass, with clamp-rate telemetry.
pub fn check_match_rate(opts: &MatchRateOptions) -> SuiteResult {
    let mut s = SuiteResult::new("match-rate");
    let inst = match_rate_instance(opts.kappa);
    let catalog = GroupCatalog::build(inst.num_types(), inst.kappa).unwrap();
    let model = if inst.kappa == 1 {
        crate::lp::build_lp_batch(&inst).unwrap()
    } else {
        build_lp_share(&inst, &catalog).unwrap()
    };
    let sol = solve_lp(&model).unwrap();
    let xs = XStar::from_solution(&inst, catalog.len(), &model, &sol);
    let gamma = opts
        .gamma
        .unwrap_or_else(|| gamma_fixed_point(inst.kappa).gamma);
    let tables = estimate_tables(&inst, &catalog, &xs, gamma, opts.table_samples, opts.seed);
    let policy: Box<dyn Policy> = if inst.kappa == 1 {
        Box::new(AdaptiveBatch {
            xstar: &xs,
            tables: &tables,
            gamma,
        })
    } else {
        Box::new(AdaptiveShare {
            xstar: &xs,
            tables: &tables,
            gamma,
        })
    };
    let nt = inst.rounds();
    let nu = inst.num_resources();
    let mut sums = vec![0.0f64; nu * nt];
    let mut sumsqs = vec![0.0f64; nu * nt];
    let mut decisions = 0usize;
    let mut clamps = 0usize;
    let mut per_cell = vec![0.0f64; nu * nt];
    for run in 0..opts.episodes {
        let mut streams = episode_streams(opts.seed, 0, run);
        let ep = run_episode(&inst, &catalog, policy.as_ref(), &mut streams).unwrap();
        per_cell.iter_mut().for_each(|c| *c = 0.0);
        for e in &ep.trace.events {
            per_cell[e.u * nt + e.t] += 1.0;
        }
        for (i, &c) in per_cell.iter().enumerate() {
            sums[i] += c;
            sumsqs[i] += c * c;
        }
        decisions += ep.trace.decisions;
        clamps += ep.trace.clamps;
    }
    let n = opts.episodes as f64;
    for u in 0..nu {
        for t in 0..nt {
            let expect: f64 =
                (0..catalog.len()).map(|g| xs.get(u, g, t)).sum::<f64>() * gamma;
            let mean = sums[u * nt + t] / n;
            let var = (sumsqs[u * nt + t] / n - mean * mean).max(0.0);
            let se_mc = (var / n).sqrt();
            // Table estimation error propagates into the realized rate; fold
            // a conservative allowance into the tolerance in quadrature.
            let se_tab = expect / (opts.table_samples as f64).sqrt();
            let tol = 3.0 * (se_mc * se_mc + se_tab * se_tab).sqrt();
            s.check(
                format!("u={u} round {t} rate (kappa={})", inst.kappa),
                (mean - expect).abs() <= tol,
                format!("observed {mean:.6} expected {expect:.6} tol {tol:.6}"),
            );
        }
    }
    let clamp_rate = if decisions > 0 {
        clamps as f64 / decisions as f64
    } else {
        0.0
    };
    match opts.gamma {
        None => s.check(
            "clamp rate below 0.1%",
            clamp_rate < 1e-3,
            format!("{clamp_rate:.6}"),
        ),
        Some(g) => s.check(
            format!("clamp telemetry active at gamma={g}"),
            clamps > 0,
            format!("{clamps} clamps over {decisions} decisions"),
        ),
    }
    s
}

/// Estimated idle and availability frequencies respect the closed-form lower
/// bounds up to three standard errors.
pub fn check_beta_bounds(table_samples: usize, seed: u64) -> SuiteResult {
    let mut s = SuiteResult::new("beta-bounds");
    for kappa in [1usize, 2] {
        let inst = match_rate_instance(kappa);
        let catalog = GroupCatalog::build(inst.num_types(), inst.kappa).unwrap();
        let model = if kappa == 1 {
            crate::lp::build_lp_batch(&inst).unwrap()
        } else {
            build_lp_share(&inst, &catalog).unwrap()
        };
        let sol = solve_lp(&model).unwrap();
        let xs = XStar::from_solution(&inst, catalog.len(), &model, &sol);
        let gamma = gamma_fixed_point(kappa).gamma;
        let tables = estimate_tables(&inst, &catalog, &xs, gamma, table_samples, seed);
        let mut beta_ok = true;
        let mut beta_worst = f64::INFINITY;
        let mut p_ok = true;
        let mut p_worst = f64::INFINITY;
        for t in 0..inst.rounds() {
            let b = inst.arrivals.batch_sizes[t];
            for (srank, step) in grouping::step_lattice(b, kappa).enumerate() {
                for u in 0..inst.num_resources() {
                    let v = tables.beta(u, t, srank);
                    let slack = v - (tables.beta_floor() - 3.0 * tables.stderr(v));
                    beta_worst = beta_worst.min(slack);
                    beta_ok &= slack >= 0.0;
                }
                for g in 0..catalog.len() {
                    if !grouping::pattern_possible(catalog.group(g), &step) {
                        continue;
                    }
                    let v = tables.pavail(g, t, srank);
                    let slack = v - (tables.pavail_floor(g, t) - 3.0 * tables.stderr(v));
                    p_worst = p_worst.min(slack);
                    p_ok &= slack >= 0.0;
                }
            }
        }
        s.check(
            format!("idle frequency floor (kappa={kappa})"),
            beta_ok,
            format!("worst slack {beta_worst:.6}"),
        );
        s.check(
            format!("availability floor (kappa={kappa})"),
            p_ok,
            format!("worst slack {p_worst:.6}"),
        );
    }
    s
}

/// Run a named suite with default parameters sized for interactive use.
pub fn run_suite(name: &str) -> Option<SuiteResult> {
    match name {
        "gamma" => Some(check_gamma()),
        "combinatorics" => Some(check_combinatorics(100_000, 17)),
        "upper-bound" => Some(check_upper_bound(50, 23)),
        "match-rate" => Some(check_match_rate(&MatchRateOptions {
            kappa: 2,
            episodes: 20_000,
            table_samples: 4_000,
            gamma: None,
            seed: 29,
        })),
        "beta-bounds" => Some(check_beta_bounds(4_000, 31)),
        _ => None,
    }
}

pub const SUITES: [&str; 5] = [
    "gamma",
    "combinatorics",
    "upper-bound",
    "match-rate",
    "beta-bounds",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_suite_passes() {
        let s = check_gamma();
        assert!(s.passed(), "{:?}", s.failures().collect::<Vec<_>>());
    }

    #[test]
    fn small_combinatorics_suite_passes() {
        let s = check_combinatorics(20_000, 3);
        assert!(s.passed(), "{:?}", s.failures().collect::<Vec<_>>());
    }

    #[test]
    fn small_upper_bound_suite_passes() {
        let s = check_upper_bound(10, 5);
        assert!(s.passed(), "{:?}", s.failures().collect::<Vec<_>>());
    }

    #[test]
    fn unknown_suite_is_none() {
        assert!(run_suite("nope").is_none());
    }
}
