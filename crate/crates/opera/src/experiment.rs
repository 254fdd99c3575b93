//! End-to-end experiment driver: load or generate instances, solve the
//! guidance LP, estimate policy tables where needed, run Monte Carlo
//! episodes in parallel, and aggregate per-(instance, policy) statistics.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{self, SyntheticParams};
use crate::grouping::GroupCatalog;
use crate::lp::{
    self, build_lp_batch, build_lp_share, build_lp_share_pooled, detect_resource_classes,
    solve_lp, XStar,
};
use crate::model::{validate_instance, Instance};
use crate::offline;
use crate::policies::{
    estimate_tables, gamma_fixed_point, AdaptiveBatch, AdaptiveShare, EpsGreedy, GreedyPolicy,
    Opera1, Opera2, PolicyTables, RandomPolicy,
};
use crate::sim::{episode_streams, run_episode, Episode, Policy};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("instance {0}: {1}")]
    Instance(String, String),
    #[error(transparent)]
    Lp(#[from] lp::LpError),
    #[error(transparent)]
    Data(#[from] data::DataError),
    #[error("simulation failed: {0}")]
    Sim(String),
    #[error("unknown policy '{0}'")]
    UnknownPolicy(String),
    #[error("config: {0}")]
    Config(String),
}

/// Scaling parameter: the capacity-dependent fixed point or an explicit value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    Value(f64),
    Named(GammaName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GammaName {
    #[serde(rename = "fixed-point")]
    FixedPoint,
}

impl GammaSpec {
    pub fn resolve(&self, kappa: usize) -> f64 {
        match self {
            GammaSpec::Value(v) => *v,
            GammaSpec::Named(GammaName::FixedPoint) => gamma_fixed_point(kappa).gamma,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// One of: adapbatch, adapshare, opera1, opera2, epsgreedy, greedy, random.
    pub policy: String,
    #[serde(default)]
    pub gamma: Option<GammaSpec>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub table_samples: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSource {
    File { path: PathBuf },
    Synthetic { params: SyntheticParams, seed: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub runs: u64,
    #[serde(default = "default_table_samples")]
    pub table_samples: usize,
    /// Also compute the exact expected offline optimum (tiny instances only).
    #[serde(default)]
    pub exact_offline: bool,
    pub policies: Vec<PolicyConfig>,
    pub instances: Vec<InstanceSource>,
}

fn default_table_samples() -> usize {
    10_000
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub instance: String,
    pub policy: String,
    pub runs: u64,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub stderr: f64,
    pub lp_bound: f64,
    /// Mean reward over the LP upper bound.
    pub cr_lp: f64,
    pub clamp_rate: f64,
    pub fallback_rate: f64,
    pub matches_per_run: f64,
    pub gamma: Option<f64>,
    pub epsilon: Option<f64>,
    pub offline_expected: Option<f64>,
    pub cr_exact: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentReport {
    pub rows: Vec<ReportRow>,
}

/// Threshold on `resources * groups * rounds` above which the shared-capacity
/// LP is pooled by symmetry class and handed to the interior-point backend.
const PLAIN_SHARE_LIMIT: usize = 20_000;

/// Solve the guidance LP for an instance, choosing formulation and backend by
/// capacity and size.
pub fn solve_guidance(inst: &Instance, catalog: &GroupCatalog) -> Result<XStar, lp::LpError> {
    let model = if inst.kappa == 1 {
        build_lp_batch(inst)?
    } else {
        let size = inst.num_resources() * catalog.len() * inst.rounds();
        if size <= PLAIN_SHARE_LIMIT {
            build_lp_share(inst, catalog)?
        } else {
            let classes = detect_resource_classes(inst, catalog);
            build_lp_share_pooled(inst, catalog, &classes)?
        }
    };
    let sol = solve_lp(&model)?;
    Ok(XStar::from_solution(inst, catalog.len(), &model, &sol))
}

/// Run `runs` episodes of a policy with common random numbers, in parallel,
/// returned in run order.
pub fn run_episodes(
    inst: &Instance,
    catalog: &GroupCatalog,
    policy: &dyn Policy,
    seed: u64,
    instance_idx: u64,
    runs: u64,
) -> Result<Vec<Episode>, ExperimentError> {
    (0..runs)
        .into_par_iter()
        .map(|run| {
            let mut streams = episode_streams(seed, instance_idx, run);
            run_episode(inst, catalog, policy, &mut streams)
                .map_err(|e| ExperimentError::Sim(e.to_string()))
        })
        .collect()
}

fn aggregate(
    instance: &str,
    policy: &str,
    episodes: &[Episode],
    lp_bound: f64,
    gamma: Option<f64>,
    epsilon: Option<f64>,
    offline_expected: Option<f64>,
) -> ReportRow {
    let n = episodes.len() as f64;
    let mean = episodes.iter().map(|e| e.reward).sum::<f64>() / n;
    let var = if episodes.len() > 1 {
        episodes.iter().map(|e| (e.reward - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let std = var.sqrt();
    let decisions: usize = episodes.iter().map(|e| e.trace.decisions).sum();
    let clamps: usize = episodes.iter().map(|e| e.trace.clamps).sum();
    let fallbacks: usize = episodes.iter().map(|e| e.trace.fallbacks).sum();
    let matches: usize = episodes.iter().map(|e| e.trace.events.len()).sum();
    ReportRow {
        instance: instance.to_string(),
        policy: policy.to_string(),
        runs: episodes.len() as u64,
        mean_reward: mean,
        std_reward: std,
        stderr: std / n.sqrt(),
        lp_bound,
        cr_lp: if lp_bound > 0.0 { mean / lp_bound } else { 0.0 },
        clamp_rate: if decisions > 0 {
            clamps as f64 / decisions as f64
        } else {
            0.0
        },
        fallback_rate: if decisions > 0 {
            fallbacks as f64 / decisions as f64
        } else {
            0.0
        },
        matches_per_run: matches as f64 / n,
        gamma,
        epsilon,
        offline_expected,
        cr_exact: offline_expected
            .map(|off| if off > 0.0 { mean / off } else { 0.0 }),
    }
}

fn load_instance(source: &InstanceSource) -> Result<(String, Instance), ExperimentError> {
    match source {
        InstanceSource::File { path } => {
            let text = std::fs::read_to_string(path)?;
            let inst = Instance::from_json(&text)
                .map_err(|e| ExperimentError::Instance(path.display().to_string(), e.to_string()))?;
            let name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());
            Ok((name, inst))
        }
        InstanceSource::Synthetic { params, seed } => {
            let inst = data::generate_synthetic(params, *seed)?;
            Ok((format!("synthetic-{seed}"), inst))
        }
    }
}

struct PreparedPolicy<'a> {
    label: String,
    gamma: Option<f64>,
    epsilon: Option<f64>,
    policy: Box<dyn Policy + 'a>,
}

fn prepare_policy<'a>(
    cfg: &PolicyConfig,
    inst: &'a Instance,
    catalog: &'a GroupCatalog,
    xstar: &'a XStar,
    tables: &'a mut Option<PolicyTables>,
    default_samples: usize,
    seed: u64,
) -> Result<PreparedPolicy<'a>, ExperimentError> {
    let adaptive = matches!(cfg.policy.as_str(), "adapbatch" | "adapshare");
    let gamma = if adaptive {
        Some(
            cfg.gamma
                .unwrap_or(GammaSpec::Named(GammaName::FixedPoint))
                .resolve(inst.kappa),
        )
    } else {
        None
    };
    if adaptive && tables.is_none() {
        let samples = cfg.table_samples.unwrap_or(default_samples);
        *tables = Some(estimate_tables(
            inst,
            catalog,
            xstar,
            gamma.unwrap(),
            samples,
            seed,
        ));
    }
    let policy: Box<dyn Policy + 'a> = match cfg.policy.as_str() {
        "adapbatch" => {
            if inst.kappa != 1 {
                return Err(ExperimentError::Config(
                    "adapbatch requires capacity 1".into(),
                ));
            }
            Box::new(AdaptiveBatch {
                xstar,
                tables: tables.as_ref().unwrap(),
                gamma: gamma.unwrap(),
            })
        }
        "adapshare" => Box::new(AdaptiveShare {
            xstar,
            tables: tables.as_ref().unwrap(),
            gamma: gamma.unwrap(),
        }),
        "opera1" => Box::new(Opera1 { xstar }),
        "opera2" => Box::new(Opera2 { xstar }),
        "greedy" => Box::new(GreedyPolicy),
        "random" => Box::new(RandomPolicy),
        "epsgreedy" => {
            let eps = cfg.epsilon.unwrap_or(0.1);
            return Ok(PreparedPolicy {
                label: format!("epsgreedy-{eps}"),
                gamma: None,
                epsilon: Some(eps),
                policy: Box::new(EpsGreedy {
                    eps,
                    opera1: Opera1 { xstar },
                }),
            });
        }
        other => return Err(ExperimentError::UnknownPolicy(other.to_string())),
    };
    Ok(PreparedPolicy {
        label: cfg.policy.clone(),
        gamma,
        epsilon: None,
        policy,
    })
}

/// Run the full experiment. Episode streams are keyed by `(seed, instance
/// index, run)` only, so every policy sees common random numbers.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    if let Ok(workers) = std::env::var("OPERA_WORKERS") {
        if let Ok(n) = workers.parse::<usize>() {
            // Global pool: best effort, first initialization wins.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let mut rows = Vec::new();
    for (idx, source) in config.instances.iter().enumerate() {
        let (name, inst) = load_instance(source)?;
        let report = validate_instance(&inst);
        if !report.passed() {
            return Err(ExperimentError::Instance(
                name,
                format!("validation failed: {:?}", report.violations),
            ));
        }
        let catalog = GroupCatalog::build(inst.num_types(), inst.kappa)
            .map_err(|e| ExperimentError::Instance(name.clone(), e.to_string()))?;
        let xstar = solve_guidance(&inst, &catalog)?;
        let offline_expected = if config.exact_offline {
            Some(
                offline::expected_offline_optimal(&inst, &catalog)
                    .map_err(|e| ExperimentError::Instance(name.clone(), e.to_string()))?,
            )
        } else {
            None
        };
        // Table cache shared across adaptive policy entries with equal
        // (gamma, samples); keyed per instance.
        let mut cache: Vec<((u64, usize), PolicyTables)> = Vec::new();
        for cfg in &config.policies {
            let adaptive = matches!(cfg.policy.as_str(), "adapbatch" | "adapshare");
            let mut tables: Option<PolicyTables> = None;
            if adaptive {
                let g = cfg
                    .gamma
                    .unwrap_or(GammaSpec::Named(GammaName::FixedPoint))
                    .resolve(inst.kappa);
                let samples = cfg.table_samples.unwrap_or(config.table_samples);
                let key = (g.to_bits(), samples);
                if let Some((_, t)) = cache.iter().find(|(k, _)| *k == key) {
                    tables = Some(t.clone());
                } else {
                    let t = estimate_tables(&inst, &catalog, &xstar, g, samples, config.seed);
                    cache.push((key, t.clone()));
                    tables = Some(t);
                }
            }
            let prepared = prepare_policy(
                cfg,
                &inst,
                &catalog,
                &xstar,
                &mut tables,
                config.table_samples,
                config.seed,
            )?;
            let episodes = run_episodes(
                &inst,
                &catalog,
                prepared.policy.as_ref(),
                config.seed,
                idx as u64,
                config.runs,
            )?;
            rows.push(aggregate(
                &name,
                &prepared.label,
                &episodes,
                xstar.objective,
                prepared.gamma,
                prepared.epsilon,
                offline_expected,
            ));
        }
    }
    Ok(ExperimentReport { rows })
}

const CSV_HEADER: &str = "instance,policy,runs,mean_reward,std_reward,stderr,lp_bound,cr_lp,clamp_rate,fallback_rate,matches_per_run,gamma,epsilon,offline_expected,cr_exact";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.9}")).unwrap_or_default()
}

/// Deterministic CSV: fixed column order, 9-digit fixed-point floats.
pub fn write_csv<W: Write>(report: &ExperimentReport, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in &report.rows {
        writeln!(
            w,
            "{},{},{},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{:.9},{},{},{},{}",
            r.instance,
            r.policy,
            r.runs,
            r.mean_reward,
            r.std_reward,
            r.stderr,
            r.lp_bound,
            r.cr_lp,
            r.clamp_rate,
            r.fallback_rate,
            r.matches_per_run,
            fmt_opt(r.gamma),
            fmt_opt(r.epsilon),
            fmt_opt(r.offline_expected),
            fmt_opt(r.cr_exact),
        )?;
    }
    Ok(())
}

pub fn write_csv_file(report: &ExperimentReport, path: &Path) -> std::io::Result<()> {
    write_csv(report, File::create(path)?)
}

pub fn write_json_file(report: &ExperimentReport, path: &Path) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(path, text)
}
