//! Command-line front end: instance generation, LP solving, policy
//! simulation, and self-verification.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use opera::data::{self, GridSpec, SyntheticParams, TripInstanceParams};
use opera::experiment::{
    run_experiment, write_csv_file, write_json_file, ExperimentConfig, GammaName, GammaSpec,
    InstanceSource, PolicyConfig,
};
use opera::grouping::GroupCatalog;
use opera::lp::{self, build_lp_batch, build_lp_share, solve_lp, ColKey};
use opera::model::{validate_instance, Instance};
use opera::verify;

#[derive(Parser)]
#[command(name = "opera", about = "Online matching policies for multi-capacity reusable resources", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance file (synthetic family or from trip records).
    Generate(GenerateArgs),
    /// Solve the benchmark LP of an instance and print the upper bound.
    Solve(SolveArgs),
    /// Run Monte Carlo episodes of one or more policies and write reports.
    Simulate(SimulateArgs),
    /// Run self-verification suites.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Generate from the synthetic family.
    #[arg(long, conflicts_with = "trips")]
    synthetic: bool,
    /// Generate from a trip-record CSV (pickup_datetime, pickup_lat,
    /// pickup_lon, dropoff_lat, dropoff_lon).
    #[arg(long)]
    trips: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    resources: usize,
    #[arg(long, default_value_t = 10)]
    types: usize,
    #[arg(long, default_value_t = 200)]
    rounds: usize,
    #[arg(long, default_value_t = 2)]
    kappa: usize,
    #[arg(long, default_value_t = 5)]
    batch: usize,
    #[arg(long, default_value_t = 1.0)]
    base_revenue: f64,
    #[arg(long, default_value_t = 60)]
    occupancy_max: usize,
    /// Force one constant occupancy everywhere.
    #[arg(long)]
    occupancy_const: Option<usize>,
    /// Number of weight/occupancy-symmetric resource classes.
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Grid cell edge in km (trips mode).
    #[arg(long, default_value_t = 4.0)]
    cell_km: f64,
    /// Bounding box lat_min,lat_max,lon_min,lon_max (trips mode).
    #[arg(long, default_value = "40.70,40.88,-74.02,-73.93")]
    bbox: String,
    /// Training days as comma-separated YYYY-MM-DD dates (trips mode).
    #[arg(long, default_value = "2016-01-04")]
    train_days: String,
    /// Busy rounds per cell of origin-destination distance (trips mode).
    #[arg(long, default_value_t = 1)]
    rounds_per_cell: usize,
    /// Output instance path.
    #[arg(long, short, default_value = "instance.json")]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance JSON file.
    instance: PathBuf,
    /// Write the solution (objective and nonzero assignment rates) here.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Instance JSON file.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Policy name (repeatable): adapbatch, adapshare, opera1, opera2,
    /// epsgreedy, greedy, random.
    #[arg(long)]
    policy: Vec<String>,
    /// Scaling parameter for the adaptive policies: "fixed-point" or a number.
    #[arg(long)]
    gamma: Option<String>,
    /// Greedy mixing probability for epsgreedy.
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    runs: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Bootstrap episodes for the adaptive policies' tables.
    #[arg(long)]
    table_samples: Option<usize>,
    /// Also compute the exact expected offline optimum (tiny instances only).
    #[arg(long)]
    exact_offline: bool,
    /// Experiment config file (TOML or JSON); explicit flags win on conflict.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for report.csv / report.json.
    #[arg(long, default_value = "reports")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Suite name (repeatable); default runs all suites.
    #[arg(long)]
    suite: Vec<String>,
    /// Override the scaling parameter in the match-rate suite (demonstrates
    /// clamp telemetry when set above the fixed point).
    #[arg(long)]
    gamma: Option<f64>,
    /// Episodes for the match-rate suite.
    #[arg(long, default_value_t = 20_000)]
    episodes: u64,
    /// Bootstrap episodes for estimated tables in the statistical suites.
    #[arg(long, default_value_t = 4_000)]
    table_samples: usize,
    #[arg(long, default_value_t = 29)]
    seed: u64,
}

fn load_instance(path: &PathBuf) -> Result<Instance> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read instance file {}", path.display()))?;
    let inst = Instance::from_json(&text)
        .map_err(|e| anyhow::anyhow!("cannot parse instance file {}: {e}", path.display()))?;
    let report = validate_instance(&inst);
    if !report.passed() {
        bail!(
            "instance {} failed validation: {}",
            path.display(),
            report.violations.join("; ")
        );
    }
    Ok(inst)
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let inst = if let Some(trips) = &args.trips {
        let parts: Vec<f64> = args
            .bbox
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .context("bbox must be lat_min,lat_max,lon_min,lon_max")?;
        if parts.len() != 4 {
            bail!("bbox must have exactly four components");
        }
        let spec = GridSpec {
            lat_min: parts[0],
            lat_max: parts[1],
            lon_min: parts[2],
            lon_max: parts[3],
            cell_km: args.cell_km,
        };
        let days: Vec<chrono::NaiveDate> = args
            .train_days
            .split(',')
            .map(|s| s.trim().parse::<chrono::NaiveDate>())
            .collect::<Result<_, _>>()
            .context("train-days must be comma-separated YYYY-MM-DD dates")?;
        let file = std::fs::File::open(trips)
            .with_context(|| format!("cannot read trips file {}", trips.display()))?;
        let est = data::estimate_arrival_model(file, spec, args.rounds, &days)?;
        eprintln!(
            "ingested {} rows ({} outside grid, {} off training days), {} cells, {} OD types",
            est.report.total_rows,
            est.report.dropped_outside_grid,
            est.report.dropped_off_days,
            est.report.cells,
            est.report.od_types
        );
        data::instance_from_trips(
            &est,
            &TripInstanceParams {
                resources: args.resources,
                kappa: args.kappa,
                base_revenue: args.base_revenue,
                rounds_per_cell: args.rounds_per_cell,
            },
        )?
    } else {
        data::generate_synthetic(
            &SyntheticParams {
                resources: args.resources,
                types: args.types,
                rounds: args.rounds,
                kappa: args.kappa,
                batch: args.batch,
                base_revenue: args.base_revenue,
                occupancy_max: args.occupancy_max,
                occupancy_const: args.occupancy_const,
                resource_classes: args.classes,
            },
            args.seed,
        )?
    };
    let report = validate_instance(&inst);
    if !report.passed() {
        bail!("generated instance failed validation: {}", report.violations.join("; "));
    }
    std::fs::write(&args.out, inst.to_canonical_json())
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    println!(
        "wrote {} ({} resources, {} types, {} rounds, kappa={})",
        args.out.display(),
        inst.num_resources(),
        inst.num_types(),
        inst.rounds(),
        inst.kappa
    );
    Ok(())
}

fn cmd_solve(args: &SolveArgs) -> Result<()> {
    let inst = load_instance(&args.instance)?;
    let catalog = GroupCatalog::build(inst.num_types(), inst.kappa)
        .map_err(|e| anyhow::anyhow!("group catalog: {e}"))?;
    let model = if inst.kappa == 1 {
        build_lp_batch(&inst)?
    } else {
        let size = inst.num_resources() * catalog.len() * inst.rounds();
        if size <= 20_000 {
            build_lp_share(&inst, &catalog)?
        } else {
            let classes = lp::detect_resource_classes(&inst, &catalog);
            lp::build_lp_share_pooled(&inst, &catalog, &classes)?
        }
    };
    let sol = solve_lp(&model)?;
    println!(
        "upper bound {:.6} ({} columns, {} rows, {} iterations)",
        sol.objective,
        model.cols.len(),
        model.rows.len(),
        sol.iterations
    );
    if let Some(out) = &args.out {
        let nonzeros: Vec<serde_json::Value> = model
            .cols
            .iter()
            .zip(&sol.x)
            .filter(|(_, &x)| x > 1e-12)
            .map(|(key, &x)| match *key {
                ColKey::Assign { u, g, t } => serde_json::json!({"u": u, "g": g, "t": t, "x": x}),
                ColKey::Idle { class, t } => serde_json::json!({"idle_class": class, "t": t, "x": x}),
            })
            .collect();
        let doc = serde_json::json!({
            "objective": sol.objective,
            "iterations": sol.iterations,
            "columns": model.cols.len(),
            "rows": model.rows.len(),
            "nonzeros": nonzeros,
        });
        std::fs::write(out, serde_json::to_string_pretty(&doc)?)
            .with_context(|| format!("cannot write {}", out.display()))?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn parse_gamma(s: &str) -> Result<GammaSpec> {
    if s == "fixed-point" {
        Ok(GammaSpec::Named(GammaName::FixedPoint))
    } else {
        let v: f64 = s
            .parse()
            .with_context(|| format!("gamma must be 'fixed-point' or a number, got '{s}'"))?;
        Ok(GammaSpec::Value(v))
    }
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut config: ExperimentConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read config file {}", path.display()))?;
            if path.extension().is_some_and(|e| e == "json") {
                serde_json::from_str(&text)
                    .with_context(|| format!("cannot parse {}", path.display()))?
            } else {
                toml::from_str(&text)
                    .with_context(|| format!("cannot parse {}", path.display()))?
            }
        }
        None => ExperimentConfig {
            seed: 0,
            runs: 100,
            table_samples: 10_000,
            exact_offline: false,
            policies: Vec::new(),
            instances: Vec::new(),
        },
    };
    // Explicit flags win over the config file.
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(runs) = args.runs {
        config.runs = runs;
    }
    if let Some(samples) = args.table_samples {
        config.table_samples = samples;
    }
    if args.exact_offline {
        config.exact_offline = true;
    }
    if let Some(instance) = &args.instance {
        config.instances = vec![InstanceSource::File {
            path: instance.clone(),
        }];
    }
    if !args.policy.is_empty() {
        let gamma = args.gamma.as_deref().map(parse_gamma).transpose()?;
        config.policies = args
            .policy
            .iter()
            .map(|p| PolicyConfig {
                policy: p.clone(),
                gamma,
                epsilon: args.epsilon,
                table_samples: None,
            })
            .collect();
    }
    if config.instances.is_empty() {
        bail!("no instance given: pass --instance or a config file with instances");
    }
    if config.policies.is_empty() {
        bail!("no policy given: pass --policy or a config file with policies");
    }
    // Surface the resolved scaling parameter for adaptive policies up front.
    for source in &config.instances {
        let kappa = match source {
            InstanceSource::File { path } => load_instance(path)?.kappa,
            InstanceSource::Synthetic { params, .. } => params.kappa,
        };
        for p in &config.policies {
            if matches!(p.policy.as_str(), "adapbatch" | "adapshare") {
                let g = p
                    .gamma
                    .unwrap_or(GammaSpec::Named(GammaName::FixedPoint))
                    .resolve(kappa);
                println!("{}: gamma = {:.5} (kappa = {})", p.policy, g, kappa);
            }
        }
    }
    let report = run_experiment(&config).map_err(|e| anyhow::anyhow!("{e}"))?;
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;
    let csv_path = args.out_dir.join("report.csv");
    let json_path = args.out_dir.join("report.json");
    write_csv_file(&report, &csv_path)?;
    write_json_file(&report, &json_path)?;
    for row in &report.rows {
        println!(
            "{} / {}: mean {:.4} +- {:.4}, LP bound {:.4}, ratio {:.4}",
            row.instance, row.policy, row.mean_reward, row.stderr, row.lp_bound, row.cr_lp
        );
    }
    println!("wrote {} and {}", csv_path.display(), json_path.display());
    Ok(())
}

fn cmd_verify(args: &VerifyArgs) -> Result<bool> {
    let names: Vec<String> = if args.suite.is_empty() {
        verify::SUITES.iter().map(|s| s.to_string()).collect()
    } else {
        args.suite.clone()
    };
    let mut all_ok = true;
    for name in &names {
        let result = match name.as_str() {
            "match-rate" => verify::check_match_rate(&verify::MatchRateOptions {
                kappa: 2,
                episodes: args.episodes,
                table_samples: args.table_samples,
                gamma: args.gamma,
                seed: args.seed,
            }),
            "beta-bounds" => verify::check_beta_bounds(args.table_samples, args.seed),
            other => verify::run_suite(other)
                .with_context(|| format!("unknown suite '{other}' (available: {})", verify::SUITES.join(", ")))?,
        };
        println!("{}", result.summary());
        for failure in result.failures() {
            println!("  FAIL {}: {}", failure.label, failure.detail);
        }
        all_ok &= result.passed();
    }
    Ok(all_ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Generate(args) => cmd_generate(args).map(|()| true),
        Command::Solve(args) => cmd_solve(args).map(|()| true),
        Command::Simulate(args) => cmd_simulate(args).map(|()| true),
        Command::Verify(args) => cmd_verify(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
