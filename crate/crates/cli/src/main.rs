use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use cvxq::baseline::{lqr_trajectory, lqr_watkins_run, riccati, write_theta_trace, SineExploration};
use cvxq::duality::{boundedness_over_n, covariance_report, segment_pairs, tabular_audit, DEFAULT_RANK_THRESHOLD};
use cvxq::envs::{Environment, GridWorld, Lqr1d};
use cvxq::harness::{
    multi_run, persist_run, presets, read_theta, train, validate, validate_with, write_metrics_csv,
    write_percentiles_csv, EnvConfig, ExperimentConfig,
};
use cvxq::sampling::read_segments_csv;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "cvxq", version, about = "Convex Q-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and persist metrics, theta and a manifest.
    Train(Common),
    /// Average greedy reward of a stored theta.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Parameter file; defaults to `<out>/theta.bin`.
        #[arg(long)]
        theta: Option<PathBuf>,
    },
    /// Covariance rank and boundedness verdict on training data.
    Diagnose {
        #[command(flatten)]
        common: Common,
        /// Use stored segments instead of training.
        #[arg(long)]
        segments: Option<PathBuf>,
        /// Prefix of the data used for the probe.
        #[arg(long, default_value_t = 2000)]
        max_segments: usize,
    },
    /// Primal and dual LPs with slackness and occupancy audits on a grid.
    DualAudit {
        #[command(flatten)]
        common: Common,
        /// Cost perturbation per pair index, used to break ties.
        #[arg(long, default_value_t = 1e-9)]
        perturbation: f64,
    },
    /// Convex Q-learning against the Watkins recursion on the scalar LQR.
    LqrCompare {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100_000)]
        iterations: usize,
        #[arg(long, default_value_t = 1e-3)]
        alpha: f64,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Built-in preset, used when no config file is given.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
}

impl Common {
    /// Config file or preset, then `CVXQ_*` variables, then flags.
    fn load(&self, default_preset: &str) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(_), Some(_)) => bail!(cvxq::Error::Config("give --config or --preset, not both".into())),
            (Some(path), None) => ExperimentConfig::load(path)?,
            (None, name) => {
                let name = name.as_deref().unwrap_or(default_preset);
                presets::by_name(name).ok_or_else(|| {
                    cvxq::Error::Config(format!("unknown preset {name}; known: {}", presets::NAMES.join(", ")))
                })?
            }
        };
        cfg.apply_overrides(std::env::vars())?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(runs) = self.runs {
            cfg.runs = runs;
        }
        if let Some(episodes) = self.episodes {
            cfg.episodes = episodes;
        }
        if let Some(out) = &self.out {
            cfg.output = Some(out.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name).join(format!("seed_{}", cfg.seed)))
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| path.display().to_string())
}

fn emit(value: &serde_json::Value) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{}", serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn cmd_train(common: &Common) -> anyhow::Result<bool> {
    let cfg = common.load("mountain_car")?;
    let dir = out_dir(&cfg);
    let setup = cfg.build()?;
    if cfg.runs > 1 {
        let summary = multi_run(&cfg, cfg.runs)?;
        let mut aborted = false;
        for run in &summary.runs {
            let val = validate_with(&cfg, &setup, &run.theta, cfg.validation.runs, run.seed)?;
            persist_run(&dir.join(format!("seed_{}", run.seed)), &cfg, setup.features.as_ref(), run, Some(&val))?;
            aborted |= run.aborted.is_some();
        }
        let mut f = fs::File::create(dir.join("percentiles.csv"))?;
        write_percentiles_csv(&summary.percentiles, &mut f)?;
        emit(&serde_json::json!({
            "out": dir,
            "seeds": summary.seeds,
            "final_median_reward": summary.percentiles.last().map(|p| p.p50),
        }))?;
        return Ok(!aborted);
    }
    let run = train(&cfg, cfg.seed)?;
    let val = validate_with(&cfg, &setup, &run.theta, cfg.validation.runs, cfg.seed)?;
    persist_run(&dir, &cfg, setup.features.as_ref(), &run, Some(&val))?;
    emit(&serde_json::json!({
        "out": dir,
        "episodes": run.records.len(),
        "validation_reward": val.reward,
        "goal_rate": val.goal_rate,
        "aborted": run.aborted,
    }))?;
    Ok(run.aborted.is_none())
}

fn cmd_validate(common: &Common, theta: &Option<PathBuf>) -> anyhow::Result<bool> {
    let cfg = common.load("mountain_car")?;
    let path = theta.clone().unwrap_or_else(|| out_dir(&cfg).join("theta.bin"));
    let theta = read_theta(&path).with_context(|| path.display().to_string())?;
    let report = validate(&cfg, &theta, cfg.validation.runs, cfg.seed)?;
    emit(&serde_json::to_value(&report)?)?;
    Ok(true)
}

fn cmd_diagnose(common: &Common, segments: &Option<PathBuf>, max_segments: usize) -> anyhow::Result<bool> {
    let cfg = common.load("grid")?;
    let setup = cfg.build()?;
    let data = match segments {
        Some(path) => read_segments_csv(fs::File::open(path).with_context(|| path.display().to_string())?)?,
        None => train(&cfg, cfg.seed)?.records.into_iter().flat_map(|r| r.segments).collect(),
    };
    let data = &data[..data.len().min(max_segments)];
    if data.is_empty() {
        bail!("no training data to diagnose");
    }
    let features = setup.features.as_ref();
    let cov = covariance_report(&segment_pairs(data), features, DEFAULT_RANK_THRESHOLD)?;
    let checkpoints: Vec<usize> = (1..=4).map(|i| (data.len() * i).div_ceil(4)).collect();
    let bounded = boundedness_over_n(data, features, &checkpoints, DEFAULT_RANK_THRESHOLD, &cfg.solver)?;
    let report = serde_json::json!({
        "segments": data.len(),
        "covariance": serde_json::from_str::<serde_json::Value>(&cov.to_json())?,
        "boundedness": bounded,
    });
    if let Some(out) = &cfg.output {
        write_json(&out.join("diagnose.json"), &report)?;
    }
    emit(&report)?;
    Ok(true)
}

fn cmd_dual_audit(common: &Common, perturbation: f64) -> anyhow::Result<bool> {
    let cfg = common.load("grid")?;
    let EnvConfig::Grid(grid) = &cfg.environment else {
        bail!(cvxq::Error::Config("dual-audit needs a grid environment".into()));
    };
    let grid: GridWorld = grid.clone().with_perturbation(perturbation);
    let support: Vec<_> = (0..grid.num_states())
        .flat_map(|s| (0..grid.num_actions()).map(move |u| (s, u)))
        .map(|(s, u)| (grid.cell(s), u))
        .collect();
    let audit = tabular_audit(&grid, &support, 1e-8, 1e-6, &cfg.solver)?;
    let passed = audit.passed(1e-7, 1e-6);
    let mut report: serde_json::Value = serde_json::from_str(&audit.to_json())?;
    report["passed"] = passed.into();
    if let Some(out) = &cfg.output {
        write_json(&out.join("dual_audit.json"), &report)?;
    }
    emit(&report)?;
    Ok(passed)
}

fn cmd_lqr_compare(common: &Common, iterations: usize, alpha: f64) -> anyhow::Result<bool> {
    let cfg = common.load("lqr")?;
    let EnvConfig::Lqr(env) = &cfg.environment else {
        bail!(cvxq::Error::Config("lqr-compare needs the lqr environment".into()));
    };
    let env: Lqr1d = env.clone();
    let dir = out_dir(&cfg);
    fs::create_dir_all(&dir)?;
    let oracle = riccati(env.dt);

    let run = train(&cfg, cfg.seed)?;
    let trace: Vec<(usize, Vec<f64>)> = std::iter::once((0, run.theta0.clone()))
        .chain(run.records.iter().map(|r| (r.episode + 1, r.theta.clone())))
        .collect();
    write_theta_trace(&trace, fs::File::create(dir.join("convex_trace.csv"))?)?;
    let rel_error: Vec<f64> = run.theta.iter().zip(oracle.theta).map(|(a, b)| ((a - b) / b).abs()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let input = SineExploration::sample(10, 1.0, &mut rng);
    let data = lqr_trajectory(&env, oracle.gain, &input, 1.0, iterations);
    let t = oracle.theta;
    let inits = [("oracle", t), ("large_theta2", [t[0], 10.0 * t[1] + 1.0, 0.1 * t[2]])];
    let mut watkins = Vec::new();
    for (label, theta0) in inits {
        let res = lqr_watkins_run(theta0, alpha, &data, (iterations / 1000).max(1))?;
        write_theta_trace(&res.trace, fs::File::create(dir.join(format!("watkins_{label}.csv")))?)?;
        watkins.push(serde_json::json!({
            "init": label,
            "theta0": theta0,
            "theta": res.theta,
            "iterations": res.iterations,
            "divergence": res.divergence,
        }));
    }
    let mut metrics = fs::File::create(dir.join("metrics.csv"))?;
    write_metrics_csv(&run.records, &mut metrics)?;
    let report = serde_json::json!({
        "oracle": oracle.theta,
        "convex": { "theta": run.theta, "relative_error": rel_error, "episodes": run.records.len() },
        "watkins": watkins,
        "out": dir,
    });
    write_json(&dir.join("comparison.json"), &report)?;
    emit(&report)?;
    Ok(true)
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match &cli.command {
        Command::Train(common) => cmd_train(common),
        Command::Validate { common, theta } => cmd_validate(common, theta),
        Command::Diagnose {
            common,
            segments,
            max_segments,
        } => cmd_diagnose(common, segments, *max_segments),
        Command::DualAudit { common, perturbation } => cmd_dual_audit(common, *perturbation),
        Command::LqrCompare {
            common,
            iterations,
            alpha,
        } => cmd_lqr_compare(common, *iterations, *alpha),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("CVXQ_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            let usage = e
                .downcast_ref::<cvxq::Error>()
                .is_some_and(|e| matches!(e, cvxq::Error::Config(_)));
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}

