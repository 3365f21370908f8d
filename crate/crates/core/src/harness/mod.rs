//! Episodic training loop, exploration schedule, validation and persistence.

mod config;
mod persist;

pub use config::{
    presets, BasisConfig, Behavior, EnvConfig, ExperimentConfig, ExplorationConfig, SamplingConfig, Setup, Theta0,
    ValidationConfig,
};
pub use persist::{
    persist_run, read_theta, read_theta_meta, write_metrics_csv, write_percentiles_csv, write_theta, RunManifest,
    ThetaMeta,
};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::baseline::{riccati, SineExploration};
use crate::envs::{uniform_in_box, Lqr1d, State};
use crate::error::{Error, Result};
use crate::features::{greedy_action, FeatureMap};
use crate::par;
use crate::program::{episodic_update, gamma};
use crate::sampling::TrajectorySegment;

/// `eps_{n+1} = min{(1 + xi) eps_n, eps_max}`, starting from
/// `min{eps_0, eps_max}` so the sequence never decreases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplorationSchedule {
    pub epsilon0: f64,
    pub xi: f64,
    pub epsilon_max: f64,
    current: f64,
}

impl ExplorationSchedule {
    pub fn new(epsilon0: f64, xi: f64, epsilon_max: f64) -> Result<Self> {
        if !(epsilon0 > 0.0 && epsilon0 <= 1.0) {
            return Err(Error::Parameter(format!("epsilon0 = {epsilon0} must lie in (0, 1]")));
        }
        if !(0.0..=1.0).contains(&xi) || !(0.0..=1.0).contains(&epsilon_max) {
            return Err(Error::Parameter("xi and epsilon_max must lie in [0, 1]".into()));
        }
        Ok(Self {
            epsilon0,
            xi,
            epsilon_max,
            current: epsilon0.min(epsilon_max),
        })
    }

    pub fn from_config(cfg: &ExplorationConfig) -> Result<Self> {
        Self::new(cfg.epsilon0, cfg.xi, cfg.epsilon_max)
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    /// Move to the next episode and return the new `eps`.
    pub fn advance(&mut self) -> f64 {
        self.current = ((1.0 + self.xi) * self.current).min(self.epsilon_max);
        self.current
    }
}

/// Greedy action with probability `epsilon`, otherwise uniform over actions.
pub fn behavior_action(
    x: &[f64],
    theta: &[f64],
    epsilon: f64,
    rng: &mut dyn RngCore,
    features: &dyn FeatureMap,
) -> usize {
    if rng.gen::<f64>() < epsilon {
        greedy_action(theta, x, features)
    } else {
        rng.gen_range(0..features.num_actions())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UpdateStatus {
    Optimal,
    /// Empty episode; `theta` carried forward.
    Skipped,
    /// Solver failure; `theta` carried forward.
    Failed { message: String },
}

impl UpdateStatus {
    pub fn label(&self) -> &'static str {
        match self {
            UpdateStatus::Optimal => "optimal",
            UpdateStatus::Skipped => "skipped",
            UpdateStatus::Failed { .. } => "failed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Sampled decisions before this episode.
    pub reset_time: usize,
    pub segments: Vec<TrajectorySegment>,
    pub reached_goal: bool,
    pub epsilon: f64,
    /// Parameter after the update at the end of this episode.
    pub theta: Vec<f64>,
    pub status: UpdateStatus,
    /// Bellman error of the updated parameter on this episode's segments.
    pub gamma: f64,
    /// Standard-form QP objective, when solved.
    pub qp_objective: Option<f64>,
    /// Minus the episode's cumulative cost.
    pub reward: f64,
    pub validation_reward: Option<f64>,
    pub step_norm: f64,
}

impl EpisodeRecord {
    pub fn length(&self) -> usize {
        self.segments.len()
    }

    pub fn raw_steps(&self) -> usize {
        self.segments.iter().map(|s| s.len).sum()
    }

    pub fn theta_norm(&self) -> f64 {
        norm(&self.theta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub seed: u64,
    pub theta0: Vec<f64>,
    pub theta: Vec<f64>,
    pub records: Vec<EpisodeRecord>,
    /// Set when `abort_on_solver_failure` stopped the run.
    pub aborted: Option<String>,
}

impl TrainResult {
    pub fn epsilon_trace(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.epsilon).collect()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.reward).collect()
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Training, theta0 and validation draw from separate streams of one seed.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn initial_theta(cfg: &ExperimentConfig, dim: usize, seed: u64) -> Vec<f64> {
    match cfg.theta0 {
        Theta0::Zero => vec![0.0; dim],
        Theta0::StandardNormal => {
            let mut rng = stream(seed, 1);
            (0..dim).map(|_| rng.sample(StandardNormal)).collect()
        }
    }
}

/// Per-episode input source for the behavior policy.
enum Driver {
    Greedy,
    Sine {
        env: Lqr1d,
        gain: f64,
        input: SineExploration,
    },
}

impl Driver {
    fn new(cfg: &ExperimentConfig, rng: &mut dyn RngCore) -> Self {
        match (&cfg.behavior, &cfg.environment) {
            (Behavior::SineExploration { amplitude, n_sines }, EnvConfig::Lqr(env)) => Driver::Sine {
                env: env.clone(),
                gain: riccati(env.dt).gain,
                input: SineExploration::sample(*n_sines, *amplitude, rng),
            },
            _ => Driver::Greedy,
        }
    }

    fn action(
        &self,
        x: &[f64],
        step: usize,
        theta: &[f64],
        epsilon: f64,
        rng: &mut dyn RngCore,
        features: &dyn FeatureMap,
    ) -> usize {
        match self {
            Driver::Greedy => behavior_action(x, theta, epsilon, rng, features),
            Driver::Sine { env, gain, input } => {
                env.nearest_action(-gain * x[0] + input.value(step as f64 * env.dt))
            }
        }
    }
}

/// Train from `theta0` drawn per the config.
pub fn train(cfg: &ExperimentConfig, seed: u64) -> Result<TrainResult> {
    let setup = cfg.build()?;
    let theta0 = initial_theta(cfg, setup.features.dim(), seed);
    train_from(cfg, &setup, seed, theta0)
}

pub fn train_from(cfg: &ExperimentConfig, setup: &Setup, seed: u64, theta0: Vec<f64>) -> Result<TrainResult> {
    let features = setup.features.as_ref();
    let env = setup.env.as_ref();
    if theta0.len() != features.dim() {
        return Err(Error::Shape(format!("theta0 has {} entries, basis has {}", theta0.len(), features.dim())));
    }
    let mut rng = stream(seed, 0);
    let mut schedule = ExplorationSchedule::from_config(&cfg.exploration)?;
    let mut theta = theta0.clone();
    let mut records = Vec::with_capacity(cfg.episodes);
    let mut clock = 0;
    let mut aborted = None;
    for episode in 0..cfg.episodes {
        let epsilon = schedule.current();
        let driver = Driver::new(cfg, &mut rng);
        let mut x: State = match &cfg.initial_box {
            Some(b) => uniform_in_box(b, &mut rng),
            None => env.sample_initial(&mut rng),
        };
        let mut segments = Vec::new();
        let mut raw = 0;
        let mut reached_goal = env.is_goal(&x);
        while !reached_goal && segments.len() < cfg.episode_cap {
            let a = driver.action(&x, raw, &theta, epsilon, &mut rng, features);
            let seg = setup.sampler.run(env, &x, a);
            raw += seg.len;
            x = seg.x_next.clone();
            segments.push(seg);
            reached_goal = env.is_goal(&x);
        }
        let reward = 0.0 - segments.iter().map(|s| s.cost).sum::<f64>();
        let (next, status, qp_objective) = match episodic_update(&theta, &segments, &cfg.update, features, &cfg.solver) {
            Ok(out) => match out.result {
                Some(res) => (out.theta, UpdateStatus::Optimal, Some(res.objective)),
                None => (out.theta, UpdateStatus::Skipped, None),
            },
            Err(e) => {
                log::warn!("episode {episode}: update failed, carrying theta forward: {e}");
                (theta.clone(), UpdateStatus::Failed { message: e.to_string() }, None)
            }
        };
        let step_norm = norm(&next.iter().zip(&theta).map(|(a, b)| a - b).collect::<Vec<_>>());
        theta = next;
        let validation_reward = if cfg.validation.every > 0 && (episode + 1) % cfg.validation.every == 0 {
            Some(validate_with(cfg, setup, &theta, cfg.validation.runs, seed)?.reward)
        } else {
            None
        };
        let failed = matches!(status, UpdateStatus::Failed { .. });
        let message = if let UpdateStatus::Failed { message } = &status { Some(message.clone()) } else { None };
        records.push(EpisodeRecord {
            episode,
            reset_time: clock,
            gamma: if segments.is_empty() { 0.0 } else { gamma(&theta, &segments, features)? },
            segments,
            reached_goal,
            epsilon,
            theta: theta.clone(),
            status,
            qp_objective,
            reward,
            validation_reward,
            step_norm,
        });
        clock += records.last().map_or(0, |r| r.length());
        schedule.advance();
        if failed && cfg.abort_on_solver_failure {
            aborted = message;
            break;
        }
    }
    Ok(TrainResult {
        seed,
        theta0,
        theta,
        records,
        aborted,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// `R = -(1/N) sum_n sum_k C_k` under the greedy policy.
    pub reward: f64,
    pub returns: Vec<f64>,
    pub decisions: Vec<usize>,
    pub goal_rate: f64,
}

/// Average cumulative reward of the greedy policy for `theta`.
pub fn validate(cfg: &ExperimentConfig, theta: &[f64], n_runs: usize, seed: u64) -> Result<ValidationReport> {
    let setup = cfg.build()?;
    validate_with(cfg, &setup, theta, n_runs, seed)
}

pub fn validate_with(
    cfg: &ExperimentConfig,
    setup: &Setup,
    theta: &[f64],
    n_runs: usize,
    seed: u64,
) -> Result<ValidationReport> {
    if n_runs == 0 {
        return Err(Error::Parameter("validation needs at least one run".into()));
    }
    if theta.len() != setup.features.dim() {
        return Err(Error::Shape(format!("theta has {} entries, basis has {}", theta.len(), setup.features.dim())));
    }
    let env = setup.env.as_ref();
    let mut rng = stream(seed, 2);
    let mut returns = Vec::with_capacity(n_runs);
    let mut decisions = Vec::with_capacity(n_runs);
    let mut goals = 0;
    for _ in 0..n_runs {
        let mut x = match &cfg.validation.start {
            Some(x0) => x0.clone(),
            None => env.sample_initial(&mut rng),
        };
        let mut total = 0.0;
        let mut k = 0;
        while !env.is_goal(&x) && k < cfg.validation.cap {
            let a = greedy_action(theta, &x, setup.features.as_ref());
            let seg = setup.sampler.run(env, &x, a);
            total += seg.cost;
            x = seg.x_next;
            k += 1;
        }
        goals += env.is_goal(&x) as usize;
        returns.push(0.0 - total);
        decisions.push(k);
    }
    Ok(ValidationReport {
        reward: returns.iter().sum::<f64>() / n_runs as f64,
        returns,
        decisions,
        goal_rate: goals as f64 / n_runs as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodePercentiles {
    pub episode: usize,
    pub p10: f64,
    pub p50: f64,
    pub p90: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiRunSummary {
    pub seeds: Vec<u64>,
    pub runs: Vec<TrainResult>,
    pub percentiles: Vec<EpisodePercentiles>,
}

/// Linear-interpolation percentile of `values` (sorted in place).
pub fn percentile(values: &mut [f64], p: f64) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    if values.is_empty() {
        return f64::NAN;
    }
    let pos = p / 100.0 * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
}

/// Independent runs with seeds `seed, seed + 1, ...`, scheduled per the
/// config's execution mode. Each run owns its own state.
pub fn multi_run(cfg: &ExperimentConfig, n_runs: usize) -> Result<MultiRunSummary> {
    let seeds: Vec<u64> = (0..n_runs as u64).map(|r| cfg.seed.wrapping_add(r)).collect();
    multi_run_seeds(cfg, &seeds)
}

pub fn multi_run_seeds(cfg: &ExperimentConfig, seeds: &[u64]) -> Result<MultiRunSummary> {
    if seeds.len() < 2 {
        return Err(Error::Parameter("multi_run needs at least two runs".into()));
    }
    let setup = cfg.build()?;
    let runs = par::map(cfg.execution, seeds, |&seed| {
        let theta0 = initial_theta(cfg, setup.features.dim(), seed);
        train_from(cfg, &setup, seed, theta0)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let episodes = runs.iter().map(|r| r.records.len()).min().unwrap_or(0);
    let percentiles = (0..episodes)
        .map(|n| {
            let mut v: Vec<f64> = runs.iter().map(|r| r.records[n].reward).collect();
            EpisodePercentiles {
                episode: n,
                p10: percentile(&mut v, 10.0),
                p50: percentile(&mut v, 50.0),
                p90: percentile(&mut v, 90.0),
            }
        })
        .collect();
    Ok(MultiRunSummary {
        seeds: seeds.to_vec(),
        runs,
        percentiles,
    })
}
