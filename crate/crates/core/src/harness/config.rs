use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::envs::{Acrobot, CartPole, Environment, GridWorld, Lqr1d, MountainCar, State, StateBox};
use crate::error::{Error, Result};
use crate::features::{FeatureMap, QuadraticLqrBasis, RandomFourierFeatures, SeparableBasis, TabularBasis};
use crate::par::Execution;
use crate::program::{EpisodicUpdateSpec, RegularizerKind};
use crate::sampling::{Binning, Sampler};
use crate::solver::SolverOptions;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnvConfig {
    MountainCar(MountainCar),
    CartPole(CartPole),
    Acrobot(Acrobot),
    Lqr(Lqr1d),
    Grid(GridWorld),
}

impl EnvConfig {
    pub fn build(&self) -> Arc<dyn Environment> {
        match self {
            EnvConfig::MountainCar(e) => Arc::new(e.clone()),
            EnvConfig::CartPole(e) => Arc::new(e.clone()),
            EnvConfig::Acrobot(e) => Arc::new(e.clone()),
            EnvConfig::Lqr(e) => Arc::new(e.clone()),
            EnvConfig::Grid(e) => Arc::new(e.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BasisConfig {
    /// One-hot over the grid's pairs. Grid environments only.
    Tabular,
    /// Separable random Fourier features, zeroed on the goal set.
    Rff {
        d_x: usize,
        #[serde(default = "default_bandwidths")]
        bandwidths: Vec<f64>,
        #[serde(default)]
        seed: u64,
    },
    /// `(x^2, xu, u^2)`. LQR only.
    QuadraticLqr,
}

fn default_bandwidths() -> Vec<f64> {
    RandomFourierFeatures::DEFAULT_BANDWIDTHS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    /// Bins per state coordinate; empty means one bin per coordinate.
    pub bins: Vec<usize>,
    /// Segment length cap. `1` reproduces raw sampling.
    pub n_bar: usize,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { bins: Vec::new(), n_bar: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplorationConfig {
    pub epsilon0: f64,
    pub xi: f64,
    pub epsilon_max: f64,
}

impl Default for ExplorationConfig {
    fn default() -> Self {
        Self {
            epsilon0: 0.1,
            xi: 0.1,
            epsilon_max: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Behavior {
    /// Greedy with probability `epsilon_n`, uniform otherwise.
    EpsilonGreedy,
    /// LQR only: `u = -K* x + amplitude * sum_v sin(omega_v t)` snapped to
    /// the action grid, frequencies redrawn each episode.
    SineExploration { amplitude: f64, n_sines: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theta0 {
    Zero,
    StandardNormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    /// Greedy episodes averaged by `validate`.
    pub runs: usize,
    /// Cap on sampled decisions per validation episode.
    pub cap: usize,
    /// Fixed start state; `None` draws from the initial-condition set.
    pub start: Option<State>,
    /// Validate every this many episodes during training (`0` = never).
    pub every: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            runs: 10,
            cap: 200,
            start: None,
            every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub environment: EnvConfig,
    pub basis: BasisConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub update: EpisodicUpdateSpec,
    #[serde(default)]
    pub exploration: ExplorationConfig,
    #[serde(default = "default_behavior")]
    pub behavior: Behavior,
    /// Training initial-condition box; `None` uses the environment's own set.
    #[serde(default)]
    pub initial_box: Option<StateBox>,
    /// Cap on sampled decisions per training episode.
    pub episode_cap: usize,
    pub episodes: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_theta0")]
    pub theta0: Theta0,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    /// Stop training at the first failed update instead of carrying forward.
    #[serde(default)]
    pub abort_on_solver_failure: bool,
    #[serde(default)]
    pub execution: Execution,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

fn default_behavior() -> Behavior {
    Behavior::EpsilonGreedy
}

fn default_runs() -> usize {
    1
}

fn default_theta0() -> Theta0 {
    Theta0::Zero
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.update.validate().map_err(|e| Error::Config(e.to_string()))?;
        let ex = &self.exploration;
        if !(ex.epsilon0 > 0.0 && ex.epsilon0 <= 1.0) {
            return bad(format!("epsilon0 = {} must lie in (0, 1]", ex.epsilon0));
        }
        if !(0.0..=1.0).contains(&ex.xi) || !(0.0..=1.0).contains(&ex.epsilon_max) {
            return bad("xi and epsilon_max must lie in [0, 1]".into());
        }
        if self.episode_cap == 0 {
            return bad("episode_cap must be positive".into());
        }
        if self.runs == 0 {
            return bad("runs must be positive".into());
        }
        if self.sampling.n_bar == 0 {
            return bad("n_bar must be positive".into());
        }
        if self.validation.runs == 0 || self.validation.cap == 0 {
            return bad("validation runs and cap must be positive".into());
        }
        let env = self.environment.build();
        if !self.sampling.bins.is_empty() && self.sampling.bins.len() != env.state_dim() {
            return bad(format!(
                "{} bin counts for a {}-dimensional state",
                self.sampling.bins.len(),
                env.state_dim()
            ));
        }
        if let Some(b) = &self.initial_box {
            if b.len() != env.state_dim() || b.iter().any(|(lo, hi)| !(lo <= hi)) {
                return bad(format!("initial box {b:?} does not fit the state"));
            }
        }
        if let Some(start) = &self.validation.start {
            if start.len() != env.state_dim() {
                return bad(format!("validation start has dimension {}", start.len()));
            }
        }
        let is_lqr = matches!(self.environment, EnvConfig::Lqr(_));
        match (&self.basis, &self.environment) {
            (BasisConfig::Tabular, EnvConfig::Grid(_)) => {}
            (BasisConfig::Tabular, _) => return bad("tabular basis needs the grid environment".into()),
            (BasisConfig::QuadraticLqr, _) if !is_lqr => return bad("quadratic basis needs the lqr environment".into()),
            _ => {}
        }
        if matches!(self.behavior, Behavior::SineExploration { .. }) && !is_lqr {
            return bad("sine exploration needs the lqr environment".into());
        }
        self.build()?;
        Ok(())
    }

    /// Environment, basis and sampler for this configuration.
    pub fn build(&self) -> Result<Setup> {
        let env = self.environment.build();
        let features: Arc<dyn FeatureMap> = match (&self.basis, &self.environment) {
            (BasisConfig::Tabular, EnvConfig::Grid(g)) => {
                Arc::new(TabularBasis::new(g.states(), g.num_actions(), g.equilibrium())?)
            }
            (BasisConfig::Tabular, _) => return Err(Error::Config("tabular basis needs a grid".into())),
            (BasisConfig::Rff { d_x, bandwidths, seed }, _) => {
                let rff = RandomFourierFeatures::new(*d_x, bandwidths, &env.state_bounds(), *seed)?;
                let goal_env = env.clone();
                Arc::new(
                    SeparableBasis::new(rff, env.num_actions(), env.equilibrium())
                        .with_zero_set(Arc::new(move |x: &[f64]| goal_env.is_goal(x))),
                )
            }
            (BasisConfig::QuadraticLqr, EnvConfig::Lqr(l)) => Arc::new(QuadraticLqrBasis::new(l.action_grid())),
            (BasisConfig::QuadraticLqr, _) => return Err(Error::Config("quadratic basis needs lqr".into())),
        };
        let bins = if self.sampling.bins.is_empty() {
            vec![1; env.state_dim()]
        } else {
            self.sampling.bins.clone()
        };
        let sampler = Sampler::new(Binning::uniform(env.state_bounds(), bins)?, self.sampling.n_bar)?;
        Ok(Setup { env, features, sampler })
    }

    /// Apply `CVXQ_*` overrides from `(key, value)` pairs, typically
    /// `std::env::vars()`. Unknown `CVXQ_` keys are rejected.
    pub fn apply_overrides<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("{key}={v} does not parse")))
        }
        for (key, v) in vars {
            let Some(name) = key.strip_prefix("CVXQ_") else { continue };
            match name {
                "SEED" => self.seed = parse(&key, &v)?,
                "EPISODES" => self.episodes = parse(&key, &v)?,
                "RUNS" => self.runs = parse(&key, &v)?,
                "EPISODE_CAP" => self.episode_cap = parse(&key, &v)?,
                "N_BAR" => self.sampling.n_bar = parse(&key, &v)?,
                "ALPHA" => self.update.alpha = parse(&key, &v)?,
                "KAPPA" => self.update.kappa = parse(&key, &v)?,
                "TOL" => self.update.tol = parse(&key, &v)?,
                "EPSILON_MAX" => self.exploration.epsilon_max = parse(&key, &v)?,
                "OUTPUT" => self.output = Some(PathBuf::from(v)),
                "LOG" => {}
                _ => return Err(Error::Config(format!("unknown override {key}"))),
            }
        }
        self.validate()
    }
}

/// Built objects shared by every run of a configuration.
#[derive(Clone)]
pub struct Setup {
    pub env: Arc<dyn Environment>,
    pub features: Arc<dyn FeatureMap>,
    pub sampler: Sampler,
}

/// Named presets.
pub mod presets {
    use super::*;

    pub const NAMES: [&str; 9] = [
        "mountain_car",
        "mountain_car_raw",
        "mountain_car_eps0",
        "mountain_car_eps1",
        "mountain_car_eps05",
        "acrobot",
        "cartpole",
        "lqr",
        "grid",
    ];

    pub fn by_name(name: &str) -> Option<ExperimentConfig> {
        Some(match name {
            "mountain_car" => mountain_car(),
            "mountain_car_raw" => mountain_car_raw(),
            "mountain_car_eps0" => with_epsilon_max(mountain_car(), 0.0),
            "mountain_car_eps1" => with_epsilon_max(mountain_car(), 1.0),
            "mountain_car_eps05" => with_epsilon_max(mountain_car(), 0.5),
            "acrobot" => acrobot(),
            "cartpole" => cartpole(),
            "lqr" => lqr(),
            "grid" => grid(),
            _ => return None,
        })
    }

    pub fn with_epsilon_max(mut cfg: ExperimentConfig, epsilon_max: f64) -> ExperimentConfig {
        cfg.exploration.epsilon_max = epsilon_max;
        cfg.name = format!("{}_eps{}", cfg.name, epsilon_max);
        cfg
    }

    fn base(name: &str, environment: EnvConfig, basis: BasisConfig) -> ExperimentConfig {
        ExperimentConfig {
            name: name.into(),
            environment,
            basis,
            sampling: SamplingConfig::default(),
            update: EpisodicUpdateSpec::default(),
            exploration: ExplorationConfig::default(),
            behavior: Behavior::EpsilonGreedy,
            initial_box: None,
            episode_cap: 200,
            episodes: 100,
            runs: 1,
            seed: 0,
            theta0: Theta0::Zero,
            validation: ValidationConfig::default(),
            solver: SolverOptions::default(),
            abort_on_solver_failure: false,
            execution: Execution::Parallel,
            output: None,
        }
    }

    /// Bandwidths for Mountain Car on the unit-scaled state. The wide
    /// default list is nearly linear at the top end and cannot resolve the
    /// spiral value function with 100 features.
    pub const MOUNTAIN_CAR_BANDWIDTHS: [f64; 4] = [0.1, 0.2, 0.4, 0.8];

    /// Scaled Mountain Car with state-dependent sampling.
    pub fn mountain_car() -> ExperimentConfig {
        let mut cfg = base(
            "mountain_car",
            EnvConfig::MountainCar(MountainCar::default()),
            BasisConfig::Rff {
                d_x: 100,
                bandwidths: MOUNTAIN_CAR_BANDWIDTHS.to_vec(),
                seed: 0,
            },
        );
        cfg.update.alpha = 100.0;
        cfg.sampling = SamplingConfig { bins: vec![20, 20], n_bar: 50 };
        cfg.episode_cap = 100;
        cfg.episodes = 300;
        cfg.validation = ValidationConfig {
            runs: 1,
            cap: 200,
            start: Some(MountainCar::standard_start()),
            every: 0,
        };
        cfg
    }

    /// Same budget as `mountain_car`, one raw step per decision.
    pub fn mountain_car_raw() -> ExperimentConfig {
        let mut cfg = mountain_car();
        cfg.name = "mountain_car_raw".into();
        cfg.sampling.n_bar = 1;
        cfg
    }

    pub fn acrobot() -> ExperimentConfig {
        let mut cfg = base(
            "acrobot",
            EnvConfig::Acrobot(Acrobot::default()),
            BasisConfig::Rff {
                d_x: 100,
                bandwidths: default_bandwidths(),
                seed: 0,
            },
        );
        cfg.sampling = SamplingConfig { bins: vec![10, 10, 10, 10], n_bar: 20 };
        cfg.episode_cap = 100;
        cfg.episodes = 200;
        cfg.validation.cap = 500;
        cfg
    }

    pub fn cartpole() -> ExperimentConfig {
        let mut cfg = base(
            "cartpole",
            EnvConfig::CartPole(CartPole::default()),
            BasisConfig::Rff {
                d_x: 100,
                bandwidths: default_bandwidths(),
                seed: 0,
            },
        );
        cfg.sampling = SamplingConfig { bins: vec![6, 6, 6, 6], n_bar: 10 };
        cfg.episode_cap = 100;
        cfg.episodes = 200;
        cfg.validation.cap = 500;
        cfg
    }

    /// Quadratic basis, no regularizer, sine exploration. `Tol = 0`: any
    /// positive tolerance lets the weakly excited `x^2` coefficient drift.
    pub fn lqr() -> ExperimentConfig {
        let mut cfg = base("lqr", EnvConfig::Lqr(Lqr1d::default()), BasisConfig::QuadraticLqr);
        cfg.update = EpisodicUpdateSpec {
            kappa: 0.0,
            tol: 0.0,
            alpha: 1e3,
            regularizer: RegularizerKind::None,
            ..EpisodicUpdateSpec::default()
        };
        cfg.behavior = Behavior::SineExploration { amplitude: 1.0, n_sines: 10 };
        cfg.episode_cap = 100;
        cfg.episodes = 20;
        cfg.validation.cap = 100;
        cfg
    }

    /// Tabular grid, uniform exploration, long episodes.
    pub fn grid() -> ExperimentConfig {
        let mut cfg = base("grid", EnvConfig::Grid(GridWorld::new(3, 3)), BasisConfig::Tabular);
        cfg.update = EpisodicUpdateSpec {
            kappa: 0.0,
            tol: 0.0,
            alpha: 1e3,
            regularizer: RegularizerKind::None,
            ..EpisodicUpdateSpec::default()
        };
        cfg.exploration = ExplorationConfig {
            epsilon0: 0.1,
            xi: 0.0,
            epsilon_max: 0.1,
        };
        cfg.episode_cap = 400;
        cfg.episodes = 3;
        cfg.validation.cap = 50;
        cfg
    }
}
