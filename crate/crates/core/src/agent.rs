//! Tabular Q-learning and the three training strategies.
//!
//! **ε is the probability of exploiting.** With probability ε the agent
//! takes the greedy action and otherwise a uniformly random one. This is
//! the reverse of the textbook ε-greedy convention: ε starts low (mostly
//! random) and grows toward 1 (pure exploitation).

use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{
    Action, EnvConfig, EnvError, Environment, EpisodeLog, VoltageInit, STEPS_PER_DAY,
};
use crate::qtable::{QTable, QTableError};
use crate::trace::{EventTrace, LightTrace, TraceError};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    InvalidConfig(String),
    #[error("trace has {have} days, training needs {need}")]
    TraceTooShort { have: usize, need: usize },
    #[error("no transfer sources given")]
    NoSources,
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Table(#[from] QTableError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, AgentError>;

/// How a node's table is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Train once on historical data.
    OneTime,
    /// Retrain nightly on the previous day, inheriting the table.
    #[default]
    DayByDay,
    /// Start from another table, then continue day by day.
    Transfer,
}

impl std::str::FromStr for Strategy {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "one_time" => Ok(Strategy::OneTime),
            "day_by_day" => Ok(Strategy::DayByDay),
            "transfer" => Ok(Strategy::Transfer),
            _ => Err(format!("unknown strategy `{s}` (expected one_time, day_by_day or transfer)")),
        }
    }
}

/// Storage state at the start of each simulated episode after the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStart {
    /// Continue from where the previous episode ended.
    #[default]
    CarryOver,
    /// Uniform voltage between the death threshold and full.
    Random,
}

/// What the ε step counter spans.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpsilonScope {
    /// ε restarts at `epsilon_min` every episode.
    Episode,
    /// One counter for the whole training run, so exploration is
    /// concentrated in the first few hundred steps.
    #[default]
    Run,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub gamma: f64,
    pub alpha: f64,
    pub epsilon_min: f64,
    pub epsilon_max: f64,
    /// Added to ε after every step.
    pub epsilon_increment: f64,
    pub epsilon_scope: EpsilonScope,
    /// Episode start for one-time and transfer training.
    pub episode_start: EpisodeStart,
    /// Episode start for nightly day-by-day training.
    pub nightly_episode_start: EpisodeStart,
    /// Exploitation probability while deployed after day-by-day training.
    pub epsilon_deploy: f64,
    /// Exploitation probability while deployed after one-time training.
    pub epsilon_deploy_one_time: f64,
    /// Relative mean-Q change below which a checkpoint counts as stable.
    pub convergence_threshold: f64,
    /// Consecutive stable checkpoints required.
    pub convergence_checkpoints: usize,
    /// Episodes between mean-Q checkpoints.
    pub checkpoint_interval: usize,
    pub episode_cap: usize,
    pub wall_clock_cap_s: f64,
    /// Days of trace used by one-time training.
    pub training_days: usize,
    /// When set, tables start at `U(-s, s)` instead of zero.
    pub random_init_scale: Option<f64>,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            alpha: 0.1,
            epsilon_min: 0.1,
            epsilon_max: 1.0,
            epsilon_increment: 0.0004,
            epsilon_scope: EpsilonScope::Run,
            episode_start: EpisodeStart::CarryOver,
            nightly_episode_start: EpisodeStart::Random,
            epsilon_deploy: 1.0,
            epsilon_deploy_one_time: 0.9,
            convergence_threshold: 0.05,
            convergence_checkpoints: 3,
            checkpoint_interval: 100,
            episode_cap: 20_000,
            wall_clock_cap_s: 1800.0,
            training_days: 15,
            random_init_scale: None,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AgentError::InvalidConfig(m.to_string()));
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("alpha must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return bad("gamma must be in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.epsilon_min)
            || !(0.0..=1.0).contains(&self.epsilon_max)
            || self.epsilon_min > self.epsilon_max
        {
            return bad("need 0 <= epsilon_min <= epsilon_max <= 1");
        }
        if !self.epsilon_increment.is_finite() || self.epsilon_increment < 0.0 {
            return bad("epsilon_increment must be >= 0");
        }
        for e in [self.epsilon_deploy, self.epsilon_deploy_one_time] {
            if !(0.0..=1.0).contains(&e) {
                return bad("deployment epsilon must be in [0, 1]");
            }
        }
        if self.checkpoint_interval == 0 || self.convergence_checkpoints == 0 {
            return bad("checkpoint interval and count must be >= 1");
        }
        if !self.convergence_threshold.is_finite() || self.convergence_threshold <= 0.0 {
            return bad("convergence_threshold must be > 0");
        }
        Ok(())
    }

    fn initial_table(&self, env: &EnvConfig, seed: u64) -> QTable {
        match self.random_init_scale {
            Some(s) => QTable::random(env.features, env.actions.clone(), s, seed),
            None => QTable::zeros(env.features, env.actions.clone()),
        }
    }
}

/// ε after `step_count` increments.
pub fn epsilon_schedule(step_count: u64, cfg: &AgentConfig) -> f64 {
    (cfg.epsilon_min + cfg.epsilon_increment * step_count as f64).min(cfg.epsilon_max)
}

/// Greedy with probability `epsilon`, uniformly random otherwise.
pub fn select_action<R: Rng + ?Sized>(q: &QTable, s: usize, epsilon: f64, rng: &mut R) -> Action {
    let u: f64 = rng.random();
    if u < epsilon {
        q.argmax(s)
    } else {
        Action(rng.random_range(0..q.n_actions()))
    }
}

pub fn q_update(q: &mut QTable, s: usize, a: usize, r: f64, s_next: usize, alpha: f64, gamma: f64) {
    let target = r + gamma * q.max(s_next);
    let row = q.row_mut(s);
    row[a] += alpha * (target - row[a]);
}

/// True when each of the last `k` checkpoint-to-checkpoint relative
/// changes in mean Q is below `threshold`.
pub fn has_converged(history: &[f64], threshold: f64, k: usize) -> bool {
    if k == 0 || history.len() < k + 1 {
        return false;
    }
    history[history.len() - k - 1..]
        .windows(2)
        .all(|w| (w[1] - w[0]).abs() / w[0].abs().max(1e-9) < threshold)
}

/// One learning transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// A day-episodic decision process the trainer can drive.
pub trait Mdp {
    fn n_states(&self) -> usize;
    fn n_actions(&self) -> usize;
    fn days(&self) -> usize;
    /// Voltage span used for randomized episode starts.
    fn storage_range(&self) -> (f64, f64);
    /// Moves to the start of `day` and returns the state id.
    fn reset_day(&mut self, day: usize, init: VoltageInit) -> std::result::Result<usize, EnvError>;
    fn advance(&mut self, action: usize) -> std::result::Result<Transition, EnvError>;
}

impl Mdp for Environment<'_> {
    fn n_states(&self) -> usize {
        self.config().n_states()
    }

    fn n_actions(&self) -> usize {
        self.config().actions.len()
    }

    fn days(&self) -> usize {
        Environment::days(self)
    }

    fn storage_range(&self) -> (f64, f64) {
        (self.config().energy.v_dead, self.config().energy.v_max)
    }

    fn reset_day(&mut self, day: usize, init: VoltageInit) -> std::result::Result<usize, EnvError> {
        self.reset(day, init)?;
        Ok(self.state_id())
    }

    fn advance(&mut self, action: usize) -> std::result::Result<Transition, EnvError> {
        let o = self.step(Action(action))?;
        Ok(Transition { state: o.state_id, action, reward: o.reward, next_state: o.next_state_id })
    }
}

/// Learning curves of one training run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingRun {
    pub episode_rewards: Vec<f64>,
    /// Mean Q at each checkpoint, starting with the initial table.
    pub mean_q_history: Vec<f64>,
    /// Mean Q per action at each checkpoint.
    pub mean_q_per_action: Vec<Vec<f64>>,
    pub checkpoint_episodes: Vec<usize>,
    pub episodes: usize,
    pub steps: u64,
    /// Episode count at which the convergence rule first held.
    pub converged_at: Option<usize>,
    pub elapsed_s: f64,
}

impl TrainingRun {
    pub fn converged(&self) -> bool {
        self.converged_at.is_some()
    }

    /// `episode,total_reward,mean_q`; mean Q is carried forward from the
    /// latest checkpoint.
    pub fn write_curve_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "episode,total_reward,mean_q")?;
        let mut ck = 0;
        for (e, r) in self.episode_rewards.iter().enumerate() {
            while ck + 1 < self.checkpoint_episodes.len() && self.checkpoint_episodes[ck + 1] <= e {
                ck += 1;
            }
            let mq = self.mean_q_history.get(ck).copied().unwrap_or(0.0);
            writeln!(w, "{},{},{}", e, r, mq)?;
        }
        Ok(())
    }
}

/// Runs Q-learning episodes on `mdp`, each a uniformly drawn day from
/// `days`, until the mean-Q rule holds or a cap is hit. The first episode
/// starts from `init`; later ones carry the storage state over.
pub fn train_episodes<M: Mdp, R: Rng>(
    mdp: &mut M,
    q: &mut QTable,
    days: &[usize],
    init: VoltageInit,
    start: EpisodeStart,
    cfg: &AgentConfig,
    rng: &mut R,
) -> Result<TrainingRun> {
    cfg.validate()?;
    if days.is_empty() {
        return Err(AgentError::TraceTooShort { have: 0, need: 1 });
    }
    let clock = Instant::now();
    let mut run = TrainingRun::default();
    let checkpoint = |run: &mut TrainingRun, q: &QTable| {
        run.mean_q_history.push(q.mean());
        run.mean_q_per_action.push(q.mean_per_action());
        run.checkpoint_episodes.push(run.episodes);
    };
    checkpoint(&mut run, q);
    let mut step_count = 0u64;
    let mut first = true;
    while run.episodes < cfg.episode_cap {
        let day = days[rng.random_range(0..days.len())];
        let init = match (first, start) {
            (true, _) => init,
            (false, EpisodeStart::CarryOver) => VoltageInit::CarryOver,
            (false, EpisodeStart::Random) => {
                let (lo, hi) = mdp.storage_range();
                VoltageInit::Fixed(rng.random_range(lo..=hi))
            }
        };
        let mut s = mdp.reset_day(day, init)?;
        first = false;
        if cfg.epsilon_scope == EpsilonScope::Episode {
            step_count = 0;
        }
        let mut total = 0.0;
        for _ in 0..STEPS_PER_DAY {
            let eps = epsilon_schedule(step_count, cfg);
            let a = select_action(q, s, eps, rng).0;
            let t = mdp.advance(a)?;
            q_update(q, t.state, a, t.reward, t.next_state, cfg.alpha, cfg.gamma);
            total += t.reward;
            s = t.next_state;
            step_count += 1;
            run.steps += 1;
        }
        run.episode_rewards.push(total);
        run.episodes += 1;
        if run.episodes % cfg.checkpoint_interval == 0 {
            checkpoint(&mut run, q);
            if has_converged(&run.mean_q_history, cfg.convergence_threshold, cfg.convergence_checkpoints) {
                run.converged_at = Some(run.episodes);
                break;
            }
            if clock.elapsed().as_secs_f64() >= cfg.wall_clock_cap_s {
                break;
            }
        }
    }
    run.elapsed_s = clock.elapsed().as_secs_f64();
    Ok(run)
}

/// Trains a fresh table on the first `training_days` days of `trace`.
pub fn train_one_time(
    trace: &LightTrace,
    events: Option<&EventTrace>,
    env_cfg: &EnvConfig,
    cfg: &AgentConfig,
    seed: u64,
) -> Result<(QTable, TrainingRun)> {
    if trace.days() < cfg.training_days || cfg.training_days == 0 {
        return Err(AgentError::TraceTooShort { have: trace.days(), need: cfg.training_days.max(1) });
    }
    let days: Vec<usize> = (0..cfg.training_days).collect();
    let mut q = cfg.initial_table(env_cfg, seed);
    let run = train_from(&mut q, trace, events, env_cfg, cfg, &days, seed)?;
    Ok((q, run))
}

/// Continues training `q` on the given days of `trace`, starting full.
pub fn train_from(
    q: &mut QTable,
    trace: &LightTrace,
    events: Option<&EventTrace>,
    env_cfg: &EnvConfig,
    cfg: &AgentConfig,
    days: &[usize],
    seed: u64,
) -> Result<TrainingRun> {
    q.check_compatible(env_cfg.features, &env_cfg.actions)?;
    let mut env = Environment::new(trace, events, env_cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    train_episodes(&mut env, q, days, VoltageInit::Full, cfg.episode_start, cfg, &mut rng)
}

/// Outcome of a day-by-day deployment.
#[derive(Debug, Clone, Default)]
pub struct DayByDayResult {
    /// Table after each night's training; `tables[d]` drives day `d + 1`.
    pub tables: Vec<QTable>,
    /// Deployment telemetry over all days.
    pub log: EpisodeLog,
    /// Nightly training runs.
    pub runs: Vec<TrainingRun>,
}

/// Deploys on each day of `trace` in turn and retrains every night on that
/// day's data, inheriting the previous table.
///
/// Without an `initial` table day 0 runs the fixed longest-sleep action.
/// Later days act greedily with exploitation probability
/// `cfg.epsilon_deploy`, and take a random action in states the table has
/// never seen. Deployment transitions are replayed into the table before
/// the night's simulated episodes.
pub fn train_day_by_day(
    trace: &LightTrace,
    events: Option<&EventTrace>,
    env_cfg: &EnvConfig,
    cfg: &AgentConfig,
    initial: Option<QTable>,
    seed: u64,
) -> Result<DayByDayResult> {
    cfg.validate()?;
    let days = trace.days();
    if days == 0 {
        return Err(AgentError::TraceTooShort { have: 0, need: 1 });
    }
    if let Some(q) = &initial {
        q.check_compatible(env_cfg.features, &env_cfg.actions)?;
    }
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut deploy = Environment::new(trace, events, env_cfg.clone())?;
    deploy.reset(0, VoltageInit::Full)?;
    let mut current = initial;
    let mut out = DayByDayResult::default();
    for day in 0..days {
        deploy.reset(day, VoltageInit::CarryOver)?;
        let v_start = deploy.capacitor().voltage;
        let mut rng = ChaCha8Rng::seed_from_u64(master.random());
        let mut transitions = Vec::with_capacity(STEPS_PER_DAY);
        for _ in 0..STEPS_PER_DAY {
            let window = deploy.window_index();
            let s = deploy.state_id();
            let a = match &current {
                None => Action(0),
                Some(q) if q.is_unseen(s) => Action(rng.random_range(0..q.n_actions())),
                Some(q) => select_action(q, s, cfg.epsilon_deploy, &mut rng),
            };
            let o = deploy.step(a)?;
            out.log.push(window, env_cfg.actions.sleep_time(a)?, &o);
            transitions.push(Transition { state: s, action: a.0, reward: o.reward, next_state: o.next_state_id });
        }
        let mut q = current.take().unwrap_or_else(|| cfg.initial_table(env_cfg, seed));
        for t in &transitions {
            q_update(&mut q, t.state, t.action, t.reward, t.next_state, cfg.alpha, cfg.gamma);
        }
        let mut sim = Environment::new(trace, events, env_cfg.clone())?;
        let run = train_episodes(
            &mut sim,
            &mut q,
            &[day],
            VoltageInit::Fixed(v_start),
            cfg.nightly_episode_start,
            cfg,
            &mut rng,
        )?;
        out.runs.push(run);
        out.tables.push(q.clone());
        current = Some(q);
    }
    Ok(out)
}

/// Where a transferred table comes from.
#[derive(Debug, Clone, Copy)]
pub enum TransferSource<'a> {
    /// Copy another node's converged table verbatim.
    Donor(&'a QTable),
    /// Train one general table over these traces back to back.
    General(&'a [LightTrace]),
}

/// Builds an initial table for a new node.
pub fn transfer_init(
    source: TransferSource<'_>,
    env_cfg: &EnvConfig,
    cfg: &AgentConfig,
    seed: u64,
) -> Result<(QTable, Option<TrainingRun>)> {
    match source {
        TransferSource::Donor(q) => {
            q.check_compatible(env_cfg.features, &env_cfg.actions)?;
            Ok((q.clone(), None))
        }
        TransferSource::General(traces) => {
            if traces.is_empty() {
                return Err(AgentError::NoSources);
            }
            let all = LightTrace::concat(traces)?;
            let days: Vec<usize> = (0..all.days()).collect();
            let mut q = cfg.initial_table(env_cfg, seed);
            let run = train_from(&mut q, &all, None, env_cfg, cfg, &days, seed)?;
            Ok((q, Some(run)))
        }
    }
}

#[allow(clippy::too_many_arguments)]
/// Greedy rollout of `q` over days `[from, to)` of `trace`, starting at
/// `init` and carrying storage across days.
pub fn rollout(
    q: &QTable,
    trace: &LightTrace,
    events: Option<&EventTrace>,
    env_cfg: &EnvConfig,
    from: usize,
    to: usize,
    init: VoltageInit,
    seed: u64,
) -> Result<EpisodeLog> {
    let mut env = Environment::new(trace, events, env_cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = EpisodeLog::default();
    for day in from..to {
        env.reset(day, if day == from { init } else { VoltageInit::CarryOver })?;
        for _ in 0..STEPS_PER_DAY {
            let w = env.window_index();
            let s = env.state_id();
            let a = if q.is_unseen(s) { Action(rng.random_range(0..q.n_actions())) } else { q.argmax(s) };
            let o = env.step(a)?;
            log.push(w, env_cfg.actions.sleep_time(a)?, &o);
        }
    }
    Ok(log)
}
