//! Comparison controllers.
//!
//! A [`Controller`] sees the current observation and state id at every
//! window boundary and returns an action. [`run_controller`] drives one
//! through a span of days.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{self, AgentConfig, AgentError, Mdp, TrainingRun, Transition};
use crate::env::{
    Action, ActionSet, EnvConfig, EnvError, Environment, EpisodeLog, Observation, StateFeatureSet,
    VoltageInit, STEPS_PER_DAY,
};
use crate::qtable::QTable;
use crate::trace::{EventTrace, LightTrace};

/// Policy names accepted in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    Fixed,
    MoteLocal,
    ScOnly,
    Online3,
    OneTimeHalf,
    Aces,
}

impl PolicyName {
    pub const ALL: [PolicyName; 6] = [
        PolicyName::Fixed,
        PolicyName::MoteLocal,
        PolicyName::ScOnly,
        PolicyName::Online3,
        PolicyName::OneTimeHalf,
        PolicyName::Aces,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyName::Fixed => "fixed",
            PolicyName::MoteLocal => "mote_local",
            PolicyName::ScOnly => "sc_only",
            PolicyName::Online3 => "online3",
            PolicyName::OneTimeHalf => "one_time_half",
            PolicyName::Aces => "aces",
        }
    }
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyName {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|p| p.name() == norm)
            .ok_or_else(|| format!("unknown policy `{s}` (expected one of fixed, mote_local, sc_only, online3, one_time_half, aces)"))
    }
}

/// Chooses an action at each window boundary.
pub trait Controller {
    fn act(&mut self, obs: &Observation, state_id: usize, rng: &mut dyn RngCore) -> Action;
}

/// Always the same action.
#[derive(Debug, Clone, Copy)]
pub struct FixedPolicy(pub Action);

impl Controller for FixedPolicy {
    fn act(&mut self, _: &Observation, _: usize, _: &mut dyn RngCore) -> Action {
        self.0
    }
}

/// Environment config and action for a fixed duty cycle of `period`
/// seconds of sleep. Periods outside the action set get a one-action set.
pub fn fixed_policy(period: f64, env_cfg: &EnvConfig) -> Result<(EnvConfig, FixedPolicy), EnvError> {
    if let Some(a) = env_cfg.actions.action_for(period) {
        return Ok((env_cfg.clone(), FixedPolicy(a)));
    }
    let cfg = EnvConfig { actions: ActionSet::new(vec![period])?, ..env_cfg.clone() };
    Ok((cfg, FixedPolicy(Action(0))))
}

/// Hill-climbing on the action index: one step up while lit and charging,
/// one step down otherwise.
#[derive(Debug, Clone)]
pub struct MoteLocal {
    index: usize,
    max_index: usize,
    last_voltage: Option<f64>,
}

impl MoteLocal {
    pub fn new(actions: &ActionSet) -> Self {
        Self { index: 0, max_index: actions.max_index(), last_voltage: None }
    }
}

pub fn mote_local_policy(actions: &ActionSet) -> MoteLocal {
    MoteLocal::new(actions)
}

impl Controller for MoteLocal {
    fn act(&mut self, obs: &Observation, _: usize, _: &mut dyn RngCore) -> Action {
        if let Some(prev) = self.last_voltage {
            if obs.lux > 0.0 && obs.voltage > prev {
                self.index = (self.index + 1).min(self.max_index);
            } else {
                self.index = self.index.saturating_sub(1);
            }
        }
        self.last_voltage = Some(obs.voltage);
        Action(self.index)
    }
}

/// Acts on a learned table. Unseen states get a random action.
#[derive(Debug, Clone)]
pub struct QPolicy {
    pub table: QTable,
    /// Exploitation probability.
    pub epsilon: f64,
}

impl QPolicy {
    pub fn greedy(table: QTable) -> Self {
        Self { table, epsilon: 1.0 }
    }
}

impl Controller for QPolicy {
    fn act(&mut self, _: &Observation, s: usize, rng: &mut dyn RngCore) -> Action {
        if self.table.is_unseen(s) {
            Action(rng.random_range(0..self.table.n_actions()))
        } else {
            agent::select_action(&self.table, s, self.epsilon, rng)
        }
    }
}

/// Decrease, keep or increase the sleep-ladder position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LadderMove {
    Decrease = 0,
    Keep = 1,
    Increase = 2,
}

impl LadderMove {
    pub fn from_index(i: usize) -> Self {
        match i {
            0 => LadderMove::Decrease,
            1 => LadderMove::Keep,
            _ => LadderMove::Increase,
        }
    }

    /// New ladder level after this move, clamped to `[0, max]`.
    pub fn apply(self, level: usize, max: usize) -> usize {
        match self {
            LadderMove::Decrease => level.saturating_sub(1),
            LadderMove::Keep => level,
            LadderMove::Increase => (level + 1).min(max),
        }
    }
}

/// Three-move MDP over the action ladder. The ladder level is part of the
/// state and the reward is the level reached.
pub struct LadderEnv<'a> {
    env: Environment<'a>,
    level: usize,
}

impl<'a> LadderEnv<'a> {
    pub fn new(env: Environment<'a>) -> Self {
        Self { env, level: 0 }
    }

    pub fn level(&self) -> usize {
        self.level
    }

    fn base_states(&self) -> usize {
        self.env.config().n_states()
    }

    fn state(&self) -> usize {
        ladder_state(self.env.state_id(), self.level, self.base_states())
    }
}

/// Ladder state id: `level * base_states + base_id`.
pub fn ladder_state(base_id: usize, level: usize, base_states: usize) -> usize {
    level * base_states + base_id
}

impl Mdp for LadderEnv<'_> {
    fn n_states(&self) -> usize {
        self.base_states() * self.env.config().actions.len()
    }

    fn n_actions(&self) -> usize {
        3
    }

    fn days(&self) -> usize {
        self.env.days()
    }

    fn storage_range(&self) -> (f64, f64) {
        self.env.storage_range()
    }

    fn reset_day(&mut self, day: usize, init: VoltageInit) -> Result<usize, EnvError> {
        self.env.reset(day, init)?;
        Ok(self.state())
    }

    fn advance(&mut self, action: usize) -> Result<Transition, EnvError> {
        let state = self.state();
        let max = self.env.config().actions.max_index();
        self.level = LadderMove::from_index(action).apply(self.level, max);
        let o = self.env.step(Action(self.level))?;
        let reward = if o.died {
            self.env.config().reward.depletion_penalty
        } else if o.alive {
            self.level as f64 * self.env.config().reward.scale
        } else {
            0.0
        };
        Ok(Transition { state, action, reward, next_state: self.state() })
    }
}

/// Deploys a ladder table: picks a move and reports the resulting level.
#[derive(Debug, Clone)]
pub struct LadderPolicy {
    pub table: QTable,
    level: usize,
    base_states: usize,
}

impl LadderPolicy {
    pub fn new(table: QTable) -> Self {
        let base_states = table.features().n_states();
        Self { table, level: 0, base_states }
    }
}

impl Controller for LadderPolicy {
    fn act(&mut self, _: &Observation, s: usize, rng: &mut dyn RngCore) -> Action {
        let id = ladder_state(s, self.level, self.base_states);
        let mv = if self.table.is_unseen(id) { rng.random_range(0..3) } else { self.table.argmax(id).0 };
        self.level = LadderMove::from_index(mv).apply(self.level, self.table.actions().max_index());
        Action(self.level)
    }
}

/// Trains the three-move ladder agent on `days` of `trace`.
pub fn online_rl_3action(
    trace: &LightTrace,
    events: Option<&EventTrace>,
    env_cfg: &EnvConfig,
    cfg: &AgentConfig,
    days: &[usize],
    seed: u64,
) -> Result<(QTable, TrainingRun), AgentError> {
    let env = Environment::new(trace, events, env_cfg.clone())?;
    let mut mdp = LadderEnv::new(env);
    let mut q = QTable::ladder(env_cfg.features, env_cfg.actions.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let run = agent::train_episodes(&mut mdp, &mut q, days, VoltageInit::Full, cfg.episode_start, cfg, &mut rng)?;
    Ok((q, run))
}

/// The environment config restricted to the storage-level feature.
pub fn sc_only_config(env_cfg: &EnvConfig) -> EnvConfig {
    EnvConfig { features: StateFeatureSet::SC, ..env_cfg.clone() }
}

/// Day-by-day learning with storage level as the only state feature.
pub fn sc_only_rl(
    trace: &LightTrace,
    events: Option<&EventTrace>,
    env_cfg: &EnvConfig,
    cfg: &AgentConfig,
    seed: u64,
) -> Result<agent::DayByDayResult, AgentError> {
    agent::train_day_by_day(trace, events, &sc_only_config(env_cfg), cfg, None, seed)
}

/// Result of training on the first half of a span and deploying on the
/// second half.
#[derive(Debug, Clone)]
pub struct HalfDataResult {
    pub table: QTable,
    pub run: TrainingRun,
    /// First evaluation day.
    pub eval_from: usize,
    pub log: EpisodeLog,
}

/// Days `[from, to)` split at `from + (to - from) / 2`.
pub fn half_split(from: usize, to: usize) -> (Vec<usize>, usize) {
    let mid = from + (to - from) / 2;
    ((from..mid).collect(), mid)
}

/// One-time learning on the first half of days `[from, to)`, then a
/// greedy deployment on the rest with no retraining.
pub fn one_time_half_data(
    trace: &LightTrace,
    events: Option<&EventTrace>,
    env_cfg: &EnvConfig,
    cfg: &AgentConfig,
    from: usize,
    to: usize,
    seed: u64,
) -> Result<HalfDataResult, AgentError> {
    if to < from + 2 || to > trace.days() {
        return Err(AgentError::TraceTooShort { have: to.saturating_sub(from), need: 2 });
    }
    let (train_days, mid) = half_split(from, to);
    let mut q = QTable::zeros(env_cfg.features, env_cfg.actions.clone());
    let run = agent::train_from(&mut q, trace, events, env_cfg, cfg, &train_days, seed)?;
    let mut policy = QPolicy::greedy(q.clone());
    let log = run_controller(&mut policy, trace, events, env_cfg, mid, to, VoltageInit::Full, seed)?;
    Ok(HalfDataResult { table: q, run, eval_from: mid, log })
}

/// Drives `ctrl` through days `[from, to)`, starting at `init` and carrying
/// storage across days.
#[allow(clippy::too_many_arguments)]
pub fn run_controller(
    ctrl: &mut dyn Controller,
    trace: &LightTrace,
    events: Option<&EventTrace>,
    env_cfg: &EnvConfig,
    from: usize,
    to: usize,
    init: VoltageInit,
    seed: u64,
) -> Result<EpisodeLog, EnvError> {
    let mut env = Environment::new(trace, events, env_cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut log = EpisodeLog::default();
    for day in from..to {
        env.reset(day, if day == from { init } else { VoltageInit::CarryOver })?;
        for _ in 0..STEPS_PER_DAY {
            let w = env.window_index();
            let (obs, s) = (env.observation(), env.state_id());
            let a = ctrl.act(&obs, s, &mut rng);
            let o = env.step(a)?;
            log.push(w, env_cfg.actions.sleep_time(a)?, &o);
        }
    }
    Ok(log)
}
