//! The duty-cycle MDP.
//!
//! Every 15 minutes the agent observes (light, storage, weekend[, hour]),
//! picks a sleep time, and the node runs that duty cycle for the next
//! window against the trace's illuminance. Reward is the action index, or
//! the depletion penalty when the window ends below the death threshold.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::{self, NodeEnergyConfig, SupercapState, WINDOW_SECONDS};
use crate::trace::{EventTrace, LightTrace, DAY_SECONDS};

pub const STEPS_PER_DAY: usize = 96;
pub const LEVELS: usize = 11;
/// Illuminance at which the light level saturates.
pub const LUX_SATURATION: f64 = 2000.0;

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("episode exhausted: no more steps in this day")]
    EpisodeExhausted,
    #[error("day {day} out of range (trace has {days} days)")]
    DayOutOfRange { day: usize, days: usize },
    #[error("invalid action index {index} for {len} actions")]
    InvalidAction { index: usize, len: usize },
    #[error("invalid action set: {0}")]
    InvalidActionSet(String),
    #[error("invalid reward config: {0}")]
    InvalidReward(String),
    #[error("trace must be uniform at {expected}s and cover whole days")]
    BadTrace { expected: i64 },
    #[error("unknown feature set `{0}`")]
    UnknownFeatures(String),
    #[error(transparent)]
    Energy(#[from] energy::EnergyError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, EnvError>;

/// Index into an [`ActionSet`]; larger index means shorter sleep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Action(pub usize);

impl Action {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Sleep times per action index, strictly decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ActionSet {
    sleep_times: Vec<f64>,
}

impl ActionSet {
    pub fn new(sleep_times: Vec<f64>) -> Result<Self> {
        if sleep_times.is_empty() || sleep_times.len() > u8::MAX as usize {
            return Err(EnvError::InvalidActionSet("need between 1 and 255 actions".into()));
        }
        if sleep_times.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(EnvError::InvalidActionSet("sleep times must be finite and >= 0".into()));
        }
        if sleep_times.windows(2).any(|w| w[1] >= w[0]) {
            return Err(EnvError::InvalidActionSet("sleep times must strictly decrease with index".into()));
        }
        Ok(Self { sleep_times })
    }

    /// 900 s, 300 s, 60 s, 15 s.
    pub fn standard() -> Self {
        Self { sleep_times: vec![900.0, 300.0, 60.0, 15.0] }
    }

    /// Extremes only: 900 s and 15 s.
    pub fn two() -> Self {
        Self { sleep_times: vec![900.0, 15.0] }
    }

    /// Geometric-ish eight-step ladder.
    pub fn eight() -> Self {
        Self { sleep_times: vec![900.0, 500.0, 300.0, 150.0, 60.0, 40.0, 25.0, 15.0] }
    }

    pub fn len(&self) -> usize {
        self.sleep_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sleep_times.is_empty()
    }

    pub fn max_index(&self) -> usize {
        self.sleep_times.len() - 1
    }

    pub fn sleep_times(&self) -> &[f64] {
        &self.sleep_times
    }

    pub fn sleep_time(&self, a: Action) -> Result<f64> {
        self.sleep_times
            .get(a.0)
            .copied()
            .ok_or(EnvError::InvalidAction { index: a.0, len: self.len() })
    }

    /// Inverse lookup.
    pub fn action_for(&self, sleep_time: f64) -> Option<Action> {
        self.sleep_times.iter().position(|&s| s == sleep_time).map(Action)
    }
}

impl Default for ActionSet {
    fn default() -> Self {
        Self::standard()
    }
}

impl TryFrom<Vec<f64>> for ActionSet {
    type Error = EnvError;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ActionSet> for Vec<f64> {
    fn from(a: ActionSet) -> Self {
        a.sleep_times
    }
}

/// Which observation features make up the state. Storage level is always
/// included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StateFeatureSet {
    pub light: bool,
    pub week: bool,
    pub time: bool,
}

impl StateFeatureSet {
    pub const SC: Self = Self { light: false, week: false, time: false };
    pub const SC_WEEK: Self = Self { light: false, week: true, time: false };
    pub const SC_LIGHT: Self = Self { light: true, week: false, time: false };
    pub const SC_LIGHT_WEEK: Self = Self { light: true, week: true, time: false };
    pub const SC_LIGHT_WEEK_TIME: Self = Self { light: true, week: true, time: true };

    pub const ABLATION: [Self; 5] =
        [Self::SC, Self::SC_WEEK, Self::SC_LIGHT, Self::SC_LIGHT_WEEK, Self::SC_LIGHT_WEEK_TIME];

    pub fn n_states(self) -> usize {
        LEVELS
            * if self.light { LEVELS } else { 1 }
            * if self.week { 2 } else { 1 }
            * if self.time { 24 } else { 1 }
    }

    pub fn bits(self) -> u8 {
        1 | (self.light as u8) << 1 | (self.week as u8) << 2 | (self.time as u8) << 3
    }

    pub fn from_bits(bits: u8) -> Option<Self> {
        if bits & 1 == 0 || bits & !0b1111 != 0 {
            return None;
        }
        Some(Self { light: bits & 2 != 0, week: bits & 4 != 0, time: bits & 8 != 0 })
    }
}

impl Default for StateFeatureSet {
    fn default() -> Self {
        Self::SC_LIGHT_WEEK
    }
}

impl fmt::Display for StateFeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("sc")?;
        if self.light {
            f.write_str("-light")?;
        }
        if self.week {
            f.write_str("-week")?;
        }
        if self.time {
            f.write_str("-time")?;
        }
        Ok(())
    }
}

impl FromStr for StateFeatureSet {
    type Err = EnvError;
    fn from_str(s: &str) -> Result<Self> {
        let mut out = Self::SC;
        let mut parts = s.split(['-', ',', '+']).map(|p| p.trim().to_ascii_lowercase());
        if parts.next().as_deref() != Some("sc") {
            return Err(EnvError::UnknownFeatures(s.to_string()));
        }
        for p in parts {
            match p.as_str() {
                "light" => out.light = true,
                "week" => out.week = true,
                "time" => out.time = true,
                _ => return Err(EnvError::UnknownFeatures(s.to_string())),
            }
        }
        Ok(out)
    }
}

impl TryFrom<String> for StateFeatureSet {
    type Error = EnvError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<StateFeatureSet> for String {
    fn from(f: StateFeatureSet) -> Self {
        f.to_string()
    }
}

/// Discretized observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnvState {
    pub light_level: u8,
    pub storage_level: u8,
    pub is_weekend: bool,
    pub hour: Option<u8>,
}

/// Raw observation at a window boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub lux: f64,
    pub voltage: f64,
    pub is_weekend: bool,
    pub hour: u8,
}

/// `floor(lux / 200)`, saturating at level 10 from 2000 lux.
pub fn discretize_light(lux: f64) -> u8 {
    ((lux.max(0.0) / (LUX_SATURATION / 10.0)).floor() as usize).min(10) as u8
}

/// Rounds the voltage onto 0..=10 across `[v_min_operational, v_max]`.
pub fn discretize_voltage(v: f64, cfg: &NodeEnergyConfig) -> u8 {
    let x = 10.0 * (v - cfg.v_min_operational) / (cfg.v_max - cfg.v_min_operational);
    x.round().clamp(0.0, 10.0) as u8
}

/// Discretizes an observation and maps it to a dense id in
/// `[0, features.n_states())`. Disabled features are dropped from the
/// returned state.
pub fn encode_state(obs: &Observation, features: StateFeatureSet, cfg: &NodeEnergyConfig) -> (EnvState, usize) {
    let state = EnvState {
        light_level: if features.light { discretize_light(obs.lux) } else { 0 },
        storage_level: discretize_voltage(obs.voltage, cfg),
        is_weekend: features.week && obs.is_weekend,
        hour: features.time.then_some(obs.hour % 24),
    };
    (state, state_id(&state, features))
}

/// Mixed-radix id: storage, then light, then week, then hour.
pub fn state_id(state: &EnvState, features: StateFeatureSet) -> usize {
    let mut id = state.storage_level as usize;
    let mut radix = LEVELS;
    if features.light {
        id += radix * state.light_level as usize;
        radix *= LEVELS;
    }
    if features.week {
        id += radix * state.is_weekend as usize;
        radix *= 2;
    }
    if features.time {
        id += radix * state.hour.unwrap_or(0) as usize;
    }
    id
}

pub fn decode_state(id: usize, features: StateFeatureSet) -> EnvState {
    let mut rest = id;
    let storage_level = (rest % LEVELS) as u8;
    rest /= LEVELS;
    let mut light_level = 0;
    if features.light {
        light_level = (rest % LEVELS) as u8;
        rest /= LEVELS;
    }
    let mut is_weekend = false;
    if features.week {
        is_weekend = rest % 2 == 1;
        rest /= 2;
    }
    let hour = features.time.then_some((rest % 24) as u8);
    EnvState { light_level, storage_level, is_weekend, hour }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    /// Reward when the window ends below the death threshold.
    pub depletion_penalty: f64,
    /// Multiplier on the action-index reward. Action-space ablations set
    /// this to `3 / max_index` so every set pays on the same 0..3 scale.
    pub scale: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self { depletion_penalty: -300.0, scale: 1.0 }
    }
}

impl RewardConfig {
    /// Normalized to the 0..3 scale for an action set.
    pub fn normalized_for(actions: &ActionSet) -> Self {
        let scale = if actions.max_index() == 0 { 1.0 } else { 3.0 / actions.max_index() as f64 };
        Self { scale, ..Self::default() }
    }

    /// Best reward a single day can collect.
    pub fn max_daily_reward(&self, actions: &ActionSet) -> f64 {
        STEPS_PER_DAY as f64 * actions.max_index() as f64 * self.scale
    }

    /// The penalty must wipe out a full day of maximum-action rewards.
    pub fn validate(&self, actions: &ActionSet) -> Result<()> {
        if !self.scale.is_finite() || self.scale <= 0.0 {
            return Err(EnvError::InvalidReward("scale must be > 0".into()));
        }
        let bound = self.max_daily_reward(actions);
        if !(self.depletion_penalty < 0.0 && self.depletion_penalty.abs() >= bound) {
            return Err(EnvError::InvalidReward(format!(
                "|depletion_penalty| = {} is below the max daily reward {bound}",
                self.depletion_penalty.abs()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensingMode {
    #[default]
    Periodic,
    Event,
}

/// Where an episode's voltage comes from on reset.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoltageInit {
    /// Keep the capacitor state from the previous episode.
    #[default]
    CarryOver,
    Full,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub energy: NodeEnergyConfig,
    pub features: StateFeatureSet,
    pub actions: ActionSet,
    pub reward: RewardConfig,
    pub mode: SensingMode,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            energy: NodeEnergyConfig::default(),
            features: StateFeatureSet::default(),
            actions: ActionSet::standard(),
            reward: RewardConfig::default(),
            mode: SensingMode::Periodic,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.energy.validate()?;
        self.reward.validate(&self.actions)
    }

    pub fn n_states(&self) -> usize {
        self.features.n_states()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub state_id: usize,
    pub next_state: EnvState,
    pub next_state_id: usize,
    pub action: Action,
    pub reward: f64,
    pub sends: u32,
    pub events_detected: u32,
    pub events_missed: u32,
    /// Window ended below the death threshold.
    pub died: bool,
    /// Node was duty-cycling during the window.
    pub alive: bool,
    /// Voltage at window end.
    pub voltage: f64,
    pub lux: f64,
    /// Absolute timestamps (seconds since trace start) of detected events.
    pub detected_events: Vec<f64>,
}

/// One node on one trace. Single-threaded; build one per worker.
#[derive(Debug, Clone)]
pub struct Environment<'a> {
    trace: &'a LightTrace,
    events: Option<&'a EventTrace>,
    cfg: EnvConfig,
    cap: SupercapState,
    window: usize,
    day_end: usize,
    asleep_until: f64,
}

impl<'a> Environment<'a> {
    /// `trace` must be uniform at 900 s and cover whole days. The node
    /// starts fully charged at day 0.
    pub fn new(trace: &'a LightTrace, events: Option<&'a EventTrace>, cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        if trace.step() != WINDOW_SECONDS as i64 || !trace.is_whole_days() {
            return Err(EnvError::BadTrace { expected: WINDOW_SECONDS as i64 });
        }
        let cap = SupercapState::full(&cfg.energy);
        Ok(Self { trace, events, cfg, cap, window: 0, day_end: STEPS_PER_DAY, asleep_until: 0.0 })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn days(&self) -> usize {
        self.trace.len() / STEPS_PER_DAY
    }

    pub fn capacitor(&self) -> SupercapState {
        self.cap
    }

    pub fn window_index(&self) -> usize {
        self.window
    }

    pub fn steps_left(&self) -> usize {
        self.day_end.saturating_sub(self.window)
    }

    /// Positions the environment at the start of `day`.
    pub fn reset(&mut self, day: usize, init: VoltageInit) -> Result<EnvState> {
        if day >= self.days() {
            return Err(EnvError::DayOutOfRange { day, days: self.days() });
        }
        match init {
            VoltageInit::CarryOver => {}
            VoltageInit::Full => self.cap = SupercapState::full(&self.cfg.energy),
            VoltageInit::Fixed(v) => self.cap = SupercapState::new(v, &self.cfg.energy),
        }
        if self.window != day * STEPS_PER_DAY {
            self.asleep_until = 0.0;
        }
        self.window = day * STEPS_PER_DAY;
        self.day_end = self.window + STEPS_PER_DAY;
        Ok(self.state())
    }

    pub fn observation_at(&self, window: usize) -> Observation {
        let w = window.min(self.trace.len() - 1);
        Observation {
            lux: self.trace.samples()[w].lux,
            voltage: self.cap.voltage,
            is_weekend: self.trace.is_weekend(w / STEPS_PER_DAY),
            hour: ((w % STEPS_PER_DAY) / 4) as u8,
        }
    }

    pub fn observation(&self) -> Observation {
        self.observation_at(self.window)
    }

    pub fn state(&self) -> EnvState {
        self.state_and_id().0
    }

    pub fn state_id(&self) -> usize {
        self.state_and_id().1
    }

    pub fn state_and_id(&self) -> (EnvState, usize) {
        encode_state(&self.observation(), self.cfg.features, &self.cfg.energy)
    }

    /// Runs one 900-second window under `action`.
    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.window >= self.day_end || self.window >= self.trace.len() {
            return Err(EnvError::EpisodeExhausted);
        }
        let sleep = self.cfg.actions.sleep_time(action)?;
        let (state, state_id) = self.state_and_id();
        let e = &self.cfg.energy;
        let lux = self.trace.samples()[self.window].lux;
        let start = self.window as f64 * WINDOW_SECONDS;
        let offsets: Vec<f64> = self
            .events
            .map(|ev| ev.in_range(start, start + WINDOW_SECONDS).iter().map(|t| t - start).collect())
            .unwrap_or_default();
        let alive = self.cap.alive;
        let mut detected_events = Vec::new();
        let (charge, sends, detected, missed) = if !alive {
            self.asleep_until = 0.0;
            (e.i_sleep * WINDOW_SECONDS, 0, 0, offsets.len() as u32)
        } else {
            match self.cfg.mode {
                SensingMode::Periodic => {
                    let l = energy::periodic_load(sleep, WINDOW_SECONDS, e);
                    (l.charge, l.n_sends, 0, 0)
                }
                SensingMode::Event => {
                    let (l, w) = energy::event_load(sleep, WINDOW_SECONDS, &offsets, self.asleep_until, e);
                    detected_events = w.detected.iter().map(|o| o + start).collect();
                    self.asleep_until = w.asleep_until - WINDOW_SECONDS;
                    (l.charge, l.n_sends, l.pir_events_detected, l.pir_events_missed)
                }
            }
        };
        let q_net = energy::harvest_current(lux, e) * WINDOW_SECONDS - charge;
        self.cap = energy::step_capacitor(self.cap, q_net / WINDOW_SECONDS, WINDOW_SECONDS, e);
        let died = self.cap.voltage < e.v_dead;
        let reward = if died {
            self.cfg.reward.depletion_penalty
        } else if alive {
            action.0 as f64 * self.cfg.reward.scale
        } else {
            0.0
        };
        self.window += 1;
        let (next_state, next_state_id) = self.state_and_id();
        Ok(StepOutcome {
            state,
            state_id,
            next_state,
            next_state_id,
            action,
            reward,
            sends,
            events_detected: detected,
            events_missed: missed,
            died,
            alive,
            voltage: self.cap.voltage,
            lux,
            detected_events,
        })
    }
}

/// One row per control window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    /// Global window index.
    pub step: usize,
    /// Window start, seconds since trace start.
    pub timestamp: i64,
    pub lux: f64,
    /// Voltage at window end.
    pub voltage: f64,
    pub state_id: usize,
    pub action: usize,
    pub sleep_s: f64,
    pub reward: f64,
    pub sends: u32,
    pub events_detected: u32,
    pub events_missed: u32,
    pub alive: bool,
}

/// Per-step telemetry of a deployment or evaluation run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub rows: Vec<LogRow>,
    /// Absolute timestamps of detected events, in order.
    pub detected_events: Vec<f64>,
}

impl EpisodeLog {
    pub fn push(&mut self, window: usize, sleep_s: f64, o: &StepOutcome) {
        self.rows.push(LogRow {
            step: window,
            timestamp: window as i64 * WINDOW_SECONDS as i64,
            lux: o.lux,
            voltage: o.voltage,
            state_id: o.state_id,
            action: o.action.0,
            sleep_s,
            reward: o.reward,
            sends: o.sends,
            events_detected: o.events_detected,
            events_missed: o.events_missed,
            alive: o.alive,
        });
        self.detected_events.extend_from_slice(&o.detected_events);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows whose window starts within days `[from, to)`.
    pub fn days(&self, from: usize, to: usize) -> EpisodeLog {
        let lo = (from as i64) * DAY_SECONDS;
        let hi = (to as i64) * DAY_SECONDS;
        EpisodeLog {
            rows: self.rows.iter().filter(|r| r.timestamp >= lo && r.timestamp < hi).cloned().collect(),
            detected_events: self
                .detected_events
                .iter()
                .copied()
                .filter(|&t| t >= lo as f64 && t < hi as f64)
                .collect(),
        }
    }

    pub fn extend(&mut self, other: EpisodeLog) {
        self.rows.extend(other.rows);
        self.detected_events.extend(other.detected_events);
    }

    pub fn total_reward(&self) -> f64 {
        self.rows.iter().map(|r| r.reward).sum()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<LogRow>, _>>()?;
        Ok(Self { rows, detected_events: Vec::new() })
    }
}
