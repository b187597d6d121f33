//! Experiment configuration, the evaluation protocol and comparison suites.
//!
//! The protocol: a multi-day trace is split into a history part and an
//! evaluation part (the last `eval_days` days). Day-by-day learners and
//! the untrained controllers run over the whole trace and are scored on
//! the evaluation days. Half-data learners train on the first half of the
//! evaluation days and are scored on the second half.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{self, AgentConfig, AgentError, Strategy};
use crate::baselines::{self, LadderPolicy, PolicyName};
use crate::energy::NodeEnergyConfig;
use crate::env::{
    ActionSet, EnvConfig, EnvError, EpisodeLog, RewardConfig, SensingMode, StateFeatureSet, VoltageInit,
};
use crate::metrics::MetricsReport;
use crate::trace::{self, Archetype, EventTrace, LightTrace, ResampleMode, TraceError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Parse(#[from] toml::de::Error),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// Light source: a CSV file or a synthetic archetype.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceSource {
    pub file: Option<PathBuf>,
    pub archetype: Option<Archetype>,
    pub days: usize,
    /// Generator seed; the experiment seed when absent.
    pub seed: Option<u64>,
}

impl Default for TraceSource {
    fn default() -> Self {
        Self { file: None, archetype: Some(Archetype::Window), days: 15, seed: None }
    }
}

/// Poisson motion-event rates per day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventRates {
    pub weekday: f64,
    pub weekend: f64,
}

impl Default for EventRates {
    fn default() -> Self {
        Self { weekday: 50.0, weekend: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub policy: PolicyName,
    pub strategy: Strategy,
    pub mode: SensingMode,
    pub features: StateFeatureSet,
    pub actions: ActionSet,
    /// Sleep time of the fixed policy, seconds.
    pub fixed_period: f64,
    /// Trailing days scored by `eval`.
    pub eval_days: usize,
    /// Donor table for transfer runs.
    pub donor: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub trace: TraceSource,
    pub events: EventRates,
    pub energy: NodeEnergyConfig,
    pub reward: RewardConfig,
    pub agent: AgentConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            policy: PolicyName::Aces,
            strategy: Strategy::DayByDay,
            mode: SensingMode::Periodic,
            features: StateFeatureSet::default(),
            actions: ActionSet::standard(),
            fixed_period: 60.0,
            eval_days: 7,
            donor: None,
            output_dir: None,
            trace: TraceSource::default(),
            events: EventRates::default(),
            energy: NodeEnergyConfig::default(),
            reward: RewardConfig::default(),
            agent: AgentConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.env_config().validate()?;
        self.agent.validate()?;
        match (&self.trace.file, &self.trace.archetype) {
            (Some(f), _) if !f.exists() => {
                return Err(ExperimentError::Config(format!("trace file {} does not exist", f.display())));
            }
            (None, None) => return Err(ExperimentError::Config("trace needs a file or an archetype".into())),
            _ => {}
        }
        if let Some(d) = &self.donor {
            if !d.exists() {
                return Err(ExperimentError::Config(format!("donor table {} does not exist", d.display())));
            }
        }
        if self.trace.file.is_none() && self.trace.days == 0 {
            return Err(ExperimentError::Config("trace.days must be >= 1".into()));
        }
        if !(self.fixed_period >= 0.0 && self.fixed_period.is_finite()) {
            return Err(ExperimentError::Config("fixed_period must be >= 0".into()));
        }
        Ok(())
    }

    pub fn env_config(&self) -> EnvConfig {
        EnvConfig {
            energy: self.energy,
            features: self.features,
            actions: self.actions.clone(),
            reward: self.reward,
            mode: self.mode,
        }
    }

    pub fn trace_seed(&self) -> u64 {
        self.trace.seed.unwrap_or(self.seed)
    }

    /// The light trace at the 900-second control step.
    pub fn light_trace(&self) -> Result<LightTrace> {
        let raw = match (&self.trace.file, self.trace.archetype) {
            (Some(f), _) => trace::load_trace(f)?,
            (None, Some(a)) => trace::gen_synthetic(a, self.trace.days, self.trace_seed())?,
            (None, None) => return Err(ExperimentError::Config("no trace source".into())),
        };
        control_trace(&raw)
    }

    /// Motion events when running in event mode.
    pub fn event_trace(&self, light: &LightTrace) -> Result<Option<EventTrace>> {
        if self.mode != SensingMode::Event {
            return Ok(None);
        }
        let ev = trace::gen_events(
            light.days(),
            self.events.weekday,
            self.events.weekend,
            light.calendar(),
            derive_seed(self.trace_seed(), 0xE7E7),
        )?;
        Ok(Some(ev))
    }
}

/// Resamples to the control step and keeps whole days only.
pub fn control_trace(raw: &LightTrace) -> Result<LightTrace> {
    let t = if raw.step() == 900 && raw.is_uniform() {
        raw.clone()
    } else {
        trace::resample(raw, 900, ResampleMode::Mean)?
    };
    if t.is_whole_days() {
        return Ok(t);
    }
    let days = t.days();
    if days == 0 {
        return Err(ExperimentError::Config("trace is shorter than one day".into()));
    }
    Ok(t.slice_days(0, days)?)
}

/// Mixes a tag into a base seed (splitmix64 finalizer).
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A policy's evaluation-day log.
#[derive(Debug, Clone)]
pub struct PolicyEval {
    pub policy: PolicyName,
    pub log: EpisodeLog,
    /// First scored day.
    pub eval_from: usize,
    pub eval_to: usize,
}

/// Runs `policy` under the evaluation protocol on the last `eval_days`
/// days of `trace`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_policy(
    policy: PolicyName,
    trace: &LightTrace,
    events: Option<&EventTrace>,
    env_cfg: &EnvConfig,
    agent_cfg: &AgentConfig,
    eval_days: usize,
    fixed_period: f64,
    seed: u64,
) -> Result<PolicyEval> {
    let days = trace.days();
    let eval_days = eval_days.clamp(1, days);
    let from = days - eval_days;
    let full = |log: EpisodeLog| log.days(from, days);
    let (log, eval_from) = match policy {
        PolicyName::Aces => (full(agent::train_day_by_day(trace, events, env_cfg, agent_cfg, None, seed)?.log), from),
        PolicyName::ScOnly => (full(baselines::sc_only_rl(trace, events, env_cfg, agent_cfg, seed)?.log), from),
        PolicyName::Fixed => {
            let (cfg, mut p) = baselines::fixed_policy(fixed_period, env_cfg)?;
            (full(baselines::run_controller(&mut p, trace, events, &cfg, 0, days, VoltageInit::Full, seed)?), from)
        }
        PolicyName::MoteLocal => {
            let mut p = baselines::mote_local_policy(&env_cfg.actions);
            (full(baselines::run_controller(&mut p, trace, events, env_cfg, 0, days, VoltageInit::Full, seed)?), from)
        }
        PolicyName::OneTimeHalf => {
            if eval_days < 2 {
                return Err(ExperimentError::Config("half-data policies need >= 2 eval days".into()));
            }
            let r = baselines::one_time_half_data(trace, events, env_cfg, agent_cfg, from, days, seed)?;
            (r.log, r.eval_from)
        }
        PolicyName::Online3 => {
            if eval_days < 2 {
                return Err(ExperimentError::Config("half-data policies need >= 2 eval days".into()));
            }
            let (train, mid) = baselines::half_split(from, days);
            let (q, _) = baselines::online_rl_3action(trace, events, env_cfg, agent_cfg, &train, seed)?;
            let mut p = LadderPolicy::new(q);
            (baselines::run_controller(&mut p, trace, events, env_cfg, mid, days, VoltageInit::Full, seed)?, mid)
        }
    };
    Ok(PolicyEval { policy, log, eval_from, eval_to: days })
}

/// Named comparison suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    /// Every archetype against every policy.
    Table12,
    /// State-feature ablation.
    Table5,
    /// Action-set ablation with normalized rewards.
    Table6,
}

impl std::str::FromStr for Suite {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "table12" => Ok(Suite::Table12),
            "table5" => Ok(Suite::Table5),
            "table6" => Ok(Suite::Table6),
            _ => Err(format!("unknown suite `{s}` (expected table12, table5 or table6)")),
        }
    }
}

/// Shared suite settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Total trace length.
    pub days: usize,
    pub eval_days: usize,
    pub fixed_period: f64,
    pub archetypes: Vec<Archetype>,
    pub energy: NodeEnergyConfig,
    pub agent: AgentConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            days: 14,
            eval_days: 7,
            fixed_period: 60.0,
            archetypes: Archetype::ALL.to_vec(),
            energy: NodeEnergyConfig::default(),
            agent: AgentConfig::default(),
        }
    }
}

impl SuiteConfig {
    /// Control-step trace for one archetype.
    pub fn trace_for(&self, a: Archetype) -> Result<LightTrace> {
        control_trace(&trace::gen_synthetic(a, self.days, derive_seed(self.seed, a as u64))?)
    }
}

/// Policy-comparison suite: one report per archetype and policy.
pub fn run_table12(cfg: &SuiteConfig, policies: &[PolicyName]) -> Result<Vec<MetricsReport>> {
    let traces: Vec<(Archetype, LightTrace)> =
        cfg.archetypes.iter().map(|&a| Ok((a, cfg.trace_for(a)?))).collect::<Result<_>>()?;
    let env_cfg = EnvConfig { energy: cfg.energy, ..EnvConfig::default() };
    let jobs: Vec<(usize, PolicyName)> =
        (0..traces.len()).flat_map(|i| policies.iter().map(move |&p| (i, p))).collect();
    jobs.par_iter()
        .map(|&(i, p)| {
            let (a, t) = &traces[i];
            let seed = derive_seed(cfg.seed, (*a as u64) << 8 | p as u64);
            let ev = evaluate_policy(p, t, None, &env_cfg, &cfg.agent, cfg.eval_days, cfg.fixed_period, seed)?;
            Ok(MetricsReport::from_log(p.name(), a.name(), &ev.log, &cfg.energy, None))
        })
        .collect()
}

/// One ablation cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    /// State-space size for feature ablations, action count otherwise.
    pub size: usize,
    pub context: String,
    /// Mean reward per evaluated day.
    pub avg_daily_reward: f64,
}

/// One-time training on the first half of the trace, then a greedy
/// rollout over the whole trace; returns the mean daily reward.
pub fn ablation_reward(trace: &LightTrace, env_cfg: &EnvConfig, agent_cfg: &AgentConfig, seed: u64) -> Result<f64> {
    let days = trace.days();
    let train: Vec<usize> = (0..(days / 2).max(1)).collect();
    let mut q = crate::qtable::QTable::zeros(env_cfg.features, env_cfg.actions.clone());
    agent::train_from(&mut q, trace, None, env_cfg, agent_cfg, &train, seed)?;
    let log = agent::rollout(&q, trace, None, env_cfg, 0, days, VoltageInit::Full, seed)?;
    Ok(log.total_reward() / days as f64)
}

fn run_ablation(cfg: &SuiteConfig, variants: Vec<(String, usize, EnvConfig)>) -> Result<Vec<AblationRow>> {
    let traces: Vec<(Archetype, LightTrace)> =
        cfg.archetypes.iter().map(|&a| Ok((a, cfg.trace_for(a)?))).collect::<Result<_>>()?;
    let jobs: Vec<(usize, usize)> =
        (0..variants.len()).flat_map(|v| (0..traces.len()).map(move |t| (v, t))).collect();
    let cells: Vec<AblationRow> = jobs
        .par_iter()
        .map(|&(v, ti)| {
            let (name, size, env_cfg) = &variants[v];
            let (a, t) = &traces[ti];
            let seed = derive_seed(cfg.seed, (v as u64) << 8 | *a as u64);
            Ok(AblationRow {
                variant: name.clone(),
                size: *size,
                context: a.name().to_string(),
                avg_daily_reward: ablation_reward(t, env_cfg, &cfg.agent, seed)?,
            })
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(cells.len() + variants.len());
    for (name, size, _) in &variants {
        let mine: Vec<&AblationRow> = cells.iter().filter(|c| &c.variant == name).collect();
        out.extend(mine.iter().map(|c| (*c).clone()));
        let avg = mine.iter().map(|c| c.avg_daily_reward).sum::<f64>() / mine.len().max(1) as f64;
        out.push(AblationRow { variant: name.clone(), size: *size, context: "avg".into(), avg_daily_reward: avg });
    }
    Ok(out)
}

/// Reward per state-feature set.
pub fn run_table5(cfg: &SuiteConfig) -> Result<Vec<AblationRow>> {
    let variants = StateFeatureSet::ABLATION
        .iter()
        .map(|&f| {
            let env = EnvConfig { energy: cfg.energy, features: f, ..EnvConfig::default() };
            (f.to_string(), f.n_states(), env)
        })
        .collect();
    run_ablation(cfg, variants)
}

/// Reward per action set, each normalized to the 0..3 scale.
pub fn run_table6(cfg: &SuiteConfig) -> Result<Vec<AblationRow>> {
    let variants = [ActionSet::two(), ActionSet::standard(), ActionSet::eight()]
        .into_iter()
        .map(|a| {
            let env = EnvConfig {
                energy: cfg.energy,
                reward: RewardConfig::normalized_for(&a),
                actions: a.clone(),
                ..EnvConfig::default()
            };
            (format!("{}-actions", a.len()), a.len(), env)
        })
        .collect();
    run_ablation(cfg, variants)
}

pub fn write_ablation_csv<W: std::io::Write>(w: W, rows: &[AblationRow]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_toml_uses_defaults() {
        let c = ExperimentConfig::from_toml("seed = 3\npolicy = \"mote_local\"\n[trace]\narchetype = \"stairs\"\ndays = 2\n")
            .unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.policy, PolicyName::MoteLocal);
        assert_eq!(c.trace.archetype, Some(Archetype::Stairs));
        assert_eq!(c.agent.gamma, 0.99);
    }

    #[test]
    fn weak_penalty_rejected_at_load() {
        let err = ExperimentConfig::from_toml("[reward]\ndepletion_penalty = -200.0\n").unwrap_err();
        assert!(err.to_string().contains("depletion_penalty"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("sed = 3\n").is_err());
    }

    #[test]
    fn missing_trace_file_rejected() {
        assert!(ExperimentConfig::from_toml("[trace]\nfile = \"/nonexistent/x.csv\"\n").is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 1), derive_seed(1, 2));
        assert_eq!(derive_seed(5, 9), derive_seed(5, 9));
    }

    #[test]
    fn synthetic_trace_at_control_step() {
        let c = ExperimentConfig { trace: TraceSource { days: 2, ..Default::default() }, ..Default::default() };
        let t = c.light_trace().unwrap();
        assert_eq!((t.step(), t.len()), (900, 192));
    }
}
