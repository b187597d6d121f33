//! `harvest-rl` command line: trace generation, calibration, training,
//! evaluation and comparison suites.
//!
//! Every subcommand writes into its own output directory and echoes the
//! effective configuration there, so a run can be reproduced by pointing
//! `--config` at the echoed file. Exit codes: 0 on success (a node that
//! dies in simulation is a result, not a failure), 1 for usage and
//! configuration errors, 2 when calibration is infeasible.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use harvest_rl::agent::{self, Strategy, TransferSource};
use harvest_rl::baselines::PolicyName;
use harvest_rl::energy::{
    calibrate_active_time, EnergyError, LifetimeTarget, NodeEnergyConfig, DISCHARGE_TARGETS,
    PIR_DISCHARGE_TARGETS,
};
use harvest_rl::env::{ActionSet, EnvConfig, EpisodeLog, SensingMode, StateFeatureSet, VoltageInit};
use harvest_rl::experiment::{
    control_trace, derive_seed, evaluate_policy, run_table12, run_table5, run_table6, write_ablation_csv,
    ExperimentConfig, Suite, SuiteConfig,
};
use harvest_rl::metrics::{write_report_csv, MetricsReport};
use harvest_rl::qtable::QTable;
use harvest_rl::trace::{self, Archetype, LightTrace, ResampleMode, DAY_SECONDS};

/// Default output root when neither `--out` nor the environment sets one.
const DEFAULT_OUT: &str = "runs";

#[derive(Debug, Parser)]
#[command(name = "harvest-rl", version, about = "Q-learning duty-cycle control for light-harvesting sensor nodes")]
struct Cli {
    /// Root directory for outputs; each subcommand writes to a subdirectory.
    #[arg(long, global = true, env = "HARVEST_RL_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic light traces (and optionally motion events) as CSV.
    GenTraces(GenTracesArgs),
    /// Fit the active time per send against zero-light lifetimes.
    Calibrate(CalibrateArgs),
    /// Train a Q-table with the configured strategy.
    Train(RunArgs),
    /// Run a policy or a saved table and write a metrics report.
    Eval(EvalArgs),
    /// Run a comparison suite over all archetypes.
    Compare(CompareArgs),
}

/// Flags shared by commands that build an [`ExperimentConfig`].
#[derive(Debug, Args, Clone, Default)]
struct ConfigArgs {
    /// TOML experiment config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: `<out>/<command>`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// conference, stairs, middle_office, window or door.
    #[arg(long)]
    archetype: Option<String>,
    /// Days of synthetic trace.
    #[arg(long)]
    days: Option<usize>,
    /// Light trace CSV (`timestamp,lux`) instead of an archetype.
    #[arg(long)]
    trace_file: Option<PathBuf>,
    /// Generator seed for the synthetic trace.
    #[arg(long)]
    trace_seed: Option<u64>,
    /// periodic or event.
    #[arg(long)]
    mode: Option<String>,
    /// State features, e.g. `sc-light-week`.
    #[arg(long)]
    features: Option<String>,
    /// Comma-separated sleep times in seconds, longest first.
    #[arg(long)]
    actions: Option<String>,
    /// Supercapacitor size in farads.
    #[arg(long)]
    capacitance: Option<f64>,
    /// Active seconds per send cycle.
    #[arg(long)]
    t_active: Option<f64>,
}

#[derive(Debug, Args)]
struct GenTracesArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// Every archetype; same as `--archetype all`.
    #[arg(long)]
    all: bool,
    /// Sample step of the written trace, seconds.
    #[arg(long, default_value_t = 900)]
    step: i64,
    /// Also write Poisson motion events per archetype.
    #[arg(long)]
    events: bool,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Supercapacitor size in farads (default 1.0, or 1.5 with `--pir`).
    #[arg(long)]
    capacitance: Option<f64>,
    /// Keep the PIR sensor armed and use the event-node targets.
    #[arg(long)]
    pir: bool,
    /// Custom target `PERIOD_S:LIFETIME_H`, repeatable.
    #[arg(long = "target", value_name = "PERIOD_S:LIFETIME_H")]
    targets: Vec<String>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// one_time, day_by_day or transfer.
    #[arg(long)]
    strategy: Option<String>,
    /// Donor table for transfer; without one a general table is trained.
    #[arg(long)]
    donor: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: ConfigArgs,
    /// aces, sc_only, fixed, mote_local, online3 or one_time_half.
    #[arg(long)]
    policy: Option<String>,
    /// Run this saved table greedily instead of a named policy.
    #[arg(long)]
    qtable: Option<PathBuf>,
    /// Sleep time of the fixed policy, seconds.
    #[arg(long)]
    fixed_period: Option<f64>,
    /// Trailing days to score.
    #[arg(long)]
    eval_days: Option<usize>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// table12, table5 or table6.
    #[arg(long)]
    suite: String,
    /// TOML suite config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    days: Option<usize>,
    #[arg(long)]
    eval_days: Option<usize>,
    #[arg(long)]
    fixed_period: Option<f64>,
    /// Comma-separated subset of archetypes.
    #[arg(long)]
    archetypes: Option<String>,
    /// Comma-separated subset of policies for table12.
    #[arg(long)]
    policies: Option<String>,
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl From<anyhow::Error> for Failure {
    fn from(err: anyhow::Error) -> Self {
        Self { code: 1, err }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> std::result::Result<(), Failure> {
    let root = cli.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let clock = Instant::now();
    let (name, dir) = match cli.command {
        Command::GenTraces(a) => ("gen-traces", gen_traces(&root, a)?),
        Command::Calibrate(a) => ("calibrate", calibrate(&root, a)?),
        Command::Train(a) => ("train", train(&root, a)?),
        Command::Eval(a) => ("eval", eval(&root, a)?),
        Command::Compare(a) => ("compare", compare(&root, a)?),
    };
    write_metadata(&dir, name, clock.elapsed().as_secs_f64())?;
    println!("wrote {}", dir.display());
    Ok(())
}

/// Timestamps live here so the other outputs stay byte-identical across
/// reruns.
fn write_metadata(dir: &Path, command: &str, elapsed_s: f64) -> Result<()> {
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let meta = serde_json::json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "finished_unix_s": started,
        "elapsed_s": elapsed_s,
    });
    write(&dir.join("metadata.json"), serde_json::to_string_pretty(&meta)?)
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn out_dir(root: &Path, explicit: Option<&Path>, from_config: Option<&Path>, command: &str) -> Result<PathBuf> {
    let dir = explicit.or(from_config).map(Path::to_path_buf).unwrap_or_else(|| root.join(command));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn parse_mode(s: &str) -> Result<SensingMode> {
    match s.to_ascii_lowercase().as_str() {
        "periodic" => Ok(SensingMode::Periodic),
        "event" => Ok(SensingMode::Event),
        _ => bail!("unknown mode `{s}` (expected periodic or event)"),
    }
}

fn parse_actions(s: &str) -> Result<ActionSet> {
    let sleeps = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| anyhow!("bad sleep time `{p}`: {e}")))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ActionSet::new(sleeps)?)
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',').map(|p| p.trim().parse::<T>().map_err(|e| anyhow!("{e}"))).collect()
}

/// Loads `--config` (or defaults) and applies flag overrides.
fn build_config(a: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(name) = &a.archetype {
        cfg.trace.archetype = Some(name.parse::<Archetype>()?);
        cfg.trace.file = None;
    }
    if let Some(d) = a.days {
        cfg.trace.days = d;
    }
    if let Some(f) = &a.trace_file {
        cfg.trace.file = Some(f.clone());
    }
    if let Some(s) = a.trace_seed {
        cfg.trace.seed = Some(s);
    }
    if let Some(m) = &a.mode {
        let mode = parse_mode(m)?;
        if mode == SensingMode::Event && cfg.mode != SensingMode::Event && cfg.energy == NodeEnergyConfig::default() {
            cfg.energy = NodeEnergyConfig::event_mode();
        }
        cfg.mode = mode;
    }
    if let Some(f) = &a.features {
        cfg.features = f.parse::<StateFeatureSet>().map_err(|e| anyhow!("{e}"))?;
    }
    if let Some(s) = &a.actions {
        cfg.actions = parse_actions(s)?;
    }
    if let Some(c) = a.capacitance {
        cfg.energy.capacitance = c;
    }
    if let Some(t) = a.t_active {
        cfg.energy.t_active = t;
    }
    Ok(cfg)
}

fn finish_config(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    cfg.validate()?;
    write(&dir.join("config.toml"), cfg.to_toml())
}

/// Name used in reports for the configured trace.
fn context_name(cfg: &ExperimentConfig) -> String {
    match (&cfg.trace.file, cfg.trace.archetype) {
        (Some(f), _) => f.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "trace".into()),
        (None, Some(a)) => a.name().to_string(),
        (None, None) => "trace".into(),
    }
}

fn gen_traces(root: &Path, mut a: GenTracesArgs) -> Result<PathBuf> {
    if a.common.archetype.as_deref().is_some_and(|n| n.eq_ignore_ascii_case("all")) {
        a.common.archetype = None;
        a.all = true;
    }
    let cfg = build_config(&a.common)?;
    let dir = out_dir(root, a.common.out_dir.as_deref(), cfg.output_dir.as_deref(), "gen-traces")?;
    if a.step <= 0 {
        bail!("--step must be positive");
    }
    let archetypes = if a.all {
        Archetype::ALL.to_vec()
    } else {
        vec![cfg.trace.archetype.ok_or_else(|| anyhow!("gen-traces needs --archetype or --all"))?]
    };
    for arch in archetypes {
        let seed = cfg.trace.seed.unwrap_or(cfg.seed);
        let raw = trace::gen_synthetic(arch, cfg.trace.days, seed)?;
        let t = if raw.step() == a.step { raw } else { trace::resample(&raw, a.step, ResampleMode::Mean)? };
        let path = dir.join(format!("{}.csv", arch.name()));
        t.save(&path)?;
        println!("{}: {} rows, mean {:.0} lux", path.display(), t.len(), t.mean_lux());
        if a.events {
            let ev = trace::gen_events(
                t.days(),
                cfg.events.weekday,
                cfg.events.weekend,
                t.calendar(),
                derive_seed(seed, 0xE7E7),
            )?;
            ev.write_csv(create(&dir.join(format!("{}_events.csv", arch.name())))?)?;
        }
    }
    let mut echoed = cfg.clone();
    echoed.output_dir = None;
    write(&dir.join("config.toml"), echoed.to_toml())?;
    Ok(dir)
}

fn parse_target(s: &str) -> Result<LifetimeTarget> {
    let (p, h) = s.split_once(':').ok_or_else(|| anyhow!("target `{s}` must be PERIOD_S:LIFETIME_H"))?;
    let period: f64 = p.trim().parse().map_err(|e| anyhow!("bad period in `{s}`: {e}"))?;
    let hours: f64 = h.trim().parse().map_err(|e| anyhow!("bad lifetime in `{s}`: {e}"))?;
    if !(period >= 0.0 && hours > 0.0) {
        bail!("target `{s}` needs period >= 0 and lifetime > 0");
    }
    Ok(LifetimeTarget::new(period, hours * 3600.0))
}

fn calibrate(root: &Path, a: CalibrateArgs) -> std::result::Result<PathBuf, Failure> {
    let dir = out_dir(root, a.out_dir.as_deref(), None, "calibrate")?;
    let mut cfg = if a.pir { NodeEnergyConfig::event_mode() } else { NodeEnergyConfig::default() };
    if let Some(c) = a.capacitance {
        cfg.capacitance = c;
    }
    cfg.validate().map_err(anyhow::Error::from)?;
    let targets: Vec<LifetimeTarget> = if a.targets.is_empty() {
        if a.pir { PIR_DISCHARGE_TARGETS.to_vec() } else { DISCHARGE_TARGETS.to_vec() }
    } else {
        a.targets.iter().map(|t| parse_target(t)).collect::<Result<_>>()?
    };
    let cal = match calibrate_active_time(&targets, &cfg, a.pir) {
        Ok(c) => c,
        Err(e @ EnergyError::Infeasible { .. }) => return Err(Failure { code: 2, err: e.into() }),
        Err(e) => return Err(anyhow::Error::from(e).into()),
    };
    println!("t_active = {:.3} s (max error {:.1}%)", cal.t_active, 100.0 * cal.max_error);
    for ((t, l), e) in targets.iter().zip(&cal.lifetimes).zip(&cal.errors) {
        println!(
            "  period {:>5} s: simulated {:>7.1} h, target {:>7.1} h ({:+.1}%)",
            t.period,
            l / 3600.0,
            t.lifetime / 3600.0,
            100.0 * e
        );
    }
    let report = serde_json::json!({
        "targets": targets,
        "pir_armed": a.pir,
        "calibration": cal,
    });
    write(&dir.join("calibration.json"), serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?)?;
    let resolved = NodeEnergyConfig { t_active: cal.t_active, ..cfg };
    let energy_toml = toml::to_string_pretty(&EnergyFile { energy: resolved }).map_err(anyhow::Error::from)?;
    write(&dir.join("energy.toml"), energy_toml)?;
    Ok(dir)
}

/// `energy.toml`: a `[energy]` table ready to paste into an experiment
/// config.
#[derive(serde::Serialize)]
struct EnergyFile {
    energy: NodeEnergyConfig,
}

fn load_inputs(cfg: &ExperimentConfig) -> Result<(LightTrace, Option<trace::EventTrace>)> {
    let light = cfg.light_trace()?;
    let events = cfg.event_trace(&light)?;
    Ok((light, events))
}

fn train(root: &Path, a: RunArgs) -> Result<PathBuf> {
    let mut cfg = build_config(&a.common)?;
    if let Some(s) = &a.strategy {
        cfg.strategy = s.parse::<Strategy>().map_err(|e| anyhow!("{e}"))?;
    }
    if let Some(d) = &a.donor {
        cfg.donor = Some(d.clone());
    }
    let dir = out_dir(root, a.common.out_dir.as_deref(), cfg.output_dir.as_deref(), "train")?;
    finish_config(&cfg, &dir)?;
    let (light, events) = load_inputs(&cfg)?;
    let env = cfg.env_config();
    match cfg.strategy {
        Strategy::OneTime => {
            let (q, run) = agent::train_one_time(&light, events.as_ref(), &env, &cfg.agent, cfg.seed)?;
            q.save(&dir.join("qtable.bin"))?;
            run.write_curve_csv(create(&dir.join("curve.csv"))?)?;
            write(&dir.join("run.json"), run_summary(&run)?)?;
            println!("one-time: {} episodes, converged at {:?}", run.episodes, run.converged_at);
        }
        Strategy::DayByDay => {
            let r = agent::train_day_by_day(&light, events.as_ref(), &env, &cfg.agent, None, cfg.seed)?;
            write_day_by_day(&dir, &r)?;
            println!("day-by-day: {} nightly tables", r.tables.len());
        }
        Strategy::Transfer => {
            let donor = cfg.donor.as_deref().map(QTable::load).transpose()?;
            let (mut q, general) = match &donor {
                Some(d) => agent::transfer_init(TransferSource::Donor(d), &env, &cfg.agent, cfg.seed)?,
                None => {
                    let sources = general_sources(&cfg)?;
                    agent::transfer_init(TransferSource::General(&sources), &env, &cfg.agent, cfg.seed)?
                }
            };
            if let Some(run) = &general {
                run.write_curve_csv(create(&dir.join("general_curve.csv"))?)?;
            }
            q.save(&dir.join("initial_qtable.bin"))?;
            let days: Vec<usize> = (0..cfg.agent.training_days.min(light.days())).collect();
            let run = agent::train_from(&mut q, &light, events.as_ref(), &env, &cfg.agent, &days, cfg.seed)?;
            q.save(&dir.join("qtable.bin"))?;
            run.write_curve_csv(create(&dir.join("curve.csv"))?)?;
            write(&dir.join("run.json"), run_summary(&run)?)?;
            println!("transfer: fine-tuned in {} episodes, converged at {:?}", run.episodes, run.converged_at);
        }
    }
    Ok(dir)
}

/// One week of each archetype, seeded apart from the target trace.
fn general_sources(cfg: &ExperimentConfig) -> Result<Vec<LightTrace>> {
    Archetype::ALL
        .iter()
        .map(|&a| {
            let raw = trace::gen_synthetic(a, 7, derive_seed(cfg.trace_seed(), 0x6E6E ^ a as u64))?;
            Ok(control_trace(&raw)?)
        })
        .collect()
}

fn run_summary(run: &agent::TrainingRun) -> Result<String> {
    Ok(serde_json::to_string_pretty(&serde_json::json!({
        "episodes": run.episodes,
        "steps": run.steps,
        "converged_at": run.converged_at,
        "final_mean_q": run.mean_q_history.last(),
    }))?)
}

fn write_day_by_day(dir: &Path, r: &agent::DayByDayResult) -> Result<()> {
    let tables = dir.join("tables");
    fs::create_dir_all(&tables)?;
    for (d, q) in r.tables.iter().enumerate() {
        q.save(&tables.join(format!("day_{d:03}.bin")))?;
    }
    if let Some(q) = r.tables.last() {
        q.save(&dir.join("qtable.bin"))?;
    }
    r.log.write_csv(create(&dir.join("log.csv"))?)?;
    let mut nightly = String::from("day,episodes,converged_at,mean_q\n");
    for (d, run) in r.runs.iter().enumerate() {
        nightly.push_str(&format!(
            "{},{},{},{}\n",
            d,
            run.episodes,
            run.converged_at.map(|e| e.to_string()).unwrap_or_default(),
            run.mean_q_history.last().copied().unwrap_or(0.0)
        ));
    }
    write(&dir.join("nightly.csv"), nightly)
}

fn eval(root: &Path, a: EvalArgs) -> Result<PathBuf> {
    let mut cfg = build_config(&a.common)?;
    if let Some(p) = &a.policy {
        cfg.policy = p.parse::<PolicyName>().map_err(|e| anyhow!("{e}"))?;
    }
    if let Some(p) = a.fixed_period {
        cfg.fixed_period = p;
    }
    if let Some(d) = a.eval_days {
        cfg.eval_days = d;
    }
    let table = match &a.qtable {
        Some(p) => {
            let q = QTable::load(p).with_context(|| format!("loading table {}", p.display()))?;
            cfg.features = q.features();
            cfg.actions = q.actions().clone();
            Some(q)
        }
        None => None,
    };
    let dir = out_dir(root, a.common.out_dir.as_deref(), cfg.output_dir.as_deref(), "eval")?;
    finish_config(&cfg, &dir)?;
    let (light, events) = load_inputs(&cfg)?;
    let env = cfg.env_config();
    let days = light.days();
    let (name, log, from) = match &table {
        Some(q) => {
            let from = days - cfg.eval_days.clamp(1, days);
            let log = agent::rollout(q, &light, events.as_ref(), &env, from, days, VoltageInit::Full, cfg.seed)?;
            ("qtable".to_string(), log, from)
        }
        None => {
            let ev = evaluate_policy(
                cfg.policy,
                &light,
                events.as_ref(),
                &env,
                &cfg.agent,
                cfg.eval_days,
                cfg.fixed_period,
                cfg.seed,
            )?;
            (cfg.policy.name().to_string(), ev.log, ev.eval_from)
        }
    };
    let truth = events.as_ref().map(|e| {
        e.in_range((from as i64 * DAY_SECONDS) as f64, (days as i64 * DAY_SECONDS) as f64).to_vec()
    });
    let report = MetricsReport::from_log(&name, &context_name(&cfg), &log, &cfg.energy, truth.as_deref());
    write_eval_outputs(&dir, &report, &log)?;
    match report.avg_duty_cycle_period {
        Some(p) => println!("{name}: period {p:.1} s, dead {:.1}%", 100.0 * report.dead_time_fraction),
        None => println!("{name}: no completed cycles, dead {:.1}%", 100.0 * report.dead_time_fraction),
    }
    Ok(dir)
}

fn write_eval_outputs(dir: &Path, report: &MetricsReport, log: &EpisodeLog) -> Result<()> {
    write(&dir.join("report.json"), report.to_json())?;
    write_report_csv(create(&dir.join("report.csv"))?, std::slice::from_ref(report))?;
    log.write_csv(create(&dir.join("log.csv"))?)?;
    Ok(())
}

fn compare(root: &Path, a: CompareArgs) -> Result<PathBuf> {
    let suite: Suite = a.suite.parse().map_err(|e: String| anyhow!(e))?;
    let mut cfg: SuiteConfig = match &a.config {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => SuiteConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.days {
        cfg.days = d;
    }
    if let Some(d) = a.eval_days {
        cfg.eval_days = d;
    }
    if let Some(p) = a.fixed_period {
        cfg.fixed_period = p;
    }
    if let Some(list) = &a.archetypes {
        cfg.archetypes = parse_list(list)?;
    }
    if cfg.archetypes.is_empty() || cfg.days == 0 {
        bail!("suite needs at least one archetype and one day");
    }
    cfg.agent.validate()?;
    let env = EnvConfig { energy: cfg.energy, ..EnvConfig::default() };
    env.validate()?;
    let dir = out_dir(root, a.out_dir.as_deref(), None, "compare")?;
    write(&dir.join("suite.toml"), toml::to_string_pretty(&cfg)?)?;
    match suite {
        Suite::Table12 => {
            let policies: Vec<PolicyName> = match &a.policies {
                Some(list) => parse_list(list)?,
                None => PolicyName::ALL.to_vec(),
            };
            let reports = run_table12(&cfg, &policies)?;
            write_report_csv(create(&dir.join("table12.csv"))?, &reports)?;
            write(&dir.join("table12.json"), serde_json::to_string_pretty(&reports)?)?;
            println!("table12: {} rows", reports.len());
        }
        Suite::Table5 | Suite::Table6 => {
            let (rows, stem) = if suite == Suite::Table5 {
                (run_table5(&cfg)?, "table5")
            } else {
                (run_table6(&cfg)?, "table6")
            };
            write_ablation_csv(create(&dir.join(format!("{stem}.csv")))?, &rows)?;
            write(&dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&rows)?)?;
            for r in rows.iter().filter(|r| r.context == "avg") {
                println!("{stem}: {:<22} size {:>5} avg daily reward {:.1}", r.variant, r.size, r.avg_daily_reward);
            }
        }
    }
    Ok(dir)
}
