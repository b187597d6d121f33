//! Electrical model of a solar-harvesting supercapacitor node.
//!
//! All dynamics are in charge form: a window's net charge
//! `(i_harvest - i_load) * dt` moves the capacitor by `dQ / C`. Loads are
//! constant currents per operating mode, so a 15-minute window aggregates
//! in closed form.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Per-send active time found by [`calibrate_active_time`] against the
/// three zero-light discharge lifetimes (15 s, 60 s, 600 s periods).
pub const DEFAULT_T_ACTIVE: f64 = 11.8;

/// Length of one control window.
pub const WINDOW_SECONDS: f64 = 900.0;

#[derive(Debug, Error, PartialEq)]
pub enum EnergyError {
    #[error("invalid energy config: {0}")]
    InvalidConfig(String),
    #[error("no calibration targets given")]
    NoTargets,
    #[error("calibration infeasible: best max relative error {best_error:.3} at t_active={t_active:.2}s exceeds {limit}")]
    Infeasible { t_active: f64, best_error: f64, limit: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NodeEnergyConfig {
    /// Farads.
    pub capacitance: f64,
    /// Volts.
    pub v_max: f64,
    /// Brown-out voltage; the hardware stops below this.
    pub v_min_operational: f64,
    /// Death threshold for duty cycling and the depletion penalty.
    pub v_dead: f64,
    /// Amps, board leakage plus MCU sleep.
    pub i_sleep: f64,
    /// Amps, sleep with the PIR sensor powered.
    pub i_sleep_pir: f64,
    /// Amps while sensing and transmitting.
    pub i_send: f64,
    /// Amps while the PIR reports a detection.
    pub i_pir_event: f64,
    /// Seconds per PIR detection.
    pub t_pir_event: f64,
    /// Panel current at `lux_ref`.
    pub i_harvest_ref: f64,
    pub lux_ref: f64,
    /// Seconds awake per send cycle.
    pub t_active: f64,
}

impl Default for NodeEnergyConfig {
    fn default() -> Self {
        Self {
            capacitance: 1.0,
            v_max: 5.5,
            v_min_operational: 2.1,
            v_dead: 3.0,
            i_sleep: 3.5e-6,
            i_sleep_pir: 4.5e-6,
            i_send: 199e-6,
            i_pir_event: 102e-6,
            t_pir_event: 2.5,
            i_harvest_ref: 35.2e-6,
            lux_ref: 200.0,
            t_active: DEFAULT_T_ACTIVE,
        }
    }
}

impl NodeEnergyConfig {
    /// Defaults for PIR deployments (larger capacitor).
    pub fn event_mode() -> Self {
        Self { capacitance: 1.5, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), EnergyError> {
        let bad = |m: &str| Err(EnergyError::InvalidConfig(m.to_string()));
        if !(self.capacitance > 0.0 && self.capacitance.is_finite()) {
            return bad("capacitance must be > 0");
        }
        if !(0.0 < self.v_min_operational && self.v_min_operational < self.v_dead && self.v_dead < self.v_max) {
            return bad("need 0 < v_min_operational < v_dead < v_max");
        }
        let currents =
            [self.i_sleep, self.i_sleep_pir, self.i_send, self.i_pir_event, self.i_harvest_ref];
        if currents.iter().any(|&i| !(i > 0.0 && i.is_finite())) {
            return bad("all currents must be > 0");
        }
        if !(self.t_active > 0.0 && self.t_active.is_finite()) {
            return bad("t_active must be > 0");
        }
        if !(self.t_pir_event >= 0.0 && self.lux_ref > 0.0) {
            return bad("t_pir_event must be >= 0 and lux_ref > 0");
        }
        Ok(())
    }

    /// Charge of one sense-and-transmit cycle's active part.
    pub fn send_charge(&self) -> f64 {
        self.i_send * self.t_active
    }
}

/// Panel current for an illuminance, linear in lux.
pub fn harvest_current(lux: f64, cfg: &NodeEnergyConfig) -> f64 {
    cfg.i_harvest_ref * lux.max(0.0) / cfg.lux_ref
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupercapState {
    pub voltage: f64,
    /// Whether the node duty-cycles. Only re-evaluated at window boundaries.
    pub alive: bool,
}

impl SupercapState {
    pub fn new(voltage: f64, cfg: &NodeEnergyConfig) -> Self {
        let voltage = voltage.clamp(0.0, cfg.v_max);
        Self { voltage, alive: voltage >= cfg.v_dead }
    }

    pub fn full(cfg: &NodeEnergyConfig) -> Self {
        Self::new(cfg.v_max, cfg)
    }
}

/// Applies a constant net current for `dt` seconds.
pub fn step_capacitor(state: SupercapState, i_net: f64, dt: f64, cfg: &NodeEnergyConfig) -> SupercapState {
    debug_assert!(dt > 0.0);
    let voltage = (state.voltage + i_net * dt / cfg.capacitance).clamp(0.0, cfg.v_max);
    SupercapState { voltage, alive: voltage >= cfg.v_dead }
}

/// What the node did during one window, and the charge it drew.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WindowLoad {
    pub n_sends: u32,
    /// Seconds asleep between sends (periodic) or after an event (event mode).
    pub sleep_seconds: f64,
    pub active_seconds: f64,
    pub pir_events_detected: u32,
    pub pir_events_missed: u32,
    /// Seconds waiting for a PIR interrupt.
    pub pir_armed_seconds: f64,
    /// Coulombs drawn from the capacitor.
    pub charge: f64,
}

/// Periodic sensing: the node reports at least once per window (the step
/// boundary handshake) and then fits as many whole `sleep + t_active`
/// cycles as the window allows.
pub fn periodic_load(sleep_time: f64, window: f64, cfg: &NodeEnergyConfig) -> WindowLoad {
    periodic_load_with(sleep_time, window, cfg.i_sleep, cfg)
}

fn periodic_load_with(sleep_time: f64, window: f64, i_sleep: f64, cfg: &NodeEnergyConfig) -> WindowLoad {
    let cycle = sleep_time + cfg.t_active;
    let n = ((window / cycle).floor() as u32).max(1);
    let active = (n as f64 * cfg.t_active).min(window);
    let sleep = window - active;
    WindowLoad {
        n_sends: n,
        sleep_seconds: sleep,
        active_seconds: active,
        charge: n as f64 * cfg.send_charge() + sleep * i_sleep,
        ..WindowLoad::default()
    }
}

/// Result of an event-driven window beyond its [`WindowLoad`].
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventWindow {
    /// Offsets (seconds from window start) of detected events.
    pub detected: Vec<f64>,
    /// Offset at which the node is next able to detect; may exceed the
    /// window and then carries into the next one.
    pub asleep_until: f64,
}

/// Event-driven sensing: the node waits with the PIR armed, reports an
/// event, then sleeps for `sleep_time`. Events during that sleep are
/// missed. A cycle straddling the window end is charged to this window.
///
/// `offsets` must be sorted and within `[0, window)`; `asleep_until` is the
/// carried-over sleep end relative to this window's start.
pub fn event_load(
    sleep_time: f64,
    window: f64,
    offsets: &[f64],
    asleep_until: f64,
    cfg: &NodeEnergyConfig,
) -> (WindowLoad, EventWindow) {
    let mut out = EventWindow { detected: Vec::new(), asleep_until };
    let mut missed = 0u32;
    let mut busy = asleep_until.clamp(0.0, window);
    let mut post_sleep = 0.0;
    for &e in offsets {
        if e < out.asleep_until {
            missed += 1;
            continue;
        }
        out.detected.push(e);
        let active_end = e + cfg.t_active;
        let sleep_end = active_end + sleep_time;
        busy += (sleep_end.min(window) - e).max(0.0);
        post_sleep += (sleep_end.min(window) - active_end.min(window)).max(0.0);
        out.asleep_until = sleep_end;
    }
    let n = out.detected.len() as u32;
    let active = (n as f64 * cfg.t_active).min(window);
    let powered = (window - active).max(0.0);
    let carried_sleep = asleep_until.clamp(0.0, window);
    let load = WindowLoad {
        n_sends: n,
        sleep_seconds: post_sleep + carried_sleep,
        active_seconds: active,
        pir_events_detected: n,
        pir_events_missed: missed,
        pir_armed_seconds: (window - busy).max(0.0),
        charge: n as f64 * (cfg.send_charge() + cfg.i_pir_event * cfg.t_pir_event)
            + powered * cfg.i_sleep_pir,
    };
    (load, out)
}

/// Seconds until a node sending every `sensing_period` seconds in the dark
/// falls below `v_min_operational`, starting from `initial_v`. With
/// `pir_armed` the sleep draw is the PIR sleep current.
///
/// The node is stepped through the same 900-second windows the
/// environment uses; the crossing inside the final window is interpolated
/// at that window's average current.
pub fn simulate_discharge(sensing_period: f64, cfg: &NodeEnergyConfig, initial_v: f64, pir_armed: bool) -> f64 {
    let i_sleep = if pir_armed { cfg.i_sleep_pir } else { cfg.i_sleep };
    let load = periodic_load_with(sensing_period, WINDOW_SECONDS, i_sleep, cfg);
    let dv = load.charge / cfg.capacitance;
    let mut v = initial_v.min(cfg.v_max);
    if v < cfg.v_min_operational {
        return 0.0;
    }
    // Whole windows first, then the partial one.
    let whole = ((v - cfg.v_min_operational) / dv).floor();
    v -= whole * dv;
    let mut t = whole * WINDOW_SECONDS;
    if v < cfg.v_min_operational {
        // Floating-point edge: step back one window.
        v += dv;
        t -= WINDOW_SECONDS;
    }
    t + (v - cfg.v_min_operational) / dv * WINDOW_SECONDS
}

/// A zero-light lifetime measurement: `(sensing_period, lifetime)` in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LifetimeTarget {
    pub period: f64,
    pub lifetime: f64,
}

impl LifetimeTarget {
    pub const fn new(period: f64, lifetime: f64) -> Self {
        Self { period, lifetime }
    }
}

/// Measured zero-light lifetimes of the 1 F node: 9 h, 34 h and 6.25 days.
pub const DISCHARGE_TARGETS: [LifetimeTarget; 3] = [
    LifetimeTarget::new(15.0, 9.0 * 3600.0),
    LifetimeTarget::new(60.0, 34.0 * 3600.0),
    LifetimeTarget::new(600.0, 6.25 * 86_400.0),
];

/// Measured lifetimes of the 1.5 F PIR node: 9.6 h and 8 days.
pub const PIR_DISCHARGE_TARGETS: [LifetimeTarget; 2] =
    [LifetimeTarget::new(15.0, 9.6 * 3600.0), LifetimeTarget::new(600.0, 8.0 * 86_400.0)];

/// Largest max-relative-error a calibration may end with.
pub const CALIBRATION_LIMIT: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub t_active: f64,
    /// Signed relative lifetime error per target, `sim / target - 1`.
    pub errors: Vec<f64>,
    pub max_error: f64,
    pub lifetimes: Vec<f64>,
}

fn lifetime_errors(t_active: f64, targets: &[LifetimeTarget], cfg: &NodeEnergyConfig, pir: bool) -> (Vec<f64>, Vec<f64>) {
    let c = NodeEnergyConfig { t_active, ..*cfg };
    let lifetimes: Vec<f64> =
        targets.iter().map(|t| simulate_discharge(t.period, &c, c.v_max, pir)).collect();
    let errors = lifetimes.iter().zip(targets).map(|(l, t)| l / t.lifetime - 1.0).collect();
    (lifetimes, errors)
}

fn max_abs(errors: &[f64]) -> f64 {
    errors.iter().fold(0.0_f64, |m, e| m.max(e.abs()))
}

/// Finds the `t_active` in `(0, 60]` s minimising the worst relative
/// lifetime error. Coarse 0.1 s scan, then a 1 ms scan around the best.
pub fn calibrate_active_time(
    targets: &[LifetimeTarget],
    cfg: &NodeEnergyConfig,
    pir_armed: bool,
) -> Result<Calibration, EnergyError> {
    if targets.is_empty() {
        return Err(EnergyError::NoTargets);
    }
    let score = |t: f64| max_abs(&lifetime_errors(t, targets, cfg, pir_armed).1);
    let mut best = (f64::INFINITY, 0.0);
    for k in 1..=600 {
        let t = k as f64 * 0.1;
        let s = score(t);
        if s < best.0 {
            best = (s, t);
        }
    }
    let centre = best.1;
    for k in -100..=100 {
        let t = centre + k as f64 * 0.001;
        if t <= 0.0 || t > 60.0 {
            continue;
        }
        let s = score(t);
        if s < best.0 {
            best = (s, t);
        }
    }
    let (score, t_active) = best;
    if score > CALIBRATION_LIMIT {
        return Err(EnergyError::Infeasible { t_active, best_error: score, limit: CALIBRATION_LIMIT });
    }
    let (lifetimes, errors) = lifetime_errors(t_active, targets, cfg, pir_armed);
    Ok(Calibration { t_active, max_error: max_abs(&errors), errors, lifetimes })
}
