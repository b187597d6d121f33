//! Evaluation quantities computed from episode logs.
//!
//! Everything here is a pure function of an [`EpisodeLog`] (or of event
//! timestamps), so every report can be recomputed from the log CSV.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::energy::NodeEnergyConfig;
use crate::env::{EpisodeLog, STEPS_PER_DAY};

/// Default event debounce window in seconds.
pub const DEBOUNCE_SECONDS: f64 = 120.0;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("metric undefined: {0}")]
    Undefined(&'static str),
    #[error("need at least two midnights, log has {0}")]
    TooFewMidnights(usize),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Average of `t_active + sleep` over completed duty cycles. Each logged
/// send is one completed cycle of that window's sleep time; dead windows
/// contribute none.
pub fn duty_cycle_period(log: &EpisodeLog, t_active: f64) -> Result<f64> {
    let (mut n, mut total) = (0u64, 0.0);
    for r in log.rows.iter().filter(|r| r.alive && r.sends > 0) {
        n += r.sends as u64;
        total += r.sends as f64 * (t_active + r.sleep_s);
    }
    if n == 0 {
        return Err(MetricsError::Undefined("no completed duty cycles"));
    }
    Ok(total / n as f64)
}

/// `t_active / duty_cycle_period`.
pub fn duty_cycle_ratio(log: &EpisodeLog, t_active: f64) -> Result<f64> {
    Ok(t_active / duty_cycle_period(log, t_active)?)
}

/// Fraction of windows spent dead and the number of alive-to-dead
/// transitions. A log that starts dead counts one death at its start.
pub fn dead_time(log: &EpisodeLog) -> (f64, u32) {
    if log.rows.is_empty() {
        return (0.0, 0);
    }
    let dead = log.rows.iter().filter(|r| !r.alive).count();
    let mut deaths = u32::from(!log.rows[0].alive);
    deaths += log.rows.windows(2).filter(|w| w[0].alive && !w[1].alive).count() as u32;
    (dead as f64 / log.rows.len() as f64, deaths)
}

/// Keeps an event only if it is at least `window` seconds after the last
/// kept one. Input must be sorted.
pub fn debounce(events: &[f64], window: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(events.len());
    for &e in events {
        if out.last().is_none_or(|&k| e - k >= window) {
            out.push(e);
        }
    }
    out
}

/// Debounced detections over debounced ground truth.
pub fn event_detection_rate(detected: &[f64], ground_truth: &[f64], window: f64) -> Result<f64> {
    let truth = debounce(ground_truth, window).len();
    if truth == 0 {
        return Err(MetricsError::Undefined("empty ground truth"));
    }
    Ok(debounce(detected, window).len() as f64 / truth as f64)
}

/// Storage level at one midnight and its change since the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MidnightPoint {
    /// Day that just ended.
    pub day: usize,
    /// Voltage as a percentage of the operational range.
    pub voltage_pct: f64,
    /// Percentage points since the previous midnight.
    pub delta: f64,
}

/// Voltage as a percentage of `[v_min_operational, v_max]`, clamped.
pub fn voltage_percent(v: f64, cfg: &NodeEnergyConfig) -> f64 {
    (100.0 * (v - cfg.v_min_operational) / (cfg.v_max - cfg.v_min_operational)).clamp(0.0, 100.0)
}

/// Midnight voltages (end of each complete day in the log) and their
/// day-over-day deltas, starting from the second midnight.
pub fn energy_neutrality(log: &EpisodeLog, cfg: &NodeEnergyConfig) -> Result<Vec<MidnightPoint>> {
    let midnights: Vec<(usize, f64)> = log
        .rows
        .iter()
        .filter(|r| r.step % STEPS_PER_DAY == STEPS_PER_DAY - 1)
        .map(|r| (r.step / STEPS_PER_DAY, voltage_percent(r.voltage, cfg)))
        .collect();
    if midnights.len() < 2 {
        return Err(MetricsError::TooFewMidnights(midnights.len()));
    }
    Ok(midnights
        .windows(2)
        .map(|w| MidnightPoint { day: w[1].0, voltage_pct: w[1].1, delta: w[1].1 - w[0].1 })
        .collect())
}

/// Trailing moving average of per-episode rewards as `(episode, value)`.
/// A window longer than the run yields one point averaging everything.
pub fn reward_curve(rewards: &[f64], window: usize) -> Vec<(usize, f64)> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let w = window.max(1);
    if w >= rewards.len() {
        return vec![(rewards.len() - 1, rewards.iter().sum::<f64>() / rewards.len() as f64)];
    }
    let mut sum: f64 = rewards[..w].iter().sum();
    let mut out = vec![(w - 1, sum / w as f64)];
    for i in w..rewards.len() {
        sum += rewards[i] - rewards[i - w];
        out.push((i, sum / w as f64));
    }
    out
}

/// Writes an `(x, y)` series as CSV.
pub fn write_series_csv<W: Write>(mut w: W, header: (&str, &str), series: &[(usize, f64)]) -> std::io::Result<()> {
    writeln!(w, "{},{}", header.0, header.1)?;
    for (x, y) in series {
        writeln!(w, "{x},{y}")?;
    }
    Ok(())
}

/// Summary of one evaluated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: String,
    pub context: String,
    pub days: usize,
    /// Seconds; absent when the node never completed a cycle.
    pub avg_duty_cycle_period: Option<f64>,
    pub duty_cycle_ratio: Option<f64>,
    pub dead_time_fraction: f64,
    pub deaths: u32,
    pub event_detection_rate: Option<f64>,
    pub energy_neutrality: Vec<MidnightPoint>,
    pub reward_total: f64,
}

impl MetricsReport {
    /// Scores `log`. `ground_truth` enables the detection rate.
    pub fn from_log(
        policy: &str,
        context: &str,
        log: &EpisodeLog,
        energy: &NodeEnergyConfig,
        ground_truth: Option<&[f64]>,
    ) -> Self {
        let period = duty_cycle_period(log, energy.t_active).ok();
        let (dead, deaths) = dead_time(log);
        Self {
            policy: policy.to_string(),
            context: context.to_string(),
            days: log.rows.len() / STEPS_PER_DAY,
            avg_duty_cycle_period: period,
            duty_cycle_ratio: period.map(|p| energy.t_active / p),
            dead_time_fraction: dead,
            deaths,
            event_detection_rate: ground_truth
                .and_then(|g| event_detection_rate(&log.detected_events, g, DEBOUNCE_SECONDS).ok()),
            energy_neutrality: energy_neutrality(log, energy).unwrap_or_default(),
            reward_total: log.total_reward(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Flat row for sweep tables.
    pub fn row(&self) -> ReportRow {
        let deltas: Vec<f64> = self.energy_neutrality.iter().map(|p| p.delta.abs()).collect();
        ReportRow {
            policy: self.policy.clone(),
            context: self.context.clone(),
            days: self.days,
            avg_duty_cycle_period: self.avg_duty_cycle_period,
            duty_cycle_ratio: self.duty_cycle_ratio,
            dead_time_fraction: self.dead_time_fraction,
            deaths: self.deaths,
            event_detection_rate: self.event_detection_rate,
            max_midnight_delta: deltas.iter().copied().reduce(f64::max),
            reward_total: self.reward_total,
        }
    }
}

/// One CSV row per report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub policy: String,
    pub context: String,
    pub days: usize,
    pub avg_duty_cycle_period: Option<f64>,
    pub duty_cycle_ratio: Option<f64>,
    pub dead_time_fraction: f64,
    pub deaths: u32,
    pub event_detection_rate: Option<f64>,
    pub max_midnight_delta: Option<f64>,
    pub reward_total: f64,
}

pub fn write_report_csv<W: Write>(w: W, reports: &[MetricsReport]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in reports {
        wr.serialize(r.row())?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::LogRow;

    fn row(step: usize, sleep_s: f64, sends: u32, alive: bool, voltage: f64) -> LogRow {
        LogRow {
            step,
            timestamp: step as i64 * 900,
            lux: 0.0,
            voltage,
            state_id: 0,
            action: 0,
            sleep_s,
            reward: 0.0,
            sends,
            events_detected: 0,
            events_missed: 0,
            alive,
        }
    }

    fn log(rows: Vec<LogRow>) -> EpisodeLog {
        EpisodeLog { rows, detected_events: Vec::new() }
    }

    #[test]
    fn period_constant_actions() {
        let l = log((0..96).map(|i| row(i, 60.0, 13, true, 5.0)).collect());
        assert!((duty_cycle_period(&l, 7.6).unwrap() - 67.6).abs() < 1e-12);
        let l = log((0..96).map(|i| row(i, 15.0, 39, true, 5.0)).collect());
        assert!((duty_cycle_period(&l, 7.6).unwrap() - 22.6).abs() < 1e-12);
    }

    #[test]
    fn period_weighted_by_cycles() {
        let l = log(vec![row(0, 15.0, 30, true, 5.0), row(1, 900.0, 10, true, 5.0)]);
        let expect = (30.0 * 22.6 + 10.0 * 907.6) / 40.0;
        assert!((duty_cycle_period(&l, 7.6).unwrap() - expect).abs() < 1e-9);
    }

    #[test]
    fn ratio_examples() {
        let l = log(vec![row(0, 68.4, 1, true, 5.0)]);
        assert!((duty_cycle_ratio(&l, 7.6).unwrap() - 0.1).abs() < 1e-12);
        let l = log(vec![row(0, 900.0, 1, true, 5.0)]);
        assert!((duty_cycle_ratio(&l, 7.6).unwrap() - 7.6 / 907.6).abs() < 1e-12);
    }

    #[test]
    fn no_cycles_is_undefined() {
        let l = log(vec![row(0, 900.0, 0, false, 2.0)]);
        assert!(duty_cycle_period(&l, 7.6).is_err());
    }

    #[test]
    fn dead_time_cases() {
        assert_eq!(dead_time(&log((0..96).map(|i| row(i, 900.0, 1, true, 5.0)).collect())), (0.0, 0));
        let l = log((0..96).map(|i| row(i, 900.0, 1, i != 40, 5.0)).collect());
        assert_eq!(dead_time(&l), (1.0 / 96.0, 1));
        let l = log((0..96).map(|i| row(i, 900.0, 0, false, 1.0)).collect());
        assert_eq!(dead_time(&l), (1.0, 1));
    }

    #[test]
    fn debounce_example() {
        assert_eq!(debounce(&[0.0, 60.0, 130.0], 120.0), vec![0.0, 130.0]);
        assert_eq!(debounce(&[], 120.0), Vec::<f64>::new());
    }

    #[test]
    fn detection_rate_cases() {
        let gt = [0.0, 500.0, 1000.0];
        assert_eq!(event_detection_rate(&gt, &gt, 120.0).unwrap(), 1.0);
        assert_eq!(event_detection_rate(&[], &gt, 120.0).unwrap(), 0.0);
        assert!(event_detection_rate(&[], &[], 120.0).is_err());
    }

    #[test]
    fn neutrality_deltas() {
        let c = NodeEnergyConfig::default();
        let v = |pct: f64| 2.1 + pct / 100.0 * 3.4;
        let mut rows: Vec<LogRow> = (0..192).map(|i| row(i, 900.0, 1, true, 4.0)).collect();
        rows[95].voltage = v(93.0);
        rows[191].voltage = v(100.0);
        let pts = energy_neutrality(&log(rows.clone()), &c).unwrap();
        assert_eq!(pts.len(), 1);
        assert!((pts[0].delta - 7.0).abs() < 1e-9);
        rows[191].voltage = v(93.0);
        assert!(energy_neutrality(&log(rows.clone()), &c).unwrap()[0].delta.abs() < 1e-9);
        assert!(matches!(energy_neutrality(&log(rows[..96].to_vec()), &c), Err(MetricsError::TooFewMidnights(1))));
    }

    #[test]
    fn reward_curve_cases() {
        assert!(reward_curve(&[4.0; 300], 100).iter().all(|&(_, y)| y == 4.0));
        assert_eq!(reward_curve(&[1.0, 2.0, 3.0], 100), vec![(2, 2.0)]);
        let rising: Vec<f64> = (0..500).map(|i| i as f64).collect();
        let c = reward_curve(&rising, 100);
        assert_eq!(c.len(), 401);
        assert!(c.windows(2).all(|w| w[1].1 >= w[0].1));
        assert_eq!(c[0], (99, 49.5));
    }

    #[test]
    fn report_round_trip() {
        let c = NodeEnergyConfig::default();
        let l = log((0..192).map(|i| row(i, 60.0, 12, true, 5.0)).collect());
        let r = MetricsReport::from_log("aces", "window", &l, &c, None);
        let back: MetricsReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
        let mut buf = Vec::new();
        write_report_csv(&mut buf, &[r]).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("policy,context,days,"));
    }
}
