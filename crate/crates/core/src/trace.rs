//! Light and motion-event traces.
//!
//! A [`LightTrace`] is a sequence of `(timestamp, lux)` samples with a
//! nominal sampling step and a per-day weekend calendar. Traces come from a
//! CSV export ([`load_trace`]) or from one of the five synthetic indoor
//! archetypes ([`gen_synthetic`]). [`EventTrace`] holds motion-event
//! timestamps drawn from a day-rate Poisson process ([`gen_events`]).

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DAY_SECONDS: i64 = 86_400;

/// Monday 2024-01-01T00:00:00Z. Synthetic traces start here so that the
/// calendar survives a CSV round trip.
pub const SYNTHETIC_EPOCH: i64 = 1_704_067_200;

/// Native sampling step of generated traces (5 minutes).
pub const SYNTHETIC_STEP: i64 = 300;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid trace: {0}")]
    Validation(String),
    #[error("trace is empty")]
    Empty,
    #[error("resample step {target}s is not a positive multiple of source step {source_step}s")]
    BadStep { target: i64, source_step: i64 },
    #[error("unknown archetype `{0}`")]
    UnknownArchetype(String),
    #[error("invalid event rate {0} (must be finite and >= 0)")]
    BadRate(f64),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, TraceError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LuxSample {
    /// Seconds since trace start.
    pub t: i64,
    pub lux: f64,
}

/// Timestamped illuminance samples plus a weekend calendar.
#[derive(Debug, Clone, PartialEq)]
pub struct LightTrace {
    samples: Vec<LuxSample>,
    step: i64,
    start_epoch: i64,
    weekend: Vec<bool>,
}

fn is_weekend_epoch(epoch: i64) -> bool {
    DateTime::from_timestamp(epoch, 0)
        .map(|dt| matches!(dt.weekday(), Weekday::Sat | Weekday::Sun))
        .unwrap_or(false)
}

impl LightTrace {
    /// Builds a validated trace. The calendar is derived from `start_epoch`
    /// (UTC), one flag per started day.
    pub fn new(samples: Vec<LuxSample>, step: i64, start_epoch: i64) -> Result<Self> {
        if samples.is_empty() {
            return Err(TraceError::Empty);
        }
        if step <= 0 {
            return Err(TraceError::Validation(format!("step must be positive, got {step}")));
        }
        if samples[0].t < 0 {
            return Err(TraceError::Validation("first timestamp precedes trace start".into()));
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.lux.is_finite() || s.lux < 0.0 {
                return Err(TraceError::Validation(format!(
                    "sample {i}: lux must be finite and non-negative, got {}",
                    s.lux
                )));
            }
            if i > 0 && s.t <= samples[i - 1].t {
                return Err(TraceError::Validation(format!(
                    "sample {i}: timestamps must be strictly increasing ({} after {})",
                    s.t,
                    samples[i - 1].t
                )));
            }
        }
        let end = samples.last().map(|s| s.t).unwrap_or(0) + step;
        let days = ((end + DAY_SECONDS - 1) / DAY_SECONDS).max(1) as usize;
        let weekend = (0..days)
            .map(|d| is_weekend_epoch(start_epoch + d as i64 * DAY_SECONDS))
            .collect();
        Ok(Self { samples, step, start_epoch, weekend })
    }

    /// Uniformly sampled trace starting at `t = 0`.
    pub fn from_uniform(step: i64, lux: &[f64], start_epoch: i64) -> Result<Self> {
        let samples = lux
            .iter()
            .enumerate()
            .map(|(i, &lux)| LuxSample { t: i as i64 * step, lux })
            .collect();
        Self::new(samples, step, start_epoch)
    }

    pub fn samples(&self) -> &[LuxSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn step(&self) -> i64 {
        self.step
    }

    pub fn start_epoch(&self) -> i64 {
        self.start_epoch
    }

    /// Number of calendar days the trace touches.
    pub fn days(&self) -> usize {
        self.weekend.len()
    }

    pub fn calendar(&self) -> &[bool] {
        &self.weekend
    }

    pub fn is_weekend(&self, day: usize) -> bool {
        self.weekend.get(day).copied().unwrap_or(false)
    }

    /// Covered span in seconds (last sample plus one step).
    pub fn duration(&self) -> i64 {
        self.samples.last().map(|s| s.t).unwrap_or(0) + self.step
    }

    /// True when the samples form a uniform grid from `t = 0` that ends on a
    /// day boundary.
    pub fn is_whole_days(&self) -> bool {
        self.duration() % DAY_SECONDS == 0 && self.is_uniform()
    }

    pub fn is_uniform(&self) -> bool {
        self.samples.iter().enumerate().all(|(i, s)| s.t == i as i64 * self.step)
    }

    pub fn lux(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.lux)
    }

    pub fn mean_lux(&self) -> f64 {
        self.lux().sum::<f64>() / self.samples.len() as f64
    }

    /// Fraction of samples with exactly zero lux.
    pub fn zero_fraction(&self) -> f64 {
        self.lux().filter(|&l| l == 0.0).count() as f64 / self.samples.len() as f64
    }

    /// Sub-trace covering days `[first, first + count)`, re-based to `t = 0`.
    pub fn slice_days(&self, first: usize, count: usize) -> Result<Self> {
        let lo = first as i64 * DAY_SECONDS;
        let hi = lo + count as i64 * DAY_SECONDS;
        let samples: Vec<_> = self
            .samples
            .iter()
            .filter(|s| s.t >= lo && s.t < hi)
            .map(|s| LuxSample { t: s.t - lo, lux: s.lux })
            .collect();
        Self::new(samples, self.step, self.start_epoch + lo)
    }

    /// Appends whole-day traces back to back. All parts must share a step.
    /// The calendar of each part is preserved.
    pub fn concat(parts: &[LightTrace]) -> Result<Self> {
        let first = parts.first().ok_or(TraceError::Empty)?;
        let mut samples = Vec::new();
        let mut weekend = Vec::new();
        let mut offset = 0;
        for p in parts {
            if p.step != first.step {
                return Err(TraceError::Validation("concatenated traces must share a step".into()));
            }
            if !p.is_whole_days() {
                return Err(TraceError::Validation(
                    "only whole-day uniform traces can be concatenated".into(),
                ));
            }
            samples.extend(p.samples.iter().map(|s| LuxSample { t: s.t + offset, lux: s.lux }));
            weekend.extend_from_slice(&p.weekend);
            offset += p.duration();
        }
        let mut out = Self::new(samples, first.step, first.start_epoch)?;
        out.weekend = weekend;
        Ok(out)
    }

    /// Writes `timestamp,lux` with integer epoch-second timestamps.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestamp", "lux"])?;
        for s in &self.samples {
            w.write_record([(self.start_epoch + s.t).to_string(), format_lux(s.lux)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

fn format_lux(lux: f64) -> String {
    // Shortest round-trip representation.
    format!("{lux}")
}

fn parse_timestamp(field: &str) -> std::result::Result<i64, String> {
    let field = field.trim();
    if let Ok(v) = field.parse::<i64>() {
        return Ok(v);
    }
    DateTime::parse_from_rfc3339(field)
        .map(|dt| dt.timestamp())
        .map_err(|e| format!("bad timestamp `{field}`: {e}"))
}

/// Parses a `timestamp,lux` CSV. Timestamps may be integer epoch seconds or
/// RFC-3339. The nominal step is the median sample spacing.
pub fn read_trace<R: Read>(reader: R) -> Result<LightTrace> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 || &headers[0] != "timestamp" || &headers[1] != "lux" {
        return Err(TraceError::Parse { line: 1, message: "expected header `timestamp,lux`".into() });
    }
    let mut raw: Vec<(i64, f64)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| TraceError::Parse { line, message: e.to_string() })?;
        if rec.len() != 2 {
            return Err(TraceError::Parse { line, message: format!("expected 2 fields, got {}", rec.len()) });
        }
        let t = parse_timestamp(&rec[0]).map_err(|message| TraceError::Parse { line, message })?;
        let lux: f64 = rec[1]
            .parse()
            .map_err(|e| TraceError::Parse { line, message: format!("bad lux `{}`: {e}", &rec[1]) })?;
        raw.push((t, lux));
    }
    if raw.is_empty() {
        return Err(TraceError::Empty);
    }
    if raw.len() < 2 {
        return Err(TraceError::Validation("at least two samples are needed to infer the step".into()));
    }
    let start = raw[0].0;
    let mut gaps: Vec<i64> = raw.windows(2).map(|w| w[1].0 - w[0].0).collect();
    gaps.sort_unstable();
    let step = gaps[gaps.len() / 2];
    if step <= 0 {
        return Err(TraceError::Validation("timestamps must be strictly increasing".into()));
    }
    let samples = raw.into_iter().map(|(t, lux)| LuxSample { t: t - start, lux }).collect();
    LightTrace::new(samples, step, start)
}

pub fn load_trace(path: &Path) -> Result<LightTrace> {
    read_trace(std::fs::File::open(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResampleMode {
    /// Arithmetic mean of the source samples in each window.
    #[default]
    Mean,
    /// First source sample in each window (zero-order hold).
    Hold,
}

/// Re-grids the trace onto `[k·step, (k+1)·step)` windows. Empty windows
/// (gaps in an irregular source) hold the previous window's value.
pub fn resample(trace: &LightTrace, step: i64, mode: ResampleMode) -> Result<LightTrace> {
    if trace.is_empty() {
        return Err(TraceError::Empty);
    }
    if step <= 0 || step % trace.step != 0 {
        return Err(TraceError::BadStep { target: step, source_step: trace.step });
    }
    let windows = ((trace.duration() + step - 1) / step) as usize;
    let mut sums = vec![0.0; windows];
    let mut counts = vec![0usize; windows];
    let mut firsts = vec![f64::NAN; windows];
    for s in &trace.samples {
        let k = (s.t / step) as usize;
        if k >= windows {
            continue;
        }
        if counts[k] == 0 {
            firsts[k] = s.lux;
        }
        sums[k] += s.lux;
        counts[k] += 1;
    }
    let mut lux = Vec::with_capacity(windows);
    let mut last = 0.0;
    for k in 0..windows {
        let v = if counts[k] == 0 {
            last
        } else {
            match mode {
                ResampleMode::Mean => sums[k] / counts[k] as f64,
                ResampleMode::Hold => firsts[k],
            }
        };
        lux.push(v);
        last = v;
    }
    LightTrace::from_uniform(step, &lux, trace.start_epoch)
}

/// The five indoor lighting contexts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Archetype {
    ConferenceRoom,
    Stairs,
    MiddleOffice,
    Window,
    Door,
}

impl Archetype {
    pub const ALL: [Archetype; 5] = [
        Archetype::ConferenceRoom,
        Archetype::Stairs,
        Archetype::MiddleOffice,
        Archetype::Window,
        Archetype::Door,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Archetype::ConferenceRoom => "conference",
            Archetype::Stairs => "stairs",
            Archetype::MiddleOffice => "middle_office",
            Archetype::Window => "window",
            Archetype::Door => "door",
        }
    }

    /// Generator parameters. Means are tuned so long traces land near
    /// [`ArchetypeParams::target_mean_lux`].
    pub fn params(self) -> ArchetypeParams {
        let base = ArchetypeParams {
            base_lux: 0.0,
            daylight_peak_lux: 0.0,
            daylight_hours: (6.0, 19.0),
            lights_on_lux: 0.0,
            occupancy_hours: (8.0, 18.0),
            weekday_occupancy: 0.0,
            weekend_occupancy: 0.0,
            switch_off_prob: 0.0,
            noise: 0.05,
            target_mean_lux: 0.0,
        };
        match self {
            // Windowless; lights follow meeting bursts.
            Archetype::ConferenceRoom => ArchetypeParams {
                lights_on_lux: 3000.0,
                occupancy_hours: (7.0, 21.0),
                weekday_occupancy: 0.8,
                weekend_occupancy: 0.3,
                switch_off_prob: 0.35,
                target_mean_lux: 1139.0,
                ..base
            },
            // Security lights always on, held inside light level 1
            // (200..400 lux) around the clock.
            Archetype::Stairs => ArchetypeParams {
                base_lux: 385.0,
                noise: 0.01,
                target_mean_lux: 479.0,
                ..base
            },
            // Internal office lights on workdays, faint daylight spill.
            Archetype::MiddleOffice => ArchetypeParams {
                daylight_peak_lux: 150.0,
                lights_on_lux: 1150.0,
                occupancy_hours: (7.0, 19.0),
                weekday_occupancy: 0.9,
                weekend_occupancy: 0.05,
                switch_off_prob: 0.1,
                target_mean_lux: 423.0,
                ..base
            },
            // Natural light only: dark nights, diurnal arch by day.
            Archetype::Window => ArchetypeParams {
                daylight_peak_lux: 13_800.0,
                target_mean_lux: 4301.0,
                ..base
            },
            // Dim corridor spill plus room lights while occupied.
            Archetype::Door => ArchetypeParams {
                base_lux: 50.0,
                daylight_peak_lux: 300.0,
                lights_on_lux: 1000.0,
                occupancy_hours: (7.0, 20.0),
                weekday_occupancy: 0.9,
                weekend_occupancy: 0.3,
                switch_off_prob: 0.2,
                target_mean_lux: 554.0,
                ..base
            },
        }
    }
}

impl fmt::Display for Archetype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Archetype {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "conference" | "conference_room" => Ok(Archetype::ConferenceRoom),
            "stairs" | "staircase" => Ok(Archetype::Stairs),
            "middle_office" | "middle" | "middleoffice" => Ok(Archetype::MiddleOffice),
            "window" => Ok(Archetype::Window),
            "door" => Ok(Archetype::Door),
            _ => Err(TraceError::UnknownArchetype(s.to_string())),
        }
    }
}

impl TryFrom<String> for Archetype {
    type Error = TraceError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Archetype> for String {
    fn from(a: Archetype) -> Self {
        a.name().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArchetypeParams {
    /// Always-on illuminance.
    pub base_lux: f64,
    /// Clear-sky daylight peak; scaled by a per-day cloud factor.
    pub daylight_peak_lux: f64,
    /// Sunrise and sunset, hours of day.
    pub daylight_hours: (f64, f64),
    /// Illuminance added while internal lights are on.
    pub lights_on_lux: f64,
    pub occupancy_hours: (f64, f64),
    /// Stationary probability that lights are on in a 15-minute slot.
    pub weekday_occupancy: f64,
    pub weekend_occupancy: f64,
    /// Per-slot probability that lit lights switch off (burst length).
    pub switch_off_prob: f64,
    /// Relative per-sample jitter.
    pub noise: f64,
    pub target_mean_lux: f64,
}

/// Generates `days` of 5-minute samples for the archetype, starting on a
/// Monday. Deterministic in `seed`.
pub fn gen_synthetic(archetype: Archetype, days: usize, seed: u64) -> Result<LightTrace> {
    if days == 0 {
        return Err(TraceError::Validation("days must be >= 1".into()));
    }
    let p = archetype.params();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (archetype as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    let jitter = Normal::new(0.0, p.noise).expect("finite noise");
    let per_day = (DAY_SECONDS / SYNTHETIC_STEP) as usize;
    let slot_samples = (900 / SYNTHETIC_STEP) as usize;
    let mut lux = Vec::with_capacity(days * per_day);
    for day in 0..days {
        let weekend = day % 7 >= 5;
        let cloud: f64 = rng.random_range(0.6..1.2);
        let occupancy = if weekend { p.weekend_occupancy } else { p.weekday_occupancy };
        // Two-state slot process: P(off→on) chosen so the stationary on
        // probability equals `occupancy`.
        let switch_on = if occupancy >= 1.0 {
            1.0
        } else {
            (p.switch_off_prob * occupancy / (1.0 - occupancy)).min(1.0)
        };
        let mut lights = false;
        for i in 0..per_day {
            let hour = (i as i64 * SYNTHETIC_STEP) as f64 / 3600.0;
            if i % slot_samples == 0 {
                let open = hour >= p.occupancy_hours.0 && hour < p.occupancy_hours.1;
                lights = if !open || occupancy <= 0.0 {
                    false
                } else if lights {
                    rng.random::<f64>() >= p.switch_off_prob
                } else {
                    rng.random::<f64>() < switch_on
                };
            }
            let (rise, set) = p.daylight_hours;
            let daylight = if hour > rise && hour < set {
                p.daylight_peak_lux * cloud * (std::f64::consts::PI * (hour - rise) / (set - rise)).sin()
            } else {
                0.0
            };
            let internal = if lights { p.lights_on_lux } else { 0.0 };
            let clean = p.base_lux + daylight + internal;
            let v = if clean > 0.0 { clean * (1.0 + jitter.sample(&mut rng)) } else { 0.0 };
            lux.push(v.max(0.0));
        }
    }
    LightTrace::from_uniform(SYNTHETIC_STEP, &lux, SYNTHETIC_EPOCH)
}

/// Motion-event timestamps (seconds since trace start).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventTrace {
    events: Vec<f64>,
    day_rates: (f64, f64),
    horizon: f64,
}

impl EventTrace {
    pub fn new(events: Vec<f64>, day_rates: (f64, f64), horizon: f64) -> Result<Self> {
        for (i, &e) in events.iter().enumerate() {
            if !e.is_finite() || e < 0.0 || e >= horizon {
                return Err(TraceError::Validation(format!("event {i} at {e}s outside [0, {horizon})")));
            }
            if i > 0 && e <= events[i - 1] {
                return Err(TraceError::Validation(format!("event {i}: timestamps must be strictly increasing")));
            }
        }
        Ok(Self { events, day_rates, horizon })
    }

    pub fn events(&self) -> &[f64] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// `(weekday_rate, weekend_rate)` in events per day.
    pub fn day_rates(&self) -> (f64, f64) {
        self.day_rates
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Events with `lo <= t < hi`.
    pub fn in_range(&self, lo: f64, hi: f64) -> &[f64] {
        let a = self.events.partition_point(|&e| e < lo);
        let b = self.events.partition_point(|&e| e < hi);
        &self.events[a..b]
    }

    /// Writes a single-column `timestamp` CSV (seconds since trace start).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestamp"])?;
        for e in &self.events {
            w.write_record([format!("{e}")])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R, horizon: f64) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        if rdr.headers()?.get(0) != Some("timestamp") {
            return Err(TraceError::Parse { line: 1, message: "expected header `timestamp`".into() });
        }
        let mut events = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i + 2;
            let rec = rec.map_err(|e| TraceError::Parse { line, message: e.to_string() })?;
            let v: f64 = rec
                .get(0)
                .unwrap_or("")
                .parse()
                .map_err(|e| TraceError::Parse { line, message: format!("bad timestamp: {e}") })?;
            events.push(v);
        }
        Self::new(events, (0.0, 0.0), horizon)
    }
}

/// Draws a Poisson event stream: for each day a Poisson count with that
/// day's rate, placed uniformly within the day.
pub fn gen_events(
    days: usize,
    weekday_rate: f64,
    weekend_rate: f64,
    calendar: &[bool],
    seed: u64,
) -> Result<EventTrace> {
    for r in [weekday_rate, weekend_rate] {
        if !r.is_finite() || r < 0.0 {
            return Err(TraceError::BadRate(r));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    for day in 0..days {
        let weekend = calendar.get(day).copied().unwrap_or(day % 7 >= 5);
        let rate = if weekend { weekend_rate } else { weekday_rate };
        if rate == 0.0 {
            continue;
        }
        let n = Poisson::new(rate).expect("positive rate").sample(&mut rng) as usize;
        let start = (day as i64 * DAY_SECONDS) as f64;
        let mut day_events: Vec<f64> =
            (0..n).map(|_| start + rng.random::<f64>() * DAY_SECONDS as f64).collect();
        day_events.sort_by(f64::total_cmp);
        day_events.dedup();
        events.extend(day_events);
    }
    EventTrace::new(events, (weekday_rate, weekend_rate), (days as i64 * DAY_SECONDS) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_row_file() {
        let csv = "timestamp,lux\n0,200\n300,210\n";
        let t = read_trace(csv.as_bytes()).unwrap();
        assert_eq!(t.step(), 300);
        assert_eq!(t.len(), 2);
        assert_eq!(t.days(), 1);
    }

    #[test]
    fn negative_lux_rejected() {
        let csv = "timestamp,lux\n0,200\n300,-5\n";
        assert!(matches!(read_trace(csv.as_bytes()), Err(TraceError::Validation(_))));
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "timestamp,lux\n0,200\n300,abc\n";
        match read_trace(csv.as_bytes()) {
            Err(TraceError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_monotonic_rejected() {
        let csv = "timestamp,lux\n0,1\n600,1\n300,1\n";
        assert!(matches!(read_trace(csv.as_bytes()), Err(TraceError::Validation(_))));
    }

    #[test]
    fn rfc3339_timestamps_and_calendar() {
        // 2024-01-06 is a Saturday.
        let csv = "timestamp,lux\n2024-01-05T00:00:00Z,10\n2024-01-05T00:05:00Z,10\n2024-01-05T00:10:00Z,10\n2024-01-06T00:00:00Z,5\n";
        let t = read_trace(csv.as_bytes()).unwrap();
        assert_eq!(t.step(), 300);
        assert_eq!(t.calendar(), &[false, true]);
    }

    #[test]
    fn fifteen_days_at_five_minutes() {
        let n = 15 * 24 * 12;
        let mut csv = String::from("timestamp,lux\n");
        for i in 0..n {
            csv.push_str(&format!("{},{}\n", SYNTHETIC_EPOCH + i * 300, 100));
        }
        let t = read_trace(csv.as_bytes()).unwrap();
        assert_eq!(t.len(), 4320);
        assert_eq!(t.days(), 15);
        assert!(t.is_whole_days());
        assert_eq!(t.calendar().iter().filter(|&&w| w).count(), 4);
    }

    #[test]
    fn resample_constant() {
        let t = LightTrace::from_uniform(300, &vec![200.0; 288], SYNTHETIC_EPOCH).unwrap();
        let r = resample(&t, 900, ResampleMode::Mean).unwrap();
        assert_eq!(r.len(), 96);
        assert!(r.lux().all(|l| l == 200.0));
    }

    #[test]
    fn resample_mean_and_hold() {
        let t = LightTrace::from_uniform(300, &[200.0, 400.0, 600.0], 0).unwrap();
        let m = resample(&t, 900, ResampleMode::Mean).unwrap();
        assert_eq!(m.samples()[0].lux, 400.0);
        let h = resample(&t, 900, ResampleMode::Hold).unwrap();
        assert_eq!(h.samples()[0].lux, 200.0);
    }

    #[test]
    fn resample_bad_step() {
        let t = LightTrace::from_uniform(300, &[1.0, 2.0], 0).unwrap();
        assert!(matches!(resample(&t, 450, ResampleMode::Mean), Err(TraceError::BadStep { .. })));
        assert!(matches!(resample(&t, 0, ResampleMode::Mean), Err(TraceError::BadStep { .. })));
    }

    #[test]
    fn empty_trace_rejected() {
        assert!(matches!(LightTrace::new(vec![], 300, 0), Err(TraceError::Empty)));
        assert!(matches!(read_trace("timestamp,lux\n".as_bytes()), Err(TraceError::Empty)));
    }

    #[test]
    fn resample_identity_at_source_step() {
        let t = gen_synthetic(Archetype::Door, 2, 3).unwrap();
        assert_eq!(resample(&t, t.step(), ResampleMode::Mean).unwrap(), t);
    }

    #[test]
    fn unknown_archetype() {
        assert!(matches!("attic".parse::<Archetype>(), Err(TraceError::UnknownArchetype(_))));
        assert_eq!("middle-office".parse::<Archetype>().unwrap(), Archetype::MiddleOffice);
    }

    #[test]
    fn synthetic_is_deterministic() {
        for a in Archetype::ALL {
            assert_eq!(gen_synthetic(a, 3, 11).unwrap(), gen_synthetic(a, 3, 11).unwrap());
        }
        assert_ne!(
            gen_synthetic(Archetype::Window, 3, 1).unwrap(),
            gen_synthetic(Archetype::Window, 3, 2).unwrap()
        );
    }

    #[test]
    fn stairs_never_dark() {
        let t = gen_synthetic(Archetype::Stairs, 1, 5).unwrap();
        assert_eq!(t.zero_fraction(), 0.0);
        // Every sample sits on the security light, inside light level 1.
        assert!(t.samples().iter().all(|s| (200.0..400.0).contains(&s.lux)));
    }

    #[test]
    fn window_has_dark_nights_and_bright_days() {
        let t = gen_synthetic(Archetype::Window, 7, 5).unwrap();
        assert!(t.zero_fraction() > 0.3);
        let noon = t.samples()[12 * 12].lux;
        assert!(noon > 5000.0, "noon {noon}");
        assert_eq!(t.samples()[0].lux, 0.0);
    }

    #[test]
    fn archetype_means_near_targets() {
        for a in Archetype::ALL {
            let target = a.params().target_mean_lux;
            for seed in [1, 2, 3] {
                let mean = gen_synthetic(a, 14, seed).unwrap().mean_lux();
                assert!((mean / target - 1.0).abs() <= 0.25, "{a} seed {seed}: mean {mean} vs {target}");
            }
        }
    }

    #[test]
    fn events_zero_rate() {
        let e = gen_events(10, 0.0, 0.0, &[], 1).unwrap();
        assert!(e.is_empty());
    }

    #[test]
    fn events_negative_rate() {
        assert!(matches!(gen_events(1, -1.0, 0.0, &[], 1), Err(TraceError::BadRate(_))));
    }

    #[test]
    fn events_sorted_in_horizon() {
        let cal: Vec<bool> = (0..14).map(|d| d % 7 >= 5).collect();
        let e = gen_events(14, 50.0, 20.0, &cal, 9).unwrap();
        assert!(e.events().windows(2).all(|w| w[0] < w[1]));
        assert!(e.events().iter().all(|&t| (0.0..14.0 * 86_400.0).contains(&t)));
        assert_eq!(e, gen_events(14, 50.0, 20.0, &cal, 9).unwrap());
    }

    #[test]
    fn events_csv_round_trip() {
        let e = gen_events(2, 30.0, 30.0, &[], 4).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let back = EventTrace::read_csv(buf.as_slice(), e.horizon()).unwrap();
        assert_eq!(back.events(), e.events());
    }
}
