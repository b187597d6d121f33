//! Randomized invariants across modules.

use harvest_rl::agent::{epsilon_schedule, select_action, train_day_by_day, AgentConfig};
use harvest_rl::energy::{event_load, periodic_load, step_capacitor, NodeEnergyConfig, SupercapState};
use harvest_rl::env::{
    decode_state, discretize_light, discretize_voltage, state_id, ActionSet, EnvConfig, EnvState, EpisodeLog, LogRow,
    StateFeatureSet,
};
use harvest_rl::metrics::{dead_time, debounce, duty_cycle_period};
use harvest_rl::qtable::QTable;
use harvest_rl::trace::{gen_synthetic, Archetype};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn feature_set() -> impl Strategy<Value = StateFeatureSet> {
    prop::sample::select(StateFeatureSet::ABLATION.to_vec())
}

fn sorted_events(max_len: usize, horizon: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..horizon, 0..max_len).prop_map(|mut v| {
        v.sort_by(f64::total_cmp);
        v
    })
}

fn row(step: usize, sleep_s: f64, sends: u32, alive: bool) -> LogRow {
    LogRow {
        step,
        timestamp: step as i64 * 900,
        lux: 0.0,
        voltage: 4.0,
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

proptest! {
    #[test]
    fn state_ids_are_a_bijection(
        f in feature_set(),
        storage in 0u8..=10,
        light in 0u8..=10,
        weekend: bool,
        hour in 0u8..24,
    ) {
        let state = EnvState {
            light_level: if f.light { light } else { 0 },
            storage_level: storage,
            is_weekend: f.week && weekend,
            hour: f.time.then_some(hour),
        };
        let id = state_id(&state, f);
        prop_assert!(id < f.n_states());
        prop_assert_eq!(decode_state(id, f), state);
    }

    #[test]
    fn decode_then_encode_is_identity(f in feature_set(), raw in 0usize..5808) {
        let id = raw % f.n_states();
        prop_assert_eq!(state_id(&decode_state(id, f), f), id);
    }

    #[test]
    fn discretizers_are_monotone_and_bounded(a in 0.0..5000.0f64, b in 0.0..5000.0f64, v in 0.0..6.0f64, w in 0.0..6.0f64) {
        let cfg = NodeEnergyConfig::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(discretize_light(lo) <= discretize_light(hi));
        prop_assert!(discretize_light(hi) <= 10);
        let (lo, hi) = if v <= w { (v, w) } else { (w, v) };
        prop_assert!(discretize_voltage(lo, &cfg) <= discretize_voltage(hi, &cfg));
        prop_assert!(discretize_voltage(hi, &cfg) <= 10);
    }

    #[test]
    fn debounce_is_idempotent_and_spaced(ev in sorted_events(80, 7200.0), window in 1.0..600.0f64) {
        let once = debounce(&ev, window);
        prop_assert_eq!(debounce(&once, window), once.clone());
        prop_assert!(once.windows(2).all(|p| p[1] - p[0] >= window));
        prop_assert!(once.iter().all(|e| ev.contains(e)));
        prop_assert_eq!(once.first(), ev.first());
    }

    #[test]
    fn epsilon_is_monotone_and_capped(a in 0u64..100_000, b in 0u64..100_000) {
        let cfg = AgentConfig::default();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(epsilon_schedule(lo, &cfg) <= epsilon_schedule(hi, &cfg));
        prop_assert!(epsilon_schedule(hi, &cfg) <= cfg.epsilon_max);
        prop_assert!(epsilon_schedule(lo, &cfg) >= cfg.epsilon_min);
    }

    #[test]
    fn table_bytes_round_trip(f in feature_set(), scale in 0.0..1e6f64, seed: u64) {
        let q = QTable::random(f, ActionSet::standard(), scale, seed);
        let back = QTable::from_bytes(&q.to_bytes()).unwrap();
        prop_assert!(back.values().iter().zip(q.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
        prop_assert_eq!(back, q);
    }

    #[test]
    fn corrupted_table_is_rejected(seed: u64, at in 0usize..7825, flip in 1u8..=255) {
        let mut bytes = QTable::random(StateFeatureSet::default(), ActionSet::standard(), 10.0, seed).to_bytes();
        bytes[at] ^= flip;
        prop_assert!(QTable::from_bytes(&bytes).is_err());
    }

    #[test]
    fn greedy_choice_survives_positive_scaling(seed: u64, k in 0.01..100.0f64) {
        let q = QTable::random(StateFeatureSet::SC, ActionSet::standard(), 50.0, seed);
        let mut scaled = q.clone();
        for s in 0..q.n_states() {
            for v in scaled.row_mut(s) {
                *v *= k;
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for s in 0..q.n_states() {
            prop_assert_eq!(select_action(&scaled, s, 1.0, &mut rng), q.argmax(s));
        }
    }

    #[test]
    fn periodic_charge_is_accounted(sleep in 0.0..1000.0f64, t_active in 0.5..30.0f64) {
        let cfg = NodeEnergyConfig { t_active, ..NodeEnergyConfig::default() };
        let l = periodic_load(sleep, 900.0, &cfg);
        prop_assert!(l.n_sends >= 1);
        prop_assert!((l.sleep_seconds + l.active_seconds - 900.0).abs() < 1e-9);
        let expect = l.n_sends as f64 * cfg.i_send * t_active + l.sleep_seconds * cfg.i_sleep;
        prop_assert!((l.charge - expect).abs() < 1e-15);
    }

    #[test]
    fn capacitor_conserves_charge(v0 in 0.5..5.0f64, i in -1e-3..1e-3f64, dt in 1.0..900.0f64, c in 0.5..2.0f64) {
        let cfg = NodeEnergyConfig { capacitance: c, ..NodeEnergyConfig::default() };
        let next = step_capacitor(SupercapState::new(v0, &cfg), i, dt, &cfg);
        let unclamped = v0 + i * dt / c;
        if (0.0..=cfg.v_max).contains(&unclamped) {
            prop_assert!(((next.voltage - v0) * c - i * dt).abs() < 1e-12);
        } else {
            prop_assert!(next.voltage == 0.0 || next.voltage == cfg.v_max);
        }
        prop_assert_eq!(next.alive, next.voltage >= cfg.v_dead);
    }

    #[test]
    fn events_are_detected_or_missed(ev in sorted_events(40, 900.0), sleep in 0.0..900.0f64, carry in 0.0..900.0f64) {
        let cfg = NodeEnergyConfig::event_mode();
        let (load, w) = event_load(sleep, 900.0, &ev, carry, &cfg);
        prop_assert_eq!((load.pir_events_detected + load.pir_events_missed) as usize, ev.len());
        prop_assert_eq!(w.detected.len(), load.pir_events_detected as usize);
        prop_assert!(w.detected.windows(2).all(|p| p[1] - p[0] >= sleep));
        prop_assert!(w.detected.iter().all(|&d| d >= carry));
        prop_assert!(load.charge >= 0.0);
    }

    #[test]
    fn dead_time_composes_over_concatenation(a in prop::collection::vec(any::<bool>(), 1..200), b in prop::collection::vec(any::<bool>(), 1..200)) {
        let la = EpisodeLog { rows: a.iter().enumerate().map(|(i, &al)| row(i, 60.0, al as u32, al)).collect(), detected_events: vec![] };
        let lb = EpisodeLog { rows: b.iter().enumerate().map(|(i, &al)| row(a.len() + i, 60.0, al as u32, al)).collect(), detected_events: vec![] };
        let mut both = la.clone();
        both.extend(lb.clone());
        let (fa, da) = dead_time(&la);
        let (fb, db) = dead_time(&lb);
        let (f, d) = dead_time(&both);
        let n = (a.len() + b.len()) as f64;
        prop_assert!((f * n - (fa * a.len() as f64 + fb * b.len() as f64)).abs() < 1e-9);
        // A death straddling the seam is counted once; `lb` alone counts it
        // only when it starts dead.
        let seam = u32::from(*a.last().unwrap() && !b[0]);
        let lb_start = u32::from(!b[0]);
        prop_assert_eq!(d, da + db - lb_start + seam);
    }

    #[test]
    fn fixed_period_is_sleep_plus_active(sleep in 1.0..800.0f64, t_active in 1.0..20.0f64, n in 1usize..200) {
        let log = EpisodeLog {
            rows: (0..n).map(|i| row(i, sleep, ((900.0 / (sleep + t_active)).floor() as u32).max(1), true)).collect(),
            detected_events: vec![],
        };
        prop_assert!((duty_cycle_period(&log, t_active).unwrap() - (sleep + t_active)).abs() < 1e-9);
    }
}

#[test]
fn day_by_day_inherits_the_table() {
    let trace = harvest_rl::experiment::control_trace(&gen_synthetic(Archetype::Door, 5, 3).unwrap()).unwrap();
    let r = train_day_by_day(&trace, None, &EnvConfig::default(), &AgentConfig::default(), None, 4).unwrap();
    assert_eq!(r.tables.len(), 5);
    for w in r.tables.windows(2) {
        assert!(w[1].visited_count() >= w[0].visited_count());
        for s in 0..w[0].n_states() {
            assert!(w[0].is_unseen(s) || !w[1].is_unseen(s), "state {s} forgotten");
        }
    }
}
