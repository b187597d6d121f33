//! Dense Q-table and its on-disk format.
//!
//! The file layout is little-endian throughout:
//!
//! ```text
//! magic "HRQT" | version u16 | kind u8 | feature bits u8 | n_actions u8
//! | n_sleep u8 | n_states u32 | sleep times f64 * n_sleep
//! | visited bitmask ceil(n_states / 8) bytes | values f64 * n_states * n_actions
//! | crc32 u32 over everything before it
//! ```
//!
//! The default 242-state, 4-action table is 7 825 bytes.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{Action, ActionSet, StateFeatureSet};

const MAGIC: &[u8; 4] = b"HRQT";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum QTableError {
    #[error("not a Q-table file (bad magic)")]
    BadMagic,
    #[error("unsupported Q-table version {0} (expected {FORMAT_VERSION})")]
    Version(u16),
    #[error("Q-table file truncated or oversized: {0}")]
    Length(String),
    #[error("checksum mismatch: file is corrupt")]
    Checksum,
    #[error("invalid Q-table header: {0}")]
    Header(String),
    #[error("table shape mismatch: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How actions index the sleep-time set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    /// One action per sleep time.
    Direct,
    /// Actions are decrease/keep/increase moves on the sleep ladder and the
    /// ladder position is folded into the state id.
    Ladder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    kind: TableKind,
    features: StateFeatureSet,
    actions: ActionSet,
    n_states: usize,
    n_actions: usize,
    visited: Vec<bool>,
    values: Vec<f64>,
}

impl QTable {
    /// All-zero table with one action per sleep time.
    pub fn zeros(features: StateFeatureSet, actions: ActionSet) -> Self {
        let n_states = features.n_states();
        let n_actions = actions.len();
        Self::with_shape(TableKind::Direct, features, actions, n_states, n_actions)
    }

    /// All-zero ladder table: three move actions over `ladder`, with the
    /// ladder position multiplied into the state space.
    pub fn ladder(features: StateFeatureSet, ladder: ActionSet) -> Self {
        let n_states = features.n_states() * ladder.len();
        Self::with_shape(TableKind::Ladder, features, ladder, n_states, 3)
    }

    fn with_shape(
        kind: TableKind,
        features: StateFeatureSet,
        actions: ActionSet,
        n_states: usize,
        n_actions: usize,
    ) -> Self {
        Self {
            kind,
            features,
            actions,
            n_states,
            n_actions,
            visited: vec![false; n_states],
            values: vec![0.0; n_states * n_actions],
        }
    }

    /// Table filled with `U(-scale, scale)` values.
    pub fn random(features: StateFeatureSet, actions: ActionSet, scale: f64, seed: u64) -> Self {
        let mut q = Self::zeros(features, actions);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in &mut q.values {
            *v = rng.random_range(-scale..=scale);
        }
        q
    }

    pub fn kind(&self) -> TableKind {
        self.kind
    }

    pub fn features(&self) -> StateFeatureSet {
        self.features
    }

    pub fn actions(&self) -> &ActionSet {
        &self.actions
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn set(&mut self, s: usize, a: usize, v: f64) {
        self.values[s * self.n_actions + a] = v;
        self.visited[s] = true;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn row_mut(&mut self, s: usize) -> &mut [f64] {
        self.visited[s] = true;
        &mut self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    /// Greedy action; ties go to the lowest index.
    pub fn argmax(&self, s: usize) -> Action {
        let row = self.row(s);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = a;
            }
        }
        Action(best)
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// A state the agent has never updated.
    pub fn is_unseen(&self, s: usize) -> bool {
        !self.visited[s]
    }

    pub fn mark_visited(&mut self, s: usize) {
        self.visited[s] = true;
    }

    pub fn visited_count(&self) -> usize {
        self.visited.iter().filter(|&&v| v).count()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Mean Q per action over all states.
    pub fn mean_per_action(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_actions];
        for row in self.values.chunks(self.n_actions) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        out.iter().map(|s| s / self.n_states as f64).collect()
    }

    /// Greedy action for every state.
    pub fn greedy_policy(&self) -> Vec<Action> {
        (0..self.n_states).map(|s| self.argmax(s)).collect()
    }

    /// Errors unless `other` has the same kind, features and actions.
    pub fn check_compatible(&self, features: StateFeatureSet, actions: &ActionSet) -> Result<(), QTableError> {
        if self.features != features {
            return Err(QTableError::Mismatch(format!("features {} vs {}", self.features, features)));
        }
        if &self.actions != actions {
            return Err(QTableError::Mismatch(format!(
                "actions {:?} vs {:?}",
                self.actions.sleep_times(),
                actions.sleep_times()
            )));
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let sleeps = self.actions.sleep_times();
        let mut out = Vec::with_capacity(16 + 8 * (sleeps.len() + self.values.len()) + self.n_states / 8 + 5);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(match self.kind {
            TableKind::Direct => 0,
            TableKind::Ladder => 1,
        });
        out.push(self.features.bits());
        out.push(self.n_actions as u8);
        out.push(sleeps.len() as u8);
        out.extend_from_slice(&(self.n_states as u32).to_le_bytes());
        for s in sleeps {
            out.extend_from_slice(&s.to_le_bytes());
        }
        let mut mask = vec![0u8; self.n_states.div_ceil(8)];
        for (i, _) in self.visited.iter().enumerate().filter(|(_, &v)| v) {
            mask[i / 8] |= 1 << (i % 8);
        }
        out.extend_from_slice(&mask);
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, QTableError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(QTableError::BadMagic);
        }
        if bytes.len() < 14 + 4 {
            return Err(QTableError::Length(format!("{} bytes", bytes.len())));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(QTableError::Version(version));
        }
        let kind = match bytes[6] {
            0 => TableKind::Direct,
            1 => TableKind::Ladder,
            k => return Err(QTableError::Header(format!("table kind {k}"))),
        };
        let features = StateFeatureSet::from_bits(bytes[7])
            .ok_or_else(|| QTableError::Header(format!("feature bits {:#x}", bytes[7])))?;
        let n_actions = bytes[8] as usize;
        let n_sleep = bytes[9] as usize;
        let n_states = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        let mask_len = n_states.div_ceil(8);
        let expected = 14 + 8 * n_sleep + mask_len + 8 * n_states * n_actions + 4;
        if bytes.len() != expected {
            return Err(QTableError::Length(format!("{} bytes, expected {expected}", bytes.len())));
        }
        let body = &bytes[..expected - 4];
        let crc = u32::from_le_bytes(bytes[expected - 4..].try_into().unwrap());
        if crc32fast::hash(body) != crc {
            return Err(QTableError::Checksum);
        }
        let f64_at = |off: usize| f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        let sleeps: Vec<f64> = (0..n_sleep).map(|i| f64_at(14 + 8 * i)).collect();
        let actions = ActionSet::new(sleeps).map_err(|e| QTableError::Header(e.to_string()))?;
        let (want_states, want_actions) = match kind {
            TableKind::Direct => (features.n_states(), actions.len()),
            TableKind::Ladder => (features.n_states() * actions.len(), 3),
        };
        if n_states != want_states || n_actions != want_actions {
            return Err(QTableError::Header(format!(
                "dimensions {n_states}x{n_actions} do not match features/actions ({want_states}x{want_actions})"
            )));
        }
        let mask_off = 14 + 8 * n_sleep;
        let visited = (0..n_states).map(|i| bytes[mask_off + i / 8] & (1 << (i % 8)) != 0).collect();
        let val_off = mask_off + mask_len;
        let values: Vec<f64> = (0..n_states * n_actions).map(|i| f64_at(val_off + 8 * i)).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(QTableError::Header("non-finite Q-value".into()));
        }
        Ok(Self { kind, features, actions, n_states, n_actions, visited, values })
    }

    pub fn save(&self, path: &Path) -> Result<(), QTableError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, QTableError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

pub fn save_qtable(q: &QTable, path: &Path) -> Result<(), QTableError> {
    q.save(path)
}

pub fn load_qtable(path: &Path) -> Result<QTable, QTableError> {
    QTable::load(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> QTable {
        let mut q = QTable::zeros(StateFeatureSet::default(), ActionSet::standard());
        for s in (0..q.n_states()).step_by(7) {
            for a in 0..4 {
                q.set(s, a, (s as f64).sin() * 100.0 + a as f64 / 3.0);
            }
        }
        q
    }

    #[test]
    fn default_table_size() {
        let bytes = sample().to_bytes();
        assert_eq!(bytes.len(), 7825);
        assert!(bytes.len() <= 25_600);
    }

    #[test]
    fn bytes_round_trip_exactly() {
        let q = sample();
        let back = QTable::from_bytes(&q.to_bytes()).unwrap();
        assert_eq!(back, q);
        assert!(q.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn ladder_round_trip() {
        let mut q = QTable::ladder(StateFeatureSet::SC, ActionSet::standard());
        assert_eq!((q.n_states(), q.n_actions()), (44, 3));
        q.set(43, 2, 1.5);
        assert_eq!(QTable::from_bytes(&q.to_bytes()).unwrap(), q);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let bytes = sample().to_bytes();
        assert!(matches!(QTable::from_bytes(&bytes[..bytes.len() - 1]), Err(QTableError::Length(_))));
        let mut flipped = bytes.clone();
        flipped[100] ^= 0x40;
        assert!(matches!(QTable::from_bytes(&flipped), Err(QTableError::Checksum)));
        let mut versioned = bytes.clone();
        versioned[4] = 9;
        assert!(matches!(QTable::from_bytes(&versioned), Err(QTableError::Version(9))));
        assert!(matches!(QTable::from_bytes(b"nope"), Err(QTableError::BadMagic)));
    }

    #[test]
    fn argmax_ties_low() {
        let mut q = QTable::zeros(StateFeatureSet::SC, ActionSet::standard());
        assert_eq!(q.argmax(0), Action(0));
        q.row_mut(0).copy_from_slice(&[0.0, 5.0, 5.0, 1.0]);
        assert_eq!(q.argmax(0), Action(1));
        assert_eq!(q.max(0), 5.0);
    }

    #[test]
    fn unseen_tracking() {
        let mut q = QTable::zeros(StateFeatureSet::SC, ActionSet::standard());
        assert!(q.is_unseen(3));
        q.set(3, 0, 0.0);
        assert!(!q.is_unseen(3));
        assert_eq!(q.visited_count(), 1);
    }

    #[test]
    fn compatibility_check() {
        let q = QTable::zeros(StateFeatureSet::SC, ActionSet::standard());
        assert!(q.check_compatible(StateFeatureSet::SC, &ActionSet::standard()).is_ok());
        assert!(q.check_compatible(StateFeatureSet::SC_WEEK, &ActionSet::standard()).is_err());
        assert!(q.check_compatible(StateFeatureSet::SC, &ActionSet::two()).is_err());
    }
}
