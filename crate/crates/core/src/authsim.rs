//! Simulated authentication server that stores a strength signal next to
//! each salted hash.
//!
//! The signal is written once, either at registration or on the first
//! successful login after the frequency oracle has been trained, and is
//! never read while verifying credentials.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};
use sha2::{Digest, Sha256};

use crate::error::{domain, Error, Result};
use crate::game::SignalMatrix;
use crate::strength::{FrequencyOracle, StrengthThresholds};

pub const DEFAULT_SALT_BYTES: usize = 16;
pub const DEFAULT_HASH_ITERATIONS: u32 = 1000;

/// Slow hash of `(salt, password)`.
pub trait PasswordHasher {
    fn digest(&self, salt: &[u8], password: &[u8]) -> Vec<u8>;
}

/// SHA-256 iterated `iterations` times over `salt || password`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IteratedSha256 {
    pub iterations: u32,
}

impl Default for IteratedSha256 {
    fn default() -> Self {
        Self { iterations: DEFAULT_HASH_ITERATIONS }
    }
}

impl PasswordHasher for IteratedSha256 {
    fn digest(&self, salt: &[u8], password: &[u8]) -> Vec<u8> {
        let mut h = Sha256::new();
        h.update(salt);
        h.update(password);
        let mut out = h.finalize();
        for _ in 1..self.iterations.max(1) {
            let mut h = Sha256::new();
            h.update(out);
            h.update(salt);
            out = h.finalize();
        }
        out.to_vec()
    }
}

/// Categorical inverse-CDF draw: the first `j` whose cumulative probability
/// reaches `r`, for `r` in `(0, 1]`.
pub fn sample_signal(row: &[f64], r: f64) -> Result<usize> {
    if row.is_empty() || row.iter().any(|p| !(*p >= 0.0)) {
        return Err(domain("signal row must be non-empty with non-negative entries"));
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(domain(format!("signal row sums to {sum}, not 1")));
    }
    if !(r > 0.0 && r <= 1.0) {
        return Err(domain(format!("draw {r} outside (0, 1]")));
    }
    let mut acc = 0.0;
    for (j, p) in row.iter().enumerate() {
        acc += p;
        if *p > 0.0 && r <= acc {
            return Ok(j);
        }
    }
    // round-off left r just above the final cumulative sum
    Ok(row.iter().rposition(|p| *p > 0.0).expect("row sums to 1"))
}

fn draw_unit_interval<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    // (0, 1]
    1.0 - rng.gen::<f64>()
}

/// Assigns signals: strength from the oracle and thresholds, then a draw from
/// the matching row of the matrix.
pub struct Signaler<'a> {
    pub thresholds: &'a StrengthThresholds,
    pub matrix: &'a SignalMatrix,
    pub oracle: &'a dyn FrequencyOracle,
}

impl<'a> Signaler<'a> {
    pub fn new(
        thresholds: &'a StrengthThresholds,
        matrix: &'a SignalMatrix,
        oracle: &'a dyn FrequencyOracle,
    ) -> Result<Self> {
        if thresholds.levels() != matrix.levels() {
            return Err(domain(format!(
                "thresholds have {} levels but the matrix has {}",
                thresholds.levels(),
                matrix.levels()
            )));
        }
        Ok(Self { thresholds, matrix, oracle })
    }

    pub fn strength(&self, password: &str) -> usize {
        self.thresholds.get_strength(self.oracle.frequency(password))
    }

    pub fn signal<R: RngCore + ?Sized>(&self, password: &str, rng: &mut R) -> usize {
        let row = self.matrix.row(self.strength(password));
        sample_signal(row, draw_unit_interval(rng)).expect("matrix rows are validated")
    }
}

/// `(user, salt, signal, hash)`. `signal` is `None` until assigned.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccountRecord {
    pub user: String,
    pub salt: Vec<u8>,
    pub signal: Option<usize>,
    pub hash: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoginOutcome {
    /// Credentials matched. `signal_assigned` is set when this login wrote a
    /// previously missing signal.
    Success { signal_assigned: bool },
    Fail,
}

impl LoginOutcome {
    pub fn is_success(&self) -> bool {
        matches!(self, Self::Success { .. })
    }
}

fn digests_equal(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

/// In-memory record store keyed by user name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccountStore {
    records: BTreeMap<String, AccountRecord>,
    salt_bytes: usize,
}

impl AccountStore {
    pub fn new() -> Self {
        Self::with_salt_bytes(DEFAULT_SALT_BYTES)
    }

    pub fn with_salt_bytes(salt_bytes: usize) -> Self {
        Self { records: BTreeMap::new(), salt_bytes }
    }

    pub fn get(&self, user: &str) -> Option<&AccountRecord> {
        self.records.get(user)
    }

    pub fn records(&self) -> impl Iterator<Item = &AccountRecord> {
        self.records.values()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Inserts a persisted record as is.
    pub fn restore(&mut self, record: AccountRecord) {
        self.records.insert(record.user.clone(), record);
    }

    /// Creates an account. With a signaler the signal is drawn immediately;
    /// without one it stays unset until a later successful login.
    pub fn register<R: RngCore + ?Sized>(
        &mut self,
        user: &str,
        password: &str,
        signaler: Option<&Signaler<'_>>,
        hasher: &dyn PasswordHasher,
        rng: &mut R,
    ) -> Result<&AccountRecord> {
        if self.records.contains_key(user) {
            return Err(Error::UserExists(String::from(user)));
        }
        let mut salt = vec![0u8; self.salt_bytes.max(1)];
        rng.fill_bytes(&mut salt);
        let hash = hasher.digest(&salt, password.as_bytes());
        let signal = signaler.map(|s| s.signal(password, rng));
        let record = AccountRecord { user: String::from(user), salt, signal, hash };
        Ok(self.records.entry(String::from(user)).or_insert(record))
    }

    /// Verifies credentials. On success, assigns the signal if it is still
    /// unset and a signaler is available.
    pub fn login<R: RngCore + ?Sized>(
        &mut self,
        user: &str,
        attempt: &str,
        signaler: Option<&Signaler<'_>>,
        hasher: &dyn PasswordHasher,
        rng: &mut R,
    ) -> LoginOutcome {
        let Some(record) = self.records.get_mut(user) else {
            return LoginOutcome::Fail;
        };
        let candidate = hasher.digest(&record.salt, attempt.as_bytes());
        if !digests_equal(&candidate, &record.hash) {
            return LoginOutcome::Fail;
        }
        let mut signal_assigned = false;
        if record.signal.is_none() {
            if let Some(s) = signaler {
                record.signal = Some(s.signal(attempt, rng));
                signal_assigned = true;
            }
        }
        LoginOutcome::Success { signal_assigned }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strength::ExactOracle;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fast() -> IteratedSha256 {
        IteratedSha256 { iterations: 2 }
    }

    #[test]
    fn inverse_cdf_examples() {
        assert_eq!(sample_signal(&[0.5, 0.5], 0.4).unwrap(), 0);
        assert_eq!(sample_signal(&[0.5, 0.5], 0.9).unwrap(), 1);
        assert_eq!(sample_signal(&[0.5, 0.5], 0.5).unwrap(), 0);
        for r in [1e-12, 0.3, 1.0] {
            assert_eq!(sample_signal(&[0.0, 1.0], r).unwrap(), 1);
        }
        assert_eq!(sample_signal(&[0.3, 0.7, 0.0], 1.0).unwrap(), 1);
    }

    #[test]
    fn inverse_cdf_errors() {
        assert!(sample_signal(&[0.5, 0.4], 0.2).is_err());
        assert!(sample_signal(&[], 0.2).is_err());
        assert!(sample_signal(&[0.5, 0.5], 0.0).is_err());
        assert!(sample_signal(&[1.5, -0.5], 0.2).is_err());
    }

    #[test]
    fn hash_round_trip() {
        let h = fast();
        assert_eq!(h.digest(b"s", b"pw"), h.digest(b"s", b"pw"));
        assert_ne!(h.digest(b"s", b"pw"), h.digest(b"t", b"pw"));
        assert_eq!(h.digest(b"s", b"pw").len(), 32);
    }

    #[test]
    fn register_and_login() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = AccountStore::new();
        let oracle: ExactOracle = ["123456", "123456", "hunter2"].into_iter().collect();
        let t = StrengthThresholds::from_thresholds(vec![Some(2.0), Some(1.0)]).unwrap();
        let m = SignalMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let sig = Signaler::new(&t, &m, &oracle).unwrap();

        let rec = store.register("alice", "123456", Some(&sig), &fast(), &mut rng).unwrap();
        assert_eq!(rec.signal, Some(0));
        assert_eq!(rec.salt.len(), DEFAULT_SALT_BYTES);
        store.register("bob", "hunter2", Some(&sig), &fast(), &mut rng).unwrap();
        assert_eq!(store.get("bob").unwrap().signal, Some(1));
        assert_ne!(store.get("alice").unwrap().salt, store.get("bob").unwrap().salt);

        assert_eq!(
            store.register("alice", "x", None, &fast(), &mut rng).unwrap_err(),
            Error::UserExists("alice".into())
        );
        assert!(store.login("alice", "123456", None, &fast(), &mut rng).is_success());
        assert_eq!(store.login("alice", "12345", None, &fast(), &mut rng), LoginOutcome::Fail);
        assert_eq!(store.login("carol", "123456", None, &fast(), &mut rng), LoginOutcome::Fail);
    }

    #[test]
    fn delayed_signal_set_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = AccountStore::new();
        store.register("u", "pw", None, &fast(), &mut rng).unwrap();
        assert_eq!(store.get("u").unwrap().signal, None);

        let oracle = ExactOracle::new();
        let t = StrengthThresholds::from_thresholds(vec![Some(5.0), Some(1.0)]).unwrap();
        let to_one = SignalMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        let to_zero = SignalMatrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let first = Signaler::new(&t, &to_one, &oracle).unwrap();
        let second = Signaler::new(&t, &to_zero, &oracle).unwrap();

        assert_eq!(store.login("u", "bad", Some(&first), &fast(), &mut rng), LoginOutcome::Fail);
        assert_eq!(store.get("u").unwrap().signal, None);
        assert_eq!(
            store.login("u", "pw", Some(&first), &fast(), &mut rng),
            LoginOutcome::Success { signal_assigned: true }
        );
        assert_eq!(store.get("u").unwrap().signal, Some(1));
        assert_eq!(
            store.login("u", "pw", Some(&second), &fast(), &mut rng),
            LoginOutcome::Success { signal_assigned: false }
        );
        assert_eq!(store.get("u").unwrap().signal, Some(1));
    }

    #[test]
    fn verification_ignores_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = AccountStore::new();
        let rec = store.register("u", "pw", None, &fast(), &mut rng).unwrap().clone();
        let mut other = AccountStore::new();
        other.restore(AccountRecord { signal: Some(3), ..rec });
        for attempt in ["pw", "pW", ""] {
            assert_eq!(
                store.login("u", attempt, None, &fast(), &mut rng).is_success(),
                other.login("u", attempt, None, &fast(), &mut rng).is_success()
            );
        }
    }

    #[test]
    fn mismatched_signaler_rejected() {
        let o = ExactOracle::new();
        let t = StrengthThresholds::from_thresholds(vec![Some(5.0), Some(1.0)]).unwrap();
        let m = SignalMatrix::identity(3);
        assert!(Signaler::new(&t, &m, &o).is_err());
    }
}
