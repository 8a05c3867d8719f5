//! Frequency-strength levels.
//!
//! Level 0 is the weakest (most popular) level and `d - 1` the strongest.
//! Thresholds are derived by filling `d` buckets of probability mass from
//! the rarest equivalence class upwards, and queries map an (estimated)
//! frequency back to a level.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::corpus::EquivalenceClassList;
use crate::dpsketch::DpCountSketch;
use crate::error::{domain, Result};

// slack for "volume > capacity" so that exactly-full buckets stay open
const OVERFLOW_SLACK: f64 = 1e-12;

/// Maps a password to an (estimated) frequency.
pub trait FrequencyOracle {
    fn frequency(&self, password: &str) -> f64;
}

impl FrequencyOracle for DpCountSketch {
    fn frequency(&self, password: &str) -> f64 {
        self.estimate(password)
    }
}

/// Exact frequencies for a known set of passwords; unknown passwords get 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExactOracle {
    counts: BTreeMap<String, f64>,
}

impl ExactOracle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn observe(&mut self, password: &str) {
        *self.counts.entry(String::from(password)).or_insert(0.0) += 1.0;
    }
}

impl<'a> FromIterator<&'a str> for ExactOracle {
    fn from_iter<I: IntoIterator<Item = &'a str>>(iter: I) -> Self {
        let mut o = Self::new();
        for pw in iter {
            o.observe(pw);
        }
        o
    }
}

impl FrequencyOracle for ExactOracle {
    fn frequency(&self, password: &str) -> f64 {
        self.counts.get(password).copied().unwrap_or(0.0)
    }
}

/// Per-level frequency cutoffs `t_0 >= t_1 >= ... >= t_{d-1}`.
///
/// `thresholds[i]` is the largest training frequency labeled `i`, or `None`
/// when no class received that label.
#[derive(Debug, Clone, PartialEq)]
pub struct StrengthThresholds {
    levels: usize,
    thresholds: Vec<Option<f64>>,
    class_labels: Vec<usize>,
}

impl StrengthThresholds {
    /// Builds thresholds directly, e.g. from a persisted file. Levels are
    /// `0..thresholds.len()`.
    pub fn from_thresholds(thresholds: Vec<Option<f64>>) -> Result<Self> {
        let levels = thresholds.len();
        if levels < 2 {
            return Err(domain("need at least 2 strength levels"));
        }
        let mut prev = f64::INFINITY;
        for t in thresholds.iter().flatten() {
            if !(*t > 0.0) || !t.is_finite() {
                return Err(domain(format!("threshold must be positive, got {t}")));
            }
            if *t > prev {
                return Err(domain("thresholds must be non-increasing in level"));
            }
            prev = *t;
        }
        if thresholds.iter().all(Option::is_none) {
            return Err(domain("at least one level must carry a threshold"));
        }
        Ok(Self { levels, thresholds, class_labels: Vec::new() })
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn thresholds(&self) -> &[Option<f64>] {
        &self.thresholds
    }

    pub fn threshold(&self, level: usize) -> Option<f64> {
        self.thresholds[level]
    }

    /// Labels assigned to the training corpus classes (empty when the
    /// thresholds were constructed directly).
    pub fn class_labels(&self) -> &[usize] {
        &self.class_labels
    }

    /// Strength level of a password with the given (estimated) frequency.
    ///
    /// Scans from the strongest level down and returns the first level whose
    /// threshold is at least `frequency`; anything above every threshold is
    /// as weak as level 0.
    pub fn get_strength(&self, frequency: f64) -> usize {
        for level in (0..self.levels).rev() {
            if let Some(t) = self.thresholds[level] {
                if frequency <= t {
                    return level;
                }
            }
        }
        0
    }

    /// Level of every class of `ecl` according to [`get_strength`](Self::get_strength).
    pub fn label_corpus(&self, ecl: &EquivalenceClassList) -> Vec<usize> {
        ecl.classes().iter().map(|c| self.get_strength(c.frequency)).collect()
    }

    /// Probability mass of `ecl` per level.
    pub fn level_masses(&self, ecl: &EquivalenceClassList) -> Vec<f64> {
        let mut out = vec![0.0; self.levels];
        for (i, level) in self.label_corpus(ecl).into_iter().enumerate() {
            out[level] += ecl.class_mass(i);
        }
        out
    }
}

/// Backward bucket filling over class masses (rarest class last in `masses`).
///
/// Returns one label per entry of `masses`. Each bucket closes on its first
/// overflow, keeping the overflowing class.
fn fill_buckets(masses: &[f64], levels: usize) -> Vec<usize> {
    let mut labels = vec![0; masses.len()];
    let mut volume = 0.0;
    let mut labeled = 0.0;
    let mut buckets = levels;
    for i in (0..masses.len()).rev() {
        volume += masses[i];
        let capacity = (1.0 - labeled) / buckets as f64;
        labels[i] = buckets - 1;
        if volume > capacity + OVERFLOW_SLACK && buckets > 1 {
            labeled += volume;
            volume = 0.0;
            buckets -= 1;
        }
    }
    labels
}

fn assemble(ecl: &EquivalenceClassList, levels: usize, labels: Vec<usize>) -> StrengthThresholds {
    let mut thresholds = vec![None; levels];
    for (c, &l) in ecl.classes().iter().zip(&labels) {
        // classes are in descending frequency, so the first hit is the max
        if thresholds[l].is_none() {
            thresholds[l] = Some(c.frequency);
        }
    }
    StrengthThresholds { levels, thresholds, class_labels: labels }
}

/// Partitions `ecl` into `levels` strength levels of roughly equal mass.
pub fn label_strength(ecl: &EquivalenceClassList, levels: usize) -> Result<StrengthThresholds> {
    if levels < 2 {
        return Err(domain("need at least 2 strength levels"));
    }
    let masses: Vec<f64> = (0..ecl.len()).map(|i| ecl.class_mass(i)).collect();
    Ok(assemble(ecl, levels, fill_buckets(&masses, levels)))
}

/// Like [`label_strength`] but balances only the mass of the `top_k` most
/// popular passwords. Classes lying entirely below rank `top_k` get the
/// strongest level.
pub fn label_strength_top_k(
    ecl: &EquivalenceClassList,
    levels: usize,
    top_k: u64,
) -> Result<StrengthThresholds> {
    if levels < 2 {
        return Err(domain("need at least 2 strength levels"));
    }
    if top_k < levels as u64 {
        return Err(domain(format!("top-k cutoff {top_k} is below the level count {levels}")));
    }
    if top_k > ecl.distinct_passwords() {
        return Err(domain(format!(
            "top-k cutoff {top_k} exceeds the {} distinct passwords in the corpus",
            ecl.distinct_passwords()
        )));
    }
    let mut rank = 0u64;
    let mut head = 0;
    for c in ecl.classes() {
        if rank >= top_k {
            break;
        }
        rank += c.count;
        head += 1;
    }
    let head_mass: f64 = (0..head).map(|i| ecl.class_mass(i)).sum();
    let masses: Vec<f64> = (0..head).map(|i| ecl.class_mass(i) / head_mass).collect();
    let mut labels = fill_buckets(&masses, levels);
    labels.resize(ecl.len(), levels - 1);
    Ok(assemble(ecl, levels, labels))
}
