//! Password frequency corpora in compact equivalence-class form.
//!
//! A corpus of `N` passwords is stored as a list of `(frequency, count)`
//! pairs: `count` distinct passwords were each observed `frequency` times.
//! Frequencies are reals so that noisy corpora extracted from a private
//! sketch flow through the same type.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write as _;

use crate::error::{domain, Error, Result};

/// Default frequency at or below which an empirical estimate is not trusted.
pub const DEFAULT_CONFIDENCE_CUTOFF: f64 = 1.0;

/// `count` distinct passwords sharing the same observed `frequency`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceClass {
    pub frequency: f64,
    pub count: u64,
}

impl EquivalenceClass {
    /// Total number of observations in the class, `frequency * count`.
    pub fn volume(&self) -> f64 {
        self.frequency * self.count as f64
    }
}

/// Equivalence classes sorted by strictly descending frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceClassList {
    classes: Vec<EquivalenceClass>,
    total: f64,
    // prefix[i] = sum of volumes of classes[..i]
    prefix: Vec<f64>,
}

impl EquivalenceClassList {
    /// Builds a class list from `(frequency, count)` pairs in any order.
    ///
    /// Pairs with exactly equal frequency are merged by summing counts.
    pub fn from_pairs<I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (f64, u64)>,
    {
        let mut raw: Vec<EquivalenceClass> = Vec::new();
        for (frequency, count) in pairs {
            if !frequency.is_finite() || frequency <= 0.0 {
                return Err(domain(format!("frequency must be positive, got {frequency}")));
            }
            if count == 0 {
                return Err(domain("class count must be at least 1"));
            }
            raw.push(EquivalenceClass { frequency, count });
        }
        if raw.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        raw.sort_by(|a, b| b.frequency.total_cmp(&a.frequency));

        let mut classes: Vec<EquivalenceClass> = Vec::with_capacity(raw.len());
        for c in raw {
            match classes.last_mut() {
                Some(last) if last.frequency == c.frequency => last.count += c.count,
                _ => classes.push(c),
            }
        }
        Ok(Self::from_sorted(classes))
    }

    fn from_sorted(classes: Vec<EquivalenceClass>) -> Self {
        let mut prefix = Vec::with_capacity(classes.len() + 1);
        let mut acc = 0.0;
        prefix.push(0.0);
        for c in &classes {
            acc += c.volume();
            prefix.push(acc);
        }
        Self { classes, total: acc, prefix }
    }

    /// Groups identical password strings and counts them.
    ///
    /// Empty strings are skipped.
    pub fn from_passwords<'a, I>(passwords: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: BTreeMap<&'a str, u64> = BTreeMap::new();
        for pw in passwords {
            if pw.is_empty() {
                continue;
            }
            *counts.entry(pw).or_insert(0) += 1;
        }
        let mut by_freq: BTreeMap<u64, u64> = BTreeMap::new();
        for f in counts.into_values() {
            *by_freq.entry(f).or_insert(0) += 1;
        }
        Self::from_pairs(by_freq.into_iter().map(|(f, c)| (f as f64, c)))
    }

    /// Parses the `<frequency> <count>` text format. Blank lines and lines
    /// starting with `#` are ignored.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split_whitespace();
            let (Some(f), Some(c), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(parse_err(lineno, "expected \"<frequency> <count>\""));
            };
            let frequency: f64 = f
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad frequency {f:?}")))?;
            let count = parse_count(c).ok_or_else(|| parse_err(lineno, format!("bad count {c:?}")))?;
            if !frequency.is_finite() || frequency <= 0.0 || count == 0 {
                return Err(domain(format!(
                    "line {lineno}: frequency and count must be positive"
                )));
            }
            pairs.push((frequency, count));
        }
        Self::from_pairs(pairs)
    }

    /// Renders the corpus in the text format read by [`parse`](Self::parse).
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.classes {
            let _ = writeln!(out, "{} {}", c.frequency, c.count);
        }
        out
    }

    pub fn classes(&self) -> &[EquivalenceClass] {
        &self.classes
    }

    /// Number of equivalence classes `n'`.
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// `N`, the sum of `frequency * count`.
    pub fn total(&self) -> f64 {
        self.total
    }

    /// Number of distinct passwords, the sum of class counts.
    pub fn distinct_passwords(&self) -> u64 {
        self.classes.iter().map(|c| c.count).sum()
    }

    /// Probability of a single password in class `i`, `f_i / N`.
    pub fn probability(&self, i: usize) -> f64 {
        self.classes[i].frequency / self.total
    }

    /// Probability mass of class `i`, `f_i * c_i / N`.
    pub fn class_mass(&self, i: usize) -> f64 {
        self.classes[i].volume() / self.total
    }

    /// Mass of the `class_prefix` most frequent classes.
    pub fn cumulative_mass(&self, class_prefix: usize) -> Result<f64> {
        if class_prefix > self.classes.len() {
            return Err(domain(format!(
                "class prefix {class_prefix} exceeds {} classes",
                self.classes.len()
            )));
        }
        if class_prefix == self.classes.len() {
            return Ok(1.0);
        }
        Ok(self.prefix[class_prefix] / self.total)
    }
}

fn parse_count(s: &str) -> Option<u64> {
    if let Ok(c) = s.parse::<u64>() {
        return Some(c);
    }
    // "10.0" style counts from other tools
    let f: f64 = s.parse().ok()?;
    (f.is_finite() && f >= 0.0 && libm::trunc(f) == f && f < 1.8e19).then_some(f as u64)
}

fn parse_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse { line, reason: reason.into() }
}

/// A class list together with the frequency below which its estimates are
/// flagged as low-confidence. The flag is informational only.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    pub source: EquivalenceClassList,
    pub confidence_cutoff: f64,
}

impl EmpiricalDistribution {
    pub fn new(source: EquivalenceClassList) -> Self {
        Self { source, confidence_cutoff: DEFAULT_CONFIDENCE_CUTOFF }
    }

    pub fn probability(&self, i: usize) -> f64 {
        self.source.probability(i)
    }

    pub fn is_low_confidence(&self, i: usize) -> bool {
        self.source.classes()[i].frequency <= self.confidence_cutoff
    }
}
