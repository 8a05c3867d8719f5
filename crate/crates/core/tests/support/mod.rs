//! Per-password reference solver: expands every class into individual
//! passwords and scores every budget with direct per-guess sums.

#![allow(dead_code)]

use pwsignal_core::LabeledClass;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub guesses: u64,
    pub lambda: f64,
    /// In currency units.
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub per_signal: Vec<Option<(f64, Budget)>>,
    pub success_rate: f64,
    pub utility: f64,
}

const UTIL_TOL: f64 = 1e-9;
const LAMBDA_TOL: f64 = 1e-12;

fn expand(classes: &[LabeledClass]) -> Vec<(f64, usize)> {
    classes
        .iter()
        .flat_map(|c| (0..c.count).map(move |_| (c.probability, c.level)))
        .collect()
}

/// Best budget against per-password probabilities `weights`.
pub fn best_budget(weights: &[f64], value: f64, cost: f64) -> Budget {
    let mut w = weights.to_vec();
    w.sort_by(|a, b| b.total_cmp(a));
    let ratio = value / cost;
    let mut lambdas = vec![0.0];
    let mut utils = vec![0.0];
    let (mut lambda, mut spent) = (0.0f64, 0.0f64);
    for q in &w {
        spent += 1.0 - lambda;
        lambda += q;
        lambdas.push(lambda);
        utils.push(ratio * lambda - spent);
    }
    let best = utils.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tied: Vec<usize> = (0..utils.len()).filter(|&b| utils[b] >= best - UTIL_TOL).collect();
    let top = tied.iter().map(|&b| lambdas[b]).fold(f64::NEG_INFINITY, f64::max);
    let b = *tied.iter().find(|&&b| lambdas[b] >= top - LAMBDA_TOL).unwrap();
    Budget { guesses: b as u64, lambda: lambdas[b], utility: utils[b] * cost }
}

pub fn no_signal(classes: &[LabeledClass], value: f64, cost: f64) -> Budget {
    let w: Vec<f64> = expand(classes).iter().map(|(p, _)| *p).collect();
    best_budget(&w, value, cost)
}

/// `matrix[level][signal]`.
pub fn with_signal(classes: &[LabeledClass], matrix: &[Vec<f64>], value: f64, cost: f64) -> Outcome {
    let pws = expand(classes);
    let d = matrix.len();
    let mut per_signal = Vec::with_capacity(d);
    let (mut success_rate, mut utility) = (0.0, 0.0);
    for y in 0..d {
        let joint: Vec<f64> = pws.iter().map(|(p, l)| p * matrix[*l][y]).collect();
        let mass: f64 = joint.iter().sum();
        if mass <= 0.0 {
            per_signal.push(None);
            continue;
        }
        let post: Vec<f64> = joint.iter().map(|j| j / mass).collect();
        let b = best_budget(&post, value, cost);
        success_rate += mass * b.lambda;
        utility += mass * b.utility;
        per_signal.push(Some((mass, b)));
    }
    Outcome { per_signal, success_rate, utility }
}

/// Random row-stochastic matrix; some rows are degenerate and some columns
/// may end up empty.
pub fn random_matrix<R: Rng>(rng: &mut R, d: usize) -> Vec<Vec<f64>> {
    (0..d)
        .map(|_| {
            if rng.gen_bool(0.2) {
                let mut row = vec![0.0; d];
                row[rng.gen_range(0..d)] = 1.0;
                return row;
            }
            let raw: Vec<f64> = (0..d).map(|_| rng.gen::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            let mut row: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let head: f64 = row[..d - 1].iter().sum();
            row[d - 1] = (1.0 - head).max(0.0);
            row
        })
        .collect()
}

/// Random small corpus as `(frequency, count)` pairs: at most `max_classes`
/// classes and `max_passwords` passwords in total.
pub fn random_pairs<R: Rng>(rng: &mut R, max_classes: usize, max_passwords: u64) -> Vec<(f64, u64)> {
    let n = rng.gen_range(1..=max_classes);
    let mut left = max_passwords;
    let mut pairs = Vec::with_capacity(n);
    for i in 0..n {
        let remaining = (n - i) as u64;
        let cap = (left - (remaining - 1)).min(max_passwords / n as u64).max(1);
        let count = rng.gen_range(1..=cap);
        left -= count;
        pairs.push((rng.gen_range(1..=60) as f64, count));
    }
    pairs
}
