//! BITEOPT-style derivative-free minimisation on `[0, 1]^D`, and the search
//! for a signal matrix that minimises the attacker's success rate.
//!
//! The optimiser keeps a cost-sorted population. Each iteration copies one of
//! the best members, walks it through a small randomised automaton of
//! mutation stages, evaluates it once and lets it replace the worst member if
//! it is cheaper.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Result};
use crate::game::{AttackerEconomy, GameInstance, SignalMatrix};

/// Slack allowed when checking that a searched matrix is no worse than the
/// no-signal baseline.
pub const BASELINE_SLACK: f64 = 1e-9;

/// Population-size floor: stage 1 needs the best, a worst and three random
/// members.
pub const MIN_POPULATION: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub population_size: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Init stage: probability of taking the intermediate path instead of
    /// stage 1.
    pub q1: f64,
    /// Intermediate stage: probability of jumping to stage 4 instead of
    /// stage 2.
    pub q2: f64,
    /// Probability of stage 3 after stage 2; also its step scale.
    pub q3: f64,
    /// Probability of the short-cut stage after stages 1-4.
    pub q4: f64,
    /// Probability that the bitmask inversion hits every coordinate.
    pub allp_prob: f64,
    pub mant_size: u32,
    pub mant_size_sh: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            population_size: 20,
            iterations: 5000,
            seed: 0,
            q1: 0.5,
            q2: 0.5,
            q3: 0.5,
            q4: 0.5,
            allp_prob: 0.5,
            mant_size: 54,
            mant_size_sh: 16.0,
        }
    }
}

impl OptimizerConfig {
    pub fn with_iterations(mut self, iterations: usize) -> Self {
        self.iterations = iterations;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size < MIN_POPULATION {
            return Err(domain(format!(
                "population size must be at least {MIN_POPULATION}, got {}",
                self.population_size
            )));
        }
        if self.iterations == 0 {
            return Err(domain("need at least one iteration"));
        }
        for (name, p) in [
            ("q1", self.q1),
            ("q2", self.q2),
            ("q3", self.q3),
            ("q4", self.q4),
            ("allp_prob", self.allp_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(domain(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.mant_size == 0 || self.mant_size > 62 {
            return Err(domain("mant_size must lie in 1..=62"));
        }
        if !(self.mant_size_sh > 0.0) {
            return Err(domain("mant_size_sh must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub best_vector: Vec<f64>,
    pub best_cost: f64,
    pub evaluations: usize,
    /// Candidates dropped because the objective returned a non-finite value.
    pub rejected_non_finite: usize,
}

/// Progress snapshot passed to the callback every 100 iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub iteration: usize,
    pub best_cost: f64,
}

pub const PROGRESS_INTERVAL: usize = 100;

#[derive(Debug, Clone)]
struct Member {
    x: Vec<f64>,
    cost: f64,
}

struct Population {
    // ascending by cost
    members: Vec<Member>,
    best_x: Vec<f64>,
    best_cost: f64,
}

impl Population {
    fn insert_sorted(members: &mut Vec<Member>, m: Member) {
        let pos = members.partition_point(|o| o.cost <= m.cost);
        members.insert(pos, m);
    }

    fn worst_cost(&self) -> f64 {
        self.members.last().map_or(f64::INFINITY, |m| m.cost)
    }

    fn replace_worst(&mut self, m: Member) {
        self.members.pop();
        if m.cost < self.best_cost {
            self.best_cost = m.cost;
            self.best_x.clone_from(&m.x);
        }
        Self::insert_sorted(&mut self.members, m);
    }

    fn centroid(&self) -> Vec<f64> {
        let dim = self.members[0].x.len();
        let mut c = vec![0.0; dim];
        for m in &self.members {
            for (ci, xi) in c.iter_mut().zip(&m.x) {
                *ci += xi;
            }
        }
        let n = self.members.len() as f64;
        c.iter_mut().for_each(|ci| *ci /= n);
        c
    }
}

fn clamp_unit(x: &mut [f64]) {
    for v in x {
        *v = if v.is_nan() { 0.5 } else { v.clamp(0.0, 1.0) };
    }
}

fn sanitize(cost: f64, rejected: &mut usize) -> f64 {
    if cost.is_finite() {
        cost
    } else {
        *rejected += 1;
        f64::INFINITY
    }
}

/// Minimises `objective` over `[0, 1]^dim`.
pub fn minimize<F>(objective: F, dim: usize, config: &OptimizerConfig) -> Result<OptimizeResult>
where
    F: FnMut(&[f64]) -> f64,
{
    minimize_seeded(objective, dim, config, &[], None)
}

/// Like [`minimize`], additionally placing `seeds` in the initial population
/// and reporting progress every [`PROGRESS_INTERVAL`] iterations.
pub fn minimize_seeded<F>(
    mut objective: F,
    dim: usize,
    config: &OptimizerConfig,
    seeds: &[Vec<f64>],
    mut progress: Option<&mut dyn FnMut(Progress)>,
) -> Result<OptimizeResult>
where
    F: FnMut(&[f64]) -> f64,
{
    config.validate()?;
    if dim == 0 {
        return Err(domain("dimension must be at least 1"));
    }
    if seeds.iter().any(|s| s.len() != dim) {
        return Err(domain("seed vector length does not match the dimension"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut evaluations = 0;
    let mut rejected = 0;

    let size = config.population_size.max(seeds.len());
    let mut members = Vec::with_capacity(size);
    for i in 0..size {
        let mut x = match seeds.get(i) {
            Some(s) => s.clone(),
            None => (0..dim).map(|_| rng.gen::<f64>()).collect(),
        };
        clamp_unit(&mut x);
        let cost = sanitize(objective(&x), &mut rejected);
        evaluations += 1;
        Population::insert_sorted(&mut members, Member { x, cost });
    }
    let mut pop = Population {
        best_x: members[0].x.clone(),
        best_cost: members[0].cost,
        members,
    };

    let mantissa = (1u64 << config.mant_size) as f64;
    let full_mask = (1u64 << config.mant_size) - 1;
    let n = pop.members.len();

    for iter in 0..config.iterations {
        // init: one of the 4 best
        let mut x = pop.members[rng.gen_range(0..n.min(4))].x.clone();

        let go_shortcut = |rng: &mut ChaCha8Rng| rng.gen::<f64>() < config.q4;
        let shortcut;
        if rng.gen::<f64>() >= config.q1 {
            // stage 1: step in the right direction
            let worst = &pop.members[n - 1 - rng.gen_range(0..n.min(3))].x;
            let [r1, r2, r3] = distinct3(&mut rng, n);
            let (a, b, c) = (&pop.members[r1].x, &pop.members[r2].x, &pop.members[r3].x);
            for i in 0..dim {
                x[i] -= (worst[i] - a[i] - (b[i] - c[i])) * 0.5;
            }
            clamp_unit(&mut x);
            shortcut = go_shortcut(&mut rng);
        } else if rng.gen::<f64>() < config.q2 {
            // stage 4: centroid move
            let cent = pop.centroid();
            for i in 0..dim {
                let sign = if rng.gen::<bool>() { -1.0 } else { 1.0 };
                x[i] += sign * (cent[i] - x[i]);
            }
            clamp_unit(&mut x);
            shortcut = go_shortcut(&mut rng);
        } else {
            // stage 2: bitmask inversion, averaged over two masks
            let all = rng.gen::<f64>() < config.allp_prob;
            let single = rng.gen_range(0..dim);
            for i in 0..dim {
                if !all && i != single {
                    continue;
                }
                let bits = (x[i] * mantissa) as u64 & full_mask;
                let mut acc = 0.0;
                for _ in 0..2 {
                    let r: f64 = rng.gen();
                    let shift = libm::floor(r * r * r * r * config.mant_size_sh) as u32;
                    let mask = full_mask.checked_shr(shift).unwrap_or(0);
                    acc += (bits ^ mask) as f64 / mantissa;
                }
                x[i] = acc * 0.5;
            }
            clamp_unit(&mut x);
            if rng.gen::<f64>() < config.q3 {
                // stage 3: random move around, twice
                for _ in 0..2 {
                    let other = &pop.members[rng.gen_range(0..n)].x;
                    for i in 0..dim {
                        let r = rng.gen_range(-1.0..=1.0);
                        x[i] -= r * config.q3 * (x[i] - other[i]);
                    }
                    clamp_unit(&mut x);
                }
            }
            shortcut = go_shortcut(&mut rng);
        }
        if shortcut {
            // stage 5: short-cut
            let z = x[rng.gen_range(0..dim)];
            x.iter_mut().for_each(|v| *v = z);
        }

        // decision
        let cost = objective(&x);
        evaluations += 1;
        if !cost.is_finite() {
            rejected += 1;
        } else if cost < pop.worst_cost() {
            pop.replace_worst(Member { x, cost });
        }

        if let Some(cb) = progress.as_mut() {
            if (iter + 1) % PROGRESS_INTERVAL == 0 {
                cb(Progress { iteration: iter + 1, best_cost: pop.best_cost });
            }
        }
    }

    Ok(OptimizeResult {
        best_vector: pop.best_x,
        best_cost: pop.best_cost,
        evaluations,
        rejected_non_finite: rejected,
    })
}

fn distinct3<R: Rng>(rng: &mut R, n: usize) -> [usize; 3] {
    let a = rng.gen_range(0..n);
    let mut b = rng.gen_range(0..n - 1);
    if b >= a {
        b += 1;
    }
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let mut c = rng.gen_range(0..n - 2);
    if c >= lo {
        c += 1;
    }
    if c >= hi {
        c += 1;
    }
    [a, b, c]
}

/// Maps `d * (d - 1)` free coordinates onto a row-stochastic `d x d` matrix.
///
/// Row `i` takes its first `d - 1` entries from `raw`, rescaled to sum to 1
/// if they exceed it; the last entry absorbs the remainder.
pub fn simplex_repair(raw: &[f64], levels: usize) -> Result<SignalMatrix> {
    if levels == 0 || raw.len() != levels * (levels - 1) {
        return Err(domain(format!(
            "expected {} raw coordinates for {levels} levels, got {}",
            levels * levels.saturating_sub(1),
            raw.len()
        )));
    }
    let free = levels - 1;
    let mut entries = Vec::with_capacity(levels * levels);
    for i in 0..levels {
        let row = &raw[i * free..(i + 1) * free];
        let row_clamped = row.iter().map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) });
        let sum: f64 = row_clamped.clone().sum();
        let scale = if sum > 1.0 { 1.0 / sum } else { 1.0 };
        let start = entries.len();
        entries.extend(row_clamped.map(|v| v * scale));
        let used: f64 = entries[start..].iter().sum();
        entries.push((1.0 - used).max(0.0));
    }
    SignalMatrix::from_entries(levels, entries)
}

/// Free coordinates of `s`, the inverse of [`simplex_repair`].
pub fn matrix_to_raw(s: &SignalMatrix) -> Vec<f64> {
    let d = s.levels();
    (0..d).flat_map(|i| s.row(i)[..d - 1].iter().copied()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalSearch {
    pub matrix: SignalMatrix,
    pub success_rate: f64,
    pub baseline_success: f64,
    pub evaluations: usize,
}

/// Searches for the signal matrix minimising the attacker's success rate on
/// `instance`. The uninformative and identity matrices seed the population,
/// so the result is never worse than not signaling.
pub fn gen_sig_mat(
    instance: &GameInstance,
    economy: AttackerEconomy,
    config: &OptimizerConfig,
) -> Result<SignalSearch> {
    gen_sig_mat_with_progress(instance, economy, config, None)
}

pub fn gen_sig_mat_with_progress(
    instance: &GameInstance,
    economy: AttackerEconomy,
    config: &OptimizerConfig,
    progress: Option<&mut dyn FnMut(Progress)>,
) -> Result<SignalSearch> {
    let d = instance.levels();
    if d < 2 {
        return Err(domain("signaling needs at least 2 strength levels"));
    }
    let baseline = instance.best_response_no_signal(economy).lambda;
    let objective = |raw: &[f64]| match simplex_repair(raw, d) {
        Ok(s) => instance
            .evaluate_signaling(&s, economy)
            .map_or(f64::NAN, |o| o.success_rate),
        Err(_) => f64::NAN,
    };
    let seeds = [
        matrix_to_raw(&SignalMatrix::uninformative(d)),
        matrix_to_raw(&SignalMatrix::identity(d)),
    ];
    let result = minimize_seeded(objective, d * (d - 1), config, &seeds, progress)?;
    let mut matrix = simplex_repair(&result.best_vector, d)?;
    let mut success = instance.evaluate_signaling(&matrix, economy)?.success_rate;
    if success > baseline + BASELINE_SLACK {
        matrix = SignalMatrix::uninformative(d);
        success = instance.evaluate_signaling(&matrix, economy)?.success_rate;
    }
    Ok(SignalSearch {
        matrix,
        success_rate: success,
        baseline_success: baseline,
        evaluations: result.evaluations,
    })
}
