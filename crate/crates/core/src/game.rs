//! Rational offline attacker against salted hashes, with and without signals.
//!
//! The attacker guesses passwords in descending (posterior) probability and
//! stops after a budget `B`. Its expected utility is
//! `v * lambda(B) - k * sum_{i=1..B} (1 - lambda(i - 1))`. Passwords with the
//! same prior and the same strength level are interchangeable, so optimal
//! budgets only need to be searched on group boundaries.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::corpus::EquivalenceClassList;
use crate::error::{domain, Error, Result};
use crate::strength::StrengthThresholds;

/// Absolute tolerance, in units of the guess cost, for utility ties.
pub const UTILITY_TIE_TOLERANCE: f64 = 1e-9;
const LAMBDA_TIE_TOLERANCE: f64 = 1e-12;
const ROW_SUM_TOLERANCE: f64 = 1e-9;

/// Value `v` of a cracked password and cost `k` of one guess.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackerEconomy {
    pub value: f64,
    pub cost: f64,
}

impl AttackerEconomy {
    pub fn new(value: f64, cost: f64) -> Result<Self> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(domain(format!("password value must be non-negative, got {value}")));
        }
        if !(cost > 0.0) || !cost.is_finite() {
            return Err(domain(format!("guess cost must be positive, got {cost}")));
        }
        Ok(Self { value, cost })
    }

    /// Economy with unit guess cost and value `ratio`.
    pub fn from_ratio(ratio: f64) -> Result<Self> {
        Self::new(ratio, 1.0)
    }

    pub fn ratio(&self) -> f64 {
        self.value / self.cost
    }
}

/// Row-stochastic matrix, `entry(i, j) = Pr[signal j | strength level i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalMatrix {
    levels: usize,
    entries: Vec<f64>,
}

impl SignalMatrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let levels = rows.len();
        if levels == 0 {
            return Err(domain("signal matrix needs at least one row"));
        }
        let mut entries = Vec::with_capacity(levels * levels);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != levels {
                return Err(domain(format!(
                    "row {i} has {} entries, expected {levels}",
                    row.len()
                )));
            }
            entries.extend_from_slice(row);
        }
        Self::from_entries(levels, entries)
    }

    /// Row-major entries.
    pub fn from_entries(levels: usize, entries: Vec<f64>) -> Result<Self> {
        if levels == 0 || entries.len() != levels * levels {
            return Err(domain("signal matrix must be square"));
        }
        for (i, row) in entries.chunks(levels).enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(domain(format!("row {i} has an entry outside [0, 1]")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(domain(format!("row {i} sums to {sum}")));
            }
        }
        Ok(Self { levels, entries })
    }

    /// Every row equal to `(0, ..., 0, 1)`: the signal carries no information.
    pub fn uninformative(levels: usize) -> Self {
        let mut entries = vec![0.0; levels * levels];
        for i in 0..levels {
            entries[i * levels + levels - 1] = 1.0;
        }
        Self { levels, entries }
    }

    pub fn identity(levels: usize) -> Self {
        let mut entries = vec![0.0; levels * levels];
        for i in 0..levels {
            entries[i * levels + i] = 1.0;
        }
        Self { levels, entries }
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn get(&self, level: usize, signal: usize) -> f64 {
        self.entries[level * self.levels + signal]
    }

    pub fn row(&self, level: usize) -> &[f64] {
        &self.entries[level * self.levels..(level + 1) * self.levels]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// `count` passwords each with prior `probability`, all at strength `level`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledClass {
    pub probability: f64,
    pub count: u64,
    pub level: usize,
}

/// A password distribution partitioned into labeled groups.
#[derive(Debug, Clone, PartialEq)]
pub struct GameInstance {
    classes: Vec<LabeledClass>,
    level_mass: Vec<f64>,
}

impl GameInstance {
    pub fn new(classes: Vec<LabeledClass>, levels: usize) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if levels == 0 {
            return Err(domain("need at least one strength level"));
        }
        let mut level_mass = vec![0.0; levels];
        for c in &classes {
            if c.level >= levels {
                return Err(domain(format!("level {} out of range 0..{levels}", c.level)));
            }
            if !(c.probability > 0.0) || c.count == 0 {
                return Err(domain("labeled classes need positive probability and count"));
            }
            level_mass[c.level] += c.probability * c.count as f64;
        }
        Ok(Self { classes, level_mass })
    }

    /// Labels every class of `ecl` with `thresholds`.
    pub fn from_thresholds(ecl: &EquivalenceClassList, thresholds: &StrengthThresholds) -> Self {
        let labels = thresholds.label_corpus(ecl);
        Self::from_labels(ecl, &labels, thresholds.levels())
            .expect("labels come from the thresholds")
    }

    pub fn from_labels(ecl: &EquivalenceClassList, labels: &[usize], levels: usize) -> Result<Self> {
        if labels.len() != ecl.len() {
            return Err(domain("one label per class required"));
        }
        let classes = ecl
            .classes()
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (c, &level))| LabeledClass {
                probability: ecl.probability(i),
                count: c.count,
                level,
            })
            .collect();
        Self::new(classes, levels)
    }

    /// Single-level instance, for the no-signal game.
    pub fn unlabeled(ecl: &EquivalenceClassList) -> Self {
        Self::from_labels(ecl, &vec![0; ecl.len()], 1).expect("valid corpus")
    }

    pub fn classes(&self) -> &[LabeledClass] {
        &self.classes
    }

    pub fn levels(&self) -> usize {
        self.level_mass.len()
    }

    /// Prior mass of each strength level.
    pub fn level_masses(&self) -> &[f64] {
        &self.level_mass
    }

    /// `Pr[Sig = y]`.
    pub fn signal_mass(&self, s: &SignalMatrix, signal: usize) -> f64 {
        self.level_mass
            .iter()
            .enumerate()
            .map(|(level, m)| m * s.get(level, signal))
            .sum()
    }

    fn check_matrix(&self, s: &SignalMatrix) -> Result<()> {
        if s.levels() != self.levels() {
            return Err(domain(format!(
                "signal matrix has {} levels, instance has {}",
                s.levels(),
                self.levels()
            )));
        }
        Ok(())
    }

    /// Per-password posterior `Pr[pw | Sig = y]` for each class.
    pub fn posterior(&self, s: &SignalMatrix, signal: usize) -> Result<Vec<f64>> {
        self.check_matrix(s)?;
        if signal >= s.levels() {
            return Err(domain(format!("signal {signal} out of range")));
        }
        let mass = self.signal_mass(s, signal);
        if !(mass > 0.0) {
            return Err(Error::UnreachableSignal(signal));
        }
        Ok(self
            .classes
            .iter()
            .map(|c| c.probability * s.get(c.level, signal) / mass)
            .collect())
    }

    /// Optimal attack when no signal is stored.
    pub fn best_response_no_signal(&self, economy: AttackerEconomy) -> BudgetPlan {
        let weights: Vec<f64> = self.classes.iter().map(|c| c.probability).collect();
        BudgetPlan::optimise(&self.classes, &weights, economy)
    }

    /// Optimal attack for every signal value.
    pub fn best_response_signal(&self, s: &SignalMatrix, economy: AttackerEconomy) -> Result<AttackPlan> {
        self.check_matrix(s)?;
        let mut per_signal = Vec::with_capacity(s.levels());
        for y in 0..s.levels() {
            let mass = self.signal_mass(s, y);
            let plan = match self.posterior(s, y) {
                Ok(post) => Some(BudgetPlan::optimise(&self.classes, &post, economy)),
                Err(Error::UnreachableSignal(_)) => None,
                Err(e) => return Err(e),
            };
            per_signal.push(SignalPlan { signal: y, signal_mass: mass, plan });
        }
        Ok(AttackPlan { per_signal })
    }

    pub fn evaluate_signaling(&self, s: &SignalMatrix, economy: AttackerEconomy) -> Result<SignalingOutcome> {
        let plan = self.best_response_signal(s, economy)?;
        Ok(SignalingOutcome {
            success_rate: plan.success_rate(),
            utility: plan.utility(),
            plan,
        })
    }

    /// Expected fraction of users cracked only because of signaling (`unlucky`)
    /// and saved by it (`lucky`), relative to the no-signal optimum.
    pub fn lucky_unlucky(&self, s: &SignalMatrix, economy: AttackerEconomy) -> Result<LuckReport> {
        let baseline = self.best_response_no_signal(economy);
        let plan = self.best_response_signal(s, economy)?;
        let base_cracked = baseline.cracked_mask(self.classes.len());
        let signal_cracked: Vec<Option<Vec<bool>>> = plan
            .per_signal
            .iter()
            .map(|p| p.plan.as_ref().map(|b| b.cracked_mask(self.classes.len())))
            .collect();
        let mut unlucky = 0.0;
        let mut lucky = 0.0;
        for (g, c) in self.classes.iter().enumerate() {
            let mass = c.probability * c.count as f64;
            for (y, cracked) in signal_cracked.iter().enumerate() {
                let here = cracked.as_ref().is_some_and(|m| m[g]);
                let w = mass * s.get(c.level, y);
                match (base_cracked[g], here) {
                    (false, true) => unlucky += w,
                    (true, false) => lucky += w,
                    _ => {}
                }
            }
        }
        Ok(LuckReport {
            unlucky,
            lucky,
            baseline_success: baseline.lambda,
            signal_success: plan.success_rate(),
        })
    }

    /// The attacker's optimal utility with signals never falls below the
    /// optimal no-signal utility.
    pub fn utility_never_decreases(
        &self,
        s: &SignalMatrix,
        economy: AttackerEconomy,
    ) -> Result<UtilityWitness> {
        let baseline = self.best_response_no_signal(economy).utility;
        let signal = self.best_response_signal(s, economy)?.utility();
        Ok(UtilityWitness {
            holds: signal >= baseline - UTILITY_TIE_TOLERANCE * economy.cost,
            signal_utility: signal,
            baseline_utility: baseline,
        })
    }
}

/// Optimal budget against one (posterior) distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetPlan {
    /// Class indices in guessing order, most likely first.
    pub class_order: Vec<usize>,
    /// Number of leading entries of `class_order` that are guessed.
    pub budget_classes: usize,
    /// `B*`, the number of guesses.
    pub budget_guesses: u64,
    /// Probability the password is cracked within the budget.
    pub lambda: f64,
    /// Expected utility in currency units.
    pub utility: f64,
}

impl BudgetPlan {
    /// `weights[i]` is the per-password probability of class `i` under the
    /// distribution being attacked.
    fn optimise(classes: &[LabeledClass], weights: &[f64], economy: AttackerEconomy) -> Self {
        let mut order: Vec<usize> = (0..classes.len()).collect();
        order.sort_by(|&a, &b| weights[b].total_cmp(&weights[a]).then(a.cmp(&b)));

        let ratio = economy.ratio();
        let mut lambdas = Vec::with_capacity(order.len() + 1);
        let mut utils = Vec::with_capacity(order.len() + 1);
        let mut guesses = Vec::with_capacity(order.len() + 1);
        let (mut lambda, mut cost, mut b) = (0.0f64, 0.0f64, 0u64);
        lambdas.push(0.0);
        utils.push(0.0);
        guesses.push(0);
        for &g in &order {
            let q = weights[g];
            let c = classes[g].count as f64;
            let survival = 1.0 - lambda;
            // sum over the class of survival before each guess:
            // sum_{t=0}^{c-1} (survival - t q)
            cost += c * survival - q * c * (c - 1.0) / 2.0;
            lambda += q * c;
            b += classes[g].count;
            lambdas.push(lambda);
            utils.push(ratio * lambda - cost);
            guesses.push(b);
        }

        let best_u = utils.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let best_lambda = (0..utils.len())
            .filter(|&i| utils[i] >= best_u - UTILITY_TIE_TOLERANCE)
            .map(|i| lambdas[i])
            .fold(f64::NEG_INFINITY, f64::max);
        let pick = (0..utils.len())
            .find(|&i| {
                utils[i] >= best_u - UTILITY_TIE_TOLERANCE
                    && lambdas[i] >= best_lambda - LAMBDA_TIE_TOLERANCE
            })
            .expect("at least the empty budget qualifies");

        Self {
            class_order: order,
            budget_classes: pick,
            budget_guesses: guesses[pick],
            lambda: lambdas[pick],
            utility: utils[pick] * economy.cost,
        }
    }

    fn cracked_mask(&self, n: usize) -> Vec<bool> {
        let mut mask = vec![false; n];
        for &g in &self.class_order[..self.budget_classes] {
            mask[g] = true;
        }
        mask
    }

    /// Classes guessed within the budget.
    pub fn cracked_classes(&self) -> &[usize] {
        &self.class_order[..self.budget_classes]
    }
}

/// Best response to a single signal value. `plan` is `None` when the signal
/// has zero probability.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalPlan {
    pub signal: usize,
    pub signal_mass: f64,
    pub plan: Option<BudgetPlan>,
}

/// Best response to every signal value.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackPlan {
    pub per_signal: Vec<SignalPlan>,
}

impl AttackPlan {
    /// `P_adv^s = sum_y Pr[Sig = y] * lambda_y`.
    pub fn success_rate(&self) -> f64 {
        self.per_signal
            .iter()
            .filter_map(|p| p.plan.as_ref().map(|b| p.signal_mass * b.lambda))
            .sum()
    }

    /// `U_adv^s = sum_y Pr[Sig = y] * U_y`.
    pub fn utility(&self) -> f64 {
        self.per_signal
            .iter()
            .filter_map(|p| p.plan.as_ref().map(|b| p.signal_mass * b.utility))
            .sum()
    }

    pub fn total_signal_mass(&self) -> f64 {
        self.per_signal.iter().map(|p| p.signal_mass).sum()
    }
}

impl fmt::Display for AttackPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.per_signal {
            writeln!(f, "[signal {}]", p.signal)?;
            writeln!(f, "pr_signal = {}", p.signal_mass)?;
            match &p.plan {
                Some(b) => {
                    writeln!(f, "budget_guesses = {}", b.budget_guesses)?;
                    writeln!(f, "budget_classes = {}", b.budget_classes)?;
                    writeln!(f, "lambda = {}", b.lambda)?;
                    writeln!(f, "utility = {}", b.utility)?;
                }
                None => writeln!(f, "unreachable")?,
            }
        }
        writeln!(f, "[total]")?;
        writeln!(f, "success_rate = {}", self.success_rate())?;
        writeln!(f, "utility = {}", self.utility())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalingOutcome {
    pub success_rate: f64,
    pub utility: f64,
    pub plan: AttackPlan,
}

impl SignalingOutcome {
    /// The defender's utility is the negated attacker success rate.
    pub fn defender_utility(&self) -> f64 {
        -self.success_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LuckReport {
    /// `E[X_u]`: cracked with signaling but not without.
    pub unlucky: f64,
    /// `E[L_u]`: cracked without signaling but not with.
    pub lucky: f64,
    pub baseline_success: f64,
    pub signal_success: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilityWitness {
    pub holds: bool,
    pub signal_utility: f64,
    pub baseline_utility: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn ecl(text: &str) -> EquivalenceClassList {
        EquivalenceClassList::parse(text).unwrap()
    }

    // Pr[pw_i] = 2^-i for i < n, with the 2^-(n-1) tail split over two
    // passwords of probability 2^-n so that the distribution sums to 1
    fn geometric(n: u32) -> EquivalenceClassList {
        let head = (1..n).map(|i| ((1u64 << (n - i)) as f64, 1));
        EquivalenceClassList::from_pairs(head.chain([(1.0, 2)])).unwrap()
    }

    fn seventh_section_instance(n: u32) -> (GameInstance, SignalMatrix) {
        let e = geometric(n);
        let mut labels = vec![1; e.len()];
        labels[0] = 0;
        let inst = GameInstance::from_labels(&e, &labels, 2).unwrap();
        let s = SignalMatrix::from_rows(&[vec![0.5, 0.5], vec![0.0, 1.0]]).unwrap();
        (inst, s)
    }

    #[test]
    fn geometric_no_signal() {
        let inst = GameInstance::unlabeled(&geometric(30));
        let r = inst.best_response_no_signal(AttackerEconomy::new(3.0, 1.0).unwrap());
        assert_eq!(r.budget_classes, 30);
        assert_eq!(r.budget_guesses, 31);
        assert!(r.lambda >= 1.0 - 1e-12);
    }

    #[test]
    fn small_corpus_adversarial_budget() {
        // p = (0.6, 0.2, 0.2), v/k = 2: U(1) = 0.2, U(3) = 0.4
        let inst = GameInstance::unlabeled(&ecl("3 1\n1 2"));
        let r = inst.best_response_no_signal(AttackerEconomy::from_ratio(2.0).unwrap());
        assert_eq!(r.budget_guesses, 3);
        assert!((r.lambda - 1.0).abs() < 1e-12);
        assert!((r.utility - 0.4).abs() < 1e-12);
    }

    #[test]
    fn zero_value_attacker_does_nothing() {
        let inst = GameInstance::unlabeled(&ecl("3 1\n1 2"));
        let r = inst.best_response_no_signal(AttackerEconomy::new(0.0, 1.0).unwrap());
        assert_eq!(r.budget_guesses, 0);
        assert_eq!(r.lambda, 0.0);
    }

    #[test]
    fn posterior_on_geometric_example() {
        let (inst, s) = seventh_section_instance(30);
        let post = inst.posterior(&s, 1).unwrap();
        assert!((post[0] - 1.0 / 3.0).abs() < 1e-15);
        for i in 1..29 {
            let expected = 4.0 / 3.0 * libm::pow(2.0, -((i + 1) as f64));
            assert!((post[i] - expected).abs() < 1e-15 * expected, "i={i}");
        }
        assert!((post[29] - 4.0 / 3.0 * libm::pow(2.0, -30.0)).abs() < 1e-24);
        let total: f64 = post.iter().zip(inst.classes()).map(|(q, c)| q * c.count as f64).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn signaling_on_geometric_example() {
        let (inst, s) = seventh_section_instance(30);
        let econ = AttackerEconomy::new(2.1, 1.0).unwrap();
        let out = inst.evaluate_signaling(&s, econ).unwrap();
        assert!((out.success_rate - 0.25).abs() < 1e-15);
        let p0 = out.plan.per_signal[0].plan.as_ref().unwrap();
        let p1 = out.plan.per_signal[1].plan.as_ref().unwrap();
        assert_eq!(p0.budget_guesses, 1);
        assert_eq!(p0.cracked_classes(), &[0]);
        assert_eq!(p1.budget_guesses, 0);

        let rich = inst.evaluate_signaling(&s, AttackerEconomy::new(4.0, 1.0).unwrap()).unwrap();
        assert_eq!(rich.plan.per_signal[1].plan.as_ref().unwrap().budget_classes, 30);
    }

    #[test]
    fn uninformative_matrix_reduces_to_baseline() {
        let e = ecl("9 1\n5 2\n3 1\n1 6");
        let t = crate::strength::label_strength(&e, 3).unwrap();
        let inst = GameInstance::from_thresholds(&e, &t);
        let flat = SignalMatrix::from_rows(&[
            vec![0.2, 0.3, 0.5],
            vec![0.2, 0.3, 0.5],
            vec![0.2, 0.3, 0.5],
        ])
        .unwrap();
        for ratio in [0.5, 2.0, 4.0, 7.0, 20.0] {
            let econ = AttackerEconomy::from_ratio(ratio).unwrap();
            let base = inst.best_response_no_signal(econ);
            let out = inst.evaluate_signaling(&flat, econ).unwrap();
            assert!((out.success_rate - base.lambda).abs() < 1e-12, "ratio {ratio}");
            for y in 0..3 {
                let post = inst.posterior(&flat, y).unwrap();
                for (i, c) in inst.classes().iter().enumerate() {
                    assert!((post[i] - c.probability).abs() < 1e-15);
                }
            }
            let luck = inst.lucky_unlucky(&flat, econ).unwrap();
            assert_eq!((luck.lucky, luck.unlucky), (0.0, 0.0));
            let w = inst.utility_never_decreases(&flat, econ).unwrap();
            assert!((w.signal_utility - w.baseline_utility).abs() < 1e-12);
        }
    }

    #[test]
    fn luck_on_geometric_example() {
        let (inst, s) = seventh_section_instance(30);
        let econ = AttackerEconomy::new(2.1, 1.0).unwrap();
        let luck = inst.lucky_unlucky(&s, econ).unwrap();
        assert!(luck.unlucky.abs() < 1e-12);
        assert!((luck.lucky - 0.75).abs() < 1e-12);
        let gap = luck.signal_success - luck.baseline_success;
        assert!((gap - (luck.unlucky - luck.lucky)).abs() < 1e-9);

        let w = inst.utility_never_decreases(&s, econ).unwrap();
        assert!(w.holds);
        assert!(w.signal_utility > w.baseline_utility);
    }

    #[test]
    fn unreachable_signal_is_skipped() {
        // level 0 is empty, and column 0 only receives mass from level 0
        let e = ecl("4 1\n1 3");
        let inst = GameInstance::from_labels(&e, &[1, 1], 2).unwrap();
        let s = SignalMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(inst.posterior(&s, 0), Err(Error::UnreachableSignal(0)));
        let plan = inst.best_response_signal(&s, AttackerEconomy::from_ratio(10.0).unwrap()).unwrap();
        assert!(plan.per_signal[0].plan.is_none());
        assert_eq!(plan.per_signal[0].signal_mass, 0.0);
        assert!((plan.total_signal_mass() - 1.0).abs() < 1e-12);
        let text = alloc::format!("{plan}");
        assert!(text.contains("unreachable"));
    }

    #[test]
    fn matrix_validation() {
        assert!(SignalMatrix::from_rows(&[vec![0.5, 0.6], vec![0.0, 1.0]]).is_err());
        assert!(SignalMatrix::from_rows(&[vec![1.5, -0.5], vec![0.0, 1.0]]).is_err());
        assert!(SignalMatrix::from_rows(&[vec![1.0], vec![0.0, 1.0]]).is_err());
        let inst = GameInstance::unlabeled(&ecl("1 1"));
        assert!(inst.best_response_signal(&SignalMatrix::identity(2), AttackerEconomy::from_ratio(1.0).unwrap()).is_err());
    }

    #[test]
    fn economy_validation() {
        assert!(AttackerEconomy::new(1.0, 0.0).is_err());
        assert!(AttackerEconomy::new(-1.0, 1.0).is_err());
        assert!(AttackerEconomy::new(f64::NAN, 1.0).is_err());
    }
}
