//! Sweeps over the value/cost ratio and the reports built on them.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use log::{info, warn};
use pwsignal_core::dpsketch::{dimensions_for, DEFAULT_DROP_THRESHOLD};
use pwsignal_core::optimizer::{gen_sig_mat_with_progress, Progress};
use pwsignal_core::{
    label_strength, label_strength_top_k, AttackerEconomy, BudgetPlan, DpCountSketch,
    EmpiricalDistribution, EquivalenceClassList, GameInstance, LabeledClass, OptimizerConfig,
    SignalMatrix,
};
use rayon::prelude::*;

use crate::error::Result;

/// Ratios above this are outside what the online variant is meant for.
pub const ONLINE_VK_LIMIT: f64 = 1e5;
pub const DEFAULT_LEVELS: usize = 7;
pub const DEFAULT_TOP_K: u64 = 10_000;
pub const DEFAULT_EPSILON: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    /// Train and evaluate on the same corpus.
    Perfect,
    /// Train on a noisy corpus extracted from a private sketch, evaluate on
    /// the real one with sketch-estimated strength levels.
    Imperfect,
    /// Strength levels computed from the `top_k` most frequent passwords.
    Online { top_k: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SketchParams {
    /// Columns; derived from the corpus size when unset.
    pub width: Option<usize>,
    pub depth: usize,
    pub epsilon: f64,
    pub drop_threshold: f64,
}

impl Default for SketchParams {
    fn default() -> Self {
        let (_, depth) = dimensions_for(2e-8, 0.999).expect("constant parameters");
        Self { width: None, depth, epsilon: DEFAULT_EPSILON, drop_threshold: DEFAULT_DROP_THRESHOLD }
    }
}

/// Sketch width used when none is given: the error-bound width, but no more
/// than four columns per distinct password.
pub fn default_sketch_width(distinct_passwords: u64) -> usize {
    let (full, _) = dimensions_for(2e-8, 0.999).expect("constant parameters");
    full.min((4 * distinct_passwords as usize).max(1024))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub vk: Vec<f64>,
    pub levels: usize,
    pub iterations: usize,
    pub seed: u64,
    pub mode: Mode,
    pub sketch: SketchParams,
    pub monotone_repair: bool,
}

impl SweepSpec {
    /// Sorts the ratios ascending and drops duplicates.
    pub fn new(mut vk: Vec<f64>, levels: usize, iterations: usize, seed: u64, mode: Mode) -> Result<Self> {
        if vk.is_empty() || vk.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(pwsignal_core::Error::Domain("v/k ratios must be positive".into()).into());
        }
        vk.sort_by(f64::total_cmp);
        vk.dedup();
        if matches!(mode, Mode::Online { .. }) && vk.iter().any(|v| *v > ONLINE_VK_LIMIT) {
            warn!("online mode assumes v/k <= {ONLINE_VK_LIMIT}");
        }
        Ok(Self {
            vk,
            levels,
            iterations,
            seed,
            mode,
            sketch: SketchParams::default(),
            monotone_repair: false,
        })
    }
}

/// Per-point optimiser seed; depends only on the sweep seed and the ratio.
pub fn point_seed(seed: u64, vk: f64) -> u64 {
    let mut z = seed ^ vk.to_bits().rotate_left(29) ^ 0x243f_6a88_85a3_08d3;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn synthetic_password(class: usize, member: u64) -> String {
    format!("{class}:{member}")
}

/// Corpus-derived state shared by every point of a sweep.
pub struct Prepared {
    pub corpus: EquivalenceClassList,
    pub baseline: GameInstance,
    /// Instance the optimiser sees.
    pub train: GameInstance,
    /// Instance matrices are scored on.
    pub eval: GameInstance,
}

impl Prepared {
    pub fn new(corpus: EquivalenceClassList, levels: usize, mode: Mode, sketch: &SketchParams, seed: u64) -> Result<Self> {
        let baseline = GameInstance::unlabeled(&corpus);
        let (train, eval) = match mode {
            Mode::Perfect => {
                let t = label_strength(&corpus, levels)?;
                let g = GameInstance::from_thresholds(&corpus, &t);
                (g.clone(), g)
            }
            Mode::Online { top_k } => {
                let distinct = corpus.distinct_passwords();
                let k = if top_k > distinct {
                    warn!("top-k {top_k} exceeds {distinct} distinct passwords; using {distinct}");
                    distinct
                } else {
                    top_k
                };
                let t = label_strength_top_k(&corpus, levels, k)?;
                let g = GameInstance::from_thresholds(&corpus, &t);
                (g.clone(), g)
            }
            Mode::Imperfect => imperfect_instances(&corpus, levels, sketch, seed)?,
        };
        Ok(Self { corpus, baseline, train, eval })
    }
}

/// Fills a private sketch with `corpus`, derives strength levels from the
/// extracted noisy corpus and labels every real password by its sketch
/// estimate.
fn imperfect_instances(
    corpus: &EquivalenceClassList,
    levels: usize,
    params: &SketchParams,
    seed: u64,
) -> Result<(GameInstance, GameInstance)> {
    let width = params.width.unwrap_or_else(|| default_sketch_width(corpus.distinct_passwords()));
    info!("building {width}x{} sketch, epsilon {}", params.depth, params.epsilon);
    let mut sk = DpCountSketch::new_column_aligned(width, params.depth, Some(params.epsilon), seed)?;
    for (i, c) in corpus.classes().iter().enumerate() {
        let copies = c.frequency.round().max(0.0) as u64;
        for j in 0..c.count {
            let pw = synthetic_password(i, j);
            for _ in 0..copies {
                sk.insert(&pw);
            }
        }
    }
    let noisy = sk.extract_noisy_corpus(params.drop_threshold)?;
    info!("noisy corpus: {} classes, {} pseudo-passwords", noisy.len(), noisy.distinct_passwords());
    let t = label_strength(&noisy, levels)?;
    let train = GameInstance::from_thresholds(&noisy, &t);

    let mut classes = Vec::new();
    for (i, c) in corpus.classes().iter().enumerate() {
        let mut by_level: BTreeMap<usize, u64> = BTreeMap::new();
        for j in 0..c.count {
            let level = t.get_strength(sk.estimate(&synthetic_password(i, j)));
            *by_level.entry(level).or_default() += 1;
        }
        let probability = corpus.probability(i);
        classes.extend(by_level.into_iter().map(|(level, count)| LabeledClass { probability, count, level }));
    }
    Ok((train, GameInstance::new(classes, levels)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointMetrics {
    pub p_nosignal: f64,
    pub p_signal: f64,
    pub improvement: f64,
    pub unlucky: f64,
    pub lucky: f64,
    pub low_confidence: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub vk: f64,
    pub outcome: std::result::Result<PointMetrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Matrix behind each successful row, same order as `rows`.
    pub matrices: Vec<Option<SignalMatrix>>,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome.is_err()).count()
    }
}

fn low_confidence(dist: &EmpiricalDistribution, plan: &BudgetPlan) -> bool {
    plan.cracked_classes().iter().any(|&i| dist.is_low_confidence(i))
}

/// Scores `s` on the evaluation instance at ratio `vk`.
pub fn evaluate_matrix(prep: &Prepared, s: &SignalMatrix, vk: f64) -> Result<PointMetrics> {
    let economy = AttackerEconomy::from_ratio(vk)?;
    let base = prep.baseline.best_response_no_signal(economy);
    let luck = prep.eval.lucky_unlucky(s, economy)?;
    let dist = EmpiricalDistribution::new(prep.corpus.clone());
    Ok(PointMetrics {
        p_nosignal: base.lambda,
        p_signal: luck.signal_success,
        improvement: base.lambda - luck.signal_success,
        unlucky: luck.unlucky,
        lucky: luck.lucky,
        low_confidence: low_confidence(&dist, &base),
    })
}

/// Optimises a matrix on the training instance at ratio `vk`.
pub fn solve_point(prep: &Prepared, vk: f64, levels: usize, iterations: usize, seed: u64) -> Result<SignalMatrix> {
    let economy = AttackerEconomy::from_ratio(vk)?;
    let cfg = OptimizerConfig::default().with_iterations(iterations).with_seed(point_seed(seed, vk));
    let mut log_progress = |p: Progress| info!("vk={vk} iter={} best={}", p.iteration, p.best_cost);
    let search = gen_sig_mat_with_progress(&prep.train, economy, &cfg, Some(&mut log_progress))?;
    debug_assert_eq!(search.matrix.levels(), levels);
    Ok(search.matrix)
}

pub fn run_sweep(corpus: EquivalenceClassList, spec: &SweepSpec) -> Result<SweepResult> {
    let prep = Prepared::new(corpus, spec.levels, spec.mode, &spec.sketch, spec.seed)?;
    run_sweep_prepared(&prep, spec)
}

pub fn run_sweep_prepared(prep: &Prepared, spec: &SweepSpec) -> Result<SweepResult> {
    let points: Vec<(SweepRow, Option<SignalMatrix>)> = spec
        .vk
        .par_iter()
        .map(|&vk| {
            let r = solve_point(prep, vk, spec.levels, spec.iterations, spec.seed)
                .and_then(|s| evaluate_matrix(prep, &s, vk).map(|m| (m, s)));
            match r {
                Ok((m, s)) => (SweepRow { vk, outcome: Ok(m) }, Some(s)),
                Err(e) => {
                    warn!("vk={vk}: {e}");
                    (SweepRow { vk, outcome: Err(e.to_string()) }, None)
                }
            }
        })
        .collect();
    let (mut rows, matrices): (Vec<_>, Vec<_>) = points.into_iter().unzip();
    if spec.monotone_repair {
        repair_monotone(prep, &mut rows, &matrices);
    }
    Ok(SweepResult { rows, matrices })
}

/// Re-scores each point with every matrix found at a lower ratio and keeps
/// the best.
fn repair_monotone(prep: &Prepared, rows: &mut [SweepRow], matrices: &[Option<SignalMatrix>]) {
    let repaired: Vec<Option<PointMetrics>> = (0..rows.len())
        .into_par_iter()
        .map(|i| {
            let Ok(current) = rows[i].outcome else { return None };
            let mut best = current;
            for s in matrices[..i].iter().flatten() {
                if let Ok(m) = evaluate_matrix(prep, s, rows[i].vk) {
                    if m.p_signal < best.p_signal {
                        best = m;
                    }
                }
            }
            (best != current).then_some(best)
        })
        .collect();
    for (row, fix) in rows.iter_mut().zip(repaired) {
        if let Some(m) = fix {
            row.outcome = Ok(m);
        }
    }
}

/// Scores one fixed matrix across the sweep.
pub fn run_robustness(corpus: EquivalenceClassList, spec: &SweepSpec, s: &SignalMatrix) -> Result<Vec<SweepRow>> {
    if s.levels() != spec.levels {
        return Err(pwsignal_core::Error::Domain(format!(
            "matrix has {} levels but the thresholds have {}",
            s.levels(),
            spec.levels
        ))
        .into());
    }
    let prep = Prepared::new(corpus, spec.levels, spec.mode, &spec.sketch, spec.seed)?;
    Ok(spec
        .vk
        .par_iter()
        .map(|&vk| SweepRow { vk, outcome: evaluate_matrix(&prep, s, vk).map_err(|e| e.to_string()) })
        .collect())
}

pub const CSV_HEADER: [&str; 8] =
    ["vk", "p_nosignal", "p_signal", "improvement", "E_X", "E_L", "low_confidence", "error"];

pub fn write_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        let record = match &r.outcome {
            Ok(m) => [
                r.vk.to_string(),
                m.p_nosignal.to_string(),
                m.p_signal.to_string(),
                m.improvement.to_string(),
                m.unlucky.to_string(),
                m.lucky.to_string(),
                m.low_confidence.to_string(),
                String::new(),
            ],
            Err(e) => {
                let mut rec: [String; 8] = Default::default();
                rec[0] = r.vk.to_string();
                rec[7] = format!("ERROR: {e}");
                rec
            }
        };
        w.write_record(&record)?;
    }
    w.flush().map_err(|e| crate::Error::Csv(e.into()))?;
    Ok(())
}

fn budget_block(out: &mut String, title: &str, b: &BudgetPlan) {
    let _ = writeln!(out, "[{title}]");
    let _ = writeln!(out, "budget_guesses = {}", b.budget_guesses);
    let _ = writeln!(out, "budget_classes = {}", b.budget_classes);
    let _ = writeln!(out, "lambda = {}", b.lambda);
    let _ = writeln!(out, "utility = {}", b.utility);
}

/// Text report of the attacker's best response, with and without `matrix`.
pub fn attack_report(
    corpus: &EquivalenceClassList,
    vk: f64,
    levels: usize,
    matrix: Option<&SignalMatrix>,
) -> Result<String> {
    let economy = AttackerEconomy::from_ratio(vk)?;
    let base = GameInstance::unlabeled(corpus).best_response_no_signal(economy);
    let mut out = String::new();
    budget_block(&mut out, "no signal", &base);
    let dist = EmpiricalDistribution::new(corpus.clone());
    let _ = writeln!(out, "low_confidence = {}", low_confidence(&dist, &base));
    if let Some(s) = matrix {
        if s.levels() != levels {
            return Err(pwsignal_core::Error::Domain(format!(
                "matrix has {} levels, expected {levels}",
                s.levels()
            ))
            .into());
        }
        let t = label_strength(corpus, levels)?;
        let plan = GameInstance::from_thresholds(corpus, &t).best_response_signal(s, economy)?;
        out.push_str(&plan.to_string());
    }
    Ok(out)
}
