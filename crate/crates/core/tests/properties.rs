mod support;

use proptest::prelude::*;
use pwsignal_core::authsim::sample_signal;
use pwsignal_core::optimizer::matrix_to_raw;
use pwsignal_core::{
    label_strength, simplex_repair, AttackerEconomy, DpCountSketch, EquivalenceClassList,
    GameInstance, LabeledClass, SignalMatrix,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn pairs() -> impl Strategy<Value = Vec<(f64, u64)>> {
    prop::collection::vec((1u32..500, 1u64..40), 1..25)
        .prop_map(|v| v.into_iter().map(|(f, c)| (f as f64 / 4.0, c)).collect())
}

fn row(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, d).prop_map(|raw| {
        let s: f64 = raw.iter().sum::<f64>().max(1e-9);
        let mut r: Vec<f64> = raw.iter().map(|v| v / s).collect();
        let head: f64 = r[..r.len() - 1].iter().sum();
        let last = r.len() - 1;
        r[last] = (1.0 - head).max(0.0);
        r
    })
}

fn instance() -> impl Strategy<Value = (GameInstance, SignalMatrix, f64)> {
    (pairs(), 2usize..5, 0.5f64..80.0).prop_flat_map(|(p, d, ratio)| {
        let ecl = EquivalenceClassList::from_pairs(p).unwrap();
        let n = ecl.len();
        (
            Just(ecl),
            prop::collection::vec(0..d, n),
            prop::collection::vec(row(d), d),
            Just(ratio),
        )
            .prop_map(move |(ecl, labels, rows, ratio)| {
                let g = GameInstance::from_labels(&ecl, &labels, d).unwrap();
                (g, SignalMatrix::from_rows(&rows).unwrap(), ratio)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn corpus_text_round_trip(p in pairs()) {
        let ecl = EquivalenceClassList::from_pairs(p).unwrap();
        prop_assert_eq!(EquivalenceClassList::parse(&ecl.to_text()).unwrap(), ecl);
    }

    #[test]
    fn cumulative_mass_monotone(p in pairs()) {
        let ecl = EquivalenceClassList::from_pairs(p).unwrap();
        let masses: Vec<f64> = (0..=ecl.len()).map(|i| ecl.cumulative_mass(i).unwrap()).collect();
        prop_assert_eq!(masses[0], 0.0);
        prop_assert_eq!(masses[ecl.len()], 1.0);
        prop_assert!(masses.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(ecl.classes().windows(2).all(|w| w[0].frequency > w[1].frequency));
    }

    #[test]
    fn strength_monotone_and_consistent(p in pairs(), d in 2usize..8) {
        let ecl = EquivalenceClassList::from_pairs(p).unwrap();
        let t = label_strength(&ecl, d).unwrap();
        let labels = t.label_corpus(&ecl);
        for (i, c) in ecl.classes().iter().enumerate() {
            prop_assert_eq!(t.get_strength(c.frequency), labels[i]);
            prop_assert!(labels[i] < d);
        }
        // more frequent never means stronger
        prop_assert!(labels.windows(2).all(|w| w[0] <= w[1]));
        let mut probe: Vec<f64> = (0..200).map(|i| i as f64 * 0.7).collect();
        probe.sort_by(|a, b| b.total_cmp(a));
        let levels: Vec<usize> = probe.iter().map(|f| t.get_strength(*f)).collect();
        prop_assert!(levels.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn boundary_search_matches_exhaustive((g, s, ratio) in instance()) {
        let e = AttackerEconomy::from_ratio(ratio).unwrap();
        let base = g.best_response_no_signal(e);
        let oracle = support::no_signal(g.classes(), ratio, 1.0);
        prop_assert_eq!(base.budget_guesses, oracle.guesses);
        prop_assert!((base.lambda - oracle.lambda).abs() < 1e-9);
        prop_assert!((base.utility - oracle.utility).abs() < 1e-9 * (1.0 + oracle.utility.abs()));

        let rows: Vec<Vec<f64>> = (0..s.levels()).map(|i| s.row(i).to_vec()).collect();
        let out = g.evaluate_signaling(&s, e).unwrap();
        let want = support::with_signal(g.classes(), &rows, ratio, 1.0);
        prop_assert!((out.success_rate - want.success_rate).abs() < 1e-9);
        prop_assert!((out.utility - want.utility).abs() < 1e-9 * (1.0 + want.utility.abs()));
        for (got, want) in out.plan.per_signal.iter().zip(&want.per_signal) {
            match (&got.plan, want) {
                (Some(b), Some((_, w))) => prop_assert_eq!(b.budget_guesses, w.guesses),
                (None, None) => {}
                _ => prop_assert!(false, "reachability differs"),
            }
        }
    }

    #[test]
    fn scale_invariance((g, s, ratio) in instance(), k in 0.01f64..100.0) {
        let unit = g.evaluate_signaling(&s, AttackerEconomy::from_ratio(ratio).unwrap()).unwrap();
        let scaled = g.evaluate_signaling(&s, AttackerEconomy::new(ratio * k, k).unwrap()).unwrap();
        prop_assert!((unit.success_rate - scaled.success_rate).abs() < 1e-12);
        prop_assert!((unit.utility * k - scaled.utility).abs() < 1e-9 * (1.0 + scaled.utility.abs()));
    }

    #[test]
    fn bookkeeping((g, s, ratio) in instance()) {
        let e = AttackerEconomy::from_ratio(ratio).unwrap();
        let total: f64 = (0..s.levels()).map(|y| g.signal_mass(&s, y)).sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        for y in 0..s.levels() {
            if let Ok(post) = g.posterior(&s, y) {
                let m: f64 = post.iter().zip(g.classes()).map(|(p, c)| p * c.count as f64).sum();
                prop_assert!((m - 1.0).abs() < 1e-9);
            }
        }
        let luck = g.lucky_unlucky(&s, e).unwrap();
        let diff = luck.signal_success - luck.baseline_success;
        prop_assert!((diff - (luck.unlucky - luck.lucky)).abs() < 1e-9);
        prop_assert!(g.utility_never_decreases(&s, e).unwrap().holds);
    }

    #[test]
    fn uninformative_is_baseline((g, _s, ratio) in instance()) {
        let e = AttackerEconomy::from_ratio(ratio).unwrap();
        let u = SignalMatrix::uninformative(g.levels());
        let base = g.best_response_no_signal(e);
        let sig = g.evaluate_signaling(&u, e).unwrap();
        prop_assert!((sig.success_rate - base.lambda).abs() < 1e-9);
    }

    #[test]
    fn repair_is_idempotent(d in 2usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw: Vec<f64> = (0..d * (d - 1)).map(|_| rand::Rng::gen_range(&mut rng, -0.5..1.5)).collect();
        let s = simplex_repair(&raw, d).unwrap();
        for i in 0..d {
            let sum: f64 = s.row(i).iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(s.row(i).iter().all(|p| *p >= 0.0));
        }
        let again = simplex_repair(&matrix_to_raw(&s), d).unwrap();
        for (a, b) in s.entries().iter().zip(again.entries()) {
            prop_assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn sample_signal_hits_its_bin(r in prop::collection::vec(0.0f64..1.0, 2..6), u in 1e-12f64..=1.0) {
        let s: f64 = r.iter().sum::<f64>().max(1e-9);
        let mut row: Vec<f64> = r.iter().map(|v| v / s).collect();
        let head: f64 = row[..row.len() - 1].iter().sum();
        let last = row.len() - 1;
        row[last] = (1.0 - head).max(0.0);
        let j = sample_signal(&row, u).unwrap();
        prop_assert!(row[j] > 0.0);
        let below: f64 = row[..j].iter().sum();
        prop_assert!(u > below - 1e-12 && u <= below + row[j] + 1e-12);
    }

    #[test]
    fn sketch_never_underestimates(
        stream in prop::collection::vec(0u16..300, 1..400),
        width in 1usize..64,
        depth in 1usize..6,
        seed in any::<u64>(),
    ) {
        let mut sk = DpCountSketch::new(width, depth, None, seed).unwrap();
        let mut exact = std::collections::BTreeMap::new();
        for item in &stream {
            let key = item.to_string();
            sk.insert(&key);
            *exact.entry(key).or_insert(0u32) += 1;
        }
        for (key, n) in &exact {
            prop_assert!(sk.estimate(key) >= *n as f64);
        }
    }
}

#[test]
fn labeled_classes_drive_instances() {
    let g = GameInstance::new(
        vec![
            LabeledClass { probability: 0.5, count: 1, level: 0 },
            LabeledClass { probability: 0.25, count: 2, level: 1 },
        ],
        2,
    )
    .unwrap();
    assert_eq!(g.level_masses(), &[0.5, 0.5]);
}
