mod common;

use proptest::prelude::*;

use common::all_nodes;
use fairdiff::config::TreeParams;
use fairdiff::instability::{CovariateKind, Decorrelation, NodeScores, SplitCandidate};
use fairdiff::model::{count_cells, group_rates, mle, score_contribution, Group, Record, ThetaHat};
use fairdiff::numerics::{eigen_sym, inv_sqrt, SymMatrix4};
use fairdiff::report::DisparityReport;
use fairdiff::synth::{CellProbs, CovariateDist, Scenario, SynthCell, SynthCovariate};
use fairdiff::tree::{self, Atom};
use fairdiff::{grow, AuditConfig, Metric, SensitivePair};

fn feasible_theta() -> impl Strategy<Value = ThetaHat> {
    (0.01..0.48f64, 0.01..0.48f64, 0.01..0.48f64, 0.01..0.48f64).prop_map(|(a, b, c, d)| ThetaHat::new(a, b, c, d))
}

fn records(max: usize) -> impl Strategy<Value = Vec<Record>> {
    prop::collection::vec(
        (any::<bool>(), any::<bool>(), any::<bool>()).prop_map(|(g, y1, y2)| Record {
            yhat1: y1,
            yhat2: y2,
            group: if g { Group::A2 } else { Group::A1 },
        }),
        1..max,
    )
}

fn sym_matrix() -> impl Strategy<Value = SymMatrix4> {
    prop::array::uniform16(-5.0..5.0f64).prop_map(|v| {
        let mut a = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                a[i][j] = 0.5 * (v[4 * i + j] + v[4 * j + i]);
            }
        }
        SymMatrix4::from_full(&a)
    })
}

fn scenario(k: usize, n: usize, seed: u64, probs: [f64; 4]) -> Scenario {
    let levels: Vec<String> = (0..k).map(|i| format!("l{i}")).collect();
    let half = (k / 2).max(1);
    let mk = |p01: f64, p10: f64| CellProbs::new(p01, p10);
    Scenario {
        n,
        p_a2: 0.5,
        prevalence_a1: 0.4,
        prevalence_a2: 0.4,
        covariates: vec![
            SynthCovariate { name: "c".into(), dist: CovariateDist::Categorical { levels: levels.clone(), probs: vec![] } },
            SynthCovariate { name: "u".into(), dist: CovariateDist::Uniform { low: 0.0, high: 10.0 } },
        ],
        cells: vec![
            SynthCell {
                predicate: vec![Atom::Levels { covariate: "c".into(), levels: levels[..half].to_vec(), missing: false }],
                a1: mk(probs[0], probs[1]),
                a2: mk(probs[2], probs[3]),
            },
            SynthCell {
                predicate: vec![Atom::Levels { covariate: "c".into(), levels: levels[half..].to_vec(), missing: false }],
                a1: mk(probs[1], probs[0]),
                a2: mk(probs[3], probs[2]),
            },
        ],
        seed,
    }
}

fn scenario_strategy() -> impl Strategy<Value = Scenario> {
    (2..6usize, 200..2000usize, any::<u64>(), prop::array::uniform4(0.02..0.3f64))
        .prop_map(|(k, n, seed, p)| scenario(k, n, seed, p))
}

const PAIR: SensitivePair = SensitivePair { a1: 0, a2: 1 };

fn params() -> TreeParams {
    TreeParams { alpha: 0.5, min_node: 10, ..Default::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reparameterisation_round_trips(theta in feasible_theta()) {
        let back = theta.reparameterize().to_theta().unwrap();
        for g in [Group::A1, Group::A2] {
            prop_assert!((back.group(g).p01 - theta.group(g).p01).abs() < 1e-14);
            prop_assert!((back.group(g).p10 - theta.group(g).p10).abs() < 1e-14);
        }
        prop_assert!((theta.reparameterize().as_array()[3] - theta.delta()).abs() < 1e-14);
    }

    #[test]
    fn scores_sum_to_zero_at_the_mle(recs in records(400)) {
        let counts = count_cells(&recs);
        // with an empty cell the MLE sits on the boundary and the score need not vanish
        let interior = [counts.a1, counts.a2].iter().all(|g| g.n01 > 0 && g.n10 > 0 && g.ndot > 0);
        prop_assume!(interior);
        let theta = mle(&counts).unwrap();
        let mut sum = [0.0; 4];
        for r in &recs {
            let s = score_contribution(r, &theta).unwrap().0;
            (0..4).for_each(|j| sum[j] += s[j]);
        }
        prop_assert!(sum.iter().all(|x| x.abs() <= 1e-9 * recs.len() as f64), "{sum:?}");
    }

    #[test]
    fn mle_delta_matches_plug_in_rates(recs in records(400)) {
        let Ok(theta) = mle(&count_cells(&recs)) else { return Ok(()) };
        prop_assert!((theta.delta() - group_rates(&recs).delta()).abs() < 1e-12);
    }

    #[test]
    fn eigendecomposition_reconstructs(m in sym_matrix()) {
        let e = eigen_sym(&m);
        let mut r = SymMatrix4::zeros();
        for k in 0..4 {
            r.add_outer(&e.vector(k), e.values[k]);
        }
        let scale = m.norm_inf().max(1.0);
        for i in 0..4 {
            for j in 0..4 {
                prop_assert!((r.get(i, j) - m.get(i, j)).abs() <= 1e-12 * scale);
            }
        }
        prop_assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn inverse_square_root_whitens(m in sym_matrix(), shift in 0.5..3.0f64) {
        let mut pd = SymMatrix4::zeros();
        for (i, row) in m.to_full().iter().enumerate() {
            pd.add_outer(row, 1.0);
            pd.set(i, i, pd.get(i, i) + shift);
        }
        let r = inv_sqrt(&pd, 1e-12).unwrap().matrix.to_full();
        let prod = fairdiff::numerics::matmul(&fairdiff::numerics::matmul(&r, &pd.to_full()), &r);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((prod[i][j] - want).abs() < 1e-9, "{prod:?}");
            }
        }
    }

    #[test]
    fn statistic_is_nonnegative_and_label_free(
        recs in records(300),
        codes in prop::collection::vec(0u32..4, 300),
        perm in Just([0u32, 1, 2, 3]).prop_shuffle(),
        efficient in any::<bool>(),
    ) {
        let dec = if efficient { Decorrelation::Efficient } else { Decorrelation::Symmetric };
        let Ok(scores) = NodeScores::compute(&recs, 1e-10, dec) else { return Ok(()) };
        let codes: Vec<Option<u32>> = codes[..recs.len()].iter().map(|&c| Some(c)).collect();
        let relabelled: Vec<Option<u32>> = codes.iter().map(|c| c.map(|c| perm[c as usize])).collect();
        let a = SplitCandidate::from_codes(0, "c", CovariateKind::Categorical, &codes);
        let b = SplitCandidate::from_codes(0, "c", CovariateKind::Categorical, &relabelled);
        let (ta, da) = fairdiff::instability::score_statistic(&scores, &a);
        let (tb, db) = fairdiff::instability::score_statistic(&scores, &b);
        prop_assert!(ta >= 0.0);
        prop_assert_eq!(da, db);
        prop_assert!((ta - tb).abs() <= 1e-9 * ta.max(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn leaves_tile_the_sample(sc in scenario_strategy()) {
        let table = sc.generate().unwrap();
        let t = tree::prune(&grow(&table, PAIR, Metric::Fpr, &params()).unwrap(), 0.02);
        let leaves = t.leaves();
        for row in 0..table.len() {
            let hits = leaves.iter().filter(|l| l.predicate.matches(&table, row).unwrap()).count();
            prop_assert_eq!(hits, 1, "row {} lies in {} leaves", row, hits);
        }
        let total: u64 = leaves.iter().map(|l| l.n).sum();
        prop_assert_eq!(total, table.len() as u64);
    }

    #[test]
    fn children_partition_their_parent(sc in scenario_strategy()) {
        let table = sc.generate().unwrap();
        let t = grow(&table, PAIR, Metric::Accept, &params()).unwrap();
        for n in all_nodes(&t.root).into_iter().filter(|n| !n.children.is_empty()) {
            prop_assert_eq!(n.children.iter().map(|c| c.n).sum::<u64>(), n.n);
            prop_assert_eq!(n.children.iter().map(|c| c.n_cond()).sum::<u64>(), n.n_cond());
        }
    }

    #[test]
    fn larger_tau_never_adds_leaves(sc in scenario_strategy(), t1 in 0.0..0.2f64, t2 in 0.0..0.2f64) {
        let table = sc.generate().unwrap();
        let grown = grow(&table, PAIR, Metric::Fpr, &TreeParams { alpha: 0.9, min_node: 5, ..Default::default() }).unwrap();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let a = tree::prune(&grown, lo);
        let b = tree::prune(&grown, hi);
        prop_assert!(b.leaves().len() <= a.leaves().len());
        prop_assert!(a.leaves().len() <= grown.leaves().len());
        // pruning only flags; the grown structure is kept
        prop_assert_eq!(all_nodes(&b.root).len(), all_nodes(&grown.root).len());
    }

    #[test]
    fn report_columns_are_consistent(sc in scenario_strategy()) {
        let table = sc.generate().unwrap();
        let t = tree::prune(&grow(&table, PAIR, Metric::Fpr, &params()).unwrap(), 0.02);
        let report = DisparityReport::from_tree(&t, vec![]);
        for r in &report.rows {
            let (Some(m1a1), Some(m1a2), Some(m2a1), Some(m2a2)) = (r.rate_m1_a1, r.rate_m1_a2, r.rate_m2_a1, r.rate_m2_a2) else {
                continue;
            };
            let d1 = r.disparity_m1.unwrap();
            let d2 = r.disparity_m2.unwrap();
            prop_assert!((d1 - (m1a2 - m1a1)).abs() < 1e-12);
            prop_assert!((d2 - (m2a2 - m2a1)).abs() < 1e-12);
            prop_assert!((r.delta.unwrap() - (d2 - d1)).abs() < 1e-12);
        }
        prop_assert_eq!(report.leaf_rows().count(), t.leaves().len());
    }

    #[test]
    fn swapping_models_negates_every_delta(sc in scenario_strategy()) {
        let table = sc.generate().unwrap();
        let a = grow(&table, PAIR, Metric::Fpr, &params()).unwrap();
        let b = grow(&table.models_swapped(), PAIR, Metric::Fpr, &params()).unwrap();
        let (na, nb) = (all_nodes(&a.root), all_nodes(&b.root));
        prop_assert_eq!(na.len(), nb.len());
        for (x, y) in na.iter().zip(&nb) {
            prop_assert_eq!(&x.predicate, &y.predicate);
            if let (Some(dx), Some(dy)) = (x.delta, y.delta) {
                prop_assert!((dx + dy).abs() < 1e-12);
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Row {
    Good(bool, f64, f64, usize, usize),
    MissingPrediction,
    UnknownGroup,
    MissingOutcome,
}

fn row() -> impl Strategy<Value = Row> {
    prop_oneof![
        6 => (any::<bool>(), 0.0..10.0f64, 0.0..10.0f64, 0..2usize, 0..3usize).prop_map(|(y, a, b, g, x)| Row::Good(y, a, b, g, x)),
        1 => Just(Row::MissingPrediction),
        1 => Just(Row::UnknownGroup),
        1 => Just(Row::MissingOutcome),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ingestion_accounts_for_every_row(rows in prop::collection::vec(row(), 1..80)) {
        let mut csv = String::from("y,s1,s2,g,x\n");
        for r in &rows {
            csv.push_str(&match r {
                Row::Good(y, a, b, g, x) => format!("{},{a},{b},{},{}\n", *y as u8, ["w", "b"][*g], ["p", "q", "r"][*x]),
                Row::MissingPrediction => "1,,3,w,p\n".into(),
                Row::UnknownGroup => "0,1,2,h,q\n".into(),
                Row::MissingOutcome => ",1,2,b,r\n".into(),
            });
        }
        let cfg = AuditConfig::from_toml_str(
            r#"
            metric = "fpr"
            outcome = { column = "y", positive = "1" }
            model_a = { column = "s1", cutoff = 5 }
            model_b = { column = "s2", cutoff = 5 }
            sensitive = { column = "g", levels = ["w", "b"] }
            split = [{ name = "x" }]
            "#,
        )
        .unwrap();
        let res = fairdiff::table::ingest_bytes(csv.as_bytes(), None, &cfg);
        let has = |grp: usize| rows.iter().any(|r| matches!(r, Row::Good(_, _, _, g, _) if *g == grp));
        if !has(0) || !has(1) {
            // a configured level with no usable rows is a configuration error
            prop_assert!(matches!(res, Err(fairdiff::Error::Config(_))));
            return Ok(());
        }
        let table = res.unwrap();
        let good = rows.iter().filter(|r| matches!(r, Row::Good(..))).count();
        prop_assert_eq!(table.provenance.input_rows, rows.len());
        prop_assert_eq!(table.len() + table.provenance.rejected.len(), rows.len());
        prop_assert_eq!(table.len(), good);
    }
}
