use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use varscore::ingest::{generate_synthetic_res, DmsAssay, DmsRecord, Taxon};
use varscore::metrics::*;
use varscore::scorer::{FeatureSpec, ScorerParams};
use varscore::structio::{AminoAcid, Position};
use varscore::variants::RankedMutation;

/// Ranks by counting: rank(x) = #{y < x} + (#{y == x} + 1) / 2.
fn naive_ranks(xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|x| {
            let below = xs.iter().filter(|y| *y < x).count() as f64;
            let equal = xs.iter().filter(|y| *y == x).count() as f64;
            below + (equal + 1.0) / 2.0
        })
        .collect()
}

fn naive_pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn naive_spearman(a: &[f64], b: &[f64]) -> f64 {
    naive_pearson(&naive_ranks(a), &naive_ranks(b))
}

#[test]
fn spearman_matches_oracle_with_ties() {
    let xs = [1.0, 2.0, 2.0, 3.0];
    let ys = [1.0, 3.0, 2.0, 4.0];
    assert!((spearman(&xs, &ys).unwrap() - naive_spearman(&xs, &ys)).abs() < 1e-12);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let n = rng.gen_range(3..60);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0..10) as f64).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if let Ok(r) = spearman(&xs, &ys) {
            assert!((r - naive_spearman(&xs, &ys)).abs() < 1e-12);
        }
    }
}

fn aa(i: usize) -> AminoAcid {
    AminoAcid::from_index(i).unwrap()
}

fn random_assay_and_ranking(rng: &mut ChaCha8Rng) -> (DmsAssay, Vec<RankedMutation>) {
    let n = rng.gen_range(3..20);
    let wildtype: Vec<AminoAcid> = (0..n).map(|_| aa(rng.gen_range(0..20))).collect();
    let mut records = Vec::new();
    for (i, &wt) in wildtype.iter().enumerate() {
        for m in 0..20 {
            if m != wt.index() && rng.gen_bool(0.3) {
                records.push(DmsRecord {
                    position: i as Position + 1,
                    wildtype: wt,
                    mutant: aa(m),
                    fitness: rng.gen_range(-2.0..2.0),
                });
            }
        }
    }
    let assay = DmsAssay {
        id: "r".into(),
        wildtype,
        records: records.clone(),
        wt_reference: rng.gen_range(-0.5..0.5),
        taxon: Taxon::Human,
    };
    let take = rng.gen_range(0..=records.len());
    let ranked = records[..take]
        .iter()
        .enumerate()
        .map(|(k, r)| RankedMutation {
            rank: k + 1,
            position: r.position,
            wildtype: r.wildtype,
            mutant: r.mutant,
            score: rng.gen_range(-3.0..3.0),
            self_score: 0.0,
        })
        .collect();
    (assay, ranked)
}

#[test]
fn report_matches_from_scratch_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let (assay, ranked) = random_assay_and_ranking(&mut rng);
        let report = evaluate_ranking(&ranked, &assay, RecallDenominator::Assay).unwrap();
        let fit = |r: &RankedMutation| {
            assay.records.iter().find(|x| x.position == r.position && x.mutant == r.mutant).unwrap().fitness
        };
        let wt = assay.wt_reference;
        let top = ranked.len().min(10);
        let hits = ranked[..top].iter().filter(|r| fit(r) > wt).count() as f64;
        let total_better = assay.records.iter().filter(|r| r.fitness > wt).count() as f64;
        let precision = if top == 0 { 0.0 } else { hits / top as f64 };
        let recall = if total_better == 0.0 { 0.0 } else { hits / total_better };
        assert!((report.top10_precision - precision).abs() < 1e-12);
        assert!((report.top10_recall - recall).abs() < 1e-12);
        let pick = |keep: &dyn Fn(f64) -> bool| -> Option<f64> {
            let (s, f): (Vec<f64>, Vec<f64>) = ranked.iter().filter(|r| keep(fit(r))).map(|r| (r.score, fit(r))).unzip();
            (s.len() >= 2).then(|| naive_spearman(&s, &f))
        };
        for (got, want) in [
            (report.spearman_all, pick(&|_| true)),
            (report.spearman_better_wt, pick(&|f| f > wt)),
            (report.spearman_worse_wt, pick(&|f| f < wt)),
        ] {
            match (got, want) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12),
                (None, None) => {}
                (a, b) => panic!("{a:?} vs {b:?}"),
            }
        }
        assert!(report.n_better + report.n_worse <= report.n_total);
    }
}

#[test]
fn precision_and_recall_examples() {
    let wt = aa(0);
    let records: Vec<DmsRecord> = (1..=40)
        .map(|p| DmsRecord {
            position: p,
            wildtype: wt,
            mutant: aa(1),
            fitness: if p <= 20 { 1.0 } else { -1.0 },
        })
        .collect();
    let assay = DmsAssay {
        id: "x".into(),
        wildtype: vec![wt; 40],
        records: records.clone(),
        wt_reference: 0.0,
        taxon: Taxon::Unknown,
    };
    let ranked = |order: &[Position]| -> Vec<RankedMutation> {
        order
            .iter()
            .enumerate()
            .map(|(k, &p)| RankedMutation {
                rank: k + 1,
                position: p,
                wildtype: wt,
                mutant: aa(1),
                score: -(k as f64),
                self_score: 0.0,
            })
            .collect()
    };
    let good = evaluate_ranking(&ranked(&(1..=12).collect::<Vec<_>>()), &assay, RecallDenominator::Assay).unwrap();
    assert_eq!((good.top10_precision, good.top10_recall), (1.0, 0.5));
    let bad = evaluate_ranking(&ranked(&(21..=35).collect::<Vec<_>>()), &assay, RecallDenominator::Assay).unwrap();
    assert_eq!((bad.top10_precision, bad.top10_recall), (0.0, 0.0));
    let narrow = evaluate_ranking(&ranked(&[1, 2, 21]), &assay, RecallDenominator::RankedPositions).unwrap();
    assert_eq!(narrow.n_better_reference, 2);
    assert_eq!(narrow.top10_recall, 1.0);
    let missing = ranked(&[1]).into_iter().map(|mut r| {
        r.mutant = aa(5);
        r
    });
    assert!(matches!(
        evaluate_ranking(&missing.collect::<Vec<_>>(), &assay, RecallDenominator::Assay),
        Err(MetricsError::MissingMutation(_))
    ));
}

#[test]
fn confusion_matrix_properties() {
    let data = generate_synthetic_res(60, 3);
    let params = ScorerParams::init(FeatureSpec::default(), 1).unwrap();
    let c = confusion_matrix(&params, &data).unwrap();
    assert_eq!(c.iter().flatten().sum::<u64>(), 60);
    for (i, row) in c.iter().enumerate() {
        let expected = data.iter().filter(|m| m.true_label.index() == i).count() as u64;
        assert_eq!(row.iter().sum::<u64>(), expected);
    }
    let perfect = confusion_from_pairs(data.iter().map(|m| (m.true_label, m.true_label)));
    for i in 0..20 {
        for j in 0..20 {
            assert!(i == j || perfect[i][j] == 0);
        }
    }
}

#[test]
fn blosum_comparison_matches_manual_flattening() {
    let b = blosum62();
    // equal row sums, off-diagonals a monotone transform of the scores
    let mut c = [[0u64; 20]; 20];
    for i in 0..20 {
        let mut row_sum = 0;
        for j in 0..20 {
            if i != j {
                c[i][j] = (b[i][j] + 5) as u64 * 3;
                row_sum += c[i][j];
            }
        }
        c[i][i] = 1000 - row_sum;
    }
    assert!((compare_to_blosum62(&c, &b).unwrap() - 1.0).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let mut c = [[0u64; 20]; 20];
        c.iter_mut().flatten().for_each(|x| *x = rng.gen_range(0..30));
        let mut freq = Vec::new();
        let mut subst = Vec::new();
        for i in 0..20 {
            let total: u64 = c[i].iter().sum();
            for j in 0..20 {
                if i != j && total > 0 {
                    freq.push(c[i][j] as f64 / total as f64);
                    subst.push(b[i][j] as f64);
                }
            }
        }
        assert!((compare_to_blosum62(&c, &b).unwrap() - naive_spearman(&freq, &subst)).abs() < 1e-12);
    }
}

#[test]
fn cross_model_self_and_negated() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (assay, ranked) = loop {
        let (a, r) = random_assay_and_ranking(&mut rng);
        if r.len() >= 5 {
            break (a, r);
        }
    };
    let negated: Vec<RankedMutation> = ranked.iter().map(|r| RankedMutation { score: -r.score, ..*r }).collect();
    assert!((cross_model_correlation(&ranked, &ranked, &assay, CorrelationSubset::All).unwrap() - 1.0).abs() < 1e-12);
    assert!((cross_model_correlation(&ranked, &negated, &assay, CorrelationSubset::All).unwrap() + 1.0).abs() < 1e-12);
    assert!(matches!(
        cross_model_correlation(&ranked[..1], &ranked, &assay, CorrelationSubset::All),
        Err(MetricsError::TooFew(1))
    ));
}

proptest! {
    #[test]
    fn spearman_invariant_under_monotone_maps(
        v in proptest::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..40),
        knots in proptest::collection::vec(0.1f64..5.0, 4),
    ) {
        let xs: Vec<f64> = v.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = v.iter().map(|p| p.1).collect();
        // piecewise-linear strictly increasing map with breakpoints at -50, 0, 50
        let f = |x: f64| {
            let mut y = 0.0;
            let breaks = [-1e9, -50.0, 0.0, 50.0, 1e9];
            for k in 0..4 {
                let lo = breaks[k];
                let hi = breaks[k + 1];
                y += knots[k] * (x.clamp(lo, hi) - lo);
            }
            y
        };
        let mapped: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        if let (Ok(a), Ok(b)) = (spearman(&xs, &ys), spearman(&mapped, &ys)) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn report_ignores_assay_row_order(seed in 0u64..500) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (mut assay, ranked) = random_assay_and_ranking(&mut rng);
        let a = evaluate_ranking(&ranked, &assay, RecallDenominator::Assay).unwrap();
        assay.records.reverse();
        let b = evaluate_ranking(&ranked, &assay, RecallDenominator::Assay).unwrap();
        prop_assert_eq!(a, b);
    }
}
