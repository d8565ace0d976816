use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use varscore::fitness::*;
use varscore::ingest::{DmsAssay, DmsRecord, Taxon};
use varscore::structio::{AminoAcid, Position};

fn aa(i: usize) -> AminoAcid {
    AminoAcid::from_index(i).unwrap()
}

fn random_table(rng: &mut ChaCha8Rng, k: usize) -> Vec<Vec<Option<f64>>> {
    (0..20).map(|_| (0..k).map(|_| Some(rng.gen_range(-3.0..3.0))).collect()).collect()
}

fn zscore(raw: &[Vec<Option<f64>>]) -> DMatrix<f64> {
    let k = raw[0].len();
    let mut z = DMatrix::zeros(20, k);
    for c in 0..k {
        let col: Vec<f64> = raw.iter().map(|r| r[c].unwrap()).collect();
        let mu = col.iter().sum::<f64>() / 20.0;
        let sd = (col.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / 20.0).sqrt();
        for r in 0..20 {
            z[(r, c)] = (col[r] - mu) / sd;
        }
    }
    z
}

#[test]
fn pca_reconstruction_matches_svd_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    for _ in 0..5 {
        let raw = random_table(&mut rng, 40);
        let table = reduce_aaindex(&raw).unwrap();
        let z = zscore(&raw);
        let proj = DMatrix::from_fn(20, AAINDEX_DIM, |r, c| table.rows[r][c]);
        // best rank-19 error of Z is the sum of the squared trailing singular values
        let sv = z.clone().svd(false, false).singular_values;
        let mut s: Vec<f64> = sv.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        let oracle: f64 = s[AAINDEX_DIM..].iter().map(|x| x * x).sum();
        // projection onto our components: ‖Z‖² − ‖P‖² when P = Z V with orthonormal V
        let ours = z.norm_squared() - proj.norm_squared();
        assert!((ours - oracle).abs() < 1e-8 * z.norm_squared().max(1.0), "{ours} vs {oracle}");
        let variances: Vec<f64> = (0..AAINDEX_DIM).map(|c| proj.column(c).norm_squared()).collect();
        assert!(variances.windows(2).all(|w| w[0] >= w[1] - 1e-9));
    }
}

#[test]
fn orthogonal_input_is_reproduced_up_to_sign() {
    // Z-scored columns with distinct variances along orthogonal directions are
    // impossible after standardization, so use a 20×19 table whose
    // standardized columns are already mutually orthogonal.
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a = DMatrix::from_fn(20, 20, |_, _| rng.gen_range(-1.0..1.0));
    let centered = {
        let mut m = a.clone();
        for c in 0..20 {
            let mu = m.column(c).mean();
            m.column_mut(c).iter_mut().for_each(|x| *x -= mu);
        }
        m
    };
    let q = centered.qr().q();
    let raw: Vec<Vec<Option<f64>>> = (0..20).map(|r| (0..AAINDEX_DIM).map(|c| Some(q[(r, c)])).collect()).collect();
    let table = reduce_aaindex(&raw).unwrap();
    let z = zscore(&raw);
    // all eigenvalues tie, so only the Gram matrix is pinned down
    let proj = DMatrix::from_fn(20, AAINDEX_DIM, |r, c| table.rows[r][c]);
    let gram_a = &z * z.transpose();
    let gram_b = &proj * proj.transpose();
    assert!((gram_a - gram_b).norm() < 1e-8);
}

#[test]
fn aaindex_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    assert!(matches!(reduce_aaindex(&random_table(&mut rng, 18)), Err(FitnessError::Dimension(_))));
    let mut raw = random_table(&mut rng, 25);
    raw.iter_mut().for_each(|r| r[3] = Some(1.0));
    assert!(matches!(reduce_aaindex(&raw), Err(FitnessError::Dimension(_))));
    let mut text = String::from("aa,f1,f2\n");
    for i in 0..20 {
        text.push_str(&format!("{},{},NA\n", aa(i).code(), i));
    }
    let parsed = read_aaindex_csv(&text).unwrap();
    assert_eq!(parsed[5], vec![Some(5.0), None]);
}

fn normal_equation_oracle(x: &[Vec<f64>], y: &[f64], lambda: f64) -> (Vec<f64>, f64) {
    let n = x.len();
    let p = x[0].len();
    let xm: Vec<f64> = (0..p).map(|c| x.iter().map(|r| r[c]).sum::<f64>() / n as f64).collect();
    let ym = y.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, p, |r, c| x[r][c] - xm[c]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - ym));
    let a = xc.transpose() * &xc + DMatrix::identity(p, p) * lambda;
    let w = a.try_inverse().unwrap() * xc.transpose() * yc;
    let b = ym - w.iter().zip(&xm).map(|(w, m)| w * m).sum::<f64>();
    (w.iter().copied().collect(), b)
}

fn stationarity(x: &[Vec<f64>], y: &[f64], model: &RidgeModel) -> f64 {
    let n = x.len();
    let p = x[0].len();
    let xm: Vec<f64> = (0..p).map(|c| x.iter().map(|r| r[c]).sum::<f64>() / n as f64).collect();
    let ym = y.iter().sum::<f64>() / n as f64;
    let xc = DMatrix::from_fn(n, p, |r, c| x[r][c] - xm[c]);
    let yc = DVector::from_iterator(n, y.iter().map(|v| v - ym));
    let w = DVector::from_column_slice(&model.weights);
    let xty = xc.transpose() * yc;
    let lhs = xc.transpose() * &xc * &w + &w * model.lambda;
    (lhs - &xty).norm() / xty.norm().max(1e-300)
}

#[test]
fn ridge_matches_normal_equation_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let x: Vec<Vec<f64>> = (0..50).map(|_| (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = x.iter().map(|r| r.iter().sum::<f64>() + rng.gen_range(-0.1..0.1)).collect();
    let model = ridge_fit(&x, &y, 0.5).unwrap();
    let (w, b) = normal_equation_oracle(&x, &y, 0.5);
    for (a, e) in model.weights.iter().zip(&w) {
        assert!((a - e).abs() < 1e-8);
    }
    assert!((model.intercept - b).abs() < 1e-8);
    assert!(stationarity(&x, &y, &model) <= 1e-8);
}

#[test]
fn ridge_limits() {
    let x = vec![vec![1.0], vec![2.0], vec![3.0]];
    let exact = ridge_fit(&x, &[2.0, 4.0, 6.0], 0.0).unwrap();
    assert!((exact.weights[0] - 2.0).abs() < 1e-10 && exact.intercept.abs() < 1e-10);

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x: Vec<Vec<f64>> = (0..30).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let y: Vec<f64> = (0..30).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let shrunk = ridge_fit(&x, &y, 1e9).unwrap();
    assert!(shrunk.weights.iter().all(|w| w.abs() < 1e-6));

    let duplicated: Vec<Vec<f64>> = x.iter().map(|r| vec![r[0], r[0]]).collect();
    assert!(matches!(ridge_fit(&duplicated, &y, 0.0), Err(FitnessError::Singular(_))));
    assert!(ridge_fit(&duplicated, &y, 0.1).is_ok());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ridge_is_stationary(seed in 0u64..10_000, n in 2usize..40, p in 1usize..60, lambda in 0.01f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let model = ridge_fit(&x, &y, lambda).unwrap();
        prop_assert!(model.weights.iter().all(|w| w.is_finite()));
        prop_assert!(stationarity(&x, &y, &model) <= 1e-8);
    }
}

#[test]
fn baseline_equals_augmented_with_zero_score() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let wt: Vec<AminoAcid> = (0..8).map(|_| aa(rng.gen_range(0..20))).collect();
    let rows: Vec<(Position, AminoAcid, f64)> = (0..40)
        .map(|_| {
            let i = rng.gen_range(0..8);
            let m = aa((wt[i].index() + rng.gen_range(1..20)) % 20);
            (i as Position + 1, m, rng.gen_range(-1.0..1.0))
        })
        .collect();
    let features = |with_score: bool| -> Vec<Vec<f64>> {
        rows.iter()
            .map(|&(p, m, _)| {
                let mut f = embed(&wt, p, m, &EmbeddingKind::OneHot, if with_score { 1.0 } else { 0.0 }).unwrap();
                if !with_score {
                    f.pop();
                }
                f
            })
            .collect()
    };
    let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let zeroed: Vec<Vec<f64>> = features(false).into_iter().map(|mut f| {
        f.push(0.0);
        f
    }).collect();
    let base = ridge_fit(&features(false), &y, 1.0).unwrap();
    let aug = ridge_fit(&zeroed, &y, 1.0).unwrap();
    for (fb, fa) in features(false).iter().zip(&zeroed) {
        assert!((base.predict(fb) - aug.predict(fa)).abs() < 1e-10);
    }
}

/// Assay over `n` positions with every substitution measured and
/// fitness equal to a random per-mutation score.
fn sufficiency_case(seed: u64, n: usize) -> (DmsAssay, HashMap<(Position, AminoAcid), f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wildtype: Vec<AminoAcid> = (0..n).map(|_| aa(rng.gen_range(0..20))).collect();
    let mut records = Vec::new();
    let mut scores = HashMap::new();
    for (i, &w) in wildtype.iter().enumerate() {
        for m in 0..20 {
            if m == w.index() {
                continue;
            }
            let s: f64 = rng.gen_range(-2.0..2.0);
            scores.insert((i as Position + 1, aa(m)), s);
            records.push(DmsRecord {
                position: i as Position + 1,
                wildtype: w,
                mutant: aa(m),
                fitness: s,
            });
        }
    }
    let mut f: Vec<f64> = records.iter().map(|r| r.fitness).collect();
    f.sort_by(f64::total_cmp);
    let assay = DmsAssay {
        id: "sufficiency".into(),
        wildtype,
        records,
        wt_reference: f[f.len() / 2],
        taxon: Taxon::Unknown,
    };
    (assay, scores)
}

#[test]
fn score_feature_is_sufficient() {
    let (assay, scores) = sufficiency_case(1, 20);
    let config = CurveConfig {
        sizes: vec![24, 48, 96, 144],
        repeats: 5,
        ..CurveConfig::default()
    };
    let curve = learning_curve(&assay, &scores, &EmbeddingKind::OneHot, &config).unwrap();
    assert_eq!(curve.n_records, 380);
    assert_eq!(curve.n_test, 76);
    for &size in &config.sizes {
        let aug = curve.aggregate(ModelVariant::Augmented, size, CurveMetric::Spearman).unwrap();
        let base = curve.aggregate(ModelVariant::Baseline, size, CurveMetric::Spearman).unwrap();
        assert!(aug.mean >= 0.99, "size {size}: {}", aug.mean);
        assert!(base.mean < aug.mean);
    }
}

#[test]
fn curves_are_deterministic_and_size_order_free() {
    let (assay, scores) = sufficiency_case(2, 10);
    let config = CurveConfig {
        sizes: vec![24, 48, 96],
        repeats: 3,
        ..CurveConfig::default()
    };
    let a = learning_curve(&assay, &scores, &EmbeddingKind::OneHot, &config).unwrap();
    let b = learning_curve(&assay, &scores, &EmbeddingKind::OneHot, &config).unwrap();
    assert_eq!(a, b);
    let reversed = CurveConfig {
        sizes: vec![96, 24, 48],
        ..config.clone()
    };
    let c = learning_curve(&assay, &scores, &EmbeddingKind::OneHot, &reversed).unwrap();
    assert_eq!(a.aggregates, c.aggregates);
    assert_eq!(
        a.aggregate_csv(ModelVariant::Augmented).lines().count(),
        1 + 3 * CurveMetric::ALL.len()
    );

    let too_big = CurveConfig {
        sizes: vec![500],
        ..config
    };
    match learning_curve(&assay, &scores, &EmbeddingKind::OneHot, &too_big) {
        Err(FitnessError::SizeTooLarge { assay, size, .. }) => assert_eq!((assay.as_str(), size), ("sufficiency", 500)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn score_file_round_trip() {
    let parsed = read_score_file("mutant,score\nA24G,1.5\nK3P,-0.25\n").unwrap();
    assert_eq!(parsed[&(24, aa(5))], 1.5);
    assert_eq!(parsed.len(), 2);
    assert!(read_score_file("mutant,score\nZ24G,1\n").is_err());
}
