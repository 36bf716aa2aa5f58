use proptest::prelude::*;
use shield_core::detectors::{
    average_path_length, gbdt_fit, isoforest_fit, knn_fit, neural_fit, ocsvm_fit, quota_flags,
    threshold_flags, GbdtParams, IsoForestParams, NeuralParams, TrainedModel,
};
use shield_core::rng::SplitMix64;
use shield_core::{DetectorSpec, Family, FeatureMatrix, Preset};

/// Two Gaussian blobs; label 1 marks the shifted one.
fn blobs(seed: u64, n: usize, d: usize, shift: f64) -> (FeatureMatrix, Vec<u8>) {
    let mut rng = SplitMix64::new(seed);
    let y: Vec<u8> = (0..n).map(|_| u8::from(rng.bernoulli(0.25))).collect();
    let mut values = Vec::with_capacity(n * d);
    for &l in &y {
        for _ in 0..d {
            values.push(rng.normal(0.0, 1.0) + shift * f64::from(l));
        }
    }
    let names = (0..d).map(|i| format!("x{i}")).collect();
    (FeatureMatrix::new(names, n, values).unwrap(), y)
}

fn small_spec(family: Family) -> DetectorSpec {
    let mut s = DetectorSpec::preset(family, Preset::Table3).with_seed(3);
    s.epochs = 15;
    s.n_rounds = 30;
    s
}

#[test]
fn every_family_is_deterministic() {
    let (x, y) = blobs(1, 400, 4, 2.0);
    for family in Family::ALL {
        let spec = small_spec(family);
        let a = TrainedModel::fit(&spec, &x, &y).unwrap();
        let b = TrainedModel::fit(&spec, &x, &y).unwrap();
        assert_eq!(a, b, "{family}");
        assert_eq!(a.score(&x).unwrap(), b.score(&x).unwrap(), "{family}");
    }
}

#[test]
fn saved_models_score_identically() {
    let (x, y) = blobs(2, 300, 3, 2.0);
    let dir = tempfile::tempdir().unwrap();
    for family in Family::ALL {
        let m = TrainedModel::fit(&small_spec(family), &x, &y).unwrap();
        let path = dir.path().join(format!("{family}.json"));
        m.save(&path).unwrap();
        let back = TrainedModel::load(&path).unwrap();
        assert_eq!(m.score(&x).unwrap(), back.score(&x).unwrap(), "{family}");
    }
}

#[test]
fn flipping_labels_inverts_supervised_flags() {
    let (x, y) = blobs(4, 500, 3, 1.0);
    let flipped: Vec<u8> = y.iter().map(|v| 1 - v).collect();
    for family in [Family::Gbdt, Family::Knn] {
        let spec = small_spec(family);
        let a = TrainedModel::fit(&spec, &x, &y).unwrap();
        let b = TrainedModel::fit(&spec, &x, &flipped).unwrap();
        let (sa, sb) = (a.score(&x).unwrap(), b.score(&x).unwrap());
        let (fa, fb) = (a.flag(&sa), b.flag(&sb));
        for i in 0..sa.len() {
            assert!((sa[i] + sb[i] - 1.0).abs() <= 1e-9, "{family} row {i}");
            if (sa[i] - 0.5).abs() > 1e-9 {
                assert_eq!(fa[i], 1 - fb[i], "{family} row {i}");
            }
        }
    }
}

#[test]
fn gbdt_training_loss_never_increases() {
    let (x, y) = blobs(5, 600, 5, 0.7);
    let m = gbdt_fit(
        &x,
        &y,
        &GbdtParams { learning_rate: 0.1, max_depth: 4, n_rounds: 60, lambda: 1.0 },
    )
    .unwrap();
    assert_eq!(m.training_loss.len(), 61);
    for w in m.training_loss.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{} -> {}", w[0], w[1]);
    }
    assert!(m.training_loss.last().unwrap() < &m.training_loss[0]);
}

#[test]
fn neural_training_loss_never_increases() {
    let (x, _) = blobs(6, 400, 6, 0.0);
    for variational in [false, true] {
        let m = neural_fit(
            &x,
            &NeuralParams {
                variational,
                hidden: 8,
                latent: 2,
                epochs: 30,
                batch_size: 32,
                learning_rate: 0.01,
                seed: 9,
            },
        )
        .unwrap();
        for w in m.training_loss.windows(2) {
            assert!(w[1] <= w[0], "{} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn isolation_scores_are_probabilities_ordered_by_depth() {
    let (x, _) = blobs(7, 500, 3, 0.0);
    let m = isoforest_fit(
        &x,
        &IsoForestParams { n_trees: 50, subsample_size: 128, contamination: 0.1, seed: 1 },
    )
    .unwrap();
    let s = m.score(&x);
    assert!(s.iter().all(|&v| v > 0.0 && v < 1.0));
    let depth: Vec<f64> = x.rows().map(|r| m.mean_path_length(r)).collect();
    for i in 0..s.len() {
        for j in 0..s.len() {
            if depth[i] < depth[j] {
                assert!(s[i] > s[j]);
            }
        }
    }
    assert_eq!(average_path_length(2), 1.0);
}

#[test]
fn ocsvm_ignores_training_row_order() {
    let (x, _) = blobs(8, 250, 3, 0.0);
    let (probe, _) = blobs(80, 60, 3, 0.0);
    let base = ocsvm_fit(&x, 0.2, None).unwrap().score(&probe).unwrap();
    let mut order: Vec<usize> = (0..x.n_rows()).collect();
    SplitMix64::new(3).shuffle(&mut order);
    let moved = ocsvm_fit(&x.select_rows(&order), 0.2, None)
        .unwrap()
        .score(&probe)
        .unwrap();
    for (a, b) in base.iter().zip(&moved) {
        assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    }
}

/// Fraction of anomalous labels among the `k` nearest rows by exhaustive search.
fn knn_oracle(train: &FeatureMatrix, y: &[u8], q: &[f64], k: usize) -> f64 {
    let mut d: Vec<(f64, usize)> = train
        .rows()
        .enumerate()
        .map(|(i, r)| (r.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(), i))
        .collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d[..k].iter().filter(|(_, i)| y[*i] == 1).count() as f64 / k as f64
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn knn_matches_exhaustive_search(seed in any::<u64>(), d in 1usize..8, k in 1usize..9) {
        let (x, y) = blobs(seed, 300, d, 1.0);
        let (q, _) = blobs(seed ^ 1, 40, d, 1.0);
        let m = knn_fit(&x, &y, k).unwrap();
        let got = m.score(&q).unwrap();
        for (i, row) in q.rows().enumerate() {
            prop_assert_eq!(got[i], knn_oracle(&x, &y, row, k));
        }
    }

    #[test]
    fn percentile_flags_respect_the_fraction(
        scores in prop::collection::vec(-1e3f64..1e3, 1..500),
        p in 0f64..100.0,
    ) {
        let n = scores.len();
        let (t, flags) = threshold_flags(&scores, p).unwrap();
        let flagged = flags.iter().filter(|&&f| f == 1).count();
        let rank = ((p * n as f64) / 100.0).ceil().max(1.0) as usize;
        prop_assert!(flagged <= n - rank);
        let mut distinct = scores.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() == n {
            prop_assert_eq!(flagged, n - rank);
        }
        for (s, f) in scores.iter().zip(&flags) {
            prop_assert_eq!(*f == 1, *s > t);
        }
    }

    #[test]
    fn quota_flags_exactly_the_quota(scores in prop::collection::vec(-10f64..10.0, 1..400), frac in 0f64..=1.0) {
        let flags = quota_flags(&scores, frac).unwrap();
        let quota = (frac * scores.len() as f64).round() as usize;
        prop_assert_eq!(flags.iter().filter(|&&f| f == 1).count(), quota);
        let min_flagged = scores.iter().zip(&flags).filter(|(_, &f)| f == 1).map(|(s, _)| *s).fold(f64::INFINITY, f64::min);
        let max_clear = scores.iter().zip(&flags).filter(|(_, &f)| f == 0).map(|(s, _)| *s).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min_flagged >= max_clear);
    }
}

#[test]
fn detector_errors_are_typed() {
    let (x, y) = blobs(9, 50, 2, 1.0);
    let mut bad = small_spec(Family::Knn);
    bad.k = 51;
    assert!(TrainedModel::fit(&bad, &x, &y).is_err());
    let mut bad = small_spec(Family::Ocsvm);
    bad.nu = 1.5;
    assert!(matches!(
        TrainedModel::fit(&bad, &x, &y),
        Err(shield_core::Error::Config(_))
    ));
    let all_anomalous = vec![1u8; 50];
    assert!(matches!(
        TrainedModel::fit(&small_spec(Family::Vae), &x, &all_anomalous),
        Err(shield_core::Error::SingleClass)
    ));
}
