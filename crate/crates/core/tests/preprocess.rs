use proptest::prelude::*;
use shield_core::ingest::{generate_attack_data, generate_device_data, GenConfig};
use shield_core::preprocess::{
    minmax_scale, rolling_deviation, standard_scale, Dataset, FeatureConfig, Preprocessor,
};
use shield_core::FeatureMatrix;

/// Matrices with a few columns of varied scale, some of them constant.
fn matrices() -> impl Strategy<Value = FeatureMatrix> {
    (2usize..60, 1usize..6).prop_flat_map(|(rows, cols)| {
        prop::collection::vec(
            prop_oneof![
                3 => prop::collection::vec(-1e4f64..1e4, rows),
                1 => (-50f64..50.0).prop_map(move |c| vec![c; rows]),
            ],
            cols,
        )
        .prop_map(move |columns| {
            FeatureMatrix::from_columns(
                columns
                    .into_iter()
                    .enumerate()
                    .map(|(i, c)| (format!("c{i}"), c.into_iter().map(Some).collect()))
                    .collect(),
            )
            .unwrap()
        })
    })
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn standardized_columns_have_zero_mean_unit_std(m in matrices()) {
        let (z, _) = standard_scale(&m, None).unwrap();
        for c in 0..z.n_cols() {
            let col = z.column(c);
            let (mean, std) = mean_std(&col);
            prop_assert!(mean.abs() <= 1e-9);
            let constant = m.column(c).windows(2).all(|w| w[0] == w[1]);
            if constant {
                prop_assert!(col.iter().all(|&v| v == 0.0));
            } else {
                prop_assert!((std - 1.0).abs() <= 1e-9, "std {std}");
            }
        }
    }

    #[test]
    fn minmax_output_is_in_unit_interval(m in matrices()) {
        let (z, stats) = minmax_scale(&m, None).unwrap();
        prop_assert!(z.values().iter().all(|v| (0.0..=1.0).contains(v)));
        // values outside the fitted range are clipped
        let shifted = m.map_present(|_, x| x * 3.0 + 1e5);
        let (w, _) = minmax_scale(&shifted, Some(&stats)).unwrap();
        prop_assert!(w.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn rescaling_a_scaled_matrix_changes_nothing(m in matrices()) {
        let (z, _) = standard_scale(&m, None).unwrap();
        let (zz, _) = standard_scale(&z, None).unwrap();
        for (a, b) in z.values().iter().zip(zz.values()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
        let (u, _) = minmax_scale(&m, None).unwrap();
        let (uu, _) = minmax_scale(&u, None).unwrap();
        for (a, b) in u.values().iter().zip(uu.values()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn rolling_deviation_ignores_level_shifts(
        series in prop::collection::vec(-500f64..500.0, 1..80),
        shift in -1e3f64..1e3,
        window in 1usize..15,
    ) {
        let base = rolling_deviation(&series, window).unwrap();
        let moved: Vec<f64> = series.iter().map(|x| x + shift).collect();
        let other = rolling_deviation(&moved, window).unwrap();
        for (a, b) in base.iter().zip(&other) {
            prop_assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
        }
        prop_assert!(base.iter().all(|&d| d >= 0.0));
        prop_assert_eq!(base[0], 0.0);
    }
}

fn flip(data: &Dataset) -> Dataset {
    match data {
        Dataset::Device(r) => Dataset::Device(
            r.iter().cloned().map(|mut r| { r.label = 1 - r.label; r }).collect(),
        ),
        Dataset::Cyber(r) => Dataset::Cyber(
            r.iter().cloned().map(|mut r| { r.label = 1 - r.label; r }).collect(),
        ),
    }
}

#[test]
fn features_never_depend_on_labels() {
    let cfg = GenConfig::new(2000, 0.2, 8);
    for data in [
        Dataset::Device(generate_device_data(&cfg).unwrap()),
        Dataset::Cyber(generate_attack_data(&cfg).unwrap()),
    ] {
        let rows: Vec<usize> = (0..data.len()).step_by(3).collect();
        let fc = FeatureConfig::default();
        let a = Preprocessor::fit(&data, &rows, &fc).unwrap().transform(&data).unwrap();
        let flipped = flip(&data);
        let b = Preprocessor::fit(&flipped, &rows, &fc).unwrap().transform(&flipped).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn transform_is_repeatable_and_fully_imputed() {
    let data = Dataset::Device(generate_device_data(&GenConfig::new(3000, 0.2, 9)).unwrap());
    let rows: Vec<usize> = (0..data.len()).collect();
    let p = Preprocessor::fit(&data, &rows, &FeatureConfig::default()).unwrap();
    let a = p.transform(&data).unwrap();
    assert_eq!(a, p.transform(&data).unwrap());
    assert!(!a.has_missing());
    assert!(a.values().iter().all(|v| v.is_finite()));
    for name in ["HRD", "BPD_Systolic", "BPD_Diastolic", "hour_of_day", "day_of_week"] {
        assert!(a.column_index(name).is_ok(), "missing {name}");
    }
}

#[test]
fn transform_rejects_the_other_task() {
    let cfg = GenConfig::new(200, 0.2, 1);
    let dev = Dataset::Device(generate_device_data(&cfg).unwrap());
    let net = Dataset::Cyber(generate_attack_data(&cfg).unwrap());
    let rows: Vec<usize> = (0..200).collect();
    let p = Preprocessor::fit(&dev, &rows, &FeatureConfig::default()).unwrap();
    assert!(p.transform(&net).is_err());
}
