use std::io::Write;

use focal_core::config::{load_dataset, prepare_splits};
use focal_core::data::{decode_cache, encode_cache};
use focal_core::ExperimentConfig;

fn csv_config(dir: &tempfile::TempDir) -> ExperimentConfig {
    let path = dir.path().join("people.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(f, "age,hours,job,sex,income").unwrap();
    for i in 0..200 {
        let job = ["clerk", "smith", "cook"][i % 3];
        let sex = ["F", "M"][(i / 3) % 2];
        let income = if (i * 7) % 5 < 2 { ">50K" } else { "<=50K" };
        writeln!(f, "{},{},{job},{sex},{income}", 20 + (i * 37) % 50, 10 + (i * 13) % 40).unwrap();
    }
    let text = serde_json::json!({
        "seed": 4,
        "dataset": {"csv": {"path": path, "schema": {
            "numeric": ["age", "hours"],
            "categorical": ["job"],
            "target": "income",
            "target_positive": [">50K"],
            "sensitive": "sex"
        }}}
    });
    ExperimentConfig::from_json(&text.to_string()).unwrap()
}

#[test]
fn csv_splits_use_training_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = csv_config(&dir);
    let raw = load_dataset(&cfg).unwrap();
    let splits = prepare_splits(&cfg).unwrap();

    for c in 0..2 {
        let col = splits.train.features.column(c);
        let n = col.len() as f64;
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-12, "column {c} mean {mean}");
        assert!((var - 1.0).abs() < 1e-12, "column {c} variance {var}");

        // Recover the affine map from the train split and check it on test.
        let raw_col = |ds: &focal_core::LabeledDataset| -> Vec<f64> { ds.ids.iter().map(|&i| raw.features[[i, c]]).collect() };
        let train_raw = raw_col(&splits.train);
        let m = train_raw.iter().sum::<f64>() / n;
        let s = (train_raw.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        for (r, v) in raw_col(&splits.test).into_iter().enumerate() {
            assert!((splits.test.features[[r, c]] - (v - m) / s).abs() < 1e-12);
        }
    }
    // One-hot columns are left alone.
    assert!(splits.train.features.column(2).iter().all(|&v| v == 0.0 || v == 1.0));
}

#[test]
fn synthetic_cache_round_trip() {
    let cfg = ExperimentConfig::from_json(
        r#"{"seed": 1, "dataset": {"synthetic": {"n_super": 2, "n_sub_per_super": 3, "dim": 4, "samples_per_sub": 5}}}"#,
    )
    .unwrap();
    let ds = load_dataset(&cfg).unwrap();
    let bytes = encode_cache(&ds);
    assert_eq!(decode_cache(&bytes).unwrap(), ds);
    assert!(decode_cache(&bytes[..bytes.len() - 1]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(decode_cache(&extra).is_err());
}

#[test]
fn headerless_csv_with_named_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("adult.data");
    std::fs::write(
        &path,
        "39, State-gov, Male, <=50K\n50, ?, Female, >50K\n38, Private, Female, >50K\n\n",
    )
    .unwrap();
    let schema: focal_core::data::TabularSchema = serde_json::from_value(serde_json::json!({
        "numeric": ["age"],
        "categorical": ["workclass"],
        "target": "income",
        "target_positive": [">50K", ">50K."],
        "sensitive": "sex",
        "column_names": ["age", "workclass", "sex", "income"]
    }))
    .unwrap();
    let load = focal_core::data::read_tabular_csv(&path, &schema).unwrap();
    assert_eq!(load.dropped_rows, 1);
    assert_eq!(load.dataset.target_labels, [0, 1]);
    assert_eq!(load.dataset.sensitive_labels, [0, 1]);
    assert_eq!(load.feature_names, ["age", "workclass=State-gov", "workclass=Private"]);
}
