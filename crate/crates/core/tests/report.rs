use std::fs;
use std::path::Path;

use cqlab_core::report::{
    compute_metrics, emit_csv, emit_ppm_overlay, emit_svg_plot, pct, roc_points, run_compare,
    run_experiment, selftest, ExperimentConfig, ModelKind, Series,
};
use cqlab_core::data::LabeledImage;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn read_csv(bytes: &[u8]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn csv_round_trips_random_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let alphabet = ['a', 'b', ',', '"', '\n', ' ', '7', '\r', 'é'];
    let rows: Vec<Vec<String>> = (0..100)
        .map(|_| {
            (0..3)
                .map(|_| {
                    let n = rng.random_range(1..8);
                    (0..n).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect()
                })
                .collect()
        })
        .collect();
    let bytes = emit_csv(&["x", "y", "z"], &rows).unwrap();
    assert!(bytes.ends_with(b"\n"));
    let (header, back) = read_csv(&bytes);
    assert_eq!(header, ["x", "y", "z"]);
    assert_eq!(back, rows);
}

#[test]
fn svg_is_xml_with_one_polyline_per_series() {
    let s = [
        Series::new("cqural", vec![(1.0, 0.7), (2.0, 0.5), (3.0, 0.4)]),
        Series::new("cnn <baseline>", vec![(1.0, 0.6), (2.0, 0.3), (3.0, 0.35)]),
    ];
    let svg = String::from_utf8(emit_svg_plot(&s, 640, 400, "loss & accuracy").unwrap()).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let polylines = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
    assert_eq!(polylines, 2);
    let texts: Vec<&str> = doc.descendants().filter(|n| n.has_tag_name("text")).filter_map(|n| n.text()).collect();
    assert!(texts.contains(&"cqural") && texts.contains(&"cnn <baseline>"));

    let single = [Series::new("one", vec![(5.0, 2.0)])];
    let svg = String::from_utf8(emit_svg_plot(&single, 400, 300, "single").unwrap()).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let c = doc.descendants().find(|n| n.has_tag_name("circle")).unwrap();
    let cx: f64 = c.attribute("cx").unwrap().parse().unwrap();
    let cy: f64 = c.attribute("cy").unwrap().parse().unwrap();
    assert!((cx - (60.0 + 320.0 / 2.0)).abs() < 0.01);
    assert!((cy - (40.0 + 220.0 / 2.0)).abs() < 0.01);
}

#[test]
fn ppm_overlay_header_and_pure_heat() {
    let im = LabeledImage::new((0..20).map(f64::from).collect(), [1, 4, 5], 1, 0).unwrap();
    let out = emit_ppm_overlay(&im, &[1.0; 20], 1.0).unwrap();
    assert_eq!(&out[..11], b"P6\n5 4\n255\n");
    assert!(out[11..].chunks(3).all(|p| p == [255, 255, 0]));
    let gray = emit_ppm_overlay(&im, &[0.3; 20], 0.0).unwrap();
    assert!(gray[11..].chunks(3).all(|p| p[0] == p[1] && p[1] == p[2]));
    assert!(emit_ppm_overlay(&im, &[0.0; 16], 0.5).is_err());
}

#[test]
fn random_scores_give_chance_auc() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let truths: Vec<usize> = (0..2000).map(|i| i % 2).collect();
    let scores: Vec<f64> = (0..2000).map(|_| rng.random()).collect();
    let roc = roc_points(&scores, &truths).unwrap();
    assert!((roc.auc - 0.5).abs() < 0.05, "auc {}", roc.auc);
}

proptest! {
    #[test]
    fn roc_is_monotone(pairs in proptest::collection::vec((0.0f64..1.0, 0usize..2), 2..80)) {
        let (scores, mut truths): (Vec<f64>, Vec<usize>) = pairs.into_iter().unzip();
        truths[0] = 0;
        truths[1] = 1;
        let roc = roc_points(&scores, &truths).unwrap();
        prop_assert_eq!(roc.points[0], (0.0, 0.0));
        prop_assert_eq!(*roc.points.last().unwrap(), (1.0, 1.0));
        for w in roc.points.windows(2) {
            prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
        prop_assert!((0.0..=1.0).contains(&roc.auc));
    }

    #[test]
    fn confusion_total_and_trace(pairs in proptest::collection::vec((0usize..2, 0usize..2), 1..100)) {
        let (p, t): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
        let m = compute_metrics(&p, &t).unwrap();
        let c = m.confusion;
        prop_assert_eq!(c[0][0] + c[0][1] + c[1][0] + c[1][1], p.len());
        prop_assert!((m.accuracy - (c[0][0] + c[1][1]) as f64 / p.len() as f64).abs() < 1e-15);
    }
}

#[test]
fn selftest_passes() {
    for c in selftest() {
        assert!(c.passed, "{}: {}", c.name, c.detail);
    }
}

fn tiny_config(out: &Path) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{
            "dataset": "synthetic",
            "synthetic": {{"height": 8, "width": 8}},
            "task": {{"samples_per_class": 20}},
            "network": {{"conv1": 2, "conv2": 3, "kernel": 3, "fc4": 4}},
            "train": {{"epochs": 6, "injection_epoch": 5, "lr": 0.01}},
            "pegasos": {{"epochs": 5}},
            "qnn": {{"epochs": 10}},
            "explain": {{"enabled": true, "max_images": 2}},
            "seeds": [3],
            "out": {:?}
        }}"#,
        out
    ))
    .unwrap()
}

#[test]
fn experiment_writes_parseable_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let runs = run_experiment(&cfg).unwrap();
    let seed_dir = dir.path().join("seed_3");
    assert_eq!(runs[0].dir, seed_dir);
    for f in ["metrics.csv", "loss_curve.csv", "timeline.csv", "predictions.csv", "forgetting.csv"] {
        let (_, rows) = read_csv(&fs::read(seed_dir.join(f)).unwrap());
        assert!(!rows.is_empty(), "{f}");
    }
    let echo: ExperimentConfig =
        serde_json::from_str(&fs::read_to_string(seed_dir.join("config_echo.json")).unwrap()).unwrap();
    assert_eq!(echo.seeds, vec![3]);
    assert_eq!(echo.train.batch_size, 8);
    roxmltree::Document::parse(&fs::read_to_string(seed_dir.join("loss_curve.svg")).unwrap()).unwrap();
    assert!(fs::read(seed_dir.join("saliency_0001.ppm")).unwrap().starts_with(b"P6\n8 8\n255\n"));
    assert!(!seed_dir.join("saliency_0002.ppm").exists());

    let (header, metrics) = read_csv(&fs::read(seed_dir.join("metrics.csv")).unwrap());
    let epochs: Vec<&str> = metrics.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(epochs, ["5", "6"]);
    let (_, preds) = read_csv(&fs::read(seed_dir.join("predictions.csv")).unwrap());
    for row in &metrics {
        let at: Vec<&Vec<String>> = preds.iter().filter(|p| p[0] == row[0]).collect();
        let truth: Vec<usize> = at.iter().map(|p| p[3].parse().unwrap()).collect();
        let pred: Vec<usize> = at.iter().map(|p| p[4].parse().unwrap()).collect();
        let scores: Vec<f64> = at.iter().map(|p| p[5].parse().unwrap()).collect();
        let m = compute_metrics(&pred, &truth).unwrap();
        let col = |name: &str| &row[header.iter().position(|h| h == name).unwrap()];
        assert_eq!(col("accuracy_pct"), &pct(m.accuracy));
        assert_eq!(col("recall_1_pct"), &pct(m.recall[1]));
        assert_eq!(col("truth1_pred0"), &m.confusion[1][0].to_string());
        assert_eq!(col("auc"), &format!("{:.6}", roc_points(&scores, &truth).unwrap().auc));
    }
}

#[test]
fn same_config_gives_identical_csvs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_experiment(&tiny_config(a.path())).unwrap();
    run_experiment(&tiny_config(b.path())).unwrap();
    for f in ["metrics.csv", "loss_curve.csv", "timeline.csv", "predictions.csv", "forgetting.csv"] {
        let x = fs::read(a.path().join("seed_3").join(f)).unwrap();
        let y = fs::read(b.path().join("seed_3").join(f)).unwrap();
        assert_eq!(x, y, "{f}");
    }
}

#[test]
fn compare_covers_all_models() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = tiny_config(dir.path());
    cfg.explain.enabled = false;
    let runs = run_compare(&cfg).unwrap();
    assert_eq!(runs.len(), 5);
    let (_, rows) = read_csv(&fs::read(dir.path().join("compare.csv")).unwrap());
    let models: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(models, ModelKind::ALL.map(|m| m.as_str()));
    assert!(dir.path().join("seed_3/hybrid_svm/metrics.csv").exists());
}

#[test]
fn missing_data_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.paths.mnist_images = dir.path().join("nope");
    cfg.out = dir.path().to_path_buf();
    let err = run_experiment(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 3);
}
