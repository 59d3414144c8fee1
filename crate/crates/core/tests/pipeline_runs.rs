//! End-to-end runs and probe behavior on converted features.

use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use tsadapt::ingest::store::read_split;
use tsadapt::ingest::Split;
use tsadapt::pipeline::inspect::inspect;
use tsadapt::pipeline::{load_features, run_pipeline, PipelineConfig, RunOptions, RunSummary};
use tsadapt::probe::{evaluate, train, train_centered, FeatureBatch, TrainConfig};

fn config(text: &str, root: &std::path::Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::parse(text).unwrap();
    cfg.output_root = root.into();
    cfg
}

#[test]
fn text_run_with_room_marks_every_instance_fitting() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        "synth.channels = 1\nsynth.length = 64\nsynth.classes = 3\nsynth.per_class = 10\n\
         adapter = text\ntext.max_len = 64\nprobe.epochs = 2\n",
        tmp.path(),
    );
    let summary = run_pipeline(&cfg, RunOptions::default()).unwrap();
    assert_eq!(summary.instances, 30);
    assert_eq!(summary.conversion.overflow.get("fits"), Some(&30));
    let dir = cfg.output_dir();
    let lines: usize = ["train", "valid", "test"]
        .iter()
        .map(|s| std::fs::read_to_string(dir.join(format!("texts/{s}.txt"))).unwrap().lines().count())
        .sum();
    assert_eq!(lines, 30);
    let described = inspect(&dir.join("texts")).unwrap();
    assert!(described.contains("fits"), "{described}");
}

#[test]
fn summary_matches_written_file_and_rerun_is_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "synth.channels = 4\nsynth.length = 32\nsynth.classes = 2\nsynth.per_class = 8\n\
                adapter = image\nimage.height = 16\nimage.width = 16\nprobe.epochs = 3\n";
    let cfg = config(text, tmp.path());
    let summary = run_pipeline(&cfg, RunOptions::default()).unwrap();
    let dir = cfg.output_dir();
    let on_disk: RunSummary =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(on_disk.config_hash, summary.config_hash);
    assert_eq!(on_disk.split_sizes, summary.split_sizes);
    let head = std::fs::read(dir.join("probe/head.bin")).unwrap();
    let metrics = std::fs::read(dir.join("probe/metrics.jsonl")).unwrap();

    let other = tempfile::tempdir().unwrap();
    let mut again = config(text, other.path());
    again.parallelism = 3;
    assert_eq!(again.hash(), cfg.hash());
    run_pipeline(&again, RunOptions::default()).unwrap();
    let dir2 = again.output_dir();
    assert_eq!(std::fs::read(dir2.join("probe/head.bin")).unwrap(), head);
    assert_eq!(std::fs::read(dir2.join("probe/metrics.jsonl")).unwrap(), metrics);
}

#[test]
fn shuffled_labels_fall_to_chance() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        "synth.channels = 1\nsynth.length = 48\nsynth.classes = 4\nsynth.per_class = 600\nsynth.separation = 3\n\
         adapter = text\ntext.max_len = 64\nsplit.stratify = true\nprobe.enabled = false\n",
        tmp.path(),
    );
    run_pipeline(&cfg, RunOptions::default()).unwrap();
    let dir = cfg.output_dir();
    let split = read_split(&dir.join("manifests/split.jsonl")).unwrap();
    let texts = dir.join("texts");
    let (train_set, classes) = load_features(&texts, &split, Split::Train).unwrap();
    let (test_set, _) = load_features(&texts, &split, Split::Test).unwrap();
    let tc = TrainConfig { epochs: 20, learning_rate: 1e-3, ..Default::default() };

    let honest = train_centered(&train_set, classes, &tc).unwrap();
    let honest_acc = evaluate(&honest.head, &test_set).unwrap().accuracy;
    assert!(honest_acc > 0.9, "honest accuracy {honest_acc}");

    // Shuffle labels across the whole dataset so test labels carry no signal.
    let n_train = train_set.len();
    let mut labels: Vec<usize> = train_set.labels.iter().chain(&test_set.labels).copied().collect();
    labels.shuffle(&mut ChaCha8Rng::seed_from_u64(7));
    let test_labels = labels.split_off(n_train);
    let shuffled = FeatureBatch::new(train_set.features.clone(), labels).unwrap();
    let shuffled_test = FeatureBatch::new(test_set.features.clone(), test_labels).unwrap();
    let out = train_centered(&shuffled, classes, &tc).unwrap();
    let acc = evaluate(&out.head, &shuffled_test).unwrap().accuracy;
    assert!((acc - 0.25).abs() <= 0.05, "shuffled accuracy {acc}");
}

fn unit_batch(seed: u64, rows: usize, width: usize, classes: usize) -> FeatureBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..rows).map(|_| rng.random_range(0..classes)).collect();
    let features = Array2::from_shape_fn((rows, width), |(r, c)| {
        let centre = if c % classes == labels[r] { 0.5 } else { 0.0 };
        let noise: f64 = StandardNormal.sample(&mut rng);
        (centre + 0.25 * noise).clamp(-1.0, 1.0)
    });
    FeatureBatch::new(features, labels).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn objective_improves_on_unit_scaled_features(
        seed in 0u64..1_000,
        rows in 16usize..80,
        width in 2usize..24,
        classes in 2usize..5,
    ) {
        let data = unit_batch(seed, rows, width, classes);
        let tc = TrainConfig { learning_rate: 1e-2, epochs: 5, batch_size: 8, seed, l2: 0.0 };
        let out = train(&data, classes, &tc).unwrap();
        let first = out.history[0];
        let last = *out.history.last().unwrap();
        prop_assert!(last > first, "objective {first} -> {last}");
        prop_assert!(out.history.iter().all(|v| v.is_finite()));
    }
}
