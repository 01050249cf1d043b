use std::collections::BTreeSet;
use std::path::Path;

use crookscan::eval::{CvConfig, Metric};
use crookscan::experiment::{run_experiment, ExperimentConfig, FoldPredictions};
use crookscan::nn::{ArchConfig, TrainConfig};
use crookscan::synthdata::GeneratorConfig;
use crookscan::uncertainty::Strategy;
use crookscan::Error;

fn micro() -> ExperimentConfig {
    ExperimentConfig {
        generator: GeneratorConfig {
            n_samples: 60,
            n_positive: 8,
            n_unsure: 4,
            ..GeneratorConfig::default()
        },
        strategies: vec![Strategy::Exclusion, Strategy::Soft05],
        train: TrainConfig {
            epochs: 2,
            ensemble_size: 2,
            ..TrainConfig::default()
        },
        arch: ArchConfig {
            channels: 2,
            mlp_hidden: 4,
            dilations: vec![1, 2, 4],
            ..ArchConfig::default()
        },
        cv: CvConfig {
            folds: 2,
            repetitions: 2,
            seed: 5,
        },
        ..ExperimentConfig::full()
    }
}

fn cache_files(dir: &Path) -> BTreeSet<String> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect()
}

#[test]
fn test_folds_partition_the_dataset() {
    let outcome = run_experiment(&micro()).unwrap();
    for strategy in [Strategy::Exclusion, Strategy::Soft05] {
        for r in 0..2 {
            let mut ids: Vec<u64> = outcome
                .folds
                .iter()
                .filter(|f| f.strategy == strategy && f.repetition == r)
                .flat_map(|f| f.ids.clone())
                .collect();
            ids.sort_unstable();
            assert_eq!(ids, (0..60).collect::<Vec<u64>>());
        }
    }
    // every (config, metric, coverage) cell is present
    let report = &outcome.report;
    assert_eq!(report.cells.len(), 3 * 3 * 4);
    for &config in &report.configs {
        for metric in Metric::ALL {
            for &c in &report.coverages {
                assert_eq!(report.cell(config, metric, c).unwrap().per_repetition.len(), 2);
            }
        }
    }
}

#[test]
fn cached_folds_are_reused_and_rescoring_never_retrains() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = micro();
    cfg.cache_dir = Some(dir.path().to_path_buf());
    let first = run_experiment(&cfg).unwrap();
    let files = cache_files(dir.path());
    assert_eq!(files.len(), 2 * 2 * 2);

    // tamper with one cached fold; a second run must return the tampered values
    let victim = dir.path().join(files.iter().next().unwrap());
    let mut fp: FoldPredictions = serde_json::from_str(&std::fs::read_to_string(&victim).unwrap()).unwrap();
    fp.probabilities.iter_mut().for_each(|p| *p *= 0.5);
    std::fs::write(&victim, serde_json::to_string(&fp).unwrap()).unwrap();
    let second = run_experiment(&cfg).unwrap();
    assert!(second.folds.contains(&fp));

    // a different coverage grid and the unsure-aware rows reuse the same folds
    cfg.coverages = vec![1.0, 0.8];
    cfg.unsure_prior_strategies = vec![Strategy::Soft05, Strategy::Exclusion];
    let third = run_experiment(&cfg).unwrap();
    assert_eq!(cache_files(dir.path()), files);
    assert_eq!(third.folds, second.folds);

    // training settings are part of the key
    cfg.train.epochs = 3;
    run_experiment(&cfg).unwrap();
    assert_eq!(cache_files(dir.path()).len(), 16);
    assert_ne!(first.folds, second.folds);
}

#[test]
fn failed_scoring_leaves_predictions_and_a_marker() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = micro();
    // at 2% coverage a 30-sample fold keeps at most one sample
    cfg.coverages = vec![0.02];
    cfg.output_dir = Some(dir.path().to_path_buf());
    let err = run_experiment(&cfg).unwrap_err();
    assert!(matches!(err, Error::UndefinedMetric(_)), "{err:?}");
    assert!(dir.path().join("FAILED").exists());
    assert!(dir.path().join("predictions_soft05.csv").exists());
    assert!(!dir.path().join("report.csv").exists());

    cfg.coverages = vec![1.0];
    run_experiment(&cfg).unwrap();
    assert!(!dir.path().join("FAILED").exists());
    assert!(dir.path().join("report.csv").exists());
}

#[test]
fn invalid_configs_are_rejected_up_front() {
    let mut cfg = micro();
    cfg.strategies.clear();
    assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));

    let mut cfg = micro();
    cfg.coverages = vec![0.0];
    assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));

    let mut cfg = micro();
    cfg.unsure_prior_strategies = vec![Strategy::Varied];
    assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));

    assert!(ExperimentConfig::preset("huge").is_err());
}

#[test]
fn presets_are_valid() {
    for name in ["full", "desk", "smoke"] {
        ExperimentConfig::preset(name).unwrap().validate().unwrap();
    }
    let full = ExperimentConfig::full();
    assert_eq!((full.cv.folds, full.cv.repetitions), (5, 25));
    assert_eq!((full.train.epochs, full.train.batch_size, full.train.ensemble_size), (100, 32, 5));
    assert_eq!(full.coverages, vec![1.0, 0.95, 0.90, 0.75]);
}

/// 20 samples; when `hidden` the only positive sits just below the top
/// score, inside the band rejected at 75 % coverage.
fn handmade_fold(repetition: usize, fold: usize, hidden: bool) -> FoldPredictions {
    let mut probabilities: Vec<f64> = (0..18).map(|i| i as f64 / 100.0).collect();
    let mut annotations = vec![crookscan::synthdata::Annotation::Negative; 18];
    probabilities.push(if hidden { 0.5 } else { 0.95 });
    annotations.push(crookscan::synthdata::Annotation::Positive);
    probabilities.push(0.9);
    annotations.push(crookscan::synthdata::Annotation::Negative);
    FoldPredictions {
        strategy: Strategy::Soft05,
        repetition,
        fold,
        ids: (0..20).map(|i| (100 * repetition + 10 * fold) as u64 * 100 + i).collect(),
        annotations,
        probabilities,
        train_unsure_fraction: 0.0,
    }
}

#[test]
fn folds_without_kept_positives_are_left_out_and_counted() {
    use crookscan::eval::ScoringConfig;
    use crookscan::experiment::{build_report, score_fold};

    let config = ScoringConfig {
        strategy: Strategy::Soft05,
        use_unsure_prior: false,
    };
    let folds = vec![
        handmade_fold(0, 0, false),
        handmade_fold(0, 1, true),
        handmade_fold(1, 0, false),
        handmade_fold(1, 1, false),
    ];
    assert!(matches!(score_fold(&folds[1], 0.75, false, 0.05), Err(Error::UndefinedMetric(_))));
    let report = build_report(&folds, &[config], &[1.0, 0.75], 0.05).unwrap();
    let cell = report.cell(config, Metric::Sure, 0.75).unwrap();
    assert_eq!(cell.undefined_folds, 1);
    let only = score_fold(&folds[0], 0.75, false, 0.05).unwrap();
    assert_eq!(cell.per_repetition[0], only.sure);
    assert_eq!(report.cell(config, Metric::Sure, 1.0).unwrap().undefined_folds, 0);

    // a repetition with no defined fold fails loudly
    let hopeless = vec![handmade_fold(0, 0, true), handmade_fold(0, 1, true)];
    assert!(matches!(
        build_report(&hopeless, &[config], &[0.75], 0.05),
        Err(Error::UndefinedMetric(_))
    ));
}
