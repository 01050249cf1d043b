//! Repeated stratified cross-validation of every uncertainty strategy,
//! followed by abstention and best/worst/sure AUC scoring.
//!
//! Training is the expensive part, so test-fold predictions are computed
//! once per `(strategy, repetition, fold)` and optionally cached on disk,
//! keyed by a hash of the dataset and every setting that influences them.
//! All abstention variants and coverage levels re-score the same
//! predictions.
//!
//! Randomness is derived per job from the top-level seeds, so results are
//! identical regardless of worker count or scheduling. Sub-model seeds do
//! not depend on the strategy: strategies are compared on identical
//! initializations and batch orders.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::abstention::{compute_rule, exclusion_rate_for_coverage, AbstentionConfig};
use crate::error::{Error, Result};
use crate::eval::{auc_bounds, make_cv_plan, sure_auc, CvConfig, EvalReport, Metric, ScoredSample, ScoringConfig};
use crate::geometry::{self, NormalizedCenterline, TTA_ANGLES_DEG};
use crate::io::{self, PredictionRecord};
use crate::nn::{train_submodel, ArchConfig, Ensemble, TrainConfig};
use crate::seed;
use crate::synthdata::{generate_dataset, Annotation, GeneratorConfig, LabeledSample};
use crate::uncertainty::{apply_strategy, Strategy};

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "CROOKSCAN_WORKERS";

const TAG_ASSIGN: u64 = 0x4153;
const TAG_MEMBER: u64 = 0x4d45;

/// Bumped whenever training or prediction numerics change, so cached fold
/// predictions from older code are not reused.
const CACHE_REVISION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// Dataset file; when absent the generator config is used.
    pub dataset: Option<PathBuf>,
    pub generator: GeneratorConfig,
    pub strategies: Vec<Strategy>,
    /// Strategies that are additionally scored with the unsure-aware
    /// abstention interval.
    pub unsure_prior_strategies: Vec<Strategy>,
    pub coverages: Vec<f64>,
    /// Prior prevalence of the positive class used by abstention.
    pub p_y1: f64,
    pub train: TrainConfig,
    pub arch: ArchConfig,
    pub cv: CvConfig,
    pub output_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::full()
    }
}

/// Small architecture used by the desk and smoke presets: same depth and
/// dilation schedule, fewer channels.
pub fn compact_arch() -> ArchConfig {
    ArchConfig {
        channels: 4,
        mlp_hidden: 16,
        ..ArchConfig::default()
    }
}

impl ExperimentConfig {
    /// Full protocol: 25 x 5-fold CV, 5-member ensembles, 100 epochs.
    pub fn full() -> Self {
        Self {
            dataset: None,
            generator: GeneratorConfig::default(),
            strategies: Strategy::ALL.to_vec(),
            unsure_prior_strategies: vec![Strategy::Soft05],
            coverages: vec![1.0, 0.95, 0.90, 0.75],
            p_y1: 0.05,
            train: TrainConfig::default(),
            arch: ArchConfig::default(),
            cv: CvConfig::default(),
            output_dir: None,
            cache_dir: None,
        }
    }

    /// Five repetitions with the compact architecture.
    pub fn desk() -> Self {
        Self {
            arch: compact_arch(),
            cv: CvConfig {
                repetitions: 5,
                ..CvConfig::default()
            },
            ..Self::full()
        }
    }

    /// Minutes-scale sanity run.
    pub fn smoke() -> Self {
        Self {
            generator: GeneratorConfig {
                n_samples: 120,
                n_positive: 10,
                n_unsure: 6,
                ..GeneratorConfig::default()
            },
            train: TrainConfig {
                epochs: 10,
                ensemble_size: 2,
                ..TrainConfig::default()
            },
            arch: compact_arch(),
            cv: CvConfig {
                folds: 2,
                repetitions: 2,
                seed: 0,
            },
            ..Self::full()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" => Ok(Self::full()),
            "desk" => Ok(Self::desk()),
            "smoke" => Ok(Self::smoke()),
            other => Err(Error::Config(format!("unknown preset {other:?} (full, desk, smoke)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::Config("at least one strategy is required".into()));
        }
        if self.coverages.is_empty() {
            return Err(Error::Config("at least one coverage level is required".into()));
        }
        if let Some(c) = self.coverages.iter().find(|c| !(**c > 0.0 && **c <= 1.0)) {
            return Err(Error::Config(format!("coverage {c} outside (0, 1]")));
        }
        if let Some(s) = self.unsure_prior_strategies.iter().find(|s| !self.strategies.contains(s)) {
            return Err(Error::Config(format!("unsure-prior scoring requested for untrained strategy {s}")));
        }
        self.train.validate()?;
        self.arch.validate()?;
        AbstentionConfig {
            p_y1: self.p_y1,
            ..Default::default()
        }
        .validate()
    }

    /// Report rows: every strategy with the base interval, then the
    /// unsure-aware variants.
    pub fn scoring_configs(&self) -> Vec<ScoringConfig> {
        let base = self.strategies.iter().map(|&strategy| ScoringConfig {
            strategy,
            use_unsure_prior: false,
        });
        let prior = self.unsure_prior_strategies.iter().map(|&strategy| ScoringConfig {
            strategy,
            use_unsure_prior: true,
        });
        base.chain(prior).collect()
    }
}

/// Ensemble predictions for one test fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPredictions {
    pub strategy: Strategy,
    pub repetition: usize,
    pub fold: usize,
    pub ids: Vec<u64>,
    pub annotations: Vec<Annotation>,
    pub probabilities: Vec<f64>,
    /// Fraction of unsure samples in the training part of the split.
    pub train_unsure_fraction: f64,
}

impl FoldPredictions {
    pub fn records(&self) -> Vec<PredictionRecord> {
        (0..self.ids.len())
            .map(|i| PredictionRecord {
                id: self.ids[i],
                annotation: self.annotations[i],
                probability: self.probabilities[i],
                kept: true,
                fold: self.fold,
                repetition: self.repetition,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldScore {
    pub best: f64,
    pub worst: f64,
    pub sure: f64,
    pub kept: usize,
    pub total: usize,
}

impl FoldScore {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Best => self.best,
            Metric::Worst => self.worst,
            Metric::Sure => self.sure,
        }
    }
}

/// Applies abstention at `coverage` to one fold and scores what is kept.
///
/// The unsure-aware variant uses the training fold's unsure frequency as
/// `p_y05`.
pub fn score_fold(fp: &FoldPredictions, coverage: f64, use_unsure_prior: bool, p_y1: f64) -> Result<FoldScore> {
    let e = exclusion_rate_for_coverage(coverage);
    let cfg = AbstentionConfig {
        p_y1,
        p_y05: fp.train_unsure_fraction,
        exclusion_rate: e,
        use_unsure_prior,
    };
    let rule = compute_rule(&fp.probabilities, &cfg)?;
    let samples: Vec<ScoredSample> = (0..fp.ids.len())
        .map(|i| ScoredSample {
            id: fp.ids[i],
            probability: fp.probabilities[i],
            annotation: fp.annotations[i],
            kept: !rule.rejects(fp.probabilities[i]),
        })
        .collect();
    let context = |err: Error| match err {
        Error::UndefinedMetric(m) => Error::UndefinedMetric(format!(
            "{m} (strategy {}, repetition {}, fold {}, coverage {coverage})",
            fp.strategy, fp.repetition, fp.fold
        )),
        other => other,
    };
    let bounds = auc_bounds(&samples).map_err(context)?;
    let sure = sure_auc(&samples).map_err(context)?;
    Ok(FoldScore {
        best: bounds.best,
        worst: bounds.worst,
        sure,
        kept: samples.iter().filter(|s| s.kept).count(),
        total: samples.len(),
    })
}

/// Per-repetition means over folds for every report cell.
///
/// A fold whose kept samples lack a sure positive or a sure negative has no
/// AUC at that coverage; it is left out of its repetition mean and counted
/// in the cell. A repetition with no defined fold is an error.
pub fn build_report(
    folds: &[FoldPredictions],
    configs: &[ScoringConfig],
    coverages: &[f64],
    p_y1: f64,
) -> Result<EvalReport> {
    let mut per_rep: BTreeMap<(ScoringConfig, Metric, usize), BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    let mut undefined: BTreeMap<(ScoringConfig, usize), usize> = BTreeMap::new();
    for &config in configs {
        let mine: Vec<&FoldPredictions> = folds.iter().filter(|f| f.strategy == config.strategy).collect();
        if mine.is_empty() {
            return Err(Error::InvalidInput(format!("no predictions for strategy {}", config.strategy)));
        }
        let repetitions: BTreeSet<usize> = mine.iter().map(|f| f.repetition).collect();
        for (ci, &coverage) in coverages.iter().enumerate() {
            for fp in &mine {
                let score = match score_fold(fp, coverage, config.use_unsure_prior, p_y1) {
                    Ok(score) => score,
                    Err(Error::UndefinedMetric(m)) => {
                        log::warn!("{}: fold left out: {m}", config.label());
                        *undefined.entry((config, ci)).or_default() += 1;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                for m in Metric::ALL {
                    per_rep
                        .entry((config, m, ci))
                        .or_default()
                        .entry(fp.repetition)
                        .or_default()
                        .push(score.get(m));
                }
            }
            for &r in &repetitions {
                if !per_rep.get(&(config, Metric::Sure, ci)).is_some_and(|reps| reps.contains_key(&r)) {
                    return Err(Error::UndefinedMetric(format!(
                        "{} at coverage {coverage}: no fold of repetition {r} keeps a sure positive and negative",
                        config.label()
                    )));
                }
            }
        }
    }
    let values = per_rep
        .into_iter()
        .map(|(k, reps)| {
            let means = reps
                .into_values()
                .map(|v| v.iter().sum::<f64>() / v.len() as f64)
                .collect();
            (k, means)
        })
        .collect();
    let mut report = EvalReport::build(coverages, configs, &values)?;
    // cells run over coverages innermost
    for (i, cell) in report.cells.iter_mut().enumerate() {
        cell.undefined_folds = undefined.get(&(cell.config, i % coverages.len())).copied().unwrap_or(0);
    }
    Ok(report)
}

/// SHA-256 over ids, annotations and coordinate bit patterns.
pub fn dataset_hash(samples: &[LabeledSample]) -> String {
    let mut h = Sha256::new();
    for s in samples {
        h.update(s.id.to_le_bytes());
        h.update(s.annotation.as_str().as_bytes());
        for p in s.centerline.points() {
            for v in p {
                h.update(v.to_bits().to_le_bytes());
            }
        }
    }
    hex::encode(h.finalize())
}

#[derive(Serialize)]
struct CacheKey<'a> {
    revision: u32,
    dataset: &'a str,
    strategy: Strategy,
    repetition: usize,
    fold: usize,
    cv: &'a CvConfig,
    train: &'a TrainConfig,
    arch: &'a ArchConfig,
    tta: &'a [f64],
}

fn cache_path(dir: &Path, key: &CacheKey) -> PathBuf {
    let json = serde_json::to_string(key).expect("cache key serializes");
    let digest = hex::encode(Sha256::digest(json.as_bytes()));
    dir.join(format!("{}-r{}-f{}-{}.json", key.strategy, key.repetition, key.fold, &digest[..16]))
}

fn read_cached(path: &Path) -> Option<FoldPredictions> {
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

fn write_cached(path: &Path, fp: &FoldPredictions) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_string(fp).expect("predictions serialize")).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Trains the ensemble for one split and predicts its test fold.
#[allow(clippy::too_many_arguments)]
pub fn run_fold(
    dataset: &[LabeledSample],
    normalized: &[NormalizedCenterline],
    fold_of: &[usize],
    strategy: Strategy,
    repetition: usize,
    fold: usize,
    cfg: &ExperimentConfig,
) -> Result<FoldPredictions> {
    let train_idx: Vec<usize> = (0..dataset.len()).filter(|&i| fold_of[i] != fold).collect();
    let test_idx: Vec<usize> = (0..dataset.len()).filter(|&i| fold_of[i] == fold).collect();
    let train_set: Vec<LabeledSample> = train_idx.iter().map(|&i| dataset[i].clone()).collect();
    let unsure = train_set.iter().filter(|s| s.annotation == Annotation::Unsure).count();
    let index_of: HashMap<u64, usize> = dataset.iter().enumerate().map(|(i, s)| (s.id, i)).collect();

    let mut rng = seed::derived_rng(
        cfg.cv.seed,
        &[TAG_ASSIGN, repetition as u64, fold as u64, strategy.tag()],
    );
    let assignment = apply_strategy(&train_set, strategy, cfg.train.ensemble_size, &mut rng);

    let members = assignment
        .members
        .iter()
        .enumerate()
        .map(|(m, targets)| {
            let data: Vec<(NormalizedCenterline, f64)> = targets
                .iter()
                .map(|(id, t)| (normalized[index_of[id]].clone(), *t))
                .collect();
            let member_seed = seed::derive(
                cfg.train.seed,
                &[TAG_MEMBER, cfg.cv.seed, repetition as u64, fold as u64, m as u64],
            );
            train_submodel(&data, &cfg.train, &cfg.arch, member_seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let ensemble = Ensemble::new(cfg.arch.clone(), members)?;

    let probabilities = test_idx
        .iter()
        .map(|&i| ensemble.predict_normalized(&normalized[i]))
        .collect::<Result<Vec<_>>>()?;
    Ok(FoldPredictions {
        strategy,
        repetition,
        fold,
        ids: test_idx.iter().map(|&i| dataset[i].id).collect(),
        annotations: test_idx.iter().map(|&i| dataset[i].annotation).collect(),
        probabilities,
        train_unsure_fraction: unsure as f64 / train_set.len() as f64,
    })
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: EvalReport,
    pub folds: Vec<FoldPredictions>,
    pub dataset_hash: String,
}

impl ExperimentOutcome {
    pub fn predictions_for(&self, strategy: Strategy) -> Vec<PredictionRecord> {
        self.folds
            .iter()
            .filter(|f| f.strategy == strategy)
            .flat_map(|f| f.records())
            .collect()
    }
}

pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Vec<LabeledSample>> {
    match &cfg.dataset {
        Some(path) => io::read_dataset(path),
        None => generate_dataset(&cfg.generator),
    }
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .map_err(|_| Error::Config(format!("{WORKERS_ENV}={v:?} is not a worker count")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::Config(e.to_string()))
}

/// Runs the whole protocol and, if `output_dir` is set, writes
/// `report.csv`, `report.json` and one `predictions_<strategy>.csv` per
/// strategy there. When a split fails, the predictions that did complete
/// are still written, next to a `FAILED` marker holding the error.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let dataset = load_dataset(cfg)?;
    run_experiment_on(cfg, &dataset)
}

pub fn run_experiment_on(cfg: &ExperimentConfig, dataset: &[LabeledSample]) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let hash = dataset_hash(dataset);
    let plan = make_cv_plan(dataset, &cfg.cv)?;
    let normalized = dataset
        .iter()
        .map(|s| geometry::normalize(&s.centerline))
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = &cfg.cache_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let (reps, folds) = (plan.repetitions(), plan.folds());
    let jobs: Vec<(Strategy, usize, usize)> = cfg
        .strategies
        .iter()
        .flat_map(|&s| (0..reps).flat_map(move |r| (0..folds).map(move |f| (s, r, f))))
        .collect();
    let started = Instant::now();
    let total = jobs.len();
    let done = std::sync::atomic::AtomicUsize::new(0);

    let results: Vec<Result<FoldPredictions>> = worker_pool()?.install(|| {
        jobs.par_iter()
            .map(|&(strategy, repetition, fold)| {
                let key = CacheKey {
                    revision: CACHE_REVISION,
                    dataset: &hash,
                    strategy,
                    repetition,
                    fold,
                    cv: &cfg.cv,
                    train: &cfg.train,
                    arch: &cfg.arch,
                    tta: &TTA_ANGLES_DEG,
                };
                let path = cfg.cache_dir.as_deref().map(|d| cache_path(d, &key));
                if let Some(fp) = path.as_deref().and_then(read_cached) {
                    return Ok(fp);
                }
                let fp = run_fold(dataset, &normalized, &plan.fold_of[repetition], strategy, repetition, fold, cfg)?;
                if let Some(p) = &path {
                    write_cached(p, &fp)?;
                }
                let n = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                log::info!(
                    "{strategy} repetition {repetition} fold {fold} trained ({n}/{total}, {:.0}s elapsed)",
                    started.elapsed().as_secs_f64()
                );
                Ok(fp)
            })
            .collect()
    });

    let mut folds = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(fp) => folds.push(fp),
            Err(e) => failures.push(e),
        }
    }
    if let Some(first) = failures.into_iter().next() {
        if let Some(dir) = &cfg.output_dir {
            write_predictions(dir, cfg, &folds)?;
            let marker = dir.join("FAILED");
            std::fs::write(&marker, format!("{first}\n")).map_err(|e| Error::io(&marker, e))?;
        }
        return Err(first);
    }

    let report = build_report(&folds, &cfg.scoring_configs(), &cfg.coverages, cfg.p_y1);
    let report = match report {
        Ok(r) => r,
        Err(e) => {
            if let Some(dir) = &cfg.output_dir {
                write_predictions(dir, cfg, &folds)?;
                let marker = dir.join("FAILED");
                std::fs::write(&marker, format!("{e}\n")).map_err(|err| Error::io(&marker, err))?;
            }
            return Err(e);
        }
    };
    if let Some(dir) = &cfg.output_dir {
        write_predictions(dir, cfg, &folds)?;
        io::write_report(&report, &dir.join("report.csv"), &dir.join("report.json"))?;
        let marker = dir.join("FAILED");
        if marker.exists() {
            std::fs::remove_file(&marker).map_err(|e| Error::io(&marker, e))?;
        }
    }
    Ok(ExperimentOutcome {
        report,
        folds,
        dataset_hash: hash,
    })
}

fn write_predictions(dir: &Path, cfg: &ExperimentConfig, folds: &[FoldPredictions]) -> Result<()> {
    for &s in &cfg.strategies {
        let records: Vec<PredictionRecord> = folds.iter().filter(|f| f.strategy == s).flat_map(|f| f.records()).collect();
        io::write_predictions(&dir.join(format!("predictions_{s}.csv")), &records)?;
    }
    Ok(())
}

/// Regroups a flat prediction file into folds. `p_y05` defaults to the
/// unsure fraction of the whole file.
pub fn folds_from_records(records: &[PredictionRecord], strategy: Strategy, p_y05: Option<f64>) -> Vec<FoldPredictions> {
    let unsure = records.iter().filter(|r| r.annotation == Annotation::Unsure).count();
    let fraction = p_y05.unwrap_or(unsure as f64 / records.len().max(1) as f64);
    let mut groups: BTreeMap<(usize, usize), FoldPredictions> = BTreeMap::new();
    for r in records {
        let g = groups.entry((r.repetition, r.fold)).or_insert_with(|| FoldPredictions {
            strategy,
            repetition: r.repetition,
            fold: r.fold,
            ids: Vec::new(),
            annotations: Vec::new(),
            probabilities: Vec::new(),
            train_unsure_fraction: fraction,
        });
        g.ids.push(r.id);
        g.annotations.push(r.annotation);
        g.probabilities.push(r.probability);
    }
    groups.into_values().collect()
}
