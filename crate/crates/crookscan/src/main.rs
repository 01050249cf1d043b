use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crookscan::abstention::{apply_rule, compute_rule, exclusion_rate_for_coverage, AbstentionConfig};
use crookscan::eval::{auc_bounds, sure_auc, ScoredSample};
use crookscan::experiment::{build_report, folds_from_records, run_experiment, ExperimentConfig, WORKERS_ENV};
use crookscan::io;
use crookscan::synthdata::{generate_dataset, Annotation, GeneratorConfig};
use crookscan::uncertainty::Strategy;
use crookscan::{Error, Result};

/// Crook detection on vessel centerlines with unsure labels.
#[derive(Parser)]
#[command(version, after_help = format!("Worker threads for `experiment`: set {WORKERS_ENV}."))]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset.
    Generate(GenerateArgs),
    /// Cross-validate the uncertainty strategies and write the AUC report.
    Experiment(Box<ExperimentArgs>),
    /// Derive or re-apply an abstention rule on a predictions file.
    Abstain(AbstainArgs),
    /// Best/worst/sure AUC of a predictions file.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
struct GeneratorFlags {
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    n_positive: Option<usize>,
    #[arg(long)]
    n_unsure: Option<usize>,
    /// Point jitter standard deviation, mm.
    #[arg(long)]
    noise_scale: Option<f64>,
    #[arg(long)]
    tau_unsure: Option<f64>,
    #[arg(long)]
    tau_pos: Option<f64>,
    /// Dataset seed.
    #[arg(long)]
    data_seed: Option<u64>,
}

impl GeneratorFlags {
    fn apply(&self, g: &mut GeneratorConfig) {
        set(&mut g.n_samples, self.n_samples);
        set(&mut g.n_positive, self.n_positive);
        set(&mut g.n_unsure, self.n_unsure);
        set(&mut g.noise_scale, self.noise_scale);
        set(&mut g.tau_unsure, self.tau_unsure);
        set(&mut g.tau_pos, self.tau_pos);
        set(&mut g.seed, self.data_seed);
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(short, long)]
    output: PathBuf,
    /// Generator config as JSON; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    generator: GeneratorFlags,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Starting point: full, desk or smoke.
    #[arg(long, default_value = "full")]
    preset: String,
    /// Full experiment config as JSON, replacing the preset; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset file instead of generating one.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[command(flatten)]
    generator: GeneratorFlags,
    /// Comma-separated: exclusion, fixed, varied, soft05.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<Strategy>>,
    /// Strategies also scored with the unsure-aware abstention interval.
    #[arg(long, value_delimiter = ',')]
    unsure_prior_strategies: Option<Vec<Strategy>>,
    #[arg(long, value_delimiter = ',')]
    coverages: Option<Vec<f64>>,
    #[arg(long)]
    p_y1: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    ensemble_size: Option<usize>,
    #[arg(long)]
    train_seed: Option<u64>,
    /// Disable random training rotations.
    #[arg(long)]
    no_augment: bool,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    kernel_size: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    dilations: Option<Vec<usize>>,
    #[arg(long)]
    blocks: Option<usize>,
    #[arg(long)]
    mlp_hidden: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    cv_seed: Option<u64>,
    /// Directory for report.csv, report.json and predictions.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Directory for cached fold predictions.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Print the resolved config as JSON and exit.
    #[arg(long)]
    print_config: bool,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            None => ExperimentConfig::preset(&self.preset)?,
        };
        if self.dataset.is_some() {
            cfg.dataset = self.dataset.clone();
        }
        self.generator.apply(&mut cfg.generator);
        set(&mut cfg.strategies, self.strategies.clone());
        set(&mut cfg.unsure_prior_strategies, self.unsure_prior_strategies.clone());
        set(&mut cfg.coverages, self.coverages.clone());
        set(&mut cfg.p_y1, self.p_y1);
        set(&mut cfg.train.epochs, self.epochs);
        set(&mut cfg.train.batch_size, self.batch_size);
        set(&mut cfg.train.learning_rate, self.learning_rate);
        set(&mut cfg.train.ensemble_size, self.ensemble_size);
        set(&mut cfg.train.seed, self.train_seed);
        if self.no_augment {
            cfg.train.augment = false;
        }
        set(&mut cfg.arch.channels, self.channels);
        set(&mut cfg.arch.kernel_size, self.kernel_size);
        set(&mut cfg.arch.dilations, self.dilations.clone());
        set(&mut cfg.arch.n_blocks, self.blocks);
        set(&mut cfg.arch.mlp_hidden, self.mlp_hidden);
        set(&mut cfg.cv.folds, self.folds);
        set(&mut cfg.cv.repetitions, self.repetitions);
        set(&mut cfg.cv.seed, self.cv_seed);
        if self.output.is_some() {
            cfg.output_dir = self.output.clone();
        }
        if self.cache.is_some() {
            cfg.cache_dir = self.cache.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct AbstainArgs {
    /// Predictions CSV.
    #[arg(short, long)]
    predictions: PathBuf,
    /// Annotated predictions CSV to write.
    #[arg(short, long)]
    output: PathBuf,
    /// Re-apply this rule instead of deriving one.
    #[arg(long, conflicts_with_all = ["exclusion_rate", "coverage", "p_y05", "unsure_prior", "rule_out"])]
    rule: Option<PathBuf>,
    /// Where to write the derived rule.
    #[arg(long)]
    rule_out: Option<PathBuf>,
    #[arg(short = 'e', long, conflicts_with = "coverage")]
    exclusion_rate: Option<f64>,
    /// Target coverage; sets the exclusion rate to 1 - coverage.
    #[arg(long)]
    coverage: Option<f64>,
    #[arg(long, default_value_t = 0.05)]
    p_y1: f64,
    /// Use the unsure-aware interval with the unsure fraction of the file.
    #[arg(long)]
    unsure_prior: bool,
    /// Use the unsure-aware interval with this unsure prevalence.
    #[arg(long)]
    p_y05: Option<f64>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(short, long)]
    predictions: PathBuf,
    /// Re-score every fold with abstention at these coverages and write a
    /// full report instead of using the file's kept flags.
    #[arg(long, value_delimiter = ',')]
    coverages: Option<Vec<f64>>,
    /// Strategy label for the report rows.
    #[arg(long, default_value = "soft05")]
    strategy: Strategy,
    #[arg(long, default_value_t = 0.05)]
    p_y1: f64,
    /// Report directory (with --coverages).
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a),
        Command::Experiment(a) => experiment(*a),
        Command::Abstain(a) => abstain(a),
        Command::Evaluate(a) => evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                _ => 1,
            })
        }
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let mut cfg: GeneratorConfig = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => GeneratorConfig::default(),
    };
    a.generator.apply(&mut cfg);
    let samples = generate_dataset(&cfg)?;
    io::write_dataset(&a.output, &samples, Some(&cfg))?;
    let count = |k| samples.iter().filter(|s| s.annotation == k).count();
    println!(
        "{} records: {} negative, {} unsure, {} positive -> {}",
        samples.len(),
        count(Annotation::Negative),
        count(Annotation::Unsure),
        count(Annotation::Positive),
        a.output.display()
    );
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<()> {
    let cfg = a.resolve()?;
    if a.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return Ok(());
    }
    let outcome = run_experiment(&cfg)?;
    print!("{}", io::report_csv(&outcome.report));
    for s in &outcome.report.significance {
        if !s.stars.is_empty() {
            println!(
                "{} vs {} ({} at {}): p = {:.4} {}",
                s.config.label(),
                s.compared_to.label(),
                s.metric.label(),
                s.coverage,
                s.p_value,
                s.stars
            );
        }
    }
    Ok(())
}

fn abstain(a: AbstainArgs) -> Result<()> {
    let mut records = io::read_predictions(&a.predictions)?;
    if records.is_empty() {
        return Err(Error::InvalidInput(format!("{} holds no predictions", a.predictions.display())));
    }
    let rule = match &a.rule {
        Some(path) => io::read_rule(path)?,
        None => {
            let exclusion_rate = match (a.exclusion_rate, a.coverage) {
                (Some(e), _) => e,
                (None, Some(c)) => exclusion_rate_for_coverage(c),
                (None, None) => return Err(Error::Config("give --exclusion-rate, --coverage or --rule".into())),
            };
            let unsure = records.iter().filter(|r| r.annotation == Annotation::Unsure).count();
            let cfg = AbstentionConfig {
                p_y1: a.p_y1,
                p_y05: a.p_y05.unwrap_or(unsure as f64 / records.len() as f64),
                exclusion_rate,
                use_unsure_prior: a.unsure_prior || a.p_y05.is_some(),
            };
            let probabilities: Vec<f64> = records.iter().map(|r| r.probability).collect();
            compute_rule(&probabilities, &cfg)?
        }
    };
    let pairs: Vec<(usize, f64)> = records.iter().enumerate().map(|(i, r)| (i, r.probability)).collect();
    let (kept, rejected) = apply_rule(&pairs, &rule);
    for &i in &kept {
        records[i].kept = true;
    }
    for &i in &rejected {
        records[i].kept = false;
    }
    io::write_predictions(&a.output, &records)?;
    if let Some(path) = &a.rule_out {
        io::write_rule(path, &rule)?;
    }
    println!(
        "kept {} of {}, rejected {} with probability in [{}, {}]",
        kept.len(),
        records.len(),
        rejected.len(),
        rule.threshold_low,
        rule.threshold_high
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let records = io::read_predictions(&a.predictions)?;
    if records.is_empty() {
        return Err(Error::InvalidInput(format!("{} holds no predictions", a.predictions.display())));
    }
    if let Some(coverages) = &a.coverages {
        let folds = folds_from_records(&records, a.strategy, None);
        let configs = [false, true].map(|use_unsure_prior| crookscan::eval::ScoringConfig {
            strategy: a.strategy,
            use_unsure_prior,
        });
        let report = build_report(&folds, &configs, coverages, a.p_y1)?;
        print!("{}", io::report_csv(&report));
        if let Some(dir) = &a.output {
            io::write_report(&report, &dir.join("report.csv"), &dir.join("report.json"))?;
        }
        return Ok(());
    }

    println!("repetition,fold,kept,total,best,worst,sure");
    let folds = folds_from_records(&records, a.strategy, None);
    // folds without a kept sure positive and negative print empty metrics
    let mut sums = [0.0; 3];
    let mut defined = 0;
    for f in &folds {
        let samples: Vec<ScoredSample> = records
            .iter()
            .filter(|r| r.repetition == f.repetition && r.fold == f.fold)
            .map(|r| ScoredSample {
                id: r.id,
                probability: r.probability,
                annotation: r.annotation,
                kept: r.kept,
            })
            .collect();
        let kept = samples.iter().filter(|s| s.kept).count();
        let (bounds, sure) = match (auc_bounds(&samples), sure_auc(&samples)) {
            (Ok(b), Ok(s)) => (b, s),
            (Err(Error::UndefinedMetric(_)), _) | (_, Err(Error::UndefinedMetric(_))) => {
                println!("{},{},{kept},{},,,", f.repetition, f.fold, samples.len());
                continue;
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        defined += 1;
        sums[0] += bounds.best;
        sums[1] += bounds.worst;
        sums[2] += sure;
        println!(
            "{},{},{kept},{},{:.4},{:.4},{:.4}",
            f.repetition,
            f.fold,
            samples.len(),
            bounds.best,
            bounds.worst,
            sure
        );
    }
    if defined == 0 {
        return Err(Error::UndefinedMetric("no fold keeps a sure positive and negative".into()));
    }
    let n = defined as f64;
    println!("mean,,,,{:.4},{:.4},{:.4}", sums[0] / n, sums[1] / n, sums[2] / n);
    Ok(())
}
