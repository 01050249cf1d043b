use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uncertainty::Strategy;

use super::ttest::{paired_ttest, significance_stars};

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    Best,
    Worst,
    Sure,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Best, Metric::Worst, Metric::Sure];

    pub fn label(self) -> &'static str {
        match self {
            Metric::Best => "Best",
            Metric::Worst => "Worst",
            Metric::Sure => "Sure",
        }
    }
}

/// One row group of the report: a training strategy scored with one
/// abstention parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub strategy: Strategy,
    pub use_unsure_prior: bool,
}

impl ScoringConfig {
    pub fn label(&self) -> String {
        if self.use_unsure_prior {
            format!("{} p(y0.5)", self.strategy.label())
        } else {
            self.strategy.label().to_string()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub config: ScoringConfig,
    pub metric: Metric,
    pub coverage: f64,
    pub mean: f64,
    pub per_repetition: Vec<f64>,
    /// Test folds left out because no sure positive or no sure negative
    /// survived abstention.
    #[serde(default)]
    pub undefined_folds: usize,
}

/// Paired comparison of a configuration with the next-worse one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub metric: Metric,
    pub coverage: f64,
    pub config: ScoringConfig,
    pub compared_to: ScoringConfig,
    pub p_value: f64,
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub coverages: Vec<f64>,
    pub configs: Vec<ScoringConfig>,
    pub cells: Vec<Cell>,
    pub significance: Vec<Significance>,
}

impl EvalReport {
    pub fn cell(&self, config: ScoringConfig, metric: Metric, coverage: f64) -> Option<&Cell> {
        self.cells
            .iter()
            .find(|c| c.config == config && c.metric == metric && c.coverage == coverage)
    }

    pub fn mean(&self, config: ScoringConfig, metric: Metric, coverage: f64) -> Option<f64> {
        self.cell(config, metric, coverage).map(|c| c.mean)
    }

    pub fn significance_for(&self, config: ScoringConfig, metric: Metric, coverage: f64) -> Option<&Significance> {
        self.significance
            .iter()
            .find(|s| s.config == config && s.metric == metric && s.coverage == coverage)
    }

    /// Assembles a report from per-repetition values keyed by
    /// `(config, metric, coverage index)`. Every key must be present and
    /// all value lists must have the same length.
    pub fn build(
        coverages: &[f64],
        configs: &[ScoringConfig],
        values: &BTreeMap<(ScoringConfig, Metric, usize), Vec<f64>>,
    ) -> Result<Self> {
        let mut cells = Vec::new();
        let mut reps = None;
        for &metric in &Metric::ALL {
            for &config in configs {
                for (ci, &coverage) in coverages.iter().enumerate() {
                    let per_repetition = values.get(&(config, metric, ci)).ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "missing report cell {} / {} / {coverage}",
                            config.label(),
                            metric.label()
                        ))
                    })?;
                    if per_repetition.is_empty() || *reps.get_or_insert(per_repetition.len()) != per_repetition.len() {
                        return Err(Error::InvalidInput("uneven repetition counts across cells".into()));
                    }
                    cells.push(Cell {
                        config,
                        metric,
                        coverage,
                        mean: per_repetition.iter().sum::<f64>() / per_repetition.len() as f64,
                        per_repetition: per_repetition.clone(),
                        undefined_folds: 0,
                    });
                }
            }
        }
        let mut report = Self {
            format_version: REPORT_FORMAT_VERSION,
            coverages: coverages.to_vec(),
            configs: configs.to_vec(),
            cells,
            significance: Vec::new(),
        };
        report.significance = report.compute_significance()?;
        Ok(report)
    }

    /// For each metric and coverage, ranks configurations by mean and
    /// tests each against the next-worse one.
    fn compute_significance(&self) -> Result<Vec<Significance>> {
        let mut out = Vec::new();
        if self.configs.len() < 2 || self.cells.first().map_or(0, |c| c.per_repetition.len()) < 2 {
            return Ok(out);
        }
        for &metric in &Metric::ALL {
            for &coverage in &self.coverages {
                let mut ranked: Vec<&Cell> = self
                    .configs
                    .iter()
                    .filter_map(|&c| self.cell(c, metric, coverage))
                    .collect();
                // stable: ties keep configuration order
                ranked.sort_by(|a, b| a.mean.total_cmp(&b.mean));
                for pair in ranked.windows(2) {
                    let (worse, better) = (pair[0], pair[1]);
                    let t = paired_ttest(&better.per_repetition, &worse.per_repetition)?;
                    out.push(Significance {
                        metric,
                        coverage,
                        config: better.config,
                        compared_to: worse.config,
                        p_value: t.p_value,
                        stars: significance_stars(t.p_value).to_string(),
                    });
                }
            }
        }
        Ok(out)
    }
}
