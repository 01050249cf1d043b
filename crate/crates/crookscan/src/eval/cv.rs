use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::synthdata::{Annotation, LabeledSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct CvConfig {
    pub folds: usize,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            repetitions: 25,
            seed: 0,
        }
    }
}

/// Repeated stratified k-fold assignment. `fold_of[r][i]` is the test fold
/// of sample index `i` in repetition `r`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvPlan {
    pub config: CvConfig,
    pub fold_of: Vec<Vec<usize>>,
}

impl CvPlan {
    pub fn folds(&self) -> usize {
        self.config.folds
    }

    pub fn repetitions(&self) -> usize {
        self.config.repetitions
    }

    pub fn test_indices(&self, repetition: usize, fold: usize) -> Vec<usize> {
        self.fold_of[repetition]
            .iter()
            .enumerate()
            .filter(|(_, &f)| f == fold)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn train_indices(&self, repetition: usize, fold: usize) -> Vec<usize> {
        self.fold_of[repetition]
            .iter()
            .enumerate()
            .filter(|(_, &f)| f != fold)
            .map(|(i, _)| i)
            .collect()
    }
}

const STRATA: [Annotation; 3] = [Annotation::Positive, Annotation::Unsure, Annotation::Negative];

/// Stratifies on all three annotations. Within a repetition each stratum is
/// shuffled and dealt round-robin, continuing from where the previous
/// stratum stopped so fold sizes stay balanced as well.
///
/// Positive and negative strata need at least `folds` members; the unsure
/// stratum may be empty but otherwise needs `folds` members too.
pub fn make_cv_plan(dataset: &[LabeledSample], cfg: &CvConfig) -> Result<CvPlan> {
    let annotations: Vec<Annotation> = dataset.iter().map(|s| s.annotation).collect();
    make_cv_plan_for(&annotations, cfg)
}

pub fn make_cv_plan_for(annotations: &[Annotation], cfg: &CvConfig) -> Result<CvPlan> {
    if cfg.folds < 2 || cfg.repetitions == 0 {
        return Err(Error::Config(format!(
            "need at least 2 folds and 1 repetition, got {} and {}",
            cfg.folds, cfg.repetitions
        )));
    }
    let strata: Vec<Vec<usize>> = STRATA
        .iter()
        .map(|a| (0..annotations.len()).filter(|&i| annotations[i] == *a).collect())
        .collect();
    for (a, members) in STRATA.iter().zip(&strata) {
        let may_be_empty = *a == Annotation::Unsure && members.is_empty();
        if members.len() < cfg.folds && !may_be_empty {
            return Err(Error::Config(format!(
                "stratum {} has {} samples, fewer than {} folds",
                a.as_str(),
                members.len(),
                cfg.folds
            )));
        }
    }

    let fold_of = (0..cfg.repetitions)
        .map(|r| {
            let mut rng = seed::derived_rng(cfg.seed, &[0x4356, r as u64]);
            let mut fold_of = vec![0; annotations.len()];
            let mut offset = 0;
            for members in &strata {
                let mut shuffled = members.clone();
                shuffled.shuffle(&mut rng);
                for (pos, i) in shuffled.into_iter().enumerate() {
                    fold_of[i] = (offset + pos) % cfg.folds;
                }
                offset += members.len();
            }
            fold_of
        })
        .collect();
    Ok(CvPlan {
        config: *cfg,
        fold_of,
    })
}
