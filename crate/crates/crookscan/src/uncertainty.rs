//! Strategies for training on samples whose annotation is "unsure".
//!
//! Each strategy turns a training fold into one `(id, target)` list per
//! ensemble member. Sure samples always keep their target (0 or 1); only
//! the treatment of unsure samples differs:
//!
//! | strategy    | unsure target                                          |
//! |-------------|--------------------------------------------------------|
//! | `Fixed`     | one coin flip per sample, shared by all members        |
//! | `Varied`    | an independent coin flip per sample and member         |
//! | `Exclusion` | dropped from every list                                |
//! | `Soft05`    | 0.5 everywhere                                         |

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synthdata::{Annotation, LabeledSample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Exclusion,
    Fixed,
    Varied,
    Soft05,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Exclusion, Strategy::Fixed, Strategy::Varied, Strategy::Soft05];

    /// Row label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Strategy::Exclusion => "Exclusion",
            Strategy::Fixed => "Fixed",
            Strategy::Varied => "Varied",
            Strategy::Soft05 => "0.5",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Strategy::Exclusion => "exclusion",
            Strategy::Fixed => "fixed",
            Strategy::Varied => "varied",
            Strategy::Soft05 => "soft05",
        }
    }

    pub(crate) fn tag(self) -> u64 {
        match self {
            Strategy::Exclusion => 11,
            Strategy::Fixed => 12,
            Strategy::Varied => 13,
            Strategy::Soft05 => 14,
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.key())
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "exclusion" => Ok(Strategy::Exclusion),
            "fixed" => Ok(Strategy::Fixed),
            "varied" => Ok(Strategy::Varied),
            "soft05" | "0.5" | "soft" => Ok(Strategy::Soft05),
            other => Err(Error::InvalidInput(format!("unknown strategy {other:?}"))),
        }
    }
}

/// Per-member training targets.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingAssignment {
    pub members: Vec<Vec<(u64, f64)>>,
}

impl TrainingAssignment {
    pub fn ensemble_size(&self) -> usize {
        self.members.len()
    }
}

fn sure_target(a: Annotation) -> f64 {
    if a == Annotation::Positive {
        1.0
    } else {
        0.0
    }
}

/// Fair-coin version of [`apply_strategy_with_prior`].
pub fn apply_strategy<R: Rng + ?Sized>(
    fold: &[LabeledSample],
    strategy: Strategy,
    ensemble_size: usize,
    rng: &mut R,
) -> TrainingAssignment {
    apply_strategy_with_prior(fold, strategy, ensemble_size, 0.5, rng)
        .expect("0.5 is a valid probability")
}

/// Random assignments send an unsure sample to the positive class with
/// probability `p_positive`.
pub fn apply_strategy_with_prior<R: Rng + ?Sized>(
    fold: &[LabeledSample],
    strategy: Strategy,
    ensemble_size: usize,
    p_positive: f64,
    rng: &mut R,
) -> Result<TrainingAssignment> {
    if !(0.0..=1.0).contains(&p_positive) {
        return Err(Error::Config(format!("assignment probability {p_positive} outside [0, 1]")));
    }
    let coin = |rng: &mut R| if rng.gen_bool(p_positive) { 1.0 } else { 0.0 };

    let fixed: Vec<f64> = if strategy == Strategy::Fixed {
        fold.iter()
            .filter(|s| s.annotation == Annotation::Unsure)
            .map(|_| coin(rng))
            .collect()
    } else {
        Vec::new()
    };

    let members = (0..ensemble_size)
        .map(|_| {
            let mut unsure_seen = 0;
            fold.iter()
                .filter_map(|s| {
                    if s.annotation.is_sure() {
                        return Some((s.id, sure_target(s.annotation)));
                    }
                    let k = unsure_seen;
                    unsure_seen += 1;
                    match strategy {
                        Strategy::Exclusion => None,
                        Strategy::Soft05 => Some((s.id, 0.5)),
                        Strategy::Fixed => Some((s.id, fixed[k])),
                        Strategy::Varied => Some((s.id, coin(rng))),
                    }
                })
                .collect()
        })
        .collect();
    Ok(TrainingAssignment { members })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Centerline, N_POINTS};
    use crate::seed;

    fn fold(annotations: &[Annotation]) -> Vec<LabeledSample> {
        annotations
            .iter()
            .enumerate()
            .map(|(i, &a)| LabeledSample {
                id: i as u64,
                centerline: Centerline::new(vec![[0.0; 3]; N_POINTS]).unwrap(),
                annotation: a,
                latent_severity: None,
            })
            .collect()
    }

    use Annotation::*;

    #[test]
    fn no_unsure_means_no_difference() {
        let f = fold(&[Negative, Positive, Negative, Positive]);
        let reference = apply_strategy(&f, Strategy::Exclusion, 5, &mut seed::rng(1));
        for s in Strategy::ALL {
            assert_eq!(apply_strategy(&f, s, 5, &mut seed::rng(1)), reference);
        }
    }

    #[test]
    fn per_strategy_behaviour() {
        let f = fold(&[Negative, Unsure, Positive, Unsure, Unsure, Negative]);
        let mut rng = seed::rng(3);

        let excl = apply_strategy(&f, Strategy::Exclusion, 3, &mut rng);
        assert!(excl.members.iter().all(|m| m.len() == 3));

        let soft = apply_strategy(&f, Strategy::Soft05, 3, &mut rng);
        for m in &soft.members {
            let targets: Vec<f64> = m.iter().map(|(_, t)| *t).collect();
            assert_eq!(targets, vec![0.0, 0.5, 1.0, 0.5, 0.5, 0.0]);
        }

        let fixed = apply_strategy(&f, Strategy::Fixed, 4, &mut rng);
        for m in &fixed.members[1..] {
            assert_eq!(m, &fixed.members[0]);
        }

        for s in Strategy::ALL {
            let a = apply_strategy(&f, s, 4, &mut rng);
            assert_eq!(a.ensemble_size(), 4);
            for m in &a.members {
                for (id, t) in m {
                    match f[*id as usize].annotation {
                        Negative => assert_eq!(*t, 0.0),
                        Positive => assert_eq!(*t, 1.0),
                        Unsure => assert!([0.0, 0.5, 1.0].contains(t)),
                    }
                }
            }
        }
    }

    #[test]
    fn prior_weighted_assignment() {
        let f = fold(&[Unsure; 200]);
        let a = apply_strategy_with_prior(&f, Strategy::Varied, 1, 1.0, &mut seed::rng(0)).unwrap();
        assert!(a.members[0].iter().all(|(_, t)| *t == 1.0));
        assert!(apply_strategy_with_prior(&f, Strategy::Varied, 1, 1.5, &mut seed::rng(0)).is_err());
    }

    #[test]
    fn parse_names() {
        assert_eq!("0.5".parse::<Strategy>().unwrap(), Strategy::Soft05);
        assert_eq!("Varied".parse::<Strategy>().unwrap(), Strategy::Varied);
        assert!("coin".parse::<Strategy>().is_err());
    }
}
