//! ⟨rating, reliability⟩ pairs and the recommendation rules built on them.
//!
//! The classification network returns a probability for every rating value.
//! Its argmax is the discrete prediction and the winning probability is how
//! much the model trusts it. Recommendations keep only confident, high
//! predictions and order them by that trust.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability vector over the ratings `1..=V`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution {
    probs: Vec<f64>,
}

impl ClassDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("empty class distribution".into()));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidArgument("probabilities must lie in [0, 1]".into()));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn v_max(&self) -> u8 {
        self.probs.len() as u8
    }

    /// Argmax as a rating plus its probability. Ties go to the lowest rating.
    pub fn to_pair(&self) -> PredictionPair {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        PredictionPair {
            rating: best as u8 + 1,
            reliability: self.probs[best],
        }
    }

    /// `Σ r · p_r`, a continuous score in `[1, V]`.
    pub fn expected_rating(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionPair {
    pub rating: u8,
    pub reliability: f64,
}

/// Raw model output for one (user, item).
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    /// Classification head.
    Distribution(ClassDistribution),
    /// Regression-family score, already clamped to `[1, V]`.
    Score(f64),
    /// Binary head: probability of "relevant".
    Probability(f64),
}

impl Prediction {
    /// Rating-scale score used by the beta filter, if the output has one.
    pub fn continuous_score(&self) -> Option<f64> {
        match self {
            Prediction::Distribution(d) => Some(d.expected_rating()),
            Prediction::Score(s) => Some(*s),
            Prediction::Probability(_) => None,
        }
    }

    /// Discrete rating prediction used by per-rating evaluation.
    pub fn discrete_rating(&self, v_max: u8) -> Option<u8> {
        match self {
            Prediction::Distribution(d) => Some(d.to_pair().rating),
            Prediction::Score(s) => Some(round_half_up(*s, v_max)),
            Prediction::Probability(_) => None,
        }
    }
}

/// Clamp to `[1, v_max]`, then round to nearest with halves going up.
pub fn round_half_up(score: f64, v_max: u8) -> u8 {
    // positive halves round away from zero, i.e. up
    (score.clamp(1.0, f64::from(v_max)).round() as u8).clamp(1, v_max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCandidate {
    pub item: usize,
    pub prediction: Prediction,
}

/// How a model's candidates become an ordered top-N list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RecommendRule {
    /// Classification output filtered and ranked by reliability.
    Proposed,
    /// Classification output ranked by expected rating, reliability ignored.
    ClassificationBaseline,
    /// Regression and DeepMF scores.
    Regression,
    /// Binary relevance probability.
    Binary,
}

impl RecommendRule {
    pub fn name(self) -> &'static str {
        match self {
            RecommendRule::Proposed => "proposed",
            RecommendRule::ClassificationBaseline => "classification",
            RecommendRule::Regression => "regression",
            RecommendRule::Binary => "binary",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recommendation {
    pub item: usize,
    /// Predicted rating: argmax for classification, the clamped score for
    /// regression, `None` for binary.
    pub rating: Option<f64>,
    /// Present only for the proposed rule.
    pub reliability: Option<f64>,
    /// The key the list is sorted by.
    pub score: f64,
}

fn wrong_kind(rule: RecommendRule) -> Error {
    Error::InvalidArgument(format!(
        "candidate prediction does not match the {} rule",
        rule.name()
    ))
}

fn ensure_n(n: usize) -> Result<()> {
    if n == 0 {
        Err(Error::InvalidArgument("N must be ≥ 1".into()))
    } else {
        Ok(())
    }
}

/// An item with its ⟨rating, reliability⟩ pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairCandidate {
    pub item: usize,
    pub pair: PredictionPair,
}

/// Keeps pairs with `rating >= theta` and `reliability >= reliability_min`,
/// sorted by reliability, then rating (both descending), then item id.
pub fn recommend_classification(
    candidates: &[PairCandidate],
    n: usize,
    theta: u8,
    reliability_min: f64,
) -> Result<Vec<Recommendation>> {
    ensure_n(n)?;
    let mut picked: Vec<PairCandidate> = candidates
        .iter()
        .filter(|c| c.pair.rating >= theta && c.pair.reliability >= reliability_min)
        .copied()
        .collect();
    picked.sort_by(|a, b| {
        b.pair
            .reliability
            .total_cmp(&a.pair.reliability)
            .then(b.pair.rating.cmp(&a.pair.rating))
            .then(a.item.cmp(&b.item))
    });
    picked.truncate(n);
    Ok(picked
        .into_iter()
        .map(|c| Recommendation {
            item: c.item,
            rating: Some(f64::from(c.pair.rating)),
            reliability: Some(c.pair.reliability),
            score: c.pair.reliability,
        })
        .collect())
}

/// Pairs for every classification candidate; errors on other outputs.
pub fn to_pair_candidates(candidates: &[ScoredCandidate]) -> Result<Vec<PairCandidate>> {
    candidates
        .iter()
        .map(|c| match &c.prediction {
            Prediction::Distribution(d) => Ok(PairCandidate {
                item: c.item,
                pair: d.to_pair(),
            }),
            _ => Err(wrong_kind(RecommendRule::Proposed)),
        })
        .collect()
}

/// Baseline rules: no reliability information is used.
pub fn recommend_baseline(
    candidates: &[ScoredCandidate],
    n: usize,
    theta: u8,
    rule: RecommendRule,
) -> Result<Vec<Recommendation>> {
    ensure_n(n)?;
    let mut picked = Vec::new();
    for c in candidates {
        let rec = match (rule, &c.prediction) {
            (RecommendRule::ClassificationBaseline, Prediction::Distribution(d)) => {
                let rating = d.to_pair().rating;
                (rating >= theta).then(|| Recommendation {
                    item: c.item,
                    rating: Some(f64::from(rating)),
                    reliability: None,
                    score: d.expected_rating(),
                })
            }
            (RecommendRule::Regression, Prediction::Score(s)) => {
                (*s >= f64::from(theta)).then_some(Recommendation {
                    item: c.item,
                    rating: Some(*s),
                    reliability: None,
                    score: *s,
                })
            }
            (RecommendRule::Binary, Prediction::Probability(p)) => (*p >= 0.5).then_some(Recommendation {
                item: c.item,
                rating: None,
                reliability: None,
                score: *p,
            }),
            (RecommendRule::Proposed, _) => {
                return Err(Error::InvalidArgument(
                    "the proposed rule is served by recommend_classification".into(),
                ))
            }
            _ => return Err(wrong_kind(rule)),
        };
        picked.extend(rec);
    }
    picked.sort_by(|a, b| match b.score.total_cmp(&a.score) {
        Ordering::Equal => a.item.cmp(&b.item),
        o => o,
    });
    picked.truncate(n);
    Ok(picked)
}

/// Dispatches to the rule's recommender. The proposed rule uses a
/// reliability floor of `reliability_min`.
pub fn recommend(
    candidates: &[ScoredCandidate],
    n: usize,
    theta: u8,
    rule: RecommendRule,
    reliability_min: f64,
) -> Result<Vec<Recommendation>> {
    match rule {
        RecommendRule::Proposed => {
            recommend_classification(&to_pair_candidates(candidates)?, n, theta, reliability_min)
        }
        other => recommend_baseline(candidates, n, theta, other),
    }
}

pub const DEFAULT_RELIABILITY_MIN: f64 = 0.5;

#[cfg(test)]
mod tests {
    use super::*;

    /// A distribution whose argmax is `rating` with probability `rel`; the
    /// remaining mass is spread over the other classes.
    fn dist_for(rating: u8, rel: f64, v_max: u8) -> ClassDistribution {
        let rest = (1.0 - rel) / f64::from(v_max - 1);
        let probs = (1..=v_max).map(|r| if r == rating { rel } else { rest }).collect();
        ClassDistribution::new(probs).unwrap()
    }

    #[test]
    fn pair_extraction() {
        let d = ClassDistribution::new(vec![0.1, 0.1, 0.2, 0.5, 0.1]).unwrap();
        assert_eq!(d.to_pair(), PredictionPair { rating: 4, reliability: 0.5 });
        let u = ClassDistribution::new(vec![0.2; 5]).unwrap();
        assert_eq!(u.to_pair(), PredictionPair { rating: 1, reliability: 0.2 });
        let h = ClassDistribution::new(vec![0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert_eq!(h.to_pair(), PredictionPair { rating: 5, reliability: 1.0 });
    }

    #[test]
    fn expected_rating_values() {
        let d = |p: Vec<f64>| ClassDistribution::new(p).unwrap().expected_rating();
        assert_eq!(d(vec![0.0, 0.0, 1.0, 0.0, 0.0]), 3.0);
        assert!((d(vec![0.2; 5]) - 3.0).abs() < 1e-12);
        assert_eq!(d(vec![0.0, 0.0, 0.0, 0.5, 0.5]), 4.5);
    }

    #[test]
    fn invalid_distributions_are_rejected() {
        assert!(ClassDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(ClassDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(ClassDistribution::new(vec![]).is_err());
    }

    #[test]
    fn unreliable_candidates_are_dropped() {
        let cands: Vec<_> = (0..4)
            .map(|i| ScoredCandidate {
                item: i,
                prediction: Prediction::Distribution(dist_for(5, 0.45, 5)),
            })
            .collect();
        let pairs = to_pair_candidates(&cands).unwrap();
        assert!(recommend_classification(&pairs, 10, 4, 0.5).unwrap().is_empty());
        assert!(recommend_classification(&pairs, 0, 4, 0.5).is_err());
        assert!(recommend(&cands, 3, 4, RecommendRule::Proposed, 0.4).unwrap().len() == 3);
    }

    #[test]
    fn regression_and_binary_rules() {
        let scores = [(0, 4.6), (1, 3.9), (2, 4.1)];
        let cands: Vec<_> = scores
            .iter()
            .map(|&(item, s)| ScoredCandidate {
                item,
                prediction: Prediction::Score(s),
            })
            .collect();
        let out = recommend_baseline(&cands, 2, 4, RecommendRule::Regression).unwrap();
        assert_eq!(out.iter().map(|r| r.item).collect::<Vec<_>>(), vec![0, 2]);

        let cands = vec![
            ScoredCandidate { item: 0, prediction: Prediction::Probability(0.9) },
            ScoredCandidate { item: 1, prediction: Prediction::Probability(0.4) },
        ];
        let out = recommend_baseline(&cands, 2, 4, RecommendRule::Binary).unwrap();
        assert_eq!(out.iter().map(|r| r.item).collect::<Vec<_>>(), vec![0]);
        assert!(recommend_baseline(&cands, 2, 4, RecommendRule::Regression).is_err());
    }

    fn worked_example() -> Vec<PairCandidate> {
        [(5, 0.3), (5, 0.2), (5, 1.0), (5, 0.9), (4, 0.8), (4, 0.4), (4, 0.7), (3, 0.7)]
            .iter()
            .enumerate()
            .map(|(item, &(rating, reliability))| PairCandidate {
                item,
                pair: PredictionPair { rating, reliability },
            })
            .collect()
    }

    #[test]
    fn worked_example_ordering() {
        let out = recommend_classification(&worked_example(), 10, 4, DEFAULT_RELIABILITY_MIN).unwrap();
        let got: Vec<_> = out.iter().map(|r| (r.rating.unwrap(), r.reliability.unwrap())).collect();
        assert_eq!(got, vec![(5.0, 1.0), (5.0, 0.9), (4.0, 0.8), (4.0, 0.7)]);
        let top2 = recommend_classification(&worked_example(), 2, 4, DEFAULT_RELIABILITY_MIN).unwrap();
        assert_eq!(top2.iter().map(|r| r.item).collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn reliability_ties_fall_back_to_rating_then_item() {
        let pairs = [(3, 4, 0.7), (1, 5, 0.7), (0, 4, 0.7)].map(|(item, rating, reliability)| PairCandidate {
            item,
            pair: PredictionPair { rating, reliability },
        });
        let out = recommend_classification(&pairs, 3, 4, 0.5).unwrap();
        assert_eq!(out.iter().map(|r| r.item).collect::<Vec<_>>(), vec![1, 0, 3]);
    }

    #[test]
    fn half_up_rounding() {
        assert_eq!(round_half_up(3.5, 5), 4);
        assert_eq!(round_half_up(3.49, 5), 3);
        assert_eq!(round_half_up(0.2, 5), 1);
        assert_eq!(round_half_up(6.3, 5), 5);
        assert_eq!(round_half_up(2.4999999999999996, 5), 2);
    }
}
