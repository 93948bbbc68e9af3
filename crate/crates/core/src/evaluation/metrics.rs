use crate::dataset::SplitDataset;
use crate::error::{Error, Result};
use crate::models::{ModelGraph, ModelKind};
use crate::reliability::{recommend, Prediction, RecommendRule, ScoredCandidate};

/// One held-out interaction with the model's output for it.
#[derive(Debug, Clone, PartialEq)]
pub struct TestCandidate {
    pub item: usize,
    pub true_rating: u8,
    pub prediction: Prediction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserCandidates {
    pub user: usize,
    pub candidates: Vec<TestCandidate>,
}

/// Model outputs for every test interaction, grouped by user. Only users
/// holding at least one test interaction appear.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTestSet {
    pub v_max: u8,
    pub users: Vec<UserCandidates>,
}

impl ScoredTestSet {
    pub fn num_interactions(&self) -> usize {
        self.users.iter().map(|u| u.candidates.len()).sum()
    }
}

/// Scores every test interaction of `split` with `model`.
pub fn score_test_set(model: &ModelGraph, split: &SplitDataset) -> Result<ScoredTestSet> {
    let groups = split.test_by_user();
    let pairs: Vec<(usize, usize)> = groups
        .iter()
        .flat_map(|g| g.iter().map(|x| (x.user, x.item)))
        .collect();
    let mut preds = model.predict_many(&pairs)?.into_iter();
    let users = groups
        .into_iter()
        .enumerate()
        .filter(|(_, g)| !g.is_empty())
        .map(|(user, g)| UserCandidates {
            user,
            candidates: g
                .into_iter()
                .map(|x| TestCandidate {
                    item: x.item,
                    true_rating: x.rating,
                    prediction: preds.next().expect("one prediction per pair"),
                })
                .collect(),
        })
        .collect();
    Ok(ScoredTestSet {
        v_max: split.v_max,
        users,
    })
}

/// The rule that serves a trained model kind (the classification network
/// serves two rules: proposed and classification baseline).
pub fn default_rule(kind: ModelKind) -> RecommendRule {
    match kind {
        ModelKind::Classification => RecommendRule::Proposed,
        ModelKind::Regression | ModelKind::DeepMf => RecommendRule::Regression,
        ModelKind::Binary => RecommendRule::Binary,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UserOutcome {
    pub user: usize,
    pub issued: usize,
    pub hits: usize,
    pub relevant: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecommendSettings {
    pub n: usize,
    pub theta: u8,
    pub rule: RecommendRule,
    pub reliability_min: f64,
    /// Keep only candidates whose continuous score is `>= beta`.
    pub beta: Option<f64>,
}

fn user_outcome(u: &UserCandidates, s: &RecommendSettings) -> Result<UserOutcome> {
    let mut pool = Vec::with_capacity(u.candidates.len());
    for c in &u.candidates {
        if let Some(beta) = s.beta {
            let score = c.prediction.continuous_score().ok_or_else(|| {
                Error::InvalidArgument(format!("{} outputs have no rating-scale score", s.rule.name()))
            })?;
            if score < beta {
                continue;
            }
        }
        pool.push(ScoredCandidate {
            item: c.item,
            prediction: c.prediction.clone(),
        });
    }
    let recs = recommend(&pool, s.n, s.theta, s.rule, s.reliability_min)?;
    let relevant_of = |item: usize| {
        u.candidates
            .iter()
            .find(|c| c.item == item)
            .map(|c| c.true_rating >= s.theta)
            .unwrap_or(false)
    };
    let hits = recs.iter().filter(|r| relevant_of(r.item)).count();
    let relevant = u.candidates.iter().filter(|c| c.true_rating >= s.theta).count();
    Ok(UserOutcome {
        user: u.user,
        issued: recs.len(),
        hits,
        relevant,
    })
}

pub fn per_user_outcomes(set: &ScoredTestSet, s: &RecommendSettings) -> Result<Vec<UserOutcome>> {
    set.users.iter().map(|u| user_outcome(u, s)).collect()
}

/// A macro-averaged metric and how many users it averages over.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Averaged {
    pub value: Option<f64>,
    pub denominator: usize,
}

impl Averaged {
    fn from_ratios(ratios: impl Iterator<Item = f64>) -> Self {
        let (sum, n) = ratios.fold((0.0, 0usize), |(s, n), r| (s + r, n + 1));
        Averaged {
            value: (n > 0).then(|| sum / n as f64),
            denominator: n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopNResult {
    pub precision: Averaged,
    pub recall: Averaged,
}

/// Macro precision/recall: users with no issued recommendation are left out
/// of precision, users with no relevant test item out of recall.
pub fn summarize_topn(outcomes: &[UserOutcome]) -> TopNResult {
    TopNResult {
        precision: Averaged::from_ratios(
            outcomes
                .iter()
                .filter(|o| o.issued > 0)
                .map(|o| o.hits as f64 / o.issued as f64),
        ),
        recall: Averaged::from_ratios(
            outcomes
                .iter()
                .filter(|o| o.relevant > 0)
                .map(|o| o.hits as f64 / o.relevant as f64),
        ),
    }
}

pub fn evaluate_topn(
    set: &ScoredTestSet,
    n: usize,
    theta: u8,
    rule: RecommendRule,
    reliability_min: f64,
) -> Result<TopNResult> {
    let s = RecommendSettings {
        n,
        theta,
        rule,
        reliability_min,
        beta: None,
    };
    Ok(summarize_topn(&per_user_outcomes(set, &s)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerRatingResult {
    pub precision: Option<f64>,
    /// Test interactions predicted as this rating.
    pub predicted: usize,
    pub correct: usize,
}

/// Over all test interactions: of those predicted as `rating`, the fraction
/// whose true rating is `rating`.
pub fn evaluate_per_rating(set: &ScoredTestSet, rating: u8) -> Result<PerRatingResult> {
    let mut predicted = 0;
    let mut correct = 0;
    for c in set.users.iter().flat_map(|u| &u.candidates) {
        let p = c
            .prediction
            .discrete_rating(set.v_max)
            .ok_or(Error::UnsupportedPerRating("binary"))?;
        if p == rating {
            predicted += 1;
            if c.true_rating == rating {
                correct += 1;
            }
        }
    }
    Ok(PerRatingResult {
        precision: (predicted > 0).then(|| correct as f64 / predicted as f64),
        predicted,
        correct,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageResult {
    pub precision: Averaged,
    pub coverage: f64,
    pub issued: usize,
    /// `N ×` users holding test interactions.
    pub requested: usize,
}

/// Precision and coverage after dropping candidates scored below `beta`.
pub fn evaluate_precision_vs_coverage(
    set: &ScoredTestSet,
    n: usize,
    theta: u8,
    beta: f64,
    rule: RecommendRule,
    reliability_min: f64,
) -> Result<CoverageResult> {
    let s = RecommendSettings {
        n,
        theta,
        rule,
        reliability_min,
        beta: Some(beta),
    };
    let outcomes = per_user_outcomes(set, &s)?;
    let issued: usize = outcomes.iter().map(|o| o.issued).sum();
    let requested = n * set.users.len();
    Ok(CoverageResult {
        precision: summarize_topn(&outcomes).precision,
        coverage: if requested == 0 {
            0.0
        } else {
            issued as f64 / requested as f64
        },
        issued,
        requested,
    })
}
