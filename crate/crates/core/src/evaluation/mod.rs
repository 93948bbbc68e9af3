//! Top-N precision/recall, per-rating precision and precision-vs-coverage.
//!
//! Candidates for a user are that user's held-out test items. Precision and
//! recall are macro averages over users; a user with nothing to average
//! (no list issued, no relevant item) is left out rather than counted as 0.

pub mod grid;
pub mod metrics;

pub use grid::{
    run_experiment_grid, EvalConfig, Family, MetricRow, MetricsReport, ModelEntry, ScoredSets, ValueKind,
    CSV_HEADER,
};
pub use metrics::{
    default_rule, evaluate_per_rating, evaluate_precision_vs_coverage, evaluate_topn, per_user_outcomes,
    score_test_set, summarize_topn, Averaged, CoverageResult, PerRatingResult, RecommendSettings,
    ScoredTestSet, TestCandidate, TopNResult, UserCandidates, UserOutcome,
};
