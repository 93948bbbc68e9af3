use std::collections::BTreeMap;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::metrics::{
    evaluate_per_rating, evaluate_precision_vs_coverage, evaluate_topn, ScoredTestSet,
};
use crate::error::{Error, Result};
use crate::reliability::{RecommendRule, DEFAULT_RELIABILITY_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    TopN,
    PerRating,
    Pvc,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::TopN, Family::PerRating, Family::Pvc];

    pub fn name(self) -> &'static str {
        match self {
            Family::TopN => "topn",
            Family::PerRating => "perrating",
            Family::Pvc => "pvc",
        }
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "topn" => Ok(Family::TopN),
            "perrating" => Ok(Family::PerRating),
            "pvc" => Ok(Family::Pvc),
            other => Err(Error::InvalidArgument(format!("unknown metric family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n_values: Vec<usize>,
    pub theta_values: Vec<u8>,
    pub beta_values: Vec<f64>,
    /// Kept for parity with the experiment table; per-rating precision is
    /// computed over all test interactions and does not depend on N.
    pub per_rating_n: Vec<usize>,
    /// List length for the precision-vs-coverage family.
    pub pvc_n: usize,
    pub reliability_min: f64,
    pub families: Vec<Family>,
}

impl EvalConfig {
    /// Default grids for a `1..=v_max` score range.
    pub fn for_scale(v_max: u8) -> Self {
        let theta_values = if v_max >= 10 { vec![7, 8, 9] } else { vec![3, 4, 5] };
        Self {
            n_values: vec![2, 4, 6, 8, 10],
            theta_values,
            beta_values: vec![4.0, 4.2, 4.4, 4.6, 4.8],
            per_rating_n: vec![2, 6, 10],
            pvc_n: 10,
            reliability_min: DEFAULT_RELIABILITY_MIN,
            families: Family::ALL.to_vec(),
        }
    }

    pub fn validate(&self, v_max: u8) -> Result<()> {
        if self.n_values.iter().any(|&n| n == 0) || self.pvc_n == 0 {
            return Err(Error::Config("N must be ≥ 1".into()));
        }
        if let Some(t) = self.theta_values.iter().find(|&&t| t == 0 || t > v_max) {
            return Err(Error::Config(format!("theta {t} outside [1, {v_max}]")));
        }
        if let Some(b) = self
            .beta_values
            .iter()
            .find(|&&b| !(1.0..=f64::from(v_max)).contains(&b))
        {
            return Err(Error::Config(format!("beta {b} outside [1, {v_max}]")));
        }
        Ok(())
    }
}

/// Scored test sets for one evaluated model. Binary models are trained per
/// relevancy threshold, so they carry one set per theta.
#[derive(Debug, Clone)]
pub enum ScoredSets {
    Shared(ScoredTestSet),
    PerTheta(BTreeMap<u8, ScoredTestSet>),
}

impl ScoredSets {
    fn for_theta(&self, theta: u8) -> Option<&ScoredTestSet> {
        match self {
            ScoredSets::Shared(s) => Some(s),
            ScoredSets::PerTheta(m) => m.get(&theta),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelEntry {
    pub name: String,
    pub rule: RecommendRule,
    pub scored: ScoredSets,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ValueKind {
    Precision,
    Recall,
    Coverage,
}

impl ValueKind {
    pub fn name(self) -> &'static str {
        match self {
            ValueKind::Precision => "precision",
            ValueKind::Recall => "recall",
            ValueKind::Coverage => "coverage",
        }
    }
}

/// One metric cell. `value` is `None` when its denominator is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub family: Family,
    pub model: String,
    pub n: Option<usize>,
    pub theta: Option<u8>,
    pub beta: Option<f64>,
    pub rating: Option<u8>,
    pub value_kind: ValueKind,
    pub value: Option<f64>,
    pub denominator: usize,
}

pub const CSV_HEADER: &str = "family,model,N,theta,beta,rating,value_kind,value,denominator";

impl MetricRow {
    pub fn to_csv(&self) -> String {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.family.name(),
            self.model,
            opt(self.n),
            opt(self.theta),
            opt(self.beta),
            opt(self.rating),
            self.value_kind.name(),
            opt(self.value),
            self.denominator
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsReport {
    pub rows: Vec<MetricRow>,
}

impl MetricsReport {
    pub fn family(&self, family: Family) -> impl Iterator<Item = &MetricRow> {
        self.rows.iter().filter(move |r| r.family == family)
    }

    pub fn topn(&self, model: &str, n: usize, theta: u8, kind: ValueKind) -> Option<&MetricRow> {
        self.family(Family::TopN)
            .find(|r| r.model == model && r.n == Some(n) && r.theta == Some(theta) && r.value_kind == kind)
    }

    pub fn per_rating(&self, model: &str, rating: u8) -> Option<&MetricRow> {
        self.family(Family::PerRating)
            .find(|r| r.model == model && r.rating == Some(rating))
    }

    pub fn pvc(&self, model: &str, theta: u8, beta: f64, kind: ValueKind) -> Option<&MetricRow> {
        self.family(Family::Pvc).find(|r| {
            r.model == model && r.theta == Some(theta) && r.beta == Some(beta) && r.value_kind == kind
        })
    }

    pub fn write_csv<W: Write>(&self, family: Option<Family>, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in self.rows.iter().filter(|r| family.map_or(true, |f| r.family == f)) {
            writeln!(w, "{}", r.to_csv())?;
        }
        Ok(())
    }
}

/// Fills every requested family for every model entry.
pub fn run_experiment_grid(models: &[ModelEntry], v_max: u8, cfg: &EvalConfig) -> Result<MetricsReport> {
    cfg.validate(v_max)?;
    let mut rows = Vec::new();
    for family in Family::ALL.into_iter().filter(|f| cfg.families.contains(f)) {
        for m in models {
            match family {
                Family::TopN => {
                    for &n in &cfg.n_values {
                        for &theta in &cfg.theta_values {
                            let Some(set) = m.scored.for_theta(theta) else {
                                continue;
                            };
                            let r = evaluate_topn(set, n, theta, m.rule, cfg.reliability_min)?;
                            for (kind, avg) in [(ValueKind::Precision, r.precision), (ValueKind::Recall, r.recall)] {
                                rows.push(MetricRow {
                                    family,
                                    model: m.name.clone(),
                                    n: Some(n),
                                    theta: Some(theta),
                                    beta: None,
                                    rating: None,
                                    value_kind: kind,
                                    value: avg.value,
                                    denominator: avg.denominator,
                                });
                            }
                        }
                    }
                }
                Family::PerRating => {
                    if matches!(m.rule, RecommendRule::Binary | RecommendRule::ClassificationBaseline) {
                        continue;
                    }
                    let ScoredSets::Shared(set) = &m.scored else {
                        continue;
                    };
                    for rating in 1..=v_max {
                        let r = evaluate_per_rating(set, rating)?;
                        rows.push(MetricRow {
                            family,
                            model: m.name.clone(),
                            n: None,
                            theta: None,
                            beta: None,
                            rating: Some(rating),
                            value_kind: ValueKind::Precision,
                            value: r.precision,
                            denominator: r.predicted,
                        });
                    }
                }
                Family::Pvc => {
                    if m.rule == RecommendRule::Binary {
                        continue;
                    }
                    for &theta in &cfg.theta_values {
                        let Some(set) = m.scored.for_theta(theta) else {
                            continue;
                        };
                        for &beta in &cfg.beta_values {
                            let r = evaluate_precision_vs_coverage(
                                set,
                                cfg.pvc_n,
                                theta,
                                beta,
                                m.rule,
                                cfg.reliability_min,
                            )?;
                            let base = MetricRow {
                                family,
                                model: m.name.clone(),
                                n: Some(cfg.pvc_n),
                                theta: Some(theta),
                                beta: Some(beta),
                                rating: None,
                                value_kind: ValueKind::Precision,
                                value: r.precision.value,
                                denominator: r.precision.denominator,
                            };
                            rows.push(MetricRow {
                                value_kind: ValueKind::Coverage,
                                value: Some(r.coverage),
                                denominator: r.requested,
                                ..base.clone()
                            });
                            rows.push(base);
                        }
                    }
                }
            }
        }
    }
    Ok(MetricsReport { rows })
}
