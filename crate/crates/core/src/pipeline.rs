//! Reproducible runs. A run directory holds
//! `config`, `split.csv`, `checkpoints/`, `logs/` and `metrics/`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;

use crate::dataset::{self, DatasetIndex, FileFormat, ScoreRange, SplitDataset};
use crate::error::{Error, Result};
use crate::evaluation::{
    default_rule, run_experiment_grid, score_test_set, EvalConfig, Family, MetricsReport, ModelEntry,
    ScoredSets,
};
use crate::models::{fit, Checkpoint, ModelGraph, ModelKind, RegressionTrunk, TrainConfig, TrainHistory};
use crate::reliability::{recommend as rank, Recommendation, RecommendRule, ScoredCandidate};

pub const CONFIG_FILE: &str = "config";
pub const SPLIT_FILE: &str = "split.csv";

/// Everything needed to reproduce a run. Stored as flat `key = value` text
/// whose keys match the command-line flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub format: FileFormat,
    pub scores: ScoreRange,
    pub train_ratio: f64,
    /// Seeds the split and every training stream.
    pub seed: u64,
    pub models: Vec<ModelKind>,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        let scores = ScoreRange { v_max: 5 };
        let train = TrainConfig::default();
        Self {
            data: None,
            format: FileFormat::Ml100k,
            scores,
            train_ratio: 0.8,
            seed: train.seed,
            models: ModelKind::ALL.to_vec(),
            train,
            eval: EvalConfig::for_scale(scores.v_max),
            out: PathBuf::from("runs/default"),
        }
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| Error::Config(format!("bad value `{s}` for `{key}`")))
        })
        .collect()
}

fn parse_one<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse::<T>()
        .map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

impl RunConfig {
    pub const KEYS: [&'static str; 21] = [
        "data",
        "format",
        "scores",
        "train_ratio",
        "seed",
        "model",
        "epochs",
        "batch",
        "lr",
        "embed",
        "hidden",
        "dropout",
        "shuffle",
        "regression_trunk",
        "deepmf_layers",
        "n",
        "theta",
        "beta",
        "pvc_n",
        "reliability_min",
        "family",
    ];

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "data" => self.data = (!v.is_empty()).then(|| PathBuf::from(v)),
            "format" => self.format = v.parse()?,
            "scores" => {
                let scores: ScoreRange = v.parse()?;
                if scores != self.scores {
                    // keep user-set grids, but move the theta default to the new scale
                    let fresh = EvalConfig::for_scale(scores.v_max);
                    if self.eval.theta_values == EvalConfig::for_scale(self.scores.v_max).theta_values {
                        self.eval.theta_values = fresh.theta_values;
                    }
                }
                self.scores = scores;
            }
            "train_ratio" => self.train_ratio = parse_one(key, v)?,
            "seed" => {
                self.seed = parse_one(key, v)?;
                self.train.seed = self.seed;
            }
            "model" => {
                self.models = if v == "all" {
                    ModelKind::ALL.to_vec()
                } else {
                    parse_list(key, v)?
                }
            }
            "epochs" => self.train.epochs = parse_one(key, v)?,
            "batch" => self.train.batch_size = parse_one(key, v)?,
            "lr" => self.train.learning_rate = parse_one(key, v)?,
            "embed" => self.train.embed_dim = parse_one(key, v)?,
            "hidden" => self.train.hidden = parse_list(key, v)?,
            "dropout" => self.train.dropout = parse_one(key, v)?,
            "shuffle" => self.train.shuffle = parse_one(key, v)?,
            "regression_trunk" => self.train.regression_trunk = v.parse::<RegressionTrunk>()?,
            "deepmf_layers" => self.train.deepmf_layers = parse_list(key, v)?,
            "n" => self.eval.n_values = parse_list(key, v)?,
            "theta" => self.eval.theta_values = parse_list(key, v)?,
            "beta" => self.eval.beta_values = parse_list(key, v)?,
            "pvc_n" => self.eval.pvc_n = parse_one(key, v)?,
            "reliability_min" => self.eval.reliability_min = parse_one(key, v)?,
            "family" => {
                self.eval.families = if v == "all" {
                    Family::ALL.to_vec()
                } else {
                    parse_list(key, v)?
                }
            }
            "out" => self.out = PathBuf::from(v),
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.train;
        let e = &self.eval;
        Some(match key {
            "data" => self.data.as_ref().map(|p| p.display().to_string()).unwrap_or_default(),
            "format" => self.format.to_string(),
            "scores" => self.scores.to_string(),
            "train_ratio" => self.train_ratio.to_string(),
            "seed" => self.seed.to_string(),
            "model" => join(&self.models),
            "epochs" => t.epochs.to_string(),
            "batch" => t.batch_size.to_string(),
            "lr" => t.learning_rate.to_string(),
            "embed" => t.embed_dim.to_string(),
            "hidden" => join(&t.hidden),
            "dropout" => t.dropout.to_string(),
            "shuffle" => t.shuffle.to_string(),
            "regression_trunk" => t.regression_trunk.to_string(),
            "deepmf_layers" => join(&t.deepmf_layers),
            "n" => join(&e.n_values),
            "theta" => join(&e.theta_values),
            "beta" => join(&e.beta_values),
            "pvc_n" => e.pvc_n.to_string(),
            "reliability_min" => e.reliability_min.to_string(),
            "family" => e.families.iter().map(|f| f.name()).collect::<Vec<_>>().join(","),
            _ => return None,
        })
    }

    /// Applies a `key = value` text on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// The output directory is where the text lives, so it is not written.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in Self::KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key).unwrap_or_default());
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.eval.validate(self.scores.v_max)?;
        if self.models.is_empty() {
            return Err(Error::Config("no model selected".into()));
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return Err(Error::Config(format!("train_ratio must lie in (0, 1), got {}", self.train_ratio)));
        }
        Ok(())
    }

    /// Keys that decide the split; a change invalidates `split.csv`.
    fn split_signature(&self) -> [String; 5] {
        ["data", "format", "scores", "train_ratio", "seed"].map(|k| self.get(k).unwrap_or_default())
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| Error::Config("no dataset given (`data`)".into()))
    }
}

pub fn read_config(dir: &Path) -> Result<Option<RunConfig>> {
    let path = dir.join(CONFIG_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut cfg = RunConfig::from_text(&text)?;
    cfg.out = dir.to_path_buf();
    Ok(Some(cfg))
}

pub fn write_config(cfg: &RunConfig) -> Result<()> {
    create_dir(&cfg.out)?;
    let path = cfg.out.join(CONFIG_FILE);
    fs::write(&path, cfg.to_text()).map_err(|e| Error::io(&path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestSummary {
    pub num_users: usize,
    pub num_items: usize,
    pub num_ratings: usize,
    /// Percent of empty user×item cells.
    pub sparsity: f64,
    pub train: usize,
    pub test: usize,
}

impl std::fmt::Display for IngestSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} users, {} items, {} ratings, sparsity {:.3}% ({} train / {} test)",
            self.num_users, self.num_items, self.num_ratings, self.sparsity, self.train, self.test
        )
    }
}

/// Loads, de-duplicates and indexes the configured dataset.
pub fn load_dataset(cfg: &RunConfig) -> Result<(Vec<dataset::RatingRecord>, DatasetIndex)> {
    let records = dataset::load_ratings(cfg.data_path()?, cfg.format, cfg.scores)?;
    let records = dataset::dedupe_keep_last(records);
    let index = dataset::build_index(&records, cfg.scores)?;
    Ok((records, index))
}

/// Loads and splits the dataset, then writes `config` and `split.csv`.
pub fn ingest(cfg: &RunConfig) -> Result<(IngestSummary, SplitDataset)> {
    cfg.validate()?;
    let (records, index) = load_dataset(cfg)?;
    let split = dataset::split(&records, &index, cfg.train_ratio, cfg.seed)?;
    write_config(cfg)?;
    write_file(&cfg.out.join(SPLIT_FILE), |w| split.write_csv(w))?;
    let summary = IngestSummary {
        num_users: index.num_users(),
        num_items: index.num_items(),
        num_ratings: index.num_ratings,
        sparsity: dataset::sparsity(&index),
        train: split.train.len(),
        test: split.test.len(),
    };
    Ok((summary, split))
}

/// Reads the run's `split.csv`. Every indexed id occurs in one of the two
/// partitions, so the dimensions are recovered from the dump.
pub fn load_split(cfg: &RunConfig) -> Result<SplitDataset> {
    let path = cfg.out.join(SPLIT_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    SplitDataset::read_csv(&text, cfg.scores, cfg.seed, cfg.train_ratio)
}

/// Returns the run's split, ingesting first when `split.csv` is missing or
/// was produced by different split settings.
pub fn ensure_split(cfg: &RunConfig) -> Result<SplitDataset> {
    let current = read_config(&cfg.out)?;
    let fresh = cfg.out.join(SPLIT_FILE).exists()
        && current.is_some_and(|c| c.split_signature() == cfg.split_signature());
    if fresh {
        load_split(cfg)
    } else {
        let (summary, split) = ingest(cfg)?;
        log::info!("ingested {summary}");
        Ok(split)
    }
}

/// Checkpoint/log stem for a model. Binary models are trained per theta.
pub fn artifact_name(kind: ModelKind, theta: Option<u8>) -> String {
    match (kind, theta) {
        (ModelKind::Binary, Some(t)) => format!("binary_theta{t}"),
        _ => kind.name().to_string(),
    }
}

pub fn checkpoint_path(dir: &Path, kind: ModelKind, theta: Option<u8>) -> PathBuf {
    dir.join("checkpoints").join(format!("{}.json", artifact_name(kind, theta)))
}

pub fn log_path(dir: &Path, kind: ModelKind, theta: Option<u8>) -> PathBuf {
    dir.join("logs").join(format!("{}.csv", artifact_name(kind, theta)))
}

#[derive(Debug)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub theta: Option<u8>,
    pub model: ModelGraph,
    pub history: TrainHistory,
}

/// Trains every configured model (in parallel) and writes checkpoints and
/// logs. Returns models in configuration order.
pub fn train(cfg: &RunConfig, split: &SplitDataset) -> Result<Vec<TrainedModel>> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &kind in &cfg.models {
        if kind == ModelKind::Binary {
            jobs.extend(cfg.eval.theta_values.iter().map(|&t| (kind, Some(t))));
        } else {
            jobs.push((kind, None));
        }
    }
    create_dir(&cfg.out.join("checkpoints"))?;
    create_dir(&cfg.out.join("logs"))?;
    write_config(cfg)?;
    jobs.into_par_iter()
        .map(|(kind, theta)| {
            let mut model = ModelGraph::build(kind, split, theta.unwrap_or(0), &cfg.train)?;
            let history = fit(&mut model, split)?;
            Checkpoint::from_model(&model).save(&checkpoint_path(&cfg.out, kind, theta))?;
            write_file(&log_path(&cfg.out, kind, theta), |w| history.write_log(w))?;
            Ok(TrainedModel {
                kind,
                theta,
                model,
                history,
            })
        })
        .collect()
}

pub fn load_model(dir: &Path, kind: ModelKind, theta: Option<u8>) -> Result<ModelGraph> {
    let path = checkpoint_path(dir, kind, theta);
    if !path.exists() {
        let what = match theta {
            Some(t) if kind == ModelKind::Binary => format!("{kind} (theta {t})"),
            _ => kind.to_string(),
        };
        return Err(Error::Checkpoint(format!(
            "missing checkpoint for model `{what}` at {}",
            path.display()
        )));
    }
    Checkpoint::load(&path)?.into_model()
}

/// Model entries the grid evaluates for one trained kind. The
/// classification network serves both the proposed and the
/// classification-baseline rule.
pub fn model_entries(
    kind: ModelKind,
    split: &SplitDataset,
    load: &mut dyn FnMut(ModelKind, Option<u8>) -> Result<ModelGraph>,
    thetas: &[u8],
) -> Result<Vec<ModelEntry>> {
    Ok(match kind {
        ModelKind::Classification => {
            let set = score_test_set(&load(kind, None)?, split)?;
            vec![
                ModelEntry {
                    name: RecommendRule::Proposed.name().into(),
                    rule: RecommendRule::Proposed,
                    scored: ScoredSets::Shared(set.clone()),
                },
                ModelEntry {
                    name: RecommendRule::ClassificationBaseline.name().into(),
                    rule: RecommendRule::ClassificationBaseline,
                    scored: ScoredSets::Shared(set),
                },
            ]
        }
        ModelKind::Binary => {
            let mut sets = BTreeMap::new();
            for &t in thetas {
                sets.insert(t, score_test_set(&load(kind, Some(t))?, split)?);
            }
            vec![ModelEntry {
                name: kind.name().into(),
                rule: RecommendRule::Binary,
                scored: ScoredSets::PerTheta(sets),
            }]
        }
        ModelKind::Regression | ModelKind::DeepMf => vec![ModelEntry {
            name: kind.name().into(),
            rule: default_rule(kind),
            scored: ScoredSets::Shared(score_test_set(&load(kind, None)?, split)?),
        }],
    })
}

/// Runs the experiment grid over the run's checkpoints and writes one CSV
/// per selected family plus `metrics/all.csv`.
pub fn evaluate(cfg: &RunConfig, split: &SplitDataset) -> Result<MetricsReport> {
    cfg.validate()?;
    let mut entries = Vec::new();
    let mut load = |k, t| load_model(&cfg.out, k, t);
    for &kind in &cfg.models {
        entries.extend(model_entries(kind, split, &mut load, &cfg.eval.theta_values)?);
    }
    let report = run_experiment_grid(&entries, split.v_max, &cfg.eval)?;
    let dir = cfg.out.join("metrics");
    create_dir(&dir)?;
    for &family in Family::ALL.iter().filter(|f| cfg.eval.families.contains(f)) {
        write_file(&dir.join(format!("{}.csv", family.name())), |w| report.write_csv(Some(family), w))?;
    }
    write_file(&dir.join("all.csv"), |w| report.write_csv(None, w))?;
    Ok(report)
}

/// One printed recommendation, with raw ids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecommendationRow {
    pub user_idx: usize,
    pub rank: usize,
    pub item_idx: usize,
    pub item_raw: i64,
    pub rating: Option<f64>,
    pub reliability: Option<f64>,
}

/// Recommendation list for the dense user `user`, drawn from that user's
/// test items.
pub fn recommend_for_user(
    model: &ModelGraph,
    split: &SplitDataset,
    index: &DatasetIndex,
    user: usize,
    n: usize,
    theta: u8,
    rule: RecommendRule,
    reliability_min: f64,
) -> Result<Vec<RecommendationRow>> {
    let pool: Vec<usize> = split.test.iter().filter(|x| x.user == user).map(|x| x.item).collect();
    let pairs: Vec<(usize, usize)> = pool.iter().map(|&i| (user, i)).collect();
    let candidates: Vec<ScoredCandidate> = pool
        .iter()
        .zip(model.predict_many(&pairs)?)
        .map(|(&item, prediction)| ScoredCandidate { item, prediction })
        .collect();
    let recs: Vec<Recommendation> = rank(&candidates, n, theta, rule, reliability_min)?;
    recs.into_iter()
        .enumerate()
        .map(|(i, r)| {
            Ok(RecommendationRow {
                user_idx: user,
                rank: i + 1,
                item_idx: r.item,
                item_raw: index.item_raw(r.item).ok_or(Error::IndexOutOfRange {
                    what: "item",
                    index: r.item,
                    len: index.num_items(),
                })?,
                rating: r.rating,
                reliability: r.reliability,
            })
        })
        .collect()
}

pub fn lookup_user(index: &DatasetIndex, user_raw: i64) -> Result<usize> {
    index
        .user_map
        .get(&user_raw)
        .copied()
        .ok_or_else(|| Error::InvalidArgument(format!("unknown user {user_raw}")))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// `user_idx,rank,item_idx,rating,reliability`.
pub fn write_recommendation_dump<W: Write>(rows: &[RecommendationRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "user_idx,rank,item_idx,rating,reliability")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.user_idx,
            r.rank,
            r.item_idx,
            opt(r.rating),
            opt(r.reliability)
        )?;
    }
    Ok(())
}
