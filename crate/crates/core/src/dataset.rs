//! Rating-file ingestion, dense re-indexing and train/test partitioning.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Declared score range `[1, v_max]`. Never inferred from data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRange {
    pub v_max: u8,
}

impl ScoreRange {
    pub fn new(v_max: u8) -> Result<Self> {
        if v_max < 2 {
            return Err(Error::InvalidArgument(format!(
                "score range must hold at least two values, got 1:{v_max}"
            )));
        }
        Ok(Self { v_max })
    }

    pub fn contains(&self, rating: i64) -> bool {
        (1..=i64::from(self.v_max)).contains(&rating)
    }
}

impl FromStr for ScoreRange {
    type Err = Error;

    /// Parses `1:5` style ranges. The lower bound must be 1.
    fn from_str(s: &str) -> Result<Self> {
        let (lo, hi) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidArgument(format!("score range `{s}` is not LO:HI")))?;
        let lo: u8 = lo
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad score range `{s}`")))?;
        let hi: u8 = hi
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad score range `{s}`")))?;
        if lo != 1 {
            return Err(Error::InvalidArgument(format!(
                "score range must start at 1, got `{s}`"
            )));
        }
        ScoreRange::new(hi)
    }
}

impl std::fmt::Display for ScoreRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "1:{}", self.v_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FileFormat {
    /// MovieLens `u.data`: whitespace/tab separated `user item rating timestamp`.
    Ml100k,
    /// `user,item,rating[,timestamp]` with an optional header line.
    Csv,
}

impl FromStr for FileFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ml100k" | "tsv" | "tab" => Ok(FileFormat::Ml100k),
            "csv" => Ok(FileFormat::Csv),
            other => Err(Error::InvalidArgument(format!("unknown format `{other}`"))),
        }
    }
}

impl std::fmt::Display for FileFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FileFormat::Ml100k => "ml100k",
            FileFormat::Csv => "csv",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RatingRecord {
    pub user_raw: i64,
    pub item_raw: i64,
    pub rating: u8,
    pub timestamp: Option<i64>,
}

/// Reads every record from `path`. Fails on the first malformed line.
pub fn load_ratings(path: &Path, fmt: FileFormat, range: ScoreRange) -> Result<Vec<RatingRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let records = parse_ratings(&text, fmt, range)?;
    log::info!("loaded {} ratings from {}", records.len(), path.display());
    Ok(records)
}

pub fn parse_ratings(text: &str, fmt: FileFormat, range: ScoreRange) -> Result<Vec<RatingRecord>> {
    let mut out = Vec::new();
    let mut seen_content = false;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = match fmt {
            FileFormat::Ml100k => line.split_whitespace().collect(),
            FileFormat::Csv => line.split(',').map(str::trim).collect(),
        };
        let first = !seen_content;
        seen_content = true;
        if fields.len() < 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected at least 3 fields, found {}", fields.len()),
            });
        }
        if first && fmt == FileFormat::Csv && fields[2].parse::<f64>().is_err() {
            // header line
            continue;
        }
        let parse_int = |s: &str, what: &str| -> Result<i64> {
            s.parse::<i64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("{what} `{s}` is not an integer"),
            })
        };
        let user_raw = parse_int(fields[0], "user")?;
        let item_raw = parse_int(fields[1], "item")?;
        let rating = parse_int(fields[2], "rating")?;
        if !range.contains(rating) {
            return Err(Error::Parse {
                line: line_no,
                message: Error::RatingOutOfRange {
                    rating,
                    v_max: range.v_max,
                }
                .to_string(),
            });
        }
        let timestamp = match fields.get(3) {
            Some(s) if !s.is_empty() => Some(parse_int(s, "timestamp")?),
            _ => None,
        };
        out.push(RatingRecord {
            user_raw,
            item_raw,
            rating: rating as u8,
            timestamp,
        });
    }
    Ok(out)
}

/// Drops earlier votes on a repeated (user, item) pair, keeping the last one.
pub fn dedupe_keep_last(records: Vec<RatingRecord>) -> Vec<RatingRecord> {
    let mut last: HashMap<(i64, i64), usize> = HashMap::with_capacity(records.len());
    for (pos, r) in records.iter().enumerate() {
        last.insert((r.user_raw, r.item_raw), pos);
    }
    if last.len() == records.len() {
        return records;
    }
    log::warn!(
        "{} duplicate (user, item) ratings replaced by later votes",
        records.len() - last.len()
    );
    records
        .into_iter()
        .enumerate()
        .filter(|(pos, r)| last[&(r.user_raw, r.item_raw)] == *pos)
        .map(|(_, r)| r)
        .collect()
}

/// Bidirectional raw-id ↔ dense-index maps.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetIndex {
    pub user_map: HashMap<i64, usize>,
    pub item_map: HashMap<i64, usize>,
    pub user_ids: Vec<i64>,
    pub item_ids: Vec<i64>,
    pub v_max: u8,
    pub num_ratings: usize,
}

impl DatasetIndex {
    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn user_raw(&self, idx: usize) -> Option<i64> {
        self.user_ids.get(idx).copied()
    }

    pub fn item_raw(&self, idx: usize) -> Option<i64> {
        self.item_ids.get(idx).copied()
    }
}

/// Assigns dense indices in order of first appearance.
pub fn build_index(records: &[RatingRecord], range: ScoreRange) -> Result<DatasetIndex> {
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    fn intern(map: &mut HashMap<i64, usize>, ids: &mut Vec<i64>, raw: i64) {
        map.entry(raw).or_insert_with(|| {
            ids.push(raw);
            ids.len() - 1
        });
    }
    let mut user_map = HashMap::new();
    let mut item_map = HashMap::new();
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    for r in records {
        intern(&mut user_map, &mut user_ids, r.user_raw);
        intern(&mut item_map, &mut item_ids, r.item_raw);
    }
    Ok(DatasetIndex {
        user_map,
        item_map,
        user_ids,
        item_ids,
        v_max: range.v_max,
        num_ratings: records.len(),
    })
}

/// Percentage of the user × item matrix without a rating.
pub fn sparsity(index: &DatasetIndex) -> f64 {
    let cells = index.num_users() as f64 * index.num_items() as f64;
    100.0 * (1.0 - index.num_ratings as f64 / cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub rating: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Partition {
    Train,
    Test,
}

impl Partition {
    fn as_str(self) -> &'static str {
        match self {
            Partition::Train => "train",
            Partition::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub train: Vec<Interaction>,
    pub test: Vec<Interaction>,
    pub split_seed: u64,
    pub train_ratio: f64,
    pub num_users: usize,
    pub num_items: usize,
    pub v_max: u8,
}

impl SplitDataset {
    pub fn num_ratings(&self) -> usize {
        self.train.len() + self.test.len()
    }

    pub fn test_counts_per_user(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_users];
        for x in &self.test {
            counts[x.user] += 1;
        }
        counts
    }

    /// Test interactions grouped by user, in split order.
    pub fn test_by_user(&self) -> Vec<Vec<Interaction>> {
        let mut groups = vec![Vec::new(); self.num_users];
        for x in &self.test {
            groups[x.user].push(*x);
        }
        groups
    }

    /// Writes the canonical `user_idx,item_idx,rating,partition` dump.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "user_idx,item_idx,rating,partition")?;
        for (part, rows) in [(Partition::Train, &self.train), (Partition::Test, &self.test)] {
            for x in rows {
                writeln!(w, "{},{},{},{}", x.user, x.item, x.rating, part.as_str())?;
            }
        }
        Ok(())
    }

    /// Reads a dump written by [`SplitDataset::write_csv`].
    pub fn read_csv(text: &str, range: ScoreRange, split_seed: u64, train_ratio: f64) -> Result<Self> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        let mut num_users = 0;
        let mut num_items = 0;
        for (i, line) in text.lines().enumerate().skip(1) {
            let line_no = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let bad = |m: &str| Error::Parse {
                line: line_no,
                message: m.to_string(),
            };
            if f.len() != 4 {
                return Err(bad("expected user_idx,item_idx,rating,partition"));
            }
            let user: usize = f[0].parse().map_err(|_| bad("bad user_idx"))?;
            let item: usize = f[1].parse().map_err(|_| bad("bad item_idx"))?;
            let rating: i64 = f[2].parse().map_err(|_| bad("bad rating"))?;
            if !range.contains(rating) {
                return Err(bad("rating outside score range"));
            }
            let x = Interaction {
                user,
                item,
                rating: rating as u8,
            };
            num_users = num_users.max(user + 1);
            num_items = num_items.max(item + 1);
            match f[3] {
                "train" => train.push(x),
                "test" => test.push(x),
                _ => return Err(bad("partition must be train or test")),
            }
        }
        if train.is_empty() && test.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(SplitDataset {
            train,
            test,
            split_seed,
            train_ratio,
            num_users,
            num_items,
            v_max: range.v_max,
        })
    }
}

/// Number of training rows for `n` records: floor of the ratio, with at
/// least one row on each side whenever `n >= 2`.
pub fn train_size(n: usize, train_ratio: f64) -> usize {
    if n < 2 {
        return n;
    }
    let floor = (n as f64 * train_ratio).floor() as usize;
    floor.clamp(1, n - 1)
}

/// Seeded uniform random holdout.
pub fn split(
    records: &[RatingRecord],
    index: &DatasetIndex,
    train_ratio: f64,
    seed: u64,
) -> Result<SplitDataset> {
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train_ratio must lie in (0, 1), got {train_ratio}"
        )));
    }
    let mut rows = records
        .iter()
        .map(|r| {
            let user = *index.user_map.get(&r.user_raw).ok_or_else(|| {
                Error::InvalidArgument(format!("user {} missing from index", r.user_raw))
            })?;
            let item = *index.item_map.get(&r.item_raw).ok_or_else(|| {
                Error::InvalidArgument(format!("item {} missing from index", r.item_raw))
            })?;
            Ok(Interaction {
                user,
                item,
                rating: r.rating,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rng = rng::stream(seed, Stream::Split);
    rows.shuffle(&mut rng);
    let n_train = train_size(rows.len(), train_ratio);
    let test = rows.split_off(n_train);
    let split = SplitDataset {
        train: rows,
        test,
        split_seed: seed,
        train_ratio,
        num_users: index.num_users(),
        num_items: index.num_items(),
        v_max: index.v_max,
    };
    let users_with_test = split.test_counts_per_user().iter().filter(|&&c| c > 0).count();
    log::info!(
        "split {} train / {} test ({} users hold test ratings)",
        split.train.len(),
        split.test.len(),
        users_with_test
    );
    Ok(split)
}

/// `k` holdout splits on consecutive seeds starting at `seed`.
pub fn split_folds(
    records: &[RatingRecord],
    index: &DatasetIndex,
    train_ratio: f64,
    seed: u64,
    k: usize,
) -> Result<Vec<SplitDataset>> {
    (0..k as u64)
        .map(|fold| split(records, index, train_ratio, seed.wrapping_add(fold)))
        .collect()
}

pub fn one_hot(rating: u8, v_max: u8) -> Result<Vec<f64>> {
    if rating == 0 || rating > v_max {
        return Err(Error::RatingOutOfRange {
            rating: i64::from(rating),
            v_max,
        });
    }
    let mut v = vec![0.0; usize::from(v_max)];
    v[usize::from(rating - 1)] = 1.0;
    Ok(v)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relevance {
    Relevant,
    NotRelevant,
}

pub fn binarize(rating: u8, theta: u8) -> Relevance {
    if rating >= theta {
        Relevance::Relevant
    } else {
        Relevance::NotRelevant
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn five() -> ScoreRange {
        ScoreRange::new(5).unwrap()
    }

    fn rec(u: i64, i: i64, r: u8) -> RatingRecord {
        RatingRecord {
            user_raw: u,
            item_raw: i,
            rating: r,
            timestamp: None,
        }
    }

    #[test]
    fn parses_handcrafted_lines() {
        let recs = parse_ratings("1 7 5\n2 7 3\n1 9 4\n", FileFormat::Ml100k, five()).unwrap();
        assert_eq!(recs, vec![rec(1, 7, 5), rec(2, 7, 3), rec(1, 9, 4)]);
    }

    #[test]
    fn empty_text_gives_no_records() {
        assert!(parse_ratings("", FileFormat::Ml100k, five()).unwrap().is_empty());
    }

    #[test]
    fn csv_header_is_skipped() {
        let recs = parse_ratings(
            "userId,movieId,rating,timestamp\n3,4,2,100\n",
            FileFormat::Csv,
            five(),
        )
        .unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].timestamp, Some(100));
    }

    #[test]
    fn out_of_range_rating_reports_line() {
        let err = parse_ratings("1\t2\t3\t0\n1\t3\t6\t0\n", FileFormat::Ml100k, five()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let err = parse_ratings("1,2,3.5\n", FileFormat::Csv, five()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn index_uses_first_appearance() {
        let recs = [rec(10, 1, 3), rec(42, 1, 3), rec(10, 2, 3)];
        let idx = build_index(&recs, five()).unwrap();
        assert_eq!(idx.user_map[&10], 0);
        assert_eq!(idx.user_map[&42], 1);
        assert_eq!(idx.num_users(), 2);
        assert_eq!(idx.num_items(), 2);
        assert!(matches!(build_index(&[], five()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn sparsity_of_dense_matrix_is_zero() {
        let idx = build_index(&[rec(1, 1, 1)], five()).unwrap();
        assert_eq!(idx.num_users(), 1);
        assert_eq!(idx.num_items(), 1);
        assert_eq!(sparsity(&idx), 0.0);
    }

    #[test]
    fn split_boundaries() {
        let recs = [rec(1, 1, 1), rec(2, 2, 2)];
        let idx = build_index(&recs, five()).unwrap();
        let s = split(&recs, &idx, 0.999, 3).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (1, 1));
        assert!(split(&recs, &idx, 1.0, 3).is_err());

        let recs: Vec<_> = (0..10).map(|i| rec(i % 3, i, 3)).collect();
        let idx = build_index(&recs, five()).unwrap();
        let a = split(&recs, &idx, 0.8, 11).unwrap();
        let b = split(&recs, &idx, 0.8, 11).unwrap();
        assert_eq!((a.train.len(), a.test.len()), (8, 2));
        assert_eq!(a, b);
    }

    #[test]
    fn every_split_of_five_records_is_disjoint() {
        let recs: Vec<_> = (0..5).map(|i| rec(i % 2, i, 1 + (i % 5) as u8)).collect();
        let idx = build_index(&recs, five()).unwrap();
        for ratio in [0.2, 0.4, 0.5, 0.6, 0.8, 0.99] {
            for seed in 0..64 {
                let s = split(&recs, &idx, ratio, seed).unwrap();
                assert_eq!(s.num_ratings(), 5);
                for t in &s.train {
                    assert!(!s.test.iter().any(|x| x.user == t.user && x.item == t.item));
                }
            }
        }
    }

    #[test]
    fn duplicates_keep_last_vote() {
        let recs = vec![rec(1, 1, 2), rec(1, 2, 3), rec(1, 1, 5)];
        let kept = dedupe_keep_last(recs);
        assert_eq!(kept, vec![rec(1, 2, 3), rec(1, 1, 5)]);
    }

    #[test]
    fn one_hot_and_binarize() {
        assert_eq!(one_hot(3, 5).unwrap(), vec![0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(one_hot(1, 5).unwrap(), vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        let v = one_hot(10, 10).unwrap();
        assert_eq!(v[9], 1.0);
        assert_eq!(v.iter().sum::<f64>(), 1.0);
        assert!(one_hot(6, 5).is_err());
        assert!(one_hot(0, 5).is_err());
        assert_eq!(binarize(4, 4), Relevance::Relevant);
        assert_eq!(binarize(3, 4), Relevance::NotRelevant);
        assert_eq!(binarize(7, 7), Relevance::Relevant);
    }

    #[test]
    fn split_dump_round_trips() {
        let recs: Vec<_> = (0..12).map(|i| rec(i % 4, i % 5, 1 + (i % 5) as u8)).collect();
        let recs = dedupe_keep_last(recs);
        let idx = build_index(&recs, five()).unwrap();
        let s = split(&recs, &idx, 0.75, 5).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let back = SplitDataset::read_csv(std::str::from_utf8(&buf).unwrap(), five(), 5, 0.75).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn score_range_parsing() {
        assert_eq!("1:5".parse::<ScoreRange>().unwrap().v_max, 5);
        assert_eq!("1:10".parse::<ScoreRange>().unwrap().v_max, 10);
        assert!("0:5".parse::<ScoreRange>().is_err());
        assert!("5".parse::<ScoreRange>().is_err());
    }
}
