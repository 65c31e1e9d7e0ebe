//! Candidate relevance scores: import from external recommenders, or the
//! two built-in scorers (personal repurchase frequency for repeat items,
//! global popularity for explore items).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{BasketDataset, RepeatSets};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredItem {
    pub item: String,
    pub score: f64,
}

impl ScoredItem {
    pub fn new(item: impl Into<String>, score: f64) -> Self {
        ScoredItem {
            item: item.into(),
            score,
        }
    }
}

/// Score descending, item id ascending.
pub fn rank_order(a: &ScoredItem, b: &ScoredItem) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.item.cmp(&b.item))
}

/// Per-user ranked candidate lists, each truncated to `n`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreLists {
    pub n: usize,
    lists: BTreeMap<String, Vec<ScoredItem>>,
}

impl ScoreLists {
    /// Sorts and truncates every list. Duplicate items or non-finite scores
    /// are rejected.
    pub fn new(n: usize, lists: BTreeMap<String, Vec<ScoredItem>>) -> Result<Self> {
        let mut out = BTreeMap::new();
        for (user, mut list) in lists {
            let mut seen = BTreeSet::new();
            for entry in &list {
                if !entry.score.is_finite() {
                    return Err(Error::user(&user, format!("item {}: non-finite score", entry.item)));
                }
                if !seen.insert(entry.item.as_str()) {
                    return Err(Error::user(&user, format!("item {}: duplicate candidate", entry.item)));
                }
            }
            list.sort_by(rank_order);
            list.truncate(n);
            out.insert(user, list);
        }
        Ok(ScoreLists { n, lists: out })
    }

    pub fn get(&self, user: &str) -> Option<&[ScoredItem]> {
        self.lists.get(user).map(Vec::as_slice)
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.lists.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[ScoredItem])> {
        self.lists.iter().map(|(u, l)| (u.as_str(), l.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    /// Users in `expected` without a list here.
    pub fn missing_users<'a>(&self, expected: impl IntoIterator<Item = &'a str>) -> Vec<String> {
        expected
            .into_iter()
            .filter(|u| !self.lists.contains_key(*u))
            .map(str::to_string)
            .collect()
    }

    /// Every score in every list, for threshold grids.
    pub fn all_scores(&self) -> Vec<f64> {
        self.lists.values().flatten().map(|s| s.score).collect()
    }

    /// Writes `user_id<TAB>item_id<TAB>score` rows in rank order.
    pub fn save_tsv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for (user, list) in &self.lists {
            for entry in list {
                writeln!(out, "{user}\t{}\t{}", entry.item, entry.score).map_err(|e| Error::io(path, e))?;
            }
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CandidateKind {
    Unified,
    Combined,
}

/// Candidate scores for every user: one comparable list (unified models) or
/// separate repeat and explore lists whose scores are not comparable
/// (combined models).
#[derive(Clone, Debug, PartialEq)]
pub enum CandidateSet {
    Unified(ScoreLists),
    Combined { repeat: ScoreLists, explore: ScoreLists },
}

impl CandidateSet {
    pub fn kind(&self) -> CandidateKind {
        match self {
            CandidateSet::Unified(_) => CandidateKind::Unified,
            CandidateSet::Combined { .. } => CandidateKind::Combined,
        }
    }

    /// Builds a combined set, checking the two sides against the repeat sets:
    /// repeat items must be in the user's history, explore items must not.
    pub fn combined(repeat: ScoreLists, explore: ScoreLists, reps: &RepeatSets) -> Result<Self> {
        for (user, list) in repeat.iter() {
            if let Some(bad) = list.iter().find(|s| !reps.contains(user, &s.item)) {
                return Err(Error::user(user, format!("repeat candidate {} is not in the repeat set", bad.item)));
            }
        }
        for (user, list) in explore.iter() {
            if let Some(bad) = list.iter().find(|s| reps.contains(user, &s.item)) {
                return Err(Error::user(user, format!("explore candidate {} is in the repeat set", bad.item)));
            }
        }
        Ok(CandidateSet::Combined { repeat, explore })
    }

    /// Users with any candidate list.
    pub fn users(&self) -> BTreeSet<&str> {
        match self {
            CandidateSet::Unified(l) => l.users().collect(),
            CandidateSet::Combined { repeat, explore } => repeat.users().chain(explore.users()).collect(),
        }
    }
}

/// Reads a `user_id<TAB>item_id<TAB>score` file into ranked top-`n` lists.
pub fn import_scores(path: &Path, n: usize) -> Result<ScoreLists> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lists: BTreeMap<String, Vec<ScoredItem>> = BTreeMap::new();
    let mut seen: HashMap<String, BTreeSet<String>> = HashMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(path, line_no, format!("expected 3 tab-separated columns, found {}", cols.len())));
        }
        let (user, item) = (cols[0], cols[1]);
        let score: f64 = cols[2]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("score {:?} is not a number", cols[2])))?;
        if !score.is_finite() {
            return Err(Error::parse(path, line_no, format!("non-finite score for user {user}, item {item}")));
        }
        if !seen.entry(user.to_string()).or_default().insert(item.to_string()) {
            return Err(Error::parse(path, line_no, format!("duplicate row for user {user}, item {item}")));
        }
        lists.entry(user.to_string()).or_default().push(ScoredItem::new(item, score));
    }
    if lists.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    ScoreLists::new(n, lists)
}

pub fn import_unified(path: &Path, n: usize) -> Result<CandidateSet> {
    Ok(CandidateSet::Unified(import_scores(path, n)?))
}

pub fn import_combined(repeat_path: &Path, explore_path: &Path, n: usize, reps: &RepeatSets) -> Result<CandidateSet> {
    CandidateSet::combined(import_scores(repeat_path, n)?, import_scores(explore_path, n)?, reps)
}

/// Repeat-side scorer: the share of a user's training baskets containing
/// the item.
pub fn score_repeat_topfreq(train: &BasketDataset, reps: &RepeatSets, n: usize) -> ScoreLists {
    let mut lists = BTreeMap::new();
    for user in train.users() {
        let n_baskets = user.baskets.len();
        if n_baskets == 0 {
            continue;
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for basket in &user.baskets {
            for item in basket {
                *counts.entry(item.as_str()).or_insert(0) += 1;
            }
        }
        let mut list: Vec<ScoredItem> = counts
            .into_iter()
            .filter(|(item, _)| reps.contains(&user.user_id, item))
            .map(|(item, c)| ScoredItem::new(item, c as f64 / n_baskets as f64))
            .collect();
        list.sort_by(rank_order);
        list.truncate(n);
        lists.insert(user.user_id.clone(), list);
    }
    ScoreLists { n, lists }
}

/// Explore-side scorer: global purchase count over the maximum count, for
/// items outside the user's repeat set.
pub fn score_explore_popularity(train: &BasketDataset, reps: &RepeatSets, n: usize) -> ScoreLists {
    let counts = train.purchase_counts();
    let max = counts.values().copied().max().unwrap_or(0).max(1) as f64;
    let mut global: Vec<ScoredItem> = train
        .vocabulary()
        .iter()
        .map(|item| ScoredItem::new(item.clone(), counts.get(item).copied().unwrap_or(0) as f64 / max))
        .collect();
    global.sort_by(rank_order);

    let mut lists = BTreeMap::new();
    for user in train.users() {
        let list: Vec<ScoredItem> = global
            .iter()
            .filter(|s| !reps.contains(&user.user_id, &s.item))
            .take(n)
            .cloned()
            .collect();
        lists.insert(user.user_id.clone(), list);
    }
    ScoreLists { n, lists }
}

/// Merges repeat and explore lists onto one scale: repeat scores are
/// multiplied by `mix`, explore scores by `1 - mix`.
pub fn make_unified(repeat: &ScoreLists, explore: &ScoreLists, mix: f64, n: usize) -> Result<CandidateSet> {
    if !(0.0..=1.0).contains(&mix) {
        return Err(Error::Config(format!("mix must be in [0, 1], got {mix}")));
    }
    let users: BTreeSet<&str> = repeat.users().chain(explore.users()).collect();
    let mut lists = BTreeMap::new();
    for user in users {
        let mut merged: Vec<ScoredItem> = Vec::new();
        for s in repeat.get(user).unwrap_or_default() {
            merged.push(ScoredItem::new(s.item.clone(), mix * s.score));
        }
        for s in explore.get(user).unwrap_or_default() {
            merged.push(ScoredItem::new(s.item.clone(), (1.0 - mix) * s.score));
        }
        lists.insert(user.to_string(), merged);
    }
    Ok(CandidateSet::Unified(ScoreLists::new(n, lists)?))
}
