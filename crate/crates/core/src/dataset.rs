//! Basket-sequence data: loading, activity filtering, history capping,
//! leave-last splitting, and the derived per-user repeat sets and
//! popularity groups.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::UNKNOWN_CATEGORY;

/// One basket: distinct item ids in first-seen order.
pub type Basket = Vec<String>;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserBaskets {
    pub user_id: String,
    pub baskets: Vec<Basket>,
}

/// Users' chronological basket sequences with an item→category map.
///
/// The vocabulary always contains every item appearing in a basket and may
/// contain more (a training split keeps the vocabulary of the data it was
/// split from). Every vocabulary item has exactly one category.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BasketDataset {
    users: Vec<UserBaskets>,
    categories: BTreeMap<String, String>,
    vocabulary: BTreeSet<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasketFormat {
    Jsonl,
    Csv,
}

impl std::str::FromStr for BasketFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(BasketFormat::Jsonl),
            "csv" => Ok(BasketFormat::Csv),
            other => Err(Error::Config(format!("unknown basket format {other:?}"))),
        }
    }
}

/// Counters gathered while loading a basket file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub records: usize,
    pub duplicates_removed: usize,
}

impl BasketDataset {
    /// Builds a dataset, dropping within-basket duplicates. Returns the
    /// number of duplicates removed alongside the dataset.
    pub fn from_users(users: Vec<UserBaskets>) -> Result<(Self, usize)> {
        let mut seen_users = BTreeSet::new();
        let mut duplicates = 0;
        let mut cleaned = Vec::with_capacity(users.len());
        for user in users {
            if !seen_users.insert(user.user_id.clone()) {
                return Err(Error::user(&user.user_id, "duplicate user record"));
            }
            let mut baskets = Vec::with_capacity(user.baskets.len());
            for (idx, basket) in user.baskets.into_iter().enumerate() {
                if basket.is_empty() {
                    return Err(Error::user(&user.user_id, format!("basket {idx} is empty")));
                }
                let (basket, dups) = dedup_basket(basket);
                duplicates += dups;
                baskets.push(basket);
            }
            cleaned.push(UserBaskets {
                user_id: user.user_id,
                baskets,
            });
        }
        let mut ds = BasketDataset {
            users: cleaned,
            categories: BTreeMap::new(),
            vocabulary: BTreeSet::new(),
        };
        ds.refresh_vocabulary();
        Ok((ds, duplicates))
    }

    /// Replaces the category map. Vocabulary items missing from `categories`
    /// get [`UNKNOWN_CATEGORY`]. With `extend_vocabulary`, every item named in
    /// the map joins the vocabulary.
    pub fn with_categories(mut self, categories: &BTreeMap<String, String>, extend_vocabulary: bool) -> Self {
        if extend_vocabulary {
            self.vocabulary.extend(categories.keys().cloned());
        }
        assign_categories(&mut self, categories);
        self
    }

    pub fn users(&self) -> &[UserBaskets] {
        &self.users
    }

    pub fn user(&self, user_id: &str) -> Option<&UserBaskets> {
        self.users.iter().find(|u| u.user_id == user_id)
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_baskets(&self) -> usize {
        self.users.iter().map(|u| u.baskets.len()).sum()
    }

    pub fn vocabulary(&self) -> &BTreeSet<String> {
        &self.vocabulary
    }

    pub fn categories(&self) -> &BTreeMap<String, String> {
        &self.categories
    }

    pub fn category_of(&self, item: &str) -> &str {
        self.categories
            .get(item)
            .map(String::as_str)
            .unwrap_or(UNKNOWN_CATEGORY)
    }

    /// Number of baskets containing each item.
    pub fn purchase_counts(&self) -> BTreeMap<String, u64> {
        let mut counts = BTreeMap::new();
        for user in &self.users {
            for basket in &user.baskets {
                for item in basket {
                    *counts.entry(item.clone()).or_insert(0) += 1;
                }
            }
        }
        counts
    }

    fn refresh_vocabulary(&mut self) {
        let mut vocab = BTreeSet::new();
        for user in &self.users {
            for basket in &user.baskets {
                vocab.extend(basket.iter().cloned());
            }
        }
        self.vocabulary = vocab;
        let old = std::mem::take(&mut self.categories);
        assign_categories(self, &old);
    }

    /// Writes the baskets as JSONL (one user per line).
    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for user in &self.users {
            serde_json::to_writer(&mut out, user)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    /// Writes the baskets as `user_id,basket_index,item_id` CSV with header.
    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        writer
            .write_record(["user_id", "basket_index", "item_id"])
            .map_err(|e| csv_io(path, e))?;
        for user in &self.users {
            for (idx, basket) in user.baskets.iter().enumerate() {
                let idx = idx.to_string();
                for item in basket {
                    writer
                        .write_record([user.user_id.as_str(), idx.as_str(), item.as_str()])
                        .map_err(|e| csv_io(path, e))?;
                }
            }
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }
}

fn assign_categories(ds: &mut BasketDataset, categories: &BTreeMap<String, String>) {
    ds.categories = ds
        .vocabulary
        .iter()
        .map(|item| {
            let cat = categories
                .get(item)
                .cloned()
                .unwrap_or_else(|| UNKNOWN_CATEGORY.to_string());
            (item.clone(), cat)
        })
        .collect();
}

fn csv_io(path: &Path, err: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(err.to_string()))
}

fn dedup_basket(basket: Basket) -> (Basket, usize) {
    let mut seen = BTreeSet::new();
    let before = basket.len();
    let kept: Basket = basket.into_iter().filter(|i| seen.insert(i.clone())).collect();
    let removed = before - kept.len();
    (kept, removed)
}

#[derive(Deserialize)]
struct JsonlRecord {
    user_id: String,
    baskets: Vec<Vec<String>>,
}

/// Loads a basket file. Within-basket duplicates are dropped and counted;
/// every item starts in the [`UNKNOWN_CATEGORY`] until categories are
/// attached with [`BasketDataset::with_categories`].
pub fn load_baskets(path: &Path, format: BasketFormat) -> Result<(BasketDataset, LoadStats)> {
    let users = match format {
        BasketFormat::Jsonl => read_jsonl(path)?,
        BasketFormat::Csv => read_csv(path)?,
    };
    if users.is_empty() {
        return Err(Error::EmptyFile(path.to_path_buf()));
    }
    let records = users.len();
    let (ds, duplicates_removed) = BasketDataset::from_users(users)?;
    if duplicates_removed > 0 {
        log::warn!("{}: removed {duplicates_removed} duplicate items within baskets", path.display());
    }
    Ok((
        ds,
        LoadStats {
            records,
            duplicates_removed,
        },
    ))
}

fn read_jsonl(path: &Path) -> Result<Vec<UserBaskets>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut users = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: JsonlRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        if let Some(pos) = record.baskets.iter().position(Vec::is_empty) {
            return Err(Error::parse(
                path,
                idx + 1,
                format!("user {}: basket {pos} is empty", record.user_id),
            ));
        }
        users.push(UserBaskets {
            user_id: record.user_id,
            baskets: record.baskets,
        });
    }
    Ok(users)
}

fn read_csv(path: &Path) -> Result<Vec<UserBaskets>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    let mut order: Vec<String> = Vec::new();
    let mut grouped: HashMap<String, BTreeMap<u64, Basket>> = HashMap::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| Error::parse(path, line, e.to_string()))?;
        if record.len() != 3 {
            return Err(Error::parse(path, line, format!("expected 3 columns, found {}", record.len())));
        }
        if line == 1 && &record[0] == "user_id" && &record[1] == "basket_index" {
            continue;
        }
        let basket_index: u64 = record[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, line, format!("basket_index {:?} is not an integer", &record[1])))?;
        let user = record[0].to_string();
        let item = record[2].to_string();
        if item.is_empty() {
            return Err(Error::parse(path, line, "empty item id"));
        }
        let baskets = grouped.entry(user.clone()).or_insert_with(|| {
            order.push(user);
            BTreeMap::new()
        });
        baskets.entry(basket_index).or_default().push(item);
    }
    Ok(order
        .into_iter()
        .map(|user_id| {
            let baskets = grouped.remove(&user_id).unwrap_or_default().into_values().collect();
            UserBaskets { user_id, baskets }
        })
        .collect())
}

/// Loads an `item_id<TAB>category_id` map (UTF-8, no header).
pub fn load_categories(path: &Path) -> Result<BTreeMap<String, String>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut map = BTreeMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let (Some(item), Some(cat), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(Error::parse(path, idx + 1, "expected item_id<TAB>category_id"));
        };
        if item.is_empty() || cat.is_empty() {
            return Err(Error::parse(path, idx + 1, "empty item or category id"));
        }
        if let Some(prev) = map.insert(item.to_string(), cat.to_string()) {
            if prev != cat {
                return Err(Error::parse(
                    path,
                    idx + 1,
                    format!("item {item} has conflicting categories {prev} and {cat}"),
                ));
            }
        }
    }
    Ok(map)
}

pub fn save_categories(categories: &BTreeMap<String, String>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for (item, cat) in categories {
        writeln!(out, "{item}\t{cat}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Keeps a seeded random subset of `n` users (input order preserved).
pub fn sample_users(ds: &BasketDataset, n: usize, seed: u64) -> BasketDataset {
    if n >= ds.users.len() {
        return ds.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..ds.users.len()).collect();
    idx.shuffle(&mut rng);
    let keep: BTreeSet<usize> = idx.into_iter().take(n).collect();
    let users = ds
        .users
        .iter()
        .enumerate()
        .filter(|(i, _)| keep.contains(i))
        .map(|(_, u)| u.clone())
        .collect();
    rebuild(ds, users)
}

fn rebuild(template: &BasketDataset, users: Vec<UserBaskets>) -> BasketDataset {
    let mut ds = BasketDataset {
        users,
        categories: BTreeMap::new(),
        vocabulary: BTreeSet::new(),
    };
    ds.refresh_vocabulary();
    assign_categories(&mut ds, &template.categories);
    ds
}

/// Removes rare items and inactive users until both thresholds hold at once.
///
/// Each round drops items bought in fewer than `min_item_purchases` baskets,
/// drops baskets left empty, then drops users with fewer than `min_baskets`
/// baskets. Rounds repeat until nothing changes.
pub fn filter_min_activity(
    ds: &BasketDataset,
    min_baskets: usize,
    min_item_purchases: u64,
) -> Result<BasketDataset> {
    let mut users = ds.users.clone();
    loop {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for user in &users {
            for basket in &user.baskets {
                for item in basket {
                    *counts.entry(item.as_str()).or_insert(0) += 1;
                }
            }
        }
        let rare: BTreeSet<String> = counts
            .iter()
            .filter(|(_, &c)| c < min_item_purchases)
            .map(|(i, _)| i.to_string())
            .collect();

        let before_users = users.len();
        let mut next = Vec::with_capacity(users.len());
        for user in users {
            let baskets: Vec<Basket> = user
                .baskets
                .into_iter()
                .map(|b| b.into_iter().filter(|i| !rare.contains(i)).collect::<Basket>())
                .filter(|b| !b.is_empty())
                .collect();
            if baskets.len() >= min_baskets && !baskets.is_empty() {
                next.push(UserBaskets {
                    user_id: user.user_id,
                    baskets,
                });
            }
        }
        users = next;
        if rare.is_empty() && users.len() == before_users {
            break;
        }
        if users.is_empty() {
            break;
        }
    }
    if users.is_empty() {
        return Err(Error::DatasetExhausted);
    }
    Ok(rebuild(ds, users))
}

/// Keeps each user's `max_baskets` most recent baskets.
pub fn cap_history(ds: &BasketDataset, max_baskets: usize) -> BasketDataset {
    let users = ds
        .users
        .iter()
        .map(|u| {
            let skip = u.baskets.len().saturating_sub(max_baskets);
            UserBaskets {
                user_id: u.user_id.clone(),
                baskets: u.baskets[skip..].to_vec(),
            }
        })
        .filter(|u| !u.baskets.is_empty())
        .collect();
    rebuild(ds, users)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitLabel {
    Validation,
    Test,
}

impl std::fmt::Display for SplitLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitLabel::Validation => "validation",
            SplitLabel::Test => "test",
        })
    }
}

impl std::str::FromStr for SplitLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "validation" => Ok(SplitLabel::Validation),
            "test" => Ok(SplitLabel::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// Ground-truth next baskets for one evaluation split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub label: SplitLabel,
    pub targets: BTreeMap<String, Basket>,
}

impl SplitDataset {
    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.targets.keys().map(String::as_str)
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let users = self
            .targets
            .iter()
            .map(|(u, b)| UserBaskets {
                user_id: u.clone(),
                baskets: vec![b.clone()],
            })
            .collect();
        let (ds, _) = BasketDataset::from_users(users)?;
        ds.save_jsonl(path)
    }

    /// Reads targets written by [`SplitDataset::save_jsonl`]; each user must
    /// have exactly one basket.
    pub fn load_jsonl(path: &Path, label: SplitLabel) -> Result<Self> {
        let users = read_jsonl(path)?;
        let mut targets = BTreeMap::new();
        for user in users {
            if user.baskets.len() != 1 {
                return Err(Error::user(&user.user_id, "target file must hold exactly one basket per user"));
            }
            let (basket, _) = dedup_basket(user.baskets.into_iter().next().unwrap_or_default());
            targets.insert(user.user_id, basket);
        }
        Ok(SplitDataset { label, targets })
    }
}

/// Training data plus the two disjoint evaluation splits.
#[derive(Clone, Debug)]
pub struct Split {
    pub train: BasketDataset,
    pub validation: SplitDataset,
    pub test: SplitDataset,
}

impl Split {
    pub fn targets(&self, label: SplitLabel) -> &SplitDataset {
        match label {
            SplitLabel::Validation => &self.validation,
            SplitLabel::Test => &self.test,
        }
    }
}

/// Holds out every user's last basket and assigns users 50/50 to validation
/// and test. With an odd user count validation gets the extra user.
pub fn split_leave_last(ds: &BasketDataset, seed: u64) -> Result<Split> {
    if let Some(u) = ds.users.iter().find(|u| u.baskets.len() < 2) {
        return Err(Error::user(
            &u.user_id,
            format!("needs at least 2 baskets to split, has {}", u.baskets.len()),
        ));
    }
    let mut order: Vec<usize> = (0..ds.users.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n_validation = ds.users.len().div_ceil(2);
    let validation_idx: BTreeSet<usize> = order[..n_validation].iter().copied().collect();

    let mut validation = BTreeMap::new();
    let mut test = BTreeMap::new();
    let mut train_users = Vec::with_capacity(ds.users.len());
    for (idx, user) in ds.users.iter().enumerate() {
        let (last, history) = user.baskets.split_last().expect("checked above");
        let bucket = if validation_idx.contains(&idx) {
            &mut validation
        } else {
            &mut test
        };
        bucket.insert(user.user_id.clone(), last.clone());
        train_users.push(UserBaskets {
            user_id: user.user_id.clone(),
            baskets: history.to_vec(),
        });
    }
    let train = BasketDataset {
        users: train_users,
        categories: ds.categories.clone(),
        vocabulary: ds.vocabulary.clone(),
    };
    Ok(Split {
        train,
        validation: SplitDataset {
            label: SplitLabel::Validation,
            targets: validation,
        },
        test: SplitDataset {
            label: SplitLabel::Test,
            targets: test,
        },
    })
}

/// Items each user bought in any training basket.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RepeatSets {
    sets: BTreeMap<String, BTreeSet<String>>,
}

impl RepeatSets {
    pub fn from_map(sets: BTreeMap<String, BTreeSet<String>>) -> Self {
        RepeatSets { sets }
    }

    pub fn get(&self, user: &str) -> Option<&BTreeSet<String>> {
        self.sets.get(user)
    }

    /// False for users without a repeat set.
    pub fn contains(&self, user: &str, item: &str) -> bool {
        self.sets.get(user).is_some_and(|s| s.contains(item))
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.sets.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

pub fn build_repeat_sets(train: &BasketDataset) -> Result<RepeatSets> {
    let mut sets = BTreeMap::new();
    for user in &train.users {
        if user.baskets.is_empty() {
            return Err(Error::user(&user.user_id, "no training baskets"));
        }
        let set: BTreeSet<String> = user.baskets.iter().flatten().cloned().collect();
        sets.insert(user.user_id.clone(), set);
    }
    Ok(RepeatSets { sets })
}

/// Popular (top fraction by training purchase count) and unpopular items.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemGroups {
    pub popular: BTreeSet<String>,
    pub unpopular: BTreeSet<String>,
    pub popularity_counts: BTreeMap<String, u64>,
}

impl ItemGroups {
    pub fn is_popular(&self, item: &str) -> bool {
        self.popular.contains(item)
    }

    pub fn contains(&self, item: &str) -> bool {
        self.popular.contains(item) || self.unpopular.contains(item)
    }

    /// `+1/|I_1|` for popular items, `-1/|I_2|` for unpopular ones, `None`
    /// for items outside the vocabulary.
    pub fn fairness_coef(&self, item: &str) -> Option<f64> {
        if self.popular.contains(item) {
            Some(1.0 / self.popular.len() as f64)
        } else if self.unpopular.contains(item) {
            Some(-1.0 / self.unpopular.len() as f64)
        } else {
            None
        }
    }
}

/// Ranks the vocabulary by training purchase count (descending, ties by id
/// ascending) and puts the first `ceil(top_fraction * |I|)` items in the
/// popular group.
pub fn build_item_groups(train: &BasketDataset, top_fraction: f64) -> Result<ItemGroups> {
    if !(top_fraction > 0.0 && top_fraction < 1.0) {
        return Err(Error::Config(format!("top_fraction must be in (0, 1), got {top_fraction}")));
    }
    let purchased = train.purchase_counts();
    let counts: BTreeMap<String, u64> = train
        .vocabulary
        .iter()
        .map(|i| (i.clone(), purchased.get(i).copied().unwrap_or(0)))
        .collect();
    let mut ranked: Vec<(&String, u64)> = counts.iter().map(|(i, &c)| (i, c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let n_popular = popular_count(ranked.len(), top_fraction);
    let popular = ranked[..n_popular].iter().map(|(i, _)| (*i).clone()).collect();
    let unpopular = ranked[n_popular..].iter().map(|(i, _)| (*i).clone()).collect();
    Ok(ItemGroups {
        popular,
        unpopular,
        popularity_counts: counts,
    })
}

fn popular_count(n_items: usize, fraction: f64) -> usize {
    // 0.2 * 15 is 3.0000000000000004 in binary; snap before taking the ceiling.
    let raw = fraction * n_items as f64;
    let snapped = if (raw - raw.round()).abs() < 1e-9 { raw.round() } else { raw.ceil() };
    (snapped as usize).min(n_items)
}

/// Mean over users of the share of target items already in the user's
/// repeat set.
pub fn ground_truth_repeat_ratio(targets: &SplitDataset, reps: &RepeatSets) -> Result<f64> {
    let ratios: Vec<f64> = targets
        .targets
        .iter()
        .filter(|(_, basket)| !basket.is_empty())
        .map(|(user, basket)| {
            let hits = basket.iter().filter(|i| reps.contains(user, i)).count();
            hits as f64 / basket.len() as f64
        })
        .collect();
    if ratios.is_empty() {
        return Err(Error::Empty("no evaluation targets"));
    }
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}
