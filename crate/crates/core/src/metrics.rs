//! Evaluation metrics for recommended baskets.
//!
//! Per-user quantities (Recall, DS, repeat ratio) are averaged over users.
//! Exposure is aggregated over all baskets before the popular/unpopular
//! comparison, so logDP is a global quantity.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{ground_truth_repeat_ratio, ItemGroups, RepeatSets, SplitDataset};
use crate::error::{Error, Result};
use crate::objective::{ExposureModel, RerankConfig};
use crate::UNKNOWN_CATEGORY;

/// Recommended item lists in rank order, keyed by user.
pub type BasketMap = BTreeMap<String, Vec<String>>;

/// Additive smoothing inside logDP.
pub const LOG_DP_SMOOTHING: f64 = 1e-9;

/// Mean over users of the share of the target basket that was recommended.
/// Users with an empty target are skipped with a warning.
pub fn recall_at_k(baskets: &BasketMap, targets: &SplitDataset) -> Result<f64> {
    let mut sum = 0.0;
    let mut users = 0usize;
    for (user, basket) in baskets {
        let target = targets
            .targets
            .get(user)
            .ok_or_else(|| Error::user(user, "no ground-truth basket"))?;
        if target.is_empty() {
            log::warn!("user {user}: empty target basket excluded from recall");
            continue;
        }
        let hits = target.iter().filter(|t| basket.contains(t)).count();
        sum += hits as f64 / target.len() as f64;
        users += 1;
    }
    if users == 0 {
        return Err(Error::Empty("no users with a non-empty target basket"));
    }
    Ok(sum / users as f64)
}

fn user_diversity(basket: &[String], categories: &BTreeMap<String, String>, k: usize) -> f64 {
    let mut seen: Vec<&str> = Vec::new();
    for item in basket {
        let cat = categories.get(item).map(String::as_str).unwrap_or(UNKNOWN_CATEGORY);
        if !seen.contains(&cat) {
            seen.push(cat);
        }
    }
    seen.len() as f64 / k as f64
}

/// Mean over users of distinct categories divided by the basket size `k`.
pub fn diversity_score(baskets: &BasketMap, categories: &BTreeMap<String, String>, k: usize) -> f64 {
    if baskets.is_empty() {
        return 0.0;
    }
    baskets.values().map(|b| user_diversity(b, categories, k)).sum::<f64>() / baskets.len() as f64
}

/// Average exposure of the popular and the unpopular group. An item's
/// exposure is the sum of its position weights over all baskets; items never
/// recommended contribute zero.
pub fn group_exposure(baskets: &BasketMap, groups: &ItemGroups, exposure: ExposureModel) -> (f64, f64) {
    let mut popular = 0.0;
    let mut unpopular = 0.0;
    for basket in baskets.values() {
        for (rank, item) in basket.iter().enumerate() {
            let w = exposure.weight(rank + 1);
            if groups.popular.contains(item) {
                popular += w;
            } else if groups.unpopular.contains(item) {
                unpopular += w;
            }
        }
    }
    let avg = |total: f64, size: usize| if size == 0 { 0.0 } else { total / size as f64 };
    (avg(popular, groups.popular.len()), avg(unpopular, groups.unpopular.len()))
}

/// Signed log ratio of popular to unpopular average exposure, smoothed so an
/// empty group stays finite.
pub fn log_dp(e1: f64, e2: f64, base: f64) -> f64 {
    ((e1 + LOG_DP_SMOOTHING) / (e2 + LOG_DP_SMOOTHING)).ln() / base.ln()
}

fn user_repeat_ratio(user: &str, basket: &[String], reps: &RepeatSets, k: usize) -> f64 {
    basket.iter().filter(|i| reps.contains(user, i)).count() as f64 / k as f64
}

/// `(RepRatio_rec, RepBias)`: the mean repeat share of the `k` slots, and
/// its difference from the ground-truth share.
pub fn repeat_metrics(baskets: &BasketMap, reps: &RepeatSets, k: usize, rep_ratio_gt: f64) -> (f64, f64) {
    let rec = if baskets.is_empty() {
        0.0
    } else {
        baskets
            .iter()
            .map(|(u, b)| user_repeat_ratio(u, b, reps, k))
            .sum::<f64>()
            / baskets.len() as f64
    };
    (rec, rec - rep_ratio_gt)
}

/// `(mFR, mDR)` from |logDP|, DS and |RepBias| with weight `omega`.
pub fn composite_metrics(log_dp: f64, ds: f64, rep_bias: f64, omega: f64) -> (f64, f64) {
    let m_fr = omega * log_dp.abs() + (1.0 - omega) * rep_bias.abs();
    let m_dr = omega * ds - (1.0 - omega) * rep_bias.abs();
    (m_fr, m_dr)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    pub user: String,
    /// `None` when the target basket is empty.
    pub recall: Option<f64>,
    pub ds: f64,
    pub rep_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub recall: f64,
    pub ds: f64,
    pub log_dp: f64,
    pub rep_ratio_rec: f64,
    pub rep_ratio_gt: f64,
    pub rep_bias: f64,
    pub m_fr: f64,
    pub m_dr: f64,
    pub exposure_popular: f64,
    pub exposure_unpopular: f64,
    pub users: usize,
    pub k: usize,
    pub omega: f64,
    pub config: RerankConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_user: Option<Vec<UserMetrics>>,
}

/// All metrics for one set of baskets. The ground-truth repeat ratio is taken
/// from the same targets the baskets are scored against.
pub fn evaluate(
    baskets: &BasketMap,
    targets: &SplitDataset,
    reps: &RepeatSets,
    groups: &ItemGroups,
    categories: &BTreeMap<String, String>,
    cfg: &RerankConfig,
    per_user: bool,
) -> Result<MetricsReport> {
    if baskets.is_empty() {
        return Err(Error::Empty("no baskets to evaluate"));
    }
    let k = cfg.k;
    let recall = recall_at_k(baskets, targets)?;
    let ds = diversity_score(baskets, categories, k);
    let (e1, e2) = group_exposure(baskets, groups, cfg.exposure);
    let log_dp = log_dp(e1, e2, cfg.log_base);
    let eval_targets = SplitDataset {
        label: targets.label,
        targets: baskets
            .keys()
            .filter_map(|u| targets.targets.get(u).map(|t| (u.clone(), t.clone())))
            .collect(),
    };
    let rep_ratio_gt = ground_truth_repeat_ratio(&eval_targets, reps)?;
    let (rep_ratio_rec, rep_bias) = repeat_metrics(baskets, reps, k, rep_ratio_gt);
    let (m_fr, m_dr) = composite_metrics(log_dp, ds, rep_bias, cfg.omega);
    let per_user = per_user.then(|| {
        baskets
            .iter()
            .map(|(u, b)| {
                let target = &targets.targets[u];
                let recall = (!target.is_empty())
                    .then(|| target.iter().filter(|t| b.contains(t)).count() as f64 / target.len() as f64);
                UserMetrics {
                    user: u.clone(),
                    recall,
                    ds: user_diversity(b, categories, k),
                    rep_ratio: user_repeat_ratio(u, b, reps, k),
                }
            })
            .collect()
    });
    Ok(MetricsReport {
        recall,
        ds,
        log_dp,
        rep_ratio_rec,
        rep_ratio_gt,
        rep_bias,
        m_fr,
        m_dr,
        exposure_popular: e1,
        exposure_unpopular: e2,
        users: baskets.len(),
        k,
        omega: cfg.omega,
        config: cfg.clone(),
        per_user,
    })
}

impl MetricsReport {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Aligned two-column text table.
    pub fn to_text(&self) -> String {
        let rows = [
            ("users", self.users.to_string()),
            ("k", self.k.to_string()),
            ("recall", format!("{:.4}", self.recall)),
            ("ds", format!("{:.4}", self.ds)),
            ("logdp", format!("{:.4}", self.log_dp)),
            ("rep_ratio_rec", format!("{:.4}", self.rep_ratio_rec)),
            ("rep_ratio_gt", format!("{:.4}", self.rep_ratio_gt)),
            ("rep_bias", format!("{:.4}", self.rep_bias)),
            ("mfr", format!("{:.4}", self.m_fr)),
            ("mdr", format!("{:.4}", self.m_dr)),
        ];
        let mut out = String::new();
        for (name, value) in rows {
            let _ = writeln!(out, "{name:<14} {value:>10}");
        }
        out
    }

    /// Per-user rows: `user_id<TAB>recall<TAB>ds<TAB>rep_ratio`; recall is
    /// empty for users with an empty target.
    pub fn write_per_user_tsv(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "user_id\trecall\tds\trep_ratio")?;
        for row in self.per_user.iter().flatten() {
            let recall = row.recall.map(|r| r.to_string()).unwrap_or_default();
            writeln!(out, "{}\t{recall}\t{}\t{}", row.user, row.ds, row.rep_ratio)?;
        }
        Ok(())
    }
}
