use std::collections::BTreeMap;

use crate::error::{arg_err, dim_err, Error, Result};

pub fn mse(pred: &[f64], y: &[f64]) -> Result<f64> {
    if pred.len() != y.len() || y.is_empty() {
        return dim_err(format!(
            "mse of {} predictions against {} targets",
            pred.len(),
            y.len()
        ));
    }
    Ok(pred
        .iter()
        .zip(y)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / y.len() as f64)
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half (Mann–Whitney U / (n₊ n₋)).
pub fn auroc(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return dim_err(format!(
            "auroc of {} scores against {} labels",
            scores.len(),
            labels.len()
        ));
    }
    if let Some(bad) = labels.iter().find(|&&l| l != 0.0 && l != 1.0) {
        return Err(Error::Metric(format!("auroc label {bad} is not 0 or 1")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Metric("auroc score is NaN".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1.0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric("auroc needs both classes".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of mid-ranks of the positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * idx[i..=j].iter().filter(|&&k| labels[k] == 1.0).count() as f64;
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricKind {
    Mse,
    Auroc,
}

impl MetricKind {
    pub fn higher_is_better(self) -> bool {
        self == MetricKind::Auroc
    }

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Mse => "mse",
            MetricKind::Auroc => "auroc",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(MetricKind::Mse),
            "auroc" => Ok(MetricKind::Auroc),
            _ => arg_err(format!("unknown metric '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub dataset: String,
    pub regularizer: String,
    pub fold: usize,
    pub metric: MetricKind,
    pub score: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsTable {
    pub rows: Vec<MetricRow>,
}

impl MetricsTable {
    pub fn push(&mut self, row: MetricRow) {
        self.rows.push(row);
    }

    /// Regularisers in order of first appearance.
    pub fn regularizers(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.regularizer) {
                out.push(r.regularizer.clone());
            }
        }
        out
    }

    /// Mean score of one regulariser over all its rows.
    pub fn mean_score(&self, regularizer: &str) -> Option<f64> {
        let s: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.regularizer == regularizer)
            .map(|r| r.score)
            .collect();
        (!s.is_empty()).then(|| s.iter().sum::<f64>() / s.len() as f64)
    }

    /// `dataset,regularizer,fold,metric,score` with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,regularizer,fold,metric,score\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:?}\n",
                csv_field(&r.dataset),
                csv_field(&r.regularizer),
                r.fold,
                r.metric.name(),
                r.score
            ));
        }
        out
    }

    /// `dataset,regularizer,fold,seconds` with a header. Kept apart from
    /// the scores, which are fully determined by the seed.
    pub fn timing_to_csv(&self) -> String {
        let mut out = String::from("dataset,regularizer,fold,seconds\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.6}\n",
                csv_field(&r.dataset),
                csv_field(&r.regularizer),
                r.fold,
                r.seconds
            ));
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankSummary {
    pub regularizer: String,
    pub mean: f64,
    /// Sample standard deviation across cells (0 for a single cell).
    pub std: f64,
    pub cells: usize,
}

/// Ranks within a cell: 1 is best, ties share the mean of their ranks.
pub fn rank_scores(scores: &[f64], higher_is_better: bool) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        let o = scores[a].total_cmp(&scores[b]);
        if higher_is_better {
            o.reverse()
        } else {
            o
        }
    });
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// Mean ± standard deviation of per-cell ranks, a cell being one
/// `(dataset, fold)` pair. Every cell must score the same regularisers once.
pub fn average_rank(table: &MetricsTable) -> Result<Vec<RankSummary>> {
    if table.rows.is_empty() {
        return arg_err("empty metrics table");
    }
    let regs = table.regularizers();
    let metric = table.rows[0].metric;
    if table.rows.iter().any(|r| r.metric != metric) {
        return arg_err("metrics table mixes metric kinds");
    }
    let mut cells: BTreeMap<(&str, usize), Vec<Option<f64>>> = BTreeMap::new();
    for r in &table.rows {
        let slot = cells
            .entry((&r.dataset, r.fold))
            .or_insert_with(|| vec![None; regs.len()]);
        let k = regs
            .iter()
            .position(|g| *g == r.regularizer)
            .expect("listed");
        if slot[k].replace(r.score).is_some() {
            return arg_err(format!(
                "duplicate row for {} on {} fold {}",
                r.regularizer, r.dataset, r.fold
            ));
        }
    }
    let mut per_reg = vec![Vec::new(); regs.len()];
    for ((ds, fold), slot) in &cells {
        let Some(scores) = slot.iter().copied().collect::<Option<Vec<f64>>>() else {
            let missing = regs
                .iter()
                .zip(slot)
                .find(|(_, s)| s.is_none())
                .map(|(g, _)| g.as_str())
                .unwrap_or("?");
            return arg_err(format!(
                "incomplete grid: {missing} missing on {ds} fold {fold}"
            ));
        };
        for (k, r) in rank_scores(&scores, metric.higher_is_better())
            .into_iter()
            .enumerate()
        {
            per_reg[k].push(r);
        }
    }
    Ok(regs
        .into_iter()
        .zip(per_reg)
        .map(|(regularizer, ranks)| {
            let n = ranks.len() as f64;
            let mean = ranks.iter().sum::<f64>() / n;
            let std = if ranks.len() > 1 {
                (ranks.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            RankSummary {
                regularizer,
                mean,
                std,
                cells: ranks.len(),
            }
        })
        .collect())
}

pub fn ranks_to_csv(ranks: &[RankSummary]) -> String {
    let mut out = String::from("regularizer,mean_rank,std_rank,cells\n");
    for r in ranks {
        out.push_str(&format!(
            "{},{:.6},{:.6},{}\n",
            csv_field(&r.regularizer),
            r.mean,
            r.std,
            r.cells
        ));
    }
    out
}
