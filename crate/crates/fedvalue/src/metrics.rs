//! AUROC, subgroup bias, and the descriptive/inferential statistics used by
//! the experiment reports.
//!
//! AUROC uses the Mann-Whitney rank formulation with midranks for ties.
//! "Total AUROC" is the unweighted macro average over non-degenerate label
//! columns. Bias is the macro AUROC on subgroup A minus subgroup B; positive
//! favors A.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{t_cdf, t_quantile};
use crate::synthdata::Subgroup;

/// Predictions, truth and subgroup tags for one evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredTestSet {
    /// Per-sample predicted probability vectors (n x L).
    pub probs: Vec<Vec<f64>>,
    /// Per-sample true label vectors (n x L).
    pub labels: Vec<Vec<u8>>,
    pub subgroups: Vec<Subgroup>,
}

impl ScoredTestSet {
    pub fn new(probs: Vec<Vec<f64>>, labels: Vec<Vec<u8>>, subgroups: Vec<Subgroup>) -> Result<Self> {
        if probs.len() != labels.len() || probs.len() != subgroups.len() {
            return Err(Error::Metric(format!(
                "misaligned test set: {} probs, {} labels, {} subgroups",
                probs.len(),
                labels.len(),
                subgroups.len()
            )));
        }
        if probs.is_empty() {
            return Err(Error::Metric("empty test set".into()));
        }
        let l = probs[0].len();
        if probs.iter().any(|p| p.len() != l) || labels.iter().any(|y| y.len() != l) {
            return Err(Error::Metric("ragged probability or label rows".into()));
        }
        if probs.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Metric("probabilities outside [0, 1]".into()));
        }
        Ok(ScoredTestSet {
            probs,
            labels,
            subgroups,
        })
    }

    pub fn label_count(&self) -> usize {
        self.probs[0].len()
    }

    fn subset(&self, g: Subgroup) -> Option<ScoredTestSet> {
        let idx: Vec<usize> = (0..self.subgroups.len())
            .filter(|&i| self.subgroups[i] == g)
            .collect();
        if idx.is_empty() {
            return None;
        }
        Some(ScoredTestSet {
            probs: idx.iter().map(|&i| self.probs[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i].clone()).collect(),
            subgroups: idx.iter().map(|&i| self.subgroups[i]).collect(),
        })
    }
}

/// AUROC by the Mann-Whitney rank statistic; ties contribute 1/2.
/// Errors if only one class is present (the caller decides exclusion).
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::Metric(format!(
            "auroc needs aligned non-empty inputs, got {}/{}",
            scores.len(),
            labels.len()
        )));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Metric(
            "degenerate labels: both classes required for AUROC".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Midranks over tie groups, accumulated for positives only.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            if labels[k] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Macro AUROC with the indices of label columns excluded as degenerate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroAuroc {
    pub value: f64,
    /// Label columns lacking one of the two classes, skipped in the mean.
    pub excluded: Vec<usize>,
}

/// Unweighted mean of per-label AUROCs over non-degenerate columns.
pub fn macro_auroc(ts: &ScoredTestSet) -> Result<MacroAuroc> {
    let l = ts.label_count();
    let mut total = 0.0;
    let mut used = 0usize;
    let mut excluded = Vec::new();
    for j in 0..l {
        let scores: Vec<f64> = ts.probs.iter().map(|p| p[j]).collect();
        let labels: Vec<u8> = ts.labels.iter().map(|y| y[j]).collect();
        let pos = labels.iter().filter(|&&y| y == 1).count();
        if pos == 0 || pos == labels.len() {
            excluded.push(j);
            continue;
        }
        total += auroc(&scores, &labels)?;
        used += 1;
    }
    if used == 0 {
        return Err(Error::Metric(
            "all label columns degenerate; macro AUROC undefined".into(),
        ));
    }
    Ok(MacroAuroc {
        value: total / used as f64,
        excluded,
    })
}

/// Which subgroup a bias value favors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Favored {
    A,
    B,
    None,
}

/// Subgroup AUROC difference in [-1, 1]; positive favors subgroup A.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasValue {
    pub value: f64,
    pub favored: Favored,
}

impl BiasValue {
    fn from_value(value: f64) -> Self {
        let favored = if value > 0.0 {
            Favored::A
        } else if value < 0.0 {
            Favored::B
        } else {
            Favored::None
        };
        BiasValue { value, favored }
    }
}

/// `macro_auroc(subgroup A) - macro_auroc(subgroup B)`.
pub fn bias(ts: &ScoredTestSet) -> Result<BiasValue> {
    let sub_a = ts
        .subset(Subgroup::A)
        .ok_or_else(|| Error::Metric("subgroup A missing from test set".into()))?;
    let sub_b = ts
        .subset(Subgroup::B)
        .ok_or_else(|| Error::Metric("subgroup B missing from test set".into()))?;
    let a = macro_auroc(&sub_a)?;
    let b = macro_auroc(&sub_b)?;
    Ok(BiasValue::from_value(a.value - b.value))
}

/// Mean and half-width of a Student-t confidence interval (n-1 dof).
pub fn mean_ci(values: &[f64], level: f64) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(Error::Stats(format!(
            "mean_ci needs >= 2 values, got {}",
            values.len()
        )));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::Stats(format!(
            "confidence level must be in (0, 1), got {level}"
        )));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    let t = t_quantile(0.5 + level / 2.0, n - 1.0)?;
    Ok((mean, t * var.sqrt() / n.sqrt()))
}

/// Two-sided paired t-test p-value on `a - b`.
///
/// Zero-variance differences: p = 1 when the mean difference is also zero,
/// otherwise the p-value collapses and is floored at `f64::MIN_POSITIVE`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Stats(format!(
            "paired_t_test needs equal lengths, got {}/{}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::Stats("paired_t_test needs >= 2 pairs".into()));
    }
    let n = a.len() as f64;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Ok(if mean == 0.0 { 1.0 } else { f64::MIN_POSITIVE });
    }
    let t = mean / (var.sqrt() / n.sqrt());
    let p = 2.0 * (1.0 - t_cdf(t.abs(), n - 1.0)?);
    Ok(p.clamp(f64::MIN_POSITIVE, 1.0))
}
