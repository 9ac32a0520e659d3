//! Regression and binary sentiment metrics.
//!
//! Binary accuracy is reported under two conventions: negative vs
//! non-negative over all samples, and negative vs positive with zero-labeled
//! samples dropped. Weighted F1 uses the second convention.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    /// `None` when either vector has zero variance.
    pub corr: Option<f64>,
    pub acc2_neg_nonneg: f64,
    /// `None` when every ground-truth label is zero.
    pub acc2_neg_pos: Option<f64>,
    pub f1_weighted: Option<f64>,
    pub n_all: usize,
    pub n_nonzero: usize,
}

fn check_lengths(pred: &[f64], gt: &[f64]) -> Result<()> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::Dimension {
            op: "metrics",
            left: (pred.len(), 1),
            right: (gt.len(), 1),
        });
    }
    Ok(())
}

/// `(MAE, Pearson r)`.
pub fn regression_metrics(pred: &[f64], gt: &[f64]) -> Result<(f64, Option<f64>)> {
    check_lengths(pred, gt)?;
    let n = pred.len() as f64;
    let mae = pred.iter().zip(gt).map(|(p, g)| (p - g).abs()).sum::<f64>() / n;
    let mean_p = pred.iter().sum::<f64>() / n;
    let mean_g = gt.iter().sum::<f64>() / n;
    let (mut cov, mut var_p, mut var_g) = (0.0, 0.0, 0.0);
    for (p, g) in pred.iter().zip(gt) {
        let (dp, dg) = (p - mean_p, g - mean_g);
        cov += dp * dg;
        var_p += dp * dp;
        var_g += dg * dg;
    }
    let corr = (var_p > 0.0 && var_g > 0.0).then(|| (cov / (var_p.sqrt() * var_g.sqrt())).clamp(-1.0, 1.0));
    Ok((mae, corr))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub acc2_neg_nonneg: f64,
    pub acc2_neg_pos: Option<f64>,
    pub f1_weighted: Option<f64>,
    pub n_nonzero: usize,
}

/// Support-weighted F1 over the two classes; a class predicted never gets
/// F1 = 0.
fn weighted_f1(pred: &[bool], truth: &[bool]) -> f64 {
    let n = truth.len() as f64;
    [true, false]
        .iter()
        .map(|&class| {
            let support = truth.iter().filter(|&&t| t == class).count();
            if support == 0 {
                return 0.0;
            }
            let tp = pred.iter().zip(truth).filter(|&(&p, &t)| p == class && t == class).count() as f64;
            let predicted = pred.iter().filter(|&&p| p == class).count() as f64;
            let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
            let recall = tp / support as f64;
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            f1 * support as f64 / n
        })
        .sum()
}

pub fn classification_metrics(pred: &[f64], gt: &[f64]) -> Result<ClassificationMetrics> {
    check_lengths(pred, gt)?;
    let agree = pred.iter().zip(gt).filter(|(p, g)| (**p < 0.0) == (**g < 0.0)).count();
    let acc2_neg_nonneg = agree as f64 / pred.len() as f64;

    let (pred_pos, truth_pos): (Vec<bool>, Vec<bool>) = pred
        .iter()
        .zip(gt)
        .filter(|(_, g)| **g != 0.0)
        .map(|(p, g)| (*p > 0.0, *g > 0.0))
        .unzip();
    let n_nonzero = truth_pos.len();
    let (acc2_neg_pos, f1_weighted) = if n_nonzero == 0 {
        (None, None)
    } else {
        let hits = pred_pos.iter().zip(&truth_pos).filter(|(p, t)| p == t).count();
        (
            Some(hits as f64 / n_nonzero as f64),
            Some(weighted_f1(&pred_pos, &truth_pos)),
        )
    };
    Ok(ClassificationMetrics {
        acc2_neg_nonneg,
        acc2_neg_pos,
        f1_weighted,
        n_nonzero,
    })
}

pub fn evaluate(pred: &[f64], gt: &[f64]) -> Result<MetricsReport> {
    let (mae, corr) = regression_metrics(pred, gt)?;
    let cls = classification_metrics(pred, gt)?;
    Ok(MetricsReport {
        mae,
        corr,
        acc2_neg_nonneg: cls.acc2_neg_nonneg,
        acc2_neg_pos: cls.acc2_neg_pos,
        f1_weighted: cls.f1_weighted,
        n_all: pred.len(),
        n_nonzero: cls.n_nonzero,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"))
}

impl MetricsReport {
    /// Aligned plain-text table, one metric per row.
    pub fn to_table(&self) -> String {
        let rows = [
            ("MAE", format!("{:.4}", self.mae)),
            ("Corr", opt(self.corr)),
            ("Acc-2 (neg/non-neg)", format!("{:.4}", self.acc2_neg_nonneg)),
            ("Acc-2 (neg/pos)", opt(self.acc2_neg_pos)),
            ("F1 weighted (neg/pos)", opt(self.f1_weighted)),
            ("n (all)", self.n_all.to_string()),
            ("n (non-zero)", self.n_nonzero.to_string()),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<width$}  {v:>10}\n"))
            .collect()
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_table())
    }
}
