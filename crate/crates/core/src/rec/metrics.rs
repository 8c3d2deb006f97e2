//! AUC (Mann-Whitney with mid-ranks), accuracy at 0.5 and clamped log-loss.

use alloc::vec::Vec;

use crate::cot::Label;
use crate::error::{Error, Result};
use crate::math::clamped_bce;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    /// `None` when every label is the same.
    pub auc: Option<f64>,
    pub acc: f64,
    pub logloss: f64,
}

impl MetricsReport {
    pub fn auc(&self) -> Result<f64> {
        self.auc.ok_or(Error::AucUndefined)
    }
}

pub fn roc_auc(scores: &[(f64, Label)]) -> Result<f64> {
    let n_pos = scores.iter().filter(|(_, l)| l.is_yes()).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::AucUndefined);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].0.total_cmp(&scores[b].0));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]].0 == scores[order[i]].0 {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let mid = (i + 1 + j) as f64 / 2.0;
        let tied_pos = order[i..j].iter().filter(|&&k| scores[k].1.is_yes()).count();
        pos_rank_sum += mid * tied_pos as f64;
        i = j;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

pub fn evaluate(scores: &[(f64, Label)]) -> Result<MetricsReport> {
    if scores.is_empty() {
        return Err(Error::InvalidInput("no scores to evaluate".into()));
    }
    let n = scores.len() as f64;
    let correct = scores.iter().filter(|(p, l)| (*p >= 0.5) == l.is_yes()).count();
    let logloss = scores.iter().map(|&(p, l)| clamped_bce(p, l.target())).sum::<f64>() / n;
    Ok(MetricsReport { auc: roc_auc(scores).ok(), acc: correct as f64 / n, logloss })
}
