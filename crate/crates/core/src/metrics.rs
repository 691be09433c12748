//! Threshold-free OOD metrics. Scores follow the convention that higher
//! means more OOD-like.

use serde::{Deserialize, Serialize};

use crate::detect::{order_statistic, TARGET_ACCEPTANCE};

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("no {0} scores")]
    Empty(&'static str),
    #[error("non-finite {0} score")]
    NonFinite(&'static str),
}

/// Which side counts as positive for average precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Positives {
    Id,
    Ood,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoredPopulation {
    pub id: Vec<f64>,
    pub ood: Vec<f64>,
}

fn check(id: &[f64], ood: &[f64]) -> Result<(), MetricError> {
    if id.is_empty() {
        return Err(MetricError::Empty("ID"));
    }
    if ood.is_empty() {
        return Err(MetricError::Empty("OOD"));
    }
    if !id.iter().all(|v| v.is_finite()) {
        return Err(MetricError::NonFinite("ID"));
    }
    if !ood.iter().all(|v| v.is_finite()) {
        return Err(MetricError::NonFinite("OOD"));
    }
    Ok(())
}

/// Mann-Whitney estimate of `P(ood > id) + P(ood == id) / 2` from
/// tie-averaged ranks.
pub fn auroc(id: &[f64], ood: &[f64]) -> Result<f64, MetricError> {
    check(id, ood)?;
    let mut all: Vec<(f64, bool)> = id
        .iter()
        .map(|&s| (s, false))
        .chain(ood.iter().map(|&s| (s, true)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut ood_rank_sum = 0.0;
    let mut start = 0;
    while start < all.len() {
        let mut end = start + 1;
        while end < all.len() && all[end].0 == all[start].0 {
            end += 1;
        }
        // ranks start+1 ..= end share their mean
        let mean_rank = (start + 1 + end) as f64 / 2.0;
        let n_ood = all[start..end].iter().filter(|e| e.1).count();
        ood_rank_sum += mean_rank * n_ood as f64;
        start = end;
    }
    let (n, m) = (ood.len() as f64, id.len() as f64);
    Ok((ood_rank_sum - n * (n + 1.0) / 2.0) / (n * m))
}

/// Average precision with tied scores taken as one threshold step.
/// Positives are expected to score higher.
pub fn average_precision(positives: &[f64], negatives: &[f64]) -> Result<f64, MetricError> {
    if positives.is_empty() {
        return Err(MetricError::Empty("positive"));
    }
    if negatives.is_empty() {
        return Err(MetricError::Empty("negative"));
    }
    check(positives, negatives)?;
    let mut all: Vec<(f64, bool)> = positives
        .iter()
        .map(|&s| (s, true))
        .chain(negatives.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| b.0.total_cmp(&a.0));
    let total_pos = positives.len() as f64;
    let (mut tp, mut fp, mut ap) = (0usize, 0usize, 0.0);
    let mut start = 0;
    while start < all.len() {
        let mut end = start + 1;
        while end < all.len() && all[end].0 == all[start].0 {
            end += 1;
        }
        let new_tp = all[start..end].iter().filter(|e| e.1).count();
        tp += new_tp;
        fp += end - start - new_tp;
        if new_tp > 0 {
            ap += new_tp as f64 * tp as f64 / (tp + fp) as f64;
        }
        start = end;
    }
    Ok(ap / total_pos)
}

/// AUPR with the chosen side as positives. ID scores are negated so ID
/// samples rank high.
pub fn aupr(id: &[f64], ood: &[f64], positives: Positives) -> Result<f64, MetricError> {
    check(id, ood)?;
    match positives {
        Positives::Ood => average_precision(ood, id),
        Positives::Id => {
            let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
            average_precision(&neg(id), &neg(ood))
        }
    }
}

/// Fraction of OOD scores accepted by the threshold that accepts 95% of ID.
pub fn fpr_at_95_tpr(id: &[f64], ood: &[f64]) -> Result<f64, MetricError> {
    check(id, ood)?;
    let tau = order_statistic(id, TARGET_ACCEPTANCE).expect("checked non-empty");
    Ok(ood.iter().filter(|&&s| s <= tau).count() as f64 / ood.len() as f64)
}

impl ScoredPopulation {
    pub fn new(id: Vec<f64>, ood: Vec<f64>) -> Self {
        Self { id, ood }
    }

    pub fn auroc(&self) -> Result<f64, MetricError> {
        auroc(&self.id, &self.ood)
    }

    pub fn aupr(&self, positives: Positives) -> Result<f64, MetricError> {
        aupr(&self.id, &self.ood, positives)
    }

    pub fn fpr95(&self) -> Result<f64, MetricError> {
        fpr_at_95_tpr(&self.id, &self.ood)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auroc_examples() {
        assert_eq!(auroc(&[0.1, 0.2], &[0.3, 0.4]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.1, 0.3], &[0.2, 0.4]).unwrap(), 0.75);
        let s = [0.5, 0.1, 0.5, 0.9];
        assert_eq!(auroc(&s, &s).unwrap(), 0.5);
        assert_eq!(auroc(&[0.3, 0.4], &[0.1, 0.2]).unwrap(), 0.0);
    }

    #[test]
    fn aupr_examples() {
        assert_eq!(aupr(&[0.1, 0.2], &[0.3, 0.4], Positives::Ood).unwrap(), 1.0);
        assert_eq!(aupr(&[0.1, 0.2], &[0.3, 0.4], Positives::Id).unwrap(), 1.0);
        assert_eq!(aupr(&[0.1, 0.4], &[0.3], Positives::Ood).unwrap(), 0.5);
        // all tied: one step at precision n_pos / n
        assert_eq!(aupr(&[1.0; 3], &[1.0], Positives::Ood).unwrap(), 0.25);
    }

    #[test]
    fn degenerate_populations() {
        assert_eq!(auroc(&[], &[1.0]), Err(MetricError::Empty("ID")));
        assert_eq!(
            aupr(&[0.2], &[], Positives::Ood),
            Err(MetricError::Empty("OOD"))
        );
        assert_eq!(
            average_precision(&[0.3], &[]),
            Err(MetricError::Empty("negative"))
        );
        assert_eq!(
            fpr_at_95_tpr(&[f64::NAN], &[1.0]),
            Err(MetricError::NonFinite("ID"))
        );
    }

    #[test]
    fn fpr95_examples() {
        let id: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(fpr_at_95_tpr(&id, &[90.0, 96.0, 200.0]).unwrap(), 1.0 / 3.0);
        assert_eq!(fpr_at_95_tpr(&id, &[101.0, 150.0]).unwrap(), 0.0);
        assert_eq!(fpr_at_95_tpr(&id, &id).unwrap(), 0.95);
    }
}
