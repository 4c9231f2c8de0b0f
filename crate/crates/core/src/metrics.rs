//! Evaluation: AUC, per-day Average Percentile, ROC curves, and
//! recall at an analyst budget.

use serde::Serialize;

use crate::error::{Error, Result};

/// One scored item with its ground-truth label and day bucket.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledScore {
    pub score: f64,
    pub positive: bool,
    pub day: u32,
}

impl LabeledScore {
    pub fn new(score: f64, positive: bool, day: u32) -> Self {
        LabeledScore { score, positive, day }
    }
}

fn validate(scores: &[LabeledScore]) -> Result<(usize, usize)> {
    if scores.iter().any(|s| !s.score.is_finite()) {
        return Err(Error::Metric("non-finite score".into()));
    }
    let pos = scores.iter().filter(|s| s.positive).count();
    let neg = scores.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Metric(format!(
            "need at least one positive and one negative, got {pos} / {neg}"
        )));
    }
    Ok((pos, neg))
}

/// Area under the ROC curve as the rank statistic
/// `P(score_pos > score_neg) + ½·P(tie)`, computed from one sort.
///
/// Tie handling uses the midrank convention; the count arithmetic is
/// integer-exact, so the result matches pairwise counting bit for bit.
pub fn auc(scores: &[LabeledScore]) -> Result<f64> {
    let (pos, neg) = validate(scores)?;
    let mut sorted: Vec<(f64, bool)> = scores.iter().map(|s| (s.score, s.positive)).collect();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut wins2x: u128 = 0; // 2·wins + ties over all (pos, neg) pairs
    let mut negs_below: u128 = 0;
    let mut i = 0usize;
    while i < sorted.len() {
        let mut j = i;
        let mut p_g: u128 = 0;
        let mut n_g: u128 = 0;
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            if sorted[j].1 {
                p_g += 1;
            } else {
                n_g += 1;
            }
            j += 1;
        }
        wins2x += p_g * (2 * negs_below + n_g);
        negs_below += n_g;
        i = j;
    }
    Ok(wins2x as f64 / (2 * pos as u128 * neg as u128) as f64)
}

/// Mean, over positives, of their within-day score percentile:
/// `100·(#strictly-lower + ½·#ties − ½) / #scores-that-day`, clamped to
/// [0, 100], where `#ties` counts the item itself.
pub fn average_percentile(scores: &[LabeledScore]) -> Result<f64> {
    if scores.iter().any(|s| !s.score.is_finite()) {
        return Err(Error::Metric("non-finite score".into()));
    }
    let positives: Vec<&LabeledScore> = scores.iter().filter(|s| s.positive).collect();
    if positives.is_empty() {
        return Err(Error::Metric("no positives for average percentile".into()));
    }
    let mut by_day: std::collections::BTreeMap<u32, Vec<f64>> = std::collections::BTreeMap::new();
    for s in scores {
        by_day.entry(s.day).or_default().push(s.score);
    }
    for v in by_day.values_mut() {
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    let mut total = 0.0f64;
    for p in &positives {
        let day_scores = &by_day[&p.day];
        let n = day_scores.len() as f64;
        let lower = day_scores.partition_point(|&s| s < p.score) as f64;
        let upper = day_scores.partition_point(|&s| s <= p.score) as f64;
        let ties = upper - lower;
        let pct = (100.0 * (lower + 0.5 * ties - 0.5) / n).clamp(0.0, 100.0);
        total += pct;
    }
    Ok(total / positives.len() as f64)
}

/// ROC curve from a descending threshold sweep over distinct scores.
#[derive(Debug, Clone)]
pub struct RocCurve {
    /// (false-positive-rate, true-positive-rate), from (0,0) to (1,1).
    pub points: Vec<(f64, f64)>,
    /// Threshold producing each point; the first is +inf.
    pub thresholds: Vec<f64>,
}

impl RocCurve {
    /// Trapezoidal area; equals [`auc`] within 1e-12.
    pub fn area(&self) -> f64 {
        let mut area = 0.0;
        for w in self.points.windows(2) {
            let (x1, y1) = w[0];
            let (x2, y2) = w[1];
            area += (x2 - x1) * (y1 + y2) * 0.5;
        }
        area
    }
}

pub fn roc_curve(scores: &[LabeledScore]) -> Result<RocCurve> {
    let (pos, neg) = validate(scores)?;
    let mut sorted: Vec<(f64, bool)> = scores.iter().map(|s| (s.score, s.positive)).collect();
    sorted.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());

    let mut points = vec![(0.0, 0.0)];
    let mut thresholds = vec![f64::INFINITY];
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut i = 0usize;
    while i < sorted.len() {
        let threshold = sorted[i].0;
        while i < sorted.len() && sorted[i].0 == threshold {
            if sorted[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
        thresholds.push(threshold);
    }
    Ok(RocCurve { points, thresholds })
}

/// Fraction of positives among the top `floor(budget·n)` scores.
/// Ties are broken by original index so results are deterministic.
pub fn recall_at_budget(scores: &[LabeledScore], budget: f64) -> Result<f64> {
    if !(budget > 0.0 && budget <= 1.0) {
        return Err(Error::Metric(format!("budget {budget} outside (0, 1]")));
    }
    let total_pos = scores.iter().filter(|s| s.positive).count();
    if total_pos == 0 {
        return Err(Error::Metric("no positives for recall".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .score
            .partial_cmp(&scores[a].score)
            .unwrap()
            .then(a.cmp(&b))
    });
    let top_k = ((budget * scores.len() as f64).floor() as usize).min(scores.len());
    let hit = order[..top_k].iter().filter(|&&i| scores[i].positive).count();
    Ok(hit as f64 / total_pos as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct BudgetRecall {
    pub budget: f64,
    pub recall: f64,
}

/// The eval report emitted as JSON.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub granularity: String,
    pub normalization: String,
    pub n_scores: usize,
    pub n_positives: usize,
    pub auc: f64,
    pub average_percentile: f64,
    pub recall_at_budget: Vec<BudgetRecall>,
}

pub fn build_report(
    scores: &[LabeledScore],
    granularity: &str,
    normalization: &str,
    budgets: &[f64],
) -> Result<MetricsReport> {
    let auc_v = auc(scores)?;
    let ap = average_percentile(scores)?;
    let mut recalls = Vec::new();
    for &b in budgets {
        recalls.push(BudgetRecall { budget: b, recall: recall_at_budget(scores, b)? });
    }
    Ok(MetricsReport {
        granularity: granularity.to_string(),
        normalization: normalization.to_string(),
        n_scores: scores.len(),
        n_positives: scores.iter().filter(|s| s.positive).count(),
        auc: auc_v,
        average_percentile: ap,
        recall_at_budget: recalls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// O(n²) pair-counting oracle with identical integer arithmetic.
    fn auc_pairwise(scores: &[LabeledScore]) -> f64 {
        let pos: Vec<f64> = scores.iter().filter(|s| s.positive).map(|s| s.score).collect();
        let neg: Vec<f64> = scores.iter().filter(|s| !s.positive).map(|s| s.score).collect();
        let mut wins2x: u128 = 0;
        for &p in &pos {
            for &n in &neg {
                if p > n {
                    wins2x += 2;
                } else if p == n {
                    wins2x += 1;
                }
            }
        }
        wins2x as f64 / (2 * pos.len() as u128 * neg.len() as u128) as f64
    }

    fn ls(score: f64, positive: bool) -> LabeledScore {
        LabeledScore::new(score, positive, 0)
    }

    #[test]
    fn perfect_ranking_is_one() {
        let s = [ls(0.9, true), ls(0.1, false)];
        assert_eq!(auc(&s).unwrap(), 1.0);
    }

    #[test]
    fn all_ties_is_half() {
        let s = [ls(0.5, true), ls(0.5, false), ls(0.5, true), ls(0.5, false)];
        assert_eq!(auc(&s).unwrap(), 0.5);
    }

    #[test]
    fn degenerate_labels_error() {
        assert!(auc(&[ls(1.0, true)]).is_err());
        assert!(auc(&[ls(1.0, true), ls(0.5, true)]).is_err());
    }

    #[test]
    fn auc_matches_pairwise_oracle_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..200 {
            let n = rng.random_range(4..40);
            let scores: Vec<LabeledScore> = (0..n)
                .map(|_| {
                    // coarse grid forces plenty of ties
                    let s = (rng.random_range(0..8) as f64) * 0.125;
                    ls(s, rng.random_range(0.0..1.0) < 0.4)
                })
                .collect();
            let pos = scores.iter().filter(|s| s.positive).count();
            if pos == 0 || pos == scores.len() {
                continue;
            }
            assert_eq!(auc(&scores).unwrap(), auc_pairwise(&scores));
        }
    }

    #[test]
    fn auc_invariant_under_monotone_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scores: Vec<LabeledScore> = (0..60)
            .map(|_| ls(rng.random_range(-4.0..4.0), rng.random_range(0.0..1.0) < 0.3))
            .collect();
        let base = auc(&scores).unwrap();
        let transformed: Vec<LabeledScore> = scores
            .iter()
            .map(|s| ls((s.score * 0.5).exp() + 3.0, s.positive))
            .collect();
        assert_eq!(auc(&transformed).unwrap(), base);
    }

    /// Brute-force per-day rank oracle for the percentile formula.
    fn ap_oracle(scores: &[LabeledScore]) -> f64 {
        let positives: Vec<&LabeledScore> = scores.iter().filter(|s| s.positive).collect();
        let mut total = 0.0;
        for p in &positives {
            let day: Vec<f64> = scores.iter().filter(|s| s.day == p.day).map(|s| s.score).collect();
            let lower = day.iter().filter(|&&s| s < p.score).count() as f64;
            let ties = day.iter().filter(|&&s| s == p.score).count() as f64;
            total += (100.0 * (lower + 0.5 * ties - 0.5) / day.len() as f64).clamp(0.0, 100.0);
        }
        total / positives.len() as f64
    }

    #[test]
    fn percentile_worked_example() {
        // one positive ranked 3rd of 4 with exactly one lower score
        let scores = [
            LabeledScore::new(5.0, false, 1),
            LabeledScore::new(4.0, false, 1),
            LabeledScore::new(3.0, true, 1),
            LabeledScore::new(1.0, false, 1),
        ];
        assert_eq!(average_percentile(&scores).unwrap(), 25.0);
        assert_eq!(ap_oracle(&scores), 25.0);
    }

    #[test]
    fn ap_matches_brute_force_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let n = rng.random_range(5..60);
            let scores: Vec<LabeledScore> = (0..n)
                .map(|_| {
                    LabeledScore::new(
                        (rng.random_range(0..10) as f64) * 0.3,
                        rng.random_range(0.0..1.0) < 0.3,
                        rng.random_range(0..4),
                    )
                })
                .collect();
            if !scores.iter().any(|s| s.positive) {
                continue;
            }
            let got = average_percentile(&scores).unwrap();
            let want = ap_oracle(&scores);
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn ap_extremes() {
        // positives are each day's unique max -> AP ≈ 100
        let mut scores = Vec::new();
        for day in 0..5u32 {
            for i in 0..200 {
                scores.push(LabeledScore::new(i as f64, i == 199, day));
            }
        }
        let ap = average_percentile(&scores).unwrap();
        assert!(ap > 99.0 && ap <= 100.0, "{ap}");
        // positives the minimum -> AP ≈ 0
        for s in scores.iter_mut() {
            s.positive = s.score == 0.0;
        }
        let ap = average_percentile(&scores).unwrap();
        assert!(ap < 1.0, "{ap}");
    }

    #[test]
    fn ap_invariant_under_per_day_shift_auc_not() {
        // two days with different shifts: within-day ranks unchanged
        let base = vec![
            LabeledScore::new(1.0, false, 0),
            LabeledScore::new(2.0, true, 0),
            LabeledScore::new(3.0, false, 0),
            LabeledScore::new(1.0, false, 1),
            LabeledScore::new(2.5, false, 1),
            LabeledScore::new(3.0, true, 1),
        ];
        let shifted: Vec<LabeledScore> = base
            .iter()
            .map(|s| LabeledScore::new(s.score + if s.day == 1 { 100.0 } else { 0.0 }, s.positive, s.day))
            .collect();
        assert_eq!(
            average_percentile(&base).unwrap(),
            average_percentile(&shifted).unwrap()
        );
        // pooled AUC moves: day-1 scores now dominate everything
        assert_ne!(auc(&base).unwrap(), auc(&shifted).unwrap());
    }

    #[test]
    fn roc_area_equals_auc() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let scores: Vec<LabeledScore> = (0..50)
                .map(|_| {
                    ls(
                        (rng.random_range(0..12) as f64) * 0.25,
                        rng.random_range(0.0..1.0) < 0.4,
                    )
                })
                .collect();
            let pos = scores.iter().filter(|s| s.positive).count();
            if pos == 0 || pos == scores.len() {
                continue;
            }
            let curve = roc_curve(&scores).unwrap();
            assert!((curve.area() - auc(&scores).unwrap()).abs() < 1e-12);
            // monotone from (0,0) to (1,1)
            assert_eq!(curve.points[0], (0.0, 0.0));
            assert_eq!(*curve.points.last().unwrap(), (1.0, 1.0));
            for w in curve.points.windows(2) {
                assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
            }
        }
    }

    #[test]
    fn perfect_separation_passes_through_0_1() {
        let scores = [ls(3.0, true), ls(2.0, true), ls(1.0, false), ls(0.0, false)];
        let curve = roc_curve(&scores).unwrap();
        assert!(curve.points.contains(&(0.0, 1.0)));
        assert_eq!(curve.area(), 1.0);
    }

    #[test]
    fn recall_budget_edges() {
        let scores = [ls(0.9, true), ls(0.8, false), ls(0.7, true), ls(0.1, false)];
        assert_eq!(recall_at_budget(&scores, 1.0).unwrap(), 1.0);
        assert_eq!(recall_at_budget(&scores, 0.25).unwrap(), 0.5);
        assert!(recall_at_budget(&scores, 0.0).is_err());
        assert!(recall_at_budget(&scores, 1.5).is_err());
    }
}
