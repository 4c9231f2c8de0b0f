//! Aggregate-feature baselines: per-user-day count vectors fed to PCA
//! reconstruction error or an isolation forest, run under the same
//! online no-peek protocol as the neural pipeline (fit on days < k,
//! score day k).

pub mod features;
pub mod iforest;
pub mod pca;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::ingest::DayBatch;
use crate::pipeline::UserDayScore;

pub use features::{CommonalityTracker, FeatureSchema, FieldId, UserDayVector, VectorBuilder};
pub use iforest::IsolationForest;
pub use pca::PcaDetector;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectorKind {
    Pca,
    Iso,
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pca" => Ok(DetectorKind::Pca),
            "iso" => Ok(DetectorKind::Iso),
            other => Err(Error::Config(format!("unknown detector {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BaselineConfig {
    pub detector: DetectorKind,
    pub pca_components: usize,
    pub iso_trees: usize,
    pub iso_subsample: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            detector: DetectorKind::Iso,
            pca_components: 10,
            iso_trees: 100,
            iso_subsample: 256,
            seed: 0,
        }
    }
}

fn to_matrix(vectors: &[Vec<f64>]) -> Array2<f64> {
    let rows = vectors.len();
    let cols = vectors.first().map_or(0, |v| v.len());
    let mut m = Array2::zeros((rows, cols));
    for (i, v) in vectors.iter().enumerate() {
        for (j, &x) in v.iter().enumerate() {
            m[[i, j]] = x;
        }
    }
    m
}

/// Online baseline protocol over day batches (ascending day order).
///
/// Day k is scored by a detector fit on all user-day vectors from days
/// `< k`; the first day, having no history, is scored against a fit on
/// itself (documented cold-start exception). Emits the same user-day
/// rows as the neural pipeline.
pub fn baseline_run(
    batches: &[DayBatch],
    schema: &FeatureSchema,
    cfg: &BaselineConfig,
) -> Result<Vec<UserDayScore>> {
    let mut builder = VectorBuilder::new(schema.clone());
    let mut history: Vec<Vec<f64>> = Vec::new();
    let mut out = Vec::new();
    let mut prev_day: Option<u32> = None;

    for batch in batches {
        if let Some(prev) = prev_day {
            if batch.day < prev {
                return Err(Error::DayOrder { prev, seen: batch.day });
            }
        }
        prev_day = Some(batch.day);
        let vectors = builder.day_vectors(batch);
        if vectors.is_empty() {
            continue;
        }
        let day_feats: Vec<Vec<f64>> = vectors.iter().map(|v| v.features.clone()).collect();
        let fit_on = if history.is_empty() { &day_feats } else { &history };
        let fit_matrix = to_matrix(fit_on);
        let scores: Vec<f64> = match cfg.detector {
            DetectorKind::Pca => {
                let k = cfg.pca_components.min(schema.dim());
                let det = PcaDetector::fit(&fit_matrix, k)?;
                day_feats.iter().map(|v| det.score_slice(v)).collect()
            }
            DetectorKind::Iso => {
                let day_seed = cfg
                    .seed
                    .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(batch.day as u64 + 1));
                let det = IsolationForest::fit(&fit_matrix, cfg.iso_trees, cfg.iso_subsample, day_seed)?;
                day_feats.iter().map(|v| det.score_slice(v)).collect()
            }
        };
        for (v, s) in vectors.iter().zip(scores) {
            out.push(UserDayScore {
                day: batch.day,
                user: v.user.clone(),
                score: s,
                is_redteam_day: v.is_red_day,
            });
        }
        history.extend(day_feats);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_auth_line;

    fn batch(day: u32, lines: &[&str]) -> DayBatch {
        DayBatch {
            day,
            events: lines.iter().map(|l| parse_auth_line(l, 1).unwrap()).collect(),
        }
    }

    fn mk_line(t: u64, user: &str, dst_pc: &str) -> String {
        format!("{t},{user}@D,{user}@D,P1,{dst_pc},Kerberos,Network,LogOn,Success")
    }

    #[test]
    fn identical_days_give_near_constant_scores() {
        let lines0: Vec<String> = (0..6).map(|i| mk_line(i, "U1", "C1")).collect();
        let batches: Vec<DayBatch> = (0..4u32)
            .map(|d| {
                let lines: Vec<String> = lines0
                    .iter()
                    .map(|l| {
                        let mut parts: Vec<&str> = l.split(',').collect();
                        let t: u64 = parts[0].parse().unwrap();
                        let shifted = (t + d as u64 * 86400).to_string();
                        parts[0] = &shifted;
                        parts.join(",")
                    })
                    .collect();
                batch(d, &lines.iter().map(|s| s.as_str()).collect::<Vec<_>>())
            })
            .collect();
        let schema = FeatureSchema::discover(&batches[0].events, None, None).unwrap();
        let cfg = BaselineConfig { detector: DetectorKind::Pca, ..Default::default() };
        let scores = baseline_run(&batches, &schema, &cfg).unwrap();
        assert_eq!(scores.len(), 4);
        // after day 0 the vectors equal history exactly
        for s in &scores[1..] {
            assert!(s.score < 1e-9, "score {}", s.score);
        }
    }

    #[test]
    fn out_of_order_days_error() {
        let b0 = batch(1, &[&mk_line(86_400, "U1", "C1")]);
        let b1 = batch(0, &[&mk_line(0, "U1", "C1")]);
        let schema = FeatureSchema::discover(&b0.events, None, None).unwrap();
        let err = baseline_run(&[b0, b1], &schema, &BaselineConfig::default());
        assert!(err.is_err());
    }
}
