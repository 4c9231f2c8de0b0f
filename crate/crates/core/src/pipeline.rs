//! The online day loop: score day k with the model trained through day
//! k-1, emit per-event and per-user-day anomaly scores in rank order,
//! then train on day k.
//!
//! Detection-before-training is structural: scoring reads parameters
//! before the day's training pass touches them. Training code receives
//! only token sequences and user keys; red-team labels are unreachable
//! from it. Memory is bounded by the model plus one day's buffers plus
//! per-user states, independent of the total stream length.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::ingest::DayBatch;
use crate::models::{AnyModel, DayWork, TrainStats};
use crate::nn::{Adam, Real};
use crate::tokenize::Vocabulary;

/// Score normalization for emitted aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalization {
    Raw,
    Diff,
}

impl std::str::FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" | "max" => Ok(Normalization::Raw),
            "diff" => Ok(Normalization::Diff),
            other => Err(Error::Config(format!("unknown normalization {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    Event,
    UserDay,
}

impl std::str::FromStr for Granularity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "event" => Ok(Granularity::Event),
            "user-day" | "user_day" => Ok(Granularity::UserDay),
            other => Err(Error::Config(format!("unknown granularity {other:?}"))),
        }
    }
}

/// One scored event. `raw_score` is the model's mean cross-entropy in
/// nats; `diff_score` subtracts the user's same-day mean raw score.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredEvent {
    pub day: u32,
    pub user: String,
    /// Position of the event within its day's stream.
    pub ordinal: u32,
    pub raw_score: f64,
    pub diff_score: f64,
    pub is_redteam: bool,
    pub per_token: Option<Vec<f64>>,
}

/// Max-aggregated per-user-day score.
#[derive(Debug, Clone, PartialEq)]
pub struct UserDayScore {
    pub day: u32,
    pub user: String,
    pub score: f64,
    pub is_redteam_day: bool,
}

/// Set `diff_score` on one day's events: raw minus the user's mean raw
/// score that day. Per user-day the diff scores are mean-zero.
pub fn diff_normalize(events: &mut [ScoredEvent]) {
    let mut sums: BTreeMap<&str, (f64, u64)> = BTreeMap::new();
    for ev in events.iter() {
        let e = sums.entry(ev.user.as_str()).or_insert((0.0, 0));
        e.0 += ev.raw_score;
        e.1 += 1;
    }
    let means: BTreeMap<String, f64> = sums
        .into_iter()
        .map(|(u, (s, n))| (u.to_string(), s / n as f64))
        .collect();
    for ev in events.iter_mut() {
        ev.diff_score = ev.raw_score - means[ev.user.as_str()];
    }
}

/// Max over each user's event scores for the day, under the chosen
/// normalization. Users absent on a day produce no score.
pub fn aggregate_user_day(events: &[ScoredEvent], mode: Normalization) -> Vec<UserDayScore> {
    let mut agg: BTreeMap<&str, (f64, bool)> = BTreeMap::new();
    for ev in events {
        let s = match mode {
            Normalization::Raw => ev.raw_score,
            Normalization::Diff => ev.diff_score,
        };
        agg.entry(ev.user.as_str())
            .and_modify(|(best, red)| {
                if s > *best {
                    *best = s;
                }
                *red |= ev.is_redteam;
            })
            .or_insert((s, ev.is_redteam));
    }
    let day = events.first().map_or(0, |e| e.day);
    agg.into_iter()
        .map(|(user, (score, red))| UserDayScore {
            day,
            user: user.to_string(),
            score,
            is_redteam_day: red,
        })
        .collect()
}

/// A row of the ranked listing sent to analysts.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedEntry {
    pub day: u32,
    pub user: String,
    /// Event ordinal; 0 for user-day granularity.
    pub ordinal: u32,
    pub score: f64,
    pub is_redteam: bool,
}

/// Rank-order scores descending with a stable (day, user, ordinal)
/// tie-break; `top_n = 0` emits everything.
pub fn rank_and_emit(mut entries: Vec<RankedEntry>, top_n: usize) -> Vec<RankedEntry> {
    entries.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| (a.day, &a.user, a.ordinal).cmp(&(b.day, &b.user, b.ordinal)))
    });
    if top_n > 0 && entries.len() > top_n {
        entries.truncate(top_n);
    }
    entries
}

/// Pipeline knobs, all spelled out by the caller.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub batch_size: usize,
    pub score_batch: usize,
    pub epochs: usize,
    pub seed: u64,
    pub normalization: Normalization,
    /// Directory for optional per-day checkpoints.
    pub checkpoint_dir: Option<PathBuf>,
}

/// CSV sinks; either may be absent.
pub struct OutputSinks<'a> {
    pub events: Option<&'a mut dyn Write>,
    pub user_days: Option<&'a mut dyn Write>,
}

impl<'a> OutputSinks<'a> {
    pub fn none() -> Self {
        OutputSinks { events: None, user_days: None }
    }
}

pub const EVENT_CSV_HEADER: &str = "day,user,ordinal,raw,diff,is_redteam";
pub const USER_DAY_CSV_HEADER: &str = "day,user,score,is_redteam_day";

pub fn write_event_row(w: &mut dyn Write, ev: &ScoredEvent) -> Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{}",
        ev.day, ev.user, ev.ordinal, ev.raw_score, ev.diff_score, ev.is_redteam as u8
    )?;
    Ok(())
}

pub fn write_user_day_row(w: &mut dyn Write, s: &UserDayScore) -> Result<()> {
    writeln!(
        w,
        "{},{},{},{}",
        s.day, s.user, s.score, s.is_redteam_day as u8
    )?;
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct RunStats {
    pub days: u32,
    pub events_scored: u64,
    pub mean_score_by_day: Vec<(u32, f64)>,
    pub train: TrainStats,
}

/// Run the online loop over day batches (which must arrive in ascending
/// day order). For each day: score with the pre-day parameters, emit
/// per-event and per-user-day rows, then train.
pub fn run_online<F: Real>(
    model: &mut AnyModel<F>,
    days: impl Iterator<Item = DayBatch>,
    vocab: &Vocabulary,
    cfg: &PipelineConfig,
    adam: &mut Adam<F>,
    sinks: &mut OutputSinks<'_>,
) -> Result<RunStats> {
    let mut stats = RunStats::default();
    let mut prev_day: Option<u32> = None;

    for batch in days {
        if let Some(prev) = prev_day {
            if batch.day < prev {
                return Err(Error::DayOrder { prev, seen: batch.day });
            }
        }
        prev_day = Some(batch.day);
        if batch.events.is_empty() {
            continue;
        }

        let seqs = batch.events.iter().map(|ev| vocab.tokenize(ev)).collect();
        let users = batch.events.iter().map(|ev| ev.user_key()).collect();
        let work = DayWork::new(seqs, users);

        // (a) score every event with the pre-day parameter snapshot
        let day_start_states = model.begin_day();
        let losses = model.score_day(&work, cfg.score_batch)?;

        let mut events: Vec<ScoredEvent> = batch
            .events
            .iter()
            .enumerate()
            .map(|(i, ev)| ScoredEvent {
                day: batch.day,
                user: work.users[i].clone(),
                ordinal: i as u32,
                raw_score: losses[i],
                diff_score: 0.0,
                is_redteam: ev.is_redteam,
                per_token: None,
            })
            .collect();
        // (b) end-of-day barrier: diff needs the user's whole day
        diff_normalize(&mut events);

        if let Some(w) = sinks.events.as_deref_mut() {
            for ev in &events {
                write_event_row(w, ev)?;
            }
        }
        let aggregates = aggregate_user_day(&events, cfg.normalization);
        if let Some(w) = sinks.user_days.as_deref_mut() {
            for s in &aggregates {
                write_user_day_row(w, s)?;
            }
        }

        let mean = events.iter().map(|e| e.raw_score).sum::<f64>() / events.len() as f64;
        stats.mean_score_by_day.push((batch.day, mean));
        stats.events_scored += events.len() as u64;
        stats.days += 1;

        // (d) update weights on the day's lines
        for epoch in 0..cfg.epochs {
            let day_seed = cfg
                .seed
                .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(batch.day as u64 + 1))
                .wrapping_add(epoch as u64);
            let t = model.train_day(&work, cfg.batch_size, adam, day_seed, &day_start_states)?;
            stats.train.batches += t.batches;
            stats.train.lines += t.lines;
            stats.train.skipped_updates += t.skipped_updates;
            stats.train.mean_loss = t.mean_loss;
        }

        if let Some(dir) = &cfg.checkpoint_dir {
            let snap = model.to_snapshot(cfg.seed, Some(adam));
            crate::nn::checkpoint::write_snapshot(
                &dir.join(format!("model_day{:04}.ckpt", batch.day)),
                &snap,
            )?;
        }
    }
    Ok(stats)
}
