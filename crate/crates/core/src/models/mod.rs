//! The four language-model variants over tokenized log lines.
//!
//! `EM` is a unidirectional LSTM language model over one line's tokens;
//! `BEM` adds a second LSTM run backwards in time so every token is
//! predicted from both flanking contexts. The tiered variants (`T-EM`,
//! `T-BEM`) wrap either event model with an upper per-user LSTM whose
//! hidden state is fed back as a context input, modeling sequences of a
//! user's actions across lines.
//!
//! All variants expose the same surface: per-line loss (the anomaly
//! score), optional per-token losses, and day-based training.

pub mod event;
pub mod tiered;

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::checkpoint::{Snapshot, TensorEntry};
use crate::nn::{Adam, Real, StepOutcome};
use crate::tokenize::TokenSequence;

pub use event::{BatchForward, EventModel, EventModelGrads, ModelDims};
pub use tiered::{TieredModel, UserState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Em,
    Bem,
    TEm,
    TBem,
}

impl Variant {
    pub fn bidirectional(self) -> bool {
        matches!(self, Variant::Bem | Variant::TBem)
    }

    pub fn tiered(self) -> bool {
        matches!(self, Variant::TEm | Variant::TBem)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Em => "em",
            Variant::Bem => "bem",
            Variant::TEm => "t-em",
            Variant::TBem => "t-bem",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "em" => Ok(Variant::Em),
            "bem" => Ok(Variant::Bem),
            "t-em" => Ok(Variant::TEm),
            "t-bem" => Ok(Variant::TBem),
            other => Err(Error::Config(format!("unknown model variant {other:?}"))),
        }
    }
}

/// Everything needed to construct a model.
#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub variant: Variant,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    /// Upper-tier hidden size; the context vector dimension.
    pub ctx_dim: usize,
    /// Tiered unroll length in user log lines.
    pub unroll: usize,
    /// Training cap per user per day for tiered models (0 = score only).
    pub max_lines_per_user_day: usize,
    /// Carry upper-tier user states across day boundaries.
    pub persist_across_days: bool,
    pub seed: u64,
}

/// One day's tokenized lines in stream order plus per-user grouping.
#[derive(Debug, Clone)]
pub struct DayWork {
    pub seqs: Vec<TokenSequence>,
    pub users: Vec<String>,
    pub by_user: BTreeMap<String, Vec<usize>>,
}

impl DayWork {
    pub fn new(seqs: Vec<TokenSequence>, users: Vec<String>) -> Self {
        assert_eq!(seqs.len(), users.len());
        let mut by_user: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, u) in users.iter().enumerate() {
            by_user.entry(u.clone()).or_default().push(i);
        }
        DayWork { seqs, users, by_user }
    }

    pub fn len(&self) -> usize {
        self.seqs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seqs.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TrainStats {
    pub batches: u64,
    pub lines: u64,
    pub mean_loss: f64,
    pub skipped_updates: u64,
}

/// Variant-agnostic model handle used by the pipeline.
pub enum AnyModel<F: Real> {
    Plain(EventModel<F>),
    Tiered(TieredModel<F>),
}

impl<F: Real> AnyModel<F> {
    pub fn build(cfg: &ModelConfig) -> Self {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
        if cfg.variant.tiered() {
            AnyModel::Tiered(TieredModel::init(
                ModelDims {
                    vocab: cfg.vocab_size,
                    embed: cfg.embed_dim,
                    hidden: cfg.hidden_dim,
                    ctx: cfg.ctx_dim,
                },
                cfg.variant.bidirectional(),
                cfg.unroll,
                cfg.max_lines_per_user_day,
                cfg.persist_across_days,
                &mut rng,
            ))
        } else {
            AnyModel::Plain(EventModel::init(
                ModelDims {
                    vocab: cfg.vocab_size,
                    embed: cfg.embed_dim,
                    hidden: cfg.hidden_dim,
                    ctx: 0,
                },
                cfg.variant.bidirectional(),
                &mut rng,
            ))
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            AnyModel::Plain(m) if m.bidirectional => Variant::Bem,
            AnyModel::Plain(_) => Variant::Em,
            AnyModel::Tiered(t) if t.lower.bidirectional => Variant::TBem,
            AnyModel::Tiered(_) => Variant::TEm,
        }
    }

    /// Called at each day boundary before scoring. For tiered models this
    /// applies the daily state reset (unless persistence is configured)
    /// and returns the day-start user states for the training pass.
    pub fn begin_day(&mut self) -> BTreeMap<String, UserState<F>> {
        match self {
            AnyModel::Plain(_) => BTreeMap::new(),
            AnyModel::Tiered(t) => t.begin_day(),
        }
    }

    /// Score every line of the day with frozen parameters, in stream
    /// order. Tiered models evolve their per-user context states.
    pub fn score_day(&mut self, work: &DayWork, score_batch: usize) -> Result<Vec<f64>> {
        match self {
            AnyModel::Plain(m) => {
                let mut out = vec![0.0f64; work.len()];
                let mut idx = 0usize;
                while idx < work.len() {
                    let end = (idx + score_batch).min(work.len());
                    let refs: Vec<&TokenSequence> = work.seqs[idx..end].iter().collect();
                    let fb = m.forward_batch(&refs, None, false, false)?;
                    for (k, loss) in fb.line_loss.iter().enumerate() {
                        out[idx + k] = loss.to_f64();
                    }
                    idx = end;
                }
                Ok(out)
            }
            AnyModel::Tiered(t) => t.score_day(work, score_batch),
        }
    }

    /// One training pass over the day's lines (scores must already have
    /// been emitted). `day_seed` drives the minibatch shuffle.
    pub fn train_day(
        &mut self,
        work: &DayWork,
        batch_size: usize,
        adam: &mut Adam<F>,
        day_seed: u64,
        day_start_states: &BTreeMap<String, UserState<F>>,
    ) -> Result<TrainStats> {
        match self {
            AnyModel::Plain(m) => {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let mut order: Vec<usize> = (0..work.len()).collect();
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(day_seed);
                order.shuffle(&mut rng);
                let mut stats = TrainStats::default();
                let mut loss_sum = 0.0f64;
                for chunk in order.chunks(batch_size) {
                    let refs: Vec<&TokenSequence> = chunk.iter().map(|&i| &work.seqs[i]).collect();
                    let (loss, outcome) = m.train_batch(&refs, adam)?;
                    stats.batches += 1;
                    stats.lines += refs.len() as u64;
                    loss_sum += loss.to_f64() * refs.len() as f64;
                    if outcome == StepOutcome::SkippedNonFinite {
                        stats.skipped_updates += 1;
                    }
                }
                if stats.lines > 0 {
                    stats.mean_loss = loss_sum / stats.lines as f64;
                }
                Ok(stats)
            }
            AnyModel::Tiered(t) => t.train_day(work, batch_size, adam, day_seed, day_start_states),
        }
    }

    /// Canonical parameter slices in a fixed order shared with grads,
    /// the optimizer state, and checkpoints.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [F]> {
        match self {
            AnyModel::Plain(m) => m.param_slices_mut(),
            AnyModel::Tiered(t) => t.param_slices_mut(),
        }
    }

    pub fn to_snapshot(&self, seed: u64, adam: Option<&Adam<F>>) -> Snapshot {
        let mut snap = Snapshot::default();
        snap.meta.push(("variant".into(), self.variant().as_str().into()));
        snap.meta.push(("seed".into(), seed.to_string()));
        snap.meta.push(("precision".into(), F::PRECISION_BYTES.to_string()));
        match self {
            AnyModel::Plain(m) => m.append_tensors(&mut snap),
            AnyModel::Tiered(t) => t.append_tensors(&mut snap),
        }
        if let Some(adam) = adam {
            let (t, m, v) = adam.state();
            snap.meta.push(("adam.t".into(), t.to_string()));
            snap.meta
                .push(("adam.lr".into(), adam.cfg.learning_rate.to_string()));
            for (i, mv) in m.iter().enumerate() {
                snap.tensors.push(TensorEntry::new(
                    format!("adam.m.{i}"),
                    vec![mv.len()],
                    mv.iter().map(|x| x.to_f64()).collect(),
                ));
            }
            for (i, vv) in v.iter().enumerate() {
                snap.tensors.push(TensorEntry::new(
                    format!("adam.v.{i}"),
                    vec![vv.len()],
                    vv.iter().map(|x| x.to_f64()).collect(),
                ));
            }
        }
        snap
    }

    pub fn from_snapshot(snap: &Snapshot) -> Result<(Self, Option<Adam<F>>)> {
        let variant: Variant = snap.require_meta("variant")?.parse()?;
        let model = if variant.tiered() {
            AnyModel::Tiered(TieredModel::from_snapshot(snap, variant.bidirectional())?)
        } else {
            AnyModel::Plain(EventModel::from_snapshot(snap, variant.bidirectional())?)
        };
        let adam = match snap.meta_value("adam.t") {
            Some(t_str) => {
                let t: u64 = t_str
                    .parse()
                    .map_err(|_| Error::Checkpoint("bad adam.t".into()))?;
                let mut m = Vec::new();
                let mut v = Vec::new();
                let mut i = 0usize;
                while let Ok(entry) = snap.tensor(&format!("adam.m.{i}")) {
                    m.push(entry.data.iter().map(|&x| F::from_f64(x)).collect());
                    let ve = snap.tensor(&format!("adam.v.{i}"))?;
                    v.push(ve.data.iter().map(|&x| F::from_f64(x)).collect());
                    i += 1;
                }
                let lr: f64 = snap
                    .meta_value("adam.lr")
                    .and_then(|s| s.parse().ok())
                    .unwrap_or(1e-3);
                let mut adam = Adam::new(crate::nn::AdamConfig {
                    learning_rate: lr,
                    ..Default::default()
                });
                adam.restore(t, m, v);
                Some(adam)
            }
            None => None,
        };
        Ok((model, adam))
    }
}
