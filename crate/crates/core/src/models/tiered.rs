//! Tiered event models: an upper per-user LSTM provides a context
//! vector to the lower event model, modeling the dynamics of a user's
//! behavior across log lines.
//!
//! For user u's line j, the lower tier consumes `[embedding ⊕ ĥ^(u,j-1)]`
//! at every time step. The upper tier's input for line j is the
//! concatenation of the lower tier's final hidden state(s) and the mean
//! of its hidden states; its output ĥ^(u,j) is the next line's context.
//! No loss is computed on upper-tier outputs; both tiers train jointly
//! on the lower tier's cross-entropy, unrolled over a fixed window of
//! the user's lines (gradients stop at window boundaries).

use std::collections::BTreeMap;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::checkpoint::{Snapshot, TensorEntry};
use crate::nn::lstm::{LstmGrads, LstmParams, StepCache};
use crate::nn::{Adam, Real, StepOutcome};
use crate::tokenize::TokenSequence;

use super::event::{BatchForward, EventModel, EventModelGrads, ModelDims};
use super::{DayWork, TrainStats};

/// Upper-tier recurrent state for one user. `ctx` is the last emitted
/// context vector ĥ (the upper hidden state after the user's last line).
#[derive(Debug, Clone)]
pub struct UserState<F: Real> {
    pub h: Array1<F>,
    pub c: Array1<F>,
    pub ctx: Array1<F>,
}

impl<F: Real> UserState<F> {
    pub fn zeros(ctx_dim: usize) -> Self {
        UserState {
            h: Array1::zeros(ctx_dim),
            c: Array1::zeros(ctx_dim),
            ctx: Array1::zeros(ctx_dim),
        }
    }
}

pub struct TieredModel<F: Real> {
    pub lower: EventModel<F>,
    /// Upper LSTM over line summaries; hidden dim = context dim.
    pub upper: LstmParams<F>,
    pub unroll: usize,
    /// Per-user-per-day training cap; excess lines are scored but never
    /// contribute gradients. 0 disables training entirely.
    pub max_lines_per_user_day: usize,
    pub persist_across_days: bool,
    pub states: BTreeMap<String, UserState<F>>,
}

impl<F: Real> TieredModel<F> {
    pub fn init<R: Rng>(
        dims: ModelDims,
        bidirectional: bool,
        unroll: usize,
        max_lines_per_user_day: usize,
        persist_across_days: bool,
        rng: &mut R,
    ) -> Self {
        assert!(dims.ctx > 0, "tiered models need a context dimension");
        assert!(unroll >= 1);
        let lower = EventModel::init(dims, bidirectional, rng);
        let summary_dim = if bidirectional { 4 * dims.hidden } else { 2 * dims.hidden };
        let upper = LstmParams::init(summary_dim, dims.ctx, rng);
        TieredModel {
            lower,
            upper,
            unroll,
            max_lines_per_user_day,
            persist_across_days,
            states: BTreeMap::new(),
        }
    }

    pub fn ctx_dim(&self) -> usize {
        self.upper.hidden_dim()
    }

    pub fn summary_dim(&self) -> usize {
        self.upper.input_dim()
    }

    /// Day-boundary hook: applies the daily reset policy and returns the
    /// day-start states for the training pass.
    pub fn begin_day(&mut self) -> BTreeMap<String, UserState<F>> {
        if !self.persist_across_days {
            self.states.clear();
        }
        self.states.clone()
    }

    /// Run one window for a single user against the canonical state
    /// table, returning per-line losses. Unknown users start from a
    /// fresh zero state.
    pub fn tiered_step(&mut self, user: &str, lines: &[&TokenSequence]) -> Result<Vec<F>> {
        if lines.is_empty() {
            return Err(Error::EmptyInput("tiered window with no lines".into()));
        }
        let seqs: Vec<TokenSequence> = lines.iter().map(|s| (*s).clone()).collect();
        let users = vec![user.to_string(); seqs.len()];
        let work = DayWork::new(seqs, users);
        let idxs: Vec<usize> = (0..lines.len()).collect();
        let windows = vec![(user.to_string(), idxs)];
        let mut states = std::mem::take(&mut self.states);
        let result = forward_window_batch(
            &self.lower,
            &self.upper,
            &work,
            &windows,
            lines.len(),
            &mut states,
            false,
        );
        self.states = states;
        let (scored, _) = result?;
        Ok(scored.into_iter().map(|(_, l)| l).collect())
    }

    /// Score every line of the day in stream order with frozen
    /// parameters, evolving the canonical user states.
    pub fn score_day(&mut self, work: &DayWork, score_batch: usize) -> Result<Vec<f64>> {
        let mut losses = vec![0.0f64; work.len()];
        let order: Vec<String> = work.by_user.keys().cloned().collect();
        let mut states = std::mem::take(&mut self.states);
        let res = self.run_rounds(work, &order, None, score_batch, &mut states, &mut losses);
        self.states = states;
        res?;
        Ok(losses)
    }

    fn run_rounds(
        &self,
        work: &DayWork,
        user_order: &[String],
        cap: Option<usize>,
        batch_size: usize,
        states: &mut BTreeMap<String, UserState<F>>,
        losses: &mut [f64],
    ) -> Result<()> {
        let unroll = self.unroll;
        let mut round = 0usize;
        loop {
            let mut groups: BTreeMap<usize, Vec<(String, Vec<usize>)>> = BTreeMap::new();
            for user in user_order {
                let idxs = &work.by_user[user];
                let n = cap.map_or(idxs.len(), |c| c.min(idxs.len()));
                let start = round * unroll;
                if start < n {
                    let end = (start + unroll).min(n);
                    groups
                        .entry(end - start)
                        .or_default()
                        .push((user.clone(), idxs[start..end].to_vec()));
                }
            }
            if groups.is_empty() {
                break;
            }
            for (wlen, wins) in groups {
                for chunk in wins.chunks(batch_size) {
                    let (scored, _) = forward_window_batch(
                        &self.lower,
                        &self.upper,
                        work,
                        chunk,
                        wlen,
                        states,
                        false,
                    )?;
                    for (idx, loss) in scored {
                        losses[idx] = loss.to_f64();
                    }
                }
            }
            round += 1;
        }
        Ok(())
    }

    /// One training pass: windows of `unroll` lines per user, joint
    /// optimizer step per window batch on the batch-mean line loss.
    pub fn train_day(
        &mut self,
        work: &DayWork,
        batch_size: usize,
        adam: &mut Adam<F>,
        day_seed: u64,
        day_start_states: &BTreeMap<String, UserState<F>>,
    ) -> Result<TrainStats> {
        let mut stats = TrainStats::default();
        if self.max_lines_per_user_day == 0 {
            return Ok(stats);
        }
        let mut states = day_start_states.clone();
        let mut order: Vec<String> = work.by_user.keys().cloned().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(day_seed);
        order.shuffle(&mut rng);

        let cap = self.max_lines_per_user_day;
        let unroll = self.unroll;
        let mut loss_sum = 0.0f64;
        let mut round = 0usize;
        loop {
            let mut groups: BTreeMap<usize, Vec<(String, Vec<usize>)>> = BTreeMap::new();
            for user in &order {
                let idxs = &work.by_user[user];
                let n = cap.min(idxs.len());
                let start = round * unroll;
                if start < n {
                    let end = (start + unroll).min(n);
                    groups
                        .entry(end - start)
                        .or_default()
                        .push((user.clone(), idxs[start..end].to_vec()));
                }
            }
            if groups.is_empty() {
                break;
            }
            for (wlen, wins) in groups {
                for chunk in wins.chunks(batch_size) {
                    let (scored, caches) = forward_window_batch(
                        &self.lower,
                        &self.upper,
                        work,
                        chunk,
                        wlen,
                        &mut states,
                        true,
                    )?;
                    let n_lines = scored.len();
                    let w = F::from_f64(1.0 / n_lines as f64);
                    let mut caches = caches.unwrap();
                    let (lg, ug) =
                        backward_window_batch(&self.lower, &self.upper, &mut caches, w);
                    let grad_slices = tiered_grad_slices(&lg, &ug);
                    let outcome = adam.step(&mut self.param_slices_mut(), &grad_slices);
                    stats.batches += 1;
                    stats.lines += n_lines as u64;
                    loss_sum += scored.iter().map(|(_, l)| l.to_f64()).sum::<f64>();
                    if outcome == StepOutcome::SkippedNonFinite {
                        stats.skipped_updates += 1;
                    }
                }
            }
            round += 1;
        }
        if stats.lines > 0 {
            stats.mean_loss = loss_sum / stats.lines as f64;
        }
        Ok(stats)
    }

    /// Training objective (mean line loss) of one equal-length window
    /// batch from explicit initial states; used by gradient checks.
    pub fn window_objective(
        &self,
        windows: &[(String, Vec<TokenSequence>)],
        init_states: &BTreeMap<String, UserState<F>>,
    ) -> Result<F> {
        let (work, wins, wlen) = windows_to_work(windows)?;
        let mut states = init_states.clone();
        let (scored, _) =
            forward_window_batch(&self.lower, &self.upper, &work, &wins, wlen, &mut states, false)?;
        let n = scored.len();
        Ok(scored
            .iter()
            .fold(F::zero(), |a, (_, l)| a + *l)
            / F::from_f64(n as f64))
    }

    /// Objective plus exact gradients for both tiers.
    pub fn window_objective_grads(
        &self,
        windows: &[(String, Vec<TokenSequence>)],
        init_states: &BTreeMap<String, UserState<F>>,
    ) -> Result<(F, EventModelGrads<F>, LstmGrads<F>)> {
        let (work, wins, wlen) = windows_to_work(windows)?;
        let mut states = init_states.clone();
        let (scored, caches) =
            forward_window_batch(&self.lower, &self.upper, &work, &wins, wlen, &mut states, true)?;
        let n = scored.len();
        let w = F::from_f64(1.0 / n as f64);
        let mut caches = caches.unwrap();
        let (lg, ug) = backward_window_batch(&self.lower, &self.upper, &mut caches, w);
        let total = scored.iter().fold(F::zero(), |a, (_, l)| a + *l) / F::from_f64(n as f64);
        Ok((total, lg, ug))
    }

    /// Lower-tier slices followed by upper `w_x`, `w_h`, `b`.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut out = self.lower.param_slices_mut();
        out.push(self.upper.w_x.as_slice_mut().unwrap());
        out.push(self.upper.w_h.as_slice_mut().unwrap());
        out.push(self.upper.b.as_slice_mut().unwrap());
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut names = self.lower.param_names();
        names.push("upper.w_x".into());
        names.push("upper.w_h".into());
        names.push("upper.b".into());
        names
    }

    pub(crate) fn append_tensors(&self, snap: &mut Snapshot) {
        self.lower.append_tensors(snap);
        snap.meta.push(("tiered.unroll".into(), self.unroll.to_string()));
        snap.meta.push((
            "tiered.max_lines_per_user_day".into(),
            self.max_lines_per_user_day.to_string(),
        ));
        snap.meta.push((
            "tiered.persist_across_days".into(),
            self.persist_across_days.to_string(),
        ));
        let push2 = |snap: &mut Snapshot, name: &str, a: &Array2<F>| {
            snap.tensors.push(TensorEntry::new(
                name,
                vec![a.nrows(), a.ncols()],
                a.iter().map(|v| v.to_f64()).collect(),
            ));
        };
        push2(snap, "upper.w_x", &self.upper.w_x);
        push2(snap, "upper.w_h", &self.upper.w_h);
        snap.tensors.push(TensorEntry::new(
            "upper.b",
            vec![self.upper.b.len()],
            self.upper.b.iter().map(|v| v.to_f64()).collect(),
        ));
        // per-user upper state table
        for (user, st) in &self.states {
            let mut data: Vec<f64> = st.h.iter().map(|v| v.to_f64()).collect();
            data.extend(st.c.iter().map(|v| v.to_f64()));
            data.extend(st.ctx.iter().map(|v| v.to_f64()));
            snap.tensors
                .push(TensorEntry::new(format!("state.{user}"), vec![3, st.h.len()], data));
        }
    }

    pub(crate) fn from_snapshot(snap: &Snapshot, bidirectional: bool) -> Result<Self> {
        let lower = EventModel::from_snapshot(snap, bidirectional)?;
        let t2 = |name: &str| -> Result<Array2<F>> {
            let e = snap.tensor(name)?;
            Array2::from_shape_vec(
                (e.dims[0], e.dims[1]),
                e.data.iter().map(|&v| F::from_f64(v)).collect(),
            )
            .map_err(|_| Error::Checkpoint(format!("bad shape for {name}")))
        };
        let be = snap.tensor("upper.b")?;
        let upper = LstmParams::from_tensors(
            t2("upper.w_x")?,
            t2("upper.w_h")?,
            Array1::from_vec(be.data.iter().map(|&v| F::from_f64(v)).collect()),
        )?;
        let get_usize = |k: &str| -> Result<usize> {
            snap.require_meta(k)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad meta {k}")))
        };
        let mut states = BTreeMap::new();
        for t in &snap.tensors {
            if let Some(user) = t.name.strip_prefix("state.") {
                let d = t.dims[1];
                states.insert(
                    user.to_string(),
                    UserState {
                        h: Array1::from_vec(t.data[0..d].iter().map(|&v| F::from_f64(v)).collect()),
                        c: Array1::from_vec(t.data[d..2 * d].iter().map(|&v| F::from_f64(v)).collect()),
                        ctx: Array1::from_vec(t.data[2 * d..].iter().map(|&v| F::from_f64(v)).collect()),
                    },
                );
            }
        }
        Ok(TieredModel {
            lower,
            upper,
            unroll: get_usize("tiered.unroll")?,
            max_lines_per_user_day: get_usize("tiered.max_lines_per_user_day")?,
            persist_across_days: snap.require_meta("tiered.persist_across_days")? == "true",
            states,
        })
    }
}

fn windows_to_work(
    windows: &[(String, Vec<TokenSequence>)],
) -> Result<(DayWork, Vec<(String, Vec<usize>)>, usize)> {
    if windows.is_empty() {
        return Err(Error::EmptyInput("no windows".into()));
    }
    let wlen = windows[0].1.len();
    if windows.iter().any(|(_, l)| l.len() != wlen) || wlen == 0 {
        return Err(Error::Model("windows must share one nonzero length".into()));
    }
    let mut seqs = Vec::new();
    let mut users = Vec::new();
    let mut wins = Vec::new();
    for (user, lines) in windows {
        let idxs: Vec<usize> = (seqs.len()..seqs.len() + lines.len()).collect();
        for l in lines {
            seqs.push(l.clone());
            users.push(user.clone());
        }
        wins.push((user.clone(), idxs));
    }
    Ok((DayWork::new(seqs, users), wins, wlen))
}

/// Caches from one window batch forward pass, per line position j.
pub(crate) struct WindowCaches<F: Real> {
    items: Vec<(BatchForward<F>, StepCache<F>)>,
}

/// Run one batch of equal-length windows (one window per user) through
/// both tiers, evolving `states`. Returns `(line index, loss)` pairs and
/// caches when requested.
pub(crate) fn forward_window_batch<F: Real>(
    lower: &EventModel<F>,
    upper: &LstmParams<F>,
    work: &DayWork,
    windows: &[(String, Vec<usize>)],
    wlen: usize,
    states: &mut BTreeMap<String, UserState<F>>,
    want_caches: bool,
) -> Result<(Vec<(usize, F)>, Option<WindowCaches<F>>)> {
    let bsz = windows.len();
    let ctx_dim = upper.hidden_dim();
    let mut h_u = Array2::zeros((bsz, ctx_dim));
    let mut c_u = Array2::zeros((bsz, ctx_dim));
    let mut ctx_rows = Array2::zeros((bsz, ctx_dim));
    for (b, (user, _)) in windows.iter().enumerate() {
        if let Some(st) = states.get(user) {
            h_u.row_mut(b).assign(&st.h);
            c_u.row_mut(b).assign(&st.c);
            ctx_rows.row_mut(b).assign(&st.ctx);
        }
    }

    let mut scored = Vec::with_capacity(bsz * wlen);
    let mut items = Vec::with_capacity(wlen);
    for j in 0..wlen {
        let seq_refs: Vec<&TokenSequence> = windows
            .iter()
            .map(|(_, idxs)| &work.seqs[idxs[j]])
            .collect();
        let fb = lower.forward_batch(&seq_refs, Some(&ctx_rows), true, false)?;
        for (b, (_, idxs)) in windows.iter().enumerate() {
            scored.push((idxs[j], fb.line_loss[b]));
        }
        let summary = fb.summary.as_ref().unwrap();
        let (h_new, c_new, sc) = upper.step_batch(&summary.view(), &h_u, &c_u);
        h_u = h_new;
        c_u = c_new;
        ctx_rows = h_u.clone();
        if want_caches {
            items.push((fb, sc));
        }
    }

    for (b, (user, _)) in windows.iter().enumerate() {
        states.insert(
            user.clone(),
            UserState {
                h: h_u.row(b).to_owned(),
                c: c_u.row(b).to_owned(),
                ctx: h_u.row(b).to_owned(),
            },
        );
    }
    Ok((scored, want_caches.then_some(WindowCaches { items })))
}

/// Joint backward through upper and lower tiers of a window batch.
/// `line_weight` applies to every line (batch-mean objective).
pub(crate) fn backward_window_batch<F: Real>(
    lower: &EventModel<F>,
    upper: &LstmParams<F>,
    caches: &mut WindowCaches<F>,
    line_weight: F,
) -> (EventModelGrads<F>, LstmGrads<F>) {
    let wlen = caches.items.len();
    let bsz = caches.items[0].1.h_prev.nrows();
    let ctx_dim = upper.hidden_dim();
    let mut lower_grads = EventModelGrads::zeros(lower);
    let mut upper_grads = LstmGrads::zeros(upper);

    // ĥ_j feeds both the next line's context input and the upper
    // recurrence; the last window position's output leaves the window
    // (truncated), so its gradient starts at zero.
    let mut dh_up: Array2<F> = Array2::zeros((bsz, ctx_dim));
    let mut dc_up: Array2<F> = Array2::zeros((bsz, ctx_dim));

    for j in (0..wlen).rev() {
        let (fb, sc) = &mut caches.items[j];
        let (dsummary, dh_prev_up, dc_prev_up) =
            upper.step_backward(sc, &dh_up, &dc_up, &mut upper_grads);
        let weights = vec![line_weight; bsz];
        let (lg, dctx) = lower.backward_batch(fb, &weights, Some(&dsummary));
        lower_grads.add_assign(&lg);
        dh_up = dh_prev_up + &dctx.expect("tiered lower tier has a context input");
        dc_up = dc_prev_up;
    }
    (lower_grads, upper_grads)
}

/// Gradient slices matching [`TieredModel::param_slices_mut`] order.
pub fn tiered_grad_slices<'a, F: Real>(
    lower: &'a EventModelGrads<F>,
    upper: &'a LstmGrads<F>,
) -> Vec<&'a [F]> {
    let mut out = lower.slices();
    out.push(upper.w_x.as_slice().unwrap());
    out.push(upper.w_h.as_slice().unwrap());
    out.push(upper.b.as_slice().unwrap());
    out
}
