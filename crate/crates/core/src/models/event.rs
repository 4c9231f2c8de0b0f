//! Event models: unidirectional (EM) and bidirectional (BEM) LSTM
//! language models over a single log line.
//!
//! The prediction for token t conditions on the forward state after
//! token t-1 (zero state for t=1), and for BEM additionally on the
//! backward state after token t+1 (zero state for t=K):
//!
//! ```text
//! p_t = softmax(h_{t-1}·W_p [+ hb_{t+1}·W_pb] + b_p)
//! ```
//!
//! so the token itself never feeds its own prediction. The per-line
//! anomaly score is the pad-masked mean cross-entropy over the K tokens.

use ndarray::{s, Array1, Array2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::checkpoint::{Snapshot, TensorEntry};
use crate::nn::loss::{dlogits_inplace, softmax_ce};
use crate::nn::lstm::{LstmGrads, LstmParams, SeqCache};
use crate::nn::par::{matmul, matmul_into};
use crate::nn::{Adam, Real, StepOutcome};
use crate::tokenize::TokenSequence;

/// Model dimensions. `ctx` is the width of the tiered context input
/// appended to every token embedding (0 for plain models).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
    pub ctx: usize,
}

/// EM/BEM parameters: embedding, LSTM direction(s), softmax projection.
#[derive(Debug, Clone)]
pub struct EventModel<F: Real> {
    pub dims: ModelDims,
    pub bidirectional: bool,
    /// C×E token embedding (the one-hot × matrix product realized as a
    /// row lookup).
    pub emb: Array2<F>,
    pub fwd: LstmParams<F>,
    pub bwd: Option<LstmParams<F>>,
    /// H×C forward projection.
    pub w_p: Array2<F>,
    /// H×C backward projection (BEM only).
    pub w_pb: Option<Array2<F>>,
    pub b_p: Array1<F>,
}

/// Gradients mirroring [`EventModel`].
#[derive(Debug, Clone)]
pub struct EventModelGrads<F: Real> {
    pub emb: Array2<F>,
    pub fwd: LstmGrads<F>,
    pub bwd: Option<LstmGrads<F>>,
    pub w_p: Array2<F>,
    pub w_pb: Option<Array2<F>>,
    pub b_p: Array1<F>,
}

impl<F: Real> EventModelGrads<F> {
    pub fn zeros(model: &EventModel<F>) -> Self {
        EventModelGrads {
            emb: Array2::zeros(model.emb.raw_dim()),
            fwd: LstmGrads::zeros(&model.fwd),
            bwd: model.bwd.as_ref().map(LstmGrads::zeros),
            w_p: Array2::zeros(model.w_p.raw_dim()),
            w_pb: model.w_pb.as_ref().map(|w| Array2::zeros(w.raw_dim())),
            b_p: Array1::zeros(model.b_p.raw_dim()),
        }
    }

    pub fn add_assign(&mut self, other: &EventModelGrads<F>) {
        self.emb += &other.emb;
        self.fwd.add_assign(&other.fwd);
        if let (Some(a), Some(b)) = (self.bwd.as_mut(), other.bwd.as_ref()) {
            a.add_assign(b);
        }
        self.w_p += &other.w_p;
        if let (Some(a), Some(b)) = (self.w_pb.as_mut(), other.w_pb.as_ref()) {
            *a += b;
        }
        self.b_p += &other.b_p;
    }

    /// Flat slices in the model's canonical parameter order.
    pub fn slices(&self) -> Vec<&[F]> {
        let mut out: Vec<&[F]> = vec![
            self.emb.as_slice().unwrap(),
            self.fwd.w_x.as_slice().unwrap(),
            self.fwd.w_h.as_slice().unwrap(),
            self.fwd.b.as_slice().unwrap(),
        ];
        if let Some(b) = &self.bwd {
            out.push(b.w_x.as_slice().unwrap());
            out.push(b.w_h.as_slice().unwrap());
            out.push(b.b.as_slice().unwrap());
        }
        out.push(self.w_p.as_slice().unwrap());
        if let Some(w) = &self.w_pb {
            out.push(w.as_slice().unwrap());
        }
        out.push(self.b_p.as_slice().unwrap());
        out
    }
}

/// Forward-pass result over a padded batch, with enough cached state to
/// run an exact backward pass.
pub struct BatchForward<F: Real> {
    pub line_loss: Vec<F>,
    /// Per-line per-token losses when requested.
    pub per_token: Option<Vec<Vec<F>>>,
    pub lens: Vec<usize>,
    pub kmax: usize,
    /// B×S line summaries for the tiered upper tier, when requested.
    pub summary: Option<Array2<F>>,
    token_ids: Vec<Vec<u32>>,
    fwd_cache: SeqCache<F>,
    bwd_cache: Option<SeqCache<F>>,
    /// (Kmax·B)×C softmax probabilities, time-major blocks.
    probs: Array2<F>,
    targets: Vec<u32>,
    active: Vec<bool>,
    /// (Kmax·B)×H stacked projection inputs per direction.
    hf_stack: Array2<F>,
    hb_stack: Option<Array2<F>>,
}

impl<F: Real> EventModel<F> {
    /// Xavier-uniform initialization of every tensor, deterministic in
    /// the rng; draw order is fixed.
    pub fn init<R: Rng>(dims: ModelDims, bidirectional: bool, rng: &mut R) -> Self {
        let re = F::from_f64((6.0 / (dims.vocab + dims.embed) as f64).sqrt());
        let mut emb = Array2::zeros((dims.vocab, dims.embed));
        for r in 0..dims.vocab {
            for c in 0..dims.embed {
                emb[[r, c]] = rng.random_range(-re..re);
            }
        }
        let input_dim = dims.embed + dims.ctx;
        let fwd = LstmParams::init(input_dim, dims.hidden, rng);
        let bwd = bidirectional.then(|| LstmParams::init(input_dim, dims.hidden, rng));
        let rp = F::from_f64((6.0 / (dims.hidden + dims.vocab) as f64).sqrt());
        let mut w_p = Array2::zeros((dims.hidden, dims.vocab));
        for r in 0..dims.hidden {
            for c in 0..dims.vocab {
                w_p[[r, c]] = rng.random_range(-rp..rp);
            }
        }
        let w_pb = bidirectional.then(|| {
            let mut w = Array2::zeros((dims.hidden, dims.vocab));
            for r in 0..dims.hidden {
                for c in 0..dims.vocab {
                    w[[r, c]] = rng.random_range(-rp..rp);
                }
            }
            w
        });
        EventModel {
            dims,
            bidirectional,
            emb,
            fwd,
            bwd,
            w_p,
            w_pb,
            b_p: Array1::zeros(dims.vocab),
        }
    }

    /// Forward over a padded batch.
    ///
    /// `ctx` supplies one context row per line (tiered lower tier); its
    /// width must match `dims.ctx`. `want_summary` also computes the
    /// `[final ⊕ mean]` hidden-state summaries the upper tier consumes.
    pub fn forward_batch(
        &self,
        seqs: &[&TokenSequence],
        ctx: Option<&Array2<F>>,
        want_summary: bool,
        want_per_token: bool,
    ) -> Result<BatchForward<F>> {
        let bsz = seqs.len();
        if bsz == 0 {
            return Err(Error::EmptyInput("empty batch".into()));
        }
        if seqs.iter().any(|s| s.is_empty()) {
            return Err(Error::EmptyInput("empty token sequence".into()));
        }
        let lens: Vec<usize> = seqs.iter().map(|s| s.len()).collect();
        let kmax = *lens.iter().max().unwrap();
        let e = self.dims.embed;
        let cdim = self.dims.ctx;
        match ctx {
            Some(c) => {
                debug_assert_eq!(c.nrows(), bsz);
                debug_assert_eq!(c.ncols(), cdim);
            }
            None => debug_assert_eq!(cdim, 0),
        }

        let mut inputs: Vec<Array2<F>> = Vec::with_capacity(kmax);
        let mut masks: Vec<Array1<F>> = Vec::with_capacity(kmax);
        for t in 1..=kmax {
            let mut x = Array2::zeros((bsz, e + cdim));
            let mut m = Array1::zeros(bsz);
            for b in 0..bsz {
                if t <= lens[b] {
                    let id = seqs[b].ids[t - 1] as usize;
                    x.slice_mut(s![b, 0..e]).assign(&self.emb.row(id));
                    if let Some(c) = ctx {
                        x.slice_mut(s![b, e..]).assign(&c.row(b));
                    }
                    m[b] = F::one();
                }
            }
            inputs.push(x);
            masks.push(m);
        }

        // The last forward step (and the earliest backward step) feed no
        // prediction; they only matter when the tiered summary is needed.
        let steps = if want_summary || kmax == 1 { kmax } else { kmax - 1 };
        let (fwd_cache, bwd_cache) = match &self.bwd {
            Some(bwd) => {
                let (a, b) = rayon::join(
                    || self.fwd.run_seq(&inputs, &masks, false, steps),
                    || bwd.run_seq(&inputs, &masks, true, steps),
                );
                (a, Some(b))
            }
            None => (self.fwd.run_seq(&inputs, &masks, false, steps), None),
        };

        // Stack projection inputs time-major: block t holds the states
        // each line's prediction at time t conditions on.
        let hd = self.dims.hidden;
        let c_vocab = self.dims.vocab;
        let mut hf_stack = Array2::zeros((kmax * bsz, hd));
        for t in 1..=kmax {
            hf_stack
                .slice_mut(s![(t - 1) * bsz..t * bsz, ..])
                .assign(fwd_cache.h_after_time(t - 1));
        }
        let hb_stack = bwd_cache.as_ref().map(|bc| {
            let mut hb = Array2::zeros((kmax * bsz, hd));
            for t in 1..=kmax {
                hb.slice_mut(s![(t - 1) * bsz..t * bsz, ..])
                    .assign(bc.h_after_time(t + 1));
            }
            hb
        });

        let mut logits = matmul(&hf_stack.view(), &self.w_p.view());
        if let (Some(hb), Some(w_pb)) = (&hb_stack, &self.w_pb) {
            matmul_into(&mut logits, &hb.view(), &w_pb.view(), true);
        }
        logits += &self.b_p;
        debug_assert_eq!(logits.ncols(), c_vocab);

        let mut targets = vec![0u32; kmax * bsz];
        let mut active = vec![false; kmax * bsz];
        for b in 0..bsz {
            for t in 1..=lens[b] {
                targets[(t - 1) * bsz + b] = seqs[b].ids[t - 1];
                active[(t - 1) * bsz + b] = true;
            }
        }
        let ce = softmax_ce(logits, &targets, &active);

        let mut line_loss = vec![F::zero(); bsz];
        for b in 0..bsz {
            let mut total = F::zero();
            for t in 1..=lens[b] {
                total = total + ce.nll[(t - 1) * bsz + b];
            }
            line_loss[b] = total / F::from_f64(lens[b] as f64);
        }
        let per_token = want_per_token.then(|| {
            (0..bsz)
                .map(|b| (1..=lens[b]).map(|t| ce.nll[(t - 1) * bsz + b]).collect())
                .collect()
        });

        let summary = want_summary.then(|| {
            let sdim = if self.bidirectional { 4 * hd } else { 2 * hd };
            let mut sm = Array2::zeros((bsz, sdim));
            // final forward state; carry-through masking makes the last
            // slot each row's true final state
            sm.slice_mut(s![.., 0..hd]).assign(fwd_cache.h_after_time(kmax));
            let mean_off = if self.bidirectional {
                sm.slice_mut(s![.., hd..2 * hd])
                    .assign(bwd_cache.as_ref().unwrap().h_after_time(1));
                2 * hd
            } else {
                hd
            };
            for t in 1..=kmax {
                let hf = fwd_cache.h_after_time(t);
                let mut dst = sm.slice_mut(s![.., mean_off..mean_off + hd]);
                Zip::from(dst.rows_mut())
                    .and(hf.rows())
                    .and(&masks[t - 1])
                    .for_each(|mut d, h, &m| {
                        if m != F::zero() {
                            d += &h;
                        }
                    });
                if let Some(bc) = &bwd_cache {
                    let hb = bc.h_after_time(t);
                    let mut dst = sm.slice_mut(s![.., mean_off + hd..]);
                    Zip::from(dst.rows_mut())
                        .and(hb.rows())
                        .and(&masks[t - 1])
                        .for_each(|mut d, h, &m| {
                            if m != F::zero() {
                                d += &h;
                            }
                        });
                }
            }
            for b in 0..bsz {
                let inv = F::from_f64(1.0 / lens[b] as f64);
                sm.slice_mut(s![b, mean_off..]).mapv_inplace(|v| v * inv);
            }
            sm
        });

        Ok(BatchForward {
            line_loss,
            per_token,
            lens,
            kmax,
            summary,
            token_ids: seqs.iter().map(|s| s.ids.clone()).collect(),
            fwd_cache,
            bwd_cache,
            probs: ce.probs,
            targets,
            active,
            hf_stack,
            hb_stack,
        })
    }

    /// Exact gradients of `Σ_b line_weight[b] · line_loss[b]` (plus the
    /// summary path when `dsummary` is given) w.r.t. every parameter.
    /// Returns gradients and, for tiered lower tiers, the gradient
    /// w.r.t. the per-line context rows.
    pub fn backward_batch(
        &self,
        fb: &mut BatchForward<F>,
        line_weight: &[F],
        dsummary: Option<&Array2<F>>,
    ) -> (EventModelGrads<F>, Option<Array2<F>>) {
        let bsz = fb.lens.len();
        let kmax = fb.kmax;
        let hd = self.dims.hidden;
        let e = self.dims.embed;
        let cdim = self.dims.ctx;

        // d logits in place: w ∘ (p − onehot)
        let mut row_weights = vec![F::zero(); kmax * bsz];
        for b in 0..bsz {
            let w = line_weight[b] / F::from_f64(fb.lens[b] as f64);
            for t in 1..=fb.lens[b] {
                row_weights[(t - 1) * bsz + b] = w;
            }
        }
        dlogits_inplace(&mut fb.probs, &fb.targets, &row_weights);
        let dlogits = &fb.probs;

        let mut grads = EventModelGrads::zeros(self);
        matmul_into(&mut grads.w_p, &fb.hf_stack.t(), &dlogits.view(), true);
        if let (Some(hb), Some(gw)) = (&fb.hb_stack, grads.w_pb.as_mut()) {
            matmul_into(gw, &hb.t(), &dlogits.view(), true);
        }
        grads.b_p += &dlogits.sum_axis(Axis(0));

        let dhf_stack = matmul(&dlogits.view(), &self.w_p.t());
        let dhb_stack = self
            .w_pb
            .as_ref()
            .map(|w_pb| matmul(&dlogits.view(), &w_pb.t()));

        // Externally injected state gradients per direction, indexed by
        // "state after consuming time t" (t = 1..=Kmax).
        let mut dh_ext_fwd: Vec<Array2<F>> = (0..kmax).map(|_| Array2::zeros((bsz, hd))).collect();
        // projection at time t+1 conditions on forward state after t
        for t in 1..kmax {
            dh_ext_fwd[t - 1].assign(&dhf_stack.slice(s![t * bsz..(t + 1) * bsz, ..]));
        }
        let mut dh_ext_bwd: Option<Vec<Array2<F>>> = dhb_stack.as_ref().map(|dhb| {
            let mut v: Vec<Array2<F>> = (0..kmax).map(|_| Array2::zeros((bsz, hd))).collect();
            // projection at time t-1 conditions on backward state after t
            for t in 2..=kmax {
                v[t - 1].assign(&dhb.slice(s![(t - 2) * bsz..(t - 1) * bsz, ..]));
            }
            v
        });

        if let Some(ds) = dsummary {
            let mean_off = if self.bidirectional { 2 * hd } else { hd };
            // final states
            {
                let add = ds.slice(s![.., 0..hd]);
                dh_ext_fwd[kmax - 1] += &add;
            }
            if let Some(v) = dh_ext_bwd.as_mut() {
                let add = ds.slice(s![.., hd..2 * hd]);
                v[0] += &add;
            }
            // mean of states: dmean/len at every real step
            for t in 1..=kmax {
                let mask = &fb.fwd_cache.masks[t - 1];
                {
                    let src = ds.slice(s![.., mean_off..mean_off + hd]);
                    let mut dst = dh_ext_fwd[t - 1].view_mut();
                    Zip::from(dst.rows_mut())
                        .and(src.rows())
                        .and(mask)
                        .and(&Array1::from_iter(fb.lens.iter().map(|&l| F::from_f64(1.0 / l as f64))))
                        .for_each(|mut d, srow, &m, &inv| {
                            if m != F::zero() {
                                Zip::from(&mut d).and(&srow).for_each(|dv, &sv| *dv = *dv + sv * inv);
                            }
                        });
                }
                if let Some(v) = dh_ext_bwd.as_mut() {
                    let src = ds.slice(s![.., mean_off + hd..]);
                    let mut dst = v[t - 1].view_mut();
                    Zip::from(dst.rows_mut())
                        .and(src.rows())
                        .and(mask)
                        .and(&Array1::from_iter(fb.lens.iter().map(|&l| F::from_f64(1.0 / l as f64))))
                        .for_each(|mut d, srow, &m, &inv| {
                            if m != F::zero() {
                                Zip::from(&mut d).and(&srow).for_each(|dv, &sv| *dv = *dv + sv * inv);
                            }
                        });
                }
            }
        }

        let want_dinputs = true;
        let ((gfwd, dins_fwd), bwd_out) = match (&self.bwd, &fb.bwd_cache, &dh_ext_bwd) {
            (Some(bwd), Some(bc), Some(ext)) => rayon::join(
                || self.fwd.backward_seq(&fb.fwd_cache, &dh_ext_fwd, want_dinputs),
                || Some(bwd.backward_seq(bc, ext, want_dinputs)),
            ),
            _ => (
                self.fwd.backward_seq(&fb.fwd_cache, &dh_ext_fwd, want_dinputs),
                None,
            ),
        };
        grads.fwd.add_assign(&gfwd);
        let mut dins = dins_fwd.unwrap();
        if let Some((gbwd, dins_bwd)) = bwd_out {
            grads.bwd.as_mut().unwrap().add_assign(&gbwd);
            for (a, b) in dins.iter_mut().zip(dins_bwd.unwrap()) {
                *a += &b;
            }
        }

        // scatter input gradients into the embedding (and context) rows
        let mut dctx = (cdim > 0).then(|| Array2::zeros((bsz, cdim)));
        for t in 1..=kmax {
            let dx = &dins[t - 1];
            for b in 0..bsz {
                if t <= fb.lens[b] {
                    let id = fb.token_ids[b][t - 1] as usize;
                    let mut row = grads.emb.row_mut(id);
                    Zip::from(&mut row)
                        .and(&dx.slice(s![b, 0..e]))
                        .for_each(|g, &d| *g = *g + d);
                    if let Some(dc) = dctx.as_mut() {
                        let mut crow = dc.row_mut(b);
                        Zip::from(&mut crow)
                            .and(&dx.slice(s![b, e..]))
                            .for_each(|g, &d| *g = *g + d);
                    }
                }
            }
        }

        (grads, dctx)
    }

    /// One optimizer step on the batch-mean loss. Returns the mean loss
    /// over the batch lines and the optimizer outcome.
    pub fn train_batch(
        &mut self,
        seqs: &[&TokenSequence],
        adam: &mut Adam<F>,
    ) -> Result<(F, StepOutcome)> {
        let mut fb = self.forward_batch(seqs, None, false, false)?;
        let w = F::from_f64(1.0 / seqs.len() as f64);
        let weights = vec![w; seqs.len()];
        let (grads, _) = self.backward_batch(&mut fb, &weights, None);
        let mean = fb
            .line_loss
            .iter()
            .fold(F::zero(), |a, &b| a + b)
            / F::from_f64(seqs.len() as f64);
        let outcome = adam.step(&mut self.param_slices_mut(), &grads.slices());
        Ok((mean, outcome))
    }

    /// Loss and gradients without touching the optimizer (gradient
    /// checks, tiered composition).
    pub fn batch_loss_and_grads(
        &self,
        seqs: &[&TokenSequence],
        line_weight: &[F],
    ) -> Result<(F, EventModelGrads<F>)> {
        let mut fb = self.forward_batch(seqs, None, false, false)?;
        let total = fb
            .line_loss
            .iter()
            .zip(line_weight)
            .fold(F::zero(), |a, (&l, &w)| a + l * w);
        let (grads, _) = self.backward_batch(&mut fb, line_weight, None);
        Ok((total, grads))
    }

    /// Score one line: `(line_loss, per_token_losses)`.
    pub fn score_line(&self, seq: &TokenSequence) -> Result<(F, Vec<F>)> {
        if seq.is_empty() {
            return Err(Error::EmptyInput("empty token sequence".into()));
        }
        let fb = self.forward_batch(&[seq], None, false, true)?;
        Ok((fb.line_loss[0], fb.per_token.unwrap().remove(0)))
    }

    /// Canonical parameter order: emb, fwd(w_x,w_h,b), [bwd...], w_p,
    /// [w_pb], b_p.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [F]> {
        let mut out: Vec<&mut [F]> = vec![
            self.emb.as_slice_mut().unwrap(),
            self.fwd.w_x.as_slice_mut().unwrap(),
            self.fwd.w_h.as_slice_mut().unwrap(),
            self.fwd.b.as_slice_mut().unwrap(),
        ];
        if let Some(b) = self.bwd.as_mut() {
            out.push(b.w_x.as_slice_mut().unwrap());
            out.push(b.w_h.as_slice_mut().unwrap());
            out.push(b.b.as_slice_mut().unwrap());
        }
        out.push(self.w_p.as_slice_mut().unwrap());
        if let Some(w) = self.w_pb.as_mut() {
            out.push(w.as_slice_mut().unwrap());
        }
        out.push(self.b_p.as_slice_mut().unwrap());
        out
    }

    /// Tensor names parallel to [`Self::param_slices_mut`].
    pub fn param_names(&self) -> Vec<String> {
        let mut names = vec![
            "emb".to_string(),
            "fwd.w_x".to_string(),
            "fwd.w_h".to_string(),
            "fwd.b".to_string(),
        ];
        if self.bidirectional {
            names.push("bwd.w_x".into());
            names.push("bwd.w_h".into());
            names.push("bwd.b".into());
        }
        names.push("w_p".into());
        if self.bidirectional {
            names.push("w_pb".into());
        }
        names.push("b_p".into());
        names
    }

    pub(crate) fn append_tensors(&self, snap: &mut Snapshot) {
        snap.meta.push(("dims.vocab".into(), self.dims.vocab.to_string()));
        snap.meta.push(("dims.embed".into(), self.dims.embed.to_string()));
        snap.meta.push(("dims.hidden".into(), self.dims.hidden.to_string()));
        snap.meta.push(("dims.ctx".into(), self.dims.ctx.to_string()));
        let push2 = |snap: &mut Snapshot, name: &str, a: &Array2<F>| {
            snap.tensors.push(TensorEntry::new(
                name,
                vec![a.nrows(), a.ncols()],
                a.iter().map(|v| v.to_f64()).collect(),
            ));
        };
        let push1 = |snap: &mut Snapshot, name: &str, a: &Array1<F>| {
            snap.tensors.push(TensorEntry::new(
                name,
                vec![a.len()],
                a.iter().map(|v| v.to_f64()).collect(),
            ));
        };
        push2(snap, "emb", &self.emb);
        push2(snap, "fwd.w_x", &self.fwd.w_x);
        push2(snap, "fwd.w_h", &self.fwd.w_h);
        push1(snap, "fwd.b", &self.fwd.b);
        if let Some(b) = &self.bwd {
            push2(snap, "bwd.w_x", &b.w_x);
            push2(snap, "bwd.w_h", &b.w_h);
            push1(snap, "bwd.b", &b.b);
        }
        push2(snap, "w_p", &self.w_p);
        if let Some(w) = &self.w_pb {
            push2(snap, "w_pb", w);
        }
        push1(snap, "b_p", &self.b_p);
    }

    pub(crate) fn from_snapshot(snap: &Snapshot, bidirectional: bool) -> Result<Self> {
        let get = |k: &str| -> Result<usize> {
            snap.require_meta(k)?
                .parse()
                .map_err(|_| Error::Checkpoint(format!("bad meta {k}")))
        };
        let dims = ModelDims {
            vocab: get("dims.vocab")?,
            embed: get("dims.embed")?,
            hidden: get("dims.hidden")?,
            ctx: get("dims.ctx")?,
        };
        let t2 = |name: &str| -> Result<Array2<F>> {
            let e = snap.tensor(name)?;
            if e.dims.len() != 2 {
                return Err(Error::Checkpoint(format!("{name} is not 2-d")));
            }
            Array2::from_shape_vec(
                (e.dims[0], e.dims[1]),
                e.data.iter().map(|&v| F::from_f64(v)).collect(),
            )
            .map_err(|_| Error::Checkpoint(format!("bad shape for {name}")))
        };
        let t1 = |name: &str| -> Result<Array1<F>> {
            let e = snap.tensor(name)?;
            Ok(Array1::from_vec(e.data.iter().map(|&v| F::from_f64(v)).collect()))
        };
        let fwd = LstmParams::from_tensors(t2("fwd.w_x")?, t2("fwd.w_h")?, t1("fwd.b")?)?;
        let bwd = if bidirectional {
            Some(LstmParams::from_tensors(t2("bwd.w_x")?, t2("bwd.w_h")?, t1("bwd.b")?)?)
        } else {
            None
        };
        Ok(EventModel {
            dims,
            bidirectional,
            emb: t2("emb")?,
            fwd,
            bwd,
            w_p: t2("w_p")?,
            w_pb: if bidirectional { Some(t2("w_pb")?) } else { None },
            b_p: t1("b_p")?,
        })
    }
}
