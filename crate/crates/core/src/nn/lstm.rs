//! The LSTM cell: batched forward steps, full-sequence runs in either
//! time direction, and exact backpropagation through time.
//!
//! Gate layout. The four gate blocks are stored stacked along the column
//! axis of `w_x`/`w_h`/`b` in the order `[g, f, i, o]`:
//!
//! ```text
//! g = tanh(x·W_gx + h·W_gh + b_g)      cell candidate
//! f = sigm(x·W_fx + h·W_fh + b_f)      forget gate
//! i = sigm(x·W_ix + h·W_ih + b_i)      input gate
//! o = sigm(x·W_ox + h·W_oh + b_o)      output gate
//! c_t = f ∘ c_{t-1} + i ∘ g
//! h_t = o ∘ tanh(c_t)
//! ```
//!
//! Sequence runs accept a per-step row mask; masked rows carry their
//! state through unchanged, which makes padded batches and the reverse
//! direction of a bidirectional model exact.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::error::{Error, Result};

use super::par::{matmul, matmul_into};
use super::real::Real;

/// LSTM weight matrices and biases for one direction.
#[derive(Debug, Clone)]
pub struct LstmParams<F: Real> {
    input_dim: usize,
    hidden_dim: usize,
    /// input_dim × 4H, gate blocks `[g, f, i, o]` along columns.
    pub w_x: Array2<F>,
    /// H × 4H, same block order.
    pub w_h: Array2<F>,
    /// 4H.
    pub b: Array1<F>,
}

/// Gradients with the same shapes as [`LstmParams`].
#[derive(Debug, Clone)]
pub struct LstmGrads<F: Real> {
    pub w_x: Array2<F>,
    pub w_h: Array2<F>,
    pub b: Array1<F>,
}

impl<F: Real> LstmGrads<F> {
    pub fn zeros(params: &LstmParams<F>) -> Self {
        LstmGrads {
            w_x: Array2::zeros(params.w_x.raw_dim()),
            w_h: Array2::zeros(params.w_h.raw_dim()),
            b: Array1::zeros(params.b.raw_dim()),
        }
    }

    pub fn add_assign(&mut self, other: &LstmGrads<F>) {
        self.w_x += &other.w_x;
        self.w_h += &other.w_h;
        self.b += &other.b;
    }
}

/// Hidden and cell state pair for a single line of batch rows.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState<F: Real> {
    pub h: Array1<F>,
    pub c: Array1<F>,
}

impl<F: Real> LstmState<F> {
    pub fn zeros(hidden_dim: usize) -> Self {
        LstmState {
            h: Array1::zeros(hidden_dim),
            c: Array1::zeros(hidden_dim),
        }
    }
}

/// Gate activations cached by [`lstm_step`].
#[derive(Debug, Clone)]
pub struct GateValues<F: Real> {
    pub g: Array1<F>,
    pub f: Array1<F>,
    pub i: Array1<F>,
    pub o: Array1<F>,
}

#[inline]
fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

impl<F: Real> LstmParams<F> {
    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    /// Xavier-uniform initialization per gate block; the forget-gate bias
    /// starts at one so early training does not erase the cell state.
    pub fn init<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let h = hidden_dim;
        let mut w_x = Array2::zeros((input_dim, 4 * h));
        let mut w_h = Array2::zeros((h, 4 * h));
        let rx = F::from_f64((6.0 / (input_dim + h) as f64).sqrt());
        let rh = F::from_f64((6.0 / (h + h) as f64).sqrt());
        for gate in 0..4 {
            for r in 0..input_dim {
                for cidx in 0..h {
                    w_x[[r, gate * h + cidx]] = rng.random_range(-rx..rx);
                }
            }
            for r in 0..h {
                for cidx in 0..h {
                    w_h[[r, gate * h + cidx]] = rng.random_range(-rh..rh);
                }
            }
        }
        let mut b = Array1::zeros(4 * h);
        b.slice_mut(s![h..2 * h]).fill(F::one());
        LstmParams { input_dim, hidden_dim, w_x, w_h, b }
    }

    pub fn from_tensors(w_x: Array2<F>, w_h: Array2<F>, b: Array1<F>) -> Result<Self> {
        let hidden4 = w_x.ncols();
        if hidden4 % 4 != 0 || w_h.ncols() != hidden4 || w_h.nrows() != hidden4 / 4 || b.len() != hidden4 {
            return Err(Error::Model("inconsistent LSTM tensor shapes".into()));
        }
        Ok(LstmParams {
            input_dim: w_x.nrows(),
            hidden_dim: hidden4 / 4,
            w_x,
            w_h,
            b,
        })
    }

    // Per-gate views, `[g, f, i, o]` block order.
    pub fn w_gx(&self) -> ArrayView2<'_, F> {
        self.w_x.slice(s![.., 0..self.hidden_dim])
    }
    pub fn w_fx(&self) -> ArrayView2<'_, F> {
        self.w_x.slice(s![.., self.hidden_dim..2 * self.hidden_dim])
    }
    pub fn w_ix(&self) -> ArrayView2<'_, F> {
        self.w_x.slice(s![.., 2 * self.hidden_dim..3 * self.hidden_dim])
    }
    pub fn w_ox(&self) -> ArrayView2<'_, F> {
        self.w_x.slice(s![.., 3 * self.hidden_dim..])
    }
    pub fn w_gh(&self) -> ArrayView2<'_, F> {
        self.w_h.slice(s![.., 0..self.hidden_dim])
    }
    pub fn w_fh(&self) -> ArrayView2<'_, F> {
        self.w_h.slice(s![.., self.hidden_dim..2 * self.hidden_dim])
    }
    pub fn w_ih(&self) -> ArrayView2<'_, F> {
        self.w_h.slice(s![.., 2 * self.hidden_dim..3 * self.hidden_dim])
    }
    pub fn w_oh(&self) -> ArrayView2<'_, F> {
        self.w_h.slice(s![.., 3 * self.hidden_dim..])
    }
    pub fn b_g(&self) -> ArrayView1<'_, F> {
        self.b.slice(s![0..self.hidden_dim])
    }
    pub fn b_f(&self) -> ArrayView1<'_, F> {
        self.b.slice(s![self.hidden_dim..2 * self.hidden_dim])
    }
    pub fn b_i(&self) -> ArrayView1<'_, F> {
        self.b.slice(s![2 * self.hidden_dim..3 * self.hidden_dim])
    }
    pub fn b_o(&self) -> ArrayView1<'_, F> {
        self.b.slice(s![3 * self.hidden_dim..])
    }

    /// Raw pre-activation `x·w_x + h_prev·w_h + b`, then gate activation
    /// in place: tanh on the g block, sigmoid on f/i/o.
    fn gates(&self, x: &ArrayView2<F>, h_prev: &Array2<F>) -> Array2<F> {
        let mut z = matmul(x, &self.w_x.view());
        matmul_into(&mut z, &h_prev.view(), &self.w_h.view(), true);
        z += &self.b;
        let hd = self.hidden_dim;
        Zip::indexed(&mut z).for_each(|(_, j), v| {
            *v = if j < hd { v.tanh() } else { sigmoid(*v) };
        });
        z
    }

    /// One batched step without masking. Returns `(h, c, cache)`.
    pub fn step_batch(
        &self,
        x: &ArrayView2<F>,
        h_prev: &Array2<F>,
        c_prev: &Array2<F>,
    ) -> (Array2<F>, Array2<F>, StepCache<F>) {
        let hd = self.hidden_dim;
        let gates = self.gates(x, h_prev);
        let g = gates.slice(s![.., 0..hd]);
        let f = gates.slice(s![.., hd..2 * hd]);
        let i = gates.slice(s![.., 2 * hd..3 * hd]);
        let o = gates.slice(s![.., 3 * hd..]);
        let mut c = Array2::zeros(c_prev.raw_dim());
        Zip::from(&mut c)
            .and(&f)
            .and(c_prev)
            .and(&i)
            .and(&g)
            .for_each(|c, &f, &cp, &i, &g| *c = f * cp + i * g);
        let tanh_c = c.mapv(|v| v.tanh());
        let mut h = Array2::zeros(c_prev.raw_dim());
        Zip::from(&mut h).and(&o).and(&tanh_c).for_each(|h, &o, &t| *h = o * t);
        let cache = StepCache {
            x: x.to_owned(),
            h_prev: h_prev.clone(),
            c_prev: c_prev.clone(),
            gates,
            tanh_c,
        };
        (h, c, cache)
    }

    /// Backward through one batched step. `dh`/`dc` are gradients w.r.t.
    /// this step's outputs; returns gradients w.r.t. the inputs and the
    /// previous state, accumulating parameter gradients into `grads`.
    pub fn step_backward(
        &self,
        cache: &StepCache<F>,
        dh: &Array2<F>,
        dc: &Array2<F>,
        grads: &mut LstmGrads<F>,
    ) -> (Array2<F>, Array2<F>, Array2<F>) {
        let hd = self.hidden_dim;
        let g = cache.gates.slice(s![.., 0..hd]);
        let f = cache.gates.slice(s![.., hd..2 * hd]);
        let i = cache.gates.slice(s![.., 2 * hd..3 * hd]);
        let o = cache.gates.slice(s![.., 3 * hd..]);

        // dc_tot = dc + dh ∘ o ∘ (1 - tanh(c)^2)
        let mut dc_tot = dc.clone();
        Zip::from(&mut dc_tot)
            .and(dh)
            .and(&o)
            .and(&cache.tanh_c)
            .for_each(|dct, &dh, &o, &t| *dct = *dct + dh * o * (F::one() - t * t));

        let mut dz = Array2::zeros(cache.gates.raw_dim());
        {
            let (mut dzg, rest) = dz.view_mut().split_at(Axis(1), hd);
            let (mut dzf, rest) = rest.split_at(Axis(1), hd);
            let (mut dzi, mut dzo) = rest.split_at(Axis(1), hd);
            Zip::from(&mut dzg)
                .and(&dc_tot)
                .and(&i)
                .and(&g)
                .for_each(|dz, &dct, &i, &g| *dz = dct * i * (F::one() - g * g));
            Zip::from(&mut dzf)
                .and(&dc_tot)
                .and(&cache.c_prev)
                .and(&f)
                .for_each(|dz, &dct, &cp, &f| *dz = dct * cp * f * (F::one() - f));
            Zip::from(&mut dzi)
                .and(&dc_tot)
                .and(&g)
                .and(&i)
                .for_each(|dz, &dct, &g, &i| *dz = dct * g * i * (F::one() - i));
            Zip::from(&mut dzo)
                .and(dh)
                .and(&cache.tanh_c)
                .and(&o)
                .for_each(|dz, &dh, &t, &o| *dz = dh * t * o * (F::one() - o));
        }

        matmul_into(&mut grads.w_x, &cache.x.t(), &dz.view(), true);
        matmul_into(&mut grads.w_h, &cache.h_prev.t(), &dz.view(), true);
        grads.b += &dz.sum_axis(Axis(0));

        let dx = matmul(&dz.view(), &self.w_x.t());
        let dh_prev = matmul(&dz.view(), &self.w_h.t());
        let mut dc_prev = Array2::zeros(dc.raw_dim());
        Zip::from(&mut dc_prev)
            .and(&dc_tot)
            .and(&f)
            .for_each(|dcp, &dct, &f| *dcp = dct * f);
        (dx, dh_prev, dc_prev)
    }

    /// Run a full padded batch in one time direction.
    ///
    /// `inputs` and `masks` are in time order `t = 1..=Kmax`; a mask of
    /// zero carries the previous state through unchanged. `reverse` runs
    /// the recurrence from `t = Kmax` down to `1` starting from zero
    /// state at `Kmax + 1`.
    pub fn run_seq(
        &self,
        inputs: &[Array2<F>],
        masks: &[Array1<F>],
        reverse: bool,
    ) -> SeqCache<F> {
        let kmax = inputs.len();
        assert_eq!(masks.len(), kmax);
        let bsz = if kmax > 0 { inputs[0].nrows() } else { 0 };
        let hd = self.hidden_dim;

        // The input-side product has no recurrence: one stacked GEMM.
        let mut x_all = Array2::zeros((kmax * bsz, self.input_dim));
        for (t, x) in inputs.iter().enumerate() {
            x_all.slice_mut(s![t * bsz..(t + 1) * bsz, ..]).assign(x);
        }
        let zx_all = matmul(&x_all.view(), &self.w_x.view());

        let mut h: Vec<Array2<F>> = Vec::with_capacity(kmax + 1);
        let mut c: Vec<Array2<F>> = Vec::with_capacity(kmax + 1);
        h.push(Array2::zeros((bsz, hd)));
        c.push(Array2::zeros((bsz, hd)));
        let mut gates_cache: Vec<Array2<F>> = Vec::with_capacity(kmax);
        let mut tanh_cache: Vec<Array2<F>> = Vec::with_capacity(kmax);

        for s_idx in 1..=kmax {
            let t = if reverse { kmax + 1 - s_idx } else { s_idx };
            let mask = &masks[t - 1];
            let mut z = zx_all.slice(s![(t - 1) * bsz..t * bsz, ..]).to_owned();
            matmul_into(&mut z, &h[s_idx - 1].view(), &self.w_h.view(), true);
            z += &self.b;
            Zip::indexed(&mut z).for_each(|(_, j), v| {
                *v = if j < hd { v.tanh() } else { sigmoid(*v) };
            });

            let g = z.slice(s![.., 0..hd]);
            let f = z.slice(s![.., hd..2 * hd]);
            let i = z.slice(s![.., 2 * hd..3 * hd]);
            let o = z.slice(s![.., 3 * hd..]);
            let c_prev = &c[s_idx - 1];
            let h_prev = &h[s_idx - 1];
            let mut c_new = Array2::zeros((bsz, hd));
            Zip::from(&mut c_new)
                .and(&f)
                .and(c_prev)
                .and(&i)
                .and(&g)
                .for_each(|c, &f, &cp, &i, &g| *c = f * cp + i * g);
            let tanh_c = c_new.mapv(|v| v.tanh());
            let mut h_new = Array2::zeros((bsz, hd));
            Zip::from(&mut h_new).and(&o).and(&tanh_c).for_each(|h, &o, &t| *h = o * t);

            // masked rows keep their previous state
            for (row, &m) in mask.iter().enumerate() {
                if m == F::zero() {
                    let hp = h_prev.row(row).to_owned();
                    let cp = c_prev.row(row).to_owned();
                    h_new.row_mut(row).assign(&hp);
                    c_new.row_mut(row).assign(&cp);
                }
            }

            gates_cache.push(z);
            tanh_cache.push(tanh_c);
            h.push(h_new);
            c.push(c_new);
        }

        SeqCache {
            kmax,
            bsz,
            hidden_dim: hd,
            reverse,
            inputs: inputs.to_vec(),
            masks: masks.to_vec(),
            h,
            c,
            gates: gates_cache,
            tanh_c: tanh_cache,
        }
    }

    /// Exact BPTT over a [`run_seq`] cache.
    ///
    /// `dh_ext[t-1]` is the externally injected gradient w.r.t. the state
    /// "after consuming token t" in this direction (projection, summary,
    /// or mean contributions). Returns parameter gradients and, when
    /// requested, gradients w.r.t. the inputs in time order.
    pub fn backward_seq(
        &self,
        cache: &SeqCache<F>,
        dh_ext: &[Array2<F>],
        want_dinputs: bool,
    ) -> (LstmGrads<F>, Option<Vec<Array2<F>>>) {
        let kmax = cache.kmax;
        let bsz = cache.bsz;
        let hd = self.hidden_dim;
        assert_eq!(dh_ext.len(), kmax);

        let mut grads = LstmGrads::zeros(self);
        let mut dz_all = Array2::zeros((kmax * bsz, 4 * hd));
        // h states preceding each step, stacked in time order for one GEMM
        let mut hprev_all = Array2::zeros((kmax * bsz, hd));

        let mut dh_carry: Array2<F> = Array2::zeros((bsz, hd));
        let mut dc_carry: Array2<F> = Array2::zeros((bsz, hd));

        for s_idx in (1..=kmax).rev() {
            let t = if cache.reverse { kmax + 1 - s_idx } else { s_idx };
            let mask = &cache.masks[t - 1];
            let gates = &cache.gates[s_idx - 1];
            let tanh_c = &cache.tanh_c[s_idx - 1];
            let c_prev = &cache.c[s_idx - 1];
            let h_prev = &cache.h[s_idx - 1];

            let mut dh = dh_carry;
            dh += &dh_ext[t - 1];

            let g = gates.slice(s![.., 0..hd]);
            let f = gates.slice(s![.., hd..2 * hd]);
            let i = gates.slice(s![.., 2 * hd..3 * hd]);
            let o = gates.slice(s![.., 3 * hd..]);

            let mut dc_tot = dc_carry.clone();
            Zip::from(&mut dc_tot)
                .and(&dh)
                .and(&o)
                .and(tanh_c)
                .for_each(|dct, &dh, &o, &tc| *dct = *dct + dh * o * (F::one() - tc * tc));

            let mut dz = dz_all.slice_mut(s![(t - 1) * bsz..t * bsz, ..]);
            {
                let (mut dzg, rest) = dz.view_mut().split_at(Axis(1), hd);
                let (mut dzf, rest) = rest.split_at(Axis(1), hd);
                let (mut dzi, mut dzo) = rest.split_at(Axis(1), hd);
                Zip::from(&mut dzg)
                    .and(&dc_tot)
                    .and(&i)
                    .and(&g)
                    .for_each(|dz, &dct, &i, &g| *dz = dct * i * (F::one() - g * g));
                Zip::from(&mut dzf)
                    .and(&dc_tot)
                    .and(c_prev)
                    .and(&f)
                    .for_each(|dz, &dct, &cp, &f| *dz = dct * cp * f * (F::one() - f));
                Zip::from(&mut dzi)
                    .and(&dc_tot)
                    .and(&g)
                    .and(&i)
                    .for_each(|dz, &dct, &g, &i| *dz = dct * g * i * (F::one() - i));
                Zip::from(&mut dzo)
                    .and(&dh)
                    .and(tanh_c)
                    .and(&o)
                    .for_each(|dz, &dh, &tc, &o| *dz = dh * tc * o * (F::one() - o));
            }
            // masked rows contribute nothing and carry gradients through
            for (row, &m) in mask.iter().enumerate() {
                if m == F::zero() {
                    dz.row_mut(row).fill(F::zero());
                }
            }
            hprev_all
                .slice_mut(s![(t - 1) * bsz..t * bsz, ..])
                .assign(h_prev);

            let dz_view = dz_all.slice(s![(t - 1) * bsz..t * bsz, ..]);
            let dh_rec = matmul(&dz_view, &self.w_h.t());
            let mut dh_next = dh_rec;
            let mut dc_next = Array2::zeros((bsz, hd));
            for (row, &m) in mask.iter().enumerate() {
                if m == F::zero() {
                    // identity pass-through for carried state
                    let dhr = dh.row(row).to_owned();
                    dh_next.row_mut(row).assign(&dhr);
                    let dcr = dc_carry.row(row).to_owned();
                    dc_next.row_mut(row).assign(&dcr);
                } else {
                    let mut out = dc_next.row_mut(row);
                    Zip::from(&mut out)
                        .and(&dc_tot.row(row))
                        .and(&f.row(row))
                        .for_each(|o, &dct, &f| *o = dct * f);
                }
            }
            dh_carry = dh_next;
            dc_carry = dc_next;
        }

        // stacked parameter gradients
        let mut x_all = Array2::zeros((kmax * bsz, self.input_dim));
        for (t, x) in cache.inputs.iter().enumerate() {
            x_all.slice_mut(s![t * bsz..(t + 1) * bsz, ..]).assign(x);
        }
        matmul_into(&mut grads.w_x, &x_all.t(), &dz_all.view(), true);
        matmul_into(&mut grads.w_h, &hprev_all.t(), &dz_all.view(), true);
        grads.b += &dz_all.sum_axis(Axis(0));

        let dinputs = if want_dinputs {
            let dx_all = matmul(&dz_all.view(), &self.w_x.t());
            Some(
                (0..kmax)
                    .map(|t| dx_all.slice(s![t * bsz..(t + 1) * bsz, ..]).to_owned())
                    .collect(),
            )
        } else {
            None
        };
        (grads, dinputs)
    }
}

/// Cached values from one batched [`LstmParams::step_batch`].
#[derive(Debug, Clone)]
pub struct StepCache<F: Real> {
    pub x: Array2<F>,
    pub h_prev: Array2<F>,
    pub c_prev: Array2<F>,
    pub gates: Array2<F>,
    pub tanh_c: Array2<F>,
}

/// Caches from a full-sequence run in one direction.
///
/// `h[s]` / `c[s]` are indexed by processing step `s = 0..=Kmax`, with
/// `h[0]` the zero boundary state. [`SeqCache::h_after_time`] translates
/// time indices, handling both directions and their boundaries.
#[derive(Debug, Clone)]
pub struct SeqCache<F: Real> {
    pub kmax: usize,
    pub bsz: usize,
    pub hidden_dim: usize,
    pub reverse: bool,
    pub inputs: Vec<Array2<F>>,
    pub masks: Vec<Array1<F>>,
    pub h: Vec<Array2<F>>,
    pub c: Vec<Array2<F>>,
    pub gates: Vec<Array2<F>>,
    pub tanh_c: Vec<Array2<F>>,
}

impl<F: Real> SeqCache<F> {
    /// State after this direction has consumed token `t`.
    ///
    /// Forward: valid for `t = 0..=Kmax` (`t = 0` is the zero boundary).
    /// Reverse: valid for `t = 1..=Kmax+1` (`t = Kmax+1` is the boundary);
    /// "after consuming t" means having consumed tokens `Kmax..=t`.
    pub fn h_after_time(&self, t: usize) -> &Array2<F> {
        let slot = if self.reverse { self.kmax + 1 - t } else { t };
        &self.h[slot]
    }
}

/// One LSTM step on a single vector, the reference single-line form.
/// Faults on non-finite inputs.
pub fn lstm_step<F: Real>(
    params: &LstmParams<F>,
    x: &ArrayView1<F>,
    prev: &LstmState<F>,
) -> Result<(LstmState<F>, GateValues<F>)> {
    if x.iter().any(|v| !v.is_finite())
        || prev.h.iter().any(|v| !v.is_finite())
        || prev.c.iter().any(|v| !v.is_finite())
    {
        return Err(Error::Model("non-finite input to lstm_step".into()));
    }
    let hd = params.hidden_dim;
    let xb = x.to_owned().insert_axis(Axis(0));
    let hb = prev.h.clone().insert_axis(Axis(0));
    let cb = prev.c.clone().insert_axis(Axis(0));
    let (h, c, cache) = params.step_batch(&xb.view(), &hb, &cb);
    let gates = GateValues {
        g: cache.gates.slice(s![0, 0..hd]).to_owned(),
        f: cache.gates.slice(s![0, hd..2 * hd]).to_owned(),
        i: cache.gates.slice(s![0, 2 * hd..3 * hd]).to_owned(),
        o: cache.gates.slice(s![0, 3 * hd..]).to_owned(),
    };
    Ok((
        LstmState {
            h: h.row(0).to_owned(),
            c: c.row(0).to_owned(),
        },
        gates,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::arr1;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_params(w: f64, b: f64) -> LstmParams<f64> {
        LstmParams::from_tensors(
            Array2::from_elem((1, 4), w),
            Array2::from_elem((1, 4), w),
            Array1::from_elem(4, b),
        )
        .unwrap()
    }

    #[test]
    fn zero_everything_gives_zero_state_and_half_gates() {
        let params = scalar_params(0.0, 0.0);
        let (state, gates) = lstm_step(&params, &arr1(&[0.0]).view(), &LstmState::zeros(1)).unwrap();
        assert_eq!(state.h[0], 0.0);
        assert_eq!(state.c[0], 0.0);
        assert_eq!(gates.g[0], 0.0);
        assert_eq!(gates.f[0], 0.5);
        assert_eq!(gates.i[0], 0.5);
        assert_eq!(gates.o[0], 0.5);
    }

    #[test]
    fn scalar_case_matches_hand_evaluated_equations() {
        // dims=1, x=1, all weights 1, biases 0, zero previous state.
        let params = scalar_params(1.0, 0.0);
        let (state, gates) = lstm_step(&params, &arr1(&[1.0]).view(), &LstmState::zeros(1)).unwrap();
        // oracle: direct evaluation of the gate equations
        let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
        let g = 1.0f64.tanh();
        let f = sig(1.0);
        let i = sig(1.0);
        let o = sig(1.0);
        let c = i * g;
        let h = o * c.tanh();
        assert_abs_diff_eq!(gates.g[0], g, epsilon = 1e-15);
        assert_abs_diff_eq!(gates.f[0], f, epsilon = 1e-15);
        assert_abs_diff_eq!(gates.i[0], i, epsilon = 1e-15);
        assert_abs_diff_eq!(gates.o[0], o, epsilon = 1e-15);
        assert_abs_diff_eq!(state.c[0], c, epsilon = 1e-15);
        assert_abs_diff_eq!(state.h[0], h, epsilon = 1e-15);
        // spot values of the oracle itself
        assert_abs_diff_eq!(g, 0.76159, epsilon = 1e-5);
        assert_abs_diff_eq!(f, 0.73106, epsilon = 1e-5);
        assert_abs_diff_eq!(c, 0.55677, epsilon = 1e-5);
    }

    #[test]
    fn step_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let params: LstmParams<f64> = LstmParams::init(5, 4, &mut rng);
        let x = Array1::from_shape_fn(5, |i| (i as f64) * 0.3 - 0.7);
        let prev = LstmState::zeros(4);
        let (a, _) = lstm_step(&params, &x.view(), &prev).unwrap();
        let (b, _) = lstm_step(&params, &x.view(), &prev).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_input_faults() {
        let params = scalar_params(1.0, 0.0);
        let err = lstm_step(&params, &arr1(&[f64::NAN]).view(), &LstmState::zeros(1));
        assert!(err.is_err());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a: LstmParams<f64> = LstmParams::init(7, 5, &mut ChaCha8Rng::seed_from_u64(9));
        let b: LstmParams<f64> = LstmParams::init(7, 5, &mut ChaCha8Rng::seed_from_u64(9));
        let c: LstmParams<f64> = LstmParams::init(7, 5, &mut ChaCha8Rng::seed_from_u64(10));
        assert_eq!(a.w_x, b.w_x);
        assert_eq!(a.w_h, b.w_h);
        assert_ne!(a.w_x, c.w_x);
        let rx = (6.0 / (7.0 + 5.0)).sqrt();
        assert!(a.w_x.iter().all(|v| v.abs() <= rx));
        // forget bias block is one, rest zero
        assert!(a.b_f().iter().all(|&v| v == 1.0));
        assert!(a.b_g().iter().all(|&v| v == 0.0));
        assert!(a.b_i().iter().all(|&v| v == 0.0));
        assert!(a.b_o().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn hidden_state_bounded_by_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let params: LstmParams<f64> = LstmParams::init(3, 6, &mut rng);
        let mut state = LstmState::zeros(6);
        for step in 0..50 {
            let x = Array1::from_shape_fn(3, |i| ((step * 3 + i) as f64 * 0.77).sin() * 3.0);
            let (next, _) = lstm_step(&params, &x.view(), &state).unwrap();
            state = next;
            assert!(state.h.iter().all(|v| v.abs() < 1.0));
            assert!(state.c.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn masked_rows_carry_state_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params: LstmParams<f64> = LstmParams::init(2, 3, &mut rng);
        let bsz = 2;
        let inputs: Vec<Array2<f64>> = (0..4)
            .map(|t| Array2::from_shape_fn((bsz, 2), |(b, j)| ((t + b + j) as f64 * 0.31).cos()))
            .collect();
        // row 0 has length 4, row 1 has length 2
        let masks: Vec<Array1<f64>> = (0..4)
            .map(|t| arr1(&[1.0, if t < 2 { 1.0 } else { 0.0 }]))
            .collect();
        let cache = params.run_seq(&inputs, &masks, false);
        // row 1's state after step 4 equals its state after step 2
        assert_eq!(cache.h[4].row(1), cache.h[2].row(1));
        assert_eq!(cache.c[4].row(1), cache.c[2].row(1));
        // row 0 keeps evolving
        assert_ne!(cache.h[4].row(0), cache.h[2].row(0));
    }

    #[test]
    fn reverse_direction_starts_after_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params: LstmParams<f64> = LstmParams::init(2, 3, &mut rng);
        let bsz = 2;
        let inputs: Vec<Array2<f64>> = (0..3)
            .map(|t| Array2::from_shape_fn((bsz, 2), |(b, j)| ((t * 2 + b + j) as f64 * 0.17).sin()))
            .collect();
        // row 1 has length 1
        let masks: Vec<Array1<f64>> = (0..3)
            .map(|t| arr1(&[1.0, if t < 1 { 1.0 } else { 0.0 }]))
            .collect();
        let cache = params.run_seq(&inputs, &masks, true);
        // boundary state (after time Kmax+1) is zero
        assert!(cache.h_after_time(4).iter().all(|&v| v == 0.0));
        // row 1: state after time 2 is still zero (its tokens end at 1)
        assert!(cache.h_after_time(2).row(1).iter().all(|&v| v == 0.0));
        // row 1: state after time 1 consumed exactly its one token;
        // compare against a fresh length-1 run
        let solo_inputs = vec![inputs[0].clone()];
        let solo_masks = vec![arr1(&[1.0, 1.0])];
        let solo = params.run_seq(&solo_inputs, &solo_masks, true);
        assert_eq!(cache.h_after_time(1).row(1), solo.h_after_time(1).row(1));
    }
}
