//! Numerically stable softmax and cross-entropy.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};

use super::real::Real;

/// Row-wise stable softmax in place (max subtraction before exp).
pub fn softmax_rows_inplace<F: Real>(logits: &mut Array2<F>) {
    for mut row in logits.rows_mut() {
        let max = row.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
        let mut sum = F::zero();
        row.mapv_inplace(|v| {
            let e = (v - max).exp();
            sum = sum + e;
            e
        });
        row.mapv_inplace(|v| v / sum);
    }
}

/// Probability distribution over the next token from the previous hidden
/// state: `softmax(h · W_p + b_p)`.
pub fn softmax_project<F: Real>(
    h_prev: &ArrayView1<F>,
    w_p: &ArrayView2<F>,
    b_p: &ArrayView1<F>,
) -> Array1<F> {
    let mut logits = h_prev.dot(w_p);
    logits += b_p;
    let max = logits.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
    let mut sum = F::zero();
    logits.mapv_inplace(|v| {
        let e = (v - max).exp();
        sum = sum + e;
        e
    });
    logits.mapv_inplace(|v| v / sum);
    logits
}

/// Mean cross-entropy of per-step probability rows against one-hot
/// targets; positions whose target is `pad_id` are masked out of both
/// the sum and the divisor.
pub fn sequence_loss<F: Real>(probs: &ArrayView2<F>, targets: &[u32], pad_id: u32) -> F {
    assert_eq!(probs.nrows(), targets.len());
    let mut total = F::zero();
    let mut n = 0usize;
    for (row, &t) in probs.rows().into_iter().zip(targets) {
        if t == pad_id {
            continue;
        }
        total = total - row[t as usize].ln();
        n += 1;
    }
    if n == 0 {
        F::zero()
    } else {
        total / F::from_f64(n as f64)
    }
}

/// Stacked softmax cross-entropy for a whole padded batch.
///
/// Returns per-row negative log likelihood (zero on inactive rows) and
/// the probabilities, kept for the backward pass.
pub struct CeResult<F: Real> {
    pub probs: Array2<F>,
    pub nll: Vec<F>,
}

pub fn softmax_ce<F: Real>(mut logits: Array2<F>, targets: &[u32], active: &[bool]) -> CeResult<F> {
    assert_eq!(logits.nrows(), targets.len());
    assert_eq!(logits.nrows(), active.len());
    let mut nll = vec![F::zero(); targets.len()];
    for (idx, mut row) in logits.rows_mut().into_iter().enumerate() {
        let max = row.iter().fold(F::neg_infinity(), |a, &b| a.max(b));
        let mut sum = F::zero();
        row.mapv_inplace(|v| {
            let e = (v - max).exp();
            sum = sum + e;
            e
        });
        row.mapv_inplace(|v| v / sum);
        if active[idx] {
            // -ln p[target], recovered stably from the normalized row
            let p = row[targets[idx] as usize];
            nll[idx] = -p.ln();
        }
    }
    CeResult { probs: logits, nll }
}

/// Convert stored probabilities into logit gradients in place:
/// `dlogits = w ∘ (p − onehot(target))`, zero where the weight is zero.
pub fn dlogits_inplace<F: Real>(probs: &mut Array2<F>, targets: &[u32], row_weights: &[F]) {
    for (idx, mut row) in probs.rows_mut().into_iter().enumerate() {
        let w = row_weights[idx];
        if w == F::zero() {
            row.fill(F::zero());
            continue;
        }
        Zip::from(&mut row).for_each(|v| *v = *v * w);
        let t = targets[idx] as usize;
        row[t] = row[t] - w;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{arr1, arr2, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn equal_logits_give_uniform() {
        let h = arr1(&[0.0, 0.0]);
        let w = Array2::zeros((2, 5));
        let b = arr1(&[3.0, 3.0, 3.0, 3.0, 3.0]);
        let p = softmax_project(&h.view(), &w.view(), &b.view());
        for &v in p.iter() {
            assert_abs_diff_eq!(v, 0.2, epsilon = 1e-15);
        }
    }

    #[test]
    fn extreme_logits_stay_finite_and_normalized() {
        let mut logits = arr2(&[[1000.0, 0.0], [-1000.0, 0.0], [1e300, -1e300]]);
        softmax_rows_inplace(&mut logits);
        for row in logits.rows() {
            let sum: f64 = row.sum();
            assert!(row.iter().all(|v| v.is_finite()));
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
        }
        assert_abs_diff_eq!(logits[[0, 0]], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(logits[[0, 1]], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn random_logits_match_naive_exp_sum_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let logits: Vec<f64> = (0..7).map(|_| rng.random_range(-3.0..3.0)).collect();
        let h = arr1(&[1.0]);
        let w = Array2::from_shape_vec((1, 7), logits.clone()).unwrap();
        let b = Array1::zeros(7);
        let p = softmax_project(&h.view(), &w.view(), &b.view());
        let denom: f64 = logits.iter().map(|v| v.exp()).sum();
        for (a, l) in p.iter().zip(&logits) {
            assert_abs_diff_eq!(*a, l.exp() / denom, epsilon = 1e-12);
        }
    }

    use ndarray::Array1;

    #[test]
    fn perfect_predictions_give_zero_loss() {
        let probs = arr2(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert_eq!(sequence_loss(&probs.view(), &[0, 1], 99), 0.0);
    }

    #[test]
    fn uniform_prediction_loss_is_ln_c() {
        let c = 64;
        let probs = Array2::from_elem((5, c), 1.0 / c as f64);
        let targets = [3u32, 10, 0, 63, 31];
        let loss = sequence_loss(&probs.view(), &targets, 999);
        assert_abs_diff_eq!(loss, (c as f64).ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(loss, 4.1589, epsilon = 1e-4);
    }

    #[test]
    fn pad_positions_leave_sum_and_divisor() {
        let probs = arr2(&[[0.5, 0.5], [0.25, 0.75], [0.9, 0.1]]);
        let pad = 0u32;
        // only the middle row is live (target 1)
        let loss = sequence_loss(&probs.view(), &[pad, 1, pad], pad);
        assert_abs_diff_eq!(loss, -(0.75f64.ln()), epsilon = 1e-15);
    }

    #[test]
    fn sequence_loss_matches_elementwise_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = 9;
        let c = 12;
        let mut logits = Array2::from_shape_fn((k, c), |_| rng.random_range(-2.0..2.0f64));
        softmax_rows_inplace(&mut logits);
        let targets: Vec<u32> = (0..k).map(|_| rng.random_range(1..c as u32)).collect();
        let loss = sequence_loss(&logits.view(), &targets, 0);
        let oracle: f64 = targets
            .iter()
            .enumerate()
            .map(|(i, &t)| -logits[[i, t as usize]].ln())
            .sum::<f64>()
            / k as f64;
        assert_abs_diff_eq!(loss, oracle, epsilon = 1e-12);
        assert!(loss >= 0.0);
    }
}
