//! Adam with bias correction and optional global-norm gradient clipping.

use super::real::Real;

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm: Some(5.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// Gradient contained a non-finite value; parameters untouched.
    SkippedNonFinite,
}

/// Optimizer state: first/second moment per parameter tensor, in the
/// model's canonical tensor order.
#[derive(Debug, Clone)]
pub struct Adam<F: Real> {
    pub cfg: AdamConfig,
    pub t: u64,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    pub skipped_nonfinite: u64,
}

impl<F: Real> Adam<F> {
    pub fn new(cfg: AdamConfig) -> Self {
        Adam { cfg, t: 0, m: Vec::new(), v: Vec::new(), skipped_nonfinite: 0 }
    }

    /// Apply one update. `params` and `grads` are parallel flat slices.
    pub fn step(&mut self, params: &mut [&mut [F]], grads: &[&[F]]) -> StepOutcome {
        assert_eq!(params.len(), grads.len());
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| vec![F::zero(); g.len()]).collect();
            self.v = grads.iter().map(|g| vec![F::zero(); g.len()]).collect();
        }

        let mut sq_norm = 0.0f64;
        for g in grads {
            for &v in g.iter() {
                let v = v.to_f64();
                sq_norm += v * v;
            }
        }
        if !sq_norm.is_finite() {
            self.skipped_nonfinite += 1;
            return StepOutcome::SkippedNonFinite;
        }
        let norm = sq_norm.sqrt();
        let scale = match self.cfg.clip_norm {
            Some(clip) if norm > clip => clip / norm,
            _ => 1.0,
        };

        self.t += 1;
        let scale = F::from_f64(scale);
        let beta1 = F::from_f64(self.cfg.beta1);
        let beta2 = F::from_f64(self.cfg.beta2);
        let one = F::one();
        let bc1 = F::from_f64(1.0 - self.cfg.beta1.powi(self.t as i32));
        let bc2 = F::from_f64(1.0 - self.cfg.beta2.powi(self.t as i32));
        let lr = F::from_f64(self.cfg.learning_rate);
        let eps = F::from_f64(self.cfg.epsilon);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            assert_eq!(p.len(), g.len());
            for k in 0..p.len() {
                let gk = g[k] * scale;
                m[k] = beta1 * m[k] + (one - beta1) * gk;
                v[k] = beta2 * v[k] + (one - beta2) * gk * gk;
                let mhat = m[k] / bc1;
                let vhat = v[k] / bc2;
                p[k] = p[k] - lr * mhat / (vhat.sqrt() + eps);
            }
        }
        StepOutcome::Applied
    }

    /// Moment tensors for checkpointing, flattened per parameter tensor.
    pub fn state(&self) -> (u64, &[Vec<F>], &[Vec<F>]) {
        (self.t, &self.m, &self.v)
    }

    pub fn restore(&mut self, t: u64, m: Vec<Vec<F>>, v: Vec<Vec<F>>) {
        self.t = t;
        self.m = m;
        self.v = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut adam: Adam<f64> = Adam::new(AdamConfig::default());
        let mut p = vec![1.0, -2.0, 3.0];
        let g = vec![0.0, 0.0, 0.0];
        adam.step(&mut [&mut p], &[&g]);
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_moves_by_about_lr_in_sign_direction() {
        // bias-corrected first step: delta = lr * g / (|g| + eps')
        let cfg = AdamConfig { clip_norm: None, ..AdamConfig::default() };
        let mut adam: Adam<f64> = Adam::new(cfg);
        let mut p = vec![0.5, -0.5];
        let g = vec![0.2, -0.04];
        // oracle: hand-computed single Adam step
        let mut expect = Vec::new();
        for (pk, gk) in p.iter().zip(&g) {
            let m = (1.0 - cfg.beta1) * gk;
            let v = (1.0 - cfg.beta2) * gk * gk;
            let mhat = m / (1.0 - cfg.beta1);
            let vhat = v / (1.0 - cfg.beta2);
            expect.push(pk - cfg.learning_rate * mhat / (vhat.sqrt() + cfg.epsilon));
        }
        adam.step(&mut [&mut p], &[&g]);
        for (a, e) in p.iter().zip(&expect) {
            assert_abs_diff_eq!(a, e, epsilon = 1e-15);
        }
        // magnitude ≈ lr, sign-consistent
        assert_abs_diff_eq!(0.5 - p[0], 1e-3, epsilon = 1e-6);
        assert_abs_diff_eq!(p[1] + 0.5, 1e-3, epsilon = 1e-6);
    }

    #[test]
    fn clipping_scales_by_norm_ratio() {
        let cfg = AdamConfig { clip_norm: Some(5.0), ..AdamConfig::default() };
        let mut a: Adam<f64> = Adam::new(cfg);
        let mut b: Adam<f64> = Adam::new(AdamConfig { clip_norm: None, ..cfg });
        // gradient with norm 50 gets scaled by 0.1
        let g_big = vec![50.0];
        let g_scaled = vec![5.0];
        let mut pa = vec![1.0];
        let mut pb = vec![1.0];
        a.step(&mut [&mut pa], &[&g_big]);
        b.step(&mut [&mut pb], &[&g_scaled]);
        assert_abs_diff_eq!(pa[0], pb[0], epsilon = 1e-15);
    }

    #[test]
    fn non_finite_gradient_skips_update() {
        let mut adam: Adam<f64> = Adam::new(AdamConfig::default());
        let mut p = vec![1.0];
        let g = vec![f64::NAN];
        let out = adam.step(&mut [&mut p], &[&g]);
        assert_eq!(out, StepOutcome::SkippedNonFinite);
        assert_eq!(p, vec![1.0]);
        assert_eq!(adam.skipped_nonfinite, 1);
        assert_eq!(adam.t, 0);
    }
}
