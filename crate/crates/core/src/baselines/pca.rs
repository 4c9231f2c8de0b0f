//! PCA anomaly detector: squared reconstruction error after projecting
//! onto the top-k principal axes and back.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
/// Returns eigenvalues (descending) and matching eigenvectors as rows.
pub fn jacobi_eigh(mut a: Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut v = Array2::eye(n);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[[p, q]] * a[[p, q]];
            }
        }
        if off.sqrt() < 1e-14 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                if apq.abs() < 1e-18 {
                    continue;
                }
                let app = a[[p, p]];
                let aqq = a[[q, q]];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].partial_cmp(&a[[i, i]]).unwrap());
    let eigvals: Vec<f64> = order.iter().map(|&i| a[[i, i]]).collect();
    let mut vecs = Array2::zeros((n, n));
    for (row, &i) in order.iter().enumerate() {
        for k in 0..n {
            vecs[[row, k]] = v[[k, i]];
        }
    }
    (eigvals, vecs)
}

/// Mean vector plus the top-k principal axes (orthonormal rows).
#[derive(Debug, Clone)]
pub struct PcaDetector {
    pub mean: Array1<f64>,
    /// k×D component rows.
    pub axes: Array2<f64>,
    pub k: usize,
}

impl PcaDetector {
    /// Fit on a non-empty sample matrix (rows = observations). When k
    /// exceeds the data rank the extra axes are zero-variance directions
    /// of the eigenbasis, still orthonormal.
    pub fn fit(data: &Array2<f64>, k: usize) -> Result<Self> {
        let n = data.nrows();
        let d = data.ncols();
        if n == 0 {
            return Err(Error::EmptyInput("pca fit set empty".into()));
        }
        if k == 0 || k > d {
            return Err(Error::Config(format!("pca components {k} outside 1..={d}")));
        }
        let mean = data.mean_axis(Axis(0)).unwrap();
        let centered = data - &mean;
        let cov = centered.t().dot(&centered) / (n.max(2) - 1) as f64;
        let (_vals, vecs) = jacobi_eigh(cov);
        let axes = vecs.slice(ndarray::s![0..k, ..]).to_owned();
        Ok(PcaDetector { mean, axes, k })
    }

    /// Squared Euclidean reconstruction error of one vector.
    pub fn score(&self, x: &ArrayView1<f64>) -> f64 {
        let centered = x - &self.mean;
        let z = self.axes.dot(&centered);
        let recon = self.axes.t().dot(&z);
        let resid = &centered - &recon;
        resid.dot(&resid)
    }

    pub fn score_slice(&self, x: &[f64]) -> f64 {
        self.score(&ArrayView1::from(x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn points_on_a_line_have_zero_error_with_k1() {
        let data = arr2(&[
            [0.0, 0.0, 0.0],
            [1.0, 2.0, -1.0],
            [2.0, 4.0, -2.0],
            [3.0, 6.0, -3.0],
        ]);
        let det = PcaDetector::fit(&data, 1).unwrap();
        for row in data.rows() {
            assert!(det.score(&row) < 1e-10);
        }
    }

    #[test]
    fn k_equals_d_reconstructs_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data = Array2::from_shape_fn((12, 4), |_| rng.random_range(-2.0..2.0));
        let det = PcaDetector::fit(&data, 4).unwrap();
        for row in data.rows() {
            assert!(det.score(&row) < 1e-18, "{}", det.score(&row));
        }
    }

    #[test]
    fn axes_orthonormal_even_beyond_rank() {
        // rank-2 data in 5 dims, ask for 4 axes
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut data = Array2::zeros((20, 5));
        for mut row in data.rows_mut() {
            let a: f64 = rng.random_range(-1.0..1.0);
            let b: f64 = rng.random_range(-1.0..1.0);
            row[0] = a;
            row[1] = b;
            row[2] = a + b;
            row[3] = a - b;
            row[4] = 2.0 * a;
        }
        let det = PcaDetector::fit(&data, 4).unwrap();
        let gram = det.axes.dot(&det.axes.t());
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - want).abs() < 1e-8, "gram[{i},{j}]={}", gram[[i, j]]);
            }
        }
    }

    /// Independent eigensolver route: power iteration with deflation.
    fn power_iteration_axes(cov: &Array2<f64>, k: usize, seed: u64) -> Array2<f64> {
        let d = cov.ncols();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut deflated = cov.clone();
        let mut axes = Array2::zeros((k, d));
        for i in 0..k {
            let mut v = Array1::from_shape_fn(d, |_| rng.random_range(-1.0..1.0f64));
            for _ in 0..20_000 {
                let mut next = deflated.dot(&v);
                let norm = next.dot(&next).sqrt();
                if norm < 1e-300 {
                    break;
                }
                next /= norm;
                v = next;
            }
            let lambda = v.dot(&deflated.dot(&v));
            // deflate: cov -= λ v v^T
            for r in 0..d {
                for c in 0..d {
                    deflated[[r, c]] -= lambda * v[r] * v[c];
                }
            }
            axes.row_mut(i).assign(&v);
        }
        axes
    }

    #[test]
    fn scores_match_power_iteration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let data = Array2::from_shape_fn((20, 5), |_| rng.random_range(-3.0..3.0));
        let k = 3;
        let det = PcaDetector::fit(&data, k).unwrap();
        let mean = data.mean_axis(Axis(0)).unwrap();
        let centered = &data - &mean;
        let cov = centered.t().dot(&centered) / (data.nrows() - 1) as f64;
        let oracle_axes = power_iteration_axes(&cov, k, 77);
        for row in data.rows() {
            let c = &row.to_owned() - &mean;
            let z = oracle_axes.dot(&c);
            let recon = oracle_axes.t().dot(&z);
            let resid = &c - &recon;
            let want = resid.dot(&resid);
            let got = det.score(&row);
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
    }

    #[test]
    fn error_invariant_to_input_ordering() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let data = Array2::from_shape_fn((15, 4), |_| rng.random_range(-1.0..1.0));
        let mut shuffled_rows: Vec<usize> = (0..15).collect();
        shuffled_rows.reverse();
        let mut shuffled = Array2::zeros((15, 4));
        for (i, &r) in shuffled_rows.iter().enumerate() {
            shuffled.row_mut(i).assign(&data.row(r));
        }
        let a = PcaDetector::fit(&data, 2).unwrap();
        let b = PcaDetector::fit(&shuffled, 2).unwrap();
        for row in data.rows() {
            assert!((a.score(&row) - b.score(&row)).abs() < 1e-9);
        }
    }
}
