//! Pearson correlation and covariance-eigendecomposition PCA.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Sample Pearson r with an explicit degeneracy flag: a zero-variance input
/// yields `r = 0` and `degenerate = true` instead of an error, so landscape
/// grids over flat model outputs never abort.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    pub degenerate: bool,
}

pub fn pearson_correlation(a: &[f64], b: &[f64]) -> Result<Correlation> {
    if a.len() != b.len() {
        return Err(Error::shape(format!(
            "pearson inputs differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.len() < 2 {
        return Err(Error::invalid(format!(
            "pearson needs at least 2 points, got {}",
            a.len()
        )));
    }
    let n = a.len() as f64;
    let mean_a = a.iter().sum::<f64>() / n;
    let mean_b = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut ssa = 0.0;
    let mut ssb = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        let dx = x - mean_a;
        let dy = y - mean_b;
        cov += dx * dy;
        ssa += dx * dx;
        ssb += dy * dy;
    }
    let denom = (ssa * ssb).sqrt();
    if denom == 0.0 {
        return Ok(Correlation {
            r: 0.0,
            degenerate: true,
        });
    }
    Ok(Correlation {
        r: (cov / denom).clamp(-1.0, 1.0),
        degenerate: false,
    })
}

/// Orthonormal principal axes of a sample, ordered by descending explained
/// variance. Components are rows; the sign convention makes each component's
/// largest-magnitude entry positive so bases are reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    pub components: Matrix,
    pub explained_variance: Vec<f64>,
}

impl PcaBasis {
    pub fn n_components(&self) -> usize {
        self.components.rows()
    }

    /// Coefficients of `x` on the first `k` components.
    pub fn project(&self, x: &[f64], k: usize) -> Vec<f64> {
        let k = k.min(self.n_components());
        (0..k)
            .map(|i| {
                self.components
                    .row(i)
                    .iter()
                    .zip(x.iter().zip(self.mean.iter()))
                    .map(|(c, (xi, mi))| c * (xi - mi))
                    .sum()
            })
            .collect()
    }

    /// Inverse of [`project`](Self::project) for the given coefficients.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut x = self.mean.clone();
        for (i, &c) in coeffs.iter().enumerate() {
            for (xi, vi) in x.iter_mut().zip(self.components.row(i).iter()) {
                *xi += c * vi;
            }
        }
        x
    }
}

/// Fit a full PCA basis from the sample covariance of `rows` (one sample per
/// row). Needs at least 2 samples.
pub fn pca_fit(rows: &Matrix) -> Result<PcaBasis> {
    let n = rows.rows();
    let d = rows.cols();
    if n < 2 {
        return Err(Error::InsufficientData {
            context: format!("pca needs at least 2 samples, got {n}"),
        });
    }
    let mut mean = vec![0.0; d];
    for r in rows.iter_rows() {
        for (m, x) in mean.iter_mut().zip(r.iter()) {
            *m += x;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    // Sample covariance (divide by n - 1).
    let mut cov = Matrix::zeros(d, d);
    for r in rows.iter_rows() {
        let centered: Vec<f64> = r.iter().zip(mean.iter()).map(|(x, m)| x - m).collect();
        cov.add_outer(&centered, &centered);
    }
    for v in cov.data_mut() {
        *v /= (n - 1) as f64;
    }

    let (mut eigvals, eigvecs) = jacobi_eigh(&cov);

    // Order by descending variance; clamp round-off negatives to zero.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eigvals[j].partial_cmp(&eigvals[i]).unwrap());
    for v in eigvals.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }

    let mut components = Matrix::zeros(d, d);
    let mut explained = vec![0.0; d];
    for (rank, &idx) in order.iter().enumerate() {
        explained[rank] = eigvals[idx];
        let row = components.row_mut(rank);
        for (c, v) in row.iter_mut().enumerate() {
            *v = eigvecs.get(c, idx);
        }
        // Deterministic sign: largest-magnitude entry positive.
        let mut max_abs = 0.0;
        let mut max_val = 0.0;
        for &v in row.iter() {
            if v.abs() > max_abs {
                max_abs = v.abs();
                max_val = v;
            }
        }
        if max_val < 0.0 {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
    }
    Ok(PcaBasis {
        mean,
        components,
        explained_variance: explained,
    })
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenvalues and an orthonormal matrix whose columns are the eigenvectors.
fn jacobi_eigh(sym: &Matrix) -> (Vec<f64>, Matrix) {
    let d = sym.rows();
    debug_assert_eq!(d, sym.cols());
    let mut a = sym.clone();
    let mut v = Matrix::zeros(d, d);
    for i in 0..d {
        v.set(i, i, 1.0);
    }
    if d < 2 {
        return ((0..d).map(|i| a.get(i, i)).collect(), v);
    }
    let frob: f64 = sym.data().iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * frob.max(f64::MIN_POSITIVE);

    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..d {
            for q in (p + 1)..d {
                off += a.get(p, q).powi(2);
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a.get(p, q);
                if apq.abs() <= tol * 1e-2 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..d {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..d {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                for k in 0..d {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    ((0..d).map(|i| a.get(i, i)).collect(), v)
}
