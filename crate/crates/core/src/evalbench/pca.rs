use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape_err, Result};

const JACOBI_TOL: f64 = 1e-10;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric `d × d` row-major matrix by cyclic
/// Jacobi rotations. Returns eigenvalues sorted descending and the matching
/// eigenvectors as rows.
pub fn symmetric_eigen(matrix: &[f64], d: usize) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    if matrix.len() != d * d {
        return shape_err(format!("{} entries for a {d}x{d} matrix", matrix.len()));
    }
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = 1.0;
    }
    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let off = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    s += a[i * d + j] * a[i * d + j];
                }
            }
        }
        s.sqrt()
    };
    for _ in 0..JACOBI_MAX_SWEEPS {
        if off(&a) <= JACOBI_TOL * frob.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..d {
            for q in p + 1..d {
                let apq = a[p * d + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[k * d + p];
                    let akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[p * d + k];
                    let aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[k * d + p];
                    let vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[j * d + j].total_cmp(&a[i * d + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * d + i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..d).map(|k| v[k * d + i]).collect())
        .collect();
    Ok((values, vectors))
}

/// Mean and (population) covariance of `n` row-major samples of width `d`.
pub fn covariance(rows: &[f64], d: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if d == 0 || rows.is_empty() || rows.len() % d != 0 {
        return shape_err(format!("{} values do not form rows of width {d}", rows.len()));
    }
    let n = rows.len() / d;
    let mut mean = vec![0.0; d];
    for r in rows.chunks_exact(d) {
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    for r in rows.chunks_exact(d) {
        for i in 0..d {
            let ci = r[i] - mean[i];
            for j in i..d {
                cov[i * d + j] += ci * (r[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            let c = cov[i * d + j] / n as f64;
            cov[i * d + j] = c;
            cov[j * d + i] = c;
        }
    }
    Ok((mean, cov))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjector {
    pub mean: Vec<f64>,
    /// `d_out` orthonormal rows of length `d`.
    pub components: Vec<Vec<f64>>,
    pub explained_variance: Vec<f64>,
}

impl PcaProjector {
    pub fn dim_in(&self) -> usize {
        self.mean.len()
    }

    pub fn dim_out(&self) -> usize {
        self.components.len()
    }

    pub fn project(&self, v: &[f64], renormalize: bool) -> Result<Vec<f64>> {
        if v.len() != self.dim_in() {
            return shape_err(format!(
                "projector expects length {}, got {}",
                self.dim_in(),
                v.len()
            ));
        }
        let mut out: Vec<f64> = self
            .components
            .iter()
            .map(|c| c.iter().zip(v).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect();
        if renormalize {
            l2_normalize(&mut out);
        }
        Ok(out)
    }

    /// Mean squared reconstruction error over row-major samples.
    pub fn reconstruction_error(&self, rows: &[f64]) -> Result<f64> {
        let d = self.dim_in();
        if rows.is_empty() || rows.len() % d != 0 {
            return shape_err(format!("{} values do not form rows of width {d}", rows.len()));
        }
        let mut total = 0.0;
        for r in rows.chunks_exact(d) {
            let z = self.project(r, false)?;
            let mut recon = self.mean.clone();
            for (zi, c) in z.iter().zip(&self.components) {
                for (x, ci) in recon.iter_mut().zip(c) {
                    *x += zi * ci;
                }
            }
            total += recon.iter().zip(r).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(total / (rows.len() / d) as f64)
    }
}

pub(crate) fn l2_normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Fits a projector onto the top `d_out` principal directions of `rows`.
pub fn fit_pca(rows: &[f64], d: usize, d_out: usize) -> Result<PcaProjector> {
    if d == 0 || rows.len() % d != 0 {
        return shape_err(format!("{} values do not form rows of width {d}", rows.len()));
    }
    let n = rows.len() / d;
    if n < 2 {
        return invalid(format!("PCA needs at least 2 samples, got {n}"));
    }
    if d_out == 0 || d_out > n.min(d) {
        return invalid(format!("d_out = {d_out} must lie in 1..={} (n = {n}, d = {d})", n.min(d)));
    }
    let (mean, cov) = covariance(rows, d)?;
    let (values, vectors) = symmetric_eigen(&cov, d)?;
    Ok(PcaProjector {
        mean,
        components: vectors.into_iter().take(d_out).collect(),
        explained_variance: values.into_iter().take(d_out).map(|v| v.max(0.0)).collect(),
    })
}
