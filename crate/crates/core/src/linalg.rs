//! Dense helpers shared by probes, training and complexity metrics.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SvdError {
    #[error("SVD did not converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("matrix has non-finite entries")]
    NonFinite,
}

const MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition `A = U diag(σ) Vᵀ`.
///
/// `sigma` is sorted in descending order; `u` is `m × k` and `v` is `n × k`
/// with `k = min(m, n)`. Columns paired with a zero singular value are zero.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Array2<f64>,
    pub sigma: Array1<f64>,
    pub v: Array2<f64>,
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Orthogonalizes the columns of the narrower orientation of `a`, so the
/// cost is dominated by `min(m, n)²/2` column rotations per sweep.
pub fn svd(a: ArrayView2<f64>) -> Result<Svd, SvdError> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(SvdError::NonFinite);
    }
    let (m, n) = a.dim();
    if m < n {
        let t = svd_tall(a.t())?;
        return Ok(Svd { u: t.v, sigma: t.sigma, v: t.u });
    }
    svd_tall(a)
}

fn svd_tall(a: ArrayView2<f64>) -> Result<Svd, SvdError> {
    let (m, n) = a.dim();
    // Column-major working copies: row j of `work` is column j of A.
    let mut work: Array2<f64> = a.t().to_owned();
    let mut vt: Array2<f64> = Array2::eye(n);
    let eps = f64::EPSILON;

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (alpha, beta, gamma) = {
                    let cp = work.row(p);
                    let cq = work.row(q);
                    (cp.dot(&cp), cq.dot(&cq), cp.dot(&cq))
                };
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut work, p, q, c, s);
                rotate_rows(&mut vt, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SvdError::NoConvergence(MAX_SWEEPS));
    }

    let mut order: Vec<(usize, f64)> = (0..n).map(|j| (j, work.row(j).dot(&work.row(j)).sqrt())).collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1));

    let mut u = Array2::zeros((m, n));
    let mut v = Array2::zeros((n, n));
    let mut sigma = Array1::zeros(n);
    for (k, &(j, sv)) in order.iter().enumerate() {
        sigma[k] = sv;
        v.column_mut(k).assign(&vt.row(j));
        if sv > 0.0 {
            u.column_mut(k).assign(&(&work.row(j) / sv));
        }
    }
    Ok(Svd { u, sigma, v })
}

fn rotate_rows(mat: &mut Array2<f64>, p: usize, q: usize, c: f64, s: f64) {
    let cols = mat.ncols();
    for k in 0..cols {
        let xp = mat[[p, k]];
        let xq = mat[[q, k]];
        mat[[p, k]] = c * xp - s * xq;
        mat[[q, k]] = s * xp + c * xq;
    }
}

pub fn singular_values(a: ArrayView2<f64>) -> Result<Array1<f64>, SvdError> {
    svd(a).map(|s| s.sigma)
}

/// Subgradient `U Vᵀ` of the nuclear norm, restricted to nonzero singular values.
pub fn nuclear_subgradient(a: ArrayView2<f64>) -> Result<Array2<f64>, SvdError> {
    let d = svd(a)?;
    let cutoff = d.sigma.first().copied().unwrap_or(0.0) * 1e-12;
    let k = d.sigma.iter().take_while(|&&sv| sv > cutoff).count();
    Ok(d.u.slice(s![.., ..k]).dot(&d.v.slice(s![.., ..k]).t()))
}

/// Singular value soft-thresholding: the proximal operator of `tau · ‖·‖_*`.
pub fn shrink_singular_values(a: ArrayView2<f64>, tau: f64) -> Result<Array2<f64>, SvdError> {
    let d = svd(a)?;
    let shrunk = d.sigma.mapv(|sv| (sv - tau).max(0.0));
    let us = &d.u * &shrunk.insert_axis(Axis(0));
    Ok(us.dot(&d.v.t()))
}

/// Appends a column of ones (the bias pad `[h; 1]`).
pub fn pad_ones(x: ArrayView2<f64>) -> Array2<f64> {
    let (n, d) = x.dim();
    let mut out = Array2::ones((n, d + 1));
    out.slice_mut(s![.., ..d]).assign(&x);
    out
}

/// Row-wise softmax in place. Entries equal to `-inf` receive probability 0.
pub fn softmax_rows(logits: &mut Array2<f64>) {
    for mut row in logits.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
}

/// Row-wise log-sum-exp.
pub fn logsumexp_rows(logits: &Array2<f64>) -> Array1<f64> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let max = row.fold(f64::NEG_INFINITY, |m, &x| m.max(x));
            max + row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln()
        })
        .collect()
}

pub fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = i;
        }
    }
    best
}

pub fn frobenius(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}
