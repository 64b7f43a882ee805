//! Thin SVD (one-sided Jacobi) and randomized SVD.

use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::tensor::Matrix;

pub const DEFAULT_OVERSAMPLING: usize = 10;
pub const DEFAULT_POWER_ITERS: usize = 2;

const MAX_SWEEPS: usize = 80;

/// `m ≈ u · diag(s) · vt` with `s` nonincreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// `m × r`, orthonormal columns.
    pub u: Matrix,
    pub s: Vec<f64>,
    /// `r × n`, orthonormal rows.
    pub vt: Matrix,
}

impl SvdResult {
    pub fn rank(&self) -> usize {
        self.s.len()
    }

    /// `u · diag(s) · vt`.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, s) in self.s.iter().enumerate() {
                us.set(i, j, us.get(i, j) * s);
            }
        }
        us.matmul(&self.vt).expect("svd factors are conformant")
    }

    /// Keeps the leading `r` singular triplets.
    pub fn truncate(&self, r: usize) -> Result<SvdResult> {
        if r == 0 || r > self.rank() {
            return Err(Error::RankOutOfRange { rank: r, max: self.rank() });
        }
        Ok(SvdResult {
            u: self.u.leading_columns(r),
            s: self.s[..r].to_vec(),
            vt: self.vt.leading_rows(r),
        })
    }
}

/// Free-function form of [`SvdResult::truncate`].
pub fn truncate(res: &SvdResult, r: usize) -> Result<SvdResult> {
    res.truncate(r)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exact thin SVD with `r = min(rows, cols)`.
pub fn svd(m: &Matrix) -> Result<SvdResult> {
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }
    if m.rows() < m.cols() {
        let t = svd_tall(&m.transpose());
        return Ok(SvdResult { u: t.vt.transpose(), s: t.s, vt: t.u.transpose() });
    }
    Ok(svd_tall(m))
}

/// Singular values only, nonincreasing.
pub fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    svd(m).map(|r| r.s)
}

/// One-sided (Hestenes) Jacobi on the columns of a `rows >= cols` matrix.
fn svd_tall(a: &Matrix) -> SvdResult {
    let (rows, n) = (a.rows(), a.cols());
    let mut g: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let tol = (rows as f64).sqrt() * f64::EPSILON;

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = dot(&g[p], &g[p]);
                let beta = dot(&g[q], &g[q]);
                let gamma = dot(&g[p], &g[q]);
                if alpha == 0.0 || beta == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (gp, gq) = split_pair(&mut g, p, q);
                rotate(gp, gq, c, s);
                let (vp, vq) = split_pair(&mut v, p, q);
                rotate(vp, vq, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = g.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let s_max = norms[order[0]];

    let mut u_cols: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    let mut s = Vec::with_capacity(n);
    for &j in &order {
        let sigma = norms[j];
        if sigma > 0.0 && sigma / s_max > 1e-200 {
            u_cols.push(Some(g[j].iter().map(|x| x / sigma).collect()));
            s.push(sigma);
        } else {
            u_cols.push(None);
            s.push(0.0);
        }
    }
    let u_cols = complete_orthonormal(u_cols, rows);

    let u = Matrix::from_fn(rows, n, |i, j| u_cols[j][i]);
    let vt = Matrix::from_fn(n, n, |i, j| v[order[i]][j]);
    SvdResult { u, s, vt }
}

fn split_pair<T>(xs: &mut [T], p: usize, q: usize) -> (&mut T, &mut T) {
    debug_assert!(p < q);
    let (lo, hi) = xs.split_at_mut(q);
    (&mut lo[p], &mut hi[0])
}

fn rotate(x: &mut [f64], y: &mut [f64], c: f64, s: f64) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let (xa, yb) = (*a, *b);
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// Fills `None` slots with unit vectors orthogonal to every other column,
/// drawn from the standard basis by largest residual.
fn complete_orthonormal(cols: Vec<Option<Vec<f64>>>, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = cols.iter().flatten().cloned().collect();
    let mut out = Vec::with_capacity(cols.len());
    for c in cols {
        match c {
            Some(c) => out.push(c),
            None => {
                let mut best: Option<(f64, Vec<f64>)> = None;
                for i in 0..dim {
                    let mut e = vec![0.0; dim];
                    e[i] = 1.0;
                    for _ in 0..2 {
                        for b in &basis {
                            let proj = dot(&e, b);
                            e.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
                        }
                    }
                    let nrm = dot(&e, &e).sqrt();
                    if best.as_ref().is_none_or(|(bn, _)| nrm > *bn) {
                        best = Some((nrm, e));
                    }
                }
                let (nrm, mut e) = best.expect("dimension is positive");
                e.iter_mut().for_each(|x| *x /= nrm);
                basis.push(e.clone());
                out.push(e);
            }
        }
    }
    out
}

/// Extends orthonormal columns `u` (`m × k`) to `r ≤ m` orthonormal columns;
/// the first `k` columns are `u` unchanged.
pub fn extend_orthonormal(u: &Matrix, r: usize) -> Matrix {
    let (m, k) = (u.rows(), u.cols());
    assert!(k <= r && r <= m, "cannot extend {k} columns to {r} in dimension {m}");
    if r == k {
        return u.clone();
    }
    let cols: Vec<Option<Vec<f64>>> = (0..r).map(|j| (j < k).then(|| u.column(j))).collect();
    let cols = complete_orthonormal(cols, m);
    Matrix::from_fn(m, r, |i, j| cols[j][i])
}

/// Orthonormal basis of the column space of a `rows >= cols` matrix via
/// Householder reflections. The result always has orthonormal columns, also
/// for rank-deficient input.
pub fn orthonormal_basis(a: &Matrix) -> Matrix {
    let (m, k) = (a.rows(), a.cols());
    assert!(m >= k, "orthonormal_basis expects a tall matrix");
    let mut cols: Vec<Vec<f64>> = (0..k).map(|j| a.column(j)).collect();
    let mut reflectors: Vec<Option<Vec<f64>>> = Vec::with_capacity(k);
    for j in 0..k {
        let x = &cols[j][j..];
        let nrm = dot(x, x).sqrt();
        if nrm == 0.0 {
            reflectors.push(None);
            continue;
        }
        let alpha = if x[0] >= 0.0 { -nrm } else { nrm };
        let mut v = x.to_vec();
        v[0] -= alpha;
        let vn = dot(&v, &v).sqrt();
        if vn == 0.0 {
            reflectors.push(None);
            continue;
        }
        v.iter_mut().for_each(|e| *e /= vn);
        for col in cols.iter_mut().skip(j) {
            let tail = &mut col[j..];
            let p = 2.0 * dot(&v, tail);
            tail.iter_mut().zip(&v).for_each(|(t, vi)| *t -= p * vi);
        }
        reflectors.push(Some(v));
    }
    let mut q: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            e
        })
        .collect();
    for (j, refl) in reflectors.iter().enumerate().rev() {
        if let Some(v) = refl {
            for col in q.iter_mut() {
                let tail = &mut col[j..];
                let p = 2.0 * dot(v, tail);
                tail.iter_mut().zip(v).for_each(|(t, vi)| *t -= p * vi);
            }
        }
    }
    Matrix::from_fn(m, k, |i, j| q[j][i])
}

/// Parameters of the randomized range finder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RsvdParams {
    pub oversampling: usize,
    pub power_iters: usize,
    pub seed: u64,
}

impl Default for RsvdParams {
    fn default() -> Self {
        RsvdParams {
            oversampling: DEFAULT_OVERSAMPLING,
            power_iters: DEFAULT_POWER_ITERS,
            seed: 0,
        }
    }
}

impl RsvdParams {
    pub fn with_seed(seed: u64) -> Self {
        RsvdParams { seed, ..Default::default() }
    }
}

/// Rank-`r` randomized SVD (Gaussian sketch, `q` subspace iterations).
/// Wide matrices are handled through their transpose.
pub fn rsvd(m: &Matrix, r: usize, params: RsvdParams) -> Result<SvdResult> {
    let max = m.rows().min(m.cols());
    if r == 0 || r > max {
        return Err(Error::RankOutOfRange { rank: r, max });
    }
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }
    if m.rows() < m.cols() {
        let t = rsvd_tall(&m.transpose(), r, params)?;
        return Ok(SvdResult { u: t.vt.transpose(), s: t.s, vt: t.u.transpose() });
    }
    rsvd_tall(m, r, params)
}

fn rsvd_tall(a: &Matrix, r: usize, params: RsvdParams) -> Result<SvdResult> {
    let n = a.cols();
    let l = (r + params.oversampling).min(n);
    let mut rng = CounterRng::new(params.seed);
    let omega = Matrix::random_normal(n, l, &mut rng);
    let mut q = orthonormal_basis(&a.matmul(&omega)?);
    for _ in 0..params.power_iters {
        let z = orthonormal_basis(&a.t_matmul(&q)?);
        q = orthonormal_basis(&a.matmul(&z)?);
    }
    let b = q.t_matmul(a)?;
    let small = svd(&b)?;
    let u = q.matmul(&small.u)?;
    SvdResult { u, s: small.s, vt: small.vt }.truncate(r)
}

/// Largest entry of `|XᵀX − I|` for the columns of `x`.
pub fn orthonormality_defect(x: &Matrix) -> f64 {
    let g = x.t_matmul(x).expect("square gram");
    g.max_abs_diff(&Matrix::identity(x.cols()))
}

/// Estimate of the largest singular value by power iteration on `mᵀm`.
pub fn spectral_norm_estimate(m: &Matrix, iters: usize, seed: u64) -> f64 {
    let mut rng = CounterRng::new(seed);
    let mut v = Matrix::random_normal(m.cols(), 1, &mut rng);
    let mut sigma = 0.0;
    for _ in 0..iters {
        let nrm = v.frobenius_norm();
        if nrm == 0.0 {
            return 0.0;
        }
        let vn = Matrix::from_fn(v.rows(), 1, |i, _| v.get(i, 0) / nrm);
        let w = m.matmul(&vn).expect("conformant");
        sigma = w.frobenius_norm();
        v = m.t_matmul(&w).expect("conformant");
    }
    sigma
}
