//! Oracles shared by the integration tests. None of these call into the
//! library's own unfolding, product or SVD code.
#![allow(dead_code)]

use hotcake::{DenseTensor, Matrix};

/// Row-major multi-index of flat offset `i`.
pub fn multi_index(mut i: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for k in (0..shape.len()).rev() {
        idx[k] = i % shape[k];
        i /= shape[k];
    }
    idx
}

/// Mode-`k` unfolding straight from the definition: row `i_k`, column the
/// row-major rank of the remaining indices in ascending mode order.
pub fn naive_unfold(t: &DenseTensor, k: usize) -> Vec<Vec<f64>> {
    let shape = t.shape();
    let rest: Vec<usize> = (0..shape.len()).filter(|&j| j != k).collect();
    let cols: usize = rest.iter().map(|&j| shape[j]).product();
    let mut out = vec![vec![0.0; cols]; shape[k]];
    for (flat, &v) in t.data().iter().enumerate() {
        let idx = multi_index(flat, shape);
        let col = rest.iter().fold(0, |acc, &j| acc * shape[j] + idx[j]);
        out[idx[k]][col] = v;
    }
    out
}

/// `(T ×_k U)[.., j, ..] = Σ_i U[j, i] T[.., i, ..]` by explicit summation.
pub fn naive_mode_product(t: &DenseTensor, u: &Matrix, k: usize) -> Vec<f64> {
    let mut shape = t.shape().to_vec();
    shape[k] = u.rows();
    let n: usize = shape.iter().product();
    let mut out = vec![0.0; n];
    for (flat, o) in out.iter_mut().enumerate() {
        let mut idx = multi_index(flat, &shape);
        let j = idx[k];
        let mut acc = 0.0;
        for i in 0..t.shape()[k] {
            idx[k] = i;
            acc += u.get(j, i) * t.get(&idx);
        }
        *o = acc;
    }
    out
}

fn gram(a: &Matrix) -> Vec<Vec<f64>> {
    let n = a.cols();
    let mut g = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            g[i][j] = (0..a.rows()).map(|r| a.get(r, i) * a.get(r, j)).sum();
        }
    }
    g
}

/// Eigenvalues of a symmetric matrix by cyclic two-sided Jacobi rotations,
/// descending.
pub fn symmetric_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        let diag: f64 = (0..n).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-30 * diag.max(1e-300) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Singular values through the eigenvalues of the smaller Gram matrix.
pub fn gram_singular_values(a: &Matrix) -> Vec<f64> {
    let m = if a.rows() < a.cols() { a.transpose() } else { a.clone() };
    symmetric_eigenvalues(gram(&m)).into_iter().map(|l| l.max(0.0).sqrt()).collect()
}

pub fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if den == 0.0 {
        num
    } else {
        num / den
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
