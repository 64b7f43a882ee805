//! Dense row-major tensors and matrices.
//!
//! Element order is row-major (last index fastest) everywhere. The mode-`k`
//! unfolding puts mode `k` on the rows and enumerates the remaining modes in
//! ascending mode order, row-major, along the columns. [`DenseTensor::fold`]
//! inverts exactly that layout.

use crate::error::{Error, Result};
use crate::rng::CounterRng;

/// Row-major dense matrix. Also serves as the carrier for tensor unfoldings.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Empty);
        }
        if rows * cols != data.len() {
            return Err(Error::SizeMismatch(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dimensions must be positive");
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn random_normal(rows: usize, cols: usize, rng: &mut CounterRng) -> Self {
        Matrix::from_fn(rows, cols, |_, _| rng.normal())
    }

    pub fn diag(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Matrix::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        Matrix { rows: self.cols, cols: self.rows, data }
    }

    /// `self · other`, accumulated in ascending inner-index order.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::SizeMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let n = other.cols;
        let mut out = vec![0.0; self.rows * n];
        for i in 0..self.rows {
            let out_row = &mut out[i * n..(i + 1) * n];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * n..(k + 1) * n];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Matrix { rows: self.rows, cols: n, data: out })
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows {
            return Err(Error::SizeMismatch(format!(
                "cannot multiply ({}x{})ᵀ by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let (m, n) = (self.cols, other.cols);
        let mut out = vec![0.0; m * n];
        for k in 0..self.rows {
            let a_row = self.row(k);
            let b_row = other.row(k);
            for (i, &a) in a_row.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let out_row = &mut out[i * n..(i + 1) * n];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(Matrix { rows: m, cols: n, data: out })
    }

    /// Leading `r` columns.
    pub fn leading_columns(&self, r: usize) -> Matrix {
        assert!(r >= 1 && r <= self.cols);
        Matrix::from_fn(self.rows, r, |i, j| self.get(i, j))
    }

    /// Leading `r` rows.
    pub fn leading_rows(&self, r: usize) -> Matrix {
        assert!(r >= 1 && r <= self.rows);
        Matrix { rows: r, cols: self.cols, data: self.data[..r * self.cols].to_vec() }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    /// Largest absolute entry of `self - other`.
    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

/// Dense d-way tensor of `f64` in row-major order. Scalars have shape `[1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.contains(&0) {
        return Err(Error::InvalidArgument(format!("invalid tensor shape {shape:?}")));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidArgument(format!("shape {shape:?} overflows")))
}

/// Row-major strides for `shape`.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n = check_shape(&shape)?;
        if n != data.len() {
            return Err(Error::SizeMismatch(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(DenseTensor { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = check_shape(&shape)?;
        Ok(DenseTensor { shape, data: vec![0.0; n] })
    }

    pub fn scalar(v: f64) -> Self {
        DenseTensor { shape: vec![1], data: vec![v] }
    }

    pub fn random_normal(shape: Vec<usize>, rng: &mut CounterRng) -> Result<Self> {
        let n = check_shape(&shape)?;
        Ok(DenseTensor { shape, data: rng.normals(n) })
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.shape.len());
        let mut off = 0;
        for (i, (&ix, &d)) in index.iter().zip(&self.shape).enumerate() {
            assert!(ix < d, "index {ix} out of bounds for mode {i} of size {d}");
            off = off * d + ix;
        }
        self.data[off]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.ndim() {
            return Err(Error::ModeOutOfRange { mode, ndim: self.ndim() });
        }
        Ok(())
    }

    /// Same flat data under a new shape.
    pub fn reshape(&self, new_shape: &[usize]) -> Result<DenseTensor> {
        self.clone().into_reshaped(new_shape)
    }

    pub fn into_reshaped(self, new_shape: &[usize]) -> Result<DenseTensor> {
        let n = check_shape(new_shape)?;
        if n != self.data.len() {
            return Err(Error::SizeMismatch(format!(
                "cannot reshape {:?} into {new_shape:?}",
                self.shape
            )));
        }
        Ok(DenseTensor { shape: new_shape.to_vec(), data: self.data })
    }

    /// Axis permutation with numpy `transpose` semantics: output mode `j` is
    /// input mode `order[j]`.
    pub fn permute(&self, order: &[usize]) -> Result<DenseTensor> {
        let d = self.ndim();
        let mut seen = vec![false; d];
        if order.len() != d {
            return Err(Error::InvalidPermutation(order.to_vec()));
        }
        for &o in order {
            if o >= d || seen[o] {
                return Err(Error::InvalidPermutation(order.to_vec()));
            }
            seen[o] = true;
        }
        let in_strides = strides(&self.shape);
        let new_shape: Vec<usize> = order.iter().map(|&o| self.shape[o]).collect();
        let src_strides: Vec<usize> = order.iter().map(|&o| in_strides[o]).collect();
        let mut data = Vec::with_capacity(self.data.len());
        let mut idx = vec![0usize; d];
        let mut off = 0usize;
        for _ in 0..self.data.len() {
            data.push(self.data[off]);
            // odometer increment over the output index
            for k in (0..d).rev() {
                idx[k] += 1;
                off += src_strides[k];
                if idx[k] < new_shape[k] {
                    break;
                }
                off -= src_strides[k] * new_shape[k];
                idx[k] = 0;
            }
        }
        Ok(DenseTensor { shape: new_shape, data })
    }

    /// Mode-`mode` matricization: `I_k × ∏_{j≠k} I_j`.
    pub fn unfold(&self, mode: usize) -> Result<Matrix> {
        self.check_mode(mode)?;
        let rows = self.shape[mode];
        let outer: usize = self.shape[..mode].iter().product();
        let inner: usize = self.shape[mode + 1..].iter().product();
        let cols = outer * inner;
        let mut data = vec![0.0; rows * cols];
        for a in 0..outer {
            for i in 0..rows {
                let src = &self.data[(a * rows + i) * inner..(a * rows + i + 1) * inner];
                data[i * cols + a * inner..i * cols + (a + 1) * inner].copy_from_slice(src);
            }
        }
        Matrix::new(rows, cols, data)
    }

    /// Inverse of [`DenseTensor::unfold`] for a tensor of the given shape.
    pub fn fold(m: &Matrix, mode: usize, shape: &[usize]) -> Result<DenseTensor> {
        check_shape(shape)?;
        if mode >= shape.len() {
            return Err(Error::ModeOutOfRange { mode, ndim: shape.len() });
        }
        let rows = shape[mode];
        let outer: usize = shape[..mode].iter().product();
        let inner: usize = shape[mode + 1..].iter().product();
        if m.rows() != rows || m.cols() != outer * inner {
            return Err(Error::SizeMismatch(format!(
                "{}x{} matrix does not fold into mode {mode} of {shape:?}",
                m.rows(),
                m.cols()
            )));
        }
        let cols = m.cols();
        let src = m.data();
        let mut data = vec![0.0; rows * cols];
        for a in 0..outer {
            for i in 0..rows {
                data[(a * rows + i) * inner..(a * rows + i + 1) * inner]
                    .copy_from_slice(&src[i * cols + a * inner..i * cols + (a + 1) * inner]);
            }
        }
        DenseTensor::new(shape.to_vec(), data)
    }

    /// k-mode product `self ×_k u`: mode `k` of size `I_k` becomes `u.rows()`.
    pub fn mode_product(&self, u: &Matrix, mode: usize) -> Result<DenseTensor> {
        self.check_mode(mode)?;
        let dim = self.shape[mode];
        if u.cols() != dim {
            return Err(Error::SizeMismatch(format!(
                "mode {mode} has size {dim} but factor is {}x{}",
                u.rows(),
                u.cols()
            )));
        }
        let outer: usize = self.shape[..mode].iter().product();
        let inner: usize = self.shape[mode + 1..].iter().product();
        let new_dim = u.rows();
        let mut out = vec![0.0; outer * new_dim * inner];
        for a in 0..outer {
            let src = &self.data[a * dim * inner..(a + 1) * dim * inner];
            let dst = &mut out[a * new_dim * inner..(a + 1) * new_dim * inner];
            for r in 0..new_dim {
                let dst_row = &mut dst[r * inner..(r + 1) * inner];
                for (i, &coef) in u.row(r).iter().enumerate() {
                    if coef == 0.0 {
                        continue;
                    }
                    for (o, x) in dst_row.iter_mut().zip(&src[i * inner..(i + 1) * inner]) {
                        *o += coef * x;
                    }
                }
            }
        }
        let mut shape = self.shape.clone();
        shape[mode] = new_dim;
        Ok(DenseTensor { shape, data: out })
    }

    /// `self ×_k uᵀ` without materializing the transpose.
    pub fn mode_product_transposed(&self, u: &Matrix, mode: usize) -> Result<DenseTensor> {
        self.mode_product(&u.transpose(), mode)
    }

    /// Full multilinear product `core ×_1 U⁽¹⁾ ×_2 U⁽²⁾ ⋯ ×_d U⁽ᵈ⁾`.
    pub fn multilinear_product(&self, factors: &[Matrix]) -> Result<DenseTensor> {
        if factors.len() != self.ndim() {
            return Err(Error::SizeMismatch(format!(
                "{} factors for a {}-way tensor",
                factors.len(),
                self.ndim()
            )));
        }
        let mut out = self.clone();
        for (k, u) in factors.iter().enumerate() {
            out = out.mode_product(u, k)?;
        }
        Ok(out)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        if self.shape != other.shape {
            return Err(Error::SizeMismatch(format!(
                "shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(DenseTensor { shape: self.shape.clone(), data })
    }

    pub fn scale(&self, c: f64) -> DenseTensor {
        DenseTensor { shape: self.shape.clone(), data: self.data.iter().map(|x| c * x).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(shape: Vec<usize>) -> DenseTensor {
        let n = shape.iter().product::<usize>();
        DenseTensor::new(shape, (1..=n).map(|x| x as f64).collect()).unwrap()
    }

    fn rand_t(shape: Vec<usize>, seed: u64) -> DenseTensor {
        DenseTensor::random_normal(shape, &mut CounterRng::new(seed)).unwrap()
    }

    #[test]
    fn reshape_relabels() {
        let t = seq(vec![2, 3]);
        let r = t.reshape(&[3, 2]).unwrap();
        assert_eq!(r.shape(), &[3, 2]);
        assert_eq!(r.data(), t.data());
        let v = seq(vec![128]).reshape(&[8, 16]).unwrap();
        assert_eq!(v.shape(), &[8, 16]);
        assert!(matches!(seq(vec![4]).reshape(&[3]), Err(Error::SizeMismatch(_))));
    }

    #[test]
    fn invalid_shapes_rejected() {
        assert!(DenseTensor::new(vec![], vec![]).is_err());
        assert!(DenseTensor::new(vec![2, 0], vec![]).is_err());
        assert!(DenseTensor::new(vec![2, 2], vec![1.0; 3]).is_err());
    }

    #[test]
    fn permute_transpose_and_inverse() {
        let t = seq(vec![2, 3]);
        let p = t.permute(&[1, 0]).unwrap();
        assert_eq!(p.shape(), &[3, 2]);
        assert_eq!(p.data(), &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
        assert_eq!(t.permute(&[0, 1]).unwrap(), t);

        let t = rand_t(vec![2, 3, 4, 5], 1);
        let order = [2, 0, 3, 1];
        let mut inv = [0; 4];
        for (j, &o) in order.iter().enumerate() {
            inv[o] = j;
        }
        let p = t.permute(&order).unwrap();
        assert_eq!(p.shape(), &[4, 2, 5, 3]);
        assert_eq!(p.get(&[3, 1, 4, 2]), t.get(&[1, 2, 3, 4]));
        assert_eq!(p.permute(&inv).unwrap(), t);
        assert!(t.permute(&[0, 0, 1, 2]).is_err());
        assert!(t.permute(&[0, 1, 2]).is_err());
        assert!(t.permute(&[0, 1, 2, 4]).is_err());
    }

    #[test]
    fn unfold_shapes_and_layout() {
        let t = seq(vec![2, 3, 4]);
        let m = t.unfold(1).unwrap();
        assert_eq!((m.rows(), m.cols()), (3, 8));
        // column index enumerates (i0, i2) row-major
        for i0 in 0..2 {
            for i1 in 0..3 {
                for i2 in 0..4 {
                    assert_eq!(m.get(i1, i0 * 4 + i2), t.get(&[i0, i1, i2]));
                }
            }
        }
        assert!(matches!(t.unfold(3), Err(Error::ModeOutOfRange { .. })));
    }

    #[test]
    fn unfold_rank_one_outer_product() {
        let a = [1.0, -2.0];
        let b = [0.5, 3.0, 1.5];
        let c = [2.0, -1.0, 4.0, 0.25];
        let mut data = Vec::new();
        for x in a {
            for y in b {
                for z in c {
                    data.push(x * y * z);
                }
            }
        }
        let t = DenseTensor::new(vec![2, 3, 4], data).unwrap();
        let m = t.unfold(0).unwrap();
        for i in 0..2 {
            for (j, (y, z)) in b.iter().flat_map(|y| c.iter().map(move |z| (y, z))).enumerate() {
                assert_eq!(m.get(i, j), a[i] * (y * z));
            }
        }
    }

    #[test]
    fn fold_edge_cases() {
        let m = Matrix::new(1, 1, vec![3.5]).unwrap();
        let t = DenseTensor::fold(&m, 0, &[1]).unwrap();
        assert_eq!(t, DenseTensor::scalar(3.5));
        let m = Matrix::zeros(3, 7);
        assert!(DenseTensor::fold(&m, 1, &[2, 3, 4]).is_err());
    }

    #[test]
    fn mode_product_identity_and_matrix_case() {
        let t = rand_t(vec![3, 4, 2], 5);
        for k in 0..3 {
            let id = Matrix::identity(t.shape()[k]);
            assert_eq!(t.mode_product(&id, k).unwrap(), t);
        }
        let g = DenseTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let u = Matrix::new(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap();
        let r = g.mode_product(&u, 0).unwrap();
        let gm = Matrix::new(2, 2, g.data().to_vec()).unwrap();
        assert_eq!(r.shape(), &[3, 2]);
        assert_eq!(r.data(), u.matmul(&gm).unwrap().data());
        assert!(g.mode_product(&Matrix::zeros(2, 3), 0).is_err());
    }

    #[test]
    fn mode_product_matches_fold_of_matmul() {
        let t = rand_t(vec![3, 4, 5], 9);
        let u = Matrix::random_normal(6, 4, &mut CounterRng::new(10));
        let direct = t.mode_product(&u, 1).unwrap();
        let via = DenseTensor::fold(&u.matmul(&t.unfold(1).unwrap()).unwrap(), 1, &[3, 6, 5]).unwrap();
        let err = direct.sub(&via).unwrap().frobenius_norm() / via.frobenius_norm();
        assert!(err < 1e-14);
    }

    #[test]
    fn frobenius_basics() {
        assert_eq!(DenseTensor::zeros(vec![3, 3]).unwrap().frobenius_norm(), 0.0);
        let mut d = vec![0.0; 12];
        d[7] = 1.0;
        assert_eq!(DenseTensor::new(vec![3, 4], d).unwrap().frobenius_norm(), 1.0);
    }

    #[test]
    fn matmul_variants_agree() {
        let mut rng = CounterRng::new(2);
        let a = Matrix::random_normal(5, 3, &mut rng);
        let b = Matrix::random_normal(5, 4, &mut rng);
        let x = a.t_matmul(&b).unwrap();
        let y = a.transpose().matmul(&b).unwrap();
        assert!(x.max_abs_diff(&y) < 1e-14);
        assert!(a.matmul(&b).is_err());
    }
}
