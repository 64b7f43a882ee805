//! Reference convolution engine.
//!
//! Feature maps are channel-last `[H, W, C]`; kernels are `[D_h, D_w, C_in,
//! C_out]`. Convolution is cross-correlation (no kernel flip) with symmetric
//! zero padding and no bias.

use crate::error::{Error, Result};
use crate::hotcake::{ConvSpec, DecomposedLayer, KernelTensor};
use crate::rng::CounterRng;
use crate::tensor::{DenseTensor, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    tensor: DenseTensor,
}

impl FeatureMap {
    pub fn new(tensor: DenseTensor) -> Result<Self> {
        if tensor.ndim() != 3 {
            return Err(Error::SizeMismatch(format!(
                "feature map must be [H, W, C], got {:?}",
                tensor.shape()
            )));
        }
        Ok(FeatureMap { tensor })
    }

    pub fn random(h: usize, w: usize, c: usize, rng: &mut CounterRng) -> Result<Self> {
        FeatureMap::new(DenseTensor::random_normal(vec![h, w, c], rng)?)
    }

    pub fn tensor(&self) -> &DenseTensor {
        &self.tensor
    }

    pub fn into_tensor(self) -> DenseTensor {
        self.tensor
    }

    pub fn height(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.tensor.shape()[2]
    }
}

/// Output spatial size `⌊(H + 2p − D)/s⌋ + 1` per axis.
pub fn output_size(h: usize, w: usize, spec: &ConvSpec) -> Result<(usize, usize)> {
    let axis = |n: usize, d: usize, s: usize, p: usize| {
        let padded = n + 2 * p;
        if padded < d {
            Err(Error::SizeMismatch(format!(
                "input extent {n} with padding {p} is smaller than kernel extent {d}"
            )))
        } else {
            Ok((padded - d) / s + 1)
        }
    };
    Ok((
        axis(h, spec.spatial.0, spec.stride.0, spec.padding.0)?,
        axis(w, spec.spatial.1, spec.stride.1, spec.padding.1)?,
    ))
}

pub fn conv2d(x: &FeatureMap, k: &KernelTensor) -> Result<FeatureMap> {
    let (h, w, c) = (x.height(), x.width(), x.channels());
    if c != k.in_channels() {
        return Err(Error::SizeMismatch(format!(
            "input has {c} channels, kernel expects {}",
            k.in_channels()
        )));
    }
    let spec = k.spec();
    let (oh, ow) = output_size(h, w, spec)?;
    let (dh, dw) = spec.spatial;
    let (sh, sw) = spec.stride;
    let (ph, pw) = spec.padding;
    let k2 = k.out_channels();
    let xd = x.tensor.data();
    let kd = k.tensor().data();
    let mut out = vec![0.0; oh * ow * k2];
    for oi in 0..oh {
        for oj in 0..ow {
            let dst = &mut out[(oi * ow + oj) * k2..(oi * ow + oj + 1) * k2];
            for a in 0..dh {
                let ii = (oi * sh + a) as isize - ph as isize;
                if ii < 0 || ii >= h as isize {
                    continue;
                }
                for b in 0..dw {
                    let jj = (oj * sw + b) as isize - pw as isize;
                    if jj < 0 || jj >= w as isize {
                        continue;
                    }
                    let px = &xd[(ii as usize * w + jj as usize) * c..][..c];
                    for (ci, &xv) in px.iter().enumerate() {
                        let krow = &kd[((a * dw + b) * c + ci) * k2..][..k2];
                        for (o, kv) in dst.iter_mut().zip(krow) {
                            *o += xv * kv;
                        }
                    }
                }
            }
        }
    }
    FeatureMap::new(DenseTensor::new(vec![oh, ow, k2], out)?)
}

/// Patch matrix with one row per output position and columns ordered
/// `(a, b, c)` row-major, so that `im2col(x) · reshape(K, [D_h·D_w·C, K2])`
/// is the convolution.
pub fn im2col(x: &FeatureMap, spec: &ConvSpec) -> Result<Matrix> {
    let (h, w, c) = (x.height(), x.width(), x.channels());
    let (oh, ow) = output_size(h, w, spec)?;
    let (dh, dw) = spec.spatial;
    let cols = dh * dw * c;
    let xd = x.tensor.data();
    let mut data = vec![0.0; oh * ow * cols];
    for oi in 0..oh {
        for oj in 0..ow {
            let row = &mut data[(oi * ow + oj) * cols..][..cols];
            for a in 0..dh {
                let ii = (oi * spec.stride.0 + a) as isize - spec.padding.0 as isize;
                if ii < 0 || ii >= h as isize {
                    continue;
                }
                for b in 0..dw {
                    let jj = (oj * spec.stride.1 + b) as isize - spec.padding.1 as isize;
                    if jj < 0 || jj >= w as isize {
                        continue;
                    }
                    row[(a * dw + b) * c..][..c]
                        .copy_from_slice(&xd[(ii as usize * w + jj as usize) * c..][..c]);
                }
            }
        }
    }
    Matrix::new(oh * ow, cols, data)
}

/// Convolution through the patch matrix; a second, independent path.
pub fn conv2d_im2col(x: &FeatureMap, k: &KernelTensor) -> Result<FeatureMap> {
    if x.channels() != k.in_channels() {
        return Err(Error::SizeMismatch("channel mismatch".into()));
    }
    let (oh, ow) = output_size(x.height(), x.width(), k.spec())?;
    let patches = im2col(x, k.spec())?;
    let (dh, dw) = k.spec().spatial;
    let kmat = Matrix::new(dh * dw * k.in_channels(), k.out_channels(), k.tensor().data().to_vec())?;
    let y = patches.matmul(&kmat)?;
    FeatureMap::new(DenseTensor::new(vec![oh, ow, k.out_channels()], y.into_data())?)
}

/// Runs the articulated stages of `dl`: sub-mode contractions, the spatial
/// core, then the pointwise output stage.
pub fn forward_decomposed(x: &FeatureMap, dl: &DecomposedLayer) -> Result<FeatureMap> {
    dl.validate()?;
    let branches = dl.channels.branches();
    let k1: usize = branches.iter().product();
    if x.channels() != k1 {
        return Err(Error::SizeMismatch(format!(
            "input has {} channels, decomposed layer expects {k1}",
            x.channels()
        )));
    }
    let (h, w) = (x.height(), x.width());
    let mut shape = vec![h, w];
    shape.extend_from_slice(branches);
    let mut t = x.tensor.reshape(&shape)?;
    for (i, factor) in dl.input_factors.iter().enumerate() {
        let fs = factor.shape();
        let u = Matrix::new(fs[2], fs[3], factor.data().to_vec())?;
        t = t.mode_product_transposed(&u, 2 + i)?;
    }
    let merged: usize = t.shape()[2..].iter().product();
    let z = FeatureMap::new(t.into_reshaped(&[h, w, merged])?)?;
    let z = conv2d(&z, &dl.core)?;
    let out = KernelTensor::new(dl.output_factor.clone(), ConvSpec::pointwise())?;
    conv2d(&z, &out)
}
