//! Truncated HOSVD and Tucker reconstruction.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, RsvdParams};
use crate::rng::derive_seed;
use crate::tensor::{DenseTensor, Matrix};

/// Unfoldings wider than this are factored with the randomized SVD.
pub const RSVD_COLUMN_THRESHOLD: usize = 4096;

/// Tucker ranks `(R_1, …, R_d)`, one per mode.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TuckerRanks(pub Vec<usize>);

impl TuckerRanks {
    pub fn full(shape: &[usize]) -> Self {
        TuckerRanks(shape.to_vec())
    }

    pub fn validate(&self, shape: &[usize]) -> Result<()> {
        if self.0.len() != shape.len() {
            return Err(Error::SizeMismatch(format!(
                "{} ranks for a {}-way tensor",
                self.0.len(),
                shape.len()
            )));
        }
        for (&r, &d) in self.0.iter().zip(shape) {
            if r == 0 || r > d {
                return Err(Error::RankOutOfRange { rank: r, max: d });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HosvdOptions {
    /// Force the randomized SVD for every mode.
    pub use_rsvd: bool,
    pub seed: u64,
    pub oversampling: usize,
    pub power_iters: usize,
}

impl Default for HosvdOptions {
    fn default() -> Self {
        HosvdOptions {
            use_rsvd: false,
            seed: 0,
            oversampling: linalg::DEFAULT_OVERSAMPLING,
            power_iters: linalg::DEFAULT_POWER_ITERS,
        }
    }
}

impl HosvdOptions {
    fn rsvd_params(&self, mode: usize) -> RsvdParams {
        RsvdParams {
            oversampling: self.oversampling,
            power_iters: self.power_iters,
            seed: derive_seed(self.seed, mode as u64),
        }
    }
}

/// Core tensor plus one factor per mode. Modes flagged in `identity_modes`
/// carry an identity factor and were not decomposed.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerFactors {
    pub core: DenseTensor,
    pub factors: Vec<Matrix>,
    pub identity_modes: Vec<bool>,
}

impl TuckerFactors {
    pub fn ranks(&self) -> TuckerRanks {
        TuckerRanks(self.core.shape().to_vec())
    }

    pub fn validate(&self) -> Result<()> {
        if self.factors.len() != self.core.ndim() || self.identity_modes.len() != self.core.ndim() {
            return Err(Error::SizeMismatch("factor count does not match core order".into()));
        }
        for (k, u) in self.factors.iter().enumerate() {
            if u.cols() != self.core.shape()[k] || u.rows() < u.cols() {
                return Err(Error::SizeMismatch(format!(
                    "factor {k} is {}x{} but core mode has size {}",
                    u.rows(),
                    u.cols(),
                    self.core.shape()[k]
                )));
            }
        }
        Ok(())
    }
}

/// Flips each column so its largest-magnitude entry is nonnegative.
pub fn normalize_signs(u: &mut Matrix) {
    for j in 0..u.cols() {
        let mut best = 0;
        for i in 1..u.rows() {
            if u.get(i, j).abs() > u.get(best, j).abs() {
                best = i;
            }
        }
        if u.get(best, j) < 0.0 {
            for i in 0..u.rows() {
                u.set(i, j, -u.get(i, j));
            }
        }
    }
}

/// Leading `r` left singular vectors of the mode-`mode` unfolding, sign
/// normalized. Leading vectors for smaller `r` are the leading columns of this
/// result.
pub fn leading_left_vectors(t: &DenseTensor, mode: usize, r: usize, opts: &HosvdOptions) -> Result<Matrix> {
    let unfolding = t.unfold(mode)?;
    let dim = unfolding.rows();
    if r == 0 || r > dim {
        return Err(Error::RankOutOfRange { rank: r, max: dim });
    }
    // a short unfolding has fewer singular vectors than the requested rank;
    // the rest span its null complement
    let k = r.min(unfolding.cols());
    let use_rsvd = opts.use_rsvd || unfolding.cols() > RSVD_COLUMN_THRESHOLD;
    let res = if use_rsvd {
        linalg::rsvd(&unfolding, k, opts.rsvd_params(mode))?
    } else {
        linalg::svd(&unfolding)?.truncate(k)?
    };
    let mut u = linalg::extend_orthonormal(&res.u, r);
    normalize_signs(&mut u);
    Ok(u)
}

/// Contracts `t` with `Uₖᵀ` on every non-identity mode.
pub fn project_core(t: &DenseTensor, factors: &[Matrix], identity_modes: &[bool]) -> Result<DenseTensor> {
    let mut core = t.clone();
    for (k, u) in factors.iter().enumerate() {
        if !identity_modes[k] {
            core = core.mode_product(&u.transpose(), k)?;
        }
    }
    Ok(core)
}

/// Truncated HOSVD. Factors for `decompose_modes` are the leading left
/// singular vectors of the unfoldings of the original tensor; every other mode
/// keeps an identity factor at full rank regardless of `ranks`.
pub fn hosvd(
    t: &DenseTensor,
    ranks: &TuckerRanks,
    decompose_modes: &[usize],
    opts: &HosvdOptions,
) -> Result<TuckerFactors> {
    if !t.is_finite() {
        return Err(Error::NonFinite);
    }
    let d = t.ndim();
    let mut identity_modes = vec![true; d];
    for &k in decompose_modes {
        if k >= d {
            return Err(Error::ModeOutOfRange { mode: k, ndim: d });
        }
        identity_modes[k] = false;
    }
    let effective: Vec<usize> = (0..d)
        .map(|k| if identity_modes[k] { t.shape()[k] } else { ranks.0.get(k).copied().unwrap_or(0) })
        .collect();
    TuckerRanks(effective.clone()).validate(t.shape())?;

    let factors: Vec<Matrix> = (0..d)
        .into_par_iter()
        .map(|k| {
            if identity_modes[k] {
                Ok(Matrix::identity(t.shape()[k]))
            } else {
                leading_left_vectors(t, k, effective[k], opts)
            }
        })
        .collect::<Result<_>>()?;
    let core = project_core(t, &factors, &identity_modes)?;
    Ok(TuckerFactors { core, factors, identity_modes })
}

/// `core ×_1 U⁽¹⁾ ⋯ ×_d U⁽ᵈ⁾`, skipping identity modes.
pub fn reconstruct(f: &TuckerFactors) -> Result<DenseTensor> {
    f.validate()?;
    let mut out = f.core.clone();
    for (k, u) in f.factors.iter().enumerate() {
        if !f.identity_modes[k] {
            out = out.mode_product(u, k)?;
        }
    }
    Ok(out)
}

/// `‖t − reconstruct(f)‖_F / ‖t‖_F`, zero for a zero tensor reproduced exactly.
pub fn approx_error(t: &DenseTensor, f: &TuckerFactors) -> Result<f64> {
    let rec = reconstruct(f)?;
    let resid = t.sub(&rec)?.frobenius_norm();
    let nrm = t.frobenius_norm();
    if nrm == 0.0 {
        return Ok(if resid == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(resid / nrm)
}
