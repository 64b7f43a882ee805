//! Empirical variational Bayesian matrix factorization (EVBMF) rank estimates.
//!
//! For an `L × M` matrix with `L ≤ M` (wider matrices are used as-is, taller
//! ones transposed) and aspect ratio `α = L / M`, the global analytic solution
//! keeps singular values above
//!
//! ```text
//! γ̲ = sqrt(M σ² (1 + τ̲)(1 + α / τ̲)),   τ̲ = 2.5129 sqrt(α)
//! ```
//!
//! where the noise variance `σ²` minimizes the free energy
//!
//! ```text
//! Σ_{x_h ≤ x̲} (x_h − ln x_h) + Σ_{x_h > x̲} (x_h − τ_h + ln((τ_h + 1)/x_h) + α ln(τ_h/α + 1))
//!   + residual / (M σ²) + (L − H) ln σ²
//! ```
//!
//! with `x_h = γ_h² / (M σ²)`, `x̲ = (1 + τ̲)(1 + α/τ̲)` and
//! `τ_h = ½ (x_h − (1 + α) + sqrt((x_h − (1 + α))² − 4α))`.
//! `σ²` is located with a 200-point logarithmic grid followed by a
//! golden-section refinement around the best grid point.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, RsvdParams};
use crate::rng::derive_seed;
use crate::tensor::{DenseTensor, Matrix};

const TAU_COEFF: f64 = 2.5129;
const GRID_POINTS: usize = 200;
const GOLDEN_REL_TOL: f64 = 1e-6;
/// Singular values are floored at this fraction of the largest one so that
/// exactly rank-deficient matrices keep a finite free energy.
const RELATIVE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct VbmfEstimate {
    pub rank: usize,
    pub noise_variance: f64,
    pub kept_singular_values: Vec<f64>,
    pub threshold: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[derive(Default)]
pub struct VbmfOptions {
    /// Use the randomized SVD for the spectrum.
    pub use_rsvd: bool,
    pub seed: u64,
    /// Cap on the rank the caller is interested in; the randomized spectrum
    /// requests `min(rows, cols, 4 * candidate_max)` values. `None` means
    /// `rows`.
    pub candidate_max: Option<usize>,
}


fn tau(x: f64, alpha: f64) -> f64 {
    let b = x - (1.0 + alpha);
    0.5 * (b + (b * b - 4.0 * alpha).max(0.0).sqrt())
}

struct FreeEnergy<'a> {
    s2: &'a [f64],
    l: f64,
    m: f64,
    residual: f64,
    alpha: f64,
    x_bar: f64,
}

impl FreeEnergy<'_> {
    fn eval(&self, sigma2: f64) -> f64 {
        let mut obj = 0.0;
        for &s2 in self.s2 {
            let x = s2 / (self.m * sigma2);
            if x > self.x_bar {
                let t = tau(x, self.alpha);
                obj += x - t + ((t + 1.0) / x).ln() + self.alpha * (t / self.alpha + 1.0).ln();
            } else {
                obj += x - x.ln();
            }
        }
        let h = self.s2.len() as f64;
        obj + self.residual / (self.m * sigma2) + (self.l - h) * sigma2.ln()
    }
}

/// Minimizes `f` over `[lo, hi]` in log-space: grid search, then golden
/// section on the bracket around the best grid point.
fn minimize_log_interval(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let (a, b) = (lo.ln(), hi.ln());
    let grid: Vec<f64> = (0..GRID_POINTS)
        .map(|i| a + (b - a) * i as f64 / (GRID_POINTS - 1) as f64)
        .collect();
    let vals: Vec<f64> = grid.iter().map(|&g| f(g.exp())).collect();
    let best = vals
        .iter()
        .enumerate()
        .fold(0, |bi, (i, v)| if *v < vals[bi] { i } else { bi });
    let mut left = grid[best.saturating_sub(1)];
    let mut right = grid[(best + 1).min(GRID_POINTS - 1)];
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = right - g * (right - left);
    let mut d = left + g * (right - left);
    let (mut fc, mut fd) = (f(c.exp()), f(d.exp()));
    // |Δ ln σ²| < tol  <=>  relative change of σ² below ~tol
    while right - left > GOLDEN_REL_TOL {
        if fc <= fd {
            right = d;
            d = c;
            fd = fc;
            c = right - g * (right - left);
            fc = f(c.exp());
        } else {
            left = c;
            c = d;
            fc = fd;
            d = left + g * (right - left);
            fd = f(d.exp());
        }
    }
    let x = 0.5 * (left + right);
    let fx = f(x.exp());
    if fx <= vals[best] {
        x.exp()
    } else {
        grid[best].exp()
    }
}

/// Analytic EVBMF rank of `m`.
pub fn estimate_rank(m: &Matrix, opts: &VbmfOptions) -> Result<VbmfEstimate> {
    if m.data().is_empty() {
        return Err(Error::Empty);
    }
    if !m.is_finite() {
        return Err(Error::NonFinite);
    }
    let (l, big_m) = if m.rows() <= m.cols() { (m.rows(), m.cols()) } else { (m.cols(), m.rows()) };
    let total_energy: f64 = m.data().iter().map(|x| x * x).sum();
    if total_energy == 0.0 {
        return Ok(VbmfEstimate {
            rank: 0,
            noise_variance: f64::MIN_POSITIVE,
            kept_singular_values: Vec::new(),
            threshold: 0.0,
        });
    }

    let spectrum = if opts.use_rsvd {
        let cap = opts.candidate_max.unwrap_or(m.rows()).max(1);
        let h = l.min(cap.saturating_mul(4));
        linalg::rsvd(m, h, RsvdParams::with_seed(opts.seed))?.s
    } else {
        linalg::singular_values(m)?
    };
    let h = spectrum.len();
    let residual = if h < l {
        (total_energy - spectrum.iter().map(|s| s * s).sum::<f64>()).max(0.0)
    } else {
        0.0
    };

    let floor = spectrum[0] * RELATIVE_FLOOR;
    let s2: Vec<f64> = spectrum.iter().map(|s| s.max(floor).powi(2)).collect();
    let (lf, mf) = (l as f64, big_m as f64);
    let alpha = lf / mf;
    let tau_bar = TAU_COEFF * alpha.sqrt();
    let x_bar = (1.0 + tau_bar) * (1.0 + alpha / tau_bar);

    let lo = s2[h - 1] / mf;
    let hi = s2.iter().sum::<f64>() / h as f64;
    let (lo, hi) = if hi > lo { (lo, hi) } else { (hi / (4.0 * mf), 4.0 * hi) };

    let energy = FreeEnergy { s2: &s2, l: lf, m: mf, residual, alpha, x_bar };
    let sigma2 = minimize_log_interval(|v| energy.eval(v), lo, hi);
    let threshold = (mf * sigma2 * x_bar).sqrt();
    let kept: Vec<f64> = spectrum.iter().copied().filter(|&s| s > threshold).collect();
    Ok(VbmfEstimate {
        rank: kept.len(),
        noise_variance: sigma2,
        kept_singular_values: kept,
        threshold,
    })
}

/// Per-mode EVBMF ranks of the unfoldings of `t`, clamped to `[1, I_k]`.
/// Returned in the order of `modes`.
pub fn estimate_tucker_ranks(t: &DenseTensor, modes: &[usize], opts: &VbmfOptions) -> Result<Vec<usize>> {
    if modes.is_empty() {
        return Err(Error::InvalidArgument("no modes to estimate".into()));
    }
    for &k in modes {
        if k >= t.ndim() {
            return Err(Error::ModeOutOfRange { mode: k, ndim: t.ndim() });
        }
    }
    modes
        .par_iter()
        .map(|&k| {
            let mode_opts = VbmfOptions { seed: derive_seed(opts.seed, k as u64), ..*opts };
            let est = estimate_rank(&t.unfold(k)?, &mode_opts)?;
            Ok(est.rank.clamp(1, t.shape()[k]))
        })
        .collect()
}
