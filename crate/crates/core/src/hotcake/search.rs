//! Neighbourhood rank search around the VBMF estimate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hotcake::HotcakeRanks;
use crate::tensor::{DenseTensor, Matrix};
use crate::tucker::{self, HosvdOptions, TuckerFactors};
use crate::vbmf::{self, VbmfOptions};

/// How rank combinations are scored. Lower is better.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    /// Relative Frobenius error among combos within the parameter budget.
    ErrorUnderBudget,
    /// Fewest parameters among combos with relative error at most the bound.
    ParamsUnderError(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    /// Odd window width per mode.
    pub diameter: usize,
    pub criterion: Criterion,
    /// Parameter cap; defaults to the parameter count of the centre combo.
    pub budget: Option<usize>,
    /// Skips the VBMF estimate and centres the window here.
    pub center: Option<HotcakeRanks>,
    pub use_rsvd: bool,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            diameter: 3,
            criterion: Criterion::ErrorUnderBudget,
            budget: None,
            center: None,
            use_rsvd: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub ranks: HotcakeRanks,
    pub params: usize,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSelection {
    pub ranks: HotcakeRanks,
    pub center: HotcakeRanks,
    pub budget: usize,
    /// False when no combo met the constraint; `ranks` is then the
    /// lowest-error combo overall.
    pub feasible: bool,
    /// Every evaluated combo, in lexicographic rank order.
    pub candidates: Vec<Candidate>,
}

/// Cartesian product of the windows `[c − h, c + h] ∩ [1, dim]`, `h =
/// (diameter − 1)/2`, in lexicographic order.
pub fn search_space(center: &[usize], dims: &[usize], diameter: usize) -> Result<Vec<Vec<usize>>> {
    if diameter == 0 || diameter.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("search diameter must be odd, got {diameter}")));
    }
    if center.len() != dims.len() {
        return Err(Error::SizeMismatch("centre and dimensions differ in length".into()));
    }
    let half = (diameter - 1) / 2;
    let windows: Vec<(usize, usize)> = center
        .iter()
        .zip(dims)
        .map(|(&c, &d)| (c.saturating_sub(half).max(1), (c + half).min(d)))
        .collect();
    if windows.iter().any(|(lo, hi)| lo > hi) {
        return Err(Error::InvalidArgument(format!("centre {center:?} lies outside {dims:?}")));
    }
    let mut out = vec![Vec::new()];
    for &(lo, hi) in &windows {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (lo..=hi).map(move |r| {
                    let mut p = prefix.clone();
                    p.push(r);
                    p
                })
            })
            .collect();
    }
    Ok(out)
}

/// Exact parameter count of the articulated chain.
pub(crate) fn chain_params(spatial: (usize, usize), branches: &[usize], k2: usize, ranks: &[usize]) -> usize {
    let (inputs, r4) = ranks.split_at(ranks.len() - 1);
    let r4 = r4[0];
    let factors: usize = branches.iter().zip(inputs).map(|(k, r)| k * r).sum();
    let core = spatial.0 * spatial.1 * inputs.iter().product::<usize>() * r4;
    factors + core + r4 * k2
}

/// Picks ranks for a reshaped `(3+l)`-way kernel `[D_h, D_w, K_11, …, K_1l,
/// K2]` by scoring every combo in the window around the centre.
pub fn select_ranks(k_new: &DenseTensor, cfg: &SearchConfig) -> Result<RankSelection> {
    let d = k_new.ndim();
    if d < 4 {
        return Err(Error::SizeMismatch(format!(
            "expected a [D_h, D_w, K_11.., K2] tensor, got {:?}",
            k_new.shape()
        )));
    }
    let shape = k_new.shape();
    let modes: Vec<usize> = (2..d).collect();
    let dims: Vec<usize> = modes.iter().map(|&k| shape[k]).collect();
    let spatial = (shape[0], shape[1]);
    let branches = &dims[..dims.len() - 1];
    let k2 = dims[dims.len() - 1];

    let center = match &cfg.center {
        Some(c) => c.to_flat(),
        None => {
            let opts = VbmfOptions { use_rsvd: cfg.use_rsvd, seed: cfg.seed, candidate_max: None };
            vbmf::estimate_tucker_ranks(k_new, &modes, &opts)?
        }
    };
    let combos = search_space(&center, &dims, cfg.diameter)?;
    let budget = cfg.budget.unwrap_or_else(|| chain_params(spatial, branches, k2, &center));

    // Factors at the largest rank in each window; smaller ranks reuse their
    // leading columns.
    let max_ranks: Vec<usize> = (0..dims.len())
        .map(|i| combos.iter().map(|c| c[i]).max().expect("non-empty search space"))
        .collect();
    let hosvd_opts = HosvdOptions { use_rsvd: cfg.use_rsvd, seed: cfg.seed, ..Default::default() };
    let max_factors: Vec<Matrix> = modes
        .par_iter()
        .zip(&max_ranks)
        .map(|(&k, &r)| tucker::leading_left_vectors(k_new, k, r, &hosvd_opts))
        .collect::<Result<_>>()?;

    let mut identity_modes = vec![false; d];
    identity_modes[0] = true;
    identity_modes[1] = true;
    let candidates: Vec<Candidate> = combos
        .par_iter()
        .map(|combo| {
            let mut factors = vec![Matrix::identity(shape[0]), Matrix::identity(shape[1])];
            factors.extend(max_factors.iter().zip(combo).map(|(u, &r)| u.leading_columns(r)));
            let core = tucker::project_core(k_new, &factors, &identity_modes)?;
            let f = TuckerFactors { core, factors, identity_modes: identity_modes.clone() };
            Ok(Candidate {
                ranks: HotcakeRanks::from_flat(combo)?,
                params: chain_params(spatial, branches, k2, combo),
                error: tucker::approx_error(k_new, &f)?,
            })
        })
        .collect::<Result<_>>()?;

    let score = |c: &Candidate| -> Option<f64> {
        match cfg.criterion {
            Criterion::ErrorUnderBudget => (c.params <= budget).then_some(c.error),
            Criterion::ParamsUnderError(max) => (c.error <= max).then_some(c.params as f64),
        }
    };
    let better = |a: (f64, &Candidate), b: (f64, &Candidate)| {
        a.0.total_cmp(&b.0)
            .then(a.1.params.cmp(&b.1.params))
            .then_with(|| a.1.ranks.to_flat().cmp(&b.1.ranks.to_flat()))
    };
    let feasible_best = candidates
        .iter()
        .filter_map(|c| score(c).map(|s| (s, c)))
        .min_by(|a, b| better(*a, *b));
    let (chosen, feasible) = match feasible_best {
        Some((_, c)) => (c, true),
        None => {
            let c = candidates
                .iter()
                .map(|c| (c.error, c))
                .min_by(|a, b| better(*a, *b))
                .expect("non-empty search space")
                .1;
            (c, false)
        }
    };
    Ok(RankSelection {
        ranks: chosen.ranks.clone(),
        center: HotcakeRanks::from_flat(&center)?,
        budget,
        feasible,
        candidates,
    })
}
