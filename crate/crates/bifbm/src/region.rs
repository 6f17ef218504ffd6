//! Numerical exploration of the (H, K) plane: lattice scans of Gram PSD
//! verdicts, bisection for the critical K at fixed H, and the trend of
//! 2H·K along the estimated boundary.
//!
//! Every estimate is relative to its time grid. A finite Gram matrix can
//! prove NotPSD but can only ever fail to disprove PSD, so brackets are
//! evidence, not theorems.

use crate::gram::{build_gram, min_eigenvalue, psd_check, LinalgError, Verdict};
use crate::grid::{GridError, TimeGrid};
use crate::kernels::{KernelError, KernelSpec};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegionError {
    #[error("invalid region parameter: {0}")]
    InvalidParameter(String),
    #[error("no transition detected on this grid for H = {h}: every K up to {k_max} is PSD")]
    NoTransition { h: f64, k_max: f64 },
    #[error(
        "the scan floor K = 1/(2H) is not PSD on this grid for H = {h} \
         (min eigenvalue {min_eigenvalue:e}); no bracket can be established. \
         For H < 0.25 the floor exceeds K = 2 and lies outside the known-PSD region; \
         otherwise the floor is guaranteed PSD and rel_tol is too tight for this grid"
    )]
    FloorNotPsd { h: f64, min_eigenvalue: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// The default probe grid: 24 geometric points across [2^-6, 2^6] for
/// local structure, plus t = 10^3 so that kernels violating the necessary
/// condition K <= 1/H reveal themselves (the violation only shows at
/// large times).
pub fn default_exploration_grid() -> TimeGrid {
    let mut times = TimeGrid::geometric(0.015625, 64.0, 24)
        .expect("static grid parameters")
        .times()
        .to_vec();
    times.push(1_000.0);
    TimeGrid::new(times).expect("static grid parameters")
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionScan {
    pub h_values: Vec<f64>,
    pub k_values: Vec<f64>,
    pub grid: TimeGrid,
    /// `min_eigs[i][j]` is the smallest Gram eigenvalue at
    /// `(h_values[i], k_values[j])`; NaN marks a cell whose linear algebra
    /// failed.
    pub min_eigs: Vec<Vec<f64>>,
    /// `None` marks a failed cell.
    pub verdicts: Vec<Vec<Option<Verdict>>>,
}

fn lattice(range: (f64, f64), steps: usize) -> Vec<f64> {
    let (lo, hi) = range;
    let d = (hi - lo) / (steps - 1) as f64;
    (0..steps).map(|i| lo + d * i as f64).collect()
}

/// Evaluates the PSD verdict of the bifractional Gram matrix on an
/// inclusive lattice over `h_range x k_range`. Cells run in parallel;
/// a numeric failure marks its cell and the scan continues.
pub fn scan_region(
    h_range: (f64, f64),
    k_range: (f64, f64),
    steps: (usize, usize),
    grid: &TimeGrid,
    rel_tol: f64,
) -> Result<RegionScan, RegionError> {
    for (name, (lo, hi)) in [("H", h_range), ("K", k_range)] {
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(RegionError::InvalidParameter(format!(
                "{name} range must satisfy 0 < lo <= hi, got ({lo}, {hi})"
            )));
        }
    }
    if steps.0 < 2 || steps.1 < 2 {
        return Err(RegionError::InvalidParameter(format!(
            "need at least 2 steps per axis, got {steps:?}"
        )));
    }
    let h_values = lattice(h_range, steps.0);
    let k_values = lattice(k_range, steps.1);

    let rows: Vec<(Vec<f64>, Vec<Option<Verdict>>)> = h_values
        .par_iter()
        .map(|&h| {
            let mut eigs = Vec::with_capacity(k_values.len());
            let mut verdicts = Vec::with_capacity(k_values.len());
            for &k in &k_values {
                let cell = KernelSpec::bif_bm(h, k)
                    .map_err(RegionError::from)
                    .and_then(|spec| {
                        psd_check(&build_gram(&spec, grid), rel_tol).map_err(RegionError::from)
                    });
                match cell {
                    Ok(report) => {
                        eigs.push(report.min_eigenvalue);
                        verdicts.push(Some(report.verdict));
                    }
                    Err(_) => {
                        eigs.push(f64::NAN);
                        verdicts.push(None);
                    }
                }
            }
            (eigs, verdicts)
        })
        .collect();

    let (min_eigs, verdicts) = rows.into_iter().unzip();
    Ok(RegionScan {
        h_values,
        k_values,
        grid: grid.clone(),
        min_eigs,
        verdicts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalKEstimate {
    pub h: f64,
    /// Largest K observed PSD.
    pub k_low: f64,
    /// Smallest K observed NotPSD.
    pub k_high: f64,
    pub grid: TimeGrid,
    pub bisection_iterations: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Transition {
    pub k_before: f64,
    pub k_after: f64,
    pub psd_before: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum CriticalKOutcome {
    /// The verdict flipped exactly once along the coarse scan; the flip
    /// was bisected down to the requested resolution.
    Bracket(CriticalKEstimate),
    /// The verdict flipped more than once (or flipped NotPSD -> PSD).
    /// Monotonicity in K is plausible but unproven, so instead of
    /// bisecting one flip arbitrarily all of them are reported.
    NonMonotone { transitions: Vec<Transition> },
}

fn is_psd(h: f64, k: f64, grid: &TimeGrid, rel_tol: f64) -> Result<(bool, f64), RegionError> {
    let spec = KernelSpec::bif_bm(h, k)?;
    let report = psd_check(&build_gram(&spec, grid), rel_tol)?;
    Ok((report.verdict == Verdict::Psd, report.min_eigenvalue))
}

/// Estimates the K where the Gram matrix on this grid stops being PSD for
/// fixed `h`: a coarse scan upward from the guaranteed-PSD floor
/// `K = 1/(2H)` in steps of 0.02 up to `1/H + 0.1`, then bisection of the
/// single PSD -> NotPSD flip until the bracket is at most `resolution`.
pub fn critical_k(
    h: f64,
    grid: &TimeGrid,
    resolution: f64,
    rel_tol: f64,
) -> Result<CriticalKOutcome, RegionError> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(RegionError::InvalidParameter(format!(
            "H must be positive, got {h}"
        )));
    }
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(RegionError::InvalidParameter(format!(
            "resolution must be positive, got {resolution}"
        )));
    }
    let floor = 1.0 / (2.0 * h);
    let cap = 1.0 / h + 0.1;
    let mut ks = Vec::new();
    let mut k = floor;
    while k < cap {
        ks.push(k);
        k += 0.02;
    }
    ks.push(cap);

    let flags: Vec<(bool, f64)> = ks
        .par_iter()
        .map(|&k| is_psd(h, k, grid, rel_tol))
        .collect::<Result<_, _>>()?;

    if !flags[0].0 {
        return Err(RegionError::FloorNotPsd {
            h,
            min_eigenvalue: flags[0].1,
        });
    }
    let transitions: Vec<Transition> = ks
        .windows(2)
        .zip(flags.windows(2))
        .filter(|(_, f)| f[0].0 != f[1].0)
        .map(|(w, f)| Transition {
            k_before: w[0],
            k_after: w[1],
            psd_before: f[0].0,
        })
        .collect();

    match transitions.len() {
        0 => Err(RegionError::NoTransition { h, k_max: cap }),
        1 if transitions[0].psd_before => {
            let mut lo = transitions[0].k_before;
            let mut hi = transitions[0].k_after;
            let mut iterations = 0u32;
            while hi - lo > resolution {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    // Bracket reached floating point resolution.
                    break;
                }
                if is_psd(h, mid, grid, rel_tol)?.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
                iterations += 1;
            }
            Ok(CriticalKOutcome::Bracket(CriticalKEstimate {
                h,
                k_low: lo,
                k_high: hi,
                grid: grid.clone(),
                bisection_iterations: iterations,
            }))
        }
        _ => Ok(CriticalKOutcome::NonMonotone { transitions }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendPoint {
    pub h: f64,
    /// Midpoint of the critical bracket, when one was found.
    pub k_mid: Option<f64>,
    /// The quantity whose large-H trend is of interest.
    pub two_h_k_mid: Option<f64>,
    /// Why `k_mid` is absent, when it is.
    pub note: Option<String>,
}

/// Critical-K trend along an increasing list of H values above 1. Each H
/// is processed independently (in parallel); an H whose scan finds no
/// clean bracket contributes a note instead of aborting the trend. The
/// output is observational: no verdict is attached to the trend itself.
pub fn hk_trend(
    h_list: &[f64],
    grid: &TimeGrid,
    resolution: f64,
    rel_tol: f64,
) -> Result<Vec<TrendPoint>, RegionError> {
    if h_list.is_empty() {
        return Err(RegionError::InvalidParameter("H list must be nonempty".into()));
    }
    if h_list.iter().any(|&h| !(h > 1.0)) {
        return Err(RegionError::InvalidParameter(format!(
            "every H in the trend must exceed 1, got {h_list:?}"
        )));
    }
    if h_list.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(RegionError::InvalidParameter(format!(
            "H list must be strictly increasing, got {h_list:?}"
        )));
    }
    h_list
        .par_iter()
        .map(|&h| {
            let point = match critical_k(h, grid, resolution, rel_tol) {
                Ok(CriticalKOutcome::Bracket(est)) => {
                    let k_mid = 0.5 * (est.k_low + est.k_high);
                    TrendPoint {
                        h,
                        k_mid: Some(k_mid),
                        two_h_k_mid: Some(2.0 * h * k_mid),
                        note: None,
                    }
                }
                Ok(CriticalKOutcome::NonMonotone { transitions }) => TrendPoint {
                    h,
                    k_mid: None,
                    two_h_k_mid: None,
                    note: Some(format!(
                        "verdicts along K are not monotone on this grid ({} transitions)",
                        transitions.len()
                    )),
                },
                Err(RegionError::NoTransition { k_max, .. }) => TrendPoint {
                    h,
                    k_mid: None,
                    two_h_k_mid: None,
                    note: Some(format!(
                        "no transition detected on this grid up to K = {k_max}"
                    )),
                },
                Err(other) => return Err(other),
            };
            Ok(point)
        })
        .collect()
}

/// Smallest Gram eigenvalue for one (H, K) cell, exposed for callers that
/// want the raw number rather than a verdict.
pub fn cell_min_eigenvalue(h: f64, k: f64, grid: &TimeGrid) -> Result<f64, RegionError> {
    let spec = KernelSpec::bif_bm(h, k)?;
    Ok(min_eigenvalue(&build_gram(&spec, grid))?)
}
