//! Gram matrices of a kernel on a time grid, with eigenvalue-based PSD
//! verdicts and a jittered Cholesky factorization for sampling.

use crate::grid::TimeGrid;
use crate::kernels::KernelSpec;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Relative eigenvalue tolerance used when none is given: a matrix passes
/// when its smallest eigenvalue is no worse than `-1e-10` times the scale.
pub const DEFAULT_PSD_REL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix entry ({row}, {col}) is not finite: {value}")]
    NonFinite { row: usize, col: usize, value: f64 },
    #[error("tolerance must be finite and nonnegative, got {0}")]
    BadTolerance(f64),
    #[error("jitter schedule must start at 0 and strictly increase, got {0:?}")]
    BadJitterSchedule(Vec<f64>),
    #[error(
        "matrix is not positive semidefinite within the jitter schedule \
         (min eigenvalue {min_eigenvalue:.6e}, scale {scale:.6e})"
    )]
    NotPsd { min_eigenvalue: f64, scale: f64 },
}

/// A kernel evaluated on the full grid-by-grid lattice. Symmetric by
/// construction since kernel evaluation is bitwise symmetric.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    spec: KernelSpec,
    grid: TimeGrid,
    values: DMatrix<f64>,
}

impl GramMatrix {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    /// Largest diagonal entry, the size reference for every relative
    /// tolerance in this module. Zero only for the degenerate grid `{0}`.
    pub fn scale(&self) -> f64 {
        self.values.diagonal().iter().fold(0.0f64, |m, &d| m.max(d))
    }
}

/// Evaluates the kernel at every pair of grid times. Entries are
/// independent, so rows are filled in parallel; the result does not depend
/// on how the work is split.
pub fn build_gram(spec: &KernelSpec, grid: &TimeGrid) -> GramMatrix {
    let times = grid.times();
    let n = times.len();
    let mut data = vec![0.0f64; n * n];
    data.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let ti = times[i];
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = spec.eval(ti, times[j]);
        }
    });
    GramMatrix {
        spec: spec.clone(),
        grid: grid.clone(),
        values: DMatrix::from_row_slice(n, n, &data),
    }
}

fn check_finite(m: &DMatrix<f64>) -> Result<(), LinalgError> {
    for row in 0..m.nrows() {
        for col in 0..m.ncols() {
            let value = m[(row, col)];
            if !value.is_finite() {
                return Err(LinalgError::NonFinite { row, col, value });
            }
        }
    }
    Ok(())
}

/// Smallest eigenvalue of a symmetric matrix, via a full symmetric
/// eigendecomposition. Input must be finite; symmetry is the caller's
/// contract.
pub fn symmetric_min_eigenvalue(m: &DMatrix<f64>) -> Result<f64, LinalgError> {
    check_finite(m)?;
    let eigen = m.clone().symmetric_eigen();
    Ok(eigen.eigenvalues.iter().fold(f64::INFINITY, |a, &b| a.min(b)))
}

/// Smallest eigenvalue of a Gram matrix.
pub fn min_eigenvalue(gram: &GramMatrix) -> Result<f64, LinalgError> {
    symmetric_min_eigenvalue(gram.values())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    #[serde(rename = "PSD")]
    Psd,
    #[serde(rename = "NotPSD")]
    NotPsd,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Psd => "PSD",
            Verdict::NotPsd => "NotPSD",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PsdReport {
    pub min_eigenvalue: f64,
    pub scale: f64,
    pub rel_tol: f64,
    pub verdict: Verdict,
}

/// Declares the Gram matrix PSD when its smallest eigenvalue is at least
/// `-rel_tol * max(scale, 1)`, where scale is the largest diagonal entry.
/// The `max(., 1)` floor keeps the test meaningful for matrices whose
/// entries are far below 1.
pub fn psd_check(gram: &GramMatrix, rel_tol: f64) -> Result<PsdReport, LinalgError> {
    if !(rel_tol >= 0.0) || !rel_tol.is_finite() {
        return Err(LinalgError::BadTolerance(rel_tol));
    }
    let min_eig = min_eigenvalue(gram)?;
    let scale = gram.scale();
    let verdict = if min_eig >= -rel_tol * scale.max(1.0) {
        Verdict::Psd
    } else {
        Verdict::NotPsd
    };
    Ok(PsdReport {
        min_eigenvalue: min_eig,
        scale,
        rel_tol,
        verdict,
    })
}

#[derive(Debug, Clone)]
pub struct CholeskyPsd {
    /// Lower-triangular factor with `L L^T = G + jitter * I`.
    pub l: DMatrix<f64>,
    /// The diagonal shift that made the factorization succeed; 0 when the
    /// plain matrix factors.
    pub applied_jitter: f64,
}

/// The escalation ladder tried by [`cholesky_psd`] when given no schedule:
/// `{0, 1e-14, 1e-12, 1e-10}` times `max(scale, 1)`.
pub fn default_jitter_schedule(scale: f64) -> Vec<f64> {
    let s = scale.max(1.0);
    vec![0.0, 1e-14 * s, 1e-12 * s, 1e-10 * s]
}

/// Cholesky factorization that tolerates eigenvalues a hair below zero by
/// retrying with increasing diagonal jitter. The schedule must start at 0
/// (the untouched matrix is always tried first) and strictly increase.
/// Exhausting it means the matrix is genuinely not PSD at working
/// precision; the error carries the smallest eigenvalue as evidence.
pub fn cholesky_psd(gram: &GramMatrix, schedule: &[f64]) -> Result<CholeskyPsd, LinalgError> {
    let valid = !schedule.is_empty()
        && schedule[0] == 0.0
        && schedule.iter().all(|j| j.is_finite())
        && schedule.windows(2).all(|w| w[0] < w[1]);
    if !valid {
        return Err(LinalgError::BadJitterSchedule(schedule.to_vec()));
    }
    check_finite(gram.values())?;
    for &jitter in schedule {
        let mut shifted = gram.values().clone();
        if jitter > 0.0 {
            for i in 0..shifted.nrows() {
                shifted[(i, i)] += jitter;
            }
        }
        if let Some(chol) = nalgebra::Cholesky::new(shifted) {
            return Ok(CholeskyPsd {
                l: chol.l(),
                applied_jitter: jitter,
            });
        }
    }
    let min_eig = min_eigenvalue(gram)?;
    Err(LinalgError::NotPsd {
        min_eigenvalue: min_eig,
        scale: gram.scale(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;

    fn grid(times: &[f64]) -> TimeGrid {
        TimeGrid::new(times.to_vec()).unwrap()
    }

    #[test]
    fn min_kernel_gram_and_factor_are_exact() {
        let g = build_gram(&KernelSpec::min_kernel(), &grid(&[1.0, 2.0, 3.0]));
        let want = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 1.0, 2.0, 3.0],
        );
        assert_eq!(g.values(), &want);
        assert_eq!(g.scale(), 3.0);

        let f = cholesky_psd(&g, &default_jitter_schedule(g.scale())).unwrap();
        assert_eq!(f.applied_jitter, 0.0);
        let want_l = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0],
        );
        assert_eq!(f.l, want_l, "factor of the min kernel is all ones");
    }

    #[test]
    fn gram_is_symmetric_bitwise() {
        let spec = KernelSpec::bif_bm(1.2, 0.4).unwrap();
        let g = build_gram(&spec, &TimeGrid::geometric(0.015625, 64.0, 24).unwrap());
        let v = g.values();
        for i in 0..v.nrows() {
            for j in 0..v.ncols() {
                assert_eq!(v[(i, j)].to_bits(), v[(j, i)].to_bits());
            }
        }
    }

    #[test]
    fn q_gamma_above_one_fails_psd() {
        // Frozen reference: min eigenvalue of the Q_{1.5} Gram on {1, 2}.
        let spec = KernelSpec::q_gamma(1.5).unwrap();
        let g = build_gram(&spec, &grid(&[1.0, 2.0]));
        let min_eig = min_eigenvalue(&g).unwrap();
        assert!((min_eig - (-0.130_030_109_045_389_43)).abs() < 1e-12, "got {min_eig}");

        let report = psd_check(&g, DEFAULT_PSD_REL_TOL).unwrap();
        assert_eq!(report.verdict, Verdict::NotPsd);
        assert!(cholesky_psd(&g, &default_jitter_schedule(g.scale())).is_err());
    }

    #[test]
    fn theorem_region_gram_passes() {
        let spec = KernelSpec::bif_bm(2.0, 0.25).unwrap();
        let g = build_gram(&spec, &TimeGrid::geometric(0.015625, 64.0, 24).unwrap());
        let report = psd_check(&g, DEFAULT_PSD_REL_TOL).unwrap();
        assert_eq!(report.verdict, Verdict::Psd);
        let f = cholesky_psd(&g, &default_jitter_schedule(g.scale())).unwrap();
        // Factor must reproduce the (jittered) matrix.
        let reconstructed = &f.l * f.l.transpose();
        let mut target = g.values().clone();
        for i in 0..target.nrows() {
            target[(i, i)] += f.applied_jitter;
        }
        let max_err = (&reconstructed - &target).abs().max();
        assert!(max_err <= 1e-10 * g.scale(), "reconstruction error {max_err}");
    }

    #[test]
    fn jitter_schedule_is_validated() {
        let g = build_gram(&KernelSpec::min_kernel(), &grid(&[1.0, 2.0]));
        assert!(cholesky_psd(&g, &[]).is_err());
        assert!(cholesky_psd(&g, &[1e-12]).is_err(), "must start at 0");
        assert!(cholesky_psd(&g, &[0.0, 1e-10, 1e-12]).is_err(), "must increase");
        assert!(cholesky_psd(&g, &[0.0]).is_ok());
    }

    #[test]
    fn bad_tolerance_is_rejected() {
        let g = build_gram(&KernelSpec::min_kernel(), &grid(&[1.0]));
        assert!(psd_check(&g, -1e-3).is_err());
        assert!(psd_check(&g, f64::NAN).is_err());
    }

    #[test]
    fn eigenvalues_shift_under_jitter() {
        // min_eig(G + eps I) = min_eig(G) + eps for a symmetric matrix.
        let spec = KernelSpec::fbm(0.8).unwrap();
        let g = build_gram(&spec, &grid(&[0.5, 1.0, 1.5, 2.0]));
        let base = min_eigenvalue(&g).unwrap();
        let eps = 1e-6;
        let mut shifted = g.values().clone();
        for i in 0..4 {
            shifted[(i, i)] += eps;
        }
        let moved = symmetric_min_eigenvalue(&shifted).unwrap();
        assert!((moved - base - eps).abs() < 1e-12);
    }
}
