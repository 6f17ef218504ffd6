//! Exact Gaussian path sampling: dense Cholesky sampling for any PSD
//! kernel, a Brownian increment sampler, and the two decomposition
//! samplers that build bifractional and fractional paths out of simpler
//! independent pieces.
//!
//! Randomness is counter based. Each path owns a SplitMix64-style stream
//! whose state is derived from (master seed, path index), and each summand
//! of a decomposition runs under an independently derived component seed.
//! Identical inputs therefore give bitwise identical output no matter how
//! many rayon threads participate, because every parallel work item is a
//! whole path and cross-path reductions are done serially in path order.

use crate::gram::{build_gram, cholesky_psd, default_jitter_schedule, LinalgError};
use crate::grid::{GridError, TimeGrid};
use crate::kernels::{classify_params, KernelError, KernelSpec, RegionLabel};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SampleError {
    #[error("invalid sampling parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer; the whole counter-based scheme reduces to this
/// one bijection.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Master seed plus the derivation rules for per-path and per-component
/// substreams. The derivation is part of the output contract: the k-th
/// raw draw of path i under component c is a pure function of
/// (master_seed, c, i, k) and is stable across releases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SeedSpec {
    pub master_seed: u64,
}

impl SeedSpec {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed }
    }

    /// Independent seed for one summand of a decomposition. Tags are
    /// small integers fixed by the caller (1, 2, ...).
    pub fn component(&self, tag: u64) -> SeedSpec {
        SeedSpec::new(mix64(
            self.master_seed ^ tag.wrapping_mul(0xD6E8_FEB8_6659_FD93),
        ))
    }

    /// Variate stream for one path.
    pub fn path_stream(&self, path_index: u64) -> NormalStream {
        NormalStream {
            state: mix64(
                self.master_seed
                    .wrapping_add(path_index.wrapping_mul(GOLDEN_GAMMA)),
            ),
            spare: None,
        }
    }
}

/// Standard normal generator over a SplitMix64 counter stream, using the
/// Marsaglia polar transform. The transform is pinned: changing it would
/// silently change every sampled path for a given seed.
#[derive(Debug, Clone)]
pub struct NormalStream {
    state: u64,
    spare: Option<f64>,
}

impl NormalStream {
    fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform on the open interval (0, 1), 53 bits of randomness.
    fn next_uniform(&mut self) -> f64 {
        ((self.next_u64() >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0)
    }

    pub fn next_normal(&mut self) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        loop {
            let u = 2.0 * self.next_uniform() - 1.0;
            let v = 2.0 * self.next_uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let scale = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * scale);
                return u * scale;
            }
        }
    }
}

/// A batch of sampled paths, stored row major (one row per path), together
/// with everything needed to reproduce it.
#[derive(Debug, Clone)]
pub struct SamplePaths {
    spec: KernelSpec,
    grid: TimeGrid,
    n_paths: usize,
    master_seed: u64,
    applied_jitter: f64,
    values: Vec<f64>,
}

impl SamplePaths {
    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Diagonal jitter the Cholesky step needed, 0 for a cleanly PSD Gram.
    pub fn applied_jitter(&self) -> f64 {
        self.applied_jitter
    }

    pub fn path(&self, index: usize) -> &[f64] {
        let w = self.grid.len();
        &self.values[index * w..(index + 1) * w]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn require_paths(n_paths: usize) -> Result<(), SampleError> {
    if n_paths == 0 {
        return Err(SampleError::InvalidParameter(
            "n_paths must be at least 1".into(),
        ));
    }
    Ok(())
}

/// Samples exact Gaussian paths with covariance `spec` on `grid` by dense
/// Cholesky factorization. A leading time-zero grid point is handled by
/// factoring the remaining rows and pinning the first coordinate to 0,
/// since every kernel in this crate vanishes on the zero row.
pub fn sample_gaussian(
    spec: &KernelSpec,
    grid: &TimeGrid,
    n_paths: usize,
    seed: SeedSpec,
) -> Result<SamplePaths, SampleError> {
    require_paths(n_paths)?;
    let times = grid.times();
    let n_times = times.len();
    let skip = usize::from(grid.starts_at_origin());
    let n_active = n_times - skip;

    let (factor, applied_jitter) = if n_active == 0 {
        (None, 0.0)
    } else {
        let sub = TimeGrid::new(times[skip..].to_vec())?;
        let gram = build_gram(spec, &sub);
        let chol = cholesky_psd(&gram, &default_jitter_schedule(gram.scale()))?;
        (Some(chol.l), chol.applied_jitter)
    };

    let mut values = vec![0.0f64; n_paths * n_times];
    values
        .par_chunks_mut(n_times)
        .enumerate()
        .for_each(|(path_index, row)| {
            let mut stream = seed.path_stream(path_index as u64);
            if let Some(l) = &factor {
                let z: Vec<f64> = (0..n_active).map(|_| stream.next_normal()).collect();
                // y = L z, swept by columns so the inner loop walks
                // contiguous memory.
                let data = l.as_slice();
                let y = &mut row[skip..];
                for (c, &zc) in z.iter().enumerate() {
                    let col = &data[c * n_active..(c + 1) * n_active];
                    for r in c..n_active {
                        y[r] += col[r] * zc;
                    }
                }
            }
        });

    Ok(SamplePaths {
        spec: spec.clone(),
        grid: grid.clone(),
        n_paths,
        master_seed: seed.master_seed,
        applied_jitter,
        values,
    })
}

/// Samples standard Brownian motion by independent increments. Linear in
/// the grid size, so it stays usable where a dense factorization is not.
pub fn sample_brownian(
    grid: &TimeGrid,
    n_paths: usize,
    seed: SeedSpec,
) -> Result<SamplePaths, SampleError> {
    require_paths(n_paths)?;
    let times = grid.times();
    let n_times = times.len();
    let mut values = vec![0.0f64; n_paths * n_times];
    values
        .par_chunks_mut(n_times)
        .enumerate()
        .for_each(|(path_index, row)| {
            let mut stream = seed.path_stream(path_index as u64);
            let mut level = 0.0;
            let mut prev = 0.0;
            for (idx, &t) in times.iter().enumerate() {
                let dt = t - prev;
                if dt > 0.0 {
                    level += dt.sqrt() * stream.next_normal();
                }
                row[idx] = level;
                prev = t;
            }
        });
    Ok(SamplePaths {
        spec: KernelSpec::min_kernel(),
        grid: grid.clone(),
        n_paths,
        master_seed: seed.master_seed,
        applied_jitter: 0.0,
        values,
    })
}

/// Samples bifractional Brownian motion as the sum of two independent
/// Gaussian processes: a time-changed `C_K` component and a `Q_{2HK}`
/// component, each scaled by `2^{-K}`. Valid exactly on the parameter
/// region where both summands are PSD (`0 < K <= 1` and `2HK <= 1`).
pub fn sample_bifbm_sum(
    hurst: f64,
    k: f64,
    grid: &TimeGrid,
    n_paths: usize,
    seed: SeedSpec,
) -> Result<SamplePaths, SampleError> {
    require_paths(n_paths)?;
    let verdict = classify_params(hurst, k)?;
    if verdict.label != RegionLabel::TheoremRegion {
        return Err(SampleError::InvalidParameter(format!(
            "sum decomposition needs 0 < K <= 1 and 2HK <= 1, got H = {hurst}, K = {k} \
             ({})",
            verdict.label
        )));
    }
    let weight = (-k).exp2();
    let c_part = KernelSpec::scale(
        KernelSpec::time_change(KernelSpec::c_gamma(k)?, 2.0 * hurst)?,
        weight,
    )?;
    let q_part = KernelSpec::scale(KernelSpec::q_gamma(2.0 * hurst * k)?, weight)?;

    let first = sample_gaussian(&c_part, grid, n_paths, seed.component(1))?;
    let second = sample_gaussian(&q_part, grid, n_paths, seed.component(2))?;

    let values: Vec<f64> = first
        .values
        .iter()
        .zip(&second.values)
        .map(|(a, b)| a + b)
        .collect();
    Ok(SamplePaths {
        spec: KernelSpec::bif_bm(hurst, k)?,
        grid: grid.clone(),
        n_paths,
        master_seed: seed.master_seed,
        applied_jitter: first.applied_jitter.max(second.applied_jitter),
        values,
    })
}

/// Samples fractional Brownian motion with `H <= 1/2` as
/// `(zeta + beta) / sqrt(2)`, where `zeta` has covariance `Q_{2H}` and
/// `beta` is an independent Brownian motion run in the time scale
/// `t^{2H}`.
pub fn sample_fbm_decomposed(
    hurst: f64,
    grid: &TimeGrid,
    n_paths: usize,
    seed: SeedSpec,
) -> Result<SamplePaths, SampleError> {
    require_paths(n_paths)?;
    if !(hurst > 0.0 && hurst <= 0.5) {
        return Err(SampleError::InvalidParameter(format!(
            "fbm decomposition needs H in (0, 1/2], got H = {hurst}"
        )));
    }
    let zeta = sample_gaussian(
        &KernelSpec::q_gamma(2.0 * hurst)?,
        grid,
        n_paths,
        seed.component(1),
    )?;
    let tau: Vec<f64> = grid
        .times()
        .iter()
        .map(|&t| if t == 0.0 { 0.0 } else { t.powf(2.0 * hurst) })
        .collect();
    let beta = sample_brownian(&TimeGrid::new(tau)?, n_paths, seed.component(2))?;

    let values: Vec<f64> = zeta
        .values
        .iter()
        .zip(&beta.values)
        .map(|(z, b)| (z + b) * std::f64::consts::FRAC_1_SQRT_2)
        .collect();
    Ok(SamplePaths {
        spec: KernelSpec::fbm(hurst)?,
        grid: grid.clone(),
        n_paths,
        master_seed: seed.master_seed,
        applied_jitter: zeta.applied_jitter,
        values,
    })
}

/// Mean-zero empirical covariance and its elementwise standard error.
/// Entry (i, j) averages `X(t_i) X(t_j)` over paths; the error is the
/// sample standard deviation of those products divided by `sqrt(n)`.
/// Accumulation is serial in path order so the result is independent of
/// thread count.
pub fn empirical_covariance(
    paths: &SamplePaths,
) -> Result<(DMatrix<f64>, DMatrix<f64>), SampleError> {
    let n = paths.n_paths;
    if n < 2 {
        return Err(SampleError::InvalidParameter(
            "empirical covariance needs at least 2 paths".into(),
        ));
    }
    let m = paths.grid.len();
    let mut cov = DMatrix::zeros(m, m);
    let mut se = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in i..m {
            let mut mean = 0.0;
            for p in 0..n {
                let row = paths.path(p);
                mean += row[i] * row[j];
            }
            mean /= n as f64;
            let mut ss = 0.0;
            for p in 0..n {
                let row = paths.path(p);
                let d = row[i] * row[j] - mean;
                ss += d * d;
            }
            let sd = (ss / (n - 1) as f64).sqrt();
            let err = sd / (n as f64).sqrt();
            cov[(i, j)] = mean;
            cov[(j, i)] = mean;
            se[(i, j)] = err;
            se[(j, i)] = err;
        }
    }
    Ok((cov, se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gram::build_gram;

    fn grid(times: &[f64]) -> TimeGrid {
        TimeGrid::new(times.to_vec()).unwrap()
    }

    #[test]
    fn same_seed_same_paths_bitwise() {
        let spec = KernelSpec::bif_bm(2.0, 0.25).unwrap();
        let g = grid(&[0.0, 0.5, 1.0, 2.0]);
        let a = sample_gaussian(&spec, &g, 16, SeedSpec::new(7)).unwrap();
        let b = sample_gaussian(&spec, &g, 16, SeedSpec::new(7)).unwrap();
        assert_eq!(a.values(), b.values());
        let c = sample_gaussian(&spec, &g, 16, SeedSpec::new(8)).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn result_does_not_depend_on_thread_count() {
        let spec = KernelSpec::fbm(0.3).unwrap();
        let g = TimeGrid::uniform(0.0, 1.0, 33).unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| sample_gaussian(&spec, &g, 64, SeedSpec::new(42)).unwrap())
        };
        let one = run(1);
        let four = run(4);
        assert_eq!(one.values(), four.values());
    }

    #[test]
    fn origin_column_is_exactly_zero() {
        let spec = KernelSpec::bif_bm(1.2, 0.4).unwrap();
        let g = grid(&[0.0, 1.0, 2.0]);
        let paths = sample_gaussian(&spec, &g, 50, SeedSpec::new(3)).unwrap();
        for p in 0..50 {
            assert_eq!(paths.path(p)[0], 0.0);
            assert_ne!(paths.path(p)[1], 0.0);
        }
    }

    #[test]
    fn degenerate_origin_only_grid() {
        let paths =
            sample_gaussian(&KernelSpec::min_kernel(), &grid(&[0.0]), 4, SeedSpec::new(1))
                .unwrap();
        assert_eq!(paths.values(), &[0.0; 4]);
    }

    #[test]
    fn rejects_zero_paths_and_non_psd_kernels() {
        let g = grid(&[1.0, 2.0]);
        assert!(matches!(
            sample_gaussian(&KernelSpec::min_kernel(), &g, 0, SeedSpec::new(1)),
            Err(SampleError::InvalidParameter(_))
        ));
        let bad = KernelSpec::q_gamma(1.5).unwrap();
        assert!(matches!(
            sample_gaussian(&bad, &g, 4, SeedSpec::new(1)),
            Err(SampleError::Linalg(LinalgError::NotPsd { .. }))
        ));
    }

    #[test]
    fn brownian_increments_have_unit_statistics() {
        let g = grid(&[1.0, 2.0, 3.0]);
        let n = 40_000usize;
        let paths = sample_brownian(&g, n, SeedSpec::new(11)).unwrap();
        let nf = n as f64;
        let mut mean = [0.0f64; 3];
        let mut var = [0.0f64; 3];
        let mut cross = 0.0f64;
        for p in 0..n {
            let row = paths.path(p);
            let d = [row[0], row[1] - row[0], row[2] - row[1]];
            for k in 0..3 {
                mean[k] += d[k];
                var[k] += d[k] * d[k];
            }
            cross += d[1] * d[2];
        }
        for k in 0..3 {
            mean[k] /= nf;
            var[k] = var[k] / nf - mean[k] * mean[k];
            assert!(mean[k].abs() < 5.0 / nf.sqrt(), "mean[{k}] = {}", mean[k]);
            assert!(
                (var[k] - 1.0).abs() < 5.0 * (2.0 / nf).sqrt(),
                "var[{k}] = {}",
                var[k]
            );
        }
        let corr = cross / nf - mean[1] * mean[2];
        assert!(corr.abs() < 5.0 / nf.sqrt(), "increments correlate: {corr}");
    }

    #[test]
    fn normal_stream_moments() {
        let mut stream = SeedSpec::new(5).path_stream(0);
        let n = 100_000;
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        let mut sum4 = 0.0;
        for _ in 0..n {
            let x = stream.next_normal();
            sum += x;
            sum2 += x * x;
            sum4 += x * x * x * x;
        }
        let nf = n as f64;
        assert!((sum / nf).abs() < 5.0 / nf.sqrt());
        assert!((sum2 / nf - 1.0).abs() < 5.0 * (2.0 / nf).sqrt());
        assert!((sum4 / nf - 3.0).abs() < 5.0 * (96.0 / nf).sqrt());
    }

    #[test]
    fn component_streams_are_distinct() {
        let seed = SeedSpec::new(9);
        let mut a = seed.component(1).path_stream(0);
        let mut b = seed.component(2).path_stream(0);
        let mut base = seed.path_stream(0);
        let xs: Vec<f64> = (0..8).map(|_| a.next_normal()).collect();
        let ys: Vec<f64> = (0..8).map(|_| b.next_normal()).collect();
        let zs: Vec<f64> = (0..8).map(|_| base.next_normal()).collect();
        assert_ne!(xs, ys);
        assert_ne!(xs, zs);
    }

    #[test]
    fn empirical_covariance_tracks_gram() {
        let spec = KernelSpec::bif_bm(2.0, 0.25).unwrap();
        let g = TimeGrid::geometric(0.5, 4.0, 4).unwrap();
        let n = 30_000;
        let paths = sample_gaussian(&spec, &g, n, SeedSpec::new(1234)).unwrap();
        let (cov, se) = empirical_covariance(&paths).unwrap();
        let gram = build_gram(&spec, &g);
        for i in 0..4 {
            for j in 0..4 {
                let diff = (cov[(i, j)] - gram.values()[(i, j)]).abs();
                assert!(
                    diff <= 5.0 * se[(i, j)],
                    "entry ({i}, {j}): diff {diff}, se {}",
                    se[(i, j)]
                );
            }
        }
    }

    #[test]
    fn estimate_tightens_as_paths_double() {
        let spec = KernelSpec::fbm(0.4).unwrap();
        let g = TimeGrid::geometric(0.5, 2.0, 3).unwrap();
        let gram = build_gram(&spec, &g);
        let err_at = |n: usize| {
            let paths = sample_gaussian(&spec, &g, n, SeedSpec::new(77)).unwrap();
            let (cov, _) = empirical_covariance(&paths).unwrap();
            let mut worst = 0.0f64;
            for i in 0..3 {
                for j in 0..3 {
                    worst = worst.max((cov[(i, j)] - gram.values()[(i, j)]).abs());
                }
            }
            worst
        };
        let start = err_at(2_000);
        let end = err_at(16_000);
        assert!(
            end < start,
            "8x more paths did not tighten the estimate: {start} -> {end}"
        );
    }

    #[test]
    fn bifbm_sum_requires_theorem_region() {
        let g = grid(&[0.5, 1.0]);
        assert!(sample_bifbm_sum(2.0, 0.4, &g, 2, SeedSpec::new(1)).is_err());
        assert!(sample_bifbm_sum(0.7, 1.4, &g, 2, SeedSpec::new(1)).is_err());
        assert!(sample_bifbm_sum(2.0, 0.25, &g, 2, SeedSpec::new(1)).is_ok());
    }

    #[test]
    fn fbm_decomposition_rejects_large_hurst() {
        let g = grid(&[0.5, 1.0]);
        assert!(sample_fbm_decomposed(0.7, &g, 2, SeedSpec::new(1)).is_err());
        assert!(sample_fbm_decomposed(0.5, &g, 2, SeedSpec::new(1)).is_ok());
    }

    #[test]
    fn brownian_first_point_variance_matches_t0() {
        let g = grid(&[4.0, 5.0]);
        let n = 40_000;
        let paths = sample_brownian(&g, n, SeedSpec::new(21)).unwrap();
        let mut var = 0.0;
        for p in 0..n {
            let x = paths.path(p)[0];
            var += x * x;
        }
        var /= n as f64;
        // Var X(4) = 4; standard error of the estimate is 4 sqrt(2/n).
        assert!((var - 4.0).abs() < 5.0 * 4.0 * (2.0 / n as f64).sqrt(), "var = {var}");
    }
}
