//! Structural checks on the bifractional covariance: self-similarity,
//! Lamperti stationarity, quasihelix increment bounds, the large-time
//! fractional limit, realized p-variation, and the counterexample
//! function that rules out PSD for gamma above 1.

use crate::grid::TimeGrid;
use crate::kernels::{classify_params, KernelError, KernelSpec, RegionLabel};
use crate::sampler::SamplePaths;
use serde::Serialize;
use thiserror::Error;

/// Tolerance on the self-similarity identity, which is pure algebra and
/// only sees rounding noise.
pub const SELF_SIMILARITY_TOL: f64 = 1e-12;
/// Tolerance on Lamperti stationarity; exponential round trips cost a
/// couple of digits over the raw identity.
pub const LAMPERTI_TOL: f64 = 1e-10;
/// Slack applied to the quasihelix ratio bounds.
pub const QUASIHELIX_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("invalid analysis parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("grid is not uniform: {0}")]
    NonUniformGrid(String),
    #[error("scan exhausted without a negative value for gamma = {gamma}; \
             f stays above -1e-15 down to a = 2^-60")]
    ScanExhausted { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationReport {
    pub max_abs_deviation: f64,
    /// Argument pair where the maximum was attained.
    pub argmax: (f64, f64),
    pub tolerance: f64,
    pub pass: bool,
}

impl DeviationReport {
    fn new(max_abs_deviation: f64, argmax: (f64, f64), tolerance: f64) -> Self {
        Self {
            max_abs_deviation,
            argmax,
            tolerance,
            pass: max_abs_deviation <= tolerance,
        }
    }
}

/// Measures how far the kernel is from exact self-similarity of order
/// `2HK`: the max over grid pairs of
/// `|R(a s, a t) - a^{2HK} R(s, t)|` normalized by `a^{2HK} (1 + |R(s,t)|)`.
pub fn self_similarity_deviation(
    hurst: f64,
    k: f64,
    a: f64,
    grid: &TimeGrid,
) -> Result<DeviationReport, AnalysisError> {
    if !(a > 0.0) || !a.is_finite() {
        return Err(AnalysisError::InvalidParameter(format!(
            "scaling factor must be positive, got a = {a}"
        )));
    }
    let spec = KernelSpec::bif_bm(hurst, k)?;
    let power = a.powf(2.0 * hurst * k);
    let times = grid.times();
    let mut worst = 0.0f64;
    let mut argmax = (times[0], times[0]);
    for (i, &s) in times.iter().enumerate() {
        for &t in &times[i..] {
            let base = spec.eval(s, t);
            let scaled = spec.eval(a * s, a * t);
            let dev = (scaled - power * base).abs() / (power * (1.0 + base.abs()));
            if dev > worst {
                worst = dev;
                argmax = (s, t);
            }
        }
    }
    Ok(DeviationReport::new(worst, argmax, SELF_SIMILARITY_TOL))
}

/// Largest pointwise disagreement between two kernels over all ordered
/// grid pairs, normalized by `max(1, |a|, |b|)` so one tolerance works
/// across value magnitudes. This is how the closed-form identities
/// (two-part bifractional split, the link to fbm of index HK, the
/// small-H fbm split) are checked numerically.
pub fn kernel_agreement(
    a: &KernelSpec,
    b: &KernelSpec,
    grid: &TimeGrid,
    tolerance: f64,
) -> Result<DeviationReport, AnalysisError> {
    if !(tolerance > 0.0) || !tolerance.is_finite() {
        return Err(AnalysisError::InvalidParameter(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }
    let times = grid.times();
    let mut worst = 0.0f64;
    let mut argmax = (times[0], times[0]);
    for (i, &s) in times.iter().enumerate() {
        for &t in &times[i..] {
            let va = a.eval(s, t);
            let vb = b.eval(s, t);
            let dev = (va - vb).abs() / va.abs().max(vb.abs()).max(1.0);
            if dev > worst {
                worst = dev;
                argmax = (s, t);
            }
        }
    }
    Ok(DeviationReport::new(worst, argmax, tolerance))
}

/// Covariance of the Lamperti transform `e^{-HKt} X(e^t)` of bifractional
/// Brownian motion: `e^{-HK(u+v)} R(e^u, e^v)`.
///
/// The direct product is used whenever the exponentials stay in range, so
/// checking stationarity through this function genuinely exercises the
/// original covariance; the algebraically reduced lag form is only an
/// overflow guard for extreme arguments.
pub fn lamperti_cov(hurst: f64, k: f64, u: f64, v: f64) -> Result<f64, AnalysisError> {
    let spec = KernelSpec::bif_bm(hurst, k)?;
    if !u.is_finite() || !v.is_finite() {
        return Err(AnalysisError::InvalidParameter(format!(
            "log-time arguments must be finite, got ({u}, {v})"
        )));
    }
    Ok(lamperti_cov_inner(&spec, hurst, k, u, v))
}

fn lamperti_cov_inner(spec: &KernelSpec, hurst: f64, k: f64, u: f64, v: f64) -> f64 {
    let reach = u.abs().max(v.abs());
    let direct_safe = 2.0 * hurst * reach < 600.0 && (hurst * k * (u + v)).abs() < 600.0;
    if direct_safe {
        return (-hurst * k * (u + v)).exp() * spec.eval(u.exp(), v.exp());
    }
    // Reduced lag form: 2^{-K} e^{HK tau} [(1 + e^{-2H tau})^K
    // - (1 - e^{-tau})^{2HK}], tau = |u - v|.
    let tau = (u - v).abs();
    let b1 = (k * (-2.0 * hurst * tau).exp().ln_1p()).exp_m1();
    let b2 = -((2.0 * hurst * k) * (-(-tau).exp_m1()).ln()).exp_m1();
    let bracket = b1 + b2;
    if bracket <= 0.0 {
        // Underflow at astronomically large lags; the true value is
        // positive but far below the subnormal range.
        return 0.0;
    }
    let log_value = hurst * k * tau + bracket.ln() - k * std::f64::consts::LN_2;
    log_value.exp()
}

/// Deviation of the Lamperti covariance from lag dependence only: for each
/// lag the max over base points of `|cov(u + lag, u) - cov(lag, 0)|`.
pub fn lamperti_stationarity(
    hurst: f64,
    k: f64,
    lags: &[f64],
    bases: &[f64],
) -> Result<DeviationReport, AnalysisError> {
    if lags.is_empty() || bases.is_empty() {
        return Err(AnalysisError::InvalidParameter(
            "lags and base points must be nonempty".into(),
        ));
    }
    let spec = KernelSpec::bif_bm(hurst, k)?;
    let mut worst = 0.0f64;
    let mut argmax = (0.0, 0.0);
    for &lag in lags {
        let reference = lamperti_cov_inner(&spec, hurst, k, lag, 0.0);
        for &base in bases {
            let dev = (lamperti_cov_inner(&spec, hurst, k, base + lag, base) - reference).abs();
            if dev > worst {
                worst = dev;
                argmax = (base + lag, base);
            }
        }
    }
    Ok(DeviationReport::new(worst, argmax, LAMPERTI_TOL))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuasihelixReport {
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `2^{-K}`, the theoretical lower bound on the ratios.
    pub lower_bound: f64,
    /// `2^{1-K}`, the theoretical upper bound.
    pub upper_bound: f64,
    pub pass: bool,
}

/// Ratios `increment_variance(s, t) / |t - s|^{2HK}` over all distinct
/// grid pairs, checked against the two-sided bound
/// `[2^{-K}, 2^{1-K}]` (quasihelix property). Requires `(H, K)` in the
/// theorem region and at least two grid points.
pub fn quasihelix_report(
    hurst: f64,
    k: f64,
    grid: &TimeGrid,
) -> Result<QuasihelixReport, AnalysisError> {
    require_theorem_region(hurst, k)?;
    if grid.len() < 2 {
        return Err(AnalysisError::InvalidParameter(
            "quasihelix ratios need at least two grid points".into(),
        ));
    }
    let spec = KernelSpec::bif_bm(hurst, k)?;
    let times = grid.times();
    let mut min_ratio = f64::INFINITY;
    let mut max_ratio = f64::NEG_INFINITY;
    for (i, &s) in times.iter().enumerate() {
        for &t in &times[i + 1..] {
            let ratio = crate::kernels::increment_variance(&spec, s, t)
                / (t - s).powf(2.0 * hurst * k);
            min_ratio = min_ratio.min(ratio);
            max_ratio = max_ratio.max(ratio);
        }
    }
    let lower_bound = (-k).exp2();
    let upper_bound = (1.0 - k).exp2();
    let pass = min_ratio >= lower_bound - QUASIHELIX_TOL
        && max_ratio <= upper_bound + QUASIHELIX_TOL;
    Ok(QuasihelixReport {
        min_ratio,
        max_ratio,
        lower_bound,
        upper_bound,
        pass,
    })
}

fn require_theorem_region(hurst: f64, k: f64) -> Result<(), AnalysisError> {
    let verdict = classify_params(hurst, k)?;
    if verdict.label != RegionLabel::TheoremRegion {
        return Err(AnalysisError::InvalidParameter(format!(
            "requires 0 < K <= 1 and 2HK <= 1, got H = {hurst}, K = {k}"
        )));
    }
    Ok(())
}

/// How far the rescaled increment covariance around time `T` still is from
/// its fractional limit: the sup over grid pairs of
/// `|2^{K-1} [R(T+t, T+s) - R(T+t, T) - R(T, T+s) + R(T, T)] - S_{HK}(s, t)|`
/// where `S_{HK}` is the fractional covariance of index `HK`. Decays to 0
/// as `T` grows.
pub fn increment_limit_error(
    hurst: f64,
    k: f64,
    big_t: f64,
    grid: &TimeGrid,
) -> Result<f64, AnalysisError> {
    require_theorem_region(hurst, k)?;
    if !(big_t > 0.0) || !big_t.is_finite() {
        return Err(AnalysisError::InvalidParameter(format!(
            "T must be positive and finite, got {big_t}"
        )));
    }
    let spec = KernelSpec::bif_bm(hurst, k)?;
    // 2HK <= 1 in the theorem region, so HK is a valid fractional index.
    let limit = KernelSpec::fbm(hurst * k)?;
    let weight = (k - 1.0).exp2();
    let times = grid.times();
    let r_tt = spec.eval(big_t, big_t);
    let mut worst = 0.0f64;
    for (i, &s) in times.iter().enumerate() {
        let r_ts = spec.eval(big_t, big_t + s);
        for &t in &times[i..] {
            let inc_cov =
                spec.eval(big_t + t, big_t + s) - spec.eval(big_t + t, big_t) - r_ts + r_tt;
            worst = worst.max((weight * inc_cov - limit.eval(s, t)).abs());
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PVariationLevel {
    pub level: u32,
    pub intervals: usize,
    pub sum: f64,
}

fn uniform_step(grid: &TimeGrid) -> Result<f64, AnalysisError> {
    let times = grid.times();
    let n = times.len();
    let step = (times[n - 1] - times[0]) / (n - 1) as f64;
    for (i, w) in times.windows(2).enumerate() {
        let d = w[1] - w[0];
        if (d - step).abs() > 1e-9 * step {
            return Err(AnalysisError::NonUniformGrid(format!(
                "spacing {d} at index {i} differs from nominal step {step}"
            )));
        }
    }
    Ok(step)
}

/// Realized p-variation of one path over nested dyadic partitions of a
/// uniform grid with `2^levels + 1` points. Level `l` uses `2^l` intervals
/// of the coarsened grid; the last level is the full resolution.
pub fn p_variation(
    path: &[f64],
    grid: &TimeGrid,
    p: f64,
    levels: u32,
) -> Result<Vec<PVariationLevel>, AnalysisError> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(AnalysisError::InvalidParameter(format!(
            "variation order must be positive, got p = {p}"
        )));
    }
    if levels >= 31 {
        return Err(AnalysisError::InvalidParameter(format!(
            "levels = {levels} is out of range"
        )));
    }
    let expected = (1usize << levels) + 1;
    if grid.len() != expected || path.len() != expected {
        return Err(AnalysisError::InvalidParameter(format!(
            "need a path and grid with 2^levels + 1 = {expected} points, got grid {} \
             and path {}",
            grid.len(),
            path.len()
        )));
    }
    uniform_step(grid)?;
    let mut out = Vec::with_capacity(levels as usize + 1);
    for level in 0..=levels {
        let stride = 1usize << (levels - level);
        let intervals = 1usize << level;
        let mut sum = 0.0;
        for m in 0..intervals {
            let d = (path[(m + 1) * stride] - path[m * stride]).abs();
            sum += d.powf(p);
        }
        out.push(PVariationLevel {
            level,
            intervals,
            sum,
        });
    }
    Ok(out)
}

/// Crude path-regularity estimate: slope of the log-log variogram
/// `lag -> mean squared increment` over dyadic lags, divided by 2. For
/// bifractional paths this hovers near `HK`, but only loosely; the
/// quasihelix constants alone allow a factor-2 band around the power law.
pub fn variogram_holder_estimate(paths: &SamplePaths) -> Result<f64, AnalysisError> {
    let grid = paths.grid();
    let n = grid.len();
    if n < 17 {
        return Err(AnalysisError::InvalidParameter(
            "variogram estimate needs at least 17 grid points".into(),
        ));
    }
    let step = uniform_step(grid)?;
    let mut lags = Vec::new();
    let mut lag = 1usize;
    while lag <= (n - 1) / 4 {
        lags.push(lag);
        lag *= 2;
    }
    let mut xs = Vec::with_capacity(lags.len());
    let mut ys = Vec::with_capacity(lags.len());
    for &lag in &lags {
        let mut acc = 0.0;
        let mut count = 0usize;
        for p in 0..paths.n_paths() {
            let row = paths.path(p);
            for i in 0..n - lag {
                let d = row[i + lag] - row[i];
                acc += d * d;
            }
            count += n - lag;
        }
        xs.push((lag as f64 * step).ln());
        ys.push((acc / count as f64).ln());
    }
    let m = xs.len() as f64;
    let mean_x: f64 = xs.iter().sum::<f64>() / m;
    let mean_y: f64 = ys.iter().sum::<f64>() / m;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mean_x) * (y - mean_y);
        sxx += (x - mean_x) * (x - mean_x);
    }
    Ok(sxy / sxx / 2.0)
}

/// `f(a) = 1 + 2 a^gamma - (1 + a)^gamma`. Nonnegative for `gamma <= 1`;
/// dips below zero near the origin once `gamma > 1`, which is exactly what
/// breaks positive semidefiniteness of `Q_gamma` there.
pub fn f_counterexample(gamma: f64, a: f64) -> f64 {
    assert!(
        gamma > 0.0 && a >= 0.0,
        "f is defined for gamma > 0 and a >= 0, got gamma = {gamma}, a = {a}"
    );
    let a_pow = if a == 0.0 { 0.0 } else { a.powf(gamma) };
    1.0 + 2.0 * a_pow - (1.0 + a).powf(gamma)
}

/// First `a` in the geometric scan `2^-1, 2^-2, ..., 2^-60` where
/// `f_counterexample(gamma, a) < -1e-15`. Exists for every `gamma > 1`
/// because `f` has negative slope at the origin there.
pub fn find_negative_a(gamma: f64) -> Result<f64, AnalysisError> {
    if !(gamma > 1.0) || !gamma.is_finite() {
        return Err(AnalysisError::InvalidParameter(format!(
            "a negative witness exists only for gamma > 1, got {gamma}"
        )));
    }
    for k in 1..=60u32 {
        let a = (-(k as f64)).exp2();
        if f_counterexample(gamma, a) < -1e-15 {
            return Ok(a);
        }
    }
    Err(AnalysisError::ScanExhausted { gamma })
}
