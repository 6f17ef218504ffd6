//! Closed-form covariance kernels for bifractional Brownian motion and the
//! auxiliary Gaussian families it decomposes into, plus classification of
//! (H, K) parameter pairs by what is known about positive definiteness.

use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("invalid kernel parameter: {0}")]
    InvalidParameter(String),
}

/// Raises a nonnegative base to a positive power with the convention
/// `0^p = 0` for every `p`, including `p = 0`. Keeps kernel values exact
/// at the time origin, where `f64::powf(0.0, 0.0)` would return 1.
#[inline]
fn pow0(x: f64, p: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.powf(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
enum Form {
    BifBm {
        hurst: f64,
        k: f64,
    },
    Fbm {
        hurst: f64,
    },
    CGamma {
        gamma: f64,
    },
    QGamma {
        gamma: f64,
    },
    LeiNualartRemainder {
        hurst: f64,
        k: f64,
    },
    Min,
    TimeChange {
        base: Box<Form>,
        theta: f64,
    },
    Scale {
        base: Box<Form>,
        factor: f64,
    },
    Sum {
        left: Box<Form>,
        right: Box<Form>,
    },
}

/// A covariance kernel on `[0, inf)^2`, built from a fixed family of closed
/// forms and closed under time change, scaling, and pointwise sum.
///
/// Construction validates parameters; evaluation never fails. Values are
/// bitwise symmetric in `(s, t)` because every formula is computed from the
/// ordered pair `(min, max)`.
///
/// Deserializing bypasses the constructors, so run [`KernelSpec::validate`]
/// on any spec read from JSON before evaluating it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct KernelSpec(Form);

impl KernelSpec {
    /// Bifractional Brownian motion covariance
    /// `2^{-K} ((t^{2H} + s^{2H})^K - |t - s|^{2HK})`.
    ///
    /// Requires `H > 0` and `K > 0`. Whether the kernel is actually positive
    /// semidefinite depends on where `(H, K)` falls; see [`classify_params`].
    pub fn bif_bm(hurst: f64, k: f64) -> Result<Self, KernelError> {
        if !(hurst > 0.0) || !hurst.is_finite() {
            return Err(KernelError::InvalidParameter(format!(
                "bifbm requires H > 0, got H = {hurst}"
            )));
        }
        if !(k > 0.0) || !k.is_finite() {
            return Err(KernelError::InvalidParameter(format!(
                "bifbm requires K > 0, got K = {k}"
            )));
        }
        Ok(Self(Form::BifBm { hurst, k }))
    }

    /// Fractional Brownian motion covariance
    /// `(s^{2H} + t^{2H} - |t - s|^{2H}) / 2` for `H` in `(0, 1]`.
    pub fn fbm(hurst: f64) -> Result<Self, KernelError> {
        if !(hurst > 0.0 && hurst <= 1.0) {
            return Err(KernelError::InvalidParameter(format!(
                "fbm requires H in (0, 1], got H = {hurst}"
            )));
        }
        Ok(Self(Form::Fbm { hurst }))
    }

    /// `C_gamma(s, t) = (s + t)^gamma - max(s, t)^gamma`.
    ///
    /// Any `gamma > 0` is accepted so that the kernel can be probed outside
    /// the range where it is positive semidefinite (it stops being PSD for
    /// `gamma > 1`).
    pub fn c_gamma(gamma: f64) -> Result<Self, KernelError> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(KernelError::InvalidParameter(format!(
                "c_gamma requires gamma > 0, got gamma = {gamma}"
            )));
        }
        Ok(Self(Form::CGamma { gamma }))
    }

    /// `Q_gamma(s, t) = max(s, t)^gamma - |t - s|^gamma`.
    ///
    /// Accepts any `gamma > 0`; PSD only holds for `gamma <= 1`.
    pub fn q_gamma(gamma: f64) -> Result<Self, KernelError> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(KernelError::InvalidParameter(format!(
                "q_gamma requires gamma > 0, got gamma = {gamma}"
            )));
        }
        Ok(Self(Form::QGamma { gamma }))
    }

    /// Covariance of the smooth remainder that links bifractional Brownian
    /// motion to fractional Brownian motion of index `HK`:
    /// `(s^{2HK} + t^{2HK} - (t^{2H} + s^{2H})^K) / 2`.
    ///
    /// Requires `H > 0` and `K` in `(0, 1]`.
    pub fn lei_nualart_remainder(hurst: f64, k: f64) -> Result<Self, KernelError> {
        if !(hurst > 0.0) || !hurst.is_finite() {
            return Err(KernelError::InvalidParameter(format!(
                "remainder kernel requires H > 0, got H = {hurst}"
            )));
        }
        if !(k > 0.0 && k <= 1.0) {
            return Err(KernelError::InvalidParameter(format!(
                "remainder kernel requires K in (0, 1], got K = {k}"
            )));
        }
        Ok(Self(Form::LeiNualartRemainder { hurst, k }))
    }

    /// Brownian motion covariance `min(s, t)`.
    pub fn min_kernel() -> Self {
        Self(Form::Min)
    }

    /// Deterministic time change: evaluates `base` at `(s^theta, t^theta)`.
    /// Requires `theta > 0` so the change is increasing.
    pub fn time_change(base: KernelSpec, theta: f64) -> Result<Self, KernelError> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(KernelError::InvalidParameter(format!(
                "time change requires theta > 0, got theta = {theta}"
            )));
        }
        Ok(Self(Form::TimeChange {
            base: Box::new(base.0),
            theta,
        }))
    }

    /// Multiplies the kernel by a nonnegative factor.
    pub fn scale(base: KernelSpec, factor: f64) -> Result<Self, KernelError> {
        if !(factor >= 0.0) || !factor.is_finite() {
            return Err(KernelError::InvalidParameter(format!(
                "scale requires a finite factor >= 0, got {factor}"
            )));
        }
        Ok(Self(Form::Scale {
            base: Box::new(base.0),
            factor,
        }))
    }

    /// Pointwise sum of two kernels. PSD is preserved when both summands
    /// are PSD.
    pub fn sum(left: KernelSpec, right: KernelSpec) -> Self {
        Self(Form::Sum {
            left: Box::new(left.0),
            right: Box::new(right.0),
        })
    }

    /// The bifractional covariance assembled from its two parts:
    /// `2^{-K} C_K(s^{2H}, t^{2H}) + 2^{-K} Q_{2HK}(s, t)`.
    ///
    /// Pointwise equal to [`KernelSpec::bif_bm`] with the same parameters
    /// for every `H > 0`, `K > 0`. Each summand is PSD on its own exactly
    /// when `K <= 1` and `2HK <= 1`, which is what makes the sum a
    /// decomposition into independent Gaussian components there.
    pub fn bifbm_split(hurst: f64, k: f64) -> Result<Self, KernelError> {
        // Same parameter domain as the direct form.
        Self::bif_bm(hurst, k)?;
        let w = (-k).exp2();
        let c_part = Self::scale(Self::time_change(Self::c_gamma(k)?, 2.0 * hurst)?, w)?;
        let q_part = Self::scale(Self::q_gamma(2.0 * hurst * k)?, w)?;
        Ok(Self::sum(c_part, q_part))
    }

    /// Fractional Brownian motion of index `HK` assembled from the
    /// bifractional kernel: `S_{HK} = 2^{K-1} R_{H,K} + remainder`.
    /// Requires `H > 0` and `K` in `(0, 1]`.
    pub fn lei_nualart_split(hurst: f64, k: f64) -> Result<Self, KernelError> {
        let scaled = Self::scale(Self::bif_bm(hurst, k)?, (k - 1.0).exp2())?;
        Ok(Self::sum(scaled, Self::lei_nualart_remainder(hurst, k)?))
    }

    /// Fractional Brownian motion with `H <= 1/2` split into its PSD
    /// parts: `S_H = (Q_{2H} + min(s, t)^{2H}) / 2`. The second summand is
    /// a time-changed Brownian covariance, which is what makes the split
    /// usable for sampling.
    pub fn fbm_split(hurst: f64) -> Result<Self, KernelError> {
        if !(hurst > 0.0 && hurst <= 0.5) {
            return Err(KernelError::InvalidParameter(format!(
                "the fbm split requires H in (0, 1/2], got H = {hurst}"
            )));
        }
        let q_part = Self::scale(Self::q_gamma(2.0 * hurst)?, 0.5)?;
        let min_part = Self::scale(Self::time_change(Self::min_kernel(), 2.0 * hurst)?, 0.5)?;
        Ok(Self::sum(q_part, min_part))
    }

    /// Evaluates the kernel at `(s, t)`.
    ///
    /// Both arguments must be finite and nonnegative. The result is
    /// bitwise identical under argument swap.
    pub fn eval(&self, s: f64, t: f64) -> f64 {
        assert!(
            s >= 0.0 && t >= 0.0 && s.is_finite() && t.is_finite(),
            "kernel arguments must be finite and nonnegative, got ({s}, {t})"
        );
        let (lo, hi) = if s <= t { (s, t) } else { (t, s) };
        eval_form(&self.0, lo, hi)
    }

    /// Re-applies every constructor constraint in the tree. Deserialized
    /// specs skip the constructors, so call this before trusting one.
    pub fn validate(&self) -> Result<(), KernelError> {
        validate_form(&self.0)
    }
}

fn validate_form(form: &Form) -> Result<(), KernelError> {
    match form {
        Form::BifBm { hurst, k } => KernelSpec::bif_bm(*hurst, *k).map(drop),
        Form::Fbm { hurst } => KernelSpec::fbm(*hurst).map(drop),
        Form::CGamma { gamma } => KernelSpec::c_gamma(*gamma).map(drop),
        Form::QGamma { gamma } => KernelSpec::q_gamma(*gamma).map(drop),
        Form::LeiNualartRemainder { hurst, k } => {
            KernelSpec::lei_nualart_remainder(*hurst, *k).map(drop)
        }
        Form::Min => Ok(()),
        Form::TimeChange { base, theta } => {
            if !(*theta > 0.0) || !theta.is_finite() {
                return Err(KernelError::InvalidParameter(format!(
                    "time change requires theta > 0, got theta = {theta}"
                )));
            }
            validate_form(base)
        }
        Form::Scale { base, factor } => {
            if !(*factor >= 0.0) || !factor.is_finite() {
                return Err(KernelError::InvalidParameter(format!(
                    "scale requires a finite factor >= 0, got {factor}"
                )));
            }
            validate_form(base)
        }
        Form::Sum { left, right } => {
            validate_form(left)?;
            validate_form(right)
        }
    }
}

/// `lo <= hi` is an invariant here; every formula below is written against
/// the ordered pair so swapped arguments take the identical code path.
fn eval_form(form: &Form, lo: f64, hi: f64) -> f64 {
    match form {
        Form::BifBm { hurst, k } => {
            // Both routes to hi^{2HK} can disagree by an ulp, so pin the
            // zero row exactly.
            if lo == 0.0 {
                return 0.0;
            }
            let a = pow0(lo, 2.0 * hurst);
            let b = pow0(hi, 2.0 * hurst);
            (-k).exp2() * (pow0(a + b, *k) - pow0(hi - lo, 2.0 * hurst * k))
        }
        Form::Fbm { hurst } => {
            let p = 2.0 * hurst;
            0.5 * (pow0(lo, p) + pow0(hi, p) - pow0(hi - lo, p))
        }
        Form::CGamma { gamma } => {
            // gamma = 1 collapses to min(s, t); the generic formula would
            // compute (s + t) - max as a difference instead.
            if *gamma == 1.0 {
                lo
            } else {
                pow0(lo + hi, *gamma) - pow0(hi, *gamma)
            }
        }
        Form::QGamma { gamma } => {
            if *gamma == 1.0 {
                lo
            } else {
                pow0(hi, *gamma) - pow0(hi - lo, *gamma)
            }
        }
        Form::LeiNualartRemainder { hurst, k } => {
            if lo == 0.0 {
                return 0.0;
            }
            let p = 2.0 * hurst;
            let fbm_part = pow0(lo, p * k) + pow0(hi, p * k);
            0.5 * (fbm_part - pow0(pow0(lo, p) + pow0(hi, p), *k))
        }
        Form::Min => lo,
        Form::TimeChange { base, theta } => {
            // x^theta is increasing, so the transformed pair stays ordered.
            eval_form(base, pow0(lo, *theta), pow0(hi, *theta))
        }
        Form::Scale { base, factor } => factor * eval_form(base, lo, hi),
        Form::Sum { left, right } => eval_form(left, lo, hi) + eval_form(right, lo, hi),
    }
}

impl fmt::Display for KernelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt_form(&self.0, f)
    }
}

fn fmt_form(form: &Form, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    match form {
        Form::BifBm { hurst, k } => write!(f, "bifbm(H={hurst}, K={k})"),
        Form::Fbm { hurst } => write!(f, "fbm(H={hurst})"),
        Form::CGamma { gamma } => write!(f, "cgamma({gamma})"),
        Form::QGamma { gamma } => write!(f, "qgamma({gamma})"),
        Form::LeiNualartRemainder { hurst, k } => write!(f, "remainder(H={hurst}, K={k})"),
        Form::Min => write!(f, "min"),
        Form::TimeChange { base, theta } => {
            write!(f, "time_change(")?;
            fmt_form(base, f)?;
            write!(f, ", theta={theta})")
        }
        Form::Scale { base, factor } => {
            write!(f, "scale(")?;
            fmt_form(base, f)?;
            write!(f, ", {factor})")
        }
        Form::Sum { left, right } => {
            write!(f, "sum(")?;
            fmt_form(left, f)?;
            write!(f, ", ")?;
            fmt_form(right, f)?;
            write!(f, ")")
        }
    }
}

/// Variance of the increment between times `s` and `t` under the kernel:
/// `R(s,s) + R(t,t) - 2 R(s,t)`. Exactly zero when `s == t`.
pub fn increment_variance(spec: &KernelSpec, s: f64, t: f64) -> f64 {
    spec.eval(s, s) + spec.eval(t, t) - 2.0 * spec.eval(s, t)
}

/// What is known about positive semidefiniteness of the bifractional
/// covariance at a given `(H, K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RegionLabel {
    /// `0 < K <= 1` and `2HK <= 1`: PSD with no upper restriction on `H`.
    TheoremRegion,
    /// Outside the region above but PSD by other published criteria:
    /// `0 < H <= 1` with `K <= min(2, 1/H)`, or `H > 1` with `K = 1/(2H)`.
    OtherKnownRegion,
    /// `K > 1/H`: the diagonal grows faster than Cauchy-Schwarz permits,
    /// so the kernel cannot be a covariance.
    NecessaryViolated,
    /// No published proof either way.
    Unknown,
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            RegionLabel::TheoremRegion => "TheoremRegion",
            RegionLabel::OtherKnownRegion => "OtherKnownRegion",
            RegionLabel::NecessaryViolated => "NecessaryViolated",
            RegionLabel::Unknown => "Unknown",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamVerdict {
    pub label: RegionLabel,
    pub explanation: String,
}

/// Classifies `(H, K)` by the strongest applicable statement, checked in
/// order: theorem region, other known PSD regions, violation of the
/// necessary condition, unknown.
pub fn classify_params(hurst: f64, k: f64) -> Result<ParamVerdict, KernelError> {
    if !(hurst > 0.0) || !hurst.is_finite() {
        return Err(KernelError::InvalidParameter(format!(
            "classification requires H > 0, got H = {hurst}"
        )));
    }
    if !(k > 0.0) || !k.is_finite() {
        return Err(KernelError::InvalidParameter(format!(
            "classification requires K > 0, got K = {k}"
        )));
    }
    let verdict = if k <= 1.0 && 2.0 * hurst * k <= 1.0 {
        ParamVerdict {
            label: RegionLabel::TheoremRegion,
            explanation: format!(
                "K = {k} <= 1 and 2HK = {} <= 1: positive semidefinite for every H > 0",
                2.0 * hurst * k
            ),
        }
    } else if hurst <= 1.0 && k <= (2.0f64).min(1.0 / hurst) {
        ParamVerdict {
            label: RegionLabel::OtherKnownRegion,
            explanation: format!(
                "H = {hurst} <= 1 and K = {k} <= min(2, 1/H): positive semidefinite \
                 by the classical criterion for H <= 1"
            ),
        }
    } else if hurst > 1.0 && k == 1.0 / (2.0 * hurst) {
        ParamVerdict {
            label: RegionLabel::OtherKnownRegion,
            explanation: format!(
                "H = {hurst} > 1 with K = 1/(2H): on the boundary curve 2HK = 1"
            ),
        }
    } else if k > 1.0 / hurst {
        ParamVerdict {
            label: RegionLabel::NecessaryViolated,
            explanation: format!(
                "HK = {} > 1: increments along the diagonal outgrow what any \
                 covariance allows, so the kernel is not PSD",
                hurst * k
            ),
        }
    } else {
        ParamVerdict {
            label: RegionLabel::Unknown,
            explanation: format!(
                "H = {hurst}, K = {k}: no published criterion settles positive \
                 semidefiniteness here"
            ),
        }
    };
    Ok(verdict)
}

/// Normalizing constant `gamma / GammaFn(1 - gamma)` of the subordinator
/// integral representation, defined for `gamma` in `(0, 1)`.
pub fn c_gamma_const(gamma: f64) -> Result<f64, KernelError> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(KernelError::InvalidParameter(format!(
            "normalizing constant requires gamma in (0, 1), got gamma = {gamma}"
        )));
    }
    Ok(gamma / statrs::function::gamma::gamma(1.0 - gamma))
}
