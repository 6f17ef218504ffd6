//! Time grids: validated, strictly increasing sequences of nonnegative
//! times, with uniform and geometric generators.

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("time grid must contain at least one point")]
    Empty,
    #[error("time grid entries must be finite and nonnegative, entry {index} is {value}")]
    BadEntry { index: usize, value: f64 },
    #[error(
        "time grid must be strictly increasing, entries {index} and {} are {a} and {b}",
        index + 1
    )]
    NotIncreasing { index: usize, a: f64, b: f64 },
    #[error("invalid grid generator: {0}")]
    BadGenerator(String),
}

/// A strictly increasing sequence of finite, nonnegative times.
/// Duplicate times are rejected at construction, so a grid never produces
/// a structurally singular Gram matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self, GridError> {
        if times.is_empty() {
            return Err(GridError::Empty);
        }
        for (index, &value) in times.iter().enumerate() {
            if !value.is_finite() || value < 0.0 {
                return Err(GridError::BadEntry { index, value });
            }
        }
        for (index, pair) in times.windows(2).enumerate() {
            if !(pair[0] < pair[1]) {
                return Err(GridError::NotIncreasing {
                    index,
                    a: pair[0],
                    b: pair[1],
                });
            }
        }
        Ok(Self { times })
    }

    /// `n` equally spaced points from `a` to `b` inclusive. `n = 1` takes
    /// just `a`; otherwise `a < b` is required. Endpoints are exact.
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self, GridError> {
        if n == 0 {
            return Err(GridError::Empty);
        }
        if n == 1 {
            return Self::new(vec![a]);
        }
        if !(a < b) {
            return Err(GridError::BadGenerator(format!(
                "uniform grid needs a < b, got a = {a}, b = {b}"
            )));
        }
        let step = (b - a) / (n - 1) as f64;
        let mut times: Vec<f64> = (0..n).map(|i| a + step * i as f64).collect();
        times[n - 1] = b;
        Self::new(times)
    }

    /// `n` logarithmically spaced points from `a` to `b` inclusive,
    /// requiring `0 < a < b` (or `n = 1` with `a > 0`). Endpoints are exact.
    pub fn geometric(a: f64, b: f64, n: usize) -> Result<Self, GridError> {
        if n == 0 {
            return Err(GridError::Empty);
        }
        if !(a > 0.0) {
            return Err(GridError::BadGenerator(format!(
                "geometric grid needs a > 0, got a = {a}"
            )));
        }
        if n == 1 {
            return Self::new(vec![a]);
        }
        if !(a < b) {
            return Err(GridError::BadGenerator(format!(
                "geometric grid needs a < b, got a = {a}, b = {b}"
            )));
        }
        let log_a = a.ln();
        let log_step = (b.ln() - log_a) / (n - 1) as f64;
        let mut times: Vec<f64> = (0..n)
            .map(|i| (log_a + log_step * i as f64).exp())
            .collect();
        times[0] = a;
        times[n - 1] = b;
        Self::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// True when the first grid point is exactly zero.
    pub fn starts_at_origin(&self) -> bool {
        self.times[0] == 0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validates_order_and_sign() {
        assert!(TimeGrid::new(vec![]).is_err());
        assert!(TimeGrid::new(vec![0.0, 1.0, 1.0]).is_err(), "duplicates rejected");
        assert!(TimeGrid::new(vec![1.0, 0.5]).is_err());
        assert!(TimeGrid::new(vec![-1.0, 0.5]).is_err());
        assert!(TimeGrid::new(vec![0.0, f64::NAN]).is_err());
        assert!(TimeGrid::new(vec![0.0, f64::INFINITY]).is_err());
        assert!(TimeGrid::new(vec![0.0]).is_ok());
    }

    #[test]
    fn uniform_hits_endpoints() {
        let g = TimeGrid::uniform(0.0, 1.0, 5).unwrap();
        assert_eq!(g.times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(g.starts_at_origin());
        let g = TimeGrid::uniform(0.25, 4.0, 16).unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(g.times()[0], 0.25);
        assert_eq!(g.times()[15], 4.0);
        assert!(TimeGrid::uniform(1.0, 1.0, 3).is_err());
    }

    #[test]
    fn geometric_hits_endpoints_and_ratio() {
        let g = TimeGrid::geometric(0.015625, 64.0, 24).unwrap();
        assert_eq!(g.times()[0], 0.015625);
        assert_eq!(g.times()[23], 64.0);
        let ratio = g.times()[1] / g.times()[0];
        for w in g.times().windows(2) {
            assert!((w[1] / w[0] - ratio).abs() < 1e-12 * ratio);
        }
        assert!(TimeGrid::geometric(0.0, 1.0, 4).is_err());
        assert!(TimeGrid::geometric(-1.0, 1.0, 4).is_err());
    }

    #[test]
    fn single_point_grids() {
        assert_eq!(TimeGrid::uniform(3.0, 3.0, 1).unwrap().times(), &[3.0]);
        assert_eq!(TimeGrid::geometric(3.0, 9.0, 1).unwrap().times(), &[3.0]);
    }
}
