//! Running moments and normal-approximation confidence intervals.

use serde::{Deserialize, Serialize};

/// Two-sided 99% standard normal quantile.
pub const Z99: f64 = 2.575_829_303_548_901;

/// Count, sum and sum of squares of a stream of observations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.variance() / self.n as f64).sqrt()
    }

    pub fn estimate(&self) -> Estimate {
        Estimate::new(self.mean(), self.std_error())
    }
}

/// A point estimate with its standard error and 99% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Estimate {
    pub fn new(mean: f64, std_error: f64) -> Self {
        Self {
            mean,
            std_error,
            ci_low: mean - Z99 * std_error,
            ci_high: mean + Z99 * std_error,
        }
    }

    /// Whether `value` lies inside the 99% interval.
    pub fn covers(&self, value: f64) -> bool {
        self.ci_low <= value && value <= self.ci_high
    }

    /// Distance from `value` in standard errors.
    pub fn z_score(&self, value: f64) -> f64 {
        if self.std_error == 0.0 {
            if self.mean == value {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - value) / self.std_error
        }
    }
}
