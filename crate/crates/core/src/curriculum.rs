//! Error-aware adaptive sampling over motion bins.
//!
//! Each bin carries three non-negative error signals (failure, tracking,
//! interaction). The mixing weights of those signals move from a
//! stability-first setting to a precision-first one as the running maximum
//! episode length grows.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum CurriculumError {
    #[error("no motion bins")]
    Empty,
    #[error("error signal of bin {bin} is negative or non-finite")]
    BadError { bin: usize },
    #[error("invalid curriculum parameter: {0}")]
    InvalidParameter(&'static str),
}

pub const ALPHA_INIT: [f64; 3] = [0.8, 0.1, 0.1];
pub const ALPHA_TARGET: [f64; 3] = [0.05, 0.30, 0.65];

/// Schedule and exploration parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurriculumConfig {
    pub eta: f64,
    pub alpha_init: [f64; 3],
    pub alpha_target: [f64; 3],
    /// Episode lengths where interpolation starts and ends.
    pub thresholds: (f64, f64),
    /// Gaussian width of the 3-tap smoothing kernel, in bins.
    pub kernel_sigma: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            eta: 0.05,
            alpha_init: ALPHA_INIT,
            alpha_target: ALPHA_TARGET,
            thresholds: (350.0, 500.0),
            kernel_sigma: 1.0,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<(), CurriculumError> {
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(CurriculumError::InvalidParameter("eta must lie in [0, 1]"));
        }
        for a in [&self.alpha_init, &self.alpha_target] {
            if a.iter().any(|v| !(*v >= 0.0)) || (a.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
                return Err(CurriculumError::InvalidParameter("alpha must be a distribution"));
            }
        }
        let (lo, hi) = self.thresholds;
        if !(lo >= 0.0 && lo < hi && hi.is_finite()) {
            return Err(CurriculumError::InvalidParameter("need 0 <= lower threshold < upper"));
        }
        if !(self.kernel_sigma > 0.0 && self.kernel_sigma.is_finite()) {
            return Err(CurriculumError::InvalidParameter("kernel sigma must be positive"));
        }
        Ok(())
    }
}

/// Current curriculum inputs: smoothed per-bin errors and the episode-length statistic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurriculumState {
    /// `[e_fail, e_track, e_inter]` per bin.
    pub errors: Vec<[f64; 3]>,
    pub l_max: f64,
    pub config: CurriculumConfig,
}

impl CurriculumState {
    pub fn validate(&self) -> Result<(), CurriculumError> {
        self.config.validate()?;
        if self.errors.is_empty() {
            return Err(CurriculumError::Empty);
        }
        for (bin, e) in self.errors.iter().enumerate() {
            if e.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
                return Err(CurriculumError::BadError { bin });
            }
        }
        if !(self.l_max >= 0.0) {
            return Err(CurriculumError::InvalidParameter("episode length must be non-negative"));
        }
        Ok(())
    }
}

/// Normalized 3-tap Gaussian `(w1, w0, w1)`.
pub fn gaussian_kernel(sigma: f64) -> [f64; 3] {
    let side = (-0.5 / (sigma * sigma)).exp();
    let total = 1.0 + 2.0 * side;
    [side / total, 1.0 / total, side / total]
}

/// Non-causal 3-tap smoothing with mirrored edges (`x[-1] = x[0]`).
pub fn smooth_errors(raw: &[f64], sigma: f64) -> Result<Vec<f64>, CurriculumError> {
    if raw.is_empty() {
        return Err(CurriculumError::Empty);
    }
    let [w1, w0, _] = gaussian_kernel(sigma);
    let n = raw.len();
    let at = |i: isize| raw[i.clamp(0, n as isize - 1) as usize];
    Ok((0..n as isize)
        .map(|i| w1 * at(i - 1) + w0 * at(i) + w1 * at(i + 1))
        .collect())
}

/// Phase weights for the current episode-length statistic.
pub fn curriculum_alpha(l_max: f64, config: &CurriculumConfig) -> [f64; 3] {
    let (lo, hi) = config.thresholds;
    if l_max < lo {
        return config.alpha_init;
    }
    if l_max >= hi {
        return config.alpha_target;
    }
    let t = (l_max - lo) / (hi - lo);
    let mut a = [0.0; 3];
    for k in 0..3 {
        a[k] = (1.0 - t) * config.alpha_init[k] + t * config.alpha_target[k];
    }
    a
}

/// Sampling probability of every bin.
pub fn sampling_distribution(state: &CurriculumState) -> Result<Vec<f64>, CurriculumError> {
    state.validate()?;
    let s = state.errors.len();
    let uniform = 1.0 / s as f64;
    let alpha = curriculum_alpha(state.l_max, &state.config);
    let eta = state.config.eta;
    let mut mass = [0.0; 3];
    for e in &state.errors {
        for k in 0..3 {
            mass[k] += e[k];
        }
    }
    Ok(state
        .errors
        .iter()
        .map(|e| {
            let focus: f64 = (0..3)
                .map(|k| {
                    let share = if mass[k] > 0.0 { e[k] / mass[k] } else { uniform };
                    alpha[k] * share
                })
                .sum();
            eta * uniform + (1.0 - eta) * focus
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kernel_weights() {
        let w = gaussian_kernel(1.0);
        assert_relative_eq!(w[1], 0.4519, epsilon = 1e-4);
        assert_relative_eq!(w[0], 0.2741, epsilon = 1e-4);
    }

    #[test]
    fn constant_and_impulse() {
        for v in smooth_errors(&[2.0; 5], 1.0).unwrap() {
            assert_relative_eq!(v, 2.0, epsilon = 1e-15);
        }
        let w = gaussian_kernel(1.0);
        let out = smooth_errors(&[0.0, 0.0, 1.0, 0.0, 0.0], 1.0).unwrap();
        assert_eq!(out, vec![0.0, w[0], w[1], w[2], 0.0]);
        assert_eq!(smooth_errors(&[], 1.0), Err(CurriculumError::Empty));
    }

    #[test]
    fn alpha_schedule() {
        let c = CurriculumConfig::default();
        assert_eq!(curriculum_alpha(300.0, &c), [0.8, 0.1, 0.1]);
        assert_eq!(curriculum_alpha(600.0, &c), [0.05, 0.30, 0.65]);
        let mid = curriculum_alpha(425.0, &c);
        for (a, b) in mid.iter().zip([0.425, 0.2, 0.375]) {
            assert_relative_eq!(*a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn focused_mass_example() {
        let config = CurriculumConfig {
            alpha_init: [1.0, 0.0, 0.0],
            ..CurriculumConfig::default()
        };
        let state = CurriculumState {
            errors: vec![[1.0, 0.0, 0.0], [0.0; 3], [0.0; 3], [0.0; 3]],
            l_max: 0.0,
            config,
        };
        let p = sampling_distribution(&state).unwrap();
        let expected = [0.9625, 0.0125, 0.0125, 0.0125];
        for (a, b) in p.iter().zip(expected) {
            assert_relative_eq!(*a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn negative_error_rejected() {
        let state = CurriculumState {
            errors: vec![[1.0, -0.1, 0.0]],
            l_max: 0.0,
            config: CurriculumConfig::default(),
        };
        assert_eq!(sampling_distribution(&state), Err(CurriculumError::BadError { bin: 0 }));
    }
}
