//! Target and surrogate losses over runtimes.
//!
//! Polynomial and capped-log losses act on the normalized runtime `u = t / C`.
//! A timed-out run takes the supremum of the loss on `[0, C]` except for
//! PAR10, whose timeout value is the `10 · C` penalty.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Below this distance from 1 the capped-log loss returns its cap directly.
const LOG_SINGULARITY_GUARD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossSpec {
    Identity,
    Par10,
    Polynomial { alpha: f64 },
    CappedLog { alpha: f64, beta: f64 },
}

/// Search ranges used when tuning surrogate parameters.
pub mod ranges {
    pub const POLY_ALPHA: (f64, f64) = (0.5, 30.0);
    pub const LOG_ALPHA: (f64, f64) = (0.01, 1.0);
    pub const LOG_BETA: (f64, f64) = (0.5, 20.0);
}

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LossSpec::Polynomial { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                invalid(format!("polynomial alpha must be > 0, got {alpha}"))
            }
            LossSpec::CappedLog { alpha, .. } if !(alpha > 0.0 && alpha <= 1.0) => {
                invalid(format!("capped-log alpha must lie in (0, 1], got {alpha}"))
            }
            LossSpec::CappedLog { beta, .. } if !(beta > 0.0 && beta.is_finite()) => {
                invalid(format!("capped-log beta must be > 0, got {beta}"))
            }
            _ => Ok(()),
        }
    }

    /// Loss of a run that finished at `t` (or timed out) under cutoff `cutoff`.
    pub fn evaluate(&self, t: f64, cutoff: f64, timed_out: bool) -> Result<f64> {
        if !(t >= 0.0 && t <= cutoff) {
            return invalid(format!("runtime {t} outside [0, {cutoff}]"));
        }
        Ok(if timed_out { self.timeout_value(cutoff) } else { self.eval_unchecked(t, cutoff) })
    }

    pub fn timeout_value(&self, cutoff: f64) -> f64 {
        match *self {
            LossSpec::Identity => cutoff,
            LossSpec::Par10 => 10.0 * cutoff,
            LossSpec::Polynomial { .. } => 1.0,
            LossSpec::CappedLog { beta, .. } => beta,
        }
    }

    /// Loss of a run finishing at `t ∈ [0, C]` without bounds checking.
    pub(crate) fn eval_unchecked(&self, t: f64, cutoff: f64) -> f64 {
        match *self {
            LossSpec::Identity | LossSpec::Par10 => t,
            LossSpec::Polynomial { alpha } => (t / cutoff).powf(alpha),
            LossSpec::CappedLog { alpha, beta } => {
                let rest = 1.0 - t / cutoff;
                if rest < LOG_SINGULARITY_GUARD {
                    beta
                } else {
                    (-alpha * rest.ln()).min(beta)
                }
            }
        }
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LossSpec::Identity => write!(f, "identity"),
            LossSpec::Par10 => write!(f, "par10"),
            LossSpec::Polynomial { alpha } => write!(f, "poly:alpha={alpha}"),
            LossSpec::CappedLog { alpha, beta } => write!(f, "log:alpha={alpha},beta={beta}"),
        }
    }
}

impl FromStr for LossSpec {
    type Err = Error;

    /// Parses `identity`, `par10`, `poly:alpha=3`, `log:alpha=0.2,beta=4`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, params) = s.split_once(':').unwrap_or((s, ""));
        let mut alpha = None;
        let mut beta = None;
        for kv in params.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("malformed loss parameter `{kv}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("loss parameter `{k}` is not a number")))?;
            match k.trim() {
                "alpha" => alpha = Some(v),
                "beta" => beta = Some(v),
                other => return invalid(format!("unknown loss parameter `{other}`")),
            }
        }
        let need = |p: Option<f64>, name: &str| p.ok_or_else(|| Error::InvalidArgument(format!("`{kind}` loss needs `{name}`")));
        let spec = match kind.to_ascii_lowercase().as_str() {
            "identity" | "exp" | "runtime" => LossSpec::Identity,
            "par10" => LossSpec::Par10,
            "poly" | "polynomial" => LossSpec::Polynomial { alpha: need(alpha, "alpha")? },
            "log" | "capped_log" => LossSpec::CappedLog {
                alpha: need(alpha, "alpha")?,
                beta: need(beta, "beta")?,
            },
            other => return invalid(format!("unknown loss `{other}`")),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const C: f64 = 100.0;

    #[test]
    fn par10_values() {
        assert_eq!(LossSpec::Par10.evaluate(50.0, C, false).unwrap(), 50.0);
        assert_eq!(LossSpec::Par10.evaluate(50.0, C, true).unwrap(), 1000.0);
        assert_eq!(LossSpec::Identity.evaluate(100.0, C, true).unwrap(), 100.0);
    }

    #[test]
    fn polynomial_values() {
        let p = LossSpec::Polynomial { alpha: 3.0 };
        assert_relative_eq!(p.evaluate(50.0, C, false).unwrap(), 0.125);
        assert_eq!(p.evaluate(10.0, C, true).unwrap(), 1.0);
        let lin = LossSpec::Polynomial { alpha: 1.0 };
        for t in [0.0, 12.5, 33.3, 99.0] {
            assert_eq!(lin.evaluate(t, C, false).unwrap(), t / C);
        }
    }

    #[test]
    fn capped_log_values() {
        let l = LossSpec::CappedLog { alpha: 0.5, beta: 2.0 };
        let u = 1.0 - (-2.0f64).exp();
        assert_relative_eq!(l.evaluate(u * C, C, false).unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(l.evaluate(C, C, false).unwrap(), 2.0);
        assert_eq!(l.evaluate(C * (1.0 - 1e-15), C, false).unwrap(), 2.0);
        assert_eq!(l.evaluate(3.0, C, true).unwrap(), 2.0);
    }

    #[test]
    fn domain_errors() {
        assert!(LossSpec::Par10.evaluate(-1.0, C, false).is_err());
        assert!(LossSpec::Par10.evaluate(101.0, C, false).is_err());
        assert!(LossSpec::Polynomial { alpha: 0.0 }.validate().is_err());
        assert!(LossSpec::CappedLog { alpha: 1.5, beta: 1.0 }.validate().is_err());
        assert!(LossSpec::CappedLog { alpha: 0.5, beta: 0.0 }.validate().is_err());
    }

    #[test]
    fn config_strings() {
        for s in ["identity", "par10", "poly:alpha=3", "log:alpha=0.2,beta=4"] {
            let spec: LossSpec = s.parse().unwrap();
            assert_eq!(spec.to_string().parse::<LossSpec>().unwrap(), spec);
        }
        assert_eq!("poly:alpha=3.0".parse::<LossSpec>().unwrap(), LossSpec::Polynomial { alpha: 3.0 });
        assert!("poly".parse::<LossSpec>().is_err());
        assert!("log:alpha=0.2".parse::<LossSpec>().is_err());
        assert!("huber".parse::<LossSpec>().is_err());
        assert!("poly:gamma=1".parse::<LossSpec>().is_err());
    }

    #[test]
    fn monotone_and_convex_on_grid() {
        let specs = [
            LossSpec::Identity,
            LossSpec::Par10,
            LossSpec::Polynomial { alpha: 0.5 },
            LossSpec::Polynomial { alpha: 3.0 },
            LossSpec::Polynomial { alpha: 20.0 },
            LossSpec::CappedLog { alpha: 0.1, beta: 1.0 },
            LossSpec::CappedLog { alpha: 1.0, beta: 10.0 },
        ];
        let grid: Vec<f64> = (0..=1000).map(|k| C * k as f64 / 1000.0).collect();
        for spec in specs {
            let v: Vec<f64> = grid.iter().map(|&t| spec.evaluate(t, C, false).unwrap()).collect();
            assert!(v.windows(2).all(|w| w[1] >= w[0]), "{spec} not monotone");
            assert!(spec.timeout_value(C) >= *v.last().unwrap());
        }
        // convex surrogates with alpha ≥ 1 and the uncapped log branch
        for spec in [LossSpec::Polynomial { alpha: 3.0 }, LossSpec::Polynomial { alpha: 20.0 }, LossSpec::CappedLog { alpha: 0.3, beta: 1e9 }] {
            let v: Vec<f64> = grid[..1000].iter().map(|&t| spec.evaluate(t, C, false).unwrap()).collect();
            for w in v.windows(3) {
                assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-12, "{spec} not convex");
            }
        }
    }
}
