//! Scalar distributions with closed-form moments, used by the totally hidden models
//! and by the lognormal posterior.

use rand::Rng;

use super::posterior::CentralMoments;
use crate::error::{Error, Result};
use crate::numerics::rng::{standard_normal, uniform};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScalarDist {
    Gamma { shape: f64, scale: f64 },
    Lognormal { log_mean: f64, log_var: f64 },
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, var: f64 },
}

impl ScalarDist {
    pub fn gamma(shape: f64, scale: f64) -> Result<Self> {
        positive("kappa", shape)?;
        positive("theta", scale)?;
        Ok(ScalarDist::Gamma { shape, scale })
    }

    pub fn exponential(mean: f64) -> Result<Self> {
        positive("mean", mean)?;
        Ok(ScalarDist::Gamma {
            shape: 1.0,
            scale: mean,
        })
    }

    pub fn lognormal(log_mean: f64, log_var: f64) -> Result<Self> {
        finite("mu", log_mean)?;
        if !(log_var >= 0.0 && log_var.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lognormal log-variance must be nonnegative, got {log_var}"
            )));
        }
        Ok(ScalarDist::Lognormal { log_mean, log_var })
    }

    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        finite("lo", lo)?;
        finite("hi", hi)?;
        if lo >= hi {
            return Err(Error::InvalidInput(format!(
                "uniform needs lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(ScalarDist::Uniform { lo, hi })
    }

    pub fn normal(mean: f64, var: f64) -> Result<Self> {
        finite("mean", mean)?;
        if !(var >= 0.0 && var.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "variance must be nonnegative, got {var}"
            )));
        }
        Ok(ScalarDist::Normal { mean, var })
    }

    pub fn mean(&self) -> f64 {
        match *self {
            ScalarDist::Gamma { shape, scale } => shape * scale,
            ScalarDist::Lognormal { log_mean, log_var } => (log_mean + 0.5 * log_var).exp(),
            ScalarDist::Uniform { lo, hi } => 0.5 * (lo + hi),
            ScalarDist::Normal { mean, .. } => mean,
        }
    }

    pub fn central_moments(&self) -> CentralMoments {
        match *self {
            ScalarDist::Gamma { shape: k, scale: t } => CentralMoments {
                var: k * t * t,
                third: 2.0 * k * t.powi(3),
                fourth: 3.0 * k * (k + 2.0) * t.powi(4),
            },
            ScalarDist::Lognormal { log_var: v, .. } => {
                let m = self.mean();
                let em1 = v.exp_m1();
                let ev = v.exp();
                CentralMoments {
                    var: m * m * em1,
                    third: m.powi(3) * em1 * em1 * (ev + 2.0),
                    fourth: m.powi(4)
                        * em1
                        * em1
                        * ((4.0 * v).exp() + 2.0 * (3.0 * v).exp() + 3.0 * (2.0 * v).exp() - 3.0),
                }
            }
            ScalarDist::Uniform { lo, hi } => {
                let w = hi - lo;
                CentralMoments {
                    var: w * w / 12.0,
                    third: 0.0,
                    fourth: w.powi(4) / 80.0,
                }
            }
            ScalarDist::Normal { var, .. } => CentralMoments {
                var,
                third: 0.0,
                fourth: 3.0 * var * var,
            },
        }
    }

    /// `E{X^k}` from the distribution's own closed form, not from the central moments.
    pub fn raw_moment(&self, k: u32) -> f64 {
        match *self {
            ScalarDist::Gamma { shape, scale } => {
                (0..k).map(|j| shape + j as f64).product::<f64>() * scale.powi(k as i32)
            }
            ScalarDist::Lognormal { log_mean, log_var } => {
                let k = k as f64;
                (k * log_mean + 0.5 * k * k * log_var).exp()
            }
            ScalarDist::Uniform { lo, hi } => {
                let k1 = k as i32 + 1;
                (hi.powi(k1) - lo.powi(k1)) / ((hi - lo) * k1 as f64)
            }
            ScalarDist::Normal { mean, var } => match k {
                0 => 1.0,
                1 => mean,
                2 => mean * mean + var,
                3 => mean.powi(3) + 3.0 * mean * var,
                4 => mean.powi(4) + 6.0 * mean * mean * var + 3.0 * var * var,
                _ => f64::NAN,
            },
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            ScalarDist::Gamma { shape, scale } => rand_distr::Distribution::sample(
                &rand_distr::Gamma::new(shape, scale).expect("validated at construction"),
                rng,
            ),
            ScalarDist::Lognormal { log_mean, log_var } => {
                (log_mean + log_var.sqrt() * standard_normal(rng)).exp()
            }
            ScalarDist::Uniform { lo, hi } => lo + (hi - lo) * uniform(rng),
            ScalarDist::Normal { mean, var } => mean + var.sqrt() * standard_normal(rng),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} must be positive and finite, got {v}"
        )))
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{name} must be finite, got {v}"
        )))
    }
}
