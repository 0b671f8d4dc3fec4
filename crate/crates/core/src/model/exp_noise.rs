use rand_chacha::ChaCha8Rng;

use super::params::ParamReader;
use super::{CentralMoments, GenerativeModel, MomentOracle, PosteriorSummary};
use crate::error::{Error, Result};
use crate::numerics::rng::{standard_normal, uniform};
use crate::numerics::{integrate_vec, Domain, QuadOptions};

/// Scalar `X ~ Exponential(mean)` observed as `Y = X + v`, `v | X ~ N(0, (noise_scale·X)²)`.
///
/// Posterior moments come from quadrature in `s = ln x`, where the unnormalized
/// posterior is `exp(-e^s/mean - (y e^{-s} - 1)² / (2 noise_scale²))`.
#[derive(Debug, Clone, Copy)]
pub struct ExpNoiseModel {
    mean: f64,
    noise_scale: f64,
}

pub const QUAD_ABS_TOL: f64 = 1e-12;
pub const QUAD_REL_TOL: f64 = 1e-9;
/// Support is truncated where the density drops below this fraction of its peak.
pub const TAIL_CUTOFF: f64 = 1e-300;

const BRACKET_STEP: f64 = 8.0;
const MAX_BRACKET_STEPS: usize = 200;
const BISECTION_ITERS: usize = 100;

impl ExpNoiseModel {
    pub fn new(mean: f64, noise_scale: f64) -> Result<Self> {
        for (name, v) in [("mean", mean), ("noise_scale", noise_scale)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(ExpNoiseModel { mean, noise_scale })
    }

    pub(super) fn from_params(r: &mut ParamReader<'_>) -> Result<Self> {
        let mean = r.f64_or("mean", 2.0)?;
        let noise_scale = r.f64_or("noise_scale", 3.0)?;
        Self::new(mean, noise_scale)
    }

    fn log_kernel(&self, s: f64, y: f64) -> f64 {
        let w = y * (-s).exp();
        let k2 = self.noise_scale * self.noise_scale;
        -s.exp() / self.mean - (w - 1.0) * (w - 1.0) / (2.0 * k2)
    }

    fn log_kernel_slope(&self, s: f64, y: f64) -> f64 {
        let w = y * (-s).exp();
        let k2 = self.noise_scale * self.noise_scale;
        -s.exp() / self.mean + w * (w - 1.0) / k2
    }

    /// Mode and truncated support `[lo, hi]` of the log-domain kernel.
    fn support(&self, y: f64) -> Result<LogSupport> {
        if !(y.is_finite() && y != 0.0) {
            return Err(Error::InvalidInput(format!(
                "exp_noise observation must be finite and nonzero, got {y}"
            )));
        }
        let mut lo = y.abs().ln() - BRACKET_STEP;
        let mut hi = y.abs().ln().max(self.mean.ln()) + BRACKET_STEP;
        expand(&mut lo, -BRACKET_STEP, |s| {
            self.log_kernel_slope(s, y) > 0.0
        })?;
        expand(&mut hi, BRACKET_STEP, |s| self.log_kernel_slope(s, y) < 0.0)?;
        let mode = bisect(lo, hi, |s| self.log_kernel_slope(s, y) > 0.0);
        let peak = self.log_kernel(mode, y);
        if !peak.is_finite() {
            return Err(Error::InvalidInput(format!(
                "exp_noise observation {y} is outside the numeric support"
            )));
        }
        let floor = peak + TAIL_CUTOFF.ln();
        let mut lo_t = mode - BRACKET_STEP;
        let mut hi_t = mode + BRACKET_STEP;
        expand(&mut lo_t, -BRACKET_STEP, |s| self.log_kernel(s, y) < floor)?;
        expand(&mut hi_t, BRACKET_STEP, |s| self.log_kernel(s, y) < floor)?;
        let lo = bisect(lo_t, mode, |s| self.log_kernel(s, y) < floor);
        let hi = bisect(mode, hi_t, |s| self.log_kernel(s, y) >= floor);
        Ok(LogSupport { lo, mode, hi, peak })
    }

    fn integrate<const N: usize>(
        &self,
        sup: &LogSupport,
        f: impl Fn(f64) -> [f64; N],
    ) -> Result<[f64; N]> {
        let opts = QuadOptions::new(QUAD_ABS_TOL, QUAD_REL_TOL);
        let left = integrate_vec(&f, Domain::new(sup.lo, sup.mode), opts)?;
        let right = integrate_vec(&f, Domain::new(sup.mode, sup.hi), opts)?;
        Ok(std::array::from_fn(|k| left.value[k] + right.value[k]))
    }

    /// Normalized posterior density of `X` at `Y = y`, on `x > 0`.
    pub fn posterior_density(&self, y: f64) -> Result<impl Fn(f64) -> f64 + '_> {
        let sup = self.support(y)?;
        let [z] = self.integrate(&sup, |s| [(self.log_kernel(s, y) - sup.peak).exp()])?;
        Ok(move |x: f64| {
            if x <= 0.0 {
                0.0
            } else {
                let s = x.ln();
                (self.log_kernel(s, y) - sup.peak).exp() / (x * z)
            }
        })
    }
}

#[derive(Debug, Clone, Copy)]
struct LogSupport {
    lo: f64,
    mode: f64,
    hi: f64,
    peak: f64,
}

/// Moves `x` by `step` until `done(x)` holds.
fn expand(x: &mut f64, step: f64, done: impl Fn(f64) -> bool) -> Result<()> {
    for _ in 0..MAX_BRACKET_STEPS {
        if done(*x) {
            return Ok(());
        }
        *x += step;
    }
    Err(Error::NumericFailure(
        "could not bracket the exp_noise posterior".into(),
    ))
}

/// Boundary between `pred == true` (at `lo`) and `pred == false` (at `hi`).
fn bisect(mut lo: f64, mut hi: f64, pred: impl Fn(f64) -> bool) -> f64 {
    for _ in 0..BISECTION_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

impl GenerativeModel for ExpNoiseModel {
    fn name(&self) -> &str {
        "exp_noise"
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn parameters(&self) -> Vec<(String, String)> {
        vec![
            ("mean".into(), self.mean.to_string()),
            ("noise_scale".into(), self.noise_scale.to_string()),
        ]
    }

    fn sample_joint(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let x = -self.mean * (1.0 - uniform(rng)).ln();
        let y = x + self.noise_scale * x * standard_normal(rng);
        (vec![x], vec![y])
    }

    fn posterior(&self, y: &[f64]) -> Result<PosteriorSummary> {
        let [y] = *y else {
            return Err(Error::InvalidInput(
                "exp_noise expects a scalar observation".into(),
            ));
        };
        let sup = self.support(y)?;
        let q = |s: f64| (self.log_kernel(s, y) - sup.peak).exp();
        let raw = self.integrate(&sup, |s| {
            let w = q(s);
            let x = s.exp();
            [w, x * w, x * x * w, x * x * x * w]
        })?;
        let z = raw[0];
        if !(z > 0.0 && z.is_finite()) {
            return Err(Error::NumericFailure(format!(
                "posterior normalizer {z} at y = {y}"
            )));
        }
        let m = raw[1] / z;
        let central = self.integrate(&sup, |s| {
            let w = q(s);
            let d = s.exp() - m;
            let d2 = d * d;
            [d2 * w, d2 * d * w, d2 * d2 * w]
        })?;
        let moments = CentralMoments {
            var: central[0] / z,
            third: central[1] / z,
            fourth: central[2] / z,
        };
        let r = raw[3] / z - raw[2] / z * m;
        PosteriorSummary::with_r_stat(
            vec![m],
            MomentOracle::Independent {
                marginals: vec![moments],
            },
            vec![r],
        )
    }
}
