use rand_chacha::ChaCha8Rng;

use super::params::ParamReader;
use super::{GenerativeModel, MomentOracle, PosteriorSummary, ScalarDist};
use crate::error::{Error, Result};
use crate::numerics::rng::standard_normal;

/// `Y = X·W` with `(log X, log W) ~ N(0, diag(s_x, s_w))`. Given `Y`, `log X` is
/// Gaussian, so the posterior is lognormal in closed form.
#[derive(Debug, Clone, Copy)]
pub struct LognormalMultModel {
    s_x: f64,
    s_w: f64,
}

pub const DEFAULT_NOISE_LOG_VAR: f64 = 0.25;

impl LognormalMultModel {
    pub fn new(s_x: f64, s_w: f64) -> Result<Self> {
        for (name, v) in [("s_x", s_x), ("s_w", s_w)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(LognormalMultModel { s_x, s_w })
    }

    pub(super) fn from_params(r: &mut ParamReader<'_>) -> Result<Self> {
        let s_x = r.f64_or("s_x", 1.0)?;
        let s_w = r.f64_or("s_w", DEFAULT_NOISE_LOG_VAR)?;
        Self::new(s_x, s_w)
    }

    /// Mean and variance of `log X` given `Y = y`.
    pub fn log_posterior(&self, y: f64) -> Result<(f64, f64)> {
        if !(y > 0.0 && y.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lognormal_mult observations must be positive, got {y}"
            )));
        }
        let total = self.s_x + self.s_w;
        Ok((self.s_x / total * y.ln(), self.s_x * self.s_w / total))
    }
}

impl GenerativeModel for LognormalMultModel {
    fn name(&self) -> &str {
        "lognormal_mult"
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn parameters(&self) -> Vec<(String, String)> {
        vec![
            ("s_x".into(), self.s_x.to_string()),
            ("s_w".into(), self.s_w.to_string()),
        ]
    }

    fn sample_joint(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let x = (self.s_x.sqrt() * standard_normal(rng)).exp();
        let w = (self.s_w.sqrt() * standard_normal(rng)).exp();
        (vec![x], vec![x * w])
    }

    fn posterior(&self, y: &[f64]) -> Result<PosteriorSummary> {
        let [y] = y else {
            return Err(Error::InvalidInput(
                "lognormal_mult expects a scalar observation".into(),
            ));
        };
        let (mp, vp) = self.log_posterior(*y)?;
        let d = ScalarDist::lognormal(mp, vp)?;
        let c = d.central_moments();
        let r = c.third + 2.0 * c.var * d.mean();
        PosteriorSummary::with_r_stat(
            vec![d.mean()],
            MomentOracle::Independent { marginals: vec![c] },
            vec![r],
        )
    }
}
