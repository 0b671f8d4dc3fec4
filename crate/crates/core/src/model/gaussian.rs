use rand_chacha::ChaCha8Rng;

use super::params::ParamReader;
use super::{GenerativeModel, MomentOracle, PosteriorSummary};
use crate::error::{Error, Result};
use crate::numerics::rng::standard_normal;
use crate::numerics::{eig_sym, SymMatrix, DEFAULT_RANK_TOL};

/// `X ~ N(prior_mean·1, P)` with equicorrelated prior `P`, observed as `Y = X + V`,
/// `V ~ N(0, noise_var·I)`. The posterior is Gaussian with a constant covariance.
#[derive(Debug, Clone)]
pub struct GaussianModel {
    dim: usize,
    prior_mean: f64,
    prior_var: f64,
    prior_corr: f64,
    noise_var: f64,
    prior_sqrt: SymMatrix,
    gain: SymMatrix,
    post_cov: SymMatrix,
}

impl GaussianModel {
    pub fn new(
        dim: usize,
        prior_mean: f64,
        prior_var: f64,
        prior_corr: f64,
        noise_var: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("gaussian model needs dim >= 1".into()));
        }
        if !(prior_var >= 0.0 && prior_var.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "prior_var must be >= 0, got {prior_var}"
            )));
        }
        if !(noise_var > 0.0 && noise_var.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise_var must be > 0, got {noise_var}"
            )));
        }
        let corr_floor = if dim > 1 {
            -1.0 / (dim as f64 - 1.0)
        } else {
            -1.0
        };
        if !(prior_corr >= corr_floor && prior_corr <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "prior_corr {prior_corr} makes the prior covariance indefinite (allowed [{corr_floor}, 1])"
            )));
        }
        let prior = SymMatrix::from_fn(dim, |i, j| {
            if i == j {
                prior_var
            } else {
                prior_var * prior_corr
            }
        });
        let e = eig_sym(&prior, DEFAULT_RANK_TOL)?;
        // P, P + cI and their functions share eigenvectors.
        let prior_sqrt = e.spectral_map(|p, _| p.max(0.0).sqrt());
        let gain = e.spectral_map(|p, _| p.max(0.0) / (p.max(0.0) + noise_var));
        let post_cov = e.spectral_map(|p, _| {
            let p = p.max(0.0);
            p * noise_var / (p + noise_var)
        });
        Ok(GaussianModel {
            dim,
            prior_mean,
            prior_var,
            prior_corr,
            noise_var,
            prior_sqrt,
            gain,
            post_cov,
        })
    }

    pub(super) fn from_params(r: &mut ParamReader<'_>) -> Result<Self> {
        let dim = r.usize_or("dim", 1)?;
        let mean = r.f64_or("prior_mean", 1.0)?;
        let var = r.f64_or("prior_var", 1.0)?;
        let corr = r.f64_or("prior_corr", 0.0)?;
        let noise = r.f64_or("noise_var", 0.5)?;
        Self::new(dim, mean, var, corr, noise)
    }

    pub fn posterior_cov(&self) -> &SymMatrix {
        &self.post_cov
    }
}

impl GenerativeModel for GaussianModel {
    fn name(&self) -> &str {
        "gaussian"
    }

    fn state_dim(&self) -> usize {
        self.dim
    }

    fn obs_dim(&self) -> usize {
        self.dim
    }

    fn parameters(&self) -> Vec<(String, String)> {
        vec![
            ("dim".into(), self.dim.to_string()),
            ("prior_mean".into(), self.prior_mean.to_string()),
            ("prior_var".into(), self.prior_var.to_string()),
            ("prior_corr".into(), self.prior_corr.to_string()),
            ("noise_var".into(), self.noise_var.to_string()),
        ]
    }

    fn sample_joint(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let xi: Vec<f64> = (0..self.dim).map(|_| standard_normal(rng)).collect();
        let x: Vec<f64> = self
            .prior_sqrt
            .mul_vec(&xi)
            .into_iter()
            .map(|v| v + self.prior_mean)
            .collect();
        let sd = self.noise_var.sqrt();
        let y = x.iter().map(|&xv| xv + sd * standard_normal(rng)).collect();
        (x, y)
    }

    fn posterior(&self, y: &[f64]) -> Result<PosteriorSummary> {
        if y.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "observation has dimension {}, expected {}",
                y.len(),
                self.dim
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite observation".into()));
        }
        let innovation: Vec<f64> = y.iter().map(|v| v - self.prior_mean).collect();
        let mean: Vec<f64> = self
            .gain
            .mul_vec(&innovation)
            .into_iter()
            .map(|v| v + self.prior_mean)
            .collect();
        let r_stat = self
            .post_cov
            .mul_vec(&mean)
            .into_iter()
            .map(|v| 2.0 * v)
            .collect();
        PosteriorSummary::with_r_stat(
            mean,
            MomentOracle::Gaussian {
                cov: self.post_cov.clone(),
            },
            r_stat,
        )
    }
}
