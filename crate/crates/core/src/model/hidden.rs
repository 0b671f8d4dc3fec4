use rand_chacha::ChaCha8Rng;

use super::params::ParamReader;
use super::{GenerativeModel, MomentOracle, PosteriorSummary, ScalarDist};
use crate::error::{Error, Result};

/// A totally hidden state with independent coordinates: the only observation is the
/// trivial empty one, so the posterior is the prior.
#[derive(Debug, Clone)]
pub struct HiddenModel {
    name: String,
    coords: Vec<ScalarDist>,
    params: Vec<(String, String)>,
}

impl HiddenModel {
    pub fn new(name: &str, coords: Vec<ScalarDist>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidInput(
                "hidden model needs at least one coordinate".into(),
            ));
        }
        Ok(HiddenModel {
            name: name.to_string(),
            params: vec![("coords".into(), format!("{coords:?}"))],
            coords,
        })
    }

    /// Product of independent `Gamma(kappa_i, theta_i)` coordinates.
    pub fn gamma(kappa: &[f64], theta: &[f64]) -> Result<Self> {
        if kappa.len() != theta.len() {
            return Err(Error::InvalidInput(format!(
                "kappa has {} entries but theta has {}",
                kappa.len(),
                theta.len()
            )));
        }
        let coords = kappa
            .iter()
            .zip(theta)
            .map(|(&k, &t)| ScalarDist::gamma(k, t))
            .collect::<Result<Vec<_>>>()?;
        let mut m = Self::new("gamma_hidden", coords)?;
        m.params = vec![
            ("dim".into(), kappa.len().to_string()),
            ("kappa".into(), join(kappa)),
            ("theta".into(), join(theta)),
        ];
        Ok(m)
    }

    pub(super) fn gamma_from_params(r: &mut ParamReader<'_>) -> Result<Self> {
        let dim = r.usize_or("dim", 0)?;
        let mut kappa = r.list_or("kappa", &[1.0])?;
        let mut theta = r.list_or("theta", &[1.0])?;
        if dim > 0 {
            for v in [&mut kappa, &mut theta] {
                if v.len() == 1 {
                    *v = vec![v[0]; dim];
                }
            }
        }
        if kappa.len() == 1 && theta.len() > 1 {
            kappa = vec![kappa[0]; theta.len()];
        }
        if theta.len() == 1 && kappa.len() > 1 {
            theta = vec![theta[0]; kappa.len()];
        }
        if dim > 0 && kappa.len() != dim {
            return Err(Error::InvalidInput(format!(
                "dim={dim} but {} kappa values given",
                kappa.len()
            )));
        }
        Self::gamma(&kappa, &theta)
    }

    pub(super) fn exponential_from_params(r: &mut ParamReader<'_>) -> Result<Self> {
        let mean = r.f64_or("mean", 1.0)?;
        let mut m = Self::new("exponential_hidden", vec![ScalarDist::exponential(mean)?])?;
        m.params = vec![("mean".into(), mean.to_string())];
        Ok(m)
    }

    pub(super) fn lognormal_from_params(r: &mut ParamReader<'_>) -> Result<Self> {
        let mu = r.f64_or("mu", 0.0)?;
        let s = r.f64_or("s", 1.0)?;
        if s <= 0.0 {
            return Err(Error::InvalidInput(format!("s must be positive, got {s}")));
        }
        let mut m = Self::new("lognormal_hidden", vec![ScalarDist::lognormal(mu, s)?])?;
        m.params = vec![("mu".into(), mu.to_string()), ("s".into(), s.to_string())];
        Ok(m)
    }

    pub(super) fn uniform_from_params(r: &mut ParamReader<'_>) -> Result<Self> {
        let lo = r.f64_or("lo", 0.0)?;
        let hi = r.f64_or("hi", 1.0)?;
        let mut m = Self::new("uniform_hidden", vec![ScalarDist::uniform(lo, hi)?])?;
        m.params = vec![("lo".into(), lo.to_string()), ("hi".into(), hi.to_string())];
        Ok(m)
    }

    pub(super) fn normal_from_params(r: &mut ParamReader<'_>) -> Result<Self> {
        let mean = r.f64_or("mean", 0.0)?;
        let var = r.f64_or("var", 1.0)?;
        let mut m = Self::new("normal_hidden", vec![ScalarDist::normal(mean, var)?])?;
        m.params = vec![
            ("mean".into(), mean.to_string()),
            ("var".into(), var.to_string()),
        ];
        Ok(m)
    }

    pub fn coords(&self) -> &[ScalarDist] {
        &self.coords
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

impl GenerativeModel for HiddenModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn state_dim(&self) -> usize {
        self.coords.len()
    }

    fn obs_dim(&self) -> usize {
        0
    }

    fn parameters(&self) -> Vec<(String, String)> {
        self.params.clone()
    }

    fn sample_joint(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        (
            self.coords.iter().map(|d| d.sample(rng)).collect(),
            Vec::new(),
        )
    }

    fn posterior(&self, y: &[f64]) -> Result<PosteriorSummary> {
        if !y.is_empty() {
            return Err(Error::InvalidInput(
                "totally hidden model accepts only the empty observation".into(),
            ));
        }
        let mean: Vec<f64> = self.coords.iter().map(ScalarDist::mean).collect();
        let marginals: Vec<_> = self
            .coords
            .iter()
            .map(ScalarDist::central_moments)
            .collect();
        // Independent coordinates: R_i = E{Z_i³} + 2 Var(X_i) E{X_i}
        let r_stat = marginals
            .iter()
            .zip(&mean)
            .map(|(c, m)| c.third + 2.0 * c.var * m)
            .collect();
        PosteriorSummary::with_r_stat(mean, MomentOracle::Independent { marginals }, r_stat)
    }
}
