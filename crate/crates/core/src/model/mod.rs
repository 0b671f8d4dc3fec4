//! Generative models of `(X, Y)`: observation sampling and per-observation posteriors.

mod exp_noise;
mod gaussian;
mod hidden;
mod lognormal;
mod params;
mod posterior;
mod sample_file;
mod scalar;

use std::fmt::Debug;
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::RngStream;

pub use exp_noise::ExpNoiseModel;
pub use gaussian::GaussianModel;
pub use hidden::HiddenModel;
pub use lognormal::LognormalMultModel;
pub use params::ModelParams;
pub use posterior::{CentralMoments, MomentOracle, PosteriorSummary, MAX_MOMENT_DEGREE};
pub use sample_file::SampleFileModel;
pub use scalar::ScalarDist;

pub trait GenerativeModel: Debug + Send + Sync {
    fn name(&self) -> &str;

    fn state_dim(&self) -> usize;

    /// Zero for a totally hidden state.
    fn obs_dim(&self) -> usize;

    /// Resolved parameters, including defaults, in a stable order.
    fn parameters(&self) -> Vec<(String, String)>;

    /// One joint draw `(X, Y)`.
    fn sample_joint(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>);

    fn sample_observation(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.sample_joint(rng).1
    }

    fn posterior(&self, y: &[f64]) -> Result<PosteriorSummary>;

    fn is_totally_hidden(&self) -> bool {
        self.obs_dim() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBatch {
    pub samples: Vec<Vec<f64>>,
    pub seed_info: RngStream,
}

impl ObservationBatch {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Draws `count` observations; draw `i` uses counter slot `i` of `rng`. A totally
/// hidden model yields the single empty observation regardless of `count`.
pub fn sample_observations(
    model: &dyn GenerativeModel,
    count: usize,
    rng: RngStream,
) -> Result<ObservationBatch> {
    if count == 0 {
        return Err(Error::InvalidInput(
            "observation count must be at least 1".into(),
        ));
    }
    let samples = if model.is_totally_hidden() {
        vec![Vec::new()]
    } else {
        (0..count as u64)
            .into_par_iter()
            .map(|i| model.sample_observation(&mut rng.generator(i)))
            .collect()
    };
    Ok(ObservationBatch {
        samples,
        seed_info: rng,
    })
}

pub const MODEL_NAMES: &[&str] = &[
    "gaussian",
    "exp_noise",
    "lognormal_mult",
    "gamma_hidden",
    "exponential_hidden",
    "lognormal_hidden",
    "uniform_hidden",
    "normal_hidden",
    "sample_file",
];

/// Constructs a built-in model by name. Unknown parameter keys are rejected.
pub fn build_model(name: &str, params: &ModelParams) -> Result<Arc<dyn GenerativeModel>> {
    let mut reader = params.reader();
    let model: Arc<dyn GenerativeModel> = match name {
        "gaussian" => Arc::new(GaussianModel::from_params(&mut reader)?),
        "exp_noise" => Arc::new(ExpNoiseModel::from_params(&mut reader)?),
        "lognormal_mult" => Arc::new(LognormalMultModel::from_params(&mut reader)?),
        "gamma_hidden" => Arc::new(HiddenModel::gamma_from_params(&mut reader)?),
        "exponential_hidden" => Arc::new(HiddenModel::exponential_from_params(&mut reader)?),
        "lognormal_hidden" => Arc::new(HiddenModel::lognormal_from_params(&mut reader)?),
        "uniform_hidden" => Arc::new(HiddenModel::uniform_from_params(&mut reader)?),
        "normal_hidden" => Arc::new(HiddenModel::normal_from_params(&mut reader)?),
        "sample_file" => Arc::new(SampleFileModel::from_params(&mut reader)?),
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown model '{other}'; expected one of {}",
                MODEL_NAMES.join(", ")
            )))
        }
    };
    reader.finish()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_model_and_keys_rejected() {
        assert!(build_model("nope", &ModelParams::default()).is_err());
        let p = ModelParams::parse(&["bogus=1"]).unwrap();
        assert!(matches!(
            build_model("exp_noise", &p),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn gaussian_batch_is_reproducible() {
        let m = build_model("gaussian", &ModelParams::default()).unwrap();
        let s = RngStream::new(11, 0);
        let a = sample_observations(m.as_ref(), 10, s).unwrap();
        let b = sample_observations(m.as_ref(), 10, s).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        assert!(a.samples.iter().all(|y| y.len() == 1 && y[0].is_finite()));
    }

    #[test]
    fn hidden_batch_is_single_trivial_observation() {
        let m = build_model("gamma_hidden", &ModelParams::default()).unwrap();
        let b = sample_observations(m.as_ref(), 500, RngStream::new(1, 0)).unwrap();
        assert_eq!(b.samples, vec![Vec::<f64>::new()]);
    }

    #[test]
    fn zero_count_rejected() {
        let m = build_model("gaussian", &ModelParams::default()).unwrap();
        assert!(sample_observations(m.as_ref(), 0, RngStream::new(1, 0)).is_err());
    }

    #[test]
    fn exp_noise_observations_finite() {
        let m = build_model("exp_noise", &ModelParams::default()).unwrap();
        let b = sample_observations(m.as_ref(), 2000, RngStream::new(5, 0)).unwrap();
        assert!(b.samples.iter().all(|y| y[0].is_finite()));
    }
}
