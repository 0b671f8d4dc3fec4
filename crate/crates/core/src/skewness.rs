//! The skewness magnitude `d = 2√E{ℂ}`, its scalar reduction to Pearson's moment
//! coefficient, the relative-skewness pseudometric and gamma inverse design.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::functionals::EvaluatedBatch;
use crate::margin::hedge_margin;
use crate::model::{GenerativeModel, HiddenModel, ScalarDist};
use crate::numerics::summation::{mean, std_error};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SkewnessValue {
    pub d: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelativeSkewness {
    pub value: f64,
}

/// `2√E{ℂ(Y)}` with a delta-method standard error.
pub fn skewness_d(batch: &EvaluatedBatch) -> Result<SkewnessValue> {
    let margins: Vec<f64> = batch.map(|_, p, _| Ok(hedge_margin(p)))?;
    let c = mean(&margins);
    if !c.is_finite() {
        return Err(Error::NumericFailure("non-finite expected margin".into()));
    }
    let se_c = std_error(&margins);
    let d = 2.0 * c.max(0.0).sqrt();
    let std_error = if c > 0.0 { se_c / c.sqrt() } else { 0.0 };
    Ok(SkewnessValue { d, std_error })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PearsonCheck {
    pub d: f64,
    pub d_std_error: f64,
    /// Signed Pearson moment coefficient of skewness.
    pub pearson: f64,
    /// `|d - |pearson||`
    pub gap: f64,
}

/// Compares `d` with `|E{((X - m)/σ)³}|` computed from the model's closed-form raw
/// moments. Only for scalar, totally hidden models.
pub fn pearson_reduction_check(
    model: &HiddenModel,
    batch: &EvaluatedBatch,
) -> Result<PearsonCheck> {
    if model.state_dim() != 1 || model.obs_dim() != 0 {
        return Err(Error::InvalidInput(
            "Pearson reduction applies to scalar totally hidden models".into(),
        ));
    }
    let dist: ScalarDist = model.coords()[0];
    let pearson = pearson_from_raw(&dist)?;
    let d = skewness_d(batch)?;
    Ok(PearsonCheck {
        d: d.d,
        d_std_error: d.std_error,
        pearson,
        gap: (d.d - pearson.abs()).abs(),
    })
}

fn pearson_from_raw(dist: &ScalarDist) -> Result<f64> {
    let (m1, m2, m3) = (dist.raw_moment(1), dist.raw_moment(2), dist.raw_moment(3));
    let var = m2 - m1 * m1;
    if !(var > 0.0) {
        return Err(Error::Undefined(
            "Pearson skewness of a zero-variance distribution".into(),
        ));
    }
    let third = m3 - 3.0 * m1 * m2 + 2.0 * m1.powi(3);
    Ok(third / var.powf(1.5))
}

/// `√|d_a² - d_b²|` from already computed skewness values.
pub fn relative_skewness(a: &SkewnessValue, b: &SkewnessValue) -> RelativeSkewness {
    RelativeSkewness {
        value: (a.d * a.d - b.d * b.d).abs().sqrt(),
    }
}

/// Scalar hidden model with `d = alpha`: `Gamma(4/alpha², 1)`, or a standard
/// normal when `alpha = 0`.
pub fn gamma_inverse_design(alpha: f64) -> Result<HiddenModel> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "alpha must be finite and >= 0, got {alpha}"
        )));
    }
    if alpha == 0.0 {
        HiddenModel::new("normal_hidden", vec![ScalarDist::normal(0.0, 1.0)?])
    } else {
        HiddenModel::gamma(&[4.0 / (alpha * alpha)], &[1.0])
    }
}
