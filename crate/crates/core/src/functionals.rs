//! Monte Carlo evaluation of `mse(X̂) = E{||X - X̂||²}` and
//! `sev(X̂) = E{Var(||X - X̂||² | Y)}` over a batch of observations, using the exact
//! per-observation conditional expressions.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{ExtendedMu, SpectralCoords};
use crate::model::{GenerativeModel, ObservationBatch, PosteriorSummary};
use crate::numerics::summation::{covariance, mean, std_error, variance};
use crate::numerics::{dot, norm2_sq, RngStream};

/// Largest tolerated fraction of observations whose posterior failed.
pub const MAX_FAILURE_FRACTION: f64 = 1e-3;

/// Multiplier on `E{(X̂ - X̂*_∞)ᵀ Σ (X̂ - X̂*_∞)}` in the quadratic sev formula.
pub const SEV_QUADRATIC_CONSTANT: f64 = 4.0;

/// A deterministic estimator `Y -> X̂(Y)`, given the posterior at `Y`.
pub trait Estimator: Sync {
    fn estimate(&self, y: &[f64], post: &PosteriorSummary) -> Result<Vec<f64>>;

    fn label(&self) -> String;
}

impl<E: Estimator + ?Sized> Estimator for &E {
    fn estimate(&self, y: &[f64], post: &PosteriorSummary) -> Result<Vec<f64>> {
        (**self).estimate(y, post)
    }

    fn label(&self) -> String {
        (**self).label()
    }
}

/// Probe estimators built from the conditional mean and the two ends of the family.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Probe {
    /// `E{X|Y}`
    Mean,
    /// `scale·E{X|Y} + shift` (shift added to every coordinate)
    Affine { scale: f64, shift: f64 },
    /// `(1 - w) X̂*_0 + w X̂*_∞`
    Mix(f64),
    /// Every coordinate equal to the constant.
    Const(f64),
    /// `X̂*_μ`
    Opt(ExtendedMu),
    /// `E{X|Y} + amp·tanh(rate·E{X|Y})`, coordinatewise
    Tanh { amp: f64, rate: f64 },
}

impl Estimator for Probe {
    fn estimate(&self, _y: &[f64], post: &PosteriorSummary) -> Result<Vec<f64>> {
        let m = &post.mean;
        let out = match *self {
            Probe::Mean => m.clone(),
            Probe::Affine { scale, shift } => m.iter().map(|v| scale * v + shift).collect(),
            Probe::Mix(w) => {
                let c = SpectralCoords::new(post);
                let x0 = c.estimate(ExtendedMu::ZERO);
                let xi = c.estimate(ExtendedMu::Infinite);
                let mixed: Vec<f64> = x0
                    .iter()
                    .zip(&xi)
                    .map(|(a, b)| (1.0 - w) * a + w * b)
                    .collect();
                post.eig().from_basis(&mixed)
            }
            Probe::Const(c) => vec![c; m.len()],
            Probe::Opt(mu) => {
                let c = SpectralCoords::new(post);
                post.eig().from_basis(&c.estimate(mu))
            }
            Probe::Tanh { amp, rate } => m.iter().map(|v| v + amp * (rate * v).tanh()).collect(),
        };
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::NumericFailure(format!(
                "probe {self} produced a non-finite estimate"
            )))
        }
    }

    fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Probe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Probe::Mean => f.write_str("mean"),
            Probe::Affine { scale, shift } => write!(f, "affine({scale},{shift})"),
            Probe::Mix(w) => write!(f, "mix({w})"),
            Probe::Const(c) => write!(f, "const({c})"),
            Probe::Opt(mu) => write!(f, "opt({mu})"),
            Probe::Tanh { amp, rate } => write!(f, "tanh({amp},{rate})"),
        }
    }
}

impl FromStr for Probe {
    type Err = Error;

    /// Grammar: `mean | mix(w) | const(c) | affine(a,b) | opt(mu) | tanh(amp,rate)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || {
            Error::InvalidInput(format!(
                "cannot parse probe '{s}'; expected mean, mix(w), const(c), affine(a,b), opt(mu) or tanh(amp,rate)"
            ))
        };
        if s == "mean" {
            return Ok(Probe::Mean);
        }
        let (head, rest) = s.split_once('(').ok_or_else(bad)?;
        let body = rest.strip_suffix(')').ok_or_else(bad)?;
        let args: Vec<&str> = body.split(',').map(str::trim).collect();
        let num = |t: &str| -> Result<f64> {
            let v: f64 = t.parse().map_err(|_| bad())?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad())
            }
        };
        match (head.trim(), args.as_slice()) {
            ("mix", [w]) => Ok(Probe::Mix(num(w)?)),
            ("const", [c]) => Ok(Probe::Const(num(c)?)),
            ("affine", [a, b]) => Ok(Probe::Affine {
                scale: num(a)?,
                shift: num(b)?,
            }),
            ("opt", [mu]) => Ok(Probe::Opt(mu.parse().map_err(|_| bad())?)),
            ("tanh", [a, r]) => Ok(Probe::Tanh {
                amp: num(a)?,
                rate: num(r)?,
            }),
            _ => Err(bad()),
        }
    }
}

/// A batch of observations with their posteriors evaluated once, shared by every
/// functional evaluated on it.
#[derive(Debug, Clone)]
pub struct EvaluatedBatch {
    pub observations: Vec<Vec<f64>>,
    pub posteriors: Vec<PosteriorSummary>,
    pub coords: Vec<SpectralCoords>,
    pub failures: usize,
    pub total: usize,
    pub seed_info: Option<RngStream>,
    pub state_dim: usize,
}

impl EvaluatedBatch {
    /// Evaluates every posterior in parallel. Failed observations are dropped and
    /// counted; more than [`MAX_FAILURE_FRACTION`] failures is an error.
    pub fn evaluate(model: &dyn GenerativeModel, batch: &ObservationBatch) -> Result<Self> {
        let results: Vec<Result<PosteriorSummary>> = batch
            .samples
            .par_iter()
            .map(|y| model.posterior(y))
            .collect();
        let total = results.len();
        let mut observations = Vec::with_capacity(total);
        let mut posteriors = Vec::with_capacity(total);
        let mut failures = 0;
        for (y, r) in batch.samples.iter().zip(results) {
            match r {
                Ok(p) => {
                    observations.push(y.clone());
                    posteriors.push(p);
                }
                Err(e) => {
                    log::debug!("posterior failed at y = {y:?}: {e}");
                    failures += 1;
                }
            }
        }
        if posteriors.is_empty() || failures as f64 > MAX_FAILURE_FRACTION * total as f64 {
            return Err(Error::TooManyFailures {
                failed: failures,
                total,
            });
        }
        let mut out = Self::from_posteriors(observations, posteriors)?;
        out.failures = failures;
        out.total = total;
        out.seed_info = Some(batch.seed_info);
        out.state_dim = model.state_dim();
        Ok(out)
    }

    pub fn from_posteriors(
        observations: Vec<Vec<f64>>,
        posteriors: Vec<PosteriorSummary>,
    ) -> Result<Self> {
        if posteriors.is_empty() || observations.len() != posteriors.len() {
            return Err(Error::InvalidInput(
                "need one or more observations, each with a posterior".into(),
            ));
        }
        let state_dim = posteriors[0].dim();
        if posteriors.iter().any(|p| p.dim() != state_dim) {
            return Err(Error::InvalidInput(
                "posteriors of differing dimension".into(),
            ));
        }
        let coords = posteriors.par_iter().map(SpectralCoords::new).collect();
        let total = posteriors.len();
        Ok(EvaluatedBatch {
            observations,
            posteriors,
            coords,
            failures: 0,
            total,
            seed_info: None,
            state_dim,
        })
    }

    pub fn len(&self) -> usize {
        self.posteriors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.posteriors.is_empty()
    }

    /// Applies `f` to every observation in parallel, keeping batch order.
    pub fn map<T: Send>(
        &self,
        f: impl Fn(&[f64], &PosteriorSummary, &SpectralCoords) -> Result<T> + Sync + Send,
    ) -> Result<Vec<T>> {
        (0..self.len())
            .into_par_iter()
            .map(|i| f(&self.observations[i], &self.posteriors[i], &self.coords[i]))
            .collect()
    }

    /// Every posterior's covariance has full rank.
    pub fn all_full_rank(&self) -> bool {
        self.posteriors.iter().all(|p| p.eig().rank == p.dim())
    }
}

/// A Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FunctionalEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

impl FunctionalEstimate {
    pub fn from_terms(terms: &[f64]) -> Self {
        FunctionalEstimate {
            value: mean(terms),
            std_error: std_error(terms),
            n_samples: terms.len(),
        }
    }

    pub fn exact(value: f64) -> Self {
        FunctionalEstimate {
            value,
            std_error: 0.0,
            n_samples: 1,
        }
    }

    /// `E{a}·E{b}` with a delta-method standard error from paired terms.
    pub fn product(a: &[f64], b: &[f64]) -> Self {
        let (ma, mb) = (mean(a), mean(b));
        let n = a.len();
        let var = if n > 1 {
            (mb * mb * variance(a) + ma * ma * variance(b) + 2.0 * ma * mb * covariance(a, b))
                / n as f64
        } else {
            0.0
        };
        FunctionalEstimate {
            value: ma * mb,
            std_error: var.max(0.0).sqrt(),
            n_samples: n,
        }
    }
}

/// Slack for comparing two estimates: three combined standard errors plus a
/// floating-point allowance relative to their magnitude.
pub fn tolerance(se_a: f64, se_b: f64, scale: f64) -> f64 {
    3.0 * se_a.hypot(se_b) + 1e-10 * (1.0 + scale.abs())
}

/// Standard error of `E{a - b}` for paired terms.
pub fn paired_std_error(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    std_error(&d)
}

fn check_dim(est: &[f64], post: &PosteriorSummary) -> Result<()> {
    if est.len() != post.dim() {
        return Err(Error::InvalidInput(format!(
            "estimator returned {} coordinates for a {}-dimensional state",
            est.len(),
            post.dim()
        )));
    }
    if !est.iter().all(|v| v.is_finite()) {
        return Err(Error::NumericFailure("non-finite estimate".into()));
    }
    Ok(())
}

/// `E{||X - x||² | Y} = trace Σ + ||E{X|Y} - x||²`
pub fn conditional_mse(post: &PosteriorSummary, est: &[f64]) -> f64 {
    post.mmse()
        + post
            .mean
            .iter()
            .zip(est)
            .map(|(m, e)| (m - e).powi(2))
            .sum::<f64>()
}

/// `Var{||X - x||² | Y} = Var{||Z||²} + 4 aᵀΣa + 4 aᵀE{||Z||² Z}` with `a = E{X|Y} - x`.
pub fn conditional_sev(post: &PosteriorSummary, est: &[f64]) -> f64 {
    let a: Vec<f64> = post.mean.iter().zip(est).map(|(m, e)| m - e).collect();
    let v = post.var_norm_sq() + 4.0 * post.cov.quad_form(&a) + 4.0 * dot(&a, post.skew_vector());
    v.max(0.0)
}

/// Per-observation terms `(E{||X - X̂||² | Y}, Var{||X - X̂||² | Y})`.
pub fn conditional_terms(
    batch: &EvaluatedBatch,
    est: &dyn Estimator,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let pairs = batch.map(|y, p, _| {
        let x = est.estimate(y, p)?;
        check_dim(&x, p)?;
        Ok((conditional_mse(p, &x), conditional_sev(p, &x)))
    })?;
    Ok(pairs.into_iter().unzip())
}

pub fn mse_of(batch: &EvaluatedBatch, est: &dyn Estimator) -> Result<FunctionalEstimate> {
    let terms = batch.map(|y, p, _| {
        let x = est.estimate(y, p)?;
        check_dim(&x, p)?;
        Ok(conditional_mse(p, &x))
    })?;
    Ok(FunctionalEstimate::from_terms(&terms))
}

pub fn sev_direct(batch: &EvaluatedBatch, est: &dyn Estimator) -> Result<FunctionalEstimate> {
    let terms = batch.map(|y, p, _| {
        let x = est.estimate(y, p)?;
        check_dim(&x, p)?;
        Ok(conditional_sev(p, &x))
    })?;
    Ok(FunctionalEstimate::from_terms(&terms))
}

/// `E{(X̂ - X̂*_∞)ᵀ Σ (X̂ - X̂*_∞)}` per observation.
fn quadratic_terms(batch: &EvaluatedBatch, est: &dyn Estimator) -> Result<Vec<f64>> {
    batch.map(|y, p, c| {
        let x = est.estimate(y, p)?;
        check_dim(&x, p)?;
        let x_inf = p.eig().from_basis(&c.estimate(ExtendedMu::Infinite));
        let d: Vec<f64> = x.iter().zip(&x_inf).map(|(a, b)| a - b).collect();
        Ok(p.cov.quad_form(&d))
    })
}

/// `baseline + c·E{(X̂ - X̂*_∞)ᵀ Σ (X̂ - X̂*_∞)}`, where `baseline` is the sev of
/// `X̂*_∞` on the same batch.
pub fn sev_quadratic(
    batch: &EvaluatedBatch,
    est: &dyn Estimator,
    baseline: &FunctionalEstimate,
    c: f64,
) -> Result<FunctionalEstimate> {
    let q = FunctionalEstimate::from_terms(&quadratic_terms(batch, est)?);
    Ok(FunctionalEstimate {
        value: baseline.value + c * q.value,
        std_error: baseline.std_error.hypot(c * q.std_error),
        n_samples: q.n_samples,
    })
}

/// Evaluates sev both directly and through the quadratic form, failing with a
/// consistency error when they disagree beyond statistical tolerance.
pub fn sev_cross_check(
    batch: &EvaluatedBatch,
    est: &dyn Estimator,
) -> Result<(FunctionalEstimate, FunctionalEstimate)> {
    let direct = sev_direct(batch, est)?;
    let baseline = sev_direct(batch, &Probe::Opt(ExtendedMu::Infinite))?;
    let quad = sev_quadratic(batch, est, &baseline, SEV_QUADRATIC_CONSTANT)?;
    let tol = tolerance(direct.std_error, quad.std_error, direct.value);
    if (direct.value - quad.value).abs() > tol {
        return Err(Error::Consistency(format!(
            "sev of {} is {} directly but {} through the quadratic form",
            est.label(),
            direct.value,
            quad.value
        )));
    }
    Ok((direct, quad))
}

/// Recovers the quadratic-form constant from direct sev evaluations:
/// `(sev(X̂) - sev(X̂*_∞)) / E{(X̂ - X̂*_∞)ᵀ Σ (X̂ - X̂*_∞)}`.
pub fn calibrate_sev_constant(batch: &EvaluatedBatch, est: &dyn Estimator) -> Result<f64> {
    let q = mean(&quadratic_terms(batch, est)?);
    if q <= 0.0 {
        return Err(Error::Undefined(format!(
            "{} coincides with the minimum-sev estimator in the Σ-norm",
            est.label()
        )));
    }
    let direct = sev_direct(batch, est)?.value;
    let baseline = sev_direct(batch, &Probe::Opt(ExtendedMu::Infinite))?.value;
    Ok((direct - baseline) / q)
}

/// mse and sev of `X̂*_μ` on a shared batch, with the per-observation terms kept for
/// paired comparisons between points.
#[derive(Debug, Clone, Serialize)]
pub struct FrontierPoint {
    pub mu: ExtendedMuRepr,
    pub mse: FunctionalEstimate,
    pub sev: FunctionalEstimate,
    pub product: FunctionalEstimate,
    #[serde(skip)]
    pub mse_terms: Vec<f64>,
    #[serde(skip)]
    pub sev_terms: Vec<f64>,
}

/// Serialized form of a weight: a number, or the string `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendedMuRepr(pub ExtendedMu);

impl Serialize for ExtendedMuRepr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self.0 {
            ExtendedMu::Finite(v) => s.serialize_f64(v),
            ExtendedMu::Infinite => s.serialize_str("inf"),
        }
    }
}

impl FrontierPoint {
    pub fn mu(&self) -> ExtendedMu {
        self.mu.0
    }
}

/// Per-observation `(mse, sev)` of `X̂*_μ` in the eigenbasis of `Σ`.
pub fn frontier_terms_at(
    post: &PosteriorSummary,
    c: &SpectralCoords,
    mu: ExtendedMu,
) -> (f64, f64) {
    let x = c.estimate(mu);
    let a: Vec<f64> = c.mean.iter().zip(&x).map(|(m, v)| m - v).collect();
    let mse = post.mmse() + norm2_sq(&a);
    let quad: f64 = a.iter().zip(&c.lambda).map(|(v, l)| l * v * v).sum();
    let sev = post.var_norm_sq() + 4.0 * quad + 4.0 * dot(&a, &c.t);
    (mse, sev.max(0.0))
}

pub fn frontier_point(batch: &EvaluatedBatch, mu: ExtendedMu) -> Result<FrontierPoint> {
    let pairs = batch.map(|_, p, c| Ok(frontier_terms_at(p, c, mu)))?;
    let (mse_terms, sev_terms): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    if mse_terms.iter().chain(&sev_terms).any(|v| !v.is_finite()) {
        return Err(Error::NumericFailure(format!(
            "non-finite frontier terms at mu = {mu}"
        )));
    }
    Ok(FrontierPoint {
        mu: ExtendedMuRepr(mu),
        mse: FunctionalEstimate::from_terms(&mse_terms),
        sev: FunctionalEstimate::from_terms(&sev_terms),
        product: FunctionalEstimate::product(&mse_terms, &sev_terms),
        mse_terms,
        sev_terms,
    })
}
