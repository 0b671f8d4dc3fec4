//! The risk-aware estimator family `X̂*_μ = (I + 2μΣ)⁻¹ (E{X|Y} + μR)`, its `μ = ∞`
//! limit, the difference vector `Δ̂X = X̂*_0 - X̂*_∞` and the curve identities.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::PosteriorSummary;
use crate::numerics::{eig_sym, norm2_sq, EigenDecomp, DEFAULT_RANK_TOL};

/// Multiple of machine epsilon below which `Δ̂X` components count as cancelled.
const CANCELLATION_ULPS: f64 = 64.0;

/// A Lagrange weight in `[0, ∞]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtendedMu {
    Finite(f64),
    Infinite,
}

impl ExtendedMu {
    pub const ZERO: ExtendedMu = ExtendedMu::Finite(0.0);

    pub fn finite(v: f64) -> Result<Self> {
        if v >= 0.0 && v.is_finite() {
            Ok(ExtendedMu::Finite(v))
        } else {
            Err(Error::InvalidInput(format!(
                "mu must be finite and >= 0, got {v}"
            )))
        }
    }

    /// `f64::INFINITY` for the point at infinity.
    pub fn value(self) -> f64 {
        match self {
            ExtendedMu::Finite(v) => v,
            ExtendedMu::Infinite => f64::INFINITY,
        }
    }

    pub fn as_finite(self) -> Option<f64> {
        match self {
            ExtendedMu::Finite(v) => Some(v),
            ExtendedMu::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, ExtendedMu::Infinite)
    }
}

impl Eq for ExtendedMu {}

impl PartialOrd for ExtendedMu {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtendedMu {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value().total_cmp(&other.value())
    }
}

impl fmt::Display for ExtendedMu {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtendedMu::Finite(v) => write!(f, "{v}"),
            ExtendedMu::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for ExtendedMu {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "Inf" | "infinity" | "∞" => Ok(ExtendedMu::Infinite),
            t => {
                let v: f64 = t
                    .parse()
                    .map_err(|_| Error::InvalidInput(format!("'{t}' is not a valid mu")))?;
                if v == f64::INFINITY {
                    Ok(ExtendedMu::Infinite)
                } else {
                    ExtendedMu::finite(v)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateVector {
    pub x_hat: Vec<f64>,
}

impl EstimateVector {
    fn checked(x_hat: Vec<f64>) -> Result<Self> {
        if x_hat.iter().all(|v| v.is_finite()) {
            Ok(EstimateVector { x_hat })
        } else {
            Err(Error::NumericFailure("non-finite estimate".into()))
        }
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.x_hat
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.x_hat
    }
}

/// Posterior quantities expressed in the eigenbasis of `Σ`.
#[derive(Debug, Clone)]
pub struct SpectralCoords {
    pub lambda: Vec<f64>,
    pub in_range: Vec<bool>,
    /// `Uᵀ E{X|Y}`
    pub mean: Vec<f64>,
    /// `Uᵀ R(Y)`
    pub r: Vec<f64>,
    /// `Uᵀ E{||Z||² Z | Y}`
    pub t: Vec<f64>,
    /// Largest `|[UᵀR]_k|` over null-space directions.
    pub null_residual: f64,
}

impl SpectralCoords {
    pub fn new(p: &PosteriorSummary) -> Self {
        Self::with_eig(p, p.eig())
    }

    pub fn with_eig(p: &PosteriorSummary, e: &EigenDecomp) -> Self {
        let in_range: Vec<bool> = (0..e.dim()).map(|k| e.in_range(k)).collect();
        let r = e.to_basis(&p.r_stat);
        let null_residual = r
            .iter()
            .zip(&in_range)
            .filter(|(_, &on)| !on)
            .map(|(v, _)| v.abs())
            .fold(0.0, f64::max);
        SpectralCoords {
            lambda: e.lambda.clone(),
            in_range,
            mean: e.to_basis(&p.mean),
            r,
            t: e.to_basis(p.skew_vector()),
            null_residual,
        }
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    /// `Uᵀ X̂*_μ`
    pub fn estimate(&self, mu: ExtendedMu) -> Vec<f64> {
        (0..self.dim())
            .map(|k| {
                if !self.in_range[k] {
                    return self.mean[k];
                }
                match mu {
                    ExtendedMu::Finite(m) => {
                        (self.mean[k] + m * self.r[k]) / (1.0 + 2.0 * m * self.lambda[k])
                    }
                    ExtendedMu::Infinite => self.r[k] / (2.0 * self.lambda[k]),
                }
            })
            .collect()
    }

    /// `Uᵀ Δ̂X`; zero on the null space of `Σ`. Components within the rounding error
    /// of the subtraction that produces them are flushed to zero.
    pub fn delta(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|k| {
                if !self.in_range[k] {
                    return 0.0;
                }
                let inf = self.r[k] / (2.0 * self.lambda[k]);
                let d = self.mean[k] - inf;
                if d.abs() <= CANCELLATION_ULPS * f64::EPSILON * (self.mean[k].abs() + inf.abs()) {
                    0.0
                } else {
                    d
                }
            })
            .collect()
    }

    /// `Uᵀ dX̂*_μ/dμ = -2 Λ (I + 2μΛ)⁻² UᵀΔ̂X`
    pub fn slope(&self, mu: f64) -> Vec<f64> {
        (0..self.dim())
            .map(|k| {
                if self.in_range[k] {
                    let den = 1.0 + 2.0 * mu * self.lambda[k];
                    (self.r[k] - 2.0 * self.lambda[k] * self.mean[k]) / (den * den)
                } else {
                    0.0
                }
            })
            .collect()
    }

    fn warn_null_residual(&self) {
        let scale = norm2_sq(&self.r).sqrt();
        if self.null_residual > f64::EPSILON.sqrt() * scale {
            log::warn!(
                "discarding R(Y) component {:.3e} in the null space of the posterior covariance",
                self.null_residual
            );
        }
    }
}

fn eig_for(p: &PosteriorSummary, rel_tol: f64) -> Result<std::borrow::Cow<'_, EigenDecomp>> {
    if rel_tol == DEFAULT_RANK_TOL {
        Ok(std::borrow::Cow::Borrowed(p.eig()))
    } else {
        Ok(std::borrow::Cow::Owned(eig_sym(&p.cov, rel_tol)?))
    }
}

/// `X̂*_μ`, solved by division in the eigenbasis of `Σ`. Eigenvalues below
/// `rel_tol · λ_max` count as zero; on that null space the estimate keeps the mean.
pub fn risk_aware_estimate(
    p: &PosteriorSummary,
    mu: ExtendedMu,
    rel_tol: f64,
) -> Result<EstimateVector> {
    let e = eig_for(p, rel_tol)?;
    let c = SpectralCoords::with_eig(p, &e);
    if mu != ExtendedMu::ZERO {
        c.warn_null_residual();
    }
    EstimateVector::checked(e.from_basis(&c.estimate(mu)))
}

/// `Δ̂X = X̂*_0 - X̂*_∞`
pub fn delta_x(p: &PosteriorSummary) -> Result<Vec<f64>> {
    let c = SpectralCoords::new(p);
    let d = p.eig().from_basis(&c.delta());
    if d.iter().all(|v| v.is_finite()) {
        Ok(d)
    } else {
        Err(Error::NumericFailure("non-finite difference vector".into()))
    }
}

/// `X̂*_0 - U G(μ) UᵀΔ̂X` with `G(μ) = diag(2μσ_k / (1 + 2μσ_k))` on the range of `Σ`.
pub fn curve_shift_identity(p: &PosteriorSummary, mu: f64) -> Result<EstimateVector> {
    let mu = ExtendedMu::finite(mu)?.value();
    let c = SpectralCoords::new(p);
    let x0 = c.estimate(ExtendedMu::ZERO);
    let shifted: Vec<f64> = c
        .delta()
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let g = 2.0 * mu * c.lambda[k] / (1.0 + 2.0 * mu * c.lambda[k]);
            x0[k] - g * d
        })
        .collect();
    EstimateVector::checked(p.eig().from_basis(&shifted))
}

/// `X̂*_μ - X̂*_μ' = -(μ - μ') U H(μ, μ') UᵀΔ̂X` with
/// `H = diag(2σ_k / ((1 + 2μσ_k)(1 + 2μ'σ_k)))`.
pub fn difference_identity(p: &PosteriorSummary, mu: f64, mu_prime: f64) -> Result<Vec<f64>> {
    let mu = ExtendedMu::finite(mu)?.value();
    let mu_prime = ExtendedMu::finite(mu_prime)?.value();
    let c = SpectralCoords::new(p);
    let diff: Vec<f64> = c
        .delta()
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let l = c.lambda[k];
            let h = 2.0 * l / ((1.0 + 2.0 * mu * l) * (1.0 + 2.0 * mu_prime * l));
            -(mu - mu_prime) * h * d
        })
        .collect();
    Ok(p.eig().from_basis(&diff))
}

/// `dX̂*_μ/dμ` at finite `μ`.
pub fn estimate_derivative(p: &PosteriorSummary, mu: f64) -> Result<Vec<f64>> {
    let mu = ExtendedMu::finite(mu)?.value();
    let c = SpectralCoords::new(p);
    Ok(p.eig().from_basis(&c.slope(mu)))
}

/// `max_i ||E{Z_i² Z | Y}|| / (1 + σ_max^{3/2})`; zero exactly when the posterior
/// satisfies the skew-symmetry condition.
pub fn skew_symmetry_residual(p: &PosteriorSummary) -> Result<f64> {
    let n = p.dim();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let row: f64 = (0..n).map(|j| p.third_central(i, j).powi(2)).sum();
        worst = worst.max(row.sqrt());
    }
    if !worst.is_finite() {
        return Err(Error::NumericFailure("non-finite third moment".into()));
    }
    let scale = 1.0 + p.eig().lambda_max().max(0.0).powf(1.5);
    Ok(worst / scale)
}
