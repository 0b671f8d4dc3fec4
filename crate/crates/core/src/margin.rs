//! Hedgeable risk margin `ℂ(Y) = ||Δ̂X||²_{Σ⁺}`, its expectation bounds, the
//! skewness magnitude `d = 2√E{ℂ}` and the uniform bounds on `mse·sev - anchor`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{ExtendedMu, SpectralCoords};
use crate::functionals::{frontier_point, EvaluatedBatch, FunctionalEstimate};
use crate::model::PosteriorSummary;
use crate::numerics::summation::{mean, quantile, variance};
use crate::numerics::{integrate_1d, norm2_sq, Domain};

pub const DEFAULT_RHO_QUANTILE: f64 = 0.001;
pub const DEFAULT_PROJECTION_HORIZON: f64 = 1e6;

/// `ℂ(Y)`: squared `Σ⁺`-norm of `Δ̂X`, zero on the null space of `Σ`.
pub fn hedge_margin(p: &PosteriorSummary) -> f64 {
    margin_of(&SpectralCoords::new(p))
}

fn margin_of(c: &SpectralCoords) -> f64 {
    c.delta()
        .iter()
        .enumerate()
        .filter(|&(k, _)| c.in_range[k])
        .map(|(k, d)| d * d / c.lambda[k])
        .sum()
}

/// User-supplied spectral bounds that replace the estimated ones.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct RhoOverrides {
    pub rho_min: Option<f64>,
    pub rho_max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralStats {
    /// Absent when some sampled posterior is rank-deficient.
    pub rho_min: Option<f64>,
    pub rho_max: f64,
    pub quantile_used: f64,
    pub observed_min: Option<f64>,
    pub observed_max: f64,
    pub rho_min_overridden: bool,
    pub rho_max_overridden: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MarginReport {
    #[serde(skip)]
    pub c_values: Vec<f64>,
    /// `||Δ̂X(Y)||²` per observation.
    #[serde(skip)]
    pub delta_norm_sq: Vec<f64>,
    pub expected_margin: FunctionalEstimate,
    pub d_value: f64,
    /// `E{||Δ̂X||²/σ_max}`
    pub e_lower: FunctionalEstimate,
    /// `E{||Δ̂X||²/σ_min}` over nonzero eigenvalues
    pub e_upper: FunctionalEstimate,
    /// `mse(X̂*_0)`
    pub mse0: f64,
    /// `sev(X̂*_∞)`
    pub sev_inf: f64,
    pub u_bound: f64,
    pub spectral: SpectralStats,
}

impl MarginReport {
    /// Lower bound on `mse(X̂*_μ)sev(X̂*_μ) - anchor`; zero at `μ = ∞`.
    pub fn l_bound(&self, mu: ExtendedMu) -> Result<f64> {
        bound_lower(self, self.mse0, self.sev_inf, mu)
    }
}

/// Evaluates margins, their sandwich bounds and spectral statistics on a batch.
pub fn margin_report(
    batch: &EvaluatedBatch,
    quantile_level: f64,
    overrides: RhoOverrides,
) -> Result<MarginReport> {
    if !(quantile_level > 0.0 && quantile_level <= 0.05) {
        return Err(Error::InvalidInput(format!(
            "rho quantile must lie in (0, 0.05], got {quantile_level}"
        )));
    }
    for (name, v) in [
        ("rho_min", overrides.rho_min),
        ("rho_max", overrides.rho_max),
    ] {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
    }
    struct Row {
        c: f64,
        d2: f64,
        lower: f64,
        upper: f64,
        lmax: f64,
        lmin: Option<f64>,
        full_rank: bool,
    }
    let rows = batch.map(|_, p, c| {
        let d2 = norm2_sq(&c.delta());
        let e = p.eig();
        let lmax = e.lambda_max().max(0.0);
        let lmin = e.lambda_min_nonzero();
        let (lower, upper) = if e.rank == 0 {
            (0.0, 0.0)
        } else {
            (d2 / lmax, d2 / lmin.expect("rank > 0"))
        };
        Ok(Row {
            c: margin_of(c),
            d2,
            lower,
            upper,
            lmax,
            lmin,
            full_rank: e.rank == p.dim(),
        })
    })?;

    let c_values: Vec<f64> = rows.iter().map(|r| r.c).collect();
    let delta_norm_sq: Vec<f64> = rows.iter().map(|r| r.d2).collect();
    let lower: Vec<f64> = rows.iter().map(|r| r.lower).collect();
    let upper: Vec<f64> = rows.iter().map(|r| r.upper).collect();
    let lmax: Vec<f64> = rows.iter().map(|r| r.lmax).collect();
    let all_full = rows.iter().all(|r| r.full_rank);
    let lmin: Vec<f64> = rows.iter().filter_map(|r| r.lmin).collect();

    let observed_max = lmax.iter().copied().fold(0.0, f64::max);
    let observed_min = if all_full && !lmin.is_empty() {
        Some(lmin.iter().copied().fold(f64::INFINITY, f64::min))
    } else {
        None
    };
    let est_max = quantile(&lmax, 1.0 - quantile_level);
    let est_min = observed_min.map(|_| quantile(&lmin, quantile_level));
    let spectral = SpectralStats {
        rho_min: overrides.rho_min.or(est_min),
        rho_max: overrides.rho_max.unwrap_or(est_max),
        quantile_used: quantile_level,
        observed_min,
        observed_max,
        rho_min_overridden: overrides.rho_min.is_some(),
        rho_max_overridden: overrides.rho_max.is_some(),
    };

    let mse0 = mean(
        &batch
            .posteriors
            .iter()
            .map(PosteriorSummary::mmse)
            .collect::<Vec<_>>(),
    );
    let sev_inf = frontier_point(batch, ExtendedMu::Infinite)?.sev.value;
    let expected_margin = FunctionalEstimate::from_terms(&c_values);
    let mut report = MarginReport {
        d_value: 2.0 * expected_margin.value.max(0.0).sqrt(),
        expected_margin,
        e_lower: FunctionalEstimate::from_terms(&lower),
        e_upper: FunctionalEstimate::from_terms(&upper),
        c_values,
        delta_norm_sq,
        mse0,
        sev_inf,
        u_bound: 0.0,
        spectral,
    };
    report.u_bound = bound_upper(&report, mse0, sev_inf);
    Ok(report)
}

/// `(ρ_max² mse0 + ρ_max sev_inf) d² + ρ_max³ d⁴`
pub fn bound_upper(report: &MarginReport, mse0: f64, sev_inf: f64) -> f64 {
    let r = report.spectral.rho_max;
    let d2 = report.d_value * report.d_value;
    (r * r * mse0 + r * sev_inf) * d2 + r.powi(3) * d2 * d2
}

/// `(α mse0 + ρ_min μ² α sev_inf) d² + ρ_min μ² α² d⁴` with
/// `α(μ) = ρ_min² / (4 (1 + 2μρ_max)²)`; zero at `μ = ∞`.
pub fn bound_lower(report: &MarginReport, mse0: f64, sev_inf: f64, mu: ExtendedMu) -> Result<f64> {
    let rho_min = report.spectral.rho_min.ok_or_else(|| {
        Error::Unavailable(
            "lower bound needs rho_min, but a sampled posterior covariance is rank-deficient"
                .into(),
        )
    })?;
    let Some(mu) = mu.as_finite() else {
        return Ok(0.0);
    };
    let rho_max = report.spectral.rho_max;
    let d2 = report.d_value * report.d_value;
    let alpha = 0.25 * rho_min * rho_min / (1.0 + 2.0 * mu * rho_max).powi(2);
    let m2 = mu * mu;
    Ok((alpha * mse0 + rho_min * m2 * alpha * sev_inf) * d2
        + rho_min * m2 * alpha * alpha * d2 * d2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MuStarLocalization {
    pub eps: f64,
    /// `√E{||UᵀΔ̂X||²} / (ε ρ_min √E{||Δ̂X||²})`
    pub leading: f64,
    /// `Var(||Δ̂X||²) / (ε E{||Δ̂X||²}^{3/2})`
    pub remainder: f64,
}

/// Diagnostic upper estimate for `μ*`; the remainder is reported, not bounded.
pub fn mu_star_localization(
    report: &MarginReport,
    batch: &EvaluatedBatch,
    eps: f64,
) -> Result<MuStarLocalization> {
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let rho_min = report
        .spectral
        .rho_min
        .ok_or_else(|| Error::Unavailable("mu* localization needs rho_min".into()))?;
    let rotated: Vec<f64> = batch.coords.iter().map(|c| norm2_sq(&c.delta())).collect();
    let e_d2 = mean(&report.delta_norm_sq);
    if e_d2 <= 0.0 {
        return Err(Error::Undefined(
            "E{||Δ̂X||²} is zero: the estimator family collapses to the conditional mean".into(),
        ));
    }
    Ok(MuStarLocalization {
        eps,
        leading: mean(&rotated).sqrt() / (eps * rho_min * e_d2.sqrt()),
        remainder: variance(&report.delta_norm_sq) / (eps * e_d2.powf(1.5)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProjectionIntegral {
    pub value: f64,
    /// Bound on the part of the integral beyond the horizon.
    pub tail_bound: f64,
    pub quadrature_error: f64,
}

/// `∫₀^T ⟨Σ⁺(X̂*_∞ - X̂*_0), dX̂*_τ/dτ⟩ dτ`, which tends to `ℂ(Y)` as `T → ∞`.
pub fn projection_integral(p: &PosteriorSummary, horizon: f64) -> Result<ProjectionIntegral> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    let c = SpectralCoords::new(p);
    // Σ⁺(X̂*_∞ - X̂*_0) in the eigenbasis
    let weights: Vec<f64> = c
        .delta()
        .iter()
        .enumerate()
        .map(|(k, d)| if c.in_range[k] { -d / c.lambda[k] } else { 0.0 })
        .collect();
    let integrand = |tau: f64| -> f64 {
        let slope = c.slope(tau);
        weights.iter().zip(&slope).map(|(w, s)| w * s).sum()
    };
    let r = integrate_1d(integrand, Domain::new(0.0, horizon), 1e-14, 1e-10)?;
    let tail_bound: f64 = c
        .delta()
        .iter()
        .enumerate()
        .filter(|&(k, _)| c.in_range[k])
        .map(|(k, d)| d * d / (c.lambda[k] * (1.0 + 2.0 * horizon * c.lambda[k])))
        .sum();
    Ok(ProjectionIntegral {
        value: r.value,
        tail_bound,
        quadrature_error: r.abs_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CentralMoments, MomentOracle};
    use crate::numerics::SymMatrix;

    fn scalar(var: f64, third: f64, fourth: f64) -> PosteriorSummary {
        PosteriorSummary::from_oracle(
            vec![var.sqrt() + 0.5],
            MomentOracle::Independent {
                marginals: vec![CentralMoments { var, third, fourth }],
            },
        )
        .unwrap()
    }

    fn exp1_report() -> (MarginReport, EvaluatedBatch) {
        let b = EvaluatedBatch::from_posteriors(vec![vec![]], vec![scalar(1.0, 2.0, 9.0)]).unwrap();
        (
            margin_report(&b, DEFAULT_RHO_QUANTILE, RhoOverrides::default()).unwrap(),
            b,
        )
    }

    #[test]
    fn exp1_margin_and_bounds() {
        let (r, b) = exp1_report();
        assert_eq!(r.expected_margin.value, 1.0);
        assert_eq!(r.d_value, 2.0);
        assert_eq!((r.e_lower.value, r.e_upper.value), (1.0, 1.0));
        assert_eq!(r.u_bound, 36.0);
        assert!((r.l_bound(ExtendedMu::Finite(0.5)).unwrap() - 0.515625).abs() < 1e-15);
        assert_eq!(r.l_bound(ExtendedMu::ZERO).unwrap(), 0.25 * 4.0);
        assert_eq!(r.l_bound(ExtendedMu::Infinite).unwrap(), 0.0);
        let loc = mu_star_localization(&r, &b, 0.1).unwrap();
        assert!((loc.leading - 10.0).abs() < 1e-12);
        assert_eq!(loc.remainder, 0.0);
    }

    #[test]
    fn gamma_margin_is_quarter_squared_skewness() {
        for kappa in [0.5, 1.0, 4.0, 30.0] {
            let theta: f64 = 1.7;
            let p = scalar(
                kappa * theta * theta,
                2.0 * kappa * theta.powi(3),
                3.0 * kappa * (kappa + 2.0) * theta.powi(4),
            );
            assert!((hedge_margin(&p) - 1.0 / kappa).abs() < 1e-12 / kappa.min(1.0));
        }
    }

    #[test]
    fn gaussian_margin_vanishes_and_localization_undefined() {
        let cov = SymMatrix::from_rows(&[vec![1.0, 0.2], vec![0.2, 2.0]]).unwrap();
        let p =
            PosteriorSummary::from_oracle(vec![1.0, 1.0], MomentOracle::Gaussian { cov }).unwrap();
        assert!(hedge_margin(&p) < 1e-24);
        let b = EvaluatedBatch::from_posteriors(vec![vec![]], vec![p]).unwrap();
        let r = margin_report(&b, 0.01, RhoOverrides::default()).unwrap();
        assert!(r.u_bound < 1e-20);
        assert!(matches!(
            mu_star_localization(&r, &b, 0.1),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn rank_deficient_posterior_has_no_rho_min() {
        let mut cov = SymMatrix::zeros(2);
        cov.set(0, 0, 1.0);
        let p =
            PosteriorSummary::from_oracle(vec![0.0, 3.0], MomentOracle::Gaussian { cov }).unwrap();
        let b = EvaluatedBatch::from_posteriors(vec![vec![]], vec![p]).unwrap();
        let r = margin_report(&b, 0.01, RhoOverrides::default()).unwrap();
        assert!(r.spectral.rho_min.is_none());
        assert!(matches!(
            r.l_bound(ExtendedMu::ZERO),
            Err(Error::Unavailable(_))
        ));
        let o = RhoOverrides {
            rho_min: Some(0.5),
            rho_max: Some(10.0),
        };
        let r = margin_report(&b, 0.01, o).unwrap();
        assert_eq!(r.spectral.rho_min, Some(0.5));
        assert_eq!(r.spectral.rho_max, 10.0);
    }

    #[test]
    fn projection_integral_recovers_margin() {
        for (var, third, fourth) in [(1.0, 2.0, 9.0), (0.04, 0.003, 0.01), (9.0, -20.0, 300.0)] {
            let p = scalar(var, third, fourth);
            let c = hedge_margin(&p);
            let r = projection_integral(&p, DEFAULT_PROJECTION_HORIZON).unwrap();
            assert!(((r.value + r.tail_bound) - c).abs() <= 1e-9 * c);
            assert!((r.value - c).abs() <= 1e-4 * c);
        }
    }

    #[test]
    fn quantile_range_checked() {
        let (_, b) = exp1_report();
        assert!(margin_report(&b, 0.0, RhoOverrides::default()).is_err());
        assert!(margin_report(&b, 0.2, RhoOverrides::default()).is_err());
    }
}
