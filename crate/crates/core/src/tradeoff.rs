//! The mse/sev frontier traced by `X̂*_μ`: scans over `μ`, the characteristic
//! constant `h = min_μ mse·sev`, the sev-constrained problem and Lipschitz diagnostics.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::ExtendedMu;
use crate::functionals::{
    frontier_point, mse_of, paired_std_error, sev_direct, tolerance, Estimator, EvaluatedBatch,
    FrontierPoint, FunctionalEstimate, SEV_QUADRATIC_CONSTANT,
};
use crate::numerics::summation::mean;
use crate::numerics::{dot, norm2_sq};

pub const DEFAULT_GRID_LO: f64 = 1e-4;
pub const DEFAULT_GRID_HI: f64 = 1e4;
pub const DEFAULT_GRID_COUNT: usize = 60;

/// Relative tolerance under which two products count as tied.
const TIE_REL_TOL: f64 = 1e-12;
const MAX_BISECTIONS: usize = 400;

/// `{0} ∪ count log-spaced points in [lo, hi] ∪ {∞}`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<ExtendedMu>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) || count == 0 {
        return Err(Error::InvalidInput(format!(
            "mu grid needs 0 < lo <= hi < inf and count >= 1, got {lo}:{hi}:{count}"
        )));
    }
    let mut grid = vec![ExtendedMu::ZERO];
    if count == 1 {
        grid.push(ExtendedMu::Finite(lo));
    } else {
        let (a, b) = (lo.ln(), hi.ln());
        for i in 0..count {
            let t = i as f64 / (count - 1) as f64;
            grid.push(ExtendedMu::Finite((a + t * (b - a)).exp()));
        }
    }
    grid.push(ExtendedMu::Infinite);
    grid.dedup();
    Ok(grid)
}

pub fn default_grid() -> Vec<ExtendedMu> {
    log_grid(DEFAULT_GRID_LO, DEFAULT_GRID_HI, DEFAULT_GRID_COUNT).expect("valid default grid")
}

#[derive(Debug, Clone, Serialize)]
pub struct FrontierCurve {
    /// Sorted by `μ`, including the refined minimizer.
    pub points: Vec<FrontierPoint>,
    pub h_value: f64,
    pub h_std_error: f64,
    #[serde(serialize_with = "serialize_mu")]
    pub mu_star: ExtendedMu,
    /// `mse(X̂*_0)·sev(X̂*_∞)`
    pub anchor: FunctionalEstimate,
    pub warnings: Vec<String>,
}

fn serialize_mu<S: serde::Serializer>(
    mu: &ExtendedMu,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    crate::functionals::ExtendedMuRepr(*mu).serialize(s)
}

impl FrontierCurve {
    pub fn point(&self, mu: ExtendedMu) -> Option<&FrontierPoint> {
        self.points.iter().find(|p| p.mu() == mu)
    }

    pub fn endpoint_zero(&self) -> &FrontierPoint {
        &self.points[0]
    }

    pub fn endpoint_infinite(&self) -> &FrontierPoint {
        self.points.last().expect("nonempty curve")
    }

    /// Consecutive pairs where mse decreases or sev increases beyond paired
    /// three-sigma tolerance.
    pub fn monotonicity_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for w in self.points.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let se = paired_std_error(&b.mse_terms, &a.mse_terms);
            if b.mse.value < a.mse.value - tolerance(se, 0.0, a.mse.value) {
                out.push(format!(
                    "mse decreases from {} at mu={} to {} at mu={}",
                    a.mse.value,
                    a.mu(),
                    b.mse.value,
                    b.mu()
                ));
            }
            let se = paired_std_error(&b.sev_terms, &a.sev_terms);
            if b.sev.value > a.sev.value + tolerance(se, 0.0, a.sev.value) {
                out.push(format!(
                    "sev increases from {} at mu={} to {} at mu={}",
                    a.sev.value,
                    a.mu(),
                    b.sev.value,
                    b.mu()
                ));
            }
        }
        out
    }

    /// Finite grid pairs violating `|Δmse| <= K_mse |Δμ|` or `|Δsev| <= 4 K_sev |Δμ|`
    /// (the factor 4 converts the sev constant to the scale of the sev functional).
    pub fn lipschitz_violations(&self, k: &LipschitzConstants) -> Vec<String> {
        let finite: Vec<&FrontierPoint> = self
            .points
            .iter()
            .filter(|p| !p.mu().is_infinite())
            .collect();
        let pairs: Vec<(usize, usize)> = (0..finite.len())
            .flat_map(|i| (i + 1..finite.len()).map(move |j| (i, j)))
            .collect();
        pairs
            .par_iter()
            .flat_map_iter(|&(i, j)| {
                let (a, b) = (finite[i], finite[j]);
                let dmu = (b.mu().value() - a.mu().value()).abs();
                let mut v = Vec::new();
                let se = paired_std_error(&b.mse_terms, &a.mse_terms);
                let gap = (b.mse.value - a.mse.value).abs();
                if gap > k.k_mse * dmu + tolerance(se, 0.0, a.mse.value) {
                    v.push(format!(
                        "mse gap {gap} between mu={} and mu={}",
                        a.mu(),
                        b.mu()
                    ));
                }
                let se = paired_std_error(&b.sev_terms, &a.sev_terms);
                let gap = (b.sev.value - a.sev.value).abs();
                if gap > SEV_QUADRATIC_CONSTANT * k.k_sev * dmu + tolerance(se, 0.0, a.sev.value) {
                    v.push(format!(
                        "sev gap {gap} between mu={} and mu={}",
                        a.mu(),
                        b.mu()
                    ));
                }
                v
            })
            .collect()
    }
}

/// Per-observation pieces of the product slope at finite `μ`.
fn slope_terms(batch: &EvaluatedBatch, mu: f64) -> Result<(f64, f64, f64, f64)> {
    let rows = batch.map(|_, p, c| {
        let x = c.estimate(ExtendedMu::Finite(mu));
        let dx = c.slope(mu);
        let a: Vec<f64> = c.mean.iter().zip(&x).map(|(m, v)| m - v).collect();
        let mse = p.mmse() + norm2_sq(&a);
        let quad: f64 = a.iter().zip(&c.lambda).map(|(v, l)| l * v * v).sum();
        let sev = p.var_norm_sq() + 4.0 * quad + 4.0 * dot(&a, &c.t);
        let dmse = -2.0 * dot(&a, &dx);
        let dsev: f64 = -(0..a.len())
            .map(|k| dx[k] * (8.0 * c.lambda[k] * a[k] + 4.0 * c.t[k]))
            .sum::<f64>();
        Ok([mse, sev, dmse, dsev])
    })?;
    let col = |j: usize| mean(&rows.iter().map(|r| r[j]).collect::<Vec<_>>());
    Ok((col(0), col(1), col(2), col(3)))
}

/// `d/dμ [mse(X̂*_μ)·sev(X̂*_μ)]` at finite `μ`.
pub fn product_slope(batch: &EvaluatedBatch, mu: f64) -> Result<f64> {
    let (m, s, dm, ds) = slope_terms(batch, mu)?;
    Ok(dm * s + m * ds)
}

fn argmin_smallest_mu(points: &[FrontierPoint]) -> usize {
    let best = points
        .iter()
        .map(|p| p.product.value)
        .fold(f64::INFINITY, f64::min);
    let cut = best + TIE_REL_TOL * best.abs();
    points
        .iter()
        .position(|p| p.product.value <= cut)
        .unwrap_or(0)
}

/// Locates a stationary point of the product between the grid neighbours of the
/// discrete minimizer by bisection on the sign of the analytic slope.
fn refine_minimizer(
    batch: &EvaluatedBatch,
    points: &[FrontierPoint],
    k: usize,
) -> Result<Option<f64>> {
    let slope = |mu: f64| product_slope(batch, mu);
    let finite_mu = |i: usize| points[i].mu().as_finite();

    let (mut lo, mut hi);
    match points[k].mu() {
        ExtendedMu::Infinite => {
            lo = (0..k)
                .rev()
                .find_map(finite_mu)
                .filter(|&v| v > 0.0)
                .unwrap_or(1.0);
            hi = lo * 1e3;
        }
        ExtendedMu::Finite(m) => {
            lo = if k > 0 {
                finite_mu(k - 1).unwrap_or(0.0)
            } else {
                m
            };
            hi = match points.get(k + 1).map(|p| p.mu()) {
                Some(ExtendedMu::Finite(v)) => v,
                _ if lo > 0.0 => m * m / lo,
                _ => m.max(1.0) * 1e3,
            };
        }
    }

    if slope(lo)? >= 0.0 {
        return Ok(None);
    }
    let mut expansions = 0;
    while slope(hi)? < 0.0 {
        if hi > 1e300 || expansions > 100 {
            return Ok(None);
        }
        lo = hi;
        hi *= 1e3;
        expansions += 1;
    }
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= 1e-14 * hi || hi < 1e-300 {
            break;
        }
        let mid = if lo > 0.0 {
            (lo * hi).sqrt()
        } else {
            hi / 1024.0
        };
        if slope(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(if lo > 0.0 { (lo * hi).sqrt() } else { hi }))
}

/// Evaluates the frontier on `grid` (which must contain 0 and ∞), then refines the
/// minimizer of `mse·sev`. Ties resolve to the smallest `μ`.
pub fn frontier_scan(batch: &EvaluatedBatch, grid: &[ExtendedMu]) -> Result<FrontierCurve> {
    let mut grid = grid.to_vec();
    grid.sort();
    grid.dedup();
    if grid.first() != Some(&ExtendedMu::ZERO) || grid.last() != Some(&ExtendedMu::Infinite) {
        return Err(Error::InvalidInput(
            "the mu grid must contain 0 and infinity".into(),
        ));
    }
    let mut points: Vec<FrontierPoint> = grid
        .par_iter()
        .map(|&mu| frontier_point(batch, mu))
        .collect::<Result<_>>()?;

    let k = argmin_smallest_mu(&points);
    if let Some(mu) = refine_minimizer(batch, &points, k)? {
        let mu = ExtendedMu::Finite(mu);
        if !points.iter().any(|p| p.mu() == mu) {
            let p = frontier_point(batch, mu)?;
            let at = points.partition_point(|q| q.mu() < mu);
            points.insert(at, p);
        }
    }
    let k = argmin_smallest_mu(&points);
    let anchor = FunctionalEstimate::product(
        &points[0].mse_terms,
        &points.last().expect("nonempty").sev_terms,
    );
    let mut curve = FrontierCurve {
        h_value: points[k].product.value,
        h_std_error: points[k].product.std_error,
        mu_star: points[k].mu(),
        anchor,
        points,
        warnings: Vec::new(),
    };
    curve.warnings = curve.monotonicity_violations();
    for w in &curve.warnings {
        log::warn!("{w}");
    }
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzConstants {
    /// `4 E{σ_max(Y) ||Δ̂X||²}`
    pub k_mse: f64,
    /// `4 E{σ_max(Y)² ||Δ̂X||²}`
    pub k_sev: f64,
}

pub fn lipschitz_constants(batch: &EvaluatedBatch) -> Result<LipschitzConstants> {
    let rows = batch.map(|_, p, c| {
        let l = p.eig().lambda_max().max(0.0);
        let d2 = norm2_sq(&c.delta());
        Ok((4.0 * l * d2, 4.0 * l * l * d2))
    })?;
    let (a, b): (Vec<f64>, Vec<f64>) = rows.into_iter().unzip();
    let k = LipschitzConstants {
        k_mse: mean(&a),
        k_sev: mean(&b),
    };
    if !(k.k_mse.is_finite() && k.k_sev.is_finite()) {
        return Err(Error::NumericFailure(
            "non-finite Lipschitz constant".into(),
        ));
    }
    Ok(k)
}

#[derive(Debug, Clone, Serialize)]
pub struct UncertaintyVerdict {
    pub probe: String,
    pub mse: FunctionalEstimate,
    pub sev: FunctionalEstimate,
    pub product: FunctionalEstimate,
    pub h_value: f64,
    /// `mse·sev - h`
    pub margin: f64,
    pub pass: bool,
}

/// Checks `mse(X̂)·sev(X̂) >= h` for a probe estimator at three-sigma tolerance.
pub fn verify_uncertainty(
    batch: &EvaluatedBatch,
    probe: &dyn Estimator,
    curve: &FrontierCurve,
) -> Result<UncertaintyVerdict> {
    let (mse_terms, sev_terms) = crate::functionals::conditional_terms(batch, probe)?;
    let product = FunctionalEstimate::product(&mse_terms, &sev_terms);
    let margin = product.value - curve.h_value;
    let pass = margin >= -tolerance(product.std_error, curve.h_std_error, curve.h_value);
    Ok(UncertaintyVerdict {
        probe: probe.label(),
        mse: FunctionalEstimate::from_terms(&mse_terms),
        sev: FunctionalEstimate::from_terms(&sev_terms),
        product,
        h_value: curve.h_value,
        margin,
        pass,
    })
}

pub const DEFAULT_CONSTRAINT_REL_WIDTH: f64 = 1e-3;

/// Smallest `μ` (to relative width `1e-3`) whose estimator meets `sev <= epsilon`.
pub fn solve_constrained(batch: &EvaluatedBatch, epsilon: f64) -> Result<ExtendedMu> {
    solve_constrained_with(batch, epsilon, DEFAULT_CONSTRAINT_REL_WIDTH)
}

pub fn solve_constrained_with(
    batch: &EvaluatedBatch,
    epsilon: f64,
    rel_width: f64,
) -> Result<ExtendedMu> {
    if !(epsilon > 0.0 && epsilon.is_finite()) || !(rel_width > 0.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    let sev = |mu: ExtendedMu| frontier_point(batch, mu).map(|p| p.sev.value);
    let sev_min = sev(ExtendedMu::Infinite)?;
    if epsilon < sev_min {
        return Err(Error::Infeasible { epsilon, sev_min });
    }
    if sev(ExtendedMu::ZERO)? <= epsilon {
        return Ok(ExtendedMu::ZERO);
    }
    let mut hi = 1.0;
    while sev(ExtendedMu::Finite(hi))? > epsilon {
        hi *= 10.0;
        if hi > 1e300 {
            return Ok(ExtendedMu::Infinite);
        }
    }
    let mut lo = hi / 10.0;
    while sev(ExtendedMu::Finite(lo))? <= epsilon {
        hi = lo;
        lo /= 10.0;
        if lo < 1e-300 {
            return Ok(ExtendedMu::Finite(hi));
        }
    }
    while hi / lo - 1.0 > rel_width {
        let mid = (lo * hi).sqrt();
        if sev(ExtendedMu::Finite(mid))? <= epsilon {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(ExtendedMu::Finite(hi))
}

/// First grid point whose mse exceeds the `μ = 0` value by at most
/// `max_mse_inflation` while its sev is below the `μ = 0` value by at least
/// `min_sev_reduction` (both relative).
pub fn exchange_point(
    curve: &FrontierCurve,
    max_mse_inflation: f64,
    min_sev_reduction: f64,
) -> Option<&FrontierPoint> {
    let base = curve.endpoint_zero();
    curve.points.iter().find(|p| {
        p.mse.value <= base.mse.value * (1.0 + max_mse_inflation)
            && p.sev.value <= base.sev.value * (1.0 - min_sev_reduction)
    })
}

/// mse and sev of an arbitrary estimator, for callers that do not need per-observation terms.
pub fn evaluate_estimator(
    batch: &EvaluatedBatch,
    est: &dyn Estimator,
) -> Result<(FunctionalEstimate, FunctionalEstimate)> {
    Ok((mse_of(batch, est)?, sev_direct(batch, est)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functionals::Probe;
    use crate::model::{CentralMoments, MomentOracle, PosteriorSummary};

    fn exp1_batch() -> EvaluatedBatch {
        let p = PosteriorSummary::from_oracle(
            vec![1.0],
            MomentOracle::Independent {
                marginals: vec![CentralMoments {
                    var: 1.0,
                    third: 2.0,
                    fourth: 9.0,
                }],
            },
        )
        .unwrap();
        EvaluatedBatch::from_posteriors(vec![vec![]], vec![p]).unwrap()
    }

    #[test]
    fn exp1_frontier() {
        let b = exp1_batch();
        let c = frontier_scan(&b, &default_grid()).unwrap();
        assert!((c.mu_star.value() - 0.5).abs() < 1e-9, "{}", c.mu_star);
        assert!((c.h_value - 6.25).abs() < 1e-9);
        assert!((c.anchor.value - 4.0).abs() < 1e-15);
        assert!(c.warnings.is_empty());
        let k = lipschitz_constants(&b).unwrap();
        assert_eq!((k.k_mse, k.k_sev), (4.0, 4.0));
        assert!(c.lipschitz_violations(&k).is_empty());
    }

    #[test]
    fn exp1_constrained() {
        let b = exp1_batch();
        let mu = solve_constrained(&b, 5.0).unwrap().value();
        assert!((mu / 0.5 - 1.0).abs() <= 1e-3);
        assert_eq!(solve_constrained(&b, 8.0).unwrap(), ExtendedMu::ZERO);
        assert!(matches!(
            solve_constrained(&b, 3.999),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn exp1_probes_respect_h() {
        let b = exp1_batch();
        let c = frontier_scan(&b, &default_grid()).unwrap();
        let v = verify_uncertainty(
            &b,
            &Probe::Affine {
                scale: 1.0,
                shift: 0.3,
            },
            &c,
        )
        .unwrap();
        // sev = 8 + 4(0.3²) + 4(-0.3)(2) = 5.96
        assert!((v.product.value - 1.09 * 5.96).abs() < 1e-12);
        assert!(v.pass);
        let v = verify_uncertainty(&b, &Probe::Mix(0.5), &c).unwrap();
        assert!((v.product.value - 6.25).abs() < 1e-12);
        assert!(v.pass);
        let v = verify_uncertainty(&b, &Probe::Const(0.0), &c).unwrap();
        assert_eq!(v.product.value, 40.0);
    }

    #[test]
    fn grid_requires_endpoints() {
        let b = exp1_batch();
        assert!(frontier_scan(&b, &[ExtendedMu::Finite(1.0), ExtendedMu::Infinite]).is_err());
        let g = log_grid(1e-4, 1e4, 60).unwrap();
        assert_eq!(g.len(), 62);
        assert!(log_grid(0.0, 1.0, 3).is_err());
        assert_eq!(log_grid(2.0, 2.0, 1).unwrap().len(), 3);
    }

    #[test]
    fn slope_matches_finite_difference() {
        let b = exp1_batch();
        let p = |mu: f64| {
            frontier_point(&b, ExtendedMu::Finite(mu))
                .unwrap()
                .product
                .value
        };
        let h = 1e-6;
        for mu in [0.1, 0.5, 2.0] {
            let fd = (p(mu + h) - p(mu - h)) / (2.0 * h);
            assert!((product_slope(&b, mu).unwrap() - fd).abs() < 1e-6);
        }
    }
}
