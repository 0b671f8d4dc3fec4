//! Per-observation posterior summaries and the conditional-moment oracle behind them.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::{eig_sym, EigenDecomp, SymMatrix, DEFAULT_RANK_TOL};

/// Central moments of orders 2..=4 of a scalar distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentralMoments {
    pub var: f64,
    pub third: f64,
    pub fourth: f64,
}

impl CentralMoments {
    fn of_order(&self, k: usize) -> f64 {
        match k {
            0 => 1.0,
            1 => 0.0,
            2 => self.var,
            3 => self.third,
            4 => self.fourth,
            _ => f64::NAN,
        }
    }
}

/// Evaluates conditional central moments `E{Z_i1 Z_i2 ... | Y}` with
/// `Z = X - E{X|Y}`, for index lists of length at most 4.
#[derive(Debug, Clone)]
pub enum MomentOracle {
    /// Jointly Gaussian posterior with the given covariance (Isserlis' theorem).
    Gaussian { cov: SymMatrix },
    /// Independent coordinates with known marginal central moments.
    Independent { marginals: Vec<CentralMoments> },
    /// Equally weighted point masses, stored already centred.
    Empirical { centered: Arc<Vec<Vec<f64>>> },
}

pub const MAX_MOMENT_DEGREE: usize = 4;

impl MomentOracle {
    pub fn dim(&self) -> usize {
        match self {
            MomentOracle::Gaussian { cov } => cov.dim(),
            MomentOracle::Independent { marginals } => marginals.len(),
            MomentOracle::Empirical { centered } => centered.first().map_or(0, |z| z.len()),
        }
    }

    pub fn central(&self, idx: &[usize]) -> Result<f64> {
        if idx.len() > MAX_MOMENT_DEGREE {
            return Err(Error::InvalidInput(format!(
                "moment degree {} exceeds {MAX_MOMENT_DEGREE}",
                idx.len()
            )));
        }
        let n = self.dim();
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(Error::InvalidInput(format!(
                "coordinate {bad} out of range for dimension {n}"
            )));
        }
        Ok(match idx.len() {
            0 => 1.0,
            1 => 0.0,
            _ => self.central_unchecked(idx),
        })
    }

    fn central_unchecked(&self, idx: &[usize]) -> f64 {
        match self {
            MomentOracle::Gaussian { cov } => match idx.len() {
                2 => cov.get(idx[0], idx[1]),
                4 => {
                    let c = |a: usize, b: usize| cov.get(idx[a], idx[b]);
                    c(0, 1) * c(2, 3) + c(0, 2) * c(1, 3) + c(0, 3) * c(1, 2)
                }
                _ => 0.0,
            },
            MomentOracle::Independent { marginals } => {
                let mut counts = [(usize::MAX, 0usize); MAX_MOMENT_DEGREE];
                let mut used = 0;
                for &i in idx {
                    match counts[..used].iter_mut().find(|(c, _)| *c == i) {
                        Some(slot) => slot.1 += 1,
                        None => {
                            counts[used] = (i, 1);
                            used += 1;
                        }
                    }
                }
                counts[..used]
                    .iter()
                    .map(|&(i, k)| marginals[i].of_order(k))
                    .product()
            }
            MomentOracle::Empirical { centered } => {
                if centered.is_empty() {
                    return 0.0;
                }
                let terms: Vec<f64> = centered
                    .iter()
                    .map(|z| idx.iter().map(|&i| z[i]).product())
                    .collect();
                crate::numerics::summation::mean(&terms)
            }
        }
    }
}

/// Posterior summary for one observation: conditional mean and covariance, the
/// third-order statistic `R(Y) = E{||X||² X | Y} - E{||X||² | Y} E{X | Y}` and a
/// moment oracle for everything up to degree four.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub mean: Vec<f64>,
    pub cov: SymMatrix,
    pub r_stat: Vec<f64>,
    oracle: MomentOracle,
    eig: EigenDecomp,
    /// Row-major `n x n`: `[i * n + j] = E{Z_i² Z_j | Y}`.
    third: Vec<f64>,
    /// `E{||Z||² Z | Y}`
    skew_vector: Vec<f64>,
    /// `Var{||Z||² | Y}`
    var_norm_sq: f64,
}

impl PosteriorSummary {
    /// Builds the summary with `R(Y) = 2 Σ m + E{||Z||² Z}` derived from the oracle.
    pub fn from_oracle(mean: Vec<f64>, oracle: MomentOracle) -> Result<Self> {
        Self::build(mean, oracle, None)
    }

    /// Builds the summary with an `R(Y)` computed by the model through its own route.
    pub fn with_r_stat(mean: Vec<f64>, oracle: MomentOracle, r_stat: Vec<f64>) -> Result<Self> {
        Self::build(mean, oracle, Some(r_stat))
    }

    fn build(mean: Vec<f64>, oracle: MomentOracle, r_stat: Option<Vec<f64>>) -> Result<Self> {
        let n = mean.len();
        if oracle.dim() != n {
            return Err(Error::InvalidInput(format!(
                "oracle dimension {} does not match mean dimension {n}",
                oracle.dim()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericFailure("non-finite posterior mean".into()));
        }
        let cov = SymMatrix::from_fn(n, |i, j| oracle.central_unchecked(&[i, j]));
        if !cov.is_finite() {
            return Err(Error::NumericFailure(
                "non-finite posterior covariance".into(),
            ));
        }
        let eig = eig_sym(&cov, DEFAULT_RANK_TOL)?;
        if let Some(&low) = eig.lambda.last() {
            if low < -1e-8 * eig.lambda_max().abs().max(1e-300) {
                return Err(Error::InvalidInput(format!(
                    "posterior covariance is not positive semidefinite (eigenvalue {low})"
                )));
            }
        }

        let mut third = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                third[i * n + j] = oracle.central_unchecked(&[i, i, j]);
            }
        }
        let skew_vector: Vec<f64> = (0..n)
            .map(|j| (0..n).map(|i| third[i * n + j]).sum())
            .collect();
        let mut fourth = 0.0;
        for i in 0..n {
            for k in 0..n {
                fourth += oracle.central_unchecked(&[i, i, k, k]);
            }
        }
        let tr = cov.trace();
        let var_norm_sq = (fourth - tr * tr).max(0.0);

        let r_stat = match r_stat {
            Some(r) => {
                if r.len() != n {
                    return Err(Error::InvalidInput("r_stat dimension mismatch".into()));
                }
                r
            }
            None => {
                let sm = cov.mul_vec(&mean);
                sm.iter()
                    .zip(&skew_vector)
                    .map(|(a, t)| 2.0 * a + t)
                    .collect()
            }
        };
        if r_stat.iter().any(|v| !v.is_finite())
            || skew_vector.iter().any(|v| !v.is_finite())
            || !var_norm_sq.is_finite()
        {
            return Err(Error::NumericFailure(
                "non-finite higher posterior moment".into(),
            ));
        }

        Ok(PosteriorSummary {
            mean,
            cov,
            r_stat,
            oracle,
            eig,
            third,
            skew_vector,
            var_norm_sq,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn oracle(&self) -> &MomentOracle {
        &self.oracle
    }

    /// Eigendecomposition of the covariance at the default rank tolerance.
    pub fn eig(&self) -> &EigenDecomp {
        &self.eig
    }

    /// `E{Z_i² Z_j | Y}`
    pub fn third_central(&self, i: usize, j: usize) -> f64 {
        self.third[i * self.dim() + j]
    }

    /// `E{||Z||² Z | Y}`
    pub fn skew_vector(&self) -> &[f64] {
        &self.skew_vector
    }

    /// `Var{||Z||² | Y}`
    pub fn var_norm_sq(&self) -> f64 {
        self.var_norm_sq
    }

    /// `trace Σ`, the conditional mean's squared error at this observation.
    pub fn mmse(&self) -> f64 {
        self.cov.trace()
    }

    pub fn central_moment(&self, idx: &[usize]) -> Result<f64> {
        self.oracle.central(idx)
    }

    /// Raw conditional moment `E{X_i1 ... X_ik | Y}`, expanded from central moments.
    pub fn raw_moment(&self, idx: &[usize]) -> Result<f64> {
        let k = idx.len();
        if k > MAX_MOMENT_DEGREE {
            return Err(Error::InvalidInput(format!("moment degree {k} exceeds 4")));
        }
        let mut total = 0.0;
        let mut sub = Vec::with_capacity(k);
        for mask in 0u32..(1 << k) {
            sub.clear();
            let mut coeff = 1.0;
            for (bit, &i) in idx.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    sub.push(i);
                } else {
                    coeff *= self.mean[i];
                }
            }
            if coeff != 0.0 {
                total += coeff * self.oracle.central(&sub)?;
            }
        }
        Ok(total)
    }
}
