use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::ParamReader;
use super::{GenerativeModel, MomentOracle, PosteriorSummary};
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 64;

/// Empirical model over recorded `(X, Y)` pairs. Observations are grouped into
/// equal-count bins on `y_1`; the posterior at `y` is the empirical distribution of
/// the `X` values in the bin containing `y_1`.
#[derive(Debug, Clone)]
pub struct SampleFileModel {
    path: PathBuf,
    state_dim: usize,
    obs_dim: usize,
    rows: Vec<(Vec<f64>, Vec<f64>)>,
    /// Upper `y_1` edge of every bin but the last.
    edges: Vec<f64>,
    bins: Vec<PosteriorSummary>,
}

impl SampleFileModel {
    pub fn load(path: &Path, bins: usize) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let mut state_dim = 0;
        let mut obs_dim = 0;
        for (pos, h) in headers.iter().enumerate() {
            let h = h.trim();
            let expected_x = format!("x_{}", state_dim + 1);
            let expected_y = format!("y_{}", obs_dim + 1);
            if obs_dim == 0 && h == expected_x {
                state_dim += 1;
            } else if state_dim > 0 && h == expected_y {
                obs_dim += 1;
            } else {
                return Err(Error::InvalidInput(format!(
                    "{}: column {} is '{h}', expected '{expected_x}' or '{expected_y}'",
                    path.display(),
                    pos + 1
                )));
            }
        }
        if state_dim == 0 || obs_dim == 0 {
            return Err(Error::InvalidInput(format!(
                "{}: header must list x_1..x_n then y_1..y_m",
                path.display()
            )));
        }
        let mut rows = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| {
                    Error::InvalidInput(format!("{}: record {}: {e}", path.display(), line + 1))
                })?;
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{}: record {} has a non-finite value",
                    path.display(),
                    line + 1
                )));
            }
            let (x, y) = vals.split_at(state_dim);
            rows.push((x.to_vec(), y.to_vec()));
        }
        Self::from_rows(path.to_path_buf(), rows, bins)
    }

    pub fn from_rows(
        path: PathBuf,
        mut rows: Vec<(Vec<f64>, Vec<f64>)>,
        bins: usize,
    ) -> Result<Self> {
        if bins == 0 {
            return Err(Error::InvalidInput("bins must be at least 1".into()));
        }
        if rows.len() < 2 {
            return Err(Error::InvalidInput(
                "sample file needs at least two records".into(),
            ));
        }
        let state_dim = rows[0].0.len();
        let obs_dim = rows[0].1.len();
        if rows
            .iter()
            .any(|(x, y)| x.len() != state_dim || y.len() != obs_dim)
        {
            return Err(Error::InvalidInput("ragged sample records".into()));
        }
        rows.sort_by(|a, b| a.1[0].total_cmp(&b.1[0]));
        let bin_count = bins.min(rows.len() / 2).max(1);
        let n = rows.len();
        let mut edges = Vec::with_capacity(bin_count - 1);
        let mut summaries = Vec::with_capacity(bin_count);
        for b in 0..bin_count {
            let start = b * n / bin_count;
            let end = (b + 1) * n / bin_count;
            let members = &rows[start..end];
            if end < n {
                edges.push(0.5 * (rows[end - 1].1[0] + rows[end].1[0]));
            }
            summaries.push(empirical_posterior(members, state_dim)?);
        }
        Ok(SampleFileModel {
            path,
            state_dim,
            obs_dim,
            rows,
            edges,
            bins: summaries,
        })
    }

    pub(super) fn from_params(r: &mut ParamReader<'_>) -> Result<Self> {
        let path = r
            .string("path")
            .ok_or_else(|| Error::InvalidInput("sample_file requires path=<csv file>".into()))?;
        let bins = r.usize_or("bins", DEFAULT_BINS)?;
        Self::load(Path::new(&path), bins)
    }

    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn record_count(&self) -> usize {
        self.rows.len()
    }

    fn bin_of(&self, y1: f64) -> usize {
        self.edges.partition_point(|&e| e < y1)
    }
}

fn empirical_posterior(members: &[(Vec<f64>, Vec<f64>)], n: usize) -> Result<PosteriorSummary> {
    let count = members.len() as f64;
    let mean: Vec<f64> = (0..n)
        .map(|i| members.iter().map(|(x, _)| x[i]).sum::<f64>() / count)
        .collect();
    let centered: Vec<Vec<f64>> = members
        .iter()
        .map(|(x, _)| x.iter().zip(&mean).map(|(a, m)| a - m).collect())
        .collect();
    PosteriorSummary::from_oracle(
        mean,
        MomentOracle::Empirical {
            centered: Arc::new(centered),
        },
    )
}

impl GenerativeModel for SampleFileModel {
    fn name(&self) -> &str {
        "sample_file"
    }

    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    fn parameters(&self) -> Vec<(String, String)> {
        vec![
            ("path".into(), self.path.display().to_string()),
            ("bins".into(), self.bins.len().to_string()),
            ("records".into(), self.rows.len().to_string()),
        ]
    }

    fn sample_joint(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let i = rng.random_range(0..self.rows.len());
        self.rows[i].clone()
    }

    fn posterior(&self, y: &[f64]) -> Result<PosteriorSummary> {
        if y.len() != self.obs_dim {
            return Err(Error::InvalidInput(format!(
                "observation has dimension {}, expected {}",
                y.len(),
                self.obs_dim
            )));
        }
        if !y[0].is_finite() {
            return Err(Error::InvalidInput("non-finite observation".into()));
        }
        Ok(self.bins[self.bin_of(y[0])].clone())
    }
}
