//! Output files: `%.12g` CSV, JSON envelopes carrying the run manifest hash, and
//! all-or-nothing writing.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};

/// Formats like C's `%.12g`.
pub fn fmt_g(v: f64) -> String {
    const PRECISION: i32 = 12;
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0".into()
        } else {
            "0".into()
        };
    }
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, v);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..PRECISION).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (PRECISION - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FailureCount {
    pub label: String,
    pub failed: usize,
    pub total: usize,
}

/// Identifies a run: the configuration echo, the toolkit version and the posterior
/// failures encountered. Output directory, thread count and timing are excluded.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config: ExperimentConfig,
    pub failures: Vec<FailureCount>,
}

impl RunManifest {
    pub fn new(command: &str, config: ExperimentConfig, failures: Vec<FailureCount>) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            config,
            failures,
        }
    }

    pub fn sha256(&self) -> CliResult<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FileBody {
    Csv {
        header: Vec<String>,
        rows: Vec<Vec<String>>,
    },
    /// A JSON object whose fields follow the manifest fields.
    Json(Map<String, Value>),
    /// Gnuplot script text.
    Script(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub body: FileBody,
}

impl OutputFile {
    pub fn csv(name: &str, header: &[&str], rows: Vec<Vec<String>>) -> Self {
        OutputFile {
            name: name.into(),
            body: FileBody::Csv {
                header: header.iter().map(|h| h.to_string()).collect(),
                rows,
            },
        }
    }

    pub fn json<T: Serialize>(name: &str, body: &T) -> CliResult<Self> {
        let Value::Object(map) = serde_json::to_value(body)? else {
            return Err(CliError::Config(format!(
                "{name}: JSON body must be an object"
            )));
        };
        Ok(OutputFile {
            name: name.into(),
            body: FileBody::Json(map),
        })
    }

    pub fn script(name: &str, text: String) -> Self {
        OutputFile {
            name: name.into(),
            body: FileBody::Script(text),
        }
    }

    fn render(&self, manifest: &RunManifest, hash: &str) -> CliResult<Vec<u8>> {
        match &self.body {
            FileBody::Csv { header, rows } => {
                let mut buf = format!("# manifest_sha256={hash}\n").into_bytes();
                {
                    let mut w = csv::Writer::from_writer(&mut buf);
                    w.write_record(header).map_err(csv_error)?;
                    for row in rows {
                        w.write_record(row).map_err(csv_error)?;
                    }
                    w.flush().map_err(|e| CliError::Config(e.to_string()))?;
                }
                Ok(buf)
            }
            FileBody::Json(fields) => {
                let mut obj = Map::new();
                obj.insert("manifest_sha256".into(), Value::String(hash.into()));
                obj.insert("manifest".into(), serde_json::to_value(manifest)?);
                for (k, v) in fields {
                    obj.insert(k.clone(), v.clone());
                }
                let mut out = serde_json::to_vec_pretty(&Value::Object(obj))?;
                out.push(b'\n');
                Ok(out)
            }
            FileBody::Script(text) => Ok(format!("# manifest_sha256={hash}\n{text}").into_bytes()),
        }
    }
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Config(format!("csv encoding failed: {e}"))
}

/// Writes every file or none: on the first failure, files already written are removed.
pub fn write_all(
    dir: &Path,
    files: &[OutputFile],
    manifest: &RunManifest,
) -> CliResult<Vec<PathBuf>> {
    let hash = manifest.sha256()?;
    let rendered = files
        .iter()
        .map(|f| Ok((dir.join(&f.name), f.render(manifest, &hash)?)))
        .collect::<CliResult<Vec<_>>>()?;
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut written = Vec::new();
    for (path, bytes) in rendered {
        if let Err(source) = fs::write(&path, bytes) {
            remove_files(&written);
            return Err(CliError::Io { path, source });
        }
        written.push(path);
    }
    Ok(written)
}

pub fn remove_files(paths: &[PathBuf]) {
    for p in paths {
        if let Err(e) = fs::remove_file(p) {
            log::warn!("could not remove partial output {}: {e}", p.display());
        }
    }
}
