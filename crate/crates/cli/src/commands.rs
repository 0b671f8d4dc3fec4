//! The four experiments: frontier scan, margin and bound report, skewness sweep and
//! probe verification.

use std::sync::Arc;

use serde::Serialize;
use sevtrade_core::functionals::{
    sev_cross_check, sev_direct, sev_quadratic, tolerance, EvaluatedBatch, ExtendedMuRepr,
    FunctionalEstimate, Probe, SEV_QUADRATIC_CONSTANT,
};
use sevtrade_core::margin::{margin_report, MarginReport};
use sevtrade_core::model::{build_model, sample_observations, GenerativeModel, ModelParams};
use sevtrade_core::skewness::skewness_d;
use sevtrade_core::tradeoff::{
    frontier_scan, lipschitz_constants, verify_uncertainty, FrontierCurve, LipschitzConstants,
};
use sevtrade_core::{Error as CoreError, ExtendedMu, RngStream};

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::output::{fmt_g, FailureCount, OutputFile};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Frontier,
    Margin,
    SkewSweep,
    Verify,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Frontier => "frontier",
            CommandKind::Margin => "margin",
            CommandKind::SkewSweep => "skew-sweep",
            CommandKind::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn from_violations(name: &str, violations: Vec<String>) -> Self {
        Check {
            name: name.into(),
            pass: violations.is_empty(),
            detail: if violations.is_empty() {
                "ok".into()
            } else {
                violations.join("; ")
            },
        }
    }
}

/// Everything a command produced, before it is written.
#[derive(Debug, Clone)]
pub struct CommandOutput {
    pub files: Vec<OutputFile>,
    pub checks: Vec<Check>,
    pub failures: Vec<FailureCount>,
}

pub fn execute(kind: CommandKind, cfg: &ExperimentConfig) -> CliResult<CommandOutput> {
    match kind {
        CommandKind::Frontier => frontier(cfg),
        CommandKind::Margin => margin(cfg),
        CommandKind::SkewSweep => skew_sweep(cfg),
        CommandKind::Verify => verify(cfg),
    }
}

struct Prepared {
    model: Arc<dyn GenerativeModel>,
    batch: EvaluatedBatch,
    failures: FailureCount,
}

fn prepare(cfg: &ExperimentConfig, params: &ModelParams, label: &str) -> CliResult<Prepared> {
    let model = build_model(&cfg.model, params)?;
    let obs = sample_observations(model.as_ref(), cfg.samples, RngStream::new(cfg.seed, 0))?;
    let batch = EvaluatedBatch::evaluate(model.as_ref(), &obs)?;
    let failures = FailureCount {
        label: label.into(),
        failed: batch.failures,
        total: batch.total,
    };
    if batch.failures > 0 {
        log::warn!(
            "{label}: {} of {} posterior evaluations failed and were skipped",
            batch.failures,
            batch.total
        );
    }
    Ok(Prepared {
        model,
        batch,
        failures,
    })
}

/// The configured model, or one copy per sweep value with the swept parameter set.
fn sweep_points(cfg: &ExperimentConfig) -> Vec<(Option<f64>, ModelParams)> {
    match &cfg.sweep {
        None => vec![(None, cfg.model_params())],
        Some(s) => s
            .values
            .iter()
            .map(|&v| {
                let mut p = cfg.model_params();
                p.set(&s.param, &v.to_string());
                (Some(v), p)
            })
            .collect(),
    }
}

fn label_for(param: Option<(&str, f64)>) -> String {
    match param {
        None => "run".into(),
        Some((name, v)) => format!("{name}={}", fmt_g(v)),
    }
}

fn scan(cfg: &ExperimentConfig, batch: &EvaluatedBatch) -> CliResult<FrontierCurve> {
    let curve = frontier_scan(batch, &cfg.mu_grid.points()?)?;
    for w in &curve.warnings {
        log::warn!("{w}");
    }
    Ok(curve)
}

fn h_check(curve: &FrontierCurve) -> Check {
    let tol = tolerance(
        curve.h_std_error,
        curve.anchor.std_error,
        curve.anchor.value,
    );
    Check {
        name: "h_above_anchor".into(),
        pass: curve.h_value >= curve.anchor.value - tol,
        detail: format!(
            "h = {} vs anchor = {} (tolerance {})",
            curve.h_value, curve.anchor.value, tol
        ),
    }
}

#[derive(Serialize)]
struct Endpoint {
    mse: f64,
    sev: f64,
}

#[derive(Serialize)]
struct FrontierSummary<'a> {
    model: &'a str,
    observations: usize,
    h_value: f64,
    h_std_error: f64,
    mu_star: ExtendedMuRepr,
    anchor: FunctionalEstimate,
    endpoint_zero: Endpoint,
    endpoint_infinite: Endpoint,
    lipschitz: LipschitzConstants,
    grid_points: usize,
    warnings: &'a [String],
    checks: &'a [Check],
}

fn frontier(cfg: &ExperimentConfig) -> CliResult<CommandOutput> {
    let prep = prepare(cfg, &cfg.model_params(), "run")?;
    let curve = scan(cfg, &prep.batch)?;
    let k = lipschitz_constants(&prep.batch)?;
    let checks = vec![
        Check::from_violations("monotonicity", curve.monotonicity_violations()),
        Check::from_violations("lipschitz", curve.lipschitz_violations(&k)),
        h_check(&curve),
    ];

    let min_of = |f: fn(&sevtrade_core::FrontierPoint) -> f64| {
        curve.points.iter().map(f).fold(f64::INFINITY, f64::min)
    };
    let mse_min = min_of(|p| p.mse.value);
    let sev_min = min_of(|p| p.sev.value);
    let rows = curve
        .points
        .iter()
        .map(|p| {
            let (mn, sn) = (p.mse.value / mse_min, p.sev.value / sev_min);
            [
                p.mu().value(),
                p.mse.value,
                p.mse.std_error,
                p.sev.value,
                p.sev.std_error,
                p.product.value,
                p.product.std_error,
                mn,
                sn,
                mn * sn,
            ]
            .into_iter()
            .map(fmt_g)
            .collect()
        })
        .collect();
    let mut files = vec![OutputFile::csv(
        "frontier.csv",
        &[
            "mu",
            "mse",
            "mse_se",
            "sev",
            "sev_se",
            "product",
            "product_se",
            "mse_norm",
            "sev_norm",
            "product_norm",
        ],
        rows,
    )];
    let z = curve.endpoint_zero();
    let i = curve.endpoint_infinite();
    files.push(OutputFile::json(
        "frontier.json",
        &FrontierSummary {
            model: prep.model.name(),
            observations: prep.batch.len(),
            h_value: curve.h_value,
            h_std_error: curve.h_std_error,
            mu_star: ExtendedMuRepr(curve.mu_star),
            anchor: curve.anchor,
            endpoint_zero: Endpoint {
                mse: z.mse.value,
                sev: z.sev.value,
            },
            endpoint_infinite: Endpoint {
                mse: i.mse.value,
                sev: i.sev.value,
            },
            lipschitz: k,
            grid_points: curve.points.len(),
            warnings: &curve.warnings,
            checks: &checks,
        },
    )?);
    if cfg.gnuplot {
        files.push(OutputFile::script(
            "frontier.gp",
            "set datafile separator ','\nset logscale x\nset key autotitle columnhead\n\
             set xlabel 'mu'\nset ylabel 'normalized value'\n\
             plot 'frontier.csv' using 1:8 with lines, '' using 1:9 with lines, '' using 1:10 with lines\n"
                .into(),
        ));
    }
    Ok(CommandOutput {
        files,
        checks,
        failures: vec![prep.failures],
    })
}

#[derive(Serialize)]
struct BoundOnGrid {
    mu: ExtendedMuRepr,
    product_minus_anchor: f64,
    tolerance: f64,
    l_bound: Option<f64>,
    u_bound: f64,
}

#[derive(Serialize)]
struct MarginPoint {
    label: String,
    parameter: Option<f64>,
    report: MarginReport,
    bounds: Vec<BoundOnGrid>,
    checks: Vec<Check>,
}

fn margin_point(
    cfg: &ExperimentConfig,
    value: Option<f64>,
    params: &ModelParams,
) -> CliResult<(MarginPoint, FailureCount)> {
    let label = label_for(
        cfg.sweep
            .as_ref()
            .zip(value)
            .map(|(s, v)| (s.param.as_str(), v)),
    );
    let prep = prepare(cfg, params, &label)?;
    let report = margin_report(&prep.batch, cfg.rho_quantile, cfg.rho_overrides())?;
    let curve = scan(cfg, &prep.batch)?;

    let c = &report.expected_margin;
    let sandwich_tol_lo = tolerance(report.e_lower.std_error, c.std_error, c.value);
    let sandwich_tol_hi = tolerance(report.e_upper.std_error, c.std_error, c.value);
    let mut checks = vec![Check {
        name: format!("{label}: margin_sandwich"),
        pass: report.e_lower.value <= c.value + sandwich_tol_lo
            && c.value <= report.e_upper.value + sandwich_tol_hi,
        detail: format!(
            "{} <= {} <= {}",
            report.e_lower.value, c.value, report.e_upper.value
        ),
    }];

    let mut bounds = Vec::new();
    let mut upper_bad = Vec::new();
    let mut lower_bad = Vec::new();
    for p in &curve.points {
        let gap = p.product.value - curve.anchor.value;
        let tol = tolerance(p.product.std_error, curve.anchor.std_error, p.product.value);
        let l = match report.l_bound(p.mu()) {
            Ok(v) => Some(v),
            Err(CoreError::Unavailable(_)) => None,
            Err(e) => return Err(e.into()),
        };
        if gap > report.u_bound + tol {
            upper_bad.push(format!("mu={}: {gap} > {}", p.mu(), report.u_bound));
        }
        if let Some(l) = l {
            if !p.mu().is_infinite() && gap < l - tol {
                lower_bad.push(format!("mu={}: {gap} < {l}", p.mu()));
            }
        }
        bounds.push(BoundOnGrid {
            mu: ExtendedMuRepr(p.mu()),
            product_minus_anchor: gap,
            tolerance: tol,
            l_bound: l,
            u_bound: report.u_bound,
        });
    }
    checks.push(Check::from_violations(
        &format!("{label}: product_gap_upper"),
        upper_bad,
    ));
    if report.spectral.rho_min.is_some() {
        checks.push(Check::from_violations(
            &format!("{label}: product_gap_lower"),
            lower_bad,
        ));
    }
    Ok((
        MarginPoint {
            label,
            parameter: value,
            report,
            bounds,
            checks,
        },
        prep.failures,
    ))
}

fn margin(cfg: &ExperimentConfig) -> CliResult<CommandOutput> {
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (value, params) in sweep_points(cfg) {
        let (point, f) = margin_point(cfg, value, &params)?;
        points.push(point);
        failures.push(f);
    }
    let checks: Vec<Check> = points.iter().flat_map(|p| p.checks.clone()).collect();
    let mut files = Vec::new();
    if let Some(sweep) = &cfg.sweep {
        let rows = points
            .iter()
            .map(|p| {
                let r = &p.report;
                vec![
                    fmt_g(p.parameter.unwrap_or(f64::NAN)),
                    fmt_g(r.expected_margin.value),
                    fmt_g(r.expected_margin.std_error),
                    fmt_g(r.d_value),
                    fmt_g(r.u_bound),
                    fmt_g(r.spectral.rho_max),
                    r.spectral.rho_min.map_or_else(String::new, fmt_g),
                ]
            })
            .collect();
        files.push(OutputFile::csv(
            "margin_sweep.csv",
            &[
                &sweep.param,
                "expected_margin",
                "expected_margin_se",
                "d",
                "u_bound",
                "rho_max",
                "rho_min",
            ],
            rows,
        ));
        if cfg.gnuplot {
            files.push(OutputFile::script(
                "margin_sweep.gp",
                "set datafile separator ','\nset key autotitle columnhead\n\
                 plot 'margin_sweep.csv' using 1:5 with linespoints\n"
                    .into(),
            ));
        }
    }
    #[derive(Serialize)]
    struct Body<'a> {
        model: &'a str,
        sweep_param: Option<&'a str>,
        points: &'a [MarginPoint],
        checks: &'a [Check],
    }
    files.push(OutputFile::json(
        "margin.json",
        &Body {
            model: &cfg.model,
            sweep_param: cfg.sweep.as_ref().map(|s| s.param.as_str()),
            points: &points,
            checks: &checks,
        },
    )?);
    Ok(CommandOutput {
        files,
        checks,
        failures,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Increasing,
    Decreasing,
    Constant,
    Mixed,
}

/// Direction of a sequence, treating steps within `tol` as flat.
pub fn trend(values: &[f64], tol: &[f64]) -> Trend {
    let mut up = false;
    let mut down = false;
    for i in 1..values.len() {
        let step = values[i] - values[i - 1];
        let t = tol[i].hypot(tol[i - 1]);
        if step > t {
            up = true;
        } else if step < -t {
            down = true;
        }
    }
    match (up, down) {
        (true, false) => Trend::Increasing,
        (false, true) => Trend::Decreasing,
        (false, false) => Trend::Constant,
        (true, true) => Trend::Mixed,
    }
}

fn skew_sweep(cfg: &ExperimentConfig) -> CliResult<CommandOutput> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("skew-sweep needs --sweep name=lo:hi:count".into()))?;
    #[derive(Serialize)]
    struct Row {
        parameter: f64,
        d: f64,
        d_std_error: f64,
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (value, params) in sweep_points(cfg) {
        let v = value.expect("sweep values present");
        let prep = prepare(cfg, &params, &label_for(Some((&sweep.param, v))))?;
        let d = skewness_d(&prep.batch)?;
        rows.push(Row {
            parameter: v,
            d: d.d,
            d_std_error: d.std_error,
        });
        failures.push(prep.failures);
    }
    let ds: Vec<f64> = rows.iter().map(|r| r.d).collect();
    // three-sigma steps count as movement
    let tol: Vec<f64> = rows
        .iter()
        .map(|r| 3.0 * r.d_std_error + 1e-12 * (1.0 + r.d))
        .collect();
    let direction = trend(&ds, &tol);

    let mut files = vec![OutputFile::csv(
        "skew_sweep.csv",
        &[&sweep.param, "d", "d_se"],
        rows.iter()
            .map(|r| vec![fmt_g(r.parameter), fmt_g(r.d), fmt_g(r.d_std_error)])
            .collect(),
    )];
    #[derive(Serialize)]
    struct Body<'a> {
        model: &'a str,
        sweep_param: &'a str,
        trend: Trend,
        points: &'a [Row],
    }
    files.push(OutputFile::json(
        "skew_sweep.json",
        &Body {
            model: &cfg.model,
            sweep_param: &sweep.param,
            trend: direction,
            points: &rows,
        },
    )?);
    if cfg.gnuplot {
        files.push(OutputFile::script(
            "skew_sweep.gp",
            "set datafile separator ','\nset key autotitle columnhead\n\
             plot 'skew_sweep.csv' using 1:2:3 with yerrorlines\n"
                .into(),
        ));
    }
    Ok(CommandOutput {
        files,
        checks: Vec::new(),
        failures,
    })
}

#[derive(Serialize)]
struct ProbeResult {
    probe: String,
    mse: FunctionalEstimate,
    sev: FunctionalEstimate,
    product: FunctionalEstimate,
    margin_over_h: f64,
    pass: bool,
    sev_quadratic: FunctionalEstimate,
    sev_consistent: bool,
}

fn verify(cfg: &ExperimentConfig) -> CliResult<CommandOutput> {
    if cfg.probes.is_empty() {
        return Err(CliError::Config("verify needs at least one --probe".into()));
    }
    let probes: Vec<Probe> = cfg
        .probes
        .iter()
        .map(|s| s.parse::<Probe>().map_err(CliError::from))
        .collect::<CliResult<_>>()?;
    let prep = prepare(cfg, &cfg.model_params(), "run")?;
    let curve = scan(cfg, &prep.batch)?;
    let baseline = sev_direct(&prep.batch, &Probe::Opt(ExtendedMu::Infinite))?;

    let mut results = Vec::new();
    let mut checks = Vec::new();
    for probe in &probes {
        let v = verify_uncertainty(&prep.batch, probe, &curve)?;
        let quad = sev_quadratic(&prep.batch, probe, &baseline, SEV_QUADRATIC_CONSTANT)?;
        let consistent = match sev_cross_check(&prep.batch, probe) {
            Ok(_) => true,
            Err(CoreError::Consistency(msg)) => {
                log::warn!("{msg}");
                false
            }
            Err(e) => return Err(e.into()),
        };
        checks.push(Check {
            name: format!("uncertainty: {probe}"),
            pass: v.pass,
            detail: format!("product {} vs h {}", v.product.value, v.h_value),
        });
        checks.push(Check {
            name: format!("sev_cross_check: {probe}"),
            pass: consistent,
            detail: format!("direct {} vs quadratic {}", v.sev.value, quad.value),
        });
        results.push(ProbeResult {
            probe: v.probe,
            mse: v.mse,
            sev: v.sev,
            product: v.product,
            margin_over_h: v.margin,
            pass: v.pass,
            sev_quadratic: quad,
            sev_consistent: consistent,
        });
    }
    #[derive(Serialize)]
    struct Body<'a> {
        model: &'a str,
        h_value: f64,
        h_std_error: f64,
        mu_star: ExtendedMuRepr,
        anchor: FunctionalEstimate,
        probes: &'a [ProbeResult],
        all_pass: bool,
        checks: &'a [Check],
    }
    let files = vec![OutputFile::json(
        "verify.json",
        &Body {
            model: prep.model.name(),
            h_value: curve.h_value,
            h_std_error: curve.h_std_error,
            mu_star: ExtendedMuRepr(curve.mu_star),
            anchor: curve.anchor,
            probes: &results,
            all_pass: checks.iter().all(|c| c.pass),
            checks: &checks,
        },
    )?];
    Ok(CommandOutput {
        files,
        checks,
        failures: vec![prep.failures],
    })
}
