//! Acceptance suite: runs each numbered criterion at its stated tolerance and prints
//! one PASS/FAIL line per criterion. Exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use sevtrade_cli::{run, CommandKind, Overrides};
use sevtrade_core::estimators::{curve_shift_identity, difference_identity, risk_aware_estimate};
use sevtrade_core::functionals::{
    conditional_terms, sev_direct, sev_quadratic, tolerance, EvaluatedBatch, FunctionalEstimate,
    Probe,
};
use sevtrade_core::margin::{hedge_margin, margin_report, projection_integral, RhoOverrides};
use sevtrade_core::model::{
    build_model, sample_observations, GenerativeModel, HiddenModel, ModelParams, MomentOracle,
    PosteriorSummary, ScalarDist,
};
use sevtrade_core::numerics::rng::uniform;
use sevtrade_core::numerics::DEFAULT_RANK_TOL;
use sevtrade_core::skewness::{
    gamma_inverse_design, pearson_reduction_check, relative_skewness, skewness_d, SkewnessValue,
};
use sevtrade_core::tradeoff::{
    default_grid, exchange_point, frontier_scan, lipschitz_constants, FrontierCurve,
};
use sevtrade_core::{ExtendedMu, RngStream};

const SAMPLES: usize = 20_000;
const SEED: u64 = 20_240_601;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn core<T>(r: sevtrade_core::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn close(name: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure((got - want).abs() <= tol, || {
        format!("{name} = {got}, expected {want} (tolerance {tol})")
    })
}

struct Case {
    label: String,
    model: Arc<dyn GenerativeModel>,
    batch: EvaluatedBatch,
}

fn case(name: &str, params: &[&str], samples: usize) -> Result<Case, String> {
    let model = core(build_model(name, &core(ModelParams::parse(params))?))?;
    let obs = core(sample_observations(
        model.as_ref(),
        samples,
        RngStream::new(SEED, 0),
    ))?;
    let batch = core(EvaluatedBatch::evaluate(model.as_ref(), &obs))?;
    let label = if params.is_empty() {
        name.to_string()
    } else {
        format!("{name}({})", params.join(","))
    };
    Ok(Case {
        label,
        model,
        batch,
    })
}

/// The four models used for probe-based checks.
fn probe_models() -> Result<Vec<Case>, String> {
    Ok(vec![
        case("gaussian", &["dim=2", "prior_corr=0.3"], SAMPLES)?,
        case("exp_noise", &[], SAMPLES)?,
        case("lognormal_mult", &["s_x=1"], SAMPLES)?,
        case("gamma_hidden", &["kappa=1,3", "theta=1,0.5"], SAMPLES)?,
    ])
}

/// Every built-in model that needs no external data.
fn builtin_models() -> Result<Vec<Case>, String> {
    Ok(vec![
        case("gaussian", &["dim=2", "prior_corr=0.3"], SAMPLES)?,
        case("exp_noise", &[], SAMPLES)?,
        case("lognormal_mult", &[], SAMPLES)?,
        case("gamma_hidden", &[], SAMPLES)?,
        case("exponential_hidden", &[], SAMPLES)?,
        case("lognormal_hidden", &[], SAMPLES)?,
        case("uniform_hidden", &[], SAMPLES)?,
        case("normal_hidden", &[], SAMPLES)?,
    ])
}

fn random_probes(count: usize, stream: u64) -> Vec<Probe> {
    let rng = RngStream::new(SEED, stream);
    (0..count as u64)
        .map(|i| {
            let mut g = rng.generator(i);
            let mut u = || uniform(&mut g);
            match (u() * 6.0) as usize {
                0 => Probe::Affine {
                    scale: 0.5 + u(),
                    shift: 2.0 * u() - 1.0,
                },
                1 => Probe::Mix(2.0 * u() - 0.5),
                2 => Probe::Const(6.0 * u() - 3.0),
                3 => Probe::Opt(ExtendedMu::Finite(10f64.powf(8.0 * u() - 4.0))),
                4 => Probe::Tanh {
                    amp: 2.0 * u() - 1.0,
                    rate: 0.1 + 3.0 * u(),
                },
                _ => Probe::Mean,
            }
        })
        .collect()
}

fn scan(c: &Case) -> Result<FrontierCurve, String> {
    core(frontier_scan(&c.batch, &default_grid()))
}

fn within_budget(start: Instant, budget: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t <= budget, || {
        format!(
            "took {:.1}s, budget {:.0}s",
            t.as_secs_f64(),
            budget.as_secs_f64()
        )
    })
}

/// Scalar Exp(1) algebra against closed forms and a brute-force minimization over
/// scalar estimates using only the raw moments 1, 2, 6, 24.
fn criterion_1() -> Outcome {
    let start = Instant::now();
    let tol = 1e-9;
    let c = case("gamma_hidden", &["kappa=1", "theta=1"], 1)?;
    let p = &c.batch.posteriors[0];
    let x_inf = core(risk_aware_estimate(
        p,
        ExtendedMu::Infinite,
        DEFAULT_RANK_TOL,
    ))?;
    close("X_inf", x_inf.as_slice()[0], 2.0, tol)?;
    close(
        "delta",
        core(sevtrade_core::estimators::delta_x(p))?[0],
        -1.0,
        tol,
    )?;
    close("C", hedge_margin(p), 1.0, tol)?;
    close("d", core(skewness_d(&c.batch))?.d, 2.0, tol)?;
    let curve = scan(&c)?;
    close("mse0", curve.endpoint_zero().mse.value, 1.0, tol)?;
    close("sev_inf", curve.endpoint_infinite().sev.value, 4.0, tol)?;
    close("anchor", curve.anchor.value, 4.0, tol)?;
    close("mu*", curve.mu_star.value(), 0.5, tol)?;
    close("h", curve.h_value, 6.25, tol)?;
    let report = core(margin_report(&c.batch, 0.001, RhoOverrides::default()))?;
    close("U", report.u_bound, 36.0, tol)?;
    close(
        "L(0.5)",
        core(report.l_bound(ExtendedMu::Finite(0.5)))?,
        0.515625,
        tol,
    )?;

    // brute force: the product over all scalar estimates x in [1, 2]
    let raw = [1.0, 1.0, 2.0, 6.0, 24.0];
    let central_power = |x: f64, k: usize| -> f64 {
        // E{(X - x)^k} by binomial expansion
        (0..=k)
            .map(|j| {
                let binom = (0..j).fold(1.0, |b, i| b * (k - i) as f64 / (i + 1) as f64);
                binom * raw[j] * (-x).powi((k - j) as i32)
            })
            .sum()
    };
    let product = |x: f64| {
        let m2 = central_power(x, 2);
        m2 * (central_power(x, 4) - m2 * m2)
    };
    let (mut lo, mut hi) = (1.0f64, 2.0f64);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    for _ in 0..200 {
        let a = hi - phi * (hi - lo);
        let b = lo + phi * (hi - lo);
        if product(a) < product(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    let x_best = 0.5 * (lo + hi);
    close("brute-force h", curve.h_value, product(x_best), tol)?;
    let x_star = core(risk_aware_estimate(p, curve.mu_star, DEFAULT_RANK_TOL))?.as_slice()[0];
    close("brute-force minimizer", x_star, x_best, 1e-6)?;
    within_budget(start, Duration::from_secs(1))?;
    Ok(format!(
        "h = {}, mu* = {}, U = {}, L(0.5) = {}",
        curve.h_value,
        curve.mu_star,
        report.u_bound,
        core(report.l_bound(ExtendedMu::Finite(0.5)))?
    ))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let probes = random_probes(100, 2);
    let mut worst = f64::INFINITY;
    for c in probe_models()? {
        let curve = scan(&c)?;
        let tol = tolerance(
            curve.h_std_error,
            curve.anchor.std_error,
            curve.anchor.value,
        );
        ensure(curve.h_value >= curve.anchor.value - tol, || {
            format!(
                "{}: h {} below anchor {}",
                c.label, curve.h_value, curve.anchor.value
            )
        })?;
        for probe in &probes {
            let (m, s) = core(conditional_terms(&c.batch, probe))?;
            let prod = FunctionalEstimate::product(&m, &s);
            let slack = 3.0 * prod.std_error.hypot(curve.h_std_error);
            ensure(prod.value >= curve.h_value - slack, || {
                format!(
                    "{}: {probe} product {} < h {}",
                    c.label, prod.value, curve.h_value
                )
            })?;
            worst = worst.min((prod.value - curve.h_value) / curve.h_value.max(1e-300));
        }
    }
    within_budget(start, Duration::from_secs(120))?;
    Ok(format!(
        "400 probes, smallest relative excess over h {worst:.3e}"
    ))
}

fn criterion_3_and_4(models: &[Case]) -> (Outcome, Outcome) {
    let mut mono = Vec::new();
    let mut lip = Vec::new();
    for c in models {
        let curve = match scan(c) {
            Ok(v) => v,
            Err(e) => return (Err(e.clone()), Err(e)),
        };
        mono.extend(
            curve
                .monotonicity_violations()
                .into_iter()
                .map(|v| format!("{}: {v}", c.label)),
        );
        match lipschitz_constants(&c.batch) {
            Ok(k) => lip.extend(
                curve
                    .lipschitz_violations(&k)
                    .into_iter()
                    .map(|v| format!("{}: {v}", c.label)),
            ),
            Err(e) => lip.push(e.to_string()),
        }
    }
    let verdict = |v: Vec<String>, what: &str| {
        if v.is_empty() {
            Ok(format!("{} models, no {what} violations", models.len()))
        } else {
            Err(v.join("; "))
        }
    };
    (verdict(mono, "monotonicity"), verdict(lip, "Lipschitz"))
}

fn criterion_5(models: &[Case]) -> Outcome {
    let mut lines = Vec::new();
    for c in models {
        let r = core(margin_report(&c.batch, 0.001, RhoOverrides::default()))?;
        let e = &r.expected_margin;
        let lo_tol = tolerance(r.e_lower.std_error, e.std_error, e.value);
        let hi_tol = tolerance(r.e_upper.std_error, e.std_error, e.value);
        ensure(
            r.e_lower.value <= e.value + lo_tol && e.value <= r.e_upper.value + hi_tol,
            || {
                format!(
                    "{}: {} <= {} <= {} fails",
                    c.label, r.e_lower.value, e.value, r.e_upper.value
                )
            },
        )?;
        if c.label == "gamma_hidden" {
            ensure(
                (r.e_lower.value - e.value).abs() <= 1e-12
                    && (r.e_upper.value - e.value).abs() <= 1e-12,
                || {
                    format!(
                        "gamma_hidden sandwich not tight: {} {} {}",
                        r.e_lower.value, e.value, r.e_upper.value
                    )
                },
            )?;
        }
        lines.push(format!("{} {:.4}", c.label, e.value));
    }
    Ok(format!("E C: {}", lines.join(", ")))
}

fn criterion_6(models: &[Case]) -> Outcome {
    let mut checked = Vec::new();
    for c in models {
        let r = core(margin_report(&c.batch, 0.001, RhoOverrides::default()))?;
        if r.spectral.rho_min.is_none() {
            continue;
        }
        let curve = scan(c)?;
        for p in &curve.points {
            let Some(mu) = p.mu().as_finite() else {
                continue;
            };
            let gap = p.product.value - curve.anchor.value;
            let se = 3.0 * p.product.std_error.hypot(curve.anchor.std_error);
            let l = core(r.l_bound(ExtendedMu::Finite(mu)))?;
            ensure(
                gap >= l - se - 1e-10 * (1.0 + curve.anchor.value) && gap <= r.u_bound + se,
                || {
                    format!(
                        "{}: mu={mu}: gap {gap} outside [{l}, {}]",
                        c.label, r.u_bound
                    )
                },
            )?;
        }
        checked.push(c.label.clone());
    }
    ensure(!checked.is_empty(), || {
        "no model had rho_min available".into()
    })?;
    Ok(format!("bounds hold on {}", checked.join(", ")))
}

fn criterion_7() -> Outcome {
    let probes = random_probes(50, 7);
    let mut models = probe_models()?;
    for name in ["exponential_hidden", "lognormal_hidden", "uniform_hidden"] {
        models.push(case(name, &[], 1)?);
    }
    for c in &models {
        let baseline = core(sev_direct(&c.batch, &Probe::Opt(ExtendedMu::Infinite)))?;
        let closed_form = c.model.is_totally_hidden();
        for probe in &probes {
            let direct = core(sev_direct(&c.batch, probe))?;
            let quad = core(sev_quadratic(&c.batch, probe, &baseline, 4.0))?;
            let tol = if closed_form {
                1e-9 * (1.0 + direct.value.abs())
            } else {
                3.0 * direct.std_error.hypot(quad.std_error)
            };
            ensure((direct.value - quad.value).abs() <= tol, || {
                format!(
                    "{}: {probe}: direct {} vs quadratic {}",
                    c.label, direct.value, quad.value
                )
            })?;
        }
    }
    Ok(format!("50 probes on {} models", models.len()))
}

fn criterion_8() -> Outcome {
    let hidden = [
        HiddenModel::gamma(&[4.0], &[2.0]).map_err(|e| e.to_string())?,
        HiddenModel::gamma(&[0.3], &[1.0]).map_err(|e| e.to_string())?,
        HiddenModel::new(
            "exponential_hidden",
            vec![core(ScalarDist::exponential(1.5))?],
        )
        .map_err(|e| e.to_string())?,
        HiddenModel::new(
            "lognormal_hidden",
            vec![core(ScalarDist::lognormal(0.0, 0.5))?],
        )
        .map_err(|e| e.to_string())?,
    ];
    let mut lines = Vec::new();
    for m in &hidden {
        let batch = core(EvaluatedBatch::from_posteriors(
            vec![vec![]],
            vec![core(m.posterior(&[]))?],
        ))?;
        let chk = core(pearson_reduction_check(m, &batch))?;
        ensure(chk.gap <= 1e-8f64.max(3.0 * chk.d_std_error), || {
            format!("{}: d {} vs Pearson {}", m.name(), chk.d, chk.pearson)
        })?;
        lines.push(format!("{} {:.6}", m.name(), chk.d));
    }
    let d_of = |theta: f64| -> Result<f64, String> {
        let m = HiddenModel::gamma(&[2.5], &[theta]).map_err(|e| e.to_string())?;
        let b = core(EvaluatedBatch::from_posteriors(
            vec![vec![]],
            vec![core(m.posterior(&[]))?],
        ))?;
        Ok(core(skewness_d(&b))?.d)
    };
    let ds = [d_of(0.1)?, d_of(1.0)?, d_of(10.0)?];
    ensure(ds.iter().all(|d| (d - ds[1]).abs() <= 1e-8), || {
        format!("d varies with scale: {ds:?}")
    })?;
    Ok(format!("{}; scale-free d {:.9}", lines.join(", "), ds[1]))
}

fn criterion_9() -> Outcome {
    // a pool of models with cached skewness values
    let mut pool: Vec<SkewnessValue> = Vec::new();
    let rng = RngStream::new(SEED, 9);
    for i in 0..24u64 {
        let alpha = 10.0 * uniform(&mut rng.generator(i));
        let m = core(gamma_inverse_design(alpha))?;
        let b = core(EvaluatedBatch::from_posteriors(
            vec![vec![]],
            vec![core(m.posterior(&[]))?],
        ))?;
        pool.push(core(skewness_d(&b))?);
    }
    for (name, params) in [
        ("gaussian", vec!["dim=2"]),
        ("lognormal_mult", vec!["s_x=0.5"]),
        ("uniform_hidden", vec![]),
    ] {
        pool.push(core(skewness_d(&case(name, &params, 2000)?.batch))?);
    }
    for t in 0..200u64 {
        let mut g = rng.derive(1).generator(t);
        let mut pick = || (uniform(&mut g) * pool.len() as f64) as usize % pool.len();
        let (a, b, c) = (pool[pick()], pool[pick()], pool[pick()]);
        let ab = relative_skewness(&a, &b).value;
        let ba = relative_skewness(&b, &a).value;
        let bc = relative_skewness(&b, &c).value;
        let ac = relative_skewness(&a, &c).value;
        ensure(ab == ba, || format!("asymmetric: {ab} vs {ba}"))?;
        ensure(relative_skewness(&a, &a).value == 0.0, || {
            "nonzero self-distance".into()
        })?;
        ensure(
            ab >= 0.0 && ac <= ab + bc + 4.0 * f64::EPSILON * (ab + bc),
            || format!("triangle: d(a,c) = {ac} > {ab} + {bc}"),
        )?;
    }
    Ok(format!("200 triples from a pool of {}", pool.len()))
}

fn criterion_10() -> Outcome {
    let mut notes = Vec::new();

    // (a) interior minimum of the product near the origin
    let start = Instant::now();
    let c = case("exp_noise", &[], SAMPLES)?;
    let curve = scan(&c)?;
    let mu = curve.mu_star;
    let at = |m: ExtendedMu| curve.point(m).map(|p| p.product);
    let (p0, pinf) = (
        at(ExtendedMu::ZERO).unwrap(),
        at(ExtendedMu::Infinite).unwrap(),
    );
    ensure(mu.as_finite().is_some_and(|m| m > 0.0 && m < 1.0), || {
        format!("(a) mu* = {mu}")
    })?;
    ensure(
        curve.h_value < p0.value - 3.0 * p0.std_error
            && curve.h_value < pinf.value - 3.0 * pinf.std_error,
        || {
            format!(
                "(a) minimum {} not interior ({}, {})",
                curve.h_value, p0.value, pinf.value
            )
        },
    )?;
    within_budget(start, Duration::from_secs(120))?;
    notes.push(format!("(a) mu* = {:.4}", mu.value()));

    // (b) skewness grows with s_x
    let start = Instant::now();
    let mut ds = Vec::new();
    for s in [0.25, 0.5, 1.0, 2.0] {
        let c = case("lognormal_mult", &[&format!("s_x={s}")], SAMPLES)?;
        ds.push(core(skewness_d(&c.batch))?);
    }
    for w in ds.windows(2) {
        ensure(
            w[1].d > w[0].d + 3.0 * w[0].std_error.hypot(w[1].std_error),
            || {
                format!(
                    "(b) d not increasing: {:?}",
                    ds.iter().map(|d| d.d).collect::<Vec<_>>()
                )
            },
        )?;
    }
    within_budget(start, Duration::from_secs(120))?;
    notes.push(format!(
        "(b) d = {:?}",
        ds.iter()
            .map(|d| (d.d * 1e4).round() / 1e4)
            .collect::<Vec<_>>()
    ));

    // (c) the upper bound with rho_max = 10 grows with s_x and vanishes as s_x -> 0
    let start = Instant::now();
    let mut us = Vec::new();
    for s in [0.01, 0.1, 0.25, 0.5, 1.0, 2.0] {
        let c = case("lognormal_mult", &[&format!("s_x={s}")], SAMPLES)?;
        let r = core(margin_report(
            &c.batch,
            0.001,
            RhoOverrides {
                rho_min: None,
                rho_max: Some(10.0),
            },
        ))?;
        us.push(r.u_bound);
    }
    ensure(us.windows(2).all(|w| w[1] > w[0]), || {
        format!("(c) U not increasing: {us:?}")
    })?;
    ensure(
        us[0] < 1e-2 * us[us.len() - 1] && us[0] < us[1] * 0.5,
        || format!("(c) U does not vanish: {us:?}"),
    )?;
    within_budget(start, Duration::from_secs(120))?;
    notes.push(format!(
        "(c) U = {:?}",
        us.iter().map(|u| format!("{u:.3e}")).collect::<Vec<_>>()
    ));

    // (d) a grid point trades at most 15% mse for at least 20% sev
    let start = Instant::now();
    let c = case("lognormal_mult", &["s_x=2"], SAMPLES)?;
    let curve = scan(&c)?;
    let p =
        exchange_point(&curve, 0.15, 0.20).ok_or_else(|| "(d) no exchange point".to_string())?;
    let base = curve.endpoint_zero();
    within_budget(start, Duration::from_secs(120))?;
    notes.push(format!(
        "(d) mu = {:.3e}: mse +{:.1}%, sev -{:.1}%",
        p.mu().value(),
        100.0 * (p.mse.value / base.mse.value - 1.0),
        100.0 * (1.0 - p.sev.value / base.sev.value)
    ));
    Ok(notes.join("; "))
}

fn random_posterior(rng: &RngStream, i: u64) -> Result<PosteriorSummary, String> {
    let mut g = rng.generator(i);
    let mut u = || uniform(&mut g);
    let n = 1 + (u() * 4.0) as usize;
    let k = n + 2 + (u() * 7.0) as usize;
    let mean: Vec<f64> = (0..n).map(|_| 10.0 * u() - 5.0).collect();
    let pts: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..n).map(|_| (6.0 * u() - 3.0).powi(3) / 9.0).collect())
        .collect();
    let centre: Vec<f64> = (0..n)
        .map(|j| pts.iter().map(|p| p[j]).sum::<f64>() / k as f64)
        .collect();
    let centered = pts
        .iter()
        .map(|p| p.iter().zip(&centre).map(|(a, b)| a - b).collect())
        .collect();
    core(PosteriorSummary::from_oracle(
        mean,
        MomentOracle::Empirical {
            centered: Arc::new(centered),
        },
    ))
}

fn criterion_11() -> Outcome {
    let rng = RngStream::new(SEED, 11);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut worst: f64 = 0.0;
    for i in 0..1000u64 {
        let p = random_posterior(&rng, i)?;
        let mut g = rng.derive(2).generator(i);
        let mu = 10f64.powf(8.0 * uniform(&mut g) - 4.0);
        let mu2 = 10f64.powf(8.0 * uniform(&mut g) - 4.0);
        let est = |m: f64| {
            core(risk_aware_estimate(
                &p,
                ExtendedMu::Finite(m),
                DEFAULT_RANK_TOL,
            ))
            .map(|e| e.into_inner())
        };
        let (a, b) = (est(mu)?, est(mu2)?);
        let x0 = est(0.0)?;
        let delta = core(sevtrade_core::estimators::delta_x(&p))?;
        let scale = 1.0 + norm(&x0) + norm(&delta);
        let shifted = core(curve_shift_identity(&p, mu))?.into_inner();
        let diff = core(difference_identity(&p, mu, mu2))?;
        let e1: Vec<f64> = shifted.iter().zip(&a).map(|(x, y)| x - y).collect();
        let e2: Vec<f64> = diff
            .iter()
            .zip(a.iter().zip(&b))
            .map(|(d, (x, y))| d - (x - y))
            .collect();
        let rel = norm(&e1).max(norm(&e2)) / scale;
        worst = worst.max(rel);
        ensure(rel <= 1e-10, || {
            format!("posterior {i}: identity residual {rel:e}")
        })?;
    }

    let scalars = [
        ScalarDist::gamma(1.0, 1.0),
        ScalarDist::gamma(0.5, 3.0),
        ScalarDist::gamma(7.0, 0.2),
        ScalarDist::exponential(2.0),
        ScalarDist::lognormal(0.1, 0.4),
    ];
    let mut worst_proj: f64 = 0.0;
    for d in scalars {
        let d = core(d)?;
        let m = HiddenModel::new("scalar", vec![d]).map_err(|e| e.to_string())?;
        let p = core(m.posterior(&[]))?;
        let c = hedge_margin(&p);
        let proj = core(projection_integral(&p, 1e6))?;
        let rel = (proj.value - c).abs() / c;
        worst_proj = worst_proj.max(rel);
        ensure(rel <= 1e-4, || {
            format!("{d:?}: projection {} vs margin {c}", proj.value)
        })?;
    }
    Ok(format!(
        "identity residual <= {worst:.1e}; projection relative error <= {worst_proj:.1e}"
    ))
}

fn read_outputs(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name != "timing.json" {
            out.insert(name, fs::read(entry.path()).map_err(|e| e.to_string())?);
        }
    }
    Ok(out)
}

fn criterion_12() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    struct RunCase {
        kind: CommandKind,
        model: &'static str,
        params: &'static [&'static str],
        sweep: Option<&'static str>,
        probes: &'static [&'static str],
    }
    let runs = [
        RunCase {
            kind: CommandKind::Frontier,
            model: "exp_noise",
            params: &[],
            sweep: None,
            probes: &[],
        },
        RunCase {
            kind: CommandKind::Margin,
            model: "lognormal_mult",
            params: &[],
            sweep: Some("s_x=0.25,1"),
            probes: &[],
        },
        RunCase {
            kind: CommandKind::SkewSweep,
            model: "gamma_hidden",
            params: &["dim=2"],
            sweep: Some("kappa=1:4:4"),
            probes: &[],
        },
        RunCase {
            kind: CommandKind::Verify,
            model: "gaussian",
            params: &["dim=3"],
            sweep: None,
            probes: &["mix(0.5)", "affine(1.1,0.2)"],
        },
    ];
    let mut compared = 0;
    for RunCase {
        kind,
        model,
        params,
        sweep,
        probes,
    } in runs
    {
        let mut outputs = Vec::new();
        for threads in [1usize, 4] {
            let dir = tmp.path().join(format!("{}-{threads}", kind.name()));
            let flags = Overrides {
                model: Some(model.into()),
                params: params.iter().map(|s| s.to_string()).collect(),
                samples: Some(SAMPLES),
                seed: Some(7),
                sweep: sweep.map(str::to_string),
                probes: probes.iter().map(|s| s.to_string()).collect(),
                out: Some(dir.clone()),
                threads: Some(threads),
                gnuplot: true,
                ..Default::default()
            };
            run(kind, &flags).map_err(|e| format!("{}: {e}", kind.name()))?;
            outputs.push(read_outputs(&dir)?);
        }
        ensure(!outputs[0].is_empty() && outputs[0] == outputs[1], || {
            format!("{}: outputs differ between 1 and 4 threads", kind.name())
        })?;
        compared += outputs[0].len();
    }
    Ok(format!(
        "{compared} files byte-identical across 1 and 4 threads"
    ))
}

fn main() {
    let mut failures = 0;
    let mut report = |id: &str, what: &str, start: Instant, outcome: Outcome| {
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("[PASS] criterion {id}: {what} ({secs:.1}s) {detail}"),
            Err(detail) => {
                failures += 1;
                println!("[FAIL] criterion {id}: {what} ({secs:.1}s) {detail}");
            }
        }
    };

    let t = Instant::now();
    report("1", "scalar closed-form suite", t, criterion_1());
    let t = Instant::now();
    report("2", "product bound over random probes", t, criterion_2());

    let t = Instant::now();
    match builtin_models() {
        Ok(models) => {
            let (mono, lip) = criterion_3_and_4(&models);
            report("3", "frontier monotonicity", t, mono);
            let t = Instant::now();
            report("4", "frontier Lipschitz bounds", t, lip);
            let t = Instant::now();
            report("5", "margin sandwich", t, criterion_5(&models));
            let t = Instant::now();
            report("6", "product gap bounds", t, criterion_6(&models));
        }
        Err(e) => {
            for (id, what) in [
                ("3", "frontier monotonicity"),
                ("4", "frontier Lipschitz bounds"),
                ("5", "margin sandwich"),
                ("6", "product gap bounds"),
            ] {
                report(id, what, t, Err(e.clone()));
            }
        }
    }
    let t = Instant::now();
    report("7", "sev quadratic form vs direct", t, criterion_7());
    let t = Instant::now();
    report("8", "scalar skewness reduction", t, criterion_8());
    let t = Instant::now();
    report("9", "relative skewness pseudometric", t, criterion_9());
    let t = Instant::now();
    report("10", "qualitative curve shapes", t, criterion_10());
    let t = Instant::now();
    report(
        "11",
        "estimator identities and projection integral",
        t,
        criterion_11(),
    );
    let t = Instant::now();
    report("12", "determinism across thread counts", t, criterion_12());

    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
