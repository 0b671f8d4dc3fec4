//! Adaptive Gauss–Kronrod (7/15) quadrature with interval bisection, for
//! scalar and small fixed-size vector integrands.
//!
//! Infinite endpoints are mapped onto a finite interval: `x = lo + t/(1-t)`
//! for `[lo, inf)`, `x = hi - t/(1-t)` for `(-inf, hi]` and `x = t/(1-t^2)`
//! for the whole line.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

pub const DEFAULT_MAX_SUBDIVISIONS: usize = 2000;
pub const MIN_REL_TOL: f64 = 100.0 * f64::EPSILON;

/// Integration domain; either endpoint may be infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Domain {
    pub lo: f64,
    pub hi: f64,
}

impl Domain {
    pub fn new(lo: f64, hi: f64) -> Self {
        Domain { lo, hi }
    }

    pub fn semi_infinite(lo: f64) -> Self {
        Domain {
            lo,
            hi: f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResultN<const N: usize> {
    pub value: [f64; N],
    pub abs_error: [f64; N],
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_subdivisions: usize,
}

impl QuadOptions {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        QuadOptions {
            abs_tol,
            rel_tol,
            max_subdivisions: DEFAULT_MAX_SUBDIVISIONS,
        }
    }
}

/// Integrates `f` over `domain` until the estimated error is at most
/// `max(abs_tol, rel_tol * |result|)`.
pub fn integrate_1d<F>(f: F, domain: Domain, abs_tol: f64, rel_tol: f64) -> Result<QuadResult>
where
    F: Fn(f64) -> f64,
{
    let r = integrate_vec(|x| [f(x)], domain, QuadOptions::new(abs_tol, rel_tol))?;
    Ok(QuadResult {
        value: r.value[0],
        abs_error: r.abs_error[0],
        evaluations: r.evaluations,
    })
}

/// Vector-valued variant: every component must meet its own tolerance.
pub fn integrate_vec<F, const N: usize>(
    f: F,
    domain: Domain,
    opts: QuadOptions,
) -> Result<QuadResultN<N>>
where
    F: Fn(f64) -> [f64; N],
{
    if !(opts.abs_tol > 0.0 && opts.rel_tol > 0.0) {
        return Err(Error::InvalidInput("tolerances must be positive".into()));
    }
    // The per-rule error estimate never drops below 50 eps |f|, so tighter relative
    // requests could never converge.
    let opts = QuadOptions {
        rel_tol: opts.rel_tol.max(MIN_REL_TOL),
        ..opts
    };
    let Domain { lo, hi } = domain;
    if lo.is_nan() || hi.is_nan() {
        return Err(Error::InvalidInput("NaN integration bound".into()));
    }
    if lo == hi {
        return Ok(QuadResultN {
            value: [0.0; N],
            abs_error: [0.0; N],
            evaluations: 0,
        });
    }
    if lo > hi {
        let mut r = integrate_vec(f, Domain::new(hi, lo), opts)?;
        for v in r.value.iter_mut() {
            *v = -*v;
        }
        return Ok(r);
    }

    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => adaptive(&f, lo, hi, opts),
        (true, false) => adaptive(
            &|t: f64| {
                let s = 1.0 - t;
                let x = lo + t / s;
                scale(f(x), 1.0 / (s * s))
            },
            0.0,
            1.0,
            opts,
        ),
        (false, true) => adaptive(
            &|t: f64| {
                let s = 1.0 - t;
                let x = hi - t / s;
                scale(f(x), 1.0 / (s * s))
            },
            0.0,
            1.0,
            opts,
        ),
        (false, false) => adaptive(
            &|t: f64| {
                let s = 1.0 - t * t;
                let x = t / s;
                scale(f(x), (1.0 + t * t) / (s * s))
            },
            -1.0,
            1.0,
            opts,
        ),
    }
}

#[inline]
fn scale<const N: usize>(mut v: [f64; N], s: f64) -> [f64; N] {
    for x in v.iter_mut() {
        // endpoint singularities of the transform: the integrand must vanish there
        *x = if *x == 0.0 { 0.0 } else { *x * s };
    }
    v
}

struct Segment<const N: usize> {
    a: f64,
    b: f64,
    value: [f64; N],
    error: [f64; N],
    priority: f64,
}

impl<const N: usize> PartialEq for Segment<N> {
    fn eq(&self, other: &Self) -> bool {
        self.priority == other.priority
    }
}
impl<const N: usize> Eq for Segment<N> {}
impl<const N: usize> PartialOrd for Segment<N> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<const N: usize> Ord for Segment<N> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.priority.total_cmp(&other.priority)
    }
}

/// One 15-point Kronrod rule with QUADPACK-style error scaling.
fn gk15<F, const N: usize>(f: &F, a: f64, b: f64) -> ([f64; N], [f64; N])
where
    F: Fn(f64) -> [f64; N],
{
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = [0.0; N];
    let mut res_g = [0.0; N];
    let mut res_abs = [0.0; N];
    let mut fv1 = [[0.0; N]; 7];
    let mut fv2 = [[0.0; N]; 7];
    for c in 0..N {
        res_k[c] = fc[c] * WGK[7];
        res_g[c] = fc[c] * WG[3];
        res_abs[c] = res_k[c].abs();
    }
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        for c in 0..N {
            let sum = f1[c] + f2[c];
            res_k[c] += WGK[j] * sum;
            res_abs[c] += WGK[j] * (f1[c].abs() + f2[c].abs());
            if j % 2 == 1 {
                res_g[c] += WG[j / 2] * sum;
            }
        }
    }
    let mut value = [0.0; N];
    let mut error = [0.0; N];
    for c in 0..N {
        let mean = res_k[c] * 0.5;
        let mut res_asc = WGK[7] * (fc[c] - mean).abs();
        for j in 0..7 {
            res_asc += WGK[j] * ((fv1[j][c] - mean).abs() + (fv2[j][c] - mean).abs());
        }
        let res_asc = res_asc * half.abs();
        let res_abs = res_abs[c] * half.abs();
        let mut err = ((res_k[c] - res_g[c]) * half).abs();
        if res_asc != 0.0 && err != 0.0 {
            err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
        }
        if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
            err = err.max(50.0 * f64::EPSILON * res_abs);
        }
        value[c] = res_k[c] * half;
        error[c] = err;
    }
    (value, error)
}

fn adaptive<F, const N: usize>(f: &F, a: f64, b: f64, opts: QuadOptions) -> Result<QuadResultN<N>>
where
    F: Fn(f64) -> [f64; N],
{
    let priority = |err: &[f64; N], val: &[f64; N]| -> f64 {
        err.iter()
            .zip(val)
            .map(|(e, v)| e / (opts.abs_tol + opts.rel_tol * v.abs()))
            .fold(0.0, f64::max)
    };
    let (v0, e0) = gk15(f, a, b);
    let mut evaluations = 15;
    let mut heap = BinaryHeap::new();
    heap.push(Segment {
        a,
        b,
        value: v0,
        error: e0,
        priority: priority(&e0, &v0),
    });
    let mut total = v0;
    let mut total_err = e0;
    let mut subdivisions = 0;

    loop {
        if total.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericFailure("non-finite integrand value".into()));
        }
        let converged =
            (0..N).all(|c| total_err[c] <= opts.abs_tol.max(opts.rel_tol * total[c].abs()));
        if converged {
            return Ok(QuadResultN {
                value: total,
                abs_error: total_err,
                evaluations,
            });
        }
        if subdivisions >= opts.max_subdivisions {
            let worst = (0..N)
                .max_by(|&x, &y| {
                    let rx = total_err[x] / opts.abs_tol.max(opts.rel_tol * total[x].abs());
                    let ry = total_err[y] / opts.abs_tol.max(opts.rel_tol * total[y].abs());
                    rx.total_cmp(&ry)
                })
                .unwrap_or(0);
            return Err(Error::AccuracyFailure {
                estimate: total[worst],
                error_estimate: total_err[worst],
                subdivisions,
            });
        }
        let seg = match heap.pop() {
            Some(s) => s,
            None => unreachable!("segment heap is never empty"),
        };
        let mid = 0.5 * (seg.a + seg.b);
        if !(mid > seg.a && mid < seg.b) {
            // interval can no longer be split in floating point
            return Err(Error::AccuracyFailure {
                estimate: total[0],
                error_estimate: total_err[0],
                subdivisions,
            });
        }
        let (vl, el) = gk15(f, seg.a, mid);
        let (vr, er) = gk15(f, mid, seg.b);
        evaluations += 30;
        subdivisions += 1;
        for c in 0..N {
            total[c] += vl[c] + vr[c] - seg.value[c];
            total_err[c] += el[c] + er[c] - seg.error[c];
        }
        heap.push(Segment {
            a: seg.a,
            b: mid,
            value: vl,
            error: el,
            priority: priority(&el, &vl),
        });
        heap.push(Segment {
            a: mid,
            b: seg.b,
            value: vr,
            error: er,
            priority: priority(&er, &vr),
        });
        // Resum periodically so that the running totals do not drift.
        if subdivisions % 64 == 0 {
            total = [0.0; N];
            total_err = [0.0; N];
            for s in heap.iter() {
                for c in 0..N {
                    total[c] += s.value[c];
                    total_err[c] += s.error[c];
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_tail() {
        let r = integrate_1d(|x| (-x).exp(), Domain::semi_infinite(0.0), 1e-12, 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10, "{}", r.value);
    }

    #[test]
    fn polynomial_on_unit_interval() {
        let r = integrate_1d(|x| 3.0 * x * x, Domain::new(0.0, 1.0), 1e-14, 1e-14).unwrap();
        assert!((r.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn exponential_mean_two() {
        let r = integrate_1d(
            |x| x * 0.5 * (-x / 2.0).exp(),
            Domain::semi_infinite(0.0),
            1e-12,
            1e-12,
        )
        .unwrap();
        assert!((r.value - 2.0).abs() < 1e-10);
    }

    #[test]
    fn reversed_bounds_flip_sign() {
        let r = integrate_1d(|x| x, Domain::new(1.0, 0.0), 1e-12, 1e-12).unwrap();
        assert!((r.value + 0.5).abs() < 1e-14);
    }

    #[test]
    fn whole_line_gaussian() {
        let r = integrate_1d(
            |x| (-0.5 * x * x).exp(),
            Domain::new(f64::NEG_INFINITY, f64::INFINITY),
            1e-12,
            1e-12,
        )
        .unwrap();
        assert!((r.value - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn non_convergence_reports_best_estimate() {
        let opts = QuadOptions {
            abs_tol: 1e-15,
            rel_tol: 1e-15,
            max_subdivisions: 3,
        };
        let err = integrate_vec(
            |x: f64| [x.abs().sqrt().recip().min(1e12)],
            Domain::new(-1.0, 1.0),
            opts,
        )
        .unwrap_err();
        match err {
            Error::AccuracyFailure { estimate, .. } => assert!(estimate.is_finite()),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn vector_components_each_converge() {
        let r = integrate_vec(
            |x: f64| [(-x).exp(), x * (-x).exp(), x * x * (-x).exp()],
            Domain::semi_infinite(0.0),
            QuadOptions::new(1e-13, 1e-11),
        )
        .unwrap();
        assert!((r.value[0] - 1.0).abs() < 1e-10);
        assert!((r.value[1] - 1.0).abs() < 1e-10);
        assert!((r.value[2] - 2.0).abs() < 1e-10);
    }
}
