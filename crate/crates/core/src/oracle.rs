//! Independent reference computations used by the test suites and the
//! `selftest` subcommand: adaptive quadrature for scalar posterior moments,
//! a brute-force debiasing search, and a closed-form Gaussian-model solve.
//!
//! Nothing here shares code with the production estimators; the point is to
//! check them by a different route.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::{DMatrix, DVector};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    (kronrod * half, (kronrod - gauss).abs() * half)
}

const MAX_INTERVALS: usize = 4000;

/// Globally adaptive Gauss–Kronrod over the consecutive pieces of `points`:
/// the interval with the largest error estimate is bisected until the total
/// error drops below `max(abs_tol, rel_tol · |integral|)` or the interval
/// budget runs out.
pub fn integrate_pieces<F: Fn(f64) -> f64>(
    f: F,
    points: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> f64 {
    let mut parts: Vec<(f64, f64, f64, f64)> = points
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (v, e) = gauss_kronrod_15(&f, w[0], w[1]);
            (w[0], w[1], v, e)
        })
        .collect();
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) || parts.len() >= MAX_INTERVALS {
            return total;
        }
        let (worst, _) =
            parts.iter().enumerate().fold(
                (0, -1.0),
                |acc, (i, p)| if p.3 > acc.1 { (i, p.3) } else { acc },
            );
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // interval at float resolution; accept it as is
            let (v, _) = gauss_kronrod_15(&f, lo, hi);
            parts.push((lo, hi, v, 0.0));
            continue;
        }
        for (x0, x1) in [(lo, mid), (mid, hi)] {
            let (v, e) = gauss_kronrod_15(&f, x0, x1);
            parts.push((x0, x1, v, e));
        }
    }
}

/// Adaptive 7/15-point Gauss–Kronrod integration of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64) -> f64 {
    integrate_pieces(f, &[a, b], abs_tol, 0.0)
}

/// Moments of an unnormalized log-concave scalar density.
#[derive(Debug, Clone, Copy)]
pub struct Moments {
    /// `ln ∫ exp(log_f)`.
    pub log_mass: f64,
    pub mean: f64,
    pub variance: f64,
}

fn golden_section_max<F: Fn(f64) -> f64>(f: &F, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..300 {
        if (hi - lo).abs() <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Posterior moments of `exp(log_f)` by quadrature around its mode.
///
/// `bracket` must contain the mode; `scale` is a rough width used to seed the
/// curvature estimate.
pub fn log_concave_moments<F: Fn(f64) -> f64>(
    log_f: F,
    bracket: (f64, f64),
    scale: f64,
) -> Moments {
    log_concave_moments_with_breaks(log_f, bracket, scale, &[])
}

/// As [`log_concave_moments`], additionally splitting the quadrature at
/// `breaks` (kinks or sharp steps of the density).
pub fn log_concave_moments_with_breaks<F: Fn(f64) -> f64>(
    log_f: F,
    bracket: (f64, f64),
    scale: f64,
    breaks: &[f64],
) -> Moments {
    let mode = golden_section_max(&log_f, bracket.0, bracket.1);
    let peak = log_f(mode);

    let mut h = 1e-3 * scale;
    let mut width = scale;
    for _ in 0..40 {
        let curv = (log_f(mode + h) - 2.0 * peak + log_f(mode - h)) / (h * h);
        if curv < 0.0 && curv.is_finite() {
            width = (-1.0 / curv).sqrt();
            if h <= 1e-2 * width {
                break;
            }
            h = 1e-3 * width;
        } else {
            h *= 0.5;
        }
    }
    let width = width.max(1e-6 * scale);

    let below = |x: f64| {
        let drop = log_f(x) - peak;
        drop.is_nan() || drop <= -90.0
    };
    let mut left = 12.0 * width;
    for _ in 0..200 {
        if below(mode - left) {
            break;
        }
        left *= 1.5;
    }
    let mut right = 12.0 * width;
    for _ in 0..200 {
        if below(mode + right) {
            break;
        }
        right *= 1.5;
    }
    let (a, b) = (mode - left, mode + right);
    let mut points = vec![a, mode, b];
    points.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    points.sort_by(f64::total_cmp);
    points.dedup();

    let density = |x: f64| (log_f(x) - peak).exp();
    const REL: f64 = 1e-13;
    let z = integrate_pieces(density, &points, 0.0, REL);
    let spread = left.max(right);
    let first = integrate_pieces(|x| (x - mode) * density(x), &points, REL * z * spread, REL) / z;
    let second = integrate_pieces(|x| (x - mode).powi(2) * density(x), &points, 0.0, REL) / z;
    Moments {
        log_mass: peak + z.ln(),
        mean: mode + first,
        variance: second - first * first,
    }
}

fn gaussian_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (2.0 * PI * var).ln() - 0.5 * (x - mean).powi(2) / var
}

/// `ln Φ(t)` by a route unrelated to the production code: `erfc` where it
/// does not underflow, the asymptotic series below `-20`.
pub fn log_normal_cdf_reference(t: f64) -> f64 {
    if t >= -20.0 {
        return (0.5 * statrs::function::erf::erfc(-t / SQRT_2)).ln();
    }
    let t2 = t * t;
    let mut term = 1.0;
    let mut series = 1.0;
    for k in 1..=12 {
        term *= -((2 * k - 1) as f64) / t2;
        series += term;
    }
    -0.5 * t2 - 0.5 * (2.0 * PI).ln() - (-t).ln() + series.ln()
}

/// Posterior mean and variance of `x` under a Bernoulli–Gaussian prior and
/// the pseudo-measurement `r = x + N(0, 1/gamma)`.
pub fn bernoulli_gaussian_moments(rho: f64, sigma2: f64, r: f64, gamma: f64) -> (f64, f64) {
    let v = 1.0 / gamma;
    let scale = sigma2.sqrt().min(v.sqrt());
    let reach = 20.0 * (sigma2.sqrt() + v.sqrt()) + r.abs();
    let active = log_concave_moments(
        |x| rho.ln() + gaussian_logpdf(x, 0.0, sigma2) + gaussian_logpdf(r, x, v),
        (-reach, reach),
        scale,
    );
    if rho >= 1.0 {
        return (active.mean, active.variance);
    }
    let log_inactive = (1.0 - rho).ln() + gaussian_logpdf(r, 0.0, v);
    let hi = active.log_mass.max(log_inactive);
    let wa = (active.log_mass - hi).exp();
    let wi = (log_inactive - hi).exp();
    let pi = wa / (wa + wi);
    let mean = pi * active.mean;
    let second = pi * (active.variance + active.mean * active.mean);
    (mean, second - mean * mean)
}

/// Posterior mean and variance of `z` under `N(p, 1/tau)` and the sign
/// likelihood `P(y | z) = Φ(y z √gamma_w)`.
pub fn probit_moments(p: f64, tau: f64, y: f64, gamma_w: f64) -> (f64, f64) {
    let s = 1.0 / tau.sqrt();
    let c = gamma_w.sqrt();
    let reach = p.abs() + 40.0 * s;
    // the likelihood is a step of width ~1/c around zero
    let breaks: Vec<f64> = [-8.0, -2.0, 0.0, 2.0, 8.0].iter().map(|k| k / c).collect();
    let m = log_concave_moments_with_breaks(
        |z| gaussian_logpdf(z, p, 1.0 / tau) + log_normal_cdf_reference(y * z * c),
        (-reach, reach),
        s,
        &breaks,
    );
    (m.mean, m.variance)
}

/// Posterior mean and variance under a Laplacian prior with rate `lambda`.
pub fn laplacian_moments(lambda: f64, r: f64, gamma: f64) -> (f64, f64) {
    let v = 1.0 / gamma;
    let reach = r.abs() + 40.0 * v.sqrt() + 40.0 / lambda;
    let m = log_concave_moments_with_breaks(
        |x: f64| -lambda * x.abs() + gaussian_logpdf(r, x, v),
        (-reach, reach),
        v.sqrt().min(1.0 / lambda),
        &[0.0],
    );
    (m.mean, m.variance)
}

/// `min_c ‖c x̂ − x‖² / ‖x‖²` by exhaustive search over a uniform grid.
pub fn dnmse_grid_search(
    xhat: &DVector<f64>,
    x: &DVector<f64>,
    c_range: (f64, f64),
    points: usize,
) -> f64 {
    let xx = x.norm_squared();
    let hh = xhat.norm_squared();
    let hx = xhat.dot(x);
    let step = (c_range.1 - c_range.0) / (points - 1) as f64;
    (0..points)
        .map(|i| {
            let c = c_range.0 + i as f64 * step;
            (c * c * hh - 2.0 * c * hx + xx) / xx
        })
        .fold(f64::INFINITY, f64::min)
}

/// Closed-form posterior mean for the Gaussian linear model
/// `x ~ N(0, I/gamma_x)`, `y = A x + N(0, I/gamma_w)`.
pub fn gaussian_model_mmse(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    gamma_w: f64,
    gamma_x: f64,
) -> Option<DVector<f64>> {
    let n = a.ncols();
    let system = a.tr_mul(a) * gamma_w + DMatrix::identity(n, n) * gamma_x;
    system.lu().solve(&(a.tr_mul(y) * gamma_w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_recovers_gaussian_moments() {
        let m = log_concave_moments(|x| gaussian_logpdf(x, 1.3, 0.25), (-10.0, 10.0), 1.0);
        assert!((m.mean - 1.3).abs() < 1e-12);
        assert!((m.variance - 0.25).abs() < 1e-12);
        assert!(m.log_mass.abs() < 1e-12);
    }

    #[test]
    fn integrate_polynomial_exactly() {
        let v = integrate(|x| x * x * x - 2.0 * x + 1.0, -1.0, 3.0, 1e-14);
        // ∫_{-1}^{3} x³ - 2x + 1 dx = 20 - 8 + 4
        assert!((v - 16.0).abs() < 1e-12);
    }

    #[test]
    fn reference_log_cdf_is_continuous_at_series_switch() {
        let a = log_normal_cdf_reference(-20.0 + 1e-9);
        let b = log_normal_cdf_reference(-20.0 - 1e-9);
        assert!((a - b).abs() < 1e-7);
    }

    #[test]
    fn laplacian_moments_symmetric() {
        let (m, v) = laplacian_moments(1.0, 0.0, 2.0);
        assert!(m.abs() < 1e-12);
        assert!(v > 0.0);
        let (mp, _) = laplacian_moments(1.0, 0.7, 2.0);
        let (mn, _) = laplacian_moments(1.0, -0.7, 2.0);
        assert!((mp + mn).abs() < 1e-10);
    }
}
