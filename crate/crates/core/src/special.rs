//! Standard-normal helpers with tail-stable ratios.

use std::f64::consts::{PI, SQRT_2};

/// Below this argument `φ/Φ` and `ln Φ` switch to the scaled-erfc route.
const TAIL_SWITCH: f64 = -6.0;
const CF_DEPTH: usize = 120;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub fn normal_logpdf(t: f64) -> f64 {
    -LN_SQRT_2PI - 0.5 * t * t
}

#[inline]
pub fn normal_pdf(t: f64) -> f64 {
    normal_logpdf(t).exp()
}

#[inline]
pub fn normal_cdf(t: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-t / SQRT_2)
}

/// Scaled complementary error function `exp(x²) erfc(x)`.
///
/// Uses the Laplace continued fraction for `x ≥ 4`, where it converges to
/// machine precision within [`CF_DEPTH`] terms, and the direct product
/// below that.
pub fn erfcx(x: f64) -> f64 {
    if x < 4.0 {
        return (x * x).exp() * statrs::function::erf::erfc(x);
    }
    let mut tail = 0.0;
    for k in (1..=CF_DEPTH).rev() {
        tail = (k as f64 * 0.5) / (x + tail);
    }
    1.0 / (PI.sqrt() * (x + tail))
}

/// Mills ratio `Φ(-u) / φ(u)` for `u ≥ 0`.
fn mills(u: f64) -> f64 {
    (PI / 2.0).sqrt() * erfcx(u / SQRT_2)
}

/// `φ(t) / Φ(t)`, finite for every finite `t`.
pub fn inv_mills(t: f64) -> f64 {
    if t < TAIL_SWITCH {
        1.0 / mills(-t)
    } else {
        normal_pdf(t) / normal_cdf(t)
    }
}

/// `ln Φ(t)`, finite for every finite `t`.
pub fn log_normal_cdf(t: f64) -> f64 {
    if t < TAIL_SWITCH {
        normal_logpdf(t) + mills(-t).ln()
    } else {
        normal_cdf(t).ln()
    }
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}
