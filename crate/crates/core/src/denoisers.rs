//! Separable scalar denoisers for the prior side (`x`) and the channel side
//! (`z`), plus a Monte-Carlo divergence estimator for black-box denoisers.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Result, VampError};
use crate::model::{ChannelSpec, DenoiserResult, Estimator, PriorKind, PriorSpec};
use crate::special::{inv_mills, log_normal_cdf, sigmoid};
use crate::vamp::{PREC_MAX, PREC_MIN};

/// Gaussian pseudo-measurement `center = truth + N(0, I/precision)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoMeasurement {
    center: DVector<f64>,
    precision: f64,
}

impl PseudoMeasurement {
    pub fn new(center: DVector<f64>, precision: f64) -> Result<Self> {
        if !(PREC_MIN..=PREC_MAX).contains(&precision) {
            return Err(VampError::InvalidParameter(format!(
                "precision {precision} outside [{PREC_MIN:e}, {PREC_MAX:e}]"
            )));
        }
        if let Some(i) = center.iter().position(|v| !v.is_finite()) {
            return Err(VampError::Numerical {
                index: i,
                message: "non-finite pseudo-measurement".into(),
            });
        }
        Ok(Self { center, precision })
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn precision(&self) -> f64 {
        self.precision
    }
}

/// How the denoiser divergence is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DivergenceMode {
    /// From the posterior-variance identity (or the exact derivative for MAP).
    Analytic,
    /// Randomized finite-difference estimate with `probes` ±1 probe vectors.
    MonteCarlo { probes: usize, step: f64 },
}

fn finite_or_error(index: usize, v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(VampError::Numerical {
            index,
            message: format!("{what} evaluated to {v}"),
        })
    }
}

fn bernoulli_gaussian_entry(rho: f64, sigma2: f64, r: f64, v: f64) -> (f64, f64) {
    let gain = sigma2 / (sigma2 + v);
    let active_mean = gain * r;
    let active_var = gain * v;
    if rho >= 1.0 {
        return (active_mean, active_var);
    }
    // log-odds of the active component given r
    let logit = (rho / (1.0 - rho)).ln()
        + 0.5 * (v / (sigma2 + v)).ln()
        + 0.5 * r * r * (1.0 / v - 1.0 / (sigma2 + v));
    let pi = sigmoid(logit);
    let mean = pi * active_mean;
    let var = pi * active_var + pi * (1.0 - pi) * active_mean * active_mean;
    (mean, var)
}

fn laplacian_mmse_entry(lambda: f64, r: f64, v: f64) -> (f64, f64) {
    let s = v.sqrt();
    let mu_pos = r - lambda * v;
    let mu_neg = r + lambda * v;
    let a_pos = mu_pos / s;
    let b_neg = -mu_neg / s;

    let log_w_pos = -lambda * r + log_normal_cdf(a_pos);
    let log_w_neg = lambda * r + log_normal_cdf(b_neg);
    let pi_pos = sigmoid(log_w_pos - log_w_neg);
    let pi_neg = 1.0 - pi_pos;

    let rp = inv_mills(a_pos);
    let mean_pos = mu_pos + s * rp;
    let var_pos = v * (1.0 - a_pos * rp - rp * rp);
    let rn = inv_mills(b_neg);
    let mean_neg = mu_neg - s * rn;
    let var_neg = v * (1.0 - b_neg * rn - rn * rn);

    let mean = pi_pos * mean_pos + pi_neg * mean_neg;
    let var = pi_pos * var_pos.max(0.0)
        + pi_neg * var_neg.max(0.0)
        + pi_pos * pi_neg * (mean_pos - mean_neg).powi(2);
    (mean, var)
}

fn soft_threshold(r: f64, thresh: f64) -> f64 {
    r.signum() * (r.abs() - thresh).max(0.0)
}

fn assemble(means: Vec<f64>, vars: Vec<f64>, precision: f64) -> Result<DenoiserResult> {
    for (i, (&m, &v)) in means.iter().zip(&vars).enumerate() {
        finite_or_error(i, m, "posterior mean")?;
        finite_or_error(i, v, "posterior variance")?;
    }
    let n = means.len();
    let divergence = precision * vars.iter().sum::<f64>() / n as f64;
    Ok(DenoiserResult {
        value: DVector::from_vec(means),
        divergence,
        variance: Some(DVector::from_vec(vars)),
    })
}

/// Prior-side denoiser: entrywise posterior mean (MMSE) or mode (MAP) of
/// `p_x(x) N(x; r, 1/γ)`.
pub fn denoise_prior(spec: &PriorSpec, pm: &PseudoMeasurement) -> Result<DenoiserResult> {
    let gamma = pm.precision();
    let v = 1.0 / gamma;
    let r = pm.center();
    match (spec.kind(), spec.mode()) {
        (PriorKind::BernoulliGaussian { rho, sigma2 }, Estimator::Mmse) => {
            let (means, vars) = r
                .iter()
                .map(|&ri| bernoulli_gaussian_entry(rho, sigma2, ri, v))
                .unzip();
            assemble(means, vars, gamma)
        }
        (PriorKind::Laplacian { lambda }, Estimator::Mmse) => {
            let (means, vars) = r
                .iter()
                .map(|&ri| laplacian_mmse_entry(lambda, ri, v))
                .unzip();
            assemble(means, vars, gamma)
        }
        (PriorKind::Laplacian { lambda }, Estimator::Map) => {
            let thresh = lambda / gamma;
            let value = r.map(|ri| soft_threshold(ri, thresh));
            let active = r.iter().filter(|ri| ri.abs() > thresh).count();
            Ok(DenoiserResult {
                value,
                divergence: active as f64 / r.len() as f64,
                variance: None,
            })
        }
        (PriorKind::BernoulliGaussian { .. }, Estimator::Map) => Err(VampError::InvalidParameter(
            "MAP denoising is only available for the Laplacian prior".into(),
        )),
    }
}

/// Channel-side denoiser: entrywise posterior mean and variance of `z` under
/// `N(p, 1/τ)` and the channel likelihood.
pub fn denoise_channel(
    spec: &ChannelSpec,
    pm: &PseudoMeasurement,
    y: &DVector<f64>,
) -> Result<DenoiserResult> {
    spec.validate()?;
    check_len("channel denoiser measurements", pm.center().len(), y.len())?;
    let tau = pm.precision();
    let p = pm.center();
    match *spec {
        ChannelSpec::Awgn { gamma_w } => {
            let total = tau + gamma_w;
            let means = p
                .iter()
                .zip(y.iter())
                .map(|(&pm, &ym)| (tau * pm + gamma_w * ym) / total)
                .collect();
            assemble(means, vec![1.0 / total; y.len()], tau)
        }
        ChannelSpec::Probit { gamma_w } => {
            if let Some(i) = y.iter().position(|&v| v != 1.0 && v != -1.0) {
                return Err(VampError::InvalidInput(format!(
                    "probit measurement {} at index {i} is not ±1",
                    y[i]
                )));
            }
            let prior_var = 1.0 / tau;
            let total_var = prior_var + 1.0 / gamma_w;
            let total_sd = total_var.sqrt();
            let (means, vars) = p
                .iter()
                .zip(y.iter())
                .map(|(&pm, &ym)| {
                    let zeta = ym * pm / total_sd;
                    let ratio = inv_mills(zeta);
                    let mean = pm + ym * prior_var / total_sd * ratio;
                    let shrink = (prior_var / total_var * ratio * (zeta + ratio)).min(1.0);
                    let var = prior_var * (1.0 - shrink);
                    (mean, var.max(0.0))
                })
                .unzip();
            assemble(means, vars, tau)
        }
    }
}

/// Randomized divergence estimate
/// `(1/K) Σ_k η_kᵀ (g(r + εη_k) − g(r)) / (ε N)` with Rademacher probes.
pub fn monte_carlo_divergence<G>(
    g: G,
    r: &DVector<f64>,
    probe_count: usize,
    step: f64,
    seed: u64,
) -> Result<f64>
where
    G: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    if probe_count == 0 {
        return Err(VampError::InvalidParameter(
            "probe_count must be ≥ 1".into(),
        ));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(VampError::InvalidParameter(format!(
            "step must be positive, got {step}"
        )));
    }
    let n = r.len();
    let base = g(r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..probe_count {
        let probe = DVector::from_fn(n, |_, _| if rng.random_bool(0.5) { 1.0 } else { -1.0 });
        let shifted = g(&(r + &probe * step))?;
        total += probe.dot(&(shifted - &base)) / (step * n as f64);
    }
    Ok(total / probe_count as f64)
}

/// Prior denoiser with the divergence taken from `mode`.
pub fn denoise_prior_with(
    spec: &PriorSpec,
    pm: &PseudoMeasurement,
    mode: DivergenceMode,
    seed: u64,
) -> Result<DenoiserResult> {
    let mut out = denoise_prior(spec, pm)?;
    if let DivergenceMode::MonteCarlo { probes, step } = mode {
        let gamma = pm.precision();
        out.divergence = monte_carlo_divergence(
            |r| Ok(denoise_prior(spec, &PseudoMeasurement::new(r.clone(), gamma)?)?.value),
            pm.center(),
            probes,
            step,
            seed,
        )?;
    }
    Ok(out)
}

/// Channel denoiser with the divergence taken from `mode`.
pub fn denoise_channel_with(
    spec: &ChannelSpec,
    pm: &PseudoMeasurement,
    y: &DVector<f64>,
    mode: DivergenceMode,
    seed: u64,
) -> Result<DenoiserResult> {
    let mut out = denoise_channel(spec, pm, y)?;
    if let DivergenceMode::MonteCarlo { probes, step } = mode {
        let tau = pm.precision();
        out.divergence = monte_carlo_divergence(
            |p| Ok(denoise_channel(spec, &PseudoMeasurement::new(p.clone(), tau)?, y)?.value),
            pm.center(),
            probes,
            step,
            seed,
        )?;
    }
    Ok(out)
}
