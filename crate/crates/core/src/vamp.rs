//! VAMP iterations for the standard linear model and for the generalized
//! linear model.
//!
//! Both engines alternate a separable denoising stage with an LMMSE stage and
//! pass only extrinsic information between them. Divergences are clamped to
//! `[alpha_min, 1 - alpha_min]` and precisions to `[prec_min, prec_max]`
//! before and after every extrinsic update.

use nalgebra::DVector;

use crate::denoisers::{
    denoise_channel_with, denoise_prior_with, DivergenceMode, PseudoMeasurement,
};
use crate::error::{check_len, Result, VampError};
use crate::lmmse::{glm_lmmse, slm_lmmse, GlmLmmseContext, SlmLmmseContext};
use crate::model::{ChannelSpec, PriorSpec, SvdOperator};

pub const PREC_MIN: f64 = 1e-11;
pub const PREC_MAX: f64 = 1e11;
pub const ALPHA_MIN: f64 = 1e-10;
pub const DEFAULT_INIT_PRECISION: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 100;
pub const DEFAULT_STOP_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct VampConfig {
    pub max_iters: usize,
    pub prec_min: f64,
    pub prec_max: f64,
    pub alpha_min: f64,
    /// Weight on the new candidate in `new = δ·candidate + (1−δ)·old`.
    pub damping: f64,
    /// Early exit when `‖x̂₁ₖ − x̂₁,ₖ₋₁‖ / ‖x̂₁ₖ‖` drops below this.
    pub stop_tol: Option<f64>,
    /// `None` means the zero vector.
    pub init_r1: Option<DVector<f64>>,
    pub init_p1: Option<DVector<f64>>,
    pub init_gamma1: f64,
    pub init_tau1: f64,
    pub divergence: DivergenceMode,
    /// Seed for Monte-Carlo divergence probes.
    pub seed: u64,
    /// Keep every per-iteration state in the returned trace.
    pub keep_trace: bool,
}

impl Default for VampConfig {
    fn default() -> Self {
        Self {
            max_iters: DEFAULT_MAX_ITERS,
            prec_min: PREC_MIN,
            prec_max: PREC_MAX,
            alpha_min: ALPHA_MIN,
            damping: 1.0,
            stop_tol: Some(DEFAULT_STOP_TOL),
            init_r1: None,
            init_p1: None,
            init_gamma1: DEFAULT_INIT_PRECISION,
            init_tau1: DEFAULT_INIT_PRECISION,
            divergence: DivergenceMode::Analytic,
            seed: 0,
            keep_trace: true,
        }
    }
}

impl VampConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(VampError::InvalidParameter(msg));
        if self.max_iters == 0 {
            return bad("max_iters must be ≥ 1".into());
        }
        if !(PREC_MIN <= self.prec_min
            && self.prec_min < self.prec_max
            && self.prec_max <= PREC_MAX)
        {
            return bad(format!(
                "precision clamp [{}, {}] must be increasing and within [{PREC_MIN:e}, {PREC_MAX:e}]",
                self.prec_min, self.prec_max
            ));
        }
        if !(self.alpha_min > 0.0 && self.alpha_min < 0.5) {
            return bad(format!(
                "alpha_min must lie in (0, 0.5), got {}",
                self.alpha_min
            ));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        if let Some(tol) = self.stop_tol {
            if tol.is_nan() || tol <= 0.0 {
                return bad(format!("stop_tol must be positive, got {tol}"));
            }
        }
        for (name, p) in [
            ("init_gamma1", self.init_gamma1),
            ("init_tau1", self.init_tau1),
        ] {
            if !(self.prec_min..=self.prec_max).contains(&p) {
                return bad(format!("{name} = {p} outside the precision clamp"));
            }
        }
        if let DivergenceMode::MonteCarlo { probes, step } = self.divergence {
            if probes == 0 || step.is_nan() || step <= 0.0 {
                return bad("Monte-Carlo divergence needs probes ≥ 1 and step > 0".into());
            }
        }
        Ok(())
    }

    pub fn clamps(&self) -> Clamps {
        Clamps {
            prec_min: self.prec_min,
            prec_max: self.prec_max,
            alpha_min: self.alpha_min,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Clamps {
    pub prec_min: f64,
    pub prec_max: f64,
    pub alpha_min: f64,
}

impl Default for Clamps {
    fn default() -> Self {
        Self {
            prec_min: PREC_MIN,
            prec_max: PREC_MAX,
            alpha_min: ALPHA_MIN,
        }
    }
}

impl Clamps {
    pub fn divergence(&self, alpha: f64) -> f64 {
        if alpha.is_nan() {
            return 0.5;
        }
        alpha.clamp(self.alpha_min, 1.0 - self.alpha_min)
    }

    pub fn precision(&self, gamma: f64) -> f64 {
        if gamma.is_nan() {
            return self.prec_min;
        }
        gamma.clamp(self.prec_min, self.prec_max)
    }
}

/// Extrinsic (Onsager-corrected) message: `r' = (x̂ − α r)/(1 − α)`,
/// `γ' = γ (1 − α)/α`. `alpha` must already be clamped.
pub fn extrinsic_update(
    xhat: &DVector<f64>,
    r: &DVector<f64>,
    alpha: f64,
    gamma: f64,
    clamps: &Clamps,
) -> (DVector<f64>, f64) {
    let r_new = (xhat - r * alpha) / (1.0 - alpha);
    let gamma_new = clamps.precision(gamma * (1.0 - alpha) / alpha);
    (r_new, gamma_new)
}

/// Convex-combination damping; the very first update is never damped since
/// the initialization carries no information.
fn damp(candidate: DVector<f64>, previous: Option<&DVector<f64>>, damping: f64) -> DVector<f64> {
    match previous {
        Some(old) if damping < 1.0 => candidate * damping + old * (1.0 - damping),
        _ => candidate,
    }
}

fn relative_change(new: &DVector<f64>, old: &DVector<f64>) -> f64 {
    let diff = (new - old).norm();
    let scale = new.norm();
    if diff == 0.0 {
        0.0
    } else if scale == 0.0 {
        f64::INFINITY
    } else {
        diff / scale
    }
}

fn ensure_finite(v: &DVector<f64>, what: &str) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(VampError::Numerical {
            index,
            message: format!("non-finite {what}"),
        }),
        None => Ok(()),
    }
}

fn initial_vector(
    init: &Option<DVector<f64>>,
    len: usize,
    what: &'static str,
) -> Result<DVector<f64>> {
    match init {
        Some(v) => {
            check_len(what, len, v.len())?;
            Ok(v.clone())
        }
        None => Ok(DVector::zeros(len)),
    }
}

/// Iteration state of the SLM engine at iteration `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct VampSlmState {
    pub k: usize,
    pub r1: DVector<f64>,
    pub gamma1: f64,
    pub xhat1: DVector<f64>,
    pub alpha1: f64,
    pub r2: DVector<f64>,
    pub gamma2: f64,
    pub xhat2: DVector<f64>,
    pub alpha2: f64,
}

/// Iteration state of the GLM engine at iteration `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct VampGlmState {
    pub k: usize,
    pub r1: DVector<f64>,
    pub r2: DVector<f64>,
    pub p1: DVector<f64>,
    pub p2: DVector<f64>,
    pub gamma1: f64,
    pub gamma2: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub xhat1: DVector<f64>,
    pub xhat2: DVector<f64>,
    pub zhat1: DVector<f64>,
    pub zhat2: DVector<f64>,
    pub alpha1: f64,
    pub alpha2: f64,
    pub beta1: f64,
    pub beta2: f64,
}

#[derive(Debug, Clone)]
pub struct VampRun<S> {
    /// Denoiser output `x̂₁` of the last executed iteration.
    pub xhat: DVector<f64>,
    pub trace: Vec<S>,
    pub iterations: usize,
    pub converged: bool,
}

fn probe_seed(base: u64, k: usize, side: u64) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((k as u64) << 2)
        .wrapping_add(side)
}

/// VAMP for `y = A x + N(0, I/γ_w)`.
///
/// `hook` sees every iteration's state after the LMMSE stage.
pub fn run_vamp_slm<F>(
    op: &SvdOperator,
    y: &DVector<f64>,
    prior: &PriorSpec,
    gamma_w: f64,
    config: &VampConfig,
    mut hook: F,
) -> Result<VampRun<VampSlmState>>
where
    F: FnMut(&VampSlmState),
{
    config.validate()?;
    let clamps = config.clamps();
    let ctx = SlmLmmseContext::new(op, gamma_w, y)?;
    let mut r1 = initial_vector(&config.init_r1, op.cols(), "initial r1")?;
    let mut gamma1 = config.init_gamma1;
    let mut prev_r2: Option<DVector<f64>> = None;
    let mut prev_xhat: Option<DVector<f64>> = None;
    let mut trace = Vec::new();

    for k in 0..config.max_iters {
        let step = || -> Result<VampSlmState> {
            let pm = PseudoMeasurement::new(r1.clone(), gamma1)?;
            let den =
                denoise_prior_with(prior, &pm, config.divergence, probe_seed(config.seed, k, 0))?;
            let alpha1 = clamps.divergence(den.divergence);
            let (r2_cand, gamma2) = extrinsic_update(&den.value, &r1, alpha1, gamma1, &clamps);
            let r2 = damp(r2_cand, prev_r2.as_ref(), config.damping);
            ensure_finite(&r2, "r2")?;

            let (xhat2, alpha2_raw) = slm_lmmse(&ctx, &r2, gamma2)?;
            ensure_finite(&xhat2, "x̂2")?;
            Ok(VampSlmState {
                k,
                r1: r1.clone(),
                gamma1,
                xhat1: den.value,
                alpha1,
                r2,
                gamma2,
                xhat2,
                alpha2: clamps.divergence(alpha2_raw),
            })
        };
        let state = step().map_err(|e| e.at_iteration(k))?;
        hook(&state);

        let (r1_cand, gamma1_next) =
            extrinsic_update(&state.xhat2, &state.r2, state.alpha2, state.gamma2, &clamps);
        r1 = damp(r1_cand, (k > 0).then_some(&state.r1), config.damping);
        gamma1 = gamma1_next;
        prev_r2 = Some(state.r2.clone());

        let converged = match (config.stop_tol, &prev_xhat) {
            (Some(tol), Some(prev)) => relative_change(&state.xhat1, prev) < tol,
            _ => false,
        };
        prev_xhat = Some(state.xhat1.clone());
        let xhat = state.xhat1.clone();
        if config.keep_trace {
            trace.push(state);
        }
        if converged || k + 1 == config.max_iters {
            return Ok(VampRun {
                xhat,
                trace,
                iterations: k + 1,
                converged,
            });
        }
    }
    unreachable!("max_iters ≥ 1 is validated")
}

/// VAMP for the generalized linear model `y ~ p(y | z)`, `z = A x`.
///
/// Per iteration: denoise `x`, denoise `z`, then one joint LMMSE solve that
/// yields both `x̂₂` and `ẑ₂`. `hook` sees every iteration's state.
pub fn run_vamp_glm<F>(
    op: &SvdOperator,
    y: &DVector<f64>,
    prior: &PriorSpec,
    channel: &ChannelSpec,
    config: &VampConfig,
    mut hook: F,
) -> Result<VampRun<VampGlmState>>
where
    F: FnMut(&VampGlmState),
{
    config.validate()?;
    channel.validate()?;
    check_len("measurement vector", op.rows(), y.len())?;
    let clamps = config.clamps();
    let ctx = GlmLmmseContext::new(op);
    let mut r1 = initial_vector(&config.init_r1, op.cols(), "initial r1")?;
    let mut p1 = initial_vector(&config.init_p1, op.rows(), "initial p1")?;
    let mut gamma1 = config.init_gamma1;
    let mut tau1 = config.init_tau1;
    let mut prev: Option<(DVector<f64>, DVector<f64>)> = None;
    let mut prev_xhat: Option<DVector<f64>> = None;
    let mut trace = Vec::new();

    for k in 0..config.max_iters {
        let step = || -> Result<VampGlmState> {
            let den_x = denoise_prior_with(
                prior,
                &PseudoMeasurement::new(r1.clone(), gamma1)?,
                config.divergence,
                probe_seed(config.seed, k, 0),
            )?;
            let alpha1 = clamps.divergence(den_x.divergence);
            let (r2_cand, gamma2) = extrinsic_update(&den_x.value, &r1, alpha1, gamma1, &clamps);

            let den_z = denoise_channel_with(
                channel,
                &PseudoMeasurement::new(p1.clone(), tau1)?,
                y,
                config.divergence,
                probe_seed(config.seed, k, 1),
            )?;
            let beta1 = clamps.divergence(den_z.divergence);
            let (p2_cand, tau2) = extrinsic_update(&den_z.value, &p1, beta1, tau1, &clamps);

            let r2 = damp(r2_cand, prev.as_ref().map(|p| &p.0), config.damping);
            let p2 = damp(p2_cand, prev.as_ref().map(|p| &p.1), config.damping);
            ensure_finite(&r2, "r2")?;
            ensure_finite(&p2, "p2")?;

            let lm = glm_lmmse(&ctx, &r2, &p2, gamma2, tau2)?;
            ensure_finite(&lm.xhat, "x̂2")?;
            ensure_finite(&lm.zhat, "ẑ2")?;
            Ok(VampGlmState {
                k,
                r1: r1.clone(),
                r2,
                p1: p1.clone(),
                p2,
                gamma1,
                gamma2,
                tau1,
                tau2,
                xhat1: den_x.value,
                xhat2: lm.xhat,
                zhat1: den_z.value,
                zhat2: lm.zhat,
                alpha1,
                alpha2: clamps.divergence(lm.alpha),
                beta1,
                beta2: clamps.divergence(lm.beta),
            })
        };
        let state = step().map_err(|e| e.at_iteration(k))?;
        hook(&state);

        let (r1_cand, gamma1_next) =
            extrinsic_update(&state.xhat2, &state.r2, state.alpha2, state.gamma2, &clamps);
        let (p1_cand, tau1_next) =
            extrinsic_update(&state.zhat2, &state.p2, state.beta2, state.tau2, &clamps);
        r1 = damp(r1_cand, (k > 0).then_some(&state.r1), config.damping);
        p1 = damp(p1_cand, (k > 0).then_some(&state.p1), config.damping);
        gamma1 = gamma1_next;
        tau1 = tau1_next;
        prev = Some((state.r2.clone(), state.p2.clone()));

        let converged = match (config.stop_tol, &prev_xhat) {
            (Some(tol), Some(prev)) => relative_change(&state.xhat1, prev) < tol,
            _ => false,
        };
        prev_xhat = Some(state.xhat1.clone());
        let xhat = state.xhat1.clone();
        if config.keep_trace {
            trace.push(state);
        }
        if converged || k + 1 == config.max_iters {
            return Ok(VampRun {
                xhat,
                trace,
                iterations: k + 1,
                converged,
            });
        }
    }
    unreachable!("max_iters ≥ 1 is validated")
}
