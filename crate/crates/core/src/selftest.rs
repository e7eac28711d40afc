//! Quick oracle checks run by `vamp-bench selftest`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::denoisers::{denoise_channel, denoise_prior, PseudoMeasurement};
use crate::error::Result;
use crate::lmmse::{
    glm_lmmse, glm_lmmse_dense_oracle, glm_lmmse_inversion_lemma_oracle, GlmLmmseContext,
};
use crate::metrics::dnmse;
use crate::model::{ChannelSpec, PriorSpec, SvdOperator};
use crate::oracle;
use crate::vamp::{run_vamp_slm, VampConfig};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, worst: f64, tol: f64) -> Check {
    Check {
        name,
        passed: worst <= tol,
        detail: format!("worst {worst:.3e} (tol {tol:.0e})"),
    }
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn gaussian_vector(len: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(len, |_, _| StandardNormal.sample(rng))
}

fn lmmse_equivalence() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for (m, n) in [(8, 12), (12, 8), (10, 10)] {
        for _ in 0..10 {
            let a = gaussian_matrix(m, n, &mut rng);
            let op = SvdOperator::from_dense(&a)?;
            let r2 = gaussian_vector(n, &mut rng);
            let p2 = gaussian_vector(m, &mut rng);
            let out = glm_lmmse(&GlmLmmseContext::new(&op), &r2, &p2, 0.7, 1.9)?;
            let (xd, _) = glm_lmmse_dense_oracle(&a, &r2, &p2, 0.7, 1.9)?;
            let xl = glm_lmmse_inversion_lemma_oracle(&a, &r2, &p2, 0.7, 1.9)?;
            worst = worst
                .max((&out.xhat - &xd).norm() / xd.norm())
                .max((&out.xhat - &xl).norm() / xl.norm());
        }
    }
    Ok(check("glm lmmse vs dense forms", worst, 1e-10))
}

fn denoiser_quadrature() -> Result<Check> {
    let prior = PriorSpec::bernoulli_gaussian(0.1, 1.0)?;
    let mut worst = 0.0f64;
    for &r in &[-3.0, -0.4, 0.0, 1.5, 5.0] {
        for &gamma in &[0.5, 4.0, 50.0] {
            let out = denoise_prior(
                &prior,
                &PseudoMeasurement::new(DVector::from_element(1, r), gamma)?,
            )?;
            let (m, v) = oracle::bernoulli_gaussian_moments(0.1, 1.0, r, gamma);
            let var = out.variance.as_ref().map_or(f64::NAN, |x| x[0]);
            worst = worst.max((out.value[0] - m).abs()).max((var - v).abs());
        }
    }
    let channel = ChannelSpec::probit(4.0)?;
    for &p in &[-30.0, -2.0, 0.0, 0.7, 25.0] {
        for &tau in &[0.5, 3.0] {
            for &y in &[-1.0, 1.0] {
                let out = denoise_channel(
                    &channel,
                    &PseudoMeasurement::new(DVector::from_element(1, p), tau)?,
                    &DVector::from_element(1, y),
                )?;
                let (m, v) = oracle::probit_moments(p, tau, y, 4.0);
                let var = out.variance.as_ref().map_or(f64::NAN, |x| x[0]);
                worst = worst.max((out.value[0] - m).abs()).max((var - v).abs());
            }
        }
    }
    Ok(check("denoisers vs quadrature", worst, 1e-8))
}

fn dnmse_grid() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x = gaussian_vector(16, &mut rng);
    let xhat = &x * 0.4 + gaussian_vector(16, &mut rng) * 0.3;
    let diff =
        (dnmse(&xhat, &x)? - oracle::dnmse_grid_search(&xhat, &x, (-10.0, 10.0), 1_000_001)).abs();
    Ok(check("dnmse vs grid search", diff, 1e-6))
}

fn gaussian_model_exactness() -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (m, n) = (30, 20);
    let a = gaussian_matrix(m, n, &mut rng) / (m as f64).sqrt();
    let op = SvdOperator::from_dense(&a)?;
    let y = gaussian_vector(m, &mut rng);
    let prior = PriorSpec::bernoulli_gaussian(1.0, 1.0)?;
    let cfg = VampConfig {
        max_iters: 200,
        stop_tol: Some(1e-13),
        keep_trace: false,
        ..VampConfig::default()
    };
    let run = run_vamp_slm(&op, &y, &prior, 10.0, &cfg, |_| {})?;
    let exact = oracle::gaussian_model_mmse(&a, &y, 10.0, 1.0).unwrap_or_else(|| DVector::zeros(n));
    let rel = (&run.xhat - &exact).norm() / exact.norm();
    Ok(check("gaussian-model VAMP vs closed form", rel, 1e-6))
}

type Suite = (&'static str, fn() -> Result<Check>);

/// Run every check; a check that errors is reported as failed.
pub fn run_selftest() -> Vec<Check> {
    let suites: [Suite; 4] = [
        ("glm lmmse vs dense forms", lmmse_equivalence),
        ("denoisers vs quadrature", denoiser_quadrature),
        ("dnmse vs grid search", dnmse_grid),
        (
            "gaussian-model VAMP vs closed form",
            gaussian_model_exactness,
        ),
    ];
    suites
        .iter()
        .map(|(name, f)| {
            f().unwrap_or_else(|e| Check {
                name,
                passed: false,
                detail: format!("error: {e}"),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    #[test]
    fn selftest_passes() {
        for c in super::run_selftest() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
