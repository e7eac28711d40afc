//! Quadratic (LMMSE) stages in SVD form, plus dense reference solvers.
//!
//! The operator is stored as an economy SVD, so the right singular vectors
//! only span an `r`-dimensional subspace when `M < N`. On its orthogonal
//! complement the singular values are zero, the resolvent entry is `1/γ₂`,
//! and the estimate passes `r₂` through unchanged. Writing the update as
//! `x̂ = r₂ + V (D (…) − Vᵀ r₂)` handles that complement without forming
//! the full `N × N` factor.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Result, VampError};
use crate::model::SvdOperator;

fn check_precision(name: &str, value: f64) -> Result<()> {
    if !(value > 0.0 && value.is_finite()) {
        return Err(VampError::InvalidParameter(format!(
            "{name} must be positive and finite, got {value}"
        )));
    }
    Ok(())
}

/// LMMSE stage for the standard linear model `y = A x + N(0, I/γ_w)`.
#[derive(Debug, Clone)]
pub struct SlmLmmseContext<'a> {
    op: &'a SvdOperator,
    gamma_w: f64,
    /// `γ_w Sᵀ Uᵀ y`, length `r`.
    ytilde: DVector<f64>,
}

impl<'a> SlmLmmseContext<'a> {
    pub fn new(op: &'a SvdOperator, gamma_w: f64, y: &DVector<f64>) -> Result<Self> {
        check_precision("noise precision", gamma_w)?;
        check_len("measurement vector", op.rows(), y.len())?;
        let ytilde = op.u().tr_mul(y).component_mul(op.singular_values()) * gamma_w;
        Ok(Self {
            op,
            gamma_w,
            ytilde,
        })
    }

    pub fn op(&self) -> &SvdOperator {
        self.op
    }

    pub fn gamma_w(&self) -> f64 {
        self.gamma_w
    }

    pub fn ytilde(&self) -> &DVector<f64> {
        &self.ytilde
    }
}

/// `x̂₂ = (γ_w AᵀA + γ₂ I)⁻¹ (γ_w Aᵀ y + γ₂ r₂)` and its divergence `α₂`.
pub fn slm_lmmse(
    ctx: &SlmLmmseContext<'_>,
    r2: &DVector<f64>,
    gamma2: f64,
) -> Result<(DVector<f64>, f64)> {
    check_precision("gamma2", gamma2)?;
    let op = ctx.op;
    check_len("slm lmmse input", op.cols(), r2.len())?;
    let n = op.cols();
    let s = op.singular_values();
    let resolvent = s.map(|sn| 1.0 / (ctx.gamma_w * sn * sn + gamma2));

    let vtr = op.v().tr_mul(r2);
    let coeff = (&ctx.ytilde + &vtr * gamma2).component_mul(&resolvent);
    let xhat = r2 + op.v() * (coeff - vtr);

    let null_dim = (n - op.rank()) as f64;
    let alpha = (gamma2 * resolvent.sum() + null_dim) / n as f64;
    Ok((xhat, alpha))
}

/// Joint LMMSE stage of the GLM iteration, noiseless in `z = A x`.
#[derive(Debug, Clone, Copy)]
pub struct GlmLmmseContext<'a> {
    op: &'a SvdOperator,
}

impl<'a> GlmLmmseContext<'a> {
    pub fn new(op: &'a SvdOperator) -> Self {
        Self { op }
    }

    pub fn op(&self) -> &SvdOperator {
        self.op
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmLmmseOutput {
    pub xhat: DVector<f64>,
    pub zhat: DVector<f64>,
    /// `(1/N) tr ∂x̂/∂r₂`.
    pub alpha: f64,
    /// `(1/M) tr ∂ẑ/∂p₂`.
    pub beta: f64,
}

/// MAP/LMMSE estimate of `(x, z)` under `x ~ N(r₂, I/γ₂)`, `z ~ N(p₂, I/τ₂)`
/// and the hard constraint `z = A x`.
///
/// `α₂` and `β₂` are computed from their own trace sums; together they
/// satisfy `N α₂ + M β₂ = N`.
pub fn glm_lmmse(
    ctx: &GlmLmmseContext<'_>,
    r2: &DVector<f64>,
    p2: &DVector<f64>,
    gamma2: f64,
    tau2: f64,
) -> Result<GlmLmmseOutput> {
    check_precision("gamma2", gamma2)?;
    check_precision("tau2", tau2)?;
    let op = ctx.op;
    check_len("glm lmmse x input", op.cols(), r2.len())?;
    check_len("glm lmmse z input", op.rows(), p2.len())?;
    let (m, n) = (op.rows(), op.cols());
    let s = op.singular_values();
    let resolvent = s.map(|sn| 1.0 / (tau2 * sn * sn + gamma2));

    let vtr = op.v().tr_mul(r2);
    let utp = op.u().tr_mul(p2);
    let coeff = (utp.component_mul(s) * tau2 + &vtr * gamma2).component_mul(&resolvent);
    let xhat = r2 + op.v() * (coeff - vtr);
    let zhat = op.apply(&xhat)?;

    let null_dim = (n - op.rank()) as f64;
    let alpha = (gamma2 * resolvent.sum() + null_dim) / n as f64;
    let beta = s
        .iter()
        .zip(resolvent.iter())
        .map(|(sn, d)| tau2 * sn * sn * d)
        .sum::<f64>()
        / m as f64;
    debug_assert!(
        (n as f64 * alpha + m as f64 * beta - n as f64).abs() <= 1e-9 * n as f64,
        "trace identity violated"
    );
    Ok(GlmLmmseOutput {
        xhat,
        zhat,
        alpha,
        beta,
    })
}

/// The alternative SVD expression
/// `x̂ = r₂ + V Sᵀ ((γ₂/τ₂) I + S Sᵀ)⁻¹ (Uᵀ p₂ − S Vᵀ r₂)`.
pub fn glm_lmmse_x_alternative(
    op: &SvdOperator,
    r2: &DVector<f64>,
    p2: &DVector<f64>,
    gamma2: f64,
    tau2: f64,
) -> Result<DVector<f64>> {
    check_precision("gamma2", gamma2)?;
    check_precision("tau2", tau2)?;
    check_len("glm lmmse x input", op.cols(), r2.len())?;
    check_len("glm lmmse z input", op.rows(), p2.len())?;
    let s = op.singular_values();
    let ratio = gamma2 / tau2;
    let residual = op.u().tr_mul(p2) - op.v().tr_mul(r2).component_mul(s);
    let gain = s.map(|sn| sn / (ratio + sn * sn));
    Ok(r2 + op.v() * residual.component_mul(&gain))
}

/// Dense solve of the stationarity conditions in the noiseless-constraint
/// limit: `(τ₂AᵀA + γ₂I) x̂ = γ₂ r₂ + τ₂ Aᵀ p₂`, `ẑ = A x̂`. Test scale only.
pub fn glm_lmmse_dense_oracle(
    a: &DMatrix<f64>,
    r2: &DVector<f64>,
    p2: &DVector<f64>,
    gamma2: f64,
    tau2: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_len("dense oracle x input", a.ncols(), r2.len())?;
    check_len("dense oracle z input", a.nrows(), p2.len())?;
    let n = a.ncols();
    let system = a.tr_mul(a) * tau2 + DMatrix::identity(n, n) * gamma2;
    let rhs = r2 * gamma2 + a.tr_mul(p2) * tau2;
    let xhat = system
        .lu()
        .solve(&rhs)
        .ok_or_else(|| VampError::Numerical {
            index: 0,
            message: "singular LMMSE system".into(),
        })?;
    let zhat = a * &xhat;
    Ok((xhat, zhat))
}

/// Matrix-inversion-lemma form
/// `x̂ = r₂ + Aᵀ ((γ₂/τ₂) I + A Aᵀ)⁻¹ (p₂ − A r₂)`. Test scale only.
pub fn glm_lmmse_inversion_lemma_oracle(
    a: &DMatrix<f64>,
    r2: &DVector<f64>,
    p2: &DVector<f64>,
    gamma2: f64,
    tau2: f64,
) -> Result<DVector<f64>> {
    check_precision("tau2", tau2)?;
    check_len("dense oracle x input", a.ncols(), r2.len())?;
    check_len("dense oracle z input", a.nrows(), p2.len())?;
    let m = a.nrows();
    let system = a * a.transpose() + DMatrix::identity(m, m) * (gamma2 / tau2);
    let residual = p2 - a * r2;
    let w = system
        .lu()
        .solve(&residual)
        .ok_or_else(|| VampError::Numerical {
            index: 0,
            message: "singular inversion-lemma system".into(),
        })?;
    Ok(r2 + a.tr_mul(&w))
}

/// `γ₂ tr[(τ₂AᵀA + γ₂I)⁻¹] / N` by explicit dense inversion.
pub fn glm_alpha_dense_trace(a: &DMatrix<f64>, gamma2: f64, tau2: f64) -> Result<f64> {
    let n = a.ncols();
    let system = a.tr_mul(a) * tau2 + DMatrix::identity(n, n) * gamma2;
    let inv = system.try_inverse().ok_or_else(|| VampError::Numerical {
        index: 0,
        message: "singular LMMSE system".into(),
    })?;
    Ok(gamma2 * inv.trace() / n as f64)
}

/// `τ₂ tr[A (τ₂AᵀA + γ₂I)⁻¹ Aᵀ] / M` by explicit dense inversion.
pub fn glm_beta_dense_trace(a: &DMatrix<f64>, gamma2: f64, tau2: f64) -> Result<f64> {
    let n = a.ncols();
    let system = a.tr_mul(a) * tau2 + DMatrix::identity(n, n) * gamma2;
    let inv = system.try_inverse().ok_or_else(|| VampError::Numerical {
        index: 0,
        message: "singular LMMSE system".into(),
    })?;
    Ok(tau2 * (a * inv * a.transpose()).trace() / a.nrows() as f64)
}

/// Dense form of the SLM stage: estimate and `γ₂ tr[(γ_w AᵀA + γ₂I)⁻¹] / N`.
pub fn slm_lmmse_dense_oracle(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    gamma_w: f64,
    r2: &DVector<f64>,
    gamma2: f64,
) -> Result<(DVector<f64>, f64)> {
    let n = a.ncols();
    let system = a.tr_mul(a) * gamma_w + DMatrix::identity(n, n) * gamma2;
    let inv = system.try_inverse().ok_or_else(|| VampError::Numerical {
        index: 0,
        message: "singular LMMSE system".into(),
    })?;
    let xhat = &inv * (a.tr_mul(y) * gamma_w + r2 * gamma2);
    Ok((xhat, gamma2 * inv.trace() / n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
    }

    fn gaussian_vector(len: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(len, |_, _| StandardNormal.sample(rng))
    }

    fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        (a - b).norm() / b.norm().max(1e-300)
    }

    #[test]
    fn slm_identity_averages() {
        let op = SvdOperator::from_dense(&DMatrix::identity(3, 3)).unwrap();
        let y = DVector::from_vec(vec![1.0, -2.0, 4.0]);
        let r2 = DVector::from_vec(vec![3.0, 0.0, 0.0]);
        let ctx = SlmLmmseContext::new(&op, 1.0, &y).unwrap();
        let (x, alpha) = slm_lmmse(&ctx, &r2, 1.0).unwrap();
        assert!(rel(&x, &((&y + &r2) * 0.5)) < 1e-14);
        assert!((alpha - 0.5).abs() < 1e-15);
    }

    #[test]
    fn slm_zero_operator_returns_prior() {
        let op = SvdOperator::from_dense(&DMatrix::zeros(4, 6)).unwrap();
        let y = DVector::from_element(4, 1.0);
        let r2 = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let ctx = SlmLmmseContext::new(&op, 2.0, &y).unwrap();
        let (x, alpha) = slm_lmmse(&ctx, &r2, 0.7).unwrap();
        assert!(rel(&x, &r2) < 1e-14);
        assert!((alpha - 1.0).abs() < 1e-15);
    }

    #[test]
    fn slm_matches_dense_on_random_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for (m, n) in [(8, 12), (12, 8), (10, 10)] {
            let a = gaussian_matrix(m, n, &mut rng);
            let op = SvdOperator::from_dense(&a).unwrap();
            let y = gaussian_vector(m, &mut rng);
            let r2 = gaussian_vector(n, &mut rng);
            let ctx = SlmLmmseContext::new(&op, 3.0, &y).unwrap();
            let (x, alpha) = slm_lmmse(&ctx, &r2, 0.4).unwrap();
            let (xd, ad) = slm_lmmse_dense_oracle(&a, &y, 3.0, &r2, 0.4).unwrap();
            assert!(rel(&x, &xd) < 1e-10, "{m}x{n}: {}", rel(&x, &xd));
            assert!((alpha - ad).abs() < 1e-12);
            let recomputed = op.u().tr_mul(&y).component_mul(op.singular_values()) * 3.0;
            assert!(rel(ctx.ytilde(), &recomputed) <= 1e-12);
        }
    }

    #[test]
    fn glm_identity_symmetric_case() {
        let op = SvdOperator::from_dense(&DMatrix::identity(2, 2)).unwrap();
        let ctx = GlmLmmseContext::new(&op);
        let r2 = DVector::from_vec(vec![1.0, 1.0]);
        let p2 = DVector::from_vec(vec![3.0, 3.0]);
        let out = glm_lmmse(&ctx, &r2, &p2, 1.0, 1.0).unwrap();
        assert!(rel(&out.xhat, &DVector::from_vec(vec![2.0, 2.0])) < 1e-14);
        assert_eq!(out.zhat, op.apply(&out.xhat).unwrap());
        assert!((out.alpha - 0.5).abs() < 1e-15);
        assert!((out.beta - 0.5).abs() < 1e-15);
    }

    #[test]
    fn glm_diag_divergences() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 1.0]));
        let op = SvdOperator::from_dense(&a).unwrap();
        let out = glm_lmmse(
            &GlmLmmseContext::new(&op),
            &DVector::zeros(2),
            &DVector::zeros(2),
            1.0,
            1.0,
        )
        .unwrap();
        let dense_alpha = glm_alpha_dense_trace(&a, 1.0, 1.0).unwrap();
        assert!((dense_alpha - 0.35).abs() < 1e-14);
        assert!((out.alpha - 0.35).abs() < 1e-14);
        assert!((out.beta - 0.65).abs() < 1e-14);
    }

    #[test]
    fn glm_matches_dense_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (m, n) in [(8, 12), (12, 8), (10, 10), (6, 9)] {
            let a = gaussian_matrix(m, n, &mut rng);
            let op = SvdOperator::from_dense(&a).unwrap();
            let r2 = gaussian_vector(n, &mut rng);
            let p2 = gaussian_vector(m, &mut rng);
            let (g, t) = (0.8, 2.5);
            let out = glm_lmmse(&GlmLmmseContext::new(&op), &r2, &p2, g, t).unwrap();
            let (xd, zd) = glm_lmmse_dense_oracle(&a, &r2, &p2, g, t).unwrap();
            let xl = glm_lmmse_inversion_lemma_oracle(&a, &r2, &p2, g, t).unwrap();
            let xa = glm_lmmse_x_alternative(&op, &r2, &p2, g, t).unwrap();
            assert!(rel(&out.xhat, &xd) < 1e-10);
            assert!(rel(&out.zhat, &zd) < 1e-10);
            assert!(rel(&out.xhat, &xl) < 1e-10);
            assert!(rel(&xa, &xd) < 1e-10);
            assert!(rel(&xd, &xl) < 1e-12);
            let identity = n as f64 * out.alpha + m as f64 * out.beta - n as f64;
            assert!(identity.abs() < 1e-12);
            assert!((out.beta - glm_beta_dense_trace(&a, g, t).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn consistent_inputs_are_fixed_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let a = gaussian_matrix(7, 5, &mut rng);
        let x = gaussian_vector(5, &mut rng);
        let z = &a * &x;
        for (g, t) in [(0.1, 10.0), (3.0, 0.2), (1.0, 1.0)] {
            let (xd, _) = glm_lmmse_dense_oracle(&a, &x, &z, g, t).unwrap();
            assert!(rel(&xd, &x) < 1e-12);
        }
    }

    #[test]
    fn degenerate_precision_limits() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = gaussian_matrix(6, 6, &mut rng);
        let op = SvdOperator::from_dense(&a).unwrap();
        let ctx = GlmLmmseContext::new(&op);
        let r2 = gaussian_vector(6, &mut rng);
        let p2 = gaussian_vector(6, &mut rng);

        let weak_z = glm_lmmse(&ctx, &r2, &p2, 1.0, 1e-12).unwrap();
        assert!(rel(&weak_z.xhat, &r2) < 1e-9);
        assert!((weak_z.alpha - 1.0).abs() < 1e-9);

        let weak_x = glm_lmmse(&ctx, &r2, &p2, 1e-12, 1.0).unwrap();
        let inverse = a.clone().lu().solve(&p2).unwrap();
        assert!(rel(&weak_x.xhat, &inverse) < 1e-6);
    }

    #[test]
    fn parameter_and_singular_errors() {
        let op = SvdOperator::from_dense(&DMatrix::identity(2, 2)).unwrap();
        let ctx = GlmLmmseContext::new(&op);
        let v = DVector::zeros(2);
        assert!(matches!(
            glm_lmmse(&ctx, &v, &v, 0.0, 1.0),
            Err(VampError::InvalidParameter(_))
        ));
        assert!(matches!(
            glm_lmmse(&ctx, &v, &v, 1.0, -1.0),
            Err(VampError::InvalidParameter(_))
        ));
        let sctx = SlmLmmseContext::new(&op, 1.0, &v).unwrap();
        assert!(slm_lmmse(&sctx, &v, 0.0).is_err());
        let a = DMatrix::identity(2, 2);
        assert!(matches!(
            glm_lmmse_dense_oracle(&a, &v, &v, 0.0, 0.0),
            Err(VampError::Numerical { .. })
        ));
        let one = DVector::from_element(2, 1.0);
        let (x, _) = glm_lmmse_dense_oracle(&a, &one, &(&one * 3.0), 1.0, 1.0).unwrap();
        assert!(rel(&x, &(&one * 2.0)) < 1e-15);
    }
}
