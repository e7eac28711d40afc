//! Shared model types: the factored linear operator and the prior/channel
//! descriptors consumed by the denoisers and iteration engines.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Result, VampError};

/// A linear operator `A = U diag(s) Vᵀ` held as an economy SVD.
///
/// `u` is `m × r`, `v` is `n × r` with `r = min(m, n)`, and `s` is sorted in
/// descending order. Formulas that sum over `n = 1..N` treat the singular
/// values past `r` as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdOperator {
    u: DMatrix<f64>,
    s: DVector<f64>,
    v: DMatrix<f64>,
}

impl SvdOperator {
    /// Factor a dense matrix. Singular values come back sorted descending.
    pub fn from_dense(a: &DMatrix<f64>) -> Result<Self> {
        if a.nrows() == 0 || a.ncols() == 0 {
            return Err(VampError::InvalidInput("matrix must be non-empty".into()));
        }
        if let Some(pos) = a.iter().position(|v| !v.is_finite()) {
            return Err(VampError::InvalidInput(format!(
                "non-finite matrix entry at flat index {pos}"
            )));
        }
        let svd = a.clone().svd(true, true);
        let u = svd.u.expect("left singular vectors requested");
        let v_t = svd.v_t.expect("right singular vectors requested");
        let s = svd.singular_values;

        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
        let s_sorted = DVector::from_iterator(s.len(), order.iter().map(|&i| s[i].max(0.0)));
        let u_sorted = u.select_columns(order.iter());
        let v_sorted = v_t.transpose().select_columns(order.iter());
        Self::from_factors(u_sorted, s_sorted, v_sorted)
    }

    /// Assemble an operator from already-orthonormal factors.
    pub fn from_factors(u: DMatrix<f64>, s: DVector<f64>, v: DMatrix<f64>) -> Result<Self> {
        let r = s.len();
        check_len("left singular vectors (columns)", r, u.ncols())?;
        check_len("right singular vectors (columns)", r, v.ncols())?;
        if r != u.nrows().min(v.nrows()) {
            return Err(VampError::InvalidInput(format!(
                "economy rank {r} does not equal min({}, {})",
                u.nrows(),
                v.nrows()
            )));
        }
        if s.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(VampError::InvalidInput(
                "singular values must be finite and non-negative".into(),
            ));
        }
        if s.as_slice().windows(2).any(|w| w[0] < w[1]) {
            return Err(VampError::InvalidInput(
                "singular values must be sorted descending".into(),
            ));
        }
        Ok(Self { u, s, v })
    }

    pub fn rows(&self) -> usize {
        self.u.nrows()
    }

    pub fn cols(&self) -> usize {
        self.v.nrows()
    }

    pub fn rank(&self) -> usize {
        self.s.len()
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    pub fn singular_values(&self) -> &DVector<f64> {
        &self.s
    }

    /// `s_1 / s_r`; infinite when the smallest singular value is zero.
    pub fn condition_number(&self) -> f64 {
        let last = self.s[self.s.len() - 1];
        if last == 0.0 {
            f64::INFINITY
        } else {
            self.s[0] / last
        }
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.s.norm_squared()
    }

    /// `A x`.
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("operator apply", self.cols(), x.len())?;
        let coeffs = self.v.tr_mul(x).component_mul(&self.s);
        Ok(&self.u * coeffs)
    }

    /// `Aᵀ y`.
    pub fn apply_adjoint(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("operator adjoint", self.rows(), y.len())?;
        let coeffs = self.u.tr_mul(y).component_mul(&self.s);
        Ok(&self.v * coeffs)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, mut col) in us.column_iter_mut().enumerate() {
            col *= self.s[j];
        }
        us * self.v.transpose()
    }
}

pub fn svd_operator_from_dense(a: &DMatrix<f64>) -> Result<SvdOperator> {
    SvdOperator::from_dense(a)
}

pub fn operator_apply(op: &SvdOperator, x: &DVector<f64>) -> Result<DVector<f64>> {
    op.apply(x)
}

pub fn operator_apply_adjoint(op: &SvdOperator, y: &DVector<f64>) -> Result<DVector<f64>> {
    op.apply_adjoint(y)
}

/// Posterior-mean versus posterior-mode denoising.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    Mmse,
    Map,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PriorKind {
    /// `(1 - rho) δ(x) + rho N(x; 0, sigma2)`.
    BernoulliGaussian { rho: f64, sigma2: f64 },
    /// `(lambda / 2) exp(-lambda |x|)`.
    Laplacian { lambda: f64 },
}

/// Separable prior on the entries of `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorSpec {
    kind: PriorKind,
    mode: Estimator,
}

impl PriorSpec {
    pub fn new(kind: PriorKind, mode: Estimator) -> Result<Self> {
        match kind {
            PriorKind::BernoulliGaussian { rho, sigma2 } => {
                if !(rho > 0.0 && rho <= 1.0) {
                    return Err(VampError::InvalidParameter(format!(
                        "sparsity rate must lie in (0, 1], got {rho}"
                    )));
                }
                if !(sigma2 > 0.0 && sigma2.is_finite()) {
                    return Err(VampError::InvalidParameter(format!(
                        "active variance must be positive and finite, got {sigma2}"
                    )));
                }
                if mode == Estimator::Map {
                    return Err(VampError::InvalidParameter(
                        "MAP denoising is only available for the Laplacian prior".into(),
                    ));
                }
            }
            PriorKind::Laplacian { lambda } => {
                if !(lambda > 0.0 && lambda.is_finite()) {
                    return Err(VampError::InvalidParameter(format!(
                        "Laplacian rate must be positive and finite, got {lambda}"
                    )));
                }
            }
        }
        Ok(Self { kind, mode })
    }

    pub fn bernoulli_gaussian(rho: f64, sigma2: f64) -> Result<Self> {
        Self::new(
            PriorKind::BernoulliGaussian { rho, sigma2 },
            Estimator::Mmse,
        )
    }

    pub fn laplacian(lambda: f64, mode: Estimator) -> Result<Self> {
        Self::new(PriorKind::Laplacian { lambda }, mode)
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    pub fn mode(&self) -> Estimator {
        self.mode
    }
}

/// Separable measurement channel `p(y_m | z_m)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelSpec {
    /// `y = z + w`, `w ~ N(0, 1/gamma_w)`.
    Awgn { gamma_w: f64 },
    /// `y = sgn(z + w)`, `w ~ N(0, 1/gamma_w)`, with `sgn(0) = +1`.
    Probit { gamma_w: f64 },
}

impl ChannelSpec {
    pub fn awgn(gamma_w: f64) -> Result<Self> {
        let c = ChannelSpec::Awgn { gamma_w };
        c.validate()?;
        Ok(c)
    }

    pub fn probit(gamma_w: f64) -> Result<Self> {
        let c = ChannelSpec::Probit { gamma_w };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.gamma_w();
        if !(g > 0.0 && g.is_finite()) {
            return Err(VampError::InvalidParameter(format!(
                "noise precision must be positive and finite, got {g}"
            )));
        }
        Ok(())
    }

    pub fn gamma_w(&self) -> f64 {
        match *self {
            ChannelSpec::Awgn { gamma_w } | ChannelSpec::Probit { gamma_w } => gamma_w,
        }
    }

    /// Same channel family with a different noise precision.
    pub fn with_gamma_w(&self, gamma_w: f64) -> Result<Self> {
        let c = match self {
            ChannelSpec::Awgn { .. } => ChannelSpec::Awgn { gamma_w },
            ChannelSpec::Probit { .. } => ChannelSpec::Probit { gamma_w },
        };
        c.validate()?;
        Ok(c)
    }
}

/// Output of a separable denoiser: the estimate, its divergence
/// `(1/N) tr ∂g/∂r`, and per-entry posterior variances when available.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserResult {
    pub value: DVector<f64>,
    pub divergence: f64,
    pub variance: Option<DVector<f64>>,
}
