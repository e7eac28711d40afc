//! Reproducible experiment instances: rotationally invariant operators with a
//! prescribed condition number, sparse signals, noise and measurements.
//!
//! Randomness comes from ChaCha8 generators keyed by `(seed, substream)`.
//! Each ingredient owns a substream, so the matrix, the support, the
//! amplitudes and the noise can be redrawn independently of one another.

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Result, VampError};
use crate::model::{ChannelSpec, SvdOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Substream {
    LeftFactor = 1,
    RightFactor = 2,
    Support = 3,
    Amplitudes = 4,
    Noise = 5,
    Dense = 6,
}

pub fn substream_rng(seed: u64, stream: Substream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    // column-major fill keeps the draw order independent of nalgebra internals
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| StandardNormal.sample(rng))
        .collect();
    DMatrix::from_vec(rows, cols, data)
}

/// First `cols` columns of a Haar-distributed `rows × rows` orthogonal matrix:
/// thin QR of a Gaussian matrix with the columns of `Q` rescaled by the signs
/// of `diag(R)`.
pub fn sample_haar_stiefel(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    assert!(cols <= rows && cols >= 1, "need 1 ≤ cols ≤ rows");
    let g = gaussian_matrix(rows, cols, rng);
    let qr = g.qr();
    let r_diag = qr.r().diagonal();
    let mut q = qr.q();
    for (j, mut col) in q.column_iter_mut().enumerate() {
        if r_diag[j] < 0.0 {
            col.neg_mut();
        }
    }
    q
}

/// Haar-distributed `dim × dim` orthogonal matrix.
pub fn sample_haar_orthogonal(dim: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = substream_rng(seed, Substream::LeftFactor);
    sample_haar_stiefel(dim, dim, &mut rng)
}

/// Geometric singular values `s_i = s_1 ρ^(i-1)` with `s_1 / s_r = kappa`,
/// scaled so that `Σ s_i² = n`.
pub fn geometric_spectrum(m: usize, n: usize, kappa: f64) -> Result<DVector<f64>> {
    if !(kappa >= 1.0 && kappa.is_finite()) {
        return Err(VampError::InvalidParameter(format!(
            "condition number must be finite and ≥ 1, got {kappa}"
        )));
    }
    if m == 0 || n == 0 {
        return Err(VampError::InvalidParameter("dimensions must be ≥ 1".into()));
    }
    let r = m.min(n);
    let raw = if r == 1 {
        DVector::from_element(1, 1.0)
    } else {
        let span = (r - 1) as f64;
        DVector::from_fn(r, |i, _| kappa.powf(-(i as f64) / span))
    };
    let scale = (n as f64 / raw.norm_squared()).sqrt();
    Ok(raw * scale)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatrixGenSpec {
    pub m: usize,
    pub n: usize,
    pub kappa: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalSpec {
    pub n: usize,
    pub k_nonzero: usize,
    pub amp_variance: f64,
    pub seed: u64,
}

/// `A = U diag(s) Vᵀ` with Haar `U`, `V` and a geometric spectrum.
pub fn rotationally_invariant_operator(spec: &MatrixGenSpec) -> Result<SvdOperator> {
    let s = geometric_spectrum(spec.m, spec.n, spec.kappa)?;
    let r = s.len();
    let u = sample_haar_stiefel(
        spec.m,
        r,
        &mut substream_rng(spec.seed, Substream::LeftFactor),
    );
    let v = sample_haar_stiefel(
        spec.n,
        r,
        &mut substream_rng(spec.seed, Substream::RightFactor),
    );
    SvdOperator::from_factors(u, s, v)
}

/// I.i.d. `N(0, 1/m)` matrix (so `E‖A‖_F² = n`), factored.
pub fn iid_gaussian_operator(m: usize, n: usize, seed: u64) -> Result<SvdOperator> {
    let mut rng = substream_rng(seed, Substream::Dense);
    let a = gaussian_matrix(m, n, &mut rng) / (m as f64).sqrt();
    SvdOperator::from_dense(&a)
}

/// `k_nonzero` entries on a uniformly random support with `N(0, amp_variance)`
/// amplitudes.
pub fn sparse_signal(spec: &SignalSpec) -> Result<DVector<f64>> {
    if spec.k_nonzero > spec.n {
        return Err(VampError::InvalidParameter(format!(
            "support size {} exceeds length {}",
            spec.k_nonzero, spec.n
        )));
    }
    if spec.amp_variance.is_nan() || spec.amp_variance <= 0.0 {
        return Err(VampError::InvalidParameter(
            "amplitude variance must be positive".into(),
        ));
    }
    let mut support_rng = substream_rng(spec.seed, Substream::Support);
    let mut amp_rng = substream_rng(spec.seed, Substream::Amplitudes);
    let mut support = index::sample(&mut support_rng, spec.n, spec.k_nonzero).into_vec();
    support.sort_unstable();
    let sd = spec.amp_variance.sqrt();
    let mut x = DVector::zeros(spec.n);
    for i in support {
        let z: f64 = StandardNormal.sample(&mut amp_rng);
        x[i] = sd * z;
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    Awgn,
    Probit,
}

/// `sgn(v)` with `sgn(0) = +1`.
#[inline]
pub fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// One generated trial.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    pub op: SvdOperator,
    pub x_true: DVector<f64>,
    pub z_true: DVector<f64>,
    pub w: DVector<f64>,
    pub y: DVector<f64>,
    /// Infinite for a noiseless instance.
    pub gamma_w: f64,
    pub kind: ChannelKind,
}

impl ProblemInstance {
    /// Channel spec carrying the calibrated noise precision.
    pub fn channel(&self) -> Result<ChannelSpec> {
        match self.kind {
            ChannelKind::Awgn => ChannelSpec::awgn(self.gamma_w),
            ChannelKind::Probit => ChannelSpec::probit(self.gamma_w),
        }
    }
}

/// Noise precision that puts `E‖Ax‖² / E‖w‖²` at `snr_db`, using the
/// analytic `E‖Ax‖² = k σ² ‖A‖_F² / n`.
pub fn calibrated_gamma_w(
    op: &SvdOperator,
    k_nonzero: usize,
    amp_variance: f64,
    snr_db: f64,
) -> f64 {
    let signal_power = k_nonzero as f64 * amp_variance * op.frobenius_norm_sq() / op.cols() as f64;
    op.rows() as f64 * 10f64.powf(snr_db / 10.0) / signal_power
}

/// Draw a signal and noise for a given operator and pass them through the
/// channel. `snr_db = +∞` gives a noiseless instance.
pub fn instance_from_operator(
    op: SvdOperator,
    sspec: &SignalSpec,
    kind: ChannelKind,
    snr_db: f64,
    noise_seed: u64,
) -> Result<ProblemInstance> {
    check_len("signal length", op.cols(), sspec.n)?;
    if snr_db.is_nan() {
        return Err(VampError::InvalidParameter("snr_db is NaN".into()));
    }
    let x_true = sparse_signal(sspec)?;
    let z_true = op.apply(&x_true)?;
    let m = op.rows();
    let gamma_w = calibrated_gamma_w(&op, sspec.k_nonzero, sspec.amp_variance, snr_db);
    let w = if gamma_w.is_infinite() {
        DVector::zeros(m)
    } else {
        let sd = 1.0 / gamma_w.sqrt();
        let mut rng = substream_rng(noise_seed, Substream::Noise);
        DVector::from_fn(m, |_, _| {
            let e: f64 = StandardNormal.sample(&mut rng);
            sd * e
        })
    };
    let noisy = &z_true + &w;
    let y = match kind {
        ChannelKind::Awgn => noisy,
        ChannelKind::Probit => noisy.map(sign),
    };
    Ok(ProblemInstance {
        op,
        x_true,
        z_true,
        w,
        y,
        gamma_w,
        kind,
    })
}

/// Full instance: rotationally invariant operator, sparse signal, noise.
pub fn generate_instance(
    mspec: &MatrixGenSpec,
    sspec: &SignalSpec,
    kind: ChannelKind,
    snr_db: f64,
    noise_seed: u64,
) -> Result<ProblemInstance> {
    check_len("signal length", mspec.n, sspec.n)?;
    let op = rotationally_invariant_operator(mspec)?;
    instance_from_operator(op, sspec, kind, snr_db, noise_seed)
}
