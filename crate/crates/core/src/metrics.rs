use nalgebra::DVector;

use crate::error::{check_len, Result, VampError};

/// Debiased NMSE `min_c ‖c x̂ − x‖² / ‖x‖²`, attained at `c = ⟨x̂,x⟩/‖x̂‖²`.
///
/// Equals `1 − ⟨x̂,x⟩² / (‖x̂‖²‖x‖²)`; returns 1 for `x̂ = 0`.
pub fn dnmse(xhat: &DVector<f64>, x_true: &DVector<f64>) -> Result<f64> {
    check_len("dnmse", x_true.len(), xhat.len())?;
    let xx = x_true.norm_squared();
    if xx == 0.0 {
        return Err(VampError::InvalidInput("reference signal is zero".into()));
    }
    let hh = xhat.norm_squared();
    if hh == 0.0 {
        return Ok(1.0);
    }
    let hx = xhat.dot(x_true);
    Ok((1.0 - hx * hx / (hh * xx)).clamp(0.0, 1.0))
}

pub fn to_db(v: f64) -> f64 {
    10.0 * v.log10()
}

pub fn dnmse_db(xhat: &DVector<f64>, x_true: &DVector<f64>) -> Result<f64> {
    dnmse(xhat, x_true).map(to_db)
}
