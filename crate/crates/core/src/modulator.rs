//! Adaptive saturating pulse-amplitude modulator.
//!
//! In every cycle the transfer characteristic is centred on the previous
//! estimate and its gain is set so that the error signal leaves the linear
//! range with probability exactly `mu`. Outside the linear range the output
//! saturates at `±1`.

use crate::error::{Error, Result};
use crate::model::{EstimatorState, ModulatorState};
use crate::normal;

/// Normalised modulator output for one cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emission {
    /// Output in `[-1, 1]`.
    pub value: f64,
    /// Whether `|m_k e_k| > 1`, i.e. over-modulation.
    pub clipped: bool,
}

/// Saturation factor `alpha` with `Pr(|Z| > alpha) = mu` for standard normal `Z`.
///
/// Equivalently `alpha` is the `1 - mu/2` quantile of the standard normal.
pub fn saturation_factor(mu: f64) -> Result<f64> {
    if !(mu > 0.0 && mu < 0.5) {
        return Err(Error::domain(format!(
            "over-modulation probability must lie in (0, 0.5), got {mu}"
        )));
    }
    Ok(normal::two_sided_quantile(mu))
}

/// Optimal modulator setting for the cycle after `prev`: the position is the
/// current estimate and the gain is `1 / (alpha * sqrt(sigma_v_sq + p_prev))`.
pub fn adapt(prev: &EstimatorState, sigma_v_sq: f64, alpha: f64) -> Result<ModulatorState> {
    let p_prev = prev.p_k;
    if !(p_prev >= 0.0) || !(sigma_v_sq >= 0.0) {
        return Err(Error::domain(format!(
            "variances must be nonnegative (p_prev = {p_prev}, sigma_v_sq = {sigma_v_sq})"
        )));
    }
    if !(alpha > 0.0) {
        return Err(Error::domain(format!("saturation factor must be positive, got {alpha}")));
    }
    let spread = sigma_v_sq + p_prev;
    if !(spread > 0.0) {
        return Err(Error::Degenerate(
            "error-signal variance is zero, modulator gain diverges".into(),
        ));
    }
    let m_k = 1.0 / (alpha * spread.sqrt());
    if !m_k.is_finite() {
        return Err(Error::Degenerate(format!("modulator gain overflowed ({m_k})")));
    }
    Ok(ModulatorState {
        b_k: prev.x_hat,
        m_k,
        cycle: prev.cycle + 1,
    })
}

/// Passes the error signal through the saturating characteristic.
pub fn emit(e_k: f64, m_k: f64) -> Emission {
    debug_assert!(m_k > 0.0);
    let drive = m_k * e_k;
    if drive.abs() <= 1.0 {
        Emission {
            value: drive,
            clipped: false,
        }
    } else {
        Emission {
            value: drive.signum(),
            clipped: true,
        }
    }
}

/// Probability that a zero-mean Gaussian error with variance `sigma_e_sq`
/// over-modulates a modulator with gain `m_k`.
pub fn overmod_probability(m_k: f64, sigma_e_sq: f64) -> Result<f64> {
    if !(m_k > 0.0) || !(sigma_e_sq > 0.0) {
        return Err(Error::domain(format!(
            "gain and error variance must be positive (m_k = {m_k}, sigma_e_sq = {sigma_e_sq})"
        )));
    }
    Ok(normal::two_sided_tail(1.0 / (m_k * sigma_e_sq.sqrt())))
}
