//! Closed-form layer: threshold cycle count, decay regimes, bit-rates,
//! energy per bit and the Shannon boundary.
//!
//! Rates and efficiencies are computed from the exact MMSE recursion. The
//! closed-form approximations are exposed separately for comparison.

use crate::error::{Error, Result};
use crate::estimator::mmse_trajectory;
use crate::model::{DerivedParams, EfficiencyPoint};
use std::f64::consts::LN_2;

/// Cycle count at which the exponential MMSE decay reaches the feedback
/// noise floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// Real-valued, not rounded.
    Cycles(f64),
    /// No feedback noise: the exponential regime never ends.
    Never,
}

impl Threshold {
    /// Real value, `+inf` for [`Threshold::Never`].
    pub fn value(self) -> f64 {
        match self {
            Threshold::Cycles(n) => n,
            Threshold::Never => f64::INFINITY,
        }
    }

    /// Classification of a cycle count: pre-threshold iff `n <= floor(n*)`.
    pub fn regime(self, n: usize) -> Regime {
        if (n as f64) <= self.value().floor() {
            Regime::PreThreshold
        } else {
            Regime::PostThreshold
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    PreThreshold,
    PostThreshold,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::PreThreshold => "pre",
            Regime::PostThreshold => "post",
        }
    }
}

/// Rates of one configuration at a given cycle count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateReport {
    pub n: usize,
    pub n_star: Threshold,
    /// Forward-channel capacity in bit/s.
    pub capacity: f64,
    /// Output bit-rate from the exact recursion, bit/s.
    pub output_rate: f64,
    pub regime: Regime,
}

/// `n* = log2(σ0² / σv²) / log2(1 + Q²)`.
pub fn threshold_cycles(sigma0_sq: f64, sigma_v_sq: f64, q_sq: f64) -> Result<Threshold> {
    if !(q_sq > 0.0) {
        return Err(Error::domain(format!("q_sq must be positive, got {q_sq}")));
    }
    if !(sigma_v_sq >= 0.0) {
        return Err(Error::domain(format!("sigma_v_sq must be nonnegative, got {sigma_v_sq}")));
    }
    if sigma_v_sq == 0.0 {
        return Ok(Threshold::Never);
    }
    if !(sigma0_sq > sigma_v_sq) {
        return Err(Error::Precondition(format!(
            "threshold needs sigma0_sq > sigma_v_sq (got {sigma0_sq} <= {sigma_v_sq})"
        )));
    }
    Ok(Threshold::Cycles(
        (sigma0_sq / sigma_v_sq).log2() / q_sq.ln_1p() * LN_2,
    ))
}

/// Two-regime approximation of `P_k`: `σ0² (1 + Q²)^-k` up to `n*`, then
/// `σv² / (k - n* + 1)`.
pub fn mmse_closed_form(k: usize, sigma0_sq: f64, sigma_v_sq: f64, q_sq: f64, n_star: Threshold) -> f64 {
    let kf = k as f64;
    match n_star {
        Threshold::Cycles(ns) if kf > ns => sigma_v_sq / (kf - ns + 1.0),
        _ => sigma0_sq * (-kf * q_sq.ln_1p()).exp(),
    }
}

/// Information per cycle, `½ log2(1 + Q²)` bits.
pub fn info_per_cycle(q_sq: f64) -> f64 {
    0.5 * q_sq.ln_1p() / LN_2
}

/// Forward-channel capacity `F0 log2(1 + Q²)`: one cycle lasts `1 / (2 F0)`.
pub fn channel_capacity(f0: f64, q_sq: f64) -> f64 {
    f0 * q_sq.ln_1p() / LN_2
}

/// AWGN capacity `F0 log2(1 + W / (N F0))` from received power and noise density.
pub fn awgn_capacity(f0: f64, w_sign: f64, n_zeta: f64) -> f64 {
    f0 * (w_sign / (n_zeta * f0)).ln_1p() / LN_2
}

/// Mean output bit-rate `(F0 / n) log2(σ0² / P_n)`.
pub fn output_bit_rate(n: usize, f0: f64, sigma0_sq: f64, p_n: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::domain("cycle count must be positive"));
    }
    if !(p_n > 0.0 && p_n <= sigma0_sq) {
        return Err(Error::domain(format!(
            "p_n must lie in (0, sigma0_sq = {sigma0_sq}], got {p_n}"
        )));
    }
    Ok(f0 / n as f64 * (sigma0_sq / p_n).log2())
}

/// Output bit-rate from the two-regime closed form: `C` up to `n*`, then
/// `(n* / n) C + (F0 / n) log2(n - n* + 1)`.
pub fn output_rate_closed_form(n: usize, n_star: Threshold, capacity: f64, f0: f64) -> f64 {
    let nf = n as f64;
    match n_star {
        Threshold::Cycles(ns) if nf > ns => ns / nf * capacity + f0 / nf * (nf - ns + 1.0).log2(),
        _ => capacity,
    }
}

pub fn energy_per_bit(w_sign: f64, rate: f64) -> Result<f64> {
    if !(rate > 0.0) {
        return Err(Error::domain(format!("rate must be positive, got {rate}")));
    }
    Ok(w_sign / rate)
}

/// Minimum `E_bit / N` at bandwidth efficiency `s`: `(2^s - 1) / s`.
///
/// Tends to `ln 2` (about -1.59 dB) as `s -> 0`; that limit is returned at `s = 0`.
pub fn shannon_boundary(spectral_eff: f64) -> f64 {
    if spectral_eff == 0.0 {
        return LN_2;
    }
    (spectral_eff * LN_2).exp_m1() / spectral_eff
}

/// Operating point of the system after `n` cycles, using the exact recursion.
pub fn efficiency_point(
    derived: &DerivedParams,
    sigma0_sq: f64,
    sigma_v_sq: f64,
    n: usize,
    f0: f64,
) -> Result<EfficiencyPoint> {
    let p_n = mmse_trajectory(derived, sigma0_sq, sigma_v_sq, n)?.final_mmse();
    let rate = output_bit_rate(n, f0, sigma0_sq, p_n)?;
    let n_zeta = derived.sigma_zeta_sq / f0;
    let ebit_over_n = energy_per_bit(derived.w_sign, rate)? / n_zeta;
    let spectral_eff = rate / f0;
    Ok(EfficiencyPoint {
        spectral_eff,
        ebit_over_n,
        boundary_gap: ebit_over_n - shannon_boundary(spectral_eff),
    })
}

/// Capacity, threshold and exact output rate after `n` cycles.
pub fn rate_report(
    derived: &DerivedParams,
    sigma0_sq: f64,
    sigma_v_sq: f64,
    n: usize,
    f0: f64,
) -> Result<RateReport> {
    let n_star = threshold_cycles(sigma0_sq, sigma_v_sq, derived.q_sq)?;
    let p_n = mmse_trajectory(derived, sigma0_sq, sigma_v_sq, n)?.final_mmse();
    Ok(RateReport {
        n,
        n_star,
        capacity: channel_capacity(f0, derived.q_sq),
        output_rate: output_bit_rate(n, f0, sigma0_sq, p_n)?,
        regime: n_star.regime(n),
    })
}
