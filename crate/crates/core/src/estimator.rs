//! Base-station estimation: the Kalman-type update and the exact MMSE
//! recursion.

use crate::error::{Error, Result};
use crate::model::DerivedParams;

/// Theoretical MMSE for cycles `0..=n`; `p[0]` is the prior variance.
#[derive(Debug, Clone, PartialEq)]
pub struct MmseTrajectory {
    pub p: Vec<f64>,
}

impl MmseTrajectory {
    /// Number of cycles covered.
    pub fn cycles(&self) -> usize {
        self.p.len() - 1
    }

    pub fn final_mmse(&self) -> f64 {
        *self.p.last().expect("trajectory always holds the prior")
    }

    /// First cycle `k >= 1` with `p[k] <= level`.
    pub fn first_crossing(&self, level: f64) -> Option<usize> {
        self.p.iter().skip(1).position(|&p| p <= level).map(|i| i + 1)
    }
}

/// One step of the MMSE recursion:
/// `P_k = P_{k-1} ((1 + Q²) σ_v² + P_{k-1}) / ((1 + Q²)(σ_v² + P_{k-1}))`.
pub fn mmse_step(p_prev: f64, q_sq: f64, sigma_v_sq: f64) -> Result<f64> {
    if !(p_prev > 0.0) {
        return Err(Error::domain(format!("p_prev must be positive, got {p_prev}")));
    }
    if !(q_sq >= 0.0) || !(sigma_v_sq >= 0.0) {
        return Err(Error::domain(format!(
            "q_sq and sigma_v_sq must be nonnegative (q_sq = {q_sq}, sigma_v_sq = {sigma_v_sq})"
        )));
    }
    let g = 1.0 + q_sq;
    Ok(p_prev * (g * sigma_v_sq + p_prev) / (g * (sigma_v_sq + p_prev)))
}

/// Covariance-ratio gain
/// `L_k = a m_k p_prev / (σ_ζ² + a² m_k² (σ_v² + p_prev))`.
///
/// At `a = 1` this equals `(1 - P_k / P_{k-1}) / m_k`.
pub fn gain(m_k: f64, a: f64, p_prev: f64, sigma_v_sq: f64, sigma_zeta_sq: f64) -> Result<f64> {
    if !(m_k > 0.0) || !(a > 0.0) || !(p_prev > 0.0) || !(sigma_zeta_sq > 0.0) || !(sigma_v_sq >= 0.0) {
        return Err(Error::domain(format!(
            "gain inputs out of domain (m_k = {m_k}, a = {a}, p_prev = {p_prev}, \
             sigma_v_sq = {sigma_v_sq}, sigma_zeta_sq = {sigma_zeta_sq})"
        )));
    }
    let am = a * m_k;
    Ok(am * p_prev / (sigma_zeta_sq + am * am * (sigma_v_sq + p_prev)))
}

/// `x_hat_prev + l_k * y_tilde`. The observation already has zero conditional
/// mean because the modulator is centred on `x_hat_prev`.
#[inline]
pub fn update(x_hat_prev: f64, l_k: f64, y_tilde: f64) -> f64 {
    x_hat_prev + l_k * y_tilde
}

/// Iterates [`mmse_step`] `n` times from `sigma0_sq`.
pub fn mmse_trajectory(
    derived: &DerivedParams,
    sigma0_sq: f64,
    sigma_v_sq: f64,
    n: usize,
) -> Result<MmseTrajectory> {
    if !(sigma0_sq > 0.0) {
        return Err(Error::domain(format!("sigma0_sq must be positive, got {sigma0_sq}")));
    }
    let mut p = Vec::with_capacity(n + 1);
    p.push(sigma0_sq);
    for k in 0..n {
        let next = mmse_step(p[k], derived.q_sq, sigma_v_sq)?;
        p.push(next);
    }
    Ok(MmseTrajectory { p })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, EstimatorState, SystemConfig};
    use crate::modulator::{adapt, emit, saturation_factor};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn derived_with_q(q_sq: f64) -> DerivedParams {
        DerivedParams {
            a: q_sq.sqrt() * 2.0,
            sigma_zeta_sq: 1.0,
            alpha: 2.0,
            q_sq,
            w_sign: q_sq,
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn zero_snr_keeps_mmse() {
        assert_eq!(mmse_step(0.7, 0.0, 0.1).unwrap(), 0.7);
    }

    #[test]
    fn noiseless_feedback_is_geometric() {
        let p1 = mmse_step(1.0, 3.0, 0.0).unwrap();
        assert_eq!(p1, 0.25);
        assert_eq!(mmse_step(p1, 3.0, 0.0).unwrap(), 0.0625);
    }

    #[test]
    fn single_step_with_feedback_noise() {
        let p = mmse_step(1.0, 3.0, 0.01).unwrap();
        assert!((p - 1.04 / 4.04).abs() < 1e-15);
        assert!((p - 0.257426).abs() < 1e-6);
    }

    #[test]
    fn step_domain() {
        assert!(mmse_step(0.0, 1.0, 1.0).is_err());
        assert!(mmse_step(1.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn gain_examples() {
        assert!((gain(1.0, 1.0, 1.0, 0.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(gain(1.0, 1.0, 1.0, 0.0, f64::INFINITY).unwrap(), 0.0);
        assert!(gain(1.0, 1.0, 1.0, 0.0, 1e300).unwrap() < 1e-299);
        assert!(gain(0.0, 1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn update_examples() {
        assert_eq!(update(0.3, 0.0, 5.0), 0.3);
        assert_eq!(update(0.0, 0.5, 2.0), 1.0);
    }

    #[test]
    fn trajectories() {
        let d = derived_with_q(1.0);
        assert_eq!(mmse_trajectory(&d, 2.0, 0.0, 0).unwrap().p, vec![2.0]);
        assert_eq!(mmse_trajectory(&d, 1.0, 0.0, 3).unwrap().p, vec![1.0, 0.5, 0.25, 0.125]);
    }

    #[test]
    fn trajectory_crosses_feedback_noise_after_seven_cycles() {
        // brute force: k = 6 is still above sigma_v_sq, k = 7 is at or below
        let traj = mmse_trajectory(&derived_with_q(3.0), 1.0, 1e-4, 20).unwrap();
        assert!(traj.p[6] > 1e-4);
        assert!(traj.p[7] > 1e-4);
        assert!(traj.p[8] <= 1e-4);
        assert_eq!(traj.first_crossing(1e-4), Some(8));
    }

    #[test]
    fn hyperbolic_tail_rate() {
        // deep in the feedback-noise regime 1/P grows by Q² / ((1 + Q²) σ_v²) per cycle
        let (q, sv) = (3.0, 1e-4);
        let traj = mmse_trajectory(&derived_with_q(q), 1.0, sv, 100_000).unwrap();
        let n = traj.cycles() as f64;
        let scaled = n * traj.final_mmse() / sv;
        assert!(rel(scaled, (1.0 + q) / q) < 1e-3, "{scaled}");
        assert!(traj.p.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn noiseless_recovery_converges_to_sample() {
        // sigma_v = 0 and a very quiet channel: the estimate locks on to x
        let config = SystemConfig {
            sigma_v_sq: 0.0,
            n_zeta: 1e-6,
            ..SystemConfig::reference()
        };
        let d = validate(&config).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..200 {
            let x: f64 = StandardNormal.sample(&mut rng);
            let mut state = EstimatorState::prior(0.0, 1.0);
            let mut clipped = false;
            for _ in 0..3 {
                let m = adapt(&state, 0.0, d.alpha).unwrap();
                let out = emit(x - m.b_k, m.m_k);
                let zeta: f64 = StandardNormal.sample(&mut rng);
                let y = d.a * out.value + d.sigma_zeta_sq.sqrt() * zeta;
                let l = gain(m.m_k, d.a, state.p_k, 0.0, d.sigma_zeta_sq).unwrap();
                state = EstimatorState {
                    x_hat: update(state.x_hat, l, y),
                    p_k: mmse_step(state.p_k, d.q_sq, 0.0).unwrap(),
                    cycle: m.cycle,
                };
                if out.clipped {
                    clipped = true;
                    break;
                }
            }
            if !clipped {
                assert!((x - state.x_hat).abs() < 6.0 * state.p_k.sqrt());
                assert!(state.p_k < 1e-18);
            }
        }
    }

    proptest! {
        #[test]
        fn two_forms_agree(
            p in 1e-10..1e4f64,
            sv in 0.0..1e2f64,
            a in 1e-2..1e2f64,
            mu in 1e-4..0.4f64,
            szs in 1e-4..1e4f64,
        ) {
            let alpha = saturation_factor(mu).unwrap();
            let m = adapt(&EstimatorState { x_hat: 0.0, p_k: p, cycle: 0 }, sv, alpha).unwrap().m_k;
            let am2 = a * a * m * m;
            let first = p - am2 * p * p / (szs + am2 * (sv + p));
            let q_sq = (a / alpha).powi(2) / szs;
            let second = mmse_step(p, q_sq, sv).unwrap();
            prop_assert!(rel(second, first) < 1e-12 || (second - first).abs() < 1e-15 * p);
            prop_assert!(second < p && second > 0.0);
            // same gain as the normalised form scaled by 1/a
            prop_assume!(1.0 - second / p > 1e-4);
            let l = gain(m, a, p, sv, szs).unwrap();
            prop_assert!(rel(l * a * m, 1.0 - second / p) < 1e-9);
        }

        #[test]
        fn geometric_law_without_feedback_noise(q in 0.01..100.0f64, s0 in 1e-3..1e3f64, n in 1usize..60) {
            let traj = mmse_trajectory(&derived_with_q(q), s0, 0.0, n).unwrap();
            for (k, &p) in traj.p.iter().enumerate() {
                prop_assert!(rel(p, s0 * (1.0 + q).powi(-(k as i32))) < 1e-12);
            }
        }
    }
}
