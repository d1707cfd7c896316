//! Seeded Monte Carlo simulation of complete sample transmissions.
//!
//! Each trial draws a sample from the prior and sends it through the clipping
//! modulator, the noisy feedback path and the AWGN forward channel. The
//! receiver uses the open-loop gain schedule given by the theoretical MMSE
//! trajectory, so trials share no state.
//!
//! # Random streams
//!
//! Trial `i` of an ensemble with master seed `s` draws from a ChaCha20 stream
//! whose key is `ChaCha20Rng::seed_from_u64(s)` and whose stream id is `i`.
//! Normal variates come from `rand_distr::StandardNormal`. Within a trial the
//! draw order is the sample first, then for each cycle the feedback noise
//! followed by the forward-channel noise.
//!
//! Trials are reduced in fixed blocks of [`BLOCK_TRIALS`] and blocks are
//! merged in index order, so results do not depend on the thread count.

use crate::error::{Error, Result};
use crate::estimator::{gain, mmse_trajectory, update, MmseTrajectory};
use crate::model::{DerivedParams, EstimatorState, SystemConfig};
use crate::modulator::{adapt, emit};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Generator description recorded in output metadata.
pub const RNG_DESCRIPTION: &str =
    "chacha20(key=seed_from_u64(seed),stream=trial);normal=rand_distr::StandardNormal";

/// Trials per reduction block.
pub const BLOCK_TRIALS: usize = 1024;

/// Random stream of one trial.
pub fn trial_stream(seed: u64, trial: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// One simulated sample transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub x_true: f64,
    /// Estimate after each cycle `1..=n`.
    pub estimates: Vec<f64>,
    pub sq_errors: Vec<f64>,
    pub clip_flags: Vec<bool>,
}

impl TrialRecord {
    /// Estimate delivered at the end; the prior mean when no cycle ran.
    pub fn final_estimate(&self, x0: f64) -> f64 {
        self.estimates.last().copied().unwrap_or(x0)
    }
}

/// Precomputed per-cycle modulator gains and estimator gains for one
/// configuration.
#[derive(Debug, Clone)]
pub struct Simulator {
    x0: f64,
    sigma0: f64,
    sigma_v: f64,
    sigma_zeta: f64,
    a: f64,
    trajectory: MmseTrajectory,
    m: Vec<f64>,
    l: Vec<f64>,
}

impl Simulator {
    pub fn new(config: &SystemConfig, derived: &DerivedParams) -> Result<Self> {
        let n = config.n_cycles;
        let trajectory = mmse_trajectory(derived, config.sigma0_sq, config.sigma_v_sq, n)?;
        let mut m = Vec::with_capacity(n);
        let mut l = Vec::with_capacity(n);
        for k in 0..n {
            let p_prev = trajectory.p[k];
            let state = EstimatorState { x_hat: config.x0, p_k: p_prev, cycle: k };
            let modulator = adapt(&state, config.sigma_v_sq, derived.alpha)?;
            m.push(modulator.m_k);
            l.push(gain(
                modulator.m_k,
                derived.a,
                p_prev,
                config.sigma_v_sq,
                derived.sigma_zeta_sq,
            )?);
        }
        Ok(Simulator {
            x0: config.x0,
            sigma0: config.sigma0_sq.sqrt(),
            sigma_v: config.sigma_v_sq.sqrt(),
            sigma_zeta: derived.sigma_zeta_sq.sqrt(),
            a: derived.a,
            trajectory,
            m,
            l,
        })
    }

    pub fn cycles(&self) -> usize {
        self.m.len()
    }

    pub fn trajectory(&self) -> &MmseTrajectory {
        &self.trajectory
    }

    pub fn trial<R: Rng + ?Sized>(&self, rng: &mut R) -> TrialRecord {
        let n = self.cycles();
        let x = self.x0 + self.sigma0 * rng.sample::<f64, _>(StandardNormal);
        let mut x_hat = self.x0;
        let mut record = TrialRecord {
            x_true: x,
            estimates: Vec::with_capacity(n),
            sq_errors: Vec::with_capacity(n),
            clip_flags: Vec::with_capacity(n),
        };
        for k in 0..n {
            let v = self.sigma_v * rng.sample::<f64, _>(StandardNormal);
            let zeta = self.sigma_zeta * rng.sample::<f64, _>(StandardNormal);
            // modulator centred on the previous estimate, position corrupted by v
            let emission = emit(x - x_hat - v, self.m[k]);
            let y = self.a * emission.value + zeta;
            x_hat = update(x_hat, self.l[k], y);
            record.estimates.push(x_hat);
            record.sq_errors.push((x - x_hat).powi(2));
            record.clip_flags.push(emission.clipped);
        }
        record
    }
}

/// Simulates one transmission of a fresh sample.
pub fn run_trial<R: Rng + ?Sized>(
    config: &SystemConfig,
    derived: &DerivedParams,
    rng: &mut R,
) -> Result<TrialRecord> {
    Ok(Simulator::new(config, derived)?.trial(rng))
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(count)`.
    pub std_err: f64,
    pub count: u64,
}

/// Empirical frequency of a binary event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipRate {
    pub events: u64,
    pub opportunities: u64,
}

impl ClipRate {
    pub fn rate(&self) -> f64 {
        if self.opportunities == 0 {
            0.0
        } else {
            self.events as f64 / self.opportunities as f64
        }
    }

    /// Binomial standard error of the empirical rate.
    pub fn std_err(&self) -> f64 {
        if self.opportunities == 0 {
            return 0.0;
        }
        let r = self.rate();
        (r * (1.0 - r) / self.opportunities as f64).sqrt()
    }

    /// Half-width `sigmas * sqrt(p (1 - p) / N)` of the band around a
    /// hypothesised probability `p`.
    pub fn band(&self, p: f64, sigmas: f64) -> f64 {
        if self.opportunities == 0 {
            return 0.0;
        }
        sigmas * (p * (1.0 - p) / self.opportunities as f64).sqrt()
    }
}

/// Aggregated ensemble results.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleStats {
    pub trials: usize,
    pub seed: u64,
    /// Squared error of the prior mean, i.e. the sample variance of the draws.
    pub prior_sq_error: MeanEstimate,
    /// Per-cycle `(x - x_hat_k)^2`, all trials included.
    pub mean_sq_error: Vec<MeanEstimate>,
    /// Per-cycle `x - x_hat_k`.
    pub mean_error: Vec<MeanEstimate>,
    /// Per-cycle squared error over trials with no clipping in cycles `1..=k`.
    pub unclipped_sq_error: Vec<MeanEstimate>,
    pub cycle_clips: Vec<ClipRate>,
    /// Clip events over `trials * n`.
    pub clip_rate: ClipRate,
    /// Trials with at least one clip.
    pub clipped_trials: u64,
}

impl EnsembleStats {
    /// MSE of the delivered estimate.
    pub fn final_mse(&self) -> f64 {
        self.mean_sq_error
            .last()
            .unwrap_or(&self.prior_sq_error)
            .mean
    }
}

/// Running mean and centred second moment.
#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(&mut self, other: &Moments) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let n = (self.count + other.count) as f64;
        let delta = other.mean - self.mean;
        self.mean += delta * other.count as f64 / n;
        self.m2 += other.m2 + delta * delta * self.count as f64 * other.count as f64 / n;
        self.count += other.count;
    }

    fn estimate(&self) -> MeanEstimate {
        let std_err = if self.count > 1 {
            (self.m2 / (self.count - 1) as f64 / self.count as f64).sqrt()
        } else {
            0.0
        };
        MeanEstimate {
            mean: self.mean,
            std_err,
            count: self.count,
        }
    }
}

#[derive(Debug, Clone)]
struct Accumulator {
    prior: Moments,
    sq_error: Vec<Moments>,
    error: Vec<Moments>,
    unclipped: Vec<Moments>,
    clips: Vec<u64>,
    clipped_trials: u64,
}

impl Accumulator {
    fn new(n: usize) -> Self {
        Accumulator {
            prior: Moments::default(),
            sq_error: vec![Moments::default(); n],
            error: vec![Moments::default(); n],
            unclipped: vec![Moments::default(); n],
            clips: vec![0; n],
            clipped_trials: 0,
        }
    }

    fn push(&mut self, x0: f64, record: &TrialRecord) {
        self.prior.push((record.x_true - x0).powi(2));
        let mut clean = true;
        for k in 0..record.estimates.len() {
            self.sq_error[k].push(record.sq_errors[k]);
            self.error[k].push(record.x_true - record.estimates[k]);
            if record.clip_flags[k] {
                self.clips[k] += 1;
                clean = false;
            }
            if clean {
                self.unclipped[k].push(record.sq_errors[k]);
            }
        }
        if !clean {
            self.clipped_trials += 1;
        }
    }

    fn merge(&mut self, other: &Accumulator) {
        self.prior.merge(&other.prior);
        for k in 0..self.sq_error.len() {
            self.sq_error[k].merge(&other.sq_error[k]);
            self.error[k].merge(&other.error[k]);
            self.unclipped[k].merge(&other.unclipped[k]);
            self.clips[k] += other.clips[k];
        }
        self.clipped_trials += other.clipped_trials;
    }
}

/// How ensemble blocks are scheduled. Both produce identical results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

/// Runs `trials` independent transmissions with the default (parallel)
/// execution.
pub fn run_ensemble(config: &SystemConfig, trials: usize, seed: u64) -> Result<EnsembleStats> {
    run_ensemble_with(config, trials, seed, Execution::default())
}

pub fn run_ensemble_with(
    config: &SystemConfig,
    trials: usize,
    seed: u64,
    execution: Execution,
) -> Result<EnsembleStats> {
    if trials == 0 {
        return Err(Error::domain("ensemble needs at least one trial"));
    }
    let derived = crate::model::validate(config)?;
    let sim = Simulator::new(config, &derived)?;
    let n = sim.cycles();
    let blocks = trials.div_ceil(BLOCK_TRIALS);
    let run_block = |b: usize| {
        let mut acc = Accumulator::new(n);
        let end = ((b + 1) * BLOCK_TRIALS).min(trials);
        for trial in b * BLOCK_TRIALS..end {
            let mut rng = trial_stream(seed, trial as u64);
            acc.push(config.x0, &sim.trial(&mut rng));
        }
        acc
    };
    let partials: Vec<Accumulator> = match execution {
        Execution::Sequential => (0..blocks).map(run_block).collect(),
        Execution::Parallel => (0..blocks).into_par_iter().map(run_block).collect(),
    };
    let mut total = Accumulator::new(n);
    for part in &partials {
        total.merge(part);
    }
    let cycle_clips: Vec<ClipRate> = total
        .clips
        .iter()
        .map(|&events| ClipRate {
            events,
            opportunities: trials as u64,
        })
        .collect();
    Ok(EnsembleStats {
        trials,
        seed,
        prior_sq_error: total.prior.estimate(),
        mean_sq_error: total.sq_error.iter().map(Moments::estimate).collect(),
        mean_error: total.error.iter().map(Moments::estimate).collect(),
        unclipped_sq_error: total.unclipped.iter().map(Moments::estimate).collect(),
        clip_rate: ClipRate {
            events: total.clips.iter().sum(),
            opportunities: (trials * n) as u64,
        },
        cycle_clips,
        clipped_trials: total.clipped_trials,
    })
}

/// Acceptance bands for [`compare_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TolerancePolicy {
    /// Maximum `|z|` of the empirical MSE.
    pub z_max: f64,
    /// Extra allowance on the MSE, relative to the theoretical value, for
    /// the bias from clipping.
    pub relative_allowance: f64,
    /// Width in binomial standard deviations of the clip-rate band.
    pub clip_sigmas: f64,
}

impl TolerancePolicy {
    /// `|z| <= 4` plus `2 mu` relative allowance, clip rate within 4 sigma.
    pub fn for_mu(mu: f64) -> Self {
        TolerancePolicy {
            z_max: 4.0,
            relative_allowance: 2.0 * mu,
            clip_sigmas: 4.0,
        }
    }
}

/// Agreement between an ensemble and the theoretical trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub policy: TolerancePolicy,
    /// `(mse_k - P_k) / std_err_k` for cycles `1..=n`.
    pub z_scores: Vec<f64>,
    pub cycle_pass: Vec<bool>,
    pub max_abs_z: f64,
    pub mu: f64,
    pub clip_rate: f64,
    /// Half-width of the band around `mu`.
    pub clip_band: f64,
    pub clip_pass: bool,
    pub mse_pass: bool,
}

impl ComparisonReport {
    pub fn pass(&self) -> bool {
        self.mse_pass && self.clip_pass
    }
}

/// Compares with [`TolerancePolicy::for_mu`].
pub fn compare(stats: &EnsembleStats, trajectory: &MmseTrajectory, mu: f64) -> Result<ComparisonReport> {
    compare_with(stats, trajectory, mu, TolerancePolicy::for_mu(mu))
}

pub fn compare_with(
    stats: &EnsembleStats,
    trajectory: &MmseTrajectory,
    mu: f64,
    policy: TolerancePolicy,
) -> Result<ComparisonReport> {
    let n = stats.mean_sq_error.len();
    if trajectory.cycles() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            found: trajectory.cycles(),
        });
    }
    let mut z_scores = Vec::with_capacity(n);
    let mut cycle_pass = Vec::with_capacity(n);
    for (est, &p) in stats.mean_sq_error.iter().zip(&trajectory.p[1..]) {
        let diff = est.mean - p;
        let z = if est.std_err > 0.0 {
            diff / est.std_err
        } else if diff == 0.0 {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        };
        z_scores.push(z);
        cycle_pass.push(diff.abs() <= policy.z_max * est.std_err + policy.relative_allowance * p);
    }
    let max_abs_z = z_scores.iter().fold(0.0f64, |m, z| m.max(z.abs()));
    let clip_rate = stats.clip_rate.rate();
    let clip_band = stats.clip_rate.band(mu, policy.clip_sigmas);
    Ok(ComparisonReport {
        policy,
        mse_pass: cycle_pass.iter().all(|&ok| ok),
        z_scores,
        cycle_pass,
        max_abs_z,
        mu,
        clip_rate,
        clip_band,
        clip_pass: stats.clip_rate.opportunities == 0 || (clip_rate - mu).abs() <= clip_band,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;

    fn small() -> SystemConfig {
        SystemConfig {
            n_cycles: 4,
            ..SystemConfig::reference()
        }
    }

    #[test]
    fn zero_cycles_returns_prior() {
        let config = SystemConfig { n_cycles: 0, ..small() };
        let d = validate(&config).unwrap();
        let mut rng = trial_stream(3, 0);
        let rec = run_trial(&config, &d, &mut rng).unwrap();
        assert!(rec.estimates.is_empty());
        assert_eq!(rec.final_estimate(config.x0), config.x0);
        let stats = run_ensemble(&config, 20_000, 5).unwrap();
        assert!((stats.final_mse() - 1.0).abs() < 4.0 * stats.prior_sq_error.std_err);
        assert_eq!(stats.clip_rate.opportunities, 0);
    }

    #[test]
    fn record_lengths() {
        let config = small();
        let d = validate(&config).unwrap();
        let rec = run_trial(&config, &d, &mut trial_stream(1, 2)).unwrap();
        assert_eq!(rec.estimates.len(), 4);
        assert_eq!(rec.sq_errors.len(), 4);
        assert_eq!(rec.clip_flags.len(), 4);
        for (e, sq) in rec.estimates.iter().zip(&rec.sq_errors) {
            assert_eq!(*sq, (rec.x_true - e).powi(2));
        }
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let config = small();
        let d = validate(&config).unwrap();
        let a = run_trial(&config, &d, &mut trial_stream(9, 4)).unwrap();
        let b = run_trial(&config, &d, &mut trial_stream(9, 4)).unwrap();
        let c = run_trial(&config, &d, &mut trial_stream(9, 5)).unwrap();
        let e = run_trial(&config, &d, &mut trial_stream(10, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.x_true, c.x_true);
        assert_ne!(a.x_true, e.x_true);
    }

    #[test]
    fn ensemble_rejects_zero_trials() {
        assert!(run_ensemble(&small(), 0, 1).is_err());
    }

    #[test]
    fn moments_merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| ((i * 37) % 101) as f64 * 0.01).collect();
        let mut whole = Moments::default();
        xs.iter().for_each(|&x| whole.push(x));
        let mut left = Moments::default();
        let mut right = Moments::default();
        xs[..333].iter().for_each(|&x| left.push(x));
        xs[333..].iter().for_each(|&x| right.push(x));
        left.merge(&right);
        assert_eq!(left.count, whole.count);
        assert!((left.mean - whole.mean).abs() < 1e-14);
        assert!((left.m2 - whole.m2).abs() < 1e-10);
    }

    #[test]
    fn compare_checks_lengths() {
        let stats = run_ensemble(&small(), 100, 1).unwrap();
        let traj = MmseTrajectory { p: vec![1.0, 0.5] };
        assert!(matches!(
            compare(&stats, &traj, 0.01),
            Err(Error::LengthMismatch { expected: 4, found: 1 })
        ));
    }

    #[test]
    fn clip_band() {
        let c = ClipRate { events: 10, opportunities: 1000 };
        assert_eq!(c.rate(), 0.01);
        assert!((c.band(0.01, 4.0) - 4.0 * (0.0099f64 / 1000.0).sqrt()).abs() < 1e-15);
    }
}
