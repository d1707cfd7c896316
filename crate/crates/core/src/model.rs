//! System configuration, validation and the value types shared by every
//! other module.
//!
//! Configurations are stored as flat `key = value` text with `#` comments.
//! Keys are exactly the field names of [`SystemConfig`].

use crate::error::{Error, Result};
use crate::modulator::saturation_factor;
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Tolerance on `f0 / f_base` being an integer.
const CYCLE_RATIO_TOL: f64 = 1e-9;

/// Configuration keys, in canonical output order.
pub const CONFIG_KEYS: [&str; 10] = [
    "x0",
    "sigma0_sq",
    "sigma_v_sq",
    "a0",
    "gamma",
    "n_zeta",
    "f0",
    "f_base",
    "mu",
    "n_cycles",
];

/// Physical and statistical parameters of one feedback system.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemConfig {
    /// Prior mean of the input samples.
    pub x0: f64,
    /// Prior variance of the input samples.
    pub sigma0_sq: f64,
    /// Variance of the noise acting at the modulator input (feedback errors
    /// plus internal noise).
    pub sigma_v_sq: f64,
    /// Transmitter amplitude.
    pub a0: f64,
    /// Forward-channel gain, with demodulation constants absorbed.
    pub gamma: f64,
    /// Forward-channel noise spectral power density.
    pub n_zeta: f64,
    /// Forward-channel half-bandwidth in Hz.
    pub f0: f64,
    /// Optional baseband limit of the input signal in Hz. When present the
    /// cycle count must equal `f0 / f_base`.
    pub f_base: Option<f64>,
    /// Permissible over-modulation probability.
    pub mu: f64,
    /// Transmission cycles per sample.
    pub n_cycles: usize,
}

/// Constants derived from a validated [`SystemConfig`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedParams {
    /// Received amplitude `a0 * gamma`.
    pub a: f64,
    /// Forward noise variance `n_zeta * f0`.
    pub sigma_zeta_sq: f64,
    /// Saturation factor: the two-sided standard normal quantile at `mu`.
    pub alpha: f64,
    /// SNR at the analogue receiver output.
    pub q_sq: f64,
    /// Power of the informative component of the received signal, `(a / alpha)^2`.
    pub w_sign: f64,
}

/// Modulator adaptation for one cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulatorState {
    /// Position of the transfer characteristic.
    pub b_k: f64,
    /// Modulator gain, always positive and finite.
    pub m_k: f64,
    /// Cycle index, starting at 1.
    pub cycle: usize,
}

/// Base-station estimate after `cycle` cycles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorState {
    pub x_hat: f64,
    /// Theoretical MMSE of `x_hat`.
    pub p_k: f64,
    pub cycle: usize,
}

impl EstimatorState {
    /// State before the first cycle: the prior mean with the prior variance.
    pub fn prior(x0: f64, sigma0_sq: f64) -> Self {
        EstimatorState {
            x_hat: x0,
            p_k: sigma0_sq,
            cycle: 0,
        }
    }
}

/// A point of the power-bandwidth efficiency plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EfficiencyPoint {
    /// Bandwidth efficiency `R / F0` in bit/s/Hz.
    pub spectral_eff: f64,
    /// Normalised energy per bit `E_bit / N_zeta`.
    pub ebit_over_n: f64,
    /// `ebit_over_n` minus the Shannon boundary at `spectral_eff`.
    pub boundary_gap: f64,
}

impl SystemConfig {
    /// Reference system: unit prior variance, `sigma_v_sq = 1e-4`, `mu = 0.01`,
    /// unit noise density and bandwidth, twelve cycles, and `a0` chosen so
    /// that the receiver SNR is 3.
    pub fn reference() -> Self {
        SystemConfig {
            x0: 0.0,
            sigma0_sq: 1.0,
            sigma_v_sq: 1e-4,
            a0: 1.0,
            gamma: 1.0,
            n_zeta: 1.0,
            f0: 1.0,
            f_base: None,
            mu: 0.01,
            n_cycles: 12,
        }
        .with_receiver_snr(3.0)
        .expect("reference parameters are valid")
    }

    /// Returns a copy whose transmitter amplitude `a0` gives receiver SNR `q_sq`
    /// for the current `gamma`, `mu`, `n_zeta` and `f0`.
    pub fn with_receiver_snr(mut self, q_sq: f64) -> Result<Self> {
        if !(q_sq > 0.0 && q_sq.is_finite()) {
            return Err(Error::domain(format!("receiver SNR must be positive, got {q_sq}")));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::config("gamma", "must be positive to solve for a0"));
        }
        let alpha = saturation_factor(self.mu)?;
        self.a0 = alpha * (q_sq * self.n_zeta * self.f0).sqrt() / self.gamma;
        Ok(self)
    }

    /// Duration of one transmission cycle, `1 / (2 f0)`.
    pub fn cycle_duration(&self) -> f64 {
        0.5 / self.f0
    }

    /// Duration of one complete sample transmission.
    pub fn sample_period(&self) -> f64 {
        self.n_cycles as f64 * self.cycle_duration()
    }

    /// Parses `key = value` text. Lines starting with `#` and blank lines are
    /// ignored, trailing `#` comments are stripped.
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_pairs(parse_pairs(text)?)
    }

    /// Builds a config from `(key, value)` pairs. Later pairs override earlier.
    ///
    /// `n_cycles` may be omitted when `f_base` is given; it is then
    /// `round(f0 / f_base)`.
    pub fn from_pairs<K, V, I>(pairs: I) -> Result<Self>
    where
        K: AsRef<str>,
        V: AsRef<str>,
        I: IntoIterator<Item = (K, V)>,
    {
        let mut map: BTreeMap<&'static str, String> = BTreeMap::new();
        for (k, v) in pairs {
            let key = canonical_key(k.as_ref())?;
            map.insert(key, v.as_ref().trim().to_string());
        }
        let real = |key: &'static str| -> Result<f64> {
            let raw = map.get(key).ok_or_else(|| Error::MissingKey(key.to_string()))?;
            raw.parse::<f64>()
                .map_err(|_| Error::config(key, format!("`{raw}` is not a number")))
        };
        let f_base = if map.contains_key("f_base") {
            Some(real("f_base")?)
        } else {
            None
        };
        let f0 = real("f0")?;
        let n_cycles = match map.get("n_cycles") {
            Some(raw) => raw
                .parse::<usize>()
                .map_err(|_| Error::config("n_cycles", format!("`{raw}` is not a nonnegative integer")))?,
            None => match f_base {
                Some(fb) if fb > 0.0 && (f0 / fb).is_finite() => (f0 / fb).round() as usize,
                Some(_) => return Err(Error::config("f_base", "must be positive")),
                None => return Err(Error::MissingKey("n_cycles".to_string())),
            },
        };
        Ok(SystemConfig {
            x0: real("x0")?,
            sigma0_sq: real("sigma0_sq")?,
            sigma_v_sq: real("sigma_v_sq")?,
            a0: real("a0")?,
            gamma: real("gamma")?,
            n_zeta: real("n_zeta")?,
            f0,
            f_base,
            mu: real("mu")?,
            n_cycles,
        })
    }

    /// Key-value pairs in canonical order, with every real printed with 17
    /// significant digits so that parsing them back is exact.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = vec![
            ("x0", fmt_real(self.x0)),
            ("sigma0_sq", fmt_real(self.sigma0_sq)),
            ("sigma_v_sq", fmt_real(self.sigma_v_sq)),
            ("a0", fmt_real(self.a0)),
            ("gamma", fmt_real(self.gamma)),
            ("n_zeta", fmt_real(self.n_zeta)),
            ("f0", fmt_real(self.f0)),
        ];
        if let Some(fb) = self.f_base {
            out.push(("f_base", fmt_real(fb)));
        }
        out.push(("mu", fmt_real(self.mu)));
        out.push(("n_cycles", self.n_cycles.to_string()));
        out
    }

    /// Config file text accepted by [`SystemConfig::parse`].
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.to_pairs() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// Splits config text into `(key, value)` pairs without interpreting values.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: idx + 1,
            reason: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim();
        canonical_key(key)?;
        pairs.push((key.to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

fn canonical_key(key: &str) -> Result<&'static str> {
    CONFIG_KEYS
        .iter()
        .copied()
        .find(|k| *k == key)
        .ok_or_else(|| Error::UnknownKey(key.to_string()))
}

/// Fixed 17-significant-digit formatting used by every serialized real.
pub fn fmt_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

/// Checks every invariant of `config` and computes the derived constants.
pub fn validate(config: &SystemConfig) -> Result<DerivedParams> {
    let finite = [
        ("x0", config.x0),
        ("sigma0_sq", config.sigma0_sq),
        ("sigma_v_sq", config.sigma_v_sq),
        ("a0", config.a0),
        ("gamma", config.gamma),
        ("n_zeta", config.n_zeta),
        ("f0", config.f0),
        ("mu", config.mu),
    ];
    for (field, value) in finite {
        if !value.is_finite() {
            return Err(Error::config(field, format!("must be finite, got {value}")));
        }
    }
    if !(config.sigma0_sq > 0.0) {
        return Err(Error::config("sigma0_sq", "must be positive"));
    }
    if !(config.sigma_v_sq >= 0.0) {
        return Err(Error::config("sigma_v_sq", "must be nonnegative"));
    }
    if !(config.n_zeta > 0.0) {
        return Err(Error::config("n_zeta", "must be positive"));
    }
    if !(config.f0 > 0.0) {
        return Err(Error::config("f0", "must be positive"));
    }
    if !(config.mu > 0.0 && config.mu < 0.5) {
        return Err(Error::config("mu", format!("must lie in (0, 0.5), got {}", config.mu)));
    }
    let a = config.a0 * config.gamma;
    if !(a > 0.0) {
        return Err(Error::config("a0", "a0 * gamma must be positive"));
    }
    if let Some(fb) = config.f_base {
        if !(fb > 0.0 && fb.is_finite()) {
            return Err(Error::config("f_base", "must be positive and finite"));
        }
        let ratio = config.f0 / fb;
        let nearest = ratio.round();
        if (ratio - nearest).abs() > CYCLE_RATIO_TOL {
            return Err(Error::config(
                "f_base",
                format!("f0 / f_base = {ratio} is not an integer cycle count"),
            ));
        }
        if nearest as usize != config.n_cycles {
            return Err(Error::config(
                "n_cycles",
                format!("{} disagrees with f0 / f_base = {nearest}", config.n_cycles),
            ));
        }
    }
    let sigma_zeta_sq = config.n_zeta * config.f0;
    if !(sigma_zeta_sq > 0.0 && sigma_zeta_sq.is_finite()) {
        return Err(Error::config(
            "n_zeta",
            "forward noise variance n_zeta * f0 must be positive and finite",
        ));
    }
    let alpha = saturation_factor(config.mu)?;
    let w_sign = (a / alpha).powi(2);
    Ok(DerivedParams {
        a,
        sigma_zeta_sq,
        alpha,
        q_sq: w_sign / sigma_zeta_sq,
        w_sign,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normal;
    use proptest::prelude::*;

    fn unit_config() -> SystemConfig {
        SystemConfig {
            x0: 0.0,
            sigma0_sq: 1.0,
            sigma_v_sq: 1e-4,
            a0: 2.0,
            gamma: 1.0,
            n_zeta: 1.0,
            f0: 1.0,
            f_base: None,
            mu: 0.01,
            n_cycles: 10,
        }
    }

    #[test]
    fn alpha_two_gives_unit_snr() {
        // mu such that alpha = 2 exactly
        let mu = normal::two_sided_tail(2.0);
        let config = SystemConfig { mu, ..unit_config() };
        let d = validate(&config).unwrap();
        assert_eq!(d.a, 2.0);
        assert_eq!(d.sigma_zeta_sq, 1.0);
        assert!((d.alpha - 2.0).abs() < 1e-12);
        assert!((d.q_sq - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mu_out_of_range() {
        let config = SystemConfig { mu: 0.6, ..unit_config() };
        match validate(&config) {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "mu"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn reference_like_values() {
        let d = validate(&unit_config()).unwrap();
        assert!((d.alpha - 2.5758).abs() < 1e-4);
        assert!((d.q_sq - 0.6029).abs() < 1e-4);
    }

    #[test]
    fn reference_has_q_sq_three() {
        let d = validate(&SystemConfig::reference()).unwrap();
        assert!((d.q_sq - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_each_field() {
        let cases: Vec<(&str, SystemConfig)> = vec![
            ("sigma0_sq", SystemConfig { sigma0_sq: 0.0, ..unit_config() }),
            ("sigma_v_sq", SystemConfig { sigma_v_sq: -1.0, ..unit_config() }),
            ("n_zeta", SystemConfig { n_zeta: 0.0, ..unit_config() }),
            ("f0", SystemConfig { f0: -1.0, ..unit_config() }),
            ("a0", SystemConfig { a0: -2.0, ..unit_config() }),
            ("mu", SystemConfig { mu: 0.0, ..unit_config() }),
            ("x0", SystemConfig { x0: f64::NAN, ..unit_config() }),
        ];
        for (field, config) in cases {
            match validate(&config) {
                Err(Error::InvalidConfig { field: f, .. }) => assert_eq!(f, field),
                other => panic!("{field}: unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn underflowing_forward_noise_rejected() {
        let config = SystemConfig { n_zeta: 1e-200, f0: 1e-200, ..unit_config() };
        assert!(matches!(validate(&config), Err(Error::InvalidConfig { .. })));
    }

    #[test]
    fn f_base_must_divide_f0() {
        let ok = SystemConfig { f0: 1000.0, f_base: Some(100.0), ..unit_config() };
        assert!(validate(&ok).is_ok());
        let fractional = SystemConfig { f0: 1000.0, f_base: Some(300.0), ..unit_config() };
        assert!(validate(&fractional).is_err());
        let disagree = SystemConfig { f0: 1000.0, f_base: Some(200.0), ..unit_config() };
        match validate(&disagree) {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "n_cycles"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_derives_cycles_from_bandwidths() {
        let text = "# bandwidths\nx0 = 0\nsigma0_sq = 1\nsigma_v_sq = 0\na0 = 2 # amplitude\n\
                    gamma = 1\nn_zeta = 1\nf0 = 4000\nf_base = 500\nmu = 0.01\n";
        let config = SystemConfig::parse(text).unwrap();
        assert_eq!(config.n_cycles, 8);
        assert_eq!(config.a0, 2.0);
        validate(&config).unwrap();
    }

    #[test]
    fn parse_errors_name_the_key() {
        let text = "x0 = 0\nbogus = 1\n";
        assert_eq!(SystemConfig::parse(text), Err(Error::UnknownKey("bogus".into())));
        let text = "x0 = 0\n";
        assert!(matches!(SystemConfig::parse(text), Err(Error::MissingKey(_))));
        let text = "x0 0\n";
        assert!(matches!(SystemConfig::parse(text), Err(Error::Parse { line: 1, .. })));
        let mut text = unit_config().to_config_string();
        text = text.replace("mu = 1.0000000000000000e-2", "mu = abc");
        match SystemConfig::parse(&text) {
            Err(Error::InvalidConfig { field, .. }) => assert_eq!(field, "mu"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn later_pairs_override() {
        let mut pairs = SystemConfig::reference()
            .to_pairs()
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect::<Vec<_>>();
        pairs.push(("n_cycles".into(), "30".into()));
        assert_eq!(SystemConfig::from_pairs(pairs).unwrap().n_cycles, 30);
    }

    proptest! {
        #[test]
        fn config_text_round_trip(
            x0 in -10.0..10.0f64,
            s0 in 1e-3..1e3f64,
            sv in 0.0..1.0f64,
            a0 in 1e-2..1e2f64,
            mu in 1e-4..0.49f64,
            n in 0usize..100,
        ) {
            let config = SystemConfig { x0, sigma0_sq: s0, sigma_v_sq: sv, a0, mu, n_cycles: n, ..unit_config() };
            prop_assert_eq!(SystemConfig::parse(&config.to_config_string()).unwrap(), config);
        }

        #[test]
        fn received_power_identity(
            a0 in 1e-3..1e3f64,
            gamma in 1e-2..10.0f64,
            n_zeta in 1e-6..1e2f64,
            f0 in 1e-1..1e6f64,
            mu in 1e-6..0.49f64,
        ) {
            let config = SystemConfig { a0, gamma, n_zeta, f0, mu, ..unit_config() };
            let d = validate(&config).unwrap();
            let again = validate(&config).unwrap();
            prop_assert_eq!(d, again);
            prop_assert!(d.alpha > 0.0 && d.q_sq > 0.0);
            prop_assert!(((d.w_sign * d.alpha * d.alpha - d.a * d.a) / (d.a * d.a)).abs() < 1e-12);
            prop_assert!(((d.w_sign - d.q_sq * d.sigma_zeta_sq) / d.w_sign).abs() < 1e-12);
        }
    }
}
