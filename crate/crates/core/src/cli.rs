//! Table-producing commands behind the `afcs` binary.
//!
//! Every command returns an [`OutputTable`] whose metadata echoes the full
//! configuration plus everything else needed to regenerate it. Reals are
//! always written with 17 significant digits so output is byte-stable.

use crate::analysis::{
    channel_capacity, efficiency_point, mmse_closed_form, output_bit_rate, output_rate_closed_form,
    shannon_boundary, threshold_cycles, Regime, Threshold,
};
use crate::error::{Error, Result};
use crate::estimator::mmse_trajectory;
use crate::model::{fmt_real, validate, SystemConfig, CONFIG_KEYS};
use crate::montecarlo::{compare, run_ensemble_with, ComparisonReport, Execution, RNG_DESCRIPTION};
use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::str::FromStr;

pub const TOOL_VERSION: &str = concat!("afcs ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Real(f64),
    Text(String),
}

impl Cell {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Cell::Int(i) => Some(*i as f64),
            Cell::Real(x) => Some(*x),
            Cell::Text(_) => None,
        }
    }

    fn csv(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Real(x) => fmt_real(*x),
            Cell::Text(s) => s.clone(),
        }
    }

    fn json(&self) -> String {
        match self {
            Cell::Int(i) => i.to_string(),
            Cell::Real(x) if x.is_finite() => fmt_real(*x),
            Cell::Real(_) => "null".to_string(),
            Cell::Text(s) => json_string(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Real(x)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<Regime> for Cell {
    fn from(r: Regime) -> Self {
        Cell::Text(r.as_str().to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format `{other}` (expected csv or json)")),
        }
    }
}

/// A self-describing result table.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputTable {
    pub schema: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
    /// Ordered `(key, value)` pairs.
    pub metadata: Vec<(String, String)>,
}

impl OutputTable {
    fn new(command: &str, config: &SystemConfig, schema: &[&str]) -> Self {
        let mut metadata = vec![
            ("tool".to_string(), TOOL_VERSION.to_string()),
            ("command".to_string(), command.to_string()),
        ];
        metadata.extend(config.to_pairs().into_iter().map(|(k, v)| (k.to_string(), v)));
        OutputTable {
            schema: schema.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            metadata,
        }
    }

    fn meta(&mut self, key: &str, value: impl Into<String>) {
        self.metadata.push((key.to_string(), value.into()));
    }

    fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.schema.len(), "row width must match schema");
        self.rows.push(row);
    }

    pub fn metadata_value(&self, key: &str) -> Option<&str> {
        self.metadata
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Numeric values of a column; text cells become NaN.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.schema.iter().position(|s| s == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| r[idx].as_f64().unwrap_or(f64::NAN))
                .collect(),
        )
    }

    pub fn text_column(&self, name: &str) -> Option<Vec<String>> {
        let idx = self.schema.iter().position(|s| s == name)?;
        Some(self.rows.iter().map(|r| r[idx].csv()).collect())
    }

    /// The configuration echoed in the metadata.
    pub fn echoed_config(&self) -> Result<SystemConfig> {
        SystemConfig::from_pairs(
            self.metadata
                .iter()
                .filter(|(k, _)| CONFIG_KEYS.contains(&k.as_str()))
                .map(|(k, v)| (k, v)),
        )
    }

    /// `# key = value` metadata lines, a header line, then one line per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.metadata {
            let _ = writeln!(out, "# {k} = {v}");
        }
        let _ = writeln!(out, "{}", self.schema.join(","));
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(Cell::csv).collect();
            let _ = writeln!(out, "{}", cells.join(","));
        }
        out
    }

    pub fn to_json(&self) -> String {
        let meta: Vec<String> = self
            .metadata
            .iter()
            .map(|(k, v)| format!("{}:{}", json_string(k), json_string(v)))
            .collect();
        let schema: Vec<String> = self.schema.iter().map(|s| json_string(s)).collect();
        let rows: Vec<String> = self
            .rows
            .iter()
            .map(|r| format!("[{}]", r.iter().map(Cell::json).collect::<Vec<_>>().join(",")))
            .collect();
        format!(
            "{{\"metadata\":{{{}}},\"schema\":[{}],\"rows\":[\n{}\n]}}\n",
            meta.join(","),
            schema.join(","),
            rows.join(",\n")
        )
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(),
            Format::Json => self.to_json(),
        }
    }
}

fn json_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings always serialize")
}

fn threshold_for(config: &SystemConfig, q_sq: f64) -> Result<Threshold> {
    threshold_cycles(config.sigma0_sq, config.sigma_v_sq, q_sq)
}

/// Exact and closed-form MMSE for cycles `0..=n`.
pub fn cmd_theory(config: &SystemConfig) -> Result<OutputTable> {
    let d = validate(config)?;
    let n_star = threshold_for(config, d.q_sq)?;
    let traj = mmse_trajectory(&d, config.sigma0_sq, config.sigma_v_sq, config.n_cycles)?;
    let mut table = OutputTable::new("theory", config, &["k", "p_exact", "p_closed_form", "regime"]);
    table.meta("alpha", fmt_real(d.alpha));
    table.meta("q_sq", fmt_real(d.q_sq));
    table.meta("w_sign", fmt_real(d.w_sign));
    table.meta("n_star", fmt_real(n_star.value()));
    table.meta("capacity", fmt_real(channel_capacity(config.f0, d.q_sq)));
    for (k, &p) in traj.p.iter().enumerate() {
        let closed = mmse_closed_form(k, config.sigma0_sq, config.sigma_v_sq, d.q_sq, n_star);
        table.push(vec![k.into(), p.into(), closed.into(), n_star.regime(k).into()]);
    }
    Ok(table)
}

/// Ensemble simulation compared against the theoretical trajectory.
pub fn cmd_simulate(
    config: &SystemConfig,
    trials: usize,
    seed: u64,
    execution: Execution,
) -> Result<(OutputTable, ComparisonReport)> {
    let d = validate(config)?;
    if trials == 0 {
        return Err(Error::domain("trials must be at least 1"));
    }
    let traj = mmse_trajectory(&d, config.sigma0_sq, config.sigma_v_sq, config.n_cycles)?;
    let stats = run_ensemble_with(config, trials, seed, execution)?;
    let report = compare(&stats, &traj, config.mu)?;
    let mut table = OutputTable::new(
        "simulate",
        config,
        &[
            "k",
            "empirical_mse",
            "std_err",
            "theoretical_p",
            "z_score",
            "within_tolerance",
            "mean_error",
            "mean_error_std_err",
            "clip_rate",
            "unclipped_mse",
        ],
    );
    table.meta("seed", seed.to_string());
    table.meta("trials", trials.to_string());
    table.meta("rng", RNG_DESCRIPTION);
    table.meta("alpha", fmt_real(d.alpha));
    table.meta("q_sq", fmt_real(d.q_sq));
    table.meta("z_max", fmt_real(report.policy.z_max));
    table.meta("relative_allowance", fmt_real(report.policy.relative_allowance));
    table.meta("clip_sigmas", fmt_real(report.policy.clip_sigmas));
    table.meta("clip_events", stats.clip_rate.events.to_string());
    table.meta("clip_opportunities", stats.clip_rate.opportunities.to_string());
    table.meta("clip_rate", fmt_real(report.clip_rate));
    table.meta("clip_band", fmt_real(report.clip_band));
    table.meta("clipped_trials", stats.clipped_trials.to_string());
    table.meta("max_abs_z", fmt_real(report.max_abs_z));
    table.meta("mse_pass", report.mse_pass.to_string());
    table.meta("clip_pass", report.clip_pass.to_string());
    table.meta("pass", report.pass().to_string());

    let prior = stats.prior_sq_error;
    let z0 = if prior.std_err > 0.0 {
        (prior.mean - config.sigma0_sq) / prior.std_err
    } else {
        0.0
    };
    table.push(vec![
        0usize.into(),
        prior.mean.into(),
        prior.std_err.into(),
        config.sigma0_sq.into(),
        z0.into(),
        Cell::Int(1),
        0.0.into(),
        0.0.into(),
        0.0.into(),
        prior.mean.into(),
    ]);
    for k in 0..config.n_cycles {
        let mse = stats.mean_sq_error[k];
        let bias = stats.mean_error[k];
        table.push(vec![
            (k + 1).into(),
            mse.mean.into(),
            mse.std_err.into(),
            traj.p[k + 1].into(),
            report.z_scores[k].into(),
            Cell::Int(report.cycle_pass[k] as i64),
            bias.mean.into(),
            bias.std_err.into(),
            stats.cycle_clips[k].rate().into(),
            stats.unclipped_sq_error[k].mean.into(),
        ]);
    }
    Ok((table, report))
}

fn check_range(n_range: &RangeInclusive<usize>) -> Result<()> {
    if n_range.is_empty() || *n_range.start() == 0 {
        return Err(Error::domain(format!(
            "cycle range must be nonempty and start at 1 or later, got {}..={}",
            n_range.start(),
            n_range.end()
        )));
    }
    Ok(())
}

/// Output bit-rate against the number of cycles.
pub fn cmd_sweep(config: &SystemConfig, n_range: RangeInclusive<usize>) -> Result<OutputTable> {
    check_range(&n_range)?;
    let d = validate(config)?;
    let n_star = threshold_for(config, d.q_sq)?;
    let capacity = channel_capacity(config.f0, d.q_sq);
    let traj = mmse_trajectory(&d, config.sigma0_sq, config.sigma_v_sq, *n_range.end())?;
    let mut table = OutputTable::new(
        "sweep",
        config,
        &["n", "p_n", "output_rate", "closed_form_rate", "regime"],
    );
    table.meta("n_range", format!("{}:{}", n_range.start(), n_range.end()));
    table.meta("q_sq", fmt_real(d.q_sq));
    table.meta("n_star", fmt_real(n_star.value()));
    table.meta("capacity", fmt_real(capacity));
    for n in n_range {
        let p_n = traj.p[n];
        let rate = output_bit_rate(n, config.f0, config.sigma0_sq, p_n)?;
        let closed = output_rate_closed_form(n, n_star, capacity, config.f0);
        table.push(vec![n.into(), p_n.into(), rate.into(), closed.into(), n_star.regime(n).into()]);
    }
    Ok(table)
}

/// Points of the power-bandwidth efficiency plane against the number of cycles.
pub fn cmd_efficiency(config: &SystemConfig, n_range: RangeInclusive<usize>) -> Result<OutputTable> {
    check_range(&n_range)?;
    let d = validate(config)?;
    let n_star = threshold_for(config, d.q_sq)?;
    let mut table = OutputTable::new(
        "efficiency",
        config,
        &["n", "spectral_eff", "ebit_over_n", "boundary", "gap", "regime"],
    );
    table.meta("n_range", format!("{}:{}", n_range.start(), n_range.end()));
    table.meta("q_sq", fmt_real(d.q_sq));
    table.meta("n_star", fmt_real(n_star.value()));
    for n in n_range {
        let point = efficiency_point(&d, config.sigma0_sq, config.sigma_v_sq, n, config.f0)?;
        table.push(vec![
            n.into(),
            point.spectral_eff.into(),
            point.ebit_over_n.into(),
            shannon_boundary(point.spectral_eff).into(),
            point.boundary_gap.into(),
            n_star.regime(n).into(),
        ]);
    }
    Ok(table)
}

/// Parses `START:END` (inclusive) or a single cycle count.
pub fn parse_range(s: &str) -> std::result::Result<RangeInclusive<usize>, String> {
    let parse = |t: &str| {
        t.trim()
            .parse::<usize>()
            .map_err(|_| format!("`{t}` is not a cycle count"))
    };
    match s.split_once(':') {
        Some((a, b)) => Ok(parse(a)?..=parse(b)?),
        None => {
            let n = parse(s)?;
            Ok(n..=n)
        }
    }
}
