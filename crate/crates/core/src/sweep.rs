//! Experiment sweeps producing tabular results with reproducibility metadata.

use crate::analysis::{antennas_for_rate, ee_sweep, kappa_search, KappaResult};
use crate::config::{ExperimentConfig, OutputFormat};
use crate::error::{Error, Result};
use crate::estimation::EstimateMode;
use crate::rates::{asymptotic_rate, closed_form, mc_statistics, McSettings};
use crate::scenario::{build_scenario, db_to_linear, NetworkScenario};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

pub const TOOL_NAME: &str = "onebit-mimo";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

const BOTH: [EstimateMode; 2] = [EstimateMode::OneBit, EstimateMode::FullResolution];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepMetadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    /// Command-specific scalars (crossings, chosen array sizes, ...).
    pub extras: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub metadata: SweepMetadata,
    pub columns: Vec<String>,
    /// One row per sweep point; `None` where a value was not computed.
    pub rows: Vec<Vec<Option<f64>>>,
}

impl SweepResult {
    fn new(command: &str, config: &ExperimentConfig, columns: &[&str]) -> Self {
        Self {
            metadata: SweepMetadata {
                tool: TOOL_NAME.into(),
                version: TOOL_VERSION.into(),
                command: command.into(),
                config_hash: config.hash(),
                seed: config.mc.seed,
                config: config.clone(),
                extras: BTreeMap::new(),
            },
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i]).collect())
    }

    pub fn extra(&self, name: &str) -> Option<f64> {
        self.metadata.extras.get(name).copied().flatten()
    }

    /// CSV with `# key: value` metadata lines ahead of the header row, or a
    /// pretty-printed JSON document.
    pub fn render(&self, format: OutputFormat) -> Result<Vec<u8>> {
        match format {
            OutputFormat::Json => {
                let mut out = serde_json::to_vec_pretty(self).map_err(|e| Error::Output(e.to_string()))?;
                out.push(b'\n');
                Ok(out)
            }
            OutputFormat::Csv => {
                let m = &self.metadata;
                let mut out = Vec::new();
                let mut line = |k: &str, v: &str| writeln!(out, "# {k}: {v}").expect("write to Vec");
                line("tool", &format!("{} {}", m.tool, m.version));
                line("command", &m.command);
                line("seed", &m.seed.to_string());
                line("config_hash", &m.config_hash);
                line("config", &m.config.to_json());
                for (k, v) in &m.extras {
                    line(k, &fmt_cell(*v));
                }
                let mut w = csv::Writer::from_writer(out);
                let csv_err = |e: csv::Error| Error::Output(e.to_string());
                w.write_record(&self.columns).map_err(csv_err)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(|v| fmt_cell(*v))).map_err(csv_err)?;
                }
                w.into_inner().map_err(|e| Error::Output(e.to_string()))
            }
        }
    }

    /// Writes to `path`, or to stdout when `path` is `None`.
    pub fn write(&self, path: Option<&Path>, format: OutputFormat) -> Result<()> {
        let bytes = self.render(format)?;
        match path {
            Some(p) => std::fs::write(p, bytes).map_err(|e| Error::Output(format!("{}: {e}", p.display()))),
            None => std::io::stdout()
                .write_all(&bytes)
                .map_err(|e| Error::Output(e.to_string())),
        }
    }
}

fn fmt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn at_power(scenario: &NetworkScenario, pt_db: f64) -> Result<NetworkScenario> {
    scenario.with_transmit_power(db_to_linear(pt_db))
}

fn per_user(s: &NetworkScenario, mode: EstimateMode) -> Result<f64> {
    Ok(closed_form(s, mode)?.per_user())
}

/// Per-user sum rates versus transmit power. One Monte-Carlo run serves the
/// whole power grid because the accumulated statistics do not depend on it.
pub fn run_rate_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let base = build_scenario(config)?;
    let mut out = SweepResult::new(
        "rate-sweep",
        config,
        &["pt_db", "cf_one", "cf_fr", "mc_one", "mc_one_se", "mc_fr", "mc_fr_se"],
    );
    let mc = mc_statistics(&base, &McSettings::from(&config.mc), &BOTH)?;
    for &pt in &config.power.pt_db {
        let s = at_power(&base, pt)?;
        let p = s.constants.transmit_power;
        let (one, fr) = (mc[0].breakdown(p), mc[1].breakdown(p));
        out.rows.push(vec![
            Some(pt),
            Some(per_user(&s, EstimateMode::OneBit)?),
            Some(per_user(&s, EstimateMode::FullResolution)?),
            Some(one.per_user()),
            one.per_user_se(),
            Some(fr.per_user()),
            fr.per_user_se(),
        ]);
    }
    Ok(out)
}

/// Per-user sum rates versus array size at `analysis.antenna_pt_db`, with the
/// large-array limit and the fraction of it reached. Simulation covers array
/// sizes up to `mc.max_antennas`.
pub fn run_antenna_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let base = at_power(&build_scenario(config)?, config.analysis.antenna_pt_db)?;
    let mut out = SweepResult::new(
        "antenna-sweep",
        config,
        &["m", "cf_one", "cf_fr", "asymptote", "frac_one", "frac_fr", "mc_one", "mc_one_se", "mc_fr", "mc_fr_se"],
    );
    let limit = asymptotic_rate(&base).per_user();
    let settings = McSettings::from(&config.mc);
    let p = base.constants.transmit_power;
    for &m in &config.scenario.antenna_grid {
        let s = base.with_antennas(m)?;
        let one = per_user(&s, EstimateMode::OneBit)?;
        let fr = per_user(&s, EstimateMode::FullResolution)?;
        let mut row = vec![Some(m as f64), Some(one), Some(fr), Some(limit), Some(one / limit), Some(fr / limit)];
        if m <= config.mc.max_antennas {
            let mc = mc_statistics(&s, &settings, &BOTH)?;
            for stats in &mc {
                let b = stats.breakdown(p);
                row.extend([Some(b.per_user()), b.per_user_se()]);
            }
        } else {
            row.extend([None; 4]);
        }
        out.rows.push(row);
    }
    let target = config.analysis.rate_target;
    out.metadata.extras.insert("rate_target".into(), Some(target));
    out.metadata
        .extras
        .insert("m_one_at_target".into(), antennas_for_rate(&base, target, EstimateMode::OneBit)?);
    out.metadata.extras.insert(
        "m_conv_at_target".into(),
        antennas_for_rate(&base, target, EstimateMode::FullResolution)?,
    );
    Ok(out)
}

/// Antenna ratio for every (`analysis.m_conv`, `analysis.kappa_pt_db`) pair.
/// With `analysis.kappa_mc_verify`, points whose arrays fit under
/// `mc.max_antennas` are also simulated at the rounded one-bit array size.
pub fn run_kappa(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let base = build_scenario(config)?;
    let a = &config.analysis;
    let mut out = SweepResult::new(
        "kappa",
        config,
        &[
            "m_conv", "pt_db", "kappa", "gap", "m_one", "mc_one", "mc_one_se", "mc_conv", "mc_conv_se",
        ],
    );
    let points: Vec<(f64, f64)> = a
        .m_conv
        .iter()
        .flat_map(|&m| a.kappa_pt_db.iter().map(move |&pt| (m, pt)))
        .collect();
    let results: Vec<KappaResult> = points
        .par_iter()
        .map(|&(m, pt)| kappa_search(&at_power(&base, pt)?, m, a.epsilon))
        .collect::<Result<_>>()?;
    let settings = McSettings::from(&config.mc);
    for (&(m, pt), r) in points.iter().zip(&results) {
        let mut row = vec![Some(m), Some(pt), Some(r.kappa), Some(r.achieved_gap), Some(r.m_one)];
        let m_one = r.m_one_rounded as usize;
        let simulate = a.kappa_mc_verify && m.fract() == 0.0 && m_one <= config.mc.max_antennas;
        if simulate {
            let s = at_power(&base, pt)?;
            let p = s.constants.transmit_power;
            let one = mc_statistics(&s.with_antennas(m_one)?, &settings, &[EstimateMode::OneBit])?;
            let fr = mc_statistics(&s.with_antennas(m as usize)?, &settings, &[EstimateMode::FullResolution])?;
            for stats in [&one[0], &fr[0]] {
                let b = stats.breakdown(p);
                row.extend([Some(b.sum_rate), b.sum_rate_se]);
            }
        } else {
            row.extend([None; 4]);
        }
        out.rows.push(row);
    }
    Ok(out)
}

/// Energy efficiency of both architectures versus sampling frequency at
/// `analysis.ee_pt_db`, with the one-bit array sized to match the
/// conventional sum rate.
pub fn run_ee(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let scenario = at_power(&build_scenario(config)?, config.analysis.ee_pt_db)?;
    let sweep = ee_sweep(&scenario, &config.analysis)?;
    let mut out = SweepResult::new("ee", config, &["fs_mhz", "ee_onebit", "ee_fr"]);
    out.rows = sweep
        .rows
        .iter()
        .map(|r| vec![Some(r.fs_mhz), Some(r.ee_onebit), Some(r.ee_fr)])
        .collect();
    let x = &mut out.metadata.extras;
    x.insert("kappa".into(), Some(sweep.kappa.kappa));
    x.insert("m_conv".into(), Some(sweep.m_conv));
    x.insert("m_one".into(), Some(sweep.m_one));
    x.insert("sum_rate_conv".into(), Some(sweep.sum_rate_conv));
    x.insert("sum_rate_one".into(), Some(sweep.sum_rate_one));
    x.insert("crossover_mhz".into(), sweep.crossover_mhz);
    Ok(out)
}
