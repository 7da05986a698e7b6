//! Experiment configuration.
//!
//! A JSON document with six blocks (`scenario`, `power`, `mc`, `analysis`,
//! `validation`, `output`). Every field has a default; an empty object `{}` reproduces the
//! reference four-cell setup. Unknown fields are rejected. dB and dBm values
//! appear only here and are converted to linear units when a
//! [`NetworkScenario`](crate::scenario::NetworkScenario) is built.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub power: PowerConfig,
    pub mc: McConfig,
    pub analysis: AnalysisConfig,
    pub validation: ValidationConfig,
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioConfig::default(),
            power: PowerConfig::default(),
            mc: McConfig::default(),
            analysis: AnalysisConfig::default(),
            validation: ValidationConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlacementMode {
    /// `K` users at angles `offset + 2πk/K` on a circle around each BS.
    EquallySpacedCircle,
    /// `K` users at seeded uniformly random angles on the circle.
    RandomCircle,
    /// User positions given in `scenario.user_positions`.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub cells: usize,
    pub antennas: usize,
    pub users: usize,
    /// BS coordinates in metres. Defaults to the first `cells` corners of the
    /// 525 m square grid.
    pub bs_positions: Option<Vec<[f64; 3]>>,
    pub placement: PlacementMode,
    pub circle_radius: f64,
    pub angular_offset_deg: f64,
    pub user_positions: Option<Vec<Vec<[f64; 3]>>>,
    pub alpha: f64,
    pub pathloss_const: f64,
    /// Explicit `beta[j][l][k]` (BS `j` to user `k` of cell `l`); bypasses geometry.
    pub beta: Option<Vec<Vec<Vec<f64>>>>,
    /// Antenna counts swept by `antenna-sweep`.
    pub antenna_grid: Vec<usize>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            cells: 4,
            antennas: 128,
            users: 8,
            bs_positions: None,
            placement: PlacementMode::EquallySpacedCircle,
            circle_radius: 250.0,
            angular_offset_deg: 0.0,
            user_positions: None,
            alpha: 3.0,
            pathloss_const: 1e-3,
            beta: None,
            antenna_grid: vec![50, 100, 200, 300, 400, 600, 800],
        }
    }
}

/// Uplink pilot SNR rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PilotSnr {
    /// `rho_p = 1 / sigma2` (sigma2 in watts).
    InverseNoise,
    Db(f64),
    Linear(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    /// Downlink transmit powers in dB relative to 1 W.
    pub pt_db: Vec<f64>,
    pub sigma2_dbm: f64,
    pub rho_p: PilotSnr,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self {
            pt_db: (-15..=10).map(|i| 2.0 * i as f64).collect(),
            sigma2_dbm: -80.0,
            rho_p: PilotSnr::InverseNoise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SymbolAlphabet {
    Gaussian,
    Qpsk,
}

/// Which Bussgang gain the Monte-Carlo effective channel uses at the transmitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransmitGainMode {
    /// The scalar large-system gain `sqrt(2K(c-1)^2 / (pi zeta_j))`.
    DeterministicEquivalent,
    /// `sqrt(2/pi) diag(W W^H)^{-1/2}` computed from each precoder draw.
    PerRealization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McConfig {
    pub trials: usize,
    pub symbol_draws: usize,
    pub seed: u64,
    /// Trials are reduced in this many contiguous batches; batch-level
    /// jackknife gives the reported standard errors.
    pub batches: usize,
    pub symbols: SymbolAlphabet,
    pub transmit_gain: TransmitGainMode,
    pub condition_bound: f64,
    pub redraw_budget: u32,
    /// Antenna sweeps skip Monte-Carlo above this many antennas.
    pub max_antennas: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            trials: 2000,
            symbol_draws: 200,
            seed: 1,
            batches: 20,
            symbols: SymbolAlphabet::Gaussian,
            transmit_gain: TransmitGainMode::DeterministicEquivalent,
            condition_bound: 1e10,
            redraw_budget: 8,
            max_antennas: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Sum-rate gap tolerance of the antenna-ratio search (bits/s/Hz).
    pub epsilon: f64,
    pub m_conv: Vec<f64>,
    /// Transmit powers (dB) swept by the `kappa` command.
    pub kappa_pt_db: Vec<f64>,
    pub fs_mhz: Vec<f64>,
    /// Per-RF-chain power excluding the DACs (W).
    pub p_rf_w: f64,
    pub amp_efficiency: f64,
    pub b_fr: u32,
    pub b_one: u32,
    /// DAC figure of merit (J/step).
    pub dac_fom: f64,
    pub ee_m_conv: f64,
    pub ee_pt_db: f64,
    /// Transmit power (dB) of the `antenna-sweep` command.
    pub antenna_pt_db: f64,
    /// Re-check each `kappa` point by simulation when both arrays fit under
    /// `mc.max_antennas`.
    pub kappa_mc_verify: bool,
    /// Per-user sum rate whose antenna requirement `antenna-sweep` reports.
    pub rate_target: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-3,
            m_conv: vec![1e2, 1e3, 5e4, 1e5, 5e5, 1e6],
            kappa_pt_db: (-30..=20).map(f64::from).collect(),
            fs_mhz: (1..=20).map(|i| 20.0 * i as f64).collect(),
            p_rf_w: 0.0358,
            amp_efficiency: 1.0,
            b_fr: 10,
            b_one: 1,
            dac_fom: 494e-15,
            ee_m_conv: 128.0,
            ee_pt_db: 10.0,
            antenna_pt_db: 10.0,
            kappa_mc_verify: false,
            rate_target: 3.0,
        }
    }
}

/// Settings of the `validate` invariant suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    /// Transmit powers (dB) at which simulated and closed-form rates are compared.
    pub gap_pt_db: Vec<f64>,
    /// Largest accepted per-user relative rate gap.
    pub gap_tolerance: f64,
    /// Below this many trials the gap check only reports insufficient precision.
    pub min_trials: usize,
    /// Channel draws and symbol draws per channel of the transmit
    /// quantization-noise check.
    pub noise_channels: usize,
    pub noise_draws: usize,
    /// Symbol draws for the arcsin-law check on one fixed precoder.
    pub arcsin_draws: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            gap_pt_db: vec![-10.0, 0.0, 10.0],
            gap_tolerance: 0.05,
            min_trials: 100,
            noise_channels: 500,
            noise_draws: 200,
            arcsin_draws: 20000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub format: OutputFormat,
    pub path: Option<PathBuf>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            format: OutputFormat::Csv,
            path: None,
        }
    }
}

fn check(ok: bool, field: &str, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::config(field, message()))
    }
}

fn check_finite(values: &[f64], field: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::config(format!("{field}[{i}]"), "must be finite")),
        None => Ok(()),
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)
            .map_err(|e| Error::config("<document>", e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the compact JSON serialization, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    /// Schema checks with field-level messages. Geometry-dependent checks
    /// (distances, explicit `beta` shape) happen in `build_scenario`.
    pub fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        check(s.cells >= 1, "scenario.cells", || "must be at least 1".into())?;
        check(s.users >= 1, "scenario.users", || "must be at least 1".into())?;
        check(s.users <= s.antennas, "scenario.antennas", || {
            format!("must be at least scenario.users = {}", s.users)
        })?;
        check(s.cells < 4096 && s.users < 4096, "scenario", || {
            "cells and users must be below 4096".into()
        })?;
        check(s.circle_radius > 0.0 && s.circle_radius.is_finite(), "scenario.circle_radius", || {
            "must be positive".into()
        })?;
        check(s.angular_offset_deg.is_finite(), "scenario.angular_offset_deg", || {
            "must be finite".into()
        })?;
        check(s.alpha > 0.0 && s.alpha.is_finite(), "scenario.alpha", || "must be positive".into())?;
        check(
            s.pathloss_const > 0.0 && s.pathloss_const.is_finite(),
            "scenario.pathloss_const",
            || "must be positive".into(),
        )?;
        if let Some(bs) = &s.bs_positions {
            check(bs.len() == s.cells, "scenario.bs_positions", || {
                format!("expected {} positions, found {}", s.cells, bs.len())
            })?;
            check_finite(&bs.iter().flatten().copied().collect::<Vec<_>>(), "scenario.bs_positions")?;
        }
        if let Some(bad) = s.antenna_grid.iter().position(|&m| m <= s.users) {
            return Err(Error::config(
                format!("scenario.antenna_grid[{bad}]"),
                format!("must exceed scenario.users = {}", s.users),
            ));
        }

        let p = &self.power;
        check(!p.pt_db.is_empty(), "power.pt_db", || "must not be empty".into())?;
        check_finite(&p.pt_db, "power.pt_db")?;
        check(p.sigma2_dbm.is_finite(), "power.sigma2_dbm", || "must be finite".into())?;
        match p.rho_p {
            PilotSnr::Db(v) => check(v.is_finite(), "power.rho_p.db", || "must be finite".into())?,
            PilotSnr::Linear(v) => check(v >= 0.0 && v.is_finite(), "power.rho_p.linear", || {
                "must be finite and non-negative".into()
            })?,
            PilotSnr::InverseNoise => {}
        }

        let mc = &self.mc;
        check(mc.trials >= 1, "mc.trials", || "must be at least 1".into())?;
        check(mc.symbol_draws >= 1, "mc.symbol_draws", || "must be at least 1".into())?;
        check(mc.batches >= 2, "mc.batches", || "must be at least 2".into())?;
        check(mc.trials < (1 << 32), "mc.trials", || "must be below 2^32".into())?;
        check(mc.condition_bound > 1.0, "mc.condition_bound", || "must exceed 1".into())?;
        check(mc.redraw_budget < 16, "mc.redraw_budget", || "must be below 16".into())?;

        let a = &self.analysis;
        check(a.epsilon > 0.0 && a.epsilon.is_finite(), "analysis.epsilon", || {
            "must be positive".into()
        })?;
        check_finite(&a.m_conv, "analysis.m_conv")?;
        if let Some(bad) = a.m_conv.iter().position(|&m| m <= s.users as f64) {
            return Err(Error::config(
                format!("analysis.m_conv[{bad}]"),
                format!("must exceed scenario.users = {}", s.users),
            ));
        }
        check_finite(&a.kappa_pt_db, "analysis.kappa_pt_db")?;
        check(!a.fs_mhz.is_empty(), "analysis.fs_mhz", || "must not be empty".into())?;
        check_finite(&a.fs_mhz, "analysis.fs_mhz")?;
        check(a.fs_mhz.iter().all(|&f| f >= 0.0), "analysis.fs_mhz", || {
            "frequencies must be non-negative".into()
        })?;
        check(a.p_rf_w >= 0.0 && a.p_rf_w.is_finite(), "analysis.p_rf_w", || {
            "must be non-negative".into()
        })?;
        check(
            a.amp_efficiency > 0.0 && a.amp_efficiency <= 1.0,
            "analysis.amp_efficiency",
            || "must lie in (0, 1]".into(),
        )?;
        check(a.b_fr >= 1 && a.b_fr <= 32, "analysis.b_fr", || "must lie in 1..=32".into())?;
        check(a.b_one >= 1 && a.b_one <= 32, "analysis.b_one", || "must lie in 1..=32".into())?;
        check(a.dac_fom >= 0.0 && a.dac_fom.is_finite(), "analysis.dac_fom", || {
            "must be non-negative".into()
        })?;
        check(a.ee_m_conv > s.users as f64, "analysis.ee_m_conv", || {
            format!("must exceed scenario.users = {}", s.users)
        })?;
        check(a.ee_pt_db.is_finite(), "analysis.ee_pt_db", || "must be finite".into())?;
        check(a.antenna_pt_db.is_finite(), "analysis.antenna_pt_db", || "must be finite".into())?;
        check(a.rate_target > 0.0 && a.rate_target.is_finite(), "analysis.rate_target", || {
            "must be positive".into()
        })?;

        let v = &self.validation;
        check_finite(&v.gap_pt_db, "validation.gap_pt_db")?;
        check(v.gap_tolerance > 0.0 && v.gap_tolerance.is_finite(), "validation.gap_tolerance", || {
            "must be positive".into()
        })?;
        // per-channel means give the standard errors, so too few channels make
        // the 3-SE outlier share unreliable
        check(v.noise_channels >= 50, "validation.noise_channels", || "must be at least 50".into())?;
        check(v.noise_draws >= 1, "validation.noise_draws", || "must be at least 1".into())?;
        check(v.arcsin_draws >= 100, "validation.arcsin_draws", || "must be at least 100".into())?;
        Ok(())
    }
}
