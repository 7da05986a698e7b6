//! Antenna-ratio search and the energy-efficiency model.

use crate::config::AnalysisConfig;
use crate::estimation::{estimation_stats, EstimateMode, EstimationStatistics};
use crate::rates::{asymptotic_rate, closed_form_at};
use crate::scenario::NetworkScenario;
use crate::{Error, Result};
use serde::Serialize;
use std::f64::consts::PI;

const MAX_DOUBLINGS: usize = 200;
const MAX_BISECTIONS: usize = 400;
const MONOTONICITY_PROBES: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KappaResult {
    pub m_conv: f64,
    /// Continuous antenna count of the one-bit system.
    pub m_one: f64,
    pub kappa: f64,
    /// `kappa` to two decimals.
    pub kappa_rounded: f64,
    /// Nearest-integer `m_one`.
    pub m_one_rounded: u64,
    /// `|R_sum_one(m_one) - R_sum_conv(m_conv)|`
    pub achieved_gap: f64,
    pub epsilon: f64,
    pub sum_rate_conv: f64,
    pub sum_rate_one: f64,
}

fn sum_rate(scenario: &NetworkScenario, stats: &EstimationStatistics, m: f64, mode: EstimateMode) -> Result<f64> {
    Ok(closed_form_at(scenario, stats, m, scenario.constants.transmit_power, mode)?.sum_rate)
}

/// Both architectures share the same large-array limit, so a target at or
/// above it can never be met by adding antennas.
fn ensure_reachable(target: f64, asymptote: f64) -> Result<()> {
    if target >= asymptote {
        return Err(Error::UnreachableRate { target, asymptote });
    }
    Ok(())
}

/// Smallest `M_one >= M_conv` whose one-bit closed-form sum rate reaches
/// `R_sum_conv(M_conv) - epsilon`, at the scenario's transmit power.
pub fn kappa_search(scenario: &NetworkScenario, m_conv: f64, epsilon: f64) -> Result<KappaResult> {
    kappa_search_from(scenario, m_conv, epsilon, 2.0 * m_conv)
}

/// [`kappa_search`] with an explicit initial upper bracket, which is doubled
/// until it is feasible.
pub fn kappa_search_from(
    scenario: &NetworkScenario,
    m_conv: f64,
    epsilon: f64,
    initial_upper: f64,
) -> Result<KappaResult> {
    if !(epsilon > 0.0) {
        return Err(Error::config("analysis.epsilon", "must be positive"));
    }
    let stats = estimation_stats(scenario);
    let r_conv = sum_rate(scenario, &stats, m_conv, EstimateMode::FullResolution)?;
    let target = r_conv - epsilon;
    ensure_reachable(target, asymptotic_rate(scenario).sum_rate)?;
    let f = |m: f64| sum_rate(scenario, &stats, m, EstimateMode::OneBit);

    let mut lo = m_conv;
    let mut hi = initial_upper.max(m_conv);
    if f(lo)? < target {
        let mut doublings = 0;
        while f(hi)? < target {
            lo = hi;
            hi *= 2.0;
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Err(Error::NonConvergence(format!("no feasible upper bracket below M = {hi:e}")));
            }
        }
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=MONOTONICITY_PROBES {
            let m = lo * (hi / lo).powf(i as f64 / MONOTONICITY_PROBES as f64);
            let r = f(m)?;
            if r < prev {
                return Err(Error::NonConvergence(format!("one-bit sum rate not monotone near M = {m}")));
            }
            prev = r;
        }
        let mut iterations = 0;
        while hi - lo > 1e-12 * hi {
            let mid = 0.5 * (lo + hi);
            if f(mid)? < target {
                lo = mid;
            } else {
                hi = mid;
            }
            iterations += 1;
            if iterations > MAX_BISECTIONS {
                return Err(Error::NonConvergence("bisection budget exhausted".into()));
            }
        }
    } else {
        hi = lo;
    }

    let r_one = f(hi)?;
    let kappa = hi / m_conv;
    Ok(KappaResult {
        m_conv,
        m_one: hi,
        kappa,
        kappa_rounded: (kappa * 100.0).round() / 100.0,
        m_one_rounded: hi.round() as u64,
        achieved_gap: (r_one - r_conv).abs(),
        epsilon,
        sum_rate_conv: r_conv,
        sum_rate_one: r_one,
    })
}

/// Smallest (continuous) antenna count at which the closed-form rate per
/// user reaches `target`; `None` when the target lies at or above the
/// large-array limit.
pub fn antennas_for_rate(scenario: &NetworkScenario, target: f64, mode: EstimateMode) -> Result<Option<f64>> {
    let stats = estimation_stats(scenario);
    let users = (scenario.cells() * scenario.users()) as f64;
    if asymptotic_rate(scenario).sum_rate / users <= target {
        return Ok(None);
    }
    let f = |m: f64| sum_rate(scenario, &stats, m, mode).map(|r| r / users);
    let mut lo = scenario.users() as f64 * (1.0 + 1e-9);
    if f(lo)? >= target {
        return Ok(Some(lo));
    }
    let mut hi = 2.0 * lo;
    let mut doublings = 0;
    while f(hi)? < target {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > MAX_DOUBLINGS {
            return Err(Error::NonConvergence(format!("rate {target} not reached below M = {hi:e}")));
        }
    }
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(hi))
}

/// Low-SNR antenna ratio `π²/4`.
pub fn low_snr_kappa() -> f64 {
    PI * PI / 4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerModel {
    /// Power-amplifier efficiency in (0, 1].
    pub amp_efficiency: f64,
    /// Hz
    pub sampling_frequency: f64,
    pub bits: u32,
    /// J/step
    pub dac_fom: f64,
    /// Per-RF-chain power excluding the DACs (W).
    pub p_rf: f64,
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(Error::config(field, msg));
        if !(self.amp_efficiency > 0.0 && self.amp_efficiency <= 1.0) {
            return bad("analysis.amp_efficiency", "must lie in (0, 1]");
        }
        if !(self.sampling_frequency >= 0.0 && self.sampling_frequency.is_finite()) {
            return bad("analysis.fs_mhz", "must be non-negative");
        }
        if !(self.dac_fom >= 0.0 && self.p_rf >= 0.0) {
            return bad("analysis.p_rf_w", "powers must be non-negative");
        }
        Ok(())
    }

    /// `P_DAC = c f_s 2^b`
    pub fn p_dac(&self) -> f64 {
        self.dac_fom * self.sampling_frequency * 2f64.powi(self.bits as i32)
    }

    /// `P_t/ζ + M (2 P_DAC + P_RF)`: two DACs (I and Q) per antenna.
    pub fn total_power(&self, antennas: f64, transmit_power: f64) -> f64 {
        transmit_power / self.amp_efficiency + antennas * (2.0 * self.p_dac() + self.p_rf)
    }
}

/// `EE = R_sum / P_tot` in bits/s/Hz per watt.
pub fn energy_efficiency(sum_rate: f64, model: &PowerModel, antennas: f64, transmit_power: f64) -> Result<f64> {
    model.validate()?;
    let total = model.total_power(antennas, transmit_power);
    if !(total > 0.0) {
        return Err(Error::ZeroPower);
    }
    Ok(sum_rate / total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EeRow {
    pub fs_mhz: f64,
    pub ee_onebit: f64,
    pub ee_fr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EeSweep {
    pub kappa: KappaResult,
    /// Antenna counts actually compared.
    pub m_conv: f64,
    pub m_one: f64,
    pub sum_rate_conv: f64,
    pub sum_rate_one: f64,
    pub rows: Vec<EeRow>,
    /// Sampling frequency (MHz) where the two EE curves meet, if any.
    pub crossover_mhz: Option<f64>,
}

fn power_model(cfg: &AnalysisConfig, fs_hz: f64, bits: u32) -> PowerModel {
    PowerModel {
        amp_efficiency: cfg.amp_efficiency,
        sampling_frequency: fs_hz,
        bits,
        dac_fom: cfg.dac_fom,
        p_rf: cfg.p_rf_w,
    }
}

/// EE of both architectures over `cfg.fs_mhz`, with the one-bit array sized
/// by [`kappa_search`] (rounded to whole antennas) so that both deliver the
/// same sum rate. `scenario` carries the transmit power.
pub fn ee_sweep(scenario: &NetworkScenario, cfg: &AnalysisConfig) -> Result<EeSweep> {
    if cfg.fs_mhz.is_empty() {
        return Err(Error::config("analysis.fs_mhz", "must not be empty"));
    }
    let kappa = kappa_search(scenario, cfg.ee_m_conv, cfg.epsilon)?;
    let stats = estimation_stats(scenario);
    let m_one = kappa.m_one_rounded as f64;
    let r_conv = sum_rate(scenario, &stats, cfg.ee_m_conv, EstimateMode::FullResolution)?;
    let r_one = sum_rate(scenario, &stats, m_one, EstimateMode::OneBit)?;
    let pt = scenario.constants.transmit_power;
    let rows = cfg
        .fs_mhz
        .iter()
        .map(|&fs| {
            let hz = fs * 1e6;
            Ok(EeRow {
                fs_mhz: fs,
                ee_onebit: energy_efficiency(r_one, &power_model(cfg, hz, cfg.b_one), m_one, pt)?,
                ee_fr: energy_efficiency(r_conv, &power_model(cfg, hz, cfg.b_fr), cfg.ee_m_conv, pt)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    // P_tot is affine in f_s, so EE_one = EE_fr has a closed-form root.
    let affine = |bits: u32, m: f64| {
        let base = power_model(cfg, 0.0, bits);
        let slope = m * 2.0 * base.dac_fom * 2f64.powi(bits as i32);
        (base.total_power(m, pt), slope)
    };
    let (a1, b1) = affine(cfg.b_one, m_one);
    let (a2, b2) = affine(cfg.b_fr, cfg.ee_m_conv);
    let denom = r_one * b2 - r_conv * b1;
    let crossover_mhz = (denom != 0.0)
        .then(|| (r_conv * a1 - r_one * a2) / denom / 1e6)
        .filter(|f| *f > 0.0 && f.is_finite());

    Ok(EeSweep {
        kappa,
        m_conv: cfg.ee_m_conv,
        m_one,
        sum_rate_conv: r_conv,
        sum_rate_one: r_one,
        rows,
        crossover_mhz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use crate::scenario::{build_scenario, db_to_linear};
    use approx::assert_relative_eq;

    fn at(pt_db: f64) -> NetworkScenario {
        build_scenario(&ExperimentConfig::default())
            .unwrap()
            .with_transmit_power(db_to_linear(pt_db))
            .unwrap()
    }

    #[test]
    fn kappa_reference_points() {
        let k = kappa_search(&at(-30.0), 1e3, 1e-3).unwrap();
        assert!((k.kappa - 2.47).abs() < 0.02, "{}", k.kappa);
        assert_eq!(k.kappa_rounded, 2.47);
        let k = kappa_search(&at(20.0), 1e2, 1e-3).unwrap();
        assert!((k.kappa - 3.79).abs() < 0.2, "{}", k.kappa);
        assert!(k.achieved_gap <= k.epsilon * (1.0 + 1e-9));
        assert!(k.kappa >= 1.0);
    }

    #[test]
    fn kappa_for_the_energy_comparison_rounds_to_486() {
        let k = kappa_search(&at(10.0), 128.0, 1e-3).unwrap();
        assert_eq!(k.m_one_rounded, 486);
    }

    /// With a 0.05 bits/s/Hz gap the large-array points of the reference
    /// κ curve are matched as well.
    #[test]
    fn large_arrays_with_looser_gap() {
        let s = at(20.0);
        for (m_conv, expected) in [(1e6, 1.18), (5e5, 1.82), (1e5, 3.20)] {
            let k = kappa_search(&s, m_conv, 0.05).unwrap();
            assert!((k.kappa - expected).abs() < 0.02, "{m_conv}: {}", k.kappa);
        }
    }

    #[test]
    fn kappa_declines_for_large_arrays() {
        let s = at(20.0);
        let ks: Vec<f64> = [1e4, 1e5, 5e5, 1e6]
            .iter()
            .map(|&m| kappa_search(&s, m, 1e-3).unwrap().kappa)
            .collect();
        assert!(ks[1] < ks[0] && ks[2] < ks[1] && ks[3] < ks[2], "{ks:?}");
    }

    #[test]
    fn low_snr_kappa_agrees_with_search() {
        assert!((low_snr_kappa() - 2.4674).abs() < 1e-4);
        let k = kappa_search(&at(-40.0), 1e3, 1e-3).unwrap();
        assert!((k.kappa / low_snr_kappa() - 1.0).abs() < 0.05, "{}", k.kappa);
    }

    #[test]
    fn result_does_not_depend_on_initial_bracket() {
        let s = at(0.0);
        let a = kappa_search(&s, 300.0, 1e-3).unwrap();
        for upper in [301.0, 1e3, 1e5, 1e9] {
            let b = kappa_search_from(&s, 300.0, 1e-3, upper).unwrap();
            assert_relative_eq!(a.m_one, b.m_one, max_relative = 1e-9);
        }
    }

    #[test]
    fn unreachable_targets_are_reported() {
        let s = at(20.0);
        let inf = asymptotic_rate(&s).sum_rate;
        assert!(matches!(ensure_reachable(inf, inf), Err(Error::UnreachableRate { .. })));
        assert!(ensure_reachable(inf - 1e-9, inf).is_ok());
        assert!(matches!(kappa_search(&s, 1e3, 0.0), Err(Error::Config { .. })));
        assert!(matches!(kappa_search(&s, 4.0, 1e-3), Err(Error::TooFewAntennas { .. })));
    }

    #[test]
    fn three_bits_per_user_needs_about_540_and_150_antennas() {
        let s = at(10.0);
        let one = antennas_for_rate(&s, 3.0, EstimateMode::OneBit).unwrap().unwrap();
        let fr = antennas_for_rate(&s, 3.0, EstimateMode::FullResolution).unwrap().unwrap();
        assert!((one / 540.0 - 1.0).abs() < 0.1, "{one}");
        assert!((fr / 150.0 - 1.0).abs() < 0.1, "{fr}");
        assert_eq!(antennas_for_rate(&s, 10.0, EstimateMode::OneBit).unwrap(), None);
    }

    #[test]
    fn dac_power_examples() {
        let m = PowerModel {
            amp_efficiency: 1.0,
            sampling_frequency: 100e6,
            bits: 1,
            dac_fom: 494e-15,
            p_rf: 0.0,
        };
        assert_relative_eq!(m.p_dac(), 9.88e-5, max_relative = 1e-12);
        let ten = PowerModel { bits: 10, ..m };
        assert_relative_eq!(ten.p_dac() / m.p_dac(), 512.0, max_relative = 1e-14);
        let faster = PowerModel { sampling_frequency: 200e6, ..m };
        assert!(faster.p_dac() > m.p_dac());
    }

    #[test]
    fn ee_is_homogeneous_and_rejects_zero_power() {
        let m = PowerModel {
            amp_efficiency: 0.5,
            sampling_frequency: 50e6,
            bits: 4,
            dac_fom: 494e-15,
            p_rf: 0.03,
        };
        let ee = energy_efficiency(10.0, &m, 100.0, 1.0).unwrap();
        let p_tot = m.total_power(100.0, 1.0);
        assert_relative_eq!(ee, 10.0 / p_tot);
        let doubled = PowerModel {
            dac_fom: 2.0 * m.dac_fom,
            p_rf: 2.0 * m.p_rf,
            amp_efficiency: m.amp_efficiency,
            ..m
        };
        assert_relative_eq!(energy_efficiency(20.0, &doubled, 100.0, 2.0).unwrap(), ee, max_relative = 1e-14);
        let zero = PowerModel { dac_fom: 0.0, p_rf: 0.0, ..m };
        assert!(matches!(energy_efficiency(1.0, &zero, 10.0, 0.0), Err(Error::ZeroPower)));
        assert!(energy_efficiency(1.0, &PowerModel { amp_efficiency: 1.5, ..m }, 10.0, 1.0).is_err());
    }

    #[test]
    fn ee_sweep_shape_and_crossover() {
        let cfg = ExperimentConfig::default();
        let s = at(cfg.analysis.ee_pt_db);
        let sweep = ee_sweep(&s, &cfg.analysis).unwrap();
        assert_eq!(sweep.m_one, 486.0);
        assert_eq!(sweep.rows.len(), 20);
        assert!(sweep.rows.windows(2).all(|w| w[1].ee_fr < w[0].ee_fr));
        let first = sweep.rows.first().unwrap();
        let last = sweep.rows.last().unwrap();
        assert!((first.ee_onebit - last.ee_onebit) / first.ee_onebit < 0.02);
        assert!(first.ee_fr > first.ee_onebit && last.ee_onebit > last.ee_fr);
        let f = sweep.crossover_mhz.unwrap();
        assert!((70.0..=130.0).contains(&f), "{f}");
        // the analytic root matches the rows
        let before = sweep.rows.iter().filter(|r| r.fs_mhz < f).all(|r| r.ee_fr > r.ee_onebit);
        let after = sweep.rows.iter().filter(|r| r.fs_mhz > f).all(|r| r.ee_onebit > r.ee_fr);
        assert!(before && after);
        // the reference calibration endpoints
        assert!((first.ee_fr - 5.4698).abs() < 0.01 && (first.ee_onebit - 3.4244).abs() < 0.01);
    }

    #[test]
    fn empty_frequency_grid_is_rejected() {
        let mut cfg = ExperimentConfig::default().analysis;
        cfg.fs_mhz.clear();
        assert!(ee_sweep(&at(10.0), &cfg).unwrap_err().is_config_error());
    }
}
