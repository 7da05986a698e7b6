use super::{RateBreakdown, RateMode, UserTerms};
use crate::estimation::{estimation_stats, EstimateMode, EstimationStatistics};
use crate::grid::UserGrid;
use crate::precoding::transmit_gain_at;
use crate::quantization::DISTORTION_VARIANCE;
use crate::scenario::NetworkScenario;
use crate::{Error, Result};
use serde::Serialize;
use std::f64::consts::{FRAC_2_PI, PI};

fn check(scenario: &NetworkScenario, antennas: f64) -> Result<()> {
    let users = scenario.users();
    if !(antennas > users as f64) {
        return Err(Error::TooFewAntennas { antennas, users });
    }
    if !(scenario.constants.pilot_snr > 0.0) {
        return Err(Error::ZeroPilotSnr);
    }
    Ok(())
}

/// Closed-form rates with `M` continuous and `stats` precomputed, so that
/// antenna searches avoid recomputing the estimate statistics.
pub fn closed_form_at(
    scenario: &NetworkScenario,
    stats: &EstimationStatistics,
    antennas: f64,
    transmit_power: f64,
    mode: EstimateMode,
) -> Result<RateBreakdown> {
    check(scenario, antennas)?;
    let (cells, users) = (scenario.cells(), scenario.users());
    let k_f = users as f64;
    let m = antennas;
    let c = m / k_f;
    let sigma2 = scenario.constants.noise_power;
    let t = stats.variance(mode);
    let zeta = stats.zeta(mode);
    let beta = |j: usize, l: usize, k: usize| scenario.beta(j, l, k);
    let one_bit = mode == EstimateMode::OneBit;

    let terms = UserGrid::from_fn(cells, users, |j, k| {
        let own = beta(j, j, k);
        let t_jk = t.at(j, k);
        let cu = (own - t_jk) / ((m - k_f) * t_jk);

        let mut iui: f64 = (0..users)
            .filter(|&i| i != k)
            .map(|i| (own - t_jk) / (t.at(j, i) * (m - k_f)))
            .sum();
        let mut pc = 0.0;
        for l in (0..cells).filter(|&l| l != j) {
            let cross = beta(l, j, k);
            let ratio = zeta[j] / zeta[l];
            iui += (0..users)
                .filter(|&i| i != k)
                .map(|i| ratio * cross / (t.at(l, i) * (m - k_f)))
                .sum::<f64>();
            let t_lk = t.at(l, k);
            let own_l = beta(l, l, k);
            iui += ratio * cross / (t_lk * (m - k_f)) * (1.0 - t_lk * cross / (own_l * own_l));
            pc += ratio * cross * cross / (own_l * own_l);
        }

        let (ds, qn, tn) = if one_bit {
            let a = transmit_gain_at(zeta[j], m, users).expect("checked above");
            let shape = PI * m * zeta[j] / (2.0 * k_f * (c - 1.0).powi(2));
            let qn = (0..cells).map(|l| DISTORTION_VARIANCE * shape * beta(l, j, k)).sum();
            (transmit_power / m * a * a, qn, shape * sigma2 / transmit_power)
        } else {
            (
                transmit_power * (m - k_f) / (k_f * zeta[j]),
                0.0,
                sigma2 * k_f * zeta[j] / (transmit_power * (m - k_f)),
            )
        };
        UserTerms::from_normalized(Some(ds), cu, qn, iui, Some(pc), tn)
    });
    let rate_mode = if one_bit { RateMode::CfOneBit } else { RateMode::CfFr };
    Ok(RateBreakdown::new(rate_mode, terms))
}

pub fn closed_form(scenario: &NetworkScenario, mode: EstimateMode) -> Result<RateBreakdown> {
    closed_form_at(
        scenario,
        &estimation_stats(scenario),
        scenario.antennas() as f64,
        scenario.constants.transmit_power,
        mode,
    )
}

/// One-bit ADCs and DACs.
pub fn closed_form_onebit(scenario: &NetworkScenario) -> Result<RateBreakdown> {
    closed_form(scenario, EstimateMode::OneBit)
}

/// Full-resolution converters.
pub fn closed_form_fr(scenario: &NetworkScenario) -> Result<RateBreakdown> {
    closed_form(scenario, EstimateMode::FullResolution)
}

/// Limit `M -> ∞` shared by both architectures; only pilot contamination
/// survives. A single cell has no limit and reports infinite rates.
pub fn asymptotic_rate(scenario: &NetworkScenario) -> RateBreakdown {
    let stats = estimation_stats(scenario);
    let zb = &stats.zeta_bar;
    let terms = UserGrid::from_fn(scenario.cells(), scenario.users(), |j, k| {
        let pc = (0..scenario.cells())
            .filter(|&l| l != j)
            .map(|l| zb[j] * scenario.beta(l, j, k).powi(2) / (zb[l] * scenario.beta(l, l, k).powi(2)))
            .sum();
        UserTerms::from_normalized(None, 0.0, 0.0, 0.0, Some(pc), 0.0)
    });
    RateBreakdown::new(RateMode::Asymptotic, terms)
}

/// One-bit over full-resolution ratios of the normalized SQINR terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DegradationRatios {
    pub tn: f64,
    pub cu: f64,
    /// NaN when there is no inter-user interference (`L = K = 1`).
    pub iui: f64,
    pub pc: f64,
}

/// Ratios in their factored forms; the IUI ratio is expressed through the
/// full-resolution IUI plus the extra distortion-driven sums.
pub fn degradation_ratios(scenario: &NetworkScenario) -> Result<UserGrid<DegradationRatios>> {
    let stats = estimation_stats(scenario);
    let m = scenario.antennas() as f64;
    let fr = closed_form_at(scenario, &stats, m, scenario.constants.transmit_power, EstimateMode::FullResolution)?;
    let one = closed_form_at(scenario, &stats, m, scenario.constants.transmit_power, EstimateMode::OneBit)?;
    let (cells, users) = (scenario.cells(), scenario.users());
    let k_f = users as f64;
    let c = m / k_f;
    let t_fr = &stats.t_fr;
    let z_fr = &stats.zeta_fr;
    Ok(UserGrid::from_fn(cells, users, |j, k| {
        let own = scenario.beta(j, j, k);
        let tfr = t_fr.at(j, k);
        let scaled_iui = (m - k_f) * fr.users.get(j, k).iui;
        let extra_users: f64 = (0..users).filter(|&i| i != k).map(|i| tfr / t_fr.at(j, i)).sum();
        let extra_cells: f64 = (0..cells)
            .filter(|&l| l != j)
            .map(|l| z_fr[j] * scenario.beta(l, j, k).powi(2) / (z_fr[l] * scenario.beta(l, l, k).powi(2)))
            .sum();
        let iui = PI / 2.0 * (scaled_iui + DISTORTION_VARIANCE * (extra_users + extra_cells)) / scaled_iui;
        let (pc_one, pc_fr) = (one.users.get(j, k).pc.unwrap_or(0.0), fr.users.get(j, k).pc.unwrap_or(0.0));
        DegradationRatios {
            tn: PI * PI * m / (4.0 * k_f * (c - 1.0)),
            cu: PI / 2.0 * (own - FRAC_2_PI * tfr) / (own - tfr),
            iui,
            pc: if pc_fr == 0.0 && pc_one == 0.0 { 1.0 } else { pc_one / pc_fr },
        }
    }))
}
