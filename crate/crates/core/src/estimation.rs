//! Uplink training with one-bit ADCs and MMSE channel estimation.
//!
//! Pilots are the columns of `I_K` in every cell, so slot `k` of the training
//! block carries user `k` of every cell at once. The estimates are formed per
//! user from that slot rather than from the stacked `MK` vector.

use crate::channel::ChannelRealization;
use crate::grid::UserGrid;
use crate::quantization::{pilot_input_variance, quantize_sample, training_bussgang_gains};
use crate::rng::{complex_gaussian, Purpose, RngStream};
use crate::scenario::NetworkScenario;
use crate::{CMatrix, Error, Result};
use std::f64::consts::FRAC_2_PI;

/// Received training blocks at every BS.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotObservations {
    /// `received[j]` (M x K): column `k` is `Σ_l sqrt(ρ_p K) h_jlk + n_jk`.
    pub received: Vec<CMatrix>,
    /// `quantized[j]`: the same block after the one-bit ADCs.
    pub quantized: Vec<CMatrix>,
}

pub fn simulate_uplink_training(
    scenario: &NetworkScenario,
    channels: &ChannelRealization,
    rng: &RngStream,
) -> PilotObservations {
    let (cells, m, k_users) = (scenario.cells(), scenario.antennas(), scenario.users());
    let amplitude = (scenario.constants.pilot_snr * scenario.constants.pilot_length() as f64).sqrt();
    let mut received = Vec::with_capacity(cells);
    let mut quantized = Vec::with_capacity(cells);
    for j in 0..cells {
        let mut noise = rng.generator(Purpose::PilotNoise, j, 0);
        let mut y = CMatrix::from_fn(m, k_users, |_, _| complex_gaussian(&mut noise));
        for l in 0..cells {
            y.zip_apply(channels.get(j, l), |acc, h| *acc += h * amplitude);
        }
        quantized.push(y.map(quantize_sample));
        received.push(y);
    }
    PilotObservations { received, quantized }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimateMode {
    OneBit,
    FullResolution,
}

/// Own-cell channel estimates `Ĥ_jj` for every cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub mode: EstimateMode,
    pub h_hat: Vec<CMatrix>,
}

fn check_observations(obs: &[CMatrix], scenario: &NetworkScenario) -> Result<()> {
    let (cells, m, k) = (scenario.cells(), scenario.antennas(), scenario.users());
    if obs.len() != cells {
        return Err(Error::DimensionMismatch {
            expected: format!("{cells} cells"),
            found: format!("{} cells", obs.len()),
        });
    }
    if let Some(bad) = obs.iter().find(|y| y.nrows() != m || y.ncols() != k) {
        return Err(Error::DimensionMismatch {
            expected: format!("{m}x{k} pilot block"),
            found: format!("{}x{}", bad.nrows(), bad.ncols()),
        });
    }
    Ok(())
}

/// Per-user linear estimate `scale(j, k) · y_jk` of the channel from BS `j`
/// to user `k` of cell `target(j)`.
fn linear_estimate(
    blocks: &[CMatrix],
    scenario: &NetworkScenario,
    target: impl Fn(usize) -> usize,
    scale: impl Fn(usize, usize) -> f64,
) -> Vec<CMatrix> {
    let amplitude = (scenario.constants.pilot_snr * scenario.users() as f64).sqrt();
    blocks
        .iter()
        .enumerate()
        .map(|(j, y)| {
            let l = target(j);
            let mut h = y.clone();
            for (k, mut col) in h.column_iter_mut().enumerate() {
                col *= crate::Complex64::from(amplitude * scenario.beta(j, l, k) * scale(j, k));
            }
            h
        })
        .collect()
}

/// `ĥ_jjk = sqrt(ρ_p K) β_jjk ā_jk r_jk`.
pub fn mmse_estimate_onebit(obs: &PilotObservations, scenario: &NetworkScenario) -> Result<ChannelEstimate> {
    check_observations(&obs.quantized, scenario)?;
    let gains = training_bussgang_gains(scenario);
    Ok(ChannelEstimate {
        mode: EstimateMode::OneBit,
        h_hat: linear_estimate(&obs.quantized, scenario, |j| j, |j, k| gains.at(j, k)),
    })
}

/// `ĥ^FR_jjk = sqrt(ρ_p K) β_jjk y_jk / (Σ_l K ρ_p β_jlk + 1)` on the
/// unquantized pilots.
pub fn mmse_estimate_fr(obs: &PilotObservations, scenario: &NetworkScenario) -> Result<ChannelEstimate> {
    check_observations(&obs.received, scenario)?;
    Ok(ChannelEstimate {
        mode: EstimateMode::FullResolution,
        h_hat: linear_estimate(&obs.received, scenario, |j| j, |j, k| {
            1.0 / pilot_input_variance(scenario, j, k)
        }),
    })
}

pub fn mmse_estimate(
    obs: &PilotObservations,
    scenario: &NetworkScenario,
    mode: EstimateMode,
) -> Result<ChannelEstimate> {
    match mode {
        EstimateMode::OneBit => mmse_estimate_onebit(obs, scenario),
        EstimateMode::FullResolution => mmse_estimate_fr(obs, scenario),
    }
}

/// One-bit estimate at BS `j` of its channel to the users of cell
/// `target(j)`, from the same quantized pilots. Because pilots are reused,
/// it is a rescaling of the own-cell estimate by `β_j,target,k / β_jjk`.
pub fn mmse_estimate_onebit_towards(
    obs: &PilotObservations,
    scenario: &NetworkScenario,
    target: impl Fn(usize) -> usize,
) -> Result<Vec<CMatrix>> {
    check_observations(&obs.quantized, scenario)?;
    let gains = training_bussgang_gains(scenario);
    Ok(linear_estimate(&obs.quantized, scenario, target, |j, k| gains.at(j, k)))
}

/// Closed-form per-antenna statistics of the estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationStatistics {
    /// `t_jjk`: one-bit estimate variance.
    pub t: UserGrid<f64>,
    /// `t^FR_jjk`: full-resolution estimate variance.
    pub t_fr: UserGrid<f64>,
    /// `β_jjk - t_jjk`
    pub t_tilde: UserGrid<f64>,
    /// `β_jjk - t^FR_jjk`
    pub t_tilde_fr: UserGrid<f64>,
    /// `ζ_j = (1/K) Σ_k 1/t_jjk`
    pub zeta: Vec<f64>,
    pub zeta_fr: Vec<f64>,
    /// `ζ̄_j = Σ_k 1/c_jjk`, `c_jjk = β_jjk² / (Σ_l K ρ_p β_jlk + 1)`.
    pub zeta_bar: Vec<f64>,
}

impl EstimationStatistics {
    pub fn variance(&self, mode: EstimateMode) -> &UserGrid<f64> {
        match mode {
            EstimateMode::OneBit => &self.t,
            EstimateMode::FullResolution => &self.t_fr,
        }
    }

    pub fn zeta(&self, mode: EstimateMode) -> &[f64] {
        match mode {
            EstimateMode::OneBit => &self.zeta,
            EstimateMode::FullResolution => &self.zeta_fr,
        }
    }
}

pub fn estimation_stats(scenario: &NetworkScenario) -> EstimationStatistics {
    let (cells, users) = (scenario.cells(), scenario.users());
    let load = scenario.constants.pilot_snr * users as f64;
    let own = |j: usize, k: usize| scenario.beta(j, j, k);
    let t = UserGrid::from_fn(cells, users, |j, k| {
        2.0 * own(j, k).powi(2) * load / (std::f64::consts::PI * pilot_input_variance(scenario, j, k))
    });
    let t_fr = UserGrid::from_fn(cells, users, |j, k| {
        own(j, k).powi(2) * load / pilot_input_variance(scenario, j, k)
    });
    let t_tilde = UserGrid::from_fn(cells, users, |j, k| own(j, k) - t.at(j, k));
    let t_tilde_fr = UserGrid::from_fn(cells, users, |j, k| own(j, k) - t_fr.at(j, k));
    let mean_inverse = |g: &UserGrid<f64>, j: usize| g.row(j).iter().map(|v| 1.0 / v).sum::<f64>() / users as f64;
    let zeta = (0..cells).map(|j| mean_inverse(&t, j)).collect();
    let zeta_fr = (0..cells).map(|j| mean_inverse(&t_fr, j)).collect();
    let zeta_bar = (0..cells)
        .map(|j| {
            (0..users)
                .map(|k| pilot_input_variance(scenario, j, k) / own(j, k).powi(2))
                .sum()
        })
        .collect();
    EstimationStatistics {
        t,
        t_fr,
        t_tilde,
        t_tilde_fr,
        zeta,
        zeta_fr,
        zeta_bar,
    }
}

/// Ratio `t_jjk / t^FR_jjk`, identically `2/π`.
pub const ONE_BIT_ESTIMATE_PENALTY: f64 = FRAC_2_PI;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_channels;
    use crate::config::ExperimentConfig;
    use crate::quantization::DISTORTION_VARIANCE;
    use crate::scenario::{build_scenario, LargeScaleFading, SystemConstants};
    use crate::Complex64;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn uniform(cells: usize, users: usize, antennas: usize, rho: f64, beta: impl Fn(usize, usize, usize) -> f64) -> NetworkScenario {
        let constants = SystemConstants {
            cells,
            antennas,
            users,
            transmit_power: 1.0,
            noise_power: 1.0,
            pilot_snr: rho,
        };
        NetworkScenario::new(constants, None, LargeScaleFading::from_fn(cells, users, beta).unwrap()).unwrap()
    }

    #[test]
    fn closed_form_examples() {
        let s = uniform(1, 1, 4, 1.0, |_, _, _| 1.0);
        let st = estimation_stats(&s);
        assert_relative_eq!(st.t_fr.at(0, 0), 0.5, max_relative = 1e-15);
        assert_relative_eq!(st.t.at(0, 0), 1.0 / PI, max_relative = 1e-15);

        let s = uniform(1, 2, 8, 1.0, |_, _, _| 1.0);
        let st = estimation_stats(&s);
        assert_relative_eq!(st.t.at(0, 0), 4.0 / (3.0 * PI), max_relative = 1e-15);
        assert!((st.t.at(0, 1) - 0.42441).abs() < 1e-5);
        assert_relative_eq!(st.zeta[0], 3.0 * PI / 4.0, max_relative = 1e-15);
        assert!((st.zeta[0] - 2.35619).abs() < 1e-5);
        // symmetric cell: zeta = 1/t
        assert_relative_eq!(st.zeta[0], 1.0 / st.t.at(0, 0), max_relative = 1e-15);
    }

    #[test]
    fn full_resolution_becomes_perfect_at_high_pilot_snr() {
        for rho in [1e6, 1e9, 1e12] {
            let st = estimation_stats(&uniform(1, 3, 8, rho, |_, _, _| 0.7));
            assert!((st.t_fr.at(0, 1) - 0.7).abs() < 0.7 * 10.0 / rho);
        }
    }

    #[test]
    fn identities_hold_for_default_scenario() {
        let s = build_scenario(&ExperimentConfig::default()).unwrap();
        let st = estimation_stats(&s);
        for j in 0..s.cells() {
            for k in 0..s.users() {
                let (t, tfr) = (st.t.at(j, k), st.t_fr.at(j, k));
                assert!((t - ONE_BIT_ESTIMATE_PENALTY * tfr).abs() <= 1e-12 * t);
                assert!(t > 0.0 && t < s.beta(j, j, k));
                assert!(st.t_tilde.at(j, k) > st.t_tilde_fr.at(j, k));
                assert!(st.t_tilde_fr.at(j, k) > 0.0);
            }
            assert_relative_eq!(st.zeta[j] / st.zeta_fr[j], PI / 2.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn observations_are_quantized_and_shaped() {
        let s = build_scenario(&ExperimentConfig::default()).unwrap();
        let rng = RngStream::new(8);
        let h = draw_channels(&s, &rng);
        let obs = simulate_uplink_training(&s, &h, &rng);
        assert_eq!(obs.quantized.len(), 4);
        for r in &obs.quantized {
            assert_eq!((r.nrows(), r.ncols()), (128, 8));
            for z in r.iter() {
                assert_eq!(z.re.abs(), FRAC_1_SQRT_2);
                assert_eq!(z.im.abs(), FRAC_1_SQRT_2);
            }
        }
        let bad = PilotObservations {
            received: obs.received[..3].to_vec(),
            quantized: obs.quantized[..3].to_vec(),
        };
        assert!(matches!(mmse_estimate_onebit(&bad, &s), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(mmse_estimate_fr(&bad, &s), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_pilot_snr_gives_zero_mean_noise_only_estimates() {
        let s = uniform(2, 2, 64, 0.0, |_, _, _| 1.0);
        let mut sum = Complex64::new(0.0, 0.0);
        let mut n = 0.0;
        for t in 0..200 {
            let rng = RngStream::new(2).for_trial(t);
            let obs = simulate_uplink_training(&s, &draw_channels(&s, &rng), &rng);
            // quantized pure noise is still on the alphabet but the estimate scale is zero
            let est = mmse_estimate_onebit(&obs, &s).unwrap();
            for h in &est.h_hat {
                sum += h.sum();
                n += h.len() as f64;
            }
            let mean_obs = obs.quantized[0].sum() / 128.0;
            assert!(mean_obs.norm() < 0.5);
        }
        assert_eq!(sum / n, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn pilot_contamination_makes_cross_estimates_collinear() {
        let s = uniform(2, 3, 32, 1.0, |_, _, _| 1.0);
        let rng = RngStream::new(12);
        let obs = simulate_uplink_training(&s, &draw_channels(&s, &rng), &rng);
        let own = mmse_estimate_onebit(&obs, &s).unwrap();
        let cross = mmse_estimate_onebit_towards(&obs, &s, |j| 1 - j).unwrap();
        for j in 0..2 {
            assert_eq!(own.h_hat[j], cross[j]);
        }

        let s = uniform(2, 3, 32, 1.0, |j, l, _| if j == l { 1.0 } else { 0.25 });
        let own = mmse_estimate_onebit(&obs, &s).unwrap();
        let cross = mmse_estimate_onebit_towards(&obs, &s, |j| 1 - j).unwrap();
        for j in 0..2 {
            assert!((&own.h_hat[j] * Complex64::from(0.25) - &cross[j]).norm() < 1e-14);
        }
    }

    /// L = 1, K = 1, M = 1000, ρ_p = 1, β = 1: estimate variance 1/π, error
    /// variance 1 - 1/π, estimate and error uncorrelated.
    #[test]
    fn one_bit_estimate_moments_match_closed_form() {
        let s = uniform(1, 1, 1000, 1.0, |_, _, _| 1.0);
        let trials = 10_000;
        let (mut v_hat, mut v_err) = (0.0, 0.0);
        let mut cross = Complex64::new(0.0, 0.0);
        let mut cross_sq = 0.0;
        for t in 0..trials {
            let rng = RngStream::new(21).for_trial(t);
            let h = draw_channels(&s, &rng);
            let obs = simulate_uplink_training(&s, &h, &rng);
            let est = mmse_estimate_onebit(&obs, &s).unwrap();
            for (hh, h) in est.h_hat[0].iter().zip(h.get(0, 0).iter()) {
                let e = h - hh;
                v_hat += hh.norm_sqr();
                v_err += e.norm_sqr();
                let c = hh * e.conj();
                cross += c;
                cross_sq += c.norm_sqr();
            }
        }
        let n = trials as f64 * 1000.0;
        let st = estimation_stats(&s);
        assert!((v_hat / n - 1.0 / PI).abs() < 2e-3, "{}", v_hat / n);
        assert!((v_hat / n - 0.31831).abs() < 2e-3);
        assert!((v_err / n - st.t_tilde.at(0, 0)).abs() < 3e-3, "{}", v_err / n);
        assert!((v_err / n - 0.68169).abs() < 3e-3);
        let mean = cross / n;
        assert!(mean.norm() < 3.0 * (cross_sq / n / n).sqrt(), "{mean}");
        // the quantization noise on the pilots has the arcsin-law variance
        assert!(DISTORTION_VARIANCE > 0.36 && DISTORTION_VARIANCE < 0.37);
    }

    #[test]
    fn estimate_variances_match_closed_form_in_default_scenario() {
        let s = build_scenario(&ExperimentConfig::default()).unwrap();
        let st = estimation_stats(&s);
        let trials = 300;
        let mut one = vec![0.0; 32];
        let mut one_sq = vec![0.0; 32];
        let mut fr = vec![0.0; 32];
        let mut fr_sq = vec![0.0; 32];
        for t in 0..trials {
            let rng = RngStream::new(31).for_trial(t);
            let obs = simulate_uplink_training(&s, &draw_channels(&s, &rng), &rng);
            let e1 = mmse_estimate_onebit(&obs, &s).unwrap();
            let e2 = mmse_estimate_fr(&obs, &s).unwrap();
            for j in 0..4 {
                for k in 0..8 {
                    for z in e1.h_hat[j].column(k).iter() {
                        one[j * 8 + k] += z.norm_sqr();
                        one_sq[j * 8 + k] += z.norm_sqr().powi(2);
                    }
                    for z in e2.h_hat[j].column(k).iter() {
                        fr[j * 8 + k] += z.norm_sqr();
                        fr_sq[j * 8 + k] += z.norm_sqr().powi(2);
                    }
                }
            }
        }
        let n = trials as f64 * 128.0;
        for j in 0..4 {
            for k in 0..8 {
                let i = j * 8 + k;
                for (sum, sq, expected) in [(one[i], one_sq[i], st.t.at(j, k)), (fr[i], fr_sq[i], st.t_fr.at(j, k))] {
                    let mean = sum / n;
                    let se = ((sq / n - mean * mean).max(0.0) / n).sqrt();
                    assert!((mean - expected).abs() <= 5.0 * se + 1e-10 * expected, "({j},{k}) {mean} vs {expected}");
                }
            }
        }
    }

    #[test]
    fn pilot_contamination_correlates_same_pilot_only() {
        let s = uniform(2, 2, 64, 1.0, |j, l, _| if j == l { 1.0 } else { 0.3 });
        let trials = 2000;
        let (mut same, mut same_sq, mut diff, mut diff_sq) = (0.0, 0.0, 0.0, 0.0);
        for t in 0..trials {
            let rng = RngStream::new(41).for_trial(t);
            let h = draw_channels(&s, &rng);
            let est = mmse_estimate_onebit(&simulate_uplink_training(&s, &h, &rng), &s).unwrap();
            // ĥ_11k at BS 1 against h_10k (BS 1 to user k of cell 0)
            let a = est.h_hat[1].column(0).dotc(&h.get(1, 0).column(0)).re / 64.0;
            let b = est.h_hat[1].column(0).dotc(&h.get(1, 0).column(1)).re / 64.0;
            same += a;
            same_sq += a * a;
            diff += b;
            diff_sq += b * b;
        }
        let n = trials as f64;
        let se = |s: f64, q: f64| ((q / n - (s / n).powi(2)) / n).sqrt();
        assert!(same / n > 10.0 * se(same, same_sq));
        assert!((diff / n).abs() < 3.0 * se(diff, diff_sq));
    }
}
