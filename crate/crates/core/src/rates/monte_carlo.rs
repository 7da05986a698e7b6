//! Monte-Carlo estimation of the SQINR terms.
//!
//! Every statistic is accumulated without the transmit power, so one run
//! serves a whole power sweep: the powers enter only through `η_l` when a
//! [`McStatistics`] is turned into a [`RateBreakdown`].

use super::{RateBreakdown, RateMode, UserTerms};
use crate::channel::draw_channels;
use crate::config::{McConfig, SymbolAlphabet, TransmitGainMode};
use crate::estimation::{estimation_stats, mmse_estimate, simulate_uplink_training, EstimateMode};
use crate::grid::UserGrid;
use crate::precoding::{exact_transmit_gains, transmit_bussgang_gain, zf_precoder, Precoder, TransmitGain};
use crate::quantization::quantize_sample;
use crate::rng::{complex_gaussian, qpsk_symbol, Purpose, RngStream};
use crate::scenario::NetworkScenario;
use crate::{CMatrix, Complex64, Error, Result};
use rayon::prelude::*;

#[derive(Debug, Clone, PartialEq)]
pub struct McSettings {
    pub trials: usize,
    pub symbol_draws: usize,
    pub batches: usize,
    pub seed: u64,
    pub symbols: SymbolAlphabet,
    pub transmit_gain: TransmitGainMode,
    pub condition_bound: f64,
    pub redraw_budget: u32,
}

impl From<&McConfig> for McSettings {
    fn from(c: &McConfig) -> Self {
        Self {
            trials: c.trials,
            symbol_draws: c.symbol_draws,
            batches: c.batches,
            seed: c.seed,
            symbols: c.symbols,
            transmit_gain: c.transmit_gain,
            condition_bound: c.condition_bound,
            redraw_budget: c.redraw_budget,
        }
    }
}

impl Default for McSettings {
    fn default() -> Self {
        Self::from(&McConfig::default())
    }
}

/// Raw sums over a set of trials.
#[derive(Debug, Clone, PartialEq)]
pub struct McAccumulator {
    cells: usize,
    users: usize,
    pub trials: usize,
    /// `Σ g_jjkk`, `g_ljkm = h_ljk^H A_l w_lm`; index `j K + k`.
    own: Vec<Complex64>,
    own_sq: Vec<f64>,
    /// `Σ_m |g_ljkm|²` without the desired stream; index `(j K + k) L + l`.
    iui: Vec<f64>,
    /// Per-trial mean over symbol draws of `|h_ljk^H q_l|²`; same indexing.
    qn: Vec<f64>,
    /// `Σ tr(W_l W_l^H)`
    power: Vec<f64>,
}

impl McAccumulator {
    pub fn zeros(cells: usize, users: usize) -> Self {
        let n = cells * users;
        Self {
            cells,
            users,
            trials: 0,
            own: vec![Complex64::new(0.0, 0.0); n],
            own_sq: vec![0.0; n],
            iui: vec![0.0; n * cells],
            qn: vec![0.0; n * cells],
            power: vec![0.0; cells],
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.trials += other.trials;
        let add = |a: &mut [f64], b: &[f64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        self.own.iter_mut().zip(&other.own).for_each(|(x, y)| *x += y);
        add(&mut self.own_sq, &other.own_sq);
        add(&mut self.iui, &other.iui);
        add(&mut self.qn, &other.qn);
        add(&mut self.power, &other.power);
    }

    fn without(&self, other: &Self) -> Self {
        let sub = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x - y).collect();
        Self {
            cells: self.cells,
            users: self.users,
            trials: self.trials - other.trials,
            own: self.own.iter().zip(&other.own).map(|(x, y)| x - y).collect(),
            own_sq: sub(&self.own_sq, &other.own_sq),
            iui: sub(&self.iui, &other.iui),
            qn: sub(&self.qn, &other.qn),
            power: sub(&self.power, &other.power),
        }
    }

    /// Mean `tr(W_l W_l^H)` per cell.
    pub fn mean_precoder_power(&self) -> Vec<f64> {
        self.power.iter().map(|p| p / self.trials as f64).collect()
    }

    fn evaluate(&self, one_bit: bool, antennas: usize, noise_power: f64, transmit_power: f64) -> UserGrid<UserTerms> {
        let n = self.trials as f64;
        let (cells, users) = (self.cells, self.users);
        let eta: Vec<f64> = (0..cells)
            .map(|l| {
                if one_bit {
                    transmit_power / antennas as f64
                } else {
                    transmit_power / (self.power[l] / n)
                }
            })
            .collect();
        UserGrid::from_fn(cells, users, |j, k| {
            let u = j * users + k;
            let mean = self.own[u] / n;
            let var = (self.own_sq[u] / n - mean.norm_sqr()).max(0.0);
            let ds = eta[j] * mean.norm_sqr();
            let across = |v: &[f64]| (0..cells).map(|l| eta[l] * v[u * cells + l] / n).sum::<f64>();
            UserTerms::from_normalized(
                Some(ds),
                eta[j] * var / ds,
                across(&self.qn) / ds,
                across(&self.iui) / ds,
                None,
                noise_power / ds,
            )
        })
    }
}

/// Accumulated Monte-Carlo statistics of one architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct McStatistics {
    pub mode: EstimateMode,
    pub antennas: usize,
    pub noise_power: f64,
    /// Contiguous trial batches, in trial order.
    pub batches: Vec<McAccumulator>,
    pub total: McAccumulator,
}

impl McStatistics {
    pub fn rate_mode(&self) -> RateMode {
        match self.mode {
            EstimateMode::OneBit => RateMode::McOneBit,
            EstimateMode::FullResolution => RateMode::McFr,
        }
    }

    /// Rates at `transmit_power`, with delete-one-batch jackknife standard
    /// errors when there are at least two batches.
    pub fn breakdown(&self, transmit_power: f64) -> RateBreakdown {
        let one_bit = self.mode == EstimateMode::OneBit;
        let eval = |acc: &McAccumulator| acc.evaluate(one_bit, self.antennas, self.noise_power, transmit_power);
        let mut out = RateBreakdown::new(self.rate_mode(), eval(&self.total));
        let b = self.batches.len();
        if b < 2 {
            return out;
        }
        let replicates: Vec<RateBreakdown> = self
            .batches
            .iter()
            .map(|batch| RateBreakdown::new(self.rate_mode(), eval(&self.total.without(batch))))
            .collect();
        let jackknife = |values: &[f64]| {
            let mean = values.iter().sum::<f64>() / b as f64;
            ((b - 1) as f64 / b as f64 * values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
        };
        let (cells, users) = (out.users.cells(), out.users.users());
        out.rate_se = Some(UserGrid::from_fn(cells, users, |j, k| {
            let v: Vec<f64> = replicates.iter().map(|r| r.rate(j, k)).collect();
            jackknife(&v)
        }));
        let sums: Vec<f64> = replicates.iter().map(|r| r.sum_rate).collect();
        out.sum_rate_se = Some(jackknife(&sums));
        out
    }
}

fn symbol(alphabet: SymbolAlphabet, rng: &mut rand_chacha::ChaCha8Rng) -> Complex64 {
    match alphabet {
        SymbolAlphabet::Gaussian => complex_gaussian(rng),
        SymbolAlphabet::Qpsk => qpsk_symbol(rng),
    }
}

struct Engine<'a> {
    scenario: &'a NetworkScenario,
    settings: &'a McSettings,
    modes: &'a [EstimateMode],
    deterministic_gain: Vec<f64>,
}

impl Engine<'_> {
    /// Draws channels and pilots for `trial` and builds the precoders of every
    /// mode, redrawing the whole trial when a Gram matrix is too ill-conditioned.
    fn draw(&self, trial: u64) -> Result<(RngStream, crate::channel::ChannelRealization, Vec<Vec<Precoder>>)> {
        let base = RngStream::new(self.settings.seed).for_trial(trial);
        'attempts: for attempt in 0..=self.settings.redraw_budget {
            let rng = base.with_attempt(attempt);
            let h = draw_channels(self.scenario, &rng);
            let obs = simulate_uplink_training(self.scenario, &h, &rng);
            let mut precoders = Vec::with_capacity(self.modes.len());
            for &mode in self.modes {
                let est = mmse_estimate(&obs, self.scenario, mode)?;
                match est
                    .h_hat
                    .iter()
                    .map(|e| zf_precoder(e, self.settings.condition_bound))
                    .collect::<Result<Vec<_>>>()
                {
                    Ok(p) => precoders.push(p),
                    Err(Error::SingularPrecoder { .. }) => continue 'attempts,
                    Err(e) => return Err(e),
                }
            }
            return Ok((rng, h, precoders));
        }
        Err(Error::RedrawBudgetExhausted {
            trial,
            attempts: self.settings.redraw_budget,
        })
    }

    fn trial(&self, trial: u64, accs: &mut [McAccumulator]) -> Result<()> {
        let (rng, h, precoders) = self.draw(trial)?;
        let (cells, users) = (self.scenario.cells(), self.scenario.users());
        let draws = self.settings.symbol_draws;
        for ((&mode, acc), precoders) in self.modes.iter().zip(accs.iter_mut()).zip(&precoders) {
            let one_bit = mode == EstimateMode::OneBit;
            for (l, p) in precoders.iter().enumerate() {
                let gain = match (one_bit, self.settings.transmit_gain) {
                    (false, _) => TransmitGain::Uniform(1.0),
                    (true, TransmitGainMode::DeterministicEquivalent) => TransmitGain::Uniform(self.deterministic_gain[l]),
                    (true, TransmitGainMode::PerRealization) => TransmitGain::PerAntenna(exact_transmit_gains(p)),
                };
                let aw = gain.apply(&p.w);
                acc.power[l] += p.power();
                let g: Vec<CMatrix> = (0..cells).map(|j| h.get(l, j).ad_mul(&aw)).collect();
                for (j, g) in g.iter().enumerate() {
                    for k in 0..users {
                        let u = j * users + k;
                        for m in 0..users {
                            let v = g[(k, m)];
                            if l == j && m == k {
                                acc.own[u] += v;
                                acc.own_sq[u] += v.norm_sqr();
                            } else {
                                acc.iui[u * cells + l] += v.norm_sqr();
                            }
                        }
                    }
                }
                if one_bit && draws > 0 {
                    let mut sg = rng.generator(Purpose::Symbols, l, 0);
                    let s = CMatrix::from_fn(users, draws, |_, _| symbol(self.settings.symbols, &mut sg));
                    let x_tilde = (&p.w * &s).map(quantize_sample);
                    for (j, g) in g.iter().enumerate() {
                        // h^H q = h^H x̃ - (H^H A W) s
                        let v = h.get(l, j).ad_mul(&x_tilde) - g * &s;
                        for k in 0..users {
                            acc.qn[(j * users + k) * cells + l] += v.row(k).norm_squared() / draws as f64;
                        }
                    }
                }
            }
            acc.trials += 1;
        }
        Ok(())
    }
}

/// Runs `settings.trials` trials once and accumulates statistics for each of
/// `modes`. Both architectures see the same channels and pilot noise.
///
/// Trials are cut into `settings.batches` contiguous batches processed in
/// parallel; batches are merged in trial order, so results do not depend on
/// the thread count.
pub fn mc_statistics(
    scenario: &NetworkScenario,
    settings: &McSettings,
    modes: &[EstimateMode],
) -> Result<Vec<McStatistics>> {
    if settings.trials == 0 {
        return Err(Error::config("mc.trials", "must be at least 1"));
    }
    if settings.batches == 0 {
        return Err(Error::config("mc.batches", "must be at least 1"));
    }
    let needs_gain = modes.contains(&EstimateMode::OneBit);
    let deterministic_gain = if needs_gain {
        transmit_bussgang_gain(&estimation_stats(scenario), &scenario.constants)?
    } else {
        Vec::new()
    };
    let engine = Engine {
        scenario,
        settings,
        modes,
        deterministic_gain,
    };
    let (cells, users) = (scenario.cells(), scenario.users());
    let batches = settings.batches.min(settings.trials);
    let bounds = |b: usize| b * settings.trials / batches;
    let per_batch: Vec<Vec<McAccumulator>> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut accs = vec![McAccumulator::zeros(cells, users); modes.len()];
            for t in bounds(b)..bounds(b + 1) {
                engine.trial(t as u64, &mut accs)?;
            }
            Ok(accs)
        })
        .collect::<Result<_>>()?;

    Ok(modes
        .iter()
        .enumerate()
        .map(|(i, &mode)| {
            let batches: Vec<McAccumulator> = per_batch.iter().map(|accs| accs[i].clone()).collect();
            let mut total = McAccumulator::zeros(cells, users);
            for b in &batches {
                total.merge(b);
            }
            McStatistics {
                mode,
                antennas: scenario.antennas(),
                noise_power: scenario.constants.noise_power,
                batches,
                total,
            }
        })
        .collect())
}

/// Monte-Carlo rates of one architecture at the scenario's transmit power.
pub fn mc_rate_breakdown(scenario: &NetworkScenario, settings: &McSettings, mode: EstimateMode) -> Result<RateBreakdown> {
    let stats = mc_statistics(scenario, settings, &[mode])?;
    Ok(stats[0].breakdown(scenario.constants.transmit_power))
}
