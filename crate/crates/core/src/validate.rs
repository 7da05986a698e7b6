//! Numerical invariant suite behind the `validate` command.

use crate::channel::draw_channels;
use crate::config::{ExperimentConfig, OutputFormat};
use crate::error::{Error, Result};
use crate::estimation::{estimation_stats, mmse_estimate_onebit, simulate_uplink_training, EstimateMode};
use crate::precoding::{exact_transmit_gains, zf_precoder, Precoder};
use crate::quantization::{arcsin_law_covariance, quantize_sample, DISTORTION_VARIANCE};
use crate::rates::{closed_form, degradation_ratios, mc_statistics, McSettings};
use crate::rng::{complex_gaussian, Purpose, RngStream};
use crate::scenario::{build_scenario, db_to_linear, NetworkScenario};
use crate::sweep::{TOOL_NAME, TOOL_VERSION};
use crate::{CMatrix, Complex64};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::FRAC_2_PI;
use std::io::Write;
use std::path::Path;

const IDENTITY_TOL: f64 = 1e-12;
const ZF_TOL: f64 = 1e-8;
const Z_LIMIT: f64 = 3.0;
/// Largest share of entries allowed outside `Z_LIMIT` standard errors
/// (about 0.27% are expected by chance).
const OUTLIER_SHARE: f64 = 0.01;
const NOISE_BATCHES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    InsufficientPrecision,
}

impl CheckStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::InsufficientPrecision => "insufficient-precision",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub status: CheckStatus,
    /// The measured quantity compared against `threshold`.
    pub statistic: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckOutcome {
    fn graded(name: &str, statistic: f64, threshold: f64, detail: String) -> Self {
        let status = if statistic <= threshold {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        Self {
            name: name.into(),
            status,
            statistic,
            threshold,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub checks: Vec<CheckOutcome>,
}

impl ValidationReport {
    /// True when no check failed. Checks gated on precision do not count as
    /// failures.
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn render(&self, format: OutputFormat) -> Result<Vec<u8>> {
        match format {
            OutputFormat::Json => {
                let mut out = serde_json::to_vec_pretty(self)?;
                out.push(b'\n');
                Ok(out)
            }
            OutputFormat::Csv => {
                let mut out = Vec::new();
                writeln!(out, "# tool: {} {}", self.tool, self.version)?;
                writeln!(out, "# command: validate")?;
                writeln!(out, "# seed: {}", self.seed)?;
                writeln!(out, "# config_hash: {}", self.config_hash)?;
                let mut w = csv::Writer::from_writer(out);
                w.write_record(["check", "status", "statistic", "threshold", "detail"])?;
                for c in &self.checks {
                    w.write_record([
                        c.name.as_str(),
                        c.status.as_str(),
                        &c.statistic.to_string(),
                        &c.threshold.to_string(),
                        &c.detail,
                    ])?;
                }
                w.into_inner().map_err(|e| Error::Output(e.to_string()))
            }
        }
    }

    pub fn write(&self, path: Option<&Path>, format: OutputFormat) -> Result<()> {
        let bytes = self.render(format)?;
        match path {
            Some(p) => std::fs::write(p, bytes).map_err(|e| Error::Output(format!("{}: {e}", p.display()))),
            None => Ok(std::io::stdout().write_all(&bytes)?),
        }
    }
}

/// Largest relative deviation of the one-bit estimate variance from `2/π`
/// times the unquantized one.
pub fn check_t_identity(scenario: &NetworkScenario) -> CheckOutcome {
    let stats = estimation_stats(scenario);
    let worst = stats
        .t
        .iter()
        .zip(stats.t_fr.iter())
        .map(|(t, fr)| (t - FRAC_2_PI * fr).abs() / t.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    CheckOutcome::graded("t-identity", worst, IDENTITY_TOL, "max |t - (2/pi) t_fr| / t".into())
}

/// Pilot contamination is unaffected by one-bit quantization.
pub fn check_pc_ratio(scenario: &NetworkScenario) -> Result<CheckOutcome> {
    let ratios = degradation_ratios(scenario)?;
    let worst = ratios.iter().map(|r| (r.pc - 1.0).abs()).fold(0.0, f64::max);
    Ok(CheckOutcome::graded("pc-ratio", worst, IDENTITY_TOL, "max |PC_one / PC_fr - 1|".into()))
}

fn onebit_precoder(scenario: &NetworkScenario, stream: &RngStream, cell: usize, bound: f64) -> Result<Precoder> {
    let h = draw_channels(scenario, stream);
    let est = mmse_estimate_onebit(&simulate_uplink_training(scenario, &h, stream), scenario)?;
    zf_precoder(&est.h_hat[cell], bound)
}

/// `Ĥ^H W = I` for the one-bit estimates of every cell over `draws` channel
/// realizations, measured as a relative Frobenius error.
pub fn check_zf_identity(scenario: &NetworkScenario, seed: u64, draws: u64, bound: f64) -> Result<CheckOutcome> {
    let k = scenario.users();
    let mut worst: f64 = 0.0;
    for t in 0..draws {
        let stream = RngStream::new(seed).for_trial(t);
        let h = draw_channels(scenario, &stream);
        let est = mmse_estimate_onebit(&simulate_uplink_training(scenario, &h, &stream), scenario)?;
        for h_hat in &est.h_hat {
            let w = zf_precoder(h_hat, bound)?;
            let err = (h_hat.adjoint() * &w.w - CMatrix::identity(k, k)).norm() / (k as f64).sqrt();
            worst = worst.max(err);
        }
    }
    Ok(CheckOutcome::graded(
        "zf-identity",
        worst,
        ZF_TOL,
        format!("max ||H^H W - I||_F / sqrt(K) over {draws} channel draws"),
    ))
}

fn gaussian_symbols(stream: &RngStream, entity: usize, users: usize, draws: usize) -> CMatrix {
    let mut g = stream.generator(Purpose::Validation, entity, 0);
    CMatrix::from_fn(users, draws, |_, _| complex_gaussian(&mut g))
}

/// Columns of `q = Q(x) - A x` for `x = W s`, with the exact per-antenna gain.
fn distortion(precoder: &Precoder, x: &CMatrix) -> CMatrix {
    let gains = exact_transmit_gains(precoder);
    CMatrix::from_fn(x.nrows(), x.ncols(), |m, n| quantize_sample(x[(m, n)]) - x[(m, n)] * gains[m])
}

/// Counts real components whose z-score exceeds `Z_LIMIT`; returns
/// (outliers, components, max |z|).
fn z_outliers(mean: &CMatrix, target: &CMatrix, se_re: &[f64], se_im: &[f64]) -> (usize, usize, f64) {
    let n = mean.nrows();
    let (mut out, mut total, mut max_z) = (0, 0, 0.0_f64);
    for i in 0..n {
        for j in 0..mean.ncols() {
            let d = mean[(i, j)] - target[(i, j)];
            let idx = i * mean.ncols() + j;
            let mut parts = vec![(d.re, se_re[idx])];
            if se_im[idx] > 0.0 {
                parts.push((d.im, se_im[idx]));
            }
            for (v, se) in parts {
                let z = if se > 0.0 { v.abs() / se } else if v == 0.0 { 0.0 } else { f64::INFINITY };
                total += 1;
                max_z = max_z.max(z);
                if z > Z_LIMIT {
                    out += 1;
                }
            }
        }
    }
    (out, total, max_z)
}

fn outlier_outcome(name: &str, (out, total, max_z): (usize, usize, f64), what: String) -> CheckOutcome {
    let share = out as f64 / total as f64;
    CheckOutcome::graded(
        name,
        share,
        OUTLIER_SHARE,
        format!("{what}; {out} of {total} components beyond {Z_LIMIT} SE, max |z| = {max_z:.2}"),
    )
}

/// Sampled covariance of the transmit distortion for one fixed precoder
/// against the exact arcsin-law prediction, entry by entry.
pub fn check_arcsin_law(scenario: &NetworkScenario, seed: u64, draws: usize, bound: f64) -> Result<CheckOutcome> {
    let stream = RngStream::new(seed).for_trial(0);
    let w = onebit_precoder(scenario, &stream, 0, bound)?;
    let predicted = arcsin_law_covariance(&(&w.w * w.w.adjoint()))?;
    let x = &w.w * gaussian_symbols(&stream, 0, scenario.users(), draws);
    let q = distortion(&w, &x);
    let m = q.nrows();
    let n = draws as f64;
    let mean = &q * q.adjoint() / Complex64::from(n);
    let mut se_re = vec![0.0; m * m];
    let mut se_im = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            let (mut sr, mut si) = (0.0, 0.0);
            for t in 0..draws {
                let v = q[(i, t)] * q[(j, t)].conj();
                sr += v.re * v.re;
                si += v.im * v.im;
            }
            let mu = mean[(i, j)];
            let var = |s: f64, mu: f64| ((s / n - mu * mu).max(0.0) / (n - 1.0)).sqrt();
            se_re[i * m + j] = var(sr, mu.re);
            se_im[i * m + j] = if i == j { 0.0 } else { var(si, mu.im) };
        }
    }
    Ok(outlier_outcome(
        "arcsin-law",
        z_outliers(&mean, &predicted, &se_re, &se_im),
        format!("M = {m}, {draws} symbol draws on one precoder"),
    ))
}

/// Per-channel means of `q q^H` and `x q^H`, summed over a batch of channels
/// together with their squared components.
struct NoiseMoments {
    channels: usize,
    qq: CMatrix,
    xq: CMatrix,
    qq_sq: Vec<(f64, f64)>,
    xq_sq: Vec<(f64, f64)>,
}

impl NoiseMoments {
    fn zeros(m: usize) -> Self {
        Self {
            channels: 0,
            qq: CMatrix::zeros(m, m),
            xq: CMatrix::zeros(m, m),
            qq_sq: vec![(0.0, 0.0); m * m],
            xq_sq: vec![(0.0, 0.0); m * m],
        }
    }

    fn add(&mut self, qq: &CMatrix, xq: &CMatrix) {
        self.channels += 1;
        self.qq += qq;
        self.xq += xq;
        for (acc, v) in self.qq_sq.iter_mut().zip(qq.transpose().iter()) {
            acc.0 += v.re * v.re;
            acc.1 += v.im * v.im;
        }
        for (acc, v) in self.xq_sq.iter_mut().zip(xq.transpose().iter()) {
            acc.0 += v.re * v.re;
            acc.1 += v.im * v.im;
        }
    }

    fn merge(&mut self, other: &Self) {
        self.channels += other.channels;
        self.qq += &other.qq;
        self.xq += &other.xq;
        for (a, b) in self.qq_sq.iter_mut().zip(&other.qq_sq).chain(self.xq_sq.iter_mut().zip(&other.xq_sq)) {
            a.0 += b.0;
            a.1 += b.1;
        }
    }

    /// Mean over channels and its standard errors, split into real and
    /// imaginary parts; diagonal imaginary parts of `q q^H` are identically 0.
    fn summarize(&self, hermitian: bool) -> (CMatrix, Vec<f64>, Vec<f64>) {
        let c = self.channels as f64;
        let se = |sum: &CMatrix, sq: &[(f64, f64)]| {
            let m = sum.nrows();
            let mean = sum / Complex64::from(c);
            let mut re = vec![0.0; m * m];
            let mut im = vec![0.0; m * m];
            for i in 0..m {
                for j in 0..m {
                    let (sr, si) = sq[i * m + j];
                    let mu = mean[(i, j)];
                    re[i * m + j] = ((sr / c - mu.re * mu.re).max(0.0) / (c - 1.0)).sqrt();
                    im[i * m + j] = if hermitian && i == j {
                        0.0
                    } else {
                        ((si / c - mu.im * mu.im).max(0.0) / (c - 1.0)).sqrt()
                    };
                }
            }
            (mean, re, im)
        };
        if hermitian {
            se(&self.qq, &self.qq_sq)
        } else {
            se(&self.xq, &self.xq_sq)
        }
    }
}

/// Transmit distortion over an ensemble of channels: its covariance against
/// `(1 - 2/π) I` and its correlation with the DAC input against zero. Each
/// channel contributes one sample mean over `draws` Gaussian symbol vectors;
/// standard errors come from the spread across channels.
pub fn check_quantization_noise(
    scenario: &NetworkScenario,
    seed: u64,
    channels: usize,
    draws: usize,
    bound: f64,
) -> Result<(CheckOutcome, CheckOutcome)> {
    if channels < 2 {
        return Err(Error::config("validation.noise_channels", "must be at least 2"));
    }
    let m = scenario.antennas();
    let k = scenario.users();
    let batches = NOISE_BATCHES.min(channels);
    let bounds = |b: usize| b * channels / batches;
    let parts: Vec<NoiseMoments> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut acc = NoiseMoments::zeros(m);
            for c in bounds(b)..bounds(b + 1) {
                // offset keeps these draws apart from the arcsin-law check
                let stream = RngStream::new(seed).for_trial(1 + c as u64);
                let w = onebit_precoder(scenario, &stream, 0, bound)?;
                let x = &w.w * gaussian_symbols(&stream, 1, k, draws);
                let q = distortion(&w, &x);
                let scale = Complex64::from(1.0 / draws as f64);
                acc.add(&(&q * q.adjoint() * scale), &(&x * q.adjoint() * scale));
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total = NoiseMoments::zeros(m);
    for p in &parts {
        total.merge(p);
    }
    let samples = channels * draws;
    let (qq, re, im) = total.summarize(true);
    let target = CMatrix::identity(m, m) * Complex64::from(DISTORTION_VARIANCE);
    let cov = outlier_outcome(
        "quantization-noise-covariance",
        z_outliers(&qq, &target, &re, &im),
        format!("M = {m}, K = {k}, {samples} samples over {channels} channels vs (1-2/pi) I"),
    );
    let (xq, re, im) = total.summarize(false);
    let orth = outlier_outcome(
        "bussgang-orthogonality",
        z_outliers(&xq, &CMatrix::zeros(m, m), &re, &im),
        format!("E[x q^H] = 0 over {samples} samples"),
    );
    Ok((cov, orth))
}

/// Per-user relative gap between simulated and closed-form rates at each
/// power of `validation.gap_pt_db`, one check per architecture.
pub fn check_mc_gap(config: &ExperimentConfig, scenario: &NetworkScenario) -> Result<Vec<CheckOutcome>> {
    let v = &config.validation;
    let modes = [EstimateMode::OneBit, EstimateMode::FullResolution];
    let mc = mc_statistics(scenario, &McSettings::from(&config.mc), &modes)?;
    let mut out = Vec::new();
    for (mode, stats) in modes.iter().zip(&mc) {
        let (mut gap, mut rel_se, mut at) = (0.0_f64, 0.0_f64, (f64::NAN, 0, 0));
        for &pt in &v.gap_pt_db {
            let s = scenario.with_transmit_power(db_to_linear(pt))?;
            let cf = closed_form(&s, *mode)?;
            let sim = stats.breakdown(s.constants.transmit_power);
            for j in 0..s.cells() {
                for k in 0..s.users() {
                    let c = cf.rate(j, k);
                    let g = (sim.rate(j, k) - c).abs() / c;
                    if g > gap {
                        gap = g;
                        at = (pt, j, k);
                    }
                    if let Some(se) = &sim.rate_se {
                        rel_se = rel_se.max(se.at(j, k) / c);
                    } else {
                        rel_se = f64::INFINITY;
                    }
                }
            }
        }
        let name = match mode {
            EstimateMode::OneBit => "mc-gap-onebit",
            EstimateMode::FullResolution => "mc-gap-fr",
        };
        let detail = format!(
            "max per-user relative gap at pt = {} dB, cell {}, user {}; {} trials, max relative SE {rel_se:.4}",
            at.0, at.1, at.2, config.mc.trials
        );
        let mut outcome = CheckOutcome::graded(name, gap, v.gap_tolerance, detail);
        if config.mc.trials < v.min_trials || Z_LIMIT * rel_se > v.gap_tolerance / 2.0 {
            outcome.status = CheckStatus::InsufficientPrecision;
        }
        out.push(outcome);
    }
    Ok(out)
}

/// Runs every check on the configured scenario.
pub fn run_validation(config: &ExperimentConfig) -> Result<ValidationReport> {
    config.validate()?;
    let scenario = build_scenario(config)?;
    let seed = config.mc.seed;
    let bound = config.mc.condition_bound;
    let v = &config.validation;
    let mut checks = vec![
        check_t_identity(&scenario),
        check_pc_ratio(&scenario)?,
        check_zf_identity(&scenario, seed, 20, bound)?,
        check_arcsin_law(&scenario, seed, v.arcsin_draws, bound)?,
    ];
    let (cov, orth) = check_quantization_noise(&scenario, seed, v.noise_channels, v.noise_draws, bound)?;
    checks.extend([cov, orth]);
    checks.extend(check_mc_gap(config, &scenario)?);
    Ok(ValidationReport {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        config_hash: config.hash(),
        seed,
        checks,
    })
}
