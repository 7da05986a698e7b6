//! Zero-forcing precoding, one-bit DACs and the transmit-side Bussgang gain.

use crate::estimation::EstimationStatistics;
use crate::quantization::{one_bit_quantize, QuantizedVector};
use crate::scenario::SystemConstants;
use crate::{CMatrix, Complex64, Error, Result};
use nalgebra::DVector;
use std::f64::consts::{FRAC_2_PI, PI};

/// `W = Ĥ (Ĥ^H Ĥ)^{-1}` for one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    pub w: CMatrix,
}

impl Precoder {
    pub fn antennas(&self) -> usize {
        self.w.nrows()
    }

    pub fn users(&self) -> usize {
        self.w.ncols()
    }

    /// `tr(W W^H)`
    pub fn power(&self) -> f64 {
        self.w.norm_squared()
    }

    /// `diag(W W^H)`
    pub fn antenna_powers(&self) -> Vec<f64> {
        self.w.row_iter().map(|r| r.norm_squared()).collect()
    }
}

/// Condition number of a Hermitian positive semidefinite matrix.
pub fn hermitian_condition(gram: &CMatrix) -> f64 {
    let eig = gram.clone().symmetric_eigenvalues();
    let (lo, hi) = eig
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo <= 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Solves `(Ĥ^H Ĥ) X = Ĥ^H` by Cholesky and returns `W = X^H`.
pub fn zf_precoder(h_hat: &CMatrix, condition_bound: f64) -> Result<Precoder> {
    let (m, k) = h_hat.shape();
    if m < k {
        return Err(Error::TooFewAntennas {
            antennas: m as f64,
            users: k,
        });
    }
    let gram = h_hat.ad_mul(h_hat);
    let condition = hermitian_condition(&gram);
    if !(condition <= condition_bound) {
        return Err(Error::SingularPrecoder {
            condition,
            bound: condition_bound,
        });
    }
    let chol = gram.cholesky().ok_or(Error::SingularPrecoder {
        condition,
        bound: condition_bound,
    })?;
    Ok(Precoder {
        w: chol.solve(&h_hat.adjoint()).adjoint(),
    })
}

/// Deterministic-equivalent gain `A_j = sqrt(2 K (c - 1)^2 / (π ζ_j))` with
/// the antenna count treated as continuous.
pub fn transmit_gain_at(zeta: f64, antennas: f64, users: usize) -> Result<f64> {
    let c = antennas / users as f64;
    if !(c > 1.0) {
        return Err(Error::TooFewAntennas { antennas, users });
    }
    Ok((2.0 * users as f64 * (c - 1.0).powi(2) / (PI * zeta)).sqrt())
}

/// Per-cell deterministic-equivalent transmit Bussgang gains.
pub fn transmit_bussgang_gain(stats: &EstimationStatistics, constants: &SystemConstants) -> Result<Vec<f64>> {
    stats
        .zeta
        .iter()
        .map(|&z| transmit_gain_at(z, constants.antennas as f64, constants.users))
        .collect()
}

/// Exact per-antenna Bussgang gains `sqrt(2/π) / sqrt([W W^H]_mm)` for
/// unit-variance Gaussian symbols.
pub fn exact_transmit_gains(precoder: &Precoder) -> Vec<f64> {
    let scale = FRAC_2_PI.sqrt();
    precoder.antenna_powers().into_iter().map(|p| scale / p.sqrt()).collect()
}

/// Linear gain applied to `W s` in the Bussgang model of the DAC output.
#[derive(Debug, Clone, PartialEq)]
pub enum TransmitGain {
    Uniform(f64),
    PerAntenna(Vec<f64>),
}

impl TransmitGain {
    #[inline]
    pub fn at(&self, antenna: usize) -> f64 {
        match self {
            TransmitGain::Uniform(a) => *a,
            TransmitGain::PerAntenna(v) => v[antenna],
        }
    }

    /// `diag(A) W`
    pub fn apply(&self, w: &CMatrix) -> CMatrix {
        match self {
            TransmitGain::Uniform(a) => w * Complex64::from(*a),
            TransmitGain::PerAntenna(v) => {
                let mut out = w.clone();
                for (mut row, a) in out.row_iter_mut().zip(v) {
                    row *= Complex64::from(*a);
                }
                out
            }
        }
    }
}

/// One downlink symbol vector pushed through the one-bit DACs.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitFrame {
    pub s: DVector<Complex64>,
    /// `W s`
    pub x: DVector<Complex64>,
    /// `Q(W s)`
    pub x_tilde: QuantizedVector,
    /// `x̃ - A W s`
    pub q: DVector<Complex64>,
    pub gain: TransmitGain,
    /// `P_t / M`
    pub eta: f64,
}

pub fn quantized_transmit(
    precoder: &Precoder,
    s: &DVector<Complex64>,
    gain: &TransmitGain,
    transmit_power: f64,
) -> Result<TransmitFrame> {
    if s.len() != precoder.users() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} symbols", precoder.users()),
            found: format!("{}", s.len()),
        });
    }
    if let TransmitGain::PerAntenna(v) = gain {
        if v.len() != precoder.antennas() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} antenna gains", precoder.antennas()),
                found: format!("{}", v.len()),
            });
        }
    }
    let x = &precoder.w * s;
    let x_tilde = one_bit_quantize(x.as_slice())?;
    let q = DVector::from_iterator(
        x.len(),
        x_tilde.values().iter().zip(x.iter()).enumerate().map(|(m, (xt, xv))| xt - xv * gain.at(m)),
    );
    Ok(TransmitFrame {
        s: s.clone(),
        eta: transmit_power / x.len() as f64,
        x,
        x_tilde,
        q,
        gain: gain.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::draw_channels;
    use crate::config::ExperimentConfig;
    use crate::estimation::{estimation_stats, mmse_estimate_onebit, simulate_uplink_training};
    use crate::quantization::DISTORTION_VARIANCE;
    use crate::rng::{complex_gaussian, Purpose, RngStream};
    use crate::scenario::build_scenario;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn random_matrix(m: usize, k: usize, seed: u64) -> CMatrix {
        let mut g = RngStream::new(seed).generator(Purpose::Validation, 0, 0);
        CMatrix::from_fn(m, k, |_, _| complex_gaussian(&mut g))
    }

    fn identity_error(h: &CMatrix, w: &CMatrix) -> f64 {
        let k = h.ncols();
        (h.ad_mul(w) - CMatrix::identity(k, k)).norm() / (k as f64).sqrt()
    }

    #[test]
    fn identity_estimate_gives_identity_precoder() {
        let p = zf_precoder(&CMatrix::identity(4, 4), 1e10).unwrap();
        assert!((p.w - CMatrix::identity(4, 4)).norm() < 1e-15);
    }

    #[test]
    fn matches_svd_pseudo_inverse() {
        let h = random_matrix(6, 3, 5);
        let p = zf_precoder(&h, 1e10).unwrap();
        let pinv = h.clone().svd(true, true).pseudo_inverse(1e-14).unwrap();
        let oracle = pinv.adjoint();
        for (a, b) in p.w.iter().zip(oracle.iter()) {
            assert!((a - b).norm() <= 1e-8, "{a} vs {b}");
        }
        assert!(identity_error(&h, &p.w) < 1e-8);
    }

    #[test]
    fn null_steers_other_users() {
        let h = random_matrix(64, 8, 9);
        let p = zf_precoder(&h, 1e10).unwrap();
        for m in 0..8 {
            for k in 0..8 {
                let v = h.column(m).dotc(&p.w.column(k)).norm();
                if m == k {
                    assert!((v - 1.0).abs() < 1e-8);
                } else {
                    assert!(v <= 1e-8 * h.column(m).norm() * p.w.column(k).norm());
                }
            }
        }
    }

    #[test]
    fn rejects_degenerate_estimates() {
        let mut h = random_matrix(8, 3, 1);
        let c0 = h.column(0).clone_owned();
        h.set_column(2, &c0);
        assert!(matches!(zf_precoder(&h, 1e10), Err(Error::SingularPrecoder { .. })));
        assert!(matches!(zf_precoder(&random_matrix(2, 3, 1), 1e10), Err(Error::TooFewAntennas { .. })));
        assert!(matches!(zf_precoder(&random_matrix(8, 3, 1), 1.0), Err(Error::SingularPrecoder { .. })));
    }

    #[test]
    fn true_channel_gain_splits_into_identity_plus_error_term() {
        let s = build_scenario(&ExperimentConfig::default()).unwrap();
        let rng = RngStream::new(3);
        let h = draw_channels(&s, &rng);
        let est = mmse_estimate_onebit(&simulate_uplink_training(&s, &h, &rng), &s).unwrap();
        for j in 0..4 {
            let p = zf_precoder(&est.h_hat[j], 1e10).unwrap();
            let h_true = h.get(j, j);
            let err = h_true - &est.h_hat[j];
            let lhs = h_true.ad_mul(&p.w);
            let rhs = CMatrix::identity(8, 8) + err.ad_mul(&p.w);
            assert!((&lhs - &rhs).norm() <= 1e-8 * lhs.norm());
        }
    }

    #[test]
    fn transmit_gain_examples() {
        let a = transmit_gain_at(3.0 * PI / 4.0, 8.0, 2).unwrap();
        assert!((a - 2.2053).abs() < 1e-4, "{a}");
        // independent route: sqrt(36 / (π ζ))
        assert_relative_eq!(a, (36.0 / (PI * 3.0 * PI / 4.0)).sqrt(), max_relative = 1e-14);
        let doubled = transmit_gain_at(3.0 * PI / 8.0, 8.0, 2).unwrap();
        assert_relative_eq!(doubled / a, 2f64.sqrt(), max_relative = 1e-14);
        assert!(matches!(transmit_gain_at(1.0, 8.0, 8), Err(Error::TooFewAntennas { .. })));
    }

    #[test]
    fn frame_is_on_the_alphabet_with_energy_m() {
        let h = random_matrix(32, 4, 2);
        let p = zf_precoder(&h, 1e10).unwrap();
        let s = DVector::from_fn(4, |i, _| Complex64::new(i as f64 - 1.5, 0.3));
        let f = quantized_transmit(&p, &s, &TransmitGain::Uniform(2.0), 10.0).unwrap();
        assert_relative_eq!(f.x_tilde.energy(), 32.0, max_relative = 1e-14);
        assert_relative_eq!(f.eta * f.x_tilde.energy(), 10.0);
        for m in 0..32 {
            assert_eq!(f.q[m], f.x_tilde.values()[m] - f.x[m] * 2.0);
        }
        let bad = DVector::from_element(3, Complex64::new(1.0, 0.0));
        assert!(quantized_transmit(&p, &bad, &TransmitGain::Uniform(1.0), 1.0).is_err());
    }

    /// The deterministic equivalent against a per-antenna least-squares
    /// regression of `Q(Ws)` on `Ws` across symbol draws.
    #[test]
    fn deterministic_gain_matches_regression() {
        let sc = build_scenario(&ExperimentConfig::default()).unwrap();
        let stats = estimation_stats(&sc);
        let a = transmit_bussgang_gain(&stats, &sc.constants).unwrap();
        let rng = RngStream::new(17);
        let mut num = vec![0.0; 4];
        let mut den = vec![0.0; 4];
        for t in 0..40 {
            let rng = rng.for_trial(t);
            let h = draw_channels(&sc, &rng);
            let est = mmse_estimate_onebit(&simulate_uplink_training(&sc, &h, &rng), &sc).unwrap();
            for j in 0..4 {
                let p = zf_precoder(&est.h_hat[j], 1e10).unwrap();
                let mut g = rng.generator(Purpose::Symbols, j, 0);
                for _ in 0..50 {
                    let s = DVector::from_fn(8, |_, _| complex_gaussian(&mut g));
                    let f = quantized_transmit(&p, &s, &TransmitGain::Uniform(a[j]), 1.0).unwrap();
                    for (xt, x) in f.x_tilde.values().iter().zip(f.x.iter()) {
                        num[j] += (xt * x.conj()).re;
                        den[j] += x.norm_sqr();
                    }
                }
            }
        }
        for j in 0..4 {
            let fitted = num[j] / den[j];
            assert!((fitted / a[j] - 1.0).abs() < 0.05, "cell {j}: {fitted} vs {}", a[j]);
        }
    }

    #[test]
    fn exact_gain_gives_uncorrelated_distortion_with_fixed_variance() {
        let h = random_matrix(128, 8, 23);
        let p = zf_precoder(&h, 1e10).unwrap();
        let gain = TransmitGain::PerAntenna(exact_transmit_gains(&p));
        let mut g = RngStream::new(23).generator(Purpose::Symbols, 0, 0);
        let draws = 20_000;
        let (mut qq, mut qq_sq) = (vec![0.0; 128], vec![0.0; 128]);
        let (mut xq, mut xq_sq) = (vec![Complex64::new(0.0, 0.0); 128], vec![0.0; 128]);
        for _ in 0..draws {
            let s = DVector::from_fn(8, |_, _| complex_gaussian(&mut g));
            let f = quantized_transmit(&p, &s, &gain, 1.0).unwrap();
            for m in 0..128 {
                let e = f.q[m].norm_sqr();
                qq[m] += e;
                qq_sq[m] += e * e;
                let c = f.x[m] * f.q[m].conj();
                xq[m] += c;
                xq_sq[m] += c.norm_sqr();
            }
        }
        let n = draws as f64;
        let mean_var = qq.iter().sum::<f64>() / (128.0 * n);
        let se = ((qq_sq.iter().sum::<f64>() / (128.0 * n) - mean_var * mean_var) / (128.0 * n)).sqrt();
        assert!((mean_var - DISTORTION_VARIANCE).abs() < 4.0 * se, "{mean_var} ± {se}");
        let within = (0..128)
            .filter(|&m| (xq[m] / n).norm() < 3.0 * (xq_sq[m] / n / n).sqrt())
            .count();
        assert!(within >= 120, "{within}/128 cross terms inside 3 SE");
    }

    proptest! {
        #[test]
        fn quantized_output_ignores_positive_rescaling(seed in 0u64..500, scale in 1e-3f64..1e3) {
            let h = random_matrix(16, 3, seed);
            let p = zf_precoder(&h, 1e12).unwrap();
            let scaled = Precoder { w: &p.w * Complex64::from(scale) };
            let mut g = RngStream::new(seed).generator(Purpose::Symbols, 0, 0);
            let s = DVector::from_fn(3, |_, _| complex_gaussian(&mut g));
            let a = quantized_transmit(&p, &s, &TransmitGain::Uniform(1.0), 1.0).unwrap();
            let b = quantized_transmit(&scaled, &s, &TransmitGain::Uniform(1.0), 1.0).unwrap();
            prop_assert_eq!(a.x_tilde, b.x_tilde);
        }
    }
}
