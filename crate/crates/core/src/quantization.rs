//! One-bit quantizer, Bussgang gains and the arcsin-law distortion covariance.

use crate::grid::UserGrid;
use crate::scenario::NetworkScenario;
use crate::{CMatrix, Complex64, Error, Result};
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_2_PI};

/// Clamp slack for arcsin arguments that overshoot ±1 through rounding.
pub const ARCSIN_TOLERANCE: f64 = 1e-9;

/// Diagonal entry of the one-bit distortion covariance for Gaussian input.
pub const DISTORTION_VARIANCE: f64 = 1.0 - FRAC_2_PI;

/// `Q(z) = (sign(Re z) + j sign(Im z)) / √2` with `sign(0) = +1`.
///
/// No NaN check; use [`one_bit_quantize`] for untrusted input.
#[inline]
pub fn quantize_sample(z: Complex64) -> Complex64 {
    Complex64::new(
        if z.re >= 0.0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 },
        if z.im >= 0.0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 },
    )
}

/// Output of the one-bit quantizer: every element lies in `(±1 ± j)/√2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedVector(Vec<Complex64>);

impl QuantizedVector {
    pub fn values(&self) -> &[Complex64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `‖x̃‖²`, equal to the length.
    pub fn energy(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum()
    }
}

pub fn one_bit_quantize(input: &[Complex64]) -> Result<QuantizedVector> {
    if let Some(index) = input.iter().position(|z| z.re.is_nan() || z.im.is_nan()) {
        return Err(Error::NonFinite { index });
    }
    Ok(QuantizedVector(input.iter().copied().map(quantize_sample).collect()))
}

/// Diagonal Bussgang gain `A = sqrt(2/π) diag(R)^{-1/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BussgangOperator {
    pub gains: Vec<f64>,
}

impl BussgangOperator {
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        x.iter().zip(&self.gains).map(|(z, g)| z * *g).collect()
    }
}

pub fn bussgang_gain_diag(input_variances: &[f64]) -> Result<BussgangOperator> {
    let scale = FRAC_2_PI.sqrt();
    let gains = input_variances
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if value > 0.0 && value.is_finite() {
                Ok(scale / value.sqrt())
            } else {
                Err(Error::NonPositiveVariance { index, value })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BussgangOperator { gains })
}

fn clamped_unit(value: f64, row: usize, col: usize) -> Result<f64> {
    if value.abs() > 1.0 + ARCSIN_TOLERANCE || value.is_nan() {
        return Err(Error::InvalidCovariance { row, col, value });
    }
    Ok(value.clamp(-1.0, 1.0))
}

/// Covariance of `q = Q(y) - A y` for `y ~ CN(0, R_yy)`:
///
/// `R_qq = (2/π)(asin(B) + j asin(C)) - (2/π)(B + jC)`, where `B` and `C` are
/// the real and imaginary parts of `R_yy` normalized by `diag(R_yy)^{-1/2}`
/// on both sides.
pub fn arcsin_law_covariance(r_yy: &CMatrix) -> Result<CMatrix> {
    let n = r_yy.nrows();
    if r_yy.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: "square matrix".into(),
            found: format!("{}x{}", n, r_yy.ncols()),
        });
    }
    let scale: Vec<f64> = (0..n)
        .map(|i| {
            let d = r_yy[(i, i)].re;
            if d > 0.0 && d.is_finite() {
                Ok(1.0 / d.sqrt())
            } else {
                Err(Error::NonPositiveVariance { index: i, value: d })
            }
        })
        .collect::<Result<_>>()?;

    let mut out = CMatrix::zeros(n, n);
    for i in 0..n {
        // asin is steep at 1, so rounding in the normalized diagonal would
        // leak into R_qq; the diagonal is fixed analytically instead
        out[(i, i)] = Complex64::new(DISTORTION_VARIANCE, 0.0);
        for j in (0..n).filter(|&j| j != i) {
            let r = r_yy[(i, j)] * (scale[i] * scale[j]);
            let b = clamped_unit(r.re, i, j)?;
            let c = clamped_unit(r.im, i, j)?;
            out[(i, j)] = Complex64::new(
                FRAC_2_PI * (b.asin() - b),
                FRAC_2_PI * (c.asin() - c),
            );
        }
    }
    Ok(out)
}

/// Variance of each entry of the received pilot for user `k` at BS `j`:
/// `Σ_l K ρ_p β_jlk + 1`.
pub fn pilot_input_variance(scenario: &NetworkScenario, j: usize, k: usize) -> f64 {
    let c = &scenario.constants;
    let load = c.users as f64 * c.pilot_snr;
    (0..c.cells).map(|l| load * scenario.beta(j, l, k)).sum::<f64>() + 1.0
}

/// Bussgang gains of the quantized uplink training signal,
/// `ā_jk = sqrt(2 / (π (Σ_l K ρ_p β_jlk + 1)))`.
pub fn training_bussgang_gains(scenario: &NetworkScenario) -> UserGrid<f64> {
    UserGrid::from_fn(scenario.cells(), scenario.users(), |j, k| {
        (FRAC_2_PI / pilot_input_variance(scenario, j, k)).sqrt()
    })
}
