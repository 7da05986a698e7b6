//! Ergodic downlink rates: Monte-Carlo, closed forms and the large-array
//! limit.

mod closed_form;
mod monte_carlo;

pub use closed_form::{
    asymptotic_rate, closed_form, closed_form_at, closed_form_fr, closed_form_onebit, degradation_ratios,
    DegradationRatios,
};
pub use monte_carlo::{mc_rate_breakdown, mc_statistics, McAccumulator, McSettings, McStatistics};

use crate::grid::UserGrid;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateMode {
    McOneBit,
    McFr,
    CfOneBit,
    CfFr,
    Asymptotic,
}

impl RateMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RateMode::McOneBit => "mc-onebit",
            RateMode::McFr => "mc-fr",
            RateMode::CfOneBit => "cf-onebit",
            RateMode::CfFr => "cf-fr",
            RateMode::Asymptotic => "asymptotic",
        }
    }

    pub fn is_one_bit(self) -> bool {
        matches!(self, RateMode::McOneBit | RateMode::CfOneBit)
    }
}

/// SQINR terms of one user. Everything except `ds` is normalized by `ds`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UserTerms {
    /// Desired-signal power (W); `None` for the asymptote.
    pub ds: Option<f64>,
    pub cu: f64,
    pub qn: f64,
    pub iui: f64,
    /// `None` in Monte-Carlo modes, where pilot contamination is part of `iui`.
    pub pc: Option<f64>,
    pub tn: f64,
    pub gamma: f64,
    pub rate: f64,
}

impl UserTerms {
    pub(crate) fn from_normalized(ds: Option<f64>, cu: f64, qn: f64, iui: f64, pc: Option<f64>, tn: f64) -> Self {
        let gamma = 1.0 / (cu + qn + iui + pc.unwrap_or(0.0) + tn);
        Self {
            ds,
            cu,
            qn,
            iui,
            pc,
            tn,
            gamma,
            rate: (1.0 + gamma).log2(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateBreakdown {
    pub mode: RateMode,
    pub users: UserGrid<UserTerms>,
    /// Jackknife standard error of each user's rate (Monte-Carlo only).
    pub rate_se: Option<UserGrid<f64>>,
    pub sum_rate: f64,
    pub sum_rate_se: Option<f64>,
}

impl RateBreakdown {
    pub(crate) fn new(mode: RateMode, users: UserGrid<UserTerms>) -> Self {
        let sum_rate = users.iter().map(|u| u.rate).sum();
        Self {
            mode,
            users,
            rate_se: None,
            sum_rate,
            sum_rate_se: None,
        }
    }

    pub fn rate(&self, cell: usize, user: usize) -> f64 {
        self.users.get(cell, user).rate
    }

    /// Sum rate divided by `L K`.
    pub fn per_user(&self) -> f64 {
        self.sum_rate / (self.users.cells() * self.users.users()) as f64
    }

    pub fn per_user_se(&self) -> Option<f64> {
        self.sum_rate_se
            .map(|se| se / (self.users.cells() * self.users.users()) as f64)
    }
}
