//! Network geometry, large-scale fading and system constants.

use crate::config::{ExperimentConfig, PilotSnr, PlacementMode};
use crate::rng::{Purpose, RngStream};
use crate::{Error, Result};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// BS coordinates of the reference layout: corners of a 525 m square.
pub const DEFAULT_BS_POSITIONS: [[f64; 3]; 4] = [
    [0.0, 0.0, 0.0],
    [525.0, 0.0, 0.0],
    [0.0, 525.0, 0.0],
    [525.0, 525.0, 0.0],
];

/// dB to linear power ratio.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConstants {
    /// `L`
    pub cells: usize,
    /// `M`
    pub antennas: usize,
    /// `K`
    pub users: usize,
    /// Average downlink transmit power per BS (W).
    pub transmit_power: f64,
    /// Receiver thermal noise power (W).
    pub noise_power: f64,
    /// Uplink pilot SNR (linear).
    pub pilot_snr: f64,
}

impl SystemConstants {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidScenario(m));
        if self.cells == 0 || self.users == 0 {
            return fail("need at least one cell and one user".into());
        }
        if self.users > self.antennas {
            return fail(format!("K = {} exceeds M = {}", self.users, self.antennas));
        }
        if !(self.transmit_power > 0.0 && self.transmit_power.is_finite()) {
            return fail(format!("transmit power must be positive, got {}", self.transmit_power));
        }
        if !(self.noise_power > 0.0 && self.noise_power.is_finite()) {
            return fail(format!("noise power must be positive, got {}", self.noise_power));
        }
        if !(self.pilot_snr >= 0.0 && self.pilot_snr.is_finite()) {
            return fail(format!("pilot SNR must be non-negative, got {}", self.pilot_snr));
        }
        Ok(())
    }

    /// `c = M / K`
    pub fn load_ratio(&self) -> f64 {
        self.antennas as f64 / self.users as f64
    }

    /// Pilot length `tau_p`, fixed to `K` (identity pilot matrices).
    pub fn pilot_length(&self) -> usize {
        self.users
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub bs_positions: Vec<[f64; 3]>,
    /// `user_positions[l][k]`: user `k` of cell `l`.
    pub user_positions: Vec<Vec<[f64; 3]>>,
    pub placement: PlacementMode,
    pub circle_radius: f64,
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

impl Geometry {
    /// Users on a circle of `radius` around each BS, in the BS plane.
    ///
    /// Equally spaced users sit at `offset + 2πk/K`; random placement draws
    /// each angle uniformly from the `Placement` stream of `seed`.
    pub fn on_circles(
        bs_positions: Vec<[f64; 3]>,
        users: usize,
        radius: f64,
        offset_rad: f64,
        placement: PlacementMode,
        seed: u64,
    ) -> Result<Self> {
        if placement == PlacementMode::Explicit {
            return Err(Error::config(
                "scenario.placement",
                "explicit placement needs scenario.user_positions",
            ));
        }
        let user_positions = bs_positions
            .iter()
            .enumerate()
            .map(|(l, bs)| {
                let angles: Vec<f64> = match placement {
                    PlacementMode::EquallySpacedCircle => (0..users)
                        .map(|k| offset_rad + 2.0 * PI * k as f64 / users as f64)
                        .collect(),
                    PlacementMode::RandomCircle => {
                        let mut rng = RngStream::new(seed).generator(Purpose::Placement, l, 0);
                        (0..users).map(|_| rng.random::<f64>() * 2.0 * PI).collect()
                    }
                    PlacementMode::Explicit => unreachable!(),
                };
                angles
                    .into_iter()
                    .map(|a| [bs[0] + radius * a.cos(), bs[1] + radius * a.sin(), bs[2]])
                    .collect()
            })
            .collect();
        Ok(Self {
            bs_positions,
            user_positions,
            placement,
            circle_radius: radius,
        })
    }

    /// Distance from BS `j` to user `k` of cell `l`.
    pub fn distance(&self, j: usize, l: usize, k: usize) -> f64 {
        distance(&self.bs_positions[j], &self.user_positions[l][k])
    }
}

/// `beta[j][l][k]`: attenuation from BS `j` to user `k` of cell `l`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargeScaleFading {
    cells: usize,
    users: usize,
    beta: Vec<f64>,
    pub alpha: Option<f64>,
    pub pathloss_const: Option<f64>,
}

impl LargeScaleFading {
    /// `beta_jlk = pathloss_const / d_jlk^alpha`.
    pub fn from_geometry(geometry: &Geometry, alpha: f64, pathloss_const: f64) -> Result<Self> {
        let cells = geometry.bs_positions.len();
        let users = geometry.user_positions.first().map_or(0, Vec::len);
        if geometry.user_positions.len() != cells
            || geometry.user_positions.iter().any(|u| u.len() != users)
        {
            return Err(Error::InvalidScenario(
                "every cell needs the same number of users".into(),
            ));
        }
        let mut beta = Vec::with_capacity(cells * cells * users);
        for j in 0..cells {
            for l in 0..cells {
                for k in 0..users {
                    let d = geometry.distance(j, l, k);
                    if !(d > 0.0) {
                        return Err(Error::InvalidScenario(format!(
                            "user {k} of cell {l} coincides with BS {j}"
                        )));
                    }
                    beta.push(pathloss_const / d.powf(alpha));
                }
            }
        }
        let fading = Self {
            cells,
            users,
            beta,
            alpha: Some(alpha),
            pathloss_const: Some(pathloss_const),
        };
        fading.validate()?;
        Ok(fading)
    }

    pub fn from_nested(beta: &[Vec<Vec<f64>>]) -> Result<Self> {
        let cells = beta.len();
        let users = beta.first().and_then(|b| b.first()).map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(cells * cells * users);
        for (j, per_cell) in beta.iter().enumerate() {
            if per_cell.len() != cells {
                return Err(Error::InvalidScenario(format!(
                    "beta[{j}] has {} cells, expected {cells}",
                    per_cell.len()
                )));
            }
            for (l, per_user) in per_cell.iter().enumerate() {
                if per_user.len() != users {
                    return Err(Error::InvalidScenario(format!(
                        "beta[{j}][{l}] has {} users, expected {users}",
                        per_user.len()
                    )));
                }
                flat.extend_from_slice(per_user);
            }
        }
        let fading = Self {
            cells,
            users,
            beta: flat,
            alpha: None,
            pathloss_const: None,
        };
        fading.validate()?;
        Ok(fading)
    }

    pub fn from_fn(cells: usize, users: usize, f: impl Fn(usize, usize, usize) -> f64) -> Result<Self> {
        let mut beta = Vec::with_capacity(cells * cells * users);
        for j in 0..cells {
            for l in 0..cells {
                for k in 0..users {
                    beta.push(f(j, l, k));
                }
            }
        }
        let fading = Self {
            cells,
            users,
            beta,
            alpha: None,
            pathloss_const: None,
        };
        fading.validate()?;
        Ok(fading)
    }

    fn validate(&self) -> Result<()> {
        if let Some((i, &b)) = self
            .beta
            .iter()
            .enumerate()
            .find(|(_, b)| !(**b > 0.0 && b.is_finite()))
        {
            let (j, rest) = (i / (self.cells * self.users), i % (self.cells * self.users));
            let (l, k) = (rest / self.users, rest % self.users);
            return Err(Error::InvalidScenario(format!(
                "beta[{j}][{l}][{k}] = {b} must be positive and finite"
            )));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn users(&self) -> usize {
        self.users
    }

    /// `beta_jlk`: BS `j` to user `k` of cell `l`.
    #[inline]
    pub fn get(&self, j: usize, l: usize, k: usize) -> f64 {
        self.beta[(j * self.cells + l) * self.users + k]
    }

    pub fn to_nested(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.cells)
            .map(|j| {
                (0..self.cells)
                    .map(|l| (0..self.users).map(|k| self.get(j, l, k)).collect())
                    .collect()
            })
            .collect()
    }
}

/// Immutable description of one network operating point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkScenario {
    pub constants: SystemConstants,
    pub geometry: Option<Geometry>,
    pub fading: LargeScaleFading,
}

impl NetworkScenario {
    pub fn new(
        constants: SystemConstants,
        geometry: Option<Geometry>,
        fading: LargeScaleFading,
    ) -> Result<Self> {
        constants.validate()?;
        if fading.cells() != constants.cells || fading.users() != constants.users {
            return Err(Error::InvalidScenario(format!(
                "fading is {}x{}x{}, constants need L = {}, K = {}",
                fading.cells(),
                fading.cells(),
                fading.users(),
                constants.cells,
                constants.users
            )));
        }
        Ok(Self {
            constants,
            geometry,
            fading,
        })
    }

    pub fn cells(&self) -> usize {
        self.constants.cells
    }

    pub fn users(&self) -> usize {
        self.constants.users
    }

    pub fn antennas(&self) -> usize {
        self.constants.antennas
    }

    /// `beta_jlk`: BS `j` to user `k` of cell `l`.
    #[inline]
    pub fn beta(&self, j: usize, l: usize, k: usize) -> f64 {
        self.fading.get(j, l, k)
    }

    /// Copy with a different downlink transmit power (W).
    pub fn with_transmit_power(&self, watts: f64) -> Result<Self> {
        let mut s = self.clone();
        s.constants.transmit_power = watts;
        s.constants.validate()?;
        Ok(s)
    }

    /// Copy with a different antenna count.
    pub fn with_antennas(&self, antennas: usize) -> Result<Self> {
        let mut s = self.clone();
        s.constants.antennas = antennas;
        s.constants.validate()?;
        Ok(s)
    }
}

/// Builds the scenario described by `config`, at the first transmit power of
/// `power.pt_db`.
pub fn build_scenario(config: &ExperimentConfig) -> Result<NetworkScenario> {
    let sc = &config.scenario;
    let noise_power = dbm_to_watts(config.power.sigma2_dbm);
    let pilot_snr = match config.power.rho_p {
        PilotSnr::InverseNoise => 1.0 / noise_power,
        PilotSnr::Db(db) => db_to_linear(db),
        PilotSnr::Linear(v) => v,
    };
    let pt_db = *config
        .power
        .pt_db
        .first()
        .ok_or_else(|| Error::config("power.pt_db", "must not be empty"))?;
    let constants = SystemConstants {
        cells: sc.cells,
        antennas: sc.antennas,
        users: sc.users,
        transmit_power: db_to_linear(pt_db),
        noise_power,
        pilot_snr,
    };

    if let Some(beta) = &sc.beta {
        let fading = LargeScaleFading::from_nested(beta)?;
        return NetworkScenario::new(constants, None, fading);
    }

    let bs_positions = match &sc.bs_positions {
        Some(p) => p.clone(),
        None if sc.cells <= DEFAULT_BS_POSITIONS.len() => DEFAULT_BS_POSITIONS[..sc.cells].to_vec(),
        None => {
            return Err(Error::config(
                "scenario.bs_positions",
                format!("required when cells > {}", DEFAULT_BS_POSITIONS.len()),
            ))
        }
    };
    let geometry = match sc.placement {
        PlacementMode::Explicit => {
            let users = sc.user_positions.clone().ok_or_else(|| {
                Error::config("scenario.user_positions", "required for explicit placement")
            })?;
            if users.len() != sc.cells || users.iter().any(|u| u.len() != sc.users) {
                return Err(Error::config(
                    "scenario.user_positions",
                    format!("expected {} cells of {} users", sc.cells, sc.users),
                ));
            }
            Geometry {
                bs_positions,
                user_positions: users,
                placement: PlacementMode::Explicit,
                circle_radius: sc.circle_radius,
            }
        }
        mode => Geometry::on_circles(
            bs_positions,
            sc.users,
            sc.circle_radius,
            sc.angular_offset_deg.to_radians(),
            mode,
            config.mc.seed,
        )?,
    };
    let fading = LargeScaleFading::from_geometry(&geometry, sc.alpha, sc.pathloss_const)?;
    NetworkScenario::new(constants, Some(geometry), fading)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn db_conversions() {
        assert_relative_eq!(dbm_to_watts(-80.0), 1e-11, max_relative = 1e-14);
        assert_relative_eq!(db_to_linear(10.0), 10.0, max_relative = 1e-15);
        assert_eq!(db_to_linear(0.0), 1.0);
        assert_relative_eq!(linear_to_db(db_to_linear(-23.5)), -23.5, max_relative = 1e-14);
    }

    #[test]
    fn default_geometry_own_cell_beta() {
        let s = build_scenario(&ExperimentConfig::default()).unwrap();
        assert_eq!(s.cells(), 4);
        assert_eq!(s.users(), 8);
        for j in 0..4 {
            for k in 0..8 {
                assert_relative_eq!(s.beta(j, j, k), 6.4e-11, max_relative = 1e-12);
            }
        }
        assert_relative_eq!(s.constants.noise_power, 1e-11, max_relative = 1e-14);
        assert_relative_eq!(s.constants.pilot_snr, 1e11, max_relative = 1e-14);
        assert_relative_eq!(s.constants.transmit_power, 1e-3, max_relative = 1e-14);
    }

    #[test]
    fn single_user_at_100m() {
        let g = Geometry {
            bs_positions: vec![[0.0; 3]],
            user_positions: vec![vec![[100.0, 0.0, 0.0]]],
            placement: PlacementMode::Explicit,
            circle_radius: 100.0,
        };
        let f = LargeScaleFading::from_geometry(&g, 3.0, 1e-3).unwrap();
        assert_relative_eq!(f.get(0, 0, 0), 1e-9, max_relative = 1e-14);
    }

    #[test]
    fn explicit_beta_passes_through() {
        let beta = vec![
            vec![vec![1.0, 0.5], vec![0.1, 0.2]],
            vec![vec![0.3, 0.05], vec![2.0, 0.7]],
        ];
        let mut config = ExperimentConfig::default();
        config.scenario.cells = 2;
        config.scenario.users = 2;
        config.scenario.beta = Some(beta.clone());
        let s = build_scenario(&config).unwrap();
        assert!(s.geometry.is_none());
        assert_eq!(s.fading.to_nested(), beta);
        assert_eq!(s.beta(1, 0, 1), 0.05);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut config = ExperimentConfig::default();
        config.scenario.placement = PlacementMode::Explicit;
        config.scenario.cells = 1;
        config.scenario.users = 1;
        config.scenario.user_positions = Some(vec![vec![[0.0, 0.0, 0.0]]]);
        assert!(matches!(build_scenario(&config), Err(Error::InvalidScenario(_))));

        let mut config = ExperimentConfig::default();
        config.scenario.antennas = 4;
        assert!(build_scenario(&config).is_err());

        let mut config = ExperimentConfig::default();
        config.scenario.cells = 2;
        config.scenario.users = 1;
        config.scenario.beta = Some(vec![vec![vec![1.0], vec![-0.1]], vec![vec![0.2], vec![1.0]]]);
        assert!(matches!(build_scenario(&config), Err(Error::InvalidScenario(_))));

        let mut config = ExperimentConfig::default();
        config.scenario.cells = 5;
        assert!(build_scenario(&config).is_err());
    }

    #[test]
    fn equally_spaced_is_reproducible_and_random_is_seeded() {
        let c = ExperimentConfig::default();
        assert_eq!(build_scenario(&c).unwrap(), build_scenario(&c).unwrap());

        let mut r = c.clone();
        r.scenario.placement = PlacementMode::RandomCircle;
        let a = build_scenario(&r).unwrap();
        assert_eq!(a, build_scenario(&r).unwrap());
        r.mc.seed += 1;
        assert_ne!(a.fading, build_scenario(&r).unwrap().fading);
        // users stay on the circle: own-cell beta unchanged
        assert_relative_eq!(a.beta(2, 2, 5), 6.4e-11, max_relative = 1e-12);
    }

    fn random_geometry(cells: usize, users: usize, seed: u64) -> Geometry {
        let mut rng = RngStream::new(seed).generator(Purpose::Validation, 0, 0);
        let mut point = || [rng.random::<f64>() * 1000.0, rng.random::<f64>() * 1000.0, rng.random::<f64>() * 10.0];
        Geometry {
            bs_positions: (0..cells).map(|_| point()).collect(),
            user_positions: (0..cells).map(|_| (0..users).map(|_| point()).collect()).collect(),
            placement: PlacementMode::Explicit,
            circle_radius: 0.0,
        }
    }

    proptest! {
        #[test]
        fn beta_is_translation_invariant(seed in 0u64..1000, dx in -1e3..1e3f64, dy in -1e3..1e3f64, dz in -10.0..10.0f64) {
            let g = random_geometry(3, 4, seed);
            let shift = |p: &[f64; 3]| [p[0] + dx, p[1] + dy, p[2] + dz];
            let moved = Geometry {
                bs_positions: g.bs_positions.iter().map(shift).collect(),
                user_positions: g.user_positions.iter().map(|u| u.iter().map(shift).collect()).collect(),
                ..g.clone()
            };
            let a = LargeScaleFading::from_geometry(&g, 3.0, 1e-3).unwrap();
            let b = LargeScaleFading::from_geometry(&moved, 3.0, 1e-3).unwrap();
            for j in 0..3 { for l in 0..3 { for k in 0..4 {
                prop_assert!((a.get(j, l, k) / b.get(j, l, k) - 1.0).abs() < 1e-9);
            }}}
        }

        #[test]
        fn beta_decreases_with_distance(seed in 0u64..1000, stretch in 1.001..3.0f64) {
            let g = random_geometry(2, 3, seed);
            let a = LargeScaleFading::from_geometry(&g, 3.0, 1e-3).unwrap();
            // move user (l=1, k=2) radially away from BS 0
            let mut far = g.clone();
            let bs = g.bs_positions[0];
            let u = g.user_positions[1][2];
            far.user_positions[1][2] = [
                bs[0] + stretch * (u[0] - bs[0]),
                bs[1] + stretch * (u[1] - bs[1]),
                bs[2] + stretch * (u[2] - bs[2]),
            ];
            let b = LargeScaleFading::from_geometry(&far, 3.0, 1e-3).unwrap();
            prop_assert!(b.get(0, 1, 2) < a.get(0, 1, 2));
        }
    }
}
