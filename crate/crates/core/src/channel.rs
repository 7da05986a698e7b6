//! Rayleigh small-scale fading combined with large-scale attenuation.

use crate::rng::{complex_gaussian, Purpose, RngStream};
use crate::scenario::NetworkScenario;
use crate::CMatrix;

/// One draw of every BS-to-cell channel matrix.
///
/// `get(l, j)` is `H_lj` (M x K): column `k` is the channel from BS `l` to
/// user `k` of cell `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    cells: usize,
    matrices: Vec<CMatrix>,
}

impl ChannelRealization {
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn get(&self, from_bs: usize, to_cell: usize) -> &CMatrix {
        &self.matrices[from_bs * self.cells + to_cell]
    }
}

/// `H_lj = G_lj D_lj^{1/2}` with `G_lj` i.i.d. CN(0, 1).
///
/// `G_lj` comes from the `(Channel, l, j)` substream of `rng`, so each
/// matrix is reproducible independently of the others.
pub fn draw_channels(scenario: &NetworkScenario, rng: &RngStream) -> ChannelRealization {
    let (cells, m, k_users) = (scenario.cells(), scenario.antennas(), scenario.users());
    let mut matrices = Vec::with_capacity(cells * cells);
    for l in 0..cells {
        for j in 0..cells {
            let mut g = rng.generator(Purpose::Channel, l, j);
            let scale: Vec<f64> = (0..k_users).map(|k| scenario.beta(l, j, k).sqrt()).collect();
            // column-major fill: antenna index runs fastest within a user column
            matrices.push(CMatrix::from_fn(m, k_users, |_, k| complex_gaussian(&mut g) * scale[k]));
        }
    }
    ChannelRealization { cells, matrices }
}
