use serde::{Deserialize, Serialize};

use crate::network::Network;

pub const DEFAULT_BINS: usize = 20;

/// Distribution of gate values in one layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateHistogram {
    pub layer: usize,
    /// Fraction of gates per equal-width bin over `[0, 1]`; 1.0 falls in the last bin.
    pub bins: Vec<f64>,
    pub mean: f64,
    pub mass_below_0_2: f64,
    pub mass_0_4_to_0_6: f64,
    pub mass_above_0_8: f64,
}

impl GateHistogram {
    pub fn from_gammas(layer: usize, gammas: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let n = gammas.len().max(1) as f64;
        let mut counts = vec![0usize; bins];
        for &g in gammas {
            let k = ((g * bins as f64).floor() as usize).min(bins - 1);
            counts[k] += 1;
        }
        let frac = |pred: &dyn Fn(f64) -> bool| gammas.iter().filter(|&&g| pred(g)).count() as f64 / n;
        Self {
            layer,
            bins: counts.iter().map(|&c| c as f64 / n).collect(),
            mean: gammas.iter().sum::<f64>() / n,
            mass_below_0_2: frac(&|g| g < 0.2),
            mass_0_4_to_0_6: frac(&|g| (0.4..=0.6).contains(&g)),
            mass_above_0_8: frac(&|g| g > 0.8),
        }
    }

    /// Lower and upper edge of bin `k`.
    pub fn edges(&self, k: usize) -> (f64, f64) {
        let w = 1.0 / self.bins.len() as f64;
        (k as f64 * w, (k + 1) as f64 * w)
    }

    /// Mass of the bins lying entirely inside `[lo, hi]`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        let eps = 1e-12;
        (0..self.bins.len())
            .filter(|&k| {
                let (a, b) = self.edges(k);
                a >= lo - eps && b <= hi + eps
            })
            .map(|k| self.bins[k])
            .sum()
    }
}

/// Gate histograms for every layer, using the gates the network actually applies.
pub fn gate_analysis(net: &Network, bins: usize) -> Vec<GateHistogram> {
    (0..net.layers.len())
        .map(|l| GateHistogram::from_gammas(l, &net.gates(l).gamma, bins))
        .collect()
}
