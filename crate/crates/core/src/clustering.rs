//! Temperature-based bin packing with DBSCAN.
//!
//! Cores are points on the temperature axis; the distance between two cores
//! is the absolute difference of their temperatures. With `min_pts = 1` every
//! core is a core point, so bins are exactly the epsilon-connected
//! components and nothing is ever labelled noise.

use crate::error::{invalid, Result};
use crate::thermal::ThermalState;

#[derive(Debug, Clone, PartialEq)]
pub struct BinPartition {
    /// Member core ids, each bin sorted ascending; bins ordered by their
    /// smallest member.
    pub bins: Vec<Vec<usize>>,
    /// Average member temperature per bin, kelvin.
    pub averages: Vec<f64>,
    /// Tasks currently executing on each bin's cores.
    pub mapped: Vec<usize>,
    /// Cores DBSCAN left unclustered (only possible when `min_pts > 1`).
    pub noise: Vec<usize>,
    pub epsilon: f64,
    pub min_pts: usize,
}

impl BinPartition {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn bin_of(&self, core: usize) -> Option<usize> {
        self.bins.iter().position(|b| b.binary_search(&core).is_ok())
    }

    /// Bins usable for mapping: the clusters followed by each noise core as
    /// its own singleton.
    pub fn mapping_bins(&self) -> Vec<Vec<usize>> {
        let mut out = self.bins.clone();
        out.extend(self.noise.iter().map(|&c| vec![c]));
        out
    }

    pub fn core_count(&self) -> usize {
        self.bins.iter().map(Vec::len).sum::<usize>() + self.noise.len()
    }
}

/// Clusters cores by temperature.
pub fn pack_bins(temps: &[f64], epsilon: f64, min_pts: usize) -> Result<BinPartition> {
    if temps.is_empty() {
        return Err(invalid("cannot pack an empty core list"));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    if min_pts == 0 {
        return Err(invalid("min_pts must be >= 1"));
    }
    if let Some(t) = temps.iter().find(|t| !t.is_finite()) {
        return Err(invalid(format!("non-finite temperature {t}")));
    }

    let mut order: Vec<usize> = (0..temps.len()).collect();
    order.sort_by(|&a, &b| temps[a].total_cmp(&temps[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| temps[i]).collect();
    let n = sorted.len();

    // Neighbourhood sizes (self included) via a sliding window.
    let mut is_core = vec![false; n];
    let (mut lo, mut hi) = (0usize, 0usize);
    for i in 0..n {
        while sorted[i] - sorted[lo] > epsilon {
            lo += 1;
        }
        if hi < i {
            hi = i;
        }
        while hi + 1 < n && sorted[hi + 1] - sorted[i] <= epsilon {
            hi += 1;
        }
        is_core[i] = hi - lo + 1 >= min_pts;
    }

    // Core points adjacent on the sorted axis and within epsilon share a
    // cluster; a gap wider than epsilon between consecutive core points
    // cannot be bridged.
    let mut label: Vec<Option<usize>> = vec![None; n];
    let mut clusters = 0usize;
    let mut prev_core: Option<usize> = None;
    for i in 0..n {
        if !is_core[i] {
            continue;
        }
        match prev_core {
            Some(p) if sorted[i] - sorted[p] <= epsilon => label[i] = label[p],
            _ => {
                label[i] = Some(clusters);
                clusters += 1;
            }
        }
        prev_core = Some(i);
    }

    // Border points join the cluster of the nearest core point within epsilon.
    let core_positions: Vec<usize> = (0..n).filter(|&i| is_core[i]).collect();
    for i in 0..n {
        if is_core[i] {
            continue;
        }
        let best = core_positions
            .iter()
            .filter(|&&c| (sorted[c] - sorted[i]).abs() <= epsilon)
            .min_by(|&&a, &&b| (sorted[a] - sorted[i]).abs().total_cmp(&(sorted[b] - sorted[i]).abs()));
        if let Some(&c) = best {
            label[i] = label[c];
        }
    }

    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); clusters];
    let mut noise = Vec::new();
    for (pos, &core) in order.iter().enumerate() {
        match label[pos] {
            Some(l) => bins[l].push(core),
            None => noise.push(core),
        }
    }
    for b in &mut bins {
        b.sort_unstable();
    }
    bins.sort_by_key(|b| b[0]);
    noise.sort_unstable();

    let averages = bins.iter().map(|b| b.iter().map(|&c| temps[c]).sum::<f64>() / b.len() as f64).collect();
    let mapped = vec![0; bins.len()];
    Ok(BinPartition { bins, averages, mapped, noise, epsilon, min_pts })
}

/// Recomputes per-bin averages from `state`; membership is untouched.
pub fn refresh_bin_stats(partition: &BinPartition, state: &ThermalState) -> Result<BinPartition> {
    let mut out = partition.clone();
    for (i, bin) in partition.bins.iter().enumerate() {
        out.averages[i] = crate::thermal::bin_average_temperature(bin, state)
            .map_err(|_| invalid(format!("bin {i} references a core outside the state")))?;
    }
    if let Some(c) = partition.noise.iter().find(|&&c| c >= state.temps.len()) {
        return Err(invalid(format!("noise core {c} outside the state")));
    }
    Ok(out)
}
