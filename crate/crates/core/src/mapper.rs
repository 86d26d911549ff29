//! Task-to-core mapping policies.
//!
//! The RL mapper works in two levels. Bin selection picks one of the
//! temperature bins produced by DBSCAN, rewarded by the bin temperature over
//! the spread change the task is predicted to cause. Core selection then
//! picks a free core inside the bin, rewarded after the task completes by the
//! relative change of that core's combined MTTF. Random and TC-greedy
//! mappers serve as baselines.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::BinPartition;
use crate::error::{invalid, Error, Result};
use crate::rlcore::{discretize, ActionSet, DiscretizedState, EpsilonSchedule, Feature, QTable};
use crate::thermal::ThermalState;
use crate::workload::TaskSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MapperKind {
    Rl,
    Random,
    TcGreedy,
}

impl MapperKind {
    pub fn name(self) -> &'static str {
        match self {
            MapperKind::Rl => "rl",
            MapperKind::Random => "random",
            MapperKind::TcGreedy => "tc_greedy",
        }
    }
}

impl fmt::Display for MapperKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MapperKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rl" => Ok(MapperKind::Rl),
            "random" => Ok(MapperKind::Random),
            "tc_greedy" | "tc-greedy" => Ok(MapperKind::TcGreedy),
            other => Err(invalid(format!("unknown mapper `{other}` (expected rl, random or tc_greedy)"))),
        }
    }
}

/// Which form of the bin-level reward to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardVariant {
    /// `T_bin / dT`: hotter bins with small induced spread score highest.
    Verbatim,
    /// `1 / ((T_bin / T_amb) * dT)`: cooler bins score highest.
    Inverted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlSettings {
    pub learning_rate: f64,
    pub discount: f64,
    pub default_q: f64,
    pub epsilon: EpsilonSchedule,
    /// Bucket width for bin temperatures (rise above ambient), kelvin.
    pub temp_width: f64,
    pub temp_cap: i64,
    /// Cap for task and core counts in the bin-level state.
    pub count_cap: i64,
    /// Bucket width for per-core combined MTTF, years.
    pub mttf_width: f64,
    pub mttf_cap: i64,
    /// Lower bound on the spread change in the bin reward, kelvin.
    pub delta_t_floor: f64,
    pub reward_variant: RewardVariant,
}

impl Default for RlSettings {
    fn default() -> Self {
        RlSettings {
            learning_rate: 0.72,
            discount: 0.28,
            default_q: 0.0,
            epsilon: EpsilonSchedule::default(),
            temp_width: 2.0,
            temp_cap: 32,
            count_cap: 16,
            mttf_width: 0.5,
            mttf_cap: 40,
            delta_t_floor: 0.1,
            reward_variant: RewardVariant::Verbatim,
        }
    }
}

impl RlSettings {
    pub fn validate(&self) -> Result<()> {
        QTable::new(self.learning_rate, self.discount, self.default_q)?;
        self.epsilon.validate()?;
        for (name, v) in [("temp_width", self.temp_width), ("mttf_width", self.mttf_width), ("delta_t_floor", self.delta_t_floor)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("temp_cap", self.temp_cap), ("count_cap", self.count_cap), ("mttf_cap", self.mttf_cap)] {
            if v < 1 {
                return Err(invalid(format!("{name} must be >= 1, got {v}")));
            }
        }
        Ok(())
    }
}

/// One dispatched task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingDecision {
    pub task_id: u64,
    pub arrival: f64,
    pub bin: usize,
    pub core: usize,
    pub bin_reward: f64,
    /// Filled in when the task completes (RL mapper only).
    pub core_reward: Option<f64>,
    pub dispatch_time: f64,
    pub completion_time: Option<f64>,
}

/// What a mapper sees of the machine at a decision point.
#[derive(Debug, Clone, Copy)]
pub struct MachineView<'a> {
    pub state: &'a ThermalState,
    pub busy: &'a [bool],
    pub ambient: f64,
    pub r_vertical: f64,
}

/// Bin-level observation: one entry per bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BinLevelState {
    pub temps: Vec<f64>,
    pub mapped: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl BinLevelState {
    pub fn observe(bins: &[Vec<usize>], view: &MachineView<'_>) -> Result<Self> {
        let mut temps = Vec::with_capacity(bins.len());
        let mut mapped = Vec::with_capacity(bins.len());
        for bin in bins {
            temps.push(crate::thermal::bin_average_temperature(bin, view.state)?);
            mapped.push(bin.iter().filter(|&&c| view.busy[c]).count());
        }
        Ok(BinLevelState { temps, mapped, sizes: bins.iter().map(Vec::len).collect() })
    }

    pub fn encode(&self, s: &RlSettings, ambient: f64) -> Result<DiscretizedState> {
        let mut features = Vec::with_capacity(3 * self.temps.len());
        let mut widths = Vec::with_capacity(features.capacity());
        let mut caps = Vec::with_capacity(features.capacity());
        for i in 0..self.temps.len() {
            features.extend([Feature::Real(self.temps[i] - ambient), Feature::Count(self.mapped[i]), Feature::Count(self.sizes[i])]);
            widths.extend([s.temp_width, 1.0, 1.0]);
            caps.extend([s.temp_cap, s.count_cap, s.count_cap]);
        }
        discretize(&features, &widths, &caps)
    }
}

/// Core-level observation over the cores of one bin.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreLevelState {
    pub mttf: Vec<f64>,
    pub busy: Vec<bool>,
}

impl CoreLevelState {
    pub fn encode(&self, s: &RlSettings) -> Result<DiscretizedState> {
        let mut features = Vec::with_capacity(2 * self.mttf.len());
        let mut widths = Vec::with_capacity(features.capacity());
        let mut caps = Vec::with_capacity(features.capacity());
        for (&m, &b) in self.mttf.iter().zip(&self.busy) {
            features.extend([Feature::Real(if m.is_finite() { m } else { f64::MAX }), Feature::Count(b as usize)]);
            widths.extend([s.mttf_width, 1.0]);
            caps.extend([s.mttf_cap, 1]);
        }
        discretize(&features, &widths, &caps)
    }

    pub fn free_positions(&self, epoch: u64) -> ActionSet {
        let free = self.busy.iter().enumerate().filter(|(_, &b)| !b).map(|(i, _)| i).collect();
        ActionSet::new(free, epoch).expect("positions are unique")
    }
}

/// Bin-level reward. `delta_t` is floored at `floor`.
pub fn bin_reward(t_bin: f64, delta_t: f64, floor: f64, variant: RewardVariant, ambient: f64) -> f64 {
    let dt = delta_t.abs().max(floor);
    match variant {
        RewardVariant::Verbatim => t_bin / dt,
        RewardVariant::Inverted => 1.0 / ((t_bin / ambient) * dt),
    }
}

/// Core-level reward: relative change of the core's combined MTTF.
pub fn core_reward(mttf_old: f64, mttf_new: f64) -> f64 {
    (mttf_new - mttf_old) / mttf_old
}

/// Predicted change of the bin's max-min spread if the task's steady-state
/// rise `R_v * P` lands on the bin's coolest free core.
pub fn predicted_spread_change(bin: &[usize], view: &MachineView<'_>, task_power: f64) -> f64 {
    let temps = &view.state.temps;
    let spread = |extra: Option<(usize, f64)>| {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &c in bin {
            let t = match extra {
                Some((e, d)) if e == c => temps[c] + d,
                _ => temps[c],
            };
            lo = lo.min(t);
            hi = hi.max(t);
        }
        hi - lo
    };
    let target = bin.iter().copied().filter(|&c| !view.busy[c]).min_by(|&a, &b| temps[a].total_cmp(&temps[b]).then(a.cmp(&b)));
    match target {
        Some(c) => (spread(Some((c, view.r_vertical * task_power))) - spread(None)).abs(),
        None => 0.0,
    }
}

/// Core-level decision awaiting its delayed reward.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingCoreUpdate {
    pub state: DiscretizedState,
    /// Position of the chosen core inside `cores`.
    pub action: usize,
    pub cores: Vec<usize>,
    pub mttf_old: f64,
}

/// Two-level Q-learning mapper.
#[derive(Debug, Clone, PartialEq)]
pub struct RlMapper {
    pub settings: RlSettings,
    /// When false, rewards are still computed but the tables stay frozen.
    pub learning: bool,
    pub bin_table: QTable,
    pub core_table: QTable,
}

impl RlMapper {
    pub fn new(settings: RlSettings) -> Result<Self> {
        settings.validate()?;
        let table = || QTable::new(settings.learning_rate, settings.discount, settings.default_q);
        Ok(RlMapper {
            settings,
            learning: true,
            bin_table: table()?
                .with_encoding(vec![settings.temp_width, 1.0, 1.0], vec![settings.temp_cap, settings.count_cap, settings.count_cap]),
            core_table: table()?.with_encoding(vec![settings.mttf_width, 1.0], vec![settings.mttf_cap, 1]),
        })
    }

    /// Chooses a bin for `task` among bins with a free core and applies the
    /// immediate Q-update. Returns `None` when no core is free anywhere.
    pub fn select_bin<R: Rng + ?Sized>(
        &mut self,
        task: &TaskSpec,
        partition: &BinPartition,
        view: &MachineView<'_>,
        epsilon: f64,
        epoch: u64,
        rng: &mut R,
    ) -> Result<Option<(usize, f64)>> {
        let bins = partition.mapping_bins();
        let free_in = |b: &Vec<usize>| b.iter().filter(|&&c| !view.busy[c]).count();
        let available: Vec<usize> = (0..bins.len()).filter(|&i| free_in(&bins[i]) > 0).collect();
        if available.is_empty() {
            return Ok(None);
        }
        let observed = BinLevelState::observe(&bins, view)?;
        let s = observed.encode(&self.settings, view.ambient)?;
        let actions = ActionSet::new(available, epoch)?;
        let chosen = self.bin_table.select_action(&s, &actions, epsilon, rng)?;

        let delta_t = predicted_spread_change(&bins[chosen], view, task.power);
        let reward = bin_reward(observed.temps[chosen], delta_t, self.settings.delta_t_floor, self.settings.reward_variant, view.ambient);

        let mut after = observed;
        after.mapped[chosen] += 1;
        let s_next = after.encode(&self.settings, view.ambient)?;
        let next_actions: Vec<usize> = actions.actions().iter().copied().filter(|&b| b != chosen || free_in(&bins[b]) > 1).collect();
        if self.learning {
            self.bin_table.update(&s, chosen, reward, &s_next, &ActionSet::new(next_actions, epoch)?)?;
        }
        Ok(Some((chosen, reward)))
    }

    /// Chooses a free core inside `cores`. `mttf` holds the current combined
    /// MTTF of each listed core, `busy` their status.
    pub fn select_core<R: Rng + ?Sized>(
        &self,
        cores: &[usize],
        mttf: &[f64],
        busy: &[bool],
        epsilon: f64,
        epoch: u64,
        rng: &mut R,
    ) -> Result<Option<(usize, PendingCoreUpdate)>> {
        if cores.len() != mttf.len() || cores.len() != busy.len() {
            return Err(invalid("core, MTTF and busy lists differ in length"));
        }
        let observed = CoreLevelState { mttf: mttf.to_vec(), busy: busy.to_vec() };
        let actions = observed.free_positions(epoch);
        if actions.is_empty() {
            return Ok(None);
        }
        let s = observed.encode(&self.settings)?;
        let pos = self.core_table.select_action(&s, &actions, epsilon, rng)?;
        if !mttf[pos].is_finite() || mttf[pos] <= 0.0 {
            return Err(invalid(format!("core {} has no usable MTTF estimate ({})", cores[pos], mttf[pos])));
        }
        Ok(Some((cores[pos], PendingCoreUpdate { state: s, action: pos, cores: cores.to_vec(), mttf_old: mttf[pos] })))
    }

    /// Applies the delayed core-level update once the task has finished.
    /// `mttf` and `busy` describe `pending.cores` at completion time.
    pub fn complete_core(&mut self, pending: &PendingCoreUpdate, mttf: &[f64], busy: &[bool], epoch: u64) -> Result<f64> {
        let mttf_new = mttf[pending.action];
        let reward = core_reward(pending.mttf_old, mttf_new);
        let next = CoreLevelState { mttf: mttf.to_vec(), busy: busy.to_vec() };
        if self.learning {
            let s_next = next.encode(&self.settings)?;
            self.core_table.update(&pending.state, pending.action, reward, &s_next, &next.free_positions(epoch))?;
        }
        Ok(reward)
    }
}

/// Uniform choice among free cores.
pub fn map_random<R: Rng + ?Sized>(free: &[usize], rng: &mut R) -> Option<usize> {
    if free.is_empty() {
        None
    } else {
        Some(free[rng.random_range(0..free.len())])
    }
}

/// Free core with the largest thermal-cycling MTTF; ties go to the lowest id.
/// `mttf_tc` is indexed by core id.
pub fn map_tc_greedy(free: &[usize], mttf_tc: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for &c in free {
        best = match best {
            Some(b) if mttf_tc[b] > mttf_tc[c] || (mttf_tc[b] == mttf_tc[c] && b < c) => Some(b),
            _ => Some(c),
        };
    }
    best
}
