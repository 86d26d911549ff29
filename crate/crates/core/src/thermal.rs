//! Lumped-RC thermal network over the core grid.
//!
//! Each core is one thermal node with capacitance `C`, a vertical resistance
//! `R_v` to ambient, and a lateral conductance `g_l` to each of its four grid
//! neighbours. Integration is explicit Euler:
//!
//! ```text
//! dT_i/dt = (P_i - (T_i - T_amb)/R_v - sum_j g_l (T_i - T_j)) / C
//! ```

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const KELVIN_OFFSET: f64 = 273.15;

pub fn celsius_to_kelvin(c: f64) -> f64 {
    c + KELVIN_OFFSET
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalConfig {
    /// Ambient temperature in kelvin.
    pub ambient: f64,
    /// Vertical thermal resistance to ambient, K/W.
    pub r_vertical: f64,
    /// Lateral conductance between grid-adjacent cores, W/K.
    pub g_lateral: f64,
    /// Thermal capacitance per core, J/K.
    pub capacitance: f64,
    /// Integration step, seconds.
    pub dt: f64,
}

impl Default for ThermalConfig {
    fn default() -> Self {
        ThermalConfig { ambient: celsius_to_kelvin(45.0), r_vertical: 2.0, g_lateral: 0.3, capacitance: 2.5, dt: 0.1 }
    }
}

impl ThermalConfig {
    /// Largest stable explicit-Euler step for a lattice node with four neighbours.
    pub fn stability_limit(&self) -> f64 {
        self.capacitance / (1.0 / self.r_vertical + 4.0 * self.g_lateral)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ambient > 0.0 && self.ambient.is_finite()) {
            return Err(invalid(format!("ambient must be a positive kelvin value, got {}", self.ambient)));
        }
        if !(self.r_vertical > 0.0) {
            return Err(invalid("r_vertical must be > 0"));
        }
        if !(self.g_lateral >= 0.0) {
            return Err(invalid("g_lateral must be >= 0"));
        }
        if !(self.capacitance > 0.0) {
            return Err(invalid("capacitance must be > 0"));
        }
        if !(self.dt > 0.0) {
            return Err(invalid("dt must be > 0"));
        }
        if self.dt >= self.stability_limit() {
            return Err(invalid(format!("dt = {} s violates the stability bound dt < {} s", self.dt, self.stability_limit())));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalState {
    pub temps: Vec<f64>,
    pub time: f64,
}

impl ThermalState {
    pub fn at_ambient(cores: usize, ambient: f64) -> Self {
        ThermalState { temps: vec![ambient; cores], time: 0.0 }
    }

    pub fn spread(&self) -> f64 {
        let (lo, hi) = self.temps.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t)));
        if self.temps.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }
}

/// A validated thermal network: configuration plus grid adjacency.
#[derive(Debug, Clone)]
pub struct ThermalModel {
    cfg: ThermalConfig,
    rows: usize,
    cols: usize,
    neighbors: Vec<Vec<usize>>,
}

impl ThermalModel {
    pub fn new(cfg: ThermalConfig, rows: usize, cols: usize) -> Result<Self> {
        cfg.validate()?;
        if rows == 0 || cols == 0 {
            return Err(invalid("core grid dimensions must be positive"));
        }
        let mut neighbors = vec![Vec::with_capacity(4); rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                let i = r * cols + c;
                if r > 0 {
                    neighbors[i].push(i - cols);
                }
                if c > 0 {
                    neighbors[i].push(i - 1);
                }
                if c + 1 < cols {
                    neighbors[i].push(i + 1);
                }
                if r + 1 < rows {
                    neighbors[i].push(i + cols);
                }
            }
        }
        Ok(ThermalModel { cfg, rows, cols, neighbors })
    }

    pub fn config(&self) -> &ThermalConfig {
        &self.cfg
    }

    pub fn cores(&self) -> usize {
        self.rows * self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn neighbors(&self, core: usize) -> &[usize] {
        &self.neighbors[core]
    }

    pub fn initial_state(&self) -> ThermalState {
        ThermalState::at_ambient(self.cores(), self.cfg.ambient)
    }

    /// Advances `state` by one step of `dt` under the given per-core power.
    pub fn step(&self, state: &ThermalState, power: &[f64]) -> Result<ThermalState> {
        let mut next = state.clone();
        self.step_in_place(&mut next, power)?;
        Ok(next)
    }

    pub fn step_in_place(&self, state: &mut ThermalState, power: &[f64]) -> Result<()> {
        let n = self.cores();
        if power.len() != n || state.temps.len() != n {
            return Err(invalid(format!("expected {n} cores, got {} powers and {} temperatures", power.len(), state.temps.len())));
        }
        if let Some((i, p)) = power.iter().enumerate().find(|(_, p)| !(**p >= 0.0 && p.is_finite())) {
            return Err(invalid(format!("core {i}: power {p} W must be finite and >= 0")));
        }
        let ThermalConfig { ambient, r_vertical, g_lateral, capacitance, dt } = self.cfg;
        let old = &state.temps;
        let next: Vec<f64> = (0..n)
            .map(|i| {
                let t = old[i];
                let lateral: f64 = self.neighbors[i].iter().map(|&j| g_lateral * (t - old[j])).sum();
                let flux = power[i] - (t - ambient) / r_vertical - lateral;
                t + dt * flux / capacitance
            })
            .collect();
        state.temps = next;
        state.time += dt;
        Ok(())
    }
}

/// Sampled temperature history of every core.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureTrace {
    period: f64,
    start: f64,
    samples: usize,
    per_core: Vec<Vec<f64>>,
}

impl TemperatureTrace {
    pub fn new(cores: usize, period: f64) -> Result<Self> {
        if !(period > 0.0) {
            return Err(invalid("sampling period must be > 0"));
        }
        Ok(TemperatureTrace { period, start: 0.0, samples: 0, per_core: vec![Vec::new(); cores] })
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn len(&self) -> usize {
        self.samples
    }

    pub fn is_empty(&self) -> bool {
        self.samples == 0
    }

    pub fn cores(&self) -> usize {
        self.per_core.len()
    }

    pub fn time_of(&self, sample: usize) -> f64 {
        self.start + sample as f64 * self.period
    }

    pub fn core(&self, core: usize) -> &[f64] {
        &self.per_core[core]
    }

    /// Appends one sample per core. After the first sample, the state's time
    /// must sit exactly one sampling period after the previous sample.
    pub fn record(&mut self, state: &ThermalState) -> Result<()> {
        if state.temps.len() != self.per_core.len() {
            return Err(invalid("state core count does not match the trace"));
        }
        if self.samples == 0 {
            self.start = state.time;
        } else {
            let expected = self.time_of(self.samples);
            if (state.time - expected).abs() > 1e-6 * self.period {
                return Err(invalid(format!("sample at t = {} s is out of order; expected t = {expected} s", state.time)));
            }
        }
        for (series, &t) in self.per_core.iter_mut().zip(&state.temps) {
            series.push(t);
        }
        self.samples += 1;
        Ok(())
    }

    /// CSV with columns `time_s, core_0_K, ..., core_{n-1}_K`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s");
        for i in 0..self.cores() {
            let _ = write!(out, ",core_{i}_K");
        }
        out.push('\n');
        for s in 0..self.samples {
            let _ = write!(out, "{}", self.time_of(s));
            for series in &self.per_core {
                let _ = write!(out, ",{:.4}", series[s]);
            }
            out.push('\n');
        }
        out
    }
}

/// Mean temperature of the cores in one bin.
pub fn bin_average_temperature(bin: &[usize], state: &ThermalState) -> Result<f64> {
    if bin.is_empty() {
        return Err(invalid("bin is empty"));
    }
    let mut sum = 0.0;
    for &core in bin {
        sum += state.temps.get(core).ok_or_else(|| invalid(format!("core id {core} out of range")))?;
    }
    Ok(sum / bin.len() as f64)
}

/// Row-major `rows x cols` CSV grid of kelvin values.
pub fn heatmap_csv(state: &ThermalState, rows: usize, cols: usize) -> Result<String> {
    if rows * cols != state.temps.len() {
        return Err(invalid(format!("state has {} cores but the grid is {rows}x{cols}", state.temps.len())));
    }
    let mut out = String::new();
    for row in state.temps.chunks(cols) {
        let line: Vec<String> = row.iter().map(|t| format!("{t}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn single(cfg: ThermalConfig) -> ThermalModel {
        ThermalModel::new(cfg, 1, 1).unwrap()
    }

    #[test]
    fn ambient_is_a_fixed_point() {
        let m = ThermalModel::new(ThermalConfig::default(), 3, 3).unwrap();
        let s0 = m.initial_state();
        let s1 = m.step(&s0, &[0.0; 9]).unwrap();
        assert_eq!(s0.temps, s1.temps);
    }

    #[test]
    fn single_core_converges_to_rc_steady_state() {
        let cfg = ThermalConfig::default();
        let m = single(cfg);
        let mut s = m.initial_state();
        let p = 6.0;
        for _ in 0..5000 {
            m.step_in_place(&mut s, &[p]).unwrap();
        }
        let expected = cfg.ambient + cfg.r_vertical * p;
        assert!((s.temps[0] - expected).abs() / expected < 1e-3);
        assert_relative_eq!(s.temps[0], expected, max_relative = 1e-9);
    }

    #[test]
    fn mirror_symmetric_pair_stays_symmetric() {
        let m = ThermalModel::new(ThermalConfig::default(), 1, 2).unwrap();
        let mut s = m.initial_state();
        for k in 0..400 {
            let p = if k % 50 < 25 { 4.0 } else { 1.0 };
            m.step_in_place(&mut s, &[p, p]).unwrap();
            assert_eq!(s.temps[0], s.temps[1]);
        }
    }

    #[test]
    fn closed_form_trajectory_without_lateral_coupling() {
        let mut cfg = ThermalConfig { g_lateral: 0.0, ..ThermalConfig::default() };
        let tau = cfg.r_vertical * cfg.capacitance;
        cfg.dt = tau / 100.0;
        let m = ThermalModel::new(cfg, 2, 2).unwrap();
        let mut s = m.initial_state();
        let power = [2.0, 4.0, 0.0, 7.0];
        for _ in 0..600 {
            m.step_in_place(&mut s, &power).unwrap();
            for (i, &p) in power.iter().enumerate() {
                let exact = cfg.ambient + cfg.r_vertical * p * (1.0 - (-s.time / tau).exp());
                let rise = exact - cfg.ambient;
                if rise > 0.0 {
                    assert!(((s.temps[i] - cfg.ambient) - rise).abs() <= 0.01 * rise, "core {i} at t={}", s.time);
                }
            }
        }
    }

    #[test]
    fn homogenizes_after_power_off() {
        let m = ThermalModel::new(ThermalConfig::default(), 3, 3).unwrap();
        let mut s = m.initial_state();
        for _ in 0..200 {
            m.step_in_place(&mut s, &[9.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 5.0]).unwrap();
        }
        let mut last = s.spread();
        for _ in 0..500 {
            m.step_in_place(&mut s, &[0.0; 9]).unwrap();
            let now = s.spread();
            assert!(now <= last + 1e-12);
            last = now;
        }
    }

    #[test]
    fn unstable_step_rejected() {
        let cfg = ThermalConfig { dt: 10.0, ..ThermalConfig::default() };
        assert!(ThermalModel::new(cfg, 2, 2).is_err());
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn step_argument_errors() {
        let m = ThermalModel::new(ThermalConfig::default(), 1, 2).unwrap();
        let s = m.initial_state();
        assert!(m.step(&s, &[1.0]).is_err());
        assert!(m.step(&s, &[1.0, -0.5]).is_err());
    }

    #[test]
    fn trace_recording() {
        let m = ThermalModel::new(ThermalConfig { dt: 0.5, ..ThermalConfig::default() }, 1, 2).unwrap();
        let mut trace = TemperatureTrace::new(2, 1.0).unwrap();
        let mut s = m.initial_state();
        trace.record(&s).unwrap();
        assert_eq!(trace.len(), 1);
        for _ in 0..9 {
            m.step_in_place(&mut s, &[3.0, 1.0]).unwrap();
            m.step_in_place(&mut s, &[3.0, 1.0]).unwrap();
            trace.record(&s).unwrap();
        }
        assert_eq!(trace.len(), 10);
        assert_eq!(trace.time_of(9), 9.0);
        // Same time again is out of order.
        assert!(trace.record(&s).is_err());
        let csv = trace.to_csv();
        assert!(csv.starts_with("time_s,core_0_K,core_1_K\n"));
        assert_eq!(csv.lines().count(), 11);
    }

    #[test]
    fn replay_is_identical() {
        let run = || {
            let m = ThermalModel::new(ThermalConfig::default(), 2, 2).unwrap();
            let mut trace = TemperatureTrace::new(4, 1.0).unwrap();
            let mut s = m.initial_state();
            trace.record(&s).unwrap();
            for k in 1..=300 {
                let p = (k % 7) as f64;
                m.step_in_place(&mut s, &[p, 0.3, 2.0 * p, 1.0]).unwrap();
                if k % 10 == 0 {
                    trace.record(&s).unwrap();
                }
            }
            trace
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn bin_averages() {
        let s = ThermalState { temps: vec![350.0, 340.0, 360.0, 350.0, 350.0], time: 0.0 };
        assert_eq!(bin_average_temperature(&[0], &s).unwrap(), 350.0);
        assert_eq!(bin_average_temperature(&[1, 2], &s).unwrap(), 350.0);
        assert_eq!(bin_average_temperature(&[0, 3, 4], &s).unwrap(), 350.0);
        assert!(bin_average_temperature(&[], &s).is_err());
        assert!(bin_average_temperature(&[9], &s).is_err());
    }

    #[test]
    fn heatmap_layout() {
        let s = ThermalState { temps: vec![300.0, 301.0, 302.0, 303.0], time: 0.0 };
        let csv = heatmap_csv(&s, 2, 2).unwrap();
        assert_eq!(csv, "300,301\n302,303\n");
        assert_eq!(csv, heatmap_csv(&s, 2, 2).unwrap());
        assert!(heatmap_csv(&s, 3, 2).is_err());
    }

    proptest! {
        #[test]
        fn temperatures_stay_bounded(powers in prop::collection::vec(prop::collection::vec(0.0f64..8.0, 9), 1..60)) {
            let cfg = ThermalConfig::default();
            let m = ThermalModel::new(cfg, 3, 3).unwrap();
            let mut s = m.initial_state();
            let hi = cfg.ambient + cfg.r_vertical * 8.0;
            for p in &powers {
                for _ in 0..20 {
                    m.step_in_place(&mut s, p).unwrap();
                    for &t in &s.temps {
                        prop_assert!(t >= cfg.ambient - 1e-9 && t <= hi + 1e-9);
                    }
                }
            }
        }
    }
}
