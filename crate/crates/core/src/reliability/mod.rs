//! Aging models and lifetime estimation.
//!
//! Thermal cycling follows Coffin-Manson with an Arrhenius term, accumulated
//! over rainflow-counted cycles with Miner's rule. NBTI, HCI and EM are
//! proportional models; each carries a scale constant calibrated so that a
//! core held at a reference temperature lives a nominal number of years.

mod rainflow;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::{BOLTZMANN_EV, SECONDS_PER_YEAR};

pub use rainflow::{rainflow, reversals, RainflowCounter, ThermalCycle};

/// Coffin-Manson parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TcParams {
    pub a_tc: f64,
    /// Coffin-Manson exponent.
    pub b: f64,
    /// Amplitude below which a cycle causes no inelastic damage, kelvin.
    pub t_th: f64,
    /// Activation energy, eV.
    pub ea_tc: f64,
    pub k: f64,
}

impl Default for TcParams {
    fn default() -> Self {
        TcParams::tabulated()
    }
}

impl TcParams {
    /// Tabulated constants with a unit scale.
    pub fn tabulated() -> Self {
        TcParams { a_tc: 1.0, b: 2.35, t_th: 1.0, ea_tc: 0.42, k: BOLTZMANN_EV }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("a_tc", self.a_tc), ("b", self.b), ("t_th", self.t_th), ("ea_tc", self.ea_tc), ("k", self.k)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Returns a copy whose `a_tc` makes `reference` repeated back to back
    /// last `years`.
    pub fn calibrated(mut self, reference: &ThermalCycle, years: f64) -> Result<Self> {
        self.a_tc = 1.0;
        let n = cycles_to_failure(reference, &self).ok_or_else(|| invalid("reference cycle is below the damage threshold"))?;
        self.a_tc = years * SECONDS_PER_YEAR / (n * reference.duration);
        Ok(self)
    }
}

/// Cycles to failure for one cycle, or `None` when the amplitude does not
/// exceed the threshold and the cycle is non-damaging.
pub fn cycles_to_failure(cycle: &ThermalCycle, p: &TcParams) -> Option<f64> {
    let excess = cycle.amplitude - p.t_th;
    if excess <= 0.0 {
        return None;
    }
    Some(p.a_tc * excess.powf(-p.b) * (p.ea_tc / (p.k * cycle.t_max)).exp())
}

/// Thermal-cycling MTTF in seconds by Miner's rule: total cycle time over
/// accumulated damage, half cycles weighted by 0.5. Identical full cycles
/// reduce to `N * sum(t_i) / m`. Returns infinity if no cycle is damaging.
pub fn mttf_tc(cycles: &[ThermalCycle], p: &TcParams) -> f64 {
    let mut time = 0.0;
    let mut damage = 0.0;
    for c in cycles {
        if let Some(n) = cycles_to_failure(c, p) {
            time += c.duration;
            damage += c.weight / n;
        }
    }
    if damage > 0.0 {
        time / damage
    } else {
        f64::INFINITY
    }
}

/// Running thermal-cycling lifetime of one core. Closed cycles are folded
/// into Miner sums as they appear; the open residue is re-evaluated on query.
#[derive(Debug, Clone, PartialEq)]
pub struct TcTracker {
    counter: RainflowCounter,
    params: TcParams,
    folded: usize,
    time: f64,
    damage: f64,
}

impl TcTracker {
    pub fn new(period: f64, params: TcParams) -> Result<Self> {
        params.validate()?;
        Ok(TcTracker { counter: RainflowCounter::new(period)?, params, folded: 0, time: 0.0, damage: 0.0 })
    }

    pub fn push(&mut self, v: f64) {
        self.counter.push(v);
        for c in &self.counter.closed()[self.folded..] {
            if let Some(n) = cycles_to_failure(c, &self.params) {
                self.time += c.duration;
                self.damage += c.weight / n;
            }
        }
        self.folded = self.counter.closed().len();
    }

    pub fn samples(&self) -> usize {
        self.counter.samples()
    }

    /// Lifetime in years over the samples so far; infinite with fewer than
    /// two samples or no damaging cycle.
    pub fn mttf_years(&self) -> f64 {
        if self.counter.samples() < 2 {
            return f64::INFINITY;
        }
        let (mut time, mut damage) = (self.time, self.damage);
        for c in self.counter.pending() {
            if let Some(n) = cycles_to_failure(&c, &self.params) {
                time += c.duration;
                damage += c.weight / n;
            }
        }
        if damage > 0.0 {
            time / damage / SECONDS_PER_YEAR
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NbtiParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// Exponent applied to the `T / exp(-D/kT)` factor.
    pub nbti_beta: f64,
    pub scale: f64,
}

impl Default for NbtiParams {
    fn default() -> Self {
        // Placeholder fitting values; they keep both logarithm arguments
        // positive from 200 K up past 400 K.
        NbtiParams { a: 1.6328, b: 0.07377, c: 0.01, d: 0.06852, nbti_beta: 0.3, scale: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HciParams {
    /// Activation energy, eV.
    pub q_hci: f64,
    pub n_hci: f64,
    /// Peak substrate current, A.
    pub i_sub: f64,
    /// Transistor width, in the same units the substrate current is normalized by.
    pub width: f64,
    pub scale: f64,
}

impl Default for HciParams {
    fn default() -> Self {
        HciParams { q_hci: 0.25, n_hci: 3.0, i_sub: 1.0, width: 1.0, scale: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmParams {
    /// Activation energy, eV.
    pub q_em: f64,
    pub n_em: f64,
    /// Current through the contact window, A.
    pub current: f64,
    pub scale: f64,
}

impl Default for EmParams {
    fn default() -> Self {
        EmParams { q_em: 0.9, n_em: 1.1, current: 1.0, scale: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgingParams {
    pub nbti: NbtiParams,
    pub hci: HciParams,
    pub em: EmParams,
}

impl AgingParams {
    pub fn validate(&self) -> Result<()> {
        let n = &self.nbti;
        for (name, v) in [("nbti.a", n.a), ("nbti.c", n.c), ("nbti.nbti_beta", n.nbti_beta), ("nbti.scale", n.scale)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let h = &self.hci;
        for (name, v) in
            [("hci.q_hci", h.q_hci), ("hci.n_hci", h.n_hci), ("hci.i_sub", h.i_sub), ("hci.width", h.width), ("hci.scale", h.scale)]
        {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let e = &self.em;
        for (name, v) in [("em.q_em", e.q_em), ("em.current", e.current), ("em.scale", e.scale)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(1.0..=2.0).contains(&e.n_em) {
            return Err(invalid(format!("em.n_em must lie in [1, 2], got {}", e.n_em)));
        }
        Ok(())
    }

    /// Sets the three scale constants so that each model yields `years` at
    /// `reference_temp` with the currently configured currents.
    pub fn calibrated(mut self, reference_temp: f64, years: f64) -> Result<Self> {
        self.nbti.scale = 1.0;
        self.hci.scale = 1.0;
        self.em.scale = 1.0;
        self.nbti.scale = years / mttf_nbti(reference_temp, &self)?;
        self.hci.scale = years / mttf_hci(reference_temp, &self)?;
        self.em.scale = years / mttf_em(reference_temp, &self)?;
        Ok(self)
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("temperature must be a positive kelvin value, got {t}")))
    }
}

/// NBTI lifetime in years at temperature `t`.
pub fn mttf_nbti(t: f64, p: &AgingParams) -> Result<f64> {
    check_temperature(t)?;
    let n = &p.nbti;
    let kt = BOLTZMANN_EV * t;
    let inner = n.a / (1.0 + 2.0 * (n.b / kt).exp());
    let shifted = inner - n.c;
    if !(inner > 0.0 && shifted > 0.0) {
        return Err(Error::ModelDomain(format!(
            "NBTI logarithm argument not positive at T = {t} K (A = {}, B = {}, C = {}): {inner} - {} = {shifted}",
            n.a, n.b, n.c, n.c
        )));
    }
    let log_term = inner.ln() - shifted.ln();
    let arrhenius = (t / (-n.d / kt).exp()).powf(n.nbti_beta);
    Ok(n.scale * log_term * arrhenius)
}

/// HCI lifetime in years at temperature `t`.
pub fn mttf_hci(t: f64, p: &AgingParams) -> Result<f64> {
    check_temperature(t)?;
    let h = &p.hci;
    if !(h.i_sub > 0.0) || !(h.width > 0.0) {
        return Err(invalid(format!("substrate current ({}) and width ({}) must be positive", h.i_sub, h.width)));
    }
    Ok(h.scale * (h.i_sub / h.width).powf(-h.n_hci) * (h.q_hci / (BOLTZMANN_EV * t)).exp())
}

/// EM lifetime in years at temperature `t`.
pub fn mttf_em(t: f64, p: &AgingParams) -> Result<f64> {
    check_temperature(t)?;
    let e = &p.em;
    if !(e.current > 0.0) {
        return Err(invalid(format!("current must be positive, got {}", e.current)));
    }
    Ok(e.scale * e.current.powf(-e.n_em) * (e.q_em / (BOLTZMANN_EV * t)).exp())
}

/// Average of the four per-mechanism lifetimes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombinedMttf {
    /// Arithmetic mean of all four; infinite if any component is.
    pub mean: f64,
    /// Mean over the finite components only.
    pub finite_mean: f64,
    pub infinite_dominated: bool,
}

impl CombinedMttf {
    /// The mean when every component is finite, otherwise the finite mean.
    pub fn effective(&self) -> f64 {
        if self.infinite_dominated {
            self.finite_mean
        } else {
            self.mean
        }
    }
}

pub fn combined_mttf(values: [f64; 4]) -> CombinedMttf {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    let finite_mean = if finite.is_empty() { f64::INFINITY } else { finite.iter().sum::<f64>() / finite.len() as f64 };
    let infinite_dominated = finite.len() < 4;
    let mean = if infinite_dominated { f64::INFINITY } else { values.iter().sum::<f64>() / 4.0 };
    CombinedMttf { mean, finite_mean, infinite_dominated }
}

/// Running damage integrals for the temperature/current driven mechanisms of
/// one core. Lifetimes under a time-varying stress are the elapsed time over
/// the accumulated damage fraction `sum(dt / MTTF(T, I))`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AgingAccumulator {
    pub elapsed: f64,
    pub nbti_damage: f64,
    pub hci_damage: f64,
    pub em_damage: f64,
}

impl AgingAccumulator {
    /// Adds `dt` seconds at temperature `t` with substrate current `i_sub`
    /// and EM current `current`.
    pub fn add(&mut self, dt: f64, t: f64, i_sub: f64, current: f64, p: &AgingParams) -> Result<()> {
        let mut q = *p;
        q.hci.i_sub = i_sub;
        q.em.current = current;
        self.elapsed += dt;
        self.nbti_damage += dt / mttf_nbti(t, &q)?;
        self.hci_damage += dt / mttf_hci(t, &q)?;
        self.em_damage += dt / mttf_em(t, &q)?;
        Ok(())
    }

    /// `(nbti, hci, em)` lifetimes in years.
    pub fn lifetimes(&self) -> (f64, f64, f64) {
        let life = |d: f64| if d > 0.0 { self.elapsed / d } else { f64::INFINITY };
        (life(self.nbti_damage), life(self.hci_damage), life(self.em_damage))
    }
}

/// Lifetimes of one core, in years.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreMttf {
    pub tc: f64,
    pub nbti: f64,
    pub hci: f64,
    pub em: f64,
    pub combined: CombinedMttf,
}

impl CoreMttf {
    pub fn new(tc: f64, nbti: f64, hci: f64, em: f64) -> Self {
        CoreMttf { tc, nbti, hci, em, combined: combined_mttf([tc, nbti, hci, em]) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Tc,
    Nbti,
    Hci,
    Em,
    Combined,
}

impl Mechanism {
    pub const ALL: [Mechanism; 5] = [Mechanism::Tc, Mechanism::Nbti, Mechanism::Hci, Mechanism::Em, Mechanism::Combined];

    pub fn name(self) -> &'static str {
        match self {
            Mechanism::Tc => "tc",
            Mechanism::Nbti => "nbti",
            Mechanism::Hci => "hci",
            Mechanism::Em => "em",
            Mechanism::Combined => "combined",
        }
    }
}

/// System averages in years. Infinite per-core values are left out of the
/// mechanism average; the combined average uses each core's effective value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemMttf {
    pub tc: f64,
    pub nbti: f64,
    pub hci: f64,
    pub em: f64,
    pub combined: f64,
    /// Cores without any damaging thermal cycle.
    pub tc_infinite_cores: usize,
}

impl SystemMttf {
    pub fn get(&self, m: Mechanism) -> f64 {
        match m {
            Mechanism::Tc => self.tc,
            Mechanism::Nbti => self.nbti,
            Mechanism::Hci => self.hci,
            Mechanism::Em => self.em,
            Mechanism::Combined => self.combined,
        }
    }
}

fn finite_average(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.filter(|v| v.is_finite()).fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::INFINITY
    } else {
        sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MttfReport {
    pub cores: Vec<CoreMttf>,
    pub system: SystemMttf,
}

impl MttfReport {
    pub fn new(cores: Vec<CoreMttf>) -> Self {
        let system = SystemMttf {
            tc: finite_average(cores.iter().map(|c| c.tc)),
            nbti: finite_average(cores.iter().map(|c| c.nbti)),
            hci: finite_average(cores.iter().map(|c| c.hci)),
            em: finite_average(cores.iter().map(|c| c.em)),
            combined: finite_average(cores.iter().map(|c| c.combined.effective())),
            tc_infinite_cores: cores.iter().filter(|c| !c.tc.is_finite()).count(),
        };
        MttfReport { cores, system }
    }

    /// Per-core rows with one column per mechanism, in years. Infinite values
    /// print as `inf`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("core,tc_years,nbti_years,hci_years,em_years,combined_years,combined_finite_years,infinite_dominated\n");
        for (i, c) in self.cores.iter().enumerate() {
            let _ = writeln!(
                out,
                "{i},{},{},{},{},{},{},{}",
                fmt_years(c.tc),
                fmt_years(c.nbti),
                fmt_years(c.hci),
                fmt_years(c.em),
                fmt_years(c.combined.mean),
                fmt_years(c.combined.finite_mean),
                c.combined.infinite_dominated
            );
        }
        out
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "cores": self.cores.len(),
            "system_years": {
                "tc": json_years(self.system.tc),
                "nbti": json_years(self.system.nbti),
                "hci": json_years(self.system.hci),
                "em": json_years(self.system.em),
                "combined": json_years(self.system.combined),
            },
            "tc_infinite_cores": self.system.tc_infinite_cores,
        })
    }
}

pub(crate) fn fmt_years(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "inf".to_string()
    }
}

pub(crate) fn json_years(v: f64) -> serde_json::Value {
    if v.is_finite() {
        serde_json::json!(v)
    } else {
        serde_json::Value::Null
    }
}

/// Evaluates one core's lifetimes from its sampled temperature series and its
/// damage integrals.
pub fn core_mttf(samples: &[f64], period: f64, aging: &AgingAccumulator, tc: &TcParams) -> Result<CoreMttf> {
    let tc_years = if samples.len() >= 2 { mttf_tc(&rainflow(samples, period)?, tc) / SECONDS_PER_YEAR } else { f64::INFINITY };
    let (nbti, hci, em) = aging.lifetimes();
    Ok(CoreMttf::new(tc_years, nbti, hci, em))
}
