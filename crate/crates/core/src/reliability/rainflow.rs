//! One-pass rainflow counting with half cycles for the residue.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A counted temperature cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalCycle {
    /// Peak-to-valley range, kelvin.
    pub amplitude: f64,
    /// Hotter of the two extremes, kelvin.
    pub t_max: f64,
    /// Cycle duration in seconds. A full cycle spans twice the time between
    /// its two extremes; a half cycle spans exactly that time.
    pub duration: f64,
    /// 1.0 for a closed cycle, 0.5 for a half cycle.
    pub weight: f64,
}

impl ThermalCycle {
    pub fn mean(&self) -> f64 {
        self.t_max - 0.5 * self.amplitude
    }

    pub fn is_full(&self) -> bool {
        self.weight == 1.0
    }
}

/// Peaks and valleys of a uniformly sampled series, as `(sample index, value)`.
///
/// Plateaus collapse onto their first sample. The first and last points are
/// always kept.
pub fn reversals(samples: &[f64]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::new();
    for (i, &v) in samples.iter().enumerate() {
        match out.len() {
            0 => out.push((i, v)),
            1 => {
                if v != out[0].1 {
                    out.push((i, v));
                }
            }
            n => {
                let (a, b) = (out[n - 2].1, out[n - 1].1);
                if v == b {
                    continue;
                }
                if (b - a) * (v - b) > 0.0 {
                    // Same direction: b was not a turning point.
                    out[n - 1] = (i, v);
                } else {
                    out.push((i, v));
                }
            }
        }
    }
    out
}

fn make_cycle(a: (usize, f64), b: (usize, f64), period: f64, weight: f64) -> ThermalCycle {
    let span = (b.0 as f64 - a.0 as f64).abs() * period;
    ThermalCycle { amplitude: (b.1 - a.1).abs(), t_max: a.1.max(b.1), duration: if weight == 1.0 { 2.0 * span } else { span }, weight }
}

/// Incremental rainflow counter fed one sample at a time.
///
/// Reversals are pushed onto a stack. With `X` the newest range and `Y` the
/// one before it, `Y` is counted as a full cycle whenever `X >= Y`, unless
/// `Y` still touches the first point of the history, in which case it is a
/// half cycle and the starting point moves forward. Whatever remains on the
/// stack at the end is counted range by range as half cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct RainflowCounter {
    period: f64,
    samples: usize,
    stack: Vec<(usize, f64)>,
    /// Latest extreme, not yet confirmed as a reversal.
    tail: Option<(usize, f64)>,
    /// Value of the last confirmed reversal.
    before_tail: Option<f64>,
    closed: Vec<ThermalCycle>,
}

impl RainflowCounter {
    pub fn new(period: f64) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(invalid("sampling period must be > 0"));
        }
        Ok(RainflowCounter { period, samples: 0, stack: Vec::new(), tail: None, before_tail: None, closed: Vec::new() })
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Cycles that can no longer change as more samples arrive.
    pub fn closed(&self) -> &[ThermalCycle] {
        &self.closed
    }

    pub fn push(&mut self, v: f64) {
        let i = self.samples;
        self.samples += 1;
        match self.tail {
            None => self.tail = Some((i, v)),
            Some((_, t)) if t == v => {}
            Some((ti, t)) => match self.before_tail {
                Some(a) if (t - a) * (v - t) > 0.0 => self.tail = Some((i, v)),
                _ => {
                    Self::feed(&mut self.stack, &mut self.closed, (ti, t), self.period);
                    self.before_tail = Some(t);
                    self.tail = Some((i, v));
                }
            },
        }
    }

    fn feed(stack: &mut Vec<(usize, f64)>, out: &mut Vec<ThermalCycle>, point: (usize, f64), period: f64) {
        stack.push(point);
        while stack.len() >= 3 {
            let n = stack.len();
            let x = (stack[n - 1].1 - stack[n - 2].1).abs();
            let y = (stack[n - 2].1 - stack[n - 3].1).abs();
            if x < y {
                break;
            }
            if n == 3 {
                out.push(make_cycle(stack[0], stack[1], period, 0.5));
                stack.remove(0);
            } else {
                out.push(make_cycle(stack[n - 3], stack[n - 2], period, 1.0));
                let last = stack[n - 1];
                stack.truncate(n - 3);
                stack.push(last);
            }
        }
    }

    /// Cycles the history would yield if it ended now, beyond `closed()`.
    pub fn pending(&self) -> Vec<ThermalCycle> {
        let mut stack = self.stack.clone();
        let mut out = Vec::new();
        if let Some(t) = self.tail {
            Self::feed(&mut stack, &mut out, t, self.period);
        }
        for pair in stack.windows(2) {
            out.push(make_cycle(pair[0], pair[1], self.period, 0.5));
        }
        out
    }

    /// All cycles of the history so far.
    pub fn cycles(&self) -> Vec<ThermalCycle> {
        let mut out = self.closed.clone();
        out.extend(self.pending());
        out
    }
}

/// Counts cycles in one core's temperature series sampled every `period`
/// seconds.
pub fn rainflow(samples: &[f64], period: f64) -> Result<Vec<ThermalCycle>> {
    if samples.len() < 2 {
        return Err(invalid(format!("rainflow needs at least 2 samples, got {}", samples.len())));
    }
    let mut counter = RainflowCounter::new(period)?;
    for &v in samples {
        counter.push(v);
    }
    Ok(counter.cycles())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn monotone_series_is_one_half_cycle() {
        let c = rainflow(&[300.0, 301.0, 305.0, 320.0], 1.0).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].weight, 0.5);
        assert_eq!(c[0].amplitude, 20.0);
        assert_eq!(c[0].duration, 3.0);
        assert_eq!(c[0].t_max, 320.0);
    }

    #[test]
    fn up_down_counts_one_range_of_twenty() {
        let c = rainflow(&[40.0, 60.0, 40.0], 1.0).unwrap();
        assert!(c.iter().all(|c| c.amplitude == 20.0));
        let total: f64 = c.iter().map(|c| c.weight).sum();
        assert_eq!(total, 1.0);
    }

    #[test]
    fn closed_inner_cycle() {
        // 10 -> 50 -> 30 -> 40 -> 0: the 30/40 excursion closes inside the big swing.
        let c = rainflow(&[10.0, 50.0, 30.0, 40.0, 0.0], 2.0).unwrap();
        let full: Vec<_> = c.iter().filter(|c| c.is_full()).collect();
        assert_eq!(full.len(), 1);
        assert_eq!(full[0].amplitude, 10.0);
        assert_eq!(full[0].t_max, 40.0);
        assert_eq!(full[0].duration, 4.0);
        let halves: Vec<f64> = c.iter().filter(|c| !c.is_full()).map(|c| c.amplitude).collect();
        assert_eq!(halves, vec![40.0, 50.0]);
    }

    #[test]
    fn reversal_extraction_handles_plateaus() {
        let r = reversals(&[300.0, 300.0, 310.0, 310.0, 310.0, 305.0, 305.0]);
        assert_eq!(r, vec![(0, 300.0), (2, 310.0), (5, 305.0)]);
        assert_eq!(reversals(&[1.0, 1.0, 1.0]), vec![(0, 1.0)]);
    }

    #[test]
    fn flat_series_has_no_cycles() {
        assert!(rainflow(&[330.0; 8], 1.0).unwrap().is_empty());
    }

    #[test]
    fn short_series_rejected() {
        assert!(rainflow(&[300.0], 1.0).is_err());
        assert!(rainflow(&[], 1.0).is_err());
    }

    #[test]
    fn incremental_matches_batch_at_every_prefix() {
        let series: Vec<f64> = (0..120).map(|i| 320.0 + 7.0 * ((i as f64) * 0.9).sin() + 3.0 * ((i as f64) * 0.23).cos()).collect();
        let mut counter = RainflowCounter::new(0.5).unwrap();
        for (n, &v) in series.iter().enumerate() {
            counter.push(v);
            if n >= 1 {
                assert_eq!(counter.cycles(), rainflow(&series[..=n], 0.5).unwrap(), "prefix {n}");
            }
        }
    }

    #[test]
    fn cycles_satisfy_invariants() {
        let series: Vec<f64> = (0..200).map(|i| 320.0 + 10.0 * ((i as f64) * 0.37).sin() * ((i as f64) * 0.05).cos()).collect();
        for c in rainflow(&series, 1.0).unwrap() {
            assert!(c.amplitude > 0.0);
            assert!(c.t_max >= c.mean());
            assert!(c.weight == 0.5 || c.weight == 1.0);
        }
    }
}
