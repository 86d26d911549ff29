//! Task streams: synthetic generation and CSV trace files.
//!
//! Trace format: one header line, then rows of
//! (lines starting with `#` are comments)
//! `id,name,arrival_s,duration_s,power_W,isub_A,iem_A`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const TRACE_HEADER: &str = "id,name,arrival_s,duration_s,power_W,isub_A,iem_A";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: u64,
    pub name: String,
    pub arrival: f64,
    /// Execution time at nominal frequency, seconds.
    pub duration: f64,
    /// Dynamic power while running, watts.
    pub power: f64,
    /// Peak substrate current drawn while running, amps.
    pub i_sub: f64,
    /// Interconnect current while running, amps.
    pub i_em: f64,
}

impl TaskSpec {
    /// Checks the per-task invariants, naming the offending field.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(format!("duration_s must be > 0, got {}", self.duration));
        }
        if !(self.power >= 0.0 && self.power.is_finite()) {
            return Err(format!("power_W must be >= 0, got {}", self.power));
        }
        if !(self.arrival >= 0.0 && self.arrival.is_finite()) {
            return Err(format!("arrival_s must be >= 0, got {}", self.arrival));
        }
        if !(self.i_sub > 0.0 && self.i_sub.is_finite()) {
            return Err(format!("isub_A must be > 0, got {}", self.i_sub));
        }
        if !(self.i_em > 0.0 && self.i_em.is_finite()) {
            return Err(format!("iem_A must be > 0, got {}", self.i_em));
        }
        if self.name.contains(',') || self.name.trim().is_empty() {
            return Err(format!("name must be non-empty and comma-free, got {:?}", self.name));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TraceSource {
    Generated { seed: u64 },
    File(PathBuf),
    Preset { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadTrace {
    pub tasks: Vec<TaskSpec>,
    pub source: TraceSource,
}

impl WorkloadTrace {
    pub fn new(tasks: Vec<TaskSpec>, source: TraceSource) -> Result<Self> {
        let mut ids = std::collections::BTreeSet::new();
        let mut last = 0.0f64;
        for t in &tasks {
            t.validate().map_err(|m| invalid(format!("task {}: {m}", t.id)))?;
            if !ids.insert(t.id) {
                return Err(invalid(format!("duplicate task id {}", t.id)));
            }
            if t.arrival < last {
                return Err(invalid(format!("task {}: arrival times must be non-decreasing", t.id)));
            }
            last = t.arrival;
        }
        Ok(WorkloadTrace { tasks, source })
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{TRACE_HEADER}\n");
        for t in &self.tasks {
            let _ = writeln!(out, "{},{},{},{},{},{},{}", t.id, t.name, t.arrival, t.duration, t.power, t.i_sub, t.i_em);
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Parses trace CSV text. Line numbers in errors are 1-based and count the header.
pub fn parse_trace(text: &str, path: &Path) -> Result<Vec<TaskSpec>> {
    let perr = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim_start().starts_with('#'));
    match lines.next() {
        Some((_, h)) if h.trim() == TRACE_HEADER => {}
        Some((i, h)) => return Err(perr(i + 1, format!("expected header `{TRACE_HEADER}`, found `{h}`"))),
        None => return Err(perr(1, "empty trace file".into())),
    }
    let mut tasks = Vec::new();
    let mut last_arrival = 0.0f64;
    let mut ids = std::collections::BTreeSet::new();
    for (i, line) in lines {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(perr(line_no, format!("expected 7 fields, found {}", f.len())));
        }
        let num = |idx: usize, name: &str| -> Result<f64> { f[idx].parse::<f64>().map_err(|e| perr(line_no, format!("{name}: {e}"))) };
        let task = TaskSpec {
            id: f[0].parse().map_err(|e| perr(line_no, format!("id: {e}")))?,
            name: f[1].to_string(),
            arrival: num(2, "arrival_s")?,
            duration: num(3, "duration_s")?,
            power: num(4, "power_W")?,
            i_sub: num(5, "isub_A")?,
            i_em: num(6, "iem_A")?,
        };
        task.validate().map_err(|m| perr(line_no, m))?;
        if task.arrival < last_arrival {
            return Err(perr(line_no, "arrival_s must be non-decreasing".into()));
        }
        if !ids.insert(task.id) {
            return Err(perr(line_no, format!("id {} is not unique", task.id)));
        }
        last_arrival = task.arrival;
        tasks.push(task);
    }
    Ok(tasks)
}

pub fn load_trace(path: &Path) -> Result<WorkloadTrace> {
    let tasks = parse_trace(&std::fs::read_to_string(path)?, path)?;
    WorkloadTrace::new(tasks, TraceSource::File(path.to_path_buf()))
}

/// Bounds for synthetic task draws.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TaskRanges {
    pub duration: (f64, f64),
    pub power: (f64, f64),
    pub i_sub: (f64, f64),
    pub i_em: (f64, f64),
}

impl Default for TaskRanges {
    fn default() -> Self {
        TaskRanges { duration: (5.0, 30.0), power: (3.0, 9.0), i_sub: (0.8, 1.4), i_em: (0.8, 1.4) }
    }
}

impl TaskRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("duration", self.duration), ("power", self.power), ("i_sub", self.i_sub), ("i_em", self.i_em)] {
            if !(lo > 0.0 && lo.is_finite() && hi.is_finite()) {
                return Err(invalid(format!("{name} bounds must be positive, got ({lo}, {hi})")));
            }
            if lo > hi {
                return Err(invalid(format!("{name} bounds inverted: {lo} > {hi}")));
            }
        }
        Ok(())
    }
}

fn draw<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

fn poisson_arrivals<R: Rng + ?Sized>(n: usize, rate: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(invalid(format!("arrival rate must be positive, got {rate}")));
    }
    let gap = Exp::new(rate).map_err(|e| invalid(e.to_string()))?;
    let mut t = 0.0;
    Ok((0..n)
        .map(|i| {
            if i > 0 {
                t += gap.sample(rng);
            }
            t
        })
        .collect())
}

/// Synthetic trace with uniform task parameters and Poisson arrivals at
/// `arrival_rate` tasks per second, the first at t = 0.
pub fn generate_trace(n_tasks: usize, seed: u64, ranges: &TaskRanges, arrival_rate: f64) -> Result<WorkloadTrace> {
    ranges.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arrivals = poisson_arrivals(n_tasks, arrival_rate, &mut rng)?;
    let tasks = arrivals
        .into_iter()
        .enumerate()
        .map(|(i, arrival)| TaskSpec {
            id: i as u64,
            name: "synthetic".into(),
            arrival,
            duration: draw(&mut rng, ranges.duration),
            power: draw(&mut rng, ranges.power),
            i_sub: draw(&mut rng, ranges.i_sub),
            i_em: draw(&mut rng, ranges.i_em),
        })
        .collect();
    WorkloadTrace::new(tasks, TraceSource::Generated { seed })
}

/// Benchmark-named task profiles shipped with the crate. The names are the
/// fifteen SPLASH2 and PARSEC applications; the durations, powers and
/// currents are illustrative values, not measurements.
pub const PRESET_CSV: &str = include_str!("../data/presets.csv");

pub fn preset_profiles() -> Vec<TaskSpec> {
    parse_trace(PRESET_CSV, Path::new("data/presets.csv")).expect("shipped preset file is valid")
}

/// Cycles through the preset profiles until `n_tasks` tasks exist, in a
/// seed-dependent shuffled order per round, with Poisson arrivals.
pub fn preset_trace(n_tasks: usize, seed: u64, arrival_rate: f64) -> Result<WorkloadTrace> {
    use rand::seq::SliceRandom;
    let profiles = preset_profiles();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arrivals = poisson_arrivals(n_tasks, arrival_rate, &mut rng)?;
    let mut order: Vec<usize> = Vec::with_capacity(n_tasks);
    while order.len() < n_tasks {
        let mut round: Vec<usize> = (0..profiles.len()).collect();
        round.shuffle(&mut rng);
        order.extend(round);
    }
    let tasks = arrivals
        .into_iter()
        .zip(order)
        .enumerate()
        .map(|(i, (arrival, p))| TaskSpec { id: i as u64, arrival, ..profiles[p].clone() })
        .collect();
    WorkloadTrace::new(tasks, TraceSource::Preset { seed })
}

/// Execution time on a core running at `frequency`, slowing down linearly
/// from the `nominal` frequency the task duration refers to.
pub fn scale_duration(task: &TaskSpec, frequency: f64, nominal: f64) -> Result<f64> {
    if !(frequency > 0.0 && nominal > 0.0) {
        return Err(invalid(format!("frequencies must be positive (actual {frequency}, nominal {nominal})")));
    }
    Ok(task.duration * nominal / frequency)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn task(duration: f64) -> TaskSpec {
        TaskSpec { id: 0, name: "FFT".into(), arrival: 0.0, duration, power: 4.0, i_sub: 1.0, i_em: 1.0 }
    }

    #[test]
    fn empty_generation() {
        assert!(generate_trace(0, 1, &TaskRanges::default(), 1.0).unwrap().is_empty());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_trace(50, 9, &TaskRanges::default(), 0.5).unwrap();
        let b = generate_trace(50, 9, &TaskRanges::default(), 0.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn power_mean_within_three_sigma() {
        let ranges = TaskRanges { power: (1.0, 5.0), ..TaskRanges::default() };
        let t = generate_trace(10_000, 21, &ranges, 1.0).unwrap();
        let mean = t.tasks.iter().map(|t| t.power).sum::<f64>() / 10_000.0;
        // Uniform on [1, 5]: variance 16/12.
        let sigma = (16.0f64 / 12.0 / 10_000.0).sqrt();
        assert!((mean - 3.0).abs() <= 3.0 * sigma, "{mean}");
        assert!(t.tasks.iter().all(|t| (1.0..=5.0).contains(&t.power)));
    }

    #[test]
    fn inverted_bounds_rejected() {
        let ranges = TaskRanges { duration: (10.0, 2.0), ..TaskRanges::default() };
        assert!(generate_trace(5, 1, &ranges, 1.0).is_err());
        assert!(generate_trace(5, 1, &TaskRanges::default(), 0.0).is_err());
    }

    #[test]
    fn load_well_formed_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        std::fs::write(&path, format!("{TRACE_HEADER}\n0,FFT,0,10,4,1,1\n1,LU,0.5,12,5,1.1,0.9\n2,Ocean,2,8,6,1.2,1.3\n")).unwrap();
        let t = load_trace(&path).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.tasks[2].name, "Ocean");
    }

    #[test]
    fn negative_duration_cites_line() {
        let text = format!("{TRACE_HEADER}\n0,FFT,0,-10,4,1,1\n");
        let err = parse_trace(&text, Path::new("bad.csv")).unwrap_err();
        match err {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 2);
                assert!(msg.contains("duration_s"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn malformed_rows_rejected() {
        let bad_field = format!("{TRACE_HEADER}\n0,FFT,0,10,abc,1,1\n");
        assert!(matches!(parse_trace(&bad_field, Path::new("x")), Err(Error::Parse { line: 2, .. })));
        let disorder = format!("{TRACE_HEADER}\n0,FFT,5,10,4,1,1\n1,LU,1,10,4,1,1\n");
        assert!(matches!(parse_trace(&disorder, Path::new("x")), Err(Error::Parse { line: 3, .. })));
        assert!(parse_trace("nope\n", Path::new("x")).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let t = generate_trace(40, 3, &TaskRanges::default(), 0.7).unwrap();
        t.save(&path).unwrap();
        let back = load_trace(&path).unwrap();
        assert_eq!(back.tasks, t.tasks);
    }

    #[test]
    fn presets_cover_fifteen_benchmarks() {
        let p = preset_profiles();
        assert_eq!(p.len(), 15);
        for name in [
            "FFT",
            "LU",
            "RADIX",
            "Cholesky",
            "FMM",
            "Ocean",
            "Barnes",
            "Raytrace",
            "Radiosity",
            "Blackscholes",
            "Canneal",
            "Dedup",
            "X264",
            "Vips",
            "Swaptions",
        ] {
            assert!(p.iter().any(|t| t.name == name), "{name}");
        }
        let t = preset_trace(150, 4, 0.4).unwrap();
        assert_eq!(t.len(), 150);
        for name in ["FFT", "Swaptions"] {
            assert_eq!(t.tasks.iter().filter(|x| x.name == name).count(), 10);
        }
    }

    #[test]
    fn duration_scaling() {
        let t = task(10.0);
        assert_eq!(scale_duration(&t, 4.0, 4.0).unwrap(), 10.0);
        assert_eq!(scale_duration(&t, 2.0, 4.0).unwrap(), 20.0);
        assert_relative_eq!(scale_duration(&t, 3.2, 4.0).unwrap(), 12.5, max_relative = 1e-12);
        assert!(scale_duration(&t, 0.0, 4.0).is_err());
    }

    proptest! {
        #[test]
        fn arrivals_monotone(n in 0usize..200, seed in any::<u64>(), rate in 0.05f64..5.0) {
            let t = generate_trace(n, seed, &TaskRanges::default(), rate).unwrap();
            prop_assert!(t.tasks.windows(2).all(|w| w[0].arrival <= w[1].arrival));
            let csv = t.to_csv();
            let back = parse_trace(&csv, Path::new("mem")).unwrap();
            prop_assert_eq!(back, t.tasks);
        }
    }
}
