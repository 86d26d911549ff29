//! Plot-ready output files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::harness::experiment::CurveRow;
use crate::mapper::MappingDecision;
use crate::thermal::{heatmap_csv, ThermalState};

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// Decision log with one row per dispatched task.
pub fn decisions_csv(decisions: &[MappingDecision]) -> String {
    let mut out = String::from("task_id,arrival_s,bin,core,bin_reward,core_reward,dispatch_s,completion_s\n");
    for d in decisions {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            d.task_id,
            d.arrival,
            d.bin,
            d.core,
            d.bin_reward,
            opt(d.core_reward),
            d.dispatch_time,
            opt(d.completion_time)
        );
    }
    out
}

pub fn learning_curve_csv(curve: &[CurveRow]) -> String {
    let mut out = String::from("episode,epsilon,bin_reward,core_reward,system_combined_years,final_spread_K\n");
    for r in curve {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.episode,
            r.epsilon,
            r.bin_reward,
            r.core_reward,
            crate::reliability::fmt_years(r.system_combined_years),
            r.final_spread
        );
    }
    out
}

/// Writes the `rows x cols` heatmap of `state` to `dir/heatmap_<tag>.csv`.
pub fn emit_heatmap(state: &ThermalState, rows: usize, cols: usize, dir: &Path, tag: &str) -> Result<PathBuf> {
    let text = heatmap_csv(state, rows, cols)?;
    let path = dir.join(format!("heatmap_{tag}.csv"));
    std::fs::write(&path, text)?;
    Ok(path)
}

/// Writes `contents` to `dir/name`, creating `dir` if needed.
pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents)?;
    Ok(path)
}
