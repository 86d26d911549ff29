//! Process-variation map of the die and the quantities derived from it.
//!
//! The die is a `rows x cols` grid of cells, each carrying a dimensionless
//! variation factor `p` in `(0, 1]`. Wire geometry and power-grid resistance
//! scale linearly with `p`, and a core's maximum frequency is set by the
//! slowest cell on its critical path.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Grid cell coordinate as `(row, col)`.
pub type Cell = (usize, usize);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PvParams {
    /// Correlation length of the smoothing kernel, in cells. Zero disables
    /// smoothing and yields independent cells.
    pub correlation_length: f64,
    /// Lower end of the variation range; values are clamped into `[p_min, 1]`.
    pub p_min: f64,
    /// Grid cells along each side of one core tile.
    pub cells_per_core: usize,
    /// Wire width per unit variation.
    pub kappa1: f64,
    /// Wire height per unit variation.
    pub kappa2: f64,
    /// Power-grid resistance per unit variation.
    pub gamma_res: f64,
    /// Core frequency at `p = 1`, in GHz.
    pub beta_f: f64,
}

impl Default for PvParams {
    fn default() -> Self {
        PvParams { correlation_length: 2.0, p_min: 0.6, cells_per_core: 4, kappa1: 50.0, kappa2: 100.0, gamma_res: 2.0, beta_f: 4.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvGrid {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl PvGrid {
    /// Builds a grid from row-major values, checking every value lies in `(0, 1]`.
    pub fn from_values(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid("grid dimensions must be positive"));
        }
        if values.len() != rows * cols {
            return Err(invalid(format!("expected {} values for a {rows}x{cols} grid, got {}", rows * cols, values.len())));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return Err(invalid(format!("variation factor {v} outside (0, 1]")));
        }
        Ok(PvGrid { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, (r, c): Cell) -> Option<f64> {
        (r < self.rows && c < self.cols).then(|| self.values[r * self.cols + c])
    }

    /// Multiplies every factor by `c`, which must lie in `(0, 1]`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c <= 1.0) {
            return Err(invalid(format!("scale {c} outside (0, 1]")));
        }
        PvGrid::from_values(self.rows, self.cols, self.values.iter().map(|v| v * c).collect())
    }

    /// Plain-text form: a `P Q` header followed by `P` rows of `Q` values.
    pub fn to_text(&self) -> String {
        let mut out = format!("{} {}\n", self.rows, self.cols);
        for row in self.values.chunks(self.cols) {
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }

    pub fn parse_text(text: &str, path: &Path) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or_else(|| perr(1, "missing `P Q` header".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| perr(hline + 1, format!("bad header: {e}")))?;
        let [rows, cols] = dims[..] else {
            return Err(perr(hline + 1, "header must hold exactly two integers".into()));
        };
        let mut values = Vec::with_capacity(rows * cols);
        let mut seen_rows = 0;
        for (idx, line) in lines {
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| perr(idx + 1, format!("bad value: {e}")))?;
            if row.len() != cols {
                return Err(perr(idx + 1, format!("expected {cols} values, found {}", row.len())));
            }
            values.extend(row);
            seen_rows += 1;
        }
        if seen_rows != rows {
            return Err(perr(hline + 1, format!("header declares {rows} rows, found {seen_rows}")));
        }
        PvGrid::from_values(rows, cols, values)
    }

    pub fn load(path: &Path) -> Result<Self> {
        PvGrid::parse_text(&std::fs::read_to_string(path)?, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

/// Generates a spatially correlated variation map.
///
/// Every cell draws an independent standard normal; the field is smoothed by
/// an exponential kernel `exp(-d / correlation_length)`, renormalized to unit
/// marginal variance, mapped affinely onto `(p_min, 1]` (mean at the middle
/// of the range, three standard deviations to each end) and clamped.
pub fn generate_pv_grid(rows: usize, cols: usize, seed: u64, params: &PvParams) -> Result<PvGrid> {
    if rows == 0 || cols == 0 {
        return Err(invalid("grid dimensions must be positive"));
    }
    if !(params.correlation_length >= 0.0) {
        return Err(invalid("correlation_length must be >= 0"));
    }
    if !(params.p_min > 0.0 && params.p_min < 1.0) {
        return Err(invalid("p_min must lie in (0, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let white: Vec<f64> = (0..rows * cols).map(|_| StandardNormal.sample(&mut rng)).collect();

    let field = if params.correlation_length == 0.0 {
        white
    } else {
        let corr = params.correlation_length;
        // Kernel support is cut where the weight drops below e^-6.
        let reach = (6.0 * corr).ceil() as isize;
        let mut kernel = Vec::new();
        for dr in -reach..=reach {
            for dc in -reach..=reach {
                let d = ((dr * dr + dc * dc) as f64).sqrt();
                if d <= reach as f64 {
                    kernel.push((dr, dc, (-d / corr).exp()));
                }
            }
        }
        let norm = kernel.iter().map(|k| k.2 * k.2).sum::<f64>().sqrt();
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows as isize {
            for c in 0..cols as isize {
                // Out-of-grid neighbours wrap around so every cell sees the full
                // kernel and keeps unit variance.
                let acc: f64 = kernel
                    .iter()
                    .map(|&(dr, dc, w)| {
                        let rr = (r + dr).rem_euclid(rows as isize) as usize;
                        let cc = (c + dc).rem_euclid(cols as isize) as usize;
                        w * white[rr * cols + cc]
                    })
                    .sum();
                out[r as usize * cols + c as usize] = acc / norm;
            }
        }
        out
    };

    let center = 0.5 * (1.0 + params.p_min);
    let spread = (1.0 - params.p_min) / 6.0;
    let values = field.into_iter().map(|z| (center + spread * z).clamp(params.p_min, 1.0)).collect();
    PvGrid::from_values(rows, cols, values)
}

/// Wire width, wire height and grid resistance per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    pub kappa1: f64,
    pub kappa2: f64,
    pub gamma_res: f64,
    pub wire_width: Vec<f64>,
    pub wire_height: Vec<f64>,
    pub resistance: Vec<f64>,
}

pub fn derive_physical_params(grid: &PvGrid, kappa1: f64, kappa2: f64, gamma_res: f64) -> Result<PhysicalParams> {
    for (name, v) in [("kappa1", kappa1), ("kappa2", kappa2), ("gamma_res", gamma_res)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(invalid(format!("{name} must be positive, got {v}")));
        }
    }
    let scale = |k: f64| grid.values.iter().map(|p| k * p).collect();
    Ok(PhysicalParams { kappa1, kappa2, gamma_res, wire_width: scale(kappa1), wire_height: scale(kappa2), resistance: scale(gamma_res) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoreFrequencyMap {
    pub beta_f: f64,
    pub cp_sets: Vec<Vec<Cell>>,
    pub frequencies: Vec<f64>,
}

/// Per-core maximum frequency: `beta_f` times the smallest variation factor
/// over the core's critical-path cells.
pub fn max_frequencies(grid: &PvGrid, cp_sets: &[Vec<Cell>], beta_f: f64) -> Result<CoreFrequencyMap> {
    if !(beta_f > 0.0 && beta_f.is_finite()) {
        return Err(invalid(format!("beta_f must be positive, got {beta_f}")));
    }
    let mut frequencies = Vec::with_capacity(cp_sets.len());
    for (core, set) in cp_sets.iter().enumerate() {
        if set.is_empty() {
            return Err(invalid(format!("critical-path set of core {core} is empty")));
        }
        let mut min_p = f64::INFINITY;
        for &cell in set {
            let p = grid.get(cell).ok_or_else(|| invalid(format!("core {core}: cell {cell:?} outside the grid")))?;
            min_p = min_p.min(p);
        }
        frequencies.push(beta_f * min_p);
    }
    Ok(CoreFrequencyMap { beta_f, cp_sets: cp_sets.to_vec(), frequencies })
}

/// Critical-path sets covering each core's own tile footprint, cores
/// numbered row-major over a `core_rows x core_cols` layout.
pub fn footprint_cp_sets(core_rows: usize, core_cols: usize, cells_per_core: usize) -> Vec<Vec<Cell>> {
    let mut sets = Vec::with_capacity(core_rows * core_cols);
    for cr in 0..core_rows {
        for cc in 0..core_cols {
            let mut set = Vec::with_capacity(cells_per_core * cells_per_core);
            for dr in 0..cells_per_core {
                for dc in 0..cells_per_core {
                    set.push((cr * cells_per_core + dr, cc * cells_per_core + dc));
                }
            }
            sets.push(set);
        }
    }
    sets
}
