//! Grid outputs: rectangular scans with axis metadata, CSV emission, and
//! atomic file writes. CSV is UTF-8 with LF line endings and '.' decimals;
//! floats print in shortest round-trip form, so identical runs are
//! byte-identical.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use critlift_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AxisSpec {
    pub name: String,
    pub min: f64,
    pub max: f64,
    /// Number of grid points (inclusive endpoints).
    pub steps: usize,
}

impl AxisSpec {
    pub fn new(name: &str, min: f64, max: f64, steps: usize) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::Config(format!(
                "axis {name}: invalid range ({min}, {max})"
            )));
        }
        if steps < 2 {
            return Err(Error::Config(format!("axis {name}: needs at least 2 steps")));
        }
        Ok(Self { name: name.to_string(), min, max, steps })
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.steps)
            .map(|i| self.min + (self.max - self.min) * i as f64 / (self.steps - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridMeta {
    pub scenario_hash: String,
    pub seed: u64,
    pub tolerances: BTreeMap<String, f64>,
    pub non_finite_cells: usize,
}

/// A rectangular scan: outer axis first, inner axis second, one row of
/// values per cell.
#[derive(Debug, Clone)]
pub struct GridOutput {
    pub name: String,
    pub axis0: AxisSpec,
    pub axis1: AxisSpec,
    pub value_names: Vec<String>,
    /// Row-major over (axis0, axis1); each entry holds `value_names.len()`
    /// values.
    pub values: Vec<Vec<f64>>,
    pub meta: GridMeta,
}

impl GridOutput {
    pub fn cell(&self, i: usize, j: usize) -> &[f64] {
        &self.values[i * self.axis1.steps + j]
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str(&self.axis0.name);
        out.push(',');
        out.push_str(&self.axis1.name);
        for v in &self.value_names {
            out.push(',');
            out.push_str(v);
        }
        out.push('\n');
        let xs = self.axis0.values();
        let ys = self.axis1.values();
        for (i, x) in xs.iter().enumerate() {
            for (j, y) in ys.iter().enumerate() {
                out.push_str(&format!("{x},{y}"));
                for v in self.cell(i, j) {
                    out.push_str(&format!(",{v}"));
                }
                out.push('\n');
            }
        }
        out
    }

    /// Write `<stem>.csv` and `<stem>.meta.json` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        atomic_write(&dir.join(format!("{stem}.csv")), self.to_csv_string().as_bytes())?;
        let meta = serde_json::json!({
            "name": self.name,
            "axes": [self.axis0, self.axis1],
            "value_names": self.value_names,
            "meta": self.meta,
        });
        atomic_write(
            &dir.join(format!("{stem}.meta.json")),
            serde_json::to_string_pretty(&meta)
                .map_err(|e| Error::Config(e.to_string()))?
                .as_bytes(),
        )
    }
}

/// Write via a temp file in the same directory followed by a rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text =
        serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    atomic_write(path, format!("{text}\n").as_bytes())
}
