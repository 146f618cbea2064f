use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::CliError;

/// One solver run. Field order is the CSV column order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub suite: String,
    pub m: usize,
    pub n: usize,
    pub true_rank: Option<usize>,
    pub missing: Option<f64>,
    pub snr_db: Option<f64>,
    pub p: f64,
    pub lambda: f64,
    pub init_rank: usize,
    pub escape: &'static str,
    pub seed: u64,
    pub iters: Option<usize>,
    pub escapes: Option<usize>,
    pub final_rank: Option<usize>,
    pub objective: Option<f64>,
    pub re: Option<f64>,
    pub nmae: Option<f64>,
    pub wall_ms: Option<f64>,
    pub error: Option<String>,
}

pub const COLUMNS: [&str; 19] = [
    "suite",
    "m",
    "n",
    "true_rank",
    "missing",
    "snr_db",
    "p",
    "lambda",
    "init_rank",
    "escape",
    "seed",
    "iters",
    "escapes",
    "final_rank",
    "objective",
    "re",
    "nmae",
    "wall_ms",
    "error",
];

pub fn write_csv<T: Serialize, W: Write>(rows: &[T], w: W) -> Result<(), CliError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

/// Writes to `path`, or stdout when `path` is `None` or `-`.
pub fn write_csv_to<T: Serialize>(rows: &[T], path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) if p != Path::new("-") => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            write_csv(rows, std::fs::File::create(p)?)
        }
        _ => write_csv(rows, std::io::stdout().lock()),
    }
}

pub fn write_json<T: Serialize>(rows: &[T], path: &Path) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(rows).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}
