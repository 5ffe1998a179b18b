use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Self-describing experiment output: every parameter needed to rerun it
/// plus the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub experiment: String,
    pub crate_version: String,
    pub seed: u64,
    pub wall_time: f64,
    pub parameters: Value,
    pub results: Value,
}

impl ExperimentReport {
    pub fn new<P: Serialize, R: Serialize>(
        experiment: &str,
        seed: u64,
        wall_time: f64,
        parameters: &P,
        results: &R,
    ) -> Result<Self> {
        let report = Self {
            schema_version: SCHEMA_VERSION,
            experiment: experiment.to_string(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            wall_time,
            parameters: serde_json::to_value(parameters)?,
            results: serde_json::to_value(results)?,
        };
        report.validate()?;
        Ok(report)
    }

    /// Rejects unknown schema versions and any `null` that stands in for a
    /// non-finite number.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Parse {
                path: "report".into(),
                msg: format!("unsupported schema version {}", self.schema_version),
            });
        }
        if !self.wall_time.is_finite() {
            return Err(Error::Parse {
                path: "report".into(),
                msg: "non-finite wall time".into(),
            });
        }
        check_numeric_arrays(&self.results, "results")
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let report: Self = serde_json::from_reader(std::io::BufReader::new(File::open(path)?))?;
        report.validate()?;
        Ok(report)
    }
}

fn check_numeric_arrays(v: &Value, at: &str) -> Result<()> {
    match v {
        Value::Array(items) => {
            let numeric = items.iter().any(Value::is_number);
            for (i, item) in items.iter().enumerate() {
                if numeric && item.is_null() {
                    return Err(Error::Parse {
                        path: "report".into(),
                        msg: format!("non-finite entry at {at}[{i}]"),
                    });
                }
                check_numeric_arrays(item, at)?;
            }
            Ok(())
        }
        Value::Object(map) => map.iter().try_for_each(|(k, item)| check_numeric_arrays(item, k)),
        _ => Ok(()),
    }
}

/// `index,<name₁>,<name₂>,…` with one row per singular-value index; shorter
/// spectra are padded with empty cells.
pub fn write_spectrum_csv(path: impl AsRef<Path>, columns: &[(&str, &[f64])]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "index")?;
    for (name, _) in columns {
        write!(w, ",{name}")?;
    }
    writeln!(w)?;
    let len = columns.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    for i in 0..len {
        write!(w, "{}", i + 1)?;
        for (_, c) in columns {
            match c.get(i) {
                Some(v) => write!(w, ",{v:e}")?,
                None => write!(w, ",")?,
            }
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}
