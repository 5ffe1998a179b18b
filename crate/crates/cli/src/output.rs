use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use dropmf::experiments::ExperimentReport;

use crate::OutputArgs;

pub struct Sink {
    dir: PathBuf,
    pub csv: bool,
    pub json: bool,
}

impl Sink {
    pub fn new(args: &OutputArgs) -> anyhow::Result<Self> {
        fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
        Ok(Self {
            dir: args.out.clone(),
            csv: args.format.csv(),
            json: args.format.json(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn report(&self, report: &ExperimentReport) -> anyhow::Result<()> {
        if self.json {
            let p = self.path("report.json");
            report.write_json(&p).with_context(|| format!("writing {}", p.display()))?;
        }
        Ok(())
    }

    /// Writes `header` and `rows` to `name` when CSV output is enabled.
    pub fn table(&self, name: &str, header: &str, rows: impl IntoIterator<Item = String>) -> anyhow::Result<()> {
        if !self.csv {
            return Ok(());
        }
        write_lines(&self.path(name), header, rows)
    }
}

pub fn write_lines(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> anyhow::Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    writeln!(w, "{header}")?;
    for row in rows {
        writeln!(w, "{row}")?;
    }
    w.flush()?;
    Ok(())
}
