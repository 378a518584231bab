//! Output layout: `<outdir>/<subcommand>/<timestamp>/` holding a manifest,
//! CSV tables and optionally a plotting script.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::config::{to_toml, RunConfig};
use crate::error::CliError;

pub struct RunDir {
    pub path: PathBuf,
    tables: Vec<String>,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

impl RunDir {
    /// Creates a fresh timestamped directory; a numeric suffix separates runs
    /// started within the same millisecond.
    pub fn create(config: &RunConfig, subcommand: &str) -> Result<Self, CliError> {
        let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ").to_string();
        let parent = config.output_dir.join(subcommand);
        std::fs::create_dir_all(&parent).map_err(|e| io_err(&parent, e))?;
        let mut path = parent.join(&stamp);
        let mut k = 1;
        loop {
            match std::fs::create_dir(&path) {
                Ok(()) => break,
                Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                    path = parent.join(format!("{stamp}-{k}"));
                    k += 1;
                }
                Err(e) => return Err(io_err(&path, e)),
            }
        }
        let dir = Self { path, tables: Vec::new() };
        dir.write_manifest(config, subcommand)?;
        Ok(dir)
    }

    fn write_manifest(&self, config: &RunConfig, subcommand: &str) -> Result<(), CliError> {
        let head = format!(
            "# kppfront {} {subcommand}\n# resolved configuration\n",
            env!("CARGO_PKG_VERSION")
        );
        self.write_text("manifest.toml", &(head + &to_toml(config)))
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let p = self.path.join(name);
        std::fs::write(&p, text).map_err(|e| io_err(&p, e))
    }

    /// Writes a CSV table through one buffered writer and registers it for
    /// the plotting script.
    pub fn csv<F>(&mut self, name: &str, fill: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
    {
        let p = self.path.join(name);
        let f = File::create(&p).map_err(|e| io_err(&p, e))?;
        let mut w = BufWriter::new(f);
        fill(&mut w).and_then(|_| w.flush()).map_err(|e| io_err(&p, e))?;
        self.tables.push(name.to_string());
        Ok(())
    }

    /// `plot.py`: first numeric column against every other numeric column,
    /// one figure per table.
    pub fn write_plotscript(&self) -> Result<(), CliError> {
        let list = self
            .tables
            .iter()
            .map(|t| format!("    {t:?},"))
            .collect::<Vec<_>>()
            .join("\n");
        let script = format!(
            r#"#!/usr/bin/env python3
# Plots every table of this run: first column on x, the rest on y.
import csv
import os
import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))
TABLES = [
{list}
]


def numeric(rows, k):
    try:
        return [float(r[k]) for r in rows]
    except ValueError:
        return None


for name in TABLES:
    with open(os.path.join(HERE, name)) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    if not rows:
        continue
    x = numeric(rows, 0)
    if x is None:
        continue
    fig, ax = plt.subplots()
    for k in range(1, len(header)):
        y = numeric(rows, k)
        if y is not None:
            ax.plot(x, y, label=header[k])
    ax.set_xlabel(header[0])
    ax.legend()
    fig.savefig(os.path.join(HERE, os.path.splitext(name)[0] + ".png"), dpi=150)
    plt.close(fig)
"#
        );
        self.write_text("plot.py", &script)
    }
}
