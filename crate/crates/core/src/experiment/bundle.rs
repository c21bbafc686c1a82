//! Result bundles: a directory of plain files written through one writer.
//!
//! Numbers are written with Rust's shortest round-trip formatting, rows end in `\n`,
//! and nothing time- or host-dependent is recorded, so a bundle is a pure function of
//! its manifest.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Result, SlipsError};
use crate::sampler::RunResult;

pub const MANIFEST: &str = "manifest.json";
pub const SAMPLES: &str = "samples.csv";
pub const TRACE: &str = "trace.csv";
pub const METRICS: &str = "metrics.json";
pub const CHECKS: &str = "checks.json";
pub const COMPARE: &str = "compare.csv";
pub const C_DISC: &str = "c_disc.csv";

/// Writes files into the bundle directory and remembers their names.
#[derive(Debug)]
pub struct BundleWriter {
    dir: PathBuf,
    files: Vec<String>,
}

impl BundleWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| SlipsError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }

    pub fn write_text(&mut self, name: &str, content: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, content).map_err(|e| SlipsError::Io(format!("cannot write {}: {e}", path.display())))?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| SlipsError::Io(e.to_string()))?;
        text.push('\n');
        self.write_text(name, &text)
    }
}

fn join_floats(out: &mut String, xs: &[f64]) {
    for x in xs {
        let _ = write!(out, ",{x}");
    }
}

fn header(prefix: &str, dim: usize) -> String {
    (0..dim).map(|i| format!(",{prefix}{i}")).collect()
}

/// `run_id,x0,...,x{d-1}` then one row per run.
pub fn samples_csv(runs: &[RunResult], dim: usize) -> String {
    let mut out = format!("run_id{}\n", header("x", dim));
    for r in runs {
        let _ = write!(out, "{}", r.run_index);
        join_floats(&mut out, &r.sample);
        out.push('\n');
    }
    out
}

/// One row per run and grid time: `run_id,k,t,y...,u...,g...,acceptance`.
/// The final row of each run (k = K) has empty denoiser, noise and acceptance fields.
pub fn trace_csv(runs: &[RunResult], dim: usize) -> String {
    let mut out = format!("run_id,k,t{}{}{},acceptance\n", header("y", dim), header("u", dim), header("g", dim));
    let empty = ",".repeat(dim);
    for r in runs {
        for (k, state) in r.states.iter().enumerate() {
            let _ = write!(out, "{},{},{}", r.run_index, k, r.grid[k]);
            join_floats(&mut out, state);
            match r.steps.get(k) {
                Some(step) => {
                    join_floats(&mut out, &step.u_hat);
                    join_floats(&mut out, &step.noise);
                    match step.acceptance {
                        Some(a) => {
                            let _ = write!(out, ",{a}");
                        }
                        None => out.push(','),
                    }
                }
                None => {
                    out.push_str(&empty);
                    out.push_str(&empty);
                    out.push(',');
                }
            }
            out.push('\n');
        }
    }
    out
}

/// Parses a samples file back into `(run_id, coordinates)` rows.
pub fn read_samples_csv(text: &str) -> Result<Vec<(u64, Vec<f64>)>> {
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| SlipsError::InvalidInput("empty samples file".into()))?;
    if !head.starts_with("run_id") {
        return Err(SlipsError::InvalidInput("samples file lacks its header".into()));
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let mut fields = line.split(',');
            let bad = || SlipsError::InvalidInput(format!("samples file line {}: malformed row", i + 2));
            let id = fields.next().and_then(|f| f.parse().ok()).ok_or_else(bad)?;
            let xs = fields.map(|f| f.parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<f64>>>()?;
            Ok((id, xs))
        })
        .collect()
}
