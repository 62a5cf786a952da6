//! Result tables, CSV emission and the JSON run manifest.

use std::io::Write;
use std::time::Instant;

use ndarray::{Array1, Array2};
use serde::Serialize;

use crate::config::Config;
use crate::error::Result;

/// One statistic of one experiment.
#[derive(Debug, Clone, Serialize)]
pub struct ResultRow {
    pub experiment: String,
    pub eps: f64,
    pub statistic: String,
    pub value: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// `None` for purely informational rows
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn push(&mut self, row: ResultRow) {
        self.rows.push(row);
    }

    pub fn push_stat(
        &mut self,
        experiment: &str,
        eps: f64,
        statistic: &str,
        value: f64,
        se: f64,
        pass: Option<bool>,
    ) {
        self.rows.push(ResultRow {
            experiment: experiment.to_string(),
            eps,
            statistic: statistic.to_string(),
            value,
            se,
            ci_low: value - 1.96 * se,
            ci_high: value + 1.96 * se,
            pass,
        });
    }

    pub fn pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass.unwrap_or(true))
    }

    pub fn merge(&mut self, other: ResultTable) {
        self.rows.extend(other.rows);
    }

    /// Fixed header: experiment,eps,statistic,value,se,ci_low,ci_high,pass
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "experiment,eps,statistic,value,se,ci_low,ci_high,pass")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.experiment,
                r.eps,
                r.statistic,
                r.value,
                r.se,
                r.ci_low,
                r.ci_high,
                r.pass.map(|p| if p { "pass" } else { "fail" }).unwrap_or("info")
            )?;
        }
        Ok(())
    }
}

/// Matrix CSV with grid coordinates as row and column headers.
pub fn write_matrix_csv<W: Write>(w: &mut W, coords: &Array1<f64>, matrix: &Array2<f64>) -> Result<()> {
    write!(w, "x\\y")?;
    for y in coords.iter() {
        write!(w, ",{y}")?;
    }
    writeln!(w)?;
    for (i, row) in matrix.rows().into_iter().enumerate() {
        write!(w, "{}", coords[i])?;
        for v in row.iter() {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// Field CSV `x,value`.
pub fn write_field_csv<W: Write>(w: &mut W, name: &str, coords: &Array1<f64>, field: &Array1<f64>) -> Result<()> {
    writeln!(w, "x,{name}")?;
    for (x, v) in coords.iter().zip(field.iter()) {
        writeln!(w, "{x},{v}")?;
    }
    Ok(())
}

/// Trajectory series CSV shared by the kinetic and limit solvers.
pub fn write_series_csv<W: Write>(
    w: &mut W,
    times: &[f64],
    state_norm: &[f64],
    driver_e_norm: &[f64],
    zeta_c1: &[f64],
    stopped_at: f64,
) -> Result<()> {
    writeln!(w, "t,state_norm,driver_e_norm,zeta_c1,stopped")?;
    for i in 0..times.len() {
        writeln!(
            w,
            "{},{},{},{},{}",
            times[i],
            state_norm[i],
            driver_e_norm.get(i).copied().unwrap_or(0.0),
            zeta_c1[i],
            u8::from(times[i] >= stopped_at)
        )?;
    }
    Ok(())
}

/// Snapshot CSV `t,x,value`.
pub fn write_snapshots_csv<W: Write>(
    w: &mut W,
    name: &str,
    coords: &Array1<f64>,
    snapshots: &[(f64, Array1<f64>)],
) -> Result<()> {
    writeln!(w, "t,x,{name}")?;
    for (t, field) in snapshots {
        for (x, v) in coords.iter().zip(field.iter()) {
            writeln!(w, "{t},{x},{v}")?;
        }
    }
    Ok(())
}

/// JSON manifest accompanying every run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub code_version: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub wall_time_s: f64,
    pub pass: bool,
    pub warnings: Vec<String>,
    pub config: std::collections::BTreeMap<String, String>,
    pub summary: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &Config, master_seed: u64) -> (Self, Instant) {
        let manifest = Self {
            command: command.to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            master_seed,
            wall_time_s: 0.0,
            pass: false,
            warnings: Vec::new(),
            config: config.entries().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            summary: Vec::new(),
        };
        (manifest, Instant::now())
    }

    pub fn finalize(&mut self, started: Instant, pass: bool) {
        self.wall_time_s = started.elapsed().as_secs_f64();
        self.pass = pass;
    }

    pub fn write_json<W: Write>(&self, w: &mut W) -> Result<()> {
        serde_json::to_writer_pretty(&mut *w, self)
            .map_err(|e| crate::error::Error::Io(std::io::Error::other(e)))?;
        writeln!(w)?;
        Ok(())
    }
}
