//! CSV and JSON artifacts.
//!
//! Layout of an experiment directory:
//!
//! | file                    | contents                                              |
//! |-------------------------|-------------------------------------------------------|
//! | `summary.json`          | [`Summary`]: config echo and per-solver aggregates    |
//! | `trials.csv`            | one [`TrialReport`] row per solver and trial          |
//! | `sweep_<solver>.csv`    | one [`SweepRow`] per tau on trial 0                   |
//! | `recon_trial_<k>.csv`   | `index,f_true,f_hat_<solver>...`                      |
//! | `timings.json`/`.csv`   | wall-clock times (not reproducible, kept separate)    |
//!
//! `summary.json`, `trials.csv`, the sweep tables and reconstructions depend
//! only on the spec and are byte-identical across repeated runs.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{ExperimentOutcome, Instance, Reconstruction, Summary, SweepRow, TimingSummary, TrialReport, TrialTiming};
use crate::error::{Error, Result};

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Error + '_ {
    move |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    }
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    for row in rows {
        w.serialize(row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_rows<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    r.deserialize().map(|row| row.map_err(csv_err(path))).collect()
}

/// Writes named columns of equal length under an `index` column.
pub fn write_columns(path: &Path, columns: &[(&str, &DVector<f64>)]) -> Result<()> {
    let len = columns.first().map_or(0, |(_, c)| c.len());
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let mut header = vec!["index".to_string()];
    header.extend(columns.iter().map(|(name, _)| name.to_string()));
    w.write_record(&header).map_err(csv_err(path))?;
    for i in 0..len {
        let mut rec = vec![i.to_string()];
        rec.extend(columns.iter().map(|(_, c)| c[i].to_string()));
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Reads one named column written by [`write_columns`].
pub fn read_column(path: &Path, name: &str) -> Result<DVector<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let idx = r
        .headers()
        .map_err(csv_err(path))?
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::InvalidSpec(format!("{} has no column {name}", path.display())))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        out.push(parse_f64(path, &rec[idx])?);
    }
    Ok(DVector::from_vec(out))
}

fn parse_f64(path: &Path, s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidSpec(format!("{}: cannot parse {s:?} as a number", path.display())))
}

/// Dense matrix as CSV: header `c0,...,c{n-1}`, one line per row.
pub fn write_matrix(path: &Path, a: &DMatrix<f64>) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let header: Vec<String> = (0..a.ncols()).map(|j| format!("c{j}")).collect();
    writeln!(w, "{}", header.join(",")).map_err(io_err(path))?;
    let mut line = String::new();
    for i in 0..a.nrows() {
        line.clear();
        for j in 0..a.ncols() {
            if j > 0 {
                line.push(',');
            }
            line.push_str(&a[(i, j)].to_string());
        }
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let ncols = r.headers().map_err(csv_err(path))?.len();
    let mut data = Vec::new();
    let mut nrows = 0;
    for rec in r.records() {
        let rec = rec.map_err(csv_err(path))?;
        for s in rec.iter() {
            data.push(parse_f64(path, s)?);
        }
        nrows += 1;
    }
    if data.len() != nrows * ncols {
        return Err(Error::InvalidSpec(format!("{} is not rectangular", path.display())));
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, &data))
}

pub const MATRIX_FILE: &str = "A.csv";
pub const MEASUREMENTS_FILE: &str = "y.csv";
pub const SIGNAL_FILE: &str = "f_true.csv";

/// Writes `A.csv`, `y.csv` (`index,y,clean`) and `f_true.csv`.
pub fn write_instance(dir: &Path, inst: &Instance) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let paths = [dir.join(MATRIX_FILE), dir.join(MEASUREMENTS_FILE), dir.join(SIGNAL_FILE)];
    write_matrix(&paths[0], &inst.a)?;
    write_columns(&paths[1], &[("y", &inst.y), ("clean", &inst.clean)])?;
    write_columns(&paths[2], &[("f_true", &inst.f_true)])?;
    Ok(paths.to_vec())
}

/// Reads an instance written by [`write_instance`].
pub fn read_instance(dir: &Path) -> Result<Instance> {
    let a = read_matrix(&dir.join(MATRIX_FILE))?;
    let y_path = dir.join(MEASUREMENTS_FILE);
    let y = read_column(&y_path, "y")?;
    let clean = read_column(&y_path, "clean")?;
    let f_true = read_column(&dir.join(SIGNAL_FILE), "f_true")?;
    Ok(Instance { a, f_true, clean, y })
}

pub fn write_sweep(path: &Path, rows: &[SweepRow]) -> Result<()> {
    write_rows(path, rows)
}

pub fn write_reconstruction(path: &Path, rec: &Reconstruction) -> Result<()> {
    let names: Vec<String> = rec.estimates.iter().map(|(k, _)| format!("f_hat_{k}")).collect();
    let mut cols: Vec<(&str, &DVector<f64>)> = vec![("f_true", &rec.f_true)];
    for (name, (_, est)) in names.iter().zip(&rec.estimates) {
        cols.push((name, est));
    }
    write_columns(path, &cols)
}

/// Writes every artifact of an experiment into `dir`.
pub fn write_outcome(dir: &Path, outcome: &ExperimentOutcome) -> Result<Vec<PathBuf>> {
    ensure_dir(dir)?;
    let mut written = Vec::new();
    let mut push = |p: PathBuf| {
        written.push(p.clone());
        p
    };
    write_json(&push(dir.join("summary.json")), &outcome.summary)?;
    write_rows(&push(dir.join("trials.csv")), &outcome.trials)?;
    for sweep in &outcome.sweeps {
        write_sweep(&push(dir.join(format!("sweep_{}.csv", sweep.solver))), &sweep.rows)?;
    }
    for rec in &outcome.reconstructions {
        write_reconstruction(&push(dir.join(format!("recon_trial_{:02}.csv", rec.trial))), rec)?;
    }
    write_json(&push(dir.join("timings.json")), &outcome.timings)?;
    write_rows(&push(dir.join("timings.csv")), &outcome.timings.trials)?;
    Ok(written)
}

/// Re-aggregates `trials.csv` (and `timings.csv` when present) of an
/// experiment directory.
pub fn load_report(dir: &Path) -> Result<(Summary, Option<TimingSummary>)> {
    let trials: Vec<TrialReport> = read_rows(&dir.join("trials.csv"))?;
    let summary_path = dir.join("summary.json");
    let config = match fs::read_to_string(&summary_path) {
        Ok(text) => serde_json::from_str::<Summary>(&text)
            .map_err(|source| Error::Json {
                path: summary_path.clone(),
                source,
            })?
            .config,
        Err(_) => Default::default(),
    };
    let timing_path = dir.join("timings.csv");
    let timings = if timing_path.exists() {
        let rows: Vec<TrialTiming> = read_rows(&timing_path)?;
        Some(super::summarize_timings(rows))
    } else {
        None
    };
    Ok((super::summarize(config, &trials), timings))
}
