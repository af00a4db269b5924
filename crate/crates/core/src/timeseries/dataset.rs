use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{
    ChannelSpec, SimulationRecord, INPUT_CHANNELS, N_INPUTS, N_OUTPUTS, N_STATES,
    OUTPUT_CHANNELS, STATE_CHANNELS, STATE_DERIVATIVE_CHANNELS,
};
use crate::error::{Error, Result};

/// Grid of records indexed by `(seed, wind-speed column)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    w_grid: Vec<f64>,
    /// `records[s][i]`: seed `s`, wind-speed column `i`.
    records: Vec<Vec<SimulationRecord>>,
}

impl Dataset {
    pub fn new(w_grid: Vec<f64>, records: Vec<Vec<SimulationRecord>>) -> Result<Self> {
        if w_grid.is_empty() {
            return Err(Error::InvalidArgument("empty wind-speed grid".into()));
        }
        if w_grid.windows(2).any(|p| !(p[1] > p[0])) {
            return Err(Error::InvalidArgument(
                "wind-speed grid must be strictly increasing".into(),
            ));
        }
        if records.is_empty() {
            return Err(Error::InvalidArgument("dataset has no seeds".into()));
        }
        for (s, row) in records.iter().enumerate() {
            if row.len() != w_grid.len() {
                return Err(Error::InvalidArgument(format!(
                    "seed row {s} has {} columns, expected {}",
                    row.len(),
                    w_grid.len()
                )));
            }
            for (i, rec) in row.iter().enumerate() {
                if (rec.meta.w_bar - w_grid[i]).abs() > 1e-9 * w_grid[i].abs().max(1.0) {
                    return Err(Error::InvalidArgument(format!(
                        "record ({s}, {i}) has w_bar {} but grid value {}",
                        rec.meta.w_bar, w_grid[i]
                    )));
                }
            }
        }
        Ok(Self { w_grid, records })
    }

    pub fn w_grid(&self) -> &[f64] {
        &self.w_grid
    }

    pub fn n_seeds(&self) -> usize {
        self.records.len()
    }

    pub fn n_columns(&self) -> usize {
        self.w_grid.len()
    }

    pub fn record(&self, seed: usize, column: usize) -> &SimulationRecord {
        &self.records[seed][column]
    }

    pub fn records(&self) -> &[Vec<SimulationRecord>] {
        &self.records
    }

    pub fn column(&self, column: usize) -> impl Iterator<Item = &SimulationRecord> {
        self.records.iter().map(move |row| &row[column])
    }

    pub fn map_records<F>(self, f: F) -> Result<Self>
    where
        F: Fn(SimulationRecord) -> Result<SimulationRecord> + Sync + Send,
    {
        use rayon::prelude::*;
        let records = self
            .records
            .into_par_iter()
            .map(|row| row.into_iter().map(&f).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.w_grid, records)
    }

    /// Text rendering of the seed × wind-speed matrix of mean wind speeds.
    pub fn layout(&self) -> String {
        let mut out = String::new();
        for row in &self.records {
            let cells: Vec<String> = row.iter().map(|r| format!("{:6.2}", r.meta.w_bar)).collect();
            out.push_str(&format!("[{}]\n", cells.join(" ")));
        }
        out
    }

    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut files = Vec::with_capacity(self.n_seeds());
        for (s, row) in self.records.iter().enumerate() {
            let mut names = Vec::with_capacity(row.len());
            for (i, rec) in row.iter().enumerate() {
                let name = format!("case_s{s:02}_w{i:02}.json");
                rec.write_json(&dir.join(&name))?;
                names.push(name);
            }
            files.push(names);
        }
        let manifest = DatasetManifest {
            w_grid: self.w_grid.clone(),
            files,
        };
        let path = dir.join(MANIFEST);
        fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text)?;
        let records = manifest
            .files
            .iter()
            .map(|row| {
                row.iter()
                    .map(|name| SimulationRecord::read_json(&dir.join(name)))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(manifest.w_grid, records)
    }

    pub fn manifest_path(dir: &Path) -> PathBuf {
        dir.join(MANIFEST)
    }
}

const MANIFEST: &str = "dataset.json";

#[derive(Debug, Serialize, Deserialize)]
struct DatasetManifest {
    w_grid: Vec<f64>,
    files: Vec<Vec<String>>,
}

/// Which seeds and samples enter the regression matrices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssemblyOptions {
    /// The first `n_train` seeds of each column are used for fitting.
    pub n_train: usize,
    /// Start-up transient dropped from every record [s].
    pub trim_start: f64,
    /// Samples dropped at both record ends where spline derivatives are least
    /// accurate [s].
    pub edge_trim: f64,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            n_train: 5,
            trim_start: 60.0,
            edge_trim: 1.0,
        }
    }
}

impl AssemblyOptions {
    /// Sample index window of a record that survives trimming.
    pub fn window(&self, rec: &SimulationRecord) -> Result<(usize, usize)> {
        let t_start = rec.t0() + self.trim_start.max(self.edge_trim);
        let t_end = rec.t_end() - self.edge_trim;
        rec.inputs.index_window(t_start, t_end)
    }
}

/// Column-stacked regression data of one wind-speed column.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    /// `n_u × N`
    pub u: DMatrix<f64>,
    /// `n_ξ × N`
    pub xi: DMatrix<f64>,
    /// `n_ξ × N`
    pub xi_dot: DMatrix<f64>,
    /// `n_y × N`
    pub y: DMatrix<f64>,
}

impl RegressionData {
    pub fn n_samples(&self) -> usize {
        self.u.ncols()
    }
}

pub fn assemble_regression_data(
    dataset: &Dataset,
    column: usize,
    opts: &AssemblyOptions,
) -> Result<RegressionData> {
    if column >= dataset.n_columns() {
        return Err(Error::IndexOutOfRange {
            index: column,
            len: dataset.n_columns(),
        });
    }
    if opts.n_train == 0 || opts.n_train > dataset.n_seeds() {
        return Err(Error::InvalidArgument(format!(
            "n_train = {} with {} seeds",
            opts.n_train,
            dataset.n_seeds()
        )));
    }
    let records: Vec<&SimulationRecord> = dataset.column(column).take(opts.n_train).collect();
    let windows = records
        .iter()
        .map(|r| opts.window(r))
        .collect::<Result<Vec<_>>>()?;
    let total: usize = windows.iter().map(|(lo, hi)| hi - lo + 1).sum();

    let mut data = RegressionData {
        u: DMatrix::zeros(N_INPUTS, total),
        xi: DMatrix::zeros(N_STATES, total),
        xi_dot: DMatrix::zeros(N_STATES, total),
        y: DMatrix::zeros(N_OUTPUTS, total),
    };
    let mut offset = 0;
    for (rec, &(lo, hi)) in records.iter().zip(&windows) {
        let states = rec.states.as_ref().ok_or_else(|| Error::MissingChannel {
            symbol: STATE_CHANNELS[0].symbol.into(),
            name: STATE_CHANNELS[0].name.into(),
        })?;
        fill(&mut data.u, offset, lo, hi, &INPUT_CHANNELS, |s| rec.inputs.require(s))?;
        fill(&mut data.y, offset, lo, hi, &OUTPUT_CHANNELS, |s| rec.outputs.require(s))?;
        fill(&mut data.xi, offset, lo, hi, &STATE_CHANNELS, |s| states.require(s))?;
        fill(&mut data.xi_dot, offset, lo, hi, &STATE_DERIVATIVE_CHANNELS, |s| {
            states.require(s)
        })?;
        offset += hi - lo + 1;
    }
    Ok(data)
}

fn fill<'a>(
    target: &mut DMatrix<f64>,
    offset: usize,
    lo: usize,
    hi: usize,
    specs: &[ChannelSpec],
    get: impl Fn(&ChannelSpec) -> Result<&'a [f64]>,
) -> Result<()> {
    for (row, spec) in specs.iter().enumerate() {
        let values = get(spec)?;
        for (k, v) in values[lo..=hi].iter().enumerate() {
            target[(row, offset + k)] = *v;
        }
    }
    Ok(())
}
