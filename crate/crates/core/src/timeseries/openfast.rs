//! Reader for OpenFAST-style ASCII `.out` files.
//!
//! Layout: six free-text header lines, a line of channel names, a line of
//! parenthesised units, then whitespace-separated rows whose first column is
//! time.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    Channel, ChannelSpec, RecordMeta, SimulationRecord, Source, TimeSeries, INPUT_CHANNELS,
    OUTPUT_CHANNELS,
};
use crate::error::{Error, Result};

const HEADER_LINES: usize = 6;
const STEP_TOLERANCE: f64 = 1e-9;

/// Maps internal channel names onto file column names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelNameMap {
    pub time: String,
    pub columns: BTreeMap<String, String>,
}

impl Default for ChannelNameMap {
    fn default() -> Self {
        let pairs = [
            ("w", "Wind1VelX"),
            ("tau_g", "GenTq"),
            ("beta", "BldPitch1"),
            ("eta", "Wave1Elev"),
            ("theta_p", "PtfmPitch"),
            ("delta_tt", "TTDspFA"),
            ("omega_g", "GenSpeed"),
            ("P", "GenPwr"),
            ("M_ty", "TwrBsMyt"),
            ("xdd_t", "NcIMUTAxs"),
        ];
        Self {
            time: "Time".into(),
            columns: pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

impl ChannelNameMap {
    fn column_for(&self, spec: &ChannelSpec) -> &str {
        self.columns
            .get(spec.name)
            .map(String::as_str)
            .unwrap_or(spec.name)
    }
}

pub fn read_openfast_out(path: &Path, names: &ChannelNameMap) -> Result<SimulationRecord> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_openfast_out(&text, path, names)
}

pub fn parse_openfast_out(
    text: &str,
    path: &Path,
    names: &ChannelNameMap,
) -> Result<SimulationRecord> {
    let malformed = |reason: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason,
    };
    let mut lines = text.lines().enumerate();
    for _ in 0..HEADER_LINES {
        lines
            .next()
            .ok_or_else(|| malformed("file shorter than the six-line header".into()))?;
    }
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| malformed("missing channel-name line".into()))?
        .1
        .split_whitespace()
        .collect();
    let units: Vec<String> = lines
        .next()
        .ok_or_else(|| malformed("missing unit line".into()))?
        .1
        .split_whitespace()
        .map(|u| u.trim_start_matches('(').trim_end_matches(')').to_string())
        .collect();
    if header.len() < 2 {
        return Err(malformed("fewer than two channels".into()));
    }
    if units.len() != header.len() {
        return Err(malformed(format!(
            "{} channel names but {} units",
            header.len(),
            units.len()
        )));
    }
    if header[0] != names.time {
        return Err(malformed(format!(
            "first column is `{}`, expected `{}`",
            header[0], names.time
        )));
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); header.len()];
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != header.len() {
            return Err(Error::Parse {
                line: idx + 1,
                reason: format!("expected {} fields, found {}", header.len(), fields.len()),
            });
        }
        for (col, field) in columns.iter_mut().zip(fields) {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line: idx + 1,
                reason: format!("`{field}` is not a number"),
            })?;
            col.push(v);
        }
    }

    let time = &columns[0];
    if time.len() < 2 {
        return Err(Error::TooFewPoints {
            needed: 2,
            got: time.len(),
        });
    }
    let dt = time[1] - time[0];
    if !(dt > 0.0) {
        return Err(Error::NonUniformStep {
            row: 1,
            expected: dt,
            found: dt,
        });
    }
    for (row, pair) in time.windows(2).enumerate() {
        let step = pair[1] - pair[0];
        if (step - dt).abs() > STEP_TOLERANCE {
            return Err(Error::NonUniformStep {
                row: row + 1,
                expected: dt,
                found: step,
            });
        }
    }

    let pick = |set: &[ChannelSpec]| -> Result<Vec<Channel>> {
        set.iter()
            .map(|spec| {
                let col_name = names.column_for(spec);
                let idx = header
                    .iter()
                    .position(|h| *h == col_name)
                    .ok_or_else(|| Error::MissingChannel {
                        symbol: spec.symbol.to_string(),
                        name: col_name.to_string(),
                    })?;
                Ok(Channel::new(spec.name, units[idx].clone(), columns[idx].clone()))
            })
            .collect()
    };
    let inputs = TimeSeries::new(time[0], dt, pick(&INPUT_CHANNELS)?)?;
    let outputs = TimeSeries::new(time[0], dt, pick(&OUTPUT_CHANNELS)?)?;
    let wind = inputs.require(&INPUT_CHANNELS[0])?;
    let w_bar = wind.iter().sum::<f64>() / wind.len() as f64;
    SimulationRecord::new(
        inputs,
        outputs,
        RecordMeta {
            w_bar,
            seed: 0,
            x_c: None,
            source: Source::ExternalFile,
        },
    )
}
