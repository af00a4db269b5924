//! Uniformly sampled multi-channel time series, simulation records and the
//! seed × wind-speed dataset grid used for model construction.

mod dataset;
pub mod openfast;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dataset::{assemble_regression_data, AssemblyOptions, Dataset, RegressionData};

/// Name, display symbol and unit of a required channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelSpec {
    pub name: &'static str,
    pub symbol: &'static str,
    pub unit: &'static str,
}

const fn spec(name: &'static str, symbol: &'static str, unit: &'static str) -> ChannelSpec {
    ChannelSpec { name, symbol, unit }
}

/// Combined input/control vector `u = [w, τ_g, β, η]`.
pub const INPUT_CHANNELS: [ChannelSpec; 4] = [
    spec("w", "w", "m/s"),
    spec("tau_g", "τ_g", "kN*m"),
    spec("beta", "β", "rad"),
    spec("eta", "η", "m"),
];

/// Output vector `y = [Θ_p, δ_tt, ω_g, P, M_t,y, ẍ_t]`.
pub const OUTPUT_CHANNELS: [ChannelSpec; 6] = [
    spec("theta_p", "Θ_p", "rad"),
    spec("delta_tt", "δ_tt", "m"),
    spec("omega_g", "ω_g", "rad/s"),
    spec("P", "P", "kW"),
    spec("M_ty", "M_t,y", "kN*m"),
    spec("xdd_t", "ẍ_t", "m/s^2"),
];

/// State vector `ξ = [Θ_p, δ_tt, ω_g, Θ̇_p, δ̇_tt, ω̇_g]`.
pub const STATE_CHANNELS: [ChannelSpec; 6] = [
    spec("x_theta_p", "Θ_p", "rad"),
    spec("x_delta_tt", "δ_tt", "m"),
    spec("x_omega_g", "ω_g", "rad/s"),
    spec("x_theta_p_dot", "Θ̇_p", "rad/s"),
    spec("x_delta_tt_dot", "δ̇_tt", "m/s"),
    spec("x_omega_g_dot", "ω̇_g", "rad/s^2"),
];

/// State derivative vector `ξ̇`.
pub const STATE_DERIVATIVE_CHANNELS: [ChannelSpec; 6] = [
    spec("dx_theta_p", "Θ̇_p", "rad/s"),
    spec("dx_delta_tt", "δ̇_tt", "m/s"),
    spec("dx_omega_g", "ω̇_g", "rad/s^2"),
    spec("dx_theta_p_dot", "Θ̈_p", "rad/s^2"),
    spec("dx_delta_tt_dot", "δ̈_tt", "m/s^2"),
    spec("dx_omega_g_dot", "ω̈_g", "rad/s^3"),
];

pub const N_INPUTS: usize = 4;
pub const N_OUTPUTS: usize = 6;
pub const N_STATES: usize = 6;

/// Input indices.
pub mod u {
    pub const WIND: usize = 0;
    pub const TORQUE: usize = 1;
    pub const PITCH: usize = 2;
    pub const WAVE: usize = 3;
}

/// Output indices.
pub mod y {
    pub const PLATFORM_PITCH: usize = 0;
    pub const TOWER_DEFLECTION: usize = 1;
    pub const GEN_SPEED: usize = 2;
    pub const POWER: usize = 3;
    pub const TOWER_MOMENT: usize = 4;
    pub const TOWER_ACCEL: usize = 5;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub name: String,
    pub unit: String,
    pub values: Vec<f64>,
}

impl Channel {
    pub fn new(name: impl Into<String>, unit: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            values,
        }
    }
}

/// Uniformly sampled channels sharing `t0`, `dt` and length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub t0: f64,
    pub dt: f64,
    pub channels: Vec<Channel>,
}

impl TimeSeries {
    pub fn new(t0: f64, dt: f64, channels: Vec<Channel>) -> Result<Self> {
        let ts = Self { t0, dt, channels };
        ts.validate()?;
        Ok(ts)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() || !self.t0.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "time base t0 = {}, dt = {}",
                self.t0, self.dt
            )));
        }
        let Some(first) = self.channels.first() else {
            return Err(Error::InvalidArgument("time series has no channels".into()));
        };
        let n = first.values.len();
        if n < 2 {
            return Err(Error::TooFewPoints { needed: 2, got: n });
        }
        for (i, ch) in self.channels.iter().enumerate() {
            if ch.values.len() != n {
                return Err(Error::LengthMismatch {
                    name: ch.name.clone(),
                    expected: n,
                    found: ch.values.len(),
                });
            }
            if self.channels[..i].iter().any(|c| c.name == ch.name) {
                return Err(Error::DuplicateChannel(ch.name.clone()));
            }
        }
        Ok(())
    }

    /// Number of samples.
    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.values.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    pub fn channel(&self, name: &str) -> Option<&Channel> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn values(&self, name: &str) -> Option<&[f64]> {
        self.channel(name).map(|c| c.values.as_slice())
    }

    pub fn require(&self, spec: &ChannelSpec) -> Result<&[f64]> {
        self.values(spec.name).ok_or_else(|| Error::MissingChannel {
            symbol: spec.symbol.to_string(),
            name: spec.name.to_string(),
        })
    }

    pub fn push_channel(&mut self, channel: Channel) -> Result<()> {
        if self.channel(&channel.name).is_some() {
            return Err(Error::DuplicateChannel(channel.name));
        }
        if !self.channels.is_empty() && channel.values.len() != self.len() {
            return Err(Error::LengthMismatch {
                name: channel.name,
                expected: self.len(),
                found: channel.values.len(),
            });
        }
        self.channels.push(channel);
        Ok(())
    }

    /// Sample index range `[lo, hi]` covered by the window `[t_start, t_end]`.
    pub fn index_window(&self, t_start: f64, t_end: f64) -> Result<(usize, usize)> {
        if !(t_start < t_end) {
            return Err(Error::EmptySlice { t_start, t_end });
        }
        let tol = 1e-9;
        if t_start < self.t0 - tol * self.dt || t_end > self.t_end() + tol * self.dt {
            return Err(Error::InvalidArgument(format!(
                "window [{t_start}, {t_end}] outside [{}, {}]",
                self.t0,
                self.t_end()
            )));
        }
        let lo = ((t_start - self.t0) / self.dt - tol).ceil().max(0.0) as usize;
        let hi = (((t_end - self.t0) / self.dt + tol).floor() as usize).min(self.len() - 1);
        if hi <= lo {
            return Err(Error::EmptySlice { t_start, t_end });
        }
        Ok((lo, hi))
    }

    /// Restrict to samples between the given sample indices (inclusive).
    pub fn slice_indices(&self, lo: usize, hi: usize) -> TimeSeries {
        TimeSeries {
            t0: self.time(lo),
            dt: self.dt,
            channels: self
                .channels
                .iter()
                .map(|c| Channel::new(c.name.clone(), c.unit.clone(), c.values[lo..=hi].to_vec()))
                .collect(),
        }
    }

    pub fn slice(&self, t_start: f64, t_end: f64) -> Result<TimeSeries> {
        let (lo, hi) = self.index_window(t_start, t_end)?;
        Ok(self.slice_indices(lo, hi))
    }

    /// Row-major sample of the named channels at index `i`.
    pub fn sample(&self, names: &[ChannelSpec], i: usize) -> Result<Vec<f64>> {
        names.iter().map(|s| self.require(s).map(|v| v[i])).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    TruthPlant,
    ExternalFile,
    Surrogate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub w_bar: f64,
    pub seed: u64,
    pub x_c: Option<[f64; 2]>,
    pub source: Source,
}

/// One simulation: inputs `u`, outputs `y`, optionally the attached states and
/// state derivatives, and any auxiliary logged channels.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRecord {
    pub inputs: TimeSeries,
    pub outputs: TimeSeries,
    pub states: Option<TimeSeries>,
    pub aux: Option<TimeSeries>,
    pub meta: RecordMeta,
}

impl SimulationRecord {
    pub fn new(inputs: TimeSeries, outputs: TimeSeries, meta: RecordMeta) -> Result<Self> {
        let rec = Self {
            inputs,
            outputs,
            states: None,
            aux: None,
            meta,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        self.inputs.validate()?;
        self.outputs.validate()?;
        check_exact_set(&self.inputs, &INPUT_CHANNELS)?;
        check_exact_set(&self.outputs, &OUTPUT_CHANNELS)?;
        for other in [&self.outputs]
            .into_iter()
            .chain(self.states.as_ref())
            .chain(self.aux.as_ref())
        {
            if other.len() != self.inputs.len()
                || other.dt != self.inputs.dt
                || other.t0 != self.inputs.t0
            {
                return Err(Error::InvalidArgument(
                    "record parts do not share t0, dt and length".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.inputs.dt
    }

    pub fn t0(&self) -> f64 {
        self.inputs.t0
    }

    pub fn t_end(&self) -> f64 {
        self.inputs.t_end()
    }

    pub fn input(&self, index: usize) -> &[f64] {
        self.inputs
            .values(INPUT_CHANNELS[index].name)
            .expect("validated input set")
    }

    pub fn output(&self, index: usize) -> &[f64] {
        self.outputs
            .values(OUTPUT_CHANNELS[index].name)
            .expect("validated output set")
    }

    /// Look up a channel by name in any part of the record.
    pub fn find(&self, name: &str) -> Option<&[f64]> {
        self.inputs
            .values(name)
            .or_else(|| self.outputs.values(name))
            .or_else(|| self.states.as_ref().and_then(|s| s.values(name)))
            .or_else(|| self.aux.as_ref().and_then(|s| s.values(name)))
    }

    pub fn slice(&self, t_start: f64, t_end: f64) -> Result<SimulationRecord> {
        let (lo, hi) = self.inputs.index_window(t_start, t_end)?;
        Ok(SimulationRecord {
            inputs: self.inputs.slice_indices(lo, hi),
            outputs: self.outputs.slice_indices(lo, hi),
            states: self.states.as_ref().map(|s| s.slice_indices(lo, hi)),
            aux: self.aux.as_ref().map(|s| s.slice_indices(lo, hi)),
            meta: self.meta.clone(),
        })
    }

    pub fn to_document(&self) -> RecordDocument {
        let channels = [&self.inputs, &self.outputs]
            .into_iter()
            .chain(self.states.as_ref())
            .chain(self.aux.as_ref())
            .flat_map(|ts| ts.channels.iter().cloned())
            .collect();
        RecordDocument {
            t0: self.t0(),
            dt: self.dt(),
            channels,
            meta: self.meta.clone(),
        }
    }

    pub fn from_document(doc: RecordDocument) -> Result<Self> {
        let mut inputs = Vec::new();
        let mut outputs = Vec::new();
        let mut states = Vec::new();
        let mut aux = Vec::new();
        let is_in = |set: &[ChannelSpec], name: &str| set.iter().any(|s| s.name == name);
        for ch in doc.channels {
            if is_in(&INPUT_CHANNELS, &ch.name) {
                inputs.push(ch);
            } else if is_in(&OUTPUT_CHANNELS, &ch.name) {
                outputs.push(ch);
            } else if is_in(&STATE_CHANNELS, &ch.name)
                || is_in(&STATE_DERIVATIVE_CHANNELS, &ch.name)
            {
                states.push(ch);
            } else {
                aux.push(ch);
            }
        }
        let part = |chs: Vec<Channel>| -> Result<Option<TimeSeries>> {
            if chs.is_empty() {
                Ok(None)
            } else {
                TimeSeries::new(doc.t0, doc.dt, chs).map(Some)
            }
        };
        let inputs = TimeSeries::new(doc.t0, doc.dt, inputs)?;
        let outputs = TimeSeries::new(doc.t0, doc.dt, outputs)?;
        let rec = SimulationRecord {
            inputs,
            outputs,
            states: part(states)?,
            aux: part(aux)?,
            meta: doc.meta,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_document())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_document(serde_json::from_str(text)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Native on-disk layout of a [`SimulationRecord`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordDocument {
    pub t0: f64,
    pub dt: f64,
    pub channels: Vec<Channel>,
    pub meta: RecordMeta,
}

fn check_exact_set(ts: &TimeSeries, set: &[ChannelSpec]) -> Result<()> {
    for s in set {
        ts.require(s)?;
    }
    if let Some(extra) = ts
        .channels
        .iter()
        .find(|c| !set.iter().any(|s| s.name == c.name))
    {
        return Err(Error::InvalidArgument(format!(
            "unexpected channel `{}`",
            extra.name
        )));
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn ramp_record(n: usize, dt: f64, offset: f64) -> SimulationRecord {
        let mk = |set: &[ChannelSpec], k: f64| {
            set.iter()
                .enumerate()
                .map(|(j, s)| {
                    Channel::new(
                        s.name,
                        s.unit,
                        (0..n).map(|i| offset + k * (j as f64 + 1.0) * i as f64).collect(),
                    )
                })
                .collect::<Vec<_>>()
        };
        SimulationRecord::new(
            TimeSeries::new(0.0, dt, mk(&INPUT_CHANNELS, 1.0)).unwrap(),
            TimeSeries::new(0.0, dt, mk(&OUTPUT_CHANNELS, 0.5)).unwrap(),
            RecordMeta {
                w_bar: 14.0,
                seed: 1,
                x_c: Some([0.2, 1.0]),
                source: Source::TruthPlant,
            },
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_time_base_and_lengths() {
        let ch = |n| Channel::new("a", "-", vec![0.0; n]);
        assert!(TimeSeries::new(0.0, 0.0, vec![ch(3)]).is_err());
        assert!(matches!(
            TimeSeries::new(0.0, 0.1, vec![ch(1)]),
            Err(Error::TooFewPoints { .. })
        ));
        let mut b = ch(4);
        b.name = "b".into();
        assert!(matches!(
            TimeSeries::new(0.0, 0.1, vec![ch(3), b]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(matches!(
            TimeSeries::new(0.0, 0.1, vec![ch(3), ch(3)]),
            Err(Error::DuplicateChannel(_))
        ));
    }

    #[test]
    fn slice_identity_and_half() {
        let rec = ramp_record(101, 0.1, 0.0);
        let same = rec.slice(rec.t0(), rec.t_end()).unwrap();
        assert_eq!(same, rec);

        let half = rec.slice(0.0, 5.0).unwrap();
        assert!((half.len() as i64 - 50).abs() <= 1);
        assert_eq!(half.dt(), rec.dt());

        assert!(matches!(rec.slice(6.0, 5.0), Err(Error::EmptySlice { .. })));
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut rec = ramp_record(17, 0.01, 0.1);
        rec.aux = Some(
            TimeSeries::new(
                0.0,
                0.01,
                vec![Channel::new("marker", "-", (0..17).map(|i| (i as f64).sqrt() / 3.0).collect())],
            )
            .unwrap(),
        );
        let back = SimulationRecord::from_json(&rec.to_json().unwrap()).unwrap();
        assert_eq!(back, rec);
    }

    #[test]
    fn rejects_foreign_output_set() {
        let rec = ramp_record(5, 0.1, 0.0);
        let mut outputs = rec.outputs.clone();
        outputs.channels.pop();
        assert!(matches!(
            SimulationRecord::new(rec.inputs.clone(), outputs, rec.meta.clone()),
            Err(Error::MissingChannel { .. })
        ));
    }
}
