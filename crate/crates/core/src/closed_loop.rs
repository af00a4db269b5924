//! Plant-agnostic closed-loop driver shared by the truth plant and every
//! surrogate, so all of them see the same control law and scheduling signal.

use serde::{Deserialize, Serialize};

use crate::controller::{ControllerConfig, ControllerState, Feedback, Region};
use crate::error::{Error, Result};
use crate::timeseries::{
    u, y, Channel, RecordMeta, SimulationRecord, TimeSeries, INPUT_CHANNELS, N_INPUTS,
    N_OUTPUTS, OUTPUT_CHANNELS,
};

/// A dynamic system that can be stepped inside the control loop.
pub trait ClosedLoopPlant {
    /// Outputs for the current state under input `u`.
    fn outputs(&mut self, input: &[f64; N_INPUTS], w_sched: f64) -> [f64; N_OUTPUTS];
    /// Advance one step of length `dt` with `u` held constant.
    fn advance(&mut self, input: &[f64; N_INPUTS], w_sched: f64, dt: f64);
    fn is_finite(&self) -> bool;
    fn aux_channels(&self) -> &'static [(&'static str, &'static str)] {
        &[]
    }
    fn write_aux(&self, _out: &mut [f64]) {}
}

/// First-order low-pass of the wind speed used for scheduling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchedulingFilter {
    pub tau: f64,
    pub value: f64,
    /// `(dt, α)` of the last update.
    gain: (f64, f64),
}

impl SchedulingFilter {
    pub fn new(tau: f64, initial: f64) -> Self {
        Self {
            tau,
            value: initial,
            gain: (f64::NAN, 0.0),
        }
    }

    pub fn update(&mut self, w: f64, dt: f64) -> f64 {
        if self.tau > 0.0 {
            if self.gain.0 != dt {
                self.gain = (dt, 1.0 - (-dt / self.tau).exp());
            }
            self.value += self.gain.1 * (w - self.value);
        } else {
            self.value = w;
        }
        self.value
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopOptions {
    pub scheduling_tau: f64,
    /// Replace the scheduling signal by a constant.
    pub frozen_schedule: Option<f64>,
    /// Abort when any state magnitude exceeds this bound.
    pub divergence_bound: f64,
}

impl Default for LoopOptions {
    fn default() -> Self {
        Self {
            scheduling_tau: 30.0,
            frozen_schedule: None,
            divergence_bound: 1e8,
        }
    }
}

pub const CONTROL_AUX: [(&str, &str); 3] = [
    ("w_sched", "m/s"),
    ("region", "-"),
    ("pitch_saturated", "-"),
];

/// Runs the plant and controller over the wind/wave environment `env`.
///
/// At step k the controller sees outputs evaluated with the commands of step
/// k−1, and the logged outputs use the fresh commands.
pub fn run_closed_loop<P: ClosedLoopPlant + ?Sized>(
    plant: &mut P,
    env: &TimeSeries,
    cfg: &ControllerConfig,
    mut ctrl: ControllerState,
    initial_torque_knm: f64,
    opts: &LoopOptions,
    meta: RecordMeta,
) -> Result<SimulationRecord> {
    let wind = env.require(&INPUT_CHANNELS[u::WIND])?;
    let wave = env.require(&INPUT_CHANNELS[u::WAVE])?;
    let n = env.len();
    let dt = env.dt;
    let plant_aux = plant.aux_channels();
    let n_aux = CONTROL_AUX.len() + plant_aux.len();

    let mut inputs = vec![vec![0.0; n]; N_INPUTS];
    let mut outputs = vec![vec![0.0; n]; N_OUTPUTS];
    let mut aux = vec![vec![0.0; n]; n_aux];
    let mut aux_buf = vec![0.0; plant_aux.len()];

    let mut filter = SchedulingFilter::new(opts.scheduling_tau, wind[0]);
    let mut current = [wind[0], initial_torque_knm, ctrl.prev_pitch, wave[0]];
    for k in 0..n {
        let w_sched = match opts.frozen_schedule {
            Some(w) => w,
            None if k == 0 => filter.value,
            None => filter.update(wind[k], dt),
        };
        current[u::WIND] = wind[k];
        current[u::WAVE] = wave[k];
        let fb_y = plant.outputs(&current, w_sched);
        let fb = Feedback {
            gen_speed: fb_y[y::GEN_SPEED],
            tower_top_accel: fb_y[y::TOWER_ACCEL],
            power: fb_y[y::POWER],
        };
        let cmd = ctrl.step(cfg, &fb, w_sched, dt);
        current[u::TORQUE] = cmd.torque / 1e3;
        current[u::PITCH] = cmd.pitch;
        let out = plant.outputs(&current, w_sched);

        for (i, v) in current.iter().enumerate() {
            inputs[i][k] = *v;
        }
        for (i, v) in out.iter().enumerate() {
            outputs[i][k] = *v;
        }
        aux[0][k] = w_sched;
        aux[1][k] = if ctrl.region == Region::Rated { 1.0 } else { 0.0 };
        aux[2][k] = if ctrl.pitch_saturated { 1.0 } else { 0.0 };
        if !plant_aux.is_empty() {
            plant.write_aux(&mut aux_buf);
            for (i, v) in aux_buf.iter().enumerate() {
                aux[CONTROL_AUX.len() + i][k] = *v;
            }
        }
        if !out.iter().all(|v| v.is_finite() && v.abs() <= opts.divergence_bound) {
            return Err(Error::Diverged { time: env.time(k) });
        }
        if k + 1 < n {
            plant.advance(&current, w_sched, dt);
            if !plant.is_finite() {
                return Err(Error::Diverged {
                    time: env.time(k + 1),
                });
            }
        }
    }

    let make = |specs: &[(&str, &str)], values: Vec<Vec<f64>>| {
        TimeSeries::new(
            env.t0,
            dt,
            specs
                .iter()
                .zip(values)
                .map(|((name, unit), v)| Channel::new(*name, *unit, v))
                .collect(),
        )
    };
    let in_specs: Vec<(&str, &str)> = INPUT_CHANNELS.iter().map(|c| (c.name, c.unit)).collect();
    let out_specs: Vec<(&str, &str)> = OUTPUT_CHANNELS.iter().map(|c| (c.name, c.unit)).collect();
    let aux_specs: Vec<(&str, &str)> = CONTROL_AUX.iter().chain(plant_aux).copied().collect();
    let mut rec = SimulationRecord::new(make(&in_specs, inputs)?, make(&out_specs, outputs)?, meta)?;
    rec.aux = Some(make(&aux_specs, aux)?);
    Ok(rec)
}
