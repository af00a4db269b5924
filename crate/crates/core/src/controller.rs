//! Simplified variable-speed, variable-pitch turbine controller: a K·ω²
//! torque law below rated, constant-power torque with a gain-scheduled pitch
//! PI loop above rated, and tower-top acceleration feedback into pitch.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::refplant::{self, PlantParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Pitch-loop natural frequency ω_PC [rad/s].
    pub omega_pc: f64,
    /// Pitch-loop damping ratio ζ_PC.
    pub zeta_pc: f64,
    /// Generator speed set point [rad/s].
    pub rated_speed: f64,
    /// Mechanical rated power [W].
    pub rated_power: f64,
    /// Below-rated torque constant [N·m·s²].
    pub k_opt: f64,
    /// Equivalent drivetrain inertia used by the gain design [kg·m²].
    pub inertia: f64,
    /// Scheduled pitch sensitivity `(w, ∂ω̇_g/∂β)` pairs, sorted by wind speed.
    pub pitch_sensitivity: Vec<[f64; 2]>,
    /// Tower-top acceleration feedback gain [rad/(m/s²)].
    pub floating_gain: f64,
    /// High-pass time constant of the acceleration feedback [s].
    pub floating_filter_tau: f64,
    pub pitch_min: f64,
    pub pitch_max: f64,
    /// [rad/s]
    pub pitch_rate_limit: f64,
    /// [N·m]
    pub torque_max: f64,
    /// Generator-speed low-pass time constant [s].
    pub speed_filter_tau: f64,
    /// Region-switch hysteresis as a fraction of rated speed.
    pub hysteresis: f64,
    pub dt: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self::for_plant(&PlantParams::default(), [0.2, 1.0])
    }
}

impl ControllerConfig {
    /// Controller matched to a plant's rated point and pitch sensitivity.
    pub fn for_plant(plant: &PlantParams, x_c: [f64; 2]) -> Self {
        let k_opt = plant.optimal_torque_constant();
        let rated_speed = plant.rated_speed;
        Self {
            omega_pc: x_c[0],
            zeta_pc: x_c[1],
            rated_speed,
            rated_power: k_opt * rated_speed.powi(3),
            k_opt,
            inertia: plant.drivetrain_inertia / plant.gearbox_ratio.powi(2),
            pitch_sensitivity: refplant::pitch_sensitivity_table(plant),
            floating_gain: 0.02,
            floating_filter_tau: 60.0,
            pitch_min: 0.0,
            pitch_max: 0.5,
            pitch_rate_limit: 0.14,
            torque_max: 1.15 * k_opt * rated_speed.powi(2),
            speed_filter_tau: 0.2,
            hysteresis: 0.02,
            dt: 0.01,
        }
    }

    pub fn with_tuning(&self, x_c: [f64; 2]) -> Self {
        Self {
            omega_pc: x_c[0],
            zeta_pc: x_c[1],
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(self.omega_pc > 0.0) || !(self.zeta_pc > 0.0) {
            return bad("ω_PC and ζ_PC must be positive");
        }
        if !(self.pitch_min < self.pitch_max) {
            return bad("pitch limits must satisfy β_min < β_max");
        }
        if !(self.pitch_rate_limit > 0.0) || !(self.dt > 0.0) {
            return bad("pitch rate limit and dt must be positive");
        }
        if self.pitch_sensitivity.is_empty()
            || self.pitch_sensitivity.iter().any(|p| !(p[1] < 0.0))
            || self.pitch_sensitivity.windows(2).any(|p| !(p[1][0] > p[0][0]))
        {
            return bad("pitch sensitivity table must be non-empty, increasing in w and negative");
        }
        Ok(())
    }

    /// Pitch sensitivity at the scheduling wind speed, clamped at the table ends.
    pub fn sensitivity_at(&self, w: f64) -> f64 {
        interp_clamped(&self.pitch_sensitivity, w)
    }
}

pub(crate) fn interp_clamped(table: &[[f64; 2]], x: f64) -> f64 {
    let first = table[0];
    let last = table[table.len() - 1];
    if x <= first[0] {
        return first[1];
    }
    if x >= last[0] {
        return last[1];
    }
    let i = table.partition_point(|p| p[0] <= x) - 1;
    let (a, b) = (table[i], table[i + 1]);
    a[1] + (b[1] - a[1]) * (x - a[0]) / (b[0] - a[0])
}

/// PI gains placing the rigid drivetrain + pitch loop poles at (ω_PC, ζ_PC).
///
/// Returns `(k_p [s], k_i [-])`.
pub fn pitch_gains(x_c: [f64; 2], inertia: f64, sensitivity: f64) -> Result<(f64, f64)> {
    if !(sensitivity < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "pitch sensitivity must be negative, got {sensitivity}"
        )));
    }
    if !(inertia > 0.0) {
        return Err(Error::InvalidArgument("inertia must be positive".into()));
    }
    let [omega, zeta] = x_c;
    let plant_gain = (sensitivity * inertia).abs();
    Ok((
        2.0 * zeta * omega * inertia / plant_gain,
        omega * omega * inertia / plant_gain,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    BelowRated,
    Rated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feedback {
    /// [rad/s]
    pub gen_speed: f64,
    /// [m/s²]
    pub tower_top_accel: f64,
    /// [kW]; logged alongside, not used by the control law.
    pub power: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Command {
    /// [N·m]
    pub torque: f64,
    /// [rad]
    pub pitch: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    /// Integral part of the pitch command [rad].
    pub pitch_integrator: f64,
    pub prev_pitch: f64,
    pub speed_filtered: f64,
    accel_prev_input: f64,
    accel_highpassed: f64,
    pub region: Region,
    pub pitch_saturated: bool,
    pub rate_limited: bool,
}

impl ControllerState {
    /// State consistent with holding `pitch` at generator speed `gen_speed`.
    pub fn new(cfg: &ControllerConfig, gen_speed: f64, pitch: f64) -> Self {
        let pitch = pitch.clamp(cfg.pitch_min, cfg.pitch_max);
        let region = if pitch > cfg.pitch_min + 1e-6 || gen_speed >= cfg.rated_speed {
            Region::Rated
        } else {
            Region::BelowRated
        };
        Self {
            pitch_integrator: pitch,
            prev_pitch: pitch,
            speed_filtered: gen_speed,
            accel_prev_input: 0.0,
            accel_highpassed: 0.0,
            region,
            pitch_saturated: false,
            rate_limited: false,
        }
    }

    pub fn step(&mut self, cfg: &ControllerConfig, fb: &Feedback, w_est: f64, dt: f64) -> Command {
        let alpha = dt / (cfg.speed_filter_tau + dt);
        self.speed_filtered += alpha * (fb.gen_speed - self.speed_filtered);
        let a = cfg.floating_filter_tau / (cfg.floating_filter_tau + dt);
        self.accel_highpassed =
            a * (self.accel_highpassed + fb.tower_top_accel - self.accel_prev_input);
        self.accel_prev_input = fb.tower_top_accel;

        let omega = self.speed_filtered.max(1e-3);
        let error = omega - cfg.rated_speed;
        let (kp, ki) = pitch_gains(
            [cfg.omega_pc, cfg.zeta_pc],
            cfg.inertia,
            cfg.sensitivity_at(w_est),
        )
        .unwrap_or((0.0, 0.0));

        match self.region {
            Region::BelowRated if omega >= cfg.rated_speed * (1.0 + cfg.hysteresis) => {
                self.region = Region::Rated;
                self.pitch_integrator = self.prev_pitch - kp * error;
            }
            Region::Rated
                if omega <= cfg.rated_speed * (1.0 - cfg.hysteresis)
                    && self.prev_pitch <= cfg.pitch_min + 1e-9 =>
            {
                self.region = Region::BelowRated;
            }
            _ => {}
        }

        let (torque, target) = match self.region {
            Region::BelowRated => {
                self.pitch_integrator = cfg.pitch_min;
                ((cfg.k_opt * omega * omega).min(cfg.torque_max), cfg.pitch_min)
            }
            Region::Rated => {
                self.pitch_integrator += ki * error * dt;
                let unsat = kp * error
                    + self.pitch_integrator
                    + cfg.floating_gain * self.accel_highpassed;
                ((cfg.rated_power / omega).min(cfg.torque_max), unsat)
            }
        };

        let saturated = target.clamp(cfg.pitch_min, cfg.pitch_max);
        let max_step = cfg.pitch_rate_limit * dt;
        let pitch = saturated.clamp(self.prev_pitch - max_step, self.prev_pitch + max_step);
        self.pitch_saturated = saturated != target;
        self.rate_limited = pitch != saturated;
        if self.region == Region::Rated {
            // back-calculation: the integrator absorbs whatever the limits removed
            self.pitch_integrator += pitch - target;
        }
        self.prev_pitch = pitch;
        Command { torque, pitch }
    }
}

/// Functional form of [`ControllerState::step`].
pub fn controller_step(
    cfg: &ControllerConfig,
    state: &ControllerState,
    fb: &Feedback,
    w_est: f64,
    dt: f64,
) -> (Command, ControllerState) {
    let mut next = state.clone();
    let cmd = next.step(cfg, fb, w_est, dt);
    (cmd, next)
}
