//! Synthetic nonlinear floating-turbine plant used as the high-fidelity
//! reference: rigid rotor with a first-order drivetrain lag, tower fore-aft
//! mode and platform pitch, coupled through the rotor-relative wind speed.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::closed_loop::{run_closed_loop, ClosedLoopPlant, LoopOptions};
use crate::controller::{ControllerConfig, ControllerState};
use crate::envgen::{generate_wave, generate_wind, LoadCaseSpec};
use crate::error::{Error, Result};
use crate::timeseries::{u, Channel, RecordMeta, SimulationRecord, Source, TimeSeries, N_INPUTS,
    N_OUTPUTS, N_STATES};

/// Analytic power and thrust coefficient surfaces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeroCoefficients {
    pub cp_max: f64,
    pub tsr_opt: f64,
    /// Distance in tip-speed ratio from the optimum at which C_p vanishes.
    pub tsr_halfwidth: f64,
    /// Pitch angle [rad] at which C_p vanishes.
    pub cp_pitch_width: f64,
    pub ct_max: f64,
    pub ct_tsr_scale: f64,
    /// Pitch angle [rad] at which C_t vanishes.
    pub ct_pitch_width: f64,
}

impl Default for AeroCoefficients {
    fn default() -> Self {
        Self {
            cp_max: 0.45,
            tsr_opt: 8.0,
            tsr_halfwidth: 6.0,
            cp_pitch_width: 0.42,
            ct_max: 0.9,
            ct_tsr_scale: 4.0,
            ct_pitch_width: 0.45,
        }
    }
}

impl AeroCoefficients {
    pub fn cp(&self, tsr: f64, pitch: f64) -> f64 {
        let x = (tsr - self.tsr_opt) / self.tsr_halfwidth;
        let shape = (1.0 - x * x).max(0.0);
        let bell = (0.5 * PI * pitch / self.cp_pitch_width).clamp(-0.5 * PI, 0.5 * PI).cos();
        (self.cp_max * shape * bell).clamp(0.0, 0.6)
    }

    pub fn ct(&self, tsr: f64, pitch: f64) -> f64 {
        let growth = 1.0 - (-tsr.max(0.0) / self.ct_tsr_scale).exp();
        let bell = (0.5 * PI * pitch / self.ct_pitch_width).clamp(-0.5 * PI, 0.5 * PI).cos();
        (self.ct_max * growth * bell).clamp(0.0, 1.5)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantParams {
    /// Rotor + generator inertia on the low-speed side [kg·m²].
    pub drivetrain_inertia: f64,
    /// Time constant of the drivetrain torque response [s].
    pub drivetrain_lag: f64,
    pub tower_mass: f64,
    pub tower_stiffness: f64,
    pub tower_damping: f64,
    pub platform_inertia: f64,
    pub platform_stiffness: f64,
    pub platform_damping: f64,
    pub hub_height: f64,
    /// Lever arm from tower base to the tower-top modal force [m].
    pub tower_arm: f64,
    /// Fraction of the platform inertial moment seen at the tower base.
    pub moment_coupling: f64,
    pub rotor_radius: f64,
    pub air_density: f64,
    pub gearbox_ratio: f64,
    pub aero: AeroCoefficients,
    /// Wave elevation to platform pitch moment [N·m/m].
    pub wave_gain: f64,
    pub generator_efficiency: f64,
    /// Generator speed at rated [rad/s].
    pub rated_speed: f64,
    /// Steps of the internal integrator per data sample.
    pub substeps: usize,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            drivetrain_inertia: 3.5e8,
            drivetrain_lag: 0.25,
            tower_mass: 1.2e6,
            tower_stiffness: 1.2e7,
            tower_damping: 7.6e4,
            platform_inertia: 1.6e10,
            platform_stiffness: 4.0e9,
            platform_damping: 8.0e8,
            hub_height: 150.0,
            tower_arm: 145.0,
            moment_coupling: 0.03,
            rotor_radius: 112.0,
            air_density: 1.225,
            gearbox_ratio: 1.0,
            aero: AeroCoefficients::default(),
            wave_gain: 5.0e7,
            generator_efficiency: 0.965,
            rated_speed: 0.79,
            substeps: 2,
        }
    }
}

/// Aerodynamic rotor torque [N·m] and thrust [N].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AeroLoads {
    pub torque: f64,
    pub thrust: f64,
}

impl PlantParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("drivetrain_inertia", self.drivetrain_inertia),
            ("drivetrain_lag", self.drivetrain_lag),
            ("tower_mass", self.tower_mass),
            ("tower_stiffness", self.tower_stiffness),
            ("tower_damping", self.tower_damping),
            ("platform_inertia", self.platform_inertia),
            ("platform_stiffness", self.platform_stiffness),
            ("platform_damping", self.platform_damping),
            ("rotor_radius", self.rotor_radius),
            ("air_density", self.air_density),
            ("gearbox_ratio", self.gearbox_ratio),
            ("rated_speed", self.rated_speed),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.substeps == 0 {
            return Err(Error::InvalidArgument("substeps must be ≥ 1".into()));
        }
        Ok(())
    }

    /// Below-rated torque constant that holds the optimal tip-speed ratio.
    pub fn optimal_torque_constant(&self) -> f64 {
        let a = &self.aero;
        let r = self.rotor_radius;
        0.5 * self.air_density * PI * r.powi(5) * a.cp(a.tsr_opt, 0.0)
            / (a.tsr_opt.powi(3) * self.gearbox_ratio.powi(3))
    }

    /// Mechanical rated power [W].
    pub fn rated_power(&self) -> f64 {
        self.optimal_torque_constant() * self.rated_speed.powi(3)
    }

    pub fn aero_loads(&self, gen_speed: f64, w_rel: f64, pitch: f64) -> AeroLoads {
        if !(w_rel > 1e-3) {
            return AeroLoads {
                torque: 0.0,
                thrust: 0.0,
            };
        }
        let r = self.rotor_radius;
        let rotor_speed = (gen_speed / self.gearbox_ratio).max(0.0);
        let tsr = rotor_speed * r / w_rel;
        let q = 0.5 * self.air_density * PI * r * r * w_rel * w_rel;
        let cp = self.aero.cp(tsr, pitch);
        let torque = if cp > 0.0 { q * r * cp / tsr } else { 0.0 };
        AeroLoads {
            torque,
            thrust: q * self.aero.ct(tsr, pitch),
        }
    }
}

/// Time derivative of `[Θ_p, δ_tt, ω_g, Θ̇_p, δ̇_tt, ω̇_g]` for inputs
/// `[w, τ_g (kN·m), β, η]`.
pub fn plant_derivative(
    state: &[f64; N_STATES],
    input: &[f64; N_INPUTS],
    p: &PlantParams,
) -> [f64; N_STATES] {
    let [theta, delta, omega, theta_dot, delta_dot, omega_dot] = *state;
    let w_rel = input[u::WIND] - delta_dot - p.hub_height * theta_dot;
    let aero = p.aero_loads(omega, w_rel, input[u::PITCH]);
    let n = p.gearbox_ratio;
    let accel_target = n * (aero.torque - n * 1e3 * input[u::TORQUE]) / p.drivetrain_inertia;
    [
        theta_dot,
        delta_dot,
        omega_dot,
        (aero.thrust * p.hub_height + p.wave_gain * input[u::WAVE]
            - p.platform_stiffness * theta
            - p.platform_damping * theta_dot)
            / p.platform_inertia,
        (aero.thrust - p.tower_stiffness * delta - p.tower_damping * delta_dot) / p.tower_mass,
        (accel_target - omega_dot) / p.drivetrain_lag,
    ]
}

/// Output vector `[Θ_p, δ_tt, ω_g, P (kW), M_t,y (kN·m), ẍ_t]`.
pub fn plant_outputs(
    state: &[f64; N_STATES],
    input: &[f64; N_INPUTS],
    p: &PlantParams,
) -> [f64; N_OUTPUTS] {
    let d = plant_derivative(state, input, p);
    [
        state[0],
        state[1],
        state[2],
        input[u::TORQUE] * state[2] * p.generator_efficiency,
        (p.tower_stiffness * state[1] * p.tower_arm
            + p.moment_coupling * p.platform_inertia * d[3])
            / 1e3,
        d[4] + p.hub_height * d[3],
    ]
}

fn rk4_step(state: &mut [f64; N_STATES], input: &[f64; N_INPUTS], p: &PlantParams, h: f64) {
    let add = |x: &[f64; N_STATES], k: &[f64; N_STATES], s: f64| {
        let mut o = *x;
        for i in 0..N_STATES {
            o[i] += s * k[i];
        }
        o
    };
    let k1 = plant_derivative(state, input, p);
    let k2 = plant_derivative(&add(state, &k1, 0.5 * h), input, p);
    let k3 = plant_derivative(&add(state, &k2, 0.5 * h), input, p);
    let k4 = plant_derivative(&add(state, &k3, h), input, p);
    for i in 0..N_STATES {
        state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut f_lo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid);
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.abs().max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Steady operating point of the plant under the controller at constant wind.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub state: [f64; N_STATES],
    /// [N·m]
    pub torque: f64,
    pub pitch: f64,
}

/// Generator speed at which aerodynamic torque balances `K·ω²` at fine pitch.
pub fn below_rated_speed(p: &PlantParams, k_opt: f64, pitch: f64, w: f64) -> f64 {
    let n = p.gearbox_ratio;
    let a = &p.aero;
    let speed_at = |tsr: f64| tsr * w / p.rotor_radius * n;
    let balance = |omega: f64| p.aero_loads(omega, w, pitch).torque - n * k_opt * omega * omega;
    let lo = speed_at((a.tsr_opt - 0.5 * a.tsr_halfwidth).max(0.1));
    let hi = speed_at(a.tsr_opt + 0.99 * a.tsr_halfwidth);
    bisect(lo, hi, balance)
}

pub fn steady_state(p: &PlantParams, cfg: &ControllerConfig, w: f64) -> OperatingPoint {
    let n = p.gearbox_ratio;
    let omega_below = below_rated_speed(p, cfg.k_opt, cfg.pitch_min, w);
    let (omega, torque, pitch) = if omega_below <= cfg.rated_speed {
        (omega_below, cfg.k_opt * omega_below * omega_below, cfg.pitch_min)
    } else {
        let omega = cfg.rated_speed;
        let torque = cfg.rated_power / omega;
        let excess = |beta: f64| p.aero_loads(omega, w, beta).torque - n * torque;
        let pitch = if excess(cfg.pitch_max) > 0.0 {
            cfg.pitch_max
        } else {
            bisect(cfg.pitch_min, cfg.pitch_max, excess)
        };
        (omega, torque, pitch)
    };
    let thrust = p.aero_loads(omega, w, pitch).thrust;
    OperatingPoint {
        state: [
            thrust * p.hub_height / p.platform_stiffness,
            thrust / p.tower_stiffness,
            omega,
            0.0,
            0.0,
            0.0,
        ],
        torque: torque.min(cfg.torque_max),
        pitch,
    }
}

/// `∂ω̇_g/∂β` at the rated operating point for each wind speed where the
/// plant needs pitch to hold rated power.
pub fn pitch_sensitivity_table(p: &PlantParams) -> Vec<[f64; 2]> {
    let omega = p.rated_speed;
    let n = p.gearbox_ratio;
    let torque = p.rated_power() / omega;
    let mut table = Vec::new();
    for k in 0..=30 {
        let w = 11.0 + 0.5 * k as f64;
        let excess = |beta: f64| p.aero_loads(omega, w, beta).torque - n * torque;
        if excess(0.0) <= 0.0 {
            continue;
        }
        let beta = bisect(0.0, 0.5 * PI, excess).max(0.02);
        let h = 1e-5;
        let dq = (p.aero_loads(omega, w, beta + h).torque - p.aero_loads(omega, w, beta - h).torque)
            / (2.0 * h);
        table.push([w, n * dq / p.drivetrain_inertia]);
    }
    table
}

/// High-fidelity plant stepping with RK4 on `substeps` sub-intervals per
/// data step.
#[derive(Debug, Clone)]
pub struct TruthPlant {
    pub params: PlantParams,
    pub state: [f64; N_STATES],
}

impl TruthPlant {
    pub fn new(params: PlantParams, state: [f64; N_STATES]) -> Self {
        Self { params, state }
    }
}

const AUX: [(&str, &str); 3] = [
    ("true_theta_p_dot", "rad/s"),
    ("true_delta_tt_dot", "m/s"),
    ("true_omega_g_dot", "rad/s^2"),
];

impl ClosedLoopPlant for TruthPlant {
    fn outputs(&mut self, input: &[f64; N_INPUTS], _w_sched: f64) -> [f64; N_OUTPUTS] {
        plant_outputs(&self.state, input, &self.params)
    }

    fn advance(&mut self, input: &[f64; N_INPUTS], _w_sched: f64, dt: f64) {
        let h = dt / self.params.substeps as f64;
        for _ in 0..self.params.substeps {
            rk4_step(&mut self.state, input, &self.params, h);
        }
    }

    fn is_finite(&self) -> bool {
        self.state.iter().all(|x| x.is_finite())
    }

    fn aux_channels(&self) -> &'static [(&'static str, &'static str)] {
        &AUX
    }

    fn write_aux(&self, out: &mut [f64]) {
        out.copy_from_slice(&self.state[3..6]);
    }
}

/// Wind and wave environment of a load case as one series.
pub fn environment(spec: &LoadCaseSpec) -> Result<TimeSeries> {
    let mut env = generate_wind(spec)?;
    let wave = generate_wave(spec)?;
    for ch in wave.channels {
        env.push_channel(ch)?;
    }
    Ok(env)
}

/// Closed-loop truth-plant simulation of one load case, started from the
/// steady operating point at the initial wind speed.
pub fn simulate_plant(
    spec: &LoadCaseSpec,
    controller: &ControllerConfig,
    params: &PlantParams,
) -> Result<SimulationRecord> {
    spec.validate()?;
    controller.validate()?;
    params.validate()?;
    let env = environment(spec)?;
    simulate_plant_env(&env, spec, controller, params)
}

pub fn simulate_plant_env(
    env: &TimeSeries,
    spec: &LoadCaseSpec,
    controller: &ControllerConfig,
    params: &PlantParams,
) -> Result<SimulationRecord> {
    let w0 = env.channels[0].values[0];
    let op = steady_state(params, controller, w0);
    let mut plant = TruthPlant::new(params.clone(), op.state);
    let ctrl = ControllerState::new(controller, op.state[2], op.pitch);
    let meta = RecordMeta {
        w_bar: spec.w_bar,
        seed: spec.seed,
        x_c: Some([controller.omega_pc, controller.zeta_pc]),
        source: Source::TruthPlant,
    };
    run_closed_loop(
        &mut plant,
        env,
        controller,
        ctrl,
        op.torque / 1e3,
        &LoopOptions::default(),
        meta,
    )
}

/// Open-loop truth-plant response to a full input series (used by tests and
/// excitation studies).
pub fn simulate_open_loop(
    params: &PlantParams,
    inputs: &TimeSeries,
    x0: [f64; N_STATES],
) -> Result<Vec<[f64; N_STATES]>> {
    let cols: Vec<&Channel> = inputs.channels.iter().collect();
    if cols.len() != N_INPUTS {
        return Err(Error::InvalidArgument("open-loop plant needs 4 input channels".into()));
    }
    let mut plant = TruthPlant::new(params.clone(), x0);
    let mut out = Vec::with_capacity(inputs.len());
    for k in 0..inputs.len() {
        out.push(plant.state);
        let input = [cols[0].values[k], cols[1].values[k], cols[2].values[k], cols[3].values[k]];
        plant.advance(&input, 0.0, inputs.dt);
        if !plant.is_finite() {
            return Err(Error::Diverged {
                time: inputs.time(k + 1),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::y;

    #[test]
    fn equilibrium_at_rest() {
        let p = PlantParams::default();
        assert_eq!(plant_derivative(&[0.0; 6], &[0.0; 4], &p), [0.0; 6]);
    }

    #[test]
    fn coefficient_ranges() {
        let a = AeroCoefficients::default();
        for i in 0..=60 {
            for j in 0..=30 {
                let (tsr, pitch) = (i as f64 * 0.25, -0.2 + j as f64 * 0.03);
                assert!((0.0..=0.6).contains(&a.cp(tsr, pitch)));
                assert!((0.0..=1.5).contains(&a.ct(tsr, pitch)));
            }
        }
        assert_eq!(a.cp(a.tsr_opt, 0.0), a.cp_max);
    }

    #[test]
    fn sensitivity_table_is_negative_and_sorted() {
        let t = pitch_sensitivity_table(&PlantParams::default());
        assert!(t.len() > 10);
        assert!(t.iter().all(|p| p[1] < 0.0));
        assert!(t.windows(2).all(|w| w[1][0] > w[0][0]));
    }

    #[test]
    fn rated_power_is_fifteen_megawatt_class() {
        let p = PlantParams::default().rated_power();
        assert!((12e6..18e6).contains(&p), "{p}");
    }

    fn energy(p: &PlantParams, x: &[f64; 6]) -> f64 {
        0.5 * (p.tower_stiffness * x[1] * x[1]
            + p.tower_mass * x[4] * x[4]
            + p.platform_stiffness * x[0] * x[0]
            + p.platform_inertia * x[3] * x[3])
    }

    #[test]
    fn free_decay_loses_energy() {
        let p = PlantParams::default();
        let mut plant = TruthPlant::new(p.clone(), [0.02, 0.3, 0.0, 0.0, 0.0, 0.0]);
        let mut prev = energy(&p, &plant.state);
        for _ in 0..20_000 {
            plant.advance(&[0.0; 4], 0.0, 0.01);
            let e = energy(&p, &plant.state);
            assert!(e <= prev * (1.0 + 1e-12));
            prev = e;
        }
        assert!(prev < 0.05 * energy(&p, &[0.02, 0.3, 0.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn steady_state_is_an_equilibrium() {
        let p = PlantParams::default();
        let cfg = ControllerConfig::default();
        for w in [6.0, 8.0, 11.0, 14.0, 16.0, 22.0] {
            let op = steady_state(&p, &cfg, w);
            let d = plant_derivative(&op.state, &[w, op.torque / 1e3, op.pitch, 0.0], &p);
            for (i, v) in d.iter().enumerate() {
                assert!(v.abs() < 1e-8, "w = {w}, d[{i}] = {v}");
            }
            assert!(op.state[2] <= cfg.rated_speed + 1e-12);
        }
        let below = steady_state(&p, &cfg, 8.0);
        let tsr = below.state[2] / p.gearbox_ratio * p.rotor_radius / 8.0;
        assert!((tsr - p.aero.tsr_opt).abs() < 0.05, "{tsr}");
    }

    #[test]
    fn wave_forcing_is_linear() {
        let p = PlantParams::default();
        let x = [0.01, 0.1, 0.7, 0.0, 0.0, 0.0];
        let d0 = plant_derivative(&x, &[12.0, 15e3, 0.1, 0.0], &p)[3];
        let d1 = plant_derivative(&x, &[12.0, 15e3, 0.1, 1.0], &p)[3];
        let d2 = plant_derivative(&x, &[12.0, 15e3, 0.1, 2.0], &p)[3];
        assert!((d1 - d0 - p.wave_gain / p.platform_inertia).abs() < 1e-12);
        assert!(((d2 - d0) - 2.0 * (d1 - d0)).abs() < 1e-12);
    }

    #[test]
    fn power_and_moment_outputs() {
        let p = PlantParams::default();
        let x = [0.0, 0.2, 0.75, 0.0, 0.0, 0.0];
        let y = plant_outputs(&x, &[0.0, 18_000.0, 0.0, 0.0], &p);
        assert!((y[3] - 18_000.0 * 0.75 * p.generator_efficiency).abs() < 1e-9);
        assert!(y[4] > 0.0);
        let y_neg = plant_outputs(&[0.0, -0.2, 0.75, 0.0, 0.0, 0.0], &[0.0; 4], &p);
        assert!(y_neg[4] < 0.0);
    }

    #[test]
    fn regulates_rated_speed_above_rated() {
        let p = PlantParams::default();
        let cfg = ControllerConfig::default();
        let spec = LoadCaseSpec {
            w_bar: 16.0,
            turbulence_intensity: 0.0,
            hs: 0.0,
            duration: 200.0,
            ..LoadCaseSpec::default()
        };
        let rec = simulate_plant(&spec, &cfg, &p).unwrap();
        let omega = &rec.output(y::GEN_SPEED)[15_000..];
        assert!(omega.iter().all(|w| (w - cfg.rated_speed).abs() < 0.02 * cfg.rated_speed));
        let op = steady_state(&p, &cfg, 16.0);
        let beta = *rec.input(u::PITCH).last().unwrap();
        assert!((beta - op.pitch).abs() < 0.01, "{beta} vs {}", op.pitch);
    }

    fn run_fixed(p: &PlantParams, x0: [f64; 6], seconds: f64, input: impl Fn(f64, &[f64; 6]) -> [f64; 4]) -> Vec<[f64; 6]> {
        let dt = 0.01;
        let mut plant = TruthPlant::new(p.clone(), x0);
        let n = (seconds / dt) as usize;
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let u = input(k as f64 * dt, &plant.state);
            plant.advance(&u, 0.0, dt);
            out.push(plant.state);
        }
        out
    }

    #[test]
    fn optimal_torque_law_settles_at_torque_balance() {
        let p = PlantParams::default();
        let k = p.optimal_torque_constant();
        let w = 11.0;
        let traj = run_fixed(&p, [0.0, 0.0, 0.6, 0.0, 0.0, 0.0], 900.0, |_, x| {
            [w, k * x[2] * x[2] / 1e3, 0.0, 0.0]
        });
        let omega_end = traj.last().unwrap()[2];

        // independent bisection on the static torque balance
        let balance = |om: f64| {
            let tsr = om * p.rotor_radius / w;
            let cp = p.aero.cp(tsr, 0.0);
            0.5 * p.air_density * PI * p.rotor_radius.powi(2) * w.powi(3) * cp / om - k * om * om
        };
        let (mut lo, mut hi) = (0.5, 1.2);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if balance(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let root = 0.5 * (lo + hi);
        assert!((omega_end - root).abs() < 1e-3 * root, "{omega_end} vs {root}");
        let drift = (traj[traj.len() - 1000][2] - omega_end).abs();
        assert!(drift < 1e-4, "still moving: {drift}");

        let power = plant_outputs(
            traj.last().unwrap(),
            &[w, k * omega_end * omega_end / 1e3, 0.0, 0.0],
            &p,
        )[y::POWER]
            * 1e3;
        let formula = 0.5 * p.air_density * PI * p.rotor_radius.powi(2) * p.aero.cp_max * w.powi(3)
            * p.generator_efficiency;
        assert!((power / formula - 1.0).abs() < 0.02, "{power} vs {formula}");
    }

    #[test]
    fn wave_response_scales_with_gain() {
        let amplitude = |gain: f64| {
            let p = PlantParams {
                wave_gain: gain,
                ..PlantParams::default()
            };
            let traj = run_fixed(&p, [0.0; 6], 600.0, |t, _| {
                [0.0, 0.0, 0.0, 0.1 * (2.0 * PI * t / 12.0).sin()]
            });
            traj[40_000..].iter().map(|x| x[0].abs()).fold(0.0, f64::max)
        };
        let a1 = amplitude(5.0e7);
        let a2 = amplitude(1.0e8);
        assert!(a1 > 0.0);
        assert!((a2 / a1 - 2.0).abs() < 0.1, "ratio {}", a2 / a1);
    }

    #[test]
    fn below_rated_keeps_fine_pitch() {
        let p = PlantParams::default();
        let cfg = ControllerConfig::default();
        let spec = LoadCaseSpec {
            w_bar: 8.0,
            turbulence_intensity: 0.0,
            hs: 0.0,
            duration: 120.0,
            ..LoadCaseSpec::default()
        };
        let rec = simulate_plant(&spec, &cfg, &p).unwrap();
        assert!(rec.input(u::PITCH).iter().all(|b| (*b - cfg.pitch_min).abs() < 1e-9));
        assert!(rec.input(u::TORQUE).iter().all(|t| *t > 0.0));
        let again = simulate_plant(&spec, &cfg, &p).unwrap();
        assert_eq!(rec, again);
    }
}
