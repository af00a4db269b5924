//! The LPV surrogate: anchor interpolation over the scheduling wind speed and
//! fixed-step RK4 simulation, open loop or inside the control loop.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::closed_loop::{run_closed_loop, ClosedLoopPlant, LoopOptions, SchedulingFilter};
use crate::controller::{ControllerConfig, ControllerState};
use crate::error::{Error, Result};
use crate::lpvfit::LtiModel;
use crate::timeseries::{
    u, y, Channel, RecordMeta, SimulationRecord, Source, TimeSeries, INPUT_CHANNELS, N_INPUTS,
    N_OUTPUTS, N_STATES, OUTPUT_CHANNELS, STATE_CHANNELS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    Linear,
    Nearest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpvDiagnostics {
    pub center: usize,
    /// Optimization wall time of each column [s].
    pub column_solve_times: Vec<f64>,
    /// Midpoints between anchors whose interpolated A is close to unstable.
    pub unstable_midpoints: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpvModel {
    pub w_grid: Vec<f64>,
    pub anchors: Vec<LtiModel>,
    pub interpolation: Interpolation,
    pub scheduling_filter_tau: f64,
    pub eps_stab: f64,
    #[serde(default)]
    pub diagnostics: Option<LpvDiagnostics>,
}

/// Interpolated state-space quadruple.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
}

impl LpvModel {
    pub fn new(
        anchors: Vec<LtiModel>,
        interpolation: Interpolation,
        scheduling_filter_tau: f64,
    ) -> Result<Self> {
        let model = Self {
            w_grid: anchors.iter().map(|a| a.w_anchor).collect(),
            anchors,
            interpolation,
            scheduling_filter_tau,
            eps_stab: 1e-4,
            diagnostics: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let first = self
            .anchors
            .first()
            .ok_or_else(|| Error::InvalidArgument("LPV model without anchors".into()))?;
        if self.anchors.windows(2).any(|w| !(w[1].w_anchor > w[0].w_anchor)) {
            return Err(Error::InvalidArgument(
                "anchors must be strictly increasing in wind speed".into(),
            ));
        }
        if self.w_grid.len() != self.anchors.len()
            || self.w_grid.iter().zip(&self.anchors).any(|(w, a)| *w != a.w_anchor)
        {
            return Err(Error::InvalidArgument("w_grid does not match the anchors".into()));
        }
        for a in &self.anchors {
            a.check_dimensions()?;
            if a.a.shape() != first.a.shape()
                || a.b.shape() != first.b.shape()
                || a.c.shape() != first.c.shape()
            {
                return Err(Error::InvalidArgument("anchors differ in dimensions".into()));
            }
            let margin = a.stability_margin();
            if !(margin <= -self.eps_stab) {
                return Err(Error::InvalidArgument(format!(
                    "anchor at w = {} is not stable (margin {margin:.3e})",
                    a.w_anchor
                )));
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.anchors[0].a.nrows()
    }

    /// Bracketing anchors and the weight of the upper one.
    fn bracket(&self, w: f64) -> (usize, usize, f64) {
        let n = self.anchors.len();
        if n == 1 || !(w > self.w_grid[0]) {
            return (0, 0, 0.0);
        }
        if w >= self.w_grid[n - 1] {
            return (n - 1, n - 1, 0.0);
        }
        let hi = self.w_grid.partition_point(|&g| g <= w);
        let lo = hi - 1;
        let t = (w - self.w_grid[lo]) / (self.w_grid[hi] - self.w_grid[lo]);
        match self.interpolation {
            Interpolation::Linear => (lo, hi, t),
            Interpolation::Nearest if t < 0.5 => (lo, lo, 0.0),
            Interpolation::Nearest => (hi, hi, 0.0),
        }
    }

    pub fn interpolate(&self, w_sched: f64) -> StateSpace {
        let (lo, hi, t) = self.bracket(w_sched);
        let (a0, a1) = (&self.anchors[lo], &self.anchors[hi]);
        let mix = |m0: &DMatrix<f64>, m1: &DMatrix<f64>| {
            if t == 0.0 {
                m0.clone()
            } else {
                m0 * (1.0 - t) + m1 * t
            }
        };
        StateSpace {
            a: mix(&a0.a, &a1.a),
            b: mix(&a0.b, &a1.b),
            c: mix(&a0.c, &a1.c),
            d: mix(&a0.d, &a1.d),
        }
    }

    /// Midpoints between neighboring anchors with stability margin above
    /// `-threshold`.
    pub fn unstable_midpoints(&self, threshold: f64) -> Vec<f64> {
        self.w_grid
            .windows(2)
            .map(|w| 0.5 * (w[0] + w[1]))
            .filter(|&w| self.interpolate(w).a.clone().complex_eigenvalues().iter().any(|l| l.re > -threshold))
            .collect()
    }

    /// Training-data operating point interpolated at `w`, if recorded.
    pub fn operating_point(&self, w: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let (lo, hi, t) = self.bracket(w);
        let p0 = self.anchors[lo].operating_point.as_ref()?;
        let p1 = self.anchors[hi].operating_point.as_ref()?;
        let mix = |a: &[f64], b: &[f64]| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| x * (1.0 - t) + y * t).collect()
        };
        Some((mix(&p0.states, &p1.states), mix(&p0.inputs, &p1.inputs)))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

const NZ: usize = N_STATES + N_INPUTS;

/// Row-major `[A B]` and `[C D]` blocks for the fixed 6-state, 4-input,
/// 6-output structure.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Blocks {
    ab: [f64; N_STATES * NZ],
    cd: [f64; N_OUTPUTS * NZ],
}

impl Blocks {
    /// Column-major `[A | B]` and `[C | D]`.
    fn of(m: &LtiModel) -> Self {
        let mut ab = [0.0; N_STATES * NZ];
        let mut cd = [0.0; N_OUTPUTS * NZ];
        for i in 0..N_STATES {
            for j in 0..N_STATES {
                ab[j * N_STATES + i] = m.a[(i, j)];
            }
            for j in 0..N_INPUTS {
                ab[(N_STATES + j) * N_STATES + i] = m.b[(i, j)];
            }
        }
        for i in 0..N_OUTPUTS {
            for j in 0..N_STATES {
                cd[j * N_OUTPUTS + i] = m.c[(i, j)];
            }
            for j in 0..N_INPUTS {
                cd[(N_STATES + j) * N_OUTPUTS + i] = m.d[(i, j)];
            }
        }
        Self { ab, cd }
    }
}

/// Hot-loop form of an [`LpvModel`] with the fixed channel layout.
#[derive(Debug, Clone)]
pub struct LpvPlant {
    grid: Vec<f64>,
    blocks: Vec<Blocks>,
    /// Per-segment `(blocks[i+1] − blocks[i]) / Δw`.
    slopes: Vec<Blocks>,
    interpolation: Interpolation,
    current: Blocks,
    current_w: f64,
    /// `C·ξ` for the current state and schedule.
    cx: Option<[f64; N_OUTPUTS]>,
    pub state: [f64; N_STATES],
}

impl LpvPlant {
    pub fn new(model: &LpvModel, state: [f64; N_STATES]) -> Result<Self> {
        let a = &model.anchors[0];
        if a.a.nrows() != N_STATES || a.b.ncols() != N_INPUTS || a.c.nrows() != N_OUTPUTS {
            return Err(Error::InvalidArgument(
                "closed-loop simulation needs 6 states, 4 inputs and 6 outputs".into(),
            ));
        }
        let blocks: Vec<Blocks> = model.anchors.iter().map(Blocks::of).collect();
        let slopes = blocks
            .windows(2)
            .zip(model.w_grid.windows(2))
            .map(|(b, g)| {
                let h = g[1] - g[0];
                Blocks {
                    ab: std::array::from_fn(|k| (b[1].ab[k] - b[0].ab[k]) / h),
                    cd: std::array::from_fn(|k| (b[1].cd[k] - b[0].cd[k]) / h),
                }
            })
            .collect();
        Ok(Self {
            slopes,
            grid: model.w_grid.clone(),
            current: blocks[0],
            blocks,
            interpolation: model.interpolation,
            current_w: f64::NAN,
            cx: None,
            state,
        })
    }

    fn schedule(&mut self, w: f64) {
        if w == self.current_w {
            return;
        }
        self.current_w = w;
        self.cx = None;
        let n = self.grid.len();
        if n == 1 || !(w > self.grid[0]) {
            self.current = self.blocks[0];
            return;
        }
        if w >= self.grid[n - 1] {
            self.current = self.blocks[n - 1];
            return;
        }
        let hi = self.grid.partition_point(|&g| g <= w);
        let lo = hi - 1;
        let t = (w - self.grid[lo]) / (self.grid[hi] - self.grid[lo]);
        match self.interpolation {
            Interpolation::Nearest => {
                self.current = self.blocks[if t < 0.5 { lo } else { hi }];
            }
            Interpolation::Linear => {
                let (b0, slope) = (&self.blocks[lo], &self.slopes[lo]);
                let dw = w - self.grid[lo];
                for k in 0..b0.ab.len() {
                    self.current.ab[k] = b0.ab[k] + dw * slope.ab[k];
                }
                for k in 0..b0.cd.len() {
                    self.current.cd[k] = b0.cd[k] + dw * slope.cd[k];
                }
            }
        }
    }

    /// `Σ_j m[:, j] · v[j]` for a column-major `ROWS × len(v)` block.
    #[inline(always)]
    fn gemv<const ROWS: usize>(m: &[f64], v: &[f64], out: &mut [f64; ROWS]) {
        for (j, vj) in v.iter().enumerate() {
            let col = &m[j * ROWS..(j + 1) * ROWS];
            for i in 0..ROWS {
                out[i] += col[i] * vj;
            }
        }
    }

    /// One RK4 step of `ξ̇ = Aξ + Bu` with `u` held: the stages reduce to
    /// `k_{i+1} = k_1 + c·h·A·k_i`.
    fn rk4(&mut self, input: &[f64; N_INPUTS], dt: f64) {
        let (a, b) = self.current.ab.split_at(N_STATES * N_STATES);
        let mut bu = [0.0; N_STATES];
        Self::gemv(b, input, &mut bu);
        let mut k1 = bu;
        Self::gemv(a, &self.state, &mut k1);
        let stage = |k: &[f64; N_STATES], c: f64| {
            let mut ak = [0.0; N_STATES];
            Self::gemv(a, k, &mut ak);
            let mut o = k1;
            for i in 0..N_STATES {
                o[i] += c * dt * ak[i];
            }
            o
        };
        let k2 = stage(&k1, 0.5);
        let k3 = stage(&k2, 0.5);
        let k4 = stage(&k3, 1.0);
        for i in 0..N_STATES {
            self.state[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        self.cx = None;
    }

    pub fn output_at(&mut self, input: &[f64; N_INPUTS], w_sched: f64) -> [f64; N_OUTPUTS] {
        self.schedule(w_sched);
        let (c, d) = self.current.cd.split_at(N_OUTPUTS * N_STATES);
        let mut out = match self.cx {
            Some(cx) => cx,
            None => {
                let mut cx = [0.0; N_OUTPUTS];
                Self::gemv(c, &self.state, &mut cx);
                self.cx = Some(cx);
                cx
            }
        };
        Self::gemv(d, input, &mut out);
        out
    }
}

impl ClosedLoopPlant for LpvPlant {
    fn outputs(&mut self, input: &[f64; N_INPUTS], w_sched: f64) -> [f64; N_OUTPUTS] {
        self.output_at(input, w_sched)
    }

    fn advance(&mut self, input: &[f64; N_INPUTS], w_sched: f64, dt: f64) {
        self.schedule(w_sched);
        self.rk4(input, dt);
    }

    fn is_finite(&self) -> bool {
        self.state.iter().all(|x| x.is_finite() && x.abs() < 1e8)
    }
}

/// LTI simulation of a single anchor through nalgebra, used to cross-check
/// [`LpvPlant`] with a frozen schedule.
#[derive(Debug, Clone)]
pub struct LtiPlant {
    pub model: LtiModel,
    pub state: DVector<f64>,
}

impl ClosedLoopPlant for LtiPlant {
    fn outputs(&mut self, input: &[f64; N_INPUTS], _w_sched: f64) -> [f64; N_OUTPUTS] {
        let u = DVector::from_row_slice(input);
        let yv = &self.model.c * &self.state + &self.model.d * u;
        std::array::from_fn(|i| yv[i])
    }

    fn advance(&mut self, input: &[f64; N_INPUTS], _w_sched: f64, dt: f64) {
        let u = DVector::from_row_slice(input);
        let bu = &self.model.b * u;
        let f = |x: &DVector<f64>| &self.model.a * x + &bu;
        let x = &self.state;
        let k1 = f(x);
        let k2 = f(&(x + &k1 * (0.5 * dt)));
        let k3 = f(&(x + &k2 * (0.5 * dt)));
        let k4 = f(&(x + &k3 * dt));
        self.state = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    }

    fn is_finite(&self) -> bool {
        self.state.iter().all(|x| x.is_finite() && x.abs() < 1e8)
    }
}

/// Open-loop response to recorded inputs; states are logged alongside.
pub fn simulate_open_loop(
    model: &LpvModel,
    inputs: &TimeSeries,
    xi0: [f64; N_STATES],
) -> Result<SimulationRecord> {
    let cols = INPUT_CHANNELS
        .iter()
        .map(|s| inputs.require(s))
        .collect::<Result<Vec<_>>>()?;
    let n = inputs.len();
    let mut plant = LpvPlant::new(model, xi0)?;
    let mut filter = SchedulingFilter::new(model.scheduling_filter_tau, cols[u::WIND][0]);
    let mut outputs = vec![vec![0.0; n]; N_OUTPUTS];
    let mut states = vec![vec![0.0; n]; N_STATES];
    for k in 0..n {
        let w_sched = if k == 0 {
            filter.value
        } else {
            filter.update(cols[u::WIND][k], inputs.dt)
        };
        let input: [f64; N_INPUTS] = std::array::from_fn(|i| cols[i][k]);
        let out = plant.output_at(&input, w_sched);
        for i in 0..N_OUTPUTS {
            outputs[i][k] = out[i];
        }
        for i in 0..N_STATES {
            states[i][k] = plant.state[i];
        }
        if k + 1 < n {
            plant.advance(&input, w_sched, inputs.dt);
            if !plant.is_finite() {
                return Err(Error::Diverged {
                    time: inputs.time(k + 1),
                });
            }
        }
    }
    let series = |specs: &[crate::timeseries::ChannelSpec], values: Vec<Vec<f64>>| {
        TimeSeries::new(
            inputs.t0,
            inputs.dt,
            specs
                .iter()
                .zip(values)
                .map(|(s, v)| Channel::new(s.name, s.unit, v))
                .collect(),
        )
    };
    let in_series = TimeSeries::new(
        inputs.t0,
        inputs.dt,
        INPUT_CHANNELS
            .iter()
            .zip(&cols)
            .map(|(s, v)| Channel::new(s.name, s.unit, v.to_vec()))
            .collect(),
    )?;
    let meta = RecordMeta {
        w_bar: crate::metrics::mean(cols[u::WIND]),
        seed: 0,
        x_c: None,
        source: Source::Surrogate,
    };
    let mut rec = SimulationRecord::new(in_series, series(&OUTPUT_CHANNELS, outputs)?, meta)?;
    rec.states = Some(series(&STATE_CHANNELS, states)?);
    Ok(rec)
}

/// Initial surrogate state and controller state for a closed-loop run: the
/// training operating point at the initial wind speed when recorded, else
/// rest at the fine-pitch limit.
pub fn initial_conditions(
    model: &LpvModel,
    controller: &ControllerConfig,
    w0: f64,
) -> ([f64; N_STATES], ControllerState, f64) {
    match model.operating_point(w0) {
        Some((xs, us)) if xs.len() == N_STATES && us.len() == N_INPUTS => {
            let x0: [f64; N_STATES] = std::array::from_fn(|i| xs[i]);
            let ctrl = ControllerState::new(controller, x0[y::GEN_SPEED], us[u::PITCH]);
            (x0, ctrl, us[u::TORQUE])
        }
        _ => (
            [0.0; N_STATES],
            ControllerState::new(controller, 0.0, controller.pitch_min),
            0.0,
        ),
    }
}

/// Closed-loop surrogate simulation over a wind/wave environment.
pub fn simulate_closed_loop(
    model: &LpvModel,
    env: &TimeSeries,
    controller: &ControllerConfig,
) -> Result<SimulationRecord> {
    simulate_closed_loop_with(model, env, controller, &LoopOptions {
        scheduling_tau: model.scheduling_filter_tau,
        ..LoopOptions::default()
    }, RecordMeta {
        w_bar: crate::metrics::mean(env.require(&INPUT_CHANNELS[u::WIND])?),
        seed: 0,
        x_c: Some([controller.omega_pc, controller.zeta_pc]),
        source: Source::Surrogate,
    })
}

pub fn simulate_closed_loop_with(
    model: &LpvModel,
    env: &TimeSeries,
    controller: &ControllerConfig,
    opts: &LoopOptions,
    meta: RecordMeta,
) -> Result<SimulationRecord> {
    controller.validate()?;
    let w0 = env.require(&INPUT_CHANNELS[u::WIND])?[0];
    let (x0, ctrl, torque0) = initial_conditions(model, controller, opts.frozen_schedule.unwrap_or(w0));
    let mut plant = LpvPlant::new(model, x0)?;
    run_closed_loop(&mut plant, env, controller, ctrl, torque0, opts, meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn anchor(w: f64, k: f64) -> LtiModel {
        let a = DMatrix::from_fn(6, 6, |i, j| if i == j { -k } else { 0.0 });
        let b = DMatrix::from_element(6, 4, k);
        let c = DMatrix::identity(6, 6) * k;
        let d = DMatrix::from_element(6, 4, 0.5 * k);
        LtiModel::new(w, a, b, c, d).unwrap()
    }

    fn model() -> LpvModel {
        LpvModel::new(vec![anchor(6.0, 1.0), anchor(8.0, 2.0), anchor(10.0, 4.0)], Interpolation::Linear, 30.0)
            .unwrap()
    }

    #[test]
    fn interpolation_rules() {
        let m = model();
        assert_eq!(m.interpolate(8.0).a, m.anchors[1].a);
        assert_eq!(m.interpolate(3.0).a, m.anchors[0].a);
        assert_eq!(m.interpolate(30.0).b, m.anchors[2].b);
        let mid = m.interpolate(7.0);
        assert!((mid.a[(0, 0)] + 1.5).abs() < 1e-15);
        let mut plant = LpvPlant::new(&m, [1.0; 6]).unwrap();
        let via_plant = plant.output_at(&[1.0; 4], 9.0);
        let ss = m.interpolate(9.0);
        let direct = &ss.c * DVector::from_element(6, 1.0) + &ss.d * DVector::from_element(4, 1.0);
        for i in 0..6 {
            assert!((via_plant[i] - direct[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_unsorted_or_unstable_anchors() {
        assert!(LpvModel::new(vec![anchor(8.0, 1.0), anchor(6.0, 1.0)], Interpolation::Linear, 30.0).is_err());
        assert!(LpvModel::new(vec![anchor(8.0, 0.0)], Interpolation::Linear, 30.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = model();
        let back = LpvModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
        let text = m.to_json().unwrap();
        assert!(text.contains("\"A\""));
    }
}
