//! End-to-end helpers shared by the CLI and the test suites: truth-plant
//! dataset generation and model-versus-truth comparison on held-out cases.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_loop::LoopOptions;
use crate::controller::ControllerConfig;
use crate::deriv::attach_states;
use crate::envgen::{case_seed, LoadCaseSpec};
use crate::error::{Error, Result};
use crate::lpvsim::{simulate_closed_loop_with, LpvModel};
use crate::metrics;
use crate::refplant::{environment, simulate_plant_env, PlantParams};
use crate::subspace::{DiscreteLtiModel, DiscretePlant};
use crate::closed_loop::run_closed_loop;
use crate::controller::ControllerState;
use crate::timeseries::{u, y, Dataset, RecordMeta, SimulationRecord, Source, TimeSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSpec {
    pub w_grid: Vec<f64>,
    pub n_seeds: usize,
    /// Template load case; `w_bar` and `seed` are set per cell.
    pub load_case: LoadCaseSpec,
    pub root_seed: u64,
    /// Controller tuning `[ω_PC, ζ_PC]` used while generating data.
    pub x_c: [f64; 2],
}

impl Default for DataSpec {
    fn default() -> Self {
        Self {
            w_grid: vec![6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0],
            n_seeds: 10,
            load_case: LoadCaseSpec::default(),
            root_seed: 0,
            x_c: [0.2, 1.0],
        }
    }
}

impl DataSpec {
    /// Load case of 1-based seed index `seed` in wind-speed column `column`.
    pub fn case(&self, seed: usize, column: usize) -> LoadCaseSpec {
        LoadCaseSpec {
            w_bar: self.w_grid[column],
            seed: case_seed(self.root_seed, seed as u64),
            ..self.load_case.clone()
        }
    }
}

/// Truth-plant simulation of one case with spline states attached.
pub fn truth_record(
    case: &LoadCaseSpec,
    controller: &ControllerConfig,
    params: &PlantParams,
) -> Result<SimulationRecord> {
    let env = environment(case)?;
    let rec = simulate_plant_env(&env, case, controller, params)?;
    attach_states(rec)
}

/// Simulates every `(seed, w̄)` cell; cells run on the current rayon pool.
pub fn generate_dataset(
    spec: &DataSpec,
    controller: &ControllerConfig,
    params: &PlantParams,
) -> Result<Dataset> {
    if spec.n_seeds == 0 || spec.w_grid.is_empty() {
        return Err(Error::InvalidArgument("dataset needs ≥ 1 seed and ≥ 1 column".into()));
    }
    let controller = controller.with_tuning(spec.x_c);
    let n_w = spec.w_grid.len();
    let cells: Vec<(usize, usize)> = (1..=spec.n_seeds)
        .flat_map(|s| (0..n_w).map(move |i| (s, i)))
        .collect();
    let records = cells
        .par_iter()
        .map(|&(s, i)| {
            let case = spec.case(s, i);
            truth_record(&case, &controller, params).map_err(|e| {
                Error::InvalidArgument(format!("case w̄ = {}, seed {s}: {e}", case.w_bar))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(spec.n_seeds);
    let mut it = records.into_iter();
    for _ in 0..spec.n_seeds {
        rows.push(it.by_ref().take(n_w).collect());
    }
    Dataset::new(spec.w_grid.clone(), rows)
}

/// Model families compared against the truth plant.
#[derive(Debug, Clone, Copy)]
pub enum Candidate<'a> {
    Truth(&'a PlantParams),
    Lpv(&'a LpvModel),
    Subspace(&'a DiscreteLtiModel),
}

impl Candidate<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Candidate::Truth(_) => "truth",
            Candidate::Lpv(_) => "dfsm",
            Candidate::Subspace(_) => "subspace",
        }
    }

    /// Closed-loop simulation and its wall time [s].
    pub fn simulate(
        &self,
        env: &TimeSeries,
        case: &LoadCaseSpec,
        controller: &ControllerConfig,
        truth: Option<&SimulationRecord>,
    ) -> Result<(SimulationRecord, f64)> {
        let clock = Instant::now();
        let meta = |source| RecordMeta {
            w_bar: case.w_bar,
            seed: case.seed,
            x_c: Some([controller.omega_pc, controller.zeta_pc]),
            source,
        };
        let rec = match self {
            Candidate::Truth(p) => simulate_plant_env(env, case, controller, p)?,
            Candidate::Lpv(m) => simulate_closed_loop_with(
                m,
                env,
                controller,
                &LoopOptions {
                    scheduling_tau: m.scheduling_filter_tau,
                    ..LoopOptions::default()
                },
                meta(Source::Surrogate),
            )?,
            Candidate::Subspace(m) => {
                let (speed, pitch, torque) = match truth {
                    Some(t) => (
                        t.output(y::GEN_SPEED)[0],
                        t.input(u::PITCH)[0],
                        t.input(u::TORQUE)[0],
                    ),
                    None => (controller.rated_speed, controller.pitch_min, 0.0),
                };
                let mut plant = DiscretePlant::new((*m).clone())?;
                run_closed_loop(
                    &mut plant,
                    env,
                    controller,
                    ControllerState::new(controller, speed, pitch),
                    torque,
                    &LoopOptions::default(),
                    meta(Source::Surrogate),
                )?
            }
        };
        Ok((rec, clock.elapsed().as_secs_f64()))
    }
}

/// One row of a model-versus-truth comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: String,
    pub w_bar: f64,
    pub seed_index: usize,
    pub pitch_mse: f64,
    pub pitch_nrmse: f64,
    pub speed_nrmse: f64,
    pub power_nrmse: f64,
    pub wall_time_s: f64,
    pub truth_wall_time_s: f64,
}

/// Compares `pred` with `truth` over `t ≥ t0 + trim_start`.
pub fn compare_records(
    truth: &SimulationRecord,
    pred: &SimulationRecord,
    trim_start: f64,
) -> Result<[f64; 4]> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            name: "prediction".into(),
            expected: truth.len(),
            found: pred.len(),
        });
    }
    let (lo, hi) = truth.inputs.index_window(truth.t0() + trim_start, truth.t_end())?;
    let w = |s: &[f64]| s[lo..=hi].to_vec();
    let (bt, bp) = (w(truth.input(u::PITCH)), w(pred.input(u::PITCH)));
    Ok([
        metrics::mse(&bt, &bp),
        metrics::nrmse(&bt, &bp),
        metrics::nrmse(&w(truth.output(y::GEN_SPEED)), &w(pred.output(y::GEN_SPEED))),
        metrics::nrmse(&w(truth.output(y::POWER)), &w(pred.output(y::POWER))),
    ])
}

/// Held-out validation: for each case, simulates the truth plant and every
/// candidate in closed loop on the same environment.
pub fn validate_cases(
    cases: &[(usize, LoadCaseSpec)],
    candidates: &[Candidate<'_>],
    controller: &ControllerConfig,
    params: &PlantParams,
    trim_start: f64,
) -> Result<Vec<ComparisonRow>> {
    let per_case = cases
        .par_iter()
        .map(|(index, case)| -> Result<Vec<ComparisonRow>> {
            let env = environment(case)?;
            let (truth, t_truth) = Candidate::Truth(params).simulate(&env, case, controller, None)?;
            let mut rows = Vec::new();
            for c in candidates {
                let row = |m: [f64; 4], t: f64| ComparisonRow {
                    model: c.name().into(),
                    w_bar: case.w_bar,
                    seed_index: *index,
                    pitch_mse: m[0],
                    pitch_nrmse: m[1],
                    speed_nrmse: m[2],
                    power_nrmse: m[3],
                    wall_time_s: t,
                    truth_wall_time_s: t_truth,
                };
                rows.push(match c.simulate(&env, case, controller, Some(&truth)) {
                    Ok((pred, t)) => row(compare_records(&truth, &pred, trim_start)?, t),
                    Err(e) => {
                        log::warn!("{} diverged on w̄ = {}, seed {index}: {e}", c.name(), case.w_bar);
                        row([f64::NAN; 4], f64::NAN)
                    }
                });
            }
            Ok(rows)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_case.into_iter().flatten().collect())
}
