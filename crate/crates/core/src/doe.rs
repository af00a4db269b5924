//! Full-factorial design of experiments over the pitch-loop tuning
//! `x_c = [ω_PC, ζ_PC]`, evaluated by closed-loop simulation on the truth
//! plant or a surrogate.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_loop::LoopOptions;
use crate::controller::ControllerConfig;
use crate::envgen::{case_seed, LoadCaseSpec, WeibullSpec};
use crate::error::{Error, Result};
use crate::lpvsim::{simulate_closed_loop_with, LpvModel};
use crate::metrics::{self, DelConfig};
use crate::refplant::{environment, simulate_plant_env, PlantParams};
use crate::timeseries::{u, y, RecordMeta, SimulationRecord, Source, TimeSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DoeSpec {
    pub omega_bounds: [f64; 2],
    pub zeta_bounds: [f64; 2],
    pub levels: [usize; 2],
    pub wind_speeds: Vec<f64>,
    pub n_seeds: usize,
    /// Template for every load case; `w_bar` and `seed` are overwritten.
    pub load_case: LoadCaseSpec,
    pub root_seed: u64,
    /// Start-up transient excluded from the metrics [s].
    pub trim_start: f64,
    pub del: DelConfig,
    pub weibull: WeibullSpec,
}

impl Default for DoeSpec {
    fn default() -> Self {
        Self {
            omega_bounds: [0.05, 0.35],
            zeta_bounds: [0.5, 3.0],
            levels: [5, 5],
            wind_speeds: vec![8.0, 10.0, 12.0, 14.0, 16.0],
            n_seeds: 6,
            load_case: LoadCaseSpec::default(),
            root_seed: 0,
            trim_start: 60.0,
            del: DelConfig::default(),
            weibull: WeibullSpec::default(),
        }
    }
}

fn linspace(bounds: [f64; 2], n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| bounds[0] + (bounds[1] - bounds[0]) * i as f64 / (n - 1) as f64)
        .collect()
}

impl DoeSpec {
    pub fn validate(&self) -> Result<()> {
        if self.levels.iter().any(|&l| l < 2) {
            return Err(Error::InvalidArgument("DOE needs ≥ 2 levels per axis".into()));
        }
        if self.wind_speeds.is_empty() || self.n_seeds == 0 {
            return Err(Error::InvalidArgument("DOE needs at least one load case".into()));
        }
        Ok(())
    }

    /// Full cross product, ω_PC varying slowest.
    pub fn samples(&self) -> Vec<[f64; 2]> {
        let omegas = linspace(self.omega_bounds, self.levels[0]);
        let zetas = linspace(self.zeta_bounds, self.levels[1]);
        omegas
            .iter()
            .flat_map(|&w| zetas.iter().map(move |&z| [w, z]))
            .collect()
    }

    pub fn load_cases(&self) -> Vec<LoadCaseSpec> {
        self.wind_speeds
            .iter()
            .flat_map(|&w| {
                (1..=self.n_seeds as u64).map(move |s| LoadCaseSpec {
                    w_bar: w,
                    seed: case_seed(self.root_seed, s),
                    ..self.load_case.clone()
                })
            })
            .collect()
    }
}

/// What the DOE simulates.
#[derive(Debug, Clone, Copy)]
pub enum DoeModel<'a> {
    Truth(&'a PlantParams),
    Surrogate(&'a LpvModel),
}

impl DoeModel<'_> {
    pub fn provenance(&self) -> &'static str {
        match self {
            DoeModel::Truth(_) => "truth-plant",
            DoeModel::Surrogate(_) => "surrogate",
        }
    }

    pub fn simulate(
        &self,
        env: &TimeSeries,
        spec: &LoadCaseSpec,
        controller: &ControllerConfig,
    ) -> Result<SimulationRecord> {
        match self {
            DoeModel::Truth(params) => simulate_plant_env(env, spec, controller, params),
            DoeModel::Surrogate(model) => simulate_closed_loop_with(
                model,
                env,
                controller,
                &LoopOptions {
                    scheduling_tau: model.scheduling_filter_tau,
                    ..LoopOptions::default()
                },
                RecordMeta {
                    w_bar: spec.w_bar,
                    seed: spec.seed,
                    x_c: Some([controller.omega_pc, controller.zeta_pc]),
                    source: Source::Surrogate,
                },
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoeResult {
    pub del_t: f64,
    pub aep: f64,
    /// Mean absolute pitch rate [rad/s].
    pub pitch_travel: f64,
    pub wall_time: f64,
    /// `None` on success, else why the sample failed.
    pub failure: Option<String>,
}

impl DoeResult {
    fn failed(note: String, wall_time: f64) -> Self {
        Self {
            del_t: f64::NAN,
            aep: f64::NAN,
            pitch_travel: f64::NAN,
            wall_time,
            failure: Some(note),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoeGrid {
    pub omega_bounds: [f64; 2],
    pub zeta_bounds: [f64; 2],
    pub levels: [usize; 2],
    pub samples: Vec<[f64; 2]>,
    pub results: Vec<DoeResult>,
    pub provenance: String,
    /// DEL_t mapped to [0, 1] by [`scale_surface`].
    pub scaled: Option<Vec<f64>>,
}

/// Per-case metrics of one closed-loop record over the analysis window.
pub struct CaseMetrics {
    pub del: f64,
    pub mean_power: f64,
    pub pitch_travel: f64,
}

pub fn case_metrics(rec: &SimulationRecord, trim_start: f64, del: &DelConfig) -> Result<CaseMetrics> {
    let (lo, hi) = rec.inputs.index_window(rec.t0() + trim_start, rec.t_end())?;
    let duration = (hi - lo) as f64 * rec.dt();
    let moment = &rec.output(y::TOWER_MOMENT)[lo..=hi];
    let pitch = &rec.input(u::PITCH)[lo..=hi];
    Ok(CaseMetrics {
        del: metrics::del(moment, duration, del)?,
        mean_power: metrics::mean(&rec.output(y::POWER)[lo..=hi]),
        pitch_travel: pitch.windows(2).map(|w| (w[1] - w[0]).abs()).sum::<f64>() / duration,
    })
}

fn evaluate(
    x_c: [f64; 2],
    spec: &DoeSpec,
    cases: &[(LoadCaseSpec, TimeSeries)],
    model: DoeModel<'_>,
    template: &ControllerConfig,
) -> DoeResult {
    let clock = Instant::now();
    let controller = template.with_tuning(x_c);
    let mut dels = Vec::with_capacity(cases.len());
    let mut powers = Vec::with_capacity(cases.len());
    let mut travel = 0.0;
    for (lc, env) in cases {
        let outcome = model
            .simulate(env, lc, &controller)
            .and_then(|rec| case_metrics(&rec, spec.trim_start, &spec.del));
        match outcome {
            Ok(m) => {
                dels.push((lc.w_bar, m.del));
                powers.push((lc.w_bar, m.mean_power));
                travel += m.pitch_travel;
            }
            Err(e) => {
                return DoeResult::failed(
                    format!("w̄ = {}, seed {}: {e}", lc.w_bar, lc.seed),
                    clock.elapsed().as_secs_f64(),
                )
            }
        }
    }
    let summary = metrics::weighted_del(&dels, &spec.weibull).and_then(|del_t| {
        metrics::aep_from_means(&powers, &spec.weibull, metrics::HOURS_PER_YEAR)
            .map(|aep| (del_t, aep))
    });
    match summary {
        Ok((del_t, aep)) => DoeResult {
            del_t,
            aep,
            pitch_travel: travel / cases.len() as f64,
            wall_time: clock.elapsed().as_secs_f64(),
            failure: None,
        },
        Err(e) => DoeResult::failed(e.to_string(), clock.elapsed().as_secs_f64()),
    }
}

/// Simulates every distinct sample over all load cases. Samples run on the
/// current rayon pool; results are ordered by sample index.
pub fn run_doe(
    spec: &DoeSpec,
    model: DoeModel<'_>,
    template: &ControllerConfig,
) -> Result<DoeGrid> {
    spec.validate()?;
    template.validate()?;
    let samples = spec.samples();
    let cases = spec
        .load_cases()
        .into_iter()
        .map(|lc| environment(&lc).map(|env| (lc, env)))
        .collect::<Result<Vec<_>>>()?;

    let mut unique: Vec<[f64; 2]> = Vec::new();
    let slot: Vec<usize> = samples
        .iter()
        .map(|s| match unique.iter().position(|u| u == s) {
            Some(i) => i,
            None => {
                unique.push(*s);
                unique.len() - 1
            }
        })
        .collect();
    let computed: Vec<DoeResult> = unique
        .par_iter()
        .map(|&x_c| evaluate(x_c, spec, &cases, model, template))
        .collect();
    for (x_c, r) in unique.iter().zip(&computed) {
        if let Some(note) = &r.failure {
            log::warn!("DOE sample {x_c:?} failed: {note}");
        }
    }
    Ok(DoeGrid {
        omega_bounds: spec.omega_bounds,
        zeta_bounds: spec.zeta_bounds,
        levels: spec.levels,
        results: slot.iter().map(|&i| computed[i].clone()).collect(),
        samples,
        provenance: model.provenance().to_string(),
        scaled: None,
    })
}

/// Maps values affinely to [0, 1]; non-finite values stay NaN.
pub fn scale_values(values: &[f64]) -> Result<Vec<f64>> {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.len() < 2 {
        return Err(Error::InvalidArgument(
            "scaling needs at least two finite results".into(),
        ));
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Err(Error::DegenerateSurface(lo));
    }
    Ok(values
        .iter()
        .map(|v| if v.is_finite() { (v - lo) / (hi - lo) } else { f64::NAN })
        .collect())
}

pub fn scale_surface(grid: &DoeGrid) -> Result<DoeGrid> {
    let del: Vec<f64> = grid.results.iter().map(|r| r.del_t).collect();
    Ok(DoeGrid {
        scaled: Some(scale_values(&del)?),
        ..grid.clone()
    })
}

/// Index of the smallest finite value.
pub fn argmin(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
}

pub fn argmax(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
}

/// Whether two sample indices of a `levels` grid are equal or adjacent
/// (including diagonals).
pub fn within_neighborhood(levels: [usize; 2], a: usize, b: usize) -> bool {
    let (ra, ca) = (a / levels[1], a % levels[1]);
    let (rb, cb) = (b / levels[1], b % levels[1]);
    ra.abs_diff(rb) <= 1 && ca.abs_diff(cb) <= 1
}

/// Spearman correlation over samples finite in both grids.
pub fn rank_correlation(a: &DoeGrid, b: &DoeGrid) -> Result<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = a
        .results
        .iter()
        .zip(&b.results)
        .filter(|(p, q)| p.del_t.is_finite() && q.del_t.is_finite())
        .map(|(p, q)| (p.del_t, q.del_t))
        .unzip();
    metrics::spearman(&xs, &ys)
}
