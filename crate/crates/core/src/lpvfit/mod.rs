//! Identification of the anchor models of the LPV surrogate: per wind-speed
//! column, a stable `(A, B)` pair from a stability-penalized least-squares
//! problem solved by GA + BFGS (or BFGS alone from a warm start), and
//! `(C, D)` from ordinary least squares.

pub mod bfgs;
pub mod ga;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, spectral_abscissa, spectral_abscissa_gradient_if};
use crate::lpvsim::{Interpolation, LpvDiagnostics, LpvModel};
use crate::rng;
use crate::timeseries::{
    assemble_regression_data, AssemblyOptions, Dataset, INPUT_CHANNELS, OUTPUT_CHANNELS,
    STATE_CHANNELS,
};

/// Flattened model parameters: `θ_AB = [vec(A), vec(B)]` and
/// `θ_CD = [vec(C), vec(D)]`, each matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub n_states: usize,
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub theta_ab: Vec<f64>,
    pub theta_cd: Vec<f64>,
}

fn flatten(blocks: &[&DMatrix<f64>]) -> Vec<f64> {
    blocks
        .iter()
        .flat_map(|m| m.transpose().iter().copied().collect::<Vec<_>>())
        .collect()
}

fn unflatten(theta: &[f64], rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, &theta[..rows * cols])
}

impl ParamVector {
    pub fn from_ab(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Self {
        Self {
            n_states: a.nrows(),
            n_inputs: b.ncols(),
            n_outputs: 0,
            theta_ab: flatten(&[a, b]),
            theta_cd: Vec::new(),
        }
    }

    pub fn from_matrices(
        a: &DMatrix<f64>,
        b: &DMatrix<f64>,
        c: &DMatrix<f64>,
        d: &DMatrix<f64>,
    ) -> Self {
        Self {
            n_outputs: c.nrows(),
            theta_cd: flatten(&[c, d]),
            ..Self::from_ab(a, b)
        }
    }

    pub fn a(&self) -> DMatrix<f64> {
        unflatten(&self.theta_ab, self.n_states, self.n_states)
    }

    pub fn b(&self) -> DMatrix<f64> {
        let n = self.n_states * self.n_states;
        unflatten(&self.theta_ab[n..], self.n_states, self.n_inputs)
    }

    pub fn c(&self) -> DMatrix<f64> {
        unflatten(&self.theta_cd, self.n_outputs, self.n_states)
    }

    pub fn d(&self) -> DMatrix<f64> {
        let n = self.n_outputs * self.n_states;
        unflatten(&self.theta_cd[n..], self.n_outputs, self.n_inputs)
    }

    pub fn is_finite(&self) -> bool {
        self.theta_ab.iter().chain(&self.theta_cd).all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub population: usize,
    pub generations: usize,
    /// Box bound on the scaled parameters explored by the GA.
    pub bound: f64,
    pub tournament: usize,
    pub elite: usize,
    pub mutation_rate: f64,
    pub mutation_scale: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Required stability margin: max Re λ(A) ≤ −eps_stab [1/s].
    pub eps_stab: f64,
    /// The penalty targets `margin_factor · eps_stab` so that the returned
    /// model clears `eps_stab` despite the penalty's small residual violation.
    pub margin_factor: f64,
    pub penalty_weight: f64,
    pub penalty_growth: f64,
    pub penalty_escalations: usize,
    /// Ridge regularization when the regressor Gram matrix is singular.
    pub ridge: bool,
    /// Fixed channel scales; computed as channel RMS when absent.
    pub scaling: Option<Scaling>,
    pub seed: u64,
    pub assembly: AssemblyOptions,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            population: 50,
            generations: 100,
            bound: 50.0,
            tournament: 3,
            elite: 2,
            mutation_rate: 0.1,
            mutation_scale: 1.0,
            grad_tol: 1e-6,
            max_iter: 500,
            eps_stab: 1e-4,
            margin_factor: 2.0,
            penalty_weight: 1e3,
            penalty_growth: 10.0,
            penalty_escalations: 4,
            ridge: true,
            scaling: None,
            seed: 0,
            assembly: AssemblyOptions::default(),
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population < 10 {
            return Err(Error::InvalidArgument(format!(
                "GA population must be ≥ 10, got {}",
                self.population
            )));
        }
        if !(self.grad_tol > 0.0) || !(self.eps_stab > 0.0) || !(self.penalty_weight > 0.0) {
            return Err(Error::InvalidArgument(
                "tolerances and penalty weight must be positive".into(),
            ));
        }
        Ok(())
    }

    fn ga_options(&self) -> ga::GaOptions {
        ga::GaOptions {
            population: self.population,
            generations: self.generations,
            bound: self.bound,
            tournament: self.tournament,
            elite: self.elite,
            mutation_rate: self.mutation_rate,
            mutation_scale: self.mutation_scale,
        }
    }
}

/// Per-channel scale factors; fitting works on `channel / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub states: Vec<f64>,
    pub inputs: Vec<f64>,
    pub derivatives: Vec<f64>,
}

fn row_rms(m: &DMatrix<f64>) -> Vec<f64> {
    m.row_iter()
        .map(|r| {
            let rms = (r.iter().map(|x| x * x).sum::<f64>() / r.len().max(1) as f64).sqrt();
            if rms > 0.0 && rms.is_finite() {
                rms
            } else {
                1.0
            }
        })
        .collect()
}

/// Sufficient statistics of the scaled `(A, B)` least-squares problem.
#[derive(Debug, Clone)]
pub struct AbProblem {
    pub scaling: Scaling,
    /// `Z Zᵀ / N` with `Z = [ξ_s; u_s]`.
    gram: DMatrix<f64>,
    /// `gram + ridge·I`.
    gram_reg: DMatrix<f64>,
    /// `Ẋ_s Zᵀ / N`.
    cross: DMatrix<f64>,
    /// `tr(Ẋ_s Ẋ_sᵀ) / N`.
    energy: f64,
    ridge: f64,
    pub n_samples: usize,
}

impl AbProblem {
    pub fn new(
        u: &DMatrix<f64>,
        xi: &DMatrix<f64>,
        xi_dot: &DMatrix<f64>,
        cfg: &FitConfig,
    ) -> Result<Self> {
        let n = u.ncols();
        if xi.ncols() != n || xi_dot.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "regression matrices have {} / {} / {} columns",
                u.ncols(),
                xi.ncols(),
                xi_dot.ncols()
            )));
        }
        if xi_dot.nrows() != xi.nrows() {
            return Err(Error::InvalidArgument("Ẋ and Ξ row counts differ".into()));
        }
        if n == 0 {
            return Err(Error::TooFewPoints { needed: 1, got: 0 });
        }
        let scaling = match &cfg.scaling {
            Some(s) => s.clone(),
            None => Scaling {
                states: row_rms(xi),
                inputs: row_rms(u),
                derivatives: row_rms(xi_dot),
            },
        };
        let (nx, nu) = (xi.nrows(), u.nrows());
        if scaling.states.len() != nx
            || scaling.inputs.len() != nu
            || scaling.derivatives.len() != nx
        {
            return Err(Error::InvalidArgument("scaling vector lengths".into()));
        }
        let mut z = DMatrix::zeros(nx + nu, n);
        for j in 0..n {
            for i in 0..nx {
                z[(i, j)] = xi[(i, j)] / scaling.states[i];
            }
            for i in 0..nu {
                z[(nx + i, j)] = u[(i, j)] / scaling.inputs[i];
            }
        }
        let d = DMatrix::from_fn(nx, n, |i, j| xi_dot[(i, j)] / scaling.derivatives[i]);
        let inv_n = 1.0 / n as f64;
        let gram = (&z * z.transpose()) * inv_n;
        let cross = (&d * z.transpose()) * inv_n;
        let energy = d.norm_squared() * inv_n;
        let ridge = if cfg.ridge && is_rank_deficient(&gram) {
            1e-8 * gram.trace() / gram.nrows() as f64
        } else {
            0.0
        };
        let m = gram.nrows();
        let gram_reg = &gram + DMatrix::identity(m, m) * ridge;
        Ok(Self {
            scaling,
            gram,
            gram_reg,
            cross,
            energy,
            ridge,
            n_samples: n,
        })
    }

    pub fn n_states(&self) -> usize {
        self.cross.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.cross.ncols() - self.n_states()
    }

    fn regularized_gram(&self) -> DMatrix<f64> {
        self.gram_reg.clone()
    }

    /// Unconstrained least-squares solution in scaled coordinates, row-major.
    pub fn least_squares(&self) -> Result<DVector<f64>> {
        let g = self.regularized_gram();
        let chol = g.cholesky().ok_or(Error::RankDeficient(f64::INFINITY))?;
        let theta = chol.solve(&self.cross.transpose()).transpose();
        Ok(DVector::from_row_slice(&flatten(&[&theta])))
    }

    fn theta(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.cross.nrows(), self.cross.ncols(), x.as_slice())
    }

    /// Physical `(A, B)` from scaled parameters.
    pub fn descale(&self, x: &DVector<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
        let (nx, nu) = (self.n_states(), self.n_inputs());
        let s = &self.scaling;
        let a = DMatrix::from_fn(nx, nx, |i, j| {
            x[i * (nx + nu) + j] * s.derivatives[i] / s.states[j]
        });
        let b = DMatrix::from_fn(nx, nu, |i, j| {
            x[i * (nx + nu) + nx + j] * s.derivatives[i] / s.inputs[j]
        });
        (a, b)
    }

    /// Scaled parameters of physical `(A, B)`.
    pub fn scale(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DVector<f64> {
        let (nx, nu) = (self.n_states(), self.n_inputs());
        let s = &self.scaling;
        DVector::from_fn(nx * (nx + nu), |k, _| {
            let (i, j) = (k / (nx + nu), k % (nx + nu));
            if j < nx {
                a[(i, j)] * s.states[j] / s.derivatives[i]
            } else {
                b[(i, j - nx)] * s.inputs[j - nx] / s.derivatives[i]
            }
        })
    }

    /// Mean squared scaled residual, including the ridge term when active.
    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        let th = self.theta(x);
        let quad = (&th * &self.gram).component_mul(&th).sum();
        let lin = th.component_mul(&self.cross).sum();
        (quad - 2.0 * lin + self.energy + self.ridge * th.norm_squared()).max(0.0)
    }

    fn penalized_value(&self, x: &DVector<f64>, weight: f64, margin: f64) -> f64 {
        let (a, _) = self.descale(x);
        let v = (spectral_abscissa(&a) + margin).max(0.0);
        self.objective(x) + weight * v * v
    }

    /// Objective and its gradient in one pass.
    fn objective_with_gradient(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let th = self.theta(x);
        let r = &th * &self.gram_reg;
        let f = (r.component_mul(&th).sum() - 2.0 * th.component_mul(&self.cross).sum() + self.energy)
            .max(0.0);
        let g = (r - &self.cross) * 2.0;
        (f, DVector::from_row_slice(&flatten(&[&g])))
    }

    fn penalized(&self, x: &DVector<f64>, weight: f64, margin: f64) -> (f64, DVector<f64>) {
        let (mut f, mut g) = self.objective_with_gradient(x);
        let (a, _) = self.descale(x);
        let (alpha, da) = spectral_abscissa_gradient_if(&a, |alpha| alpha + margin > 0.0);
        if let Some(da) = da {
            let v = alpha + margin;
            f += weight * v * v;
            let (nx, nu) = (self.n_states(), self.n_inputs());
            let s = &self.scaling;
            for i in 0..nx {
                for j in 0..nx {
                    g[i * (nx + nu) + j] +=
                        2.0 * weight * v * da[(i, j)] * s.derivatives[i] / s.states[j];
                }
            }
        }
        (f, g)
    }

    /// Inverse Hessian of the least-squares term, block diagonal over rows.
    fn inverse_hessian(&self) -> DMatrix<f64> {
        let m = self.gram.nrows();
        let block = (self.regularized_gram() * 2.0)
            .try_inverse()
            .unwrap_or_else(|| DMatrix::identity(m, m));
        let nx = self.n_states();
        let mut h = DMatrix::zeros(nx * m, nx * m);
        for r in 0..nx {
            h.view_mut((r * m, r * m), (m, m)).copy_from(&block);
        }
        h
    }
}

fn is_rank_deficient(gram: &DMatrix<f64>) -> bool {
    let eig = gram.clone().symmetric_eigen().eigenvalues;
    let max = eig.amax();
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    !(max > 0.0) || min <= 1e-12 * max
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct AbDiagnostics {
    /// Mean squared scaled residual of the returned model.
    pub objective: f64,
    /// Same measure for the unconstrained least-squares solution.
    pub ls_objective: f64,
    pub stability_margin: f64,
    /// Optimization wall time [s].
    pub solve_time: f64,
    pub used_ga: bool,
    pub ga_evaluations: usize,
    pub ga_best_fitness: Option<f64>,
    pub iterations: usize,
    /// Objective evaluations of the gradient phase.
    pub evaluations: usize,
    /// Penalty weight in force when the fit finished.
    pub penalty_weight: f64,
    /// Penalized objective at accepted iterates, one list per penalty weight.
    #[serde(skip)]
    pub history: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct AbFit {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub diagnostics: AbDiagnostics,
}

/// Stable `(A, B)` minimizing the scaled derivative residual.
pub fn fit_ab(
    u: &DMatrix<f64>,
    xi: &DMatrix<f64>,
    xi_dot: &DMatrix<f64>,
    start: Option<&ParamVector>,
    cfg: &FitConfig,
) -> Result<AbFit> {
    cfg.validate()?;
    let problem = AbProblem::new(u, xi, xi_dot, cfg)?;
    fit_ab_problem(&problem, start, cfg, 0)
}

/// [`fit_ab`] on precomputed statistics; `stream` selects the GA substream.
pub fn fit_ab_problem(
    problem: &AbProblem,
    start: Option<&ParamVector>,
    cfg: &FitConfig,
    stream: u64,
) -> Result<AbFit> {
    let clock = Instant::now();
    let ls = problem.least_squares()?;
    let ls_objective = problem.objective(&ls);
    let margin = cfg.eps_stab * cfg.margin_factor.max(1.0);
    let mut weight = cfg.penalty_weight;

    let mut diag = AbDiagnostics {
        ls_objective,
        ..Default::default()
    };
    let mut x = match start {
        Some(p) => {
            if p.n_states != problem.n_states() || p.n_inputs != problem.n_inputs() {
                return Err(Error::InvalidArgument("warm start has wrong dimensions".into()));
            }
            problem.scale(&p.a(), &p.b())
        }
        None => {
            let mut rng = rng::substream(cfg.seed, "ga", stream);
            let fitness = |theta: &[f64]| {
                problem.penalized_value(&DVector::from_row_slice(theta), weight, margin)
            };
            let result = ga::run(fitness, ls.as_slice(), &cfg.ga_options(), &mut rng);
            diag.used_ga = true;
            diag.ga_evaluations = result.evaluations;
            diag.ga_best_fitness = Some(result.best_fitness);
            DVector::from_vec(result.best)
        }
    };

    let h0 = problem.inverse_hessian();
    let mut h = h0.clone();
    let opts = bfgs::BfgsOptions {
        max_iter: cfg.max_iter,
        grad_tol: cfg.grad_tol,
    };
    let mut alpha = f64::INFINITY;
    for phase in 0..=cfg.penalty_escalations {
        if phase > 0 {
            weight *= cfg.penalty_growth;
        }
        let res = bfgs::minimize_from(
            |p| problem.penalized(p, weight, margin),
            x,
            h,
            h0.clone(),
            &opts,
        );
        x = res.x;
        h = res.h;
        diag.evaluations += res.evaluations;
        diag.iterations += res.iterations;
        diag.history.push(res.history);
        alpha = spectral_abscissa(&problem.descale(&x).0);
        if alpha <= -cfg.eps_stab {
            break;
        }
    }
    diag.solve_time = clock.elapsed().as_secs_f64();
    diag.penalty_weight = weight;
    diag.stability_margin = alpha;
    diag.objective = problem.objective(&x);
    let (a, b) = problem.descale(&x);
    if !(alpha <= -cfg.eps_stab) {
        return Err(Error::Infeasible {
            best_margin: alpha,
            best_candidate: Box::new(ParamVector::from_ab(&a, &b)),
            column: None,
        });
    }
    Ok(AbFit { a, b, diagnostics: diag })
}

#[derive(Debug, Clone)]
pub struct CdFit {
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    /// Mean squared output residual (unscaled).
    pub residual: f64,
    pub ridge_used: bool,
}

/// Least-squares `(C, D)` for `Y ≈ C Ξ + D U`.
pub fn fit_cd(u: &DMatrix<f64>, xi: &DMatrix<f64>, y: &DMatrix<f64>, ridge: bool) -> Result<CdFit> {
    let n = u.ncols();
    if xi.ncols() != n || y.ncols() != n || n == 0 {
        return Err(Error::InvalidArgument("regression matrices column mismatch".into()));
    }
    let (nx, nu) = (xi.nrows(), u.nrows());
    let reg = DMatrix::from_fn(nx + nu, n, |i, j| if i < nx { xi[(i, j)] } else { u[(i - nx, j)] });
    let scale = row_rms(&reg);
    let reg_s = DMatrix::from_fn(nx + nu, n, |i, j| reg[(i, j)] / scale[i]);
    let mut gram = &reg_s * reg_s.transpose();
    let rhs = y * reg_s.transpose();
    let deficient = is_rank_deficient(&gram);
    if deficient {
        if !ridge {
            let eig = gram.clone().symmetric_eigen().eigenvalues;
            let min = eig.iter().copied().fold(f64::INFINITY, f64::min).max(0.0);
            return Err(Error::RankDeficient(eig.amax() / min));
        }
        let lambda = 1e-8 * gram.trace() / gram.nrows() as f64;
        gram += DMatrix::identity(nx + nu, nx + nu) * lambda;
    }
    let chol = gram.cholesky().ok_or(Error::RankDeficient(f64::INFINITY))?;
    let theta_s = chol.solve(&rhs.transpose()).transpose();
    let theta = DMatrix::from_fn(y.nrows(), nx + nu, |i, j| theta_s[(i, j)] / scale[j]);
    let residual = (y - &theta * &reg).norm_squared() / (n * y.nrows()) as f64;
    Ok(CdFit {
        c: theta.columns(0, nx).into_owned(),
        d: theta.columns(nx, nu).into_owned(),
        residual,
        ridge_used: deficient,
    })
}

pub fn stability_margin(a: &DMatrix<f64>) -> f64 {
    spectral_abscissa(a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labels {
    pub states: Vec<String>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl Default for Labels {
    fn default() -> Self {
        let names = |specs: &[crate::timeseries::ChannelSpec]| {
            specs.iter().map(|s| s.name.to_string()).collect()
        };
        Self {
            states: names(&STATE_CHANNELS),
            inputs: names(&INPUT_CHANNELS),
            outputs: names(&OUTPUT_CHANNELS),
        }
    }
}

/// Training-data means of a column, used to initialize simulations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub states: Vec<f64>,
    pub inputs: Vec<f64>,
    pub outputs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct AnchorDiagnostics {
    pub ab: AbDiagnostics,
    pub cd_residual: f64,
    pub cd_ridge: bool,
    pub n_samples: usize,
}

/// One anchor `Σ_i` of the LPV model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtiModel {
    pub w_anchor: f64,
    #[serde(rename = "A", with = "linalg::rows")]
    pub a: DMatrix<f64>,
    #[serde(rename = "B", with = "linalg::rows")]
    pub b: DMatrix<f64>,
    #[serde(rename = "C", with = "linalg::rows")]
    pub c: DMatrix<f64>,
    #[serde(rename = "D", with = "linalg::rows")]
    pub d: DMatrix<f64>,
    pub labels: Labels,
    pub operating_point: Option<OperatingPoint>,
    pub scaling: Option<Scaling>,
    pub diagnostics: AnchorDiagnostics,
}

impl LtiModel {
    pub fn new(
        w_anchor: f64,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
    ) -> Result<Self> {
        let m = Self {
            w_anchor,
            a,
            b,
            c,
            d,
            labels: Labels::default(),
            operating_point: None,
            scaling: None,
            diagnostics: AnchorDiagnostics::default(),
        };
        m.check_dimensions()?;
        Ok(m)
    }

    pub fn check_dimensions(&self) -> Result<()> {
        let nx = self.a.nrows();
        let ok = self.a.is_square()
            && self.b.nrows() == nx
            && self.c.ncols() == nx
            && self.d.nrows() == self.c.nrows()
            && self.d.ncols() == self.b.ncols();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "inconsistent anchor dimensions at w = {}",
                self.w_anchor
            )))
        }
    }

    pub fn stability_margin(&self) -> f64 {
        spectral_abscissa(&self.a)
    }

    pub fn params(&self) -> ParamVector {
        ParamVector::from_matrices(&self.a, &self.b, &self.c, &self.d)
    }
}

/// Result of fitting the whole wind-speed grid.
#[derive(Debug, Clone)]
pub struct LpvFit {
    pub model: LpvModel,
    /// Index of the column fitted from scratch.
    pub center: usize,
}

fn mean_rows(m: &DMatrix<f64>) -> Vec<f64> {
    m.row_iter().map(|r| r.mean()).collect()
}

/// Center-out fit of every wind-speed column with warm-start chaining.
pub fn fit_lpv(dataset: &Dataset, cfg: &FitConfig) -> Result<LpvFit> {
    cfg.validate()?;
    let n_cols = dataset.n_columns();
    if n_cols == 0 {
        return Err(Error::InvalidArgument("dataset has no columns".into()));
    }
    struct Column {
        problem: AbProblem,
        cd: CdFit,
        op: OperatingPoint,
    }
    let prepare = |col: usize| -> Result<Column> {
        let data = assemble_regression_data(dataset, col, &cfg.assembly)?;
        let problem = AbProblem::new(&data.u, &data.xi, &data.xi_dot, cfg)?;
        let cd = fit_cd(&data.u, &data.xi, &data.y, cfg.ridge)?;
        let op = OperatingPoint {
            states: mean_rows(&data.xi),
            inputs: mean_rows(&data.u),
            outputs: mean_rows(&data.y),
        };
        Ok(Column { problem, cd, op })
    };
    let columns = (0..n_cols).map(prepare).collect::<Result<Vec<_>>>()?;

    let center = n_cols / 2;
    let with_column = |col: usize, e: Error| match e {
        Error::Infeasible {
            best_margin,
            best_candidate,
            ..
        } => Error::Infeasible {
            best_margin,
            best_candidate,
            column: Some(col),
        },
        other => other,
    };
    let fit_one = |col: usize, start: Option<&ParamVector>, weight: f64| {
        let col_cfg = FitConfig {
            penalty_weight: weight,
            ..cfg.clone()
        };
        fit_ab_problem(&columns[col].problem, start, &col_cfg, col as u64)
            .map_err(|e| with_column(col, e))
    };
    let center_fit = fit_one(center, None, cfg.penalty_weight)?;
    // each chained column inherits its neighbor's optimum and final penalty weight
    let chain = |order: Vec<usize>| -> Result<Vec<(usize, AbFit)>> {
        let mut prev = ParamVector::from_ab(&center_fit.a, &center_fit.b);
        let mut weight = center_fit.diagnostics.penalty_weight;
        let mut out = Vec::new();
        for col in order {
            let fit = fit_one(col, Some(&prev), weight)?;
            prev = ParamVector::from_ab(&fit.a, &fit.b);
            weight = fit.diagnostics.penalty_weight;
            out.push((col, fit));
        }
        Ok(out)
    };
    let (low, high) = rayon::join(
        || chain((0..center).rev().collect()),
        || chain((center + 1..n_cols).collect()),
    );
    let mut fits: Vec<Option<AbFit>> = (0..n_cols).map(|_| None).collect();
    fits[center] = Some(center_fit);
    for (col, fit) in low?.into_iter().chain(high?) {
        fits[col] = Some(fit);
    }

    let w_grid = dataset.w_grid().to_vec();
    let anchors: Vec<LtiModel> = columns
        .into_iter()
        .zip(fits)
        .zip(&w_grid)
        .map(|((col, fit), &w)| {
            let fit = fit.expect("every column fitted");
            LtiModel {
                w_anchor: w,
                a: fit.a,
                b: fit.b,
                c: col.cd.c,
                d: col.cd.d,
                labels: Labels::default(),
                operating_point: Some(col.op),
                scaling: Some(col.problem.scaling.clone()),
                diagnostics: AnchorDiagnostics {
                    ab: fit.diagnostics,
                    cd_residual: col.cd.residual,
                    cd_ridge: col.cd.ridge_used,
                    n_samples: col.problem.n_samples,
                },
            }
        })
        .collect();
    let mut model = LpvModel::new(anchors, Interpolation::Linear, 30.0)?;
    let unstable = model.unstable_midpoints(cfg.eps_stab / 2.0);
    for w in &unstable {
        log::warn!("interpolated model at w = {w:.3} m/s has stability margin above −ε/2");
    }
    model.diagnostics = Some(LpvDiagnostics {
        center,
        column_solve_times: model
            .anchors
            .iter()
            .map(|a| a.diagnostics.ab.solve_time)
            .collect(),
        unstable_midpoints: unstable,
    });
    Ok(LpvFit { model, center })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn param_vector_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, b, c, d) = (
            random(6, 6, &mut rng),
            random(6, 4, &mut rng),
            random(6, 6, &mut rng),
            random(6, 4, &mut rng),
        );
        let p = ParamVector::from_matrices(&a, &b, &c, &d);
        assert_eq!(p.theta_ab.len(), 60);
        assert_eq!(p.theta_cd.len(), 60);
        assert_eq!((p.a(), p.b(), p.c(), p.d()), (a.clone(), b, c, d));
        assert_eq!(p.theta_ab[1], a[(0, 1)]);
    }

    #[test]
    fn scaling_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = random(2, 50, &mut rng) * 100.0;
        let xi = random(3, 50, &mut rng) * 0.01;
        let xd = random(3, 50, &mut rng);
        let p = AbProblem::new(&u, &xi, &xd, &FitConfig::default()).unwrap();
        let (a, b) = (random(3, 3, &mut rng), random(3, 2, &mut rng));
        let (a2, b2) = p.descale(&p.scale(&a, &b));
        assert!((a - a2).amax() < 1e-12 && (b - b2).amax() < 1e-12);
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random(2, 80, &mut rng);
        let xi = random(3, 80, &mut rng);
        let xd = random(3, 80, &mut rng);
        let p = AbProblem::new(&u, &xi, &xd, &FitConfig::default()).unwrap();
        let x = DVector::from_fn(15, |_, _| rng.random_range(-1.0..1.0));
        let (f, g) = p.penalized(&x, 10.0, 1e-4);
        assert!((f - p.penalized_value(&x, 10.0, 1e-4)).abs() < 1e-12);
        for k in 0..15 {
            let h = 1e-6;
            let mut xp = x.clone();
            xp[k] += h;
            let mut xm = x.clone();
            xm[k] -= h;
            let fd = (p.penalized_value(&xp, 10.0, 1e-4) - p.penalized_value(&xm, 10.0, 1e-4))
                / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-4 * (1.0 + g[k].abs()), "{k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn cd_selector_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = random(2, 40, &mut rng);
        let xi = random(4, 40, &mut rng);
        let y = xi.rows(0, 2).into_owned();
        let fit = fit_cd(&u, &xi, &y, false).unwrap();
        let mut sel = DMatrix::zeros(2, 4);
        sel[(0, 0)] = 1.0;
        sel[(1, 1)] = 1.0;
        assert!((fit.c - sel).amax() < 1e-9);
        assert!(fit.d.amax() < 1e-9);
    }

    #[test]
    fn cd_ridge_fallback() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut u = random(2, 40, &mut rng);
        u.row_mut(1).fill(0.0);
        let xi = random(3, 40, &mut rng);
        let y = random(2, 40, &mut rng);
        assert!(matches!(fit_cd(&u, &xi, &y, false), Err(Error::RankDeficient(_))));
        let fit = fit_cd(&u, &xi, &y, true).unwrap();
        assert!(fit.ridge_used);
        assert!(fit.d.column(1).amax() < 1e-6);
    }
}
